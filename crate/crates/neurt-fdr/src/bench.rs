//! Methods × scenarios × levels × trials on synthetic data with known truth.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use neurt_fdr_core::pipeline::{fit_method, FitCache, Method, PipelineConfig, Problem};
use neurt_fdr_core::prior::TrainedPrior;
use neurt_fdr_core::simgen::{generate, true_fdp_power, AltKind, PriorKind, ScenarioConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::svg::{Panel, Point, Series};

/// Environment variable overriding the worker-thread count.
pub const THREADS_ENV: &str = "NEURT_FDR_THREADS";

pub const DEFAULT_ALPHAS: [f64; 4] = [0.05, 0.10, 0.15, 0.20];

/// 95% normal quantile used for the interval half-width.
const CI_Z: f64 = 1.96;

pub const CSV_HEADER: [&str; 8] = ["method", "scenario", "alt", "alpha", "metric", "mean", "ci_lo", "ci_hi"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub prior: PriorKind,
    pub alt: AltKind,
}

impl Scenario {
    pub fn all() -> Vec<Scenario> {
        PriorKind::ALL
            .iter()
            .flat_map(|&prior| AltKind::ALL.iter().map(move |&alt| Scenario { prior, alt }))
            .collect()
    }

    pub fn stem(&self) -> String {
        format!("{}_{}", self.prior, self.alt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Fdp,
    Power,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Fdp, Metric::Power];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Fdp => "fdp",
            Metric::Power => "power",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub scenarios: Vec<Scenario>,
    pub alphas: Vec<f64>,
    pub trials: usize,
    /// Trial `t` uses data seed `seed ^ t`.
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub q: usize,
    pub ps_scale: f64,
    pub nonlinear_fraction: f64,
    pub pipeline: PipelineConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let sc = ScenarioConfig::default();
        BenchConfig {
            methods: Method::ALL.to_vec(),
            scenarios: Scenario::all(),
            alphas: DEFAULT_ALPHAS.to_vec(),
            trials: 10,
            seed: 0,
            n: sc.n,
            k: sc.k,
            q: sc.q,
            ps_scale: sc.ps_scale,
            nonlinear_fraction: sc.nonlinear_fraction,
            pipeline: PipelineConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn scenario_config(&self, s: Scenario, trial: usize) -> ScenarioConfig {
        ScenarioConfig {
            prior: s.prior,
            alt: s.alt,
            n: self.n,
            k: self.k,
            q: self.q,
            seed: self.seed ^ trial as u64,
            ps_scale: self.ps_scale,
            nonlinear_fraction: self.nonlinear_fraction,
        }
    }

    /// Everything checkable without running a fit.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.methods.is_empty() {
            return bad("`methods` is empty".into());
        }
        if self.scenarios.is_empty() {
            return bad("`scenarios` is empty".into());
        }
        if self.alphas.is_empty() {
            return bad("`alphas` is empty".into());
        }
        if self.trials == 0 {
            return bad("`trials` must be positive".into());
        }
        for (i, &a) in self.alphas.iter().enumerate() {
            if !(a > 0.0 && a < 1.0) {
                return bad(format!("`alphas[{i}]` = {a} is outside (0, 1)"));
            }
        }
        let mut seen = Vec::new();
        for m in &self.methods {
            if seen.contains(m) {
                return bad(format!("method `{m}` listed twice"));
            }
            seen.push(*m);
        }
        for s in &self.scenarios {
            self.scenario_config(*s, 0)
                .validate()
                .map_err(|e| CliError::Config(format!("scenario {}: {e}", s.stem())))?;
        }
        self.pipeline
            .train
            .validate()
            .map_err(|e| CliError::Config(format!("`pipeline.train`: {e}")))?;
        self.pipeline
            .recursion
            .validate()
            .map_err(|e| CliError::Config(format!("`pipeline.recursion`: {e}")))?;
        if !(self.pipeline.storey_tuning > 0.0 && self.pipeline.storey_tuning < 1.0) {
            return bad("`pipeline.storey_tuning` must lie in (0, 1)".into());
        }
        Ok(())
    }
}

/// One method at one level on one trial's dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub method: Method,
    pub scenario: PriorKind,
    pub alt: AltKind,
    pub alpha: f64,
    pub trial: usize,
    pub seed: u64,
    pub fdp: f64,
    pub power: f64,
    pub n_discoveries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub method: Method,
    pub scenario: PriorKind,
    pub alt: AltKind,
    pub trial: usize,
    pub error: String,
}

/// Prior-network training outcome for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub scenario: PriorKind,
    pub alt: AltKind,
    pub trial: usize,
    pub stacked: bool,
    pub best_epoch: usize,
    pub initial_loss: f64,
    pub selected_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub scenario: PriorKind,
    pub alt: AltKind,
    pub alpha: f64,
    pub metric: Metric,
    pub trials: usize,
    pub mean: f64,
    /// `1.96 · sd / √trials`; absent for a single trial.
    pub ci_half_width: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

/// A (method, scenario) cell with fewer successful trials than configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedCell {
    pub method: Method,
    pub scenario: PriorKind,
    pub alt: AltKind,
    pub failed_trials: usize,
    pub first_error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub version: String,
    pub config: BenchConfig,
    pub rows: Vec<TrialRow>,
    pub aggregates: Vec<Aggregate>,
    pub failures: Vec<Failure>,
    pub failed_cells: Vec<FailedCell>,
    pub training: Vec<TrainingRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub method: Method,
    pub scenario: PriorKind,
    pub alt: AltKind,
    pub trial: usize,
    pub seconds: f64,
}

/// Wall-clock measurements, kept apart from the reproducible report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub threads: usize,
    pub fits: Vec<Timing>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    pub report: BenchmarkReport,
    pub timings: Timings,
}

#[derive(Default)]
struct TrialResult {
    rows: Vec<TrialRow>,
    failures: Vec<Failure>,
    training: Vec<TrainingRow>,
    timings: Vec<Timing>,
}

fn training_row(s: Scenario, trial: usize, t: &TrainedPrior) -> TrainingRow {
    TrainingRow {
        scenario: s.prior,
        alt: s.alt,
        trial,
        stacked: t.stacked,
        best_epoch: t.best_epoch,
        initial_loss: t.history[0].train_loss,
        selected_loss: t.history[t.best_epoch].train_loss,
    }
}

fn run_trial(config: &BenchConfig, s: Scenario, trial: usize) -> TrialResult {
    let mut out = TrialResult::default();
    let sc = config.scenario_config(s, trial);
    let fail = |out: &mut TrialResult, method: Method, error: String| {
        out.failures.push(Failure {
            method,
            scenario: s.prior,
            alt: s.alt,
            trial,
            error,
        });
    };
    let data = match generate(&sc) {
        Ok(d) => d,
        Err(e) => {
            for &m in &config.methods {
                fail(&mut out, m, format!("data generation: {e}"));
            }
            return out;
        }
    };
    let problem = Problem {
        z: &data.z,
        p: None,
        x: Some(&data.x),
        x_aux: Some(&data.x_aux),
    };
    let pipeline = config.pipeline.with_seed(sc.seed);
    let mut cache = FitCache::default();
    for &method in &config.methods {
        let start = Instant::now();
        let fitted = fit_method(method, &problem, &pipeline, &mut cache);
        out.timings.push(Timing {
            method,
            scenario: s.prior,
            alt: s.alt,
            trial,
            seconds: start.elapsed().as_secs_f64(),
        });
        let fitted = match fitted {
            Ok(f) => f,
            Err(e) => {
                fail(&mut out, method, e.to_string());
                continue;
            }
        };
        let mut rows = Vec::with_capacity(config.alphas.len());
        let scored = config.alphas.iter().try_for_each(|&alpha| {
            let rej = fitted.select(alpha)?;
            let (fdp, power) = true_fdp_power(&rej, &data.h)?;
            rows.push(TrialRow {
                method,
                scenario: s.prior,
                alt: s.alt,
                alpha,
                trial,
                seed: sc.seed,
                fdp,
                power,
                n_discoveries: rej.len(),
            });
            Ok::<_, neurt_fdr_core::Error>(())
        });
        match scored {
            Ok(()) => out.rows.extend(rows),
            Err(e) => fail(&mut out, method, e.to_string()),
        }
    }
    for t in [cache.x_prior(), cache.stacked_prior()].into_iter().flatten() {
        out.training.push(training_row(s, trial, t));
    }
    out
}

/// Mean and half-width; the sample standard deviation uses `n − 1`.
pub fn mean_ci(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, Some(CI_Z * var.sqrt() / n.sqrt()))
}

/// Per-cell summaries from trial rows. Cells missing any trial are left out
/// and reported as failed.
pub fn aggregate(config: &BenchConfig, rows: &[TrialRow], failures: &[Failure]) -> (Vec<Aggregate>, Vec<FailedCell>) {
    let mut aggregates = Vec::new();
    let mut failed = Vec::new();
    for s in &config.scenarios {
        for &method in &config.methods {
            let errs: Vec<&Failure> = failures
                .iter()
                .filter(|f| f.method == method && f.scenario == s.prior && f.alt == s.alt)
                .collect();
            if !errs.is_empty() {
                let mut trials: Vec<usize> = errs.iter().map(|f| f.trial).collect();
                trials.dedup();
                failed.push(FailedCell {
                    method,
                    scenario: s.prior,
                    alt: s.alt,
                    failed_trials: trials.len(),
                    first_error: errs[0].error.clone(),
                });
                continue;
            }
            for &alpha in &config.alphas {
                let cell: Vec<&TrialRow> = rows
                    .iter()
                    .filter(|r| r.method == method && r.scenario == s.prior && r.alt == s.alt && r.alpha == alpha)
                    .collect();
                for metric in Metric::ALL {
                    let values: Vec<f64> = cell
                        .iter()
                        .map(|r| match metric {
                            Metric::Fdp => r.fdp,
                            Metric::Power => r.power,
                        })
                        .collect();
                    let (mean, half) = mean_ci(&values);
                    aggregates.push(Aggregate {
                        method,
                        scenario: s.prior,
                        alt: s.alt,
                        alpha,
                        metric,
                        trials: values.len(),
                        mean,
                        ci_half_width: half,
                        ci_lo: half.map(|h| mean - h),
                        ci_hi: half.map(|h| mean + h),
                    });
                }
            }
        }
    }
    (aggregates, failed)
}

/// Thread count from the environment, if set to a positive integer.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(CliError::Config(format!("{THREADS_ENV}=`{v}` is not a positive integer"))),
            Ok(n) => Ok(Some(n)),
        },
    }
}

/// Runs every (scenario, trial) job, in parallel over `threads` workers
/// (rayon's default when `None`). Results are assembled in job order.
pub fn run_benchmark(config: &BenchConfig, threads: Option<usize>) -> Result<BenchmarkOutput> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker threads: {e}")))?;
    let jobs: Vec<(Scenario, usize)> = config
        .scenarios
        .iter()
        .flat_map(|&s| (0..config.trials).map(move |t| (s, t)))
        .collect();
    let start = Instant::now();
    let results: Vec<TrialResult> = pool.install(|| jobs.par_iter().map(|&(s, t)| run_trial(config, s, t)).collect());
    let total_seconds = start.elapsed().as_secs_f64();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut training = Vec::new();
    let mut fits = Vec::new();
    for r in results {
        rows.extend(r.rows);
        failures.extend(r.failures);
        training.extend(r.training);
        fits.extend(r.timings);
    }
    let (aggregates, failed_cells) = aggregate(config, &rows, &failures);
    Ok(BenchmarkOutput {
        report: BenchmarkReport {
            version: crate::VERSION.to_string(),
            config: config.clone(),
            rows,
            aggregates,
            failures,
            failed_cells,
            training,
        },
        timings: Timings {
            total_seconds,
            threads: pool.current_num_threads(),
            fits,
        },
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn metric_label(m: Metric) -> &'static str {
    match m {
        Metric::Fdp => "FDP",
        Metric::Power => "power",
    }
}

/// One CSV per scenario, one SVG per (scenario, metric) and, when any cell
/// failed, `warnings.log`. Returns the paths written.
pub fn emit_plot_data(report: &BenchmarkReport, dir: &Path) -> Result<Vec<PathBuf>> {
    if report.aggregates.is_empty() && report.failed_cells.is_empty() {
        return Err(CliError::Input("benchmark report has no cells".into()));
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::new();
    for s in &report.config.scenarios {
        let cells: Vec<&Aggregate> = report
            .aggregates
            .iter()
            .filter(|a| a.scenario == s.prior && a.alt == s.alt)
            .collect();
        let path = dir.join(format!("{}.csv", s.stem()));
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let bad = |e: csv::Error| CliError::Input(format!("cannot format plot data: {e}"));
        wtr.write_record(CSV_HEADER).map_err(bad)?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for a in &cells {
            wtr.write_record([
                a.method.name().to_string(),
                a.scenario.name().to_string(),
                a.alt.name().to_string(),
                a.alpha.to_string(),
                a.metric.name().to_string(),
                a.mean.to_string(),
                opt(a.ci_lo),
                opt(a.ci_hi),
            ])
            .map_err(bad)?;
        }
        let bytes = wtr.into_inner().map_err(|e| CliError::Input(format!("cannot format plot data: {e}")))?;
        write_file(&path, &bytes)?;
        written.push(path);

        for metric in Metric::ALL {
            let mut by_method: BTreeMap<usize, Series> = BTreeMap::new();
            for a in cells.iter().filter(|a| a.metric == metric) {
                let order = report.config.methods.iter().position(|m| *m == a.method).unwrap_or(usize::MAX);
                by_method
                    .entry(order)
                    .or_insert_with(|| Series {
                        label: a.method.name().to_string(),
                        points: Vec::new(),
                    })
                    .points
                    .push(Point {
                        x: a.alpha,
                        y: a.mean,
                        ci: a.ci_lo.zip(a.ci_hi),
                    });
            }
            let panel = Panel {
                title: format!("{} / {}: {}", s.prior, s.alt, metric_label(metric)),
                x_label: "nominal level".into(),
                y_label: metric_label(metric).into(),
                series: by_method.into_values().collect(),
                diagonal: metric == Metric::Fdp,
            };
            let path = dir.join(format!("{}_{}.svg", s.stem(), metric.name()));
            write_file(&path, panel.render().as_bytes())?;
            written.push(path);
        }
    }
    if !report.failed_cells.is_empty() {
        let mut log = String::new();
        for c in &report.failed_cells {
            log.push_str(&format!(
                "omitted {} on {}/{}: {} of {} trials failed; first error: {}\n",
                c.method, c.scenario, c.alt, c.failed_trials, report.config.trials, c.first_error
            ));
        }
        let path = dir.join("warnings.log");
        write_file(&path, log.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
