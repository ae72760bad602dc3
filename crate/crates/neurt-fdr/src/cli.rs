//! Argument parsing and the four subcommands.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use neurt_fdr_core::pipeline::{fit_method, FitCache, Method, PipelineConfig};
use neurt_fdr_core::recursion::AlternativeDensity;
use neurt_fdr_core::simgen::{generate, AltKind, PriorKind, ScenarioConfig};

use crate::bench::{emit_plot_data, run_benchmark, threads_from_env, BenchConfig};
use crate::data::{read_data_path, write_dataset_path};
use crate::error::{CliError, Result};
use crate::report::{read_json, write_csv_path, write_json, Checkpoint, FitReport};

#[derive(Debug, Parser)]
#[command(name = "neurt-fdr", version, about = "Covariate-adaptive FDR control with neural Beta priors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with ground truth.
    Simulate(SimulateArgs),
    /// Fit one method to a data file and report discoveries.
    Fit(FitArgs),
    /// Re-threshold a saved fit report at a new level.
    Select(SelectArgs),
    /// Run the synthetic benchmark matrix.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// constant, linear or nonlinear
    #[arg(long, default_value = "constant")]
    pub prior: PriorKind,
    /// ws or ps
    #[arg(long, default_value = "ws")]
    pub alt: AltKind,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Test-level covariates.
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    /// Auxiliary covariates.
    #[arg(long, default_value_t = 5)]
    pub q: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of the poorly separated alternative.
    #[arg(long)]
    pub ps_scale: Option<f64>,
    /// Target mean prior probability of the nonlinear scenario.
    #[arg(long)]
    pub nonlinear_fraction: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainingFlags {
    /// Pipeline configuration JSON; the flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Initial `a + b` of the prior network output.
    #[arg(long)]
    pub concentration: Option<f64>,
    /// Nodes of the λ quadrature grid.
    #[arg(long)]
    pub grid_nodes: Option<usize>,
    /// Passes of the predictive recursion.
    #[arg(long)]
    pub pr_sweeps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// bh, sbh, twogroups, nn-only, neurt-b or neurt-a
    #[arg(long)]
    pub method: Method,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Convert a `p` column with the one-sided rule.
    #[arg(long)]
    pub one_sided: bool,
    #[command(flatten)]
    pub training: TrainingFlags,
    /// Reuse a fitted density (`{tau_nodes, pi_tau, pi0, mu, sigma}`).
    #[arg(long)]
    pub density: Option<PathBuf>,
    /// JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-test CSV; defaults to the report path with extension `.discoveries.csv`.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write the trained prior network.
    #[arg(long)]
    pub save_model: Option<PathBuf>,
    /// Write the fitted density.
    #[arg(long)]
    pub save_density: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Report written by `fit`.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub alpha: f64,
    /// Data file whose `h` column is used to score the new selection.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Benchmark JSON; omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Worker threads; overrides the environment variable.
    #[arg(long)]
    pub threads: Option<usize>,
}

fn pipeline_config(flags: &TrainingFlags) -> Result<PipelineConfig> {
    let mut c: PipelineConfig = match &flags.config {
        Some(path) => read_json(path).map_err(|e| CliError::Config(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    let t = &mut c.train;
    if let Some(v) = flags.epochs {
        t.max_epochs = v;
    }
    if let Some(v) = flags.lr {
        t.learning_rate = v;
    }
    if let Some(v) = flags.momentum {
        t.momentum = v;
    }
    if let Some(v) = flags.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = flags.l2 {
        t.l2_strength = v;
    }
    if let Some(v) = flags.patience {
        t.patience = v;
    }
    if let Some(v) = flags.holdout {
        t.holdout_fraction = v;
    }
    if let Some(v) = &flags.hidden {
        t.hidden_layers = v.clone();
    }
    if let Some(v) = flags.concentration {
        t.initial_concentration = v;
    }
    if let Some(v) = flags.grid_nodes {
        t.lambda_grid_nodes = v;
    }
    if let Some(v) = flags.pr_sweeps {
        c.recursion.n_sweeps = v;
    }
    c.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
    c.recursion.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(c)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--alpha {alpha} is outside (0, 1)")))
    }
}

fn simulate(args: &SimulateArgs) -> Result<String> {
    let mut sc = ScenarioConfig {
        n: args.n,
        k: args.k,
        q: args.q,
        seed: args.seed,
        ..ScenarioConfig::new(args.prior, args.alt)
    };
    if let Some(v) = args.ps_scale {
        sc.ps_scale = v;
    }
    if let Some(v) = args.nonlinear_fraction {
        sc.nonlinear_fraction = v;
    }
    sc.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let data = generate(&sc)?;
    write_dataset_path(&args.out, &data)?;
    Ok(format!(
        "wrote {} tests ({} alternatives) to {}",
        data.len(),
        data.n_alternatives(),
        args.out.display()
    ))
}

fn default_csv(out: &Path) -> PathBuf {
    out.with_extension("discoveries.csv")
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => a == b,
    }
}

/// Refuses to write any output over the input data file.
fn guard_outputs(data: &Path, outputs: &[&Path]) -> Result<()> {
    for out in outputs {
        if same_file(data, out) {
            return Err(CliError::Usage(format!("output {} would overwrite the data file", out.display())));
        }
    }
    Ok(())
}

fn fit(args: &FitArgs) -> Result<String> {
    check_alpha(args.alpha)?;
    let config = pipeline_config(&args.training)?.with_seed(args.seed);
    let config = PipelineConfig {
        two_sided: !args.one_sided,
        ..config
    };
    let csv = args.csv.clone().unwrap_or_else(|| default_csv(&args.out));
    let mut outputs = vec![args.out.as_path(), csv.as_path()];
    outputs.extend(args.save_model.as_deref());
    outputs.extend(args.save_density.as_deref());
    guard_outputs(&args.data, &outputs)?;
    let data = read_data_path(&args.data, config.two_sided)?;
    data.require(args.method)?;
    let mut cache = match &args.density {
        Some(path) => {
            let density: AlternativeDensity = read_json(path)?;
            FitCache::with_density(density, &data.z)?
        }
        None => FitCache::default(),
    };
    let fitted = fit_method(args.method, &data.problem(), &config, &mut cache)?;
    let report = FitReport::build(fitted, args.alpha, &cache, &config, data.h.as_deref())?;
    write_json(&args.out, &report)?;
    write_csv_path(&csv, &report)?;
    if let Some(path) = &args.save_model {
        let prior = match args.method {
            Method::NnOnly | Method::NeurtA => cache.x_prior(),
            Method::NeurtB => cache.stacked_prior(),
            _ => None,
        }
        .ok_or_else(|| CliError::Usage(format!("--save-model: method {} trains no network", args.method)))?;
        write_json(path, &Checkpoint::new(prior, &config.train))?;
    }
    if let Some(path) = &args.save_density {
        let density = cache
            .density()
            .ok_or_else(|| CliError::Usage(format!("--save-density: method {} fits no density", args.method)))?;
        write_json(path, density)?;
    }
    Ok(report.summary())
}

fn select(args: &SelectArgs) -> Result<String> {
    check_alpha(args.alpha)?;
    let csv = args.csv.clone().or_else(|| args.out.as_deref().map(default_csv));
    let outputs: Vec<&Path> = args.out.iter().chain(csv.iter()).map(PathBuf::as_path).collect();
    guard_outputs(&args.report, &outputs)?;
    if let Some(data) = &args.data {
        guard_outputs(data, &outputs)?;
    }
    let saved: FitReport = read_json(&args.report)?;
    let h = match &args.data {
        Some(path) => {
            let d = read_data_path(path, saved.config.two_sided)?;
            if d.len() != saved.n_tests {
                return Err(CliError::Input(format!(
                    "{} has {} rows but the report covers {} tests",
                    path.display(),
                    d.len(),
                    saved.n_tests
                )));
            }
            d.h
        }
        None => None,
    };
    let report = saved.reselect(args.alpha, h.as_deref())?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    if let Some(csv) = &csv {
        write_csv_path(csv, &report)?;
    }
    Ok(report.summary())
}

fn benchmark(args: &BenchmarkArgs) -> Result<String> {
    let mut config: BenchConfig = match &args.config {
        Some(path) => read_json(path).map_err(|e| CliError::Config(e.to_string()))?,
        None => BenchConfig::default(),
    };
    if let Some(v) = args.trials {
        config.trials = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.n {
        config.n = v;
    }
    config.validate()?;
    let threads = match args.threads {
        Some(0) => return Err(CliError::Usage("--threads must be positive".into())),
        Some(t) => Some(t),
        None => threads_from_env()?,
    };
    let out = run_benchmark(&config, threads)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    write_json(&args.out_dir.join("report.json"), &out.report)?;
    write_json(&args.out_dir.join("timings.json"), &out.timings)?;
    let files = emit_plot_data(&out.report, &args.out_dir)?;
    Ok(format!(
        "{} trial rows, {} failed cells, {} plot files in {} ({:.1} s)",
        out.report.rows.len(),
        out.report.failed_cells.len(),
        files.len(),
        args.out_dir.display(),
        out.timings.total_seconds
    ))
}

pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Select(a) => select(a),
        Command::Benchmark(a) => benchmark(a),
    }
}

/// Message lines of a clap error before its usage block, joined.
fn clap_message(e: &clap::Error) -> (String, String) {
    let text = e.render().to_string();
    let mut head = Vec::new();
    let mut tail = Vec::new();
    for line in text.lines() {
        if line.starts_with("Usage:") || line.starts_with("For more information") || !tail.is_empty() {
            tail.push(line);
        } else if !line.trim().is_empty() {
            head.push(line.trim().trim_start_matches("error:").trim());
        }
    }
    (head.join(" "), tail.join("\n"))
}

/// Parses, runs and reports; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let (msg, usage) = clap_message(&e);
            let err = CliError::Usage(msg);
            eprintln!("{}", err.line());
            if !usage.is_empty() {
                eprintln!("{usage}");
            }
            return err.category().exit_code();
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.line());
            e.category().exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fit_flags() {
        let cli = Cli::try_parse_from([
            "neurt-fdr", "fit", "--data", "d.csv", "--method", "neurt-a", "--alpha", "0.05", "--hidden", "16,8",
            "--out", "r.json",
        ])
        .unwrap();
        let Command::Fit(f) = cli.command else { panic!() };
        assert_eq!(f.method, Method::NeurtA);
        assert_eq!(f.training.hidden, Some(vec![16, 8]));
        let c = pipeline_config(&f.training).unwrap();
        assert_eq!(c.train.hidden_layers, vec![16, 8]);
    }

    #[test]
    fn usage_errors_are_one_line() {
        let e = Cli::try_parse_from(["neurt-fdr", "simulate"]).unwrap_err();
        let (msg, usage) = clap_message(&e);
        assert!(msg.contains("--out"));
        assert!(!msg.contains('\n'));
        assert!(usage.starts_with("Usage:"));
        assert_eq!(run(["neurt-fdr", "fit", "--method", "nope"]), 2);
    }

    #[test]
    fn bad_training_flags_are_config_errors() {
        let cli = Cli::try_parse_from(["neurt-fdr", "fit", "--data", "d", "--method", "bh", "--lr=-1", "--out", "o"])
            .unwrap();
        let Command::Fit(f) = cli.command else { panic!() };
        let e = pipeline_config(&f.training).unwrap_err();
        assert_eq!(e.category(), crate::Category::Config);
    }
}
