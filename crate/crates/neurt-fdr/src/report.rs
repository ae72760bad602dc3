//! Discovery reports written by `fit` and re-thresholded by `select`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use neurt_fdr_core::pipeline::{FitCache, Fitted, Method, PipelineConfig};
use neurt_fdr_core::prior::{EpochRecord, MlpModel, TrainConfig, TrainedPrior};
use neurt_fdr_core::recursion::AlternativeDensity;
use neurt_fdr_core::simgen::true_fdp_power;
use neurt_fdr_core::twogroups::select_discoveries;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub fdp: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub stacked: bool,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl From<&TrainedPrior> for TrainingSummary {
    fn from(t: &TrainedPrior) -> Self {
        TrainingSummary {
            stacked: t.stacked,
            best_epoch: t.best_epoch,
            history: t.history.clone(),
        }
    }
}

/// A trained prior network with the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub stacked: bool,
    pub best_epoch: usize,
    pub train: TrainConfig,
    pub model: MlpModel,
}

impl Checkpoint {
    pub fn new(prior: &TrainedPrior, train: &TrainConfig) -> Self {
        Checkpoint {
            version: crate::VERSION.to_string(),
            stacked: prior.stacked,
            best_epoch: prior.best_epoch,
            train: train.clone(),
            model: prior.model.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub version: String,
    pub method: Method,
    pub alpha: f64,
    pub n_tests: usize,
    /// Number of discoveries.
    pub m: usize,
    /// Mean local fdr over the discoveries; absent for p-value methods.
    pub expected_fdp: Option<f64>,
    /// Posterior probability of the alternative per test.
    pub w: Option<Vec<f64>>,
    pub rejected: Vec<bool>,
    /// Realised FDP and power when the data carried ground truth.
    pub truth: Option<Truth>,
    pub fit: Fitted,
    pub density: Option<AlternativeDensity>,
    pub training: Option<TrainingSummary>,
    pub config: PipelineConfig,
}

struct Selection {
    rejected: Vec<bool>,
    m: usize,
    expected_fdp: Option<f64>,
}

fn select(fit: &Fitted, alpha: f64, n: usize) -> Result<Selection> {
    Ok(match fit {
        Fitted::Posterior { posterior, .. } => {
            let d = select_discoveries(posterior, alpha)?;
            Selection {
                rejected: d.rejected_mask(n),
                m: d.m,
                expected_fdp: Some(d.expected_fdp),
            }
        }
        Fitted::PValues { .. } => {
            let idx = fit.select(alpha)?;
            let mut rejected = vec![false; n];
            for &i in &idx {
                rejected[i] = true;
            }
            Selection {
                rejected,
                m: idx.len(),
                expected_fdp: None,
            }
        }
    })
}

fn fit_len(fit: &Fitted) -> usize {
    match fit {
        Fitted::PValues { p, .. } => p.len(),
        Fitted::Posterior { posterior, .. } => posterior.len(),
    }
}

fn truth_of(rejected: &[bool], h: Option<&[bool]>) -> Result<Option<Truth>> {
    let Some(h) = h else { return Ok(None) };
    let idx: Vec<usize> = (0..rejected.len()).filter(|&i| rejected[i]).collect();
    let (fdp, power) = true_fdp_power(&idx, h)?;
    Ok(Some(Truth { fdp, power }))
}

impl FitReport {
    pub fn build(
        fit: Fitted,
        alpha: f64,
        cache: &FitCache,
        config: &PipelineConfig,
        h: Option<&[bool]>,
    ) -> Result<Self> {
        let n = fit_len(&fit);
        let sel = select(&fit, alpha, n)?;
        let method = fit.method();
        let density = if matches!(fit, Fitted::Posterior { .. }) {
            cache.density().cloned()
        } else {
            None
        };
        let training = match method {
            Method::NnOnly | Method::NeurtA => cache.x_prior().map(TrainingSummary::from),
            Method::NeurtB => cache.stacked_prior().map(TrainingSummary::from),
            _ => None,
        };
        let w = match &fit {
            Fitted::Posterior { posterior, .. } => Some(posterior.as_slice().to_vec()),
            Fitted::PValues { .. } => None,
        };
        Ok(FitReport {
            version: crate::VERSION.to_string(),
            method,
            alpha,
            n_tests: n,
            m: sel.m,
            expected_fdp: sel.expected_fdp,
            w,
            truth: truth_of(&sel.rejected, h)?,
            rejected: sel.rejected,
            fit,
            density,
            training,
            config: config.clone(),
        })
    }

    /// Same fit thresholded at a new level. Ground truth, if any, is
    /// recomputed from the previous truth only when `h` is supplied.
    pub fn reselect(&self, alpha: f64, h: Option<&[bool]>) -> Result<Self> {
        let sel = select(&self.fit, alpha, self.n_tests)?;
        Ok(FitReport {
            alpha,
            m: sel.m,
            expected_fdp: sel.expected_fdp,
            truth: truth_of(&sel.rejected, h)?,
            rejected: sel.rejected,
            ..self.clone()
        })
    }

    /// One-line summary for stdout.
    pub fn summary(&self) -> String {
        let mut s = format!("method={} alpha={} n={} m={}", self.method, self.alpha, self.n_tests, self.m);
        if let Some(e) = self.expected_fdp {
            s.push_str(&format!(" expected_fdp={e:.6}"));
        }
        if let Some(t) = &self.truth {
            s.push_str(&format!(" fdp={:.6} power={:.6}", t.fdp, t.power));
        }
        s
    }

    /// Per-test table: `index,p,w,a,b,rejected`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let bad = |e: csv::Error| CliError::Input(format!("cannot write report table: {e}"));
        wtr.write_record(["index", "p", "w", "a", "b", "rejected"]).map_err(bad)?;
        let (p, field) = match &self.fit {
            Fitted::PValues { p, .. } => (Some(p.as_slice()), None),
            Fitted::Posterior { field, .. } => (None, field.as_ref()),
        };
        let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for i in 0..self.n_tests {
            wtr.write_record([
                i.to_string(),
                cell(p.map(|p| p[i])),
                cell(self.w.as_ref().map(|w| w[i])),
                cell(field.map(|f| f.a()[i])),
                cell(field.map(|f| f.b()[i])),
                (self.rejected[i] as u8).to_string(),
            ])
            .map_err(bad)?;
        }
        wtr.flush().map_err(|e| CliError::Input(format!("cannot write report table: {e}")))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e.into()))?;
    w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads JSON, reporting the key path of the first offending field.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_reader(BufReader::new(file));
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        CliError::Input(format!("{}: at `{at}`: {}", path.display(), e.inner()))
    })
}

pub fn write_csv_path(path: &Path, report: &FitReport) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    report.write_csv(&mut w)?;
    w.flush().map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use neurt_fdr_core::baselines::PValueVector;
    use neurt_fdr_core::twogroups::PosteriorVector;

    fn bh_fit() -> Fitted {
        Fitted::PValues {
            method: Method::Bh,
            p: PValueVector::new(vec![0.01, 0.02, 0.04, 0.9]).unwrap(),
            storey_tuning: 0.5,
        }
    }

    #[test]
    fn bh_report_counts() {
        let r = FitReport::build(bh_fit(), 0.05, &FitCache::default(), &PipelineConfig::default(), None).unwrap();
        assert_eq!(r.m, 2);
        assert_eq!(r.rejected, vec![true, true, false, false]);
        assert!(r.expected_fdp.is_none() && r.w.is_none());
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "index,p,w,a,b,rejected");
        assert_eq!(text.lines().nth(1).unwrap(), "0,0.01,,,,1");
    }

    #[test]
    fn reselect_is_monotone_and_round_trips() {
        let fit = Fitted::Posterior {
            method: Method::TwoGroups,
            posterior: PosteriorVector::new(vec![0.99, 0.3, 0.95, 0.9, 0.85, 0.1]).unwrap(),
            field: None,
            regression: None,
        };
        let h = [true, false, true, true, false, false];
        let r = FitReport::build(fit, 0.1, &FitCache::default(), &PipelineConfig::default(), Some(&h)).unwrap();
        let tighter = r.reselect(0.05, Some(&h)).unwrap();
        assert!(tighter.m <= r.m);
        assert_eq!(r.m, 4);
        assert_eq!(r.truth, Some(Truth { fdp: 0.25, power: 1.0 }));
        let json = serde_json::to_string(&r).unwrap();
        let back: FitReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
