use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numerics::make_lambda_grid;
use crate::rng::{substream, Stream};

use super::mlp::{bias_for_output, MlpModel};
use super::objective::{batch_loss, check_batch, TestDensities, Workspace};
use super::BetaPriorField;

/// Minimum number of tests accepted by [`train`].
pub const MIN_TRAIN_TESTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2_strength: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub holdout_fraction: f64,
    pub patience: usize,
    pub seed: u64,
    pub lambda_grid_nodes: usize,
    pub hidden_layers: Vec<usize>,
    /// Global gradient-norm clip; `0` disables clipping.
    pub clip_norm: f64,
    /// `a' + b'` of the untrained network, whose output weights start at
    /// zero. The marginal likelihood only sees the prior mean, so this also
    /// sets the scale the concentration stays near.
    pub initial_concentration: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            momentum: 0.9,
            l2_strength: 1e-4,
            batch_size: 128,
            max_epochs: 200,
            holdout_fraction: 0.2,
            patience: 10,
            seed: 0,
            lambda_grid_nodes: 100,
            hidden_layers: alloc::vec![64, 32],
            clip_norm: 10.0,
            initial_concentration: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.l2_strength.is_finite() && self.l2_strength >= 0.0) {
            return bad("l2_strength must be nonnegative");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be positive");
        }
        if !(0.0..0.5).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must lie in [0, 0.5)");
        }
        if self.lambda_grid_nodes < 2 {
            return bad("lambda_grid_nodes must be at least 2");
        }
        if self.hidden_layers.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        if !(self.clip_norm.is_finite() && self.clip_norm >= 0.0) {
            return bad("clip_norm must be nonnegative");
        }
        if !(self.initial_concentration > 2.0 * super::OUTPUT_FLOOR && self.initial_concentration < 2.0 * super::OUTPUT_CEILING) {
            return bad("initial_concentration must lie strictly between twice the output floor and twice the ceiling");
        }
        Ok(())
    }
}

/// Covariates fed to the network.
#[derive(Debug, Clone, Copy)]
pub enum PriorInput<'a> {
    /// Test-level covariates only (first stage of the two-stage variant).
    Covariates(&'a Matrix),
    /// `[X, X^a]` concatenated column-wise.
    Stacked { x: &'a Matrix, aux: &'a Matrix },
}

impl PriorInput<'_> {
    pub fn is_stacked(&self) -> bool {
        matches!(self, PriorInput::Stacked { .. })
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        match self {
            PriorInput::Covariates(x) => Ok((*x).clone()),
            PriorInput::Stacked { x, aux } => x.hstack(aux),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Regularised objective over the training split.
    pub train_loss: f64,
    /// Mean negative log marginal over the holdout split (training split if
    /// there is no holdout).
    pub holdout_nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPrior {
    pub model: MlpModel,
    pub field: BetaPriorField,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept; `0` means before any update.
    pub best_epoch: usize,
    pub stacked: bool,
}

/// Training-split column means and standard deviations; constant columns
/// get scale 1.
fn standardization(x: &Matrix, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let d = x.cols();
    let mut mean = alloc::vec![0.0; d];
    for &i in rows {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = alloc::vec![0.0; d];
    for &i in rows {
        for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|s| {
            let sd = libm::sqrt(s / n);
            if sd > 1e-12 * (1.0 + sd) && sd.is_finite() {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

fn clip(grad: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = libm::sqrt(grad.iter().map(|g| g * g).sum::<f64>());
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

/// Fits the prior network by mini-batch SGD with momentum, keeping the
/// parameters with the lowest holdout negative log marginal (epoch 0, the
/// initial model, included) and stopping after `patience` epochs without
/// improvement.
pub fn train(input: PriorInput<'_>, densities: &TestDensities, config: &TrainConfig) -> Result<TrainedPrior> {
    config.validate()?;
    let x = input.to_matrix()?;
    let n = x.rows();
    if n < MIN_TRAIN_TESTS {
        return Err(Error::TooFew { n, min: MIN_TRAIN_TESTS });
    }
    if x.cols() == 0 {
        return Err(Error::Empty("covariate columns"));
    }
    let grid = make_lambda_grid(config.lambda_grid_nodes)?;

    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(&mut substream(config.seed, Stream::Holdout));
    let n_hold = (config.holdout_fraction * n as f64) as usize;
    let (hold, rest) = all.split_at(n_hold);
    let mut train_idx = rest.to_vec();
    let mut hold_idx = hold.to_vec();
    train_idx.sort_unstable();
    hold_idx.sort_unstable();
    let eval_idx = if hold_idx.is_empty() { &train_idx } else { &hold_idx };

    let mut sizes = Vec::with_capacity(config.hidden_layers.len() + 2);
    sizes.push(x.cols());
    sizes.extend_from_slice(&config.hidden_layers);
    sizes.push(2);
    let bias = bias_for_output(0.5 * config.initial_concentration)?;
    let mut model = MlpModel::init(&sizes, bias, &mut substream(config.seed, Stream::Init))?;
    let (shift, scale) = standardization(&x, &train_idx);
    model.set_standardization(shift, scale)?;
    check_batch(&model, &x, densities, &train_idx)?;

    let mut ws = Workspace::new(grid.len());
    let evaluate = |model: &MlpModel, ws: &mut Workspace, epoch: usize| -> Result<EpochRecord> {
        let train_loss = batch_loss(model, &x, densities, &train_idx, &grid, config.l2_strength, ws, None)?;
        let holdout_nll = batch_loss(model, &x, densities, eval_idx, &grid, 0.0, ws, None)?;
        Ok(EpochRecord {
            epoch,
            train_loss,
            holdout_nll,
        })
    };

    let mut history = Vec::with_capacity(config.max_epochs + 1);
    let first = evaluate(&model, &mut ws, 0)?;
    let mut best = (first.holdout_nll, 0, model.parameters().to_vec());
    history.push(first);

    let mut order = train_idx.clone();
    let mut batch_rng = substream(config.seed, Stream::Batching);
    let mut grad = alloc::vec![0.0; model.n_params()];
    let mut velocity = alloc::vec![0.0; model.n_params()];
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut batch_rng);
        for batch in order.chunks(config.batch_size) {
            batch_loss(&model, &x, densities, batch, &grid, config.l2_strength, &mut ws, Some(&mut grad))?;
            clip(&mut grad, config.clip_norm);
            for ((p, v), g) in model.parameters_mut().iter_mut().zip(&mut velocity).zip(&grad) {
                *v = config.momentum * *v - config.learning_rate * g;
                *p += *v;
            }
            if model.parameters().iter().any(|p| !p.is_finite()) {
                return Err(Error::Config(format!(
                    "training diverged at epoch {epoch}; lower the learning rate"
                )));
            }
        }
        let rec = evaluate(&model, &mut ws, epoch)?;
        if rec.holdout_nll < best.0 {
            best = (rec.holdout_nll, epoch, model.parameters().to_vec());
            stale = 0;
        } else {
            stale += 1;
        }
        history.push(rec);
        if stale >= config.patience {
            break;
        }
    }

    model.parameters_mut().copy_from_slice(&best.2);
    let field = BetaPriorField::from_model(&model, &x)?;
    Ok(TrainedPrior {
        model,
        field,
        history,
        best_epoch: best.1,
        stacked: input.is_stacked(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_pdf, sigmoid};
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    /// Linear-prior data with a well-separated alternative.
    fn linear_data(n: usize, seed: u64) -> (Matrix, TestDensities) {
        let mut rng = substream(seed, Stream::Data);
        let mut rows = Vec::new();
        let (mut f0, mut f1) = (Vec::new(), Vec::new());
        for _ in 0..n {
            let r: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
            let lam = sigmoid(2.0 * r[0] - 1.0);
            let e: f64 = StandardNormal.sample(&mut rng);
            let z = if rng.random::<f64>() < lam { e + 3.0 } else { e };
            f0.push(gaussian_pdf(z, 0.0, 1.0));
            f1.push(gaussian_pdf(z, 3.0, 1.0));
            rows.push(r);
        }
        (Matrix::from_rows(&rows).unwrap(), TestDensities::new(f0, f1).unwrap())
    }

    fn small_config(seed: u64) -> TrainConfig {
        TrainConfig {
            hidden_layers: alloc::vec![8, 4],
            max_epochs: 30,
            learning_rate: 1e-2,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn learns_linear_prior() {
        let (x, d) = linear_data(400, 1);
        let out = train(PriorInput::Covariates(&x), &d, &small_config(1)).unwrap();
        let first = out.history[0].holdout_nll;
        let best = out.history[out.best_epoch].holdout_nll;
        assert!(best < first, "{best} !< {first}");
        // prior mean should increase with the first covariate
        let means: Vec<f64> = (0..x.rows()).map(|i| out.field.prior_mean(i)).collect();
        let (mut hi, mut lo, mut nh, mut nl) = (0.0, 0.0, 0, 0);
        for i in 0..x.rows() {
            if x.get(i, 0) > 0.5 {
                hi += means[i];
                nh += 1;
            } else if x.get(i, 0) < -0.5 {
                lo += means[i];
                nl += 1;
            }
        }
        assert!(hi / nh as f64 > lo / nl as f64);
    }

    #[test]
    fn constant_covariates_give_constant_field() {
        let (_, d) = linear_data(60, 2);
        let c = Matrix::new(60, 2, alloc::vec![1.5; 120]).unwrap();
        let out = train(PriorInput::Covariates(&c), &d, &small_config(2)).unwrap();
        let (a0, b0) = (out.field.a_raw()[0], out.field.b_raw()[0]);
        assert!(out.field.a_raw().iter().all(|&a| a == a0));
        assert!(out.field.b_raw().iter().all(|&b| b == b0));
    }

    #[test]
    fn heavy_penalty_flattens_the_map() {
        let (x, d) = linear_data(200, 3);
        let cfg = TrainConfig {
            l2_strength: 1e6,
            ..small_config(3)
        };
        let out = train(PriorInput::Covariates(&x), &d, &cfg).unwrap();
        let a = out.field.a_raw();
        let spread = a.iter().cloned().fold(f64::MIN, f64::max) - a.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-6, "{spread}");
    }

    #[test]
    fn training_is_deterministic() {
        let (x, d) = linear_data(120, 4);
        let a = train(PriorInput::Covariates(&x), &d, &small_config(9)).unwrap();
        let b = train(PriorInput::Covariates(&x), &d, &small_config(9)).unwrap();
        assert_eq!(a.model.parameters(), b.model.parameters());
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn stacked_input_widens_the_first_layer() {
        let (x, d) = linear_data(50, 5);
        let aux = Matrix::new(50, 2, (0..100).map(|v| v as f64).collect()).unwrap();
        let out = train(PriorInput::Stacked { x: &x, aux: &aux }, &d, &small_config(5)).unwrap();
        assert_eq!(out.model.input_dim(), 5);
        assert!(out.stacked);
    }

    #[test]
    fn rejects_tiny_or_invalid_inputs() {
        let (x, d) = linear_data(9, 6);
        assert!(matches!(
            train(PriorInput::Covariates(&x), &d, &small_config(0)),
            Err(Error::TooFew { .. })
        ));
        let (x, d) = linear_data(20, 6);
        let cfg = TrainConfig {
            holdout_fraction: 0.5,
            ..small_config(0)
        };
        assert!(train(PriorInput::Covariates(&x), &d, &cfg).is_err());
    }
}
