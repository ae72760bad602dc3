use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numerics::special::digamma_unchecked;
use crate::numerics::UnitIntervalGrid;

use super::mlp::{output_map, MlpModel, Trace};

/// Null and alternative density values per test, fixed during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestDensities {
    f0: Vec<f64>,
    f1: Vec<f64>,
}

impl TestDensities {
    pub fn new(f0: Vec<f64>, f1: Vec<f64>) -> Result<Self> {
        if f0.len() != f1.len() {
            return Err(Error::Dimension {
                what: "alternative densities",
                expected: f0.len(),
                got: f1.len(),
            });
        }
        for &v in f0.iter().chain(&f1) {
            if !v.is_finite() {
                return Err(Error::NonFinite("density value"));
            }
            if v < 0.0 {
                return Err(Error::Domain {
                    name: "density",
                    value: v,
                    domain: "[0, inf)",
                });
            }
        }
        Ok(Self { f0, f1 })
    }

    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn f0(&self) -> &[f64] {
        &self.f0
    }

    pub fn f1(&self) -> &[f64] {
        &self.f1
    }
}

/// Log marginal density of one test with `λ ~ Beta(a, b)` integrated out on
/// the grid.
///
/// With normalised Beta weights `β_j` the quadrature sum
/// `Σ β_j (λ_j f1 + (1 − λ_j) f0)` collapses to `f0 + (f1 − f0) λ̄` where
/// `λ̄ = Σ β_j λ_j`, which is what gets evaluated.
pub fn marginal_loglik(a: f64, b: f64, f0: f64, f1: f64, grid: &UnitIntervalGrid) -> Result<f64> {
    for (name, v) in [("a", a), ("b", b)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain {
                name,
                value: v,
                domain: "(0, inf)",
            });
        }
    }
    for v in [f0, f1] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::Domain {
                name: "density",
                value: v,
                domain: "[0, inf)",
            });
        }
    }
    let mut ws = Workspace::new(grid.len());
    ws.marginal(a, b, f0, f1, grid, false).map(|m| m.value)
}

pub(crate) struct Marginal {
    pub value: f64,
    pub d_a: f64,
    pub d_b: f64,
}

/// Reusable buffers for loss and gradient evaluation.
pub(crate) struct Workspace {
    beta: Vec<f64>,
    trace: Trace,
}

impl Workspace {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            beta: alloc::vec![0.0; n_nodes],
            trace: Trace::default(),
        }
    }

    /// Value and (optionally) the (a, b) gradient of the log marginal.
    ///
    /// `∂/∂a ln(Σ β_j c_j) = Σ β_j (s_j − s̄) c_j / c̄`, with `s_j` the Beta
    /// score in `a`; since `Σ β_j (s_j − s̄) = 0` this equals
    /// `(f1 − f0)/c̄ · Σ β_j (λ_j − λ̄) s_j`, which is exactly zero when
    /// `f1 = f0`.
    pub fn marginal(&mut self, a: f64, b: f64, f0: f64, f1: f64, grid: &UnitIntervalGrid, grad: bool) -> Result<Marginal> {
        self.beta.resize(grid.len(), 0.0);
        grid.beta_weights_into(a, b, &mut self.beta);
        let nodes = grid.nodes();
        let lam_bar: f64 = self.beta.iter().zip(nodes).map(|(w, l)| w * l).sum();
        let total = f0 + (f1 - f0) * lam_bar;
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::DegenerateMarginal(total));
        }
        let value = libm::log(total);
        if !grad || f1 == f0 {
            return Ok(Marginal { value, d_a: 0.0, d_b: 0.0 });
        }
        let psi_ab = digamma_unchecked(a + b);
        let psi_a = digamma_unchecked(a) - psi_ab;
        let psi_b = digamma_unchecked(b) - psi_ab;
        let (mut sa, mut sb) = (0.0, 0.0);
        for (j, &w) in self.beta.iter().enumerate() {
            let dev = w * (nodes[j] - lam_bar);
            sa += dev * (grid.log_nodes()[j] - psi_a);
            sb += dev * (grid.log_complements()[j] - psi_b);
        }
        let scale = (f1 - f0) / total;
        Ok(Marginal {
            value,
            d_a: scale * sa,
            d_b: scale * sb,
        })
    }

    /// Adds the gradient of `−ln p(z_i)` for test `i` into `grad` and
    /// returns the negative log marginal.
    pub fn accumulate(
        &mut self,
        model: &MlpModel,
        x: &[f64],
        f0: f64,
        f1: f64,
        grid: &UnitIntervalGrid,
        index: usize,
        grad: Option<&mut [f64]>,
    ) -> Result<f64> {
        let o = model.forward_trace(x, &mut self.trace);
        let (a, da_do) = output_map(o[0]);
        let (b, db_do) = output_map(o[1]);
        let want_grad = grad.is_some();
        let m = match self.marginal(a, b, f0, f1, grid, want_grad) {
            Ok(m) if m.value.is_finite() => m,
            _ => return Err(Error::NonFiniteLoss { index }),
        };
        if let Some(grad) = grad {
            let d_out = [-m.d_a * da_do, -m.d_b * db_do];
            if d_out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLoss { index });
            }
            model.backward(&mut self.trace, d_out, grad);
        }
        Ok(-m.value)
    }
}

/// Mean negative log marginal over the batch plus `l2 · Σ W²`, and its
/// gradient with respect to every model parameter (same layout as
/// [`MlpModel::parameters`]).
pub fn loss_and_grad(
    model: &MlpModel,
    x: &Matrix,
    densities: &TestDensities,
    batch: &[usize],
    grid: &UnitIntervalGrid,
    l2_strength: f64,
) -> Result<(f64, Vec<f64>)> {
    check_batch(model, x, densities, batch)?;
    let mut ws = Workspace::new(grid.len());
    let mut grad = alloc::vec![0.0; model.n_params()];
    let loss = batch_loss(model, x, densities, batch, grid, l2_strength, &mut ws, Some(&mut grad))?;
    Ok((loss, grad))
}

pub(crate) fn check_batch(model: &MlpModel, x: &Matrix, densities: &TestDensities, batch: &[usize]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    if x.cols() != model.input_dim() {
        return Err(Error::Dimension {
            what: "covariate matrix columns",
            expected: model.input_dim(),
            got: x.cols(),
        });
    }
    if x.rows() != densities.len() {
        return Err(Error::Dimension {
            what: "density vector",
            expected: x.rows(),
            got: densities.len(),
        });
    }
    if let Some(&bad) = batch.iter().find(|&&i| i >= x.rows()) {
        return Err(Error::Dimension {
            what: "batch index bound",
            expected: x.rows(),
            got: bad,
        });
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("covariates"));
    }
    Ok(())
}

/// Unchecked core of [`loss_and_grad`]; `grad` is overwritten when given.
#[allow(clippy::too_many_arguments)]
pub(crate) fn batch_loss(
    model: &MlpModel,
    x: &Matrix,
    densities: &TestDensities,
    batch: &[usize],
    grid: &UnitIntervalGrid,
    l2_strength: f64,
    ws: &mut Workspace,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut nll = 0.0;
    for &i in batch {
        nll += ws.accumulate(
            model,
            x.row(i),
            densities.f0[i],
            densities.f1[i],
            grid,
            i,
            grad.as_deref_mut(),
        )?;
    }
    let inv_n = 1.0 / batch.len() as f64;
    let loss = nll * inv_n + l2_strength * model.weight_norm_sq();
    if let Some(g) = grad {
        g.iter_mut().for_each(|v| *v *= inv_n);
        if l2_strength != 0.0 {
            for ((g, p), is_w) in g.iter_mut().zip(model.parameters()).zip(model.weight_mask()) {
                if is_w {
                    *g += 2.0 * l2_strength * p;
                }
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { index: batch[0] });
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{log_sigmoid, make_lambda_grid};
    use crate::numerics::special::ln_beta;

    /// Fine logit-space quadrature of `ln ∫ Beta(λ|a,b) (λ f1 + (1−λ) f0) dλ`.
    fn oracle(a: f64, b: f64, f0: f64, f1: f64) -> f64 {
        let c = libm::log(a / b);
        let (lo, hi) = (c - 40.0 / a - 10.0, c + 40.0 / b + 10.0);
        let n = 10_000;
        let h = (hi - lo) / n as f64;
        let lnb = ln_beta(a, b);
        let mut s = 0.0;
        for k in 0..n {
            let t = lo + (k as f64 + 0.5) * h;
            let (lp, lq) = (log_sigmoid(t), log_sigmoid(-t));
            let dens = libm::exp(a * lp + b * lq - lnb);
            s += h * dens * (libm::exp(lp) * f1 + libm::exp(lq) * f0);
        }
        libm::log(s)
    }

    #[test]
    fn equal_densities_give_log_f0() {
        let g = make_lambda_grid(100).unwrap();
        for (a, b) in [(0.2, 5.0), (3.0, 3.0), (80.0, 0.4)] {
            assert_eq!(marginal_loglik(a, b, 0.37, 0.37, &g).unwrap(), libm::log(0.37));
        }
    }

    #[test]
    fn uniform_prior_example() {
        let g = make_lambda_grid(100).unwrap();
        let v = marginal_loglik(1.0, 1.0, 0.05, 0.20, &g).unwrap();
        assert!((v - libm::log(0.125)).abs() < 1e-3);
    }

    #[test]
    fn matches_fine_quadrature() {
        let g = make_lambda_grid(100).unwrap();
        for &(a, b, f0, f1) in &[
            (0.1, 0.1, 0.3, 0.01),
            (0.5, 7.0, 0.05, 0.2),
            (12.0, 0.3, 0.002, 0.1),
            (99.0, 97.0, 0.4, 0.05),
            (2.0, 40.0, 1e-6, 0.1),
        ] {
            let v = marginal_loglik(a, b, f0, f1, &g).unwrap();
            let o = oracle(a, b, f0, f1);
            assert!((v - o).abs() < 1e-4, "({a},{b}): {v} vs {o}");
        }
    }

    #[test]
    fn degenerate_marginal_is_an_error() {
        let g = make_lambda_grid(20).unwrap();
        assert!(matches!(
            marginal_loglik(1.0, 1.0, 0.0, 0.0, &g),
            Err(Error::DegenerateMarginal(_))
        ));
        assert!(marginal_loglik(0.0, 1.0, 0.1, 0.1, &g).is_err());
        assert!(marginal_loglik(1.0, 1.0, -0.1, 0.1, &g).is_err());
    }

    #[test]
    fn ab_gradient_matches_differences() {
        let g = make_lambda_grid(100).unwrap();
        let mut ws = Workspace::new(g.len());
        for &(a, b, f0, f1) in &[(0.7, 3.0, 0.05, 0.2), (5.0, 2.0, 0.3, 0.01), (40.0, 60.0, 0.1, 0.4)] {
            let m = ws.marginal(a, b, f0, f1, &g, true).unwrap();
            let h = 1e-6;
            let fa = |a: f64, b: f64| marginal_loglik(a, b, f0, f1, &g).unwrap();
            let na = (fa(a + h, b) - fa(a - h, b)) / (2.0 * h);
            let nb = (fa(a, b + h) - fa(a, b - h)) / (2.0 * h);
            assert!((m.d_a - na).abs() <= 1e-6 * (1.0 + na.abs()), "{} vs {na}", m.d_a);
            assert!((m.d_b - nb).abs() <= 1e-6 * (1.0 + nb.abs()), "{} vs {nb}", m.d_b);
        }
    }
}
