//! Bivariate regression of the log network outputs on auxiliary features.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::prior::{BetaPriorField, OUTPUT_CEILING, OUTPUT_FLOOR};

/// Relative size below which a column's component orthogonal to the
/// preceding columns counts as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualCov {
    pub aa: f64,
    pub ab: f64,
    pub bb: f64,
}

/// `(ln a', ln b') ~ N₂((μ_a + X^a δ_a, μ_b + X^a δ_b), Σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateRegression {
    pub mu_a: f64,
    pub mu_b: f64,
    pub delta_a: Vec<f64>,
    pub delta_b: Vec<f64>,
    pub residual_cov: ResidualCov,
    /// Standard errors of `[μ_a, δ_a...]`.
    pub se_a: Vec<f64>,
    /// Standard errors of `[μ_b, δ_b...]`.
    pub se_b: Vec<f64>,
    pub n_obs: usize,
}

impl BivariateRegression {
    pub fn n_aux(&self) -> usize {
        self.delta_a.len()
    }

    /// Fitted `(ln a, ln b)` for one auxiliary row.
    pub fn fitted(&self, aux: &[f64]) -> (f64, f64) {
        let la = self.mu_a + aux.iter().zip(&self.delta_a).map(|(x, d)| x * d).sum::<f64>();
        let lb = self.mu_b + aux.iter().zip(&self.delta_b).map(|(x, d)| x * d).sum::<f64>();
        (la, lb)
    }
}

fn column_name(j: usize) -> String {
    if j == 0 {
        "intercept".into()
    } else {
        format!("aux_{j}")
    }
}

/// Householder QR of an `n × p` column-major matrix, in place. Returns
/// the Householder vectors (stored below the diagonal plus `betas`) and R
/// in the upper triangle.
struct Qr {
    n: usize,
    p: usize,
    /// Column-major storage.
    a: Vec<f64>,
    betas: Vec<f64>,
}

impl Qr {
    fn new(n: usize, p: usize, mut a: Vec<f64>) -> Result<Self> {
        let norms: Vec<f64> = (0..p)
            .map(|j| libm::sqrt(a[j * n..(j + 1) * n].iter().map(|v| v * v).sum()))
            .collect();
        let mut betas = alloc::vec![0.0; p];
        for k in 0..p {
            let col = &mut a[k * n..(k + 1) * n];
            let sigma: f64 = col[k..].iter().map(|v| v * v).sum();
            let alpha = libm::sqrt(sigma);
            if alpha <= RANK_TOL * norms[k] || alpha == 0.0 {
                return Err(rank_error(&a, n, k));
            }
            let x0 = col[k];
            let r = if x0 >= 0.0 { -alpha } else { alpha };
            let v0 = x0 - r;
            col[k] = r;
            for v in &mut col[k + 1..] {
                *v /= v0;
            }
            // v = [1, col[k+1..]], beta = -v0 / r
            let beta = -v0 / r;
            betas[k] = beta;
            let (head, tail) = a.split_at_mut((k + 1) * n);
            let v = &head[k * n + k + 1..(k + 1) * n];
            for j in 0..p - k - 1 {
                let c = &mut tail[j * n..(j + 1) * n];
                let dot = c[k] + v.iter().zip(&c[k + 1..]).map(|(x, y)| x * y).sum::<f64>();
                let s = beta * dot;
                c[k] -= s;
                for (ci, vi) in c[k + 1..].iter_mut().zip(v) {
                    *ci -= s * vi;
                }
            }
        }
        Ok(Self { n, p, a, betas })
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        self.a[j * self.n + i]
    }

    /// `y ← Qᵀ y`.
    fn apply_qt(&self, y: &mut [f64]) {
        let n = self.n;
        for k in 0..self.p {
            let v = &self.a[k * n + k + 1..(k + 1) * n];
            let dot = y[k] + v.iter().zip(&y[k + 1..]).map(|(a, b)| a * b).sum::<f64>();
            let s = self.betas[k] * dot;
            y[k] -= s;
            for (yi, vi) in y[k + 1..].iter_mut().zip(v) {
                *yi -= s * vi;
            }
        }
    }

    /// Least-squares coefficients for response `y`.
    fn solve(&self, y: &[f64]) -> Vec<f64> {
        let mut qty = y.to_vec();
        self.apply_qt(&mut qty);
        back_substitute(self.p, |i, j| self.r(i, j), &qty[..self.p])
    }

    /// Diagonal of `(RᵀR)⁻¹ = R⁻¹R⁻ᵀ`.
    fn inverse_gram_diag(&self) -> Vec<f64> {
        let p = self.p;
        let mut rinv = alloc::vec![0.0; p * p];
        for j in 0..p {
            let mut e = alloc::vec![0.0; p];
            e[j] = 1.0;
            let col = back_substitute(p, |i, k| self.r(i, k), &e);
            for i in 0..p {
                rinv[i * p + j] = col[i];
            }
        }
        (0..p)
            .map(|i| rinv[i * p..(i + 1) * p].iter().map(|v| v * v).sum())
            .collect()
    }
}

fn back_substitute(p: usize, r: impl Fn(usize, usize) -> f64, rhs: &[f64]) -> Vec<f64> {
    let mut x = alloc::vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| r(i, j) * x[j]).sum();
        x[i] = (rhs[i] - s) / r(i, i);
    }
    x
}

/// Error for dependent column `k` of a partially factored matrix: the
/// earlier columns with nonzero weight in its representation are named.
fn rank_error(a: &[f64], n: usize, k: usize) -> Error {
    // a[k*n..k*n+k] holds Q₁ᵀ d_k for the first k columns
    let r = |i: usize, j: usize| a[j * n + i];
    let rhs: Vec<f64> = (0..k).map(|i| r(i, k)).collect();
    let coef = back_substitute(k, r, &rhs);
    let scale = coef.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let depends_on = coef
        .iter()
        .enumerate()
        .filter(|(_, c)| c.abs() > 1e-8 * scale.max(1e-300))
        .map(|(j, _)| column_name(j))
        .collect();
    Error::RankDeficient {
        column: column_name(k),
        depends_on,
    }
}

/// Equation-by-equation least squares of `ln a'` and `ln b'` on
/// `[1, X^a]`, via Householder QR of the design.
pub fn fit_regression(log_a_raw: &[f64], log_b_raw: &[f64], x_aux: &Matrix) -> Result<BivariateRegression> {
    let n = log_a_raw.len();
    let q = x_aux.cols();
    for (what, len) in [("log b responses", log_b_raw.len()), ("auxiliary rows", x_aux.rows())] {
        if len != n {
            return Err(Error::Dimension { what, expected: n, got: len });
        }
    }
    if n <= q + 1 {
        return Err(Error::TooFew { n, min: q + 2 });
    }
    if !x_aux.is_finite() {
        return Err(Error::NonFinite("auxiliary covariates"));
    }
    if log_a_raw.iter().chain(log_b_raw).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression responses"));
    }
    let p = q + 1;
    let mut design = alloc::vec![1.0; n * p];
    for j in 0..q {
        for (i, v) in x_aux.column(j).enumerate() {
            design[(j + 1) * n + i] = v;
        }
    }
    let qr = Qr::new(n, p, design)?;
    let ca = qr.solve(log_a_raw);
    let cb = qr.solve(log_b_raw);

    let mut cov = ResidualCov { aa: 0.0, ab: 0.0, bb: 0.0 };
    for i in 0..n {
        let row = x_aux.row(i);
        let fa = ca[0] + row.iter().zip(&ca[1..]).map(|(x, d)| x * d).sum::<f64>();
        let fb = cb[0] + row.iter().zip(&cb[1..]).map(|(x, d)| x * d).sum::<f64>();
        let (ra, rb) = (log_a_raw[i] - fa, log_b_raw[i] - fb);
        cov.aa += ra * ra;
        cov.ab += ra * rb;
        cov.bb += rb * rb;
    }
    let dof = (n - q - 1) as f64;
    cov.aa /= dof;
    cov.ab /= dof;
    cov.bb /= dof;

    let diag = qr.inverse_gram_diag();
    let se_a = diag.iter().map(|d| libm::sqrt(cov.aa * d)).collect();
    let se_b = diag.iter().map(|d| libm::sqrt(cov.bb * d)).collect();
    Ok(BivariateRegression {
        mu_a: ca[0],
        mu_b: cb[0],
        delta_a: ca[1..].to_vec(),
        delta_b: cb[1..].to_vec(),
        residual_cov: cov,
        se_a,
        se_b,
        n_obs: n,
    })
}

/// Replaces `(a, b)` by the exponentiated fitted values, clamped to the
/// network's output range.
pub fn adjust(field: BetaPriorField, reg: &BivariateRegression, x_aux: &Matrix) -> Result<BetaPriorField> {
    if field.is_adjusted() {
        return Err(Error::AlreadyAdjusted);
    }
    if x_aux.rows() != field.len() {
        return Err(Error::Dimension {
            what: "auxiliary rows",
            expected: field.len(),
            got: x_aux.rows(),
        });
    }
    if x_aux.cols() != reg.n_aux() {
        return Err(Error::Dimension {
            what: "auxiliary columns",
            expected: reg.n_aux(),
            got: x_aux.cols(),
        });
    }
    if !x_aux.is_finite() {
        return Err(Error::NonFinite("auxiliary covariates"));
    }
    let clamp = |v: f64| libm::exp(v).clamp(OUTPUT_FLOOR, OUTPUT_CEILING);
    let (a, b) = (0..x_aux.rows())
        .map(|i| {
            let (la, lb) = reg.fitted(x_aux.row(i));
            (clamp(la), clamp(lb))
        })
        .unzip();
    field.with_adjusted(a, b)
}

/// Log of the raw network outputs, the regression responses.
pub fn log_raw(field: &BetaPriorField) -> (Vec<f64>, Vec<f64>) {
    (
        field.a_raw().iter().map(|v| libm::log(*v)).collect(),
        field.b_raw().iter().map(|v| libm::log(*v)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn intercept_only_gives_means() {
        let la = [0.1, 0.5, -0.3, 1.2];
        let lb = [2.0, 1.0, 0.0, 1.0];
        let x = Matrix::zeros(4, 0);
        let r = fit_regression(&la, &lb, &x).unwrap();
        assert!((r.mu_a - 0.375).abs() < 1e-14);
        assert!((r.mu_b - 1.0).abs() < 1e-14);
        assert!(r.delta_a.is_empty());
        assert_eq!(r.fitted(&[]), (r.mu_a, r.mu_b));
    }

    #[test]
    fn noiseless_linear_recovery() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64;
                vec![libm::sin(t), libm::cos(1.7 * t) + 0.1 * t]
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let la: Vec<f64> = rows.iter().map(|r| 0.3 + 2.0 * r[0] - 1.0 * r[1]).collect();
        let lb: Vec<f64> = rows.iter().map(|r| -1.0 + 0.5 * r[1]).collect();
        let reg = fit_regression(&la, &lb, &x).unwrap();
        assert!((reg.mu_a - 0.3).abs() < 1e-8);
        assert!((reg.delta_a[0] - 2.0).abs() < 1e-8 && (reg.delta_a[1] + 1.0).abs() < 1e-8);
        assert!((reg.mu_b + 1.0).abs() < 1e-8 && reg.delta_b[0].abs() < 1e-8);
        assert!(reg.residual_cov.aa < 1e-16 && reg.residual_cov.bb < 1e-16);
    }

    #[test]
    fn dependent_columns_are_named() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                let t = i as f64;
                vec![t, t * t, 2.0 * t - 1.0]
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y = vec![0.0; 10];
        match fit_regression(&y, &y, &x) {
            Err(Error::RankDeficient { column, depends_on }) => {
                assert_eq!(column, "aux_3");
                assert_eq!(depends_on, vec!["intercept".to_string(), "aux_1".to_string()]);
            }
            other => panic!("{other:?}"),
        }
        let constant = Matrix::new(5, 1, vec![4.0; 5]).unwrap();
        let y5 = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!(matches!(
            fit_regression(&y5, &y5, &constant),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn too_few_rows() {
        let x = Matrix::new(3, 2, vec![1.0, 2.0, 3.0, 5.0, 4.0, 9.0]).unwrap();
        assert!(matches!(
            fit_regression(&[0.0; 3], &[0.0; 3], &x),
            Err(Error::TooFew { n: 3, min: 4 })
        ));
    }

    #[test]
    fn adjust_intercept_only_is_geometric_mean() {
        let field = BetaPriorField::new(vec![1.0, 4.0], vec![2.0, 8.0]).unwrap();
        let (la, lb) = log_raw(&field);
        let x = Matrix::zeros(2, 0);
        let reg = fit_regression(&la, &lb, &x).unwrap();
        let adj = adjust(field, &reg, &x).unwrap();
        assert!(adj.is_adjusted());
        for i in 0..2 {
            assert!((adj.a()[i] - 2.0).abs() < 1e-12);
            assert!((adj.b()[i] - 4.0).abs() < 1e-12);
        }
        assert_eq!(adjust(adj, &reg, &x), Err(Error::AlreadyAdjusted));
    }

    #[test]
    fn adjust_clamps_to_output_range() {
        let field = BetaPriorField::new(vec![1.0; 3], vec![1.0; 3]).unwrap();
        let reg = BivariateRegression {
            mu_a: 20.0,
            mu_b: -20.0,
            delta_a: vec![],
            delta_b: vec![],
            residual_cov: ResidualCov { aa: 0.0, ab: 0.0, bb: 0.0 },
            se_a: vec![0.0],
            se_b: vec![0.0],
            n_obs: 3,
        };
        let adj = adjust(field, &reg, &Matrix::zeros(3, 0)).unwrap();
        assert_eq!(adj.a(), &[OUTPUT_CEILING; 3]);
        assert_eq!(adj.b(), &[OUTPUT_FLOOR; 3]);
    }
}
