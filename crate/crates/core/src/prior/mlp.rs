use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numerics::{sigmoid, softplus};
use crate::rng::Rng;

/// Lower bound added to the softplus outputs.
pub const OUTPUT_FLOOR: f64 = 1e-3;
/// Upper clamp on both Beta parameters.
pub const OUTPUT_CEILING: f64 = 1e3;

/// Feed-forward network `x ↦ (a', b')`: rectifier hidden layers, a linear
/// output layer of width 2, then `softplus(·) + OUTPUT_FLOOR` clamped at
/// `OUTPUT_CEILING`.
///
/// All parameters live in one flat vector, layer by layer, each layer
/// storing its row-major `outputs × inputs` weight matrix followed by its
/// bias. Inputs are standardised with a stored per-column shift and scale
/// before the first layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpDocument", into = "MlpDocument")]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
    input_shift: Vec<f64>,
    input_scale: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LayerDocument {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MlpDocument {
    layer_sizes: Vec<usize>,
    input_shift: Vec<f64>,
    input_scale: Vec<f64>,
    layers: Vec<LayerDocument>,
}

impl From<MlpModel> for MlpDocument {
    fn from(m: MlpModel) -> Self {
        let layers = (0..m.n_layers())
            .map(|l| {
                let (w, b) = m.layer(l);
                LayerDocument {
                    weights: w.to_vec(),
                    bias: b.to_vec(),
                }
            })
            .collect();
        MlpDocument {
            layer_sizes: m.layer_sizes,
            input_shift: m.input_shift,
            input_scale: m.input_scale,
            layers,
        }
    }
}

impl TryFrom<MlpDocument> for MlpModel {
    type Error = Error;

    fn try_from(doc: MlpDocument) -> Result<Self> {
        let mut model = MlpModel::zeros(&doc.layer_sizes)?;
        if doc.layers.len() != model.n_layers() {
            return Err(Error::Dimension {
                what: "checkpoint layers",
                expected: model.n_layers(),
                got: doc.layers.len(),
            });
        }
        let mut params = Vec::with_capacity(model.params.len());
        for (l, layer) in doc.layers.iter().enumerate() {
            let (n_in, n_out) = (doc.layer_sizes[l], doc.layer_sizes[l + 1]);
            if layer.weights.len() != n_in * n_out {
                return Err(Error::Dimension {
                    what: "checkpoint weights",
                    expected: n_in * n_out,
                    got: layer.weights.len(),
                });
            }
            if layer.bias.len() != n_out {
                return Err(Error::Dimension {
                    what: "checkpoint bias",
                    expected: n_out,
                    got: layer.bias.len(),
                });
            }
            params.extend_from_slice(&layer.weights);
            params.extend_from_slice(&layer.bias);
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("checkpoint parameters"));
        }
        model.params = params;
        model.set_standardization(doc.input_shift, doc.input_scale)?;
        Ok(model)
    }
}

/// Per-example intermediate values kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct Trace {
    /// `acts[l]` is the input of layer `l`; `acts[0]` is the standardised x.
    acts: Vec<Vec<f64>>,
    /// Output-layer pre-activations.
    out: [f64; 2],
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl MlpModel {
    /// Model with every parameter zero and identity standardisation.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config("a network needs at least an input and an output layer".into()));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if *layer_sizes.last().unwrap() != 2 {
            return Err(Error::Dimension {
                what: "output layer",
                expected: 2,
                got: *layer_sizes.last().unwrap(),
            });
        }
        let n_params = layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let d = layer_sizes[0];
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params: alloc::vec![0.0; n_params],
            input_shift: alloc::vec![0.0; d],
            input_scale: alloc::vec![1.0; d],
        })
    }

    /// He-normal hidden weights, zero hidden biases and zero output
    /// weights, so a fresh model maps every input to the same pair
    /// `(softplus(output_bias) + floor)` in both coordinates.
    pub fn init(layer_sizes: &[usize], output_bias: f64, rng: &mut Rng) -> Result<Self> {
        let mut model = Self::zeros(layer_sizes)?;
        let last = model.n_layers() - 1;
        let mut off = 0;
        for l in 0..model.n_layers() {
            let (n_in, n_out) = (layer_sizes[l], layer_sizes[l + 1]);
            if l < last {
                let sd = libm::sqrt(2.0 / n_in as f64);
                for w in &mut model.params[off..off + n_in * n_out] {
                    let e: f64 = StandardNormal.sample(rng);
                    *w = sd * e;
                }
            }
            off += n_in * n_out + n_out;
        }
        let n = model.params.len();
        model.params[n - 2..].iter_mut().for_each(|b| *b = output_bias);
        Ok(model)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_shift(&self) -> &[f64] {
        &self.input_shift
    }

    pub fn input_scale(&self) -> &[f64] {
        &self.input_scale
    }

    pub fn set_standardization(&mut self, shift: Vec<f64>, scale: Vec<f64>) -> Result<()> {
        let d = self.input_dim();
        for v in [&shift, &scale] {
            if v.len() != d {
                return Err(Error::Dimension {
                    what: "standardisation vector",
                    expected: d,
                    got: v.len(),
                });
            }
        }
        if shift.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input shift"));
        }
        if let Some(&bad) = scale.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::Domain {
                name: "input scale",
                value: bad,
                domain: "(0, inf)",
            });
        }
        self.input_shift = shift;
        self.input_scale = scale;
        Ok(())
    }

    fn offset(&self, layer: usize) -> usize {
        self.layer_sizes[..layer + 1]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Weight matrix (row-major) and bias of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let off = self.offset(l);
        let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        let w = &self.params[off..off + n_in * n_out];
        let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
        (w, b)
    }

    /// True for parameter slots holding weights, false for biases.
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.params.len());
        for w in self.layer_sizes.windows(2) {
            mask.extend(core::iter::repeat_n(true, w[0] * w[1]));
            mask.extend(core::iter::repeat_n(false, w[1]));
        }
        mask
    }

    /// Sum of squared weights, biases excluded.
    pub fn weight_norm_sq(&self) -> f64 {
        let mut total = 0.0;
        let mut off = 0;
        for w in self.layer_sizes.windows(2) {
            total += self.params[off..off + w[0] * w[1]].iter().map(|v| v * v).sum::<f64>();
            off += w[0] * w[1] + w[1];
        }
        total
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                what: "covariate vector",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariates"));
        }
        Ok(())
    }

    /// `(a', b')` for one covariate vector.
    pub fn forward(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.check_input(x)?;
        let mut trace = Trace::default();
        let o = self.forward_trace(x, &mut trace);
        Ok((output_map(o[0]).0, output_map(o[1]).0))
    }

    /// `(a', b')` for every row, evaluated layer by layer over the batch.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Vec<(f64, f64)>> {
        if x.cols() != self.input_dim() {
            return Err(Error::Dimension {
                what: "covariate matrix columns",
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("covariates"));
        }
        let n = x.rows();
        let mut cur: Vec<f64> = Vec::with_capacity(n * self.input_dim());
        for i in 0..n {
            let row = x.row(i);
            cur.extend(
                row.iter()
                    .zip(&self.input_shift)
                    .zip(&self.input_scale)
                    .map(|((v, s), c)| (v - s) / c),
            );
        }
        let last = self.n_layers() - 1;
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let (w, bias) = self.layer(l);
            let mut next = alloc::vec![0.0; n * n_out];
            for i in 0..n {
                let input = &cur[i * n_in..(i + 1) * n_in];
                let out = &mut next[i * n_out..(i + 1) * n_out];
                for (k, o) in out.iter_mut().enumerate() {
                    let v = dot(&w[k * n_in..(k + 1) * n_in], input) + bias[k];
                    *o = if l < last { v.max(0.0) } else { v };
                }
            }
            cur = next;
        }
        Ok(cur
            .chunks_exact(2)
            .map(|o| (output_map(o[0]).0, output_map(o[1]).0))
            .collect())
    }

    /// Forward pass on a raw (unstandardised) input, keeping activations.
    /// Returns the two output pre-activations. Input must be validated.
    pub(crate) fn forward_trace(&self, x: &[f64], trace: &mut Trace) -> [f64; 2] {
        let n_layers = self.n_layers();
        trace.acts.resize_with(n_layers, Vec::new);
        let a0 = &mut trace.acts[0];
        a0.clear();
        a0.extend(
            x.iter()
                .zip(&self.input_shift)
                .zip(&self.input_scale)
                .map(|((v, s), c)| (v - s) / c),
        );
        let mut off = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            if l + 1 < n_layers {
                let (head, tail) = trace.acts.split_at_mut(l + 1);
                let input = &head[l];
                let out = &mut tail[0];
                out.clear();
                out.extend((0..n_out).map(|k| (dot(&w[k * n_in..(k + 1) * n_in], input) + bias[k]).max(0.0)));
            } else {
                let input = &trace.acts[l];
                for k in 0..2 {
                    trace.out[k] = dot(&w[k * n_in..(k + 1) * n_in], input) + bias[k];
                }
            }
        }
        trace.out
    }

    /// Accumulates `grad += ∂/∂θ (g · o)` where `o` are the output
    /// pre-activations of the traced example and `g = d_out`.
    pub(crate) fn backward(&self, trace: &mut Trace, d_out: [f64; 2], grad: &mut [f64]) {
        let n_layers = self.n_layers();
        trace.delta.clear();
        trace.delta.extend_from_slice(&d_out);
        for l in (0..n_layers).rev() {
            let off = self.offset(l);
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let input = &trace.acts[l];
            let delta = &trace.delta;
            for k in 0..n_out {
                let d = delta[k];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + k * n_in..off + (k + 1) * n_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
                grad[off + n_in * n_out + k] += d;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            trace.delta_prev.clear();
            trace.delta_prev.resize(n_in, 0.0);
            for k in 0..n_out {
                let d = delta[k];
                if d == 0.0 {
                    continue;
                }
                for (p, wk) in trace.delta_prev.iter_mut().zip(&w[k * n_in..(k + 1) * n_in]) {
                    *p += d * wk;
                }
            }
            // rectifier derivative: the input of layer l is post-activation
            for (p, a) in trace.delta_prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            core::mem::swap(&mut trace.delta, &mut trace.delta_prev);
        }
    }
}

/// Output-layer bias giving `(a', b') = (v, v)` for a zero-weight output
/// layer.
pub fn bias_for_output(v: f64) -> Result<f64> {
    let u = v - OUTPUT_FLOOR;
    if !(u > 0.0 && v < OUTPUT_CEILING) {
        return Err(Error::Domain {
            name: "initial output",
            value: v,
            domain: "(floor, ceiling)",
        });
    }
    // inverse softplus: ln(eᵘ − 1)
    Ok(if u > 30.0 { u } else { libm::log(libm::expm1(u)) })
}

/// `softplus(o) + floor`, clamped at the ceiling, with its derivative.
#[inline]
pub(crate) fn output_map(o: f64) -> (f64, f64) {
    let v = softplus(o) + OUTPUT_FLOOR;
    if v >= OUTPUT_CEILING {
        (OUTPUT_CEILING, 0.0)
    } else {
        (v, sigmoid(o))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};
    use alloc::vec;
    use rand::Rng as _;

    fn seeded(sizes: &[usize], seed: u64) -> MlpModel {
        let mut m = MlpModel::init(sizes, 0.0, &mut substream(seed, Stream::Init)).unwrap();
        // perturb the zero output layer so the tests see a nontrivial map
        let mut rng = substream(seed, Stream::Data);
        for p in m.parameters_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *p += 0.3 * e;
        }
        m
    }

    #[test]
    fn fresh_model_gives_constant_pair() {
        let m = MlpModel::init(&[3, 8, 4, 2], 0.0, &mut substream(1, Stream::Init)).unwrap();
        let expect = softplus(0.0) + OUTPUT_FLOOR;
        for x in [[0.0, 0.0, 0.0], [5.0, -2.0, 1e3]] {
            let (a, b) = m.forward(&x).unwrap();
            assert_eq!(a, expect);
            assert_eq!(b, expect);
        }
    }

    #[test]
    fn output_bias_sets_initial_pair() {
        let b = bias_for_output(5.0).unwrap();
        let m = MlpModel::init(&[2, 4, 2], b, &mut substream(1, Stream::Init)).unwrap();
        let (a, bb) = m.forward(&[0.3, -7.0]).unwrap();
        assert!((a - 5.0).abs() < 1e-12 && a == bb);
        assert!(bias_for_output(OUTPUT_FLOOR).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let a = seeded(&[4, 16, 8, 2], 7);
        let b = seeded(&[4, 16, 8, 2], 7);
        let x = [0.3, -1.2, 2.0, 0.0];
        assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn batch_matches_single() {
        let m = seeded(&[5, 12, 6, 2], 3);
        let mut rng = substream(9, Stream::Data);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..5).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let batch = m.forward_batch(&x).unwrap();
        for (r, (a, b)) in rows.iter().zip(batch) {
            let (sa, sb) = m.forward(r).unwrap();
            assert!((a - sa).abs() <= 1e-12 && (b - sb).abs() <= 1e-12);
        }
    }

    #[test]
    fn outputs_stay_in_range() {
        let m = seeded(&[2, 8, 2], 11);
        let mut rng = substream(12, Stream::Data);
        for _ in 0..10_000 {
            let e: f64 = StandardNormal.sample(&mut rng);
            let scale = libm::pow(10.0, (rng.random::<f64>() * 12.0) - 4.0);
            let x = [e * scale, -e * scale * 0.5];
            let (a, b) = m.forward(&x).unwrap();
            assert!(a >= OUTPUT_FLOOR && b >= OUTPUT_FLOOR);
            assert!(a <= OUTPUT_CEILING && b <= OUTPUT_CEILING);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = MlpModel::zeros(&[2, 2]).unwrap();
        assert!(m.forward(&[1.0]).is_err());
        assert!(m.forward(&[1.0, f64::NAN]).is_err());
        assert!(MlpModel::zeros(&[2, 3]).is_err());
        assert!(MlpModel::zeros(&[2, 0, 2]).is_err());
    }

    #[test]
    fn weight_mask_and_layout() {
        let m = seeded(&[3, 4, 2], 5);
        assert_eq!(m.n_params(), 3 * 4 + 4 + 4 * 2 + 2);
        let mask = m.weight_mask();
        assert_eq!(mask.iter().filter(|&&w| w).count(), 20);
        let by_mask: f64 = m.parameters().iter().zip(&mask).filter(|(_, &w)| w).map(|(p, _)| p * p).sum();
        assert!((by_mask - m.weight_norm_sq()).abs() < 1e-12);
        let (w1, b1) = m.layer(1);
        assert_eq!((w1.len(), b1.len()), (8, 2));
    }

    #[test]
    fn standardization_is_applied() {
        let mut m = seeded(&[2, 4, 2], 2);
        m.set_standardization(vec![1.0, 2.0], vec![2.0, 4.0]).unwrap();
        let shifted = m.forward(&[1.0, 2.0]).unwrap();
        let zeros = {
            let mut z = m.clone();
            z.set_standardization(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
            z.forward(&[0.0, 0.0]).unwrap()
        };
        assert_eq!(shifted, zeros);
        assert!(m.set_standardization(vec![0.0; 2], vec![0.0, 1.0]).is_err());
    }
}
