use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use super::lstm::{LstmLayer, OutputPeephole, StepCache};
use crate::metric::{metric_from_theta_clamped, packed_len};
use crate::{Error, Result};

/// Diagonal floor applied to predicted Cholesky pivots.
pub const EPS_PD: f64 = 1e-6;

/// Per-component affine standardization `z = (v − mean)/scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Mean and population standard deviation; a scale below 1e-12 is
    /// replaced by 1.
    pub fn fit<'a>(dim: usize, rows: impl Iterator<Item = &'a [f64]>) -> Self {
        let rows: Vec<&[f64]> = rows.collect();
        let count = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v / count;
            }
        }
        let mut var = vec![0.0; dim];
        for r in &rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m) / count;
            }
        }
        let scale = var.iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        Standardizer { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, v: &[f64]) -> DVector<f64> {
        DVector::from_iterator(v.len(), v.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s))
    }

    pub fn denormalize(&self, z: &DVector<f64>) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.scale).map(|((z, m), s)| z * s + m).collect()
    }
}

/// Stacked LSTM layers followed by `y = W_hy h + b_y`, with input and
/// target standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepLstmModel {
    pub state_dim: usize,
    /// Appends `t` to the network input.
    pub time_input: bool,
    pub layers: Vec<LstmLayer>,
    pub w_hy: DMatrix<f64>,
    pub b_y: DVector<f64>,
    pub input_norm: Standardizer,
    pub output_norm: Standardizer,
    pub seed: u64,
}

/// Per-stream recurrent state for online inference.
#[derive(Debug, Clone)]
pub struct StreamState {
    h: Vec<DVector<f64>>,
    c: Vec<DVector<f64>>,
}

/// Forward pass of one sequence with everything needed for BPTT.
pub(crate) struct SequenceTrace {
    /// `caches[l][t]`
    pub caches: Vec<Vec<StepCache>>,
    /// Normalized outputs per step.
    pub outputs: Vec<DVector<f64>>,
}

impl DeepLstmModel {
    pub fn new_random<R: Rng>(state_dim: usize, hidden: usize, layers: usize, time_input: bool, seed: u64, rng: &mut R) -> Result<Self> {
        if state_dim == 0 || hidden == 0 || layers == 0 {
            return Err(Error::Config("state_dim, hidden and layers must be positive".into()));
        }
        let input_dim = state_dim + time_input as usize;
        let mut stack = Vec::with_capacity(layers);
        for l in 0..layers {
            stack.push(LstmLayer::random(if l == 0 { input_dim } else { hidden }, hidden, rng));
        }
        let k = packed_len(state_dim);
        let r = 1.0 / (hidden as f64).sqrt();
        let dist = Uniform::new_inclusive(-r, r).expect("valid range");
        let w_hy = DMatrix::from_fn(k, hidden, |_, _| rng.sample(dist));
        Ok(DeepLstmModel {
            state_dim,
            time_input,
            layers: stack,
            w_hy,
            b_y: DVector::zeros(k),
            input_norm: Standardizer::identity(input_dim),
            output_norm: Standardizer::identity(k),
            seed,
        })
    }

    /// All-zero weights with `b_y` set so every output equals `theta`.
    pub fn constant(state_dim: usize, hidden: usize, layers: usize, theta: &[f64]) -> Result<Self> {
        let k = packed_len(state_dim);
        if theta.len() != k {
            return Err(Error::Shape(format!("theta has {} entries, expected {k}", theta.len())));
        }
        let mut stack = Vec::with_capacity(layers);
        for l in 0..layers {
            stack.push(LstmLayer::zeros(if l == 0 { state_dim } else { hidden }, hidden));
        }
        Ok(DeepLstmModel {
            state_dim,
            time_input: false,
            layers: stack,
            w_hy: DMatrix::zeros(k, hidden),
            b_y: DVector::from_column_slice(theta),
            input_norm: Standardizer::identity(state_dim),
            output_norm: Standardizer::identity(k),
            seed: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + self.time_input as usize
    }

    pub fn output_dim(&self) -> usize {
        packed_len(self.state_dim)
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.num_params()).sum::<usize>() + self.w_hy.len() + self.b_y.len()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.is_finite())
            && self.w_hy.iter().chain(self.b_y.iter()).all(|v| v.is_finite())
    }

    /// Zeroed copy with identical shapes, used as a gradient accumulator.
    pub(crate) fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(|_, t| t.fill(0.0));
        z
    }

    /// Visits every trainable tensor as `(name, column-major data)`.
    pub(crate) fn visit(&self, mut f: impl FnMut(String, &[f64])) {
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, t) in super::lstm::LAYER_TENSORS.iter().zip(layer.tensors()) {
                f(format!("layer{l}.{name}"), t);
            }
        }
        f("w_hy".into(), self.w_hy.as_slice());
        f("b_y".into(), self.b_y.as_slice());
    }

    pub(crate) fn visit_mut(&mut self, mut f: impl FnMut(String, &mut [f64])) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (name, t) in super::lstm::LAYER_TENSORS.iter().zip(layer.tensors_mut()) {
                f(format!("layer{l}.{name}"), t);
            }
        }
        f("w_hy".into(), self.w_hy.as_mut_slice());
        f("b_y".into(), self.b_y.as_mut_slice());
    }

    /// `(name, rows, cols)` of every trainable tensor in visiting order.
    pub(crate) fn tensor_shapes(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, (r, c)) in super::lstm::LAYER_TENSORS.iter().zip(layer.shapes()) {
                out.push((format!("layer{l}.{name}"), r, c));
            }
        }
        out.push(("w_hy".into(), self.w_hy.nrows(), self.w_hy.ncols()));
        out.push(("b_y".into(), self.b_y.len(), 1));
        out
    }

    fn raw_input(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        if x.len() != self.state_dim {
            return Err(Error::Shape(format!("model expects state dim {}, got {}", self.state_dim, x.len())));
        }
        let mut v = x.to_vec();
        if self.time_input {
            v.push(t);
        }
        Ok(v)
    }

    pub(crate) fn normalized_inputs(&self, xs: &[DVector<f64>], ts: &[f64]) -> Result<Vec<DVector<f64>>> {
        xs.iter()
            .enumerate()
            .map(|(k, x)| Ok(self.input_norm.normalize(&self.raw_input(x.as_slice(), ts.get(k).copied().unwrap_or(0.0))?)))
            .collect()
    }

    pub(crate) fn trace(&self, inputs: &[DVector<f64>], peephole: OutputPeephole) -> SequenceTrace {
        let hdim = self.hidden();
        let mut caches: Vec<Vec<StepCache>> = Vec::with_capacity(self.layers.len());
        let mut seq: Vec<DVector<f64>> = inputs.to_vec();
        for layer in &self.layers {
            let mut h = DVector::zeros(hdim);
            let mut c = DVector::zeros(hdim);
            let mut layer_caches = Vec::with_capacity(seq.len());
            for x in &seq {
                let s = layer.step_cached(x, &h, &c, peephole);
                h = s.h.clone();
                c = s.c.clone();
                layer_caches.push(s);
            }
            seq = layer_caches.iter().map(|s| s.h.clone()).collect();
            caches.push(layer_caches);
        }
        let outputs = seq.iter().map(|h| &self.w_hy * h + &self.b_y).collect();
        SequenceTrace { caches, outputs }
    }

    /// θ predictions for a whole sequence from zero initial state.
    pub fn forward(&self, xs: &[DVector<f64>], ts: &[f64]) -> Result<Vec<Vec<f64>>> {
        if xs.is_empty() {
            return Err(Error::Shape("empty input sequence".into()));
        }
        let inputs = self.normalized_inputs(xs, ts)?;
        let tr = self.trace(&inputs, OutputPeephole::Current);
        Ok(tr.outputs.iter().map(|z| self.output_norm.denormalize(z)).collect())
    }

    pub fn stream(&self) -> StreamState {
        let h = self.hidden();
        StreamState {
            h: vec![DVector::zeros(h); self.layers.len()],
            c: vec![DVector::zeros(h); self.layers.len()],
        }
    }

    /// Advances a stream by one input and returns the θ prediction.
    pub fn stream_step(&self, state: &mut StreamState, x: &DVector<f64>, t: f64) -> Result<Vec<f64>> {
        let mut z = self.input_norm.normalize(&self.raw_input(x.as_slice(), t)?);
        for (l, layer) in self.layers.iter().enumerate() {
            let s = layer.step_cached(&z, &state.h[l], &state.c[l], OutputPeephole::Current);
            state.h[l] = s.h;
            state.c[l] = s.c;
            z = state.h[l].clone();
        }
        Ok(self.output_norm.denormalize(&(&self.w_hy * z + &self.b_y)))
    }

    /// Mean squared error in normalized target units and its gradient
    /// (accumulated into `grad` scaled by `weight`).
    pub(crate) fn loss_and_grad(
        &self,
        inputs: &[DVector<f64>],
        targets: &[DVector<f64>],
        grad: Option<(&mut DeepLstmModel, f64)>,
        peephole: OutputPeephole,
    ) -> f64 {
        let tr = self.trace(inputs, peephole);
        let k = self.output_dim();
        let denom = (targets.len() * k) as f64;
        let residuals: Vec<DVector<f64>> = tr.outputs.iter().zip(targets).map(|(y, t)| y - t).collect();
        let loss = residuals.iter().map(|r| r.norm_squared()).sum::<f64>() / denom;
        let Some((g, weight)) = grad else {
            return loss;
        };
        let hdim = self.hidden();
        let steps = inputs.len();
        // gradient w.r.t. the top layer's h at every step
        let mut dtop: Vec<DVector<f64>> = Vec::with_capacity(steps);
        for (r, cache) in residuals.iter().zip(&tr.caches[self.layers.len() - 1]) {
            let dy = r * (2.0 * weight / denom);
            g.w_hy.ger(1.0, &dy, &cache.h, 1.0);
            g.b_y += &dy;
            dtop.push(self.w_hy.tr_mul(&dy));
        }
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let mut dh_next = DVector::zeros(hdim);
            let mut dc_next = DVector::zeros(hdim);
            let mut dinputs = vec![DVector::zeros(layer.input_dim); steps];
            for t in (0..steps).rev() {
                let dh = &dtop[t] + &dh_next;
                let (dx, dh_prev, dc_prev) = layer.step_backward(&tr.caches[l][t], &dh, &dc_next, &mut g.layers[l]);
                dinputs[t] = dx;
                dh_next = dh_prev;
                dc_next = dc_prev;
            }
            dtop = dinputs;
        }
        loss
    }
}

/// `M = UᵀU` from a θ prediction with the diagonal floored at [`EPS_PD`].
pub fn predict_metric(theta: &[f64], n: usize) -> Result<DMatrix<f64>> {
    metric_from_theta_clamped(theta, n, EPS_PD)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn seq(n: usize, len: usize) -> Vec<DVector<f64>> {
        (0..len).map(|k| DVector::from_fn(n, |i, _| ((k * 7 + i * 3) as f64).sin())).collect()
    }

    #[test]
    fn constant_model_emits_bias() {
        let theta = [1.0, 0.2, -0.3, 2.0, 0.1, 3.0];
        let m = DeepLstmModel::constant(3, 4, 2, &theta).unwrap();
        for out in m.forward(&seq(3, 5), &[]).unwrap() {
            assert_eq!(out, theta.to_vec());
        }
    }

    #[test]
    fn streaming_matches_batch() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let m = DeepLstmModel::new_random(3, 6, 2, false, 3, &mut rng).unwrap();
        let xs = seq(3, 12);
        let batch = m.forward(&xs, &[]).unwrap();
        let mut st = m.stream();
        for (x, b) in xs.iter().zip(&batch) {
            let s = m.stream_step(&mut st, x, 0.0).unwrap();
            for (u, v) in s.iter().zip(b) {
                assert!((u - v).abs() <= 1e-12);
            }
        }
        // T = 1
        let one = m.forward(&xs[..1], &[]).unwrap();
        assert_eq!(one[0], m.stream_step(&mut m.stream(), &xs[0], 0.0).unwrap());
    }

    #[test]
    fn standardizer_round_trip() {
        let rows = [vec![1.0, 5.0], vec![3.0, 5.0], vec![2.0, 5.0]];
        let s = Standardizer::fit(2, rows.iter().map(|r| r.as_slice()));
        assert_eq!(s.scale[1], 1.0);
        for r in &rows {
            let back = s.denormalize(&s.normalize(r));
            for (a, b) in back.iter().zip(r) {
                assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn packed_identity_predicts_identity() {
        let m = predict_metric(&[1.0, 0.0, 0.0, 1.0, 0.0, 1.0], 3).unwrap();
        assert_eq!(m, DMatrix::identity(3, 3));
    }
}
