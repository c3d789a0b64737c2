use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Uniform;

use crate::{Error, Result};

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Source of the cell state feeding the output-gate peephole.
///
/// Only `Current` is the model; `Previous` exists so the gradient check
/// can be shown to catch a forward pass that disagrees with the backward
/// pass.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputPeephole {
    Current,
    Previous,
}

/// One peephole LSTM layer. Peephole weights are diagonal and stored as
/// vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub input_dim: usize,
    pub hidden: usize,
    pub w_xi: DMatrix<f64>,
    pub w_hi: DMatrix<f64>,
    pub w_ci: DVector<f64>,
    pub b_i: DVector<f64>,
    pub w_xf: DMatrix<f64>,
    pub w_hf: DMatrix<f64>,
    pub w_cf: DVector<f64>,
    pub b_f: DVector<f64>,
    pub w_xc: DMatrix<f64>,
    pub w_hc: DMatrix<f64>,
    pub b_c: DVector<f64>,
    pub w_xo: DMatrix<f64>,
    pub w_ho: DMatrix<f64>,
    pub w_co: DVector<f64>,
    pub b_o: DVector<f64>,
}

pub(crate) const LAYER_TENSORS: [&str; 15] = [
    "w_xi", "w_hi", "w_ci", "b_i", "w_xf", "w_hf", "w_cf", "b_f", "w_xc", "w_hc", "b_c", "w_xo", "w_ho", "w_co", "b_o",
];

/// Intermediate values of one step, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub x: DVector<f64>,
    pub h_prev: DVector<f64>,
    pub c_prev: DVector<f64>,
    pub i: DVector<f64>,
    pub f: DVector<f64>,
    pub g: DVector<f64>,
    pub c: DVector<f64>,
    pub o: DVector<f64>,
    pub tanh_c: DVector<f64>,
    pub h: DVector<f64>,
}

impl LstmLayer {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        let m = |r, c| DMatrix::zeros(r, c);
        let v = |r| DVector::zeros(r);
        LstmLayer {
            input_dim,
            hidden,
            w_xi: m(hidden, input_dim),
            w_hi: m(hidden, hidden),
            w_ci: v(hidden),
            b_i: v(hidden),
            w_xf: m(hidden, input_dim),
            w_hf: m(hidden, hidden),
            w_cf: v(hidden),
            b_f: v(hidden),
            w_xc: m(hidden, input_dim),
            w_hc: m(hidden, hidden),
            b_c: v(hidden),
            w_xo: m(hidden, input_dim),
            w_ho: m(hidden, hidden),
            w_co: v(hidden),
            b_o: v(hidden),
        }
    }

    /// Uniform(−1/√H, 1/√H) weights, zero biases except the forget gate (+1).
    pub fn random<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(input_dim, hidden);
        let r = 1.0 / (hidden as f64).sqrt();
        let dist = Uniform::new_inclusive(-r, r).expect("valid range");
        for (name, t) in LAYER_TENSORS.iter().zip(layer.tensors_mut()) {
            if name.starts_with('w') {
                t.iter_mut().for_each(|v| *v = rng.sample(dist));
            }
        }
        layer.b_f.fill(1.0);
        layer
    }

    pub(crate) fn tensors(&self) -> [&[f64]; 15] {
        [
            self.w_xi.as_slice(),
            self.w_hi.as_slice(),
            self.w_ci.as_slice(),
            self.b_i.as_slice(),
            self.w_xf.as_slice(),
            self.w_hf.as_slice(),
            self.w_cf.as_slice(),
            self.b_f.as_slice(),
            self.w_xc.as_slice(),
            self.w_hc.as_slice(),
            self.b_c.as_slice(),
            self.w_xo.as_slice(),
            self.w_ho.as_slice(),
            self.w_co.as_slice(),
            self.b_o.as_slice(),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 15] {
        [
            self.w_xi.as_mut_slice(),
            self.w_hi.as_mut_slice(),
            self.w_ci.as_mut_slice(),
            self.b_i.as_mut_slice(),
            self.w_xf.as_mut_slice(),
            self.w_hf.as_mut_slice(),
            self.w_cf.as_mut_slice(),
            self.b_f.as_mut_slice(),
            self.w_xc.as_mut_slice(),
            self.w_hc.as_mut_slice(),
            self.b_c.as_mut_slice(),
            self.w_xo.as_mut_slice(),
            self.w_ho.as_mut_slice(),
            self.w_co.as_mut_slice(),
            self.b_o.as_mut_slice(),
        ]
    }

    /// `(rows, cols)` of each tensor in [`LAYER_TENSORS`] order.
    pub(crate) fn shapes(&self) -> [(usize, usize); 15] {
        let (h, i) = (self.hidden, self.input_dim);
        [
            (h, i),
            (h, h),
            (h, 1),
            (h, 1),
            (h, i),
            (h, h),
            (h, 1),
            (h, 1),
            (h, i),
            (h, h),
            (h, 1),
            (h, i),
            (h, h),
            (h, 1),
            (h, 1),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub(crate) fn step_cached(
        &self,
        x: &DVector<f64>,
        h_prev: &DVector<f64>,
        c_prev: &DVector<f64>,
        peephole: OutputPeephole,
    ) -> StepCache {
        let a_i = &self.w_xi * x + &self.w_hi * h_prev + self.w_ci.component_mul(c_prev) + &self.b_i;
        let a_f = &self.w_xf * x + &self.w_hf * h_prev + self.w_cf.component_mul(c_prev) + &self.b_f;
        let a_g = &self.w_xc * x + &self.w_hc * h_prev + &self.b_c;
        let i = a_i.map(sigmoid);
        let f = a_f.map(sigmoid);
        let g = a_g.map(f64::tanh);
        let c = f.component_mul(c_prev) + i.component_mul(&g);
        let peep = match peephole {
            OutputPeephole::Current => &c,
            OutputPeephole::Previous => c_prev,
        };
        let a_o = &self.w_xo * x + &self.w_ho * h_prev + self.w_co.component_mul(peep) + &self.b_o;
        let o = a_o.map(sigmoid);
        let tanh_c = c.map(f64::tanh);
        let h = o.component_mul(&tanh_c);
        StepCache {
            x: x.clone(),
            h_prev: h_prev.clone(),
            c_prev: c_prev.clone(),
            i,
            f,
            g,
            c,
            o,
            tanh_c,
            h,
        }
    }

    /// Backpropagates one step. `dh`, `dc` are the loss gradients w.r.t.
    /// this step's `h` and `c`; returns gradients w.r.t. `(x, h_prev,
    /// c_prev)` and accumulates parameter gradients into `grad`.
    pub(crate) fn step_backward(
        &self,
        cache: &StepCache,
        dh: &DVector<f64>,
        dc: &DVector<f64>,
        grad: &mut LstmLayer,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let o = &cache.o;
        let da_o = dh.component_mul(&cache.tanh_c).component_mul(&o.map(|v| v * (1.0 - v)));
        let dc = dc
            + dh.component_mul(o).component_mul(&cache.tanh_c.map(|v| 1.0 - v * v))
            + da_o.component_mul(&self.w_co);
        let da_i = dc.component_mul(&cache.g).component_mul(&cache.i.map(|v| v * (1.0 - v)));
        let da_f = dc.component_mul(&cache.c_prev).component_mul(&cache.f.map(|v| v * (1.0 - v)));
        let da_g = dc.component_mul(&cache.i).component_mul(&cache.g.map(|v| 1.0 - v * v));

        grad.w_xi.ger(1.0, &da_i, &cache.x, 1.0);
        grad.w_hi.ger(1.0, &da_i, &cache.h_prev, 1.0);
        grad.w_ci += da_i.component_mul(&cache.c_prev);
        grad.b_i += &da_i;
        grad.w_xf.ger(1.0, &da_f, &cache.x, 1.0);
        grad.w_hf.ger(1.0, &da_f, &cache.h_prev, 1.0);
        grad.w_cf += da_f.component_mul(&cache.c_prev);
        grad.b_f += &da_f;
        grad.w_xc.ger(1.0, &da_g, &cache.x, 1.0);
        grad.w_hc.ger(1.0, &da_g, &cache.h_prev, 1.0);
        grad.b_c += &da_g;
        grad.w_xo.ger(1.0, &da_o, &cache.x, 1.0);
        grad.w_ho.ger(1.0, &da_o, &cache.h_prev, 1.0);
        grad.w_co += da_o.component_mul(&cache.c);
        grad.b_o += &da_o;

        let dx = self.w_xi.tr_mul(&da_i) + self.w_xf.tr_mul(&da_f) + self.w_xc.tr_mul(&da_g) + self.w_xo.tr_mul(&da_o);
        let dh_prev =
            self.w_hi.tr_mul(&da_i) + self.w_hf.tr_mul(&da_f) + self.w_hc.tr_mul(&da_g) + self.w_ho.tr_mul(&da_o);
        let dc_prev = dc.component_mul(&cache.f) + da_i.component_mul(&self.w_ci) + da_f.component_mul(&self.w_cf);
        (dx, dh_prev, dc_prev)
    }
}

/// One step of the peephole cell: `(h, c)` from `(x, h_prev, c_prev)`.
pub fn lstm_step(
    layer: &LstmLayer,
    x: &DVector<f64>,
    h_prev: &DVector<f64>,
    c_prev: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if x.len() != layer.input_dim || h_prev.len() != layer.hidden || c_prev.len() != layer.hidden {
        return Err(Error::Shape(format!(
            "lstm step expects input {} and state {}, got {}, {}, {}",
            layer.input_dim,
            layer.hidden,
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let s = layer.step_cached(x, h_prev, c_prev, OutputPeephole::Current);
    Ok((s.h, s.c))
}
