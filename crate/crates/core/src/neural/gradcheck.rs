use nalgebra::DVector;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lstm::OutputPeephole;
use super::model::DeepLstmModel;

/// Inputs and targets of one sequence, both already normalized.
#[derive(Debug, Clone)]
pub struct GradSample {
    pub inputs: Vec<DVector<f64>>,
    pub targets: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Number of randomly chosen parameters (all when larger than the model).
    pub count: usize,
    pub seed: u64,
    /// Denominator floor of the relative error. Central differences at
    /// step `h` carry round-off of order `ε·L/h` (≈1e-10 here), so smaller
    /// gradients cannot be resolved relatively.
    pub floor: f64,
    #[doc(hidden)]
    pub peephole: OutputPeephole,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-6,
            count: 200,
            seed: 0,
            floor: 1e-4,
            peephole: OutputPeephole::Current,
        }
    }
}

/// Analytic BPTT gradient of the sequence loss, flattened in visiting order.
pub fn loss_gradient(model: &DeepLstmModel, s: &GradSample) -> (f64, Vec<f64>) {
    let mut g = model.zeros_like();
    let loss = model.loss_and_grad(&s.inputs, &s.targets, Some((&mut g, 1.0)), OutputPeephole::Current);
    let mut flat = Vec::with_capacity(model.num_params());
    g.visit(|_, t| flat.extend_from_slice(t));
    (loss, flat)
}

/// Max relative error `|a − n| / max(|a|, |n|, floor)` between backprop and
/// central differences over a random parameter subset.
pub fn gradient_check(model: &DeepLstmModel, s: &GradSample, opts: &GradCheckOptions) -> f64 {
    let (_, analytic) = loss_gradient(model, s);
    let total = analytic.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let picks: Vec<usize> = if opts.count >= total {
        (0..total).collect()
    } else {
        let mut v = sample(&mut rng, total, opts.count).into_vec();
        v.sort_unstable();
        v
    };
    let mut probe = model.clone();
    let mut worst = 0.0_f64;
    for &p in &picks {
        let orig = get_param(&probe, p);
        set_param(&mut probe, p, orig + opts.step);
        let up = probe.loss_and_grad(&s.inputs, &s.targets, None, opts.peephole);
        set_param(&mut probe, p, orig - opts.step);
        let down = probe.loss_and_grad(&s.inputs, &s.targets, None, opts.peephole);
        set_param(&mut probe, p, orig);
        let numeric = (up - down) / (2.0 * opts.step);
        let a = analytic[p];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
        worst = worst.max(rel);
    }
    worst
}

fn get_param(m: &DeepLstmModel, mut idx: usize) -> f64 {
    let mut out = f64::NAN;
    m.visit(|_, t| {
        if idx < t.len() && out.is_nan() {
            out = t[idx];
            idx = usize::MAX;
        } else if idx != usize::MAX {
            idx -= t.len();
        }
    });
    out
}

fn set_param(m: &mut DeepLstmModel, mut idx: usize, v: f64) {
    let mut done = false;
    m.visit_mut(|_, t| {
        if done {
            return;
        }
        if idx < t.len() {
            t[idx] = v;
            done = true;
        } else {
            idx -= t.len();
        }
    });
}
