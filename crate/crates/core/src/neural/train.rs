use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lstm::OutputPeephole;
use super::model::{DeepLstmModel, Standardizer};
use crate::metric::MetricDataset;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Whole trajectories per SGD step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub test_fraction: f64,
    /// Training stops once the test MSE drops below this.
    pub early_stop: f64,
    pub seed: u64,
    pub layers: usize,
    pub hidden: usize,
    pub time_input: bool,
    /// Global gradient-norm clip; off when `None`.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            batch_size: 1,
            learning_rate: 1e-2,
            test_fraction: 0.2,
            early_stop: 1e-3,
            seed: 0,
            layers: 2,
            hidden: 64,
            time_input: false,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.early_stop > 0.0) {
            return Err(Error::Config("early_stop must be positive".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction)));
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.layers == 0 || self.hidden == 0 {
            return Err(Error::Config("learning_rate, batch_size, layers and hidden must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss over the epoch's SGD steps, evaluated before each update.
    pub train_mse: f64,
    pub test_mse: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
    pub stopped_early: bool,
    pub train_trajectories: Vec<usize>,
    pub test_trajectories: Vec<usize>,
}

impl TrainReport {
    pub fn final_test_mse(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |e| e.test_mse)
    }
}

pub(crate) struct Sequence {
    pub inputs: Vec<DVector<f64>>,
    pub targets: Vec<DVector<f64>>,
}

fn raw_sequences(ds: &MetricDataset, time_input: bool) -> Vec<(usize, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    ds.sequences()
        .into_iter()
        .map(|(id, rows)| {
            let xs = rows
                .iter()
                .map(|r| {
                    let mut v = r.x.as_slice().to_vec();
                    if time_input {
                        v.push(r.t);
                    }
                    v
                })
                .collect();
            let ys = rows.iter().map(|r| r.theta.clone()).collect();
            (id, xs, ys)
        })
        .collect()
}

/// Mean squared error in normalized units over whole sequences.
pub(crate) fn mse(model: &DeepLstmModel, seqs: &[Sequence]) -> f64 {
    let mut total = 0.0;
    let mut rows = 0usize;
    for s in seqs {
        let l = model.loss_and_grad(&s.inputs, &s.targets, None, OutputPeephole::Current);
        total += l * s.targets.len() as f64;
        rows += s.targets.len();
    }
    total / rows.max(1) as f64
}

/// Trains a stacked LSTM on a θ dataset with plain SGD and BPTT.
pub fn train(ds: &MetricDataset, cfg: &TrainConfig) -> Result<(DeepLstmModel, TrainReport)> {
    cfg.validate()?;
    if ds.rows.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let raw = raw_sequences(ds, cfg.time_input);
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.shuffle(&mut rng);
    let n_test = ((raw.len() as f64) * cfg.test_fraction).round() as usize;
    let n_test = n_test.max(1);
    if n_test >= raw.len() {
        return Err(Error::Config(format!(
            "{} trajectories cannot be split into nonempty train and test sets",
            raw.len()
        )));
    }
    let (test_idx, train_idx) = order.split_at(n_test);
    let mut train_idx = train_idx.to_vec();
    let mut test_idx = test_idx.to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let input_dim = ds.state_dim + cfg.time_input as usize;
    let k = ds.theta_dim();
    let input_norm = Standardizer::fit(input_dim, train_idx.iter().flat_map(|&s| raw[s].1.iter().map(|v| v.as_slice())));
    let output_norm = Standardizer::fit(k, train_idx.iter().flat_map(|&s| raw[s].2.iter().map(|v| v.as_slice())));
    let to_seq = |s: usize| Sequence {
        inputs: raw[s].1.iter().map(|v| input_norm.normalize(v)).collect(),
        targets: raw[s].2.iter().map(|v| output_norm.normalize(v)).collect(),
    };
    let train_set: Vec<Sequence> = train_idx.iter().map(|&s| to_seq(s)).collect();
    let test_set: Vec<Sequence> = test_idx.iter().map(|&s| to_seq(s)).collect();

    let mut model = DeepLstmModel::new_random(ds.state_dim, cfg.hidden, cfg.layers, cfg.time_input, cfg.seed, &mut rng)?;
    // Zero readout: the initial prediction is the target mean.
    model.w_hy.fill(0.0);
    model.input_norm = input_norm.clone();
    model.output_norm = output_norm.clone();

    let mut history = Vec::new();
    let mut stopped_early = false;
    let mut batch_order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        batch_order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in batch_order.chunks(cfg.batch_size) {
            let mut grad = model.zeros_like();
            let w = 1.0 / chunk.len() as f64;
            for &s in chunk {
                let seq = &train_set[s];
                loss_sum += model.loss_and_grad(&seq.inputs, &seq.targets, Some((&mut grad, w)), OutputPeephole::Current);
            }
            sgd_update(&mut model, &grad, cfg.learning_rate, cfg.clip_norm);
        }
        let train_mse = loss_sum / train_set.len() as f64;
        let test_mse = mse(&model, &test_set);
        if !train_mse.is_finite() || !test_mse.is_finite() || !model.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.push(EpochStats {
            epoch,
            train_mse,
            test_mse,
        });
        log::debug!("epoch {epoch}: train {train_mse:.6e} test {test_mse:.6e}");
        if test_mse < cfg.early_stop {
            stopped_early = true;
            break;
        }
    }
    let report = TrainReport {
        history,
        stopped_early,
        train_trajectories: train_idx.iter().map(|&s| raw[s].0).collect(),
        test_trajectories: test_idx.iter().map(|&s| raw[s].0).collect(),
    };
    Ok((model, report))
}

fn sgd_update(model: &mut DeepLstmModel, grad: &DeepLstmModel, lr: f64, clip: Option<f64>) {
    let mut grads: Vec<Vec<f64>> = Vec::new();
    grad.visit(|_, g| grads.push(g.to_vec()));
    let mut step = lr;
    if let Some(c) = clip {
        let norm = grads.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        if norm > c {
            step *= c / norm;
        }
    }
    let mut k = 0;
    model.visit_mut(|_, p| {
        for (p, g) in p.iter_mut().zip(&grads[k]) {
            *p -= step * g;
        }
        k += 1;
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::DatasetRow;

    fn dataset(trajectories: usize, len: usize, theta: impl Fn(usize, usize) -> Vec<f64>) -> MetricDataset {
        let mut ds = MetricDataset::new(2);
        for s in 0..trajectories {
            for i in 0..len {
                ds.rows.push(DatasetRow {
                    trajectory: s,
                    index: i,
                    t: i as f64 * 0.1,
                    x: DVector::from_vec(vec![(s as f64 + i as f64 * 0.3).sin(), (s as f64 * 0.7 - i as f64 * 0.2).cos()]),
                    theta: theta(s, i),
                });
            }
        }
        ds
    }

    #[test]
    fn constant_target_is_learned() {
        let ds = dataset(5, 8, |_, _| vec![2.0, 0.5, 1.5]);
        let cfg = TrainConfig {
            epochs: 200,
            hidden: 8,
            early_stop: 1e-6,
            seed: 4,
            ..TrainConfig::default()
        };
        let (_, report) = train(&ds, &cfg).unwrap();
        assert!(report.final_test_mse() < 1e-6, "{}", report.final_test_mse());
        assert!(report.history.len() <= 200);
    }

    #[test]
    fn small_steps_descend() {
        let ds = dataset(2, 10, |s, i| vec![1.0 + 0.1 * i as f64, s as f64, 2.0 - 0.05 * i as f64]);
        let cfg = TrainConfig {
            epochs: 8,
            hidden: 6,
            learning_rate: 1e-3,
            test_fraction: 0.5,
            early_stop: 1e-12,
            ..TrainConfig::default()
        };
        let (_, report) = train(&ds, &cfg).unwrap();
        assert_eq!(report.train_trajectories.len(), 1);
        let losses: Vec<f64> = report.history.iter().map(|e| e.train_mse).collect();
        for w in losses.windows(2) {
            assert!(w[1] <= w[0], "{losses:?}");
        }
    }

    #[test]
    fn single_trajectory_cannot_be_split() {
        let ds = dataset(1, 4, |_, _| vec![1.0, 0.0, 1.0]);
        assert!(matches!(train(&ds, &TrainConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn huge_learning_rate_diverges_cleanly() {
        let ds = dataset(4, 6, |s, i| vec![1e3 * (s + i) as f64, 0.0, 1.0]);
        let cfg = TrainConfig {
            epochs: 50,
            hidden: 4,
            learning_rate: 1e12,
            early_stop: 1e-12,
            ..TrainConfig::default()
        };
        match train(&ds, &cfg) {
            Err(Error::TrainingDiverged { .. }) => {}
            Ok((m, r)) => panic!("expected divergence, got finite={} mse={}", m.is_finite(), r.final_test_mse()),
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}
