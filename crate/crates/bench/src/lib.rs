//! Fixtures shared by the benchmarks.

use ncm_core::dynamics::{integrate, make_lorenz, Trajectory};
use ncm_core::neural::DeepLstmModel;
use ncm_core::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Unforced Lorenz trajectory from `[-1, 2, 3]`.
pub fn lorenz_trajectory(steps: usize) -> Trajectory {
    let sys = make_lorenz();
    let x0 = DVector::from_vec(vec![-1.0, 2.0, 3.0]);
    integrate(&sys, &x0, &mut |_, _| DVector::zeros(0), &mut |_| DVector::zeros(0), 0.1, steps)
        .expect("Lorenz stays bounded")
}

/// Random model for a 3-state system with its input sequence.
pub fn random_model(hidden: usize, layers: usize, len: usize) -> (DeepLstmModel, Vec<DVector<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = DeepLstmModel::new_random(3, hidden, layers, false, 11, &mut rng).expect("valid sizes");
    let xs = (0..len).map(|_| DVector::from_fn(3, |_, _| rng.random_range(-10.0..10.0))).collect();
    (model, xs)
}
