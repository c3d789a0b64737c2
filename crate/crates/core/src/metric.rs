//! Metric algebra: recovery of `M` from CV-STEM variables, the unique
//! upper Cholesky factor and its θ-packing, and the steady-state bounds.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{eigenvalues_sym, fmt17, is_positive_definite};
use crate::{Error, Result};

/// One solution point of a CV-STEM problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSample {
    pub t: f64,
    pub x: DVector<f64>,
    /// `W̃ = νW = νM⁻¹`, with `I ⪯ W̃ ⪯ χI`.
    pub w_tilde: DMatrix<f64>,
    pub chi: f64,
    pub nu: f64,
}

impl MetricSample {
    /// `ω̲ = 1/ν`.
    pub fn omega_lower(&self) -> f64 {
        1.0 / self.nu
    }

    /// `ω̄ = χ/ν`.
    pub fn omega_upper(&self) -> f64 {
        self.chi / self.nu
    }

    /// `M = ν·W̃⁻¹`.
    pub fn metric(&self) -> Result<DMatrix<f64>> {
        metric_from_sample(self)
    }
}

/// Recovers `M = ν·W̃⁻¹` (so that `‖M‖ ≤ ν` whenever `W̃ ⪰ I`).
pub fn metric_from_sample(s: &MetricSample) -> Result<DMatrix<f64>> {
    if !(s.nu > 0.0) {
        return Err(Error::Domain(format!("nu must be positive, got {}", s.nu)));
    }
    if !is_positive_definite(&s.w_tilde) {
        return Err(Error::NotPositiveDefinite(format!(
            "W̃ at t={} has eigenvalues {:?}",
            s.t,
            eigenvalues_sym(&s.w_tilde).as_slice()
        )));
    }
    let inv = s
        .w_tilde
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("W̃ Cholesky failed".into()))?
        .inverse();
    let mut m = inv * s.nu;
    crate::linalg::symmetrize(&mut m);
    Ok(m)
}

/// Upper-triangular `U` with positive diagonal and `UᵀU = M`.
pub fn cholesky_upper(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = crate::linalg::require_square(m, "metric")?;
    let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let floor = 1e-12 * scale;
    let mut u = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= u[(k, j)] * u[(k, j)];
        }
        if !(d > floor) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite(format!(
                "pivot {j} is {d:.3e} (not positive)"
            )));
        }
        let djj = d.sqrt();
        u[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = 0.5 * (m[(j, i)] + m[(i, j)]);
            for k in 0..j {
                s -= u[(k, j)] * u[(k, i)];
            }
            u[(j, i)] = s / djj;
        }
    }
    Ok(u)
}

/// Row-major upper-triangular nonzeros of a Cholesky factor; length
/// `n(n+1)/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedTheta {
    pub entries: Vec<f64>,
}

pub fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Inverse of [`packed_len`], if `k` is triangular.
pub fn dim_from_packed_len(k: usize) -> Option<usize> {
    let n = ((((8 * k + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    (packed_len(n) == k).then_some(n)
}

/// Flat index of upper entry `(i, j)`, `i ≤ j`, in the packed layout.
pub fn packed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < n);
    i * n - i * i.saturating_sub(1) / 2 + j - i
}

pub fn pack_theta(u: &DMatrix<f64>) -> Result<PackedTheta> {
    let n = crate::linalg::require_square(u, "Cholesky factor")?;
    let mut entries = Vec::with_capacity(packed_len(n));
    for i in 0..n {
        if !(u[(i, i)] > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "diagonal entry {i} of U is {} (must be positive)",
                u[(i, i)]
            )));
        }
        for j in 0..i {
            if u[(i, j)] != 0.0 {
                return Err(Error::Shape(format!("U is not upper triangular at ({i},{j})")));
            }
        }
        entries.extend((i..n).map(|j| u[(i, j)]));
    }
    Ok(PackedTheta { entries })
}

pub fn unpack_theta(p: &PackedTheta, n: usize) -> Result<DMatrix<f64>> {
    if p.entries.len() != packed_len(n) {
        return Err(Error::Shape(format!(
            "packed theta has {} entries, expected {} for n={n}",
            p.entries.len(),
            packed_len(n)
        )));
    }
    let mut u = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            u[(i, j)] = p.entries[k];
            k += 1;
        }
        if !(u[(i, i)] > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "packed diagonal {i} is {} (must be positive)",
                u[(i, i)]
            )));
        }
    }
    Ok(u)
}

/// `M = UᵀU` from a packed factor whose diagonal is first clamped to at
/// least `floor`, so the result is positive definite for any finite input.
pub fn metric_from_theta_clamped(theta: &[f64], n: usize, floor: f64) -> Result<DMatrix<f64>> {
    if theta.len() != packed_len(n) {
        return Err(Error::Shape(format!(
            "theta has {} entries, expected {}",
            theta.len(),
            packed_len(n)
        )));
    }
    let mut u = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            u[(i, j)] = if i == j { theta[k].max(floor) } else { theta[k] };
            k += 1;
        }
    }
    Ok(u.transpose() * u)
}

/// Full pipeline for one sample: `M = νW̃⁻¹ → U → θ`.
pub fn theta_from_sample(s: &MetricSample) -> Result<PackedTheta> {
    pack_theta(&cholesky_upper(&metric_from_sample(s)?)?)
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

/// Tube radius `d̄·√χ/α` around a nominal trajectory.
pub fn tube_radius(dbar: f64, chi: f64, alpha: f64) -> Result<f64> {
    require_positive("disturbance bound", dbar)?;
    require_positive("alpha", alpha)?;
    if !(chi >= 1.0) {
        return Err(Error::Domain(format!("chi must be at least 1, got {chi}")));
    }
    Ok(dbar * chi.sqrt() / alpha)
}

/// Steady-state estimation bound `(d̄₁b̄χ + d̄₂c̄ḡν)/γ`.
#[allow(clippy::too_many_arguments)]
pub fn estimator_ss_bound(
    d1: f64,
    bbar: f64,
    d2: f64,
    cbar: f64,
    gbar: f64,
    gamma: f64,
    chi: f64,
    nu: f64,
) -> Result<f64> {
    require_positive("gamma", gamma)?;
    Ok((d1 * bbar * chi + d2 * cbar * gbar * nu) / gamma)
}

/// Controller objective `(b̄₂d̄/α)χ + λν`.
pub fn controller_objective(b2bar: f64, dbar: f64, alpha: f64, chi: f64, lambda: f64, nu: f64) -> Result<f64> {
    require_positive("alpha", alpha)?;
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda must be nonnegative, got {lambda}")));
    }
    Ok(b2bar * dbar / alpha * chi + lambda * nu)
}

/// Which steady-state bound a [`TubeBound`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceTerms {
    /// `d̄·χ/α` (plain contraction) or the tube radius `d̄√χ/α`.
    Contraction { dbar: f64 },
    /// `d̄₁b̄` and `d̄₂c̄ḡ` products of the estimator bound.
    Estimator { process: f64, measurement: f64 },
    /// `b̄₂d̄` product and penalty weight `λ` of the controller objective.
    Controller { process: f64, lambda: f64 },
}

/// Evaluated steady-state bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeBound {
    pub alpha: f64,
    pub gamma: f64,
    pub chi: f64,
    pub nu: f64,
    pub terms: DisturbanceTerms,
    pub value: f64,
}

impl TubeBound {
    pub fn contraction(dbar: f64, alpha: f64, chi: f64, nu: f64) -> Result<Self> {
        require_positive("alpha", alpha)?;
        Ok(TubeBound {
            alpha,
            gamma: alpha,
            chi,
            nu,
            terms: DisturbanceTerms::Contraction { dbar },
            value: dbar * chi / alpha,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn estimator(d1: f64, bbar: f64, d2: f64, cbar: f64, gbar: f64, alpha: f64, gamma: f64, chi: f64, nu: f64) -> Result<Self> {
        require_positive("alpha", alpha)?;
        if !(gamma > 0.0 && gamma <= alpha) {
            return Err(Error::Domain(format!("gamma must lie in (0, alpha], got {gamma}")));
        }
        Ok(TubeBound {
            alpha,
            gamma,
            chi,
            nu,
            terms: DisturbanceTerms::Estimator {
                process: d1 * bbar,
                measurement: d2 * cbar * gbar,
            },
            value: estimator_ss_bound(d1, bbar, d2, cbar, gbar, gamma, chi, nu)?,
        })
    }

    pub fn controller(b2bar: f64, dbar: f64, alpha: f64, chi: f64, lambda: f64, nu: f64) -> Result<Self> {
        Ok(TubeBound {
            alpha,
            gamma: alpha,
            chi,
            nu,
            terms: DisturbanceTerms::Controller {
                process: b2bar * dbar,
                lambda,
            },
            value: controller_objective(b2bar, dbar, alpha, chi, lambda, nu)?,
        })
    }
}

/// One row of a θ dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub trajectory: usize,
    pub index: usize,
    pub t: f64,
    pub x: DVector<f64>,
    pub theta: Vec<f64>,
}

/// Metric dataset: `(x, θ)` pairs grouped by trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricDataset {
    pub state_dim: usize,
    pub rows: Vec<DatasetRow>,
}

impl MetricDataset {
    pub fn new(state_dim: usize) -> Self {
        MetricDataset {
            state_dim,
            rows: Vec::new(),
        }
    }

    pub fn theta_dim(&self) -> usize {
        packed_len(self.state_dim)
    }

    /// Rows regrouped per trajectory id, each ordered by grid index.
    pub fn sequences(&self) -> Vec<(usize, Vec<&DatasetRow>)> {
        let mut ids: Vec<usize> = self.rows.iter().map(|r| r.trajectory).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter()
            .map(|s| {
                let mut rows: Vec<&DatasetRow> = self.rows.iter().filter(|r| r.trajectory == s).collect();
                rows.sort_by_key(|r| r.index);
                (s, rows)
            })
            .collect()
    }

    /// CSV with header `s,i,t,x0..x{n-1},theta0..theta{k-1}`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let n = self.state_dim;
        let k = self.theta_dim();
        let mut header = vec!["s".to_string(), "i".into(), "t".into()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..k).map(|i| format!("theta{i}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.trajectory.to_string(), r.index.to_string(), fmt17(r.t)];
            rec.extend(r.x.iter().map(|v| fmt17(*v)));
            rec.extend(r.theta.iter().map(|v| fmt17(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
        if header.len() < 3 || header[0] != "s" || header[1] != "i" || header[2] != "t" {
            return Err(Error::Parse("dataset header must start with s,i,t".into()));
        }
        let n = header.iter().filter(|h| h.starts_with('x')).count();
        let k = header.iter().filter(|h| h.starts_with("theta")).count();
        if n == 0 || k != packed_len(n) || header.len() != 3 + n + k {
            return Err(Error::Parse(format!(
                "dataset has {n} state and {k} theta columns; expected theta count n(n+1)/2"
            )));
        }
        let mut ds = MetricDataset::new(n);
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("").trim();
            let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}")));
            let trajectory = field(0)
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("trajectory id: {e}")))?;
            let index = field(1)
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("grid index: {e}")))?;
            let t = parse(field(2))?;
            let x = (0..n).map(|j| parse(field(3 + j))).collect::<Result<Vec<_>>>()?;
            let theta = (0..k).map(|j| parse(field(3 + n + j))).collect::<Result<Vec<_>>>()?;
            ds.rows.push(DatasetRow {
                trajectory,
                index,
                t,
                x: DVector::from_vec(x),
                theta,
            });
        }
        Ok(ds)
    }
}

/// CSV `t,x0..x{n-1},chi,nu,w0..w{n²-1}` with `W̃` row-major.
pub fn write_samples_csv<W: Write>(samples: &[MetricSample], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let n = samples.first().map_or(0, |s| s.x.len());
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend(["chi".to_string(), "nu".to_string()]);
    header.extend((0..n * n).map(|i| format!("w{i}")));
    w.write_record(&header)?;
    for s in samples {
        if s.x.len() != n || s.w_tilde.shape() != (n, n) {
            return Err(Error::Shape("metric samples of mixed dimension".into()));
        }
        let mut rec = vec![fmt17(s.t)];
        rec.extend(s.x.iter().map(|v| fmt17(*v)));
        rec.extend([fmt17(s.chi), fmt17(s.nu)]);
        rec.extend(s.w_tilde.transpose().iter().map(|v| fmt17(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv<R: Read>(reader: R) -> Result<Vec<MetricSample>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let n = header.iter().filter(|h| h.starts_with('x')).count();
    if header.first().map(String::as_str) != Some("t") || header.len() != 3 + n + n * n {
        return Err(Error::Parse("metric sample header must be t,x…,chi,nu,w…".into()));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Parse(format!("'{f}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if v.len() != header.len() {
            return Err(Error::Parse(format!("row has {} fields, header {}", v.len(), header.len())));
        }
        out.push(MetricSample {
            t: v[0],
            x: DVector::from_column_slice(&v[1..1 + n]),
            chi: v[1 + n],
            nu: v[2 + n],
            w_tilde: DMatrix::from_row_slice(n, n, &v[3 + n..]),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample(w: DMatrix<f64>, nu: f64) -> MetricSample {
        MetricSample {
            t: 0.0,
            x: DVector::zeros(w.nrows()),
            chi: 1.0,
            w_tilde: w,
            nu,
        }
    }

    #[test]
    fn sample_csv_round_trip() {
        let mut s = sample(DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 3.0 + 1e-13]), 7.25);
        s.x = DVector::from_vec(vec![0.1, -1.0 / 3.0]);
        s.t = 0.3;
        let mut buf = Vec::new();
        write_samples_csv(&[s.clone(), s.clone()], &mut buf).unwrap();
        assert_eq!(read_samples_csv(buf.as_slice()).unwrap(), vec![s.clone(), s]);
    }

    #[test]
    fn metric_recovery_examples() {
        let m = metric_from_sample(&sample(DMatrix::identity(2, 2), 2.0)).unwrap();
        assert_eq!(m, DMatrix::identity(2, 2) * 2.0);
        let m = metric_from_sample(&sample(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])), 1.0)).unwrap();
        assert_relative_eq!(m, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.25])), epsilon = 1e-15);
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(metric_from_sample(&sample(bad, 1.0)), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn cholesky_examples() {
        assert_eq!(cholesky_upper(&DMatrix::identity(3, 3)).unwrap(), DMatrix::identity(3, 3));
        let u = cholesky_upper(&DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0])).unwrap();
        assert_relative_eq!(u, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2f64.sqrt()]), epsilon = 1e-15);
        let err = cholesky_upper(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap_err();
        assert!(err.to_string().contains("pivot 1"));
    }

    #[test]
    fn packing_examples() {
        assert_eq!(packed_len(3), 6);
        assert_eq!(pack_theta(&DMatrix::identity(2, 2)).unwrap().entries, vec![1.0, 0.0, 1.0]);
        assert!(unpack_theta(&PackedTheta { entries: vec![1.0; 5] }, 3).is_err());
        assert!(pack_theta(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).is_err());
        for n in 1..8 {
            assert_eq!(dim_from_packed_len(packed_len(n)), Some(n));
            let mut k = 0;
            for i in 0..n {
                for j in i..n {
                    assert_eq!(packed_index(n, i, j), k);
                    k += 1;
                }
            }
        }
        assert_eq!(dim_from_packed_len(5), None);
    }

    #[test]
    fn bound_examples() {
        assert!((tube_radius(0.15, 3.0116, 0.58).unwrap() - 0.4488).abs() < 1e-4);
        assert!((tube_radius(0.3, 3.0116, 0.58).unwrap() - 0.8976).abs() < 2e-4);
        assert_relative_eq!(tube_radius(0.2, 1.0, 0.5).unwrap(), 0.4);
        assert!(tube_radius(-1.0, 2.0, 1.0).is_err());

        let j = estimator_ss_bound(3f64.sqrt(), 1.0, 1.0, 1.0, 1.0, 3.4970, 9.2977, 133.75).unwrap();
        assert!((j - 42.852).abs() < 0.05, "{j}");
        assert_eq!(estimator_ss_bound(0.0, 1.0, 0.0, 1.0, 1.0, 2.0, 3.0, 4.0).unwrap(), 0.0);
        let a = estimator_ss_bound(1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 3.0, 4.0).unwrap();
        let b = estimator_ss_bound(1.0, 1.0, 1.0, 1.0, 1.0, 4.0, 3.0, 4.0).unwrap();
        assert_relative_eq!(a, 2.0 * b);
        assert!(estimator_ss_bound(1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 3.0, 4.0).is_err());

        let c = controller_objective(1.0, 0.15, 0.58, 3.0116, 0.013164, 620.90).unwrap();
        assert!((c - 8.952).abs() < 0.01, "{c}");
        assert_relative_eq!(controller_objective(1.0, 0.15, 0.58, 1.0, 0.0, 9.0).unwrap(), 0.15 / 0.58);
        let lo = controller_objective(1.0, 0.15, 0.58, 2.0, 0.1, 10.0).unwrap();
        let hi = controller_objective(1.0, 0.15, 0.58, 2.0, 0.1, 20.0).unwrap();
        assert_relative_eq!(hi - lo, 0.1 * 10.0, epsilon = 1e-12);
        assert!(controller_objective(1.0, 0.15, 0.0, 2.0, 0.1, 20.0).is_err());
    }

    #[test]
    fn clamped_metric_is_pd() {
        // λmin(UᵀU) = σmin(U)², which can sit below the floor squared; the
        // factor itself is what the clamp guarantees.
        let m = metric_from_theta_clamped(&[-3.0, 0.2, 0.5], 2, 1e-6).unwrap();
        let u = cholesky_upper(&m).unwrap();
        assert!((u[(0, 0)] - 1e-6).abs() < 1e-12);
        assert!((u[(1, 1)] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn dataset_csv_round_trip() {
        let mut ds = MetricDataset::new(2);
        ds.rows.push(DatasetRow {
            trajectory: 0,
            index: 0,
            t: 0.0,
            x: DVector::from_vec(vec![1.0, 2.0]),
            theta: vec![1.0, 0.5, 2.0],
        });
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("s,i,t,x0,x1,theta0,theta1,theta2\n"));
        assert_eq!(MetricDataset::read_csv(buf.as_slice()).unwrap(), ds);
    }
}
