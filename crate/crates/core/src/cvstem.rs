//! Discretized CV-STEM problems along sampled trajectories.
//!
//! Three variants share the decision variables `{W̃ᵢ}`, `χ` (and `ν`):
//!
//! * contraction: `(W̃ᵢ−W̃ᵢ₋₁)/Δt − AW̃ᵢ − W̃ᵢAᵀ − 2αW̃ᵢ ⪰ 0`, cost `d̄χ/α`;
//! * estimator: `−(W̃ᵢ−W̃ᵢ₋₁)/Δt − W̃ᵢA − AᵀW̃ᵢ + 2νCᵀC − 2αW̃ᵢ ⪰ 0`,
//!   cost `(d̄₁b̄χ + d̄₂c̄ḡν)/γ`;
//! * controller: `(W̃ᵢ−W̃ᵢ₋₁)/Δt − AW̃ᵢ − W̃ᵢAᵀ + 2νB₁B₁ᵀ − 2αW̃ᵢ ⪰ 0`
//!   with the SDC matrix `A`, cost `b̄₂d̄χ/α + λν`;
//!
//! plus `I ⪯ W̃ᵢ ⪯ χI` at every grid point. At `i = 0` the difference
//! term is dropped.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicalSystem, Trajectory};
use crate::linalg::min_eigenvalue;
use crate::metric::{theta_from_sample, DatasetRow, MetricDataset, MetricSample};
use crate::sdp::{solve_with, LmiBlock, MatrixVar, ScalarVar, SdpProblem, SdpSolution, SolveStatus, SolverOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Contraction,
    Estimator,
    Controller,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "contraction" => Ok(Variant::Contraction),
            "estimator" => Ok(Variant::Estimator),
            "controller" => Ok(Variant::Controller),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvstemConfig {
    pub variant: Variant,
    pub alpha_grid: Vec<f64>,
    pub delta_t: f64,
    /// `γ = gamma_ratio·α` (estimator only).
    pub gamma_ratio: f64,
    /// Weight on `ν` (controller only).
    pub lambda: f64,
    pub nu_min: f64,
    pub nu_max: f64,
    pub tol: f64,
    pub max_newton: usize,
}

impl Default for CvstemConfig {
    fn default() -> Self {
        CvstemConfig {
            variant: Variant::Estimator,
            alpha_grid: default_alpha_grid(),
            delta_t: 0.1,
            gamma_ratio: 1.0,
            lambda: 0.0,
            nu_min: 1e-6,
            nu_max: 1e6,
            tol: 1e-8,
            max_newton: 200,
        }
    }
}

impl CvstemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_grid.is_empty() {
            return Err(Error::Config("alpha grid is empty".into()));
        }
        if self.alpha_grid.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::Config("alpha grid must be strictly positive".into()));
        }
        if self.alpha_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("alpha grid must be sorted ascending".into()));
        }
        if !(self.delta_t > 0.0) {
            return Err(Error::Config(format!("delta_t must be positive, got {}", self.delta_t)));
        }
        if !(self.gamma_ratio > 0.0 && self.gamma_ratio <= 1.0) {
            return Err(Error::Config(format!("gamma_ratio must lie in (0, 1], got {}", self.gamma_ratio)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(self.nu_min > 0.0 && self.nu_max > self.nu_min) {
            return Err(Error::Config("need 0 < nu_min < nu_max".into()));
        }
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_newton: self.max_newton,
            ..SolverOptions::default()
        }
    }

    /// `α` grid from `lo` to `hi` inclusive in steps of `step`.
    pub fn linear_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=n).map(|k| lo + k as f64 * step).collect()
    }
}

/// 21 log-spaced points per decade over `[0.1, 10]`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=40).map(|k| 10f64.powf(-1.0 + k as f64 / 20.0)).collect()
}

/// An assembled problem together with the handles needed to read it back.
#[derive(Debug, Clone)]
pub struct CvstemProblem {
    pub sdp: SdpProblem,
    pub variant: Variant,
    pub alpha: f64,
    pub gamma: f64,
    pub w: Vec<MatrixVar>,
    pub chi: ScalarVar,
    pub nu: Option<ScalarVar>,
    pub times: Vec<f64>,
    pub states: Vec<nalgebra::DVector<f64>>,
}

impl CvstemProblem {
    /// Metric samples at every grid point of a solved problem.
    pub fn samples(&self, sol: &SdpSolution) -> Vec<MetricSample> {
        let chi = sol.y[self.chi.flat_index()];
        let nu = self.nu.map_or(1.0, |v| sol.y[v.flat_index()]);
        self.w
            .iter()
            .enumerate()
            .map(|(i, v)| MetricSample {
                t: self.times[i],
                x: self.states[i].clone(),
                w_tilde: sol.matrix_values[v.family][v.member].clone(),
                chi,
                nu,
            })
            .collect()
    }
}

fn check_grid(traj: &Trajectory, dt: f64) -> Result<()> {
    if traj.steps() < 1 {
        return Err(Error::Config("trajectory needs at least one step".into()));
    }
    if (traj.dt() - dt).abs() > 1e-9 * dt.max(1.0) {
        return Err(Error::Config(format!(
            "delta_t {dt} does not match the trajectory spacing {}",
            traj.dt()
        )));
    }
    Ok(())
}

struct Skeleton {
    p: SdpProblem,
    w: Vec<MatrixVar>,
    chi: ScalarVar,
    nu: Option<ScalarVar>,
}

fn skeleton(n: usize, count: usize, with_nu: bool, nu_bounds: (f64, f64)) -> Skeleton {
    let mut p = SdpProblem::new();
    let chi = p.add_scalar("chi");
    let nu = with_nu.then(|| p.add_scalar("nu"));
    let w = p.add_matrix_family("W", n, count);
    let eye = DMatrix::<f64>::identity(n, n);
    for (i, &v) in w.iter().enumerate() {
        let mut lo = LmiBlock::new(format!("W[{i}] - I"), n);
        lo.add_matrix(v, |e| e.clone()).add_constant(&(-&eye));
        p.push(lo);
        let mut hi = LmiBlock::new(format!("chi I - W[{i}]"), n);
        hi.add_scalar(chi, &eye).add_matrix(v, |e| -e);
        p.push(hi);
        p.hint_matrix(v, &(&eye * 2.0));
    }
    p.hint_scalar(chi, 3.0);
    if let Some(nu) = nu {
        p.bound_scalar(nu, Some(nu_bounds.0), Some(nu_bounds.1));
        p.hint_scalar(nu, 1.0);
    }
    Skeleton { p, w, chi, nu }
}

/// Adds `s·(W̃ᵢ − W̃ᵢ₋₁)/Δt + L(W̃ᵢ) + ν·Q ⪰ 0` at grid point `i`.
fn push_differential(
    sk: &mut Skeleton,
    i: usize,
    dt: f64,
    sign: f64,
    lin: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
    nu_term: Option<DMatrix<f64>>,
) {
    let n = sk.w[i].dim;
    let mut b = LmiBlock::new(format!("differential[{i}]"), n);
    if i > 0 {
        b.add_matrix(sk.w[i], |e| lin(e) + e * (sign / dt));
        b.add_matrix(sk.w[i - 1], |e| e * (-sign / dt));
    } else {
        b.add_matrix(sk.w[i], |e| lin(e));
    }
    if let (Some(nu), Some(q)) = (sk.nu, nu_term) {
        b.add_scalar(nu, &q);
    }
    sk.p.push(b);
}

fn finish(sk: Skeleton, traj: &Trajectory, variant: Variant, alpha: f64, gamma: f64) -> CvstemProblem {
    CvstemProblem {
        sdp: sk.p,
        variant,
        alpha,
        gamma,
        w: sk.w,
        chi: sk.chi,
        nu: sk.nu,
        times: traj.times.clone(),
        states: traj.states.clone(),
    }
}

pub fn assemble_contraction(traj: &Trajectory, sys: &dyn DynamicalSystem, alpha: f64, dt: f64) -> Result<CvstemProblem> {
    check_grid(traj, dt)?;
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    let n = sys.state_dim();
    let mut sk = skeleton(n, traj.len(), false, (0.0, 0.0));
    for i in 0..traj.len() {
        let a = sys.jacobian(&traj.states[i], traj.times[i]);
        push_differential(&mut sk, i, dt, 1.0, |e| -(&a * e) - e * a.transpose() - e * (2.0 * alpha), None);
    }
    sk.p.minimize(sk.chi, sys.bounds().d / alpha);
    Ok(finish(sk, traj, Variant::Contraction, alpha, alpha))
}

pub fn assemble_estimator(
    traj: &Trajectory,
    sys: &dyn DynamicalSystem,
    alpha: f64,
    gamma: f64,
    dt: f64,
    nu_bounds: (f64, f64),
) -> Result<CvstemProblem> {
    check_grid(traj, dt)?;
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    let n = sys.state_dim();
    let mut sk = skeleton(n, traj.len(), true, nu_bounds);
    for i in 0..traj.len() {
        let (x, t) = (&traj.states[i], traj.times[i]);
        let a = sys.jacobian(x, t);
        let c = sys.output_jacobian(x, t);
        let ctc = c.transpose() * &c * 2.0;
        push_differential(&mut sk, i, dt, -1.0, |e| -(e * &a) - a.transpose() * e - e * (2.0 * alpha), Some(ctc));
    }
    let b = sys.bounds();
    sk.p.minimize(sk.chi, b.d1 * b.b / gamma);
    if let Some(nu) = sk.nu {
        sk.p.minimize(nu, b.d2 * b.c * b.g / gamma);
    }
    Ok(finish(sk, traj, Variant::Estimator, alpha, gamma))
}

pub fn assemble_controller(
    traj: &Trajectory,
    sys: &dyn DynamicalSystem,
    alpha: f64,
    lambda: f64,
    dt: f64,
    nu_bounds: (f64, f64),
) -> Result<CvstemProblem> {
    check_grid(traj, dt)?;
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda must be nonnegative, got {lambda}")));
    }
    let n = sys.state_dim();
    let mut sk = skeleton(n, traj.len(), true, nu_bounds);
    for i in 0..traj.len() {
        let (x, t) = (&traj.states[i], traj.times[i]);
        let a = sys
            .sdc_matrix(x, t)
            .ok_or_else(|| Error::Config(format!("system '{}' has no SDC factorization", sys.name())))?;
        let b1 = sys.input_matrix(x, t);
        let bbt = &b1 * b1.transpose() * 2.0;
        push_differential(&mut sk, i, dt, 1.0, |e| -(&a * e) - e * a.transpose() - e * (2.0 * alpha), Some(bbt));
    }
    let b = sys.bounds();
    sk.p.minimize(sk.chi, b.b2 * b.d / alpha);
    if let Some(nu) = sk.nu {
        sk.p.minimize(nu, lambda);
    }
    Ok(finish(sk, traj, Variant::Controller, alpha, alpha))
}

pub fn assemble(traj: &Trajectory, sys: &dyn DynamicalSystem, alpha: f64, cfg: &CvstemConfig) -> Result<CvstemProblem> {
    let nu_bounds = (cfg.nu_min, cfg.nu_max);
    match cfg.variant {
        Variant::Contraction => assemble_contraction(traj, sys, alpha, cfg.delta_t),
        Variant::Estimator => assemble_estimator(traj, sys, alpha, cfg.gamma_ratio * alpha, cfg.delta_t, nu_bounds),
        Variant::Controller => assemble_controller(traj, sys, alpha, cfg.lambda, cfg.delta_t, nu_bounds),
    }
}

/// One point of a `J*(α)` curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaPoint {
    pub alpha: f64,
    pub status: SolveStatus,
    /// Only meaningful when `status` is optimal.
    pub objective: f64,
    pub chi: f64,
    pub nu: f64,
}

#[derive(Debug, Clone)]
pub struct LineSearchResult {
    pub alpha_star: f64,
    pub j_star: f64,
    pub samples: Vec<MetricSample>,
    pub curve: Vec<AlphaPoint>,
}

impl LineSearchResult {
    /// The point of the curve at `α*`.
    pub fn optimum(&self) -> &AlphaPoint {
        self.curve
            .iter()
            .find(|p| p.alpha == self.alpha_star)
            .expect("alpha_star comes from the curve")
    }
}

/// Solves one problem; `(point, samples)` with samples only when optimal.
pub fn solve_at(traj: &Trajectory, sys: &dyn DynamicalSystem, alpha: f64, cfg: &CvstemConfig) -> Result<(AlphaPoint, Option<Vec<MetricSample>>)> {
    let prob = assemble(traj, sys, alpha, cfg)?;
    let sol = solve_with(&prob.sdp, &cfg.solver_options())?;
    let chi = sol.y[prob.chi.flat_index()];
    let nu = prob.nu.map_or(1.0, |v| sol.y[v.flat_index()]);
    let point = AlphaPoint {
        alpha,
        status: sol.status,
        objective: sol.objective_value,
        chi,
        nu,
    };
    let samples = sol.is_optimal().then(|| prob.samples(&sol));
    Ok((point, samples))
}

/// Solves the configured variant for every `α` in the grid and keeps the
/// minimizer of `J`. Ties go to the larger `α`.
pub fn line_search(traj: &Trajectory, sys: &dyn DynamicalSystem, cfg: &CvstemConfig) -> Result<LineSearchResult> {
    cfg.validate()?;
    let results: Vec<(AlphaPoint, Option<Vec<MetricSample>>)> = cfg
        .alpha_grid
        .par_iter()
        .map(|&a| solve_at(traj, sys, a, cfg))
        .collect::<Result<_>>()?;
    let mut best: Option<usize> = None;
    for (k, (p, s)) in results.iter().enumerate() {
        if s.is_none() {
            continue;
        }
        best = match best {
            None => Some(k),
            Some(b) => {
                let jb = results[b].0.objective;
                let tie = (p.objective - jb).abs() <= 1e-9 * jb.abs().max(1.0);
                if p.objective < jb || tie {
                    Some(k)
                } else {
                    Some(b)
                }
            }
        };
    }
    let Some(best) = best else {
        let listing: Vec<String> = results.iter().map(|(p, _)| format!("alpha={}: {}", p.alpha, p.status)).collect();
        return Err(Error::NoFeasibleAlpha(listing.join(", ")));
    };
    let curve: Vec<AlphaPoint> = results.iter().map(|(p, _)| p.clone()).collect();
    let (point, samples) = results.into_iter().nth(best).expect("index in range");
    Ok(LineSearchResult {
        alpha_star: point.alpha,
        j_star: point.objective,
        samples: samples.expect("feasible"),
        curve,
    })
}

#[derive(Debug, Clone)]
pub struct DatasetOutcome {
    pub dataset: MetricDataset,
    pub per_trajectory: Vec<LineSearchResult>,
    /// `max_s J*(α*(x_s), x_s)`.
    pub j_star_cv: f64,
}

/// Independent line searches, one result per trajectory.
pub fn line_search_each(trajs: &[Trajectory], sys: &dyn DynamicalSystem, cfg: &CvstemConfig) -> Vec<Result<LineSearchResult>> {
    trajs
        .par_iter()
        .enumerate()
        .map(|(s, tr)| line_search(tr, sys, cfg).map_err(|e| e.context(format!("trajectory {s}"))))
        .collect()
}

/// The grid point minimizing the mean `J(α)` over all curves, among the
/// points where every curve is optimal. Returns `(α, mean J)`.
pub fn pooled_alpha(curves: &[&[AlphaPoint]]) -> Option<(f64, f64)> {
    let first = curves.first()?;
    let mut best: Option<(f64, f64)> = None;
    for (k, p) in first.iter().enumerate() {
        let mut sum = 0.0;
        let mut ok = true;
        for c in curves {
            match c.get(k) {
                Some(q) if q.alpha == p.alpha && q.status == SolveStatus::Optimal => sum += q.objective,
                _ => ok = false,
            }
        }
        let mean = sum / curves.len() as f64;
        if ok && best.map_or(true, |(_, j)| mean < j) {
            best = Some((p.alpha, mean));
        }
    }
    best
}

/// Line search per trajectory, then `M = νW̃⁻¹ → U → θ` at every sample.
pub fn build_dataset(trajs: &[Trajectory], sys: &dyn DynamicalSystem, cfg: &CvstemConfig) -> Result<DatasetOutcome> {
    if trajs.is_empty() {
        return Err(Error::Config("need at least one trajectory".into()));
    }
    let per: Vec<LineSearchResult> = line_search_each(trajs, sys, cfg).into_iter().collect::<Result<_>>()?;
    let dataset = dataset_from_samples(sys.state_dim(), per.iter().map(|r| r.samples.as_slice()))?;
    let j_star_cv = per.iter().map(|r| r.j_star).fold(f64::NEG_INFINITY, f64::max);
    Ok(DatasetOutcome {
        dataset,
        per_trajectory: per,
        j_star_cv,
    })
}

pub fn dataset_from_samples<'a>(n: usize, runs: impl Iterator<Item = &'a [MetricSample]>) -> Result<MetricDataset> {
    let mut ds = MetricDataset::new(n);
    for (s, samples) in runs.enumerate() {
        for (i, smp) in samples.iter().enumerate() {
            let theta = theta_from_sample(smp).map_err(|e| e.context(format!("(s={s}, i={i})")))?;
            ds.rows.push(DatasetRow {
                trajectory: s,
                index: i,
                t: smp.t,
                x: smp.x.clone(),
                theta: theta.entries,
            });
        }
    }
    Ok(ds)
}

/// Smallest eigenvalue of each differential LMI after recovering
/// `M = νW̃⁻¹` from the samples and mapping it back to `W̃ = νM⁻¹`.
///
/// The check rebuilds every block from the system directly (it does not
/// reuse the assembled problem) and uses the same backward difference.
pub fn round_trip_residuals(
    samples: &[MetricSample],
    sys: &dyn DynamicalSystem,
    variant: Variant,
    alpha: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    let mut w = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let m = s.metric().map_err(|e| e.context(format!("sample {i}")))?;
        let inv = m
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(format!("recovered M at sample {i}")))?
            .inverse();
        w.push(inv * s.nu);
    }
    let mut out = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let wd = if i > 0 { (&w[i] - &w[i - 1]) / dt } else { DMatrix::zeros(w[i].nrows(), w[i].ncols()) };
        let wi = &w[i];
        let expr = match variant {
            Variant::Contraction => {
                let a = sys.jacobian(&s.x, s.t);
                &wd - &a * wi - wi * a.transpose() - wi * (2.0 * alpha)
            }
            Variant::Estimator => {
                let a = sys.jacobian(&s.x, s.t);
                let c = sys.output_jacobian(&s.x, s.t);
                -&wd - wi * &a - a.transpose() * wi + c.transpose() * c * (2.0 * s.nu) - wi * (2.0 * alpha)
            }
            Variant::Controller => {
                let a = sys
                    .sdc_matrix(&s.x, s.t)
                    .ok_or_else(|| Error::Config(format!("system '{}' has no SDC factorization", sys.name())))?;
                let b1 = sys.input_matrix(&s.x, s.t);
                &wd - &a * wi - wi * a.transpose() + &b1 * b1.transpose() * (2.0 * s.nu) - wi * (2.0 * alpha)
            }
        };
        out.push(min_eigenvalue(&crate::linalg::sym(&expr)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::make_linear_test;
    use nalgebra::DVector;

    fn constant_traj(x: f64, n_steps: usize, dt: f64) -> Trajectory {
        let times = (0..=n_steps).map(|k| k as f64 * dt).collect();
        Trajectory::new(times, vec![DVector::from_element(1, x); n_steps + 1]).unwrap()
    }

    #[test]
    fn block_count() {
        let sys = make_linear_test(-1.0);
        let p = assemble_contraction(&constant_traj(0.0, 4, 0.1), &sys, 0.5, 0.1).unwrap();
        assert_eq!(p.sdp.blocks().len(), 5 + 2 * 5);
        assert!(matches!(assemble_contraction(&constant_traj(0.0, 4, 0.1), &sys, 0.5, 0.2), Err(Error::Config(_))));
    }

    #[test]
    fn scalar_contraction_optimum_is_one() {
        let sys = make_linear_test(-1.0);
        let p = assemble_contraction(&constant_traj(0.0, 1, 0.1), &sys, 0.5, 0.1).unwrap();
        let s = solve_with(&p.sdp, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.y[p.chi.flat_index()] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn line_search_prefers_fastest_feasible_rate() {
        let sys = make_linear_test(-1.0);
        let cfg = CvstemConfig {
            variant: Variant::Contraction,
            alpha_grid: vec![0.25, 0.5, 0.75],
            ..CvstemConfig::default()
        };
        let r = line_search(&constant_traj(0.0, 3, 0.1), &sys, &cfg).unwrap();
        assert_eq!(r.alpha_star, 0.75);
        assert!((r.j_star - 1.0 / 0.75).abs() < 1e-6);
    }

    #[test]
    fn line_search_reports_all_infeasible() {
        let sys = make_linear_test(-1.0);
        let cfg = CvstemConfig {
            variant: Variant::Contraction,
            alpha_grid: vec![1.5, 2.0],
            ..CvstemConfig::default()
        };
        let err = line_search(&constant_traj(0.0, 3, 0.1), &sys, &cfg).unwrap_err();
        assert!(matches!(err, Error::NoFeasibleAlpha(ref m) if m.contains("infeasible")), "{err}");
    }

    #[test]
    fn unstable_estimator_needs_large_nu() {
        // Static W̃ = 1 with ν ≥ 1 + α satisfies 2 − 2ν ≤ −2α.
        let sys = make_linear_test(1.0);
        let p = assemble_estimator(&constant_traj(0.0, 2, 0.1), &sys, 2.0, 2.0, 0.1, (1e-6, 1e6)).unwrap();
        let s = solve_with(&p.sdp, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        let nu = s.y[p.nu.unwrap().flat_index()];
        assert!((nu - 3.0).abs() < 1e-5, "{nu}");
    }

    #[test]
    fn default_grid_is_log_spaced() {
        let g = default_alpha_grid();
        assert_eq!(g.len(), 41);
        assert!((g[0] - 0.1).abs() < 1e-15 && (g[40] - 10.0).abs() < 1e-12);
        assert!((g[20] - 1.0).abs() < 1e-12);
    }
}
