use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicalSystem, Trajectory};
use crate::{Error, Result};

/// Circular obstacle in the position plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Obstacle {
    /// Distance from the boundary (negative inside).
    pub fn clearance(&self, p: [f64; 2]) -> f64 {
        ((p[0] - self.center[0]).powi(2) + (p[1] - self.center[1]).powi(2)).sqrt() - self.radius
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub steps: usize,
    pub dt: f64,
    pub input_lower: f64,
    pub input_upper: f64,
    /// Obstacles are inflated by this radius (the tracking tube).
    pub tube_radius: f64,
    /// Extra inflation used only inside the penalty.
    pub margin: f64,
    /// Initial augmented-Lagrangian penalties.
    pub terminal_weight: f64,
    pub obstacle_weight: f64,
    /// State indices of the planar position.
    pub position: [usize; 2],
    /// Projected-gradient iterations per round.
    pub max_iters: usize,
    /// Multiplier updates; a penalty grows by `weight_growth` whenever its
    /// constraint violation did not shrink fourfold over a round.
    pub rounds: usize,
    pub weight_growth: f64,
    pub terminal_tol: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            steps: 500,
            dt: 0.1,
            input_lower: 0.0,
            input_upper: 1.0,
            tube_radius: 0.0,
            margin: 0.1,
            terminal_weight: 1.0,
            obstacle_weight: 1.0,
            position: [0, 1],
            max_iters: 400,
            rounds: 40,
            weight_growth: 10.0,
            terminal_tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    /// States on the grid; `inputs[k]` is held over `[t_k, t_{k+1})` and
    /// the last row is zero.
    pub trajectory: Trajectory,
    /// `Σ‖uₖ‖²Δt`.
    pub effort: f64,
    pub terminal_error: f64,
    /// `min_k min_obs (distance − radius − tube_radius)`.
    pub min_clearance: f64,
    pub iterations: usize,
    pub rounds: usize,
    pub success: bool,
}

const MAX_PENALTY: f64 = 1e8;

struct Rollout {
    states: Vec<DVector<f64>>,
    /// RK4 stage points `s₁..s₄` per interval.
    stages: Vec<[DVector<f64>; 4]>,
}

fn rollout(sys: &dyn DynamicalSystem, x0: &DVector<f64>, u: &[DVector<f64>], dt: f64) -> Rollout {
    let empty = DVector::zeros(0);
    let mut states = Vec::with_capacity(u.len() + 1);
    let mut stages = Vec::with_capacity(u.len());
    let mut x = x0.clone();
    states.push(x.clone());
    for (k, uk) in u.iter().enumerate() {
        let t = k as f64 * dt;
        let f = |z: &DVector<f64>, s: f64| sys.field(z, s, uk, &empty);
        let s1 = x.clone();
        let k1 = f(&s1, t);
        let s2 = &x + &k1 * (0.5 * dt);
        let k2 = f(&s2, t + 0.5 * dt);
        let s3 = &x + &k2 * (0.5 * dt);
        let k3 = f(&s3, t + 0.5 * dt);
        let s4 = &x + &k3 * dt;
        let k4 = f(&s4, t + dt);
        x = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        stages.push([s1, s2, s3, s4]);
        states.push(x.clone());
    }
    Rollout { states, stages }
}

/// Vector-Jacobian product of one RK4 step: given `λ = ∂J/∂x_{k+1}`,
/// returns `(∂J/∂x_k, ∂J/∂u_k)` through the step.
fn rk4_vjp(
    sys: &dyn DynamicalSystem,
    stages: &[DVector<f64>; 4],
    u: &DVector<f64>,
    t: f64,
    dt: f64,
    lam: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let times = [t, t + 0.5 * dt, t + 0.5 * dt, t + dt];
    let jx = |i: usize| sys.jacobian(&stages[i], times[i]) + sys.input_jacobian(&stages[i], u, times[i]);
    let ju = |i: usize| -> DMatrix<f64> { sys.input_matrix(&stages[i], times[i]) };
    let mut gk = [lam * (dt / 6.0), lam * (dt / 3.0), lam * (dt / 3.0), lam * (dt / 6.0)];
    let mut gx = lam.clone();
    let mut gu = DVector::zeros(u.len());
    // stage 4: s4 = x + dt·k3
    let gs4 = jx(3).tr_mul(&gk[3]);
    gu += ju(3).tr_mul(&gk[3]);
    gx += &gs4;
    gk[2] += &gs4 * dt;
    // stage 3: s3 = x + dt/2·k2
    let gs3 = jx(2).tr_mul(&gk[2]);
    gu += ju(2).tr_mul(&gk[2]);
    gx += &gs3;
    gk[1] += &gs3 * (0.5 * dt);
    // stage 2: s2 = x + dt/2·k1
    let gs2 = jx(1).tr_mul(&gk[1]);
    gu += ju(1).tr_mul(&gk[1]);
    gx += &gs2;
    gk[0] += &gs2 * (0.5 * dt);
    let gs1 = jx(0).tr_mul(&gk[0]);
    gu += ju(0).tr_mul(&gk[0]);
    gx += &gs1;
    (gx, gu)
}

struct Objective<'a> {
    sys: &'a dyn DynamicalSystem,
    x0: &'a DVector<f64>,
    goal: &'a DVector<f64>,
    obstacles: &'a [Obstacle],
    cfg: &'a PlannerConfig,
    w_t: f64,
    w_o: f64,
    /// Terminal multiplier.
    lam: DVector<f64>,
    /// Obstacle multipliers, `mu[k][j]` for state `k` and obstacle `j`.
    mu: Vec<Vec<f64>>,
}

impl Objective<'_> {
    /// Constraint values `reach − dist` (≤ 0 when clear).
    fn gaps(&self, x: &DVector<f64>) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let [ix, iy] = self.cfg.position;
        let p = [x[ix], x[iy]];
        self.obstacles.iter().map(move |o| {
            let dx = p[0] - o.center[0];
            let dy = p[1] - o.center[1];
            let dist = (dx * dx + dy * dy).sqrt().max(1e-9);
            (o.radius + self.cfg.tube_radius + self.cfg.margin - dist, dx / dist, dy / dist)
        })
    }

    fn state_cost(&self, k: usize, x: &DVector<f64>, grad: Option<&mut DVector<f64>>) -> f64 {
        let mut cost = 0.0;
        let mut g = [0.0, 0.0];
        for (j, (v, ux, uy)) in self.gaps(x).enumerate() {
            let mu = self.mu[k][j];
            let shifted = (mu + self.w_o * v).max(0.0);
            cost += (shifted * shifted - mu * mu) / (2.0 * self.w_o);
            g[0] -= shifted * ux;
            g[1] -= shifted * uy;
        }
        if let Some(gr) = grad {
            let [ix, iy] = self.cfg.position;
            gr[ix] += g[0];
            gr[iy] += g[1];
        }
        cost
    }

    fn update_multipliers(&mut self, states: &[DVector<f64>]) {
        let terminal = &states[states.len() - 1] - self.goal;
        self.lam += terminal * self.w_t;
        for k in 1..states.len() {
            let gaps: Vec<f64> = self.gaps(&states[k]).map(|g| g.0).collect();
            for (j, v) in gaps.into_iter().enumerate() {
                self.mu[k][j] = (self.mu[k][j] + self.w_o * v).max(0.0);
            }
        }
    }

    /// `(‖x_N − goal‖, max(0, max gap))`.
    fn violations(&self, states: &[DVector<f64>]) -> (f64, f64) {
        let terminal = (&states[states.len() - 1] - self.goal).norm();
        let worst = states[1..]
            .iter()
            .flat_map(|x| self.gaps(x).map(|g| g.0).collect::<Vec<_>>())
            .fold(0.0_f64, f64::max);
        (terminal, worst)
    }

    fn value(&self, u: &[DVector<f64>]) -> f64 {
        let r = rollout(self.sys, self.x0, u, self.cfg.dt);
        self.value_of(&r, u)
    }

    fn value_of(&self, r: &Rollout, u: &[DVector<f64>]) -> f64 {
        let effort: f64 = u.iter().map(|v| v.norm_squared()).sum::<f64>() * self.cfg.dt;
        let n = r.states.len() - 1;
        let e = &r.states[n] - self.goal;
        let term = self.lam.dot(&e) + 0.5 * self.w_t * e.norm_squared();
        let obs: f64 = r.states.iter().enumerate().skip(1).map(|(k, x)| self.state_cost(k, x, None)).sum();
        if r.states.iter().all(|x| x.iter().all(|v| v.is_finite())) {
            effort + term + obs
        } else {
            f64::INFINITY
        }
    }

    fn value_and_grad(&self, u: &[DVector<f64>]) -> (f64, Vec<DVector<f64>>) {
        let r = rollout(self.sys, self.x0, u, self.cfg.dt);
        let value = self.value_of(&r, u);
        let n = u.len();
        let mut lam = (&r.states[n] - self.goal) * self.w_t + &self.lam;
        self.state_cost(n, &r.states[n], Some(&mut lam));
        let mut grad = vec![DVector::zeros(0); n];
        for k in (0..n).rev() {
            let (gx, gu) = rk4_vjp(self.sys, &r.stages[k], &u[k], k as f64 * self.cfg.dt, self.cfg.dt, &lam);
            grad[k] = gu + &u[k] * (2.0 * self.cfg.dt);
            lam = gx;
            if k > 0 {
                self.state_cost(k, &r.states[k], Some(&mut lam));
            }
        }
        (value, grad)
    }
}

fn dot(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn project(u: &mut [DVector<f64>], lo: f64, hi: f64) {
    for v in u.iter_mut() {
        v.iter_mut().for_each(|e| *e = e.clamp(lo, hi));
    }
}

fn axpy(u: &[DVector<f64>], a: f64, d: &[DVector<f64>]) -> Vec<DVector<f64>> {
    u.iter().zip(d).map(|(x, y)| x + y * a).collect()
}

/// Projected gradient on the input box with limited-memory quasi-Newton
/// scaling on the free coordinates and Armijo backtracking along the
/// projection arc.
fn descend(obj: &Objective, u: &mut Vec<DVector<f64>>, iters: usize) -> usize {
    const MEMORY: usize = 20;
    let (lo, hi) = (obj.cfg.input_lower, obj.cfg.input_upper);
    let (mut f, mut g) = obj.value_and_grad(u);
    let mut pairs: std::collections::VecDeque<(Vec<DVector<f64>>, Vec<DVector<f64>>, f64)> =
        std::collections::VecDeque::new();
    let mut used = 0;
    for _ in 0..iters {
        // Projected-gradient optimality measure.
        let pg = u
            .iter()
            .zip(&g)
            .flat_map(|(x, gx)| x.iter().zip(gx.iter()).map(|(a, b)| ((a - b).clamp(lo, hi) - a).abs()).collect::<Vec<_>>())
            .fold(0.0_f64, f64::max);
        if pg < 1e-10 {
            break;
        }
        used += 1;
        let bound = |x: f64, gx: f64| (x <= lo + 1e-12 && gx > 0.0) || (x >= hi - 1e-12 && gx < 0.0);
        let mask: Vec<DVector<f64>> = u
            .iter()
            .zip(&g)
            .map(|(x, gx)| DVector::from_fn(x.len(), |i, _| if bound(x[i], gx[i]) { 0.0 } else { 1.0 }))
            .collect();
        let masked = |v: &[DVector<f64>]| -> Vec<DVector<f64>> { v.iter().zip(&mask).map(|(a, m)| a.component_mul(m)).collect() };
        // Two-loop recursion on the free coordinates.
        let mut q = masked(&g);
        let mut alphas = Vec::with_capacity(pairs.len());
        for (sv, yv, rho) in pairs.iter().rev() {
            let a = rho * dot(&masked(sv), &q);
            q = axpy(&q, -a, &masked(yv));
            alphas.push(a);
        }
        if let Some((sv, yv, _)) = pairs.back() {
            let (sm, ym) = (masked(sv), masked(yv));
            let yy = dot(&ym, &ym);
            let sy = dot(&sm, &ym);
            if yy > 0.0 && sy > 0.0 {
                q.iter_mut().for_each(|v| *v *= sy / yy);
            }
        } else {
            let gmax = g.iter().flat_map(|v| v.iter()).fold(0.0_f64, |m, v| m.max(v.abs()));
            let scale = if gmax > 0.0 { 0.1 / gmax } else { 1.0 };
            q.iter_mut().for_each(|v| *v *= scale);
        }
        for ((sv, yv, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(&masked(yv), &q);
            q = axpy(&q, a - b, &masked(sv));
        }
        let mut dir: Vec<DVector<f64>> = masked(&q).into_iter().map(|v| -v).collect();
        if dot(&dir, &g) >= 0.0 {
            pairs.clear();
            let gmax = g.iter().flat_map(|v| v.iter()).fold(0.0_f64, |m, v| m.max(v.abs()));
            dir = masked(&g).into_iter().map(|v| v * (-0.1 / gmax.max(1e-300))).collect();
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let mut trial = axpy(u, step, &dir);
            project(&mut trial, lo, hi);
            let moved: Vec<DVector<f64>> = trial.iter().zip(u.iter()).map(|(a, b)| a - b).collect();
            let slope = dot(&g, &moved);
            let ft = obj.value(&trial);
            if slope < 0.0 && ft <= f + 1e-4 * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((next, fnext)) = accepted else {
            if pairs.is_empty() {
                break;
            }
            pairs.clear();
            continue;
        };
        let (_, gnext) = obj.value_and_grad(&next);
        let sv: Vec<DVector<f64>> = next.iter().zip(u.iter()).map(|(a, b)| a - b).collect();
        let yv: Vec<DVector<f64>> = gnext.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&sv, &yv);
        if sy > 1e-12 * dot(&sv, &sv).sqrt() * dot(&yv, &yv).sqrt() {
            if pairs.len() == MEMORY {
                pairs.pop_front();
            }
            pairs.push_back((sv, yv, 1.0 / sy));
        }
        let rel = (f - fnext) / f.abs().max(1e-12);
        *u = next;
        f = fnext;
        g = gnext;
        if rel < 1e-15 {
            break;
        }
    }
    used
}

/// Minimum-effort input sequence from `x0` to `goal` around circular
/// obstacles, by direct transcription over RK4 with held inputs.
pub fn plan_nominal_best(
    sys: &dyn DynamicalSystem,
    x0: &DVector<f64>,
    goal: &DVector<f64>,
    obstacles: &[Obstacle],
    cfg: &PlannerConfig,
    warm_start: Option<&[DVector<f64>]>,
) -> Result<PlanResult> {
    let n = sys.state_dim();
    let m = sys.input_dim();
    if x0.len() != n || goal.len() != n {
        return Err(Error::Shape(format!("start and goal must have dimension {n}")));
    }
    if m == 0 {
        return Err(Error::Config(format!("system '{}' has no inputs to plan", sys.name())));
    }
    if cfg.steps == 0 || !(cfg.dt > 0.0) || !(cfg.input_upper >= cfg.input_lower) {
        return Err(Error::Config("planner needs steps ≥ 1, dt > 0 and a nonempty input box".into()));
    }
    if cfg.position.iter().any(|&i| i >= n) {
        return Err(Error::Config("position indices out of range".into()));
    }
    let mut u: Vec<DVector<f64>> = match warm_start {
        Some(w) if w.len() >= cfg.steps => w[..cfg.steps].to_vec(),
        _ => vec![DVector::from_element(m, 0.0_f64.clamp(cfg.input_lower, cfg.input_upper)); cfg.steps],
    };
    project(&mut u, cfg.input_lower, cfg.input_upper);
    let mut obj = Objective {
        sys,
        x0,
        goal,
        obstacles,
        cfg,
        w_t: cfg.terminal_weight,
        w_o: cfg.obstacle_weight,
        lam: DVector::zeros(n),
        mu: vec![vec![0.0; obstacles.len()]; cfg.steps + 1],
    };
    let mut iterations = 0;
    let mut rounds = 0;
    let mut prev = (f64::INFINITY, f64::INFINITY);
    let mut result;
    loop {
        rounds += 1;
        iterations += descend(&obj, &mut u, cfg.max_iters);
        result = evaluate(sys, x0, goal, obstacles, cfg, &u)?;
        let states = &result.trajectory.states;
        let viol = obj.violations(states);
        log::debug!(
            "planner round {rounds}: terminal {:.3e} gap {:.3e} clearance {:.3e} effort {:.5} penalties {:.1e}/{:.1e}",
            viol.0,
            viol.1,
            result.min_clearance,
            result.effort,
            obj.w_t,
            obj.w_o
        );
        if result.success || rounds >= cfg.rounds {
            break;
        }
        obj.update_multipliers(states);
        if viol.0 > cfg.terminal_tol && viol.0 > 0.25 * prev.0 {
            obj.w_t = (obj.w_t * cfg.weight_growth).min(MAX_PENALTY);
        }
        if viol.1 > 0.0 && viol.1 > 0.25 * prev.1 {
            obj.w_o = (obj.w_o * cfg.weight_growth).min(MAX_PENALTY);
        }
        prev = viol;
    }
    result.iterations = iterations;
    result.rounds = rounds;
    Ok(result)
}

/// As [`plan_nominal_best`], but a plan missing the terminal tolerance or
/// the inflated clearance is an error.
pub fn plan_nominal(
    sys: &dyn DynamicalSystem,
    x0: &DVector<f64>,
    goal: &DVector<f64>,
    obstacles: &[Obstacle],
    cfg: &PlannerConfig,
) -> Result<PlanResult> {
    let r = plan_nominal_best(sys, x0, goal, obstacles, cfg, None)?;
    if !r.success {
        return Err(Error::PlanningFailed(format!(
            "terminal error {:.4e} (tol {:.1e}), min clearance {:.4e} after {} iterations in {} rounds",
            r.terminal_error, cfg.terminal_tol, r.min_clearance, r.iterations, r.rounds
        )));
    }
    Ok(r)
}

fn evaluate(
    sys: &dyn DynamicalSystem,
    x0: &DVector<f64>,
    goal: &DVector<f64>,
    obstacles: &[Obstacle],
    cfg: &PlannerConfig,
    u: &[DVector<f64>],
) -> Result<PlanResult> {
    let r = rollout(sys, x0, u, cfg.dt);
    if let Some(k) = r.states.iter().position(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(Error::IntegrationDiverged {
            step: k,
            context: "planner rollout".into(),
        });
    }
    let [ix, iy] = cfg.position;
    let min_clearance = r
        .states
        .iter()
        .flat_map(|x| obstacles.iter().map(move |o| o.clearance([x[ix], x[iy]]) - cfg.tube_radius))
        .fold(f64::INFINITY, f64::min);
    let terminal_error = (&r.states[cfg.steps] - goal).norm();
    let effort = u.iter().map(|v| v.norm_squared()).sum::<f64>() * cfg.dt;
    let times = (0..=cfg.steps).map(|k| k as f64 * cfg.dt).collect();
    let mut trajectory = Trajectory::new(times, r.states)?;
    let mut inputs = u.to_vec();
    inputs.push(DVector::zeros(sys.input_dim()));
    trajectory.inputs = Some(inputs);
    let success = terminal_error <= cfg.terminal_tol && min_clearance >= 0.0;
    Ok(PlanResult {
        trajectory,
        effort,
        terminal_error,
        min_clearance,
        iterations: 0,
        rounds: 0,
        success,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{make_spacecraft, LinearSystem};

    #[test]
    fn adjoint_matches_finite_differences() {
        let sys = make_spacecraft();
        let x0 = DVector::from_vec(vec![0.0, 0.0, 0.3, 0.1, -0.2, 0.05]);
        let goal = DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let obstacles = [Obstacle {
            center: [0.2, 0.1],
            radius: 0.3,
        }];
        let cfg = PlannerConfig {
            steps: 6,
            ..PlannerConfig::default()
        };
        let obj = Objective {
            sys: &sys,
            x0: &x0,
            goal: &goal,
            obstacles: &obstacles,
            cfg: &cfg,
            w_t: 3.0,
            w_o: 5.0,
            lam: DVector::from_vec(vec![0.1, -0.2, 0.0, 0.3, 0.0, 0.0]),
            mu: vec![vec![0.5]; 7],
        };
        let u: Vec<DVector<f64>> = (0..6).map(|k| DVector::from_fn(8, |i, _| 0.1 * ((k * 8 + i) as f64).sin().abs())).collect();
        let (_, g) = obj.value_and_grad(&u);
        for k in [0, 3, 5] {
            for i in [0, 2, 7] {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[k][i] += 1e-6;
                dn[k][i] -= 1e-6;
                let fd = (obj.value(&up) - obj.value(&dn)) / 2e-6;
                assert!((fd - g[k][i]).abs() < 1e-6 * fd.abs().max(1.0), "k={k} i={i}: {fd} vs {}", g[k][i]);
            }
        }
    }

    #[test]
    fn double_integrator_reaches_goal() {
        let sys = LinearSystem::double_integrator();
        let cfg = PlannerConfig {
            steps: 50,
            dt: 0.1,
            input_lower: -1.0,
            input_upper: 1.0,
            position: [0, 1],
            ..PlannerConfig::default()
        };
        let r = plan_nominal(&sys, &DVector::zeros(2), &DVector::from_vec(vec![1.0, 0.0]), &[], &cfg).unwrap();
        assert!(r.terminal_error < 1e-2);
        let inputs = r.trajectory.inputs.as_ref().unwrap();
        assert!(inputs.iter().all(|u| u.iter().all(|v| (-1.0..=1.0).contains(v))));
    }
}
