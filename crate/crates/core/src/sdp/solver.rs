use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::arrow::{ArrowMatrix, Slot};
use super::problem::{svec_len, svec_to_mat, LmiBlock, SdpProblem};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::MaxIter => "max_iter",
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative duality-gap target, also the infeasibility threshold on the
    /// feasibility-phase slack.
    pub tol: f64,
    /// Iteration cap of each path-following phase.
    pub max_newton: usize,
    /// Box radius on every variable during the feasibility phase.
    pub feasibility_radius: f64,
    /// The feasibility phase stops once every block has this margin.
    pub feasibility_margin: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_newton: 200,
            feasibility_radius: 1e7,
            feasibility_margin: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Flat decision vector.
    pub y: Vec<f64>,
    pub scalar_values: BTreeMap<String, f64>,
    /// Per family, per member.
    pub matrix_values: Vec<Vec<DMatrix<f64>>>,
    pub objective_value: f64,
    /// Most negative eigenvalue over all blocks at `y`.
    pub min_eigenvalue: f64,
    /// Complementarity gap `tr(XS)` at the last iterate.
    pub gap: f64,
    pub relative_gap: f64,
    /// Optimal slack of the feasibility phase (negative means strictly feasible).
    pub feasibility_slack: f64,
    pub newton_steps: usize,
}

impl SdpSolution {
    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalar_values.get(name).copied()
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

struct CompiledBlock {
    dim: usize,
    f0: Vec<f64>,
    vars: Vec<usize>,
    coeffs: Vec<Vec<f64>>,
}

struct Compiled {
    n: usize,
    blocks: Vec<CompiledBlock>,
    c: Vec<f64>,
    slots: Vec<Slot>,
    nb: usize,
    ns: usize,
    bw: usize,
    degree: f64,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            v[i * d + j] = m[(i, j)];
        }
    }
    v
}

impl Compiled {
    fn new(blocks: &[LmiBlock], c: Vec<f64>, border: &[bool]) -> Self {
        let n = c.len();
        let mut slots = vec![Slot::Band(0); n];
        let (mut nb, mut ns) = (0, 0);
        for j in 0..n {
            if border[j] {
                slots[j] = Slot::Border(ns);
                ns += 1;
            } else {
                slots[j] = Slot::Band(nb);
                nb += 1;
            }
        }
        let mut bw = 0;
        let compiled = blocks
            .iter()
            .map(|b| {
                let band: Vec<usize> = b
                    .terms
                    .iter()
                    .filter_map(|(j, _)| match slots[*j] {
                        Slot::Band(i) => Some(i),
                        Slot::Border(_) => None,
                    })
                    .collect();
                if let (Some(lo), Some(hi)) = (band.iter().min(), band.iter().max()) {
                    bw = bw.max(hi - lo);
                }
                CompiledBlock {
                    dim: b.dim,
                    f0: row_major(&b.constant),
                    vars: b.terms.iter().map(|(j, _)| *j).collect(),
                    coeffs: b.terms.iter().map(|(_, m)| row_major(m)).collect(),
                }
            })
            .collect::<Vec<_>>();
        let degree = blocks.iter().map(|b| b.dim).sum::<usize>() as f64;
        Compiled {
            n,
            blocks: compiled,
            c,
            slots,
            nb,
            ns,
            bw,
            degree,
        }
    }

    fn objective(&self, y: &[f64]) -> f64 {
        self.c.iter().zip(y).map(|(a, b)| a * b).sum()
    }
}

/// In-place lower Cholesky of a row-major `d×d` matrix. Returns
/// `Σ log Lᵢᵢ` or `None` when not positive definite.
fn chol_in_place(a: &mut [f64], d: usize) -> Option<f64> {
    let mut logdet_half = 0.0;
    for j in 0..d {
        let mut s = a[j * d + j];
        for k in 0..j {
            s -= a[j * d + k] * a[j * d + k];
        }
        if !(s > 0.0) || !s.is_finite() {
            return None;
        }
        let l = s.sqrt();
        a[j * d + j] = l;
        logdet_half += l.ln();
        for i in (j + 1)..d {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = s / l;
        }
        for i in 0..j {
            a[i * d + j] = 0.0;
        }
    }
    Some(logdet_half)
}

/// Inverse of a lower-triangular row-major matrix.
fn lower_inverse(l: &[f64], d: usize) -> Vec<f64> {
    let mut inv = vec![0.0; d * d];
    for col in 0..d {
        for i in col..d {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in col..i {
                s -= l[i * d + k] * inv[k * d + col];
            }
            inv[i * d + col] = s / l[i * d + i];
        }
    }
    inv
}

struct Workspace {
    f: Vec<f64>,
    tmp: Vec<f64>,
    g: Vec<Vec<f64>>,
}

impl Workspace {
    fn new() -> Self {
        Workspace {
            f: Vec::new(),
            tmp: Vec::new(),
            g: Vec::new(),
        }
    }
}

fn assemble_block(block: &CompiledBlock, y: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(&block.f0);
    for (j, c) in block.vars.iter().zip(&block.coeffs) {
        let yj = y[*j];
        if yj != 0.0 {
            for (o, v) in out.iter_mut().zip(c) {
                *o += yj * v;
            }
        }
    }
}

impl Compiled {
    /// Value, gradient and Hessian of `t·cᵀy − Σ log det F(y)`.
    fn derivatives(&self, y: &[f64], t: f64, h: &mut ArrowMatrix, ws: &mut Workspace) -> Option<(f64, Vec<f64>)> {
        h.clear();
        let mut grad: Vec<f64> = self.c.iter().map(|v| t * v).collect();
        let mut phi = t * self.objective(y);
        for b in &self.blocks {
            let d = b.dim;
            assemble_block(b, y, &mut ws.f);
            phi -= 2.0 * chol_in_place(&mut ws.f, d)?;
            let linv = lower_inverse(&ws.f, d);
            let r = b.vars.len();
            if ws.g.len() < r {
                ws.g.resize(r, Vec::new());
            }
            ws.tmp.resize(d * d, 0.0);
            for (k, c) in b.coeffs.iter().enumerate() {
                // tmp = Linv · C
                for i in 0..d {
                    for j in 0..d {
                        let mut s = 0.0;
                        for q in 0..=i {
                            s += linv[i * d + q] * c[q * d + j];
                        }
                        ws.tmp[i * d + j] = s;
                    }
                }
                // G = tmp · Linvᵀ
                let g = &mut ws.g[k];
                g.resize(d * d, 0.0);
                for i in 0..d {
                    for j in 0..d {
                        let mut s = 0.0;
                        for q in 0..=j {
                            s += ws.tmp[i * d + q] * linv[j * d + q];
                        }
                        g[i * d + j] = s;
                    }
                }
                let tr: f64 = (0..d).map(|i| g[i * d + i]).sum();
                grad[b.vars[k]] -= tr;
            }
            for a in 0..r {
                let ga = &ws.g[a];
                for bb in 0..=a {
                    let gb = &ws.g[bb];
                    let v: f64 = ga[..d * d].iter().zip(&gb[..d * d]).map(|(x, z)| x * z).sum();
                    h.add(self.slots[b.vars[a]], self.slots[b.vars[bb]], v);
                }
            }
        }
        phi.is_finite().then_some((phi, grad))
    }

    fn newton_direction(&self, h: &mut ArrowMatrix, grad: &[f64]) -> Option<Vec<f64>> {
        let mut rb = vec![0.0; self.nb];
        let mut rs = vec![0.0; self.ns];
        for (j, g) in grad.iter().enumerate() {
            match self.slots[j] {
                Slot::Band(i) => rb[i] = -g,
                Slot::Border(s) => rs[s] = -g,
            }
        }
        let scale = h.max_diagonal().max(1e-300);
        let mut shift = 0.0;
        for _ in 0..8 {
            if let Some((xb, xs)) = h.solve(&rb, &rs) {
                let mut dir = vec![0.0; self.n];
                for j in 0..self.n {
                    dir[j] = match self.slots[j] {
                        Slot::Band(i) => xb[i],
                        Slot::Border(s) => xs[s],
                    };
                }
                if dir.iter().all(|v| v.is_finite()) {
                    return Some(dir);
                }
            }
            let next = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
            h.add_diagonal(next - shift);
            shift = next;
        }
        None
    }
}

impl Compiled {
    /// Initial weight `t` balancing the objective and log-det gradients.
    fn initial_t(&self, y: &[f64]) -> f64 {
        let mut h = ArrowMatrix::new(self.nb, self.ns, self.bw);
        let mut ws = Workspace::new();
        let Some((_, gphi)) = self.derivatives(y, 0.0, &mut h, &mut ws) else {
            return 1.0;
        };
        let neg_c: Vec<f64> = self.c.iter().map(|v| -v).collect();
        let (Some(hc), Some(hg)) = (
            self.newton_direction(&mut h, &neg_c),
            self.newton_direction(&mut h, &gphi.iter().map(|v| -v).collect::<Vec<_>>()),
        ) else {
            return 1.0;
        };
        // hc = H⁻¹c, hg = H⁻¹gΦ (newton_direction negates its argument)
        let chc: f64 = self.c.iter().zip(&hc).map(|(a, b)| a * b).sum();
        let chg: f64 = self.c.iter().zip(&hg).map(|(a, b)| a * b).sum();
        if chc > 0.0 {
            let t = -chg / chc;
            if t.is_finite() && t > 0.0 {
                return t.clamp(1e-6, 1e6);
            }
        }
        1.0
    }
}

/// Solves with default options except `tol` and `max_newton`.
pub fn solve(p: &SdpProblem, tol: f64, max_iter: usize) -> Result<SdpSolution> {
    solve_with(
        p,
        &SolverOptions {
            tol,
            max_newton: max_iter,
            ..SolverOptions::default()
        },
    )
}

pub fn solve_with(p: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    p.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if p.blocks().is_empty() {
        return Err(Error::Config("problem has no constraints".into()));
    }
    let n = p.num_vars();
    let y0 = p.initial_point();

    // Feasibility phase: minimize s subject to Fₖ(y) + sI ⪰ 0, s ≥ -1, |yⱼ| ≤ R.
    let radius = opts
        .feasibility_radius
        .max(10.0 * y0.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
    let mut phase1_blocks: Vec<LmiBlock> = p.blocks().to_vec();
    let slack = n;
    for b in phase1_blocks.iter_mut() {
        b.terms.push((slack, DMatrix::identity(b.dim, b.dim)));
    }
    let one = DMatrix::from_element(1, 1, 1.0);
    let mut lb = LmiBlock::new("slack >= -1", 1);
    lb.constant = one.clone();
    lb.terms.push((slack, one.clone()));
    phase1_blocks.push(lb);
    for j in 0..n {
        for sign in [1.0, -1.0] {
            let mut b = LmiBlock::new("box", 1);
            b.constant = DMatrix::from_element(1, 1, radius);
            b.terms.push((j, DMatrix::from_element(1, 1, -sign)));
            phase1_blocks.push(b);
        }
    }
    let mut c1 = vec![0.0; n + 1];
    c1[slack] = 1.0;
    let mut border1 = p.scalar_mask();
    border1.push(true);
    let comp1 = Compiled::new(&phase1_blocks, c1, &border1);

    let worst = p
        .blocks()
        .iter()
        .map(|b| crate::linalg::min_eigenvalue(&b.evaluate(&y0)))
        .fold(f64::INFINITY, f64::min);
    let mut y1 = y0.clone();
    y1.push((-worst).max(0.0) + 1.0);

    let target = -opts.feasibility_margin;
    let mut reached = y1[slack] < target;
    let mut certified_infeasible = false;
    let mut newton_steps = 0;
    if !reached {
        let mu0 = 1.0 / comp1.initial_t(&y1);
        let mut monitor = |p: &Progress| {
            if p.y[slack] < target {
                return Some(SolveStatus::Optimal);
            }
            // Every feasible point lies in the box, so this bounds the
            // optimal slack from below even with a residual.
            if p.dual_objective - radius * p.residual_l1 > opts.tol {
                return Some(SolveStatus::Infeasible);
            }
            None
        };
        let pd = primal_dual(&comp1, y1, mu0, opts, &mut monitor);
        newton_steps = pd.iterations;
        y1 = pd.y;
        reached = y1[slack] < target;
        certified_infeasible = pd.status == SolveStatus::Infeasible;
        if !reached && pd.status == SolveStatus::MaxIter {
            return Err(Error::Solver(format!(
                "feasibility phase made no progress (slack {:.3e} after {} iterations)",
                y1[slack], pd.iterations
            )));
        }
    }
    let phase1_slack = y1[slack];
    y1.truncate(n);

    if certified_infeasible || (!reached && phase1_slack > opts.tol) {
        return Ok(finish(p, y1, SolveStatus::Infeasible, f64::NAN, phase1_slack, newton_steps));
    }
    // A feasible set without interior (optimal slack within ±tol): optimize
    // over the LMIs relaxed by a little more than the slack. The reported
    // min_eigenvalue shows the relaxation.
    let relax = if phase1_slack >= -opts.tol { phase1_slack.max(0.0) + 10.0 * opts.tol } else { 0.0 };
    let mut blocks = p.blocks().to_vec();
    if relax > 0.0 {
        for b in blocks.iter_mut() {
            b.constant += DMatrix::identity(b.dim, b.dim) * relax;
        }
    }

    // Optimization phase.
    let comp2 = Compiled::new(&blocks, p.objective_vector(), &p.scalar_mask());
    let mu0 = 1.0 / comp2.initial_t(&y1);
    let pd = primal_dual(&comp2, y1, mu0, opts, &mut |_| None);
    newton_steps += pd.iterations;
    Ok(finish(p, pd.y, pd.status, pd.gap, phase1_slack, newton_steps))
}

/// Per-iteration measures handed to the caller of [`primal_dual`].
struct Progress<'a> {
    y: &'a [f64],
    /// `−Σₖ tr(F₀ₖXₖ)`: a lower bound on the optimum when `X` is feasible.
    dual_objective: f64,
    /// `‖c − tr(FX)‖₁`.
    residual_l1: f64,
}

struct PrimalDual {
    y: Vec<f64>,
    status: SolveStatus,
    gap: f64,
    iterations: usize,
}

fn block_matrix(v: &[f64], d: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, v)
}

/// Largest `α ≤ 1` keeping `A + α·dA ⪰ 0`, given the lower Cholesky
/// factor `l` of `A`.
fn max_step(l: &DMatrix<f64>, da: &DMatrix<f64>) -> f64 {
    let Some(linv) = l.clone().try_inverse() else {
        return 0.0;
    };
    let mut m = -(&linv * da * linv.transpose());
    crate::linalg::symmetrize(&mut m);
    let top = crate::linalg::max_eigenvalue(&m);
    if top <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / top
    }
}

/// Infeasible primal-dual path following with Nesterov–Todd scaling.
///
/// `y` is kept strictly feasible for the LMIs (it comes out of the
/// feasibility phase); the multipliers `X ⪰ 0` start on the central path
/// at `μ₀` and approach `tr(FⱼX) = cⱼ`. The Schur system
/// `Mᵢⱼ = Σₖ tr(FᵢWFⱼW)` has the same arrow structure as the barrier
/// Hessian.
fn primal_dual(
    comp: &Compiled,
    mut y: Vec<f64>,
    mu0: f64,
    opts: &SolverOptions,
    monitor: &mut dyn FnMut(&Progress) -> Option<SolveStatus>,
) -> PrimalDual {
    let n = comp.n;
    let nblocks = comp.blocks.len();
    let fmats: Vec<Vec<DMatrix<f64>>> = comp
        .blocks
        .iter()
        .map(|b| b.coeffs.iter().map(|c| block_matrix(c, b.dim)).collect())
        .collect();
    let mut ws = Workspace::new();
    let s_of = |y: &[f64], ws: &mut Workspace| -> Vec<DMatrix<f64>> {
        comp.blocks
            .iter()
            .map(|b| {
                assemble_block(b, y, &mut ws.f);
                block_matrix(&ws.f, b.dim)
            })
            .collect()
    };
    let mut s_blocks = s_of(&y, &mut ws);
    let mut x_blocks: Vec<DMatrix<f64>> = Vec::with_capacity(nblocks);
    for sb in &s_blocks {
        match sb.clone().try_inverse() {
            Some(inv) => {
                let mut x = inv * mu0;
                crate::linalg::symmetrize(&mut x);
                x_blocks.push(x);
            }
            None => {
                return PrimalDual {
                    y,
                    status: SolveStatus::MaxIter,
                    gap: f64::INFINITY,
                    iterations: 0,
                }
            }
        }
    }
    let cnorm = comp.c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut h = ArrowMatrix::new(comp.nb, comp.ns, comp.bw);
    let mut status = SolveStatus::MaxIter;
    let mut gap = f64::INFINITY;
    let mut best_ok = (f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let max_iter = opts.max_newton.max(1);
    for _ in 0..max_iter {
        // Factorizations and the scaling point per block.
        let mut ls = Vec::with_capacity(nblocks);
        let mut lx = Vec::with_capacity(nblocks);
        let mut w = Vec::with_capacity(nblocks);
        let mut sinv = Vec::with_capacity(nblocks);
        let mut trans = Vec::with_capacity(nblocks);
        let mut ok = true;
        let mut xs_trace = 0.0;
        for k in 0..nblocks {
            let (Some(cs), Some(cx)) = (s_blocks[k].clone().cholesky(), x_blocks[k].clone().cholesky()) else {
                ok = false;
                break;
            };
            let r = cs.l();
            let l = cx.l();
            let svd = (r.transpose() * &l).svd(true, true);
            let (Some(vt), true) = (svd.v_t, svd.singular_values.iter().all(|v| *v > 0.0)) else {
                ok = false;
                break;
            };
            let v = vt.transpose();
            let sig = DMatrix::from_diagonal(&svd.singular_values.map(|v| 1.0 / v.sqrt()));
            let g = &l * v * sig;
            w.push(&g * g.transpose());
            trans.push(g.transpose());
            sinv.push(cs.inverse());
            xs_trace += (&x_blocks[k] * &s_blocks[k]).trace();
            ls.push(r);
            lx.push(l);
        }
        if !ok {
            break;
        }
        let mu = xs_trace / comp.degree;
        // Primal residual and barrier gradient.
        let mut resid = comp.c.clone();
        let mut g = vec![0.0; n];
        for (k, b) in comp.blocks.iter().enumerate() {
            for (q, &j) in b.vars.iter().enumerate() {
                let f = &fmats[k][q];
                resid[j] -= f.dot(&x_blocks[k]);
                g[j] += f.dot(&sinv[k]);
            }
        }
        let pinf = resid.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + cnorm);
        let obj = comp.objective(&y);
        let rel = comp.degree * mu / obj.abs().max(1.0);
        gap = comp.degree * mu;
        if pinf <= 1e-6 && rel <= 1e-6 && rel < best_ok.1 {
            best_ok = (pinf, rel);
        }
        let dual_objective: f64 = -comp
            .blocks
            .iter()
            .zip(&x_blocks)
            .map(|(b, x)| block_matrix(&b.f0, b.dim).dot(x))
            .sum::<f64>();
        let residual_l1 = resid.iter().map(|v| v.abs()).sum();
        if let Some(st) = monitor(&Progress {
            y: &y,
            dual_objective,
            residual_l1,
        }) {
            status = st;
            break;
        }
        if pinf <= opts.tol.max(1e-10) && rel <= opts.tol {
            status = SolveStatus::Optimal;
            break;
        }
        // Schur matrix.
        h.clear();
        for (k, b) in comp.blocks.iter().enumerate() {
            let gs: Vec<DMatrix<f64>> = fmats[k].iter().map(|f| &trans[k] * f * trans[k].transpose()).collect();
            for a in 0..gs.len() {
                for c in 0..=a {
                    h.add(comp.slots[b.vars[a]], comp.slots[b.vars[c]], gs[a].dot(&gs[c]));
                }
            }
        }
        let direction = |rhs: &[f64], h: &mut ArrowMatrix| comp.newton_direction(h, &rhs.iter().map(|v| -v).collect::<Vec<_>>());
        let dirs_from = |dy: &[f64], sigma_mu: f64| -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
            let mut ds = Vec::with_capacity(nblocks);
            let mut dx = Vec::with_capacity(nblocks);
            for (k, b) in comp.blocks.iter().enumerate() {
                let d = b.dim;
                let mut m = DMatrix::zeros(d, d);
                for (q, &j) in b.vars.iter().enumerate() {
                    if dy[j] != 0.0 {
                        m += &fmats[k][q] * dy[j];
                    }
                }
                let mut x = &sinv[k] * sigma_mu - &x_blocks[k] - &w[k] * &m * &w[k];
                crate::linalg::symmetrize(&mut x);
                ds.push(m);
                dx.push(x);
            }
            (ds, dx)
        };
        let steps = |ds: &[DMatrix<f64>], dx: &[DMatrix<f64>]| -> (f64, f64) {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for k in 0..nblocks {
                ap = ap.min(max_step(&lx[k], &dx[k]));
                ad = ad.min(max_step(&ls[k], &ds[k]));
            }
            (ap, ad)
        };
        // Predictor (σ = 0).
        let rhs_aff: Vec<f64> = comp.c.iter().map(|v| -v).collect();
        let Some(dy_aff) = direction(&rhs_aff, &mut h) else {
            break;
        };
        let (ds_a, dx_a) = dirs_from(&dy_aff, 0.0);
        let (ap, ad) = steps(&ds_a, &dx_a);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut mu_aff = 0.0;
        for k in 0..nblocks {
            mu_aff += ((&x_blocks[k] + &dx_a[k] * ap) * (&s_blocks[k] + &ds_a[k] * ad)).trace();
        }
        mu_aff /= comp.degree;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        // Centered direction.
        let rhs: Vec<f64> = (0..n).map(|j| sigma * mu * g[j] - comp.c[j]).collect();
        let Some(dy) = direction(&rhs, &mut h) else {
            break;
        };
        let (ds, dx) = dirs_from(&dy, sigma * mu);
        let (ap, ad) = steps(&ds, &dx);
        let ap = (0.95 * ap).min(1.0);
        let ad = (0.95 * ad).min(1.0);
        for j in 0..n {
            y[j] += ad * dy[j];
        }
        for k in 0..nblocks {
            x_blocks[k] += &dx[k] * ap;
            crate::linalg::symmetrize(&mut x_blocks[k]);
        }
        s_blocks = s_of(&y, &mut ws);
        iterations += 1;
        log::trace!("pd {iterations}: mu {mu:.3e} pinf {pinf:.3e} rel {rel:.3e} sigma {sigma:.2e} steps {ap:.3}/{ad:.3}");
    }
    if status == SolveStatus::MaxIter && best_ok.0.is_finite() {
        // Numerical limit after reaching a small gap.
        status = SolveStatus::Optimal;
    }
    PrimalDual {
        y,
        status,
        gap,
        iterations,
    }
}

fn finish(
    p: &SdpProblem,
    y: Vec<f64>,
    status: SolveStatus,
    gap: f64,
    feasibility_slack: f64,
    newton_steps: usize,
) -> SdpSolution {
    let c = p.objective_vector();
    let objective_value: f64 = c.iter().zip(&y).map(|(a, b)| a * b).sum();
    let scalar_values = p
        .scalar_slots()
        .iter()
        .map(|(name, j)| (name.clone(), y[*j]))
        .collect();
    let matrix_values = p
        .families()
        .iter()
        .map(|f| {
            let len = svec_len(f.dim);
            f.offsets
                .iter()
                .map(|&o| svec_to_mat(&y[o..o + len], f.dim))
                .collect()
        })
        .collect();
    let min_eigenvalue = p
        .blocks()
        .iter()
        .map(|b| crate::linalg::min_eigenvalue(&b.evaluate(&y)))
        .fold(f64::INFINITY, f64::min);
    SdpSolution {
        status,
        relative_gap: gap / objective_value.abs().max(1.0),
        y,
        scalar_values,
        matrix_values,
        objective_value,
        min_eigenvalue,
        gap,
        feasibility_slack,
        newton_steps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::problem::SdpProblem;

    /// min χ s.t. W ⪰ I, χI ⪰ W with one 1×1 variable.
    #[test]
    fn identity_saturates_both_sides() {
        let mut p = SdpProblem::new();
        let chi = p.add_scalar("chi");
        let w = p.add_matrix_family("W", 1, 1)[0];
        let one = DMatrix::from_element(1, 1, 1.0);
        let mut lo = LmiBlock::new("W >= I", 1);
        lo.add_matrix(w, |e| e.clone()).add_constant(&(-&one));
        let mut hi = LmiBlock::new("chi I >= W", 1);
        hi.add_scalar(chi, &one).add_matrix(w, |e| -e);
        p.push(lo);
        p.push(hi);
        p.minimize(chi, 1.0);
        let s = solve(&p, 1e-8, 200).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.scalar("chi").unwrap() - 1.0).abs() < 1e-6);
        assert!((s.matrix_values[0][0][(0, 0)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_interval() {
        // x >= 2 and x <= 1
        let mut p = SdpProblem::new();
        let x = p.add_scalar("x");
        p.bound_scalar(x, Some(2.0), Some(1.0));
        p.minimize(x, 1.0);
        let s = solve(&p, 1e-8, 200).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(s.feasibility_slack > 0.0);
    }

    #[test]
    fn feasible_set_without_interior() {
        // 1 <= x <= 1
        let mut p = SdpProblem::new();
        let x = p.add_scalar("x");
        p.bound_scalar(x, Some(1.0), Some(1.0));
        p.minimize(x, -1.0);
        let s = solve(&p, 1e-8, 200).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.scalar("x").unwrap() - 1.0).abs() < 1e-6);
        assert!(s.min_eigenvalue > -1e-6);
    }

    #[test]
    fn two_by_two_eigenvalue_bound() {
        // min t s.t. tI ⪰ A for a fixed symmetric A: optimum λ_max(A).
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let mut p = SdpProblem::new();
        let t = p.add_scalar("t");
        let mut b = LmiBlock::new("tI - A", 2);
        b.add_scalar(t, &DMatrix::identity(2, 2)).add_constant(&(-&a));
        p.push(b);
        p.minimize(t, 1.0);
        let s = solve(&p, 1e-9, 200).unwrap();
        let expect = crate::linalg::max_eigenvalue(&a);
        assert!((s.objective_value - expect).abs() < 1e-7, "{} vs {expect}", s.objective_value);
    }
}
