use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;

use crate::{Error, Result};

pub fn svec_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Basis element for coordinate `(p, q)`, `p ≤ q`: `e_p e_pᵀ` on the
/// diagonal, `(e_p e_qᵀ + e_q e_pᵀ)/√2` off it. Coordinates are ordered
/// row-major over the upper triangle.
pub fn svec_basis(dim: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(svec_len(dim));
    for p in 0..dim {
        for q in p..dim {
            let mut e = DMatrix::zeros(dim, dim);
            if p == q {
                e[(p, p)] = 1.0;
            } else {
                e[(p, q)] = std::f64::consts::FRAC_1_SQRT_2;
                e[(q, p)] = std::f64::consts::FRAC_1_SQRT_2;
            }
            out.push(e);
        }
    }
    out
}

pub fn mat_to_svec(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(svec_len(d));
    for p in 0..d {
        for q in p..d {
            if p == q {
                out.push(m[(p, p)]);
            } else {
                out.push(std::f64::consts::SQRT_2 * 0.5 * (m[(p, q)] + m[(q, p)]));
            }
        }
    }
    out
}

pub fn svec_to_mat(v: &[f64], dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    let mut k = 0;
    for p in 0..dim {
        for q in p..dim {
            if p == q {
                m[(p, p)] = v[k];
            } else {
                let x = v[k] * std::f64::consts::FRAC_1_SQRT_2;
                m[(p, q)] = x;
                m[(q, p)] = x;
            }
            k += 1;
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarVar {
    pub(crate) slot: usize,
    pub(crate) index: usize,
}

impl ScalarVar {
    /// Position in the flat decision vector.
    pub fn flat_index(&self) -> usize {
        self.index
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixVar {
    pub family: usize,
    pub member: usize,
    pub dim: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFamily {
    pub name: String,
    pub dim: usize,
    pub count: usize,
    /// Flat offset of each member.
    pub offsets: Vec<usize>,
}

/// One constraint `F₀ + Σ yⱼFⱼ ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub label: String,
    pub dim: usize,
    pub constant: DMatrix<f64>,
    /// `(flat variable index, coefficient)`, sorted by index.
    pub terms: Vec<(usize, DMatrix<f64>)>,
}

impl LmiBlock {
    pub fn new(label: impl Into<String>, dim: usize) -> Self {
        LmiBlock {
            label: label.into(),
            dim,
            constant: DMatrix::zeros(dim, dim),
            terms: Vec::new(),
        }
    }

    pub fn add_constant(&mut self, c: &DMatrix<f64>) -> &mut Self {
        assert_eq!(c.shape(), (self.dim, self.dim), "constant shape");
        self.constant += c;
        self
    }

    /// Adds `v·coeff`.
    pub fn add_scalar(&mut self, v: ScalarVar, coeff: &DMatrix<f64>) -> &mut Self {
        assert_eq!(coeff.shape(), (self.dim, self.dim), "coefficient shape");
        self.add_term(v.index, coeff.clone());
        self
    }

    /// Adds `L(W)` for a linear map `L` applied to the matrix variable `W`.
    pub fn add_matrix<F>(&mut self, v: MatrixVar, map: F) -> &mut Self
    where
        F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
    {
        for (k, e) in svec_basis(v.dim).iter().enumerate() {
            let c = map(e);
            assert_eq!(c.shape(), (self.dim, self.dim), "linear map output shape");
            self.add_term(v.offset + k, c);
        }
        self
    }

    fn add_term(&mut self, var: usize, mut coeff: DMatrix<f64>) {
        crate::linalg::symmetrize(&mut coeff);
        if coeff.iter().all(|v| *v == 0.0) {
            return;
        }
        match self.terms.binary_search_by_key(&var, |(j, _)| *j) {
            Ok(pos) => self.terms[pos].1 += coeff,
            Err(pos) => self.terms.insert(pos, (var, coeff)),
        }
    }

    /// `F(y)`.
    pub fn evaluate(&self, y: &[f64]) -> DMatrix<f64> {
        let mut f = self.constant.clone();
        for (j, c) in &self.terms {
            f += c * y[*j];
        }
        f
    }
}

/// Block-LMI problem: minimize `cᵀy` subject to every block being PSD.
#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    scalars: Vec<(String, usize)>,
    families: Vec<MatrixFamily>,
    n_vars: usize,
    objective: BTreeMap<usize, f64>,
    blocks: Vec<LmiBlock>,
    initial: Vec<(usize, f64)>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_scalar(&mut self, name: impl Into<String>) -> ScalarVar {
        let index = self.n_vars;
        self.n_vars += 1;
        self.scalars.push((name.into(), index));
        ScalarVar {
            slot: self.scalars.len() - 1,
            index,
        }
    }

    /// Adds `count` symmetric `dim×dim` variables, laid out consecutively.
    pub fn add_matrix_family(&mut self, name: impl Into<String>, dim: usize, count: usize) -> Vec<MatrixVar> {
        let family = self.families.len();
        let len = svec_len(dim);
        let offsets: Vec<usize> = (0..count).map(|i| self.n_vars + i * len).collect();
        self.n_vars += count * len;
        self.families.push(MatrixFamily {
            name: name.into(),
            dim,
            count,
            offsets: offsets.clone(),
        });
        offsets
            .into_iter()
            .enumerate()
            .map(|(member, offset)| MatrixVar {
                family,
                member,
                dim,
                offset,
            })
            .collect()
    }

    /// Adds `coeff·v` to the objective.
    pub fn minimize(&mut self, v: ScalarVar, coeff: f64) {
        *self.objective.entry(v.index).or_insert(0.0) += coeff;
    }

    pub fn push(&mut self, block: LmiBlock) {
        self.blocks.push(block);
    }

    /// Scalar bounds `lower ≤ v ≤ upper` as 1×1 blocks.
    pub fn bound_scalar(&mut self, v: ScalarVar, lower: Option<f64>, upper: Option<f64>) {
        let name = self.scalars[v.slot].0.clone();
        let one = DMatrix::from_element(1, 1, 1.0);
        if let Some(lo) = lower {
            let mut b = LmiBlock::new(format!("{name} >= {lo}"), 1);
            b.add_scalar(v, &one).add_constant(&DMatrix::from_element(1, 1, -lo));
            self.push(b);
        }
        if let Some(hi) = upper {
            let mut b = LmiBlock::new(format!("{name} <= {hi}"), 1);
            b.add_scalar(v, &(-&one)).add_constant(&DMatrix::from_element(1, 1, hi));
            self.push(b);
        }
    }

    /// Starting-point hint for the feasibility phase.
    pub fn hint_scalar(&mut self, v: ScalarVar, value: f64) {
        self.initial.push((v.index, value));
    }

    pub fn hint_matrix(&mut self, v: MatrixVar, value: &DMatrix<f64>) {
        for (k, x) in mat_to_svec(value).into_iter().enumerate() {
            self.initial.push((v.offset + k, x));
        }
    }

    pub fn num_vars(&self) -> usize {
        self.n_vars
    }

    pub fn blocks(&self) -> &[LmiBlock] {
        &self.blocks
    }

    pub fn families(&self) -> &[MatrixFamily] {
        &self.families
    }

    pub fn scalar_names(&self) -> impl Iterator<Item = &str> {
        self.scalars.iter().map(|(n, _)| n.as_str())
    }

    pub(crate) fn scalar_slots(&self) -> &[(String, usize)] {
        &self.scalars
    }

    pub fn scalar_by_name(&self, name: &str) -> Option<ScalarVar> {
        self.scalars
            .iter()
            .enumerate()
            .find(|(_, (n, _))| n == name)
            .map(|(slot, (_, index))| ScalarVar { slot, index: *index })
    }

    /// Dense objective vector `c`.
    pub fn objective_vector(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.n_vars];
        for (&j, &v) in &self.objective {
            c[j] = v;
        }
        c
    }

    pub(crate) fn initial_point(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.n_vars];
        for &(j, v) in &self.initial {
            y[j] = v;
        }
        y
    }

    /// Flags marking scalar (dense-coupling) variables.
    pub(crate) fn scalar_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_vars];
        for (_, j) in &self.scalars {
            mask[*j] = true;
        }
        mask
    }

    /// Sum of block dimensions (the barrier parameter).
    pub fn barrier_degree(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (k, b) in self.blocks.iter().enumerate() {
            if b.constant.shape() != (b.dim, b.dim) {
                return Err(Error::Shape(format!("block {k} ({}) constant shape", b.label)));
            }
            for (j, c) in &b.terms {
                if *j >= self.n_vars {
                    return Err(Error::Shape(format!("block {k} references unknown variable {j}")));
                }
                if c.shape() != (b.dim, b.dim) {
                    return Err(Error::Shape(format!("block {k} ({}) coefficient shape", b.label)));
                }
            }
        }
        Ok(())
    }

    /// Writes a plain-text description: variables, objective, and every
    /// block as sparse `(row, col, var, coeff)` tuples over its upper
    /// triangle (`var = const` for the constant term).
    pub fn dump<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# sdp problem dump v1")?;
        writeln!(w, "variables {}", self.n_vars)?;
        for (name, j) in &self.scalars {
            writeln!(w, "scalar {j} {name}")?;
        }
        for f in &self.families {
            writeln!(
                w,
                "matrix {} dim={} count={} offset={} stride={}",
                f.name,
                f.dim,
                f.count,
                f.offsets.first().copied().unwrap_or(0),
                svec_len(f.dim)
            )?;
        }
        for (j, c) in &self.objective {
            writeln!(w, "objective {j} {c:.17e}")?;
        }
        for (k, b) in self.blocks.iter().enumerate() {
            writeln!(w, "block {k} dim={} label={}", b.dim, b.label)?;
            let mut emit = |var: &str, m: &DMatrix<f64>| -> std::io::Result<()> {
                for r in 0..b.dim {
                    for c in r..b.dim {
                        if m[(r, c)] != 0.0 {
                            writeln!(w, "  {r} {c} {var} {:.17e}", m[(r, c)])?;
                        }
                    }
                }
                Ok(())
            };
            emit("const", &b.constant)?;
            for (j, m) in &b.terms {
                emit(&j.to_string(), m)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_is_isometric() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let v = mat_to_svec(&m);
        let norm2: f64 = v.iter().map(|x| x * x).sum();
        assert!((norm2 - m.norm_squared()).abs() < 1e-12);
        assert!((svec_to_mat(&v, 3) - &m).norm() < 1e-14);
        let basis = svec_basis(3);
        let rebuilt = basis.iter().zip(&v).fold(DMatrix::zeros(3, 3), |acc, (e, c)| acc + e * *c);
        assert!((rebuilt - m).norm() < 1e-12);
    }

    #[test]
    fn blocks_are_affine() {
        let mut p = SdpProblem::new();
        let chi = p.add_scalar("chi");
        let w = p.add_matrix_family("W", 2, 1)[0];
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let mut b = LmiBlock::new("lyap", 2);
        b.add_matrix(w, |e| -(&a * e + e * a.transpose()))
            .add_scalar(chi, &DMatrix::identity(2, 2))
            .add_constant(&DMatrix::identity(2, 2));
        // affinity: F(y1 + y2) - F(0) = (F(y1) - F(0)) + (F(y2) - F(0))
        let y1 = [0.3, 1.0, -0.2, 2.0];
        let y2 = [-1.1, 0.5, 0.7, 0.1];
        let sum: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
        let f0 = b.evaluate(&[0.0; 4]);
        let lhs = b.evaluate(&sum) - &f0;
        let rhs = (b.evaluate(&y1) - &f0) + (b.evaluate(&y2) - &f0);
        assert!((lhs - rhs).norm() < 1e-9);
    }

    #[test]
    fn dump_lists_tuples() {
        let mut p = SdpProblem::new();
        let chi = p.add_scalar("chi");
        p.minimize(chi, 1.0);
        p.bound_scalar(chi, Some(1.0), None);
        let mut out = Vec::new();
        p.dump(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("scalar 0 chi"));
        assert!(text.contains("  0 0 const -1.00000000000000000e0"));
        assert!(text.contains("  0 0 0 1.00000000000000000e0"));
    }
}
