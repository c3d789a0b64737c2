//! Symmetric positive-definite systems with a banded leading block and a
//! dense border ("arrow" structure), as produced by LMIs along a time grid
//! coupled through a few scalar variables.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Slot {
    Band(usize),
    Border(usize),
}

pub(crate) struct ArrowMatrix {
    nb: usize,
    ns: usize,
    bw: usize,
    /// Lower band, row `i` holds columns `i-bw ..= i`.
    band: Vec<f64>,
    /// `nb × ns`, row-major.
    cross: Vec<f64>,
    corner: DMatrix<f64>,
}

impl ArrowMatrix {
    pub fn new(nb: usize, ns: usize, bw: usize) -> Self {
        ArrowMatrix {
            nb,
            ns,
            bw,
            band: vec![0.0; nb * (bw + 1)],
            cross: vec![0.0; nb * ns],
            corner: DMatrix::zeros(ns, ns),
        }
    }

    pub fn clear(&mut self) {
        self.band.iter_mut().for_each(|v| *v = 0.0);
        self.cross.iter_mut().for_each(|v| *v = 0.0);
        self.corner.fill(0.0);
    }

    #[inline]
    fn band_at(&mut self, i: usize, j: usize) -> &mut f64 {
        // requires j <= i, i - j <= bw
        &mut self.band[i * (self.bw + 1) + (j + self.bw - i)]
    }

    /// Adds `v` at the symmetric pair `(a, b)`. Off-diagonal pairs are
    /// expected to be visited once per unordered pair.
    #[inline]
    pub fn add(&mut self, a: Slot, b: Slot, v: f64) {
        match (a, b) {
            (Slot::Band(i), Slot::Band(j)) => {
                let (i, j) = if i >= j { (i, j) } else { (j, i) };
                debug_assert!(i - j <= self.bw);
                *self.band_at(i, j) += v;
            }
            (Slot::Band(i), Slot::Border(s)) | (Slot::Border(s), Slot::Band(i)) => {
                self.cross[i * self.ns + s] += v;
            }
            (Slot::Border(s), Slot::Border(r)) => {
                self.corner[(s, r)] += v;
                if s != r {
                    self.corner[(r, s)] += v;
                }
            }
        }
    }

    pub fn add_diagonal(&mut self, shift: f64) {
        for i in 0..self.nb {
            *self.band_at(i, i) += shift;
        }
        for s in 0..self.ns {
            self.corner[(s, s)] += shift;
        }
    }

    pub fn max_diagonal(&self) -> f64 {
        let mut m = 0.0_f64;
        for i in 0..self.nb {
            m = m.max(self.band[i * (self.bw + 1) + self.bw].abs());
        }
        for s in 0..self.ns {
            m = m.max(self.corner[(s, s)].abs());
        }
        m
    }

    /// `H x` for `x` split as (band, border).
    pub fn mul(&self, xb: &[f64], xs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (nb, ns, bw) = (self.nb, self.ns, self.bw);
        let w = bw + 1;
        let mut yb = vec![0.0; nb];
        let mut ys = vec![0.0; ns];
        for i in 0..nb {
            let lo = i.saturating_sub(bw);
            for j in lo..i {
                let v = self.band[i * w + (j + bw - i)];
                yb[i] += v * xb[j];
                yb[j] += v * xb[i];
            }
            yb[i] += self.band[i * w + bw] * xb[i];
            for s in 0..ns {
                let c = self.cross[i * ns + s];
                yb[i] += c * xs[s];
                ys[s] += c * xb[i];
            }
        }
        for s in 0..ns {
            for r in 0..ns {
                ys[s] += self.corner[(s, r)] * xs[r];
            }
        }
        (yb, ys)
    }

    /// Solves `H x = rhs` (band entries first, then border) by a banded
    /// Cholesky factorization and a Schur complement on the border,
    /// followed by two rounds of iterative refinement.
    /// Returns `None` if the matrix is not numerically positive definite.
    pub fn solve(&self, rhs_band: &[f64], rhs_border: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let f = self.factor()?;
        let (mut xb, mut xs) = f.solve(self, rhs_band, rhs_border);
        for _ in 0..2 {
            let (hb, hs) = self.mul(&xb, &xs);
            let rb: Vec<f64> = rhs_band.iter().zip(&hb).map(|(a, b)| a - b).collect();
            let rs: Vec<f64> = rhs_border.iter().zip(&hs).map(|(a, b)| a - b).collect();
            let (db, ds) = f.solve(self, &rb, &rs);
            xb.iter_mut().zip(&db).for_each(|(x, d)| *x += d);
            xs.iter_mut().zip(&ds).for_each(|(x, d)| *x += d);
        }
        Some((xb, xs))
    }

    fn factor(&self) -> Option<ArrowFactor> {
        let (nb, ns, bw) = (self.nb, self.ns, self.bw);
        let w = bw + 1;
        let mut l = self.band.clone();
        for j in 0..nb {
            let lo = j.saturating_sub(bw);
            let mut d = l[j * w + bw];
            for k in lo..j {
                let v = l[j * w + (k + bw - j)];
                d -= v * v;
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[j * w + bw] = djj;
            let hi = (j + bw + 1).min(nb);
            for i in (j + 1)..hi {
                let klo = i.saturating_sub(bw);
                let mut s = l[i * w + (j + bw - i)];
                for k in klo..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                l[i * w + (j + bw - i)] = s / djj;
            }
        }
        let mut f = ArrowFactor {
            l,
            cols: Vec::new(),
            schur: None,
        };
        if ns == 0 {
            return Some(f);
        }
        // Z = H_bb⁻¹ H_bs, one column per border variable
        let mut cols: Vec<Vec<f64>> = (0..ns)
            .map(|s| (0..nb).map(|i| self.cross[i * ns + s]).collect())
            .collect();
        for c in cols.iter_mut() {
            f.solve_band(nb, bw, c);
        }
        let mut schur = self.corner.clone();
        for s in 0..ns {
            for r in 0..ns {
                let mut acc = 0.0;
                for i in 0..nb {
                    acc += self.cross[i * ns + s] * cols[r][i];
                }
                schur[(s, r)] -= acc;
            }
        }
        crate::linalg::symmetrize(&mut schur);
        f.schur = Some(schur.cholesky()?);
        f.cols = cols;
        Some(f)
    }
}

struct ArrowFactor {
    l: Vec<f64>,
    cols: Vec<Vec<f64>>,
    schur: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl ArrowFactor {
    fn solve_band(&self, nb: usize, bw: usize, b: &mut [f64]) {
        let w = bw + 1;
        let l = &self.l;
        // L z = b
        for i in 0..nb {
            let lo = i.saturating_sub(bw);
            let mut s = b[i];
            for k in lo..i {
                s -= l[i * w + (k + bw - i)] * b[k];
            }
            b[i] = s / l[i * w + bw];
        }
        // Lᵀ x = z
        for i in (0..nb).rev() {
            let hi = (i + bw + 1).min(nb);
            let mut s = b[i];
            for k in (i + 1)..hi {
                s -= l[k * w + (i + bw - k)] * b[k];
            }
            b[i] = s / l[i * w + bw];
        }
    }

    fn solve(&self, h: &ArrowMatrix, rhs_band: &[f64], rhs_border: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (nb, ns) = (h.nb, h.ns);
        let mut z = rhs_band.to_vec();
        self.solve_band(nb, h.bw, &mut z);
        let Some(schur) = &self.schur else {
            return (z, Vec::new());
        };
        let mut rs = DVector::from_column_slice(rhs_border);
        for s in 0..ns {
            let mut acc = 0.0;
            for i in 0..nb {
                acc += h.cross[i * ns + s] * z[i];
            }
            rs[s] -= acc;
        }
        let xs = schur.solve(&rs);
        for (s, col) in self.cols.iter().enumerate() {
            for i in 0..nb {
                z[i] -= col[i] * xs[s];
            }
        }
        (z, xs.as_slice().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_dense_solve() {
        // random banded SPD with a 2-wide border
        let nb = 9;
        let ns = 2;
        let bw = 2;
        let n = nb + ns;
        let mut dense = DMatrix::<f64>::zeros(n, n);
        let mut seed = 1u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 33) as f64 / (1u64 << 31) as f64) - 0.5
        };
        let mut h = ArrowMatrix::new(nb, ns, bw);
        for i in 0..n {
            for j in 0..=i {
                let both_band = i < nb && j < nb;
                if both_band && i - j > bw {
                    continue;
                }
                let v = if i == j { 10.0 + rnd() } else { rnd() };
                dense[(i, j)] = v;
                dense[(j, i)] = v;
                let slot = |k: usize| if k < nb { Slot::Band(k) } else { Slot::Border(k - nb) };
                h.add(slot(i), slot(j), v);
            }
        }
        let rhs: Vec<f64> = (0..n).map(|_| rnd()).collect();
        let (xb, xs) = h.solve(&rhs[..nb], &rhs[nb..]).unwrap();
        let x: Vec<f64> = xb.into_iter().chain(xs).collect();
        let expect = dense.cholesky().unwrap().solve(&DVector::from_vec(rhs));
        for i in 0..n {
            assert!((x[i] - expect[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let mut h = ArrowMatrix::new(2, 0, 1);
        h.add(Slot::Band(0), Slot::Band(0), 1.0);
        h.add(Slot::Band(1), Slot::Band(0), 2.0);
        h.add(Slot::Band(1), Slot::Band(1), 1.0);
        assert!(h.solve(&[1.0, 1.0], &[]).is_none());
    }
}
