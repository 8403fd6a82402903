//! Sparse LDL' factorization of symmetric quasi-definite matrices with a
//! fill-reducing AMD ordering. The numeric phase follows the up-looking
//! elimination-tree algorithm, so no pivoting is needed: quasi-definite
//! matrices are strongly factorizable under any symmetric permutation.

use super::csc::CscMatrix;
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Pivot magnitude below which the expected-sign pivot is replaced.
const DYNAMIC_REG_THRESHOLD: f64 = 1e-13;
const DYNAMIC_REG_VALUE: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    // Permuted upper triangle.
    ap: Vec<usize>,
    ai: Vec<usize>,
    ax: Vec<f64>,
    // Source entry index -> slot in `ax`.
    map: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    signs: Vec<f64>,
    /// Pivots replaced by dynamic regularization in the last factorization.
    pub regularized: usize,
}

impl LdlFactor {
    /// Symbolic analysis plus a first numeric factorization. `upper` holds
    /// the upper triangle (diagonal included for every index); `signs[i]` is
    /// the expected sign (+1 or -1) of pivot `i`.
    pub fn new(upper: &CscMatrix, signs: &[f64]) -> Result<Self> {
        let n = upper.ncols;
        if upper.nrows != n || signs.len() != n {
            return Err(Error::Dimension("KKT matrix must be square".into()));
        }
        let perm = if n == 0 {
            Vec::new()
        } else {
            let (p, _, _) = amd::order::<usize>(n, &upper.colptr, &upper.rowind, &amd::Control::default())
                .map_err(|s| Error::Numerical(format!("AMD ordering failed: {s:?}")))?;
            p
        };
        let mut pinv = vec![0; n];
        for (k, &i) in perm.iter().enumerate() {
            pinv[i] = k;
        }

        // Permute the upper triangle: entry (i, j), i <= j, moves to
        // (min(pi, pj), max(pi, pj)).
        let nnz = upper.nnz();
        let mut counts = vec![0usize; n + 1];
        let mut dest = Vec::with_capacity(nnz);
        for j in 0..n {
            for p in upper.colptr[j]..upper.colptr[j + 1] {
                let i = upper.rowind[p];
                if i > j {
                    return Err(Error::Numerical("KKT input is not upper triangular".into()));
                }
                let (a, b) = (pinv[i], pinv[j]);
                let (r, c) = if a <= b { (a, b) } else { (b, a) };
                dest.push((r, c));
                counts[c + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let ap = counts.clone();
        let mut next = counts;
        let mut ai = vec![0; nnz];
        let mut map = vec![0; nnz];
        for (e, &(r, c)) in dest.iter().enumerate() {
            ai[next[c]] = r;
            map[e] = next[c];
            next[c] += 1;
        }

        // Elimination tree and column counts.
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for p in ap[j]..ap[j + 1] {
                let mut i = ai[p];
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        let mut psigns = vec![0.0; n];
        for i in 0..n {
            psigns[pinv[i]] = signs[i];
        }

        let mut f = Self {
            n,
            perm,
            ap,
            ai,
            ax: vec![0.0; nnz],
            map,
            etree,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            signs: psigns,
            regularized: 0,
        };
        f.refactor(&upper.values)?;
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Nonzeros in the strictly lower factor.
    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric refactorization with new values on the same pattern.
    pub fn refactor(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.map.len() {
            return Err(Error::Dimension("KKT values do not match the analysed pattern".into()));
        }
        self.ax.iter_mut().for_each(|v| *v = 0.0);
        for (e, &slot) in self.map.iter().enumerate() {
            self.ax[slot] += values[e];
        }
        let n = self.n;
        let mut y_vals = vec![0.0; n];
        let mut y_marked = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_in_col = self.lp[..n].to_vec();
        self.regularized = 0;

        for k in 0..n {
            let mut nnz_y = 0;
            self.d[k] = 0.0;
            for p in self.ap[k]..self.ap[k + 1] {
                let b = self.ai[p];
                if b == k {
                    self.d[k] += self.ax[p];
                    continue;
                }
                y_vals[b] += self.ax[p];
                if !y_marked[b] {
                    y_marked[b] = true;
                    elim[0] = b;
                    let mut ne = 1;
                    let mut nx = self.etree[b];
                    while nx != NONE && nx < k {
                        if y_marked[nx] {
                            break;
                        }
                        y_marked[nx] = true;
                        elim[ne] = nx;
                        ne += 1;
                        nx = self.etree[nx];
                    }
                    while ne > 0 {
                        ne -= 1;
                        y_idx[nnz_y] = elim[ne];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let slot = next_in_col[c];
                let yc = y_vals[c];
                for j in self.lp[c]..slot {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[slot] = k;
                let lval = yc * self.dinv[c];
                self.lx[slot] = lval;
                self.d[k] -= yc * lval;
                next_in_col[c] += 1;
                y_vals[c] = 0.0;
                y_marked[c] = false;
            }
            if self.signs[k] * self.d[k] < DYNAMIC_REG_THRESHOLD {
                self.d[k] = self.signs[k] * DYNAMIC_REG_VALUE;
                self.regularized += 1;
            }
            if !self.d[k].is_finite() {
                return Err(Error::Numerical(format!("non-finite pivot at column {k} of {n}")));
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        debug_assert!(next_in_col.iter().zip(self.lp[1..].iter()).all(|(a, b)| a == b));
        Ok(())
    }

    /// Solves `K x = b` in place (original ordering).
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = (0..n).map(|k| b[self.perm[k]]).collect();
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for j in self.lp[i]..self.lp[i + 1] {
                    x[self.li[j]] -= self.lx[j] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[j] * x[self.li[j]];
            }
            x[i] = acc;
        }
        for (k, v) in x.into_iter().enumerate() {
            b[self.perm[k]] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::csc::Triplets;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_quasi_definite(rng: &mut ChaCha8Rng, n1: usize, n2: usize, density: f64) -> DMatrix<f64> {
        let n = n1 + n2;
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n1 {
            k[(i, i)] = rng.gen_range(0.5..2.0);
        }
        for i in n1..n {
            k[(i, i)] = -rng.gen_range(0.5..2.0);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < density {
                    let v = rng.gen_range(-1.0..1.0);
                    let same_block = (i < n1) == (j < n1);
                    // Keep each diagonal block dominant so the matrix stays quasi-definite.
                    let v = if same_block { 0.1 * v / n as f64 } else { v };
                    k[(i, j)] = v;
                    k[(j, i)] = v;
                }
            }
        }
        k
    }

    fn upper_of(k: &DMatrix<f64>) -> CscMatrix {
        let n = k.nrows();
        let mut t = Triplets::new(n, n);
        for j in 0..n {
            for i in 0..=j {
                if i == j || k[(i, j)] != 0.0 {
                    t.push(i, j, if i == j && k[(i, j)] == 0.0 { 0.0 } else { k[(i, j)] });
                }
            }
        }
        t.to_csc()
    }

    #[test]
    fn solves_random_quasi_definite_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..30 {
            let (n1, n2) = (rng.gen_range(1..15), rng.gen_range(0..15));
            let k = random_quasi_definite(&mut rng, n1, n2, 0.3);
            let signs: Vec<f64> = (0..n1 + n2).map(|i| if i < n1 { 1.0 } else { -1.0 }).collect();
            let f = LdlFactor::new(&upper_of(&k), &signs).unwrap();
            assert_eq!(f.regularized, 0);
            let b = DVector::from_fn(n1 + n2, |_, _| rng.gen_range(-1.0..1.0));
            let mut x = b.as_slice().to_vec();
            f.solve(&mut x);
            let r = &k * DVector::from_vec(x) - &b;
            assert!(r.amax() < 1e-10, "trial {trial}: residual {}", r.amax());
        }
    }

    #[test]
    fn refactor_reuses_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = random_quasi_definite(&mut rng, 6, 4, 0.5);
        let signs: Vec<f64> = (0..10).map(|i| if i < 6 { 1.0 } else { -1.0 }).collect();
        let upper = upper_of(&k);
        let mut f = LdlFactor::new(&upper, &signs).unwrap();
        let mut scaled = upper.clone();
        scaled.values.iter_mut().for_each(|v| *v *= 2.0);
        f.refactor(&scaled.values).unwrap();
        let b = vec![1.0; 10];
        let mut x = b.clone();
        f.solve(&mut x);
        let r = (&k * 2.0) * DVector::from_vec(x) - DVector::from_vec(b);
        assert!(r.amax() < 1e-10);
    }
}
