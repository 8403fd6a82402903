//! Dense two-phase simplex (Bland's rule) used as an independent LP oracle,
//! and a generator of small random LPs with known feasibility.

use percept_core::solver::{QpProblem, Triplets};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, PartialEq)]
pub enum Oracle {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

const TOL: f64 = 1e-9;

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, c: usize) {
    let p = t[r][c];
    t[r].iter_mut().for_each(|v| *v /= p);
    let row = t[r].clone();
    for (i, ti) in t.iter_mut().enumerate() {
        if i != r && ti[c] != 0.0 {
            let f = ti[c];
            ti.iter_mut().zip(&row).for_each(|(v, w)| *v -= f * w);
        }
    }
    basis[r] = c;
}

/// Runs Bland-rule simplex on tableau rows `t[..m]` with objective row `t[m]`
/// (reduced costs, last column = -objective). Columns `>= allowed` never enter.
fn run(t: &mut [Vec<f64>], basis: &mut [usize], allowed: usize) -> bool {
    let m = basis.len();
    let rhs = t[0].len() - 1;
    loop {
        let Some(c) = (0..allowed).find(|&j| t[m][j] < -TOL) else { return true };
        let mut best: Option<(f64, usize)> = None;
        for i in 0..m {
            if t[i][c] > TOL {
                let ratio = t[i][rhs] / t[i][c];
                best = match best {
                    None => Some((ratio, i)),
                    Some((br, bi)) => {
                        if ratio < br - TOL || (ratio <= br + TOL && basis[i] < basis[bi]) {
                            Some((ratio, i))
                        } else {
                            Some((br, bi))
                        }
                    }
                };
            }
        }
        match best {
            None => return false,
            Some((_, r)) => pivot(t, basis, r, c),
        }
    }
}

/// `min c'x  s.t.  A x = b, x >= 0`.
pub fn simplex(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Oracle {
    let m = a.len();
    let n = c.len();
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * a[i][j];
        }
        t[i][n + i] = 1.0;
        t[i][width - 1] = sign * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    // Phase I objective: sum of artificials, expressed in reduced form.
    for i in 0..m {
        for j in 0..width {
            if j < n || j == width - 1 {
                t[m][j] -= t[i][j];
            }
        }
    }
    run(&mut t, &mut basis, n + m);
    if -t[m][width - 1] > 1e-7 {
        return Oracle::Infeasible;
    }
    // Drive artificials out of the basis; drop redundant rows.
    let mut keep = vec![true; m];
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t[i][j].abs() > 1e-9) {
                pivot(&mut t, &mut basis, i, j);
            } else {
                keep[i] = false;
            }
        }
    }
    let mut t2: Vec<Vec<f64>> = Vec::new();
    let mut basis2 = Vec::new();
    for i in 0..m {
        if keep[i] {
            let mut row: Vec<f64> = t[i][..n].to_vec();
            row.push(t[i][width - 1]);
            t2.push(row);
            basis2.push(basis[i]);
        }
    }
    let mut obj: Vec<f64> = c.to_vec();
    obj.push(0.0);
    for (i, &bi) in basis2.iter().enumerate() {
        let f = obj[bi];
        if f != 0.0 {
            obj.iter_mut().zip(&t2[i]).for_each(|(v, w)| *v -= f * w);
        }
    }
    t2.push(obj);
    if !run(&mut t2, &mut basis2, n) {
        return Oracle::Unbounded;
    }
    let last = t2.len() - 1;
    Oracle::Optimal(-t2[last][n])
}

pub struct RandomLp {
    /// Rows of `G x <= h`.
    pub g: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub e: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    pub c: Vec<f64>,
}

impl RandomLp {
    pub fn to_problem(&self) -> QpProblem {
        let n = self.c.len();
        let me = self.e.len();
        let mut t = Triplets::new(me + self.g.len(), n);
        for (i, row) in self.e.iter().chain(self.g.iter()).enumerate() {
            for (j, &v) in row.iter().enumerate() {
                t.push(i, j, v);
            }
        }
        QpProblem {
            p_diag: vec![],
            q: self.c.clone(),
            a: t.to_csc(),
            b: self.f.iter().chain(self.h.iter()).cloned().collect(),
            n_eq: me,
        }
    }

    /// Standard form with `x = x+ - x-` and one slack per inequality.
    pub fn oracle(&self) -> Oracle {
        let n = self.c.len();
        let mi = self.g.len();
        let cols = 2 * n + mi;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (row, &rhs) in self.e.iter().zip(&self.f) {
            let mut r = vec![0.0; cols];
            for j in 0..n {
                r[j] = row[j];
                r[n + j] = -row[j];
            }
            a.push(r);
            b.push(rhs);
        }
        for (k, (row, &rhs)) in self.g.iter().zip(&self.h).enumerate() {
            let mut r = vec![0.0; cols];
            for j in 0..n {
                r[j] = row[j];
                r[n + j] = -row[j];
            }
            r[2 * n + k] = 1.0;
            a.push(r);
            b.push(rhs);
        }
        let mut c = vec![0.0; cols];
        for j in 0..n {
            c[j] = self.c[j];
            c[n + j] = -self.c[j];
        }
        simplex(&a, &b, &c)
    }
}

pub fn random_lp(rng: &mut ChaCha8Rng, kind: usize) -> RandomLp {
    let n = rng.gen_range(1..7);
    let mi = rng.gen_range(0..7);
    let me = rng.gen_range(0..n.min(3));
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let row = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| if rng.gen::<f64>() < 0.7 { rng.gen_range(-3.0..3.0) } else { 0.0 }).collect()
    };
    let mut g = Vec::new();
    let mut h = Vec::new();
    for _ in 0..mi {
        let r = row(rng);
        let slack = if rng.gen::<f64>() < 0.3 { 0.0 } else { rng.gen_range(0.0..2.0) };
        h.push(r.iter().zip(&x0).map(|(a, x)| a * x).sum::<f64>() + slack);
        g.push(r);
    }
    let mut e = Vec::new();
    let mut f = Vec::new();
    for _ in 0..me {
        let r = row(rng);
        f.push(r.iter().zip(&x0).map(|(a, x)| a * x).sum());
        e.push(r);
    }
    if kind != 2 {
        // Box |x_j| <= 10 keeps the LP bounded.
        for j in 0..n {
            let mut up = vec![0.0; n];
            up[j] = 1.0;
            g.push(up);
            h.push(10.0);
            let mut lo = vec![0.0; n];
            lo[j] = -1.0;
            g.push(lo);
            h.push(10.0);
        }
    }
    if kind == 1 {
        // Contradictory pair: a'x <= -1 and -a'x <= -1.
        let r = row(rng);
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let base: f64 = r.iter().zip(&x0).map(|(a, x)| a * x).sum();
        g.push(r);
        h.push(base - 1.0);
        g.push(neg);
        h.push(-base - 1.0);
    }
    let c = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    RandomLp { g, h, e, f, c }
}
