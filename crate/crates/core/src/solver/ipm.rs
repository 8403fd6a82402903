use super::csc::{CscMatrix, Triplets};
use super::ldl::LdlFactor;
use super::{QpProblem, QpSolution, SolveStatus, SolverSettings};
use crate::error::{Error, Result};

const SCALE_MIN: f64 = 1e-4;
const SCALE_MAX: f64 = 1e4;
const STEP_FRACTION: f64 = 0.99;
const MAX_REGULARIZATION: f64 = 1e-4;

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Problem data after Ruiz equilibration, with the scalings needed to map
/// iterates back.
struct Scaled {
    p: Vec<f64>,
    q: Vec<f64>,
    a: CscMatrix,
    b: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
}

fn equilibrate(prob: &QpProblem, passes: usize) -> Scaled {
    let n = prob.num_vars();
    let m = prob.num_rows();
    let mut a = prob.a.clone();
    let mut p = if prob.p_diag.is_empty() { vec![0.0; n] } else { prob.p_diag.clone() };
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m];
    let inv_sqrt = |v: f64| if v < 1e-12 { 1.0 } else { (1.0 / v.sqrt()).clamp(SCALE_MIN, SCALE_MAX) };
    for _ in 0..passes {
        let mut col = p.iter().map(|v| v.abs()).collect::<Vec<_>>();
        let mut row = vec![0.0f64; m];
        for j in 0..n {
            for k in a.colptr[j]..a.colptr[j + 1] {
                let v = a.values[k].abs();
                col[j] = col[j].max(v);
                row[a.rowind[k]] = row[a.rowind[k]].max(v);
            }
        }
        let dd: Vec<f64> = col.iter().map(|&v| inv_sqrt(v)).collect();
        let de: Vec<f64> = row.iter().map(|&v| inv_sqrt(v)).collect();
        for j in 0..n {
            for k in a.colptr[j]..a.colptr[j + 1] {
                a.values[k] *= de[a.rowind[k]] * dd[j];
            }
            p[j] *= dd[j] * dd[j];
            d[j] = (d[j] * dd[j]).clamp(SCALE_MIN, SCALE_MAX);
        }
        for i in 0..m {
            e[i] = (e[i] * de[i]).clamp(SCALE_MIN, SCALE_MAX);
        }
    }
    // Recompute from the clamped totals so scaled data and scalings agree.
    let mut a = prob.a.clone();
    for j in 0..n {
        for k in a.colptr[j]..a.colptr[j + 1] {
            a.values[k] *= e[a.rowind[k]] * d[j];
        }
    }
    let mut p: Vec<f64> = (0..n)
        .map(|j| if prob.p_diag.is_empty() { 0.0 } else { prob.p_diag[j] * d[j] * d[j] })
        .collect();
    let mut q: Vec<f64> = (0..n).map(|j| prob.q[j] * d[j]).collect();
    let b: Vec<f64> = (0..m).map(|i| prob.b[i] * e[i]).collect();
    let scale = norm_inf(&q).max(norm_inf(&p));
    let c = if scale < 1e-12 { 1.0 } else { (1.0 / scale).clamp(SCALE_MIN, SCALE_MAX) };
    p.iter_mut().for_each(|v| *v *= c);
    q.iter_mut().for_each(|v| *v *= c);
    Scaled { p, q, a, b, d, e, c }
}

/// KKT matrix `[P + dI, A'; A, -(H + dI)]` held as an upper-triangular CSC
/// pattern plus a factorization that is refreshed when `H` changes.
struct Kkt {
    n: usize,
    m: usize,
    upper: CscMatrix,
    diag_slot: Vec<usize>,
    factor: LdlFactor,
    reg: f64,
}

impl Kkt {
    fn new(sc: &Scaled, h: &[f64], reg: f64) -> Result<Self> {
        let n = sc.q.len();
        let m = sc.b.len();
        let dim = n + m;
        let mut t = Triplets::new(dim, dim);
        for j in 0..n {
            t.push(j, j, sc.p[j] + reg);
            for k in sc.a.colptr[j]..sc.a.colptr[j + 1] {
                t.push(j, n + sc.a.rowind[k], sc.a.values[k]);
            }
        }
        for i in 0..m {
            t.push(n + i, n + i, -(h[i] + reg));
        }
        let upper = t.to_csc();
        // The diagonal is the last entry of each upper-triangular column.
        let diag_slot: Vec<usize> = (0..dim).map(|j| upper.colptr[j + 1] - 1).collect();
        debug_assert!((0..dim).all(|j| upper.rowind[diag_slot[j]] == j));
        let signs: Vec<f64> = (0..dim).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
        let factor = LdlFactor::new(&upper, &signs)?;
        Ok(Self { n, m, upper, diag_slot, factor, reg })
    }

    /// Refactors with the new `H`. A breakdown (pivot growth on nearly
    /// dependent rows) is retried with a larger static shift; iterative
    /// refinement against the unshifted matrix absorbs the difference.
    fn update(&mut self, sc: &Scaled, h: &[f64]) -> Result<()> {
        loop {
            for j in 0..self.n {
                self.upper.values[self.diag_slot[j]] = sc.p[j] + self.reg;
            }
            for i in 0..self.m {
                self.upper.values[self.diag_slot[self.n + i]] = -(h[i] + self.reg);
            }
            match self.factor.refactor(&self.upper.values) {
                Err(Error::Numerical(_)) if self.reg < MAX_REGULARIZATION => self.reg *= 100.0,
                other => return other,
            }
        }
    }

    /// Unregularized product `[P A'; A -H] v`.
    fn apply(&self, sc: &Scaled, h: &[f64], v: &[f64], out: &mut [f64]) {
        let (vx, vz) = v.split_at(self.n);
        let (ox, oz) = out.split_at_mut(self.n);
        for j in 0..self.n {
            ox[j] = sc.p[j] * vx[j];
        }
        sc.a.gemv_t(1.0, vz, ox);
        for i in 0..self.m {
            oz[i] = -h[i] * vz[i];
        }
        sc.a.gemv(1.0, vx, oz);
    }

    fn solve(&self, sc: &Scaled, h: &[f64], rhs: &[f64], steps: usize) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.factor.solve(&mut x);
        let tol = 1e-14 * (1.0 + norm_inf(rhs));
        let mut kx = vec![0.0; rhs.len()];
        self.apply(sc, h, &x, &mut kx);
        let mut r: Vec<f64> = rhs.iter().zip(&kx).map(|(a, b)| a - b).collect();
        let mut rnorm = norm_inf(&r);
        for _ in 0..steps {
            if rnorm <= tol {
                break;
            }
            let mut dx = r.clone();
            self.factor.solve(&mut dx);
            let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            self.apply(sc, h, &cand, &mut kx);
            let rc: Vec<f64> = rhs.iter().zip(&kx).map(|(a, b)| a - b).collect();
            let cn = norm_inf(&rc);
            if cn >= rnorm {
                break;
            }
            x = cand;
            r = rc;
            rnorm = cn;
        }
        x
    }
}

struct Iterate {
    x: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

struct Direction {
    x: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

fn shift_into_cone(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < f64::EPSILON.sqrt() {
        let shift = 1.0 - min;
        v.iter_mut().for_each(|x| *x += shift);
    }
}

/// Largest step in `(0, 1]` keeping inequality slacks, their multipliers,
/// `tau` and `kappa` nonnegative.
fn max_step(it: &Iterate, dir: &Direction, n_eq: usize) -> f64 {
    let mut alpha: f64 = 1.0;
    for i in n_eq..it.s.len() {
        if dir.s[i] < 0.0 {
            alpha = alpha.min(-it.s[i] / dir.s[i]);
        }
        if dir.z[i] < 0.0 {
            alpha = alpha.min(-it.z[i] / dir.z[i]);
        }
    }
    if dir.tau < 0.0 {
        alpha = alpha.min(-it.tau / dir.tau);
    }
    if dir.kappa < 0.0 {
        alpha = alpha.min(-it.kappa / dir.kappa);
    }
    alpha.max(0.0)
}

/// Solves `min 1/2 x'diag(p)x + q'x  s.t.  Ax + s = b, s in {0}^n_eq x R+`.
/// `q'd < 0`, `A_eq d = 0`, `A_in d <= 0` and `P d = 0`, up to `eps` relative
/// to `|q'd|`.
fn is_ray(prob: &QpProblem, d: &[f64], eps: f64) -> bool {
    let qd = dot(&prob.q, d);
    if !(qd < 0.0) {
        return false;
    }
    let mut ad = vec![0.0; prob.num_rows()];
    prob.a.gemv(1.0, d, &mut ad);
    let viol = ad
        .iter()
        .enumerate()
        .map(|(i, v)| if i < prob.n_eq { v.abs() } else { v.max(0.0) })
        .fold(0.0, f64::max);
    let pd = if prob.p_diag.is_empty() {
        0.0
    } else {
        prob.p_diag.iter().zip(d).map(|(p, v)| (p * v).abs()).fold(0.0, f64::max)
    };
    viol.max(pd) <= eps * (-qd)
}

pub fn solve_qp(prob: &QpProblem, settings: &SolverSettings) -> Result<QpSolution> {
    let n = prob.num_vars();
    let m = prob.num_rows();
    if prob.a.ncols != n || prob.a.nrows != m || prob.n_eq > m {
        return Err(Error::Dimension("QP data do not conform".into()));
    }
    if !prob.p_diag.is_empty() && (prob.p_diag.len() != n || prob.p_diag.iter().any(|&v| v < 0.0)) {
        return Err(Error::InvalidArgument("quadratic term must be a nonnegative diagonal".into()));
    }
    let n_eq = prob.n_eq;
    let nu = (m - n_eq) as f64;
    let sc = equilibrate(prob, settings.equilibration_passes);
    let refine = settings.refinement_steps;

    // Initial point: two least-squares-type solves with H = I on inequality rows.
    let mut h: Vec<f64> = (0..m).map(|i| if i < n_eq { 0.0 } else { 1.0 }).collect();
    let mut kkt = Kkt::new(&sc, &h, settings.static_regularization)?;
    let mut rhs = vec![0.0; n + m];
    rhs[n..].copy_from_slice(&sc.b);
    let primal = kkt.solve(&sc, &h, &rhs, refine);
    rhs[..n].iter_mut().zip(&sc.q).for_each(|(r, q)| *r = -q);
    rhs[n..].iter_mut().for_each(|r| *r = 0.0);
    let dual = kkt.solve(&sc, &h, &rhs, refine);

    let mut it = Iterate {
        x: primal[..n].to_vec(),
        z: dual[n..].to_vec(),
        s: (0..m).map(|i| if i < n_eq { 0.0 } else { -primal[n + i] }).collect(),
        tau: 1.0,
        kappa: 1.0,
    };
    shift_into_cone(&mut it.s[n_eq..]);
    shift_into_cone(&mut it.z[n_eq..]);

    let b_norm = norm_inf(&prob.b);
    let q_norm = norm_inf(&prob.q);
    let mut status = SolveStatus::IterationLimit;
    let mut certificate = None;
    let mut iterations = 0;
    let (mut pres, mut dres, mut gap) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);

    let mut rx = vec![0.0; n];
    let mut rz = vec![0.0; m];
    let mut px = vec![0.0; n];
    for iter in 0..=settings.max_iterations {
        iterations = iter;
        // Scaled residuals.
        for j in 0..n {
            px[j] = sc.p[j] * it.x[j];
            rx[j] = px[j] + sc.q[j] * it.tau;
        }
        sc.a.gemv_t(1.0, &it.z, &mut rx);
        for i in 0..m {
            rz[i] = it.s[i] - sc.b[i] * it.tau;
        }
        sc.a.gemv(1.0, &it.x, &mut rz);
        let xpx = dot(&it.x, &px);
        let rtau = dot(&sc.q, &it.x) + dot(&sc.b, &it.z) + it.kappa + xpx / it.tau;

        // Unscaled convergence metrics.
        let xu: Vec<f64> = (0..n).map(|j| sc.d[j] * it.x[j] / it.tau).collect();
        let zu: Vec<f64> = (0..m).map(|i| sc.e[i] * it.z[i] / (sc.c * it.tau)).collect();
        let su: Vec<f64> = (0..m).map(|i| it.s[i] / (sc.e[i] * it.tau)).collect();
        let mut axu = vec![0.0; m];
        prob.a.gemv(1.0, &xu, &mut axu);
        let mut atz = vec![0.0; n];
        prob.a.gemv_t(1.0, &zu, &mut atz);
        let pxu: Vec<f64> = (0..n)
            .map(|j| if prob.p_diag.is_empty() { 0.0 } else { prob.p_diag[j] * xu[j] })
            .collect();
        pres = (0..m).map(|i| (axu[i] + su[i] - prob.b[i]).abs()).fold(0.0, f64::max);
        dres = (0..n).map(|j| (pxu[j] + atz[j] + prob.q[j]).abs()).fold(0.0, f64::max);
        let quad = dot(&xu, &pxu);
        let pobj = 0.5 * quad + dot(&prob.q, &xu);
        let dobj = -0.5 * quad - dot(&prob.b, &zu);
        gap = (pobj - dobj).abs();
        let pscale = 1.0 + b_norm.max(norm_inf(&axu)).max(norm_inf(&su));
        let dscale = 1.0 + q_norm.max(norm_inf(&pxu)).max(norm_inf(&atz));
        if pres <= settings.eps_feasibility * pscale
            && dres <= settings.eps_feasibility * dscale
            && gap <= settings.eps_gap_abs + settings.eps_gap_rel * pobj.abs().min(dobj.abs())
        {
            status = SolveStatus::Optimal;
            break;
        }

        // Infeasibility certificates on the unnormalized iterate.
        let zc: Vec<f64> = (0..m).map(|i| sc.e[i] * it.z[i]).collect();
        let bz = dot(&prob.b, &zc);
        if bz < 0.0 {
            let mut atzc = vec![0.0; n];
            prob.a.gemv_t(1.0, &zc, &mut atzc);
            if norm_inf(&atzc) <= settings.eps_infeasible * (-bz) {
                status = SolveStatus::PrimalInfeasible;
                certificate = Some(zc.iter().map(|v| v / -bz).collect());
                break;
            }
        }
        // Ray candidates: the unnormalized primal iterate, and the negated
        // dual residual, which is a ray whenever the dual residual cannot be
        // reduced further.
        let xc: Vec<f64> = (0..n).map(|j| sc.d[j] * it.x[j]).collect();
        let neg_dres: Vec<f64> = (0..n).map(|j| -(pxu[j] + atz[j] + prob.q[j])).collect();
        if let Some(ray) = [xc, neg_dres].into_iter().find(|d| is_ray(prob, d, settings.eps_infeasible)) {
            let qd = dot(&prob.q, &ray);
            status = SolveStatus::DualInfeasible;
            certificate = Some(ray.iter().map(|v| v / -qd).collect());
            break;
        }
        if iter == settings.max_iterations {
            break;
        }

        // Newton systems.
        for i in n_eq..m {
            h[i] = it.s[i] / it.z[i];
        }
        kkt.update(&sc, &h)?;
        let xi: Vec<f64> = it.x.iter().map(|v| v / it.tau).collect();
        let pxi: Vec<f64> = (0..n).map(|j| sc.p[j] * xi[j]).collect();
        let xi_p_xi = dot(&xi, &pxi);
        let q2: Vec<f64> = (0..n).map(|j| sc.q[j] + 2.0 * pxi[j]).collect();

        let mut rhs1 = vec![0.0; n + m];
        rhs1[..n].iter_mut().zip(&sc.q).for_each(|(r, q)| *r = -q);
        rhs1[n..].copy_from_slice(&sc.b);
        let sol1 = kkt.solve(&sc, &h, &rhs1, refine);
        let denom = dot(&q2, &sol1[..n]) + dot(&sc.b, &sol1[n..]) - xi_p_xi - it.kappa / it.tau;

        let direction = |dx_: &[f64], dz_: &[f64], dtau_: f64, ds_: &[f64], dkappa_: f64| -> Direction {
            let mut rhs2 = vec![0.0; n + m];
            for j in 0..n {
                rhs2[j] = -dx_[j];
            }
            for i in 0..m {
                rhs2[n + i] = -dz_[i] + if i < n_eq { 0.0 } else { ds_[i] / it.z[i] };
            }
            let sol2 = kkt.solve(&sc, &h, &rhs2, refine);
            let dtau = (-dtau_ + dkappa_ / it.tau - dot(&q2, &sol2[..n]) - dot(&sc.b, &sol2[n..])) / denom;
            let x: Vec<f64> = (0..n).map(|j| sol2[j] + dtau * sol1[j]).collect();
            let z: Vec<f64> = (0..m).map(|i| sol2[n + i] + dtau * sol1[n + i]).collect();
            let s: Vec<f64> = (0..m)
                .map(|i| if i < n_eq { 0.0 } else { -ds_[i] / it.z[i] - h[i] * z[i] })
                .collect();
            let kappa = -(dkappa_ + it.kappa * dtau) / it.tau;
            Direction { x, z, s, tau: dtau, kappa }
        };

        let mu = (dot(&it.s[n_eq..], &it.z[n_eq..]) + it.tau * it.kappa) / (nu + 1.0);
        let sz: Vec<f64> = (0..m).map(|i| if i < n_eq { 0.0 } else { it.s[i] * it.z[i] }).collect();
        let aff = direction(&rx, &rz, rtau, &sz, it.tau * it.kappa);
        let alpha_aff = max_step(&it, &aff, n_eq);
        let sigma = (1.0 - alpha_aff).powi(3);

        let w = 1.0 - sigma;
        let rxw: Vec<f64> = rx.iter().map(|v| w * v).collect();
        let rzw: Vec<f64> = rz.iter().map(|v| w * v).collect();
        let ds: Vec<f64> = (0..m)
            .map(|i| if i < n_eq { 0.0 } else { sz[i] + aff.s[i] * aff.z[i] - sigma * mu })
            .collect();
        let dk = it.tau * it.kappa + aff.tau * aff.kappa - sigma * mu;
        let dir = direction(&rxw, &rzw, w * rtau, &ds, dk);
        let alpha = (STEP_FRACTION * max_step(&it, &dir, n_eq)).min(1.0);
        if !(alpha > 0.0) || !dir.tau.is_finite() {
            break;
        }
        for j in 0..n {
            it.x[j] += alpha * dir.x[j];
        }
        for i in 0..m {
            it.z[i] += alpha * dir.z[i];
            it.s[i] += alpha * dir.s[i];
        }
        it.tau += alpha * dir.tau;
        it.kappa += alpha * dir.kappa;
    }

    let x: Vec<f64> = (0..n).map(|j| sc.d[j] * it.x[j] / it.tau).collect();
    let z: Vec<f64> = (0..m).map(|i| sc.e[i] * it.z[i] / (sc.c * it.tau)).collect();
    let s: Vec<f64> = (0..m).map(|i| it.s[i] / (sc.e[i] * it.tau)).collect();
    let objective = match status {
        SolveStatus::PrimalInfeasible => f64::INFINITY,
        SolveStatus::DualInfeasible => f64::NEG_INFINITY,
        _ => prob.objective(&x),
    };
    Ok(QpSolution {
        status,
        x,
        z,
        s,
        objective,
        iterations,
        primal_residual: pres,
        dual_residual: dres,
        gap,
        certificate,
    })
}
