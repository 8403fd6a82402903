//! Nominal and robustness-constrained synthesis as convex programs over the
//! stacked response taps.
//!
//! Every program shares the realizability equalities. Induced l_inf norms
//! enter through epigraph variables (one absolute value per entry and one
//! row-sum bound per output row); the squared Frobenius cost enters as a
//! diagonal quadratic on the entries, with an auxiliary variable whenever an
//! entry mixes several taps coefficients.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::bounds::{gamma_from_norm, nominal_closeness_bound, robustness_margin, xe_norm, xw_norm, RobustnessParams};
use super::constraints::{assemble_constraints, Block, ConstraintSystem, VarLayout};
use super::quartet::ResponseQuartet;
use crate::error::{Error, Result};
use crate::lti::LtiSystem;
use crate::solver::{solve_qp, QpProblem, SolveStatus, SolverSettings, Triplets};

/// Equality residual and inequality slack tolerance for an optimal result.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-8;
/// Relative width at which the gamma search stops.
pub const GAMMA_RELATIVE_WIDTH: f64 = 1e-3;
/// Lower end of the gamma bracket when the training error is zero.
pub const GAMMA_FLOOR: f64 = 1e-6;
/// Objective gap accepted for H2 programs.
const H2_GAP_TOLERANCE: f64 = 1e-14;
const GAMMA_BRACKET_RATIO: f64 = 1e3;
const GAMMA_EXPANSIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisMode {
    NominalL1,
    RobustL1,
    RobustH2,
    Lqg,
}

impl SynthesisMode {
    pub fn label(self) -> &'static str {
        match self {
            SynthesisMode::NominalL1 => "nominal-l1",
            SynthesisMode::RobustL1 => "robust-l1",
            SynthesisMode::RobustH2 => "robust-h2",
            SynthesisMode::Lqg => "lqg",
        }
    }
}

/// Costs, noise levels and perception bounds for one synthesis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSpec {
    /// FIR horizon `T`.
    pub horizon: usize,
    /// Diagonal of the state weight `Q`.
    pub q_diag: Vec<f64>,
    /// Diagonal of the input weight `R`.
    pub r_diag: Vec<f64>,
    /// Disturbance level for the nominal cost.
    pub eps_w: f64,
    /// Measurement-error level for the nominal cost.
    pub eps_e: f64,
    /// Reference increment bound `Delta_ref`.
    pub delta_ref: f64,
    /// Distance from the reference to the training data.
    pub r_ref: f64,
    /// Safe-set radius `r`.
    pub radius: f64,
    /// Slope bound `S`.
    pub slope: f64,
    /// Training error bound `R0`.
    pub r0: f64,
    /// Optional cap on `||C Phi_xe||`; absent means no cap.
    #[serde(default)]
    pub alpha: Option<f64>,
    pub mode: SynthesisMode,
}

impl SynthesisSpec {
    pub fn validate(&self, sys: &LtiSystem) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.horizon < 2 {
            return bad(format!("horizon must be at least 2, got {}", self.horizon));
        }
        if self.q_diag.len() != sys.n() || self.r_diag.len() != sys.m() {
            return Err(Error::Dimension(format!(
                "cost weights have lengths ({}, {}), plant needs ({}, {})",
                self.q_diag.len(),
                self.r_diag.len(),
                sys.n(),
                sys.m()
            )));
        }
        if self.q_diag.iter().chain(&self.r_diag).any(|w| !(w.is_finite() && *w > 0.0)) {
            return bad("cost weights must be positive".into());
        }
        let bounds = [
            ("eps_w", self.eps_w),
            ("eps_e", self.eps_e),
            ("delta_ref", self.delta_ref),
            ("r_ref", self.r_ref),
            ("radius", self.radius),
            ("slope", self.slope),
            ("r0", self.r0),
        ];
        for (name, v) in bounds {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be a finite nonnegative number, got {v}"));
            }
        }
        if let Some(a) = self.alpha {
            if !(a >= 0.0) {
                return bad(format!("alpha must be nonnegative, got {a}"));
            }
        }
        match self.mode {
            SynthesisMode::RobustL1 if self.radius <= 0.0 => bad("robust synthesis needs a positive radius".into()),
            SynthesisMode::RobustH2 if self.radius <= 0.0 && self.alpha.is_none() => {
                bad("robust H2 synthesis needs a positive radius or an alpha cap".into())
            }
            _ => Ok(()),
        }
    }

    pub fn robustness(&self) -> RobustnessParams {
        RobustnessParams {
            radius: self.radius,
            slope: self.slope,
            r0: self.r0,
            delta_ref: self.delta_ref,
            r_ref: self.r_ref,
        }
    }

    fn uses_robust_inequalities(&self) -> bool {
        match self.mode {
            SynthesisMode::RobustL1 => true,
            SynthesisMode::RobustH2 => self.radius > 0.0,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisStatus {
    Optimal,
    Infeasible,
    ToleranceReached,
}

/// Constraint slacks of a synthesized quartet, evaluated from its taps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub realizability_residual: f64,
    pub worst_row: Option<String>,
    /// `||C Phi_xe||`.
    pub xe_norm: f64,
    /// `||C Phi_xw H||`.
    pub xw_norm: f64,
    pub nominal_closeness: f64,
    /// Left side of the robustness condition; at most 1 when it holds.
    pub robustness_margin: Option<f64>,
    /// `gamma (1 - S ||C Phi_xe||) - (Delta ||C Phi_xw H|| + r_ref + R0)`.
    pub gamma_slack: Option<f64>,
    /// `alpha - ||C Phi_xe||`.
    pub alpha_slack: Option<f64>,
}

impl Margins {
    /// Smallest slack over the enforced inequalities.
    pub fn worst_slack(&self) -> f64 {
        [self.robustness_margin.map(|m| 1.0 - m), self.gamma_slack, self.alpha_slack]
            .into_iter()
            .flatten()
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaEvaluation {
    pub gamma: f64,
    /// `None` when the inner program is infeasible.
    pub cost: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub mode: SynthesisMode,
    pub status: SynthesisStatus,
    pub quartet: Option<ResponseQuartet>,
    pub cost: Option<f64>,
    /// Perception-error bound achieved by the quartet.
    pub gamma: Option<f64>,
    /// Budget the robust inequalities were enforced with.
    pub gamma_search: Option<f64>,
    pub margins: Option<Margins>,
    pub evaluations: Vec<GammaEvaluation>,
    pub message: String,
}

impl SynthesisResult {
    fn infeasible(mode: SynthesisMode, message: String, evaluations: Vec<GammaEvaluation>) -> Self {
        Self {
            mode,
            status: SynthesisStatus::Infeasible,
            quartet: None,
            cost: None,
            gamma: None,
            gamma_search: None,
            margins: None,
            evaluations,
            message,
        }
    }

    /// Multi-line human-readable report.
    pub fn summary(&self) -> String {
        let mut s = format!("mode: {}\nstatus: {:?}\n", self.mode.label(), self.status);
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6e}"));
        s += &format!("cost: {}\n", opt(self.cost));
        s += &format!("gamma (achieved): {}\n", opt(self.gamma));
        s += &format!("gamma (search): {}\n", opt(self.gamma_search));
        if let Some(m) = &self.margins {
            s += &format!("realizability residual: {:.3e}\n", m.realizability_residual);
            s += &format!("||C Phi_xe||: {:.6}\n||C Phi_xw H||: {:.6}\n", m.xe_norm, m.xw_norm);
            s += &format!("nominal closeness: {:.6}\n", m.nominal_closeness);
            s += &format!("robustness margin: {}\n", opt(m.robustness_margin));
            s += &format!("gamma slack: {}\n", opt(m.gamma_slack));
            s += &format!("alpha slack: {}\n", opt(m.alpha_slack));
        }
        if !self.evaluations.is_empty() {
            s += &format!("gamma evaluations: {}\n", self.evaluations.len());
        }
        s += &format!("message: {}\n", self.message);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Objective {
    L1,
    H2,
}

/// One convex program at a fixed gamma.
#[derive(Debug, Clone, Copy)]
struct Program {
    objective: Objective,
    /// Weights on the disturbance and measurement-error columns.
    weights: (f64, f64),
    robust: Option<RobustnessParams>,
    /// Budget for the gamma inequality; `None` drops it.
    gamma: Option<f64>,
    alpha: Option<f64>,
}

type Expr = Vec<(usize, f64)>;

/// `(L Phi_b(t) R)_{ij}` as a sparse combination of layout variables.
fn bilinear(layout: &VarLayout, b: Block, t: usize, l: &DMatrix<f64>, r: &DMatrix<f64>, i: usize, j: usize) -> Expr {
    let (rows, cols) = layout.shape(b);
    let mut e = Vec::new();
    for p in 0..rows {
        let lp = l[(i, p)];
        if lp == 0.0 {
            continue;
        }
        for s in 0..cols {
            let c = lp * r[(s, j)];
            if c != 0.0 {
                e.push((layout.index(b, t, p, s), c));
            }
        }
    }
    e
}

struct Builder {
    nvars: usize,
    q: Vec<f64>,
    p: Vec<f64>,
    eq: Vec<(Expr, f64)>,
    ineq: Vec<(Expr, f64)>,
}

impl Builder {
    fn new(nvars: usize) -> Self {
        Self { nvars, q: vec![0.0; nvars], p: vec![0.0; nvars], eq: vec![], ineq: vec![] }
    }

    fn var(&mut self) -> usize {
        self.q.push(0.0);
        self.p.push(0.0);
        self.nvars += 1;
        self.nvars - 1
    }

    /// Epigraph variable of the induced l_inf norm of an operator given by
    /// its rows, each a list of entry expressions.
    fn l1_norm(&mut self, rows: &[Vec<Expr>]) -> usize {
        let nu = self.var();
        for row in rows {
            let mut sum: Expr = vec![(nu, -1.0)];
            for e in row {
                let a = self.var();
                let mut pos = e.clone();
                pos.push((a, -1.0));
                let neg: Expr = e.iter().map(|&(v, c)| (v, -c)).chain([(a, -1.0)]).collect();
                self.ineq.push((pos, 0.0));
                self.ineq.push((neg, 0.0));
                sum.push((a, 1.0));
            }
            self.ineq.push((sum, 0.0));
        }
        nu
    }

    /// Adds `sum_e e^2` to the objective.
    fn sum_of_squares(&mut self, exprs: &[Expr]) {
        for e in exprs {
            match e.as_slice() {
                [] => {}
                [(v, c)] => self.p[*v] += 2.0 * c * c,
                _ => {
                    let z = self.var();
                    let mut def = e.clone();
                    def.push((z, -1.0));
                    self.eq.push((def, 0.0));
                    self.p[z] += 2.0;
                }
            }
        }
    }

    fn into_problem(self, cs: &ConstraintSystem) -> QpProblem {
        let n_eq = cs.num_rows() + self.eq.len();
        let nrows = n_eq + self.ineq.len();
        let mut t = Triplets::new(nrows, self.nvars);
        let mat = &cs.matrix;
        for j in 0..mat.ncols {
            for p in mat.colptr[j]..mat.colptr[j + 1] {
                t.push(mat.rowind[p], j, mat.values[p]);
            }
        }
        let mut b = cs.rhs.clone();
        for (row, (e, rhs)) in self.eq.iter().chain(&self.ineq).enumerate() {
            for &(v, c) in e {
                t.push(cs.num_rows() + row, v, c);
            }
            b.push(*rhs);
        }
        let p_diag = if self.p.iter().any(|&v| v != 0.0) { self.p } else { vec![] };
        QpProblem { p_diag, q: self.q, a: t.to_csc(), b, n_eq }
    }
}

struct Outcome {
    status: SolveStatus,
    quartet: Option<ResponseQuartet>,
    objective: f64,
}

fn solve_program(sys: &LtiSystem, spec: &SynthesisSpec, cs: &ConstraintSystem, prog: &Program) -> Result<Outcome> {
    let layout = cs.layout;
    let (n, m, l, nw) = (sys.n(), sys.m(), sys.l(), sys.nw());
    let mut bld = Builder::new(layout.len());

    let sq = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, spec.q_diag.iter().map(|v| v.sqrt())));
    let sr = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(m, spec.r_diag.iter().map(|v| v.sqrt())));
    let hw = &sys.h * prog.weights.0;
    let ie = DMatrix::identity(l, l) * prog.weights.1;

    // Rows of W_l [Phi_xw Phi_xe; Phi_uw Phi_ue] W_r over all taps.
    let mut cost_rows: Vec<Vec<Expr>> = vec![Vec::new(); n + m];
    for t in 1..=layout.horizon {
        for (i, row) in cost_rows.iter_mut().enumerate() {
            let (lw, bw, be, ii) =
                if i < n { (&sq, Block::Xw, Block::Xe, i) } else { (&sr, Block::Uw, Block::Ue, i - n) };
            for j in 0..nw {
                let e = bilinear(&layout, bw, t, lw, &hw, ii, j);
                if !e.is_empty() {
                    row.push(e);
                }
            }
            for j in 0..l {
                let e = bilinear(&layout, be, t, lw, &ie, ii, j);
                if !e.is_empty() {
                    row.push(e);
                }
            }
        }
    }
    match prog.objective {
        Objective::L1 => {
            let nu = bld.l1_norm(&cost_rows);
            bld.q[nu] = 1.0;
        }
        Objective::H2 => {
            let all: Vec<Expr> = cost_rows.into_iter().flatten().collect();
            bld.sum_of_squares(&all);
        }
    }

    let needs_xe = prog.robust.is_some() || prog.alpha.is_some();
    if needs_xe {
        let eye_l = DMatrix::identity(l, l);
        let rows: Vec<Vec<Expr>> = (0..l)
            .map(|i| {
                (1..=layout.horizon)
                    .flat_map(|t| (0..l).map(move |j| (t, j)))
                    .map(|(t, j)| bilinear(&layout, Block::Xe, t, &sys.c, &eye_l, i, j))
                    .filter(|e| !e.is_empty())
                    .collect()
            })
            .collect();
        let nu_xe = bld.l1_norm(&rows);
        if let Some(alpha) = prog.alpha {
            bld.ineq.push((vec![(nu_xe, 1.0)], alpha));
        }
        if let Some(p) = prog.robust {
            let rows: Vec<Vec<Expr>> = (0..l)
                .map(|i| {
                    (1..=layout.horizon)
                        .flat_map(|t| (0..nw).map(move |j| (t, j)))
                        .map(|(t, j)| bilinear(&layout, Block::Xw, t, &sys.c, &sys.h, i, j))
                        .filter(|e| !e.is_empty())
                        .collect()
                })
                .collect();
            let nu_w = bld.l1_norm(&rows);
            let r = p.radius;
            bld.ineq.push((vec![(nu_xe, p.slope + p.r0 / r), (nu_w, p.delta_ref / r)], 1.0 - p.r_ref / r));
            if let Some(g) = prog.gamma {
                bld.ineq.push((vec![(nu_w, p.delta_ref), (nu_xe, g * p.slope)], g - p.r_ref - p.r0));
            }
        }
    }

    let qp = bld.into_problem(cs);
    let settings = match prog.objective {
        // A quadratic cost pins the minimizer only to about the square root
        // of the objective gap, so H2 programs close the gap further.
        Objective::H2 => SolverSettings { eps_gap_abs: H2_GAP_TOLERANCE, eps_gap_rel: H2_GAP_TOLERANCE, ..SolverSettings::default() },
        Objective::L1 => SolverSettings::default(),
    };
    let sol = solve_qp(&qp, &settings)?;
    let quartet = match sol.status {
        SolveStatus::Optimal => Some(layout.from_vector(&sol.x[..layout.len()])?),
        _ => None,
    };
    Ok(Outcome { status: sol.status, quartet, objective: sol.objective })
}

/// Slacks of `q` against the inequalities enforced by `spec` at `gamma`.
pub fn evaluate_margins(sys: &LtiSystem, spec: &SynthesisSpec, q: &ResponseQuartet, gamma: Option<f64>) -> Result<Margins> {
    let cs = assemble_constraints(sys, q.horizon())?;
    evaluate_with(sys, spec, &cs, q, gamma)
}

fn evaluate_with(
    sys: &LtiSystem,
    spec: &SynthesisSpec,
    cs: &ConstraintSystem,
    q: &ResponseQuartet,
    gamma: Option<f64>,
) -> Result<Margins> {
    let (residual, row) = cs.residual(q)?;
    let xe = xe_norm(q, &sys.c)?;
    let xw = xw_norm(q, &sys.c, &sys.h)?;
    let robust = spec.uses_robust_inequalities();
    let p = spec.robustness();
    let robustness_margin = if robust { Some(robustness_margin(q, &p, &sys.c, &sys.h)?) } else { None };
    let gamma_slack = match (robust, gamma) {
        (true, Some(g)) => Some(g * (1.0 - p.slope * xe) - (p.delta_ref * xw + p.r_ref + p.r0)),
        _ => None,
    };
    Ok(Margins {
        realizability_residual: residual,
        worst_row: row.map(|r| r.to_string()),
        xe_norm: xe,
        xw_norm: xw,
        nominal_closeness: nominal_closeness_bound(q, spec.delta_ref, spec.r_ref, &sys.c, &sys.h)?,
        robustness_margin,
        gamma_slack,
        alpha_slack: spec.alpha.map(|a| a - xe),
    })
}

/// Assembles a result from a solved program, downgrading the status if the
/// recovered taps miss the feasibility tolerance.
fn finish(
    sys: &LtiSystem,
    spec: &SynthesisSpec,
    cs: &ConstraintSystem,
    q: ResponseQuartet,
    cost: f64,
    gamma_search: Option<f64>,
    evaluations: Vec<GammaEvaluation>,
) -> Result<SynthesisResult> {
    let margins = evaluate_with(sys, spec, cs, &q, gamma_search)?;
    let gamma = if spec.slope * margins.xe_norm < super::bounds::CONTRACTION_THRESHOLD {
        Some(gamma_from_norm(margins.xe_norm, spec.slope, spec.r0, margins.nominal_closeness)?)
    } else {
        None
    };
    let mut status = SynthesisStatus::Optimal;
    let mut message = "solved".to_string();
    if margins.realizability_residual > FEASIBILITY_TOLERANCE {
        status = SynthesisStatus::ToleranceReached;
        message = format!(
            "realizability residual {:.3e} exceeds {FEASIBILITY_TOLERANCE:.0e} at {}",
            margins.realizability_residual,
            margins.worst_row.as_deref().unwrap_or("?")
        );
    } else if margins.worst_slack() < -FEASIBILITY_TOLERANCE {
        status = SynthesisStatus::ToleranceReached;
        message = format!("inequality slack {:.3e} below -{FEASIBILITY_TOLERANCE:.0e}", margins.worst_slack());
    }
    Ok(SynthesisResult {
        mode: spec.mode,
        status,
        quartet: Some(q),
        cost: Some(cost),
        gamma,
        gamma_search,
        margins: Some(margins),
        evaluations,
        message,
    })
}

/// Nominal or robust L1 synthesis, depending on `spec.mode`.
pub fn synthesize_l1(sys: &LtiSystem, spec: &SynthesisSpec) -> Result<SynthesisResult> {
    match spec.mode {
        SynthesisMode::NominalL1 | SynthesisMode::RobustL1 => synthesize(sys, spec),
        other => Err(Error::InvalidArgument(format!("{} is not an L1 mode", other.label()))),
    }
}

/// H2 synthesis under the robustness inequalities and/or the alpha cap.
pub fn synthesize_h2_robust(sys: &LtiSystem, spec: &SynthesisSpec) -> Result<SynthesisResult> {
    match spec.mode {
        SynthesisMode::RobustH2 => synthesize(sys, spec),
        other => Err(Error::InvalidArgument(format!("{} is not the robust H2 mode", other.label()))),
    }
}

/// Runs the program selected by `spec.mode`. The LQG baseline is not a
/// response-space program; build it with `lqg_controller`.
pub fn synthesize(sys: &LtiSystem, spec: &SynthesisSpec) -> Result<SynthesisResult> {
    spec.validate(sys)?;
    let objective = match spec.mode {
        SynthesisMode::NominalL1 | SynthesisMode::RobustL1 => Objective::L1,
        SynthesisMode::RobustH2 => Objective::H2,
        SynthesisMode::Lqg => {
            return Err(Error::InvalidArgument("the LQG baseline is not synthesized in response space".into()))
        }
    };
    let cs = assemble_constraints(sys, spec.horizon)?;
    if spec.uses_robust_inequalities() {
        return gamma_search(sys, spec, &cs, objective);
    }
    let prog = Program { objective, weights: (spec.eps_w, spec.eps_e), robust: None, gamma: None, alpha: spec.alpha };
    let out = solve_program(sys, spec, &cs, &prog)?;
    match (out.status, out.quartet) {
        (SolveStatus::Optimal, Some(q)) => finish(sys, spec, &cs, q, out.objective, None, vec![]),
        (SolveStatus::PrimalInfeasible, _) => Ok(SynthesisResult::infeasible(
            spec.mode,
            match spec.alpha {
                Some(a) => format!("no realizable response satisfies ||C Phi_xe|| <= {a}"),
                None => "realizability constraints are infeasible at this horizon".into(),
            },
            vec![],
        )),
        (status, _) => Ok(SynthesisResult {
            status: SynthesisStatus::ToleranceReached,
            ..SynthesisResult::infeasible(spec.mode, format!("solver stopped with {status:?}"), vec![])
        }),
    }
}

struct SearchState {
    evaluations: Vec<GammaEvaluation>,
    best: Option<(f64, f64, ResponseQuartet)>,
}

fn gamma_search(sys: &LtiSystem, spec: &SynthesisSpec, cs: &ConstraintSystem, objective: Objective) -> Result<SynthesisResult> {
    let p = spec.robustness();
    if p.r_ref >= p.radius {
        return Ok(SynthesisResult::infeasible(
            spec.mode,
            format!(
                "robustness condition violated by the r_ref/r term alone: r_ref/r = {:.6} >= 1",
                p.r_ref / p.radius
            ),
            vec![],
        ));
    }
    let program = |gamma: Option<f64>| Program {
        objective,
        weights: (spec.delta_ref, gamma.unwrap_or(1.0)),
        robust: Some(p),
        gamma,
        alpha: spec.alpha,
    };

    let mut state = SearchState { evaluations: Vec::new(), best: None };
    let eval = |gamma: f64, state: &mut SearchState| -> Result<f64> {
        if let Some(e) = state.evaluations.iter().find(|e| e.gamma == gamma) {
            return Ok(e.cost.unwrap_or(f64::INFINITY));
        }
        let out = solve_program(sys, spec, cs, &program(Some(gamma)))?;
        let cost = match (out.status, out.quartet) {
            (SolveStatus::Optimal, Some(q)) => {
                if state.best.as_ref().map_or(true, |b| out.objective < b.1) {
                    state.best = Some((gamma, out.objective, q));
                }
                Some(out.objective)
            }
            _ => None,
        };
        state.evaluations.push(GammaEvaluation { gamma, cost });
        Ok(cost.unwrap_or(f64::INFINITY))
    };

    let lo = if p.r0 > 0.0 { p.r0 } else { GAMMA_FLOOR };
    let mut hi = lo * GAMMA_BRACKET_RATIO;
    let mut expansions = 0;
    while eval(hi, &mut state)?.is_infinite() && expansions < GAMMA_EXPANSIONS {
        hi *= 10.0;
        expansions += 1;
    }
    if state.best.is_none() {
        let margin_only = solve_program(sys, spec, cs, &program(None))?;
        let message = if margin_only.status == SolveStatus::PrimalInfeasible {
            "robustness condition (S + R0/r)||C Phi_xe|| + (Delta/r)||C Phi_xw H|| + r_ref/r <= 1 is infeasible".to_string()
        } else {
            format!("no gamma up to {hi:.3e} satisfies the perception-error inequality")
        };
        let mut res = SynthesisResult::infeasible(spec.mode, message, state.evaluations);
        if margin_only.status != SolveStatus::PrimalInfeasible {
            res.status = SynthesisStatus::ToleranceReached;
        }
        return Ok(res);
    }

    // Golden-section search over log gamma; infeasible points cost +inf
    // and always lie below the feasible ones.
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c.exp(), &mut state)?;
    let mut fd = eval(d.exp(), &mut state)?;
    while (b - a).exp() - 1.0 > GAMMA_RELATIVE_WIDTH {
        if fd.is_infinite() {
            a = d;
            c = a + (1.0 - inv_phi) * (b - a);
            d = a + inv_phi * (b - a);
            fc = eval(c.exp(), &mut state)?;
            fd = eval(d.exp(), &mut state)?;
        } else if fc.is_infinite() || fc >= fd {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d.exp(), &mut state)?;
        } else {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c.exp(), &mut state)?;
        }
    }
    let (gamma, cost, q) = state.best.expect("a feasible gamma was found");
    let mut res = finish(sys, spec, cs, q, cost, Some(gamma), state.evaluations)?;
    if res.status == SynthesisStatus::Optimal {
        res.message = format!("gamma search converged after {} evaluations", res.evaluations.len());
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{double_integrator, lqg_controller};

    fn necessity_plant() -> LtiSystem {
        double_integrator(0.5, 1).unwrap().with_c(DMatrix::identity(2, 2)).unwrap()
    }

    fn h2_spec(alpha: Option<f64>, horizon: usize) -> SynthesisSpec {
        SynthesisSpec {
            horizon,
            q_diag: vec![1.0, 1.0],
            r_diag: vec![1.0],
            eps_w: 1.0,
            eps_e: 1.0,
            delta_ref: 0.0,
            r_ref: 0.0,
            radius: 0.0,
            slope: 0.0,
            r0: 0.0,
            alpha,
            mode: SynthesisMode::RobustH2,
        }
    }

    #[test]
    fn uncapped_h2_matches_lqg() {
        let sys = necessity_plant();
        let res = synthesize(&sys, &h2_spec(Some(1e6), 40)).unwrap();
        assert_eq!(res.status, SynthesisStatus::Optimal, "{}", res.message);
        let i2 = DMatrix::identity(2, 2);
        let ctrl = lqg_controller(&sys, &i2, &DMatrix::identity(1, 1), &i2, &i2).unwrap();
        let lqg = ResponseQuartet::from_closed_loop(&sys, &ctrl, 40).unwrap();
        let diff = res.quartet.unwrap().max_tap_difference(&lqg);
        assert!(diff < 1e-3, "max tap difference {diff}");
    }

    #[test]
    fn zero_cap_is_infeasible() {
        let res = synthesize(&necessity_plant(), &h2_spec(Some(0.0), 20)).unwrap();
        assert_eq!(res.status, SynthesisStatus::Infeasible);
    }

    #[test]
    fn reference_radius_beyond_safe_set_is_infeasible() {
        let sys = double_integrator(0.1, 1).unwrap();
        let spec = SynthesisSpec {
            horizon: 20,
            q_diag: vec![1.0, 1.0],
            r_diag: vec![1.0],
            eps_w: 0.1,
            eps_e: 0.1,
            delta_ref: 0.05,
            r_ref: 2.0,
            radius: 1.0,
            slope: 0.1,
            r0: 0.01,
            alpha: None,
            mode: SynthesisMode::RobustL1,
        };
        let res = synthesize(&sys, &spec).unwrap();
        assert_eq!(res.status, SynthesisStatus::Infeasible);
        assert!(res.message.contains("r_ref/r"));
    }

    #[test]
    fn lqg_mode_and_bad_weights_rejected() {
        let sys = necessity_plant();
        let mut spec = h2_spec(None, 10);
        spec.mode = SynthesisMode::Lqg;
        assert!(synthesize(&sys, &spec).is_err());
        let mut spec = h2_spec(Some(1.0), 10);
        spec.q_diag = vec![1.0];
        assert!(synthesize(&sys, &spec).is_err());
        let spec = h2_spec(None, 10);
        assert!(synthesize(&sys, &spec).is_err(), "robust H2 without radius or cap");
    }
}
