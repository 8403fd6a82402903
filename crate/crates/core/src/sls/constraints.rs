use std::fmt;

use nalgebra::DMatrix;

use super::quartet::ResponseQuartet;
use crate::error::{Error, Result};
use crate::lti::{FirOperator, LtiSystem};
use crate::solver::{CscMatrix, Triplets};

/// One of the four response blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Xw,
    Xe,
    Uw,
    Ue,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::Xw, Block::Xe, Block::Uw, Block::Ue];

    pub fn name(self) -> &'static str {
        match self {
            Block::Xw => "Phi_xw",
            Block::Xe => "Phi_xe",
            Block::Uw => "Phi_uw",
            Block::Ue => "Phi_ue",
        }
    }
}

/// Stacking of the quartet taps into one coefficient vector: tap-major,
/// then block in `Block::ALL` order, then row-major entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarLayout {
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub horizon: usize,
}

impl VarLayout {
    pub fn new(sys: &LtiSystem, horizon: usize) -> Self {
        Self { n: sys.n(), m: sys.m(), l: sys.l(), horizon }
    }

    pub fn shape(&self, b: Block) -> (usize, usize) {
        match b {
            Block::Xw => (self.n, self.n),
            Block::Xe => (self.n, self.l),
            Block::Uw => (self.m, self.n),
            Block::Ue => (self.m, self.l),
        }
    }

    fn per_tap(&self) -> usize {
        (self.n + self.m) * (self.n + self.l)
    }

    fn block_offset(&self, b: Block) -> usize {
        let (n, m, l) = (self.n, self.m, self.l);
        match b {
            Block::Xw => 0,
            Block::Xe => n * n,
            Block::Uw => n * n + n * l,
            Block::Ue => n * n + n * l + m * n,
        }
    }

    pub fn len(&self) -> usize {
        self.horizon * self.per_tap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of entry `(i, j)` of tap `t` (1-based) of block `b`.
    pub fn index(&self, b: Block, t: usize, i: usize, j: usize) -> usize {
        debug_assert!(t >= 1 && t <= self.horizon);
        let (_, cols) = self.shape(b);
        (t - 1) * self.per_tap() + self.block_offset(b) + i * cols + j
    }

    pub fn to_vector(&self, q: &ResponseQuartet) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        for b in Block::ALL {
            let f = block_of(q, b);
            let (rows, cols) = self.shape(b);
            for t in 1..=self.horizon {
                let tap = f.tap(t);
                for i in 0..rows {
                    for j in 0..cols {
                        v[self.index(b, t, i, j)] = tap[(i, j)];
                    }
                }
            }
        }
        v
    }

    pub fn from_vector(&self, v: &[f64]) -> Result<ResponseQuartet> {
        let build = |b: Block| -> Result<FirOperator> {
            let (rows, cols) = self.shape(b);
            FirOperator::new(
                (1..=self.horizon)
                    .map(|t| DMatrix::from_fn(rows, cols, |i, j| v[self.index(b, t, i, j)]))
                    .collect(),
            )
        };
        ResponseQuartet::new(build(Block::Xw)?, build(Block::Xe)?, build(Block::Uw)?, build(Block::Ue)?)
    }
}

pub fn block_of(q: &ResponseQuartet, b: Block) -> &FirOperator {
    match b {
        Block::Xw => &q.phi_xw,
        Block::Xe => &q.phi_xe,
        Block::Uw => &q.phi_uw,
        Block::Ue => &q.phi_ue,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `Phi_xw(1) = I`, `Phi_xe(1) = 0`, `Phi_uw(1) = 0`.
    Initial,
    /// `[Phi_xw Phi_xe](k+1) = A [Phi_xw Phi_xe](k) + B [Phi_uw Phi_ue](k)`.
    StateRecursion,
    /// `[Phi_xw; Phi_uw](k+1) = [Phi_xw; Phi_uw](k) A + [Phi_xe; Phi_ue](k) C`.
    OutputRecursion,
    /// All four responses vanish at tap T.
    Terminal,
}

/// Provenance of one equality row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowLabel {
    pub family: Family,
    /// Tap index (k for recursions, 1 or T for boundary rows).
    pub tap: usize,
    pub block: Block,
    pub row: usize,
    pub col: usize,
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let family = match self.family {
            Family::Initial => "initial tap",
            Family::StateRecursion => "state recursion",
            Family::OutputRecursion => "output recursion",
            Family::Terminal => "terminal tap",
        };
        write!(f, "{family} k={} {}({},{})", self.tap, self.block.name(), self.row, self.col)
    }
}

/// Realizability constraints `M vec(Phi) = b` of a strictly proper
/// FIR closed loop.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub layout: VarLayout,
    pub matrix: CscMatrix,
    pub rhs: Vec<f64>,
    pub labels: Vec<RowLabel>,
}

impl ConstraintSystem {
    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    /// Expected row count for a system with dimensions `(n, m, l)`.
    pub fn expected_rows(n: usize, m: usize, l: usize, horizon: usize) -> usize {
        let initial = n * n + n * l + m * n;
        let state = n * (n + l);
        let output = (n + m) * n;
        let terminal = (n + m) * (n + l);
        initial + (horizon - 1) * (state + output) + terminal
    }

    /// Max-entry residual and the label of the worst row.
    pub fn residual(&self, q: &ResponseQuartet) -> Result<(f64, Option<RowLabel>)> {
        if q.horizon() != self.layout.horizon || q.dims() != (self.layout.n, self.layout.m, self.layout.l) {
            return Err(Error::Dimension("quartet does not match the constraint layout".into()));
        }
        let v = self.layout.to_vector(q);
        Ok(self.residual_of(&v))
    }

    pub fn residual_of(&self, v: &[f64]) -> (f64, Option<RowLabel>) {
        let mut r: Vec<f64> = self.rhs.iter().map(|b| -b).collect();
        self.matrix.gemv(1.0, v, &mut r);
        let mut worst = 0.0;
        let mut label = None;
        for (i, ri) in r.iter().enumerate() {
            if ri.abs() > worst {
                worst = ri.abs();
                label = Some(self.labels[i]);
            }
        }
        (worst, label)
    }
}

struct Assembler {
    t: Triplets,
    rhs: Vec<f64>,
    labels: Vec<RowLabel>,
}

impl Assembler {
    fn row(&mut self, label: RowLabel, rhs: f64) -> usize {
        let r = self.t.add_row();
        self.rhs.push(rhs);
        self.labels.push(label);
        r
    }
}

/// Assembles the realizability constraints for horizon `T >= 2`.
pub fn assemble_constraints(sys: &LtiSystem, horizon: usize) -> Result<ConstraintSystem> {
    if horizon < 2 {
        return Err(Error::InvalidArgument(format!("FIR horizon must be at least 2, got {horizon}")));
    }
    let layout = VarLayout::new(sys, horizon);
    let (n, m, l) = (layout.n, layout.m, layout.l);
    let mut asm = Assembler { t: Triplets::new(0, layout.len()), rhs: vec![], labels: vec![] };
    let label = |family, tap, block, row, col| RowLabel { family, tap, block, row, col };

    // Initial taps.
    for (b, rows, cols) in [(Block::Xw, n, n), (Block::Xe, n, l), (Block::Uw, m, n)] {
        for i in 0..rows {
            for j in 0..cols {
                let target = if b == Block::Xw && i == j { 1.0 } else { 0.0 };
                let r = asm.row(label(Family::Initial, 1, b, i, j), target);
                asm.t.push(r, layout.index(b, 1, i, j), 1.0);
            }
        }
    }

    for k in 1..horizon {
        // Phi_x?(k+1) - A Phi_x?(k) - B Phi_u?(k) = 0, for ? in {w, e}.
        for (bx, bu, cols) in [(Block::Xw, Block::Uw, n), (Block::Xe, Block::Ue, l)] {
            for i in 0..n {
                for j in 0..cols {
                    let r = asm.row(label(Family::StateRecursion, k, bx, i, j), 0.0);
                    asm.t.push(r, layout.index(bx, k + 1, i, j), 1.0);
                    for p in 0..n {
                        asm.t.push(r, layout.index(bx, k, p, j), -sys.a[(i, p)]);
                    }
                    for p in 0..m {
                        asm.t.push(r, layout.index(bu, k, p, j), -sys.b[(i, p)]);
                    }
                }
            }
        }
        // Phi_?w(k+1) - Phi_?w(k) A - Phi_?e(k) C = 0, for ? in {x, u}.
        for (bw, be, rows) in [(Block::Xw, Block::Xe, n), (Block::Uw, Block::Ue, m)] {
            for i in 0..rows {
                for j in 0..n {
                    let r = asm.row(label(Family::OutputRecursion, k, bw, i, j), 0.0);
                    asm.t.push(r, layout.index(bw, k + 1, i, j), 1.0);
                    for p in 0..n {
                        asm.t.push(r, layout.index(bw, k, i, p), -sys.a[(p, j)]);
                    }
                    for p in 0..l {
                        asm.t.push(r, layout.index(be, k, i, p), -sys.c[(p, j)]);
                    }
                }
            }
        }
    }

    for b in Block::ALL {
        let (rows, cols) = layout.shape(b);
        for i in 0..rows {
            for j in 0..cols {
                let r = asm.row(label(Family::Terminal, horizon, b, i, j), 0.0);
                asm.t.push(r, layout.index(b, horizon, i, j), 1.0);
            }
        }
    }

    debug_assert_eq!(asm.rhs.len(), ConstraintSystem::expected_rows(n, m, l, horizon));
    Ok(ConstraintSystem { layout, matrix: asm.t.to_csc(), rhs: asm.rhs, labels: asm.labels })
}
