//! Joint distribution criterion: does a distribution over `(A1, A2, B1, B2)`
//! exist whose pairwise marginals are the four observed blocks?
//!
//! The question is the feasibility of `M q = p, q ≥ 0`, where `q` holds the
//! 16 joint cells, `p` the 16 observed block cells plus a normalization
//! entry, and every row of `M` picks the four joint cells consistent with
//! one block cell. Feasibility is decided by phase 1 of the simplex method.

use serde::Serialize;
use thiserror::Error;

use crate::inequalities::marginals;
use crate::inequalities::MarginalPolicy;
use crate::model::{block_from_stats, Cell, CombinationTable, Condition, ExpectationClamp, JointDistribution};
use crate::simplex::{self, LpError, Outcome};
use crate::synth::marginalize;

pub const DEFAULT_LP_TOLERANCE: f64 = 1e-7;
pub const DEFAULT_PIVOT_BUDGET: usize = 10_000;

pub const ROWS: usize = 17;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JdcError {
    #[error("simplex exceeded its pivot budget after {pivots} pivots (best residual {best_residual:e})")]
    IterationLimit { pivots: usize, best_residual: f64 },
}

impl From<LpError> for JdcError {
    fn from(e: LpError) -> Self {
        match e {
            LpError::IterationLimit { pivots, best_residual } => JdcError::IterationLimit { pivots, best_residual },
            // phase 1 alone cannot be unbounded
            LpError::Unbounded => JdcError::IterationLimit {
                pivots: 0,
                best_residual: f64::INFINITY,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JdcConfig {
    pub tolerance: f64,
    pub pivot_budget: usize,
}

impl Default for JdcConfig {
    fn default() -> Self {
        JdcConfig {
            tolerance: DEFAULT_LP_TOLERANCE,
            pivot_budget: DEFAULT_PIVOT_BUDGET,
        }
    }
}

/// The 17×16 system `M q = p`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSystem {
    pub matrix: [[u8; 16]; ROWS],
    pub rhs: [f64; ROWS],
}

/// Row of `M` for block `condition`, cell `cell`.
pub fn row_index(condition: Condition, cell: Cell) -> usize {
    condition.index() * 4 + cell.index()
}

pub fn build_system(table: &CombinationTable) -> LpSystem {
    let mut matrix = [[0u8; 16]; ROWS];
    let mut rhs = [0.0; ROWS];
    for condition in Condition::ALL {
        let block = table.block(condition);
        for cell in Cell::ALL {
            let row = row_index(condition, cell);
            let (sa, sb) = cell.signs();
            for (q, slot) in matrix[row].iter_mut().enumerate() {
                let signs = JointDistribution::signs_of(q);
                let a = signs[usize::from(condition.a_index()) - 1];
                let b = signs[1 + usize::from(condition.b_index())];
                *slot = u8::from(a == sa && b == sb);
            }
            rhs[row] = block.cell(cell);
        }
    }
    matrix[ROWS - 1] = [1; 16];
    rhs[ROWS - 1] = 1.0;
    LpSystem { matrix, rhs }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Feasibility {
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JdcResult {
    pub status: Feasibility,
    pub witness: Option<JointDistribution>,
    /// Phase-1 optimum: total constraint violation of the best `q`.
    pub residual: f64,
    /// Largest single-row violation `|M q - p|` at the same point.
    pub max_violation: f64,
    pub tolerance: f64,
    pub pivots: usize,
}

impl JdcResult {
    pub fn is_feasible(&self) -> bool {
        self.status == Feasibility::Feasible
    }
}

/// Feasible iff the phase-1 optimum is at most `config.tolerance`; the
/// witness is then the phase-1 point rescaled to unit mass.
pub fn solve(system: &LpSystem, config: &JdcConfig) -> Result<JdcResult, JdcError> {
    let a: Vec<Vec<f64>> = system
        .matrix
        .iter()
        .map(|row| row.iter().map(|&v| f64::from(v)).collect())
        .collect();
    let p1 = simplex::phase_one(&a, &system.rhs, config.pivot_budget)?;
    let max_violation = system
        .matrix
        .iter()
        .zip(system.rhs.iter())
        .map(|(row, rhs)| {
            let lhs: f64 = row.iter().zip(&p1.x).map(|(&m, q)| f64::from(m) * q).sum();
            (lhs - rhs).abs()
        })
        .fold(0.0, f64::max);
    let feasible = p1.objective <= config.tolerance;
    let witness = if feasible {
        let mut q = [0.0; 16];
        q.copy_from_slice(&p1.x);
        JointDistribution::renormalized(q).ok()
    } else {
        None
    };
    Ok(JdcResult {
        status: if witness.is_some() {
            Feasibility::Feasible
        } else {
            Feasibility::Infeasible
        },
        witness,
        residual: p1.objective,
        max_violation,
        tolerance: config.tolerance,
        pivots: p1.pivots,
    })
}

/// Shorthand for `solve(&build_system(table), config)`.
pub fn check(table: &CombinationTable, config: &JdcConfig) -> Result<JdcResult, JdcError> {
    solve(&build_system(table), config)
}

/// True iff marginalizing `witness` reproduces every cell of `table` within `tol`.
pub fn verify(witness: &JointDistribution, table: &CombinationTable, tol: f64) -> bool {
    let induced = marginalize(witness, table.name());
    Condition::ALL.iter().all(|&c| {
        induced
            .block(c)
            .cells()
            .iter()
            .zip(table.block(c).cells())
            .all(|(x, y)| (x - y).abs() <= tol)
    })
}

/// Result of forcing a table to satisfy marginal selectivity exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MsProjection {
    #[serde(skip)]
    pub table: CombinationTable,
    /// Common marginals `Pr(A1), Pr(A2), Pr(B1), Pr(B2)` of the projected table.
    pub marginals: [f64; 4],
    /// Set when the averaged marginals could not carry every block's
    /// expectation and the marginals were moved instead.
    pub rebalanced: bool,
    /// Expectations that still had to be moved, per block.
    pub clamps: Vec<(String, ExpectationClamp)>,
}

/// Rebuilds every block around common one-marginals while keeping its
/// expectation.
///
/// The common marginals are the averages of the two condition-specific
/// values. If some block's expectation is not attainable with them, the
/// marginals are instead chosen by linear programming as the point closest
/// (in L1) to the averages at which all four expectations are attainable.
/// Such a point always exists since marginals of 1/2 admit any expectation.
pub fn project_to_ms(table: &CombinationTable) -> MsProjection {
    let averages = marginals(table, MarginalPolicy::Average);
    let e = table.expectations();
    let attainable = |m: &[f64; 4]| {
        Condition::ALL.iter().all(|&c| {
            let (a, b) = pair(m, c);
            let (lo, hi) = crate::model::expectation_range(a, b);
            let ek = e[c.index()];
            ek >= lo - 1e-12 && ek <= hi + 1e-12
        })
    };
    let (common, rebalanced) = if attainable(&averages) {
        (averages, false)
    } else {
        match rebalance(&averages, &e) {
            Some(m) => (m, true),
            None => (averages, false),
        }
    };
    let mut clamps = Vec::new();
    let blocks = Condition::ALL.map(|c| {
        let (a, b) = pair(&common, c);
        let (block, clamp) = block_from_stats(c, a, b, e[c.index()]);
        if let Some(clamp) = clamp {
            clamps.push((c.to_string(), clamp));
        }
        block.with_n(table.block(c).n())
    });
    let projected = CombinationTable::new(table.name(), blocks)
        .expect("one block per condition")
        .with_primes(table.primes().cloned());
    MsProjection {
        table: projected,
        marginals: common,
        rebalanced,
        clamps,
    }
}

fn pair(m: &[f64; 4], c: Condition) -> (f64, f64) {
    (m[usize::from(c.a_index()) - 1], m[1 + usize::from(c.b_index())])
}

/// Minimizes `Σ |m_k - avg_k|` subject to each `e_ij` lying in the feasible
/// expectation range of `(m_ai, m_bj)` and `0 ≤ m ≤ 1`.
fn rebalance(averages: &[f64; 4], e: &[f64; 4]) -> Option<[f64; 4]> {
    // columns: m (4), v+ (4), v- (4), range slacks (16), upper-bound slacks (4)
    const N: usize = 32;
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut slack = 12;
    for c in Condition::ALL {
        let ia = usize::from(c.a_index()) - 1;
        let ib = 1 + usize::from(c.b_index());
        let ek = e[c.index()];
        // (coef_a, coef_b, slack_sign, rhs)
        let forms = [
            (2.0, -2.0, 1.0, 1.0 - ek),
            (-2.0, 2.0, 1.0, 1.0 - ek),
            (2.0, 2.0, 1.0, 3.0 + ek),
            (2.0, 2.0, -1.0, 1.0 - ek),
        ];
        for (ca, cb, s, rhs) in forms {
            let mut row = vec![0.0; N];
            row[ia] = ca;
            row[ib] = cb;
            row[slack] = s;
            slack += 1;
            a.push(row);
            b.push(rhs);
        }
    }
    for k in 0..4 {
        let mut row = vec![0.0; N];
        row[k] = 1.0;
        row[4 + k] = -1.0;
        row[8 + k] = 1.0;
        a.push(row);
        b.push(averages[k]);

        let mut row = vec![0.0; N];
        row[k] = 1.0;
        row[28 + k] = 1.0;
        a.push(row);
        b.push(1.0);
    }
    let mut cost = vec![0.0; N];
    cost[4..12].iter_mut().for_each(|c| *c = 1.0);
    match simplex::minimize(&cost, &a, &b, 1e-9, DEFAULT_PIVOT_BUDGET).ok()? {
        Outcome::Optimal { x } => Some(std::array::from_fn(|k| x[k].clamp(0.0, 1.0))),
        Outcome::Infeasible => None,
    }
}
