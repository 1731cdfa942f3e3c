//! Domain types: sense outcomes, priming conditions, the four 2×2 condition
//! blocks of a combination, and the 16-cell joint distribution over
//! `(A1, A2, B1, B2)`.
//!
//! Cells of a block are always stored in the canonical order
//! `(+,+), (+,-), (-,+), (-,-)` where the first sign is the outcome of
//! concept A and the second the outcome of concept B.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the sum of a block's cells.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("block {condition} has zero trials")]
    ZeroTrials { condition: Condition },
    #[error("block {condition}: cell {cell} is {value}, must be a finite non-negative probability")]
    NegativeCell {
        condition: Condition,
        cell: Cell,
        value: f64,
    },
    #[error("block {condition} sums to {sum}, expected 1")]
    BadSum { condition: Condition, sum: f64 },
    #[error("priming index {0} out of range (expected 1 or 2)")]
    IndexOutOfRange(i64),
    #[error("sense outcome {0} out of range (expected +1 or -1)")]
    OutcomeOutOfRange(i64),
    #[error("no block for condition {0}")]
    MissingCondition(Condition),
    #[error("joint distribution: {0}")]
    InvalidJoint(String),
}

/// Outcome of interpreting one concept: `+1` if it was read in the primed
/// sense, `-1` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn from_value(v: i64) -> Result<Self, ModelError> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(ModelError::OutcomeOutOfRange(other)),
        }
    }

    fn bit(self) -> usize {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+1",
            Sign::Minus => "-1",
        })
    }
}

/// Which prime of each concept was shown: index 1 is the dominant sense,
/// index 2 the subordinate one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Condition {
    a: u8,
    b: u8,
}

impl Condition {
    pub const A1B1: Condition = Condition { a: 1, b: 1 };
    pub const A1B2: Condition = Condition { a: 1, b: 2 };
    pub const A2B1: Condition = Condition { a: 2, b: 1 };
    pub const A2B2: Condition = Condition { a: 2, b: 2 };

    /// All four conditions in canonical order.
    pub const ALL: [Condition; 4] = [Self::A1B1, Self::A1B2, Self::A2B1, Self::A2B2];

    pub fn new(a_index: i64, b_index: i64) -> Result<Self, ModelError> {
        let check = |i: i64| match i {
            1 | 2 => Ok(i as u8),
            other => Err(ModelError::IndexOutOfRange(other)),
        };
        Ok(Condition {
            a: check(a_index)?,
            b: check(b_index)?,
        })
    }

    pub fn a_index(self) -> u8 {
        self.a
    }

    pub fn b_index(self) -> u8 {
        self.b
    }

    /// Position in [`Condition::ALL`].
    pub fn index(self) -> usize {
        usize::from(self.a - 1) * 2 + usize::from(self.b - 1)
    }

    /// Lower-case key used in table files, e.g. `a1b2`.
    pub fn key(self) -> &'static str {
        match self.index() {
            0 => "a1b1",
            1 => "a1b2",
            2 => "a2b1",
            _ => "a2b2",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}xB{}", self.a, self.b)
    }
}

/// A cell of a 2×2 block, named by (A outcome, B outcome).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    PlusPlus,
    PlusMinus,
    MinusPlus,
    MinusMinus,
}

impl Cell {
    pub const ALL: [Cell; 4] = [
        Cell::PlusPlus,
        Cell::PlusMinus,
        Cell::MinusPlus,
        Cell::MinusMinus,
    ];

    pub fn from_signs(a: Sign, b: Sign) -> Cell {
        Cell::ALL[a.bit() * 2 + b.bit()]
    }

    pub fn signs(self) -> (Sign, Sign) {
        match self {
            Cell::PlusPlus => (Sign::Plus, Sign::Plus),
            Cell::PlusMinus => (Sign::Plus, Sign::Minus),
            Cell::MinusPlus => (Sign::Minus, Sign::Plus),
            Cell::MinusMinus => (Sign::Minus, Sign::Minus),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.signs();
        write!(f, "({a},{b})")
    }
}

/// Raw trial counts for one condition, in canonical cell order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountBlock {
    pub condition: Condition,
    pub counts: [u64; 4],
}

impl CountBlock {
    pub fn new(condition: Condition, counts: [u64; 4]) -> Self {
        CountBlock { condition, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn record(&mut self, a: Sign, b: Sign) {
        self.counts[Cell::from_signs(a, b).index()] += 1;
    }
}

/// Outcome distribution of one priming condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionBlock {
    condition: Condition,
    cells: [f64; 4],
    n: Option<u64>,
}

impl ConditionBlock {
    /// Validates non-negativity and a unit sum within [`SUM_TOLERANCE`].
    pub fn new(condition: Condition, cells: [f64; 4], n: Option<u64>) -> Result<Self, ModelError> {
        for (cell, &value) in Cell::ALL.iter().zip(cells.iter()) {
            if !value.is_finite() || value < 0.0 {
                return Err(ModelError::NegativeCell {
                    condition,
                    cell: *cell,
                    value,
                });
            }
        }
        let sum: f64 = cells.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(ModelError::BadSum { condition, sum });
        }
        Ok(ConditionBlock {
            condition,
            cells,
            n,
        })
    }

    /// Skips validation; only for cells that are correct by construction.
    pub(crate) fn from_parts_unchecked(condition: Condition, cells: [f64; 4], n: Option<u64>) -> Self {
        debug_assert!(ConditionBlock::new(condition, cells, n).is_ok(), "{cells:?}");
        ConditionBlock {
            condition,
            cells,
            n,
        }
    }

    pub fn uniform(condition: Condition) -> Self {
        ConditionBlock::from_parts_unchecked(condition, [0.25; 4], None)
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn cells(&self) -> [f64; 4] {
        self.cells
    }

    pub fn cell(&self, cell: Cell) -> f64 {
        self.cells[cell.index()]
    }

    pub fn n(&self) -> Option<u64> {
        self.n
    }

    pub fn with_n(mut self, n: Option<u64>) -> Self {
        self.n = n;
        self
    }

    /// `Pr(Ai = +1)` under this condition.
    pub fn marginal_a(&self) -> f64 {
        self.cells[0] + self.cells[1]
    }

    /// `Pr(Bj = +1)` under this condition.
    pub fn marginal_b(&self) -> f64 {
        self.cells[0] + self.cells[2]
    }

    /// Correlation of the two outcomes, `p++ + p-- - p+- - p-+`.
    pub fn expectation(&self) -> f64 {
        let [pp, pm, mp, mm] = self.cells;
        pp + mm - pm - mp
    }
}

/// Turns trial counts into probabilities, carrying the sample size along.
pub fn normalize(counts: &CountBlock) -> Result<ConditionBlock, ModelError> {
    let n = counts.total();
    if n == 0 {
        return Err(ModelError::ZeroTrials {
            condition: counts.condition,
        });
    }
    let cells = counts.counts.map(|c| c as f64 / n as f64);
    Ok(ConditionBlock::from_parts_unchecked(counts.condition, cells, Some(n)))
}

/// Record of an expectation that had to be moved into the feasible range
/// of the requested marginals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectationClamp {
    pub requested: f64,
    pub applied: f64,
}

/// Feasible range of the expectation for a block with marginals `a`, `b`.
pub fn expectation_range(a: f64, b: f64) -> (f64, f64) {
    (-1.0 + 2.0 * (a + b - 1.0).abs(), 1.0 - 2.0 * (a - b).abs())
}

/// Builds the unique block with marginals `a`, `b` and expectation `e`.
///
/// When no such block exists `e` is moved to the nearest feasible value and
/// the adjustment is returned alongside the block.
pub fn block_from_stats(
    condition: Condition,
    a: f64,
    b: f64,
    e: f64,
) -> (ConditionBlock, Option<ExpectationClamp>) {
    debug_assert!(a.is_finite() && b.is_finite() && e.is_finite());
    let a = a.clamp(0.0, 1.0);
    let b = b.clamp(0.0, 1.0);
    let lo = (a + b - 1.0).max(0.0);
    let hi = a.min(b);
    let wanted = (e - 1.0 + 2.0 * a + 2.0 * b) / 4.0;
    let pp = wanted.clamp(lo, hi);
    let applied = 4.0 * pp + 1.0 - 2.0 * a - 2.0 * b;
    let clamp = ((applied - e).abs() > 1e-12).then_some(ExpectationClamp {
        requested: e,
        applied,
    });
    let cells = [
        pp,
        (a - pp).max(0.0),
        (b - pp).max(0.0),
        (1.0 - a - b + pp).max(0.0),
    ];
    (ConditionBlock::from_parts_unchecked(condition, cells, None), clamp)
}

/// The four condition blocks of one conceptual combination.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationTable {
    name: String,
    primes: Option<[String; 4]>,
    blocks: [ConditionBlock; 4],
}

impl CombinationTable {
    /// `blocks` may be given in any order but must cover each condition once.
    pub fn new(name: impl Into<String>, blocks: [ConditionBlock; 4]) -> Result<Self, ModelError> {
        let mut ordered: [Option<ConditionBlock>; 4] = [None; 4];
        for block in blocks {
            ordered[block.condition.index()] = Some(block);
        }
        if let Some(missing) = ordered.iter().position(Option::is_none) {
            return Err(ModelError::MissingCondition(Condition::ALL[missing]));
        }
        Ok(CombinationTable {
            name: name.into(),
            primes: None,
            blocks: ordered.map(|b| b.expect("checked above")),
        })
    }

    /// Convenience constructor from four cell arrays in canonical condition order.
    pub fn from_cells(name: impl Into<String>, cells: [[f64; 4]; 4]) -> Result<Self, ModelError> {
        let mut blocks = [ConditionBlock::uniform(Condition::A1B1); 4];
        for (i, c) in cells.iter().enumerate() {
            blocks[i] = ConditionBlock::new(Condition::ALL[i], *c, None)?;
        }
        CombinationTable::new(name, blocks)
    }

    pub fn with_primes(mut self, primes: Option<[String; 4]>) -> Self {
        self.primes = primes;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Attaches the same sample size to every block.
    pub fn with_uniform_n(mut self, n: u64) -> Self {
        for block in &mut self.blocks {
            block.n = Some(n);
        }
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Prime words in the order A1, A2, B1, B2.
    pub fn primes(&self) -> Option<&[String; 4]> {
        self.primes.as_ref()
    }

    pub fn block(&self, condition: Condition) -> &ConditionBlock {
        &self.blocks[condition.index()]
    }

    pub fn blocks(&self) -> &[ConditionBlock; 4] {
        &self.blocks
    }

    /// Per-block sample sizes, if every block carries one.
    pub fn sample_sizes(&self) -> Option<[u64; 4]> {
        let mut out = [0; 4];
        for (slot, block) in out.iter_mut().zip(self.blocks.iter()) {
            *slot = block.n?;
        }
        Some(out)
    }

    /// `Pr(Ai = +1, Bj = +1)`.
    pub fn joint_plus(&self, a: u8, b: u8) -> f64 {
        self.blocks[usize::from(a - 1) * 2 + usize::from(b - 1)].cells[0]
    }

    /// Expectations in canonical condition order.
    pub fn expectations(&self) -> [f64; 4] {
        self.blocks.map(|b| b.expectation())
    }
}

/// Distribution over sign assignments to `(A1, A2, B1, B2)`.
///
/// Cell index is `8·[A1=-1] + 4·[A2=-1] + 2·[B1=-1] + [B2=-1]`, so index 0 is
/// `(+,+,+,+)` and index 15 is `(-,-,-,-)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointDistribution {
    q: [f64; 16],
}

impl JointDistribution {
    pub fn new(q: [f64; 16]) -> Result<Self, ModelError> {
        if let Some((i, v)) = q.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(ModelError::InvalidJoint(format!("cell {i} is {v}")));
        }
        let sum: f64 = q.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(ModelError::InvalidJoint(format!("cells sum to {sum}")));
        }
        Ok(JointDistribution { q })
    }

    /// Clips tiny negatives and rescales to unit mass.
    pub fn renormalized(raw: [f64; 16]) -> Result<Self, ModelError> {
        let clipped = raw.map(|v| v.max(0.0));
        let sum: f64 = clipped.iter().sum();
        if !(sum > 0.0) {
            return Err(ModelError::InvalidJoint("no positive mass".into()));
        }
        JointDistribution::new(clipped.map(|v| v / sum))
    }

    pub fn probabilities(&self) -> &[f64; 16] {
        &self.q
    }

    pub fn index_of(a1: Sign, a2: Sign, b1: Sign, b2: Sign) -> usize {
        8 * a1.bit() + 4 * a2.bit() + 2 * b1.bit() + b2.bit()
    }

    /// Signs `[a1, a2, b1, b2]` of joint cell `index`.
    pub fn signs_of(index: usize) -> [Sign; 4] {
        let s = |bit: usize| if index >> bit & 1 == 0 { Sign::Plus } else { Sign::Minus };
        [s(3), s(2), s(1), s(0)]
    }

    pub fn prob(&self, a1: Sign, a2: Sign, b1: Sign, b2: Sign) -> f64 {
        self.q[Self::index_of(a1, a2, b1, b2)]
    }
}

impl Serialize for JointDistribution {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.q.serialize(serializer)
    }
}
