//! Synthetic experiments drawn from known ground truth.
//!
//! All randomness comes from ChaCha20 (`rand_chacha`), which produces the
//! same stream on every platform. Trials for condition `k` (canonical order)
//! are drawn from stream `k` of the generator seeded with the user seed, so
//! conditions can be sampled independently without changing the output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::ingest::TrialRecord;
use crate::model::{Cell, CombinationTable, Condition, ConditionBlock, JointDistribution};

/// Identity of the generator, recorded in synth metadata.
pub const GENERATOR: &str = "chacha20 (rand_chacha 0.3), one stream per condition";

#[derive(Debug, Clone, PartialEq)]
pub enum TruthKind {
    /// A single joint distribution; the induced table satisfies marginal
    /// selectivity exactly.
    Joint(JointDistribution),
    /// Four unrelated blocks, which may violate marginal selectivity.
    PerCondition(CombinationTable),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub kind: TruthKind,
    pub name: String,
}

impl GroundTruth {
    pub fn joint(q: JointDistribution, name: impl Into<String>) -> Self {
        GroundTruth {
            kind: TruthKind::Joint(q),
            name: name.into(),
        }
    }

    pub fn per_condition(table: CombinationTable) -> Self {
        GroundTruth {
            name: table.name().to_owned(),
            kind: TruthKind::PerCondition(table),
        }
    }

    /// The four blocks trials are drawn from.
    pub fn table(&self) -> CombinationTable {
        match &self.kind {
            TruthKind::Joint(q) => marginalize(q, &self.name),
            TruthKind::PerCondition(t) => t.clone(),
        }
    }
}

/// Pairwise marginals of a joint distribution: block `(i,j)` cell `(s,t)`
/// sums `q` over joint cells with `Ai = s` and `Bj = t`.
pub fn marginalize(q: &JointDistribution, name: &str) -> CombinationTable {
    let blocks = Condition::ALL.map(|c| {
        let mut cells = [0.0; 4];
        for (idx, p) in q.probabilities().iter().enumerate() {
            let signs = JointDistribution::signs_of(idx);
            let a = signs[usize::from(c.a_index()) - 1];
            let b = signs[1 + usize::from(c.b_index())];
            cells[Cell::from_signs(a, b).index()] += p;
        }
        ConditionBlock::from_parts_unchecked(c, cells, None)
    });
    CombinationTable::new(name, blocks).expect("one block per condition")
}

/// Uniform draw from the probability simplex over the 16 joint cells
/// (normalized unit exponentials).
pub fn random_joint(seed: u64) -> JointDistribution {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    random_joint_from(&mut rng)
}

pub fn random_joint_from<R: Rng>(rng: &mut R) -> JointDistribution {
    let raw: [f64; 16] = std::array::from_fn(|_| exponential(rng));
    JointDistribution::renormalized(raw).expect("exponentials are positive")
}

/// Four independent blocks, each uniform on its own simplex.
pub fn random_per_condition<R: Rng>(rng: &mut R, name: &str) -> CombinationTable {
    let blocks = Condition::ALL.map(|c| {
        let raw: [f64; 4] = std::array::from_fn(|_| exponential(rng));
        let sum: f64 = raw.iter().sum();
        ConditionBlock::from_parts_unchecked(c, raw.map(|v| v / sum), None)
    });
    CombinationTable::new(name, blocks).expect("one block per condition")
}

fn exponential<R: Rng>(rng: &mut R) -> f64 {
    // 1 - u lies in (0, 1]
    let u: f64 = rng.gen();
    -(1.0 - u).ln() + f64::MIN_POSITIVE
}

fn draw_cell<R: Rng>(rng: &mut R, block: &ConditionBlock) -> Cell {
    let cells = block.cells();
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (cell, p) in Cell::ALL.iter().zip(cells) {
        acc += p;
        if u < acc && p > 0.0 {
            return *cell;
        }
    }
    // rounding left u above the running sum; take the last cell with mass
    *Cell::ALL.iter().rev().find(|c| cells[c.index()] > 0.0).expect("block has mass")
}

/// `n_per_condition` i.i.d. trials per condition, in canonical condition order.
pub fn sample_trials(truth: &GroundTruth, n_per_condition: u64, seed: u64) -> Vec<TrialRecord> {
    let table = truth.table();
    let mut records = Vec::with_capacity(4 * n_per_condition as usize);
    for condition in Condition::ALL {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(condition.index() as u64);
        let block = table.block(condition);
        for _ in 0..n_per_condition {
            let (a, b) = draw_cell(&mut rng, block).signs();
            records.push(TrialRecord {
                combination: truth.name.clone(),
                condition,
                a_outcome: a,
                b_outcome: b,
                subject_id: None,
            });
        }
    }
    records
}
