//! The Bell/CH system and the four CHSH variants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::{CombinationTable, Condition};
use crate::selectivity::marginal_diffs;

/// Blocks `E(A1,B1), E(A1,B2), E(A2,B1), E(A2,B2)` carrying the minus sign in
/// variants `S1..S4`.
pub const MINUS_POSITION: [Condition; 4] = [Condition::A2B2, Condition::A1B2, Condition::A2B1, Condition::A1B1];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChshReport {
    /// Expectations in canonical condition order.
    pub e_values: [f64; 4],
    /// `S1..S4`, the sum of all four expectations with the minus sign on
    /// `MINUS_POSITION[k]`.
    pub variant_values: [f64; 4],
    pub max_abs: f64,
    pub violated: bool,
    pub tolerance: f64,
}

impl ChshReport {
    /// Index of the variant attaining `max_abs`.
    pub fn worst_variant(&self) -> usize {
        let mut best = 0;
        for k in 1..4 {
            if self.variant_values[k].abs() > self.variant_values[best].abs() {
                best = k;
            }
        }
        best
    }
}

/// Computes the four CHSH values. Violation means some `|S| > 2 + tolerance`.
pub fn chsh(table: &CombinationTable, tolerance: f64) -> ChshReport {
    let e_values = table.expectations();
    let total: f64 = e_values.iter().sum();
    let variant_values = MINUS_POSITION.map(|c| total - 2.0 * e_values[c.index()]);
    let max_abs = variant_values.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    ChshReport {
        e_values,
        variant_values,
        max_abs,
        violated: max_abs > 2.0 + tolerance,
        tolerance,
    }
}

/// Where `Pr(Ai)` and `Pr(Bj)` come from when marginal selectivity is only
/// approximate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MarginalPolicy {
    /// Mean of the two condition-specific marginals.
    #[default]
    Average,
    /// `Pr(Ak)` read from block `(k, j)` and `Pr(Bl)` from block `(i, l)`
    /// of the named condition `(i, j)`.
    Condition(Condition),
}

impl fmt::Display for MarginalPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarginalPolicy::Average => f.write_str("average"),
            MarginalPolicy::Condition(c) => f.write_str(c.key()),
        }
    }
}

impl FromStr for MarginalPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if s == "average" {
            return Ok(MarginalPolicy::Average);
        }
        if let Some(c) = Condition::ALL.iter().find(|c| c.key() == s) {
            return Ok(MarginalPolicy::Condition(*c));
        }
        // condition(i,j)
        let inner = s
            .strip_prefix("condition(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| format!("unknown marginal policy '{s}'"))?;
        let mut parts = inner.split(',').map(|p| p.trim().parse::<i64>());
        match (parts.next(), parts.next(), parts.next()) {
            (Some(Ok(i)), Some(Ok(j)), None) => Condition::new(i, j)
                .map(MarginalPolicy::Condition)
                .map_err(|e| e.to_string()),
            _ => Err(format!("unknown marginal policy '{s}'")),
        }
    }
}

impl Serialize for MarginalPolicy {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MarginalPolicy {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One-marginals `Pr(A1), Pr(A2), Pr(B1), Pr(B2)` under `policy`.
pub fn marginals(table: &CombinationTable, policy: MarginalPolicy) -> [f64; 4] {
    let a = |i: i64, j: i64| table.block(Condition::new(i, j).expect("valid")).marginal_a();
    let b = |i: i64, j: i64| table.block(Condition::new(i, j).expect("valid")).marginal_b();
    match policy {
        MarginalPolicy::Average => [
            (a(1, 1) + a(1, 2)) / 2.0,
            (a(2, 1) + a(2, 2)) / 2.0,
            (b(1, 1) + b(2, 1)) / 2.0,
            (b(1, 2) + b(2, 2)) / 2.0,
        ],
        MarginalPolicy::Condition(c) => {
            let (i, j) = (i64::from(c.a_index()), i64::from(c.b_index()));
            [a(1, j), a(2, j), b(i, 1), b(i, 2)]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BellChReport {
    /// Middle terms of the four Bell/CH double inequalities.
    pub expressions: [f64; 4],
    pub satisfied: bool,
    /// `Pr(A1), Pr(A2), Pr(B1), Pr(B2)` as used.
    pub marginals_used: [f64; 4],
    /// Spread between the two condition-specific marginals of each variable.
    pub marginal_spread: [f64; 4],
    pub policy: MarginalPolicy,
    pub tolerance: f64,
}

/// Evaluates the Bell/CH system. Each expression must lie in `[-1, 0]`
/// (widened by `tolerance`); `Pr(Ai,Bj)` is the `(+1,+1)` cell of block `(i,j)`.
pub fn bell_ch(table: &CombinationTable, policy: MarginalPolicy, tolerance: f64) -> BellChReport {
    let p = |i, j| table.joint_plus(i, j);
    let m = marginals(table, policy);
    let [a1, a2, b1, b2] = m;
    let expressions = [
        p(1, 1) + p(1, 2) + p(2, 2) - p(2, 1) - a1 - b2,
        p(2, 1) + p(2, 2) + p(1, 2) - p(1, 1) - a2 - b2,
        p(1, 2) + p(1, 1) + p(2, 1) - p(2, 2) - a1 - b1,
        p(2, 2) + p(2, 1) + p(1, 1) - p(1, 2) - a2 - b1,
    ];
    let satisfied = expressions
        .iter()
        .all(|x| *x >= -1.0 - tolerance && *x <= tolerance);
    BellChReport {
        expressions,
        satisfied,
        marginals_used: m,
        marginal_spread: marginal_diffs(table),
        policy,
        tolerance,
    }
}

/// Largest gap between a cell and the product of its block's own marginals.
/// Zero exactly when every block factorizes.
pub fn independence_residual(table: &CombinationTable) -> f64 {
    table
        .blocks()
        .iter()
        .flat_map(|block| {
            let (a, b) = (block.marginal_a(), block.marginal_b());
            let products = [a * b, a * (1.0 - b), (1.0 - a) * b, (1.0 - a) * (1.0 - b)];
            block
                .cells()
                .into_iter()
                .zip(products)
                .map(|(cell, prod)| (cell - prod).abs())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn product_table(a: [f64; 2], b: [f64; 2]) -> CombinationTable {
        let mut cells = [[0.0; 4]; 4];
        for (k, c) in Condition::ALL.iter().enumerate() {
            let pa = a[usize::from(c.a_index()) - 1];
            let pb = b[usize::from(c.b_index()) - 1];
            cells[k] = [pa * pb, pa * (1.0 - pb), (1.0 - pa) * pb, (1.0 - pa) * (1.0 - pb)];
        }
        CombinationTable::from_cells("product", cells).unwrap()
    }

    #[test]
    fn variants_follow_fixed_minus_order() {
        let t = CombinationTable::from_cells(
            "t",
            [
                [0.5, 0.0, 0.0, 0.5],   // E = 1
                [0.25, 0.25, 0.25, 0.25], // E = 0
                [0.1, 0.4, 0.4, 0.1],   // E = -0.6
                [0.3, 0.1, 0.1, 0.5],   // E = 0.6
            ],
        )
        .unwrap();
        let r = chsh(&t, 1e-9);
        let [e11, e12, e21, e22] = r.e_values;
        let expected = [
            e11 + e12 + e21 - e22,
            e11 - e12 + e21 + e22,
            e11 + e12 - e21 + e22,
            -e11 + e12 + e21 + e22,
        ];
        for (got, want) in r.variant_values.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((r.max_abs - 2.2).abs() < 1e-12);
        assert!(r.violated);
        assert_eq!(r.worst_variant(), 2);
    }

    #[test]
    fn exactly_two_is_not_a_violation() {
        let t = CombinationTable::from_cells(
            "edge",
            [
                [0.5, 0.0, 0.0, 0.5],
                [0.5, 0.0, 0.0, 0.5],
                [0.5, 0.0, 0.0, 0.5],
                [0.25, 0.25, 0.25, 0.25],
            ],
        )
        .unwrap();
        let r = chsh(&t, 1e-9);
        // E = (1, 1, 1, 0): S1 = 3, the rest 1
        assert_eq!(r.variant_values, [3.0, 1.0, 1.0, 1.0]);
        assert!(r.violated);
        let t = CombinationTable::from_cells(
            "edge2",
            [
                [0.5, 0.0, 0.0, 0.5],
                [0.25, 0.25, 0.25, 0.25],
                [0.5, 0.0, 0.0, 0.5],
                [0.25, 0.25, 0.25, 0.25],
            ],
        )
        .unwrap();
        let r = chsh(&t, 1e-9);
        assert_eq!(r.max_abs, 2.0);
        assert!(!r.violated);
    }

    #[test]
    fn product_tables_never_violate_and_have_zero_residual() {
        for (a, b) in [([0.3, 0.8], [0.5, 0.1]), ([1.0, 0.0], [0.0, 1.0]), ([0.5, 0.5], [0.5, 0.5])] {
            let t = product_table(a, b);
            assert!(!chsh(&t, 1e-9).violated);
            assert!(bell_ch(&t, MarginalPolicy::Average, 1e-9).satisfied);
            assert!(independence_residual(&t) < 1e-12);
        }
    }

    #[test]
    fn perfectly_correlated_block_residual() {
        let t = CombinationTable::from_cells("c", [[0.5, 0.0, 0.0, 0.5], [0.25; 4], [0.25; 4], [0.25; 4]]).unwrap();
        assert!((independence_residual(&t) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("average".parse::<MarginalPolicy>().unwrap(), MarginalPolicy::Average);
        assert_eq!(
            "condition(2,1)".parse::<MarginalPolicy>().unwrap(),
            MarginalPolicy::Condition(Condition::A2B1)
        );
        assert_eq!("A1B2".parse::<MarginalPolicy>().unwrap(), MarginalPolicy::Condition(Condition::A1B2));
        assert!("condition(3,1)".parse::<MarginalPolicy>().is_err());
        assert!("median".parse::<MarginalPolicy>().is_err());
    }

    #[test]
    fn condition_policy_reads_named_blocks() {
        let t = CombinationTable::from_cells(
            "t",
            [
                [0.4, 0.2, 0.1, 0.3], // a=0.6 b=0.5
                [0.3, 0.4, 0.1, 0.2], // a=0.7 b=0.4
                [0.1, 0.1, 0.5, 0.3], // a=0.2 b=0.6
                [0.2, 0.1, 0.3, 0.4], // a=0.3 b=0.5
            ],
        )
        .unwrap();
        let m = marginals(&t, MarginalPolicy::Condition(Condition::A1B1));
        let want = [0.6, 0.2, 0.5, 0.4];
        assert!(m.iter().zip(want).all(|(x, y)| (x - y).abs() < 1e-12), "{m:?}");
        let m = marginals(&t, MarginalPolicy::Average);
        let want = [0.65, 0.25, 0.55, 0.45];
        assert!(m.iter().zip(want).all(|(x, y)| (x - y).abs() < 1e-12), "{m:?}");
    }
}
