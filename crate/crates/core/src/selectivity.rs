//! Marginal selectivity: each concept's interpretation probability must not
//! depend on how the other concept was primed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CombinationTable, Condition};

/// Variables in report order.
pub const VARIABLES: [&str; 4] = ["A1", "A2", "B1", "B2"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectivityError {
    #[error("invalid sample size: n1 = {n1}, n2 = {n2}")]
    InvalidSampleSize { n1: u64, n2: u64 },
    #[error("table '{0}' has no per-block sample sizes; statistical marginal selectivity needs them")]
    MissingSampleSizes(String),
}

/// How the marginal-selectivity gate is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MsMode {
    /// Chi-square test of two proportions per variable.
    Statistical,
    /// Marginal differences compared to a numeric tolerance.
    Strict,
    /// Statistical when every block carries a sample size, strict otherwise.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectivityConfig {
    pub alpha: f64,
    pub critical_value: f64,
    pub yates: bool,
    pub strict_tolerance: f64,
    pub mode: MsMode,
}

impl Default for SelectivityConfig {
    fn default() -> Self {
        SelectivityConfig {
            alpha: 0.1,
            critical_value: 2.71,
            yates: false,
            strict_tolerance: 1e-9,
            mode: MsMode::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalSelectivityReport {
    /// Absolute marginal differences for A1, A2, B1, B2.
    pub diffs: [f64; 4],
    /// Chi-square statistics; absent in strict mode.
    pub chi_squares: Option<[f64; 4]>,
    pub per_variable_fail: [bool; 4],
    pub holds: bool,
    /// Mode actually applied (never `Auto`).
    pub mode: MsMode,
    pub alpha: f64,
    pub critical_value: f64,
    pub strict_tolerance: f64,
}

/// The two blocks whose marginals are compared for each variable, together
/// with which marginal (A or B) is read.
fn comparisons() -> [(Condition, Condition, bool); 4] {
    [
        (Condition::A1B1, Condition::A1B2, true),
        (Condition::A2B1, Condition::A2B2, true),
        (Condition::A1B1, Condition::A2B1, false),
        (Condition::A1B2, Condition::A2B2, false),
    ]
}

fn marginal_pair(table: &CombinationTable, var: usize) -> (f64, f64) {
    let (c1, c2, is_a) = comparisons()[var];
    let read = |c| {
        let block = table.block(c);
        if is_a {
            block.marginal_a()
        } else {
            block.marginal_b()
        }
    };
    (read(c1), read(c2))
}

/// `|Pr(X)| under one priming of the partner - under the other`, for A1, A2, B1, B2.
pub fn marginal_diffs(table: &CombinationTable) -> [f64; 4] {
    std::array::from_fn(|var| {
        let (p1, p2) = marginal_pair(table, var);
        (p1 - p2).abs()
    })
}

/// Pooled chi-square test of two proportions (equivalently the squared
/// two-proportion z statistic), with optional Yates continuity correction.
pub fn chi_square_two_proportions(
    p1: f64,
    n1: u64,
    p2: f64,
    n2: u64,
    yates: bool,
) -> Result<f64, SelectivityError> {
    if n1 == 0 || n2 == 0 {
        return Err(SelectivityError::InvalidSampleSize { n1, n2 });
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (p1 * n1f + p2 * n2f) / (n1f + n2f);
    let spread = 1.0 / n1f + 1.0 / n2f;
    let variance = pooled * (1.0 - pooled) * spread;
    if variance <= 0.0 {
        return Ok(0.0);
    }
    let mut d = (p1 - p2).abs();
    if yates {
        d = (d - spread / 2.0).max(0.0);
    }
    Ok(d * d / variance)
}

/// Decides marginal selectivity per `config.mode`.
pub fn test(
    table: &CombinationTable,
    config: &SelectivityConfig,
) -> Result<MarginalSelectivityReport, SelectivityError> {
    let diffs = marginal_diffs(table);
    let sizes = table.sample_sizes();
    let mode = match (config.mode, sizes) {
        (MsMode::Auto, Some(_)) => MsMode::Statistical,
        (MsMode::Auto, None) => MsMode::Strict,
        (m, _) => m,
    };
    let (chi_squares, per_variable_fail) = match mode {
        MsMode::Strict => (None, diffs.map(|d| d > config.strict_tolerance)),
        _ => {
            let sizes = sizes.ok_or_else(|| SelectivityError::MissingSampleSizes(table.name().to_owned()))?;
            let mut chi = [0.0; 4];
            for (var, slot) in chi.iter_mut().enumerate() {
                let (c1, c2, _) = comparisons()[var];
                let (p1, p2) = marginal_pair(table, var);
                *slot = chi_square_two_proportions(p1, sizes[c1.index()], p2, sizes[c2.index()], config.yates)?;
            }
            (Some(chi), chi.map(|x| x > config.critical_value))
        }
    };
    Ok(MarginalSelectivityReport {
        diffs,
        chi_squares,
        per_variable_fail,
        holds: !per_variable_fail.iter().any(|f| *f),
        mode,
        alpha: config.alpha,
        critical_value: config.critical_value,
        strict_tolerance: config.strict_tolerance,
    })
}
