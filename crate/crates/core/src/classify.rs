//! The three-step decision: marginal selectivity, then the inequalities,
//! then the verdict, with the joint distribution criterion as a cross-check.

use std::fmt;

use indexmap::IndexMap;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::inequalities::{bell_ch, chsh, BellChReport, ChshReport, MarginalPolicy};
use crate::jdc::{check, project_to_ms, JdcConfig, JdcError, JdcResult, MsProjection};
use crate::model::CombinationTable;
use crate::selectivity::{test as ms_test, MarginalSelectivityReport, SelectivityConfig, SelectivityError};

pub const DEFAULT_CHSH_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_BELLCH_TOLERANCE: f64 = 1e-9;
/// `max |CHSH|` in `(2, BORDERLINE_CHSH]` is flagged as borderline.
pub const BORDERLINE_CHSH: f64 = 2.1;
/// Override entry that matches every table.
pub const OVERRIDE_ALL: &str = "*";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Selectivity(#[from] SelectivityError),
    #[error(transparent)]
    Jdc(#[from] JdcError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisConfig {
    pub selectivity: SelectivityConfig,
    pub chsh_tolerance: f64,
    pub bellch_tolerance: f64,
    pub marginal_policy: MarginalPolicy,
    pub jdc: JdcConfig,
    /// Table names treated as passing marginal selectivity regardless of
    /// the test; `"*"` matches all.
    pub overrides: Vec<String>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            selectivity: SelectivityConfig::default(),
            chsh_tolerance: DEFAULT_CHSH_TOLERANCE,
            bellch_tolerance: DEFAULT_BELLCH_TOLERANCE,
            marginal_policy: MarginalPolicy::Average,
            jdc: JdcConfig::default(),
            overrides: Vec::new(),
        }
    }
}

impl AnalysisConfig {
    pub fn is_overridden(&self, name: &str) -> bool {
        self.overrides.iter().any(|o| o == OVERRIDE_ALL || o == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Compositional,
    NonCompositionalMsFailure,
    NonCompositionalViolation,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Compositional => "compositional",
            Verdict::NonCompositionalMsFailure => "non-compositional (marginal selectivity)",
            Verdict::NonCompositionalViolation => "non-compositional",
        }
    }

    pub fn is_compositional(self) -> bool {
        self == Verdict::Compositional
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for Verdict {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub name: String,
    pub verdict: Verdict,
    pub ms_report: MarginalSelectivityReport,
    /// Marginal selectivity was assumed rather than established.
    pub ms_overridden: bool,
    /// Present only when marginal selectivity holds (or is overridden).
    pub projection: Option<MsProjection>,
    pub chsh_report: Option<ChshReport>,
    pub bellch_report: Option<BellChReport>,
    /// On the projected table when marginal selectivity holds, on the raw
    /// table under exact constraints otherwise.
    pub jdc_result: JdcResult,
    /// Inequalities and JDC tell the same story; absent when the
    /// inequalities were not evaluated.
    pub agreement: Option<bool>,
    /// `max |CHSH|` just above 2.
    pub borderline: bool,
    pub notes: Vec<String>,
}

impl Classification {
    pub fn max_abs_chsh(&self) -> Option<f64> {
        self.chsh_report.as_ref().map(|r| r.max_abs)
    }
}

pub fn classify(table: &CombinationTable, config: &AnalysisConfig) -> Result<Classification, ClassifyError> {
    let ms_report = ms_test(table, &config.selectivity)?;
    let ms_overridden = config.is_overridden(table.name());
    let mut notes = Vec::new();
    if ms_overridden {
        notes.push(if ms_report.holds {
            "marginal selectivity override requested; the test passed anyway".to_owned()
        } else {
            "marginal selectivity failed the test but was overridden".to_owned()
        });
    }

    if !ms_report.holds && !ms_overridden {
        let jdc_result = check(table, &config.jdc)?;
        return Ok(Classification {
            name: table.name().to_owned(),
            verdict: Verdict::NonCompositionalMsFailure,
            ms_report,
            ms_overridden,
            projection: None,
            chsh_report: None,
            bellch_report: None,
            jdc_result,
            agreement: None,
            borderline: false,
            notes,
        });
    }

    let projection = project_to_ms(table);
    if projection.rebalanced {
        notes.push(format!(
            "averaged marginals could not carry every expectation; common marginals moved to {:?}",
            projection.marginals
        ));
    }
    for (block, clamp) in &projection.clamps {
        notes.push(format!(
            "expectation of {block} clamped from {} to {}",
            clamp.requested, clamp.applied
        ));
    }
    let projected = &projection.table;
    let chsh_report = chsh(projected, config.chsh_tolerance);
    let bellch_report = bell_ch(projected, config.marginal_policy, config.bellch_tolerance);
    let jdc_result = check(projected, &config.jdc)?;

    let violation = chsh_report.violated || !bellch_report.satisfied;
    let agreement = violation != jdc_result.is_feasible();
    if !agreement {
        notes.push("inequalities and joint distribution criterion disagree".to_owned());
    }
    let borderline = chsh_report.max_abs > 2.0 && chsh_report.max_abs <= BORDERLINE_CHSH;
    if borderline {
        notes.push(format!("borderline CHSH value {}", chsh_report.max_abs));
    }
    Ok(Classification {
        name: table.name().to_owned(),
        verdict: if violation {
            Verdict::NonCompositionalViolation
        } else {
            Verdict::Compositional
        },
        ms_report,
        ms_overridden,
        chsh_report: Some(chsh_report),
        bellch_report: Some(bellch_report),
        projection: Some(projection),
        jdc_result,
        agreement: Some(agreement),
        borderline,
        notes,
    })
}

/// Classifies each table independently; a failure on one does not affect
/// the others. Output order follows input order.
pub fn classify_batch(
    tables: &IndexMap<String, CombinationTable>,
    config: &AnalysisConfig,
) -> IndexMap<String, Result<Classification, ClassifyError>> {
    tables
        .iter()
        .map(|(name, table)| (name.clone(), classify(table, config)))
        .collect()
}
