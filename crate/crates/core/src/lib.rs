//! Compositionality analysis for two-concept combinations.
//!
//! A combination `A B` is probed under four priming conditions `(Ai, Bj)`,
//! each yielding a 2×2 table of interpretation outcomes. The crate tests
//! marginal selectivity, evaluates the Bell/CH and CHSH inequalities, and
//! decides by linear programming whether a single joint distribution over
//! `(A1, A2, B1, B2)` reproduces all four tables.
//!
//! ```
//! use compositionality::{classify, AnalysisConfig, CombinationTable, Verdict};
//!
//! let product = [0.18, 0.42, 0.12, 0.28];
//! let table = CombinationTable::from_cells("example", [product; 4]).unwrap();
//! let c = classify(&table, &AnalysisConfig::default()).unwrap();
//! assert_eq!(c.verdict, Verdict::Compositional);
//! ```

pub mod classify;
pub mod inequalities;
pub mod ingest;
pub mod jdc;
pub mod model;
pub mod oracle;
pub mod selectivity;
mod simplex;
pub mod synth;

pub use classify::{classify, classify_batch, AnalysisConfig, Classification, ClassifyError, Verdict};
pub use ingest::IngestError;
pub use jdc::{JdcConfig, JdcError, JdcResult};
pub use model::{Cell, CombinationTable, Condition, ConditionBlock, JointDistribution, ModelError, Sign};
