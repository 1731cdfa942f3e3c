//! Randomized checks of the equivalences between the inequality systems and
//! the joint distribution criterion.
//!
//! Each trial draws, from its own ChaCha20 stream, four tables: one
//! marginalized from a simplex-uniform joint, one with exact marginal
//! selectivity and free expectations, one pushed past the CHSH bound, and
//! one with four unrelated blocks. The solver is a parameter so that the
//! harness itself can be tested against a deliberately broken one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::ingest::table_to_json;
use crate::inequalities::{bell_ch, chsh, marginals, MarginalPolicy, MINUS_POSITION};
use crate::jdc::{check, verify, JdcConfig, JdcError, JdcResult};
use crate::model::{block_from_stats, expectation_range, CombinationTable, Condition};
use crate::selectivity::marginal_diffs;
use crate::synth::{marginalize, random_joint_from, random_per_condition, GENERATOR};

/// Comparisons this close to a bound are counted as skipped.
pub const DEFAULT_AMBIGUITY_MARGIN: f64 = 1e-6;
pub const DEFAULT_NECESSITY_MIN_DIFF: f64 = 0.05;
/// Witnesses must reproduce the table to this tolerance.
pub const WITNESS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleConfig {
    pub trials: usize,
    pub seed: u64,
    pub jdc: JdcConfig,
    pub ambiguity_margin: f64,
    pub necessity_min_diff: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            trials: 1000,
            seed: 1,
            jdc: JdcConfig::default(),
            ambiguity_margin: DEFAULT_AMBIGUITY_MARGIN,
            necessity_min_diff: DEFAULT_NECESSITY_MIN_DIFF,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    FineEquivalence,
    ChshImpliesBellCh,
    MsNecessity,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::FineEquivalence, Suite::ChshImpliesBellCh, Suite::MsNecessity];

    pub fn label(self) -> &'static str {
        match self {
            Suite::FineEquivalence => "fine-equivalence",
            Suite::ChshImpliesBellCh => "chsh-implies-bell-ch",
            Suite::MsNecessity => "ms-necessity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceKind {
    JointDerived,
    RandomExactMs,
    PerturbedPastBound,
    PerCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub suite: Suite,
    pub kind: InstanceKind,
    pub trial: usize,
    /// The property that failed.
    pub property: String,
    pub table: serde_json::Value,
    pub jdc_residual: f64,
    pub jdc_feasible: bool,
    pub max_abs_chsh: f64,
    pub bellch_satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub suite: Suite,
    pub instances: usize,
    pub skipped: usize,
    pub counterexamples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub trials: usize,
    pub seed: u64,
    pub lp_tolerance: f64,
    pub generator: &'static str,
    pub suites: Vec<SuiteSummary>,
    pub counterexamples: Vec<Counterexample>,
}

impl OracleReport {
    pub fn total_counterexamples(&self) -> usize {
        self.counterexamples.len()
    }

    pub fn suite(&self, suite: Suite) -> &SuiteSummary {
        self.suites.iter().find(|s| s.suite == suite).expect("every suite is summarized")
    }
}

/// Exact marginal selectivity with marginals uniform on `[0,1]` and each
/// expectation uniform on its attainable range.
pub fn random_exact_ms<R: Rng>(rng: &mut R, name: &str) -> CombinationTable {
    let m: [f64; 4] = std::array::from_fn(|_| rng.gen());
    let blocks = Condition::ALL.map(|c| {
        let (a, b) = pair(&m, c);
        let (lo, hi) = expectation_range(a, b);
        let e = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        block_from_stats(c, a, b, e).0
    });
    CombinationTable::new(name, blocks).expect("one block per condition")
}

/// Moves the expectations of an exact-MS table with `max |CHSH| ≤ 2` along a
/// straight line towards the extreme point of a random CHSH variant, until
/// that variant reaches a random value above `2 + min_excess`. Marginals are
/// unchanged. `None` when the marginals do not leave enough room.
pub fn perturb_past_bound<R: Rng>(rng: &mut R, base: &CombinationTable, min_excess: f64) -> Option<CombinationTable> {
    let m = marginals(base, MarginalPolicy::Average);
    let e0 = base.expectations();
    let variant = rng.gen_range(0..4);
    let direction = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let sigma = Condition::ALL.map(|c| if c == MINUS_POSITION[variant] { -direction } else { direction });
    let extreme = Condition::ALL.map(|c| {
        let (lo, hi) = expectation_range(pair(&m, c).0, pair(&m, c).1);
        if sigma[c.index()] > 0.0 {
            hi
        } else {
            lo
        }
    });
    let s = |e: &[f64; 4]| -> f64 { e.iter().zip(&sigma).map(|(x, s)| x * s).sum() };
    let (s0, s_max) = (s(&e0), s(&extreme));
    let floor = 2.0 + min_excess;
    if s0 > 2.0 || s_max <= floor + min_excess {
        return None;
    }
    let target = rng.gen_range(floor..s_max);
    let lambda = (target - s0) / (s_max - s0);
    let blocks = Condition::ALL.map(|c| {
        let k = c.index();
        let (a, b) = pair(&m, c);
        block_from_stats(c, a, b, e0[k] + lambda * (extreme[k] - e0[k])).0
    });
    Some(
        CombinationTable::new(base.name(), blocks)
            .expect("one block per condition")
            .with_name(format!("{}-perturbed", base.name())),
    )
}

fn pair(m: &[f64; 4], c: Condition) -> (f64, f64) {
    (m[usize::from(c.a_index()) - 1], m[1 + usize::from(c.b_index())])
}

struct Tally {
    summaries: Vec<SuiteSummary>,
    counterexamples: Vec<Counterexample>,
}

struct Evidence {
    jdc: JdcResult,
    max_abs_chsh: f64,
    chsh_violated: bool,
    bellch_satisfied: bool,
    bellch_margin: f64,
}

impl Tally {
    fn new() -> Self {
        Tally {
            summaries: Suite::ALL
                .iter()
                .map(|&suite| SuiteSummary {
                    suite,
                    instances: 0,
                    skipped: 0,
                    counterexamples: 0,
                })
                .collect(),
            counterexamples: Vec::new(),
        }
    }

    fn summary(&mut self, suite: Suite) -> &mut SuiteSummary {
        self.summaries.iter_mut().find(|s| s.suite == suite).expect("every suite is summarized")
    }

    fn fail(&mut self, suite: Suite, kind: InstanceKind, trial: usize, property: &str, table: &CombinationTable, ev: &Evidence) {
        self.summary(suite).counterexamples += 1;
        self.counterexamples.push(Counterexample {
            suite,
            kind,
            trial,
            property: property.to_owned(),
            table: table_to_json(table),
            jdc_residual: ev.jdc.residual,
            jdc_feasible: ev.jdc.is_feasible(),
            max_abs_chsh: ev.max_abs_chsh,
            bellch_satisfied: ev.bellch_satisfied,
        });
    }
}

fn evidence<F>(table: &CombinationTable, config: &OracleConfig, solver: &F) -> Result<Evidence, JdcError>
where
    F: Fn(&CombinationTable, &JdcConfig) -> Result<JdcResult, JdcError>,
{
    let c = chsh(table, 0.0);
    let b = bell_ch(table, MarginalPolicy::Average, 0.0);
    let bellch_margin = b.expressions.iter().map(|x| (x + 1.0).min(-x)).fold(f64::INFINITY, f64::min);
    Ok(Evidence {
        jdc: solver(table, &config.jdc)?,
        max_abs_chsh: c.max_abs,
        chsh_violated: c.violated,
        bellch_satisfied: b.satisfied,
        bellch_margin,
    })
}

/// Runs every suite with the library's own solver.
pub fn run(config: &OracleConfig) -> Result<OracleReport, JdcError> {
    run_with(config, check)
}

/// Runs every suite with `solver` standing in for the joint distribution criterion.
pub fn run_with<F>(config: &OracleConfig, solver: F) -> Result<OracleReport, JdcError>
where
    F: Fn(&CombinationTable, &JdcConfig) -> Result<JdcResult, JdcError>,
{
    let mut tally = Tally::new();
    let margin = config.ambiguity_margin;
    for trial in 0..config.trials {
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        rng.set_stream(trial as u64);

        let joint = marginalize(&random_joint_from(&mut rng), &format!("joint-{trial}"));
        let exact = random_exact_ms(&mut rng, &format!("exact-ms-{trial}"));
        let mut perturbed = None;
        for _ in 0..64 {
            let base = marginalize(&random_joint_from(&mut rng), &format!("base-{trial}"));
            if let Some(t) = perturb_past_bound(&mut rng, &base, 0.01) {
                perturbed = Some(t);
                break;
            }
        }

        let mut exact_ms = vec![(InstanceKind::JointDerived, joint), (InstanceKind::RandomExactMs, exact)];
        exact_ms.extend(perturbed.map(|t| (InstanceKind::PerturbedPastBound, t)));
        for (kind, table) in &exact_ms {
            let ev = evidence(table, config, &solver)?;
            let feasible = ev.jdc.is_feasible();
            let near_bell = ev.bellch_margin.abs() < margin;
            let near_chsh = (ev.max_abs_chsh - 2.0).abs() < margin;

            tally.summary(Suite::FineEquivalence).instances += 1;
            if *kind == InstanceKind::JointDerived && !feasible {
                tally.fail(Suite::FineEquivalence, *kind, trial, "marginalized joint must be feasible", table, &ev);
            } else if feasible && !ev.jdc.witness.as_ref().is_some_and(|w| verify(w, table, WITNESS_TOLERANCE)) {
                tally.fail(Suite::FineEquivalence, *kind, trial, "feasible witness must reproduce the table", table, &ev);
            } else if near_bell || near_chsh {
                tally.summary(Suite::FineEquivalence).skipped += 1;
            } else if ev.bellch_satisfied != feasible {
                tally.fail(Suite::FineEquivalence, *kind, trial, "bell/ch satisfied <=> jdc feasible", table, &ev);
            } else if feasible && ev.chsh_violated {
                tally.fail(Suite::FineEquivalence, *kind, trial, "jdc feasible => all |chsh| <= 2", table, &ev);
            } else if !feasible && !ev.chsh_violated {
                tally.fail(Suite::FineEquivalence, *kind, trial, "jdc infeasible => some |chsh| > 2", table, &ev);
            }

            tally.summary(Suite::ChshImpliesBellCh).instances += 1;
            if near_bell || near_chsh {
                tally.summary(Suite::ChshImpliesBellCh).skipped += 1;
            } else if ev.chsh_violated && ev.bellch_satisfied {
                tally.fail(Suite::ChshImpliesBellCh, *kind, trial, "chsh violated => bell/ch violated", table, &ev);
            } else if !ev.chsh_violated && !ev.bellch_satisfied {
                tally.fail(Suite::ChshImpliesBellCh, *kind, trial, "bell/ch violated => chsh violated", table, &ev);
            }
        }
        if exact_ms.len() < 3 {
            tally.summary(Suite::FineEquivalence).skipped += 1;
        }

        let skewed = loop {
            let t = random_per_condition(&mut rng, &format!("per-condition-{trial}"));
            if marginal_diffs(&t).iter().any(|d| *d > config.necessity_min_diff) {
                break t;
            }
        };
        let ev = evidence(&skewed, config, &solver)?;
        tally.summary(Suite::MsNecessity).instances += 1;
        if ev.jdc.is_feasible() {
            tally.fail(
                Suite::MsNecessity,
                InstanceKind::PerCondition,
                trial,
                "marginal selectivity failure => jdc infeasible",
                &skewed,
                &ev,
            );
        }
    }
    Ok(OracleReport {
        trials: config.trials,
        seed: config.seed,
        lp_tolerance: config.jdc.tolerance,
        generator: GENERATOR,
        suites: tally.summaries,
        counterexamples: tally.counterexamples,
    })
}
