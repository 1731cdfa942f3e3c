use compositionality::classify::{classify, AnalysisConfig};
use compositionality::inequalities::{bell_ch, chsh, MarginalPolicy};
use compositionality::ingest::{aggregate, parse_table, parse_trials, sense_probability, table_to_json, write_trials, AssociationNorm, TrialRecord};
use compositionality::jdc::{check, project_to_ms, verify, JdcConfig};
use compositionality::model::{block_from_stats, expectation_range, normalize, CountBlock};
use compositionality::oracle::random_exact_ms;
use compositionality::selectivity::marginal_diffs;
use compositionality::synth::{marginalize, random_joint_from, random_per_condition};
use compositionality::{CombinationTable, Condition, JointDistribution, Sign};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn joint() -> impl Strategy<Value = JointDistribution> {
    prop::array::uniform16(0.0f64..1.0)
        .prop_filter("some mass", |q| q.iter().sum::<f64>() > 1e-3)
        .prop_map(|q| JointDistribution::renormalized(q).unwrap())
}

fn per_condition() -> impl Strategy<Value = CombinationTable> {
    any::<u64>().prop_map(|seed| random_per_condition(&mut ChaCha20Rng::seed_from_u64(seed), "p"))
}

fn exact_ms() -> impl Strategy<Value = CombinationTable> {
    any::<u64>().prop_map(|seed| random_exact_ms(&mut ChaCha20Rng::seed_from_u64(seed), "e"))
}

fn sign() -> impl Strategy<Value = Sign> {
    prop_oneof![Just(Sign::Plus), Just(Sign::Minus)]
}

fn record() -> impl Strategy<Value = TrialRecord> {
    (
        prop::sample::select(vec!["toast gag", "apple chip", "x"]),
        0usize..4,
        sign(),
        sign(),
        prop::option::of("[a-z0-9]{1,6}"),
    )
        .prop_map(|(name, c, a, b, subject)| TrialRecord {
            combination: name.to_owned(),
            condition: Condition::ALL[c],
            a_outcome: a,
            b_outcome: b,
            subject_id: subject,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn normalized_counts_are_probabilities(counts in prop::array::uniform4(0u64..1000)) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let b = normalize(&CountBlock::new(Condition::A2B1, counts)).unwrap();
        prop_assert!((b.cells().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&b.marginal_a()));
        prop_assert!(b.expectation().abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn block_from_stats_inverts_marginals_and_expectation(a in 0.0f64..=1.0, b in 0.0f64..=1.0, t in 0.0f64..=1.0) {
        let (lo, hi) = expectation_range(a, b);
        let e = lo + t * (hi - lo);
        let (block, clamp) = block_from_stats(Condition::A1B1, a, b, e);
        prop_assert!(clamp.is_none());
        prop_assert!((block.marginal_a() - a).abs() < 1e-12);
        prop_assert!((block.marginal_b() - b).abs() < 1e-12);
        prop_assert!((block.expectation() - e).abs() < 1e-12);
    }

    #[test]
    fn marginalized_joints_satisfy_everything(q in joint()) {
        let t = marginalize(&q, "q");
        prop_assert!(marginal_diffs(&t).iter().all(|d| *d < 1e-12));
        prop_assert!(!chsh(&t, 1e-9).violated);
        prop_assert!(bell_ch(&t, MarginalPolicy::Average, 1e-9).satisfied);
        let r = check(&t, &JdcConfig::default()).unwrap();
        prop_assert!(r.is_feasible());
        prop_assert!(r.residual <= 1e-9);
        prop_assert!(verify(r.witness.as_ref().unwrap(), &t, 1e-6));
    }

    #[test]
    fn jdc_result_invariants(t in per_condition()) {
        let r = check(&t, &JdcConfig::default()).unwrap();
        if r.is_feasible() {
            prop_assert!(r.residual <= r.tolerance);
            prop_assert!(verify(r.witness.as_ref().unwrap(), &t, 1e-6));
        } else {
            prop_assert!(r.residual > r.tolerance);
            prop_assert!(r.witness.is_none());
        }
    }

    #[test]
    fn ms_failure_means_infeasible(t in per_condition()) {
        let cfg = JdcConfig::default();
        prop_assume!(marginal_diffs(&t).iter().any(|d| *d > 2.0 * cfg.tolerance));
        prop_assert!(!check(&t, &cfg).unwrap().is_feasible());
    }

    #[test]
    fn fine_equivalence_on_exact_ms_tables(t in exact_ms()) {
        let c = chsh(&t, 0.0);
        let b = bell_ch(&t, MarginalPolicy::Average, 0.0);
        let margin = b.expressions.iter().map(|x| (x + 1.0).min(-x)).fold(f64::INFINITY, f64::min);
        prop_assume!(margin.abs() > 1e-6 && (c.max_abs - 2.0).abs() > 1e-6);
        let feasible = check(&t, &JdcConfig::default()).unwrap().is_feasible();
        prop_assert_eq!(b.satisfied, feasible);
        prop_assert_eq!(!c.violated, feasible);
    }

    #[test]
    fn projection_gives_exact_ms_and_keeps_expectations(t in per_condition()) {
        let p = project_to_ms(&t);
        prop_assert!(marginal_diffs(&p.table).iter().all(|d| *d < 1e-12));
        if p.clamps.is_empty() {
            for (x, y) in p.table.expectations().iter().zip(t.expectations()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn projection_fixes_exact_ms_tables(q in joint()) {
        let t = marginalize(&q, "q");
        let p = project_to_ms(&t);
        prop_assert!(!p.rebalanced);
        for c in Condition::ALL {
            for (x, y) in p.table.block(c).cells().iter().zip(t.block(c).cells()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn classification_is_deterministic(t in per_condition()) {
        let cfg = AnalysisConfig { overrides: vec!["*".into()], ..Default::default() };
        prop_assert_eq!(classify(&t, &cfg).unwrap(), classify(&t, &cfg).unwrap());
    }

    #[test]
    fn agreement_holds_without_clamping(t in exact_ms()) {
        let c = classify(&t, &AnalysisConfig::default()).unwrap();
        let margin = c.bellch_report.as_ref().unwrap().expressions.iter()
            .map(|x| (x + 1.0).min(-x)).fold(f64::INFINITY, f64::min);
        prop_assume!(margin.abs() > 1e-6);
        prop_assert!(c.projection.as_ref().unwrap().clamps.is_empty());
        prop_assert_eq!(c.agreement, Some(true));
    }

    #[test]
    fn table_json_round_trips(t in per_condition(), n in prop::option::of(1u64..500)) {
        let t = match n { Some(n) => t.with_uniform_n(n), None => t };
        let text = serde_json::to_string(&table_to_json(&t)).unwrap();
        let back = parse_table(text.as_bytes()).unwrap();
        prop_assert_eq!(back.name(), t.name());
        for c in Condition::ALL {
            prop_assert_eq!(back.block(c).n(), t.block(c).n());
            for (x, y) in back.block(c).cells().iter().zip(t.block(c).cells()) {
                prop_assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn trials_csv_round_trips(records in prop::collection::vec(record(), 0..60)) {
        let text = write_trials(&records);
        prop_assert_eq!(parse_trials(text.as_bytes()).unwrap(), records);
    }

    #[test]
    fn aggregate_totals_match_record_counts(records in prop::collection::vec(record(), 0..200)) {
        if let Ok(tables) = aggregate(&records) {
            for (name, table) in &tables {
                for c in Condition::ALL {
                    let count = records.iter().filter(|r| &r.combination == name && r.condition == c).count();
                    prop_assert_eq!(table.block(c).n(), Some(count as u64));
                }
            }
        }
    }

    #[test]
    fn sense_probability_is_monotone(
        probs in prop::collection::vec(0.0f64..0.1, 1..10),
        mask in prop::collection::vec(any::<bool>(), 10),
        extra in 0usize..10,
    ) {
        let norm = AssociationNorm {
            cue: "c".into(),
            associates: probs.iter().enumerate().map(|(i, p)| (format!("w{i}"), *p)).collect(),
        };
        let small: Vec<String> = (0..probs.len()).filter(|i| mask[*i]).map(|i| format!("w{i}")).collect();
        let mut large = small.clone();
        large.push(format!("w{extra}"));
        prop_assert!(sense_probability(&norm, &large) >= sense_probability(&norm, &small));
    }
}

#[test]
fn thousand_random_joints_pass_every_check() {
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let cfg = AnalysisConfig {
        selectivity: compositionality::selectivity::SelectivityConfig {
            mode: compositionality::selectivity::MsMode::Strict,
            ..Default::default()
        },
        ..Default::default()
    };
    for _ in 0..1000 {
        let t = marginalize(&random_joint_from(&mut rng), "r");
        let c = classify(&t, &cfg).unwrap();
        assert!(c.ms_report.holds);
        assert!(c.bellch_report.as_ref().unwrap().satisfied);
        assert!(c.jdc_result.is_feasible());
    }
}
