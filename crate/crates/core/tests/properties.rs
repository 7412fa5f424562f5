use proptest::prelude::*;

use qagg_core::analytic::{known_configurations, ConfigurationLabel, GBackends};
use qagg_core::channel::{ChannelPoint, MemoryModel, PathSet, PhysicalConstants};
use qagg_core::codes::{AmplitudeVector, CodeSpec};
use qagg_core::oracle::{enumerate_loss_patterns, Oracle, OracleOptions};
use qagg_core::planner::{AggregationScenario, Backend, Evaluator};

fn alpha(dim: usize) -> impl Strategy<Value = AmplitudeVector> {
    prop::collection::vec(0.01f64..1.0, dim).prop_map(|v| AmplitudeVector::from_real(&v).unwrap())
}

fn code_and_layout() -> impl Strategy<Value = ConfigurationLabel> {
    prop::sample::select(CodeSpec::all().iter().flat_map(|&c| known_configurations(c)).collect::<Vec<_>>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn backends_agree_on_physical_scenarios(
        label in code_and_layout(),
        l1 in 0.1f64..20.0,
        gaps in (0.1f64..20.0, 0.1f64..20.0),
        t2 in 1e-6f64..1e-2,
        seed in prop::collection::vec(0.01f64..1.0, 7),
    ) {
        let lengths: Vec<f64> = [l1, l1 + gaps.0, l1 + gaps.0 + gaps.1][..label.num_paths()].to_vec();
        let dim = label.code().dim();
        let a = AmplitudeVector::from_real(&seed[..dim]).unwrap();
        let s = AggregationScenario::new(label, PathSet::new(lengths).unwrap(), MemoryModel::new(t2).unwrap(),
            PhysicalConstants::default(), a).unwrap();
        let fa = Evaluator::new(Backend::Analytic, GBackends::default(), OracleOptions::default()).fidelity(&s).unwrap();
        let fo = Evaluator::new(Backend::Oracle, GBackends::default(), OracleOptions::default()).fidelity(&s).unwrap();
        prop_assert!((fa.fidelity - fo.fidelity).abs() < 1e-9);
        prop_assert!((fa.success_probability - fo.success_probability).abs() < 1e-12);
        fa.check_consistency(s.code(), 1e-12).unwrap();
    }

    #[test]
    fn fidelity_is_bounded_below_by_the_blind_guess(
        label in code_and_layout(),
        p in prop::collection::vec(0.0f64..=1.0, 3),
        pd in 0.0f64..=1.0,
    ) {
        let k = label.num_paths();
        let point = match k {
            2 => ChannelPoint::two_path(p[0], p[1], pd).unwrap(),
            _ => ChannelPoint::three_path([p[0], p[1], p[2]], pd, pd, pd).unwrap(),
        };
        let dim = label.code().dim();
        let o = Oracle::new(&label, &AmplitudeVector::uniform(dim), OracleOptions::default()).unwrap();
        let r = o.fidelity(&point).unwrap();
        // Any decoded output overlaps the target at least as much as noise would on average.
        prop_assert!(r.fidelity >= r.residual - 1e-12);
        prop_assert!(r.fidelity <= 1.0 + 1e-12);
    }

    #[test]
    fn loss_patterns_form_a_distribution(
        label in code_and_layout(),
        p in prop::collection::vec(0.0f64..=1.0, 3),
    ) {
        let pats = enumerate_loss_patterns(&label, &p[..label.num_paths()]).unwrap();
        prop_assert_eq!(pats.len(), 1 << label.code().n());
        let total: f64 = pats.iter().map(|x| x.probability()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn branch_factors_lie_in_the_unit_interval(a in alpha(5), p1 in 0.3f64..1.0, p2 in 0.3f64..1.0, pd in 0.0f64..=1.0) {
        let label = ConfigurationLabel::parse(CodeSpec::new(5).unwrap(), "3+2").unwrap();
        let o = Oracle::new(&label, &a, OracleOptions::default()).unwrap();
        let r = o.fidelity(&ChannelPoint::two_path(p1, p2, pd).unwrap()).unwrap();
        prop_assert!(r.terms.iter().all(|t| t.factor_value <= 1.0 + 1e-12 && t.factor_value >= 0.0));
    }
}
