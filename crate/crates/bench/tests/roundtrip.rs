//! Configurations and printed numbers survive a write/read cycle unchanged.

use metctl_bench::ScenarioConfig;
use metctl_core::env::fmt_real;
use metctl_core::reinforce::OptimizerKind;
use metctl_core::ModelKind;
use proptest::prelude::*;

const CASES: u32 = 10_000;

fn arb_config() -> impl Strategy<Value = ScenarioConfig> {
    (
        any::<bool>(),
        0.0..0.3f64,
        any::<u64>(),
        1e-6..1e-1f64,
        1u32..1000,
        2u32..2000,
        1usize..16,
        any::<bool>(),
        prop::option::of(0.0..1.0f64),
        prop::collection::vec((0usize..64, 0.9..1.0f64), 0..4),
        prop::collection::vec((0usize..64, 0.5..2.0f64), 0..3),
    )
        .prop_map(|(fa, level, seed, lr, epochs, episodes, workers, sgd, baseline, params, states)| {
            let kind = if fa { ModelKind::FattyAcid } else { ModelKind::Lactate };
            let mut c = ScenarioConfig::preset(kind);
            c.uncertainty.level = level;
            c.train.seed = seed;
            c.train.learning_rate = lr;
            c.train.epochs_max = epochs;
            c.train.episodes_per_epoch = episodes;
            c.train.workers = workers;
            if sgd {
                c.train.optimizer = OptimizerKind::Sgd;
            }
            c.baseline_input = baseline.map(|f| c.input_bounds.0 + f * (c.input_bounds.1 - c.input_bounds.0));
            let nominal = kind.nominal();
            let names = kind.parameter_names();
            for (i, scale) in params {
                let name = names[i % names.len()];
                c.parameters.insert(name.to_string(), nominal.get(name).unwrap() * scale);
            }
            let x0 = kind.nominal_initial_state();
            let labels = kind.state_labels();
            for (i, scale) in states {
                let k = i % labels.len();
                c.initial_state.insert(labels[k].to_string(), x0.values()[k] * scale);
            }
            c
        })
        .prop_filter("valid configuration", |c| c.validate().is_ok())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: CASES, ..ProptestConfig::default() })]

    #[test]
    fn config_parse_serialize_parse_is_value_identical(c in arb_config()) {
        let text = c.to_json();
        let parsed = ScenarioConfig::from_json(&text).unwrap();
        prop_assert_eq!(&parsed, &c);
        prop_assert_eq!(ScenarioConfig::from_json(&parsed.to_json()).unwrap(), parsed);
    }

    #[test]
    fn printed_reals_parse_back_bit_exactly(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let back: f64 = fmt_real(v).parse().unwrap();
        prop_assert_eq!(back.to_bits(), v.to_bits());
    }
}
