use std::path::PathBuf;

use homesim_cli::{run, RunConfig};
use proptest::prelude::*;

fn arena(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios").join(format!("{name}.arena"))
}

fn config() -> impl Strategy<Value = RunConfig> {
    (
        prop_oneof![Just("garbage"), Just("drinks"), Just("missing")],
        any::<bool>(),
        any::<u64>(),
        prop_oneof![Just(-0.1), Just(0.0), Just(0.1), Just(0.2)],
        prop_oneof![Just(-1.0), Just(0.0), 0.5..12.0f64],
        any::<bool>(),
    )
        .prop_map(|(scene, known_task, seed, dt, limit, deterministic_race)| RunConfig {
            arena: arena(scene),
            task: if known_task { if scene == "drinks" { "drinks" } else { "garbage" }.into() } else { "laundry".into() },
            seed,
            dt,
            limit: Some(limit),
            trace: None,
            render: None,
            render_truth: None,
            deterministic_race,
            simple_top_grasp: false,
            carry_bag_low: false,
        })
}

fn invoke(cfg: &RunConfig) -> (i32, Vec<u8>, Vec<u8>) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(cfg, &mut out, &mut err);
    (code, out, err)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn exit_code_follows_report_and_validity(cfg in config()) {
        let (code, out, err) = invoke(&cfg);
        let valid = cfg.arena.exists() && cfg.task != "laundry" && cfg.dt > 0.0 && cfg.limit.is_some_and(|l| l > 0.0);
        if !valid {
            prop_assert_eq!(code, 2);
            prop_assert!(out.is_empty());
            prop_assert!(String::from_utf8(err).unwrap().starts_with("error: "));
        } else {
            let text = String::from_utf8(out).unwrap();
            let success = text.lines().any(|l| l == "success=true");
            prop_assert_eq!(code, if success { 0 } else { 1 });
        }
    }

    #[test]
    fn outputs_repeat_byte_for_byte(cfg in config()) {
        prop_assert_eq!(invoke(&cfg), invoke(&cfg));
    }
}
