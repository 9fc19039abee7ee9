#![no_main]

use f4tele_cli::plan::ExperimentPlan;
use f4tele_cli::sweep::plan_points;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(plan) = ExperimentPlan::parse(text) {
        assert!(plan.k_ref() >= 1);
        assert!(plan.max_load() > 0.0 && plan.max_load() <= 1.0);
        assert!(!plan_points(&plan).is_empty());
    }
});
