use ris_fdisac::config::ScenarioConfig;
use ris_fdisac::orchestrator::{init_feasible, prepare_instance, Mode, RunOptions};
use ris_fdisac::scenario::generate_channels;

#[test]
fn default_scenario_starts_feasible_on_most_seeds() {
    let s = ScenarioConfig::default().validate().unwrap();
    let opts = RunOptions::default();
    let feasible = (0..100u64)
        .filter(|&seed| {
            let ch = generate_channels(&s, seed).unwrap();
            let inst = prepare_instance(&s, &ch, Mode::Full);
            init_feasible(&inst, Mode::Full, seed, &opts).is_ok()
        })
        .count();
    assert!(feasible >= 95, "feasible start on {feasible}/100 seeds");
}
