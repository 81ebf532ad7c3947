//! End-to-end synthesis checks on the thermostat.

use switchsynth::guards::{optimize_initial_state, synthesize_logic, SynthesisConfig};
use switchsynth::systems::load_named;
use switchsynth::HybridState;

#[test]
fn optima_from_nearby_states_share_switch_states() {
    let named = load_named::<f64>("thermostat").unwrap();
    let cfg = SynthesisConfig::from_settings(&named.document.synthesis, 3);
    let mut cycles: Vec<Vec<(usize, usize, f64)>> = Vec::new();
    for temp in [20.5, 21.0, 21.5, 22.0] {
        let init = HybridState::new(0, vec![temp, 16.0]);
        let opt = optimize_initial_state(&named.system, &named.metric, &init, &cfg, 3).unwrap();
        // one representative temperature per switch of the cycle
        let mut states: Vec<(usize, usize, f64)> = Vec::new();
        for e in &opt.summary.cycle_switches {
            if !states.iter().any(|s| s.0 == e.from && s.1 == e.to) {
                states.push((e.from, e.to, e.state[0]));
            }
        }
        states.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cycles.push(states);
    }
    for c in &cycles[1..] {
        assert_eq!(c.len(), cycles[0].len(), "{cycles:?}");
        for (a, b) in c.iter().zip(&cycles[0]) {
            assert_eq!((a.0, a.1), (b.0, b.1));
            assert!((a.2 - b.2).abs() < 1e-2, "{cycles:?}");
        }
    }
}

#[test]
fn synthesis_is_deterministic_and_reports_composed_error() {
    let named = load_named::<f64>("thermostat").unwrap();
    let mut settings = named.document.synthesis.clone();
    settings.max_init_states = 3;
    settings.restarts = 8;
    let cfg = SynthesisConfig::from_settings(&settings, 5);
    let a = synthesize_logic("thermostat", &named.system, &named.metric, &cfg).unwrap();
    let b = synthesize_logic("thermostat", &named.system, &named.metric, &cfg).unwrap();
    assert_eq!(a.report, b.report);
    let m = a.report.learned().count();
    assert!(m <= named.system.num_modes().pow(2));
    assert!((a.report.failure_probability - m as f64 * a.report.epsilon).abs() < 1e-12);
    for g in a.report.learned() {
        assert_eq!(g.training_error, 0);
    }
}
