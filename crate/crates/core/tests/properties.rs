use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use switchsynth::guards::{
    perceptron_learn, GuardReport, Label, LabeledSample, SynthesisConfig, SynthesisReport,
};
use switchsynth::objective::{nz_reduce, supersequence, DwellSchedule, Objective};
use switchsynth::optimizer::{nelder_mead, SimplexConfig};
use switchsynth::systems::{load_named, NamedSystem};
use switchsynth::HybridState;

fn objective_for(named: &NamedSystem<f64>) -> Objective<'_, f64> {
    let cfg = SynthesisConfig::from_settings(&named.document.synthesis, 0);
    let (mode, state) = named.system.initial_set.members()[0].clone();
    Objective::new(&named.system, &named.metric, HybridState::new(mode, state), cfg.objective)
}

/// Switch times from dwell increments, some of them exactly zero.
fn schedule_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>, f64)> {
    (2usize..=4, 1usize..=3).prop_flat_map(|(modes, reps)| {
        let n = supersequence(modes, 0, reps).len() - 1;
        (
            Just(modes),
            Just(reps),
            prop::collection::vec(prop_oneof![Just(0.0), 1e-6..2.0f64], n),
            0.0..2.0f64,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn nz_reduction_is_idempotent((modes, reps, dwells, tail) in schedule_strategy(), eps in 1e-9..0.5f64) {
        let base = supersequence(modes, 0, reps);
        let raw: Vec<f64> = dwells.iter().scan(0.0, |t, d| { *t += d; Some(*t) }).collect();
        let end = raw.last().copied().unwrap_or(0.0) + tail;
        let sched = DwellSchedule { raw_times: raw, repeat_start: 0.0, repeat_end: end };
        if let Ok(once) = nz_reduce(&base, &sched, eps) {
            let again = nz_reduce(
                &once.modes,
                &DwellSchedule { raw_times: once.times.clone(), repeat_start: once.repeat_start, repeat_end: once.repeat_end },
                eps,
            ).expect("a reduced schedule reduces again");
            prop_assert_eq!(&again.modes, &once.modes);
            prop_assert_eq!(&again.times, &once.times);
        }
    }

    #[test]
    fn nelder_mead_best_value_never_increases(
        center in prop::collection::vec(-3.0..3.0f64, 1..5),
        start in prop::collection::vec(-5.0..5.0f64, 5),
    ) {
        let f = |x: &[f64]| -> f64 {
            x.iter().zip(&center).map(|(a, c)| (a - c).powi(2)).sum::<f64>()
                + (x[0] - center[0]).abs().sqrt()
        };
        let x0 = &start[..center.len()];
        let res = nelder_mead(f, x0, &SimplexConfig::default());
        prop_assert!(res.history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(res.best_value <= f(x0));
    }

    #[test]
    fn perceptron_respects_mistake_bound(
        dim in 1usize..=5,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let theta0 = rng.gen_range(-0.5..0.5);
        let mut sample = LabeledSample::new();
        while sample.len() < 40 {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let s: f64 = theta.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + theta0;
            if s.abs() >= 0.05 {
                sample.push(x, if s > 0.0 { Label::Positive } else { Label::Negative });
            }
        }
        prop_assume!(sample.count(Label::Positive) > 0 && sample.count(Label::Negative) > 0);
        let norm = (theta.iter().map(|t| t * t).sum::<f64>() + theta0 * theta0).sqrt();
        let (mut r_max, mut gamma) = (0.0f64, f64::INFINITY);
        for (x, l) in sample.points.iter().zip(&sample.labels) {
            let s: f64 = theta.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + theta0;
            gamma = gamma.min(l.sign::<f64>() * s / norm);
            r_max = r_max.max((x.iter().map(|v| v * v).sum::<f64>() + 1.0).sqrt());
        }
        let learned = perceptron_learn(&sample, 100_000).expect("separable sample");
        prop_assert_eq!(learned.guard.misclassified(&sample), 0);
        prop_assert!(learned.updates as f64 <= (r_max / gamma).powi(2) + 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objective_is_total_and_sentinel_exact(
        id in prop::sample::select(vec!["thermostat", "oil-pump-cost1", "buck-boost"]),
        raw in prop::collection::vec(prop_oneof![-1e3..1e3f64, -1.0..10.0f64, Just(0.0)], 16),
    ) {
        let named = load_named::<f64>(id).unwrap();
        let obj = objective_for(&named);
        let scale = named.document.synthesis.dwell_bounds[1];
        let v: Vec<f64> = raw[..obj.dim()].iter().map(|x| x * scale).collect();
        let f = obj.evaluate_vector(&v);
        prop_assert!(f.is_finite());
        match obj.evaluate_detailed(&obj.decode(&v)) {
            Err(_) => prop_assert_eq!(f, obj.sentinel()),
            Ok(e) => {
                prop_assert_eq!(f, e.value);
                let weight = obj.cfg.distance_weight;
                prop_assert!((e.value - (e.cost + weight * e.distance)).abs() <= 1e-9 * e.value.abs().max(1.0));
            }
        }
    }
}

fn report_with(guards: Vec<GuardReport>) -> SynthesisReport {
    SynthesisReport {
        system: "test".into(),
        seed: 0,
        epsilon: 0.1,
        delta: 0.05,
        feature_dim: 2,
        pac_sample_size: 0,
        initial_states: 0,
        failure_probability: 0.0,
        statement: String::new(),
        guards,
        inits: Vec::new(),
    }
}

fn guard(from: &str, to: &str, theta: Vec<f64>, theta0: f64, condition: &[(&str, f64)]) -> GuardReport {
    GuardReport {
        from: from.into(),
        to: to.into(),
        condition: condition.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>(),
        theta,
        theta0,
        inequality: String::new(),
        threshold: None,
        positives: 1,
        negatives: 1,
        training_error: 0,
        updates: 1,
        error: None,
    }
}

#[test]
fn emitted_guards_stay_inside_over_approximation() {
    let named = load_named::<f64>("buck-boost").unwrap();
    let sys = &named.system;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pairs = [("M2", "M3"), ("M1", "M3"), ("M1", "M2"), ("M3", "M1")];
    for (from, to) in pairs {
        let theta = vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), 0.0];
        let report = report_with(vec![guard(from, to, theta, rng.gen_range(-5.0..5.0), &[("R", 100.0)])]);
        let logic = report.to_logic(sys).unwrap();
        let (f, t) = (sys.mode_index(from).unwrap(), sys.mode_index(to).unwrap());
        let over = sys.over(f, t);
        for _ in 0..1000 {
            let il = if rng.gen_bool(0.3) { rng.gen_range(-2e-3..2e-3) } else { rng.gen_range(-1.0..5.0) };
            let x = [il, rng.gen_range(0.0..20.0), if rng.gen_bool(0.5) { 100.0 } else { 200.0 }];
            if logic.enabled(f, t, &x) {
                assert!(over.contains(&x), "{from}->{to} enabled outside its over-approximation at {x:?}");
                assert_eq!(x[2], 100.0);
            }
        }
    }
}
