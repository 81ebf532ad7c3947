//! Guard learning: PAC sample sizes, the perceptron, and the end-to-end
//! synthesis of switching logic from per-initial-state optima.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SynthesisSettings;
use crate::error::{Error, Result};
use crate::model::{
    HybridState, LinearConstraint, MultimodalSystem, PerformanceMetric, Region, Relation,
    SwitchingLogic,
};
use crate::objective::{extract_switching_states, Objective, ObjectiveConfig, SwitchingSummary};
use crate::optimizer::{minimize_from_starts, sample_starts_where, SimplexConfig};
use crate::scalar::{dot, Scalar};
use crate::simulator::IntegratorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Label::Positive => T::one(),
            Label::Negative => -T::one(),
        }
    }
}

/// Labeled feature vectors for one mode pair.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabeledSample<T> {
    pub points: Vec<Vec<T>>,
    pub labels: Vec<Label>,
}

impl<T: Scalar> LabeledSample<T> {
    pub fn new() -> Self {
        LabeledSample {
            points: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, x: Vec<T>, label: Label) {
        self.points.push(x);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    fn check(&self) -> Result<usize> {
        if self.count(Label::Positive) == 0 || self.count(Label::Negative) == 0 {
            return Err(Error::OneSidedSample(format!(
                "{} positive and {} negative points",
                self.count(Label::Positive),
                self.count(Label::Negative)
            )));
        }
        let dim = self.points[0].len();
        if self.points.iter().any(|p| p.len() != dim) || self.labels.len() != self.points.len() {
            return Err(Error::InvalidArgument("sample points differ in dimension".into()));
        }
        Ok(dim)
    }
}

/// `{ x : theta·x + theta0 >= 0 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceGuard<T> {
    pub theta: Vec<T>,
    pub theta0: T,
}

impl<T: Scalar> HalfspaceGuard<T> {
    pub fn score(&self, x: &[T]) -> T {
        dot(&self.theta, x) + self.theta0
    }

    pub fn contains(&self, x: &[T]) -> bool {
        self.score(x) >= T::zero()
    }

    pub fn classify(&self, x: &[T]) -> Label {
        if self.contains(x) {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn misclassified(&self, sample: &LabeledSample<T>) -> usize {
        sample
            .points
            .iter()
            .zip(&sample.labels)
            .filter(|(x, &l)| self.classify(x) != l)
            .count()
    }

    /// Embeds the halfspace over `features` into an `n`-dimensional constraint.
    pub fn constraint(&self, n: usize, features: &[usize]) -> LinearConstraint<T> {
        let mut coeffs = vec![T::zero(); n];
        for (&i, &c) in features.iter().zip(&self.theta) {
            coeffs[i] = c;
        }
        LinearConstraint::new(coeffs, self.theta0, Relation::Ge)
    }

    pub fn region(&self) -> Region<T> {
        Region::Conj(vec![LinearConstraint::new(self.theta.clone(), self.theta0, Relation::Ge)])
    }

    pub fn render(&self, names: &[String]) -> String {
        self.region().render(names)
    }

    /// For a halfspace with exactly one nonzero coefficient: the variable
    /// index, the relation and the threshold.
    pub fn threshold(&self) -> Option<(usize, Relation, T)> {
        let nz: Vec<usize> = (0..self.theta.len())
            .filter(|&i| self.theta[i] != T::zero())
            .collect();
        if nz.len() != 1 {
            return None;
        }
        let c = self.theta[nz[0]];
        let rel = if c > T::zero() { Relation::Ge } else { Relation::Le };
        Some((nz[0], rel, -self.theta0 / c))
    }
}

/// Accuracy `epsilon`, confidence `delta`, feature dimension `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub n: usize,
}

impl PacConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if open(self.epsilon) && open(self.delta) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "epsilon and delta must lie in (0, 1), got {} and {}",
                self.epsilon, self.delta
            )))
        }
    }
}

/// Blumer et al. sample bound for halfspaces (VC dimension `n + 1`) with
/// base-2 logarithms.
pub fn pac_sample_size(cfg: &PacConfig) -> Result<usize> {
    pac_sample_size_with_base(cfg, 2.0)
}

/// `ceil(max(4/ε log(2/δ), 8(n+1)/ε log(13/ε)))` in the given log base.
pub fn pac_sample_size_with_base(cfg: &PacConfig, base: f64) -> Result<usize> {
    cfg.validate()?;
    if !(base > 0.0 && base != 1.0) {
        return Err(Error::InvalidArgument(format!("bad logarithm base {base}")));
    }
    let (e, d) = (cfg.epsilon, cfg.delta);
    let vc = (cfg.n + 1) as f64;
    let a = 4.0 / e * (2.0 / d).log(base);
    let b = 8.0 * vc / e * (13.0 / e).log(base);
    Ok(a.max(b).ceil() as usize)
}

/// A successful perceptron run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learned<T> {
    pub guard: HalfspaceGuard<T>,
    pub updates: usize,
}

/// Mistake-driven perceptron with bias; always corrects the lowest-index
/// misclassified point. Gives up after `max_passes * |sample|` updates.
pub fn perceptron_learn<T: Scalar>(sample: &LabeledSample<T>, max_passes: usize) -> Result<Learned<T>> {
    let dim = sample.check()?;
    let mut guard = HalfspaceGuard {
        theta: vec![T::zero(); dim],
        theta0: T::zero(),
    };
    let budget = max_passes.saturating_mul(sample.len());
    let mut updates = 0;
    loop {
        let wrong = (0..sample.len())
            .find(|&i| guard.classify(&sample.points[i]) != sample.labels[i]);
        let Some(i) = wrong else {
            return Ok(Learned { guard, updates });
        };
        if updates == budget {
            return Err(Error::NonSeparable {
                misclassified: guard.misclassified(sample),
                updates,
            });
        }
        let y: T = sample.labels[i].sign();
        for (t, &x) in guard.theta.iter_mut().zip(&sample.points[i]) {
            *t = *t + y * x;
        }
        guard.theta0 = guard.theta0 + y;
        updates += 1;
    }
}

/// Affine map of each coordinate onto `[-1, 1]` over the sample's range.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer<T> {
    center: Vec<T>,
    scale: Vec<T>,
}

impl<T: Scalar> Normalizer<T> {
    pub fn fit(points: &[Vec<T>]) -> Self {
        let dim = points.first().map_or(0, |p| p.len());
        let mut center = Vec::with_capacity(dim);
        let mut scale = Vec::with_capacity(dim);
        for j in 0..dim {
            let lo = points.iter().map(|p| p[j]).fold(T::infinity(), T::min);
            let hi = points.iter().map(|p| p[j]).fold(T::neg_infinity(), T::max);
            let half = (hi - lo) / T::lit(2.0);
            center.push(lo + half);
            scale.push(if half > T::zero() { T::one() / half } else { T::one() });
        }
        Normalizer { center, scale }
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(&self.center)
            .zip(&self.scale)
            .map(|((&v, &c), &s)| (v - c) * s)
            .collect()
    }

    /// Expresses a halfspace over normalized coordinates in raw coordinates.
    pub fn unmap(&self, g: &HalfspaceGuard<T>) -> HalfspaceGuard<T> {
        let theta: Vec<T> = g.theta.iter().zip(&self.scale).map(|(&p, &s)| p * s).collect();
        let shift = dot(&theta, &self.center);
        HalfspaceGuard {
            theta,
            theta0: g.theta0 - shift,
        }
    }
}

/// [`perceptron_learn`] on features normalized to `[-1, 1]`, mapped back.
pub fn perceptron_learn_normalized<T: Scalar>(
    sample: &LabeledSample<T>,
    max_passes: usize,
) -> Result<Learned<T>> {
    sample.check()?;
    let norm = Normalizer::fit(&sample.points);
    let scaled = LabeledSample {
        points: sample.points.iter().map(|p| norm.apply(p)).collect(),
        labels: sample.labels.clone(),
    };
    let learned = perceptron_learn(&scaled, max_passes)?;
    Ok(Learned {
        guard: norm.unmap(&learned.guard),
        updates: learned.updates,
    })
}

/// Sampling box of each optimisation coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleBounds {
    pub dwell: (f64, f64),
    pub tail: (f64, f64),
    pub period: (f64, f64),
}

impl ScheduleBounds {
    pub fn for_dim<T: Scalar>(&self, dim: usize) -> Vec<(T, T)> {
        let lit = |(a, b): (f64, f64)| (T::lit(a), T::lit(b));
        let mut b = vec![lit(self.dwell); dim.saturating_sub(2)];
        b.push(lit(self.tail));
        b.push(lit(self.period));
        b
    }
}

/// Everything [`synthesize_logic`] needs besides the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub objective: ObjectiveConfig,
    pub simplex: SimplexConfig,
    /// Evaluation and iteration budget per optimisation coordinate.
    pub evals_per_dim: usize,
    /// Candidate draws screened for feasible restart points.
    pub start_draws: usize,
    pub bounds: ScheduleBounds,
    pub epsilon: f64,
    pub delta: f64,
    pub max_init_states: usize,
    pub negatives_window: f64,
    pub negatives_count: usize,
    pub perceptron_passes: usize,
    pub seed: u64,
}

impl SynthesisConfig {
    pub fn from_settings(s: &SynthesisSettings, seed: u64) -> Self {
        SynthesisConfig {
            objective: ObjectiveConfig {
                distance_weight: s.distance_weight,
                sentinel: s.sentinel,
                switches: s.switches,
                zero_dwell: s.zero_dwell,
                integrator: IntegratorConfig::with_step(s.step),
                max_horizon: s.max_horizon,
                snap_equalities: s.snap_equalities,
                min_period: s.min_period,
                min_cycle_switches: s.min_cycle_switches,
            },
            simplex: SimplexConfig {
                restarts: s.restarts,
                polish: s.polish,
                f_tol: s.f_tol,
                x_tol: s.x_tol,
                rng_seed: seed,
                ..SimplexConfig::default()
            },
            evals_per_dim: s.max_fn_evals_per_dim,
            start_draws: s.start_draws,
            bounds: ScheduleBounds {
                dwell: (s.dwell_bounds[0], s.dwell_bounds[1]),
                tail: (s.tail_bounds[0], s.tail_bounds[1]),
                period: (s.period_bounds[0], s.period_bounds[1]),
            },
            epsilon: s.epsilon,
            delta: s.delta,
            max_init_states: s.max_init_states,
            negatives_window: s.negatives_window,
            negatives_count: s.negatives_count,
            perceptron_passes: s.perceptron_passes,
            seed,
        }
    }
}

/// Optimum found for one initial state.
#[derive(Debug, Clone)]
pub struct InitialOptimum<T> {
    pub init: HybridState<T>,
    pub point: Vec<T>,
    pub value: T,
    pub converged: bool,
    pub evals: usize,
    pub sentinel: T,
    pub summary: SwitchingSummary<T>,
}

/// Minimizes `F ∘ NZ` from one initial state and extracts its switching states.
///
/// Restart points are screened so that each starts at a feasible schedule
/// when one is found among `start_draws` uniform draws.
/// When every feasible start scores at or above the sentinel, the sentinel
/// is raised to ten times the best feasible start value so that feasible
/// schedules stay distinguishable.
pub fn optimize_initial_state<T: Scalar>(
    sys: &MultimodalSystem<T>,
    metric: &PerformanceMetric<T>,
    init: &HybridState<T>,
    cfg: &SynthesisConfig,
    seed: u64,
) -> Result<InitialOptimum<T>> {
    let mut obj = Objective::new(sys, metric, init.clone(), cfg.objective.clone());
    let bounds = cfg.bounds.for_dim::<T>(obj.dim());
    let budget = cfg.evals_per_dim * obj.dim();
    let simplex = SimplexConfig {
        rng_seed: seed,
        max_fn_evals: cfg.simplex.max_fn_evals.or(Some(budget)),
        max_iters: cfg.simplex.max_iters.or(Some(budget)),
        ..cfg.simplex.clone()
    };
    let starts = sample_starts_where(&bounds, &simplex, cfg.start_draws, |v| {
        obj.evaluate_detailed(&obj.decode(v)).is_ok()
    });
    let feasible_min = starts
        .iter()
        .filter_map(|v| obj.evaluate_detailed(&obj.decode(v)).ok())
        .map(|e| e.value)
        .fold(None, |m: Option<T>, v| Some(m.map_or(v, |m| m.min(v))));
    if let Some(best) = feasible_min {
        if best >= obj.sentinel() {
            obj.cfg.sentinel = 10.0 * best.to_f64_lossy();
        }
    }
    let simplex = SimplexConfig {
        infeasible_value: Some(obj.cfg.sentinel),
        ..simplex
    };
    let f = |v: &[T]| obj.evaluate_vector(v);
    let result = minimize_from_starts(&f, &starts, &simplex);
    if result.best_value >= obj.sentinel() {
        return Err(Error::OptimizationFailed(format!(
            "no feasible schedule found from {:?} in mode {}",
            init.state.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(),
            sys.modes[init.mode]
        )));
    }
    let summary = extract_switching_states(&obj, &obj.decode(&result.best_point))?;
    Ok(InitialOptimum {
        init: init.clone(),
        point: result.best_point,
        value: result.best_value,
        converged: result.converged,
        evals: result.evals,
        sentinel: obj.sentinel(),
        summary,
    })
}

/// Initial states used for synthesis: `pac_size` uniform draws, or the
/// whole set when it is finite and smaller; then at most `cap` of them
/// chosen uniformly without replacement.
pub fn sample_initial_states<T: Scalar>(
    sys: &MultimodalSystem<T>,
    pac_size: usize,
    cap: usize,
    seed: u64,
) -> Result<Vec<HybridState<T>>> {
    if sys.initial_set.is_empty() {
        return Err(Error::Validation("initial set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = match sys.initial_set.enumerate() {
        Some(all) if all.len() <= pac_size => all,
        _ => (0..pac_size)
            .map(|_| sys.initial_set.sample(&mut rng).expect("nonempty initial set"))
            .collect(),
    };
    if states.is_empty() {
        return Err(Error::Validation("initial set is empty".into()));
    }
    if states.len() > cap.max(1) {
        let mut picks = index::sample(&mut rng, states.len(), cap.max(1)).into_vec();
        picks.sort_unstable();
        states = picks.into_iter().map(|i| states[i].clone()).collect();
    }
    Ok(states)
}

/// Per-initial-state line of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitReport {
    pub index: usize,
    pub mode: String,
    pub state: Vec<f64>,
    pub value: Option<f64>,
    pub cost: Option<f64>,
    pub residual_distance: Option<f64>,
    pub point: Vec<f64>,
    pub modes: Vec<String>,
    pub times: Vec<f64>,
    pub repeat_start: Option<f64>,
    pub repeat_end: Option<f64>,
    pub cycle: Vec<String>,
    pub converged: bool,
    pub evals: usize,
    pub error: Option<String>,
}

/// One learned halfspace, restricted to an environment partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardReport {
    pub from: String,
    pub to: String,
    /// Environment variable values this guard applies to.
    pub condition: BTreeMap<String, f64>,
    /// Coefficients over all variables (zero outside the features).
    pub theta: Vec<f64>,
    pub theta0: f64,
    pub inequality: String,
    /// Single-variable guards: `(variable, relation, threshold)`.
    pub threshold: Option<(String, Relation, f64)>,
    pub positives: usize,
    pub negatives: usize,
    pub training_error: usize,
    pub updates: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub system: String,
    pub seed: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub feature_dim: usize,
    pub pac_sample_size: usize,
    pub initial_states: usize,
    /// Number of emitted guards times epsilon.
    pub failure_probability: f64,
    pub statement: String,
    pub guards: Vec<GuardReport>,
    pub inits: Vec<InitReport>,
}

impl SynthesisReport {
    pub fn learned(&self) -> impl Iterator<Item = &GuardReport> {
        self.guards.iter().filter(|g| g.error.is_none())
    }

    /// Rebuilds the switching logic of the learned guards over `sys`.
    pub fn to_logic<T: Scalar>(&self, sys: &MultimodalSystem<T>) -> Result<SwitchingLogic<T>> {
        let n = sys.dim();
        let mode = |name: &str| {
            sys.mode_index(name)
                .ok_or_else(|| Error::Validation(format!("guard refers to unknown mode `{name}`")))
        };
        let mut logic = SwitchingLogic::empty(sys.num_modes());
        for g in self.learned() {
            if g.theta.len() != n {
                return Err(Error::Validation(format!(
                    "guard {} -> {} has {} coefficients for {n} variables",
                    g.from,
                    g.to,
                    g.theta.len()
                )));
            }
            let (from, to) = (mode(&g.from)?, mode(&g.to)?);
            let mut values = Vec::new();
            for (name, &v) in &g.condition {
                let j = sys.variable_index(name).ok_or_else(|| {
                    Error::Validation(format!("guard refers to unknown variable `{name}`"))
                })?;
                values.push((j, T::lit(v)));
            }
            let halfspace = LinearConstraint::new(
                g.theta.iter().map(|&c| T::lit(c)).collect(),
                T::lit(g.theta0),
                Relation::Ge,
            );
            logic.add(from, to, guard_region(sys, from, to, halfspace, &values));
        }
        Ok(logic)
    }

    /// The learned guard for a pair and environment value, if any.
    pub fn find(&self, from: &str, to: &str, condition: &[(&str, f64)]) -> Option<&GuardReport> {
        self.learned().find(|g| {
            g.from == from
                && g.to == to
                && condition.iter().all(|(k, v)| g.condition.get(*k) == Some(v))
        })
    }
}

pub struct SynthesisOutput<T> {
    pub logic: SwitchingLogic<T>,
    pub report: SynthesisReport,
    pub optima: Vec<Result<InitialOptimum<T>>>,
}

type PartitionKey = (usize, usize, Vec<u64>);

/// Builds switching logic from sampled initial states.
pub fn synthesize_logic<T: Scalar>(
    name: &str,
    sys: &MultimodalSystem<T>,
    metric: &PerformanceMetric<T>,
    cfg: &SynthesisConfig,
) -> Result<SynthesisOutput<T>> {
    let features = sys.feature_indices();
    let env = sys.environment_indices();
    let pac = PacConfig {
        epsilon: cfg.epsilon,
        delta: cfg.delta,
        n: features.len(),
    };
    let pac_size = pac_sample_size(&pac)?;
    let inits = sample_initial_states(sys, pac_size, cfg.max_init_states, cfg.seed)?;
    log::info!("{name}: optimizing from {} initial states", inits.len());

    let optima: Vec<Result<InitialOptimum<T>>> = inits
        .par_iter()
        .enumerate()
        .map(|(i, init)| {
            let seed = cfg.seed.wrapping_add(i as u64);
            optimize_initial_state(sys, metric, init, cfg, seed)
        })
        .collect();
    if optima.iter().all(|o| o.is_err()) {
        let why = optima
            .iter()
            .find_map(|o| o.as_ref().err().map(|e| e.to_string()))
            .unwrap_or_default();
        return Err(Error::OptimizationFailed(format!("every initial state failed: {why}")));
    }

    let mut samples: BTreeMap<PartitionKey, LabeledSample<T>> = BTreeMap::new();
    for opt in optima.iter().flatten() {
        let key_env: Vec<u64> = env
            .iter()
            .map(|&j| opt.init.state[j].to_f64_lossy().to_bits())
            .collect();
        label_switches(&opt.summary, &features, cfg, |from, to, x, label| {
            samples
                .entry((from, to, key_env.clone()))
                .or_default()
                .push(x, label);
        });
    }

    let names = sys.variable_names();
    let n = sys.dim();
    let learned: Vec<(PartitionKey, Result<Learned<T>>)> = samples
        .par_iter()
        .map(|(key, sample)| (key.clone(), perceptron_learn_normalized(sample, cfg.perceptron_passes)))
        .collect();

    let mut logic = SwitchingLogic::empty(sys.num_modes());
    let mut guards = Vec::new();
    for ((key, result), sample) in learned.into_iter().zip(samples.values()) {
        let (from, to, env_bits) = key;
        let condition: BTreeMap<String, f64> = env
            .iter()
            .zip(&env_bits)
            .map(|(&j, &b)| (names[j].clone(), f64::from_bits(b)))
            .collect();
        let mut report = GuardReport {
            from: sys.modes[from].clone(),
            to: sys.modes[to].clone(),
            condition: condition.clone(),
            theta: vec![0.0; n],
            theta0: 0.0,
            inequality: String::new(),
            threshold: None,
            positives: sample.count(Label::Positive),
            negatives: sample.count(Label::Negative),
            training_error: 0,
            updates: 0,
            error: None,
        };
        match result {
            Ok(l) => {
                let c = l.guard.constraint(n, &features);
                let values: Vec<(usize, T)> = env
                    .iter()
                    .zip(&env_bits)
                    .map(|(&j, &b)| (j, T::lit(f64::from_bits(b))))
                    .collect();
                let region = guard_region(sys, from, to, c.clone(), &values);
                report.theta = c.coeffs.iter().map(|v| v.to_f64_lossy()).collect();
                report.theta0 = c.offset.to_f64_lossy();
                report.inequality = region.render(&names);
                report.threshold = l.guard.threshold().map(|(i, rel, v)| {
                    (names[features[i]].clone(), rel, v.to_f64_lossy())
                });
                report.training_error = l.guard.misclassified(sample);
                report.updates = l.updates;
                logic.add(from, to, region);
            }
            Err(e) => {
                if let Error::NonSeparable { misclassified, updates } = e {
                    report.training_error = misclassified;
                    report.updates = updates;
                }
                report.error = Some(e.to_string());
            }
        }
        guards.push(report);
    }

    let emitted = guards.iter().filter(|g| g.error.is_none()).count();
    let failure_probability = emitted as f64 * cfg.epsilon;
    let statement = format!(
        "with probability at least {:.4} each of the {emitted} guards mislabels at most a {} fraction of states; the logic is suboptimal with probability at most {:.4}{}",
        1.0 - cfg.delta,
        cfg.epsilon,
        failure_probability.min(1.0),
        if inits_cover(pac_size, inits.len(), sys) {
            ""
        } else {
            " (fewer initial states than the sample bound were used, so this bound is nominal)"
        }
    );
    let inits_report = inits
        .iter()
        .zip(&optima)
        .enumerate()
        .map(|(i, (init, opt))| init_report(sys, i, init, opt))
        .collect();
    Ok(SynthesisOutput {
        logic,
        report: SynthesisReport {
            system: name.to_string(),
            seed: cfg.seed,
            epsilon: cfg.epsilon,
            delta: cfg.delta,
            feature_dim: features.len(),
            pac_sample_size: pac_size,
            initial_states: inits.len(),
            failure_probability,
            statement,
            guards,
            inits: inits_report,
        },
        optima,
    })
}

/// `halfspace ∧ (env_j == v_j) ∧ g^over(from, to)`.
fn guard_region<T: Scalar>(
    sys: &MultimodalSystem<T>,
    from: usize,
    to: usize,
    halfspace: LinearConstraint<T>,
    env_values: &[(usize, T)],
) -> Region<T> {
    let n = sys.dim();
    let mut cons = vec![halfspace];
    for &(j, v) in env_values {
        cons.push(LinearConstraint::bound(n, j, Relation::Eq, v));
    }
    Region::Conj(cons).intersect(sys.over(from, to))
}

fn inits_cover<T: Scalar>(pac_size: usize, used: usize, sys: &MultimodalSystem<T>) -> bool {
    used >= pac_size || sys.initial_set.enumerate().is_some_and(|all| all.len() == used)
}

/// Positives: switch states inside the repetition window. Negatives:
/// `negatives_count` states evenly spaced over the last
/// `negatives_window` fraction of the dwell before each such switch.
pub fn label_switches<T: Scalar>(
    summary: &SwitchingSummary<T>,
    features: &[usize],
    cfg: &SynthesisConfig,
    mut emit: impl FnMut(usize, usize, Vec<T>, Label),
) {
    let pick = |x: &[T]| features.iter().map(|&j| x[j]).collect::<Vec<T>>();
    let traj = &summary.trajectory;
    for (k, s) in summary.switches.iter().enumerate() {
        if s.time < summary.repeat_start || s.time > summary.repeat_end {
            continue;
        }
        emit(s.from, s.to, pick(&s.state), Label::Positive);
        let entered = if k == 0 {
            T::zero()
        } else {
            summary.switches[k - 1].time
        };
        let window = (s.time - entered) * T::lit(cfg.negatives_window);
        let count = cfg.negatives_count;
        for j in 1..=count {
            let t = s.time - window * T::from_usize(j).unwrap() / T::from_usize(count).unwrap();
            if t <= entered {
                continue;
            }
            let h = traj.hybrid_state_at(t);
            if h.mode == s.from {
                emit(s.from, s.to, pick(&h.state), Label::Negative);
            }
        }
    }
}

fn init_report<T: Scalar>(
    sys: &MultimodalSystem<T>,
    index: usize,
    init: &HybridState<T>,
    opt: &Result<InitialOptimum<T>>,
) -> InitReport {
    let f = |v: T| v.to_f64_lossy();
    let base = InitReport {
        index,
        mode: sys.modes[init.mode].clone(),
        state: init.state.iter().map(|&v| f(v)).collect(),
        value: None,
        cost: None,
        residual_distance: None,
        point: Vec::new(),
        modes: Vec::new(),
        times: Vec::new(),
        repeat_start: None,
        repeat_end: None,
        cycle: Vec::new(),
        converged: false,
        evals: 0,
        error: None,
    };
    match opt {
        Ok(o) => InitReport {
            value: Some(f(o.value)),
            cost: Some(f(o.summary.cost)),
            residual_distance: Some(f(o.summary.residual_distance)),
            point: o.point.iter().map(|&v| f(v)).collect(),
            modes: o.summary.modes.iter().map(|&m| sys.modes[m].clone()).collect(),
            times: o.summary.times.iter().map(|&v| f(v)).collect(),
            repeat_start: Some(f(o.summary.repeat_start)),
            repeat_end: Some(f(o.summary.repeat_end)),
            cycle: o.summary.cycle_modes.iter().map(|&m| sys.modes[m].clone()).collect(),
            converged: o.converged,
            evals: o.evals,
            ..base
        },
        Err(e) => InitReport {
            error: Some(e.to_string()),
            ..base
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(points: &[(f64, Label)]) -> LabeledSample<f64> {
        let mut s = LabeledSample::new();
        for &(x, l) in points {
            s.push(vec![x], l);
        }
        s
    }

    #[test]
    fn pac_examples() {
        let cfg = PacConfig { epsilon: 0.1, delta: 0.05, n: 2 };
        assert_eq!(pac_sample_size(&cfg).unwrap(), 1686);
        let cfg = PacConfig { epsilon: 0.5, delta: 0.5, n: 0 };
        assert_eq!(pac_sample_size(&cfg).unwrap(), 76);
        assert!(pac_sample_size(&PacConfig { epsilon: 1.0, delta: 0.5, n: 1 }).is_err());
        let a = pac_sample_size(&PacConfig { epsilon: 0.2, delta: 0.1, n: 3 }).unwrap();
        let b = pac_sample_size(&PacConfig { epsilon: 0.1, delta: 0.1, n: 3 }).unwrap();
        assert!(b >= 2 * a);
    }

    #[test]
    fn separable_pair() {
        let s = sample(&[(1.0, Label::Positive), (-1.0, Label::Negative)]);
        let l = perceptron_learn(&s, 10).unwrap();
        assert_eq!(l.guard.misclassified(&s), 0);
    }

    #[test]
    fn one_sided_rejected() {
        let s = sample(&[(1.0, Label::Positive)]);
        assert!(matches!(perceptron_learn(&s, 10), Err(Error::OneSidedSample(_))));
    }

    #[test]
    fn xor_not_separable() {
        let mut s = LabeledSample::new();
        s.push(vec![0.0, 0.0], Label::Negative);
        s.push(vec![1.0, 1.0], Label::Negative);
        s.push(vec![1.0, 0.0], Label::Positive);
        s.push(vec![0.0, 1.0], Label::Positive);
        match perceptron_learn(&s, 100) {
            Err(Error::NonSeparable { misclassified, updates }) => {
                assert!(misclassified > 0);
                assert_eq!(updates, 400);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn threshold_recovered_after_normalization() {
        // heat-to-off style data: positives near 20.2, negatives below
        let mut pts = vec![(20.2, Label::Positive), (20.21, Label::Positive)];
        for j in 1..=10 {
            pts.push((20.2 - 0.03 * j as f64, Label::Negative));
        }
        let s = sample(&pts);
        let l = perceptron_learn_normalized(&s, 1000).unwrap();
        assert_eq!(l.guard.misclassified(&s), 0);
        let (_, rel, thr) = l.guard.threshold().unwrap();
        assert_eq!(rel, Relation::Ge);
        assert!(thr > 20.17 && thr <= 20.2, "{thr}");
    }

    #[test]
    fn normalizer_roundtrip() {
        let pts = vec![vec![1.0, 100.0], vec![3.0, 300.0]];
        let n = Normalizer::fit(&pts);
        assert_eq!(n.apply(&pts[0]), vec![-1.0, -1.0]);
        let g = HalfspaceGuard { theta: vec![0.5f64, -2.0], theta0: 0.25 };
        let raw = n.unmap(&g);
        for p in [vec![1.5, 170.0], vec![2.9, 120.0]] {
            let a = g.score(&n.apply(&p));
            let b = raw.score(&p);
            assert!((a - b).abs() < 1e-12);
        }
    }
}
