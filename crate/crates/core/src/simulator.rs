//! Trajectory integration under explicit switching times or guard-triggered
//! switching, with the performance metric integrated alongside the state.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    HybridState, MultimodalSystem, PerformanceMetric, Region, Relation, SwitchingLogic,
};
use crate::scalar::{norm_sq, Scalar};

/// Fixed-step RK4 settings with an optional step-halving fallback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct IntegratorConfig {
    pub step: f64,
    /// Compare one step against two half steps and halve while they differ by more than `tolerance`.
    pub adaptive: bool,
    pub tolerance: f64,
    pub min_step: f64,
    /// Integration aborts once the state norm exceeds this.
    pub divergence_bound: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            step: 1e-3,
            adaptive: false,
            tolerance: 1e-8,
            min_step: 1e-12,
            divergence_bound: 1e9,
        }
    }
}

impl IntegratorConfig {
    pub fn with_step(step: f64) -> Self {
        IntegratorConfig {
            step,
            min_step: step * 1e-6,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent<T> {
    pub time: T,
    pub from: usize,
    pub to: usize,
    pub state: Vec<T>,
}

/// Time-ordered samples of `(t, mode, x, pr)` plus the switch events.
///
/// A switch at time `t` is stored as two samples with equal time: the
/// pre-switch one (old mode, accumulators before the update) followed by the
/// post-switch one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedTrajectory<T> {
    pub dim: usize,
    pub width: usize,
    pub times: Vec<T>,
    pub modes: Vec<usize>,
    pub states: Vec<T>,
    pub accumulators: Vec<T>,
    pub switches: Vec<SwitchEvent<T>>,
    pub warnings: Vec<String>,
}

impl<T: Scalar> ExtendedTrajectory<T> {
    fn new(dim: usize, width: usize) -> Self {
        ExtendedTrajectory {
            dim,
            width,
            times: Vec::new(),
            modes: Vec::new(),
            states: Vec::new(),
            accumulators: Vec::new(),
            switches: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn push(&mut self, t: T, mode: usize, y: &[T]) {
        self.times.push(t);
        self.modes.push(mode);
        self.states.extend_from_slice(&y[..self.dim]);
        self.accumulators.extend_from_slice(&y[self.dim..]);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> T {
        self.times.last().copied().unwrap_or_else(T::zero)
    }

    pub fn state(&self, i: usize) -> &[T] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn pr(&self, i: usize) -> &[T] {
        &self.accumulators[i * self.width..(i + 1) * self.width]
    }

    pub fn last_state(&self) -> HybridState<T> {
        let i = self.len() - 1;
        HybridState::new(self.modes[i], self.state(i).to_vec())
    }

    /// Index `i` with `times[i] <= t < times[i+1]`, taking the last of equal times.
    fn locate(&self, t: T) -> usize {
        let idx = self.times.partition_point(|&s| s <= t);
        idx.saturating_sub(1)
    }

    fn interpolate(&self, t: T, pick: impl Fn(usize) -> Vec<T>) -> Vec<T> {
        let i = self.locate(t);
        let a = pick(i);
        if self.times[i] == t || i + 1 >= self.len() {
            return a;
        }
        let b = pick(i + 1);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        a.iter().zip(&b).map(|(&p, &q)| p + (q - p) * w).collect()
    }

    /// Hybrid state at `t` (linear interpolation between samples).
    pub fn hybrid_state_at(&self, t: T) -> HybridState<T> {
        let i = self.locate(t);
        HybridState::new(self.modes[i], self.interpolate(t, |j| self.state(j).to_vec()))
    }

    /// Accumulators at `t` (linear interpolation between samples).
    pub fn pr_at(&self, t: T) -> Vec<T> {
        self.interpolate(t, |j| self.pr(j).to_vec())
    }

    /// Trajectory as CSV with header `t,mode,<variables>,<penalties>,<rewards>`.
    pub fn to_csv(&self, mode_names: &[String], var_names: &[String], acc_names: &[String]) -> String {
        let mut out = String::from("t,mode");
        for n in var_names.iter().chain(acc_names) {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for i in 0..self.len() {
            let _ = write!(
                out,
                "{},{}",
                self.times[i].to_f64_lossy(),
                mode_names.get(self.modes[i]).map(String::as_str).unwrap_or("?")
            );
            for v in self.state(i).iter().chain(self.pr(i)) {
                let _ = write!(out, ",{}", v.to_f64_lossy());
            }
            out.push('\n');
        }
        out
    }

    /// JSON document with named samples and switch events.
    pub fn to_json(
        &self,
        mode_names: &[String],
        var_names: &[String],
        acc_names: &[String],
    ) -> serde_json::Value {
        let samples: Vec<serde_json::Value> = (0..self.len())
            .map(|i| {
                serde_json::json!({
                    "t": self.times[i].to_f64_lossy(),
                    "mode": mode_names.get(self.modes[i]),
                    "state": self.state(i).iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(),
                    "pr": self.pr(i).iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(),
                })
            })
            .collect();
        let switches: Vec<serde_json::Value> = self
            .switches
            .iter()
            .map(|s| {
                serde_json::json!({
                    "t": s.time.to_f64_lossy(),
                    "from": mode_names.get(s.from),
                    "to": mode_names.get(s.to),
                    "state": s.state.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "variables": var_names,
            "accumulators": acc_names,
            "samples": samples,
            "switch_events": switches,
            "warnings": self.warnings,
        })
    }
}

/// Simulation error together with the trajectory computed before it.
#[derive(Debug, Clone)]
pub struct SimFailure<T> {
    pub error: Error,
    pub partial: ExtendedTrajectory<T>,
}

impl<T> From<SimFailure<T>> for Error {
    fn from(f: SimFailure<T>) -> Self {
        f.error
    }
}

impl<T> From<Box<SimFailure<T>>> for Error {
    fn from(f: Box<SimFailure<T>>) -> Self {
        f.error
    }
}

pub type SimResult<T> = std::result::Result<ExtendedTrajectory<T>, Box<SimFailure<T>>>;

fn fail<T>(error: Error, partial: ExtendedTrajectory<T>) -> Box<SimFailure<T>> {
    Box::new(SimFailure { error, partial })
}

/// RK4 integrator over the joint vector `[x, pr]`.
pub(crate) struct Stepper<'a, T> {
    sys: &'a MultimodalSystem<T>,
    metric: &'a PerformanceMetric<T>,
    n: usize,
    step: T,
    adaptive: bool,
    tolerance: T,
    min_step: T,
    bound_sq: T,
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
    half: Vec<T>,
    full: Vec<T>,
}

impl<'a, T: Scalar> Stepper<'a, T> {
    pub(crate) fn new(
        sys: &'a MultimodalSystem<T>,
        metric: &'a PerformanceMetric<T>,
        cfg: &IntegratorConfig,
    ) -> Self {
        let n = sys.dim();
        let m = n + metric.width();
        Stepper {
            sys,
            metric,
            n,
            step: T::lit(cfg.step),
            adaptive: cfg.adaptive,
            tolerance: T::lit(cfg.tolerance),
            min_step: T::lit(cfg.min_step),
            bound_sq: T::lit(cfg.divergence_bound) * T::lit(cfg.divergence_bound),
            k1: vec![T::zero(); m],
            k2: vec![T::zero(); m],
            k3: vec![T::zero(); m],
            k4: vec![T::zero(); m],
            tmp: vec![T::zero(); m],
            half: vec![T::zero(); m],
            full: vec![T::zero(); m],
        }
    }

    pub(crate) fn width(&self) -> usize {
        self.k1.len()
    }

    #[inline]
    fn deriv(
        sys: &MultimodalSystem<T>,
        metric: &PerformanceMetric<T>,
        n: usize,
        mode: usize,
        t: T,
        y: &[T],
        dy: &mut [T],
    ) {
        let x = &y[..n];
        let (dx, dpr) = dy.split_at_mut(n);
        sys.field.eval(mode, t, x, dx);
        metric.dynamics.flow(mode, t, x, dpr);
    }

    /// One classical RK4 step of size `h` from `y` into `out`.
    #[allow(clippy::needless_range_loop)]
    pub(crate) fn rk4(&mut self, mode: usize, t: T, y: &[T], h: T, out: &mut [T]) {
        let (sys, metric, n) = (self.sys, self.metric, self.n);
        let half_h = h / T::lit(2.0);
        Self::deriv(sys, metric, n, mode, t, y, &mut self.k1);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + half_h * self.k1[i];
        }
        Self::deriv(sys, metric, n, mode, t + half_h, &self.tmp, &mut self.k2);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + half_h * self.k2[i];
        }
        Self::deriv(sys, metric, n, mode, t + half_h, &self.tmp, &mut self.k3);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        Self::deriv(sys, metric, n, mode, t + h, &self.tmp, &mut self.k4);
        let sixth = h / T::lit(6.0);
        let two = T::lit(2.0);
        for i in 0..y.len() {
            out[i] = y[i] + sixth * (self.k1[i] + two * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
    }

    /// Advances `y` by `h` in place, halving on a large local error when adaptive.
    /// Returns the step actually taken.
    fn step_inplace(&mut self, mode: usize, t: T, y: &mut [T], h: T) -> T {
        let mut full = std::mem::take(&mut self.full);
        if !self.adaptive {
            self.rk4(mode, t, y, h, &mut full);
            y.copy_from_slice(&full);
            self.full = full;
            return h;
        }
        let mut half = std::mem::take(&mut self.half);
        let mut h = h;
        let taken = loop {
            self.rk4(mode, t, y, h, &mut full);
            let hh = h / T::lit(2.0);
            self.rk4(mode, t, y, hh, &mut half);
            let mid = half.clone();
            self.rk4(mode, t + hh, &mid, hh, &mut half);
            let err = full
                .iter()
                .zip(&half)
                .take(self.n)
                .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()));
            if err <= self.tolerance || hh < self.min_step {
                y.copy_from_slice(&half);
                break h;
            }
            h = hh;
        };
        self.full = full;
        self.half = half;
        taken
    }

    fn check(&self, t: T, y: &[T]) -> Result<()> {
        let nsq = norm_sq(&y[..self.n]);
        if !nsq.is_finite() || nsq > self.bound_sq || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                last_good_time: t.to_f64_lossy(),
            });
        }
        Ok(())
    }

    /// Integrates from `t0` to exactly `t1`, calling `on_step` after each step.
    pub(crate) fn advance(
        &mut self,
        mode: usize,
        t0: T,
        t1: T,
        y: &mut [T],
        mut on_step: impl FnMut(T, &[T]),
    ) -> Result<()> {
        let mut t = t0;
        let slack = self.step * T::lit(1e-9);
        while t < t1 {
            let remaining = t1 - t;
            let h = if remaining <= self.step + slack {
                remaining
            } else {
                self.step
            };
            let taken = self.step_inplace(mode, t, y, h);
            let t_next = if taken == remaining { t1 } else { t + taken };
            self.check(t, y)?;
            t = t_next;
            on_step(t, y);
        }
        Ok(())
    }
}

fn validate_init<T: Scalar>(sys: &MultimodalSystem<T>, init: &HybridState<T>) -> Result<()> {
    if init.mode >= sys.num_modes() {
        return Err(Error::InvalidArgument(format!(
            "initial mode {} out of range",
            init.mode
        )));
    }
    if init.state.len() != sys.dim() {
        return Err(Error::InvalidArgument(format!(
            "initial state has {} components, expected {}",
            init.state.len(),
            sys.dim()
        )));
    }
    if init.state.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("initial state is not finite".into()));
    }
    Ok(())
}

/// Simulates `mode_seq[j]` on `[switch_times[j-1], switch_times[j]]` up to `horizon`.
///
/// Samples are recorded at every integration step, at every switch and at each
/// time in `marks`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_scheduled<T: Scalar>(
    sys: &MultimodalSystem<T>,
    metric: &PerformanceMetric<T>,
    init: &HybridState<T>,
    mode_seq: &[usize],
    switch_times: &[T],
    horizon: T,
    integrator: &IntegratorConfig,
    marks: &[T],
) -> SimResult<T> {
    let mut traj = ExtendedTrajectory::new(sys.dim(), metric.width());
    let pre = (|| {
        validate_init(sys, init)?;
        if mode_seq.len() != switch_times.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} modes need {} switch times, got {}",
                mode_seq.len(),
                mode_seq.len().saturating_sub(1),
                switch_times.len()
            )));
        }
        if mode_seq.iter().any(|&m| m >= sys.num_modes()) {
            return Err(Error::InvalidArgument("mode sequence names an unknown mode".into()));
        }
        if mode_seq[0] != init.mode {
            return Err(Error::InvalidArgument(
                "mode sequence must start in the initial mode".into(),
            ));
        }
        if switch_times.iter().any(|t| !t.is_finite() || *t < T::zero())
            || switch_times.windows(2).any(|w| w[1] < w[0])
        {
            return Err(Error::InvalidArgument(
                "switch times must be finite, nonnegative and nondecreasing".into(),
            ));
        }
        if !horizon.is_finite() || switch_times.last().is_some_and(|&l| horizon < l) {
            return Err(Error::InvalidArgument(
                "horizon must cover the last switch time".into(),
            ));
        }
        Ok(())
    })();
    if let Err(e) = pre {
        return Err(fail(e, traj));
    }

    let mut stepper = Stepper::new(sys, metric, integrator);
    let n = sys.dim();
    let mut y = vec![T::zero(); stepper.width()];
    y[..n].copy_from_slice(&init.state);
    let mut t = T::zero();
    traj.push(t, init.mode, &y);

    let mut marks: Vec<T> = marks
        .iter()
        .copied()
        .filter(|m| *m > T::zero() && *m < horizon)
        .collect();
    marks.sort_by(|a, b| a.partial_cmp(b).unwrap());

    for (j, &mode) in mode_seq.iter().enumerate() {
        let end = switch_times.get(j).copied().unwrap_or(horizon);
        // stop at each interior mark so a sample exists there
        let stops: Vec<T> = marks
            .iter()
            .copied()
            .filter(|&m| m > t && m < end)
            .chain(std::iter::once(end))
            .collect();
        for stop in stops {
            let res = stepper.advance(mode, t, stop, &mut y, |ts, ys| traj.push(ts, mode, ys));
            if let Err(e) = res {
                return Err(fail(e, traj));
            }
            t = stop;
        }
        if let Some(&next) = mode_seq.get(j + 1) {
            let x = y[..n].to_vec();
            metric.dynamics.update(mode, next, t, &x, &mut y[n..]);
            traj.switches.push(SwitchEvent {
                time: t,
                from: mode,
                to: next,
                state: x,
            });
            traj.push(t, next, &y);
        }
    }
    Ok(traj)
}

/// Zeno and event-detection settings for guard-triggered simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct GuardedConfig {
    pub integrator: IntegratorConfig,
    /// Bisection stops once the event is bracketed this tightly in time.
    pub event_tol: f64,
    /// This many switches within `switch_window` time units is reported as Zeno.
    pub max_switches: usize,
    pub switch_window: f64,
}

impl Default for GuardedConfig {
    fn default() -> Self {
        GuardedConfig {
            integrator: IntegratorConfig::default(),
            event_tol: 1e-9,
            max_switches: 20,
            switch_window: 1e-2,
        }
    }
}

impl GuardedConfig {
    /// Defaults scaled to an integration step.
    pub fn with_step(step: f64) -> Self {
        GuardedConfig {
            integrator: IntegratorConfig::with_step(step),
            event_tol: (step * 1e-6).min(1e-9),
            max_switches: 20,
            switch_window: 10.0 * step,
        }
    }
}

/// Whether the guard region is entered at `x`, or (for equality constraints)
/// crossed between `x_start` and `x`.
fn fires<T: Scalar>(region: &Region<T>, x_start: &[T], x: &[T]) -> bool {
    match region {
        Region::Empty => false,
        Region::Full => true,
        Region::Conj(cs) => cs.iter().all(|c| {
            if c.contains(x) {
                return true;
            }
            if c.relation == Relation::Eq {
                let a = c.value(x_start);
                let b = c.value(x);
                return (a < T::zero()) != (b < T::zero());
            }
            false
        }),
    }
}

fn fired_targets<T: Scalar>(
    logic: &SwitchingLogic<T>,
    mode: usize,
    x_start: &[T],
    x: &[T],
) -> Vec<usize> {
    (0..logic.num_modes)
        .filter(|&q| q != mode && logic.guard(mode, q).iter().any(|r| fires(r, x_start, x)))
        .collect()
}

/// Simulates the hybrid system: a switch fires as soon as its guard holds.
pub fn simulate_guarded<T: Scalar>(
    sys: &MultimodalSystem<T>,
    metric: &PerformanceMetric<T>,
    logic: &SwitchingLogic<T>,
    init: &HybridState<T>,
    horizon: T,
    cfg: &GuardedConfig,
) -> SimResult<T> {
    let mut traj = ExtendedTrajectory::new(sys.dim(), metric.width());
    if let Err(e) = validate_init(sys, init) {
        return Err(fail(e, traj));
    }
    if logic.num_modes != sys.num_modes() {
        return Err(fail(
            Error::InvalidArgument("switching logic has the wrong number of modes".into()),
            traj,
        ));
    }
    let n = sys.dim();
    let mut stepper = Stepper::new(sys, metric, &cfg.integrator);
    let step = T::lit(cfg.integrator.step);
    let event_tol = T::lit(cfg.event_tol);
    let window = T::lit(cfg.switch_window);
    let mut y = vec![T::zero(); stepper.width()];
    y[..n].copy_from_slice(&init.state);
    let mut mode = init.mode;
    let mut t = T::zero();
    traj.push(t, mode, &y);
    let mut y_new = y.clone();
    let mut probe = y.clone();

    let switch_now = |traj: &mut ExtendedTrajectory<T>,
                          y: &mut Vec<T>,
                          mode: &mut usize,
                          t: T,
                          targets: Vec<usize>|
     -> Result<()> {
        let to = targets[0];
        if targets.len() > 1 {
            let msg = format!(
                "t = {}: guards to modes {:?} enabled simultaneously in `{}`; taking `{}`",
                t,
                targets.iter().map(|&q| &sys.modes[q]).collect::<Vec<_>>(),
                sys.modes[*mode],
                sys.modes[to]
            );
            log::warn!("{msg}");
            traj.warnings.push(msg);
        }
        let x = y[..n].to_vec();
        metric.dynamics.update(*mode, to, t, &x, &mut y[n..]);
        traj.switches.push(SwitchEvent {
            time: t,
            from: *mode,
            to,
            state: x,
        });
        *mode = to;
        traj.push(t, to, y);
        let k = traj.switches.len();
        if k >= cfg.max_switches {
            let first = traj.switches[k - cfg.max_switches].time;
            if t - first <= window {
                return Err(Error::ZenoSuspect {
                    switches: cfg.max_switches,
                    window: cfg.switch_window,
                    time: t.to_f64_lossy(),
                });
            }
        }
        Ok(())
    };

    // guards enabled on entry fire immediately
    loop {
        let targets = fired_targets(logic, mode, &y[..n], &y[..n]);
        if targets.is_empty() {
            break;
        }
        if let Err(e) = switch_now(&mut traj, &mut y, &mut mode, t, targets) {
            return Err(fail(e, traj));
        }
    }

    while t < horizon {
        let remaining = horizon - t;
        let h = if remaining <= step * T::lit(1.000000001) {
            remaining
        } else {
            step
        };
        stepper.rk4(mode, t, &y, h, &mut y_new);
        if let Err(e) = stepper.check(t, &y_new) {
            return Err(fail(e, traj));
        }
        let targets = fired_targets(logic, mode, &y[..n], &y_new[..n]);
        if targets.is_empty() {
            t = if h == remaining { horizon } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            traj.push(t, mode, &y);
            continue;
        }
        // bisection for the first firing time in (0, h]
        let (mut lo, mut hi) = (T::zero(), h);
        while hi - lo > event_tol {
            let mid = (lo + hi) / T::lit(2.0);
            if mid <= lo || mid >= hi {
                break;
            }
            stepper.rk4(mode, t, &y, mid, &mut probe);
            if fired_targets(logic, mode, &y[..n], &probe[..n]).is_empty() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        stepper.rk4(mode, t, &y, hi, &mut probe);
        let targets = fired_targets(logic, mode, &y[..n], &probe[..n]);
        t = t + hi;
        std::mem::swap(&mut y, &mut probe);
        traj.push(t, mode, &y);
        let mut targets = if targets.is_empty() {
            fired_targets(logic, mode, &y[..n], &y_new[..n])
        } else {
            targets
        };
        loop {
            if let Err(e) = switch_now(&mut traj, &mut y, &mut mode, t, targets) {
                return Err(fail(e, traj));
            }
            targets = fired_targets(logic, mode, &y[..n], &y[..n]);
            if targets.is_empty() {
                break;
            }
        }
    }
    Ok(traj)
}

/// Penalty/reward ratio over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport<T> {
    pub segment_cost: T,
    /// `(ΔP_i, ΔR_i)` per term.
    pub per_term: Vec<(T, T)>,
}

/// Rewards whose change is at most this are treated as zero.
pub const REWARD_EPS: f64 = 1e-12;

/// `Σ_i (P_i(t2) - P_i(t1)) / (R_i(t2) - R_i(t1))`.
pub fn segment_cost<T: Scalar>(traj: &ExtendedTrajectory<T>, t1: T, t2: T) -> Result<CostReport<T>> {
    if traj.is_empty() || !(t1 >= T::zero() && t1 < t2 && t2 <= traj.horizon()) {
        return Err(Error::InvalidArgument(format!(
            "cost window [{t1}, {t2}] must satisfy 0 <= t1 < t2 <= {}",
            traj.horizon()
        )));
    }
    let a = traj.pr_at(t1);
    let b = traj.pr_at(t2);
    cost_from_accumulators(&a, &b, t1, t2)
}

pub(crate) fn cost_from_accumulators<T: Scalar>(a: &[T], b: &[T], t1: T, t2: T) -> Result<CostReport<T>> {
    let k = a.len() / 2;
    let mut total = T::zero();
    let mut per_term = Vec::with_capacity(k);
    for i in 0..k {
        let dp = b[i] - a[i];
        let dr = b[k + i] - a[k + i];
        if dr.abs() <= T::lit(REWARD_EPS) {
            return Err(Error::DegenerateReward {
                term: i,
                t1: t1.to_f64_lossy(),
                t2: t2.to_f64_lossy(),
            });
        }
        total = total + dp / dr;
        per_term.push((dp, dr));
    }
    Ok(CostReport {
        segment_cost: total,
        per_term,
    })
}

/// Segment cost over the final `tail_fraction` of the horizon, a
/// finite-horizon estimate of the long-run cost.
pub fn longrun_cost_estimate<T: Scalar>(traj: &ExtendedTrajectory<T>, tail_fraction: T) -> Result<T> {
    if !(tail_fraction > T::zero() && tail_fraction <= T::one()) {
        return Err(Error::InvalidArgument(
            "tail fraction must lie in (0, 1]".into(),
        ));
    }
    let end = traj.horizon();
    let start = end * (T::one() - tail_fraction);
    Ok(segment_cost(traj, start, end)?.segment_cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InitialSet, LinearConstraint, MetricDynamics, Variable};
    use std::sync::Arc;

    struct Rates(f64, f64);
    impl MetricDynamics<f64> for Rates {
        fn flow(&self, _: usize, _: f64, _: &[f64], d: &mut [f64]) {
            d[0] = self.0;
            d[1] = self.1;
        }
        fn update(&self, _: usize, _: usize, _: f64, _: &[f64], _: &mut [f64]) {}
    }

    fn line_system(rates: Vec<f64>) -> MultimodalSystem<f64> {
        let n = rates.len();
        MultimodalSystem {
            modes: (0..n).map(|i| format!("m{i}")).collect(),
            variables: vec![Variable::state("x")],
            field: Arc::new(move |q: usize, _t: f64, _x: &[f64], dx: &mut [f64]| dx[0] = rates[q]),
            initial_set: InitialSet::Finite(vec![HybridState::new(0, vec![0.0])]),
            guard_over: (0..n * n)
                .map(|i| if i % (n + 1) == 0 { Region::Empty } else { Region::Full })
                .collect(),
            domain: vec![(-10.0, 10.0)],
        }
    }

    fn rates(p: f64, r: f64) -> PerformanceMetric<f64> {
        PerformanceMetric {
            penalties: vec!["p".into()],
            rewards: vec!["r".into()],
            dynamics: Arc::new(Rates(p, r)),
        }
    }

    #[test]
    fn zero_horizon_is_single_sample() {
        let sys = line_system(vec![1.0]);
        let init = HybridState::new(0, vec![0.5]);
        let tr = simulate_scheduled(&sys, &rates(2.0, 1.0), &init, &[0], &[], 0.0, &Default::default(), &[])
            .unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.state(0), &[0.5]);
        assert_eq!(tr.pr(0), &[0.0, 0.0]);
    }

    #[test]
    fn linear_flow_and_constant_rates() {
        let sys = line_system(vec![1.0]);
        let init = HybridState::new(0, vec![0.0]);
        let tr = simulate_scheduled(&sys, &rates(2.0, 1.0), &init, &[0], &[], 3.0, &Default::default(), &[])
            .unwrap();
        assert!((tr.last_state().state[0] - 3.0).abs() < 1e-9);
        let c = segment_cost(&tr, 0.0, 3.0).unwrap();
        assert!((c.segment_cost - 2.0).abs() < 1e-12);
        assert!((longrun_cost_estimate(&tr, 0.3).unwrap() - 2.0).abs() < 1e-9);
        assert!(matches!(
            segment_cost(&simulate_scheduled(&sys, &rates(1.0, 0.0), &init, &[0], &[], 1.0, &Default::default(), &[]).unwrap(), 0.0, 1.0),
            Err(Error::DegenerateReward { .. })
        ));
    }

    #[test]
    fn scheduled_switches_are_continuous() {
        let sys = line_system(vec![1.0, -2.0]);
        let init = HybridState::new(0, vec![0.0]);
        let tr = simulate_scheduled(
            &sys,
            &rates(1.0, 1.0),
            &init,
            &[0, 1, 0],
            &[1.0, 1.5],
            2.0,
            &Default::default(),
            &[0.25],
        )
        .unwrap();
        assert_eq!(tr.switches.len(), 2);
        assert!((tr.switches[0].state[0] - 1.0).abs() < 1e-12);
        assert!((tr.switches[1].state[0]).abs() < 1e-12);
        assert!((tr.last_state().state[0] - 0.5).abs() < 1e-12);
        assert!(tr.times.contains(&0.25));
        // the pre- and post-switch samples carry the same state
        let i = tr.times.iter().position(|&t| t == 1.0).unwrap();
        assert_eq!(tr.state(i), tr.state(i + 1));
        assert_eq!(tr.modes[i], 0);
        assert_eq!(tr.modes[i + 1], 1);
    }

    #[test]
    fn rejects_bad_schedules() {
        let sys = line_system(vec![1.0, -1.0]);
        let init = HybridState::new(0, vec![0.0]);
        let m = rates(1.0, 1.0);
        let cfg = IntegratorConfig::default();
        assert!(simulate_scheduled(&sys, &m, &init, &[0, 1], &[2.0, 1.0], 3.0, &cfg, &[]).is_err());
        assert!(simulate_scheduled(&sys, &m, &init, &[0, 1], &[2.0], 1.0, &cfg, &[]).is_err());
        assert!(simulate_scheduled(&sys, &m, &init, &[0], &[1.0], 3.0, &cfg, &[]).is_err());
    }

    #[test]
    fn divergence_carries_last_good_time() {
        let mut sys = line_system(vec![1.0]);
        sys.field = Arc::new(|_q: usize, _t: f64, x: &[f64], dx: &mut [f64]| dx[0] = x[0] * x[0]);
        let init = HybridState::new(0, vec![1.0]);
        let err = simulate_scheduled(&sys, &rates(1.0, 1.0), &init, &[0], &[], 2.0, &Default::default(), &[])
            .unwrap_err();
        match err.error {
            Error::Diverged { last_good_time } => assert!(last_good_time > 0.99 && last_good_time < 1.01, "{last_good_time}"),
            e => panic!("{e:?}"),
        }
        assert!(!err.partial.is_empty());
    }

    #[test]
    fn rk4_is_fourth_order() {
        let mut sys = line_system(vec![1.0]);
        sys.field = Arc::new(|_q: usize, _t: f64, x: &[f64], dx: &mut [f64]| dx[0] = x[0]);
        let init = HybridState::new(0, vec![1.0]);
        let max_err = |h: f64| {
            let tr = simulate_scheduled(&sys, &rates(1.0, 1.0), &init, &[0], &[], 2.0, &IntegratorConfig::with_step(h), &[])
                .unwrap();
            (0..tr.len())
                .map(|i| (tr.state(i)[0] - tr.times[i].exp()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = max_err(0.1) / max_err(0.05);
        assert!(ratio >= 8.0, "ratio {ratio}");
    }

    #[test]
    fn adaptive_step_halving_refines() {
        let mut sys = line_system(vec![1.0]);
        sys.field = Arc::new(|_q: usize, _t: f64, x: &[f64], dx: &mut [f64]| dx[0] = -50.0 * x[0]);
        let init = HybridState::new(0, vec![1.0]);
        let cfg = IntegratorConfig {
            step: 0.1,
            adaptive: true,
            tolerance: 1e-10,
            min_step: 1e-8,
            ..Default::default()
        };
        let tr = simulate_scheduled(&sys, &rates(1.0, 1.0), &init, &[0], &[], 1.0, &cfg, &[]).unwrap();
        assert!((tr.last_state().state[0] - (-50.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn guarded_bang_bang_oscillates() {
        let sys = line_system(vec![1.0, -1.0]);
        let mut logic = SwitchingLogic::empty(2);
        logic.add(0, 1, Region::Conj(vec![LinearConstraint::bound(1, 0, Relation::Ge, 2.0)]));
        logic.add(1, 0, Region::Conj(vec![LinearConstraint::bound(1, 0, Relation::Le, 1.0)]));
        let init = HybridState::new(0, vec![0.0]);
        let tr = simulate_guarded(&sys, &rates(1.0, 1.0), &logic, &init, 10.0, &GuardedConfig::default()).unwrap();
        assert!((tr.switches[0].time - 2.0).abs() < 1e-8);
        assert!((tr.switches[1].time - 3.0).abs() < 1e-8);
        for i in 0..tr.len() {
            let x = tr.state(i)[0];
            if tr.times[i] > 2.0 {
                assert!((1.0 - 1e-8..=2.0 + 1e-8).contains(&x));
            }
        }
    }

    #[test]
    fn guarded_equality_crossing_is_detected() {
        let sys = line_system(vec![-0.7, 0.0]);
        let mut logic = SwitchingLogic::empty(2);
        logic.add(
            0,
            1,
            Region::Conj(vec![LinearConstraint::bound(1, 0, Relation::Eq, 0.0).with_tol(1e-6)]),
        );
        let init = HybridState::new(0, vec![1.0]);
        let tr = simulate_guarded(&sys, &rates(1.0, 1.0), &logic, &init, 5.0, &GuardedConfig::default()).unwrap();
        assert_eq!(tr.switches.len(), 1);
        assert!(tr.switches[0].state[0].abs() < 1e-6);
        assert!((tr.last_state().state[0]).abs() < 1e-6);
    }

    #[test]
    fn no_guards_no_switches_and_zeno_detection() {
        let sys = line_system(vec![1.0, -1.0]);
        let init = HybridState::new(0, vec![0.0]);
        let tr = simulate_guarded(&sys, &rates(1.0, 1.0), &SwitchingLogic::empty(2), &init, 3.0, &GuardedConfig::default())
            .unwrap();
        assert!(tr.switches.is_empty());
        assert!(tr.modes.iter().all(|&m| m == 0));

        let mut logic = SwitchingLogic::empty(2);
        logic.add(0, 1, Region::Full);
        logic.add(1, 0, Region::Full);
        let err = simulate_guarded(&sys, &rates(1.0, 1.0), &logic, &init, 3.0, &GuardedConfig::default()).unwrap_err();
        assert!(matches!(err.error, Error::ZenoSuspect { .. }));
    }

    #[test]
    fn tie_break_takes_lowest_target_and_warns() {
        let sys = line_system(vec![1.0, 0.0, 0.0]);
        let mut logic = SwitchingLogic::empty(3);
        let g = Region::Conj(vec![LinearConstraint::bound(1, 0, Relation::Ge, 1.0)]);
        logic.add(0, 2, g.clone());
        logic.add(0, 1, g);
        let init = HybridState::new(0, vec![0.0]);
        let tr = simulate_guarded(&sys, &rates(1.0, 1.0), &logic, &init, 2.0, &GuardedConfig::default()).unwrap();
        assert_eq!(tr.switches[0].to, 1);
        assert_eq!(tr.warnings.len(), 1);
    }

    #[test]
    fn csv_layout() {
        let sys = line_system(vec![1.0]);
        let init = HybridState::new(0, vec![0.0]);
        let tr = simulate_scheduled(&sys, &rates(2.0, 1.0), &init, &[0], &[], 1.0, &IntegratorConfig::with_step(0.5), &[])
            .unwrap();
        let csv = tr.to_csv(&sys.modes, &["x".into()], &["p".into(), "r".into()]);
        assert_eq!(csv, "t,mode,x,p,r\n0,m0,0,0,0\n0.5,m0,0.5,1,0.5\n1,m0,1,2,1\n");
    }
}
