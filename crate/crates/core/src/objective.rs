//! Scalar objective over dwell schedules: segment cost of the repetitive
//! window plus a weighted recurrence distance, with zero-dwell elimination.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HybridState, MultimodalSystem, PerformanceMetric, Relation};
use crate::scalar::Scalar;
use crate::simulator::{
    cost_from_accumulators, segment_cost, simulate_scheduled, ExtendedTrajectory,
    IntegratorConfig, Stepper, SwitchEvent,
};

/// Candidate switching times with the repetition window `[repeat_start, repeat_end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwellSchedule<T> {
    pub raw_times: Vec<T>,
    pub repeat_start: T,
    pub repeat_end: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ObjectiveConfig {
    /// Weight of the recurrence distance.
    pub distance_weight: f64,
    /// Finite stand-in for an infinite objective value.
    pub sentinel: f64,
    /// Repetition bound `k` of the base mode sequence.
    pub switches: usize,
    /// Dwells shorter than this are removed by [`nz_reduce`].
    pub zero_dwell: f64,
    pub integrator: IntegratorConfig,
    /// Schedules ending after this time are rejected.
    pub max_horizon: f64,
    /// End a dwell at the first crossing of an equality over-approximation.
    pub snap_equalities: bool,
    /// Lower bound on the repetition length `repeat_end - repeat_start`.
    pub min_period: f64,
    /// Schedules with fewer switches inside the repetition window are infeasible.
    pub min_cycle_switches: usize,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            distance_weight: 1000.0,
            sentinel: 2000.0,
            switches: 2,
            zero_dwell: 1e-4,
            integrator: IntegratorConfig::default(),
            max_horizon: 100.0,
            snap_equalities: true,
            min_period: 0.0,
            min_cycle_switches: 0,
        }
    }
}

/// `q (q_2 .. q_N q)^k` where `q` is `start` and the others follow in index order.
pub fn supersequence(num_modes: usize, start: usize, k: usize) -> Vec<usize> {
    let others: Vec<usize> = (0..num_modes).filter(|&q| q != start).collect();
    let mut seq = vec![start];
    if others.is_empty() {
        return seq;
    }
    for _ in 0..k {
        seq.extend(&others);
        seq.push(start);
    }
    seq
}

/// Squared Euclidean distance between states in the same mode, `sentinel`
/// otherwise. Coordinates with a period are compared modulo the period.
pub fn hybrid_distance<T: Scalar>(
    a: &HybridState<T>,
    b: &HybridState<T>,
    periods: &[Option<T>],
    sentinel: T,
) -> T {
    if a.mode != b.mode || a.state.len() != b.state.len() {
        return sentinel;
    }
    let mut sum = T::zero();
    for (i, (&x, &y)) in a.state.iter().zip(&b.state).enumerate() {
        let mut d = x - y;
        if let Some(Some(p)) = periods.get(i) {
            d = d - (d / *p).round() * *p;
        }
        sum = sum + d * d;
    }
    sum
}

/// Schedule after zero-dwell elimination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedSchedule<T> {
    pub modes: Vec<usize>,
    pub times: Vec<T>,
    pub repeat_start: T,
    pub repeat_end: T,
}

/// Drops every mode whose dwell is below `eps`, merging the switch times
/// around it and fusing equal neighbours. The final dwell runs to `repeat_end`.
pub fn nz_reduce<T: Scalar>(
    base_seq: &[usize],
    sched: &DwellSchedule<T>,
    eps: T,
) -> Result<ReducedSchedule<T>> {
    if base_seq.len() != sched.raw_times.len() + 1 {
        return Err(Error::InvalidArgument(format!(
            "{} modes need {} switch times, got {}",
            base_seq.len(),
            base_seq.len().saturating_sub(1),
            sched.raw_times.len()
        )));
    }
    let end = sched.repeat_end;
    // kept intervals; a dropped interval is absorbed by the next kept mode
    let mut kept_ends: Vec<T> = Vec::new();
    let mut kept_modes: Vec<usize> = Vec::new();
    let mut start = T::zero();
    for (j, &mode) in base_seq.iter().enumerate() {
        let stop = sched.raw_times.get(j).copied().unwrap_or(end).min(end);
        if stop - start >= eps {
            if kept_modes.last() == Some(&mode) {
                *kept_ends.last_mut().unwrap() = stop;
            } else {
                kept_modes.push(mode);
                kept_ends.push(stop);
            }
        }
        start = stop.max(start);
    }
    if kept_modes.is_empty() {
        return Err(Error::DegenerateSchedule(
            "every dwell is below the zero-dwell threshold".into(),
        ));
    }
    let times: Vec<T> = kept_ends[..kept_ends.len() - 1].to_vec();
    Ok(ReducedSchedule {
        modes: kept_modes,
        times,
        repeat_start: sched.repeat_start,
        repeat_end: sched.repeat_end,
    })
}

/// Why a schedule maps to the sentinel.
#[derive(Debug, Clone, PartialEq)]
pub enum Infeasible {
    Ordering,
    Horizon,
    OutsideOverApprox { from: usize, to: usize, time: f64 },
    ModeMismatch,
    TooFewCycleSwitches,
    Degenerate(Error),
    Simulation(Error),
    NonFinite,
}

/// Recorded outcome of one schedule evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub value: T,
    pub cost: T,
    pub distance: T,
    pub reduced: ReducedSchedule<T>,
    /// Switch times after equality snapping.
    pub effective_times: Vec<T>,
    pub repeat_start: T,
    pub repeat_end: T,
    pub switch_states: Vec<SwitchEvent<T>>,
}

/// The objective `F ∘ NZ` for one system, metric and initial state.
///
/// Optimisation points are dwell increments
/// `(Δ_1 .. Δ_n, Δ_tail, L)`: `t_i = Σ_{j≤i} Δ_j`, `repeat_end = t_n + Δ_tail`,
/// `repeat_start = repeat_end - max(L, min_period)`. Negative coordinates
/// are clamped to 0.
#[derive(Clone)]
pub struct Objective<'a, T> {
    pub sys: &'a MultimodalSystem<T>,
    pub metric: &'a PerformanceMetric<T>,
    pub init: HybridState<T>,
    pub base_seq: Vec<usize>,
    pub cfg: ObjectiveConfig,
    periods: Vec<Option<T>>,
}

impl<'a, T: Scalar> Objective<'a, T> {
    pub fn new(
        sys: &'a MultimodalSystem<T>,
        metric: &'a PerformanceMetric<T>,
        init: HybridState<T>,
        cfg: ObjectiveConfig,
    ) -> Self {
        let base_seq = supersequence(sys.num_modes(), init.mode, cfg.switches);
        Self::with_sequence(sys, metric, init, base_seq, cfg)
    }

    pub fn with_sequence(
        sys: &'a MultimodalSystem<T>,
        metric: &'a PerformanceMetric<T>,
        init: HybridState<T>,
        base_seq: Vec<usize>,
        cfg: ObjectiveConfig,
    ) -> Self {
        Objective {
            periods: sys.periods(),
            sys,
            metric,
            init,
            base_seq,
            cfg,
        }
    }

    pub fn sentinel(&self) -> T {
        T::lit(self.cfg.sentinel)
    }

    /// Dimension of the optimisation vector.
    pub fn dim(&self) -> usize {
        self.base_seq.len() + 1
    }

    pub fn decode(&self, v: &[T]) -> DwellSchedule<T> {
        let n = self.base_seq.len() - 1;
        let mut t = T::zero();
        let mut raw_times = Vec::with_capacity(n);
        for &d in &v[..n] {
            t = t + d.max(T::zero());
            raw_times.push(t);
        }
        let repeat_end = t + v[n].max(T::zero());
        let repeat_start = repeat_end - v[n + 1].max(T::lit(self.cfg.min_period));
        DwellSchedule {
            raw_times,
            repeat_start,
            repeat_end,
        }
    }

    pub fn encode(&self, s: &DwellSchedule<T>) -> Vec<T> {
        let mut v = Vec::with_capacity(self.dim());
        let mut prev = T::zero();
        for &t in &s.raw_times {
            v.push(t - prev);
            prev = t;
        }
        v.push(s.repeat_end - prev);
        v.push(s.repeat_end - s.repeat_start);
        v
    }

    /// `F(NZ(v))` for a point of the optimisation space.
    pub fn evaluate_vector(&self, v: &[T]) -> T {
        self.evaluate(&self.decode(v))
    }

    /// `F(NZ(sched))`; every failure maps to the sentinel.
    pub fn evaluate(&self, sched: &DwellSchedule<T>) -> T {
        match self.evaluate_detailed(sched) {
            Ok(e) => e.value,
            Err(_) => self.sentinel(),
        }
    }

    fn ordered(&self, sched: &DwellSchedule<T>) -> bool {
        let z = T::zero();
        let finite = sched.raw_times.iter().all(|t| t.is_finite())
            && sched.repeat_start.is_finite()
            && sched.repeat_end.is_finite();
        finite
            && sched.raw_times.first().is_none_or(|&t| t >= z)
            && sched.raw_times.windows(2).all(|w| w[0] <= w[1])
            && sched.raw_times.last().is_none_or(|&t| t <= sched.repeat_end)
            && sched.repeat_start >= z
            && sched.repeat_start < sched.repeat_end
    }

    /// Full evaluation with the reason for infeasibility.
    pub fn evaluate_detailed(
        &self,
        sched: &DwellSchedule<T>,
    ) -> std::result::Result<Evaluation<T>, Infeasible> {
        if !self.ordered(sched) {
            return Err(Infeasible::Ordering);
        }
        if sched.repeat_end > T::lit(self.cfg.max_horizon) {
            return Err(Infeasible::Horizon);
        }
        let reduced = nz_reduce(&self.base_seq, sched, T::lit(self.cfg.zero_dwell))
            .map_err(Infeasible::Degenerate)?;
        let (modes, times) = self.with_initial_mode(&reduced);
        let snap_needed = self.cfg.snap_equalities
            && modes
                .windows(2)
                .any(|w| self.sys.over(w[0], w[1]).has_equality());
        let length = sched.repeat_end - sched.repeat_start;
        let mut run = self
            .run_lean(&modes, &times, sched.repeat_start, sched.repeat_end, snap_needed)
            .map_err(Infeasible::Simulation)?;
        if run.shifted {
            let end = run.end;
            let start = end - length;
            if start < T::zero() {
                return Err(Infeasible::Ordering);
            }
            if end > T::lit(self.cfg.max_horizon) {
                return Err(Infeasible::Horizon);
            }
            let eff = run.times.clone();
            run = self
                .run_lean(&modes, &eff, start, end, false)
                .map_err(Infeasible::Simulation)?;
        }
        for s in &run.switches {
            if !self.sys.over(s.from, s.to).contains(&s.state) {
                return Err(Infeasible::OutsideOverApprox {
                    from: s.from,
                    to: s.to,
                    time: s.time.to_f64_lossy(),
                });
            }
        }
        let (start, end) = (run.start, run.end);
        let a = HybridState::new(run.start_mode, run.start_x.clone());
        let b = HybridState::new(run.end_mode, run.end_x.clone());
        if a.mode != b.mode {
            return Err(Infeasible::ModeMismatch);
        }
        let inside = run
            .switches
            .iter()
            .filter(|s| s.time > start && s.time <= end)
            .count();
        if inside < self.cfg.min_cycle_switches {
            return Err(Infeasible::TooFewCycleSwitches);
        }
        let distance = hybrid_distance(&a, &b, &self.periods, self.sentinel());
        let report = cost_from_accumulators(&run.start_pr, &run.end_pr, start, end)
            .map_err(Infeasible::Degenerate)?;
        let value = report.segment_cost + T::lit(self.cfg.distance_weight) * distance;
        if !value.is_finite() {
            return Err(Infeasible::NonFinite);
        }
        Ok(Evaluation {
            value,
            cost: report.segment_cost,
            distance,
            reduced,
            effective_times: run.times,
            repeat_start: start,
            repeat_end: end,
            switch_states: run.switches,
        })
    }

    /// Prepends the initial mode with a switch at time 0 when NZ removed it.
    fn with_initial_mode(&self, r: &ReducedSchedule<T>) -> (Vec<usize>, Vec<T>) {
        if r.modes[0] == self.init.mode {
            (r.modes.clone(), r.times.clone())
        } else {
            let mut modes = vec![self.init.mode];
            modes.extend(&r.modes);
            let mut times = vec![T::zero()];
            times.extend(&r.times);
            (modes, times)
        }
    }

    /// Integrates the schedule without storing samples. `start` is the
    /// repetition start, `end` the horizon.
    fn run_lean(
        &self,
        modes: &[usize],
        times: &[T],
        start: T,
        end: T,
        snap: bool,
    ) -> Result<LeanRun<T>> {
        let sys = self.sys;
        let n = sys.dim();
        let mut stepper = Stepper::new(sys, self.metric, &self.cfg.integrator);
        let mut y = vec![T::zero(); stepper.width()];
        y[..n].copy_from_slice(&self.init.state);
        let mut out = LeanRun {
            times: Vec::with_capacity(times.len()),
            switches: Vec::with_capacity(times.len()),
            start,
            end,
            start_mode: modes[0],
            start_x: self.init.state.clone(),
            start_pr: vec![T::zero(); self.metric.width()],
            end_mode: modes[0],
            end_x: Vec::new(),
            end_pr: Vec::new(),
            shifted: false,
        };
        let mut shift = T::zero();
        let mut t = T::zero();
        let mut start_done = start <= T::zero();
        for (j, &mode) in modes.iter().enumerate() {
            let planned = times.get(j).map(|&s| s + shift).unwrap_or(end + shift);
            let next = modes.get(j + 1).copied();
            let mut stop = planned;
            if !start_done && !snap && start < stop {
                stepper.advance(mode, t, start, &mut y, |_, _| {})?;
                t = start;
                out.start_mode = mode;
                out.start_x = y[..n].to_vec();
                out.start_pr = y[n..].to_vec();
                start_done = true;
            }
            match next {
                Some(q) if snap && sys.over(mode, q).has_equality() => {
                    let hit = self.advance_to_crossing(&mut stepper, mode, q, t, planned, &mut y)?;
                    if hit < planned {
                        shift = shift - (planned - hit);
                        out.shifted = true;
                    }
                    stop = hit;
                }
                _ => stepper.advance(mode, t, stop, &mut y, |_, _| {})?,
            }
            t = stop;
            if let Some(q) = next {
                let x = y[..n].to_vec();
                self.metric.dynamics.update(mode, q, t, &x, &mut y[n..]);
                out.times.push(t);
                out.switches.push(SwitchEvent {
                    time: t,
                    from: mode,
                    to: q,
                    state: x,
                });
                if !start_done && !snap && start == t {
                    out.start_mode = q;
                    out.start_x = y[..n].to_vec();
                    out.start_pr = y[n..].to_vec();
                    start_done = true;
                }
            } else {
                out.end_mode = mode;
            }
        }
        out.end = t;
        out.end_x = y[..n].to_vec();
        out.end_pr = y[n..].to_vec();
        Ok(out)
    }

    /// Integrates in `mode` until `planned` or until every equality of the
    /// over-approximation of `mode -> to` is crossed, whichever is first.
    fn advance_to_crossing(
        &self,
        stepper: &mut Stepper<'_, T>,
        mode: usize,
        to: usize,
        t0: T,
        planned: T,
        y: &mut Vec<T>,
    ) -> Result<T> {
        let n = self.sys.dim();
        let eqs: Vec<_> = self
            .sys
            .over(mode, to)
            .constraints()
            .iter()
            .filter(|c| c.relation == Relation::Eq)
            .cloned()
            .collect();
        let step = T::lit(self.cfg.integrator.step);
        let event_tol = step * T::lit(1e-6);
        let crossed = |x0: &[T], x1: &[T]| {
            eqs.iter().all(|c| {
                let (a, b) = (c.value(x0), c.value(x1));
                (a < T::zero()) != (b < T::zero()) || b.abs() <= c.tol * T::lit(1e-3)
            })
        };
        let mut t = t0;
        let mut next = y.clone();
        let mut probe = y.clone();
        while t < planned {
            let remaining = planned - t;
            let h = if remaining <= step * T::lit(1.000000001) {
                remaining
            } else {
                step
            };
            stepper.rk4(mode, t, y, h, &mut next);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    last_good_time: t.to_f64_lossy(),
                });
            }
            if crossed(&y[..n], &next[..n]) {
                let (mut lo, mut hi) = (T::zero(), h);
                while hi - lo > event_tol {
                    let mid = (lo + hi) / T::lit(2.0);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    stepper.rk4(mode, t, y, mid, &mut probe);
                    if crossed(&y[..n], &probe[..n]) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                stepper.rk4(mode, t, y, hi, &mut probe);
                y.copy_from_slice(&probe);
                return Ok(t + hi);
            }
            t = if h == remaining { planned } else { t + h };
            std::mem::swap(y, &mut next);
        }
        Ok(planned)
    }
}

struct LeanRun<T> {
    times: Vec<T>,
    switches: Vec<SwitchEvent<T>>,
    start: T,
    end: T,
    start_mode: usize,
    start_x: Vec<T>,
    start_pr: Vec<T>,
    end_mode: usize,
    end_x: Vec<T>,
    end_pr: Vec<T>,
    shifted: bool,
}

/// `F(NZ(sched))` for a given base sequence.
pub fn evaluate_f<T: Scalar>(
    sys: &MultimodalSystem<T>,
    metric: &PerformanceMetric<T>,
    init: &HybridState<T>,
    base_seq: &[usize],
    sched: &DwellSchedule<T>,
    cfg: &ObjectiveConfig,
) -> T {
    Objective::with_sequence(sys, metric, init.clone(), base_seq.to_vec(), cfg.clone())
        .evaluate(sched)
}

/// Switching states of an optimal schedule and its repetitive cycle.
#[derive(Debug, Clone)]
pub struct SwitchingSummary<T> {
    /// Every switch of the reduced schedule in time order.
    pub switches: Vec<SwitchEvent<T>>,
    /// Switches inside the repetition window.
    pub cycle_switches: Vec<SwitchEvent<T>>,
    /// One representative state per mode pair and cluster (agreement within 1e-3).
    pub unique: Vec<SwitchEvent<T>>,
    /// Minimal repeating mode cycle, starting at the first mode entered in the window.
    pub cycle_modes: Vec<usize>,
    pub value: T,
    pub cost: T,
    pub residual_distance: T,
    pub repeat_start: T,
    pub repeat_end: T,
    pub modes: Vec<usize>,
    pub times: Vec<T>,
    pub trajectory: ExtendedTrajectory<T>,
}

/// Simulates an optimal schedule once and reports its switching states.
pub fn extract_switching_states<T: Scalar>(
    obj: &Objective<'_, T>,
    sched: &DwellSchedule<T>,
) -> Result<SwitchingSummary<T>> {
    let eval = obj.evaluate_detailed(sched).map_err(|why| {
        Error::InfeasibleSchedule(format!("schedule has no finite objective: {why:?}"))
    })?;
    let (modes, _) = obj.with_initial_mode(&eval.reduced);
    let times = eval.effective_times.clone();
    let (start, end) = (eval.repeat_start, eval.repeat_end);
    let traj = simulate_scheduled(
        obj.sys,
        obj.metric,
        &obj.init,
        &modes,
        &times,
        end,
        &obj.cfg.integrator,
        &[start],
    )
    .map_err(|f| f.error)?;
    let switches = traj.switches.clone();
    let cycle_switches: Vec<SwitchEvent<T>> = switches
        .iter()
        .filter(|s| s.time >= start && s.time <= end)
        .cloned()
        .collect();
    let mut unique: Vec<SwitchEvent<T>> = Vec::new();
    for s in &switches {
        let dup = unique.iter().any(|u| {
            u.from == s.from
                && u.to == s.to
                && u.state
                    .iter()
                    .zip(&s.state)
                    .all(|(a, b)| (*a - *b).abs() <= T::lit(1e-3))
        });
        if !dup {
            unique.push(s.clone());
        }
    }
    let cycle_modes = if cycle_switches.is_empty() {
        vec![traj.hybrid_state_at(start).mode]
    } else {
        let visited: Vec<usize> = cycle_switches.iter().map(|s| s.to).collect();
        minimal_cycle(&visited)
    };
    Ok(SwitchingSummary {
        switches,
        cycle_switches,
        unique,
        cycle_modes,
        value: eval.value,
        cost: eval.cost,
        residual_distance: eval.distance,
        repeat_start: start,
        repeat_end: end,
        modes,
        times,
        trajectory: traj,
    })
}

/// Shortest prefix whose repetition reproduces `seq`.
fn minimal_cycle(seq: &[usize]) -> Vec<usize> {
    for p in 1..=seq.len() {
        if (0..seq.len()).all(|i| seq[i] == seq[i % p]) {
            return seq[..p].to_vec();
        }
    }
    seq.to_vec()
}

/// Extends a schedule past `repeat_end` by repeating the switches of the
/// window `(repeat_start, repeat_end]` `repeats` more times.
/// Returns `(modes, times, horizon)`.
pub fn periodic_extension<T: Scalar>(
    modes: &[usize],
    times: &[T],
    repeat_start: T,
    repeat_end: T,
    repeats: usize,
) -> (Vec<usize>, Vec<T>, T) {
    let period = repeat_end - repeat_start;
    let cycle: Vec<(T, usize)> = times
        .iter()
        .zip(&modes[1..])
        .filter(|(t, _)| **t > repeat_start && **t <= repeat_end)
        .map(|(t, m)| (*t, *m))
        .collect();
    let mut out_modes = modes.to_vec();
    let mut out_times = times.to_vec();
    for r in 1..=repeats {
        let offset = period * T::from_usize(r).unwrap();
        for &(t, m) in &cycle {
            let when = t + offset;
            if *out_modes.last().unwrap() == m {
                continue;
            }
            out_times.push(when);
            out_modes.push(m);
        }
    }
    let horizon = repeat_end + period * T::from_usize(repeats).unwrap();
    (out_modes, out_times, horizon)
}

/// Relative agreement of segment cost over one and `periods` repetitions of
/// the window. Returns `(one_period, many_periods)`.
pub fn repetition_costs<T: Scalar>(
    obj: &Objective<'_, T>,
    summary: &SwitchingSummary<T>,
    periods: usize,
) -> Result<(T, T)> {
    let (modes, times, horizon) = periodic_extension(
        &summary.modes,
        &summary.times,
        summary.repeat_start,
        summary.repeat_end,
        periods.saturating_sub(1),
    );
    let length = summary.repeat_end - summary.repeat_start;
    let marks: Vec<T> = (0..=periods)
        .map(|k| summary.repeat_start + length * T::from_usize(k).unwrap())
        .collect();
    let traj = simulate_scheduled(
        obj.sys,
        obj.metric,
        &obj.init,
        &modes,
        &times,
        horizon,
        &obj.cfg.integrator,
        &marks,
    )
    .map_err(|f| f.error)?;
    let one = segment_cost(&traj, summary.repeat_start, summary.repeat_end)?.segment_cost;
    let many = segment_cost(&traj, summary.repeat_start, horizon)?.segment_cost;
    Ok((one, many))
}

/// Latest recurrence of a switch in `traj`: two switches between the same
/// modes whose states agree within `tol` in every coordinate (relative to
/// `1 + |x|`, clocks compared modulo their period). Returns `(earlier, later)`.
pub fn detect_period<T: Scalar>(
    traj: &ExtendedTrajectory<T>,
    periods: &[Option<T>],
    tol: T,
) -> Option<(T, T)> {
    let sw = &traj.switches;
    let close = |a: &SwitchEvent<T>, b: &SwitchEvent<T>| {
        a.from == b.from
            && a.to == b.to
            && a.state.iter().zip(&b.state).enumerate().all(|(i, (&x, &y))| {
                let mut d = x - y;
                if let Some(Some(p)) = periods.get(i) {
                    d = d - (d / *p).round() * *p;
                }
                d.abs() <= tol * (T::one() + x.abs().max(y.abs()))
            })
    };
    for j in (0..sw.len()).rev() {
        for i in (0..j).rev() {
            if sw[i].time < sw[j].time && close(&sw[i], &sw[j]) {
                return Some((sw[i].time, sw[j].time));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(times: &[f64], tp: f64, t_p: f64) -> DwellSchedule<f64> {
        DwellSchedule {
            raw_times: times.to_vec(),
            repeat_start: tp,
            repeat_end: t_p,
        }
    }

    #[test]
    fn supersequence_shape() {
        assert_eq!(supersequence(3, 0, 2), vec![0, 1, 2, 0, 1, 2, 0]);
        assert_eq!(supersequence(2, 1, 2), vec![1, 0, 1, 0, 1]);
        assert_eq!(supersequence(1, 0, 3), vec![0]);
    }

    #[test]
    fn nz_reference_example() {
        let base = [1, 2, 3, 1, 2, 3, 1];
        let r = nz_reduce(&base, &sched(&[5.0, 6.0, 6.0, 11.0, 12.0, 12.0], 6.5, 12.5), 1e-4).unwrap();
        assert_eq!(r.modes, vec![1, 2, 1, 2, 1]);
        assert_eq!(r.times, vec![5.0, 6.0, 11.0, 12.0]);
        assert_eq!((r.repeat_start, r.repeat_end), (6.5, 12.5));
    }

    #[test]
    fn nz_identity_and_degenerate() {
        let base = [0, 1, 0];
        let s = sched(&[1.0, 2.0], 0.5, 3.0);
        let r = nz_reduce(&base, &s, 1e-4).unwrap();
        assert_eq!(r.modes, vec![0, 1, 0]);
        assert_eq!(r.times, vec![1.0, 2.0]);
        assert!(matches!(
            nz_reduce(&base, &sched(&[0.0, 0.0], 0.0, 0.0), 1e-4),
            Err(Error::DegenerateSchedule(_))
        ));
    }

    #[test]
    fn nz_fuses_equal_neighbours() {
        let base = [0, 1, 2, 0, 1, 2, 0];
        let r = nz_reduce(&base, &sched(&[1.0, 1.0, 1.0, 2.0, 3.0, 3.0], 0.0, 4.0), 1e-4).unwrap();
        assert_eq!(r.modes, vec![0, 1, 0]);
        assert_eq!(r.times, vec![2.0, 3.0]);
    }

    #[test]
    fn distance_cases() {
        let a = HybridState::new(0, vec![20.02f64]);
        let b = HybridState::new(0, vec![20.2]);
        assert!((hybrid_distance(&a, &b, &[None], 2000.0) - 0.0324).abs() < 1e-12);
        assert_eq!(hybrid_distance(&a, &a, &[None], 2000.0), 0.0);
        let c = HybridState::new(1, vec![20.02]);
        assert_eq!(hybrid_distance(&a, &c, &[None], 2000.0), 2000.0);
        let p = std::f64::consts::TAU;
        let d = hybrid_distance(
            &HybridState::new(0, vec![0.1]),
            &HybridState::new(0, vec![0.1 + 3.0 * p]),
            &[Some(p)],
            2000.0,
        );
        assert!(d < 1e-20);
    }

    #[test]
    fn minimal_cycle_detection() {
        assert_eq!(minimal_cycle(&[1, 0, 1, 0]), vec![1, 0]);
        assert_eq!(minimal_cycle(&[1, 2, 0, 1, 2, 0]), vec![1, 2, 0]);
        assert_eq!(minimal_cycle(&[1, 0, 1]), vec![1, 0]);
    }

    #[test]
    fn periodic_extension_repeats_window() {
        let (m, t, h) = periodic_extension(&[0, 1, 0, 1, 0], &[1.0, 2.0, 3.0, 4.0], 2.5, 4.5, 2);
        assert_eq!(m, vec![0, 1, 0, 1, 0, 1, 0, 1, 0]);
        assert_eq!(t, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(h, 8.5);
    }
}
