//! Multimodal systems, performance metrics, regions and switching logic.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::{dot, Scalar};

/// Right-hand side of the continuous dynamics, one vector field per mode.
pub trait VectorField<T>: Send + Sync {
    fn eval(&self, mode: usize, t: T, x: &[T], dx: &mut [T]);
}

impl<T, F> VectorField<T> for F
where
    F: Fn(usize, T, &[T], &mut [T]) + Send + Sync,
{
    fn eval(&self, mode: usize, t: T, x: &[T], dx: &mut [T]) {
        self(mode, t, x, dx)
    }
}

/// Flow and switch update of the penalty/reward accumulators.
///
/// Accumulators are laid out as `[p_1 .. p_k, r_1 .. r_k]`.
pub trait MetricDynamics<T>: Send + Sync {
    fn flow(&self, mode: usize, t: T, x: &[T], dpr: &mut [T]);
    fn update(&self, from: usize, to: usize, t: T, x: &[T], pr: &mut [T]);
}

/// Role of a continuous variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum VarKind {
    /// Ordinary state variable; used as a guard feature.
    State,
    /// Constant along a trajectory (zero derivative); guards are partitioned on its value.
    Environment,
    /// Time-like variable; excluded from guard features. With a period, the
    /// recurrence distance compares it modulo the period.
    Clock { period: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
}

impl Variable {
    pub fn state(name: &str) -> Self {
        Variable {
            name: name.to_string(),
            kind: VarKind::State,
        }
    }

    pub fn environment(name: &str) -> Self {
        Variable {
            name: name.to_string(),
            kind: VarKind::Environment,
        }
    }

    pub fn clock(name: &str, period: Option<f64>) -> Self {
        Variable {
            name: name.to_string(),
            kind: VarKind::Clock { period },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridState<T> {
    pub mode: usize,
    pub state: Vec<T>,
}

impl<T: Scalar> HybridState<T> {
    pub fn new(mode: usize, state: Vec<T>) -> Self {
        HybridState { mode, state }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Ge,
    Le,
    Eq,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Ge => ">=",
            Relation::Le => "<=",
            Relation::Eq => "==",
        }
    }
}

/// `coeffs · x + offset  (>= | <= | ==)  0`, equality holding within `tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint<T> {
    pub coeffs: Vec<T>,
    pub offset: T,
    pub relation: Relation,
    pub tol: T,
}

impl<T: Scalar> LinearConstraint<T> {
    pub fn new(coeffs: Vec<T>, offset: T, relation: Relation) -> Self {
        LinearConstraint {
            coeffs,
            offset,
            relation,
            tol: T::lit(1e-9),
        }
    }

    pub fn with_tol(mut self, tol: T) -> Self {
        self.tol = tol;
        self
    }

    /// Single-variable bound `x[var] rel value`.
    pub fn bound(dim: usize, var: usize, relation: Relation, value: T) -> Self {
        let mut coeffs = vec![T::zero(); dim];
        coeffs[var] = T::one();
        LinearConstraint::new(coeffs, -value, relation)
    }

    #[inline]
    pub fn value(&self, x: &[T]) -> T {
        dot(&self.coeffs, x) + self.offset
    }

    /// Signed margin: nonnegative exactly when satisfied.
    #[inline]
    pub fn margin(&self, x: &[T]) -> T {
        let v = self.value(x);
        match self.relation {
            Relation::Ge => v,
            Relation::Le => -v,
            Relation::Eq => self.tol - v.abs(),
        }
    }

    pub fn contains(&self, x: &[T]) -> bool {
        self.margin(x) >= T::zero()
    }

    pub fn render(&self, names: &[String]) -> String {
        let mut terms = Vec::new();
        for (c, name) in self.coeffs.iter().zip(names) {
            if *c == T::zero() {
                continue;
            }
            if *c == T::one() {
                terms.push(name.clone());
            } else if *c == -T::one() {
                terms.push(format!("-{name}"));
            } else {
                terms.push(format!("{c}*{name}"));
            }
        }
        if terms.is_empty() {
            terms.push("0".to_string());
        }
        let lhs = terms.join(" + ").replace("+ -", "- ");
        format!("{lhs} {} {}", self.relation.symbol(), -self.offset)
    }
}

/// Closed region of the state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "constraints")]
pub enum Region<T> {
    Empty,
    Full,
    /// Conjunction of linear constraints.
    Conj(Vec<LinearConstraint<T>>),
}

impl<T: Scalar> Region<T> {
    pub fn contains(&self, x: &[T]) -> bool {
        match self {
            Region::Empty => false,
            Region::Full => true,
            Region::Conj(cs) => cs.iter().all(|c| c.contains(x)),
        }
    }

    pub fn is_empty_kind(&self) -> bool {
        matches!(self, Region::Empty)
    }

    pub fn constraints(&self) -> &[LinearConstraint<T>] {
        match self {
            Region::Conj(cs) => cs,
            _ => &[],
        }
    }

    /// Intersection; `Full` is the identity and `Empty` absorbs.
    pub fn intersect(&self, other: &Region<T>) -> Region<T> {
        match (self, other) {
            (Region::Empty, _) | (_, Region::Empty) => Region::Empty,
            (Region::Full, r) | (r, Region::Full) => r.clone(),
            (Region::Conj(a), Region::Conj(b)) => {
                Region::Conj(a.iter().chain(b.iter()).cloned().collect())
            }
        }
    }

    pub fn has_equality(&self) -> bool {
        self.constraints()
            .iter()
            .any(|c| c.relation == Relation::Eq)
    }

    pub fn render(&self, names: &[String]) -> String {
        match self {
            Region::Empty => "empty".to_string(),
            Region::Full => "full".to_string(),
            Region::Conj(cs) => cs
                .iter()
                .map(|c| c.render(names))
                .collect::<Vec<_>>()
                .join(" && "),
        }
    }
}

/// Axis-aligned box of initial states for one mode. A coordinate with a
/// positive `step` is restricted to the grid `lower + j*step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitBox<T> {
    pub mode: usize,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub step: Vec<Option<T>>,
}

impl<T: Scalar> InitBox<T> {
    fn axis_values(&self, i: usize) -> Option<Vec<T>> {
        let step = self.step.get(i).copied().flatten()?;
        let (lo, hi) = (self.lower[i], self.upper[i]);
        if step <= T::zero() || hi < lo {
            return Some(vec![lo]);
        }
        let count = ((hi - lo) / step + T::lit(1e-9)).floor().to_usize().unwrap_or(0);
        Some(
            (0..=count)
                .map(|j| lo + step * T::from_usize(j).unwrap())
                .collect(),
        )
    }

    /// Grid points if every nondegenerate coordinate has a step.
    pub fn grid(&self) -> Option<Vec<HybridState<T>>> {
        let mut axes = Vec::new();
        for i in 0..self.lower.len() {
            if self.lower[i] == self.upper[i] {
                axes.push(vec![self.lower[i]]);
            } else {
                axes.push(self.axis_values(i)?);
            }
        }
        let mut points: Vec<Vec<T>> = vec![Vec::new()];
        for axis in axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        Some(
            points
                .into_iter()
                .map(|s| HybridState::new(self.mode, s))
                .collect(),
        )
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> HybridState<T> {
        let state = (0..self.lower.len())
            .map(|i| match self.axis_values(i) {
                Some(values) => values[rng.gen_range(0..values.len())],
                None => {
                    let u: f64 = rng.gen();
                    self.lower[i] + (self.upper[i] - self.lower[i]) * T::lit(u)
                }
            })
            .collect();
        HybridState::new(self.mode, state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "items")]
pub enum InitialSet<T> {
    Finite(Vec<HybridState<T>>),
    Boxes(Vec<InitBox<T>>),
}

impl<T: Scalar> InitialSet<T> {
    /// All members when the set is finite (explicit list or fully gridded boxes).
    pub fn enumerate(&self) -> Option<Vec<HybridState<T>>> {
        match self {
            InitialSet::Finite(v) => Some(v.clone()),
            InitialSet::Boxes(bs) => {
                let mut out = Vec::new();
                for b in bs {
                    out.extend(b.grid()?);
                }
                Some(out)
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            InitialSet::Finite(v) => v.is_empty(),
            InitialSet::Boxes(bs) => bs.is_empty(),
        }
    }

    /// Uniform draw: over list members, or over a box chosen uniformly.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Option<HybridState<T>> {
        match self {
            InitialSet::Finite(v) if v.is_empty() => None,
            InitialSet::Finite(v) => Some(v[rng.gen_range(0..v.len())].clone()),
            InitialSet::Boxes(bs) if bs.is_empty() => None,
            InitialSet::Boxes(bs) => Some(bs[rng.gen_range(0..bs.len())].sample(rng)),
        }
    }

    pub fn members(&self) -> Vec<(usize, Vec<T>)> {
        match self {
            InitialSet::Finite(v) => v.iter().map(|h| (h.mode, h.state.clone())).collect(),
            InitialSet::Boxes(bs) => bs.iter().map(|b| (b.mode, b.lower.clone())).collect(),
        }
    }
}

/// `⟨Q, X, f, Init⟩` plus guard over-approximations.
#[derive(Clone)]
pub struct MultimodalSystem<T> {
    pub modes: Vec<String>,
    pub variables: Vec<Variable>,
    pub field: Arc<dyn VectorField<T>>,
    pub initial_set: InitialSet<T>,
    /// Row-major `N x N`; entry `q * N + q'` bounds the switch `q -> q'`.
    pub guard_over: Vec<Region<T>>,
    /// Box on which the vector field must be finite; used by validation.
    pub domain: Vec<(T, T)>,
}

impl<T: Scalar> fmt::Debug for MultimodalSystem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultimodalSystem")
            .field("modes", &self.modes)
            .field("variables", &self.variables)
            .field("initial_set", &self.initial_set)
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> MultimodalSystem<T> {
    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    pub fn variable_names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }

    pub fn mode_index(&self, name: &str) -> Option<usize> {
        self.modes.iter().position(|m| m == name)
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn over(&self, from: usize, to: usize) -> &Region<T> {
        &self.guard_over[from * self.num_modes() + to]
    }

    /// Indices of variables used as guard features.
    pub fn feature_indices(&self) -> Vec<usize> {
        self.indices_of(|k| k == VarKind::State)
    }

    pub fn environment_indices(&self) -> Vec<usize> {
        self.indices_of(|k| k == VarKind::Environment)
    }

    fn indices_of(&self, pred: impl Fn(VarKind) -> bool) -> Vec<usize> {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| pred(v.kind))
            .map(|(i, _)| i)
            .collect()
    }

    /// Period of each variable, if it is a periodic clock.
    pub fn periods(&self) -> Vec<Option<T>> {
        self.variables
            .iter()
            .map(|v| match v.kind {
                VarKind::Clock { period } => period.map(T::lit),
                _ => None,
            })
            .collect()
    }

    pub fn eval_field(&self, mode: usize, t: T, x: &[T]) -> Vec<T> {
        let mut dx = vec![T::zero(); x.len()];
        self.field.eval(mode, t, x, &mut dx);
        dx
    }
}

/// Penalty/reward accumulators with their flows and switch updates.
#[derive(Clone)]
pub struct PerformanceMetric<T> {
    pub penalties: Vec<String>,
    pub rewards: Vec<String>,
    pub dynamics: Arc<dyn MetricDynamics<T>>,
}

impl<T: Scalar> fmt::Debug for PerformanceMetric<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PerformanceMetric")
            .field("penalties", &self.penalties)
            .field("rewards", &self.rewards)
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> PerformanceMetric<T> {
    pub fn terms(&self) -> usize {
        self.penalties.len()
    }

    /// Total number of accumulators, `|P| + |R|`.
    pub fn width(&self) -> usize {
        self.penalties.len() + self.rewards.len()
    }
}

/// Disjunction of closed regions guarding one switch.
pub type Guard<T> = Vec<Region<T>>;

/// Guards for every mode pair (row-major `N x N`); an empty list disables the switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingLogic<T> {
    pub num_modes: usize,
    pub guards: Vec<Guard<T>>,
}

impl<T: Scalar> SwitchingLogic<T> {
    pub fn empty(num_modes: usize) -> Self {
        SwitchingLogic {
            num_modes,
            guards: vec![Vec::new(); num_modes * num_modes],
        }
    }

    pub fn guard(&self, from: usize, to: usize) -> &Guard<T> {
        &self.guards[from * self.num_modes + to]
    }

    pub fn set(&mut self, from: usize, to: usize, guard: Guard<T>) {
        self.guards[from * self.num_modes + to] = guard;
    }

    pub fn add(&mut self, from: usize, to: usize, region: Region<T>) {
        self.guards[from * self.num_modes + to].push(region);
    }

    pub fn enabled(&self, from: usize, to: usize, x: &[T]) -> bool {
        self.guard(from, to).iter().any(|r| r.contains(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    NoModes,
    NoVariables,
    PenaltyRewardMismatch,
    SelfSwitch,
    GuardTableShape,
    InitialSetEmpty,
    InitialMode,
    InitialDimension,
    DomainShape,
    NonFiniteField,
    NonIdentityUpdate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn diag(kind: DiagnosticKind, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        kind,
        message: message.into(),
    }
}

/// Checks the structural invariants of a system and metric. Field finiteness
/// and update identity are probed on a fixed deterministic grid over the domain.
pub fn validate_system<T: Scalar>(
    sys: &MultimodalSystem<T>,
    metric: &PerformanceMetric<T>,
) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let n_modes = sys.num_modes();
    let dim = sys.dim();
    if n_modes == 0 {
        out.push(diag(DiagnosticKind::NoModes, "system has no modes"));
    }
    if dim == 0 {
        out.push(diag(DiagnosticKind::NoVariables, "system has no variables"));
    }
    if metric.penalties.len() != metric.rewards.len() {
        out.push(diag(
            DiagnosticKind::PenaltyRewardMismatch,
            format!(
                "penalty/reward count mismatch: {} penalties, {} rewards",
                metric.penalties.len(),
                metric.rewards.len()
            ),
        ));
    }
    if sys.guard_over.len() != n_modes * n_modes {
        out.push(diag(
            DiagnosticKind::GuardTableShape,
            format!(
                "guard over-approximation table has {} entries, expected {}",
                sys.guard_over.len(),
                n_modes * n_modes
            ),
        ));
    } else {
        for q in 0..n_modes {
            if !sys.over(q, q).is_empty_kind() {
                out.push(diag(
                    DiagnosticKind::SelfSwitch,
                    format!("self-switch allowed on mode `{}`", sys.modes[q]),
                ));
            }
        }
    }
    if sys.initial_set.is_empty() {
        out.push(diag(DiagnosticKind::InitialSetEmpty, "initial set is empty"));
    }
    for (mode, state) in sys.initial_set.members() {
        if mode >= n_modes {
            out.push(diag(
                DiagnosticKind::InitialMode,
                format!("initial state mode index {mode} is not a mode"),
            ));
        }
        if state.len() != dim {
            out.push(diag(
                DiagnosticKind::InitialDimension,
                format!("initial state has {} components, expected {dim}", state.len()),
            ));
        }
    }
    if sys.domain.len() != dim {
        out.push(diag(
            DiagnosticKind::DomainShape,
            format!("domain box has {} axes, expected {dim}", sys.domain.len()),
        ));
        return out;
    }
    if n_modes == 0 || dim == 0 || metric.penalties.len() != metric.rewards.len() {
        return out;
    }
    let probes = domain_probes(&sys.domain);
    let mut dx = vec![T::zero(); dim];
    let mut dpr = vec![T::zero(); metric.width()];
    let t = T::zero();
    'modes: for q in 0..n_modes {
        for x in &probes {
            sys.field.eval(q, t, x, &mut dx);
            metric.dynamics.flow(q, t, x, &mut dpr);
            if dx.iter().chain(dpr.iter()).any(|v| !v.is_finite()) {
                out.push(diag(
                    DiagnosticKind::NonFiniteField,
                    format!("non-finite derivative in mode `{}` at {x:?}", sys.modes[q]),
                ));
                continue 'modes;
            }
        }
    }
    'ident: for q in 0..n_modes {
        for x in &probes {
            let before: Vec<T> = (0..metric.width())
                .map(|i| T::from_usize(i + 1).unwrap())
                .collect();
            let mut pr = before.clone();
            metric.dynamics.update(q, q, t, x, &mut pr);
            if pr != before {
                out.push(diag(
                    DiagnosticKind::NonIdentityUpdate,
                    format!("update is not identity on `{0}` -> `{0}`", sys.modes[q]),
                ));
                break 'ident;
            }
        }
    }
    out
}

/// Corners and centre of the domain box (capped at 2^6 corners).
fn domain_probes<T: Scalar>(domain: &[(T, T)]) -> Vec<Vec<T>> {
    let dim = domain.len();
    let mut probes = vec![domain
        .iter()
        .map(|&(lo, hi)| (lo + hi) / T::lit(2.0))
        .collect::<Vec<T>>()];
    let corners = 1usize << dim.min(6);
    for mask in 0..corners {
        probes.push(
            domain
                .iter()
                .enumerate()
                .map(|(i, &(lo, hi))| if i < 6 && mask >> i & 1 == 1 { hi } else { lo })
                .collect(),
        );
    }
    probes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constraint_margins() {
        let c = LinearConstraint::bound(2, 0, Relation::Le, 19.6);
        assert!(c.contains(&[19.6, 0.0]));
        assert!(c.contains(&[10.0, 0.0]));
        assert!(!c.contains(&[19.7, 0.0]));
        let e = LinearConstraint::bound(2, 1, Relation::Eq, 16.0).with_tol(1e-6);
        assert!(e.contains(&[0.0, 16.0]));
        assert!(!e.contains(&[0.0, 16.1]));
        assert_eq!(c.render(&["temp".into(), "out".into()]), "temp <= 19.6");
    }

    #[test]
    fn region_intersection() {
        let a: Region<f64> = Region::Full;
        let b = Region::Conj(vec![LinearConstraint::bound(1, 0, Relation::Ge, 1.0)]);
        assert_eq!(a.intersect(&b), b);
        assert_eq!(b.intersect(&Region::Empty), Region::Empty);
        assert_eq!(b.intersect(&b).constraints().len(), 2);
    }

    #[test]
    fn box_grid_enumeration() {
        let b = InitBox {
            mode: 0,
            lower: vec![16.0f64, 16.0],
            upper: vec![26.0, 26.0],
            step: vec![Some(0.1), Some(10.0)],
        };
        let g = b.grid().unwrap();
        assert_eq!(g.len(), 101 * 2);
        assert!((g.last().unwrap().state[0] - 26.0).abs() < 1e-9);
    }
}
