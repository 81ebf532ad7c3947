//! Human-editable TOML system description.
//!
//! ```toml
//! name = "thermostat"
//!
//! [modes]
//! names = ["OFF", "HEAT", "COOL"]
//!
//! [dynamics]
//! variables = ["temp", "out"]
//! environment = ["out"]
//! domain = { temp = [0.0, 40.0], out = [0.0, 40.0] }
//!
//! [dynamics.flow."*"]
//! out = "0"
//! [dynamics.flow.OFF]
//! temp = "-0.1*(temp - out)"
//!
//! [metric]
//! penalties = ["cost"]
//! rewards = ["time"]
//! [metric.flow."*"]
//! cost = "w_discomfort*(temp - 20)^2"
//! time = "1"
//! [metric.update."*"]
//! cost = "cost + 0.5"
//!
//! [[init.box]]
//! mode = "OFF"
//! ranges = { temp = [16.0, 26.0, 0.1], out = [16.0, 26.0, 10.0] }
//!
//! [guards-over]
//! default = "full"
//!
//! [cost-weights]
//! w_discomfort = 10.0
//! ```
//!
//! Expressions may use the state variables, `t`, `mode`, mode names (as
//! their index), `[parameters]` and `[cost-weights]`. Update expressions may
//! also use `from`, `to` and the accumulators. Guard regions are
//! conjunctions of linear (in)equalities, or `full` / `empty`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{BinOp, Compiled, Expr, Scope};
use crate::model::{
    HybridState, InitBox, InitialSet, LinearConstraint, MetricDynamics, MultimodalSystem,
    PerformanceMetric, Region, Relation, VarKind, Variable, VectorField,
};
use crate::scalar::Scalar;

pub const ANY: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ModesSection {
    pub names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DynamicsSection {
    pub variables: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub environment: Vec<String>,
    /// Clock variables with their period (`0` for aperiodic).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub clocks: BTreeMap<String, f64>,
    #[serde(default)]
    pub domain: BTreeMap<String, [f64; 2]>,
    /// Mode name (or `*`) to variable to derivative expression.
    #[serde(default)]
    pub flow: BTreeMap<String, BTreeMap<String, String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricSection {
    pub penalties: Vec<String>,
    pub rewards: Vec<String>,
    #[serde(default)]
    pub flow: BTreeMap<String, BTreeMap<String, String>>,
    /// `"A->B"` (or `*`) to accumulator to new-value expression.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub update: BTreeMap<String, BTreeMap<String, String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    pub mode: String,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub mode: String,
    /// `[value]`, `[lower, upper]` or `[lower, upper, grid_step]`.
    pub ranges: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InitSection {
    #[serde(default, rename = "state", skip_serializing_if = "Vec::is_empty")]
    pub states: Vec<StateSpec>,
    #[serde(default, rename = "box", skip_serializing_if = "Vec::is_empty")]
    pub boxes: Vec<BoxSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct GuardsOverSection {
    /// Region for unlisted pairs of distinct modes; `full` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
    /// Tolerance for equality constraints.
    #[serde(default, rename = "eq-tol", skip_serializing_if = "Option::is_none")]
    pub eq_tol: Option<f64>,
    #[serde(default)]
    pub pairs: BTreeMap<String, String>,
}

/// Numerical settings for synthesis; every field is optional in the document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SynthesisSettings {
    /// Supersequence repetition bound.
    pub switches: usize,
    pub distance_weight: f64,
    pub sentinel: f64,
    pub zero_dwell: f64,
    pub step: f64,
    pub max_horizon: f64,
    /// Sampling box for each dwell coordinate.
    pub dwell_bounds: [f64; 2],
    /// Sampling box for the time after the last switch.
    pub tail_bounds: [f64; 2],
    /// Sampling box for the repetition length `tP - tp`.
    pub period_bounds: [f64; 2],
    pub restarts: usize,
    /// Uniform draws screened for feasible restart points.
    pub start_draws: usize,
    pub polish: usize,
    pub max_fn_evals_per_dim: usize,
    pub f_tol: f64,
    pub x_tol: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub max_init_states: usize,
    pub negatives_window: f64,
    pub negatives_count: usize,
    pub perceptron_passes: usize,
    pub snap_equalities: bool,
    pub min_period: f64,
    pub min_cycle_switches: usize,
    pub horizon: f64,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        SynthesisSettings {
            switches: 2,
            distance_weight: 1000.0,
            sentinel: 2000.0,
            zero_dwell: 1e-4,
            step: 1e-3,
            max_horizon: 100.0,
            dwell_bounds: [0.0, 20.0],
            tail_bounds: [0.0, 20.0],
            period_bounds: [0.0, 20.0],
            restarts: 20,
            start_draws: 1000,
            polish: 2,
            max_fn_evals_per_dim: 200,
            f_tol: 1e-6,
            x_tol: 1e-6,
            epsilon: 0.1,
            delta: 0.05,
            max_init_states: 40,
            negatives_window: 0.5,
            negatives_count: 10,
            perceptron_passes: 1000,
            snap_equalities: true,
            min_period: 0.0,
            min_cycle_switches: 0,
            horizon: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ConfigDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub modes: ModesSection,
    pub dynamics: DynamicsSection,
    pub metric: MetricSection,
    #[serde(default)]
    pub init: InitSection,
    #[serde(default, rename = "guards-over")]
    pub guards_over: GuardsOverSection,
    #[serde(default, rename = "cost-weights", skip_serializing_if = "BTreeMap::is_empty")]
    pub cost_weights: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, f64>,
    #[serde(default)]
    pub synthesis: SynthesisSettings,
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Builds the system and metric with expression-backed dynamics.
    pub fn build<T: Scalar>(&self) -> Result<(MultimodalSystem<T>, PerformanceMetric<T>)> {
        let layout = Layout::new(self)?;
        let scope = layout.scope(self, false);
        let update_scope = layout.scope(self, true);
        let n_modes = self.modes.names.len();

        let field = ExprField {
            exprs: compile_table(
                &self.dynamics.flow,
                &self.modes.names,
                &self.dynamics.variables,
                &scope,
                "dynamics",
                Some("0"),
            )?,
            layout: layout.clone(),
        };
        let accumulators: Vec<String> = self
            .metric
            .penalties
            .iter()
            .chain(self.metric.rewards.iter())
            .cloned()
            .collect();
        let flows = compile_table(
            &self.metric.flow,
            &self.modes.names,
            &accumulators,
            &scope,
            "metric flow",
            None,
        )?;
        let mut updates: Vec<Vec<Option<Compiled<T>>>> =
            vec![vec![None; accumulators.len()]; n_modes * n_modes];
        for (key, assigns) in &self.metric.update {
            let pairs: Vec<(usize, usize)> = if key == ANY {
                (0..n_modes)
                    .flat_map(|a| (0..n_modes).map(move |b| (a, b)))
                    .filter(|(a, b)| a != b)
                    .collect()
            } else {
                let (a, b) = layout.pair(key)?;
                vec![(a, b)]
            };
            for (acc, src) in assigns {
                let ai = accumulators.iter().position(|a| a == acc).ok_or_else(|| {
                    Error::Config(format!("update for unknown accumulator `{acc}`"))
                })?;
                let compiled = Expr::parse(src)?.compile::<T>(&update_scope)?;
                for &(a, b) in &pairs {
                    // specific pair entries override the wildcard
                    if key == ANY && self.metric.update.contains_key(&pair_key(self, a, b)) {
                        let specific = &self.metric.update[&pair_key(self, a, b)];
                        if specific.contains_key(acc) {
                            continue;
                        }
                    }
                    updates[a * n_modes + b][ai] = Some(compiled.clone());
                }
            }
        }
        let metric_dyn = ExprMetric {
            flows,
            updates,
            layout: layout.clone(),
        };

        let initial_set = self.initial_set::<T>(&layout)?;
        let eq_tol = T::lit(self.guards_over.eq_tol.unwrap_or(1e-6));
        let default_region = match &self.guards_over.default {
            Some(src) => parse_region::<T>(src, self, eq_tol)?,
            None => Region::Full,
        };
        let mut guard_over = vec![default_region; n_modes * n_modes];
        for q in 0..n_modes {
            guard_over[q * n_modes + q] = Region::Empty;
        }
        for (key, src) in &self.guards_over.pairs {
            let (a, b) = layout.pair(key)?;
            guard_over[a * n_modes + b] = parse_region::<T>(src, self, eq_tol)?;
        }

        let mut variables = Vec::new();
        for name in &self.dynamics.variables {
            let kind = if self.dynamics.environment.contains(name) {
                VarKind::Environment
            } else if let Some(&p) = self.dynamics.clocks.get(name) {
                VarKind::Clock {
                    period: (p > 0.0).then_some(p),
                }
            } else {
                VarKind::State
            };
            variables.push(Variable {
                name: name.clone(),
                kind,
            });
        }
        let domain = self
            .dynamics
            .variables
            .iter()
            .map(|v| {
                let [lo, hi] = self.dynamics.domain.get(v).copied().unwrap_or([-1.0, 1.0]);
                (T::lit(lo), T::lit(hi))
            })
            .collect();

        let sys = MultimodalSystem {
            modes: self.modes.names.clone(),
            variables,
            field: Arc::new(field),
            initial_set,
            guard_over,
            domain,
        };
        let metric = PerformanceMetric {
            penalties: self.metric.penalties.clone(),
            rewards: self.metric.rewards.clone(),
            dynamics: Arc::new(metric_dyn),
        };
        Ok((sys, metric))
    }

    fn initial_set<T: Scalar>(&self, layout: &Layout) -> Result<InitialSet<T>> {
        let vars = &self.dynamics.variables;
        if !self.init.boxes.is_empty() {
            let mut boxes = Vec::new();
            for b in &self.init.boxes {
                let mode = layout.mode(&b.mode)?;
                let mut lower = Vec::new();
                let mut upper = Vec::new();
                let mut step = Vec::new();
                for v in vars {
                    let r = b.ranges.get(v).ok_or_else(|| {
                        Error::Config(format!("init box misses variable `{v}`"))
                    })?;
                    let (lo, hi, st) = match r.as_slice() {
                        [x] => (*x, *x, None),
                        [lo, hi] => (*lo, *hi, None),
                        [lo, hi, st] => (*lo, *hi, Some(T::lit(*st))),
                        _ => {
                            return Err(Error::Config(format!(
                                "init range for `{v}` needs 1 to 3 numbers"
                            )))
                        }
                    };
                    lower.push(T::lit(lo));
                    upper.push(T::lit(hi));
                    step.push(st);
                }
                boxes.push(InitBox {
                    mode,
                    lower,
                    upper,
                    step,
                });
            }
            return Ok(InitialSet::Boxes(boxes));
        }
        let mut states = Vec::new();
        for s in &self.init.states {
            let mode = layout.mode(&s.mode)?;
            let state = vars
                .iter()
                .map(|v| {
                    s.values.get(v).map(|x| T::lit(*x)).ok_or_else(|| {
                        Error::Config(format!("init state misses variable `{v}`"))
                    })
                })
                .collect::<Result<Vec<T>>>()?;
            states.push(HybridState::new(mode, state));
        }
        Ok(InitialSet::Finite(states))
    }
}

fn pair_key(doc: &ConfigDocument, a: usize, b: usize) -> String {
    format!("{}->{}", doc.modes.names[a], doc.modes.names[b])
}

/// Environment slice layout shared by all compiled expressions:
/// `[t, mode, from, to, x.., pr..]`.
#[derive(Debug, Clone)]
struct Layout {
    modes: Vec<String>,
    n: usize,
    width: usize,
}

const SLOT_T: usize = 0;
const SLOT_MODE: usize = 1;
const SLOT_FROM: usize = 2;
const SLOT_TO: usize = 3;
const SLOT_X: usize = 4;

impl Layout {
    fn new(doc: &ConfigDocument) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let reserved = ["t", "mode", "from", "to", "pi"];
        for name in doc
            .modes
            .names
            .iter()
            .chain(&doc.dynamics.variables)
            .chain(&doc.metric.penalties)
            .chain(&doc.metric.rewards)
            .chain(doc.parameters.keys())
            .chain(doc.cost_weights.keys())
        {
            if reserved.contains(&name.as_str()) {
                return Err(Error::Config(format!("`{name}` is a reserved identifier")));
            }
            if !seen.insert(name.clone()) {
                return Err(Error::Config(format!("identifier `{name}` declared twice")));
            }
        }
        Ok(Layout {
            modes: doc.modes.names.clone(),
            n: doc.dynamics.variables.len(),
            width: doc.metric.penalties.len() + doc.metric.rewards.len(),
        })
    }

    fn mode(&self, name: &str) -> Result<usize> {
        self.modes
            .iter()
            .position(|m| m == name)
            .ok_or_else(|| Error::Config(format!("unknown mode `{name}`")))
    }

    fn pair(&self, key: &str) -> Result<(usize, usize)> {
        let (a, b) = key
            .split_once("->")
            .ok_or_else(|| Error::Config(format!("mode pair `{key}` must look like `A->B`")))?;
        Ok((self.mode(a.trim())?, self.mode(b.trim())?))
    }

    fn scope(&self, doc: &ConfigDocument, with_accumulators: bool) -> Scope {
        let mut s = Scope::new();
        s.slot("t", SLOT_T).slot("mode", SLOT_MODE);
        for (i, m) in doc.modes.names.iter().enumerate() {
            s.constant(m, i as f64);
        }
        for (k, v) in doc.parameters.iter().chain(doc.cost_weights.iter()) {
            s.constant(k, *v);
        }
        for (i, v) in doc.dynamics.variables.iter().enumerate() {
            s.slot(v, SLOT_X + i);
        }
        if with_accumulators {
            s.slot("from", SLOT_FROM).slot("to", SLOT_TO);
            for (i, a) in doc
                .metric
                .penalties
                .iter()
                .chain(doc.metric.rewards.iter())
                .enumerate()
            {
                s.slot(a, SLOT_X + self.n + i);
            }
        }
        s
    }

    fn env<T: Scalar>(&self, t: T, mode: usize, x: &[T]) -> Vec<T> {
        let mut env = vec![T::zero(); SLOT_X + self.n + self.width];
        env[SLOT_T] = t;
        env[SLOT_MODE] = T::from_usize(mode).unwrap();
        env[SLOT_X..SLOT_X + self.n].copy_from_slice(x);
        env
    }
}

/// Per mode, per target name: the compiled expression. Missing entries fall
/// back to the `*` row, then to `fallback`.
fn compile_table<T: Scalar>(
    table: &BTreeMap<String, BTreeMap<String, String>>,
    modes: &[String],
    targets: &[String],
    scope: &Scope,
    what: &str,
    fallback: Option<&str>,
) -> Result<Vec<Vec<Compiled<T>>>> {
    for key in table.keys() {
        if key != ANY && !modes.contains(key) {
            return Err(Error::Config(format!("{what}: unknown mode `{key}`")));
        }
        for target in table[key].keys() {
            if !targets.contains(target) {
                return Err(Error::Config(format!("{what}: unknown target `{target}`")));
            }
        }
    }
    let mut out = Vec::new();
    for mode in modes {
        let mut row = Vec::new();
        for target in targets {
            let src = table
                .get(mode)
                .and_then(|m| m.get(target))
                .or_else(|| table.get(ANY).and_then(|m| m.get(target)))
                .map(|s| s.as_str())
                .or(fallback)
                .ok_or_else(|| {
                    Error::Config(format!("{what}: no expression for `{target}` in mode `{mode}`"))
                })?;
            row.push(Expr::parse(src)?.compile::<T>(scope)?);
        }
        out.push(row);
    }
    Ok(out)
}

struct ExprField<T> {
    exprs: Vec<Vec<Compiled<T>>>,
    layout: Layout,
}

impl<T: Scalar> VectorField<T> for ExprField<T> {
    fn eval(&self, mode: usize, t: T, x: &[T], dx: &mut [T]) {
        let env = self.layout.env(t, mode, x);
        for (d, e) in dx.iter_mut().zip(&self.exprs[mode]) {
            *d = e.eval(&env);
        }
    }
}

struct ExprMetric<T> {
    flows: Vec<Vec<Compiled<T>>>,
    updates: Vec<Vec<Option<Compiled<T>>>>,
    layout: Layout,
}

impl<T: Scalar> MetricDynamics<T> for ExprMetric<T> {
    fn flow(&self, mode: usize, t: T, x: &[T], dpr: &mut [T]) {
        let env = self.layout.env(t, mode, x);
        for (d, e) in dpr.iter_mut().zip(&self.flows[mode]) {
            *d = e.eval(&env);
        }
    }

    fn update(&self, from: usize, to: usize, t: T, x: &[T], pr: &mut [T]) {
        if from == to {
            return;
        }
        let n_modes = self.layout.modes.len();
        let row = &self.updates[from * n_modes + to];
        if row.iter().all(|u| u.is_none()) {
            return;
        }
        let mut env = self.layout.env(t, from, x);
        env[SLOT_FROM] = T::from_usize(from).unwrap();
        env[SLOT_TO] = T::from_usize(to).unwrap();
        let base = SLOT_X + self.layout.n;
        env[base..base + pr.len()].copy_from_slice(pr);
        for (p, u) in pr.iter_mut().zip(row) {
            if let Some(u) = u {
                *p = u.eval(&env);
            }
        }
    }
}

/// Parses `full`, `empty`, or a `&&`-conjunction of linear relations.
pub fn parse_region<T: Scalar>(src: &str, doc: &ConfigDocument, eq_tol: T) -> Result<Region<T>> {
    match src.trim() {
        "full" | "true" => return Ok(Region::Full),
        "empty" | "false" => return Ok(Region::Empty),
        _ => {}
    }
    let vars = &doc.dynamics.variables;
    let mut scope = Scope::new();
    for (k, v) in doc.parameters.iter().chain(doc.cost_weights.iter()) {
        scope.constant(k, *v);
    }
    for (i, v) in vars.iter().enumerate() {
        scope.slot(v, i);
    }
    let expr = Expr::parse(src)?;
    let mut atoms = Vec::new();
    flatten_and(&expr, &mut atoms);
    let mut constraints = Vec::new();
    for atom in atoms {
        let (op, lhs, rhs) = match atom {
            Expr::Bin(op, l, r) if op.is_relation() => (*op, l, r),
            _ => {
                return Err(Error::Config(format!(
                    "guard `{src}`: `{atom}` is not a relation"
                )))
            }
        };
        let relation = match op {
            BinOp::Ge | BinOp::Gt => Relation::Ge,
            BinOp::Le | BinOp::Lt => Relation::Le,
            BinOp::Eq => Relation::Eq,
            _ => {
                return Err(Error::Config(format!(
                    "guard `{src}`: `!=` does not define a closed region"
                )))
            }
        };
        let diff = Expr::bin(BinOp::Sub, (**lhs).clone(), (**rhs).clone()).compile::<f64>(&scope)?;
        let zero = vec![0.0; vars.len()];
        let offset = diff.eval(&zero);
        let mut coeffs = Vec::new();
        for i in 0..vars.len() {
            let mut e = zero.clone();
            e[i] = 1.0;
            coeffs.push(diff.eval(&e) - offset);
        }
        // linearity probe
        let probe: Vec<f64> = (0..vars.len()).map(|i| 1.37 + 0.71 * i as f64).collect();
        let predicted: f64 = offset + coeffs.iter().zip(&probe).map(|(c, x)| c * x).sum::<f64>();
        let actual = diff.eval(&probe);
        if !actual.is_finite() || (actual - predicted).abs() > 1e-9 * (1.0 + actual.abs()) {
            return Err(Error::Config(format!(
                "guard `{src}`: `{atom}` is not linear in the state"
            )));
        }
        let mut c = LinearConstraint::new(
            coeffs.into_iter().map(T::lit).collect(),
            T::lit(offset),
            relation,
        );
        if relation == Relation::Eq {
            c = c.with_tol(eq_tol);
        }
        constraints.push(c);
    }
    Ok(Region::Conj(constraints))
}

fn flatten_and<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
    match e {
        Expr::Bin(BinOp::And, a, b) => {
            flatten_and(a, out);
            flatten_and(b, out);
        }
        other => out.push(other),
    }
}

/// Renders a region in the config guard syntax.
pub fn region_to_string<T: Scalar>(region: &Region<T>, names: &[String]) -> String {
    region.render(names)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"
name = "two-tank"

[modes]
names = ["A", "B"]

[dynamics]
variables = ["x", "y"]
environment = ["y"]
domain = { x = [-5.0, 5.0], y = [0.0, 2.0] }

[dynamics.flow."*"]
y = "0"
[dynamics.flow.A]
x = "-k*x + y"
[dynamics.flow.B]
x = "if(mode == B, 2, 0) - x"

[metric]
penalties = ["p"]
rewards = ["r"]
[metric.flow."*"]
p = "x^2"
r = "1"
[metric.update."*"]
p = "p + 1"
[metric.update."B->A"]
p = "p + 2"

[[init.state]]
mode = "A"
values = { x = 1.0, y = 0.5 }

[guards-over]
default = "full"
eq-tol = 0.001
[guards-over.pairs]
"A->B" = "x >= 1 && y == 0.5"

[parameters]
k = 0.5
"#;

    #[test]
    fn builds_and_evaluates() {
        let doc = ConfigDocument::parse(DOC).unwrap();
        let (sys, metric) = doc.build::<f64>().unwrap();
        assert_eq!(sys.modes, vec!["A", "B"]);
        assert_eq!(sys.eval_field(0, 0.0, &[2.0, 0.5]), vec![-0.5, 0.0]);
        assert_eq!(sys.eval_field(1, 0.0, &[0.5, 0.5]), vec![1.5, 0.0]);
        let mut pr = [1.0, 0.0];
        metric.dynamics.update(0, 1, 0.0, &[0.0, 0.0], &mut pr);
        assert_eq!(pr, [2.0, 0.0]);
        let mut pr = [1.0, 0.0];
        metric.dynamics.update(1, 0, 0.0, &[0.0, 0.0], &mut pr);
        assert_eq!(pr, [3.0, 0.0]);
        let g = sys.over(0, 1);
        assert!(g.contains(&[1.5, 0.5005]));
        assert!(!g.contains(&[0.5, 0.5]));
        assert!(sys.over(1, 0).contains(&[-100.0, 7.0]));
        assert!(!sys.over(0, 0).contains(&[0.0, 0.0]));
        assert_eq!(sys.environment_indices(), vec![1]);
    }

    #[test]
    fn document_round_trips_through_toml() {
        let doc = ConfigDocument::parse(DOC).unwrap();
        let text = doc.to_toml().unwrap();
        assert_eq!(ConfigDocument::parse(&text).unwrap(), doc);
    }

    #[test]
    fn rejects_nonlinear_guards_and_bad_names() {
        let mut doc = ConfigDocument::parse(DOC).unwrap();
        doc.guards_over
            .pairs
            .insert("B->A".into(), "x*x >= 1".into());
        assert!(matches!(doc.build::<f64>(), Err(Error::Config(_))));
        let mut doc = ConfigDocument::parse(DOC).unwrap();
        doc.dynamics.flow.get_mut("A").unwrap().insert("x".into(), "z + 1".into());
        assert!(doc.build::<f64>().is_err());
        let mut doc = ConfigDocument::parse(DOC).unwrap();
        doc.parameters.insert("x".into(), 1.0);
        assert!(doc.build::<f64>().is_err());
    }

    #[test]
    fn region_rendering_reparses() {
        let doc = ConfigDocument::parse(DOC).unwrap();
        let r = parse_region::<f64>("2*x - y >= 3 && y == 0.5", &doc, 1e-6).unwrap();
        let text = region_to_string(&r, &doc.dynamics.variables);
        let r2 = parse_region::<f64>(&text, &doc, 1e-6).unwrap();
        assert_eq!(r, r2);
    }
}
