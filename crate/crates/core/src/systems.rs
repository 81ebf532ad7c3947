//! Built-in case studies: a thermostat, an oil pump and a DC-DC converter.
//!
//! Every system is described by a [`ConfigDocument`] (exported by
//! [`NamedSystem::document`]) and runs on native dynamics that evaluate the
//! same expressions in the same order.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::ConfigDocument;
use crate::error::{Error, Result};
use crate::model::{
    LinearConstraint, MetricDynamics, MultimodalSystem, PerformanceMetric, Region, Relation,
    SwitchingLogic, VectorField,
};
use crate::scalar::Scalar;

pub const NAMED_IDS: [&str; 5] = [
    "thermostat",
    "thermostat-equal-weight",
    "oil-pump-cost1",
    "oil-pump-cost2",
    "buck-boost",
];

/// A reference switching threshold `variable relation threshold` for one
/// mode pair, optionally restricted to an environment value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceGuard {
    pub from: String,
    pub to: String,
    pub variable: String,
    pub relation: Relation,
    pub threshold: f64,
    pub tolerance: f64,
    pub condition: Option<(String, f64)>,
}

impl ReferenceGuard {
    fn new(from: &str, to: &str, variable: &str, relation: Relation, threshold: f64, tolerance: f64) -> Self {
        ReferenceGuard {
            from: from.into(),
            to: to.into(),
            variable: variable.into(),
            relation,
            threshold,
            tolerance,
            condition: None,
        }
    }

    fn when(mut self, var: &str, value: f64) -> Self {
        self.condition = Some((var.into(), value));
        self
    }

    /// The guard as a region of `sys`.
    pub fn region<T: Scalar>(&self, sys: &MultimodalSystem<T>, eq_tol: T) -> Result<Region<T>> {
        let n = sys.dim();
        let idx = |name: &str| {
            sys.variable_index(name)
                .ok_or_else(|| Error::Validation(format!("unknown variable `{name}`")))
        };
        let mut cons = vec![
            LinearConstraint::bound(n, idx(&self.variable)?, self.relation, T::lit(self.threshold))
                .with_tol(eq_tol),
        ];
        if let Some((var, value)) = &self.condition {
            cons.push(LinearConstraint::bound(n, idx(var)?, Relation::Eq, T::lit(*value)).with_tol(eq_tol));
        }
        Ok(Region::Conj(cons))
    }
}

/// A ready-to-use case study.
#[derive(Clone)]
pub struct NamedSystem<T> {
    pub id: String,
    pub system: MultimodalSystem<T>,
    pub metric: PerformanceMetric<T>,
    pub reference_guards: Vec<ReferenceGuard>,
    pub document: ConfigDocument,
}

impl<T: Scalar> std::fmt::Debug for NamedSystem<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NamedSystem")
            .field("id", &self.id)
            .field("system", &self.system)
            .field("reference_guards", &self.reference_guards)
            .finish()
    }
}

impl<T: Scalar> NamedSystem<T> {
    /// Switching logic made of the reference guards.
    pub fn reference_logic(&self) -> Result<SwitchingLogic<T>> {
        let mut logic = SwitchingLogic::empty(self.system.num_modes());
        let tol = T::lit(self.document.guards_over.eq_tol.unwrap_or(1e-6));
        for g in &self.reference_guards {
            let from = self.mode(&g.from)?;
            let to = self.mode(&g.to)?;
            logic.add(from, to, g.region(&self.system, tol)?);
        }
        Ok(logic)
    }

    fn mode(&self, name: &str) -> Result<usize> {
        self.system
            .mode_index(name)
            .ok_or_else(|| Error::Validation(format!("unknown mode `{name}`")))
    }

    /// The system with expression-evaluated dynamics built from [`Self::document`].
    pub fn interpreted(&self) -> Result<(MultimodalSystem<T>, PerformanceMetric<T>)> {
        self.document.build()
    }
}

/// Loads one of [`NAMED_IDS`].
pub fn load_named<T: Scalar>(id: &str) -> Result<NamedSystem<T>> {
    let (text, refs): (String, Vec<ReferenceGuard>) = match id {
        "thermostat" => (thermostat_toml(id, 10.0), thermostat_refs(19.6, 20.2, 20.0, 20.3, 0.15)),
        "thermostat-equal-weight" => (thermostat_toml(id, 1.0), thermostat_refs(18.8, 20.0, 21.9, 22.7, 0.25)),
        "oil-pump-cost1" => (oil_pump_toml(id, false), oil_pump_refs(3.71, 4.62)),
        "oil-pump-cost2" => (oil_pump_toml(id, true), oil_pump_refs(4.07, 4.71)),
        "buck-boost" => (buck_boost_toml(id), buck_boost_refs()),
        _ => return Err(Error::UnknownSystem(id.to_string())),
    };
    let document = ConfigDocument::parse(&text)?;
    let (mut system, mut metric) = document.build::<T>()?;
    let p = |k: &str| T::lit(document.parameters.get(k).or(document.cost_weights.get(k)).copied().unwrap_or(0.0));
    match id {
        "thermostat" | "thermostat-equal-weight" => {
            system.field = Arc::new(ThermostatField);
            metric.dynamics = Arc::new(ThermostatMetric {
                discomfort: p("w_discomfort"),
                fuel: p("w_fuel"),
                tear: p("w_tear"),
            });
        }
        "oil-pump-cost1" | "oil-pump-cost2" => {
            system.field = Arc::new(OilPumpField {
                pump_rate: p("pump_rate"),
                demand: p("demand"),
            });
            metric.dynamics = Arc::new(OilPumpMetric {
                v_min: p("v_min"),
                v_max: p("v_max"),
                big: p("big"),
                v_high: p("v_high"),
                high_band: id == "oil-pump-cost2",
            });
        }
        _ => {
            let c = ConverterParams {
                l: p("L"),
                c: p("C"),
                r_c: p("rC"),
                r_l: p("rL"),
                r_d: p("rd"),
                r_s: p("rs"),
                e: p("E"),
                v_d: p("Vd"),
            };
            system.field = Arc::new(ConverterField(c));
            metric.dynamics = Arc::new(ConverterMetric(c));
        }
    }
    Ok(NamedSystem {
        id: id.to_string(),
        system,
        metric,
        reference_guards: refs,
        document,
    })
}

fn thermostat_refs(fh: f64, hf: f64, cf: f64, fc: f64, tol: f64) -> Vec<ReferenceGuard> {
    vec![
        ReferenceGuard::new("OFF", "HEAT", "temp", Relation::Le, fh, tol).when("out", 16.0),
        ReferenceGuard::new("HEAT", "OFF", "temp", Relation::Ge, hf, tol).when("out", 16.0),
        ReferenceGuard::new("COOL", "OFF", "temp", Relation::Le, cf, tol).when("out", 26.0),
        ReferenceGuard::new("OFF", "COOL", "temp", Relation::Ge, fc, tol).when("out", 26.0),
    ]
}

fn oil_pump_refs(fn_: f64, nf: f64) -> Vec<ReferenceGuard> {
    vec![
        ReferenceGuard::new("OFF", "ON", "V", Relation::Le, fn_, 0.2),
        ReferenceGuard::new("ON", "OFF", "V", Relation::Ge, nf, 0.2),
    ]
}

fn buck_boost_refs() -> Vec<ReferenceGuard> {
    vec![
        ReferenceGuard::new("M1", "M2", "iL", Relation::Ge, 1.9, 0.0),
        ReferenceGuard::new("M2", "M3", "iL", Relation::Eq, 0.0, 0.0),
        ReferenceGuard::new("M3", "M1", "uC", Relation::Le, 4.6, 0.0),
    ]
}

fn thermostat_toml(id: &str, w_discomfort: f64) -> String {
    format!(
        r#"name = "{id}"

[modes]
names = ["OFF", "HEAT", "COOL"]

[dynamics]
variables = ["temp", "out"]
environment = ["out"]
domain = {{ temp = [0.0, 40.0], out = [0.0, 40.0] }}

[dynamics.flow."*"]
out = "0"

[dynamics.flow.OFF]
temp = "-0.1*(temp - out)"

[dynamics.flow.HEAT]
temp = "-0.1*(temp - out) + 0.05*(80 - temp)"

[dynamics.flow.COOL]
temp = "-0.1*(temp - out) - 0.15*temp"

[metric]
penalties = ["cost"]
rewards = ["time"]

[metric.flow."*"]
cost = "w_discomfort*(temp - 20)^2 + w_fuel*(temp - out)^2"
time = "1"

[metric.flow.OFF]
cost = "w_discomfort*(temp - 20)^2"

[metric.update."*"]
cost = "cost + w_tear*0.5"

[[init.box]]
mode = "OFF"
ranges = {{ temp = [16.0, 26.0, 0.1], out = [16.0, 26.0, 10.0] }}

[guards-over]
default = "full"

[cost-weights]
w_discomfort = {w_discomfort:?}
w_fuel = 1.0
w_tear = 1.0

[synthesis]
switches = 2
step = 0.01
max-horizon = 80.0
dwell-bounds = [0.0, 6.0]
tail-bounds = [0.0, 1.5]
period-bounds = [1.0, 6.0]
min-period = 0.5
min-cycle-switches = 2
horizon = 50.0
"#
    )
}

fn oil_pump_toml(id: &str, high_band: bool) -> String {
    let (penalties, rewards, extra) = if high_band {
        (
            r#"["p1", "p2"]"#,
            r#"["r1", "r2"]"#,
            "p2 = \"if(V > v_high, 1, 0)\"\nr2 = \"if(V < v_high, 1, 0)\"\n",
        )
    } else {
        (r#"["p1"]"#, r#"["r1"]"#, "")
    };
    format!(
        r#"name = "{id}"

[modes]
names = ["OFF", "ON"]

[dynamics]
variables = ["V", "clock"]
clocks = {{ clock = 6.283185307179586 }}
domain = {{ V = [0.0, 10.0], clock = [0.0, 100.0] }}

[dynamics.flow."*"]
clock = "1"

[dynamics.flow.OFF]
V = "0 - demand*(cos(clock) + 1)"

[dynamics.flow.ON]
V = "pump_rate - demand*(cos(clock) + 1)"

[metric]
penalties = {penalties}
rewards = {rewards}

[metric.flow."*"]
p1 = "if(V >= v_min && V <= v_max, V, big)"
r1 = "1"
{extra}
[[init.state]]
mode = "OFF"
values = {{ V = 4.0, clock = 0.0 }}

[guards-over]
default = "full"

[parameters]
pump_rate = 4.0
demand = 3.0
v_min = 1.0
v_max = 8.0
big = 1000000.0
v_high = 4.5

[synthesis]
switches = 2
step = 0.01
max-horizon = 80.0
dwell-bounds = [0.0, 4.0]
tail-bounds = [0.0, 4.0]
period-bounds = [0.0, 13.0]
restarts = 60
min-period = 3.0
min-cycle-switches = 2
horizon = 100.0
"#
    )
}

fn buck_boost_toml(id: &str) -> String {
    format!(
        r#"name = "{id}"

[modes]
names = ["M1", "M2", "M3"]

[dynamics]
variables = ["iL", "uC", "R"]
environment = ["R"]
domain = {{ iL = [-5.0, 10.0], uC = [0.0, 20.0], R = [100.0, 200.0] }}

[dynamics.flow."*"]
R = "0"

[dynamics.flow.M1]
iL = "(-rL - rs)/L*iL + E/L"
uC = "-1/(C*(R + rC))*uC"

[dynamics.flow.M2]
iL = "(-rL - rd)/L*iL - 1/L*uC + E/L"
uC = "R/(R + rC)*(1/C - rC*(rL + rd)/L)*iL - R/(R + rC)*(rC/L + 1/(R*C))*uC + R/(R + rC)*(rC/L)*E"

[dynamics.flow.M3]
iL = "0"
uC = "-1/((R + rC)*C)*uC"

[metric]
penalties = ["p1"]
rewards = ["r1"]

[metric.flow."*"]
p1 = "(R/(R + rC)*uC - Vd)^2"
r1 = "1"

[[init.box]]
mode = "M1"
ranges = {{ iL = [0.0], uC = [5.0], R = [100.0, 200.0, 100.0] }}

[guards-over]
default = "full"
eq-tol = 0.001

[guards-over.pairs]
"M2->M3" = "iL == 0"
"M1->M3" = "iL == 0"

[parameters]
L = 4.7e-5
C = 3.3e-6
rC = 0.06
rL = 0.1
rd = 0.05
rs = 0.05
E = 10.0
Vd = 5.0

[synthesis]
switches = 2
zero-dwell = 1e-9
step = 1e-7
max-horizon = 0.002
dwell-bounds = [0.0, 0.0002]
tail-bounds = [0.0, 0.0001]
period-bounds = [5e-5, 0.0006]
min-period = 1e-5
min-cycle-switches = 2
x-tol = 1e-11
horizon = 0.003
"#
    )
}

struct ThermostatField;

impl<T: Scalar> VectorField<T> for ThermostatField {
    fn eval(&self, mode: usize, _t: T, x: &[T], dx: &mut [T]) {
        let (temp, out) = (x[0], x[1]);
        let leak = T::lit(-0.1) * (temp - out);
        dx[0] = match mode {
            0 => leak,
            1 => leak + T::lit(0.05) * (T::lit(80.0) - temp),
            _ => leak - T::lit(0.15) * temp,
        };
        dx[1] = T::zero();
    }
}

struct ThermostatMetric<T> {
    discomfort: T,
    fuel: T,
    tear: T,
}

impl<T: Scalar> MetricDynamics<T> for ThermostatMetric<T> {
    fn flow(&self, mode: usize, _t: T, x: &[T], dpr: &mut [T]) {
        let (temp, out) = (x[0], x[1]);
        let d = temp - T::lit(20.0);
        let mut cost = self.discomfort * (d * d);
        if mode != 0 {
            let f = temp - out;
            cost = cost + self.fuel * (f * f);
        }
        dpr[0] = cost;
        dpr[1] = T::one();
    }

    fn update(&self, from: usize, to: usize, _t: T, _x: &[T], pr: &mut [T]) {
        if from != to {
            pr[0] = pr[0] + self.tear * T::lit(0.5);
        }
    }
}

struct OilPumpField<T> {
    pump_rate: T,
    demand: T,
}

impl<T: Scalar> VectorField<T> for OilPumpField<T> {
    fn eval(&self, mode: usize, _t: T, x: &[T], dx: &mut [T]) {
        let supply = if mode == 1 { self.pump_rate } else { T::zero() };
        dx[0] = supply - self.demand * (x[1].cos() + T::one());
        dx[1] = T::one();
    }
}

struct OilPumpMetric<T> {
    v_min: T,
    v_max: T,
    big: T,
    v_high: T,
    high_band: bool,
}

impl<T: Scalar> MetricDynamics<T> for OilPumpMetric<T> {
    fn flow(&self, _mode: usize, _t: T, x: &[T], dpr: &mut [T]) {
        let v = x[0];
        let safe = v >= self.v_min && v <= self.v_max;
        if self.high_band {
            dpr[0] = if safe { v } else { self.big };
            dpr[1] = if v > self.v_high { T::one() } else { T::zero() };
            dpr[2] = T::one();
            dpr[3] = if v < self.v_high { T::one() } else { T::zero() };
        } else {
            dpr[0] = if safe { v } else { self.big };
            dpr[1] = T::one();
        }
    }

    fn update(&self, _from: usize, _to: usize, _t: T, _x: &[T], _pr: &mut [T]) {}
}

#[derive(Debug, Clone, Copy)]
struct ConverterParams<T> {
    l: T,
    c: T,
    r_c: T,
    r_l: T,
    r_d: T,
    r_s: T,
    e: T,
    v_d: T,
}

struct ConverterField<T>(ConverterParams<T>);

impl<T: Scalar> VectorField<T> for ConverterField<T> {
    fn eval(&self, mode: usize, _t: T, x: &[T], dx: &mut [T]) {
        let p = &self.0;
        let (il, uc, r) = (x[0], x[1], x[2]);
        let one = T::one();
        match mode {
            0 => {
                dx[0] = (-p.r_l - p.r_s) / p.l * il + p.e / p.l;
                dx[1] = -one / (p.c * (r + p.r_c)) * uc;
            }
            1 => {
                let k = r / (r + p.r_c);
                dx[0] = (-p.r_l - p.r_d) / p.l * il - one / p.l * uc + p.e / p.l;
                dx[1] = k * (one / p.c - p.r_c * (p.r_l + p.r_d) / p.l) * il
                    - k * (p.r_c / p.l + one / (r * p.c)) * uc
                    + k * (p.r_c / p.l) * p.e;
            }
            _ => {
                dx[0] = T::zero();
                dx[1] = -one / ((r + p.r_c) * p.c) * uc;
            }
        }
        dx[2] = T::zero();
    }
}

struct ConverterMetric<T>(ConverterParams<T>);

impl<T: Scalar> MetricDynamics<T> for ConverterMetric<T> {
    fn flow(&self, _mode: usize, _t: T, x: &[T], dpr: &mut [T]) {
        let p = &self.0;
        let (uc, r) = (x[1], x[2]);
        let e = r / (r + p.r_c) * uc - p.v_d;
        dpr[0] = e * e;
        dpr[1] = T::one();
    }

    fn update(&self, _from: usize, _to: usize, _t: T, _x: &[T], _pr: &mut [T]) {}
}

/// Output voltage `R/(R + rC) * uC` of the converter state `[iL, uC, R]`.
pub fn converter_output<T: Scalar>(x: &[T], r_c: T) -> T {
    x[2] / (x[2] + r_c) * x[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_system;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn native_matches_exported_config() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for id in NAMED_IDS {
            let named = load_named::<f64>(id).unwrap();
            let reparsed = ConfigDocument::parse(&named.document.to_toml().unwrap()).unwrap();
            assert_eq!(reparsed, named.document);
            let (sys, metric) = reparsed.build::<f64>().unwrap();
            let n = sys.dim();
            let w = metric.width();
            for _ in 0..100 {
                let mode = rng.gen_range(0..sys.num_modes());
                let x: Vec<f64> = sys.domain.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect();
                let t = rng.gen_range(0.0..10.0);
                let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
                named.system.field.eval(mode, t, &x, &mut a);
                sys.field.eval(mode, t, &x, &mut b);
                assert!(a.iter().zip(&b).all(|(p, q)| close(*p, *q)), "{id} field {a:?} {b:?}");
                let (mut a, mut b) = (vec![0.0; w], vec![0.0; w]);
                named.metric.dynamics.flow(mode, t, &x, &mut a);
                metric.dynamics.flow(mode, t, &x, &mut b);
                assert!(a.iter().zip(&b).all(|(p, q)| close(*p, *q)), "{id} metric {a:?} {b:?}");
                let to = (mode + 1) % sys.num_modes();
                let mut a: Vec<f64> = (0..w).map(|_| rng.gen_range(0.0..5.0)).collect();
                let mut b = a.clone();
                named.metric.dynamics.update(mode, to, t, &x, &mut a);
                metric.dynamics.update(mode, to, t, &x, &mut b);
                assert!(a.iter().zip(&b).all(|(p, q)| close(*p, *q)), "{id} update");
            }
        }
    }

    #[test]
    fn every_named_system_validates() {
        for id in NAMED_IDS {
            let named = load_named::<f64>(id).unwrap();
            let diags = validate_system(&named.system, &named.metric);
            assert!(diags.is_empty(), "{id}: {diags:?}");
            named.reference_logic().unwrap();
        }
        assert!(matches!(load_named::<f64>("nope"), Err(Error::UnknownSystem(_))));
    }

    #[test]
    fn converter_idle_mode_keeps_current() {
        let named = load_named::<f64>("buck-boost").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = [rng.gen_range(-5.0..10.0), rng.gen_range(0.0..20.0), rng.gen_range(100.0..200.0)];
            assert_eq!(named.system.eval_field(2, 0.0, &x)[0], 0.0);
        }
    }

    #[test]
    fn thermostat_off_decays_toward_outside() {
        let named = load_named::<f64>("thermostat").unwrap();
        for temp in [17.0, 20.0, 25.0, 39.0] {
            assert!(named.system.eval_field(0, 0.0, &[temp, 16.0])[0] < 0.0);
        }
    }

    #[test]
    fn f32_systems_load() {
        for id in NAMED_IDS {
            load_named::<f32>(id).unwrap();
        }
    }
}
