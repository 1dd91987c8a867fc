//! Scenario files: loading, validation, unit conversion, and running the
//! selected engines into a report.
//!
//! Scenarios are TOML. Unknown keys are rejected everywhere.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::constants::{si_to_natural, UnitSystem};
use crate::error::{invalid, Error, Result};
use crate::phases::{
    ampere_reduction_phase, coulomb_cross_energy, electric_field_overlap_phase, electric_potential_phase,
    field_overlap_phase, flux_phase, overlap_self_term, shell_linking_with, solenoid_axis_reduction_phase,
    wilson_loop_phase, ElectricScenario, MagneticScenario, ShellDiagnostics, ShellOptions,
};
use crate::quadrature::QuadratureSpec;
use crate::result::{Method, PhaseResult};
use crate::sources::{
    ChargeTrajectory, CurrentLoop, CurrentSource, FiniteSolenoid, IdealSolenoid, PolylineCurrent, StaticChargeConfig,
    ToroidalCoil, TrajectoryPath,
};
use crate::vector::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Magnetic,
    Electric,
    EnergyIdentity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodSelector {
    #[serde(alias = "wilson")]
    WilsonLoop,
    #[serde(alias = "flux")]
    EnclosedFlux,
    #[serde(alias = "overlap")]
    FieldOverlap,
    AxisReduction,
    AmpereReduction,
    ShellLinking,
    ElectricPotential,
    ElectricFieldOverlap,
    CrossEnergy,
}

impl MethodSelector {
    pub fn method(self) -> Option<Method> {
        Some(match self {
            MethodSelector::WilsonLoop => Method::WilsonLoop,
            MethodSelector::EnclosedFlux => Method::EnclosedFlux,
            MethodSelector::FieldOverlap => Method::FieldOverlap,
            MethodSelector::AxisReduction => Method::AxisReduction,
            MethodSelector::AmpereReduction => Method::AmpereReduction,
            MethodSelector::ShellLinking => Method::ShellLinking,
            MethodSelector::ElectricPotential => Method::ElectricPotential,
            MethodSelector::ElectricFieldOverlap => Method::ElectricFieldOverlap,
            MethodSelector::CrossEnergy => return None,
        })
    }

    pub fn kind(self) -> ScenarioKind {
        match self {
            MethodSelector::ElectricPotential | MethodSelector::ElectricFieldOverlap => ScenarioKind::Electric,
            MethodSelector::CrossEnergy => ScenarioKind::EnergyIdentity,
            _ => ScenarioKind::Magnetic,
        }
    }
}

/// Finite solenoid with the winding count given directly or per unit length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteSolenoidSpec {
    pub center: Vec3,
    pub axis_dir: Vec3,
    pub radius: f64,
    pub length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_loops: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loops_per_length: Option<f64>,
    pub current: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceSpec {
    IdealInfiniteSolenoid(IdealSolenoid),
    FiniteSolenoid(FiniteSolenoidSpec),
    ToroidalCoil(ToroidalCoil),
    CurrentLoop(CurrentLoop),
    PolylineCurrent(PolylineCurrent),
}

impl SourceSpec {
    pub fn resolve(&self) -> Result<CurrentSource> {
        let s = match self {
            SourceSpec::IdealInfiniteSolenoid(s) => CurrentSource::IdealInfiniteSolenoid(s.clone()),
            SourceSpec::FiniteSolenoid(f) => {
                let n_loops = match (f.n_loops, f.loops_per_length) {
                    (Some(n), None) => n,
                    (None, Some(d)) => {
                        if !(d > 0.0 && d.is_finite()) {
                            return Err(invalid("loops_per_length", "must be positive"));
                        }
                        (d * f.length).round().max(1.0) as usize
                    }
                    _ => return Err(invalid("n_loops", "give exactly one of n_loops and loops_per_length")),
                };
                CurrentSource::FiniteSolenoid(FiniteSolenoid {
                    center: f.center,
                    axis_dir: f.axis_dir,
                    radius: f.radius,
                    length: f.length,
                    n_loops,
                    current: f.current,
                })
            }
            SourceSpec::ToroidalCoil(c) => CurrentSource::ToroidalCoil(c.clone()),
            SourceSpec::CurrentLoop(l) => CurrentSource::CurrentLoop(l.clone()),
            SourceSpec::PolylineCurrent(p) => CurrentSource::PolylineCurrent(p.clone()),
        };
        s.validate()?;
        Ok(s)
    }

    fn scale(&mut self, current: f64, flux: f64) {
        match self {
            SourceSpec::IdealInfiniteSolenoid(s) => s.total_flux *= flux,
            SourceSpec::FiniteSolenoid(f) => f.current *= current,
            SourceSpec::ToroidalCoil(c) => c.current *= current,
            SourceSpec::CurrentLoop(l) => l.current *= current,
            SourceSpec::PolylineCurrent(p) => p.current *= current,
        }
    }
}

/// Two point charges for the field-energy identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargePair {
    pub q1: f64,
    pub x1: Vec3,
    pub q2: f64,
    pub x2: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Dotted path into the scenario, e.g. `source.length`.
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub units: UnitSystem,
    pub methods: Vec<MethodSelector>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<ChargeTrajectory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charges: Option<StaticChargeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<ChargePair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shell: Option<ShellOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn parse_error(text: &str, e: &toml::de::Error) -> Error {
    let (line, column) = match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    Error::Parse { line, column, message: e.message().to_string() }
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}

impl ScenarioConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods", "select at least one method"));
        }
        if let Some(m) = self.methods.iter().find(|m| m.kind() != self.kind) {
            return Err(invalid("methods", format!("{m:?} does not apply to a {:?} scenario", self.kind)));
        }
        self.quadrature.validate()?;
        let present = [
            ("source", self.source.is_some()),
            ("trajectory", self.trajectory.is_some()),
            ("charges", self.charges.is_some()),
            ("pair", self.pair.is_some()),
        ];
        let needed: &[&str] = match self.kind {
            ScenarioKind::Magnetic => &["source", "trajectory"],
            ScenarioKind::Electric => &["charges"],
            ScenarioKind::EnergyIdentity => &["pair"],
        };
        for (name, is_present) in present {
            if needed.contains(&name) != is_present {
                let message = if is_present { "not used by this kind of scenario" } else { "required by this kind of scenario" };
                return Err(invalid(name, message));
            }
        }
        if let Some(s) = &self.source {
            s.resolve()?;
        }
        if let Some(t) = &self.trajectory {
            t.validate()?;
        }
        if let Some(c) = &self.charges {
            c.validate()?;
        }
        if let Some(p) = &self.pair {
            if !(p.q1.is_finite() && p.q2.is_finite()) {
                return Err(invalid("pair", "charges must be finite"));
            }
            if !(p.x1.distance(p.x2) > 0.0) {
                return Err(invalid("pair", "charges must be at distinct points"));
            }
        }
        if let Some(s) = &self.shell {
            s.validate()?;
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(invalid("sweep", "values must not be empty"));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(invalid("sweep", "values must be finite"));
            }
            let table = toml::Value::try_from(self).map_err(|e| Error::Io(e.to_string()))?;
            match lookup(&table, &s.parameter) {
                Some(toml::Value::Float(_)) | Some(toml::Value::Integer(_)) => {}
                _ => return Err(invalid("sweep", format!("'{}' is not a numeric field", s.parameter))),
            }
        }
        Ok(())
    }

    /// Same scenario expressed in `target` units. Lengths are metres in both
    /// systems; charges, currents, fluxes and times are rescaled.
    pub fn converted(&self, target: UnitSystem) -> ScenarioConfig {
        let mut c = self.clone();
        if self.units == target {
            return c;
        }
        let dir = if target == UnitSystem::Natural { 1.0 } else { -1.0 };
        let f = |x: f64| x.powf(dir);
        let (charge, time, current, flux) =
            (f(si_to_natural::charge()), f(si_to_natural::time()), f(si_to_natural::current()), f(si_to_natural::flux()));
        if let Some(s) = &mut c.source {
            s.scale(current, flux);
        }
        if let Some(t) = &mut c.trajectory {
            t.charge *= charge;
            match &mut t.path {
                TrajectoryPath::CircularOrbit { period, .. } => *period *= time,
                TrajectoryPath::PiecewiseLinearLoop { durations, .. } => durations.iter_mut().for_each(|d| *d *= time),
            }
        }
        if let Some(ch) = &mut c.charges {
            ch.external_charges.iter_mut().for_each(|e| e.charge *= charge);
            ch.test_charge.charge *= charge;
            ch.dwell_time *= time;
        }
        if let Some(p) = &mut c.pair {
            p.q1 *= charge;
            p.q2 *= charge;
        }
        c.units = target;
        c
    }

    /// Copy with the numeric field at `path` set to `value`.
    pub fn with_parameter(&self, path: &str, value: f64) -> Result<ScenarioConfig> {
        let mut table = toml::Value::try_from(self).map_err(|e| Error::Io(e.to_string()))?;
        let slot = lookup_mut(&mut table, path).ok_or_else(|| invalid("sweep", format!("no field '{path}'")))?;
        *slot = match slot {
            toml::Value::Integer(_) if value.fract() == 0.0 => toml::Value::Integer(value as i64),
            toml::Value::Integer(_) => return Err(invalid("sweep", format!("'{path}' takes integers, got {value}"))),
            toml::Value::Float(_) => toml::Value::Float(value),
            _ => return Err(invalid("sweep", format!("'{path}' is not a numeric field"))),
        };
        let cfg: ScenarioConfig = table.try_into().map_err(|e: toml::de::Error| invalid("sweep", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn lookup<'a>(v: &'a toml::Value, path: &str) -> Option<&'a toml::Value> {
    path.split('.').try_fold(v, |v, key| match v {
        toml::Value::Table(t) => t.get(key),
        toml::Value::Array(a) => a.get(key.parse::<usize>().ok()?),
        _ => None,
    })
}

fn lookup_mut<'a>(v: &'a mut toml::Value, path: &str) -> Option<&'a mut toml::Value> {
    path.split('.').try_fold(v, |v, key| match v {
        toml::Value::Table(t) => t.get_mut(key),
        toml::Value::Array(a) => a.get_mut(key.parse::<usize>().ok()?),
        _ => None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    /// Overrides `quadrature.rel_tol`.
    pub rel_tol: Option<f64>,
    /// Convert the scenario before running.
    pub units: Option<UnitSystem>,
    pub diagnostics: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub method: String,
    /// Phase in radians, or energy in J for the energy identity.
    pub value: Option<f64>,
    pub error_estimate: Option<f64>,
    pub normalized: Option<f64>,
    pub n_evaluations: u64,
    pub wall_ms: f64,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deviation {
    pub a: String,
    pub b: String,
    /// `|normalized_a - normalized_b|`, or the raw difference without a reference.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RunDiagnostics {
    /// Magnitude of the omitted self-interaction term, rad.
    pub self_term: Option<f64>,
    pub self_term_error: Option<String>,
    pub shell: Option<ShellDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub kind: ScenarioKind,
    pub units: UnitSystem,
    /// Value that normalized results are divided by.
    pub reference: Option<f64>,
    pub outcomes: Vec<MethodOutcome>,
    pub deviations: Vec<Deviation>,
    pub diagnostics: Option<RunDiagnostics>,
}

impl RunReport {
    pub fn all_converged(&self) -> bool {
        self.outcomes.iter().all(|o| o.converged)
    }

    pub fn outcome(&self, method: &str) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == method)
    }
}

fn outcome_of(method: String, r: Result<PhaseResult>, reference: Option<f64>, wall_ms: f64) -> MethodOutcome {
    match r {
        Ok(p) => MethodOutcome {
            method,
            value: Some(p.phase),
            error_estimate: Some(p.abs_error_estimate),
            normalized: reference.filter(|r| *r != 0.0).map(|r| p.phase / r),
            n_evaluations: p.n_evaluations,
            wall_ms,
            converged: p.converged,
            error: None,
        },
        Err(e) => MethodOutcome {
            method,
            value: None,
            error_estimate: None,
            normalized: None,
            n_evaluations: 0,
            wall_ms,
            converged: false,
            error: Some(e.to_string()),
        },
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed().as_secs_f64() * 1e3)
}

#[cfg(feature = "parallel")]
fn map_methods<U: Send>(m: &[MethodSelector], f: impl Fn(MethodSelector) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    m.par_iter().map(|&x| f(x)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_methods<U>(m: &[MethodSelector], f: impl Fn(MethodSelector) -> U) -> Vec<U> {
    m.iter().map(|&x| f(x)).collect()
}

pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunReport> {
    let cfg = cfg.converted(opts.units.unwrap_or(cfg.units));
    cfg.validate()?;
    let mut spec = cfg.quadrature;
    if let Some(r) = opts.rel_tol {
        spec = spec.with_rel_tol(r);
        spec.validate()?;
    }
    let k = cfg.units.constants();
    let mut diagnostics = opts.diagnostics.then(RunDiagnostics::default);
    let (reference, outcomes) = match cfg.kind {
        ScenarioKind::Magnetic => {
            let source = cfg.source.as_ref().ok_or_else(|| invalid("source", "missing"))?.resolve()?;
            let trajectory = cfg.trajectory.clone().ok_or_else(|| invalid("trajectory", "missing"))?;
            let s = MagneticScenario::new(source, trajectory, k);
            let reference = s.reference_phase();
            let shell_opts = cfg.shell.unwrap_or_default();
            let runs = map_methods(&cfg.methods, |m| {
                let mut shell = None;
                let (r, ms) = timed(|| match m {
                    MethodSelector::WilsonLoop => wilson_loop_phase(&s, &spec),
                    MethodSelector::EnclosedFlux => flux_phase(&s, &spec),
                    MethodSelector::FieldOverlap => field_overlap_phase(&s, &spec),
                    MethodSelector::AxisReduction => solenoid_axis_reduction_phase(&s, &spec),
                    MethodSelector::AmpereReduction => ampere_reduction_phase(&s, &spec),
                    MethodSelector::ShellLinking => shell_linking_with(&s, &shell_opts, &spec).map(|o| {
                        shell = Some(o.diagnostics);
                        o.result
                    }),
                    _ => Err(Error::Unsupported(format!("{m:?} in a magnetic scenario"))),
                });
                (outcome_of(method_name(m), r, reference, ms), shell)
            });
            let mut outcomes = Vec::new();
            for (o, shell) in runs {
                if let (Some(d), Some(sd)) = (diagnostics.as_mut(), shell) {
                    d.shell = Some(sd);
                }
                outcomes.push(o);
            }
            if let Some(d) = diagnostics.as_mut() {
                match overlap_self_term(&s, &spec) {
                    Ok(r) => d.self_term = Some(r.value),
                    Err(e) => d.self_term_error = Some(e.to_string()),
                }
            }
            (reference, outcomes)
        }
        ScenarioKind::Electric => {
            let s = ElectricScenario::new(cfg.charges.clone().ok_or_else(|| invalid("charges", "missing"))?, k);
            let reference = Some(s.closed_form_phase());
            let outcomes = map_methods(&cfg.methods, |m| {
                let (r, ms) = timed(|| match m {
                    MethodSelector::ElectricPotential => electric_potential_phase(&s),
                    MethodSelector::ElectricFieldOverlap => electric_field_overlap_phase(&s, &spec),
                    _ => Err(Error::Unsupported(format!("{m:?} in an electric scenario"))),
                });
                outcome_of(method_name(m), r, reference, ms)
            });
            (reference, outcomes)
        }
        ScenarioKind::EnergyIdentity => {
            let p = cfg.pair.clone().ok_or_else(|| invalid("pair", "missing"))?;
            let (r, ms) = timed(|| coulomb_cross_energy(p.q1, p.x1, p.q2, p.x2, &k, &spec));
            let analytic = k.coulomb_k() * p.q1 * p.q2 / p.x1.distance(p.x2);
            let reference = Some(analytic);
            let scale = analytic.abs();
            let outcomes = match r {
                Ok(e) => [("cross-energy", e.product), ("cross-energy-subtracted", e.difference)]
                    .into_iter()
                    .map(|(name, i)| MethodOutcome {
                        method: name.into(),
                        value: Some(i.value),
                        error_estimate: Some(i.error),
                        normalized: (scale != 0.0).then(|| i.value / e.analytic),
                        n_evaluations: i.n_evals,
                        wall_ms: ms,
                        converged: i.converged,
                        error: None,
                    })
                    .collect(),
                Err(e) => vec![outcome_of("cross-energy".into(), Err(e), reference, ms)],
            };
            (reference, outcomes)
        }
    };
    let deviations = deviations(&outcomes);
    Ok(RunReport { scenario: cfg.name.clone(), kind: cfg.kind, units: cfg.units, reference, outcomes, deviations, diagnostics })
}

fn method_name(m: MethodSelector) -> String {
    m.method().map_or("cross-energy", Method::name).to_string()
}

fn deviations(outcomes: &[MethodOutcome]) -> Vec<Deviation> {
    let mut out = Vec::new();
    for (i, a) in outcomes.iter().enumerate() {
        for b in &outcomes[i + 1..] {
            let value = match (a.normalized, b.normalized, a.value, b.value) {
                (Some(x), Some(y), _, _) => (x - y).abs(),
                (_, _, Some(x), Some(y)) => (x - y).abs(),
                _ => continue,
            };
            out.push(Deviation { a: a.method.clone(), b: b.method.clone(), value });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub report: Option<RunReport>,
    pub error: Option<String>,
}

/// Per-method trend across the sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Convergence {
    pub method: String,
    /// `|value / target - 1|` per row; the target is the row's enclosed-flux
    /// phase when computed, else the row's reference.
    pub deviations: Vec<Option<f64>>,
    pub deviation_monotone: bool,
    pub error_estimates: Vec<Option<f64>>,
    pub error_monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub scenario: String,
    pub parameter: String,
    pub rows: Vec<SweepRow>,
    pub convergence: Vec<Convergence>,
}

fn non_increasing(v: &[Option<f64>]) -> bool {
    let v: Vec<f64> = v.iter().flatten().copied().collect();
    v.windows(2).all(|w| w[1] <= w[0])
}

pub fn run_sweep(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<SweepReport> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| invalid("sweep", "scenario has no sweep section"))?;
    if sweep.values.is_empty() {
        return Err(invalid("sweep", "values must not be empty"));
    }
    let rows: Vec<SweepRow> = sweep
        .values
        .iter()
        .map(|&value| match cfg.with_parameter(&sweep.parameter, value).and_then(|c| run_scenario(&c, opts)) {
            Ok(r) => SweepRow { value, report: Some(r), error: None },
            Err(e) => SweepRow { value, report: None, error: Some(e.to_string()) },
        })
        .collect();
    let mut names: Vec<String> = Vec::new();
    for o in rows.iter().filter_map(|r| r.report.as_ref()).flat_map(|r| &r.outcomes) {
        if !names.contains(&o.method) {
            names.push(o.method.clone());
        }
    }
    let convergence = names
        .into_iter()
        .map(|method| {
            let mut deviations = Vec::new();
            let mut error_estimates = Vec::new();
            for row in &rows {
                let report = row.report.as_ref();
                let o = report.and_then(|r| r.outcome(&method));
                let target = report
                    .and_then(|r| r.outcome(Method::EnclosedFlux.name()))
                    .and_then(|f| f.value)
                    .or_else(|| report.and_then(|r| r.reference));
                deviations.push(match (o.and_then(|o| o.value), target) {
                    (Some(v), Some(t)) if t != 0.0 => Some((v / t - 1.0).abs()),
                    _ => None,
                });
                error_estimates.push(o.and_then(|o| o.error_estimate));
            }
            Convergence {
                deviation_monotone: non_increasing(&deviations) && deviations.iter().all(Option::is_some),
                error_monotone: non_increasing(&error_estimates) && error_estimates.iter().all(Option::is_some),
                method,
                deviations,
                error_estimates,
            }
        })
        .collect();
    Ok(SweepReport { scenario: cfg.name.clone(), parameter: sweep.parameter.clone(), rows, convergence })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2: &str = r#"
name = "fig2"
kind = "magnetic"
units = "natural"
methods = ["wilson", "flux", "overlap", "axis-reduction"]

[quadrature]
rel_tol = 1e-6

[source]
type = "ideal_infinite_solenoid"
axis_point = [0.0, 0.0, 0.0]
axis_dir = [0.0, 0.0, 1.0]
radius = 0.1
total_flux = 1.0

[trajectory]
charge = 1.0

[trajectory.path]
type = "circular_orbit"
center = [0.0, 0.0, 0.0]
normal = [0.0, 0.0, 1.0]
radius = 1.0
period = 1.0
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = parse_scenario(FIG2).unwrap();
        assert_eq!(cfg.methods[0], MethodSelector::WilsonLoop);
        assert!(matches!(cfg.source, Some(SourceSpec::IdealInfiniteSolenoid(_))));
        assert!(matches!(cfg.trajectory.as_ref().unwrap().path, TrajectoryPath::CircularOrbit { .. }));
        let again = parse_scenario(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn negative_radius_names_field() {
        let text = FIG2.replace("radius = 0.1", "radius = -0.1");
        match parse_scenario(&text) {
            Err(Error::Invalid { field, .. }) => assert_eq!(field, "radius"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected_with_position() {
        let text = FIG2.replace("units = \"natural\"", "units = \"natural\"\nspin = 0.5");
        match parse_scenario(&text) {
            Err(Error::Parse { line, message, .. }) => {
                assert!(message.contains("spin"), "{message}");
                assert_eq!(line, 5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn method_kind_mismatch_rejected() {
        let text = FIG2.replace("\"axis-reduction\"]", "\"electric-potential\"]");
        assert!(matches!(parse_scenario(&text), Err(Error::Invalid { field: "methods", .. })));
    }

    #[test]
    fn run_fig2() {
        let cfg = parse_scenario(FIG2).unwrap();
        let r = run_scenario(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(r.outcomes.len(), 4);
        for o in &r.outcomes {
            assert!((o.normalized.unwrap() - 1.0).abs() < 1e-4, "{o:?}");
            assert!(o.converged);
        }
        assert_eq!(r.deviations.len(), 6);
        let d = &r.deviations[0];
        let (a, b) = (r.outcome(&d.a).unwrap(), r.outcome(&d.b).unwrap());
        assert_eq!(d.value, (a.normalized.unwrap() - b.normalized.unwrap()).abs());
    }

    #[test]
    fn engine_errors_stay_per_method() {
        let text = FIG2.replace("radius = 1.0", "radius = 0.05");
        let cfg = parse_scenario(&text).unwrap();
        let r = run_scenario(&cfg, &RunOptions::default()).unwrap();
        assert!(r.outcome("field-overlap").unwrap().error.is_some());
        assert!(r.outcome("wilson-loop").unwrap().error.is_none());
        assert!(!r.all_converged());
    }

    #[test]
    fn unit_conversion_preserves_phases() {
        let cfg = parse_scenario(&FIG2.replace("\"overlap\", \"axis-reduction\"", "\"axis-reduction\"")).unwrap();
        let si = cfg.converted(UnitSystem::Si);
        assert_eq!(si.units, UnitSystem::Si);
        assert!((si.converted(UnitSystem::Natural).trajectory.unwrap().charge - 1.0).abs() < 1e-12);
        let a = run_scenario(&cfg, &RunOptions::default()).unwrap();
        let b = run_scenario(&si, &RunOptions::default()).unwrap();
        for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
            assert!((x.value.unwrap() - y.value.unwrap()).abs() < 1e-9, "{x:?} {y:?}");
        }
    }

    #[test]
    fn loops_per_length_resolves() {
        let spec = SourceSpec::FiniteSolenoid(FiniteSolenoidSpec {
            center: Vec3::ZERO,
            axis_dir: Vec3::Z,
            radius: 1.0,
            length: 20.0,
            n_loops: None,
            loops_per_length: Some(2.0),
            current: 1.0,
        });
        match spec.resolve().unwrap() {
            CurrentSource::FiniteSolenoid(f) => assert_eq!(f.n_loops, 40),
            _ => unreachable!(),
        }
    }

    #[test]
    fn sweep_sets_parameter_and_checks_trend() {
        let mut cfg = parse_scenario(FIG2).unwrap();
        cfg.methods = vec![MethodSelector::WilsonLoop, MethodSelector::EnclosedFlux];
        cfg.sweep = Some(SweepSpec { parameter: "source.total_flux".into(), values: vec![0.5, 2.0] });
        cfg.validate().unwrap();
        let r = run_sweep(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(r.rows.len(), 2);
        let w = r.rows[1].report.as_ref().unwrap().outcome("wilson-loop").unwrap();
        assert!((w.value.unwrap() - 2.0).abs() < 1e-9);
        assert!(r.convergence.iter().all(|c| c.deviations.iter().all(|d| d.unwrap() < 1e-9)));

        cfg.sweep = Some(SweepSpec { parameter: "source.total_flux".into(), values: vec![] });
        assert!(cfg.validate().is_err());
        assert!(run_sweep(&cfg, &RunOptions::default()).is_err());
        cfg.sweep = Some(SweepSpec { parameter: "source.colour".into(), values: vec![1.0] });
        assert!(matches!(cfg.validate(), Err(Error::Invalid { field: "sweep", .. })));
    }

    #[test]
    fn sweep_row_failures_recorded() {
        let mut cfg = parse_scenario(FIG2).unwrap();
        cfg.methods = vec![MethodSelector::EnclosedFlux];
        cfg.sweep = Some(SweepSpec { parameter: "source.radius".into(), values: vec![0.2, -1.0, 0.3] });
        let r = run_sweep(&cfg, &RunOptions::default()).unwrap();
        assert!(r.rows[0].report.is_some() && r.rows[2].report.is_some());
        assert!(r.rows[1].error.as_ref().unwrap().contains("radius"));
    }
}
