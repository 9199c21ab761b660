//! Scenario files. Energies are given in μeV and times in ps; everything is
//! converted to rad/ns and ns on load.
//!
//! A file may carry `[[variants]]`, each a named overlay merged onto the
//! base document (tables merge key by key, arrays and scalars replace).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::dynamics::{
    AmplitudeOptions, ControlSchedule, MasterOptions, OdeOptions, Profile, Segment, DEFAULT_ADIABATIC_THRESHOLD,
};
use crate::params::{dipole_rates, energy_to_angular, DipoleGeometry, ParamsError, PhysicalParams};
use crate::protocols::{
    EmissionOutputs, EmissionScenario, GateStart, InitialState, MemoryScenario, ReleaseGate, StoreGate,
};
use crate::signal::WignerOptions;

pub const SCENARIO_PATH_ENV: &str = "DUOATOM_SCENARIO_PATH";

pub const BUILTIN: &[(&str, &str)] = &[
    ("fig2", include_str!("../scenarios/fig2.toml")),
    ("fig3", include_str!("../scenarios/fig3.toml")),
    ("fig4", include_str!("../scenarios/fig4.toml")),
    ("fig5", include_str!("../scenarios/fig5.toml")),
    ("fig6", include_str!("../scenarios/fig6.toml")),
];

const PS: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown scenario `{0}`: not a file and not a built-in (fig2, fig3, fig4, fig5, fig6)")]
    UnknownScenario(String),
    #[error("{source_name}: missing required keys: {}", .keys.join(", "))]
    MissingKeys { source_name: String, keys: Vec<String> },
    #[error("{source_name}{}: {message}", fmt_line(.line))]
    Parse {
        source_name: String,
        line: Option<usize>,
        message: String,
    },
    #[error("{source_name}{}: invalid `{key}`: {message}", fmt_line(.line))]
    Invalid {
        source_name: String,
        key: String,
        line: Option<usize>,
        message: String,
    },
}

fn fmt_line(line: &Option<usize>) -> String {
    line.map(|l| format!(":{l}")).unwrap_or_default()
}

impl ConfigError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Parse { line, .. } | ConfigError::Invalid { line, .. } => *line,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Eigen,
    Emission,
    Memory,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDoc {
    name: Option<String>,
    description: Option<String>,
    kind: ScenarioKind,
    physics: PhysicsDoc,
    #[serde(default)]
    integrator: IntegratorDoc,
    schedule: Option<ScheduleDoc>,
    emission: Option<EmissionDoc>,
    memory: Option<MemoryDoc>,
    #[serde(default)]
    scan: ScanDoc,
    #[serde(default)]
    variants: Vec<Table>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhysicsDoc {
    g_uev: f64,
    kappa_uev: f64,
    gamma_uev: f64,
    omega12_uev: Option<f64>,
    gamma12_over_gamma: Option<f64>,
    separation_nm: Option<f64>,
    wavelength_nm: Option<f64>,
    refractive_index: Option<f64>,
    cavity_offset_uev: Option<f64>,
    /// Puts the cavity on the |−⟩_eff line at this detuning.
    cavity_resonant_delta12_uev: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegratorDoc {
    rtol: Option<f64>,
    atol: Option<f64>,
    max_step_ps: Option<f64>,
    sample_dt_ps: Option<f64>,
    n_max: Option<usize>,
    check_positivity: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleDoc {
    t_end_ps: f64,
    #[serde(default)]
    omega0_tracking: bool,
    #[serde(default)]
    delta12: Vec<SegmentDoc>,
    #[serde(default)]
    omega0: Vec<SegmentDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum SegmentDoc {
    Const {
        value_uev: f64,
    },
    Ramp {
        start_ps: f64,
        duration_ps: f64,
        from_uev: f64,
        to_uev: f64,
    },
    Gauss {
        center_ps: f64,
        fwhm_ps: f64,
        peak_uev: f64,
    },
}

impl SegmentDoc {
    fn resolve(&self) -> Segment {
        let e = energy_to_angular;
        match *self {
            SegmentDoc::Const { value_uev } => Segment::Const { value: e(value_uev) },
            SegmentDoc::Ramp {
                start_ps,
                duration_ps,
                from_uev,
                to_uev,
            } => Segment::Ramp {
                start: start_ps * PS,
                duration: duration_ps * PS,
                from: e(from_uev),
                to: e(to_uev),
            },
            SegmentDoc::Gauss {
                center_ps,
                fwhm_ps,
                peak_uev,
            } => Segment::Gauss {
                center: center_ps * PS,
                fwhm: fwhm_ps * PS,
                peak: e(peak_uev),
            },
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmissionDoc {
    initial: Option<InitialDoc>,
    #[serde(default)]
    equalize: bool,
    #[serde(default)]
    allow_nonadiabatic: bool,
    adiabatic_threshold: Option<f64>,
    #[serde(default)]
    kernel: bool,
    #[serde(default)]
    wigner: bool,
    #[serde(default)]
    spectrum: bool,
    window_center_uev: Option<f64>,
    window_half_width_uev: Option<f64>,
    pad_factor: Option<usize>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum InitialDoc {
    MinusEff,
    PlusEff,
    Dark,
    CavityPhoton,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum GateDoc {
    At(f64),
    Word(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemoryDoc {
    pulse_center_ps: f64,
    pulse_fwhm_ps: f64,
    mean_photons: f64,
    absorb_delta12_uev: f64,
    store_start_ps: Option<GateDoc>,
    store_duration_ps: Option<f64>,
    release_time_ps: Option<f64>,
    release_duration_ps: Option<f64>,
    release_delta12_uev: Option<f64>,
    t_end_ps: f64,
    #[serde(default)]
    allow_nonadiabatic: bool,
    adiabatic_threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanDoc {
    max_over_kappa: Option<f64>,
    points: Option<usize>,
    delta12_uev: Option<Vec<f64>>,
    offsets_ps: Option<Vec<f64>>,
}

/// Emission settings resolved from a scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionSettings {
    pub scenario: EmissionScenario,
    /// Raise later Δ₁₂ pulses to match the first pulse's peak power.
    pub equalize: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScanSettings {
    /// Eigen-scan detuning grid, rad/ns.
    pub eigen_grid: Vec<f64>,
    /// Bandwidth-scan absorb detunings, rad/ns.
    pub bandwidth_grid: Vec<f64>,
    /// Timing-scan gate offsets, ns.
    pub timing_offsets: Vec<f64>,
}

/// One fully resolved run description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub variant: Option<String>,
    pub kind: ScenarioKind,
    pub description: Option<String>,
    pub params: PhysicalParams,
    pub schedule: Option<ControlSchedule>,
    pub emission: Option<EmissionSettings>,
    pub memory: Option<MemoryScenario>,
    pub scan: ScanSettings,
    /// The merged document this scenario was built from.
    pub document: Table,
}

impl Scenario {
    /// `name` or `name/variant`.
    pub fn label(&self) -> String {
        match &self.variant {
            Some(v) => format!("{}_{}", self.name, v),
            None => self.name.clone(),
        }
    }

    /// Overrides the relative tolerance of every integrator in the scenario.
    pub fn set_rtol(&mut self, rtol: f64) {
        if let Some(e) = &mut self.emission {
            e.scenario.integrator.ode.rtol = rtol;
        }
        if let Some(m) = &mut self.memory {
            m.integrator.ode.rtol = rtol;
        }
    }
}

/// Finds the line of the first `key = ...` assignment.
pub fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key)
            .map(|rest| rest.trim_start().starts_with('='))
            .unwrap_or(false)
    })
    .map(|i| i + 1)
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn missing_required(doc: &Table) -> Vec<String> {
    let mut missing = Vec::new();
    if !doc.contains_key("kind") {
        missing.push("kind".to_string());
    }
    let physics = doc.get("physics").and_then(Value::as_table);
    for key in ["g_uev", "kappa_uev", "gamma_uev"] {
        if !physics.is_some_and(|p| p.contains_key(key)) {
            missing.push(format!("physics.{key}"));
        }
    }
    let has_geometry = physics.is_some_and(|p| p.contains_key("separation_nm"));
    if !has_geometry {
        for key in ["omega12_uev", "gamma12_over_gamma"] {
            if !physics.is_some_and(|p| p.contains_key(key)) {
                missing.push(format!("physics.{key}"));
            }
        }
    }
    if !physics.is_some_and(|p| p.contains_key("cavity_offset_uev") || p.contains_key("cavity_resonant_delta12_uev")) {
        missing.push("physics.cavity_offset_uev".to_string());
    }
    missing
}

/// Tables merge recursively; every other value replaces.
fn merge(base: &mut Table, overlay: &Table) {
    for (k, v) in overlay {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

struct Ctx<'a> {
    source_name: &'a str,
    text: &'a str,
}

impl Ctx<'_> {
    fn invalid(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            source_name: self.source_name.to_string(),
            key: key.to_string(),
            line: line_of(self.text, key),
            message: message.into(),
        }
    }

    fn parse_error(&self, e: &toml::de::Error, generated: Option<&str>) -> ConfigError {
        let line = match generated {
            None => e.span().map(|s| line_at(self.text, s.start)),
            // locate the offending key of a merged variant in the original text
            Some(g) => e
                .span()
                .and_then(|s| g.lines().nth(line_at(g, s.start) - 1))
                .and_then(|l| l.split('=').next())
                .and_then(|k| line_of(self.text, k.trim())),
        };
        ConfigError::Parse {
            source_name: self.source_name.to_string(),
            line,
            message: e.message().to_string(),
        }
    }
}

fn params_key(e: &ParamsError) -> &'static str {
    match e {
        ParamsError::CrossDampingTooLarge { .. } => "gamma12_over_gamma",
        ParamsError::NotFinite { name, .. } | ParamsError::NegativeRate { name, .. } => match *name {
            "g" => "g_uev",
            "kappa" => "kappa_uev",
            "gamma" => "gamma_uev",
            "gamma12" => "gamma12_over_gamma",
            "omega12" => "omega12_uev",
            "omega_c" => "cavity_offset_uev",
            _ => "separation_nm",
        },
        ParamsError::NearFieldInvalid { .. } | ParamsError::NonPositiveGeometry { .. } => "separation_nm",
        ParamsError::ZeroRate(_) => "kappa_uev",
    }
}

fn positive(ctx: &Ctx, key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ctx.invalid(key, format!("must be positive, got {v}")))
    }
}

fn resolve_params(ctx: &Ctx, p: &PhysicsDoc) -> Result<PhysicalParams, ConfigError> {
    let gamma = energy_to_angular(p.gamma_uev);
    let (omega12, gamma12) = match (p.separation_nm, p.omega12_uev, p.gamma12_over_gamma) {
        (Some(d), None, None) => {
            let mut geom = DipoleGeometry::new(d);
            if let Some(w) = p.wavelength_nm {
                geom.wavelength_nm = w;
            }
            if let Some(n) = p.refractive_index {
                geom.refractive_index = n;
            }
            dipole_rates(&geom, gamma).map_err(|e| ctx.invalid(params_key(&e), e.to_string()))?
        }
        (None, Some(o), Some(r)) => {
            if p.wavelength_nm.is_some() || p.refractive_index.is_some() {
                return Err(ctx.invalid("wavelength_nm", "geometry keys need separation_nm"));
            }
            if !(0.0..=1.0).contains(&r) {
                return Err(ctx.invalid("gamma12_over_gamma", format!("must lie in [0, 1], got {r}")));
            }
            (energy_to_angular(o), gamma * r)
        }
        (Some(_), _, _) => {
            return Err(ctx.invalid(
                "separation_nm",
                "give either separation_nm or omega12_uev with gamma12_over_gamma, not both",
            ))
        }
        _ => {
            return Err(ctx.invalid(
                "omega12_uev",
                "omega12_uev and gamma12_over_gamma must be given together",
            ))
        }
    };
    let omega_c = match (p.cavity_offset_uev, p.cavity_resonant_delta12_uev) {
        (Some(o), None) => energy_to_angular(o),
        (None, Some(d)) => -energy_to_angular(d).hypot(omega12),
        _ => {
            return Err(ctx.invalid(
                "cavity_offset_uev",
                "give exactly one of cavity_offset_uev and cavity_resonant_delta12_uev",
            ))
        }
    };
    PhysicalParams::new(
        energy_to_angular(p.g_uev),
        energy_to_angular(p.kappa_uev),
        gamma,
        gamma12,
        omega12,
        omega_c,
    )
    .map_err(|e| ctx.invalid(params_key(&e), e.to_string()))
}

fn resolve_ode(ctx: &Ctx, i: &IntegratorDoc, base: OdeOptions) -> Result<OdeOptions, ConfigError> {
    let mut ode = base;
    if let Some(r) = i.rtol {
        ode.rtol = positive(ctx, "rtol", r)?;
    }
    if let Some(a) = i.atol {
        ode.atol = positive(ctx, "atol", a)?;
    }
    if let Some(h) = i.max_step_ps {
        ode.max_step = positive(ctx, "max_step_ps", h)? * PS;
    }
    Ok(ode)
}

fn resolve_schedule(ctx: &Ctx, s: &ScheduleDoc) -> Result<ControlSchedule, ConfigError> {
    let t_end = positive(ctx, "t_end_ps", s.t_end_ps)? * PS;
    let mut ctrl = ControlSchedule::new(
        Profile::from_segments(s.delta12.iter().map(SegmentDoc::resolve).collect()),
        t_end,
    );
    ctrl.omega0 = Profile::from_segments(s.omega0.iter().map(SegmentDoc::resolve).collect());
    ctrl.omega0_tracking = s.omega0_tracking;
    ctrl.validate().map_err(|e| ctx.invalid("delta12", e.to_string()))?;
    Ok(ctrl)
}

fn resolve(ctx: &Ctx, doc: FileDoc, variant: Option<String>, document: Table) -> Result<Scenario, ConfigError> {
    let params = resolve_params(ctx, &doc.physics)?;
    let i = &doc.integrator;
    let sample_dt = i
        .sample_dt_ps
        .map(|v| positive(ctx, "sample_dt_ps", v).map(|v| v * PS))
        .transpose()?;

    let schedule = doc.schedule.as_ref().map(|s| resolve_schedule(ctx, s)).transpose()?;

    let emission = match doc.kind {
        ScenarioKind::Emission => {
            let schedule = schedule
                .clone()
                .ok_or_else(|| ctx.invalid("schedule", "emission scenarios need a [schedule] table"))?;
            let e = doc.emission.unwrap_or_default();
            let mut s = EmissionScenario::new(params, schedule);
            s.integrator = AmplitudeOptions {
                ode: resolve_ode(ctx, i, AmplitudeOptions::default().ode)?,
                sample_dt: sample_dt.unwrap_or(AmplitudeOptions::default().sample_dt),
            };
            s.initial = match e.initial.unwrap_or(InitialDoc::MinusEff) {
                InitialDoc::MinusEff => InitialState::MinusEff,
                InitialDoc::PlusEff => InitialState::PlusEff,
                InitialDoc::Dark => InitialState::Dark,
                InitialDoc::CavityPhoton => InitialState::CavityPhoton,
            };
            s.allow_nonadiabatic = e.allow_nonadiabatic;
            s.adiabatic_threshold = e.adiabatic_threshold.unwrap_or(DEFAULT_ADIABATIC_THRESHOLD);
            let window = WignerOptions {
                pad_factor: e.pad_factor.unwrap_or(WignerOptions::default().pad_factor),
                ..match e.window_half_width_uev {
                    Some(h) => WignerOptions::window(
                        e.window_center_uev.map(energy_to_angular).unwrap_or(params.omega_c),
                        energy_to_angular(positive(ctx, "window_half_width_uev", h)?),
                    ),
                    None => WignerOptions::default(),
                }
            };
            if window.pad_factor == 0 {
                return Err(ctx.invalid("pad_factor", "must be at least 1"));
            }
            s.outputs = EmissionOutputs {
                kernel: e.kernel,
                wigner: e.wigner.then_some(window),
                spectrum: e.spectrum.then_some(window),
            };
            Some(EmissionSettings {
                scenario: s,
                equalize: e.equalize,
            })
        }
        _ => None,
    };

    let memory = match (doc.kind, doc.memory) {
        (ScenarioKind::Memory, Some(m)) => {
            let e = energy_to_angular;
            let mut ms = MemoryScenario::new(
                params,
                m.pulse_center_ps * PS,
                positive(ctx, "pulse_fwhm_ps", m.pulse_fwhm_ps)? * PS,
                m.mean_photons,
                e(m.absorb_delta12_uev),
            );
            if !(m.mean_photons >= 0.0 && m.mean_photons.is_finite()) {
                return Err(ctx.invalid("mean_photons", "must be non-negative"));
            }
            ms.t_end = positive(ctx, "t_end_ps", m.t_end_ps)? * PS;
            ms.store = match (&m.store_start_ps, m.store_duration_ps) {
                (None, None) => None,
                (start, duration) => Some(StoreGate {
                    start: match start {
                        None => GateStart::Auto,
                        Some(GateDoc::At(t)) => GateStart::At(t * PS),
                        Some(GateDoc::Word(w)) if w == "auto" => GateStart::Auto,
                        Some(GateDoc::Word(w)) => {
                            return Err(ctx.invalid("store_start_ps", format!("expected a time or \"auto\", got {w:?}")))
                        }
                    },
                    duration: duration.unwrap_or(2.0 * m.pulse_fwhm_ps) * PS,
                }),
            };
            ms.release = m.release_time_ps.map(|t| ReleaseGate {
                time: t * PS,
                duration: m.release_duration_ps.unwrap_or(500.0) * PS,
                delta12: e(m.release_delta12_uev.unwrap_or(m.absorb_delta12_uev)),
            });
            let mut integ = MasterOptions::driven();
            integ.ode = resolve_ode(ctx, i, integ.ode)?;
            if let Some(n) = i.n_max {
                if n == 0 {
                    return Err(ctx.invalid("n_max", "must be at least 1"));
                }
                integ.n_max = n;
            }
            if let Some(dt) = sample_dt {
                integ.sample_dt = dt;
            }
            if let Some(c) = i.check_positivity {
                integ.check_positivity = c;
            }
            ms.integrator = integ;
            ms.allow_nonadiabatic = m.allow_nonadiabatic;
            ms.adiabatic_threshold = m.adiabatic_threshold.unwrap_or(DEFAULT_ADIABATIC_THRESHOLD);
            ms.validate().map_err(|err| ctx.invalid("memory", err.to_string()))?;
            Some(ms)
        }
        (ScenarioKind::Memory, None) => return Err(ctx.invalid("memory", "memory scenarios need a [memory] table")),
        _ => None,
    };

    let sc = &doc.scan;
    let max_over_kappa = sc.max_over_kappa.unwrap_or(0.25);
    let points = sc.points.unwrap_or(26);
    if points < 2 {
        return Err(ctx.invalid("points", "need at least two grid points"));
    }
    let scan = ScanSettings {
        eigen_grid: crate::spectral::uniform_grid(&params, max_over_kappa, points),
        bandwidth_grid: sc
            .delta12_uev
            .clone()
            .unwrap_or_else(|| (1..=16).map(|k| 5.0 * k as f64).collect())
            .into_iter()
            .map(energy_to_angular)
            .collect(),
        timing_offsets: sc
            .offsets_ps
            .clone()
            .unwrap_or_else(|| vec![-300.0, -200.0, -100.0, -50.0, 0.0, 50.0, 100.0, 200.0, 300.0])
            .into_iter()
            .map(|o| o * PS)
            .collect(),
    };

    Ok(Scenario {
        name: doc.name.unwrap_or_else(|| ctx.source_name.to_string()),
        variant,
        kind: doc.kind,
        description: doc.description,
        params,
        schedule,
        emission,
        memory,
        scan,
        document,
    })
}

/// Parses scenario text into one [`Scenario`] per variant (or a single
/// one when the file has no variants).
pub fn parse_config(text: &str, source_name: &str) -> Result<Vec<Scenario>, ConfigError> {
    let ctx = Ctx { source_name, text };
    let table: Table = toml::from_str(text).map_err(|e| ctx.parse_error(&e, None))?;
    let missing = missing_required(&table);
    if !missing.is_empty() {
        return Err(ConfigError::MissingKeys {
            source_name: source_name.to_string(),
            keys: missing,
        });
    }
    let base: FileDoc = toml::from_str(text).map_err(|e| ctx.parse_error(&e, None))?;
    if base.variants.is_empty() {
        let mut doc = table;
        doc.remove("variants");
        return Ok(vec![resolve(&ctx, base, None, doc)?]);
    }

    let mut out = Vec::with_capacity(base.variants.len());
    let mut root = table.clone();
    root.remove("variants");
    for overlay in &base.variants {
        let mut overlay = overlay.clone();
        let vname = match overlay.remove("name") {
            Some(Value::String(s)) => s,
            _ => return Err(ctx.invalid("variants", "every variant needs a string `name`")),
        };
        let mut merged = root.clone();
        merge(&mut merged, &overlay);
        let generated = toml::to_string(&merged).map_err(|e| ConfigError::Parse {
            source_name: source_name.to_string(),
            line: None,
            message: e.to_string(),
        })?;
        let doc: FileDoc = toml::from_str(&generated).map_err(|e| ctx.parse_error(&e, Some(&generated)))?;
        out.push(resolve(&ctx, doc, Some(vname), merged)?);
    }
    Ok(out)
}

/// Built-in scenario text by name, with or without a `.cfg`/`.toml` suffix.
pub fn builtin(name: &str) -> Option<&'static str> {
    let stem = name.trim_end_matches(".cfg").trim_end_matches(".toml");
    BUILTIN.iter().find(|(n, _)| *n == stem).map(|(_, t)| *t)
}

/// Resolves a scenario argument: an existing file, then a file in
/// `$DUOATOM_SCENARIO_PATH`, then a built-in.
pub fn load(arg: &str) -> Result<Vec<Scenario>, ConfigError> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    let path = Path::new(arg);
    if path.is_file() {
        return parse_config(&read(path)?, arg);
    }
    let stem = arg.trim_end_matches(".cfg").trim_end_matches(".toml");
    if let Some(dir) = std::env::var_os(SCENARIO_PATH_ENV) {
        for ext in ["toml", "cfg"] {
            let p = Path::new(&dir).join(format!("{stem}.{ext}"));
            if p.is_file() {
                return parse_config(&read(&p)?, &p.display().to_string());
            }
        }
    }
    match builtin(arg) {
        Some(text) => parse_config(text, stem),
        None => Err(ConfigError::UnknownScenario(arg.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const MINIMAL: &str = r#"
kind = "eigen"

[physics]
g_uev = 20.0
kappa_uev = 400.0
gamma_uev = 0.6
omega12_uev = 31.0
gamma12_over_gamma = 0.99
cavity_offset_uev = -31.0
"#;

    #[test]
    fn builtins_all_parse() {
        for (name, text) in BUILTIN {
            let s = parse_config(text, name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(!s.is_empty());
        }
    }

    #[test]
    fn fig2_is_the_reference_parameter_set() {
        let s = load("fig2.cfg").unwrap();
        assert_eq!(s.len(), 1);
        let p = s[0].params;
        let r = PhysicalParams::micropillar_reference();
        for (a, b) in [(p.g, r.g), (p.kappa, r.kappa), (p.gamma, r.gamma), (p.omega12, r.omega12), (p.omega_c, r.omega_c)] {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
    }

    #[test]
    fn empty_file_lists_required_keys() {
        let e = parse_config("", "empty").unwrap_err();
        match &e {
            ConfigError::MissingKeys { keys, .. } => {
                for k in ["kind", "physics.g_uev", "physics.kappa_uev", "physics.gamma_uev", "physics.omega12_uev"] {
                    assert!(keys.iter().any(|x| x == k), "{k} missing from {keys:?}");
                }
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn cross_damping_above_one_is_rejected_with_line() {
        let text = MINIMAL.replace("gamma12_over_gamma = 0.99", "gamma12_over_gamma = 1.2");
        let e = parse_config(&text, "bad").unwrap_err();
        assert!(matches!(&e, ConfigError::Invalid { key, .. } if key == "gamma12_over_gamma"));
        assert_eq!(e.line(), Some(9));
        assert!(e.to_string().starts_with("bad:9:"));
    }

    #[test]
    fn unknown_keys_are_rejected_with_line() {
        let text = format!("{MINIMAL}colour = 3\n");
        let e = parse_config(&text, "bad").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { .. }));
        assert!(e.to_string().contains("colour"), "{e}");
        assert!(e.line().is_some());
    }

    #[test]
    fn variants_merge_tables_and_replace_arrays() {
        let text = format!(
            "{MINIMAL}\n[scan]\ndelta12_uev = [1.0, 2.0]\npoints = 5\n\n[[variants]]\nname = \"a\"\n[variants.scan]\ndelta12_uev = [3.0]\n\n[[variants]]\nname = \"b\"\n[variants.physics]\ng_uev = 10.0\n"
        );
        let s = parse_config(&text, "v").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].label(), "v_a");
        assert_eq!(s[0].scan.bandwidth_grid, vec![energy_to_angular(3.0)]);
        assert_eq!(s[0].scan.eigen_grid.len(), 5);
        assert_relative_eq!(s[1].params.g, energy_to_angular(10.0));
        assert_relative_eq!(s[1].params.kappa, energy_to_angular(400.0));
    }

    #[test]
    fn variant_errors_point_into_the_original_text() {
        let text = format!("{MINIMAL}\n[[variants]]\nname = \"a\"\n[variants.physics]\nspin = 1.0\n");
        let e = parse_config(&text, "v").unwrap_err();
        assert!(e.to_string().contains("spin"), "{e}");
        assert_eq!(e.line(), line_of(&text, "spin"));
    }

    #[test]
    fn resonant_cavity_shortcut() {
        let text = MINIMAL.replace("cavity_offset_uev = -31.0", "cavity_resonant_delta12_uev = 50.0");
        let s = parse_config(&text, "c").unwrap();
        assert_relative_eq!(s[0].params.omega_c, -energy_to_angular(50f64.hypot(31.0)), max_relative = 1e-14);
    }

    #[test]
    fn geometry_replaces_explicit_coupling() {
        let text = MINIMAL
            .replace("omega12_uev = 31.0\n", "separation_nm = 10.0\n")
            .replace("gamma12_over_gamma = 0.99\n", "");
        let s = parse_config(&text, "g").unwrap();
        let (o, g12) = dipole_rates(&DipoleGeometry::new(10.0), s[0].params.gamma).unwrap();
        assert_eq!(s[0].params.omega12, o);
        assert_eq!(s[0].params.gamma12, g12);
    }

    #[test]
    fn unknown_name_is_reported() {
        assert!(matches!(load("fig9"), Err(ConfigError::UnknownScenario(_))));
    }
}
