//! Command-line front end. Every run writes CSV tables plus one JSON
//! manifest per scenario variant into the output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{self, ConfigError, Scenario, ScenarioKind};
use crate::dynamics::{ControlSchedule, OdeStats};
use crate::params::{angular_to_energy, PhysicalParams};
use crate::protocols::{
    bandwidth_optimum_scan, equalize_second_pulse, run_emission, run_memory, timing_sensitivity, EmissionBundle,
    ProtocolError,
};
use crate::signal::{mean_peak_spacing, WignerOptions};
use crate::spectral::{spectral_scan, SpectralError};

#[derive(Debug, Parser)]
#[command(name = "duoatom", version, about = "Two coupled emitters in a cavity as a tunable one-dimensional atom")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Worker threads for scans (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Relative tolerance override for every integrator.
    #[arg(long, global = true)]
    pub rtol: Option<f64>,

    /// Accepted for scripts; runs are deterministic and use no random numbers.
    #[arg(long, global = true)]
    pub seedless: bool,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ScenarioArg {
    /// Built-in name (fig2..fig6, optional .cfg/.toml suffix) or a file path.
    pub name: Option<String>,
    #[arg(long = "scenario", conflicts_with = "name")]
    pub flag: Option<String>,
}

impl ScenarioArg {
    fn resolve(&self, default: &str) -> String {
        self.flag.clone().or_else(|| self.name.clone()).unwrap_or_else(|| default.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScanWhat {
    Bandwidth,
    Timing,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cavity rate and mode coupling versus static detuning.
    EigenScan(ScenarioArg),
    /// Controlled emission: trajectory plus any configured spectrum/Wigner map.
    Emit(ScenarioArg),
    /// Emission run reduced to its Wigner-Ville map.
    Wigner(ScenarioArg),
    /// Absorb, store and release a weak coherent pulse.
    Store(ScenarioArg),
    /// Memory efficiency versus absorb detuning or gate timing.
    Scan {
        #[arg(long, value_enum)]
        what: ScanWhat,
        #[command(flatten)]
        scenario: ScenarioArg,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::EigenScan(_) => "eigen-scan",
            Command::Emit(_) => "emit",
            Command::Wigner(_) => "wigner",
            Command::Store(_) => "store",
            Command::Scan { .. } => "scan",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario `{scenario}` is of kind `{}`; `{command}` needs {expected}", kind_name(.kind))]
    WrongKind {
        scenario: String,
        kind: ScenarioKind,
        command: &'static str,
        expected: &'static str,
    },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Protocol(_) => "protocol",
            CliError::Spectral(_) => "spectral",
            CliError::Io { .. } => "io",
            CliError::WrongKind { .. } | CliError::Usage(_) => "usage",
        }
    }

    /// Machine-readable error record.
    pub fn to_json(&self) -> Value {
        let mut e = json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::Config(c) = self {
            if let Some(l) = c.line() {
                e["line"] = json!(l);
            }
        }
        json!({ "error": e })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamsReport {
    /// Model units, rad/ns.
    pub rad_per_ns: PhysicalParams,
    pub g_uev: f64,
    pub kappa_uev: f64,
    pub gamma_uev: f64,
    pub omega12_uev: f64,
    pub gamma12_over_gamma: f64,
    pub cavity_offset_uev: f64,
}

impl From<&PhysicalParams> for ParamsReport {
    fn from(p: &PhysicalParams) -> Self {
        Self {
            rad_per_ns: *p,
            g_uev: angular_to_energy(p.g),
            kappa_uev: angular_to_energy(p.kappa),
            gamma_uev: angular_to_energy(p.gamma),
            omega12_uev: angular_to_energy(p.omega12),
            gamma12_over_gamma: if p.gamma > 0.0 { p.gamma12 / p.gamma } else { 0.0 },
            cavity_offset_uev: angular_to_energy(p.omega_c - p.omega0_ref),
        }
    }
}

/// Everything needed to reproduce one output bundle.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub scenario: String,
    pub variant: Option<String>,
    pub params: ParamsReport,
    pub schedule: Option<ControlSchedule>,
    pub schedule_sha256: Option<String>,
    pub integrator: Value,
    /// Merged scenario document the run was resolved from.
    pub config: Value,
    pub workers: Option<usize>,
    pub seedless: bool,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub steps: OdeStats,
    pub wall_clock_s: f64,
    pub results: Value,
}

/// Hex SHA-256 of the schedule's JSON encoding.
pub fn schedule_checksum(s: &ControlSchedule) -> String {
    let bytes = serde_json::to_vec(s).expect("schedules serialize");
    hex::encode(Sha256::digest(&bytes))
}

struct Bundle<'a> {
    dir: &'a Path,
    label: String,
    outputs: Vec<String>,
}

impl Bundle<'_> {
    fn write(&mut self, suffix: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
        let name = format!("{}_{suffix}", self.label);
        let path = self.dir.join(&name);
        let io = |source| CliError::Io {
            path: path.clone(),
            source,
        };
        let mut w = BufWriter::new(File::create(&path).map_err(io)?);
        f(&mut w).and_then(|_| w.flush()).map_err(io)?;
        self.outputs.push(name);
        Ok(())
    }
}

struct RunContext<'a> {
    cli: &'a Cli,
    command: &'static str,
    /// Distinguishes manifests of different commands on the same scenario.
    tag: String,
}

impl RunContext<'_> {
    fn workers(&self) -> usize {
        self.cli
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        sc: &Scenario,
        bundle: Bundle,
        schedule: Option<ControlSchedule>,
        integrator: Value,
        warnings: Vec<String>,
        steps: OdeStats,
        started: Instant,
        results: Value,
    ) -> Result<(), CliError> {
        let mut bundle = bundle;
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: match &self.cli.command {
                Command::Scan { what, .. } => format!("scan --what {}", format!("{what:?}").to_lowercase()),
                _ => self.command.to_string(),
            },
            scenario: sc.name.clone(),
            variant: sc.variant.clone(),
            params: (&sc.params).into(),
            schedule_sha256: schedule.as_ref().map(schedule_checksum),
            schedule,
            integrator,
            config: serde_json::to_value(&sc.document).unwrap_or(Value::Null),
            workers: matches!(self.command, "scan").then(|| self.workers()),
            seedless: self.cli.seedless,
            outputs: bundle.outputs.clone(),
            warnings,
            steps,
            wall_clock_s: started.elapsed().as_secs_f64(),
            results,
        };
        bundle.write(&format!("{}_manifest.json", self.tag), |w| {
            serde_json::to_writer_pretty(&mut *w, &manifest).map_err(std::io::Error::other)?;
            writeln!(w)
        })
    }
}

fn kind_name(k: &ScenarioKind) -> &'static str {
    match k {
        ScenarioKind::Eigen => "eigen",
        ScenarioKind::Emission => "emission",
        ScenarioKind::Memory => "memory",
    }
}

fn expect_kind(sc: &Scenario, kind: ScenarioKind, command: &'static str) -> Result<(), CliError> {
    if sc.kind == kind {
        return Ok(());
    }
    Err(CliError::WrongKind {
        scenario: sc.label(),
        kind: sc.kind,
        command,
        expected: match kind {
            ScenarioKind::Eigen => "an eigen scenario",
            ScenarioKind::Emission => "an emission scenario",
            ScenarioKind::Memory => "a memory scenario",
        },
    })
}

fn eigen_scan(ctx: &RunContext, sc: &Scenario, dir: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let rows = spectral_scan(&sc.params, &sc.scan.eigen_grid)?;
    let mut b = Bundle {
        dir,
        label: sc.label(),
        outputs: Vec::new(),
    };
    b.write("eigen_scan.csv", |w| {
        writeln!(w, "delta12_over_kappa,mu,nu,Gamma_over_Gamma0,beta")?;
        for r in &rows {
            writeln!(
                w,
                "{:.6},{:.12e},{:.12e},{:.12e},{:.12e}",
                r.delta12_over_kappa, r.mu, r.nu, r.gamma_over_gamma0, r.beta
            )?;
        }
        Ok(())
    })?;
    let non_dark = rows.iter().filter(|r| !r.dark);
    let results = json!({
        "points": rows.len(),
        "beta_min": non_dark.clone().map(|r| r.beta).fold(f64::INFINITY, f64::min),
        "beta_max": non_dark.map(|r| r.beta).fold(f64::NEG_INFINITY, f64::max),
        "gamma_over_gamma0_last": rows.last().map(|r| r.gamma_over_gamma0),
    });
    ctx.finish(sc, b, None, Value::Null, Vec::new(), OdeStats::default(), started, results)
}

fn emission_bundle(ctx: &RunContext, sc: &Scenario) -> Result<(EmissionBundle, ControlSchedule, Vec<String>), CliError> {
    let settings = sc.emission.as_ref().expect("checked by expect_kind");
    let mut s = settings.scenario.clone();
    if ctx.command == "wigner" && s.outputs.wigner.is_none() {
        s.outputs.wigner = Some(WignerOptions::default());
    }
    if ctx.command == "wigner" {
        s.outputs.spectrum = None;
    }
    let mut notes = Vec::new();
    if settings.equalize {
        let eq = equalize_second_pulse(&s.params, &s.schedule, s.initial, &s.integrator)?;
        notes.push(format!("equalized pulse amplitudes in {} runs", eq.runs));
        s.schedule = eq.schedule;
    }
    let b = run_emission(&s)?;
    notes.extend(b.warnings.iter().cloned());
    Ok((b, s.schedule, notes))
}

fn emit(ctx: &RunContext, sc: &Scenario, dir: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let (b, schedule, warnings) = emission_bundle(ctx, sc)?;
    let amplitudes: Vec<f64> = schedule.delta12.gauss_pulses().iter().map(|q| angular_to_energy(q.3)).collect();
    let mut out = Bundle {
        dir,
        label: sc.label(),
        outputs: Vec::new(),
    };
    let tr = &b.trajectory;
    let (t_peak, p_peak) = tr.peak_power();
    let mut results = json!({
        "total_emitted": tr.total_emitted(),
        "peak_power_time_ns": t_peak,
        "peak_power_per_ns": p_peak,
        "plus_leakage": b.plus_leakage,
        "max_flux_residual": tr.max_flux_residual(),
        "adiabaticity": b.adiabaticity,
        "pulse_amplitudes_uev": amplitudes,
    });

    if ctx.command == "emit" {
        out.write("trajectory.csv", |w| tr.write_csv(w))?;
        if let Some(s) = &b.spectrum {
            out.write("spectrum.csv", |w| s.write_csv(w))?;
            let e: Vec<f64> = s.omega.iter().map(|w| angular_to_energy(*w)).collect();
            results["comb_spacing_uev"] = json!(mean_peak_spacing(&e, &s.s, 0.05));
            results["spectrum_integral"] = json!(s.integral());
        }
    }
    if let Some(w) = &b.wigner {
        out.write("wigner.csv", |f| w.write_csv(f))?;
        let sha = schedule_checksum(&schedule);
        let meta = json!({
            "t_ns": w.t,
            "omega_rad_per_ns": w.omega,
            "window_ns": w.window,
            "imag_residual": w.imag_residual,
            "min": w.min(),
            "max": w.max(),
            "schedule_sha256": sha,
        });
        out.write("wigner.json", |f| {
            serde_json::to_writer_pretty(&mut *f, &meta).map_err(std::io::Error::other)?;
            writeln!(f)
        })?;
        results["wigner_min_over_max"] = json!(w.min() / w.max());
    }
    let s = &sc.emission.as_ref().expect("checked by expect_kind").scenario;
    ctx.finish(
        sc,
        out,
        Some(schedule),
        json!({ "amplitudes": s.integrator }),
        warnings,
        tr.stats,
        started,
        results,
    )
}

fn store(ctx: &RunContext, sc: &Scenario, dir: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let m = sc.memory.as_ref().expect("checked by expect_kind");
    let r = run_memory(m)?;
    let tr = &r.trajectory;
    let scale = if m.mean_photons > 0.0 { 1.0 / m.mean_photons } else { 0.0 };
    let mut out = Bundle {
        dir,
        label: sc.label(),
        outputs: Vec::new(),
    };
    out.write("memory.csv", |w| {
        writeln!(w, "t_ns,atomic_population,cavity_population,power_emitted,incident,reflected,leaked")?;
        for i in 0..tr.len() {
            writeln!(
                w,
                "{:.6},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                tr.t[i],
                tr.atomic_population(i) * scale,
                tr.pop_cavity[i] * scale,
                tr.power[i] * scale,
                tr.incident[i] * scale,
                tr.reflected(i) * scale,
                tr.leaked(i) * scale
            )?;
        }
        Ok(())
    })?;
    let results = json!({
        "normalization": "per mean input photon",
        "efficiency": r.efficiency,
        "peak_absorption": r.peak_absorption,
        "peak_time_ns": r.peak_time,
        "stored_efficiency": r.stored_efficiency,
        "gate_start_ns": r.gate_start,
        "storage_fit": r.storage,
        "release_efficiency": r.release_efficiency,
        "incident": r.incident,
        "flux_residual": r.flux_residual,
        "adiabaticity": r.adiabaticity,
    });
    ctx.finish(
        sc,
        out,
        Some(r.schedule.clone()),
        json!({ "master": m.integrator }),
        r.warnings.clone(),
        tr.stats,
        started,
        results,
    )
}

fn scan(ctx: &RunContext, sc: &Scenario, dir: &Path, what: ScanWhat) -> Result<(), CliError> {
    let started = Instant::now();
    let m = sc.memory.as_ref().expect("checked by expect_kind");
    let mut out = Bundle {
        dir,
        label: sc.label(),
        outputs: Vec::new(),
    };
    let results = match what {
        ScanWhat::Bandwidth => {
            let s = bandwidth_optimum_scan(m, &sc.scan.bandwidth_grid, ctx.workers())?;
            out.write("bandwidth_scan.csv", |w| {
                writeln!(w, "delta12_uev,state_time_ps,ratio,efficiency")?;
                for r in &s.rows {
                    writeln!(
                        w,
                        "{:.6},{:.6},{:.9},{:.12e}",
                        angular_to_energy(r.delta12),
                        r.state_time * 1e3,
                        r.ratio,
                        r.efficiency
                    )?;
                }
                Ok(())
            })?;
            json!({
                "efficiency": "peak normalized atomic population, absorption only",
                "ratio": "1/(Gamma_minus_eff + gamma_minus_eff) over pulse FWHM",
                "optimum_delta12_uev": angular_to_energy(s.optimum_delta12),
                "optimum_efficiency": s.optimum_efficiency,
                "optimum_ratio": s.optimum_ratio,
                "pulse_fwhm_ps": s.pulse_fwhm * 1e3,
            })
        }
        ScanWhat::Timing => {
            let s = timing_sensitivity(m, &sc.scan.timing_offsets, ctx.workers())?;
            out.write("timing_scan.csv", |w| {
                writeln!(w, "offset_ps,gate_start_ps,efficiency,relative_loss")?;
                for r in &s.rows {
                    writeln!(
                        w,
                        "{:.3},{:.3},{:.12e},{:.9}",
                        r.offset * 1e3,
                        r.gate_start * 1e3,
                        r.efficiency,
                        r.relative_loss
                    )?;
                }
                Ok(())
            })?;
            json!({
                "efficiency": "normalized atomic population at the end of the store ramp",
                "reference_gate_ps": s.reference_gate * 1e3,
                "reference_efficiency": s.reference_efficiency,
            })
        }
    };
    ctx.finish(
        sc,
        out,
        Some(m.schedule(None)),
        json!({ "master": m.integrator }),
        Vec::new(),
        OdeStats::default(),
        started,
        results,
    )
}

/// Runs one parsed command line.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(r) = cli.rtol {
        if !(r.is_finite() && r > 0.0) {
            return Err(CliError::Usage(format!("--rtol must be positive, got {r}")));
        }
    }
    if cli.workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let (arg, default, kind) = match &cli.command {
        Command::EigenScan(a) => (a, "fig2", ScenarioKind::Eigen),
        Command::Emit(a) => (a, "fig4", ScenarioKind::Emission),
        Command::Wigner(a) => (a, "fig5", ScenarioKind::Emission),
        Command::Store(a) => (a, "fig6", ScenarioKind::Memory),
        Command::Scan { scenario, .. } => (scenario, "fig6", ScenarioKind::Memory),
    };
    let ctx = RunContext {
        cli,
        command: cli.command.name(),
        tag: match &cli.command {
            Command::Scan { what, .. } => format!("scan_{}", format!("{what:?}").to_lowercase()),
            c => c.name().replace('-', "_"),
        },
    };
    let mut scenarios = config::load(&arg.resolve(default))?;
    fs::create_dir_all(&cli.out).map_err(|source| CliError::Io {
        path: cli.out.clone(),
        source,
    })?;
    for sc in &mut scenarios {
        expect_kind(sc, kind, ctx.command)?;
        if let Some(r) = cli.rtol {
            sc.set_rtol(r);
        }
        match &cli.command {
            Command::EigenScan(_) => eigen_scan(&ctx, sc, &cli.out)?,
            Command::Emit(_) | Command::Wigner(_) => emit(&ctx, sc, &cli.out)?,
            Command::Store(_) => store(&ctx, sc, &cli.out)?,
            Command::Scan { what, .. } => scan(&ctx, sc, &cli.out, *what)?,
        }
    }
    Ok(())
}

/// Process entry point: parses arguments, runs, and reports failures as
/// JSON on stderr with exit status 1. Usage errors exit with status 2.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(1)
        }
    }
}
