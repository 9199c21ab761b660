//! Time-domain integration of the emitter–cavity system.
//!
//! Two engines share one schedule type: a three-amplitude non-Hermitian
//! evolution valid in the single-excitation sector, and the full Lindblad
//! master equation on a truncated Fock space (needed with a drive).

use thiserror::Error;

use crate::params::ParamsError;

pub mod adiabatic;
pub mod amplitudes;
pub mod master;
pub mod ode;
pub mod operators;
pub mod schedule;
pub mod trajectory;

pub use adiabatic::{adiabaticity_check, AdiabaticityReport, DEFAULT_ADIABATIC_THRESHOLD};
pub use amplitudes::{integrate_amplitudes, AmplitudeOptions, SingleExcitationState};
pub use master::{integrate_master, DensityMatrix, MasterOptions};
pub use ode::{OdeOptions, OdeStats};
pub use operators::{assemble_hamiltonian, Basis, SystemOperators};
pub use schedule::{CoherentPulse, ControlSchedule, Profile, Segment};
pub use trajectory::{Trajectory, TrajectorySource};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid integrator options: {0}")]
    InvalidOptions(String),
    #[error("step size underflow at t = {t} ns (h = {h:e}); tighten the schedule or loosen rtol")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {steps} exhausted at t = {t} ns")]
    TooManySteps { t: f64, steps: usize },
    #[error("non-finite state at t = {t} ns")]
    NonFinite { t: f64 },
    #[error("amplitude norm grew by {excess:e} at t = {t} ns; integrator misconfigured")]
    NormGrowth { t: f64, excess: f64 },
    #[error("trace drifted by {drift:e} at t = {t} ns")]
    TraceDrift { t: f64, drift: f64 },
    #[error("density matrix lost hermiticity ({error:e}) at t = {t} ns")]
    NotHermitian { t: f64, error: f64 },
    #[error("density matrix eigenvalue {min_eigenvalue:e} below tolerance at t = {t} ns")]
    NotPositive { t: f64, min_eigenvalue: f64 },
    #[error(
        "top Fock level population {population:e} at t = {t} ns exceeds 1e-6; raise n_max above {n_max}"
    )]
    FockTruncation { t: f64, population: f64, n_max: usize },
    #[error("excitation flux balance off by {residual:e} at t = {t} ns")]
    FluxImbalance { t: f64, residual: f64 },
    #[error("the amplitude engine has no drive term; use the master equation")]
    DriveNotSupported,
    #[error("invalid initial state: {0}")]
    InvalidState(String),
}

/// Uniform sampling grid covering `[0, t_end]` with spacing at most `dt`.
pub fn sample_grid(t_end: f64, dt: f64) -> Vec<f64> {
    let n = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let step = t_end / n as f64;
    (0..=n).map(|i| if i == n { t_end } else { i as f64 * step }).collect()
}
