//! Experiments composed from the dynamics and signal layers: shaped
//! single-photon emission and the absorb/store/release memory.

use thiserror::Error;

use crate::dynamics::{AdiabaticityReport, DynamicsError};
use crate::signal::SignalError;

pub mod emission;
pub mod memory;
pub mod scans;

pub use emission::{
    equalize_second_pulse, run_emission, EmissionBundle, EmissionOutputs, EmissionScenario, Equalization,
    InitialState,
};
pub use memory::{run_memory, stored_amplitudes, GateStart, MemoryResult, MemoryScenario, ReleaseGate, StorageFit, StoreGate};
pub use scans::{bandwidth_optimum_scan, timing_sensitivity, BandwidthRow, BandwidthScan, TimingRow, TimingScan};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(
        "schedule is not adiabatic: max |dΔ12/dt|/Ω12² = {:.3} at t = {:.3} ns exceeds {:.3}; \
         slow the ramp or set allow_nonadiabatic",
        .0.max_ratio, .0.at, .0.threshold
    )]
    NotAdiabatic(AdiabaticityReport),
    #[error("|+>eff leakage is {:.1}% of the emitted quanta (limit 5%)", .0 * 100.0)]
    Leakage(f64),
    #[error(
        "pulse {pulse} cannot reach the first pulse's peak power: best ratio {best_ratio:.3} at {amplitude:.3} rad/ns"
    )]
    Unreachable { pulse: usize, best_ratio: f64, amplitude: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}
