use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

use super::ode::OdeStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "snake_case")]
pub enum TrajectorySource {
    Amplitudes,
    Master { n_max: usize, driven: bool },
}

/// Sampled expectation values on a uniform grid.
///
/// The cumulative columns integrate the loss channels from t = 0 and make
/// the excitation budget checkable at every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub source: TrajectorySource,
    pub t: Vec<f64>,
    pub pop_minus_eff: Vec<f64>,
    pub pop_plus_eff: Vec<f64>,
    /// ⟨σ_s†σ_s⟩.
    pub pop_s: Vec<f64>,
    /// ⟨σ_a†σ_a⟩.
    pub pop_a: Vec<f64>,
    /// ⟨a†a⟩.
    pub pop_cavity: Vec<f64>,
    /// κ⟨a†a⟩, photons/ns.
    pub power: Vec<f64>,
    /// Cavity amplitude (single-excitation runs) or ⟨a⟩ (master runs).
    pub field: Vec<C64>,
    /// (amp_a, amp_s, amp_cav) for amplitude runs.
    pub amplitudes: Option<Vec<[C64; 3]>>,
    pub emitted: Vec<f64>,
    pub leaked_s: Vec<f64>,
    pub leaked_a: Vec<f64>,
    /// Net excitation injected by the drive.
    pub drive_input: Vec<f64>,
    /// Incoming photons, ∫|α_in|².
    pub incident: Vec<f64>,
    pub initial_excitation: f64,
    pub stats: OdeStats,
}

impl Trajectory {
    pub(crate) fn empty(source: TrajectorySource, initial_excitation: f64, capacity: usize) -> Self {
        let v = || Vec::with_capacity(capacity);
        Self {
            source,
            t: v(),
            pop_minus_eff: v(),
            pop_plus_eff: v(),
            pop_s: v(),
            pop_a: v(),
            pop_cavity: v(),
            power: v(),
            field: Vec::with_capacity(capacity),
            amplitudes: None,
            emitted: v(),
            leaked_s: v(),
            leaked_a: v(),
            drive_input: v(),
            incident: v(),
            initial_excitation,
            stats: OdeStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Grid spacing.
    pub fn dt(&self) -> f64 {
        if self.t.len() < 2 {
            0.0
        } else {
            self.t[1] - self.t[0]
        }
    }

    /// Total excitation ⟨σ₁†σ₁ + σ₂†σ₂ + a†a⟩ at sample `i`.
    pub fn remaining(&self, i: usize) -> f64 {
        self.pop_s[i] + self.pop_a[i] + self.pop_cavity[i]
    }

    pub fn atomic_population(&self, i: usize) -> f64 {
        self.pop_s[i] + self.pop_a[i]
    }

    pub fn leaked(&self, i: usize) -> f64 {
        self.leaked_s[i] + self.leaked_a[i]
    }

    /// Initial excitation + drive input − remaining − emitted − leaked.
    pub fn flux_residual(&self, i: usize) -> f64 {
        self.initial_excitation + self.drive_input[i]
            - self.remaining(i)
            - self.emitted[i]
            - self.leaked(i)
    }

    pub fn max_flux_residual(&self) -> f64 {
        (0..self.len())
            .map(|i| self.flux_residual(i).abs())
            .fold(0.0, f64::max)
    }

    /// Photons leaving the cavity port, incident + emitted − drive input,
    /// i.e. ∫|α_in + √κ⟨a⟩|² for a coherent input.
    pub fn reflected(&self, i: usize) -> f64 {
        self.incident[i] - self.drive_input[i] + self.emitted[i]
    }

    pub fn total_emitted(&self) -> f64 {
        self.emitted.last().copied().unwrap_or(0.0)
    }

    /// (time, power) of the emitted-power maximum.
    pub fn peak_power(&self) -> (f64, f64) {
        self.peak_power_in(f64::NEG_INFINITY, f64::INFINITY)
    }

    /// (time, power) of the emitted-power maximum within `[t0, t1]`.
    pub fn peak_power_in(&self, t0: f64, t1: f64) -> (f64, f64) {
        self.t
            .iter()
            .zip(&self.power)
            .filter(|(t, _)| **t >= t0 && **t <= t1)
            .fold((f64::NAN, f64::NEG_INFINITY), |acc, (&t, &p)| {
                if p > acc.1 {
                    (t, p)
                } else {
                    acc
                }
            })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t_ns,pop_minus_eff,pop_plus_eff,pop_cavity,power_emitted")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{:.6},{:.12e},{:.12e},{:.12e},{:.12e}",
                self.t[i], self.pop_minus_eff[i], self.pop_plus_eff[i], self.pop_cavity[i], self.power[i]
            )?;
        }
        Ok(())
    }
}
