//! Closed-form rates of the hybridized single-excitation states.
//!
//! At finite emitter detuning Δ₁₂ the collective states |±⟩ mix into
//! |∓⟩_eff. The lower state couples to the cavity only through its
//! symmetric weight μ, so both its cavity rate and its leaky rate scale
//! with μ² and the mode coupling β stays nearly constant.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::PhysicalParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("detuning grid must be sorted ascending and non-negative (offending index {0})")]
    InvalidGrid(usize),
    #[error("detuning must be finite")]
    NotFinite,
}

/// Symmetric and antisymmetric weights (μ, ν) of |−⟩_eff for reduced
/// detuning δ = Δ₁₂/Ω₁₂.
///
/// Uses the half-angle form μ = sin(θ/2), ν = cos(θ/2) with θ = arctan δ,
/// which is algebraically identical to the rational expression in δ but
/// stays well conditioned for |δ| → ∞.
pub fn mu_nu(delta: f64) -> (f64, f64) {
    let half = 0.5 * delta.atan();
    (half.sin(), half.cos())
}

/// Same as [`mu_nu`] but from the dimensional pair, so that Ω₁₂ = 0 is
/// handled as δ = ±∞.
fn mu_nu_from(delta12: f64, omega12: f64) -> (f64, f64) {
    let half = 0.5 * delta12.atan2(omega12);
    (half.sin(), half.cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridEigenstates {
    pub mu: f64,
    pub nu: f64,
    /// δ = Δ₁₂/Ω₁₂.
    pub delta: f64,
    /// Eigenfrequency of |−⟩_eff relative to ω₀.
    pub omega_minus_eff: f64,
    /// Eigenfrequency of |+⟩_eff relative to ω₀.
    pub omega_plus_eff: f64,
}

pub fn hybrid_eigenstates(p: &PhysicalParams, delta12: f64) -> HybridEigenstates {
    let (mu, nu) = mu_nu_from(delta12, p.omega12);
    let split = delta12.hypot(p.omega12);
    HybridEigenstates {
        mu,
        nu,
        delta: delta12 / p.omega12,
        omega_minus_eff: -split,
        omega_plus_eff: split,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveRates {
    /// Γ₋eff, emission rate of |−⟩_eff into the cavity mode.
    pub cavity_rate: f64,
    /// γ₋eff = μ²γ₊, emission rate of |−⟩_eff into leaky modes.
    pub leaky_rate: f64,
    /// Γ/(Γ + γ_eff), continued to its Δ₁₂ → 0 limit at the dark point.
    pub beta: f64,
    /// Δ_c = ω₋eff − ω_c.
    pub delta_c: f64,
    /// Γ₀ = 4g²/κ.
    pub gamma0: f64,
    /// Set when μ = 0 and the state is decoupled from every channel.
    pub dark: bool,
}

impl EffectiveRates {
    /// Total decay rate Γ₋eff + γ₋eff.
    pub fn total_rate(&self) -> f64 {
        self.cavity_rate + self.leaky_rate
    }
}

/// Fermi-golden-rule rates of |−⟩_eff at a static detuning Δ₁₂.
pub fn effective_rates(p: &PhysicalParams, delta12: f64) -> EffectiveRates {
    let eig = hybrid_eigenstates(p, delta12);
    let mu2 = eig.mu * eig.mu;
    let delta_c = eig.omega_minus_eff - p.omega_c;
    let lorentz = 1.0 / (1.0 + (2.0 * delta_c / p.kappa).powi(2));
    let cavity_per_mu2 = 8.0 * p.g * p.g / p.kappa * lorentz;
    let cavity_rate = mu2 * cavity_per_mu2;
    let leaky_rate = mu2 * p.gamma_plus();
    let dark = cavity_rate + leaky_rate == 0.0;
    // μ² cancels, which also fixes β at the dark point by continuity
    let denom = cavity_per_mu2 + p.gamma_plus();
    EffectiveRates {
        cavity_rate,
        leaky_rate,
        beta: if denom > 0.0 { cavity_per_mu2 / denom } else { 0.0 },
        delta_c,
        gamma0: p.gamma0(),
        dark,
    }
}

/// Total decay rate of |+⟩_eff at detuning Δ₁₂ and frame shift ω₀(t) − ω₀.
///
/// Used to convert a |+⟩_eff population into an emitted-quanta estimate.
pub fn plus_state_rate(p: &PhysicalParams, delta12: f64, frame_shift: f64) -> f64 {
    let eig = hybrid_eigenstates(p, delta12);
    let nu2 = eig.nu * eig.nu;
    let mu2 = eig.mu * eig.mu;
    let delta_c = eig.omega_plus_eff + frame_shift - p.omega_c;
    let lorentz = 1.0 / (1.0 + (2.0 * delta_c / p.kappa).powi(2));
    8.0 * nu2 * p.g * p.g / p.kappa * lorentz + nu2 * p.gamma_plus() + mu2 * p.gamma_minus()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralRow {
    pub delta12: f64,
    pub delta12_over_kappa: f64,
    pub mu: f64,
    pub nu: f64,
    pub gamma_over_gamma0: f64,
    pub beta: f64,
    pub dark: bool,
}

/// Evaluates [`effective_rates`] on a sorted, non-negative detuning grid.
pub fn spectral_scan(
    p: &PhysicalParams,
    delta12_grid: &[f64],
) -> Result<Vec<SpectralRow>, SpectralError> {
    for (i, d) in delta12_grid.iter().enumerate() {
        if !d.is_finite() {
            return Err(SpectralError::NotFinite);
        }
        if *d < 0.0 || (i > 0 && *d < delta12_grid[i - 1]) {
            return Err(SpectralError::InvalidGrid(i));
        }
    }
    Ok(delta12_grid
        .iter()
        .map(|&d| {
            let eig = hybrid_eigenstates(p, d);
            let r = effective_rates(p, d);
            SpectralRow {
                delta12: d,
                delta12_over_kappa: d / p.kappa,
                mu: eig.mu,
                nu: eig.nu,
                gamma_over_gamma0: r.cavity_rate / r.gamma0,
                beta: r.beta,
                dark: r.dark,
            }
        })
        .collect())
}

/// Uniform grid of `points` detunings spanning [0, max_over_kappa·κ].
pub fn uniform_grid(p: &PhysicalParams, max_over_kappa: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n)
            .map(|i| max_over_kappa * p.kappa * i as f64 / (n - 1) as f64)
            .collect(),
    }
}
