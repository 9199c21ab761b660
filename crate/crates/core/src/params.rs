//! Static physical parameters of the two-emitter + cavity system.
//!
//! Everything is stored internally as angular frequency in rad/ns and times
//! in ns. Energies quoted in μeV are converted at the boundary with
//! [`energy_to_angular`].

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Reduced Planck constant in μeV·ns.
pub const HBAR_UEV_NS: f64 = 0.6582119569;

/// Default free-space emission wavelength of an InGaAs dot, nm.
pub const DEFAULT_WAVELENGTH_NM: f64 = 925.0;

/// Default refractive index of the GaAs host.
pub const DEFAULT_REFRACTIVE_INDEX: f64 = 3.46;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamsError {
    #[error("parameter `{name}` must be finite, got {value}")]
    NotFinite { name: &'static str, value: f64 },
    #[error("rate `{name}` must be non-negative, got {value}")]
    NegativeRate { name: &'static str, value: f64 },
    #[error("cross-damping gamma12 = {gamma12} exceeds single-emitter rate gamma = {gamma}")]
    CrossDampingTooLarge { gamma12: f64, gamma: f64 },
    #[error("kd = {kd:.4} is not below 1; near-field dipole formulas do not apply")]
    NearFieldInvalid { kd: f64 },
    #[error("geometry field `{name}` must be strictly positive, got {value}")]
    NonPositiveGeometry { name: &'static str, value: f64 },
    #[error("{0} must be strictly positive")]
    ZeroRate(&'static str),
}

/// Converts an energy in μeV to an angular frequency in rad/ns.
pub fn energy_to_angular(value_uev: f64) -> f64 {
    value_uev / HBAR_UEV_NS
}

/// Inverse of [`energy_to_angular`].
pub fn angular_to_energy(omega: f64) -> f64 {
    omega * HBAR_UEV_NS
}

/// All static rates and frequencies, in rad/ns.
///
/// `omega_c` is the cavity frequency measured from the static emitter mean
/// frequency `omega0_ref`, which is the zero of the rotating frame.
/// `omega0_ref` itself never enters the dynamics; it is carried along for
/// reporting absolute frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub g: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub gamma12: f64,
    pub omega12: f64,
    pub omega0_ref: f64,
    pub omega_c: f64,
}

impl PhysicalParams {
    /// Validating constructor; all arguments in rad/ns.
    pub fn new(
        g: f64,
        kappa: f64,
        gamma: f64,
        gamma12: f64,
        omega12: f64,
        omega_c: f64,
    ) -> Result<Self, ParamsError> {
        let p = Self {
            g,
            kappa,
            gamma,
            gamma12,
            omega12,
            omega0_ref: 0.0,
            omega_c,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds parameters from energies in μeV. `gamma12_over_gamma` is
    /// dimensionless, `omega_c_offset_uev` is ω_c − ω₀.
    pub fn from_uev(
        g_uev: f64,
        kappa_uev: f64,
        gamma_uev: f64,
        omega12_uev: f64,
        gamma12_over_gamma: f64,
        omega_c_offset_uev: f64,
    ) -> Result<Self, ParamsError> {
        let gamma = energy_to_angular(gamma_uev);
        Self::new(
            energy_to_angular(g_uev),
            energy_to_angular(kappa_uev),
            gamma,
            gamma * gamma12_over_gamma,
            energy_to_angular(omega12_uev),
            energy_to_angular(omega_c_offset_uev),
        )
    }

    /// Two InGaAs dots 10 nm apart in a micropillar:
    /// {g, κ, γ} = {20, 400, 0.6} μeV, Ω₁₂ = 31 μeV, γ₁₂ = 0.99γ, and the
    /// cavity tuned to the zero-detuning subradiant line, ω_c = ω₀ − Ω₁₂.
    pub fn micropillar_reference() -> Self {
        Self::from_uev(20.0, 400.0, 0.6, 31.0, 0.99, -31.0)
            .expect("reference parameters are valid")
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        let fields = [
            ("g", self.g),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("gamma12", self.gamma12),
            ("omega12", self.omega12),
            ("omega0_ref", self.omega0_ref),
            ("omega_c", self.omega_c),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(ParamsError::NotFinite { name, value });
            }
        }
        for (name, value) in [
            ("g", self.g),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("gamma12", self.gamma12),
            ("omega12", self.omega12),
        ] {
            if value < 0.0 {
                return Err(ParamsError::NegativeRate { name, value });
            }
        }
        if self.gamma12 > self.gamma {
            return Err(ParamsError::CrossDampingTooLarge {
                gamma12: self.gamma12,
                gamma: self.gamma,
            });
        }
        Ok(())
    }

    /// γ₊ = γ + γ₁₂, the leaky rate of the symmetric state.
    pub fn gamma_plus(&self) -> f64 {
        self.gamma + self.gamma12
    }

    /// γ₋ = γ − γ₁₂, the leaky rate of the antisymmetric state.
    pub fn gamma_minus(&self) -> f64 {
        self.gamma - self.gamma12
    }

    /// Single-emitter Purcell rate Γ₀ = 4g²/κ.
    pub fn gamma0(&self) -> f64 {
        4.0 * self.g * self.g / self.kappa
    }

    pub fn with_omega_c(mut self, omega_c: f64) -> Self {
        self.omega_c = omega_c;
        self
    }
}

/// Geometry of two parallel dipoles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipoleGeometry {
    pub d_nm: f64,
    pub wavelength_nm: f64,
    pub refractive_index: f64,
}

impl DipoleGeometry {
    pub fn new(d_nm: f64) -> Self {
        Self {
            d_nm,
            wavelength_nm: DEFAULT_WAVELENGTH_NM,
            refractive_index: DEFAULT_REFRACTIVE_INDEX,
        }
    }

    /// k·d with k = 2πn/λ.
    pub fn kd(&self) -> f64 {
        2.0 * PI * self.refractive_index * self.d_nm / self.wavelength_nm
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        for (name, value) in [
            ("d_nm", self.d_nm),
            ("wavelength_nm", self.wavelength_nm),
            ("refractive_index", self.refractive_index),
        ] {
            if !value.is_finite() {
                return Err(ParamsError::NotFinite { name, value });
            }
            if value <= 0.0 {
                return Err(ParamsError::NonPositiveGeometry { name, value });
            }
        }
        let kd = self.kd();
        if kd >= 1.0 {
            return Err(ParamsError::NearFieldInvalid { kd });
        }
        Ok(())
    }
}

/// Near-field dipole-dipole coupling and cross-damping,
/// Ω₁₂ = γ·3/(4(kd)³) and γ₁₂ = γ(1 − (kd)²/5).
///
/// Returns `(omega12, gamma12)` in the units of `gamma`.
pub fn dipole_rates(geom: &DipoleGeometry, gamma: f64) -> Result<(f64, f64), ParamsError> {
    geom.validate()?;
    if !gamma.is_finite() {
        return Err(ParamsError::NotFinite {
            name: "gamma",
            value: gamma,
        });
    }
    if gamma < 0.0 {
        return Err(ParamsError::NegativeRate {
            name: "gamma",
            value: gamma,
        });
    }
    let kd = geom.kd();
    let omega12 = gamma * 3.0 / (4.0 * kd.powi(3));
    let gamma12 = gamma * (1.0 - kd * kd / 5.0);
    Ok((omega12, gamma12))
}

/// F_p = 4g²/(κγ).
pub fn purcell_factor(p: &PhysicalParams) -> Result<f64, ParamsError> {
    if p.kappa <= 0.0 {
        return Err(ParamsError::ZeroRate("kappa"));
    }
    if p.gamma <= 0.0 {
        return Err(ParamsError::ZeroRate("gamma"));
    }
    Ok(4.0 * p.g * p.g / (p.kappa * p.gamma))
}
