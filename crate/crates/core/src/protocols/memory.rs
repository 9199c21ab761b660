//! Absorb, store and release a weak coherent pulse in the subradiant state.

use nalgebra::Matrix3;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::emission::{gate_adiabaticity, EmissionScenario, InitialState};
use super::ProtocolError;
use crate::dynamics::master::integrate_master_capture;
use crate::dynamics::schedule::FWHM_TO_SIGMA;
use crate::dynamics::{
    AdiabaticityReport, Basis, CoherentPulse, ControlSchedule, DensityMatrix, MasterOptions, Profile, Segment,
    SingleExcitationState, Trajectory, DEFAULT_ADIABATIC_THRESHOLD,
};
use crate::params::PhysicalParams;

/// One-sided 99% quantile of the standard normal distribution.
const NORMAL_QUANTILE_99: f64 = 2.326_347_874_040_841;

/// Search resolution of the automatic gate placement, ns.
const GATE_SEARCH_TOL: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateStart {
    /// Placed to maximize the population stored at the end of the ramp.
    Auto,
    At(f64),
}

/// Raised-cosine ramp of Δ₁₂ from the absorb value to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoreGate {
    pub start: GateStart,
    pub duration: f64,
}

/// Raised-cosine ramp of Δ₁₂ from zero to `delta12`, starting at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReleaseGate {
    pub time: f64,
    pub duration: f64,
    pub delta12: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryScenario {
    pub params: PhysicalParams,
    pub pulse_center: f64,
    pub pulse_fwhm: f64,
    pub mean_photons: f64,
    pub absorb_delta12: f64,
    pub store: Option<StoreGate>,
    pub release: Option<ReleaseGate>,
    pub t_end: f64,
    pub integrator: MasterOptions,
    pub adiabatic_threshold: f64,
    pub allow_nonadiabatic: bool,
}

impl MemoryScenario {
    /// Absorption only: Δ₁₂ held at `absorb_delta12` throughout.
    pub fn new(params: PhysicalParams, pulse_center: f64, pulse_fwhm: f64, mean_photons: f64, absorb_delta12: f64) -> Self {
        Self {
            params,
            pulse_center,
            pulse_fwhm,
            mean_photons,
            absorb_delta12,
            store: None,
            release: None,
            t_end: pulse_center + 3.0 * pulse_fwhm,
            integrator: MasterOptions::driven(),
            adiabatic_threshold: DEFAULT_ADIABATIC_THRESHOLD,
            allow_nonadiabatic: false,
        }
    }

    /// Drive carrier, resonant with |−⟩_eff during absorption.
    pub fn carrier(&self) -> f64 {
        -self.absorb_delta12.hypot(self.params.omega12)
    }

    /// Time by which 99% of the input energy has arrived, ns.
    pub fn input_passed(&self) -> f64 {
        self.pulse_center + NORMAL_QUANTILE_99 * self.pulse_fwhm * FWHM_TO_SIGMA
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: &str| Err(ProtocolError::InvalidScenario(m.into()));
        if !(self.pulse_fwhm > 0.0 && self.pulse_center.is_finite()) {
            return bad("pulse FWHM must be positive");
        }
        if !(self.mean_photons >= 0.0 && self.mean_photons.is_finite()) {
            return bad("mean photon number must be non-negative");
        }
        if let Some(g) = &self.store {
            if !(g.duration >= 0.0) {
                return bad("store ramp duration must be non-negative");
            }
        }
        if let Some(r) = &self.release {
            if !(r.duration >= 0.0 && r.time > 0.0 && r.time < self.t_end) {
                return bad("release must start inside the horizon");
            }
        }
        Ok(())
    }

    /// Control schedule with the store ramp starting at `gate`.
    pub fn schedule(&self, gate: Option<f64>) -> ControlSchedule {
        let mut segs = vec![Segment::Const {
            value: self.absorb_delta12,
        }];
        if let (Some(g), Some(start)) = (&self.store, gate) {
            segs = vec![Segment::Ramp {
                start,
                duration: g.duration,
                from: self.absorb_delta12,
                to: 0.0,
            }];
        }
        if let Some(r) = &self.release {
            segs.push(Segment::Ramp {
                start: r.time,
                duration: r.duration,
                from: 0.0,
                to: r.delta12,
            });
        }
        let mut ctrl = ControlSchedule::new(Profile::from_segments(segs), self.t_end);
        ctrl.drive = Some(CoherentPulse {
            center: self.pulse_center,
            fwhm: self.pulse_fwhm,
            mean_photons: self.mean_photons,
            carrier: self.carrier(),
        });
        ctrl
    }

    /// Emission run of the release phase from a given stored state, on a
    /// clock starting at the release time.
    pub fn release_emission(&self, stored: SingleExcitationState) -> Option<EmissionScenario> {
        let r = self.release?;
        let ctrl = ControlSchedule::new(
            Profile::from_segments(vec![Segment::Ramp {
                start: 0.0,
                duration: r.duration,
                from: 0.0,
                to: r.delta12,
            }]),
            self.t_end - r.time,
        );
        let mut s = EmissionScenario::new(self.params, ctrl);
        s.initial = InitialState::Amplitudes(stored);
        s.adiabatic_threshold = self.adiabatic_threshold;
        s.allow_nonadiabatic = self.allow_nonadiabatic;
        s.integrator.sample_dt = self.integrator.sample_dt;
        Some(s)
    }

    fn run_at(&self, gate: Option<f64>, t_end: f64, capture: &[f64]) -> Result<(Trajectory, Vec<DensityMatrix>), ProtocolError> {
        let mut ctrl = self.schedule(gate);
        ctrl.t_end = t_end;
        let init = DensityMatrix::ground(self.integrator.n_max);
        Ok(integrate_master_capture(&self.params, &ctrl, &init, &self.integrator, capture)?)
    }

    /// Normalized atomic population at the end of the store ramp.
    fn stored_at_gate(&self, start: f64, duration: f64) -> Result<f64, ProtocolError> {
        let (tr, _) = self.run_at(Some(start), start + duration, &[])?;
        Ok(tr.atomic_population(tr.len() - 1) / self.mean_photons)
    }

    /// Gate start maximizing the stored population, by golden-section search
    /// over [centre − FWHM/2, centre + 3·FWHM/2].
    pub fn optimal_gate(&self) -> Result<f64, ProtocolError> {
        let duration = self.store.map(|g| g.duration).unwrap_or(0.0);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (
            (self.pulse_center - 0.5 * self.pulse_fwhm).max(0.0),
            self.pulse_center + 1.5 * self.pulse_fwhm,
        );
        let mut x1 = b - phi * (b - a);
        let mut x2 = a + phi * (b - a);
        let mut f1 = self.stored_at_gate(x1, duration)?;
        let mut f2 = self.stored_at_gate(x2, duration)?;
        while b - a > GATE_SEARCH_TOL {
            if f1 >= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = self.stored_at_gate(x1, duration)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = self.stored_at_gate(x2, duration)?;
            }
        }
        Ok(0.5 * (a + b))
    }
}

/// Log-linear fit of the stored population between the store and
/// release ramps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageFit {
    pub t_start: f64,
    pub t_stop: f64,
    /// Fitted decay rate, rad/ns.
    pub rate: f64,
    /// 1/rate, ns.
    pub lifetime: f64,
    /// γ₋ = γ − γ₁₂ for comparison.
    pub expected_rate: f64,
    /// (max − min)/max of the population over the window.
    pub spread: f64,
}

#[derive(Debug, Clone)]
pub struct MemoryResult {
    /// Largest normalized atomic population once the input has passed.
    pub efficiency: f64,
    /// Largest normalized atomic population over the whole run.
    pub peak_absorption: f64,
    pub peak_time: f64,
    /// Normalized atomic population at the end of the store ramp.
    pub stored_efficiency: Option<f64>,
    pub gate_start: Option<f64>,
    pub storage: Option<StorageFit>,
    /// Stored one-excitation state captured at the release time.
    pub stored_state: Option<SingleExcitationState>,
    /// Cavity emission after the release time, normalized by ⟨n⟩.
    pub release_efficiency: Option<f64>,
    /// Input quanta that entered the window, normalized by ⟨n⟩.
    pub incident: f64,
    /// Largest excitation-budget residual, normalized by ⟨n⟩.
    pub flux_residual: f64,
    pub adiabaticity: AdiabaticityReport,
    pub warnings: Vec<String>,
    pub schedule: ControlSchedule,
    pub trajectory: Trajectory,
}

/// Dominant eigenvector of the one-excitation block of ρ scaled by the
/// square root of its weight, in the (antisymmetric, symmetric, cavity) basis.
pub fn stored_amplitudes(rho: &DensityMatrix) -> SingleExcitationState {
    let b = Basis::new(rho.n_max);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let eg = b.index(1, 0, 0);
    let ge = b.index(0, 1, 0);
    let cav = b.index(0, 0, 1);
    // rows: |a⟩, |s⟩, |gg,1⟩ in the site basis
    let u = Matrix3::new(
        C64::new(r, 0.0), C64::new(-r, 0.0), C64::new(0.0, 0.0),
        C64::new(r, 0.0), C64::new(r, 0.0), C64::new(0.0, 0.0),
        C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0),
    );
    let idx = [eg, ge, cav];
    let site = Matrix3::from_fn(|i, j| rho.get(idx[i], idx[j]));
    let block = u * site * u.adjoint();
    let eig = block.symmetric_eigen();
    let k = eig.eigenvalues.imax();
    let w = eig.eigenvalues[k].max(0.0).sqrt();
    let v = eig.eigenvectors.column(k);
    // fix the global phase on the largest component
    let m = v.iter().copied().fold(C64::new(0.0, 0.0), |a, x| if x.norm() > a.norm() { x } else { a });
    let ph = if m.norm() > 0.0 { m.conj() / m.norm() } else { C64::new(1.0, 0.0) };
    SingleExcitationState::new(v[0] * ph * w, v[1] * ph * w, v[2] * ph * w)
}

fn storage_fit(p: &PhysicalParams, tr: &Trajectory, t0: f64, t1: f64) -> Option<StorageFit> {
    let pts: Vec<(f64, f64)> = (0..tr.len())
        .filter(|&i| tr.t[i] >= t0 && tr.t[i] <= t1)
        .map(|i| (tr.t[i], tr.atomic_population(i)))
        .filter(|(_, y)| *y > 0.0)
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|q| q.0).sum::<f64>() / n;
    let my = pts.iter().map(|q| q.1.ln()).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|q| (q.0 - mt) * (q.1.ln() - my)).sum();
    let sxx: f64 = pts.iter().map(|q| (q.0 - mt).powi(2)).sum();
    let rate = -sxy / sxx;
    let (lo, hi) = pts
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), q| (lo.min(q.1), hi.max(q.1)));
    Some(StorageFit {
        t_start: pts[0].0,
        t_stop: pts[pts.len() - 1].0,
        rate,
        lifetime: 1.0 / rate,
        expected_rate: p.gamma_minus(),
        spread: (hi - lo) / hi,
    })
}

pub fn run_memory(m: &MemoryScenario) -> Result<MemoryResult, ProtocolError> {
    m.validate()?;
    let gate_start = match m.store {
        Some(StoreGate {
            start: GateStart::At(t), ..
        }) => Some(t),
        Some(StoreGate {
            start: GateStart::Auto, ..
        }) if m.mean_photons > 0.0 => Some(m.optimal_gate()?),
        Some(_) => Some(m.input_passed()),
        None => None,
    };
    let schedule = m.schedule(gate_start);
    let (adiabaticity, warning) =
        gate_adiabaticity(&m.params, &schedule, m.adiabatic_threshold, m.allow_nonadiabatic)?;

    let capture: Vec<f64> = m.release.iter().map(|r| r.time).collect();
    let (trajectory, states) = m.run_at(gate_start, m.t_end, &capture)?;
    let tr = &trajectory;
    let last = tr.len() - 1;
    let scale = if m.mean_photons > 0.0 { 1.0 / m.mean_photons } else { 0.0 };
    let norm_pop = |i: usize| tr.atomic_population(i) * scale;

    let passed = m.input_passed();
    let efficiency = (0..tr.len())
        .filter(|&i| tr.t[i] >= passed)
        .map(norm_pop)
        .fold(0.0, f64::max);
    let (peak_time, peak_absorption) = (0..tr.len())
        .map(|i| (tr.t[i], norm_pop(i)))
        .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });

    let nearest = |t: f64| {
        let dt = tr.dt();
        ((t / dt).round().max(0.0) as usize).min(last)
    };
    let store_end = m.store.zip(gate_start).map(|(g, s)| s + g.duration);
    let stored_efficiency = store_end.map(|t| norm_pop(nearest(t)));
    let storage = store_end.and_then(|t0| {
        let t1 = m.release.map(|r| r.time).unwrap_or(m.t_end) - 0.5;
        (t1 - (t0 + 1.0) >= 1.0).then(|| storage_fit(&m.params, tr, t0 + 1.0, t1)).flatten()
    });
    let stored_state = states.first().map(stored_amplitudes);
    let release_efficiency = m
        .release
        .map(|r| (tr.emitted[last] - tr.emitted[nearest(r.time)]) * scale);

    Ok(MemoryResult {
        efficiency,
        peak_absorption,
        peak_time,
        stored_efficiency,
        gate_start,
        storage,
        stored_state,
        release_efficiency,
        incident: tr.incident[last] * scale,
        flux_residual: tr.max_flux_residual() * scale,
        adiabaticity,
        warnings: warning.into_iter().collect(),
        schedule,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::energy_to_angular;

    fn scenario() -> MemoryScenario {
        let mut p = PhysicalParams::micropillar_reference();
        p.omega_c = -p.omega12;
        let mut m = MemoryScenario::new(p, 1.1, 0.55, 0.01, energy_to_angular(40.0));
        m.store = Some(StoreGate {
            start: GateStart::At(1.37),
            duration: 0.2,
        });
        m.allow_nonadiabatic = true;
        m.t_end = 4.0;
        m
    }

    #[test]
    fn zero_drive_absorbs_nothing() {
        let mut m = scenario();
        m.mean_photons = 0.0;
        let r = run_memory(&m).unwrap();
        assert_eq!(r.efficiency, 0.0);
        assert_eq!(r.peak_absorption, 0.0);
    }

    #[test]
    fn store_ramp_needs_override() {
        let mut m = scenario();
        m.allow_nonadiabatic = false;
        assert!(matches!(run_memory(&m), Err(ProtocolError::NotAdiabatic(_))));
    }

    #[test]
    fn stored_population_and_budget() {
        let r = run_memory(&scenario()).unwrap();
        assert!(r.efficiency > 0.5 && r.efficiency <= 1.0);
        assert!(r.flux_residual < 1e-3);
        assert!((r.incident - 1.0).abs() < 1e-3);
        assert_eq!(r.warnings.len(), 1);
        let s = r.stored_efficiency.unwrap();
        assert!((s - r.efficiency).abs() < 0.02);
    }

    #[test]
    fn stored_amplitudes_recover_a_pure_state() {
        let psi = SingleExcitationState::new(C64::new(0.3, 0.1), C64::new(-0.2, 0.05), C64::new(0.0, 0.1));
        let rho = DensityMatrix::from_single_excitation(1, &psi).unwrap();
        let back = stored_amplitudes(&rho);
        let overlap = psi.amp_a.conj() * back.amp_a + psi.amp_s.conj() * back.amp_s + psi.amp_cav.conj() * back.amp_cav;
        assert!((overlap.norm() - psi.norm_sqr()).abs() < 1e-12);
        assert!((back.norm_sqr() - psi.norm_sqr()).abs() < 1e-12);
    }
}
