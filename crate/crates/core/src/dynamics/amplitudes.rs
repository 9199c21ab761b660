//! Closed three-amplitude evolution i dv/dt = M(t) v in the single-excitation
//! sector, v = (amp_a, amp_s, amp_cav).

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::ode::{integrate, OdeOptions};
use super::schedule::ControlSchedule;
use super::trajectory::{Trajectory, TrajectorySource};
use super::{sample_grid, DynamicsError};
use crate::params::PhysicalParams;
use crate::spectral::hybrid_eigenstates;

const NORM_GROWTH_TOL: f64 = 1e-6;
const FLUX_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleExcitationState {
    pub amp_a: C64,
    pub amp_s: C64,
    pub amp_cav: C64,
}

impl SingleExcitationState {
    pub fn new(amp_a: C64, amp_s: C64, amp_cav: C64) -> Self {
        Self {
            amp_a,
            amp_s,
            amp_cav,
        }
    }

    /// Antisymmetric state |−,0⟩.
    pub fn dark() -> Self {
        Self::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    }

    /// One photon in the cavity, emitters in the ground state.
    pub fn cavity_photon() -> Self {
        Self::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0))
    }

    /// |−⟩_eff = ν|−⟩ − μ|+⟩ at detuning Δ₁₂.
    pub fn minus_eff(p: &PhysicalParams, delta12: f64) -> Self {
        let e = hybrid_eigenstates(p, delta12);
        Self::new(C64::new(e.nu, 0.0), C64::new(-e.mu, 0.0), C64::new(0.0, 0.0))
    }

    /// |+⟩_eff = μ|−⟩ + ν|+⟩ at detuning Δ₁₂.
    pub fn plus_eff(p: &PhysicalParams, delta12: f64) -> Self {
        let e = hybrid_eigenstates(p, delta12);
        Self::new(C64::new(e.mu, 0.0), C64::new(e.nu, 0.0), C64::new(0.0, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp_a.norm_sqr() + self.amp_s.norm_sqr() + self.amp_cav.norm_sqr()
    }

    pub fn as_array(&self) -> [C64; 3] {
        [self.amp_a, self.amp_s, self.amp_cav]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeOptions {
    pub ode: OdeOptions,
    /// Output sample spacing, ns.
    pub sample_dt: f64,
}

impl Default for AmplitudeOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions {
                rtol: 1e-9,
                atol: 1e-12,
                ..OdeOptions::default()
            },
            sample_dt: 0.005,
        }
    }
}

/// The right-hand side −i(M(t) − ω_c)v plus the three loss accumulators.
///
/// Integration runs in the frame rotating at ω_c, where emission near the
/// cavity line is slow; samples are rotated back to the ω₀_ref frame.
fn amplitude_rhs(p: &PhysicalParams, ctrl: &ControlSchedule, t: f64, y: &[C64], dy: &mut [C64]) {
    let i = C64::new(0.0, 1.0);
    let d = ctrl.delta12_at(t);
    let off = ctrl.frame_shift(t, p.omega12) - p.omega_c;
    let gs = C64::new(0.0, 2f64.sqrt() * p.g);
    let (ca, cs, cc) = (y[0], y[1], y[2]);
    let m0 = C64::new(-p.omega12 + off, -0.5 * p.gamma_minus()) * ca + cs * d;
    let m1 = ca * d + C64::new(p.omega12 + off, -0.5 * p.gamma_plus()) * cs - gs * cc;
    let m2 = gs * cs + C64::new(0.0, -0.5 * p.kappa) * cc;
    dy[0] = -i * m0;
    dy[1] = -i * m1;
    dy[2] = -i * m2;
    dy[3] = C64::new(p.kappa * cc.norm_sqr(), 0.0);
    dy[4] = C64::new(p.gamma_plus() * cs.norm_sqr(), 0.0);
    dy[5] = C64::new(p.gamma_minus() * ca.norm_sqr(), 0.0);
}

/// Integrates the amplitude system and samples it on a uniform grid.
///
/// Aborts when the norm grows beyond round-off or the excitation budget
/// stops closing, both of which indicate a misconfigured integrator.
pub fn integrate_amplitudes(
    p: &PhysicalParams,
    ctrl: &ControlSchedule,
    init: &SingleExcitationState,
    opts: &AmplitudeOptions,
) -> Result<Trajectory, DynamicsError> {
    p.validate()?;
    ctrl.validate()?;
    if ctrl.has_drive() {
        return Err(DynamicsError::DriveNotSupported);
    }
    let n0 = init.norm_sqr();
    if !(n0.is_finite() && n0 <= 1.0 + 1e-9) {
        return Err(DynamicsError::InvalidState(format!(
            "amplitude norm {n0} exceeds 1"
        )));
    }
    if !(opts.sample_dt > 0.0) {
        return Err(DynamicsError::InvalidOptions("sample_dt must be positive".into()));
    }
    let grid = sample_grid(ctrl.t_end, opts.sample_dt);
    let mut traj = Trajectory::empty(TrajectorySource::Amplitudes, n0, grid.len());
    let mut amps = Vec::with_capacity(grid.len());
    let zero = C64::new(0.0, 0.0);
    let y0 = vec![init.amp_a, init.amp_s, init.amp_cav, zero, zero, zero];

    let (_, stats) = integrate(
        |t, y, dy| amplitude_rhs(p, ctrl, t, y, dy),
        0.0,
        y0,
        ctrl.t_end,
        &ctrl.breakpoints(),
        &grid,
        &opts.ode,
        |t, y| {
            let phase = C64::from_polar(1.0, -p.omega_c * t);
            let (ca, cs, cc) = (y[0] * phase, y[1] * phase, y[2] * phase);
            let norm = ca.norm_sqr() + cs.norm_sqr() + cc.norm_sqr();
            if !norm.is_finite() {
                return Err(DynamicsError::NonFinite { t });
            }
            if norm > n0 + NORM_GROWTH_TOL {
                return Err(DynamicsError::NormGrowth { t, excess: norm - n0 });
            }
            let e = hybrid_eigenstates(p, ctrl.delta12_at(t));
            traj.t.push(t);
            traj.pop_minus_eff.push((ca * e.nu - cs * e.mu).norm_sqr());
            traj.pop_plus_eff.push((ca * e.mu + cs * e.nu).norm_sqr());
            traj.pop_s.push(cs.norm_sqr());
            traj.pop_a.push(ca.norm_sqr());
            traj.pop_cavity.push(cc.norm_sqr());
            traj.power.push(p.kappa * cc.norm_sqr());
            traj.field.push(cc);
            traj.emitted.push(y[3].re);
            traj.leaked_s.push(y[4].re);
            traj.leaked_a.push(y[5].re);
            traj.drive_input.push(0.0);
            traj.incident.push(0.0);
            amps.push([ca, cs, cc]);
            let k = traj.len() - 1;
            let residual = traj.flux_residual(k);
            if residual.abs() > FLUX_TOL {
                return Err(DynamicsError::FluxImbalance { t, residual });
            }
            Ok(())
        },
    )?;
    traj.amplitudes = Some(amps);
    traj.stats = stats;
    Ok(traj)
}
