//! Shaped single-photon emission from the subradiant state.

use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::dynamics::{
    adiabaticity_check, integrate_amplitudes, AdiabaticityReport, AmplitudeOptions, ControlSchedule, Segment,
    SingleExcitationState, Trajectory, DEFAULT_ADIABATIC_THRESHOLD,
};
use crate::params::PhysicalParams;
use crate::signal::{
    correlation_single_excitation, spectral_density, wigner_ville, CorrelationKernel, SpectralDensity,
    TimeFrequencyMap, WignerOptions,
};
use crate::spectral::plus_state_rate;

/// Largest tolerated |+⟩_eff leakage, as a fraction of the cavity emission.
pub const MAX_PLUS_LEAKAGE: f64 = 0.05;

/// Relative peak-power mismatch accepted by [`equalize_second_pulse`].
pub const PEAK_MATCH_TOL: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// |−⟩_eff at the schedule's initial detuning.
    #[default]
    MinusEff,
    PlusEff,
    /// |−,0⟩ regardless of the initial detuning.
    Dark,
    CavityPhoton,
    Amplitudes(SingleExcitationState),
}

impl InitialState {
    pub fn resolve(&self, p: &PhysicalParams, ctrl: &ControlSchedule) -> SingleExcitationState {
        let d0 = ctrl.delta12_at(0.0);
        match *self {
            InitialState::MinusEff => SingleExcitationState::minus_eff(p, d0),
            InitialState::PlusEff => SingleExcitationState::plus_eff(p, d0),
            InitialState::Dark => SingleExcitationState::dark(),
            InitialState::CavityPhoton => SingleExcitationState::cavity_photon(),
            InitialState::Amplitudes(s) => s,
        }
    }
}

/// Signal products computed after the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct EmissionOutputs {
    pub kernel: bool,
    pub wigner: Option<WignerOptions>,
    pub spectrum: Option<WignerOptions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionScenario {
    pub params: PhysicalParams,
    pub schedule: ControlSchedule,
    pub initial: InitialState,
    pub integrator: AmplitudeOptions,
    pub adiabatic_threshold: f64,
    /// Run a schedule that fails the adiabaticity check, with a warning.
    pub allow_nonadiabatic: bool,
    pub outputs: EmissionOutputs,
}

impl EmissionScenario {
    pub fn new(params: PhysicalParams, schedule: ControlSchedule) -> Self {
        Self {
            params,
            schedule,
            initial: InitialState::default(),
            integrator: AmplitudeOptions::default(),
            adiabatic_threshold: DEFAULT_ADIABATIC_THRESHOLD,
            allow_nonadiabatic: false,
            outputs: EmissionOutputs::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmissionBundle {
    pub trajectory: Trajectory,
    pub adiabaticity: AdiabaticityReport,
    /// ∫Γ₊(t)P₊(t)dt over the cavity-emitted quanta.
    pub plus_leakage: f64,
    pub warnings: Vec<String>,
    pub kernel: Option<CorrelationKernel>,
    pub wigner: Option<TimeFrequencyMap>,
    pub spectrum: Option<SpectralDensity>,
}

/// Gates a schedule on the adiabaticity check, returning the warning to
/// record when the override is set.
pub(crate) fn gate_adiabaticity(
    p: &PhysicalParams,
    ctrl: &ControlSchedule,
    threshold: f64,
    allow: bool,
) -> Result<(AdiabaticityReport, Option<String>), ProtocolError> {
    let report = adiabaticity_check(ctrl, p, threshold);
    if report.pass {
        return Ok((report, None));
    }
    if !allow {
        return Err(ProtocolError::NotAdiabatic(report));
    }
    Ok((
        report,
        Some(format!(
            "nonadiabatic schedule: max |dΔ12/dt|/Ω12² = {:.3} at t = {:.3} ns (threshold {:.3})",
            report.max_ratio, report.at, threshold
        )),
    ))
}

/// Quanta lost through |+⟩_eff relative to the cavity emission.
pub fn plus_leakage(p: &PhysicalParams, ctrl: &ControlSchedule, traj: &Trajectory) -> f64 {
    let rate = |i: usize| {
        let t = traj.t[i];
        plus_state_rate(p, ctrl.delta12_at(t), ctrl.frame_shift(t, p.omega12)) * traj.pop_plus_eff[i]
    };
    let lost: f64 = (1..traj.len())
        .map(|i| 0.5 * (rate(i) + rate(i - 1)) * (traj.t[i] - traj.t[i - 1]))
        .sum();
    let emitted = traj.total_emitted();
    if emitted > 1e-12 {
        lost / emitted
    } else if lost > 1e-12 {
        f64::INFINITY
    } else {
        0.0
    }
}

pub fn run_emission(s: &EmissionScenario) -> Result<EmissionBundle, ProtocolError> {
    let (adiabaticity, warning) =
        gate_adiabaticity(&s.params, &s.schedule, s.adiabatic_threshold, s.allow_nonadiabatic)?;
    let init = s.initial.resolve(&s.params, &s.schedule);
    let trajectory = integrate_amplitudes(&s.params, &s.schedule, &init, &s.integrator)?;
    let leakage = plus_leakage(&s.params, &s.schedule, &trajectory);
    if s.schedule.delta12.gauss_pulses().len() >= 2 && leakage > MAX_PLUS_LEAKAGE {
        return Err(ProtocolError::Leakage(leakage));
    }

    let want_kernel = s.outputs.kernel || s.outputs.wigner.is_some() || s.outputs.spectrum.is_some();
    let kernel = if want_kernel {
        Some(correlation_single_excitation(&trajectory)?)
    } else {
        None
    };
    let wigner = match (&kernel, &s.outputs.wigner) {
        (Some(k), Some(o)) => Some(wigner_ville(k, o)?),
        _ => None,
    };
    let spectrum = match (&kernel, &s.outputs.spectrum) {
        (Some(k), Some(o)) => Some(spectral_density(k, o)?),
        _ => None,
    };
    Ok(EmissionBundle {
        trajectory,
        adiabaticity,
        plus_leakage: leakage,
        warnings: warning.into_iter().collect(),
        kernel,
        wigner,
        spectrum,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equalization {
    pub schedule: ControlSchedule,
    /// Peak Δ₁₂ of each Gaussian pulse in time order, rad/ns.
    pub amplitudes: Vec<f64>,
    /// (time, power) of the emitted-power maximum within each pulse window.
    pub peaks: Vec<(f64, f64)>,
    pub runs: usize,
}

/// Raises each later Gaussian Δ₁₂ pulse until its emitted-power peak
/// matches the first pulse's, by bisection on the pulse amplitude.
///
/// Pulse windows are split halfway between consecutive pulse centres.
/// The first pulse and all non-Gaussian segments are left untouched.
pub fn equalize_second_pulse(
    p: &PhysicalParams,
    base: &ControlSchedule,
    initial: InitialState,
    opts: &AmplitudeOptions,
) -> Result<Equalization, ProtocolError> {
    let pulses = base.delta12.gauss_pulses();
    let idx: Vec<usize> = pulses.iter().map(|q| q.0).collect();
    let centers: Vec<f64> = pulses.iter().map(|q| q.1).collect();
    let mut bounds = vec![f64::NEG_INFINITY];
    bounds.extend(centers.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    bounds.push(f64::INFINITY);

    let mut sched = base.clone();
    let mut runs = 0usize;
    let mut evaluate = |sched: &ControlSchedule| -> Result<Vec<(f64, f64)>, ProtocolError> {
        runs += 1;
        let init = initial.resolve(p, sched);
        let tr = integrate_amplitudes(p, sched, &init, opts)?;
        Ok((0..centers.len()).map(|k| tr.peak_power_in(bounds[k], bounds[k + 1])).collect())
    };
    let set = |sched: &mut ControlSchedule, k: usize, a: f64| {
        if let Segment::Gauss { peak, .. } = &mut sched.delta12.segments[idx[k]] {
            *peak = a;
        }
    };
    let get = |sched: &ControlSchedule, k: usize| match sched.delta12.segments[idx[k]] {
        Segment::Gauss { peak, .. } => peak,
        _ => unreachable!("gauss_pulses indexes Gauss segments"),
    };

    let mut peaks = evaluate(&sched)?;
    for _sweep in 0..3 {
        if peaks.iter().skip(1).all(|q| (q.1 / peaks[0].1 - 1.0).abs() <= PEAK_MATCH_TOL) {
            break;
        }
        for k in 1..centers.len() {
            let sign = if get(&sched, k) < 0.0 { -1.0 } else { 1.0 };
            let mut ratio_at = |sched: &mut ControlSchedule, a: f64| -> Result<(f64, Vec<(f64, f64)>), ProtocolError> {
                set(sched, k, sign * a);
                let pk = evaluate(sched)?;
                Ok((pk[k].1 / pk[0].1, pk))
            };
            let start = get(&sched, k).abs().max(get(&sched, 0).abs());
            let (mut lo, mut hi) = (start, start);
            let (mut r, mut pk) = ratio_at(&mut sched, start)?;
            let mut best = (r, start, pk.clone());
            if r < 1.0 {
                let mut doublings = 0;
                while r < 1.0 {
                    if doublings == 8 {
                        set(&mut sched, k, sign * best.1);
                        return Err(ProtocolError::Unreachable {
                            pulse: k,
                            best_ratio: best.0,
                            amplitude: best.1,
                        });
                    }
                    lo = hi;
                    hi *= 2.0;
                    doublings += 1;
                    (r, pk) = ratio_at(&mut sched, hi)?;
                    if r > best.0 {
                        best = (r, hi, pk.clone());
                    }
                }
            } else {
                while r > 1.0 && lo > 1e-6 * start {
                    hi = lo;
                    lo *= 0.5;
                    (r, pk) = ratio_at(&mut sched, lo)?;
                }
            }
            let mut chosen = (r, if r < 1.0 { lo } else { hi }, pk);
            for _ in 0..60 {
                if (chosen.0 - 1.0).abs() <= 0.25 * PEAK_MATCH_TOL || hi - lo <= 1e-9 * hi {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let (rm, pm) = ratio_at(&mut sched, mid)?;
                if rm < 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                chosen = (rm, mid, pm);
            }
            set(&mut sched, k, sign * chosen.1);
            peaks = chosen.2;
        }
    }

    if let Some((k, q)) = peaks
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, q)| (q.1 / peaks[0].1 - 1.0).abs() > PEAK_MATCH_TOL)
    {
        return Err(ProtocolError::Unreachable {
            pulse: k,
            best_ratio: q.1 / peaks[0].1,
            amplitude: get(&sched, k),
        });
    }
    let amplitudes = (0..centers.len()).map(|k| get(&sched, k)).collect();
    Ok(Equalization {
        schedule: sched,
        amplitudes,
        peaks,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Profile, Segment};
    use crate::params::energy_to_angular;

    fn two_pulses(gap: f64) -> ControlSchedule {
        let a = energy_to_angular(20.0);
        let mut ctrl = ControlSchedule::new(
            Profile::from_segments(vec![
                Segment::Gauss {
                    center: 1.0,
                    fwhm: 0.5,
                    peak: a,
                },
                Segment::Gauss {
                    center: 1.0 + gap,
                    fwhm: 0.5,
                    peak: a,
                },
            ]),
            gap + 4.0,
        );
        ctrl.omega0_tracking = true;
        ctrl
    }

    #[test]
    fn dark_schedule_emits_nothing_into_cavity() {
        let p = PhysicalParams::micropillar_reference();
        let b = run_emission(&EmissionScenario::new(p, ControlSchedule::constant(0.0, 5.0))).unwrap();
        let tr = &b.trajectory;
        assert!(tr.total_emitted() < 1e-20);
        let leaked_s = *tr.leaked_s.last().unwrap();
        assert!(leaked_s < 1e-20);
        let expected = 1.0 - (-p.gamma_minus() * 5.0).exp();
        assert!((tr.leaked_a.last().unwrap() - expected).abs() < 1e-9);
        assert_eq!(b.plus_leakage, 0.0);
    }

    #[test]
    fn step_is_rejected_without_override() {
        let p = PhysicalParams::micropillar_reference();
        let ctrl = ControlSchedule::new(
            Profile::from_segments(vec![Segment::Ramp {
                start: 0.5,
                duration: 0.0,
                from: 0.0,
                to: 20.0,
            }]),
            2.0,
        );
        let mut s = EmissionScenario::new(p, ctrl);
        assert!(matches!(run_emission(&s), Err(ProtocolError::NotAdiabatic(_))));
        s.allow_nonadiabatic = true;
        let b = run_emission(&s).unwrap();
        assert_eq!(b.warnings.len(), 1);
    }

    #[test]
    fn single_pulse_is_unchanged() {
        let p = PhysicalParams::micropillar_reference();
        let mut ctrl = two_pulses(5.0);
        ctrl.delta12.segments.truncate(1);
        let eq = equalize_second_pulse(&p, &ctrl, InitialState::Dark, &Default::default()).unwrap();
        assert_eq!(eq.schedule, ctrl);
        assert_eq!(eq.runs, 1);
    }

    #[test]
    fn second_pulse_is_raised_until_peaks_match() {
        let mut p = PhysicalParams::micropillar_reference();
        p.omega_c = -p.omega12;
        let ctrl = two_pulses(5.0);
        let eq = equalize_second_pulse(&p, &ctrl, InitialState::Dark, &Default::default()).unwrap();
        assert!(eq.amplitudes[1] > eq.amplitudes[0]);
        assert!((eq.peaks[1].1 / eq.peaks[0].1 - 1.0).abs() <= PEAK_MATCH_TOL);
        let mut s = EmissionScenario::new(p, eq.schedule);
        s.initial = InitialState::Dark;
        let b = run_emission(&s).unwrap();
        assert!(b.plus_leakage < MAX_PLUS_LEAKAGE);
    }
}
