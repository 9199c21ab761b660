#![allow(dead_code)]

use duoatom::config::{load, Scenario};
use duoatom::dynamics::master::integrate_master_capture;
use duoatom::dynamics::{
    sample_grid, ControlSchedule, DensityMatrix, MasterOptions, Profile, Segment, SingleExcitationState,
};
use duoatom::params::{energy_to_angular, PhysicalParams};
use duoatom::protocols::{equalize_second_pulse, run_emission, EmissionBundle};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

/// Scenario by label, e.g. `fig4_dt5` or `fig6`.
pub fn scenario(label: &str) -> Scenario {
    let stem = label.split('_').next().unwrap();
    load(stem)
        .unwrap()
        .into_iter()
        .find(|s| s.label() == label)
        .unwrap_or_else(|| panic!("no scenario {label}"))
}

pub fn emission_scenarios() -> Vec<Scenario> {
    ["fig3", "fig4", "fig5"]
        .iter()
        .flat_map(|n| load(n).unwrap())
        .collect()
}

/// Emission bundle as produced by `emit`, equalizing pulses when the
/// scenario asks for it.
pub fn emit(sc: &Scenario) -> (EmissionBundle, ControlSchedule) {
    let settings = sc.emission.as_ref().expect("emission scenario");
    let mut s = settings.scenario.clone();
    if settings.equalize {
        s.schedule = equalize_second_pulse(&s.params, &s.schedule, s.initial, &s.integrator)
            .unwrap()
            .schedule;
    }
    (run_emission(&s).unwrap(), s.schedule)
}

pub fn argmax(y: &[f64]) -> usize {
    (0..y.len()).fold(0, |a, i| if y[i] > y[a] { i } else { a })
}

pub fn sign_changes(y: &[f64], floor: f64) -> usize {
    let s: Vec<f64> = y.iter().copied().filter(|v| v.abs() > floor).collect();
    s.windows(2).filter(|w| w[0].signum() != w[1].signum()).count()
}

/// Worst trace drift, smallest eigenvalue and largest flux residual over
/// every output sample of a master run.
#[derive(Debug, Clone, Copy)]
pub struct Audit {
    pub trace_drift: f64,
    pub min_eigenvalue: f64,
    pub flux_residual: f64,
    pub samples: usize,
}

pub fn audit_master(p: &PhysicalParams, ctrl: &ControlSchedule, init: &DensityMatrix, opts: &MasterOptions) -> Audit {
    let grid = sample_grid(ctrl.t_end, opts.sample_dt);
    let (tr, states) = integrate_master_capture(p, ctrl, init, opts, &grid).unwrap();
    Audit {
        trace_drift: states.iter().map(|r| (r.trace() - 1.0).norm()).fold(0.0, f64::max),
        min_eigenvalue: states.iter().map(|r| r.min_eigenvalue()).fold(f64::INFINITY, f64::min),
        flux_residual: tr.max_flux_residual(),
        samples: states.len(),
    }
}

pub fn uev(x: f64) -> f64 {
    energy_to_angular(x)
}

/// Undriven schedule with a detuning offset, ramp and pulse, an emitter
/// frequency offset and optional tracking.
pub fn undriven_schedule() -> impl Strategy<Value = ControlSchedule> {
    (
        (0.0..60.0f64, -60.0..60.0f64, 0.2..1.5f64, 0.1..0.8f64),
        (-30.0..30.0f64, 0.5..2.5f64, 0.1..0.6f64),
        (-20.0..20.0f64, any::<bool>(), 2.0..4.0f64),
    )
        .prop_map(|((d0, dr, rs, rd), (gp, gc, gw), (w0, tracking, t_end))| {
            let mut c = ControlSchedule::new(
                Profile::from_segments(vec![
                    Segment::Const { value: uev(d0) },
                    Segment::Ramp {
                        start: rs,
                        duration: rd,
                        from: 0.0,
                        to: uev(dr),
                    },
                    Segment::Gauss {
                        center: gc,
                        fwhm: gw,
                        peak: uev(gp),
                    },
                ]),
                t_end,
            );
            c.omega0 = Profile::constant(uev(w0));
            c.omega0_tracking = tracking;
            c
        })
}

/// Single-excitation amplitudes with norm in (0, 1].
pub fn one_excitation_state() -> impl Strategy<Value = SingleExcitationState> {
    (prop::array::uniform6(-1.0..1.0f64), 0.1..1.0f64).prop_map(|(v, norm)| {
        let z = [C64::new(v[0], v[1]), C64::new(v[2], v[3]), C64::new(v[4], v[5])];
        let n = z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt().max(1e-3);
        let k = norm.sqrt() / n;
        SingleExcitationState::new(z[0] * k, z[1] * k, z[2] * k)
    })
}
