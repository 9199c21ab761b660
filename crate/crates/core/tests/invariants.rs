mod common;

use common::*;
use duoatom::dynamics::{
    integrate_amplitudes, integrate_master, AmplitudeOptions, ControlSchedule, DensityMatrix, MasterOptions, OdeOptions,
    Profile, Segment, SingleExcitationState,
};
use duoatom::params::PhysicalParams;
use duoatom::protocols::{
    bandwidth_optimum_scan, run_emission, run_memory, EmissionScenario, GateStart, InitialState, StoreGate,
};
use duoatom::signal::{TimeFrequencyMap, WignerOptions};
use proptest::prelude::*;

fn reference() -> PhysicalParams {
    PhysicalParams::micropillar_reference()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn amplitude_and_master_populations_agree(ctrl in undriven_schedule(), init in one_excitation_state()) {
        let p = reference();
        let a = integrate_amplitudes(&p, &ctrl, &init, &AmplitudeOptions::default()).unwrap();
        let rho = DensityMatrix::from_single_excitation(1, &init).unwrap();
        let opts = MasterOptions {
            ode: OdeOptions { rtol: 1e-10, atol: 1e-12, ..OdeOptions::default() },
            ..MasterOptions::default()
        };
        let m = integrate_master(&p, &ctrl, &rho, &opts).unwrap();
        prop_assert_eq!(a.t.len(), m.t.len());
        for i in 0..a.t.len() {
            prop_assert!((a.pop_s[i] - m.pop_s[i]).abs() < 1e-6);
            prop_assert!((a.pop_a[i] - m.pop_a[i]).abs() < 1e-6);
            prop_assert!((a.pop_cavity[i] - m.pop_cavity[i]).abs() < 1e-6);
            prop_assert!((a.emitted[i] - m.emitted[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn excitation_budget_closes(ctrl in undriven_schedule(), init in one_excitation_state()) {
        let tr = integrate_amplitudes(&reference(), &ctrl, &init, &AmplitudeOptions::default()).unwrap();
        prop_assert!(tr.max_flux_residual() < 1e-4);
        for i in 0..tr.len() {
            let pops = [tr.pop_s[i], tr.pop_a[i], tr.pop_cavity[i], tr.pop_minus_eff[i], tr.pop_plus_eff[i]];
            prop_assert!(pops.iter().all(|&x| (-1e-12..=1.0 + 1e-8).contains(&x)));
        }
    }

    #[test]
    fn rate_is_monotone_up_to_a_quarter_kappa(a in 0.0..100.0f64, b in 0.0..100.0f64) {
        let p = reference();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-6);
        let r = |d: f64| duoatom::spectral::effective_rates(&p, uev(d)).cavity_rate;
        prop_assert!(r(lo) < r(hi));
    }
}

fn frozen_dark_params() -> PhysicalParams {
    let mut p = reference();
    p.gamma12 = p.gamma;
    p
}

fn pulse_emission(p: PhysicalParams, delay: f64, t_end: f64) -> TimeFrequencyMap {
    let mut ctrl = ControlSchedule::new(
        Profile::from_segments(vec![Segment::Gauss {
            center: 1.0 + delay,
            fwhm: 0.3,
            peak: uev(20.0),
        }]),
        t_end,
    );
    ctrl.omega0_tracking = true;
    let mut s = EmissionScenario::new(p, ctrl);
    s.initial = InitialState::Dark;
    s.integrator.sample_dt = 0.005;
    s.outputs.wigner = Some(WignerOptions::window(p.omega_c, 30.0));
    run_emission(&s).unwrap().wigner.unwrap()
}

#[test]
fn delaying_the_schedule_translates_the_map() {
    let p = frozen_dark_params();
    let a = pulse_emission(p, 0.0, 3.0);
    let b = pulse_emission(p, 0.5, 3.5);
    assert_eq!(a.omega, b.omega);
    let shift = 100;
    assert!((b.t[shift] - 0.5).abs() < 1e-12);
    let scale = a.max();
    let mut worst = 0.0f64;
    for it in 0..a.t.len() {
        for iw in 0..a.omega.len() {
            worst = worst.max((a.get(it, iw) - b.get(it + shift, iw)).abs());
        }
    }
    assert!(worst / scale < 1e-6, "{worst:e}");
}

#[test]
fn moving_emitters_and_cavity_together_translates_the_map() {
    let p = frozen_dark_params();
    let a = pulse_emission(p, 0.0, 3.0);
    let steps = 20;
    let offset = steps as f64 * a.d_omega();
    let mut q = p;
    q.omega_c += offset;
    let mut ctrl = ControlSchedule::new(
        Profile::from_segments(vec![Segment::Gauss {
            center: 1.0,
            fwhm: 0.3,
            peak: uev(20.0),
        }]),
        3.0,
    );
    ctrl.omega0_tracking = true;
    ctrl.omega0 = Profile::constant(offset);
    let mut s = EmissionScenario::new(q, ctrl);
    s.initial = InitialState::Dark;
    s.integrator.sample_dt = 0.005;
    s.outputs.wigner = Some(WignerOptions::window(p.omega_c, 30.0));
    let b = run_emission(&s).unwrap().wigner.unwrap();
    assert_eq!(a.omega, b.omega);
    let scale = a.max();
    let mut worst = 0.0f64;
    for it in 0..a.t.len() {
        for iw in 0..a.omega.len() - steps {
            worst = worst.max((a.get(it, iw) - b.get(it, iw + steps)).abs());
        }
    }
    assert!(worst / scale < 1e-6, "{worst:e}");
}

#[test]
fn tightening_the_tolerance_converges() {
    let p = reference();
    let sc = scenario("fig3_d10");
    let s = &sc.emission.unwrap().scenario;
    let init = s.initial.resolve(&p, &s.schedule);
    let run = |rtol: f64| {
        let opts = AmplitudeOptions {
            ode: OdeOptions {
                rtol,
                atol: rtol * 1e-3,
                ..OdeOptions::default()
            },
            sample_dt: 0.05,
        };
        let tr = integrate_amplitudes(&p, &s.schedule, &init, &opts).unwrap();
        let k = tr.len() / 3;
        [tr.pop_minus_eff[k], tr.pop_cavity[k], tr.emitted[k], tr.total_emitted()]
    };
    let reference = run(1e-12);
    let err = |x: [f64; 4]| {
        x.iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    for rtol in [1e-5, 1e-6, 1e-7, 1e-8] {
        let coarse = run(rtol);
        let fine = run(0.5 * rtol);
        let estimate = err(coarse).max(
            coarse
                .iter()
                .zip(&fine)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
        assert!(err(fine) <= estimate + 1e-11, "rtol {rtol}: {} vs {estimate}", err(fine));
        assert!(err(coarse) < 100.0 * rtol, "rtol {rtol}: {}", err(coarse));
    }
}

#[test]
fn frozen_dark_state_stays_put() {
    let p = frozen_dark_params();
    let ctrl = ControlSchedule::constant(0.0, 20.0);
    let tr = integrate_amplitudes(&p, &ctrl, &SingleExcitationState::dark(), &AmplitudeOptions::default()).unwrap();
    for i in 0..tr.len() {
        assert!((tr.pop_minus_eff[i] - 1.0).abs() < 1e-10);
    }
}

#[test]
fn golden_rule_rate_is_recovered_from_the_decay() {
    let p = reference();
    for d in [10.0, 40.0, 100.0] {
        let delta12 = uev(d);
        let r = duoatom::spectral::effective_rates(&p, delta12);
        let t_end = 2.0 / r.total_rate();
        let ctrl = ControlSchedule::constant(delta12, t_end);
        let opts = AmplitudeOptions {
            sample_dt: t_end / 400.0,
            ..AmplitudeOptions::default()
        };
        let tr = integrate_amplitudes(&p, &ctrl, &SingleExcitationState::minus_eff(&p, delta12), &opts).unwrap();
        let (i0, i1) = (tr.len() / 4, tr.len() - 1);
        let fitted = (tr.power[i0] / tr.power[i1]).ln() / (tr.t[i1] - tr.t[i0]);
        let expected = r.total_rate();
        assert!((fitted / expected - 1.0).abs() < 0.1, "{d} ueV: {fitted} vs {expected}");
    }
}

#[test]
fn stored_state_invariants_on_the_memory_scenario() {
    let m = scenario("fig6").memory.unwrap();
    let r = run_memory(&m).unwrap();
    assert!((0.0..=1.0).contains(&r.efficiency));
    assert!(r.flux_residual <= 1e-3, "{}", r.flux_residual);

    let fit = r.storage.unwrap();
    assert!((fit.rate / m.params.gamma_minus() - 1.0).abs() < 0.02, "{fit:?}");

    let release = m.release.unwrap();
    let stored = r.stored_state.unwrap();
    let b = run_emission(&m.release_emission(stored).unwrap()).unwrap();
    let tr = &r.trajectory;
    let k = tr.t.iter().position(|&t| t >= release.time - 1e-9).unwrap();
    let master = tr.total_emitted() - tr.emitted[k];
    let amplitude = b.trajectory.total_emitted();
    assert!((amplitude / master - 1.0).abs() < 0.01, "{amplitude} vs {master}");
}

#[test]
fn efficiency_is_linear_in_the_drive() {
    let mut m = scenario("fig6").memory.unwrap();
    m.release = None;
    m.store = Some(StoreGate {
        start: GateStart::At(1.3713),
        duration: 0.2,
    });
    m.t_end = 3.0;
    let eta = |n: f64| {
        let mut s = m.clone();
        s.mean_photons = n;
        run_memory(&s).unwrap().efficiency
    };
    let (weak, strong) = (eta(0.001), eta(0.01));
    assert!((weak / strong - 1.0).abs() < 0.01, "{weak} vs {strong}");
}

#[test]
fn equal_damping_freezes_the_stored_population() {
    let mut m = scenario("fig6").memory.unwrap();
    m.params.gamma12 = m.params.gamma;
    m.release = None;
    m.store = Some(StoreGate {
        start: GateStart::At(1.3713),
        duration: 0.2,
    });
    m.t_end = 8.0;
    let r = run_memory(&m).unwrap();
    let tr = &r.trajectory;
    let held: Vec<f64> = (0..tr.len())
        .filter(|&i| tr.t[i] >= 3.0)
        .map(|i| tr.atomic_population(i))
        .collect();
    let (lo, hi) = held
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    assert!(lo > 0.0);
    assert!((hi - lo) / hi < 1e-6, "{lo} {hi}");
}

#[test]
fn scans_do_not_depend_on_worker_count() {
    let m = scenario("fig6").memory.unwrap();
    let grid = [uev(20.0), uev(43.33), uev(86.67)];
    let one = bandwidth_optimum_scan(&m, &grid, 1).unwrap();
    let three = bandwidth_optimum_scan(&m, &grid, 3).unwrap();
    assert_eq!(one, three);
    // an over-broadened absorber does worse than the optimum
    assert!(one.rows[2].efficiency < one.rows[1].efficiency);
}

#[test]
fn later_pulses_need_larger_detuning() {
    for label in ["fig4_dt5", "fig4_dt11", "fig5"] {
        let (b, schedule) = emit(&scenario(label));
        let pulses = schedule.delta12.gauss_pulses();
        let amps: Vec<f64> = pulses.iter().map(|q| q.3).collect();
        let half = pulses.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::INFINITY, f64::min) / 2.0;
        assert!(amps.windows(2).all(|w| w[1] > w[0]), "{label}: {amps:?}");
        let peaks: Vec<f64> = pulses
            .iter()
            .map(|q| b.trajectory.peak_power_in(q.1 - half, q.1 + half).1)
            .collect();
        let first = peaks[0];
        assert!(peaks.iter().all(|p| (p / first - 1.0).abs() < 0.05), "{label}: {peaks:?}");
    }
}

#[test]
fn larger_final_detuning_emits_sooner_and_faster() {
    let burst = |label: &str| {
        let (b, _) = emit(&scenario(label));
        let tr = b.trajectory;
        let (t_peak, p_peak) = tr.peak_power();
        let k = tr.t.iter().position(|&t| t > t_peak).unwrap();
        let t_fall = (k..tr.len())
            .find(|&i| tr.power[i] < p_peak / std::f64::consts::E)
            .map(|i| tr.t[i])
            .unwrap();
        (t_peak, t_fall - t_peak)
    };
    let (t10, decay10) = burst("fig3_d10");
    let (t50, decay50) = burst("fig3_d50");
    assert!(t50 < t10, "{t50} vs {t10}");
    assert!(decay50 < decay10, "{decay50} vs {decay10}");
}
