//! Acceptance gate: one line per criterion, nonzero exit on any failure.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use duoatom::dynamics::{
    integrate_amplitudes, integrate_master, AmplitudeOptions, ControlSchedule, DensityMatrix, MasterOptions,
    SingleExcitationState,
};
use duoatom::params::{angular_to_energy, HBAR_UEV_NS};
use duoatom::protocols::{bandwidth_optimum_scan, run_memory, timing_sensitivity, MemoryScenario};
use duoatom::signal::{local_maxima, mean_peak_spacing};
use duoatom::spectral::{hybrid_eigenstates, spectral_scan, uniform_grid};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;

type Outcome = Result<String, String>;

/// Name, check and runtime budget.
type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn check(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn beta_and_rate_curve() -> Outcome {
    let sc = scenario("fig2");
    let p = sc.params;
    let rows = spectral_scan(&p, &uniform_grid(&p, 0.25, 251)).map_err(|e| e.to_string())?;
    let (bmin, bmax) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.beta), hi.max(r.beta)));
    check(bmin >= 0.85 && bmax <= 0.88, format!("beta range [{bmin:.4}, {bmax:.4}]"))?;
    let rates: Vec<f64> = rows.iter().map(|r| r.gamma_over_gamma0).collect();
    check(rates[0] == 0.0, format!("rate at zero detuning {}", rates[0]))?;
    check(
        rates.windows(2).all(|w| w[1] > w[0]),
        "rate is not strictly increasing".into(),
    )?;
    let end = *rates.last().unwrap();
    check((end - 0.62).abs() <= 0.05, format!("rate at 0.25 kappa {end:.4}"))?;
    Ok(format!("beta in [{bmin:.4}, {bmax:.4}], rate 0 -> {end:.4}"))
}

fn dark_state_lifetime() -> Outcome {
    let base = scenario("fig6").memory.unwrap();
    let mut out = Vec::new();
    for ratio in [0.988, 0.99] {
        let mut m = base.clone();
        let gamma = m.params.gamma;
        m.params.gamma12 = ratio * gamma;
        m.release = None;
        m.t_end = 12.0;
        let r = run_memory(&m).map_err(|e| e.to_string())?;
        let fit = r.storage.ok_or("no storage window")?;
        check(
            (90.0..=115.0).contains(&fit.lifetime),
            format!("lifetime {:.2} ns at gamma12/gamma = {ratio}", fit.lifetime),
        )?;
        out.push(format!("{ratio}: {:.2} ns", fit.lifetime));
    }
    Ok(out.join(", "))
}

fn memory_efficiency() -> Outcome {
    let sc = scenario("fig6");
    let m = sc.memory.clone().unwrap();
    let r = run_memory(&m).map_err(|e| e.to_string())?;
    check(
        (r.efficiency - 0.68).abs() <= 0.05,
        format!("efficiency {:.4}", r.efficiency),
    )?;

    let scan = bandwidth_optimum_scan(&m, &sc.scan.bandwidth_grid, workers()).map_err(|e| e.to_string())?;
    let target = 2.0 / 3.0;
    check(
        (scan.optimum_ratio - target).abs() <= 0.15 * target,
        format!("bandwidth optimum ratio {:.4}", scan.optimum_ratio),
    )?;

    let timing = timing_sensitivity(&m, &sc.scan.timing_offsets, workers()).map_err(|e| e.to_string())?;
    let loss = |o: f64| {
        timing
            .rows
            .iter()
            .find(|r| (r.offset - o).abs() < 1e-9)
            .map(|r| r.relative_loss)
            .ok_or(format!("offset {o} missing from the timing scan"))
    };
    for o in [-0.1, -0.05, 0.05, 0.1] {
        let l = loss(o)?;
        check(l <= 0.05, format!("loss {l:.4} at {:.0} ps", o * 1e3))?;
    }
    for o in [-0.2, -0.3, 0.2, 0.3] {
        let l = loss(o)?;
        check(l > 0.05, format!("loss {l:.4} at {:.0} ps", o * 1e3))?;
    }
    for side in [-1.0, 1.0] {
        let l: Vec<f64> = [0.1, 0.2, 0.3].iter().map(|o| loss(side * o)).collect::<Result<_, _>>()?;
        check(l[0] < l[1] && l[1] < l[2], format!("losses not monotone beyond 100 ps: {l:?}"))?;
    }
    Ok(format!(
        "efficiency {:.4}, optimum ratio {:.4} at {:.1} ueV, loss {:.3}/{:.3} at -/+100 ps, {:.3}/{:.3} at -/+300 ps",
        r.efficiency,
        scan.optimum_ratio,
        angular_to_energy(scan.optimum_delta12),
        loss(-0.1)?,
        loss(0.1)?,
        loss(-0.3)?,
        loss(0.3)?
    ))
}

fn amplitude_master_agreement() -> Outcome {
    let mut runner = TestRunner::deterministic();
    let strategy = (undriven_schedule(), one_excitation_state());
    let p = scenario("fig2").params;
    let aopts = AmplitudeOptions::default();
    let mopts = MasterOptions {
        ode: duoatom::dynamics::OdeOptions {
            rtol: 1e-10,
            atol: 1e-12,
            ..Default::default()
        },
        ..MasterOptions::default()
    };
    let mut worst = 0.0f64;
    for case in 0..20 {
        let (ctrl, init): (ControlSchedule, SingleExcitationState) =
            strategy.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
        let a = integrate_amplitudes(&p, &ctrl, &init, &aopts).map_err(|e| format!("case {case}: {e}"))?;
        let rho = DensityMatrix::from_single_excitation(1, &init).map_err(|e| e.to_string())?;
        let m = integrate_master(&p, &ctrl, &rho, &mopts).map_err(|e| format!("case {case}: {e}"))?;
        check(a.t.len() == m.t.len(), format!("case {case}: grids differ"))?;
        for i in 0..a.t.len() {
            for (x, y) in [
                (a.pop_s[i], m.pop_s[i]),
                (a.pop_a[i], m.pop_a[i]),
                (a.pop_cavity[i], m.pop_cavity[i]),
                (a.pop_minus_eff[i], m.pop_minus_eff[i]),
                (a.pop_plus_eff[i], m.pop_plus_eff[i]),
            ] {
                worst = worst.max((x - y).abs());
            }
        }
        check(worst < 1e-6, format!("case {case}: populations differ by {worst:e}"))?;
    }
    Ok(format!("20 schedules, max population difference {worst:.1e}"))
}

fn conservation_suite() -> Outcome {
    let mut lines = Vec::new();
    let mut record = |label: String, a: Audit| -> Result<(), String> {
        check(
            a.trace_drift < 1e-6 && a.min_eigenvalue >= -1e-8 && a.flux_residual < 1e-4,
            format!("{label}: {a:?}"),
        )?;
        lines.push(format!("{label} {:.0e}/{:.0e}/{:.0e}", a.trace_drift, a.min_eigenvalue, a.flux_residual));
        Ok(())
    };

    let fig2 = scenario("fig2");
    let p = fig2.params;
    let d = 0.1 * p.kappa;
    let ctrl = ControlSchedule::constant(d, 4.0);
    let rho = DensityMatrix::from_single_excitation(1, &SingleExcitationState::minus_eff(&p, d)).unwrap();
    record(fig2.label(), audit_master(&p, &ctrl, &rho, &MasterOptions::default()))?;

    for sc in emission_scenarios() {
        let s = &sc.emission.as_ref().unwrap().scenario;
        let amp = integrate_amplitudes(&s.params, &s.schedule, &s.initial.resolve(&s.params, &s.schedule), &s.integrator)
            .map_err(|e| e.to_string())?;
        check(
            amp.max_flux_residual() < 1e-4,
            format!("{}: amplitude flux residual {:e}", sc.label(), amp.max_flux_residual()),
        )?;
        let rho = DensityMatrix::from_single_excitation(1, &s.initial.resolve(&s.params, &s.schedule)).unwrap();
        let opts = MasterOptions {
            sample_dt: s.integrator.sample_dt,
            ..MasterOptions::default()
        };
        record(sc.label(), audit_master(&s.params, &s.schedule, &rho, &opts))?;
    }

    let fig6 = scenario("fig6");
    let m: MemoryScenario = fig6.memory.clone().unwrap();
    let r = run_memory(&m).map_err(|e| e.to_string())?;
    check(
        r.flux_residual < 1e-3,
        format!("fig6: flux residual per photon {:e}", r.flux_residual),
    )?;
    let ctrl = m.schedule(r.gate_start);
    let rho = DensityMatrix::ground(m.integrator.n_max);
    record(fig6.label(), audit_master(&m.params, &ctrl, &rho, &m.integrator))?;
    Ok(format!("drift/min eigenvalue/flux: {}", lines.join(", ")))
}

fn two_bin_signature() -> Outcome {
    let mut out = Vec::new();
    for label in ["fig4_dt5", "fig4_dt11"] {
        let (b, schedule) = emit(&scenario(label));
        let pulses = schedule.delta12.gauss_pulses();
        let dt = pulses[1].1 - pulses[0].1;

        let sp = b.spectrum.as_ref().ok_or("no spectrum")?;
        let e: Vec<f64> = sp.omega.iter().map(|w| angular_to_energy(*w)).collect();
        let comb = mean_peak_spacing(&e, &sp.s, 0.05).ok_or("no comb")?;
        let comb_expected = 2.0 * PI * HBAR_UEV_NS / dt;
        check(
            (comb / comb_expected - 1.0).abs() <= 0.02,
            format!("{label}: comb {comb:.5} ueV vs {comb_expected:.5}"),
        )?;

        let w = b.wigner.as_ref().ok_or("no Wigner map")?;
        let mid = w.nearest_time(0.5 * (pulses[0].1 + pulses[1].1));
        let fringe = mean_peak_spacing(&w.omega, w.row(mid), 0.05).ok_or("no fringes")?;
        let fringe_expected = 2.0 * PI / dt;
        check(
            (fringe / fringe_expected - 1.0).abs() <= 0.02,
            format!("{label}: fringe period {fringe:.5} rad/ns vs {fringe_expected:.5}"),
        )?;
        check(
            w.imag_residual < 1e-9,
            format!("{label}: imaginary residual {:e}", w.imag_residual),
        )?;
        let (lo, hi) = (w.min(), w.max());
        check(lo < -0.05 * hi, format!("{label}: min W {lo:e}, max W {hi:e}"))?;
        out.push(format!(
            "{label} comb {comb:.4}/{comb_expected:.4} ueV, fringe {fringe:.4}/{fringe_expected:.4} rad/ns, min/max W {:.3}",
            lo / hi
        ));
    }
    Ok(out.join("; "))
}

fn four_bin_structure() -> Outcome {
    let sc = scenario("fig5");
    let p = sc.params;
    let (b, schedule) = emit(&sc);
    let w = b.wigner.as_ref().ok_or("no Wigner map")?;
    let wmax = w.max();
    let band = uev(5.0);
    let mut lobes = Vec::new();
    let mut lines = Vec::new();
    for &(_, tc, _, _) in &schedule.delta12.gauss_pulses() {
        let line = hybrid_eigenstates(&p, schedule.delta12_at(tc)).omega_minus_eff + schedule.frame_shift(tc, p.omega12);
        lines.push(line);
        let mut best = f64::NEG_INFINITY;
        for (it, &t) in w.t.iter().enumerate() {
            if (t - tc).abs() > 0.15 {
                continue;
            }
            for (iw, &om) in w.omega.iter().enumerate() {
                if (om - line).abs() <= band {
                    best = best.max(w.get(it, iw));
                }
            }
        }
        check(
            best >= 0.2 * wmax,
            format!("lobe at {tc:.2} ns, {:.1} ueV reaches {:.3} of max", angular_to_energy(line - p.omega_c), best / wmax),
        )?;
        lobes.push(best / wmax);
    }

    let centers: Vec<f64> = schedule.delta12.gauss_pulses().iter().map(|q| q.1).collect();
    let t_mid = 0.5 * (centers[0] + centers[3]);
    let w_mid = lines.iter().sum::<f64>() / lines.len() as f64;
    let span = lines.iter().map(|l| (l - w_mid).abs()).fold(0.0, f64::max);

    let it = w.nearest_time(t_mid);
    let row: Vec<f64> = w
        .omega
        .iter()
        .zip(w.row(it))
        .filter(|(om, _)| (**om - w_mid).abs() <= span)
        .map(|(_, v)| *v)
        .collect();
    let row_max = local_maxima(&row, 0.05).len();
    let row_sign = sign_changes(&row, 1e-3 * wmax);

    let iw = w.nearest_omega(w_mid);
    let col: Vec<f64> = w
        .t
        .iter()
        .zip(w.column(iw))
        .filter(|(t, _)| **t >= centers[0] && **t <= centers[3])
        .map(|(_, v)| v)
        .collect();
    let col_max = local_maxima(&col, 0.05).len();
    let col_sign = sign_changes(&col, 1e-3 * wmax);
    check(
        row_max >= 5 && row_sign >= 4,
        format!("mid-time row: {row_max} maxima, {row_sign} sign changes"),
    )?;
    check(
        col_max >= 3 && col_sign >= 2,
        format!("mid-frequency column: {col_max} maxima, {col_sign} sign changes"),
    )?;
    Ok(format!(
        "lobes {:?} of max W, row {row_max} maxima/{row_sign} sign changes, column {col_max}/{col_sign}",
        lobes.iter().map(|l| format!("{l:.2}")).collect::<Vec<_>>()
    ))
}

/// Time at which the undriven excitation left in the system falls to 1/e.
fn one_over_e_time(p: &duoatom::params::PhysicalParams, delta12: f64) -> Result<f64, String> {
    let init = SingleExcitationState::minus_eff(p, delta12);
    let mut t_end = 1.0;
    loop {
        let ctrl = ControlSchedule::constant(delta12, t_end);
        let opts = AmplitudeOptions {
            sample_dt: t_end / 4000.0,
            ..AmplitudeOptions::default()
        };
        let tr = integrate_amplitudes(p, &ctrl, &init, &opts).map_err(|e| e.to_string())?;
        let target = (-1.0f64).exp();
        if let Some(i) = (1..tr.len()).find(|&i| tr.remaining(i) <= target) {
            let (r0, r1) = (tr.remaining(i - 1), tr.remaining(i));
            let f = (r0 - target) / (r0 - r1);
            return Ok(tr.t[i - 1] + f * (tr.t[i] - tr.t[i - 1]));
        }
        if t_end > 1e4 {
            return Err(format!("no decay by {t_end} ns at {} ueV", angular_to_energy(delta12)));
        }
        t_end *= 2.0;
    }
}

fn tunable_bandwidth() -> Outcome {
    let p = scenario("fig2").params;
    let times: Vec<f64> = [2.0, 5.0, 10.0, 20.0, 50.0, 100.0]
        .iter()
        .map(|&d| one_over_e_time(&p, uev(d)))
        .collect::<Result<_, _>>()?;
    check(
        times.windows(2).all(|w| w[1] < w[0]),
        format!("1/e times not decreasing with detuning: {times:?}"),
    )?;
    let ratio = times[0] / times[5];
    check(ratio >= 100.0, format!("slowest/fastest {ratio:.1}"))?;
    Ok(format!(
        "1/e times {} ns, ratio {ratio:.0}",
        times.iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>().join(", ")
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 beta and rate curve", beta_and_rate_curve, Some(Duration::from_secs(1))),
        ("2 dark-state lifetime", dark_state_lifetime, Some(Duration::from_secs(10))),
        ("3 memory efficiency and scans", memory_efficiency, Some(Duration::from_secs(1800))),
        ("4 amplitude vs master populations", amplitude_master_agreement, Some(Duration::from_secs(60))),
        ("5 conservation on built-in scenarios", conservation_suite, None),
        ("6 two-bin comb, fringes and negativity", two_bin_signature, Some(Duration::from_secs(60))),
        ("7 four-bin lobes and lattice", four_bin_structure, Some(Duration::from_secs(60))),
        ("8 tunable bandwidth", tunable_bandwidth, None),
    ];
    let mut failed = 0;
    for (name, f, budget) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {:.1} s, budget {} s", elapsed.as_secs_f64(), b.as_secs())),
            (o, _) => o,
        };
        match outcome {
            Ok(msg) => println!("PASS criterion {name}: {msg} ({:.2} s)", elapsed.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg} ({:.2} s)", elapsed.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
