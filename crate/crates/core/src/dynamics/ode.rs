//! Adaptive Dormand–Prince 5(4) integrator for complex state vectors, with
//! Hairer's fourth-order dense output for sampling on an arbitrary grid.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::DynamicsError;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step, ns.
    pub max_step: f64,
    /// Steps shorter than this abort the run, ns.
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: 0.05,
            min_step: 1e-12,
            max_steps: 5_000_000,
        }
    }
}

impl OdeOptions {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let ok = self.rtol > 0.0
            && self.rtol < 1.0
            && self.atol > 0.0
            && self.max_step > 0.0
            && self.min_step > 0.0
            && self.min_step < self.max_step
            && self.max_steps > 0;
        if ok {
            Ok(())
        } else {
            Err(DynamicsError::InvalidOptions(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

struct Work {
    k: [Vec<C64>; 7],
    tmp: Vec<C64>,
    ynew: Vec<C64>,
    err: Vec<C64>,
    cont: [Vec<C64>; 5],
    dense: Vec<C64>,
}

impl Work {
    fn new(n: usize) -> Self {
        let z = || vec![C64::new(0.0, 0.0); n];
        Self {
            k: [z(), z(), z(), z(), z(), z(), z()],
            tmp: z(),
            ynew: z(),
            err: z(),
            cont: [z(), z(), z(), z(), z()],
            dense: z(),
        }
    }
}

fn error_norm(y: &[C64], ynew: &[C64], err: &[C64], opts: &OdeOptions) -> f64 {
    let mut acc = 0.0;
    for i in 0..y.len() {
        let sc = opts.atol + opts.rtol * y[i].norm().max(ynew[i].norm());
        acc += (err[i].norm() / sc).powi(2);
    }
    (acc / y.len().max(1) as f64).sqrt()
}

fn initial_step<F>(rhs: &mut F, t: f64, y: &[C64], f0: &[C64], span: f64, opts: &OdeOptions, w: &mut Work) -> f64
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let n = y.len().max(1) as f64;
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..y.len() {
        let sk = opts.atol + opts.rtol * y[i].norm();
        dnf += (f0[i].norm() / sk).powi(2);
        dny += (y[i].norm() / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(opts.max_step).min(span);
    for i in 0..y.len() {
        w.tmp[i] = y[i] + f0[i] * h;
    }
    rhs(t + h, &w.tmp, &mut w.err);
    let mut der2 = 0.0;
    for i in 0..y.len() {
        let sk = opts.atol + opts.rtol * y[i].norm();
        der2 += ((w.err[i] - f0[i]).norm() / sk).powi(2);
    }
    let der2 = (der2 / n).sqrt() / h;
    let der12 = der2.max((dnf / n).sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    (100.0 * h).min(h1).min(opts.max_step).min(span).max(opts.min_step)
}

/// Integrates dy/dt = rhs(t, y) from `t0` to `t_end`.
///
/// The integrator restarts exactly at each time in `stops`. `observer` is
/// called at every time in `samples` (sorted, inside `[t0, t_end]`) with the
/// interpolated state; returning an error aborts the run.
pub fn integrate<F, O>(
    mut rhs: F,
    t0: f64,
    y0: Vec<C64>,
    t_end: f64,
    stops: &[f64],
    samples: &[f64],
    opts: &OdeOptions,
    mut observer: O,
) -> Result<(Vec<C64>, OdeStats), DynamicsError>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    O: FnMut(f64, &[C64]) -> Result<(), DynamicsError>,
{
    opts.validate()?;
    if !(t_end > t0) {
        return Err(DynamicsError::InvalidOptions(format!(
            "empty time span [{t0}, {t_end}]"
        )));
    }
    let n = y0.len();
    let mut w = Work::new(n);
    let mut stats = OdeStats::default();
    let mut y = y0;
    let mut t = t0;

    let mut bounds: Vec<f64> = stops.iter().copied().filter(|s| *s > t0 && *s < t_end).collect();
    bounds.push(t_end);
    bounds.sort_by(f64::total_cmp);
    bounds.dedup();

    let mut si = 0;
    while si < samples.len() && samples[si] <= t0 {
        observer(samples[si], &y)?;
        si += 1;
    }

    let mut h = 0.0;
    let mut fac_old = 1e-4f64;
    const BETA: f64 = 0.04;
    const EXPO1: f64 = 0.2 - BETA * 0.75;
    const SAFE: f64 = 0.9;

    for &seg_end in &bounds {
        // fresh derivative at each segment start, the rhs may jump here
        rhs(t, &y, &mut w.k[0]);
        stats.rhs_evals += 1;
        if h == 0.0 {
            let k0 = w.k[0].clone();
            h = initial_step(&mut rhs, t, &y, &k0, seg_end - t, opts, &mut w);
            stats.rhs_evals += 1;
        }
        let mut last = false;
        while !last {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(DynamicsError::TooManySteps { t, steps: opts.max_steps });
            }
            h = h.min(opts.max_step);
            if t + h >= seg_end - 1e-14 * seg_end.abs().max(1.0) {
                h = seg_end - t;
                last = true;
            }
            if h < opts.min_step && !last {
                return Err(DynamicsError::StepUnderflow { t, h });
            }

            let step = |c: &[(f64, usize)], w: &mut Work, y: &[C64]| {
                for i in 0..n {
                    let mut acc = C64::new(0.0, 0.0);
                    for &(a, j) in c {
                        acc += w.k[j][i] * a;
                    }
                    w.tmp[i] = y[i] + acc * h;
                }
            };
            step(&[(A21, 0)], &mut w, &y);
            rhs(t + C2 * h, &w.tmp, &mut w.k[1]);
            step(&[(A31, 0), (A32, 1)], &mut w, &y);
            rhs(t + C3 * h, &w.tmp, &mut w.k[2]);
            step(&[(A41, 0), (A42, 1), (A43, 2)], &mut w, &y);
            rhs(t + C4 * h, &w.tmp, &mut w.k[3]);
            step(&[(A51, 0), (A52, 1), (A53, 2), (A54, 3)], &mut w, &y);
            rhs(t + C5 * h, &w.tmp, &mut w.k[4]);
            step(&[(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)], &mut w, &y);
            rhs(t + h, &w.tmp, &mut w.k[5]);
            for i in 0..n {
                w.ynew[i] = y[i]
                    + (w.k[0][i] * A71 + w.k[2][i] * A73 + w.k[3][i] * A74 + w.k[4][i] * A75 + w.k[5][i] * A76) * h;
            }
            rhs(t + h, &w.ynew, &mut w.k[6]);
            stats.rhs_evals += 6;
            for i in 0..n {
                w.err[i] = (w.k[0][i] * E1
                    + w.k[2][i] * E3
                    + w.k[3][i] * E4
                    + w.k[4][i] * E5
                    + w.k[5][i] * E6
                    + w.k[6][i] * E7)
                    * h;
            }
            let err = error_norm(&y, &w.ynew, &w.err, opts);
            if !err.is_finite() {
                return Err(DynamicsError::NonFinite { t });
            }

            let fac11 = err.powf(EXPO1);
            let fac = (fac11 / fac_old.powf(BETA) / SAFE).clamp(0.1, 5.0);
            let hnew = h / fac;

            if err <= 1.0 {
                fac_old = err.max(1e-4);
                stats.accepted += 1;
                let t_new = t + h;
                if si < samples.len() && samples[si] <= t_new {
                    build_dense(&mut w, &y, h);
                    while si < samples.len() && samples[si] <= t_new {
                        let theta = ((samples[si] - t) / h).clamp(0.0, 1.0);
                        dense_eval(&w.cont, theta, &mut w.dense);
                        observer(samples[si], &w.dense)?;
                        si += 1;
                    }
                }
                std::mem::swap(&mut y, &mut w.ynew);
                w.k.swap(0, 6);
                t = if last { seg_end } else { t_new };
                h = if last { hnew.max(h) } else { hnew };
            } else {
                stats.rejected += 1;
                last = false;
                h /= (fac11 / SAFE).min(10.0);
                if h < opts.min_step {
                    return Err(DynamicsError::StepUnderflow { t, h });
                }
            }
        }
    }
    while si < samples.len() {
        observer(samples[si], &y)?;
        si += 1;
    }
    Ok((y, stats))
}

fn build_dense(w: &mut Work, y: &[C64], h: f64) {
    for i in 0..y.len() {
        let ydiff = w.ynew[i] - y[i];
        let bspl = w.k[0][i] * h - ydiff;
        w.cont[0][i] = y[i];
        w.cont[1][i] = ydiff;
        w.cont[2][i] = bspl;
        w.cont[3][i] = ydiff - w.k[6][i] * h - bspl;
        w.cont[4][i] = (w.k[0][i] * D1
            + w.k[2][i] * D3
            + w.k[3][i] * D4
            + w.k[4][i] * D5
            + w.k[5][i] * D6
            + w.k[6][i] * D7)
            * h;
    }
}

fn dense_eval(cont: &[Vec<C64>; 5], theta: f64, out: &mut [C64]) {
    let th1 = 1.0 - theta;
    for (i, o) in out.iter_mut().enumerate() {
        *o = cont[0][i] + (cont[1][i] + (cont[2][i] + (cont[3][i] + cont[4][i] * th1) * theta) * th1) * theta;
    }
}
