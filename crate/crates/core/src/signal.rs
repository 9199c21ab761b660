//! Field observables built from the first-order correlation
//! C(t₁, t₂) = ⟨a†(t₁) a(t₂)⟩: the chronocyclic Wigner-Ville map and the
//! energy spectral density of the emitted wavepacket.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{self, Write};
use thiserror::Error;

use crate::dynamics::master::{integrate_master_capture, propagate_operator, DensityMatrix, MasterOptions};
use crate::dynamics::{sample_grid, ControlSchedule, DynamicsError, SystemOperators, Trajectory, TrajectorySource};
use crate::params::{angular_to_energy, PhysicalParams};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Minimum samples across the narrowest emission peak.
pub const MIN_SAMPLES_PER_FEATURE: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("the rank-one kernel needs a trajectory from the amplitude engine")]
    NotSingleExcitation,
    #[error(
        "grid too coarse: the narrowest emission feature spans {samples:.1} samples (< {MIN_SAMPLES_PER_FEATURE}); \
         reduce the sample spacing to at most {suggested_dt:.4} ns"
    )]
    ResolutionTooCoarse { samples: f64, suggested_dt: f64 },
    #[error("kernel grid must have at least two uniformly spaced samples")]
    InvalidGrid,
    #[error("frequency window [{0}, {1}] is empty")]
    EmptyWindow(f64, f64),
}

/// C(t₁, t₂) on a uniform grid, stored row-major by t₁.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationKernel {
    pub t: Vec<f64>,
    pub data: Vec<C64>,
}

impl CorrelationKernel {
    pub fn zero(t: Vec<f64>) -> Self {
        let n = t.len();
        Self {
            t,
            data: vec![ZERO; n * n],
        }
    }

    /// Rank-one kernel conj(A(t₁))·A(t₂).
    pub fn rank_one(t: Vec<f64>, amp: &[C64]) -> Self {
        let n = t.len();
        let mut data = vec![ZERO; n * n];
        for i in 0..n {
            let ci = amp[i].conj();
            for j in 0..n {
                data[i * n + j] = ci * amp[j];
            }
        }
        Self { t, data }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dt(&self) -> f64 {
        if self.t.len() < 2 {
            0.0
        } else {
            self.t[1] - self.t[0]
        }
    }

    /// Detection window T.
    pub fn window(&self) -> f64 {
        match (self.t.first(), self.t.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.len() + j]
    }

    /// ⟨a†a⟩(t) along the diagonal.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get(i, i).re).collect()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues of the kernel as an operator with quadrature weight dt,
    /// descending. For a single photon they are its mode occupations.
    pub fn mode_occupations(&self) -> Vec<f64> {
        let n = self.len();
        let dt = self.dt();
        let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (self.get(i, j) + self.get(j, i).conj()) * dt);
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    fn check_grid(&self) -> Result<f64, SignalError> {
        let n = self.len();
        if n < 2 || self.data.len() != n * n {
            return Err(SignalError::InvalidGrid);
        }
        let dt = self.dt();
        let uniform = self
            .t
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.max(1.0));
        if !(dt > 0.0 && uniform) {
            return Err(SignalError::InvalidGrid);
        }
        Ok(dt)
    }

    /// Mean angular frequency of the field, from the phase of the first
    /// off-diagonal.
    fn mean_frequency(&self) -> f64 {
        let n = self.len();
        let s: C64 = (0..n - 1).map(|i| self.get(i, i + 1)).sum();
        if s.norm() == 0.0 {
            0.0
        } else {
            -s.arg() / self.dt()
        }
    }
}

/// Rank-one kernel from the cavity amplitude of an amplitude-engine run.
pub fn correlation_single_excitation(traj: &Trajectory) -> Result<CorrelationKernel, SignalError> {
    if traj.source != TrajectorySource::Amplitudes || traj.amplitudes.is_none() {
        return Err(SignalError::NotSingleExcitation);
    }
    Ok(CorrelationKernel::rank_one(traj.t.clone(), &traj.field))
}

/// Two-time correlation under the master-equation generator.
///
/// ρ is checkpointed on the sample grid; for every t₁ the operator ρ(t₁)a†
/// is propagated forward and traced against a. The t₂ < t₁ half follows
/// from Hermitian symmetry. Rows run in parallel.
pub fn quantum_regression(
    p: &PhysicalParams,
    ctrl: &ControlSchedule,
    init: &DensityMatrix,
    opts: &MasterOptions,
) -> Result<CorrelationKernel, SignalError> {
    let grid = sample_grid(ctrl.t_end, opts.sample_dt);
    let (_, states) = integrate_master_capture(p, ctrl, init, opts, &grid)?;
    let ops = SystemOperators::new(opts.n_max);
    let d = ops.dim();
    let a_dag = ops.a.dagger();
    let a = &ops.a;
    let n = grid.len();

    let rows: Vec<Vec<C64>> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Vec<C64>, SignalError> {
            let rho = &states[i].data;
            let mut x0 = vec![ZERO; d * d];
            for &(l, k, v) in &a_dag.entries {
                for j in 0..d {
                    x0[j * d + k] += rho[j * d + l] * v;
                }
            }
            let mut row = Vec::with_capacity(n - i);
            propagate_operator(p, ctrl, opts.n_max, grid[i], x0, &grid[i..], &opts.ode, |_, x| {
                row.push(a.trace_with(x));
                Ok(())
            })?;
            Ok(row)
        })
        .collect::<Result<_, _>>()?;

    let mut kernel = CorrelationKernel::zero(grid);
    for (i, row) in rows.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            let j = i + k;
            kernel.data[i * n + j] = v;
            kernel.data[j * n + i] = v.conj();
        }
        kernel.data[i * n + i].im = 0.0;
    }
    Ok(kernel)
}

/// Narrowest FWHM (ns) among the significant peaks of a sampled power
/// trace; `None` when the trace carries no signal.
pub fn narrowest_feature(t: &[f64], power: &[f64]) -> Option<f64> {
    let peak = power.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return None;
    }
    let n = power.len();
    let mut narrowest = f64::INFINITY;
    for i in 0..n {
        let left = if i > 0 { power[i - 1] } else { f64::NEG_INFINITY };
        let right = if i + 1 < n { power[i + 1] } else { f64::NEG_INFINITY };
        if !(power[i] >= 0.05 * peak && power[i] > left && power[i] >= right) {
            continue;
        }
        let half = 0.5 * power[i];
        let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
            let mut prev = i;
            for j in range {
                if power[j] < half {
                    // linear interpolation between prev and j
                    let f = (power[prev] - half) / (power[prev] - power[j]);
                    return Some(t[prev] + f * (t[j] - t[prev]));
                }
                prev = j;
            }
            None
        };
        let lo = crossing(&mut (0..i).rev());
        let hi = crossing(&mut (i + 1..n));
        let width = match (lo, hi) {
            (Some(a), Some(b)) => b - a,
            (Some(a), None) => 2.0 * (t[i] - a),
            (None, Some(b)) => 2.0 * (b - t[i]),
            (None, None) => continue,
        };
        narrowest = narrowest.min(width);
    }
    narrowest.is_finite().then_some(narrowest)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WignerOptions {
    /// Lower/upper edge of the reported frequency window, rad/ns relative
    /// to ω₀_ref. `None` keeps the full Nyquist band.
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    /// Zero-padding factor of the lag transform (frequency grid refinement).
    pub pad_factor: usize,
}

impl Default for WignerOptions {
    fn default() -> Self {
        Self {
            omega_min: None,
            omega_max: None,
            pad_factor: 4,
        }
    }
}

impl WignerOptions {
    pub fn window(center: f64, half_width: f64) -> Self {
        Self {
            omega_min: Some(center - half_width),
            omega_max: Some(center + half_width),
            ..Self::default()
        }
    }
}

/// W(t, ω) sampled on uniform grids, row-major by t.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFrequencyMap {
    pub t: Vec<f64>,
    pub omega: Vec<f64>,
    pub w: Vec<f64>,
    /// Largest discarded imaginary part relative to max |W|.
    pub imag_residual: f64,
    pub window: f64,
}

impl TimeFrequencyMap {
    pub fn get(&self, it: usize, iw: usize) -> f64 {
        self.w[it * self.omega.len() + iw]
    }

    pub fn d_omega(&self) -> f64 {
        if self.omega.len() < 2 {
            0.0
        } else {
            self.omega[1] - self.omega[0]
        }
    }

    pub fn max(&self) -> f64 {
        self.w.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.w.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// ∫W dω at each t.
    pub fn time_marginal(&self) -> Vec<f64> {
        let nw = self.omega.len();
        let dw = self.d_omega();
        self.w.chunks(nw).map(|row| row.iter().sum::<f64>() * dw).collect()
    }

    /// ∫W dt at each ω.
    pub fn frequency_marginal(&self) -> Vec<f64> {
        let nw = self.omega.len();
        let dt = if self.t.len() < 2 { 0.0 } else { self.t[1] - self.t[0] };
        let mut out = vec![0.0; nw];
        for row in self.w.chunks(nw) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v * dt;
            }
        }
        out
    }

    /// Slice W(t_i, ·).
    pub fn row(&self, it: usize) -> &[f64] {
        let nw = self.omega.len();
        &self.w[it * nw..(it + 1) * nw]
    }

    /// Slice W(·, ω_j).
    pub fn column(&self, iw: usize) -> Vec<f64> {
        (0..self.t.len()).map(|it| self.get(it, iw)).collect()
    }

    pub fn nearest_time(&self, t: f64) -> usize {
        nearest(&self.t, t)
    }

    pub fn nearest_omega(&self, w: f64) -> usize {
        nearest(&self.omega, w)
    }

    /// CSV matrix: first row holds the ω grid, first column the t grid.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "t_ns\\omega_rad_per_ns")?;
        for w in &self.omega {
            write!(out, ",{w:.9}")?;
        }
        writeln!(out)?;
        for (it, t) in self.t.iter().enumerate() {
            write!(out, "{t:.6}")?;
            for v in self.row(it) {
                write!(out, ",{v:.9e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn nearest(grid: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (i, g) in grid.iter().enumerate() {
        if (g - x).abs() < (grid[best] - x).abs() {
            best = i;
        }
    }
    best
}

/// Chronocyclic Wigner-Ville distribution
/// W(t, ω) = (1/2π) ∫ dτ C(t + τ/2, t − τ/2) e^{−iωτ}.
///
/// Lags run in steps of dt. Even lags hit the grid; odd lags land between
/// grid points and take the bilinear (four-neighbour) average of the kernel
/// after removing its mean carrier. The lag range at each t is everything
/// the detection window [0, T] supports, |τ| ≤ T − |2t − T|.
pub fn wigner_ville(kernel: &CorrelationKernel, opts: &WignerOptions) -> Result<TimeFrequencyMap, SignalError> {
    let dt = kernel.check_grid()?;
    let n = kernel.len();
    if let Some(width) = narrowest_feature(&kernel.t, &kernel.diagonal()) {
        let samples = width / dt;
        if samples < MIN_SAMPLES_PER_FEATURE as f64 {
            return Err(SignalError::ResolutionTooCoarse {
                samples,
                suggested_dt: width / MIN_SAMPLES_PER_FEATURE as f64,
            });
        }
    }
    let carrier = kernel.mean_frequency();
    let m_fft = (opts.pad_factor.max(1) * 2 * n).next_power_of_two();
    let (freqs, keep) = frequency_axis(m_fft, dt, opts)?;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(m_fft);

    // baseband kernel value at the half-integer point (i + ½, j − ½)
    let demod = |i: usize, j: usize| -> C64 {
        let phase = -carrier * (i as f64 - j as f64) * dt;
        kernel.get(i, j) * C64::from_polar(1.0, phase)
    };
    let lag_value = |m: usize, k: i64| -> C64 {
        let tau = k as f64 * dt;
        let remod = C64::from_polar(1.0, carrier * tau);
        if k % 2 == 0 {
            let l = k / 2;
            kernel.get((m as i64 + l) as usize, (m as i64 - l) as usize)
        } else {
            // k = 2l + 1 with l = floor(k/2)
            let l = k.div_euclid(2);
            let r0 = (m as i64 + l) as usize;
            let c1 = (m as i64 - l) as usize;
            let avg = 0.25 * (demod(r0, c1 - 1) + demod(r0, c1) + demod(r0 + 1, c1 - 1) + demod(r0 + 1, c1));
            avg * remod
        }
    };

    let scale = dt / (2.0 * PI);
    let rows: Vec<(Vec<f64>, f64, f64)> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![ZERO; m_fft], vec![ZERO; fft.get_inplace_scratch_len()]),
            |(buf, scratch), m| {
                buf.iter_mut().for_each(|z| *z = ZERO);
                let even_max = m.min(n - 1 - m) as i64;
                // odd lag 2l+1 needs rows up to m+l+1 and columns down to m−l−1
                let odd_max = if m >= 1 && m + 1 < n { (m - 1).min(n - 2 - m) as i64 } else { -1 };
                let kmax = (2 * even_max).max(2 * odd_max + 1);
                for k in 0..=kmax {
                    let ok = if k % 2 == 0 { k / 2 <= even_max } else { (k - 1) / 2 <= odd_max };
                    if !ok {
                        continue;
                    }
                    let v = lag_value(m, k);
                    buf[k as usize] = v;
                    if k > 0 {
                        buf[m_fft - k as usize] = v.conj();
                    }
                }
                fft.process_with_scratch(buf, scratch);
                let mut row = Vec::with_capacity(freqs.len());
                let mut imag: f64 = 0.0;
                let mut peak: f64 = 0.0;
                for &q in &keep {
                    let z = buf[q] * scale;
                    row.push(z.re);
                    imag = imag.max(z.im.abs());
                    peak = peak.max(z.re.abs());
                }
                (row, imag, peak)
            },
        )
        .collect();

    let peak = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let imag = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let w: Vec<f64> = rows.into_iter().flat_map(|r| r.0).collect();
    Ok(TimeFrequencyMap {
        t: kernel.t.clone(),
        omega: freqs,
        w,
        imag_residual: if peak > 0.0 { imag / peak } else { 0.0 },
        window: kernel.window(),
    })
}

/// Ascending frequency grid of an M-point transform at step dt, restricted
/// to the requested window, with the matching FFT bin indices.
fn frequency_axis(m_fft: usize, dt: f64, opts: &WignerOptions) -> Result<(Vec<f64>, Vec<usize>), SignalError> {
    let dw = 2.0 * PI / (m_fft as f64 * dt);
    let lo = opts.omega_min.unwrap_or(f64::NEG_INFINITY);
    let hi = opts.omega_max.unwrap_or(f64::INFINITY);
    let half = (m_fft / 2) as i64;
    let mut freqs = Vec::new();
    let mut bins = Vec::new();
    for s in -half..half {
        let w = s as f64 * dw;
        if w >= lo && w <= hi {
            freqs.push(w);
            bins.push(s.rem_euclid(m_fft as i64) as usize);
        }
    }
    if freqs.is_empty() {
        return Err(SignalError::EmptyWindow(lo, hi));
    }
    Ok((freqs, bins))
}

/// Energy spectral density S(ω) = (1/2π) ∬ dt₁dt₂ e^{−iω(t₁−t₂)} C(t₁, t₂).
///
/// With this sign S peaks at the emitted frequency and equals ∫W dt. The
/// double integral is reduced to diagonal sums D_k = Σ C(t_{i+k}, t_i)
/// followed by one transform; summed over the full band it returns
/// dt·Σ C(t_i, t_i) exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    pub omega: Vec<f64>,
    pub s: Vec<f64>,
}

impl SpectralDensity {
    pub fn d_omega(&self) -> f64 {
        if self.omega.len() < 2 {
            0.0
        } else {
            self.omega[1] - self.omega[0]
        }
    }

    pub fn integral(&self) -> f64 {
        self.s.iter().sum::<f64>() * self.d_omega()
    }

    /// CSV with frequency in rad/ns and μeV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "omega_rad_per_ns,omega_ueV,S")?;
        for (w, s) in self.omega.iter().zip(&self.s) {
            writeln!(out, "{w:.9},{:.9},{s:.12e}", angular_to_energy(*w))?;
        }
        Ok(())
    }
}

pub fn spectral_density(kernel: &CorrelationKernel, opts: &WignerOptions) -> Result<SpectralDensity, SignalError> {
    let dt = kernel.check_grid()?;
    let n = kernel.len();
    let m_fft = (opts.pad_factor.max(1) * 2 * n).next_power_of_two();
    let (omega, bins) = frequency_axis(m_fft, dt, opts)?;
    let mut buf = vec![ZERO; m_fft];
    for k in 0..n {
        let d: C64 = (0..n - k).map(|i| kernel.get(i + k, i)).sum();
        buf[k] = d;
        if k > 0 {
            buf[m_fft - k] = d.conj();
        }
    }
    FftPlanner::<f64>::new().plan_fft_forward(m_fft).process(&mut buf);
    let scale = dt * dt / (2.0 * PI);
    let s = bins.iter().map(|&q| buf[q].re * scale).collect();
    Ok(SpectralDensity { omega, s })
}

/// Strict local maxima of `y` at or above `min_rel` times its maximum.
pub fn local_maxima(y: &[f64], min_rel: f64) -> Vec<usize> {
    let top = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) {
        return Vec::new();
    }
    (1..y.len().saturating_sub(1))
        .filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1] && y[i] >= min_rel * top)
        .collect()
}

/// Abscissa of the parabola through the three samples around `i`.
pub fn refine_peak(x: &[f64], y: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= y.len() {
        return x[i];
    }
    let (a, b, c) = (y[i - 1], y[i], y[i + 1]);
    let denom = a - 2.0 * b + c;
    if denom == 0.0 {
        return x[i];
    }
    x[i] + 0.5 * (a - c) / denom * (x[i + 1] - x[i])
}

/// Mean spacing of the refined local maxima of `y` above `min_rel` of its
/// maximum, or `None` with fewer than two such peaks.
pub fn mean_peak_spacing(x: &[f64], y: &[f64], min_rel: f64) -> Option<f64> {
    let peaks: Vec<f64> = local_maxima(y, min_rel).into_iter().map(|i| refine_peak(x, y, i)).collect();
    (peaks.len() >= 2).then(|| (peaks[peaks.len() - 1] - peaks[0]) / (peaks.len() - 1) as f64)
}
