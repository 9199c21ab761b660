//! Parameter scans over memory scenarios, run on a dedicated worker pool.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::memory::{run_memory, GateStart, MemoryScenario, StoreGate};
use super::ProtocolError;
use crate::spectral::effective_rates;

fn pool(workers: usize) -> Result<rayon::ThreadPool, ProtocolError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ProtocolError::InvalidScenario(format!("cannot start {workers} workers: {e}")))
}

/// Coherence time of |−⟩_eff, 1/(Γ₋eff + γ₋eff), ns.
pub fn state_time(m: &MemoryScenario, delta12: f64) -> f64 {
    1.0 / effective_rates(&m.params, delta12).total_rate()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthRow {
    pub delta12: f64,
    pub state_time: f64,
    /// state_time / pulse FWHM.
    pub ratio: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthScan {
    pub rows: Vec<BandwidthRow>,
    /// Parabolic refinement of the best grid point.
    pub optimum_delta12: f64,
    pub optimum_efficiency: f64,
    pub optimum_ratio: f64,
    pub pulse_fwhm: f64,
}

/// Peak absorption versus the absorb-phase detuning, with the store and
/// release phases removed.
pub fn bandwidth_optimum_scan(
    template: &MemoryScenario,
    grid: &[f64],
    workers: usize,
) -> Result<BandwidthScan, ProtocolError> {
    if grid.is_empty() {
        return Err(ProtocolError::InvalidScenario("empty detuning grid".into()));
    }
    let run = |&d: &f64| -> Result<BandwidthRow, ProtocolError> {
        let mut m = template.clone();
        m.absorb_delta12 = d;
        m.store = None;
        m.release = None;
        m.t_end = m.pulse_center + 3.0 * m.pulse_fwhm;
        let r = run_memory(&m)?;
        let st = state_time(&m, d);
        Ok(BandwidthRow {
            delta12: d,
            state_time: st,
            ratio: st / m.pulse_fwhm,
            efficiency: r.peak_absorption,
        })
    };
    let rows = pool(workers)?.install(|| grid.par_iter().map(run).collect::<Result<Vec<_>, _>>())?;

    let k = (0..rows.len())
        .max_by(|&a, &b| rows[a].efficiency.total_cmp(&rows[b].efficiency))
        .unwrap_or(0);
    let (mut d, mut eta) = (rows[k].delta12, rows[k].efficiency);
    if k > 0 && k + 1 < rows.len() {
        let (x0, x1, x2) = (rows[k - 1].delta12, rows[k].delta12, rows[k + 1].delta12);
        let (y0, y1, y2) = (rows[k - 1].efficiency, rows[k].efficiency, rows[k + 1].efficiency);
        let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
        let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
        let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
        if a < 0.0 {
            let xv = -b / (2.0 * a);
            if xv > x0 && xv < x2 {
                let c = y1 - a * x1 * x1 - b * x1;
                d = xv;
                eta = a * xv * xv + b * xv + c;
            }
        }
    }
    Ok(BandwidthScan {
        optimum_delta12: d,
        optimum_efficiency: eta,
        optimum_ratio: state_time(template, d) / template.pulse_fwhm,
        pulse_fwhm: template.pulse_fwhm,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    /// Gate-start offset from the reference placement, ns.
    pub offset: f64,
    pub gate_start: f64,
    /// Normalized population at the end of the store ramp.
    pub efficiency: f64,
    /// 1 − efficiency / reference.
    pub relative_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingScan {
    pub reference_gate: f64,
    pub reference_efficiency: f64,
    pub rows: Vec<TimingRow>,
}

/// Stored population versus a shift of the store-ramp start.
///
/// The reference gate is the scenario's own (optimized when automatic);
/// runs stop at the end of the shifted ramp.
pub fn timing_sensitivity(m: &MemoryScenario, offsets: &[f64], workers: usize) -> Result<TimingScan, ProtocolError> {
    let gate = m
        .store
        .ok_or_else(|| ProtocolError::InvalidScenario("timing scan needs a store ramp".into()))?;
    let reference_gate = match gate.start {
        GateStart::At(t) => t,
        GateStart::Auto => m.optimal_gate()?,
    };
    let stored = |start: f64| -> Result<f64, ProtocolError> {
        let mut s = m.clone();
        s.store = Some(StoreGate {
            start: GateStart::At(start),
            duration: gate.duration,
        });
        s.release = None;
        s.t_end = start + gate.duration;
        Ok(run_memory(&s)?.stored_efficiency.unwrap_or(0.0))
    };
    let pool = pool(workers)?;
    let reference_efficiency = stored(reference_gate)?;
    let effs = pool.install(|| {
        offsets
            .par_iter()
            .map(|&o| stored(reference_gate + o))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let rows = offsets
        .iter()
        .zip(effs)
        .map(|(&offset, efficiency)| TimingRow {
            offset,
            gate_start: reference_gate + offset,
            efficiency,
            relative_loss: 1.0 - efficiency / reference_efficiency,
        })
        .collect();
    Ok(TimingScan {
        reference_gate,
        reference_efficiency,
        rows,
    })
}
