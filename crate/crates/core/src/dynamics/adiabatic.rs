use serde::{Deserialize, Serialize};

use super::schedule::{ControlSchedule, Segment};
use crate::params::PhysicalParams;

pub const DEFAULT_ADIABATIC_THRESHOLD: f64 = 0.1;

/// Samples per shortest feature when scanning |Δ̇₁₂|.
const SAMPLES_PER_FEATURE: f64 = 400.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticityReport {
    /// max |Δ̇₁₂| / Ω₁₂² over [0, t_end].
    pub max_ratio: f64,
    /// Where the maximum occurs, ns.
    pub at: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Measures how adiabatically Δ₁₂(t) is swept relative to the hybridization
/// gap, using the analytic derivative of each segment.
pub fn adiabaticity_check(ctrl: &ControlSchedule, p: &PhysicalParams, threshold: f64) -> AdiabaticityReport {
    let om2 = p.omega12 * p.omega12;
    let mut best = (0.0f64, 0.0f64);

    // steps are singular; report the first one inside the horizon
    for seg in &ctrl.delta12.segments {
        if let Segment::Ramp {
            start,
            duration,
            from,
            to,
        } = *seg
        {
            if duration == 0.0 && from != to && start >= 0.0 && start <= ctrl.t_end {
                let ratio = f64::INFINITY;
                if best.0 < ratio {
                    best = (ratio, start);
                }
            }
        }
    }

    if best.0.is_finite() {
        if let Some(scale) = ctrl.delta12_feature_scale() {
            let h = (scale / SAMPLES_PER_FEATURE).min(ctrl.t_end / 1000.0);
            let n = (ctrl.t_end / h).ceil() as usize;
            for i in 0..=n {
                let t = (i as f64 * h).min(ctrl.t_end);
                let ratio = ctrl.delta12.derivative(t).abs() / om2;
                if ratio > best.0 {
                    best = (ratio, t);
                }
            }
            // the slope of an isolated segment peaks at a known instant
            for seg in &ctrl.delta12.segments {
                let (_, at) = seg.max_slope();
                if (0.0..=ctrl.t_end).contains(&at) {
                    let ratio = ctrl.delta12.derivative(at).abs() / om2;
                    if ratio > best.0 {
                        best = (ratio, at);
                    }
                }
            }
        }
    }

    AdiabaticityReport {
        max_ratio: best.0,
        at: best.1,
        threshold,
        pass: best.0 <= threshold,
    }
}
