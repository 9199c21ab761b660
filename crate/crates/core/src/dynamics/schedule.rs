//! Time-dependent controls: emitter detuning Δ₁₂(t), mean-frequency shift
//! ω₀(t) − ω₀_ref, and the coherent cavity drive.
//!
//! Each control profile is a sum of segments. A ramp contributes its initial
//! value before it starts and its final value after it ends, so two ramps
//! 40 → 0 and 0 → 40 compose into a store/release gate.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::DynamicsError;

/// Conversion factor from FWHM to the Gaussian standard deviation.
pub const FWHM_TO_SIGMA: f64 = 0.424_660_900_144_009_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Segment {
    Const {
        value: f64,
    },
    /// Raised-cosine ramp from `from` to `to` over `[start, start + duration]`.
    /// A zero duration is a step.
    Ramp {
        start: f64,
        duration: f64,
        from: f64,
        to: f64,
    },
    Gauss {
        center: f64,
        fwhm: f64,
        peak: f64,
    },
}

impl Segment {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Segment::Const { value } => value,
            Segment::Ramp {
                start,
                duration,
                from,
                to,
            } => {
                if t < start {
                    from
                } else if t >= start + duration {
                    to
                } else {
                    let x = (t - start) / duration;
                    from + (to - from) * 0.5 * (1.0 - (PI * x).cos())
                }
            }
            Segment::Gauss { center, fwhm, peak } => {
                let s = fwhm * FWHM_TO_SIGMA;
                let u = (t - center) / s;
                peak * (-0.5 * u * u).exp()
            }
        }
    }

    /// Analytic time derivative. A step reports an infinite slope at its
    /// switching instant.
    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Segment::Const { .. } => 0.0,
            Segment::Ramp {
                start,
                duration,
                from,
                to,
            } => {
                if duration == 0.0 {
                    if t == start && to != from {
                        f64::INFINITY.copysign(to - from)
                    } else {
                        0.0
                    }
                } else if t < start || t > start + duration {
                    0.0
                } else {
                    let x = (t - start) / duration;
                    (to - from) * 0.5 * PI / duration * (PI * x).sin()
                }
            }
            Segment::Gauss { center, fwhm, peak } => {
                let s = fwhm * FWHM_TO_SIGMA;
                let u = (t - center) / s;
                -peak * u / s * (-0.5 * u * u).exp()
            }
        }
    }

    /// Largest |derivative| of this segment alone, with the time it occurs.
    pub fn max_slope(&self) -> (f64, f64) {
        match *self {
            Segment::Const { .. } => (0.0, 0.0),
            Segment::Ramp {
                start,
                duration,
                from,
                to,
            } => {
                if duration == 0.0 {
                    if to == from {
                        (0.0, start)
                    } else {
                        (f64::INFINITY, start)
                    }
                } else {
                    ((to - from).abs() * 0.5 * PI / duration, start + 0.5 * duration)
                }
            }
            Segment::Gauss { center, fwhm, peak } => {
                let s = fwhm * FWHM_TO_SIGMA;
                (peak.abs() / s * (-0.5f64).exp(), center - s)
            }
        }
    }

    /// Times at which the segment changes character; the integrator never
    /// steps across them.
    fn breakpoints(&self, out: &mut Vec<f64>) {
        match *self {
            Segment::Const { .. } => {}
            Segment::Ramp {
                start, duration, ..
            } => {
                out.push(start);
                out.push(start + duration);
            }
            Segment::Gauss { center, fwhm, .. } => {
                let s = fwhm * FWHM_TO_SIGMA;
                out.push(center - 4.0 * s);
                out.push(center);
                out.push(center + 4.0 * s);
            }
        }
    }

    /// Shortest time scale the segment introduces, used to pick sampling
    /// resolution when scanning for extrema.
    fn feature_scale(&self) -> Option<f64> {
        match *self {
            Segment::Const { .. } => None,
            Segment::Ramp { duration, .. } => (duration > 0.0).then_some(duration),
            Segment::Gauss { fwhm, .. } => Some(fwhm * FWHM_TO_SIGMA),
        }
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        let ok = match *self {
            Segment::Const { value } => value.is_finite(),
            Segment::Ramp {
                start,
                duration,
                from,
                to,
            } => {
                start.is_finite()
                    && duration.is_finite()
                    && duration >= 0.0
                    && from.is_finite()
                    && to.is_finite()
            }
            Segment::Gauss { center, fwhm, peak } => {
                center.is_finite() && fwhm.is_finite() && fwhm > 0.0 && peak.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(DynamicsError::InvalidSchedule(format!(
                "malformed segment {self:?}"
            )))
        }
    }

    /// Copy of the segment delayed by `dt`.
    pub fn shifted(&self, dt: f64) -> Self {
        match *self {
            Segment::Const { value } => Segment::Const { value },
            Segment::Ramp {
                start,
                duration,
                from,
                to,
            } => Segment::Ramp {
                start: start + dt,
                duration,
                from,
                to,
            },
            Segment::Gauss { center, fwhm, peak } => Segment::Gauss {
                center: center + dt,
                fwhm,
                peak,
            },
        }
    }
}

/// Sum of segments.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub segments: Vec<Segment>,
}

impl Profile {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        Self {
            segments: vec![Segment::Const { value }],
        }
    }

    pub fn from_segments(segments: Vec<Segment>) -> Self {
        Self { segments }
    }

    pub fn push(&mut self, seg: Segment) {
        self.segments.push(seg);
    }

    pub fn value(&self, t: f64) -> f64 {
        self.segments.iter().map(|s| s.value(t)).sum()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.segments.iter().map(|s| s.derivative(t)).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.segments.iter().all(|s| match *s {
            Segment::Const { value } => value == 0.0,
            Segment::Ramp { from, to, .. } => from == 0.0 && to == 0.0,
            Segment::Gauss { peak, .. } => peak == 0.0,
        })
    }

    /// Gaussian pulses in time order, as `(segment index, center, fwhm, peak)`.
    pub fn gauss_pulses(&self) -> Vec<(usize, f64, f64, f64)> {
        let mut v: Vec<_> = self
            .segments
            .iter()
            .enumerate()
            .filter_map(|(i, s)| match *s {
                Segment::Gauss { center, fwhm, peak } => Some((i, center, fwhm, peak)),
                _ => None,
            })
            .collect();
        v.sort_by(|a, b| a.1.total_cmp(&b.1));
        v
    }

    pub fn shifted(&self, dt: f64) -> Self {
        Self {
            segments: self.segments.iter().map(|s| s.shifted(dt)).collect(),
        }
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        self.segments.iter().try_for_each(Segment::validate)
    }
}

/// Weak coherent input pulse entering through the cavity port.
///
/// The incoming photon-flux amplitude is
/// α(t) = √n̄ (2πσ²)^(−1/4) exp(−(t−t_c)²/(4σ²)) e^(−iω_L t), so that |α|²
/// is a Gaussian of the given intensity FWHM integrating to n̄. The field
/// coupled into the cavity is E(t) = √κ α(t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentPulse {
    pub center: f64,
    pub fwhm: f64,
    pub mean_photons: f64,
    /// Carrier frequency relative to ω₀_ref.
    pub carrier: f64,
}

impl CoherentPulse {
    fn sigma(&self) -> f64 {
        self.fwhm * FWHM_TO_SIGMA
    }

    /// Incoming amplitude α(t) in √(photons/ns).
    pub fn amplitude(&self, t: f64) -> C64 {
        let s = self.sigma();
        let norm = self.mean_photons.sqrt() * (2.0 * PI * s * s).powf(-0.25);
        let u = t - self.center;
        let env = norm * (-(u * u) / (4.0 * s * s)).exp();
        C64::from_polar(env, -self.carrier * t)
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        let ok = self.center.is_finite()
            && self.fwhm.is_finite()
            && self.fwhm > 0.0
            && self.mean_photons.is_finite()
            && self.mean_photons >= 0.0
            && self.carrier.is_finite();
        if ok {
            Ok(())
        } else {
            Err(DynamicsError::InvalidSchedule(format!(
                "malformed drive pulse {self:?}"
            )))
        }
    }
}

/// All time-dependent controls for one run. Times in ns, frequencies in rad/ns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub delta12: Profile,
    /// ω₀(t) − ω₀_ref from explicit segments.
    pub omega0: Profile,
    /// When set, ω₀(t) additionally follows √(Δ₁₂(t)² + Ω₁₂²) − Ω₁₂ so that
    /// the |−⟩_eff line stays at a fixed frequency while Δ₁₂ is pulsed.
    #[serde(default)]
    pub omega0_tracking: bool,
    pub drive: Option<CoherentPulse>,
    pub t_end: f64,
}

impl ControlSchedule {
    pub fn new(delta12: Profile, t_end: f64) -> Self {
        Self {
            delta12,
            omega0: Profile::zero(),
            omega0_tracking: false,
            drive: None,
            t_end,
        }
    }

    pub fn constant(delta12: f64, t_end: f64) -> Self {
        Self::new(Profile::constant(delta12), t_end)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(DynamicsError::InvalidSchedule(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        self.delta12.validate()?;
        self.omega0.validate()?;
        if let Some(d) = &self.drive {
            d.validate()?;
        }
        Ok(())
    }

    pub fn delta12_at(&self, t: f64) -> f64 {
        self.delta12.value(t)
    }

    /// Equal shift of both emitter frequencies, ω₀(t) − ω₀_ref.
    pub fn frame_shift(&self, t: f64, omega12: f64) -> f64 {
        let mut shift = self.omega0.value(t);
        if self.omega0_tracking {
            let d = self.delta12.value(t);
            shift += d.hypot(omega12) - omega12;
        }
        shift
    }

    /// Cavity drive E(t) = √κ α(t).
    pub fn drive_at(&self, t: f64, kappa: f64) -> C64 {
        match &self.drive {
            Some(p) => p.amplitude(t) * kappa.sqrt(),
            None => C64::new(0.0, 0.0),
        }
    }

    pub fn has_drive(&self) -> bool {
        matches!(&self.drive, Some(p) if p.mean_photons > 0.0)
    }

    /// Sorted interior breakpoints in (0, t_end).
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for s in self.delta12.segments.iter().chain(&self.omega0.segments) {
            s.breakpoints(&mut v);
        }
        if let Some(p) = &self.drive {
            let s = p.sigma();
            v.extend([p.center - 5.0 * s, p.center, p.center + 5.0 * s]);
        }
        v.retain(|t| *t > 0.0 && *t < self.t_end);
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        v
    }

    /// Shortest time scale of the Δ₁₂ profile, if any.
    pub fn delta12_feature_scale(&self) -> Option<f64> {
        self.delta12
            .segments
            .iter()
            .filter_map(Segment::feature_scale)
            .min_by(f64::total_cmp)
    }

    /// Whole schedule delayed by `dt`, with the horizon extended by `dt`.
    pub fn delayed(&self, dt: f64) -> Self {
        Self {
            delta12: self.delta12.shifted(dt),
            omega0: self.omega0.shifted(dt),
            omega0_tracking: self.omega0_tracking,
            drive: self.drive.map(|p| CoherentPulse {
                center: p.center + dt,
                ..p
            }),
            t_end: self.t_end + dt,
        }
    }
}
