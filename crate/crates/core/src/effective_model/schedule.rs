//! Piecewise field envelopes in the rotating frame.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::params::HBAR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RampShape {
    Linear,
    /// 3u² − 2u³: zero slope at both ends.
    Smoothstep,
}

impl RampShape {
    pub fn value(self, u: f64) -> f64 {
        match self {
            RampShape::Linear => u,
            RampShape::Smoothstep => u * u * (3.0 - 2.0 * u),
        }
    }

    pub fn slope(self, u: f64) -> f64 {
        match self {
            RampShape::Linear => 1.0,
            RampShape::Smoothstep => 6.0 * u * (1.0 - u),
        }
    }
}

/// A control that moves from `from` to `to` over a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ramp {
    pub from: f64,
    pub to: f64,
    pub shape: RampShape,
}

impl Ramp {
    pub fn constant(v: f64) -> Self {
        Self {
            from: v,
            to: v,
            shape: RampShape::Linear,
        }
    }

    pub fn value(&self, u: f64) -> f64 {
        self.from + (self.to - self.from) * self.shape.value(u)
    }

    /// d/du of the value.
    pub fn slope(&self, u: f64) -> f64 {
        (self.to - self.from) * self.shape.slope(u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub duration: f64,
    pub dt: f64,
    /// Envelope pℰ(t) in meV.
    pub pe: Ramp,
    /// Phase φ(t) in radians.
    pub phi: Ramp,
    pub hbar_omega: f64,
}

impl Segment {
    /// Number of integrator steps and the actual step length.
    pub fn steps(&self) -> (usize, f64) {
        let n = ((self.duration / self.dt) - 1e-9).ceil().max(1.0) as usize;
        (n, self.duration / n as f64)
    }
}

/// Instantaneous control values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controls {
    pub pe: f64,
    pub phi: f64,
    pub hbar_omega: f64,
    /// ∫ω dt since the start of the schedule.
    pub carrier_phase: f64,
    pub pe_rate: f64,
    pub phi_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSchedule {
    segments: Vec<Segment>,
}

impl FieldSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidParameter("schedule has no segments".into()));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.duration > 0.0 && s.duration.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "segment {i}: duration must be positive"
                )));
            }
            if !(s.dt > 0.0 && s.dt.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "segment {i}: dt must be positive"
                )));
            }
            if s.pe.from < 0.0 || s.pe.to < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "segment {i}: negative envelope"
                )));
            }
        }
        for (i, w) in segments.windows(2).enumerate() {
            if (w[0].pe.to - w[1].pe.from).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "envelope jumps between segments {i} and {}",
                    i + 1
                )));
            }
            let dphi = (w[0].phi.to - w[1].phi.from).rem_euclid(TAU);
            if dphi > 1e-12 && TAU - dphi > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "phase jumps between segments {i} and {}",
                    i + 1
                )));
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Same envelopes with every step length replaced.
    pub fn with_dt(&self, dt: f64) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .map(|s| Segment { dt, ..s.clone() })
                .collect(),
        }
    }

    /// Same envelopes with every step length scaled.
    pub fn scaled_dt(&self, factor: f64) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    dt: s.dt * factor,
                    ..s.clone()
                })
                .collect(),
        }
    }

    /// Locate `t` (clamped to the support) as (segment index, local time).
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let mut start = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            if t < start + s.duration || i + 1 == self.segments.len() {
                return (i, (t - start).clamp(0.0, s.duration));
            }
            start += s.duration;
        }
        unreachable!("schedule is never empty")
    }

    pub fn controls(&self, t: f64) -> Controls {
        let (idx, tau) = self.locate(t);
        let carrier_before: f64 = self.segments[..idx]
            .iter()
            .map(|s| s.hbar_omega / HBAR * s.duration)
            .sum();
        let s = &self.segments[idx];
        let u = tau / s.duration;
        Controls {
            pe: s.pe.value(u),
            phi: s.phi.value(u),
            hbar_omega: s.hbar_omega,
            carrier_phase: carrier_before + s.hbar_omega / HBAR * tau,
            pe_rate: s.pe.slope(u) / s.duration,
            phi_rate: s.phi.slope(u) / s.duration,
        }
    }

    /// Integrator grid: segment start times plus every step boundary.
    pub fn grid(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        let mut start = 0.0;
        for s in &self.segments {
            let (n, h) = s.steps();
            for k in 1..=n {
                out.push(start + h * k as f64);
            }
            start += s.duration;
        }
        out
    }

    pub fn max_pe(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.pe.from.max(s.pe.to))
            .fold(0.0, f64::max)
    }

    pub fn max_hbar_omega(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.hbar_omega.abs())
            .fold(0.0, f64::max)
    }
}
