//! Torsional-oscillation relay: a per-mode envelope follower and a time–magnitude detection
//! curve. An oscillation that arms the relay must decay below the allowance, which shrinks with
//! time since arming, or the unit is tripped.

use std::io::Write;

use crate::error::{Error, Result};
use crate::plant::blocks::Biquad;
use crate::scenario::ProtectionSettings;
use crate::trace::{fmt_num, SimTrace};

const BAND_Q: f64 = 10.0;

/// Streaming envelope estimate at one frequency: band-pass (Q = 10), full-wave rectification,
/// second-order low-pass at f/5, scaled by π/2 so a steady tone reads its amplitude.
#[derive(Debug, Clone)]
pub struct EnvelopeFollower {
    band: Biquad,
    smooth: Biquad,
    primed: bool,
}

impl EnvelopeFollower {
    pub fn new(f_hz: f64, dt: f64) -> Result<Self> {
        if !(f_hz > 0.0 && f_hz < 0.5 / dt) {
            return Err(Error::InvalidWindow(format!(
                "{f_hz} Hz is outside (0, Nyquist) for a {dt} s sampling step"
            )));
        }
        Ok(Self {
            band: Biquad::band_pass(f_hz, BAND_Q, dt),
            smooth: Biquad::low_pass2(f_hz / 5.0, std::f64::consts::FRAC_1_SQRT_2, dt),
            primed: false,
        })
    }

    pub fn step(&mut self, x: f64) -> f64 {
        if !self.primed {
            // start from rest at the first sample's level so a DC offset is not seen as a step
            self.band.set_steady(x);
            self.smooth.set_steady(0.0);
            self.primed = true;
        }
        std::f64::consts::FRAC_PI_2 * self.smooth.step(self.band.step(x).abs())
    }
}

/// Envelope of a whole record.
pub fn oscillation_magnitude(x: &[f64], f_hz: f64, dt: f64) -> Result<Vec<f64>> {
    let mut e = EnvelopeFollower::new(f_hz, dt)?;
    Ok(x.iter().map(|&v| e.step(v)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionCurve {
    pub pickup: f64,
    pub reset: f64,
    /// (elapsed time since arming s, largest tolerated magnitude); non-increasing. Held at the
    /// last value beyond the final point.
    pub allowance: Vec<(f64, f64)>,
}

impl DetectionCurve {
    pub fn new(pickup: f64, reset: f64, allowance: Vec<(f64, f64)>) -> Result<Self> {
        let c = Self {
            pickup,
            reset,
            allowance,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reset >= 0.0 && self.reset < self.pickup) {
            return Err(Error::InvalidModel(
                "detection curve: need 0 <= reset < pickup".into(),
            ));
        }
        if self.allowance.is_empty() || self.allowance[0].0 != 0.0 {
            return Err(Error::InvalidModel(
                "detection curve: allowance must start at t = 0".into(),
            ));
        }
        for w in self.allowance.windows(2) {
            if !(w[1].0 > w[0].0) || w[1].1 > w[0].1 {
                return Err(Error::InvalidModel(
                    "detection curve: allowance times must increase and magnitudes must not".into(),
                ));
            }
        }
        Ok(())
    }

    /// Exponential allowance `scale·pickup·e^{−t/τ}` tabulated over `horizon` seconds.
    pub fn exponential(
        pickup: f64,
        reset: f64,
        scale: f64,
        tau: f64,
        horizon: f64,
    ) -> Result<Self> {
        if !(tau > 0.0 && horizon > 0.0 && scale > 0.0) {
            return Err(Error::InvalidModel(
                "detection curve: tau, horizon and scale must be positive".into(),
            ));
        }
        let n = 400;
        let pts = (0..=n)
            .map(|k| {
                let t = horizon * k as f64 / n as f64;
                (t, scale * pickup * (-t / tau).exp())
            })
            .collect();
        Self::new(pickup, reset, pts)
    }

    /// Default curve for a mode of modal inertia `h_m`: τ = 5/|σ| with σ the decay a damping of
    /// `settings.required_damping` would give that mode.
    pub fn for_mode(settings: &ProtectionSettings, h_m: f64) -> Result<Self> {
        let sigma = settings.required_damping / (4.0 * h_m);
        Self::exponential(
            settings.pickup,
            settings.reset,
            settings.allowance_scale,
            5.0 / sigma.abs(),
            settings.horizon,
        )
    }

    pub fn allowance_at(&self, elapsed: f64) -> f64 {
        let a = &self.allowance;
        let k = a.partition_point(|p| p.0 <= elapsed);
        if k >= a.len() {
            return a[a.len() - 1].1;
        }
        let (p, q) = (a[k - 1], a[k]);
        p.1 + (q.1 - p.1) * (elapsed - p.0) / (q.0 - p.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Armed,
    Clear,
    Trip,
}

impl Decision {
    pub fn as_str(&self) -> &'static str {
        match self {
            Decision::Armed => "armed",
            Decision::Clear => "clear",
            Decision::Trip => "TRIP",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionEvent {
    pub time: f64,
    pub decision: Decision,
    pub magnitude: f64,
}

/// Runs the relay over an envelope sampled at `t0 + k·dt`. A trip latches and ends evaluation.
pub fn evaluate_trip(
    envelope: &[f64],
    t0: f64,
    dt: f64,
    curve: &DetectionCurve,
) -> Vec<DecisionEvent> {
    let mut out = Vec::new();
    let mut armed_at: Option<f64> = None;
    for (k, &e) in envelope.iter().enumerate() {
        let t = t0 + k as f64 * dt;
        match armed_at {
            None => {
                if e > curve.pickup {
                    armed_at = Some(t);
                    out.push(DecisionEvent {
                        time: t,
                        decision: Decision::Armed,
                        magnitude: e,
                    });
                    if e > curve.allowance_at(0.0) {
                        out.push(DecisionEvent {
                            time: t,
                            decision: Decision::Trip,
                            magnitude: e,
                        });
                        return out;
                    }
                }
            }
            Some(ta) => {
                if e > curve.allowance_at(t - ta) {
                    out.push(DecisionEvent {
                        time: t,
                        decision: Decision::Trip,
                        magnitude: e,
                    });
                    return out;
                }
                if e < curve.reset {
                    armed_at = None;
                    out.push(DecisionEvent {
                        time: t,
                        decision: Decision::Clear,
                        magnitude: e,
                    });
                }
            }
        }
    }
    out
}

pub fn first_trip(events: &[DecisionEvent]) -> Option<f64> {
    events
        .iter()
        .find(|e| e.decision == Decision::Trip)
        .map(|e| e.time)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeLog {
    pub mode: usize,
    pub f: f64,
    pub events: Vec<DecisionEvent>,
}

/// Relay applied to one trace channel at each listed mode (1-based index, frequency, modal
/// inertia).
pub fn protection_check(
    trace: &SimTrace,
    settings: &ProtectionSettings,
    modes: &[(usize, f64, f64)],
) -> Result<Vec<ModeLog>> {
    let x = trace.require(&settings.channel)?;
    let t0 = trace.start_time();
    modes
        .iter()
        .map(|&(mode, f, h_m)| {
            let env = oscillation_magnitude(x, f, trace.sample_dt)?;
            let curve = DetectionCurve::for_mode(settings, h_m)?;
            Ok(ModeLog {
                mode,
                f,
                events: evaluate_trip(&env, t0, trace.sample_dt, &curve),
            })
        })
        .collect()
}

pub fn write_decision_csv<W: Write>(logs: &[ModeLog], mut w: W) -> Result<()> {
    writeln!(w, "mode,f_hz,time,decision,magnitude")?;
    for l in logs {
        for e in &l.events {
            writeln!(
                w,
                "{},{},{},{},{}",
                l.mode,
                fmt_num(l.f),
                fmt_num(e.time),
                e.decision.as_str(),
                fmt_num(e.magnitude)
            )?;
        }
    }
    Ok(())
}
