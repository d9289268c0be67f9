//! Narrow-band supplementary damping controller: band-pass → lead-lag → gain → limiter.

use serde::{Deserialize, Serialize};

use super::blocks::Biquad;
use crate::error::{Error, Result};

fn default_quality() -> f64 {
    50.0
}

fn default_limit() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsdcParams {
    /// Band-pass centre, Hz.
    pub center_frequency: f64,
    #[serde(default = "default_quality")]
    pub quality_factor: f64,
    pub t1: f64,
    pub t2: f64,
    /// pu power per pu speed.
    pub gain: f64,
    /// Output limit, converter pu (symmetric).
    #[serde(default = "default_limit")]
    pub limit: f64,
}

impl SsdcParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.center_frequency > 0.0
            && self.quality_factor > 0.0
            && self.t1 > 0.0
            && self.t2 > 0.0
            && self.limit > 0.0
            && self.gain.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(
                "ssdc: center_frequency, quality_factor, t1, t2 and limit must be positive".into(),
            ))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ssdc {
    pub params: SsdcParams,
    band_pass: Biquad,
    lead_lag: Biquad,
}

impl Ssdc {
    /// Builds the controller at rest for a constant input `u0`.
    pub fn new(params: &SsdcParams, h: f64, u0: f64) -> Result<Self> {
        params.validate()?;
        let mut band_pass = Biquad::band_pass(params.center_frequency, params.quality_factor, h);
        band_pass.set_steady(u0);
        let mut lead_lag = Biquad::lead_lag(params.t1, params.t2, h);
        lead_lag.set_steady(0.0);
        Ok(Self {
            params: params.clone(),
            band_pass,
            lead_lag,
        })
    }

    /// One sample of ω_net in, (P_SSDC, limiter active) out.
    pub fn step(&mut self, omega_net: f64) -> (f64, bool) {
        let y = self.params.gain * self.lead_lag.step(self.band_pass.step(omega_net));
        let lim = self.params.limit;
        if y > lim {
            (lim, true)
        } else if y < -lim {
            (-lim, true)
        } else {
            (y, false)
        }
    }
}
