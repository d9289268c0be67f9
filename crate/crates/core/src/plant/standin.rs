//! Analytic linear replacement for the electrical system, used to verify the scan machinery:
//! ΔTe = D·Δω + Ks·Δδ + K1/(1 + sT)·Δω acting on a single rotor of inertia H.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StandIn {
    /// Rotor inertia constant, s.
    pub inertia: f64,
    /// pu torque per pu speed.
    pub damping: f64,
    /// pu torque per electrical radian.
    pub synchronizing: f64,
    #[serde(default)]
    pub lag_gain: f64,
    /// s
    #[serde(default = "default_lag_time")]
    pub lag_time: f64,
}

fn default_lag_time() -> f64 {
    0.01
}

impl StandIn {
    pub fn validate(&self) -> Result<()> {
        if !(self.inertia > 0.0 && self.lag_time > 0.0 && self.synchronizing >= 0.0) {
            return Err(Error::InvalidModel(
                "stand_in: need inertia > 0, lag_time > 0, synchronizing >= 0".into(),
            ));
        }
        Ok(())
    }

    /// ΔTe/Δω at `f_hz`.
    pub fn transfer(&self, f_hz: f64, base_frequency: f64) -> Complex64 {
        let w = 2.0 * std::f64::consts::PI * f_hz;
        let w0 = 2.0 * std::f64::consts::PI * base_frequency;
        let s = Complex64::new(0.0, w);
        self.damping + self.synchronizing * w0 / s + self.lag_gain / (1.0 + s * self.lag_time)
    }
}
