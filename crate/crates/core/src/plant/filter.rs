//! Series blocking filter: a parallel R-L-C tank inserted between the generator and the
//! low-voltage side of its step-up transformer.
//!
//! A rotor oscillation at `f_m` shows up in the stator as two sidebands, `f0 − f_m` and
//! `f0 + f_m`; the tank is tuned to one of them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_quality() -> f64 {
    100.0
}

fn default_peak() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockingFilter {
    /// Tank resonance, Hz (stationary-frame frequency).
    pub tuned_frequency: f64,
    #[serde(default = "default_quality")]
    pub quality_factor: f64,
    /// |Z| at resonance, pu on the machine base.
    #[serde(default = "default_peak")]
    pub peak_impedance: f64,
}

impl BlockingFilter {
    pub fn validate(&self, base_frequency: f64) -> Result<()> {
        if !(self.tuned_frequency > 0.0 && self.tuned_frequency < 2.0 * base_frequency) {
            return Err(Error::InvalidModel(format!(
                "filter.tuned_frequency must lie in (0, {}) Hz",
                2.0 * base_frequency
            )));
        }
        if !(self.quality_factor > 0.0 && self.peak_impedance > 0.0) {
            return Err(Error::InvalidModel(
                "filter.quality_factor and filter.peak_impedance must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Element values on the machine base: (R, X_L, B_C) with reactance/susceptance at `f_hz`.
    pub fn elements_at(&self, f_hz: f64) -> (f64, f64, f64) {
        let r = self.peak_impedance;
        let x_t = r / self.quality_factor;
        let ratio = f_hz / self.tuned_frequency;
        (r, x_t * ratio, ratio / x_t)
    }

    /// Tank impedance at frequency `f_hz` (machine-base pu). Conjugate-symmetric in `f`.
    pub fn response(&self, f_hz: f64) -> Complex64 {
        let x = self.quality_factor * (f_hz / self.tuned_frequency - self.tuned_frequency / f_hz);
        if !x.is_finite() {
            return Complex64::new(0.0, 0.0);
        }
        self.peak_impedance / Complex64::new(1.0, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sideband {
    /// `f0 − f_m`
    Sub,
    /// `f0 + f_m`
    Super,
}

impl Sideband {
    pub fn frequency(&self, mode_frequency: f64, base_frequency: f64) -> f64 {
        match self {
            Sideband::Sub => base_frequency - mode_frequency,
            Sideband::Super => base_frequency + mode_frequency,
        }
    }
}

/// Tank tuned to one stator-side image of a torsional mode.
pub fn design_blocking_filter(
    mode_frequency: f64,
    base_frequency: f64,
    sideband: Sideband,
    quality_factor: f64,
    peak_impedance: f64,
) -> Result<BlockingFilter> {
    let f = BlockingFilter {
        tuned_frequency: sideband.frequency(mode_frequency, base_frequency),
        quality_factor,
        peak_impedance,
    };
    f.validate(base_frequency)?;
    Ok(f)
}
