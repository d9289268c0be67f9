//! Single-frequency measurements on uniformly sampled records.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::plant::blocks::{filtfilt, Biquad};

/// Signal floor below which no component is reported, pu.
pub const NOISE_FLOOR: f64 = 1e-9;

/// A uniformly sampled record: sample k sits at `t0 + k·dt`.
#[derive(Debug, Clone, Copy)]
pub struct Record<'a> {
    pub t0: f64,
    pub dt: f64,
    pub x: &'a [f64],
}

impl Record<'_> {
    fn end(&self) -> f64 {
        self.t0 + (self.x.len().saturating_sub(1)) as f64 * self.dt
    }
}

/// Phasor of `x ≈ A cos(2πf t + φ)` (absolute time) over a whole number of periods starting
/// at `start`. The window `length` is rounded to the nearest whole number of periods, then to the
/// nearest whole number of samples.
///
/// The single-bin sum `Σ x_k e^{-jωt_k}` is corrected for the leakage of the negative-frequency
/// image and of a constant offset, both known in closed form on the sample grid, so a pure tone
/// plus offset is recovered exactly whether or not the period is commensurate with the step.
pub fn measure_tone(rec: Record<'_>, f: f64, start: f64, length: f64) -> Result<Complex64> {
    if !(f > 0.0) {
        return Err(Error::InvalidWindow(format!(
            "frequency must be positive, got {f}"
        )));
    }
    let periods = (length * f).round();
    if periods < 1.0 {
        return Err(Error::InvalidWindow(format!(
            "window of {length} s is shorter than one period at {f} Hz"
        )));
    }
    let n = ((periods / f) / rec.dt).round() as usize;
    let k0 = ((start - rec.t0) / rec.dt - 1e-9).ceil().max(0.0) as usize;
    if n < 3 || start < rec.t0 - 1e-9 * rec.dt || k0 + n > rec.x.len() {
        return Err(Error::InvalidWindow(format!(
            "window of {periods} periods from {start} s is not covered by the record [{}, {}] s",
            rec.t0,
            rec.end()
        )));
    }
    let w = 2.0 * PI * f;
    let (mut s0, mut s1) = (0.0, Complex64::new(0.0, 0.0));
    let (mut e1, mut e2) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for k in k0..k0 + n {
        let t = rec.t0 + k as f64 * rec.dt;
        let r = Complex64::from_polar(1.0, -w * t);
        s0 += rec.x[k];
        s1 += rec.x[k] * r;
        e1 += r;
        e2 += r * r;
    }
    let nf = n as f64;
    // model x = c + (P e^{jωt} + P* e^{-jωt})/2, unknowns [c, Re P, Im P]:
    //   S1 = c·E1 + (P·N + P*·E2)/2
    //   S0 = c·N + Re(P·E1*)
    let m = nalgebra::Matrix3::new(
        e1.re,
        0.5 * (nf + e2.re),
        0.5 * e2.im,
        e1.im,
        0.5 * e2.im,
        0.5 * (nf - e2.re),
        nf,
        e1.re,
        e1.im,
    );
    let sol = m
        .lu()
        .solve(&nalgebra::Vector3::new(s1.re, s1.im, s0))
        .ok_or_else(|| Error::InvalidWindow(format!("degenerate window at {f} Hz")))?;
    Ok(Complex64::new(sol[1], sol[2]))
}

/// Joint least-squares fit of `c + Σ Re(X_i e^{j2πf_i t})` over `[start, stop]`; returns X_i.
/// Unlike single-bin evaluation it separates tones whose common period exceeds the window.
pub fn fit_tones(rec: Record<'_>, freqs: &[f64], start: f64, stop: f64) -> Result<Vec<Complex64>> {
    let eps = 1e-9 * rec.dt;
    let k0 = ((start - rec.t0) / rec.dt - 1e-9).ceil().max(0.0) as usize;
    let k1 =
        (((stop - rec.t0) / rec.dt + 1e-9).floor() as usize).min(rec.x.len().saturating_sub(1));
    let ncol = 1 + 2 * freqs.len();
    if rec.x.is_empty() || k1 < k0 + ncol || stop > rec.end() + eps {
        return Err(Error::InvalidWindow(format!(
            "window [{start}, {stop}] s has too few samples for {} tones",
            freqs.len()
        )));
    }
    let rows = k1 - k0 + 1;
    let mut a = DMatrix::zeros(rows, ncol);
    let mut b = DVector::zeros(rows);
    for r in 0..rows {
        let t = rec.t0 + (k0 + r) as f64 * rec.dt;
        a[(r, 0)] = 1.0;
        for (i, f) in freqs.iter().enumerate() {
            let (s, c) = (2.0 * PI * f * t).sin_cos();
            a[(r, 1 + 2 * i)] = c;
            a[(r, 2 + 2 * i)] = s;
        }
        b[r] = rec.x[k0 + r];
    }
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::InvalidWindow(format!("tone fit: {e}")))?;
    // c·cos + s·sin = Re((c − js) e^{jωt})
    Ok((0..freqs.len())
        .map(|i| Complex64::new(sol[1 + 2 * i], -sol[2 + 2 * i]))
        .collect())
}

/// Exponential growth rate (1/s) of the component near `f` inside `[start, stop]`.
///
/// The record is band-passed forward and backward (Q = 10), `5τ` of filter transient is trimmed
/// at both record ends, and a straight line is fitted by least squares to the log of the local
/// peaks of the filtered signal.
pub fn growth_rate(rec: Record<'_>, f: f64, start: f64, stop: f64) -> Result<f64> {
    const Q: f64 = 10.0;
    let w = 2.0 * PI * f;
    if !(f > 0.0 && f < 0.5 / rec.dt) {
        return Err(Error::InvalidWindow(format!(
            "{f} Hz is outside (0, Nyquist) for a {} s sampling step",
            rec.dt
        )));
    }
    let tau = 2.0 * Q / w;
    let lo = start.max(rec.t0 + 5.0 * tau);
    let hi = stop.min(rec.end() - 5.0 * tau);
    if (hi - lo) * f < 10.0 {
        return Err(Error::InvalidWindow(format!(
            "only {:.1} cycles of {f} Hz remain in the analysis window after trimming filter transients; need 10",
            ((hi - lo) * f).max(0.0)
        )));
    }
    let y = filtfilt(&Biquad::band_pass(f, Q, rec.dt), rec.x);
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut peak = 0.0f64;
    for k in 1..y.len() - 1 {
        let (a, b, c) = (y[k - 1].abs(), y[k].abs(), y[k + 1].abs());
        if b >= a && b > c {
            // parabolic refinement of the peak
            let den = a - 2.0 * b + c;
            let (dk, v) = if den < 0.0 {
                let d = 0.5 * (a - c) / den;
                (d, b - 0.25 * (a - c) * d)
            } else {
                (0.0, b)
            };
            let t = rec.t0 + (k as f64 + dk) * rec.dt;
            if t >= lo && t <= hi {
                peak = peak.max(v);
                pts.push((t, v));
            }
        }
    }
    if peak < NOISE_FLOOR {
        return Err(Error::NoComponent {
            freq_hz: f,
            floor: NOISE_FLOOR,
        });
    }
    let pts: Vec<(f64, f64)> = pts.into_iter().filter(|p| p.1 > 0.0).collect();
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, v) in &pts {
        sxy += (t - mt) * (v.ln() - my);
        sxx += (t - mt) * (t - mt);
    }
    Ok(sxy / sxx)
}
