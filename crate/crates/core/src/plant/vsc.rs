//! Averaged grid-following VSC: SRF-PLL, measured P/Q, outer power and reactive-power PI loops,
//! d-priority current limiting and a first-order closed inner current loop. No switching, stiff
//! DC side. Powers and currents are in converter per unit, injection convention (positive P
//! is delivered to the AC network).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::blocks::{Biquad, PiController};
use crate::error::{Error, Result};

fn default_block_voltage() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HvdcConverter {
    /// Bus name of the point of common coupling.
    pub bus: String,
    pub rated_mva: f64,
    /// Active-power setpoint; negative values absorb power (rectifier operation).
    pub p_ref: f64,
    pub q_ref: f64,
    pub pll_kp: f64,
    pub pll_ki: f64,
    /// Closed inner current-loop bandwidth, rad/s.
    pub current_bandwidth: f64,
    pub power_kp: f64,
    pub power_ki: f64,
    pub reactive_kp: f64,
    pub reactive_ki: f64,
    pub current_limit: f64,
    /// P/Q measurement low-pass corner, rad/s.
    pub measurement_bandwidth: f64,
    /// Frequency-sensitive active-power term ΔP = −gain·Δω_filtered.
    pub frequency_gain: f64,
    /// Filter time constant of the frequency-sensitive term, s.
    pub frequency_filter: f64,
    #[serde(default = "default_block_voltage")]
    pub block_voltage: f64,
}

impl HvdcConverter {
    /// PLL natural frequency, rad/s, for the linearized loop `s² + ω0·kp·s + ω0·ki`.
    pub fn pll_natural_frequency(&self, base_frequency: f64) -> f64 {
        (2.0 * std::f64::consts::PI * base_frequency * self.pll_ki).sqrt()
    }

    pub fn validate(&self, base_frequency: f64) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModel(format!("hvdc: {m}")));
        if !(self.rated_mva > 0.0) {
            return bad("rated_mva must be positive".into());
        }
        if !(self.current_limit >= 1.0) {
            return bad(format!(
                "current_limit must be >= 1.0 pu, got {}",
                self.current_limit
            ));
        }
        if !(self.pll_kp > 0.0 && self.pll_ki > 0.0) {
            return bad("PLL gains must be positive".into());
        }
        if !(self.current_bandwidth > 0.0 && self.measurement_bandwidth > 0.0) {
            return bad("bandwidths must be positive".into());
        }
        let wn = self.pll_natural_frequency(base_frequency);
        if !(wn < self.current_bandwidth) {
            return bad(format!(
                "PLL natural frequency {wn:.1} rad/s must stay below the current-loop bandwidth {:.1} rad/s",
                self.current_bandwidth
            ));
        }
        if !(self.power_kp >= 0.0
            && self.power_ki >= 0.0
            && self.reactive_kp >= 0.0
            && self.reactive_ki >= 0.0)
        {
            return bad("power-loop gains must be non-negative".into());
        }
        if !(self.frequency_gain >= 0.0 && self.frequency_filter > 0.0) {
            return bad("frequency_gain must be >= 0 and frequency_filter > 0".into());
        }
        if !(self.block_voltage >= 0.0) {
            return bad("block_voltage must be non-negative".into());
        }
        let s = Complex64::new(self.p_ref, self.q_ref).norm();
        if s > self.current_limit {
            return bad(format!(
                "setpoint magnitude {s:.3} pu exceeds the current limit"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VscOutput {
    /// Converter current in the network frame, converter per unit.
    pub current: Complex64,
    /// PLL frequency, pu.
    pub omega_net: f64,
    pub p_meas: f64,
    pub q_meas: f64,
    pub blocked: bool,
    /// The reference was clipped by the current limiter this step.
    pub current_limited: bool,
}

#[derive(Debug, Clone)]
pub struct Vsc {
    pub params: HvdcConverter,
    omega0: f64,
    h: f64,
    theta: f64,
    pll: PiController,
    dw_prev: f64,
    p_filter: Biquad,
    q_filter: Biquad,
    dw_filter: Biquad,
    p_loop: PiController,
    q_loop: PiController,
    /// Inner-loop current, controller frame.
    i: Complex64,
    i_ref_prev: Complex64,
    alpha: f64,
    beta: f64,
    last: VscOutput,
}

impl Vsc {
    /// Builds a converter in steady state at PCC voltage `v` (network frame) delivering
    /// `p_ref + j q_ref`.
    pub fn new(params: &HvdcConverter, v: Complex64, base_frequency: f64, h: f64) -> Result<Self> {
        params.validate(base_frequency)?;
        let omega0 = 2.0 * std::f64::consts::PI * base_frequency;
        let vm = v.norm();
        if vm < params.block_voltage || vm == 0.0 {
            return Err(Error::InvalidModel(format!(
                "hvdc: initial PCC voltage {vm:.3} pu is below the blocking threshold"
            )));
        }
        let wf = params.measurement_bandwidth;
        let mut p_filter = Biquad::lag(1.0 / wf, h);
        let mut q_filter = Biquad::lag(1.0 / wf, h);
        let dw_filter = Biquad::lag(params.frequency_filter, h);
        let i = Complex64::new(params.p_ref, -params.q_ref) / vm;
        p_filter.set_steady(params.p_ref);
        q_filter.set_steady(params.q_ref);
        let mut p_loop = PiController::new(params.power_kp, params.power_ki);
        p_loop.set_output(i.re);
        let mut q_loop = PiController::new(params.reactive_kp, params.reactive_ki);
        q_loop.set_output(-i.im);
        let k = 0.5 * params.current_bandwidth * h;
        let out = VscOutput {
            current: i * Complex64::from_polar(1.0, v.arg()),
            omega_net: 1.0,
            p_meas: params.p_ref,
            q_meas: params.q_ref,
            blocked: false,
            current_limited: false,
        };
        Ok(Self {
            params: params.clone(),
            omega0,
            h,
            theta: v.arg(),
            pll: PiController::new(params.pll_kp, params.pll_ki),
            dw_prev: 0.0,
            p_filter,
            q_filter,
            dw_filter,
            p_loop,
            q_loop,
            i,
            i_ref_prev: i,
            alpha: (1.0 - k) / (1.0 + k),
            beta: k / (1.0 + k),
            last: out,
        })
    }

    pub fn output(&self) -> VscOutput {
        self.last
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Advances one step with PCC voltage `v` (network frame) and supplementary power `p_aux`
    /// (converter pu, added to the active-power reference). Returns the current for the end of
    /// the step.
    pub fn step(&mut self, v: Complex64, p_aux: f64) -> VscOutput {
        let vm = v.norm();
        if !(vm >= self.params.block_voltage) || vm == 0.0 {
            self.i = Complex64::new(0.0, 0.0);
            self.i_ref_prev = self.i;
            self.last = VscOutput {
                current: self.i,
                omega_net: self.last.omega_net,
                p_meas: 0.0,
                q_meas: 0.0,
                blocked: true,
                current_limited: false,
            };
            return self.last;
        }

        // SRF-PLL on the normalized q-component.
        let vp = v * Complex64::from_polar(1.0, -self.theta);
        let vq = vp.im / vm;
        let dw = self.pll.step(vq, self.h, false);

        let s = vp * self.i.conj();
        let p = self.p_filter.step(s.re);
        let q = self.q_filter.step(s.im);
        let dw_f = self.dw_filter.step(dw);

        let pref = self.params.p_ref - self.params.frequency_gain * dw_f + p_aux;
        let ep = pref - p;
        let eq = self.params.q_ref - q;
        let lim = self.params.current_limit;

        let id_u = self.p_loop.preview(ep, self.h);
        let id = id_u.clamp(-lim, lim);
        let freeze_p = id != id_u && id_u.signum() == ep.signum();
        let id_u = self.p_loop.step(ep, self.h, freeze_p);
        let id = id_u.clamp(-lim, lim);

        let iq_lim = (lim * lim - id * id).max(0.0).sqrt();
        let iq_u = -self.q_loop.preview(eq, self.h);
        let iq = iq_u.clamp(-iq_lim, iq_lim);
        let freeze_q = iq != iq_u && (-iq_u).signum() == eq.signum();
        let iq_u = -self.q_loop.step(eq, self.h, freeze_q);
        let iq = iq_u.clamp(-iq_lim, iq_lim);

        let i_ref = Complex64::new(id, iq);
        let limited = id != id_u || iq != iq_u;
        // Convex combination of three points inside the limit circle stays inside it.
        self.i = self.i * self.alpha + (self.i_ref_prev + i_ref) * self.beta;
        self.i_ref_prev = i_ref;

        self.theta += 0.5 * self.h * self.omega0 * (dw + self.dw_prev);
        self.dw_prev = dw;
        self.theta = self.theta.rem_euclid(std::f64::consts::TAU);

        self.last = VscOutput {
            current: self.i * Complex64::from_polar(1.0, self.theta),
            omega_net: 1.0 + dw,
            p_meas: p,
            q_meas: q,
            blocked: false,
            current_limited: limited,
        };
        self.last
    }
}
