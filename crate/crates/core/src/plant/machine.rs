//! Round-rotor synchronous machine: dq flux-linkage model with one field, one d-axis and one
//! q-axis damper winding, per-unit on the machine base, generator current convention.
//!
//! The rotor frame has the d-axis on the real axis; a quantity seen from the synchronous
//! network frame is rotated by `e^{-jδ}`, δ being the d-axis angle.

use nalgebra::{Matrix3, Matrix5, Vector5};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineElec {
    pub rated_mva: f64,
    pub rated_kv: f64,
    pub xd: f64,
    pub xq: f64,
    /// X'd
    pub xd_transient: f64,
    /// X''d
    pub xd_subtransient: f64,
    /// X''q
    pub xq_subtransient: f64,
    /// Stator leakage.
    pub xl: f64,
    /// T'd0, s
    pub td0_transient: f64,
    /// T''d0, s
    pub td0_subtransient: f64,
    /// T''q0, s
    pub tq0_subtransient: f64,
    pub ra: f64,
}

impl MachineElec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidModel(format!("machine: {m}")));
        if !(self.rated_mva > 0.0) || !(self.rated_kv > 0.0) {
            return bad("rated_mva and rated_kv must be positive");
        }
        if !(self.xd >= self.xd_transient
            && self.xd_transient >= self.xd_subtransient
            && self.xd_subtransient > 0.0)
        {
            return bad("reactances must satisfy xd >= xd_transient >= xd_subtransient > 0");
        }
        if !(self.xq >= self.xq_subtransient && self.xq_subtransient > 0.0) {
            return bad("reactances must satisfy xq >= xq_subtransient > 0");
        }
        if !(self.xl >= 0.0 && self.xl < self.xd_subtransient && self.xl < self.xq_subtransient) {
            return bad("xl must be non-negative and below both subtransient reactances");
        }
        if !(self.td0_transient > 0.0 && self.td0_subtransient > 0.0 && self.tq0_subtransient > 0.0)
        {
            return bad("open-circuit time constants must be positive");
        }
        if !(self.ra >= 0.0) {
            return bad("ra must be non-negative");
        }
        let m = MachineModel::derive(self, 1.0);
        for (name, v) in [
            ("field leakage", m.lfd),
            ("d-axis damper leakage", m.l1d),
            ("q-axis damper leakage", m.l1q),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!(
                    "reactances imply a non-positive {name} inductance ({v:.4}); check xd_transient/xd_subtransient/xq_subtransient"
                ));
            }
        }
        Ok(())
    }
}

/// Fundamental-parameter form of [`MachineElec`] ready for time stepping.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineModel {
    pub ra: f64,
    pub ld: f64,
    pub lq: f64,
    pub lad: f64,
    pub laq: f64,
    pub lfd: f64,
    pub l1d: f64,
    pub l1q: f64,
    pub rfd: f64,
    pub r1d: f64,
    pub r1q: f64,
    omega0: f64,
    /// Inverse inductance matrix, state order [ψd, ψfd, ψ1d, ψq, ψ1q] → [id, ifd, i1d, iq, i1q].
    linv: Matrix5<f64>,
    /// diag(Ra, −Rfd, −R1d, Ra, −R1q)·L⁻¹
    rl: Matrix5<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineState {
    /// [ψd, ψfd, ψ1d, ψq, ψ1q]
    pub psi: [f64; 5],
    /// Field voltage, air-gap-line per unit (1.0 gives 1 pu open-circuit voltage).
    pub efd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineOutput {
    pub te: f64,
    /// Stator current id + j·iq, rotor frame, generator convention.
    pub i_dq: Complex64,
}

/// Initial conditions derived from a terminal operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineInit {
    pub state: MachineState,
    /// d-axis angle in the network frame, rad.
    pub delta: f64,
    pub te: f64,
    pub i_dq: Complex64,
}

impl MachineModel {
    pub fn new(p: &MachineElec, base_frequency: f64) -> Result<Self> {
        p.validate()?;
        Ok(Self::derive(p, base_frequency))
    }

    fn derive(p: &MachineElec, base_frequency: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * base_frequency;
        let ll = p.xl;
        let lad = p.xd - ll;
        let laq = p.xq - ll;
        let lfd = lad * (p.xd_transient - ll) / (lad - (p.xd_transient - ll));
        let l1d = 1.0 / (1.0 / (p.xd_subtransient - ll) - 1.0 / lad - 1.0 / lfd);
        let l1q = 1.0 / (1.0 / (p.xq_subtransient - ll) - 1.0 / laq);
        let rfd = (lad + lfd) / (w0 * p.td0_transient);
        let r1d = (l1d + lad * lfd / (lad + lfd)) / (w0 * p.td0_subtransient);
        let r1q = (l1q + laq) / (w0 * p.tq0_subtransient);

        let md = Matrix3::new(
            -p.xd,
            lad,
            lad, //
            -lad,
            lad + lfd,
            lad, //
            -lad,
            lad,
            lad + l1d,
        );
        let mdi = md.try_inverse().unwrap_or_else(Matrix3::zeros);
        let mq = nalgebra::Matrix2::new(-p.xq, laq, -laq, laq + l1q);
        let mqi = mq.try_inverse().unwrap_or_else(nalgebra::Matrix2::zeros);
        let mut linv = Matrix5::zeros();
        linv.fixed_view_mut::<3, 3>(0, 0).copy_from(&mdi);
        linv.fixed_view_mut::<2, 2>(3, 3).copy_from(&mqi);
        let r = Vector5::new(p.ra, -rfd, -r1d, p.ra, -r1q);
        let rl = Matrix5::from_diagonal(&r) * linv;
        Self {
            ra: p.ra,
            ld: p.xd,
            lq: p.xq,
            lad,
            laq,
            lfd,
            l1d,
            l1q,
            rfd,
            r1d,
            r1q,
            omega0: w0,
            linv,
            rl,
        }
    }

    /// Winding currents [id, ifd, i1d, iq, i1q] for the given flux linkages.
    pub fn currents(&self, psi: &[f64; 5]) -> [f64; 5] {
        let i = self.linv * Vector5::from_column_slice(psi);
        [i[0], i[1], i[2], i[3], i[4]]
    }

    pub fn torque(&self, psi: &[f64; 5]) -> MachineOutput {
        let i = self.currents(psi);
        MachineOutput {
            te: psi[0] * i[3] - psi[3] * i[0],
            i_dq: Complex64::new(i[0], i[3]),
        }
    }

    fn system(&self, wr: f64) -> Matrix5<f64> {
        let mut m = self.rl;
        m[(0, 3)] += wr;
        m[(3, 0)] -= wr;
        m * self.omega0
    }

    fn forcing(&self, v_dq: Complex64, efd: f64) -> Vector5<f64> {
        Vector5::new(v_dq.re, self.rfd / self.lad * efd, 0.0, v_dq.im, 0.0) * self.omega0
    }

    /// Time derivative of the flux linkages (continuous model).
    pub fn derivative(&self, st: &MachineState, v_dq: Complex64, wr: f64) -> [f64; 5] {
        let d = self.system(wr) * Vector5::from_column_slice(&st.psi) + self.forcing(v_dq, st.efd);
        [d[0], d[1], d[2], d[3], d[4]]
    }

    /// One trapezoidal step. `v0`, `w0` apply at the start of the step, `v1`, `w1` at its end;
    /// voltages are rotor-frame stator voltages in machine per unit.
    pub fn step(
        &self,
        st: &mut MachineState,
        v0: Complex64,
        v1: Complex64,
        w0: f64,
        w1: f64,
        h: f64,
    ) -> Result<MachineOutput> {
        self.step_coupled(st, v0, v1, Complex64::new(0.0, 0.0), w0, w1, h)
    }

    /// Trapezoidal step against a linear terminal: the end-of-step voltage is
    /// `v1 = a1 + z·i_dq(ψ1)`, solved simultaneously with the flux equations.
    #[allow(clippy::too_many_arguments)]
    pub fn step_coupled(
        &self,
        st: &mut MachineState,
        v0: Complex64,
        a1: Complex64,
        z: Complex64,
        w0: f64,
        w1: f64,
        h: f64,
    ) -> Result<MachineOutput> {
        let x0 = Vector5::from_column_slice(&st.psi);
        let a0 = self.system(w0);
        let mut a1m = self.system(w1);
        let (r0, r3) = (self.linv.row(0).into_owned(), self.linv.row(3).into_owned());
        let vd = (r0 * z.re - r3 * z.im) * self.omega0;
        let vq = (r0 * z.im + r3 * z.re) * self.omega0;
        for c in 0..5 {
            a1m[(0, c)] += vd[c];
            a1m[(3, c)] += vq[c];
        }
        let lhs = Matrix5::identity() - a1m * (0.5 * h);
        let rhs = x0
            + (a0 * x0) * (0.5 * h)
            + (self.forcing(v0, st.efd) + self.forcing(a1, st.efd)) * (0.5 * h);
        let x1 = lhs.lu().solve(&rhs).ok_or_else(|| Error::Divergence {
            signal: "machine.flux".into(),
            time: f64::NAN,
        })?;
        const NAMES: [&str; 5] = ["psi_d", "psi_fd", "psi_1d", "psi_q", "psi_1q"];
        if let Some(k) = (0..5).find(|&k| !x1[k].is_finite()) {
            return Err(Error::Divergence {
                signal: format!("machine.{}", NAMES[k]),
                time: f64::NAN,
            });
        }
        st.psi = [x1[0], x1[1], x1[2], x1[3], x1[4]];
        Ok(self.torque(&st.psi))
    }

    /// Steady state for terminal voltage `v` and stator current `i` (network frame, machine pu,
    /// generator convention) at rated speed.
    pub fn initialize(&self, v: Complex64, i: Complex64) -> MachineInit {
        let eq = v + Complex64::new(self.ra, self.lq) * i;
        let delta = eq.arg() - FRAC_PI_2;
        let rot = Complex64::from_polar(1.0, -delta);
        let vr = v * rot;
        let ir = i * rot;
        let (vd, vq, id, iq) = (vr.re, vr.im, ir.re, ir.im);
        let psid = vq + self.ra * iq;
        let psiq = -vd - self.ra * id;
        let ifd = (psid + self.ld * id) / self.lad;
        let efd = self.lad * ifd;
        let psifd = (self.lad + self.lfd) * ifd - self.lad * id;
        let psi1d = self.lad * (ifd - id);
        let psi1q = -self.laq * iq;
        let state = MachineState {
            psi: [psid, psifd, psi1d, psiq, psi1q],
            efd,
        };
        let out = self.torque(&state.psi);
        MachineInit {
            state,
            delta,
            te: out.te,
            i_dq: out.i_dq,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> MachineElec {
        MachineElec {
            rated_mva: 778.0,
            rated_kv: 20.0,
            xd: 2.0,
            xq: 1.9,
            xd_transient: 0.3,
            xd_subtransient: 0.15,
            xq_subtransient: 0.15,
            xl: 0.12,
            td0_transient: 6.0,
            td0_subtransient: 0.0364,
            tq0_subtransient: 0.0356,
            ra: 0.002,
        }
    }

    #[test]
    fn open_circuit_field_gives_unit_voltage() {
        let m = MachineModel::new(&sample(), 50.0).unwrap();
        let init = m.initialize(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        assert!((init.state.efd - 1.0).abs() < 1e-12);
        // stepping with the q-axis voltage it produces keeps the stator current at zero
        let mut st = init.state;
        let v = Complex64::new(1.0, 0.0) * Complex64::from_polar(1.0, -init.delta);
        for _ in 0..1000 {
            let out = m.step(&mut st, v, v, 1.0, 1.0, 20e-6).unwrap();
            assert!(out.i_dq.norm() < 1e-9);
        }
        assert!(
            (v.im - 1.0).abs() < 1e-12,
            "open-circuit voltage lies on the q axis"
        );
    }

    #[test]
    fn rated_operation_is_an_equilibrium() {
        let m = MachineModel::new(&sample(), 50.0).unwrap();
        let v = Complex64::from_polar(1.0, 0.1);
        let s = Complex64::new(0.9, 0.3);
        let i = (s / v).conj();
        let init = m.initialize(v, i);
        assert!((init.te - (0.9 + m.ra * i.norm_sqr())).abs() < 1e-12);
        let d = m.derivative(
            &init.state,
            v * Complex64::from_polar(1.0, -init.delta),
            1.0,
        );
        assert!(d.iter().all(|x| x.abs() < 1e-9), "{d:?}");
        let mut st = init.state;
        let vr = v * Complex64::from_polar(1.0, -init.delta);
        for _ in 0..5000 {
            let out = m.step(&mut st, vr, vr, 1.0, 1.0, 20e-6).unwrap();
            assert!((out.te - init.te).abs() < 1e-6);
        }
    }

    #[test]
    fn inconsistent_reactances_are_rejected() {
        let mut p = sample();
        p.xd_transient = 0.1;
        assert!(p.validate().is_err());
        let mut p = sample();
        p.xl = 0.2;
        assert!(p.validate().is_err());
    }
}
