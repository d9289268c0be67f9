use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

use ssti::plant::filter::BlockingFilter;
use ssti::plant::machine::{MachineModel, MachineState};
use ssti::plant::ssdc::{Ssdc, SsdcParams};
use ssti::plant::vsc::{HvdcConverter, Vsc};
use ssti::scenario::{aramon, LeadLagCentering};
use ssti::signal::{measure_tone, Record};
use ssti::tuner::leadlag_from_phase;

const H: f64 = 20e-6;
const F0: f64 = 50.0;

// ---------------------------------------------------------------------------------------------
// Machine against an infinite bus behind an impedance, driven by an imposed rotor speed.

struct Bus {
    e: Complex64,
    z: Complex64,
}

impl Bus {
    fn v_dq(&self, m: &MachineModel, psi: &[f64; 5], delta: f64) -> Complex64 {
        self.e * Complex64::from_polar(1.0, -delta) + self.z * m.torque(psi).i_dq
    }
}

/// ΔTe/Δω at `f` from finite-difference Jacobians of the continuous model.
fn linearized_torque(
    m: &MachineModel,
    bus: &Bus,
    st: &MachineState,
    delta: f64,
    f: f64,
) -> Complex64 {
    let w0 = 2.0 * PI * F0;
    let rhs = |psi: &[f64; 5], d: f64, w: f64| -> [f64; 5] {
        let s = MachineState {
            psi: *psi,
            efd: st.efd,
        };
        m.derivative(&s, bus.v_dq(m, psi, d), w)
    };
    let eps = 1e-6;
    let mut a = DMatrix::<f64>::zeros(5, 5);
    let mut c = DVector::<f64>::zeros(5);
    for j in 0..5 {
        let (mut p, mut q) = (st.psi, st.psi);
        p[j] += eps;
        q[j] -= eps;
        let (fp, fq) = (rhs(&p, delta, 1.0), rhs(&q, delta, 1.0));
        for i in 0..5 {
            a[(i, j)] = (fp[i] - fq[i]) / (2.0 * eps);
        }
        c[j] = (m.torque(&p).te - m.torque(&q).te) / (2.0 * eps);
    }
    let col = |g: &dyn Fn(f64) -> [f64; 5]| {
        let (fp, fq) = (g(eps), g(-eps));
        DVector::from_fn(5, |i, _| (fp[i] - fq[i]) / (2.0 * eps))
    };
    let b_delta = col(&|e| rhs(&st.psi, delta + e, 1.0));
    let b_omega = col(&|e| rhs(&st.psi, delta, 1.0 + e));

    let s = Complex64::new(0.0, 2.0 * PI * f);
    let lhs = DMatrix::from_fn(
        5,
        5,
        |i, j| if i == j { s } else { Complex64::new(0.0, 0.0) } - a[(i, j)],
    );
    // Δδ = ω0 Δω / s
    let u = DVector::from_fn(5, |i, _| b_delta[i] * (w0 / s) + b_omega[i]);
    let x = lhs.lu().solve(&u).unwrap();
    (0..5).map(|i| x[i] * c[i]).sum()
}

#[test]
fn machine_torque_response_matches_its_linearization() {
    let scn = aramon();
    let m = MachineModel::new(&scn.machine, F0).unwrap();
    let bus = Bus {
        e: Complex64::new(1.0, 0.0),
        z: Complex64::new(0.01, 0.25),
    };
    let i0 = Complex64::from_polar(0.8, -10f64.to_radians());
    let init = m.initialize(bus.e + bus.z * i0, i0);
    let f = 14.07;
    let oracle = linearized_torque(&m, &bus, &init.state, init.delta, f);

    let (eps, ramp, dur) = (1e-4, 1.0, 8.0);
    let w0 = 2.0 * PI * F0;
    let speed = |t: f64| {
        let env = if t < ramp {
            0.5 * (1.0 - (PI * t / ramp).cos())
        } else {
            1.0
        };
        1.0 + eps * env * (2.0 * PI * f * t).sin()
    };
    let mut st = init.state;
    let mut delta = init.delta;
    let mut v = bus.v_dq(&m, &st.psi, delta);
    let dec = 10;
    let (mut te, mut dw) = (Vec::new(), Vec::new());
    let n = (dur / H).round() as usize;
    for k in 0..n {
        let (t0, t1) = (k as f64 * H, (k + 1) as f64 * H);
        let (wa, wb) = (speed(t0), speed(t1));
        if k % dec == 0 {
            te.push(m.torque(&st.psi).te);
            dw.push(wa - 1.0);
        }
        delta += 0.5 * H * w0 * (wa + wb - 2.0);
        let a1 = bus.e * Complex64::from_polar(1.0, -delta);
        let out = m.step_coupled(&mut st, v, a1, bus.z, wa, wb, H).unwrap();
        v = a1 + bus.z * out.i_dq;
    }
    let rec = |x| Record {
        t0: 0.0,
        dt: dec as f64 * H,
        x,
    };
    let measured =
        measure_tone(rec(&te), f, 6.0, 1.4).unwrap() / measure_tone(rec(&dw), f, 6.0, 1.4).unwrap();
    assert!(
        (measured - oracle).norm() < 0.02 * oracle.norm(),
        "{measured} vs {oracle}"
    );
}

// ---------------------------------------------------------------------------------------------
// Converter on an ideal voltage source.

fn converter(p_ref: f64) -> HvdcConverter {
    let mut c = aramon().hvdc.unwrap();
    c.p_ref = p_ref;
    c.q_ref = 0.0;
    c
}

/// Unity-gain crossover of the outer power loop, rad/s: PI in series with the closed inner
/// current loop and the measurement lag.
fn power_loop_crossover(c: &HvdcConverter) -> f64 {
    let mag = |w: f64| {
        let s = Complex64::new(0.0, w);
        ((c.power_kp + c.power_ki / s)
            / ((1.0 + s / c.current_bandwidth) * (1.0 + s / c.measurement_bandwidth)))
            .norm()
    };
    let (mut lo, mut hi) = (1e-3f64, 1e5f64);
    for _ in 0..200 {
        let mid: f64 = (lo * hi).sqrt();
        if mag(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[test]
fn power_step_settles_without_large_overshoot() {
    let mut params = converter(0.0);
    let v = Complex64::new(1.0, 0.0);
    let mut vsc = Vsc::new(&params, v, F0, H).unwrap();
    params.p_ref = 1.0;
    vsc.params.p_ref = 1.0;
    let wb = power_loop_crossover(&params);
    let t_settle = 5.0 / wb;
    let n = (3.0 * t_settle / H) as usize;
    let mut p = Vec::with_capacity(n);
    for _ in 0..n {
        p.push(vsc.step(v, 0.0).p_meas);
    }
    let peak = p.iter().cloned().fold(f64::MIN, f64::max);
    assert!(peak < 1.2, "overshoot: {peak}");
    let k = (t_settle / H) as usize;
    for (j, x) in p[k..].iter().enumerate() {
        assert!(
            (x - 1.0).abs() < 0.02,
            "P = {x} at {} s (settle bound {t_settle} s)",
            (k + j) as f64 * H
        );
    }
}

#[test]
fn pll_stays_locked_on_a_balanced_grid() {
    let v = Complex64::from_polar(1.0, 0.3);
    let mut vsc = Vsc::new(&converter(-0.9), v, F0, H).unwrap();
    for _ in 0..100_000 {
        let o = vsc.step(v, 0.0);
        assert!((o.omega_net - 1.0).abs() < 1e-4);
    }
}

#[test]
fn pll_follows_grid_frequency_as_its_transfer_function_predicts() {
    let c = converter(-0.9);
    let w0 = 2.0 * PI * F0;
    let (amp, f) = (1e-3, 14.0);
    let wm = 2.0 * PI * f;
    // grid angle for Δω_g = amp·sin(wm t)
    let theta = |t: f64| -amp * w0 / wm * (wm * t).cos();
    let mut vsc = Vsc::new(&c, Complex64::from_polar(1.0, theta(0.0)), F0, H).unwrap();
    let dec = 10;
    let (mut out, mut inp) = (Vec::new(), Vec::new());
    let n = (3.0 / H) as usize;
    for k in 1..=n {
        let t = k as f64 * H;
        let o = vsc.step(Complex64::from_polar(1.0, theta(t)), 0.0);
        if k % dec == 0 {
            out.push(o.omega_net - 1.0);
            inp.push(amp * (wm * t).sin());
        }
    }
    let rec = |x| Record {
        t0: dec as f64 * H,
        dt: dec as f64 * H,
        x,
    };
    let measured = measure_tone(rec(&out), f, 1.5, 1.0).unwrap()
        / measure_tone(rec(&inp), f, 1.5, 1.0).unwrap();
    let s = Complex64::new(0.0, wm);
    let oracle = w0 * (c.pll_kp * s + c.pll_ki) / (s * s + w0 * c.pll_kp * s + w0 * c.pll_ki);
    assert!(
        (measured - oracle).norm() < 0.05 * oracle.norm(),
        "{measured} vs {oracle}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn converter_current_never_exceeds_its_limit(
        p_ref in -1.5f64..1.5,
        q_ref in -1.0f64..1.0,
        sag in 0.3f64..1.0,
        jump in -0.5f64..0.5,
    ) {
        let mut c = converter(0.0);
        let v = Complex64::new(1.0, 0.0);
        let mut vsc = Vsc::new(&c, v, F0, H).unwrap();
        c.p_ref = p_ref;
        c.q_ref = q_ref;
        vsc.params = c.clone();
        let lim = c.current_limit;
        for k in 0..20_000 {
            // voltage sag and phase jump half-way through
            let v = if k < 10_000 { v } else { Complex64::from_polar(sag, jump) };
            let o = vsc.step(v, 0.0);
            prop_assert!(o.current.norm() <= lim * (1.0 + 1e-12), "{} at step {k}", o.current.norm());
        }
    }
}

// ---------------------------------------------------------------------------------------------
// Supplementary damping controller.

fn ssdc_params(t1: f64, t2: f64, gain: f64, limit: f64) -> SsdcParams {
    SsdcParams {
        center_frequency: 14.07,
        quality_factor: 50.0,
        t1,
        t2,
        gain,
        limit,
    }
}

fn drive(p: &SsdcParams, amp: f64, f: f64, secs: f64) -> (Vec<f64>, Vec<f64>, bool) {
    let mut s = Ssdc::new(p, H, 1.0).unwrap();
    let n = (secs / H) as usize;
    let (mut u, mut y, mut lim) = (Vec::with_capacity(n), Vec::with_capacity(n), false);
    for k in 1..=n {
        let x = amp * (2.0 * PI * f * k as f64 * H).sin();
        let (o, l) = s.step(1.0 + x);
        u.push(x);
        y.push(o);
        lim |= l;
    }
    (u, y, lim)
}

fn gain_and_phase(u: &[f64], y: &[f64], f: f64, secs: f64) -> Complex64 {
    let rec = |x| Record { t0: H, dt: H, x };
    measure_tone(rec(y), f, secs - 1.0, 1.0).unwrap()
        / measure_tone(rec(u), f, secs - 1.0, 1.0).unwrap()
}

#[test]
fn ssdc_rejects_a_constant_input() {
    let p = ssdc_params(0.01, 0.01, 5.0, 0.05);
    let (_, y, lim) = drive(&p, 0.0, 14.07, 1.0);
    assert!(!lim);
    assert!(y.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn ssdc_identity_lead_lag_passes_the_centre_frequency() {
    let t = 1.0 / (2.0 * PI * 14.07);
    let p = ssdc_params(t, t, 3.0, 0.05);
    let (u, y, lim) = drive(&p, 1e-4, 14.07, 6.0);
    assert!(!lim);
    let g = gain_and_phase(&u, &y, 14.07, 6.0);
    assert!((g.norm() / 3.0 - 1.0).abs() < 0.01, "{g}");
    assert!(g.arg().to_degrees().abs() < 1.0, "{}", g.arg().to_degrees());
}

#[test]
fn ssdc_thirty_degree_lead() {
    // geometric centering puts the maximum lead at the centre frequency
    let ll = leadlag_from_phase(30f64.to_radians(), 14.07, LeadLagCentering::Geometric).unwrap();
    let p = ssdc_params(ll.t1, ll.t2, 1.0, 0.05);
    let (u, y, _) = drive(&p, 1e-4, 14.07, 6.0);
    let g = gain_and_phase(&u, &y, 14.07, 6.0);
    assert!(
        (g.arg().to_degrees() - 30.0).abs() < 1.0,
        "{}",
        g.arg().to_degrees()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ssdc_is_linear_below_and_bounded_above_its_limit(
        amp in 1e-6f64..1e-3,
        f in 5.0f64..45.0,
        gain in 0.1f64..20.0,
        limit in 1e-4f64..0.1,
    ) {
        let p = ssdc_params(0.02, 0.008, gain, 1e3);
        let (_, y1, _) = drive(&p, amp, f, 0.3);
        let (_, y2, _) = drive(&p, 2.0 * amp, f, 0.3);
        let scale = y1.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for (a, b) in y1.iter().zip(&y2) {
            prop_assert!((b - 2.0 * a).abs() <= 1e-9 * scale);
        }
        let q = ssdc_params(0.02, 0.008, gain, limit);
        let (_, y, _) = drive(&q, 0.05, f, 0.3);
        prop_assert!(y.iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn blocking_filter_is_conjugate_symmetric(f in 0.1f64..99.0, ft in 1.0f64..99.0, q in 1.0f64..500.0) {
        let bf = BlockingFilter { tuned_frequency: ft, quality_factor: q, peak_impedance: 1.0 };
        let (a, b) = (bf.response(f), bf.response(-f));
        prop_assert!((a - b.conj()).norm() <= 1e-12 * a.norm().max(1e-300));
    }
}

#[test]
fn blocking_filter_reference_points() {
    let bf = BlockingFilter {
        tuned_frequency: 14.07,
        quality_factor: 100.0,
        peak_impedance: 1.0,
    };
    assert!((bf.response(14.07).norm() - 1.0).abs() < 1e-12);
    // |Z| = R/√(1 + Q²(f/ft − ft/f)²)
    let x: f64 = 100.0 * (50.0 / 14.07 - 14.07 / 50.0);
    let want = 1.0 / (1.0 + x * x).sqrt();
    assert!((bf.response(50.0).norm() - want).abs() < 1e-12 && want < 0.05);
    assert!(bf.response(1e-6).norm() < 1e-6);
}
