use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use ssti::engine::{Engine, RunOptions};
use ssti::mechanics::MechanicalChain;
use ssti::scenario::{aramon, Scenario, ShaftRepresentation};
use ssti::signal::{growth_rate, Record};
use ssti::trace::SimTrace;
use ssti::Error;

fn run(scn: &Scenario, duration: f64) -> SimTrace {
    let mut e = Engine::new(scn).unwrap();
    let mut o = RunOptions::from_scenario(scn);
    o.duration = duration;
    e.run(&o)
}

/// Bus injections recomputed from a hand-built admittance matrix of the bundled network.
#[test]
fn bundled_power_flow_satisfies_an_independent_network_model() {
    let s = aramon();
    let e = Engine::new(&s).unwrap();
    let pf = e.power_flow().unwrap();
    let v = &pf.voltages;
    assert_eq!(v.len(), 4);
    let base = 100.0;
    // aramon_lv, aramon_hv, network, hvdc
    let mut y = DMatrix::<Complex64>::zeros(4, 4);
    let mut add = |a: usize, b: usize, z: Complex64| {
        let g = z.inv();
        y[(a, a)] += g;
        y[(b, b)] += g;
        y[(a, b)] -= g;
        y[(b, a)] -= g;
    };
    let zb = 400.0 * 400.0 / base;
    add(1, 2, Complex64::new(0.027, 0.27) * 10.0 / zb);
    add(2, 3, Complex64::new(0.027, 0.27) * 30.0 / zb);
    add(0, 1, Complex64::new(0.0, 0.13 * base / 778.0));
    for (k, b) in s.network.buses.iter().enumerate() {
        y[(k, k)] += Complex64::new(b.shunt_g, b.shunt_b);
    }
    let xg = base / 1550.0 * 10.0 / 101f64.sqrt();
    let ys = Complex64::new(xg / 10.0, xg).inv();
    y[(2, 2)] += ys;
    let vv = DVector::from_column_slice(v);
    let mut i = &y * &vv;
    i[2] -= ys * Complex64::new(1.0, 0.0);
    let sk: Vec<Complex64> = (0..4).map(|k| v[k] * i[k].conj()).collect();
    let tol = 1e-8;
    assert!((sk[0].re - 7.0).abs() < tol, "{}", sk[0]);
    assert!((v[0].norm() - 1.0).abs() < tol);
    assert!(i[1].norm() < tol && i[2].norm() < tol, "{} {}", i[1], i[2]);
    assert!(
        (sk[3] - Complex64::new(-9.0, 0.0)).norm() < tol,
        "{}",
        sk[3]
    );
    assert!(pf.mismatch < tol);
}

#[test]
fn no_load_start_stays_at_rest() {
    let mut s = aramon().pre_event();
    s.generator.p_mw = 0.0;
    s.hvdc.as_mut().unwrap().p_ref = 0.0;
    let tr = run(&s, 0.5);
    assert!(tr.divergence.is_none());
    for ch in ["te", "p_pcc", "p_ssdc"] {
        let x = tr.require(ch).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-4), "{ch}");
    }
    assert!(tr.require("dw_gen").unwrap().iter().all(|v| v.abs() < 1e-8));
}

#[test]
fn weak_grid_that_cannot_carry_the_schedule_fails_to_initialize() {
    let mut s = aramon();
    s.network.grid.ssc_mva = 40.0;
    s.network.grid.events.clear();
    assert!(matches!(Engine::new(&s), Err(Error::PowerFlow { .. })));
}

#[test]
fn undisturbed_case_holds_its_equilibrium() {
    let tr = run(&aramon().pre_event(), 2.0);
    assert!(tr.divergence.is_none());
    for (name, x) in tr.names.iter().zip(&tr.data) {
        let (lo, hi) = x
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi - lo < 1e-5, "{name}: {lo} .. {hi}");
    }
}

#[test]
fn repeated_runs_are_bit_identical() {
    let s = aramon();
    let (a, b) = (run(&s, 3.0), run(&s, 3.0));
    assert_eq!(a.time, b.time);
    assert_eq!(a.data, b.data);
}

fn growth_after_event(tr: &SimTrace) -> f64 {
    let dw = tr.require("dw_gen").unwrap();
    growth_rate(
        Record {
            t0: tr.time[0],
            dt: tr.sample_dt,
            x: dw,
        },
        14.07,
        2.5,
        f64::INFINITY,
    )
    .unwrap()
}

#[test]
fn short_circuit_step_destabilizes_the_first_torsional_mode() {
    let s = aramon();
    let multi = run(&s, 10.0);
    assert!(multi.divergence.is_none());
    assert!(growth_after_event(&multi) > 0.0);

    let mut single = s.clone();
    single.simulation.shaft = ShaftRepresentation::SingleMass;
    assert!(growth_after_event(&run(&single, 10.0)) < 0.0);
}

#[test]
fn halving_the_step_barely_moves_the_speed_trace() {
    let mut s = aramon();
    s.simulation.shaft = ShaftRepresentation::SingleMass;
    let coarse = run(&s, 4.0);
    let mut f = s.clone();
    f.simulation.dt *= 0.5;
    f.simulation.decimation *= 2;
    let fine = run(&f, 4.0);
    let (a, b) = (
        coarse.require("dw_gen").unwrap(),
        fine.require("dw_gen").unwrap(),
    );
    assert_eq!(a.len(), b.len());
    let rms = |x: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = x.collect();
        (v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64).sqrt()
    };
    let diff = rms(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let size = rms(&mut a.iter().copied());
    assert!(size > 0.0 && diff < 0.01 * size, "{diff} vs {size}");
}

#[test]
fn lossless_shaft_conserves_its_oscillation_energy() {
    let mut shaft = aramon().shaft;
    shaft.mutual_damping.iter_mut().for_each(|d| *d = 0.0);
    let ch = MechanicalChain::new(&shaft, ShaftRepresentation::MultiMass, 20e-6);
    let n = ch.len();
    let mut x = DVector::zeros(2 * n);
    // speed kick on the HP turbine and a twist across the generator–exciter coupling
    x[0] = 1e-3;
    x[2 * n - 1] = 2e-4;
    let zero = DVector::zeros(n);
    let e0 = ch.oscillation_energy(&x);
    let mut worst: f64 = 0.0;
    for _ in 0..500_000 {
        ch.step(&mut x, &zero);
        worst = worst.max((ch.oscillation_energy(&x) / e0 - 1.0).abs());
    }
    assert!(worst < 1e-3, "{worst}");
}
