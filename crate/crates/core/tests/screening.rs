use num_complex::Complex64;
use ssti::scenario::aramon;
use ssti::screening::{screen, short_circuit_power, uif, UifInputs, LCC_THRESHOLD};
use ssti::Error;

#[test]
fn source_directly_at_the_bus() {
    let s = aramon();
    let ssc = short_circuit_power(&s, &s.network.grid.bus, true).unwrap();
    assert!((ssc - 1550.0).abs() < 1e-9, "{ssc}");
}

#[test]
fn source_behind_ten_kilometres_of_line() {
    let s = aramon();
    // hand Thevenin: grid impedance at X/R = 10 in series with 10 km of 0.027 + j0.27 Ω/km
    let base = 100.0;
    let zg_abs = base / 1550.0;
    let xg = zg_abs * 10.0 / 101f64.sqrt();
    let zg = Complex64::new(xg / 10.0, xg);
    let zl = Complex64::new(0.027, 0.27) * 10.0 / (400.0 * 400.0 / base);
    let want = base / (zg + zl).norm();
    let got = short_circuit_power(&s, "aramon_hv", true).unwrap();
    assert!((got / want - 1.0).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn excluding_the_only_source_is_a_topology_error() {
    let mut s = aramon();
    // islands the unit from the grid: its side is fed by the machine alone
    s.network.lines.retain(|l| l.name != "aramon_network");
    assert!(short_circuit_power(&s, "aramon_hv", false).is_ok());
    assert!(matches!(
        short_circuit_power(&s, "aramon_hv", true),
        Err(Error::Topology(_))
    ));
}

#[test]
fn bundled_case_flags_high_risk() {
    let r = screen(&aramon(), LCC_THRESHOLD).unwrap();
    assert!((r.result.value - 0.44).abs() < 0.01, "{}", r.result.value);
    assert!(r.result.high_risk);
    assert!(r.inputs.s_sc_minus_i < r.inputs.s_sc);
    let text = r.render();
    assert!(text.contains("0.440"));
    assert!(text.contains("line-commutated"));
}

#[test]
fn no_contribution_means_no_interaction() {
    let r = uif(&UifInputs {
        s_hvdc: 1000.0,
        s_gen: 778.0,
        s_sc: 3000.0,
        s_sc_minus_i: 3000.0,
        threshold: LCC_THRESHOLD,
    })
    .unwrap();
    assert_eq!(r.value, 0.0);
    assert!(!r.high_risk);
}
