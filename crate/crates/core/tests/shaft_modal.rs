use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use ssti::shaft::{build_state_matrices, modal_frequencies, modal_inertia_and_damping, ShaftModel};
use std::f64::consts::PI;

fn aramon() -> ShaftModel {
    ssti::scenario::aramon().shaft
}

/// Undamped natural frequencies straight from the SI chain, ω² = eig(J^{-½} K J^{-½}).
fn si_frequencies(s: &ShaftModel) -> Vec<f64> {
    let n = s.masses.len();
    let mut k = DMatrix::<f64>::zeros(n, n);
    for (i, &v) in s.mutual_stiffness.iter().enumerate() {
        k[(i, i)] += v;
        k[(i + 1, i + 1)] += v;
        k[(i, i + 1)] -= v;
        k[(i + 1, i)] -= v;
    }
    let m = DMatrix::from_fn(n, n, |r, c| k[(r, c)] / (s.masses[r] * s.masses[c]).sqrt());
    let mut f: Vec<f64> = SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .filter(|&&l| l > 1e-6)
        .map(|l| l.sqrt() / (2.0 * PI))
        .collect();
    f.sort_by(f64::total_cmp);
    f
}

#[test]
fn bundled_shaft_reproduces_tabulated_frequencies() {
    let m = modal_inertia_and_damping(&aramon()).unwrap();
    let table = [14.07, 22.092, 32.341, 34.933, 58.772];
    assert_eq!(m.modes.len(), 5);
    for (got, want) in m.frequencies().iter().zip(table) {
        assert!((got / want - 1.0).abs() < 0.02, "{got} vs {want}");
    }
}

#[test]
fn bundled_shaft_reproduces_tabulated_damping() {
    let m = modal_inertia_and_damping(&aramon()).unwrap();
    let table = [0.98, 4.74, 86.94, 7140.0, 3.72e7];
    for (got, want) in m.dampings().iter().zip(table) {
        assert!((got / want - 1.0).abs() < 0.2, "{got} vs {want}");
    }
}

#[test]
fn state_matrix_and_si_eigenproblem_agree() {
    let mut s = aramon();
    s.mutual_damping.iter_mut().for_each(|d| *d = 0.0);
    let a = modal_frequencies(&build_state_matrices(&s).unwrap()).unwrap();
    let si = si_frequencies(&s);
    assert_eq!(a.len(), si.len());
    for (x, y) in a.iter().zip(&si) {
        assert!(
            (x.frequency_hz - y).abs() < 1e-9 * y,
            "{} vs {y}",
            x.frequency_hz
        );
        assert!(x.sigma.abs() < 1e-9);
    }
}

#[test]
fn zero_mutual_damping_gives_zero_modal_damping() {
    let mut s = aramon();
    s.mutual_damping.iter_mut().for_each(|d| *d = 0.0);
    let m = modal_inertia_and_damping(&s).unwrap();
    for x in &m.modes {
        // D_m = −4σH_m: σ sits at round-off, H_m of the exciter mode is ~1e6 s
        assert!(x.sigma.abs() < 1e-10, "{}", x.sigma);
        assert!(
            x.mechanical_damping.abs()
                < 1e-12 * x.modal_inertia * 2.0 * std::f64::consts::PI * x.frequency_hz
        );
    }
}

#[test]
fn modal_csv_has_one_row_per_mode() {
    let m = modal_inertia_and_damping(&aramon()).unwrap();
    let mut buf = Vec::new();
    m.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("mode,f_hz,sigma,h_m,d_m,shape_1"));
}

fn chain() -> impl Strategy<Value = ShaftModel> {
    (2usize..7)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(1.0e2..3.0e4, n),
                prop::collection::vec(1.0e6..3.0e8, n - 1),
                prop::collection::vec(0.0..2.0e4, n - 1),
                1..=n,
            )
        })
        .prop_map(|(masses, k, d, g)| ShaftModel {
            masses,
            mutual_stiffness: k,
            mutual_damping: d,
            generator_index: g,
            base_power: 778.0,
            base_frequency: 50.0,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn connected_chain_has_n_minus_one_modes(s in chain()) {
        let a = modal_frequencies(&build_state_matrices(&s).unwrap()).unwrap();
        // heavily damped modes may become overdamped; the undamped chain always has N−1
        let mut u = s.clone();
        u.mutual_damping.iter_mut().for_each(|d| *d = 0.0);
        let b = modal_frequencies(&build_state_matrices(&u).unwrap()).unwrap();
        prop_assert_eq!(b.len(), s.masses.len() - 1);
        prop_assert!(a.len() <= b.len());
    }

    #[test]
    fn common_scaling_keeps_frequencies_and_stiffness_scales_by_root(s in chain(), c in 0.2f64..5.0) {
        let mut u = s.clone();
        u.mutual_damping.iter_mut().for_each(|d| *d = 0.0);
        let f0 = si_frequencies(&u);
        let base = modal_frequencies(&build_state_matrices(&u).unwrap()).unwrap();

        let mut both = u.clone();
        both.masses.iter_mut().for_each(|j| *j *= c);
        both.mutual_stiffness.iter_mut().for_each(|k| *k *= c);
        let fb = modal_frequencies(&build_state_matrices(&both).unwrap()).unwrap();

        let mut stiff = u.clone();
        stiff.mutual_stiffness.iter_mut().for_each(|k| *k *= c);
        let fk = modal_frequencies(&build_state_matrices(&stiff).unwrap()).unwrap();

        for i in 0..f0.len() {
            prop_assert!((fb[i].frequency_hz / base[i].frequency_hz - 1.0).abs() < 1e-8);
            prop_assert!((fk[i].frequency_hz / (base[i].frequency_hz * c.sqrt()) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn passive_shaft_has_non_negative_damping_and_orthogonal_shapes(s in chain()) {
        // pairing may legitimately refuse chains with near-coincident modes
        if let Ok(m) = modal_inertia_and_damping(&s) {
            let h = s.h_pu();
            for x in &m.modes {
                prop_assert!(x.mechanical_damping >= -1e-9 * x.modal_inertia, "{}", x.mechanical_damping);
            }
            for i in 0..m.modes.len() {
                for j in 0..i {
                    let (a, b) = (&m.modes[i], &m.modes[j]);
                    let dot: f64 = (0..h.len()).map(|k| h[k] * a.shape[k] * b.shape[k]).sum();
                    prop_assert!(dot.abs() <= 1e-8 * (a.modal_inertia * b.modal_inertia).sqrt(), "{dot}");
                }
            }
        }
    }
}
