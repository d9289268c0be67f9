//! Lumped multi-mass torsional shaft: state-space assembly and modal analysis.
//!
//! Per-unit convention (2-pole machine, rated mechanical speed ω_m0 = 2π·f_base):
//! `H_i = J_i ω_m0² / (2 S_base)`, `K_pu = K ω_m0 / S_base`, `D_pu = D ω_m0² / S_base`.
//! With this choice the per-unit modal problem `½H⁻¹K_pu` has eigenvalues λ with
//! `ω² = ω_m0 λ`, identical to the SI problem `J⁻¹K`.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::trace::fmt_num;

/// Modes whose angular frequency is below this threshold are treated as rigid-body motion.
pub const RIGID_BODY_THRESHOLD: f64 = 0.01;

const SCHUR_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShaftModel {
    /// Moments of inertia J_i, kg·m².
    pub masses: Vec<f64>,
    /// Mutual stiffness K_{i,i+1}, N·m/rad.
    pub mutual_stiffness: Vec<f64>,
    /// Mutual damping D_{i,i+1}, N·m·s/rad.
    pub mutual_damping: Vec<f64>,
    /// 1-based index of the generator rotor.
    pub generator_index: usize,
    /// MVA.
    pub base_power: f64,
    /// Hz.
    pub base_frequency: f64,
}

impl ShaftModel {
    pub fn validate(&self) -> Result<()> {
        let n = self.masses.len();
        let bad = |m: String| Err(Error::InvalidModel(m));
        if n < 2 {
            return bad(format!("shaft needs at least 2 masses, got {n}"));
        }
        if self.mutual_stiffness.len() != n - 1 {
            return bad(format!(
                "shaft.mutual_stiffness: expected {} values, got {}",
                n - 1,
                self.mutual_stiffness.len()
            ));
        }
        if self.mutual_damping.len() != n - 1 {
            return bad(format!(
                "shaft.mutual_damping: expected {} values, got {}",
                n - 1,
                self.mutual_damping.len()
            ));
        }
        if let Some(i) = self
            .masses
            .iter()
            .position(|&j| !(j > 0.0 && j.is_finite()))
        {
            return bad(format!("shaft.masses[{i}] must be positive and finite"));
        }
        if let Some(i) = self
            .mutual_stiffness
            .iter()
            .position(|&k| !(k > 0.0 && k.is_finite()))
        {
            return bad(format!(
                "shaft.mutual_stiffness[{i}] must be positive and finite"
            ));
        }
        if let Some(i) = self
            .mutual_damping
            .iter()
            .position(|&d| !(d >= 0.0 && d.is_finite()))
        {
            return bad(format!(
                "shaft.mutual_damping[{i}] must be non-negative and finite"
            ));
        }
        if self.generator_index < 1 || self.generator_index > n {
            return bad(format!(
                "shaft.generator_index must lie in 1..={n}, got {}",
                self.generator_index
            ));
        }
        if !(self.base_power > 0.0) {
            return bad("shaft.base_power must be positive".into());
        }
        if !(self.base_frequency > 0.0) {
            return bad("shaft.base_frequency must be positive".into());
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// 0-based generator position.
    pub fn gen(&self) -> usize {
        self.generator_index - 1
    }

    /// Rated mechanical speed, rad/s.
    pub fn omega_m0(&self) -> f64 {
        2.0 * PI * self.base_frequency
    }

    fn s_base_w(&self) -> f64 {
        self.base_power * 1e6
    }

    /// Per-unit inertia constants H_i, seconds.
    pub fn h_pu(&self) -> Vec<f64> {
        let w = self.omega_m0();
        self.masses
            .iter()
            .map(|j| j * w * w / (2.0 * self.s_base_w()))
            .collect()
    }

    /// Per-unit stiffness, pu torque per electrical radian.
    pub fn k_pu(&self) -> Vec<f64> {
        let w = self.omega_m0();
        self.mutual_stiffness
            .iter()
            .map(|k| k * w / self.s_base_w())
            .collect()
    }

    /// Per-unit mutual damping, pu torque per pu speed.
    pub fn d_pu(&self) -> Vec<f64> {
        let w = self.omega_m0();
        self.mutual_damping
            .iter()
            .map(|d| d * w * w / self.s_base_w())
            .collect()
    }

    /// Total inertia constant of the lumped single-mass equivalent.
    pub fn h_total(&self) -> f64 {
        self.h_pu().iter().sum()
    }
}

/// Tridiagonal coupling matrix of a chain with element values `c` between neighbours.
pub fn chain_matrix(c: &[f64]) -> DMatrix<f64> {
    let n = c.len() + 1;
    let mut m = DMatrix::zeros(n, n);
    for (i, &v) in c.iter().enumerate() {
        m[(i, i)] += v;
        m[(i + 1, i + 1)] += v;
        m[(i, i + 1)] -= v;
        m[(i + 1, i)] -= v;
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrices {
    /// 2N×2N, state ordered as [δ̇; δ].
    pub a: DMatrix<f64>,
    /// 2N×N.
    pub b: DMatrix<f64>,
}

pub fn build_state_matrices(shaft: &ShaftModel) -> Result<StateMatrices> {
    if let Some(i) = shaft.masses.iter().position(|&j| j == 0.0) {
        return Err(Error::InvalidModel(format!(
            "shaft.masses[{i}] is zero: inertia matrix is singular"
        )));
    }
    shaft.validate()?;
    let n = shaft.len();
    let k = chain_matrix(&shaft.mutual_stiffness);
    let d = chain_matrix(&shaft.mutual_damping);
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    let mut b = DMatrix::zeros(2 * n, n);
    for i in 0..n {
        let inv_j = 1.0 / shaft.masses[i];
        for c in 0..n {
            a[(i, c)] = -inv_j * d[(i, c)];
            a[(i, n + c)] = -inv_j * k[(i, c)];
        }
        a[(n + i, i)] = 1.0;
        b[(i, i)] = -inv_j;
    }
    Ok(StateMatrices { a, b })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModalFrequency {
    pub frequency_hz: f64,
    /// Real part of the eigenvalue, 1/s.
    pub sigma: f64,
}

/// Oscillatory eigenvalues of A (upper half-plane member of each pair), rigid-body modes dropped.
pub fn modal_frequencies(sm: &StateMatrices) -> Result<Vec<ModalFrequency>> {
    if sm.a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidModel(
            "state matrix A has non-finite entries".into(),
        ));
    }
    let schur = Schur::try_new(sm.a.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or(
        Error::EigenNonConvergence {
            max_iterations: SCHUR_MAX_ITER,
            context: "Schur decomposition of the shaft state matrix",
        },
    )?;
    let mut out: Vec<ModalFrequency> = schur
        .complex_eigenvalues()
        .iter()
        .filter(|l| l.im >= RIGID_BODY_THRESHOLD)
        .map(|l| ModalFrequency {
            frequency_hz: l.im / (2.0 * PI),
            sigma: l.re,
        })
        .collect();
    out.sort_by(|x, y| x.frequency_hz.total_cmp(&y.frequency_hz));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TorsionalMode {
    pub frequency_hz: f64,
    pub sigma: f64,
    /// Modal inertia H_m, s (per-unit).
    pub modal_inertia: f64,
    /// Mechanical damping D_m = −4σH_m, pu.
    pub mechanical_damping: f64,
    /// Mode shape, normalized to 1 at the generator.
    pub shape: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalResult {
    pub modes: Vec<TorsionalMode>,
}

impl ModalResult {
    pub fn frequencies(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.frequency_hz).collect()
    }

    pub fn dampings(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.mechanical_damping).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let n = self.modes.first().map_or(0, |m| m.shape.len());
        let mut head = String::from("mode,f_hz,sigma,h_m,d_m");
        for i in 1..=n {
            head.push_str(&format!(",shape_{i}"));
        }
        writeln!(w, "{head}")?;
        for (i, m) in self.modes.iter().enumerate() {
            let mut row = format!(
                "{},{},{},{},{}",
                i + 1,
                fmt_num(m.frequency_hz),
                fmt_num(m.sigma),
                fmt_num(m.modal_inertia),
                fmt_num(m.mechanical_damping)
            );
            for s in &m.shape {
                row.push(',');
                row.push_str(&fmt_num(*s));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

pub fn modal_inertia_and_damping(shaft: &ShaftModel) -> Result<ModalResult> {
    let sm = build_state_matrices(shaft)?;
    let damped = modal_frequencies(&sm)?;

    let n = shaft.len();
    let h = shaft.h_pu();
    let k = chain_matrix(&shaft.k_pu());
    let w0 = shaft.omega_m0();
    let g = shaft.gen();

    // ½ H^{-½} K H^{-½} is symmetric and similar to ½ H⁻¹ K.
    let hs: Vec<f64> = h.iter().map(|v| v.sqrt()).collect();
    let s = DMatrix::from_fn(n, n, |r, c| 0.5 * k[(r, c)] / (hs[r] * hs[c]));
    let eig = SymmetricEigen::try_new(s, f64::EPSILON, SCHUR_MAX_ITER).ok_or(
        Error::EigenNonConvergence {
            max_iterations: SCHUR_MAX_ITER,
            context: "symmetric eigen-solve of the per-unit modal matrix",
        },
    )?;

    let mut undamped: Vec<(f64, DVector<f64>)> = (0..n)
        .filter_map(|i| {
            let lam = eig.eigenvalues[i].max(0.0);
            let w = (w0 * lam).sqrt();
            (w >= RIGID_BODY_THRESHOLD).then(|| {
                let y = eig.eigenvectors.column(i);
                let q = DVector::from_fn(n, |r, _| y[r] / hs[r]);
                (w, q)
            })
        })
        .collect();
    undamped.sort_by(|x, y| x.0.total_cmp(&y.0));

    if undamped.len() != damped.len() {
        return Err(Error::Pairing(format!(
            "{} undamped modes but {} oscillatory eigenvalues of A",
            undamped.len(),
            damped.len()
        )));
    }

    let damped_w: Vec<f64> = damped.iter().map(|m| 2.0 * PI * m.frequency_hz).collect();
    let mut modes = Vec::with_capacity(undamped.len());
    let mut used = vec![false; damped.len()];
    for (mode, (w, q)) in undamped.into_iter().enumerate() {
        let (best, dist) = nearest(&damped_w, w);
        let runner_up = damped_w
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != best)
            .map(|(_, x)| (x - w).abs())
            .fold(f64::INFINITY, f64::min);
        let spacing = runner_up - dist;
        if used[best] || (runner_up.is_finite() && dist > 0.01 * spacing) {
            return Err(Error::Pairing(format!(
                "mode {} at {:.4} Hz cannot be paired unambiguously with an eigenvalue of A",
                mode + 1,
                w / (2.0 * PI)
            )));
        }
        used[best] = true;

        let qg = q[g];
        if qg.abs() < 1e-12 * q.amax() {
            return Err(Error::Normalization { mode: mode + 1 });
        }
        let shape: Vec<f64> = q.iter().map(|v| v / qg).collect();
        let hm: f64 = shape.iter().zip(&h).map(|(x, hi)| hi * x * x).sum();
        let sigma = damped[best].sigma;
        modes.push(TorsionalMode {
            frequency_hz: damped[best].frequency_hz,
            sigma,
            modal_inertia: hm,
            mechanical_damping: -4.0 * sigma * hm,
            shape,
        });
    }
    modes.sort_by(|x, y| x.frequency_hz.total_cmp(&y.frequency_hz));
    Ok(ModalResult { modes })
}

fn nearest(xs: &[f64], x: f64) -> (usize, f64) {
    xs.iter()
        .enumerate()
        .map(|(i, v)| (i, (v - x).abs()))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_mass(j: [f64; 2], k: f64, d: f64, gen: usize) -> ShaftModel {
        ShaftModel {
            masses: j.to_vec(),
            mutual_stiffness: vec![k],
            mutual_damping: vec![d],
            generator_index: gen,
            base_power: 1e-6,
            base_frequency: 1.0 / (2.0 * PI),
        }
    }

    #[test]
    fn symmetric_two_mass_structure() {
        let sm = build_state_matrices(&two_mass([1.0, 1.0], 1.0, 0.0, 2)).unwrap();
        assert_eq!(sm.a.shape(), (4, 4));
        assert_eq!(sm.a[(0, 0)], 0.0);
        assert_eq!(sm.a[(0, 2)], -1.0);
        assert_eq!(sm.a[(0, 3)], 1.0);
        assert_eq!(sm.a[(1, 2)], 1.0);
        assert_eq!(sm.a[(2, 0)], 1.0);
        assert_eq!(sm.a[(3, 3)], 0.0);
        assert_eq!(sm.b[(0, 0)], -1.0);
        let f = modal_frequencies(&sm).unwrap();
        assert_eq!(f.len(), 1);
        assert_relative_eq!(f[0].frequency_hz, 2f64.sqrt() / (2.0 * PI), epsilon = 1e-12);
        assert!(f[0].sigma.abs() < 1e-12);
    }

    #[test]
    fn asymmetric_two_mass_frequency() {
        let sm = build_state_matrices(&two_mass([2.0, 1.0], 2.0, 0.0, 1)).unwrap();
        let f = modal_frequencies(&sm).unwrap();
        assert_relative_eq!(2.0 * PI * f[0].frequency_hz, 3f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn damped_two_mass_decay() {
        let sm = build_state_matrices(&two_mass([1.0, 1.0], 1.0, 0.1, 1)).unwrap();
        let f = modal_frequencies(&sm).unwrap();
        assert_relative_eq!(f[0].sigma, -0.1, epsilon = 1e-12);
    }

    #[test]
    fn two_mass_shape_and_modal_inertia() {
        let shaft = two_mass([1.0, 1.0], 1.0, 0.0, 2);
        let r = modal_inertia_and_damping(&shaft).unwrap();
        assert_eq!(r.modes.len(), 1);
        assert_relative_eq!(r.modes[0].shape[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(r.modes[0].shape[1], 1.0, epsilon = 1e-12);
        let h = shaft.h_pu();
        assert_relative_eq!(r.modes[0].modal_inertia, 2.0 * h[0], epsilon = 1e-12);
        assert!(r.modes[0].mechanical_damping.abs() < 1e-12);
    }

    #[test]
    fn zero_inertia_is_rejected() {
        let err = build_state_matrices(&two_mass([0.0, 1.0], 1.0, 0.0, 1)).unwrap_err();
        assert!(matches!(err, Error::InvalidModel(_)));
    }

    #[test]
    fn bad_generator_index_is_rejected() {
        assert!(two_mass([1.0, 1.0], 1.0, 0.0, 3).validate().is_err());
        assert!(two_mass([1.0, 1.0], 1.0, 0.0, 0).validate().is_err());
    }

    #[test]
    fn node_of_mode_at_generator_fails_normalization() {
        // Symmetric three-mass chain: the antisymmetric mode has a node at the middle mass.
        let shaft = ShaftModel {
            masses: vec![1.0, 1.0, 1.0],
            mutual_stiffness: vec![1.0, 1.0],
            mutual_damping: vec![0.0, 0.0],
            generator_index: 2,
            base_power: 1e-6,
            base_frequency: 1.0 / (2.0 * PI),
        };
        let err = modal_inertia_and_damping(&shaft).unwrap_err();
        assert!(matches!(err, Error::Normalization { mode: 1 }), "{err}");
    }

    #[test]
    fn per_unit_convention_matches_si_problem() {
        let shaft = ShaftModel {
            masses: vec![1293.0, 4321.0],
            mutual_stiffness: vec![1.134e8],
            mutual_damping: vec![0.0],
            generator_index: 2,
            base_power: 778.0,
            base_frequency: 50.0,
        };
        let h = shaft.h_pu();
        let k = shaft.k_pu()[0];
        let w2_pu = shaft.omega_m0() * 0.5 * k * (1.0 / h[0] + 1.0 / h[1]);
        let w2_si = 1.134e8 * (1.0 / 1293.0 + 1.0 / 4321.0);
        assert_relative_eq!(w2_pu, w2_si, max_relative = 1e-12);
    }
}
