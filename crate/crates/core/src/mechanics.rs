//! Torsional chain in per-unit deviation form, advanced with the trapezoidal rule:
//!
//!   2H_i dΔω_i/dt = ΔT_i − Σ K_pu (Δθ_i − Δθ_j) − Σ D_pu (Δω_i − Δω_j)
//!   dΔθ_i/dt      = ω0 Δω_i
//!
//! Deviations are taken from the static equilibrium, so the pre-twist carrying the scheduled
//! torques never appears explicitly.

use nalgebra::{DMatrix, DVector};

use crate::scenario::ShaftRepresentation;
use crate::shaft::{chain_matrix, ShaftModel};

#[derive(Debug, Clone)]
pub struct MechanicalChain {
    pub h: Vec<f64>,
    pub k: Vec<f64>,
    pub d: Vec<f64>,
    /// 0-based generator mass.
    pub gen: usize,
    pub omega0: f64,
    phi: DMatrix<f64>,
    gamma: DMatrix<f64>,
}

impl MechanicalChain {
    pub fn new(shaft: &ShaftModel, repr: ShaftRepresentation, step: f64) -> Self {
        let omega0 = shaft.omega_m0();
        let (h, k, d, gen) = match repr {
            ShaftRepresentation::MultiMass => {
                (shaft.h_pu(), shaft.k_pu(), shaft.d_pu(), shaft.gen())
            }
            ShaftRepresentation::SingleMass => (vec![shaft.h_total()], vec![], vec![], 0),
        };
        Self::from_per_unit(h, k, d, gen, omega0, step)
    }

    pub fn from_per_unit(
        h: Vec<f64>,
        k: Vec<f64>,
        d: Vec<f64>,
        gen: usize,
        omega0: f64,
        step: f64,
    ) -> Self {
        let n = h.len();
        let km = if n > 1 {
            chain_matrix(&k)
        } else {
            DMatrix::zeros(1, 1)
        };
        let dm = if n > 1 {
            chain_matrix(&d)
        } else {
            DMatrix::zeros(1, 1)
        };
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        let mut b = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            let s = 1.0 / (2.0 * h[i]);
            for j in 0..n {
                a[(i, j)] = -s * dm[(i, j)];
                a[(i, n + j)] = -s * km[(i, j)];
            }
            a[(n + i, i)] = omega0;
            b[(i, i)] = s;
        }
        let eye = DMatrix::<f64>::identity(2 * n, 2 * n);
        let lu = (&eye - &a * (0.5 * step)).lu();
        let phi = lu
            .solve(&(&eye + &a * (0.5 * step)))
            .expect("trapezoidal shaft matrix is regular");
        let gamma = lu
            .solve(&(b * step))
            .expect("trapezoidal shaft matrix is regular");
        Self {
            h,
            k,
            d,
            gen,
            omega0,
            phi,
            gamma,
        }
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// x = [Δω; Δθ]; `torque` is the step-averaged torque deviation applied at each mass.
    pub fn step(&self, x: &mut DVector<f64>, torque: &DVector<f64>) {
        let next = &self.phi * &*x + &self.gamma * torque;
        x.copy_from(&next);
    }

    /// Σ H_i Δω_i² + ½ Σ (K_pu/ω0)(Δθ_i − Δθ_{i+1})², pu·s.
    pub fn oscillation_energy(&self, x: &DVector<f64>) -> f64 {
        let n = self.len();
        let kinetic: f64 = (0..n).map(|i| self.h[i] * x[i] * x[i]).sum();
        let potential: f64 = self
            .k
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let tw = x[n + i] - x[n + i + 1];
                0.5 * k / self.omega0 * tw * tw
            })
            .sum();
        kinetic + potential
    }
}
