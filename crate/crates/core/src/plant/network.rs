//! Positive-sequence network in the synchronously rotating frame, per unit on the system base.
//!
//! Node equations:   C (v̇/ω0 + j v) + G v + Σ a_b i_b = i_inj
//! Branch equations: x_b (i̇_b/ω0 + j i_b) + r_b i_b = a_bᵀ v − e_b
//!
//! The system is linear and time-invariant between short-circuit events, so the trapezoidal
//! transition matrices are computed once per event.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub name: String,
    pub from: usize,
    /// `None` connects to ground.
    pub to: Option<usize>,
    pub r: f64,
    pub x: f64,
}

/// Parallel conductance/susceptance between two nodes (blocking-filter resistor and capacitor).
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub a: usize,
    pub b: usize,
    pub g: f64,
    /// Susceptance at base frequency.
    pub bc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub node_names: Vec<String>,
    /// Shunt susceptance and conductance at each node.
    pub shunt_b: Vec<f64>,
    pub shunt_g: Vec<f64>,
    pub branches: Vec<Branch>,
    pub couplings: Vec<Coupling>,
    /// Index of the Thevenin source branch.
    pub source_branch: usize,
    pub source_emf: Complex64,
    pub grid_node: usize,
    /// Node where the machine stator connects (behind the filter when present).
    pub machine_node: usize,
    pub hvdc_node: Option<usize>,
    pub base_mva: f64,
    pub omega0: f64,
}

impl NetworkModel {
    pub fn from_scenario(scn: &Scenario, ssc_mva: f64) -> Result<Self> {
        let net = &scn.network;
        let base = net.base_mva;
        let mut node_names: Vec<String> = net.buses.iter().map(|b| b.name.clone()).collect();
        let mut shunt_b: Vec<f64> = net.buses.iter().map(|b| b.shunt_b).collect();
        let mut shunt_g: Vec<f64> = net.buses.iter().map(|b| b.shunt_g).collect();
        let idx = |name: &str| {
            net.buses
                .iter()
                .position(|b| b.name == name)
                .ok_or_else(|| Error::Topology(format!("unknown bus `{name}`")))
        };
        let mut branches = Vec::new();
        for l in &net.lines {
            let from = idx(&l.from)?;
            let kv = net.buses[from].kv;
            let zb = kv * kv / base;
            branches.push(Branch {
                name: l.name.clone(),
                from,
                to: Some(idx(&l.to)?),
                r: l.r_ohm_per_km * l.length_km / zb,
                x: l.x_ohm_per_km * l.length_km / zb,
            });
        }
        for t in &net.transformers {
            let k = base / t.rated_mva;
            branches.push(Branch {
                name: t.name.clone(),
                from: idx(&t.from)?,
                to: Some(idx(&t.to)?),
                r: t.r_pu * k,
                x: t.x_pu * k,
            });
        }
        let grid_node = idx(&net.grid.bus)?;
        let (rg, xg) = net.grid.impedance(ssc_mva, base);
        let source_branch = branches.len();
        branches.push(Branch {
            name: "grid".into(),
            from: grid_node,
            to: None,
            r: rg,
            x: xg,
        });

        let gen_bus = idx(&scn.generator.bus)?;
        let mut machine_node = gen_bus;
        let mut couplings = Vec::new();
        if let Some(f) = &scn.filter {
            // The tank sits between a new machine-side node and the generator bus.
            let m = node_names.len();
            node_names.push(format!("{}_machine", scn.generator.bus));
            shunt_b.push(shunt_b[gen_bus]);
            shunt_g.push(shunt_g[gen_bus]);
            let zk = base / scn.machine.rated_mva;
            let (r, xl, bc) = f.elements_at(scn.meta.base_frequency);
            branches.push(Branch {
                name: "filter_l".into(),
                from: m,
                to: Some(gen_bus),
                r: 0.0,
                x: xl * zk,
            });
            couplings.push(Coupling {
                a: m,
                b: gen_bus,
                g: 1.0 / (r * zk),
                bc: bc / zk,
            });
            machine_node = m;
        }
        let hvdc_node = match &scn.hvdc {
            Some(h) => Some(idx(&h.bus)?),
            None => None,
        };
        if hvdc_node == Some(machine_node) {
            return Err(Error::Topology(
                "the converter and the generator cannot share a bus".into(),
            ));
        }
        Ok(Self {
            node_names,
            shunt_b,
            shunt_g,
            branches,
            couplings,
            source_branch,
            source_emf: Complex64::new(net.grid.voltage, 0.0),
            grid_node,
            machine_node,
            hvdc_node,
            base_mva: base,
            omega0: 2.0 * std::f64::consts::PI * scn.meta.base_frequency,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_names.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn set_source_impedance(&mut self, r: f64, x: f64) {
        let b = &mut self.branches[self.source_branch];
        b.r = r;
        b.x = x;
    }

    fn laplacian(&self, pick: impl Fn(&Coupling) -> f64) -> DMatrix<f64> {
        let n = self.n_nodes();
        let mut m = DMatrix::zeros(n, n);
        for c in &self.couplings {
            let v = pick(c);
            m[(c.a, c.a)] += v;
            m[(c.b, c.b)] += v;
            m[(c.a, c.b)] -= v;
            m[(c.b, c.a)] -= v;
        }
        m
    }

    /// Nodal capacitance (as susceptance at base frequency) and conductance matrices.
    pub fn c_and_g(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut c = self.laplacian(|c| c.bc);
        let mut g = self.laplacian(|c| c.g);
        for k in 0..self.n_nodes() {
            c[(k, k)] += self.shunt_b[k];
            g[(k, k)] += self.shunt_g[k];
        }
        (c, g)
    }

    /// Nodal admittance matrix at base frequency; shunts optional.
    pub fn ybus(&self, with_shunts: bool) -> DMatrix<Complex64> {
        let n = self.n_nodes();
        let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for b in &self.branches {
            let yb = 1.0 / Complex64::new(b.r, b.x);
            y[(b.from, b.from)] += yb;
            if let Some(t) = b.to {
                y[(t, t)] += yb;
                y[(b.from, t)] -= yb;
                y[(t, b.from)] -= yb;
            }
        }
        for c in &self.couplings {
            let yc = Complex64::new(c.g, c.bc);
            y[(c.a, c.a)] += yc;
            y[(c.b, c.b)] += yc;
            y[(c.a, c.b)] -= yc;
            y[(c.b, c.a)] -= yc;
        }
        if with_shunts {
            for k in 0..n {
                y[(k, k)] += Complex64::new(self.shunt_g[k], self.shunt_b[k]);
            }
        }
        y
    }

    /// Steady branch currents for node voltages `v`.
    pub fn branch_currents(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.branches
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let vt = b.to.map_or(Complex64::new(0.0, 0.0), |t| v[t]);
                let e = if k == self.source_branch {
                    self.source_emf
                } else {
                    Complex64::new(0.0, 0.0)
                };
                (v[b.from] - vt - e) / Complex64::new(b.r, b.x)
            })
            .collect()
    }

    /// Continuous state matrices: ż = M z + N u with z = [v; i], u = [i_inj; e].
    fn continuous(&self) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
        let n = self.n_nodes();
        let nb = self.n_branches();
        let w0 = self.omega0;
        let (c, g) = self.c_and_g();
        let cinv = c
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Topology("nodal capacitance matrix is singular".into()))?;
        let mut a = DMatrix::<f64>::zeros(n, nb);
        for (k, b) in self.branches.iter().enumerate() {
            a[(b.from, k)] = 1.0;
            if let Some(t) = b.to {
                a[(t, k)] = -1.0;
            }
        }
        let ns = n + nb;
        let cx = |x: f64| Complex64::new(x, 0.0);
        let mut m = DMatrix::from_element(ns, ns, Complex64::new(0.0, 0.0));
        let mut nm = DMatrix::from_element(ns, ns, Complex64::new(0.0, 0.0));
        let cg = &cinv * &g;
        let ca = &cinv * &a;
        for r in 0..n {
            for col in 0..n {
                m[(r, col)] = cx(-w0 * cg[(r, col)]);
                nm[(r, col)] = cx(w0 * cinv[(r, col)]);
            }
            m[(r, r)] += Complex64::new(0.0, -w0);
            for k in 0..nb {
                m[(r, n + k)] = cx(-w0 * ca[(r, k)]);
            }
        }
        for (k, b) in self.branches.iter().enumerate() {
            if !(b.x > 0.0) {
                return Err(Error::Topology(format!(
                    "branch `{}` needs a positive reactance",
                    b.name
                )));
            }
            let r = n + k;
            let s = w0 / b.x;
            for node in 0..n {
                m[(r, node)] = cx(s * a[(node, k)]);
            }
            m[(r, r)] = Complex64::new(-s * b.r, -w0);
            nm[(r, n + k)] = cx(-s);
        }
        Ok((m, nm))
    }

    pub fn discretize(&self, h: f64) -> Result<DiscreteNetwork> {
        let (m, nm) = self.continuous()?;
        let ns = m.nrows();
        let eye = DMatrix::<Complex64>::identity(ns, ns);
        let half = Complex64::new(0.5 * h, 0.0);
        let lhs = &eye - &m * half;
        let lu = lhs.lu();
        let phi = lu
            .solve(&(&eye + &m * half))
            .ok_or_else(|| Error::Topology("network step matrix is singular".into()))?;
        let gamma = lu
            .solve(&(nm * Complex64::new(h, 0.0)))
            .ok_or_else(|| Error::Topology("network step matrix is singular".into()))?;
        Ok(DiscreteNetwork {
            phi,
            gamma,
            n_nodes: self.n_nodes(),
        })
    }
}

/// z_{n+1} = Φ z_n + Γ (u_n + u_{n+1}) / 2
#[derive(Debug, Clone)]
pub struct DiscreteNetwork {
    pub phi: DMatrix<Complex64>,
    pub gamma: DMatrix<Complex64>,
    pub n_nodes: usize,
}

impl DiscreteNetwork {
    pub fn step(&self, z: &mut Vec<Complex64>, u_avg: &[Complex64], scratch: &mut Vec<Complex64>) {
        let ns = z.len();
        scratch.clear();
        scratch.resize(ns, Complex64::new(0.0, 0.0));
        for r in 0..ns {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..ns {
                acc += self.phi[(r, c)] * z[c];
            }
            for (c, u) in u_avg.iter().enumerate() {
                if u.re != 0.0 || u.im != 0.0 {
                    acc += self.gamma[(r, c)] * u;
                }
            }
            scratch[r] = acc;
        }
        std::mem::swap(z, scratch);
    }
}
