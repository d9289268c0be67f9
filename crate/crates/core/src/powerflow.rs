//! Newton–Raphson power flow on the study network: Thevenin source as slack, generator as a
//! P|V| bus, converter as a PQ bus, every other node a zero-injection node.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::plant::network::NetworkModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dispatch {
    /// Generator active power, system pu.
    pub machine_p: f64,
    /// Generator terminal voltage magnitude, pu.
    pub machine_v: f64,
    /// Converter injection, system pu.
    pub hvdc_s: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub voltages: Vec<Complex64>,
    /// Complex power injected by the generator, system pu.
    pub machine_s: Complex64,
    pub hvdc_s: Complex64,
    pub iterations: usize,
    /// Largest absolute residual, pu.
    pub mismatch: f64,
}

const MAX_ITER: usize = 40;
const TOL: f64 = 1e-11;

/// Net current each node must inject for voltages `v`.
fn injections(y: &DMatrix<Complex64>, net: &NetworkModel, v: &[Complex64]) -> Vec<Complex64> {
    let n = v.len();
    let src = &net.branches[net.source_branch];
    let ys = 1.0 / Complex64::new(src.r, src.x);
    (0..n)
        .map(|k| {
            let mut i: Complex64 = (0..n).map(|j| y[(k, j)] * v[j]).sum();
            if k == net.grid_node {
                i -= ys * net.source_emf;
            }
            i
        })
        .collect()
}

fn residual(
    y: &DMatrix<Complex64>,
    net: &NetworkModel,
    d: &Dispatch,
    x: &DVector<f64>,
) -> DVector<f64> {
    let n = net.n_nodes();
    let v: Vec<Complex64> = (0..n)
        .map(|k| Complex64::new(x[2 * k], x[2 * k + 1]))
        .collect();
    let inj = injections(y, net, &v);
    let mut r = DVector::zeros(2 * n);
    for k in 0..n {
        let s = v[k] * inj[k].conj();
        if k == net.machine_node {
            r[2 * k] = s.re - d.machine_p;
            r[2 * k + 1] = v[k].norm_sqr() - d.machine_v * d.machine_v;
        } else if Some(k) == net.hvdc_node {
            r[2 * k] = s.re - d.hvdc_s.re;
            r[2 * k + 1] = s.im - d.hvdc_s.im;
        } else {
            r[2 * k] = inj[k].re;
            r[2 * k + 1] = inj[k].im;
        }
    }
    r
}

pub fn solve(net: &NetworkModel, d: &Dispatch) -> Result<PowerFlowSolution> {
    let n = net.n_nodes();
    let y = net.ybus(true);
    let mut x = DVector::from_fn(2 * n, |i, _| if i % 2 == 0 { 1.0 } else { 0.0 });
    let worst = |r: &DVector<f64>| {
        let (i, m) =
            r.iter().enumerate().fold(
                (0, 0.0f64),
                |a, (i, v)| if v.abs() > a.1 { (i, v.abs()) } else { a },
            );
        (i / 2, m)
    };
    let mut r = residual(&y, net, d, &x);
    for it in 0..MAX_ITER {
        let (_, m) = worst(&r);
        if m < TOL {
            let v: Vec<Complex64> = (0..n)
                .map(|k| Complex64::new(x[2 * k], x[2 * k + 1]))
                .collect();
            if let Some(k) = v
                .iter()
                .position(|vk| !(vk.norm() > 0.5 && vk.norm() < 1.5))
            {
                return Err(Error::PowerFlow {
                    iterations: it,
                    mismatch: m,
                    bus: format!(
                        "{} (implausible voltage {:.3} pu)",
                        net.node_names[k],
                        v[k].norm()
                    ),
                });
            }
            let inj = injections(&y, net, &v);
            let machine_s = v[net.machine_node] * inj[net.machine_node].conj();
            let hvdc_s = net
                .hvdc_node
                .map_or(Complex64::new(0.0, 0.0), |k| v[k] * inj[k].conj());
            return Ok(PowerFlowSolution {
                voltages: v,
                machine_s,
                hvdc_s,
                iterations: it,
                mismatch: m,
            });
        }
        let mut jac = DMatrix::zeros(2 * n, 2 * n);
        for c in 0..2 * n {
            let step = 1e-7;
            let mut xp = x.clone();
            xp[c] += step;
            let mut xm = x.clone();
            xm[c] -= step;
            let col = (residual(&y, net, d, &xp) - residual(&y, net, d, &xm)) / (2.0 * step);
            jac.set_column(c, &col);
        }
        let dx = match jac.lu().solve(&r) {
            Some(dx) => dx,
            None => break,
        };
        x -= dx;
        r = residual(&y, net, d, &x);
        if r.iter().any(|v| !v.is_finite()) {
            break;
        }
    }
    let (k, m) = worst(&r);
    Err(Error::PowerFlow {
        iterations: MAX_ITER,
        mismatch: m,
        bus: net.node_names.get(k).cloned().unwrap_or_default(),
    })
}
