//! Fixed-step orchestrator.
//!
//! Step n → n+1 runs in a fixed order:
//! 1. shaft, trapezoidal, with the electrical torque of step n held over the step;
//! 2. SSDC on the PLL frequency of step n;
//! 3. converter on the PCC voltage extrapolated from steps n−1 and n;
//! 4. machine and network together: the network is linear, so its machine-node voltage at n+1
//!    is affine in the machine current, and the trapezoidal machine step is solved against that
//!    relation directly.
//!
//! The shaft–machine interface carries a one-step delay; the converter sees the PCC voltage
//! extrapolated to mid-step, which offsets the half-step lag of the averaged injection (without
//! it a lightly damped ~450 Hz converter–network resonance goes unstable at 20 µs). Both effects
//! are bounded by the step-halving check in the tests. A delayed machine–network interface is
//! numerically unstable at 20 µs (the subtransient reactance against the bus capacitance), which
//! is why that one is solved simultaneously.

use nalgebra::DVector;
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mechanics::MechanicalChain;
use crate::plant::machine::{MachineModel, MachineState};
use crate::plant::network::{DiscreteNetwork, NetworkModel};
use crate::plant::ssdc::Ssdc;
use crate::plant::standin::StandIn;
use crate::plant::vsc::Vsc;
use crate::powerflow::{self, Dispatch, PowerFlowSolution};
use crate::scenario::{Scenario, ShaftRepresentation};
use crate::trace::{Divergence, SimTrace};

/// Sinusoidal mechanical-torque perturbation at the generator rotor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tone {
    pub frequency: f64,
    /// pu torque.
    pub amplitude: f64,
    /// Switch-on time, s.
    pub start: f64,
    /// Raised-cosine ramp length, s (0 = step).
    pub ramp: f64,
    /// Begin of the ramp-down, s; `None` keeps the tone on.
    pub stop: Option<f64>,
}

impl Tone {
    fn envelope(&self, t: f64) -> f64 {
        let up = ramp(t - self.start, self.ramp);
        match self.stop {
            Some(s) => up * (1.0 - ramp(t - s, self.ramp)),
            None => up,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let e = self.envelope(t);
        if e == 0.0 {
            0.0
        } else {
            e * self.amplitude * (2.0 * PI * self.frequency * t).sin()
        }
    }
}

fn ramp(t: f64, len: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= len {
        1.0
    } else {
        0.5 * (1.0 - (PI * t / len).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelSet {
    #[default]
    Full,
    /// Only what a damping scan needs.
    Scan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineOptions {
    pub dt: f64,
    pub shaft: ShaftRepresentation,
    pub divergence_limit: f64,
}

impl EngineOptions {
    pub fn from_scenario(scn: &Scenario) -> Self {
        Self {
            dt: scn.simulation.dt,
            shaft: scn.simulation.shaft,
            divergence_limit: scn.simulation.divergence_limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub duration: f64,
    pub decimation: usize,
    /// Samples before this time are not stored.
    pub record_from: f64,
    pub channels: ChannelSet,
    pub tones: Vec<Tone>,
}

impl RunOptions {
    pub fn from_scenario(scn: &Scenario) -> Self {
        Self {
            duration: scn.simulation.duration,
            decimation: scn.simulation.decimation,
            record_from: 0.0,
            channels: ChannelSet::Full,
            tones: Vec::new(),
        }
    }
}

struct PlantSide {
    machine: MachineModel,
    mstate: MachineState,
    delta0: f64,
    /// S_machine / S_system
    mk: f64,
    net: NetworkModel,
    dnet: DiscreteNetwork,
    z: Vec<Complex64>,
    scratch: Vec<Complex64>,
    u_prev: Vec<Complex64>,
    u_next: Vec<Complex64>,
    /// Γ column of the machine injection, halved.
    gamma_m: Vec<Complex64>,
    v_pcc_prev: Complex64,
    vsc: Option<Vsc>,
    /// S_converter / S_system
    ck: f64,
    ssdc: Option<Ssdc>,
    p_ssdc: f64,
    limiter: bool,
    events: Vec<(u64, f64)>,
}

struct StandInSide {
    model: StandIn,
    /// [Δω, Δθ, lag state]
    x: [f64; 3],
    phi: [[f64; 3]; 3],
    gamma: [f64; 3],
}

enum Electrical {
    Plant(Box<PlantSide>),
    StandIn(StandInSide),
}

pub struct Engine {
    h: f64,
    limit: f64,
    mech: MechanicalChain,
    mx: DVector<f64>,
    torque: DVector<f64>,
    /// Scheduled mechanical torque per mass, pu.
    tm0: Vec<f64>,
    te0: f64,
    te: f64,
    step_index: u64,
    elec: Electrical,
    pf: Option<PowerFlowSolution>,
}

impl Engine {
    pub fn new(scn: &Scenario) -> Result<Self> {
        Self::with_options(scn, &EngineOptions::from_scenario(scn))
    }

    pub fn with_options(scn: &Scenario, opt: &EngineOptions) -> Result<Self> {
        scn.validate()?;
        let h = opt.dt;
        if !(h > 0.0) {
            return Err(Error::Scenario("time step must be positive".into()));
        }
        if let Some(si) = &scn.stand_in {
            return Ok(Self::stand_in(scn, si, opt));
        }
        let f0 = scn.meta.base_frequency;
        let base = scn.network.base_mva;
        let net = NetworkModel::from_scenario(scn, scn.network.grid.ssc_mva)?;
        let hvdc_s = scn.hvdc.as_ref().map_or(Complex64::new(0.0, 0.0), |c| {
            Complex64::new(c.p_ref, c.q_ref) * (c.rated_mva / base)
        });
        let dispatch = Dispatch {
            machine_p: scn.generator.p_mw / base,
            machine_v: scn.generator.voltage,
            hvdc_s,
        };
        let pf = powerflow::solve(&net, &dispatch)?;

        let machine = MachineModel::new(&scn.machine, f0)?;
        let mk = scn.machine.rated_mva / base;
        let vg = pf.voltages[net.machine_node];
        let ig = (pf.machine_s / vg).conj() / mk;
        let init = machine.initialize(vg, ig);

        let mut z: Vec<Complex64> = pf.voltages.clone();
        z.extend(net.branch_currents(&pf.voltages));
        let dnet = net.discretize(h)?;
        let gamma_m = machine_column(&dnet, net.machine_node);
        let v_pcc_prev = net
            .hvdc_node
            .map_or(Complex64::new(0.0, 0.0), |k| pf.voltages[k]);

        let (vsc, ck) = match &scn.hvdc {
            Some(c) => {
                let k = net
                    .hvdc_node
                    .expect("hvdc node resolved with the converter");
                (
                    Some(Vsc::new(c, pf.voltages[k], f0, h)?),
                    c.rated_mva / base,
                )
            }
            None => (None, 0.0),
        };
        let ssdc = match &scn.ssdc {
            Some(p) => Some(Ssdc::new(p, h, 1.0)?),
            None => None,
        };

        let nu = net.n_nodes() + net.n_branches();
        let mut u = vec![Complex64::new(0.0, 0.0); nu];
        u[net.machine_node] = init.i_dq * Complex64::from_polar(1.0, init.delta) * mk;
        if let (Some(v), Some(k)) = (&vsc, net.hvdc_node) {
            u[k] = v.output().current * ck;
        }
        u[net.n_nodes() + net.source_branch] = net.source_emf;

        let mut events: Vec<(u64, f64)> = Vec::new();
        let mut level = scn.network.grid.ssc_mva;
        let mut evs = scn.network.grid.events.clone();
        evs.sort_by(|a, b| a.time.total_cmp(&b.time));
        for e in evs {
            level += e.delta_ssc_mva;
            events.push(((e.time / h).round() as u64, level));
        }

        let mech = MechanicalChain::new(&scn.shaft, opt.shaft, h);
        let n = mech.len();
        let tm0: Vec<f64> = match opt.shaft {
            ShaftRepresentation::MultiMass => scn
                .turbine
                .torque_fractions
                .iter()
                .map(|f| f * init.te)
                .collect(),
            ShaftRepresentation::SingleMass => vec![init.te],
        };
        Ok(Self {
            h,
            limit: opt.divergence_limit,
            mx: DVector::zeros(2 * n),
            torque: DVector::zeros(n),
            mech,
            tm0,
            te0: init.te,
            te: init.te,
            step_index: 0,
            elec: Electrical::Plant(Box::new(PlantSide {
                machine,
                mstate: init.state,
                delta0: init.delta,
                mk,
                net,
                dnet,
                scratch: Vec::with_capacity(z.len()),
                z,
                u_next: u.clone(),
                u_prev: u,
                gamma_m,
                v_pcc_prev,
                vsc,
                ck,
                ssdc,
                p_ssdc: 0.0,
                limiter: false,
                events,
            })),
            pf: Some(pf),
        })
    }

    fn stand_in(scn: &Scenario, si: &StandIn, opt: &EngineOptions) -> Self {
        let h = opt.dt;
        let w0 = 2.0 * PI * scn.meta.base_frequency;
        // d/dt [Δω, Δθ, x] = A·[..] + B·ΔTm
        let a = nalgebra::Matrix3::new(
            -si.damping / (2.0 * si.inertia),
            -si.synchronizing / (2.0 * si.inertia),
            -1.0 / (2.0 * si.inertia),
            w0,
            0.0,
            0.0,
            si.lag_gain / si.lag_time,
            0.0,
            -1.0 / si.lag_time,
        );
        let b = nalgebra::Vector3::new(1.0 / (2.0 * si.inertia), 0.0, 0.0);
        let eye = nalgebra::Matrix3::<f64>::identity();
        let lu = (eye - a * (0.5 * h)).lu();
        let phi = lu
            .solve(&(eye + a * (0.5 * h)))
            .expect("regular stand-in step matrix");
        let gamma = lu.solve(&(b * h)).expect("regular stand-in step matrix");
        let mech = MechanicalChain::from_per_unit(vec![si.inertia], vec![], vec![], 0, w0, h);
        Self {
            h,
            limit: opt.divergence_limit,
            mx: DVector::zeros(2),
            torque: DVector::zeros(1),
            mech,
            tm0: vec![0.0],
            te0: 0.0,
            te: 0.0,
            step_index: 0,
            elec: Electrical::StandIn(StandInSide {
                model: si.clone(),
                x: [0.0; 3],
                phi: [
                    [phi[(0, 0)], phi[(0, 1)], phi[(0, 2)]],
                    [phi[(1, 0)], phi[(1, 1)], phi[(1, 2)]],
                    [phi[(2, 0)], phi[(2, 1)], phi[(2, 2)]],
                ],
                gamma: [gamma[0], gamma[1], gamma[2]],
            }),
            pf: None,
        }
    }

    pub fn dt(&self) -> f64 {
        self.h
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.h
    }

    pub fn power_flow(&self) -> Option<&PowerFlowSolution> {
        self.pf.as_ref()
    }

    /// Scheduled mechanical torque, pu on the machine base.
    pub fn mechanical_torque(&self) -> f64 {
        self.tm0.iter().sum()
    }

    pub fn mechanics(&self) -> &MechanicalChain {
        &self.mech
    }

    /// Mechanical state [Δω; Δθ].
    pub fn mechanical_state(&self) -> &DVector<f64> {
        &self.mx
    }

    pub fn mechanical_state_mut(&mut self) -> &mut DVector<f64> {
        &mut self.mx
    }

    /// Largest time derivative of any electrical state at the current point, pu/s.
    pub fn max_rate(&self) -> f64 {
        match &self.elec {
            Electrical::StandIn(_) => 0.0,
            Electrical::Plant(p) => {
                let delta = p.delta0 + self.mx[self.mech.len() + self.mech.gen];
                let wr = 1.0 + self.mx[self.mech.gen];
                let v = p.z[p.net.machine_node] * Complex64::from_polar(1.0, -delta);
                let dm = p.machine.derivative(&p.mstate, v, wr);
                let mut m = dm.iter().fold(0.0f64, |a, d| a.max(d.abs()));
                // network: the discrete map must leave the state unchanged
                let mut z = p.z.clone();
                let mut s = Vec::new();
                p.dnet.step(&mut z, &p.u_prev, &mut s);
                for (a, b) in z.iter().zip(&p.z) {
                    m = m.max((a - b).norm() / self.h);
                }
                m
            }
        }
    }

    fn names(&self, set: ChannelSet) -> Vec<String> {
        match set {
            ChannelSet::Scan => vec![
                "dw_gen".into(),
                "te".into(),
                "limiter_active".into(),
                "current_limited".into(),
            ],
            ChannelSet::Full => {
                let mut v: Vec<String> = (1..=self.mech.len()).map(|i| format!("dw_{i}")).collect();
                v.extend(
                    [
                        "dw_gen",
                        "te",
                        "tm",
                        "p_pcc",
                        "q_pcc",
                        "omega_net",
                        "p_ssdc",
                        "limiter_active",
                        "current_limited",
                        "v_gen",
                        "v_pcc",
                    ]
                    .map(String::from),
                );
                v
            }
        }
    }

    fn sample(&self, set: ChannelSet, tm: f64, out: &mut Vec<f64>) {
        out.clear();
        let g = self.mech.gen;
        let (limiter, climited) = match &self.elec {
            Electrical::Plant(p) => (
                p.limiter,
                p.vsc.as_ref().is_some_and(|v| v.output().current_limited),
            ),
            Electrical::StandIn(_) => (false, false),
        };
        match set {
            ChannelSet::Scan => {
                out.extend([
                    self.mx[g],
                    self.te,
                    limiter as u8 as f64,
                    climited as u8 as f64,
                ]);
            }
            ChannelSet::Full => {
                out.extend((0..self.mech.len()).map(|i| self.mx[i]));
                out.extend([self.mx[g], self.te, tm]);
                match &self.elec {
                    Electrical::Plant(p) => {
                        let (pp, qq, wn, vp) = match (&p.vsc, p.net.hvdc_node) {
                            (Some(v), Some(k)) => {
                                let s = p.z[k] * v.output().current.conj();
                                (s.re, s.im, v.output().omega_net, p.z[k].norm())
                            }
                            _ => (0.0, 0.0, 1.0, 0.0),
                        };
                        out.extend([
                            pp,
                            qq,
                            wn,
                            p.p_ssdc,
                            limiter as u8 as f64,
                            climited as u8 as f64,
                            p.z[p.net.machine_node].norm(),
                            vp,
                        ]);
                    }
                    Electrical::StandIn(_) => out.extend([0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
                }
            }
        }
    }

    /// Runs from the current state for `opt.duration` seconds. Divergence ends the run early and
    /// is recorded in the returned trace.
    pub fn run(&mut self, opt: &RunOptions) -> SimTrace {
        let names = self.names(opt.channels);
        let dec = opt.decimation.max(1);
        let mut trace = SimTrace::new(names, self.h * dec as f64);
        let steps = (opt.duration / self.h).round() as u64;
        let mut row = Vec::new();
        let tm_now = |t: f64| -> f64 { opt.tones.iter().map(|tone| tone.value(t)).sum() };
        let mut pert = tm_now(self.time());
        let end = self.step_index + steps;
        loop {
            let t = self.time();
            if self.step_index.is_multiple_of(dec as u64) && t >= opt.record_from - 0.5 * self.h {
                self.sample(opt.channels, self.mechanical_torque() + pert, &mut row);
                trace.push(t, &row);
            }
            if self.step_index >= end {
                break;
            }
            let next = tm_now((self.step_index + 1) as f64 * self.h);
            if let Err(Error::Divergence { signal, .. }) = self.step(pert, next) {
                trace.divergence = Some(Divergence {
                    time: self.time(),
                    signal,
                });
                break;
            }
            pert = next;
        }
        trace
    }

    /// One step with generator-rotor torque perturbation `p0` at the start and `p1` at the end.
    pub fn step(&mut self, p0: f64, p1: f64) -> Result<()> {
        let h = self.h;
        let n = self.mech.len();
        let g = self.mech.gen;
        let t_next = (self.step_index + 1) as f64 * h;
        match &mut self.elec {
            Electrical::StandIn(s) => {
                let u = 0.5 * (p0 + p1);
                let x = s.x;
                let mut y = [0.0; 3];
                for (r, yr) in y.iter_mut().enumerate() {
                    *yr = s.phi[r][0] * x[0]
                        + s.phi[r][1] * x[1]
                        + s.phi[r][2] * x[2]
                        + s.gamma[r] * u;
                }
                s.x = y;
                self.mx[0] = y[0];
                self.mx[1] = y[1];
                self.te = s.model.damping * y[0] + s.model.synchronizing * y[1] + y[2];
            }
            Electrical::Plant(p) => {
                // events fire before the step that starts at their time
                while let Some(&(k, ssc)) = p.events.first() {
                    if k > self.step_index {
                        break;
                    }
                    p.events.remove(0);
                    let (r, x) = {
                        let z = p.net.base_mva / ssc;
                        let grid_xr = {
                            let b = &p.net.branches[p.net.source_branch];
                            b.x / b.r.max(f64::MIN_POSITIVE)
                        };
                        let x = z * grid_xr / grid_xr.hypot(1.0);
                        (x / grid_xr, x)
                    };
                    p.net.set_source_impedance(r, x);
                    p.dnet = p.net.discretize(h)?;
                    p.gamma_m = machine_column(&p.dnet, p.net.machine_node);
                }

                // 1. shaft with Te held
                for i in 0..n {
                    self.torque[i] = 0.0;
                }
                self.torque[g] = 0.5 * (p0 + p1) - (self.te - self.te0);
                let w_start = self.mx[g];
                let th_start = self.mx[n + g];
                self.mech.step(&mut self.mx, &self.torque);
                let w_end = self.mx[g];
                let th_end = self.mx[n + g];

                // 2./3. SSDC and converter
                let nn = p.net.n_nodes();
                let m = p.net.machine_node;
                p.u_next.copy_from_slice(&p.u_prev);
                if let (Some(vsc), Some(k)) = (p.vsc.as_mut(), p.net.hvdc_node) {
                    let (ps, lim) = match p.ssdc.as_mut() {
                        Some(s) => s.step(vsc.output().omega_net),
                        None => (0.0, false),
                    };
                    p.p_ssdc = ps;
                    p.limiter = lim;
                    // linear extrapolation to mid-step offsets the half-step lag of the
                    // averaged injection
                    let vx = 1.5 * p.z[k] - 0.5 * p.v_pcc_prev;
                    p.v_pcc_prev = p.z[k];
                    let o = vsc.step(vx, ps);
                    p.u_next[k] = o.current * p.ck;
                }

                // 4. network without the new machine current, then the machine against the
                // resulting affine terminal relation
                p.u_next[m] = Complex64::new(0.0, 0.0);
                let mut avg = std::mem::take(&mut p.scratch);
                avg.clear();
                avg.extend(p.u_prev.iter().zip(&p.u_next).map(|(a, b)| 0.5 * (a + b)));
                let mut buf = Vec::with_capacity(p.z.len());
                let v0 = p.z[m];
                p.dnet.step(&mut p.z, &avg, &mut buf);
                p.scratch = avg;

                let d0 = p.delta0 + th_start;
                let d1 = p.delta0 + th_end;
                let rot1 = Complex64::from_polar(1.0, -d1);
                let out = p
                    .machine
                    .step_coupled(
                        &mut p.mstate,
                        v0 * Complex64::from_polar(1.0, -d0),
                        p.z[m] * rot1,
                        p.gamma_m[m] * p.mk,
                        1.0 + w_start,
                        1.0 + w_end,
                        h,
                    )
                    .map_err(|e| match e {
                        Error::Divergence { signal, .. } => Error::Divergence {
                            signal,
                            time: t_next,
                        },
                        other => other,
                    })?;
                self.te = out.te;
                let im = out.i_dq * rot1.conj() * p.mk;
                for (zk, gk) in p.z.iter_mut().zip(&p.gamma_m) {
                    *zk += gk * im;
                }
                p.u_next[m] = im;
                std::mem::swap(&mut p.u_prev, &mut p.u_next);

                let lim = self.limit;
                if let Some(k) = (0..nn).find(|&k| !(p.z[k].norm() <= lim)) {
                    self.step_index += 1;
                    return Err(Error::Divergence {
                        signal: format!("v[{}]", p.net.node_names[k]),
                        time: t_next,
                    });
                }
                if let Some(b) = (0..p.net.n_branches()).find(|&b| !(p.z[nn + b].norm() <= lim)) {
                    self.step_index += 1;
                    return Err(Error::Divergence {
                        signal: format!("i[{}]", p.net.branches[b].name),
                        time: t_next,
                    });
                }
            }
        }
        self.step_index += 1;
        if !(self.te.abs() <= self.limit) {
            return Err(Error::Divergence {
                signal: "te".into(),
                time: t_next,
            });
        }
        if let Some(i) = (0..n).find(|&i| !(self.mx[i].abs() <= self.limit)) {
            return Err(Error::Divergence {
                signal: format!("dw_{}", i + 1),
                time: t_next,
            });
        }
        Ok(())
    }
}

/// Half the Γ column that maps the machine injection into the state.
fn machine_column(d: &DiscreteNetwork, m: usize) -> Vec<Complex64> {
    (0..d.gamma.nrows())
        .map(|r| 0.5 * d.gamma[(r, m)])
        .collect()
}

/// Convenience: initialize and run the scenario as configured.
pub fn run(scn: &Scenario) -> Result<SimTrace> {
    let mut e = Engine::new(scn)?;
    Ok(e.run(&RunOptions::from_scenario(scn)))
}
