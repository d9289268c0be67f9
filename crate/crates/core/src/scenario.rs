//! Scenario file: a strict TOML document describing one study case.
//!
//! Field ownership follows the usual split of study data: the transmission operator supplies
//! `[network]` (topology, short-circuit level and its events), the plant operator supplies
//! `[shaft]`, `[turbine]`, `[machine]` and `[generator]`, the converter operator supplies
//! `[hvdc]` and `[ssdc]`. Everything else configures the study itself.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::plant::filter::BlockingFilter;
use crate::plant::machine::MachineElec;
use crate::plant::ssdc::SsdcParams;
use crate::plant::standin::StandIn;
use crate::plant::vsc::HvdcConverter;
use crate::shaft::ShaftModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub meta: Meta,
    pub shaft: ShaftModel,
    pub turbine: Turbine,
    pub machine: MachineElec,
    pub generator: Generator,
    pub network: Network,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hvdc: Option<HvdcConverter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssdc: Option<SsdcParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<BlockingFilter>,
    /// Replaces machine and network by an analytic linear torque model (scan verification).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stand_in: Option<StandIn>,
    #[serde(default)]
    pub simulation: Simulation,
    #[serde(default)]
    pub scan: ScanSettings,
    #[serde(default)]
    pub protection: ProtectionSettings,
    #[serde(default)]
    pub tuning: TuningSettings,
    #[serde(default)]
    pub filter_design: FilterDesignSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Hz
    pub base_frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Turbine {
    /// Share of the mechanical torque applied at each mass; sums to 1.
    pub torque_fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    /// Terminal bus of the machine.
    pub bus: String,
    /// Scheduled active power, MW.
    pub p_mw: f64,
    /// Terminal voltage setpoint, pu.
    pub voltage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    /// System per-unit base, MVA.
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub lines: Vec<Line>,
    #[serde(default)]
    pub transformers: Vec<Transformer>,
    pub grid: Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub name: String,
    pub kv: f64,
    /// Shunt susceptance at base frequency, pu on the system base. Must be positive: every node
    /// carries some capacitance.
    pub shunt_b: f64,
    #[serde(default)]
    pub shunt_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub name: String,
    pub from: String,
    pub to: String,
    pub length_km: f64,
    pub r_ohm_per_km: f64,
    pub x_ohm_per_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transformer {
    pub name: String,
    /// Low-voltage (generator-side) bus.
    pub from: String,
    pub to: String,
    pub rated_mva: f64,
    /// Series reactance and resistance, pu on `rated_mva`.
    pub x_pu: f64,
    #[serde(default)]
    pub r_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub bus: String,
    /// Nominal voltage, kV.
    pub kv: f64,
    /// Initial short-circuit power, MVA.
    pub ssc_mva: f64,
    pub x_over_r: f64,
    /// Source EMF magnitude, pu.
    #[serde(default = "one")]
    pub voltage: f64,
    #[serde(default)]
    pub events: Vec<SscEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SscEvent {
    /// s
    pub time: f64,
    /// MVA
    pub delta_ssc_mva: f64,
}

impl Grid {
    /// Short-circuit level once every event has fired.
    pub fn final_ssc(&self) -> f64 {
        self.ssc_mva + self.events.iter().map(|e| e.delta_ssc_mva).sum::<f64>()
    }

    /// Thevenin impedance (r, x) in system pu.
    pub fn impedance(&self, ssc_mva: f64, base_mva: f64) -> (f64, f64) {
        let z = base_mva / ssc_mva;
        let x = z * self.x_over_r / self.x_over_r.hypot(1.0);
        (x / self.x_over_r, x)
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ShaftRepresentation {
    #[default]
    MultiMass,
    SingleMass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Simulation {
    /// Step, s.
    pub dt: f64,
    /// s
    pub duration: f64,
    pub decimation: usize,
    pub shaft: ShaftRepresentation,
    /// Any |channel| above this aborts the run, pu.
    pub divergence_limit: f64,
}

impl Default for Simulation {
    fn default() -> Self {
        Self {
            dt: 20e-6,
            duration: 10.0,
            decimation: 10,
            shaft: ShaftRepresentation::MultiMass,
            divergence_limit: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScanVariant {
    #[default]
    Restart,
    Progressive,
    Multitone,
}

impl std::str::FromStr for ScanVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "restart" => Ok(Self::Restart),
            "progressive" => Ok(Self::Progressive),
            "multitone" | "multi-tone" => Ok(Self::Multitone),
            _ => Err(Error::Scenario(format!(
                "unknown scan variant `{s}` (expected restart, progressive or multitone)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSettings {
    /// Explicit frequency list, Hz. Empty: coarse grid plus refinement around each mode.
    pub frequencies: Vec<f64>,
    pub coarse_start: f64,
    pub coarse_stop: f64,
    pub coarse_step: f64,
    pub refine_halfwidth: f64,
    pub refine_step: f64,
    /// Torque perturbation amplitude, pu of the scheduled mechanical torque.
    pub amplitude: f64,
    pub settle_periods: usize,
    /// Lower bound on the settle interval, s.
    pub min_settle_time: f64,
    pub measure_periods: usize,
    pub variant: ScanVariant,
    pub tones_per_batch: usize,
    /// Rotor representation during scans.
    pub shaft: ShaftRepresentation,
    /// Step used for scan runs, s.
    pub dt: f64,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            frequencies: Vec::new(),
            coarse_start: 1.0,
            coarse_stop: 59.0,
            coarse_step: 1.0,
            refine_halfwidth: 1.0,
            refine_step: 0.1,
            amplitude: 1e-3,
            settle_periods: 10,
            min_settle_time: 1.0,
            measure_periods: 20,
            variant: ScanVariant::Restart,
            tones_per_batch: 3,
            shaft: ShaftRepresentation::SingleMass,
            dt: 20e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtectionSettings {
    /// Trace channel monitored by the relay.
    pub channel: String,
    /// pu
    pub pickup: f64,
    /// pu; must be below `pickup`.
    pub reset: f64,
    /// Allowance at arming time as a multiple of `pickup`.
    pub allowance_scale: f64,
    /// Damping (pu) whose modal decay sets the allowance time constant.
    pub required_damping: f64,
    /// Horizon of the tabulated allowance curve, s.
    pub horizon: f64,
}

impl Default for ProtectionSettings {
    fn default() -> Self {
        Self {
            channel: "te".into(),
            pickup: 0.01,
            reset: 0.005,
            allowance_scale: 2.0,
            required_damping: 0.1,
            horizon: 600.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SidebandChoice {
    /// Try both stator images and keep the one giving more damping at the mode.
    #[default]
    Auto,
    Sub,
    Super,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterDesignSettings {
    /// 1-based torsional mode to block.
    pub mode: usize,
    pub sideband: SidebandChoice,
    pub quality_factor: f64,
    /// pu on the machine base.
    pub peak_impedance: f64,
    /// Scan points, Hz, where the filter should leave the damping untouched.
    pub check_frequencies: Vec<f64>,
}

impl FilterDesignSettings {
    pub fn check_frequencies_sorted(&self) -> Vec<f64> {
        let mut v = self.check_frequencies.clone();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

impl Default for FilterDesignSettings {
    fn default() -> Self {
        Self {
            mode: 1,
            sideband: SidebandChoice::Auto,
            quality_factor: 100.0,
            peak_impedance: 1.0,
            check_frequencies: vec![48.0, 49.0, 51.0, 52.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LeadLagCentering {
    /// T1 = 1/(2π f a).
    #[default]
    Direct,
    /// T1 = 1/(2π f √a): maximum phase lead exactly at f.
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningSettings {
    /// Gain held during the phase sweep.
    pub gain_fixed: f64,
    /// Coarse phase grid, degrees: start, stop, step.
    pub phase_start: f64,
    pub phase_stop: f64,
    pub phase_step: f64,
    /// Refinement around the coarse optimum, degrees.
    pub refine_halfwidth: f64,
    pub refine_step: f64,
    pub gain_min: f64,
    pub gain_max: f64,
    pub gain_points: usize,
    pub centering: LeadLagCentering,
    /// Length of the saturation-check disturbance run, s.
    pub disturbance_duration: f64,
}

impl Default for TuningSettings {
    fn default() -> Self {
        Self {
            gain_fixed: 0.1,
            phase_start: -90.0,
            phase_stop: 90.0,
            phase_step: 10.0,
            refine_halfwidth: 10.0,
            refine_step: 2.0,
            gain_min: 0.05,
            gain_max: 5.0,
            gain_points: 12,
            centering: LeadLagCentering::Direct,
            disturbance_duration: 8.0,
        }
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scn: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        scn.validate()?;
        Ok(scn)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Scenario(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Scenario(format!("cannot serialize: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn base_frequency(&self) -> f64 {
        self.meta.base_frequency
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Scenario(m));
        let f0 = self.meta.base_frequency;
        if !(f0 > 0.0) {
            return err("meta.base_frequency must be positive".into());
        }
        self.shaft.validate()?;
        if (self.shaft.base_frequency - f0).abs() > 1e-12 {
            return err("shaft.base_frequency must equal meta.base_frequency".into());
        }
        if self.turbine.torque_fractions.len() != self.shaft.len() {
            return err(format!(
                "turbine.torque_fractions: expected {} values, got {}",
                self.shaft.len(),
                self.turbine.torque_fractions.len()
            ));
        }
        let sum: f64 = self.turbine.torque_fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.turbine.torque_fractions.iter().any(|&x| x < 0.0) {
            return err("turbine.torque_fractions must be non-negative and sum to 1".into());
        }
        self.machine.validate()?;
        if (self.machine.rated_mva - self.shaft.base_power).abs() > 1e-9 {
            return err("machine.rated_mva must equal shaft.base_power".into());
        }
        if !(self.generator.voltage > 0.0) {
            return err("generator.voltage must be positive".into());
        }
        self.validate_network()?;
        if let Some(h) = &self.hvdc {
            h.validate(f0)?;
            if !self.network.buses.iter().any(|b| b.name == h.bus) {
                return err(format!("hvdc.bus `{}` is not a network bus", h.bus));
            }
        }
        if let Some(s) = &self.ssdc {
            s.validate()?;
            if self.hvdc.is_none() {
                return err("ssdc requires an [hvdc] converter".into());
            }
        }
        if let Some(f) = &self.filter {
            f.validate(f0)?;
            if !self
                .network
                .transformers
                .iter()
                .any(|t| t.from == self.generator.bus)
            {
                return err(format!(
                    "filter requires a transformer whose `from` bus is the generator bus `{}`",
                    self.generator.bus
                ));
            }
        }
        if let Some(s) = &self.stand_in {
            s.validate()?;
        }
        let sim = &self.simulation;
        if !(sim.dt > 0.0) || !(sim.duration > sim.dt) || sim.decimation == 0 {
            return err("simulation: need dt > 0, duration > dt, decimation >= 1".into());
        }
        if !(sim.divergence_limit > 0.0) {
            return err("simulation.divergence_limit must be positive".into());
        }
        let sc = &self.scan;
        if !(sc.amplitude > 0.0)
            || sc.measure_periods == 0
            || sc.tones_per_batch == 0
            || !(sc.dt > 0.0)
        {
            return err(
                "scan: amplitude, measure_periods, tones_per_batch and dt must be positive".into(),
            );
        }
        // the grid reaches past f0 so that supersynchronous shaft modes are covered too
        let fmax = 2.0 * f0;
        if sc.frequencies.iter().any(|&f| !(f > 0.0 && f < fmax)) {
            return err(format!("scan.frequencies must lie in (0, {fmax}) Hz"));
        }
        if sc.frequencies.is_empty()
            && !(sc.coarse_step > 0.0
                && sc.coarse_start > 0.0
                && sc.coarse_stop < fmax
                && sc.coarse_stop >= sc.coarse_start
                && sc.refine_step > 0.0
                && sc.refine_halfwidth >= 0.0)
        {
            return err(format!(
                "scan: coarse grid must lie in (0, {fmax}) Hz with positive steps"
            ));
        }
        let p = &self.protection;
        if !(p.pickup > 0.0 && p.reset < p.pickup && p.reset >= 0.0) {
            return err("protection: need pickup > reset >= 0".into());
        }
        if !(p.allowance_scale >= 1.0 && p.required_damping > 0.0 && p.horizon > 0.0) {
            return err(
                "protection: need allowance_scale >= 1, required_damping > 0, horizon > 0".into(),
            );
        }
        let t = &self.tuning;
        if !(t.phase_step > 0.0
            && t.refine_step > 0.0
            && t.gain_min > 0.0
            && t.gain_max >= t.gain_min
            && t.gain_points >= 1
            && t.disturbance_duration > 0.0)
        {
            return err(
                "tuning: steps, gain range and disturbance_duration must be positive".into(),
            );
        }
        Ok(())
    }

    fn validate_network(&self) -> Result<()> {
        let err = |m: String| Err(Error::Scenario(m));
        let n = &self.network;
        if !(n.base_mva > 0.0) {
            return err("network.base_mva must be positive".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for b in &n.buses {
            if !names.insert(b.name.as_str()) {
                return err(format!("duplicate bus `{}`", b.name));
            }
            if !(b.shunt_b > 0.0) || !(b.shunt_g >= 0.0) || !(b.kv > 0.0) {
                return err(format!(
                    "bus `{}`: need kv > 0, shunt_b > 0 and shunt_g >= 0",
                    b.name
                ));
            }
        }
        let known = |s: &str| names.contains(s);
        for l in &n.lines {
            if !known(&l.from) || !known(&l.to) || l.from == l.to {
                return err(format!(
                    "line `{}` must join two distinct known buses",
                    l.name
                ));
            }
            if !(l.length_km >= 0.0) || !(l.r_ohm_per_km >= 0.0) || !(l.x_ohm_per_km > 0.0) {
                return err(format!(
                    "line `{}`: need length_km >= 0, r_ohm_per_km >= 0, x_ohm_per_km > 0",
                    l.name
                ));
            }
            if l.length_km == 0.0 {
                return err(format!(
                    "line `{}` has zero length; merge the buses instead",
                    l.name
                ));
            }
        }
        for t in &n.transformers {
            if !known(&t.from) || !known(&t.to) || t.from == t.to {
                return err(format!(
                    "transformer `{}` must join two distinct known buses",
                    t.name
                ));
            }
            if !(t.x_pu > 0.0 && t.r_pu >= 0.0 && t.rated_mva > 0.0) {
                return err(format!(
                    "transformer `{}`: need x_pu > 0, r_pu >= 0, rated_mva > 0",
                    t.name
                ));
            }
        }
        if !known(&n.grid.bus) {
            return err(format!("grid.bus `{}` is not a network bus", n.grid.bus));
        }
        if !known(&self.generator.bus) {
            return err(format!(
                "generator.bus `{}` is not a network bus",
                self.generator.bus
            ));
        }
        if !(n.grid.ssc_mva > 0.0
            && n.grid.x_over_r > 0.0
            && n.grid.voltage > 0.0
            && n.grid.kv > 0.0)
        {
            return err("grid: need ssc_mva, x_over_r, voltage and kv positive".into());
        }
        let mut level = n.grid.ssc_mva;
        let mut events = n.grid.events.clone();
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        for e in &events {
            level += e.delta_ssc_mva;
            if !(level > 0.0) || !(e.time >= 0.0) {
                return err(format!(
                    "grid event at t = {} s leaves a non-positive short-circuit level",
                    e.time
                ));
            }
        }
        Ok(())
    }

    /// Same case with every short-circuit event applied up front and the event list cleared.
    pub fn post_event(&self) -> Scenario {
        let mut s = self.clone();
        s.network.grid.ssc_mva = self.network.grid.final_ssc();
        s.network.grid.events.clear();
        s
    }

    /// Same case without short-circuit events.
    pub fn pre_event(&self) -> Scenario {
        let mut s = self.clone();
        s.network.grid.events.clear();
        s
    }
}

/// Text of the bundled Aramon study case.
pub const ARAMON: &str = include_str!("../scenarios/aramon.scn");

/// The bundled Aramon study case.
pub fn aramon() -> Scenario {
    Scenario::from_toml_str(ARAMON).expect("bundled scenario is valid")
}
