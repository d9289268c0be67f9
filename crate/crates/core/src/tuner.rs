//! Empirical SSDC tuning: a phase sweep at fixed small gain picks the lead-lag that maximises the
//! electrical damping at the target mode, then a gain sweep picks the largest damping whose
//! disturbance run never drives the controller into its output limit.

use rayon::prelude::*;
use std::f64::consts::PI;
use std::io::Write;

use crate::engine::{Engine, RunOptions};
use crate::error::{Error, Result};
use crate::plant::ssdc::SsdcParams;
use crate::scan::{electrical_damping_curve, with_workers, ScanOptions, ScanPlan};
use crate::scenario::{LeadLagCentering, Scenario, TuningSettings};
use crate::shaft::modal_inertia_and_damping;
use crate::signal::{growth_rate, Record};
use crate::trace::fmt_num;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadLag {
    pub a: f64,
    pub t1: f64,
    pub t2: f64,
}

impl LeadLag {
    /// `a > 1`: the block lags.
    pub fn is_lag(&self) -> bool {
        self.a > 1.0
    }

    /// Phase of `(1 + jωT1)/(1 + jωT2)` at `f_hz`, rad.
    pub fn phase_at(&self, f_hz: f64) -> f64 {
        let w = 2.0 * PI * f_hz;
        (w * self.t1).atan() - (w * self.t2).atan()
    }
}

/// `a = (1 − sin ΔΦ)/(1 + sin ΔΦ)`, `T2 = a·T1`, with either `T1 = 1/(2π f a)` (direct) or
/// `T1 = 1/(2π f √a)`, which puts the extremum of the phase exactly at `f`.
pub fn leadlag_from_phase(dphi: f64, f_hz: f64, centering: LeadLagCentering) -> Result<LeadLag> {
    if !(dphi.abs() < PI / 2.0) {
        return Err(Error::UnrealizablePhase {
            deg: dphi.to_degrees(),
        });
    }
    if !(f_hz > 0.0) {
        return Err(Error::Tuning(format!(
            "target frequency must be positive, got {f_hz}"
        )));
    }
    let s = dphi.sin();
    let a = (1.0 - s) / (1.0 + s);
    let w = 2.0 * PI * f_hz;
    let t1 = match centering {
        LeadLagCentering::Direct => 1.0 / (w * a),
        LeadLagCentering::Geometric => 1.0 / (w * a.sqrt()),
    };
    Ok(LeadLag { a, t1, t2: a * t1 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub phase_deg: f64,
    pub de: f64,
    pub nonlinear: bool,
}

/// Coarse grid, then a refinement around the coarse optimum; returns the best point and the
/// whole table sorted by phase. `eval` maps a phase (degrees) to (De, nonlinear).
pub fn sweep_phase<F>(
    coarse: &[f64],
    refine_halfwidth: f64,
    refine_step: f64,
    eval: F,
) -> Result<(PhasePoint, Vec<PhasePoint>)>
where
    F: Fn(f64) -> Result<(f64, bool)> + Sync,
{
    let run = |grid: &[f64]| -> Result<Vec<PhasePoint>> {
        grid.par_iter()
            .map(|&p| {
                let (de, nonlinear) = eval(p)?;
                Ok(PhasePoint {
                    phase_deg: p,
                    de,
                    nonlinear,
                })
            })
            .collect()
    };
    let mut table = run(coarse)?;
    let best = |t: &[PhasePoint]| {
        t.iter()
            .filter(|p| !p.nonlinear && p.de.is_finite())
            .copied()
            .max_by(|a, b| a.de.total_cmp(&b.de))
    };
    let coarse_best = best(&table).ok_or_else(|| {
        Error::Tuning(
            "every phase point drove the controller into its limit; lower tuning.gain_fixed".into(),
        )
    })?;
    if refine_step > 0.0 && refine_halfwidth > 0.0 {
        let lo = coarse.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = coarse.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n = (refine_halfwidth / refine_step).round() as i64;
        let fine: Vec<f64> = (-n..=n)
            .map(|k| coarse_best.phase_deg + k as f64 * refine_step)
            .filter(|p| *p >= lo && *p <= hi && p.abs() < 90.0)
            .filter(|p| !table.iter().any(|q| (q.phase_deg - p).abs() < 1e-9))
            .collect();
        table.extend(run(&fine)?);
    }
    table.sort_by(|a, b| a.phase_deg.total_cmp(&b.phase_deg));
    let b = best(&table).expect("coarse optimum is still present");
    Ok((b, table))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainPoint {
    pub gain: f64,
    pub de: f64,
    /// Share of disturbance-run samples with the limiter active.
    pub limiter_fraction: f64,
    /// Growth rate at the target mode after the disturbance, 1/s (NaN when not measurable).
    pub growth: f64,
    pub diverged: bool,
}

impl GainPoint {
    fn admissible(&self) -> bool {
        !self.diverged && self.limiter_fraction == 0.0 && self.de.is_finite()
    }
}

/// Picks the largest De among admissible gains.
pub fn choose_gain(table: &[GainPoint]) -> Result<GainPoint> {
    table
        .iter()
        .filter(|p| p.admissible())
        .copied()
        .max_by(|a, b| a.de.total_cmp(&b.de))
        .ok_or_else(|| {
            Error::Tuning(
                "every gain saturates the controller during the disturbance run; raise ssdc.limit \
                 or use a different input signal"
                    .into(),
            )
        })
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

fn range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeDamping {
    pub f: f64,
    pub dm: f64,
    pub de_before: f64,
    pub de_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneReport {
    pub f1: f64,
    pub phase_table: Vec<PhasePoint>,
    pub gain_table: Vec<GainPoint>,
    pub phase_deg: f64,
    pub leadlag: LeadLag,
    pub gain: f64,
    pub params: SsdcParams,
    pub modes: Vec<ModeDamping>,
}

impl TuneReport {
    pub fn write_phase_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "phase_deg,de,nonlinear")?;
        for p in &self.phase_table {
            writeln!(
                w,
                "{},{},{}",
                fmt_num(p.phase_deg),
                fmt_num(p.de),
                p.nonlinear as u8
            )?;
        }
        Ok(())
    }

    pub fn write_gain_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "gain,de,limiter_fraction,growth,diverged")?;
        for p in &self.gain_table {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_num(p.gain),
                fmt_num(p.de),
                fmt_num(p.limiter_fraction),
                fmt_num(p.growth),
                p.diverged as u8
            )?;
        }
        Ok(())
    }

    pub fn write_modes_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "mode,f_hz,dm,de_before,de_after")?;
        for (i, m) in self.modes.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                i + 1,
                fmt_num(m.f),
                fmt_num(m.dm),
                fmt_num(m.de_before),
                fmt_num(m.de_after)
            )?;
        }
        Ok(())
    }

    /// `[ssdc]` section holding the tuned parameters.
    pub fn scenario_fragment(&self) -> Result<String> {
        #[derive(serde::Serialize)]
        struct Fragment<'a> {
            ssdc: &'a SsdcParams,
        }
        toml::to_string(&Fragment { ssdc: &self.params })
            .map_err(|e| Error::Scenario(e.to_string()))
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "SSDC tuned at {:.3} Hz\n  phase shift {:.1} deg -> a = {:.4}, T1 = {:.5} s, T2 = {:.5} s{}\n  gain {:.4} pu/pu, output limit {} pu\n\n  mode     f (Hz)        Dm   De before    De after\n",
            self.f1,
            self.phase_deg,
            self.leadlag.a,
            self.leadlag.t1,
            self.leadlag.t2,
            if self.leadlag.is_lag() { " (lag)" } else { "" },
            self.gain,
            self.params.limit
        );
        for (i, m) in self.modes.iter().enumerate() {
            s.push_str(&format!(
                "  {:>4} {:10.3} {:9.3e} {:11.4} {:11.4}\n",
                i + 1,
                m.f,
                m.dm,
                m.de_before,
                m.de_after
            ));
        }
        s
    }
}

/// Tuning context: the operating point for the damping scans is the post-event network; the
/// saturation check replays the scenario's own short-circuit events.
pub struct Tuner<'a> {
    pub scn: &'a Scenario,
    pub settings: TuningSettings,
    pub scan: ScanOptions,
    pub f1: f64,
}

impl<'a> Tuner<'a> {
    pub fn new(scn: &'a Scenario) -> Result<Self> {
        let modal = modal_inertia_and_damping(&scn.shaft)?;
        let f1 = modal
            .modes
            .first()
            .ok_or_else(|| Error::Tuning("the shaft has no torsional mode".into()))?
            .frequency_hz;
        Ok(Self {
            scn,
            settings: scn.tuning.clone(),
            scan: ScanOptions::default(),
            f1,
        })
    }

    fn params(&self, ll: LeadLag, gain: f64) -> SsdcParams {
        let proto = self.scn.ssdc.clone();
        SsdcParams {
            center_frequency: self.f1,
            quality_factor: proto.as_ref().map_or(50.0, |p| p.quality_factor),
            t1: ll.t1,
            t2: ll.t2,
            gain,
            limit: proto.as_ref().map_or(0.05, |p| p.limit),
        }
    }

    fn with_ssdc(&self, p: Option<SsdcParams>) -> Scenario {
        let mut s = self.scn.clone();
        s.ssdc = p;
        s
    }

    /// De at the given frequencies on the post-event network; `nonlinear` if any point was.
    pub fn damping_at(&self, ssdc: Option<SsdcParams>, freqs: &[f64]) -> Result<(Vec<f64>, bool)> {
        let scn = self.with_ssdc(ssdc).post_event();
        let mut plan = ScanPlan::from_settings(&scn.scan, &[]);
        plan.frequencies = freqs.to_vec();
        plan.variant = crate::scenario::ScanVariant::Restart;
        let c = electrical_damping_curve(&scn, &plan, &self.scan)?;
        Ok((
            c.points.iter().map(|p| p.de).collect(),
            c.points.iter().any(|p| p.nonlinear),
        ))
    }

    pub fn tune_phase(&self) -> Result<(PhasePoint, Vec<PhasePoint>)> {
        let t = &self.settings;
        let coarse: Vec<f64> = range(t.phase_start, t.phase_stop, t.phase_step)
            .into_iter()
            .filter(|p| p.abs() < 90.0)
            .collect();
        sweep_phase(&coarse, t.refine_halfwidth, t.refine_step, |deg| {
            let ll = leadlag_from_phase(deg.to_radians(), self.f1, t.centering)?;
            let (de, nl) = self.damping_at(Some(self.params(ll, t.gain_fixed)), &[self.f1])?;
            Ok((de[0], nl))
        })
    }

    /// Replays the scenario with its events and the given controller.
    pub fn disturbance_run(&self, p: &SsdcParams) -> Result<GainPoint> {
        let scn = self.with_ssdc(Some(p.clone()));
        let mut e = Engine::new(&scn)?;
        let mut opt = RunOptions::from_scenario(&scn);
        opt.duration = self.settings.disturbance_duration;
        let tr = e.run(&opt);
        let lim = tr.require("limiter_active")?;
        let limiter_fraction =
            lim.iter().filter(|&&x| x > 0.5).count() as f64 / lim.len().max(1) as f64;
        let start = scn
            .network
            .grid
            .events
            .iter()
            .map(|e| e.time)
            .fold(0.0, f64::max)
            + 0.5;
        let dw = tr.require("dw_gen")?;
        let growth = growth_rate(
            Record {
                t0: tr.time[0],
                dt: tr.sample_dt,
                x: dw,
            },
            self.f1,
            start,
            f64::INFINITY,
        )
        .unwrap_or(f64::NAN);
        Ok(GainPoint {
            gain: p.gain,
            de: f64::NAN,
            limiter_fraction,
            growth,
            diverged: tr.divergence.is_some(),
        })
    }

    pub fn tune_gain(&self, ll: LeadLag, gains: &[f64]) -> Result<(GainPoint, Vec<GainPoint>)> {
        let table: Vec<GainPoint> = gains
            .par_iter()
            .map(|&k| {
                let p = self.params(ll, k);
                let (de, nl) = self.damping_at(Some(p.clone()), &[self.f1])?;
                let mut g = self.disturbance_run(&p)?;
                g.de = de[0];
                if nl {
                    g.limiter_fraction = g.limiter_fraction.max(f64::MIN_POSITIVE);
                }
                Ok(g)
            })
            .collect::<Result<_>>()?;
        Ok((choose_gain(&table)?, table))
    }

    pub fn run(&self) -> Result<TuneReport> {
        let inner = Tuner {
            settings: self.settings.clone(),
            scan: ScanOptions {
                jobs: None,
                ..self.scan.clone()
            },
            ..*self
        };
        with_workers(self.scan.jobs, || inner.run_inner())
    }

    fn run_inner(&self) -> Result<TuneReport> {
        let (best_phase, phase_table) = self.tune_phase()?;
        let ll = leadlag_from_phase(
            best_phase.phase_deg.to_radians(),
            self.f1,
            self.settings.centering,
        )?;
        let gains = log_grid(
            self.settings.gain_min,
            self.settings.gain_max,
            self.settings.gain_points,
        );
        let (best_gain, gain_table) = self.tune_gain(ll, &gains)?;
        let params = self.params(ll, best_gain.gain);
        let modal = modal_inertia_and_damping(&self.scn.shaft)?;
        let freqs: Vec<f64> = modal
            .modes
            .iter()
            .map(|m| m.frequency_hz)
            .filter(|&f| f < 2.0 * self.scn.meta.base_frequency)
            .collect();
        let (before, _) = self.damping_at(None, &freqs)?;
        let (after, _) = self.damping_at(Some(params.clone()), &freqs)?;
        let modes = freqs
            .iter()
            .enumerate()
            .map(|(i, &f)| ModeDamping {
                f,
                dm: modal.modes[i].mechanical_damping,
                de_before: before[i],
                de_after: after[i],
            })
            .collect();
        Ok(TuneReport {
            f1: self.f1,
            phase_table,
            gain_table,
            phase_deg: best_phase.phase_deg,
            leadlag: ll,
            gain: best_gain.gain,
            params,
            modes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_thirty_degrees() {
        let ll = leadlag_from_phase(0.0, 14.07, LeadLagCentering::Direct).unwrap();
        assert!((ll.a - 1.0).abs() < 1e-15);
        assert!((ll.t1 - 1.0 / (2.0 * PI * 14.07)).abs() < 1e-15 && ll.t1 == ll.t2);
        let ll =
            leadlag_from_phase(30f64.to_radians(), 14.07, LeadLagCentering::Direct).unwrap();
        assert!((ll.a - 1.0 / 3.0).abs() < 1e-12);
        assert!((ll.t1 - 0.03394).abs() < 1e-5, "{}", ll.t1);
        let lag =
            leadlag_from_phase(-30f64.to_radians(), 14.07, LeadLagCentering::Direct).unwrap();
        assert!((lag.a - 3.0).abs() < 1e-12 && lag.is_lag());
    }

    #[test]
    fn right_angle_is_unrealizable() {
        for d in [90.0f64, -90.0, 120.0] {
            assert!(matches!(
                leadlag_from_phase(d.to_radians(), 14.0, LeadLagCentering::Direct),
                Err(Error::UnrealizablePhase { .. })
            ));
        }
    }

    #[test]
    fn geometric_centering_round_trips() {
        for d in (-60..=60).step_by(5) {
            let ll =
                leadlag_from_phase((d as f64).to_radians(), 14.07, LeadLagCentering::Geometric)
                    .unwrap();
            assert!(
                (ll.phase_at(14.07).to_degrees() - d as f64).abs() < 1e-9,
                "{d}"
            );
        }
    }

    #[test]
    fn direct_centering_undershoots() {
        // T1 = 1/(2πfa) places the phase extremum at √a·f, so the phase reached at f falls short
        let ll =
            leadlag_from_phase(30f64.to_radians(), 14.07, LeadLagCentering::Direct).unwrap();
        let got = ll.phase_at(14.07).to_degrees();
        let expect = 3f64.atan().to_degrees() - 45.0;
        assert!((got - expect).abs() < 1e-9);
        assert!(30.0 - got > 1.0);
    }

    #[test]
    fn synthetic_phase_optimum() {
        let coarse = range(-90.0, 90.0, 10.0);
        let coarse: Vec<f64> = coarse.into_iter().filter(|p| p.abs() < 90.0).collect();
        let (b, table) = sweep_phase(&coarse, 10.0, 2.0, |d| {
            Ok(((d - 25.0f64).to_radians().cos(), false))
        })
        .unwrap();
        assert!((b.phase_deg - 25.0).abs() <= 1.0, "{}", b.phase_deg);
        assert!(table.windows(2).all(|w| w[1].phase_deg > w[0].phase_deg));
        let (b, _) = sweep_phase(&[40.0], 0.0, 0.0, |_| Ok((0.3, false))).unwrap();
        assert_eq!(b.phase_deg, 40.0);
        assert!(sweep_phase(&[0.0, 10.0], 0.0, 0.0, |_| Ok((1.0, true))).is_err());
    }

    #[test]
    fn gain_choice_respects_saturation() {
        let pt = |gain, de, lim| GainPoint {
            gain,
            de,
            limiter_fraction: lim,
            growth: f64::NAN,
            diverged: false,
        };
        let t = [pt(0.1, 0.1, 0.0), pt(1.0, 0.5, 0.0), pt(3.0, 0.9, 0.02)];
        assert_eq!(choose_gain(&t).unwrap().gain, 1.0);
        let unlimited = [pt(0.1, 0.1, 0.0), pt(1.0, 0.5, 0.0), pt(3.0, 0.9, 0.0)];
        assert_eq!(choose_gain(&unlimited).unwrap().gain, 3.0);
        assert!(choose_gain(&[pt(1.0, 0.5, 0.1)]).is_err());
    }

    #[test]
    fn default_gain_grid() {
        let g = log_grid(0.05, 5.0, 12);
        assert_eq!(g.len(), 12);
        assert!((g[0] - 0.05).abs() < 1e-15 && (g[11] - 5.0).abs() < 1e-12);
    }
}
