//! Blocking-filter design for one torsional mode, checked with damping scans on the post-event
//! network: the tank must restore positive total damping at the mode while leaving the damping
//! near the base frequency alone.

use std::io::Write;

use crate::error::{Error, Result};
use crate::plant::filter::{design_blocking_filter, BlockingFilter, Sideband};
use crate::scan::{electrical_damping_curve, ScanOptions, ScanPlan};
use crate::scenario::{ScanVariant, Scenario, SidebandChoice};
use crate::shaft::modal_inertia_and_damping;
use crate::trace::fmt_num;

/// |Z| at the base frequency may not exceed this share of the peak impedance.
pub const MAX_BASE_FREQUENCY_SHARE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckPoint {
    pub f: f64,
    pub de_without: f64,
    pub de_with: f64,
}

impl CheckPoint {
    pub fn relative_change(&self) -> f64 {
        (self.de_with - self.de_without).abs() / self.de_without.abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterDesign {
    pub filter: BlockingFilter,
    pub sideband: Sideband,
    pub mode: usize,
    pub f_mode: f64,
    pub dm: f64,
    /// De at the mode for each image tried.
    pub candidates: Vec<(Sideband, f64)>,
    pub de_without: f64,
    pub de_with: f64,
    pub checks: Vec<CheckPoint>,
    /// |Z(f0)| / peak.
    pub base_frequency_share: f64,
}

impl FilterDesign {
    pub fn stable_at_mode(&self) -> bool {
        self.de_with + self.dm > 0.0
    }

    pub fn write_response_csv<W: Write>(&self, mut w: W, f_max: f64) -> Result<()> {
        writeln!(w, "f_hz,z_re,z_im,z_abs")?;
        let n = (f_max * 10.0).round() as usize;
        for k in 1..=n {
            let f = k as f64 / 10.0;
            let z = self.filter.response(f);
            writeln!(
                w,
                "{},{},{},{}",
                fmt_num(f),
                fmt_num(z.re),
                fmt_num(z.im),
                fmt_num(z.norm())
            )?;
        }
        Ok(())
    }

    pub fn write_check_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "f_hz,de_without,de_with,relative_change")?;
        writeln!(
            w,
            "{},{},{},{}",
            fmt_num(self.f_mode),
            fmt_num(self.de_without),
            fmt_num(self.de_with),
            fmt_num((self.de_with - self.de_without).abs() / self.de_without.abs())
        )?;
        for c in &self.checks {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_num(c.f),
                fmt_num(c.de_without),
                fmt_num(c.de_with),
                fmt_num(c.relative_change())
            )?;
        }
        Ok(())
    }

    pub fn scenario_fragment(&self) -> Result<String> {
        #[derive(serde::Serialize)]
        struct Fragment<'a> {
            filter: &'a BlockingFilter,
        }
        toml::to_string(&Fragment {
            filter: &self.filter,
        })
        .map_err(|e| Error::Scenario(e.to_string()))
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "Blocking filter for mode {} ({:.3} Hz): tank tuned to {:.3} Hz ({:?} image), Q = {}, peak {} pu\n\
             |Z(f0)| = {:.2}% of peak\n\
             De at the mode: {:.4} without, {:.4} with the filter; Dm = {:.4}; total {:.4} ({})\n",
            self.mode,
            self.f_mode,
            self.filter.tuned_frequency,
            self.sideband,
            self.filter.quality_factor,
            self.filter.peak_impedance,
            100.0 * self.base_frequency_share,
            self.de_without,
            self.de_with,
            self.dm,
            self.de_with + self.dm,
            if self.stable_at_mode() { "stable" } else { "unstable" }
        );
        for c in &self.checks {
            s.push_str(&format!(
                "  {:6.2} Hz: De {:+.4} -> {:+.4} ({:.2}% change)\n",
                c.f,
                c.de_without,
                c.de_with,
                100.0 * c.relative_change()
            ));
        }
        s
    }
}

fn post_event_damping(
    scn: &Scenario,
    filter: Option<&BlockingFilter>,
    freqs: &[f64],
    opts: &ScanOptions,
) -> Result<Vec<f64>> {
    let mut s = scn.post_event();
    s.filter = filter.cloned();
    let mut plan = ScanPlan::from_settings(&s.scan, &[]);
    plan.frequencies = freqs.to_vec();
    plan.variant = ScanVariant::Restart;
    Ok(electrical_damping_curve(&s, &plan, opts)?
        .points
        .iter()
        .map(|p| p.de)
        .collect())
}

pub fn design_filter(scn: &Scenario, opts: &ScanOptions) -> Result<FilterDesign> {
    let set = &scn.filter_design;
    let f0 = scn.meta.base_frequency;
    let modal = modal_inertia_and_damping(&scn.shaft)?;
    let m = modal.modes.get(set.mode.wrapping_sub(1)).ok_or_else(|| {
        Error::Scenario(format!("filter_design.mode {} does not exist", set.mode))
    })?;
    let sides: &[Sideband] = match set.sideband {
        SidebandChoice::Auto => &[Sideband::Sub, Sideband::Super],
        SidebandChoice::Sub => &[Sideband::Sub],
        SidebandChoice::Super => &[Sideband::Super],
    };
    let mut candidates = Vec::new();
    let mut best: Option<(Sideband, BlockingFilter, f64)> = None;
    for &side in sides {
        let f = match design_blocking_filter(
            m.frequency_hz,
            f0,
            side,
            set.quality_factor,
            set.peak_impedance,
        ) {
            Ok(f) => f,
            Err(_) => continue,
        };
        if f.response(f0).norm() > MAX_BASE_FREQUENCY_SHARE * f.peak_impedance {
            continue;
        }
        let de = post_event_damping(scn, Some(&f), &[m.frequency_hz], opts)?[0];
        candidates.push((side, de));
        if best.as_ref().is_none_or(|b| de > b.2) {
            best = Some((side, f, de));
        }
    }
    let (sideband, filter, de_with) = best.ok_or_else(|| {
        Error::Scenario(format!(
            "no tank for mode {} keeps |Z({f0} Hz)| below {}% of its peak; raise filter_design.quality_factor",
            set.mode,
            100.0 * MAX_BASE_FREQUENCY_SHARE
        ))
    })?;
    let mut freqs = vec![m.frequency_hz];
    freqs.extend(set.check_frequencies.iter().copied());
    let mut sorted = freqs.clone();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let without = post_event_damping(scn, None, &sorted, opts)?;
    let with_f = post_event_damping(scn, Some(&filter), &set.check_frequencies_sorted(), opts)?;
    let at = |f: f64| without[sorted.iter().position(|&x| x == f).expect("scanned")];
    let checks = set
        .check_frequencies_sorted()
        .iter()
        .zip(&with_f)
        .map(|(&f, &w)| CheckPoint {
            f,
            de_without: at(f),
            de_with: w,
        })
        .collect();
    Ok(FilterDesign {
        base_frequency_share: filter.response(f0).norm() / filter.peak_impedance,
        filter,
        sideband,
        mode: set.mode,
        f_mode: m.frequency_hz,
        dm: m.mechanical_damping,
        candidates,
        de_without: at(m.frequency_hz),
        de_with,
        checks,
    })
}
