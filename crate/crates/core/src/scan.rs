//! Complex torque coefficient scans: perturb the mechanical torque at the generator rotor with a
//! small sinusoid, measure the electrical-torque and speed responses, and take
//! `De = Re(ΔTe/Δω)`, `Ke = Im(ΔTe/Δω)`.
//!
//! A shared unperturbed baseline run is subtracted sample by sample from every perturbed run, so
//! any residual drift of the operating point cancels.

use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::engine::{ChannelSet, Engine, EngineOptions, RunOptions, Tone};
use crate::error::{Error, Result};
use crate::scenario::{ScanSettings, ScanVariant, Scenario, ShaftRepresentation};
use crate::shaft::ModalResult;
use crate::signal::{fit_tones, measure_tone, Record};
use crate::trace::{fmt_num, SimTrace};

#[derive(Debug, Clone, PartialEq)]
pub struct ScanPlan {
    pub frequencies: Vec<f64>,
    /// pu of the scheduled mechanical torque (pu torque when none is scheduled).
    pub amplitude: f64,
    pub settle_periods: usize,
    pub min_settle_time: f64,
    pub measure_periods: usize,
    pub variant: ScanVariant,
    pub tones_per_batch: usize,
    pub shaft: ShaftRepresentation,
    pub dt: f64,
}

impl ScanPlan {
    /// Plan from the scenario's scan settings; `modes` (Hz) seed the refined grid when no explicit
    /// frequency list is given.
    pub fn from_settings(s: &ScanSettings, modes: &[f64]) -> Self {
        Self {
            frequencies: plan_frequencies(s, modes),
            amplitude: s.amplitude,
            settle_periods: s.settle_periods,
            min_settle_time: s.min_settle_time,
            measure_periods: s.measure_periods,
            variant: s.variant,
            tones_per_batch: s.tones_per_batch,
            shaft: s.shaft,
            dt: s.dt,
        }
    }

    fn settle(&self, f: f64) -> f64 {
        (self.settle_periods as f64 / f).max(self.min_settle_time)
    }

    fn measure(&self, f: f64) -> f64 {
        self.measure_periods as f64 / f
    }

    fn validate(&self, f0: f64) -> Result<()> {
        if self.frequencies.is_empty() {
            return Err(Error::Scenario("scan plan has no frequencies".into()));
        }
        let mut prev = 0.0;
        for &f in &self.frequencies {
            if !(f > 0.0 && f < 2.0 * f0) || f <= prev {
                return Err(Error::Scenario(format!(
                    "scan frequencies must be increasing, distinct and inside (0, {}) Hz; offending value {f}",
                    2.0 * f0
                )));
            }
            prev = f;
        }
        if !(self.amplitude > 0.0) || self.measure_periods == 0 || self.tones_per_batch == 0 {
            return Err(Error::Scenario(
                "scan amplitude, measure periods and tones per batch must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Coarse grid plus a refined grid around each mode, merged and de-duplicated at 1 mHz.
pub fn plan_frequencies(s: &ScanSettings, modes: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = if !s.frequencies.is_empty() {
        s.frequencies.clone()
    } else {
        let mut v = grid(s.coarse_start, s.coarse_stop, s.coarse_step);
        for &m in modes {
            v.extend(
                grid(
                    m - s.refine_halfwidth,
                    m + s.refine_halfwidth,
                    s.refine_step,
                )
                .into_iter()
                .filter(|&f| f >= s.coarse_start && f <= s.coarse_stop),
            );
        }
        v
    };
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    v
}

fn grid(a: f64, b: f64, step: f64) -> Vec<f64> {
    let n = ((b - a) / step + 1e-9).floor() as usize;
    // rounded to µHz so grids built from different anchors merge cleanly
    (0..=n)
        .map(|k| ((a + k as f64 * step) * 1e6).round() / 1e6)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingPoint {
    pub f: f64,
    pub de: f64,
    pub ke: f64,
    pub te_amplitude: f64,
    pub te_phase: f64,
    pub dw_amplitude: f64,
    pub dw_phase: f64,
    /// Limiter or converter current limit active during the measurement window.
    pub nonlinear: bool,
}

impl DampingPoint {
    pub fn from_phasors(f: f64, te: Complex64, dw: Complex64, nonlinear: bool) -> Self {
        let (ta, tp) = te.to_polar();
        let (wa, wp) = dw.to_polar();
        let ratio = ta / wa;
        Self {
            f,
            de: ratio * (tp - wp).cos(),
            ke: ratio * (tp - wp).sin(),
            te_amplitude: ta,
            te_phase: tp,
            dw_amplitude: wa,
            dw_phase: wp,
            nonlinear,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DampingCurve {
    pub points: Vec<DampingPoint>,
    pub variant: ScanVariant,
    pub amplitude: f64,
    pub settle_periods: usize,
    pub measure_periods: usize,
}

impl DampingCurve {
    /// Points usable for interpolation (not flagged nonlinear).
    pub fn valid(&self) -> impl Iterator<Item = &DampingPoint> {
        self.points.iter().filter(|p| !p.nonlinear)
    }

    /// Linear interpolation of De over valid points.
    pub fn de_at(&self, f: f64) -> Result<f64> {
        let pts: Vec<&DampingPoint> = self.valid().collect();
        let (lo, hi) = match (pts.first(), pts.last()) {
            (Some(a), Some(b)) => (a.f, b.f),
            _ => {
                return Err(Error::Coverage {
                    freq_hz: f,
                    lo: f64::NAN,
                    hi: f64::NAN,
                })
            }
        };
        if f < lo - 1e-9 || f > hi + 1e-9 {
            return Err(Error::Coverage { freq_hz: f, lo, hi });
        }
        let k = pts.partition_point(|p| p.f < f);
        if k == 0 {
            return Ok(pts[0].de);
        }
        if k == pts.len() {
            return Ok(pts[k - 1].de);
        }
        let (a, b) = (pts[k - 1], pts[k]);
        if (b.f - f).abs() < 1e-12 {
            return Ok(b.de);
        }
        Ok(a.de + (b.de - a.de) * (f - a.f) / (b.f - a.f))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "f_hz,de,ke,te_amplitude,te_phase,dw_amplitude,dw_phase,nonlinear"
        )?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                fmt_num(p.f),
                fmt_num(p.de),
                fmt_num(p.ke),
                fmt_num(p.te_amplitude),
                fmt_num(p.te_phase),
                fmt_num(p.dw_amplitude),
                fmt_num(p.dw_phase),
                p.nonlinear as u8
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut points = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(format!("damping CSV: {e}")))?;
            let num = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| {
                        Error::Parse(format!("damping CSV row {}: missing column {k}", i + 2))
                    })?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("damping CSV row {}: {e}", i + 2)))
            };
            points.push(DampingPoint {
                f: num(0)?,
                de: num(1)?,
                ke: num(2)?,
                te_amplitude: num(3)?,
                te_phase: num(4)?,
                dw_amplitude: num(5)?,
                dw_phase: num(6)?,
                nonlinear: num(7)? != 0.0,
            });
        }
        Ok(Self {
            points,
            variant: ScanVariant::Restart,
            amplitude: f64::NAN,
            settle_periods: 0,
            measure_periods: 0,
        })
    }
}

/// Progress journal: one line per finished point, keyed by a fingerprint of scenario and plan.
#[derive(Debug, Clone)]
pub struct Journal {
    path: PathBuf,
    fingerprint: String,
}

impl Journal {
    pub fn new(path: impl AsRef<Path>, scn: &Scenario, plan: &ScanPlan) -> Result<Self> {
        let text = format!("{}\n{:?}", scn.to_toml_string()?, plan);
        Ok(Self {
            path: path.as_ref().to_path_buf(),
            fingerprint: format!("{:016x}", fnv1a(text.as_bytes())),
        })
    }

    /// Points already recorded for this scenario and plan.
    pub fn load(&self) -> Result<BTreeMap<u64, DampingPoint>> {
        let mut out = BTreeMap::new();
        let text = match std::fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(e.into()),
        };
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == format!("# ssti-scan {}", self.fingerprint) => {}
            Some(_) => {
                return Err(Error::Journal(format!(
                    "{} belongs to a different scenario or plan; remove it to start over",
                    self.path.display()
                )))
            }
            None => return Ok(out),
        }
        for line in lines {
            let v: Vec<&str> = line.split(',').collect();
            // a torn final line from an interrupted write is ignored
            if v.len() != 6 {
                continue;
            }
            let p: Vec<f64> = match v[..5].iter().map(|s| s.parse::<f64>()).collect() {
                Ok(p) => p,
                Err(_) => continue,
            };
            let pt = DampingPoint::from_phasors(
                p[0],
                Complex64::new(p[1], p[2]),
                Complex64::new(p[3], p[4]),
                v[5] == "1",
            );
            out.insert(p[0].to_bits(), pt);
        }
        Ok(out)
    }

    fn append(&self, pts: &[(DampingPoint, Complex64, Complex64)]) -> Result<()> {
        let fresh = !self.path.exists();
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        let mut s = String::new();
        if fresh {
            s.push_str(&format!("# ssti-scan {}\n", self.fingerprint));
        }
        for (p, te, dw) in pts {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.f, te.re, te.im, dw.re, dw.im, p.nonlinear as u8
            ));
        }
        f.write_all(s.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }
}

fn fnv1a(b: &[u8]) -> u64 {
    b.iter().fold(0xcbf29ce484222325u64, |h, &x| {
        (h ^ x as u64).wrapping_mul(0x100000001b3)
    })
}

#[derive(Debug, Clone, Default)]
pub struct ScanOptions {
    pub journal: Option<PathBuf>,
    /// Worker threads; `None` uses rayon's global pool.
    pub jobs: Option<usize>,
}

struct Context<'a> {
    scn: &'a Scenario,
    eopt: EngineOptions,
    decimation: usize,
    amplitude: f64,
}

impl Context<'_> {
    fn run(&self, tones: Vec<Tone>, duration: f64) -> Result<SimTrace> {
        let mut e = Engine::with_options(self.scn, &self.eopt)?;
        // two spare samples so a window ending at `duration` is covered after decimation
        let tr = e.run(&RunOptions {
            duration: duration + 2.0 * self.decimation as f64 * self.eopt.dt,
            decimation: self.decimation,
            record_from: 0.0,
            channels: ChannelSet::Scan,
            tones,
        });
        Ok(tr)
    }
}

/// Runs `f` on a dedicated pool of `jobs` workers, or on rayon's global pool for `None`.
pub fn with_workers<T: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> Result<T> + Send,
) -> Result<T> {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Scenario(format!("worker pool: {e}")))?
            .install(f),
        None => f(),
    }
}

/// Runs the scan described by `plan` on `scn` and returns the curve sorted by frequency.
pub fn electrical_damping_curve(
    scn: &Scenario,
    plan: &ScanPlan,
    opts: &ScanOptions,
) -> Result<DampingCurve> {
    with_workers(opts.jobs, || scan_inner(scn, plan, opts))
}

fn scan_inner(scn: &Scenario, plan: &ScanPlan, opts: &ScanOptions) -> Result<DampingCurve> {
    let f0 = scn.meta.base_frequency;
    plan.validate(f0)?;
    let eopt = EngineOptions {
        dt: plan.dt,
        shaft: plan.shaft,
        divergence_limit: scn.simulation.divergence_limit,
    };
    let probe = Engine::with_options(scn, &eopt)?;
    let tm = probe.mechanical_torque();
    let amplitude = plan.amplitude * if tm.abs() > 1e-9 { tm.abs() } else { 1.0 };
    // keep 60 Hz content well sampled whatever the simulation step
    let decimation = ((1.0 / (100.0 * f0 * plan.dt)).floor() as usize).max(1);
    let ctx = Context {
        scn,
        eopt,
        decimation,
        amplitude,
    };

    let journal = match &opts.journal {
        Some(p) => Some(Journal::new(p, scn, plan)?),
        None => None,
    };
    let mut done = match &journal {
        Some(j) => j.load()?,
        None => BTreeMap::new(),
    };
    let todo: Vec<f64> = plan
        .frequencies
        .iter()
        .copied()
        .filter(|f| !done.contains_key(&f.to_bits()))
        .collect();

    if !todo.is_empty() {
        let jobs = schedule(plan, &todo);
        let longest = jobs.iter().map(|j| j.duration).fold(0.0, f64::max);
        let base = ctx.run(Vec::new(), longest)?;
        check_baseline(&base, f0)?;
        let record = |pts: &[(DampingPoint, Complex64, Complex64)]| -> Result<()> {
            if let Some(j) = &journal {
                j.append(pts)?;
            }
            Ok(())
        };
        let results: Vec<Result<Vec<(DampingPoint, Complex64, Complex64)>>> = jobs
            .par_iter()
            .map(|job| {
                let pts = run_job(&ctx, &base, job)?;
                record(&pts)?;
                Ok(pts)
            })
            .collect();
        for r in results {
            for (p, _, _) in r? {
                done.insert(p.f.to_bits(), p);
            }
        }
    }
    let mut points: Vec<DampingPoint> = plan
        .frequencies
        .iter()
        .filter_map(|f| done.get(&f.to_bits()).copied())
        .collect();
    points.sort_by(|a, b| a.f.total_cmp(&b.f));
    Ok(DampingCurve {
        points,
        variant: plan.variant,
        amplitude: plan.amplitude,
        settle_periods: plan.settle_periods,
        measure_periods: plan.measure_periods,
    })
}

fn check_baseline(base: &SimTrace, f0: f64) -> Result<()> {
    if let Some(d) = &base.divergence {
        return Err(Error::Settle(format!(
            "unperturbed run diverged at t = {:.3} s ({}); the scenario has no equilibrium to scan around",
            d.time, d.signal
        )));
    }
    let dw = base.require("dw_gen")?;
    let worst = dw.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    // 1e-6 pu of speed is far below any scan response and far above round-off
    if worst > 1e-6 {
        return Err(Error::Settle(format!(
            "unperturbed run drifts by {worst:.2e} pu of speed; the operating point is not an equilibrium at {f0} Hz base"
        )));
    }
    Ok(())
}

/// One engine run measuring one or more frequencies.
#[derive(Debug, Clone)]
struct Job {
    tones: Vec<Tone>,
    /// (frequency, window start, window length)
    windows: Vec<(f64, f64, f64)>,
    duration: f64,
    joint: bool,
}

fn schedule(plan: &ScanPlan, freqs: &[f64]) -> Vec<Job> {
    match plan.variant {
        ScanVariant::Restart => freqs
            .iter()
            .map(|&f| {
                let s = plan.settle(f);
                let m = plan.measure(f);
                Job {
                    tones: vec![Tone {
                        frequency: f,
                        amplitude: 1.0,
                        start: 0.0,
                        ramp: 0.5 * s,
                        stop: None,
                    }],
                    windows: vec![(f, s, m)],
                    duration: s + m,
                    joint: false,
                }
            })
            .collect(),
        ScanVariant::Progressive => {
            // one run; each tone ramps up, settles, is measured, then ramps down while the
            // next one starts
            let mut t = 0.0;
            let mut tones = Vec::new();
            let mut windows = Vec::new();
            for &f in freqs {
                let s = plan.settle(f);
                let m = plan.measure(f);
                tones.push(Tone {
                    frequency: f,
                    amplitude: 1.0,
                    start: t,
                    ramp: 0.5 * s,
                    stop: Some(t + s + m),
                });
                windows.push((f, t + s, m));
                t += s + m;
            }
            vec![Job {
                tones,
                windows,
                duration: t,
                joint: false,
            }]
        }
        ScanVariant::Multitone => batches(freqs, plan.tones_per_batch)
            .into_iter()
            .map(|b| {
                let fmin = b.iter().copied().fold(f64::INFINITY, f64::min);
                let s = plan.settle(fmin);
                let m = plan.measure(fmin);
                Job {
                    tones: b
                        .iter()
                        .map(|&f| Tone {
                            frequency: f,
                            amplitude: 1.0,
                            start: 0.0,
                            ramp: 0.5 * s,
                            stop: None,
                        })
                        .collect(),
                    windows: b.iter().map(|&f| (f, s, m)).collect(),
                    duration: s + m,
                    joint: true,
                }
            })
            .collect(),
    }
}

/// Tones closer than this (Hz) to a harmonic or intermodulation product of another in-batch
/// tone are kept apart.
const INTERMOD_GUARD: f64 = 0.5;
/// Minimum spacing of in-batch tones, Hz.
const MIN_SPACING: f64 = 2.0;

fn compatible(batch: &[f64], f: f64) -> bool {
    let near = |a: f64, b: f64| (a - b).abs() < INTERMOD_GUARD;
    for &a in batch {
        let (lo, hi) = if a < f { (a, f) } else { (f, a) };
        if hi - lo < MIN_SPACING || near(hi, 2.0 * lo) || near(hi, 3.0 * lo) {
            return false;
        }
        for &b in batch {
            if b == a {
                continue;
            }
            if near(f, a + b) || near(f, (a - b).abs()) || near(a, f + b) || near(a, (f - b).abs())
            {
                return false;
            }
        }
    }
    true
}

/// First-fit grouping into batches of at most `per` mutually compatible tones.
pub fn batches(freqs: &[f64], per: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for &f in freqs {
        match out.iter_mut().find(|b| b.len() < per && compatible(b, f)) {
            Some(b) => b.push(f),
            None => out.push(vec![f]),
        }
    }
    out
}

fn run_job(
    ctx: &Context<'_>,
    base: &SimTrace,
    job: &Job,
) -> Result<Vec<(DampingPoint, Complex64, Complex64)>> {
    let tones: Vec<Tone> = job
        .tones
        .iter()
        .map(|t| Tone {
            amplitude: ctx.amplitude,
            ..*t
        })
        .collect();
    let tr = ctx.run(tones, job.duration)?;
    if let Some(d) = &tr.divergence {
        return Err(Error::Divergence {
            signal: format!(
                "{} during scan at {:?} Hz",
                d.signal,
                job.windows.iter().map(|w| w.0).collect::<Vec<_>>()
            ),
            time: d.time,
        });
    }
    let n = tr.len();
    let diff = |name: &str| -> Result<Vec<f64>> {
        let a = tr.require(name)?;
        let b = base.require(name)?;
        Ok((0..n).map(|k| a[k] - b[k]).collect())
    };
    let te = diff("te")?;
    let dw = diff("dw_gen")?;
    let lim = tr.require("limiter_active")?;
    let cur = tr.require("current_limited")?;
    let dt = tr.sample_dt;
    let rte = Record {
        t0: 0.0,
        dt,
        x: &te,
    };
    let rdw = Record {
        t0: 0.0,
        dt,
        x: &dw,
    };
    let nonlinear_in = |start: f64, len: f64| {
        let k0 = (start / dt).floor() as usize;
        let k1 = (((start + len) / dt).ceil() as usize).min(n);
        (k0..k1).any(|k| lim[k] > 0.5 || cur[k] > 0.5)
    };
    let mut out = Vec::with_capacity(job.windows.len());
    if job.joint {
        let (_, s, m) = job.windows[0];
        let freqs: Vec<f64> = job.windows.iter().map(|w| w.0).collect();
        let end = (s + m).min(tr.time[n - 1]);
        let pte = fit_tones(rte, &freqs, s, end)?;
        let pdw = fit_tones(rdw, &freqs, s, end)?;
        let nl = nonlinear_in(s, m);
        for (i, &f) in freqs.iter().enumerate() {
            out.push((
                DampingPoint::from_phasors(f, pte[i], pdw[i], nl),
                pte[i],
                pdw[i],
            ));
        }
    } else {
        for &(f, s, m) in &job.windows {
            let pte = measure_tone(rte, f, s, m)?;
            let pdw = measure_tone(rdw, f, s, m)?;
            out.push((
                DampingPoint::from_phasors(f, pte, pdw, nonlinear_in(s, m)),
                pte,
                pdw,
            ));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeVerdict {
    /// 1-based mode number.
    pub mode: usize,
    pub f: f64,
    pub de: f64,
    pub dm: f64,
    pub dt: f64,
    pub stable: bool,
    /// Mode lies above the base frequency.
    pub supersynchronous: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityVerdict {
    pub modes: Vec<ModeVerdict>,
    pub stable: bool,
    pub conservative: bool,
}

impl StabilityVerdict {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "mode,f_hz,de,dm,dt,stable,supersynchronous")?;
        for m in &self.modes {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                m.mode,
                fmt_num(m.f),
                fmt_num(m.de),
                fmt_num(m.dm),
                fmt_num(m.dt),
                m.stable as u8,
                m.supersynchronous as u8
            )?;
        }
        Ok(())
    }
}

/// `Dt = De + Dm > 0` per mode (strict). In conservative mode `Dm` is taken as zero.
pub fn stability_verdict(
    curve: &DampingCurve,
    modal: &ModalResult,
    base_frequency: f64,
    conservative: bool,
) -> Result<StabilityVerdict> {
    let mut modes = Vec::with_capacity(modal.modes.len());
    for (i, m) in modal.modes.iter().enumerate() {
        let de = curve.de_at(m.frequency_hz)?;
        let dm = if conservative {
            0.0
        } else {
            m.mechanical_damping
        };
        let dt = de + dm;
        modes.push(ModeVerdict {
            mode: i + 1,
            f: m.frequency_hz,
            de,
            dm,
            dt,
            stable: dt > 0.0,
            supersynchronous: m.frequency_hz > base_frequency,
        });
    }
    Ok(StabilityVerdict {
        stable: modes.iter().all(|m| m.stable),
        modes,
        conservative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shaft::TorsionalMode;

    fn curve(pts: &[(f64, f64)]) -> DampingCurve {
        DampingCurve {
            points: pts
                .iter()
                .map(|&(f, de)| DampingPoint {
                    f,
                    de,
                    ke: 0.0,
                    te_amplitude: 0.0,
                    te_phase: 0.0,
                    dw_amplitude: 0.0,
                    dw_phase: 0.0,
                    nonlinear: false,
                })
                .collect(),
            variant: ScanVariant::Restart,
            amplitude: 1e-3,
            settle_periods: 10,
            measure_periods: 20,
        }
    }

    fn modal(f: &[(f64, f64)]) -> ModalResult {
        ModalResult {
            modes: f
                .iter()
                .map(|&(f, dm)| TorsionalMode {
                    frequency_hz: f,
                    sigma: 0.0,
                    modal_inertia: 1.0,
                    mechanical_damping: dm,
                    shape: vec![],
                })
                .collect(),
        }
    }

    #[test]
    fn verdict_interpolates_and_is_strict() {
        let c = curve(&[(14.0, -1.0), (14.2, -1.4)]);
        let v = stability_verdict(&c, &modal(&[(14.1, 0.98)]), 50.0, false).unwrap();
        assert!((v.modes[0].de + 1.2).abs() < 1e-12);
        assert!((v.modes[0].dt + 0.22).abs() < 1e-12);
        assert!(!v.stable);
        let c = curve(&[(10.0, -0.5), (20.0, -0.5)]);
        let v = stability_verdict(&c, &modal(&[(15.0, 0.5)]), 50.0, false).unwrap();
        assert_eq!(v.modes[0].dt, 0.0);
        assert!(!v.stable, "zero total damping is not stable");
    }

    #[test]
    fn conservative_ignores_mechanical_damping() {
        let c = curve(&[(10.0, 0.1), (20.0, 0.3)]);
        let v = stability_verdict(&c, &modal(&[(15.0, 100.0)]), 50.0, true).unwrap();
        assert!(v.stable && v.modes[0].dm == 0.0);
        let c = curve(&[(10.0, -0.1), (20.0, 0.3)]);
        let v = stability_verdict(&c, &modal(&[(11.0, 100.0)]), 50.0, true).unwrap();
        assert!(!v.stable);
    }

    #[test]
    fn uncovered_mode_is_an_error() {
        let c = curve(&[(10.0, 0.1), (20.0, 0.3)]);
        let e = stability_verdict(&c, &modal(&[(25.0, 1.0)]), 50.0, false).unwrap_err();
        assert!(matches!(e, Error::Coverage { .. }));
    }

    #[test]
    fn default_plan_covers_modes_with_refinement() {
        let s = ScanSettings::default();
        let f = plan_frequencies(&s, &[14.07]);
        assert!(f.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(f.first(), Some(&1.0));
        assert_eq!(f.last(), Some(&59.0));
        assert!(f.iter().any(|&x| (x - 14.07).abs() < 1e-9));
        assert!(f.iter().any(|&x| (x - 13.07).abs() < 1e-9));
        assert_eq!(f.iter().filter(|&&x| x > 13.0 && x < 15.1).count(), 23);
    }

    #[test]
    fn batches_avoid_harmonics_and_intermodulation() {
        let b = batches(&[7.0, 10.0, 14.0, 17.0, 24.0, 30.0], 3);
        for batch in &b {
            assert!(batch.len() <= 3);
            for &a in batch {
                for &c in batch {
                    if a < c {
                        assert!((c - 2.0 * a).abs() >= INTERMOD_GUARD, "{batch:?}");
                    }
                }
            }
        }
        let all: usize = b.iter().map(Vec::len).sum();
        assert_eq!(all, 6);
    }
}
