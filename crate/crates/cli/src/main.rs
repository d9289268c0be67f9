mod plot;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ssti::engine::{Engine, RunOptions};
use ssti::filter_design::design_filter;
use ssti::protection::{
    first_trip, oscillation_magnitude, protection_check, write_decision_csv, ModeLog,
};
use ssti::scan::{
    electrical_damping_curve, stability_verdict, DampingCurve, ScanOptions, ScanPlan,
    StabilityVerdict,
};
use ssti::scenario::{ScanVariant, Scenario, ShaftRepresentation};
use ssti::screening::{screen, ScreeningReport, LCC_THRESHOLD};
use ssti::shaft::{modal_inertia_and_damping, ModalResult};
use ssti::signal::{growth_rate, Record};
use ssti::trace::SimTrace;
use ssti::tuner::{TuneReport, Tuner};

use plot::Series;

#[derive(Parser)]
#[command(
    name = "ssti",
    version,
    about = "Subsynchronous torsional interaction studies"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Global {
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Also write SVG plots
    #[arg(long, global = true)]
    plot: bool,
    /// Worker threads for scans and tuning (default: available parallelism)
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Restart,
    Progressive,
    Multitone,
}

impl From<Variant> for ScanVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Restart => ScanVariant::Restart,
            Variant::Progressive => ScanVariant::Progressive,
            Variant::Multitone => ScanVariant::Multitone,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Shaft {
    MultiMass,
    SingleMass,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Case {
    Pre,
    Post,
    Both,
}

#[derive(Subcommand)]
enum Cmd {
    /// Unit interaction factor screening
    Screen {
        scenario: PathBuf,
        #[arg(long, default_value_t = LCC_THRESHOLD)]
        threshold: f64,
    },
    /// Torsional modes, modal inertia and mechanical damping
    Modal { scenario: PathBuf },
    /// Time-domain run of the scenario as written
    Simulate {
        scenario: PathBuf,
        /// s; defaults to the scenario's duration
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, value_enum)]
        shaft: Option<Shaft>,
    },
    /// Electrical damping scan before and/or after the short-circuit events
    Scan {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        case: Case,
        #[arg(long, value_enum)]
        variant: Option<Variant>,
        /// Resume file; completed points are reused on restart
        #[arg(long)]
        journal: Option<PathBuf>,
    },
    /// Stability verdict from a damping curve; exit 2 when a mode is unstable
    Verdict {
        scenario: PathBuf,
        curve: PathBuf,
        /// Ignore mechanical damping
        #[arg(long)]
        conservative: bool,
    },
    /// Blocking filter for the configured mode
    FilterDesign { scenario: PathBuf },
    /// Phase and gain tuning of the subsynchronous damping controller
    TuneSsdc { scenario: PathBuf },
    /// Torsional relay on a recorded trace; exit 2 on trip
    ProtectionCheck { scenario: PathBuf, trace: PathBuf },
    /// Full study: screening through protection, with a consolidated report
    All {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        variant: Option<Variant>,
        #[arg(long)]
        conservative: bool,
    },
}

type Res<T> = Result<T, String>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn msg<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn load(path: &Path) -> Res<Scenario> {
    // read and parse errors already name the file
    Scenario::load(path).map_err(|e| match e {
        ssti::Error::Parse(_) | ssti::Error::Scenario(_) => e.to_string(),
        e => format!("{}: {e}", path.display()),
    })
}

struct Ctx {
    g: Global,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.g.out.join(name)
    }

    fn create(&self, name: &str) -> Res<BufWriter<File>> {
        let p = self.path(name);
        File::create(&p)
            .map(BufWriter::new)
            .map_err(|e| format!("{}: {e}", p.display()))
    }

    fn write_with(
        &self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> ssti::Result<()>,
    ) -> Res<()> {
        let mut w = self.create(name)?;
        f(&mut w).map_err(msg)?;
        w.flush().map_err(msg)
    }

    fn write_text(&self, name: &str, text: &str) -> Res<()> {
        fs::write(self.path(name), text).map_err(|e| format!("{}: {e}", self.path(name).display()))
    }

    fn plot(&self, name: &str, title: &str, xl: &str, yl: &str, series: &[Series<'_>]) -> Res<()> {
        if self.g.plot {
            plot::lines(&self.path(name), title, xl, yl, series)?;
        }
        Ok(())
    }

    fn scan_options(&self, journal: Option<PathBuf>) -> ScanOptions {
        ScanOptions {
            journal,
            jobs: self.g.jobs,
        }
    }
}

fn run(cli: Cli) -> Res<u8> {
    fs::create_dir_all(&cli.global.out)
        .map_err(|e| format!("{}: {e}", cli.global.out.display()))?;
    let ctx = Ctx { g: cli.global };
    match cli.cmd {
        Cmd::Screen {
            scenario,
            threshold,
        } => {
            let r = do_screen(&ctx, &load(&scenario)?, threshold)?;
            print!("{}", r.render());
            Ok(0)
        }
        Cmd::Modal { scenario } => {
            let m = do_modal(&ctx, &load(&scenario)?)?;
            print!("{}", render_modal(&m));
            Ok(0)
        }
        Cmd::Simulate {
            scenario,
            duration,
            shaft,
        } => {
            let mut scn = load(&scenario)?;
            if let Some(s) = shaft {
                scn.simulation.shaft = match s {
                    Shaft::MultiMass => ShaftRepresentation::MultiMass,
                    Shaft::SingleMass => ShaftRepresentation::SingleMass,
                };
            }
            if let Some(d) = duration {
                scn.simulation.duration = d;
            }
            let tr = do_simulate(&ctx, &scn, "trace")?;
            if let Some(d) = &tr.divergence {
                println!("run diverged: `{}` at t = {:.4} s", d.signal, d.time);
            }
            if let Some(g) = post_event_growth(&scn, &tr)? {
                println!(
                    "growth rate at {:.3} Hz after the last event: {g:+.4} 1/s",
                    g_mode1(&scn)?
                );
            }
            println!("wrote {}", ctx.path("trace.csv").display());
            Ok(0)
        }
        Cmd::Scan {
            scenario,
            case,
            variant,
            journal,
        } => {
            let mut scn = load(&scenario)?;
            if let Some(v) = variant {
                scn.scan.variant = v.into();
            }
            let modal = modal_inertia_and_damping(&scn.shaft).map_err(msg)?;
            let mut curves = Vec::new();
            for (c, name) in [(Case::Pre, "pre"), (Case::Post, "post")] {
                if case == c || case == Case::Both {
                    let j = journal
                        .as_ref()
                        .map(|p| suffixed(p, name, case == Case::Both));
                    curves.push((name, do_scan(&ctx, &scn, &modal, name, j)?));
                }
            }
            plot_curves(&ctx, &curves)?;
            for (name, c) in &curves {
                println!(
                    "wrote {} ({} points)",
                    ctx.path(&format!("damping_{name}.csv")).display(),
                    c.points.len()
                );
            }
            Ok(0)
        }
        Cmd::Verdict {
            scenario,
            curve,
            conservative,
        } => {
            let scn = load(&scenario)?;
            let modal = modal_inertia_and_damping(&scn.shaft).map_err(msg)?;
            let f = File::open(&curve).map_err(|e| format!("{}: {e}", curve.display()))?;
            let c = DampingCurve::read_csv(f).map_err(|e| format!("{}: {e}", curve.display()))?;
            let v = do_verdict(&ctx, &scn, &c, &modal, conservative, "verdict")?;
            print!("{}", render_verdict(&v));
            Ok(if v.stable { 0 } else { 2 })
        }
        Cmd::FilterDesign { scenario } => {
            let scn = load(&scenario)?;
            let d = design_filter(&scn, &ctx.scan_options(None)).map_err(msg)?;
            ctx.write_with("filter_response.csv", |w| {
                d.write_response_csv(w, 2.0 * scn.meta.base_frequency)
            })?;
            ctx.write_with("filter_check.csv", |w| d.write_check_csv(w))?;
            ctx.write_text("filter.toml", &d.scenario_fragment().map_err(msg)?)?;
            let pts: Vec<(f64, f64)> = (1..=(20.0 * scn.meta.base_frequency) as usize)
                .map(|k| (k as f64 / 10.0, d.filter.response(k as f64 / 10.0).norm()))
                .collect();
            ctx.plot(
                "filter_response.svg",
                "Blocking filter impedance",
                "f (Hz)",
                "|Z| (pu)",
                &[Series {
                    name: "|Z|",
                    points: pts,
                }],
            )?;
            print!("{}", d.summary());
            Ok(0)
        }
        Cmd::TuneSsdc { scenario } => {
            let scn = load(&scenario)?;
            let r = do_tune(&ctx, &scn)?;
            print!("{}", r.summary());
            Ok(0)
        }
        Cmd::ProtectionCheck { scenario, trace } => {
            let scn = load(&scenario)?;
            let f = File::open(&trace).map_err(|e| format!("{}: {e}", trace.display()))?;
            let tr = SimTrace::read_csv(f).map_err(|e| format!("{}: {e}", trace.display()))?;
            let modal = modal_inertia_and_damping(&scn.shaft).map_err(msg)?;
            let r = do_protection(&ctx, &scn, &modal, &tr, "protection")?;
            print!("{}", render_protection(&r));
            Ok(if r.tripped() { 2 } else { 0 })
        }
        Cmd::All {
            scenario,
            variant,
            conservative,
        } => {
            let mut scn = load(&scenario)?;
            if let Some(v) = variant {
                scn.scan.variant = v.into();
            }
            all(&ctx, &scn, conservative)
        }
    }
}

fn suffixed(p: &Path, name: &str, both: bool) -> PathBuf {
    if !both {
        return p.to_path_buf();
    }
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("journal");
    let ext = p
        .extension()
        .and_then(|s| s.to_str())
        .map(|e| format!(".{e}"))
        .unwrap_or_default();
    p.with_file_name(format!("{stem}_{name}{ext}"))
}

fn g_mode1(scn: &Scenario) -> Res<f64> {
    let m = modal_inertia_and_damping(&scn.shaft).map_err(msg)?;
    m.modes
        .first()
        .map(|m| m.frequency_hz)
        .ok_or_else(|| "shaft has no torsional mode".to_string())
}

fn do_screen(ctx: &Ctx, scn: &Scenario, threshold: f64) -> Res<ScreeningReport> {
    let r = screen(scn, threshold).map_err(msg)?;
    ctx.write_with("screening.csv", |w| r.write_csv(w))?;
    Ok(r)
}

fn do_modal(ctx: &Ctx, scn: &Scenario) -> Res<ModalResult> {
    let m = modal_inertia_and_damping(&scn.shaft).map_err(msg)?;
    ctx.write_with("modal.csv", |w| m.write_csv(w))?;
    Ok(m)
}

fn render_modal(m: &ModalResult) -> String {
    let mut s = String::from("mode     f (Hz)     H_m (s)       D_m (pu)\n");
    for (i, x) in m.modes.iter().enumerate() {
        s.push_str(&format!(
            "{:>4} {:10.3} {:11.4} {:14.4e}\n",
            i + 1,
            x.frequency_hz,
            x.modal_inertia,
            x.mechanical_damping
        ));
    }
    s
}

fn do_simulate(ctx: &Ctx, scn: &Scenario, name: &str) -> Res<SimTrace> {
    let mut e = Engine::new(scn).map_err(msg)?;
    let tr = e.run(&RunOptions::from_scenario(scn));
    ctx.write_with(&format!("{name}.csv"), |w| tr.write_csv(w))?;
    let dw = tr.require("dw_gen").map_err(msg)?;
    let pts = tr.time.iter().copied().zip(dw.iter().copied()).collect();
    ctx.plot(
        &format!("{name}.svg"),
        "Generator speed deviation",
        "t (s)",
        "dw (pu)",
        &[Series {
            name: "dw_gen",
            points: pts,
        }],
    )?;
    Ok(tr)
}

/// Growth rate of the first torsional mode in the generator speed, measured from 0.5 s after
/// the last short-circuit event to the end of the record.
fn post_event_growth(scn: &Scenario, tr: &SimTrace) -> Res<Option<f64>> {
    if tr.divergence.is_some() || tr.is_empty() {
        return Ok(None);
    }
    let start = scn
        .network
        .grid
        .events
        .iter()
        .map(|e| e.time)
        .fold(0.0, f64::max)
        + 0.5;
    let dw = tr.require("dw_gen").map_err(msg)?;
    let rec = Record {
        t0: tr.time[0],
        dt: tr.sample_dt,
        x: dw,
    };
    Ok(growth_rate(rec, g_mode1(scn)?, start, f64::INFINITY).ok())
}

fn do_scan(
    ctx: &Ctx,
    scn: &Scenario,
    modal: &ModalResult,
    name: &str,
    journal: Option<PathBuf>,
) -> Res<DampingCurve> {
    let s = if name == "pre" {
        scn.pre_event()
    } else {
        scn.post_event()
    };
    let plan = ScanPlan::from_settings(&s.scan, &modal.frequencies());
    let c = electrical_damping_curve(&s, &plan, &ctx.scan_options(journal)).map_err(msg)?;
    ctx.write_with(&format!("damping_{name}.csv"), |w| c.write_csv(w))?;
    Ok(c)
}

fn plot_curves(ctx: &Ctx, curves: &[(&str, DampingCurve)]) -> Res<()> {
    let series: Vec<Series<'_>> = curves
        .iter()
        .map(|(n, c)| Series {
            name: if *n == "pre" {
                "pre-event"
            } else {
                "post-event"
            },
            points: c.valid().map(|p| (p.f, p.de)).collect(),
        })
        .collect();
    ctx.plot(
        "damping.svg",
        "Electrical damping",
        "f (Hz)",
        "De (pu)",
        &series,
    )
}

fn do_verdict(
    ctx: &Ctx,
    scn: &Scenario,
    c: &DampingCurve,
    modal: &ModalResult,
    conservative: bool,
    name: &str,
) -> Res<StabilityVerdict> {
    let v = stability_verdict(c, modal, scn.meta.base_frequency, conservative).map_err(msg)?;
    ctx.write_with(&format!("{name}.csv"), |w| v.write_csv(w))?;
    Ok(v)
}

fn render_verdict(v: &StabilityVerdict) -> String {
    let mut s = String::from("mode     f (Hz)          De          Dm          Dt  verdict\n");
    for m in &v.modes {
        s.push_str(&format!(
            "{:>4} {:10.3} {:11.4} {:11.4e} {:11.4e}  {}{}\n",
            m.mode,
            m.f,
            m.de,
            m.dm,
            m.dt,
            if m.stable { "stable" } else { "UNSTABLE" },
            if m.supersynchronous {
                " (supersynchronous)"
            } else {
                ""
            }
        ));
    }
    s.push_str(if v.stable {
        "overall: stable\n"
    } else {
        "overall: UNSTABLE\n"
    });
    s
}

fn do_tune(ctx: &Ctx, scn: &Scenario) -> Res<TuneReport> {
    let mut t = Tuner::new(scn).map_err(msg)?;
    t.scan = ctx.scan_options(None);
    let r = t.run().map_err(msg)?;
    ctx.write_with("ssdc_phase.csv", |w| r.write_phase_csv(w))?;
    ctx.write_with("ssdc_gain.csv", |w| r.write_gain_csv(w))?;
    ctx.write_with("ssdc_modes.csv", |w| r.write_modes_csv(w))?;
    ctx.write_text("ssdc.toml", &r.scenario_fragment().map_err(msg)?)?;
    ctx.plot(
        "ssdc_phase.svg",
        "SSDC phase sweep",
        "phase shift (deg)",
        "De (pu)",
        &[Series {
            name: "De",
            points: r.phase_table.iter().map(|p| (p.phase_deg, p.de)).collect(),
        }],
    )?;
    Ok(r)
}

/// The relay watches the subsynchronous modes only.
fn do_protection(
    ctx: &Ctx,
    scn: &Scenario,
    modal: &ModalResult,
    tr: &SimTrace,
    name: &str,
) -> Res<Relay> {
    let modes: Vec<(usize, f64, f64)> = modal
        .modes
        .iter()
        .enumerate()
        .filter(|(_, m)| m.frequency_hz < scn.meta.base_frequency)
        .map(|(i, m)| (i + 1, m.frequency_hz, m.modal_inertia))
        .collect();
    let logs = protection_check(tr, &scn.protection, &modes).map_err(msg)?;
    ctx.write_with(&format!("{name}.csv"), |w| write_decision_csv(&logs, w))?;
    let x = tr.require(&scn.protection.channel).map_err(msg)?;
    let peaks = modes
        .iter()
        .map(|m| {
            Ok(oscillation_magnitude(x, m.1, tr.sample_dt)?
                .into_iter()
                .fold(0.0, f64::max))
        })
        .collect::<ssti::Result<_>>()
        .map_err(msg)?;
    Ok(Relay {
        logs,
        peaks,
        pickup: scn.protection.pickup,
    })
}

struct Relay {
    logs: Vec<ModeLog>,
    peaks: Vec<f64>,
    pickup: f64,
}

impl Relay {
    fn tripped(&self) -> bool {
        self.logs.iter().any(|l| first_trip(&l.events).is_some())
    }
}

fn render_protection(r: &Relay) -> String {
    let mut s = String::new();
    for (l, peak) in r.logs.iter().zip(&r.peaks) {
        let state = match (first_trip(&l.events), l.events.first()) {
            (Some(t), _) => format!("TRIP at t = {t:.3} s"),
            (None, Some(e)) => format!(
                "armed at t = {:.3} s, {} decision(s), no trip",
                e.time,
                l.events.len()
            ),
            (None, None) => "never armed".to_string(),
        };
        s.push_str(&format!(
            "mode {} ({:.3} Hz): {state}; peak envelope {:.3e} pu (pickup {} pu)\n",
            l.mode, l.f, peak, r.pickup
        ));
    }
    s
}

fn fmt_growth(g: Option<f64>) -> String {
    g.map_or("n/a".into(), |g| format!("{g:+.4} 1/s"))
}

fn all(ctx: &Ctx, scn: &Scenario, conservative: bool) -> Res<u8> {
    let mut rep = String::new();
    let w = |rep: &mut String, s: &str| rep.push_str(s);
    w(
        &mut rep,
        &format!(
            "# Torsional interaction study: {}\n\n{}\n\n",
            scn.meta.name, scn.meta.description
        ),
    );

    eprintln!("[1/8] screening");
    let scr = do_screen(ctx, scn, LCC_THRESHOLD)?;
    w(
        &mut rep,
        &format!("## Screening\n\n```\n{}```\n\n", scr.render()),
    );

    eprintln!("[2/8] modal analysis");
    let modal = do_modal(ctx, scn)?;
    w(
        &mut rep,
        &format!("## Torsional modes\n\n```\n{}```\n\n", render_modal(&modal)),
    );

    eprintln!("[3/8] time-domain runs");
    let tr = do_simulate(ctx, scn, "trace")?;
    let mut single = scn.clone();
    single.simulation.shaft = ShaftRepresentation::SingleMass;
    let tr_single = do_simulate(ctx, &single, "trace_single_mass")?;
    let f1 = g_mode1(scn)?;
    w(
        &mut rep,
        &format!(
            "## Time domain\n\nGrowth rate at {f1:.3} Hz after the last short-circuit event:\n\n\
             - multi-mass shaft: {}\n- single-mass rotor: {}\n\n",
            fmt_growth(post_event_growth(scn, &tr)?),
            fmt_growth(post_event_growth(scn, &tr_single)?)
        ),
    );

    eprintln!("[4/8] damping scans");
    let pre = do_scan(ctx, scn, &modal, "pre", None)?;
    let post = do_scan(ctx, scn, &modal, "post", None)?;
    plot_curves(ctx, &[("pre", pre.clone()), ("post", post.clone())])?;

    eprintln!("[5/8] verdicts");
    let v_pre = do_verdict(ctx, scn, &pre, &modal, conservative, "verdict_pre")?;
    let v_post = do_verdict(ctx, scn, &post, &modal, conservative, "verdict_post")?;
    w(
        &mut rep,
        &format!(
            "## Stability verdict{}\n\nBefore the events:\n\n```\n{}```\n\nAfter the events:\n\n```\n{}```\n\n",
            if conservative { " (mechanical damping ignored)" } else { "" },
            render_verdict(&v_pre),
            render_verdict(&v_post)
        ),
    );

    eprintln!("[6/8] blocking filter");
    let d = design_filter(scn, &ctx.scan_options(None)).map_err(msg)?;
    ctx.write_with("filter_response.csv", |w| {
        d.write_response_csv(w, 2.0 * scn.meta.base_frequency)
    })?;
    ctx.write_with("filter_check.csv", |w| d.write_check_csv(w))?;
    ctx.write_text("filter.toml", &d.scenario_fragment().map_err(msg)?)?;
    w(
        &mut rep,
        &format!("## Blocking filter\n\n```\n{}```\n\n", d.summary()),
    );

    eprintln!("[7/8] SSDC tuning");
    let t = do_tune(ctx, scn)?;
    let mut tuned = scn.clone();
    tuned.ssdc = Some(t.params.clone());
    let tr_ssdc = do_simulate(ctx, &tuned, "trace_ssdc")?;
    w(
        &mut rep,
        &format!(
            "## Subsynchronous damping controller\n\n```\n{}```\n\nGrowth rate at {f1:.3} Hz with the controller: {}\n\n",
            t.summary(),
            fmt_growth(post_event_growth(&tuned, &tr_ssdc)?)
        ),
    );

    eprintln!("[8/8] protection");
    let p0 = do_protection(ctx, scn, &modal, &tr, "protection")?;
    let p1 = do_protection(ctx, &tuned, &modal, &tr_ssdc, "protection_ssdc")?;
    w(
        &mut rep,
        &format!(
            "## Torsional relay\n\nAs built:\n\n```\n{}```\n\nWith the tuned controller:\n\n```\n{}```\n",
            render_protection(&p0),
            render_protection(&p1)
        ),
    );

    ctx.write_text("report.md", &rep)?;
    println!("{rep}");
    Ok(if v_post.stable { 0 } else { 2 })
}
