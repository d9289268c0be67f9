use ssti::plant::standin::StandIn;
use ssti::scan::{electrical_damping_curve, DampingCurve, ScanOptions, ScanPlan};
use ssti::scenario::{aramon, ScanVariant, Scenario};

fn stand_in_case(si: StandIn) -> Scenario {
    let mut s = aramon();
    s.stand_in = Some(si);
    s
}

fn plan_for(s: &Scenario, freqs: Vec<f64>, variant: ScanVariant) -> ScanPlan {
    let mut p = ScanPlan::from_settings(&s.scan, &[]);
    p.frequencies = freqs;
    p.variant = variant;
    p
}

fn scan(s: &Scenario, p: &ScanPlan) -> DampingCurve {
    electrical_damping_curve(s, p, &ScanOptions::default()).unwrap()
}

#[test]
fn constant_coefficient_stand_in_reads_its_damping() {
    // pure damping torque: the real part is 2 at every frequency
    let s = stand_in_case(StandIn {
        inertia: 3.0,
        damping: 2.0,
        synchronizing: 0.0,
        lag_gain: 0.0,
        lag_time: 0.01,
    });
    let c = scan(
        &s,
        &plan_for(&s, vec![5.0, 14.07, 30.0, 55.0], ScanVariant::Restart),
    );
    for p in &c.points {
        assert!((p.de - 2.0).abs() < 0.02, "{} Hz: {}", p.f, p.de);
    }
}

#[test]
fn stand_in_scan_matches_closed_form_at_fifty_frequencies() {
    let si = StandIn {
        inertia: 2.5,
        damping: 1.5,
        synchronizing: 1.2,
        lag_gain: -0.8,
        lag_time: 0.01,
    };
    let s = stand_in_case(si.clone());
    let freqs: Vec<f64> = (0..50).map(|k| 1.0 + 58.0 * k as f64 / 49.0).collect();
    let c = scan(&s, &plan_for(&s, freqs, ScanVariant::Restart));
    assert_eq!(c.points.len(), 50);
    for p in &c.points {
        let want = si.transfer(p.f, 50.0);
        assert!(
            (p.de / want.re - 1.0).abs() < 0.01,
            "{} Hz: {} vs {}",
            p.f,
            p.de,
            want.re
        );
        assert!(!p.nonlinear);
    }
}

/// Frequencies where the bundled case has well-separated, non-vanishing damping.
const PROBE: [f64; 5] = [10.0, 14.07, 22.092, 30.0, 40.0];

fn close(a: &DampingCurve, b: &DampingCurve, rel: f64) {
    for (x, y) in a.points.iter().zip(&b.points) {
        assert_eq!(x.f, y.f);
        assert!(
            (x.de - y.de).abs() <= rel * y.de.abs(),
            "{} Hz: {} vs {}",
            x.f,
            x.de,
            y.de
        );
    }
}

#[test]
fn scan_variants_agree_on_the_bundled_case() {
    let s = aramon().post_event();
    let r = scan(&s, &plan_for(&s, PROBE.to_vec(), ScanVariant::Restart));
    let p = scan(&s, &plan_for(&s, PROBE.to_vec(), ScanVariant::Progressive));
    let m = scan(&s, &plan_for(&s, PROBE.to_vec(), ScanVariant::Multitone));
    close(&p, &r, 0.02);
    close(&m, &r, 0.02);
}

#[test]
fn halving_the_perturbation_keeps_the_curve() {
    let s = aramon().pre_event();
    let plan = plan_for(&s, PROBE.to_vec(), ScanVariant::Restart);
    let mut half = plan.clone();
    half.amplitude *= 0.5;
    close(&scan(&s, &half), &scan(&s, &plan), 0.02);
}

#[test]
fn longer_settling_does_not_move_the_curve() {
    let s = aramon().pre_event();
    let plan = plan_for(&s, PROBE.to_vec(), ScanVariant::Restart);
    let mut long = plan.clone();
    long.settle_periods *= 2;
    long.min_settle_time *= 2.0;
    close(&scan(&s, &long), &scan(&s, &plan), 0.005);
}

#[test]
fn journal_resumes_to_the_same_curve() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scan.journal");
    let s = aramon().pre_event();
    let plan = plan_for(&s, vec![14.07, 22.092], ScanVariant::Restart);
    let opts = ScanOptions {
        journal: Some(path.clone()),
        jobs: Some(1),
    };
    let first = electrical_damping_curve(&s, &plan, &opts).unwrap();
    let lines = std::fs::read_to_string(&path).unwrap().lines().count();
    assert!(lines >= 2);
    let again = electrical_damping_curve(&s, &plan, &opts).unwrap();
    assert_eq!(first, again);
    assert_eq!(
        std::fs::read_to_string(&path).unwrap().lines().count(),
        lines
    );
}

#[test]
fn curve_csv_round_trips() {
    let s = stand_in_case(StandIn {
        inertia: 3.0,
        damping: 0.7,
        synchronizing: 0.4,
        lag_gain: 0.0,
        lag_time: 0.01,
    });
    let c = scan(
        &s,
        &plan_for(&s, vec![3.0, 7.0, 11.0], ScanVariant::Restart),
    );
    let mut buf = Vec::new();
    c.write_csv(&mut buf).unwrap();
    let back = DampingCurve::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.points.len(), 3);
    for (x, y) in back.points.iter().zip(&c.points) {
        assert_eq!(x.f, y.f);
        assert_eq!(x.de, y.de);
    }
}
