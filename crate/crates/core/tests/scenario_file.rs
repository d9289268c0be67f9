use ssti::scenario::{aramon, Scenario, ARAMON};
use ssti::Error;

#[test]
fn save_then_load_gives_the_same_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("case.scn");
    let s = aramon();
    s.save(&path).unwrap();
    let back = Scenario::load(&path).unwrap();
    assert_eq!(back, s);
    back.save(&path).unwrap();
    assert_eq!(Scenario::load(&path).unwrap(), s);
}

#[test]
fn unknown_key_is_rejected_with_its_position() {
    let text = ARAMON.replacen("[generator]", "[generator]\nxd_typo = 1.0", 1);
    assert_ne!(text, ARAMON);
    let line = text.lines().position(|l| l.starts_with("xd_typo")).unwrap() + 1;
    match Scenario::from_toml_str(&text) {
        Err(Error::Parse(m)) => {
            assert!(m.contains("xd_typo"), "{m}");
            assert!(
                m.contains(&format!("line {line}")) && m.contains("column"),
                "{m}"
            );
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn physical_invariants_are_checked_on_load() {
    let mut s = aramon();
    s.shaft.masses[0] = -1.0;
    let text = s.to_toml_string().unwrap();
    assert!(Scenario::from_toml_str(&text).is_err());
}
