use std::path::Path;

use pinball::scenario::{load_config, parse_config, serialize_config, ConfigError, ScenarioKind};
use proptest::prelude::*;

fn shipped() -> Vec<std::path::PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "cfg"))
        .collect();
    v.sort();
    v
}

#[test]
fn shipped_configs_round_trip() {
    let paths = shipped();
    assert!(paths.len() >= 6);
    for p in paths {
        let cfg = load_config(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        let again = parse_config(&serialize_config(&cfg)).unwrap();
        assert_eq!(cfg, again, "{}", p.display());
    }
}

#[test]
fn unknown_keys_are_reported_with_lines() {
    let err = parse_config("scenario = calibrate\nbarrier.wdith = 0.3\n# note\ngrid.m = 8\n")
        .unwrap_err();
    let issues = err.issues();
    let found: Vec<_> = issues
        .iter()
        .filter(|i| i.message.contains("unknown"))
        .map(|i| (i.line, i.key.as_str()))
        .collect();
    assert_eq!(found, vec![(2, "barrier.wdith"), (4, "grid.m")]);
}

#[test]
fn negative_sigma_is_rejected_with_its_line() {
    let err = parse_config("scenario = calibrate\npacket.sigma = -0.5\n").unwrap_err();
    assert!(matches!(err, ConfigError::Invalid(_)));
    let issue = err
        .issues()
        .iter()
        .find(|i| i.key == "packet.sigma")
        .unwrap();
    assert_eq!(issue.line, 2);
}

fn float(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    lo..hi
}

fn config_text() -> impl Strategy<Value = String> {
    let kind = prop::sample::select(ScenarioKind::ALL.to_vec());
    (
        kind,
        float(0.6, 1.5),
        float(5.0, 12.0),
        float(0.05, 0.4),
        prop::option::of(float(1.0, 150.0)),
        float(2e-4, 2e-3),
        any::<u64>(),
        1usize..500,
        float(1e-9, 1e-4),
        prop::collection::vec(float(0.0, 0.999), 1..4),
        (float(0.1, 0.9), float(1e-4, 0.05), 1usize..=16),
    )
        .prop_map(
            |(kind, sigma, k, width, height, dt, seed, count, eps, q0, (target, tol, levels))| {
                let mut s = format!("scenario = {kind}\n");
                if kind.dims() == 1 {
                    s += &format!("packet.sigma = {sigma}\npacket.momentum = {k}\n");
                }
                s += &format!("barrier.width = {width}\n");
                match height {
                    Some(h) => s += &format!("barrier.height = {h}\n"),
                    None => s += "barrier.height = auto\n",
                }
                s += &format!(
                    "time.dt = {dt}\nparticles.seed = {seed}\nmeasure.eps_sep = {eps}\n\
                     calibration.target = {target}\ncalibration.tol = {tol}\n"
                );
                if kind == ScenarioKind::PinballMeasured {
                    let q: Vec<String> = q0.iter().map(|q| q.to_string()).collect();
                    s += &format!(
                        "particles.q0 = {}\nmeasure.levels = {levels}\n",
                        q.join(", ")
                    );
                } else {
                    s += &format!("particles.count = {count}\n");
                }
                s
            },
        )
}

proptest! {
    #[test]
    fn serialize_then_parse_is_identity(text in config_text()) {
        let cfg = parse_config(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        let out = serialize_config(&cfg);
        let again = parse_config(&out).map_err(|e| TestCaseError::fail(format!("{e}\n{out}")))?;
        prop_assert_eq!(&cfg, &again);
        prop_assert_eq!(serialize_config(&again), out);
    }

    #[test]
    fn non_positive_sigma_never_parses(sigma in -5.0f64..=0.0) {
        let text = format!("scenario = single_barrier\nparticles.count = 1\npacket.sigma = {sigma}\n");
        let err = parse_config(&text).unwrap_err();
        prop_assert!(err.issues().iter().any(|i| i.key == "packet.sigma" && i.line == 3));
    }
}
