use std::path::{Path, PathBuf};

use assert_cmd::Command;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn polytube() -> Command {
    let mut c = Command::cargo_bin("polytube").unwrap();
    c.env_remove("POLYTUBE_TOL");
    c
}

fn run_in(dir: &Path, scenario: &str) -> assert_cmd::assert::Assert {
    polytube()
        .args(["--threads", "1", "--out-dir"])
        .arg(dir)
        .arg("run")
        .arg(scenarios().join(scenario))
        .assert()
}

#[test]
fn trace_alternates_facets() {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), "square_trace.json").success();
    let text = std::fs::read_to_string(dir.path().join("square_trace.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "event,x0,x1,facet,length");
    let facets: Vec<&str> = lines.map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(facets.len(), 20);
    assert!(facets.windows(2).all(|w| w[0] != w[1]));
}

#[test]
fn enumerate_writes_three_tubes() {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), "square_enumerate.json").success();
    let atlas: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("square_atlas.json")).unwrap(),
    )
    .unwrap();
    let tubes = atlas.as_array().unwrap();
    assert_eq!(tubes.len(), 3);
    for t in tubes {
        for key in [
            "word",
            "x0",
            "v",
            "L",
            "rotation_angles",
            "cross_section",
            "maximal",
        ] {
            assert!(t.get(key).is_some(), "missing {key}");
        }
    }
    assert!(dir.path().join("square_atlas.summary.csv").exists());
}

#[test]
fn sum_check_ratio_column() {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), "square_sum_check.json").success();
    let text = std::fs::read_to_string(dir.path().join("square_sum_check.csv")).unwrap();
    let ratios: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(ratios.len(), 4);
    let (lo, hi) = ratios
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
    assert!(lo > 0.0 && hi / lo < 10.0);
}

#[test]
fn reruns_are_byte_identical() {
    for s in [
        "golden_disc_torus.json",
        "square_enumerate.json",
        "rotation_density_n.json",
    ] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_in(a.path(), s).success();
        run_in(b.path(), s).success();
        for entry in std::fs::read_dir(a.path()).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(
                std::fs::read(a.path().join(&name)).unwrap(),
                std::fs::read(b.path().join(&name)).unwrap(),
                "{s}: {name:?}"
            );
        }
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"kind": "trace", "inputs": {}, "extra": true}"#).unwrap();
    polytube().arg("run").arg(&bad).assert().code(2);
    polytube()
        .arg("run")
        .arg(dir.path().join("absent.json"))
        .assert()
        .code(3);

    let missing_poly = dir.path().join("missing_poly.json");
    std::fs::write(
        &missing_poly,
        r#"{"kind": "enumerate", "inputs": {"polytope": {"file": "none.json"}, "eps": 0.2, "max_word_period": 4, "max_length": 5}}"#,
    )
    .unwrap();
    polytube().arg("run").arg(&missing_poly).assert().code(3);

    let wrong = dir.path().join("wrong_count.json");
    std::fs::write(
        &wrong,
        r#"{"kind": "enumerate", "inputs": {"polytope": {"builtin": "unit_square"}, "eps": 0.2,
            "max_word_period": 4, "max_length": 5, "expect_count": 7}, "output_path": "atlas.json"}"#,
    )
    .unwrap();
    polytube().arg("run").arg(&wrong).assert().code(4);
}

#[test]
fn validate_polytopes() {
    for (f, needle) in [
        ("unit_square.json", "rational (group order 4)"),
        ("triangular_prism.json", "5 facets, 6 vertices"),
        ("regular_tetrahedron.json", "irrational suspected"),
    ] {
        let out = polytube()
            .arg("validate")
            .arg(scenarios().join("polytopes").join(f))
            .assert()
            .success();
        let text = String::from_utf8(out.get_output().stdout.clone()).unwrap();
        assert!(text.contains(needle), "{text}");
    }
    let dir = tempfile::tempdir().unwrap();
    let open = dir.path().join("open.json");
    std::fs::write(
        &open,
        r#"{"dim": 2, "halfspaces": [{"normal": [1, 0], "offset": 1}]}"#,
    )
    .unwrap();
    polytube().arg("validate").arg(&open).assert().code(2);
}

#[test]
fn tolerance_from_environment() {
    let out = polytube()
        .env("POLYTUBE_TOL", "1e-8")
        .arg("validate")
        .arg(scenarios().join("polytopes/unit_square.json"))
        .assert()
        .success();
    assert!(String::from_utf8_lossy(&out.get_output().stdout).contains("4 vertices"));
}
