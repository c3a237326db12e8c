use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use koebe_core::fixtures::{annulus_family, rings_fixture, two_squares};
use koebe_core::{ComplementComponent, DomainSpec, PlanePoint};
use serde_json::{json, Value};

fn koebe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_koebe"))
        .args(args)
        .env("TOOL_LOG", "quiet")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("JSON on stdout")
}

#[test]
fn analyze_circle_domain_reports_disk_kappa() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "d.json",
        r#"{"components": [
            {"id": "a", "shape": {"type": "disk", "center": [0, 0], "radius": 1}},
            {"id": "b", "shape": {"type": "disk", "center": [3, 0], "radius": 0.5}},
            {"id": "c", "shape": {"type": "point", "at": [0, 2]}}]}"#,
    );
    let o = koebe(&["analyze", "--in", s(&f)]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    let k = v["nondegeneracy"]["kappa_min"].as_f64().unwrap();
    assert!((k - PI / 4.0).abs() < 1e-12);
    assert!(v.get("gap_ratio").is_none());

    let o = koebe(&["analyze", "--in", s(&f), "--b", "a", "--delta", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout_json(&o)["gap_ratio"]["rho"].is_number());
}

#[test]
fn overlapping_components_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "d.json",
        r#"{"components": [
            {"id": "a", "shape": {"type": "disk", "center": [0, 0], "radius": 1}},
            {"id": "b", "shape": {"type": "disk", "center": [1, 0], "radius": 1}}]}"#,
    );
    let o = koebe(&["analyze", "--in", s(&f)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("OverlappingComponents"), "{err}");
}

#[test]
fn missing_input_and_unwritable_output_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let o = koebe(&["analyze", "--in", s(&dir.path().join("absent.json"))]);
    assert_eq!(o.status.code(), Some(4));
    let f = write(dir.path(), "d.json", &two_squares().to_json());
    let out = dir.path().join("no/such/dir/out.svg");
    let o = koebe(&["render", "--in", s(&f), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn modulus_of_annulus_problem() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, family, refinement) = annulus_family(2.0 * PI);
    let problem = json!({ "domain": spec.to_raw(), "family": family, "refinement": refinement });
    let f = write(dir.path(), "p.json", &problem.to_string());
    let svg = dir.path().join("m.svg");
    let o = koebe(&["modulus", "--in", s(&f), "--n", "256", "--svg", s(&svg)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let el = stdout_json(&o)["el"].as_f64().unwrap();
    assert!((el - 1.0).abs() <= 0.05, "{el}");
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<rect"));
}

#[test]
fn modulus_non_convergence_writes_bracket() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, family, refinement) = annulus_family(PI);
    let problem = json!({ "domain": spec.to_raw(), "family": family, "refinement": refinement });
    let f = write(dir.path(), "p.json", &problem.to_string());
    let o = koebe(&["modulus", "--in", s(&f), "--n", "64", "--tol", "1e-6", "--max-iter", "2"]);
    assert_eq!(o.status.code(), Some(3));
    let v = stdout_json(&o);
    assert_eq!(v["status"], "MaxIterExceeded");
    assert!(v["lower"].as_f64().unwrap() <= v["upper"].as_f64().unwrap());
}

#[test]
fn modulus_from_domain_and_point() {
    let dir = tempfile::tempdir().unwrap();
    let spec: DomainSpec = koebe_core::domain::validate_domain(koebe_core::domain::RawDomain {
        components: vec![ComplementComponent::disk("b", PlanePoint::ORIGIN, 0.5)],
    })
    .unwrap();
    let f = write(dir.path(), "d.json", &spec.to_json());
    let o = koebe(&["modulus", "--in", s(&f), "--b", "b", "--q", "0.7,0", "--n", "64", "--tol", "0.05"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout_json(&o)["el"].as_f64().unwrap() > 0.0);
}

#[test]
fn uniformize_two_squares() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "d.json", &two_squares().to_json());
    let svg = dir.path().join("u.svg");
    let o = koebe(&["uniformize", "--in", s(&f), "--svg", s(&svg)]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert_eq!(v["disks"].as_array().unwrap().len(), 2);
    assert_eq!(v["points"].as_array().unwrap().len(), 1);
    assert_eq!(v["converged"], true);
    assert!(svg.exists() && dir.path().join("u.before.svg").exists());

    // the circle domain renders back
    let c = write(dir.path(), "c.json", &String::from_utf8(o.stdout).unwrap());
    let o = koebe(&["render", "--in", s(&c)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8(o.stdout).unwrap().matches("<circle").count(), 3);
}

#[test]
fn exhaust_rings_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "d.json", &rings_fixture().to_json());
    let run = || {
        let o = koebe(&["exhaust", "--in", s(&f), "--b", "b", "--seed", "0"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    let a = run();
    let lines: Vec<Value> = a.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(lines.len() >= 2);
    assert!(lines[0]["hausdorff_delta"].is_null());
    assert!(lines[1]["hausdorff_delta"]["b"].is_number());
    assert_eq!(a, run());
}

#[test]
fn render_empty_and_single_disk() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "e.json", r#"{"components": []}"#);
    let o = koebe(&["render", "--in", s(&empty)]);
    assert_eq!(o.status.code(), Some(0));
    let svg = String::from_utf8(o.stdout).unwrap();
    assert!(svg.starts_with("<svg") && !svg.contains("<circle"));

    let one = write(
        dir.path(),
        "o.json",
        r#"{"components": [{"id": "d", "shape": {"type": "disk", "center": [1, 2], "radius": 0.5}}]}"#,
    );
    let out = dir.path().join("o.svg");
    assert_eq!(koebe(&["render", "--in", s(&one), "--out", s(&out)]).status.code(), Some(0));
    let first = std::fs::read(&out).unwrap();
    assert_eq!(koebe(&["render", "--in", s(&one), "--out", s(&out)]).status.code(), Some(0));
    assert_eq!(first, std::fs::read(&out).unwrap());
}
