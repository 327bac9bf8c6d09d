use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn interfms(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_interfms"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CARBON_PAIR: &str =
    r#"[{"name": "C12", "mass_kg": 1.99e-26}, {"name": "C14", "mass_kg": 2.3216666666666667e-26}]"#;

#[test]
fn design_carbon_pair_scales_with_velocity() {
    let dir = TempDir::new().unwrap();
    let species = write(&dir, "species.json", CARBON_PAIR);
    for (v, target) in [("100", 1e-9), ("1", 1e-7)] {
        let out_path = dir.path().join(format!("design_{v}.json"));
        let out = interfms(&[
            "design",
            s(&species),
            "--velocity",
            v,
            "--out",
            s(&out_path),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let design = read_json(&out_path);
        let dl = design["delta_l_m"][1].as_f64().unwrap();
        assert!((dl - target).abs() / target < 0.02, "ΔL = {dl}");
        assert!(dir
            .path()
            .join(format!("design_{v}.json.manifest.json"))
            .exists());
    }
}

#[test]
fn design_then_verify() {
    let dir = TempDir::new().unwrap();
    let species = write(&dir, "species.json", CARBON_PAIR);
    let design = dir.path().join("d.json");
    assert_eq!(
        code(&interfms(&[
            "design",
            s(&species),
            "--velocity",
            "100",
            "--out",
            s(&design)
        ])),
        0
    );
    let out = interfms(&["verify", s(&design)]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("VALID"));

    let mut tampered = read_json(&design);
    tampered["delta_l_m"][1] = Value::from(tampered["delta_l_m"][1].as_f64().unwrap() * 1.01);
    let bad = write(&dir, "bad.json", &tampered.to_string());
    let report = dir.path().join("residuals.json");
    let out = interfms(&["verify", s(&bad), "--out", s(&report)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("INVALID"));
    assert_eq!(read_json(&report)["valid"], Value::Bool(false));
}

#[test]
fn design_mmi_width_adds_coupler() {
    let dir = TempDir::new().unwrap();
    let species = write(
        &dir,
        "s.json",
        r#"[{"name":"a","mass_u":12},{"name":"b","mass_u":16},{"name":"c","mass_u":20}]"#,
    );
    let out_path = dir.path().join("d.json");
    let out = interfms(&[
        "design",
        s(&species),
        "--velocity",
        "1",
        "--mmi-width",
        "1e-6",
        "--out",
        s(&out_path),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let d = read_json(&out_path);
    let lam = 6.626_070_15e-34 / (12.0 * 1.660_539_066_60e-27);
    let expected = 4e-12 / (lam * 3.0);
    let got = d["coupler"]["length_m"].as_f64().unwrap();
    assert!((got - expected).abs() / expected < 1e-12);
}

#[test]
fn incommensurable_masses_exit_two() {
    let dir = TempDir::new().unwrap();
    let species = write(
        &dir,
        "s.json",
        r#"[{"name":"a","mass_kg":1e-26},{"name":"b","mass_kg":1.4142135623730951e-26}]"#,
    );
    let report = dir.path().join("r.json");
    let out = interfms(&[
        "design",
        s(&species),
        "--velocity",
        "10",
        "--out",
        s(&report),
    ]);
    assert_eq!(code(&out), 2);
    assert_eq!(read_json(&report)["feasible"], Value::Bool(false));
    assert_eq!(
        read_json(&dir.path().join("r.json.manifest.json"))["exit_code"],
        2
    );
}

#[test]
fn infeasible_ratios_report_residuals() {
    let dir = TempDir::new().unwrap();
    let species = write(
        &dir,
        "s.json",
        r#"[{"name":"a","mass_u":1},{"name":"b","mass_u":2},{"name":"c","mass_u":4}]"#,
    );
    let report = dir.path().join("r.json");
    let out = interfms(&[
        "design",
        s(&species),
        "--velocity",
        "10",
        "--out",
        s(&report),
    ]);
    assert_eq!(code(&out), 2);
    let r = read_json(&report);
    let residuals = r["residuals"].as_array().unwrap();
    assert_eq!(residuals.len(), 2);
    for arm in residuals {
        assert!(arm["min_residual_cycles"].as_f64().unwrap() > 0.3);
    }
}

#[test]
fn sweep_single_point_is_perfect() {
    let out = interfms(&[
        "sweep",
        "--n",
        "3",
        "--delta1-range",
        "0,0",
        "--delta2-range",
        "0,0",
        "--steps",
        "1",
    ]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("delta1_rad,delta2_rad,p00"));
    let row: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    assert_eq!(row[..2], [0.0, 0.0]);
    assert!((row[2] - 1.0).abs() < 1e-12);
    assert!(lines.next().is_none());
}

fn p00_column(path: &Path) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn sweep_quadrant_and_full_square() {
    let dir = TempDir::new().unwrap();
    let a = 2.0 * std::f64::consts::PI / 15.0;
    let quadrant = dir.path().join("q.csv");
    let range = format!("0,{a}");
    let out = interfms(&[
        "sweep",
        "--delta1-range",
        &range,
        "--delta2-range",
        &range,
        "--steps",
        "101",
        "--out",
        s(&quadrant),
    ]);
    assert_eq!(code(&out), 0);
    let p = p00_column(&quadrant);
    assert_eq!(p.len(), 101 * 101);
    let min = p.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(min >= 0.96, "min p00 {min}");

    // Opposite-sign errors on the two arms are worse than either alone.
    let full = dir.path().join("f.csv");
    let range = format!("-{a},{a}");
    let out = interfms(&[
        "sweep",
        "--delta1-range",
        &range,
        "--delta2-range",
        &range,
        "--steps",
        "101",
        "--out",
        s(&full),
    ]);
    assert_eq!(code(&out), 0);
    let min = p00_column(&full).into_iter().fold(f64::INFINITY, f64::min);
    let corner = 1.0 / 3.0 + 2.0 / 9.0 * (2.0 * a.cos() + (2.0 * a).cos());
    assert!((min - corner).abs() < 1e-12, "{min} vs {corner}");
}

#[test]
fn sweep_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let out = interfms(&[
            "sweep",
            "--ratios",
            "1,1.0833333333333333,1.1666666666666667",
            "--delta1-range",
            "-0.3,0.3",
            "--delta2-range",
            "-0.2,0.4",
            "--steps",
            "21",
            "--all-columns",
            "--out",
            s(p),
        ]);
        assert_eq!(code(&out), 0);
    }
    let text = fs::read(&a).unwrap();
    assert_eq!(text, fs::read(&b).unwrap());
    let header = String::from_utf8(text)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert!(header.starts_with("delta1_rad,delta2_rad,p00,p01,p02,p10"));
}

#[test]
fn sweep_rejects_bad_ranges() {
    assert_eq!(code(&interfms(&["sweep", "--delta1-range", "0.5,0.1"])), 1);
    assert_eq!(code(&interfms(&["sweep", "--steps", "0"])), 1);
    assert_eq!(code(&interfms(&["sweep", "--delta1-range", "abc"])), 1);
    assert_eq!(
        code(&interfms(&["sweep", "--n", "3", "--ratios", "1,2"])),
        1
    );
}

fn config(dir: &TempDir, name: &str, abundances: &str, errors: &str) -> PathBuf {
    write(
        dir,
        name,
        &format!(
            r#"{{"species": [{{"name":"C12","mass_u":12}},{{"name":"C13","mass_u":13}},{{"name":"C14","mass_u":14}}],
                "velocity_mps": 100, "abundances": {abundances}, "total_particles": 200000, "seed": 11{errors}}}"#
        ),
    )
}

#[test]
fn simulate_pure_species_without_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c.json", "[1, 0, 0]", "");
    let out_path = dir.path().join("r.json");
    assert_eq!(
        code(&interfms(&["simulate", s(&cfg), "--out", s(&out_path)])),
        0
    );
    let r = read_json(&out_path);
    let counts: Vec<u64> = r["counts"]["counts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c.as_u64().unwrap())
        .collect();
    assert_eq!(counts, vec![200000, 0, 0]);
    assert_eq!(r["reconstruction"]["abundances"][0].as_f64(), Some(1.0));
}

#[test]
fn simulate_rare_isotope_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let errors = r#", "errors": {"delta_phi_rad": [0.41887902047863906, 0.41887902047863906]}"#;
    let cfg = config(&dir, "c.json", "[0.98, 0.01, 0.01]", errors);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        assert_eq!(code(&interfms(&["simulate", s(&cfg), "--out", s(p)])), 0);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let r = read_json(&a);
    let rec = &r["reconstruction"];
    for k in 0..3 {
        let est = rec["abundances"][k].as_f64().unwrap();
        let sd = rec["uncertainty"][k].as_f64().unwrap();
        let truth = [0.98, 0.01, 0.01][k];
        assert!((est - truth).abs() <= 5.0 * sd, "species {k}: {est} ± {sd}");
    }
    let manifest = read_json(&dir.path().join("a.json.manifest.json"));
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["command"], "simulate");
    assert!(manifest["constants"]["planck_j_s"].as_f64().is_some());
}

#[test]
fn simulate_rejects_bad_config() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "c.json", "[0.5, 0.5, 0.5]", "");
    assert_eq!(code(&interfms(&["simulate", s(&cfg)])), 1);
    let cfg = write(&dir, "u.json", r#"{"species": [], "bogus": 1}"#);
    assert_eq!(code(&interfms(&["simulate", s(&cfg)])), 1);
    assert_eq!(
        code(&interfms(&["simulate", "/nonexistent/config.json"])),
        1
    );
}

#[test]
fn montecarlo_zero_and_small_noise() {
    let dir = TempDir::new().unwrap();
    let species = write(
        &dir,
        "s.json",
        r#"[{"name":"a","mass_u":12},{"name":"b","mass_u":16},{"name":"c","mass_u":20}]"#,
    );
    let design = dir.path().join("d.json");
    assert_eq!(
        code(&interfms(&[
            "design",
            s(&species),
            "--velocity",
            "10",
            "--out",
            s(&design)
        ])),
        0
    );

    let zero = dir.path().join("z.json");
    assert_eq!(
        code(&interfms(&[
            "montecarlo",
            s(&design),
            "--sigma-l",
            "0",
            "--trials",
            "5",
            "--out",
            s(&zero)
        ])),
        0
    );
    for p in read_json(&zero)["mean_diagonal"].as_array().unwrap() {
        assert!((p.as_f64().unwrap() - 1.0).abs() < 1e-12);
    }

    let noisy = dir.path().join("n.json");
    let args = [
        "montecarlo",
        s(&design),
        "--sigma-l",
        "1e-12",
        "--trials",
        "200",
        "--seed",
        "3",
        "--out",
        s(&noisy),
    ];
    assert_eq!(code(&interfms(&args)), 0);
    let summary = read_json(&noisy);
    for p in summary["mean_diagonal"].as_array().unwrap() {
        let p = p.as_f64().unwrap();
        assert!(p < 1.0 && p > 0.9, "{p}");
    }
    assert_eq!(summary["trials"], 200);
}

#[test]
fn ams_compare_reports_radius_and_separation() {
    let dir = TempDir::new().unwrap();
    let species = write(
        &dir,
        "s.json",
        r#"[{"name":"C12","mass_u":12},{"name":"C14","mass_u":14}]"#,
    );
    let out_path = dir.path().join("a.json");
    let out = interfms(&[
        "ams-compare",
        s(&species),
        "--field",
        "1",
        "--out",
        s(&out_path),
    ]);
    assert_eq!(code(&out), 0);
    let r = read_json(&out_path);
    let m = 12.0 * 1.660_539_066_60e-27;
    let radius = m * 1e5 / 1.602_176_634e-19;
    assert!((r["rows"][0]["radius_m"].as_f64().unwrap() - radius).abs() / radius < 1e-12);
    let dr = r["rows"][1]["delta_r_vs_reference_m"].as_f64().unwrap();
    assert!((dr - radius / 6.0).abs() / dr < 1e-9);
    assert!(r["interf_delta_l_m"].as_f64().unwrap() > 0.0);
}

#[test]
fn help_mentions_units_and_usage_errors_exit_one() {
    let out = interfms(&["design", "--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("m/s") && text.contains("rad"));
    let out = interfms(&["sweep", "--help"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("rad"));
    assert_eq!(code(&interfms(&["frobnicate"])), 1);
    assert_eq!(code(&interfms(&["design"])), 1);
}
