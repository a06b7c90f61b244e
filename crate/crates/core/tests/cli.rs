use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use proptest::prelude::*;

use rankmfg::grid::{GridFunction, TimeGrid};
use rankmfg::io::{read_csv, read_grid_csv, regime_columns, write_grid_csv, RunManifest};

const DESK: &str = r#"{
  "efforts": [0.5, 1.0, 2.0],
  "costs": [0.0, 0.05, 0.2],
  "switching_costs": [[0, 0.1, 0.15], [0.1, 0, 0.1], [0.15, 0.1, 0]],
  "reward": {"family": "power", "params": {"a": 1.0, "p": 2.0}},
  "grid": {"h": 0.01, "tail_tol": 1e-6},
  "eta": 0.2,
  "fp": {"max_iters": 15},
  "seed": 3
}"#;

const SINGLE: &str = r#"{
  "efforts": [1.0],
  "costs": [0.0],
  "switching_costs": [[0]],
  "reward": {"family": "linear", "params": {"a": 1.0, "b": 1.0}},
  "grid": {"h": 0.001, "tail_tol": 1e-8}
}"#;

fn rankmfg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rankmfg")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.json", DESK);
    assert_eq!(rankmfg(&["validate", "-c", &good]).status.code(), Some(0));

    let zero = write(
        dir.path(),
        "zero.json",
        &DESK.replace("[0.5, 1.0, 2.0]", "[0.0, 1.0, 2.0]"),
    );
    let o = rankmfg(&["validate", "-c", &zero]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("0 ∉ 𝕌"), "{}", stdout(&o));

    let broken = write(dir.path(), "broken.json", "{\n  \"efforts\": [1,\n}");
    let o = rankmfg(&["validate", "-c", &broken]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let unknown = write(dir.path(), "unknown.json", &DESK.replace("\"seed\"", "\"sead\""));
    assert_eq!(rankmfg(&["validate", "-c", &unknown]).status.code(), Some(2));
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", DESK);
    assert_eq!(rankmfg(&["fp", "-c", &cfg, "--max-iters", "0"]).status.code(), Some(2));
    assert_eq!(
        rankmfg(&["simulate", "-c", &cfg, "--samples", "0"]).status.code(),
        Some(2)
    );
    assert_eq!(rankmfg(&["fp"]).status.code(), Some(2));
    let out = dir.path().join("o").display().to_string();
    assert_eq!(
        rankmfg(&["sweep", "-c", &cfg, "-o", &out, "--etas", "0.1,0.2"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn fp_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", DESK);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = rankmfg(&["fp", "-c", &cfg, "-o", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.command, "fp");
    assert_eq!(manifest.seed, 3);
    assert_eq!(manifest.config_sha256, rankmfg::io::sha256_hex(DESK.as_bytes()));
    for name in [
        "iterations.csv",
        "rho.csv",
        "value.csv",
        "policy.csv",
        "mass.csv",
        "fp.json",
    ] {
        assert!(manifest.outputs.iter().any(|o| o == name), "{name} not listed");
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs"
        );
    }
    let iters = read_csv(&a.join("iterations.csv")).unwrap();
    assert_eq!(iters.header, vec!["n", "exploitability", "sup_change", "payoff"]);
    assert_eq!(iters.column("n").unwrap()[0], 1.0);
    let value = read_csv(&a.join("value.csv")).unwrap();
    assert_eq!(value.header, vec!["t", "V_1", "V_2", "V_3"]);
}

#[test]
fn single_regime_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SINGLE);
    let out = dir.path().join("fp");
    let o = rankmfg(&["fp", "-c", &cfg, "-o", out.to_str().unwrap(), "--stride", "10"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let iters = read_csv(&out.join("iterations.csv")).unwrap();
    assert_eq!(iters.rows[0][0], 1.0);
    assert!(iters.rows[0][1] <= 1e-8);

    let sim = dir.path().join("sim");
    let o = rankmfg(&[
        "simulate",
        "-c",
        &cfg,
        "-o",
        sim.to_str().unwrap(),
        "--samples",
        "100000",
        "--stride",
        "50",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sim.join("simulation.json")).unwrap()).unwrap();
    assert!(summary["sup_gap_rho"].as_f64().unwrap() <= 0.01);
    assert!(stdout(&o).contains("sup rho gap"));

    let ver = dir.path().join("verify");
    let o = rankmfg(&[
        "verify",
        "-c",
        &cfg,
        "-o",
        ver.to_str().unwrap(),
        "--samples",
        "200",
        "--stride",
        "50",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ver.join("verification.json")).unwrap()).unwrap();
    assert_eq!(report["support"], serde_json::json!([1]));
}

#[test]
fn sweep_and_solvers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", DESK);
    let fp = dir.path().join("fp");
    assert_eq!(
        rankmfg(&["fp", "-c", &cfg, "-o", fp.to_str().unwrap()]).status.code(),
        Some(0)
    );
    let rho = fp.join("rho.csv").display().to_string();

    let hjb = dir.path().join("hjb");
    let o = rankmfg(&["solve-hjb", "-c", &cfg, "-o", hjb.to_str().unwrap(), "--rho", &rho]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // same rho and eta as the final fp evaluation
    assert_eq!(
        fs::read(hjb.join("value.csv")).unwrap(),
        fs::read(fp.join("value.csv")).unwrap()
    );

    let vi = dir.path().join("vi");
    let o = rankmfg(&["solve-vi", "-c", &cfg, "-o", vi.to_str().unwrap(), "--rho", &rho]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let sweep = dir.path().join("sweep");
    let o = rankmfg(&[
        "sweep",
        "-c",
        &cfg,
        "-o",
        sweep.to_str().unwrap(),
        "--etas",
        "0.3",
        "--stride",
        "100",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let gaps = read_csv(&sweep.join("gaps.csv")).unwrap();
    assert_eq!(gaps.rows.len(), 1);
    assert_eq!(gaps.rows[0][0], 0.3);
    assert!(sweep.join("eta_0.3").join("rho.csv").exists());
}

#[test]
fn solver_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    // h u_max >= 1 breaks the obstacle scheme's step restriction
    let cfg = write(dir.path(), "c.json", &DESK.replace("\"h\": 0.01", "\"h\": 0.6"));
    let o = rankmfg(&["solve-vi", "-c", &cfg, "-o", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    // tiny eta overflows the Gibbs exponent
    let o = rankmfg(&[
        "solve-hjb",
        "-c",
        &write(dir.path(), "d.json", DESK),
        "--eta",
        "1e-5",
        "-o",
        dir.path().join("p").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn csv_round_trip(values in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 22)) {
        let dir = tempfile::tempdir().unwrap();
        let grid = TimeGrid::new(0.37, 10).unwrap();
        let f = GridFunction::new(grid, 2, values).unwrap();
        let p = dir.path().join("f.csv");
        write_grid_csv(&p, &regime_columns("x", 2), &[&f], 1).unwrap();
        let (_, back) = read_grid_csv(&p, &grid).unwrap();
        prop_assert_eq!(back, f);
    }
}
