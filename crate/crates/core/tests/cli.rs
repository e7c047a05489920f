use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subharmonic")).args(args).output().expect("spawn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn reproduce_into(dir: &Path) -> Output {
    let out = bin(&["reproduce", "fig2", "--output_dir", dir.to_str().unwrap(), "--csv_stride", "0.01"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn count_prints_the_binary_table() {
    let out = bin(&["count", "--n", "2", "--k-min", "2", "--k-max", "10"]);
    assert!(out.status.success());
    let counts: Vec<String> = stdout(&out).lines().skip(1).map(|l| l.split_whitespace().last().unwrap().to_string()).collect();
    assert_eq!(counts, ["1", "2", "3", "6", "9", "18", "30", "56", "99"]);
}

#[test]
fn reproduce_writes_manifest_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    reproduce_into(dir.path());
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["classes"].as_array().unwrap().len(), 2);
    let span = 2.0 * manifest["weight"]["period"].as_f64().unwrap();
    for o in manifest["orbits"].as_array().unwrap() {
        let name = o["csv"].as_str().unwrap();
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,u,up"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), (span / 0.01).floor() as usize + 1);
        // 12 significant digits per field.
        let first = rows[0].split(',').next().unwrap();
        assert_eq!(first.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).count(), 12);
    }
}

#[test]
fn re_export_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    reproduce_into(a.path());
    reproduce_into(b.path());
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 4);
    for n in names {
        let x = std::fs::read(a.path().join(&n)).unwrap();
        let y = std::fs::read(b.path().join(&n)).unwrap();
        assert!(x == y, "{n:?} differs");
    }
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# sin weight with a low mu\nweight.kind = sin\nweight.freq = 1\nweight.period = 6.283185307179586\nweight.mu = 0.5\nnonlinearity.kind = polymix\nnonlinearity.params = 100, 100\n",
    )
    .unwrap();
    let low = bin(&["weight-report", "--config", cfg.to_str().unwrap()]);
    assert_eq!(low.status.code(), Some(2), "gate must fail for mu < mu#");
    let v: serde_json::Value = serde_json::from_str(&stdout(&low)).unwrap();
    assert_eq!(v["weight"]["gate_ok"], false);

    let high = bin(&["weight-report", "--config", cfg.to_str().unwrap(), "--weight.mu", "6"]);
    assert!(high.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&high)).unwrap();
    assert_eq!(v["weight"]["mu"], 6.0);
    assert!((v["weight"]["mean_value"].as_f64().unwrap() + 10.0).abs() < 1e-8);
}

#[test]
fn validation_failures_exit_with_two() {
    assert_eq!(bin(&["subharmonics", "--k", "0"]).status.code(), Some(2));
    assert_eq!(bin(&["subharmonics", "--newton_tol", "-1"]).status.code(), Some(2));
    assert_eq!(bin(&["solve", "--y0", "1"]).status.code(), Some(2));
    assert_eq!(bin(&["reproduce", "fig3"]).status.code(), Some(2));
    assert_eq!(bin(&["weight-report", "--weight.kind", "table", "--weight.points", "0,1,1,1"]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three() {
    // A single shot from far outside any orbit's basin with no iterations to spare.
    let out = bin(&["solve", "--y0", "50,0", "--weight.freq", "3", "--nonlinearity.kind", "atan", "--nonlinearity.params", "400", "--max_iter", "1"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn solve_and_eigen_report_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("orbit.csv");
    let args = [
        "--weight.freq", "1", "--weight.period", "6.283185307179586", "--weight.mu", "6",
        "--nonlinearity.kind", "polymix", "--nonlinearity.params", "100,100",
    ];
    let mut solve = vec!["solve", "--y0", "0.0013,0"];
    solve.extend(args);
    solve.extend(["--csv", csv.to_str().unwrap()]);
    let out = bin(&solve);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(v["residual"].as_f64().unwrap() < 1e-9);
    assert!(csv.exists());

    let mut eigen = vec!["eigen", "--y0", "0.0013,0"];
    eigen.extend(args);
    let out = bin(&eigen);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["orbit"]["negative"], true);
    assert_eq!(v["lambda1_per_hump"].as_array().unwrap().len(), 1);
}
