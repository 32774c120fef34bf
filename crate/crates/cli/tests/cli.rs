use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn cslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cslab")).args(args).output().expect("run cslab")
}

fn model(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("models").join(name).display().to_string()
}

fn out(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn manifest(p: &Path) -> Value {
    read_json(Path::new(&format!("{}.manifest.json", p.display())))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn dephase_fits_analytic_rate() {
    let dir = TempDir::new().unwrap();
    let csv = out(&dir, "traj.csv");
    let o = cslab(&["dephase", "--separation", "400", "--rc", "100", "--out", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,rho_0_1_abs,rho_0_1_arg");
    let m = manifest(&csv);
    assert_eq!(m["subcommand"], "dephase");
    let err = m["summary"]["relative_error"].as_f64().unwrap();
    assert!(err < 0.01, "{err}");
    let analytic = m["summary"]["analytic_rate"].as_f64().unwrap();
    let lambda = 1e-9 * (1.0 / (4.0 * std::f64::consts::PI * 1e4)).powf(1.5);
    assert!((analytic - lambda * (1.0 - (-4.0f64).exp())).abs() < 1e-12 * analytic);
}

#[test]
fn dephase_without_decay() {
    let dir = TempDir::new().unwrap();
    for args in [["--separation", "0", "--gamma", "1e-9"], ["--separation", "300", "--gamma", "0"]] {
        let csv = out(&dir, "flat.csv");
        let mut full = vec!["dephase"];
        full.extend(args);
        full.extend(["--out", csv.to_str().unwrap()]);
        let o = cslab(&full);
        assert_eq!(o.status.code(), Some(0));
        assert_eq!(manifest(&csv)["summary"]["fitted_rate"].as_f64(), Some(0.0));
        let text = std::fs::read_to_string(&csv).unwrap();
        let values: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
        assert!(values.iter().all(|v| *v == values[0]));
    }
}

#[test]
fn dephase_rejects_bad_flags() {
    let dir = TempDir::new().unwrap();
    let csv = out(&dir, "x.csv");
    assert_eq!(cslab(&["dephase", "--separation", "-1", "--out", csv.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(cslab(&["dephase", "--separation", "abc", "--out", csv.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(cslab(&["dephase", "--separation", "100", "--dt", "0", "--out", csv.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn dfs_check_bundled_models() {
    let dir = TempDir::new().unwrap();
    let report = out(&dir, "r.json");
    let o = cslab(&["dfs-check", "--model", &model("collective_dephasing.json"), "--out", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_json(&report)["max_dimension"], 2);
    let m = manifest(&report);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);

    let o = cslab(&["dfs-check", "--model", &model("identity.json"), "--out", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_json(&report)["max_dimension"], 4);

    let o = cslab(&["dfs-check", "--model", &model("non_commuting.json"), "--out", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("operators 0 and 1"));
}

#[test]
fn dfs_check_invalid_files() {
    let dir = TempDir::new().unwrap();
    let bad = out(&dir, "bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    let report = out(&dir, "r.json");
    assert_eq!(cslab(&["dfs-check", "--model", bad.to_str().unwrap(), "--out", report.to_str().unwrap()]).status.code(), Some(2));
    let indefinite = std::fs::read_to_string(model("collective_dephasing.json")).unwrap().replace("\"coupling\": [[[1.0, 0.0]]]", "\"coupling\": [[[-1.0, 0.0]]]");
    std::fs::write(&bad, indefinite).unwrap();
    assert_eq!(cslab(&["dfs-check", "--model", bad.to_str().unwrap(), "--out", report.to_str().unwrap()]).status.code(), Some(4));
}

#[test]
fn theorem2_mirror_all_witnessed_and_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = out(&dir, "a.json");
    let b = out(&dir, "b.json");
    for p in [&a, &b] {
        let o = cslab(&["theorem2", "--construction", "mirror", "--trials", "100", "--seed", "7", "--particles", "2", "--out", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    let doc = read_json(&a);
    assert_eq!(doc["witnesses_found"], 100);
    assert_eq!(doc["anomalies"].as_array().unwrap().len(), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(manifest(&a)["seed"], 7);
}

#[test]
fn theorem2_edge_cases() {
    let dir = TempDir::new().unwrap();
    let p = out(&dir, "t.json");
    let o = cslab(&["theorem2", "--construction", "sphere", "--trials", "0", "--out", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_json(&p)["results"].as_array().unwrap().len(), 0);
    let o = cslab(&["theorem2", "--construction", "sphere", "--dim", "1", "--particles", "3", "--out", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = cslab(&["theorem2", "--construction", "cube", "--out", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn scan_defaults_and_corner_cell() {
    let dir = TempDir::new().unwrap();
    let csv = out(&dir, "scan.csv");
    let o = cslab(&["scan", "--out", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 64 * 64 + 1);
    assert_eq!(text.lines().next().unwrap(), "lambda_s^-1,rc_nm,density_m^-3GHz^-1,n,N_volumes,Gamma_s^-1,coherence_s,excluded");

    // n = 1e8 per (100 nm)^3 at a 1 GHz window.
    let o = cslab(&[
        "scan", "--lambda-min", "2.2e-17", "--lambda-max", "1e-16", "--rc-min", "100", "--rc-max", "1000", "--cells", "2",
        "--density", "1e29", "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').take(7).map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[0], 2.2e-17);
    assert_eq!(row[1], 100.0);
    assert!((row[3] - 1e8).abs() < 1e-6 * 1e8);
    assert!((row[5] - 0.22).abs() < 1e-9);
    assert!((row[6] - 1.0 / 0.22).abs() < 1e-7);
}

#[test]
fn scan_zero_density_and_exclusions() {
    let dir = TempDir::new().unwrap();
    let csv = out(&dir, "scan.csv");
    let ex = out(&dir, "ex.json");
    std::fs::write(&ex, r#"[{"lambda_min": 1e-20, "lambda_max": 1e-15, "rc_min": 1, "rc_max": 1000}]"#).unwrap();
    let o = cslab(&["scan", "--cells", "8", "--density", "0", "--exclude", ex.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert!(rows.iter().all(|r| r[5].parse::<f64>().unwrap() == 0.0 && r[6].is_empty()));
    let excluded = rows.iter().filter(|r| r[7] == "true").count();
    assert!(excluded > 0 && excluded < rows.len());
    assert!(stdout(&o).contains(&format!("excluded cells: {excluded}")));
    assert_eq!(manifest(&csv)["inputs"][0]["path"], ex.display().to_string());

    let o = cslab(&["scan", "--lambda-min", "1e-10", "--lambda-max", "1e-12", "--out", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn brute_certificates_and_limits() {
    let dir = TempDir::new().unwrap();
    let cert = out(&dir, "c.json");
    let o = cslab(&["brute", "--lattice", "4,100", "--particles", "2", "--seed", "3", "--out", cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let c = read_json(&cert);
    assert_eq!(c["n_configs"], 6);
    assert!(c["min_pairwise_rate"].as_f64().unwrap() > 0.0);
    assert_eq!(c["dfs_max_dimension"], 1);
    assert_eq!(c["seed"], 3);

    let o = cslab(&["brute", "--lattice", "3x3,100", "--particles", "2", "--out", cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_json(&cert)["n_configs"], 36);

    assert_eq!(cslab(&["brute", "--lattice", "4,100", "--particles", "0", "--out", cert.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(cslab(&["brute", "--lattice", "20,100", "--particles", "10", "--out", cert.to_str().unwrap()]).status.code(), Some(6));
    assert_eq!(cslab(&["brute", "--lattice", "4;100", "--particles", "1", "--out", cert.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn brute_from_sites_file() {
    let dir = TempDir::new().unwrap();
    let sites = out(&dir, "sites.json");
    std::fs::write(&sites, "[[-50.0], [50.0]]").unwrap();
    let cert = out(&dir, "c.json");
    let o = cslab(&["brute", "--sites", sites.to_str().unwrap(), "--particles", "1", "--out", cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_json(&cert)["n_configs"], 2);
    assert_eq!(manifest(&cert)["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn help_lists_units() {
    let o = cslab(&["dephase", "--help"]);
    let text = stdout(&o);
    for flag in ["--separation", "--rc", "--gamma", "--tmax", "--dt", "--out"] {
        assert!(text.contains(flag), "{flag}");
    }
    assert!(text.contains("(nm)") && text.contains("(s)") && text.contains("nm^3/s"));
    let o = cslab(&["scan", "--help"]);
    assert!(stdout(&o).contains("(1/s)") && stdout(&o).contains("GHz"));
}
