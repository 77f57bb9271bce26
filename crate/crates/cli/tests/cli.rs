use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stablegeo"))
}

fn stablegeo(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const SITES16: &str = r#"sites = [
  [0.0, 0.0], [0.0, 0.3], [0.0, 0.6], [0.0, 0.9],
  [0.3, 0.0], [0.3, 0.3], [0.3, 0.6], [0.3, 0.9],
  [0.6, 0.0], [0.6, 0.3], [0.6, 0.6], [0.6, 0.9],
  [0.9, 0.0], [0.9, 0.3], [0.9, 0.6], [0.9, 0.9],
]"#;

fn subgaussian(alpha: f64, methods: &str, counts: usize) -> String {
    format!(
        r#"seed = 42
methods = [{methods}]
[field]
type = "sub-gaussian"
alpha = {alpha}
[field.covariance]
family = "whittle-matern"
a = 2.0
b = 1.0
nu = 1.0
[grid]
lower = [0.0, 0.0]
upper = [1.0, 1.0]
counts = [{counts}, {counts}]
[observations]
{SITES16}
"#
    )
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let idx = rdr.headers().unwrap().iter().position(|h| h == name).unwrap();
    rdr.records().map(|r| r.unwrap()[idx].parse().unwrap()).collect()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn mcl_below_alpha_one_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &subgaussian(0.8, r#""mcl""#, 5));
    let out = stablegeo(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("method requires alpha>1"), "{err}");
    assert!(err.contains("methods[0]"), "{err}");
}

#[test]
fn parse_errors_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "seed = \n[grid]\n");
    let out = stablegeo(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
    let missing = stablegeo(&["simulate", "--config", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn solver_errors_exit_with_solver_code() {
    // more sites than the dense simulator accepts
    let dir = tempfile::tempdir().unwrap();
    let text = r#"seed = 1
[field]
type = "gaussian"
[field.covariance]
family = "gaussian"
a = 1e-4
b = 1.0
[grid]
lower = [0.0]
upper = [1.0]
counts = [4097]
"#;
    let cfg = write_config(dir.path(), "c.toml", text);
    let out = stablegeo(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("simulate"));
}

#[test]
fn simulate_twice_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &subgaussian(1.2, "", 12));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for o in [&a, &b] {
        let out = stablegeo(&["simulate", "--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let fa = csv_files(&a);
    assert_eq!(fa.len(), 2);
    assert_eq!(fa, csv_files(&b));
    let c = dir.path().join("c");
    stablegeo(&["simulate", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap(), "--seed", "43"]);
    assert_ne!(fa, csv_files(&c));
}

#[test]
fn bundle_is_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let text = subgaussian(1.2, r#""lsl", "col", "mcl", "simple-krige", "ordinary-krige""#, 10)
        + "[variogram]\nmax_lag = 0.7\nbin_width = 0.1\ndirections = [\"all\", \"x\", \"y\"]\nfit = \"exponential\"\n";
    let cfg = write_config(dir.path(), "c.toml", &text);
    let mut bundles = Vec::new();
    for jobs in ["1", "4"] {
        let o = dir.path().join(format!("j{jobs}"));
        let out = stablegeo(&["run", "--config", cfg.to_str().unwrap(), "--jobs", jobs, "--out", o.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(fs::read(o.join("fitted_model.txt")).unwrap(), fs::read(dir.path().join("j1/fitted_model.txt")).unwrap());
        bundles.push(csv_files(&o));
    }
    assert_eq!(bundles[0].len(), 13);
    assert_eq!(bundles[0], bundles[1]);
}

#[test]
fn example_one_lsl_grid_equals_col_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &subgaussian(1.2, r#""lsl", "col", "mcl""#, 15));
    let o = dir.path().join("o");
    let out = stablegeo(&["run", "--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap(), "--jobs", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lsl = column(&o.join("prediction_lsl.csv"), "value");
    let col = column(&o.join("prediction_col.csv"), "value");
    assert_eq!(lsl.len(), 225);
    for (a, b) in lsl.iter().zip(&col) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }
    assert!(o.join("prediction_mcl.csv").exists());
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(o.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["methods"].as_array().unwrap().len(), 3);
    assert_eq!(summary["methods"][0]["error_kind"], "scale");
}

#[test]
fn example_four_best_lsl_grid() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"seed = 7
methods = ["best-lsl"]
[field]
type = "integral"
alpha = 0.5
beta = 0.8
[field.kernel]
profile = "parabolic-cap"
radius = 0.2
scale = 0.5
[field.space]
lower = [-0.2, -0.2]
upper = [0.69, 0.69]
cells = [30, 30]
[grid]
lower = [0.0, 0.0]
upper = [0.49, 0.49]
counts = [3, 3]
[observations]
sites = [
  [0.0, 0.0], [0.0, 0.25], [0.0, 0.49],
  [0.25, 0.0], [0.25, 0.25], [0.25, 0.49],
  [0.49, 0.0], [0.49, 0.25], [0.49, 0.49],
]
[solver]
anneal_starts = 4
anneal_proposals = 500
"#;
    let cfg = write_config(dir.path(), "c.toml", text);
    let o = dir.path().join("o");
    let out = stablegeo(&["run", "--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // the grid corners are sites, where best-LSL reproduces the data
    let pred = column(&o.join("prediction_best-lsl.csv"), "value");
    let obs = column(&o.join("observations.csv"), "value");
    assert_eq!(pred.len(), 9);
    for k in [0, 2, 6, 8] {
        assert!((pred[k] - obs[k]).abs() <= 1e-6 * (1.0 + obs[k].abs()), "{} vs {}", pred[k], obs[k]);
    }
    assert!(pred.iter().all(|v| v.is_finite()));
}

#[test]
fn variogram_directions_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"seed = 3
[field]
type = "gaussian"
[field.covariance]
family = "exponential"
a = 3.0
b = 1.0
[grid]
lower = [0.0, 0.0]
upper = [1.5, 1.5]
counts = [31, 31]
[variogram]
max_lag = 0.6
bin_width = 0.1
directions = ["x", "y", "all"]
"#;
    let cfg = write_config(dir.path(), "c.toml", text);
    let o = dir.path().join("o");
    let out = stablegeo(&["variogram", "--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(o.join("variogram.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["h_center", "gamma_hat", "pair_count", "direction_label"]);
    let labels: Vec<String> = rdr.records().map(|r| r.unwrap()[3].to_string()).collect();
    for l in ["x", "y", "all"] {
        assert_eq!(labels.iter().filter(|s| *s == l).count(), 6);
    }

    // the same table from a field CSV, then a fit from the table
    let sim = dir.path().join("sim");
    stablegeo(&["simulate", "--config", cfg.to_str().unwrap(), "--out", sim.to_str().unwrap()]);
    let o2 = dir.path().join("o2");
    let input = sim.join("realization.csv");
    let out = stablegeo(&["variogram", "--config", cfg.to_str().unwrap(), "--out", o2.to_str().unwrap(), "--input", input.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(o.join("variogram.csv")).unwrap(), fs::read(o2.join("variogram.csv")).unwrap());

    let fit_cfg = write_config(dir.path(), "f.toml", &format!("{text}fit = \"exponential\"\ninit = [0.1, 2.0, 1.0]\n"));
    let o3 = dir.path().join("o3");
    let table = o.join("variogram.csv");
    let out = stablegeo(&["fit", "--config", fit_cfg.to_str().unwrap(), "--out", o3.to_str().unwrap(), "--input", table.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let model = fs::read_to_string(o3.join("fitted_model.txt")).unwrap();
    assert!(model.contains("family = exponential"), "{model}");
}

#[test]
fn predict_at_observed_cells_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    // observation sites are grid nodes of a 5x5 grid on [0, 1]^2
    let text = r#"seed = 5
methods = ["simple-krige", "ordinary-krige", "lsl", "col"]
[field]
type = "sub-gaussian"
alpha = 1.6
[field.covariance]
family = "exponential"
a = 2.0
b = 1.0
[grid]
lower = [0.0, 0.0]
upper = [1.0, 1.0]
counts = [5, 5]
[observations]
sites = [[0.0, 0.0], [0.25, 0.5], [0.75, 0.25], [1.0, 1.0], [0.5, 0.75]]
"#;
    let cfg = write_config(dir.path(), "c.toml", text);
    let sim = dir.path().join("sim");
    let out = stablegeo(&["simulate", "--config", cfg.to_str().unwrap(), "--out", sim.to_str().unwrap()]);
    assert!(out.status.success());
    let obs = sim.join("observations.csv");
    let o = dir.path().join("o");
    let out = stablegeo(&["predict", "--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap(), "--input", obs.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let observed = column(&obs, "value");
    let realization = column(&sim.join("realization.csv"), "value");
    let cells = [0usize, 7, 16, 24, 13];
    for (k, v) in cells.iter().zip(&observed) {
        assert_eq!(realization[*k], *v);
    }
    for m in ["simple-krige", "ordinary-krige", "lsl", "col"] {
        let p = column(&o.join(format!("prediction_{m}.csv")), "value");
        let tol = if m.contains("krige") { 1e-9 } else { 1e-6 };
        for (k, v) in cells.iter().zip(&observed) {
            assert!((p[*k] - v).abs() <= tol * (1.0 + v.abs()), "{m}: {} vs {v}", p[*k]);
        }
    }
}

#[test]
fn bench_reports_stage_times() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &subgaussian(1.2, r#""lsl""#, 6));
    let out = stablegeo(&["bench", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap(), "--method", "col"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("stage\tseconds"));
    assert!(text.contains("simulate\t"));
    assert!(text.contains("predict:col\t"));
    assert!(!text.contains("predict:lsl"));
    assert!(text.contains("total\t"));
}
