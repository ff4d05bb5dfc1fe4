use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_loopgas");

const SMALL: &str = r#"
schema_version = 1

[system]
dim = 1
half_side = 0.5
z = 0.3
beta = 0.5
slices = 2
k_max = 1

[potential]
core = 0.6
range = 1.2

[chain]
seed = 3
chains = 2
sweeps = 400
burn_in = 20

[output]
dir = "out"

[estimators]
n_max = 2
inner = { center = [0.0], half_side = 0.43333333333333335 }
kernel_pairs = [{ x0 = [[-0.2]], y0 = [[0.1]] }, { x0 = [[0.1]], y0 = [[-0.2]] }]
trace = true
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn loopgas(args: &[&str], cfg: &Path) -> Output {
    Command::new(BIN).args(args).arg(cfg).env("LOOPGAS_WORKERS", "2").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_key_is_a_config_error_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &SMALL.replace("z = 0.3\n", ""));
    let o = loopgas(&["run"], &cfg);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("`z`") && err.contains("line"), "{err}");
}

#[test]
fn unknown_validator_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("{SMALL}\n[validate]\nchecks = [\"trace\", \"magic\"]\n"));
    let o = loopgas(&["validate"], &cfg);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("magic"));
}

#[test]
fn bad_worker_env_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let o = Command::new(BIN).arg("run").arg(&cfg).env("LOOPGAS_WORKERS", "many").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("LOOPGAS_WORKERS"));
}

#[test]
fn zero_sweeps_give_empty_valid_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &SMALL.replace("sweeps = 400", "sweeps = 0").replace("burn_in = 20", "burn_in = 0"));
    let o = loopgas(&["run"], &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("out");
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.trim(), "quantity,label,value,stderr,samples");
    assert_eq!(std::fs::read_to_string(out.join("report.jsonl")).unwrap(), "");
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn validation_without_samples_fails_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("sweeps = 400", "sweeps = 0").replace("burn_in = 20", "burn_in = 0");
    let cfg = write(dir.path(), "c.toml", &format!("{text}\n[validate]\nchecks = [\"partition\"]\n"));
    let o = loopgas(&["validate"], &cfg);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL partition"));
}

#[test]
fn validate_small_box_passes_and_writes_checks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let o = loopgas(&["validate"], &cfg);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}{}", stderr(&o));
    assert!(stdout.contains("PASS trace"));
    assert!(stdout.contains("PASS kernel_symmetry"));
    let lines = std::fs::read_to_string(dir.path().join("out/checks.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    for key in ["check", "tag", "source", "estimate", "target", "stderr", "passed"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn divergent_regime_skips_bounds_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("range = 1.2", "range = 1.2\nprofile = \"smoothed_well\"\ndepth = 8.0");
    let cfg = write(dir.path(), "c.toml", &format!("{text}ruelle_points = [[0.0]]\n[validate]\nchecks = [\"ruelle\", \"kernel_bound\"]\n"));
    let o = loopgas(&["validate"], &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("rho_bar"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("skipped"));
}

#[test]
fn oracle_compare_rejects_oversized_systems_before_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("sweeps = 400", "sweeps = 100000000");
    let cfg = write(dir.path(), "c.toml", &format!("{text}\n[validate]\noracle_grid = 17\n"));
    let t0 = std::time::Instant::now();
    let o = loopgas(&["oracle-compare"], &cfg);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("quadrature"));
    assert!(t0.elapsed().as_secs() < 10);
}

#[test]
fn oracle_compare_table_reports_m_and_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &SMALL.replace("sweeps = 400", "sweeps = 3000"));
    let o = loopgas(&["oracle-compare"], &cfg);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}{}", stderr(&o));
    assert!(stdout.contains("partition_function") && stdout.contains("M grid"));
    let csv = std::fs::read_to_string(dir.path().join("out/oracle_compare.csv")).unwrap();
    assert!(csv.starts_with("quantity,label,mc,sigma,oracle,oracle_error,z_score,passed,slices,grid"));
    let manifest = std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap();
    assert!(manifest.contains("oracle_grid"));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("out"), "not a directory").unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let o = loopgas(&["run"], &cfg);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn resume_refuses_a_foreign_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    assert_eq!(loopgas(&["run"], &cfg).status.code(), Some(0));
    let other = write(dir.path(), "c.toml", &SMALL.replace("seed = 3", "seed = 4"));
    let o = loopgas(&["run", "--resume"], &other);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("different configuration"));
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let a = Command::new(BIN).args(["run", "--workers", "1", "--out"]).arg(dir.path().join("a")).arg(&cfg).output().unwrap();
    let b = Command::new(BIN).args(["run", "--workers", "2", "--out"]).arg(dir.path().join("b")).arg(&cfg).output().unwrap();
    assert!(a.status.success() && b.status.success());
    for f in ["report.csv", "report.jsonl", "manifest.json"] {
        assert_eq!(std::fs::read(dir.path().join("a").join(f)).unwrap(), std::fs::read(dir.path().join("b").join(f)).unwrap());
    }
}
