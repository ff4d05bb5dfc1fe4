// A run driven by a TOML config, split in two halves through a checkpoint,
// produces the same report bytes as one uninterrupted run.

use std::path::Path;

use loopgas::cli::{execute, file_sha256, report_rows, RunOptions};
use loopgas::config::RunConfig;

const CONFIG: &str = r#"
schema_version = 1

[system]
dim = 1
half_side = 1.0
z = 0.5
beta = 1.0
slices = 4
k_max = 2

[potential]
core = 0.3
range = 0.6
profile = "smoothed_well"
depth = 0.2

[chain]
seed = 21
chains = 2
sweeps = 2000
burn_in = 100

[output]
dir = "out"
checkpoint_interval = 500
"#;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join(format!("loopgas-resume-{}", std::process::id()));
    let full = RunConfig::parse(CONFIG)?;
    let mut half = full.clone();
    half.chain.sweeps = 1000;

    let opts = |dir: &str, resume: bool| RunOptions { workers: Some(2), resume, out: Some(root.join(dir)) };
    let a = execute(&full, Path::new("."), &opts("whole", false))?;
    execute(&half, Path::new("."), &opts("split", false))?;
    let b = execute(&full, Path::new("."), &opts("split", true))?;

    println!("config sha256 {}", full.hash()?);
    for row in report_rows(&a).iter().take(6) {
        println!("  {:<24} {:<6} {:.6} +- {:.1e}", row.quantity, row.label, row.value, row.stderr);
    }
    for f in ["report.csv", "report.jsonl"] {
        let (x, y) = (file_sha256(&a.out_dir.join(f))?, file_sha256(&b.out_dir.join(f))?);
        println!("{f}: {}", if x == y { "identical" } else { "DIFFERENT" });
    }
    std::fs::remove_dir_all(&root)?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
