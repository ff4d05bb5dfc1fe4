// Loading a run config: canonical rendering, hashes, derived parameters and
// the line-anchored error for a bad file.

use std::path::Path;

use loopgas::config::RunConfig;

const CONFIG: &str = r#"
schema_version = 1

[system]
dim = 2
half_side = 1.5
z = 0.5
beta = 1.0
slices = 4
k_max = 2

[potential]
core = 0.4
range = 0.8
profile = "square_well"
value = 0.5

[estimators]
ruelle_points = [[0.0, 0.0], [0.7, 0.0]]
"#;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::parse(CONFIG)?;
    let params = cfg.params(Path::new("."))?;
    println!("config sha256     {}", cfg.hash()?);
    println!("trajectory sha256 {}", cfg.trajectory_hash()?);
    println!("tau = {}, rho_bar = {:.4}", params.tau(), params.constants()?.rho_bar);
    println!("--- canonical form ---\n{}", cfg.render()?);

    let bad = CONFIG.replace("slices = 4", "slices = \"four\"");
    match RunConfig::parse(&bad) {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
