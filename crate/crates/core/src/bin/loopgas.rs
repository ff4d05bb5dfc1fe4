use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use loopgas::cli::{
    cmd_oracle_compare, cmd_run, cmd_validate, exit_code, format_checks, format_comparison, report_rows, RunOptions,
    EXIT_OK, EXIT_VALIDATION,
};

#[derive(Parser)]
#[command(name = "loopgas", version, about = "Loop-gas Monte Carlo for hard-core Bose gases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the chains and write reports, checkpoints and a manifest.
    Run(Common),
    /// Run the chains, then the configured checks; exit 1 if any fails.
    Validate(Common),
    /// Tabulate sampler estimates against the quadrature oracle.
    OracleCompare(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    config: PathBuf,
    /// Worker threads (default: $LOOPGAS_WORKERS, else all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions { workers: self.workers, resume: self.resume, out: self.out.clone() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Run(c) => cmd_run(&c.config, &c.options()).map(|r| {
            println!("wrote {} report rows to {}", report_rows(&r).len(), r.out_dir.display());
            EXIT_OK
        }),
        Command::Validate(c) => cmd_validate(&c.config, &c.options()).map(|v| {
            print!("{}", format_checks(&v.checks));
            if v.passed() {
                EXIT_OK
            } else {
                eprintln!("{} of {} checks failed", v.checks.iter().filter(|c| !c.passed).count(), v.checks.len());
                EXIT_VALIDATION
            }
        }),
        Command::OracleCompare(c) => cmd_oracle_compare(&c.config, &c.options()).map(|o| {
            print!("{}", format_comparison(&o.rows));
            if o.passed() {
                EXIT_OK
            } else {
                EXIT_VALIDATION
            }
        }),
    };
    match code {
        Ok(c) => ExitCode::from(c as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
