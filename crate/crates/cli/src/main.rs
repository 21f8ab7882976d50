use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "dampwave", version, about = "Structurally damped wave laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Cmd {
    /// Kernel tables against an ODE reference.
    Kernels,
    /// Pseudospectral run of the coupled system.
    Simulate,
    /// Predicted against fitted linear decay exponents.
    Rates,
    /// Region map over (p, q).
    Atlas,
    /// Test-function diagnostics.
    Testfn,
}

impl Cmd {
    fn name(self) -> &'static str {
        match self {
            Cmd::Kernels => "kernels",
            Cmd::Simulate => "simulate",
            Cmd::Rates => "rates",
            Cmd::Atlas => "atlas",
            Cmd::Testfn => "testfn",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let Some(path) = cli.config.as_ref() else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(2);
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    let cfg_command = toml::from_str::<toml::Table>(&text)
        .ok()
        .and_then(|t| t.get("command").and_then(|c| c.as_str().map(str::to_owned)));
    if let Some(c) = cfg_command {
        if c != cli.command.name() {
            eprintln!("error: config is for `{c}`, not `{}`", cli.command.name());
            return ExitCode::from(2);
        }
    }
    let manifest = dampwave::cli_io::run_cli(&text, cli.seed, &cli.out);
    if manifest.exit_code != 0 {
        eprintln!("{}", manifest.status);
    } else {
        for w in &manifest.warnings {
            eprintln!("warning: {w}");
        }
        println!("{} {} -> {}", manifest.command, manifest.run_id, cli.out.display());
    }
    ExitCode::from(manifest.exit_code as u8)
}
