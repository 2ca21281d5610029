use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use helmlayer_cli::run::{self, Options};

#[derive(Parser)]
#[command(name = "helmlayer", version, about = "Layered-media Helmholtz scattering with FMM-accelerated GMRES")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Reproducible reports (timings aside).
    #[arg(long, global = true)]
    deterministic: bool,
    /// Requested worker threads; the solver core is single-threaded.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Output directory for report and field files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scattering problem of a scene config.
    Solve { config: PathBuf },
    /// Manufactured-solution errors over a list of total panel counts.
    Converge {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
    },
    /// Time per iteration (matvec plus preconditioner) over a list of sizes.
    Scale {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
    },
    /// Evaluate the layered Green's function for the config's stack.
    Greens {
        config: PathBuf,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        src: [f64; 2],
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        dst: [f64; 2],
    },
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let v: Vec<&str> = s.split(',').collect();
    if v.len() != 2 {
        return Err(format!("expected x,y, got {s:?}"));
    }
    let f = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok([f(v[0])?, f(v[1])?])
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = Options { deterministic: cli.deterministic, threads: cli.threads, out: cli.out };
    let outcome = match &cli.command {
        Command::Solve { config } => run::solve(config, &opts),
        Command::Converge { config, n } => run::converge(config, n, &opts),
        Command::Scale { config, n } => run::scale(config, n, &opts),
        Command::Greens { config, src, dst } => {
            return match run::greens(config, *src, *dst) {
                Ok(v) => {
                    println!("{}", serde_json::to_string_pretty(&v).unwrap());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            };
        }
    };
    print!("{}", outcome.summary);
    ExitCode::from(outcome.exit as u8)
}
