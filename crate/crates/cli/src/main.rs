use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Parser;
use maxreg_lab::output::{to_json, write_outcome};
use maxreg_lab::{run, CliError, Command, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "maxreg-lab", version, about = "Maximal-regularity experiments")]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON config; keys it omits keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Print the default config for the subcommand and exit.
    #[arg(long)]
    print_defaults: bool,
}

fn execute(args: &Args) -> Result<bool, CliError> {
    if args.print_defaults {
        print!("{}", to_json(&ExperimentConfig::defaults(args.command)));
        return Ok(true);
    }
    if let Some(k) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            ExperimentConfig::parse(args.command, &text)?
        }
        None => ExperimentConfig::defaults(args.command),
    };
    let outcome = run(args.command, &cfg)?;
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write_outcome(&args.out, args.command, &cfg, &outcome, stamp)?;
    for c in &outcome.checks {
        println!(
            "{} {}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("maxreg-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
