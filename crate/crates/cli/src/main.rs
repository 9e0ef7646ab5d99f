//! `selfavg`: run experiments from JSON configs and write reports.
//!
//! Exit status is 0 when every verdict passes, 1 when some verdict fails and
//! 2 on configuration or runtime errors (nothing is written in that case).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;
use selfavg_core::config::{CommandName, RunConfig};
use selfavg_core::experiments::{run, samples_csv, RunOutput};

#[derive(Debug, Parser)]
#[command(name = "selfavg", version, about = "Finite-volume diffraction experiments")]
struct Cli {
    /// Command to run when no config is given (or to check against it):
    /// gen-pointset, constants, run-ld, run-clt, verify-norms, verify-laplace.
    command: Option<String>,

    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Overrides the seed in the config (default 0).
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads for sampling loops.
    #[arg(long)]
    threads: Option<usize>,

    /// Leave wall-clock fields out of report.json.
    #[arg(long)]
    no_timestamp: bool,
}

const DEFAULT_OUT: &str = "selfavg-out";

fn load(cli: &Cli) -> Result<RunConfig, String> {
    let named = cli
        .command
        .as_deref()
        .map(|c| {
            serde_json::from_value::<CommandName>(serde_json::Value::String(c.into()))
                .map_err(|_| format!("unknown command `{c}`"))
        })
        .transpose()?;
    match (&cli.config, named) {
        (Some(path), named) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let cfg = RunConfig::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            if let Some(n) = named {
                if n != cfg.command {
                    return Err(format!("command `{}` does not match the config", cli.command.as_deref().unwrap_or("")));
                }
            }
            Ok(cfg)
        }
        (None, Some(command)) => Ok(RunConfig {
            command,
            parameters: serde_json::Value::Null,
            seed: None,
            output_dir: None,
        }),
        (None, None) => Err("give a command or --config".into()),
    }
}

fn write_outputs(dir: &Path, out: &RunOutput, report_json: &str) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), report_json)?;
    if let Some(ps) = &out.pointset {
        fs::write(dir.join("pointset.csv"), ps.to_csv())?;
    }
    if let Some(samples) = &out.samples {
        fs::write(dir.join("samples.csv"), samples_csv(samples))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let command = match cfg.command() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

    let start = Instant::now();
    let mut out = match run(&command, seed) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if !cli.no_timestamp {
        out.report.runtime_seconds = Some(start.elapsed().as_secs_f64());
        out.report.finished_at_unix = SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs());
    }
    let json = out.report.to_json();
    if let Err(e) = write_outputs(&dir, &out, &json) {
        eprintln!("error: writing {}: {e}", dir.display());
        return ExitCode::from(2);
    }

    if let Some(text) = &out.text {
        print!("{text}");
    }
    let total = out.report.verdicts.len();
    let failed = out.report.failures();
    println!("{}: {}/{} verdicts pass; report in {}", command_label(&cfg.command), total - failed.len(), total, dir.display());
    for f in &failed {
        eprintln!("FAIL {f}");
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn command_label(c: &CommandName) -> String {
    serde_json::to_value(c)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}
