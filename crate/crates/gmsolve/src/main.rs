use std::path::PathBuf;
use std::process::ExitCode;

use gmsolve::cli::{self, Command};

const USAGE: &str = "usage: gmsolve --config PATH [--out DIR] [--command NAME] [--seed N]

commands: barriers | eigen | solve | continuation | verify | all (default)

Runs the configured pipeline and writes fields/*.csv, summary/*.json and
report.json under the output directory. Exit status 0 means the run (and,
for `all`/`verify`, every verification check) passed.";

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool, String> {
    let mut config_path: Option<PathBuf> = None;
    let mut out_dir: Option<PathBuf> = None;
    let mut command = Command::All;
    let mut seed_override: Option<u64> = None;

    let mut args = std::env::args().skip(1);
    while let Some(arg) = args.next() {
        let mut take = |name: &str| {
            args.next()
                .ok_or_else(|| format!("{name} expects a value\n\n{USAGE}"))
        };
        match arg.as_str() {
            "--config" => config_path = Some(PathBuf::from(take("--config")?)),
            "--out" => out_dir = Some(PathBuf::from(take("--out")?)),
            "--command" => command = take("--command")?.parse()?,
            "--seed" => {
                seed_override = Some(
                    take("--seed")?
                        .parse()
                        .map_err(|e| format!("bad --seed value: {e}"))?,
                )
            }
            "--help" | "-h" => {
                println!("{USAGE}");
                return Ok(true);
            }
            other => return Err(format!("unknown argument `{other}`\n\n{USAGE}")),
        }
    }

    let config_path = config_path.ok_or_else(|| format!("--config is required\n\n{USAGE}"))?;
    let text = std::fs::read_to_string(&config_path)
        .map_err(|e| format!("reading {}: {e}", config_path.display()))?;
    let mut cfg = cli::parse_config(&text, out_dir).map_err(|e| e.to_string())?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    cli::run(command, &cfg).map_err(|e| e.to_string())
}
