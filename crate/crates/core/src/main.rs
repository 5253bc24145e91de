use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use migrasim::batch::run_batch;
use migrasim::report::write_outputs;
use migrasim::{parse_scenario, RunError, Scenario};

#[derive(Parser)]
#[command(name = "migrasim", version, about = "Live VM migration simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run {
        file: PathBuf,
        /// Directory for CSV files and the trace.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Also write trace.log.
        #[arg(long)]
        trace: bool,
        /// Parse and validate, then stop.
        #[arg(long)]
        validate_only: bool,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run several scenario files, each into `<out-dir>/<name>/`.
    Batch {
        files: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        trace: bool,
    },
}

fn fail(code: i32, path: &Path, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("{}: {msg}", path.display());
    ExitCode::from(code as u8)
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, (i32, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| (1, e.to_string()))?;
    let mut scenario = parse_scenario(&text).map_err(|e| (2, e.to_string()))?;
    if scenario.name.is_none() {
        scenario.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    }
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn checked_model(scenario: &Scenario) -> Result<migrasim::Model, RunError> {
    let model = scenario.model()?;
    if let Some(bad) = model.infeasible() {
        return Err(RunError::Infeasible {
            line: bad.line,
            vm: model.vms[bad.plan.vm.0].name.clone(),
            reasons: bad.report.blockers.clone(),
        });
    }
    Ok(model)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { file, out_dir, trace, validate_only, seed } => {
            let scenario = match load(&file, seed) {
                Ok(s) => s,
                Err((code, msg)) => return fail(code, &file, msg),
            };
            let model = match checked_model(&scenario) {
                Ok(m) => m,
                Err(e) => return fail(e.exit_code(), &file, e),
            };
            if validate_only {
                return ExitCode::SUCCESS;
            }
            let out = match migrasim::simulate(&model) {
                Ok(o) => o,
                Err(e) => return fail(e.exit_code(), &file, e),
            };
            if let Err(e) = write_outputs(&out, &out_dir, trace) {
                return fail(1, &out_dir, e);
            }
            ExitCode::SUCCESS
        }
        Command::Batch { files, out_dir, trace } => {
            let mut models = Vec::new();
            for file in &files {
                let scenario = match load(file, None) {
                    Ok(s) => s,
                    Err((code, msg)) => return fail(code, file, msg),
                };
                match checked_model(&scenario) {
                    Ok(m) => models.push(m),
                    Err(e) => return fail(e.exit_code(), file, e),
                }
            }
            let mut code = 0;
            for (file, result) in files.iter().zip(run_batch(&models)) {
                match result {
                    Ok(out) => {
                        let dir = out_dir.join(&out.scenario);
                        if let Err(e) = write_outputs(&out, &dir, trace) {
                            return fail(1, &dir, e);
                        }
                    }
                    Err(e) => {
                        eprintln!("{}: {e}", file.display());
                        code = code.max(e.exit_code());
                    }
                }
            }
            ExitCode::from(code as u8)
        }
    }
}
