//! Command line runner: scenario validation, single runs, and batch runs.
//!
//! Exit codes: 0 success, 1 assertion failure, 2 validation/config error,
//! 3 numeric failure. Errors are reported as one-line JSON on stderr.

use clap::{Args, Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use rdag_sim::engine::Mode;
use rdag_sim::scenario::{audit_parts, run_scenario, AuditOutcome, Scenario, StopRule};
use rdag_sim::{AssertionKind, GraphFile, RunOutcome, SimError};

#[derive(Parser)]
#[command(
    name = "rdag-sim",
    about = "Resilient finite-time formation control simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Audit a scenario or graph file (RDAG clauses, F-locality, 3F+1 in-degree).
    Validate {
        /// Scenario JSON or graph JSON path.
        path: PathBuf,
        /// Print the audit report as JSON instead of human-readable lines.
        #[arg(long)]
        json: bool,
    },
    /// Run one scenario and write trace CSV, bound report, and the echoed
    /// effective configuration.
    Simulate {
        /// Scenario JSON path.
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Output directory (precedence: this flag, scenario output.dir,
        /// $SIM_OUT_DIR, ./sim_out).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Skip the precondition audits.
        #[arg(long)]
        force: bool,
    },
    /// Run a scenario across several derived seeds and write an aggregate
    /// report (run i uses seed + i, so a 1-run batch matches simulate).
    Batch {
        /// Scenario JSON path.
        scenario: PathBuf,
        /// Number of runs.
        #[arg(long)]
        runs: u64,
        /// Master seed (defaults to the scenario's).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Args)]
struct Overrides {
    /// Override the run mode (continuous | discrete).
    #[arg(long)]
    mode: Option<String>,
    /// Override the seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the stop time (continuous mode).
    #[arg(long)]
    t_final: Option<f64>,
    /// Override the integration step (continuous mode).
    #[arg(long)]
    dt: Option<f64>,
    /// Assertions to evaluate: "all", "none", or comma-separated names.
    #[arg(long, value_name = "all|none|a,b,..")]
    assert: Option<String>,
    /// Keep every Nth trace row when writing the CSV.
    #[arg(long)]
    thin: Option<u64>,
}

impl Overrides {
    fn apply(&self, scenario: &mut Scenario) -> Result<(), SimError> {
        if let Some(mode) = &self.mode {
            scenario.mode = match mode.as_str() {
                "continuous" => Mode::Continuous,
                "discrete" => Mode::Discrete,
                other => {
                    return Err(SimError::Config(format!(
                        "--mode must be continuous or discrete, got {other}"
                    )))
                }
            };
        }
        if let Some(seed) = self.seed {
            scenario.seed = seed;
        }
        if let Some(t_final) = self.t_final {
            scenario.stop = StopRule::TFinal(t_final);
        }
        if let Some(dt) = self.dt {
            scenario.params.dt = Some(dt);
        }
        if let Some(sel) = &self.assert {
            scenario.assertions = parse_assert_flag(sel)?;
        }
        if let Some(thin) = self.thin {
            scenario.output.thin = thin;
        }
        scenario.validate()?;
        Ok(())
    }
}

fn parse_assert_flag(sel: &str) -> Result<rdag_sim::scenario::AssertionSelection, SimError> {
    use rdag_sim::scenario::AssertionSelection;
    match sel {
        "all" | "none" => Ok(AssertionSelection::Keyword(sel.into())),
        list => {
            let names: Vec<String> = list.split(',').map(|s| s.trim().to_string()).collect();
            for name in &names {
                AssertionKind::parse(name)?;
            }
            Ok(AssertionSelection::List(names))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            let payload = serde_json::json!({
                "error": error_kind(&err),
                "message": err.to_string(),
                "exit_code": err.exit_code(),
            });
            eprintln!("{payload}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn error_kind(err: &SimError) -> &'static str {
    match err {
        SimError::Config(_) => "config",
        SimError::Structural(_) => "structural",
        SimError::Audit(_) => "audit",
        SimError::Assertion(_) => "assertion",
        SimError::Numeric(_) => "numeric",
        SimError::Parse(_) => "parse",
        SimError::Io(_) => "io",
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, SimError> {
    match cli.command {
        Command::Validate { path, json } => cmd_validate(&path, json),
        Command::Simulate { scenario, overrides, out_dir, force } => {
            cmd_simulate(&scenario, &overrides, out_dir, force)
        }
        Command::Batch { scenario, runs, seed, out_dir, force } => {
            cmd_batch(&scenario, runs, seed, out_dir, force)
        }
    }
}

/// Audits either a scenario file or a bare graph file.
fn cmd_validate(path: &Path, json: bool) -> Result<ExitCode, SimError> {
    let text = fs::read_to_string(path)?;
    let audit: AuditOutcome = if let Ok(scenario) = Scenario::load(path) {
        let built = scenario.build()?;
        scenario.audit(&built)?
    } else if let Ok(file) = GraphFile::from_json(&text) {
        let (graph, partition, placement) = file.into_parts()?;
        audit_parts(&graph, &partition, &placement)?
    } else {
        // Re-parse as a scenario to surface its error message.
        Scenario::load(path)?;
        unreachable!("load either succeeds or errors");
    };

    if json {
        println!("{}", serde_json::to_string_pretty(&audit).expect("report serializes"));
    } else {
        print_report_line("rdag", &audit.rdag);
        print_report_line("f-local", &audit.f_local);
        print_report_line("in-degree (3F+1)", &audit.in_degree);
        if let Some(min) = audit.min_follower_in_degree {
            println!("min follower in-degree: {min}");
        }
    }
    if audit.all_ok() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn print_report_line(name: &str, report: &rdag_sim::ValidationReport) {
    if report.ok {
        println!("{name}: ok");
    } else {
        println!("{name}: FAILED ({} violations)", report.violations.len());
        for v in report.violations.iter().take(5) {
            println!("  - {v}");
        }
        if report.violations.len() > 5 {
            println!("  ... and {} more", report.violations.len() - 5);
        }
    }
}

fn resolve_out_dir(flag: Option<PathBuf>, scenario: &Scenario) -> PathBuf {
    flag.or_else(|| scenario.output.dir.clone().map(PathBuf::from))
        .or_else(|| std::env::var_os("SIM_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("sim_out"))
}

fn write_run_artifacts(
    dir: &Path,
    scenario: &Scenario,
    outcome: &RunOutcome,
) -> Result<(), SimError> {
    fs::create_dir_all(dir)?;
    let mut csv = fs::File::create(dir.join("trace.csv"))?;
    outcome.trace.write_csv(&mut csv, scenario.output.thin)?;
    fs::write(dir.join("bound_report.json"), outcome.report.to_json())?;
    fs::write(dir.join("effective_scenario.json"), scenario.to_json())?;
    let assertions = serde_json::to_string_pretty(&outcome.assertions)
        .expect("assertion results serialize");
    fs::write(dir.join("assertions.json"), assertions)?;
    Ok(())
}

fn cmd_simulate(
    path: &Path,
    overrides: &Overrides,
    out_dir: Option<PathBuf>,
    force: bool,
) -> Result<ExitCode, SimError> {
    let mut scenario = Scenario::load(path)?;
    overrides.apply(&mut scenario)?;
    let out_dir = resolve_out_dir(out_dir, &scenario);
    let outcome = run_scenario(&scenario, force)?;
    write_run_artifacts(&out_dir, &scenario, &outcome)?;

    println!(
        "run '{}': {} steps, all_converged = {}, max ||u|| = {:.6}",
        scenario.name,
        outcome.trace.records.len(),
        outcome.all_converged,
        outcome.report.max_input_norm
    );
    for result in &outcome.assertions {
        println!(
            "assert {}: {} ({})",
            result.name,
            if result.passed { "pass" } else { "FAIL" },
            result.detail
        );
    }
    println!("artifacts in {}", out_dir.display());

    if outcome.assertions.iter().any(|a| !a.passed) {
        return Err(SimError::Assertion(
            outcome
                .failed_assertions()
                .iter()
                .map(|a| a.name.clone())
                .collect::<Vec<_>>()
                .join(", "),
        ));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_batch(
    path: &Path,
    runs: u64,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    force: bool,
) -> Result<ExitCode, SimError> {
    if runs == 0 {
        return Err(SimError::Config("--runs must be at least 1".into()));
    }
    let base = Scenario::load(path)?;
    let master_seed = seed.unwrap_or(base.seed);
    let out_dir = resolve_out_dir(out_dir, &base);
    fs::create_dir_all(&out_dir)?;

    let mut per_run = Vec::new();
    let mut any_failed = false;
    for index in 0..runs {
        let mut scenario = base.clone();
        scenario.seed = master_seed.wrapping_add(index);
        let run_dir = out_dir.join(format!("run_{index:03}"));
        let entry = match run_scenario(&scenario, force) {
            Ok(outcome) => {
                write_run_artifacts(&run_dir, &scenario, &outcome)?;
                let times: Vec<f64> = outcome
                    .report
                    .agents
                    .iter()
                    .filter_map(|a| a.empirical_time)
                    .collect();
                let failed: Vec<String> = outcome
                    .failed_assertions()
                    .iter()
                    .map(|a| a.name.clone())
                    .collect();
                if !failed.is_empty() {
                    any_failed = true;
                }
                serde_json::json!({
                    "run": index,
                    "seed": scenario.seed,
                    "converged": outcome.all_converged,
                    "steps": outcome.trace.records.len(),
                    "convergence_time": {
                        "min": times.iter().copied().fold(f64::INFINITY, f64::min),
                        "max": times.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        "mean": if times.is_empty() { f64::NAN } else {
                            times.iter().sum::<f64>() / times.len() as f64
                        },
                        "n_converged": times.len(),
                    },
                    "assertions": outcome.assertions.iter().map(|a| {
                        serde_json::json!({ "name": a.name, "passed": a.passed })
                    }).collect::<Vec<_>>(),
                    "failed_assertions": failed,
                })
            }
            Err(err) => {
                any_failed = true;
                serde_json::json!({
                    "run": index,
                    "seed": scenario.seed,
                    "error": { "kind": error_kind(&err), "message": err.to_string() },
                })
            }
        };
        per_run.push(entry);
    }

    let aggregate = serde_json::json!({
        "scenario": base.name,
        "master_seed": master_seed,
        "runs": runs,
        "all_passed": !any_failed,
        "per_run": per_run,
    });
    let aggregate_text =
        serde_json::to_string_pretty(&aggregate).expect("aggregate serializes");
    fs::write(out_dir.join("aggregate.json"), &aggregate_text)?;
    println!("{aggregate_text}");

    if any_failed {
        Ok(ExitCode::from(1))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}
