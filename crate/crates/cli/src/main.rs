//! `edbench`: solve dispatch demands exactly, render prompts, run the GA
//! baseline, execute benchmark runs, and re-emit reports.
//!
//! Machine-readable JSON goes to stdout; human summaries and errors go to
//! stderr. Exit codes: 0 success, 1 domain error (infeasible demand, parse
//! failure, missing fixtures), 2 usage error.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use edbench_core::benchmark::{emit_report, run_benchmark, BenchmarkReport, RunOptions};
use edbench_core::config::{BackendKind, RunConfig};
use edbench_core::ga::{CrossoverMode, GaConfig};
use edbench_core::gateway::{Backend, LiveBackend, ReplayBackend, ReplayStore};
use edbench_core::prompt::{build_few_shot_set, default_few_shot_pds, render_prompt};
use edbench_core::{solve_ed, total_cost, Dispatch, PowerSystem, ScenarioSpec, Strategy};

#[derive(Parser)]
#[command(name = "edbench", version, about = "Economic dispatch benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SystemArg {
    /// System file (CSV or JSON); the bundled IEEE-118 set when omitted.
    #[arg(long)]
    system: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one demand exactly and print the solution as JSON.
    Solve {
        #[command(flatten)]
        system: SystemArg,
        /// Target demand in MW.
        #[arg(long)]
        pd: f64,
        /// Report cost with the constant terms included.
        #[arg(long)]
        include_constants: bool,
    },
    /// Render a prompt and write its text to a file.
    Prompt {
        #[command(flatten)]
        system: SystemArg,
        /// Prompting strategy: non-evolutionary or evolutionary.
        #[arg(long, value_parser = parse_strategy)]
        strategy: Strategy,
        /// Target demand in MW.
        #[arg(long)]
        pd: f64,
        /// Few-shot demands, comma separated; evenly spaced defaults when omitted.
        #[arg(long = "few-shot", value_delimiter = ',')]
        few_shot: Option<Vec<f64>>,
        /// Where to write the prompt text; prompt_<strategy>_<pd>.txt when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the seeded GA baseline against one demand and print the result.
    Ga {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long)]
        pd: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        generations: usize,
        /// Candidate pool size per generation.
        #[arg(long, default_value_t = 10)]
        pool: usize,
        /// Initial mutation scale as a fraction of each unit's range.
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        /// Parent demands solved to form the initial pool.
        #[arg(long = "few-shot", value_delimiter = ',')]
        few_shot: Option<Vec<f64>>,
        /// Mirror the evolutionary prompt literally: one pass of 10
        /// candidates from the provided data, no elitism carryover.
        #[arg(long)]
        prompt_literal: bool,
        /// Skip the exact-balance repair of candidates.
        #[arg(long)]
        no_repair: bool,
        /// Crossover operator.
        #[arg(long, value_parser = parse_crossover, default_value = "uniform-per-gene")]
        crossover: CrossoverMode,
    },
    /// Run a configured benchmark and write its report files.
    Bench {
        /// Run configuration (TOML or JSON).
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-emit report files from a saved results.json.
    Report {
        /// A results.json produced by `bench`.
        #[arg(long)]
        results: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::from_str(s).map_err(|e| e.to_string())
}

fn parse_crossover(s: &str) -> Result<CrossoverMode, String> {
    match s {
        "uniform-per-gene" => Ok(CrossoverMode::UniformPerGene),
        "single-point" => Ok(CrossoverMode::SinglePoint),
        other => Err(format!(
            "unknown crossover `{other}` (expected `uniform-per-gene` or `single-point`)"
        )),
    }
}

enum CliError {
    Domain(edbench_core::Error),
    Usage(String),
}

impl From<edbench_core::Error> for CliError {
    fn from(e: edbench_core::Error) -> Self {
        CliError::Domain(e)
    }
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(CliError::Domain(e)) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            std::process::exit(2);
        }
    }
}

fn load_system_arg(arg: &SystemArg) -> Result<PowerSystem, CliError> {
    match &arg.system {
        None => Ok(PowerSystem::bundled_ieee118()),
        Some(path) => {
            let file = File::open(path).map_err(|e| {
                CliError::Usage(format!("cannot open system file `{}`: {e}", path.display()))
            })?;
            Ok(edbench_core::load_system(file)?)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve {
            system,
            pd,
            include_constants,
        } => {
            let sys = load_system_arg(&system)?;
            let mut sol = solve_ed(&sys, pd)?;
            if include_constants {
                sol.cost = total_cost(&sol.dispatch, &sys, true).expect("solver dims");
            }
            println!("{}", serde_json::to_string_pretty(&sol).expect("serializable"));
            Ok(())
        }
        Command::Prompt {
            system,
            strategy,
            pd,
            few_shot,
            out,
        } => {
            let sys = load_system_arg(&system)?;
            let pds = few_shot.unwrap_or_else(default_few_shot_pds);
            let set = build_few_shot_set(&sys, &pds)?;
            let bundle = render_prompt(&sys, &set, pd, strategy)?;
            let path = out.unwrap_or_else(|| {
                PathBuf::from(format!(
                    "prompt_{}_{}.txt",
                    bundle.strategy,
                    edbench_core::prompt::format_mw(pd)
                ))
            });
            std::fs::write(&path, &bundle.text).map_err(edbench_core::Error::from)?;
            eprintln!("wrote {}", path.display());
            println!("{}", serde_json::to_string_pretty(&bundle).expect("serializable"));
            Ok(())
        }
        Command::Ga {
            system,
            pd,
            seed,
            generations,
            pool,
            sigma,
            few_shot,
            prompt_literal,
            no_repair,
            crossover,
        } => {
            let sys = load_system_arg(&system)?;
            let pds = few_shot.unwrap_or_else(default_few_shot_pds);
            let parents: Vec<Dispatch> = pds
                .iter()
                .map(|&p| solve_ed(&sys, p).map(|s| s.dispatch))
                .collect::<edbench_core::Result<_>>()?;
            let cfg = if prompt_literal {
                GaConfig {
                    mutation_sigma: sigma,
                    ..GaConfig::prompt_literal(seed)
                }
            } else {
                GaConfig {
                    population_target: pool,
                    generations,
                    mutation_sigma: sigma,
                    crossover_mode: crossover,
                    seed,
                    repair: !no_repair,
                    ..GaConfig::default()
                }
            };
            let result = edbench_core::evolve(&sys, pd, &parents, &cfg)?;
            let exact = solve_ed(&sys, pd)?;
            eprintln!(
                "GA best {:.2} vs exact {:.2} ({:+.4}%) in {} evaluations",
                result.best_cost,
                exact.cost,
                (result.best_cost - exact.cost) / exact.cost * 100.0,
                result.evaluations
            );
            println!("{}", serde_json::to_string_pretty(&result).expect("serializable"));
            Ok(())
        }
        Command::Bench { config } => cmd_bench(&config),
        Command::Report { results, out } => {
            let text = std::fs::read_to_string(&results).map_err(|e| {
                CliError::Usage(format!("cannot read `{}`: {e}", results.display()))
            })?;
            let report: BenchmarkReport =
                serde_json::from_str(&text).map_err(edbench_core::Error::from)?;
            let echo = serde_json::json!({ "source": results.display().to_string() });
            let written = emit_report(&report, &out, &echo)?;
            for path in written {
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn cmd_bench(config_path: &Path) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &Path| -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let sys = match &config.system {
        None => PowerSystem::bundled_ieee118(),
        Some(path) => {
            let path = resolve(path);
            let file = File::open(&path).map_err(|e| {
                CliError::Usage(format!("cannot open system file `{}`: {e}", path.display()))
            })?;
            edbench_core::load_system(file)?
        }
    };

    let backend: Box<dyn Backend> = match config.backend {
        BackendKind::Replay => {
            let path = resolve(config.replay_path.as_ref().expect("validated"));
            Box::new(ReplayBackend::new(ReplayStore::open(&path)?))
        }
        BackendKind::Live => {
            // Check credentials before any network activity.
            for model in &config.models {
                if let Some(var) = &model.credential_env {
                    if std::env::var(var).map(|v| v.is_empty()).unwrap_or(true) {
                        return Err(CliError::Usage(format!(
                            "model `{}` needs credential environment variable `{var}`, which is not set",
                            model.name
                        )));
                    }
                }
            }
            let record = match &config.replay_path {
                Some(path) => Some(ReplayStore::create(resolve(path))?),
                None => None,
            };
            Box::new(LiveBackend::new(record))
        }
    };

    let spec = ScenarioSpec {
        few_shot_pds: config.few_shot_pds.clone(),
        eval_pds: config.eval_pds.clone(),
    };
    let options = RunOptions {
        concurrency: config.concurrency,
        include_constants: config.include_constants,
    };
    let report = run_benchmark(
        &sys,
        &spec,
        &config.models,
        &config.strategies,
        backend.as_ref(),
        &options,
    )?;

    let out_dir = resolve(&config.output_dir);
    let echo = serde_json::to_value(&config).expect("serializable");
    let written = emit_report(&report, &out_dir, &echo)?;

    for s in &report.summaries {
        eprintln!(
            "{} / {}: scored {}, failed {}, mean rel err {}%, mean violations gen {} MW / balance {} MW",
            s.strategy,
            s.model,
            s.scored,
            s.failed,
            s.mean_rel_error_pct.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
            s.mean_gen_violation.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into()),
            s.mean_balance_violation.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into()),
        );
    }
    for path in &written {
        eprintln!("wrote {}", path.display());
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "summaries": report.summaries,
            "strategy_summaries": report.strategy_summaries,
            "output_dir": out_dir.display().to_string(),
        }))
        .expect("serializable")
    );
    Ok(())
}
