use std::path::PathBuf;
use std::process::ExitCode;

use abcsmc_core::diagnostics::{mean, quantiles, sample_variance};
use abcsmc_core::models::{BirthDeathData, Hierarchical, HierarchicalSpec, ModelConfig};
use abcsmc_core::tables::format_real;
use abcsmc_core::rng;
use abcsmc_cli::oracle::Exact;
use abcsmc_cli::{run_experiment, CliError, RunOptions};
use clap::{Parser, Subcommand};
use serde_json::json;

/// Likelihood-free inference with random forests.
#[derive(Parser)]
#[command(name = "abcsmc", version)]
struct Cli {
    /// Override the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (`run`, `oracle`) or file (`simulate`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Simulate summary statistics of a model at fixed parameters.
    Simulate {
        model: String,
        #[arg(allow_negative_numbers = true, required = true)]
        params: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
    },
    /// Exact posteriors and likelihoods:
    /// `coalescent <C>`, `birth_death [data.csv] [<lambda> <mu>]`,
    /// `hierarchical <y1> <y2> ...`.
    Oracle {
        model: String,
        #[arg(allow_negative_numbers = true)]
        args: Vec<String>,
    },
}

const LEVELS: [f64; 3] = [0.025, 0.5, 0.975];

fn numbers(args: &[String]) -> Result<Vec<f64>, CliError> {
    args.iter()
        .map(|a| a.parse::<f64>().map_err(|_| CliError::Config(format!("expected a number, got {a:?}"))))
        .collect()
}

fn simulate(model: &str, params: &[f64], replicates: usize, seed: u64, out: Option<PathBuf>) -> Result<(), CliError> {
    let model = ModelConfig::by_name(model).map_err(|e| CliError::Config(e.to_string()))?.build()?;
    if params.len() != model.n_params() {
        return Err(CliError::Config(format!(
            "{} takes {} parameters ({}), got {}",
            model.name(),
            model.n_params(),
            model.param_names().join(", "),
            params.len()
        )));
    }
    let mut text = model.stat_names().join(",") + "\n";
    for i in 0..replicates {
        let stats = model
            .simulate(params, &mut rng::stream(seed, i as u64))
            .map_err(|f| CliError::Runtime(f.0))?;
        let cells: Vec<String> = stats.iter().map(|v| format_real(*v)).collect();
        text += &(cells.join(",") + "\n");
    }
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn grid_summary(exact: &Exact, names: &[&str], out: Option<PathBuf>) -> Result<serde_json::Value, CliError> {
    let grids = exact.marginal_grids()?.expect("grid posterior");
    let mut summary = serde_json::Map::new();
    let mut csv = String::from("parameter,x,density\n");
    for (g, name) in grids.iter().zip(names) {
        summary.insert(
            name.to_string(),
            json!({ "mean": g.mean(), "sd": g.sd(), "quantiles": { "0.025": g.quantile(0.025), "0.5": g.quantile(0.5), "0.975": g.quantile(0.975) } }),
        );
        for (x, d) in g.x.iter().zip(&g.density) {
            csv += &format!("{name},{},{}\n", format_real(*x), format_real(*d));
        }
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("oracle_density.csv"), csv)?;
    }
    Ok(summary.into())
}

fn oracle(model: &str, args: &[String], seed: u64, out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = ModelConfig::by_name(model).map_err(|e| CliError::Config(e.to_string()))?;
    let report = match &cfg {
        ModelConfig::Coalescent(_) => {
            let [c] = numbers(args)?[..] else {
                return Err(CliError::Config("usage: oracle coalescent <C>".into()));
            };
            let exact = Exact::for_observation(&cfg, &[c], None)
                .ok_or_else(|| CliError::Config(format!("C must be a nonnegative integer, got {c}")))?;
            grid_summary(&exact, &["theta"], out)?
        }
        ModelConfig::BirthDeath(spec) => {
            let (data, rest) = match args.first() {
                Some(a) if a.parse::<f64>().is_err() => {
                    let text = std::fs::read_to_string(a).map_err(|e| CliError::Config(format!("cannot read {a}: {e}")))?;
                    let data = BirthDeathData::parse(&text, spec.initial).map_err(|e| CliError::Config(format!("{a}: {e}")))?;
                    (data, &args[1..])
                }
                _ => (BirthDeathData::bundled(), args),
            };
            let mut model_spec = spec.clone();
            model_spec.times = data.times.clone();
            let exact = Exact::for_observation(&ModelConfig::BirthDeath(model_spec), &data.stats(), None)
                .ok_or_else(|| CliError::Config("birth-death data must hold nonnegative integer counts".into()))?;
            match numbers(rest)?[..] {
                [] => grid_summary(&exact, &["lambda", "mu"], out)?,
                [l, m] => json!({ "lambda": l, "mu": m, "log_likelihood": exact.log_likelihood(&[l, m]) }),
                _ => return Err(CliError::Config("usage: oracle birth_death [data.csv] [<lambda> <mu>]".into())),
            }
        }
        ModelConfig::Hierarchical(_) => {
            let y = numbers(args)?;
            if y.len() < 2 {
                return Err(CliError::Config("usage: oracle hierarchical <y1> <y2> ...".into()));
            }
            let h = Hierarchical::new(HierarchicalSpec {
                sample_size: y.len(),
                ..Default::default()
            })?;
            let draws = h.exact_posterior_sample(&y, 100_000, &mut rng::stream(seed, 0));
            let mut summary = serde_json::Map::new();
            for (j, name) in ["theta1", "theta2"].iter().enumerate() {
                let c: Vec<f64> = draws.chunks(2).map(|p| p[j]).collect();
                let q = quantiles(&c, &LEVELS);
                summary.insert(
                    name.to_string(),
                    json!({ "mean": mean(&c), "sd": sample_variance(&c).sqrt(), "quantiles": { "0.025": q[0], "0.5": q[1], "0.975": q[2] } }),
                );
            }
            summary.into()
        }
        _ => return Err(CliError::Config(format!("{model} has no exact posterior; oracles exist for coalescent, birth_death and hierarchical"))),
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("json"));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Run { config } => {
            let summary = run_experiment(
                &config,
                &RunOptions {
                    seed: cli.seed,
                    out: cli.out,
                },
            )?;
            let names = summary.posterior.param_names();
            for (j, (m, v)) in summary.posterior.mean().iter().zip(summary.posterior.variance()).enumerate() {
                println!("{}: mean {m:.6} sd {:.6}", names[j], v.sqrt());
            }
            println!("{} simulator calls; wrote {}", summary.simulator_calls, summary.out.display());
            Ok(())
        }
        Command::Simulate {
            model,
            params,
            replicates,
        } => simulate(&model, &params, replicates, seed, cli.out),
        Command::Oracle { model, args } => oracle(&model, &args, seed, cli.out),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("abcsmc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
