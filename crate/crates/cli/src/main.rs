//! Command-line front end: train, evaluate, emit plot data, inspect sizes.
//!
//! Exit codes: 0 ok, 1 runtime failure, 2 usage or configuration error.

mod plot;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use irslab::nn::count::{count_parameters, published_count, ActorFamily};
use irslab::nn::Checkpoint;
use irslab::train::{self, Algorithm, RunConfig};

use plot::{moving_average, svg_chart, two_column, Curve, MOVING_AVERAGE_WINDOW};

#[derive(Parser, Debug)]
#[command(name = "irslab", version, about = "Multi-IRS beamforming simulator and hierarchical multi-agent learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one algorithm and write a fresh run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed. Falls back to IRSLAB_SEED.
        #[arg(long, env = "IRSLAB_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config algorithm.
        #[arg(long, value_parser = parse_algorithm)]
        algo: Option<Algorithm>,
    },
    /// Roll out a frozen checkpoint with exploration off.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: usize,
        #[arg(long, env = "IRSLAB_SEED")]
        seed: u64,
        /// JSON summary destination.
        #[arg(long, default_value = "eval-summary.json")]
        json_out: PathBuf,
    },
    /// Per-run curve files, moving averages and SVG charts.
    Plotdata {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "reward,rate,satisfaction")]
        curves: Vec<Curve>,
    },
    /// Closed-form versus constructed weight counts.
    Inspect {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: irslab::Error| e.to_string())
}

/// Marks failures that deserve exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    RunConfig::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_train(config: &Path, seed: Option<u64>, out: &Path, algo: Option<Algorithm>) -> anyhow::Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(a) = algo {
        cfg.algorithm = a;
    }
    log::info!("training {} seed {} for {} epochs into {}", cfg.algorithm, cfg.seed, cfg.epochs, out.display());
    let run = train::run_training(&cfg, out).with_context(|| format!("training into {}", out.display()))?;
    println!(
        "{} seed {}: {} epochs, last-50 mean reward {:.6}, run directory {}",
        cfg.algorithm,
        cfg.seed,
        run.metrics.len(),
        train::converged_reward(&run.metrics, 50),
        out.display()
    );
    Ok(())
}

fn cmd_eval(checkpoint: &Path, episodes: usize, seed: u64, json_out: &Path) -> anyhow::Result<()> {
    if episodes == 0 {
        return Err(usage("--episodes must be >= 1"));
    }
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let s = train::evaluate_policy(&ck, episodes, seed)?;
    println!(
        "{} episodes={} seed={} reward={:.6}+-{:.6} rate={:.6}+-{:.6} satisfaction={:.4}+-{:.4} power_violations={} energy_violations={}",
        s.algorithm,
        s.episodes,
        s.seed,
        s.reward.mean,
        s.reward.std,
        s.rate.mean,
        s.rate.std,
        s.satisfaction.mean,
        s.satisfaction.std,
        s.power_violations,
        s.energy_violations
    );
    fs::write(json_out, serde_json::to_string_pretty(&s)?).with_context(|| format!("writing {}", json_out.display()))?;
    Ok(())
}

fn cmd_plotdata(runs: &[PathBuf], out: &Path, curves: &[Curve]) -> anyhow::Result<()> {
    if out.exists() && fs::read_dir(out).map(|mut d| d.next().is_some()).unwrap_or(true) {
        bail!("{} already exists and is not empty", out.display());
    }
    let mut labelled = Vec::with_capacity(runs.len());
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for run in runs {
        let metrics = train::read_metrics(&run.join("metrics.csv")).with_context(|| format!("reading run {}", run.display()))?;
        let base = run.file_name().map_or_else(|| "run".to_string(), |n| n.to_string_lossy().into_owned());
        let count = seen.entry(base.clone()).or_insert(0);
        *count += 1;
        let label = if *count == 1 { base } else { format!("{base}-{count}") };
        labelled.push((label, metrics));
    }
    fs::create_dir_all(out)?;
    for &curve in curves {
        let mut series = Vec::with_capacity(labelled.len());
        for (label, metrics) in &labelled {
            let epochs: Vec<usize> = metrics.iter().map(|m| m.epoch).collect();
            let values: Vec<f64> = metrics.iter().map(|m| curve.value(m)).collect();
            let smooth = moving_average(&values, MOVING_AVERAGE_WINDOW);
            fs::write(out.join(format!("{label}.{}.csv", curve.name())), two_column(&epochs, &values))?;
            fs::write(out.join(format!("{label}.{}.ma{MOVING_AVERAGE_WINDOW}.csv", curve.name())), two_column(&epochs, &smooth))?;
            series.push((label.clone(), epochs.iter().map(|&e| e as f64).zip(smooth).collect()));
        }
        let title = format!("{} (moving average, window {MOVING_AVERAGE_WINDOW})", curve.name());
        fs::write(out.join(format!("{}.svg", curve.name())), svg_chart(&title, &series))?;
    }
    println!("wrote {} curve(s) for {} run(s) to {}", curves.len(), labelled.len(), out.display());
    Ok(())
}

fn cmd_inspect(config: &Path) -> anyhow::Result<bool> {
    let cfg = load_config(config)?;
    let size = train::problem_size(&cfg);
    println!(
        "L={} K={} N={} M={} resolutions={:?}",
        size.num_irs, size.num_users, size.num_elements, size.bs_antennas, cfg.env.irs.resolutions
    );
    let mut all_match = true;
    for (algo, family) in [(Algorithm::MaqWp, ActorFamily::Wolpertinger), (Algorithm::MaqPg, ActorFamily::ProtoGaussian)] {
        let c = RunConfig { algorithm: algo, ..cfg.clone() };
        let breakdown = count_parameters(&c.network, size, family)?;
        let (formula, constructed) = train::parameter_counts(&c)?;
        println!("{algo}:");
        for (name, n) in &breakdown.terms {
            println!("  {name:<20} {n}");
        }
        let verdict = if formula == constructed { "match" } else { "MISMATCH" };
        println!("  formula count        {formula}");
        println!("  constructed count    {constructed}  [{verdict}]");
        all_match &= formula == constructed;
    }
    println!("published expression   {}", published_count(&cfg.network, size)?);
    Ok(all_match)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, seed, out, algo } => cmd_train(&config, seed, &out, algo),
        Command::Eval {
            checkpoint,
            episodes,
            seed,
            json_out,
        } => cmd_eval(&checkpoint, episodes, seed, &json_out),
        Command::Plotdata { runs, out, curves } => cmd_plotdata(&runs, &out, &curves),
        Command::Inspect { config } => {
            if cmd_inspect(&config)? {
                Ok(())
            } else {
                bail!("formula and constructed counts differ")
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
