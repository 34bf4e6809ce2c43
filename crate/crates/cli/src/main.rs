//! `exmarket`: generate instances, run mechanisms, simulate trading and audit.
//!
//! Exit codes: 0 on success, 1 when an audit finds violations, 2 on usage,
//! schema or runtime errors.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use exmarket::audit::{
    audit_profitability, audit_ratio, audit_truthfulness, large_market_campaign, lower_bound_sweep,
    measure_theta, AuditReport, LargeMarketConfig, TruthfulnessOptions,
};
use exmarket::equilibrium::{self, simulate_trades, EXACT_LIMIT};
use exmarket::mechanisms::MechanismId;
use exmarket::model::io::{instance_to_json, outcome_to_json, read_constraints, read_instance};
use exmarket::model::{
    generate_random_instance, Distributions, Instance, InstanceFamily, MarketState, RandomSource,
};
use exmarket::welfare;

#[derive(Parser)]
#[command(name = "exmarket", version, about = "Exchange-market mechanisms and audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dist {
    /// Heterogeneous small markets with some pure buyers and sellers.
    Small,
    /// Every parameter uniform on [1, 2].
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum Campaign {
    Truthfulness,
    Ratio,
    Profitability,
    LargeMarket,
    LowerBound,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random instance.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "small")]
        dist: Dist,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal welfare and distribution.
    Opt {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Market-optimal price and its exchange intervals.
    Mop {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a mechanism on truthful reports.
    Run {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        mechanism: String,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Let agents trade under the constraints of an outcome document.
    Simulate {
        #[arg(long)]
        instance: PathBuf,
        /// Outcome document holding a `constraints` array.
        #[arg(long)]
        constraints: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an audit campaign.
    Audit {
        #[arg(long, value_enum)]
        campaign: Campaign,
        #[arg(long)]
        mechanism: Option<String>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Instances to draw; seeds for the large-market campaign.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Largest agent count for random families; market size for the
        /// large-market campaign.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Price grid size for the lower-bound sweep.
        #[arg(long, default_value_t = 10_000)]
        grid: usize,
        /// Simulations per instance in the profitability campaign.
        #[arg(long, default_value_t = 10)]
        sim_seeds: usize,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dominance ratios of an instance.
    Theta {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

type Failure = Box<dyn std::error::Error>;

fn emit(text: String, out: Option<&PathBuf>) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes")
}

fn dists(d: Dist) -> Distributions {
    match d {
        Dist::Small => Distributions::small_market(),
        Dist::Uniform => Distributions::uniform(1.0, 2.0),
    }
}

fn mechanism(name: Option<&str>, beta: Option<f64>) -> Result<MechanismId, Failure> {
    let name = name.ok_or("this campaign needs --mechanism")?;
    let beta = match name {
        "uniform-large" | "uniform-large-mp" => Some(beta.unwrap_or(0.1)),
        _ => beta,
    };
    Ok(MechanismId::parse(name, beta)?)
}

fn state_json(instance: &Instance, state: &MarketState) -> Value {
    json!({
        "x": instance.to_input_order(&state.trades),
        "p": instance.to_input_order(&state.payments),
    })
}

fn audit(cmd: &Command) -> Result<AuditReport, Failure> {
    let Command::Audit {
        campaign,
        mechanism: name,
        beta,
        seed,
        trials,
        n,
        epsilon,
        grid,
        sim_seeds,
        ..
    } = cmd
    else {
        unreachable!()
    };
    let mut rng = RandomSource::new(*seed);
    let family = || InstanceFamily::new(1, n.unwrap_or(8), Distributions::small_market());
    let report = match campaign {
        Campaign::Truthfulness => audit_truthfulness(
            mechanism(name.as_deref(), *beta)?,
            &family()?,
            *trials,
            &mut rng,
            &TruthfulnessOptions::default(),
        )?,
        Campaign::Ratio => {
            let m = mechanism(name.as_deref(), *beta)?;
            let floor = matches!(m, MechanismId::Differential | MechanismId::MopDirect).then_some(0.5);
            audit_ratio(m, &family()?, *trials, &mut rng, floor)?
        }
        Campaign::Profitability => audit_profitability(
            mechanism(name.as_deref(), *beta)?,
            &family()?,
            *trials,
            &mut rng,
            *sim_seeds,
        )?,
        Campaign::LargeMarket => {
            let m = mechanism(Some(name.as_deref().unwrap_or("uniform-large")), *beta)?;
            let (beta, mp) = match m {
                MechanismId::UniformLarge { beta } => (beta, false),
                MechanismId::UniformLargeMp { beta } => (beta, true),
                other => return Err(format!("large-market campaign needs a sampling mechanism, not {other}").into()),
            };
            let mut cfg = LargeMarketConfig::new(n.unwrap_or(2000), beta, *trials, mp);
            cfg.seed = *seed;
            large_market_campaign(&cfg)?
        }
        Campaign::LowerBound => lower_bound_sweep(*epsilon, *grid)?,
    };
    Ok(report)
}

fn execute(cmd: Command) -> Result<ExitCode, Failure> {
    match &cmd {
        Command::Gen { n, seed, dist, out } => {
            let inst = generate_random_instance(*n, &dists(*dist), &mut RandomSource::new(*seed))?;
            emit(instance_to_json(&inst), out.as_ref())?;
        }
        Command::Opt { instance, out } => {
            let inst = read_instance(instance)?;
            let od = welfare::optimal_distribution(&inst);
            let doc = json!({
                "opt": od.opt,
                "k_star": od.k_star,
                "x_star": inst.to_input_order(&od.x_star),
                "lambda_bar": welfare::approx_price(&inst).ok(),
            });
            emit(pretty(&doc), out.as_ref())?;
        }
        Command::Mop { instance, out } => {
            let inst = read_instance(instance)?;
            let out_doc = MechanismId::MopDirect.run_truthful(&inst, 0)?;
            emit(pretty(&outcome_to_json(&inst, &out_doc)), out.as_ref())?;
        }
        Command::Run {
            instance,
            mechanism: name,
            beta,
            seed,
            out,
        } => {
            let inst = read_instance(instance)?;
            let m = mechanism(Some(name), *beta)?;
            let outcome = m.run_truthful(&inst, *seed)?;
            emit(pretty(&outcome_to_json(&inst, &outcome)), out.as_ref())?;
        }
        Command::Simulate {
            instance,
            constraints,
            seed,
            steps,
            out,
        } => {
            let inst = read_instance(instance)?;
            let cs = read_constraints(constraints, &inst)?;
            equilibrium::check_constraints(inst.agents(), &cs)?;
            let state = simulate_trades(inst.agents(), &cs, &mut RandomSource::new(*seed), *steps)?;
            let summary = equilibrium::summarize(inst.agents(), &cs, EXACT_LIMIT);
            let mut doc = state_json(&inst, &state);
            doc["mlw"] = json!(welfare::mlw(&inst, &state.trades)?);
            doc["unique"] = json!(summary.unique);
            doc["mlw_worst"] = json!(summary.worst_welfare.value);
            doc["mlw_worst_exact"] = json!(summary.worst_welfare.exact);
            emit(pretty(&doc), out.as_ref())?;
        }
        Command::Audit { format, out, .. } => {
            let report = audit(&cmd)?;
            let text = match format {
                Format::Json => report.to_json(),
                Format::Csv => report.to_csv(),
            };
            emit(text.trim_end().to_string(), out.as_ref())?;
            if !report.passed() {
                eprintln!("audit found {} violations", report.violations.len());
                return Ok(ExitCode::from(1));
            }
        }
        Command::Theta { instance, out } => {
            let inst = read_instance(instance)?;
            emit(pretty(&json!(measure_theta(&inst))), out.as_ref())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
