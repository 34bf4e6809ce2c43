use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use super::{draw_seeds, measure_theta, AuditReport, RatioRow, Stats, Theta, UtilityRow, Violation};
use crate::equilibrium::{simulate_trades, worst_case_utilities};
use crate::mechanisms::{MechanismId, MechanismOutcome};
use crate::model::{
    generate_random_instance, Distributions, Instance, InstanceFamily, RandomSource, ReportProfile,
};
use crate::{Error, Result, TOL};

/// One trial's instance plus the seed for the mechanism's own coins. Both come
/// from the trial seed alone.
fn trial_instance(family: &InstanceFamily, seed: u64) -> Result<(Instance, u64)> {
    let mut rng = RandomSource::new(seed);
    let instance = family.sample(&mut rng)?;
    Ok((instance, rng.next_u64()))
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    Ok(())
}

fn ratio_row(instance: &Instance, outcome: &MechanismOutcome, seed: u64) -> RatioRow {
    RatioRow {
        instance_digest: instance.digest(),
        n: instance.len(),
        opt: outcome.opt,
        mlw: outcome.welfare_worst,
        ratio: outcome.ratio(),
        subsidy: outcome.subsidy,
        seed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthfulnessOptions {
    /// Multiplicative misreports `10^-2 .. 10^2`, log-spaced.
    pub grid_points: usize,
    /// Also try every other agent's exact value (and 0).
    pub tie_probes: bool,
    /// Relative gain above which a misreport counts as profitable.
    pub tolerance: f64,
}

impl Default for TruthfulnessOptions {
    fn default() -> Self {
        Self {
            grid_points: 50,
            tie_probes: true,
            tolerance: TOL,
        }
    }
}

fn log_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..points)
            .map(|j| 10f64.powf(-2.0 + 4.0 * j as f64 / (points - 1) as f64))
            .collect(),
    }
}

/// Misreports for canonical position `i`, labeled for the utility table.
fn misreports(
    instance: &Instance,
    i: usize,
    opts: &TruthfulnessOptions,
    multi_parameter: bool,
) -> Vec<(String, ReportProfile)> {
    let agents = instance.agents();
    let me = agents[i];
    let grid = log_grid(opts.grid_points);
    let scaled = |x: f64, fallback: f64| {
        let base = if x > 0.0 { x } else { fallback };
        grid.iter().map(move |m| base * m)
    };
    let value_scale = agents.iter().map(|a| a.value).fold(0.0, f64::max).max(1.0);
    let truthful = instance.truthful_reports();
    let mut out: Vec<(String, ReportProfile)> = scaled(me.value, value_scale)
        .map(|v| (format!("v={v}"), truthful.clone().with_value(i, v)))
        .collect();
    if opts.tie_probes {
        for (j, a) in agents.iter().enumerate() {
            if j != i {
                out.push((format!("v={}", a.value), truthful.clone().with_value(i, a.value)));
            }
        }
        out.push(("v=0".into(), truthful.clone().with_value(i, 0.0)));
    }
    if multi_parameter {
        for b in scaled(me.budget, 1.0) {
            out.push((format!("B={b}"), truthful.clone().with_budget(instance, i, b)));
        }
        for g in scaled(me.endowment, 1.0) {
            out.push((format!("Gamma={g}"), truthful.clone().with_endowment(instance, i, g)));
        }
    }
    out
}

fn truthfulness_trial(
    mechanism: MechanismId,
    instance: &Instance,
    seed: u64,
    mech_seed: u64,
    opts: &TruthfulnessOptions,
) -> Result<(Vec<Violation>, Vec<UtilityRow>)> {
    let agents = instance.agents();
    let worst_utility = |reports: &ReportProfile, i: usize| -> Result<f64> {
        let (cs, _, _) = mechanism.constraints(instance, reports, mech_seed)?;
        Ok(worst_case_utilities(agents, &cs)[i])
    };
    let (cs, _, _) = mechanism.constraints(instance, &instance.truthful_reports(), mech_seed)?;
    let truthful = worst_case_utilities(agents, &cs);
    let digest = instance.digest();
    let mut violations = Vec::new();
    let mut rows = Vec::new();
    for (i, &honest) in truthful.iter().enumerate() {
        let mut best = (honest, "truthful".to_string());
        for (label, reports) in misreports(instance, i, opts, mechanism.multi_parameter()) {
            let u = worst_utility(&reports, i)?;
            if u > best.0 {
                best = (u, label);
            }
        }
        let agent = instance.original_index()[i];
        let gain = best.0 - honest;
        if gain > opts.tolerance * honest.abs().max(1.0) {
            violations.push(Violation {
                instance_digest: digest.clone(),
                agent: Some(agent),
                seed: Some(seed),
                detail: format!(
                    "misreport {} raises worst-case utility from {} to {} (gain {gain:e})",
                    best.1, honest, best.0
                ),
            });
        }
        rows.push(UtilityRow {
            instance_digest: digest.clone(),
            agent,
            truthful: honest,
            best_misreport: best.1,
            best: best.0,
        });
    }
    Ok((violations, rows))
}

/// Tries grid misreports for every agent of `trials` sampled instances and
/// records any that raise the agent's worst-case utility. Randomized
/// mechanisms reuse the same coins for the truthful and misreported runs.
pub fn audit_truthfulness(
    mechanism: MechanismId,
    family: &InstanceFamily,
    trials: usize,
    rng: &mut RandomSource,
    opts: &TruthfulnessOptions,
) -> Result<AuditReport> {
    check_trials(trials)?;
    mechanism.validate()?;
    let results: Vec<_> = draw_seeds(rng, trials)
        .into_par_iter()
        .map(|seed| {
            let (instance, mech_seed) = trial_instance(family, seed)?;
            truthfulness_trial(mechanism, &instance, seed, mech_seed, opts)
        })
        .collect::<Result<_>>()?;
    let mut report = AuditReport::new("truthfulness", Some(mechanism.name()));
    report.instances_tested = trials;
    for (violations, rows) in results {
        report.violations.extend(violations);
        report.utility_table.extend(rows);
    }
    let gains: Vec<f64> = report.utility_table.iter().map(|r| r.best - r.truthful).collect();
    report
        .metrics
        .insert("max_gain".into(), gains.iter().copied().fold(0.0, f64::max));
    report.metrics.insert("misreport_grid".into(), opts.grid_points as f64);
    report.finish();
    Ok(report)
}

/// Worst-case welfare over optimum on sampled instances; a ratio below
/// `floor` is a violation.
pub fn audit_ratio(
    mechanism: MechanismId,
    family: &InstanceFamily,
    trials: usize,
    rng: &mut RandomSource,
    floor: Option<f64>,
) -> Result<AuditReport> {
    check_trials(trials)?;
    mechanism.validate()?;
    let rows: Vec<RatioRow> = draw_seeds(rng, trials)
        .into_par_iter()
        .map(|seed| {
            let (instance, mech_seed) = trial_instance(family, seed)?;
            let outcome = mechanism.run_truthful(&instance, mech_seed)?;
            Ok(ratio_row(&instance, &outcome, seed))
        })
        .collect::<Result<_>>()?;
    let mut report = AuditReport::new("ratio", Some(mechanism.name()));
    report.instances_tested = trials;
    if let Some(floor) = floor {
        report.metrics.insert("floor".into(), floor);
        for r in rows.iter().filter(|r| r.ratio < floor - TOL) {
            report.violations.push(Violation {
                instance_digest: r.instance_digest.clone(),
                agent: None,
                seed: Some(r.seed),
                detail: format!("ratio {} below floor {floor}", r.ratio),
            });
        }
    }
    report.rows = rows;
    report.finish();
    Ok(report)
}

/// Uniform-price mechanisms: every simulated reachable state balances
/// payments. Differential pricing: the subsidy never exceeds the agents'
/// total utility.
pub fn audit_profitability(
    mechanism: MechanismId,
    family: &InstanceFamily,
    trials: usize,
    rng: &mut RandomSource,
    sim_seeds: usize,
) -> Result<AuditReport> {
    check_trials(trials)?;
    mechanism.validate()?;
    let results: Vec<(RatioRow, Vec<Violation>)> = draw_seeds(rng, trials)
        .into_par_iter()
        .map(|seed| {
            let (instance, mech_seed) = trial_instance(family, seed)?;
            let outcome = mechanism.run_truthful(&instance, mech_seed)?;
            let row = ratio_row(&instance, &outcome, seed);
            let violation = |detail: String| Violation {
                instance_digest: row.instance_digest.clone(),
                agent: None,
                seed: Some(seed),
                detail,
            };
            let mut violations = Vec::new();
            if mechanism == MechanismId::Differential {
                let utility: f64 = outcome.worst_utilities.iter().sum();
                if outcome.subsidy > utility + TOL * utility.abs().max(1.0) {
                    violations.push(violation(format!(
                        "subsidy {} exceeds total utility {utility}",
                        outcome.subsidy
                    )));
                }
            } else {
                let agents = instance.agents();
                let max_steps = 10 * agents.len() + 10;
                let mut sim_rng = RandomSource::new(mech_seed);
                for _ in 0..sim_seeds {
                    let mut r = sim_rng.fork();
                    let state = simulate_trades(agents, &outcome.constraints, &mut r, max_steps)?;
                    let scale = state.payments.iter().map(|p| p.abs()).sum::<f64>().max(1.0);
                    if state.net_payment().abs() > TOL * scale {
                        violations.push(violation(format!(
                            "simulated state has net payment {}",
                            state.net_payment()
                        )));
                    }
                }
            }
            Ok((row, violations))
        })
        .collect::<Result<_>>()?;
    let mut report = AuditReport::new("profitability", Some(mechanism.name()));
    report.instances_tested = trials;
    report.metrics.insert("simulations_per_instance".into(), sim_seeds as f64);
    for (row, violations) in results {
        report.rows.push(row);
        report.violations.extend(violations);
    }
    report.finish();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LargeMarketConfig {
    pub n: usize,
    pub beta: f64,
    pub seeds: usize,
    pub multi_parameter: bool,
    pub dists: Distributions,
    /// Ratio each run should reach.
    pub floor: f64,
    /// Share of runs that must reach `floor`.
    pub min_fraction: f64,
    pub seed: u64,
}

impl LargeMarketConfig {
    /// Parameters uniform on `[1, 2]`, floor 0.35 in 95% of runs.
    pub fn new(n: usize, beta: f64, seeds: usize, multi_parameter: bool) -> Self {
        Self {
            n,
            beta,
            seeds,
            multi_parameter,
            dists: Distributions::uniform(1.0, 2.0),
            floor: 0.35,
            min_fraction: 0.95,
            seed: 0,
        }
    }
}

/// Runs a sampling mechanism on fresh i.i.d. instances, one per seed, and
/// reports the ratio distribution and the largest dominance ratios seen.
pub fn large_market_campaign(cfg: &LargeMarketConfig) -> Result<AuditReport> {
    check_trials(cfg.seeds)?;
    let mechanism = if cfg.multi_parameter {
        MechanismId::UniformLargeMp { beta: cfg.beta }
    } else {
        MechanismId::UniformLarge { beta: cfg.beta }
    };
    mechanism.validate()?;
    cfg.dists.validate()?;
    let seeds = draw_seeds(&mut RandomSource::new(cfg.seed), cfg.seeds);
    let results: Vec<(RatioRow, Theta, bool)> = seeds
        .into_par_iter()
        .map(|seed| {
            let mut rng = RandomSource::new(seed);
            let instance = generate_random_instance(cfg.n, &cfg.dists, &mut rng)?;
            let outcome = mechanism.run_truthful(&instance, rng.next_u64())?;
            Ok((ratio_row(&instance, &outcome, seed), measure_theta(&instance), outcome.welfare_exact))
        })
        .collect::<Result<_>>()?;

    let mut report = AuditReport::new("large-market", Some(mechanism.name()));
    report.instances_tested = cfg.seeds;
    report.small_market = cfg.n < 100;
    if report.small_market {
        report.notes.push(format!("n = {} is below 100; no guarantee applies", cfg.n));
    }
    let mut theta = Theta::default();
    let mut met = 0usize;
    let mut lower_bounds = 0usize;
    for (row, t, exact) in results {
        theta = theta.max(t);
        met += usize::from(row.ratio >= cfg.floor);
        lower_bounds += usize::from(!exact);
        report.rows.push(row);
    }
    if lower_bounds > 0 {
        report.notes.push(format!(
            "{lower_bounds} runs report a lower bound on worst-case welfare"
        ));
    }
    let fraction = met as f64 / cfg.seeds as f64;
    report.large_market_params = Some(theta);
    report.subsidy_stats = Stats::of(&report.rows.iter().map(|r| r.subsidy).collect::<Vec<_>>());
    report.metrics.extend([
        ("n".to_string(), cfg.n as f64),
        ("beta".to_string(), cfg.beta),
        ("floor".to_string(), cfg.floor),
        ("min_fraction".to_string(), cfg.min_fraction),
        ("fraction_meeting_floor".to_string(), fraction),
        ("target_ratio".to_string(), (1.0 - cfg.beta) / 2.0),
    ]);
    if fraction < cfg.min_fraction {
        report.violations.push(Violation {
            instance_digest: String::new(),
            agent: None,
            seed: Some(cfg.seed),
            detail: format!(
                "only {fraction} of runs reach ratio {} (need {})",
                cfg.floor, cfg.min_fraction
            ),
        });
    }
    report.finish();
    Ok(report)
}
