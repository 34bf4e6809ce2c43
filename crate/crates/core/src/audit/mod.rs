//! Seeded experiment campaigns and their reports.
//!
//! Every campaign draws all of its seeds up front from one [`RandomSource`],
//! evaluates trials in parallel and collects results in trial order, so the
//! same configuration and seed always produce the same report.

mod campaigns;

pub use campaigns::{
    audit_profitability, audit_ratio, audit_truthfulness, large_market_campaign,
    LargeMarketConfig, TruthfulnessOptions,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::equilibrium::{worst_reachable_welfare, EXACT_LIMIT};
use crate::model::{ExchangeConstraint, Instance, RandomSource};
use crate::welfare::optimal_distribution;
use crate::{Error, Result, TOL};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub instance_digest: String,
    /// Input-order index of the agent concerned, if any.
    pub agent: Option<usize>,
    pub seed: Option<u64>,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        Some(Self {
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            mean: xs.iter().sum::<f64>() / xs.len() as f64,
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Worst-case utility of one agent when truthful versus its best misreport.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilityRow {
    pub instance_digest: String,
    pub agent: usize,
    pub truthful: f64,
    pub best_misreport: String,
    pub best: f64,
}

/// One line of the per-instance CSV table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub instance_digest: String,
    pub n: usize,
    pub opt: f64,
    pub mlw: f64,
    pub ratio: f64,
    pub subsidy: f64,
    pub seed: u64,
}

/// How close an instance is to having a dominant agent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Theta {
    /// Largest share of optimal welfare held by one agent.
    pub contribution: f64,
    /// Largest share of optimal purchases made by one buyer.
    pub demand: f64,
    /// Largest share of optimal sales made by one seller.
    pub supply: f64,
    /// Largest share of all resources held by one agent.
    pub holdings: f64,
}

impl Theta {
    pub fn max(self, other: Theta) -> Theta {
        Theta {
            contribution: self.contribution.max(other.contribution),
            demand: self.demand.max(other.demand),
            supply: self.supply.max(other.supply),
            holdings: self.holdings.max(other.holdings),
        }
    }
}

fn largest_share(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let total: f64 = xs.clone().sum();
    if total > 0.0 {
        xs.fold(0.0, f64::max) / total
    } else {
        0.0
    }
}

/// Measures the four dominance ratios against the optimal distribution. Empty
/// sides and single-agent markets count as 0.
pub fn measure_theta(instance: &Instance) -> Theta {
    if instance.len() < 2 {
        return Theta::default();
    }
    let od = optimal_distribution(instance);
    let agents = instance.agents();
    let contribution = if od.opt > 0.0 {
        agents
            .iter()
            .zip(&od.x_star)
            .map(|(a, &x)| a.liquid_value(x))
            .fold(0.0, f64::max)
            / od.opt
    } else {
        0.0
    };
    let bought = od.x_star.iter().copied().filter(|&x| x >= 0.0);
    let sold = od.x_star.iter().copied().filter(|&x| x < 0.0).map(f64::abs);
    Theta {
        contribution,
        demand: largest_share(bought),
        supply: largest_share(sold),
        holdings: largest_share(agents.iter().map(|a| a.endowment)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub campaign: String,
    pub mechanism: Option<String>,
    pub instances_tested: usize,
    pub violations: Vec<Violation>,
    pub worst_ratio: Option<f64>,
    pub median_ratio: Option<f64>,
    pub subsidy_stats: Option<Stats>,
    pub utility_table: Vec<UtilityRow>,
    pub large_market_params: Option<Theta>,
    /// Campaign-specific figures, e.g. the best ratio of a price sweep.
    pub metrics: BTreeMap<String, f64>,
    pub small_market: bool,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<RatioRow>,
}

impl AuditReport {
    pub fn new(campaign: &str, mechanism: Option<&str>) -> Self {
        Self {
            campaign: campaign.to_string(),
            mechanism: mechanism.map(str::to_string),
            instances_tested: 0,
            violations: Vec::new(),
            worst_ratio: None,
            median_ratio: None,
            subsidy_stats: None,
            utility_table: Vec::new(),
            large_market_params: None,
            metrics: BTreeMap::new(),
            small_market: false,
            notes: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Fills worst/median ratio and subsidy figures from `rows`, and sorts
    /// rows and violations by instance digest, then seed.
    fn finish(&mut self) {
        self.rows
            .sort_by(|a, b| a.instance_digest.cmp(&b.instance_digest).then(a.seed.cmp(&b.seed)));
        self.violations.sort_by(|a, b| {
            a.instance_digest
                .cmp(&b.instance_digest)
                .then(a.seed.cmp(&b.seed))
                .then(a.agent.cmp(&b.agent))
        });
        let mut ratios: Vec<f64> = self.rows.iter().map(|r| r.ratio).collect();
        ratios.sort_by(f64::total_cmp);
        self.worst_ratio = ratios.first().copied();
        self.median_ratio = median(&ratios);
        if self.subsidy_stats.is_none() {
            let subsidies: Vec<f64> = self.rows.iter().map(|r| r.subsidy).collect();
            self.subsidy_stats = Stats::of(&subsidies);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-instance table: `instance_digest,n,opt,mlw,ratio,subsidy,seed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("instance_digest,n,opt,mlw,ratio,subsidy,seed\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.instance_digest,
                r.n,
                sig12(r.opt),
                sig12(r.mlw),
                sig12(r.ratio),
                sig12(r.subsidy),
                r.seed
            );
        }
        out
    }
}

/// Sorted input.
fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

/// Twelve significant digits, without trailing zeros.
fn sig12(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("valid float");
    rounded.to_string()
}

/// The market where no uniform price does much better than half: two buyers,
/// one seller, with the richer buyer's value tuned by `epsilon`.
pub fn lower_bound_instance(epsilon: f64) -> Result<Instance> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidConfig(format!("epsilon {epsilon} must lie in (0, 1/2)")));
    }
    let top = (0.5 + epsilon) / (2.0 * epsilon);
    Instance::from_triples(&[(top, 1.0, 0.0), (1.0, 1.0, 0.0), (0.0, 0.0, 1.0)])
}

/// Worst reachable welfare under each uniform price `2 v_top j / grid`,
/// `j = 1..=grid`, with no interval limits. Fails if some price beats
/// `(1/2 + epsilon) * opt`.
pub fn lower_bound_sweep(epsilon: f64, grid: usize) -> Result<AuditReport> {
    if grid == 0 {
        return Err(Error::InvalidConfig("price grid must be non-empty".into()));
    }
    let instance = lower_bound_instance(epsilon)?;
    let agents = instance.agents();
    let opt = optimal_distribution(&instance).opt;
    let top = agents[0].value;
    let (best_price, best) = (1..=grid)
        .map(|j| {
            let price = 2.0 * top * j as f64 / grid as f64;
            let cs = vec![ExchangeConstraint::unconstrained(price); agents.len()];
            (price, worst_reachable_welfare(agents, &cs, EXACT_LIMIT).value)
        })
        .fold((0.0, f64::NEG_INFINITY), |acc, (p, w)| if w > acc.1 { (p, w) } else { acc });
    let bound = 0.5 + epsilon;
    let ratio = best / opt;
    let mut report = AuditReport::new("lower-bound", None);
    report.instances_tested = 1;
    report.worst_ratio = Some(ratio);
    report.metrics.extend([
        ("epsilon".to_string(), epsilon),
        ("opt".to_string(), opt),
        ("best_welfare".to_string(), best),
        ("best_price".to_string(), best_price),
        ("best_ratio".to_string(), ratio),
        ("bound".to_string(), bound),
        ("grid".to_string(), grid as f64),
    ]);
    if ratio > bound + TOL {
        report.violations.push(Violation {
            instance_digest: instance.digest(),
            agent: None,
            seed: None,
            detail: format!("price {best_price} reaches ratio {ratio} above {bound}"),
        });
    }
    Ok(report)
}

/// Draws `count` independent seeds.
fn draw_seeds(rng: &mut RandomSource, count: usize) -> Vec<u64> {
    use rand::RngCore;
    (0..count).map(|_| rng.next_u64()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_on_lower_bound_instance() {
        let t = measure_theta(&lower_bound_instance(0.1).unwrap());
        assert!((t.contribution - 0.6).abs() < 1e-12);
        assert!((t.demand - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(t.supply, 1.0);
        assert_eq!(t.holdings, 1.0);
    }

    #[test]
    fn theta_of_singleton_is_zero() {
        let inst = Instance::from_triples(&[(1.0, 1.0, 1.0)]).unwrap();
        assert_eq!(measure_theta(&inst), Theta::default());
    }

    #[test]
    fn sweep_reproduces_the_bound() {
        for eps in [0.1, 0.01] {
            let r = lower_bound_sweep(eps, 10_000).unwrap();
            assert!(r.passed());
            assert!((r.metrics["best_ratio"] - (0.5 + eps)).abs() < 1e-9);
            assert!((r.metrics["opt"] - 1.0 / (0.5 + eps)).abs() < 1e-9);
        }
        assert!(lower_bound_sweep(0.6, 10).is_err());
    }

    #[test]
    fn csv_uses_twelve_digits() {
        assert_eq!(sig12(5.0 / 6.0), "0.833333333333");
        assert_eq!(sig12(30.0), "30");
        let mut r = AuditReport::new("ratio", Some("differential"));
        r.rows.push(RatioRow {
            instance_digest: "ab".into(),
            n: 3,
            opt: 30.0,
            mlw: 25.0,
            ratio: 25.0 / 30.0,
            subsidy: 0.0,
            seed: 4,
        });
        assert_eq!(
            r.to_csv(),
            "instance_digest,n,opt,mlw,ratio,subsidy,seed\nab,3,30,25,0.833333333333,0,4\n"
        );
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[1.0, 2.0, 3.0]), Some(2.0));
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
