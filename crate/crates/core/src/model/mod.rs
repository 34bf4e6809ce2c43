//! Domain types shared by every other module.

mod generate;
pub mod io;

pub use generate::{generate_random_instance, Distributions, InstanceFamily, ParamRange};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// One market participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    /// Utility per unit of resource.
    pub value: f64,
    /// Money available for purchases.
    pub budget: f64,
    /// Resource units held before trading.
    pub endowment: f64,
}

impl Agent {
    pub const fn new(value: f64, budget: f64, endowment: f64) -> Self {
        Self {
            value,
            budget,
            endowment,
        }
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        for (name, x) in [
            ("value", self.value),
            ("budget", self.budget),
            ("endowment", self.endowment),
        ] {
            if !x.is_finite() {
                return Err(Error::InvalidAgent {
                    index,
                    reason: format!("{name} is not finite"),
                });
            }
            if x < 0.0 {
                return Err(Error::InvalidAgent {
                    index,
                    reason: format!("{name} is negative ({x})"),
                });
            }
        }
        Ok(())
    }

    /// Contribution to market liquid welfare after a net trade of `trade` units.
    pub fn liquid_value(&self, trade: f64) -> f64 {
        self.value * self.endowment + (self.value * trade).min(self.budget)
    }
}

/// Indices of `values` sorted by descending value; equal values keep their
/// relative (index) order.
pub fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

/// A validated agent set stored in canonical order: descending by value, ties
/// broken by lower input index first.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    agents: Vec<Agent>,
    original_index: Vec<usize>,
}

impl Instance {
    /// Validates and sorts `agents`. Input positions are retained so results
    /// can be reported in input order.
    pub fn new(agents: Vec<Agent>) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::EmptyInstance);
        }
        for (i, a) in agents.iter().enumerate() {
            a.validate(i)?;
        }
        let values: Vec<f64> = agents.iter().map(|a| a.value).collect();
        let original_index = descending_order(&values);
        let agents = original_index.iter().map(|&i| agents[i]).collect();
        Ok(Self {
            agents,
            original_index,
        })
    }

    pub fn from_triples(triples: &[(f64, f64, f64)]) -> Result<Self> {
        Self::new(
            triples
                .iter()
                .map(|&(v, b, g)| Agent::new(v, b, g))
                .collect(),
        )
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    /// `original_index()[pos]` is the input position of the agent stored at `pos`.
    pub fn original_index(&self) -> &[usize] {
        &self.original_index
    }

    pub fn values(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.value).collect()
    }

    pub fn total_endowment(&self) -> f64 {
        self.agents.iter().map(|a| a.endowment).sum()
    }

    /// Welfare of the no-trade state, `sum v_i * Gamma_i`.
    pub fn endowment_value(&self) -> f64 {
        self.agents.iter().map(|a| a.value * a.endowment).sum()
    }

    /// Agents in their original input order.
    pub fn input_order_agents(&self) -> Vec<Agent> {
        self.to_input_order(&self.agents)
    }

    /// Permutes a canonical-order vector back to input order.
    pub fn to_input_order<T: Clone>(&self, canonical: &[T]) -> Vec<T> {
        assert_eq!(canonical.len(), self.len());
        let mut out: Vec<Option<T>> = vec![None; canonical.len()];
        for (pos, item) in canonical.iter().enumerate() {
            out[self.original_index[pos]] = Some(item.clone());
        }
        out.into_iter().map(|x| x.expect("permutation")).collect()
    }

    /// Sub-instance made of the canonical positions in `members`.
    pub fn subset(&self, members: &[usize]) -> Result<Self> {
        Self::new(members.iter().map(|&i| self.agents[i]).collect())
    }

    pub fn truthful_reports(&self) -> ReportProfile {
        ReportProfile::truthful(self)
    }

    /// Short stable fingerprint of the agent list (input order).
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for a in self.input_order_agents() {
            hasher.update(a.value.to_le_bytes());
            hasher.update(a.budget.to_le_bytes());
            hasher.update(a.endowment.to_le_bytes());
        }
        let full = hasher.finalize();
        hex::encode(&full[..8])
    }
}

/// What agents tell the mechanism, aligned with the instance's canonical order.
///
/// Budgets and endowments are public in the single-parameter setting; the
/// multi-parameter mechanism also reads the optional reported budgets and
/// endowments.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportProfile {
    pub values: Vec<f64>,
    pub budgets: Option<Vec<f64>>,
    pub endowments: Option<Vec<f64>>,
}

impl ReportProfile {
    pub fn truthful(instance: &Instance) -> Self {
        Self {
            values: instance.values(),
            budgets: None,
            endowments: None,
        }
    }

    pub fn with_value(mut self, agent: usize, value: f64) -> Self {
        self.values[agent] = value;
        self
    }

    pub fn with_budget(mut self, instance: &Instance, agent: usize, budget: f64) -> Self {
        let budgets = self
            .budgets
            .get_or_insert_with(|| instance.agents().iter().map(|a| a.budget).collect());
        budgets[agent] = budget;
        self
    }

    pub fn with_endowment(mut self, instance: &Instance, agent: usize, endowment: f64) -> Self {
        let endowments = self
            .endowments
            .get_or_insert_with(|| instance.agents().iter().map(|a| a.endowment).collect());
        endowments[agent] = endowment;
        self
    }

    pub fn validate(&self, instance: &Instance) -> Result<()> {
        let n = instance.len();
        let columns = std::iter::once(&self.values)
            .chain(self.budgets.as_ref())
            .chain(self.endowments.as_ref());
        for col in columns {
            if col.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: col.len(),
                });
            }
            if let Some(i) = col.iter().position(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidAgent {
                    index: i,
                    reason: format!("reported quantity {} is not a nonnegative real", col[i]),
                });
            }
        }
        Ok(())
    }

    /// Agents as the mechanism sees them. Budget/endowment reports fall back to
    /// the public (true) figures when absent.
    pub fn reported_agents(&self, instance: &Instance) -> Vec<Agent> {
        instance
            .agents()
            .iter()
            .enumerate()
            .map(|(i, a)| Agent {
                value: self.values[i],
                budget: self.budgets.as_ref().map_or(a.budget, |b| b[i]),
                endowment: self.endowments.as_ref().map_or(a.endowment, |g| g[i]),
            })
            .collect()
    }
}

/// Permitted net-trade interval `[lower, upper]` and unit price for one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExchangeConstraint {
    /// `<= 0`; `-inf` for no selling limit.
    pub lower: f64,
    /// `>= 0`; `+inf` for no buying limit.
    pub upper: f64,
    pub price: f64,
}

impl ExchangeConstraint {
    pub fn new(lower: f64, upper: f64, price: f64) -> Result<Self> {
        let c = Self {
            lower,
            upper,
            price,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn no_trade(price: f64) -> Self {
        Self {
            lower: 0.0,
            upper: 0.0,
            price,
        }
    }

    pub fn unconstrained(price: f64) -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            price,
        }
    }

    /// `[min(x, 0), max(x, 0)]`.
    pub fn around_trade(trade: f64, price: f64) -> Self {
        Self {
            lower: trade.min(0.0),
            upper: trade.max(0.0),
            price,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = !self.lower.is_nan()
            && !self.upper.is_nan()
            && self.lower <= 0.0
            && self.upper >= 0.0
            && self.price.is_finite()
            && self.price >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Schema(format!(
                "constraint [{}, {}] at price {} violates lower <= 0 <= upper, price >= 0",
                self.lower, self.upper, self.price
            )))
        }
    }

    pub fn is_zero_width(&self) -> bool {
        self.lower == 0.0 && self.upper == 0.0
    }
}

/// Net trades (`> 0` buys) and net payments (`> 0` spends) for every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketState {
    pub trades: Vec<f64>,
    pub payments: Vec<f64>,
}

impl MarketState {
    pub fn zero(n: usize) -> Self {
        Self {
            trades: vec![0.0; n],
            payments: vec![0.0; n],
        }
    }

    /// State with `p_i = lambda_i * x_i`.
    pub fn priced(trades: Vec<f64>, constraints: &[ExchangeConstraint]) -> Self {
        let payments = trades
            .iter()
            .zip(constraints)
            .map(|(x, c)| c.price * x)
            .collect();
        Self { trades, payments }
    }

    pub fn len(&self) -> usize {
        self.trades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trades.is_empty()
    }

    pub fn net_payment(&self) -> f64 {
        self.payments.iter().sum()
    }

    pub fn max_trade_distance(&self, other: &MarketState) -> f64 {
        self.trades
            .iter()
            .zip(&other.trades)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Seeded deterministic generator. Single owner; use [`RandomSource::fork`]
/// to hand independent streams to parallel work.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child source seeded from this stream.
    pub fn fork(&mut self) -> RandomSource {
        RandomSource::new(self.rng.next_u64())
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_bound_instance_keeps_order() {
        let inst = Instance::from_triples(&[(3.0, 1.0, 0.0), (1.0, 1.0, 0.0), (0.0, 0.0, 1.0)])
            .unwrap();
        assert_eq!(inst.original_index(), &[0, 1, 2]);
        assert_eq!(inst.values(), vec![3.0, 1.0, 0.0]);
    }

    #[test]
    fn reorders_descending_and_keeps_input_positions() {
        let inst = Instance::from_triples(&[(5.0, 3.0, 1.0), (10.0, 4.0, 0.0), (2.0, 1.0, 10.0)])
            .unwrap();
        assert_eq!(inst.values(), vec![10.0, 5.0, 2.0]);
        assert_eq!(inst.original_index(), &[1, 0, 2]);
        assert_eq!(inst.to_input_order(&inst.values()), vec![5.0, 10.0, 2.0]);
    }

    #[test]
    fn ties_keep_lower_input_index_first() {
        let inst =
            Instance::from_triples(&[(1.0, 0.1, 0.0), (2.0, 0.2, 0.0), (1.0, 0.3, 0.0)]).unwrap();
        assert_eq!(inst.original_index(), &[1, 0, 2]);
    }

    #[test]
    fn singleton_is_valid() {
        let inst = Instance::from_triples(&[(1.0, 1.0, 1.0)]).unwrap();
        assert_eq!(inst.len(), 1);
    }

    #[test]
    fn rejects_bad_agents() {
        assert!(matches!(Instance::new(vec![]), Err(Error::EmptyInstance)));
        assert!(matches!(
            Instance::from_triples(&[(1.0, -1.0, 0.0)]),
            Err(Error::InvalidAgent { index: 0, .. })
        ));
        assert!(Instance::from_triples(&[(1.0, 1.0, 0.0), (f64::NAN, 1.0, 0.0)]).is_err());
        assert!(Instance::from_triples(&[(f64::INFINITY, 1.0, 0.0)]).is_err());
    }

    #[test]
    fn constraint_validation() {
        assert!(ExchangeConstraint::new(-1.0, 2.0, 1.0).is_ok());
        assert!(ExchangeConstraint::new(f64::NEG_INFINITY, f64::INFINITY, 0.0).is_ok());
        assert!(ExchangeConstraint::new(0.5, 2.0, 1.0).is_err());
        assert!(ExchangeConstraint::new(-1.0, 2.0, -1.0).is_err());
        let c = ExchangeConstraint::around_trade(-3.5, 2.0);
        assert_eq!((c.lower, c.upper), (-3.5, 0.0));
    }

    #[test]
    fn report_profile_checks_lengths() {
        let inst = Instance::from_triples(&[(1.0, 1.0, 1.0), (2.0, 1.0, 1.0)]).unwrap();
        let mut r = inst.truthful_reports();
        assert!(r.validate(&inst).is_ok());
        r.values.push(1.0);
        assert!(matches!(
            r.validate(&inst),
            Err(Error::LengthMismatch { expected: 2, got: 3 })
        ));
        let r = inst.truthful_reports().with_budget(&inst, 1, 7.0);
        assert_eq!(r.reported_agents(&inst)[1].budget, 7.0);
        assert_eq!(r.reported_agents(&inst)[0].budget, 1.0);
    }

    #[test]
    fn random_source_is_deterministic() {
        let mut a = RandomSource::new(9);
        let mut b = RandomSource::new(9);
        for _ in 0..10 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_eq!(a.fork().next_u64(), b.fork().next_u64());
    }
}
