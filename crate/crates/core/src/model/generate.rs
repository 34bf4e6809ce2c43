use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Agent, Instance, RandomSource};
use crate::{Error, Result};

/// Closed interval `[lo, hi]` sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
}

impl ParamRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo < 0.0 || self.hi <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "{name} range [{}, {}] must be finite, nonnegative, with positive upper bound",
                self.lo, self.hi
            )));
        }
        if self.lo > self.hi {
            return Err(Error::InvalidConfig(format!(
                "{name} range [{}, {}] is empty",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut RandomSource) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.gen_range(self.lo..=self.hi)
        }
    }
}

/// Per-agent parameter distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distributions {
    pub value: ParamRange,
    pub budget: ParamRange,
    pub endowment: ParamRange,
    /// Probability that an agent holds no resources (a pure buyer).
    #[serde(default)]
    pub zero_endowment_prob: f64,
    /// Probability that an agent has no money (a pure seller).
    #[serde(default)]
    pub zero_budget_prob: f64,
    /// If set, the first agent is rescaled to hold this share of all resources.
    #[serde(default)]
    pub monopolist_share: Option<f64>,
}

impl Distributions {
    /// Every parameter uniform on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64) -> Self {
        let r = ParamRange::new(lo, hi);
        Self {
            value: r,
            budget: r,
            endowment: r,
            zero_endowment_prob: 0.0,
            zero_budget_prob: 0.0,
            monopolist_share: None,
        }
    }

    /// Small heterogeneous markets used by the audit campaigns.
    pub fn small_market() -> Self {
        Self {
            value: ParamRange::new(0.1, 10.0),
            budget: ParamRange::new(0.1, 5.0),
            endowment: ParamRange::new(0.1, 3.0),
            zero_endowment_prob: 0.2,
            zero_budget_prob: 0.2,
            monopolist_share: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.value.validate("value")?;
        self.budget.validate("budget")?;
        self.endowment.validate("endowment")?;
        for (name, p) in [
            ("zero_endowment_prob", self.zero_endowment_prob),
            ("zero_budget_prob", self.zero_budget_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} = {p} is not a probability")));
            }
        }
        if let Some(s) = self.monopolist_share {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "monopolist_share = {s} must lie in (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Draws `n` i.i.d. agents. Deterministic for a given source state.
pub fn generate_random_instance(
    n: usize,
    dists: &Distributions,
    rng: &mut RandomSource,
) -> Result<Instance> {
    if n == 0 {
        return Err(Error::InvalidConfig("agent count must be at least 1".into()));
    }
    dists.validate()?;
    let mut agents: Vec<Agent> = (0..n)
        .map(|_| {
            let value = dists.value.sample(rng);
            let mut budget = dists.budget.sample(rng);
            let mut endowment = dists.endowment.sample(rng);
            if rng.gen_bool(dists.zero_budget_prob) {
                budget = 0.0;
            }
            if rng.gen_bool(dists.zero_endowment_prob) {
                endowment = 0.0;
            }
            Agent::new(value, budget, endowment)
        })
        .collect();
    if let (Some(share), true) = (dists.monopolist_share, n > 1) {
        let rest: f64 = agents[1..].iter().map(|a| a.endowment).sum();
        if rest > 0.0 {
            agents[0].endowment = share / (1.0 - share) * rest;
        }
    }
    Instance::new(agents)
}

/// A family of random instances with agent count drawn from `[n_min, n_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFamily {
    pub n_min: usize,
    pub n_max: usize,
    pub dists: Distributions,
}

impl InstanceFamily {
    pub fn new(n_min: usize, n_max: usize, dists: Distributions) -> Result<Self> {
        if n_min == 0 || n_min > n_max {
            return Err(Error::InvalidConfig(format!(
                "agent count range [{n_min}, {n_max}] is invalid"
            )));
        }
        dists.validate()?;
        Ok(Self {
            n_min,
            n_max,
            dists,
        })
    }

    pub fn sample(&self, rng: &mut RandomSource) -> Result<Instance> {
        let n = rng.gen_range(self.n_min..=self.n_max);
        generate_random_instance(n, &self.dists, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_instance() {
        let d = Distributions::uniform(0.0, 1.0);
        let a = generate_random_instance(3, &d, &mut RandomSource::new(7)).unwrap();
        let b = generate_random_instance(3, &d, &mut RandomSource::new(7)).unwrap();
        assert_eq!(a, b);
        let c = generate_random_instance(3, &d, &mut RandomSource::new(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn large_bounded_instance_has_small_shares() {
        let d = Distributions::uniform(1.0, 2.0);
        let inst = generate_random_instance(2000, &d, &mut RandomSource::new(1)).unwrap();
        let total = inst.total_endowment();
        let max_share = inst
            .agents()
            .iter()
            .map(|a| a.endowment / total)
            .fold(0.0, f64::max);
        assert!(max_share <= 2.0 / 2000.0, "max share {max_share}");
        for a in inst.agents() {
            for x in [a.value, a.budget, a.endowment] {
                assert!((1.0..=2.0).contains(&x));
            }
        }
    }

    #[test]
    fn zero_agents_is_an_error() {
        let d = Distributions::uniform(1.0, 2.0);
        assert!(matches!(
            generate_random_instance(0, &d, &mut RandomSource::new(1)),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn invalid_bounds_rejected() {
        let mut d = Distributions::uniform(2.0, 1.0);
        assert!(d.validate().is_err());
        d = Distributions::uniform(0.0, 0.0);
        assert!(d.validate().is_err());
        d = Distributions::uniform(1.0, 2.0);
        d.zero_budget_prob = 1.5;
        assert!(d.validate().is_err());
    }

    #[test]
    fn monopolist_share_is_applied() {
        let mut d = Distributions::uniform(1.0, 2.0);
        d.monopolist_share = Some(0.9);
        let inst = generate_random_instance(50, &d, &mut RandomSource::new(3)).unwrap();
        let total = inst.total_endowment();
        let max = inst.agents().iter().map(|a| a.endowment).fold(0.0, f64::max);
        assert!((max / total - 0.9).abs() < 1e-12);
    }
}
