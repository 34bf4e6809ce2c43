//! Uniform-price mechanisms driven by a random sample.
//!
//! A coin per agent splits the market into a sample `L`, which only serves to
//! estimate the price and never trades, and the rest `R`, which trades freely
//! at that price. Nobody's report influences the price they face, and the
//! coins do not depend on reports, so every coin outcome is truthful on its own.

use rand::Rng;

use crate::model::{Agent, ExchangeConstraint, Instance, RandomSource};
use crate::welfare::optimal_distribution;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingTrace {
    /// Canonical positions of the sample, ascending.
    pub sampled_set: Vec<usize>,
    pub complement: Vec<usize>,
    pub sample_rate: f64,
    /// Optimal welfare of the sample as reported.
    pub sampled_opt: f64,
    /// `NaN` when the price is undefined.
    pub uniform_price: f64,
    pub no_trade: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingOutcome {
    pub constraints: Vec<ExchangeConstraint>,
    pub trace: SamplingTrace,
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("sample rate {beta} must lie in (0, 1/2)")))
    }
}

/// One coin per agent, flipped in input order.
fn draw_sample(instance: &Instance, beta: f64, rng: &mut RandomSource) -> Vec<bool> {
    let coins: Vec<bool> = (0..instance.len()).map(|_| rng.gen_bool(beta)).collect();
    instance
        .original_index()
        .iter()
        .map(|&orig| coins[orig])
        .collect()
}

fn sampled_opt(reported: &[Agent], sampled: &[usize]) -> Result<f64> {
    if sampled.is_empty() {
        return Ok(0.0);
    }
    let sub = Instance::new(sampled.iter().map(|&i| reported[i]).collect())?;
    Ok(optimal_distribution(&sub).opt)
}

/// Shared skeleton: `price_of(opt_L, Gamma_L, Gamma_R)` returns `None` when
/// the price is undefined.
fn sample_and_price(
    instance: &Instance,
    reported: &[Agent],
    beta: f64,
    rng: &mut RandomSource,
    price_of: impl Fn(f64, &[usize], &[usize]) -> Option<f64>,
) -> Result<SamplingOutcome> {
    check_beta(beta)?;
    let in_sample = draw_sample(instance, beta, rng);
    let (sampled_set, complement): (Vec<usize>, Vec<usize>) =
        (0..instance.len()).partition(|&i| in_sample[i]);
    let opt = sampled_opt(reported, &sampled_set)?;
    let price = price_of(opt, &sampled_set, &complement);
    let constraints = match price {
        Some(p) => (0..instance.len())
            .map(|i| {
                if in_sample[i] {
                    ExchangeConstraint::no_trade(p)
                } else {
                    ExchangeConstraint::unconstrained(p)
                }
            })
            .collect(),
        None => vec![ExchangeConstraint::no_trade(0.0); instance.len()],
    };
    Ok(SamplingOutcome {
        constraints,
        trace: SamplingTrace {
            sampled_set,
            complement,
            sample_rate: beta,
            sampled_opt: opt,
            uniform_price: price.unwrap_or(f64::NAN),
            no_trade: price.is_none(),
        },
    })
}

/// Price `(1 - beta) / beta * OPT(L) / (2 Gamma_R)` with public endowments.
/// An empty complement leaves nothing to sell and yields no trade.
pub fn uniform_large(
    instance: &Instance,
    reported: &[Agent],
    beta: f64,
    rng: &mut RandomSource,
) -> Result<SamplingOutcome> {
    let public = instance.agents();
    sample_and_price(instance, reported, beta, rng, |opt, _, rest| {
        let supply: f64 = rest.iter().map(|&i| public[i].endowment).sum();
        (supply > 0.0).then(|| (1.0 - beta) / beta * opt / (2.0 * supply))
    })
}

/// Price `OPT(L) / (2 Gamma_L)`, everything taken from the sample's reports.
pub fn uniform_large_mp(
    instance: &Instance,
    reported: &[Agent],
    beta: f64,
    rng: &mut RandomSource,
) -> Result<SamplingOutcome> {
    sample_and_price(instance, reported, beta, rng, |opt, sample, _| {
        let supply: f64 = sample.iter().map(|&i| reported[i].endowment).sum();
        (supply > 0.0).then(|| opt / (2.0 * supply))
    })
}
