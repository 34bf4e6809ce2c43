//! Market liquid welfare and the welfare-optimal benchmarks.
//!
//! The optimum has a water-filling shape: walking agents in descending value
//! order, each buyer takes exactly the amount that exhausts its budget at its
//! own value, until the remaining agents' endowments run out. One pivot agent
//! absorbs the remainder and everyone after it sells out.

use crate::model::{Agent, ExchangeConstraint, Instance};
use crate::{Error, Result, TOL};

/// `sum_i v_i * Gamma_i + min(v_i * x_i, B_i)`.
///
/// No feasibility check is made: a trade below `-Gamma_i` yields a number
/// that does not correspond to any realizable state.
pub fn mlw(instance: &Instance, trades: &[f64]) -> Result<f64> {
    if trades.len() != instance.len() {
        return Err(Error::LengthMismatch {
            expected: instance.len(),
            got: trades.len(),
        });
    }
    if let Some(i) = trades.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidAgent {
            index: i,
            reason: format!("trade {} is not finite", trades[i]),
        });
    }
    Ok(mlw_of(instance.agents(), trades))
}

/// Unchecked variant of [`mlw`] over any agent slice.
pub fn mlw_of(agents: &[Agent], trades: &[f64]) -> f64 {
    agents
        .iter()
        .zip(trades)
        .map(|(a, &x)| a.liquid_value(x))
        .sum()
}

/// Units an agent can absorb before its welfare contribution saturates.
/// Zero-value agents never saturate.
fn saturating_demand(a: &Agent) -> f64 {
    if a.value > 0.0 {
        a.budget / a.value
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalDistribution {
    /// Number of agents (in canonical order) that buy up to saturation.
    pub k_star: usize,
    pub x_star: Vec<f64>,
    pub opt: f64,
}

impl OptimalDistribution {
    /// Canonical positions with strictly positive trade.
    pub fn buyers(&self) -> impl Iterator<Item = usize> + '_ {
        self.x_star
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .map(|(i, _)| i)
    }
}

/// Does the prefix of the first `l` agents fit into the endowments of the rest?
pub fn prefix_fits(instance: &Instance, l: usize) -> bool {
    let agents = instance.agents();
    let demand: f64 = agents[..l].iter().map(saturating_demand).sum();
    let supply: f64 = agents[l..].iter().map(|a| a.endowment).sum();
    demand <= supply
}

pub fn optimal_distribution(instance: &Instance) -> OptimalDistribution {
    let agents = instance.agents();
    let n = agents.len();

    // supply_after[l] = endowments of agents l.. (0-based)
    let mut supply_after = vec![0.0; n + 1];
    for i in (0..n).rev() {
        supply_after[i] = supply_after[i + 1] + agents[i].endowment;
    }
    let mut k_star = 0;
    let mut demand = 0.0;
    let mut demand_at_k = 0.0;
    for l in 1..=n {
        demand += saturating_demand(&agents[l - 1]);
        if demand <= supply_after[l] {
            k_star = l;
            demand_at_k = demand;
        } else {
            break;
        }
    }

    let x_star: Vec<f64> = (0..n)
        .map(|i| {
            if i < k_star {
                saturating_demand(&agents[i])
            } else if i == k_star {
                supply_after[k_star + 1] - demand_at_k
            } else {
                -agents[i].endowment
            }
        })
        .collect();
    let opt = mlw_of(agents, &x_star);
    OptimalDistribution {
        k_star,
        x_star,
        opt,
    }
}

/// Upper limit on `agents * resolution` for [`brute_force_opt`].
pub const GRID_BUDGET: usize = 50_000_000;

/// Independent oracle for the optimum: splits the total endowment into
/// `grid_resolution` equal units and hands them out one at a time to the agent
/// with the largest marginal welfare gain.
///
/// Every agent's welfare is concave in its holdings, so this greedy is exact on
/// the lattice; the lattice optimum is at most `sum_i v_i * unit` below the
/// continuous optimum and never above it.
pub fn brute_force_opt(instance: &Instance, grid_resolution: usize) -> Result<f64> {
    if grid_resolution < 100 {
        return Err(Error::InvalidConfig(format!(
            "grid resolution {grid_resolution} is below 100"
        )));
    }
    let n = instance.len();
    if n.saturating_mul(grid_resolution) > GRID_BUDGET {
        return Err(Error::TooLarge(format!(
            "{n} agents x {grid_resolution} grid points exceeds {GRID_BUDGET}"
        )));
    }
    let agents = instance.agents();
    let unit = instance.total_endowment() / grid_resolution as f64;
    // welfare of agent i when it ends up holding h units of resource
    let held_value = |a: &Agent, h: f64| a.liquid_value(h - a.endowment);
    let mut held = vec![0.0; n];
    if unit > 0.0 {
        for _ in 0..grid_resolution {
            let (best, _) = agents
                .iter()
                .enumerate()
                .map(|(i, a)| (i, held_value(a, held[i] + unit) - held_value(a, held[i])))
                .fold((0, f64::NEG_INFINITY), |acc, (i, g)| {
                    if g > acc.1 {
                        (i, g)
                    } else {
                        acc
                    }
                });
            held[best] += unit;
        }
    }
    Ok(agents
        .iter()
        .zip(&held)
        .map(|(a, &h)| held_value(a, h))
        .sum())
}

/// A uniform price plus per-agent intervals whose unique reachable state is the
/// optimal distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketOptimalPrice {
    pub price: f64,
    pub constraints: Vec<ExchangeConstraint>,
    /// Agents whose value equals the lowest buying value (before any raise).
    pub tie_set: Vec<usize>,
    /// Net trade the tie set must absorb (`> 0`) or supply (`< 0`).
    pub delta: f64,
    /// Whether the price was raised above the tie value.
    pub raised: bool,
    pub no_trade: bool,
}

/// Splits `total` over `weights` proportionally, never exceeding a weight.
fn split_proportional(total: f64, weights: &[f64]) -> Vec<f64> {
    let sum: f64 = weights.iter().sum();
    if total <= 0.0 || sum <= 0.0 {
        return vec![0.0; weights.len()];
    }
    weights
        .iter()
        .map(|&w| (total * w / sum).min(w))
        .collect()
}

pub fn market_optimal_price(instance: &Instance) -> MarketOptimalPrice {
    let od = optimal_distribution(instance);
    market_optimal_price_from(instance, &od)
}

pub fn market_optimal_price_from(
    instance: &Instance,
    od: &OptimalDistribution,
) -> MarketOptimalPrice {
    let agents = instance.agents();
    let x = &od.x_star;
    let Some(lowest_buyer) = od.buyers().map(|i| agents[i].value).reduce(f64::min) else {
        let max_value = agents.iter().map(|a| a.value).fold(0.0, f64::max);
        let price = max_value + 1.0;
        return MarketOptimalPrice {
            price,
            constraints: vec![ExchangeConstraint::no_trade(price); agents.len()],
            tie_set: Vec::new(),
            delta: 0.0,
            raised: false,
            no_trade: true,
        };
    };

    let mut price = lowest_buyer;
    let tie_set: Vec<usize> = (0..agents.len())
        .filter(|&i| (agents[i].value - lowest_buyer).abs() <= TOL)
        .collect();
    let in_tie = |i: usize| tie_set.binary_search(&i).is_ok();

    let mut constraints: Vec<ExchangeConstraint> = x
        .iter()
        .map(|&xi| ExchangeConstraint::around_trade(xi, price))
        .collect();

    // Outside the tie set every buyer is value-capped below B/price and every
    // seller is endowment-feasible, so the imbalance is the tie set's net trade.
    let delta: f64 = tie_set.iter().map(|&i| x[i]).sum();
    let mut raised = false;
    if delta >= 0.0 {
        let caps: Vec<f64> = tie_set
            .iter()
            .map(|&i| {
                if price > 0.0 {
                    agents[i].budget / price
                } else {
                    agents[i].budget
                }
            })
            .collect();
        for (&i, r) in tie_set.iter().zip(split_proportional(delta, &caps)) {
            constraints[i] = ExchangeConstraint {
                lower: 0.0,
                upper: r,
                price,
            };
        }
    } else {
        // The tie set must sell, so the price moves just above its value.
        // Every strict buyer still has value >= the raised price.
        debug_assert!(od.buyers().any(|i| !in_tie(i)), "negative delta needs a strict buyer");
        price = lowest_buyer.next_up();
        raised = true;
        let caps: Vec<f64> = tie_set.iter().map(|&i| agents[i].endowment).collect();
        for (&i, l) in tie_set.iter().zip(split_proportional(-delta, &caps)) {
            constraints[i] = ExchangeConstraint {
                lower: -l,
                upper: 0.0,
                price,
            };
        }
    }
    for c in &mut constraints {
        c.price = price;
    }
    MarketOptimalPrice {
        price,
        constraints,
        tie_set,
        delta,
        raised,
        no_trade: false,
    }
}

/// `OPT / (2 * total endowment)`: under this uniform price with no interval
/// limits every reachable state keeps at least half the optimal welfare.
pub fn approx_price(instance: &Instance) -> Result<f64> {
    approx_price_from(instance, optimal_distribution(instance).opt)
}

pub fn approx_price_from(instance: &Instance, opt: f64) -> Result<f64> {
    let total = instance.total_endowment();
    if total <= 0.0 {
        return Err(Error::NoResources);
    }
    Ok(opt / (2.0 * total))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WelfareSummary {
    pub opt: f64,
    pub k_star: usize,
    pub x_star: Vec<f64>,
    pub mop_price: f64,
    pub mop_intervals: Vec<ExchangeConstraint>,
    /// `None` when the market holds no resources.
    pub approx_price: Option<f64>,
}

pub fn summarize(instance: &Instance) -> WelfareSummary {
    let od = optimal_distribution(instance);
    let mop = market_optimal_price_from(instance, &od);
    WelfareSummary {
        opt: od.opt,
        k_star: od.k_star,
        approx_price: approx_price_from(instance, od.opt).ok(),
        x_star: od.x_star,
        mop_price: mop.price,
        mop_intervals: mop.constraints,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instance_a() -> Instance {
        Instance::from_triples(&[(3.0, 1.0, 0.0), (1.0, 1.0, 0.0), (0.0, 0.0, 1.0)]).unwrap()
    }

    fn instance_b() -> Instance {
        Instance::from_triples(&[(10.0, 4.0, 0.0), (5.0, 3.0, 1.0), (2.0, 1.0, 10.0)]).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn mlw_examples() {
        let a = instance_a();
        assert!(close(mlw(&a, &[1.0 / 3.0, 2.0 / 3.0, -1.0]).unwrap(), 5.0 / 3.0));
        let b = instance_b();
        assert!(close(mlw(&b, &[0.4, 0.6, -1.0]).unwrap(), 30.0));
        assert!(close(mlw(&b, &[0.0; 3]).unwrap(), b.endowment_value()));
        assert!(mlw(&b, &[0.0; 2]).is_err());
        assert!(mlw(&b, &[0.0, f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn optimal_distribution_examples() {
        let od = optimal_distribution(&instance_a());
        assert_eq!(od.k_star, 1);
        assert!(close(od.x_star[0], 1.0 / 3.0) && close(od.x_star[1], 2.0 / 3.0));
        assert!(close(od.x_star[2], -1.0));
        assert!(close(od.opt, 5.0 / 3.0));

        let od = optimal_distribution(&instance_b());
        assert_eq!(od.k_star, 2);
        assert!(close(od.x_star[0], 0.4) && close(od.x_star[1], 0.6) && close(od.x_star[2], -1.0));
        assert!(close(od.opt, 30.0));

        let single = Instance::from_triples(&[(2.0, 5.0, 3.0)]).unwrap();
        let od = optimal_distribution(&single);
        assert_eq!((od.k_star, od.x_star.clone(), od.opt), (0, vec![0.0], 6.0));
    }

    #[test]
    fn k_star_is_the_last_fitting_prefix() {
        for inst in [instance_a(), instance_b()] {
            let k = optimal_distribution(&inst).k_star;
            assert!(prefix_fits(&inst, k));
            if k < inst.len() {
                assert!(!prefix_fits(&inst, k + 1));
            }
        }
    }

    #[test]
    fn zero_value_agents_never_saturate() {
        let inst =
            Instance::from_triples(&[(2.0, 1.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 5.0)]).unwrap();
        let od = optimal_distribution(&inst);
        assert_eq!(od.k_star, 1);
        assert!(close(od.x_star.iter().sum::<f64>(), 0.0));
        assert!(close(od.opt, 1.0));
    }

    #[test]
    fn grid_oracle_brackets_the_formula() {
        let got = brute_force_opt(&instance_a(), 1000).unwrap();
        assert!(got <= 5.0 / 3.0 + 1e-12 && got > 5.0 / 3.0 - 0.01, "{got}");
        let got = brute_force_opt(&instance_b(), 1000).unwrap();
        assert!(got <= 30.0 + 1e-9 && got > 29.9, "{got}");
        let single = Instance::from_triples(&[(2.0, 5.0, 3.0)]).unwrap();
        assert!(close(brute_force_opt(&single, 100).unwrap(), 6.0));
        assert!(brute_force_opt(&single, 10).is_err());
        let wide = Instance::new(vec![Agent::new(1.0, 1.0, 1.0); 1000]).unwrap();
        assert!(matches!(brute_force_opt(&wide, 100_000), Err(Error::TooLarge(_))));
    }

    #[test]
    fn approx_price_examples() {
        assert!(close(approx_price(&instance_b()).unwrap(), 30.0 / 22.0));
        assert!(close(approx_price(&instance_a()).unwrap(), 5.0 / 6.0));
        let dry = Instance::from_triples(&[(1.0, 1.0, 0.0), (2.0, 1.0, 0.0)]).unwrap();
        assert!(matches!(approx_price(&dry), Err(Error::NoResources)));
    }

    #[test]
    fn mop_on_lower_bound_instance() {
        let mop = market_optimal_price(&instance_a());
        assert_eq!(mop.price, 1.0);
        assert!(!mop.raised);
        let demand: f64 = mop.constraints[..2].iter().map(|c| c.upper).sum();
        assert!(close(demand, 1.0));
        assert_eq!((mop.constraints[2].lower, mop.constraints[2].upper), (-1.0, 0.0));
    }

    #[test]
    fn mop_uses_lowest_buying_value() {
        // lowest positive buyer has value 5; the seller at value 2 stays a seller
        let mop = market_optimal_price(&instance_b());
        assert_eq!(mop.price, 5.0);
        assert_eq!(mop.tie_set, vec![1]);
        assert!(close(mop.delta, 0.6));
    }

    #[test]
    fn mop_raises_price_when_tie_set_must_sell() {
        // agent at value 2 ties with a seller of the same value
        let inst = Instance::from_triples(&[
            (4.0, 2.0, 0.0),
            (2.0, 0.2, 0.0),
            (2.0, 0.0, 3.0),
            (1.0, 0.0, 0.4),
        ])
        .unwrap();
        let od = optimal_distribution(&inst);
        let mop = market_optimal_price(&inst);
        assert!(mop.delta < 0.0, "{od:?} {mop:?}");
        assert!(mop.raised);
        assert!(mop.price > 2.0 && mop.price < 2.0 + 1e-12);
        for &i in &mop.tie_set {
            assert!(mop.constraints[i].upper == 0.0);
            assert!(-mop.constraints[i].lower <= inst.agents()[i].endowment + 1e-12);
        }
    }

    #[test]
    fn mop_without_buyers_is_no_trade() {
        let single = Instance::from_triples(&[(2.0, 5.0, 3.0)]).unwrap();
        let mop = market_optimal_price(&single);
        assert!(mop.no_trade);
        assert!(mop.price > 2.0);
        assert!(mop.constraints[0].is_zero_width());
    }
}
