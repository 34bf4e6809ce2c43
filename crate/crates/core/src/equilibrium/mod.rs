//! What happens after a mechanism posts its constraints.
//!
//! Agents with `v >= price` buy, the rest sell, and trading continues until
//! either every buyer is capped (budget or interval) or every seller is sold
//! out. Which of the many such states is reached is not controlled, so the
//! mechanism is judged by its worst one.

mod simulate;

pub use simulate::simulate_trades;

use serde::Serialize;

use crate::model::{Agent, ExchangeConstraint, MarketState};
use crate::welfare::mlw_of;
use crate::{approx_eq, approx_eq_tol, Error, Result, TOL};

/// Buyer count up to which the worst buyer split is found by enumeration.
pub const EXACT_LIMIT: usize = 12;

pub fn is_buyer(agent: &Agent, c: &ExchangeConstraint) -> bool {
    agent.value >= c.price
}

/// Most a buyer can acquire: its interval end or what its budget affords.
pub fn buyer_cap(agent: &Agent, c: &ExchangeConstraint) -> f64 {
    if c.upper == 0.0 {
        0.0
    } else if c.price > 0.0 {
        c.upper.min(agent.budget / c.price)
    } else {
        c.upper
    }
}

/// Most a seller can give up: its interval end or its endowment.
pub fn seller_cap(agent: &Agent, c: &ExchangeConstraint) -> f64 {
    (-c.lower).min(agent.endowment)
}

/// Both sides of the market under a set of constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSides {
    pub buyers: Vec<usize>,
    pub sellers: Vec<usize>,
    /// Buyer cap or seller cap for each agent, by role.
    pub caps: Vec<f64>,
    pub demand: f64,
    pub supply: f64,
}

impl MarketSides {
    pub fn new(agents: &[Agent], constraints: &[ExchangeConstraint]) -> Self {
        assert_eq!(agents.len(), constraints.len(), "one constraint per agent");
        let mut buyers = Vec::new();
        let mut sellers = Vec::new();
        let mut caps = Vec::with_capacity(agents.len());
        for (i, (a, c)) in agents.iter().zip(constraints).enumerate() {
            if is_buyer(a, c) {
                buyers.push(i);
                caps.push(buyer_cap(a, c));
            } else {
                sellers.push(i);
                caps.push(seller_cap(a, c));
            }
        }
        let demand = buyers.iter().map(|&i| caps[i]).sum();
        let supply = sellers.iter().map(|&i| caps[i]).sum();
        Self {
            buyers,
            sellers,
            caps,
            demand,
            supply,
        }
    }

    pub fn balanced(&self) -> bool {
        self.demand.is_finite() && approx_eq(self.demand, self.supply)
    }
}

/// Checks feasibility, self-consistency and the no-further-trade condition.
///
/// A buyer also counts as finished when its budget cannot pay for the trade it
/// holds, so states that overspend a budget are rejected.
pub fn is_reachable(
    agents: &[Agent],
    constraints: &[ExchangeConstraint],
    state: &MarketState,
) -> bool {
    let n = agents.len();
    if constraints.len() != n || state.trades.len() != n || state.payments.len() != n {
        return false;
    }
    let scale: f64 = state.trades.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
    if state.trades.iter().sum::<f64>().abs() > TOL * scale {
        return false;
    }
    let sides = MarketSides::new(agents, constraints);
    for (i, (a, c)) in agents.iter().zip(constraints).enumerate() {
        let x = state.trades[i];
        let slack = TOL * x.abs().max(1.0);
        if x < c.lower - slack || x > c.upper + slack {
            return false;
        }
        if !approx_eq(state.payments[i], c.price * x) {
            return false;
        }
        // a role only trades in its own direction, within what it can afford
        let cap = sides.caps[i];
        let ok = if is_buyer(a, c) {
            x >= -slack && x <= cap + slack
        } else {
            x <= slack && -x <= cap + slack
        };
        if !ok {
            return false;
        }
    }
    let done = |i: &usize| {
        let x = state.trades[*i].abs();
        let cap = sides.caps[*i];
        cap.is_finite() && approx_eq(x, cap)
    };
    sides.buyers.iter().all(done) || sides.sellers.iter().all(done)
}

/// The single reachable state of a balanced market.
#[derive(Debug, Clone, PartialEq)]
pub struct UniqueEquilibrium {
    pub state: MarketState,
    pub welfare: f64,
    pub utilities: Vec<f64>,
}

/// Every buyer at its cap and every seller sold out, provided demand equals
/// supply; `None` otherwise.
pub fn check_equilibrium_unique(
    agents: &[Agent],
    constraints: &[ExchangeConstraint],
) -> Option<UniqueEquilibrium> {
    let sides = MarketSides::new(agents, constraints);
    if !sides.balanced() {
        return None;
    }
    let mut trades = sides.caps.clone();
    for &j in &sides.sellers {
        trades[j] = -trades[j];
    }
    let state = MarketState::priced(trades, constraints);
    let welfare = mlw_of(agents, &state.trades);
    let utilities = agents
        .iter()
        .zip(&state.trades)
        .zip(&state.payments)
        .map(|((a, x), p)| a.value * x - p)
        .collect();
    Some(UniqueEquilibrium {
        state,
        welfare,
        utilities,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstWelfare {
    pub value: f64,
    /// False when the value is only a lower bound (too many buyers to enumerate).
    pub exact: bool,
}

/// Minimum market liquid welfare over all reachable states.
pub fn worst_reachable_welfare(
    agents: &[Agent],
    constraints: &[ExchangeConstraint],
    exact_limit: usize,
) -> WorstWelfare {
    let sides = MarketSides::new(agents, constraints);
    let base: f64 = agents.iter().map(|a| a.value * a.endowment).sum();
    let short_demand = sides.demand < sides.supply && !sides.balanced();

    if !short_demand {
        // sellers sell out; the buyers share the supply as badly as possible
        let sold_value: f64 = sides
            .sellers
            .iter()
            .map(|&j| agents[j].value * sides.caps[j])
            .sum();
        let active: Vec<(f64, f64, f64)> = sides
            .buyers
            .iter()
            .filter(|&&i| sides.caps[i] > 0.0)
            .map(|&i| (agents[i].value, agents[i].budget, sides.caps[i]))
            .collect();
        let (split, exact) = worst_buyer_split(&active, sides.supply.min(sides.demand), exact_limit);
        return WorstWelfare {
            value: base - sold_value + split,
            exact,
        };
    }

    // every buyer fills up; the supply shortfall lands on the most valuable sellers
    let bought: f64 = sides
        .buyers
        .iter()
        .map(|&i| (agents[i].value * sides.caps[i]).min(agents[i].budget))
        .sum();
    let mut sellers = sides.sellers.clone();
    sellers.sort_by(|&a, &b| agents[b].value.total_cmp(&agents[a].value));
    let mut left = sides.demand;
    let mut sold_value = 0.0;
    for j in sellers {
        let q = sides.caps[j].min(left);
        sold_value += agents[j].value * q;
        left -= q;
        if left <= 0.0 {
            break;
        }
    }
    WorstWelfare {
        value: base + bought - sold_value,
        exact: true,
    }
}

/// Minimum of `sum min(v_i x_i, B_i)` over `sum x_i = total`, `0 <= x_i <= cap_i`.
/// Buyers are `(value, budget, cap)`.
fn worst_buyer_split(buyers: &[(f64, f64, f64)], total: f64, exact_limit: usize) -> (f64, bool) {
    let f = |(v, b, _): (f64, f64, f64), x: f64| (v * x).min(b);
    if total <= 0.0 || buyers.is_empty() {
        return (0.0, true);
    }
    if buyers.len() <= exact_limit {
        return (enumerate_vertices(buyers, total, f), true);
    }

    // Lower bound: replace each term by its chord through (0,0) and (cap, f(cap)),
    // which lies below the concave term, then fill the cheapest chords first.
    // The greedy point itself is feasible, so it also gives an upper bound.
    let mut by_slope: Vec<(f64, usize)> = buyers
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let slope = if b.2.is_finite() { f(b, b.2) / b.2 } else { 0.0 };
            (slope, i)
        })
        .collect();
    by_slope.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut left = total;
    let mut lower = 0.0;
    let mut upper = 0.0;
    for (slope, i) in by_slope {
        if left <= 0.0 {
            break;
        }
        let q = buyers[i].2.min(left);
        lower += slope * q;
        upper += f(buyers[i], q);
        left -= q;
    }
    (lower, approx_eq(lower, upper))
}

/// Exact minimum over vertices: all but at most one buyer sit at 0 or at cap.
fn enumerate_vertices(
    buyers: &[(f64, f64, f64)],
    total: f64,
    f: impl Fn((f64, f64, f64), f64) -> f64,
) -> f64 {
    let m = buyers.len();
    let slack = TOL * total.max(1.0);
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << m) {
        let mut filled = 0.0;
        let mut value = 0.0;
        let mut ok = true;
        for (i, &b) in buyers.iter().enumerate() {
            if mask >> i & 1 == 1 {
                if !b.2.is_finite() {
                    ok = false;
                    break;
                }
                filled += b.2;
                value += f(b, b.2);
            }
        }
        if !ok || filled > total + slack {
            continue;
        }
        let rest = total - filled;
        if rest <= slack {
            best = best.min(value);
            continue;
        }
        for (i, &b) in buyers.iter().enumerate() {
            if mask >> i & 1 == 0 && b.2 >= rest - slack {
                best = best.min(value + f(b, rest.min(b.2)));
            }
        }
    }
    debug_assert!(best.is_finite(), "supply never exceeds total buyer capacity");
    best
}

/// Each agent's minimum utility over all reachable states.
pub fn worst_case_utilities(agents: &[Agent], constraints: &[ExchangeConstraint]) -> Vec<f64> {
    let sides = MarketSides::new(agents, constraints);
    let balanced = sides.balanced();
    let mut out = vec![0.0; agents.len()];
    // what the rest of a side can absorb, without forming inf - inf
    let side_total = |side: &[usize]| {
        let finite: f64 = side.iter().map(|&j| sides.caps[j]).filter(|c| c.is_finite()).sum();
        let unbounded = side.iter().filter(|&&j| sides.caps[j].is_infinite()).count();
        (finite, unbounded)
    };
    let buyer_total = side_total(&sides.buyers);
    let seller_total = side_total(&sides.sellers);
    let guaranteed = |me: usize, (finite, unbounded): (f64, usize), available: f64| {
        let cap = sides.caps[me];
        let others = if unbounded > usize::from(cap.is_infinite()) {
            f64::INFINITY
        } else if cap.is_finite() {
            finite - cap
        } else {
            finite
        };
        (available - others).max(0.0).min(cap)
    };
    for &i in &sides.buyers {
        let x = if balanced || sides.demand <= sides.supply {
            sides.caps[i]
        } else {
            guaranteed(i, buyer_total, sides.supply)
        };
        if x > 0.0 {
            out[i] = (agents[i].value - constraints[i].price) * x;
        }
    }
    for &j in &sides.sellers {
        let sold = if balanced || sides.supply <= sides.demand {
            sides.caps[j]
        } else {
            guaranteed(j, seller_total, sides.demand)
        };
        if sold > 0.0 {
            out[j] = (constraints[j].price - agents[j].value) * sold;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachableSetSummary {
    pub unique: bool,
    pub state: Option<MarketState>,
    pub worst_welfare: WorstWelfare,
    pub per_agent_worst_utility: Vec<f64>,
    pub buyer_set: Vec<usize>,
    pub seller_set: Vec<usize>,
}

pub fn summarize(
    agents: &[Agent],
    constraints: &[ExchangeConstraint],
    exact_limit: usize,
) -> ReachableSetSummary {
    let sides = MarketSides::new(agents, constraints);
    match check_equilibrium_unique(agents, constraints) {
        Some(eq) => ReachableSetSummary {
            unique: true,
            worst_welfare: WorstWelfare {
                value: eq.welfare,
                exact: true,
            },
            per_agent_worst_utility: eq.utilities,
            state: Some(eq.state),
            buyer_set: sides.buyers,
            seller_set: sides.sellers,
        },
        None => ReachableSetSummary {
            unique: false,
            state: None,
            worst_welfare: worst_reachable_welfare(agents, constraints, exact_limit),
            per_agent_worst_utility: worst_case_utilities(agents, constraints),
            buyer_set: sides.buyers,
            seller_set: sides.sellers,
        },
    }
}

/// Validates a constraint vector against an agent list.
pub fn check_constraints(agents: &[Agent], constraints: &[ExchangeConstraint]) -> Result<()> {
    if agents.len() != constraints.len() {
        return Err(Error::LengthMismatch {
            expected: agents.len(),
            got: constraints.len(),
        });
    }
    constraints.iter().try_for_each(ExchangeConstraint::validate)
}

/// Relative comparison used when matching two states.
pub fn states_agree(a: &MarketState, b: &MarketState, tol: f64) -> bool {
    a.trades.len() == b.trades.len()
        && a.trades
            .iter()
            .zip(&b.trades)
            .all(|(x, y)| approx_eq_tol(*x, *y, tol))
}
