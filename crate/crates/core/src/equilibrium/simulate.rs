use rand::Rng;

use super::{is_reachable, MarketSides};
use crate::model::{Agent, ExchangeConstraint, MarketState, RandomSource};
use crate::{Error, Result};

/// Residuals below this fraction of the cap count as exhausted.
const SNAP: f64 = 1e-13;

/// Random bilateral trading until no willing pair is left.
///
/// Each step picks a buyer with room left and a seller with resource left,
/// uniformly at random, and moves a uniformly random quantity between them.
/// After `max_steps` a greedy pass clears whatever remains, so the result is
/// always on the equilibrium face.
pub fn simulate_trades(
    agents: &[Agent],
    constraints: &[ExchangeConstraint],
    rng: &mut RandomSource,
    max_steps: usize,
) -> Result<MarketState> {
    super::check_constraints(agents, constraints)?;
    if max_steps == 0 {
        return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
    }
    let sides = MarketSides::new(agents, constraints);
    let mut residual = sides.caps.clone();
    let mut trades = vec![0.0; agents.len()];
    let exhausted = |i: usize, r: &[f64]| r[i] <= SNAP * sides.caps[i].clamp(1.0, 1e300);

    let mut move_units = |b: usize, s: usize, q: f64, residual: &mut Vec<f64>| {
        trades[b] += q;
        trades[s] -= q;
        for i in [b, s] {
            residual[i] -= q;
            if exhausted(i, residual) {
                residual[i] = 0.0;
            }
        }
    };

    for _ in 0..max_steps {
        let buyers: Vec<usize> = sides
            .buyers
            .iter()
            .copied()
            .filter(|&i| !exhausted(i, &residual))
            .collect();
        let sellers: Vec<usize> = sides
            .sellers
            .iter()
            .copied()
            .filter(|&j| !exhausted(j, &residual))
            .collect();
        if buyers.is_empty() || sellers.is_empty() {
            break;
        }
        let b = buyers[rng.gen_range(0..buyers.len())];
        let s = sellers[rng.gen_range(0..sellers.len())];
        let room = residual[b].min(residual[s]);
        // (0, room]
        let q = room * (1.0 - rng.gen::<f64>());
        move_units(b, s, q, &mut residual);
    }

    for &b in &sides.buyers {
        for &s in &sides.sellers {
            if exhausted(b, &residual) {
                break;
            }
            if exhausted(s, &residual) {
                continue;
            }
            let q = residual[b].min(residual[s]);
            move_units(b, s, q, &mut residual);
        }
    }

    let state = MarketState::priced(trades, constraints);
    if !is_reachable(agents, constraints, &state) {
        return Err(Error::Simulation(format!(
            "clearing pass ended off the equilibrium face (demand {}, supply {})",
            sides.demand, sides.supply
        )));
    }
    Ok(state)
}
