//! Differential pricing.
//!
//! Agents are ranked by reported value. The longest prefix whose budgets fit
//! into the suffix's endowments (priced at the last prefix value) buys; one
//! pivot agent takes the remainder and everyone after it sells out. Each agent
//! pays its threshold (Myerson) payment, which turns into a personal price.
//!
//! Payments integrate the agent's allocation curve `z -> x_i(z, v_-i)`. The
//! curve is piecewise of the form `c` or `c1 - c2 / z`, with breaks only at
//! other agents' values and at the roots of the budget-versus-endowment
//! comparisons, so the integral is computed in closed form.

use crate::model::{descending_order, Agent, ExchangeConstraint};

/// Outcome of the partition step on a sorted profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regime {
    /// Number of agents in the buying prefix.
    pub k: usize,
    /// Price that the prefix pays per unit; `inf` when nothing can be sold.
    pub q: f64,
    pub no_trade: bool,
    /// Whether `q` is the pivot agent's own value.
    pub pivot_priced: bool,
    /// Budgets of the prefix.
    prefix_budget: f64,
    /// Endowments of the agents after the pivot.
    tail_endowment: f64,
}

impl Regime {
    /// Runs the partition on agents already sorted by descending value.
    fn of_sorted(sorted: &[Agent]) -> Self {
        let n = sorted.len();
        let mut endowment_from = vec![0.0; n + 1];
        for i in (0..n).rev() {
            endowment_from[i] = endowment_from[i + 1] + sorted[i].endowment;
        }
        let mut k = 0;
        let mut budget = 0.0;
        let mut prefix_budget = 0.0;
        for l in 1..=n {
            budget += sorted[l - 1].budget;
            if budget <= sorted[l - 1].value * endowment_from[l] {
                k = l;
                prefix_budget = budget;
            }
        }
        if k == n {
            // only possible with no budgets at all
            return Self {
                k,
                q: 0.0,
                no_trade: true,
                pivot_priced: false,
                prefix_budget,
                tail_endowment: 0.0,
            };
        }
        let pivot_value = sorted[k].value;
        let supply = endowment_from[k];
        let (q, pivot_priced) = if prefix_budget > pivot_value * supply {
            (prefix_budget / supply, false)
        } else {
            (pivot_value, true)
        };
        Self {
            k,
            q,
            no_trade: q == 0.0,
            pivot_priced,
            prefix_budget,
            tail_endowment: endowment_from[k + 1],
        }
    }

    /// Net trade of the agent at sorted position `pos`.
    fn allocation(&self, pos: usize, agent: &Agent) -> f64 {
        if self.no_trade {
            0.0
        } else if pos < self.k {
            agent.budget / self.q
        } else if pos == self.k {
            self.tail_endowment - self.prefix_budget / self.q
        } else {
            -agent.endowment
        }
    }

    /// Shape of the allocation at `pos` as a function of that agent's value.
    fn form(&self, pos: usize, agent: &Agent) -> Form {
        if !self.no_trade && pos == self.k && self.pivot_priced && self.prefix_budget > 0.0 {
            Form::Hyperbolic {
                c1: self.tail_endowment,
                c2: self.prefix_budget,
            }
        } else {
            Form::Const(self.allocation(pos, agent))
        }
    }
}

fn sorted_agents(reports: &[Agent]) -> (Vec<usize>, Vec<Agent>) {
    let values: Vec<f64> = reports.iter().map(|a| a.value).collect();
    let order = descending_order(&values);
    let sorted = order.iter().map(|&i| reports[i]).collect();
    (order, sorted)
}

/// `(k, q)` for a report profile in any order. Ties rank the lower slice index
/// first.
pub fn partition_point(reports: &[Agent]) -> (usize, f64) {
    let r = Regime::of_sorted(&sorted_agents(reports).1);
    (r.k, r.q)
}

/// Allocation of every agent, by slice index.
pub fn allocations(reports: &[Agent]) -> (Regime, Vec<f64>) {
    let (order, sorted) = sorted_agents(reports);
    let regime = Regime::of_sorted(&sorted);
    let mut x = vec![0.0; reports.len()];
    for (pos, &i) in order.iter().enumerate() {
        x[i] = regime.allocation(pos, &sorted[pos]);
    }
    (regime, x)
}

/// Allocation of `agent` had it reported `z`, everyone else fixed.
pub fn allocation_fn(z: f64, agent: usize, reports: &[Agent]) -> f64 {
    AgentView::new(reports, agent).allocation(z)
}

/// Zero crossing of `agent`'s allocation curve.
pub fn threshold(agent: usize, reports: &[Agent]) -> f64 {
    AgentView::new(reports, agent).threshold()
}

/// `v x(v) - integral of x from the threshold to v`, at the reported value.
pub fn myerson_payment(agent: usize, reports: &[Agent]) -> f64 {
    AgentView::new(reports, agent).payment()
}

/// Allocation on one piece of the curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Form {
    Const(f64),
    /// `c1 - c2 / z`
    Hyperbolic { c1: f64, c2: f64 },
}

impl Form {
    pub fn at(&self, z: f64) -> f64 {
        match *self {
            Form::Const(c) => c,
            Form::Hyperbolic { c1, c2 } => c1 - c2 / z,
        }
    }

    /// Integral over `[a, b]`, `0 < a <= b` for the hyperbolic case.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match *self {
            Form::Const(c) => c * (b - a),
            Form::Hyperbolic { c1, c2 } => {
                debug_assert!(a > 0.0);
                c1 * (b - a) - c2 * (b / a).ln()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub lo: f64,
    /// May be `inf` for the last piece.
    pub hi: f64,
    pub form: Form,
}

/// One agent's view of the market: the other reports fixed, its own value free.
#[derive(Debug, Clone)]
pub struct AgentView {
    index: usize,
    agent: Agent,
    /// Other agents with their slice indices, in ranking order.
    others: Vec<(usize, Agent)>,
}

impl AgentView {
    pub fn new(reports: &[Agent], index: usize) -> Self {
        let (order, sorted) = sorted_agents(reports);
        let others = order
            .into_iter()
            .zip(sorted)
            .filter(|&(j, _)| j != index)
            .collect();
        Self {
            index,
            agent: reports[index],
            others,
        }
    }

    /// Rank the agent would take when reporting `z`.
    fn position(&self, z: f64) -> usize {
        self.others
            .partition_point(|&(j, a)| a.value > z || (a.value == z && j < self.index))
    }

    fn regime_at(&self, z: f64) -> (Regime, usize, Agent) {
        let pos = self.position(z);
        let me = Agent { value: z, ..self.agent };
        let mut sorted: Vec<Agent> = Vec::with_capacity(self.others.len() + 1);
        sorted.extend(self.others[..pos].iter().map(|p| p.1));
        sorted.push(me);
        sorted.extend(self.others[pos..].iter().map(|p| p.1));
        (Regime::of_sorted(&sorted), pos, me)
    }

    pub fn allocation(&self, z: f64) -> f64 {
        let (regime, pos, me) = self.regime_at(z);
        regime.allocation(pos, &me)
    }

    fn form(&self, z: f64) -> Form {
        let (regime, pos, me) = self.regime_at(z);
        regime.form(pos, &me)
    }

    /// Sorted positive points where the allocation curve may change shape.
    pub fn breakpoints(&self) -> Vec<f64> {
        let m = self.others.len();
        let mut points: Vec<f64> = self.others.iter().map(|p| p.1.value).collect();
        let mut endowment_from = vec![0.0; m + 1];
        for j in (0..m).rev() {
            endowment_from[j] = endowment_from[j + 1] + self.others[j].1.endowment;
        }
        let mut above_budget = 0.0;
        for (pos, &below_endowment) in endowment_from.iter().enumerate() {
            // the prefix ending at this agent stops fitting
            points.push((above_budget + self.agent.budget) / below_endowment);
            // the prefix ending just above it switches pricing branch
            points.push(above_budget / (self.agent.endowment + below_endowment));
            if pos < m {
                above_budget += self.others[pos].1.budget;
            }
        }
        points.retain(|z| z.is_finite() && *z > 0.0);
        points.sort_by(f64::total_cmp);
        points.dedup();
        points
    }

    /// The allocation curve as consecutive pieces covering `[0, inf)`.
    pub fn pieces(&self) -> Vec<Piece> {
        let points = self.breakpoints();
        let mut bounds = Vec::with_capacity(points.len() + 2);
        bounds.push(0.0);
        bounds.extend(points);
        bounds.push(f64::INFINITY);
        bounds
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| {
                let (lo, hi) = (w[0], w[1]);
                let mid = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo + 1.0 };
                let form = self.form(mid);
                debug_assert!(self.piece_is_regular(lo, hi, form), "piece [{lo}, {hi}] changes shape");
                Piece { lo, hi, form }
            })
            .collect()
    }

    fn piece_is_regular(&self, lo: f64, hi: f64, form: Form) -> bool {
        if !hi.is_finite() || hi - lo <= 1e-9 * (1.0 + hi) {
            return true;
        }
        [0.25, 0.75].iter().all(|t| {
            let z = lo + t * (hi - lo);
            let (a, b) = (form.at(z), self.allocation(z));
            (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
        })
    }

    /// Tolerance below which an allocation counts as zero.
    fn zero_band(&self) -> f64 {
        let supply: f64 = self.agent.endowment + self.others.iter().map(|p| p.1.endowment).sum::<f64>();
        1e-12 * supply.max(1.0)
    }

    /// Where the curve turns positive, or where it stops being negative if it
    /// never does. Inside a flat zero stretch any point gives the same payment.
    fn threshold_of(&self, pieces: &[Piece]) -> f64 {
        let eps = self.zero_band();
        let turns_positive = pieces
            .iter()
            .filter_map(|p| match p.form {
                Form::Const(c) if c > eps => Some(p.lo),
                Form::Const(_) => None,
                Form::Hyperbolic { c1, c2 } if c1 > 0.0 => {
                    let cross = (c2 / c1).max(p.lo);
                    (cross < p.hi).then_some(cross)
                }
                Form::Hyperbolic { .. } => None,
            })
            .fold(f64::INFINITY, f64::min);
        if turns_positive.is_finite() {
            return turns_positive;
        }
        pieces
            .iter()
            .filter_map(|p| match p.form {
                Form::Const(c) if c < -eps => Some(p.hi),
                Form::Const(_) => None,
                Form::Hyperbolic { c1, c2 } => {
                    let cross = if c1 > 0.0 { c2 / c1 } else { f64::INFINITY };
                    (cross > p.lo).then_some(cross.min(p.hi))
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold_of(&self.pieces())
    }

    /// Signed integral of the allocation from `a` to `b`.
    fn integral(pieces: &[Piece], a: f64, b: f64) -> f64 {
        if a > b {
            return -Self::integral(pieces, b, a);
        }
        pieces
            .iter()
            .map(|p| {
                let (lo, hi) = (p.lo.max(a), p.hi.min(b));
                if lo < hi {
                    p.form.integral(lo, hi)
                } else {
                    0.0
                }
            })
            .sum()
    }

    pub fn payment(&self) -> f64 {
        self.details().payment
    }

    /// Allocation, threshold, payment and breakpoints at the reported value.
    pub fn details(&self) -> AgentOutcome {
        let v = self.agent.value;
        let pieces = self.pieces();
        let threshold = self.threshold_of(&pieces);
        let mut allocation = self.allocation(v);
        let mut payment = v * allocation - Self::integral(&pieces, threshold, v);
        if allocation.abs() <= self.zero_band() {
            allocation = 0.0;
            payment = 0.0;
        }
        AgentOutcome {
            allocation,
            payment,
            threshold,
            breakpoints: pieces.iter().skip(1).map(|p| p.lo).collect(),
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutcome {
    pub allocation: f64,
    pub payment: f64,
    pub threshold: f64,
    pub breakpoints: Vec<f64>,
}

impl AgentOutcome {
    /// Unit price implied by the payment. Never more favorable to the agent
    /// than trading at its own value.
    pub fn price(&self, value: f64) -> f64 {
        let x = self.allocation;
        if x == 0.0 {
            value
        } else if x > 0.0 {
            (self.payment / x).clamp(0.0, value)
        } else {
            (self.payment / x).max(value)
        }
    }
}

/// Internals of one differential-pricing run, by slice index.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialTrace {
    pub partition_point: usize,
    pub price_q: f64,
    pub thresholds: Vec<f64>,
    pub allocations: Vec<f64>,
    pub payments: Vec<f64>,
    pub breakpoints: Vec<Vec<f64>>,
    pub no_trade: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialOutcome {
    pub constraints: Vec<ExchangeConstraint>,
    pub trace: DifferentialTrace,
}

/// Constraints `[min(x, 0), max(x, 0)]` at price `p / x` for every agent.
/// Budgets and endowments are taken as reported in `reports`.
pub fn differential_mechanism(reports: &[Agent]) -> DifferentialOutcome {
    let (regime, _) = allocations(reports);
    let n = reports.len();
    let mut trace = DifferentialTrace {
        partition_point: regime.k,
        price_q: regime.q,
        thresholds: Vec::with_capacity(n),
        allocations: Vec::with_capacity(n),
        payments: Vec::with_capacity(n),
        breakpoints: Vec::with_capacity(n),
        no_trade: regime.no_trade,
    };
    let mut constraints = Vec::with_capacity(n);
    for (i, a) in reports.iter().enumerate() {
        let mut d = AgentView::new(reports, i).details();
        if regime.no_trade {
            d.allocation = 0.0;
            d.payment = 0.0;
        }
        constraints.push(ExchangeConstraint::around_trade(d.allocation, d.price(a.value)));
        trace.thresholds.push(d.threshold);
        trace.allocations.push(d.allocation);
        trace.payments.push(d.payment);
        trace.breakpoints.push(d.breakpoints);
    }
    DifferentialOutcome { constraints, trace }
}
