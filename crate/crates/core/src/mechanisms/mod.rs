//! Mechanisms: reports in, exchange constraints out.
//!
//! Every mechanism sees the instance's reported values (and, for the
//! multi-parameter variant, reported budgets and endowments). The resulting
//! constraints are then judged against the true agents.

pub mod differential;
pub mod sampling;

use std::fmt;
use std::str::FromStr;

pub use differential::{
    allocation_fn, differential_mechanism, myerson_payment, partition_point, threshold,
    AgentView, DifferentialTrace, Form, Piece,
};
pub use sampling::{uniform_large, uniform_large_mp, SamplingTrace};

use crate::equilibrium::{self, check_equilibrium_unique, worst_reachable_welfare, EXACT_LIMIT};
use crate::model::{Agent, ExchangeConstraint, Instance, MarketState, RandomSource, ReportProfile};
use crate::welfare::{self, optimal_distribution};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MechanismId {
    /// Random sample prices the rest at a uniform price.
    UniformLarge { beta: f64 },
    /// As above, with the price computed from the sample's own reports.
    UniformLargeMp { beta: f64 },
    /// Per-agent prices with threshold payments.
    Differential,
    /// The welfare-optimal uniform price applied to reports. Not truthful;
    /// kept as an audit target.
    MopDirect,
}

pub const MECHANISM_NAMES: [&str; 4] = ["uniform-large", "uniform-large-mp", "differential", "mop-direct"];

impl MechanismId {
    pub fn name(&self) -> &'static str {
        match self {
            Self::UniformLarge { .. } => "uniform-large",
            Self::UniformLargeMp { .. } => "uniform-large-mp",
            Self::Differential => "differential",
            Self::MopDirect => "mop-direct",
        }
    }

    /// Parses a mechanism name; sampling mechanisms need `beta`.
    pub fn parse(name: &str, beta: Option<f64>) -> Result<Self> {
        let need_beta = || {
            beta.ok_or_else(|| Error::InvalidConfig(format!("mechanism {name} needs a sample rate")))
        };
        let id = match name {
            "uniform-large" => Self::UniformLarge { beta: need_beta()? },
            "uniform-large-mp" => Self::UniformLargeMp { beta: need_beta()? },
            "differential" => Self::Differential,
            "mop-direct" => Self::MopDirect,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown mechanism {other:?}; expected one of {}",
                    MECHANISM_NAMES.join(", ")
                )))
            }
        };
        id.validate()?;
        Ok(id)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::UniformLarge { beta } | Self::UniformLargeMp { beta } => sampling::check_beta(beta),
            _ => Ok(()),
        }
    }

    pub fn is_randomized(&self) -> bool {
        matches!(self, Self::UniformLarge { .. } | Self::UniformLargeMp { .. })
    }

    /// Whether reported budgets and endowments are read.
    pub fn multi_parameter(&self) -> bool {
        matches!(self, Self::UniformLargeMp { .. })
    }

    /// Constraints for `reports`, aligned with the instance's canonical order.
    /// Sampling mechanisms draw their coins from `seed` alone.
    pub fn constraints(
        &self,
        instance: &Instance,
        reports: &ReportProfile,
        seed: u64,
    ) -> Result<(Vec<ExchangeConstraint>, Trace, Vec<String>)> {
        self.validate()?;
        reports.validate(instance)?;
        let reported = if self.multi_parameter() {
            reports.reported_agents(instance)
        } else {
            ReportProfile {
                values: reports.values.clone(),
                budgets: None,
                endowments: None,
            }
            .reported_agents(instance)
        };
        let mut diagnostics = Vec::new();
        let (constraints, trace) = match *self {
            Self::UniformLarge { beta } | Self::UniformLargeMp { beta } => {
                let mut rng = RandomSource::new(seed);
                let out = if self.multi_parameter() {
                    uniform_large_mp(instance, &reported, beta, &mut rng)?
                } else {
                    uniform_large(instance, &reported, beta, &mut rng)?
                };
                if out.trace.no_trade {
                    diagnostics.push("no_trade: sampled price undefined".to_string());
                }
                (out.constraints, Trace::Sampling(out.trace))
            }
            Self::Differential => {
                let out = differential_mechanism(&reported);
                if out.trace.no_trade {
                    diagnostics.push("no_trade: degenerate partition".to_string());
                }
                (out.constraints, Trace::Differential(out.trace))
            }
            Self::MopDirect => mop_direct(&reported)?,
        };
        Ok((constraints, trace, diagnostics))
    }

    pub fn run(&self, instance: &Instance, reports: &ReportProfile, seed: u64) -> Result<MechanismOutcome> {
        let (constraints, trace, diagnostics) = self.constraints(instance, reports, seed)?;
        Ok(MechanismOutcome::evaluate(*self, instance, constraints, trace, diagnostics))
    }

    pub fn run_truthful(&self, instance: &Instance, seed: u64) -> Result<MechanismOutcome> {
        self.run(instance, &instance.truthful_reports(), seed)
    }
}

impl fmt::Display for MechanismId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MechanismId {
    type Err = Error;

    /// Sampling mechanisms parsed this way get a sample rate of 0.1.
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, Some(0.1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MopTrace {
    pub k_star: usize,
    pub mop_price: f64,
    pub approx_price: Option<f64>,
}

/// Mechanism-specific internals attached to an outcome.
#[derive(Debug, Clone, PartialEq)]
pub enum Trace {
    Differential(DifferentialTrace),
    Sampling(SamplingTrace),
    Mop(MopTrace),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Equilibrium {
    Unique(MarketState),
    /// More than one reachable state; see the worst-case figures.
    Multiple,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismOutcome {
    pub mechanism: MechanismId,
    /// Canonical order.
    pub constraints: Vec<ExchangeConstraint>,
    pub equilibrium: Equilibrium,
    /// Minimum market liquid welfare over reachable states.
    pub welfare_worst: f64,
    /// False when `welfare_worst` is only a lower bound.
    pub welfare_exact: bool,
    pub opt: f64,
    /// Money the market maker puts in, `-sum p_i`.
    pub subsidy: f64,
    /// Minimum utility of each agent over reachable states.
    pub worst_utilities: Vec<f64>,
    pub trace: Trace,
    pub diagnostics: Vec<String>,
}

impl MechanismOutcome {
    /// Judges `constraints` against the true agents of `instance`.
    pub fn evaluate(
        mechanism: MechanismId,
        instance: &Instance,
        constraints: Vec<ExchangeConstraint>,
        trace: Trace,
        mut diagnostics: Vec<String>,
    ) -> Self {
        let agents = instance.agents();
        let opt = optimal_distribution(instance).opt;
        let (equilibrium, welfare_worst, welfare_exact, worst_utilities) =
            match check_equilibrium_unique(agents, &constraints) {
                Some(eq) => (Equilibrium::Unique(eq.state), eq.welfare, true, eq.utilities),
                None => {
                    let w = worst_reachable_welfare(agents, &constraints, EXACT_LIMIT);
                    if !w.exact {
                        diagnostics.push("welfare_lower_bound: too many buyers to enumerate".into());
                    }
                    let u = equilibrium::worst_case_utilities(agents, &constraints);
                    (Equilibrium::Multiple, w.value, w.exact, u)
                }
            };
        let subsidy = match (&trace, &equilibrium) {
            (Trace::Differential(t), _) => -t.payments.iter().sum::<f64>(),
            (_, Equilibrium::Unique(s)) => -s.net_payment(),
            // a uniform price balances every reachable state
            (_, Equilibrium::Multiple) => 0.0,
        };
        Self {
            mechanism,
            constraints,
            equilibrium,
            welfare_worst,
            welfare_exact,
            opt,
            subsidy,
            worst_utilities,
            trace,
            diagnostics,
        }
    }

    /// `welfare_worst / opt`; 1 when the optimum is 0.
    pub fn ratio(&self) -> f64 {
        if self.opt > 0.0 {
            self.welfare_worst / self.opt
        } else {
            1.0
        }
    }

    pub fn unique_state(&self) -> Option<&MarketState> {
        match &self.equilibrium {
            Equilibrium::Unique(s) => Some(s),
            Equilibrium::Multiple => None,
        }
    }
}

/// Market-optimal constraints computed on the reports.
fn mop_direct(reported: &[Agent]) -> Result<(Vec<ExchangeConstraint>, Trace)> {
    let as_reported = Instance::new(reported.to_vec())?;
    let summary = welfare::summarize(&as_reported);
    // positions of `as_reported` index back into `reported`
    let constraints = as_reported.to_input_order(&summary.mop_intervals);
    let trace = Trace::Mop(MopTrace {
        k_star: summary.k_star,
        mop_price: summary.mop_price,
        approx_price: summary.approx_price,
    });
    Ok((constraints, trace))
}

#[cfg(test)]
mod tests;
