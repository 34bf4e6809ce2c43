//! JSON documents.
//!
//! Instance: `{"agents": [{"v": .., "B": .., "Gamma": ..}, ...]}` in input order.
//!
//! Outcome: `{"constraints": [{"lo", "hi", "lambda"}], "x", "p", "mlw_worst",
//! "subsidy", "trace", ...}`. Interval ends are numbers or the strings
//! `"-inf"` / `"+inf"`. All per-agent arrays are in input order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Agent, ExchangeConstraint, Instance};
use crate::mechanisms::{Equilibrium, MechanismOutcome, Trace};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentDoc {
    v: f64,
    #[serde(rename = "B")]
    budget: f64,
    #[serde(rename = "Gamma")]
    endowment: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceDoc {
    agents: Vec<AgentDoc>,
}

pub fn parse_instance(text: &str) -> Result<Instance> {
    let doc: InstanceDoc =
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("instance document: {e}")))?;
    Instance::new(
        doc.agents
            .into_iter()
            .map(|a| Agent::new(a.v, a.budget, a.endowment))
            .collect(),
    )
}

pub fn instance_to_json(instance: &Instance) -> String {
    let doc = InstanceDoc {
        agents: instance
            .input_order_agents()
            .into_iter()
            .map(|a| AgentDoc {
                v: a.value,
                budget: a.budget,
                endowment: a.endowment,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("finite numbers serialize")
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<Instance> {
    parse_instance(&fs::read_to_string(path)?)
}

pub fn write_instance(instance: &Instance, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, instance_to_json(instance) + "\n")?;
    Ok(())
}

fn bound_to_json(x: f64) -> Value {
    if x == f64::INFINITY {
        json!("+inf")
    } else if x == f64::NEG_INFINITY {
        json!("-inf")
    } else {
        json!(x)
    }
}

fn bound_from_json(v: &Value) -> Result<f64> {
    match v {
        Value::String(s) if s == "+inf" || s == "inf" => Ok(f64::INFINITY),
        Value::String(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| Error::Schema(format!("bad interval bound {n}"))),
        other => Err(Error::Schema(format!("bad interval bound {other}"))),
    }
}

/// Finite numbers as JSON numbers, anything else as `null`.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

fn trace_to_json(instance: &Instance, trace: &Trace) -> Value {
    match trace {
        Trace::Differential(t) => {
            let breakpoints: Vec<Value> = instance
                .to_input_order(&t.breakpoints)
                .iter()
                .map(|b| nums(b))
                .collect();
            json!({
                "kind": "differential",
                "k": t.partition_point,
                "q": num(t.price_q),
                "v_hat": nums(&instance.to_input_order(&t.thresholds)),
                "allocations": nums(&instance.to_input_order(&t.allocations)),
                "payments": nums(&instance.to_input_order(&t.payments)),
                "breakpoints": breakpoints,
                "no_trade": t.no_trade,
            })
        }
        Trace::Sampling(t) => {
            let mut sampled: Vec<usize> = t
                .sampled_set
                .iter()
                .map(|&pos| instance.original_index()[pos])
                .collect();
            sampled.sort_unstable();
            json!({
                "kind": "sampling",
                "L": sampled,
                "beta": t.sample_rate,
                "opt_L": t.sampled_opt,
                "lambda": num(t.uniform_price),
                "no_trade": t.no_trade,
            })
        }
        Trace::Mop(t) => json!({
            "kind": "mop",
            "k_star": t.k_star,
            "lambda_star": num(t.mop_price),
            "lambda_bar": t.approx_price.map_or(Value::Null, num),
        }),
    }
}

/// Outcome document value; per-agent arrays are reported in input order.
pub fn outcome_to_json(instance: &Instance, outcome: &MechanismOutcome) -> Value {
    let constraints: Vec<Value> = instance
        .to_input_order(&outcome.constraints)
        .iter()
        .map(|c| {
            json!({
                "lo": bound_to_json(c.lower),
                "hi": bound_to_json(c.upper),
                "lambda": c.price,
            })
        })
        .collect();
    let (x, p) = match &outcome.equilibrium {
        Equilibrium::Unique(state) => (
            nums(&instance.to_input_order(&state.trades)),
            nums(&instance.to_input_order(&state.payments)),
        ),
        Equilibrium::Multiple => (Value::Null, Value::Null),
    };
    json!({
        "mechanism": outcome.mechanism.name(),
        "constraints": constraints,
        "unique": matches!(outcome.equilibrium, Equilibrium::Unique(_)),
        "x": x,
        "p": p,
        "mlw_worst": outcome.welfare_worst,
        "mlw_exact": outcome.welfare_exact,
        "opt": outcome.opt,
        "ratio": num(outcome.ratio()),
        "subsidy": outcome.subsidy,
        "trace": trace_to_json(instance, &outcome.trace),
        "diagnostics": outcome.diagnostics,
    })
}

pub fn write_outcome(
    instance: &Instance,
    outcome: &MechanismOutcome,
    path: impl AsRef<Path>,
) -> Result<()> {
    let text = serde_json::to_string_pretty(&outcome_to_json(instance, outcome))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Reads the `constraints` array of an outcome document and returns it in the
/// instance's canonical order.
pub fn parse_constraints(text: &str, instance: &Instance) -> Result<Vec<ExchangeConstraint>> {
    let doc: Value = serde_json::from_str(text)?;
    let arr = doc
        .get("constraints")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Schema("missing \"constraints\" array".into()))?;
    if arr.len() != instance.len() {
        return Err(Error::LengthMismatch {
            expected: instance.len(),
            got: arr.len(),
        });
    }
    let mut input_order = Vec::with_capacity(arr.len());
    for entry in arr {
        let field = |k: &str| {
            entry
                .get(k)
                .ok_or_else(|| Error::Schema(format!("constraint missing \"{k}\"")))
        };
        let price = field("lambda")?
            .as_f64()
            .ok_or_else(|| Error::Schema("\"lambda\" must be a number".into()))?;
        input_order.push(ExchangeConstraint::new(
            bound_from_json(field("lo")?)?,
            bound_from_json(field("hi")?)?,
            price,
        )?);
    }
    Ok(instance
        .original_index()
        .iter()
        .map(|&orig| input_order[orig])
        .collect())
}

pub fn read_constraints(
    path: impl AsRef<Path>,
    instance: &Instance,
) -> Result<Vec<ExchangeConstraint>> {
    parse_constraints(&fs::read_to_string(path)?, instance)
}
