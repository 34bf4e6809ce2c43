//! Independent reference computations used only by tests.
#![allow(dead_code)]

use exmarket::mechanisms::allocation_fn;
use exmarket::model::{Agent, Distributions, Instance, InstanceFamily};

pub const LN3: f64 = 1.098_612_288_668_109_8;

pub fn instance_a() -> Instance {
    Instance::from_triples(&[(3.0, 1.0, 0.0), (1.0, 1.0, 0.0), (0.0, 0.0, 1.0)]).unwrap()
}

pub fn instance_b() -> Instance {
    Instance::from_triples(&[(10.0, 4.0, 0.0), (5.0, 3.0, 1.0), (2.0, 1.0, 10.0)]).unwrap()
}

pub fn instance_c() -> Instance {
    Instance::from_triples(&[(10.0, 4.0, 0.0), (5.0, 3.0, 1.0), (2.0, 1.0, 2.0)]).unwrap()
}

pub fn family(n_max: usize) -> InstanceFamily {
    InstanceFamily::new(1, n_max, Distributions::small_market()).unwrap()
}

/// `sup { z : x(z) < 0 }` by bisection on the (monotone) allocation curve.
pub fn threshold_by_bisection(agent: usize, reports: &[Agent]) -> f64 {
    let eps = 1e-12 * reports.iter().map(|a| a.endowment).sum::<f64>().max(1.0);
    let x = |z: f64| allocation_fn(z, agent, reports);
    if x(0.0) >= -eps {
        return 0.0;
    }
    let mut hi = 1.0;
    while x(hi) < -eps {
        hi *= 2.0;
        assert!(hi < 1e30, "allocation never turns nonnegative");
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if x(mid) < -eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

/// Adaptive Simpson quadrature over `[a, b]` (either order), pre-split into
/// equal panels so that jumps cannot hide between the first samples.
pub fn quadrature(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a > b {
        return -quadrature(f, b, a, tol);
    }
    let panels = 64;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = simpson(lo, hi, fa, fm, fb);
            adaptive(&f, lo, hi, fa, fm, fb, whole, tol / panels as f64, 48)
        })
        .sum()
}

/// Threshold payment by bisection plus numerical integration.
pub fn payment_by_quadrature(agent: usize, reports: &[Agent]) -> f64 {
    let v = reports[agent].value;
    let start = threshold_by_bisection(agent, reports);
    let integral = quadrature(|z| allocation_fn(z, agent, reports), start, v, 1e-10);
    v * allocation_fn(v, agent, reports) - integral
}

/// Optimal welfare by exhaustive search over a grid of holdings; only for
/// three agents or fewer.
pub fn grid_enumeration_opt(instance: &Instance, steps: usize) -> f64 {
    let agents = instance.agents();
    assert!(agents.len() <= 3);
    let total = instance.total_endowment();
    let unit = total / steps as f64;
    let value = |i: usize, units: usize| agents[i].liquid_value(units as f64 * unit - agents[i].endowment);
    match agents.len() {
        1 => value(0, steps),
        2 => (0..=steps)
            .map(|a| value(0, a) + value(1, steps - a))
            .fold(f64::NEG_INFINITY, f64::max),
        _ => (0..=steps)
            .flat_map(|a| (0..=steps - a).map(move |b| (a, b)))
            .map(|(a, b)| value(0, a) + value(1, b) + value(2, steps - a - b))
            .fold(f64::NEG_INFINITY, f64::max),
    }
}
