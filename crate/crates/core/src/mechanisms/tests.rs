use proptest::prelude::*;

use super::differential::allocations;
use super::*;
use crate::equilibrium::{is_reachable, worst_case_utilities};
use crate::model::Instance;

const LN3: f64 = 1.098_612_288_668_109_8;

fn agents(triples: &[(f64, f64, f64)]) -> Vec<Agent> {
    triples.iter().map(|&(v, b, g)| Agent::new(v, b, g)).collect()
}

fn instance_a() -> Vec<Agent> {
    agents(&[(3.0, 1.0, 0.0), (1.0, 1.0, 0.0), (0.0, 0.0, 1.0)])
}

fn instance_b() -> Vec<Agent> {
    agents(&[(10.0, 4.0, 0.0), (5.0, 3.0, 1.0), (2.0, 1.0, 10.0)])
}

fn instance_c() -> Vec<Agent> {
    agents(&[(10.0, 4.0, 0.0), (5.0, 3.0, 1.0), (2.0, 1.0, 2.0)])
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn partition_examples() {
    assert_eq!(partition_point(&instance_a()), (1, 1.0));
    assert_eq!(partition_point(&instance_b()), (2, 2.0));
    assert_eq!(partition_point(&instance_c()), (2, 3.5));
    // order of the slice does not matter
    let mut shuffled = instance_b();
    shuffled.rotate_left(1);
    assert_eq!(partition_point(&shuffled), (2, 2.0));
}

#[test]
fn allocation_examples() {
    let (_, x) = allocations(&instance_b());
    assert_eq!(x, vec![2.0, 1.5, -3.5]);
    let (_, x) = allocations(&instance_c());
    assert!(close(x[0], 8.0 / 7.0) && close(x[1], 6.0 / 7.0) && close(x[2], -2.0));

    let a = instance_a();
    assert_eq!(allocation_fn(3.0, 0, &a), 1.0);
    for z in [1.5, 2.0, 2.9] {
        assert!(close(allocation_fn(z, 2, &a), -1.0 / z), "z = {z}");
    }
    assert_eq!(allocation_fn(3.5, 2, &a), 0.0);
    assert_eq!(allocation_fn(0.5, 2, &a), -1.0);
}

#[test]
fn thresholds_and_payments_on_lower_bound_instance() {
    let a = instance_a();
    assert!(close(threshold(0, &a), 1.0));
    assert!(close(threshold(2, &a), 3.0));
    assert!(close(myerson_payment(0, &a), 1.0));
    assert!(close(myerson_payment(2, &a), -1.0 - LN3));
    assert_eq!(myerson_payment(1, &a), 0.0);

    let pieces = AgentView::new(&a, 2).pieces();
    assert!(pieces
        .iter()
        .any(|p| matches!(p.form, Form::Hyperbolic { c1, c2 } if c1 == 0.0 && c2 == 1.0)));
}

#[test]
fn idle_agent_has_zero_threshold() {
    let with_idle = agents(&[(3.0, 1.0, 0.0), (2.0, 0.0, 0.0), (0.5, 0.0, 2.0)]);
    assert_eq!(threshold(1, &with_idle), 0.0);
    assert_eq!(myerson_payment(1, &with_idle), 0.0);
}

#[test]
fn differential_outcome_on_lower_bound_instance() {
    let a = instance_a();
    let out = differential_mechanism(&a);
    assert_eq!(out.trace.allocations, vec![1.0, 0.0, -1.0]);
    assert!(close(out.constraints[0].price, 1.0));
    assert!(close(out.constraints[2].price, 1.0 + LN3));
    assert_eq!(out.constraints[1].price, 1.0);
    assert!(close(-out.trace.payments.iter().sum::<f64>(), LN3));
    let eq = check_equilibrium_unique(&a, &out.constraints).unwrap();
    assert!(close(eq.welfare, 1.0));
    assert!(close(eq.utilities.iter().sum(), 3.0 + LN3));
}

#[test]
fn differential_outcomes_match_worked_examples() {
    for (inst, x, welfare, opt) in [
        (instance_b(), vec![2.0, 1.5, -3.5], 25.0, 30.0),
        (instance_c(), vec![8.0 / 7.0, 6.0 / 7.0, -2.0], 12.0, 14.0),
    ] {
        let instance = Instance::new(inst.clone()).unwrap();
        let out = MechanismId::Differential.run_truthful(&instance, 0).unwrap();
        let state = out.unique_state().expect("unique");
        for (got, want) in state.trades.iter().zip(&x) {
            assert!(close(*got, *want), "{got} vs {want}");
        }
        assert!(close(out.welfare_worst, welfare));
        assert!(close(out.opt, opt));
        assert!(close(out.ratio(), welfare / opt));
        assert!(is_reachable(&inst, &out.constraints, state));
        let u = worst_case_utilities(&inst, &out.constraints);
        for (i, a) in inst.iter().enumerate() {
            let want = (a.value - out.constraints[i].price) * state.trades[i];
            assert!(close(u[i], want));
        }
    }
}

#[test]
fn bad_payment_breaks_reachability() {
    let b = instance_b();
    let out = differential_mechanism(&b);
    let eq = check_equilibrium_unique(&b, &out.constraints).unwrap();
    let mut state = eq.state;
    state.payments[1] += 0.1;
    assert!(!is_reachable(&b, &out.constraints, &state));
}

#[test]
fn empty_prefix_still_trades() {
    // nobody fits, yet the pivot buys from the seller at the seller's value
    let profile = agents(&[(10.0, 100.0, 0.0), (1.0, 0.0, 1.0)]);
    assert_eq!(partition_point(&profile).0, 0);
    let inst = Instance::new(profile).unwrap();
    let out = MechanismId::Differential.run_truthful(&inst, 0).unwrap();
    assert!(close(out.opt, 10.0));
    assert!(out.welfare_worst >= 0.5 * out.opt - 1e-9, "{out:?}");
}

#[test]
fn all_zero_budgets_is_no_trade() {
    let inst = Instance::from_triples(&[(2.0, 0.0, 1.0), (1.0, 0.0, 1.0)]).unwrap();
    let out = MechanismId::Differential.run_truthful(&inst, 0).unwrap();
    match &out.trace {
        Trace::Differential(t) => assert!(t.no_trade),
        other => panic!("{other:?}"),
    }
    assert!(out.constraints.iter().all(|c| c.is_zero_width()));
    assert_eq!(out.subsidy, 0.0);
}

#[test]
fn sample_members_never_trade() {
    let inst = Instance::from_triples(&[
        (3.0, 1.0, 1.0),
        (2.0, 1.0, 1.0),
        (1.0, 1.0, 1.0),
        (0.5, 1.0, 1.0),
    ])
    .unwrap();
    for seed in 0..50 {
        let out = MechanismId::UniformLarge { beta: 0.4 }.run_truthful(&inst, seed).unwrap();
        let Trace::Sampling(t) = &out.trace else { panic!() };
        for &i in &t.sampled_set {
            assert!(out.constraints[i].is_zero_width());
            assert_eq!(out.worst_utilities[i], 0.0);
        }
        if t.sampled_set.is_empty() {
            assert_eq!(t.uniform_price, 0.0);
            assert!(close(out.welfare_worst, inst.endowment_value()));
        }
        assert_eq!(t.sampled_set.len() + t.complement.len(), 4);
        assert_eq!(out.subsidy, 0.0);
    }
}

#[test]
fn multi_parameter_single_agent_is_no_trade() {
    let inst = Instance::from_triples(&[(3.0, 1.0, 1.0)]).unwrap();
    for seed in 0..20 {
        let out = MechanismId::UniformLargeMp { beta: 0.3 }.run_truthful(&inst, seed).unwrap();
        assert!(out.constraints[0].is_zero_width() || !out.diagnostics.is_empty());
        assert!(close(out.welfare_worst, 3.0));
    }
}

#[test]
fn same_seed_same_sample() {
    let inst = Instance::from_triples(&[(3.0, 1.0, 1.0), (2.0, 1.0, 1.0), (1.0, 1.0, 1.0)]).unwrap();
    let m = MechanismId::UniformLarge { beta: 0.3 };
    assert_eq!(m.run_truthful(&inst, 9).unwrap(), m.run_truthful(&inst, 9).unwrap());
}

#[test]
fn mechanism_names_round_trip() {
    for name in MECHANISM_NAMES {
        assert_eq!(MechanismId::parse(name, Some(0.2)).unwrap().name(), name);
    }
    assert!(MechanismId::parse("uniform-large", None).is_err());
    assert!(MechanismId::parse("uniform-large", Some(0.5)).is_err());
    assert!(MechanismId::parse("auction", None).is_err());
}

#[test]
fn optimal_price_as_a_mechanism_reaches_the_optimum_truthfully() {
    let inst = Instance::new(instance_b()).unwrap();
    let out = MechanismId::MopDirect.run_truthful(&inst, 0).unwrap();
    assert!(close(out.welfare_worst, 30.0));
    let Trace::Mop(t) = &out.trace else { panic!() };
    assert_eq!(t.mop_price, 5.0);
}

fn profile() -> impl Strategy<Value = Vec<Agent>> {
    let agent = (
        0.0..10.0f64,
        prop_oneof![Just(0.0), 0.0..5.0f64],
        prop_oneof![Just(0.0), 0.0..3.0f64],
    )
        .prop_map(|(v, b, g)| Agent::new(v, b, g));
    proptest::collection::vec(agent, 1..9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn allocations_balance_and_sign_rules_hold(reports in profile()) {
        let out = differential_mechanism(&reports);
        let t = &out.trace;
        let scale: f64 = reports.iter().map(|a| a.endowment).sum::<f64>().max(1.0);
        prop_assert!(t.allocations.iter().sum::<f64>().abs() <= 1e-9 * scale);
        for (i, a) in reports.iter().enumerate() {
            let (x, p, c) = (t.allocations[i], t.payments[i], out.constraints[i]);
            prop_assert!(p * x >= -1e-9);
            prop_assert!((a.value - c.price) * x >= -1e-9);
            prop_assert!(x >= -a.endowment - 1e-9);
            if c.price > 0.0 && x > 0.0 {
                prop_assert!(a.budget / c.price >= x - 1e-9);
            }
        }
    }

    #[test]
    fn allocation_curve_is_monotone(reports in profile(), pick in 0usize..8) {
        let i = pick % reports.len();
        let view = AgentView::new(&reports, i);
        let top = reports.iter().map(|a| a.value).fold(1.0, f64::max) * 2.0;
        let mut prev = f64::NEG_INFINITY;
        for s in 0..=200 {
            let x = view.allocation(top * s as f64 / 200.0);
            prop_assert!(x >= prev - 1e-9, "step {s}: {x} < {prev}");
            prev = x;
        }
    }

    #[test]
    fn pieces_describe_the_curve(reports in profile(), pick in 0usize..8, t in 0.0..1.0f64) {
        let i = pick % reports.len();
        let view = AgentView::new(&reports, i);
        let pieces = view.pieces();
        let last_finite = pieces.iter().rev().find(|p| p.hi.is_finite()).map_or(1.0, |p| p.hi);
        let z = t * last_finite * 1.5;
        let piece = pieces.iter().find(|p| p.lo < z && z < p.hi);
        if let Some(p) = piece {
            let (a, b) = (p.form.at(z), view.allocation(z));
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b} at {z}");
        }
    }

    #[test]
    fn differential_keeps_half_the_optimum(reports in profile()) {
        let inst = Instance::new(reports).unwrap();
        let out = MechanismId::Differential.run_truthful(&inst, 0).unwrap();
        prop_assert!(out.unique_state().is_some());
        prop_assert!(out.welfare_worst >= 0.5 * out.opt - 1e-9, "{} vs {}", out.welfare_worst, out.opt);
        let u: f64 = out.worst_utilities.iter().sum();
        prop_assert!(out.subsidy <= u + 1e-9);
    }
}
