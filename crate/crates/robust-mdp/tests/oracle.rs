//! Brute-force oracle semantics: worst-case search against closed forms,
//! tractability verification on structured sets, duality on rectangular
//! sets, and the finite-horizon adversary bound.

use robust_mdp::bellman::{fixed_point, OperatorKind, DEFAULT_MAX_ITER};
use robust_mdp::library::{builtin_instance, random_instance, GeneratorSpec, VariantKind};
use robust_mdp::mdp::{solve_mdp_exact, weighted_value, Policy};
use robust_mdp::oracle::{
    duality_gap, max_min_oracle, nonstationary_adversary_dp, verify_tractability,
    worst_case_oracle, TractMode, ORACLE_TOL,
};
use robust_mdp::uncertainty::DEFAULT_VERTEX_CAP;

fn beta_policy(beta: f64) -> Policy {
    let mut rows = vec![vec![1.0, 0.0]; 5];
    rows[1] = vec![beta, 1.0 - beta];
    Policy::new(rows).unwrap()
}

#[test]
fn worst_case_matches_closed_form_on_the_five_state_instance() {
    let inst = builtin_instance("five_state_disjoint").unwrap();
    // beta = 0 from the first state: interior minimum at p = 3/4
    let report = worst_case_oracle(&inst.mdp, &inst.set, &beta_policy(0.0), None).unwrap();
    assert!((report.min_value - 7.0 / 96.0).abs() < 1e-6);
    assert!((report.argmin_params[0] - 0.75).abs() < 1e-5);
    // beta = 1: worst case at the corner p = 1
    let report = worst_case_oracle(&inst.mdp, &inst.set, &beta_policy(1.0), None).unwrap();
    assert!((report.min_value + 1.0 / 12.0).abs() < 1e-6);
    assert!((report.argmin_params[0] - 1.0).abs() < 1e-5);
    // beta = 1/2 neutralizes the second state entirely
    let report = worst_case_oracle(&inst.mdp, &inst.set, &beta_policy(0.5), None).unwrap();
    assert!(report.min_value.abs() < 1e-9);
}

#[test]
fn worst_case_on_finite_sets_is_the_vertex_minimum() {
    let inst = random_instance(
        &GeneratorSpec {
            num_states: 3,
            num_actions: 2,
            variant: VariantKind::ExplicitFinite,
            vertices: 4,
            num_factors: 2,
            discount: 0.6,
            next_state_independent_rewards: false,
        },
        77,
    )
    .unwrap();
    let policy = Policy::uniform(3, 2);
    let report = worst_case_oracle(&inst.mdp, &inst.set, &policy, None).unwrap();
    let set = inst.set.as_operator_set().unwrap();
    let brute = set
        .enumerate_vertices(DEFAULT_VERTEX_CAP)
        .unwrap()
        .iter()
        .map(|k| {
            let v = robust_mdp::mdp::evaluate_exact(&inst.mdp, &policy, k).unwrap();
            weighted_value(&inst.mdp.initial_dist, &v.values)
        })
        .fold(f64::INFINITY, f64::min);
    assert!((report.min_value - brute).abs() < 1e-12);
    assert!(report.argmin_vertex.is_some());
}

#[test]
fn tractability_holds_for_factor_models_with_state_action_rewards() {
    // rewards independent of the landing state make the per-pair
    // rectangularization lossless for factor models
    for seed in [1u64, 2, 3, 4, 5] {
        let inst = random_instance(
            &GeneratorSpec {
                num_states: 3,
                num_actions: 2,
                variant: VariantKind::FactorModel,
                vertices: 2,
                num_factors: 2,
                discount: 0.6,
                next_state_independent_rewards: true,
            },
            seed,
        )
        .unwrap();
        let policy = Policy::uniform(3, 2);
        let report =
            verify_tractability(&inst.mdp, &inst.set, &policy, TractMode::Sa).unwrap();
        for cmp in &report.comparisons {
            assert_eq!(cmp.pass, Some(true), "seed {}: {:?}", seed, cmp);
        }
    }
}

#[test]
fn rectangularization_gap_appears_with_next_state_rewards() {
    let inst = builtin_instance("factor_gap_regression").unwrap();
    let policy = Policy::uniform(inst.mdp.num_states, inst.mdp.num_actions);
    let report = verify_tractability(&inst.mdp, &inst.set, &policy, TractMode::Sa).unwrap();
    let cmp = report
        .comparisons
        .iter()
        .find(|c| c.quantity == "fixed_point_sa_vs_oracle")
        .unwrap();
    let gap = cmp.oracle_value - cmp.fast_value;
    assert!(gap > 1e-4, "expected a strict gap, got {}", gap);
    // the fixed point stays a lower bound even when it is not tight
    assert!(cmp.fast_value <= cmp.oracle_value + 1e-9);
}

#[test]
fn max_min_beats_every_deterministic_policy_on_five_state() {
    let inst = builtin_instance("five_state_disjoint").unwrap();
    let report = max_min_oracle(&inst.mdp, &inst.set, None).unwrap();
    assert!((report.min_value - 7.0 / 96.0).abs() < 1e-5);
    for actions in [[0usize, 0], [0, 1], [1, 0], [1, 1]] {
        let policy =
            Policy::deterministic(5, 2, &[actions[0], actions[1], 0, 0, 0]).unwrap();
        let det = worst_case_oracle(&inst.mdp, &inst.set, &policy, None).unwrap();
        assert!(
            det.min_value <= report.min_value + 1e-6,
            "deterministic {:?} beats the randomized optimum",
            actions
        );
    }
}

#[test]
fn duality_gap_vanishes_on_rectangular_sets() {
    for (variant, seed) in [
        (VariantKind::SaRectangular, 11u64),
        (VariantKind::SRectangular, 12),
        (VariantKind::ExplicitFinite, 13),
    ] {
        let inst = random_instance(
            &GeneratorSpec {
                num_states: 2,
                num_actions: 2,
                variant,
                vertices: 2,
                num_factors: 2,
                discount: 0.5,
                next_state_independent_rewards: true,
            },
            seed,
        )
        .unwrap();
        let report = duality_gap(&inst.mdp, &inst.set, None).unwrap();
        let gap = report
            .comparisons
            .iter()
            .find(|c| c.quantity == "duality_gap")
            .unwrap();
        // minmax >= maxmin always; rectangular convex sets close the gap
        assert!(gap.difference >= -ORACLE_TOL, "{:?}: {:?}", variant, gap);
        assert!(gap.difference.abs() <= 1e-4, "{:?}: {:?}", variant, gap);
    }
}

#[test]
fn adversary_dp_approaches_the_fixed_point_geometrically() {
    let inst = builtin_instance("five_state_disjoint").unwrap();
    let set = inst.set.as_operator_set().unwrap();
    let policy = beta_policy(0.3);
    let fp = fixed_point(OperatorKind::PolicyS, &inst.mdp, &set, Some(&policy), 1e-10, DEFAULT_MAX_ITER)
        .unwrap();
    let rmax = inst.mdp.max_abs_reward();
    let g = inst.mdp.discount;
    let mut last = f64::INFINITY;
    for h in [1usize, 5, 20] {
        let dp = nonstationary_adversary_dp(&inst.mdp, &set, &policy, h).unwrap();
        let dist = dp
            .values
            .iter()
            .zip(&fp.value.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let bound = g.powi(h as i32) * rmax / (1.0 - g);
        assert!(dist <= bound + 1e-9, "H={}: {} > {}", h, dist, bound);
        assert!(dist <= last + 1e-12);
        last = dist;
    }
}

#[test]
fn minmax_sweep_upper_bounds_maxmin_on_every_variant() {
    for (i, variant) in [
        VariantKind::ExplicitFinite,
        VariantKind::SRectangular,
        VariantKind::SaRectangular,
        VariantKind::FactorModel,
        VariantKind::CoeffFactor,
    ]
    .into_iter()
    .enumerate()
    {
        let inst = random_instance(
            &GeneratorSpec {
                num_states: 2,
                num_actions: 2,
                variant,
                vertices: 2,
                num_factors: 2,
                discount: 0.5,
                next_state_independent_rewards: false,
            },
            40 + i as u64,
        )
        .unwrap();
        let report = duality_gap(&inst.mdp, &inst.set, None).unwrap();
        let gap = report
            .comparisons
            .iter()
            .find(|c| c.quantity == "duality_gap")
            .unwrap();
        assert!(gap.difference >= -ORACLE_TOL, "{:?}: {:?}", variant, gap);
    }
}

#[test]
fn singleton_set_collapses_all_oracles_to_exact_solving() {
    let inst = random_instance(
        &GeneratorSpec {
            num_states: 3,
            num_actions: 2,
            variant: VariantKind::ExplicitFinite,
            vertices: 1,
            num_factors: 2,
            discount: 0.7,
            next_state_independent_rewards: false,
        },
        5,
    )
    .unwrap();
    let set = inst.set.as_operator_set().unwrap();
    let kernel = &set.enumerate_vertices(DEFAULT_VERTEX_CAP).unwrap()[0];
    let (_, v) = solve_mdp_exact(&inst.mdp, kernel).unwrap();
    let exact = weighted_value(&inst.mdp.initial_dist, &v.values);
    let report = max_min_oracle(&inst.mdp, &inst.set, None).unwrap();
    assert!((report.min_value - exact).abs() < 1e-6);
}
