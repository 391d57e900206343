//! Operator-level checks: exact evaluation against a Monte-Carlo rollout
//! oracle, contraction and monotonicity of the robust operators, and the
//! ordering between the three fixed points.

use proptest::prelude::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use robust_mdp::bellman::{
    apply_t_hat_pi, apply_t_opt, apply_t_pi, fixed_point, OperatorKind,
};
use robust_mdp::library::{random_instance, GeneratorSpec, VariantKind};
use robust_mdp::mdp::{
    evaluate_exact, weighted_value, MdpInstance, Policy, TransitionKernel,
};
use robust_mdp::params::SetSpec;
use robust_mdp::uncertainty::{UncertaintySet, DEFAULT_VERTEX_CAP};

fn spec(variant: VariantKind, s_n: usize, a_n: usize) -> GeneratorSpec {
    GeneratorSpec {
        num_states: s_n,
        num_actions: a_n,
        variant,
        vertices: 2,
        num_factors: 2,
        discount: 0.7,
        next_state_independent_rewards: false,
    }
}

fn random_policy(rng: &mut ChaCha8Rng, s_n: usize, a_n: usize) -> Policy {
    let rows: Vec<Vec<f64>> = (0..s_n)
        .map(|_| {
            let gaps: Vec<f64> = (0..a_n)
                .map(|_| -f64::ln(rng.random::<f64>().max(1e-300)))
                .collect();
            let total: f64 = gaps.iter().sum();
            gaps.iter().map(|g| g / total).collect()
        })
        .collect();
    Policy::new(rows).unwrap()
}

fn sample_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if draw < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Discounted-return estimate by simulation; the statistical tolerance is
/// wide but the drift it guards against is systematic, not random.
fn mc_rollout(
    mdp: &MdpInstance,
    policy: &Policy,
    kernel: &TransitionKernel,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut s = sample_index(&mut rng, &mdp.initial_dist);
        let mut ret = 0.0;
        let mut disc = 1.0;
        for _ in 0..horizon {
            let a = sample_index(&mut rng, &policy.action_probs[s]);
            let next = sample_index(&mut rng, kernel.row(s, a));
            ret += disc * mdp.rewards[s][a][next];
            disc *= mdp.discount;
            s = next;
        }
        total += ret;
    }
    total / episodes as f64
}

#[test]
fn exact_evaluation_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (i, variant) in [VariantKind::ExplicitFinite, VariantKind::SaRectangular]
        .into_iter()
        .enumerate()
    {
        let inst = random_instance(&spec(variant, 4, 2), 100 + i as u64).unwrap();
        let set = match &inst.set {
            SetSpec::Model(set) => set,
            SetSpec::Parametric(_) => unreachable!("generator emits model sets"),
        };
        let kernel = set.enumerate_vertices(DEFAULT_VERTEX_CAP).unwrap()[0].clone();
        let policy = random_policy(&mut rng, 4, 2);
        let exact = evaluate_exact(&inst.mdp, &policy, &kernel).unwrap();
        assert!(exact.residual <= 1e-10);
        let mu_exact = weighted_value(&inst.mdp.initial_dist, &exact.values);
        let mc = mc_rollout(&inst.mdp, &policy, &kernel, 60_000, 60, 11 + i as u64);
        let sigma_cap = 0.05;
        assert!(
            (mu_exact - mc).abs() < sigma_cap,
            "variant {:?}: exact {} vs rollout {}",
            variant,
            mu_exact,
            mc
        );
    }
}

#[test]
fn fixed_points_are_ordered_and_bound_exact_values() {
    // u-hat <= u <= v^{pi,P} for every vertex kernel P
    let variants = [
        VariantKind::ExplicitFinite,
        VariantKind::SRectangular,
        VariantKind::SaRectangular,
        VariantKind::FactorModel,
        VariantKind::Partitioned,
        VariantKind::CoeffFactor,
        VariantKind::SaCoeffFactor,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (i, variant) in variants.into_iter().enumerate() {
        let inst = random_instance(&spec(variant, 4, 2), 500 + i as u64).unwrap();
        let set = inst.set.as_operator_set().unwrap();
        let policy = random_policy(&mut rng, 4, 2);
        let hat =
            fixed_point(OperatorKind::PolicySa, &inst.mdp, &set, Some(&policy), 1e-10, 1_000_000)
                .unwrap();
        let mid =
            fixed_point(OperatorKind::PolicyS, &inst.mdp, &set, Some(&policy), 1e-10, 1_000_000)
                .unwrap();
        for s in 0..4 {
            assert!(
                hat.value.values[s] <= mid.value.values[s] + 2e-8,
                "{:?}: u-hat > u at state {}",
                variant,
                s
            );
        }
        let verts = set.enumerate_vertices(DEFAULT_VERTEX_CAP).unwrap();
        for kernel in verts.iter().take(8) {
            let exact = evaluate_exact(&inst.mdp, &policy, kernel).unwrap();
            for s in 0..4 {
                assert!(
                    mid.value.values[s] <= exact.values[s] + 2e-8,
                    "{:?}: u > v at state {}",
                    variant,
                    s
                );
            }
        }
    }
}

#[test]
fn optimal_fixed_point_dominates_policy_fixed_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inst = random_instance(&spec(VariantKind::SRectangular, 5, 3), 42).unwrap();
    let set = inst.set.as_operator_set().unwrap();
    let opt = fixed_point(OperatorKind::Optimal, &inst.mdp, &set, None, 1e-10, 1_000_000).unwrap();
    for _ in 0..5 {
        let policy = random_policy(&mut rng, 5, 3);
        let fp =
            fixed_point(OperatorKind::PolicyS, &inst.mdp, &set, Some(&policy), 1e-10, 1_000_000)
                .unwrap();
        for s in 0..5 {
            assert!(fp.value.values[s] <= opt.value.values[s] + 2e-8);
        }
    }
}

fn explicit_pair(seed: u64, s_n: usize, a_n: usize) -> (MdpInstance, UncertaintySet) {
    let inst = random_instance(
        &GeneratorSpec {
            num_states: s_n,
            num_actions: a_n,
            variant: VariantKind::ExplicitFinite,
            vertices: 3,
            num_factors: 2,
            discount: 0.8,
            next_state_independent_rewards: false,
        },
        seed,
    )
    .unwrap();
    let set = inst.set.as_operator_set().unwrap();
    (inst.mdp, set)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operators_contract_in_sup_norm(
        seed in 0u64..1000,
        v in proptest::collection::vec(-5.0f64..5.0, 3),
        w in proptest::collection::vec(-5.0f64..5.0, 3),
    ) {
        let (mdp, set) = explicit_pair(seed, 3, 2);
        let policy = Policy::uniform(3, 2);
        let dvw = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        let pairs = [
            (apply_t_pi(&mdp, &set, &policy, &v).unwrap(),
             apply_t_pi(&mdp, &set, &policy, &w).unwrap()),
            (apply_t_hat_pi(&mdp, &set, &policy, &v).unwrap(),
             apply_t_hat_pi(&mdp, &set, &policy, &w).unwrap()),
            (apply_t_opt(&mdp, &set, &v).unwrap().0,
             apply_t_opt(&mdp, &set, &w).unwrap().0),
        ];
        for (tv, tw) in pairs {
            let d = tv.iter().zip(&tw).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
            prop_assert!(d <= mdp.discount * dvw + 1e-12);
        }
    }

    #[test]
    fn operators_are_monotone(
        seed in 0u64..1000,
        v in proptest::collection::vec(-5.0f64..5.0, 3),
        bump in proptest::collection::vec(0.0f64..3.0, 3),
    ) {
        let (mdp, set) = explicit_pair(seed, 3, 2);
        let policy = Policy::uniform(3, 2);
        let w: Vec<f64> = v.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let tv = apply_t_pi(&mdp, &set, &policy, &v).unwrap();
        let tw = apply_t_pi(&mdp, &set, &policy, &w).unwrap();
        for (a, b) in tv.iter().zip(&tw) {
            prop_assert!(a <= &(b + 1e-12));
        }
        let hv = apply_t_hat_pi(&mdp, &set, &policy, &v).unwrap();
        let hw = apply_t_hat_pi(&mdp, &set, &policy, &w).unwrap();
        for (a, b) in hv.iter().zip(&hw) {
            prop_assert!(a <= &(b + 1e-12));
        }
    }

    #[test]
    fn sa_operator_lower_bounds_s_operator(
        seed in 0u64..1000,
        v in proptest::collection::vec(-5.0f64..5.0, 3),
    ) {
        let (mdp, set) = explicit_pair(seed, 3, 2);
        let policy = Policy::uniform(3, 2);
        let s = apply_t_pi(&mdp, &set, &policy, &v).unwrap();
        let sa = apply_t_hat_pi(&mdp, &set, &policy, &v).unwrap();
        for (lo, hi) in sa.iter().zip(&s) {
            prop_assert!(lo <= &(hi + 1e-12));
        }
    }
}

#[test]
fn fixed_point_stops_within_tolerance_target() {
    let (mdp, set) = explicit_pair(77, 3, 2);
    let policy = Policy::uniform(3, 2);
    let tol = 1e-8;
    let fp = fixed_point(OperatorKind::PolicyS, &mdp, &set, Some(&policy), tol, 1_000_000)
        .unwrap();
    // one more sweep moves the iterate by at most the stopping threshold
    let reapplied = apply_t_pi(&mdp, &set, &policy, &fp.value.values).unwrap();
    let moved = reapplied
        .iter()
        .zip(&fp.value.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let g = mdp.discount;
    assert!(moved <= tol * (1.0 - g) / (2.0 * g) + 1e-15);
    assert!(fp.final_residual <= tol * (1.0 - g) / (2.0 * g) + 1e-15);
}

#[test]
fn budget_exhaustion_is_reported_as_budget_error() {
    let (mdp, set) = explicit_pair(78, 3, 2);
    let policy = Policy::uniform(3, 2);
    let err = fixed_point(OperatorKind::PolicyS, &mdp, &set, Some(&policy), 1e-12, 2)
        .unwrap_err();
    assert!(matches!(err, robust_mdp::Error::Budget(_)), "{err}");
}
