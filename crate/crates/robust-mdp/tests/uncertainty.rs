//! Uncertainty-set structure: vertex enumeration, marginals, hull
//! rectangularity detection, and extensions won by rectangularization.

use proptest::prelude::*;

use robust_mdp::library::{builtin_instance, random_instance, GeneratorSpec, VariantKind};
use robust_mdp::params::SetSpec;
use robust_mdp::simplex::in_convex_hull;
use robust_mdp::uncertainty::{UncertaintySet, DEFAULT_VERTEX_CAP};

fn spec(variant: VariantKind, s_n: usize, a_n: usize, vertices: usize) -> GeneratorSpec {
    GeneratorSpec {
        num_states: s_n,
        num_actions: a_n,
        variant,
        vertices,
        num_factors: 2,
        discount: 0.5,
        next_state_independent_rewards: true,
    }
}

fn model_set(variant: VariantKind, s_n: usize, a_n: usize, vertices: usize, seed: u64) -> UncertaintySet {
    let inst = random_instance(&spec(variant, s_n, a_n, vertices), seed).unwrap();
    match inst.set {
        SetSpec::Model(set) => set,
        SetSpec::Parametric(_) => unreachable!("generator emits model sets"),
    }
}

const ALL_VARIANTS: [VariantKind; 7] = [
    VariantKind::ExplicitFinite,
    VariantKind::SRectangular,
    VariantKind::SaRectangular,
    VariantKind::FactorModel,
    VariantKind::Partitioned,
    VariantKind::CoeffFactor,
    VariantKind::SaCoeffFactor,
];

#[test]
fn enumerated_vertices_are_stochastic_and_counted() {
    for (i, variant) in ALL_VARIANTS.into_iter().enumerate() {
        let set = model_set(variant, 4, 2, 2, 900 + i as u64);
        let count = set.count_vertices();
        let verts = set.enumerate_vertices(DEFAULT_VERTEX_CAP).unwrap();
        assert!(!verts.is_empty(), "{:?}", variant);
        assert!(
            (verts.len() as u128) <= count,
            "{:?}: enumerated {} vs combinatorial count {}",
            variant,
            verts.len(),
            count
        );
        for kernel in &verts {
            for s in 0..4 {
                for a in 0..2 {
                    let row = kernel.row(s, a);
                    let sum: f64 = row.iter().sum();
                    assert!((sum - 1.0).abs() <= 1e-12);
                    assert!(row.iter().all(|&p| p >= -1e-12));
                }
            }
        }
    }
}

#[test]
fn vertex_cap_is_enforced() {
    let set = model_set(VariantKind::SaRectangular, 4, 2, 3, 5);
    // 3^(4*2) = 6561 combinations before dedup
    let err = set.enumerate_vertices(10).unwrap_err();
    assert!(matches!(err, robust_mdp::Error::Budget(_)), "{err}");
}

#[test]
fn rectangularity_detection_matches_construction() {
    let sa = model_set(VariantKind::SaRectangular, 3, 2, 2, 21);
    assert!(sa.is_sa_rectangular(DEFAULT_VERTEX_CAP).unwrap());
    assert!(sa.is_s_rectangular(DEFAULT_VERTEX_CAP).unwrap());

    let s = model_set(VariantKind::SRectangular, 3, 2, 3, 22);
    assert!(s.is_s_rectangular(DEFAULT_VERTEX_CAP).unwrap());

    // generated factor models couple states through shared factors
    let fm = model_set(VariantKind::FactorModel, 4, 2, 2, 23);
    assert!(!fm.is_s_rectangular(DEFAULT_VERTEX_CAP).unwrap());
}

#[test]
fn extensions_contain_the_original_set() {
    for (i, variant) in [VariantKind::ExplicitFinite, VariantKind::FactorModel, VariantKind::CoeffFactor]
        .into_iter()
        .enumerate()
    {
        let set = model_set(variant, 3, 2, 2, 40 + i as u64);
        let verts = set.enumerate_vertices(DEFAULT_VERTEX_CAP).unwrap();
        for ext in [
            set.s_extension(DEFAULT_VERTEX_CAP).unwrap(),
            set.sa_extension(DEFAULT_VERTEX_CAP).unwrap(),
        ] {
            let ext_flat: Vec<Vec<f64>> = ext
                .enumerate_vertices(DEFAULT_VERTEX_CAP)
                .unwrap()
                .iter()
                .map(|k| k.flatten())
                .collect();
            for kernel in &verts {
                assert!(
                    in_convex_hull(&kernel.flatten(), &ext_flat, 1e-9).unwrap(),
                    "{:?}: vertex escapes its own extension",
                    variant
                );
            }
        }
    }
}

#[test]
fn extensions_are_rectangular() {
    let set = model_set(VariantKind::FactorModel, 3, 2, 2, 50);
    let s_ext = set.s_extension(DEFAULT_VERTEX_CAP).unwrap();
    assert!(s_ext.is_s_rectangular(DEFAULT_VERTEX_CAP).unwrap());
    let sa_ext = set.sa_extension(DEFAULT_VERTEX_CAP).unwrap();
    assert!(sa_ext.is_sa_rectangular(DEFAULT_VERTEX_CAP).unwrap());
}

#[test]
fn square_hull_marginals_dedup_the_center() {
    let inst = builtin_instance("square_hull").unwrap();
    let set = inst.set.as_operator_set().unwrap();
    // corners (0,0),(0,1),(1,0),(1,1) plus center (1/2,1/2); the state-0
    // marginal keeps {0, 1, 1/2} as three distinct rows
    let blocks = set.marginal_s(0, DEFAULT_VERTEX_CAP).unwrap();
    assert_eq!(blocks.len(), 3);
    let rows = set.marginal_sa(0, 0, DEFAULT_VERTEX_CAP).unwrap();
    assert_eq!(rows.len(), 3);
}

#[test]
fn min_linear_matches_brute_force_over_vertices() {
    for (i, variant) in ALL_VARIANTS.into_iter().enumerate() {
        let set = model_set(variant, 3, 2, 2, 70 + i as u64);
        let verts = set.enumerate_vertices(DEFAULT_VERTEX_CAP).unwrap();
        let w: Vec<f64> = vec![0.3, -1.1, 0.55];
        for s in 0..3 {
            for a in 0..2 {
                let fast = set.min_linear_sa_value(s, a, &w).unwrap();
                let brute = verts
                    .iter()
                    .map(|k| k.row(s, a).iter().zip(&w).map(|(p, x)| p * x).sum::<f64>())
                    .fold(f64::INFINITY, f64::min);
                assert!(
                    (fast - brute).abs() <= 1e-9,
                    "{:?} ({}, {}): {} vs {}",
                    variant,
                    s,
                    a,
                    fast,
                    brute
                );
            }
        }
        let m: Vec<Vec<f64>> = vec![vec![0.5, -0.25, 1.0], vec![-0.75, 0.1, 0.0]];
        for s in 0..3 {
            let fast = set.min_linear_s_value(s, &m).unwrap();
            let brute = verts
                .iter()
                .map(|k| {
                    (0..2)
                        .map(|a| {
                            k.row(s, a).iter().zip(&m[a]).map(|(p, x)| p * x).sum::<f64>()
                        })
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(
                (fast - brute).abs() <= 1e-9,
                "{:?} state {}: {} vs {}",
                variant,
                s,
                fast,
                brute
            );
        }
    }
}

#[test]
fn factor_vertex_count_is_product_of_factor_sets() {
    let set = model_set(VariantKind::FactorModel, 4, 2, 3, 80);
    if let UncertaintySet::FactorModel(fm) = &set {
        let expect: u128 = fm.factor_sets.iter().map(|f| f.len() as u128).product();
        assert_eq!(set.count_vertices(), expect);
    } else {
        panic!("unexpected variant");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_sets_validate_and_enumerate(seed in 0u64..4000, pick in 0usize..7) {
        let variant = ALL_VARIANTS[pick];
        let set = model_set(variant, 3, 2, 2, seed);
        prop_assert!(set.validate().is_ok());
        let verts = set.enumerate_vertices(DEFAULT_VERTEX_CAP).unwrap();
        prop_assert!(!verts.is_empty());
        for kernel in &verts {
            for s in 0..3 {
                for a in 0..2 {
                    let sum: f64 = kernel.row(s, a).iter().sum();
                    prop_assert!((sum - 1.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn sa_rectangular_always_passes_the_weaker_check(seed in 0u64..4000) {
        let set = model_set(VariantKind::SaRectangular, 3, 2, 2, seed);
        prop_assert!(set.is_sa_rectangular(DEFAULT_VERTEX_CAP).unwrap());
        prop_assert!(set.is_s_rectangular(DEFAULT_VERTEX_CAP).unwrap());
    }
}
