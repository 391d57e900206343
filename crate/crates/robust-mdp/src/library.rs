//! Built-in instances, seeded random generators, and the JSON instance
//! format shared by the CLI and the test suites.

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::mdp::{evaluate_exact, weighted_value, MdpInstance, Policy, TransitionKernel};
use crate::oracle::{max_min_oracle, verify_tractability, worst_case_oracle, TractMode};
use crate::params::{AffineExpr, ParamSet, ParamSpec, SetSpec};
use crate::report::ResultRow;
use crate::simplex::in_convex_hull;
use crate::ssp::{falsify_ssp, SspMode};
use crate::uncertainty::{
    CoeffFactor, FactorModel, Partitioned, SaCoeffFactor, StateBlock, UncertaintySet,
    DEFAULT_VERTEX_CAP,
};

/// Samples drawn when an expected quantity is a sampled SSP verdict.
const SSP_SAMPLES: usize = 1000;
/// Seed for sampled SSP verdicts recorded in expected lists.
const SSP_SEED: u64 = 2024;

/// One reproducible claim about an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Expected {
    pub quantity: String,
    pub value: f64,
    pub tolerance: f64,
    /// "analytic" (closed form), "derived" (structural consequence), or
    /// "regression" (frozen measured value).
    pub provenance: String,
}

impl Expected {
    fn new(quantity: &str, value: f64, tolerance: f64, provenance: &str) -> Self {
        Expected {
            quantity: quantity.to_string(),
            value,
            tolerance,
            provenance: provenance.to_string(),
        }
    }
}

/// An instance bundled with its uncertainty description and expected values.
#[derive(Debug, Clone)]
pub struct NamedInstance {
    pub name: String,
    pub mdp: MdpInstance,
    pub set: SetSpec,
    pub provenance: String,
    pub expected: Vec<Expected>,
}

impl NamedInstance {
    pub fn validate(&self) -> Result<()> {
        let (s_n, a_n) = self.set.validate()?;
        if s_n != self.mdp.num_states || a_n != self.mdp.num_actions {
            return Err(Error::invalid(format!(
                "instance '{}': set is {}x{} but MDP is {}x{}",
                self.name, s_n, a_n, self.mdp.num_states, self.mdp.num_actions
            )));
        }
        Ok(())
    }
}

pub fn builtin_names() -> Vec<&'static str> {
    vec![
        "square_hull",
        "six_state_coupled",
        "four_state_factor",
        "five_state_disjoint",
        "factor_gap_regression",
    ]
}

pub fn builtin_instance(name: &str) -> Result<NamedInstance> {
    let inst = match name {
        "square_hull" => square_hull()?,
        "six_state_coupled" => six_state_coupled()?,
        "four_state_factor" => four_state_factor()?,
        "five_state_disjoint" => five_state_disjoint()?,
        "factor_gap_regression" => factor_gap_regression()?,
        _ => {
            return Err(Error::invalid(format!(
                "unknown builtin instance '{}'; available: {}",
                name,
                builtin_names().join(", ")
            )))
        }
    };
    inst.validate()?;
    Ok(inst)
}

/// Builtin by name, else a JSON file at that path.
pub fn resolve_instance(name_or_path: &str) -> Result<NamedInstance> {
    if builtin_names().contains(&name_or_path) {
        return builtin_instance(name_or_path);
    }
    let text = std::fs::read_to_string(name_or_path).map_err(|e| {
        Error::invalid(format!("cannot read instance '{}': {}", name_or_path, e))
    })?;
    parse_instance(&text)
}

fn basis_row(n: usize, i: usize) -> Vec<f64> {
    let mut row = vec![0.0; n];
    row[i] = 1.0;
    row
}

fn zero_rewards(s_n: usize, a_n: usize) -> Vec<Vec<Vec<f64>>> {
    vec![vec![vec![0.0; s_n]; a_n]; s_n]
}

fn const_row(vals: &[f64]) -> Vec<AffineExpr> {
    vals.iter().map(|&v| AffineExpr::constant(v)).collect()
}

/// c0 + c1 * theta[idx]
fn affine(c0: f64, c1: f64, idx: usize) -> AffineExpr {
    AffineExpr { c0, terms: vec![(c1, idx)] }
}

/// Two states, one action. Writing a kernel as (p, q) with
/// p = P(1 -> 1) and q = P(2 -> 1), the set is the four corners of the
/// unit square plus its center. The center is never the unique minimizer
/// of a linear form, so every per-state argmin intersection is anchored
/// at a corner.
fn square_hull() -> Result<NamedInstance> {
    let pq = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0), (0.5, 0.5)];
    let kernels = pq
        .iter()
        .map(|&(p, q)| {
            TransitionKernel::new(vec![vec![vec![p, 1.0 - p]], vec![vec![q, 1.0 - q]]])
        })
        .collect::<Result<Vec<_>>>()?;
    // landing in state 1 pays one unit
    let rewards = vec![vec![vec![1.0, 0.0]], vec![vec![1.0, 0.0]]];
    let mdp = MdpInstance::new(2, 1, rewards, 0.5, vec![0.5, 0.5])?;
    Ok(NamedInstance {
        name: "square_hull".to_string(),
        mdp,
        set: SetSpec::Model(UncertaintySet::ExplicitFinite { kernels }),
        provenance: "analytic".to_string(),
        expected: vec![
            Expected::new("kernel_count", 5.0, 0.0, "analytic"),
            Expected::new("corner_subset_s_rectangular", 1.0, 0.0, "analytic"),
            Expected::new("marginal_state_0_count", 3.0, 0.0, "analytic"),
            Expected::new("strong_s_holds_sampled", 1.0, 0.0, "analytic"),
        ],
    })
}

/// Six states a..f, two actions, parameters (xi, p). State a routes to b or
/// c with xi-dependent mixing (action 2 swaps the roles), b forwards to e,
/// c forwards to f, and e, f share the single factor (0,0,0,p,0,1-p): e
/// pays on reaching the sink d, f pays while it survives in place. The
/// shared factor couples the rows of e and f, so the set is not
/// s-rectangular, yet splitting {a,b,c,d} / {e,f} gives an exact
/// s-rectangular-times-factor product.
fn six_state_coupled() -> Result<NamedInstance> {
    let (xi, p) = (0usize, 1usize);
    let coupled = vec![
        AffineExpr::constant(0.0),
        AffineExpr::constant(0.0),
        AffineExpr::constant(0.0),
        affine(0.0, 1.0, p),
        AffineExpr::constant(0.0),
        affine(1.0, -1.0, p),
    ];
    let template = vec![
        // state a: action 1 reaches b w.p. xi, c w.p. 1-xi; action 2 swaps
        vec![
            vec![
                AffineExpr::constant(0.0),
                affine(0.0, 1.0, xi),
                affine(1.0, -1.0, xi),
                AffineExpr::constant(0.0),
                AffineExpr::constant(0.0),
                AffineExpr::constant(0.0),
            ],
            vec![
                AffineExpr::constant(0.0),
                affine(1.0, -1.0, xi),
                affine(0.0, 1.0, xi),
                AffineExpr::constant(0.0),
                AffineExpr::constant(0.0),
                AffineExpr::constant(0.0),
            ],
        ],
        vec![const_row(&basis_row(6, 4)); 2],
        vec![const_row(&basis_row(6, 5)); 2],
        vec![const_row(&basis_row(6, 3)); 2],
        vec![coupled.clone(); 2],
        vec![coupled; 2],
    ];
    let params = ParamSet::new(
        vec![
            ParamSpec { name: "xi".to_string(), low: 0.0, high: 1.0 },
            ParamSpec { name: "p".to_string(), low: 0.0, high: 1.0 },
        ],
        template,
        None,
    )?;
    let mut rewards = zero_rewards(6, 2);
    for a in 0..2 {
        rewards[4][a][3] = 1.0;
        rewards[5][a][5] = 1.0;
    }
    let mut mu = vec![0.0; 6];
    mu[0] = 1.0;
    let mdp = MdpInstance::new(6, 2, rewards, 0.5, mu)?;
    Ok(NamedInstance {
        name: "six_state_coupled".to_string(),
        mdp,
        set: SetSpec::Parametric(params),
        provenance: "derived".to_string(),
        expected: vec![
            Expected::new("s_rectangular", 0.0, 0.0, "derived"),
            Expected::new("partitioned_reformulation_matches", 1.0, 0.0, "derived"),
            Expected::new("weak_s_holds_sampled", 1.0, 0.0, "derived"),
        ],
    })
}

/// The s-rectangular-times-factor reformulation of six_state_coupled, used
/// to certify that the parametric corners span the same polytope.
fn six_state_partitioned_twin() -> Partitioned {
    let block = |xi: f64| -> StateBlock {
        vec![
            vec![0.0, xi, 1.0 - xi, 0.0, 0.0, 0.0],
            vec![0.0, 1.0 - xi, xi, 0.0, 0.0, 0.0],
        ]
    };
    Partitioned {
        s1_states: vec![0, 1, 2, 3],
        s_part: vec![
            vec![block(0.0), block(1.0)],
            vec![vec![basis_row(6, 4); 2]],
            vec![vec![basis_row(6, 5); 2]],
            vec![vec![basis_row(6, 3); 2]],
        ],
        factor_coefficients: vec![vec![vec![1.0]; 2]; 2],
        factor_sets: vec![vec![basis_row(6, 3), basis_row(6, 5)]],
    }
}

/// Four states a..d, three actions. Transitions out of a mix the singleton
/// factors e_b, e_c with xi-dependent coefficients (action 2 swaps), while
/// action 3 out of both a and d uses the shared two-vertex factor
/// (p,0,0,1-p). Coefficients vary only where factors are fixed and vice
/// versa, so the set is convex despite the bilinear form.
fn four_state_factor() -> Result<NamedInstance> {
    let coeff = |i: usize| -> Vec<f64> {
        let mut c = vec![0.0; 4];
        c[i] = 1.0;
        c
    };
    let state_a = vec![
        // xi = 0
        vec![coeff(1), coeff(0), coeff(2)],
        // xi = 1
        vec![coeff(0), coeff(1), coeff(2)],
    ];
    let set = CoeffFactor {
        coeff_sets: vec![
            state_a,
            vec![vec![coeff(0); 3]],
            vec![vec![coeff(1); 3]],
            vec![vec![coeff(3), coeff(3), coeff(2)]],
        ],
        factor_sets: vec![
            vec![basis_row(4, 1)],
            vec![basis_row(4, 2)],
            vec![basis_row(4, 0), basis_row(4, 3)],
            vec![basis_row(4, 3)],
        ],
    };
    let mut rewards = zero_rewards(4, 3);
    for a in 0..3 {
        rewards[1][a][1] = 1.0;
    }
    let mdp = MdpInstance::new(4, 3, rewards, 0.5, vec![1.0, 0.0, 0.0, 0.0])?;
    Ok(NamedInstance {
        name: "four_state_factor".to_string(),
        mdp,
        set: SetSpec::Model(UncertaintySet::CoeffFactor(set)),
        provenance: "derived".to_string(),
        expected: vec![
            Expected::new("s_rectangular", 0.0, 0.0, "derived"),
            Expected::new("weak_sa_holds_sampled", 0.0, 0.0, "derived"),
            Expected::new("weak_s_holds_sampled", 1.0, 0.0, "derived"),
            Expected::new("factor_0_singleton", 1.0, 0.0, "analytic"),
            Expected::new("factor_1_singleton", 1.0, 0.0, "analytic"),
        ],
    })
}

/// Return of the five-state instance under the stationary policy that
/// plays action 1 at state b with probability beta, for kernel parameter
/// p, as a closed form in (p, beta, mu). The probability of action 1 at
/// state a does not enter: both rows out of a coincide.
fn five_state_closed_form(p: f64, beta: f64, mu: &[f64]) -> f64 {
    let g = 0.25;
    let at_a = g / 2.0 * (1.0 - p) + g * g * p * (1.0 - 2.0 * p) * (2.0 * beta - 1.0);
    let absorbing = mu[4] - mu[3] + 0.5 * mu[2];
    let at_b = g * (2.0 * beta - 1.0) * (1.0 - 2.0 * p);
    (mu[0] * at_a + absorbing + mu[1] * at_b) / (1.0 - g)
}

/// Five states a..e, two actions, one parameter p. State a reaches b w.p.
/// p and c w.p. 1-p under both actions; state b reaches d w.p. p under
/// action 1 and w.p. 1-p under action 2 (e otherwise); c, d, e absorb with
/// per-period rewards 1/2, -1, 1. Starting at a the best stationary policy
/// plays action 2 at b (worst case 7/96 at p = 3/4); starting at b it
/// mixes evenly (worst case 0); no stationary policy achieves both.
fn five_state_disjoint() -> Result<NamedInstance> {
    let p = 0usize;
    let z = || AffineExpr::constant(0.0);
    let row_a = vec![z(), affine(0.0, 1.0, p), affine(1.0, -1.0, p), z(), z()];
    let row_b1 = vec![z(), z(), z(), affine(0.0, 1.0, p), affine(1.0, -1.0, p)];
    let row_b2 = vec![z(), z(), z(), affine(1.0, -1.0, p), affine(0.0, 1.0, p)];
    let template = vec![
        vec![row_a.clone(), row_a],
        vec![row_b1, row_b2],
        vec![const_row(&basis_row(5, 2)); 2],
        vec![const_row(&basis_row(5, 3)); 2],
        vec![const_row(&basis_row(5, 4)); 2],
    ];
    let params = ParamSet::new(
        vec![ParamSpec { name: "p".to_string(), low: 0.0, high: 1.0 }],
        template,
        None,
    )?;
    let mut rewards = zero_rewards(5, 2);
    for a in 0..2 {
        rewards[2][a][2] = 0.5;
        rewards[3][a][3] = -1.0;
        rewards[4][a][4] = 1.0;
    }
    let mdp = MdpInstance::new(
        5,
        2,
        rewards,
        0.25,
        vec![1.0, 0.0, 0.0, 0.0, 0.0],
    )?;

    // the reconstruction is self-checking: probe the closed form at random
    // (p, beta, mu) tuples before trusting any expected value below
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let pv: f64 = rng.random_range(0.0..=1.0);
        let alpha: f64 = rng.random_range(0.0..=1.0);
        let beta: f64 = rng.random_range(0.0..=1.0);
        let mu = simplex_point(&mut rng, 5);
        let policy = Policy::new(vec![
            vec![alpha, 1.0 - alpha],
            vec![beta, 1.0 - beta],
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 0.0],
        ])?;
        let kernel = params.kernel_at(&[pv])?;
        let v = evaluate_exact(&mdp, &policy, &kernel)?;
        let got = weighted_value(&mu, &v.values);
        let want = five_state_closed_form(pv, beta, &mu);
        if (got - want).abs() > 1e-10 {
            return Err(Error::numerical(format!(
                "five_state_disjoint reconstruction mismatch at p={}: {} vs {}",
                pv, got, want
            )));
        }
    }

    Ok(NamedInstance {
        name: "five_state_disjoint".to_string(),
        mdp,
        set: SetSpec::Parametric(params),
        provenance: "analytic".to_string(),
        expected: vec![
            Expected::new("maxmin_start_a", 7.0 / 96.0, 1e-5, "analytic"),
            Expected::new("maxmin_start_a_worst_p", 0.75, 1e-3, "analytic"),
            Expected::new("maxmin_start_a_beta", 0.0, 1e-3, "analytic"),
            Expected::new("maxmin_start_b", 0.0, 1e-6, "analytic"),
            Expected::new("maxmin_start_b_beta", 0.5, 1e-3, "analytic"),
            Expected::new("eval_beta0_oracle_start_a", 7.0 / 96.0, 1e-6, "analytic"),
            Expected::new("eval_beta_half_oracle_start_a", 0.0, 1e-6, "analytic"),
            Expected::new("eval_beta_half_oracle_start_b", 0.0, 1e-9, "analytic"),
            Expected::new("weak_s_holds_sampled", 0.0, 0.0, "analytic"),
        ],
    })
}

/// Frozen generator draw exhibiting a strict gap between the
/// sa-rectangular fixed point and the true worst case once rewards depend
/// on the next state. The gap value is a regression pin measured at freeze
/// time; the acceptance suite additionally asserts it exceeds 1e-4.
fn factor_gap_regression() -> Result<NamedInstance> {
    let spec = GeneratorSpec {
        num_states: 3,
        num_actions: 2,
        variant: VariantKind::FactorModel,
        vertices: 2,
        num_factors: 2,
        discount: 0.6,
        next_state_independent_rewards: false,
    };
    let mut inst = random_instance(&spec, FACTOR_GAP_SEED)?;
    inst.name = "factor_gap_regression".to_string();
    inst.provenance = "regression".to_string();
    inst.expected = vec![Expected::new(
        "sa_feasibility_gap",
        FACTOR_GAP_VALUE,
        1e-6,
        "regression",
    )];
    Ok(inst)
}

/// Seed and measured gap frozen from a generator sweep; see the
/// regression test that re-measures it.
const FACTOR_GAP_SEED: u64 = 18;
const FACTOR_GAP_VALUE: f64 = 0.0935275816353408;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantKind {
    ExplicitFinite,
    SRectangular,
    SaRectangular,
    FactorModel,
    Partitioned,
    CoeffFactor,
    SaCoeffFactor,
}

impl VariantKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            VariantKind::ExplicitFinite => "explicit_finite",
            VariantKind::SRectangular => "s_rectangular",
            VariantKind::SaRectangular => "sa_rectangular",
            VariantKind::FactorModel => "factor_model",
            VariantKind::Partitioned => "partitioned",
            VariantKind::CoeffFactor => "coeff_factor",
            VariantKind::SaCoeffFactor => "sa_coeff_factor",
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameters for `random_instance`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub variant: VariantKind,
    /// Vertices per block: per state, per pair, or per factor set.
    pub vertices: usize,
    /// Factor count for the factor-based variants.
    pub num_factors: usize,
    pub discount: f64,
    /// Draw rewards constant across next states.
    pub next_state_independent_rewards: bool,
}

fn simplex_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // normalized unit exponentials, i.e. uniform on the simplex
    let mut xs: Vec<f64> = (0..n)
        .map(|_| -f64::ln(1.0 - rng.random::<f64>()))
        .collect();
    let total: f64 = xs.iter().sum();
    if total <= 0.0 {
        return basis_row(n, 0);
    }
    for x in &mut xs {
        *x /= total;
    }
    // exact renormalization of the largest entry keeps rows stochastic
    // within the strict tolerance
    let slack = 1.0 - xs.iter().sum::<f64>();
    let imax = (0..n).fold(0, |b, i| if xs[i] > xs[b] { i } else { b });
    xs[imax] += slack;
    xs
}

/// Deterministic in the seed. Rewards are uniform on [-1, 1]; all vertex
/// rows are uniform on the simplex.
pub fn random_instance(spec: &GeneratorSpec, seed: u64) -> Result<NamedInstance> {
    let (s_n, a_n, r_n, k_n) = (
        spec.num_states,
        spec.num_actions,
        spec.num_factors,
        spec.vertices,
    );
    if s_n == 0 || a_n == 0 || k_n == 0 {
        return Err(Error::invalid("generator: sizes must be positive"));
    }
    if !(0.0..1.0).contains(&spec.discount) {
        return Err(Error::invalid("generator: discount must lie in [0, 1)"));
    }
    let needs_factors = matches!(
        spec.variant,
        VariantKind::FactorModel
            | VariantKind::Partitioned
            | VariantKind::CoeffFactor
            | VariantKind::SaCoeffFactor
    );
    if needs_factors && r_n == 0 {
        return Err(Error::invalid("generator: factor count must be positive"));
    }
    if spec.variant == VariantKind::Partitioned && s_n < 2 {
        return Err(Error::invalid("generator: partitioned needs two states"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rewards = zero_rewards(s_n, a_n);
    for s in 0..s_n {
        for a in 0..a_n {
            if spec.next_state_independent_rewards {
                let r = rng.random_range(-1.0..=1.0);
                rewards[s][a] = vec![r; s_n];
            } else {
                for t in 0..s_n {
                    rewards[s][a][t] = rng.random_range(-1.0..=1.0);
                }
            }
        }
    }
    let mu = simplex_point(&mut rng, s_n);
    let mdp = MdpInstance::new(s_n, a_n, rewards, spec.discount, mu)?;

    fn draw_factor_sets(
        rng: &mut ChaCha8Rng,
        r_n: usize,
        k_n: usize,
        s_n: usize,
    ) -> Vec<Vec<Vec<f64>>> {
        (0..r_n)
            .map(|_| (0..k_n).map(|_| simplex_point(rng, s_n)).collect())
            .collect()
    }
    let set = match spec.variant {
        VariantKind::ExplicitFinite => {
            let mut kernels = Vec::with_capacity(k_n);
            for _ in 0..k_n {
                let probs = (0..s_n)
                    .map(|_| (0..a_n).map(|_| simplex_point(&mut rng, s_n)).collect())
                    .collect();
                kernels.push(TransitionKernel::new(probs)?);
            }
            UncertaintySet::ExplicitFinite { kernels }
        }
        VariantKind::SRectangular => {
            let per_state = (0..s_n)
                .map(|_| {
                    (0..k_n)
                        .map(|_| {
                            (0..a_n).map(|_| simplex_point(&mut rng, s_n)).collect()
                        })
                        .collect()
                })
                .collect();
            UncertaintySet::SRectangular { per_state }
        }
        VariantKind::SaRectangular => {
            let per_state_action = (0..s_n)
                .map(|_| {
                    (0..a_n)
                        .map(|_| {
                            (0..k_n).map(|_| simplex_point(&mut rng, s_n)).collect()
                        })
                        .collect()
                })
                .collect();
            UncertaintySet::SaRectangular { per_state_action }
        }
        VariantKind::FactorModel => {
            let fs = draw_factor_sets(&mut rng, r_n, k_n, s_n);
            let coefficients = (0..s_n)
                .map(|_| (0..a_n).map(|_| simplex_point(&mut rng, r_n)).collect())
                .collect();
            UncertaintySet::FactorModel(FactorModel { coefficients, factor_sets: fs })
        }
        VariantKind::Partitioned => {
            let fs = draw_factor_sets(&mut rng, r_n, k_n, s_n);
            let split = s_n / 2;
            let s_part = (0..split)
                .map(|_| {
                    (0..k_n)
                        .map(|_| {
                            (0..a_n).map(|_| simplex_point(&mut rng, s_n)).collect()
                        })
                        .collect()
                })
                .collect();
            let factor_coefficients = (split..s_n)
                .map(|_| (0..a_n).map(|_| simplex_point(&mut rng, r_n)).collect())
                .collect();
            UncertaintySet::Partitioned(Partitioned {
                s1_states: (0..split).collect(),
                s_part,
                factor_coefficients,
                factor_sets: fs,
            })
        }
        VariantKind::CoeffFactor => {
            let fs = draw_factor_sets(&mut rng, r_n, k_n, s_n);
            let coeff_sets = (0..s_n)
                .map(|_| {
                    (0..k_n)
                        .map(|_| {
                            (0..a_n).map(|_| simplex_point(&mut rng, r_n)).collect()
                        })
                        .collect()
                })
                .collect();
            UncertaintySet::CoeffFactor(CoeffFactor { coeff_sets, factor_sets: fs })
        }
        VariantKind::SaCoeffFactor => {
            let fs = draw_factor_sets(&mut rng, r_n, k_n, s_n);
            let coeff_sets = (0..s_n)
                .map(|_| {
                    (0..a_n)
                        .map(|_| {
                            (0..k_n).map(|_| simplex_point(&mut rng, r_n)).collect()
                        })
                        .collect()
                })
                .collect();
            UncertaintySet::SaCoeffFactor(SaCoeffFactor { coeff_sets, factor_sets: fs })
        }
    };

    let inst = NamedInstance {
        name: format!("{}_s{}a{}_seed{}", spec.variant, s_n, a_n, seed),
        mdp,
        set: SetSpec::Model(set),
        provenance: "generated".to_string(),
        expected: Vec::new(),
    };
    inst.validate()?;
    Ok(inst)
}

fn kernels_hull_equal(left: &[TransitionKernel], right: &[TransitionKernel]) -> Result<bool> {
    let lf: Vec<Vec<f64>> = left.iter().map(|k| k.flatten()).collect();
    let rf: Vec<Vec<f64>> = right.iter().map(|k| k.flatten()).collect();
    for p in &lf {
        if !in_convex_hull(p, &rf, 1e-9)? {
            return Ok(false);
        }
    }
    for p in &rf {
        if !in_convex_hull(p, &lf, 1e-9)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Recomputes every expected quantity of an instance, returning one
/// checked row per claim.
pub fn check_expected(inst: &NamedInstance) -> Result<Vec<ResultRow>> {
    let mut maxmin_cache: HashMap<usize, crate::oracle::OracleReport> = HashMap::new();
    let mut rows = Vec::with_capacity(inst.expected.len());
    for exp in &inst.expected {
        let value = eval_quantity(inst, &exp.quantity, &mut maxmin_cache)?;
        rows.push(ResultRow::checked(&exp.quantity, value, exp.value, exp.tolerance));
    }
    Ok(rows)
}

fn start_dist(s_n: usize, s: usize) -> Vec<f64> {
    basis_row(s_n, s)
}

fn maxmin_report<'c>(
    inst: &NamedInstance,
    start: usize,
    cache: &'c mut HashMap<usize, crate::oracle::OracleReport>,
) -> Result<&'c crate::oracle::OracleReport> {
    if !cache.contains_key(&start) {
        let mdp = inst.mdp.with_initial_dist(start_dist(inst.mdp.num_states, start))?;
        let report = max_min_oracle(&mdp, &inst.set, None)?;
        cache.insert(start, report);
    }
    Ok(&cache[&start])
}

fn bool_value(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn eval_quantity(
    inst: &NamedInstance,
    quantity: &str,
    maxmin_cache: &mut HashMap<usize, crate::oracle::OracleReport>,
) -> Result<f64> {
    let cap = DEFAULT_VERTEX_CAP;
    match quantity {
        "kernel_count" => match &inst.set {
            SetSpec::Model(UncertaintySet::ExplicitFinite { kernels }) => {
                Ok(kernels.len() as f64)
            }
            _ => Err(Error::invalid("kernel_count needs an explicit finite set")),
        },
        "corner_subset_s_rectangular" => match &inst.set {
            SetSpec::Model(UncertaintySet::ExplicitFinite { kernels })
                if kernels.len() >= 4 =>
            {
                let corners = UncertaintySet::ExplicitFinite {
                    kernels: kernels[..4].to_vec(),
                };
                Ok(bool_value(corners.is_s_rectangular(cap)?))
            }
            _ => Err(Error::invalid(
                "corner_subset_s_rectangular needs an explicit set with 4+ kernels",
            )),
        },
        "marginal_state_0_count" => {
            let set = inst.set.as_operator_set()?;
            Ok(set.marginal_s(0, cap)?.len() as f64)
        }
        "s_rectangular" => {
            let set = inst.set.as_operator_set()?;
            Ok(bool_value(set.is_s_rectangular(cap)?))
        }
        "strong_s_holds_sampled" | "weak_s_holds_sampled" | "weak_sa_holds_sampled" => {
            let mode = match quantity {
                "strong_s_holds_sampled" => SspMode::StrongS,
                "weak_s_holds_sampled" => SspMode::WeakS,
                _ => SspMode::WeakSa,
            };
            let set = inst.set.as_operator_set()?;
            let verdict = falsify_ssp(&set, mode, SSP_SAMPLES, SSP_SEED, cap)?;
            Ok(bool_value(verdict.holds))
        }
        "partitioned_reformulation_matches" => {
            let corners = match &inst.set {
                SetSpec::Parametric(ps) => ps.corner_kernels()?,
                SetSpec::Model(set) => set.enumerate_vertices(cap)?,
            };
            let twin = UncertaintySet::Partitioned(six_state_partitioned_twin());
            twin.validate()?;
            let twin_verts = twin.enumerate_vertices(cap)?;
            Ok(bool_value(kernels_hull_equal(&corners, &twin_verts)?))
        }
        "factor_0_singleton" | "factor_1_singleton" => {
            let idx = if quantity == "factor_0_singleton" { 0 } else { 1 };
            match &inst.set {
                SetSpec::Model(UncertaintySet::CoeffFactor(cf)) => {
                    Ok(bool_value(cf.factor_sets[idx].len() == 1))
                }
                _ => Err(Error::invalid("factor singleton check needs a coeff-factor set")),
            }
        }
        "maxmin_start_a" => Ok(maxmin_report(inst, 0, maxmin_cache)?.min_value),
        "maxmin_start_b" => Ok(maxmin_report(inst, 1, maxmin_cache)?.min_value),
        "maxmin_start_a_worst_p" => {
            let report = maxmin_report(inst, 0, maxmin_cache)?;
            report
                .argmin_params
                .first()
                .copied()
                .ok_or_else(|| Error::numerical("oracle reported no worst-case parameter"))
        }
        "maxmin_start_a_beta" | "maxmin_start_b_beta" => {
            let start = if quantity == "maxmin_start_a_beta" { 0 } else { 1 };
            let report = maxmin_report(inst, start, maxmin_cache)?;
            let policy = report
                .policy
                .as_ref()
                .ok_or_else(|| Error::numerical("oracle reported no policy"))?;
            Ok(policy.action_probs[1][0])
        }
        "eval_beta0_oracle_start_a"
        | "eval_beta_half_oracle_start_a"
        | "eval_beta_half_oracle_start_b" => {
            let s_n = inst.mdp.num_states;
            let beta = if quantity == "eval_beta0_oracle_start_a" { 0.0 } else { 0.5 };
            let mut probs = vec![vec![1.0, 0.0]; s_n];
            probs[1] = vec![beta, 1.0 - beta];
            let policy = Policy::new(probs)?;
            let start = if quantity.ends_with("start_b") { 1 } else { 0 };
            let mdp = inst.mdp.with_initial_dist(start_dist(s_n, start))?;
            let report = worst_case_oracle(&mdp, &inst.set, &policy, None)?;
            Ok(report.min_value)
        }
        "sa_feasibility_gap" => {
            let policy = Policy::uniform(inst.mdp.num_states, inst.mdp.num_actions);
            let report = verify_tractability(&inst.mdp, &inst.set, &policy, TractMode::Sa)?;
            let cmp = report
                .comparisons
                .iter()
                .find(|c| c.quantity == "fixed_point_sa_vs_oracle")
                .ok_or_else(|| Error::numerical("tractability report missing comparison"))?;
            Ok(cmp.oracle_value - cmp.fast_value)
        }
        other => Err(Error::invalid(format!("unknown expected quantity '{}'", other))),
    }
}

fn f64_value(x: f64) -> Value {
    Value::from(x)
}

fn rewards_json(r: &[Vec<Vec<f64>>]) -> Value {
    Value::Array(
        r.iter()
            .map(|per_a| {
                Value::Array(
                    per_a
                        .iter()
                        .map(|row| Value::Array(row.iter().map(|&x| f64_value(x)).collect()))
                        .collect(),
                )
            })
            .collect(),
    )
}

fn row_json(row: &[f64]) -> Value {
    Value::Array(row.iter().map(|&x| f64_value(x)).collect())
}

fn block_json(block: &StateBlock) -> Value {
    Value::Array(block.iter().map(|row| row_json(row)).collect())
}

fn kernel_json(k: &TransitionKernel) -> Value {
    rewards_json(&k.probs)
}

fn uncertainty_json(set: &SetSpec) -> Value {
    match set {
        SetSpec::Model(UncertaintySet::ExplicitFinite { kernels }) => json!({
            "variant": "explicit_finite",
            "kernels": Value::Array(kernels.iter().map(kernel_json).collect()),
        }),
        SetSpec::Model(UncertaintySet::SRectangular { per_state }) => json!({
            "variant": "s_rectangular",
            "per_state": Value::Array(
                per_state
                    .iter()
                    .map(|blocks| Value::Array(blocks.iter().map(block_json).collect()))
                    .collect(),
            ),
        }),
        SetSpec::Model(UncertaintySet::SaRectangular { per_state_action }) => json!({
            "variant": "sa_rectangular",
            "per_state_action": Value::Array(
                per_state_action
                    .iter()
                    .map(|per_a| {
                        Value::Array(per_a.iter().map(|rows| block_json(rows)).collect())
                    })
                    .collect(),
            ),
        }),
        SetSpec::Model(UncertaintySet::FactorModel(fm)) => json!({
            "variant": "factor_model",
            "coefficients": rewards_json(&fm.coefficients),
            "factor_sets": Value::Array(fm.factor_sets.iter().map(block_json).collect()),
        }),
        SetSpec::Model(UncertaintySet::Partitioned(p)) => json!({
            "variant": "partitioned",
            "s1_states": p.s1_states.clone(),
            "s_part": Value::Array(
                p.s_part
                    .iter()
                    .map(|blocks| Value::Array(blocks.iter().map(block_json).collect()))
                    .collect(),
            ),
            "factor_coefficients": rewards_json(&p.factor_coefficients),
            "factor_sets": Value::Array(p.factor_sets.iter().map(block_json).collect()),
        }),
        SetSpec::Model(UncertaintySet::CoeffFactor(cf)) => json!({
            "variant": "coeff_factor",
            "coeff_sets": Value::Array(
                cf.coeff_sets
                    .iter()
                    .map(|per_k| Value::Array(per_k.iter().map(block_json).collect()))
                    .collect(),
            ),
            "factor_sets": Value::Array(cf.factor_sets.iter().map(block_json).collect()),
        }),
        SetSpec::Model(UncertaintySet::SaCoeffFactor(scf)) => json!({
            "variant": "sa_coeff_factor",
            "coeff_sets": Value::Array(
                scf.coeff_sets
                    .iter()
                    .map(|per_a| Value::Array(per_a.iter().map(block_json).collect()))
                    .collect(),
            ),
            "factor_sets": Value::Array(scf.factor_sets.iter().map(block_json).collect()),
        }),
        SetSpec::Parametric(ps) => {
            let names: Vec<String> = ps.parameters.iter().map(|p| p.name.clone()).collect();
            json!({
                "variant": "parametric",
                "parameters": Value::Array(
                    ps.parameters
                        .iter()
                        .map(|p| json!({"name": p.name, "low": p.low, "high": p.high}))
                        .collect(),
                ),
                "kernel_template": Value::Array(
                    ps.template
                        .iter()
                        .map(|per_a| {
                            Value::Array(
                                per_a
                                    .iter()
                                    .map(|row| {
                                        Value::Array(
                                            row.iter()
                                                .map(|e| Value::from(e.to_source(&names)))
                                                .collect(),
                                        )
                                    })
                                    .collect(),
                            )
                        })
                        .collect(),
                ),
                "grid_resolution": ps.grid_resolution,
            })
        }
    }
}

/// Serializes an instance into the on-disk JSON format.
pub fn instance_to_json(inst: &NamedInstance) -> Value {
    json!({
        "name": inst.name,
        "num_states": inst.mdp.num_states,
        "num_actions": inst.mdp.num_actions,
        "gamma": inst.mdp.discount,
        "mu": row_json(&inst.mdp.initial_dist),
        "rewards": rewards_json(&inst.mdp.rewards),
        "uncertainty": uncertainty_json(&inst.set),
        "provenance": inst.provenance,
        "expected": Value::Array(
            inst.expected
                .iter()
                .map(|e| {
                    json!({
                        "quantity": e.quantity,
                        "value": e.value,
                        "tolerance": e.tolerance,
                        "provenance": e.provenance,
                    })
                })
                .collect(),
        ),
    })
}

pub fn instance_to_json_string(inst: &NamedInstance) -> String {
    serde_json::to_string_pretty(&instance_to_json(inst)).expect("instance JSON")
}

fn as_object<'v>(v: &'v Value, what: &str) -> Result<&'v Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| Error::invalid(format!("{}: expected an object", what)))
}

fn reject_unknown(map: &Map<String, Value>, allowed: &[&str], what: &str) -> Result<()> {
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::invalid(format!("{}: unknown field '{}'", what, key)));
        }
    }
    Ok(())
}

fn field<'v>(map: &'v Map<String, Value>, name: &str, what: &str) -> Result<&'v Value> {
    map.get(name)
        .ok_or_else(|| Error::invalid(format!("{}: missing field '{}'", what, name)))
}

fn as_f64(v: &Value, what: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::invalid(format!("{}: expected a number", what)))
}

fn as_usize(v: &Value, what: &str) -> Result<usize> {
    v.as_u64()
        .map(|u| u as usize)
        .ok_or_else(|| Error::invalid(format!("{}: expected a nonnegative integer", what)))
}

fn as_str<'v>(v: &'v Value, what: &str) -> Result<&'v str> {
    v.as_str()
        .ok_or_else(|| Error::invalid(format!("{}: expected a string", what)))
}

fn as_array<'v>(v: &'v Value, what: &str) -> Result<&'v [Value]> {
    v.as_array()
        .map(|a| a.as_slice())
        .ok_or_else(|| Error::invalid(format!("{}: expected an array", what)))
}

fn parse_row(v: &Value, what: &str) -> Result<Vec<f64>> {
    as_array(v, what)?
        .iter()
        .map(|x| as_f64(x, what))
        .collect()
}

fn parse_block(v: &Value, what: &str) -> Result<StateBlock> {
    as_array(v, what)?
        .iter()
        .map(|row| parse_row(row, what))
        .collect()
}

fn parse_tensor3(v: &Value, what: &str) -> Result<Vec<Vec<Vec<f64>>>> {
    as_array(v, what)?
        .iter()
        .map(|b| parse_block(b, what))
        .collect()
}

fn parse_blocks(v: &Value, what: &str) -> Result<Vec<StateBlock>> {
    parse_tensor3(v, what)
}

fn parse_uncertainty(v: &Value) -> Result<SetSpec> {
    let map = as_object(v, "uncertainty")?;
    let variant = as_str(field(map, "variant", "uncertainty")?, "uncertainty.variant")?;
    match variant {
        "explicit_finite" => {
            reject_unknown(map, &["variant", "kernels"], "uncertainty")?;
            let kernels = as_array(field(map, "kernels", "uncertainty")?, "kernels")?
                .iter()
                .map(|k| TransitionKernel::new(parse_tensor3(k, "kernels")?))
                .collect::<Result<Vec<_>>>()?;
            Ok(SetSpec::Model(UncertaintySet::ExplicitFinite { kernels }))
        }
        "s_rectangular" => {
            reject_unknown(map, &["variant", "per_state"], "uncertainty")?;
            let per_state = as_array(field(map, "per_state", "uncertainty")?, "per_state")?
                .iter()
                .map(|b| parse_blocks(b, "per_state"))
                .collect::<Result<Vec<_>>>()?;
            Ok(SetSpec::Model(UncertaintySet::SRectangular { per_state }))
        }
        "sa_rectangular" => {
            reject_unknown(map, &["variant", "per_state_action"], "uncertainty")?;
            let per_state_action =
                as_array(field(map, "per_state_action", "uncertainty")?, "per_state_action")?
                    .iter()
                    .map(|b| parse_blocks(b, "per_state_action"))
                    .collect::<Result<Vec<_>>>()?;
            Ok(SetSpec::Model(UncertaintySet::SaRectangular { per_state_action }))
        }
        "factor_model" => {
            reject_unknown(map, &["variant", "coefficients", "factor_sets"], "uncertainty")?;
            Ok(SetSpec::Model(UncertaintySet::FactorModel(FactorModel {
                coefficients: parse_tensor3(
                    field(map, "coefficients", "uncertainty")?,
                    "coefficients",
                )?,
                factor_sets: parse_blocks(
                    field(map, "factor_sets", "uncertainty")?,
                    "factor_sets",
                )?,
            })))
        }
        "partitioned" => {
            reject_unknown(
                map,
                &["variant", "s1_states", "s_part", "factor_coefficients", "factor_sets"],
                "uncertainty",
            )?;
            let s1_states = as_array(field(map, "s1_states", "uncertainty")?, "s1_states")?
                .iter()
                .map(|x| as_usize(x, "s1_states"))
                .collect::<Result<Vec<_>>>()?;
            let s_part = as_array(field(map, "s_part", "uncertainty")?, "s_part")?
                .iter()
                .map(|b| parse_blocks(b, "s_part"))
                .collect::<Result<Vec<_>>>()?;
            Ok(SetSpec::Model(UncertaintySet::Partitioned(Partitioned {
                s1_states,
                s_part,
                factor_coefficients: parse_tensor3(
                    field(map, "factor_coefficients", "uncertainty")?,
                    "factor_coefficients",
                )?,
                factor_sets: parse_blocks(
                    field(map, "factor_sets", "uncertainty")?,
                    "factor_sets",
                )?,
            })))
        }
        "coeff_factor" | "sa_coeff_factor" => {
            reject_unknown(map, &["variant", "coeff_sets", "factor_sets"], "uncertainty")?;
            let coeff_sets = as_array(field(map, "coeff_sets", "uncertainty")?, "coeff_sets")?
                .iter()
                .map(|b| parse_blocks(b, "coeff_sets"))
                .collect::<Result<Vec<_>>>()?;
            let factor_sets =
                parse_blocks(field(map, "factor_sets", "uncertainty")?, "factor_sets")?;
            if variant == "coeff_factor" {
                Ok(SetSpec::Model(UncertaintySet::CoeffFactor(CoeffFactor {
                    coeff_sets,
                    factor_sets,
                })))
            } else {
                Ok(SetSpec::Model(UncertaintySet::SaCoeffFactor(SaCoeffFactor {
                    coeff_sets,
                    factor_sets,
                })))
            }
        }
        "parametric" => {
            reject_unknown(
                map,
                &["variant", "parameters", "kernel_template", "grid_resolution"],
                "uncertainty",
            )?;
            let parameters = as_array(field(map, "parameters", "uncertainty")?, "parameters")?
                .iter()
                .map(|p| {
                    let pm = as_object(p, "parameters")?;
                    reject_unknown(pm, &["name", "low", "high"], "parameters")?;
                    Ok(ParamSpec {
                        name: as_str(field(pm, "name", "parameters")?, "parameter name")?
                            .to_string(),
                        low: as_f64(field(pm, "low", "parameters")?, "parameter low")?,
                        high: as_f64(field(pm, "high", "parameters")?, "parameter high")?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let names: Vec<String> = parameters.iter().map(|p| p.name.clone()).collect();
            let template =
                as_array(field(map, "kernel_template", "uncertainty")?, "kernel_template")?
                    .iter()
                    .map(|per_a| {
                        as_array(per_a, "kernel_template")?
                            .iter()
                            .map(|row| {
                                as_array(row, "kernel_template")?
                                    .iter()
                                    .map(|e| {
                                        crate::params::parse_affine(
                                            as_str(e, "kernel_template entry")?,
                                            &names,
                                        )
                                    })
                                    .collect::<Result<Vec<_>>>()
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
            let grid_resolution = match map.get("grid_resolution") {
                Some(v) => Some(as_usize(v, "grid_resolution")?),
                None => None,
            };
            Ok(SetSpec::Parametric(ParamSet::new(parameters, template, grid_resolution)?))
        }
        other => Err(Error::invalid(format!("unknown uncertainty variant '{}'", other))),
    }
}

/// Parses the on-disk JSON format. Unknown fields are rejected at every
/// level.
pub fn parse_instance(text: &str) -> Result<NamedInstance> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| Error::invalid(format!("instance JSON: {}", e)))?;
    let map = as_object(&root, "instance")?;
    reject_unknown(
        map,
        &[
            "name",
            "num_states",
            "num_actions",
            "gamma",
            "mu",
            "rewards",
            "uncertainty",
            "provenance",
            "expected",
        ],
        "instance",
    )?;
    let name = as_str(field(map, "name", "instance")?, "name")?.to_string();
    let num_states = as_usize(field(map, "num_states", "instance")?, "num_states")?;
    let num_actions = as_usize(field(map, "num_actions", "instance")?, "num_actions")?;
    let gamma = as_f64(field(map, "gamma", "instance")?, "gamma")?;
    let mu = parse_row(field(map, "mu", "instance")?, "mu")?;
    let rewards = parse_tensor3(field(map, "rewards", "instance")?, "rewards")?;
    let set = parse_uncertainty(field(map, "uncertainty", "instance")?)?;
    let provenance = match map.get("provenance") {
        Some(v) => as_str(v, "provenance")?.to_string(),
        None => String::new(),
    };
    let expected = match map.get("expected") {
        Some(v) => as_array(v, "expected")?
            .iter()
            .map(|e| {
                let em = as_object(e, "expected")?;
                reject_unknown(
                    em,
                    &["quantity", "value", "tolerance", "provenance"],
                    "expected",
                )?;
                Ok(Expected {
                    quantity: as_str(field(em, "quantity", "expected")?, "quantity")?
                        .to_string(),
                    value: as_f64(field(em, "value", "expected")?, "expected value")?,
                    tolerance: as_f64(
                        field(em, "tolerance", "expected")?,
                        "expected tolerance",
                    )?,
                    provenance: as_str(
                        field(em, "provenance", "expected")?,
                        "expected provenance",
                    )?
                    .to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let mdp = MdpInstance::new(num_states, num_actions, rewards, gamma, mu)?;
    let inst = NamedInstance { name, mdp, set, provenance, expected };
    inst.validate()?;
    Ok(inst)
}
