//! Robust Markov decision processes with structured uncertainty sets:
//! exact evaluation, robust Bellman operators, solvability certificates,
//! verification oracles, and a library of canonical instances.
//!
//! The central objects are an [`MdpInstance`] (rewards, discount, initial
//! distribution), a [`SetSpec`] (a structured vertex-generated uncertainty
//! set or a box-parametric kernel template), and three robust operators
//! whose fixed points bracket each other: the per-(s,a) adversary value,
//! the per-state adversary value, and the max-min optimal value. Everything
//! the fast paths claim is independently checkable against grid oracles in
//! [`oracle`].

pub mod bellman;
pub mod error;
pub mod game;
pub mod library;
pub mod linalg;
pub mod mdp;
pub mod oracle;
pub mod params;
pub mod report;
pub mod simplex;
pub mod ssp;
pub mod uncertainty;

pub use bellman::{
    apply_t_hat_pi, apply_t_opt, apply_t_pi, check_subfixed_dominated, extract_greedy_policy,
    fixed_point, FixedPointReport, OperatorKind, DEFAULT_FIXED_POINT_TOL, DEFAULT_MAX_ITER,
};
pub use error::{Error, Result};
pub use game::{solve_matrix_game, GameSolution, MatrixGame};
pub use library::{
    builtin_instance, builtin_names, random_instance, Expected, GeneratorSpec, NamedInstance,
};
pub use mdp::{
    apply_t_pi_p, evaluate_exact, solve_mdp_exact, weighted_value, MdpInstance, Policy,
    TransitionKernel, ValueKind, ValueVector, STOCHASTIC_TOL,
};
pub use oracle::{
    duality_gap, max_min_oracle, nonstationary_adversary_dp, policy_dominance_check,
    verify_tractability, worst_case_oracle, Comparison, OracleReport, TractMode,
    DEFAULT_POLICY_GRID, ORACLE_TOL, REFINE_WIDTH,
};
pub use params::{
    parse_affine, AffineExpr, ParamSet, ParamSpec, SetSpec, DEFAULT_GRID_RESOLUTION,
};
pub use report::{ResultRow, RunReport};
pub use ssp::{
    check_strong_ssp_s, check_strong_ssp_sa, check_weak_ssp_s, check_weak_ssp_sa, falsify_ssp,
    SspMode, SspVerdict,
};
pub use uncertainty::{
    CoeffFactor, FactorModel, MinLinear, ObjectiveTensor, Partitioned, SaCoeffFactor, StateBlock,
    UncertaintySet, ARGMIN_TOL, DEDUP_TOL, DEFAULT_VERTEX_CAP,
};
