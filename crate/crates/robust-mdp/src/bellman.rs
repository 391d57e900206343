//! Robust Bellman operators and their fixed points.
//!
//! Three operators over an uncertainty set P:
//!  - per-state adversary   (T^pi)  : min over P of the policy-weighted
//!    one-step return, the adversary picking one kernel per state;
//!  - per-pair adversary    (That^pi): the per-(s,a) minimum, weighted by
//!    the policy afterwards, always a lower bound on the per-state value;
//!  - optimal               (T)     : max over action distributions of the
//!    per-state minimum, evaluated exactly as a matrix game per state.
//!
//! All three are gamma-contractions in the sup norm, so value iteration
//! from zero converges geometrically; the stopping rule on increments
//! guarantees the returned iterate is within `tol` of the fixed point.

use crate::error::{Error, Result};
use crate::game::{solve_matrix_game, MatrixGame};
use crate::linalg::{dot, sup_dist};
use crate::mdp::{MdpInstance, Policy, ValueKind, ValueVector};
use crate::uncertainty::{UncertaintySet, DEFAULT_VERTEX_CAP};

/// Default sup-norm tolerance on fixed points.
pub const DEFAULT_FIXED_POINT_TOL: f64 = 1e-8;

/// Default iteration budget for value iteration.
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    /// T^pi: per-state adversary against a fixed policy.
    PolicyS,
    /// That^pi: per-(state, action) adversary against a fixed policy.
    PolicySa,
    /// T: optimal max-min operator.
    Optimal,
}

impl OperatorKind {
    pub fn value_kind(&self) -> ValueKind {
        match self {
            OperatorKind::PolicyS => ValueKind::FixedPointS,
            OperatorKind::PolicySa => ValueKind::FixedPointSa,
            OperatorKind::Optimal => ValueKind::FixedPointOpt,
        }
    }
}

fn check_shapes(mdp: &MdpInstance, set: &UncertaintySet, policy: Option<&Policy>) -> Result<()> {
    let (s, a) = set.dims();
    if s != mdp.num_states || a != mdp.num_actions {
        return Err(Error::invalid("uncertainty set shape does not match mdp"));
    }
    if let Some(p) = policy {
        if p.num_states() != mdp.num_states || p.num_actions() != mdp.num_actions {
            return Err(Error::invalid("policy shape does not match mdp"));
        }
    }
    Ok(())
}

/// One application of T^pi. For each state the adversary minimizes the
/// bilinear objective <P_s, M_s> with M_s[a][s'] = pi[s][a] (r[s][a][s'] +
/// gamma v[s']), which the per-variant minimizers solve exactly.
pub fn apply_t_pi(
    mdp: &MdpInstance,
    set: &UncertaintySet,
    policy: &Policy,
    v: &[f64],
) -> Result<Vec<f64>> {
    check_shapes(mdp, set, Some(policy))?;
    if v.len() != mdp.num_states {
        return Err(Error::invalid("value vector length mismatch"));
    }
    let gamma = mdp.discount;
    let mut out = vec![0.0; mdp.num_states];
    for s in 0..mdp.num_states {
        let m: Vec<Vec<f64>> = (0..mdp.num_actions)
            .map(|a| {
                let pi = policy.action_probs[s][a];
                (0..mdp.num_states)
                    .map(|sp| pi * (mdp.rewards[s][a][sp] + gamma * v[sp]))
                    .collect()
            })
            .collect();
        out[s] = set.min_linear_s_value(s, &m)?;
    }
    Ok(out)
}

/// One application of That^pi: the adversary minimizes each (s, a) row
/// separately before the policy average.
pub fn apply_t_hat_pi(
    mdp: &MdpInstance,
    set: &UncertaintySet,
    policy: &Policy,
    v: &[f64],
) -> Result<Vec<f64>> {
    check_shapes(mdp, set, Some(policy))?;
    if v.len() != mdp.num_states {
        return Err(Error::invalid("value vector length mismatch"));
    }
    let gamma = mdp.discount;
    let mut out = vec![0.0; mdp.num_states];
    for s in 0..mdp.num_states {
        let mut acc = 0.0;
        for a in 0..mdp.num_actions {
            let pi = policy.action_probs[s][a];
            if pi == 0.0 {
                continue;
            }
            let w: Vec<f64> = (0..mdp.num_states)
                .map(|sp| mdp.rewards[s][a][sp] + gamma * v[sp])
                .collect();
            acc += pi * set.min_linear_sa_value(s, a, &w)?;
        }
        out[s] = acc;
    }
    Ok(out)
}

/// One application of the optimal operator T plus the maximizing policy.
/// Each state is an exact matrix game: rows are actions, columns are the
/// deduplicated marginal vertices at that state.
pub fn apply_t_opt(
    mdp: &MdpInstance,
    set: &UncertaintySet,
    v: &[f64],
) -> Result<(Vec<f64>, Policy)> {
    check_shapes(mdp, set, None)?;
    if v.len() != mdp.num_states {
        return Err(Error::invalid("value vector length mismatch"));
    }
    let gamma = mdp.discount;
    let mut out = vec![0.0; mdp.num_states];
    let mut rows = Vec::with_capacity(mdp.num_states);
    for s in 0..mdp.num_states {
        let blocks = set.marginal_s(s, DEFAULT_VERTEX_CAP)?;
        let payoff: Vec<Vec<f64>> = (0..mdp.num_actions)
            .map(|a| {
                let w: Vec<f64> = (0..mdp.num_states)
                    .map(|sp| mdp.rewards[s][a][sp] + gamma * v[sp])
                    .collect();
                blocks.iter().map(|block| dot(&block[a], &w)).collect()
            })
            .collect();
        let game = MatrixGame::new(payoff)?;
        let sol = solve_matrix_game(&game)?;
        out[s] = sol.value;
        rows.push(sol.row_strategy);
    }
    Ok((out, Policy::new(rows)?))
}

#[derive(Debug, Clone)]
pub struct FixedPointReport {
    pub value: ValueVector,
    pub iterations: usize,
    /// Sup-norm of one extra operator application at the returned iterate.
    pub final_residual: f64,
    /// Increment threshold used by the stopping rule.
    pub tolerance_target: f64,
}

/// Value iteration from zero for the selected operator. Stops when the
/// increment satisfies ||v_{k+1} - v_k|| <= tol (1 - gamma) / (2 gamma),
/// which bounds the distance to the fixed point by tol/2; exceeding
/// `max_iter` is a budget error.
pub fn fixed_point(
    kind: OperatorKind,
    mdp: &MdpInstance,
    set: &UncertaintySet,
    policy: Option<&Policy>,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointReport> {
    if tol <= 0.0 || !tol.is_finite() {
        return Err(Error::invalid("fixed_point: tolerance must be positive"));
    }
    let needs_policy = !matches!(kind, OperatorKind::Optimal);
    let policy = match (needs_policy, policy) {
        (true, Some(p)) => Some(p),
        (true, None) => return Err(Error::invalid("fixed_point: policy operator needs a policy")),
        (false, _) => None,
    };
    let apply = |v: &[f64]| -> Result<Vec<f64>> {
        match kind {
            OperatorKind::PolicyS => apply_t_pi(mdp, set, policy.unwrap(), v),
            OperatorKind::PolicySa => apply_t_hat_pi(mdp, set, policy.unwrap(), v),
            OperatorKind::Optimal => apply_t_opt(mdp, set, v).map(|(v, _)| v),
        }
    };
    let gamma = mdp.discount;
    let mut v = vec![0.0; mdp.num_states];
    let mut iterations = 0usize;
    let threshold = if gamma > 0.0 {
        tol * (1.0 - gamma) / (2.0 * gamma)
    } else {
        f64::INFINITY // one application is exact when gamma = 0
    };
    loop {
        let next = apply(&v)?;
        iterations += 1;
        let delta = sup_dist(&next, &v);
        v = next;
        if delta <= threshold || gamma == 0.0 {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::budget(format!(
                "fixed_point: no convergence within {max_iter} iterations (last increment {delta:.3e})"
            )));
        }
    }
    let reapplied = apply(&v)?;
    let final_residual = sup_dist(&reapplied, &v);
    Ok(FixedPointReport {
        value: ValueVector { values: v, kind: kind.value_kind(), residual: final_residual },
        iterations,
        final_residual,
        tolerance_target: threshold,
    })
}

/// Maximizing policy at the optimal fixed point, verified to be greedy:
/// ||T^pi*(u*) - u*|| must not exceed 10 * tol.
pub fn extract_greedy_policy(
    mdp: &MdpInstance,
    set: &UncertaintySet,
    u_star: &[f64],
    tol: f64,
) -> Result<Policy> {
    let (_, policy) = apply_t_opt(mdp, set, u_star)?;
    let t_pi = apply_t_pi(mdp, set, &policy, u_star)?;
    let gap = sup_dist(&t_pi, u_star);
    if gap > 10.0 * tol {
        return Err(Error::numerical(format!(
            "greedy policy check failed: ||T^pi(u*) - u*|| = {gap:.3e} > {:.3e}",
            10.0 * tol
        )));
    }
    Ok(policy)
}

/// If v <= T^pi(v) componentwise (within 1e-12), monotonicity forces
/// v <= u^pi; this checks both and errors if the implication fails
/// numerically. Returns whether v was subfixed at all.
pub fn check_subfixed_dominated(
    mdp: &MdpInstance,
    set: &UncertaintySet,
    policy: &Policy,
    v: &[f64],
    tol: f64,
) -> Result<bool> {
    let tv = apply_t_pi(mdp, set, policy, v)?;
    let subfixed = v.iter().zip(&tv).all(|(x, y)| *x <= y + 1e-12);
    if !subfixed {
        return Ok(false);
    }
    let fp = fixed_point(OperatorKind::PolicyS, mdp, set, Some(policy), tol, DEFAULT_MAX_ITER)?;
    for (s, (x, u)) in v.iter().zip(&fp.value.values).enumerate() {
        if *x > u + 10.0 * tol {
            return Err(Error::numerical(format!(
                "subfixed vector exceeds fixed point at state {s}: {x} > {u}"
            )));
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::TransitionKernel;

    /// Two states, one action. State 0 hops to state 1 with prob 1-x for
    /// x in {0, 1}; state 1 is absorbing. Reward 1 on every transition out
    /// of state 0, 0 elsewhere. gamma = 1/2.
    fn two_state() -> (MdpInstance, UncertaintySet) {
        let rewards = vec![
            vec![vec![1.0, 1.0]],
            vec![vec![0.0, 0.0]],
        ];
        let mdp = MdpInstance::new(2, 1, rewards, 0.5, vec![0.5, 0.5]).unwrap();
        let mk = |x: f64| {
            TransitionKernel::new(vec![vec![vec![x, 1.0 - x]], vec![vec![0.0, 1.0]]]).unwrap()
        };
        let set = UncertaintySet::ExplicitFinite { kernels: vec![mk(0.0), mk(1.0)] };
        (mdp, set)
    }

    #[test]
    fn policy_fixed_point_worst_case() {
        let (mdp, set) = two_state();
        let policy = Policy::uniform(2, 1);
        // staying at state 0 (x = 1) repeats the reward: v0 = 1 + v0/2 = 2;
        // leaving gives v0 = 1. The adversary minimizes, so u = (1, 0).
        let fp = fixed_point(OperatorKind::PolicyS, &mdp, &set, Some(&policy), 1e-10, 100_000)
            .unwrap();
        assert!((fp.value.values[0] - 1.0).abs() < 1e-8);
        assert!(fp.value.values[1].abs() < 1e-12);
        assert!(fp.final_residual <= 1e-10);
    }

    #[test]
    fn single_action_operators_agree() {
        let (mdp, set) = two_state();
        let policy = Policy::uniform(2, 1);
        let v = vec![0.3, -0.7];
        let a = apply_t_pi(&mdp, &set, &policy, &v).unwrap();
        let b = apply_t_hat_pi(&mdp, &set, &policy, &v).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
        // with one action the optimal operator matches too
        let (c, _) = apply_t_opt(&mdp, &set, &v).unwrap();
        for (x, y) in a.iter().zip(&c) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sa_fixed_point_lower_bounds_s_fixed_point() {
        // two actions with action-dependent rows so the bound is strict at
        // some states
        let rewards = vec![
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        ];
        let mdp = MdpInstance::new(2, 2, rewards, 0.5, vec![0.5, 0.5]).unwrap();
        let rows0 = vec![vec![0.2, 0.8], vec![0.8, 0.2]];
        let set = UncertaintySet::SaRectangular {
            per_state_action: vec![
                vec![rows0.clone(), rows0.clone()],
                vec![vec![vec![0.0, 1.0]], vec![vec![0.0, 1.0]]],
            ],
        };
        set.validate().unwrap();
        let policy = Policy::new(vec![vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        let fs = fixed_point(OperatorKind::PolicyS, &mdp, &set, Some(&policy), 1e-10, 100_000)
            .unwrap();
        let fsa = fixed_point(OperatorKind::PolicySa, &mdp, &set, Some(&policy), 1e-10, 100_000)
            .unwrap();
        for (hat, u) in fsa.value.values.iter().zip(&fs.value.values) {
            assert!(hat <= &(u + 1e-9), "per-pair value must lower bound per-state value");
        }
    }

    #[test]
    fn optimal_beats_fixed_policies() {
        let (mdp, set) = two_state();
        let opt = fixed_point(OperatorKind::Optimal, &mdp, &set, None, 1e-10, 100_000).unwrap();
        let policy = Policy::uniform(2, 1);
        let fs = fixed_point(OperatorKind::PolicyS, &mdp, &set, Some(&policy), 1e-10, 100_000)
            .unwrap();
        for (o, u) in opt.value.values.iter().zip(&fs.value.values) {
            assert!(o + 1e-9 >= *u);
        }
        let greedy = extract_greedy_policy(&mdp, &set, &opt.value.values, 1e-8).unwrap();
        assert!(greedy.is_deterministic(1e-9));
    }

    #[test]
    fn gamma_zero_single_application() {
        let rewards = vec![vec![vec![2.0, 2.0]], vec![vec![0.0, 0.0]]];
        let mdp = MdpInstance::new(2, 1, rewards, 0.0, vec![0.5, 0.5]).unwrap();
        let mk = |x: f64| {
            TransitionKernel::new(vec![vec![vec![x, 1.0 - x]], vec![vec![0.0, 1.0]]]).unwrap()
        };
        let set = UncertaintySet::ExplicitFinite { kernels: vec![mk(0.0), mk(1.0)] };
        let policy = Policy::uniform(2, 1);
        let fp = fixed_point(OperatorKind::PolicyS, &mdp, &set, Some(&policy), 1e-10, 10).unwrap();
        assert_eq!(fp.iterations, 1);
        assert!((fp.value.values[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn subfixed_vectors_dominated() {
        let (mdp, set) = two_state();
        let policy = Policy::uniform(2, 1);
        // v = 0 is always subfixed here since rewards are nonnegative
        assert!(check_subfixed_dominated(&mdp, &set, &policy, &[0.0, 0.0], 1e-9).unwrap());
        // a vector above the fixed point is not subfixed
        assert!(!check_subfixed_dominated(&mdp, &set, &policy, &[5.0, 5.0], 1e-9).unwrap());
    }
}
