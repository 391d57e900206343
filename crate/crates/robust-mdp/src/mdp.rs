//! Exact MDP machinery for a fixed transition kernel: the tuple (S, A, r,
//! gamma, mu), policy evaluation as a linear system, and a standard exact
//! solver (policy iteration) for the inner maximization of duality checks.

use crate::error::{Error, Result};
use crate::linalg::{lu_solve, sup_dist, sup_norm};

/// Construction-time stochasticity tolerance. Rows are never renormalized
/// silently; a violation is a construction error.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Check that `row` is a probability distribution within `STOCHASTIC_TOL`.
pub fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.is_empty() {
        return Err(Error::invalid(format!("{what}: empty distribution")));
    }
    let mut sum = 0.0;
    for &x in row {
        if !x.is_finite() {
            return Err(Error::invalid(format!("{what}: non-finite entry")));
        }
        if x < -STOCHASTIC_TOL {
            return Err(Error::invalid(format!("{what}: negative entry {x}")));
        }
        sum += x;
    }
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::invalid(format!("{what}: row sums to {sum}, not 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpInstance {
    pub num_states: usize,
    pub num_actions: usize,
    /// r[s][a][s']
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub discount: f64,
    pub initial_dist: Vec<f64>,
}

impl MdpInstance {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        rewards: Vec<Vec<Vec<f64>>>,
        discount: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::invalid("mdp: need at least one state and one action"));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::invalid(format!("mdp: discount {discount} not in [0,1)")));
        }
        if rewards.len() != num_states
            || rewards.iter().any(|per_a| {
                per_a.len() != num_actions || per_a.iter().any(|row| row.len() != num_states)
            })
        {
            return Err(Error::invalid("mdp: reward tensor shape mismatch"));
        }
        if rewards
            .iter()
            .flatten()
            .flatten()
            .any(|x| !x.is_finite())
        {
            return Err(Error::invalid("mdp: non-finite reward"));
        }
        if initial_dist.len() != num_states {
            return Err(Error::invalid("mdp: initial distribution length mismatch"));
        }
        check_distribution(&initial_dist, "mdp initial distribution")?;
        Ok(MdpInstance { num_states, num_actions, rewards, discount, initial_dist })
    }

    /// Same instance with a different start distribution.
    pub fn with_initial_dist(&self, mu: Vec<f64>) -> Result<Self> {
        MdpInstance::new(
            self.num_states,
            self.num_actions,
            self.rewards.clone(),
            self.discount,
            mu,
        )
    }

    pub fn max_abs_reward(&self) -> f64 {
        self.rewards
            .iter()
            .flatten()
            .flatten()
            .fold(0.0_f64, |m, &x| m.max(x.abs()))
    }

    /// Do rewards depend only on (s, a)? True when every r[s][a][.] slice is
    /// constant within `tol` (1e-12 by convention).
    pub fn rewards_next_state_independent(&self, tol: f64) -> bool {
        self.rewards.iter().all(|per_a| {
            per_a.iter().all(|row| {
                let first = row[0];
                row.iter().all(|&x| (x - first).abs() <= tol)
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    /// P[s][a][s']
    pub probs: Vec<Vec<Vec<f64>>>,
}

impl TransitionKernel {
    pub fn new(probs: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if probs.is_empty() || probs[0].is_empty() {
            return Err(Error::invalid("kernel: empty tensor"));
        }
        let num_states = probs.len();
        let num_actions = probs[0].len();
        for (s, per_a) in probs.iter().enumerate() {
            if per_a.len() != num_actions {
                return Err(Error::invalid("kernel: ragged action dimension"));
            }
            for (a, row) in per_a.iter().enumerate() {
                if row.len() != num_states {
                    return Err(Error::invalid("kernel: ragged next-state dimension"));
                }
                check_distribution(row, &format!("kernel row ({s},{a})"))?;
            }
        }
        Ok(TransitionKernel { probs })
    }

    pub fn num_states(&self) -> usize {
        self.probs.len()
    }

    pub fn num_actions(&self) -> usize {
        self.probs[0].len()
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        &self.probs[s][a]
    }

    /// Flatten to a single vector, row-major; used by hull-membership LPs.
    pub fn flatten(&self) -> Vec<f64> {
        self.probs.iter().flatten().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    /// pi[s][a]
    pub action_probs: Vec<Vec<f64>>,
}

impl Policy {
    pub fn new(action_probs: Vec<Vec<f64>>) -> Result<Self> {
        if action_probs.is_empty() {
            return Err(Error::invalid("policy: empty"));
        }
        let num_actions = action_probs[0].len();
        for (s, row) in action_probs.iter().enumerate() {
            if row.len() != num_actions {
                return Err(Error::invalid("policy: ragged rows"));
            }
            check_distribution(row, &format!("policy row {s}"))?;
        }
        Ok(Policy { action_probs })
    }

    pub fn deterministic(num_states: usize, num_actions: usize, actions: &[usize]) -> Result<Self> {
        if actions.len() != num_states {
            return Err(Error::invalid("policy: one action per state required"));
        }
        let mut rows = vec![vec![0.0; num_actions]; num_states];
        for (s, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::invalid(format!("policy: action {a} out of range")));
            }
            rows[s][a] = 1.0;
        }
        Ok(Policy { action_probs: rows })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Policy { action_probs: vec![vec![p; num_actions]; num_states] }
    }

    pub fn num_states(&self) -> usize {
        self.action_probs.len()
    }

    pub fn num_actions(&self) -> usize {
        self.action_probs[0].len()
    }

    /// True when every row puts all mass (within tol) on a single action.
    pub fn is_deterministic(&self, tol: f64) -> bool {
        self.action_probs
            .iter()
            .all(|row| row.iter().any(|&p| (p - 1.0).abs() <= tol))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Exact,
    FixedPointS,
    FixedPointSa,
    FixedPointOpt,
}

impl ValueKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ValueKind::Exact => "exact",
            ValueKind::FixedPointS => "fixed_point_s",
            ValueKind::FixedPointSa => "fixed_point_sa",
            ValueKind::FixedPointOpt => "fixed_point_opt",
        }
    }
}

/// One real per state, tagged with which defining equation it satisfies and
/// the sup-norm residual achieved for that equation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueVector {
    pub values: Vec<f64>,
    pub kind: ValueKind,
    pub residual: f64,
}

fn check_shapes(mdp: &MdpInstance, policy: Option<&Policy>, kernel: Option<&TransitionKernel>) -> Result<()> {
    if let Some(p) = policy {
        if p.num_states() != mdp.num_states || p.num_actions() != mdp.num_actions {
            return Err(Error::invalid("policy shape does not match mdp"));
        }
    }
    if let Some(k) = kernel {
        if k.num_states() != mdp.num_states || k.num_actions() != mdp.num_actions {
            return Err(Error::invalid("kernel shape does not match mdp"));
        }
    }
    Ok(())
}

/// One application of the fixed-kernel operator:
/// out[s] = sum_a pi[s][a] * sum_s' P[s][a][s'] (r[s][a][s'] + gamma v[s']).
pub fn apply_t_pi_p(
    mdp: &MdpInstance,
    policy: &Policy,
    kernel: &TransitionKernel,
    v: &[f64],
) -> Result<Vec<f64>> {
    check_shapes(mdp, Some(policy), Some(kernel))?;
    if v.len() != mdp.num_states {
        return Err(Error::invalid("value vector length mismatch"));
    }
    let gamma = mdp.discount;
    let mut out = vec![0.0; mdp.num_states];
    for s in 0..mdp.num_states {
        let mut acc = 0.0;
        for a in 0..mdp.num_actions {
            let pa = policy.action_probs[s][a];
            if pa == 0.0 {
                continue;
            }
            let row = kernel.row(s, a);
            let rew = &mdp.rewards[s][a];
            let mut inner = 0.0;
            for sp in 0..mdp.num_states {
                inner += row[sp] * (rew[sp] + gamma * v[sp]);
            }
            acc += pa * inner;
        }
        out[s] = acc;
    }
    Ok(out)
}

/// Exact policy evaluation: the unique solution of v = T^{pi,P}(v), computed
/// by dense LU on (I - gamma M) v = c. The returned residual is measured
/// against one explicit operator application and must be at most 1e-10.
pub fn evaluate_exact(
    mdp: &MdpInstance,
    policy: &Policy,
    kernel: &TransitionKernel,
) -> Result<ValueVector> {
    check_shapes(mdp, Some(policy), Some(kernel))?;
    let n = mdp.num_states;
    let gamma = mdp.discount;

    let mut a = vec![vec![0.0; n]; n];
    let mut c = vec![0.0; n];
    for s in 0..n {
        for act in 0..mdp.num_actions {
            let pa = policy.action_probs[s][act];
            if pa == 0.0 {
                continue;
            }
            let row = kernel.row(s, act);
            let rew = &mdp.rewards[s][act];
            for sp in 0..n {
                a[s][sp] += pa * row[sp];
                c[s] += pa * row[sp] * rew[sp];
            }
        }
    }
    for s in 0..n {
        for sp in 0..n {
            a[s][sp] = if s == sp { 1.0 } else { 0.0 } - gamma * a[s][sp];
        }
    }

    let values = lu_solve(a, c)?;
    let image = apply_t_pi_p(mdp, policy, kernel, &values)?;
    let residual = sup_dist(&values, &image);
    if residual > 1e-10 {
        // gamma < 1 and stochastic rows make the system well conditioned;
        // failing here means a solver bug, not bad input
        return Err(Error::numerical(format!(
            "evaluate_exact: residual {residual:.3e} above 1e-10"
        )));
    }
    Ok(ValueVector { values, kind: ValueKind::Exact, residual })
}

/// mu-weighted scalar value.
pub fn weighted_value(mu: &[f64], v: &[f64]) -> f64 {
    mu.iter().zip(v).map(|(m, x)| m * x).sum()
}

/// Exact optimal policy for a fixed kernel, by policy iteration over
/// deterministic policies (greedy ties broken toward the smallest action
/// index, which also makes the result deterministic).
pub fn solve_mdp_exact(
    mdp: &MdpInstance,
    kernel: &TransitionKernel,
) -> Result<(Policy, ValueVector)> {
    check_shapes(mdp, None, Some(kernel))?;
    let n = mdp.num_states;
    let gamma = mdp.discount;
    let mut actions = vec![0usize; n];

    // policy iteration terminates because each step strictly improves some
    // state's value until the greedy policy reproduces itself
    for _ in 0..10_000 {
        let policy = Policy::deterministic(n, mdp.num_actions, &actions)?;
        let v = evaluate_exact(mdp, &policy, kernel)?;
        let mut next = vec![0usize; n];
        for s in 0..n {
            let mut best_a = 0usize;
            let mut best_q = f64::NEG_INFINITY;
            for a in 0..mdp.num_actions {
                let row = kernel.row(s, a);
                let rew = &mdp.rewards[s][a];
                let mut q = 0.0;
                for sp in 0..n {
                    q += row[sp] * (rew[sp] + gamma * v.values[sp]);
                }
                if q > best_q + 1e-12 {
                    best_q = q;
                    best_a = a;
                }
            }
            next[s] = best_a;
        }
        if next == actions {
            // Bellman optimality residual check
            let mut residual = 0.0_f64;
            for s in 0..n {
                let mut best_q = f64::NEG_INFINITY;
                for a in 0..mdp.num_actions {
                    let row = kernel.row(s, a);
                    let rew = &mdp.rewards[s][a];
                    let mut q = 0.0;
                    for sp in 0..n {
                        q += row[sp] * (rew[sp] + gamma * v.values[sp]);
                    }
                    best_q = best_q.max(q);
                }
                residual = residual.max((best_q - v.values[s]).abs());
            }
            if residual > 1e-10 {
                return Err(Error::numerical(format!(
                    "solve_mdp_exact: optimality residual {residual:.3e}"
                )));
            }
            let value = ValueVector { values: v.values, kind: ValueKind::Exact, residual };
            return Ok((policy, value));
        }
        actions = next;
    }
    Err(Error::numerical("solve_mdp_exact: policy iteration did not settle"))
}

/// Sanity bound used by ValueVector invariants: |v[s]| <= max|r|/(1-gamma).
pub fn value_bound(mdp: &MdpInstance) -> f64 {
    mdp.max_abs_reward() / (1.0 - mdp.discount)
}

pub fn check_value_bound(mdp: &MdpInstance, v: &ValueVector) -> bool {
    sup_norm(&v.values) <= value_bound(mdp) + v.residual + 1e-12
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state_mdp(r: f64, gamma: f64) -> (MdpInstance, Policy, TransitionKernel) {
        let mdp = MdpInstance::new(1, 1, vec![vec![vec![r]]], gamma, vec![1.0]).unwrap();
        let pol = Policy::deterministic(1, 1, &[0]).unwrap();
        let ker = TransitionKernel::new(vec![vec![vec![1.0]]]).unwrap();
        (mdp, pol, ker)
    }

    #[test]
    fn geometric_series_value() {
        // r=1, gamma=0.5, self-loop: v = 1/(1-gamma) = 2
        let (mdp, pol, ker) = single_state_mdp(1.0, 0.5);
        let v = evaluate_exact(&mdp, &pol, &ker).unwrap();
        assert!((v.values[0] - 2.0).abs() < 1e-12);
        assert_eq!(v.kind, ValueKind::Exact);
    }

    #[test]
    fn gamma_zero_is_immediate_reward() {
        let mdp = MdpInstance::new(
            2,
            1,
            vec![
                vec![vec![3.0, 5.0]],
                vec![vec![0.0, -1.0]],
            ],
            0.0,
            vec![0.5, 0.5],
        )
        .unwrap();
        let pol = Policy::deterministic(2, 1, &[0, 0]).unwrap();
        let ker = TransitionKernel::new(vec![
            vec![vec![0.5, 0.5]],
            vec![vec![1.0, 0.0]],
        ])
        .unwrap();
        let out = apply_t_pi_p(&mdp, &pol, &ker, &[100.0, -100.0]).unwrap();
        assert!((out[0] - 4.0).abs() < 1e-12);
        assert!((out[1] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(TransitionKernel::new(vec![vec![vec![0.5, 0.4]]]).is_err());
        assert!(Policy::new(vec![vec![0.7, 0.4]]).is_err());
        assert!(MdpInstance::new(1, 1, vec![vec![vec![f64::NAN]]], 0.5, vec![1.0]).is_err());
        assert!(MdpInstance::new(1, 1, vec![vec![vec![0.0]]], 1.0, vec![1.0]).is_err());
    }

    #[test]
    fn single_action_solve_matches_evaluate() {
        let (mdp, pol, ker) = single_state_mdp(2.0, 0.25);
        let (best, v) = solve_mdp_exact(&mdp, &ker).unwrap();
        let ev = evaluate_exact(&mdp, &pol, &ker).unwrap();
        assert_eq!(best.action_probs, pol.action_probs);
        assert!((v.values[0] - ev.values[0]).abs() < 1e-12);
    }

    #[test]
    fn identical_rewards_any_action_optimal() {
        // rewards identical across actions and next states: v = r/(1-gamma)
        let r = 0.7;
        let gamma = 0.3;
        let mdp = MdpInstance::new(
            2,
            2,
            vec![
                vec![vec![r, r], vec![r, r]],
                vec![vec![r, r], vec![r, r]],
            ],
            gamma,
            vec![1.0, 0.0],
        )
        .unwrap();
        let ker = TransitionKernel::new(vec![
            vec![vec![0.2, 0.8], vec![0.9, 0.1]],
            vec![vec![0.4, 0.6], vec![0.5, 0.5]],
        ])
        .unwrap();
        let (_, v) = solve_mdp_exact(&mdp, &ker).unwrap();
        for s in 0..2 {
            assert!((v.values[s] - r / (1.0 - gamma)).abs() < 1e-10);
        }
    }
}
