//! Uncertainty-set families, their marginals and rectangular extensions, and
//! per-model inner-minimization paths.
//!
//! Every convex set here is represented by a finite generating list of
//! vertices (possibly structured as a product of component vertex lists);
//! linear minimization over the convex hull is then exact at vertices. The
//! structured families (factor models and the coefficient variants) also get
//! constructive minimizers so nothing ever requires the full product
//! enumeration: a bilinear minimum over a product of polytopes is attained at
//! a pair of vertices, and for a fixed coefficient choice the factor
//! objective separates per factor.

use crate::error::{Error, Result};
use crate::mdp::{check_distribution, Policy, TransitionKernel};
use crate::simplex::in_convex_hull;

/// Default cap on the number of enumerated kernels.
pub const DEFAULT_VERTEX_CAP: usize = 1_000_000;

/// Absolute tie tolerance on objective values when collecting argmins.
pub const ARGMIN_TOL: f64 = 1e-9;

/// Sup-norm tolerance for deduplicating marginal vertices.
pub const DEDUP_TOL: f64 = 1e-12;

/// A per-state block: one row-stochastic A x S matrix.
pub type StateBlock = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    /// u[s][a][i], each u[s][a][.] a distribution over factors.
    pub coefficients: Vec<Vec<Vec<f64>>>,
    /// factor_sets[i][k][s']: vertex list of the i-th factor set.
    pub factor_sets: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partitioned {
    /// Sorted state indices forming the s-rectangular part S1.
    pub s1_states: Vec<usize>,
    /// s_part[idx within s1][k]: vertex blocks for that state.
    pub s_part: Vec<Vec<StateBlock>>,
    /// factor_coefficients[idx within s2][a][i], fixed coefficients.
    pub factor_coefficients: Vec<Vec<Vec<f64>>>,
    /// Shared factor vertex lists.
    pub factor_sets: Vec<Vec<Vec<f64>>>,
}

impl Partitioned {
    /// Complement of s1 in 0..num_states, sorted.
    pub fn s2_states(&self, num_states: usize) -> Vec<usize> {
        (0..num_states).filter(|s| !self.s1_states.contains(s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoeffFactor {
    /// coeff_sets[s][k][a][i]: vertex list of U^s, each vertex one
    /// coefficient row per action.
    pub coeff_sets: Vec<Vec<Vec<Vec<f64>>>>,
    pub factor_sets: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaCoeffFactor {
    /// coeff_sets[s][a][k][i]: vertex list of U^{sa}.
    pub coeff_sets: Vec<Vec<Vec<Vec<f64>>>>,
    pub factor_sets: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UncertaintySet {
    /// A finite set, doubling as the vertex list of its convex hull.
    ExplicitFinite { kernels: Vec<TransitionKernel> },
    /// Product over states of per-state vertex blocks.
    SRectangular { per_state: Vec<Vec<StateBlock>> },
    /// Product over (s, a) of per-pair vertex distributions.
    SaRectangular { per_state_action: Vec<Vec<Vec<Vec<f64>>>> },
    FactorModel(FactorModel),
    Partitioned(Partitioned),
    CoeffFactor(CoeffFactor),
    SaCoeffFactor(SaCoeffFactor),
}

/// Objective shapes consumed by the solvability checkers.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveTensor {
    /// V[s][a][s']
    Full(Vec<Vec<Vec<f64>>>),
    /// V[s'], the next-state-only form.
    StateValue(Vec<f64>),
    /// (pi, V[s']) pair for the policy-weighted form.
    PolicyValue { policy: Policy, values: Vec<f64> },
}

impl ObjectiveTensor {
    pub fn validate(&self, num_states: usize, num_actions: usize) -> Result<()> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match self {
            ObjectiveTensor::Full(t) => {
                if t.len() != num_states
                    || t.iter().any(|per_a| {
                        per_a.len() != num_actions
                            || per_a.iter().any(|row| row.len() != num_states || !finite(row))
                    })
                {
                    return Err(Error::invalid("objective tensor shape/finite violation"));
                }
            }
            ObjectiveTensor::StateValue(v) => {
                if v.len() != num_states || !finite(v) {
                    return Err(Error::invalid("objective vector shape/finite violation"));
                }
            }
            ObjectiveTensor::PolicyValue { policy, values } => {
                if policy.num_states() != num_states
                    || policy.num_actions() != num_actions
                    || values.len() != num_states
                    || !finite(values)
                {
                    return Err(Error::invalid("objective pair shape violation"));
                }
            }
        }
        Ok(())
    }
}

/// Mixed-radix counter for deterministic Cartesian enumeration; the last
/// coordinate runs fastest.
pub(crate) struct MixedRadix {
    radices: Vec<usize>,
    current: Vec<usize>,
    done: bool,
}

impl MixedRadix {
    pub(crate) fn new(radices: Vec<usize>) -> Self {
        let done = radices.iter().any(|&r| r == 0);
        let current = vec![0; radices.len()];
        MixedRadix { radices, current, done }
    }
}

impl Iterator for MixedRadix {
    type Item = Vec<usize>;
    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        let mut i = self.radices.len();
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            self.current[i] += 1;
            if self.current[i] < self.radices[i] {
                break;
            }
            self.current[i] = 0;
        }
        Some(out)
    }
}

fn dedup_rows(rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    'next: for r in rows {
        for kept in &out {
            if kept.iter().zip(&r).all(|(a, b)| (a - b).abs() <= DEDUP_TOL) {
                continue 'next;
            }
        }
        out.push(r);
    }
    out
}

fn dedup_blocks(blocks: Vec<StateBlock>) -> Vec<StateBlock> {
    let mut out: Vec<StateBlock> = Vec::new();
    'next: for b in blocks {
        for kept in &out {
            let same = kept
                .iter()
                .zip(&b)
                .all(|(x, y)| x.iter().zip(y).all(|(p, q)| (p - q).abs() <= DEDUP_TOL));
            if same {
                continue 'next;
            }
        }
        out.push(b);
    }
    out
}

fn checked_product(counts: &[usize], cap: usize, what: &str) -> Result<usize> {
    let mut acc: u128 = 1;
    for &c in counts {
        if c == 0 {
            return Err(Error::invalid(format!("{what}: empty component vertex list")));
        }
        acc = acc.saturating_mul(c as u128);
        if acc > cap as u128 {
            return Err(Error::budget(format!(
                "{what}: vertex product exceeds cap {cap}"
            )));
        }
    }
    Ok(acc as usize)
}

impl UncertaintySet {
    /// Validate all stored distributions and shape consistency; returns
    /// (num_states, num_actions).
    pub fn validate(&self) -> Result<(usize, usize)> {
        match self {
            UncertaintySet::ExplicitFinite { kernels } => {
                if kernels.is_empty() {
                    return Err(Error::invalid("explicit set: no kernels"));
                }
                let (s, a) = (kernels[0].num_states(), kernels[0].num_actions());
                for k in kernels {
                    if k.num_states() != s || k.num_actions() != a {
                        return Err(Error::invalid("explicit set: kernel shape mismatch"));
                    }
                }
                Ok((s, a))
            }
            UncertaintySet::SRectangular { per_state } => {
                let s = per_state.len();
                if s == 0 {
                    return Err(Error::invalid("s-rectangular: no states"));
                }
                let a = per_state
                    .first()
                    .and_then(|l| l.first())
                    .map(|b| b.len())
                    .ok_or_else(|| Error::invalid("s-rectangular: empty vertex list"))?;
                if a == 0 {
                    return Err(Error::invalid("s-rectangular: zero actions"));
                }
                for (si, list) in per_state.iter().enumerate() {
                    if list.is_empty() {
                        return Err(Error::invalid(format!("s-rectangular: state {si} empty")));
                    }
                    for block in list {
                        if block.len() != a {
                            return Err(Error::invalid("s-rectangular: ragged block"));
                        }
                        for row in block {
                            if row.len() != s {
                                return Err(Error::invalid("s-rectangular: ragged row"));
                            }
                            check_distribution(row, &format!("s-rectangular block at state {si}"))?;
                        }
                    }
                }
                Ok((s, a))
            }
            UncertaintySet::SaRectangular { per_state_action } => {
                let s = per_state_action.len();
                if s == 0 {
                    return Err(Error::invalid("sa-rectangular: no states"));
                }
                let a = per_state_action[0].len();
                if a == 0 {
                    return Err(Error::invalid("sa-rectangular: zero actions"));
                }
                for (si, per_a) in per_state_action.iter().enumerate() {
                    if per_a.len() != a {
                        return Err(Error::invalid("sa-rectangular: ragged action lists"));
                    }
                    for (ai, list) in per_a.iter().enumerate() {
                        if list.is_empty() {
                            return Err(Error::invalid(format!(
                                "sa-rectangular: pair ({si},{ai}) empty"
                            )));
                        }
                        for row in list {
                            if row.len() != s {
                                return Err(Error::invalid("sa-rectangular: ragged row"));
                            }
                            check_distribution(row, &format!("sa vertex at ({si},{ai})"))?;
                        }
                    }
                }
                Ok((s, a))
            }
            UncertaintySet::FactorModel(fm) => {
                let s = fm.coefficients.len();
                if s == 0 {
                    return Err(Error::invalid("factor model: no states"));
                }
                let a = fm.coefficients[0].len();
                let r = fm.factor_sets.len();
                if a == 0 || r == 0 {
                    return Err(Error::invalid("factor model: empty actions or factors"));
                }
                for per_a in &fm.coefficients {
                    if per_a.len() != a {
                        return Err(Error::invalid("factor model: ragged coefficients"));
                    }
                    for u in per_a {
                        if u.len() != r {
                            return Err(Error::invalid("factor model: coefficient length"));
                        }
                        check_distribution(u, "factor coefficients")?;
                    }
                }
                validate_factor_sets(&fm.factor_sets, s)?;
                Ok((s, a))
            }
            UncertaintySet::Partitioned(p) => {
                let s1 = p.s1_states.len();
                let s2 = p.factor_coefficients.len();
                let s = s1 + s2;
                if s == 0 {
                    return Err(Error::invalid("partitioned: no states"));
                }
                if p.s_part.len() != s1 {
                    return Err(Error::invalid("partitioned: s_part length mismatch"));
                }
                let mut sorted = p.s1_states.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != s1 || sorted != p.s1_states || sorted.iter().any(|&x| x >= s) {
                    return Err(Error::invalid(
                        "partitioned: s1 must be sorted unique state indices",
                    ));
                }
                let a = if s1 > 0 {
                    p.s_part
                        .first()
                        .and_then(|l| l.first())
                        .map(|b| b.len())
                        .ok_or_else(|| Error::invalid("partitioned: empty s_part list"))?
                } else {
                    p.factor_coefficients[0].len()
                };
                for (i, list) in p.s_part.iter().enumerate() {
                    if list.is_empty() {
                        return Err(Error::invalid(format!("partitioned: state slot {i} empty")));
                    }
                    for block in list {
                        if block.len() != a {
                            return Err(Error::invalid("partitioned: ragged block"));
                        }
                        for row in block {
                            if row.len() != s {
                                return Err(Error::invalid("partitioned: ragged row"));
                            }
                            check_distribution(row, "partitioned s-part block")?;
                        }
                    }
                }
                let r = p.factor_sets.len();
                if s2 > 0 && r == 0 {
                    return Err(Error::invalid("partitioned: factor part without factors"));
                }
                for per_a in &p.factor_coefficients {
                    if per_a.len() != a {
                        return Err(Error::invalid("partitioned: ragged factor coefficients"));
                    }
                    for u in per_a {
                        if u.len() != r {
                            return Err(Error::invalid("partitioned: coefficient length"));
                        }
                        check_distribution(u, "partitioned factor coefficients")?;
                    }
                }
                if s2 > 0 {
                    validate_factor_sets(&p.factor_sets, s)?;
                }
                Ok((s, a))
            }
            UncertaintySet::CoeffFactor(cf) => {
                let s = cf.coeff_sets.len();
                if s == 0 {
                    return Err(Error::invalid("coeff-factor: no states"));
                }
                let r = cf.factor_sets.len();
                if r == 0 {
                    return Err(Error::invalid("coeff-factor: no factors"));
                }
                let a = cf
                    .coeff_sets
                    .first()
                    .and_then(|l| l.first())
                    .map(|v| v.len())
                    .ok_or_else(|| Error::invalid("coeff-factor: empty coefficient list"))?;
                for (si, list) in cf.coeff_sets.iter().enumerate() {
                    if list.is_empty() {
                        return Err(Error::invalid(format!("coeff-factor: state {si} empty")));
                    }
                    for vertex in list {
                        if vertex.len() != a {
                            return Err(Error::invalid("coeff-factor: ragged vertex"));
                        }
                        for u in vertex {
                            if u.len() != r {
                                return Err(Error::invalid("coeff-factor: coefficient length"));
                            }
                            check_distribution(u, "coeff-factor coefficients")?;
                        }
                    }
                }
                validate_factor_sets(&cf.factor_sets, s)?;
                Ok((s, a))
            }
            UncertaintySet::SaCoeffFactor(scf) => {
                let s = scf.coeff_sets.len();
                if s == 0 {
                    return Err(Error::invalid("sa-coeff-factor: no states"));
                }
                let a = scf.coeff_sets[0].len();
                let r = scf.factor_sets.len();
                if a == 0 || r == 0 {
                    return Err(Error::invalid("sa-coeff-factor: empty actions or factors"));
                }
                for (si, per_a) in scf.coeff_sets.iter().enumerate() {
                    if per_a.len() != a {
                        return Err(Error::invalid("sa-coeff-factor: ragged action lists"));
                    }
                    for (ai, list) in per_a.iter().enumerate() {
                        if list.is_empty() {
                            return Err(Error::invalid(format!(
                                "sa-coeff-factor: pair ({si},{ai}) empty"
                            )));
                        }
                        for u in list {
                            if u.len() != r {
                                return Err(Error::invalid("sa-coeff-factor: coefficient length"));
                            }
                            check_distribution(u, "sa-coeff-factor coefficients")?;
                        }
                    }
                }
                validate_factor_sets(&scf.factor_sets, s)?;
                Ok((s, a))
            }
        }
    }

    /// (num_states, num_actions); assumes a validated set.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            UncertaintySet::ExplicitFinite { kernels } => {
                (kernels[0].num_states(), kernels[0].num_actions())
            }
            UncertaintySet::SRectangular { per_state } => {
                (per_state.len(), per_state[0][0].len())
            }
            UncertaintySet::SaRectangular { per_state_action } => {
                (per_state_action.len(), per_state_action[0].len())
            }
            UncertaintySet::FactorModel(fm) => (fm.coefficients.len(), fm.coefficients[0].len()),
            UncertaintySet::Partitioned(p) => {
                let s = p.s1_states.len() + p.factor_coefficients.len();
                let a = if !p.s_part.is_empty() {
                    p.s_part[0][0].len()
                } else {
                    p.factor_coefficients[0].len()
                };
                (s, a)
            }
            UncertaintySet::CoeffFactor(cf) => (cf.coeff_sets.len(), cf.coeff_sets[0][0].len()),
            UncertaintySet::SaCoeffFactor(scf) => (scf.coeff_sets.len(), scf.coeff_sets[0].len()),
        }
    }

    /// Number of kernels `enumerate_vertices` would produce, saturating at
    /// u128 scale.
    pub fn count_vertices(&self) -> u128 {
        let product = |counts: &[usize]| -> u128 {
            counts.iter().fold(1u128, |acc, &c| acc.saturating_mul(c as u128))
        };
        match self {
            UncertaintySet::ExplicitFinite { kernels } => kernels.len() as u128,
            UncertaintySet::SRectangular { per_state } => {
                product(&per_state.iter().map(Vec::len).collect::<Vec<_>>())
            }
            UncertaintySet::SaRectangular { per_state_action } => product(
                &per_state_action
                    .iter()
                    .flat_map(|per_a| per_a.iter().map(Vec::len))
                    .collect::<Vec<_>>(),
            ),
            UncertaintySet::FactorModel(fm) => {
                product(&fm.factor_sets.iter().map(Vec::len).collect::<Vec<_>>())
            }
            UncertaintySet::Partitioned(p) => {
                let mut counts: Vec<usize> = p.s_part.iter().map(Vec::len).collect();
                counts.extend(p.factor_sets.iter().map(Vec::len));
                product(&counts)
            }
            UncertaintySet::CoeffFactor(cf) => {
                let mut counts: Vec<usize> = cf.coeff_sets.iter().map(Vec::len).collect();
                counts.extend(cf.factor_sets.iter().map(Vec::len));
                product(&counts)
            }
            UncertaintySet::SaCoeffFactor(scf) => {
                let mut counts: Vec<usize> = scf
                    .coeff_sets
                    .iter()
                    .flat_map(|per_a| per_a.iter().map(Vec::len))
                    .collect();
                counts.extend(scf.factor_sets.iter().map(Vec::len));
                product(&counts)
            }
        }
    }

    /// All kernels formed by Cartesian combinations of component vertices,
    /// in deterministic lexicographic order (later coordinates fastest).
    pub fn enumerate_vertices(&self, cap: usize) -> Result<Vec<TransitionKernel>> {
        let (s_n, a_n) = self.dims();
        let total = self.count_vertices();
        if total > cap as u128 {
            return Err(Error::budget(format!(
                "enumerate_vertices: {total} kernels exceed cap {cap}"
            )));
        }
        let mut out = Vec::with_capacity(total as usize);
        match self {
            UncertaintySet::ExplicitFinite { kernels } => out = kernels.clone(),
            UncertaintySet::SRectangular { per_state } => {
                let radices: Vec<usize> = per_state.iter().map(Vec::len).collect();
                for combo in MixedRadix::new(radices) {
                    let probs: Vec<Vec<Vec<f64>>> = combo
                        .iter()
                        .enumerate()
                        .map(|(s, &k)| per_state[s][k].clone())
                        .collect();
                    out.push(TransitionKernel { probs });
                }
            }
            UncertaintySet::SaRectangular { per_state_action } => {
                let radices: Vec<usize> = per_state_action
                    .iter()
                    .flat_map(|per_a| per_a.iter().map(Vec::len))
                    .collect();
                for combo in MixedRadix::new(radices) {
                    let mut probs = vec![vec![Vec::new(); a_n]; s_n];
                    let mut idx = 0;
                    for s in 0..s_n {
                        for a in 0..a_n {
                            probs[s][a] = per_state_action[s][a][combo[idx]].clone();
                            idx += 1;
                        }
                    }
                    out.push(TransitionKernel { probs });
                }
            }
            UncertaintySet::FactorModel(fm) => {
                let radices: Vec<usize> = fm.factor_sets.iter().map(Vec::len).collect();
                for combo in MixedRadix::new(radices) {
                    out.push(fm.kernel_for(&combo));
                }
            }
            UncertaintySet::Partitioned(p) => {
                let s1_counts: Vec<usize> = p.s_part.iter().map(Vec::len).collect();
                let f_counts: Vec<usize> = p.factor_sets.iter().map(Vec::len).collect();
                let mut radices = s1_counts;
                radices.extend(&f_counts);
                let split = p.s_part.len();
                for combo in MixedRadix::new(radices) {
                    out.push(p.kernel_for(&combo[..split], &combo[split..], s_n, a_n));
                }
            }
            UncertaintySet::CoeffFactor(cf) => {
                let mut radices: Vec<usize> = cf.coeff_sets.iter().map(Vec::len).collect();
                radices.extend(cf.factor_sets.iter().map(Vec::len));
                let split = cf.coeff_sets.len();
                for combo in MixedRadix::new(radices) {
                    out.push(cf.kernel_for(&combo[..split], &combo[split..]));
                }
            }
            UncertaintySet::SaCoeffFactor(scf) => {
                let mut radices: Vec<usize> = scf
                    .coeff_sets
                    .iter()
                    .flat_map(|per_a| per_a.iter().map(Vec::len))
                    .collect();
                radices.extend(scf.factor_sets.iter().map(Vec::len));
                let split = s_n * a_n;
                for combo in MixedRadix::new(radices) {
                    out.push(scf.kernel_for(&combo[..split], &combo[split..]));
                }
            }
        }
        Ok(out)
    }

    /// Projection of the vertex enumeration onto state `s`, deduplicated.
    /// Product structure lets each variant avoid the full enumeration.
    pub fn marginal_s(&self, s: usize, cap: usize) -> Result<Vec<StateBlock>> {
        let (s_n, a_n) = self.dims();
        if s >= s_n {
            return Err(Error::invalid(format!("marginal_s: state {s} out of range")));
        }
        let blocks = match self {
            UncertaintySet::ExplicitFinite { kernels } => {
                kernels.iter().map(|k| k.probs[s].clone()).collect()
            }
            UncertaintySet::SRectangular { per_state } => per_state[s].clone(),
            UncertaintySet::SaRectangular { per_state_action } => {
                let radices: Vec<usize> =
                    per_state_action[s].iter().map(Vec::len).collect();
                checked_product(&radices, cap, "marginal_s")?;
                MixedRadix::new(radices)
                    .map(|combo| {
                        (0..a_n)
                            .map(|a| per_state_action[s][a][combo[a]].clone())
                            .collect()
                    })
                    .collect()
            }
            UncertaintySet::FactorModel(fm) => {
                let radices: Vec<usize> = fm.factor_sets.iter().map(Vec::len).collect();
                checked_product(&radices, cap, "marginal_s")?;
                MixedRadix::new(radices)
                    .map(|combo| fm.block_for(s, &combo))
                    .collect()
            }
            UncertaintySet::Partitioned(p) => {
                if let Some(idx) = p.s1_states.iter().position(|&x| x == s) {
                    p.s_part[idx].clone()
                } else {
                    let idx2 = p
                        .s2_states(s_n)
                        .iter()
                        .position(|&x| x == s)
                        .expect("state must be in one part");
                    let radices: Vec<usize> = p.factor_sets.iter().map(Vec::len).collect();
                    checked_product(&radices, cap, "marginal_s")?;
                    MixedRadix::new(radices)
                        .map(|combo| {
                            factor_block(&p.factor_coefficients[idx2], &p.factor_sets, &combo)
                        })
                        .collect()
                }
            }
            UncertaintySet::CoeffFactor(cf) => {
                let mut radices = vec![cf.coeff_sets[s].len()];
                radices.extend(cf.factor_sets.iter().map(Vec::len));
                checked_product(&radices, cap, "marginal_s")?;
                MixedRadix::new(radices)
                    .map(|combo| {
                        factor_block(&cf.coeff_sets[s][combo[0]], &cf.factor_sets, &combo[1..])
                    })
                    .collect()
            }
            UncertaintySet::SaCoeffFactor(scf) => {
                let mut radices: Vec<usize> =
                    scf.coeff_sets[s].iter().map(Vec::len).collect();
                radices.extend(scf.factor_sets.iter().map(Vec::len));
                checked_product(&radices, cap, "marginal_s")?;
                MixedRadix::new(radices)
                    .map(|combo| {
                        let (coeffs, factors) = combo.split_at(a_n);
                        let rows: Vec<Vec<f64>> = (0..a_n)
                            .map(|a| {
                                factor_row(
                                    &scf.coeff_sets[s][a][coeffs[a]],
                                    &scf.factor_sets,
                                    factors,
                                )
                            })
                            .collect();
                        rows
                    })
                    .collect()
            }
        };
        Ok(dedup_blocks(blocks))
    }

    /// Projection of the vertex enumeration onto pair (s, a), deduplicated.
    pub fn marginal_sa(&self, s: usize, a: usize, cap: usize) -> Result<Vec<Vec<f64>>> {
        let (s_n, a_n) = self.dims();
        if s >= s_n || a >= a_n {
            return Err(Error::invalid("marginal_sa: index out of range"));
        }
        let rows = match self {
            UncertaintySet::ExplicitFinite { kernels } => {
                kernels.iter().map(|k| k.probs[s][a].clone()).collect()
            }
            UncertaintySet::SRectangular { per_state } => {
                per_state[s].iter().map(|b| b[a].clone()).collect()
            }
            UncertaintySet::SaRectangular { per_state_action } => {
                per_state_action[s][a].clone()
            }
            UncertaintySet::FactorModel(fm) => {
                let radices: Vec<usize> = fm.factor_sets.iter().map(Vec::len).collect();
                checked_product(&radices, cap, "marginal_sa")?;
                MixedRadix::new(radices)
                    .map(|combo| factor_row(&fm.coefficients[s][a], &fm.factor_sets, &combo))
                    .collect()
            }
            UncertaintySet::Partitioned(p) => {
                if let Some(idx) = p.s1_states.iter().position(|&x| x == s) {
                    p.s_part[idx].iter().map(|b| b[a].clone()).collect()
                } else {
                    let idx2 = p
                        .s2_states(s_n)
                        .iter()
                        .position(|&x| x == s)
                        .expect("state must be in one part");
                    let radices: Vec<usize> = p.factor_sets.iter().map(Vec::len).collect();
                    checked_product(&radices, cap, "marginal_sa")?;
                    MixedRadix::new(radices)
                        .map(|combo| {
                            factor_row(
                                &p.factor_coefficients[idx2][a],
                                &p.factor_sets,
                                &combo,
                            )
                        })
                        .collect()
                }
            }
            UncertaintySet::CoeffFactor(cf) => {
                let mut radices = vec![cf.coeff_sets[s].len()];
                radices.extend(cf.factor_sets.iter().map(Vec::len));
                checked_product(&radices, cap, "marginal_sa")?;
                MixedRadix::new(radices)
                    .map(|combo| {
                        factor_row(
                            &cf.coeff_sets[s][combo[0]][a],
                            &cf.factor_sets,
                            &combo[1..],
                        )
                    })
                    .collect()
            }
            UncertaintySet::SaCoeffFactor(scf) => {
                let mut radices = vec![scf.coeff_sets[s][a].len()];
                radices.extend(scf.factor_sets.iter().map(Vec::len));
                checked_product(&radices, cap, "marginal_sa")?;
                MixedRadix::new(radices)
                    .map(|combo| {
                        factor_row(
                            &scf.coeff_sets[s][a][combo[0]],
                            &scf.factor_sets,
                            &combo[1..],
                        )
                    })
                    .collect()
            }
        };
        Ok(dedup_rows(rows))
    }

    /// Smallest s-rectangular set containing this one, via marginals.
    pub fn s_extension(&self, cap: usize) -> Result<UncertaintySet> {
        let (s_n, _) = self.dims();
        let per_state = (0..s_n)
            .map(|s| self.marginal_s(s, cap))
            .collect::<Result<Vec<_>>>()?;
        Ok(UncertaintySet::SRectangular { per_state })
    }

    /// Smallest sa-rectangular set containing this one, via marginals.
    pub fn sa_extension(&self, cap: usize) -> Result<UncertaintySet> {
        let (s_n, a_n) = self.dims();
        let per_state_action = (0..s_n)
            .map(|s| {
                (0..a_n)
                    .map(|a| self.marginal_sa(s, a, cap))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(UncertaintySet::SaRectangular { per_state_action })
    }

    /// min over the set of <P_s, M> for an A x S objective M. Exact and
    /// enumeration-free for every structured variant.
    pub fn min_linear_s_value(&self, s: usize, m: &[Vec<f64>]) -> Result<f64> {
        let (s_n, a_n) = self.dims();
        if s >= s_n || m.len() != a_n || m.iter().any(|row| row.len() != s_n) {
            return Err(Error::invalid("min_linear_s: objective shape mismatch"));
        }
        let block_obj = |block: &StateBlock| -> f64 {
            block
                .iter()
                .zip(m)
                .map(|(row, mrow)| row.iter().zip(mrow).map(|(p, c)| p * c).sum::<f64>())
                .sum()
        };
        match self {
            UncertaintySet::ExplicitFinite { kernels } => Ok(kernels
                .iter()
                .map(|k| block_obj(&k.probs[s]))
                .fold(f64::INFINITY, f64::min)),
            UncertaintySet::SRectangular { per_state } => Ok(per_state[s]
                .iter()
                .map(block_obj)
                .fold(f64::INFINITY, f64::min)),
            UncertaintySet::SaRectangular { per_state_action } => {
                let mut total = 0.0;
                for a in 0..a_n {
                    let best = per_state_action[s][a]
                        .iter()
                        .map(|row| dot(row, &m[a]))
                        .fold(f64::INFINITY, f64::min);
                    total += best;
                }
                Ok(total)
            }
            UncertaintySet::FactorModel(fm) => {
                Ok(factor_min_separable(&fm.coefficients[s], &fm.factor_sets, m).0)
            }
            UncertaintySet::Partitioned(p) => {
                if let Some(idx) = p.s1_states.iter().position(|&x| x == s) {
                    Ok(p.s_part[idx]
                        .iter()
                        .map(block_obj)
                        .fold(f64::INFINITY, f64::min))
                } else {
                    let idx2 = p
                        .s2_states(s_n)
                        .iter()
                        .position(|&x| x == s)
                        .expect("state in one part");
                    Ok(factor_min_separable(
                        &p.factor_coefficients[idx2],
                        &p.factor_sets,
                        m,
                    )
                    .0)
                }
            }
            UncertaintySet::CoeffFactor(cf) => {
                // bilinear in (coefficient vertex, factors); for each
                // coefficient vertex the factor problem separates
                let mut best = f64::INFINITY;
                for vertex in &cf.coeff_sets[s] {
                    let (v, _) = factor_min_separable(vertex, &cf.factor_sets, m);
                    best = best.min(v);
                }
                Ok(best)
            }
            UncertaintySet::SaCoeffFactor(scf) => {
                // factors are shared across actions, so enumerate factor
                // vertex combinations and pick the best coefficient per
                // action inside each
                let radices: Vec<usize> = scf.factor_sets.iter().map(Vec::len).collect();
                checked_product(&radices, DEFAULT_VERTEX_CAP, "min_linear_s (sa-coeff)")?;
                let mut best = f64::INFINITY;
                for combo in MixedRadix::new(radices) {
                    // factor-objective per factor index and action
                    let mut total = 0.0;
                    for a in 0..a_n {
                        let inner: Vec<f64> = scf
                            .factor_sets
                            .iter()
                            .enumerate()
                            .map(|(i, ws)| dot(&ws[combo[i]], &m[a]))
                            .collect();
                        let besta = scf.coeff_sets[s][a]
                            .iter()
                            .map(|u| dot(u, &inner))
                            .fold(f64::INFINITY, f64::min);
                        total += besta;
                    }
                    best = best.min(total);
                }
                Ok(best)
            }
        }
    }

    /// min over the set of <P_sa, w> for a length-S objective w.
    pub fn min_linear_sa_value(&self, s: usize, a: usize, w: &[f64]) -> Result<f64> {
        let (s_n, a_n) = self.dims();
        if s >= s_n || a >= a_n || w.len() != s_n {
            return Err(Error::invalid("min_linear_sa: objective shape mismatch"));
        }
        match self {
            UncertaintySet::ExplicitFinite { kernels } => Ok(kernels
                .iter()
                .map(|k| dot(&k.probs[s][a], w))
                .fold(f64::INFINITY, f64::min)),
            UncertaintySet::SRectangular { per_state } => Ok(per_state[s]
                .iter()
                .map(|b| dot(&b[a], w))
                .fold(f64::INFINITY, f64::min)),
            UncertaintySet::SaRectangular { per_state_action } => Ok(per_state_action[s][a]
                .iter()
                .map(|row| dot(row, w))
                .fold(f64::INFINITY, f64::min)),
            UncertaintySet::FactorModel(fm) => {
                Ok(coeff_row_min(&fm.coefficients[s][a], &fm.factor_sets, w))
            }
            UncertaintySet::Partitioned(p) => {
                if let Some(idx) = p.s1_states.iter().position(|&x| x == s) {
                    Ok(p.s_part[idx]
                        .iter()
                        .map(|b| dot(&b[a], w))
                        .fold(f64::INFINITY, f64::min))
                } else {
                    let idx2 = p
                        .s2_states(s_n)
                        .iter()
                        .position(|&x| x == s)
                        .expect("state in one part");
                    Ok(coeff_row_min(
                        &p.factor_coefficients[idx2][a],
                        &p.factor_sets,
                        w,
                    ))
                }
            }
            UncertaintySet::CoeffFactor(cf) => {
                let mins: Vec<f64> = factor_mins(&cf.factor_sets, w);
                Ok(cf.coeff_sets[s]
                    .iter()
                    .map(|vertex| dot(&vertex[a], &mins))
                    .fold(f64::INFINITY, f64::min))
            }
            UncertaintySet::SaCoeffFactor(scf) => {
                let mins: Vec<f64> = factor_mins(&scf.factor_sets, w);
                Ok(scf.coeff_sets[s][a]
                    .iter()
                    .map(|u| dot(u, &mins))
                    .fold(f64::INFINITY, f64::min))
            }
        }
    }

    /// Full per-state minimization: value plus argmin vertices. When the
    /// vertex product fits under `cap` the argmin list is exhaustive over the
    /// enumeration (within ARGMIN_TOL of the min); otherwise a single
    /// constructive certificate is returned.
    pub fn min_linear_s(&self, s: usize, m: &[Vec<f64>], cap: usize) -> Result<MinLinear> {
        let value = self.min_linear_s_value(s, m)?;
        if self.count_vertices() <= cap as u128 {
            let verts = self.enumerate_vertices(cap)?;
            let argmins = verts
                .into_iter()
                .filter(|k| {
                    let obj: f64 = k.probs[s]
                        .iter()
                        .zip(m)
                        .map(|(row, mrow)| dot(row, mrow))
                        .sum();
                    obj <= value + ARGMIN_TOL
                })
                .collect();
            return Ok(MinLinear { value, argmins, exhaustive: true });
        }
        let certificate = self.constructive_argmin_s(s, m, value)?;
        Ok(MinLinear { value, argmins: vec![certificate], exhaustive: false })
    }

    /// Full per-pair minimization, same contract as `min_linear_s`.
    pub fn min_linear_sa(&self, s: usize, a: usize, w: &[f64], cap: usize) -> Result<MinLinear> {
        let value = self.min_linear_sa_value(s, a, w)?;
        if self.count_vertices() <= cap as u128 {
            let verts = self.enumerate_vertices(cap)?;
            let argmins = verts
                .into_iter()
                .filter(|k| dot(&k.probs[s][a], w) <= value + ARGMIN_TOL)
                .collect();
            return Ok(MinLinear { value, argmins, exhaustive: true });
        }
        // lift the row objective to a state objective that ignores other rows
        let (_, a_n) = self.dims();
        let mut m = vec![vec![0.0; w.len()]; a_n];
        m[a] = w.to_vec();
        let certificate = self.constructive_argmin_s(s, &m, value)?;
        Ok(MinLinear { value, argmins: vec![certificate], exhaustive: false })
    }

    /// Build one full kernel attaining the state-s minimum, choosing argmin
    /// components at s and first-listed components elsewhere.
    fn constructive_argmin_s(
        &self,
        s: usize,
        m: &[Vec<f64>],
        target: f64,
    ) -> Result<TransitionKernel> {
        let (s_n, a_n) = self.dims();
        let kernel = match self {
            UncertaintySet::ExplicitFinite { kernels } => {
                let mut best = None;
                for k in kernels {
                    let obj: f64 = k.probs[s]
                        .iter()
                        .zip(m)
                        .map(|(row, mrow)| dot(row, mrow))
                        .sum();
                    if obj <= target + ARGMIN_TOL {
                        best = Some(k.clone());
                        break;
                    }
                }
                best.ok_or_else(|| Error::numerical("argmin kernel not found"))?
            }
            UncertaintySet::SRectangular { per_state } => {
                let mut probs = Vec::with_capacity(s_n);
                for (si, list) in per_state.iter().enumerate() {
                    if si == s {
                        let mut best = (f64::INFINITY, 0usize);
                        for (k, block) in list.iter().enumerate() {
                            let obj: f64 = block
                                .iter()
                                .zip(m)
                                .map(|(row, mrow)| dot(row, mrow))
                                .sum();
                            if obj < best.0 {
                                best = (obj, k);
                            }
                        }
                        probs.push(list[best.1].clone());
                    } else {
                        probs.push(list[0].clone());
                    }
                }
                TransitionKernel { probs }
            }
            UncertaintySet::SaRectangular { per_state_action } => {
                let mut probs = vec![vec![Vec::new(); a_n]; s_n];
                for si in 0..s_n {
                    for a in 0..a_n {
                        let list = &per_state_action[si][a];
                        let pick = if si == s {
                            let mut best = (f64::INFINITY, 0usize);
                            for (k, row) in list.iter().enumerate() {
                                let obj = dot(row, &m[a]);
                                if obj < best.0 {
                                    best = (obj, k);
                                }
                            }
                            best.1
                        } else {
                            0
                        };
                        probs[si][a] = list[pick].clone();
                    }
                }
                TransitionKernel { probs }
            }
            UncertaintySet::FactorModel(fm) => {
                let (_, combo) = factor_min_separable(&fm.coefficients[s], &fm.factor_sets, m);
                fm.kernel_for(&combo)
            }
            UncertaintySet::Partitioned(p) => {
                let s2 = p.s2_states(s_n);
                let mut s1_combo = vec![0usize; p.s_part.len()];
                let mut f_combo = vec![0usize; p.factor_sets.len()];
                if let Some(idx) = p.s1_states.iter().position(|&x| x == s) {
                    let mut best = (f64::INFINITY, 0usize);
                    for (k, block) in p.s_part[idx].iter().enumerate() {
                        let obj: f64 = block
                            .iter()
                            .zip(m)
                            .map(|(row, mrow)| dot(row, mrow))
                            .sum();
                        if obj < best.0 {
                            best = (obj, k);
                        }
                    }
                    s1_combo[idx] = best.1;
                } else {
                    let idx2 = s2.iter().position(|&x| x == s).expect("state in one part");
                    let (_, combo) = factor_min_separable(
                        &p.factor_coefficients[idx2],
                        &p.factor_sets,
                        m,
                    );
                    f_combo = combo;
                }
                p.kernel_for(&s1_combo, &f_combo, s_n, a_n)
            }
            UncertaintySet::CoeffFactor(cf) => {
                let mut best: Option<(f64, usize, Vec<usize>)> = None;
                for (k, vertex) in cf.coeff_sets[s].iter().enumerate() {
                    let (v, combo) = factor_min_separable(vertex, &cf.factor_sets, m);
                    if best.as_ref().map_or(true, |(bv, _, _)| v < *bv) {
                        best = Some((v, k, combo));
                    }
                }
                let (_, k, f_combo) = best.expect("nonempty coefficient list");
                let coeff_combo: Vec<usize> = (0..s_n).map(|si| if si == s { k } else { 0 }).collect();
                cf.kernel_for(&coeff_combo, &f_combo)
            }
            UncertaintySet::SaCoeffFactor(scf) => {
                let radices: Vec<usize> = scf.factor_sets.iter().map(Vec::len).collect();
                checked_product(&radices, DEFAULT_VERTEX_CAP, "constructive argmin")?;
                let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
                for combo in MixedRadix::new(radices) {
                    let mut total = 0.0;
                    let mut picks = vec![0usize; a_n];
                    for a in 0..a_n {
                        let inner: Vec<f64> = scf
                            .factor_sets
                            .iter()
                            .enumerate()
                            .map(|(i, ws)| dot(&ws[combo[i]], &m[a]))
                            .collect();
                        let mut besta = (f64::INFINITY, 0usize);
                        for (k, u) in scf.coeff_sets[s][a].iter().enumerate() {
                            let v = dot(u, &inner);
                            if v < besta.0 {
                                besta = (v, k);
                            }
                        }
                        total += besta.0;
                        picks[a] = besta.1;
                    }
                    if best.as_ref().map_or(true, |(bv, _, _)| total < *bv) {
                        best = Some((total, picks, combo));
                    }
                }
                let (_, picks, f_combo) = best.expect("nonempty factor combos");
                let mut coeff_combo = vec![0usize; s_n * a_n];
                for a in 0..a_n {
                    coeff_combo[s * a_n + a] = picks[a];
                }
                scf.kernel_for(&coeff_combo, &f_combo)
            }
        };
        // the certificate must actually attain the reported value
        let got: f64 = kernel.probs[s]
            .iter()
            .zip(m)
            .map(|(row, mrow)| dot(row, mrow))
            .sum();
        if (got - target).abs() > ARGMIN_TOL {
            return Err(Error::numerical(format!(
                "constructive argmin misses min by {:.3e}",
                got - target
            )));
        }
        Ok(kernel)
    }

    /// Does the convex hull of this set equal the hull of its s-extension?
    /// Decided by mutual vertex membership with 1e-9 feasibility tolerance.
    pub fn is_s_rectangular(&self, cap: usize) -> Result<bool> {
        let ext = self.s_extension(cap)?;
        hulls_equal(self, &ext, cap)
    }

    pub fn is_sa_rectangular(&self, cap: usize) -> Result<bool> {
        let ext = self.sa_extension(cap)?;
        hulls_equal(self, &ext, cap)
    }
}

#[derive(Debug, Clone)]
pub struct MinLinear {
    pub value: f64,
    pub argmins: Vec<TransitionKernel>,
    /// True when `argmins` lists every enumerated vertex within ARGMIN_TOL.
    pub exhaustive: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn validate_factor_sets(factor_sets: &[Vec<Vec<f64>>], num_states: usize) -> Result<()> {
    for (i, ws) in factor_sets.iter().enumerate() {
        if ws.is_empty() {
            return Err(Error::invalid(format!("factor set {i} empty")));
        }
        for w in ws {
            if w.len() != num_states {
                return Err(Error::invalid(format!("factor set {i}: wrong dimension")));
            }
            check_distribution(w, &format!("factor set {i} vertex"))?;
        }
    }
    Ok(())
}

/// Row P_sa = sum_i u[i] * w^i at the chosen factor vertices.
pub(crate) fn factor_row(u: &[f64], factor_sets: &[Vec<Vec<f64>>], combo: &[usize]) -> Vec<f64> {
    let n = factor_sets[0][0].len();
    let mut row = vec![0.0; n];
    for (i, &k) in combo.iter().enumerate() {
        let ui = u[i];
        if ui == 0.0 {
            continue;
        }
        for (sp, w) in factor_sets[i][k].iter().enumerate() {
            row[sp] += ui * w;
        }
    }
    row
}

/// Block at one state with per-action coefficient rows.
pub(crate) fn factor_block(per_a: &[Vec<f64>], factor_sets: &[Vec<Vec<f64>>], combo: &[usize]) -> StateBlock {
    per_a.iter().map(|u| factor_row(u, factor_sets, combo)).collect()
}

/// For fixed coefficients, min over factor vertices of <P_s, M> separates
/// per factor: the coefficient of factor i is c_i[s'] = sum_a u[a][i] M[a][s'].
/// Returns the min value and the chosen factor vertex combination.
fn factor_min_separable(
    per_a: &[Vec<f64>],
    factor_sets: &[Vec<Vec<f64>>],
    m: &[Vec<f64>],
) -> (f64, Vec<usize>) {
    let n = m[0].len();
    let r = factor_sets.len();
    let mut total = 0.0;
    let mut combo = vec![0usize; r];
    for i in 0..r {
        let mut c = vec![0.0; n];
        for (a, u) in per_a.iter().enumerate() {
            let ui = u[i];
            if ui == 0.0 {
                continue;
            }
            for sp in 0..n {
                c[sp] += ui * m[a][sp];
            }
        }
        let mut best = (f64::INFINITY, 0usize);
        for (k, w) in factor_sets[i].iter().enumerate() {
            let v = dot(w, &c);
            if v < best.0 {
                best = (v, k);
            }
        }
        total += best.0;
        combo[i] = best.1;
    }
    (total, combo)
}

/// Per-factor minima of <w, v>; coefficients being nonnegative makes
/// sum_i u[i] * mins[i] the exact row minimum.
fn factor_mins(factor_sets: &[Vec<Vec<f64>>], w: &[f64]) -> Vec<f64> {
    factor_sets
        .iter()
        .map(|ws| ws.iter().map(|x| dot(x, w)).fold(f64::INFINITY, f64::min))
        .collect()
}

fn coeff_row_min(u: &[f64], factor_sets: &[Vec<Vec<f64>>], w: &[f64]) -> f64 {
    let mins = factor_mins(factor_sets, w);
    dot(u, &mins)
}

impl FactorModel {
    pub(crate) fn kernel_for(&self, combo: &[usize]) -> TransitionKernel {
        let probs = (0..self.coefficients.len())
            .map(|s| factor_block(&self.coefficients[s], &self.factor_sets, combo))
            .collect();
        TransitionKernel { probs }
    }

    fn block_for(&self, s: usize, combo: &[usize]) -> StateBlock {
        factor_block(&self.coefficients[s], &self.factor_sets, combo)
    }
}

impl Partitioned {
    pub(crate) fn kernel_for(
        &self,
        s1_combo: &[usize],
        f_combo: &[usize],
        num_states: usize,
        num_actions: usize,
    ) -> TransitionKernel {
        let s2 = self.s2_states(num_states);
        let mut probs = vec![vec![Vec::new(); num_actions]; num_states];
        for (idx, &s) in self.s1_states.iter().enumerate() {
            probs[s] = self.s_part[idx][s1_combo[idx]].clone();
        }
        for (idx2, &s) in s2.iter().enumerate() {
            probs[s] = factor_block(&self.factor_coefficients[idx2], &self.factor_sets, f_combo);
        }
        TransitionKernel { probs }
    }
}

impl CoeffFactor {
    pub(crate) fn kernel_for(&self, coeff_combo: &[usize], f_combo: &[usize]) -> TransitionKernel {
        let probs = (0..self.coeff_sets.len())
            .map(|s| {
                factor_block(
                    &self.coeff_sets[s][coeff_combo[s]],
                    &self.factor_sets,
                    f_combo,
                )
            })
            .collect();
        TransitionKernel { probs }
    }
}

impl SaCoeffFactor {
    pub(crate) fn kernel_for(&self, coeff_combo: &[usize], f_combo: &[usize]) -> TransitionKernel {
        let s_n = self.coeff_sets.len();
        let a_n = self.coeff_sets[0].len();
        let probs = (0..s_n)
            .map(|s| {
                (0..a_n)
                    .map(|a| {
                        factor_row(
                            &self.coeff_sets[s][a][coeff_combo[s * a_n + a]],
                            &self.factor_sets,
                            f_combo,
                        )
                    })
                    .collect()
            })
            .collect();
        TransitionKernel { probs }
    }
}

/// Convex-hull equality by mutual vertex membership (feasibility LPs on the
/// flattened kernels, tolerance 1e-9).
fn hulls_equal(a: &UncertaintySet, b: &UncertaintySet, cap: usize) -> Result<bool> {
    let va: Vec<Vec<f64>> = a
        .enumerate_vertices(cap)?
        .iter()
        .map(TransitionKernel::flatten)
        .collect();
    let vb: Vec<Vec<f64>> = b
        .enumerate_vertices(cap)?
        .iter()
        .map(TransitionKernel::flatten)
        .collect();
    for x in &vb {
        if !in_convex_hull(x, &va, 1e-9)? {
            return Ok(false);
        }
    }
    for x in &va {
        if !in_convex_hull(x, &vb, 1e-9)? {
            return Ok(false);
        }
    }
    Ok(true)
}
