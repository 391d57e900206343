//! Small dense primal simplex with Bland's rule.
//!
//! Used for two jobs: solving per-state matrix games as LPs, and deciding
//! convex-hull membership (phase-1 feasibility). Everything here is desk
//! scale, so a plain tableau is the robust choice; Bland's rule rules out
//! cycling on degenerate games.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;

/// Tableau for: maximize c.x subject to A x = b, x >= 0, with b >= 0 and a
/// starting basis whose columns form an identity (basis[i] has a 1 in row i).
pub struct Tableau {
    m: usize,
    n: usize,
    /// (m+1) x (n+1); last row is the reduced-cost row, last column the rhs.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
}

impl Tableau {
    pub fn new(a: &[Vec<f64>], b: &[f64], c: &[f64], basis: Vec<usize>) -> Result<Self> {
        let m = a.len();
        let n = if m > 0 { a[0].len() } else { c.len() };
        if b.len() != m || c.len() != n || basis.len() != m {
            return Err(Error::invalid("tableau: inconsistent shapes"));
        }
        if b.iter().any(|&x| x < 0.0) {
            return Err(Error::invalid("tableau: rhs must be nonnegative"));
        }
        let mut t = vec![vec![0.0; n + 1]; m + 1];
        for i in 0..m {
            t[i][..n].copy_from_slice(&a[i]);
            t[i][n] = b[i];
        }
        for j in 0..n {
            t[m][j] = -c[j];
        }
        // canonicalize: zero out reduced costs of basic columns
        for i in 0..m {
            let cb = c[basis[i]];
            if cb != 0.0 {
                for j in 0..=n {
                    t[m][j] += cb * t[i][j];
                }
            }
        }
        Ok(Tableau { m, n, t, basis })
    }

    /// Run primal simplex to optimality. Errors if unbounded or the pivot
    /// budget is hit (which would indicate a bug given Bland's rule).
    pub fn optimize(&mut self) -> Result<()> {
        let max_pivots = 200 * (self.m + self.n + 1);
        for _ in 0..max_pivots {
            // Bland: entering column = smallest index with negative reduced cost
            let mut enter = None;
            for j in 0..self.n {
                if self.t[self.m][j] < -PIVOT_EPS {
                    enter = Some(j);
                    break;
                }
            }
            let Some(col) = enter else { return Ok(()) };

            // lexicographic ratio test: on (near-)ties compare whole rows
            // scaled by the pivot entry, which rules out cycling where a
            // plain index tie-break can stall under floating point
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.t[i][col];
                if a > PIVOT_EPS {
                    let ratio = self.t[i][self.n] / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - PIVOT_EPS {
                                leave = Some((i, ratio));
                            } else if ratio < br + PIVOT_EPS
                                && self.lex_smaller(i, bi, col)
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((row, _)) = leave else {
                return Err(Error::numerical("simplex: unbounded LP"));
            };
            self.pivot(row, col);
        }
        Err(Error::numerical("simplex: pivot budget exceeded"))
    }

    /// True when row i divided by its pivot-column entry is lexicographically
    /// smaller than row bi divided by its own.
    fn lex_smaller(&self, i: usize, bi: usize, col: usize) -> bool {
        let ai = self.t[i][col];
        let abi = self.t[bi][col];
        for j in 0..=self.n {
            let x = self.t[i][j] / ai;
            let y = self.t[bi][j] / abi;
            if (x - y).abs() > PIVOT_EPS {
                return x < y;
            }
        }
        // identical scaled rows: fall back to the smaller basis index
        self.basis[i] < self.basis[bi]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.t[row][col];
        for j in 0..=self.n {
            self.t[row][j] /= piv;
        }
        for i in 0..=self.m {
            if i == row {
                continue;
            }
            let f = self.t[i][col];
            if f == 0.0 {
                continue;
            }
            for j in 0..=self.n {
                self.t[i][j] -= f * self.t[row][j];
            }
            self.t[i][col] = 0.0;
        }
        self.basis[row] = col;
    }

    pub fn objective(&self) -> f64 {
        self.t[self.m][self.n]
    }

    pub fn primal(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for i in 0..self.m {
            x[self.basis[i]] = self.t[i][self.n];
        }
        x
    }

    /// Reduced cost of column j at the optimum. For a slack column with zero
    /// objective coefficient this is the dual multiplier of its constraint.
    pub fn reduced_cost(&self, j: usize) -> f64 {
        self.t[self.m][j]
    }
}

/// Is `point` within `tol` (Euclidean) of the convex hull of `generators`?
///
/// Away-step Frank-Wolfe on min ||G lambda - point||^2. The FW gap gives a
/// certified lower bound on the distance (dist^2 >= ||r||^2 - 2 gap), so
/// "outside" answers are proofs, and the exact line search drives boundary
/// cases to "inside" at linear rate. A tableau LP stalls on these highly
/// degenerate stochastic-vertex hulls; this does not.
pub fn in_convex_hull(point: &[f64], generators: &[Vec<f64>], tol: f64) -> Result<bool> {
    let d = point.len();
    let k = generators.len();
    if k == 0 {
        return Ok(false);
    }
    if generators.iter().any(|g| g.len() != d) {
        return Err(Error::invalid("in_convex_hull: dimension mismatch"));
    }
    // most membership queries here test a vertex against a list containing
    // it verbatim; answer those without any iteration
    'scan: for g in generators {
        for (a, b) in g.iter().zip(point) {
            if (a - b).abs() > tol {
                continue 'scan;
            }
        }
        return Ok(true);
    }

    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    // start from the generator closest to the point
    let start = (0..k)
        .min_by(|&i, &j| {
            let di = generators[i].iter().zip(point).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            let dj = generators[j].iter().zip(point).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            di.partial_cmp(&dj).expect("finite distances")
        })
        .expect("nonempty generators");
    let mut weights = vec![0.0; k];
    weights[start] = 1.0;
    let mut active = vec![start];
    let mut y = generators[start].clone();
    let tol2 = tol * tol;

    const MAX_ITERS: usize = 20_000;
    for iter in 0..MAX_ITERS {
        let r: Vec<f64> = y.iter().zip(point).map(|(a, b)| a - b).collect();
        let rnorm2 = dot(&r, &r);
        if rnorm2 <= tol2 {
            return Ok(true);
        }
        // global FW vertex
        let mut fw = active[0];
        let mut fw_dot = f64::INFINITY;
        for (i, g) in generators.iter().enumerate() {
            let v = dot(g, &r);
            if v < fw_dot {
                fw_dot = v;
                fw = i;
            }
        }
        let gap = dot(&y, &r) - fw_dot; // >= f(y) - f(y*)
        if rnorm2 - 2.0 * gap > tol2 {
            return Ok(false);
        }
        // away vertex over the active support
        let mut away = active[0];
        let mut away_dot = f64::NEG_INFINITY;
        for &i in &active {
            let v = dot(&generators[i], &r);
            if v > away_dot {
                away_dot = v;
                away = i;
            }
        }
        let fw_descent = fw_dot - dot(&y, &r); // = -gap <= 0
        let away_descent = dot(&y, &r) - away_dot; // <= 0
        let (dir, gamma_max, step_kind): (Vec<f64>, f64, bool) =
            if fw_descent <= away_descent {
                (generators[fw].iter().zip(&y).map(|(g, a)| g - a).collect(), 1.0, true)
            } else {
                let lv = weights[away];
                let cap = if lv >= 1.0 { f64::INFINITY } else { lv / (1.0 - lv) };
                (y.iter().zip(&generators[away]).map(|(a, g)| a - g).collect(), cap, false)
            };
        let dd = dot(&dir, &dir);
        if dd <= 0.0 {
            return Ok(rnorm2 <= tol2);
        }
        let gamma = (-dot(&dir, &r) / dd).clamp(0.0, gamma_max);
        if gamma <= 0.0 {
            // no descent left in either direction: y is optimal
            return Ok(rnorm2 <= tol2);
        }
        if step_kind {
            for w in weights.iter_mut() {
                *w *= 1.0 - gamma;
            }
            weights[fw] += gamma;
            if !active.contains(&fw) {
                active.push(fw);
            }
        } else {
            for w in weights.iter_mut() {
                *w *= 1.0 + gamma;
            }
            weights[away] -= gamma;
            if weights[away] < 0.0 {
                weights[away] = 0.0;
            }
        }
        active.retain(|&i| {
            if weights[i] > 1e-15 {
                true
            } else {
                weights[i] = 0.0;
                false
            }
        });
        if active.is_empty() {
            return Err(Error::numerical("in_convex_hull: active set collapsed"));
        }
        // refresh y from the weights; resynthesis every step keeps drift out
        // and costs the same order as the global scan above
        let norm: f64 = active.iter().map(|&i| weights[i]).sum();
        for w in y.iter_mut() {
            *w = 0.0;
        }
        for &i in &active {
            let lam = weights[i] / norm;
            weights[i] = lam;
            for (yy, g) in y.iter_mut().zip(&generators[i]) {
                *yy += lam * g;
            }
        }
        let _ = iter;
    }
    Err(Error::numerical("in_convex_hull: iteration budget exhausted"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_membership_square() {
        let gens = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ];
        assert!(in_convex_hull(&[0.5, 0.5], &gens, 1e-9).unwrap());
        assert!(in_convex_hull(&[1.0, 0.0], &gens, 1e-9).unwrap());
        assert!(!in_convex_hull(&[1.2, 0.5], &gens, 1e-9).unwrap());
        assert!(!in_convex_hull(&[-0.01, 0.5], &gens, 1e-9).unwrap());
    }

    #[test]
    fn hull_membership_segment() {
        let gens = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(in_convex_hull(&[0.25, 0.75], &gens, 1e-9).unwrap());
        assert!(!in_convex_hull(&[0.25, 0.5], &gens, 1e-9).unwrap());
    }

    #[test]
    fn lp_basic_max() {
        // maximize x + y st x <= 1, y <= 2  -> 3
        let a = vec![vec![1.0, 0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0, 1.0]];
        let b = vec![1.0, 2.0];
        let c = vec![1.0, 1.0, 0.0, 0.0];
        let mut t = Tableau::new(&a, &b, &c, vec![2, 3]).unwrap();
        t.optimize().unwrap();
        assert!((t.objective() - 3.0).abs() < 1e-12);
        let x = t.primal();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }
}
