//! Dense LU with partial pivoting, sized for desk-scale systems.
//!
//! Policy evaluation solves (I - gamma M) v = c exactly instead of iterating
//! the operator; exact answers anchor every oracle comparison downstream.

use crate::error::{Error, Result};

/// Solve `a x = b` in place by LU with partial pivoting.
/// `a` is row-major n x n. Fails on (numerically) singular matrices.
pub fn lu_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = a.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if a.iter().any(|row| row.len() != n) || b.len() != n {
        return Err(Error::invalid("lu_solve: non-square system"));
    }

    for col in 0..n {
        // partial pivot
        let mut pivot = col;
        let mut best = a[col][col].abs();
        for row in col + 1..n {
            let v = a[row][col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best < 1e-300 {
            return Err(Error::numerical("lu_solve: singular matrix"));
        }
        if pivot != col {
            a.swap(pivot, col);
            b.swap(pivot, col);
        }
        let diag = a[col][col];
        for row in col + 1..n {
            let factor = a[row][col] / diag;
            if factor == 0.0 {
                continue;
            }
            a[row][col] = 0.0;
            for k in col + 1..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }

    // back substitution
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let b = vec![3.0, 5.0];
        let x = lu_solve(a, b).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12);
        assert!((x[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn pivots_on_zero_diagonal() {
        let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let b = vec![2.0, 7.0];
        let x = lu_solve(a, b).unwrap();
        assert_eq!(x, vec![7.0, 2.0]);
    }

    #[test]
    fn rejects_singular() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(lu_solve(a, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn random_roundtrip() {
        // fixed congruential stream keeps the test deterministic
        let mut state = 0x9e3779b97f4a7c15_u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for n in 1..8 {
            let a: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| next() + if i == j { 4.0 } else { 0.0 }).collect())
                .collect();
            let xs: Vec<f64> = (0..n).map(|_| next()).collect();
            let b: Vec<f64> = (0..n).map(|i| dot(&a[i], &xs)).collect();
            let got = lu_solve(a.clone(), b).unwrap();
            assert!(sup_dist(&got, &xs) < 1e-10);
        }
    }
}
