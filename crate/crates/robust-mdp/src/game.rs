//! Zero-sum matrix games by exact LP.
//!
//! The per-state saddle point inside the optimal robust Bellman operator is a
//! matrix game: rows are actions, columns are the marginal's vertices. The
//! payoff is shifted positive and solved as the classical LP reformulation
//! with a dense primal simplex (Bland's rule, so degenerate games cannot
//! cycle). Row strategies are recovered from the duals.

use crate::error::{Error, Result};
use crate::simplex::Tableau;

/// Value agreement tolerance for game results (and for preferring a pure
/// strategy when one attains the value).
pub const GAME_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGame {
    /// payoff[i][j]: row player maximizes, column player minimizes.
    pub payoff: Vec<Vec<f64>>,
}

impl MatrixGame {
    pub fn new(payoff: Vec<Vec<f64>>) -> Result<Self> {
        if payoff.is_empty() || payoff[0].is_empty() {
            return Err(Error::invalid("matrix game: empty payoff"));
        }
        let ncols = payoff[0].len();
        if payoff.iter().any(|r| r.len() != ncols) {
            return Err(Error::invalid("matrix game: ragged payoff"));
        }
        if payoff.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::invalid("matrix game: non-finite payoff"));
        }
        Ok(MatrixGame { payoff })
    }
}

#[derive(Debug, Clone)]
pub struct GameSolution {
    pub row_strategy: Vec<f64>,
    pub col_strategy: Vec<f64>,
    pub value: f64,
}

/// Solve the game exactly. Deterministic: Bland pivoting plus a lexicographic
/// pure-strategy preference (the smallest row index whose guaranteed value
/// attains the game value within GAME_TOL is returned as a pure strategy).
pub fn solve_matrix_game(game: &MatrixGame) -> Result<GameSolution> {
    let m = game.payoff.len();
    let n = game.payoff[0].len();

    // shift so every entry is >= 1; the value shifts by the same amount and
    // strategies are unchanged
    let min_entry = game
        .payoff
        .iter()
        .flatten()
        .fold(f64::INFINITY, |acc, &x| acc.min(x));
    let shift = 1.0 - min_entry;

    // column player's LP: maximize sum(y~) st G' y~ <= 1, y~ >= 0
    let nvars = n + m;
    let mut a = vec![vec![0.0; nvars]; m];
    for i in 0..m {
        for j in 0..n {
            a[i][j] = game.payoff[i][j] + shift;
        }
        a[i][n + i] = 1.0;
    }
    let b = vec![1.0; m];
    let mut c = vec![0.0; nvars];
    for j in 0..n {
        c[j] = 1.0;
    }

    let mut tab = Tableau::new(&a, &b, &c, (n..n + m).collect())?;
    tab.optimize()?;
    let obj = tab.objective();
    if obj <= 0.0 {
        return Err(Error::numerical("matrix game: degenerate LP objective"));
    }
    let shifted_value = 1.0 / obj;

    let primal = tab.primal();
    let mut col_strategy: Vec<f64> = (0..n).map(|j| primal[j] * shifted_value).collect();
    // duals of the m constraints live in the slack columns' reduced costs
    let mut row_strategy: Vec<f64> = (0..m)
        .map(|i| tab.reduced_cost(n + i) * shifted_value)
        .collect();
    normalize_strategy(&mut row_strategy)?;
    normalize_strategy(&mut col_strategy)?;

    let value = shifted_value - shift;

    // prefer a deterministic row when one is optimal; smallest index wins
    for (i, row) in game.payoff.iter().enumerate() {
        let guaranteed = row.iter().fold(f64::INFINITY, |acc, &x| acc.min(x));
        if guaranteed >= value - GAME_TOL {
            let mut pure = vec![0.0; m];
            pure[i] = 1.0;
            return Ok(GameSolution { row_strategy: pure, col_strategy, value });
        }
    }

    // the recovered mixed strategy must actually guarantee the value
    for j in 0..n {
        let got: f64 = (0..m).map(|i| row_strategy[i] * game.payoff[i][j]).sum();
        if got < value - 1e-7 {
            return Err(Error::numerical(format!(
                "matrix game: recovered strategy misses value by {:.3e}",
                value - got
            )));
        }
    }

    Ok(GameSolution { row_strategy, col_strategy, value })
}

fn normalize_strategy(p: &mut [f64]) -> Result<()> {
    let mut sum = 0.0;
    for x in p.iter_mut() {
        if *x < 0.0 {
            if *x < -1e-9 {
                return Err(Error::numerical("matrix game: negative strategy weight"));
            }
            *x = 0.0;
        }
        sum += *x;
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::numerical(format!("matrix game: strategy sums to {sum}")));
    }
    for x in p.iter_mut() {
        *x /= sum;
    }
    Ok(())
}
