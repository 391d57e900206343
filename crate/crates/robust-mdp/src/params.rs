//! Parametric transition templates: kernels whose entries are affine
//! expressions in a small vector of box-bounded parameters.
//!
//! The image of a box under an affine map is a polytope whose vertices all
//! sit at box corners, so the corner kernels generate the same convex hull
//! as the full parameter sweep. Grid-based oracles still sweep the interior
//! to locate worst-case parameters directly.

use crate::error::{Error, Result};
use crate::mdp::{check_distribution, TransitionKernel};
use crate::uncertainty::UncertaintySet;

/// Default number of grid points per parameter for sweep oracles.
pub const DEFAULT_GRID_RESOLUTION: usize = 101;

/// Hard cap on total grid points in a parameter sweep.
pub const GRID_POINT_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

/// c0 + sum_j coef_j * theta[idx_j]
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    pub c0: f64,
    pub terms: Vec<(f64, usize)>,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        AffineExpr { c0: c, terms: Vec::new() }
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        self.c0 + self.terms.iter().map(|&(c, i)| c * theta[i]).sum::<f64>()
    }

    /// Structural equality up to term order and zero coefficients.
    pub fn equivalent(&self, other: &AffineExpr) -> bool {
        if self.c0 != other.c0 {
            return false;
        }
        let canon = |e: &AffineExpr| {
            let mut t: Vec<(usize, f64)> = e
                .terms
                .iter()
                .filter(|(c, _)| *c != 0.0)
                .map(|&(c, i)| (i, c))
                .collect();
            t.sort_by_key(|&(i, _)| i);
            t
        };
        canon(self) == canon(other)
    }

    /// Canonical source form, e.g. "0.5 - 0.5*p".
    pub fn to_source(&self, names: &[String]) -> String {
        let mut out = String::new();
        let mut first = true;
        if self.c0 != 0.0 || self.terms.is_empty() {
            out.push_str(&format!("{}", self.c0));
            first = false;
        }
        for &(c, i) in &self.terms {
            if c == 0.0 {
                continue;
            }
            if first {
                if c < 0.0 {
                    out.push_str("-");
                }
                first = false;
            } else if c < 0.0 {
                out.push_str(" - ");
            } else {
                out.push_str(" + ");
            }
            let mag = c.abs();
            if (mag - 1.0).abs() == 0.0 {
                out.push_str(&names[i]);
            } else {
                out.push_str(&format!("{}*{}", mag, names[i]));
            }
        }
        if out.is_empty() {
            out.push('0');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '+' {
            tokens.push(Token::Plus);
            i += 1;
        } else if c == '-' {
            tokens.push(Token::Minus);
            i += 1;
        } else if c == '*' {
            tokens.push(Token::Star);
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent suffix
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value: f64 = text
                .parse()
                .map_err(|_| Error::invalid(format!("bad number '{text}' in '{src}'")))?;
            tokens.push(Token::Number(value));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_ascii_alphanumeric() || chars[i] == '_')
            {
                i += 1;
            }
            tokens.push(Token::Ident(chars[start..i].iter().collect()));
        } else {
            return Err(Error::invalid(format!("unexpected character '{c}' in '{src}'")));
        }
    }
    Ok(tokens)
}

/// Parse "c0 + c1*p - c2*q" style affine expressions. Each term is a
/// constant, a bare parameter, or constant '*' parameter.
pub fn parse_affine(src: &str, names: &[String]) -> Result<AffineExpr> {
    let tokens = tokenize(src)?;
    if tokens.is_empty() {
        return Err(Error::invalid(format!("empty expression in template: '{src}'")));
    }
    let lookup = |name: &str| -> Result<usize> {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter '{name}' in '{src}'")))
    };
    let mut expr = AffineExpr::constant(0.0);
    let mut i = 0;
    let mut sign = 1.0;
    // optional leading sign
    match tokens.first() {
        Some(Token::Minus) => {
            sign = -1.0;
            i = 1;
        }
        Some(Token::Plus) => {
            i = 1;
        }
        _ => {}
    }
    loop {
        // one term
        match tokens.get(i) {
            Some(Token::Number(v)) => {
                let coef = sign * v;
                if matches!(tokens.get(i + 1), Some(Token::Star)) {
                    match tokens.get(i + 2) {
                        Some(Token::Ident(name)) => {
                            let idx = lookup(name)?;
                            merge_term(&mut expr, coef, idx);
                            i += 3;
                        }
                        _ => {
                            return Err(Error::invalid(format!(
                                "expected parameter after '*' in '{src}'"
                            )))
                        }
                    }
                } else {
                    expr.c0 += coef;
                    i += 1;
                }
            }
            Some(Token::Ident(name)) => {
                let idx = lookup(name)?;
                merge_term(&mut expr, sign, idx);
                i += 1;
            }
            other => {
                return Err(Error::invalid(format!(
                    "expected term, found {other:?} in '{src}'"
                )))
            }
        }
        // operator or end
        match tokens.get(i) {
            None => break,
            Some(Token::Plus) => {
                sign = 1.0;
                i += 1;
            }
            Some(Token::Minus) => {
                sign = -1.0;
                i += 1;
            }
            other => {
                return Err(Error::invalid(format!(
                    "expected '+' or '-', found {other:?} in '{src}'"
                )))
            }
        }
    }
    Ok(expr)
}

fn merge_term(expr: &mut AffineExpr, coef: f64, idx: usize) {
    for t in &mut expr.terms {
        if t.1 == idx {
            t.0 += coef;
            return;
        }
    }
    expr.terms.push((coef, idx));
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub parameters: Vec<ParamSpec>,
    /// template[s][a][s'], affine in the parameters.
    pub template: Vec<Vec<Vec<AffineExpr>>>,
    pub grid_resolution: usize,
}

impl ParamSet {
    pub fn new(
        parameters: Vec<ParamSpec>,
        template: Vec<Vec<Vec<AffineExpr>>>,
        grid_resolution: Option<usize>,
    ) -> Result<Self> {
        if parameters.is_empty() {
            return Err(Error::invalid("parametric set: no parameters"));
        }
        for p in &parameters {
            if !p.low.is_finite() || !p.high.is_finite() || p.low > p.high {
                return Err(Error::invalid(format!(
                    "parameter '{}': invalid range [{}, {}]",
                    p.name, p.low, p.high
                )));
            }
        }
        let mut names: Vec<&str> = parameters.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != parameters.len() {
            return Err(Error::invalid("parametric set: duplicate parameter names"));
        }
        let s = template.len();
        if s == 0 {
            return Err(Error::invalid("parametric set: empty template"));
        }
        let a = template[0].len();
        if a == 0 || template.iter().any(|per_a| {
            per_a.len() != a || per_a.iter().any(|row| row.len() != s)
        }) {
            return Err(Error::invalid("parametric set: ragged template"));
        }
        let res = grid_resolution.unwrap_or(DEFAULT_GRID_RESOLUTION);
        if res < 2 {
            return Err(Error::invalid("parametric set: grid resolution must be >= 2"));
        }
        let set = ParamSet { parameters, template, grid_resolution: res };
        // every corner must produce a stochastic kernel; midpoint too
        for corner in set.corner_thetas() {
            set.kernel_at(&corner)?;
        }
        let mid: Vec<f64> = set
            .parameters
            .iter()
            .map(|p| 0.5 * (p.low + p.high))
            .collect();
        set.kernel_at(&mid)?;
        Ok(set)
    }

    pub fn num_states(&self) -> usize {
        self.template.len()
    }

    pub fn num_actions(&self) -> usize {
        self.template[0].len()
    }

    pub fn num_params(&self) -> usize {
        self.parameters.len()
    }

    /// Instantiate the kernel at a parameter point; rejects out-of-box
    /// points and non-stochastic rows.
    pub fn kernel_at(&self, theta: &[f64]) -> Result<TransitionKernel> {
        if theta.len() != self.parameters.len() {
            return Err(Error::invalid("kernel_at: wrong parameter count"));
        }
        for (t, p) in theta.iter().zip(&self.parameters) {
            if *t < p.low - 1e-12 || *t > p.high + 1e-12 {
                return Err(Error::invalid(format!(
                    "kernel_at: parameter '{}' = {} outside [{}, {}]",
                    p.name, t, p.low, p.high
                )));
            }
        }
        let probs: Vec<Vec<Vec<f64>>> = self
            .template
            .iter()
            .map(|per_a| {
                per_a
                    .iter()
                    .map(|row| row.iter().map(|e| e.eval(theta)).collect())
                    .collect()
            })
            .collect();
        for (s, per_a) in probs.iter().enumerate() {
            for (a, row) in per_a.iter().enumerate() {
                check_distribution(row, &format!("template row ({s},{a}) at theta"))?;
            }
        }
        Ok(TransitionKernel { probs })
    }

    /// All 2^k box corners, fixed order: last parameter toggles fastest.
    pub fn corner_thetas(&self) -> Vec<Vec<f64>> {
        let k = self.parameters.len();
        let mut out = Vec::with_capacity(1 << k);
        for mask in 0..(1usize << k) {
            let theta: Vec<f64> = (0..k)
                .map(|i| {
                    if (mask >> (k - 1 - i)) & 1 == 0 {
                        self.parameters[i].low
                    } else {
                        self.parameters[i].high
                    }
                })
                .collect();
            out.push(theta);
        }
        out
    }

    /// Corner kernels; their hull equals the hull of the parametric image
    /// because entries are affine over a box.
    pub fn corner_kernels(&self) -> Result<Vec<TransitionKernel>> {
        if self.parameters.len() > 20 {
            return Err(Error::budget("corner_kernels: more than 20 parameters"));
        }
        self.corner_thetas()
            .iter()
            .map(|theta| self.kernel_at(theta))
            .collect()
    }

    /// Finite model generating the same hull.
    pub fn to_explicit(&self) -> Result<UncertaintySet> {
        Ok(UncertaintySet::ExplicitFinite { kernels: self.corner_kernels()? })
    }

    /// Grid coordinates along parameter i: `resolution` evenly spaced
    /// points including both endpoints (a single point if the range is
    /// degenerate).
    pub fn axis_points(&self, i: usize, resolution: usize) -> Vec<f64> {
        let p = &self.parameters[i];
        if p.high == p.low {
            return vec![p.low];
        }
        (0..resolution)
            .map(|k| p.low + (p.high - p.low) * k as f64 / (resolution - 1) as f64)
            .collect()
    }

    pub fn clamp(&self, i: usize, x: f64) -> f64 {
        x.clamp(self.parameters[i].low, self.parameters[i].high)
    }
}

/// Either a finite/structured model or a parametric template.
#[derive(Debug, Clone, PartialEq)]
pub enum SetSpec {
    Model(UncertaintySet),
    Parametric(ParamSet),
}

impl SetSpec {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            SetSpec::Model(u) => u.dims(),
            SetSpec::Parametric(p) => (p.num_states(), p.num_actions()),
        }
    }

    pub fn validate(&self) -> Result<(usize, usize)> {
        match self {
            SetSpec::Model(u) => u.validate(),
            SetSpec::Parametric(p) => Ok((p.num_states(), p.num_actions())),
        }
    }

    /// Uncertainty set the Bellman operators should minimize over. For a
    /// parametric template this is the corner hull, which is exact for
    /// affine entries.
    pub fn as_operator_set(&self) -> Result<UncertaintySet> {
        match self {
            SetSpec::Model(u) => Ok(u.clone()),
            SetSpec::Parametric(p) => p.to_explicit(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parse_basic_forms() {
        let ns = names(&["p", "q"]);
        let e = parse_affine("0.5 + 0.25*p - q", &ns).unwrap();
        assert_eq!(e.c0, 0.5);
        assert_eq!(e.terms, vec![(0.25, 0), (-1.0, 1)]);
        assert!((e.eval(&[1.0, 0.5]) - 0.25).abs() < 1e-15);

        let e = parse_affine("p", &ns).unwrap();
        assert_eq!(e.c0, 0.0);
        assert_eq!(e.terms, vec![(1.0, 0)]);

        let e = parse_affine("1", &ns).unwrap();
        assert_eq!(e.c0, 1.0);
        assert!(e.terms.is_empty());

        let e = parse_affine("-0.5 + p", &ns).unwrap();
        assert_eq!(e.c0, -0.5);

        let e = parse_affine("1 - p", &ns).unwrap();
        assert!((e.eval(&[0.25]) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn parse_rejects_garbage() {
        let ns = names(&["p"]);
        assert!(parse_affine("p*p", &ns).is_err());
        assert!(parse_affine("2*", &ns).is_err());
        assert!(parse_affine("q", &ns).is_err());
        assert!(parse_affine("", &ns).is_err());
        assert!(parse_affine("1 ^ 2", &ns).is_err());
    }

    #[test]
    fn source_round_trip() {
        let ns = names(&["p", "q"]);
        for src in ["0.5 - 0.5*p", "1", "p", "0.25 + 0.75*q", "1 - p"] {
            let e = parse_affine(src, &ns).unwrap();
            let printed = e.to_source(&ns);
            let reparsed = parse_affine(&printed, &ns).unwrap();
            assert_eq!(e, reparsed, "round trip failed for '{src}' -> '{printed}'");
        }
    }

    fn two_state_line(low: f64, high: f64) -> ParamSet {
        // P[0][0] = (p, 1-p), P[1][0] = (0, 1)
        let ns = names(&["p"]);
        let t = |s: &str| parse_affine(s, &ns).unwrap();
        ParamSet::new(
            vec![ParamSpec { name: "p".into(), low, high }],
            vec![
                vec![vec![t("p"), t("1 - p")]],
                vec![vec![t("0"), t("1")]],
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn corners_and_eval() {
        let ps = two_state_line(0.25, 0.75);
        let corners = ps.corner_kernels().unwrap();
        assert_eq!(corners.len(), 2);
        assert!((corners[0].probs[0][0][0] - 0.25).abs() < 1e-15);
        assert!((corners[1].probs[0][0][0] - 0.75).abs() < 1e-15);
        let k = ps.kernel_at(&[0.5]).unwrap();
        assert!((k.probs[0][0][1] - 0.5).abs() < 1e-15);
        assert!(ps.kernel_at(&[0.9]).is_err());
    }

    #[test]
    fn non_stochastic_template_rejected() {
        let ns = names(&["p"]);
        let t = |s: &str| parse_affine(s, &ns).unwrap();
        // row sums to 1 only at p = 0
        let bad = ParamSet::new(
            vec![ParamSpec { name: "p".into(), low: 0.0, high: 1.0 }],
            vec![vec![vec![t("p"), t("1")]]],
            None,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn axis_points_cover_range() {
        let ps = two_state_line(0.0, 1.0);
        let xs = ps.axis_points(0, 5);
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
