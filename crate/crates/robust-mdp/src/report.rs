//! Run reports: the structured output of every CLI command.

use serde::{Deserialize, Serialize};

/// One checked or informational quantity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    pub quantity: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
}

impl ResultRow {
    pub fn info(quantity: impl Into<String>, value: f64) -> Self {
        ResultRow { quantity: quantity.into(), value, expected: None, tolerance: None, pass: None }
    }

    pub fn checked(quantity: impl Into<String>, value: f64, expected: f64, tolerance: f64) -> Self {
        ResultRow {
            quantity: quantity.into(),
            value,
            expected: Some(expected),
            tolerance: Some(tolerance),
            pass: Some((value - expected).abs() <= tolerance),
        }
    }
}

/// Everything a command run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub inputs: serde_json::Value,
    pub results: Vec<ResultRow>,
    pub wall_time_seconds: f64,
}

impl RunReport {
    pub fn new(command: impl Into<String>, inputs: serde_json::Value) -> Self {
        RunReport {
            command: command.into(),
            inputs,
            results: Vec::new(),
            wall_time_seconds: 0.0,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.pass != Some(false))
    }

    /// Human-readable lines: 12 significant digits per value.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("command: {}\n", self.command));
        for row in &self.results {
            let mut line = format!("  {:<42} {}", row.quantity, fmt_sig(row.value));
            if let (Some(e), Some(t)) = (row.expected, row.tolerance) {
                line.push_str(&format!("  expected {} +/- {:.1e}", fmt_sig(e), t));
            }
            match row.pass {
                Some(true) => line.push_str("  [pass]"),
                Some(false) => line.push_str("  [FAIL]"),
                None => {}
            }
            out.push_str(&line);
            out.push('\n');
        }
        out.push_str(&format!(
            "wall time: {:.3}s  overall: {}\n",
            self.wall_time_seconds,
            if self.all_passed() { "pass" } else { "FAIL" }
        ));
        out
    }
}

/// 12 significant digits, trimming a plain zero.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    format!("{:.11e}", x)
}
