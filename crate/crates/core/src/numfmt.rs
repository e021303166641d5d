//! Decimal rounding for persisted artifacts.

/// Significant digits kept for probabilities and associations on disk.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Rounds `x` to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x)
        .parse()
        .unwrap_or(x)
}

/// Shortest decimal text of `x` after rounding to [`SIGNIFICANT_DIGITS`].
pub fn format_sig(x: f64) -> String {
    let r = round_sig(x, SIGNIFICANT_DIGITS);
    if r == 0.0 {
        // normalise -0
        return "0".to_string();
    }
    format!("{r}")
}

pub(crate) fn round_matrix(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| r.iter().map(|&x| round_sig(x, SIGNIFICANT_DIGITS)).collect())
        .collect()
}
