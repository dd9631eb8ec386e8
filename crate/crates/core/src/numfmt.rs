//! Number formatting shared by every CSV and text artifact.

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        return String::new();
    }
    format!("{x:.16e}")
}

/// Parses a field written by [`num`]; an empty field reads back as `None`.
pub fn parse_opt(field: &str) -> Result<Option<f64>, std::num::ParseFloatError> {
    let field = field.trim();
    if field.is_empty() {
        Ok(None)
    } else {
        field.parse().map(Some)
    }
}

/// 12 significant digits for human-facing output.
pub fn num12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Integer-valued counts are written without exponent.
pub fn count(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        num(x)
    }
}
