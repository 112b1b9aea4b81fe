//! JSON envelopes and CSV tables with 12 significant digits.

use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::CliError;

pub const SIGNIFICANT_DIGITS: usize = 12;

/// `x` rounded to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    format!("{}", round_sig(x))
}

fn round_tree(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                if let Some(r) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                    *n = r;
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_tree),
        Value::Object(o) => o.values_mut().for_each(round_tree),
        _ => {}
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultEnvelope {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Command-line options after defaults.
    pub options: Value,
    /// The configuration with every default filled in.
    pub config: RunConfig,
    /// Quantities derived from the configuration: threshold, truncation
    /// levels and the horizon actually used.
    pub derived: Value,
    pub warnings: Vec<String>,
    pub result: Value,
}

impl ResultEnvelope {
    pub fn to_json(&self) -> Result<String, CliError> {
        let mut v = serde_json::to_value(self).map_err(|e| CliError::Usage(format!("serialization failed: {e}")))?;
        round_tree(&mut v);
        let mut s = serde_json::to_string_pretty(&v).map_err(|e| CliError::Usage(format!("serialization failed: {e}")))?;
        s.push('\n');
        Ok(s)
    }
}

/// Serializes a table of rows; `None` cells are written empty.
pub fn csv_table(header: &[String], rows: &[Vec<Option<String>>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Usage(format!("csv output failed: {e}"));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row.iter().map(|c| c.as_deref().unwrap_or(""))).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(format!("csv output failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::Usage(format!("csv output failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round_sig(1.234_567_890_123_456), 1.234_567_890_12);
        assert_eq!(round_sig(-9.876_543_210_987_654e-7), -9.876_543_210_99e-7);
        assert_eq!(round_sig(0.0), 0.0);
        assert_eq!(fmt_num(2.5), "2.5");
    }

    #[test]
    fn csv_empty_cells() {
        let s = csv_table(&["a".into(), "b".into()], &[vec![Some("1".into()), None]]).unwrap();
        assert_eq!(s, "a,b\n1,\n");
    }
}
