//! Report emission: JSON and CSV writers that serialize every number with
//! 12 significant digits.

use serde::Serialize;
use serde_json::Value;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{fmt12, round_sig};

/// Serialize to a JSON value with all numbers rounded to 12 significant
/// digits.
pub fn to_json12<T: Serialize>(value: &T) -> Result<Value> {
    let mut v = serde_json::to_value(value)
        .map_err(|e| Error::Parse(format!("serialization failed: {e}")))?;
    round_numbers(&mut v);
    Ok(v)
}

fn round_numbers(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.is_f64() {
                    if let Some(rounded) = serde_json::Number::from_f64(round_sig(f, 12)) {
                        *n = rounded;
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_numbers),
        Value::Object(map) => map.values_mut().for_each(round_numbers),
        _ => {}
    }
}

/// Write a report as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let v = to_json12(value)?;
    let text = serde_json::to_string_pretty(&v)
        .map_err(|e| Error::Parse(format!("serialization failed: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Write a numeric table as CSV with a header row.
pub fn write_series_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| fmt12(*x)).collect();
        writeln!(f, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Write a table whose first column is a label (dates, names).
pub fn write_labeled_csv(
    path: &Path,
    header: &[&str],
    rows: &[(String, Vec<f64>)],
) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{}", header.join(","))?;
    for (label, row) in rows {
        let cells: Vec<String> = row.iter().map(|x| fmt12(*x)).collect();
        writeln!(f, "{label},{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_numbers_are_rounded_to_12_digits() {
        #[derive(Serialize)]
        struct S {
            a: f64,
            b: Vec<f64>,
        }
        let v = to_json12(&S { a: 1.2345678901234567, b: vec![0.1 + 0.2] }).unwrap();
        assert_eq!(v["a"].as_f64().unwrap(), 1.23456789012);
        assert_eq!(v["b"][0].as_f64().unwrap(), 0.3);
    }
}
