//! Minimal CSV emission and the `(step, value)` series reader.

use std::fs;
use std::path::Path;

use crate::error::CliError;

/// Twelve significant digits, enough to round-trip every emitted value to
/// that precision.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.11e}")
}

pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) {
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            self.text.push_str(f.as_ref());
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, &self.text).map_err(|e| CliError::io(path, e))
    }
}

/// `(step, value)` table where every value is a float.
pub fn series_table(value_column: &str, steps: &[usize], values: &[f64]) -> Table {
    let mut t = Table::new(&["step", value_column]);
    for (s, v) in steps.iter().zip(values) {
        t.row(&[s.to_string(), fmt_float(*v)]);
    }
    t
}

/// A two-column numeric series read from disk, with the source line of each
/// row (1-based, header is line 1).
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesFile {
    pub steps: Vec<f64>,
    pub values: Vec<f64>,
    pub lines: Vec<usize>,
}

pub fn read_series(path: &Path) -> Result<SeriesFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_series(&text).map_err(|(line, message)| CliError::Csv {
        path: path.to_path_buf(),
        line,
        message,
    })
}

pub fn parse_series(text: &str) -> Result<SeriesFile, (usize, String)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header) = lines.next().ok_or((1, "file is empty".to_string()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.len() != 2
        || columns
            .iter()
            .any(|c| c.is_empty() || c.parse::<f64>().is_ok())
    {
        return Err((
            1,
            format!("expected a two-column header such as `step,value`, found `{header}`"),
        ));
    }
    let mut out = SeriesFile {
        steps: Vec::new(),
        values: Vec::new(),
        lines: Vec::new(),
    };
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err((n, format!("expected 2 fields, found {}", fields.len())));
        }
        let parse = |s: &str, what: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| (n, format!("{what} `{s}` is not a finite number")))
        };
        out.steps.push(parse(fields[0], "step")?);
        out.values.push(parse(fields[1], "value")?);
        out.lines.push(n);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_to_twelve_digits() {
        for v in [
            0.0,
            1.0,
            -2.5e-17,
            1.0 / 3.0,
            123456.789012345,
            f64::MIN_POSITIVE,
            9.99999999999951e300,
        ] {
            let back: f64 = fmt_float(v).parse().unwrap();
            assert!(
                (back - v).abs() <= 5e-12 * v.abs(),
                "{v} -> {}",
                fmt_float(v)
            );
        }
        assert_eq!(fmt_float(1.0), "1.00000000000e0");
    }

    #[test]
    fn table_layout() {
        let t = series_table("value", &[0, 1], &[1.0, 0.5]);
        assert_eq!(
            t.as_str(),
            "step,value\n0,1.00000000000e0\n1,5.00000000000e-1\n"
        );
    }

    #[test]
    fn series_parsing() {
        let s = parse_series("step,value\n0,1.5\n1, 2\n\n2,3e-1\n").unwrap();
        assert_eq!(s.values, vec![1.5, 2.0, 0.3]);
        assert_eq!(s.lines, vec![2, 3, 5]);
        assert_eq!(parse_series("step,value\n0,1\n1,x\n").unwrap_err().0, 3);
        assert_eq!(parse_series("step,value\n0,1,2\n").unwrap_err().0, 2);
        assert_eq!(parse_series("0,1\n1,2\n").unwrap_err().0, 1);
        assert_eq!(parse_series("").unwrap_err().0, 1);
        assert_eq!(parse_series("step,value\n0,nan\n").unwrap_err().0, 2);
    }
}
