//! Key-value reports and CSV tables.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! values always produce equal text.

use std::fmt::{self, Write as _};

use micromorph_core::dynamic_solver::EnergyRecord;
use micromorph_core::verification::SURROGATE_NOTE;

/// `name = value` lines under `#` header lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    header: Vec<String>,
    entries: Vec<(String, String)>,
}

impl Report {
    /// A report whose header names the command and the norm surrogates.
    pub fn new(command: &str) -> Self {
        Report {
            header: vec![format!("micromorph {command}"), format!("note: {SURROGATE_NOTE}")],
            entries: Vec::new(),
        }
    }

    pub fn put(&mut self, name: impl Into<String>, value: impl fmt::Display) -> &mut Self {
        let value = value.to_string().replace('\n', " ");
        self.entries.push((name.into(), value));
        self
    }

    pub fn put_list(&mut self, name: impl Into<String>, values: impl IntoIterator<Item = impl fmt::Display>) -> &mut Self {
        let joined = values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        self.put(name, joined)
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for h in &self.header {
            let _ = writeln!(s, "# {h}");
        }
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// Reads `name = value` lines back, skipping comments.
pub fn parse_report(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(columns: &[&str]) -> Self {
        Csv {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Panics when the row width differs from the header.
    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "CSV row width");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

pub const ENERGY_COLUMNS: [&str; 9] = [
    "time",
    "kinetic",
    "sym_e",
    "skew_c",
    "trace_e",
    "sym_micro",
    "trace_micro",
    "curl",
    "total",
];

pub fn energy_csv(records: &[EnergyRecord]) -> Csv {
    let mut csv = Csv::new(&ENERGY_COLUMNS);
    for r in records {
        let mut row = vec![r.time.to_string(), r.kinetic.to_string()];
        row.extend(r.potential.as_array().iter().map(f64::to_string));
        row.push(r.total().to_string());
        csv.push(row);
    }
    csv
}

/// Columns of a CSV file as floats, by header name.
pub fn csv_column(text: &str, name: &str) -> Option<Vec<f64>> {
    let mut lines = text.lines();
    let index = lines.next()?.split(',').position(|c| c == name)?;
    lines.map(|l| l.split(',').nth(index)?.parse().ok()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use micromorph_core::assembly::EnergyTerms;

    #[test]
    fn report_renders_and_parses() {
        let mut r = Report::new("korn");
        r.put("levels", "2 3").put("value", 0.1 + 0.2).put_list("list", [1.5, 2.0]);
        let text = r.render();
        assert!(text.starts_with("# micromorph korn\n# note: boundary H^-1/2"));
        assert!(text.contains("value = 0.30000000000000004\n"));
        let back = parse_report(&text);
        assert_eq!(back, r.entries());
        assert_eq!(r.get("list"), Some("1.5 2"));
        assert_eq!(r.get("missing"), None);
    }

    #[test]
    fn energy_table() {
        let rec = |t: f64| EnergyRecord {
            time: t,
            kinetic: 1.0,
            potential: EnergyTerms {
                sym_e: 0.5,
                curl: 0.25,
                ..EnergyTerms::default()
            },
        };
        let csv = energy_csv(&[rec(0.0), rec(0.1)]);
        let text = csv.render();
        assert_eq!(text.lines().next().unwrap(), "time,kinetic,sym_e,skew_c,trace_e,sym_micro,trace_micro,curl,total");
        assert_eq!(csv_column(&text, "total").unwrap(), vec![1.75, 1.75]);
        assert_eq!(csv_column(&text, "time").unwrap(), vec![0.0, 0.1]);
        assert_eq!(csv_column(&text, "nope"), None);
    }

    #[test]
    #[should_panic(expected = "CSV row width")]
    fn ragged_rows_are_refused() {
        Csv::new(&["a", "b"]).push(vec![String::from("1")]);
    }
}
