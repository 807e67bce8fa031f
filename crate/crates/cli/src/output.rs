//! Tabular output: CSV (RFC 4180) or JSON lines, preceded by a metadata header.

use std::io::Write;

use serde_json::{Map, Value};

use crate::CliError;

pub const SIGNIFICANT_DIGITS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    #[value(alias = "jsonl")]
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Str(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Str(x.to_owned())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Str(x)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Empty, Into::into)
    }
}

/// Formats `x` with [`SIGNIFICANT_DIGITS`] significant digits, dropping trailing zeros.
///
/// Plain notation for magnitudes in `[1e-5, 1e9)`, scientific otherwise.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_owned()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Num(x) => format_number(*x),
            Cell::Int(k) => k.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Str(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => {
                let rounded: f64 = format_number(*x).parse().expect("formatted number parses");
                Value::from(rounded)
            }
            Cell::Num(_) | Cell::Empty => Value::Null,
            Cell::Int(k) => Value::from(*k),
            Cell::Bool(b) => Value::from(*b),
            Cell::Str(s) => Value::from(s.as_str()),
        }
    }
}

/// Run-level facts printed ahead of the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub entries: Vec<(String, Cell)>,
}

impl Metadata {
    pub fn new(command_line: String, seed: u64) -> Self {
        let mut m = Self { entries: Vec::new() };
        m.push("tool", concat!("efficiency ", env!("CARGO_PKG_VERSION")));
        m.push("command", command_line);
        m.push("seed", seed);
        m.push("poisson_truncation_tail", efficiency::coverage::POISSON_TAIL);
        m.push(
            "n_hat_zero",
            "outcomes with n_hat = 0 are discarded; Poisson probabilities renormalized by 1 - exp(-n)",
        );
        m
    }

    pub fn push(&mut self, key: &str, value: impl Into<Cell>) {
        self.entries.push((key.to_owned(), value.into()));
    }
}

/// A table with fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputRecord {
    pub metadata: Metadata,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl OutputRecord {
    pub fn new(metadata: Metadata, columns: Vec<&'static str>) -> Self {
        Self {
            metadata,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
        match format {
            Format::Csv => self.write_csv(out),
            Format::Json => self.write_json(out),
        }
    }

    /// `# key: value` lines, then a header row and the data.
    fn write_csv(&self, out: &mut dyn Write) -> Result<(), CliError> {
        for (k, v) in &self.metadata.entries {
            writeln!(out, "# {k}: {}", v.text())?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::text))?;
        }
        w.flush()?;
        Ok(())
    }

    /// `{"metadata": {...}}`, then one object per row.
    fn write_json(&self, out: &mut dyn Write) -> Result<(), CliError> {
        let mut meta: Map<String, Value> = self.metadata.entries.iter().map(|(k, v)| (k.clone(), v.json())).collect();
        meta.insert("columns".into(), Value::from(self.columns.clone()));
        let mut head = Map::new();
        head.insert("metadata".into(), Value::Object(meta));
        writeln!(out, "{}", Value::Object(head))?;
        for row in &self.rows {
            let obj: Map<String, Value> = self.columns.iter().zip(row).map(|(c, v)| ((*c).to_owned(), v.json())).collect();
            writeln!(out, "{}", Value::Object(obj))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_number(0.349241351895), "0.349241352");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(0.5), "0.5");
        assert_eq!(format_number(-2.5e-7), "-2.5e-7");
        assert_eq!(format_number(123456789.4), "123456789");
        assert_eq!(format_number(1234567891.0), "1.23456789e9");
        assert_eq!(format_number(9.9999999996), "10");
        assert_eq!(format_number(1e-10), "1e-10");
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(f64::NAN), "nan");
        assert_eq!(format_number(0.00012345678912), "0.000123456789");
    }

    #[test]
    fn csv_and_json_agree() {
        let mut rec = OutputRecord::new(Metadata::new("efficiency test".into(), 3), vec!["name", "x", "k", "flag", "none"]);
        rec.push(vec!["a,\"b\"".into(), 0.1234567891234.into(), 7u64.into(), true.into(), Cell::Empty]);
        let mut csv_out = Vec::new();
        rec.write(Format::Csv, &mut csv_out).unwrap();
        let text = String::from_utf8(csv_out).unwrap();
        assert!(text.contains("# seed: 3\n"));
        assert!(text.ends_with("name,x,k,flag,none\n\"a,\"\"b\"\"\",0.123456789,7,true,\n"));

        let mut json_out = Vec::new();
        rec.write(Format::Json, &mut json_out).unwrap();
        let lines: Vec<Value> = String::from_utf8(json_out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines[0]["metadata"]["seed"], 3);
        assert_eq!(lines[1]["x"].as_f64().unwrap(), "0.123456789".parse::<f64>().unwrap());
        assert_eq!(lines[1]["name"], "a,\"b\"");
        assert!(lines[1]["none"].is_null());
    }
}
