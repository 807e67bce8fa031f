//! Per-event input files: UTF-8 CSV with header `weight,success[,x]`.

use std::io::Read;

use efficiency::{WeightedEntry, WeightedObservations64};

use crate::CliError;

pub fn read_events(input: impl Read) -> Result<WeightedObservations64, CliError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let with_x = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["weight", "success"] => false,
        ["weight", "success", "x"] => true,
        _ => {
            return Err(CliError::Usage(format!(
                "event file header must be `weight,success[,x]`, got `{}`",
                header.join(",")
            )))
        }
    };
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let num = |j: usize, what: &str| -> Result<f64, CliError> {
            record[j]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Usage(format!("line {line}: bad {what} `{}`", &record[j])))
        };
        let weight = num(0, "weight")?;
        let success = match &record[1] {
            "0" => false,
            "1" => true,
            other => return Err(CliError::Usage(format!("line {line}: success must be 0 or 1, got `{other}`"))),
        };
        entries.push(if with_x {
            WeightedEntry::with_x(weight, success, num(2, "x")?)
        } else {
            WeightedEntry::new(weight, success)
        });
    }
    if entries.is_empty() {
        return Err(CliError::Usage("event file has no events".into()));
    }
    Ok(WeightedObservations64::new(entries)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_and_three_columns() {
        let obs = read_events("weight,success\n1.5,1\n0.5, 0\n".as_bytes()).unwrap();
        assert_eq!(obs.len(), 2);
        assert_eq!(obs.entries()[0].weight, 1.5);
        assert!(obs.entries()[0].success);
        let obs = read_events("weight,success,x\n2,0,0.25\n".as_bytes()).unwrap();
        assert_eq!(obs.entries()[0].x, Some(0.25));
    }

    #[test]
    fn rejects_malformed_files() {
        for bad in [
            "w,s\n1,1\n",
            "weight,success\n1,2\n",
            "weight,success\nabc,1\n",
            "weight,success\n",
            "weight,success,x\n1,1\n",
        ] {
            assert!(matches!(read_events(bad.as_bytes()), Err(CliError::Usage(_)) | Err(CliError::Csv(_))), "{bad}");
        }
    }
}
