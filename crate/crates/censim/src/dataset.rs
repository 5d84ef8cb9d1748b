//! Dataset file ingestion and export.
//!
//! The interchange format is a strict CSV with header `t,delta,x1,...,xd`:
//! decimal-point reals, delta in {0, 1}, one observation per row. Validation
//! failures report 1-based line numbers (the header is line 1).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::survival::Observation;

/// Reads and validates a dataset file.
pub fn read_csv(path: &Path) -> Result<Vec<Observation>> {
    let raw = fs::read_to_string(path)?;
    parse_csv(&raw)
}

/// Parses dataset text; exposed separately so in-memory round-trips can be
/// tested without touching the filesystem.
pub fn parse_csv(raw: &str) -> Result<Vec<Observation>> {
    let mut lines = raw.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(Error::Dataset { line: 1, message: "empty file".into() })?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.len() < 3 || columns[0] != "t" || columns[1] != "delta" {
        return Err(Error::Dataset {
            line: 1,
            message: format!("header must be t,delta,x1,...,xd; got '{header}'"),
        });
    }
    let dim = columns.len() - 2;
    for (k, col) in columns[2..].iter().enumerate() {
        let expected = format!("x{}", k + 1);
        if *col != expected {
            return Err(Error::Dataset {
                line: 1,
                message: format!("column {} must be '{expected}', got '{col}'", k + 3),
            });
        }
    }

    let mut observations = Vec::new();
    for (idx, row) in lines {
        let line = idx + 1;
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(Error::Dataset {
                line,
                message: format!("expected {} fields, got {}", columns.len(), fields.len()),
            });
        }
        let time: f64 = fields[0]
            .parse()
            .map_err(|_| Error::Dataset { line, message: format!("invalid t '{}'", fields[0]) })?;
        if !time.is_finite() {
            return Err(Error::Dataset { line, message: "t must be finite".into() });
        }
        let event = match fields[1] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Dataset {
                    line,
                    message: format!("delta must be 0 or 1, got '{other}'"),
                })
            }
        };
        let mut covariates = Vec::with_capacity(dim);
        for (k, field) in fields[2..].iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Dataset {
                line,
                message: format!("invalid x{} '{field}'", k + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Dataset {
                    line,
                    message: format!("x{} must be finite", k + 1),
                });
            }
            covariates.push(v);
        }
        observations.push(Observation::new(time, event, covariates));
    }
    if observations.is_empty() {
        return Err(Error::Dataset { line: 1, message: "no data rows".into() });
    }
    Ok(observations)
}

/// Serializes observations in the dataset format. Values are written in
/// shortest round-trip form, so re-ingesting reproduces them bit-exactly.
pub fn to_csv(sample: &[Observation]) -> String {
    let dim = sample.first().map_or(0, |o| o.covariates.len());
    let mut out = String::from("t,delta");
    for k in 1..=dim {
        out.push_str(&format!(",x{k}"));
    }
    out.push('\n');
    for obs in sample {
        out.push_str(&format!("{},{}", obs.time, u8::from(obs.event)));
        for v in &obs.covariates {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Writes the dataset format to a file.
pub fn write_csv(path: &Path, sample: &[Observation]) -> Result<()> {
    fs::write(path, to_csv(sample))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_valid_file() {
        let raw = "t,delta,x1,x2\n1.5,1,0.2,0.3\n2.5,0,-0.1,4e-2\n";
        let sample = parse_csv(raw).unwrap();
        assert_eq!(sample.len(), 2);
        assert_eq!(sample[0].time, 1.5);
        assert!(sample[0].event);
        assert_eq!(sample[1].covariates, vec![-0.1, 0.04]);
    }

    #[test]
    fn rejects_bad_delta_with_line_number() {
        let raw = "t,delta,x1\n1,1,0\n2,1,0\n3,1,0\n4,1,0\n5,1,0\n6,2,0\n";
        let err = parse_csv(raw).unwrap_err();
        match err {
            Error::Dataset { line, message } => {
                assert_eq!(line, 7);
                assert!(message.contains("delta"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_header_and_ragged_rows() {
        assert!(parse_csv("time,delta,x1\n1,1,0\n").is_err());
        assert!(parse_csv("t,delta\n1,1\n").is_err());
        let err = parse_csv("t,delta,x1\n1,1\n").unwrap_err();
        assert!(matches!(err, Error::Dataset { line: 2, .. }));
    }

    #[test]
    fn round_trip_is_exact()  {
        let sample = vec![
            Observation::new(1.0 / 3.0, true, vec![0.1, std::f64::consts::PI]),
            Observation::new(7.25e-3, false, vec![-4.0, 1e-17]),
        ];
        let parsed = parse_csv(&to_csv(&sample)).unwrap();
        assert_eq!(parsed, sample);
    }
}
