use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One timestamped record: pressure (MPa), inductance (µH) and optional
/// force (N) and length (m). `f_true` and `l_clean` carry noise-free
/// channels when the data comes from the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub p: f64,
    pub l: f64,
    pub f: Option<f64>,
    pub x: Option<f64>,
    pub f_true: Option<f64>,
    pub l_clean: Option<f64>,
}

impl Sample {
    pub fn new(t: f64, p: f64, l: f64) -> Self {
        Self {
            t,
            p,
            l,
            f: None,
            x: None,
            f_true: None,
            l_clean: None,
        }
    }

    pub fn with_force(mut self, f: f64) -> Self {
        self.f = Some(f);
        self
    }

    pub fn with_length(mut self, x: f64) -> Self {
        self.x = Some(x);
        self
    }

    /// Best available force reference: the noise-free channel if present.
    pub fn reference_force(&self) -> Option<f64> {
        self.f_true.or(self.f)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub meta: BTreeMap<String, String>,
}

/// Optional channels in the order they appear in CSV files.
const OPTIONAL_COLUMNS: [&str; 4] = ["F", "x", "F_true", "L_clean"];

fn optional_field(s: &Sample, col: usize) -> Option<f64> {
    match col {
        0 => s.f,
        1 => s.x,
        2 => s.f_true,
        _ => s.l_clean,
    }
}

fn optional_field_mut(s: &mut Sample, col: usize) -> &mut Option<f64> {
    match col {
        0 => &mut s.f,
        1 => &mut s.x,
        2 => &mut s.f_true,
        _ => &mut s.l_clean,
    }
}

impl Dataset {
    /// Validates ordering and ranges. Line numbers in errors assume a
    /// header on line 1.
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let ds = Self {
            samples,
            meta: BTreeMap::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            let line = i as u64 + 2;
            if !(s.t.is_finite() && s.p.is_finite() && s.l.is_finite()) {
                return Err(Error::Parse {
                    line,
                    message: "non-finite value".into(),
                });
            }
            if s.p < 0.0 {
                return Err(Error::Parse {
                    line,
                    message: format!("negative pressure {}", s.p),
                });
            }
            if i > 0 && s.t <= self.samples[i - 1].t {
                return Err(Error::NonMonotonicTime { line });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn has_column(&self, name: &str) -> bool {
        match OPTIONAL_COLUMNS.iter().position(|c| *c == name) {
            Some(col) => {
                !self.samples.is_empty()
                    && self
                        .samples
                        .iter()
                        .all(|s| optional_field(s, col).is_some())
            }
            None => matches!(name, "t" | "P" | "L"),
        }
    }

    pub fn require_column(&self, name: &str) -> Result<()> {
        if self.has_column(name) {
            Ok(())
        } else {
            Err(Error::MissingColumn(name.to_string()))
        }
    }

    /// Median sampling interval.
    pub fn median_dt(&self) -> Option<f64> {
        if self.samples.len() < 2 {
            return None;
        }
        let mut dts: Vec<f64> = self.samples.windows(2).map(|w| w[1].t - w[0].t).collect();
        dts.sort_by(f64::total_cmp);
        Some(dts[dts.len() / 2])
    }

    /// Concatenates datasets end to end, shifting timestamps so the result
    /// stays strictly increasing. Used to pool several actuators into one fit.
    pub fn pooled(parts: &[Dataset]) -> Result<Self> {
        let mut samples: Vec<Sample> = Vec::new();
        for part in parts {
            let Some(first) = part.samples.first() else {
                continue;
            };
            let dt = part.median_dt().unwrap_or(1.0);
            let offset = samples.last().map_or(0.0, |last| last.t + dt - first.t);
            samples.extend(part.samples.iter().map(|s| Sample {
                t: s.t + offset,
                ..*s
            }));
        }
        let mut ds = Dataset::new(samples)?;
        ds.meta.insert("pooled".into(), parts.len().to_string());
        Ok(ds)
    }

    /// Splits off every `every`-th sample as a holdout set.
    pub fn split_holdout(&self, every: usize) -> (Dataset, Dataset) {
        let every = every.max(2);
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, s) in self.samples.iter().enumerate() {
            if i % every == every - 1 {
                test.push(*s);
            } else {
                train.push(*s);
            }
        }
        (
            Dataset {
                samples: train,
                meta: self.meta.clone(),
            },
            Dataset {
                samples: test,
                meta: self.meta.clone(),
            },
        )
    }

    /// Parses a CSV with header `t,P,L[,F][,x][,F_true][,L_clean]`. Other
    /// columns are ignored.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
        if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
            return Err(Error::Parse {
                line: 1,
                message: "empty input: expected a header row".into(),
            });
        }
        let find = |name: &str| headers.iter().position(|h| h == name);
        let t_col = find("t").ok_or_else(|| Error::MissingColumn("t".into()))?;
        let p_col = find("P").ok_or_else(|| Error::MissingColumn("P".into()))?;
        let l_col = find("L").ok_or_else(|| Error::MissingColumn("L".into()))?;
        let optional: Vec<Option<usize>> = OPTIONAL_COLUMNS.iter().map(|c| find(c)).collect();

        let mut samples = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| csv_error(e, 0))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let field = |col: usize, name: &str| -> Result<f64> {
                let raw = record.get(col).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("missing value for `{name}`"),
                })?;
                raw.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("cannot parse `{raw}` as a number in column `{name}`"),
                })
            };
            let mut s = Sample::new(field(t_col, "t")?, field(p_col, "P")?, field(l_col, "L")?);
            for (idx, col) in optional.iter().enumerate() {
                if let Some(col) = col {
                    let raw = record.get(*col).unwrap_or("");
                    if !raw.is_empty() {
                        *optional_field_mut(&mut s, idx) =
                            Some(field(*col, OPTIONAL_COLUMNS[idx])?);
                    }
                }
            }
            if samples.last().is_some_and(|prev: &Sample| s.t <= prev.t) {
                return Err(Error::NonMonotonicTime { line });
            }
            samples.push(s);
        }
        if samples.is_empty() {
            return Err(Error::Parse {
                line: 2,
                message: "no data rows".into(),
            });
        }
        Dataset::new(samples)
    }

    pub fn read_csv(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    /// Column names written by [`Dataset::write_csv`].
    pub fn csv_columns(&self) -> Vec<&'static str> {
        let mut cols = vec!["t", "P", "L"];
        for (idx, name) in OPTIONAL_COLUMNS.iter().enumerate() {
            if !self.samples.is_empty()
                && self
                    .samples
                    .iter()
                    .all(|s| optional_field(s, idx).is_some())
            {
                cols.push(name);
            }
        }
        cols
    }

    /// Writes the dataset, appending `extra` columns (one value per sample).
    pub fn write_csv_with<W: Write>(&self, writer: W, extra: &[(&str, &[f64])]) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let cols = self.csv_columns();
        let mut header: Vec<&str> = cols.clone();
        header.extend(extra.iter().map(|(name, _)| *name));
        wtr.write_record(&header).map_err(|e| csv_error(e, 0))?;
        let opt_present: Vec<usize> = OPTIONAL_COLUMNS
            .iter()
            .enumerate()
            .filter(|(_, n)| cols.contains(n))
            .map(|(i, _)| i)
            .collect();
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for (i, s) in self.samples.iter().enumerate() {
            row.clear();
            row.push(s.t.to_string());
            row.push(s.p.to_string());
            row.push(s.l.to_string());
            for &idx in &opt_present {
                row.push(
                    optional_field(s, idx)
                        .map(|v| v.to_string())
                        .unwrap_or_default(),
                );
            }
            for (_, values) in extra {
                row.push(values.get(i).map(|v| v.to_string()).unwrap_or_default());
            }
            wtr.write_record(&row).map_err(|e| csv_error(e, 0))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        self.write_csv_with(writer, &[])
    }
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback_line);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_and_optional_columns() {
        let text = "t,P,L,F\n0.0,0.1,4.8,0.5\n0.01,0.1,4.81,0.52\n";
        let ds = Dataset::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(ds.len(), 2);
        assert!(ds.has_column("F"));
        assert!(!ds.has_column("x"));
        assert_eq!(ds.samples[1].f, Some(0.52));
    }

    #[test]
    fn missing_required_column_is_named() {
        let err = Dataset::from_csv_reader("t,L\n0,4.8\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "P"));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err =
            Dataset::from_csv_reader("t,P,L\n0,0.1,4.8\n0.1,abc,4.8\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_a_parse_error() {
        assert!(matches!(
            Dataset::from_csv_reader("".as_bytes()),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            Dataset::from_csv_reader("t,P,L\n".as_bytes()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn non_monotonic_time_rejected() {
        let err = Dataset::from_csv_reader("t,P,L\n0,0,4.8\n0.2,0,4.8\n0.1,0,4.8\n".as_bytes())
            .unwrap_err();
        assert!(matches!(err, Error::NonMonotonicTime { line: 4 }));
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let samples = vec![
            Sample::new(0.0, 0.1, 4.8123456789)
                .with_force(0.1)
                .with_length(0.11),
            Sample::new(0.01, 0.2, 4.9)
                .with_force(0.2)
                .with_length(0.12),
        ];
        let ds = Dataset::new(samples).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t,P,L,F,x\n"));
        let back = Dataset::from_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(back.samples, ds.samples);
    }

    #[test]
    fn pooling_keeps_time_increasing() {
        let a = Dataset::new(vec![Sample::new(0.0, 0.0, 4.8), Sample::new(0.5, 0.0, 4.8)]).unwrap();
        let b = a.clone();
        let pooled = Dataset::pooled(&[a, b]).unwrap();
        assert_eq!(pooled.len(), 4);
        assert!(pooled.samples.windows(2).all(|w| w[1].t > w[0].t));
    }
}
