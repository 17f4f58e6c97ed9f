use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("header must be `t,x1[,x2,...]`, got `{0}`")]
    Header(String),
    #[error("line {line}: time {t} does not increase")]
    NotIncreasing { line: u64, t: f64 },
    #[error("series has {found} state columns, model needs {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least {needed} observations, found {found}")]
    InsufficientData { needed: usize, found: usize },
}

/// Observations `values[i]` at strictly increasing `times[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, SeriesError> {
        if times.len() != values.len() {
            return Err(SeriesError::Malformed {
                line: 0,
                message: format!("{} times but {} observations", times.len(), values.len()),
            });
        }
        let dim = values.first().map_or(0, Vec::len);
        for (i, v) in values.iter().enumerate() {
            if v.len() != dim {
                return Err(SeriesError::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            if i > 0 && !(times[i] > times[i - 1]) {
                return Err(SeriesError::NotIncreasing {
                    line: i as u64 + 2,
                    t: times[i],
                });
            }
        }
        Ok(TimeSeries { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Consecutive `(x_prev, x_next, dt)` triples.
    pub fn transitions(&self) -> impl Iterator<Item = (&[f64], &[f64], f64)> {
        self.values
            .windows(2)
            .zip(self.times.windows(2))
            .map(|(v, t)| (v[0].as_slice(), v[1].as_slice(), t[1] - t[0]))
    }

    /// Checks the series can feed a likelihood for a `dim`-state model.
    pub fn check_usable(&self, dim: usize) -> Result<(), SeriesError> {
        if self.dim() != dim && !self.is_empty() {
            return Err(SeriesError::DimensionMismatch {
                expected: dim,
                found: self.dim(),
            });
        }
        if self.len() < 2 {
            return Err(SeriesError::InsufficientData {
                needed: 2,
                found: self.len(),
            });
        }
        Ok(())
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, SeriesError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(csv_error)?.clone();
        if header.len() < 2 || &header[0] != "t" {
            return Err(SeriesError::Header(header.iter().collect::<Vec<_>>().join(",")));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_error)?;
            let line = rec.position().map_or(0, |p| p.line());
            let mut nums = Vec::with_capacity(rec.len());
            for (col, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| SeriesError::Malformed {
                    line,
                    message: format!("column {} (`{}`): cannot parse `{field}` as a number", col + 1, &header[col]),
                })?;
                if !v.is_finite() {
                    return Err(SeriesError::Malformed {
                        line,
                        message: format!("column {}: non-finite value", col + 1),
                    });
                }
                nums.push(v);
            }
            let t = nums.remove(0);
            if let Some(&prev) = times.last() {
                if !(t > prev) {
                    return Err(SeriesError::NotIncreasing { line, t });
                }
            }
            times.push(t);
            values.push(nums);
        }
        Ok(TimeSeries { times, values })
    }

    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self, SeriesError> {
        Self::from_reader(File::open(path)?)
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<(), SeriesError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("x{i}")));
        w.write_record(&header).map_err(csv_error)?;
        for (t, v) in self.times.iter().zip(&self.values) {
            let mut row = vec![t.to_string()];
            row.extend(v.iter().map(f64::to_string));
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<(), SeriesError> {
        self.to_writer(File::create(path)?)
    }
}

fn csv_error(e: csv::Error) -> SeriesError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SeriesError::Io(io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => SeriesError::Malformed {
            line,
            message: format!("expected {expected_len} fields, found {len}"),
        },
        other => SeriesError::Malformed {
            line,
            message: format!("{other:?}"),
        },
    }
}
