use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// n observations of dimension `obs_dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    obs_dim: usize,
}

impl Dataset {
    pub fn new(values: Vec<f64>, obs_dim: usize) -> Result<Self> {
        if obs_dim == 0 || !values.len().is_multiple_of(obs_dim) {
            return Err(Error::Dimension {
                expected: obs_dim,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset entry".into()));
        }
        Ok(Self { values, obs_dim })
    }

    /// One-dimensional observations.
    pub fn from_column(xs: &[f64]) -> Self {
        Self::new(xs.to_vec(), 1).expect("finite scalar observations")
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows
            .first()
            .map(|r| r.len())
            .ok_or_else(|| Error::Empty("rows".into()))?;
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                got: r.len(),
            });
        }
        Self::new(rows.concat(), d)
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            values.extend(m.row(i).iter());
        }
        Self::new(values, m.ncols())
    }

    pub fn n(&self) -> usize {
        self.values.len() / self.obs_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.obs_dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// The dataset made of the given rows, in the given order (repeats allowed).
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.obs_dim);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self {
            values,
            obs_dim: self.obs_dim,
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n(), self.obs_dim, &self.values)
    }
}

/// Column conventions for CSV ingestion.
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    /// Response column for regression models; placed first in each observation.
    pub response: Option<String>,
    /// Prepend a column of ones to the covariates (regression only).
    pub intercept: bool,
}

/// Reads a headed CSV into a dataset.
///
/// Without a response column every column is used in file order. With one, each
/// observation is `[response, 1?, covariates in file order]`.
pub fn read_csv_dataset(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let resp_idx = match &opts.response {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Config(format!("response column `{name}` not found")))?,
        ),
        None => None,
    };
    let mut values = Vec::new();
    let mut width = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: Vec<f64> = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}: `{s}` is not numeric", line + 1)))
            })
            .collect::<Result<_>>()?;
        let mut obs = Vec::with_capacity(parsed.len() + 1);
        match resp_idx {
            Some(r) => {
                obs.push(parsed[r]);
                if opts.intercept {
                    obs.push(1.0);
                }
                obs.extend(
                    parsed
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != r)
                        .map(|(_, v)| *v),
                );
            }
            None => obs.extend(parsed),
        }
        width = obs.len();
        values.extend(obs);
    }
    if values.is_empty() {
        return Err(Error::Empty(format!("{}", path.display())));
    }
    Dataset::new(values, width)
}
