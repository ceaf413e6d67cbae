//! Observation matrices. Rows are time points, columns are variables.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An `n x p` sample `y_1, ..., y_n` with optional variable names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: DMatrix<f64>,
    names: Option<Vec<String>>,
    centered: bool,
}

impl Dataset {
    /// Builds a dataset from an `n x p` matrix. Requires `n >= 4`, `p >= 2`
    /// and finite entries.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (n, p) = values.shape();
        if n < 4 {
            return Err(Error::InsufficientData(format!(
                "need at least 4 observations, got {n}"
            )));
        }
        if p < 2 {
            return Err(Error::InvalidDimension(format!(
                "need at least 2 variables, got {p}"
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at row {}, column {}",
                pos % n,
                pos / n
            )));
        }
        Ok(Self {
            values,
            names: None,
            centered: false,
        })
    }

    /// Row-major constructor, convenient for literals in tests.
    pub fn from_rows(n: usize, p: usize, rows: &[f64]) -> Result<Self> {
        if rows.len() != n * p {
            return Err(Error::ShapeError(format!(
                "expected {} values, got {}",
                n * p,
                rows.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, p, rows))
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::ShapeError(format!(
                "{} names for {} columns",
                names.len(),
                self.p()
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.values.as_slice()[j * n..(j + 1) * n]
    }

    /// Subtracts each column's sample mean. A dataset already marked as
    /// centered is returned unchanged.
    pub fn center(&self) -> Result<Self> {
        if self.centered {
            return Ok(self.clone());
        }
        center_matrix(&self.values).map(|values| Self {
            values,
            names: self.names.clone(),
            centered: true,
        })
    }

    /// Keeps the listed columns in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.p()) {
            return Err(Error::InvalidDimension(format!("column {bad} out of range")));
        }
        let values = self.values.select_columns(cols.iter());
        let mut out = Self::new(values)?;
        out.centered = self.centered;
        if let Some(names) = &self.names {
            out.names = Some(cols.iter().map(|&c| names[c].clone()).collect());
        }
        Ok(out)
    }
}

/// Column-mean removal on a raw matrix.
pub fn center_matrix(values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = values.nrows();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "centering needs at least 2 rows, got {n}"
        )));
    }
    let mut out = values.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.iter().sum::<f64>() / n as f64;
        if mean != 0.0 {
            col.iter_mut().for_each(|v| *v -= mean);
        }
    }
    Ok(out)
}
