use serde::{Deserialize, Serialize};

use super::ForestError;

/// Training target attached to a [`DesignMatrix`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Numeric(Vec<f64>),
    /// Class indices `0..n_classes`.
    Labels(Vec<usize>),
}

impl Target {
    pub fn len(&self) -> usize {
        match self {
            Target::Numeric(v) => v.len(),
            Target::Labels(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Rectangular numeric feature table. Cells are stored row-major; a NaN
/// cell is MISSING.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    columns: Vec<String>,
    n_rows: usize,
    cells: Vec<f64>,
    target: Option<Target>,
}

impl DesignMatrix {
    pub fn from_rows(columns: Vec<String>, rows: &[Vec<Option<f64>>]) -> Result<Self, ForestError> {
        let width = columns.len();
        if width == 0 {
            return Err(ForestError::EmptyMatrix);
        }
        if rows.is_empty() {
            return Err(ForestError::EmptyMatrix);
        }
        let mut cells = Vec::with_capacity(rows.len() * width);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != width {
                return Err(ForestError::NonRectangular { row: i, expected: width, found: r.len() });
            }
            cells.extend(r.iter().map(|c| c.unwrap_or(f64::NAN)));
        }
        Ok(DesignMatrix { columns, n_rows: rows.len(), cells, target: None })
    }

    /// Build from dense rows where NaN already marks MISSING.
    pub fn from_dense(columns: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, ForestError> {
        let rows: Vec<Vec<Option<f64>>> =
            rows.iter().map(|r| r.iter().map(|&v| (!v.is_nan()).then_some(v)).collect()).collect();
        Self::from_rows(columns, &rows)
    }

    pub fn with_target(mut self, target: Target) -> Result<Self, ForestError> {
        if target.len() != self.n_rows {
            return Err(ForestError::NonRectangular { row: self.n_rows, expected: self.n_rows, found: target.len() });
        }
        self.target = Some(target);
        Ok(self)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn target(&self) -> Option<&Target> {
        self.target.as_ref()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.cells[row * self.n_cols() + col];
        (!v.is_nan()).then_some(v)
    }

    pub(crate) fn set(&mut self, row: usize, col: usize, v: f64) {
        let w = self.n_cols();
        self.cells[row * w + col] = v;
    }

    /// A row with NaN for MISSING cells.
    pub fn row(&self, row: usize) -> &[f64] {
        let w = self.n_cols();
        &self.cells[row * w..(row + 1) * w]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_rows).map(move |r| self.cells[r * self.n_cols() + col])
    }

    pub fn missing_count(&self, col: usize) -> usize {
        self.column(col).filter(|v| v.is_nan()).count()
    }

    pub fn has_missing(&self) -> bool {
        self.cells.iter().any(|v| v.is_nan())
    }

    /// Column-major copy, as used by tree training.
    pub(crate) fn to_columns(&self) -> Vec<Vec<f64>> {
        (0..self.n_cols()).map(|c| self.column(c).collect()).collect()
    }

    /// Keep only the named columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<DesignMatrix, ForestError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| ForestError::UnknownColumn((*n).to_owned())))
            .collect::<Result<_, _>>()?;
        let mut cells = Vec::with_capacity(self.n_rows * idx.len());
        for r in 0..self.n_rows {
            let row = self.row(r);
            cells.extend(idx.iter().map(|&c| row[c]));
        }
        Ok(DesignMatrix {
            columns: names.iter().map(|s| s.to_string()).collect(),
            n_rows: self.n_rows,
            cells,
            target: self.target.clone(),
        })
    }
}
