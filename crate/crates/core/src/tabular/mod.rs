//! Lesion feature tables and their CSV form.
//!
//! CSV layout: header `dataset_id,subject_id,lesion_id,<feature...>,lsu`,
//! one row per lesion, empty cells for missing values, row order preserved.

mod preprocess;

pub use preprocess::{
    knn_impute, nan_euclidean, standardize, variance_filter, StandardizationParams,
    DEFAULT_IMPUTE_NEIGHBORS, DEFAULT_VARIANCE_THRESHOLD,
};

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TARGET_COLUMN: &str = "lsu";
const ID_COLUMNS: [&str; 3] = ["dataset_id", "subject_id", "lesion_id"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowId {
    pub dataset_id: String,
    pub subject_id: String,
    pub lesion_id: u32,
}

/// Rows are lesions, columns named features (cells may be missing), plus
/// a complete LSU target.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    rows: Vec<RowId>,
    columns: Vec<String>,
    /// Row-major cells.
    cells: Vec<Vec<Option<f64>>>,
    target: Vec<f64>,
}

impl FeatureTable {
    pub fn new(
        rows: Vec<RowId>,
        columns: Vec<String>,
        cells: Vec<Vec<Option<f64>>>,
        target: Vec<f64>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for c in &columns {
            if ID_COLUMNS.contains(&c.as_str()) || c == TARGET_COLUMN {
                return Err(Error::Schema(format!("`{c}` is a reserved column name")));
            }
            if !seen.insert(c) {
                return Err(Error::Schema(format!("duplicate column `{c}`")));
            }
        }
        if cells.len() != rows.len() || target.len() != rows.len() {
            return Err(Error::Schema(format!(
                "{} row ids, {} cell rows, {} targets",
                rows.len(),
                cells.len(),
                target.len()
            )));
        }
        for (r, row) in cells.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::Schema(format!(
                    "row {r} has {} cells for {} columns",
                    row.len(),
                    columns.len()
                )));
            }
            if let Some(c) = row.iter().position(|v| v.is_some_and(|x| !x.is_finite())) {
                return Err(Error::Input(format!(
                    "row {r} holds a non-finite value in `{}`",
                    columns[c]
                )));
            }
        }
        if let Some(r) = target.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("target of row {r} is missing or non-finite")));
        }
        Ok(Self {
            rows,
            columns,
            cells,
            target,
        })
    }

    pub fn empty(columns: Vec<String>) -> Result<Self> {
        Self::new(Vec::new(), columns, Vec::new(), Vec::new())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn rows(&self) -> &[RowId] {
        &self.rows
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row][col]
    }

    pub fn row(&self, row: usize) -> &[Option<f64>] {
        &self.cells[row]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        self.cells.iter().map(move |r| r[col])
    }

    pub fn has_missing(&self) -> bool {
        self.cells.iter().flatten().any(|c| c.is_none())
    }

    /// Keeps the named columns in the given order.
    pub fn select_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.column_index(n.as_ref())
                    .ok_or_else(|| Error::Schema(format!("missing column `{}`", n.as_ref())))
            })
            .collect::<Result<_>>()?;
        let cells = self
            .cells
            .iter()
            .map(|r| idx.iter().map(|&j| r[j]).collect())
            .collect();
        Self::new(
            self.rows.clone(),
            idx.iter().map(|&j| self.columns[j].clone()).collect(),
            cells,
            self.target.clone(),
        )
    }

    /// Keeps the rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            columns: self.columns.clone(),
            cells: indices.iter().map(|&i| self.cells[i].clone()).collect(),
            target: indices.iter().map(|&i| self.target[i]).collect(),
        }
    }

    /// Appends a column at the end.
    pub fn with_column(&self, name: &str, values: Vec<Option<f64>>) -> Result<Self> {
        if values.len() != self.n_rows() {
            return Err(Error::Schema(format!(
                "column `{name}` has {} values for {} rows",
                values.len(),
                self.n_rows()
            )));
        }
        let mut columns = self.columns.clone();
        columns.push(name.to_string());
        let cells = self
            .cells
            .iter()
            .zip(values)
            .map(|(r, v)| {
                let mut r = r.clone();
                r.push(v);
                r
            })
            .collect();
        Self::new(self.rows.clone(), columns, cells, self.target.clone())
    }

    /// Stacks tables sharing the same columns.
    pub fn concat(tables: &[FeatureTable]) -> Result<Self> {
        let first = tables
            .first()
            .ok_or_else(|| Error::Input("nothing to concatenate".into()))?;
        let mut out = first.clone();
        for t in &tables[1..] {
            if t.columns != first.columns {
                return Err(Error::Schema("tables to concatenate have different columns".into()));
            }
            out.rows.extend(t.rows.iter().cloned());
            out.cells.extend(t.cells.iter().cloned());
            out.target.extend_from_slice(&t.target);
        }
        Ok(out)
    }

    /// Dense `n × d` matrix; fails if any cell is missing.
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        let (n, d) = (self.n_rows(), self.n_cols());
        let mut m = DMatrix::zeros(n, d);
        for (r, row) in self.cells.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                m[(r, c)] = v.ok_or_else(|| {
                    Error::Input(format!(
                        "missing value at row {r}, column `{}`",
                        self.columns[c]
                    ))
                })?;
            }
        }
        Ok(m)
    }

    /// Replaces every cell, keeping ids, names and target.
    pub(crate) fn with_cells(&self, cells: Vec<Vec<Option<f64>>>) -> Result<Self> {
        Self::new(self.rows.clone(), self.columns.clone(), cells, self.target.clone())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = ID_COLUMNS.to_vec();
        header.extend(self.columns.iter().map(|s| s.as_str()));
        header.push(TARGET_COLUMN);
        wr.write_record(&header)?;
        for (r, id) in self.rows.iter().enumerate() {
            let mut rec = vec![id.dataset_id.clone(), id.subject_id.clone(), id.lesion_id.to_string()];
            rec.extend(
                self.cells[r]
                    .iter()
                    .map(|c| c.map(|v| v.to_string()).unwrap_or_default()),
            );
            rec.push(self.target[r].to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if header.len() < 4
            || header[..3] != ID_COLUMNS
            || header.last().map(String::as_str) != Some(TARGET_COLUMN)
        {
            return Err(Error::Schema(
                "header must be dataset_id,subject_id,lesion_id,<features...>,lsu".into(),
            ));
        }
        let columns = header[3..header.len() - 1].to_vec();
        let mut rows = Vec::new();
        let mut cells = Vec::new();
        let mut target = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let lesion_id = rec[2]
                .parse()
                .map_err(|_| Error::Schema(format!("row {line}: bad lesion_id `{}`", &rec[2])))?;
            rows.push(RowId {
                dataset_id: rec[0].to_string(),
                subject_id: rec[1].to_string(),
                lesion_id,
            });
            let mut row = Vec::with_capacity(columns.len());
            for j in 3..rec.len() - 1 {
                row.push(parse_cell(&rec[j], line)?);
            }
            cells.push(row);
            target.push(
                parse_cell(&rec[rec.len() - 1], line)?
                    .ok_or_else(|| Error::Input(format!("row {line}: missing lsu")))?,
            );
        }
        Self::new(rows, columns, cells, target)
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn parse_cell(s: &str, line: usize) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Schema(format!("row {line}: `{s}` is not a number")))
}
