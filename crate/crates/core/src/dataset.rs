use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::linalg::FactorScores;

/// An `n × J` observation matrix with named columns and optional row labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Array2<f64>,
    column_names: Vec<String>,
    row_labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(values: Array2<f64>, column_names: Vec<String>) -> Result<Self> {
        Self::with_row_labels(values, column_names, None)
    }

    pub fn with_row_labels(
        values: Array2<f64>,
        column_names: Vec<String>,
        row_labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if values.ncols() != column_names.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns but {} names",
                values.ncols(),
                column_names.len()
            )));
        }
        if values.nrows() < 2 {
            return Err(Error::InvalidParameter(format!(
                "a dataset needs at least 2 rows, got {}",
                values.nrows()
            )));
        }
        if let Some(labels) = &row_labels {
            if labels.len() != values.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "{} rows but {} row labels",
                    values.nrows(),
                    labels.len()
                )));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateHeader(name.clone()));
            }
        }
        if let Some(((r, c), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::MissingValue { row: r + 1, col: c + 1 });
        }
        Ok(Dataset {
            values,
            column_names,
            row_labels,
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn row_labels(&self) -> Option<&[String]> {
        self.row_labels.as_deref()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<ArrayView1<'_, f64>> {
        self.column_index(name).map(|j| self.values.column(j))
    }

    /// Gathers the named columns into a block, in the order given.
    pub fn select(&self, names: &[String]) -> Result<Array2<f64>> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::InvalidParameter(format!("no column named {n:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.values.select(Axis(1), &idx))
    }

    /// Copy with every column centered and scaled to unit Euclidean norm.
    pub fn standardize_columns(&self) -> Result<Dataset> {
        let mut values = self.values.clone();
        for (j, mut col) in values.columns_mut().into_iter().enumerate() {
            let f = FactorScores::standardize(col.view()).map_err(|_| {
                Error::InvalidParameter(format!("column {:?} is constant", self.column_names[j]))
            })?;
            col.assign(f.scores());
        }
        Ok(Dataset {
            values,
            column_names: self.column_names.clone(),
            row_labels: self.row_labels.clone(),
        })
    }

    /// Appends a column, keeping row labels.
    pub fn with_column(mut self, name: &str, column: Array1<f64>) -> Result<Dataset> {
        if column.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "column {name:?} has length {}, dataset has {} rows",
                column.len(),
                self.n()
            )));
        }
        if self.column_index(name).is_some() {
            return Err(Error::DuplicateHeader(name.to_string()));
        }
        self.values
            .push_column(column.view())
            .expect("length checked above");
        self.column_names.push(name.to_string());
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn standardized_columns_are_unit_norm() {
        let d = Dataset::new(
            array![[1.0, 10.0], [2.0, 0.0], [4.0, 5.0]],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
        .standardize_columns()
        .unwrap();
        for col in d.values().columns() {
            assert!(col.sum().abs() < 1e-14);
            assert!((col.dot(&col) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_duplicate_names_and_nan() {
        assert!(matches!(
            Dataset::new(array![[1.0, 2.0], [3.0, 4.0]], vec!["a".into(), "a".into()]),
            Err(Error::DuplicateHeader(_))
        ));
        assert!(matches!(
            Dataset::new(array![[1.0], [f64::NAN]], vec!["a".into()]),
            Err(Error::MissingValue { row: 2, col: 1 })
        ));
    }
}
