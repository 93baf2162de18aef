use chrono::NaiveDate;

use super::DataError;

/// Named real-valued columns over strictly increasing dates.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFrame {
    timestamps: Vec<NaiveDate>,
    columns: Vec<(String, Vec<f64>)>,
}

impl SeriesFrame {
    pub fn new(
        timestamps: Vec<NaiveDate>,
        columns: Vec<(String, Vec<f64>)>,
    ) -> Result<Self, DataError> {
        if let Some(i) = timestamps.windows(2).position(|w| w[0] >= w[1]) {
            return Err(DataError::NonMonotonic(i + 1));
        }
        for (name, col) in &columns {
            if col.len() != timestamps.len() {
                return Err(DataError::ColumnLength {
                    name: name.clone(),
                    expected: timestamps.len(),
                    actual: col.len(),
                });
            }
        }
        Ok(Self {
            timestamps,
            columns,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[NaiveDate] {
        &self.timestamps
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_slice())
    }

    pub fn column_at(&self, index: usize) -> &[f64] {
        &self.columns[index].1
    }

    pub fn columns(&self) -> &[(String, Vec<f64>)] {
        &self.columns
    }

    /// Rows `[start, end)`.
    pub fn slice_rows(&self, start: usize, end: usize) -> SeriesFrame {
        SeriesFrame {
            timestamps: self.timestamps[start..end].to_vec(),
            columns: self
                .columns
                .iter()
                .map(|(n, c)| (n.clone(), c[start..end].to_vec()))
                .collect(),
        }
    }

    /// Row-major value of column `col` at row `row`.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.columns[col].1[row]
    }
}
