use std::fmt;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{DataError, SeriesFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions(pub [f64; 3]);

impl Default for SplitFractions {
    fn default() -> Self {
        Self([0.7, 0.15, 0.15])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// First state row in the source frame.
    pub start: usize,
    pub split: Option<Split>,
    target: Vec<f64>,
}

impl Window {
    pub fn target(&self) -> &[f64] {
        &self.target
    }
}

/// Sliding windows over a shared row-major feature matrix.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    pub context_length: usize,
    pub horizon: usize,
    pub num_features: usize,
    feature_names: Arc<Vec<String>>,
    timestamps: Arc<Vec<NaiveDate>>,
    matrix: Arc<Vec<f64>>,
    windows: Vec<Window>,
    pre_drop_counts: Option<[usize; 3]>,
}

/// Windows of `context_length` state rows over all frame columns, with the
/// next `horizon` values of column 0 as target.
pub fn make_windows(
    frame: &SeriesFrame,
    context_length: usize,
    horizon: usize,
    stride: usize,
) -> Result<WindowedDataset, DataError> {
    assert!(
        context_length >= 1 && horizon >= 1 && stride >= 1,
        "contract violation: context length, horizon and stride must be >= 1"
    );
    assert!(frame.num_columns() >= 1, "contract violation: frame has no columns");
    let len = frame.len();
    let need = context_length + horizon;
    if len < need {
        return Err(DataError::TooShort {
            required: need,
            actual: len,
        });
    }
    let n = frame.num_columns();
    let mut matrix = Vec::with_capacity(len * n);
    for r in 0..len {
        for c in 0..n {
            matrix.push(frame.get(r, c));
        }
    }
    let target_col = frame.column_at(0);
    let count = (len - need) / stride + 1;
    let windows = (0..count)
        .map(|i| {
            let start = i * stride;
            let t0 = start + context_length;
            Window {
                start,
                split: None,
                target: target_col[t0..t0 + horizon].to_vec(),
            }
        })
        .collect();
    Ok(WindowedDataset {
        context_length,
        horizon,
        num_features: n,
        feature_names: Arc::new(frame.column_names().iter().map(|s| s.to_string()).collect()),
        timestamps: Arc::new(frame.timestamps().to_vec()),
        matrix: Arc::new(matrix),
        windows,
        pre_drop_counts: None,
    })
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn window(&self, i: usize) -> &Window {
        &self.windows[i]
    }

    /// Row-major `[context_length, num_features]` state of window `i`.
    pub fn state(&self, i: usize) -> &[f64] {
        let s = self.windows[i].start * self.num_features;
        &self.matrix[s..s + self.context_length * self.num_features]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.windows[i].target
    }

    pub fn state_timestamps(&self, i: usize) -> &[NaiveDate] {
        let s = self.windows[i].start;
        &self.timestamps[s..s + self.context_length]
    }

    pub fn target_timestamps(&self, i: usize) -> &[NaiveDate] {
        let s = self.windows[i].start + self.context_length;
        &self.timestamps[s..s + self.horizon]
    }

    fn last_row(&self, w: &Window) -> usize {
        w.start + self.context_length + self.horizon - 1
    }

    /// Chronological train/validation/test tagging.
    ///
    /// Window counts per split are `round(f·W)` for train and validation with
    /// the rest in test. A train or validation window whose rows reach the
    /// first row of the next split is dropped.
    pub fn split(&self, fractions: SplitFractions) -> Result<WindowedDataset, DataError> {
        let f = fractions.0;
        if f.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidFractions(f));
        }
        let w = self.windows.len();
        let n_train = ((f[0] * w as f64).round() as usize).min(w);
        let n_val = ((f[1] * w as f64).round() as usize).min(w - n_train);
        let counts = [n_train, n_val, w - n_train - n_val];
        for (k, split) in Split::ALL.iter().enumerate() {
            if counts[k] == 0 {
                return Err(DataError::EmptySplit(*split));
            }
        }
        let val_first = self.windows[n_train].start;
        let test_first = self.windows[n_train + n_val].start;
        let mut windows = Vec::with_capacity(w);
        for (i, win) in self.windows.iter().enumerate() {
            let (split, limit) = if i < n_train {
                (Split::Train, Some(val_first))
            } else if i < n_train + n_val {
                (Split::Validation, Some(test_first))
            } else {
                (Split::Test, None)
            };
            if limit.is_some_and(|l| self.last_row(win) >= l) {
                continue;
            }
            windows.push(Window {
                split: Some(split),
                ..win.clone()
            });
        }
        for split in Split::ALL {
            if !windows.iter().any(|w| w.split == Some(split)) {
                return Err(DataError::EmptySplit(split));
            }
        }
        Ok(WindowedDataset {
            windows,
            pre_drop_counts: Some(counts),
            ..self.clone()
        })
    }

    /// Window counts per split before boundary dropping, if split.
    pub fn pre_drop_counts(&self) -> Option<[usize; 3]> {
        self.pre_drop_counts
    }

    pub fn count(&self, split: Split) -> usize {
        self.windows.iter().filter(|w| w.split == Some(split)).count()
    }

    /// Only the windows tagged `split`.
    pub fn part(&self, split: Split) -> WindowedDataset {
        WindowedDataset {
            windows: self
                .windows
                .iter()
                .filter(|w| w.split == Some(split))
                .cloned()
                .collect(),
            ..self.clone()
        }
    }

    /// Windows `[start, end)` of this dataset.
    pub fn subset(&self, start: usize, end: usize) -> WindowedDataset {
        WindowedDataset {
            windows: self.windows[start..end].to_vec(),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Days;

    pub(crate) fn frame(len: usize, cols: usize) -> SeriesFrame {
        let start = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
        let ts = (0..len).map(|i| start + Days::new(i as u64)).collect();
        let columns = (0..cols)
            .map(|c| (format!("c{c}"), (0..len).map(|r| (r * 10 + c) as f64).collect()))
            .collect();
        SeriesFrame::new(ts, columns).unwrap()
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(&frame(10, 2), 4, 2, 1).unwrap().len(), 5);
        assert_eq!(make_windows(&frame(6, 2), 4, 2, 1).unwrap().len(), 1);
        assert_eq!(make_windows(&frame(10, 2), 4, 2, 2).unwrap().len(), 3);
        match make_windows(&frame(5, 2), 4, 2, 1) {
            Err(DataError::TooShort { required, actual }) => assert_eq!((required, actual), (6, 5)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn state_and_target_layout() {
        let ds = make_windows(&frame(10, 2), 4, 2, 1).unwrap();
        assert_eq!(ds.state(1), &[10.0, 11.0, 20.0, 21.0, 30.0, 31.0, 40.0, 41.0]);
        assert_eq!(ds.target(1), &[50.0, 60.0]);
    }

    #[test]
    fn split_counts_and_drops() {
        // 100 windows with T + P = 2 so one window straddles each boundary.
        let ds = make_windows(&frame(101, 1), 1, 1, 1).unwrap();
        assert_eq!(ds.len(), 100);
        let s = ds.split(SplitFractions::default()).unwrap();
        assert_eq!(s.pre_drop_counts(), Some([70, 15, 15]));
        assert_eq!(s.count(Split::Train), 69);
        assert_eq!(s.count(Split::Validation), 14);
        assert_eq!(s.count(Split::Test), 15);
        assert!(!s.windows().iter().any(|w| w.start == 69 || w.start == 84));
    }

    #[test]
    fn degenerate_fractions_error() {
        let ds = make_windows(&frame(101, 1), 1, 1, 1).unwrap();
        assert!(matches!(
            ds.split(SplitFractions([1.0, 0.0, 0.0])),
            Err(DataError::EmptySplit(Split::Validation))
        ));
        assert!(matches!(
            ds.split(SplitFractions([0.5, 0.2, 0.2])),
            Err(DataError::InvalidFractions(_))
        ));
    }
}
