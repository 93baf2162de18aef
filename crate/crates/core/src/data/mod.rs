//! Price series ingestion, technical indicators, synthetic regimes and
//! sliding-window datasets.

mod csv_io;
mod features;
mod frame;
mod indicators;
mod synth;
mod windows;

use thiserror::Error;

pub use csv_io::{load_csv, parse_csv, CsvSchema};
pub use features::{build_features, standardize_columns, FeatureConfig, FEATURE_NAMES};
pub use frame::SeriesFrame;
pub use indicators::{bollinger, ema, forward_fill, log_returns, macd, rsi, Bollinger, Macd};
pub use synth::{preset, synth_generate, Regime, SynthSpec, Synthesized, PRESET_NAMES};
pub use windows::{make_windows, Split, SplitFractions, Window, WindowedDataset};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("duplicate timestamp {0}")]
    DuplicateTimestamp(String),
    #[error("timestamps not strictly increasing at row {0}")]
    NonMonotonic(usize),
    #[error("column {name} has {actual} rows, expected {expected}")]
    ColumnLength {
        name: String,
        expected: usize,
        actual: usize,
    },
    #[error("non-positive price {value} at index {index}")]
    NonPositivePrice { index: usize, value: f64 },
    #[error("series needs at least {required} values, got {actual}")]
    TooShort { required: usize, actual: usize },
    #[error("leading gap: no earlier value to carry forward")]
    LeadingGap,
    #[error("invalid split fractions {0:?}: each must be >= 0 and they must sum to 1")]
    InvalidFractions([f64; 3]),
    #[error("{0} split is empty")]
    EmptySplit(Split),
    #[error("invalid synthetic spec: {0}")]
    InvalidSynth(String),
    #[error("unknown dataset preset {0:?}")]
    UnknownPreset(String),
}
