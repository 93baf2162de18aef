use serde::{Deserialize, Serialize};

use super::{bollinger, log_returns, macd, rsi, DataError, SeriesFrame};

pub const FEATURE_NAMES: [&str; 8] = [
    "target",
    "rsi",
    "macd",
    "macd_signal",
    "macd_hist",
    "bb_pctb",
    "bb_width",
    "activity",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub rsi_period: usize,
    pub macd_fast: usize,
    pub macd_slow: usize,
    pub macd_signal: usize,
    pub bollinger_period: usize,
    pub bollinger_k: f64,
    /// Leading fraction of rows used for standardization statistics.
    pub train_fraction: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            rsi_period: 14,
            macd_fast: 12,
            macd_slow: 26,
            macd_signal: 9,
            bollinger_period: 20,
            bollinger_k: 2.0,
            train_fraction: 0.7,
        }
    }
}

/// Turns an OHLCV frame into a model-ready feature frame.
///
/// Column 0 is the standardized log return of close. The remaining columns
/// are scale-free indicator transforms; `activity` is the log volume change
/// when volume exists, else the high-low range relative to close, and is
/// omitted when neither is available. Columns outside OHLCV are appended.
/// Indicator warm-up rows are dropped, then every column is standardized
/// with statistics from the leading `train_fraction` of the remaining rows.
pub fn build_features(frame: &SeriesFrame, cfg: &FeatureConfig) -> Result<SeriesFrame, DataError> {
    let close = frame
        .column("close")
        .ok_or_else(|| DataError::Schema("missing required column \"close\"".into()))?;
    let warmup = cfg.rsi_period.max(cfg.bollinger_period - 1).max(cfg.macd_slow).max(1);
    if close.len() <= warmup + 1 {
        return Err(DataError::TooShort {
            required: warmup + 2,
            actual: close.len(),
        });
    }
    let returns = log_returns(close)?;
    let r = rsi(close, cfg.rsi_period);
    let m = macd(close, cfg.macd_fast, cfg.macd_slow, cfg.macd_signal);
    let b = bollinger(close, cfg.bollinger_period, cfg.bollinger_k);

    let activity: Option<Vec<f64>> = if let Some(vol) = frame.column("volume") {
        let mut out = vec![0.0; vol.len()];
        for t in 1..vol.len() {
            if vol[t] > 0.0 && vol[t - 1] > 0.0 {
                out[t] = (vol[t] / vol[t - 1]).ln();
            }
        }
        Some(out)
    } else if let (Some(hi), Some(lo)) = (frame.column("high"), frame.column("low")) {
        Some(
            hi.iter()
                .zip(lo)
                .zip(close)
                .map(|((h, l), c)| (h - l) / c)
                .collect(),
        )
    } else {
        None
    };

    let rows = warmup..close.len();
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    let mut push = |name: &str, f: &dyn Fn(usize) -> f64| {
        columns.push((name.to_string(), rows.clone().map(f).collect()));
    };
    push(FEATURE_NAMES[0], &|t| returns[t - 1]);
    push(FEATURE_NAMES[1], &|t| r[t].expect("past warm-up") / 50.0 - 1.0);
    push(FEATURE_NAMES[2], &|t| m.macd[t] / close[t]);
    push(FEATURE_NAMES[3], &|t| m.signal[t] / close[t]);
    push(FEATURE_NAMES[4], &|t| m.histogram[t] / close[t]);
    push(FEATURE_NAMES[5], &|t| {
        let (u, l) = (b.upper[t].unwrap(), b.lower[t].unwrap());
        if u > l {
            (close[t] - l) / (u - l) - 0.5
        } else {
            0.0
        }
    });
    push(FEATURE_NAMES[6], &|t| {
        (b.upper[t].unwrap() - b.lower[t].unwrap()) / b.middle[t].unwrap()
    });
    if let Some(a) = &activity {
        push(FEATURE_NAMES[7], &|t| a[t]);
    }
    const OHLCV: [&str; 5] = ["open", "low", "high", "close", "volume"];
    for (name, col) in frame.columns() {
        if !OHLCV.contains(&name.as_str()) {
            push(name, &|t| col[t]);
        }
    }

    let n = rows.len();
    let fit = ((n as f64 * cfg.train_fraction).round() as usize).clamp(1, n);
    for (_, col) in &mut columns {
        standardize(col, fit);
    }
    SeriesFrame::new(frame.timestamps()[rows].to_vec(), columns)
}

/// Standardizes in place with population mean and std of `col[..fit]`.
/// A zero std leaves the scale unchanged.
/// Every column shifted and scaled by the mean and population std of its
/// leading `train_fraction` rows.
pub fn standardize_columns(frame: &SeriesFrame, train_fraction: f64) -> Result<SeriesFrame, DataError> {
    assert!(
        train_fraction > 0.0 && train_fraction <= 1.0,
        "contract violation: train fraction {train_fraction} outside (0, 1]"
    );
    let fit = ((frame.len() as f64 * train_fraction).round() as usize).clamp(1, frame.len().max(1));
    let columns = frame
        .columns()
        .iter()
        .map(|(name, col)| {
            let mut c = col.clone();
            standardize(&mut c, fit);
            (name.clone(), c)
        })
        .collect();
    SeriesFrame::new(frame.timestamps().to_vec(), columns)
}

pub(crate) fn standardize(col: &mut [f64], fit: usize) {
    let head = &col[..fit];
    let mean = head.iter().sum::<f64>() / fit as f64;
    let var = head.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / fit as f64;
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    for v in col.iter_mut() {
        *v = (*v - mean) / sd;
    }
}
