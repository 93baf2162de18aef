use std::path::Path;

use ftrl_core::data::{
    build_features, load_csv, make_windows, preset, standardize_columns, synth_generate, CsvSchema, SplitFractions,
    WindowedDataset, PRESET_NAMES,
};

use crate::{DataConfig, HarnessError};

/// Windows for `source`: a synthetic preset, or a CSV file. CSV files with
/// a `close` column get the indicator features; any other frame is used
/// column for column with standardization fitted on the training share.
pub fn load_dataset(
    source: &str,
    cfg: &DataConfig,
    context_length: usize,
    horizon: usize,
) -> Result<WindowedDataset, HarnessError> {
    let frame = if PRESET_NAMES.contains(&source) {
        let spec = preset(source)?.scaled(cfg.length_scale);
        let synth = synth_generate(&spec)?;
        for w in &synth.warnings {
            eprintln!("warning: {source}: {w}");
        }
        standardize_columns(&synth.frame, cfg.fractions[0])?
    } else if Path::new(source).is_file() {
        let raw = load_csv(source, &CsvSchema::default())?;
        if raw.column("close").is_some() {
            build_features(&raw, &cfg.features)?
        } else {
            standardize_columns(&raw, cfg.fractions[0])?
        }
    } else {
        return Err(HarnessError::InvalidArgument(format!(
            "data source {source:?} is neither a preset ({}) nor a readable file",
            PRESET_NAMES.join(", ")
        )));
    };
    let windows = make_windows(&frame, context_length, horizon, cfg.stride)?;
    Ok(windows.split(SplitFractions(cfg.fractions))?)
}
