use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;

use super::{forward_fill, DataError, SeriesFrame};

/// Which CSV columns are read. Column names are matched case-insensitively.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub timestamp: String,
    pub required: Vec<String>,
    pub optional: Vec<String>,
    /// Slowly refreshing columns whose empty cells are forward-filled.
    pub forward_fill: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            required: vec!["close".into()],
            optional: ["open", "low", "high", "volume"].map(String::from).to_vec(),
            forward_fill: Vec::new(),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<SeriesFrame, DataError> {
    let file = std::fs::File::open(path)?;
    parse_csv(file, schema)
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .or_else(|| s.get(..10).and_then(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").ok()))
}

pub fn parse_csv(reader: impl Read, schema: &CsvSchema) -> Result<SeriesFrame, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| DataError::Schema(e.to_string()))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(DataError::Schema("missing header row".into()));
    }
    let find = |name: &str| headers.iter().position(|h| h == &name.to_ascii_lowercase());
    let ts_col = find(&schema.timestamp)
        .ok_or_else(|| DataError::Schema(format!("missing required column {:?}", schema.timestamp)))?;

    // (name, index, gaps allowed)
    let mut wanted: Vec<(String, usize, bool)> = Vec::new();
    for name in &schema.required {
        let idx = find(name)
            .ok_or_else(|| DataError::Schema(format!("missing required column {name:?}")))?;
        wanted.push((name.to_ascii_lowercase(), idx, false));
    }
    for name in &schema.optional {
        if let Some(idx) = find(name) {
            wanted.push((name.to_ascii_lowercase(), idx, false));
        }
    }
    for name in &schema.forward_fill {
        let idx = find(name)
            .ok_or_else(|| DataError::Schema(format!("missing forward-fill column {name:?}")))?;
        wanted.push((name.to_ascii_lowercase(), idx, true));
    }

    let mut rows: Vec<(NaiveDate, Vec<Option<f64>>)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| DataError::Malformed {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");
        let ts = parse_date(field(ts_col)).ok_or_else(|| DataError::Malformed {
            line,
            message: format!("bad timestamp {:?}", field(ts_col)),
        })?;
        let mut values = Vec::with_capacity(wanted.len());
        for (name, idx, gaps) in &wanted {
            let raw = field(*idx);
            if raw.is_empty() && *gaps {
                values.push(None);
                continue;
            }
            let v: f64 = raw.parse().map_err(|_| DataError::Malformed {
                line,
                message: format!("column {name}: cannot parse {raw:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(DataError::Malformed {
                    line,
                    message: format!("column {name}: non-finite value {raw:?}"),
                });
            }
            values.push(Some(v));
        }
        rows.push((ts, values));
    }
    if rows.is_empty() {
        return Err(DataError::Schema("no data rows".into()));
    }
    rows.sort_by_key(|(ts, _)| *ts);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(DataError::DuplicateTimestamp(w[0].0.to_string()));
    }
    let timestamps = rows.iter().map(|(ts, _)| *ts).collect();
    let mut columns = Vec::with_capacity(wanted.len());
    for (k, (name, _, gaps)) in wanted.iter().enumerate() {
        let raw: Vec<Option<f64>> = rows.iter().map(|(_, v)| v[k]).collect();
        let col = if *gaps {
            forward_fill(&raw)?
        } else {
            raw.into_iter().map(|v| v.expect("required cell")).collect()
        };
        columns.push((name.clone(), col));
    }
    SeriesFrame::new(timestamps, columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const AAPL: &str = "\
Date,Open,Low,High,Close,Volume
2005-12-05,2.17,2.15,2.19,2.16,5.84e8
2005-12-06,2.23,2.21,2.25,2.23,8.57e8
2005-12-07,2.24,2.20,2.24,2.23,6.79e8
2005-12-08,2.21,2.19,2.23,2.23,7.90e8
2005-12-09,2.24,2.21,2.25,2.24,5.55e8
2005-12-12,2.26,2.25,2.27,2.26,5.25e8
2005-12-13,2.25,2.24,2.27,2.26,4.94e8
";

    fn date_schema() -> CsvSchema {
        CsvSchema {
            timestamp: "date".into(),
            ..CsvSchema::default()
        }
    }

    #[test]
    fn parses_the_aapl_snippet() {
        let frame = parse_csv(AAPL.as_bytes(), &date_schema()).unwrap();
        assert_eq!(frame.len(), 7);
        assert_eq!(frame.column("close").unwrap()[0], 2.16);
        assert_eq!(frame.column("volume").unwrap()[1], 8.57e8);
        assert_eq!(frame.column_names(), vec!["close", "open", "low", "high", "volume"]);
    }

    #[test]
    fn empty_file_is_a_schema_error() {
        assert!(matches!(
            parse_csv("".as_bytes(), &CsvSchema::default()),
            Err(DataError::Schema(_))
        ));
        assert!(matches!(
            parse_csv("timestamp,close\n".as_bytes(), &CsvSchema::default()),
            Err(DataError::Schema(_))
        ));
    }

    #[test]
    fn missing_close_is_a_schema_error() {
        let err = parse_csv("timestamp,open\n2020-01-01,1\n".as_bytes(), &CsvSchema::default())
            .unwrap_err();
        assert!(err.to_string().contains("close"), "{err}");
    }

    #[test]
    fn duplicate_timestamp_is_named() {
        let text = "timestamp,close\n2020-01-02,1\n2020-01-01,2\n2020-01-02,3\n";
        match parse_csv(text.as_bytes(), &CsvSchema::default()) {
            Err(DataError::DuplicateTimestamp(ts)) => assert_eq!(ts, "2020-01-02"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "timestamp,close\n2020-01-01,1\n2020-01-02,abc\n";
        match parse_csv(text.as_bytes(), &CsvSchema::default()) {
            Err(DataError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rows_are_sorted_and_gaps_forward_filled() {
        let text = "timestamp,close,esg\n2020-01-03,3,\n2020-01-01,1,50\n2020-01-02,2,\n";
        let schema = CsvSchema {
            forward_fill: vec!["esg".into()],
            ..CsvSchema::default()
        };
        let frame = parse_csv(text.as_bytes(), &schema).unwrap();
        assert_eq!(frame.column("close").unwrap(), &[1.0, 2.0, 3.0]);
        assert_eq!(frame.column("esg").unwrap(), &[50.0, 50.0, 50.0]);
    }
}
