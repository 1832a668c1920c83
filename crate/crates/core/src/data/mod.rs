//! Loading, cleaning, scaling and splitting tabular attack-file data.

mod container;
mod prepare;
mod scaler;
mod split;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use container::{
    read_prepared, write_prepared, PreparedFile, PREPARED_MAGIC, PREPARED_VERSION,
};
pub use prepare::{prepare, PrepareOptions, Prepared};
pub use scaler::{apply_scaler, fit_scaler, ScalerKind, ScalerParams};
pub use split::{random_mask, split, split_indices, split_sizes, SplitMode};
pub use synthetic::{gen_synthetic, AttackKind, Scenario, SyntheticConfig, SyntheticTruth};

/// Why a column was removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    /// Timestamp, date or row-index column.
    Metadata,
    NanOnly,
    ZeroVariance,
}

impl DropReason {
    pub fn tag(self) -> u8 {
        match self {
            DropReason::Metadata => 0,
            DropReason::NanOnly => 1,
            DropReason::ZeroVariance => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(DropReason::Metadata),
            1 => Some(DropReason::NanOnly),
            2 => Some(DropReason::ZeroVariance),
            _ => None,
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::Metadata => "timestamp/index",
            DropReason::NanOnly => "nan-only",
            DropReason::ZeroVariance => "zero-variance",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub name: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    Feature,
    Metadata,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawColumn {
    pub name: String,
    pub role: ColumnRole,
    /// One entry per row; metadata columns are not parsed and hold `None`.
    pub values: Vec<Option<f64>>,
}

/// A parsed attack file before cleaning.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<RawColumn>,
    pub labels: Vec<u8>,
    pub label_column: String,
    /// Normalized raw label value to binary class, with the first raw spelling
    /// seen for each.
    pub label_mapping: BTreeMap<String, u8>,
    pub dropped: Vec<DroppedColumn>,
}

impl RawTable {
    pub fn num_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_columns(&self) -> impl Iterator<Item = &RawColumn> {
        self.columns
            .iter()
            .filter(|c| c.role == ColumnRole::Feature)
    }

    pub fn num_features(&self) -> usize {
        self.feature_columns().count()
    }

    /// Converts the feature columns to a dense dataset, dropping rows with any
    /// missing cell. Returns the dataset and the number of rows dropped.
    pub fn to_dataset(&self) -> Result<(Dataset, usize)> {
        let cols: Vec<&RawColumn> = self.feature_columns().collect();
        let names = cols.iter().map(|c| c.name.clone()).collect();
        let mut features = Vec::with_capacity(self.num_rows() * cols.len());
        let mut labels = Vec::with_capacity(self.num_rows());
        let mut dropped = 0;
        let mut row = Vec::with_capacity(cols.len());
        for (i, &label) in self.labels.iter().enumerate() {
            row.clear();
            row.extend(cols.iter().map(|c| c.values[i]));
            if row.iter().any(Option::is_none) {
                dropped += 1;
                continue;
            }
            features.extend(row.iter().map(|v| v.unwrap()));
            labels.push(label);
        }
        let mut ds = Dataset::new(features, labels, names)?;
        ds.dropped_columns = self.dropped.clone();
        Ok((ds, dropped))
    }
}

/// Options for [`load_csv`].
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub label_column: String,
    /// Normalized label values that mean "attack"; everything else is normal.
    pub positive_labels: Vec<String>,
    pub delimiter: u8,
    /// Extra column names to treat as metadata, on top of the built-in
    /// timestamp/date/time/index names.
    pub metadata_columns: Vec<String>,
}

impl CsvOptions {
    pub fn new(label_column: impl Into<String>) -> Self {
        Self {
            label_column: label_column.into(),
            positive_labels: vec!["attack".into(), "-1".into()],
            delimiter: b',',
            metadata_columns: Vec::new(),
        }
    }
}

/// Lowercases and strips everything but ASCII alphanumerics and `-`, so
/// spellings like `"A ttack"` or `" Attack "` collapse to `"attack"`.
/// Integral numbers are rendered without a fractional part.
pub fn normalize_label(raw: &str) -> String {
    let t = raw.trim();
    if let Ok(v) = t.parse::<f64>() {
        if v.fract() == 0.0 && v.abs() < 1e15 {
            return format!("{}", v as i64);
        }
    }
    t.chars()
        .filter(|c| c.is_ascii_alphanumeric() || *c == '-')
        .collect::<String>()
        .to_ascii_lowercase()
}

fn normalize_name(name: &str) -> String {
    name.chars()
        .filter(char::is_ascii_alphanumeric)
        .collect::<String>()
        .to_ascii_lowercase()
}

fn is_metadata_name(name: &str, extra: &[String]) -> bool {
    let n = normalize_name(name);
    matches!(
        n.as_str(),
        "" | "row" | "index" | "idx" | "date" | "time" | "datetime" | "timestamp" | "unnamed0"
    ) || n.starts_with("timestamp")
        || extra.iter().any(|e| normalize_name(e) == n)
}

fn parse_cell(raw: &str) -> std::result::Result<Option<f64>, ()> {
    let t = raw.trim();
    if t.is_empty() || ["nan", "na", "null", "none"].contains(&t.to_ascii_lowercase().as_str()) {
        return Ok(None);
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(()),
    }
}

/// Reads a delimited attack file with a header row.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<RawTable> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let parse_err = |line: u64, message: String| Error::Parse {
        path: display.clone(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => parse_err(1, format!("{other:?}")),
        })?;

    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(parse_err(1, "empty file or missing header row".into()));
    }
    if header.iter().all(|h| h.parse::<f64>().is_ok()) {
        return Err(parse_err(
            1,
            "missing header row (first line is numeric data)".into(),
        ));
    }
    let label_idx = header
        .iter()
        .position(|h| h == opts.label_column.trim())
        .ok_or_else(|| Error::MissingLabelColumn(opts.label_column.clone()))?;

    let positives: Vec<String> = opts
        .positive_labels
        .iter()
        .map(|p| normalize_label(p))
        .collect();
    let mut columns: Vec<RawColumn> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, name)| RawColumn {
            name: name.clone(),
            role: if is_metadata_name(name, &opts.metadata_columns) {
                ColumnRole::Metadata
            } else {
                ColumnRole::Feature
            },
            values: Vec::new(),
        })
        .collect();
    let mut labels = Vec::new();
    let mut label_mapping = BTreeMap::new();

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let norm = normalize_label(&record[label_idx]);
        if norm.is_empty() {
            return Err(parse_err(line, "empty label".into()));
        }
        let class = u8::from(positives.contains(&norm));
        label_mapping.entry(norm).or_insert(class);
        labels.push(class);

        let mut c = 0;
        for (i, field) in record.iter().enumerate() {
            if i == label_idx {
                continue;
            }
            let col = &mut columns[c];
            let value = match col.role {
                ColumnRole::Metadata => None,
                ColumnRole::Feature => parse_cell(field).map_err(|_| {
                    parse_err(
                        line,
                        format!(
                            "column `{}`: cannot parse `{}` as a number",
                            col.name,
                            field.trim()
                        ),
                    )
                })?,
            };
            col.values.push(value);
            c += 1;
        }
    }

    Ok(RawTable {
        columns,
        labels,
        label_column: opts.label_column.clone(),
        label_mapping,
        dropped: Vec::new(),
    })
}

/// Drops metadata, all-missing and constant columns, recording each drop.
///
/// Constancy ignores missing cells. Applying this twice is a no-op.
pub fn clean_columns(mut table: RawTable) -> RawTable {
    let mut kept = Vec::with_capacity(table.columns.len());
    for col in table.columns.drain(..) {
        let reason = if col.role == ColumnRole::Metadata {
            Some(DropReason::Metadata)
        } else {
            let mut present = col.values.iter().flatten();
            match present.next() {
                None => Some(DropReason::NanOnly),
                Some(first) => {
                    if present.all(|v| v == first) {
                        Some(DropReason::ZeroVariance)
                    } else {
                        None
                    }
                }
            }
        };
        match reason {
            Some(reason) => table.dropped.push(DroppedColumn {
                name: col.name,
                reason,
            }),
            None => kept.push(col),
        }
    }
    table.columns = kept;
    table
}

/// Dense, fully numeric feature matrix with binary labels (1 = attack).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<u8>,
    feature_names: Vec<String>,
    pub scaler: Option<ScalerParams>,
    /// Columns removed upstream, carried along for reporting.
    pub dropped_columns: Vec<DroppedColumn>,
}

impl Dataset {
    /// `features` is row-major with `feature_names.len()` columns.
    pub fn new(features: Vec<f64>, labels: Vec<u8>, feature_names: Vec<String>) -> Result<Self> {
        let d = feature_names.len();
        if d == 0 {
            return Err(Error::Data("dataset has no feature columns".into()));
        }
        if features.len() != labels.len() * d {
            return Err(Error::Data(format!(
                "{} feature values do not fill {} rows of {d} columns",
                features.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Data(format!("label {l} is not binary")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(
                "dataset contains missing or non-finite values".into(),
            ));
        }
        Ok(Self {
            features,
            labels,
            feature_names,
            scaler: None,
            dropped_columns: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn features_mut(&mut self) -> &mut [f64] {
        &mut self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.num_features();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.features
            .iter()
            .skip(j)
            .step_by(self.num_features())
            .copied()
    }

    /// `(normal, attack)` counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let attack = self.labels.iter().filter(|&&l| l == 1).count();
        (self.len() - attack, attack)
    }

    /// True when only one class is present.
    pub fn is_single_class(&self) -> bool {
        let (n, a) = self.class_counts();
        n == 0 || a == 0
    }

    /// Rows at `indices`, in that order. Metadata is carried over.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.num_features());
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            scaler: self.scaler.clone(),
            dropped_columns: self.dropped_columns.clone(),
        }
    }

    /// Removes the named columns, recording each with `reason`.
    pub fn drop_columns(&mut self, names: &[String], reason: DropReason) {
        let keep: Vec<usize> = (0..self.num_features())
            .filter(|&j| !names.contains(&self.feature_names[j]))
            .collect();
        if keep.len() == self.num_features() {
            return;
        }
        let d = self.num_features();
        let mut features = Vec::with_capacity(self.len() * keep.len());
        for row in self.features.chunks_exact(d) {
            features.extend(keep.iter().map(|&j| row[j]));
        }
        for name in names {
            if self.feature_names.contains(name) {
                self.dropped_columns.push(DroppedColumn {
                    name: name.clone(),
                    reason,
                });
            }
        }
        self.feature_names = keep
            .iter()
            .map(|&j| self.feature_names[j].clone())
            .collect();
        self.features = features;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn label_normalization() {
        assert_eq!(normalize_label(" A ttack"), "attack");
        assert_eq!(normalize_label("Normal"), "normal");
        assert_eq!(normalize_label("-1"), "-1");
        assert_eq!(normalize_label("-1.0"), "-1");
        assert_eq!(normalize_label("1"), "1");
    }

    #[test]
    fn toy_csv_labels() {
        let f =
            write_tmp("Timestamp,a,b,Normal/Attack\nt0,1,2,Normal\nt1,3,4,Attack\nt2,5,6,Normal\n");
        let t = load_csv(f.path(), &CsvOptions::new("Normal/Attack")).unwrap();
        assert_eq!(t.labels, vec![0, 1, 0]);
        assert_eq!(t.columns[0].role, ColumnRole::Metadata);
        assert_eq!(t.num_features(), 2);
        assert_eq!(t.label_mapping.get("attack"), Some(&1));
        assert_eq!(t.label_mapping.get("normal"), Some(&0));
    }

    #[test]
    fn numeric_label_scheme() {
        let f = write_tmp("x,y,label\n1,2,1\n3,4,-1\n5,6,1\n");
        let t = load_csv(f.path(), &CsvOptions::new("label")).unwrap();
        assert_eq!(t.labels, vec![0, 1, 0]);
    }

    #[test]
    fn missing_header_is_parse_error() {
        let f = write_tmp("1,2,3\n4,5,6\n");
        let err = load_csv(f.path(), &CsvOptions::new("label")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn missing_label_column() {
        let f = write_tmp("a,b\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), &CsvOptions::new("label")),
            Err(Error::MissingLabelColumn(_))
        ));
    }

    #[test]
    fn bad_rows_report_line_numbers() {
        let f = write_tmp("a,b,label\n1,2,Normal\n1,oops,Normal\n");
        match load_csv(f.path(), &CsvOptions::new("label")).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("oops"));
            }
            e => panic!("unexpected {e}"),
        }
        let f = write_tmp("a,b,label\n1,2,Normal\n1,Normal\n");
        assert!(matches!(
            load_csv(f.path(), &CsvOptions::new("label")),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn cleaning_drops_and_records() {
        let f = write_tmp(
            "Row,Date,Time,a,const,empty,b,label\n\
             1,d,t,1.0,7,,2,Normal\n\
             2,d,t,2.0,7,NaN,,Attack\n\
             3,d,t,3.0,7,,4,Normal\n",
        );
        let t = clean_columns(load_csv(f.path(), &CsvOptions::new("label")).unwrap());
        let names: Vec<_> = t.feature_columns().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["a", "b"]);
        let reasons: Vec<_> = t
            .dropped
            .iter()
            .map(|d| (d.name.as_str(), d.reason))
            .collect();
        assert_eq!(
            reasons,
            vec![
                ("Row", DropReason::Metadata),
                ("Date", DropReason::Metadata),
                ("Time", DropReason::Metadata),
                ("const", DropReason::ZeroVariance),
                ("empty", DropReason::NanOnly),
            ]
        );
        let again = clean_columns(t.clone());
        assert_eq!(again, t);

        let (ds, dropped_rows) = t.to_dataset().unwrap();
        assert_eq!(dropped_rows, 1);
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.row(1), &[3.0, 4.0]);
        assert_eq!(ds.labels(), &[0, 0]);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![1.0, 2.0], vec![0], vec!["a".into()]).is_err());
        assert!(Dataset::new(vec![1.0], vec![2], vec!["a".into()]).is_err());
        assert!(Dataset::new(vec![f64::NAN], vec![0], vec!["a".into()]).is_err());
        let ds = Dataset::new(vec![1.0, 2.0], vec![0, 0], vec!["a".into()]).unwrap();
        assert!(ds.is_single_class());
    }
}
