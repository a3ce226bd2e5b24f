use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Group, Instance, Label};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("schema error: column `{0}` not found in header")]
    MissingColumn(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("line {line}: column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: column `{column}`: unknown value `{value}`")]
    UnknownValue {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: {source}")]
    Read {
        line: u64,
        #[source]
        source: csv::Error,
    },
}

/// How raw CSV columns map onto instances.
///
/// Every column other than the sensitive column, the label column and the
/// `ignore` list is a numeric feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub sensitive_column: String,
    pub label_column: String,
    pub favorable_value: String,
    pub privileged_value: String,
    /// When set, label values other than these two are rejected.
    #[serde(default)]
    pub unfavorable_value: Option<String>,
    /// When set, sensitive values other than these two are rejected.
    #[serde(default)]
    pub unprivileged_value: Option<String>,
    #[serde(default)]
    pub ignore: Vec<String>,
    /// Fail on the first malformed row instead of skipping it.
    #[serde(default = "default_strict")]
    pub strict: bool,
}

fn default_strict() -> bool {
    true
}

impl CsvSchema {
    pub fn new(
        sensitive_column: impl Into<String>,
        label_column: impl Into<String>,
        favorable_value: impl Into<String>,
        privileged_value: impl Into<String>,
    ) -> Self {
        Self {
            sensitive_column: sensitive_column.into(),
            label_column: label_column.into(),
            favorable_value: favorable_value.into(),
            privileged_value: privileged_value.into(),
            unfavorable_value: None,
            unprivileged_value: None,
            ignore: Vec::new(),
            strict: true,
        }
    }
}

/// Streaming CSV reader yielding instances in file order.
pub struct CsvStream {
    reader: csv::Reader<File>,
    schema: CsvSchema,
    sensitive_idx: usize,
    label_idx: usize,
    feature_idx: Vec<usize>,
    feature_names: Vec<String>,
    seq: u64,
    record: csv::StringRecord,
}

/// Opens `path` and validates its header against `schema`.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<CsvStream, CsvError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| CsvError::Open {
            path: path.to_path_buf(),
            source,
        })?;
    let header = reader
        .headers()
        .map_err(|source| CsvError::Read { line: 1, source })?
        .clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CsvError::MissingColumn(name.to_string()))
    };
    let sensitive_idx = find(&schema.sensitive_column)?;
    let label_idx = find(&schema.label_column)?;
    for name in &schema.ignore {
        find(name)?;
    }
    let (feature_idx, feature_names): (Vec<usize>, Vec<String>) = header
        .iter()
        .enumerate()
        .filter(|(i, name)| {
            *i != sensitive_idx && *i != label_idx && !schema.ignore.iter().any(|n| n == name)
        })
        .map(|(i, name)| (i, name.to_string()))
        .unzip();
    if feature_idx.is_empty() {
        return Err(CsvError::Schema("no feature columns left".into()));
    }
    Ok(CsvStream {
        reader,
        schema: schema.clone(),
        sensitive_idx,
        label_idx,
        feature_idx,
        feature_names,
        seq: 0,
        record: csv::StringRecord::new(),
    })
}

impl CsvStream {
    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    fn parse_record(&self, line: u64) -> Result<Instance, CsvError> {
        let rec = &self.record;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let s = &self.schema;

        let raw_label = field(self.label_idx);
        let label = if raw_label == s.favorable_value {
            Label::Favorable
        } else if s.unfavorable_value.as_deref().is_none_or(|u| u == raw_label) {
            Label::Unfavorable
        } else {
            return Err(CsvError::UnknownValue {
                line,
                column: s.label_column.clone(),
                value: raw_label.to_string(),
            });
        };

        let raw_sensitive = field(self.sensitive_idx);
        let sensitive = if raw_sensitive == s.privileged_value {
            Group::Privileged
        } else if s
            .unprivileged_value
            .as_deref()
            .is_none_or(|u| u == raw_sensitive)
        {
            Group::Unprivileged
        } else {
            return Err(CsvError::UnknownValue {
                line,
                column: s.sensitive_column.clone(),
                value: raw_sensitive.to_string(),
            });
        };

        let mut features = Vec::with_capacity(self.feature_idx.len());
        for (&i, name) in self.feature_idx.iter().zip(&self.feature_names) {
            let raw = field(i);
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => features.push(v),
                _ => {
                    return Err(CsvError::Parse {
                        line,
                        column: name.clone(),
                        value: raw.to_string(),
                    })
                }
            }
        }
        Ok(Instance::new(features, sensitive, label, self.seq))
    }
}

impl Iterator for CsvStream {
    type Item = Result<Instance, CsvError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let mut record = std::mem::take(&mut self.record);
            let read = self.reader.read_record(&mut record);
            self.record = record;
            let line = self.record.position().map(|p| p.line()).unwrap_or(0);
            let parsed = match read {
                Ok(false) => return None,
                Ok(true) => self.parse_record(line),
                Err(source) => Err(CsvError::Read { line, source }),
            };
            match parsed {
                Ok(inst) => {
                    self.seq += 1;
                    return Some(Ok(inst));
                }
                Err(e) if self.schema.strict => return Some(Err(e)),
                Err(e) => log::warn!("skipping row: {e}"),
            }
        }
    }
}
