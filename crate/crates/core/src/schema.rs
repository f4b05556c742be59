//! Dataset schemas, model configuration and identifier rules.
//!
//! Every identifier that ends up in generated SQL must match
//! `[A-Za-z][A-Za-z0-9_]*`. Columns with other names have to be ingested
//! under a sanitized alias.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::binning::Binning;
use crate::error::{Error, Result};

/// Longest identifier accepted anywhere in generated SQL. This is the
/// smallest limit among the shipped dialects (PostgreSQL truncates at 63).
pub const MAX_IDENTIFIER_LEN: usize = 63;

/// Column names used internally by the generated statements. Features and
/// targets may not use them.
pub const RESERVED_COLUMNS: &[&str] = &[
    "row_key",
    "cnt",
    "max_cnt",
    "best_class",
    "predicted",
    "matched",
    "proportion",
    "group_rows",
    "truth",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Categorical,
    Numeric,
}

impl ColumnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Categorical => "categorical",
            ColumnKind::Numeric => "numeric",
        }
    }
}

impl FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "categorical" => Ok(ColumnKind::Categorical),
            "numeric" => Ok(ColumnKind::Numeric),
            _ => Err(Error::Schema(format!("unknown column kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    #[default]
    Feature,
    Target,
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub role: ColumnRole,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind, role: ColumnRole) -> Self {
        ColumnSpec {
            name: name.into(),
            kind,
            role,
        }
    }

    pub fn feature(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self::new(name, kind, ColumnRole::Feature)
    }

    pub fn target(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self::new(name, kind, ColumnRole::Target)
    }
}

/// A table as the pipeline sees it.
///
/// `key_column`, when set, names a unique integer column that identifies
/// rows stably. Without it the dialect's implicit row id is used.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSchema {
    pub table_name: String,
    pub columns: Vec<ColumnSpec>,
    pub key_column: Option<String>,
    pub row_count_hint: Option<u64>,
}

impl TableSchema {
    pub fn new(table_name: impl Into<String>, columns: Vec<ColumnSpec>) -> Self {
        TableSchema {
            table_name: table_name.into(),
            columns,
            key_column: None,
            row_count_hint: None,
        }
    }

    pub fn with_key(mut self, key: impl Into<String>) -> Self {
        self.key_column = Some(key.into());
        self
    }

    /// Looks a column up by name, ignoring ASCII case like SQL does.
    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .or_else(|| self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name)))
    }

    pub fn targets(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| c.role == ColumnRole::Target)
    }

    pub fn features(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| c.role == ColumnRole::Feature)
    }

    /// Checks identifier syntax and name uniqueness.
    pub fn validate(&self) -> Result<()> {
        validate_identifier(&self.table_name)?;
        for (i, c) in self.columns.iter().enumerate() {
            validate_identifier(&c.name)?;
            if self.columns[..i]
                .iter()
                .any(|o| o.name.eq_ignore_ascii_case(&c.name))
            {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        if let Some(key) = &self.key_column {
            validate_identifier(key)?;
            if self.columns.iter().any(|c| c.name.eq_ignore_ascii_case(key)) {
                return Err(Error::Schema(format!(
                    "key column `{key}` must not also be a data column"
                )));
            }
        }
        Ok(())
    }
}

/// User-facing model parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub model_id: String,
    pub features: Vec<String>,
    pub target: String,
    pub binning: Binning,
    pub bins: u32,
}

/// A [`ModelConfig`] that has been checked against its training table.
///
/// Renderers only accept this type, so unvalidated configurations cannot
/// reach SQL generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    config: ModelConfig,
    feature_kinds: Vec<ColumnKind>,
    source_table: String,
    key_column: Option<String>,
}

impl ValidatedConfig {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn model_id(&self) -> &str {
        &self.config.model_id
    }

    pub fn features(&self) -> &[String] {
        &self.config.features
    }

    pub fn target(&self) -> &str {
        &self.config.target
    }

    pub fn binning(&self) -> Binning {
        self.config.binning
    }

    pub fn bins(&self) -> u32 {
        self.config.bins
    }

    pub fn feature_kinds(&self) -> &[ColumnKind] {
        &self.feature_kinds
    }

    pub fn source_table(&self) -> &str {
        &self.source_table
    }

    pub fn key_column(&self) -> Option<&str> {
        self.key_column.as_deref()
    }

    /// `(position, name, kind)` for every feature.
    pub fn feature_columns(&self) -> impl Iterator<Item = (usize, &str, ColumnKind)> {
        self.config
            .features
            .iter()
            .zip(&self.feature_kinds)
            .enumerate()
            .map(|(i, (n, k))| (i, n.as_str(), *k))
    }

    pub fn numeric_features(&self) -> impl Iterator<Item = (usize, &str)> {
        self.feature_columns()
            .filter(|(_, _, k)| *k == ColumnKind::Numeric)
            .map(|(i, n, _)| (i, n))
    }

    pub fn table_name(&self, id: TemplateId) -> String {
        table_name(&self.config.model_id, id.into())
    }

    /// The schema this configuration was validated against, reduced to the
    /// columns the model uses.
    pub fn training_schema(&self) -> TableSchema {
        let mut columns: Vec<ColumnSpec> = self
            .feature_columns()
            .map(|(_, n, k)| ColumnSpec::feature(n, k))
            .collect();
        columns.push(ColumnSpec::target(&self.config.target, ColumnKind::Categorical));
        TableSchema {
            table_name: self.source_table.clone(),
            columns,
            key_column: self.key_column.clone(),
            row_count_hint: None,
        }
    }
}

pub fn validate_identifier(name: &str) -> Result<()> {
    let mut chars = name.chars();
    match chars.next() {
        None => return Err(Error::BadIdentifier(name.into(), "empty")),
        Some(c) if !c.is_ascii_alphabetic() => {
            return Err(Error::BadIdentifier(name.into(), "must start with a letter"))
        }
        _ => {}
    }
    if !chars.all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(Error::BadIdentifier(
            name.into(),
            "only letters, digits and `_` are allowed",
        ));
    }
    if name.len() > MAX_IDENTIFIER_LEN {
        return Err(Error::BadIdentifier(name.into(), "too long"));
    }
    Ok(())
}

fn is_reserved(name: &str) -> bool {
    RESERVED_COLUMNS.iter().any(|r| r.eq_ignore_ascii_case(name))
}

/// Checks `config` against the training table `schema`.
///
/// Column names are matched case-insensitively and rewritten to the
/// schema's spelling, so validating an already validated configuration
/// returns it unchanged.
pub fn validate_config(config: &ModelConfig, schema: &TableSchema) -> Result<ValidatedConfig> {
    schema.validate()?;
    validate_identifier(&config.model_id)?;
    if config.model_id.len() + longest_suffix_len() > MAX_IDENTIFIER_LEN {
        return Err(Error::BadIdentifier(
            config.model_id.clone(),
            "too long once a table suffix is appended",
        ));
    }
    if config.bins < 1 {
        return Err(Error::BadBinCount(config.bins as i64));
    }
    if config.features.is_empty() {
        return Err(Error::NoFeatures);
    }

    let resolve = |name: &str| -> Result<&ColumnSpec> {
        validate_identifier(name)?;
        if is_reserved(name) {
            return Err(Error::BadIdentifier(name.into(), "reserved column name"));
        }
        schema
            .column(name)
            .ok_or_else(|| Error::UnknownColumn(name.into()))
    };

    let target = resolve(&config.target)?.name.clone();
    let mut features = Vec::with_capacity(config.features.len());
    let mut kinds = Vec::with_capacity(config.features.len());
    for name in &config.features {
        let col = resolve(name)?;
        if col.name == target {
            return Err(Error::TargetIsFeature(col.name.clone()));
        }
        if features.contains(&col.name) {
            return Err(Error::DuplicateFeature(col.name.clone()));
        }
        features.push(col.name.clone());
        kinds.push(col.kind);
    }

    Ok(ValidatedConfig {
        config: ModelConfig {
            model_id: config.model_id.clone(),
            features,
            target,
            binning: config.binning,
            bins: config.bins,
        },
        feature_kinds: kinds,
        source_table: schema.table_name.clone(),
        key_column: schema.key_column.clone(),
    })
}

/// The six pipeline steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateId {
    /// Quantized training table.
    Qt,
    /// Quantization metadata.
    Qmt,
    /// Contingency (model) table.
    M,
    /// Quantized evaluation table.
    Qe,
    /// Index over the quantized evaluation features.
    QeIx,
    /// Prediction table.
    P,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::Qt,
        TemplateId::Qmt,
        TemplateId::M,
        TemplateId::Qe,
        TemplateId::QeIx,
        TemplateId::P,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Qt => "QT",
            TemplateId::Qmt => "QMT",
            TemplateId::M => "M",
            TemplateId::Qe => "QE",
            TemplateId::QeIx => "QE_IX",
            TemplateId::P => "P",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifies a rendered statement: one of the six templates or an
/// auxiliary query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StatementId {
    Template(TemplateId),
    /// One-row table holding the majority class and the model catalog.
    Maj,
    Rank,
    Export1d,
    Export2d,
    Evaluate,
}

impl StatementId {
    pub fn as_str(self) -> &'static str {
        match self {
            StatementId::Template(t) => t.as_str(),
            StatementId::Maj => "MAJ",
            StatementId::Rank => "RANK",
            StatementId::Export1d => "EXPORT1D",
            StatementId::Export2d => "EXPORT2D",
            StatementId::Evaluate => "EVAL",
        }
    }

    /// Ids whose statement materializes a `<model_id>_<id>` table.
    pub const TABLES: [StatementId; 6] = [
        StatementId::Template(TemplateId::Qt),
        StatementId::Template(TemplateId::Qmt),
        StatementId::Template(TemplateId::M),
        StatementId::Maj,
        StatementId::Template(TemplateId::Qe),
        StatementId::Template(TemplateId::P),
    ];
}

impl From<TemplateId> for StatementId {
    fn from(t: TemplateId) -> Self {
        StatementId::Template(t)
    }
}

impl fmt::Display for StatementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StatementId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let id = match s.to_ascii_uppercase().as_str() {
            "QT" => TemplateId::Qt.into(),
            "QMT" => TemplateId::Qmt.into(),
            "M" => TemplateId::M.into(),
            "QE" => TemplateId::Qe.into(),
            "QE_IX" => TemplateId::QeIx.into(),
            "P" => TemplateId::P.into(),
            "MAJ" => StatementId::Maj,
            "RANK" => StatementId::Rank,
            "EXPORT1D" => StatementId::Export1d,
            "EXPORT2D" => StatementId::Export2d,
            "EVAL" => StatementId::Evaluate,
            _ => return Err(Error::Template(format!("unknown statement id `{s}`"))),
        };
        Ok(id)
    }
}

fn longest_suffix_len() -> usize {
    TemplateId::ALL
        .iter()
        .map(|t| t.as_str().len() + 1)
        .chain(std::iter::once(StatementId::Maj.as_str().len() + 1))
        .max()
        .unwrap_or(0)
}

/// `<model_id>_<id>`.
pub fn table_name(model_id: &str, id: StatementId) -> String {
    format!("{model_id}_{}", id.as_str())
}

/// Splits a pipeline table or index name back into `(model_id, id)`.
pub fn parse_table_name(name: &str) -> Option<(&str, StatementId)> {
    // Longest suffix first so `_QE_IX` wins over `_QE`-less readings.
    const SUFFIXES: [(&str, StatementId); 7] = [
        ("_QE_IX", StatementId::Template(TemplateId::QeIx)),
        ("_QMT", StatementId::Template(TemplateId::Qmt)),
        ("_MAJ", StatementId::Maj),
        ("_QT", StatementId::Template(TemplateId::Qt)),
        ("_QE", StatementId::Template(TemplateId::Qe)),
        ("_M", StatementId::Template(TemplateId::M)),
        ("_P", StatementId::Template(TemplateId::P)),
    ];
    SUFFIXES.iter().find_map(|(suffix, id)| {
        name.strip_suffix(suffix)
            .filter(|model| !model.is_empty())
            .map(|model| (model, *id))
    })
}
