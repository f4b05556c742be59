//! In-database multidimensional histogram (MDH) classification.
//!
//! Training and prediction are expressed as a short chain of generated SQL
//! statements. Each statement materializes one table named
//! `<model_id>_<template_id>`, so the data never leaves the database; only
//! small aggregates (row counts, mutual-information contingency counts,
//! accuracy tallies) are read back by the client.
//!
//! The crate is organized by pipeline stage:
//!
//! * [`schema`] – column and model configuration, identifier rules.
//! * [`binning`] – equal quantized rank binning (EQRB) and equal width
//!   binning (EWB), both as plain functions and as SQL fragments.
//! * [`sqlgen`] – dialects and the template renderer for every pipeline step.
//! * [`executor`] – runs rendered pipelines over a [`DbConnection`].
//! * [`ingest`] – CSV loading, reverse pivot of one-hot groups, seeded split.
//! * [`oracle`] – an in-memory reference classifier used by the test suites.

pub mod binning;
pub mod error;
pub mod executor;
pub mod ingest;
pub mod mi;
pub mod oracle;
pub mod schema;
pub mod sqlgen;
pub mod value;

pub use binning::{BinBound, Binning, QuantizationMetadata};
pub use error::{Error, Result};
pub use executor::connection::{DbConnection, DbError, RowSet, SqliteConnection};
pub use executor::{ContingencyModel, EvaluationReport, FeatureScore};
pub use schema::{
    ColumnKind, ColumnRole, ColumnSpec, ModelConfig, TableSchema, TemplateId, ValidatedConfig,
};
pub use sqlgen::{Dialect, RenderedStatement, StatementId};
pub use value::Value;
