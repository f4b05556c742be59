//! Runs rendered pipelines against a database.
//!
//! All model state lives in `<model_id>_*` tables. The client only reads
//! back small aggregates: row counts, the majority class, per-feature
//! contingency counts for ranking and the accuracy tallies.

pub mod connection;

use std::time::Instant;

use crate::binning::Binning;
use crate::error::{Error, Result};
use crate::mi::mutual_information_bits;
use crate::schema::{
    parse_table_name, table_name, validate_config, ColumnKind, ColumnRole, ColumnSpec, ModelConfig,
    StatementId, TableSchema, TemplateId, ValidatedConfig,
};
use crate::sqlgen::{self, EvalTable, RenderedStatement};
use crate::value::Value;
use connection::DbConnection;

/// Column name that ingestion gives the generated row identifier.
pub const DEFAULT_KEY_COLUMN: &str = "row_id";

/// Quantization used by [`rank`] when the caller does not choose one.
pub const DEFAULT_RANK_BINNING: Binning = Binning::Ewb;
pub const DEFAULT_RANK_BINS: u32 = 39;

/// Handle on a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyModel {
    pub config: ValidatedConfig,
    pub majority_class: Value,
    pub trained_row_count: u64,
}

impl ContingencyModel {
    pub fn model_id(&self) -> &str {
        self.config.model_id()
    }

    pub fn m_table(&self) -> String {
        self.config.table_name(TemplateId::M)
    }

    pub fn qmt_table(&self) -> String {
        self.config.table_name(TemplateId::Qmt)
    }

    pub fn prediction_table(&self) -> String {
        self.config.table_name(TemplateId::P)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub total_rows: u64,
    pub correct_rows: u64,
    pub accuracy: f64,
    /// Rows predicted through the majority-class fallback.
    pub fallback_rows: u64,
    /// Wall time of the prediction pipeline (QE, QE_IX, P).
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScore {
    pub feature: String,
    pub mi_bits: f64,
}

/// One row of a class distribution export.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionRow {
    /// Bin index or category per exported feature.
    pub keys: Vec<Value>,
    pub class: Value,
    pub proportion: f64,
}

fn run<C: DbConnection + ?Sized>(conn: &mut C, stmt: &RenderedStatement) -> Result<()> {
    conn.execute(&stmt.sql).map_err(|source| Error::SqlExecution {
        step: stmt.id.to_string(),
        source,
    })
}

fn query_step<C: DbConnection + ?Sized>(
    conn: &mut C,
    step: &str,
    sql: &str,
) -> Result<connection::RowSet> {
    conn.query(sql).map_err(|source| Error::SqlExecution {
        step: step.to_owned(),
        source,
    })
}

fn count_rows<C: DbConnection + ?Sized>(conn: &mut C, table: &str) -> Result<u64> {
    let sql = format!("SELECT COUNT(*) FROM {}", conn.dialect().quote(table));
    let rows = conn.query(&sql)?;
    Ok(rows.scalar().and_then(Value::as_i64).unwrap_or(0) as u64)
}

fn model_tables<C: DbConnection + ?Sized>(conn: &mut C, model_id: &str) -> Result<Vec<String>> {
    Ok(conn
        .list_tables()?
        .into_iter()
        .filter(|t| parse_table_name(t).is_some_and(|(m, _)| m == model_id))
        .collect())
}

fn drop_table<C: DbConnection + ?Sized>(conn: &mut C, table: &str) -> Result<()> {
    let sql = format!("DROP TABLE IF EXISTS {}", conn.dialect().quote(table));
    conn.execute(&sql)?;
    Ok(())
}

/// Drops every `<model_id>_*` pipeline table. Returns how many were dropped.
pub fn drop_model<C: DbConnection + ?Sized>(conn: &mut C, model_id: &str) -> Result<usize> {
    let tables = model_tables(conn, model_id)?;
    for t in &tables {
        drop_table(conn, t)?;
    }
    Ok(tables.len())
}

/// Materializes QT, QMT, M and MAJ for `config`.
///
/// Fails with [`Error::TableExists`] when tables of the model are present,
/// unless `force` is set, in which case they are dropped first.
pub fn train<C: DbConnection + ?Sized>(
    conn: &mut C,
    config: &ValidatedConfig,
    force: bool,
) -> Result<ContingencyModel> {
    let model_id = config.model_id();
    if conn.table_columns(config.source_table())?.is_none() {
        return Err(Error::MissingTable(config.source_table().to_owned()));
    }
    let existing = model_tables(conn, model_id)?;
    if let Some(first) = existing.into_iter().next() {
        if !force {
            return Err(Error::TableExists(first));
        }
        drop_model(conn, model_id)?;
    }

    let statements = sqlgen::render_pipeline_train(config, conn.dialect())?;
    let outcome = (|| {
        for stmt in &statements {
            run(conn, stmt)?;
            if stmt.id == StatementId::Template(TemplateId::Qt)
                && count_rows(conn, &config.table_name(TemplateId::Qt))? == 0
            {
                return Err(Error::EmptyTrainingTable(config.source_table().to_owned()));
            }
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        // Leave no half-built model behind.
        let _ = drop_model(conn, model_id);
        return Err(e);
    }
    load_model(conn, model_id)
}

fn catalog_text(rows: &connection::RowSet, col: &str) -> Option<String> {
    let i = rows.column_index(col)?;
    match &rows.rows.first()?[i] {
        Value::Null => None,
        v => Some(v.to_string()),
    }
}

/// Reconstructs a trained model from its MAJ catalog row.
pub fn load_model<C: DbConnection + ?Sized>(conn: &mut C, model_id: &str) -> Result<ContingencyModel> {
    let d = conn.dialect();
    let maj = table_name(model_id, StatementId::Maj);
    for t in [&maj, &table_name(model_id, TemplateId::M.into()), &table_name(model_id, TemplateId::Qmt.into())] {
        if conn.table_columns(t)?.is_none() {
            return Err(Error::MissingModelTables(model_id.to_owned()));
        }
    }
    let rows = conn.query(&format!("SELECT * FROM {}", d.quote(&maj)))?;
    let corrupt = || Error::Schema(format!("catalog table {maj} is malformed"));
    let row = rows.rows.first().ok_or_else(corrupt)?;
    let get = |c: &str| catalog_text(&rows, c).ok_or_else(corrupt);

    let mut columns = Vec::new();
    let mut features = Vec::new();
    for item in get("features")?.split(',') {
        let (name, kind) = item.split_once(':').ok_or_else(corrupt)?;
        columns.push(ColumnSpec::feature(name, kind.parse::<ColumnKind>()?));
        features.push(name.to_owned());
    }
    let target = get("target_column")?;
    columns.push(ColumnSpec::target(&target, ColumnKind::Categorical));
    let mut schema = TableSchema::new(get("source_table")?, columns);
    schema.key_column = catalog_text(&rows, "key_column");
    let config = ModelConfig {
        model_id: model_id.to_owned(),
        features,
        target,
        binning: get("binning")?.parse()?,
        bins: get("bins")?.parse().map_err(|_| corrupt())?,
    };
    let config = validate_config(&config, &schema)?;
    let majority_class = row[rows.column_index("majority_class").ok_or_else(corrupt)?].clone();
    let trained_row_count = rows
        .column_index("trained_rows")
        .and_then(|i| row[i].as_i64())
        .ok_or_else(corrupt)? as u64;
    Ok(ContingencyModel {
        config,
        majority_class,
        trained_row_count,
    })
}

fn resolve_eval<'a, C: DbConnection + ?Sized>(
    conn: &mut C,
    model: &'a ContingencyModel,
    eval_table: &str,
    extra: Option<&str>,
) -> Result<Option<&'a str>> {
    let cols = conn
        .table_columns(eval_table)?
        .ok_or_else(|| Error::MissingTable(eval_table.to_owned()))?;
    let has = |name: &str| cols.iter().any(|(c, _)| c.eq_ignore_ascii_case(name));
    for f in model.config.features().iter().map(String::as_str).chain(extra) {
        if !has(f) {
            return Err(Error::MissingFeatureColumn {
                table: eval_table.to_owned(),
                column: f.to_owned(),
            });
        }
    }
    Ok(model.config.key_column().filter(|k| has(k)))
}

/// Runs QE, QE_IX and P, replacing earlier prediction tables of the model.
/// Returns the name of the prediction table.
pub fn predict<C: DbConnection + ?Sized>(
    conn: &mut C,
    model: &ContingencyModel,
    eval_table: &str,
) -> Result<String> {
    let model_id = model.model_id();
    for t in [StatementId::Maj, TemplateId::M.into(), TemplateId::Qmt.into()] {
        if conn.table_columns(&table_name(model_id, t))?.is_none() {
            return Err(Error::MissingModelTables(model_id.to_owned()));
        }
    }
    let key = resolve_eval(conn, model, eval_table, None)?;
    let eval = EvalTable {
        name: eval_table,
        key_column: key,
    };
    let statements = sqlgen::render_pipeline_predict(&model.config, &eval, conn.dialect())?;
    drop_table(conn, &model.config.table_name(TemplateId::P))?;
    drop_table(conn, &model.config.table_name(TemplateId::Qe))?;
    for stmt in &statements {
        match run(conn, stmt) {
            Err(e) if stmt.id == StatementId::Template(TemplateId::QeIx) => {
                log::warn!("index creation skipped: {e}");
            }
            other => other?,
        }
    }
    Ok(model.prediction_table())
}

/// Predicts `eval_table` and scores the predictions against `truth_column`.
pub fn evaluate<C: DbConnection + ?Sized>(
    conn: &mut C,
    model: &ContingencyModel,
    eval_table: &str,
    truth_column: &str,
) -> Result<EvaluationReport> {
    resolve_eval(conn, model, eval_table, Some(truth_column))?;
    let started = Instant::now();
    predict(conn, model, eval_table)?;
    let wall_time_seconds = started.elapsed().as_secs_f64();

    let key = resolve_eval(conn, model, eval_table, None)?;
    let eval = EvalTable {
        name: eval_table,
        key_column: key,
    };
    let stmt = sqlgen::render_evaluation(&model.config, &eval, truth_column, conn.dialect())?;
    let rows = query_step(conn, stmt.id.as_str(), &stmt.sql)?;
    let col = |name: &str| -> u64 {
        rows.column_index(name)
            .and_then(|i| rows.rows.first()?.get(i)?.as_i64())
            .unwrap_or(0) as u64
    };
    let (total_rows, correct_rows, fallback_rows) =
        (col("total_rows"), col("correct_rows"), col("fallback_rows"));
    Ok(EvaluationReport {
        total_rows,
        correct_rows,
        accuracy: if total_rows == 0 {
            0.0
        } else {
            correct_rows as f64 / total_rows as f64
        },
        fallback_rows,
        wall_time_seconds,
    })
}

/// Reads the prediction table as `(row_key, predicted, matched)`, ordered by
/// row key.
pub fn read_predictions<C: DbConnection + ?Sized>(
    conn: &mut C,
    model: &ContingencyModel,
) -> Result<Vec<(i64, Value, bool)>> {
    let d = conn.dialect();
    let sql = format!(
        "SELECT {k}, {p}, {m} FROM {t} ORDER BY {k}",
        k = d.quote("row_key"),
        p = d.quote("predicted"),
        m = d.quote("matched"),
        t = d.quote(&model.prediction_table()),
    );
    let rows = conn.query(&sql)?;
    Ok(rows
        .rows
        .into_iter()
        .map(|mut r| {
            let matched = r[2].as_i64() == Some(1);
            let predicted = std::mem::replace(&mut r[1], Value::Null);
            (r[0].as_i64().unwrap_or_default(), predicted, matched)
        })
        .collect())
}

/// Mutual information of every feature column of `schema` with `target`,
/// sorted by decreasing MI (ties by name). One query per feature.
pub fn rank<C: DbConnection + ?Sized>(
    conn: &mut C,
    schema: &TableSchema,
    target: &str,
    binning: Binning,
    bins: u32,
) -> Result<Vec<FeatureScore>> {
    let queries = sqlgen::render_rank_query(schema, target, binning, bins, conn.dialect())?;
    let mut scores = Vec::with_capacity(queries.len());
    for (feature, stmt) in queries {
        let rows = query_step(conn, &format!("{} ({feature})", stmt.id), &stmt.sql)?;
        let joint: Vec<(Value, Value, u64)> = rows
            .rows
            .into_iter()
            .map(|mut r| {
                let cnt = r[2].as_i64().unwrap_or(0) as u64;
                let y = std::mem::replace(&mut r[1], Value::Null);
                let x = std::mem::replace(&mut r[0], Value::Null);
                (x, y, cnt)
            })
            .collect();
        scores.push(FeatureScore {
            feature,
            mi_bits: mutual_information_bits(&joint),
        });
    }
    scores.sort_by(|a, b| {
        b.mi_bits
            .total_cmp(&a.mi_bits)
            .then_with(|| a.feature.cmp(&b.feature))
    });
    Ok(scores)
}

/// Class proportions per quantized value of `features` (one or two of the
/// model's features) over the training table.
pub fn export_distribution<C: DbConnection + ?Sized>(
    conn: &mut C,
    model: &ContingencyModel,
    features: &[String],
) -> Result<Vec<DistributionRow>> {
    let dims = features.len();
    if !(1..=2).contains(&dims) {
        return Err(Error::DimsOutOfRange(dims));
    }
    let schema = model.config.training_schema();
    let mut ordered: Vec<String> = Vec::with_capacity(model.config.features().len());
    for f in features {
        let canonical = model
            .config
            .features()
            .iter()
            .find(|m| m.eq_ignore_ascii_case(f))
            .ok_or_else(|| Error::UnknownColumn(f.clone()))?;
        ordered.push(canonical.clone());
    }
    ordered.extend(
        model
            .config
            .features()
            .iter()
            .filter(|f| !ordered.contains(f))
            .cloned()
            .collect::<Vec<_>>(),
    );
    let mut cfg = model.config.config().clone();
    cfg.features = ordered;
    let cfg = validate_config(&cfg, &schema)?;
    if conn.table_columns(&cfg.table_name(TemplateId::Qt))?.is_none() {
        return Err(Error::MissingModelTables(model.model_id().to_owned()));
    }
    let stmt = sqlgen::render_distribution_export(&cfg, dims, conn.dialect())?;
    let rows = query_step(conn, stmt.id.as_str(), &stmt.sql)?;
    Ok(rows
        .rows
        .into_iter()
        .map(|r| DistributionRow {
            keys: r[..dims].to_vec(),
            class: r[dims].clone(),
            proportion: r[dims + 1].as_f64().unwrap_or(f64::NAN),
        })
        .collect())
}

/// Builds a [`TableSchema`] from the declared column types of `table`.
///
/// Integer and floating point types are numeric unless listed in
/// `categorical`; everything else is categorical. A column named
/// [`DEFAULT_KEY_COLUMN`] becomes the key.
pub fn describe_table<C: DbConnection + ?Sized>(
    conn: &mut C,
    table: &str,
    target: Option<&str>,
    categorical: &[String],
) -> Result<TableSchema> {
    let cols = conn
        .table_columns(table)?
        .ok_or_else(|| Error::MissingTable(table.to_owned()))?;
    let mut schema = TableSchema::new(table, Vec::with_capacity(cols.len()));
    for (name, ty) in cols {
        if name.eq_ignore_ascii_case(DEFAULT_KEY_COLUMN) {
            schema.key_column = Some(name);
            continue;
        }
        let ty = ty.to_ascii_uppercase();
        let numeric = ["INT", "REAL", "FLOA", "DOUB", "NUM", "DEC"]
            .iter()
            .any(|p| ty.contains(p));
        let kind = if numeric && !categorical.iter().any(|c| c.eq_ignore_ascii_case(&name)) {
            ColumnKind::Numeric
        } else {
            ColumnKind::Categorical
        };
        let role = if target.is_some_and(|t| t.eq_ignore_ascii_case(&name)) {
            ColumnRole::Target
        } else {
            ColumnRole::Feature
        };
        schema.columns.push(ColumnSpec::new(name, kind, role));
    }
    if let Some(t) = target {
        if schema.targets().next().is_none() {
            return Err(Error::UnknownColumn(t.to_owned()));
        }
    }
    Ok(schema)
}
