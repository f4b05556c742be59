//! Rendering of the pipeline SQL.
//!
//! Training is `QT → QMT → M → MAJ`, prediction is `QE → QE_IX → P`. Each
//! table-producing statement is `CREATE TABLE <model_id>_<id> AS SELECT ...`
//! and reads only the source table and tables produced earlier in the list.
//! Rendering is pure: the same inputs always give byte-identical text.

pub mod dialect;
mod template;

pub use dialect::{Dialect, WindowSupport};

pub use crate::schema::StatementId;

use crate::binning::{self, Binning, QuantMode};
use crate::error::{Error, Result};
use crate::schema::{table_name, ColumnKind, ColumnRole, TableSchema, TemplateId, ValidatedConfig};
use dialect::string_literal;

const LIST_SEP: &str = ",\n  ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedStatement {
    pub id: StatementId,
    pub sql: String,
    /// Table created by the statement, if any.
    pub produces_table: Option<String>,
}

/// The table a prediction runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalTable<'a> {
    pub name: &'a str,
    /// Unique integer row identifier; generated from row order when absent.
    pub key_column: Option<&'a str>,
}

/// Expression yielding the stable `row_key` of a source row.
pub(crate) fn row_key_expr(key: Option<&str>, d: &Dialect) -> Result<String> {
    if let Some(k) = key {
        return Ok(d.quote(k));
    }
    d.require_windows()
        .map_err(|_| d.unsupported("tables without a key column need ROW_NUMBER()"))?;
    Ok(match d.implicit_row_id {
        Some(id) => format!("ROW_NUMBER() OVER (ORDER BY {id})"),
        None => "ROW_NUMBER() OVER ()".to_owned(),
    })
}

fn not_null_filter(columns: &[&str], d: &Dialect) -> String {
    columns
        .iter()
        .map(|c| format!("{} IS NOT NULL", d.quote(c)))
        .collect::<Vec<_>>()
        .join(" AND ")
}

/// `SELECT row_key, <columns> FROM table [WHERE all non-null]`.
pub(crate) fn keyed_source(
    table: &str,
    key: Option<&str>,
    columns: &[&str],
    complete_only: bool,
    d: &Dialect,
) -> Result<String> {
    let mut items = vec![format!("{} AS {}", row_key_expr(key, d)?, d.quote("row_key"))];
    items.extend(columns.iter().map(|c| d.quote(c)));
    let mut sql = format!("SELECT {} FROM {}", items.join(", "), d.quote(table));
    if complete_only && !columns.is_empty() {
        sql.push_str(" WHERE ");
        sql.push_str(&not_null_filter(columns, d));
    }
    Ok(sql)
}

fn training_source(config: &ValidatedConfig, d: &Dialect) -> Result<String> {
    let mut cols: Vec<&str> = config.features().iter().map(String::as_str).collect();
    cols.push(config.target());
    keyed_source(config.source_table(), config.key_column(), &cols, true, d)
}

fn stats_join(stats: Option<&str>) -> String {
    stats.map_or_else(String::new, |s| format!("\nCROSS JOIN (\n  {s}\n) g"))
}

fn statement(id: StatementId, sql: String, model_id: Option<&str>) -> RenderedStatement {
    RenderedStatement {
        id,
        sql,
        produces_table: model_id.map(|m| table_name(m, id)),
    }
}

fn join_on(left: &str, right: &str, cols: &[&str], d: &Dialect) -> String {
    cols.iter()
        .map(|c| format!("{left}.{q} = {right}.{q}", q = d.quote(c)))
        .collect::<Vec<_>>()
        .join(" AND ")
}

fn qualified_list(alias: &str, cols: &[&str], d: &Dialect, with_alias: bool) -> String {
    cols.iter()
        .map(|c| {
            if with_alias {
                format!("{} AS {}", d.qualified(alias, c), d.quote(c))
            } else {
                d.qualified(alias, c)
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// `[QT, QMT, M, MAJ]` for `config`.
pub fn render_pipeline_train(config: &ValidatedConfig, d: &Dialect) -> Result<Vec<RenderedStatement>> {
    let model = config.model_id();
    let source = training_source(config, d)?;
    let qt_table = config.table_name(TemplateId::Qt);
    let target = d.quote(config.target());

    // QT
    let quant = binning::render_quantization_exprs(config, QuantMode::Fit { source: &source }, d)?;
    let mut columns = vec![format!("{} AS {}", d.qualified("src", "row_key"), d.quote("row_key"))];
    columns.extend(
        quant
            .columns
            .iter()
            .map(|(name, expr)| format!("{expr} AS {}", d.quote(name))),
    );
    columns.push(format!("src.{target} AS {target}"));
    let qt = template::fill(
        template::QT,
        &[
            ("create_table", &d.create_table_as(&qt_table)?),
            ("columns", &columns.join(LIST_SEP)),
            ("source", &source),
            ("stats_join", &stats_join(quant.stats.as_deref())),
        ],
        d,
    )?;

    // QMT
    let qmt_table = config.table_name(TemplateId::Qmt);
    let q_qt = d.quote(&qt_table);
    let branches = config
        .numeric_features()
        .map(|(_, feature)| {
            template::fill(
                template::QMT_FEATURE,
                &[
                    ("feature_name", &d.cast(&string_literal(feature), d.text_type)),
                    ("bin", &d.cast(&d.qualified("t", "bin"), d.integer_type)),
                    ("local_min", &d.cast(&d.qualified("t", "local_min"), d.double_type)),
                    ("local_max", &d.cast(&d.qualified("t", "local_max"), d.double_type)),
                    ("global_min", &d.cast(&d.qualified("g", "global_min"), d.double_type)),
                    ("global_max", &d.cast(&d.qualified("g", "global_max"), d.double_type)),
                    ("bins", &d.cast(&config.bins().to_string(), d.integer_type)),
                    ("feature", &d.quote(feature)),
                    ("qt_table", &q_qt),
                    ("source", &source),
                ],
                d,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let feature_selects = if branches.is_empty() {
        empty_qmt_select(d)
    } else {
        branches.join("\nUNION ALL\n")
    };
    let qmt = template::fill(
        template::QMT,
        &[
            ("create_table", &d.create_table_as(&qmt_table)?),
            ("feature_selects", &feature_selects),
        ],
        d,
    )?;

    // M
    let mut model_cols: Vec<&str> = config.features().iter().map(String::as_str).collect();
    model_cols.push(config.target());
    let m = template::fill(
        template::M,
        &[
            ("create_table", &d.create_table_as(&config.table_name(TemplateId::M))?),
            ("columns", &qualified_list("q", &model_cols, d, true).replace(", ", LIST_SEP)),
            ("qt_table", &q_qt),
            ("group_by", &qualified_list("q", &model_cols, d, false)),
        ],
        d,
    )?;

    // MAJ
    let features_desc = config
        .feature_columns()
        .map(|(_, n, k)| format!("{n}:{}", k.as_str()))
        .collect::<Vec<_>>()
        .join(",");
    let catalog = [
        format!("(SELECT COUNT(*) FROM {q_qt}) AS {}", d.quote("trained_rows")),
        format!("{} AS {}", string_literal(config.source_table()), d.quote("source_table")),
        format!(
            "{} AS {}",
            config.key_column().map_or("NULL".to_owned(), string_literal),
            d.quote("key_column")
        ),
        format!("{} AS {}", string_literal(config.target()), d.quote("target_column")),
        format!("{} AS {}", string_literal(&features_desc), d.quote("features")),
        format!("{} AS {}", string_literal(config.binning().as_str()), d.quote("binning")),
        format!("{} AS {}", config.bins(), d.quote("bins")),
    ]
    .join(LIST_SEP);
    let maj = template::fill(
        template::MAJ,
        &[
            ("create_table", &d.create_table_as(&table_name(model, StatementId::Maj))?),
            ("target", &target),
            ("catalog", &catalog),
            ("qt_table", &q_qt),
        ],
        d,
    )?;

    Ok(vec![
        statement(TemplateId::Qt.into(), qt, Some(model)),
        statement(TemplateId::Qmt.into(), qmt, Some(model)),
        statement(TemplateId::M.into(), m, Some(model)),
        statement(StatementId::Maj, maj, Some(model)),
    ])
}

fn empty_qmt_select(d: &Dialect) -> String {
    let null = |ty: &str| d.cast("NULL", ty);
    format!(
        "SELECT {} AS {}, {} AS {}, {} AS {}, {} AS {}, {} AS {}, {} AS {}, {} AS {}{} WHERE 1 = 0",
        null(d.text_type),
        d.quote("feature_name"),
        null(d.integer_type),
        d.quote("bin"),
        null(d.double_type),
        d.quote("local_min"),
        null(d.double_type),
        d.quote("local_max"),
        null(d.double_type),
        d.quote("global_min"),
        null(d.double_type),
        d.quote("global_max"),
        null(d.integer_type),
        d.quote("b"),
        d.dummy_from,
    )
}

/// `[QE, QE_IX, P]` for applying a trained model to `eval`.
pub fn render_pipeline_predict(
    config: &ValidatedConfig,
    eval: &EvalTable<'_>,
    d: &Dialect,
) -> Result<Vec<RenderedStatement>> {
    let model = config.model_id();
    let features: Vec<&str> = config.features().iter().map(String::as_str).collect();
    let qe_table = config.table_name(TemplateId::Qe);
    let qmt_table = config.table_name(TemplateId::Qmt);

    // QE
    let source = keyed_source(eval.name, eval.key_column, &features, false, d)?;
    let quant =
        binning::render_quantization_exprs(config, QuantMode::Lookup { qmt_table: &qmt_table }, d)?;
    let mut columns = vec![format!("{} AS {}", d.qualified("src", "row_key"), d.quote("row_key"))];
    columns.extend(
        quant
            .columns
            .iter()
            .map(|(name, expr)| format!("{expr} AS {}", d.quote(name))),
    );
    let qe = template::fill(
        template::QE,
        &[
            ("create_table", &d.create_table_as(&qe_table)?),
            ("columns", &columns.join(LIST_SEP)),
            ("source", &source),
            ("stats_join", &stats_join(quant.stats.as_deref())),
        ],
        d,
    )?;

    // QE_IX
    let ix = template::fill(
        template::QE_IX,
        &[(
            "create_index",
            &d.create_index(&config.table_name(TemplateId::QeIx), &qe_table, &features),
        )],
        d,
    )?;

    // P
    let p = template::fill(
        template::P,
        &[
            ("create_table", &d.create_table_as(&config.table_name(TemplateId::P))?),
            ("maj_table", &d.quote(&table_name(model, StatementId::Maj))),
            ("qe_table", &d.quote(&qe_table)),
            ("m_table", &d.quote(&config.table_name(TemplateId::M))),
            ("target", &d.quote(config.target())),
            ("m_columns", &qualified_list("m", &features, d, true)),
            ("x_columns", &qualified_list("x", &features, d, true)),
            ("x_group", &qualified_list("x", &features, d, false)),
            ("mw_join", &join_on("m", "w", &features, d)),
            ("m_group", &qualified_list("m", &features, d, false)),
            ("ed_join", &join_on("e", "d", &features, d)),
        ],
        d,
    )?;

    Ok(vec![
        statement(TemplateId::Qe.into(), qe, Some(model)),
        RenderedStatement {
            id: TemplateId::QeIx.into(),
            sql: ix,
            produces_table: None,
        },
        statement(TemplateId::P.into(), p, Some(model)),
    ])
}

/// Joint `(x, y, cnt)` counts of one feature against the target, the
/// aggregate from which mutual information is finished client-side.
#[allow(clippy::too_many_arguments)]
pub fn render_rank_feature(
    table: &str,
    key: Option<&str>,
    feature: &str,
    kind: ColumnKind,
    target: &str,
    binning: Binning,
    bins: u32,
    d: &Dialect,
) -> Result<RenderedStatement> {
    if bins < 1 {
        return Err(Error::BadBinCount(0));
    }
    let source = keyed_source(table, key, &[feature, target], true, d)?;
    let (x_expr, stats) = match (kind, binning) {
        (ColumnKind::Categorical, _) => (d.qualified("src", feature), None),
        (ColumnKind::Numeric, Binning::Ewb) => {
            let stats = (bins > 1).then(|| {
                format!(
                    "SELECT {} FROM ({source}) s",
                    binning::ewb_fit_stats(d, &[(0, feature)]).join(", ")
                )
            });
            (binning::ewb_expr(d, feature, 0, bins, false), stats)
        }
        (ColumnKind::Numeric, Binning::Eqrb) => (binning::eqrb_fit_expr(d, feature, bins)?, None),
    };
    let sql = template::fill(
        template::RANK,
        &[
            ("x_expr", &x_expr),
            ("target", &d.quote(target)),
            ("source", &source),
            ("stats_join", &stats_join(stats.as_deref())),
        ],
        d,
    )?;
    Ok(statement(StatementId::Rank, sql, None))
}

/// One rank query per feature column of `schema` (target excluded).
pub fn render_rank_query(
    schema: &TableSchema,
    target: &str,
    binning: Binning,
    bins: u32,
    d: &Dialect,
) -> Result<Vec<(String, RenderedStatement)>> {
    schema.validate()?;
    let target = &schema
        .column(target)
        .ok_or_else(|| Error::UnknownColumn(target.to_owned()))?
        .name;
    schema
        .columns
        .iter()
        .filter(|c| c.role != ColumnRole::Ignored && &c.name != target)
        .map(|c| {
            let stmt = render_rank_feature(
                &schema.table_name,
                schema.key_column.as_deref(),
                &c.name,
                c.kind,
                target,
                binning,
                bins,
                d,
            )?;
            Ok((c.name.clone(), stmt))
        })
        .collect()
}

/// Class proportions per bin (and second bin) of the first `dims` model
/// features, computed over the quantized training table.
pub fn render_distribution_export(
    config: &ValidatedConfig,
    dims: usize,
    d: &Dialect,
) -> Result<RenderedStatement> {
    let (id, tpl) = match dims {
        1 => (StatementId::Export1d, template::EXPORT1D),
        2 => (StatementId::Export2d, template::EXPORT2D),
        _ => return Err(Error::DimsOutOfRange(dims)),
    };
    if config.features().len() < dims {
        return Err(Error::DimsOutOfRange(dims));
    }
    let cols: Vec<&str> = config.features()[..dims].iter().map(String::as_str).collect();
    let proportion = format!(
        "{} / MAX(g.{})",
        d.cast("COUNT(*)", d.double_type),
        d.quote("group_rows")
    );
    let sql = template::fill(
        tpl,
        &[
            ("q_columns", &qualified_list("q", &cols, d, true).replace(", ", LIST_SEP)),
            ("target", &d.quote(config.target())),
            ("proportion", &proportion),
            ("qt_table", &d.quote(&config.table_name(TemplateId::Qt))),
            ("z_columns", &qualified_list("z", &cols, d, true)),
            ("z_group", &qualified_list("z", &cols, d, false)),
            ("join", &join_on("q", "g", &cols, d)),
            ("q_group", &qualified_list("q", &cols, d, false)),
        ],
        d,
    )?;
    Ok(statement(id, sql, None))
}

/// Accuracy tallies of the prediction table against `truth`.
pub fn render_evaluation(
    config: &ValidatedConfig,
    eval: &EvalTable<'_>,
    truth: &str,
    d: &Dialect,
) -> Result<RenderedStatement> {
    let sql = template::fill(
        template::EVAL,
        &[
            ("p_table", &d.quote(&config.table_name(TemplateId::P))),
            ("row_key", &row_key_expr(eval.key_column, d)?),
            ("truth", &d.quote(truth)),
            ("eval_table", &d.quote(eval.name)),
        ],
        d,
    )?;
    Ok(statement(StatementId::Evaluate, sql, None))
}
