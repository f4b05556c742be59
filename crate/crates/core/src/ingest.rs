//! Getting data into the database: CSV loading, reverse pivot of one-hot
//! column groups, and a reproducible train/eval split.
//!
//! A schema sidecar in TOML describes a file:
//!
//! ```toml
//! table = "covtype"
//! header = false
//! strict = true
//!
//! [[columns]]
//! name = "Elevation"
//! kind = "numeric"
//!
//! [[columns]]
//! name = "Cover_Type"
//! kind = "categorical"
//! role = "target"
//!
//! [[pivot]]
//! new_column = "Wilderness_Area"
//! source_columns = ["WA1", "WA2", "WA3", "WA4"]
//! ```

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::executor::connection::DbConnection;
use crate::executor::DEFAULT_KEY_COLUMN;
use crate::schema::{validate_identifier, ColumnKind, ColumnRole, ColumnSpec, TableSchema};
use crate::sqlgen::dialect::string_literal;
use crate::sqlgen::Dialect;
use crate::value::Value;

const INSERT_BATCH: usize = 10_000;

/// One-hot columns that collapse into a single categorical column.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PivotGroup {
    pub new_column: String,
    pub source_columns: Vec<String>,
    /// Category per source column; the source column names when empty.
    #[serde(default)]
    pub labels: Vec<String>,
}

impl PivotGroup {
    pub fn new(new_column: impl Into<String>, source_columns: Vec<String>) -> Self {
        PivotGroup {
            new_column: new_column.into(),
            source_columns,
            labels: Vec::new(),
        }
    }

    pub fn labels(&self) -> &[String] {
        if self.labels.is_empty() {
            &self.source_columns
        } else {
            &self.labels
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_identifier(&self.new_column)?;
        if self.source_columns.len() < 2 {
            return Err(Error::Schema(format!(
                "pivot group `{}` needs at least two source columns",
                self.new_column
            )));
        }
        for c in &self.source_columns {
            validate_identifier(c)?;
        }
        let labels = self.labels();
        if labels.len() != self.source_columns.len() {
            return Err(Error::Schema(format!(
                "pivot group `{}` has {} labels for {} columns",
                self.new_column,
                labels.len(),
                self.source_columns.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::Schema(format!(
                    "pivot group `{}` repeats label `{l}`",
                    self.new_column
                )));
            }
        }
        Ok(())
    }
}

/// The schema sidecar of a delimited file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaFile {
    pub table: String,
    #[serde(default = "default_true")]
    pub header: bool,
    #[serde(default = "default_true")]
    pub strict: bool,
    pub columns: Vec<ColumnSpec>,
    #[serde(default)]
    pub pivot: Vec<PivotGroup>,
}

fn default_true() -> bool {
    true
}

impl SchemaFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: SchemaFile = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        file.file_schema().validate()?;
        for g in &file.pivot {
            g.validate()?;
            for c in &g.source_columns {
                if file.file_schema().column(c).is_none() {
                    return Err(Error::UnknownColumn(c.clone()));
                }
            }
        }
        Ok(file)
    }

    /// The table as loaded from the file, before any pivot.
    pub fn file_schema(&self) -> TableSchema {
        TableSchema::new(&self.table, self.columns.clone()).with_key(DEFAULT_KEY_COLUMN)
    }

    /// The table after the pivot groups are applied.
    pub fn pivoted_schema(&self, table: &str) -> TableSchema {
        let mut columns = Vec::new();
        for c in &self.columns {
            match self.pivot.iter().find(|g| g.source_columns.contains(&c.name)) {
                Some(g) if g.source_columns[0] == c.name => {
                    columns.push(ColumnSpec::feature(&g.new_column, ColumnKind::Categorical));
                }
                Some(_) => {}
                None => columns.push(c.clone()),
            }
        }
        TableSchema::new(table, columns).with_key(DEFAULT_KEY_COLUMN)
    }
}

fn sql_type(d: &Dialect, kind: ColumnKind) -> &'static str {
    match kind {
        ColumnKind::Numeric => d.double_type,
        ColumnKind::Categorical => d.text_type,
    }
}

/// Creates `table_name` and fills it from the comma separated file at
/// `path`. Rows get a 1-based `row_id` key in file order.
pub fn load_csv<C: DbConnection + ?Sized>(
    conn: &mut C,
    path: impl AsRef<Path>,
    schema: &TableSchema,
    header: bool,
    table_name: &str,
) -> Result<u64> {
    let path = path.as_ref();
    validate_identifier(table_name)?;
    schema.validate()?;
    if conn.table_columns(table_name)?.is_some() {
        return Err(Error::TableExists(table_name.to_owned()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .from_reader(fs::File::open(path)?);
    if header {
        let names: Vec<String> = reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(|h| h.trim().to_owned())
            .collect();
        let expected: Vec<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
        if !names.iter().map(String::as_str).eq(expected.iter().copied()) {
            return Err(Error::SchemaMismatch(format!(
                "header [{}] does not match schema columns [{}]",
                names.join(","),
                expected.join(",")
            )));
        }
    }

    let d = conn.dialect();
    let mut defs = vec![format!("{} {} PRIMARY KEY", d.quote(DEFAULT_KEY_COLUMN), d.integer_type)];
    defs.extend(
        schema
            .columns
            .iter()
            .map(|c| format!("{} {}", d.quote(&c.name), sql_type(d, c.kind))),
    );
    conn.execute(&format!("CREATE TABLE {} ({})", d.quote(table_name), defs.join(", ")))?;

    let result = fill_table(conn, &mut reader, path, schema, table_name);
    if result.is_err() {
        let _ = conn.execute(&format!("DROP TABLE {}", d.quote(table_name)));
    }
    result
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        path: path.to_owned(),
        line,
        message: e.to_string(),
    }
}

fn fill_table<C: DbConnection + ?Sized, R: std::io::Read>(
    conn: &mut C,
    reader: &mut csv::Reader<R>,
    path: &Path,
    schema: &TableSchema,
    table_name: &str,
) -> Result<u64> {
    let mut columns = vec![DEFAULT_KEY_COLUMN.to_owned()];
    columns.extend(schema.columns.iter().map(|c| c.name.clone()));
    let mut batch: Vec<Vec<Value>> = Vec::with_capacity(INSERT_BATCH);
    let mut total = 0u64;
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record).map_err(|e| csv_error(path, e))? {
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse {
            path: path.to_owned(),
            line,
            message,
        };
        if record.len() != schema.columns.len() {
            return Err(parse_err(format!(
                "expected {} fields, found {}",
                schema.columns.len(),
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(columns.len());
        row.push(Value::Integer(total as i64 + 1));
        for (field, spec) in record.iter().zip(&schema.columns) {
            let field = field.trim();
            row.push(if field.is_empty() {
                Value::Null
            } else if spec.kind == ColumnKind::Numeric {
                parse_number(field).ok_or_else(|| {
                    parse_err(format!("column `{}`: `{field}` is not a number", spec.name))
                })?
            } else {
                Value::Text(field.to_owned())
            });
        }
        batch.push(row);
        total += 1;
        if batch.len() == INSERT_BATCH {
            conn.insert_rows(table_name, &columns, &batch)?;
            batch.clear();
        }
    }
    if !batch.is_empty() {
        conn.insert_rows(table_name, &columns, &batch)?;
    }
    Ok(total)
}

fn parse_number(s: &str) -> Option<Value> {
    if let Ok(i) = s.parse::<i64>() {
        return Some(Value::Integer(i));
    }
    s.parse::<f64>()
        .ok()
        .filter(|f| f.is_finite())
        .map(Value::Real)
}

fn hot_sum(d: &Dialect, group: &PivotGroup) -> String {
    group
        .source_columns
        .iter()
        .map(|c| d.quote(c))
        .collect::<Vec<_>>()
        .join(" + ")
}

/// `CREATE TABLE new_table AS ...` collapsing each group of `columns` into
/// its categorical column, placed where the group's first column was.
pub fn render_reverse_pivot(
    d: &Dialect,
    table: &str,
    columns: &[String],
    groups: &[PivotGroup],
    new_table: &str,
) -> Result<String> {
    let mut items = Vec::new();
    for c in columns {
        match groups.iter().find(|g| g.source_columns.contains(c)) {
            Some(g) if &g.source_columns[0] == c => {
                let whens: Vec<String> = g
                    .source_columns
                    .iter()
                    .zip(g.labels())
                    .map(|(s, l)| format!("WHEN {} = 1 THEN {}", d.quote(s), string_literal(l)))
                    .collect();
                let case = format!(
                    "CASE WHEN {} <> 1 THEN NULL {} END",
                    hot_sum(d, g),
                    whens.join(" ")
                );
                items.push(format!("{} AS {}", d.cast(&case, d.text_type), d.quote(&g.new_column)));
            }
            Some(_) => {}
            None => items.push(d.quote(c)),
        }
    }
    Ok(format!(
        "{} SELECT {} FROM {}",
        d.create_table_as(new_table)?,
        items.join(", "),
        d.quote(table)
    ))
}

/// Replaces each pivot group of `table` by one categorical column in a new
/// table `new_table`.
///
/// Source columns must hold only 0 and 1. In strict mode every row must
/// have exactly one hot column per group; otherwise such rows get NULL.
pub fn reverse_pivot<C: DbConnection + ?Sized>(
    conn: &mut C,
    table: &str,
    groups: &[PivotGroup],
    strict: bool,
    new_table: &str,
) -> Result<String> {
    validate_identifier(new_table)?;
    let d = conn.dialect();
    let columns: Vec<String> = conn
        .table_columns(table)?
        .ok_or_else(|| Error::MissingTable(table.to_owned()))?
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    if conn.table_columns(new_table)?.is_some() {
        return Err(Error::TableExists(new_table.to_owned()));
    }
    let key = columns
        .iter()
        .find(|c| c.eq_ignore_ascii_case(DEFAULT_KEY_COLUMN))
        .map_or_else(|| d.implicit_row_id.unwrap_or("NULL").to_owned(), |k| d.quote(k));

    for g in groups {
        g.validate()?;
        for c in &g.source_columns {
            if !columns.contains(c) {
                return Err(Error::UnknownColumn(c.clone()));
            }
            let q = d.quote(c);
            let sql = format!(
                "SELECT COUNT(*) FROM {} WHERE {q} IS NULL OR {q} NOT IN (0, 1)",
                d.quote(table)
            );
            if conn.query(&sql)?.scalar().and_then(Value::as_i64) != Some(0) {
                return Err(Error::NotBinary { column: c.clone() });
            }
        }
        if strict {
            let sql = format!(
                "SELECT {key}, {sum} FROM {t} WHERE {sum} <> 1 ORDER BY {key} LIMIT 1",
                sum = hot_sum(d, g),
                t = d.quote(table)
            );
            if let Some(row) = conn.query(&sql)?.rows.into_iter().next() {
                let id = row[0].as_i64().unwrap_or(-1);
                let group = g.new_column.clone();
                return Err(if row[1].as_f64() == Some(0.0) {
                    Error::ZeroHot { group, row: id }
                } else {
                    Error::MultiHot { group, row: id }
                });
            }
        }
    }
    let sql = render_reverse_pivot(d, table, &columns, groups, new_table)?;
    conn.execute(&sql)?;
    Ok(new_table.to_owned())
}

/// Inverse of [`reverse_pivot`]: expands each group's categorical column
/// back into 0/1 columns in a new table.
pub fn one_hot_encode<C: DbConnection + ?Sized>(
    conn: &mut C,
    table: &str,
    groups: &[PivotGroup],
    new_table: &str,
) -> Result<String> {
    let d = conn.dialect();
    let columns: Vec<String> = conn
        .table_columns(table)?
        .ok_or_else(|| Error::MissingTable(table.to_owned()))?
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    let mut items = Vec::new();
    for c in &columns {
        match groups.iter().find(|g| &g.new_column == c) {
            Some(g) => {
                for (s, l) in g.source_columns.iter().zip(g.labels()) {
                    items.push(format!(
                        "CASE WHEN {} = {} THEN 1 ELSE 0 END AS {}",
                        d.quote(c),
                        string_literal(l),
                        d.quote(s)
                    ));
                }
            }
            None => items.push(d.quote(c)),
        }
    }
    conn.execute(&format!(
        "{} SELECT {} FROM {}",
        d.create_table_as(new_table)?,
        items.join(", "),
        d.quote(table)
    ))?;
    Ok(new_table.to_owned())
}

/// Loads `path` as described by `file` into `table` (the file's table name
/// when `None`), pivoting through a staging table when the file declares
/// pivot groups. Returns the table name and the row count.
pub fn ingest_file<C: DbConnection + ?Sized>(
    conn: &mut C,
    path: impl AsRef<Path>,
    file: &SchemaFile,
    table: Option<&str>,
) -> Result<(String, u64)> {
    let table = table.unwrap_or(&file.table).to_owned();
    validate_identifier(&table)?;
    if file.pivot.is_empty() {
        let rows = load_csv(conn, path, &file.file_schema(), file.header, &table)?;
        return Ok((table, rows));
    }
    if conn.table_columns(&table)?.is_some() {
        return Err(Error::TableExists(table));
    }
    let staging = format!("{table}_raw");
    let rows = load_csv(conn, path, &file.file_schema(), file.header, &staging)?;
    let pivoted = reverse_pivot(conn, &staging, &file.pivot, file.strict, &table);
    let d = conn.dialect();
    conn.execute(&format!("DROP TABLE {}", d.quote(&staging)))?;
    pivoted?;
    Ok((table, rows))
}

/// Modulus of the split hash (the Mersenne prime 2^31 - 1).
pub const SPLIT_MODULUS: i64 = 2_147_483_647;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: i64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: i64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidSplit(train_fraction));
        }
        Ok(SplitSpec {
            train_fraction,
            seed,
        })
    }

    fn threshold(&self) -> i64 {
        (self.train_fraction * SPLIT_MODULUS as f64).round() as i64
    }
}

/// Hash bucket in `[0, SPLIT_MODULUS)` of a row id, exactly as computed by
/// the split SQL.
pub fn split_bucket(row_id: i64, seed: i64) -> i64 {
    let p = SPLIT_MODULUS;
    let h0 = (row_id % p + p + seed.rem_euclid(p)) % p;
    let h1 = h0 * 48_271 % p;
    let h2 = (h1 * h1 + 12_345) % p;
    h2 * 16_807 % p
}

/// Whether a row id lands in the training table.
pub fn is_train_row(row_id: i64, spec: &SplitSpec) -> bool {
    split_bucket(row_id, spec.seed) < spec.threshold()
}

fn split_bucket_sql(id: &str, seed: i64) -> String {
    let p = SPLIT_MODULUS;
    let h0 = format!("(({id} % {p} + {p} + {}) % {p})", seed.rem_euclid(p));
    let h1 = format!("({h0} * 48271 % {p})");
    let h2 = format!("(({h1} * {h1} + 12345) % {p})");
    format!("({h2} * 16807 % {p})")
}

/// Partitions `table` into `train_table` and `eval_table` by a seeded hash
/// of the row key.
pub fn split<C: DbConnection + ?Sized>(
    conn: &mut C,
    table: &str,
    spec: &SplitSpec,
    train_table: &str,
    eval_table: &str,
) -> Result<(String, String)> {
    SplitSpec::new(spec.train_fraction, spec.seed)?;
    validate_identifier(train_table)?;
    validate_identifier(eval_table)?;
    let d = conn.dialect();
    let columns = conn
        .table_columns(table)?
        .ok_or_else(|| Error::MissingTable(table.to_owned()))?;
    for t in [train_table, eval_table] {
        if conn.table_columns(t)?.is_some() {
            return Err(Error::TableExists(t.to_owned()));
        }
    }
    let key = match columns
        .iter()
        .find(|(c, _)| c.eq_ignore_ascii_case(DEFAULT_KEY_COLUMN))
    {
        Some((k, _)) => d.quote(k),
        None => d
            .implicit_row_id
            .ok_or_else(|| d.unsupported("splitting needs a row_id column"))?
            .to_owned(),
    };
    let bucket = split_bucket_sql(&key, spec.seed);
    let threshold = spec.threshold();
    for (t, op) in [(train_table, "<"), (eval_table, ">=")] {
        let sql = format!(
            "{} SELECT * FROM {} WHERE {bucket} {op} {threshold}",
            d.create_table_as(t)?,
            d.quote(table)
        );
        conn.execute(&sql).map_err(|source| Error::SqlExecution {
            step: "SPLIT".to_owned(),
            source,
        })?;
    }
    Ok((train_table.to_owned(), eval_table.to_owned()))
}

/// Schema of a table loaded by [`load_csv`] and possibly pivoted: reads the
/// column list back and assigns kinds from `file`.
pub fn schema_from_file(file: &SchemaFile, table: &str) -> TableSchema {
    let mut s = if file.pivot.is_empty() {
        let mut s = file.file_schema();
        s.table_name = table.to_owned();
        s
    } else {
        file.pivoted_schema(table)
    };
    for c in &mut s.columns {
        if c.role == ColumnRole::Target {
            c.kind = ColumnKind::Categorical;
        }
    }
    s
}
