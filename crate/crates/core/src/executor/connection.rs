//! Minimal database access used by the pipeline.

use std::path::Path;

use rusqlite::functions::FunctionFlags;
use rusqlite::types::{ToSqlOutput, Value as SqlValue, ValueRef};
use rusqlite::{params_from_iter, Connection};
use thiserror::Error;

use crate::sqlgen::Dialect;
use crate::value::Value;

#[derive(Debug, Error)]
#[error("{0}")]
pub struct DbError(pub String);

impl From<rusqlite::Error> for DbError {
    fn from(e: rusqlite::Error) -> Self {
        DbError(e.to_string())
    }
}

/// Result of a query. Only small aggregates are ever read this way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RowSet {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl RowSet {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.eq_ignore_ascii_case(name))
    }

    /// The single value of a one-row, one-column result.
    pub fn scalar(&self) -> Option<&Value> {
        self.rows.first().and_then(|r| r.first())
    }
}

/// What the pipeline needs from a database.
///
/// A connection serves one pipeline at a time; statements are never
/// interleaved.
pub trait DbConnection {
    fn dialect(&self) -> &'static Dialect;

    /// Runs a statement that returns no rows.
    fn execute(&mut self, sql: &str) -> Result<(), DbError>;

    fn query(&mut self, sql: &str) -> Result<RowSet, DbError>;

    /// Appends `rows` to an existing table.
    fn insert_rows(
        &mut self,
        table: &str,
        columns: &[String],
        rows: &[Vec<Value>],
    ) -> Result<u64, DbError>;

    /// `(name, declared type)` of each column, or `None` when the table
    /// does not exist.
    fn table_columns(&mut self, table: &str) -> Result<Option<Vec<(String, String)>>, DbError>;

    fn list_tables(&mut self) -> Result<Vec<String>, DbError>;
}

/// The embedded backend.
pub struct SqliteConnection {
    conn: Connection,
}

impl SqliteConnection {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, DbError> {
        Self::init(Connection::open(path)?)
    }

    pub fn open_in_memory() -> Result<Self, DbError> {
        Self::init(Connection::open_in_memory()?)
    }

    /// Opens `sqlite://<path>`, a bare path, or `:memory:`.
    pub fn from_url(url: &str) -> Result<Self, DbError> {
        let path = url.strip_prefix("sqlite://").unwrap_or(url);
        if path.contains("://") {
            return Err(DbError(format!("no driver for `{url}`")));
        }
        if path == ":memory:" {
            Self::open_in_memory()
        } else {
            Self::open(path)
        }
    }

    fn init(conn: Connection) -> Result<Self, DbError> {
        conn.execute_batch("PRAGMA temp_store = MEMORY; PRAGMA cache_size = -131072;")?;
        // The bundled library is built without the math extension.
        for name in ["CEIL", "CEILING"] {
            conn.create_scalar_function(
                name,
                1,
                FunctionFlags::SQLITE_UTF8 | FunctionFlags::SQLITE_DETERMINISTIC,
                |ctx| {
                    Ok(match ctx.get_raw(0) {
                        ValueRef::Integer(i) => SqlValue::Integer(i),
                        ValueRef::Real(r) => SqlValue::Real(r.ceil()),
                        ValueRef::Null => SqlValue::Null,
                        ValueRef::Text(t) => std::str::from_utf8(t)
                            .ok()
                            .and_then(|s| s.trim().parse::<f64>().ok())
                            .map_or(SqlValue::Null, |r| SqlValue::Real(r.ceil())),
                        ValueRef::Blob(_) => SqlValue::Null,
                    })
                },
            )?;
        }
        Ok(SqliteConnection { conn })
    }

    pub fn raw(&self) -> &Connection {
        &self.conn
    }
}

fn from_sql(v: ValueRef<'_>) -> Value {
    match v {
        ValueRef::Null => Value::Null,
        ValueRef::Integer(i) => Value::Integer(i),
        ValueRef::Real(r) => Value::Real(r),
        ValueRef::Text(t) => Value::Text(String::from_utf8_lossy(t).into_owned()),
        ValueRef::Blob(b) => Value::Text(String::from_utf8_lossy(b).into_owned()),
    }
}

impl rusqlite::ToSql for Value {
    fn to_sql(&self) -> rusqlite::Result<ToSqlOutput<'_>> {
        Ok(match self {
            Value::Null => ToSqlOutput::Owned(SqlValue::Null),
            Value::Integer(i) => ToSqlOutput::Owned(SqlValue::Integer(*i)),
            Value::Real(r) => ToSqlOutput::Owned(SqlValue::Real(*r)),
            Value::Text(s) => ToSqlOutput::Borrowed(ValueRef::Text(s.as_bytes())),
        })
    }
}

impl DbConnection for SqliteConnection {
    fn dialect(&self) -> &'static Dialect {
        &Dialect::SQLITE
    }

    fn execute(&mut self, sql: &str) -> Result<(), DbError> {
        log::debug!("execute: {sql}");
        self.conn.execute_batch(sql)?;
        Ok(())
    }

    fn query(&mut self, sql: &str) -> Result<RowSet, DbError> {
        log::debug!("query: {sql}");
        let mut stmt = self.conn.prepare(sql)?;
        let columns: Vec<String> = stmt.column_names().into_iter().map(String::from).collect();
        let width = columns.len();
        let mut rows = Vec::new();
        let mut cursor = stmt.query([])?;
        while let Some(row) = cursor.next()? {
            let mut out = Vec::with_capacity(width);
            for i in 0..width {
                out.push(from_sql(row.get_ref(i)?));
            }
            rows.push(out);
        }
        Ok(RowSet { columns, rows })
    }

    fn insert_rows(
        &mut self,
        table: &str,
        columns: &[String],
        rows: &[Vec<Value>],
    ) -> Result<u64, DbError> {
        let d = self.dialect();
        let cols = columns.iter().map(|c| d.quote(c)).collect::<Vec<_>>().join(", ");
        let marks = vec!["?"; columns.len()].join(", ");
        let sql = format!("INSERT INTO {} ({cols}) VALUES ({marks})", d.quote(table));
        let tx = self.conn.transaction()?;
        {
            let mut stmt = tx.prepare(&sql)?;
            for row in rows {
                if row.len() != columns.len() {
                    return Err(DbError(format!(
                        "row has {} values, table {table} expects {}",
                        row.len(),
                        columns.len()
                    )));
                }
                stmt.execute(params_from_iter(row.iter()))?;
            }
        }
        tx.commit()?;
        Ok(rows.len() as u64)
    }

    fn table_columns(&mut self, table: &str) -> Result<Option<Vec<(String, String)>>, DbError> {
        let mut stmt = self
            .conn
            .prepare("SELECT name, type FROM pragma_table_info(?1) ORDER BY cid")?;
        let cols = stmt
            .query_map([table], |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?)))?
            .collect::<Result<Vec<_>, _>>()?;
        Ok((!cols.is_empty()).then_some(cols))
    }

    fn list_tables(&mut self) -> Result<Vec<String>, DbError> {
        let mut stmt = self
            .conn
            .prepare("SELECT name FROM sqlite_master WHERE type = 'table' ORDER BY name")?;
        let names = stmt
            .query_map([], |r| r.get::<_, String>(0))?
            .collect::<Result<Vec<_>, _>>()?;
        Ok(names)
    }
}
