use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowSupport {
    Standard,
    None,
}

/// Syntax differences between SQL engines, injected into the templates as
/// substitution values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialect {
    pub name: &'static str,
    /// Opening and closing identifier quote.
    pub identifier_quote: &'static str,
    pub supports_create_table_as: bool,
    pub window_functions: WindowSupport,
    pub ceil_function_name: &'static str,
    /// `{index}`, `{table}` and `{columns}` are replaced.
    pub index_create_syntax: &'static str,
    pub double_type: &'static str,
    pub integer_type: &'static str,
    pub text_type: &'static str,
    /// Engine-provided stable row identifier, if any.
    pub implicit_row_id: Option<&'static str>,
    /// Appended to `SELECT` statements that have no `FROM` clause.
    pub dummy_from: &'static str,
}

impl Dialect {
    pub const SQLITE: Dialect = Dialect {
        name: "sqlite",
        identifier_quote: "\"",
        supports_create_table_as: true,
        window_functions: WindowSupport::Standard,
        ceil_function_name: "CEIL",
        index_create_syntax: "CREATE INDEX {index} ON {table} ({columns})",
        double_type: "REAL",
        integer_type: "INTEGER",
        text_type: "TEXT",
        implicit_row_id: Some("rowid"),
        dummy_from: "",
    };

    pub const MYSQL: Dialect = Dialect {
        name: "mysql",
        identifier_quote: "`",
        supports_create_table_as: true,
        window_functions: WindowSupport::Standard,
        ceil_function_name: "CEILING",
        index_create_syntax: "CREATE INDEX {index} ON {table} ({columns})",
        double_type: "DOUBLE",
        integer_type: "SIGNED",
        text_type: "CHAR",
        implicit_row_id: None,
        dummy_from: " FROM DUAL",
    };

    pub const POSTGRES: Dialect = Dialect {
        name: "postgres",
        identifier_quote: "\"",
        supports_create_table_as: true,
        window_functions: WindowSupport::Standard,
        ceil_function_name: "CEIL",
        index_create_syntax: "CREATE INDEX {index} ON {table} ({columns})",
        double_type: "DOUBLE PRECISION",
        integer_type: "BIGINT",
        text_type: "TEXT",
        implicit_row_id: None,
        dummy_from: "",
    };

    pub const ALL: [&'static Dialect; 3] = [&Dialect::SQLITE, &Dialect::MYSQL, &Dialect::POSTGRES];

    pub fn by_name(name: &str) -> Result<&'static Dialect> {
        Dialect::ALL
            .into_iter()
            .find(|d| d.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Template(format!("unknown dialect `{name}`")))
    }

    pub fn quote(&self, ident: &str) -> String {
        format!("{q}{ident}{q}", q = self.identifier_quote)
    }

    /// `alias.ident`, with the identifier quoted.
    pub fn qualified(&self, alias: &str, ident: &str) -> String {
        format!("{alias}.{}", self.quote(ident))
    }

    pub fn cast(&self, expr: &str, ty: &str) -> String {
        format!("CAST({expr} AS {ty})")
    }

    pub fn ceil(&self, expr: &str) -> String {
        format!("{}({expr})", self.ceil_function_name)
    }

    pub fn create_table_as(&self, table: &str) -> Result<String> {
        if !self.supports_create_table_as {
            return Err(self.unsupported("CREATE TABLE ... AS is not available"));
        }
        Ok(format!("CREATE TABLE {} AS", self.quote(table)))
    }

    pub fn create_index(&self, index: &str, table: &str, columns: &[&str]) -> String {
        let cols = columns
            .iter()
            .map(|c| self.quote(c))
            .collect::<Vec<_>>()
            .join(", ");
        self.index_create_syntax
            .replace("{index}", &self.quote(index))
            .replace("{table}", &self.quote(table))
            .replace("{columns}", &cols)
    }

    pub fn require_windows(&self) -> Result<()> {
        match self.window_functions {
            WindowSupport::Standard => Ok(()),
            WindowSupport::None => Err(self.unsupported("window functions are required")),
        }
    }

    pub(crate) fn unsupported(&self, reason: &'static str) -> Error {
        Error::DialectUnsupported {
            dialect: self.name,
            reason,
        }
    }
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

impl FromStr for &'static Dialect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Dialect::by_name(s)
    }
}

/// Single-quoted SQL string literal.
pub fn string_literal(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}
