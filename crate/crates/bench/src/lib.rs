//! Synthetic workloads shared by the benchmarks.

use histql_core::executor::{self, ContingencyModel};
use histql_core::schema::validate_config;
use histql_core::{
    Binning, ColumnKind, ColumnSpec, DbConnection, ModelConfig, SqliteConnection, TableSchema,
    Value,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const NUMERIC_FEATURES: usize = 4;
pub const CATEGORIES: [&str; 5] = ["a", "b", "c", "d", "e"];
pub const CLASSES: i64 = 7;

/// `n` values drawn from a skewed mix so that equal width and equal rank
/// bins differ.
pub fn skewed_values(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            if rng.random_bool(0.2) {
                1000.0 * u
            } else {
                (u * 50.0).round()
            }
        })
        .collect()
}

/// Columns `x0..x3` (numeric), `cat` (categorical) and an integer class
/// `y` that depends on `x0` and `cat` with some noise.
pub fn rows(n: usize, seed: u64) -> Vec<Vec<Value>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut r = vec![Value::Integer(i as i64 + 1)];
            let x0: f64 = rng.random_range(0.0..100.0);
            r.push(Value::Real(x0));
            for _ in 1..NUMERIC_FEATURES {
                r.push(Value::Real(rng.random_range(-10.0..10.0)));
            }
            let c = rng.random_range(0..CATEGORIES.len());
            r.push(Value::Text(CATEGORIES[c].to_owned()));
            let y = if rng.random_bool(0.1) {
                rng.random_range(1..=CLASSES)
            } else {
                ((x0 as i64 / 20) + c as i64) % CLASSES + 1
            };
            r.push(Value::Integer(y));
            r
        })
        .collect()
}

pub fn column_names() -> Vec<String> {
    let mut cols = vec!["row_id".to_owned()];
    cols.extend((0..NUMERIC_FEATURES).map(|j| format!("x{j}")));
    cols.push("cat".to_owned());
    cols.push("y".to_owned());
    cols
}

pub fn schema(table: &str) -> TableSchema {
    let mut cols: Vec<ColumnSpec> = (0..NUMERIC_FEATURES)
        .map(|j| ColumnSpec::feature(format!("x{j}"), ColumnKind::Numeric))
        .collect();
    cols.push(ColumnSpec::feature("cat", ColumnKind::Categorical));
    cols.push(ColumnSpec::target("y", ColumnKind::Categorical));
    TableSchema::new(table, cols).with_key("row_id")
}

/// In-memory database holding `rows(n, seed)` as `table`.
pub fn database(table: &str, n: usize, seed: u64) -> SqliteConnection {
    let mut conn = SqliteConnection::open_in_memory().expect("in-memory database");
    let mut defs = vec!["\"row_id\" INTEGER PRIMARY KEY".to_owned()];
    defs.extend((0..NUMERIC_FEATURES).map(|j| format!("\"x{j}\" REAL")));
    defs.push("\"cat\" TEXT".to_owned());
    defs.push("\"y\" INTEGER".to_owned());
    conn.execute(&format!("CREATE TABLE \"{table}\" ({})", defs.join(", ")))
        .expect("create table");
    conn.insert_rows(table, &column_names(), &rows(n, seed))
        .expect("insert rows");
    conn
}

pub fn train(
    conn: &mut SqliteConnection,
    table: &str,
    model_id: &str,
    binning: Binning,
    bins: u32,
) -> ContingencyModel {
    let config = ModelConfig {
        model_id: model_id.to_owned(),
        features: vec!["x0".into(), "x1".into(), "cat".into()],
        target: "y".into(),
        binning,
        bins,
    };
    let config = validate_config(&config, &schema(table)).expect("valid config");
    executor::train(conn, &config, true).expect("train")
}
