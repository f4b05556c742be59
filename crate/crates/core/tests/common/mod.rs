#![allow(dead_code)]

use std::fs;
use std::path::Path;

use histql_core::executor::{self, connection::DbConnection};
use histql_core::oracle::{InMemoryDataset, OracleModel};
use histql_core::schema::validate_config;
use histql_core::{
    Binning, ColumnKind, ColumnSpec, ModelConfig, SqliteConnection, TableSchema, ValidatedConfig,
    Value,
};
use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};

pub fn feature_name(j: usize) -> String {
    format!("f{}", j + 1)
}

/// One randomized train/predict scenario.
#[derive(Debug, Clone)]
pub struct Case {
    pub train: InMemoryDataset,
    pub eval: Vec<Vec<Value>>,
    pub binning: Binning,
    pub bins: u32,
    pub integer_target: bool,
    pub keyed: bool,
}

impl Case {
    pub fn kinds(&self) -> &[ColumnKind] {
        self.train.kinds()
    }
}

pub fn sqlite() -> SqliteConnection {
    SqliteConnection::open_in_memory().unwrap()
}

/// Creates `table` with columns `f1..fn`, `y` and optionally `row_id`, and
/// inserts `rows` in order.
pub fn load_rows(
    conn: &mut SqliteConnection,
    table: &str,
    kinds: &[ColumnKind],
    integer_target: bool,
    keyed: bool,
    rows: &[(Vec<Value>, Value)],
) {
    let mut defs = Vec::new();
    let mut cols = Vec::new();
    if keyed {
        defs.push("\"row_id\" INTEGER PRIMARY KEY".to_owned());
        cols.push("row_id".to_owned());
    }
    for (j, k) in kinds.iter().enumerate() {
        let ty = match k {
            ColumnKind::Numeric => "REAL",
            ColumnKind::Categorical => "TEXT",
        };
        defs.push(format!("\"{}\" {ty}", feature_name(j)));
        cols.push(feature_name(j));
    }
    defs.push(format!("\"y\" {}", if integer_target { "INTEGER" } else { "TEXT" }));
    cols.push("y".to_owned());
    conn.execute(&format!("CREATE TABLE \"{table}\" ({})", defs.join(", ")))
        .unwrap();
    let data: Vec<Vec<Value>> = rows
        .iter()
        .enumerate()
        .map(|(i, (x, y))| {
            let mut r = Vec::with_capacity(cols.len());
            if keyed {
                r.push(Value::Integer(i as i64 + 1));
            }
            r.extend(x.iter().cloned());
            r.push(y.clone());
            r
        })
        .collect();
    conn.insert_rows(table, &cols, &data).unwrap();
}

pub fn schema(table: &str, kinds: &[ColumnKind], keyed: bool) -> TableSchema {
    let mut cols: Vec<ColumnSpec> = kinds
        .iter()
        .enumerate()
        .map(|(j, &k)| ColumnSpec::feature(feature_name(j), k))
        .collect();
    cols.push(ColumnSpec::target("y", ColumnKind::Categorical));
    let s = TableSchema::new(table, cols);
    if keyed {
        s.with_key("row_id")
    } else {
        s
    }
}

pub fn config(
    model_id: &str,
    table: &str,
    kinds: &[ColumnKind],
    keyed: bool,
    binning: Binning,
    bins: u32,
) -> ValidatedConfig {
    let cfg = ModelConfig {
        model_id: model_id.to_owned(),
        features: (0..kinds.len()).map(feature_name).collect(),
        target: "y".to_owned(),
        binning,
        bins,
    };
    validate_config(&cfg, &schema(table, kinds, keyed)).unwrap()
}

/// Trains on `train`, predicts `eval` through SQL and returns
/// `(predicted, matched)` per eval row in eval order.
pub fn sql_predictions(conn: &mut SqliteConnection, case: &Case) -> Vec<(Value, bool)> {
    let kinds = case.kinds().to_vec();
    load_rows(conn, "train", &kinds, case.integer_target, case.keyed, case.train.rows());
    let eval_rows: Vec<(Vec<Value>, Value)> =
        case.eval.iter().map(|r| (r.clone(), Value::Null)).collect();
    load_rows(conn, "eval", &kinds, case.integer_target, case.keyed, &eval_rows);
    let cfg = config("m", "train", &kinds, case.keyed, case.binning, case.bins);
    let model = executor::train(conn, &cfg, false).unwrap();
    executor::predict(conn, &model, "eval").unwrap();
    let preds = executor::read_predictions(conn, &model).unwrap();
    assert_eq!(preds.len(), case.eval.len());
    preds
        .into_iter()
        .enumerate()
        .map(|(i, (key, p, m))| {
            assert_eq!(key, i as i64 + 1);
            (p, m)
        })
        .collect()
}

pub fn oracle_predictions(case: &Case) -> Vec<(Value, bool)> {
    let model = OracleModel::fit(&case.train, case.binning, case.bins).unwrap();
    case.eval.iter().map(|r| model.predict(r).unwrap()).collect()
}

fn numeric_value(rng: &mut impl RngCore, style: u8) -> f64 {
    match style {
        0 => rng.random_range(0..6) as f64,
        1 => (rng.random_range(-10_000..10_000) as f64) / 100.0,
        2 => 42.0,
        _ => rng.random_range(-1.0e6..1.0e6),
    }
}

/// A random case with 1..=max_rows complete-or-not training rows.
pub fn random_case(rng: &mut impl RngCore, max_rows: usize) -> Case {
    let n_features = rng.random_range(1..=4);
    let kinds: Vec<ColumnKind> = (0..n_features)
        .map(|_| {
            if rng.random_bool(0.5) {
                ColumnKind::Numeric
            } else {
                ColumnKind::Categorical
            }
        })
        .collect();
    let styles: Vec<u8> = kinds.iter().map(|_| rng.random_range(0..4)).collect();
    let arity: Vec<usize> = kinds.iter().map(|_| rng.random_range(1..=5)).collect();
    let n_classes = rng.random_range(1..=4);
    let integer_target = rng.random_bool(0.3);
    let null_rate = if rng.random_bool(0.3) { 0.05 } else { 0.0 };

    let class = |rng: &mut dyn RngCore, hint: usize| -> Value {
        let c = if rng.random_bool(0.6) {
            hint % n_classes
        } else {
            rng.random_range(0..n_classes)
        };
        if integer_target {
            Value::Integer(c as i64 + 1)
        } else {
            Value::Text(["A", "B", "C", "D"][c].to_owned())
        }
    };

    let n_rows = rng.random_range(1..=max_rows);
    let mut rows = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let mut x = Vec::with_capacity(n_features);
        let mut hint = 0usize;
        for j in 0..n_features {
            if rng.random_bool(null_rate) {
                x.push(Value::Null);
                continue;
            }
            match kinds[j] {
                ColumnKind::Numeric => {
                    let v = numeric_value(rng, styles[j]);
                    hint += (v.abs() as usize) / 7;
                    x.push(Value::Real(v));
                }
                ColumnKind::Categorical => {
                    let c = rng.random_range(0..arity[j]);
                    hint += c;
                    x.push(Value::Text(format!("v{c}")));
                }
            }
        }
        rows.push((x, class(rng, hint)));
    }
    // Training needs at least one complete row.
    if let Some((x, y)) = rows.first_mut() {
        for (v, k) in x.iter_mut().zip(&kinds) {
            if v.is_null() {
                *v = match k {
                    ColumnKind::Numeric => Value::Real(1.0),
                    ColumnKind::Categorical => Value::from("v0"),
                };
            }
        }
        if y.is_null() {
            *y = Value::Integer(1);
        }
    }
    let train = InMemoryDataset::new(kinds.clone(), rows).unwrap();

    let n_eval = rng.random_range(1..=200);
    let mut eval = Vec::with_capacity(n_eval);
    for _ in 0..n_eval {
        let base = &train.rows().choose(rng).unwrap().0;
        let row: Vec<Value> = base
            .iter()
            .zip(&kinds)
            .enumerate()
            .map(|(j, (v, k))| match rng.random_range(0..10) {
                0 => Value::Null,
                1 | 2 => match k {
                    ColumnKind::Numeric => Value::Real(numeric_value(rng, styles[j]) * 3.0 - 500.0),
                    ColumnKind::Categorical => Value::from("unseen"),
                },
                3 => match k {
                    ColumnKind::Numeric => Value::Real(numeric_value(rng, styles[j])),
                    ColumnKind::Categorical => {
                        Value::Text(format!("v{}", rng.random_range(0..arity[j])))
                    }
                },
                _ => v.clone(),
            })
            .collect();
        eval.push(row);
    }

    Case {
        train,
        eval,
        binning: if rng.random_bool(0.5) { Binning::Eqrb } else { Binning::Ewb },
        bins: rng.random_range(1..=8),
        integer_target,
        keyed: rng.random_bool(0.5),
    }
}

pub fn golden_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

/// Compares `actual` with the golden file `name`, rewriting it instead when
/// `UPDATE_GOLDEN=1`. Returns a description of the mismatch, if any.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden_dir().join(name);
    if std::env::var("UPDATE_GOLDEN").is_ok_and(|v| v == "1") {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = fs::read_to_string(&path)
        .map_err(|e| format!("cannot read golden file {}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!(
            "{name} differs from its golden file\n--- expected\n{expected}\n--- actual\n{actual}"
        ))
    }
}

/// The five Covertype features used for goldens, with their kinds.
pub const COVTYPE_FEATURES: [(&str, ColumnKind); 5] = [
    ("Elevation", ColumnKind::Numeric),
    ("Soil_Type", ColumnKind::Categorical),
    ("Wilderness_Area", ColumnKind::Categorical),
    ("Horizontal_Distance_To_Roadways", ColumnKind::Numeric),
    ("Horizontal_Distance_To_Fire_Points", ColumnKind::Numeric),
];

pub fn covtype_schema(table: &str) -> TableSchema {
    let mut cols: Vec<ColumnSpec> = COVTYPE_FEATURES
        .iter()
        .map(|&(n, k)| ColumnSpec::feature(n, k))
        .collect();
    cols.push(ColumnSpec::target("Cover_Type", ColumnKind::Categorical));
    TableSchema::new(table, cols).with_key("row_id")
}

/// Every statement the generator can emit, for each dialect and binning,
/// named `<dialect>/<binning>_<statement>.sql`.
pub fn golden_statements() -> Vec<(String, String)> {
    use histql_core::sqlgen::{self, Dialect, EvalTable};
    let mut out = Vec::new();
    for d in Dialect::ALL {
        for (binning, bins) in [(Binning::Ewb, 60), (Binning::Eqrb, 39)] {
            let cfg = ModelConfig {
                model_id: "covtype".to_owned(),
                features: COVTYPE_FEATURES.iter().map(|(n, _)| n.to_string()).collect(),
                target: "Cover_Type".to_owned(),
                binning,
                bins,
            };
            let cfg = validate_config(&cfg, &covtype_schema("covtype_train")).unwrap();
            let eval = EvalTable {
                name: "covtype_eval",
                key_column: Some("row_id"),
            };
            let mut stmts = sqlgen::render_pipeline_train(&cfg, d).unwrap();
            stmts.extend(sqlgen::render_pipeline_predict(&cfg, &eval, d).unwrap());
            stmts.push(sqlgen::render_evaluation(&cfg, &eval, "Cover_Type", d).unwrap());
            stmts.push(sqlgen::render_distribution_export(&cfg, 1, d).unwrap());
            stmts.push(sqlgen::render_distribution_export(&cfg, 2, d).unwrap());
            stmts.push(
                sqlgen::render_rank_feature(
                    "covtype_train",
                    Some("row_id"),
                    "Elevation",
                    ColumnKind::Numeric,
                    "Cover_Type",
                    binning,
                    bins,
                    d,
                )
                .unwrap(),
            );
            let tag = binning.as_str().to_ascii_lowercase();
            for s in stmts {
                out.push((format!("{}/{tag}_{}.sql", d.name, s.id), s.sql + "\n"));
            }
            let unkeyed = EvalTable {
                name: "covtype_eval",
                key_column: None,
            };
            let qe = sqlgen::render_pipeline_predict(&cfg, &unkeyed, d).unwrap().remove(0);
            out.push((format!("{}/{tag}_QE_unkeyed.sql", d.name), qe.sql + "\n"));
        }
    }
    out
}

pub struct CovertypeOutcome {
    pub rows: u64,
    pub ranking: Vec<histql_core::FeatureScore>,
    /// `(binning, bins, report, train + predict seconds)`.
    pub runs: Vec<(Binning, u32, histql_core::EvaluationReport, f64)>,
}

pub fn covertype_schema_file() -> histql_core::ingest::SchemaFile {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas/covertype.toml");
    histql_core::ingest::SchemaFile::load(path).unwrap()
}

/// Ingest, rank, 0.8 split with seed 1, then train and evaluate the five
/// best ranked features with EWB b=60 and EQRB b=39.
pub fn covertype_run(csv: &Path) -> histql_core::Result<CovertypeOutcome> {
    use histql_core::ingest::{self, SplitSpec};
    let mut conn = sqlite();
    let (table, rows) = ingest::ingest_file(&mut conn, csv, &covertype_schema_file(), None)?;
    let schema = executor::describe_table(&mut conn, &table, Some("Cover_Type"), &[])?;
    let ranking = executor::rank(
        &mut conn,
        &schema,
        "Cover_Type",
        executor::DEFAULT_RANK_BINNING,
        executor::DEFAULT_RANK_BINS,
    )?;
    ingest::split(&mut conn, &table, &SplitSpec::new(0.8, 1)?, "covtype_train", "covtype_eval")?;
    let train_schema = executor::describe_table(&mut conn, "covtype_train", Some("Cover_Type"), &[])?;
    let features: Vec<String> = ranking.iter().take(5).map(|s| s.feature.clone()).collect();
    let mut runs = Vec::new();
    for (binning, bins) in [(Binning::Ewb, 60), (Binning::Eqrb, 39)] {
        let cfg = ModelConfig {
            model_id: format!("covtype_{}", binning.as_str().to_ascii_lowercase()),
            features: features.clone(),
            target: "Cover_Type".to_owned(),
            binning,
            bins,
        };
        let cfg = validate_config(&cfg, &train_schema)?;
        let started = std::time::Instant::now();
        let model = executor::train(&mut conn, &cfg, true)?;
        let report = executor::evaluate(&mut conn, &model, "covtype_eval", "Cover_Type")?;
        runs.push((binning, bins, report, started.elapsed().as_secs_f64()));
    }
    Ok(CovertypeOutcome { rows, ranking, runs })
}

/// Top five of the published ranking.
pub const COVTYPE_TOP5: [&str; 5] = [
    "Elevation",
    "Soil_Type",
    "Wilderness_Area",
    "Horizontal_Distance_To_Roadways",
    "Horizontal_Distance_To_Fire_Points",
];

/// Covertype-shaped rows: 10 numbers, one-hot wilderness (4) and soil (40),
/// then the class. The class depends on the first number and the
/// wilderness area so that rankings are not flat.
pub fn write_covertype_like(path: &Path, rows: usize, seed: u64) {
    use rand::SeedableRng;
    use std::io::Write;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = std::io::BufWriter::new(fs::File::create(path).unwrap());
    for _ in 0..rows {
        let elevation: i64 = rng.random_range(1850..3860);
        let mut fields = vec![elevation.to_string()];
        fields.extend((0..9).map(|_| rng.random_range(0..4000).to_string()));
        let wa = rng.random_range(0..4);
        let st = rng.random_range(0..40);
        fields.extend((0..4).map(|i| u8::from(i == wa).to_string()));
        fields.extend((0..40).map(|i| u8::from(i == st).to_string()));
        let class = if rng.random_bool(0.8) {
            1 + ((elevation - 1850) / 400 + wa as i64) % 7
        } else {
            rng.random_range(1..=7)
        };
        fields.push(class.to_string());
        writeln!(out, "{}", fields.join(",")).unwrap();
    }
}
