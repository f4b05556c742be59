use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SCHEMA: &str = r#"
table = "flowers"

[[columns]]
name = "petal"
kind = "numeric"

[[columns]]
name = "sepal"
kind = "numeric"

[[columns]]
name = "red"
kind = "numeric"

[[columns]]
name = "blue"
kind = "numeric"

[[columns]]
name = "species"
kind = "categorical"
role = "target"

[[pivot]]
new_column = "colour"
source_columns = ["red", "blue"]
labels = ["R", "B"]
"#;

struct Env {
    dir: TempDir,
}

impl Env {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = String::from("petal,sepal,red,blue,species\n");
        for i in 0..300u32 {
            let petal = f64::from(i % 50) / 10.0;
            let sepal = f64::from((i * 7) % 31);
            let red = u32::from(i % 3 == 0);
            let species = if petal < 2.0 { "setosa" } else if red == 1 { "virginica" } else { "versicolor" };
            writeln!(csv, "{petal},{sepal},{red},{},{species}", 1 - red).unwrap();
        }
        fs::write(dir.path().join("flowers.csv"), csv).unwrap();
        fs::write(dir.path().join("flowers.toml"), SCHEMA).unwrap();
        Env { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_histql"))
            .arg("--db")
            .arg(self.path("test.db"))
            .args(args)
            .env_remove("HISTQL_DB")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "histql {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn ingested(self) -> Self {
        let csv = self.path("flowers.csv");
        let schema = self.path("flowers.toml");
        self.ok(&["ingest", s(&csv), "--schema", s(&schema)]);
        self
    }

    fn trained(self) -> Self {
        let env = self.ingested();
        env.ok(&["split", "flowers", "--fraction", "0.7", "--seed", "3"]);
        env.ok(&[
            "train",
            "flowers_train",
            "--target",
            "species",
            "--features",
            "petal,colour",
            "--bins",
            "10",
            "--model-id",
            "fl",
        ]);
        env
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn value_of<'a>(out: &'a str, key: &str) -> &'a str {
    out.lines()
        .find_map(|l| l.strip_prefix(key).map(str::trim))
        .unwrap_or_else(|| panic!("no `{key}` in {out}"))
}

#[test]
fn ingest_reports_row_count() {
    let env = Env::new();
    let csv = env.path("flowers.csv");
    let out = env.ok(&["ingest", s(&csv), "--schema", s(&env.path("flowers.toml"))]);
    assert!(out.starts_with("300 rows loaded into flowers"), "{out}");
}

#[test]
fn ingest_twice_fails() {
    let env = Env::new().ingested();
    let out = env.run(&["ingest", s(&env.path("flowers.csv")), "--schema", s(&env.path("flowers.toml"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("exists"));
}

#[test]
fn split_partitions_rows() {
    let env = Env::new().ingested();
    let out = env.ok(&["split", "flowers"]);
    let train: u64 = value_of(&out, "flowers_train:").trim_end_matches(" rows").parse().unwrap();
    let eval: u64 = value_of(&out, "flowers_eval:").trim_end_matches(" rows").parse().unwrap();
    assert_eq!(train + eval, 300);
    assert!(train > eval);
}

#[test]
fn rank_csv_is_sorted_by_mutual_information() {
    let env = Env::new().ingested();
    let out = env.ok(&["rank", "flowers", "--target", "species", "--format", "csv"]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("feature,mi_bits"));
    let scores: Vec<(String, f64)> = lines
        .map(|l| {
            let (f, v) = l.split_once(',').unwrap();
            (f.to_owned(), v.parse().unwrap())
        })
        .collect();
    let names: Vec<&str> = scores.iter().map(|(f, _)| f.as_str()).collect();
    assert_eq!(names.len(), 3);
    assert_eq!(names[0], "petal");
    assert!(names.contains(&"colour") && names.contains(&"sepal"));
    assert!(scores.windows(2).all(|w| w[0].1 >= w[1].1));
}

#[test]
fn train_evaluate_and_export() {
    let env = Env::new().trained();

    let out = env.ok(&["evaluate", "flowers_eval", "--model-id", "fl"]);
    let accuracy: f64 = value_of(&out, "accuracy").parse().unwrap();
    assert!(accuracy > 0.9, "{out}");
    assert!(value_of(&out, "elapsed").ends_with('s'));

    let dist = env.path("dist.csv");
    env.ok(&["export-dist", "--dims", "2", "--model-id", "fl", "--out", s(&dist)]);
    let text = fs::read_to_string(&dist).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("petal,colour,species,proportion"));
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    for r in rows {
        let p: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!(p > 0.0 && p <= 1.0);
    }
}

#[test]
fn train_output_reports_rows_and_time() {
    let env = Env::new().ingested();
    env.ok(&["split", "flowers"]);
    let out = env.ok(&[
        "train", "flowers_train", "--target", "species", "--features", "petal", "--model-id", "a",
    ]);
    let rows: u64 = value_of(&out, "trained_row_count").parse().unwrap();
    assert!(rows > 0 && rows < 300);
    let elapsed = value_of(&out, "elapsed");
    let (secs, unit) = elapsed.split_at(elapsed.len() - 1);
    assert_eq!(unit, "s");
    assert_eq!(secs.split_once('.').unwrap().1.len(), 1);
}

#[test]
fn retrain_needs_force() {
    let env = Env::new().trained();
    let args = [
        "train", "flowers_train", "--target", "species", "--features", "petal", "--model-id", "fl",
    ];
    assert!(!env.run(&args).status.success());
    let mut forced = args.to_vec();
    forced.push("--force");
    env.ok(&forced);
}

#[test]
fn predict_writes_prediction_table() {
    let env = Env::new().trained();
    let out = env.ok(&["predict", "flowers_eval", "--model-id", "fl"]);
    assert!(out.contains("fl_P"), "{out}");
}

#[test]
fn show_sql_all_from_model() {
    let env = Env::new().trained();
    let out = env.ok(&["show-sql", "all", "--model-id", "fl", "--eval-table", "flowers_eval"]);
    let ids: Vec<&str> = out.lines().filter_map(|l| l.strip_prefix("-- ")).collect();
    assert_eq!(ids, ["QT", "QMT", "M", "MAJ", "QE", "QE_IX", "P"]);
    assert!(out.contains("\"flowers_eval\""));
}

#[test]
fn show_sql_from_sidecar_without_database() {
    let env = Env::new();
    let out = env.ok(&[
        "--dialect", "postgres", "show-sql", "QT", "--model-id", "x", "--table", "flowers",
        "--target", "species", "--features", "petal,colour", "--binning", "eqrb",
        "--schema", s(&env.path("flowers.toml")),
    ]);
    assert!(out.starts_with("-- QT\n"));
    assert!(out.contains("CREATE TABLE"));
    assert!(!env.path("test.db").exists());
}

#[test]
fn show_sql_aux_steps() {
    let env = Env::new().trained();
    for step in ["EVAL", "EXPORT1D", "EXPORT2D", "RANK"] {
        let out = env.ok(&["show-sql", step, "--model-id", "fl"]);
        assert!(out.contains("SELECT"), "{step}: {out}");
    }
}

#[test]
fn show_sql_unknown_step_fails() {
    let env = Env::new().trained();
    let out = env.run(&["show-sql", "NOPE", "--model-id", "fl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("NOPE"));
}

#[test]
fn other_dialects_do_not_execute() {
    let env = Env::new();
    let out = env.run(&["--dialect", "mysql", "split", "flowers"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mysql"));
}

#[test]
fn unknown_model_fails() {
    let env = Env::new().ingested();
    let out = env.run(&["evaluate", "flowers", "--model-id", "ghost"]);
    assert!(!out.status.success());
}
