use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use histql_core::executor::{self, ContingencyModel};
use histql_core::ingest::{self, SchemaFile, SplitSpec};
use histql_core::schema::validate_config;
use histql_core::sqlgen::{self, EvalTable};
use histql_core::{
    Binning, ColumnRole, DbConnection, Dialect, Error, ModelConfig, RenderedStatement,
    SqliteConnection, StatementId, ValidatedConfig,
};

#[derive(Parser)]
#[command(name = "histql", version, about = "Multidimensional histogram classification in SQL")]
struct Cli {
    /// Database to work in: a SQLite file path, `sqlite://<path>` or `:memory:`.
    #[arg(long, env = "HISTQL_DB", default_value = "histql.db", global = true)]
    db: String,

    /// SQL dialect. Only `sqlite` can execute; the others render with `show-sql`.
    #[arg(long, default_value = "sqlite", global = true)]
    dialect: String,

    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a CSV file described by a schema sidecar, pivoting one-hot groups.
    Ingest {
        csv: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// Table name; defaults to the one in the schema file.
        #[arg(long)]
        table: Option<String>,
    },
    /// Split a table into training and evaluation tables.
    Split {
        table: String,
        #[arg(long, default_value_t = 0.8)]
        fraction: f64,
        #[arg(long, default_value_t = 1)]
        seed: i64,
        /// Defaults to `<table>_train`.
        #[arg(long)]
        train_table: Option<String>,
        /// Defaults to `<table>_eval`.
        #[arg(long)]
        eval_table: Option<String>,
    },
    /// Rank columns by mutual information with the target.
    Rank {
        table: String,
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = executor::DEFAULT_RANK_BINNING)]
        binning: Binning,
        #[arg(long, default_value_t = executor::DEFAULT_RANK_BINS)]
        bins: u32,
        #[command(flatten)]
        kinds: KindArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Train a model.
    Train {
        table: String,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        kinds: KindArgs,
        /// Replace existing tables of the model.
        #[arg(long)]
        force: bool,
    },
    /// Predict a table with a trained model into `<model_id>_P`.
    Predict {
        eval_table: String,
        #[arg(long)]
        model_id: String,
    },
    /// Predict a table and report accuracy against its truth column.
    Evaluate {
        eval_table: String,
        #[arg(long)]
        model_id: String,
        /// Truth column; defaults to the model's target.
        #[arg(long)]
        truth: Option<String>,
    },
    /// Print generated statements without running them.
    ShowSql(ShowSqlArgs),
    /// Write class proportions per bin of one or two model features.
    ExportDist {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        dims: u8,
        /// Defaults to the first `dims` model features.
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
        #[arg(long)]
        model_id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop every table of a model.
    Drop {
        #[arg(long)]
        model_id: String,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    target: String,
    #[arg(long, value_delimiter = ',', required = true)]
    features: Vec<String>,
    #[arg(long, default_value_t = Binning::Ewb)]
    binning: Binning,
    #[arg(long, default_value_t = 60)]
    bins: u32,
    #[arg(long)]
    model_id: String,
}

#[derive(Args)]
struct KindArgs {
    /// Numeric columns to treat as categorical.
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
}

#[derive(Args)]
struct ShowSqlArgs {
    /// QT, QMT, M, MAJ, QE, QE_IX, P, EVAL, EXPORT1D, EXPORT2D, RANK or `all`.
    step: String,
    #[arg(long)]
    model_id: String,
    /// Training table. Without it the model is read from the database.
    #[arg(long)]
    table: Option<String>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long, value_delimiter = ',')]
    features: Vec<String>,
    #[arg(long, default_value_t = Binning::Ewb)]
    binning: Binning,
    #[arg(long, default_value_t = 60)]
    bins: u32,
    /// Schema sidecar describing the training table, instead of reading
    /// the database.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Table for QE, P and EVAL; defaults to the training table.
    #[arg(long)]
    eval_table: Option<String>,
    #[command(flatten)]
    kinds: KindArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

fn open(cli: &Cli) -> Result<SqliteConnection, Error> {
    let dialect = Dialect::by_name(&cli.dialect)?;
    if dialect.name != Dialect::SQLITE.name {
        return Err(Error::DialectUnsupported {
            dialect: dialect.name,
            reason: "only the sqlite backend can execute; use show-sql to render",
        });
    }
    log::info!("opening {}", cli.db);
    Ok(SqliteConnection::from_url(&cli.db)?)
}

fn seconds(started: Instant) -> String {
    format!("{:.1}s", started.elapsed().as_secs_f64())
}

fn validated(
    conn: &mut SqliteConnection,
    table: &str,
    model: &ModelArgs,
    kinds: &KindArgs,
) -> Result<ValidatedConfig, Error> {
    let schema = executor::describe_table(conn, table, Some(&model.target), &kinds.categorical)?;
    let config = ModelConfig {
        model_id: model.model_id.clone(),
        features: model.features.clone(),
        target: model.target.clone(),
        binning: model.binning,
        bins: model.bins,
    };
    validate_config(&config, &schema)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let mut out = io::stdout().lock();
    match &cli.command {
        Command::Ingest { csv, schema, table } => {
            let file = SchemaFile::load(schema)?;
            let mut conn = open(cli)?;
            let started = Instant::now();
            let (table, rows) = ingest::ingest_file(&mut conn, csv, &file, table.as_deref())?;
            writeln!(out, "{rows} rows loaded into {table} ({})", seconds(started))?;
        }
        Command::Split {
            table,
            fraction,
            seed,
            train_table,
            eval_table,
        } => {
            let spec = SplitSpec::new(*fraction, *seed)?;
            let mut conn = open(cli)?;
            let train = train_table.clone().unwrap_or_else(|| format!("{table}_train"));
            let eval = eval_table.clone().unwrap_or_else(|| format!("{table}_eval"));
            ingest::split(&mut conn, table, &spec, &train, &eval)?;
            for t in [&train, &eval] {
                let sql = format!("SELECT COUNT(*) FROM {}", conn.dialect().quote(t));
                let n = conn.query(&sql)?;
                writeln!(out, "{t}: {} rows", n.scalar().map(ToString::to_string).unwrap_or_default())?;
            }
        }
        Command::Rank {
            table,
            target,
            binning,
            bins,
            kinds,
            format,
        } => {
            let mut conn = open(cli)?;
            let schema = executor::describe_table(&mut conn, table, Some(target), &kinds.categorical)?;
            let started = Instant::now();
            let scores = executor::rank(&mut conn, &schema, target, *binning, *bins)?;
            match format {
                Format::Csv => {
                    writeln!(out, "feature,mi_bits")?;
                    for s in &scores {
                        writeln!(out, "{},{}", s.feature, s.mi_bits)?;
                    }
                }
                Format::Text => {
                    for (i, s) in scores.iter().enumerate() {
                        writeln!(out, "{i:<3} {:<40} {:.6}", s.feature, s.mi_bits)?;
                    }
                    writeln!(out, "ranked {} columns in {}", scores.len(), seconds(started))?;
                }
            }
        }
        Command::Train {
            table,
            model,
            kinds,
            force,
        } => {
            let mut conn = open(cli)?;
            let config = validated(&mut conn, table, model, kinds)?;
            let started = Instant::now();
            let trained = executor::train(&mut conn, &config, *force)?;
            writeln!(out, "trained_row_count {}", trained.trained_row_count)?;
            writeln!(out, "majority_class {}", trained.majority_class)?;
            writeln!(out, "elapsed {}", seconds(started))?;
        }
        Command::Predict {
            eval_table,
            model_id,
        } => {
            let mut conn = open(cli)?;
            let model = executor::load_model(&mut conn, model_id)?;
            let started = Instant::now();
            let table = executor::predict(&mut conn, &model, eval_table)?;
            writeln!(out, "predictions written to {table}")?;
            writeln!(out, "elapsed {}", seconds(started))?;
        }
        Command::Evaluate {
            eval_table,
            model_id,
            truth,
        } => {
            let mut conn = open(cli)?;
            let model = executor::load_model(&mut conn, model_id)?;
            let truth = truth.as_deref().unwrap_or(model.config.target());
            let report = executor::evaluate(&mut conn, &model, eval_table, truth)?;
            writeln!(out, "rows {}", report.total_rows)?;
            writeln!(out, "correct {}", report.correct_rows)?;
            writeln!(out, "accuracy {:.4}", report.accuracy)?;
            writeln!(out, "fallback_rows {}", report.fallback_rows)?;
            writeln!(out, "elapsed {:.1}s", report.wall_time_seconds)?;
        }
        Command::ShowSql(args) => {
            for stmt in show_sql(cli, args)? {
                writeln!(out, "-- {}\n{};\n", stmt.id, stmt.sql)?;
            }
        }
        Command::ExportDist {
            dims,
            features,
            model_id,
            out: path,
        } => {
            let mut conn = open(cli)?;
            let model = executor::load_model(&mut conn, model_id)?;
            let features = if features.is_empty() {
                model.config.features().iter().take(*dims as usize).cloned().collect()
            } else {
                features.clone()
            };
            if features.len() != *dims as usize {
                return Err(Error::DimsOutOfRange(features.len()));
            }
            let rows = executor::export_distribution(&mut conn, &model, &features)?;
            write_distribution(path, &model, &features, &rows)?;
            writeln!(out, "{} rows written to {}", rows.len(), path.display())?;
        }
        Command::Drop { model_id } => {
            let mut conn = open(cli)?;
            let n = executor::drop_model(&mut conn, model_id)?;
            writeln!(out, "{n} tables dropped")?;
        }
    }
    Ok(())
}

fn write_distribution(
    path: &Path,
    model: &ContingencyModel,
    features: &[String],
    rows: &[executor::DistributionRow],
) -> Result<(), Error> {
    let mut text = String::new();
    for f in features {
        text.push_str(f);
        text.push(',');
    }
    text.push_str(model.config.target());
    text.push_str(",proportion\n");
    for r in rows {
        for k in &r.keys {
            text.push_str(&k.to_string());
            text.push(',');
        }
        text.push_str(&format!("{},{}\n", r.class, r.proportion));
    }
    fs::write(path, text)?;
    Ok(())
}

fn show_sql(cli: &Cli, args: &ShowSqlArgs) -> Result<Vec<RenderedStatement>, Error> {
    let dialect = Dialect::by_name(&cli.dialect)?;
    let step = if args.step.eq_ignore_ascii_case("all") {
        None
    } else {
        Some(args.step.parse::<StatementId>()?)
    };

    let (config, key) = match &args.table {
        Some(table) => {
            let target = args
                .target
                .clone()
                .ok_or_else(|| Error::Schema("--target is required with --table".to_owned()))?;
            let schema = match &args.schema {
                Some(path) => {
                    let file = SchemaFile::load(path)?;
                    let mut s = ingest::schema_from_file(&file, table);
                    for c in &mut s.columns {
                        c.role = if c.name.eq_ignore_ascii_case(&target) {
                            ColumnRole::Target
                        } else {
                            ColumnRole::Feature
                        };
                    }
                    s
                }
                None => {
                    let mut conn = open(cli)?;
                    executor::describe_table(&mut conn, table, Some(&target), &args.kinds.categorical)?
                }
            };
            let config = ModelConfig {
                model_id: args.model_id.clone(),
                features: args.features.clone(),
                target,
                binning: args.binning,
                bins: args.bins,
            };
            let config = validate_config(&config, &schema)?;
            let key = config.key_column().map(str::to_owned);
            (config, key)
        }
        None => {
            let mut conn = open(cli)?;
            let model = executor::load_model(&mut conn, &args.model_id)?;
            let key = model.config.key_column().map(str::to_owned);
            (model.config, key)
        }
    };
    let eval_name = args
        .eval_table
        .clone()
        .unwrap_or_else(|| config.source_table().to_owned());
    let eval = EvalTable {
        name: &eval_name,
        key_column: key.as_deref(),
    };

    let mut all = sqlgen::render_pipeline_train(&config, dialect)?;
    all.extend(sqlgen::render_pipeline_predict(&config, &eval, dialect)?);
    let Some(step) = step else {
        return Ok(all);
    };
    if let Some(stmt) = all.iter().find(|s| s.id == step) {
        return Ok(vec![stmt.clone()]);
    }
    let stmt = match step {
        StatementId::Evaluate => sqlgen::render_evaluation(&config, &eval, config.target(), dialect)?,
        StatementId::Export1d => sqlgen::render_distribution_export(&config, 1, dialect)?,
        StatementId::Export2d => sqlgen::render_distribution_export(&config, 2, dialect)?,
        StatementId::Rank => {
            let schema = config.training_schema();
            let stmts = sqlgen::render_rank_query(&schema, config.target(), config.binning(), config.bins(), dialect)?;
            return Ok(stmts.into_iter().map(|(_, s)| s).collect());
        }
        other => return Err(Error::Template(format!("no statement for step {other}"))),
    };
    Ok(vec![stmt])
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            if matches!(e, Error::TableExists(_)) && matches!(cli.command, Command::Train { .. }) {
                eprintln!("hint: pass --force to retrain the model");
            }
            ExitCode::FAILURE
        }
    }
}
