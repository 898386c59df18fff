//! The `keydist` command line.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::anpm::TrainConfig;
use crate::bundle::{Bundle, EstimatorKind};
use crate::catalog::read_csv;
use crate::error::{Error, Result};
use crate::eval::{generate_workload, read_jsonl, synth, variance_experiment, write_jsonl, NoiseModel, WorkloadConfig};
use crate::join::InferenceMode;
use crate::predicates::CmpOp;
use crate::query::QuerySpec;

#[derive(Debug, Parser)]
#[command(name = "keydist", version, about = "Join cardinality estimation from per-table join-key distributions")]
pub struct Cli {
    /// Root seed for every stochastic step (training, workloads, noise)
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Maximum worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// More log output; repeat for more
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Errors only
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode CSV tables into a bundle (added to it if the bundle exists)
    Ingest(IngestArgs),
    /// Train a model for each table in a bundle
    Train(TrainArgs),
    /// Append rows to one table and retrain only that table
    Update(UpdateArgs),
    /// Estimate the cardinality of one query
    Estimate(EstimateArgs),
    /// Q-error report for a workload
    Evaluate(EvaluateArgs),
    /// Generate a random workload with true cardinalities
    GenWorkload(GenWorkloadArgs),
    /// Noise experiment comparing count-based and selectivity-based inference
    VarianceExp(VarianceArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// CSV file with a header row; the table is named after the file stem
    #[arg(long, required = true, env = "KEYDIST_DATA")]
    pub data: Vec<PathBuf>,
    /// Join-key column
    #[arg(long)]
    pub key: String,
    /// Output bundle
    #[arg(long, env = "KEYDIST_BUNDLE")]
    pub out: PathBuf,
    /// Sub-column width in bits for large domains
    #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u32).range(1..=16))]
    pub bit_width: u32,
    /// Field delimiter
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Bundle file
    #[arg(long, env = "KEYDIST_BUNDLE")]
    pub bundle: PathBuf,
    /// Write the trained bundle here instead of in place
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated tables to train (default: all)
    #[arg(long, value_delimiter = ',')]
    pub tables: Vec<String>,
    /// JSON training config; flags below override it
    #[arg(long, env = "KEYDIST_TRAIN_CONFIG")]
    pub config: Option<PathBuf>,
    /// Passes over the table
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Samples per optimizer step
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam step size
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Embedding width
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Hidden width
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Hidden layers
    #[arg(long)]
    pub layers: Option<usize>,
    /// Hypernetwork bottleneck width
    #[arg(long)]
    pub hyper_width: Option<usize>,
    /// Keep all softmax temperatures fixed at 1
    #[arg(long)]
    pub fixed_temperature: bool,
    /// Per-epoch loss as CSV (table,epoch,loss)
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct UpdateArgs {
    /// Bundle file
    #[arg(long, env = "KEYDIST_BUNDLE")]
    pub bundle: PathBuf,
    /// Table to update
    #[arg(long)]
    pub table: String,
    /// CSV of new rows with the table's columns
    #[arg(long, env = "KEYDIST_DATA")]
    pub data: PathBuf,
    /// Write the result here instead of in place
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Field delimiter
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
}

#[derive(Debug, Args)]
pub struct InferenceArgs {
    /// Use exact per-table distributions instead of the models
    #[arg(long)]
    pub exact: bool,
    /// Count-based inference instead of selectivity-based
    #[arg(long)]
    pub count_based: bool,
}

impl InferenceArgs {
    fn kind(&self) -> EstimatorKind {
        if self.exact {
            EstimatorKind::Exact
        } else {
            EstimatorKind::Learned
        }
    }

    fn mode(&self) -> InferenceMode {
        if self.count_based {
            InferenceMode::CountBased
        } else {
            InferenceMode::Selectivity
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Bundle file
    #[arg(long, env = "KEYDIST_BUNDLE")]
    pub bundle: PathBuf,
    /// JSON query file
    #[arg(long, env = "KEYDIST_QUERY")]
    pub query: PathBuf,
    #[command(flatten)]
    pub inference: InferenceArgs,
    /// Write the aligned per-table key distributions as CSV
    #[arg(long)]
    pub dump_dists: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Bundle file
    #[arg(long, env = "KEYDIST_BUNDLE")]
    pub bundle: PathBuf,
    /// JSONL workload, one query per line
    #[arg(long, env = "KEYDIST_WORKLOAD")]
    pub workload: PathBuf,
    /// Per-query CSV report
    #[arg(long, env = "KEYDIST_REPORT")]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub inference: InferenceArgs,
}

#[derive(Debug, Args)]
pub struct GenWorkloadArgs {
    /// Bundle file
    #[arg(long, env = "KEYDIST_BUNDLE")]
    pub bundle: PathBuf,
    /// JSONL output (default: stdout)
    #[arg(long, env = "KEYDIST_WORKLOAD")]
    pub out: Option<PathBuf>,
    /// Number of queries
    #[arg(long, default_value_t = 100)]
    pub queries: usize,
    /// Join operators, used round-robin
    #[arg(long, value_delimiter = ',', default_value = "=,>,<,>=,<=")]
    pub ops: Vec<String>,
    /// Fewest tables per query
    #[arg(long, default_value_t = 2)]
    pub min_tables: usize,
    /// Most tables per query
    #[arg(long, default_value_t = 3)]
    pub max_tables: usize,
    /// Chance that a non-key column gets a predicate
    #[arg(long, default_value_t = 0.4)]
    pub predicate_rate: f64,
    /// Chance of an outer flag per table (equi-joins only)
    #[arg(long, default_value_t = 0.0)]
    pub outer_rate: f64,
    /// Redraws for a query with an empty result
    #[arg(long, default_value_t = 50)]
    pub max_attempts: usize,
}

#[derive(Debug, Args)]
pub struct VarianceArgs {
    /// Join sizes on the 4-table chain database
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    pub sizes: Vec<usize>,
    /// Noise repetitions per size
    #[arg(long, default_value_t = 2000)]
    pub reps: usize,
    /// Noise standard deviation per vector entry
    #[arg(long, default_value_t = 0.01)]
    pub sigma: f64,
    /// Share of the noise common to a table's conditioned and unconditioned vectors
    #[arg(long, default_value_t = 1.0)]
    pub correlation: f64,
    /// CSV report
    #[arg(long, env = "KEYDIST_REPORT")]
    pub report: Option<PathBuf>,
}

/// Full help text of the command and every subcommand.
pub fn help_text() -> String {
    let mut cmd = Cli::command();
    let mut out = cmd.render_long_help().to_string();
    let names: Vec<String> = cmd.get_subcommands().map(|c| c.get_name().to_string()).collect();
    for n in names {
        let sub = cmd.find_subcommand_mut(&n).unwrap();
        out.push_str(&format!("\n=== keydist {n} ===\n"));
        out.push_str(&sub.render_long_help().to_string());
    }
    out
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        }
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    match run(&cli, &mut io::stdout()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command, writing its report to `out`.
pub fn run(cli: &Cli, out: &mut (dyn Write + Send)) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Resource(e.to_string()))?;
    pool.install(|| dispatch(cli, out))
}

fn dispatch(cli: &Cli, out: &mut (dyn Write + Send)) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => ingest(a, out),
        Command::Train(a) => train(cli.seed, a, out),
        Command::Update(a) => update(a, out),
        Command::Estimate(a) => estimate(a, out),
        Command::Evaluate(a) => evaluate(a, out),
        Command::GenWorkload(a) => gen_workload(cli.seed, a, out),
        Command::VarianceExp(a) => variance(cli.seed, a, out),
    }
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Usage(format!("{} is not a readable file", p.display())))
    }
}

fn require_parent(p: &Path) -> Result<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() && !d.is_dir() => {
            Err(Error::Usage(format!("directory {} does not exist", d.display())))
        }
        _ => Ok(()),
    }
}

fn delimiter(c: char) -> Result<u8> {
    u8::try_from(c).map_err(|_| Error::Usage(format!("delimiter {c:?} is not a single byte")))
}

fn ingest(a: &IngestArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    for d in &a.data {
        require_file(d)?;
    }
    require_parent(&a.out)?;
    let delim = delimiter(a.delimiter)?;
    let mut b = if a.out.exists() { Bundle::load(&a.out)? } else { Bundle::new(TrainConfig::default()) };
    for d in &a.data {
        let raw = read_csv(d, delim)?;
        b.insert_table(&raw, &a.key, a.bit_width)?;
        let t = b.table(&raw.name)?;
        writeln!(out, "{}: {} rows, {} columns", raw.name, t.catalog.row_count, t.catalog.columns.len())?;
    }
    b.save(&a.out)
}

fn train_config(seed: Option<u64>, a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            require_file(p)?;
            serde_json::from_str(&fs::read_to_string(p)?).map_err(|e| Error::Usage(format!("{}: {e}", p.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    macro_rules! overlay {
        ($($field:ident).+ = $v:expr) => {
            if let Some(v) = $v {
                cfg.$($field).+ = v;
            }
        };
    }
    overlay!(epochs = a.epochs);
    overlay!(batch_size = a.batch_size);
    overlay!(learning_rate = a.learning_rate);
    overlay!(hyper.embed_dim = a.embed_dim);
    overlay!(hyper.hidden = a.hidden);
    overlay!(hyper.layers = a.layers);
    overlay!(hyper.hyper_width = a.hyper_width);
    if a.fixed_temperature {
        cfg.learn_temperature = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(seed: Option<u64>, a: &TrainArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    require_file(&a.bundle)?;
    let dest = a.out.as_deref().unwrap_or(&a.bundle);
    require_parent(dest)?;
    if let Some(c) = &a.curve {
        require_parent(c)?;
    }
    let cfg = train_config(seed, a)?;
    let mut b = Bundle::load(&a.bundle)?;
    let curves = b.train(&a.tables, &cfg)?;
    let mut csv = String::from("table,epoch,loss\n");
    for (t, c) in &curves {
        for (i, l) in c.iter().enumerate() {
            csv.push_str(&format!("{t},{},{l:.9}\n", i + 1));
        }
        match c.last() {
            Some(l) => writeln!(out, "{t}: {} epochs, final loss {l:.6}", c.len())?,
            None => writeln!(out, "{t}: untrained initial weights")?,
        }
    }
    if let Some(p) = &a.curve {
        fs::write(p, csv)?;
    }
    b.save(dest)
}

fn update(a: &UpdateArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    require_file(&a.bundle)?;
    require_file(&a.data)?;
    let dest = a.out.as_deref().unwrap_or(&a.bundle);
    require_parent(dest)?;
    let b = Bundle::load(&a.bundle)?;
    let mut raw = read_csv(&a.data, delimiter(a.delimiter)?)?;
    raw.name = a.table.clone();
    let next = b.update_table(&a.table, &raw)?;
    writeln!(out, "{}: {} rows", a.table, next.table(&a.table)?.catalog.row_count)?;
    next.save(dest)
}

fn read_query(p: &Path) -> Result<QuerySpec> {
    require_file(p)?;
    QuerySpec::parse(&fs::read_to_string(p)?)
}

fn estimate(a: &EstimateArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    require_file(&a.bundle)?;
    if let Some(d) = &a.dump_dists {
        require_parent(d)?;
    }
    let spec = read_query(&a.query)?;
    let b = Bundle::load(&a.bundle)?;
    let kind = a.inference.kind();
    let e = b.estimate(&spec, kind, a.inference.mode())?;
    if e.zero_join {
        log::warn!("the unfiltered join is empty; estimate is 0");
    }
    writeln!(out, "cardinality {}", e.cardinality.round() as u64)?;
    writeln!(out, "selectivity {:.9e}", e.selectivity)?;
    if let Some(d) = &a.dump_dists {
        fs::write(d, dists_csv(&b.distributions(&spec, kind)?)?)?;
    }
    Ok(())
}

/// `key` then conditioned, unconditioned and count columns per member.
fn dists_csv(v: &serde_json::Value) -> Result<String> {
    let bad = || Error::Shape("malformed distribution dump".into());
    let keys = v["keys"].as_array().ok_or_else(bad)?;
    let members = v["members"].as_array().ok_or_else(bad)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["key".to_string()];
    for (i, m) in members.iter().enumerate() {
        let t = m["table"].as_str().ok_or_else(bad)?;
        for f in ["conditioned", "unconditioned", "count"] {
            header.push(format!("{i}:{t}.{f}"));
        }
    }
    w.write_record(&header)?;
    for (r, k) in keys.iter().enumerate() {
        let mut row = vec![match k {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        }];
        for m in members {
            for f in ["conditioned", "unconditioned", "key_counts"] {
                row.push(m[f][r].as_f64().ok_or_else(bad)?.to_string());
            }
        }
        w.write_record(&row)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).map_err(|_| bad())
}

fn evaluate(a: &EvaluateArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    require_file(&a.bundle)?;
    require_file(&a.workload)?;
    if let Some(r) = &a.report {
        require_parent(r)?;
    }
    let workload = read_jsonl(BufReader::new(fs::File::open(&a.workload)?))?;
    let b = Bundle::load(&a.bundle)?;
    let report = b.evaluate(&workload, a.inference.kind(), a.inference.mode())?;
    if let Some(r) = &a.report {
        fs::write(r, report.to_csv())?;
    }
    out.write_all(report.summary().as_bytes())?;
    Ok(())
}

fn gen_workload(seed: Option<u64>, a: &GenWorkloadArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    require_file(&a.bundle)?;
    if let Some(o) = &a.out {
        require_parent(o)?;
    }
    let ops = a.ops.iter().map(|s| CmpOp::parse(s.trim())).collect::<Result<Vec<_>>>()?;
    for (name, r) in [("--predicate-rate", a.predicate_rate), ("--outer-rate", a.outer_rate)] {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Usage(format!("{name} {r} outside [0, 1]")));
        }
    }
    let cfg = WorkloadConfig {
        queries: a.queries,
        ops,
        min_tables: a.min_tables,
        max_tables: a.max_tables,
        predicate_rate: a.predicate_rate,
        outer_rate: a.outer_rate,
        seed: seed.unwrap_or(0),
        max_attempts: a.max_attempts,
    };
    let b = Bundle::load(&a.bundle)?;
    let w = generate_workload(&b.catalogs(), &cfg)?;
    match &a.out {
        Some(p) => {
            let mut buf = Vec::new();
            write_jsonl(&mut buf, &w)?;
            fs::write(p, buf)?;
            writeln!(out, "{} queries", w.len())?;
        }
        None => write_jsonl(out, &w)?,
    }
    Ok(())
}

fn variance(seed: Option<u64>, a: &VarianceArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    if let Some(r) = &a.report {
        require_parent(r)?;
    }
    let noise = NoiseModel { sigma: a.sigma, correlation: a.correlation, seed: seed.unwrap_or(0) };
    let (db, preds) = synth::chain_database()?;
    let report = variance_experiment(&db, &preds, &noise, &a.sizes, a.reps)?;
    if let Some(r) = &a.report {
        fs::write(r, report.to_csv())?;
    }
    out.write_all(report.summary().as_bytes())?;
    writeln!(out, "ordering {}", if report.ordering_holds() { "holds" } else { "violated" })?;
    Ok(())
}
