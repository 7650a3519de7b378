//! Command-line front end: configuration, subcommand dispatch and the exit
//! code taxonomy (1 usage/configuration, 2 data, 3 numeric).

pub mod serve;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::admnet::{load_checkpoint, save_checkpoint, ModelParams, NetConfig};
use crate::error::{CheckpointError, Error, Result};
use crate::evalkit::{self, CIndexReference, ContextOracle, EvalOptions, EvalResult, SweepAxis};
use crate::features::{read_field_decls, read_log, read_log_rows, split_indices, write_field_decls, write_log, Dataset, FieldDecl};
use crate::nllloss::LossConfig;
use crate::pricegrid::PriceGrid;
use crate::synthgen::{build_world, Oracle, SynthConfig};
use crate::trainer::{self, LossKind, TrainConfig};

/// Dataset generation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub n_auctions: usize,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            n_auctions: 200_000,
            seed: 1,
        }
    }
}

/// Train/validation/test split settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            fractions: [0.8, 0.1, 0.1],
            seed: 1,
        }
    }
}

/// File locations used when the matching flag is absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub data: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub oracle: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// Everything a run needs, loaded from one JSON file. Relative paths are
/// resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: PriceGrid,
    /// Field-declaration file; defaults to the sidecar next to each dataset.
    pub schema: Option<PathBuf>,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub net: NetConfig,
    pub synth: SynthConfig,
    pub generate: GenerateConfig,
    pub split: SplitConfig,
    pub eval: EvalOptions,
    /// Spread of the Gaussian-linear baseline in scaled-price units.
    pub gaussian_sigma: f64,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: PriceGrid::default(),
            schema: None,
            loss: LossConfig::default(),
            train: TrainConfig::default(),
            net: NetConfig::default(),
            synth: SynthConfig::default(),
            generate: GenerateConfig::default(),
            split: SplitConfig::default(),
            eval: EvalOptions::default(),
            gaussian_sigma: 0.5,
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::config(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        resolve(&mut cfg.schema);
        let paths = &mut cfg.paths;
        for p in [
            &mut paths.data,
            &mut paths.train,
            &mut paths.val,
            &mut paths.test,
            &mut paths.oracle,
            &mut paths.checkpoint,
            &mut paths.report,
        ] {
            resolve(p);
        }
        cfg.finish()?;
        Ok(cfg)
    }

    /// Propagates shared sections into nested configs and validates them.
    fn finish(&mut self) -> Result<()> {
        self.synth.grid = self.grid;
        self.train.loss = self.loss;
        self.synth.validate()?;
        self.train.validate()?;
        if self.gaussian_sigma.is_nan() || self.gaussian_sigma <= 0.0 {
            return Err(Error::config("gaussian_sigma must be positive"));
        }
        Ok(())
    }

    fn from_flag(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => RunConfig::load(p),
            None => {
                let mut c = RunConfig::default();
                c.finish()?;
                Ok(c)
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bidscape", version, about = "Bid-landscape forecasting from censored auction logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic auction log and its ground-truth oracle.
    Gen(GenArgs),
    /// Split a log into train/val/test files.
    Split(SplitArgs),
    /// Train a landscape network and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint (and optional baselines) on a test log.
    Eval(EvalArgs),
    /// Replay argmax bids against true prices.
    Replay(EvalArgs),
    /// Train and evaluate over a grid of loss settings.
    Sweep(SweepArgs),
    /// Serve predictions over line-delimited JSON on a TCP port.
    Serve(ServeArgs),
    /// Measure in-process and loopback inference latency.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Run configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Output TSV; the field sidecar is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Number of auctions.
    #[arg(long)]
    n: Option<usize>,
    /// Seed for drawing auctions.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Directory receiving train.tsv, val.tsv and test.tsv.
    #[arg(long)]
    out_dir: PathBuf,
    /// Comma-separated train,val,test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    fractions: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Field declarations (defaults to the data sidecar).
    #[arg(long)]
    fields: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LossKindArg {
    Nll,
    Legacy,
    WinOnly,
}

impl From<LossKindArg> for LossKind {
    fn from(k: LossKindArg) -> Self {
        match k {
            LossKindArg::Nll => LossKind::Nll,
            LossKindArg::Legacy => LossKind::Legacy,
            LossKindArg::WinOnly => LossKind::WinOnly,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    val: Option<PathBuf>,
    /// Checkpoint output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON-lines report path (stdout when absent).
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum)]
    loss_kind: Option<LossKindArg>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    delta_lose: Option<usize>,
    /// Report epoch timings as zero so reports compare byte-for-byte.
    #[arg(long)]
    zero_timings: bool,
    #[arg(long)]
    fields: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineArg {
    Avg,
    Frq,
    Rdm,
    Gaussian,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CIndexRefArg {
    Bid,
    WinningPrice,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Checkpoint to evaluate.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Test log.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Training log for baselines.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Validation log for the Gaussian-linear baseline.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Baselines to evaluate alongside the model.
    #[arg(long, value_enum, value_delimiter = ',')]
    baselines: Vec<BaselineArg>,
    /// Write landscape plot data (CSV) here.
    #[arg(long)]
    plot_data: Option<PathBuf>,
    /// Also report prices in currency per unit duration.
    #[arg(long)]
    raw: bool,
    #[arg(long, value_enum)]
    c_index_ref: Option<CIndexRefArg>,
    /// JSON-lines output (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the sampling baselines.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// delta_lose or alpha_beta.
    #[arg(long)]
    axis: SweepAxis,
    /// Comma-separated values (alpha_beta uses every pair).
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// CSV output (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    fields: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:7878")]
    bind: String,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 20_000)]
    requests: usize,
    #[arg(long, default_value_t = 1)]
    concurrency: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// Sidecar path for a dataset: `data.tsv` → `data.fields.json`.
pub fn fields_path_for(data: &Path) -> PathBuf {
    data.with_extension("fields.json")
}

fn pick(flag: Option<PathBuf>, config: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| config.clone())
        .ok_or_else(|| Error::config(format!("missing {what} path (flag or config)")))
}

fn existing(path: PathBuf) -> Result<PathBuf> {
    if !path.exists() {
        return Err(Error::config(format!("{} does not exist", path.display())));
    }
    Ok(path)
}

fn field_decls(flag: Option<&Path>, cfg: &RunConfig, data: &Path) -> Result<Vec<FieldDecl>> {
    let path = flag
        .map(Path::to_path_buf)
        .or_else(|| cfg.schema.clone())
        .unwrap_or_else(|| fields_path_for(data));
    read_field_decls(&existing(path)?)
}

fn report_skips(path: &Path, report: &crate::features::IngestReport) {
    for (line, reason) in &report.skipped {
        eprintln!("{}:{line}: skipped: {reason}", path.display());
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let cfg = RunConfig::from_flag(args.config.config.as_deref())?;
    let out = pick(args.out, &cfg.paths.data, "output")?;
    let oracle_path = pick(args.oracle, &cfg.paths.oracle, "oracle")?;
    let n = args.n.unwrap_or(cfg.generate.n_auctions);
    let seed = args.seed.unwrap_or(cfg.generate.seed);
    let world = build_world(&cfg.synth)?;
    let rows: Vec<_> = world.sample_auctions(n, seed).into_iter().map(|a| a.row).collect();
    write_log(&out, &world.fields, &rows)?;
    write_field_decls(&fields_path_for(&out), &world.fields)?;
    world.oracle().write(&oracle_path)?;
    Ok(())
}

fn cmd_split(args: SplitArgs) -> Result<()> {
    let cfg = RunConfig::from_flag(args.config.config.as_deref())?;
    let data = existing(pick(args.data, &cfg.paths.data, "data")?)?;
    let fields = field_decls(args.fields.as_deref(), &cfg, &data)?;
    let fractions = match args.fractions {
        Some(f) => (f[0], f[1], f[2]),
        None => {
            let f = cfg.split.fractions;
            (f[0], f[1], f[2])
        }
    };
    let (rows, report) = read_log_rows(&data, &fields)?;
    report_skips(&data, &report);
    let (tr, va, te) = split_indices(rows.len(), fractions, args.seed.unwrap_or(cfg.split.seed))?;
    fs::create_dir_all(&args.out_dir)?;
    for (name, idx) in [("train", tr), ("val", va), ("test", te)] {
        let path = args.out_dir.join(format!("{name}.tsv"));
        let subset: Vec<_> = idx.iter().map(|&i| rows[i].clone()).collect();
        write_log(&path, &fields, &subset)?;
        write_field_decls(&fields_path_for(&path), &fields)?;
    }
    Ok(())
}

fn load_training_data(
    train: &Path,
    val: &Path,
    fields: Option<&Path>,
    cfg: &RunConfig,
) -> Result<(Dataset, Dataset)> {
    let decls = field_decls(fields, cfg, train)?;
    let (train_set, report) = read_log(train, &decls, None, cfg.grid)?;
    report_skips(train, &report);
    let (val_set, report) = read_log(val, &decls, Some(Arc::clone(&train_set.schema)), cfg.grid)?;
    report_skips(val, &report);
    Ok((train_set, val_set))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::from_flag(args.config.config.as_deref())?;
    let data = existing(pick(args.data, &cfg.paths.train, "training data")?)?;
    let val = existing(pick(args.val, &cfg.paths.val, "validation data")?)?;
    let out = pick(args.out, &cfg.paths.checkpoint, "checkpoint")?;
    let report_path = args.report.or_else(|| cfg.paths.report.clone());
    let t = &mut cfg.train;
    if let Some(k) = args.loss_kind {
        t.loss_kind = k.into();
    }
    t.max_epochs = args.epochs.unwrap_or(t.max_epochs);
    t.learning_rate = args.lr.unwrap_or(t.learning_rate);
    t.batch_size = args.batch_size.unwrap_or(t.batch_size);
    t.patience = args.patience.unwrap_or(t.patience);
    t.seed = args.seed.unwrap_or(t.seed);
    cfg.loss.alpha = args.alpha.unwrap_or(cfg.loss.alpha);
    cfg.loss.beta = args.beta.unwrap_or(cfg.loss.beta);
    cfg.loss.delta_lose = args.delta_lose.unwrap_or(cfg.loss.delta_lose);
    cfg.finish()?;

    let (train_set, val_set) = load_training_data(&data, &val, args.fields.as_deref(), &cfg)?;
    let model = crate::admnet::init_params(Arc::clone(&train_set.schema), cfg.grid, cfg.net, cfg.train.seed)?;
    let mut sink = output(report_path.as_deref())?;
    let mut write_err = None;
    let mut model_slot = model;
    let (best, report) = trainer::train_model_with(&mut model_slot, &train_set, &val_set, &cfg.train, |rec| {
        let mut rec = rec.clone();
        if args.zero_timings {
            rec.seconds = 0.0;
        }
        let line = serde_json::to_string(&rec).expect("epoch record serializes");
        if let Err(e) = writeln!(sink, "{line}").and_then(|_| sink.flush()) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    let summary = serde_json::json!({
        "best_epoch": report.best_epoch,
        "best_val_anlp": report.best().val_anlp,
        "gradient_samples": report.gradient_samples,
    });
    writeln!(sink, "{summary}")?;
    sink.flush()?;
    save_checkpoint(&best, &out)?;
    Ok(())
}

/// Loads a checkpoint and the test log encoded under its schema.
fn load_model_and_test(model: &Path, data: &Path, cfg: &RunConfig) -> Result<(ModelParams, Dataset)> {
    let params = load_checkpoint(model)?;
    let decls = params.schema.decls();
    let sidecar = cfg.schema.clone().unwrap_or_else(|| fields_path_for(data));
    if sidecar.exists() {
        let mut declared = read_field_decls(&sidecar)?;
        let mut expected = decls.clone();
        declared.sort_by(|a, b| a.name.cmp(&b.name));
        expected.sort_by(|a, b| a.name.cmp(&b.name));
        if declared != expected {
            return Err(CheckpointError::Fingerprint {
                checkpoint: params.schema.fingerprint(),
                dataset: format!("fields declared in {}", sidecar.display()),
            }
            .into());
        }
    }
    let (test, report) = read_log(data, &decls, Some(Arc::clone(&params.schema)), params.grid)?;
    report_skips(data, &report);
    Ok((params, test))
}

fn cmd_eval(args: EvalArgs, replay_only: bool) -> Result<()> {
    let mut cfg = RunConfig::from_flag(args.config.config.as_deref())?;
    let model_path = existing(pick(args.model, &cfg.paths.checkpoint, "model")?)?;
    let data = existing(pick(args.data, &cfg.paths.test, "test data")?)?;
    if let Some(r) = args.c_index_ref {
        cfg.eval.c_index_reference = match r {
            CIndexRefArg::Bid => CIndexReference::Bid,
            CIndexRefArg::WinningPrice => CIndexReference::WinningPrice,
        };
    }
    cfg.eval.raw_currency |= args.raw;
    let (model, test) = load_model_and_test(&model_path, &data, &cfg)?;
    let oracle = match args.oracle.or_else(|| cfg.paths.oracle.clone()) {
        Some(p) => Some(ContextOracle::new(&model.schema, &Oracle::read(&existing(p)?)?)?),
        None => None,
    };
    let opts = cfg.eval;
    let mut results = vec![evalkit::evaluate_landscape("adm", &model, &test, oracle.as_ref(), &opts)?];

    if !args.baselines.is_empty() {
        let train_path = existing(pick(args.train, &cfg.paths.train, "baseline training data")?)?;
        let (train_set, report) = read_log(&train_path, &model.schema.decls(), Some(Arc::clone(&model.schema)), model.grid)?;
        report_skips(&train_path, &report);
        for b in &args.baselines {
            let r = match b {
                BaselineArg::Avg => evalkit::evaluate_point("avg", &mut evalkit::baseline_avg(&train_set)?, &test, &opts)?,
                BaselineArg::Rdm => {
                    evalkit::evaluate_point("rdm", &mut evalkit::baseline_rdm(model.grid, args.seed), &test, &opts)?
                }
                BaselineArg::Frq => {
                    let mut frq = evalkit::baseline_frq(&train_set, args.seed)?;
                    let mut r = evalkit::evaluate_point("frq", &mut frq, &test, &opts)?;
                    let hist = evalkit::evaluate_landscape("frq", &frq, &test, oracle.as_ref(), &opts)?;
                    r.anlp = hist.anlp;
                    r.tv_divergence = hist.tv_divergence;
                    r
                }
                BaselineArg::Gaussian => {
                    let val_path = existing(pick(args.val.clone(), &cfg.paths.val, "validation data")?)?;
                    let (val_set, _) = read_log(&val_path, &model.schema.decls(), Some(Arc::clone(&model.schema)), model.grid)?;
                    let (gl, _) = evalkit::baseline_gaussian_linear(&train_set, &val_set, cfg.gaussian_sigma, &cfg.train)?;
                    evalkit::evaluate_landscape("gaussian", &gl, &test, oracle.as_ref(), &opts)?
                }
            };
            results.push(r);
        }
    }

    if let Some(plot) = &args.plot_data {
        let rows = evalkit::plot_data(&model, &test, oracle.as_ref())?;
        let mut w = BufWriter::new(File::create(plot)?);
        evalkit::write_plot_csv(&rows, &mut w)?;
        w.flush()?;
    }

    let mut sink = output(args.out.as_deref())?;
    for mut r in results {
        if replay_only {
            r = replay_view(r);
        }
        writeln!(sink, "{}", serde_json::to_string(&r)?)?;
    }
    sink.flush()?;
    Ok(())
}

/// Keeps only the business-replay fields of a result.
fn replay_view(r: EvalResult) -> EvalResult {
    EvalResult {
        mae: None,
        anlp: None,
        c_index: None,
        tv_divergence: None,
        mae_raw: None,
        ..r
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let cfg = RunConfig::from_flag(args.config.config.as_deref())?;
    let train = existing(pick(args.train, &cfg.paths.train, "training data")?)?;
    let val = existing(pick(args.val, &cfg.paths.val, "validation data")?)?;
    let test_path = existing(pick(args.test, &cfg.paths.test, "test data")?)?;
    let (train_set, val_set) = load_training_data(&train, &val, args.fields.as_deref(), &cfg)?;
    let decls = field_decls(args.fields.as_deref(), &cfg, &train)?;
    let (test_set, report) = read_log(&test_path, &decls, Some(Arc::clone(&train_set.schema)), cfg.grid)?;
    report_skips(&test_path, &report);
    let oracle = match args.oracle.or_else(|| cfg.paths.oracle.clone()) {
        Some(p) => Some(ContextOracle::new(&train_set.schema, &Oracle::read(&existing(p)?)?)?),
        None => None,
    };
    let rows = evalkit::sweep(
        args.axis,
        &args.values,
        cfg.net,
        &cfg.train,
        &train_set,
        &val_set,
        &test_set,
        oracle.as_ref(),
        &cfg.eval,
    )?;
    let mut sink = output(args.out.as_deref())?;
    evalkit::write_sweep_csv(&rows, &mut sink)?;
    sink.flush()?;
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> Result<()> {
    let cfg = RunConfig::from_flag(args.config.config.as_deref())?;
    let model = load_checkpoint(&existing(pick(args.model, &cfg.paths.checkpoint, "model")?)?)?;
    let server = serve::start_server(Arc::new(model), args.bind.as_str())?;
    eprintln!("listening on {}", server.local_addr());
    server.wait();
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let cfg = RunConfig::from_flag(args.config.config.as_deref())?;
    let model = load_checkpoint(&existing(pick(args.model, &cfg.paths.checkpoint, "model")?)?)?;
    let report = serve::bench(Arc::new(model), args.requests, args.concurrency, args.seed)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => cmd_gen(a),
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a, false),
        Command::Replay(a) => cmd_eval(a, true),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
