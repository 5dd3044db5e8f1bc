//! Command-line front end: ingestion, statistics, training, evaluation,
//! prediction, and self-verification.
//!
//! Conventions: human-readable progress goes to stderr, machine-readable
//! TSV to stdout (or files under `--out`). Exit codes: 0 success,
//! 1 usage error, 2 data error, 3 numerical failure.

use clap::{Parser, Subcommand};
use curvtkg::autodiff::{grad_check, Tape};
use curvtkg::curvature::{khs_series, CurvatureSchedule, ScheduleKind};
use curvtkg::evaluation::{self, EvalConfig, EvalError, HistoryMode};
use curvtkg::geometry::{self, HModel};
use curvtkg::graphdata::{
    build_filter, build_snapshots, load_dataset, read_bundle, write_bundle, DataError,
    Dataset, IntervalPolicy, Quadruple, SnapshotGraph,
};
use curvtkg::model::{
    advance, nll, prob_object, History, Model, ModelConfig, ModelError, ModelVars,
};
use curvtkg::training::{
    checkpoint_load, checkpoint_save, parse_config_file, train, TrainConfig, TrainError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "curvtkg", version, about = "Curvature-variable hyperbolic embeddings for temporal knowledge graphs")]
struct Cli {
    /// Seed for all randomness in the invoked command.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker cap for inner parallelism (current kernels are single-threaded).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw TSV splits into a binary bundle and report counts.
    Ingest {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// 'yearly' expands [t_start, t_end] rows; 'event' keeps the 4th field.
        #[arg(long, default_value = "yearly")]
        interval: String,
    },
    /// Per-timestamp hierarchy scores and schedule curvatures.
    Stats {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Use this checkpoint's trained schedule instead of the default.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "yearly")]
        interval: String,
    },
    /// Train a model; writes checkpoint.bin and train_log.tsv to --out.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        /// key = value config file; flags override its entries.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        clip_norm: Option<f64>,
        #[arg(long)]
        dim: Option<usize>,
        /// 'poincare' or 'lorentz'.
        #[arg(long)]
        backend: Option<String>,
        /// 'constant', 'timeseries', 'hierscore', or 'combined'.
        #[arg(long)]
        schedule: Option<String>,
        #[arg(long)]
        poly_degree: Option<usize>,
        #[arg(long, default_value = "yearly")]
        interval: String,
    },
    /// Filtered MRR and Hits@k on the test split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// 'sampled' infers future snapshots; 'oracle' uses ground truth.
        #[arg(long, default_value = "sampled")]
        history: String,
        /// Sampled triples per future snapshot.
        #[arg(long)]
        budget: Option<usize>,
        /// Also print one row per ranked prediction.
        #[arg(long)]
        dump_ranks: bool,
        #[arg(long, default_value = "yearly")]
        interval: String,
    },
    /// Rank candidates for a query 's r ? t' or '? r o t'.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 10)]
        topk: usize,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, default_value = "yearly")]
        interval: String,
    },
    /// Finite-difference check of the full loss gradient on a toy instance.
    Gradcheck {
        /// Restrict to one backend; default checks both.
        #[arg(long)]
        backend: Option<String>,
    },
    /// Run the built-in verification suite.
    Selftest {
        /// Additionally verify that this checkpoint's parameters are finite.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config { .. } => CliError::Usage(e.to_string()),
            TrainError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFinite => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(ModelError::NonFinite) => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successes, anything else is usage
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn parse_interval(s: &str) -> Result<IntervalPolicy, CliError> {
    s.parse().map_err(CliError::Usage)
}

fn parse_backend(s: &str) -> Result<HModel, CliError> {
    match s {
        "poincare" | "ball" => Ok(HModel::PoincareBall),
        "lorentz" => Ok(HModel::Lorentz),
        other => Err(CliError::Usage(format!("unknown backend '{other}'"))),
    }
}

fn resolve_data(opt: Option<PathBuf>) -> Result<PathBuf, CliError> {
    opt.or_else(|| std::env::var_os("CURVTKG_DATA").map(PathBuf::from)).ok_or_else(|| {
        CliError::Usage("no data path: pass --data or set CURVTKG_DATA".into())
    })
}

/// Accepts a bundle file, a directory containing bundle.bin, or a
/// directory of raw TSV splits.
fn load_data(path: &Path, policy: IntervalPolicy) -> Result<Dataset, CliError> {
    if path.is_file() {
        return Ok(read_bundle(std::fs::File::open(path)?)?);
    }
    let bundle = path.join("bundle.bin");
    if bundle.is_file() {
        return Ok(read_bundle(std::fs::File::open(bundle)?)?);
    }
    Ok(load_dataset(path, policy)?)
}

fn all_snapshots(ds: &Dataset) -> Vec<SnapshotGraph> {
    build_snapshots(&ds.all_quads(), ds.num_timestamps as usize)
}

/// Ground-truth snapshots for every timestamp strictly before the first
/// test timestamp, built from the train and validation splits.
fn test_context(ds: &Dataset) -> (Vec<SnapshotGraph>, Vec<Quadruple>) {
    let first_test = ds.test.iter().map(|q| q.t).min().unwrap_or(ds.num_timestamps);
    let mut known: Vec<Quadruple> = ds
        .train
        .iter()
        .chain(&ds.valid)
        .filter(|q| q.t < first_test)
        .cloned()
        .collect();
    known.sort();
    (build_snapshots(&known, first_test as usize), ds.test.clone())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { data, out, interval } => cmd_ingest(data, out, &interval),
        Command::Stats { data, checkpoint, interval } => cmd_stats(data, checkpoint, &interval),
        Command::Train {
            data,
            config,
            out,
            lr,
            batch_size,
            epochs,
            window,
            lambda,
            clip_norm,
            dim,
            backend,
            schedule,
            poly_degree,
            interval,
        } => {
            let mut cfg = match config {
                Some(path) => parse_config_file(&path)?,
                None => TrainConfig::default(),
            };
            cfg.seed = cli.seed;
            let mut set = |key: &str, value: Option<String>| -> Result<(), CliError> {
                if let Some(v) = value {
                    cfg.set(key, &v).map_err(CliError::Usage)?;
                }
                Ok(())
            };
            set("lr", lr.map(|v| v.to_string()))?;
            set("batch_size", batch_size.map(|v| v.to_string()))?;
            set("epochs", epochs.map(|v| v.to_string()))?;
            set("window", window.map(|v| v.to_string()))?;
            set("lambda", lambda.map(|v| v.to_string()))?;
            set("clip_norm", clip_norm.map(|v| v.to_string()))?;
            set("dim", dim.map(|v| v.to_string()))?;
            set("backend", backend)?;
            set("schedule", schedule)?;
            set("poly_degree", poly_degree.map(|v| v.to_string()))?;
            cmd_train(data, out, cfg, &interval)
        }
        Command::Evaluate { checkpoint, data, history, budget, dump_ranks, interval } => {
            cmd_evaluate(checkpoint, data, &history, budget, dump_ranks, &interval, cli.seed)
        }
        Command::Predict { checkpoint, data, query, topk, budget, interval } => {
            cmd_predict(checkpoint, data, &query, topk, budget, &interval, cli.seed)
        }
        Command::Gradcheck { backend } => cmd_gradcheck(backend),
        Command::Selftest { checkpoint } => cmd_selftest(checkpoint),
    }
}

fn cmd_ingest(data: Option<PathBuf>, out: PathBuf, interval: &str) -> Result<(), CliError> {
    let policy = parse_interval(interval)?;
    let dir = resolve_data(data)?;
    let ds = load_dataset(&dir, policy)?;
    std::fs::create_dir_all(&out)?;
    let bundle_path = out.join("bundle.bin");
    write_bundle(&ds, std::fs::File::create(&bundle_path)?)?;
    let (_, mean_khs) = khs_series(&all_snapshots(&ds));
    println!("entities\t{}", ds.num_entities);
    println!("relations\t{}", ds.num_relations);
    println!("timestamps\t{}", ds.num_timestamps);
    println!("train_facts\t{}", ds.train.len());
    println!("valid_facts\t{}", ds.valid.len());
    println!("test_facts\t{}", ds.test.len());
    println!("mean_khs\t{mean_khs:.6}");
    eprintln!("wrote {}", bundle_path.display());
    Ok(())
}

fn cmd_stats(
    data: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    interval: &str,
) -> Result<(), CliError> {
    let policy = parse_interval(interval)?;
    let ds = load_data(&resolve_data(data)?, policy)?;
    let sched: CurvatureSchedule = match checkpoint {
        Some(path) => checkpoint_load(&path)?.0.schedule(),
        None => CurvatureSchedule { kind: ScheduleKind::TimeSeries, ..Default::default() },
    };
    let snaps = all_snapshots(&ds);
    let (series, mean_khs) = khs_series(&snaps);
    println!("t\tkhs\tc");
    let mut c_sum = 0.0;
    for (t, &k) in series.iter().enumerate() {
        let c = sched.evaluate(t as u32, k);
        c_sum += c;
        println!("{t}\t{k:.6}\t{c:.6}");
    }
    let mean_c = if series.is_empty() { f64::NAN } else { c_sum / series.len() as f64 };
    println!("mean\t{mean_khs:.6}\t{mean_c:.6}");
    Ok(())
}

fn model_config_from(cfg: &TrainConfig, ds: &Dataset) -> ModelConfig {
    ModelConfig {
        num_entities: ds.num_entities as usize,
        num_relations: ds.num_relations as usize,
        dim: cfg.dim,
        window: cfg.window,
        lambda: cfg.lambda,
        backend: cfg.backend,
        schedule: CurvatureSchedule {
            kind: cfg.schedule,
            poly: vec![0.0; cfg.poly_degree + 1],
            ..Default::default()
        },
    }
}

fn cmd_train(
    data: Option<PathBuf>,
    out: PathBuf,
    cfg: TrainConfig,
    interval: &str,
) -> Result<(), CliError> {
    let policy = parse_interval(interval)?;
    let ds = load_data(&resolve_data(data)?, policy)?;
    if ds.train.is_empty() {
        return Err(CliError::Data("training split is empty".into()));
    }
    let train_horizon = ds.train.iter().map(|q| q.t).max().unwrap() as usize + 1;
    let train_snaps = build_snapshots(&ds.train, train_horizon);
    let mut model = Model::new(model_config_from(&cfg, &ds), cfg.seed);

    // validation context: training snapshots before the first validation
    // timestamp; ground-truth history inside the validation window
    let first_valid = ds.valid.iter().map(|q| q.t).min();
    let filter = build_filter(&ds.all_quads());
    let mut epoch_counter = 0usize;
    let log = train(&mut model, &train_snaps, &cfg, |m| {
        let score = match first_valid {
            None => 0.0,
            Some(fv) => {
                let ctx: Vec<Quadruple> =
                    ds.train.iter().filter(|q| q.t < fv).cloned().collect();
                let context = build_snapshots(&ctx, fv as usize);
                let eval_cfg =
                    EvalConfig { mode: HistoryMode::Oracle, budget: None, seed: cfg.seed };
                match evaluation::evaluate(m, &context, &ds.valid, &filter, &eval_cfg) {
                    Ok((report, _)) => report.mrr,
                    Err(e) => {
                        eprintln!("validation failed: {e}");
                        0.0
                    }
                }
            }
        };
        eprintln!("epoch {epoch_counter}: val_mrr={score:.4}");
        epoch_counter += 1;
        score
    })?;

    std::fs::create_dir_all(&out)?;
    let ckpt = out.join("checkpoint.bin");
    checkpoint_save(&model, None, &ckpt)?;
    let mut log_text = String::from("epoch\tloss\tval_mrr\n");
    for (epoch, loss, val) in &log {
        log_text.push_str(&format!("{epoch}\t{loss:.12}\t{val:.12}\n"));
    }
    std::fs::write(out.join("train_log.tsv"), log_text)?;
    eprintln!("wrote {}", ckpt.display());
    Ok(())
}

fn cmd_evaluate(
    checkpoint: PathBuf,
    data: Option<PathBuf>,
    history: &str,
    budget: Option<usize>,
    dump_ranks: bool,
    interval: &str,
    seed: u64,
) -> Result<(), CliError> {
    let mode: HistoryMode = history.parse().map_err(CliError::Usage)?;
    let policy = parse_interval(interval)?;
    let (model, _) = checkpoint_load(&checkpoint)?;
    let ds = load_data(&resolve_data(data)?, policy)?;
    if ds.test.is_empty() {
        return Err(CliError::Data("test split is empty".into()));
    }
    let (context, test) = test_context(&ds);
    let filter = build_filter(&ds.all_quads());
    let cfg = EvalConfig { mode, budget, seed };
    let (report, ranks) = evaluation::evaluate(&model, &context, &test, &filter, &cfg)?;
    println!("mrr\t{:.6}", report.mrr);
    println!("hits1\t{:.6}", report.hits1);
    println!("hits3\t{:.6}", report.hits3);
    println!("hits10\t{:.6}", report.hits10);
    println!("count\t{}", report.count);
    if dump_ranks {
        for r in &ranks {
            let dir = match r.direction {
                evaluation::Direction::ObjectPred => "object",
                evaluation::Direction::SubjectPred => "subject",
            };
            println!("rank\t{}\t{}\t{}\t{}\t{dir}\t{}", r.quad.s, r.quad.r, r.quad.o, r.quad.t, r.rank);
        }
    }
    Ok(())
}

fn cmd_predict(
    checkpoint: PathBuf,
    data: Option<PathBuf>,
    query: &str,
    topk: usize,
    budget: Option<usize>,
    interval: &str,
    seed: u64,
) -> Result<(), CliError> {
    let policy = parse_interval(interval)?;
    let (model, _) = checkpoint_load(&checkpoint)?;
    let ds = load_data(&resolve_data(data)?, policy)?;

    let tokens: Vec<&str> = query.split_whitespace().collect();
    if tokens.len() != 4 {
        return Err(CliError::Usage("query must have 4 fields: 's r ? t' or '? r o t'".into()));
    }
    let parse_id = |s: &str, what: &str| -> Result<u32, CliError> {
        s.parse().map_err(|_| CliError::Usage(format!("bad {what} '{s}' in query")))
    };
    let r = parse_id(tokens[1], "relation")?;
    let t = parse_id(tokens[3], "timestamp")?;
    let (anchor, swap) = match (tokens[0], tokens[2]) {
        ("?", o) if o != "?" => (parse_id(o, "object")?, true),
        (s, "?") if s != "?" => (parse_id(s, "subject")?, false),
        _ => return Err(CliError::Usage("exactly one of subject/object must be '?'".into())),
    };

    // ground truth before t from train+valid, sampled snapshots beyond
    let mut known: Vec<Quadruple> =
        ds.train.iter().chain(&ds.valid).filter(|q| q.t < t).cloned().collect();
    known.sort();
    let horizon = known.iter().map(|q| q.t).max().map_or(0, |m| m + 1);
    let mut timeline = build_snapshots(&known, horizon as usize);
    if (t as usize) > timeline.len() {
        let missing = t as usize - timeline.len();
        let per_step = budget.unwrap_or_else(|| {
            let edges: usize = timeline.iter().map(|g| g.edges.len()).sum();
            edges / timeline.len().max(1)
        });
        let sampled =
            evaluation::multi_step_sample(&model, &timeline, missing, per_step, seed)?;
        timeline.extend(sampled);
    }

    let tape = Tape::new();
    let vars = ModelVars::bind(&tape, &model);
    let start = (t as usize).saturating_sub(model.config.window);
    let mut h = History::empty(&vars);
    for snap in &timeline[start..t as usize] {
        h = advance(&vars, &h, snap)?;
    }
    let scores = prob_object(&vars, &h, anchor, r)?.value().data;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    println!("rank\tentity\tscore");
    for (i, &e) in order.iter().take(topk).enumerate() {
        println!("{}\t{}\t{:.6e}", i + 1, e, scores[e]);
    }
    let _ = swap; // direction only affects which side was anchored
    Ok(())
}

fn toy_gradcheck(backend: HModel) -> (f64, bool) {
    let config = ModelConfig {
        num_entities: 3,
        num_relations: 2,
        dim: 2,
        window: 3,
        lambda: 0.01,
        backend,
        schedule: CurvatureSchedule {
            kind: ScheduleKind::Combined,
            alpha: 0.1,
            beta: -0.02,
            gamma: 0.3,
            omega: 0.5,
            poly: vec![0.05, -0.1, 0.2],
            const_param: 0.4,
        },
    };
    let model = Model::new(config.clone(), 16);
    let snaps = build_snapshots(
        &[
            Quadruple { s: 0, r: 0, o: 1, t: 0 },
            Quadruple { s: 1, r: 1, o: 2, t: 0 },
            Quadruple { s: 2, r: 0, o: 0, t: 1 },
        ],
        2,
    );
    let quads =
        [Quadruple { s: 0, r: 0, o: 1, t: 2 }, Quadruple { s: 2, r: 1, o: 0, t: 2 }];
    let names = model.params.names().to_vec();
    let report = grad_check(
        |_tape, inputs| {
            let vars = ModelVars::from_vars(&config, &names, inputs);
            let mut h = History::empty(&vars);
            for s in &snaps {
                h = advance(&vars, &h, s).unwrap();
            }
            nll(&vars, &h, &quads).unwrap()
        },
        model.params.tensors(),
        1e-5,
        1e-4,
    );
    (report.max_rel_err, report.pass())
}

fn cmd_gradcheck(backend: Option<String>) -> Result<(), CliError> {
    let backends = match backend.as_deref() {
        None => vec![HModel::PoincareBall, HModel::Lorentz],
        Some(s) => vec![parse_backend(s)?],
    };
    println!("backend\tmax_rel_err\tstatus");
    let mut ok = true;
    for b in backends {
        let (err, pass) = toy_gradcheck(b);
        let name = match b {
            HModel::PoincareBall => "poincare",
            HModel::Lorentz => "lorentz",
        };
        println!("{name}\t{err:.3e}\t{}", if pass { "PASS" } else { "FAIL" });
        ok &= pass;
    }
    if !ok {
        return Err(CliError::Numeric("gradient check failed".into()));
    }
    Ok(())
}

fn selftest_geometry() -> bool {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for _ in 0..500 {
        let c = -rng.gen_range(0.05..3.0);
        let d = rng.gen_range(2..5);
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect();
        for backend in [HModel::PoincareBall, HModel::Lorentz] {
            let p = match geometry::lift(&v, c, backend) {
                Ok(p) => p,
                Err(_) => return false,
            };
            let back = geometry::drop(&p);
            if v.iter().zip(&back).any(|(a, b)| (a - b).abs() > 1e-8) {
                return false;
            }
        }
    }
    true
}

fn selftest_end_to_end() -> bool {
    use curvtkg::training::{train_epoch, AdamState};
    let quads = curvtkg::synth::tree_growth(10, 2, 6, 3);
    let snaps = build_snapshots(&quads, 6);
    let cfg = TrainConfig {
        lr: 1e-2,
        batch_size: 64,
        epochs: 2,
        window: 3,
        dim: 4,
        ..Default::default()
    };
    let ds_cfg = ModelConfig {
        num_entities: 10,
        num_relations: 2,
        dim: 4,
        window: 3,
        lambda: cfg.lambda,
        backend: cfg.backend,
        schedule: CurvatureSchedule { kind: cfg.schedule, ..Default::default() },
    };
    let mut model = Model::new(ds_cfg, cfg.seed);
    let mut adam = AdamState::new(&model.params);
    for e in 0..cfg.epochs {
        match train_epoch(&mut model, &snaps[..5], &mut adam, &cfg, e) {
            Ok(loss) if loss.is_finite() => {}
            _ => return false,
        }
    }
    let test: Vec<Quadruple> = quads.iter().filter(|q| q.t == 5).cloned().collect();
    let context = build_snapshots(
        &quads.iter().filter(|q| q.t < 5).cloned().collect::<Vec<_>>(),
        5,
    );
    let filter = build_filter(&quads);
    let eval_cfg = EvalConfig { mode: HistoryMode::Oracle, budget: None, seed: 0 };
    match evaluation::evaluate(&model, &context, &test, &filter, &eval_cfg) {
        Ok((report, _)) => report.mrr > 0.0 && report.mrr <= 1.0,
        Err(_) => false,
    }
}

fn cmd_selftest(checkpoint: Option<PathBuf>) -> Result<(), CliError> {
    let mut ok = true;
    let mut check = |name: &str, pass: bool| {
        println!("{name}\t{}", if pass { "PASS" } else { "FAIL" });
        ok &= pass;
    };
    check("geometry_roundtrip", selftest_geometry());
    let (_, g1) = toy_gradcheck(HModel::PoincareBall);
    check("gradcheck_poincare", g1);
    let (_, g2) = toy_gradcheck(HModel::Lorentz);
    check("gradcheck_lorentz", g2);
    check("end_to_end_pipeline", selftest_end_to_end());
    if let Some(path) = checkpoint {
        let (model, _) = checkpoint_load(&path)?;
        let finite = model.params.tensors().iter().all(|t| t.is_finite());
        check("checkpoint_params_finite", finite);
    }
    if !ok {
        return Err(CliError::Numeric("selftest failed".into()));
    }
    eprintln!("all checks passed");
    Ok(())
}
