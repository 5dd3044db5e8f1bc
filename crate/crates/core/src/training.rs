//! Mini-batch autoregressive training: per-timestamp window replay with
//! truncated backpropagation, Adam with global-norm gradient clipping,
//! and a versioned binary checkpoint format.

use crate::autodiff::{Tape, Tensor};
use crate::curvature::ScheduleKind;
use crate::geometry::HModel;
use crate::graphdata::{Quadruple, SnapshotGraph};
use crate::model::{advance, nll, swap_roles, History, Model, ModelError, ModelVars, ParamSet};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: bad config entry: {msg}")]
    Config { path: String, line: usize, msg: String },
    #[error("non-finite loss at epoch {epoch}, timestamp {t}")]
    NonFiniteLoss { epoch: usize, t: u32 },
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("need at least 1 training timestamp")]
    EmptyTrainingSet,
}

pub type Result<T> = std::result::Result<T, TrainError>;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// History window m.
    pub window: usize,
    pub lambda: f64,
    pub seed: u64,
    pub clip_norm: f64,
    pub dim: usize,
    pub backend: HModel,
    pub schedule: ScheduleKind,
    /// Degree of the hierarchy-score polynomial f (at most 2).
    pub poly_degree: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 1024,
            epochs: 100,
            window: 10,
            lambda: 0.01,
            seed: 0,
            clip_norm: 1.0,
            dim: 200,
            backend: HModel::PoincareBall,
            schedule: ScheduleKind::Combined,
            poly_degree: 2,
        }
    }
}

impl TrainConfig {
    /// Apply one `key = value` pair; shared by the config file parser and
    /// CLI overrides.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let bad = |what: &str| format!("invalid {what} '{value}'");
        match key {
            "lr" => self.lr = value.parse().map_err(|_| bad("lr"))?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad("batch_size"))?,
            "epochs" => self.epochs = value.parse().map_err(|_| bad("epochs"))?,
            "window" => self.window = value.parse().map_err(|_| bad("window"))?,
            "lambda" => self.lambda = value.parse().map_err(|_| bad("lambda"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "clip_norm" => self.clip_norm = value.parse().map_err(|_| bad("clip_norm"))?,
            "dim" => self.dim = value.parse().map_err(|_| bad("dim"))?,
            "backend" => {
                self.backend = match value {
                    "poincare" | "ball" => HModel::PoincareBall,
                    "lorentz" => HModel::Lorentz,
                    _ => return Err(bad("backend")),
                }
            }
            "schedule" => self.schedule = value.parse()?,
            "poly_degree" => {
                self.poly_degree = value.parse().map_err(|_| bad("poly_degree"))?;
                if self.poly_degree > 2 {
                    return Err("poly_degree must be at most 2".into());
                }
            }
            other => return Err(format!("unknown config key '{other}'")),
        }
        if self.lr < 0.0 {
            return Err("lr must be nonnegative".into());
        }
        if self.batch_size == 0 {
            return Err("batch_size must be at least 1".into());
        }
        Ok(())
    }
}

/// Parse a config file of `key = value` lines; `#` starts a comment.
pub fn parse_config_file(path: &Path) -> Result<TrainConfig> {
    let display = path.display().to_string();
    let content = std::fs::read_to_string(path)?;
    let mut cfg = TrainConfig::default();
    for (idx, raw) in content.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(TrainError::Config {
                path: display,
                line: idx + 1,
                msg: "expected 'key = value'".into(),
            });
        };
        cfg.set(key.trim(), value.trim()).map_err(|msg| TrainError::Config {
            path: display.clone(),
            line: idx + 1,
            msg,
        })?;
    }
    Ok(cfg)
}

/// First/second moment estimates for Adam, aligned with the parameter
/// registry order.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> AdamState {
        let zeros: Vec<Tensor> =
            params.tensors().iter().map(|t| Tensor::zeros(t.shape)).collect();
        AdamState { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// Step-size multiplier folding in both bias corrections:
/// `lr * sqrt(1 - beta2^t) / (1 - beta1^t)`.
pub fn adam_alpha(lr: f64, step: u64) -> f64 {
    lr * (1.0 - BETA2.powi(step as i32)).sqrt() / (1.0 - BETA1.powi(step as i32))
}

/// One Adam update over all parameters; `grads` must follow registry
/// order.
pub fn adam_step(params: &mut ParamSet, grads: &[Tensor], state: &mut AdamState, lr: f64) {
    assert_eq!(grads.len(), params.len());
    state.step += 1;
    let alpha = adam_alpha(lr, state.step);
    for (i, p) in params.tensors_mut().iter_mut().enumerate() {
        let (m, v, g) = (&mut state.m[i], &mut state.v[i], &grads[i]);
        for j in 0..p.data.len() {
            m.data[j] = BETA1 * m.data[j] + (1.0 - BETA1) * g.data[j];
            v.data[j] = BETA2 * v.data[j] + (1.0 - BETA2) * g.data[j] * g.data[j];
            p.data[j] -= alpha * m.data[j] / (v.data[j].sqrt() + ADAM_EPS);
        }
    }
}

/// Scale gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let sq: f64 = grads.iter().flat_map(|g| &g.data).map(|x| x * x).sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            for x in &mut g.data {
                *x *= s;
            }
        }
    }
    norm
}

fn shuffle_rng(seed: u64, epoch: usize, t: u32) -> ChaCha20Rng {
    // splitmix-style mixing of the (seed, epoch, timestamp) key
    let mut z = seed
        .wrapping_add(0x9E3779B97F4A7C15u64.wrapping_mul(epoch as u64 + 1))
        .wrapping_add(0xBF58476D1CE4E5B9u64.wrapping_mul(u64::from(t) + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    ChaCha20Rng::seed_from_u64(z ^ (z >> 31))
}

/// One pass over the training snapshots in chronological order. For each
/// target timestamp the window of preceding snapshots is replayed from a
/// zero history, the facts are batched and the loss covers both the
/// object direction and the role-swapped subject direction. Returns the
/// mean loss per fact.
pub fn train_epoch(
    model: &mut Model,
    snapshots: &[SnapshotGraph],
    adam: &mut AdamState,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    if snapshots.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut total_loss = 0.0;
    let mut total_facts = 0usize;
    for t in 0..snapshots.len() {
        let snap = &snapshots[t];
        if snap.edges.is_empty() {
            continue;
        }
        let mut facts: Vec<Quadruple> = snap
            .edges
            .iter()
            .map(|&(s, r, o)| Quadruple { s, r, o, t: snap.t })
            .collect();
        facts.shuffle(&mut shuffle_rng(cfg.seed, epoch, snap.t));
        let start = t.saturating_sub(cfg.window);
        for batch in facts.chunks(cfg.batch_size) {
            let tape = Tape::new();
            let vars = ModelVars::bind(&tape, model);
            let mut history = History::empty(&vars);
            for past in &snapshots[start..t] {
                history = advance(&vars, &history, past)?;
            }
            let swapped: Vec<Quadruple> = batch.iter().map(|&q| swap_roles(q)).collect();
            let loss = nll(&vars, &history, batch)?.add(nll(&vars, &history, &swapped)?);
            let value = loss.scalar_value();
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, t: snap.t });
            }
            total_loss += value;
            total_facts += batch.len();
            let grads = tape.backward(loss).expect("single backward per tape");
            let mut grad_tensors: Vec<Tensor> =
                vars.all_vars().iter().map(|&v| grads.wrt(v)).collect();
            clip_global_norm(&mut grad_tensors, cfg.clip_norm);
            adam_step(&mut model.params, &grad_tensors, adam, cfg.lr);
            assert!(model.global_c() < 0.0);
        }
    }
    if total_facts == 0 {
        return Err(TrainError::EmptyTrainingSet);
    }
    Ok(total_loss / total_facts as f64)
}

/// One training-log row: epoch index, mean loss, validation score.
pub type LogRow = (usize, f64, f64);

/// Full training driver. `validate` scores the current model after each
/// epoch (validation MRR in the full pipeline); the parameters of the
/// best-scoring epoch are restored into `model` before returning.
pub fn train<F>(
    model: &mut Model,
    snapshots: &[SnapshotGraph],
    cfg: &TrainConfig,
    mut validate: F,
) -> Result<Vec<LogRow>>
where
    F: FnMut(&Model) -> f64,
{
    let mut adam = AdamState::new(&model.params);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, ParamSet)> = None;
    for epoch in 0..cfg.epochs {
        let loss = train_epoch(model, snapshots, &mut adam, cfg, epoch)?;
        let score = validate(model);
        log.push((epoch, loss, score));
        if best.as_ref().map_or(true, |(b, _)| score > *b) {
            best = Some((score, model.params.clone()));
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok(log)
}

const CKPT_MAGIC: &[u8; 4] = b"CTKC";
const CKPT_VERSION: u32 = 1;

fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> Result<()> {
    use crate::autodiff::Shape;
    match t.shape {
        Shape::Scalar => {
            w.write_u8(0)?;
        }
        Shape::Vector(n) => {
            w.write_u8(1)?;
            w.write_u64::<LittleEndian>(n as u64)?;
        }
        Shape::Matrix(r, c) => {
            w.write_u8(2)?;
            w.write_u64::<LittleEndian>(r as u64)?;
            w.write_u64::<LittleEndian>(c as u64)?;
        }
    }
    for &x in &t.data {
        w.write_u64::<LittleEndian>(x.to_bits())?;
    }
    Ok(())
}

fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor> {
    use crate::autodiff::Shape;
    let tag = r.read_u8().map_err(|_| TrainError::BadCheckpoint("truncated tensor".into()))?;
    let shape = match tag {
        0 => Shape::Scalar,
        1 => Shape::Vector(r.read_u64::<LittleEndian>()? as usize),
        2 => {
            let rows = r.read_u64::<LittleEndian>()? as usize;
            let cols = r.read_u64::<LittleEndian>()? as usize;
            Shape::Matrix(rows, cols)
        }
        other => return Err(TrainError::BadCheckpoint(format!("bad shape tag {other}"))),
    };
    let mut data = Vec::with_capacity(shape.len());
    for _ in 0..shape.len() {
        let bits = r
            .read_u64::<LittleEndian>()
            .map_err(|_| TrainError::BadCheckpoint("truncated tensor data".into()))?;
        data.push(f64::from_bits(bits));
    }
    Ok(Tensor { shape, data })
}

fn write_string<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_string<R: Read>(r: &mut R) -> Result<String> {
    let n = r.read_u32::<LittleEndian>()? as usize;
    if n > 1 << 20 {
        return Err(TrainError::BadCheckpoint("implausible string length".into()));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(|_| TrainError::BadCheckpoint("truncated string".into()))?;
    String::from_utf8(buf).map_err(|_| TrainError::BadCheckpoint("non-utf8 string".into()))
}

fn write_param_set<W: Write>(w: &mut W, params: &ParamSet) -> Result<()> {
    w.write_u32::<LittleEndian>(params.len() as u32)?;
    for (name, t) in params.iter() {
        write_string(w, name)?;
        write_tensor(w, t)?;
    }
    Ok(())
}

fn read_param_set<R: Read>(r: &mut R) -> Result<ParamSet> {
    let n = r.read_u32::<LittleEndian>()?;
    let mut params = ParamSet::default();
    for _ in 0..n {
        let name = read_string(r)?;
        params.push(&name, read_tensor(r)?);
    }
    Ok(params)
}

/// Save model parameters, config, and (optionally) the optimizer state
/// so training can resume exactly where it stopped.
pub fn checkpoint_save(model: &Model, adam: Option<&AdamState>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CKPT_MAGIC)?;
    w.write_u32::<LittleEndian>(CKPT_VERSION)?;
    let c = &model.config;
    w.write_u64::<LittleEndian>(c.num_entities as u64)?;
    w.write_u64::<LittleEndian>(c.num_relations as u64)?;
    w.write_u64::<LittleEndian>(c.dim as u64)?;
    w.write_u64::<LittleEndian>(c.window as u64)?;
    w.write_u64::<LittleEndian>(c.lambda.to_bits())?;
    w.write_u8(match c.backend {
        HModel::PoincareBall => 0,
        HModel::Lorentz => 1,
    })?;
    w.write_u8(match c.schedule.kind {
        ScheduleKind::Constant => 0,
        ScheduleKind::TimeSeries => 1,
        ScheduleKind::HierScore => 2,
        ScheduleKind::Combined => 3,
    })?;
    w.write_u32::<LittleEndian>(c.schedule.poly.len() as u32)?;
    write_param_set(&mut w, &model.params)?;
    match adam {
        None => w.write_u8(0)?,
        Some(st) => {
            w.write_u8(1)?;
            w.write_u64::<LittleEndian>(st.step)?;
            for t in st.m.iter().chain(&st.v) {
                write_tensor(&mut w, t)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a checkpoint written by [`checkpoint_save`].
pub fn checkpoint_load(path: &Path) -> Result<(Model, Option<AdamState>)> {
    checkpoint_load_inner(path).map_err(|e| match e {
        TrainError::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            TrainError::BadCheckpoint("truncated file".into())
        }
        other => other,
    })
}

fn checkpoint_load_inner(path: &Path) -> Result<(Model, Option<AdamState>)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| TrainError::BadCheckpoint("truncated header".into()))?;
    if &magic != CKPT_MAGIC {
        return Err(TrainError::BadCheckpoint("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != CKPT_VERSION {
        return Err(TrainError::BadCheckpoint(format!("unsupported version {version}")));
    }
    let num_entities = r.read_u64::<LittleEndian>()? as usize;
    let num_relations = r.read_u64::<LittleEndian>()? as usize;
    let dim = r.read_u64::<LittleEndian>()? as usize;
    let window = r.read_u64::<LittleEndian>()? as usize;
    let lambda = f64::from_bits(r.read_u64::<LittleEndian>()?);
    let backend = match r.read_u8()? {
        0 => HModel::PoincareBall,
        1 => HModel::Lorentz,
        other => return Err(TrainError::BadCheckpoint(format!("bad backend tag {other}"))),
    };
    let kind = match r.read_u8()? {
        0 => ScheduleKind::Constant,
        1 => ScheduleKind::TimeSeries,
        2 => ScheduleKind::HierScore,
        3 => ScheduleKind::Combined,
        other => return Err(TrainError::BadCheckpoint(format!("bad schedule tag {other}"))),
    };
    let poly_len = r.read_u32::<LittleEndian>()? as usize;
    let params = read_param_set(&mut r)?;
    let adam = match r.read_u8()? {
        0 => None,
        1 => {
            let step = r.read_u64::<LittleEndian>()?;
            let mut m = Vec::with_capacity(params.len());
            let mut v = Vec::with_capacity(params.len());
            for _ in 0..params.len() {
                m.push(read_tensor(&mut r)?);
            }
            for _ in 0..params.len() {
                v.push(read_tensor(&mut r)?);
            }
            Some(AdamState { m, v, step })
        }
        other => return Err(TrainError::BadCheckpoint(format!("bad optimizer tag {other}"))),
    };
    let mut schedule = crate::curvature::CurvatureSchedule {
        kind,
        poly: vec![0.0; poly_len],
        ..Default::default()
    };
    // schedule params live in the registry; mirror them into the config
    schedule.alpha = params.get("sched.alpha").as_scalar();
    schedule.beta = params.get("sched.beta").as_scalar();
    schedule.gamma = params.get("sched.gamma").as_scalar();
    schedule.omega = params.get("sched.omega").as_scalar();
    schedule.const_param = params.get("sched.const").as_scalar();
    for i in 0..poly_len {
        schedule.poly[i] = params.get(&format!("sched.poly{i}")).as_scalar();
    }
    let config = crate::model::ModelConfig {
        num_entities,
        num_relations,
        dim,
        window,
        lambda,
        backend,
        schedule,
    };
    Ok((Model { config, params }, adam))
}
