//! C ABI for the temporal knowledge graph embedding engine.
//!
//! All handles are opaque pointers owned by this library; every
//! constructor has a matching `_free` function. Functions return a
//! status code and report details through `curvtkg_last_error`, which
//! holds a thread-local message describing the most recent failure.

use curvtkg::curvature::{khs_series, CurvatureSchedule};
use curvtkg::evaluation::{evaluate, multi_step_sample, EvalConfig, HistoryMode};
use curvtkg::graphdata::{
    build_filter, build_snapshots, load_dataset, read_bundle, Dataset, IntervalPolicy, Quadruple,
    SnapshotGraph,
};
use curvtkg::model::{advance, prob_object, History, Model, ModelConfig, ModelVars};
use curvtkg::training::{checkpoint_load, checkpoint_save, train, TrainConfig};
use libc::c_char;
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

/// Result of every fallible call in this API.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CurvtkgStatus {
    CurvtkgOk = 0,
    /// A required pointer argument was null.
    CurvtkgNullArgument = 1,
    /// An argument value was rejected (bad config key, id out of range).
    CurvtkgInvalidArgument = 2,
    /// Files were missing, malformed, or otherwise unreadable.
    CurvtkgDataError = 3,
    /// A numerical failure (non-finite loss or scores).
    CurvtkgNumericError = 4,
}

use CurvtkgStatus::*;

/// Opaque dataset handle: id-mapped quadruple splits plus statistics.
pub struct CurvtkgDataset {
    inner: Dataset,
}

/// Opaque model handle: parameters plus training configuration.
pub struct CurvtkgModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: CurvtkgStatus, msg: &str) -> CurvtkgStatus {
    set_error(msg);
    status
}

fn guarded(f: impl FnOnce() -> CurvtkgStatus) -> CurvtkgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(CurvtkgNumericError, "internal panic"),
    }
}

/// # Safety
/// `ptr` must be null or a NUL-terminated string valid for the call.
unsafe fn path_arg(ptr: *const c_char) -> Result<PathBuf, CurvtkgStatus> {
    if ptr.is_null() {
        return Err(fail(CurvtkgNullArgument, "path is null"));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(fail(CurvtkgInvalidArgument, "path is not valid UTF-8")),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn curvtkg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread; empty when the
/// last call succeeded. The pointer stays valid until the next failing
/// call on the same thread.
#[no_mangle]
pub extern "C" fn curvtkg_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

fn load_any(path: &Path, policy: IntervalPolicy) -> Result<Dataset, String> {
    if path.is_file() {
        let file = std::fs::File::open(path).map_err(|e| e.to_string())?;
        return read_bundle(file).map_err(|e| e.to_string());
    }
    let bundle = path.join("bundle.bin");
    if bundle.is_file() {
        let file = std::fs::File::open(bundle).map_err(|e| e.to_string())?;
        return read_bundle(file).map_err(|e| e.to_string());
    }
    load_dataset(path, policy).map_err(|e| e.to_string())
}

/// Load a dataset from a bundle file, a directory containing
/// `bundle.bin`, or a directory of raw tab-separated splits. Nonzero
/// `event_intervals` reads the 4th column as a single event time instead
/// of expanding `[t_start, t_end]` ranges.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid
/// pointer. On success `*out` owns the dataset until
/// `curvtkg_dataset_free`.
#[no_mangle]
pub unsafe extern "C" fn curvtkg_dataset_load(
    path: *const c_char,
    event_intervals: i32,
    out: *mut *mut CurvtkgDataset,
) -> CurvtkgStatus {
    guarded(|| {
        if out.is_null() {
            return fail(CurvtkgNullArgument, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        let policy = if event_intervals != 0 {
            IntervalPolicy::Event
        } else {
            IntervalPolicy::YearBuckets
        };
        match load_any(&path, policy) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(CurvtkgDataset { inner: ds }));
                CurvtkgOk
            }
            Err(msg) => fail(CurvtkgDataError, &msg),
        }
    })
}

/// Basic counts and the mean hierarchy score over nonempty snapshots.
/// Null output pointers are skipped.
///
/// # Safety
/// `ds` must come from `curvtkg_dataset_load`; output pointers must be
/// null or valid.
#[no_mangle]
pub unsafe extern "C" fn curvtkg_dataset_stats(
    ds: *const CurvtkgDataset,
    entities: *mut u64,
    relations: *mut u64,
    timestamps: *mut u64,
    facts: *mut u64,
    mean_khs: *mut f64,
) -> CurvtkgStatus {
    guarded(|| {
        if ds.is_null() {
            return fail(CurvtkgNullArgument, "dataset is null");
        }
        let d = &(*ds).inner;
        let store = |p: *mut u64, v: u64| {
            if !p.is_null() {
                *p = v;
            }
        };
        store(entities, u64::from(d.num_entities));
        store(relations, u64::from(d.num_relations));
        store(timestamps, u64::from(d.num_timestamps));
        store(facts, (d.train.len() + d.valid.len() + d.test.len()) as u64);
        if !mean_khs.is_null() {
            let snaps = build_snapshots(&d.all_quads(), d.num_timestamps as usize);
            let (_, mean) = khs_series(&snaps);
            *mean_khs = mean;
        }
        CurvtkgOk
    })
}

/// # Safety
/// `ds` must be null or a pointer from `curvtkg_dataset_load`, passed
/// at most once.
#[no_mangle]
pub unsafe extern "C" fn curvtkg_dataset_free(ds: *mut CurvtkgDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

fn parse_config_text(text: &str) -> Result<TrainConfig, String> {
    let mut cfg = TrainConfig::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key = value", lineno + 1))?;
        cfg.set(key.trim(), value.trim())
            .map_err(|e| format!("config line {}: {e}", lineno + 1))?;
    }
    Ok(cfg)
}

/// Train a fresh model on the dataset's training split. `config` is an
/// optional NUL-terminated string of `key = value` lines with the same
/// keys as the CLI config file; null means defaults. `seed` drives
/// initialization and shuffling.
///
/// # Safety
/// `ds` must come from `curvtkg_dataset_load`; `config` must be null or
/// NUL-terminated; `out` must be valid. On success `*out` owns the
/// model until `curvtkg_model_free`.
#[no_mangle]
pub unsafe extern "C" fn curvtkg_model_train(
    ds: *const CurvtkgDataset,
    config: *const c_char,
    seed: u64,
    out: *mut *mut CurvtkgModel,
) -> CurvtkgStatus {
    guarded(|| {
        if ds.is_null() || out.is_null() {
            return fail(CurvtkgNullArgument, "dataset or out is null");
        }
        let mut cfg = if config.is_null() {
            TrainConfig::default()
        } else {
            let text = match CStr::from_ptr(config).to_str() {
                Ok(s) => s,
                Err(_) => return fail(CurvtkgInvalidArgument, "config is not valid UTF-8"),
            };
            match parse_config_text(text) {
                Ok(cfg) => cfg,
                Err(msg) => return fail(CurvtkgInvalidArgument, &msg),
            }
        };
        cfg.seed = seed;
        let d = &(*ds).inner;
        let horizon = match d.train.iter().map(|q| q.t).max() {
            Some(t) => t as usize + 1,
            None => return fail(CurvtkgDataError, "training split is empty"),
        };
        let snaps = build_snapshots(&d.train, horizon);
        let mut model = Model::new(
            ModelConfig {
                num_entities: d.num_entities as usize,
                num_relations: d.num_relations as usize,
                dim: cfg.dim,
                window: cfg.window,
                lambda: cfg.lambda,
                backend: cfg.backend,
                schedule: CurvatureSchedule {
                    kind: cfg.schedule,
                    poly: vec![0.0; cfg.poly_degree + 1],
                    ..Default::default()
                },
            },
            cfg.seed,
        );
        // monotone score keeps the last epoch's parameters
        let mut tick = 0.0f64;
        match train(&mut model, &snaps, &cfg, |_| {
            tick += 1.0;
            tick
        }) {
            Ok(_) => {
                *out = Box::into_raw(Box::new(CurvtkgModel { inner: model }));
                CurvtkgOk
            }
            Err(e) => fail(CurvtkgNumericError, &e.to_string()),
        }
    })
}

/// # Safety
/// `model` must come from this API; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn curvtkg_model_save(
    model: *const CurvtkgModel,
    path: *const c_char,
) -> CurvtkgStatus {
    guarded(|| {
        if model.is_null() {
            return fail(CurvtkgNullArgument, "model is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match checkpoint_save(&(*model).inner, None, &path) {
            Ok(()) => CurvtkgOk,
            Err(e) => fail(CurvtkgDataError, &e.to_string()),
        }
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out` must be valid. On success
/// `*out` owns the model until `curvtkg_model_free`.
#[no_mangle]
pub unsafe extern "C" fn curvtkg_model_load(
    path: *const c_char,
    out: *mut *mut CurvtkgModel,
) -> CurvtkgStatus {
    guarded(|| {
        if out.is_null() {
            return fail(CurvtkgNullArgument, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match checkpoint_load(&path) {
            Ok((model, _)) => {
                *out = Box::into_raw(Box::new(CurvtkgModel { inner: model }));
                CurvtkgOk
            }
            Err(e) => fail(CurvtkgDataError, &e.to_string()),
        }
    })
}

fn context_before(d: &Dataset, first: u32) -> Vec<SnapshotGraph> {
    let mut known: Vec<Quadruple> = d
        .train
        .iter()
        .chain(&d.valid)
        .filter(|q| q.t < first)
        .cloned()
        .collect();
    known.sort();
    build_snapshots(&known, first as usize)
}

/// Filtered link-prediction metrics on the dataset's test split.
/// Nonzero `oracle_history` conditions later test timestamps on ground
/// truth; zero samples intermediate snapshots instead. Null output
/// pointers are skipped.
///
/// # Safety
/// `model` and `ds` must come from this API; output pointers must be
/// null or valid.
#[no_mangle]
pub unsafe extern "C" fn curvtkg_model_evaluate(
    model: *const CurvtkgModel,
    ds: *const CurvtkgDataset,
    oracle_history: i32,
    seed: u64,
    mrr: *mut f64,
    hits1: *mut f64,
    hits3: *mut f64,
    hits10: *mut f64,
) -> CurvtkgStatus {
    guarded(|| {
        if model.is_null() || ds.is_null() {
            return fail(CurvtkgNullArgument, "model or dataset is null");
        }
        let d = &(*ds).inner;
        let first = match d.test.iter().map(|q| q.t).min() {
            Some(t) => t,
            None => return fail(CurvtkgDataError, "test split is empty"),
        };
        let context = context_before(d, first);
        let filter = build_filter(&d.all_quads());
        let cfg = EvalConfig {
            mode: if oracle_history != 0 { HistoryMode::Oracle } else { HistoryMode::Sampled },
            budget: None,
            seed,
        };
        match evaluate(&(*model).inner, &context, &d.test, &filter, &cfg) {
            Ok((report, _)) => {
                let store = |p: *mut f64, v: f64| {
                    if !p.is_null() {
                        *p = v;
                    }
                };
                store(mrr, report.mrr);
                store(hits1, report.hits1);
                store(hits3, report.hits3);
                store(hits10, report.hits10);
                CurvtkgOk
            }
            Err(e) => fail(CurvtkgNumericError, &e.to_string()),
        }
    })
}

/// Object scores for the query `(subject, relation, ?, t)`, written to
/// `scores[0..len]` where `len` must equal the entity count. History
/// before `t` comes from the train and validation splits; timestamps
/// past their horizon are filled with sampled snapshots seeded by
/// `seed`.
///
/// # Safety
/// `model` and `ds` must come from this API; `scores` must point to at
/// least `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn curvtkg_model_score_objects(
    model: *const CurvtkgModel,
    ds: *const CurvtkgDataset,
    subject: u32,
    relation: u32,
    t: u32,
    seed: u64,
    scores: *mut f64,
    len: usize,
) -> CurvtkgStatus {
    guarded(|| {
        if model.is_null() || ds.is_null() || scores.is_null() {
            return fail(CurvtkgNullArgument, "model, dataset, or scores is null");
        }
        let m = &(*model).inner;
        let d = &(*ds).inner;
        if len != m.config.num_entities {
            return fail(CurvtkgInvalidArgument, "scores length must equal the entity count");
        }
        let mut timeline = context_before(d, t);
        if (t as usize) > timeline.len() {
            let missing = t as usize - timeline.len();
            let edges: usize = timeline.iter().map(|g| g.edges.len()).sum();
            let budget = edges / timeline.len().max(1);
            match multi_step_sample(m, &timeline, missing, budget, seed) {
                Ok(sampled) => timeline.extend(sampled),
                Err(e) => return fail(CurvtkgNumericError, &e.to_string()),
            }
        }
        let tape = curvtkg::autodiff::Tape::new();
        let vars = ModelVars::bind(&tape, m);
        let start = (t as usize).saturating_sub(m.config.window);
        let mut h = History::empty(&vars);
        for snap in &timeline[start..t as usize] {
            h = match advance(&vars, &h, snap) {
                Ok(next) => next,
                Err(e) => return fail(CurvtkgNumericError, &e.to_string()),
            };
        }
        match prob_object(&vars, &h, subject, relation) {
            Ok(p) => {
                let data = p.value().data;
                std::ptr::copy_nonoverlapping(data.as_ptr(), scores, len);
                CurvtkgOk
            }
            Err(e) => fail(CurvtkgInvalidArgument, &e.to_string()),
        }
    })
}

/// # Safety
/// `model` must be null or a pointer from this API, passed at most once.
#[no_mangle]
pub unsafe extern "C" fn curvtkg_model_free(model: *mut CurvtkgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
