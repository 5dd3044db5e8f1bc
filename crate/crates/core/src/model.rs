//! The sequence model: attention aggregation over snapshots, hyperbolic
//! RNN recurrences for global and local state, probability heads and the
//! training loss.
//!
//! All learnable tensors live in a flat named registry ([`ParamSet`]) so
//! the optimizer and the checkpoint format can treat the model as one
//! ordered list of leaves. Entity and relation embeddings, as well as
//! RNN biases, are stored as tangent coordinates at the origin and
//! lifted on use; the optimizer therefore only ever sees Euclidean
//! parameters.

use crate::autodiff::{concat, Shape, Tape, Tensor, Var};
use crate::curvature::{khs, CurvatureSchedule, ScheduleVars};
use crate::geometry::HModel;
use crate::graphdata::{Quadruple, SnapshotGraph};
use crate::hyperops as hp;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown entity id {0}")]
    UnknownEntity(u32),
    #[error("unknown relation id {0}")]
    UnknownRelation(u32),
    #[error("non-finite probability")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Slope of the attention scoring nonlinearity.
const ATTN_SLOPE: f64 = 0.2;

#[derive(Clone, Debug)]
pub struct ModelConfig {
    pub num_entities: usize,
    pub num_relations: usize,
    /// Tangent dimension d.
    pub dim: usize,
    /// History window m for truncated backpropagation.
    pub window: usize,
    /// Weight of the relation term in the loss.
    pub lambda: f64,
    pub backend: HModel,
    pub schedule: CurvatureSchedule,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            num_entities: 0,
            num_relations: 0,
            dim: 200,
            window: 10,
            lambda: 0.01,
            backend: HModel::PoincareBall,
            schedule: CurvatureSchedule::default(),
        }
    }
}

impl ModelConfig {
    /// Length of one point's coordinate vector under the chosen backend.
    pub fn coord_dim(&self) -> usize {
        match self.backend {
            HModel::PoincareBall => self.dim,
            HModel::Lorentz => self.dim + 1,
        }
    }
}

/// Ordered, named registry of learnable tensors.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn push(&mut self, name: &str, t: Tensor) {
        assert!(!self.names.iter().any(|n| n == name), "duplicate param {name}");
        self.names.push(name.to_string());
        self.tensors.push(t);
    }

    pub fn position(&self, name: &str) -> usize {
        self.names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("unknown param {name}"))
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.tensors[self.position(name)]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        let i = self.position(name);
        &mut self.tensors[i]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }
}

/// Learnable state: configuration plus the parameter registry.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl Model {
    /// Fresh model with small nonzero random weights. Zero weights are
    /// avoided deliberately: several lifts short-circuit at the exact
    /// origin and would freeze their inputs there.
    pub fn new(config: ModelConfig, seed: u64) -> Model {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let d = config.dim;
        let cd = config.coord_dim();
        let e = config.num_entities;
        let r = config.num_relations;
        let mut params = ParamSet::default();
        let init = |rng: &mut ChaCha20Rng, shape: Shape| {
            let data: Vec<f64> =
                (0..shape.len()).map(|_| rng.gen_range(-0.05..0.05)).collect();
            Tensor { shape, data }
        };
        params.push("ent_emb", init(&mut rng, Shape::Matrix(e, d)));
        params.push("rel_emb", init(&mut rng, Shape::Matrix(r, d)));
        params.push("agg.w_msg", init(&mut rng, Shape::Matrix(d, 2 * d)));
        params.push("agg.w_self", init(&mut rng, Shape::Matrix(d, d)));
        params.push("agg.attn", init(&mut rng, Shape::Vector(2 * d)));
        for cell in ["rnn1", "rnn2", "rnn3"] {
            params.push(&format!("{cell}.w"), init(&mut rng, Shape::Matrix(d, d)));
            if cell == "rnn1" {
                params.push(&format!("{cell}.u"), init(&mut rng, Shape::Matrix(d, d)));
            } else {
                params.push(&format!("{cell}.u_agg"), init(&mut rng, Shape::Matrix(d, d)));
                params.push(&format!("{cell}.u_glob"), init(&mut rng, Shape::Matrix(d, d)));
            }
            params.push(&format!("{cell}.b"), init(&mut rng, Shape::Vector(d)));
        }
        params.push("w_s", init(&mut rng, Shape::Matrix(e, d)));
        params.push("w_o", init(&mut rng, Shape::Matrix(e, 3 * cd)));
        params.push("w_r", init(&mut rng, Shape::Matrix(r, 2 * cd)));
        // global curvature is -softplus(rho); rho chosen so c starts at -1
        params.push("global_rho", Tensor::scalar((std::f64::consts::E - 1.0).ln()));
        let s = &config.schedule;
        params.push("sched.alpha", Tensor::scalar(s.alpha));
        params.push("sched.beta", Tensor::scalar(s.beta));
        params.push("sched.gamma", Tensor::scalar(s.gamma));
        params.push("sched.omega", Tensor::scalar(s.omega));
        params.push("sched.const", Tensor::scalar(s.const_param));
        for (i, &c) in s.poly.iter().enumerate() {
            params.push(&format!("sched.poly{i}"), Tensor::scalar(c));
        }
        Model { config, params }
    }

    /// Snapshot of the schedule with current parameter values.
    pub fn schedule(&self) -> CurvatureSchedule {
        let mut s = self.config.schedule.clone();
        s.alpha = self.params.get("sched.alpha").as_scalar();
        s.beta = self.params.get("sched.beta").as_scalar();
        s.gamma = self.params.get("sched.gamma").as_scalar();
        s.omega = self.params.get("sched.omega").as_scalar();
        s.const_param = self.params.get("sched.const").as_scalar();
        for i in 0..s.poly.len() {
            s.poly[i] = self.params.get(&format!("sched.poly{i}")).as_scalar();
        }
        s
    }

    /// Current global curvature value.
    pub fn global_c(&self) -> f64 {
        -crate::autodiff::softplus_stable(self.params.get("global_rho").as_scalar())
    }
}

/// The model's parameters bound onto one tape as leaves.
pub struct ModelVars<'t> {
    pub config: ModelConfig,
    names: Vec<String>,
    vars: Vec<Var<'t>>,
    pub sched: ScheduleVars<'t>,
    pub global_c: Var<'t>,
}

impl<'t> ModelVars<'t> {
    pub fn bind(tape: &'t Tape, model: &Model) -> Self {
        let vars: Vec<Var<'t>> =
            model.params.tensors().iter().map(|t| tape.leaf(t.clone())).collect();
        Self::from_vars(&model.config, model.params.names(), &vars)
    }

    /// Assemble from pre-existing leaves in registry order; used both by
    /// [`bind`](Self::bind) and by gradient checking.
    pub fn from_vars(config: &ModelConfig, names: &[String], vars: &[Var<'t>]) -> Self {
        assert_eq!(names.len(), vars.len());
        let find = |name: &str| -> Var<'t> {
            vars[names.iter().position(|n| n == name).expect("registered param")]
        };
        let poly: Vec<Var<'t>> = (0..config.schedule.poly.len())
            .map(|i| find(&format!("sched.poly{i}")))
            .collect();
        let sched = ScheduleVars {
            kind: config.schedule.kind,
            alpha: find("sched.alpha"),
            beta: find("sched.beta"),
            gamma: find("sched.gamma"),
            omega: find("sched.omega"),
            poly,
            const_param: find("sched.const"),
        };
        let global_c = find("global_rho").softplus().neg();
        ModelVars {
            config: config.clone(),
            names: names.to_vec(),
            vars: vars.to_vec(),
            sched,
            global_c,
        }
    }

    /// All parameter leaves in registry order.
    pub fn all_vars(&self) -> &[Var<'t>] {
        &self.vars
    }

    pub fn v(&self, name: &str) -> Var<'t> {
        self.vars[self.names.iter().position(|n| n == name).expect("registered param")]
    }

    fn tape(&self) -> &'t Tape {
        self.global_c.tape()
    }

    fn zeros(&self, n: usize) -> Var<'t> {
        self.tape().vector(&vec![0.0; n])
    }

    fn origin_coords(&self, c: Var<'t>) -> Var<'t> {
        match self.config.backend {
            HModel::PoincareBall => self.zeros(self.config.dim),
            HModel::Lorentz => hp::lorentz_origin(c, self.config.dim),
        }
    }

    fn ent_tangent(&self, i: u32) -> Result<Var<'t>> {
        if (i as usize) >= self.config.num_entities {
            return Err(ModelError::UnknownEntity(i));
        }
        Ok(self.v("ent_emb").row(i as usize))
    }

    fn rel_tangent(&self, i: u32) -> Result<Var<'t>> {
        if (i as usize) >= self.config.num_relations {
            return Err(ModelError::UnknownRelation(i));
        }
        Ok(self.v("rel_emb").row(i as usize))
    }

    /// Coordinates of an embedding materialized at curvature -1.
    fn ent_point(&self, i: u32) -> Result<Var<'t>> {
        Ok(hp::lift(self.ent_tangent(i)?, self.tape().scalar(-1.0), self.config.backend))
    }

    fn rel_point(&self, i: u32) -> Result<Var<'t>> {
        Ok(hp::lift(self.rel_tangent(i)?, self.tape().scalar(-1.0), self.config.backend))
    }
}

/// Recurrent state after consuming snapshots up to some timestamp.
/// `h_global` holds coordinates at the global curvature; local states
/// share the curvature `c_local`. Absent keys mean "origin".
pub struct History<'t> {
    pub t: Option<u32>,
    pub c_local: Var<'t>,
    pub h_global: Var<'t>,
    pub h_s: BTreeMap<u32, Var<'t>>,
    pub h_sr: BTreeMap<(u32, u32), Var<'t>>,
}

impl<'t> History<'t> {
    /// Zero-information history: everything at the origin.
    pub fn empty(vars: &ModelVars<'t>) -> Self {
        History {
            t: None,
            c_local: vars.sched.evaluate(0, 0.0),
            h_global: vars.origin_coords(vars.global_c),
            h_s: BTreeMap::new(),
            h_sr: BTreeMap::new(),
        }
    }

    /// Copy values off the tape.
    pub fn detach(&self) -> HistoryState {
        HistoryState {
            t: self.t,
            c_local: self.c_local.scalar_value(),
            h_global: self.h_global.value(),
            h_s: self.h_s.iter().map(|(k, v)| (*k, v.value())).collect(),
            h_sr: self.h_sr.iter().map(|(k, v)| (*k, v.value())).collect(),
        }
    }

    /// Rebind a detached state onto a fresh tape as constants.
    pub fn bind(tape: &'t Tape, state: &HistoryState) -> Self {
        History {
            t: state.t,
            c_local: tape.scalar(state.c_local),
            h_global: tape.leaf(state.h_global.clone()),
            h_s: state.h_s.iter().map(|(k, v)| (*k, tape.leaf(v.clone()))).collect(),
            h_sr: state.h_sr.iter().map(|(k, v)| (*k, tape.leaf(v.clone()))).collect(),
        }
    }
}

/// Plain-value history, independent of any tape.
#[derive(Clone, Debug)]
pub struct HistoryState {
    pub t: Option<u32>,
    pub c_local: f64,
    pub h_global: Tensor,
    pub h_s: BTreeMap<u32, Tensor>,
    pub h_sr: BTreeMap<(u32, u32), Tensor>,
}

/// Attention-weighted message vector for entity `s` over its incident
/// edges at one snapshot. Entities without edges get the zero vector.
/// Works on tangent coordinates, which are exactly the drop projections
/// of the lifted embeddings.
pub fn aggregate<'t>(vars: &ModelVars<'t>, s: u32, snapshot: &SnapshotGraph) -> Result<Var<'t>> {
    let Some(neigh) = snapshot.neighbor_index.get(&s) else {
        return Ok(vars.zeros(vars.config.dim));
    };
    let tape = vars.tape();
    let w_msg = vars.v("agg.w_msg");
    let self_u = vars.v("agg.w_self").matvec(vars.ent_tangent(s)?);
    let attn = vars.v("agg.attn");
    let mut msgs = Vec::with_capacity(neigh.len());
    let mut scores = Vec::with_capacity(neigh.len());
    for &(r, o) in neigh {
        let m = w_msg.matvec(concat(tape, &[vars.ent_tangent(o)?, vars.rel_tangent(r)?]));
        scores.push(attn.dot(concat(tape, &[self_u, m])).leaky_relu(ATTN_SLOPE));
        msgs.push(m);
    }
    let weights = concat(tape, &scores).softmax();
    let mut out = vars.zeros(vars.config.dim);
    for (i, m) in msgs.into_iter().enumerate() {
        out = out.add(m.scale_by(weights.index(i)));
    }
    Ok(out)
}

/// Elementwise max of the per-entity aggregates over the whole snapshot.
pub fn global_pool<'t>(vars: &ModelVars<'t>, snapshot: &SnapshotGraph) -> Result<Var<'t>> {
    let mut acc: Option<Var<'t>> = None;
    for &s in &snapshot.entity_set {
        let a = aggregate(vars, s, snapshot)?;
        acc = Some(match acc {
            None => a,
            Some(prev) => prev.vmax(a),
        });
    }
    Ok(acc.unwrap_or_else(|| vars.zeros(vars.config.dim)))
}

/// One hyperbolic RNN step at curvature `c`:
/// phi(W (x) hidden (+) U_1 (x) x_1 (+) ... (+) b) with the pointwise
/// nonlinearity applied in the tangent space at the origin.
pub fn hrnn_step<'t>(
    w: Var<'t>,
    inputs: &[(Var<'t>, Var<'t>)],
    b_tangent: Var<'t>,
    hidden: Var<'t>,
    c: Var<'t>,
    model: HModel,
) -> Var<'t> {
    let mut acc = hp::hyp_matvec(w, hidden, c, model);
    for &(u, x) in inputs {
        acc = hp::hyp_add(acc, hp::hyp_matvec(u, x, c, model), c, model);
    }
    acc = hp::hyp_add(acc, hp::lift(b_tangent, c, model), c, model);
    hp::hyp_tanh(acc, c, model)
}

/// Consume one snapshot: update the global state at the global
/// curvature, update local states for every subject active in the
/// snapshot at the schedule's curvature for this timestamp, and carry
/// every other key forward by curvature transition alone.
pub fn advance<'t>(
    vars: &ModelVars<'t>,
    history: &History<'t>,
    snapshot: &SnapshotGraph,
) -> Result<History<'t>> {
    let model = vars.config.backend;
    let t = snapshot.t;
    let c_t = vars.sched.evaluate(t, khs(snapshot));

    let pooled = global_pool(vars, snapshot)?;
    let h_global = hrnn_step(
        vars.v("rnn1.w"),
        &[(vars.v("rnn1.u"), hp::lift(pooled, vars.global_c, model))],
        vars.v("rnn1.b"),
        history.h_global,
        vars.global_c,
        model,
    );
    let global_at_ct = hp::transition(h_global, vars.global_c, c_t, model);

    let subjects: BTreeSet<u32> = snapshot.edges.iter().map(|&(s, _, _)| s).collect();
    let pairs: BTreeSet<(u32, u32)> = snapshot.edges.iter().map(|&(s, r, _)| (s, r)).collect();
    let mut agg_cache: BTreeMap<u32, Var<'t>> = BTreeMap::new();
    for &s in &subjects {
        agg_cache.insert(s, hp::lift(aggregate(vars, s, snapshot)?, c_t, model));
    }
    let carried = |prev: Var<'t>| hp::transition(prev, history.c_local, c_t, model);

    let mut h_s: BTreeMap<u32, Var<'t>> = BTreeMap::new();
    for &s in &subjects {
        let prev = history.h_s.get(&s).map(|&p| carried(p)).unwrap_or(vars.origin_coords(c_t));
        h_s.insert(
            s,
            hrnn_step(
                vars.v("rnn2.w"),
                &[(vars.v("rnn2.u_agg"), agg_cache[&s]), (vars.v("rnn2.u_glob"), global_at_ct)],
                vars.v("rnn2.b"),
                prev,
                c_t,
                model,
            ),
        );
    }
    let mut h_sr: BTreeMap<(u32, u32), Var<'t>> = BTreeMap::new();
    for &(s, r) in &pairs {
        let prev =
            history.h_sr.get(&(s, r)).map(|&p| carried(p)).unwrap_or(vars.origin_coords(c_t));
        h_sr.insert(
            (s, r),
            hrnn_step(
                vars.v("rnn3.w"),
                &[(vars.v("rnn3.u_agg"), agg_cache[&s]), (vars.v("rnn3.u_glob"), global_at_ct)],
                vars.v("rnn3.b"),
                prev,
                c_t,
                model,
            ),
        );
    }
    for (&s, &prev) in &history.h_s {
        h_s.entry(s).or_insert_with(|| carried(prev));
    }
    for (&key, &prev) in &history.h_sr {
        h_sr.entry(key).or_insert_with(|| carried(prev));
    }
    Ok(History { t: Some(t), c_local: c_t, h_global, h_s, h_sr })
}

fn checked_softmax(logits: Var<'_>) -> Result<Var<'_>> {
    let p = logits.softmax();
    if !p.value().is_finite() {
        return Err(ModelError::NonFinite);
    }
    Ok(p)
}

/// p(o | s, r, history): concatenation of the raw coordinates of the
/// static embeddings at curvature -1 and the local pair state carried
/// to curvature -1, classified by `w_o`.
pub fn prob_object<'t>(
    vars: &ModelVars<'t>,
    history: &History<'t>,
    s: u32,
    r: u32,
) -> Result<Var<'t>> {
    let tape = vars.tape();
    let minus_one = tape.scalar(-1.0);
    let h = match history.h_sr.get(&(s, r)) {
        Some(&p) => hp::transition(p, history.c_local, minus_one, vars.config.backend),
        None => vars.origin_coords(minus_one),
    };
    let feat = concat(tape, &[vars.ent_point(s)?, vars.rel_point(r)?, h]);
    checked_softmax(vars.v("w_o").matvec(feat))
}

/// p(r | s, history): entity embedding plus the local entity state
/// carried to curvature -1, classified by `w_r`.
pub fn prob_relation<'t>(vars: &ModelVars<'t>, history: &History<'t>, s: u32) -> Result<Var<'t>> {
    let tape = vars.tape();
    let minus_one = tape.scalar(-1.0);
    let h = match history.h_s.get(&s) {
        Some(&p) => hp::transition(p, history.c_local, minus_one, vars.config.backend),
        None => vars.origin_coords(minus_one),
    };
    let feat = concat(tape, &[vars.ent_point(s)?, h]);
    checked_softmax(vars.v("w_r").matvec(feat))
}

/// p(s | history): the global state drop-projected and classified by `w_s`.
pub fn prob_subject<'t>(vars: &ModelVars<'t>, history: &History<'t>) -> Result<Var<'t>> {
    let feat = hp::drop(history.h_global, vars.global_c, vars.config.backend);
    checked_softmax(vars.v("w_s").matvec(feat))
}

/// Same fact with subject and object switched; used for training the
/// reverse prediction direction with shared weights.
pub fn swap_roles(q: Quadruple) -> Quadruple {
    Quadruple { s: q.o, r: q.r, o: q.s, t: q.t }
}

/// Negative log-likelihood of a batch under the given history:
/// -sum [log p(o|s,r) + lambda log p(r|s)].
pub fn nll<'t>(
    vars: &ModelVars<'t>,
    history: &History<'t>,
    quads: &[Quadruple],
) -> Result<Var<'t>> {
    let tape = vars.tape();
    let lambda = vars.config.lambda;
    let mut acc = tape.scalar(0.0);
    for q in quads {
        let p_o = prob_object(vars, history, q.s, q.r)?;
        acc = acc.add(p_o.index(q.o as usize).ln().neg());
        if lambda != 0.0 {
            let p_r = prob_relation(vars, history, q.s)?;
            acc = acc.add(p_r.index(q.r as usize).ln().mul_const(lambda).neg());
        }
    }
    if !acc.value().is_finite() {
        return Err(ModelError::NonFinite);
    }
    Ok(acc)
}
