//! Krackhardt hierarchy scores and the learnable curvature schedules.
//!
//! A schedule maps a timestamp index (and optionally the hierarchy score
//! of that snapshot) to a strictly negative curvature through a Softplus,
//! so the output always names a valid hyperbolic space.

use crate::autodiff::{Tape, Var};
use crate::graphdata::SnapshotGraph;
use std::collections::BTreeSet;

/// Krackhardt hierarchical score of one snapshot.
///
/// Works on the pair projection of the edge set: R_ij = 1 iff some edge
/// i -> j exists under any relation. Score is
/// sum_ij R_ij (1 - R_ji) / sum_ij R_ij, the fraction of directed pairs
/// that are not reciprocated. Graphs without edges score 0.
pub fn khs(graph: &SnapshotGraph) -> f64 {
    let pairs: BTreeSet<(u32, u32)> =
        graph.edges.iter().map(|&(s, _r, o)| (s, o)).collect();
    if pairs.is_empty() {
        return 0.0;
    }
    let unreciprocated = pairs.iter().filter(|&&(i, j)| !pairs.contains(&(j, i))).count();
    unreciprocated as f64 / pairs.len() as f64
}

/// Per-snapshot scores plus the mean over nonempty snapshots.
/// The mean is NaN when every snapshot is empty.
pub fn khs_series(snapshots: &[SnapshotGraph]) -> (Vec<f64>, f64) {
    let series: Vec<f64> = snapshots.iter().map(khs).collect();
    let nonempty: Vec<f64> = snapshots
        .iter()
        .zip(&series)
        .filter(|(g, _)| !g.is_empty())
        .map(|(_, &v)| v)
        .collect();
    let mean = if nonempty.is_empty() {
        f64::NAN
    } else {
        nonempty.iter().sum::<f64>() / nonempty.len() as f64
    };
    (series, mean)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ScheduleKind {
    #[default]
    Constant,
    TimeSeries,
    HierScore,
    Combined,
}

impl std::str::FromStr for ScheduleKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "constant" => Ok(ScheduleKind::Constant),
            "timeseries" | "time-series" => Ok(ScheduleKind::TimeSeries),
            "hierscore" | "hier-score" => Ok(ScheduleKind::HierScore),
            "combined" => Ok(ScheduleKind::Combined),
            other => Err(format!("unknown schedule kind '{other}'")),
        }
    }
}

/// Plain-number curvature schedule. The learnable variant lives in
/// [`ScheduleVars`]; both share the same formulas.
#[derive(Clone, Debug)]
pub struct CurvatureSchedule {
    pub kind: ScheduleKind,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub omega: f64,
    /// Polynomial coefficients for f, lowest degree first; degree <= 2.
    pub poly: Vec<f64>,
    pub const_param: f64,
}

impl Default for CurvatureSchedule {
    fn default() -> Self {
        CurvatureSchedule {
            kind: ScheduleKind::Constant,
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            omega: 0.0,
            poly: vec![0.0, 0.0, 0.0],
            const_param: 0.0,
        }
    }
}

fn softplus(x: f64) -> f64 {
    (-x.abs()).exp().ln_1p() + x.max(0.0)
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

impl CurvatureSchedule {
    /// Negative curvature at timestamp `t` given that snapshot's
    /// hierarchy score.
    pub fn evaluate(&self, t: u32, khs_t: f64) -> f64 {
        let t = f64::from(t);
        let arg = match self.kind {
            ScheduleKind::Constant => self.const_param,
            ScheduleKind::TimeSeries => self.time_term(t),
            ScheduleKind::HierScore => poly_eval(&self.poly, khs_t),
            ScheduleKind::Combined => self.time_term(t) + poly_eval(&self.poly, khs_t),
        };
        // softplus underflows to 0 near arg = -745; keep c strictly
        // negative so the output always names a hyperbolic space
        let c = -softplus(arg).max(1e-30);
        debug_assert!(c < 0.0);
        c
    }

    fn time_term(&self, t: f64) -> f64 {
        self.alpha * (self.omega * t).sin() + self.beta * t + self.gamma
    }

    /// Number of learnable scalars for this kind.
    pub fn num_params(&self) -> usize {
        match self.kind {
            ScheduleKind::Constant => 1,
            ScheduleKind::TimeSeries => 4,
            ScheduleKind::HierScore => self.poly.len(),
            ScheduleKind::Combined => 4 + self.poly.len(),
        }
    }
}

/// Differentiable schedule: parameters are tape variables so the
/// curvature can be trained end to end.
#[derive(Clone)]
pub struct ScheduleVars<'t> {
    pub kind: ScheduleKind,
    pub alpha: Var<'t>,
    pub beta: Var<'t>,
    pub gamma: Var<'t>,
    pub omega: Var<'t>,
    pub poly: Vec<Var<'t>>,
    pub const_param: Var<'t>,
}

impl<'t> ScheduleVars<'t> {
    /// Bind a plain schedule onto a tape, making every scalar a leaf.
    pub fn bind(tape: &'t Tape, sched: &CurvatureSchedule) -> Self {
        let scalar = |v: f64| tape.scalar(v);
        ScheduleVars {
            kind: sched.kind,
            alpha: scalar(sched.alpha),
            beta: scalar(sched.beta),
            gamma: scalar(sched.gamma),
            omega: scalar(sched.omega),
            poly: sched.poly.iter().map(|&c| scalar(c)).collect(),
            const_param: scalar(sched.const_param),
        }
    }

    pub fn evaluate(&self, t: u32, khs_t: f64) -> Var<'t> {
        let t = f64::from(t);
        let arg = match self.kind {
            ScheduleKind::Constant => self.const_param,
            ScheduleKind::TimeSeries => self.time_term(t),
            ScheduleKind::HierScore => self.poly_eval(khs_t),
            ScheduleKind::Combined => self.time_term(t).add(self.poly_eval(khs_t)),
        };
        arg.softplus().neg()
    }

    fn time_term(&self, t: f64) -> Var<'t> {
        self.alpha
            .mul(self.omega.mul_const(t).sin())
            .add(self.beta.mul_const(t))
            .add(self.gamma)
    }

    fn poly_eval(&self, x: f64) -> Var<'t> {
        let tape = self.const_param.tape();
        self.poly
            .iter()
            .rev()
            .fold(tape.scalar(0.0), |acc, &c| acc.mul_const(x).add(c))
    }
}
