//! Filtered ranking metrics (MRR, Hits@k) and multi-step future
//! inference: when test timestamps lie beyond the last ground-truth
//! snapshot, intermediate snapshots are sampled from the model's own
//! probability heads before scoring.

use crate::graphdata::{FilterSet, Quadruple, SnapshotGraph};
use crate::model::{
    advance, prob_object, prob_relation, prob_subject, History, Model, ModelError, ModelVars,
};
use crate::autodiff::Tape;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("sampling horizon must be at least 1")]
    ZeroHorizon,
    #[error("test timestamp {0} precedes the provided context")]
    TimestampOrder(u32),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    ObjectPred,
    SubjectPred,
}

/// Rank of one prediction. Ranks are fractional because ties resolve to
/// the mean rank of the tied block.
#[derive(Clone, Debug)]
pub struct RankResult {
    pub quad: Quadruple,
    pub rank: f64,
    pub direction: Direction,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EvalReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub count: usize,
}

/// How to obtain snapshots inside the test window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum HistoryMode {
    /// Sample future snapshots from the model's own heads.
    #[default]
    Sampled,
    /// Use the ground-truth test snapshots.
    Oracle,
}

impl std::str::FromStr for HistoryMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sampled" => Ok(HistoryMode::Sampled),
            "oracle" => Ok(HistoryMode::Oracle),
            other => Err(format!("unknown history mode '{other}'")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalConfig {
    pub mode: HistoryMode,
    /// Sampled triples per future snapshot; defaults to the mean context
    /// snapshot edge count.
    pub budget: Option<usize>,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { mode: HistoryMode::Sampled, budget: None, seed: 0 }
    }
}

/// Filtered rank of `true_id` within `scores`. Candidates in `filter`
/// (other than the true one) are removed before ranking; ties with the
/// true score resolve to the mean rank of the tied block.
pub fn rank_filtered<F>(scores: &[f64], true_id: usize, is_filtered: F) -> f64
where
    F: Fn(usize) -> bool,
{
    let s_true = scores[true_id];
    let mut greater = 0usize;
    let mut ties = 0usize;
    for (j, &s) in scores.iter().enumerate() {
        if j == true_id || is_filtered(j) {
            continue;
        }
        if s > s_true {
            greater += 1;
        } else if s == s_true {
            ties += 1;
        }
    }
    1.0 + greater as f64 + ties as f64 / 2.0
}

/// Aggregate a set of ranked predictions into MRR and Hits@k.
pub fn report_from_ranks(ranks: &[RankResult]) -> EvalReport {
    let n = ranks.len();
    if n == 0 {
        return EvalReport::default();
    }
    let mut report = EvalReport { count: n, ..Default::default() };
    for r in ranks {
        report.mrr += 1.0 / r.rank;
        report.hits1 += f64::from(r.rank <= 1.0);
        report.hits3 += f64::from(r.rank <= 3.0);
        report.hits10 += f64::from(r.rank <= 10.0);
    }
    report.mrr /= n as f64;
    report.hits1 /= n as f64;
    report.hits3 /= n as f64;
    report.hits10 /= n as f64;
    report
}

fn mix_seed(seed: u64, step: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E3779B97F4A7C15u64.wrapping_mul(step + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn sample_index(probs: &[f64], rng: &mut ChaCha20Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Replay the model over `timeline[t - window .. t]` from a zero history.
fn replay<'t>(
    vars: &ModelVars<'t>,
    timeline: &[SnapshotGraph],
    t: usize,
) -> std::result::Result<History<'t>, ModelError> {
    let start = t.saturating_sub(vars.config.window);
    let mut h = History::empty(vars);
    for snap in &timeline[start..t] {
        h = advance(vars, &h, snap)?;
    }
    Ok(h)
}

/// Draw one future snapshot at timestamp `t` by sampling `budget`
/// triples through the factorization p(s) p(r|s) p(o|s,r).
fn sample_snapshot(
    model: &Model,
    timeline: &[SnapshotGraph],
    t: u32,
    budget: usize,
    rng: &mut ChaCha20Rng,
) -> std::result::Result<SnapshotGraph, ModelError> {
    let tape = Tape::new();
    let vars = ModelVars::bind(&tape, model);
    let history = replay(&vars, timeline, timeline.len())?;
    let mut quads = Vec::with_capacity(budget);
    for _ in 0..budget {
        let p_s = prob_subject(&vars, &history)?.value().data;
        let s = sample_index(&p_s, rng) as u32;
        let p_r = prob_relation(&vars, &history, s)?.value().data;
        let r = sample_index(&p_r, rng) as u32;
        let p_o = prob_object(&vars, &history, s, r)?.value().data;
        let o = sample_index(&p_o, rng) as u32;
        quads.push(Quadruple { s, r, o, t });
    }
    Ok(crate::graphdata::build_snapshots(&quads, t as usize + 1).pop().unwrap())
}

/// Sample `horizon` consecutive future snapshots after `context`, each
/// conditioned on the context plus the previously sampled snapshots.
pub fn multi_step_sample(
    model: &Model,
    context: &[SnapshotGraph],
    horizon: usize,
    budget: usize,
    seed: u64,
) -> Result<Vec<SnapshotGraph>> {
    if horizon == 0 {
        return Err(EvalError::ZeroHorizon);
    }
    let mut timeline = context.to_vec();
    let mut sampled = Vec::with_capacity(horizon);
    for step in 0..horizon {
        let t = timeline.len() as u32;
        let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(seed, u64::from(t) + step as u64));
        let snap = sample_snapshot(model, &timeline, t, budget, &mut rng)?;
        timeline.push(snap.clone());
        sampled.push(snap);
    }
    Ok(sampled)
}

/// Score every test quadruple in both directions with filtered ranking.
///
/// `context` holds the ground-truth snapshots for all timestamps before
/// the first test timestamp (indices equal timestamps). Snapshots inside
/// the test window are either sampled from the model or taken from the
/// test facts themselves, per `cfg.mode`.
pub fn evaluate(
    model: &Model,
    context: &[SnapshotGraph],
    test_quads: &[Quadruple],
    filter: &FilterSet,
    cfg: &EvalConfig,
) -> Result<(EvalReport, Vec<RankResult>)> {
    let mut by_t: BTreeMap<u32, Vec<Quadruple>> = BTreeMap::new();
    for &q in test_quads {
        if (q.t as usize) < context.len() {
            return Err(EvalError::TimestampOrder(q.t));
        }
        by_t.entry(q.t).or_default().push(q);
    }
    let budget = cfg.budget.unwrap_or_else(|| {
        let edges: usize = context.iter().map(|g| g.edges.len()).sum();
        edges / context.len().max(1)
    });

    let mut timeline = context.to_vec();
    let mut ranks = Vec::with_capacity(test_quads.len() * 2);
    for (&t, quads) in &by_t {
        while timeline.len() < t as usize {
            let next_t = timeline.len() as u32;
            let snap = match cfg.mode {
                HistoryMode::Oracle => {
                    let at: Vec<Quadruple> =
                        test_quads.iter().filter(|q| q.t == next_t).cloned().collect();
                    crate::graphdata::build_snapshots(&at, next_t as usize + 1).pop().unwrap()
                }
                HistoryMode::Sampled => {
                    let mut rng =
                        ChaCha20Rng::seed_from_u64(mix_seed(cfg.seed, u64::from(next_t)));
                    sample_snapshot(model, &timeline, next_t, budget, &mut rng)?
                }
            };
            timeline.push(snap);
        }
        let tape = Tape::new();
        let vars = ModelVars::bind(&tape, model);
        let history = replay(&vars, &timeline, t as usize)?;
        for &q in quads {
            let scores_o = prob_object(&vars, &history, q.s, q.r)?.value().data;
            let known_o = filter.objects_for(q.s, q.r, q.t);
            let rank_o = rank_filtered(&scores_o, q.o as usize, |j| {
                j != q.o as usize && known_o.is_some_and(|set| set.contains(&(j as u32)))
            });
            ranks.push(RankResult { quad: q, rank: rank_o, direction: Direction::ObjectPred });

            let scores_s = prob_object(&vars, &history, q.o, q.r)?.value().data;
            let known_s = filter.subjects_for(q.o, q.r, q.t);
            let rank_s = rank_filtered(&scores_s, q.s as usize, |j| {
                j != q.s as usize && known_s.is_some_and(|set| set.contains(&(j as u32)))
            });
            ranks.push(RankResult { quad: q, rank: rank_s, direction: Direction::SubjectPred });
        }
    }
    Ok((report_from_ranks(&ranks), ranks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::{CurvatureSchedule, ScheduleKind};
    use crate::geometry::HModel;
    use crate::graphdata::{build_filter, build_snapshots};
    use crate::model::ModelConfig;
    use crate::training::{train_epoch, AdamState, TrainConfig};
    use proptest::prelude::*;

    /// Reference ranking: sort unfiltered candidates, locate the true
    /// one, average over its tie block.
    fn brute_force_rank(scores: &[f64], true_id: usize, filtered: &[usize]) -> f64 {
        let mut kept: Vec<(usize, f64)> = scores
            .iter()
            .cloned()
            .enumerate()
            .filter(|(j, _)| *j == true_id || !filtered.contains(j))
            .collect();
        kept.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let positions: Vec<usize> = kept
            .iter()
            .enumerate()
            .filter(|(_, (_, s))| *s == scores[true_id])
            .map(|(pos, _)| pos + 1)
            .collect();
        positions.iter().sum::<usize>() as f64 / positions.len() as f64
    }

    #[test]
    fn strictly_best_score_ranks_first() {
        let scores = [0.1, 0.9, 0.3];
        assert_eq!(rank_filtered(&scores, 1, |_| false), 1.0);
    }

    #[test]
    fn fully_filtered_competition_ranks_first() {
        let scores = [0.9, 0.1, 0.8, 0.7];
        assert_eq!(rank_filtered(&scores, 1, |_| true), 1.0);
    }

    #[test]
    fn six_candidate_case_matches_brute_force() {
        // candidates 2 and 5 are filtered; candidate 3 ties the true one
        let scores = [0.9, 0.5, 0.95, 0.5, 0.2, 0.99];
        let filtered = [2usize, 5];
        let got = rank_filtered(&scores, 1, |j| filtered.contains(&j));
        assert_eq!(got, brute_force_rank(&scores, 1, &filtered));
        // one strictly greater (0.9), one tie (0.5): mean of ranks {2,3}
        assert_eq!(got, 2.5);
    }

    #[test]
    fn random_score_mrr_matches_harmonic_expectation() {
        // with uniformly random distinct scores over n candidates the
        // rank is uniform on 1..=n, so E[1/rank] = H_n / n
        let n = 50;
        let trials = 10_000;
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..trials {
            let scores: Vec<f64> = (0..n).map(|_| rand::Rng::gen::<f64>(&mut rng)).collect();
            let rank = rank_filtered(&scores, 0, |_| false);
            let inv = 1.0 / rank;
            sum += inv;
            sumsq += inv * inv;
        }
        let mean = sum / trials as f64;
        let var = sumsq / trials as f64 - mean * mean;
        let se = (var / trials as f64).sqrt();
        let h_n: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
        let expect = h_n / n as f64;
        assert!(
            (mean - expect).abs() < 3.0 * se,
            "mean {mean} vs expected {expect} (3se {})",
            3.0 * se
        );
    }

    #[test]
    fn perfect_ranks_give_unit_metrics() {
        let q = Quadruple { s: 0, r: 0, o: 1, t: 0 };
        let ranks: Vec<RankResult> = (0..4)
            .map(|_| RankResult { quad: q, rank: 1.0, direction: Direction::ObjectPred })
            .collect();
        let rep = report_from_ranks(&ranks);
        assert_eq!(rep.mrr, 1.0);
        assert_eq!(rep.hits1, 1.0);
        assert_eq!(rep.hits10, 1.0);
    }

    fn toy_model(seed: u64, num_entities: usize) -> Model {
        Model::new(
            ModelConfig {
                num_entities,
                num_relations: 2,
                dim: 2,
                window: 3,
                lambda: 0.01,
                backend: HModel::PoincareBall,
                schedule: CurvatureSchedule {
                    kind: ScheduleKind::TimeSeries,
                    alpha: 0.1,
                    beta: -0.01,
                    gamma: 0.2,
                    omega: 0.3,
                    ..Default::default()
                },
            },
            seed,
        )
    }

    #[test]
    fn twenty_quad_toy_matches_independent_scorer() {
        let model = toy_model(1, 5);
        let train: Vec<Quadruple> = (0..12)
            .map(|i| Quadruple { s: i % 5, r: i % 2, o: (i + 1) % 5, t: i % 3 })
            .collect();
        let test: Vec<Quadruple> = (0..8)
            .map(|i| Quadruple { s: (i + 2) % 5, r: i % 2, o: (i + 3) % 5, t: 3 + i % 2 })
            .collect();
        let context = build_snapshots(&train, 3);
        let mut all = train.clone();
        all.extend_from_slice(&test);
        let filter = build_filter(&all);
        let cfg = EvalConfig { mode: HistoryMode::Oracle, budget: None, seed: 0 };
        let (report, ranks) = evaluate(&model, &context, &test, &filter, &cfg).unwrap();
        assert_eq!(ranks.len(), test.len() * 2);

        // independent scorer: same forward pass, brute-force ranking and
        // metric accumulation
        let mut ordered: BTreeMap<u32, Vec<Quadruple>> = BTreeMap::new();
        for &q in &test {
            ordered.entry(q.t).or_default().push(q);
        }
        let ordered: Vec<Quadruple> = ordered.into_values().flatten().collect();
        let mut inv_sum = 0.0;
        let mut idx = 0usize;
        for &q in &ordered {
            let mut timeline = context.clone();
            for t in context.len() as u32..q.t {
                let at: Vec<Quadruple> = test.iter().filter(|p| p.t == t).cloned().collect();
                timeline.push(build_snapshots(&at, t as usize + 1).pop().unwrap());
            }
            let tape = Tape::new();
            let vars = ModelVars::bind(&tape, &model);
            let history = replay(&vars, &timeline, q.t as usize).unwrap();
            let scores_o = prob_object(&vars, &history, q.s, q.r).unwrap().value().data;
            let filt_o: Vec<usize> = filter
                .objects_for(q.s, q.r, q.t)
                .map(|set| set.iter().map(|&x| x as usize).filter(|&x| x != q.o as usize).collect())
                .unwrap_or_default();
            let r_o = brute_force_rank(&scores_o, q.o as usize, &filt_o);
            assert_eq!(ranks[idx].rank, r_o);
            idx += 1;
            let scores_s = prob_object(&vars, &history, q.o, q.r).unwrap().value().data;
            let filt_s: Vec<usize> = filter
                .subjects_for(q.o, q.r, q.t)
                .map(|set| set.iter().map(|&x| x as usize).filter(|&x| x != q.s as usize).collect())
                .unwrap_or_default();
            let r_s = brute_force_rank(&scores_s, q.s as usize, &filt_s);
            assert_eq!(ranks[idx].rank, r_s);
            idx += 1;
            inv_sum += 1.0 / r_o + 1.0 / r_s;
        }
        let mrr = inv_sum / (test.len() * 2) as f64;
        assert!((report.mrr - mrr).abs() < 1e-12);
    }

    #[test]
    fn overfit_toy_reaches_near_perfect_training_mrr() {
        // one repeating fact: the model can memorize it outright
        let quads: Vec<Quadruple> =
            (0..4).map(|t| Quadruple { s: 0, r: 0, o: 1, t }).collect();
        let snaps = build_snapshots(&quads, 4);
        let mut model = toy_model(2, 4);
        let cfg = TrainConfig {
            lr: 5e-2,
            batch_size: 8,
            epochs: 0,
            window: 3,
            lambda: 0.01,
            seed: 1,
            clip_norm: 1.0,
            dim: 2,
            backend: HModel::PoincareBall,
            schedule: ScheduleKind::TimeSeries,
            poly_degree: 2,
        };
        let mut adam = AdamState::new(&model.params);
        for e in 0..40 {
            train_epoch(&mut model, &snaps, &mut adam, &cfg, e).unwrap();
        }
        let test = vec![Quadruple { s: 0, r: 0, o: 1, t: 3 }];
        let context = build_snapshots(&quads[..3], 3);
        let filter = build_filter(&quads);
        let eval_cfg = EvalConfig { mode: HistoryMode::Oracle, budget: None, seed: 0 };
        let (report, _) = evaluate(&model, &context, &test, &filter, &eval_cfg).unwrap();
        assert!(report.mrr >= 0.95, "mrr {}", report.mrr);
        assert!(report.hits1 <= report.hits3 && report.hits3 <= report.hits10);
    }

    #[test]
    fn sampling_is_deterministic_and_respects_budget() {
        let model = toy_model(3, 5);
        let train: Vec<Quadruple> = (0..9)
            .map(|i| Quadruple { s: i % 5, r: i % 2, o: (i + 2) % 5, t: i % 3 })
            .collect();
        let context = build_snapshots(&train, 3);

        assert!(matches!(
            multi_step_sample(&model, &context, 0, 3, 0),
            Err(EvalError::ZeroHorizon)
        ));

        let empty = multi_step_sample(&model, &context, 2, 0, 0).unwrap();
        assert!(empty.iter().all(|g| g.edges.is_empty()));

        let a = multi_step_sample(&model, &context, 3, 4, 99).unwrap();
        let b = multi_step_sample(&model, &context, 3, 4, 99).unwrap();
        assert_eq!(a, b);
        let one = multi_step_sample(&model, &context, 1, 4, 99).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0], a[0]);
        // budget bounds the deduplicated edge count
        assert!(a.iter().all(|g| g.edges.len() <= 4));
    }

    #[test]
    fn test_quads_inside_context_are_rejected() {
        let model = toy_model(4, 5);
        let train: Vec<Quadruple> =
            (0..3).map(|t| Quadruple { s: 0, r: 0, o: 1, t }).collect();
        let context = build_snapshots(&train, 3);
        let filter = build_filter(&train);
        let bad = vec![Quadruple { s: 0, r: 0, o: 1, t: 1 }];
        assert!(matches!(
            evaluate(&model, &context, &bad, &filter, &EvalConfig::default()),
            Err(EvalError::TimestampOrder(1))
        ));
    }

    proptest! {
        // removing competitors can only improve (lower) the rank
        #[test]
        fn filtered_rank_never_exceeds_raw_rank(
            scores in proptest::collection::vec(0.0f64..1.0, 2..20),
            mask in proptest::collection::vec(any::<bool>(), 2..20),
        ) {
            let true_id = 0usize;
            let raw = rank_filtered(&scores, true_id, |_| false);
            let filtered = rank_filtered(&scores, true_id, |j| {
                mask.get(j).copied().unwrap_or(false)
            });
            prop_assert!(filtered <= raw);
        }

        // lowering the true score never improves its rank
        #[test]
        fn rank_is_monotone_in_true_score(
            scores in proptest::collection::vec(0.0f64..1.0, 3..15),
            drop in 0.01f64..0.5,
        ) {
            let base = rank_filtered(&scores, 0, |_| false);
            let mut worse = scores.clone();
            worse[0] -= drop;
            let after = rank_filtered(&worse, 0, |_| false);
            prop_assert!(after >= base);
        }
    }
}
