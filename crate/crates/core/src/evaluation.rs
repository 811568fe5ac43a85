//! Two-track evaluation: ranking fidelity (Recall@k, MRR, per-intent
//! breakdown), ground-truth replay, cross-validation edge stability,
//! information gain, and the random-DAG comparison.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::baselines::{bigram_ranking, random_ranking, BigramTable, Ranking};
use crate::corpus::{
    build_turn_matrix, build_vocabulary, Dialogue, IntentVocabulary, TurnIntentMatrix,
};
use crate::error::{Error, Result};
use crate::exec;
use crate::guidance::gate;
use crate::inference::{posterior_next_intents, Evidence};
use crate::parameters::{fit_cpds, DiscreteBayesNet};
use crate::seeding;
use crate::structure::{learn_structure, Edge, NotearsConfig, TabuMask, WeightedDag};
use crate::temporal::{
    build_lagged, LaggedDataset, ProgressBucket, CURRENT_SUFFIX, PROGRESS_NAMES,
};

/// One evaluation pair: the conditioning side of a consecutive USER-turn pair.
#[derive(Debug, Clone)]
pub struct PairContext {
    pub index: usize,
    /// Intent set of turn t-1; empty at the start of a dialogue.
    pub previous: Vec<String>,
    /// Intent set of turn t.
    pub current: Vec<String>,
    pub bucket: ProgressBucket,
}

pub trait RankingPredictor: Sync {
    fn rank(&self, ctx: &PairContext) -> Result<Ranking>;
}

pub struct RandomPredictor {
    pub vocab: IntentVocabulary,
    pub seed: u64,
}

impl RankingPredictor for RandomPredictor {
    fn rank(&self, ctx: &PairContext) -> Result<Ranking> {
        Ok(random_ranking(&self.vocab, self.seed, ctx.index as u64))
    }
}

pub struct MarginalPredictor {
    pub ranking: Ranking,
}

impl RankingPredictor for MarginalPredictor {
    fn rank(&self, _ctx: &PairContext) -> Result<Ranking> {
        Ok(self.ranking.clone())
    }
}

pub struct BigramPredictor {
    pub table: BigramTable,
}

impl RankingPredictor for BigramPredictor {
    fn rank(&self, ctx: &PairContext) -> Result<Ranking> {
        Ok(bigram_ranking(&self.table, &ctx.previous, &ctx.current))
    }
}

/// Ranks next intents by the exact posterior given the full current-turn
/// assignment and the progress indicator.
pub struct BnPredictor {
    pub bn: DiscreteBayesNet,
    pub vocab: IntentVocabulary,
}

impl BnPredictor {
    fn evidence_for(&self, current: &[String], bucket: ProgressBucket) -> Evidence {
        let mut evidence = Evidence::new();
        for name in self.vocab.names() {
            let var = format!("{name}{CURRENT_SUFFIX}");
            if self.bn.variable_names().iter().any(|n| n == &var) {
                evidence = evidence.set(&var, current.contains(name) as usize);
            }
        }
        for (i, name) in PROGRESS_NAMES.iter().enumerate() {
            if self.bn.variable_names().iter().any(|n| n == name) {
                evidence = evidence.set(name, (i == bucket.index()) as usize);
            }
        }
        evidence
    }
}

impl RankingPredictor for BnPredictor {
    fn rank(&self, ctx: &PairContext) -> Result<Ranking> {
        let posterior =
            posterior_next_intents(&self.bn, &self.evidence_for(&ctx.current, ctx.bucket))?;
        let mut entries: Vec<(String, f64)> = posterior.probabilities.into_iter().collect();
        entries.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then_with(|| a.0.cmp(&b.0))
        });
        Ok(Ranking { entries })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankEvalReport {
    pub recall_at: BTreeMap<u32, f64>,
    pub mrr: f64,
    /// Pairs actually scored (next turn carried at least one intent).
    pub pair_count: usize,
    /// Pairs skipped because the next turn had no active intent.
    pub excluded_pairs: usize,
    pub per_intent_recall5: BTreeMap<String, f64>,
}

/// Builds (context, ground-truth) pairs from a lagged dataset. The previous
/// set comes from the within-dialogue predecessor row when one exists.
pub fn pair_contexts(
    data: &LaggedDataset,
    vocab: &IntentVocabulary,
) -> Vec<(PairContext, Vec<String>)> {
    let mut by_tag: BTreeMap<(&str, usize), usize> = BTreeMap::new();
    for (i, tag) in data.row_tags().iter().enumerate() {
        by_tag.insert((tag.dialogue_id.as_str(), tag.turn_index), i);
    }
    let names_at = |row: &[u8]| -> Vec<String> {
        row.iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(|(j, _)| vocab.names()[j].to_string())
            .collect()
    };
    let mut out = Vec::with_capacity(data.n_rows());
    for i in 0..data.n_rows() {
        let row = data.row(i);
        let tag = &data.row_tags()[i];
        let previous = if tag.turn_index == 0 {
            Vec::new()
        } else {
            by_tag
                .get(&(tag.dialogue_id.as_str(), tag.turn_index - 1))
                .map(|&p| names_at(data.current_slice(data.row(p))))
                .unwrap_or_default()
        };
        let ctx = PairContext {
            index: i,
            previous,
            current: names_at(data.current_slice(row)),
            bucket: data.progress_of_row(row),
        };
        out.push((ctx, names_at(data.next_slice(row))));
    }
    out
}

/// A pair is a hit at k when any ground-truth next intent is in the top-k;
/// MRR uses the best-ranked ground-truth intent.
pub fn rank_eval(
    predictor: &dyn RankingPredictor,
    data: &LaggedDataset,
    vocab: &IntentVocabulary,
) -> Result<RankEvalReport> {
    if data.n_rows() == 0 {
        return Err(Error::Estimation("no evaluation pairs".into()));
    }
    let ks = [1u32, 3, 5];
    let mut hits: BTreeMap<u32, usize> = ks.iter().map(|&k| (k, 0)).collect();
    let mut mrr_sum = 0.0;
    let mut scored = 0usize;
    let mut excluded = 0usize;
    let mut intent_totals: BTreeMap<String, usize> = BTreeMap::new();
    let mut intent_hits5: BTreeMap<String, usize> = BTreeMap::new();
    for (ctx, truth) in pair_contexts(data, vocab) {
        if truth.is_empty() {
            excluded += 1;
            continue;
        }
        let ranking = predictor.rank(&ctx)?;
        if !ranking.is_permutation_of(vocab) {
            return Err(Error::Contract(format!(
                "ranking for pair {} is not a permutation of the vocabulary",
                ctx.index
            )));
        }
        scored += 1;
        let best_rank = truth
            .iter()
            .filter_map(|t| ranking.rank_of(t))
            .min()
            .expect("truth intents are vocabulary members");
        mrr_sum += 1.0 / best_rank as f64;
        for &k in &ks {
            if best_rank <= k as usize {
                *hits.get_mut(&k).unwrap() += 1;
            }
        }
        for intent in &truth {
            *intent_totals.entry(intent.clone()).or_insert(0) += 1;
            if ranking.rank_of(intent).expect("vocabulary member") <= 5 {
                *intent_hits5.entry(intent.clone()).or_insert(0) += 1;
            }
        }
    }
    if scored == 0 {
        return Err(Error::Estimation(
            "every pair had an intent-free next turn".into(),
        ));
    }
    let recall_at = ks
        .iter()
        .map(|&k| (k, hits[&k] as f64 / scored as f64))
        .collect();
    let per_intent_recall5 = intent_totals
        .iter()
        .map(|(intent, &total)| {
            let h = intent_hits5.get(intent).copied().unwrap_or(0);
            (intent.clone(), h as f64 / total as f64)
        })
        .collect();
    Ok(RankEvalReport {
        recall_at,
        mrr: mrr_sum / scored as f64,
        pair_count: scored,
        excluded_pairs: excluded,
        per_intent_recall5,
    })
}

/// Produces the gated top-k next-intent predictions for one turn.
pub trait GatedPredictor: Sync {
    fn gated(
        &self,
        current: &[String],
        turn_index: usize,
        dialogue_turn_count: usize,
    ) -> Result<Vec<(String, f64)>>;
}

pub struct BnGuidedPredictor {
    pub predictor: BnPredictor,
    pub top_k: usize,
    pub tau: f64,
}

impl GatedPredictor for BnGuidedPredictor {
    fn gated(
        &self,
        current: &[String],
        turn_index: usize,
        dialogue_turn_count: usize,
    ) -> Result<Vec<(String, f64)>> {
        let bucket = crate::temporal::progress_bucket(turn_index, dialogue_turn_count)?;
        let posterior = posterior_next_intents(
            &self.predictor.bn,
            &self.predictor.evidence_for(current, bucket),
        )?;
        let mut surviving = gate(&posterior, self.tau);
        surviving.truncate(self.top_k);
        Ok(surviving)
    }
}

/// Predicts nothing; the baseline arm of replay.
pub struct NullPredictor;

impl GatedPredictor for NullPredictor {
    fn gated(&self, _: &[String], _: usize, _: usize) -> Result<Vec<(String, f64)>> {
        Ok(Vec::new())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DialogueReplay {
    pub dialogue_id: String,
    pub coverage_baseline: Vec<f64>,
    pub coverage_guided: Vec<f64>,
    pub auc_baseline: f64,
    pub auc_guided: f64,
    pub turns_to_75_baseline: usize,
    pub turns_to_75_guided: usize,
    pub turn_reduction: f64,
    pub hit_rate: f64,
    pub jaccard: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayAggregate {
    pub dialogue_count: usize,
    pub excluded_dialogues: usize,
    pub auc_baseline_mean: f64,
    pub auc_guided_mean: f64,
    pub turns_to_75_baseline_mean: f64,
    pub turns_to_75_guided_mean: f64,
    pub turn_reduction_mean: f64,
    pub turn_reduction_std: f64,
    pub hit_rate_mean: f64,
    pub hit_rate_std: f64,
    pub jaccard_mean: f64,
    pub jaccard_std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayReport {
    pub per_dialogue: Vec<DialogueReplay>,
    pub aggregate: ReplayAggregate,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Sample standard deviation (the ± spreads are over dialogues).
fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

fn turns_to_fraction(coverage: &[f64], fraction: f64) -> usize {
    coverage
        .iter()
        .position(|&c| c >= fraction)
        .map(|i| i + 1)
        .unwrap_or(coverage.len())
}

fn replay_one(
    dialogue: &Dialogue,
    predictor: &dyn GatedPredictor,
) -> Result<Option<DialogueReplay>> {
    let turn_sets = dialogue.user_turn_intents()?;
    let total: BTreeSet<String> = turn_sets.iter().flatten().cloned().collect();
    if total.is_empty() {
        return Ok(None);
    }
    let n = turn_sets.len();
    let mut covered_baseline: BTreeSet<String> = BTreeSet::new();
    let mut covered_guided: BTreeSet<String> = BTreeSet::new();
    let mut coverage_baseline = Vec::with_capacity(n);
    let mut coverage_guided = Vec::with_capacity(n);
    let mut hits = 0usize;
    let mut jaccard_sum = 0.0;
    for (t, actual) in turn_sets.iter().enumerate() {
        covered_baseline.extend(actual.iter().cloned());
        covered_guided.extend(actual.iter().cloned());
        let current: Vec<String> = actual.iter().cloned().collect();
        let predicted: BTreeSet<String> = predictor
            .gated(&current, t, n)?
            .into_iter()
            .map(|(name, _)| name)
            .collect();
        // a prediction at turn t is credited when the intent actually occurs
        // at a strictly later turn of the same dialogue
        for intent in &predicted {
            if turn_sets[t + 1..].iter().any(|s| s.contains(intent)) {
                covered_guided.insert(intent.clone());
            }
        }
        if t + 1 < n {
            let next = &turn_sets[t + 1];
            let inter = predicted.intersection(next).count();
            let union = predicted.union(next).count();
            if inter > 0 {
                hits += 1;
            }
            jaccard_sum += if union == 0 {
                0.0
            } else {
                inter as f64 / union as f64
            };
        }
        coverage_baseline.push(covered_baseline.len() as f64 / total.len() as f64);
        coverage_guided.push(covered_guided.len() as f64 / total.len() as f64);
    }
    let auc_baseline = mean(&coverage_baseline);
    let auc_guided = mean(&coverage_guided);
    let turns_to_75_baseline = turns_to_fraction(&coverage_baseline, 0.75);
    let turns_to_75_guided = turns_to_fraction(&coverage_guided, 0.75);
    let non_final = (n - 1).max(1) as f64;
    Ok(Some(DialogueReplay {
        dialogue_id: dialogue.dialogue_id.clone(),
        auc_baseline,
        auc_guided,
        turn_reduction: turns_to_75_baseline as f64 - turns_to_75_guided as f64,
        turns_to_75_baseline,
        turns_to_75_guided,
        hit_rate: if n > 1 { hits as f64 / non_final } else { 0.0 },
        jaccard: if n > 1 { jaccard_sum / non_final } else { 0.0 },
        coverage_baseline,
        coverage_guided,
    }))
}

/// Ground-truth replay over every dialogue, deterministic per-dialogue order.
pub fn replay(dialogues: &[Dialogue], predictor: &dyn GatedPredictor) -> Result<ReplayReport> {
    let results = exec::map_ordered(dialogues, |d| replay_one(d, predictor));
    let mut per_dialogue = Vec::new();
    let mut excluded = 0usize;
    for r in results {
        match r? {
            Some(record) => per_dialogue.push(record),
            None => excluded += 1,
        }
    }
    let collect = |f: fn(&DialogueReplay) -> f64| -> Vec<f64> {
        per_dialogue.iter().map(f).collect()
    };
    let turn_reductions = collect(|r| r.turn_reduction);
    let hit_rates = collect(|r| r.hit_rate);
    let jaccards = collect(|r| r.jaccard);
    let aggregate = ReplayAggregate {
        dialogue_count: per_dialogue.len(),
        excluded_dialogues: excluded,
        auc_baseline_mean: mean(&collect(|r| r.auc_baseline)),
        auc_guided_mean: mean(&collect(|r| r.auc_guided)),
        turns_to_75_baseline_mean: mean(&collect(|r| r.turns_to_75_baseline as f64)),
        turns_to_75_guided_mean: mean(&collect(|r| r.turns_to_75_guided as f64)),
        turn_reduction_mean: mean(&turn_reductions),
        turn_reduction_std: std_dev(&turn_reductions),
        hit_rate_mean: mean(&hit_rates),
        hit_rate_std: std_dev(&hit_rates),
        jaccard_mean: mean(&jaccards),
        jaccard_std: std_dev(&jaccards),
    };
    Ok(ReplayReport {
        per_dialogue,
        aggregate,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeStability {
    pub source: String,
    pub target: String,
    pub presence: usize,
    pub mean_weight: f64,
    pub weight_std: f64,
    pub robust: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub folds: usize,
    pub edges: Vec<EdgeStability>,
    pub backward_edge_count: usize,
    pub average_degree_mean: f64,
}

/// Learns a structure per fold-complement over a dialogue-level partition and
/// reports per-edge presence and weight statistics.
pub fn edge_stability(
    dialogues: &[Dialogue],
    folds: usize,
    config: &NotearsConfig,
    seed: u64,
) -> Result<StabilityReport> {
    if folds < 2 {
        return Err(Error::Config(format!("need >= 2 folds, got {folds}")));
    }
    if dialogues.len() < folds {
        return Err(Error::Config(format!(
            "{} dialogues cannot form {folds} folds",
            dialogues.len()
        )));
    }
    let vocab = build_vocabulary(dialogues)?;
    let mut order: Vec<usize> = (0..dialogues.len()).collect();
    {
        use rand::seq::SliceRandom;
        let mut rng = seeding::substream(seed, "folds");
        order.shuffle(&mut rng);
    }
    let fold_of: Vec<usize> = {
        let mut assignment = vec![0; dialogues.len()];
        for (pos, &idx) in order.iter().enumerate() {
            assignment[idx] = pos % folds;
        }
        assignment
    };
    let fold_ids: Vec<usize> = (0..folds).collect();
    let dags: Vec<Result<WeightedDag>> = exec::map_ordered(&fold_ids, |&fold| {
        let train: Vec<Dialogue> = dialogues
            .iter()
            .enumerate()
            .filter(|(i, _)| fold_of[*i] != fold)
            .map(|(_, d)| d.clone())
            .collect();
        let matrix = build_turn_matrix(&train, &vocab)?;
        let lagged = build_lagged(&matrix, &vocab)?;
        let mask = crate::structure::build_tabu_mask(lagged.variable_names())?;
        learn_structure(&lagged, &mask, config)
            .map_err(|e| Error::Estimation(format!("fold {fold}: {e}")))
    });
    let dags: Vec<WeightedDag> = dags.into_iter().collect::<Result<_>>()?;

    let mut weights_by_edge: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let mut backward = 0usize;
    for dag in &dags {
        backward += dag.backward_edge_count();
        for e in &dag.edges {
            weights_by_edge
                .entry((e.source.clone(), e.target.clone()))
                .or_default()
                .push(e.weight);
        }
    }
    let robust_presence = (4 * folds + 4) / 5; // ceil(0.8·folds): the 4-of-5 rule, scaled
    let edges = weights_by_edge
        .into_iter()
        .map(|((source, target), ws)| {
            let m = mean(&ws);
            let s = std_dev(&ws);
            EdgeStability {
                source,
                target,
                presence: ws.len(),
                mean_weight: m,
                weight_std: s,
                robust: ws.len() >= robust_presence && s < 0.10,
            }
        })
        .collect();
    let degree_mean = mean(&dags.iter().map(average_degree).collect::<Vec<_>>());
    Ok(StabilityReport {
        folds,
        edges,
        backward_edge_count: backward,
        average_degree_mean: degree_mean,
    })
}

/// 2·|edges| / |nodes with at least one incident edge|; 0 for the empty graph.
pub fn average_degree(dag: &WeightedDag) -> f64 {
    let mut incident: BTreeSet<&str> = BTreeSet::new();
    for e in &dag.edges {
        incident.insert(&e.source);
        incident.insert(&e.target);
    }
    if incident.is_empty() {
        0.0
    } else {
        2.0 * dag.edges.len() as f64 / incident.len() as f64
    }
}

/// Empirical mutual information I(j_t; j_{t+1}) in bits over within-dialogue
/// consecutive pairs, MLE counts, 0·log 0 = 0.
pub fn info_gain(
    matrix: &TurnIntentMatrix,
    vocab: &IntentVocabulary,
    intent: &str,
) -> Result<f64> {
    let j = vocab
        .index_of(intent)
        .ok_or_else(|| Error::UnknownIntent {
            intent: intent.to_string(),
            dialogue_id: String::new(),
        })?;
    let mut joint = [[0.0f64; 2]; 2];
    let mut pairs = 0usize;
    for t in 0..matrix.n_rows().saturating_sub(1) {
        let tag = &matrix.row_tags()[t];
        let next = &matrix.row_tags()[t + 1];
        if tag.dialogue_id != next.dialogue_id || next.turn_index != tag.turn_index + 1 {
            continue;
        }
        joint[matrix.row(t)[j] as usize][matrix.row(t + 1)[j] as usize] += 1.0;
        pairs += 1;
    }
    if pairs == 0 {
        return Err(Error::Estimation("no consecutive USER-turn pairs".into()));
    }
    let n = pairs as f64;
    let p_cur = [
        (joint[0][0] + joint[0][1]) / n,
        (joint[1][0] + joint[1][1]) / n,
    ];
    let p_next = [
        (joint[0][0] + joint[1][0]) / n,
        (joint[0][1] + joint[1][1]) / n,
    ];
    let mut mi = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let p = joint[a][b] / n;
            if p > 0.0 {
                mi += p * (p / (p_cur[a] * p_next[b])).log2();
            }
        }
    }
    Ok(mi)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomDagReport {
    pub learned_recall5: f64,
    pub random_mean: f64,
    pub random_std: f64,
    pub trials: usize,
}

/// Uniform random DAG with the reference's node and edge counts, respecting
/// the tabu mask. Acyclicity comes from sampling edges consistent with a
/// random topological order.
fn random_dag(
    reference: &WeightedDag,
    mask: &TabuMask,
    seed: u64,
    trial: u64,
) -> Result<WeightedDag> {
    use rand::seq::SliceRandom;
    let d = reference.variable_names.len();
    let m = reference.edges.len();
    let mut rng = seeding::substream_indexed(seed, "random-dag", trial);
    for _ in 0..100 {
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(&mut rng);
        let mut position = vec![0usize; d];
        for (pos, &v) in perm.iter().enumerate() {
            position[v] = pos;
        }
        let allowed: Vec<(usize, usize)> = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .filter(|&(i, j)| !mask.is_forbidden(i, j) && position[i] < position[j])
            .collect();
        if allowed.len() < m {
            continue;
        }
        let chosen = rand::seq::index::sample(&mut rng, allowed.len(), m);
        let mut weights = ndarray::Array2::<f64>::zeros((d, d));
        let mut edges: Vec<Edge> = chosen
            .iter()
            .map(|idx| {
                let (i, j) = allowed[idx];
                weights[[i, j]] = 1.0;
                Edge {
                    source: reference.variable_names[i].clone(),
                    target: reference.variable_names[j].clone(),
                    weight: 1.0,
                }
            })
            .collect();
        edges.sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));
        return Ok(WeightedDag {
            variable_names: reference.variable_names.clone(),
            weights,
            edges,
            prune_threshold: reference.prune_threshold,
        });
    }
    Err(Error::Config(format!(
        "cannot place {m} edges under the tabu mask"
    )))
}

/// Compares the learned structure's Recall@5 against random structures with
/// identical node/edge counts, CPDs refitted per trial.
#[allow(clippy::too_many_arguments)]
pub fn random_dag_comparison(
    train: &LaggedDataset,
    eval: &LaggedDataset,
    vocab: &IntentVocabulary,
    reference: &WeightedDag,
    mask: &TabuMask,
    ess: f64,
    trials: usize,
    seed: u64,
) -> Result<RandomDagReport> {
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    let eval_r5 = |dag: &WeightedDag| -> Result<f64> {
        let bn = fit_cpds(dag, train, ess)?;
        let predictor = BnPredictor {
            bn,
            vocab: vocab.clone(),
        };
        let report = rank_eval(&predictor, eval, vocab)?;
        Ok(report.recall_at[&5])
    };
    let learned_recall5 = eval_r5(reference)?;
    let trial_ids: Vec<u64> = (0..trials as u64).collect();
    let scores: Vec<Result<f64>> = exec::map_ordered(&trial_ids, |&t| {
        let dag = random_dag(reference, mask, seed, t)?;
        eval_r5(&dag)
    });
    let scores: Vec<f64> = scores.into_iter().collect::<Result<_>>()?;
    Ok(RandomDagReport {
        learned_recall5,
        random_mean: mean(&scores),
        random_std: std_dev(&scores),
        trials,
    })
}
