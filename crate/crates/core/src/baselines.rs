//! Reference next-intent predictors: random, marginal (no-lag), and bigram
//! with backoff to marginal.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::corpus::{IntentVocabulary, TurnIntentMatrix};
use crate::error::{Error, Result};
use crate::seeding;

/// Full-vocabulary ranking, scores non-increasing, each intent exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub entries: Vec<(String, f64)>,
}

impl Ranking {
    /// 1-based rank of an intent, if present.
    pub fn rank_of(&self, intent: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == intent).map(|i| i + 1)
    }

    pub fn is_permutation_of(&self, vocab: &IntentVocabulary) -> bool {
        if self.entries.len() != vocab.len() {
            return false;
        }
        let mut seen: Vec<&str> = self.entries.iter().map(|(n, _)| n.as_str()).collect();
        seen.sort_unstable();
        seen == vocab.names().iter().map(|s| s.as_str()).collect::<Vec<_>>()
            && self.entries.windows(2).all(|w| w[0].1 >= w[1].1)
    }
}

fn ranking_from_counts(vocab: &IntentVocabulary, counts: &BTreeMap<String, f64>) -> Ranking {
    let mut entries: Vec<(String, f64)> = vocab
        .names()
        .iter()
        .map(|n| (n.clone(), counts.get(n).copied().unwrap_or(0.0)))
        .collect();
    entries.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
    Ranking { entries }
}

/// Uniform random permutation, deterministic for (seed, draw_index);
/// scores 1/rank.
pub fn random_ranking(vocab: &IntentVocabulary, seed: u64, draw_index: u64) -> Ranking {
    let mut names = vocab.names().to_vec();
    let mut rng = seeding::substream_indexed(seed, "random-baseline", draw_index);
    names.shuffle(&mut rng);
    Ranking {
        entries: names
            .into_iter()
            .enumerate()
            .map(|(i, n)| (n, 1.0 / (i + 1) as f64))
            .collect(),
    }
}

/// Ranks intents by their frequency as a next-turn intent over the training
/// lagged pairs. Constant across queries.
pub fn marginal_ranking(train: &TurnIntentMatrix, vocab: &IntentVocabulary) -> Result<Ranking> {
    if train.n_rows() == 0 {
        return Err(Error::Estimation("empty training matrix".into()));
    }
    let mut counts = BTreeMap::new();
    let mut pair_seen = false;
    for t in 0..train.n_rows().saturating_sub(1) {
        let tag = &train.row_tags()[t];
        let next = &train.row_tags()[t + 1];
        if tag.dialogue_id != next.dialogue_id || next.turn_index != tag.turn_index + 1 {
            continue;
        }
        pair_seen = true;
        for (j, &v) in train.row(t + 1).iter().enumerate() {
            if v == 1 {
                *counts.entry(vocab.names()[j].clone()).or_insert(0.0) += 1.0;
            }
        }
    }
    if !pair_seen {
        return Err(Error::Estimation(
            "no consecutive USER-turn pairs in training data".into(),
        ));
    }
    Ok(ranking_from_counts(vocab, &counts))
}

/// Context key: the full intent sets of turns t-1 and t. The first pair of a
/// dialogue uses an explicit empty previous set.
pub type ContextKey = (Vec<String>, Vec<String>);

#[derive(Debug, Clone)]
pub struct BigramTable {
    pub contexts: BTreeMap<ContextKey, BTreeMap<String, f64>>,
    pub marginal: Ranking,
}

impl BigramTable {
    /// Fits context counts over within-dialogue turn triples (t-1, t, t+1).
    pub fn fit(train: &TurnIntentMatrix, vocab: &IntentVocabulary) -> Result<Self> {
        let marginal = marginal_ranking(train, vocab)?;
        let row_set = |t: usize| -> Vec<String> {
            train
                .row(t)
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 1)
                .map(|(j, _)| vocab.names()[j].clone())
                .collect()
        };
        let mut contexts: BTreeMap<ContextKey, BTreeMap<String, f64>> = BTreeMap::new();
        for t in 0..train.n_rows().saturating_sub(1) {
            let tag = &train.row_tags()[t];
            let next = &train.row_tags()[t + 1];
            if tag.dialogue_id != next.dialogue_id || next.turn_index != tag.turn_index + 1 {
                continue;
            }
            let previous = if tag.turn_index == 0 {
                Vec::new()
            } else {
                row_set(t - 1)
            };
            let key = (previous, row_set(t));
            let slot = contexts.entry(key).or_default();
            for intent in row_set(t + 1) {
                *slot.entry(intent).or_insert(0.0) += 1.0;
            }
        }
        Ok(Self { contexts, marginal })
    }
}

/// Rank by the context's counts when seen (zero-count intents after
/// positive-count ones, in marginal order); otherwise back off to marginal.
pub fn bigram_ranking(table: &BigramTable, previous: &[String], current: &[String]) -> Ranking {
    let mut previous = previous.to_vec();
    let mut current = current.to_vec();
    previous.sort();
    current.sort();
    let counts = match table.contexts.get(&(previous, current)) {
        Some(c) => c,
        None => return table.marginal.clone(),
    };
    let mut positive: Vec<(String, f64)> = counts
        .iter()
        .map(|(n, &c)| (n.clone(), c))
        .filter(|(_, c)| *c > 0.0)
        .collect();
    positive.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
    let mut entries = positive.clone();
    for (name, _) in &table.marginal.entries {
        if !positive.iter().any(|(n, _)| n == name) {
            entries.push((name.clone(), 0.0));
        }
    }
    Ranking { entries }
}
