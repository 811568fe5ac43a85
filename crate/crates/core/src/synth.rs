//! Synthetic dialogue corpora with a known intent-transition process; the
//! desk-scale oracle for structure recovery and end-to-end checks.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, Speaker, Turn};
use crate::error::{Error, Result};
use crate::seeding;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub vocabulary: Vec<String>,
    /// Probability that an active intent repeats on the next turn.
    #[serde(default)]
    pub persistence: BTreeMap<String, f64>,
    /// transition[from][to] = probability that `from` active at turn t
    /// triggers `to` at turn t+1.
    #[serde(default)]
    pub transition: BTreeMap<String, BTreeMap<String, f64>>,
    /// Per-turn probability of spawning one fresh uniform intent.
    #[serde(default)]
    pub spawn: f64,
    pub dialogues: usize,
    pub turns_range: (usize, usize),
    pub seed: u64,
}

impl SynthSpec {
    /// Two persisting intents and one cross-transition; the planted structure
    /// used throughout the test suite.
    pub fn planted(dialogues: usize, seed: u64) -> Self {
        let mut persistence = BTreeMap::new();
        persistence.insert("find-food".to_string(), 0.8);
        persistence.insert("find-room".to_string(), 0.8);
        let mut transition = BTreeMap::new();
        let mut from_food = BTreeMap::new();
        from_food.insert("book-food".to_string(), 0.7);
        transition.insert("find-food".to_string(), from_food);
        Self {
            vocabulary: vec![
                "book-food".to_string(),
                "find-food".to_string(),
                "find-room".to_string(),
            ],
            persistence,
            transition,
            spawn: 0.05,
            dialogues,
            turns_range: (4, 8),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocabulary.is_empty() {
            return Err(Error::Config("synth vocabulary is empty".into()));
        }
        if self.turns_range.0 < 2 || self.turns_range.1 < self.turns_range.0 {
            return Err(Error::Config(format!(
                "turns_range must satisfy 2 <= min <= max, got {:?}",
                self.turns_range
            )));
        }
        let in_unit = |p: f64| (0.0..=1.0).contains(&p);
        if !in_unit(self.spawn) {
            return Err(Error::Config("spawn probability out of [0,1]".into()));
        }
        let vocab: BTreeSet<&str> = self.vocabulary.iter().map(|s| s.as_str()).collect();
        for (name, &p) in &self.persistence {
            if !vocab.contains(name.as_str()) || !in_unit(p) {
                return Err(Error::Config(format!("bad persistence entry {name:?}")));
            }
        }
        for (from, tos) in &self.transition {
            if !vocab.contains(from.as_str()) {
                return Err(Error::Config(format!("unknown transition source {from:?}")));
            }
            for (to, &p) in tos {
                if !vocab.contains(to.as_str()) || !in_unit(p) {
                    return Err(Error::Config(format!(
                        "bad transition entry {from:?} -> {to:?}"
                    )));
                }
            }
        }
        if self.dialogues == 0 {
            return Err(Error::Config("dialogue count must be >= 1".into()));
        }
        Ok(())
    }
}

fn template_utterance(intents: &BTreeSet<String>) -> String {
    if intents.is_empty() {
        return "ok".to_string();
    }
    let phrases: Vec<String> = intents
        .iter()
        .map(|name| match name.split_once('-') {
            Some((action, object)) => format!("i want to {action} a {object}"),
            None => format!("i want to {name}"),
        })
        .collect();
    phrases.join(" and ")
}

/// Per turn: persistence first, then transitions out of the previous turn's
/// intents, then spawn. Fully deterministic under the spec seed.
pub fn generate_corpus(spec: &SynthSpec) -> Result<Vec<Dialogue>> {
    spec.validate()?;
    let mut rng = seeding::substream(spec.seed, "synth");
    let k = spec.vocabulary.len();
    let mut dialogues = Vec::with_capacity(spec.dialogues);
    for d in 0..spec.dialogues {
        let turn_count = rng.gen_range(spec.turns_range.0..=spec.turns_range.1);
        let mut active: BTreeSet<String> = BTreeSet::new();
        active.insert(spec.vocabulary[rng.gen_range(0..k)].clone());
        let mut turns = Vec::with_capacity(turn_count);
        for _ in 0..turn_count {
            turns.push(Turn {
                speaker: Speaker::User,
                utterance: template_utterance(&active),
                active_intents: active.iter().cloned().collect(),
            });
            let mut next = BTreeSet::new();
            for intent in &active {
                let p = spec.persistence.get(intent).copied().unwrap_or(0.0);
                if rng.gen::<f64>() < p {
                    next.insert(intent.clone());
                }
            }
            for intent in &active {
                if let Some(tos) = spec.transition.get(intent) {
                    for (to, &p) in tos {
                        if rng.gen::<f64>() < p {
                            next.insert(to.clone());
                        }
                    }
                }
            }
            if rng.gen::<f64>() < spec.spawn {
                next.insert(spec.vocabulary[rng.gen_range(0..k)].clone());
            }
            active = next;
        }
        dialogues.push(Dialogue {
            dialogue_id: format!("synth-{d:05}"),
            turns,
        });
    }
    Ok(dialogues)
}
