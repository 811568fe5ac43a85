//! Runtime guidance pipeline: ground an utterance to intent nodes, infer the
//! next-intent posterior, gate by confidence, and format the causal-insight
//! block.

use crate::corpus::IntentVocabulary;
use crate::error::{Error, Result};
use crate::inference::{posterior_next_intents, Evidence, NextIntentPosterior};
use crate::parameters::DiscreteBayesNet;
use crate::seeding::fnv1a;
use crate::temporal::{progress_bucket, ProgressBucket, CURRENT_SUFFIX, PROGRESS_NAMES};

/// Deterministic text embedder: equal texts must embed to equal, non-zero
/// vectors.
pub trait Embedder {
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Hashed bag of character trigrams, signed hashing, L2-normalized.
/// Dependency-free lexical default; semantic embedders plug in behind the
/// same trait.
#[derive(Debug, Clone)]
pub struct TrigramEmbedder {
    dim: usize,
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        Self { dim: 512 }
    }
}

impl TrigramEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    fn accumulate(&self, text: &str, signed: bool) -> Vec<f64> {
        let chars: Vec<char> = text.to_lowercase().chars().collect();
        let mut v = vec![0.0; self.dim];
        let push = |gram: &[char], v: &mut Vec<f64>| {
            let bytes: Vec<u8> = gram.iter().flat_map(|c| (*c as u32).to_le_bytes()).collect();
            let h = fnv1a(&bytes);
            let idx = (h % self.dim as u64) as usize;
            let sign = if signed && (h >> 63) == 1 { -1.0 } else { 1.0 };
            v[idx] += sign;
        };
        if chars.len() < 3 {
            if !chars.is_empty() {
                push(&chars, &mut v);
            }
        } else {
            for gram in chars.windows(3) {
                push(gram, &mut v);
            }
        }
        v
    }
}

impl Embedder for TrigramEmbedder {
    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = self.accumulate(text, true);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 && !text.is_empty() {
            // signed counts fully cancelled; fall back to unsigned counts
            v = self.accumulate(text, false);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in v.iter_mut() {
                *x /= norm;
            }
        }
        v
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Top-k intents by cosine similarity to the utterance, descending.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub intents: Vec<(String, f64)>,
}

/// Intent names are compared with hyphens as spaces so "find restaurant"
/// matches find-restaurant exactly.
pub fn ground_utterance(
    utterance: &str,
    vocab: &IntentVocabulary,
    embedder: &dyn Embedder,
    k: usize,
) -> Result<ObservationSet> {
    if utterance.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    if k == 0 {
        return Err(Error::Config("top-k must be >= 1".into()));
    }
    let u = embedder.embed(utterance);
    let mut scored: Vec<(String, f64)> = vocab
        .names()
        .iter()
        .map(|name| {
            let text = name.replace('-', " ");
            (name.clone(), cosine(&u, &embedder.embed(&text)))
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.truncate(k.min(vocab.len()));
    Ok(ObservationSet { intents: scored })
}

/// Entries with probability strictly above tau, descending, ties lexicographic.
pub fn gate(posterior: &NextIntentPosterior, tau: f64) -> Vec<(String, f64)> {
    let mut surviving: Vec<(String, f64)> = posterior
        .probabilities
        .iter()
        .filter(|(_, &p)| p > tau)
        .map(|(name, &p)| (name.clone(), p))
        .collect();
    surviving.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
    surviving
}

#[derive(Debug, Clone, PartialEq)]
pub struct InsightBlock {
    pub text: String,
    pub surviving: Vec<(String, f64)>,
}

/// Bit-exact block template; empty text iff nothing survived the gate.
pub fn format_insight_block(
    observed: &ObservationSet,
    surviving: &[(String, f64)],
) -> InsightBlock {
    if surviving.is_empty() {
        return InsightBlock {
            text: String::new(),
            surviving: Vec::new(),
        };
    }
    let observed_names: Vec<&str> = observed.intents.iter().map(|(n, _)| n.as_str()).collect();
    let mut lines = vec![
        "[CAUSAL INSIGHT]".to_string(),
        format!("Observed intents: {}", observed_names.join(", ")),
        "Likely next user intents:".to_string(),
    ];
    for (intent, p) in surviving {
        lines.push(format!("- {intent} (p={p:.3})"));
    }
    lines.push(
        "Guidance: address the user's immediate request first; then proactively offer help with the likely next intents."
            .to_string(),
    );
    lines.push("[/CAUSAL INSIGHT]".to_string());
    InsightBlock {
        text: lines.join("\n"),
        surviving: surviving.to_vec(),
    }
}

/// Evidence for one grounded intent node plus the turn's progress indicators.
/// Progress indicators are only asserted when the net actually has them.
fn node_evidence(bn: &DiscreteBayesNet, intent: &str, bucket: ProgressBucket) -> Evidence {
    let mut evidence = Evidence::new().set(&format!("{intent}{CURRENT_SUFFIX}"), 1);
    for (i, name) in PROGRESS_NAMES.iter().enumerate() {
        if bn.variable_names().iter().any(|n| n == name) {
            evidence = evidence.set(name, (i == bucket.index()) as usize);
        }
    }
    evidence
}

/// Full pipeline: ground, infer once per observation node (max-aggregated per
/// target intent), gate, format.
#[allow(clippy::too_many_arguments)]
pub fn guide(
    utterance: &str,
    turn_index: usize,
    dialogue_turn_count: usize,
    bn: &DiscreteBayesNet,
    vocab: &IntentVocabulary,
    embedder: &dyn Embedder,
    k: usize,
    tau: f64,
) -> Result<InsightBlock> {
    let bucket = progress_bucket(turn_index, dialogue_turn_count)?;
    let observed = ground_utterance(utterance, vocab, embedder, k)?;
    // anti-correlated candidates are dropped even inside the top-k
    let grounded = ObservationSet {
        intents: observed
            .intents
            .into_iter()
            .filter(|(_, sim)| *sim > 0.0)
            .collect(),
    };
    let mut aggregated = NextIntentPosterior {
        probabilities: Default::default(),
    };
    for (intent, _) in &grounded.intents {
        let posterior = posterior_next_intents(bn, &node_evidence(bn, intent, bucket))?;
        for (target, p) in posterior.probabilities {
            let slot = aggregated.probabilities.entry(target).or_insert(0.0);
            if p > *slot {
                *slot = p;
            }
        }
    }
    let surviving = gate(&aggregated, tau);
    Ok(format_insight_block(&grounded, &surviving))
}
