//! Dialogue ingestion: JSONL parsing, intent normalization, vocabulary and
//! turn-intent matrix construction, dialogue-level splitting.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Speaker {
    User,
    System,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub utterance: String,
    #[serde(default)]
    pub active_intents: Vec<String>,
}

/// One dialogue as read from the corpus JSONL. Unknown keys are ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dialogue {
    pub dialogue_id: String,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    /// Normalized intent set per USER turn, in turn order.
    pub fn user_turn_intents(&self) -> Result<Vec<BTreeSet<String>>> {
        let mut out = Vec::new();
        for turn in self.turns.iter().filter(|t| t.speaker == Speaker::User) {
            let mut set = BTreeSet::new();
            for raw in &turn.active_intents {
                if let Some(name) = normalize_intent(raw)? {
                    set.insert(name);
                }
            }
            out.push(set);
        }
        Ok(out)
    }
}

/// Ordered set of canonical Action-Object intent names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentVocabulary {
    names: Vec<String>,
}

impl IntentVocabulary {
    /// Builds a vocabulary from already-canonical names (sorted, deduplicated).
    pub fn from_names(names: impl IntoIterator<Item = String>) -> Result<Self> {
        let set: BTreeSet<String> = names.into_iter().collect();
        if set.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        Ok(Self {
            names: set.into_iter().collect(),
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.binary_search_by(|n| n.as_str().cmp(name)).ok()
    }
}

/// Binary matrix with one row per USER turn and one column per intent.
#[derive(Debug, Clone)]
pub struct TurnIntentMatrix {
    entries: Vec<u8>,
    n_cols: usize,
    row_tags: Vec<RowTag>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowTag {
    pub dialogue_id: String,
    /// USER-turn index within the dialogue, counted from 0.
    pub turn_index: usize,
}

impl TurnIntentMatrix {
    pub fn n_rows(&self) -> usize {
        self.row_tags.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, t: usize) -> &[u8] {
        &self.entries[t * self.n_cols..(t + 1) * self.n_cols]
    }

    pub fn row_tags(&self) -> &[RowTag] {
        &self.row_tags
    }

    /// Number of USER turns in the dialogue owning row `t`.
    pub fn dialogue_turn_count(&self, t: usize) -> usize {
        let id = &self.row_tags[t].dialogue_id;
        self.row_tags
            .iter()
            .filter(|tag| &tag.dialogue_id == id)
            .count()
    }
}

/// Lowercases and hyphenates a raw intent label. `NONE` (any case) maps to
/// `None`; empty input is an error.
pub fn normalize_intent(raw: &str) -> Result<Option<String>> {
    if raw.is_empty() {
        return Err(Error::InvalidLabel(raw.to_string()));
    }
    if raw.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let canonical: String = raw
        .to_lowercase()
        .chars()
        .map(|c| if c == '_' || c == ' ' { '-' } else { c })
        .collect();
    Ok(Some(canonical))
}

/// Sorted union of normalized intents over all USER turns.
pub fn build_vocabulary(dialogues: &[Dialogue]) -> Result<IntentVocabulary> {
    let mut names = BTreeSet::new();
    for d in dialogues {
        for set in d.user_turn_intents()? {
            names.extend(set);
        }
    }
    IntentVocabulary::from_names(names)
}

/// One row per USER turn; SYSTEM turns are skipped. Intents missing from the
/// vocabulary are hard errors so train/test schemas stay identical.
pub fn build_turn_matrix(
    dialogues: &[Dialogue],
    vocab: &IntentVocabulary,
) -> Result<TurnIntentMatrix> {
    let k = vocab.len();
    let mut entries = Vec::new();
    let mut row_tags = Vec::new();
    for d in dialogues {
        for (idx, set) in d.user_turn_intents()?.into_iter().enumerate() {
            let mut row = vec![0u8; k];
            for intent in &set {
                let j = vocab.index_of(intent).ok_or_else(|| Error::UnknownIntent {
                    intent: intent.clone(),
                    dialogue_id: d.dialogue_id.clone(),
                })?;
                row[j] = 1;
            }
            entries.extend(row);
            row_tags.push(RowTag {
                dialogue_id: d.dialogue_id.clone(),
                turn_index: idx,
            });
        }
    }
    Ok(TurnIntentMatrix {
        entries,
        n_cols: k,
        row_tags,
    })
}

/// Deterministic dialogue-level split. Uses the `split` seed substream so the
/// partition is independent of other seeded stages.
pub fn split_dialogues(
    dialogues: &[Dialogue],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<Dialogue>, Vec<Dialogue>)> {
    if dialogues.len() < 2 {
        return Err(Error::Split(format!(
            "need at least 2 dialogues, got {}",
            dialogues.len()
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Split(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..dialogues.len()).collect();
    let mut rng = seeding::substream(seed, "split");
    order.shuffle(&mut rng);
    let n_train = ((dialogues.len() as f64) * train_fraction).round() as usize;
    let n_train = n_train.clamp(1, dialogues.len() - 1);
    let train = order[..n_train]
        .iter()
        .map(|&i| dialogues[i].clone())
        .collect();
    let test = order[n_train..]
        .iter()
        .map(|&i| dialogues[i].clone())
        .collect();
    Ok((train, test))
}

/// Reads corpus JSONL, one dialogue object per line. Blank lines are skipped.
pub fn read_jsonl(path: &Path) -> Result<Vec<Dialogue>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut dialogues = Vec::new();
    let mut seen = BTreeSet::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d: Dialogue = serde_json::from_str(&line)?;
        if d.dialogue_id.is_empty() {
            return Err(Error::Schema("empty dialogue_id".into()));
        }
        if !seen.insert(d.dialogue_id.clone()) {
            return Err(Error::Schema(format!(
                "duplicate dialogue_id {:?}",
                d.dialogue_id
            )));
        }
        dialogues.push(d);
    }
    Ok(dialogues)
}

pub fn write_jsonl(path: &Path, dialogues: &[Dialogue]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for d in dialogues {
        serde_json::to_writer(&mut file, d)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn turn(speaker: Speaker, intents: &[&str]) -> Turn {
        Turn {
            speaker,
            utterance: String::new(),
            active_intents: intents.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn dialogue(id: &str, turns: Vec<Turn>) -> Dialogue {
        Dialogue {
            dialogue_id: id.into(),
            turns,
        }
    }

    #[test]
    fn normalize_maps_separators() {
        assert_eq!(
            normalize_intent("find_hotel").unwrap(),
            Some("find-hotel".into())
        );
        assert_eq!(
            normalize_intent("Book Train").unwrap(),
            Some("book-train".into())
        );
        assert_eq!(
            normalize_intent("book-train").unwrap(),
            Some("book-train".into())
        );
    }

    #[test]
    fn normalize_excludes_none_case_insensitive() {
        assert_eq!(normalize_intent("NONE").unwrap(), None);
        assert_eq!(normalize_intent("none").unwrap(), None);
    }

    #[test]
    fn normalize_rejects_empty() {
        assert!(matches!(normalize_intent(""), Err(Error::InvalidLabel(_))));
    }

    #[test]
    fn normalize_is_idempotent() {
        for raw in ["find_hotel", "Book Train", "find-taxi"] {
            let once = normalize_intent(raw).unwrap().unwrap();
            let twice = normalize_intent(&once).unwrap().unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn vocabulary_is_sorted_union() {
        let ds = vec![
            dialogue(
                "d1",
                vec![
                    turn(Speaker::User, &["find_hotel", "NONE"]),
                    turn(Speaker::System, &["book_taxi"]),
                ],
            ),
            dialogue("d2", vec![turn(Speaker::User, &["book_hotel"])]),
        ];
        let vocab = build_vocabulary(&ds).unwrap();
        assert_eq!(vocab.names(), &["book-hotel", "find-hotel"]);
    }

    #[test]
    fn vocabulary_single_intent() {
        let ds = vec![
            dialogue("d1", vec![turn(Speaker::User, &["find_taxi"])]),
            dialogue("d2", vec![turn(Speaker::User, &["find_taxi"])]),
        ];
        let vocab = build_vocabulary(&ds).unwrap();
        assert_eq!(vocab.names(), &["find-taxi"]);
        assert_eq!(vocab.len(), 1);
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let ds = vec![dialogue("d1", vec![turn(Speaker::User, &["NONE"])])];
        assert!(matches!(
            build_vocabulary(&ds),
            Err(Error::EmptyVocabulary)
        ));
    }

    #[test]
    fn matrix_rows_are_indicators() {
        let ds = vec![dialogue(
            "d1",
            vec![
                turn(Speaker::User, &["find-hotel"]),
                turn(Speaker::System, &[]),
                turn(Speaker::User, &[]),
                turn(Speaker::User, &["book-hotel"]),
            ],
        )];
        let vocab = IntentVocabulary::from_names(
            ["book-hotel".to_string(), "find-hotel".to_string()],
        )
        .unwrap();
        let m = build_turn_matrix(&ds, &vocab).unwrap();
        assert_eq!(m.n_rows(), 3);
        assert_eq!(m.row(0), &[0, 1]);
        assert_eq!(m.row(1), &[0, 0]);
        assert_eq!(m.row(2), &[1, 0]);
        assert_eq!(
            m.row_tags()[2],
            RowTag {
                dialogue_id: "d1".into(),
                turn_index: 2
            }
        );
    }

    #[test]
    fn matrix_with_no_user_turns_is_empty() {
        let ds = vec![dialogue("d1", vec![turn(Speaker::System, &["x"])])];
        let vocab = IntentVocabulary::from_names(["x".to_string()]).unwrap();
        let m = build_turn_matrix(&ds, &vocab).unwrap();
        assert_eq!(m.n_rows(), 0);
    }

    #[test]
    fn unknown_intent_is_a_hard_error() {
        let ds = vec![dialogue("d1", vec![turn(Speaker::User, &["find-taxi"])])];
        let vocab = IntentVocabulary::from_names(["find-hotel".to_string()]).unwrap();
        assert!(matches!(
            build_turn_matrix(&ds, &vocab),
            Err(Error::UnknownIntent { .. })
        ));
    }

    #[test]
    fn matrix_roundtrips_to_turn_annotations() {
        let ds = vec![dialogue(
            "d1",
            vec![
                turn(Speaker::User, &["find_hotel", "book_train"]),
                turn(Speaker::User, &["book_train"]),
            ],
        )];
        let vocab = build_vocabulary(&ds).unwrap();
        let m = build_turn_matrix(&ds, &vocab).unwrap();
        let sets = ds[0].user_turn_intents().unwrap();
        for (t, set) in sets.iter().enumerate() {
            for (j, name) in vocab.names().iter().enumerate() {
                assert_eq!(m.row(t)[j] == 1, set.contains(name));
            }
        }
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let ds: Vec<Dialogue> = (0..10)
            .map(|i| dialogue(&format!("d{i}"), vec![turn(Speaker::User, &["a"])]))
            .collect();
        let (train1, test1) = split_dialogues(&ds, 0.8, 42).unwrap();
        let (train2, test2) = split_dialogues(&ds, 0.8, 42).unwrap();
        assert_eq!(train1.len(), 8);
        assert_eq!(test1.len(), 2);
        let ids = |v: &[Dialogue]| -> BTreeSet<String> {
            v.iter().map(|d| d.dialogue_id.clone()).collect()
        };
        assert_eq!(ids(&train1), ids(&train2));
        assert_eq!(ids(&test1), ids(&test2));
        assert!(ids(&train1).is_disjoint(&ids(&test1)));
        let mut all = ids(&train1);
        all.extend(ids(&test1));
        assert_eq!(all.len(), 10);
    }

    #[test]
    fn split_rejects_tiny_input() {
        let ds = vec![dialogue("d1", vec![])];
        assert!(matches!(
            split_dialogues(&ds, 0.8, 42),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn jsonl_ignores_unknown_keys() {
        let line = r#"{"dialogue_id":"d1","extra":true,"turns":[{"speaker":"USER","utterance":"hi","active_intents":["find_hotel"],"junk":1}]}"#;
        let d: Dialogue = serde_json::from_str(line).unwrap();
        assert_eq!(d.dialogue_id, "d1");
        assert_eq!(d.turns[0].active_intents, vec!["find_hotel"]);
    }
}
