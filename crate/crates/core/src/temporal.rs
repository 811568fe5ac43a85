//! Lagged design matrix: consecutive within-dialogue USER-turn pairs plus the
//! bucketed progress feature, over 2K+3 named binary variables.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{IntentVocabulary, RowTag, TurnIntentMatrix};
use crate::error::{Error, Result};

pub const CURRENT_SUFFIX: &str = "__t";
pub const NEXT_SUFFIX: &str = "__t1";
pub const PROGRESS_NAMES: [&str; 3] = ["progress_early", "progress_mid", "progress_late"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProgressBucket {
    Early,
    Mid,
    Late,
}

impl ProgressBucket {
    /// Offset within the three progress indicator columns.
    pub fn index(self) -> usize {
        match self {
            ProgressBucket::Early => 0,
            ProgressBucket::Mid => 1,
            ProgressBucket::Late => 2,
        }
    }

    pub fn variable_name(self) -> &'static str {
        PROGRESS_NAMES[self.index()]
    }
}

impl std::str::FromStr for ProgressBucket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "early" => Ok(ProgressBucket::Early),
            "mid" => Ok(ProgressBucket::Mid),
            "late" => Ok(ProgressBucket::Late),
            other => Err(Error::Config(format!("unknown progress bucket {other:?}"))),
        }
    }
}

/// Buckets the normalized turn position into thirds. The last turn of a
/// dialogue normalizes to exactly 1.0.
pub fn progress_bucket(turn_index: usize, dialogue_turn_count: usize) -> Result<ProgressBucket> {
    if dialogue_turn_count == 0 || turn_index >= dialogue_turn_count {
        return Err(Error::TurnIndexOutOfRange {
            index: turn_index,
            count: dialogue_turn_count,
        });
    }
    let denom = (dialogue_turn_count - 1).max(1) as f64;
    let p = turn_index as f64 / denom;
    Ok(if p < 1.0 / 3.0 {
        ProgressBucket::Early
    } else if p < 2.0 / 3.0 {
        ProgressBucket::Mid
    } else {
        ProgressBucket::Late
    })
}

/// Rows `[x_t, x_{t+1}, one-hot progress]` over 2K+3 named variables.
#[derive(Debug, Clone)]
pub struct LaggedDataset {
    variable_names: Vec<String>,
    rows: Vec<u8>,
    row_tags: Vec<RowTag>,
}

impl LaggedDataset {
    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn n_vars(&self) -> usize {
        self.variable_names.len()
    }

    /// Intent count K; the layout is always 2K+3.
    pub fn k(&self) -> usize {
        (self.variable_names.len() - 3) / 2
    }

    pub fn n_rows(&self) -> usize {
        self.row_tags.len()
    }

    pub fn row(&self, i: usize) -> &[u8] {
        let d = self.n_vars();
        &self.rows[i * d..(i + 1) * d]
    }

    pub fn row_tags(&self) -> &[RowTag] {
        &self.row_tags
    }

    pub fn current_slice<'a>(&self, row: &'a [u8]) -> &'a [u8] {
        &row[..self.k()]
    }

    pub fn next_slice<'a>(&self, row: &'a [u8]) -> &'a [u8] {
        &row[self.k()..2 * self.k()]
    }

    pub fn progress_of_row(&self, row: &[u8]) -> ProgressBucket {
        let base = 2 * self.k();
        if row[base] == 1 {
            ProgressBucket::Early
        } else if row[base + 1] == 1 {
            ProgressBucket::Mid
        } else {
            ProgressBucket::Late
        }
    }

    /// Test-support constructor for hand-built datasets.
    pub fn from_parts(
        variable_names: Vec<String>,
        rows: Vec<u8>,
        row_tags: Vec<RowTag>,
    ) -> Result<Self> {
        let d = variable_names.len();
        if d < 5 || (d - 3) % 2 != 0 {
            return Err(Error::Schema(format!("bad variable count {d}")));
        }
        if rows.len() != d * row_tags.len() {
            return Err(Error::Schema("row buffer size mismatch".into()));
        }
        Ok(Self {
            variable_names,
            rows,
            row_tags,
        })
    }

    /// CSV with the variable-name header plus trailing `__dialogue_id`, `__t`
    /// metadata columns.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            out,
            "{},__dialogue_id,__t",
            self.variable_names.join(",")
        )?;
        for (i, tag) in self.row_tags.iter().enumerate() {
            let cells: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{},{},{}", cells.join(","), tag.dialogue_id, tag.turn_index)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Variable layout: K intent names suffixed `__t`, K suffixed `__t1`, then the
/// three progress indicators.
pub fn variable_names(vocab: &IntentVocabulary) -> Vec<String> {
    let mut names: Vec<String> = vocab
        .names()
        .iter()
        .map(|n| format!("{n}{CURRENT_SUFFIX}"))
        .collect();
    names.extend(vocab.names().iter().map(|n| format!("{n}{NEXT_SUFFIX}")));
    names.extend(PROGRESS_NAMES.iter().map(|s| s.to_string()));
    names
}

/// One row per consecutive within-dialogue USER-turn pair. Dialogues with
/// fewer than 2 USER turns contribute nothing.
pub fn build_lagged(matrix: &TurnIntentMatrix, vocab: &IntentVocabulary) -> Result<LaggedDataset> {
    let k = vocab.len();
    if matrix.n_cols() != k {
        return Err(Error::Schema(format!(
            "matrix has {} columns but vocabulary has {k}",
            matrix.n_cols()
        )));
    }
    // USER-turn count per dialogue, for progress normalization.
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for tag in matrix.row_tags() {
        *counts.entry(tag.dialogue_id.as_str()).or_insert(0) += 1;
    }

    let names = variable_names(vocab);
    let d = names.len();
    let mut rows = Vec::new();
    let mut row_tags = Vec::new();
    for t in 0..matrix.n_rows().saturating_sub(1) {
        let tag = &matrix.row_tags()[t];
        let next_tag = &matrix.row_tags()[t + 1];
        if tag.dialogue_id != next_tag.dialogue_id || next_tag.turn_index != tag.turn_index + 1 {
            continue;
        }
        let turn_count = counts[tag.dialogue_id.as_str()];
        let bucket = progress_bucket(tag.turn_index, turn_count)?;
        let mut row = vec![0u8; d];
        row[..k].copy_from_slice(matrix.row(t));
        row[k..2 * k].copy_from_slice(matrix.row(t + 1));
        row[2 * k + bucket.index()] = 1;
        rows.extend(row);
        row_tags.push(tag.clone());
    }
    LaggedDataset::from_parts(names, rows, row_tags)
}
