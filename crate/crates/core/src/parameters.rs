//! Conditional probability tables with a BDeu prior, the assembled discrete
//! network, and the model-file JSON schema.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::IntentVocabulary;
use crate::error::{Error, Result};
use crate::structure::{Edge, WeightedDag};
use crate::temporal::LaggedDataset;

/// CPT for one node. The flat table is indexed by
/// `parent_config * r + node_state`, parent configurations enumerated in the
/// listed parent order with the last parent varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable {
    pub node: String,
    pub parents: Vec<String>,
    /// Node cardinality first, then parent cardinalities.
    pub cardinalities: Vec<usize>,
    pub table: Vec<f64>,
}

impl ConditionalTable {
    pub fn node_cardinality(&self) -> usize {
        self.cardinalities[0]
    }

    pub fn parent_config_count(&self) -> usize {
        self.cardinalities[1..].iter().product()
    }

    pub fn probability(&self, parent_config: usize, state: usize) -> f64 {
        self.table[parent_config * self.node_cardinality() + state]
    }

    /// Index of the parent configuration given per-parent states, last parent
    /// varying fastest.
    pub fn parent_config_index(&self, parent_states: &[usize]) -> usize {
        let mut idx = 0;
        for (s, card) in parent_states.iter().zip(&self.cardinalities[1..]) {
            idx = idx * card + s;
        }
        idx
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteBayesNet {
    pub dag: WeightedDag,
    pub tables: Vec<ConditionalTable>,
    pub ess: f64,
}

impl DiscreteBayesNet {
    pub fn variable_names(&self) -> &[String] {
        &self.dag.variable_names
    }

    pub fn table_for(&self, node: &str) -> Option<&ConditionalTable> {
        self.tables.iter().find(|t| t.node == node)
    }

    /// Canonical intents, recovered from the `__t1` variable names.
    pub fn intents(&self) -> Vec<String> {
        self.variable_names()
            .iter()
            .filter_map(|n| n.strip_suffix("__t1"))
            .map(|s| s.to_string())
            .collect()
    }
}

/// Fits one CPT per variable with BDeu smoothing:
/// cell = (count + ess/(q·r)) / (config_count + ess/q).
pub fn fit_cpds(dag: &WeightedDag, data: &LaggedDataset, ess: f64) -> Result<DiscreteBayesNet> {
    if ess <= 0.0 {
        return Err(Error::Config(format!("ess must be > 0, got {ess}")));
    }
    if dag.variable_names != data.variable_names() {
        return Err(Error::Schema(
            "dag and dataset variable lists differ".into(),
        ));
    }
    let var_index = |name: &str| {
        dag.variable_names
            .iter()
            .position(|n| n == name)
            .expect("parent comes from the same variable list")
    };
    let mut tables = Vec::with_capacity(dag.variable_names.len());
    for (node_idx, node) in dag.variable_names.iter().enumerate() {
        let parents = dag.parents_of(node);
        let parent_idx: Vec<usize> = parents.iter().map(|p| var_index(p)).collect();
        let r = 2usize;
        let q = 1usize << parents.len();
        let mut counts = vec![0f64; q * r];
        for i in 0..data.n_rows() {
            let row = data.row(i);
            let mut config = 0usize;
            for &p in &parent_idx {
                config = config * 2 + row[p] as usize;
            }
            counts[config * r + row[node_idx] as usize] += 1.0;
        }
        let prior_cell = ess / (q as f64 * r as f64);
        let mut table = vec![0f64; q * r];
        for c in 0..q {
            let row_total: f64 = (0..r).map(|s| counts[c * r + s]).sum();
            let denom = row_total + ess / q as f64;
            for s in 0..r {
                table[c * r + s] = (counts[c * r + s] + prior_cell) / denom;
            }
        }
        let mut cardinalities = vec![r];
        cardinalities.extend(std::iter::repeat(2).take(parents.len()));
        tables.push(ConditionalTable {
            node: node.clone(),
            parents,
            cardinalities,
            table,
        });
    }
    Ok(DiscreteBayesNet {
        dag: dag.clone(),
        tables,
        ess,
    })
}

/// Σ rows Σ nodes log P(value | parent values). Finite because BDeu cells are
/// strictly positive.
pub fn joint_log_likelihood(bn: &DiscreteBayesNet, data: &LaggedDataset) -> Result<f64> {
    if bn.variable_names() != data.variable_names() {
        return Err(Error::Schema(
            "net and dataset variable lists differ".into(),
        ));
    }
    let var_index = |name: &str| {
        bn.variable_names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Schema(format!("unknown parent {name:?}")))
    };
    let mut total = 0.0;
    for i in 0..data.n_rows() {
        let row = data.row(i);
        for (node_idx, table) in bn.tables.iter().enumerate() {
            let states: Vec<usize> = table
                .parents
                .iter()
                .map(|p| var_index(p).map(|idx| row[idx] as usize))
                .collect::<Result<_>>()?;
            let config = table.parent_config_index(&states);
            total += table.probability(config, row[node_idx] as usize).ln();
        }
    }
    Ok(total)
}

/// On-disk model document. Field order is fixed so identical runs produce
/// byte-identical files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub vocabulary: Vec<String>,
    pub variables: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub edges: Vec<(String, String, f64)>,
    pub prune_threshold: f64,
    pub ess: f64,
    pub cpds: Vec<ConditionalTable>,
    pub format_version: u32,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl ModelFile {
    pub fn from_net(bn: &DiscreteBayesNet, vocab: &IntentVocabulary, config: serde_json::Value) -> Self {
        let w = &bn.dag.weights;
        let weights = (0..w.nrows())
            .map(|i| (0..w.ncols()).map(|j| w[[i, j]]).collect())
            .collect();
        Self {
            vocabulary: vocab.names().to_vec(),
            variables: bn.dag.variable_names.clone(),
            weights,
            edges: bn
                .dag
                .edges
                .iter()
                .map(|e| (e.source.clone(), e.target.clone(), e.weight))
                .collect(),
            prune_threshold: bn.dag.prune_threshold,
            ess: bn.ess,
            cpds: bn.tables.clone(),
            format_version: 1,
            config,
        }
    }

    pub fn to_net(&self) -> Result<(DiscreteBayesNet, IntentVocabulary)> {
        let d = self.variables.len();
        if self.weights.len() != d || self.weights.iter().any(|r| r.len() != d) {
            return Err(Error::Schema("weights shape mismatch".into()));
        }
        let mut w = Array2::<f64>::zeros((d, d));
        for (i, row) in self.weights.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                w[[i, j]] = v;
            }
        }
        let dag = WeightedDag {
            variable_names: self.variables.clone(),
            weights: w,
            edges: self
                .edges
                .iter()
                .map(|(s, t, v)| Edge {
                    source: s.clone(),
                    target: t.clone(),
                    weight: *v,
                })
                .collect(),
            prune_threshold: self.prune_threshold,
        };
        let bn = DiscreteBayesNet {
            dag,
            tables: self.cpds.clone(),
            ess: self.ess,
        };
        let vocab = IntentVocabulary::from_names(self.vocabulary.iter().cloned())?;
        Ok((bn, vocab))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
