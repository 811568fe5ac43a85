//! Exact inference by variable elimination with a min-fill ordering.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::parameters::DiscreteBayesNet;
use crate::temporal::NEXT_SUFFIX;

/// Dense table over the joint assignments of its scope. Assignments are
/// enumerated with the last scope variable varying fastest.
#[derive(Debug, Clone)]
pub struct Factor {
    pub scope: Vec<usize>,
    pub cards: Vec<usize>,
    pub values: Vec<f64>,
}

impl Factor {
    fn size(cards: &[usize]) -> usize {
        cards.iter().product()
    }

    /// Unit factor, identity under product.
    fn unit() -> Self {
        Factor {
            scope: Vec::new(),
            cards: Vec::new(),
            values: vec![1.0],
        }
    }

    fn strides(cards: &[usize]) -> Vec<usize> {
        let mut strides = vec![1; cards.len()];
        for i in (0..cards.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * cards[i + 1];
        }
        strides
    }

    pub fn product(&self, other: &Factor) -> Factor {
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        for (v, c) in other.scope.iter().zip(&other.cards) {
            if !scope.contains(v) {
                scope.push(*v);
                cards.push(*c);
            }
        }
        let strides = Factor::strides(&cards);
        let mut values = vec![0.0; Factor::size(&cards)];
        let pos_a: Vec<usize> = self
            .scope
            .iter()
            .map(|v| scope.iter().position(|x| x == v).unwrap())
            .collect();
        let pos_b: Vec<usize> = other
            .scope
            .iter()
            .map(|v| scope.iter().position(|x| x == v).unwrap())
            .collect();
        let strides_a = Factor::strides(&self.cards);
        let strides_b = Factor::strides(&other.cards);
        let mut assignment = vec![0usize; scope.len()];
        for (idx, slot) in values.iter_mut().enumerate() {
            let mut rem = idx;
            for (i, s) in strides.iter().enumerate() {
                assignment[i] = rem / s;
                rem %= s;
            }
            let ia: usize = pos_a
                .iter()
                .zip(&strides_a)
                .map(|(&p, &s)| assignment[p] * s)
                .sum();
            let ib: usize = pos_b
                .iter()
                .zip(&strides_b)
                .map(|(&p, &s)| assignment[p] * s)
                .sum();
            *slot = self.values[ia] * other.values[ib];
        }
        Factor {
            scope,
            cards,
            values,
        }
    }

    /// Sums the variable out of the scope.
    pub fn marginalize(&self, var: usize) -> Factor {
        let axis = self.scope.iter().position(|&v| v == var).expect("in scope");
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        let card = cards.remove(axis);
        scope.remove(axis);
        let strides_old = Factor::strides(&self.cards);
        let strides_new = Factor::strides(&cards);
        let mut values = vec![0.0; Factor::size(&cards)];
        let keep: Vec<usize> = (0..self.scope.len()).filter(|&i| i != axis).collect();
        let mut assignment = vec![0usize; cards.len()];
        for (idx, slot) in values.iter_mut().enumerate() {
            let mut rem = idx;
            for (i, s) in strides_new.iter().enumerate() {
                assignment[i] = rem / s;
                rem %= s;
            }
            let base: usize = keep
                .iter()
                .enumerate()
                .map(|(new_i, &old_i)| assignment[new_i] * strides_old[old_i])
                .sum();
            *slot = (0..card).map(|s| self.values[base + s * strides_old[axis]]).sum();
        }
        Factor {
            scope,
            cards,
            values,
        }
    }

    /// Restricts the factor to one observed state of a variable.
    pub fn reduce(&self, var: usize, state: usize) -> Factor {
        let axis = match self.scope.iter().position(|&v| v == var) {
            Some(a) => a,
            None => return self.clone(),
        };
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        cards.remove(axis);
        scope.remove(axis);
        let strides_old = Factor::strides(&self.cards);
        let strides_new = Factor::strides(&cards);
        let keep: Vec<usize> = (0..self.scope.len()).filter(|&i| i != axis).collect();
        let mut values = vec![0.0; Factor::size(&cards)];
        let mut assignment = vec![0usize; cards.len()];
        for (idx, slot) in values.iter_mut().enumerate() {
            let mut rem = idx;
            for (i, s) in strides_new.iter().enumerate() {
                assignment[i] = rem / s;
                rem %= s;
            }
            let base: usize = keep
                .iter()
                .enumerate()
                .map(|(new_i, &old_i)| assignment[new_i] * strides_old[old_i])
                .sum();
            *slot = self.values[base + state * strides_old[axis]];
        }
        Factor {
            scope,
            cards,
            values,
        }
    }
}

/// Observed variable states.
#[derive(Debug, Clone, Default)]
pub struct Evidence {
    pub assignments: BTreeMap<String, usize>,
}

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, variable: &str, state: usize) -> Self {
        self.assignments.insert(variable.to_string(), state);
        self
    }
}

/// P(intent__t1 = 1 | evidence) per vocabulary intent.
#[derive(Debug, Clone, PartialEq)]
pub struct NextIntentPosterior {
    pub probabilities: BTreeMap<String, f64>,
}

fn cpt_factors(bn: &DiscreteBayesNet) -> Result<Vec<Factor>> {
    let index_of = |name: &str| {
        bn.variable_names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Schema(format!("unknown variable {name:?}")))
    };
    bn.tables
        .iter()
        .map(|t| {
            let node = index_of(&t.node)?;
            let mut scope: Vec<usize> = t
                .parents
                .iter()
                .map(|p| index_of(p))
                .collect::<Result<_>>()?;
            scope.push(node);
            let mut cards: Vec<usize> = t.cardinalities[1..].to_vec();
            cards.push(t.node_cardinality());
            // CPT layout is (parent config, node state) with the last parent
            // fastest, which is exactly scope order with node last.
            Ok(Factor {
                scope,
                cards,
                values: t.table.clone(),
            })
        })
        .collect()
}

/// Min-fill elimination order over the factor interaction graph, ties broken
/// lexicographically by variable name.
fn min_fill_order(
    factors: &[Factor],
    to_eliminate: &BTreeSet<usize>,
    names: &[String],
) -> Vec<usize> {
    let mut neighbors: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut vars: BTreeSet<usize> = BTreeSet::new();
    for f in factors {
        for &v in &f.scope {
            vars.insert(v);
        }
        for &a in &f.scope {
            for &b in &f.scope {
                if a != b {
                    neighbors.entry(a).or_default().insert(b);
                }
            }
        }
    }
    let mut remaining: BTreeSet<usize> = to_eliminate.intersection(&vars).copied().collect();
    let mut order = Vec::new();
    while !remaining.is_empty() {
        let mut best: Option<(usize, usize)> = None; // (fill count, var)
        for &v in &remaining {
            let nbrs: Vec<usize> = neighbors
                .get(&v)
                .map(|s| s.iter().copied().filter(|n| *n != v).collect())
                .unwrap_or_default();
            let mut fill = 0;
            for (i, &a) in nbrs.iter().enumerate() {
                for &b in &nbrs[i + 1..] {
                    if !neighbors.get(&a).map(|s| s.contains(&b)).unwrap_or(false) {
                        fill += 1;
                    }
                }
            }
            let better = match best {
                None => true,
                Some((best_fill, best_var)) => {
                    fill < best_fill
                        || (fill == best_fill && names[v] < names[best_var])
                }
            };
            if better {
                best = Some((fill, v));
            }
        }
        let (_, v) = best.unwrap();
        order.push(v);
        remaining.remove(&v);
        // connect v's neighbors, then drop v
        let nbrs: Vec<usize> = neighbors.get(&v).cloned().unwrap_or_default().into_iter().collect();
        for &a in &nbrs {
            for &b in &nbrs {
                if a != b {
                    neighbors.entry(a).or_default().insert(b);
                }
            }
        }
        for (_, s) in neighbors.iter_mut() {
            s.remove(&v);
        }
        neighbors.remove(&v);
    }
    order
}

fn eliminate_with_order(
    bn: &DiscreteBayesNet,
    query_idx: usize,
    evidence: &Evidence,
    order: &[usize],
) -> Result<Vec<f64>> {
    let mut factors = cpt_factors(bn)?;
    for (name, &state) in &evidence.assignments {
        let idx = bn
            .variable_names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownEvidenceVariable(name.clone()))?;
        if state >= 2 {
            return Err(Error::EvidenceStateOutOfRange {
                variable: name.clone(),
                state,
            });
        }
        factors = factors.iter().map(|f| f.reduce(idx, state)).collect();
    }
    for &v in order {
        let (mut touching, rest): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.scope.contains(&v));
        factors = rest;
        if touching.is_empty() {
            continue;
        }
        let mut product = touching.remove(0);
        for f in touching {
            product = product.product(&f);
        }
        factors.push(product.marginalize(v));
    }
    let mut result = Factor::unit();
    for f in factors {
        result = result.product(&f);
    }
    // scope is now a subset of {query}
    let dist = if result.scope.is_empty() {
        vec![result.values[0]; 2]
    } else {
        debug_assert_eq!(result.scope, vec![query_idx]);
        result.values
    };
    let total: f64 = dist.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InconsistentEvidence);
    }
    Ok(dist.iter().map(|v| v / total).collect())
}

/// Exact P(query | evidence), normalized.
pub fn eliminate(bn: &DiscreteBayesNet, query: &str, evidence: &Evidence) -> Result<Vec<f64>> {
    let query_idx = bn
        .variable_names()
        .iter()
        .position(|n| n == query)
        .ok_or_else(|| Error::UnknownQueryVariable(query.to_string()))?;
    if evidence.assignments.contains_key(query) {
        return Err(Error::QueryInEvidence(query.to_string()));
    }
    for name in evidence.assignments.keys() {
        if !bn.variable_names().iter().any(|n| n == name) {
            return Err(Error::UnknownEvidenceVariable(name.clone()));
        }
    }
    let evidence_idx: BTreeSet<usize> = evidence
        .assignments
        .keys()
        .map(|n| bn.variable_names().iter().position(|x| x == n).unwrap())
        .collect();
    let to_eliminate: BTreeSet<usize> = (0..bn.variable_names().len())
        .filter(|i| *i != query_idx && !evidence_idx.contains(i))
        .collect();
    // order computed on evidence-reduced scopes would also work; computing it
    // on the CPT scopes keeps the order independent of the evidence values
    let factors = cpt_factors(bn)?;
    let reduced: Vec<Factor> = factors
        .iter()
        .map(|f| {
            let mut f = f.clone();
            for &e in &evidence_idx {
                f = f.reduce(e, 0); // state irrelevant for the graph shape
            }
            f
        })
        .collect();
    let order = min_fill_order(&reduced, &to_eliminate, bn.variable_names());
    eliminate_with_order(bn, query_idx, evidence, &order)
}

/// Same posterior under an explicit elimination order; used to verify
/// order independence.
pub fn eliminate_ordered(
    bn: &DiscreteBayesNet,
    query: &str,
    evidence: &Evidence,
    order: &[String],
) -> Result<Vec<f64>> {
    let query_idx = bn
        .variable_names()
        .iter()
        .position(|n| n == query)
        .ok_or_else(|| Error::UnknownQueryVariable(query.to_string()))?;
    let order_idx: Vec<usize> = order
        .iter()
        .map(|n| {
            bn.variable_names()
                .iter()
                .position(|x| x == n)
                .ok_or_else(|| Error::Schema(format!("unknown variable {n:?}")))
        })
        .collect::<Result<_>>()?;
    eliminate_with_order(bn, query_idx, evidence, &order_idx)
}

/// One elimination per vocabulary intent: probabilities[j] = P(j__t1 = 1 | e).
/// Evidence may touch only current-slice and progress variables.
pub fn posterior_next_intents(
    bn: &DiscreteBayesNet,
    evidence: &Evidence,
) -> Result<NextIntentPosterior> {
    for name in evidence.assignments.keys() {
        if name.ends_with(NEXT_SUFFIX) {
            return Err(Error::EvidenceScope(name.clone()));
        }
    }
    let mut probabilities = BTreeMap::new();
    for intent in bn.intents() {
        let query = format!("{intent}{NEXT_SUFFIX}");
        let dist = eliminate(bn, &query, evidence)?;
        probabilities.insert(intent, dist[1]);
    }
    Ok(NextIntentPosterior { probabilities })
}
