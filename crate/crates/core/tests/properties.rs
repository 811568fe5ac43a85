//! Randomized invariants over the core pipeline.

use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tbn::baselines::marginal_ranking;
use tbn::corpus::{build_turn_matrix, build_vocabulary, normalize_intent};
use tbn::evaluation::{rank_eval, RandomPredictor};
use tbn::inference::{eliminate, eliminate_ordered, Evidence};
use tbn::parameters::{ConditionalTable, DiscreteBayesNet};
use tbn::structure::{prune, WeightedDag};
use tbn::synth::{generate_corpus, SynthSpec};
use tbn::temporal::{build_lagged, progress_bucket};

fn random_net(seed: u64) -> DiscreteBayesNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(2..=5);
    let names: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut rng);
    let mut tables = Vec::with_capacity(d);
    for j in 0..d {
        let node = order[j];
        let parent_idx: Vec<usize> = order[..j]
            .iter()
            .copied()
            .filter(|_| rng.gen::<f64>() < 0.5)
            .take(2)
            .collect();
        let q = 1usize << parent_idx.len();
        let mut table = Vec::with_capacity(q * 2);
        for _ in 0..q {
            let p = rng.gen_range(0.05..0.95);
            table.push(1.0 - p);
            table.push(p);
        }
        let mut cardinalities = vec![2usize];
        cardinalities.extend(std::iter::repeat(2).take(parent_idx.len()));
        tables.push(ConditionalTable {
            node: names[node].clone(),
            parents: parent_idx.iter().map(|&p| names[p].clone()).collect(),
            cardinalities,
            table,
        });
    }
    let dd = names.len();
    DiscreteBayesNet {
        dag: WeightedDag {
            variable_names: names,
            weights: Array2::zeros((dd, dd)),
            edges: Vec::new(),
            prune_threshold: 0.5,
        },
        tables,
        ess: 1.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The posterior does not depend on the elimination order.
    #[test]
    fn elimination_order_independence(seed in 0u64..10_000, order_seed in 0u64..10_000) {
        let bn = random_net(seed);
        let names = bn.variable_names().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(order_seed);
        let query = names.choose(&mut rng).unwrap().clone();
        let mut evidence = Evidence::new();
        for name in &names {
            if *name != query && rng.gen::<f64>() < 0.3 {
                evidence = evidence.set(name, rng.gen_range(0..2usize));
            }
        }
        let reference = eliminate(&bn, &query, &evidence).unwrap();
        let mut others: Vec<String> = names
            .iter()
            .filter(|n| **n != query && !evidence.assignments.contains_key(*n))
            .cloned()
            .collect();
        others.shuffle(&mut rng);
        let shuffled = eliminate_ordered(&bn, &query, &evidence, &others).unwrap();
        for s in 0..2 {
            prop_assert!((reference[s] - shuffled[s]).abs() <= 1e-9);
        }
    }

    /// Raising the pruning threshold never adds an edge, and every surviving
    /// edge exceeds the threshold.
    #[test]
    fn prune_threshold_monotonicity(seed in 0u64..10_000, lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.gen_range(2..=6);
        let names: Vec<String> = (0..d).map(|i| format!("v{i}__t")).collect();
        let mut w = Array2::<f64>::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                if i != j && rng.gen::<f64>() < 0.5 {
                    w[[i, j]] = rng.gen_range(-1.5..1.5);
                }
            }
        }
        let loose = prune(&w, &names, lo);
        let tight = prune(&w, &names, hi);
        prop_assert!(tight.len() <= loose.len());
        for e in &tight {
            prop_assert!(e.weight.abs() > hi);
            prop_assert!(loose.iter().any(|l| l.source == e.source && l.target == e.target));
        }
    }

    /// Recall is monotone in k and bounds MRR from below on any report.
    #[test]
    fn rank_metrics_are_ordered(corpus_seed in 0u64..10_000, predictor_seed in 0u64..10_000) {
        let dialogues = generate_corpus(&SynthSpec::planted(15, corpus_seed)).unwrap();
        let vocab = build_vocabulary(&dialogues).unwrap();
        let matrix = build_turn_matrix(&dialogues, &vocab).unwrap();
        let data = build_lagged(&matrix, &vocab).unwrap();
        let predictor = RandomPredictor { vocab: vocab.clone(), seed: predictor_seed };
        if let Ok(report) = rank_eval(&predictor, &data, &vocab) {
            prop_assert!(report.recall_at[&1] <= report.recall_at[&3] + 1e-12);
            prop_assert!(report.recall_at[&3] <= report.recall_at[&5] + 1e-12);
            prop_assert!(report.recall_at[&5] <= 1.0 + 1e-12);
            prop_assert!(report.recall_at[&1] <= report.mrr + 1e-12);
            prop_assert!(report.mrr <= 1.0 + 1e-12);
        }
    }

    /// The marginal baseline is a fixed permutation of the vocabulary.
    #[test]
    fn marginal_ranking_is_a_permutation(corpus_seed in 0u64..10_000) {
        let dialogues = generate_corpus(&SynthSpec::planted(10, corpus_seed)).unwrap();
        let vocab = build_vocabulary(&dialogues).unwrap();
        let matrix = build_turn_matrix(&dialogues, &vocab).unwrap();
        if let Ok(ranking) = marginal_ranking(&matrix, &vocab) {
            prop_assert!(ranking.is_permutation_of(&vocab));
            for pair in ranking.entries.windows(2) {
                prop_assert!(pair[0].1 >= pair[1].1);
            }
        }
    }

    /// Normalization is idempotent and produces lowercase hyphenated labels.
    #[test]
    fn intent_normalization_is_idempotent(raw in "[A-Za-z][A-Za-z _-]{0,20}") {
        if let Ok(Some(name)) = normalize_intent(&raw) {
            prop_assert_eq!(normalize_intent(&name).unwrap(), Some(name.clone()));
            prop_assert!(!name.contains(' ') && !name.contains('_'));
            prop_assert_eq!(name.to_lowercase(), name);
        }
    }

    /// Progress buckets are valid and non-decreasing over a dialogue.
    #[test]
    fn progress_buckets_are_monotone(count in 1usize..40) {
        let mut last = 0usize;
        for t in 0..count {
            let bucket = progress_bucket(t, count).unwrap();
            prop_assert!(bucket.index() <= 2);
            prop_assert!(bucket.index() >= last);
            last = bucket.index();
        }
        prop_assert_eq!(progress_bucket(0, count).unwrap().index(), 0);
        if count > 1 {
            prop_assert_eq!(progress_bucket(count - 1, count).unwrap().index(), 2);
        }
    }
}
