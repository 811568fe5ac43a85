//! Compares the rayon data-parallel path against the sequential fallback on
//! the two embarrassingly parallel workloads: per-fold structure learning and
//! per-dialogue replay.

use criterion::{criterion_group, criterion_main, Criterion};
use rayon::prelude::*;

use tbn::corpus::{build_turn_matrix, build_vocabulary, Dialogue};
use tbn::evaluation::{replay, BnGuidedPredictor, BnPredictor};
use tbn::parameters::fit_cpds;
use tbn::structure::{build_tabu_mask, learn_structure, NotearsConfig, WeightedDag};
use tbn::synth::{generate_corpus, SynthSpec};
use tbn::temporal::build_lagged;

fn fold_slices(dialogues: &[Dialogue], folds: usize) -> Vec<Vec<Dialogue>> {
    (0..folds)
        .map(|f| {
            dialogues
                .iter()
                .enumerate()
                .filter(|(i, _)| i % folds != f)
                .map(|(_, d)| d.clone())
                .collect()
        })
        .collect()
}

fn learn_one(train: &[Dialogue]) -> WeightedDag {
    let vocab = build_vocabulary(train).unwrap();
    let matrix = build_turn_matrix(train, &vocab).unwrap();
    let lagged = build_lagged(&matrix, &vocab).unwrap();
    let mask = build_tabu_mask(lagged.variable_names()).unwrap();
    learn_structure(&lagged, &mask, &NotearsConfig::default()).unwrap()
}

fn bench_fold_learning(c: &mut Criterion) {
    let dialogues = generate_corpus(&SynthSpec::planted(200, 42)).unwrap();
    let slices = fold_slices(&dialogues, 5);
    let mut group = c.benchmark_group("fold_structure_learning");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| slices.iter().map(|s| learn_one(s)).collect::<Vec<_>>())
    });
    group.bench_function("rayon", |b| {
        b.iter(|| slices.par_iter().map(|s| learn_one(s)).collect::<Vec<_>>())
    });
    group.finish();
}

fn bench_replay(c: &mut Criterion) {
    let dialogues = generate_corpus(&SynthSpec::planted(300, 42)).unwrap();
    let vocab = build_vocabulary(&dialogues).unwrap();
    let matrix = build_turn_matrix(&dialogues, &vocab).unwrap();
    let lagged = build_lagged(&matrix, &vocab).unwrap();
    let mask = build_tabu_mask(lagged.variable_names()).unwrap();
    let dag = learn_structure(&lagged, &mask, &NotearsConfig::default()).unwrap();
    let bn = fit_cpds(&dag, &lagged, 1.0).unwrap();
    let predictor = BnGuidedPredictor {
        predictor: BnPredictor {
            bn,
            vocab: vocab.clone(),
        },
        top_k: 5,
        tau: 0.5,
    };
    let mut group = c.benchmark_group("replay");
    group.sample_size(10);
    // library replay() parallelizes per dialogue under the default feature
    group.bench_function("rayon", |b| {
        b.iter(|| replay(&dialogues, &predictor).unwrap())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            dialogues
                .chunks(1)
                .map(|chunk| replay(chunk, &predictor).unwrap())
                .collect::<Vec<_>>()
        })
    });
    group.finish();
}

criterion_group!(benches, bench_fold_learning, bench_replay);
criterion_main!(benches);
