//! Command-line entry point binding the library modules into reproducible
//! pipelines. Exit codes: 0 success, 1 domain error, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use tbn::baselines::BigramTable;
use tbn::corpus::{
    build_turn_matrix, build_vocabulary, read_jsonl, split_dialogues, write_jsonl, Dialogue,
    IntentVocabulary,
};
use tbn::error::Result;
use tbn::evaluation::{
    edge_stability, info_gain, random_dag_comparison, rank_eval, replay, BigramPredictor,
    BnGuidedPredictor, BnPredictor, MarginalPredictor, NullPredictor, RandomPredictor,
    RankEvalReport,
};
use tbn::guidance::{gate, guide, TrigramEmbedder};
use tbn::inference::{posterior_next_intents, Evidence};
use tbn::parameters::{fit_cpds, DiscreteBayesNet, ModelFile};
use tbn::structure::{build_tabu_mask, learn_structure, NotearsConfig};
use tbn::synth::{generate_corpus, SynthSpec};
use tbn::temporal::{build_lagged, LaggedDataset, ProgressBucket, CURRENT_SUFFIX, PROGRESS_NAMES};

#[derive(Parser)]
#[command(name = "tbn", version, about = "Temporal Bayesian Network over dialogue intents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Serialize)]
struct CommonConfig {
    /// Master seed; every stage derives its own named substream.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// L1 penalty for structure learning.
    #[arg(long, default_value_t = 0.1)]
    lambda1: f64,
    /// Edge-weight pruning threshold.
    #[arg(long, default_value_t = 0.5)]
    prune_threshold: f64,
    /// Equivalent sample size of the BDeu prior.
    #[arg(long, default_value_t = 1.0)]
    ess: f64,
    /// Acyclicity tolerance.
    #[arg(long, default_value_t = 1e-8)]
    h_tolerance: f64,
}

impl CommonConfig {
    fn notears(&self) -> NotearsConfig {
        NotearsConfig {
            lambda1: self.lambda1,
            h_tolerance: self.h_tolerance,
            prune_threshold: self.prune_threshold,
            seed: self.seed,
            ..NotearsConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Read a corpus, report its vocabulary and matrix shape, optionally dump the lagged CSV.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        /// Write the lagged design matrix as CSV.
        #[arg(long)]
        lagged_out: Option<PathBuf>,
    },
    /// Learn structure and parameters, write the model JSON.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// When set, split first and train on the train part only.
        #[arg(long)]
        train_fraction: Option<f64>,
        #[command(flatten)]
        config: CommonConfig,
    },
    /// Print the next-intent posterior and the gated sublist for given evidence.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Intent evidence, repeatable: each named intent is set active.
        #[arg(long = "evidence")]
        evidence: Vec<String>,
        /// Progress bucket evidence: early, mid, or late.
        #[arg(long)]
        progress: Option<ProgressBucket>,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
    },
    /// Run the grounding-to-insight pipeline for one utterance.
    Insight {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        utterance: String,
        /// 0-based USER-turn index within the dialogue.
        #[arg(long, default_value_t = 0)]
        turn: usize,
        #[arg(long, default_value_t = 1)]
        turns_total: usize,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
    },
    /// Evaluate the model and all three baselines on held-out pairs.
    EvalRank {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Dialogue-level train fraction used to fit baselines / hold out pairs.
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        #[arg(long)]
        out: PathBuf,
        /// Random-DAG comparison trials (0 disables).
        #[arg(long, default_value_t = 0)]
        random_dag_trials: usize,
        #[command(flatten)]
        config: CommonConfig,
    },
    /// Ground-truth replay of the gated predictor against a corpus.
    Replay {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Edge stability under k-fold cross-validation.
    Stability {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: CommonConfig,
    },
    /// Generate a synthetic corpus from a transition spec.
    Synth {
        /// JSON spec file; omitted means the built-in planted spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        dialogues: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn effective_config<T: Serialize>(config: &T) -> serde_json::Value {
    serde_json::to_value(config).expect("config serializes")
}

fn load_model(path: &Path) -> Result<(DiscreteBayesNet, IntentVocabulary)> {
    ModelFile::load(path)?.to_net()
}

fn build_evidence(
    bn: &DiscreteBayesNet,
    vocab: &IntentVocabulary,
    intents: &[String],
    progress: Option<ProgressBucket>,
) -> Result<Evidence> {
    let mut evidence = Evidence::new();
    for raw in intents {
        let name = tbn::corpus::normalize_intent(raw)?
            .ok_or_else(|| tbn::Error::InvalidLabel(raw.clone()))?;
        if vocab.index_of(&name).is_none() {
            return Err(tbn::Error::UnknownIntent {
                intent: name,
                dialogue_id: String::new(),
            });
        }
        evidence = evidence.set(&format!("{name}{CURRENT_SUFFIX}"), 1);
    }
    if let Some(bucket) = progress {
        for (i, name) in PROGRESS_NAMES.iter().enumerate() {
            if bn.variable_names().iter().any(|n| n == name) {
                evidence = evidence.set(name, (i == bucket.index()) as usize);
            }
        }
    }
    Ok(evidence)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

struct Prepared {
    vocab: IntentVocabulary,
    lagged: LaggedDataset,
}

fn prepare(dialogues: &[Dialogue], vocab: &IntentVocabulary) -> Result<LaggedDataset> {
    let matrix = build_turn_matrix(dialogues, vocab)?;
    build_lagged(&matrix, vocab)
}

fn train_model(
    dialogues: &[Dialogue],
    config: &CommonConfig,
) -> Result<(DiscreteBayesNet, Prepared)> {
    let vocab = build_vocabulary(dialogues)?;
    let lagged = prepare(dialogues, &vocab)?;
    let mask = build_tabu_mask(lagged.variable_names())?;
    let dag = learn_structure(&lagged, &mask, &config.notears())?;
    let bn = fit_cpds(&dag, &lagged, config.ess)?;
    Ok((bn, Prepared { vocab, lagged }))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { corpus, lagged_out } => {
            let dialogues = read_jsonl(&corpus)?;
            let vocab = build_vocabulary(&dialogues)?;
            let matrix = build_turn_matrix(&dialogues, &vocab)?;
            let lagged = build_lagged(&matrix, &vocab)?;
            let mut gains = serde_json::Map::new();
            for name in vocab.names() {
                if let Ok(bits) = info_gain(&matrix, &vocab, name) {
                    gains.insert(name.clone(), serde_json::json!(bits));
                }
            }
            let summary = serde_json::json!({
                "dialogues": dialogues.len(),
                "user_turns": matrix.n_rows(),
                "vocabulary": vocab.names(),
                "k": vocab.len(),
                "lagged_pairs": lagged.n_rows(),
                "info_gain_bits": gains,
                "format_version": 1,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if let Some(path) = lagged_out {
                lagged.write_csv(&path)?;
            }
        }
        Command::Train {
            corpus,
            out,
            train_fraction,
            config,
        } => {
            let mut dialogues = read_jsonl(&corpus)?;
            if let Some(fraction) = train_fraction {
                let (train, _) = split_dialogues(&dialogues, fraction, config.seed)?;
                dialogues = train;
            }
            let (bn, prepared) = train_model(&dialogues, &config)?;
            let mut echoed = effective_config(&config);
            echoed["train_fraction"] = serde_json::json!(train_fraction);
            let file = ModelFile::from_net(&bn, &prepared.vocab, echoed);
            file.save(&out)?;
            eprintln!(
                "trained on {} lagged pairs; {} edges, {} backward",
                prepared.lagged.n_rows(),
                bn.dag.edges.len(),
                bn.dag.backward_edge_count()
            );
        }
        Command::Predict {
            model,
            evidence,
            progress,
            top_k,
            tau,
        } => {
            let (bn, vocab) = load_model(&model)?;
            let e = build_evidence(&bn, &vocab, &evidence, progress)?;
            let posterior = posterior_next_intents(&bn, &e)?;
            let mut sorted: Vec<(String, f64)> =
                posterior.probabilities.clone().into_iter().collect();
            sorted.sort_by(|a, b| {
                b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0))
            });
            println!("posterior:");
            for (name, p) in &sorted {
                println!("  {name} p={p:.6}");
            }
            let mut gated = gate(&posterior, tau);
            gated.truncate(top_k);
            println!("gated (tau={tau}, top-k={top_k}):");
            for (name, p) in &gated {
                println!("  {name} p={p:.6}");
            }
        }
        Command::Insight {
            model,
            utterance,
            turn,
            turns_total,
            top_k,
            tau,
        } => {
            let (bn, vocab) = load_model(&model)?;
            let block = guide(
                &utterance,
                turn,
                turns_total,
                &bn,
                &vocab,
                &TrigramEmbedder::default(),
                top_k,
                tau,
            )?;
            if !block.text.is_empty() {
                println!("{}", block.text);
            }
        }
        Command::EvalRank {
            corpus,
            model,
            train_fraction,
            out,
            random_dag_trials,
            config,
        } => {
            let dialogues = read_jsonl(&corpus)?;
            let (train, test) = split_dialogues(&dialogues, train_fraction, config.seed)?;
            let (bn, vocab) = load_model(&model)?;
            let train_matrix = build_turn_matrix(&train, &vocab)?;
            let eval_data = prepare(&test, &vocab)?;

            let bn_predictor = BnPredictor {
                bn: bn.clone(),
                vocab: vocab.clone(),
            };
            let marginal = MarginalPredictor {
                ranking: tbn::baselines::marginal_ranking(&train_matrix, &vocab)?,
            };
            let bigram = BigramPredictor {
                table: BigramTable::fit(&train_matrix, &vocab)?,
            };
            let random = RandomPredictor {
                vocab: vocab.clone(),
                seed: config.seed,
            };
            let mut methods: Vec<(&str, RankEvalReport)> = vec![
                ("temporal_bn", rank_eval(&bn_predictor, &eval_data, &vocab)?),
                ("marginal", rank_eval(&marginal, &eval_data, &vocab)?),
                ("bigram", rank_eval(&bigram, &eval_data, &vocab)?),
                ("random", rank_eval(&random, &eval_data, &vocab)?),
            ];
            let mut report = serde_json::json!({
                "methods": methods
                    .drain(..)
                    .map(|(name, r)| (name.to_string(), serde_json::to_value(r).unwrap()))
                    .collect::<serde_json::Map<String, serde_json::Value>>(),
                "config": effective_config(&config),
                "train_fraction": train_fraction,
                "format_version": 1,
            });
            if random_dag_trials > 0 {
                let train_data = prepare(&train, &vocab)?;
                let mask = build_tabu_mask(train_data.variable_names())?;
                let cmp = random_dag_comparison(
                    &train_data,
                    &eval_data,
                    &vocab,
                    &bn.dag,
                    &mask,
                    config.ess,
                    random_dag_trials,
                    config.seed,
                )?;
                report["random_dag_comparison"] = serde_json::to_value(cmp)?;
            }
            write_json(&out, &report)?;
        }
        Command::Replay {
            corpus,
            model,
            top_k,
            tau,
            out,
        } => {
            let dialogues = read_jsonl(&corpus)?;
            let (bn, vocab) = load_model(&model)?;
            let predictor = BnGuidedPredictor {
                predictor: BnPredictor { bn, vocab },
                top_k,
                tau,
            };
            let guided = replay(&dialogues, &predictor)?;
            let baseline = replay(&dialogues, &NullPredictor)?;
            let report = serde_json::json!({
                "guided": guided,
                "baseline_only": baseline.aggregate,
                "top_k": top_k,
                "tau": tau,
                "format_version": 1,
            });
            write_json(&out, &report)?;
        }
        Command::Stability {
            corpus,
            folds,
            out,
            config,
        } => {
            let dialogues = read_jsonl(&corpus)?;
            let report = edge_stability(&dialogues, folds, &config.notears(), config.seed)?;
            let doc = serde_json::json!({
                "stability": report,
                "config": effective_config(&config),
                "format_version": 1,
            });
            write_json(&out, &doc)?;
        }
        Command::Synth {
            spec,
            dialogues,
            seed,
            out,
        } => {
            let spec = match spec {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                None => SynthSpec::planted(dialogues, seed),
            };
            let corpus = generate_corpus(&spec)?;
            write_jsonl(&out, &corpus)?;
            eprintln!("wrote {} dialogues", corpus.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
