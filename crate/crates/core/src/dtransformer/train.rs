//! Training loop: Adam on per-document cross-entropy with gradient
//! accumulation over batches, per-epoch validation, and early stopping on
//! validation accuracy (ties broken by lower validation loss).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{flatten, Document, SplitData};
use crate::discourse::Tagger;
use crate::neural::{AdamConfig, Tape};
use crate::parallel;
use crate::rng;
use crate::textproc::WordVocab;

const GRAD_CLIP: f64 = 1.0;

use super::model::{DtMode, DtModel};
use super::{prepare_document, DtConfig, DtError, PreparedDoc};

/// One training-log line (the JSONL schema of the training log file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub seconds: f64,
}

/// Behaviour switches that are not model hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    /// Record wall-clock seconds per epoch. Off in deterministic runs so
    /// repeated runs produce byte-identical logs.
    pub record_seconds: bool,
    /// Print progress notes (truncation counts, epoch lines) to stderr.
    pub verbose: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            record_seconds: true,
            verbose: false,
        }
    }
}

/// Trained model plus its per-epoch log.
pub struct TrainReport {
    pub model: DtModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

/// Train the full discourse-aware classifier.
pub fn train(
    config: &DtConfig,
    splits: &SplitData,
    tagger: &dyn Tagger,
    vocab: &WordVocab,
    options: &TrainOptions,
) -> Result<TrainReport, DtError> {
    train_mode(config, splits, tagger, vocab, DtMode::Full, options)
}

/// Train the hierarchical-only ablation: same sentence encoder and
/// protocol, no discourse path.
pub fn ablation_hierarchical_only(
    config: &DtConfig,
    splits: &SplitData,
    tagger: &dyn Tagger,
    vocab: &WordVocab,
    options: &TrainOptions,
) -> Result<TrainReport, DtError> {
    train_mode(
        config,
        splits,
        tagger,
        vocab,
        DtMode::HierarchicalOnly,
        options,
    )
}

/// Prepare a document list in parallel, propagating the first error.
pub fn prepare_all(
    docs: &[Document],
    config: &DtConfig,
    vocab: &WordVocab,
    tagger: &dyn Tagger,
) -> Result<Vec<PreparedDoc>, DtError> {
    let prepared = parallel::map_slice(docs, |doc| prepare_document(doc, config, vocab, tagger));
    prepared.into_iter().collect()
}

fn train_mode(
    config: &DtConfig,
    splits: &SplitData,
    tagger: &dyn Tagger,
    vocab: &WordVocab,
    mode: DtMode,
    options: &TrainOptions,
) -> Result<TrainReport, DtError> {
    let mut config = config.clone();
    config.token_vocab = vocab.len();
    config.code_vocab = tagger.vocab().len();
    config.validate()?;
    if splits.train.is_empty() || splits.valid.is_empty() {
        return Err(DtError::EmptySplit);
    }

    let train_docs = prepare_all(&flatten(&splits.train), &config, vocab, tagger)?;
    let valid_docs = prepare_all(&flatten(&splits.valid), &config, vocab, tagger)?;
    let truncated = train_docs.iter().filter(|d| d.truncated).count();
    if options.verbose && truncated > 0 {
        eprintln!("dtransformer: truncated {truncated} training document(s) to max_paragraph_len");
    }

    let mut model = DtModel::init(&config, mode)?;
    let adam = AdamConfig::adam(config.lr);
    let mut order: Vec<usize> = (0..train_docs.len()).collect();
    let mut shuffle_rng = rng::seeded(rng::derive_seed(config.seed, 0xDA7A));

    let mut log = Vec::new();
    let mut best: Option<(usize, f64, f64)> = None; // (epoch, val_acc, val_loss)
    let mut best_snapshot = model.store.snapshot();

    for epoch in 0..config.epochs {
        let started = Instant::now();
        rng::fisher_yates(&mut order, &mut shuffle_rng);

        let mut epoch_loss = 0.0f64;
        let mut seen = 0usize;
        for (batch_idx, batch) in order.chunks(config.batch).enumerate() {
            model.store.zero_grads();
            // forward/backward per document in parallel; gradients are
            // accumulated serially in batch order, so results match the
            // sequential path bit for bit
            let tapes: Vec<(Tape<f32>, f64)> = parallel::map_slice(batch, |&doc_idx| {
                let doc = &train_docs[doc_idx];
                let dropout_seed =
                    rng::derive_seed(config.seed, (epoch as u64) << 32 | doc_idx as u64);
                let mut tape = Tape::training(dropout_seed);
                let loss = model.loss(&mut tape, doc);
                let loss_val = tape.value(loss).item() as f64;
                tape.backward(loss);
                (tape, loss_val)
            });
            let mut batch_loss = 0.0f64;
            for (tape, loss_val) in &tapes {
                if !loss_val.is_finite() {
                    return Err(DtError::Diverged {
                        epoch,
                        batch: batch_idx,
                    });
                }
                batch_loss += loss_val;
                tape.accumulate_param_grads(&mut model.store);
            }
            model.store.scale_grads(1.0 / batch.len() as f64);
            model.store.clip_grad_norm(GRAD_CLIP);
            model.store.adam_step(&adam);
            epoch_loss += batch_loss;
            seen += batch.len();
        }
        let train_loss = epoch_loss / seen as f64;
        let (val_loss, val_acc) = model.evaluate(&valid_docs);
        let seconds = if options.record_seconds {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        };
        log.push(EpochLog {
            epoch,
            train_loss,
            val_acc,
            seconds,
        });
        if options.verbose {
            eprintln!(
                "epoch {epoch}: train_loss {train_loss:.4} val_acc {val_acc:.4} val_loss {val_loss:.4}"
            );
        }

        let improved = match best {
            None => true,
            Some((_, best_acc, best_loss)) => {
                val_acc > best_acc || (val_acc == best_acc && val_loss < best_loss)
            }
        };
        if improved {
            best = Some((epoch, val_acc, val_loss));
            best_snapshot = model.store.snapshot();
        }
        let best_epoch = best.expect("set above").0;
        if epoch - best_epoch >= config.early_stop {
            break;
        }
    }

    model.store.restore(&best_snapshot);
    let (best_epoch, best_val_acc, _) = best.expect("at least one epoch");
    Ok(TrainReport {
        model,
        log,
        best_epoch,
        best_val_acc,
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use crate::corpus::{Label, PairedRecord};
    use crate::synth;

    fn mini_splits() -> SplitData {
        // tiny separable corpus via the synthetic generator
        let corpus = synth::discourse_corpus(&synth::DiscourseCorpusSpec {
            pairs: 24,
            ..synth::DiscourseCorpusSpec::default_with_seed(5)
        });
        SplitData {
            train: corpus.pairs[..16].to_vec(),
            valid: corpus.pairs[16..20].to_vec(),
            test: corpus.pairs[20..].to_vec(),
            seed: 5,
        }
    }

    fn word_vocab(pairs: &[PairedRecord]) -> WordVocab {
        let texts: Vec<&str> = pairs
            .iter()
            .flat_map(|p| [p.hpc_text.as_str(), p.mgc_text.as_str()])
            .collect();
        WordVocab::build(&texts, 512)
    }

    #[test]
    fn first_batch_loss_is_near_ln2() {
        let splits = mini_splits();
        let vocab = word_vocab(&splits.train);
        let tagger = heuristic();
        let mut config = DtConfig::desk(3);
        config.token_vocab = vocab.len();
        config.code_vocab = tagger.vocab().len();
        let model = DtModel::init(&config, DtMode::Full).unwrap();
        let docs = prepare_all(&flatten(&splits.train), &config, &vocab, &tagger).unwrap();
        let batch = &docs[..16.min(docs.len())];
        let mut total = 0.0f64;
        for doc in batch {
            let mut tape = Tape::new();
            let loss = model.loss(&mut tape, doc);
            total += tape.value(loss).item() as f64;
        }
        let mean = total / batch.len() as f64;
        assert!(
            (mean - std::f64::consts::LN_2).abs() < 0.15,
            "init loss {mean}"
        );
    }

    #[test]
    fn training_is_deterministic_given_seed() {
        let splits = mini_splits();
        let vocab = word_vocab(&splits.train);
        let tagger = heuristic();
        let mut config = DtConfig::desk(11);
        config.epochs = 2;
        config.early_stop = 2;
        let options = TrainOptions {
            record_seconds: false,
            verbose: false,
        };
        let run = |seed: u64| {
            let mut c = config.clone();
            c.seed = seed;
            crate::parallel::with_threads(1, || {
                train(&c, &splits, &tagger, &vocab, &options).unwrap()
            })
        };
        let a = run(11);
        let b = run(11);
        assert_eq!(a.log, b.log);
        for name in a.model.store.names() {
            assert_eq!(
                a.model.store.value(name).unwrap().data(),
                b.model.store.value(name).unwrap().data(),
                "parameter {name} differs between identical runs"
            );
        }
        let c = run(12);
        assert_ne!(a.log, c.log);
    }

    #[test]
    fn early_stop_bounds_epochs_past_best() {
        let splits = mini_splits();
        let vocab = word_vocab(&splits.train);
        let tagger = heuristic();
        let mut config = DtConfig::desk(2);
        config.epochs = 6;
        config.early_stop = 1;
        let report = train(
            &config,
            &splits,
            &tagger,
            &vocab,
            &TrainOptions {
                record_seconds: false,
                verbose: false,
            },
        )
        .unwrap();
        let last_epoch = report.log.last().unwrap().epoch;
        assert!(
            last_epoch <= report.best_epoch + config.early_stop,
            "ran to epoch {last_epoch}, best was {}",
            report.best_epoch
        );
    }
}
