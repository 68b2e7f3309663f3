//! Teacher-forced training with plain SGD.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::net::{Noise, TargetSide};
use super::{build_target_vocab, Lexicon, Model};
use crate::corpus::ParallelSentence;
use crate::pinyin::Syllable;
use crate::tensor::{derive_seed, seeded_rng, sgd_step, Graph, Grads, LrSchedule, Rng};
use crate::{Error, Real, Result};

/// Optimization hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: Real,
    /// Epochs at the initial rate before halving every epoch.
    pub lr_halve_after: usize,
    pub clip_norm: Option<Real>,
    pub dropout: Real,
    pub seed: u64,
}

impl TrainConfig {
    pub fn desk() -> Self {
        TrainConfig { epochs: 50, batch: 16, lr: 1.0, lr_halve_after: 35, clip_norm: Some(5.0), dropout: 0.0, seed: 7 }
    }

    pub fn paper() -> Self {
        TrainConfig { epochs: 13, batch: 32, lr: 1.0, lr_halve_after: 9, clip_norm: Some(5.0), dropout: 0.3, seed: 7 }
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule { initial: self.lr, halve_after: self.lr_halve_after }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || !(0.0..1.0).contains(&self.dropout) || !(self.lr > 0.0) {
            return Err(Error::Config(String::from("batch must be positive, dropout in [0, 1) and lr > 0")));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::paper()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: Real,
    /// Mean cross entropy per target word.
    pub loss: Real,
    pub sentences: usize,
    pub words: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainControl {
    Continue,
    Stop,
}

/// Sum of losses and target-word count of one batch.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct BatchLoss {
    pub loss: Real,
    pub words: usize,
}

impl Model {
    /// Forward and backward pass over a batch. Gradients of the mean
    /// per-sentence loss are added to `grads`.
    pub(crate) fn batch_gradients(
        &self,
        batch: &[&ParallelSentence],
        lex: Lexicon<'_>,
        dropout: Real,
        rng: Option<&mut Rng>,
        grads: &mut Grads,
    ) -> Result<BatchLoss> {
        let mut src_index: BTreeMap<Vec<Syllable>, usize> = BTreeMap::new();
        let mut tgt_index: BTreeMap<String, usize> = BTreeMap::new();
        let mut plans = Vec::with_capacity(batch.len());
        for s in batch {
            let sylls = s.syllables();
            let tv = build_target_vocab(&sylls, lex.vocab, lex.dict, lex.common, Some(&s.hanzi_words));
            let targets: Vec<usize> = s
                .hanzi_words
                .iter()
                .map(|w| tv.index_of(w).ok_or_else(|| Error::Config(alloc::format!("reference word {w:?} missing from target vocabulary"))))
                .collect::<Result<_>>()?;
            for w in &s.pinyin_words {
                src_index.insert(w.clone(), 0);
            }
            for w in tv.words() {
                tgt_index.insert(w.clone(), 0);
            }
            plans.push((tv, targets));
        }
        // dense ids in sorted order
        for (i, v) in src_index.values_mut().enumerate() {
            *v = i;
        }
        for (i, v) in tgt_index.values_mut().enumerate() {
            *v = i;
        }
        let src_words: Vec<Vec<Syllable>> = src_index.keys().cloned().collect();
        let tgt_words: Vec<Vec<char>> = tgt_index.keys().map(|w| w.chars().collect()).collect();

        let mut g = Graph::new(&self.params);
        let mut noise = Noise { rng, p: dropout };
        let src_all = self.src.cwe(&mut g, &src_words);
        let tgt_all = self.tgt.cwe(&mut g, &tgt_words);
        let bias_all = self.tgt.bias_col(&mut g, &tgt_words);
        let mut losses = Vec::with_capacity(batch.len());
        let mut out = BatchLoss::default();
        for ((tv, targets), s) in plans.iter().zip(batch) {
            let src_ids: Vec<usize> = s.pinyin_words.iter().map(|w| src_index[w]).collect();
            let tgt_ids: Vec<usize> = tv.words().iter().map(|w| tgt_index[w]).collect();
            let src_rows = g.gather(src_all, &src_ids);
            let enc = self.encode_rows(&mut g, src_rows, &mut noise);
            let tgt = TargetSide::select(&mut g, tgt_all, bias_all, &tgt_ids);
            let loss = self.forced_loss(&mut g, &enc, &tgt, targets, &mut noise);
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFinite(alloc::format!("loss of sentence {:?}", s.hanzi())));
            }
            out.loss += value;
            out.words += targets.len();
            losses.push(loss);
        }
        let all = g.concat_cols(&losses);
        let total = g.sum(all);
        let mean = g.scale(total, 1.0 / batch.len() as Real);
        g.backward(mean).accumulate_into(grads, 1.0);
        Ok(out)
    }

    /// One SGD update on `batch`. Gradients of parameters rejected by `keep`
    /// are dropped before the step.
    pub(crate) fn train_batch(
        &mut self,
        batch: &[&ParallelSentence],
        lex: Lexicon<'_>,
        lr: Real,
        clip_norm: Option<Real>,
        dropout: Real,
        rng: Option<&mut Rng>,
        keep: &dyn Fn(&str) -> bool,
    ) -> Result<BatchLoss> {
        let mut grads = Grads::for_params(&self.params);
        let loss = self.batch_gradients(batch, lex, dropout, rng, &mut grads)?;
        let params = &self.params;
        grads.retain(|id| keep(params.name(id)));
        sgd_step(&mut self.params, &mut grads, lr, clip_norm)?;
        Ok(loss)
    }

    /// Loss and parameter gradients of one sentence without dropout.
    pub fn sentence_gradients(&self, s: &ParallelSentence, lex: Lexicon<'_>) -> Result<(Real, Grads)> {
        let mut grads = Grads::for_params(&self.params);
        let l = self.batch_gradients(&[s], lex, 0.0, None, &mut grads)?;
        Ok((l.loss, grads))
    }
}

/// Teacher-forced loss (summed over words) of one sentence, no dropout.
pub fn evaluate_sentence_loss(model: &Model, s: &ParallelSentence, lex: Lexicon<'_>) -> Result<Real> {
    let mut grads = Grads::default();
    // gradients are cheap relative to the forward pass at these sizes
    Ok(model.batch_gradients(&[s], lex, 0.0, None, &mut grads)?.loss)
}

/// Trains `model` on `corpus`. `on_epoch` sees every epoch's log and the
/// current model (for checkpoints or early stopping).
pub fn train(
    model: &mut Model,
    corpus: &[ParallelSentence],
    lex: Lexicon<'_>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog, &Model) -> Result<TrainControl>,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let schedule = cfg.schedule();
    let mut logs = Vec::new();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for epoch in 1..=cfg.epochs {
        let lr = schedule.rate(epoch);
        order.sort_unstable();
        order.shuffle(&mut seeded_rng(derive_seed(cfg.seed, epoch as u64)));
        let mut dropout_rng = seeded_rng(derive_seed(cfg.seed ^ 0xD80F, epoch as u64));
        let mut total = BatchLoss::default();
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<&ParallelSentence> = chunk.iter().map(|&i| &corpus[i]).collect();
            let rng = (cfg.dropout > 0.0).then_some(&mut dropout_rng);
            let l = model.train_batch(&batch, lex, lr, cfg.clip_norm, cfg.dropout, rng, &|_| true)?;
            total.loss += l.loss;
            total.words += l.words;
        }
        let log = EpochLog { epoch, lr, loss: total.loss / total.words.max(1) as Real, sentences: corpus.len(), words: total.words };
        log::info!("epoch {epoch}: lr {lr} loss {:.4}", log.loss);
        let control = on_epoch(&log, model)?;
        logs.push(log);
        if control == TrainControl::Stop {
            break;
        }
    }
    Ok(logs)
}
