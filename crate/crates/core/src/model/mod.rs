//! The neural pinyin-to-character converter.
//!
//! Source words (pinyin) and target words (hanzi) are embedded by two
//! [`Bank`]s. A bi-LSTM encodes the source; an LSTM decoder with input
//! feeding and bilinear global attention scores the words of a small
//! per-sentence [`TargetVocab`]. Decoding is a beam search over the pinyin
//! lattice, so every hypothesis consumes the input syllables exactly.

mod bank;
mod beam;
mod checkpoint;
mod net;
mod target;
#[cfg(test)]
pub(crate) mod testkit;
#[cfg(test)]
mod tests;
mod train;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::pinyin::{CharPinyinDict, Syllable};
use crate::tensor::{seeded_rng, ParamStore};
use crate::vocab::Vocabulary;
use crate::{Error, Real, Result};

pub use bank::{Bank, Unit};
pub use beam::{beam_search, exhaustive_search, greedy_search, lattice_paths, Candidate, DecodeOptions};
pub use checkpoint::{decode_params, encode_params, parse_word_vectors, FORMAT_MAGIC};
pub use net::{DecoderState, Encoded, StepOutput};
pub use target::{build_target_vocab, common_words, output_space_size, Origin, TargetVocab};
pub use train::{evaluate_sentence_loss, train, EpochLog, TrainConfig, TrainControl};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    /// LSTM cells per direction.
    pub hidden: usize,
    pub embed_dim: usize,
    /// GRU cells per direction in the word composers.
    pub composer_hidden: usize,
    /// Fraction of vocabulary words that own a word-table row.
    pub filter_ratio: Real,
    /// Size of the common-word part of every target vocabulary.
    pub common_words: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Small configuration that trains in seconds on the toy fixture.
    pub fn desk() -> Self {
        ModelConfig { layers: 1, hidden: 64, embed_dim: 64, composer_hidden: 32, filter_ratio: 0.9, common_words: 8, seed: 7 }
    }

    /// Full-size configuration.
    pub fn paper() -> Self {
        ModelConfig { layers: 3, hidden: 500, embed_dim: 200, composer_hidden: 100, filter_ratio: 0.9, common_words: 100, seed: 7 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(String::from(m)));
        if self.layers == 0 || self.hidden == 0 || self.embed_dim == 0 || self.composer_hidden == 0 {
            return bad("layers, hidden, embed_dim and composer_hidden must be positive");
        }
        if !(0.0..=1.0).contains(&self.filter_ratio) {
            return bad("filter_ratio must be in [0, 1]");
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::paper()
    }
}

/// Everything besides tensors needed to rebuild a [`Model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub config: ModelConfig,
    pub src_units: Vec<String>,
    pub tgt_units: Vec<String>,
    pub src_words: Vec<String>,
    pub tgt_words: Vec<String>,
}

/// Parameters plus the layout needed to interpret them.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    src: Bank<Syllable>,
    tgt: Bank<char>,
    net: net::NetParams,
}

/// The `ceil(ratio * n)` head of a frequency-sorted list.
fn frequent_head<T>(sorted: Vec<(T, u64)>, ratio: Real) -> Vec<T> {
    let n = num_traits::Float::ceil(ratio * sorted.len() as Real) as usize;
    sorted.into_iter().take(n).map(|(w, _)| w).collect()
}

fn frequent_lists(vocab: &Vocabulary, ratio: Real) -> (Vec<Vec<Syllable>>, Vec<Vec<char>>) {
    let src = frequent_head(vocab.pinyin_words_by_freq(), ratio);
    let tgt = frequent_head(vocab.words_by_freq(), ratio).into_iter().map(|w| w.chars().collect()).collect();
    (src, tgt)
}

impl Model {
    /// A randomly initialized model whose unit inventories cover the
    /// dictionary and the vocabulary.
    pub fn new(config: ModelConfig, vocab: &Vocabulary, dict: &CharPinyinDict) -> Result<Self> {
        config.validate()?;
        let mut src_units: BTreeSet<Syllable> = BTreeSet::new();
        let mut tgt_units: BTreeSet<char> = BTreeSet::new();
        for c in dict.chars() {
            tgt_units.insert(c);
            src_units.extend(dict.pronunciations(c).unwrap_or(&[]).iter().copied());
        }
        for e in vocab.entries() {
            src_units.extend(e.pinyin.iter().copied());
            tgt_units.extend(e.hanzi.chars());
        }
        let (src_words, tgt_words) = frequent_lists(vocab, config.filter_ratio);
        let mut rng = seeded_rng(config.seed);
        let mut params = ParamStore::new();
        let dims = bank::BankDims { embed_dim: config.embed_dim, composer_hidden: config.composer_hidden };
        let src = Bank::new("src", src_units.into_iter().collect(), src_words, false, dims, &mut params, &mut rng);
        let tgt = Bank::new("tgt", tgt_units.into_iter().collect(), tgt_words, true, dims, &mut params, &mut rng);
        let net = net::NetParams::new(&config, &mut params, &mut rng);
        Ok(Model { config, params, src, tgt, net })
    }

    /// Reassembles a model from its metadata and a full parameter set.
    /// Any missing or mis-shaped tensor is an error.
    pub fn from_parts(meta: ModelMeta, params: ParamStore) -> Result<Self> {
        meta.config.validate()?;
        let dims = bank::BankDims { embed_dim: meta.config.embed_dim, composer_hidden: meta.config.composer_hidden };
        let units = |list: &[String]| -> Result<Vec<Syllable>> { list.iter().map(|s| Syllable::from_text(s)).collect() };
        let chars = |list: &[String]| -> Result<Vec<char>> { list.iter().map(|s| char::from_text(s)).collect() };
        let src_words = meta.src_words.iter().map(|w| Syllable::split_word(w)).collect::<Result<_>>()?;
        let tgt_words = meta.tgt_words.iter().map(|w| char::split_word(w)).collect::<Result<_>>()?;
        let src = Bank::from_store("src", units(&meta.src_units)?, src_words, false, dims, &params)?;
        let tgt = Bank::from_store("tgt", chars(&meta.tgt_units)?, tgt_words, true, dims, &params)?;
        let net = net::NetParams::from_store(&meta.config, &params)?;
        let model = Model { config: meta.config, params, src, tgt, net };
        let expected = model.expected_param_count();
        if model.params.len() != expected {
            return Err(Error::Checkpoint(alloc::format!(
                "checkpoint has {} tensors, model expects {expected}",
                model.params.len()
            )));
        }
        Ok(model)
    }

    fn expected_param_count(&self) -> usize {
        // unit, 6 gru, 2 proj, word (+ bias on the target side)
        10 + 11 + self.net.param_count()
    }

    pub fn meta(&self) -> ModelMeta {
        let text = |v: &[Syllable]| v.iter().map(Unit::to_text).collect();
        ModelMeta {
            config: self.config,
            src_units: text(self.src.units()),
            tgt_units: self.tgt.units().iter().map(Unit::to_text).collect(),
            src_words: self.src.frequent_words().iter().map(|w| Syllable::join_word(w)).collect(),
            tgt_words: self.tgt.frequent_words().iter().map(|w| char::join_word(w)).collect(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn source_bank(&self) -> &Bank<Syllable> {
        &self.src
    }

    pub fn target_bank(&self) -> &Bank<char> {
        &self.tgt
    }

    /// Recomputes which words own word-table rows from current vocabulary
    /// frequencies. Only meant for checkpoint boundaries.
    pub fn refresh_word_tables(&mut self, vocab: &Vocabulary) {
        let (src_words, tgt_words) = frequent_lists(vocab, self.config.filter_ratio);
        self.src.refresh_words(src_words, &mut self.params);
        self.tgt.refresh_words(tgt_words, &mut self.params);
    }

    /// Seeds word-table rows of both banks from pre-trained vectors keyed by
    /// hanzi word or apostrophe-joined pinyin. Returns the rows seeded.
    pub fn seed_word_vectors(&mut self, vectors: &BTreeMap<String, Vec<Real>>) -> usize {
        self.src.seed_rows(vectors, &mut self.params) + self.tgt.seed_rows(vectors, &mut self.params)
    }

    /// Names of encoder parameters (frozen by some online configurations).
    pub fn is_encoder_param(name: &str) -> bool {
        name.starts_with("enc.") || name.starts_with("src.")
    }
}

/// Read-only view of the lexical resources decoding depends on.
#[derive(Debug, Clone, Copy)]
pub struct Lexicon<'a> {
    pub vocab: &'a Vocabulary,
    pub dict: &'a CharPinyinDict,
    /// Precomputed [`common_words`] of `vocab`.
    pub common: &'a [String],
}
