//! The IME session loop: convert, show candidates, learn from the choice.
//!
//! Converts read an immutable [`Snapshot`]; [`Engine::submit_choice`] is the
//! only writer and replaces the snapshot copy-on-write, so a caller holding
//! an older `Arc<Snapshot>` keeps a consistent view while updates proceed.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::ParallelSentence;
use crate::model::{beam_search, common_words, Candidate, DecodeOptions, Lexicon, Model, ModelMeta};
use crate::pinyin::{CharPinyinDict, Syllable, SyllableInventory};
use crate::tensor::{derive_seed, seeded_rng, ParamStore};
use crate::vocab::{UpdateReport, Vocabulary};
use crate::{Error, Real, Result};

/// Online learning settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineConfig {
    /// Run vocabulary updates and online training. `false` gives a frozen
    /// engine whose vocabulary and parameters never change.
    pub learn: bool,
    /// Buffered instances per training flush.
    pub train_every: usize,
    /// Passes over the buffer per flush, batch size 1.
    pub online_epochs: usize,
    pub lr: Real,
    pub clip_norm: Option<Real>,
    pub dropout: Real,
    /// Leave encoder-side parameters untouched during online training.
    pub freeze_encoder: bool,
    /// Cap on vocabulary entries; `None` never evicts.
    pub max_vocab: Option<usize>,
    pub seed: u64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            learn: true,
            train_every: 64,
            online_epochs: 1,
            lr: 0.5,
            clip_norm: Some(5.0),
            dropout: 0.0,
            freeze_encoder: false,
            max_vocab: None,
            seed: 7,
        }
    }
}

impl OnlineConfig {
    pub fn frozen() -> Self {
        OnlineConfig { learn: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_every == 0 || !(self.lr > 0.0) || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(String::from("train_every must be positive, lr > 0 and dropout in [0, 1)")));
        }
        Ok(())
    }
}

/// Static lexical resources shared by every snapshot.
#[derive(Debug, Clone)]
pub struct Resources {
    pub inventory: SyllableInventory,
    pub dict: CharPinyinDict,
}

/// Raw user input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Input {
    /// Unsegmented letters such as `"beijing"`.
    Letters(String),
    Syllables(Vec<Syllable>),
}

/// Everything a conversion reads.
#[derive(Debug, Clone)]
pub struct Snapshot {
    resources: Arc<Resources>,
    model: Model,
    vocab: Vocabulary,
    common: Vec<String>,
}

impl Snapshot {
    pub fn new(resources: Arc<Resources>, model: Model, vocab: Vocabulary) -> Self {
        let common = common_words(&vocab, model.config().common_words);
        Snapshot { resources, model, vocab, common }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn resources(&self) -> &Resources {
        &self.resources
    }

    pub fn lexicon(&self) -> Lexicon<'_> {
        Lexicon { vocab: &self.vocab, dict: &self.resources.dict, common: &self.common }
    }

    /// Syllables of `input`; letters are split by maximum matching over the
    /// inventory.
    pub fn syllables(&self, input: &Input) -> Result<Vec<Syllable>> {
        let inv = &self.resources.inventory;
        match input {
            Input::Letters(s) => inv.segment_letters(s),
            Input::Syllables(v) => {
                if let Some(bad) = v.iter().find(|s| !inv.contains(s)) {
                    return Err(Error::InvalidSyllable(bad.to_string()));
                }
                Ok(v.clone())
            }
        }
    }

    pub fn convert(&self, input: &Input, opts: &DecodeOptions) -> Result<Conversion> {
        let pinyin = self.syllables(input)?;
        let shown = beam_search(&self.model, &pinyin, self.lexicon(), opts)?;
        Ok(Conversion { pinyin, shown })
    }
}

/// A conversion waiting for the user's choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversion {
    pub pinyin: Vec<Syllable>,
    pub shown: Vec<Candidate>,
}

impl Conversion {
    /// The converter's top-1 text at conversion time.
    pub fn top1(&self) -> &str {
        self.shown.first().map_or("", |c| c.text.as_str())
    }

    /// 1-based rank of `text` among the shown candidates.
    pub fn rank_of(&self, text: &str) -> Option<usize> {
        self.shown.iter().position(|c| c.text == text).map(|i| i + 1)
    }
}

/// A completed turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTurn {
    pub turn_id: u64,
    pub pinyin: Vec<Syllable>,
    pub shown: Vec<String>,
    pub choice: String,
    /// 1-based rank of the choice among `shown`; `None` for free text.
    pub rank: Option<usize>,
    pub update: UpdateReport,
    pub vocab_size: usize,
    /// Whether this turn triggered an online training flush.
    pub flushed: bool,
}

/// Serializable engine state apart from the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineState {
    pub config: OnlineConfig,
    pub decode: DecodeOptions,
    pub meta: ModelMeta,
    pub vocab_tsv: String,
    pub buffer: Vec<ParallelSentence>,
    pub turns: u64,
    pub flushes: u64,
    pub last_flush_turn: Option<u64>,
}

/// One IME session: the current snapshot plus the online-training buffer.
#[derive(Debug, Clone)]
pub struct Engine {
    snapshot: Arc<Snapshot>,
    config: OnlineConfig,
    decode: DecodeOptions,
    buffer: Vec<ParallelSentence>,
    turns: u64,
    flushes: u64,
    last_flush_turn: Option<u64>,
}

impl Engine {
    pub fn new(resources: Arc<Resources>, model: Model, mut vocab: Vocabulary, config: OnlineConfig, decode: DecodeOptions) -> Result<Self> {
        config.validate()?;
        vocab.set_max_size(config.max_vocab);
        Ok(Engine {
            snapshot: Arc::new(Snapshot::new(resources, model, vocab)),
            config,
            decode,
            buffer: Vec::new(),
            turns: 0,
            flushes: 0,
            last_flush_turn: None,
        })
    }

    /// The current snapshot; cheap to clone and safe to read while the
    /// engine keeps updating.
    pub fn snapshot(&self) -> Arc<Snapshot> {
        Arc::clone(&self.snapshot)
    }

    pub fn config(&self) -> &OnlineConfig {
        &self.config
    }

    pub fn decode_options(&self) -> &DecodeOptions {
        &self.decode
    }

    pub fn set_decode_options(&mut self, decode: DecodeOptions) {
        self.decode = decode;
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.snapshot.vocab
    }

    pub fn model(&self) -> &Model {
        &self.snapshot.model
    }

    pub fn turns(&self) -> u64 {
        self.turns
    }

    pub fn flushes(&self) -> u64 {
        self.flushes
    }

    /// Turn whose submission last triggered a training flush.
    pub fn last_flush_turn(&self) -> Option<u64> {
        self.last_flush_turn
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn convert(&self, input: &Input) -> Result<Conversion> {
        self.snapshot.convert(input, &self.decode)
    }

    /// Records the user's choice for `conv`. The vocabulary learns from the
    /// disagreement between `conv`'s top-1 and `chosen`; the aligned pair is
    /// buffered and every `train_every` instances the model is trained on the
    /// buffer. A length mismatch is rejected without any state change.
    pub fn submit_choice(&mut self, conv: &Conversion, chosen: &str) -> Result<SessionTurn> {
        let n = chosen.chars().count();
        if n != conv.pinyin.len() {
            return Err(Error::LengthMismatch(alloc::format!("{} syllables but the choice has {n} characters", conv.pinyin.len())));
        }
        if conv.shown.is_empty() {
            return Err(Error::Empty("shown candidates"));
        }
        let turn_id = self.turns + 1;
        let mut update = UpdateReport { turn: turn_id, ..UpdateReport::default() };
        let mut flushed = false;
        if self.config.learn {
            let snap = Arc::make_mut(&mut self.snapshot);
            update = snap.vocab.update(&conv.pinyin, conv.top1(), chosen, turn_id)?;
            snap.common = common_words(&snap.vocab, snap.model.config().common_words);
            self.buffer.push(ParallelSentence::segment(&conv.pinyin, chosen, &snap.vocab)?);
            if self.buffer.len() >= self.config.train_every {
                self.flush()?;
                self.last_flush_turn = Some(turn_id);
                flushed = true;
            }
        }
        self.turns = turn_id;
        Ok(SessionTurn {
            turn_id,
            pinyin: conv.pinyin.clone(),
            shown: conv.shown.iter().map(|c| c.text.clone()).collect(),
            choice: chosen.to_string(),
            rank: conv.rank_of(chosen),
            update,
            vocab_size: self.vocab().len(),
            flushed,
        })
    }

    /// Trains on the buffered instances now, then clears the buffer and
    /// refreshes the word tables. A no-op on an empty buffer.
    pub fn flush(&mut self) -> Result<()> {
        if self.buffer.is_empty() {
            return Ok(());
        }
        let cfg = self.config;
        let flush = self.flushes + 1;
        let mut order: Vec<usize> = (0..self.buffer.len()).collect();
        let mut shuffle_rng = seeded_rng(derive_seed(cfg.seed, flush));
        let mut dropout_rng = seeded_rng(derive_seed(cfg.seed ^ 0xD80F, flush));
        // train a copy so a failed flush leaves the engine untouched
        let mut next = (*self.snapshot).clone();
        {
            let Snapshot { resources, model, vocab, common } = &mut next;
            let lex = Lexicon { vocab, dict: &resources.dict, common };
            let keep = |name: &str| !(cfg.freeze_encoder && Model::is_encoder_param(name));
            for _ in 0..cfg.online_epochs {
                order.shuffle(&mut shuffle_rng);
                for &i in &order {
                    let rng = (cfg.dropout > 0.0).then_some(&mut dropout_rng);
                    model.train_batch(&[&self.buffer[i]], lex, cfg.lr, cfg.clip_norm, cfg.dropout, rng, &keep)?;
                }
            }
            model.refresh_word_tables(vocab);
        }
        self.snapshot = Arc::new(next);
        self.buffer.clear();
        self.flushes = flush;
        log::info!("online flush {flush} done");
        Ok(())
    }

    /// Gold-reference replay: converts every item and submits its reference
    /// as the user's choice. Items that fail are logged and skipped.
    pub fn replay_simulated_user(&mut self, stream: &[ParallelSentence]) -> Vec<(Conversion, SessionTurn)> {
        let mut out = Vec::with_capacity(stream.len());
        for item in stream {
            let result = self
                .convert(&Input::Syllables(item.syllables()))
                .and_then(|conv| self.submit_choice(&conv, &item.hanzi()).map(|t| (conv, t)));
            match result {
                Ok(pair) => out.push(pair),
                Err(e) => log::warn!("skipping {:?}: {e}", item.hanzi()),
            }
        }
        out
    }

    /// State without parameters; pair with [`Engine::params`].
    pub fn state(&self) -> EngineState {
        EngineState {
            config: self.config,
            decode: self.decode,
            meta: self.snapshot.model.meta(),
            vocab_tsv: self.snapshot.vocab.to_tsv(),
            buffer: self.buffer.clone(),
            turns: self.turns,
            flushes: self.flushes,
            last_flush_turn: self.last_flush_turn,
        }
    }

    pub fn params(&self) -> &ParamStore {
        self.snapshot.model.params()
    }

    pub fn from_state(resources: Arc<Resources>, state: EngineState, params: ParamStore) -> Result<Self> {
        let model = Model::from_parts(state.meta, params)?;
        let vocab = Vocabulary::parse_tsv(&state.vocab_tsv)?;
        let mut engine = Engine::new(resources, model, vocab, state.config, state.decode)?;
        engine.buffer = state.buffer;
        engine.turns = state.turns;
        engine.flushes = state.flushes;
        engine.last_flush_turn = state.last_flush_turn;
        Ok(engine)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testkit::{sylls, tiny, toy, Toy};
    use crate::model::encode_params;
    use crate::pinyin::SyllableInventory;

    fn resources(t: &Toy) -> Arc<Resources> {
        let inventory = SyllableInventory::parse("bei\njing\nhuan\nying\nni\n").unwrap();
        Arc::new(Resources { inventory, dict: t.dict.clone() })
    }

    fn engine(t: &Toy, vocab: Vocabulary, config: OnlineConfig) -> Engine {
        Engine::new(resources(t), t.model(tiny(31)), vocab, config, DecodeOptions::default()).unwrap()
    }

    fn without(t: &Toy, hanzi: &str) -> Vocabulary {
        Vocabulary::from_entries(t.vocab.entries().filter(|e| e.hanzi != hanzi)).unwrap()
    }

    fn letters(s: &str) -> Input {
        Input::Letters(String::from(s))
    }

    #[test]
    fn converts_raw_letters() {
        let t = toy(2);
        let mut e = engine(&t, t.vocab.clone(), OnlineConfig::default());
        // untrained: widen the search so the whole lattice is visible
        e.set_decode_options(DecodeOptions { beam: 200, top_k: 200, keep_fraction: 1.0 });
        let c = e.convert(&letters("beijinghuanyingni")).unwrap();
        assert_eq!(c.pinyin, sylls("bei jing huan ying ni"));
        assert!(c.rank_of("北京欢迎你").is_some());
        let c = e.convert(&Input::Syllables(sylls("ni"))).unwrap();
        let mut texts: Vec<&str> = c.shown.iter().map(|c| c.text.as_str()).collect();
        texts.sort();
        assert_eq!(texts, ["你", "泥"]);
    }

    #[test]
    fn unsegmentable_letters_report_offset() {
        let t = toy(2);
        let e = engine(&t, t.vocab.clone(), OnlineConfig::default());
        assert_eq!(e.convert(&letters("xq")).unwrap_err(), Error::Unsegmentable { input: String::from("xq"), offset: 0 });
        assert!(matches!(e.convert(&Input::Syllables(sylls("bei zhuang"))), Err(Error::InvalidSyllable(_))));
    }

    #[test]
    fn agreement_adds_nothing_but_buffers() {
        let t = toy(2);
        let mut e = engine(&t, t.vocab.clone(), OnlineConfig::default());
        let c = e.convert(&letters("beijing")).unwrap();
        let top = String::from(c.top1());
        let turn = e.submit_choice(&c, &top).unwrap();
        assert!(turn.update.added.is_empty());
        assert_eq!((turn.rank, e.buffered(), e.turns()), (Some(1), 1, 1));
    }

    #[test]
    fn length_mismatch_changes_nothing() {
        let t = toy(2);
        let mut e = engine(&t, t.vocab.clone(), OnlineConfig::default());
        let c = e.convert(&letters("beijing")).unwrap();
        let before = e.state();
        assert!(matches!(e.submit_choice(&c, "北京你"), Err(Error::LengthMismatch(_))));
        assert_eq!(e.state(), before);
    }

    #[test]
    fn learning_a_new_word_raises_its_rank() {
        let t = toy(2);
        let config = OnlineConfig { train_every: 1, online_epochs: 3, ..OnlineConfig::default() };
        let mut e = engine(&t, without(&t, "北京"), config);
        let c = e.convert(&letters("beijing")).unwrap();
        assert_eq!(c.top1(), "背景");
        let before = c.rank_of("北京").unwrap();
        let turn = e.submit_choice(&c, "北京").unwrap();
        assert_eq!(turn.update.added.len(), 1);
        assert_eq!((turn.update.added[0].hanzi.as_str(), turn.update.added[0].pinyin.clone()), ("北京", sylls("bei jing")));
        assert!(turn.flushed && e.vocab().contains(&sylls("bei jing"), "北京"));
        let after = e.convert(&letters("beijing")).unwrap().rank_of("北京").unwrap();
        assert!(after < before, "rank {before} -> {after}");
    }

    #[test]
    fn flush_every_train_every_turns() {
        let t = toy(2);
        let mut e = engine(&t, t.vocab.clone(), OnlineConfig::default());
        let c = e.convert(&letters("beijinghuanyingni")).unwrap();
        for i in 1..=64 {
            let turn = e.submit_choice(&c, "北京欢迎你").unwrap();
            assert_eq!(turn.flushed, i == 64, "turn {i}");
        }
        assert_eq!((e.flushes(), e.buffered(), e.last_flush_turn()), (1, 0, Some(64)));
    }

    #[test]
    fn resubmitting_is_a_fixed_point() {
        let t = toy(2);
        let mut e = engine(&t, without(&t, "北京"), OnlineConfig { train_every: 1000, ..OnlineConfig::default() });
        let c = e.convert(&letters("beijinghuanyingni")).unwrap();
        let first = e.submit_choice(&c, "北京欢迎你").unwrap();
        assert!(!first.update.added.is_empty());
        let again = e.submit_choice(&c, "北京欢迎你").unwrap();
        assert!(again.update.added.is_empty());
        // re-converting eventually stops adding too
        let mut rounds = 0;
        loop {
            let c = e.convert(&letters("beijinghuanyingni")).unwrap();
            if e.submit_choice(&c, "北京欢迎你").unwrap().update.added.is_empty() {
                break;
            }
            rounds += 1;
            assert!(rounds < 10);
        }
    }

    #[test]
    fn frozen_engine_never_changes() {
        let t = toy(2);
        let mut e = engine(&t, without(&t, "北京"), OnlineConfig { train_every: 1, ..OnlineConfig::frozen() });
        let params = encode_params(e.params());
        for _ in 0..3 {
            let c = e.convert(&letters("beijing")).unwrap();
            let turn = e.submit_choice(&c, "北京").unwrap();
            assert!(turn.update.added.is_empty() && !turn.flushed);
            assert_eq!(turn.vocab_size, t.vocab.len() - 1);
        }
        assert_eq!(encode_params(e.params()), params);
        assert_eq!(e.turns(), 3);
    }

    #[test]
    fn readers_keep_their_snapshot() {
        let t = toy(2);
        let mut e = engine(&t, without(&t, "北京"), OnlineConfig { train_every: 1, ..OnlineConfig::default() });
        let old = e.snapshot();
        let c = e.convert(&letters("beijing")).unwrap();
        e.submit_choice(&c, "北京").unwrap();
        assert!(!old.vocab().contains(&sylls("bei jing"), "北京"));
        assert!(e.vocab().contains(&sylls("bei jing"), "北京"));
        assert_ne!(encode_params(old.model().params()), encode_params(e.params()));
    }

    #[test]
    fn state_round_trip_continues_identically() {
        let t = toy(2);
        let config = OnlineConfig { train_every: 2, dropout: 0.2, ..OnlineConfig::default() };
        let mut a = engine(&t, without(&t, "欢迎"), config);
        let inputs = ["beijinghuanying", "huanying", "ni", "beijing", "huanyingni"];
        let choices = ["背景欢迎", "欢迎", "你", "北京", "欢迎你"];
        let c = a.convert(&letters(inputs[0])).unwrap();
        a.submit_choice(&c, choices[0]).unwrap();
        let mut b = Engine::from_state(resources(&t), a.state(), a.params().clone()).unwrap();
        for (input, choice) in inputs.iter().zip(choices).skip(1) {
            let (ca, cb) = (a.convert(&letters(input)).unwrap(), b.convert(&letters(input)).unwrap());
            assert_eq!(ca, cb);
            assert_eq!(a.submit_choice(&ca, choice).unwrap(), b.submit_choice(&cb, choice).unwrap());
        }
        assert_eq!(encode_params(a.params()), encode_params(b.params()));
        assert_eq!(a.state(), b.state());
    }

    #[test]
    fn replay_of_empty_stream_is_empty() {
        let t = toy(2);
        let mut e = engine(&t, t.vocab.clone(), OnlineConfig::default());
        assert!(e.replay_simulated_user(&[]).is_empty());
    }
}
