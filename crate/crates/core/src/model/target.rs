//! Per-sentence target vocabulary.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::pinyin::{CharPinyinDict, Syllable};
use crate::vocab::{BilingualEntry, Vocabulary};
use crate::Real;

/// Why a word is in a [`TargetVocab`]; a word may have several origins.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Origin {
    /// Candidate for some source position.
    pub source: bool,
    /// Among the most common target words.
    pub common: bool,
    /// Part of the training reference.
    pub reference: bool,
}

/// The words a sentence is scored over, in a fixed order.
#[derive(Debug, Clone, Default)]
pub struct TargetVocab {
    words: Vec<String>,
    origins: Vec<Origin>,
    index: BTreeMap<String, usize>,
    /// Per source position, the first single-syllable candidate.
    fallback: Vec<usize>,
}

impl TargetVocab {
    fn add(&mut self, w: &str, set: impl Fn(&mut Origin)) -> usize {
        let i = match self.index.get(w) {
            Some(&i) => i,
            None => {
                self.words.push(String::from(w));
                self.origins.push(Origin::default());
                self.index.insert(String::from(w), self.words.len() - 1);
                self.words.len() - 1
            }
        };
        set(&mut self.origins[i]);
        i
    }

    /// An explicit word list with no recorded origins; duplicates collapse.
    pub fn from_words<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> Self {
        let mut tv = TargetVocab::default();
        for w in words {
            tv.add(w.as_ref(), |_| {});
        }
        tv
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn origins(&self) -> &[Origin] {
        &self.origins
    }

    pub fn index_of(&self, w: &str) -> Option<usize> {
        self.index.get(w).copied()
    }

    pub fn contains(&self, w: &str) -> bool {
        self.index.contains_key(w)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Keeps the `ceil(fraction * len)` most frequent words (ties by the
    /// current order) plus, for every source position, the first
    /// single-syllable candidate so that every input stays decodable.
    pub fn prune(&self, fraction: Real, vocab: &Vocabulary) -> TargetVocab {
        let draft = Draft {
            words: self.words.iter().map(String::as_str).collect(),
            origins: self.origins.clone(),
            index: BTreeMap::new(),
            fallback: self.fallback.clone(),
        };
        draft.finish(fraction, vocab)
    }
}

/// A target vocabulary over borrowed words, materialized once the kept
/// subset is known.
#[derive(Default)]
struct Draft<'a> {
    words: Vec<&'a str>,
    origins: Vec<Origin>,
    index: BTreeMap<&'a str, usize>,
    fallback: Vec<usize>,
}

impl<'a> Draft<'a> {
    fn add(&mut self, w: &'a str, set: impl Fn(&mut Origin)) -> usize {
        let next = self.words.len();
        let i = *self.index.entry(w).or_insert(next);
        if i == next {
            self.words.push(w);
            self.origins.push(Origin::default());
        }
        set(&mut self.origins[i]);
        i
    }

    fn finish(self, fraction: Real, vocab: &Vocabulary) -> TargetVocab {
        let n = self.words.len();
        let mut keep = alloc::vec![true; n];
        if fraction < 1.0 {
            let keep_n = num_traits::Float::ceil(fraction.max(0.0) * n as Real) as usize;
            let mut ranked: Vec<(core::cmp::Reverse<u64>, usize)> = (0..n).map(|i| (core::cmp::Reverse(vocab.hanzi_freq(self.words[i])), i)).collect();
            ranked.sort_unstable();
            keep.fill(false);
            for &(_, i) in ranked.iter().take(keep_n) {
                keep[i] = true;
            }
            for &i in &self.fallback {
                keep[i] = true;
            }
        }
        let mut out = TargetVocab::default();
        let mut remap = alloc::vec![usize::MAX; n];
        for i in (0..n).filter(|&i| keep[i]) {
            remap[i] = out.words.len();
            out.words.push(String::from(self.words[i]));
            out.origins.push(self.origins[i]);
            out.index.insert(String::from(self.words[i]), remap[i]);
        }
        out.fallback = self.fallback.iter().map(|&i| remap[i]).collect();
        out
    }
}

/// The `n` most frequent hanzi words of the vocabulary.
pub fn common_words(vocab: &Vocabulary, n: usize) -> Vec<String> {
    vocab.words_by_freq().into_iter().take(n).map(|(w, _)| w).collect()
}

/// Builds the target vocabulary for one sentence: candidates of every source
/// position, then the common words, then (training only) the reference.
pub fn build_target_vocab(
    sylls: &[Syllable],
    vocab: &Vocabulary,
    dict: &CharPinyinDict,
    common: &[String],
    reference: Option<&[String]>,
) -> TargetVocab {
    let cands: Vec<_> = (0..sylls.len()).map(|p| vocab.candidates_for_prefix(&sylls[p..], dict)).collect();
    target_vocab_from(&cands, common, reference, 1.0, vocab)
}

/// [`build_target_vocab`] over precomputed per-position candidates, pruned
/// to `keep_fraction` as by [`TargetVocab::prune`].
pub(crate) fn target_vocab_from(
    cands: &[Vec<BilingualEntry>],
    common: &[String],
    reference: Option<&[String]>,
    keep_fraction: Real,
    vocab: &Vocabulary,
) -> TargetVocab {
    let mut draft = Draft::default();
    for list in cands {
        let mut first = None;
        for c in list {
            let i = draft.add(&c.hanzi, |o| o.source = true);
            if first.is_none() && c.len() == 1 {
                first = Some(i);
            }
        }
        draft.fallback.extend(first);
    }
    for w in common {
        draft.add(w, |o| o.common = true);
    }
    if let Some(reference) = reference {
        for w in reference {
            draft.add(w, |o| o.reference = true);
        }
    }
    draft.finish(keep_fraction, vocab)
}

/// Size of the full output space: every vocabulary hanzi word plus every
/// dictionary character.
pub fn output_space_size(vocab: &Vocabulary, dict: &CharPinyinDict) -> usize {
    let mut all: BTreeSet<String> = vocab.entries().map(|e| e.hanzi).collect();
    all.extend(dict.chars().map(String::from));
    all.len()
}
