//! Pinyin-character parallel corpus generation.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::pinyin::{annotate_pinyin, join_syllables, parse_syllables, split_mius, CharPinyinDict, CjkRange, Syllable};
use crate::vocab::{BilingualEntry, Vocabulary};
use crate::{Error, Result};

/// A hanzi sentence and its pinyin, segmented identically into words.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ParallelSentence {
    pub pinyin_words: Vec<Vec<Syllable>>,
    pub hanzi_words: Vec<String>,
}

impl ParallelSentence {
    /// Builds a sentence after checking word and syllable alignment.
    pub fn new(pinyin_words: Vec<Vec<Syllable>>, hanzi_words: Vec<String>) -> Result<Self> {
        let s = ParallelSentence { pinyin_words, hanzi_words };
        s.validate()?;
        Ok(s)
    }

    /// Splits `hanzi` with the vocabulary's maximum matching and aligns `py`.
    pub fn segment(py: &[Syllable], hanzi: &str, vocab: &Vocabulary) -> Result<Self> {
        let n = hanzi.chars().count();
        if n != py.len() {
            return Err(Error::LengthMismatch(format!("{} syllables for {} characters", py.len(), n)));
        }
        let hanzi_words = vocab.segment_hanzi(hanzi);
        let mut pos = 0;
        let pinyin_words = hanzi_words
            .iter()
            .map(|w| {
                let len = w.chars().count();
                let p = py[pos..pos + len].to_vec();
                pos += len;
                p
            })
            .collect();
        Ok(ParallelSentence { pinyin_words, hanzi_words })
    }

    pub fn validate(&self) -> Result<()> {
        if self.pinyin_words.len() != self.hanzi_words.len() {
            return Err(Error::LengthMismatch(format!(
                "{} pinyin words vs {} hanzi words",
                self.pinyin_words.len(),
                self.hanzi_words.len()
            )));
        }
        for (p, h) in self.pinyin_words.iter().zip(&self.hanzi_words) {
            let n = h.chars().count();
            if n == 0 || p.len() != n {
                return Err(Error::LengthMismatch(format!("word {h:?} has {} syllables", p.len())));
            }
        }
        Ok(())
    }

    pub fn syllables(&self) -> Vec<Syllable> {
        self.pinyin_words.iter().flatten().copied().collect()
    }

    pub fn hanzi(&self) -> String {
        self.hanzi_words.concat()
    }

    pub fn is_empty(&self) -> bool {
        self.hanzi_words.is_empty()
    }

    pub fn to_tsv_row(&self) -> String {
        let py: Vec<String> = self.pinyin_words.iter().map(|w| join_syllables(w)).collect();
        format!("{}\t{}", py.join(" "), self.hanzi_words.join(" "))
    }

    pub fn parse_tsv_row(row: &str) -> Result<Self> {
        let (py, hz) = row
            .split_once('\t')
            .ok_or_else(|| Error::LengthMismatch("expected <pinyin words>\\t<hanzi words>".to_string()))?;
        let pinyin_words = py.split(' ').filter(|w| !w.is_empty()).map(parse_syllables).collect::<Result<Vec<_>>>()?;
        let hanzi_words = hz.split(' ').filter(|w| !w.is_empty()).map(String::from).collect();
        ParallelSentence::new(pinyin_words, hanzi_words)
    }
}

/// Parses a whole parallel TSV file.
pub fn parse_parallel_tsv(text: &str) -> Result<Vec<ParallelSentence>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            ParallelSentence::parse_tsv_row(l.trim_end_matches('\r'))
                .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CorpusOptions {
    pub cjk: CjkRange,
    /// Longer sentences are split at MIU boundaries.
    pub max_words: usize,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions { cjk: CjkRange::default(), max_words: 60 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct CorpusStats {
    pub lines: usize,
    pub sentences: usize,
    pub mius: usize,
    pub skipped: usize,
}

/// Annotates and segments each MIU of `line` separately.
pub fn parallel_mius(line: &str, dict: &CharPinyinDict, vocab: &Vocabulary, cjk: CjkRange) -> Result<Vec<ParallelSentence>> {
    split_mius(line, cjk)
        .into_iter()
        .map(|m| {
            let py = annotate_pinyin(&m.text, dict, cjk).map_err(|e| match e {
                Error::UnknownChar { ch, offset } => Error::UnknownChar { ch, offset: offset + m.start },
                other => other,
            })?;
            ParallelSentence::segment(&py, &m.text, vocab)
        })
        .collect()
}

/// Converts one corpus line into parallel sentences: the line's MIUs are
/// concatenated, words never cross MIU boundaries, and the result is split
/// at MIU boundaries when it exceeds `max_words` words.
pub fn parallel_line(line: &str, dict: &CharPinyinDict, vocab: &Vocabulary, opts: CorpusOptions) -> Result<Vec<ParallelSentence>> {
    let mut out = Vec::new();
    let mut cur = ParallelSentence { pinyin_words: Vec::new(), hanzi_words: Vec::new() };
    for miu in parallel_mius(line, dict, vocab, opts.cjk)? {
        if !cur.is_empty() && cur.hanzi_words.len() + miu.hanzi_words.len() > opts.max_words {
            out.push(core::mem::replace(&mut cur, ParallelSentence { pinyin_words: Vec::new(), hanzi_words: Vec::new() }));
        }
        cur.pinyin_words.extend(miu.pinyin_words);
        cur.hanzi_words.extend(miu.hanzi_words);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

/// Builds the parallel corpus from hanzi lines. Lines that fail annotation
/// are skipped with a warning and counted.
pub fn build_parallel_corpus<'a, I>(
    lines: I,
    dict: &CharPinyinDict,
    vocab: &Vocabulary,
    opts: CorpusOptions,
) -> (Vec<ParallelSentence>, CorpusStats)
where
    I: IntoIterator<Item = &'a str>,
{
    let mut stats = CorpusStats::default();
    let mut out = Vec::new();
    for (i, line) in lines.into_iter().enumerate() {
        stats.lines += 1;
        match parallel_line(line, dict, vocab, opts) {
            Ok(sents) => {
                stats.mius += split_mius(line, opts.cjk).len();
                stats.sentences += sents.len();
                out.extend(sents);
            }
            Err(e) => {
                log::warn!("corpus line {}: {e}; skipped", i + 1);
                stats.skipped += 1;
            }
        }
    }
    (out, stats)
}

/// Turns a word list into vocabulary entries with frequency 0 (first-listed
/// pronunciations). Words with unknown characters are skipped and returned.
pub fn lexicon_entries<'a, I>(words: I, dict: &CharPinyinDict, cjk: CjkRange) -> (Vec<BilingualEntry>, Vec<String>)
where
    I: IntoIterator<Item = &'a str>,
{
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for w in words {
        let w = w.trim();
        if w.is_empty() {
            continue;
        }
        if !w.chars().all(|c| cjk.contains(c)) {
            bad.push(w.to_string());
            continue;
        }
        match annotate_pinyin(w, dict, cjk) {
            Ok(pinyin) => ok.push(BilingualEntry { pinyin, hanzi: w.to_string(), freq: 0, born: 0 }),
            Err(_) => bad.push(w.to_string()),
        }
    }
    (ok, bad)
}

/// Initial vocabulary: every lexicon entry plus every word of the segmented
/// corpus, with corpus occurrence counts as frequencies.
pub fn initial_vocabulary(sentences: &[ParallelSentence], lexicon: &[BilingualEntry]) -> Vocabulary {
    let mut v = Vocabulary::new();
    for e in lexicon {
        v.insert(e.clone()).expect("lexicon entries are aligned");
    }
    for s in sentences {
        for (p, h) in s.pinyin_words.iter().zip(&s.hanzi_words) {
            v.insert(BilingualEntry { pinyin: p.clone(), hanzi: h.clone(), freq: 1, born: 0 })
                .expect("parallel sentences are aligned");
        }
    }
    v
}
