//! MIU accuracy, keystroke scores and the analysis experiments that only
//! need the engine (the timed ones live in the `oime` crate).

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::ParallelSentence;
use crate::engine::{Engine, Input, SessionTurn};
use crate::model::{beam_search, DecodeOptions, Lexicon, Model};
use crate::pinyin::{letter_count, Syllable};
use crate::{Error, Real, Result};

/// Filter ratios of the word-table sweep.
pub const FILTER_RATIOS: [Real; 5] = [0.0, 0.3, 0.6, 0.9, 1.0];

/// Keep fractions of the pruning benchmark.
pub const KEEP_FRACTIONS: [Real; 4] = [1.0, 0.889, 0.75, 0.5];

/// One evaluated MIU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub pinyin: Vec<Syllable>,
    pub gold: String,
    /// Ranked candidate texts.
    pub candidates: Vec<String>,
}

impl EvalItem {
    pub fn new(pinyin: Vec<Syllable>, gold: String, candidates: Vec<String>) -> Result<Self> {
        if gold.chars().count() != pinyin.len() {
            return Err(Error::LengthMismatch(alloc::format!("{} syllables for gold {gold:?}", pinyin.len())));
        }
        Ok(EvalItem { pinyin, gold, candidates })
    }

    /// 1-based rank of the gold text.
    pub fn rank(&self) -> Option<usize> {
        self.candidates.iter().position(|c| *c == self.gold).map(|i| i + 1)
    }
}

/// Fraction of items whose gold text is among the first `k` candidates.
pub fn top_k_accuracy(items: &[EvalItem], k: usize) -> Result<Real> {
    if items.is_empty() {
        return Err(Error::Empty("evaluation items"));
    }
    if k == 0 {
        return Err(Error::Config(String::from("k must be at least 1")));
    }
    let hits = items.iter().filter(|it| it.rank().is_some_and(|r| r <= k)).count();
    Ok(hits as Real / items.len() as Real)
}

/// Keystroke model of a paged candidate window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KyssConfig {
    pub page_size: usize,
    pub selection_keystrokes: usize,
    pub page_turn_keystrokes: usize,
    /// Candidates reachable by paging; deeper ranks count as misses.
    pub max_candidates: usize,
}

impl Default for KyssConfig {
    fn default() -> Self {
        KyssConfig { page_size: 5, selection_keystrokes: 1, page_turn_keystrokes: 1, max_candidates: 10 }
    }
}

impl KyssConfig {
    /// Zero-based (page, index) at which a 1-based rank is displayed.
    pub fn position(&self, rank: usize) -> (usize, usize) {
        ((rank - 1) / self.page_size, (rank - 1) % self.page_size)
    }

    /// 1-based rank displayed at zero-based (page, index).
    pub fn rank_at(&self, page: usize, index: usize) -> usize {
        page * self.page_size + index + 1
    }

    /// Keystrokes to commit `item` (ideal, actual).
    pub fn keystrokes(&self, item: &EvalItem) -> (usize, usize) {
        let letters = letter_count(&item.pinyin);
        let ideal = letters + self.selection_keystrokes;
        let actual = match item.rank().filter(|&r| r <= self.max_candidates) {
            Some(r) => letters + self.position(r).0 * self.page_turn_keystrokes + self.selection_keystrokes,
            None => {
                // page to the end, give up, then type every character alone
                let paging = self.position(self.max_candidates.max(1)).0 * self.page_turn_keystrokes;
                let retype: usize = item.pinyin.iter().map(|s| s.len() + self.selection_keystrokes).sum();
                letters + paging + retype
            }
        };
        (ideal, actual)
    }
}

/// Mean of ideal over actual keystrokes; 1 for a converter that always
/// ranks the gold text first.
pub fn kyss(items: &[EvalItem], cfg: &KyssConfig) -> Result<Real> {
    if items.is_empty() {
        return Err(Error::Empty("evaluation items"));
    }
    if cfg.page_size == 0 {
        return Err(Error::Config(String::from("page_size must be at least 1")));
    }
    let total: Real = items
        .iter()
        .map(|it| {
            let (ideal, actual) = cfg.keystrokes(it);
            ideal as Real / actual as Real
        })
        .sum();
    Ok(total / items.len() as Real)
}

/// Decodes every sentence with a fixed model.
pub fn decode_items(model: &Model, lex: Lexicon<'_>, sentences: &[ParallelSentence], opts: &DecodeOptions) -> Result<Vec<EvalItem>> {
    sentences
        .iter()
        .map(|s| {
            let py = s.syllables();
            let cands = beam_search(model, &py, lex, opts)?;
            EvalItem::new(py, s.hanzi(), cands.into_iter().map(|c| c.text).collect())
        })
        .collect()
}

/// Top-1 accuracy of one group of an interlaced stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub group_index: usize,
    pub segment_label: String,
    pub segment_index: usize,
    pub top1: Real,
    pub vocab_size: usize,
}

/// Labelled corpus segment.
#[derive(Debug, Clone)]
pub struct Segment {
    pub label: String,
    pub items: Vec<ParallelSentence>,
}

/// Alternates `a` and `b` into `segments` pieces of as-equal-as-possible
/// size, starting with `a`.
pub fn interlace(a: &[ParallelSentence], b: &[ParallelSentence], segments_each: usize) -> Vec<Segment> {
    let pieces = |items: &[ParallelSentence], label: &str| -> Vec<Segment> {
        let n = segments_each.max(1);
        (0..n)
            .map(|i| Segment { label: String::from(label), items: items[i * items.len() / n..(i + 1) * items.len() / n].to_vec() })
            .collect()
    };
    let (pa, pb) = (pieces(a, "A"), pieces(b, "B"));
    pa.into_iter().zip(pb).flat_map(|(x, y)| [x, y]).collect()
}

/// Per-group accuracies and every turn of an interlaced run.
#[derive(Debug, Clone, PartialEq)]
pub struct InterlacedRun {
    pub groups: Vec<GroupResult>,
    pub turns: Vec<SessionTurn>,
}

/// Feeds the segments in order through `engine` with the gold reference as
/// the user's choice and records the top-1 accuracy (before learning from
/// each item) of every `group_size` consecutive items. Groups never span
/// segments.
pub fn interlaced_eval(engine: &mut Engine, segments: &[Segment], group_size: usize) -> Result<InterlacedRun> {
    if segments.len() < 2 {
        return Err(Error::Config(String::from("at least two segments are needed")));
    }
    if group_size == 0 {
        return Err(Error::Config(String::from("group_size must be at least 1")));
    }
    let mut out = Vec::new();
    let mut turns = Vec::new();
    for (si, seg) in segments.iter().enumerate() {
        for group in seg.items.chunks(group_size) {
            let mut hits = 0;
            for item in group {
                let conv = engine.convert(&Input::Syllables(item.syllables()))?;
                let gold = item.hanzi();
                hits += usize::from(conv.top1() == gold);
                turns.push(engine.submit_choice(&conv, &gold)?);
            }
            out.push(GroupResult {
                group_index: out.len(),
                segment_label: seg.label.clone(),
                segment_index: si,
                top1: hits as Real / group.len() as Real,
                vocab_size: engine.vocab().len(),
            });
        }
    }
    Ok(InterlacedRun { groups: out, turns })
}

/// Mean over switches into `label` segments of the mean of `online - frozen`
/// over the first `n` groups of that segment.
pub fn post_switch_gain(online: &[GroupResult], frozen: &[GroupResult], label: &str, n: usize) -> Result<Real> {
    if online.len() != frozen.len() {
        return Err(Error::LengthMismatch(alloc::format!("{} online groups, {} frozen groups", online.len(), frozen.len())));
    }
    let mut gains = Vec::new();
    for (i, g) in online.iter().enumerate() {
        let starts = g.segment_index > 0 && (i == 0 || online[i - 1].segment_index != g.segment_index);
        if !starts || g.segment_label != label {
            continue;
        }
        let groups: Vec<Real> = (i..online.len())
            .take_while(|&j| online[j].segment_index == g.segment_index)
            .take(n)
            .map(|j| online[j].top1 - frozen[j].top1)
            .collect();
        gains.push(groups.iter().sum::<Real>() / groups.len() as Real);
    }
    if gains.is_empty() {
        return Err(Error::Empty("switches into the requested segment"));
    }
    Ok(gains.iter().sum::<Real>() / gains.len() as Real)
}
