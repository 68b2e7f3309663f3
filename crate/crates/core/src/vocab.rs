//! The adaptive pinyin/hanzi bilingual vocabulary.
//!
//! Entries are `(pinyin word, hanzi word)` pairs with a frequency and the turn
//! that created them. Two tries index the entries: one keyed by syllable
//! sequences (for lattice construction and candidate lookup) and one keyed by
//! characters (for segmenting user text).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::pinyin::{join_syllables, parse_syllables, CharPinyinDict, Syllable};
use crate::trie::{max_match_lengths, Trie};
use crate::{Error, Result};

/// Longest word the online updater will add.
pub const MAX_NEW_WORD_LEN: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BilingualEntry {
    pub pinyin: Vec<Syllable>,
    pub hanzi: String,
    pub freq: u64,
    /// Turn that added the entry; 0 for the initial vocabulary.
    pub born: u64,
}

impl BilingualEntry {
    pub fn len(&self) -> usize {
        self.pinyin.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pinyin.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Stats {
    freq: u64,
    born: u64,
}

type Key = (Vec<Syllable>, String);

/// Result of one run of the online vocabulary updater.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct UpdateReport {
    pub added: Vec<BilingualEntry>,
    pub examined_ngrams: usize,
    pub turn: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    entries: BTreeMap<Key, Stats>,
    // candidate hanzi per pinyin word, sorted by freq desc then hanzi
    pinyin_trie: Trie<Syllable, Vec<String>>,
    // pinyin readings per hanzi word
    hanzi_trie: Trie<char, Vec<Vec<Syllable>>>,
    // frequency summed over readings, per hanzi word
    hanzi_totals: BTreeMap<String, u64>,
    max_size: Option<usize>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Eq for Vocabulary {}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries<I: IntoIterator<Item = BilingualEntry>>(iter: I) -> Result<Self> {
        let mut v = Vocabulary::new();
        for e in iter {
            v.insert(e)?;
        }
        Ok(v)
    }

    /// Caps the entry count; when exceeded, the lowest `(freq, born)` entries
    /// are evicted after each update. `None` (the default) never evicts.
    pub fn set_max_size(&mut self, max: Option<usize>) {
        self.max_size = max;
        self.enforce_max_size(u64::MAX);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, pinyin: &[Syllable], hanzi: &str) -> bool {
        self.entries.contains_key(&(pinyin.to_vec(), hanzi.to_string()))
    }

    pub fn get(&self, pinyin: &[Syllable], hanzi: &str) -> Option<BilingualEntry> {
        let key = (pinyin.to_vec(), hanzi.to_string());
        self.entries.get(&key).map(|s| entry(&key, s))
    }

    /// Entries ordered by `(pinyin, hanzi)`.
    pub fn entries(&self) -> impl Iterator<Item = BilingualEntry> + '_ {
        self.entries.iter().map(|(k, s)| entry(k, s))
    }

    pub fn pinyin_trie(&self) -> &Trie<Syllable, Vec<String>> {
        &self.pinyin_trie
    }

    pub fn hanzi_trie(&self) -> &Trie<char, Vec<Vec<Syllable>>> {
        &self.hanzi_trie
    }

    /// Inserts a new entry; if the pair exists its frequency is increased by
    /// `e.freq` instead. Returns true when the pair was new.
    pub fn insert(&mut self, e: BilingualEntry) -> Result<bool> {
        let n = e.hanzi.chars().count();
        if e.pinyin.is_empty() || n != e.pinyin.len() {
            return Err(Error::LengthMismatch(format!(
                "entry {:?} has {} syllables for {} characters",
                e.hanzi,
                e.pinyin.len(),
                n
            )));
        }
        let key = (e.pinyin, e.hanzi);
        *self.hanzi_totals.entry(key.1.clone()).or_default() += e.freq;
        if let Some(stats) = self.entries.get_mut(&key) {
            stats.freq += e.freq;
            self.resort(&key.0);
            return Ok(false);
        }
        let chars: Vec<char> = key.1.chars().collect();
        self.hanzi_trie.get_or_insert_default(&chars).push(key.0.clone());
        self.pinyin_trie.get_or_insert_default(&key.0).push(key.1.clone());
        self.entries.insert(key.clone(), Stats { freq: e.freq, born: e.born });
        self.resort(&key.0);
        Ok(true)
    }

    fn resort(&mut self, pinyin: &[Syllable]) {
        let entries = &self.entries;
        if let Some(list) = self.pinyin_trie.get_mut(pinyin) {
            let freq = |h: &String| entries.get(&(pinyin.to_vec(), h.clone())).map_or(0, |s| s.freq);
            list.sort_by(|a, b| freq(b).cmp(&freq(a)).then_with(|| a.cmp(b)));
        }
    }

    /// Adds one to the frequency of an existing pair.
    pub fn bump(&mut self, pinyin: &[Syllable], hanzi: &str) -> bool {
        let key = (pinyin.to_vec(), hanzi.to_string());
        match self.entries.get_mut(&key) {
            Some(s) => {
                s.freq += 1;
                *self.hanzi_totals.entry(key.1).or_default() += 1;
                self.resort(pinyin);
                true
            }
            None => false,
        }
    }

    /// Sum of frequencies over every reading of `hanzi`.
    pub fn hanzi_freq(&self, hanzi: &str) -> u64 {
        self.hanzi_totals.get(hanzi).copied().unwrap_or(0)
    }

    /// Distinct hanzi words by total frequency (desc), ties by hanzi.
    pub fn words_by_freq(&self) -> Vec<(String, u64)> {
        let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
        for ((_, h), s) in &self.entries {
            *totals.entry(h.as_str()).or_default() += s.freq;
        }
        let mut out: Vec<(String, u64)> = totals.into_iter().map(|(h, f)| (h.to_string(), f)).collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    /// Distinct pinyin words by total frequency (desc), ties by pinyin.
    pub fn pinyin_words_by_freq(&self) -> Vec<(Vec<Syllable>, u64)> {
        let mut totals: BTreeMap<&[Syllable], u64> = BTreeMap::new();
        for ((p, _), s) in &self.entries {
            *totals.entry(p.as_slice()).or_default() += s.freq;
        }
        let mut out: Vec<(Vec<Syllable>, u64)> = totals.into_iter().map(|(p, f)| (p.to_vec(), f)).collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    /// Maximum-matching segmentation of a hanzi string.
    pub fn segment_hanzi(&self, text: &str) -> Vec<String> {
        let chars: Vec<char> = text.chars().collect();
        let mut pos = 0;
        max_match_lengths(&chars, &self.hanzi_trie)
            .into_iter()
            .map(|len| {
                let w: String = chars[pos..pos + len].iter().collect();
                pos += len;
                w
            })
            .collect()
    }

    /// Maximum-matching segmentation of a syllable sequence into pinyin words.
    pub fn segment_pinyin(&self, sylls: &[Syllable]) -> Vec<Vec<Syllable>> {
        let mut pos = 0;
        max_match_lengths(sylls, &self.pinyin_trie)
            .into_iter()
            .map(|len| {
                let w = sylls[pos..pos + len].to_vec();
                pos += len;
                w
            })
            .collect()
    }

    /// Candidate words whose pinyin is a prefix of `remaining`, longest
    /// first, then by frequency. Dictionary characters for `remaining[0]`
    /// that are not already listed follow as frequency-0 fallbacks.
    pub fn candidates_for_prefix(&self, remaining: &[Syllable], dict: &CharPinyinDict) -> Vec<BilingualEntry> {
        let mut out = Vec::new();
        for (len, list) in self.pinyin_trie.prefixes(remaining) {
            let pinyin = &remaining[..len];
            for h in list {
                let key = (pinyin.to_vec(), h.clone());
                if let Some(s) = self.entries.get(&key) {
                    out.push(entry(&key, s));
                }
            }
        }
        out.sort_by(|a, b| {
            b.len()
                .cmp(&a.len())
                .then_with(|| b.freq.cmp(&a.freq))
                .then_with(|| a.hanzi.cmp(&b.hanzi))
        });
        if let Some(first) = remaining.first() {
            for &c in dict.chars_for(first) {
                let mut buf = [0u8; 4];
                let h = c.encode_utf8(&mut buf);
                if !out.iter().any(|e| e.len() == 1 && e.hanzi == *h) {
                    out.push(BilingualEntry { pinyin: alloc::vec![*first], hanzi: h.to_string(), freq: 0, born: 0 });
                }
            }
        }
        out
    }

    /// Online vocabulary update from one IME turn.
    ///
    /// `cm` is the converter's top-1 output and `cu` the user's choice for
    /// the syllables `py`. Every window of `cu` (longest first, length 6 down
    /// to 2) whose first and last characters both differ from `cm` is a
    /// mismatch; mismatches not inside an earlier mismatch window of this call
    /// are added with frequency 1 when absent. Words of `cu`'s maximum-matching
    /// segmentation that already exist get their frequency bumped.
    pub fn update(&mut self, py: &[Syllable], cm: &str, cu: &str, turn: u64) -> Result<UpdateReport> {
        let cm: Vec<char> = cm.chars().collect();
        let cu: Vec<char> = cu.chars().collect();
        if py.len() != cm.len() || py.len() != cu.len() {
            return Err(Error::LengthMismatch(format!(
                "pinyin has {} syllables, prediction {} characters, choice {} characters",
                py.len(),
                cm.len(),
                cu.len()
            )));
        }
        let mut report = UpdateReport { turn, ..UpdateReport::default() };

        // frequency bumps use the segmentation before any additions
        let mut pos = 0;
        for len in max_match_lengths(&cu, &self.hanzi_trie) {
            let w: String = cu[pos..pos + len].iter().collect();
            self.bump(&py[pos..pos + len], &w);
            pos += len;
        }

        let mismatch: Vec<bool> = cu.iter().zip(&cm).map(|(a, b)| a != b).collect();
        if mismatch.iter().any(|&m| m) {
            let mut covered: Vec<(usize, usize)> = Vec::new();
            for n in (2..=MAX_NEW_WORD_LEN.min(cu.len())).rev() {
                for start in 0..=cu.len() - n {
                    let end = start + n; // exclusive
                    report.examined_ngrams += 1;
                    if !(mismatch[start] && mismatch[end - 1]) {
                        continue;
                    }
                    if covered.iter().any(|&(s, e)| s <= start && end <= e) {
                        continue;
                    }
                    covered.push((start, end));
                    let hanzi: String = cu[start..end].iter().collect();
                    let pinyin = py[start..end].to_vec();
                    if !self.contains(&pinyin, &hanzi) {
                        let e = BilingualEntry { pinyin, hanzi, freq: 1, born: turn };
                        self.insert(e.clone())?;
                        report.added.push(e);
                    }
                }
            }
        }
        self.enforce_max_size(turn);
        Ok(report)
    }

    fn enforce_max_size(&mut self, protect_turn: u64) {
        let Some(max) = self.max_size else { return };
        if self.entries.len() <= max {
            return;
        }
        let mut order: Vec<(u64, u64, Key)> = self
            .entries
            .iter()
            .filter(|(_, s)| s.born != protect_turn)
            .map(|(k, s)| (s.freq, s.born, k.clone()))
            .collect();
        order.sort();
        let excess = self.entries.len() - max;
        let evict: BTreeSet<Key> = order.into_iter().take(excess).map(|(_, _, k)| k).collect();
        let kept: Vec<BilingualEntry> = self
            .entries
            .iter()
            .filter(|(k, _)| !evict.contains(*k))
            .map(|(k, s)| entry(k, s))
            .collect();
        let max_size = self.max_size;
        *self = Vocabulary::from_entries(kept).expect("entries were valid when first inserted");
        self.max_size = max_size;
    }

    /// Checks that the tries and the entry set agree and every candidate
    /// list is sorted.
    pub fn is_consistent(&self) -> bool {
        if self.pinyin_trie.len() > self.entries.len() || self.hanzi_trie.len() > self.entries.len() {
            return false;
        }
        let mut from_pinyin = 0;
        for (p, list) in self.pinyin_trie.iter() {
            for w in list.windows(2) {
                let fa = self.entries.get(&(p.clone(), w[0].clone())).map(|s| s.freq);
                let fb = self.entries.get(&(p.clone(), w[1].clone())).map(|s| s.freq);
                if fa < fb || (fa == fb && w[0] >= w[1]) {
                    return false;
                }
            }
            for h in list {
                if !self.entries.contains_key(&(p.clone(), h.clone())) {
                    return false;
                }
                from_pinyin += 1;
            }
        }
        let mut from_hanzi = 0;
        for (chars, readings) in self.hanzi_trie.iter() {
            let h: String = chars.into_iter().collect();
            for p in readings {
                if !self.entries.contains_key(&(p.clone(), h.clone())) {
                    return false;
                }
                from_hanzi += 1;
            }
        }
        let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
        for ((_, h), st) in &self.entries {
            *totals.entry(h.as_str()).or_default() += st.freq;
        }
        let totals_agree = totals.len() == self.hanzi_totals.len() && totals.iter().all(|(h, f)| self.hanzi_totals.get(*h) == Some(f));
        from_pinyin == self.entries.len()
            && from_hanzi == self.entries.len()
            && totals_agree
            && self.pinyin_trie.is_compact()
            && self.hanzi_trie.is_compact()
    }

    /// TSV rows `<syllables joined by '>\t<hanzi>\t<freq>\t<born>`, sorted by
    /// hanzi then pinyin.
    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<(&String, &Vec<Syllable>, &Stats)> =
            self.entries.iter().map(|((p, h), s)| (h, p, s)).collect();
        rows.sort_by(|a, b| a.0.cmp(b.0).then_with(|| a.1.cmp(b.1)));
        let mut out = String::new();
        for (h, p, s) in rows {
            out.push_str(&join_syllables(p));
            out.push('\t');
            out.push_str(h);
            out.push_str(&format!("\t{}\t{}\n", s.freq, s.born));
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut v = Vocabulary::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(err(format!("expected 4 tab-separated columns, found {}", cols.len())));
            }
            let pinyin = parse_syllables(cols[0]).map_err(|e| err(e.to_string()))?;
            let freq = cols[2].parse().map_err(|_| err(format!("bad frequency {:?}", cols[2])))?;
            let born = cols[3].parse().map_err(|_| err(format!("bad birth turn {:?}", cols[3])))?;
            let e = BilingualEntry { pinyin, hanzi: cols[1].to_string(), freq, born };
            if !v.insert(e).map_err(|e| err(e.to_string()))? {
                return Err(err(format!("duplicate entry {:?}", cols[1])));
            }
        }
        Ok(v)
    }
}

fn entry(key: &Key, s: &Stats) -> BilingualEntry {
    BilingualEntry { pinyin: key.0.clone(), hanzi: key.1.clone(), freq: s.freq, born: s.born }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pinyin::SyllableInventory;
    use alloc::vec;
    use proptest::prelude::*;

    fn syls(s: &str) -> Vec<Syllable> {
        parse_syllables(s).unwrap()
    }

    fn e(p: &str, h: &str, freq: u64) -> BilingualEntry {
        BilingualEntry { pinyin: syls(p), hanzi: h.into(), freq, born: 0 }
    }

    fn hanzi(list: &[BilingualEntry]) -> Vec<&str> {
        list.iter().map(|e| e.hanzi.as_str()).collect()
    }

    fn table_dict() -> CharPinyinDict {
        let inv = SyllableInventory::from_syllables(syls("bei jing huan ying ni"));
        CharPinyinDict::parse(
            "被\tbei\n北\tbei\n杯\tbei\n背\tbei\n京\tjing\n景\tjing\n欢\thuan\n幻\thuan\n迎\tying\n影\tying\n你\tni\n尼\tni\n",
            &inv,
        )
        .unwrap()
    }

    #[test]
    fn adds_mismatching_word() {
        let mut v = Vocabulary::new();
        let r = v.update(&syls("bei jing"), "背景", "北京", 1).unwrap();
        assert_eq!(r.added, vec![BilingualEntry { pinyin: syls("bei jing"), hanzi: "北京".into(), freq: 1, born: 1 }]);
        assert!(v.contains(&syls("bei jing"), "北京"));
        assert!(v.is_consistent());
    }

    #[test]
    fn agreement_adds_nothing() {
        let mut v = Vocabulary::from_entries([e("bei jing", "背景", 3)]).unwrap();
        let r = v.update(&syls("bei jing"), "背景", "背景", 1).unwrap();
        assert!(r.added.is_empty());
        assert_eq!(v.get(&syls("bei jing"), "背景").unwrap().freq, 4);
    }

    #[test]
    fn endpoint_match_rejects_window() {
        let mut v = Vocabulary::new();
        let r = v.update(&syls("bei jing huan ying ni"), "背景欢迎你", "北京欢迎你", 2).unwrap();
        assert_eq!(hanzi(&r.added), vec!["北京"]);
        // windows of length 5..2 over 5 characters
        assert_eq!(r.examined_ngrams, 1 + 2 + 3 + 4);
    }

    #[test]
    fn interior_match_allowed_and_subwindows_suppressed() {
        let mut v = Vocabulary::new();
        // positions 0,1,3 differ; 2 matches
        let r = v.update(&syls("a b c d"), "甲乙丙丁", "子丑丙卯", 1).unwrap();
        assert_eq!(hanzi(&r.added), vec!["子丑丙卯"]);
        let again = v.update(&syls("a b c d"), "甲乙丙丁", "子丑丙卯", 2).unwrap();
        assert!(again.added.is_empty());
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mut v = Vocabulary::new();
        assert!(matches!(v.update(&syls("bei"), "背景", "北京", 1), Err(Error::LengthMismatch(_))));
        assert!(v.is_empty());
    }

    #[test]
    fn candidates_table_example() {
        let v = Vocabulary::from_entries([e("bei jing", "北京", 5), e("bei jing", "背景", 2), e("bei", "北", 1)]).unwrap();
        let c = v.candidates_for_prefix(&syls("bei jing huan ying ni"), &table_dict());
        assert_eq!(hanzi(&c), vec!["北京", "背景", "北", "被", "杯", "背"]);
        assert!(c.iter().all(|e| syls("bei jing huan ying ni").starts_with(&e.pinyin)));
    }

    #[test]
    fn candidates_by_frequency() {
        let v = Vocabulary::from_entries([e("ni", "尼", 1), e("ni", "你", 9)]).unwrap();
        assert_eq!(hanzi(&v.candidates_for_prefix(&syls("ni"), &table_dict())), vec!["你", "尼"]);
    }

    #[test]
    fn candidates_empty_vocab_is_dictionary_fallback() {
        let dict = table_dict();
        for s in ["bei", "jing", "ni"] {
            let c = Vocabulary::new().candidates_for_prefix(&syls(s), &dict);
            let expected: Vec<String> = dict.chars_for(&syls(s)[0]).iter().map(|c| c.to_string()).collect();
            assert_eq!(hanzi(&c), expected.iter().map(String::as_str).collect::<Vec<_>>());
            assert!(c.iter().all(|e| e.freq == 0));
        }
    }

    #[test]
    fn tsv_round_trip() {
        let mut v = Vocabulary::from_entries([e("bei jing", "北京", 5), e("ni", "你", 9), e("bei", "北", 1)]).unwrap();
        v.update(&syls("huan ying"), "幻影", "欢迎", 4).unwrap();
        let text = v.to_tsv();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(Vocabulary::parse_tsv(&text).unwrap(), v);
        assert!(Vocabulary::parse_tsv("").unwrap().is_empty());
        assert_eq!(Vocabulary::new().to_tsv(), "");
    }

    #[test]
    fn tsv_rejects_malformed_rows() {
        assert!(matches!(Vocabulary::parse_tsv("bei'jing\t北\t1\t0\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(Vocabulary::parse_tsv("ni\t你\t1\t0\nni\t你\tx\t0\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(Vocabulary::parse_tsv("ni\t你\t1\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn eviction_drops_lowest() {
        let mut v = Vocabulary::from_entries([e("ni", "你", 9), e("ni", "尼", 1), e("bei", "北", 5)]).unwrap();
        v.set_max_size(Some(2));
        assert_eq!(v.len(), 2);
        assert!(!v.contains(&syls("ni"), "尼"));
        assert!(v.is_consistent());
        v.update(&syls("bei jing"), "背景", "北京", 3).unwrap();
        assert!(v.contains(&syls("bei jing"), "北京"));
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn segmentation_with_vocab() {
        let v = Vocabulary::from_entries([e("bei jing", "北京", 1), e("huan ying", "欢迎", 1), e("ni", "你", 1), e("bei", "北", 1)])
            .unwrap();
        assert_eq!(v.segment_hanzi("北京欢迎你"), vec!["北京", "欢迎", "你"]);
        assert_eq!(v.segment_pinyin(&syls("bei jing ni")), vec![syls("bei jing"), syls("ni")]);
    }

    const CJK: &[char] = &['甲', '乙', '丙', '丁', '戊'];

    fn arb_turn() -> impl Strategy<Value = (Vec<Syllable>, String, String)> {
        (1usize..9).prop_flat_map(|n| {
            (
                proptest::collection::vec(0usize..CJK.len(), n),
                proptest::collection::vec(0usize..CJK.len(), n),
            )
                .prop_map(move |(a, b)| {
                    let py = (0..n).map(|_| Syllable::new("a").unwrap()).collect();
                    (py, a.iter().map(|&i| CJK[i]).collect(), b.iter().map(|&i| CJK[i]).collect())
                })
        })
    }

    proptest! {
        #[test]
        fn update_properties(turns in proptest::collection::vec(arb_turn(), 1..6)) {
            let mut v = Vocabulary::new();
            for (t, (py, cm, cu)) in turns.iter().enumerate() {
                let before = v.len();
                let r = v.update(py, cm, cu, t as u64 + 1).unwrap();
                prop_assert!(v.len() >= before);
                prop_assert_eq!(v.len(), before + r.added.len());
                let cmv: Vec<char> = cm.chars().collect();
                let cuv: Vec<char> = cu.chars().collect();
                for a in &r.added {
                    prop_assert!((2..=MAX_NEW_WORD_LEN).contains(&a.len()));
                    // locate the window that produced it
                    let n = a.len();
                    let ok = (0..=cuv.len() - n).any(|s| {
                        cuv[s..s + n].iter().collect::<String>() == a.hanzi
                            && cuv[s] != cmv[s]
                            && cuv[s + n - 1] != cmv[s + n - 1]
                    });
                    prop_assert!(ok);
                }
                let again = v.update(py, cm, cu, t as u64 + 1).unwrap();
                prop_assert!(again.added.is_empty());
                prop_assert!(v.is_consistent());
            }
        }
    }
}
