//! Pinyin syllables, the character-to-pinyin dictionary and MIU extraction.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::{Error, Result};

/// Longest legal toneless syllable ("zhuang", "shuang").
pub const MAX_SYLLABLE_LEN: usize = 6;

/// A toneless pinyin syllable: 1 to 6 lowercase ASCII letters, stored inline.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Syllable {
    bytes: [u8; MAX_SYLLABLE_LEN],
    len: u8,
}

impl Syllable {
    /// Checks the letter shape only; inventory membership is checked by
    /// [`SyllableInventory`].
    pub fn new(text: &str) -> Result<Self> {
        let raw = text.as_bytes();
        if raw.is_empty() || raw.len() > MAX_SYLLABLE_LEN || !raw.iter().all(u8::is_ascii_lowercase) {
            return Err(Error::InvalidSyllable(text.to_string()));
        }
        let mut bytes = [0u8; MAX_SYLLABLE_LEN];
        bytes[..raw.len()].copy_from_slice(raw);
        Ok(Syllable { bytes, len: raw.len() as u8 })
    }

    pub fn as_str(&self) -> &str {
        // Only ASCII letters are ever stored.
        core::str::from_utf8(&self.bytes[..self.len as usize]).unwrap()
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl FromStr for Syllable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Syllable::new(s)
    }
}

impl fmt::Display for Syllable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for Syllable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

impl serde::Serialize for Syllable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> serde::Deserialize<'de> for Syllable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = <String as serde::Deserialize>::deserialize(d)?;
        Syllable::new(&s).map_err(serde::de::Error::custom)
    }
}

/// Parses `"bei'jing"` or `"bei jing"` into syllables (shape check only).
pub fn parse_syllables(text: &str) -> Result<Vec<Syllable>> {
    text.split(|c: char| c == '\'' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(Syllable::new)
        .collect()
}

/// Joins syllables with `'`, the separator used by every file format here.
pub fn join_syllables(sylls: &[Syllable]) -> String {
    let mut out = String::new();
    for (i, s) in sylls.iter().enumerate() {
        if i > 0 {
            out.push('\'');
        }
        out.push_str(s.as_str());
    }
    out
}

/// Total letter count, i.e. the keystrokes needed to type the pinyin.
pub fn letter_count(sylls: &[Syllable]) -> usize {
    sylls.iter().map(Syllable::len).sum()
}

/// The set of legal syllables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SyllableInventory {
    set: BTreeSet<Syllable>,
}

impl SyllableInventory {
    /// One syllable per line; blank lines are ignored, duplicates collapse.
    pub fn parse(text: &str) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let syl = Syllable::new(line).map_err(|_| Error::Parse {
                line: i + 1,
                message: alloc::format!("malformed syllable {line:?} (expected 1-6 letters a-z)"),
            })?;
            set.insert(syl);
        }
        Ok(SyllableInventory { set })
    }

    pub fn from_syllables<I: IntoIterator<Item = Syllable>>(iter: I) -> Self {
        SyllableInventory { set: iter.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn contains(&self, s: &Syllable) -> bool {
        self.set.contains(s)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Syllable> {
        self.set.iter()
    }

    /// Validates a syllable string against the inventory.
    pub fn syllable(&self, text: &str) -> Result<Syllable> {
        let s = Syllable::new(text)?;
        if self.contains(&s) {
            Ok(s)
        } else {
            Err(Error::InvalidSyllable(text.to_string()))
        }
    }

    /// Splits raw pinyin letters into legal syllables.
    ///
    /// Apostrophes and spaces force a boundary. Inside each chunk the longest
    /// legal syllable is tried first, backing off to shorter ones only when
    /// the remainder cannot be segmented. The error offset is the furthest
    /// byte position no syllable could start from.
    pub fn segment_letters(&self, input: &str) -> Result<Vec<Syllable>> {
        let lower = input.to_ascii_lowercase();
        let bytes = lower.as_bytes();
        let mut out = Vec::new();
        let mut start = 0;
        let mut any = false;
        while start <= bytes.len() {
            let end = bytes[start..]
                .iter()
                .position(|&b| b == b'\'' || b == b' ')
                .map_or(bytes.len(), |p| start + p);
            if end > start {
                any = true;
                self.segment_chunk(&lower, start, end, &mut out)
                    .map_err(|offset| Error::Unsegmentable { input: input.to_string(), offset })?;
            }
            start = end + 1;
        }
        if !any {
            return Err(Error::Unsegmentable { input: input.to_string(), offset: 0 });
        }
        Ok(out)
    }

    fn segment_chunk(&self, text: &str, start: usize, end: usize, out: &mut Vec<Syllable>) -> core::result::Result<(), usize> {
        let bytes = text.as_bytes();
        // dead[i]: no segmentation of bytes[i..end] exists.
        let mut dead = alloc::vec![false; end - start + 1];
        let mut furthest = start;
        let mut path = Vec::new();
        if self.segment_from(bytes, start, end, start, &mut dead, &mut furthest, &mut path) {
            out.extend(path);
            Ok(())
        } else {
            Err(furthest)
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn segment_from(
        &self,
        bytes: &[u8],
        base: usize,
        end: usize,
        pos: usize,
        dead: &mut [bool],
        furthest: &mut usize,
        path: &mut Vec<Syllable>,
    ) -> bool {
        if pos == end {
            return true;
        }
        if dead[pos - base] {
            return false;
        }
        *furthest = (*furthest).max(pos);
        let max = MAX_SYLLABLE_LEN.min(end - pos);
        for len in (1..=max).rev() {
            let Ok(piece) = core::str::from_utf8(&bytes[pos..pos + len]) else { continue };
            let Ok(syl) = Syllable::new(piece) else { continue };
            if !self.contains(&syl) {
                continue;
            }
            path.push(syl);
            if self.segment_from(bytes, base, end, pos + len, dead, furthest, path) {
                return true;
            }
            path.pop();
        }
        dead[pos - base] = true;
        false
    }
}

/// Which code points count as Chinese characters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CjkRange {
    /// Also accept CJK Extension A (U+3400..U+4DBF).
    pub extension_a: bool,
}

impl CjkRange {
    pub fn contains(&self, c: char) -> bool {
        matches!(c, '\u{4E00}'..='\u{9FFF}') || (self.extension_a && matches!(c, '\u{3400}'..='\u{4DBF}'))
    }
}

/// Character to pronunciations, most frequent first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CharPinyinDict {
    map: BTreeMap<char, Vec<Syllable>>,
    // syllable -> characters in file order
    reverse: BTreeMap<Syllable, Vec<char>>,
}

impl CharPinyinDict {
    /// Parses `<character>\t<syllable>[ <syllable>...]` rows.
    pub fn parse(text: &str, inventory: &SyllableInventory) -> Result<Self> {
        let mut dict = CharPinyinDict::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let (ch, rest) = line.split_once('\t').ok_or_else(|| err("expected <character>\\t<syllables>".into()))?;
            let mut chars = ch.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(err(alloc::format!("expected a single character, got {ch:?}")));
            };
            let mut prons = Vec::new();
            for s in rest.split_whitespace() {
                let syl = inventory
                    .syllable(s)
                    .map_err(|_| err(alloc::format!("illegal syllable {s:?}")))?;
                if !prons.contains(&syl) {
                    prons.push(syl);
                }
            }
            if prons.is_empty() {
                return Err(err(alloc::format!("no pronunciation for {c:?}")));
            }
            dict.insert(c, prons);
        }
        Ok(dict)
    }

    /// Replaces any existing pronunciations of `c`.
    pub fn insert(&mut self, c: char, prons: Vec<Syllable>) {
        assert!(!prons.is_empty(), "a dictionary entry needs at least one pronunciation");
        if let Some(old) = self.map.remove(&c) {
            for s in old {
                if let Some(list) = self.reverse.get_mut(&s) {
                    list.retain(|&x| x != c);
                }
            }
        }
        for s in &prons {
            self.reverse.entry(*s).or_default().push(c);
        }
        self.map.insert(c, prons);
    }

    pub fn pronunciations(&self, c: char) -> Option<&[Syllable]> {
        self.map.get(&c).map(Vec::as_slice)
    }

    /// Characters that can be read as `s`, in dictionary order.
    pub fn chars_for(&self, s: &Syllable) -> &[char] {
        self.reverse.get(s).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.map.keys().copied()
    }

    /// Serializes back to the TSV form.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (c, prons) in &self.map {
            out.push(*c);
            out.push('\t');
            for (i, s) in prons.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(s.as_str());
            }
            out.push('\n');
        }
        out
    }
}

/// Annotates every Chinese character of `line` with its first-listed
/// pronunciation. Other characters are skipped.
pub fn annotate_pinyin(line: &str, dict: &CharPinyinDict, cjk: CjkRange) -> Result<Vec<Syllable>> {
    let mut out = Vec::new();
    for (offset, c) in line.chars().enumerate() {
        if !cjk.contains(c) {
            continue;
        }
        match dict.pronunciations(c) {
            Some(p) => out.push(p[0]),
            None => return Err(Error::UnknownChar { ch: c, offset }),
        }
    }
    Ok(out)
}

/// A maximal run of Chinese characters inside a line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Miu {
    pub text: String,
    /// Character offsets `[start, end)` into the source line.
    pub start: usize,
    pub end: usize,
}

pub fn split_mius(line: &str, cjk: CjkRange) -> Vec<Miu> {
    let mut out = Vec::new();
    let mut current: Option<Miu> = None;
    for (i, c) in line.chars().enumerate() {
        if cjk.contains(c) {
            let miu = current.get_or_insert_with(|| Miu { text: String::new(), start: i, end: i });
            miu.text.push(c);
            miu.end = i + 1;
        } else if let Some(m) = current.take() {
            out.push(m);
        }
    }
    out.extend(current);
    out
}

/// Number of characters in a Chinese string (not bytes).
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}
