//! Arena-backed trie over ordered symbols plus the maximum-matching segmenter.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[derive(Debug, Clone)]
struct Node<K, V> {
    children: BTreeMap<K, u32>,
    value: Option<V>,
}

/// A trie from symbol sequences to values. Nodes are never removed; rebuild
/// the trie to drop keys.
#[derive(Debug, Clone)]
pub struct Trie<K, V> {
    nodes: Vec<Node<K, V>>,
    len: usize,
}

impl<K: Ord + Copy, V> Default for Trie<K, V> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K: Ord + Copy, V> Trie<K, V> {
    pub fn new() -> Self {
        Trie { nodes: alloc::vec![Node { children: BTreeMap::new(), value: None }], len: 0 }
    }

    /// Number of keys with a value.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Returns the value slot for `key`, creating the path as needed.
    pub fn entry(&mut self, key: &[K]) -> &mut Option<V> {
        let mut cur = 0usize;
        for k in key {
            cur = match self.nodes[cur].children.get(k) {
                Some(&next) => next as usize,
                None => {
                    let next = self.nodes.len();
                    self.nodes.push(Node { children: BTreeMap::new(), value: None });
                    self.nodes[cur].children.insert(*k, next as u32);
                    next
                }
            };
        }
        &mut self.nodes[cur].value
    }

    pub fn insert(&mut self, key: &[K], value: V) -> Option<V> {
        let old = self.entry(key).replace(value);
        if old.is_none() {
            self.len += 1;
        }
        old
    }

    /// Like [`entry`](Self::entry) but fills an empty slot with `V::default()`.
    pub fn get_or_insert_default(&mut self, key: &[K]) -> &mut V
    where
        V: Default,
    {
        let slot_was_empty = self.get(key).is_none();
        if slot_was_empty {
            self.len += 1;
        }
        self.entry(key).get_or_insert_with(V::default)
    }

    fn find(&self, key: &[K]) -> Option<usize> {
        let mut cur = 0usize;
        for k in key {
            cur = *self.nodes[cur].children.get(k)? as usize;
        }
        Some(cur)
    }

    pub fn get(&self, key: &[K]) -> Option<&V> {
        self.find(key).and_then(|n| self.nodes[n].value.as_ref())
    }

    pub fn get_mut(&mut self, key: &[K]) -> Option<&mut V> {
        let n = self.find(key)?;
        self.nodes[n].value.as_mut()
    }

    pub fn contains(&self, key: &[K]) -> bool {
        self.get(key).is_some()
    }

    /// Every `(length, value)` whose key is a prefix of `seq`, shortest first.
    pub fn prefixes<'a>(&'a self, seq: &'a [K]) -> impl Iterator<Item = (usize, &'a V)> + 'a {
        let mut cur = Some(0usize);
        let mut depth = 0usize;
        core::iter::from_fn(move || loop {
            let node = cur?;
            if depth >= seq.len() {
                cur = None;
                return None;
            }
            cur = self.nodes[node].children.get(&seq[depth]).map(|&n| n as usize);
            depth += 1;
            if let Some(n) = cur {
                if let Some(v) = &self.nodes[n].value {
                    return Some((depth, v));
                }
            }
        })
    }

    /// Length of the longest key that is a prefix of `seq`.
    pub fn longest_prefix(&self, seq: &[K]) -> Option<usize> {
        self.prefixes(seq).last().map(|(len, _)| len)
    }

    /// All `(key, value)` pairs in key order.
    pub fn iter(&self) -> Vec<(Vec<K>, &V)> {
        let mut out = Vec::with_capacity(self.len);
        let mut stack: Vec<(usize, Vec<K>)> = alloc::vec![(0, Vec::new())];
        while let Some((n, key)) = stack.pop() {
            if let Some(v) = &self.nodes[n].value {
                out.push((key.clone(), v));
            }
            for (k, &child) in self.nodes[n].children.iter().rev() {
                let mut next = key.clone();
                next.push(*k);
                stack.push((child as usize, next));
            }
        }
        out
    }

    /// True when every leaf node carries a value (no dangling paths).
    pub fn is_compact(&self) -> bool {
        self.nodes.iter().enumerate().all(|(i, n)| i == 0 || !n.children.is_empty() || n.value.is_some())
    }
}

/// Greedy left-to-right maximum matching. Positions with no match in the trie
/// become single-symbol words, so the output always concatenates back to
/// `seq`. Returns the word lengths.
pub fn max_match_lengths<K: Ord + Copy, V>(seq: &[K], trie: &Trie<K, V>) -> Vec<usize> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < seq.len() {
        let len = trie.longest_prefix(&seq[pos..]).unwrap_or(1);
        out.push(len);
        pos += len;
    }
    out
}

/// [`max_match_lengths`] materialized as word slices.
pub fn max_match_segment<'a, K: Ord + Copy, V>(seq: &'a [K], trie: &Trie<K, V>) -> Vec<&'a [K]> {
    let mut pos = 0;
    max_match_lengths(seq, trie)
        .into_iter()
        .map(|len| {
            let w = &seq[pos..pos + len];
            pos += len;
            w
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use alloc::vec;
    use proptest::prelude::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    fn trie_of(words: &[&str]) -> Trie<char, ()> {
        let mut t = Trie::new();
        for w in words {
            t.insert(&chars(w), ());
        }
        t
    }

    fn words(seq: &[char], t: &Trie<char, ()>) -> Vec<String> {
        max_match_segment(seq, t).into_iter().map(|w| w.iter().collect()).collect()
    }

    #[test]
    fn segments_table_example() {
        let t = trie_of(&["北京", "欢迎", "你", "北"]);
        assert_eq!(words(&chars("北京欢迎你"), &t), vec!["北京", "欢迎", "你"]);
    }

    #[test]
    fn single_unit_fallback() {
        let t = trie_of(&[]);
        assert_eq!(words(&chars("你"), &t), vec!["你"]);
        assert!(words(&[], &t).is_empty());
    }

    #[test]
    fn prefixes_and_iteration() {
        let t = trie_of(&["a", "abc", "b"]);
        let p: Vec<usize> = t.prefixes(&chars("abcd")).map(|(l, _)| l).collect();
        assert_eq!(p, vec![1, 3]);
        let keys: Vec<String> = t.iter().into_iter().map(|(k, _)| k.into_iter().collect()).collect();
        assert_eq!(keys, vec!["a", "abc", "b"]);
        assert_eq!(t.len(), 3);
        assert!(t.is_compact());
    }

    /// Independent oracle: at each position try every vocabulary word.
    fn brute_force(seq: &[u8], vocab: &[Vec<u8>]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < seq.len() {
            let best = vocab
                .iter()
                .filter(|w| !w.is_empty() && seq[pos..].starts_with(w))
                .map(Vec::len)
                .max()
                .unwrap_or(1);
            out.push(best);
            pos += best;
        }
        out
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            seq in proptest::collection::vec(0u8..5, 0..=8),
            vocab in proptest::collection::vec(proptest::collection::vec(0u8..5, 1..=4), 0..12),
        ) {
            let mut t: Trie<u8, ()> = Trie::new();
            for w in &vocab {
                t.insert(w, ());
            }
            let got = max_match_lengths(&seq, &t);
            prop_assert_eq!(got.iter().sum::<usize>(), seq.len());
            prop_assert_eq!(got, brute_force(&seq, &vocab));
        }
    }
}
