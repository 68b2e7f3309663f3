//! Lattice-constrained decoding.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::net::Noise;
use super::target::target_vocab_from;
use super::{Lexicon, Model, TargetVocab};
use crate::pinyin::Syllable;
use crate::tensor::{math, Graph, Tensor};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeOptions {
    pub beam: usize,
    pub top_k: usize,
    /// Fraction of the target vocabulary kept before decoding.
    pub keep_fraction: Real,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions { beam: 10, top_k: 10, keep_fraction: 1.0 }
    }
}

/// One conversion hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    /// Total log-probability.
    pub score: Real,
    pub words: Vec<String>,
    pub pinyin_words: Vec<Vec<Syllable>>,
}

/// Lattice edge: target-vocabulary index and syllable count.
#[derive(Debug, Clone, Copy)]
struct Edge {
    word: usize,
    len: usize,
}

/// Everything a search needs for one input.
struct Prepared {
    sylls: Vec<Syllable>,
    src_words: Vec<Vec<Syllable>>,
    tv: TargetVocab,
    edges: Vec<Vec<Edge>>,
}

fn prepare(sylls: &[Syllable], lex: Lexicon<'_>, keep_fraction: Real) -> Result<Prepared> {
    if sylls.is_empty() {
        return Err(Error::Empty("pinyin input"));
    }
    let cands: Vec<_> = (0..sylls.len()).map(|p| lex.vocab.candidates_for_prefix(&sylls[p..], lex.dict)).collect();
    if let Some(p) = cands.iter().position(|c| !c.iter().any(|e| e.len() == 1)) {
        return Err(Error::InvalidSyllable(String::from(sylls[p].as_str())));
    }
    let tv = target_vocab_from(&cands, lex.common, None, keep_fraction, lex.vocab);
    let edges = cands
        .iter()
        .map(|list| {
            let mut seen = BTreeSet::new();
            list.iter()
                .filter_map(|c| {
                    let word = tv.index_of(&c.hanzi)?;
                    seen.insert(word).then_some(Edge { word, len: c.len() })
                })
                .collect()
        })
        .collect();
    Ok(Prepared { sylls: sylls.to_vec(), src_words: lex.vocab.segment_pinyin(sylls), tv, edges })
}

#[derive(Debug, Clone)]
struct Hyp {
    cursor: usize,
    score: Real,
    words: Vec<usize>,
    lens: Vec<usize>,
    /// Row of the decoder state this hypothesis continues from.
    row: usize,
}

impl Hyp {
    fn finished(&self, n: usize) -> bool {
        self.cursor == n
    }
}

fn by_score(a: &Hyp, b: &Hyp) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.words.cmp(&b.words)).then_with(|| a.lens.cmp(&b.lens))
}

fn log_probs(logits: &Tensor, row: usize) -> Vec<Real> {
    let mut r = logits.row(row).to_vec();
    math::log_softmax_in_place(&mut r);
    r
}

fn finalize(p: &Prepared, mut hyps: Vec<Hyp>, top_k: usize) -> Vec<Candidate> {
    hyps.sort_by(by_score);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for h in hyps {
        let words: Vec<String> = h.words.iter().map(|&w| p.tv.words()[w].clone()).collect();
        let text: String = words.concat();
        if !seen.insert(text.clone()) {
            continue;
        }
        let mut pos = 0;
        let pinyin_words = h
            .lens
            .iter()
            .map(|&l| {
                pos += l;
                p.sylls[pos - l..pos].to_vec()
            })
            .collect();
        out.push(Candidate { text, score: h.score, words, pinyin_words });
        if out.len() == top_k {
            break;
        }
    }
    out
}

/// Beam search over the pinyin lattice. Finished hypotheses stay in the
/// beam until every entry is finished; results are deduplicated by text and
/// truncated to `top_k`.
pub fn beam_search(model: &Model, sylls: &[Syllable], lex: Lexicon<'_>, opts: &DecodeOptions) -> Result<Vec<Candidate>> {
    let p = prepare(sylls, lex, opts.keep_fraction)?;
    let n = p.sylls.len();
    let beam = opts.beam.max(1);
    let mut g = Graph::new(model.params());
    let mut noise = Noise::off();
    let enc = model.encode_words(&mut g, &p.src_words, &mut noise);
    let tgt = model.target_side(&mut g, p.tv.words());
    let mut state = model.decoder_start(&mut g, 1);
    let mut hyps = alloc::vec![Hyp { cursor: 0, score: 0.0, words: Vec::new(), lens: Vec::new(), row: 0 }];
    while hyps.iter().any(|h| !h.finished(n)) {
        let out = model.decoder_step(&mut g, &state, &enc, &mut noise);
        let logits = model.logits(&mut g, out.attentional, &tgt, &mut noise);
        let logits = g.value(logits).clone();
        let mut pool = Vec::new();
        for h in hyps {
            if h.finished(n) {
                pool.push(h);
                continue;
            }
            let lp = log_probs(&logits, h.row);
            for e in &p.edges[h.cursor] {
                let mut next = h.clone();
                next.cursor += e.len;
                next.score += lp[e.word];
                next.words.push(e.word);
                next.lens.push(e.len);
                pool.push(next);
            }
        }
        pool.sort_by(by_score);
        pool.truncate(beam);
        let live: Vec<usize> = (0..pool.len()).filter(|&i| !pool[i].finished(n)).collect();
        if !live.is_empty() {
            let parents: Vec<usize> = live.iter().map(|&i| pool[i].row).collect();
            let last: Vec<usize> = live.iter().map(|&i| *pool[i].words.last().unwrap()).collect();
            state = model.reorder(&mut g, &out.state, &parents);
            model.feed_words(&mut g, &mut state, &tgt, &last);
            for (row, &i) in live.iter().enumerate() {
                pool[i].row = row;
            }
        }
        hyps = pool;
    }
    Ok(finalize(&p, hyps, opts.top_k))
}

/// Best single hypothesis, choosing the locally best lattice edge at every
/// step.
pub fn greedy_search(model: &Model, sylls: &[Syllable], lex: Lexicon<'_>, keep_fraction: Real) -> Result<Candidate> {
    let p = prepare(sylls, lex, keep_fraction)?;
    let mut g = Graph::new(model.params());
    let mut noise = Noise::off();
    let enc = model.encode_words(&mut g, &p.src_words, &mut noise);
    let tgt = model.target_side(&mut g, p.tv.words());
    let mut state = model.decoder_start(&mut g, 1);
    let mut h = Hyp { cursor: 0, score: 0.0, words: Vec::new(), lens: Vec::new(), row: 0 };
    while !h.finished(p.sylls.len()) {
        let out = model.decoder_step(&mut g, &state, &enc, &mut noise);
        let logits = model.logits(&mut g, out.attentional, &tgt, &mut noise);
        let lp = log_probs(g.value(logits), 0);
        let best = p.edges[h.cursor]
            .iter()
            .map(|e| {
                let mut next = h.clone();
                next.cursor += e.len;
                next.score += lp[e.word];
                next.words.push(e.word);
                next.lens.push(e.len);
                next
            })
            .min_by(by_score)
            .expect("every position has an edge");
        state = out.state;
        model.feed_words(&mut g, &mut state, &tgt, &[*best.words.last().unwrap()]);
        h = best;
    }
    Ok(finalize(&p, alloc::vec![h], 1).remove(0))
}

/// Scores every complete lattice path with the same model computations as
/// [`beam_search`] and returns the `top_k` best distinct texts. Exponential
/// in the input length; a reference for short inputs.
pub fn exhaustive_search(model: &Model, sylls: &[Syllable], lex: Lexicon<'_>, opts: &DecodeOptions) -> Result<Vec<Candidate>> {
    let p = prepare(sylls, lex, opts.keep_fraction)?;
    let mut g = Graph::new(model.params());
    let mut noise = Noise::off();
    let enc = model.encode_words(&mut g, &p.src_words, &mut noise);
    let tgt = model.target_side(&mut g, p.tv.words());
    let start = model.decoder_start(&mut g, 1);
    let mut done = Vec::new();
    let mut stack = alloc::vec![(Hyp { cursor: 0, score: 0.0, words: Vec::new(), lens: Vec::new(), row: 0 }, start)];
    while let Some((h, state)) = stack.pop() {
        if h.finished(p.sylls.len()) {
            done.push(h);
            continue;
        }
        let out = model.decoder_step(&mut g, &state, &enc, &mut noise);
        let logits = model.logits(&mut g, out.attentional, &tgt, &mut noise);
        let lp = log_probs(g.value(logits), 0);
        for e in &p.edges[h.cursor] {
            let mut next = h.clone();
            next.cursor += e.len;
            next.score += lp[e.word];
            next.words.push(e.word);
            next.lens.push(e.len);
            let mut st = out.state.clone();
            model.feed_words(&mut g, &mut st, &tgt, &[e.word]);
            stack.push((next, st));
        }
    }
    Ok(finalize(&p, done, opts.top_k))
}

/// Number of complete paths through the lattice of `sylls`.
pub fn lattice_paths(sylls: &[Syllable], lex: Lexicon<'_>, keep_fraction: Real) -> Result<usize> {
    let p = prepare(sylls, lex, keep_fraction)?;
    let n = p.sylls.len();
    let mut count = alloc::vec![0usize; n + 1];
    count[n] = 1;
    for pos in (0..n).rev() {
        count[pos] = p.edges[pos].iter().map(|e| count[pos + e.len]).sum();
    }
    Ok(count[0])
}
