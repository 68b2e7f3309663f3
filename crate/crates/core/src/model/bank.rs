//! Character-enhanced word embeddings.
//!
//! A bank composes a word vector from its units (syllables on the source
//! side, characters on the target side) with a one-layer bi-GRU, and
//! multiplies it by a word-table row when the word is frequent enough to own
//! one.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::pinyin::{join_syllables, parse_syllables, Syllable};
use crate::tensor::{uniform_tensor, Graph, ParamId, ParamStore, Rng, Tensor, Var, INIT_SCALE};
use crate::{Error, Real, Result};

/// An atomic input of a word: a syllable or a character.
pub trait Unit: Ord + Copy + core::fmt::Debug {
    fn to_text(&self) -> String;
    fn from_text(s: &str) -> Result<Self>;
    /// Splits a word into units.
    fn split_word(word: &str) -> Result<Vec<Self>>;
    fn join_word(units: &[Self]) -> String;
}

impl Unit for char {
    fn to_text(&self) -> String {
        self.to_string()
    }

    fn from_text(s: &str) -> Result<Self> {
        let mut it = s.chars();
        match (it.next(), it.next()) {
            (Some(c), None) => Ok(c),
            _ => Err(Error::Checkpoint(alloc::format!("bad character unit {s:?}"))),
        }
    }

    fn split_word(word: &str) -> Result<Vec<Self>> {
        Ok(word.chars().collect())
    }

    fn join_word(units: &[Self]) -> String {
        units.iter().collect()
    }
}

impl Unit for Syllable {
    fn to_text(&self) -> String {
        self.as_str().to_string()
    }

    fn from_text(s: &str) -> Result<Self> {
        Syllable::new(s)
    }

    fn split_word(word: &str) -> Result<Vec<Self>> {
        parse_syllables(word)
    }

    fn join_word(units: &[Self]) -> String {
        join_syllables(units)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GruParams {
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
}

/// Layout and parameter handles of one embedding bank. The parameters
/// themselves live in the model's [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Bank<U: Unit> {
    prefix: &'static str,
    /// Unit id 0 is the shared unknown unit.
    units: BTreeMap<U, usize>,
    unit_list: Vec<U>,
    words: BTreeMap<Vec<U>, usize>,
    word_list: Vec<Vec<U>>,
    embed_dim: usize,
    composer_hidden: usize,
    unit_table: ParamId,
    gru: [GruParams; 2],
    proj_w: ParamId,
    proj_b: ParamId,
    word_table: ParamId,
    bias: Option<ParamId>,
}

/// Dimensions shared by both banks.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BankDims {
    pub embed_dim: usize,
    pub composer_hidden: usize,
}

impl<U: Unit> Bank<U> {
    /// Registers freshly initialized parameters. Word-table rows start at
    /// `1 ± INIT_SCALE` so that a new model's CWE is close to its CE.
    pub(crate) fn new(
        prefix: &'static str,
        units: Vec<U>,
        frequent: Vec<Vec<U>>,
        with_bias: bool,
        dims: BankDims,
        params: &mut ParamStore,
        rng: &mut Rng,
    ) -> Self {
        let (ed, g) = (dims.embed_dim, dims.composer_hidden);
        let n_units = units.len() + 1;
        let n_words = frequent.len();
        let mut p = |name: &str, t: Tensor| params.add(alloc::format!("{prefix}.{name}"), t);
        let unit_table = p("unit", uniform_tensor(rng, n_units, ed, 0.0, INIT_SCALE));
        let mut gru = [None, None];
        for (d, dir) in ["f", "b"].iter().enumerate() {
            gru[d] = Some(GruParams {
                wx: p(&alloc::format!("gru.{dir}.wx"), uniform_tensor(rng, ed, 3 * g, 0.0, INIT_SCALE)),
                wh: p(&alloc::format!("gru.{dir}.wh"), uniform_tensor(rng, g, 3 * g, 0.0, INIT_SCALE)),
                b: p(&alloc::format!("gru.{dir}.b"), Tensor::zeros(1, 3 * g)),
            });
        }
        let proj_w = p("proj.w", uniform_tensor(rng, 2 * g, ed, 0.0, INIT_SCALE));
        let proj_b = p("proj.b", Tensor::zeros(1, ed));
        let word_table = p("word", uniform_tensor(rng, n_words, ed, 1.0, INIT_SCALE));
        let bias = with_bias.then(|| p("bias", Tensor::zeros(n_words, 1)));
        let gru = gru.map(Option::unwrap);
        Self::assemble(prefix, units, frequent, dims, unit_table, gru, proj_w, proj_b, word_table, bias)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        prefix: &'static str,
        unit_list: Vec<U>,
        word_list: Vec<Vec<U>>,
        dims: BankDims,
        unit_table: ParamId,
        gru: [GruParams; 2],
        proj_w: ParamId,
        proj_b: ParamId,
        word_table: ParamId,
        bias: Option<ParamId>,
    ) -> Self {
        let units = unit_list.iter().enumerate().map(|(i, &u)| (u, i + 1)).collect();
        let words = word_list.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Bank {
            prefix,
            units,
            unit_list,
            words,
            word_list,
            embed_dim: dims.embed_dim,
            composer_hidden: dims.composer_hidden,
            unit_table,
            gru,
            proj_w,
            proj_b,
            word_table,
            bias,
        }
    }

    /// Looks up the parameters of a bank in a loaded store and checks shapes.
    pub(crate) fn from_store(
        prefix: &'static str,
        unit_list: Vec<U>,
        word_list: Vec<Vec<U>>,
        with_bias: bool,
        dims: BankDims,
        params: &ParamStore,
    ) -> Result<Self> {
        let (ed, g) = (dims.embed_dim, dims.composer_hidden);
        let get = |name: &str, shape: [usize; 2]| -> Result<ParamId> {
            let full = alloc::format!("{prefix}.{name}");
            let id = params.id(&full).ok_or_else(|| Error::Checkpoint(alloc::format!("missing tensor {full}")))?;
            let actual = params.get(id).shape();
            if actual != shape {
                return Err(Error::Checkpoint(alloc::format!("tensor {full} has shape {actual:?}, expected {shape:?}")));
            }
            Ok(id)
        };
        let unit_table = get("unit", [unit_list.len() + 1, ed])?;
        let mut gru = Vec::new();
        for dir in ["f", "b"] {
            gru.push(GruParams {
                wx: get(&alloc::format!("gru.{dir}.wx"), [ed, 3 * g])?,
                wh: get(&alloc::format!("gru.{dir}.wh"), [g, 3 * g])?,
                b: get(&alloc::format!("gru.{dir}.b"), [1, 3 * g])?,
            });
        }
        let proj_w = get("proj.w", [2 * g, ed])?;
        let proj_b = get("proj.b", [1, ed])?;
        let word_table = get("word", [word_list.len(), ed])?;
        let bias = if with_bias { Some(get("bias", [word_list.len(), 1])?) } else { None };
        Ok(Self::assemble(prefix, unit_list, word_list, dims, unit_table, [gru[0], gru[1]], proj_w, proj_b, word_table, bias))
    }

    pub fn prefix(&self) -> &'static str {
        self.prefix
    }

    pub fn units(&self) -> &[U] {
        &self.unit_list
    }

    /// Words that own a word-table row, in row order.
    pub fn frequent_words(&self) -> &[Vec<U>] {
        &self.word_list
    }

    pub fn word_row(&self, word: &[U]) -> Option<usize> {
        self.words.get(word).copied()
    }

    pub fn unit_id(&self, u: U) -> usize {
        self.units.get(&u).copied().unwrap_or(0)
    }

    /// Replaces the frequent-word list. Rows of words that stay keep their
    /// values; new words start at all-ones (CWE == CE) with bias 0.
    pub(crate) fn refresh_words(&mut self, frequent: Vec<Vec<U>>, params: &mut ParamStore) {
        let ed = self.embed_dim;
        let old_table = params.get(self.word_table).clone();
        let old_bias = self.bias.map(|b| params.get(b).clone());
        let mut table = Tensor::full(frequent.len(), ed, 1.0);
        let mut bias = Tensor::zeros(frequent.len(), 1);
        for (i, w) in frequent.iter().enumerate() {
            if let Some(&old) = self.words.get(w) {
                table.row_mut(i).copy_from_slice(old_table.row(old));
                if let Some(ob) = &old_bias {
                    bias.row_mut(i)[0] = ob.get(old, 0);
                }
            }
        }
        params.set(self.word_table, table);
        if let Some(b) = self.bias {
            params.set(b, bias);
        }
        self.words = frequent.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        self.word_list = frequent;
    }

    /// Overwrites word-table rows from pre-trained vectors; returns how many
    /// rows were seeded.
    pub(crate) fn seed_rows(&self, vectors: &BTreeMap<String, Vec<Real>>, params: &mut ParamStore) -> usize {
        let table = params.get_mut(self.word_table);
        let mut n = 0;
        for (i, w) in self.word_list.iter().enumerate() {
            if let Some(v) = vectors.get(&U::join_word(w)) {
                if v.len() == table.cols() {
                    table.row_mut(i).copy_from_slice(v);
                    n += 1;
                }
            }
        }
        n
    }

    /// CWE rows for `words`, in order, as a `|words| x ED` node.
    pub(crate) fn cwe(&self, g: &mut Graph<'_>, words: &[Vec<U>]) -> Var {
        let ce = self.ce(g, words);
        let table = g.param(self.word_table);
        let ones = g.constant(Tensor::full(1, self.embed_dim, 1.0));
        let ext = g.concat_rows(&[table, ones]);
        let ids: Vec<usize> = words.iter().map(|w| self.word_row(w).unwrap_or(self.word_list.len())).collect();
        let we = g.gather(ext, &ids);
        g.mul(we, ce)
    }

    /// Output bias per word as a `|words| x 1` node; 0 for words without a row.
    pub(crate) fn bias_col(&self, g: &mut Graph<'_>, words: &[Vec<U>]) -> Option<Var> {
        let bias = g.param(self.bias?);
        let zero = g.constant(Tensor::zeros(1, 1));
        let ext = g.concat_rows(&[bias, zero]);
        let ids: Vec<usize> = words.iter().map(|w| self.word_row(w).unwrap_or(self.word_list.len())).collect();
        Some(g.gather(ext, &ids))
    }

    /// Character-level composition CE(w): final states of both GRU
    /// directions, projected to ED with tanh. Words of equal length share
    /// one batched pass.
    pub(crate) fn ce(&self, g: &mut Graph<'_>, words: &[Vec<U>]) -> Var {
        assert!(!words.is_empty(), "ce: no words");
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, w) in words.iter().enumerate() {
            groups.entry(w.len().max(1)).or_default().push(i);
        }
        let table = g.param(self.unit_table);
        let mut outs = Vec::new();
        let mut order = Vec::new();
        for (&len, members) in &groups {
            let n = members.len();
            // time-major unit ids: step t occupies rows t*n..(t+1)*n
            let mut ids = Vec::with_capacity(len * n);
            for t in 0..len {
                for &m in members {
                    ids.push(words[m].get(t).map_or(0, |&u| self.unit_id(u)));
                }
            }
            let x = g.gather(table, &ids);
            let fwd = self.gru_final(g, 0, x, len, n, false);
            let bwd = self.gru_final(g, 1, x, len, n, true);
            outs.push(g.concat_cols(&[fwd, bwd]));
            order.extend_from_slice(members);
        }
        let all = if outs.len() == 1 { outs[0] } else { g.concat_rows(&outs) };
        let w = g.param(self.proj_w);
        let b = g.param(self.proj_b);
        let z = g.matmul(all, w);
        let z = g.add(z, b);
        let ce = g.tanh(z);
        let mut inverse = alloc::vec![0; words.len()];
        for (row, &word) in order.iter().enumerate() {
            inverse[word] = row;
        }
        if inverse.iter().enumerate().all(|(i, &r)| i == r) {
            ce
        } else {
            g.gather(ce, &inverse)
        }
    }

    fn gru_final(&self, g: &mut Graph<'_>, dir: usize, x: Var, len: usize, n: usize, reverse: bool) -> Var {
        let hdim = self.composer_hidden;
        let p = self.gru[dir];
        let (wx, wh, b) = (g.param(p.wx), g.param(p.wh), g.param(p.b));
        let xw = g.matmul(x, wx);
        let xw = g.add(xw, b);
        let mut h: Option<Var> = None;
        for step in 0..len {
            let t = if reverse { len - 1 - step } else { step };
            let xt = g.slice_rows(xw, t * n, n);
            let (xz, xr, xn) = (g.slice_cols(xt, 0, hdim), g.slice_cols(xt, hdim, hdim), g.slice_cols(xt, 2 * hdim, hdim));
            h = Some(match h {
                None => {
                    // h_prev = 0: h = (1 - z) * n
                    let z = g.sigmoid(xz);
                    let nn = g.tanh(xn);
                    let zn = g.mul(z, nn);
                    g.sub(nn, zn)
                }
                Some(hp) => {
                    let hw = g.matmul(hp, wh);
                    let (hz, hr, hn) = (g.slice_cols(hw, 0, hdim), g.slice_cols(hw, hdim, hdim), g.slice_cols(hw, 2 * hdim, hdim));
                    let z = g.add(xz, hz);
                    let z = g.sigmoid(z);
                    let r = g.add(xr, hr);
                    let r = g.sigmoid(r);
                    let rh = g.mul(r, hn);
                    let nn = g.add(xn, rh);
                    let nn = g.tanh(nn);
                    let d = g.sub(hp, nn);
                    let zd = g.mul(z, d);
                    g.add(nn, zd)
                }
            });
        }
        h.expect("len >= 1")
    }
}
