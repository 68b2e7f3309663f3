//! Encoder, attention decoder and the per-sentence computations shared by
//! training and decoding.

use alloc::string::String;
use alloc::vec::Vec;

use super::{Model, ModelConfig, TargetVocab};
use crate::pinyin::Syllable;
use crate::tensor::{math, uniform_tensor, Graph, ParamId, ParamStore, Rng, Tensor, Var, INIT_SCALE};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy)]
struct LstmParams {
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
pub(crate) struct NetParams {
    enc: Vec<[LstmParams; 2]>,
    dec: Vec<LstmParams>,
    bos: ParamId,
    wa: ParamId,
    wc: ParamId,
}

fn lstm_bias(hidden: usize) -> Tensor {
    let mut b = Tensor::zeros(1, 4 * hidden);
    // forget gate starts open
    b.data_mut()[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
    b
}

impl NetParams {
    fn shapes(cfg: &ModelConfig) -> Vec<(String, [usize; 2])> {
        let (h, ed) = (cfg.hidden, cfg.embed_dim);
        let mut out = Vec::new();
        for l in 0..cfg.layers {
            let input = if l == 0 { ed } else { 2 * h };
            for dir in ["f", "b"] {
                out.push((alloc::format!("enc.l{l}.{dir}.wx"), [input, 4 * h]));
                out.push((alloc::format!("enc.l{l}.{dir}.wh"), [h, 4 * h]));
                out.push((alloc::format!("enc.l{l}.{dir}.b"), [1, 4 * h]));
            }
        }
        for l in 0..cfg.layers {
            let input = if l == 0 { 2 * ed } else { h };
            out.push((alloc::format!("dec.l{l}.wx"), [input, 4 * h]));
            out.push((alloc::format!("dec.l{l}.wh"), [h, 4 * h]));
            out.push((alloc::format!("dec.l{l}.b"), [1, 4 * h]));
        }
        out.push((String::from("dec.bos"), [1, ed]));
        out.push((String::from("attn.wa"), [h, 2 * h]));
        out.push((String::from("attn.wc"), [3 * h, ed]));
        out
    }

    pub(crate) fn new(cfg: &ModelConfig, params: &mut ParamStore, rng: &mut Rng) -> Self {
        let mut ids = Vec::new();
        for (name, [r, c]) in Self::shapes(cfg) {
            let t = if name.ends_with(".b") { lstm_bias(cfg.hidden) } else { uniform_tensor(rng, r, c, 0.0, INIT_SCALE) };
            ids.push(params.add(name, t));
        }
        Self::from_ids(cfg, &ids)
    }

    pub(crate) fn from_store(cfg: &ModelConfig, params: &ParamStore) -> Result<Self> {
        let mut ids = Vec::new();
        for (name, shape) in Self::shapes(cfg) {
            let id = params.id(&name).ok_or_else(|| Error::Checkpoint(alloc::format!("missing tensor {name}")))?;
            let actual = params.get(id).shape();
            if actual != shape {
                return Err(Error::Checkpoint(alloc::format!("tensor {name} has shape {actual:?}, expected {shape:?}")));
            }
            ids.push(id);
        }
        Ok(Self::from_ids(cfg, &ids))
    }

    fn from_ids(cfg: &ModelConfig, ids: &[ParamId]) -> Self {
        let mut it = ids.iter().copied();
        let mut lstm = || LstmParams { wx: it.next().unwrap(), wh: it.next().unwrap(), b: it.next().unwrap() };
        let enc = (0..cfg.layers).map(|_| [lstm(), lstm()]).collect();
        let dec = (0..cfg.layers).map(|_| lstm()).collect();
        let rest: Vec<ParamId> = ids[ids.len() - 3..].to_vec();
        NetParams { enc, dec, bos: rest[0], wa: rest[1], wc: rest[2] }
    }

    pub(crate) fn param_count(&self) -> usize {
        self.enc.len() * 6 + self.dec.len() * 3 + 3
    }
}

/// Dropout source for one forward pass; inert when `rng` is `None`.
pub(crate) struct Noise<'r> {
    pub rng: Option<&'r mut Rng>,
    pub p: Real,
}

impl Noise<'_> {
    pub(crate) fn off() -> Noise<'static> {
        Noise { rng: None, p: 0.0 }
    }

    fn apply(&mut self, g: &mut Graph<'_>, v: Var) -> Var {
        match self.rng.as_deref_mut() {
            Some(rng) => g.dropout(v, self.p, true, rng),
            None => v,
        }
    }
}

/// Encoder output for one sentence.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    /// `S x 2H` encoder states.
    pub states: Var,
    /// `H x S` precomputed attention keys `W_a · statesᵀ`.
    keys_t: Var,
}

/// Recurrent decoder state for a batch of `B` hypotheses.
#[derive(Debug, Clone)]
pub struct DecoderState {
    h: Vec<Var>,
    c: Vec<Var>,
    /// Previous attentional state (input feeding), `B x ED`.
    feed: Var,
    /// Embedding of the previous output word, `B x ED`.
    prev: Var,
    rows: usize,
}

impl DecoderState {
    pub fn rows(&self) -> usize {
        self.rows
    }
}

/// One decoder step for a batch: the attentional states and the new state.
pub struct StepOutput {
    /// `B x ED`.
    pub attentional: Var,
    pub state: DecoderState,
}

/// Target-side tensors for one sentence.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TargetSide {
    /// `|V̂| x ED` output embeddings.
    pub rows: Var,
    /// `ED x |V̂|`.
    pub rows_t: Var,
    /// `1 x |V̂|`.
    pub bias: Option<Var>,
}

impl TargetSide {
    /// From `N x ED` rows and an optional `N x 1` bias column.
    pub(crate) fn new(g: &mut Graph<'_>, rows: Var, bias_col: Option<Var>) -> Self {
        let rows_t = g.transpose(rows);
        let bias = bias_col.map(|b| g.transpose(b));
        TargetSide { rows, rows_t, bias }
    }

    /// The subset `ids` of a larger target side's source tensors.
    pub(crate) fn select(g: &mut Graph<'_>, all_rows: Var, all_bias_col: Option<Var>, ids: &[usize]) -> Self {
        let rows = g.gather(all_rows, ids);
        let bias = all_bias_col.map(|b| g.gather(b, ids));
        Self::new(g, rows, bias)
    }
}

fn lstm_cell(g: &mut Graph<'_>, gates_x: Var, h: Var, c: Var, wh: Var, hdim: usize) -> (Var, Var) {
    let hw = g.matmul(h, wh);
    let gates = g.add(gates_x, hw);
    let i = g.slice_cols(gates, 0, hdim);
    let i = g.sigmoid(i);
    let f = g.slice_cols(gates, hdim, hdim);
    let f = g.sigmoid(f);
    let u = g.slice_cols(gates, 2 * hdim, hdim);
    let u = g.tanh(u);
    let o = g.slice_cols(gates, 3 * hdim, hdim);
    let o = g.sigmoid(o);
    let fc = g.mul(f, c);
    let iu = g.mul(i, u);
    let c2 = g.add(fc, iu);
    let tc = g.tanh(c2);
    let h2 = g.mul(o, tc);
    (h2, c2)
}

impl Model {
    fn lstm_direction(&self, g: &mut Graph<'_>, p: LstmParams, x: Var, reverse: bool) -> Var {
        let hdim = self.config.hidden;
        let s = g.shape(x)[0];
        let (wx, wh, b) = (g.param(p.wx), g.param(p.wh), g.param(p.b));
        let xw = g.matmul(x, wx);
        let xw = g.add(xw, b);
        let mut h = g.constant(Tensor::zeros(1, hdim));
        let mut c = g.constant(Tensor::zeros(1, hdim));
        let mut outs = alloc::vec![h; s];
        for step in 0..s {
            let t = if reverse { s - 1 - step } else { step };
            let xt = g.slice_rows(xw, t, 1);
            (h, c) = lstm_cell(g, xt, h, c, wh, hdim);
            outs[t] = h;
        }
        g.concat_rows(&outs)
    }

    /// Runs the bi-LSTM over `S x ED` source embeddings.
    pub(crate) fn encode_rows(&self, g: &mut Graph<'_>, src: Var, noise: &mut Noise<'_>) -> Encoded {
        let mut x = noise.apply(g, src);
        for (l, layer) in self.net.enc.iter().enumerate() {
            if l > 0 {
                x = noise.apply(g, x);
            }
            let f = self.lstm_direction(g, layer[0], x, false);
            let b = self.lstm_direction(g, layer[1], x, true);
            x = g.concat_cols(&[f, b]);
        }
        let wa = g.param(self.net.wa);
        let st = g.transpose(x);
        let keys_t = g.matmul(wa, st);
        Encoded { states: x, keys_t }
    }

    pub(crate) fn encode_words(&self, g: &mut Graph<'_>, src_words: &[Vec<Syllable>], noise: &mut Noise<'_>) -> Encoded {
        let rows = self.src.cwe(g, src_words);
        self.encode_rows(g, rows, noise)
    }

    pub(crate) fn target_side(&self, g: &mut Graph<'_>, words: &[String]) -> TargetSide {
        let units: Vec<Vec<char>> = words.iter().map(|w| w.chars().collect()).collect();
        let rows = self.tgt.cwe(g, &units);
        let bias = self.tgt.bias_col(g, &units);
        TargetSide::new(g, rows, bias)
    }

    /// Zero state for `rows` hypotheses with the begin-of-sentence input.
    pub(crate) fn decoder_start(&self, g: &mut Graph<'_>, rows: usize) -> DecoderState {
        let (hdim, ed) = (self.config.hidden, self.config.embed_dim);
        let zeros_h = g.constant(Tensor::zeros(rows, hdim));
        let feed = g.constant(Tensor::zeros(rows, ed));
        let bos = g.param(self.net.bos);
        let prev = g.gather(bos, &alloc::vec![0; rows]);
        DecoderState { h: alloc::vec![zeros_h; self.config.layers], c: alloc::vec![zeros_h; self.config.layers], feed, prev, rows }
    }

    pub(crate) fn decoder_step(&self, g: &mut Graph<'_>, state: &DecoderState, enc: &Encoded, noise: &mut Noise<'_>) -> StepOutput {
        let hdim = self.config.hidden;
        let mut x = g.concat_cols(&[state.prev, state.feed]);
        let mut h = Vec::with_capacity(self.config.layers);
        let mut c = Vec::with_capacity(self.config.layers);
        for (l, p) in self.net.dec.iter().enumerate() {
            x = noise.apply(g, x);
            let (wx, wh, b) = (g.param(p.wx), g.param(p.wh), g.param(p.b));
            let xw = g.matmul(x, wx);
            let xw = g.add(xw, b);
            let (hl, cl) = lstm_cell(g, xw, state.h[l], state.c[l], wh, hdim);
            h.push(hl);
            c.push(cl);
            x = hl;
        }
        let top = x;
        let scores = g.matmul(top, enc.keys_t);
        let alpha = g.softmax_rows(scores);
        let ctx = g.matmul(alpha, enc.states);
        let cat = g.concat_cols(&[ctx, top]);
        let wc = g.param(self.net.wc);
        let z = g.matmul(cat, wc);
        let att = g.tanh(z);
        StepOutput { attentional: att, state: DecoderState { h, c, feed: att, prev: state.prev, rows: state.rows } }
    }

    /// `B x |V̂|` logits from attentional states.
    pub(crate) fn logits(&self, g: &mut Graph<'_>, att: Var, tgt: &TargetSide, noise: &mut Noise<'_>) -> Var {
        let att = noise.apply(g, att);
        let l = g.matmul(att, tgt.rows_t);
        match tgt.bias {
            Some(b) => g.add(l, b),
            None => l,
        }
    }

    /// Sets the previous-word input of every row to the given target rows.
    pub(crate) fn feed_words(&self, g: &mut Graph<'_>, state: &mut DecoderState, tgt: &TargetSide, ids: &[usize]) {
        state.prev = g.gather(tgt.rows, ids);
    }

    /// Keeps the rows `parents` (in that order) of a batched state.
    pub(crate) fn reorder(&self, g: &mut Graph<'_>, state: &DecoderState, parents: &[usize]) -> DecoderState {
        let pick = |g: &mut Graph<'_>, v: Var| g.gather(v, parents);
        DecoderState {
            h: state.h.iter().map(|&v| pick(g, v)).collect(),
            c: state.c.iter().map(|&v| pick(g, v)).collect(),
            feed: pick(g, state.feed),
            prev: pick(g, state.prev),
            rows: parents.len(),
        }
    }

    /// Teacher-forced cross entropy of `targets` (indices into the target
    /// side), summed over steps.
    pub(crate) fn forced_loss(&self, g: &mut Graph<'_>, enc: &Encoded, tgt: &TargetSide, targets: &[usize], noise: &mut Noise<'_>) -> Var {
        let mut state = self.decoder_start(g, 1);
        let mut atts = Vec::with_capacity(targets.len());
        for t in 0..targets.len() {
            if t > 0 {
                self.feed_words(g, &mut state, tgt, &[targets[t - 1]]);
            }
            let out = self.decoder_step(g, &state, enc, noise);
            atts.push(out.attentional);
            state = out.state;
        }
        let all = g.concat_rows(&atts);
        let logits = self.logits(g, all, tgt, noise);
        g.cross_entropy(logits, targets)
    }

    /// Distribution over `tv` for the word following `history`, with the
    /// source segmented into `src_words`.
    pub fn next_word_distribution(&self, src_words: &[Vec<Syllable>], history: &[String], tv: &TargetVocab) -> Result<Vec<Real>> {
        if tv.is_empty() || src_words.is_empty() {
            return Err(Error::Empty("target vocabulary or source"));
        }
        let mut g = Graph::new(&self.params);
        let mut noise = Noise::off();
        let enc = self.encode_words(&mut g, src_words, &mut noise);
        let tgt = self.target_side(&mut g, tv.words());
        let mut state = self.decoder_start(&mut g, 1);
        for w in history {
            let id = tv.index_of(w).ok_or_else(|| Error::Config(alloc::format!("history word {w:?} not in target vocabulary")))?;
            let out = self.decoder_step(&mut g, &state, &enc, &mut noise);
            state = out.state;
            self.feed_words(&mut g, &mut state, &tgt, &[id]);
        }
        let out = self.decoder_step(&mut g, &state, &enc, &mut noise);
        let logits = self.logits(&mut g, out.attentional, &tgt, &mut noise);
        let mut row = g.value(logits).row(0).to_vec();
        math::log_softmax_in_place(&mut row);
        Ok(row.into_iter().map(math::exp).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testkit::{sylls, tiny, toy};
    use crate::tensor::seeded_rng;

    fn random(rng: &mut Rng, r: usize, c: usize) -> Tensor {
        uniform_tensor(rng, r, c, 0.0, 1.0)
    }

    /// Plain-loop LSTM step, gate order i, f, g, o.
    fn reference_step(x: &[Real], h: &[Real], c: &[Real], wx: &Tensor, wh: &Tensor, b: &Tensor) -> (Vec<Real>, Vec<Real>) {
        let n = h.len();
        let mut gates = b.row(0).to_vec();
        for (j, gate) in gates.iter_mut().enumerate() {
            for (k, xk) in x.iter().enumerate() {
                *gate += xk * wx.get(k, j);
            }
            for (k, hk) in h.iter().enumerate() {
                *gate += hk * wh.get(k, j);
            }
        }
        let mut h2 = alloc::vec![0.0; n];
        let mut c2 = alloc::vec![0.0; n];
        for j in 0..n {
            let i = math::sigmoid(gates[j]);
            let f = math::sigmoid(gates[n + j]);
            let u = math::tanh(gates[2 * n + j]);
            let o = math::sigmoid(gates[3 * n + j]);
            c2[j] = f * c[j] + i * u;
            h2[j] = o * math::tanh(c2[j]);
        }
        (h2, c2)
    }

    #[test]
    fn lstm_step_matches_reference() {
        let mut rng = seeded_rng(11);
        let (input, n) = (5, 4);
        let store = ParamStore::new();
        for _ in 0..20 {
            let (wx, wh, b) = (random(&mut rng, input, 4 * n), random(&mut rng, n, 4 * n), random(&mut rng, 1, 4 * n));
            let (x, h, c) = (random(&mut rng, 1, input), random(&mut rng, 1, n), random(&mut rng, 1, n));
            let mut g = Graph::new(&store);
            let (xv, hv, cv) = (g.constant(x.clone()), g.constant(h.clone()), g.constant(c.clone()));
            let (wxv, whv, bv) = (g.constant(wx.clone()), g.constant(wh.clone()), g.constant(b.clone()));
            let gx = g.matmul(xv, wxv);
            let gx = g.add(gx, bv);
            let (h2, c2) = lstm_cell(&mut g, gx, hv, cv, whv, n);
            let (rh, rc) = reference_step(x.row(0), h.row(0), c.row(0), &wx, &wh, &b);
            for (a, e) in g.value(h2).data().iter().zip(&rh).chain(g.value(c2).data().iter().zip(&rc)) {
                assert!((a - e).abs() <= 1e-6, "{a} vs {e}");
            }
        }
    }

    #[test]
    fn one_word_gives_one_state() {
        let t = toy(2);
        let m = t.model(tiny(1));
        let mut g = Graph::new(m.params());
        let enc = m.encode_words(&mut g, &[sylls("ni")], &mut Noise::off());
        assert_eq!(g.shape(enc.states), [1, 2 * m.config.hidden]);
    }

    #[test]
    fn reversal_swaps_directions() {
        let t = toy(2);
        let mut m = t.model(tiny(2));
        let hdim = m.config.hidden;
        let p = |m: &Model, dir: &str, s: &str| m.params.id(&alloc::format!("enc.l0.{dir}.{s}")).unwrap();
        for dir in ["f", "b"] {
            m.params.set(p(&m, dir, "wh"), Tensor::zeros(hdim, 4 * hdim));
        }
        let words = [sylls("bei'jing"), sylls("ni")];
        let reversed = [sylls("ni"), sylls("bei'jing")];
        let mut g = Graph::new(m.params());
        let a = m.encode_words(&mut g, &words, &mut Noise::off());
        let x = m.src.cwe(&mut g, &words);
        let (a, x) = (g.value(a.states).clone(), g.value(x).clone());
        let zeros = alloc::vec![0.0; hdim];
        // hand-computed: forward runs 0 -> 1, backward 1 -> 0
        for (dir, half, order) in [("f", 0, [0, 1]), ("b", hdim, [1, 0])] {
            let w = |s: &str| m.params.get(p(&m, dir, s));
            let (h0, c0) = reference_step(x.row(order[0]), &zeros, &zeros, w("wx"), w("wh"), w("b"));
            let (h1, _) = reference_step(x.row(order[1]), &h0, &c0, w("wx"), w("wh"), w("b"));
            for (t, h) in [(order[0], h0), (order[1], h1)] {
                for (got, want) in a.row(t)[half..half + hdim].iter().zip(&h) {
                    assert!((got - want).abs() <= 1e-6);
                }
            }
        }
        // with both directions sharing weights, reversing the input swaps the halves
        for s in ["wx", "wh", "b"] {
            let fwd = m.params.get(p(&m, "f", s)).clone();
            m.params.set(p(&m, "b", s), fwd);
        }
        let mut g = Graph::new(m.params());
        let a = m.encode_words(&mut g, &words, &mut Noise::off());
        let b = m.encode_words(&mut g, &reversed, &mut Noise::off());
        let (a, b) = (g.value(a.states), g.value(b.states));
        for t in 0..2 {
            assert_eq!(a.row(t)[..hdim], b.row(1 - t)[hdim..]);
            assert_eq!(a.row(t)[hdim..], b.row(1 - t)[..hdim]);
        }
    }

    #[test]
    fn single_word_vocab_is_certain() {
        let t = toy(2);
        let m = t.model(tiny(3));
        let tv = TargetVocab::from_words(["北京"]);
        let p = m.next_word_distribution(&[sylls("bei'jing")], &[], &tv).unwrap();
        assert_eq!(p, alloc::vec![1.0]);
    }

    #[test]
    fn zero_weights_give_uniform_distribution() {
        let t = toy(2);
        let mut m = t.model(tiny(4));
        let ids: Vec<ParamId> = m.params.iter().map(|(id, _, _)| id).collect();
        for id in ids {
            let (r, c) = (m.params.get(id).rows(), m.params.get(id).cols());
            m.params.set(id, Tensor::zeros(r, c));
        }
        let tv = TargetVocab::from_words(["北京", "背景", "北", "你", "欢迎影"]);
        let p = m.next_word_distribution(&[sylls("bei'jing"), sylls("ni")], &[String::from("北京")], &tv).unwrap();
        for q in p {
            assert!((q - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn restricted_softmax_equals_masked_full_softmax() {
        let t = toy(2);
        let all = ["北京", "背景", "欢迎", "幻影", "你", "泥", "北", "背", "被", "京", "景", "迎", "影", "北影", "景迎你"];
        let mut rng = seeded_rng(5);
        for case in 0..100u64 {
            let m = t.model(tiny(100 + case));
            let full = TargetVocab::from_words(all);
            let subset: Vec<&str> = all.iter().copied().filter(|_| rand::Rng::random_bool(&mut rng, 0.5)).collect();
            if subset.is_empty() {
                continue;
            }
            let restricted = TargetVocab::from_words(subset.iter().copied());
            let src = [sylls("bei'jing"), sylls("huan'ying")];
            let history = [String::from(subset[0])];
            let p = m.next_word_distribution(&src, &history, &restricted).unwrap();

            // full logits with the inactive ones at -inf
            let mut g = Graph::new(m.params());
            let mut noise = Noise::off();
            let enc = m.encode_words(&mut g, &src, &mut noise);
            let tgt = m.target_side(&mut g, full.words());
            let mut state = m.decoder_start(&mut g, 1);
            let out = m.decoder_step(&mut g, &state, &enc, &mut noise);
            state = out.state;
            m.feed_words(&mut g, &mut state, &tgt, &[full.index_of(subset[0]).unwrap()]);
            let out = m.decoder_step(&mut g, &state, &enc, &mut noise);
            let logits = m.logits(&mut g, out.attentional, &tgt, &mut noise);
            let mut row = g.value(logits).row(0).to_vec();
            for (w, l) in full.words().iter().zip(row.iter_mut()) {
                if !restricted.contains(w) {
                    *l = Real::NEG_INFINITY;
                }
            }
            math::log_softmax_in_place(&mut row);
            for (w, q) in restricted.words().iter().zip(&p) {
                let expected = math::exp(row[full.index_of(w).unwrap()]);
                assert!((q - expected).abs() <= 1e-12, "case {case}: {w} {q} vs {expected}");
            }
        }
    }
}
