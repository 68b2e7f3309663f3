//! Decode-time benchmark over target-vocabulary pruning fractions.

use cpu_time::ThreadTime;
use oime_core::corpus::ParallelSentence;
use oime_core::eval::{top_k_accuracy, EvalItem};
use oime_core::model::{beam_search, build_target_vocab, DecodeOptions, Lexicon, Model};
use oime_core::Real;
use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub fraction: Real,
    /// Thread CPU milliseconds per MIU: the median over repetitions of
    /// each MIU's decode time, averaged over MIUs.
    pub ms_per_miu: Real,
    pub top1: Real,
    pub top5: Real,
    /// Mean target-vocabulary size after pruning.
    pub mean_target_vocab: Real,
}

pub fn median(xs: &mut [Real]) -> Real {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Decodes `items` once per fraction to collect the results, then times
/// `reps` passes over the set. Runs on the calling thread.
pub fn prune_bench(model: &Model, lex: Lexicon<'_>, items: &[ParallelSentence], fractions: &[Real], opts: &DecodeOptions, reps: usize) -> Result<Vec<BenchRow>> {
    let inputs: Vec<_> = items.iter().map(|s| s.syllables()).collect();
    let mut options = Vec::new();
    let mut rows = Vec::new();
    for &fraction in fractions {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(oime_core::Error::Config(format!("keep fraction {fraction} outside (0, 1]")).into());
        }
        let o = DecodeOptions { keep_fraction: fraction, ..*opts };
        let mut eval = Vec::with_capacity(items.len());
        let mut sizes: Real = 0.0;
        for (s, py) in items.iter().zip(&inputs) {
            let cands = beam_search(model, py, lex, &o)?;
            eval.push(EvalItem::new(py.clone(), s.hanzi(), cands.into_iter().map(|c| c.text).collect())?);
            sizes += build_target_vocab(py, lex.vocab, lex.dict, lex.common, None).prune(fraction, lex.vocab).len() as Real;
        }
        rows.push(BenchRow {
            fraction,
            ms_per_miu: 0.0,
            top1: top_k_accuracy(&eval, 1)?,
            top5: top_k_accuracy(&eval, 5)?,
            mean_target_vocab: sizes / inputs.len() as Real,
        });
        options.push(o);
    }
    // every MIU is decoded at all fractions back to back after an untimed
    // warm-up decode; the order rotates with the MIU and the repetition so
    // no fraction is always first, and the per-MIU median over repetitions
    // discards bursts of outside load
    let reps = reps.max(1);
    let n = options.len();
    let mut times = vec![vec![Vec::with_capacity(reps); inputs.len()]; n];
    for rep in 0..reps {
        for (i, py) in inputs.iter().enumerate() {
            std::hint::black_box(beam_search(model, py, lex, &options[0])?);
            for j in 0..n {
                let f = (i + j + rep) % n;
                let start = ThreadTime::now();
                std::hint::black_box(beam_search(model, py, lex, &options[f])?);
                times[f][i].push(start.elapsed().as_secs_f64() as Real * 1000.0);
            }
        }
    }
    for (row, per_miu) in rows.iter_mut().zip(&mut times) {
        row.ms_per_miu = per_miu.iter_mut().map(|t| median(t)).sum::<Real>() / inputs.len() as Real;
    }
    Ok(rows)
}
