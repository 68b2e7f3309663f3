//! Training, evaluation and the analysis experiments, plus their CSV
//! outputs.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use oime_core::corpus::ParallelSentence;
use oime_core::engine::{Engine, OnlineConfig, Resources, SessionTurn};
use oime_core::eval::{decode_items, interlace, interlaced_eval, kyss, post_switch_gain, top_k_accuracy, EvalItem, GroupResult, KyssConfig};
use oime_core::model::{common_words, train, DecodeOptions, EpochLog, Lexicon, Model, ModelConfig, TrainConfig, TrainControl};
use oime_core::pinyin::join_syllables;
use oime_core::vocab::Vocabulary;
use oime_core::Real;
use serde::Serialize;

use crate::bench::BenchRow;
use crate::error::{AppError, Result};

/// Trains a fresh model. `on_epoch` may stop early or save checkpoints.
pub fn train_model(
    model_cfg: ModelConfig,
    train_cfg: &TrainConfig,
    res: &Resources,
    sentences: &[ParallelSentence],
    vocab: &Vocabulary,
    vectors: Option<&BTreeMap<String, Vec<Real>>>,
    on_epoch: impl FnMut(&EpochLog, &Model) -> oime_core::Result<TrainControl>,
) -> Result<(Model, Vec<EpochLog>)> {
    let mut model = Model::new(model_cfg, vocab, &res.dict)?;
    if let Some(v) = vectors {
        let n = model.seed_word_vectors(v);
        log::info!("seeded {n} word-table rows from pre-trained vectors");
    }
    let common = common_words(vocab, model_cfg.common_words);
    let lex = Lexicon { vocab, dict: &res.dict, common: &common };
    let logs = train(&mut model, sentences, lex, train_cfg, on_epoch)?;
    Ok((model, logs))
}

/// Top-K accuracies and KySS of one model on one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub items: usize,
    pub top1: Real,
    pub top5: Real,
    pub top10: Real,
    pub kyss: Real,
}

pub fn evaluate(model: &Model, vocab: &Vocabulary, res: &Resources, items: &[ParallelSentence], opts: &DecodeOptions, kcfg: &KyssConfig) -> Result<(EvalReport, Vec<EvalItem>)> {
    let common = common_words(vocab, model.config().common_words);
    let lex = Lexicon { vocab, dict: &res.dict, common: &common };
    let decoded = decode_items(model, lex, items, opts)?;
    let report = EvalReport {
        items: decoded.len(),
        top1: top_k_accuracy(&decoded, 1)?,
        top5: top_k_accuracy(&decoded, 5)?,
        top10: top_k_accuracy(&decoded, 10)?,
        kyss: kyss(&decoded, kcfg)?,
    };
    Ok((report, decoded))
}

/// Top-5 accuracy of one model per filter ratio, each trained from scratch.
pub fn filter_ratio_sweep(
    model_cfg: ModelConfig,
    train_cfg: &TrainConfig,
    res: &Resources,
    sentences: &[ParallelSentence],
    vocab: &Vocabulary,
    test: &[ParallelSentence],
    ratios: &[Real],
    opts: &DecodeOptions,
) -> Result<Vec<(Real, EvalReport)>> {
    let mut out = Vec::new();
    for &ratio in ratios {
        let cfg = ModelConfig { filter_ratio: ratio, ..model_cfg };
        let (model, _) = train_model(cfg, train_cfg, res, sentences, vocab, None, |_, _| Ok(TrainControl::Continue))?;
        let (report, _) = evaluate(&model, vocab, res, test, opts, &KyssConfig::default())?;
        log::info!("filter ratio {ratio}: top-5 {:.4}", report.top5);
        out.push((ratio, report));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterlacedReport {
    pub online: Vec<GroupResult>,
    pub frozen: Vec<GroupResult>,
    pub online_turns: Vec<SessionTurn>,
    /// Mean online-minus-frozen top-1 over the first groups after each
    /// switch into domain B.
    pub gain_b: Real,
    /// The same after each switch back into domain A.
    pub gain_a: Real,
}

/// Runs the same interlaced A/B stream through an online and a frozen
/// engine built from the same model and vocabulary.
#[allow(clippy::too_many_arguments)]
pub fn interlaced_experiment(
    model: &Model,
    vocab: &Vocabulary,
    res: Arc<Resources>,
    a: &[ParallelSentence],
    b: &[ParallelSentence],
    segments_each: usize,
    group_size: usize,
    after_switch: usize,
    online: OnlineConfig,
    decode: DecodeOptions,
) -> Result<InterlacedReport> {
    let segments = interlace(a, b, segments_each);
    let mut on = Engine::new(Arc::clone(&res), model.clone(), vocab.clone(), OnlineConfig { learn: true, ..online }, decode)?;
    let mut fr = Engine::new(res, model.clone(), vocab.clone(), OnlineConfig { learn: false, ..online }, decode)?;
    let run_on = interlaced_eval(&mut on, &segments, group_size)?;
    let run_fr = interlaced_eval(&mut fr, &segments, group_size)?;
    Ok(InterlacedReport {
        gain_b: post_switch_gain(&run_on.groups, &run_fr.groups, "B", after_switch)?,
        gain_a: post_switch_gain(&run_on.groups, &run_fr.groups, "A", after_switch)?,
        online: run_on.groups,
        frozen: run_fr.groups,
        online_turns: run_on.turns,
    })
}

/// One `metric,config,value` row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric: String,
    pub config: String,
    pub value: Real,
}

impl MetricRow {
    pub fn new(metric: &str, config: &str, value: Real) -> Self {
        MetricRow { metric: metric.to_string(), config: config.to_string(), value }
    }
}

fn write_rows<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let csv_err = |source| AppError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| AppError::Runtime(format!("{}: {e}", path.display())))?;
    crate::files::write_bytes(path, &bytes)
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn write_bench(path: &Path, rows: &[BenchRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn write_train_log(path: &Path, logs: &[EpochLog]) -> Result<()> {
    write_rows(path, logs)
}

#[derive(Serialize)]
struct GroupCsv<'a> {
    group_index: usize,
    segment_label: &'a str,
    top1: Real,
}

pub fn write_interlaced(path: &Path, groups: &[GroupResult]) -> Result<()> {
    write_rows(path, groups.iter().map(|g| GroupCsv { group_index: g.group_index, segment_label: &g.segment_label, top1: g.top1 }))
}

#[derive(Serialize)]
struct TurnCsv {
    turn_id: u64,
    pinyin: String,
    top1: String,
    chosen: String,
    rank_of_chosen: String,
    added_words: String,
    vocab_size: usize,
}

pub fn write_turn_log(path: &Path, turns: &[SessionTurn]) -> Result<()> {
    write_rows(
        path,
        turns.iter().map(|t| TurnCsv {
            turn_id: t.turn_id,
            pinyin: join_syllables(&t.pinyin),
            top1: t.shown.first().cloned().unwrap_or_default(),
            chosen: t.choice.clone(),
            rank_of_chosen: t.rank.map(|r| r.to_string()).unwrap_or_default(),
            added_words: t.update.added.iter().map(|e| e.hanzi.as_str()).collect::<Vec<_>>().join(" "),
            vocab_size: t.vocab_size,
        }),
    )
}
