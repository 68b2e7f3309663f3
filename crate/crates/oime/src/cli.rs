//! Command-line interface.

use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use oime_core::engine::{Engine, Resources};
use oime_core::eval::{FILTER_RATIOS, KEEP_FRACTIONS};
use oime_core::model::{common_words, Lexicon, TrainControl};
use oime_core::Real;

use crate::bench::prune_bench;
use crate::config::{ConfigFile, Paths, Settings};
use crate::data::{load_eval_set, prepare_files};
use crate::error::{AppError, Result};
use crate::experiments::{evaluate, filter_ratio_sweep, interlaced_experiment, train_model, write_bench, write_interlaced, write_metrics, write_train_log, write_turn_log, MetricRow};
use crate::files::{load_engine, load_model, load_parallel, load_resources, load_vocab, load_word_vectors, save_engine, save_model, save_parallel, save_vocab, write_json};
use crate::service::{serve, AppState};

#[derive(Debug, Parser)]
#[command(name = "oime", version, about = "Open-vocabulary pinyin input method")]
pub struct Cli {
    /// JSON config file; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Annotate a raw hanzi corpus into a parallel corpus and initial vocabulary.
    Prepare {
        #[arg(long)]
        corpus: PathBuf,
        /// Writes parallel.tsv, vocab.tsv and stats.json here.
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        opts: ConfigFile,
    },
    /// Train a model on a parallel corpus.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint to write (plus its .meta.json).
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch CSV log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Pre-trained word vectors, one `word v1 .. vED` per line.
        #[arg(long)]
        vectors: Option<PathBuf>,
        /// Stop once the training loss falls below this.
        #[arg(long)]
        target_loss: Option<Real>,
        #[command(flatten)]
        opts: ConfigFile,
    },
    /// Top-K accuracy and KySS on a test set.
    Eval {
        /// Raw hanzi text, or a parallel `.tsv`.
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: ConfigFile,
    },
    /// Interlaced two-domain stream through an online and a frozen engine.
    Interlace {
        #[arg(long)]
        domain_a: PathBuf,
        #[arg(long)]
        domain_b: PathBuf,
        #[arg(long, default_value_t = 2)]
        segments: usize,
        #[arg(long, default_value_t = 10)]
        group_size: usize,
        /// Groups after each switch averaged into the reported gain.
        #[arg(long, default_value_t = 3)]
        after_switch: usize,
        /// Per-group CSV of the online engine; the frozen one goes to
        /// `<stem>_frozen.csv` beside it.
        #[arg(long)]
        out: PathBuf,
        /// Per-turn CSV of the online engine.
        #[arg(long)]
        turn_log: Option<PathBuf>,
        #[command(flatten)]
        opts: ConfigFile,
    },
    /// Decode time and accuracy per target-vocabulary keep fraction.
    Bench {
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[command(flatten)]
        opts: ConfigFile,
    },
    /// Train one model per word-table filter ratio and report top-5.
    SweepFilter {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: ConfigFile,
    },
    /// Local HTTP service.
    Serve {
        /// Saved engine to resume (and to save on shutdown).
        #[arg(long)]
        state_dir: Option<PathBuf>,
        #[command(flatten)]
        opts: ConfigFile,
    },
    /// Interactive terminal session.
    Repl {
        #[arg(long)]
        state_dir: Option<PathBuf>,
        #[command(flatten)]
        opts: ConfigFile,
    },
}

fn settings(config: Option<&Path>, flags: &ConfigFile) -> Result<Settings> {
    let file = config.map(ConfigFile::load).transpose()?;
    Settings::resolve(file.as_ref(), flags)
}

fn resources(s: &Settings) -> Result<Arc<Resources>> {
    load_resources(Paths::require(&s.paths.syllables, "syllables")?, Paths::require(&s.paths.dict, "dict")?)
}

/// An engine resumed from `state_dir` when it holds a saved state, else
/// fresh from the configured checkpoint and vocabulary.
fn engine(s: &Settings, res: Arc<Resources>, state_dir: Option<&Path>) -> Result<Engine> {
    if let Some(dir) = state_dir.filter(|d| d.join("state.json").exists()) {
        log::info!("resuming engine from {}", dir.display());
        return load_engine(dir, res);
    }
    let model = load_model(Paths::require(&s.paths.checkpoint, "checkpoint")?)?;
    let vocab = load_vocab(Paths::require(&s.paths.vocab, "vocab")?)?;
    Ok(Engine::new(res, model, vocab, s.online, s.decode)?)
}

pub fn run(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Prepare { corpus, out_dir, opts } => {
            let s = settings(config, &opts)?;
            let res = resources(&s)?;
            let p = prepare_files(&corpus, s.paths.lexicon.as_deref(), &res)?;
            for w in &p.lexicon_skipped {
                log::warn!("lexicon word {w} skipped: character without pronunciation");
            }
            save_parallel(&out_dir.join("parallel.tsv"), &p.sentences)?;
            save_vocab(&out_dir.join("vocab.tsv"), &p.vocab)?;
            write_json(&out_dir.join("stats.json"), &p.stats)?;
            println!("{} lines -> {} sentences, {} MIUs ({} skipped); vocabulary {}", p.stats.lines, p.stats.sentences, p.stats.mius, p.stats.skipped, p.vocab.len());
        }
        Command::Train { data, out, log: log_path, vectors, target_loss, opts } => {
            let s = settings(config, &opts)?;
            let res = resources(&s)?;
            let vocab = load_vocab(Paths::require(&s.paths.vocab, "vocab")?)?;
            let sentences = load_parallel(&data)?;
            let vectors = vectors.map(|p| load_word_vectors(&p, s.model.embed_dim)).transpose()?;
            let (model, logs) = train_model(s.model, &s.train, &res, &sentences, &vocab, vectors.as_ref(), |e, _| {
                log::info!("epoch {} lr {} loss {:.4}", e.epoch, e.lr, e.loss);
                Ok(match target_loss {
                    Some(t) if e.loss < t => TrainControl::Stop,
                    _ => TrainControl::Continue,
                })
            })?;
            save_model(&out, &model)?;
            if let Some(p) = log_path {
                write_train_log(&p, &logs)?;
            }
            if let Some(last) = logs.last() {
                println!("trained {} epochs, final loss {:.4}", last.epoch, last.loss);
            }
        }
        Command::Eval { test, out, opts } => {
            let s = settings(config, &opts)?;
            let res = resources(&s)?;
            let model = load_model(Paths::require(&s.paths.checkpoint, "checkpoint")?)?;
            let vocab = load_vocab(Paths::require(&s.paths.vocab, "vocab")?)?;
            let items = load_eval_set(&test, &res, &vocab)?;
            let (r, _) = evaluate(&model, &vocab, &res, &items, &s.decode, &s.kyss)?;
            let cfg = format!("beam={};K={};keep={}", s.decode.beam, s.decode.top_k, s.decode.keep_fraction);
            let rows = [MetricRow::new("top1", &cfg, r.top1), MetricRow::new("top5", &cfg, r.top5), MetricRow::new("top10", &cfg, r.top10), MetricRow::new("kyss", &cfg, r.kyss)];
            write_metrics(&out, &rows)?;
            println!("{} items: top-1 {:.4} top-5 {:.4} top-10 {:.4} KySS {:.4}", r.items, r.top1, r.top5, r.top10, r.kyss);
        }
        Command::Interlace { domain_a, domain_b, segments, group_size, after_switch, out, turn_log, opts } => {
            let s = settings(config, &opts)?;
            let res = resources(&s)?;
            let model = load_model(Paths::require(&s.paths.checkpoint, "checkpoint")?)?;
            let vocab = load_vocab(Paths::require(&s.paths.vocab, "vocab")?)?;
            let a = load_eval_set(&domain_a, &res, &vocab)?;
            let b = load_eval_set(&domain_b, &res, &vocab)?;
            let r = interlaced_experiment(&model, &vocab, res, &a, &b, segments, group_size, after_switch, s.online, s.decode)?;
            write_interlaced(&out, &r.online)?;
            let stem = out.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            write_interlaced(&out.with_file_name(format!("{stem}_frozen.csv")), &r.frozen)?;
            if let Some(p) = turn_log {
                write_turn_log(&p, &r.online_turns)?;
            }
            println!("post-switch top-1 gain: into B {:+.4}, into A {:+.4}", r.gain_b, r.gain_a);
        }
        Command::Bench { test, out, reps, opts } => {
            let s = settings(config, &opts)?;
            let res = resources(&s)?;
            let model = load_model(Paths::require(&s.paths.checkpoint, "checkpoint")?)?;
            let vocab = load_vocab(Paths::require(&s.paths.vocab, "vocab")?)?;
            let items = load_eval_set(&test, &res, &vocab)?;
            let common = common_words(&vocab, model.config().common_words);
            let lex = Lexicon { vocab: &vocab, dict: &res.dict, common: &common };
            let rows = prune_bench(&model, lex, &items, &KEEP_FRACTIONS, &s.decode, reps)?;
            for r in &rows {
                println!("keep {:.3}: {:.3} ms/MIU, top-1 {:.4}, top-5 {:.4}, |V| {:.1}", r.fraction, r.ms_per_miu, r.top1, r.top5, r.mean_target_vocab);
            }
            write_bench(&out, &rows)?;
        }
        Command::SweepFilter { data, test, out, opts } => {
            let s = settings(config, &opts)?;
            let res = resources(&s)?;
            let vocab = load_vocab(Paths::require(&s.paths.vocab, "vocab")?)?;
            let sentences = load_parallel(&data)?;
            let items = load_eval_set(&test, &res, &vocab)?;
            let sweep = filter_ratio_sweep(s.model, &s.train, &res, &sentences, &vocab, &items, &FILTER_RATIOS, &s.decode)?;
            let rows: Vec<MetricRow> = sweep.iter().map(|(ratio, r)| MetricRow::new("top5", &format!("filter_ratio={ratio}"), r.top5)).collect();
            for r in &rows {
                println!("{}: top-5 {:.4}", r.config, r.value);
            }
            write_metrics(&out, &rows)?;
        }
        Command::Serve { state_dir, opts } => {
            let s = settings(config, &opts)?;
            let res = resources(&s)?;
            let state = AppState::new(engine(&s, res, state_dir.as_deref())?);
            let ui = s.service.serve_ui.then_some(s.service.ui_dir.as_path());
            let rt = tokio::runtime::Runtime::new().map_err(|e| AppError::Runtime(e.to_string()))?;
            rt.block_on(serve(Arc::clone(&state), &s.service.host, s.service.port, ui))
                .map_err(|e| AppError::Runtime(format!("{}:{}: {e}", s.service.host, s.service.port)))?;
            if let Some(dir) = state_dir {
                state.with_engine(|e| save_engine(&dir, e))?;
                log::info!("engine saved to {}", dir.display());
            }
        }
        Command::Repl { state_dir, opts } => {
            let s = settings(config, &opts)?;
            let res = resources(&s)?;
            let mut e = engine(&s, res, state_dir.as_deref())?;
            crate::repl::run(&mut e, BufReader::new(std::io::stdin().lock()), std::io::stdout().lock())?;
            if let Some(dir) = state_dir {
                save_engine(&dir, &e)?;
            }
        }
    }
    Ok(())
}
