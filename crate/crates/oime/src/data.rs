//! Corpus preparation and evaluation-set loading.

use std::path::Path;

use oime_core::corpus::{build_parallel_corpus, initial_vocabulary, lexicon_entries, parallel_mius, CorpusOptions, CorpusStats, ParallelSentence};
use oime_core::engine::Resources;
use oime_core::pinyin::CjkRange;
use oime_core::vocab::Vocabulary;

use crate::error::{AppError, Result};
use crate::files::{load_parallel, read_text};

/// Output of corpus preparation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub sentences: Vec<ParallelSentence>,
    pub vocab: Vocabulary,
    pub stats: CorpusStats,
    /// Lexicon words dropped because a character has no pronunciation.
    pub lexicon_skipped: Vec<String>,
}

/// Segments a raw hanzi corpus with the lexicon's maximum matching and
/// builds the initial vocabulary with corpus frequencies.
pub fn prepare(corpus: &str, lexicon: Option<&str>, res: &Resources, opts: CorpusOptions) -> Result<Prepared> {
    let (entries, lexicon_skipped) = match lexicon {
        Some(text) => lexicon_entries(text.lines(), &res.dict, opts.cjk),
        None => (Vec::new(), Vec::new()),
    };
    let seed = Vocabulary::from_entries(entries.clone())?;
    let (sentences, stats) = build_parallel_corpus(corpus.lines(), &res.dict, &seed, opts);
    let vocab = initial_vocabulary(&sentences, &entries);
    Ok(Prepared { sentences, vocab, stats, lexicon_skipped })
}

pub fn prepare_files(corpus: &Path, lexicon: Option<&Path>, res: &Resources) -> Result<Prepared> {
    let text = read_text(corpus)?;
    let lex = lexicon.map(read_text).transpose()?;
    prepare(&text, lex.as_deref(), res, CorpusOptions::default())
}

/// Evaluation items: a parallel TSV (`.tsv`) is used as is; any other file
/// is raw text split into MIUs. Lines with unknown characters are skipped
/// with a warning.
pub fn load_eval_set(path: &Path, res: &Resources, vocab: &Vocabulary) -> Result<Vec<ParallelSentence>> {
    if path.extension().is_some_and(|e| e == "tsv") {
        return load_parallel(path);
    }
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        match parallel_mius(line, &res.dict, vocab, CjkRange::default()) {
            Ok(m) => out.extend(m),
            Err(e) => log::warn!("{}:{}: {e}; skipped", path.display(), i + 1),
        }
    }
    if out.is_empty() {
        return Err(AppError::Data { path: path.to_path_buf(), source: oime_core::Error::Empty("evaluation items") });
    }
    Ok(out)
}
