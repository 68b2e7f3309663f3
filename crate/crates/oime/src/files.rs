//! On-disk formats: text resources, vocabulary and parallel TSV, model
//! checkpoints with their JSON sidecar, and saved engine state.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use oime_core::corpus::{parse_parallel_tsv, ParallelSentence};
use oime_core::engine::{Engine, EngineState, Resources};
use oime_core::model::{decode_params, encode_params, parse_word_vectors, Model, ModelMeta};
use oime_core::pinyin::{CharPinyinDict, SyllableInventory};
use oime_core::vocab::Vocabulary;
use oime_core::Real;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{AppError, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(AppError::io(path))
}

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(AppError::io(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(AppError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(AppError::io(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| AppError::Json { path: path.to_path_buf(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| AppError::Json { path: path.to_path_buf(), source })?;
    write_text(path, &(text + "\n"))
}

pub fn load_inventory(path: &Path) -> Result<SyllableInventory> {
    SyllableInventory::parse(&read_text(path)?).map_err(AppError::data(path))
}

pub fn load_dict(path: &Path, inventory: &SyllableInventory) -> Result<CharPinyinDict> {
    CharPinyinDict::parse(&read_text(path)?, inventory).map_err(AppError::data(path))
}

pub fn load_resources(syllables: &Path, dict: &Path) -> Result<Arc<Resources>> {
    let inventory = load_inventory(syllables)?;
    let dict = load_dict(dict, &inventory)?;
    Ok(Arc::new(Resources { inventory, dict }))
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    Vocabulary::parse_tsv(&read_text(path)?).map_err(AppError::data(path))
}

pub fn save_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    write_text(path, &vocab.to_tsv())
}

pub fn load_parallel(path: &Path) -> Result<Vec<ParallelSentence>> {
    parse_parallel_tsv(&read_text(path)?).map_err(AppError::data(path))
}

pub fn save_parallel(path: &Path, sentences: &[ParallelSentence]) -> Result<()> {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.to_tsv_row());
        out.push('\n');
    }
    write_text(path, &out)
}

/// `<checkpoint>.meta.json`.
pub fn meta_path(checkpoint: &Path) -> PathBuf {
    let mut p = checkpoint.as_os_str().to_owned();
    p.push(".meta.json");
    PathBuf::from(p)
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    write_bytes(path, &encode_params(model.params()))?;
    write_json(&meta_path(path), &model.meta())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(AppError::io(path))?;
    let params = decode_params(&bytes).map_err(AppError::data(path))?;
    let meta: ModelMeta = read_json(&meta_path(path))?;
    Model::from_parts(meta, params).map_err(AppError::data(path))
}

pub fn load_word_vectors(path: &Path, dim: usize) -> Result<std::collections::BTreeMap<String, Vec<Real>>> {
    parse_word_vectors(&read_text(path)?, dim).map_err(AppError::data(path))
}

/// Saves `state.json` and `params.oime` under `dir`.
pub fn save_engine(dir: &Path, engine: &Engine) -> Result<()> {
    write_bytes(&dir.join("params.oime"), &encode_params(engine.params()))?;
    write_json(&dir.join("state.json"), &engine.state())
}

pub fn load_engine(dir: &Path, resources: Arc<Resources>) -> Result<Engine> {
    let state: EngineState = read_json(&dir.join("state.json"))?;
    let path = dir.join("params.oime");
    let bytes = fs::read(&path).map_err(AppError::io(&path))?;
    let params = decode_params(&bytes).map_err(AppError::data(&path))?;
    Engine::from_state(resources, state, params).map_err(AppError::data(dir))
}
