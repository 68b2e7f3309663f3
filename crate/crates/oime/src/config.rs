//! Settings with precedence flags > config file > profile defaults.
//!
//! [`ConfigFile`] is both the JSON config format and the set of override
//! flags shared by every subcommand, so the two cannot drift apart.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use oime_core::engine::OnlineConfig;
use oime_core::eval::KyssConfig;
use oime_core::model::{DecodeOptions, ModelConfig, TrainConfig};
use oime_core::Real;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::files::read_json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Small model that trains in seconds on the toy fixture.
    Desk,
    /// Full-size model and optimizer settings.
    #[default]
    Paper,
}

/// Every tunable setting, all optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long = "syllables")]
    pub syllables_path: Option<PathBuf>,
    #[arg(long = "dict")]
    pub dict_path: Option<PathBuf>,
    /// Word list seeding the vocabulary and corpus segmentation.
    #[arg(long = "lexicon")]
    pub lexicon_path: Option<PathBuf>,
    #[arg(long = "vocab")]
    pub vocab_path: Option<PathBuf>,
    #[arg(long = "checkpoint")]
    pub model_checkpoint: Option<PathBuf>,

    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[serde(alias = "ED")]
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub composer_hidden: Option<usize>,
    #[arg(long)]
    pub filter_ratio: Option<Real>,
    #[arg(long)]
    pub common_words: Option<usize>,

    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<Real>,
    #[arg(long)]
    pub lr_halve_after: Option<usize>,
    #[arg(long)]
    pub dropout: Option<Real>,
    /// Gradient-norm clip; 0 disables clipping.
    #[arg(long)]
    pub clip_norm: Option<Real>,

    #[arg(long)]
    pub beam: Option<usize>,
    #[serde(rename = "K")]
    #[arg(long = "top-k")]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub keep_fraction: Option<Real>,

    /// Disable online learning (vocabulary updates and training).
    #[arg(long)]
    pub frozen: Option<bool>,
    #[arg(long)]
    pub train_every: Option<usize>,
    #[arg(long)]
    pub online_epochs: Option<usize>,
    #[arg(long)]
    pub online_lr: Option<Real>,
    #[arg(long)]
    pub freeze_encoder: Option<bool>,
    #[arg(long)]
    pub max_vocab: Option<usize>,

    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Serve the UI bundle under `/`.
    #[arg(long)]
    pub serve_ui: Option<bool>,
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr; $($f:ident),* $(,)?) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Fields set in `top` win.
    pub fn overlay(&mut self, top: &ConfigFile) {
        overlay!(self, top; profile, seed, syllables_path, dict_path, lexicon_path, vocab_path, model_checkpoint,
            layers, hidden, embed_dim, composer_hidden, filter_ratio, common_words,
            epochs, batch, lr, lr_halve_after, dropout, clip_norm, beam, top_k, keep_fraction,
            frozen, train_every, online_epochs, online_lr, freeze_encoder, max_vocab, host, port, serve_ui, ui_dir);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Paths {
    pub syllables: Option<PathBuf>,
    pub dict: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Paths {
    /// The path or a usage error naming the missing flag.
    pub fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        p.as_deref().ok_or_else(|| AppError::Usage(format!("missing --{flag} (or its config-file key)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServiceSettings {
    pub host: String,
    pub port: u16,
    pub serve_ui: bool,
    pub ui_dir: PathBuf,
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub profile: Profile,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeOptions,
    pub online: OnlineConfig,
    pub kyss: KyssConfig,
    pub paths: Paths,
    pub service: ServiceSettings,
}

impl Settings {
    pub fn defaults(profile: Profile) -> Self {
        let (model, train) = match profile {
            Profile::Desk => (ModelConfig::desk(), TrainConfig::desk()),
            Profile::Paper => (ModelConfig::paper(), TrainConfig::paper()),
        };
        Settings {
            profile,
            model,
            train,
            decode: DecodeOptions::default(),
            online: OnlineConfig::default(),
            kyss: KyssConfig::default(),
            paths: Paths { syllables: None, dict: None, lexicon: None, vocab: None, checkpoint: None },
            service: ServiceSettings { host: String::from("127.0.0.1"), port: 8601, serve_ui: false, ui_dir: PathBuf::from("webui/dist") },
        }
    }

    /// Defaults of the chosen profile, then the config file, then flags.
    pub fn resolve(file: Option<&ConfigFile>, flags: &ConfigFile) -> Result<Self> {
        let mut c = file.cloned().unwrap_or_default();
        c.overlay(flags);
        let mut s = Settings::defaults(c.profile.unwrap_or_default());
        let m = &mut s.model;
        set(&mut m.layers, c.layers);
        set(&mut m.hidden, c.hidden);
        set(&mut m.embed_dim, c.embed_dim);
        set(&mut m.composer_hidden, c.composer_hidden);
        set(&mut m.filter_ratio, c.filter_ratio);
        set(&mut m.common_words, c.common_words);
        let t = &mut s.train;
        set(&mut t.epochs, c.epochs);
        set(&mut t.batch, c.batch);
        set(&mut t.lr, c.lr);
        set(&mut t.lr_halve_after, c.lr_halve_after);
        set(&mut t.dropout, c.dropout);
        if let Some(clip) = c.clip_norm {
            t.clip_norm = (clip > 0.0).then_some(clip);
        }
        if let Some(seed) = c.seed {
            s.model.seed = seed;
            s.train.seed = seed;
            s.online.seed = seed;
        }
        set(&mut s.decode.beam, c.beam);
        set(&mut s.decode.top_k, c.top_k);
        set(&mut s.decode.keep_fraction, c.keep_fraction);
        s.kyss.max_candidates = s.decode.top_k;
        let o = &mut s.online;
        if let Some(frozen) = c.frozen {
            o.learn = !frozen;
        }
        set(&mut o.train_every, c.train_every);
        set(&mut o.online_epochs, c.online_epochs);
        set(&mut o.lr, c.online_lr);
        set(&mut o.freeze_encoder, c.freeze_encoder);
        if c.max_vocab.is_some() {
            o.max_vocab = c.max_vocab;
        }
        s.paths = Paths {
            syllables: c.syllables_path,
            dict: c.dict_path,
            lexicon: c.lexicon_path,
            vocab: c.vocab_path,
            checkpoint: c.model_checkpoint,
        };
        set(&mut s.service.host, c.host);
        set(&mut s.service.port, c.port);
        set(&mut s.service.serve_ui, c.serve_ui);
        set(&mut s.service.ui_dir, c.ui_dir);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.online.validate()?;
        let d = &self.decode;
        if d.beam == 0 || d.top_k == 0 || !(d.keep_fraction > 0.0 && d.keep_fraction <= 1.0) {
            return Err(AppError::Usage(String::from("beam and K must be positive and keep_fraction in (0, 1]")));
        }
        Ok(())
    }
}

fn set<T>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file: ConfigFile = serde_json::from_str(r#"{"profile": "desk", "hidden": 32, "K": 7, "port": 9000, "ED": 16}"#).unwrap();
        let flags = ConfigFile { hidden: Some(48), ..ConfigFile::default() };
        let s = Settings::resolve(Some(&file), &flags).unwrap();
        assert_eq!(s.profile, Profile::Desk);
        assert_eq!((s.model.hidden, s.model.embed_dim, s.model.layers), (48, 16, ModelConfig::desk().layers));
        assert_eq!((s.decode.top_k, s.kyss.max_candidates, s.service.port), (7, 7, 9000));
    }

    #[test]
    fn paper_is_the_default_profile() {
        let s = Settings::resolve(None, &ConfigFile::default()).unwrap();
        assert_eq!(s.model, ModelConfig::paper());
        assert_eq!(s.train, TrainConfig::paper());
        assert_eq!((s.service.host.as_str(), s.service.port), ("127.0.0.1", 8601));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ConfigFile>(r#"{"hiden": 3}"#).is_err());
    }

    #[test]
    fn seed_reaches_every_component() {
        let flags = ConfigFile { seed: Some(99), clip_norm: Some(0.0), ..ConfigFile::default() };
        let s = Settings::resolve(None, &flags).unwrap();
        assert_eq!((s.model.seed, s.train.seed, s.online.seed), (99, 99, 99));
        assert_eq!(s.train.clip_norm, None);
    }
}
