use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A text resource could not be parsed. `line` is 1-based.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid syllable {0:?}")]
    InvalidSyllable(String),

    #[error("character {ch:?} at offset {offset} is not in the pinyin dictionary")]
    UnknownChar { ch: char, offset: usize },

    /// Raw pinyin letters that cannot be split into legal syllables.
    #[error("cannot segment pinyin {input:?}: stuck at offset {offset}")]
    Unsegmentable { input: String, offset: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),
}
