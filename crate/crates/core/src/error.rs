use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: no such file", path.display())]
    MissingFile { path: PathBuf },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("unsupported audio encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("malformed WAV file: {0}")]
    InvalidWav(String),

    #[error("waveform has {samples} samples, shorter than one frame of {frame} samples")]
    WaveformTooShort { samples: usize, frame: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("expected {expected}-dimensional features, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("unknown phone `{phone}`{}", location(.line))]
    UnknownPhone { phone: String, line: Option<usize> },

    #[error("silence phone `{0}` cannot be ranked")]
    NotRankable(String),

    #[error("duplicate lexicon entry `{word}` at line {line}")]
    DuplicateEntry { word: String, line: usize },

    #[error("empty pronunciation for `{word}` at line {line}")]
    EmptyPronunciation { word: String, line: usize },

    #[error("cannot derive a pronunciation for `{0}`: no alphabetic characters")]
    G2p(String),

    #[error("script contains no words")]
    EmptyScript,

    #[error(
        "insufficient training data for phone `{phone}`: {frames} frames, need at least {needed}"
    )]
    InsufficientData {
        phone: String,
        frames: usize,
        needed: usize,
    },

    #[error("non-finite parameter while training `{phone}` at EM iteration {iteration}")]
    NonFinite { phone: String, iteration: usize },

    #[error("segment contains no frames")]
    EmptySegment,

    #[error("unsupported model version {found} (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("inventory mismatch: {0}")]
    InventoryMismatch(String),

    #[error("frontend fingerprint mismatch: model uses `{model}`, features use `{features}`")]
    FingerprintMismatch { model: String, features: String },

    #[error("utterance has {frames} frames, script needs at least {needed}")]
    UtteranceTooShort { frames: usize, needed: usize },

    #[error("alignment covers {alignment} frames but the features have {features}")]
    AlignmentMismatch { alignment: usize, features: usize },

    #[error("alignment contains no scorable phones")]
    NoPhones,

    #[error("threshold grid is empty")]
    EmptyGrid,

    #[error("script has {words} words, too short for {edits} edits")]
    ScriptTooShort { words: usize, edits: usize },

    #[error("reassignment needs at least 2 pairs, got {0}")]
    NotEnoughPairs(usize),
}

fn location(line: &Option<usize>) -> String {
    match line {
        Some(l) => format!(" at line {l}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        let path = path.into();
        if source.kind() == io::ErrorKind::NotFound {
            Error::MissingFile { path }
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }
}
