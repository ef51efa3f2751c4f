//! Datasets: tokenization, CoNLL/CSV readers, vocabularies, batching and
//! the task download registry.

mod batch;
mod conll;
mod csv;
mod download;
pub mod synthetic;
mod vocab;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::batch::{batch_order, make_batches, Batch};
pub use self::conll::{parse_conll, read_conll, write_conll, ColumnSep};
pub use self::csv::{parse_csv, read_csv};
pub use self::download::{download_task, sha256_hex, DataFormat, TaskEntry, TaskRegistry};
pub use self::vocab::{fit_vocabulary, numericalize, Vocabulary, VocabSnapshot, PAD_ID, UNK_ID};

/// Sequences longer than this are accepted but logged.
pub const LONG_SEQUENCE_WARN: usize = 512;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed line {line_no}: {detail}")]
    MalformedLine { line_no: usize, detail: String },
    #[error("malformed CSV record {record_no}: {detail}")]
    MalformedRecord { record_no: usize, detail: String },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("digest mismatch: expected {expected}, got {actual}")]
    DigestMismatch { expected: String, actual: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("invalid task registry: {0}")]
    Registry(String),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.into(),
            source,
        }
    }
}

/// A whitespace-free token with its character (Unicode scalar) offset into
/// the source line.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
}

impl Token {
    pub fn new(text: impl Into<String>, start: usize) -> Self {
        Token {
            text: text.into(),
            start,
        }
    }

    /// Exclusive character end offset.
    pub fn end(&self) -> usize {
        self.start + self.text.chars().count()
    }
}

/// One instance: tokens plus either per-token labels, a document class, or
/// nothing (raw inference input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSequence {
    tokens: Vec<Token>,
    labels: Option<Vec<String>>,
    doc_class: Option<String>,
}

impl TokenSequence {
    pub fn unlabeled(tokens: Vec<Token>) -> Self {
        TokenSequence {
            tokens,
            labels: None,
            doc_class: None,
        }
    }

    pub fn tagged(tokens: Vec<Token>, labels: Vec<String>) -> Result<Self, CorpusError> {
        if tokens.len() != labels.len() {
            return Err(CorpusError::InvalidSequence(format!(
                "{} tokens but {} labels",
                tokens.len(),
                labels.len()
            )));
        }
        Ok(TokenSequence {
            tokens,
            labels: Some(labels),
            doc_class: None,
        })
    }

    pub fn classified(tokens: Vec<Token>, doc_class: impl Into<String>) -> Self {
        TokenSequence {
            tokens,
            labels: None,
            doc_class: Some(doc_class.into()),
        }
    }

    /// Builds tokens from words as if they were joined by single spaces.
    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Self {
        let mut offset = 0;
        let tokens = words
            .iter()
            .map(|w| {
                let t = Token::new(w.as_ref(), offset);
                offset = t.end() + 1;
                t
            })
            .collect();
        TokenSequence::unlabeled(tokens)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn doc_class(&self) -> Option<&str> {
        self.doc_class.as_deref()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    pub fn with_labels(self, labels: Vec<String>) -> Result<Self, CorpusError> {
        TokenSequence::tagged(self.tokens, labels)
    }

    pub fn with_class(self, doc_class: impl Into<String>) -> Self {
        TokenSequence::classified(self.tokens, doc_class)
    }
}

/// Splits on maximal runs of Unicode whitespace, recording character offsets.
pub fn tokenize_whitespace(line: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    for (pos, ch) in line.chars().enumerate() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(Token::new(std::mem::take(&mut current), start));
            }
        } else {
            if current.is_empty() {
                start = pos;
            }
            current.push(ch);
        }
    }
    if !current.is_empty() {
        tokens.push(Token::new(current, start));
    }
    if tokens.len() > LONG_SEQUENCE_WARN {
        log::warn!("sequence of {} tokens exceeds {LONG_SEQUENCE_WARN}", tokens.len());
    }
    TokenSequence::unlabeled(tokens)
}

/// Unicode scalar values of a token, in order.
pub fn tokenize_characters(token: &Token) -> Vec<String> {
    token.text.chars().map(String::from).collect()
}
