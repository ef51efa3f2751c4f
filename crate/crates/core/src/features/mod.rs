//! Token featurization: static word vectors, sparse feature templates and
//! character n-grams.

mod embedding;
mod templates;

use thiserror::Error;

pub use self::embedding::{concat_embed, load_word_vectors, parse_word_vectors, DenseEmbedding};
pub use self::templates::{
    char_ngram_features, word_shape, FeatureSnapshot, FeatureTemplateSet, SparseFeatureVector, Template, BOS, EOS,
};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("vector dimension mismatch at line {line_no}")]
    DimMismatch { line_no: usize },
    #[error("non-numeric vector component at line {line_no}")]
    ParseError { line_no: usize },
    #[error("cannot concatenate zero embeddings")]
    EmptyParts,
    #[error("position {position} out of range for sequence of length {len}")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("unknown feature template `{0}`")]
    UnknownTemplate(String),
    #[error("character n-gram range {0}..={1} must lie within 2..=4")]
    InvalidNgramRange(usize, usize),
    #[error("feature index ids are not dense")]
    CorruptIndex,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
