use std::collections::HashMap;
use std::path::Path;

use super::FeatureError;
use crate::corpus::Token;

/// Static word vectors loaded from a GloVe-style text file.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseEmbedding {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
    unk: Vec<f64>,
    pub trainable: bool,
    pub lowercase: bool,
}

impl DenseEmbedding {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn unk_vector(&self) -> &[f64] {
        &self.unk
    }

    pub fn get(&self, text: &str) -> Option<&[f64]> {
        self.table.get(text).map(Vec::as_slice)
    }

    /// Exact lookup (after the lowercase policy), else the unknown vector.
    pub fn embed(&self, token: &Token) -> &[f64] {
        self.embed_text(&token.text)
    }

    pub fn embed_text(&self, text: &str) -> &[f64] {
        let key = if self.lowercase { text.to_lowercase() } else { text.to_string() };
        self.table.get(&key).map(Vec::as_slice).unwrap_or(&self.unk)
    }
}

pub fn load_word_vectors(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<DenseEmbedding, FeatureError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_word_vectors(&text, expected_dim)
}

/// Parses `token v1 … vD` lines. An optional `V D` header line is skipped.
/// The unknown vector is the elementwise mean of all vectors.
pub fn parse_word_vectors(text: &str, expected_dim: Option<usize>) -> Result<DenseEmbedding, FeatureError> {
    let mut dim = expected_dim;
    let mut table = HashMap::new();
    let mut sum: Vec<f64> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let token = fields.next().expect("non-blank line has a field");
        let rest: Vec<&str> = fields.collect();
        if i == 0 && rest.len() == 1 && token.parse::<u64>().is_ok() && rest[0].parse::<u64>().is_ok() {
            continue;
        }
        let values = rest
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or(FeatureError::ParseError { line_no })?;
        let d = *dim.get_or_insert(values.len());
        if values.len() != d || d == 0 {
            return Err(FeatureError::DimMismatch { line_no });
        }
        if sum.is_empty() {
            sum = vec![0.0; d];
        }
        for (s, v) in sum.iter_mut().zip(&values) {
            *s += v;
        }
        table.insert(token.to_string(), values);
    }
    let dim = dim.unwrap_or(0);
    if dim == 0 {
        return Err(FeatureError::DimMismatch { line_no: 0 });
    }
    let n = table.len().max(1) as f64;
    let unk = if sum.is_empty() { vec![0.0; dim] } else { sum.iter().map(|s| s / n).collect() };
    Ok(DenseEmbedding {
        dim,
        table,
        unk,
        trainable: false,
        lowercase: false,
    })
}

pub fn concat_embed(parts: &[&[f64]]) -> Result<Vec<f64>, FeatureError> {
    if parts.is_empty() {
        return Err(FeatureError::EmptyParts);
    }
    Ok(parts.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_line() {
        let e = parse_word_vectors("the 0.1 0.2 0.3\n", None).unwrap();
        assert_eq!(e.dim(), 3);
        assert_eq!(e.get("the"), Some(&[0.1, 0.2, 0.3][..]));
        assert_eq!(e.embed(&Token::new("the", 0)), [0.1, 0.2, 0.3]);
    }

    #[test]
    fn unk_is_mean() {
        let e = parse_word_vectors("a 1 0 0\nb 0 1 0\n", None).unwrap();
        assert_eq!(e.unk_vector(), [0.5, 0.5, 0.0]);
        assert_eq!(e.embed(&Token::new("zzz", 0)), [0.5, 0.5, 0.0]);
    }

    #[test]
    fn dim_mismatch_and_parse_error() {
        let err = parse_word_vectors("the 0.1 0.2 0.3\na 0.1 0.2\n", None).unwrap_err();
        assert!(matches!(err, FeatureError::DimMismatch { line_no: 2 }));
        let err = parse_word_vectors("the 0.1 x 0.3\n", None).unwrap_err();
        assert!(matches!(err, FeatureError::ParseError { line_no: 1 }));
        let err = parse_word_vectors("the 0.1 0.2\n", Some(3)).unwrap_err();
        assert!(matches!(err, FeatureError::DimMismatch { line_no: 1 }));
    }

    #[test]
    fn header_skipped() {
        let e = parse_word_vectors("2 3\na 1 2 3\nb 3 2 1\n", None).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e.dim(), 3);
    }

    #[test]
    fn lowercase_policy() {
        let mut e = parse_word_vectors("the 1 2\n", None).unwrap();
        assert_eq!(e.embed_text("The"), e.unk_vector());
        e.lowercase = true;
        assert_eq!(e.embed_text("The"), [1.0, 2.0]);
    }

    #[test]
    fn concat() {
        assert_eq!(concat_embed(&[&[0.1, 0.2], &[0.3]]).unwrap(), [0.1, 0.2, 0.3]);
        assert_eq!(concat_embed(&[&[0.5, 0.25]]).unwrap(), [0.5, 0.25]);
        assert!(matches!(concat_embed(&[]), Err(FeatureError::EmptyParts)));
    }

    proptest! {
        #[test]
        fn embed_len_constant(words in prop::collection::vec("[a-z]{1,4}", 0..30)) {
            let e = parse_word_vectors("ab 1 2 3 4\ncd 4 3 2 1\n", None).unwrap();
            for w in &words {
                prop_assert_eq!(e.embed_text(w).len(), e.dim());
            }
        }

        #[test]
        fn concat_associative(a in prop::collection::vec(-5.0f64..5.0, 0..4), b in prop::collection::vec(-5.0f64..5.0, 0..4), c in prop::collection::vec(-5.0f64..5.0, 0..4)) {
            let ab = concat_embed(&[&a, &b]).unwrap();
            let bc = concat_embed(&[&b, &c]).unwrap();
            prop_assert_eq!(concat_embed(&[&ab, &c]).unwrap(), concat_embed(&[&a, &bc]).unwrap());
        }
    }
}
