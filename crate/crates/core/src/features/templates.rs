use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::corpus::TokenSequence;

pub const BOS: &str = "<BOS>";
pub const EOS: &str = "<EOS>";
const SHAPE_RUN_CAP: usize = 4;

/// The fixed catalog of token-level feature templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Template {
    Lower,
    Shape,
    Prefix(u8),
    Suffix(u8),
    IsDigit,
    HasDigit,
    IsCapitalized,
    IsPunct,
    PrevLower,
    NextLower,
    Bias,
}

impl Template {
    pub const CATALOG: [Template; 17] = [
        Template::Lower,
        Template::Shape,
        Template::Prefix(1),
        Template::Prefix(2),
        Template::Prefix(3),
        Template::Prefix(4),
        Template::Suffix(1),
        Template::Suffix(2),
        Template::Suffix(3),
        Template::Suffix(4),
        Template::IsDigit,
        Template::HasDigit,
        Template::IsCapitalized,
        Template::IsPunct,
        Template::PrevLower,
        Template::NextLower,
        Template::Bias,
    ];
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Template::Lower => f.write_str("lower"),
            Template::Shape => f.write_str("shape"),
            Template::Prefix(n) => write!(f, "prefix{n}"),
            Template::Suffix(n) => write!(f, "suffix{n}"),
            Template::IsDigit => f.write_str("isDigit"),
            Template::HasDigit => f.write_str("hasDigit"),
            Template::IsCapitalized => f.write_str("isCapitalized"),
            Template::IsPunct => f.write_str("isPunct"),
            Template::PrevLower => f.write_str("prevLower"),
            Template::NextLower => f.write_str("nextLower"),
            Template::Bias => f.write_str("bias"),
        }
    }
}

impl FromStr for Template {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Template::CATALOG
            .iter()
            .copied()
            .find(|t| t.to_string() == s)
            .ok_or_else(|| FeatureError::UnknownTemplate(s.to_string()))
    }
}

/// Maps characters to `X`/`x`/`d`/itself and caps runs of the same
/// output character at four.
pub fn word_shape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last: Option<char> = None;
    let mut run = 0;
    for c in text.chars() {
        let m = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_numeric() {
            'd'
        } else {
            c
        };
        if Some(m) == last {
            run += 1;
        } else {
            last = Some(m);
            run = 1;
        }
        if run <= SHAPE_RUN_CAP {
            out.push(m);
        }
    }
    out
}

/// Contiguous character n-grams of `^text$`, namespaced `cng=`.
pub fn char_ngram_features(text: &str, n: RangeInclusive<usize>) -> Result<Vec<String>, FeatureError> {
    if *n.start() < 2 || *n.end() > 4 || n.start() > n.end() {
        return Err(FeatureError::InvalidNgramRange(*n.start(), *n.end()));
    }
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let chars: Vec<char> = std::iter::once('^').chain(text.chars()).chain(std::iter::once('$')).collect();
    let mut out = Vec::new();
    for size in n {
        for window in chars.windows(size) {
            let gram: String = window.iter().collect();
            out.push(format!("cng={gram}"));
        }
    }
    Ok(out)
}

fn flag(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

fn prefix(text: &str, n: usize) -> String {
    text.chars().take(n).collect()
}

fn suffix(text: &str, n: usize) -> String {
    let count = text.chars().count();
    text.chars().skip(count.saturating_sub(n)).collect()
}

/// Sorted, deduplicated feature ids with parallel values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseFeatureVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseFeatureVector {
    /// Builds from unsorted ids; repeated ids accumulate their values.
    pub fn from_ids(ids: impl IntoIterator<Item = u32>) -> Self {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for id in ids {
            *counts.entry(id).or_default() += 1.0;
        }
        SparseFeatureVector {
            indices: counts.keys().copied().collect(),
            values: counts.values().copied().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }
}

/// Serialized form (`features.json`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureSnapshot {
    pub templates: Vec<String>,
    pub char_ngrams: Option<(usize, usize)>,
    pub features: BTreeMap<String, u32>,
}

/// Active templates plus the feature-string index they populate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTemplateSet {
    templates: Vec<Template>,
    char_ngrams: Option<RangeInclusive<usize>>,
    index: HashMap<String, u32>,
    frozen: bool,
}

impl FeatureTemplateSet {
    pub fn new(templates: Vec<Template>, char_ngrams: Option<RangeInclusive<usize>>) -> Result<Self, FeatureError> {
        if let Some(r) = &char_ngrams {
            char_ngram_features("", r.clone())?;
        }
        Ok(FeatureTemplateSet {
            templates,
            char_ngrams,
            index: HashMap::new(),
            frozen: false,
        })
    }

    pub fn from_names<S: AsRef<str>>(names: &[S], char_ngrams: Option<RangeInclusive<usize>>) -> Result<Self, FeatureError> {
        let templates = names.iter().map(|n| n.as_ref().parse()).collect::<Result<_, _>>()?;
        Self::new(templates, char_ngrams)
    }

    pub fn full_catalog() -> Self {
        Self::new(Template::CATALOG.to_vec(), None).expect("catalog is valid")
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn num_features(&self) -> usize {
        self.index.len()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn feature_id(&self, feature: &str) -> Option<u32> {
        self.index.get(feature).copied()
    }

    /// Feature strings active at `position`, before indexing.
    pub fn feature_strings(&self, seq: &TokenSequence, position: usize) -> Result<Vec<String>, FeatureError> {
        let tokens = seq.tokens();
        let token = tokens.get(position).ok_or(FeatureError::PositionOutOfRange {
            position,
            len: tokens.len(),
        })?;
        let text = token.text.as_str();
        let mut out = Vec::with_capacity(self.templates.len() + 8);
        for t in &self.templates {
            let f = match t {
                Template::Lower => format!("lower={}", text.to_lowercase()),
                Template::Shape => format!("shape={}", word_shape(text)),
                Template::Prefix(n) => format!("prefix{n}={}", prefix(text, *n as usize)),
                Template::Suffix(n) => format!("suffix{n}={}", suffix(text, *n as usize)),
                Template::IsDigit => format!("isDigit={}", flag(!text.is_empty() && text.chars().all(char::is_numeric))),
                Template::HasDigit => format!("hasDigit={}", flag(text.chars().any(char::is_numeric))),
                Template::IsCapitalized => {
                    format!("isCapitalized={}", flag(text.chars().next().is_some_and(char::is_uppercase)))
                }
                Template::IsPunct => format!(
                    "isPunct={}",
                    flag(!text.is_empty() && text.chars().all(|c| c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace())))
                ),
                Template::PrevLower => match position.checked_sub(1) {
                    Some(p) => format!("prevLower={}", tokens[p].text.to_lowercase()),
                    None => format!("prevLower={BOS}"),
                },
                Template::NextLower => match tokens.get(position + 1) {
                    Some(t) => format!("nextLower={}", t.text.to_lowercase()),
                    None => format!("nextLower={EOS}"),
                },
                Template::Bias => "bias".to_string(),
            };
            out.push(f);
        }
        if let Some(r) = &self.char_ngrams {
            out.extend(char_ngram_features(text, r.clone())?);
        }
        Ok(out)
    }

    /// Extracts and indexes features, growing the index unless frozen.
    pub fn extract(&mut self, seq: &TokenSequence, position: usize) -> Result<SparseFeatureVector, FeatureError> {
        let strings = self.feature_strings(seq, position)?;
        let mut ids = Vec::with_capacity(strings.len());
        for s in strings {
            if let Some(&id) = self.index.get(&s) {
                ids.push(id);
            } else if !self.frozen {
                let id = self.index.len() as u32;
                self.index.insert(s, id);
                ids.push(id);
            }
        }
        Ok(SparseFeatureVector::from_ids(ids))
    }

    /// Read-only extraction: unseen feature strings are dropped.
    pub fn lookup(&self, seq: &TokenSequence, position: usize) -> Result<SparseFeatureVector, FeatureError> {
        let strings = self.feature_strings(seq, position)?;
        Ok(SparseFeatureVector::from_ids(strings.iter().filter_map(|s| self.index.get(s).copied())))
    }

    pub fn lookup_all(&self, seq: &TokenSequence) -> Vec<SparseFeatureVector> {
        (0..seq.len())
            .map(|p| self.lookup(seq, p).expect("position in range"))
            .collect()
    }

    pub fn snapshot(&self) -> FeatureSnapshot {
        FeatureSnapshot {
            templates: self.templates.iter().map(Template::to_string).collect(),
            char_ngrams: self.char_ngrams.as_ref().map(|r| (*r.start(), *r.end())),
            features: self.index.iter().map(|(k, &v)| (k.clone(), v)).collect(),
        }
    }

    /// Restores a frozen template set.
    pub fn from_snapshot(snap: &FeatureSnapshot) -> Result<Self, FeatureError> {
        let mut set = Self::from_names(&snap.templates, snap.char_ngrams.map(|(a, b)| a..=b))?;
        set.index = snap.features.iter().map(|(k, &v)| (k.clone(), v)).collect();
        let mut ids: Vec<u32> = set.index.values().copied().collect();
        ids.sort_unstable();
        if ids.iter().enumerate().any(|(i, &id)| id as usize != i) {
            return Err(FeatureError::CorruptIndex);
        }
        set.frozen = true;
        Ok(set)
    }
}
