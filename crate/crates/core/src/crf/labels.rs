use std::collections::HashMap;

use super::CrfError;

/// Parsed BIO tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BioTag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

impl<'a> BioTag<'a> {
    pub fn parse(label: &'a str) -> Option<Self> {
        if label == "O" {
            return Some(BioTag::Outside);
        }
        if let Some(ty) = label.strip_prefix("B-").filter(|t| !t.is_empty()) {
            return Some(BioTag::Begin(ty));
        }
        label.strip_prefix("I-").filter(|t| !t.is_empty()).map(BioTag::Inside)
    }
}

/// Ordered, unique labels with dense indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new(labels: Vec<String>) -> Result<Self, CrfError> {
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(CrfError::DuplicateLabel(l.clone()));
            }
        }
        Ok(LabelSet { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn bio_tags(&self) -> Result<Vec<BioTag<'_>>, CrfError> {
        self.labels
            .iter()
            .map(|l| BioTag::parse(l).ok_or_else(|| CrfError::NotBioLabelSet(l.clone())))
            .collect()
    }

    /// True when every non-`O` label is `B-…` or `I-…` and at least one is.
    pub fn is_bio(&self) -> bool {
        matches!(self.bio_tags(), Ok(tags) if tags.iter().any(|t| *t != BioTag::Outside))
    }
}
