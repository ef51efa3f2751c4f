use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::crf::BioTag;

/// Typed chunk over inclusive token positions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub kind: String,
}

impl Span {
    pub fn new(kind: impl Into<String>, start: usize, end: usize) -> Self {
        Span {
            start,
            end,
            kind: kind.into(),
        }
    }
}

/// conlleval chunking. A chunk opens at `B-X`, or at `I-X` when the previous
/// tag is not `B-X`/`I-X`; it continues through `I-X` of the same type.
pub fn extract_spans<S: AsRef<str>>(labels: &[S]) -> Result<Vec<Span>, MetricError> {
    let mut spans = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for (i, label) in labels.iter().enumerate() {
        let tag = BioTag::parse(label.as_ref()).ok_or_else(|| MetricError::UnknownTagFormat {
            index: i,
            label: label.as_ref().to_string(),
        })?;
        let continues = matches!((&tag, &open), (BioTag::Inside(t), Some((o, _))) if *t == o);
        if continues {
            continue;
        }
        if let Some((kind, start)) = open.take() {
            spans.push(Span::new(kind, start, i - 1));
        }
        match tag {
            BioTag::Begin(t) | BioTag::Inside(t) => open = Some((t.to_string(), i)),
            BioTag::Outside => {}
        }
    }
    if let Some((kind, start)) = open {
        spans.push(Span::new(kind, start, labels.len() - 1));
    }
    Ok(spans)
}
