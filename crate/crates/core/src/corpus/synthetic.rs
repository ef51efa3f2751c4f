//! Deterministic synthetic reference strings.
//!
//! Each instance is `AUTHOR DATE TITLE JOURNAL PAGES` with segment
//! vocabularies and token shapes chosen so that the segments are separable
//! by shape and word-identity features. Used for learnability tests and the
//! bundled fixtures.

use super::TokenSequence;
use crate::rng::{self, Rng};

const SURNAMES: &[&str] = &[
    "Calzolari", "Hearst", "Councill", "Giles", "Kan", "Luong", "Nguyen", "Lafferty", "McCallum",
    "Pereira", "Peng", "Lample", "Ballesteros", "Ammar", "Cohan", "Beltagy", "Lo", "Wang",
    "Tkaczyk", "Lopez", "Romary", "Prasad", "Kaur", "Ramesh", "Sang", "Meulder", "Tjong", "Bird",
    "Manning", "Collins",
];

const TITLE_WORDS: &[&str] = &[
    "towards", "dictionary", "entries", "structured", "parsing", "citation", "strings", "neural",
    "models", "for", "sequence", "labelling", "conditional", "random", "fields", "segmenting",
    "labeling", "data", "logical", "structure", "recovery", "scholarly", "documents", "bibliographic",
    "metadata", "extraction", "using", "deep", "learning", "approach", "robust", "automatic",
    "recognition", "named", "entities", "evaluation", "shared", "task", "language", "independent",
];

const JOURNAL_HEADS: &[&[&str]] = &[
    &["Journal", "of"],
    &["Proceedings", "of"],
    &["Transactions", "on"],
    &["Annals", "of"],
    &["Review", "of"],
];

const JOURNAL_TOPICS: &[&str] = &[
    "Linguistics", "Informatics", "Documentation", "Retrieval", "Libraries", "Computing", "Science",
    "Intelligence", "Learning", "Semantics", "Knowledge", "Systems",
];

pub const SEGMENT_LABELS: [&str; 5] = ["author", "date", "title", "journal", "pages"];

fn pick<'a>(rng: &mut Rng, items: &'a [&'a str]) -> &'a str {
    items[rng::below(rng, items.len())]
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// One synthetic reference as (token, label) pairs.
pub fn reference(rng: &mut Rng) -> Vec<(String, &'static str)> {
    let mut out: Vec<(String, &'static str)> = Vec::new();

    let n_authors = 1 + rng::below(rng, 3);
    for a in 0..n_authors {
        if a > 0 && a == n_authors - 1 {
            out.push(("and".into(), "author"));
        }
        out.push((format!("{},", pick(rng, SURNAMES)), "author"));
        let initial = (b'A' + rng::below(rng, 26) as u8) as char;
        let sep = if a + 2 < n_authors { "," } else { "" };
        out.push((format!("{initial}.{sep}"), "author"));
    }

    let year = 1960 + rng::below(rng, 64);
    out.push((format!("({year})."), "date"));

    let n_title = 3 + rng::below(rng, 6);
    for i in 0..n_title {
        let w = pick(rng, TITLE_WORDS);
        let mut w = if i == 0 { capitalize(w) } else { w.to_string() };
        if i == n_title - 1 {
            w.push('.');
        }
        out.push((w, "title"));
    }

    let head = JOURNAL_HEADS[rng::below(rng, JOURNAL_HEADS.len())];
    for w in head {
        out.push((w.to_string(), "journal"));
    }
    let n_topics = 1 + rng::below(rng, 2);
    for i in 0..n_topics {
        let mut w = pick(rng, JOURNAL_TOPICS).to_string();
        if i == n_topics - 1 {
            w.push(',');
        }
        out.push((w, "journal"));
    }

    if rng::below(rng, 2) == 0 {
        out.push(("pp.".into(), "pages"));
    }
    let first = 1 + rng::below(rng, 900);
    let last = first + 1 + rng::below(rng, 30);
    out.push((format!("{first}-{last}."), "pages"));
    out
}

/// `n` labeled reference strings from a fixed seed.
pub fn references(n: usize, seed: u64) -> Vec<TokenSequence> {
    let mut rng = rng::seeded(seed);
    (0..n)
        .map(|_| {
            let pairs = reference(&mut rng);
            let words: Vec<&str> = pairs.iter().map(|(w, _)| w.as_str()).collect();
            let labels = pairs.iter().map(|(_, l)| l.to_string()).collect();
            TokenSequence::from_words(&words)
                .with_labels(labels)
                .expect("parallel by construction")
        })
        .collect()
}

pub const INTENT_LABELS: [&str; 3] = ["background", "method", "result"];

const INTENT_CUES: [&[&str]; 3] = [
    &["has", "been", "studied", "widely", "previous", "work", "surveyed", "prior", "early"],
    &["we", "use", "adopt", "follow", "implementation", "the", "algorithm", "toolkit", "of"],
    &["our", "results", "outperform", "compared", "with", "improves", "over", "scores", "than"],
];

const FILLER: &[&str] = &["citation", "model", "parsing", "tagger", "corpus", "features", "data", "in", "and"];

/// `n` short citation contexts labeled with one of [`INTENT_LABELS`]. Each
/// context mixes cue words of its class with shared filler.
pub fn citation_intents(n: usize, seed: u64) -> Vec<TokenSequence> {
    let mut rng = rng::seeded(seed);
    (0..n)
        .map(|_| {
            let class = rng::below(&mut rng, INTENT_LABELS.len());
            let len = 5 + rng::below(&mut rng, 6);
            let words: Vec<&str> = (0..len)
                .map(|_| {
                    if rng::below(&mut rng, 3) == 0 {
                        pick(&mut rng, FILLER)
                    } else {
                        pick(&mut rng, INTENT_CUES[class])
                    }
                })
                .collect();
            TokenSequence::from_words(&words).with_class(INTENT_LABELS[class])
        })
        .collect()
}
