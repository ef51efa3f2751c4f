use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::TokenSequence;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Bidirectional token/id map. Ids are dense; 0 is padding, 1 is unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    freq: BTreeMap<String, u64>,
    min_freq: u64,
    lowercase: bool,
}

/// Serialized form (`vocab.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabSnapshot {
    pub tokens: Vec<String>,
    pub freq: BTreeMap<String, u64>,
    pub min_freq: u64,
    pub lowercase: bool,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    pub fn min_freq(&self) -> u64 {
        self.min_freq
    }

    pub fn freq(&self, token: &str) -> u64 {
        self.freq.get(&self.normalize(token)).copied().unwrap_or(0)
    }

    pub fn normalize(&self, token: &str) -> String {
        if self.lowercase {
            token.to_lowercase()
        } else {
            token.to_string()
        }
    }

    /// Id of a token, falling back to [`UNK_ID`]. Never returns [`PAD_ID`].
    pub fn lookup(&self, token: &str) -> u32 {
        match self.ids.get(&self.normalize(token)) {
            Some(&id) if id != PAD_ID => id,
            _ => UNK_ID,
        }
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token_of(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn snapshot(&self) -> VocabSnapshot {
        VocabSnapshot {
            tokens: self.tokens.clone(),
            freq: self.freq.clone(),
            min_freq: self.min_freq,
            lowercase: self.lowercase,
        }
    }

    pub fn from_snapshot(snap: VocabSnapshot) -> Result<Self, String> {
        if snap.tokens.len() < 2 || snap.tokens[0] != PAD_TOKEN || snap.tokens[1] != UNK_TOKEN {
            return Err("vocabulary must start with <pad>, <unk>".into());
        }
        let mut ids = HashMap::with_capacity(snap.tokens.len());
        for (i, t) in snap.tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(format!("duplicate vocabulary entry `{t}`"));
            }
        }
        Ok(Vocabulary {
            tokens: snap.tokens,
            ids,
            freq: snap.freq,
            min_freq: snap.min_freq.max(1),
            lowercase: snap.lowercase,
        })
    }
}

/// Counts tokens and assigns ids 2.. by descending frequency, ties broken
/// lexicographically. Tokens seen fewer than `min_freq` times get no id.
pub fn fit_vocabulary(corpus: &[TokenSequence], min_freq: u64, lowercase: bool) -> Vocabulary {
    let min_freq = min_freq.max(1);
    let mut freq: BTreeMap<String, u64> = BTreeMap::new();
    for seq in corpus {
        for text in seq.texts() {
            let t = if lowercase { text.to_lowercase() } else { text.to_string() };
            *freq.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&String, u64)> = freq
        .iter()
        .filter(|(t, &c)| c >= min_freq && t.as_str() != PAD_TOKEN && t.as_str() != UNK_TOKEN)
        .map(|(t, &c)| (t, c))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    tokens.extend(ranked.into_iter().map(|(t, _)| t.clone()));
    let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
    Vocabulary {
        tokens,
        ids,
        freq,
        min_freq,
        lowercase,
    }
}

pub fn numericalize(seq: &TokenSequence, vocab: &Vocabulary) -> Vec<u32> {
    seq.texts().map(|t| vocab.lookup(t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(words: &[&str]) -> Vec<TokenSequence> {
        vec![TokenSequence::from_words(words)]
    }

    #[test]
    fn frequency_then_lexical() {
        let v = fit_vocabulary(&corpus(&["a", "b", "a"]), 1, false);
        assert_eq!(v.tokens(), ["<pad>", "<unk>", "a", "b"]);
    }

    #[test]
    fn threshold() {
        let v = fit_vocabulary(&corpus(&["a", "b", "a"]), 2, false);
        assert_eq!(v.tokens(), ["<pad>", "<unk>", "a"]);
        assert_eq!(v.lookup("b"), UNK_ID);
        assert_eq!(v.freq("b"), 1);
    }

    #[test]
    fn empty_corpus() {
        assert_eq!(fit_vocabulary(&[], 1, true).len(), 2);
    }

    #[test]
    fn numericalize_examples() {
        let v = fit_vocabulary(&corpus(&["a", "b", "a"]), 1, false);
        assert_eq!(numericalize(&TokenSequence::from_words(&["a", "zzz"]), &v), [2, 1]);
        assert!(numericalize(&TokenSequence::from_words::<&str>(&[]), &v).is_empty());
        let lower = fit_vocabulary(&corpus(&["a", "b", "a"]), 1, true);
        assert_eq!(numericalize(&TokenSequence::from_words(&["A"]), &lower), [2]);
    }

    #[test]
    fn literal_pad_token_is_not_pad() {
        let v = fit_vocabulary(&corpus(&["<pad>", "x"]), 1, false);
        assert_eq!(v.lookup("<pad>"), UNK_ID);
    }

    #[test]
    fn snapshot_round_trip() {
        let v = fit_vocabulary(&corpus(&["a", "b", "a", "C"]), 1, true);
        assert_eq!(Vocabulary::from_snapshot(v.snapshot()).unwrap(), v);
    }

    proptest! {
        #[test]
        fn ids_dense_and_inverse(words in prop::collection::vec("[a-dA-D]{1,3}", 0..60), min_freq in 1u64..4, lower: bool) {
            let c = vec![TokenSequence::from_words(&words)];
            let v = fit_vocabulary(&c, min_freq, lower);
            for (i, t) in v.tokens().iter().enumerate() {
                prop_assert_eq!(v.id_of(t), Some(i as u32));
                prop_assert_eq!(v.token_of(i as u32), Some(t.as_str()));
            }
            for w in &words {
                let id = v.lookup(w);
                prop_assert_ne!(id, PAD_ID);
                let in_vocab = v.freq(w) >= min_freq;
                prop_assert_eq!(id != UNK_ID, in_vocab);
            }
        }
    }
}
