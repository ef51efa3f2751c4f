use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{CorpusError, TokenSequence};

/// Column separator for CoNLL files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColumnSep {
    /// Tab if the first non-blank line contains a tab, else whitespace.
    #[default]
    Auto,
    Tab,
    Space,
}

impl FromStr for ColumnSep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(ColumnSep::Auto),
            "tab" => Ok(ColumnSep::Tab),
            "space" => Ok(ColumnSep::Space),
            other => Err(format!("unknown column separator `{other}` (auto|tab|space)")),
        }
    }
}

pub fn read_conll(path: impl AsRef<Path>, sep: ColumnSep) -> Result<Vec<TokenSequence>, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    parse_conll(&text, sep)
}

/// Parses CoNLL text: blank lines separate sequences, first column is the
/// token, last column the label, anything in between is ignored.
pub fn parse_conll(text: &str, sep: ColumnSep) -> Result<Vec<TokenSequence>, CorpusError> {
    let sep = match sep {
        ColumnSep::Auto => {
            let first = text.lines().find(|l| !l.trim().is_empty());
            match first {
                Some(l) if l.contains('\t') => ColumnSep::Tab,
                _ => ColumnSep::Space,
            }
        }
        s => s,
    };

    let mut out = Vec::new();
    let mut words: Vec<String> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut flush = |words: &mut Vec<String>, labels: &mut Vec<String>| -> Result<(), CorpusError> {
        if !words.is_empty() {
            let seq = TokenSequence::from_words(words).with_labels(std::mem::take(labels))?;
            if seq.len() > super::LONG_SEQUENCE_WARN {
                log::warn!("sequence of {} tokens exceeds {}", seq.len(), super::LONG_SEQUENCE_WARN);
            }
            out.push(seq);
            words.clear();
        }
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            flush(&mut words, &mut labels)?;
            continue;
        }
        if line.starts_with("-DOCSTART-") {
            continue;
        }
        let cols: Vec<&str> = match sep {
            ColumnSep::Tab => line.split('\t').map(str::trim).collect(),
            _ => line.split_whitespace().collect(),
        };
        if cols.len() < 2 {
            return Err(CorpusError::MalformedLine {
                line_no,
                detail: "expected at least two columns".into(),
            });
        }
        let token = cols[0];
        let label = cols[cols.len() - 1];
        if token.is_empty() || token.chars().any(char::is_whitespace) || label.is_empty() {
            return Err(CorpusError::MalformedLine {
                line_no,
                detail: "empty or whitespace-bearing token/label column".into(),
            });
        }
        words.push(token.to_string());
        labels.push(label.to_string());
    }
    flush(&mut words, &mut labels)?;
    Ok(out)
}

/// Serializes labeled sequences as `token<sep>label` lines with a blank line
/// between sequences.
pub fn write_conll(seqs: &[TokenSequence], sep: char) -> String {
    let mut out = String::new();
    for (i, seq) in seqs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let labels = seq.labels().unwrap_or(&[]);
        for (tok, label) in seq.tokens().iter().zip(labels) {
            let _ = writeln!(out, "{}{sep}{label}", tok.text);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(seqs: &[TokenSequence]) -> Vec<Vec<String>> {
        seqs.iter().map(|s| s.labels().unwrap().to_vec()).collect()
    }

    #[test]
    fn two_sequences() {
        let seqs = parse_conll("a B-PER\nb O\n\nc O\n", ColumnSep::Auto).unwrap();
        assert_eq!(labels(&seqs), vec![vec!["B-PER", "O"], vec!["O"]]);
        assert_eq!(seqs[0].tokens()[1].start, 2);
    }

    #[test]
    fn empty_file() {
        assert!(parse_conll("", ColumnSep::Auto).unwrap().is_empty());
    }

    #[test]
    fn single_column_is_malformed() {
        let err = parse_conll("solo\n", ColumnSep::Auto).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine { line_no: 1, .. }));
    }

    #[test]
    fn middle_columns_docstart_crlf() {
        let text = "-DOCSTART- -X- O\n\nEU NNP B-ORG\r\nrejects VBZ O\r\n\n\n";
        let seqs = parse_conll(text, ColumnSep::Auto).unwrap();
        assert_eq!(seqs.len(), 1);
        assert_eq!(seqs[0].texts().collect::<Vec<_>>(), ["EU", "rejects"]);
        assert_eq!(labels(&seqs), vec![vec!["B-ORG", "O"]]);
    }

    #[test]
    fn tab_detection() {
        let seqs = parse_conll("a\tx\tB-T\nb\tO\n", ColumnSep::Auto).unwrap();
        assert_eq!(labels(&seqs), vec![vec!["B-T", "O"]]);
        assert!(parse_conll("a b\tO\n", ColumnSep::Tab).is_err());
    }

    proptest! {
        #[test]
        fn reserialize_is_fixed_point(
            seqs in prop::collection::vec(
                prop::collection::vec(("[a-zA-Z0-9.,()]{1,6}", "(O|B-[A-Z]|I-[A-Z])"), 1..6),
                0..5,
            )
        ) {
            let text: String = seqs
                .iter()
                .map(|s| s.iter().map(|(t, l)| format!("{t} {l}\n")).collect::<String>())
                .collect::<Vec<_>>()
                .join("\n");
            let first = parse_conll(&text, ColumnSep::Auto).unwrap();
            let again = parse_conll(&write_conll(&first, ' '), ColumnSep::Auto).unwrap();
            prop_assert_eq!(&first, &again);
            let tabbed = parse_conll(&write_conll(&first, '\t'), ColumnSep::Auto).unwrap();
            prop_assert_eq!(first, tabbed);
        }
    }
}
