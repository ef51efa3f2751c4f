use std::path::Path;

use super::{tokenize_whitespace, CorpusError, TokenSequence};

pub fn read_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Vec<TokenSequence>, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    parse_csv(&text, has_header)
}

/// Parses `text,label` records (RFC 4180 quoting). Record numbers in errors
/// are 1-based and count the header row when present.
pub fn parse_csv(text: &str, has_header: bool) -> Result<Vec<TokenSequence>, CorpusError> {
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .double_quote(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record_no = i + 1;
        let record = record.map_err(|e| CorpusError::MalformedRecord {
            record_no,
            detail: e.to_string(),
        })?;
        if has_header && record_no == 1 {
            continue;
        }
        if record.len() != 2 {
            return Err(CorpusError::MalformedRecord {
                record_no,
                detail: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let label = record[1].trim();
        if label.is_empty() {
            return Err(CorpusError::MalformedRecord {
                record_no,
                detail: "empty label".into(),
            });
        }
        out.push(tokenize_whitespace(&record[0]).with_class(label));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoted_text() {
        let seqs = parse_csv("\"We follow prior work\",background\n", false).unwrap();
        assert_eq!(seqs[0].texts().collect::<Vec<_>>(), ["We", "follow", "prior", "work"]);
        assert_eq!(seqs[0].doc_class(), Some("background"));
    }

    #[test]
    fn doubled_quotes() {
        let seqs = parse_csv("\"a \"\"q\"\" b\",method\n", false).unwrap();
        assert_eq!(seqs[0].texts().collect::<Vec<_>>(), ["a", "\"q\"", "b"]);
        assert_eq!(seqs[0].doc_class(), Some("method"));
    }

    #[test]
    fn comma_inside_quotes() {
        let seqs = parse_csv("\"x, y\",result\nplain,background\n", false).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].texts().collect::<Vec<_>>(), ["x,", "y"]);
    }

    #[test]
    fn one_field_is_malformed() {
        let err = parse_csv("onlyonefield\n", false).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRecord { record_no: 1, .. }));
    }

    #[test]
    fn unterminated_quote_is_malformed() {
        let err = parse_csv("ok,background\n\"never closed,method\nnext,result\n", false).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRecord { record_no: 2, .. }));
    }

    #[test]
    fn header_skipped() {
        let seqs = parse_csv("text,label\nhello world,background\n", true).unwrap();
        assert_eq!(seqs.len(), 1);
    }
}
