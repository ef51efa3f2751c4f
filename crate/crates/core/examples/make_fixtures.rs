//! Regenerates the bundled synthetic datasets.
//!
//! ```text
//! cargo run -p sdpkit --example make_fixtures -- data
//! ```

use std::path::PathBuf;

use sdpkit::corpus::{synthetic, write_conll, TokenSequence};

pub const REFERENCE_SPLITS: [(&str, usize, u64); 3] = [("train", 500, 1), ("dev", 100, 2), ("test", 100, 3)];
pub const INTENT_SPLITS: [(&str, usize, u64); 3] = [("train", 150, 11), ("dev", 50, 12), ("test", 50, 13)];

fn csv_text(seqs: &[TokenSequence]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["text", "label"]).unwrap();
    for s in seqs {
        let text = s.texts().collect::<Vec<_>>().join(" ");
        w.write_record([text.as_str(), s.doc_class().unwrap()]).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

fn main() -> std::io::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    let refs = root.join("synthetic_refs");
    let intents = root.join("citation_intent");
    std::fs::create_dir_all(&refs)?;
    std::fs::create_dir_all(&intents)?;
    for (name, n, seed) in REFERENCE_SPLITS {
        std::fs::write(refs.join(format!("{name}.conll")), write_conll(&synthetic::references(n, seed), '\t'))?;
    }
    for (name, n, seed) in INTENT_SPLITS {
        std::fs::write(intents.join(format!("{name}.csv")), csv_text(&synthetic::citation_intents(n, seed)))?;
    }
    println!("{}", root.display());
    Ok(())
}
