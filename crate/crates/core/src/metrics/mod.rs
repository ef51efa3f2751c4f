//! Precision/recall/F1, token accuracy, CoNLL span scoring and confusion
//! matrices.
//!
//! Conventions: any 0/0 rate is 0, and macro averages run over the classes
//! that occur in gold or prediction, not over the full label inventory.

mod spans;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::spans::{extract_spans, Span};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("gold and prediction differ in length at item {index}: {gold} vs {pred}")]
    LengthMismatch { index: usize, gold: usize, pred: usize },
    #[error("nothing to score")]
    Empty,
    #[error("label `{label}` at position {index} is neither O nor B-/I- tagged")]
    UnknownTagFormat { index: usize, label: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricLevel {
    Class,
    Token,
    Span,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassStats {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ClassStats {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let (precision, recall, f1) = prf(tp, fp, fn_);
        ClassStats {
            precision,
            recall,
            f1,
            support: tp + fn_,
            tp,
            fp,
            fn_,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Rows are gold, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn diagonal(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn get(&self, gold: &str, pred: &str) -> u64 {
        let g = self.labels.iter().position(|l| l == gold);
        let p = self.labels.iter().position(|l| l == pred);
        match (g, p) {
            (Some(g), Some(p)) => self.counts[g][p],
            _ => 0,
        }
    }

    pub fn to_table(&self) -> String {
        let width = self
            .labels
            .iter()
            .map(|l| l.chars().count())
            .chain(self.counts.iter().flatten().map(|c| c.to_string().len()))
            .max()
            .unwrap_or(1)
            .max(9);
        let mut out = format!("{:<width$}", "gold\\pred");
        for l in &self.labels {
            let _ = write!(out, " {l:>width$}");
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            let _ = write!(out, "{l:<width$}");
            for c in row {
                let _ = write!(out, " {c:>width$}");
            }
            out.push('\n');
        }
        out
    }
}

/// Counts `(gold, pred)` pairs over the union of observed labels, sorted.
pub fn confusion_matrix<S: AsRef<str>>(gold: &[S], pred: &[S]) -> Result<ConfusionMatrix, MetricError> {
    check_len(0, gold.len(), pred.len())?;
    let labels: Vec<String> = gold
        .iter()
        .chain(pred)
        .map(|s| s.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut counts = vec![vec![0u64; labels.len()]; labels.len()];
    for (g, p) in gold.iter().zip(pred) {
        counts[index[g.as_ref()]][index[p.as_ref()]] += 1;
    }
    Ok(ConfusionMatrix { labels, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SpanCounts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub level: MetricLevel,
    pub per_class: BTreeMap<String, ClassStats>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub accuracy: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub span_counts: Option<SpanCounts>,
}

impl MetricReport {
    fn from_class_counts(
        level: MetricLevel,
        counts: BTreeMap<String, (usize, usize, usize)>,
        confusion: ConfusionMatrix,
    ) -> Self {
        let per_class: BTreeMap<String, ClassStats> = counts
            .into_iter()
            .map(|(k, (tp, fp, fn_))| (k, ClassStats::from_counts(tp, fp, fn_)))
            .collect();
        let n = per_class.len();
        let mean = |f: fn(&ClassStats) -> f64| {
            if n == 0 {
                0.0
            } else {
                per_class.values().map(f).sum::<f64>() / n as f64
            }
        };
        let (tp, fp, fn_) = per_class
            .values()
            .fold((0, 0, 0), |(a, b, c), s| (a + s.tp, b + s.fp, c + s.fn_));
        let (micro_precision, micro_recall, micro_f1) = prf(tp, fp, fn_);
        MetricReport {
            level,
            macro_precision: mean(|s| s.precision),
            macro_recall: mean(|s| s.recall),
            macro_f1: mean(|s| s.f1),
            micro_precision,
            micro_recall,
            micro_f1,
            per_class,
            accuracy: None,
            confusion,
            span_counts: None,
        }
    }

    /// Looks up a named aggregate (`macro_f1`, `micro_f1`, `accuracy`, …).
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "macro_precision" => Some(self.macro_precision),
            "macro_recall" => Some(self.macro_recall),
            "macro_f1" => Some(self.macro_f1),
            "micro_precision" => Some(self.micro_precision),
            "micro_recall" => Some(self.micro_recall),
            "micro_f1" => Some(self.micro_f1),
            "accuracy" => self.accuracy,
            _ => None,
        }
    }

    /// Fixed-width per-class table. Rates are shown as percentages.
    pub fn to_table(&self) -> String {
        let unit = match self.level {
            MetricLevel::Span => "type",
            _ => "class",
        };
        let width = self
            .per_class
            .keys()
            .map(|k| k.chars().count())
            .chain(["macro avg".len(), unit.len()])
            .max()
            .unwrap_or(9);
        let mut out = format!(
            "{unit:<width$} {:>9} {:>9} {:>9} {:>9}\n",
            "precision", "recall", "f1", "support"
        );
        let pct = |x: f64| format!("{:.2}", 100.0 * x);
        for (name, s) in &self.per_class {
            let _ = writeln!(
                out,
                "{name:<width$} {:>9} {:>9} {:>9} {:>9}",
                pct(s.precision),
                pct(s.recall),
                pct(s.f1),
                s.support
            );
        }
        let support: usize = self.per_class.values().map(|s| s.support).sum();
        out.push('\n');
        let _ = writeln!(
            out,
            "{:<width$} {:>9} {:>9} {:>9} {:>9}",
            "micro avg",
            pct(self.micro_precision),
            pct(self.micro_recall),
            pct(self.micro_f1),
            support
        );
        let _ = writeln!(
            out,
            "{:<width$} {:>9} {:>9} {:>9} {:>9}",
            "macro avg",
            pct(self.macro_precision),
            pct(self.macro_recall),
            pct(self.macro_f1),
            support
        );
        if let Some(acc) = self.accuracy {
            let _ = writeln!(out, "{:<width$} {:>9}", "accuracy", pct(acc));
        }
        if let Some(c) = self.span_counts {
            let _ = writeln!(out, "spans: gold {} predicted {} correct {}", c.gold, c.predicted, c.correct);
        }
        out
    }
}

fn check_len(index: usize, gold: usize, pred: usize) -> Result<(), MetricError> {
    if gold != pred {
        return Err(MetricError::LengthMismatch { index, gold, pred });
    }
    Ok(())
}

/// Per-class P/R/F1 over single-label items.
pub fn classification_prf<S: AsRef<str>>(gold: &[S], pred: &[S]) -> Result<MetricReport, MetricError> {
    check_len(0, gold.len(), pred.len())?;
    if gold.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (g.as_ref(), p.as_ref());
        if g == p {
            counts.entry(g.to_string()).or_default().0 += 1;
            correct += 1;
        } else {
            counts.entry(p.to_string()).or_default().1 += 1;
            counts.entry(g.to_string()).or_default().2 += 1;
        }
    }
    let mut report = MetricReport::from_class_counts(MetricLevel::Class, counts, confusion_matrix(gold, pred)?);
    report.accuracy = Some(ratio(correct, gold.len()));
    Ok(report)
}

fn flatten<'a, S: AsRef<str>>(gold: &'a [Vec<S>], pred: &'a [Vec<S>]) -> Result<(Vec<&'a str>, Vec<&'a str>), MetricError> {
    check_len(0, gold.len(), pred.len())?;
    let mut g_all = Vec::new();
    let mut p_all = Vec::new();
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        check_len(i, g.len(), p.len())?;
        g_all.extend(g.iter().map(AsRef::as_ref));
        p_all.extend(p.iter().map(AsRef::as_ref));
    }
    Ok((g_all, p_all))
}

/// Micro token accuracy pooled over the corpus.
pub fn token_accuracy<S: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<S>]) -> Result<f64, MetricError> {
    let (g, p) = flatten(gold, pred)?;
    let correct = g.iter().zip(&p).filter(|(a, b)| a == b).count();
    Ok(ratio(correct, g.len()))
}

/// Per-label P/R/F1 treating every token as one item.
pub fn token_prf<S: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<S>]) -> Result<MetricReport, MetricError> {
    let (g, p) = flatten(gold, pred)?;
    let mut report = classification_prf(&g, &p)?;
    report.level = MetricLevel::Token;
    Ok(report)
}

/// CoNLL-style span scoring: a predicted span counts only when type,
/// start and end all match a gold span.
pub fn conll_f1<S: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<S>]) -> Result<MetricReport, MetricError> {
    let (g_flat, p_flat) = flatten(gold, pred)?;
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    let mut totals = SpanCounts::default();
    for (g, p) in gold.iter().zip(pred) {
        let gs: BTreeSet<Span> = extract_spans(g)?.into_iter().collect();
        let ps: BTreeSet<Span> = extract_spans(p)?.into_iter().collect();
        totals.gold += gs.len();
        totals.predicted += ps.len();
        for s in &ps {
            let e = counts.entry(s.kind.clone()).or_default();
            if gs.contains(s) {
                e.0 += 1;
                totals.correct += 1;
            } else {
                e.1 += 1;
            }
        }
        for s in gs.difference(&ps) {
            counts.entry(s.kind.clone()).or_default().2 += 1;
        }
    }
    let confusion = confusion_matrix(&g_flat, &p_flat)?;
    let correct_tokens = g_flat.iter().zip(&p_flat).filter(|(a, b)| a == b).count();
    let mut report = MetricReport::from_class_counts(MetricLevel::Span, counts, confusion);
    report.accuracy = Some(ratio(correct_tokens, g_flat.len()));
    report.span_counts = Some(totals);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn prf_hand_case() {
        let r = classification_prf(&["a", "a", "b"], &["a", "b", "b"]).unwrap();
        assert!((r.per_class["a"].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.per_class["b"].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.per_class["a"].support, 2);
    }

    #[test]
    fn prf_perfect_and_disjoint() {
        let r = classification_prf(&["a", "b"], &["a", "b"]).unwrap();
        assert_eq!((r.macro_f1, r.micro_f1, r.accuracy), (1.0, 1.0, Some(1.0)));
        let r = classification_prf(&["a", "b"], &["c", "d"]).unwrap();
        assert_eq!(r.macro_f1, 0.0);
        assert_eq!(r.per_class.len(), 4);
    }

    #[test]
    fn prf_errors() {
        let empty: [&str; 0] = [];
        assert_eq!(classification_prf(&empty, &empty), Err(MetricError::Empty));
        assert!(matches!(classification_prf(&["a"], &["a", "b"]), Err(MetricError::LengthMismatch { .. })));
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(token_accuracy(&[v(&["A", "B"])], &[v(&["A", "A"])]).unwrap(), 0.5);
        let g = [v(&["A"]), v(&["A", "A", "A"])];
        let p = [v(&["B"]), v(&["A", "A", "A"])];
        assert_eq!(token_accuracy(&g, &p).unwrap(), 0.75);
        assert!(token_accuracy(&[v(&["A"])], &[v(&[])]).is_err());
    }

    #[test]
    fn conll_hand_case() {
        let g = [v(&["B-PER", "I-PER", "O", "B-LOC"])];
        let p = [v(&["B-PER", "I-PER", "O", "O"])];
        let r = conll_f1(&g, &p).unwrap();
        assert_eq!(r.micro_precision, 1.0);
        assert_eq!(r.micro_recall, 0.5);
        assert!((r.micro_f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            r.span_counts,
            Some(SpanCounts {
                gold: 2,
                predicted: 1,
                correct: 1
            })
        );
    }

    #[test]
    fn conll_all_outside_prediction() {
        let g = [v(&["B-PER", "O"])];
        let p = [v(&["O", "O"])];
        let r = conll_f1(&g, &p).unwrap();
        assert_eq!((r.micro_precision, r.micro_recall, r.micro_f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn confusion_cases() {
        let m = confusion_matrix(&["A", "B"], &["A", "A"]).unwrap();
        assert_eq!(m.get("A", "A"), 1);
        assert_eq!(m.get("B", "A"), 1);
        assert_eq!(m.total(), 2);
        let empty: [&str; 0] = [];
        assert_eq!(confusion_matrix(&empty, &empty).unwrap().total(), 0);
    }

    #[test]
    fn table_renders() {
        let r = classification_prf(&["a", "a", "b"], &["a", "b", "b"]).unwrap();
        let t = r.to_table();
        assert!(t.contains("macro avg"));
        assert!(t.contains("66.67"));
    }

    fn labels() -> impl Strategy<Value = (Vec<String>, Vec<String>)> {
        prop::collection::vec((0u8..4, 0u8..4), 1..40).prop_map(|pairs| {
            pairs
                .into_iter()
                .map(|(a, b)| (format!("c{a}"), format!("c{b}")))
                .unzip()
        })
    }

    fn bio_seq() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["O", "B-X", "I-X", "B-Y", "I-Y"]), 0..12)
            .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn macro_f1_permutation_invariant((g, p) in labels(), perm in Just([3usize, 0, 2, 1]).prop_shuffle()) {
            let rename = |s: &String| format!("r{}", perm[s[1..].parse::<usize>().unwrap()]);
            let g2: Vec<String> = g.iter().map(rename).collect();
            let p2: Vec<String> = p.iter().map(rename).collect();
            let a = classification_prf(&g, &p).unwrap();
            let b = classification_prf(&g2, &p2).unwrap();
            prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
        }

        #[test]
        fn rates_in_unit_interval((g, p) in labels()) {
            let r = classification_prf(&g, &p).unwrap();
            for s in r.per_class.values() {
                for x in [s.precision, s.recall, s.f1] {
                    prop_assert!((0.0..=1.0).contains(&x));
                }
            }
            let support: usize = r.per_class.values().map(|s| s.support).sum();
            prop_assert_eq!(support, g.len());
            prop_assert!((r.micro_f1 - r.accuracy.unwrap()).abs() < 1e-12);
        }

        #[test]
        fn confusion_diagonal_is_accuracy((g, p) in labels()) {
            let m = confusion_matrix(&g, &p).unwrap();
            let acc = token_accuracy(&[g.clone()], &[p.clone()]).unwrap();
            prop_assert_eq!(m.total() as usize, g.len());
            prop_assert!((m.diagonal() as f64 / m.total() as f64 - acc).abs() < 1e-12);
        }

        #[test]
        fn conll_perfect_iff_equal_spans(pairs in prop::collection::vec((bio_seq(), bio_seq()), 1..5)) {
            let (g, p): (Vec<_>, Vec<_>) = pairs
                .into_iter()
                .map(|(a, mut b)| { b.resize(a.len(), "O".to_string()); (a, b) })
                .unzip();
            let r = conll_f1(&g, &p).unwrap();
            let equal = g.iter().zip(&p).all(|(a, b)| extract_spans(a).unwrap() == extract_spans(b).unwrap());
            let any_spans = g.iter().any(|a| !extract_spans(a).unwrap().is_empty());
            if any_spans {
                prop_assert_eq!(r.micro_f1 == 1.0, equal);
            }
        }
    }
}
