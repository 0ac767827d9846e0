//! Labeled bracket precision, recall and F1 with EVALB conventions:
//! preterminals are not scored, the root bracket is, and duplicate spans
//! are matched as a multiset.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::treetext::ParseTree;

/// Tags EVALB's standard parameter file treats as punctuation.
pub const EVALB_PUNCT_TAGS: [&str; 5] = [",", ":", "``", "''", "."];

/// Default cumulative length buckets.
pub const DEFAULT_BUCKETS: [usize; 7] = [10, 20, 30, 40, 50, 60, 70];

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BracketSpan {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Remove words whose gold tag is punctuation before extracting spans.
    pub delete_punct: bool,
    pub punct_tags: Vec<String>,
    /// Cumulative length bounds for the per-bucket breakdown; empty for none.
    pub buckets: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            delete_punct: false,
            punct_tags: EVALB_PUNCT_TAGS.iter().map(|s| s.to_string()).collect(),
            buckets: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketScore {
    pub max_len: usize,
    pub sentences: usize,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub sentences: usize,
    pub matched: usize,
    pub gold_total: usize,
    pub pred_total: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_bucket: Vec<BucketScore>,
    /// Fraction of predictions that needed bracket or arity repair.
    pub malformed_rate: f64,
    pub delete_punct: bool,
}

/// Precision, recall and F1 as percentages from raw counts.
pub fn prf(matched: usize, gold_total: usize, pred_total: usize) -> (f64, f64, f64) {
    let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    let p = pct(matched, pred_total);
    let r = pct(matched, gold_total);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

impl F1Report {
    fn from_counts(sentences: usize, matched: usize, gold_total: usize, pred_total: usize, delete_punct: bool) -> Self {
        let (precision, recall, f1) = prf(matched, gold_total, pred_total);
        F1Report {
            sentences,
            matched,
            gold_total,
            pred_total,
            precision,
            recall,
            f1,
            per_bucket: Vec::new(),
            malformed_rate: 0.0,
            delete_punct,
        }
    }

    pub fn with_malformed(mut self, malformed: usize) -> Self {
        self.malformed_rate = if self.sentences == 0 {
            0.0
        } else {
            malformed as f64 / self.sentences as f64
        };
        self
    }

    /// Bucket bound and F1, one row per bucket.
    pub fn bucket_tsv(&self) -> String {
        let mut out = String::from("max_len\tf1\n");
        for b in &self.per_bucket {
            out.push_str(&format!("{}\t{:.2}\n", b.max_len, b.f1));
        }
        out
    }
}

impl fmt::Display for F1Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sentences        {}", self.sentences)?;
        writeln!(f, "matched brackets {}", self.matched)?;
        writeln!(f, "gold brackets    {}", self.gold_total)?;
        writeln!(f, "test brackets    {}", self.pred_total)?;
        writeln!(f, "precision        {:.2}", self.precision)?;
        writeln!(f, "recall           {:.2}", self.recall)?;
        writeln!(f, "F1               {:.2}", self.f1)?;
        writeln!(f, "malformed rate   {:.4}", self.malformed_rate)?;
        writeln!(
            f,
            "punctuation      {}",
            if self.delete_punct { "deleted" } else { "kept" }
        )?;
        for b in &self.per_bucket {
            writeln!(f, "len <= {:<3}       F1 {:.2} ({} sentences)", b.max_len, b.f1, b.sentences)?;
        }
        Ok(())
    }
}

/// One span per internal node (root included) over word positions.
pub fn extract_brackets(tree: &ParseTree) -> Vec<BracketSpan> {
    extract_with_mask(tree, None)
}

// `keep[i] == false` drops word i; spans are then over the kept words and
// constituents left without words disappear.
fn extract_with_mask(tree: &ParseTree, keep: Option<&[bool]>) -> Vec<BracketSpan> {
    fn walk(
        t: &ParseTree,
        keep: Option<&[bool]>,
        word: &mut usize,
        pos: &mut usize,
        out: &mut Vec<BracketSpan>,
    ) {
        match t {
            ParseTree::Preterminal { .. } => {
                if keep.map_or(true, |k| k[*word]) {
                    *pos += 1;
                }
                *word += 1;
            }
            ParseTree::Internal { label, children } => {
                let start = *pos;
                let slot = out.len();
                out.push(BracketSpan {
                    label: label.clone(),
                    start,
                    end: start,
                });
                for c in children {
                    walk(c, keep, word, pos, out);
                }
                out[slot].end = *pos;
            }
        }
    }
    let mut out = Vec::new();
    walk(tree, keep, &mut 0, &mut 0, &mut out);
    out.retain(|s| s.end > s.start);
    out
}

fn counts(spans: Vec<BracketSpan>) -> HashMap<BracketSpan, usize> {
    let mut m = HashMap::new();
    for s in spans {
        *m.entry(s).or_insert(0) += 1;
    }
    m
}

/// Size of the multiset intersection.
pub fn matched_brackets(gold: &[BracketSpan], pred: &[BracketSpan]) -> usize {
    let g = counts(gold.to_vec());
    let p = counts(pred.to_vec());
    g.iter()
        .map(|(span, &n)| n.min(p.get(span).copied().unwrap_or(0)))
        .sum()
}

#[derive(Clone, Copy, Debug, Default)]
struct SentenceCounts {
    matched: usize,
    gold: usize,
    pred: usize,
}

fn sentence_counts(index: usize, gold: &ParseTree, pred: &ParseTree, cfg: &EvalConfig) -> Result<SentenceCounts> {
    let n = gold.len();
    if pred.len() != n {
        return Err(Error::Alignment {
            index,
            message: format!("gold has {n} words, prediction has {}", pred.len()),
        });
    }
    let keep: Option<Vec<bool>> = cfg.delete_punct.then(|| {
        gold.tags()
            .iter()
            .map(|t| !cfg.punct_tags.iter().any(|p| p == t))
            .collect()
    });
    let g = extract_with_mask(gold, keep.as_deref());
    let p = extract_with_mask(pred, keep.as_deref());
    Ok(SentenceCounts {
        matched: matched_brackets(&g, &p),
        gold: g.len(),
        pred: p.len(),
    })
}

fn all_counts(gold: &[ParseTree], pred: &[ParseTree], cfg: &EvalConfig) -> Result<Vec<SentenceCounts>> {
    if gold.len() != pred.len() {
        return Err(Error::Alignment {
            index: gold.len().min(pred.len()),
            message: format!("{} gold trees but {} predicted", gold.len(), pred.len()),
        });
    }
    gold.iter()
        .zip(pred)
        .enumerate()
        .map(|(i, (g, p))| sentence_counts(i, g, p, cfg))
        .collect()
}

fn micro(counts: &[SentenceCounts], delete_punct: bool) -> F1Report {
    let (m, g, p) = counts.iter().fold((0, 0, 0), |(m, g, p), c| {
        (m + c.matched, g + c.gold, p + c.pred)
    });
    F1Report::from_counts(counts.len(), m, g, p, delete_punct)
}

/// Corpus-level (micro-averaged) scores with default conventions.
pub fn bracket_f1(gold: &[ParseTree], pred: &[ParseTree]) -> Result<F1Report> {
    evaluate(gold, pred, &EvalConfig::default())
}

/// Corpus-level scores, plus the per-bucket breakdown requested in `cfg`.
pub fn evaluate(gold: &[ParseTree], pred: &[ParseTree], cfg: &EvalConfig) -> Result<F1Report> {
    let counts = all_counts(gold, pred, cfg)?;
    let mut report = micro(&counts, cfg.delete_punct);
    report.per_bucket = buckets_from(gold, &counts, &cfg.buckets);
    Ok(report)
}

fn buckets_from(gold: &[ParseTree], counts: &[SentenceCounts], bounds: &[usize]) -> Vec<BucketScore> {
    let lengths: Vec<usize> = gold.iter().map(ParseTree::len).collect();
    bounds
        .iter()
        .filter_map(|&bound| {
            let sub: Vec<SentenceCounts> = counts
                .iter()
                .zip(&lengths)
                .filter(|(_, &n)| n <= bound)
                .map(|(c, _)| *c)
                .collect();
            if sub.is_empty() {
                return None;
            }
            let r = micro(&sub, false);
            Some(BucketScore {
                max_len: bound,
                sentences: sub.len(),
                f1: r.f1,
            })
        })
        .collect()
}

/// F1 over the sentences of at most each bound's length. Buckets with no
/// sentences are omitted.
pub fn length_report(
    gold: &[ParseTree],
    pred: &[ParseTree],
    bounds: &[usize],
    cfg: &EvalConfig,
) -> Result<Vec<BucketScore>> {
    let counts = all_counts(gold, pred, cfg)?;
    Ok(buckets_from(gold, &counts, bounds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treetext::{normalize_pos, read_bracketed};

    fn tree(s: &str) -> ParseTree {
        read_bracketed(s).unwrap().remove(0)
    }

    fn span(label: &str, start: usize, end: usize) -> BracketSpan {
        BracketSpan {
            label: label.into(),
            start,
            end,
        }
    }

    const FIG2: &str = "(S (NP (NNP John)) (VP (VBZ has) (NP (DT a) (NN dog))) (. .))";

    #[test]
    fn example_tree_spans() {
        let mut spans = extract_brackets(&tree(FIG2));
        spans.sort();
        let mut want = vec![span("S", 0, 5), span("NP", 0, 1), span("VP", 1, 4), span("NP", 2, 4)];
        want.sort();
        assert_eq!(spans, want);
        assert!(extract_brackets(&ParseTree::preterminal("XX", "w")).is_empty());
        assert_eq!(extract_brackets(&normalize_pos(&tree(FIG2))), extract_brackets(&tree(FIG2)));
    }

    #[test]
    fn identity_and_disjoint() {
        let gold = vec![tree(FIG2), tree("(X (A a) (B b))")];
        let r = bracket_f1(&gold, &gold).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (100.0, 100.0, 100.0));
        let pred = vec![
            tree("(Q (R (NNP John)) (R (VBZ has) (DT a)) (NN dog) (. .))"),
            tree("(Y (A a) (B b))"),
        ];
        let r = bracket_f1(&gold, &pred).unwrap();
        assert_eq!(r.matched, 0);
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn duplicate_spans_are_a_multiset() {
        let gold = tree("(S (S (A a)))");
        let pred = tree("(S (A a))");
        let r = bracket_f1(&[gold], &[pred]).unwrap();
        assert_eq!((r.matched, r.gold_total, r.pred_total), (1, 2, 1));
        assert_eq!(r.precision, 100.0);
        assert_eq!(r.recall, 50.0);
    }

    #[test]
    fn misalignment_is_reported() {
        let err = bracket_f1(&[tree("(S (A a))")], &[]).unwrap_err();
        assert!(matches!(err, Error::Alignment { .. }));
        let err = bracket_f1(
            &[tree("(S (A a))"), tree("(S (A a))")],
            &[tree("(S (A a))"), tree("(S (A a) (B b))")],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Alignment { index: 1, .. }), "{err}");
    }

    #[test]
    fn punctuation_deletion_switch() {
        let gold = tree("(S (NP (A a)) (P (. .)))");
        let pred = tree("(S (NP (XX a)) (XX .))");
        let kept = bracket_f1(&[gold.clone()], &[pred.clone()]).unwrap();
        assert_eq!((kept.matched, kept.gold_total, kept.pred_total), (2, 3, 2));
        let cfg = EvalConfig {
            delete_punct: true,
            ..EvalConfig::default()
        };
        let deleted = evaluate(&[gold], &[pred], &cfg).unwrap();
        // P covers only punctuation and vanishes; S shrinks to 0-1.
        assert_eq!((deleted.matched, deleted.gold_total, deleted.pred_total), (2, 2, 2));
        assert!(deleted.delete_punct);
    }

    #[test]
    fn cumulative_buckets() {
        let t = tree("(S (A a) (B b) (C c) (D d) (E e))");
        let gold = vec![t.clone(); 3];
        let r = length_report(&gold, &gold, &[3, 10, 20, 30], &EvalConfig::default()).unwrap();
        assert_eq!(r.len(), 3, "empty bucket omitted");
        assert!(r.iter().all(|b| b.f1 == 100.0 && b.sentences == 3));
    }

    #[test]
    fn bucket_values_are_micro_averages() {
        // len 2: 1 of 2 gold matched, 1 of 1 predicted
        let g1 = tree("(S (NP (A a)) (B b))");
        let p1 = tree("(S (A a) (B b))");
        // len 4: all 2 matched
        let g2 = tree("(S (A a) (VP (B b) (C c) (D d)))");
        // len 12: 1 of 2 gold, 1 of 3 pred
        let g3 = tree("(S (A a) (A a) (A a) (A a) (A a) (A a) (X (A a) (A a) (A a) (A a) (A a) (A a)))");
        let p3 = tree("(S (Y (A a) (A a) (A a) (A a) (A a) (A a)) (Z (A a) (A a) (A a) (A a) (A a) (A a)))");
        let gold = vec![g1, g2.clone(), g3];
        let pred = vec![p1, g2, p3];
        let cfg = EvalConfig {
            buckets: vec![2, 5, 20],
            ..EvalConfig::default()
        };
        let r = evaluate(&gold, &pred, &cfg).unwrap();
        // ≤2: m=1 g=2 p=1 → P 100, R 50, F 66.67
        let f = |p: f64, r: f64| 2.0 * p * r / (p + r);
        assert!((r.per_bucket[0].f1 - f(100.0, 50.0)).abs() < 1e-12);
        // ≤5: m=3 g=4 p=3
        assert!((r.per_bucket[1].f1 - f(100.0, 75.0)).abs() < 1e-12);
        // ≤20: m=4 g=6 p=6
        assert!((r.per_bucket[2].f1 - f(400.0 / 6.0, 400.0 / 6.0)).abs() < 1e-12);
        assert_eq!(r.f1, r.per_bucket[2].f1);
        assert!(r.bucket_tsv().starts_with("max_len\tf1\n2\t66.67\n"));
    }
}
