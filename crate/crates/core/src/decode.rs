//! Greedy, beam and ensemble decoding, and the sentence to tree pipeline.
//!
//! Search runs over any [`StepScorer`]: a trained model, an ensemble of
//! them, or a hand-set table model. Finished hypotheses stay in the beam
//! and compete on raw total log probability.

use std::cmp::Ordering;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::model::{AttentionMemory, LstmState, Mode, ModelParams, END_ID};
use crate::numerics::Scalar;
use crate::treetext::{delinearize, repair, LinearSymbol, ParseTree, NORMALIZED_TAG};
use crate::vocab::Vocab;

/// Root label used when a repaired sequence is not a single constituent.
pub const FALLBACK_ROOT: &str = "S";

/// Default beam width.
pub const DEFAULT_BEAM: usize = 10;

/// Decoding length cap for an `n`-word sentence. A linearization of `n`
/// words has up to about `3n` symbols.
pub fn default_max_len(n: usize) -> usize {
    3 * n + 10
}

/// Distribution over the next symbol, the state to carry forward and the
/// attention weights used at this step.
#[derive(Clone, Debug)]
pub struct Step<St> {
    pub dist: Vec<f64>,
    pub state: St,
    pub attention: Vec<f64>,
}

/// A left-to-right symbol model that search can drive.
pub trait StepScorer {
    type Context;
    type State: Clone;

    fn input_size(&self) -> usize;
    fn output_size(&self) -> usize;
    /// Per-input context and the state before the first output symbol.
    fn start(&self, input: &[usize]) -> Result<(Self::Context, Self::State)>;
    /// Consumes `prev` and predicts the next symbol.
    fn step(&self, ctx: &Self::Context, prev: usize, state: &Self::State) -> Result<Step<Self::State>>;
}

impl<S: Scalar> StepScorer for ModelParams<S> {
    type Context = AttentionMemory<S>;
    type State = Vec<LstmState<S>>;

    fn input_size(&self) -> usize {
        self.hyper.input_vocab
    }

    fn output_size(&self) -> usize {
        self.hyper.output_vocab
    }

    fn start(&self, input: &[usize]) -> Result<(Self::Context, Self::State)> {
        let encoded = self.encode(input, Mode::Inference)?;
        Ok((self.memory(&encoded), self.decoder_start(&encoded)))
    }

    fn step(&self, ctx: &Self::Context, prev: usize, state: &Self::State) -> Result<Step<Self::State>> {
        let out = self.decode_step(prev, state, ctx, Mode::Inference)?;
        Ok(Step {
            dist: out.dist.iter().map(|x| x.as_f64()).collect(),
            state: out.next_state,
            attention: out.attention.iter().map(|x| x.as_f64()).collect(),
        })
    }
}

/// Members decode in lockstep; each step's distribution is the arithmetic
/// mean of theirs.
#[derive(Clone, Debug)]
pub struct Ensemble<'a, M> {
    members: Vec<&'a M>,
}

impl<'a, M: StepScorer> Ensemble<'a, M> {
    pub fn new(members: Vec<&'a M>) -> Result<Self> {
        let first = members.first().ok_or(Error::Empty("ensemble"))?;
        let shape = (first.input_size(), first.output_size());
        if let Some(i) = members
            .iter()
            .position(|m| (m.input_size(), m.output_size()) != shape)
        {
            return Err(Error::Vocab(format!(
                "ensemble member {i} has vocabulary sizes ({}, {}), expected {shape:?}",
                members[i].input_size(),
                members[i].output_size()
            )));
        }
        Ok(Ensemble { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

impl<M: StepScorer> StepScorer for Ensemble<'_, M> {
    type Context = Vec<M::Context>;
    type State = Vec<M::State>;

    fn input_size(&self) -> usize {
        self.members[0].input_size()
    }

    fn output_size(&self) -> usize {
        self.members[0].output_size()
    }

    fn start(&self, input: &[usize]) -> Result<(Self::Context, Self::State)> {
        self.members.iter().map(|m| m.start(input)).collect::<Result<Vec<_>>>().map(|v| v.into_iter().unzip())
    }

    fn step(&self, ctx: &Self::Context, prev: usize, state: &Self::State) -> Result<Step<Self::State>> {
        let k = self.members.len() as f64;
        let mut dist = vec![0.0; self.output_size()];
        let mut attention: Vec<f64> = Vec::new();
        let mut states = Vec::with_capacity(self.members.len());
        for ((m, c), s) in self.members.iter().zip(ctx).zip(state) {
            let step = m.step(c, prev, s)?;
            for (d, p) in dist.iter_mut().zip(&step.dist) {
                *d += p / k;
            }
            if attention.is_empty() {
                attention = vec![0.0; step.attention.len()];
            }
            for (a, w) in attention.iter_mut().zip(&step.attention) {
                *a += w / k;
            }
            states.push(step.state);
        }
        let total: f64 = dist.iter().sum();
        if total > 0.0 && (total - 1.0).abs() > 1e-9 {
            dist.iter_mut().for_each(|d| *d /= total);
        }
        Ok(Step {
            dist,
            state: states,
            attention,
        })
    }
}

/// Hand-set model: the distribution at output step `t` depends only on the
/// previous symbol, `tables[min(t, last)][prev]`. Attention is uniform.
#[derive(Clone, Debug, PartialEq)]
pub struct TableScorer {
    pub input_size: usize,
    pub tables: Vec<Vec<Vec<f64>>>,
}

impl TableScorer {
    pub fn new(input_size: usize, tables: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let v = tables
            .first()
            .map(Vec::len)
            .ok_or(Error::Empty("table scorer"))?;
        for table in &tables {
            if table.len() != v || table.iter().any(|row| row.len() != v) {
                return Err(Error::Dimension {
                    op: "table scorer",
                    detail: format!("every table must be {v}x{v}"),
                });
            }
        }
        Ok(TableScorer { input_size, tables })
    }
}

impl StepScorer for TableScorer {
    type Context = usize;
    type State = usize;

    fn input_size(&self) -> usize {
        self.input_size
    }

    fn output_size(&self) -> usize {
        self.tables[0].len()
    }

    fn start(&self, input: &[usize]) -> Result<(usize, usize)> {
        if input.is_empty() {
            return Err(Error::Empty("table scorer input"));
        }
        Ok((input.len(), 0))
    }

    fn step(&self, ctx: &usize, prev: usize, t: &usize) -> Result<Step<usize>> {
        let table = &self.tables[(*t).min(self.tables.len() - 1)];
        let dist = table
            .get(prev)
            .ok_or_else(|| Error::Dimension {
                op: "table scorer",
                detail: format!("symbol {prev} outside vocabulary of {}", table.len()),
            })?
            .clone();
        Ok(Step {
            dist,
            state: t + 1,
            attention: vec![1.0 / *ctx as f64; *ctx],
        })
    }
}

/// A (partial) output sequence. `symbols` includes the final END when
/// `finished`.
#[derive(Clone, Debug)]
pub struct Hypothesis<St> {
    pub symbols: Vec<usize>,
    pub log_prob: f64,
    pub state: St,
    pub finished: bool,
}

/// One attention row per output step, one column per encoder position.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AttentionTrace {
    pub rows: Vec<Vec<f64>>,
}

impl AttentionTrace {
    /// Largest deviation of a row sum from 1.
    pub fn max_row_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Position of the largest weight in each row.
    pub fn argmax_positions(&self) -> Vec<usize> {
        self.rows.iter().map(|r| argmax(r)).collect()
    }

    /// Header of encoder-order input tokens, then one row per output symbol
    /// led by that symbol.
    pub fn to_tsv<A: AsRef<str>, B: AsRef<str>>(&self, inputs: &[A], outputs: &[B]) -> String {
        let mut out = String::from("symbol");
        for w in inputs {
            out.push('\t');
            out.push_str(w.as_ref());
        }
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(outputs.get(i).map_or("?", |s| s.as_ref()));
            for w in row {
                out.push_str(&format!("\t{w:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Index of the first maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn log_of(p: f64) -> f64 {
    let l = p.ln();
    if l.is_nan() {
        f64::NEG_INFINITY
    } else {
        l
    }
}

fn check_limits(beam_size: usize, max_len: usize) -> Result<()> {
    if beam_size == 0 {
        return Err(Error::Config("beam size must be at least 1".into()));
    }
    if max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    Ok(())
}

// Attention rows shared between hypotheses with a common prefix.
struct Trail {
    row: Rc<Vec<f64>>,
    prev: Option<Rc<Trail>>,
}

fn collect_trail(mut trail: Option<Rc<Trail>>) -> AttentionTrace {
    let mut rows = Vec::new();
    while let Some(t) = trail {
        rows.push(t.row.as_ref().clone());
        trail = t.prev.clone();
    }
    rows.reverse();
    AttentionTrace { rows }
}

struct Entry<St> {
    hyp: Hypothesis<St>,
    trail: Option<Rc<Trail>>,
}

/// Stepwise argmax decoding; stops at END or after `max_len` symbols.
pub fn greedy<M: StepScorer>(
    scorer: &M,
    input: &[usize],
    max_len: usize,
) -> Result<(Hypothesis<M::State>, AttentionTrace)> {
    check_limits(1, max_len)?;
    let (ctx, mut state) = scorer.start(input)?;
    let mut symbols = Vec::new();
    let mut log_prob = 0.0;
    let mut rows = Vec::new();
    let mut prev = END_ID;
    let mut finished = false;
    while symbols.len() < max_len {
        let step = scorer.step(&ctx, prev, &state)?;
        let y = argmax(&step.dist);
        log_prob += log_of(step.dist[y]);
        symbols.push(y);
        rows.push(step.attention);
        state = step.state;
        prev = y;
        if y == END_ID {
            finished = true;
            break;
        }
    }
    let hyp = Hypothesis {
        symbols,
        log_prob,
        state,
        finished,
    };
    Ok((hyp, AttentionTrace { rows }))
}

/// Beam search. Stops when the best hypothesis is finished or after
/// `max_len` steps; returns the best finished hypothesis if there is one,
/// otherwise the best truncated one.
pub fn beam_search<M: StepScorer>(
    scorer: &M,
    input: &[usize],
    beam_size: usize,
    max_len: usize,
) -> Result<(Hypothesis<M::State>, AttentionTrace)> {
    check_limits(beam_size, max_len)?;
    let (ctx, state) = scorer.start(input)?;
    let mut beam = vec![Entry {
        hyp: Hypothesis {
            symbols: Vec::new(),
            log_prob: 0.0,
            state,
            finished: false,
        },
        trail: None,
    }];

    struct Candidate {
        parent: usize,
        symbol: Option<usize>,
        log_prob: f64,
    }

    for _ in 0..max_len {
        if beam[0].hyp.finished {
            break;
        }
        let mut candidates = Vec::new();
        let mut steps: Vec<Option<(Step<M::State>, Rc<Vec<f64>>)>> = Vec::with_capacity(beam.len());
        for (i, entry) in beam.iter().enumerate() {
            let h = &entry.hyp;
            if h.finished {
                candidates.push(Candidate {
                    parent: i,
                    symbol: None,
                    log_prob: h.log_prob,
                });
                steps.push(None);
                continue;
            }
            let prev = h.symbols.last().copied().unwrap_or(END_ID);
            let mut step = scorer.step(&ctx, prev, &h.state)?;
            for (y, &p) in step.dist.iter().enumerate() {
                candidates.push(Candidate {
                    parent: i,
                    symbol: Some(y),
                    log_prob: h.log_prob + log_of(p),
                });
            }
            let row = Rc::new(std::mem::take(&mut step.attention));
            steps.push(Some((step, row)));
        }
        // zero-probability continuations only survive if nothing else does
        if candidates.iter().any(|c| c.log_prob > f64::NEG_INFINITY) {
            candidates.retain(|c| c.log_prob > f64::NEG_INFINITY);
        }
        // stable: ties keep beam order, then symbol order
        candidates.sort_by(|a, b| b.log_prob.partial_cmp(&a.log_prob).unwrap_or(Ordering::Equal));
        candidates.truncate(beam_size);

        let mut next = Vec::with_capacity(candidates.len());
        for c in candidates {
            let parent = &beam[c.parent];
            match (c.symbol, &steps[c.parent]) {
                (Some(y), Some((step, row))) => {
                    let mut symbols = parent.hyp.symbols.clone();
                    symbols.push(y);
                    next.push(Entry {
                        hyp: Hypothesis {
                            symbols,
                            log_prob: c.log_prob,
                            state: step.state.clone(),
                            finished: y == END_ID,
                        },
                        trail: Some(Rc::new(Trail {
                            row: Rc::clone(row),
                            prev: parent.trail.clone(),
                        })),
                    });
                }
                _ => next.push(Entry {
                    hyp: parent.hyp.clone(),
                    trail: parent.trail.clone(),
                }),
            }
        }
        beam = next;
    }

    let best = match beam.iter().position(|e| e.hyp.finished) {
        Some(i) => beam.swap_remove(i),
        None => beam.swap_remove(0),
    };
    let trace = collect_trail(best.trail);
    Ok((best.hyp, trace))
}

/// Beam search over the mean distribution of `models`.
pub fn ensemble_decode<M: StepScorer>(
    models: &[M],
    input: &[usize],
    beam_size: usize,
    max_len: usize,
) -> Result<Hypothesis<Vec<M::State>>> {
    let ensemble = Ensemble::new(models.iter().collect())?;
    Ok(beam_search(&ensemble, input, beam_size, max_len)?.0)
}

// Balanced symbols as a forest, with preterminal tags at the leaves.
enum Shape {
    Node(String, Vec<Shape>),
    Leaf(String),
}

fn shapes(symbols: &[LinearSymbol]) -> Vec<Shape> {
    let mut stack: Vec<(String, Vec<Shape>)> = vec![(String::new(), Vec::new())];
    for s in symbols {
        match s {
            LinearSymbol::Open(l) => stack.push((l.clone(), Vec::new())),
            LinearSymbol::Close(_) => {
                if stack.len() > 1 {
                    let (label, children) = stack.pop().unwrap();
                    // empty constituents vanish
                    if !children.is_empty() {
                        stack.last_mut().unwrap().1.push(Shape::Node(label, children));
                    }
                }
            }
            LinearSymbol::Preterm(t) => stack.last_mut().unwrap().1.push(Shape::Leaf(t.clone())),
            LinearSymbol::End => {}
        }
    }
    while stack.len() > 1 {
        let (label, children) = stack.pop().unwrap();
        if !children.is_empty() {
            stack.last_mut().unwrap().1.push(Shape::Node(label, children));
        }
    }
    stack.pop().unwrap().1
}

fn attach(shape: Shape, words: &mut impl Iterator<Item = String>) -> ParseTree {
    match shape {
        Shape::Leaf(tag) => ParseTree::Preterminal {
            tag,
            word: words.next().expect("leaf count equals word count"),
        },
        Shape::Node(label, children) => ParseTree::Internal {
            label,
            children: children.into_iter().map(|c| attach(c, words)).collect(),
        },
    }
}

/// Turns decoder output into a tree over exactly `words`; total for any
/// nonempty word list. Returns whether any repair was needed.
///
/// Symbols after the first END are ignored. A sequence that does not
/// delinearize is balanced with [`repair`]; surplus trailing preterminals
/// are dropped, empty constituents removed, a forest is wrapped in an `S`
/// root, and words left without a preterminal are appended to the root
/// under `XX`.
pub fn tree_from_symbols(symbols: &[LinearSymbol], words: &[String]) -> Result<(ParseTree, bool)> {
    if words.is_empty() {
        return Err(Error::Empty("sentence"));
    }
    let body = match symbols.iter().position(|s| *s == LinearSymbol::End) {
        Some(i) => &symbols[..i],
        None => symbols,
    };
    if let Ok(tree) = delinearize(body, words) {
        return Ok((tree, false));
    }

    let mut seq = repair(body);
    let mut surplus = seq
        .iter()
        .filter(|s| matches!(s, LinearSymbol::Preterm(_)))
        .count()
        .saturating_sub(words.len());
    let mut i = seq.len();
    while surplus > 0 && i > 0 {
        i -= 1;
        if matches!(seq[i], LinearSymbol::Preterm(_)) {
            seq.remove(i);
            surplus -= 1;
        }
    }

    let mut forest = shapes(&seq);
    let (label, mut children) = match forest.len() {
        1 if matches!(forest[0], Shape::Node(..)) => match forest.pop().unwrap() {
            Shape::Node(label, children) => (label, children),
            Shape::Leaf(_) => unreachable!(),
        },
        _ => (FALLBACK_ROOT.to_string(), forest),
    };
    fn leaves(s: &[Shape]) -> usize {
        s.iter()
            .map(|c| match c {
                Shape::Leaf(_) => 1,
                Shape::Node(_, cs) => leaves(cs),
            })
            .sum()
    }
    let missing = words.len() - leaves(&children);
    children.extend((0..missing).map(|_| Shape::Leaf(NORMALIZED_TAG.to_string())));
    let mut it = words.iter().cloned();
    let tree = attach(Shape::Node(label, children), &mut it);
    Ok((tree, true))
}

/// Beam width and length cap for [`parse_sentence`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecodeOptions {
    pub beam_size: usize,
    /// `None` uses [`default_max_len`].
    pub max_len: Option<usize>,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            beam_size: DEFAULT_BEAM,
            max_len: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParseOutput {
    pub tree: ParseTree,
    pub was_repaired: bool,
    pub trace: AttentionTrace,
    /// Decoded symbols, including END when the hypothesis finished.
    pub symbols: Vec<LinearSymbol>,
    pub log_prob: f64,
}

/// Encodes `words`, decodes and repairs: always yields a valid tree over
/// exactly the input words.
pub fn parse_sentence<M: StepScorer, W: AsRef<str>>(
    words: &[W],
    scorer: &M,
    input_vocab: &Vocab,
    output_vocab: &Vocab,
    opts: DecodeOptions,
) -> Result<ParseOutput> {
    if output_vocab.len() != scorer.output_size() || input_vocab.len() != scorer.input_size() {
        return Err(Error::Vocab(format!(
            "vocabularies of size ({}, {}) do not fit a model of ({}, {})",
            input_vocab.len(),
            output_vocab.len(),
            scorer.input_size(),
            scorer.output_size()
        )));
    }
    let words: Vec<String> = words.iter().map(|w| w.as_ref().to_string()).collect();
    let ids = input_vocab.encode_input(&words)?;
    let max_len = opts.max_len.unwrap_or_else(|| default_max_len(words.len()));
    let (hyp, trace) = beam_search(scorer, &ids, opts.beam_size, max_len)?;
    let symbols = output_vocab.decode_symbols(&hyp.symbols)?;
    let (tree, was_repaired) = tree_from_symbols(&symbols, &words)?;
    Ok(ParseOutput {
        tree,
        was_repaired,
        trace,
        symbols,
        log_prob: hyp.log_prob,
    })
}
