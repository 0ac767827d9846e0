//! Toy probabilistic grammar and treebank sampler.
//!
//! Grammar text format, one directive per line, `#` starts a comment:
//!
//! ```text
//! start S
//! max_depth 10
//! rule 3 NP -> DT NN
//! lex DT the a
//! ```
//!
//! Symbols with `rule` lines are nonterminals, symbols with `lex` lines are
//! preterminal tags. Depth counts tree levels from the root (1) down to the
//! preterminals.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::treetext::{write_bracketed, ParseTree};

pub const DEFAULT_GRAMMAR: &str = "\
# Small English-like grammar with NP/PP and SBAR recursion.
start S
max_depth 10

rule 1 S -> NP VP .
rule 0.6 S -> ADVP , NP VP .

rule 3 NP -> DT NN
rule 2 NP -> DT JJ NN
rule 1.5 NP -> NNP
rule 1.5 NP -> PRP
rule 1 NP -> NP PP

rule 2 VP -> VBZ NP
rule 1 VP -> VBZ
rule 0.5 VP -> VBZ ADVP
rule 1.5 VP -> VBD NP
rule 0.7 VP -> VBD NP ADVP
rule 1 VP -> VBD SBAR

rule 1 PP -> IN NP
rule 1 SBAR -> IN NP VP
rule 1 ADVP -> RB

lex DT the a every
lex NN dog cat bird park telescope man woman house
lex JJ big small red old
lex NNP John Mary Paris
lex PRP she he it
lex VBZ sees likes has sleeps
lex VBD saw liked knew
lex IN on in with near that because
lex RB quickly today often
lex , ,
lex . .
";

#[derive(Clone, Debug, PartialEq)]
pub struct Production {
    pub weight: f64,
    pub lhs: String,
    pub rhs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyGrammar {
    pub start: String,
    pub max_depth: usize,
    /// Productions grouped by left-hand side.
    pub productions: BTreeMap<String, Vec<Production>>,
    /// Words per preterminal tag.
    pub lexicon: BTreeMap<String, Vec<String>>,
    // Height of the shortest tree each nonterminal derives.
    min_height: BTreeMap<String, usize>,
}

fn grammar_err(line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        line,
        message: message.into(),
    }
}

impl ToyGrammar {
    /// Validates and indexes a grammar. Every nonterminal needs a
    /// production, weights must be positive, and the start symbol must
    /// derive a tree within `max_depth`.
    pub fn new(
        start: impl Into<String>,
        max_depth: usize,
        productions: Vec<Production>,
        lexicon: BTreeMap<String, Vec<String>>,
    ) -> Result<Self> {
        let start = start.into();
        let mut grouped: BTreeMap<String, Vec<Production>> = BTreeMap::new();
        for p in productions {
            if !(p.weight > 0.0 && p.weight.is_finite()) {
                return Err(Error::Grammar(format!(
                    "production {} -> {} has non-positive weight {}",
                    p.lhs,
                    p.rhs.join(" "),
                    p.weight
                )));
            }
            if p.rhs.is_empty() {
                return Err(Error::Grammar(format!("production for {} has an empty right side", p.lhs)));
            }
            grouped.entry(p.lhs.clone()).or_default().push(p);
        }
        for (tag, words) in &lexicon {
            if grouped.contains_key(tag) {
                return Err(Error::Grammar(format!("{tag} is both a nonterminal and a tag")));
            }
            if words.is_empty() {
                return Err(Error::Grammar(format!("tag {tag} has no words")));
            }
        }
        for p in grouped.values().flatten() {
            if let Some(sym) = p
                .rhs
                .iter()
                .find(|s| !grouped.contains_key(*s) && !lexicon.contains_key(*s))
            {
                return Err(Error::Grammar(format!(
                    "{sym} in {} -> {} has no production or words",
                    p.lhs,
                    p.rhs.join(" ")
                )));
            }
        }
        if !grouped.contains_key(&start) {
            return Err(Error::Grammar(format!("start symbol {start} has no production")));
        }

        // least fixed point of h(A) = min over rules of 1 + max child height
        let mut min_height: BTreeMap<String, usize> = BTreeMap::new();
        loop {
            let mut changed = false;
            for (lhs, rules) in &grouped {
                let best = rules
                    .iter()
                    .filter_map(|p| {
                        p.rhs
                            .iter()
                            .map(|s| {
                                if lexicon.contains_key(s) {
                                    Some(1)
                                } else {
                                    min_height.get(s).copied()
                                }
                            })
                            .try_fold(0, |acc, h| h.map(|h| acc.max(h)))
                            .map(|h| h + 1)
                    })
                    .min();
                if let Some(h) = best {
                    if min_height.get(lhs).is_none_or(|&old| h < old) {
                        min_height.insert(lhs.clone(), h);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if let Some(lhs) = grouped.keys().find(|k| !min_height.contains_key(*k)) {
            return Err(Error::Grammar(format!("{lhs} derives no finite tree")));
        }
        if min_height[&start] > max_depth {
            return Err(Error::Grammar(format!(
                "shortest tree from {start} has depth {}, above max_depth {max_depth}",
                min_height[&start]
            )));
        }
        Ok(ToyGrammar {
            start,
            max_depth,
            productions: grouped,
            lexicon,
            min_height,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut start = None;
        let mut max_depth = None;
        let mut productions = Vec::new();
        let mut lexicon: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                [] => {}
                ["start", s] => start = Some(s.to_string()),
                ["max_depth", d] => {
                    max_depth = Some(
                        d.parse::<usize>()
                            .map_err(|_| grammar_err(line_no, format!("bad max_depth {d}")))?,
                    )
                }
                ["rule", w, lhs, "->", rhs @ ..] => {
                    let weight = w
                        .parse::<f64>()
                        .map_err(|_| grammar_err(line_no, format!("bad weight {w}")))?;
                    productions.push(Production {
                        weight,
                        lhs: lhs.to_string(),
                        rhs: rhs.iter().map(|s| s.to_string()).collect(),
                    });
                }
                ["lex", tag, words @ ..] if !words.is_empty() => {
                    lexicon
                        .entry(tag.to_string())
                        .or_default()
                        .extend(words.iter().map(|s| s.to_string()));
                }
                _ => return Err(grammar_err(line_no, format!("unrecognized directive: {line}"))),
            }
        }
        let start = start.ok_or_else(|| grammar_err(0, "missing start directive"))?;
        let max_depth = max_depth.ok_or_else(|| grammar_err(0, "missing max_depth directive"))?;
        ToyGrammar::new(start, max_depth, productions, lexicon)
    }

    /// The shipped grammar.
    pub fn default_grammar() -> Self {
        ToyGrammar::parse(DEFAULT_GRAMMAR).expect("default grammar is valid")
    }

    pub fn nonterminals(&self) -> impl Iterator<Item = &str> {
        self.productions.keys().map(String::as_str)
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.lexicon.keys().map(String::as_str)
    }

    fn height(&self, sym: &str) -> usize {
        if self.lexicon.contains_key(sym) {
            1
        } else {
            self.min_height[sym]
        }
    }

    fn expand<R: Rng>(&self, sym: &str, depth: usize, rng: &mut R) -> ParseTree {
        if let Some(words) = self.lexicon.get(sym) {
            return ParseTree::preterminal(sym, words[rng.gen_range(0..words.len())].clone());
        }
        // rules whose shortest completion still fits under the cap
        let budget = self.max_depth - depth;
        let allowed: Vec<&Production> = self.productions[sym]
            .iter()
            .filter(|p| p.rhs.iter().all(|s| self.height(s) <= budget))
            .collect();
        let total: f64 = allowed.iter().map(|p| p.weight).sum();
        let mut x = rng.gen::<f64>() * total;
        let mut chosen = allowed[allowed.len() - 1];
        for p in &allowed {
            if x < p.weight {
                chosen = p;
                break;
            }
            x -= p.weight;
        }
        ParseTree::internal(
            sym,
            chosen.rhs.iter().map(|s| self.expand(s, depth + 1, rng)).collect(),
        )
    }

    /// Top-down weighted sample drawing from `rng`.
    pub fn sample_with<R: Rng>(&self, rng: &mut R) -> ParseTree {
        self.expand(&self.start, 1, rng)
    }
}

/// One tree sampled with a fresh generator seeded by `seed`.
pub fn sample_tree(g: &ToyGrammar, seed: u64) -> ParseTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    g.sample_with(&mut rng)
}

/// Train, dev and test trees.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub train: Vec<ParseTree>,
    pub dev: Vec<ParseTree>,
    pub test: Vec<ParseTree>,
}

impl Corpus {
    /// One bracketed tree per line.
    pub fn to_treebank(trees: &[ParseTree]) -> String {
        let mut out = String::new();
        for t in trees {
            out.push_str(&write_bracketed(t));
            out.push('\n');
        }
        out
    }
}

const MAX_ATTEMPTS_PER_TREE: usize = 1000;

/// Samples three splits, each from its own stream of `seed`. Dev trees
/// never occur in train, and test trees occur in neither; repeats within a
/// split are allowed.
pub fn make_corpus(g: &ToyGrammar, n_train: usize, n_dev: usize, n_test: usize, seed: u64) -> Result<Corpus> {
    let mut seen: HashSet<String> = HashSet::new();
    let split = |n: usize, stream: u64, seen: &mut HashSet<String>| -> Result<Vec<ParseTree>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let blocked = seen.clone();
        let mut out = Vec::with_capacity(n);
        let mut attempts = 0;
        while out.len() < n {
            attempts += 1;
            if attempts > MAX_ATTEMPTS_PER_TREE * n.max(1) {
                return Err(Error::Grammar(format!(
                    "could not draw {n} trees unseen in earlier splits"
                )));
            }
            let t = g.sample_with(&mut rng);
            let key = write_bracketed(&t);
            if blocked.contains(&key) {
                continue;
            }
            seen.insert(key);
            out.push(t);
        }
        Ok(out)
    };
    let train = split(n_train, 0, &mut seen)?;
    let dev = split(n_dev, 1, &mut seen)?;
    let test = split(n_test, 2, &mut seen)?;
    Ok(Corpus { train, dev, test })
}
