//! Constituency trees: bracketed treebank I/O, depth-first linearization
//! into open/close/preterminal symbols, its inverse, and bracket repair.

use std::fmt;

use crate::error::{Error, Result};

/// Tag every preterminal is collapsed to by [`normalize_pos`].
pub const NORMALIZED_TAG: &str = "XX";
/// Spelling of the end-of-sequence symbol.
pub const END_TOKEN: &str = "END";

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ParseTree {
    Internal {
        label: String,
        children: Vec<ParseTree>,
    },
    Preterminal {
        tag: String,
        word: String,
    },
}

impl ParseTree {
    pub fn internal(label: impl Into<String>, children: Vec<ParseTree>) -> Self {
        ParseTree::Internal {
            label: label.into(),
            children,
        }
    }

    pub fn preterminal(tag: impl Into<String>, word: impl Into<String>) -> Self {
        ParseTree::Preterminal {
            tag: tag.into(),
            word: word.into(),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            ParseTree::Internal { label, .. } => label,
            ParseTree::Preterminal { tag, .. } => tag,
        }
    }

    /// Terminal words, left to right.
    pub fn words(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_leaves(&mut |_, word| out.push(word.to_string()));
        out
    }

    /// Preterminal tags, left to right.
    pub fn tags(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_leaves(&mut |tag, _| out.push(tag.to_string()));
        out
    }

    pub fn len(&self) -> usize {
        match self {
            ParseTree::Preterminal { .. } => 1,
            ParseTree::Internal { children, .. } => children.iter().map(ParseTree::len).sum(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn collect_leaves<'a>(&'a self, f: &mut impl FnMut(&'a str, &'a str)) {
        match self {
            ParseTree::Preterminal { tag, word } => f(tag, word),
            ParseTree::Internal { children, .. } => {
                for c in children {
                    c.collect_leaves(f);
                }
            }
        }
    }

    /// Checks the structural invariants: nonempty labels and words, no
    /// childless internal node.
    pub fn validate(&self) -> Result<()> {
        match self {
            ParseTree::Preterminal { tag, word } => {
                if tag.is_empty() || word.is_empty() {
                    return Err(Error::MalformedSequence("empty tag or word".into()));
                }
            }
            ParseTree::Internal { label, children } => {
                if label.is_empty() {
                    return Err(Error::MalformedSequence("empty label".into()));
                }
                if children.is_empty() {
                    return Err(Error::MalformedSequence(format!(
                        "constituent {label} has no children"
                    )));
                }
                for c in children {
                    c.validate()?;
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseTree::Preterminal { tag, word } => write!(f, "({tag} {word})"),
            ParseTree::Internal { label, children } => {
                write!(f, "({label}")?;
                for c in children {
                    write!(f, " {c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LinearSymbol {
    Open(String),
    Close(String),
    Preterm(String),
    End,
}

impl LinearSymbol {
    /// Token spelling: `(S`, `)S`, `XX`, `END`.
    pub fn token(&self) -> String {
        match self {
            LinearSymbol::Open(l) => format!("({l}"),
            LinearSymbol::Close(l) => format!("){l}"),
            LinearSymbol::Preterm(t) => t.clone(),
            LinearSymbol::End => END_TOKEN.to_string(),
        }
    }

    pub fn parse_token(token: &str) -> Result<Self> {
        if token.is_empty() {
            return Err(Error::MalformedSequence("empty token".into()));
        }
        if token == END_TOKEN {
            return Ok(LinearSymbol::End);
        }
        if let Some(l) = token.strip_prefix('(') {
            if l.is_empty() {
                return Err(Error::MalformedSequence("open bracket without label".into()));
            }
            return Ok(LinearSymbol::Open(l.to_string()));
        }
        if let Some(l) = token.strip_prefix(')') {
            if l.is_empty() {
                return Err(Error::MalformedSequence("close bracket without label".into()));
            }
            return Ok(LinearSymbol::Close(l.to_string()));
        }
        Ok(LinearSymbol::Preterm(token.to_string()))
    }
}

impl fmt::Display for LinearSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

/// Space-separated token rendering of a symbol sequence.
pub fn symbols_to_string(symbols: &[LinearSymbol]) -> String {
    symbols
        .iter()
        .map(LinearSymbol::token)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_symbols(line: &str) -> Result<Vec<LinearSymbol>> {
    line.split_whitespace().map(LinearSymbol::parse_token).collect()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(text: &str) -> Vec<(usize, Tok<'_>)> {
    let mut toks = Vec::new();
    let mut chars = text.char_indices().enumerate().peekable();
    while let Some((ci, (bi, ch))) = chars.next() {
        match ch {
            '(' => toks.push((ci, Tok::Open)),
            ')' => toks.push((ci, Tok::Close)),
            c if c.is_whitespace() => {}
            _ => {
                let mut end = bi + ch.len_utf8();
                while let Some(&(_, (nb, nc))) = chars.peek() {
                    if nc == '(' || nc == ')' || nc.is_whitespace() {
                        break;
                    }
                    end = nb + nc.len_utf8();
                    chars.next();
                }
                toks.push((ci, Tok::Atom(&text[bi..end])));
            }
        }
    }
    toks
}

enum Node {
    Tree(ParseTree),
    Atom(String),
}

struct Reader<'a> {
    toks: Vec<(usize, Tok<'a>)>,
    pos: usize,
    end_offset: usize,
}

impl<'a> Reader<'a> {
    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::Bracket {
            offset,
            message: message.into(),
        })
    }

    // Called with the cursor just past an opening paren.
    fn node(&mut self, open_offset: usize) -> Result<ParseTree> {
        let label = match self.toks.get(self.pos) {
            Some((_, Tok::Atom(a))) => {
                self.pos += 1;
                Some(a.to_string())
            }
            Some((_, Tok::Open)) => None,
            Some((o, Tok::Close)) => return self.err(*o, "empty constituent"),
            None => return self.err(self.end_offset, "unexpected end of input"),
        };
        let mut items = Vec::new();
        loop {
            match self.toks.get(self.pos) {
                None => return self.err(self.end_offset, "unexpected end of input"),
                Some((_, Tok::Close)) => {
                    self.pos += 1;
                    break;
                }
                Some((o, Tok::Open)) => {
                    let o = *o;
                    self.pos += 1;
                    items.push(Node::Tree(self.node(o)?));
                }
                Some((_, Tok::Atom(a))) => {
                    items.push(Node::Atom(a.to_string()));
                    self.pos += 1;
                }
            }
        }
        match (label, items.len()) {
            (_, 0) => self.err(open_offset, "empty constituent"),
            // Unlabeled wrapper around a single tree, e.g. "( (S ...) )".
            (None, 1) => match items.pop() {
                Some(Node::Tree(t)) => Ok(t),
                _ => self.err(open_offset, "unlabeled constituent"),
            },
            (None, _) => self.err(open_offset, "unlabeled constituent"),
            (Some(tag), 1) if matches!(items[0], Node::Atom(_)) => match items.pop() {
                Some(Node::Atom(word)) => Ok(ParseTree::Preterminal { tag, word }),
                _ => unreachable!(),
            },
            (Some(label), _) => {
                let mut children = Vec::with_capacity(items.len());
                for item in items {
                    match item {
                        Node::Tree(t) => children.push(t),
                        Node::Atom(a) => {
                            return self.err(
                                open_offset,
                                format!("bare word {a:?} mixed with constituents under {label}"),
                            )
                        }
                    }
                }
                Ok(ParseTree::Internal { label, children })
            }
        }
    }
}

/// Reads every top-level tree in a bracketed treebank text.
pub fn read_bracketed(text: &str) -> Result<Vec<ParseTree>> {
    let mut reader = Reader {
        toks: tokenize(text),
        pos: 0,
        end_offset: text.chars().count(),
    };
    let mut trees = Vec::new();
    while reader.pos < reader.toks.len() {
        match reader.toks[reader.pos] {
            (o, Tok::Open) => {
                reader.pos += 1;
                trees.push(reader.node(o)?);
            }
            (o, Tok::Close) => return reader.err(o, "unmatched closing bracket"),
            (o, Tok::Atom(_)) => return reader.err(o, "text outside of a bracketed tree"),
        }
    }
    Ok(trees)
}

/// Canonical single-line bracketed rendering.
pub fn write_bracketed(tree: &ParseTree) -> String {
    tree.to_string()
}

/// Depth-first linearization, words dropped, terminated by `End`.
pub fn linearize(tree: &ParseTree) -> Vec<LinearSymbol> {
    fn walk(t: &ParseTree, out: &mut Vec<LinearSymbol>) {
        match t {
            ParseTree::Preterminal { tag, .. } => out.push(LinearSymbol::Preterm(tag.clone())),
            ParseTree::Internal { label, children } => {
                out.push(LinearSymbol::Open(label.clone()));
                for c in children {
                    walk(c, out);
                }
                out.push(LinearSymbol::Close(label.clone()));
            }
        }
    }
    let mut out = Vec::new();
    walk(tree, &mut out);
    out.push(LinearSymbol::End);
    out
}

/// Inverse of [`linearize`]: rebuilds the tree, attaching `words` to the
/// preterminal slots left to right. A single trailing `End` is accepted.
pub fn delinearize(symbols: &[LinearSymbol], words: &[String]) -> Result<ParseTree> {
    let body = match symbols.last() {
        Some(LinearSymbol::End) => &symbols[..symbols.len() - 1],
        _ => symbols,
    };
    let preterms = body
        .iter()
        .filter(|s| matches!(s, LinearSymbol::Preterm(_)))
        .count();

    let mut stack: Vec<(String, Vec<ParseTree>)> = Vec::new();
    let mut root: Option<ParseTree> = None;
    let mut next_word = 0;
    for (i, sym) in body.iter().enumerate() {
        if root.is_some() {
            return Err(Error::MalformedSequence(format!(
                "symbol {i} ({sym}) follows the completed root"
            )));
        }
        match sym {
            LinearSymbol::Open(l) => stack.push((l.clone(), Vec::new())),
            LinearSymbol::Preterm(tag) => {
                let Some((_, children)) = stack.last_mut() else {
                    return Err(Error::MalformedSequence(format!(
                        "preterminal at {i} outside any constituent"
                    )));
                };
                let word = match words.get(next_word) {
                    Some(w) => w.clone(),
                    None => {
                        return Err(Error::ArityMismatch {
                            preterminals: preterms,
                            words: words.len(),
                        })
                    }
                };
                next_word += 1;
                children.push(ParseTree::Preterminal {
                    tag: tag.clone(),
                    word,
                });
            }
            LinearSymbol::Close(l) => {
                let Some((open, children)) = stack.pop() else {
                    return Err(Error::MalformedSequence(format!("orphan close {sym} at {i}")));
                };
                if &open != l {
                    return Err(Error::MalformedSequence(format!(
                        "close {sym} at {i} does not match open ({open}"
                    )));
                }
                if children.is_empty() {
                    return Err(Error::MalformedSequence(format!("empty constituent {open} at {i}")));
                }
                let node = ParseTree::Internal {
                    label: open,
                    children,
                };
                match stack.last_mut() {
                    Some((_, siblings)) => siblings.push(node),
                    None => root = Some(node),
                }
            }
            LinearSymbol::End => {
                return Err(Error::MalformedSequence(format!("END inside sequence at {i}")))
            }
        }
    }
    if let Some((open, _)) = stack.last() {
        return Err(Error::MalformedSequence(format!("unclosed ({open}")));
    }
    let root = root.ok_or_else(|| Error::MalformedSequence("no constituent".into()))?;
    if next_word != words.len() {
        return Err(Error::ArityMismatch {
            preterminals: preterms,
            words: words.len(),
        });
    }
    Ok(root)
}

/// True when every close matches the innermost open of the same label and
/// nothing is left open. `End` symbols are ignored.
pub fn is_balanced(symbols: &[LinearSymbol]) -> bool {
    let mut stack: Vec<&str> = Vec::new();
    for s in symbols {
        match s {
            LinearSymbol::Open(l) => stack.push(l),
            LinearSymbol::Close(l) => {
                if stack.pop() != Some(l.as_str()) {
                    return false;
                }
            }
            _ => {}
        }
    }
    stack.is_empty()
}

/// Balances a symbol sequence: closes that do not match the innermost open
/// constituent are dropped, and closes for whatever is still open are
/// appended innermost first. `End` symbols are stripped.
pub fn repair(symbols: &[LinearSymbol]) -> Vec<LinearSymbol> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut stack: Vec<String> = Vec::new();
    for s in symbols {
        match s {
            LinearSymbol::End => {}
            LinearSymbol::Open(l) => {
                stack.push(l.clone());
                out.push(s.clone());
            }
            LinearSymbol::Close(l) => {
                if stack.last() == Some(l) {
                    stack.pop();
                    out.push(s.clone());
                }
            }
            LinearSymbol::Preterm(_) => out.push(s.clone()),
        }
    }
    while let Some(l) = stack.pop() {
        out.push(LinearSymbol::Close(l));
    }
    out
}

/// Replaces every preterminal tag by `XX`.
pub fn normalize_pos(tree: &ParseTree) -> ParseTree {
    match tree {
        ParseTree::Preterminal { word, .. } => ParseTree::Preterminal {
            tag: NORMALIZED_TAG.to_string(),
            word: word.clone(),
        },
        ParseTree::Internal { label, children } => ParseTree::Internal {
            label: label.clone(),
            children: children.iter().map(normalize_pos).collect(),
        },
    }
}
