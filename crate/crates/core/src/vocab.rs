//! Word and symbol vocabularies, UNK mapping, input reversal and loading of
//! pretrained word vectors in word2vec text format.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scalar, INIT_RANGE};
use crate::treetext::{LinearSymbol, END_TOKEN};

/// Spelling of the reserved unknown-word entry.
pub const UNK_TOKEN: &str = "<UNK>";
/// Reserved entries always take id 0.
pub const RESERVED_ID: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VocabKind {
    Input,
    Output,
}

impl VocabKind {
    fn reserved(self) -> &'static str {
        match self {
            VocabKind::Input => UNK_TOKEN,
            VocabKind::Output => END_TOKEN,
        }
    }
}

impl fmt::Display for VocabKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VocabKind::Input => "input",
            VocabKind::Output => "output",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    kind: VocabKind,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    kind: VocabKind,
    tokens: Vec<String>,
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Self {
        Vocab::from_tokens(r.kind, r.tokens)
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr {
            kind: v.kind,
            tokens: v.tokens,
        }
    }
}

impl Vocab {
    fn from_tokens(kind: VocabKind, tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab {
            kind,
            tokens,
            index,
        }
    }

    /// Most-frequent-first vocabulary over a token stream, ties broken
    /// lexicographically. The reserved entry (UNK or END) takes id 0 and
    /// counts against `cap`.
    pub fn build<I, T>(tokens: I, cap: usize, kind: VocabKind) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        if cap < 1 {
            return Err(Error::Vocab(format!(
                "cap {cap} cannot hold the reserved {} entry",
                kind.reserved()
            )));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in tokens {
            let t = t.as_ref();
            if t == kind.reserved() {
                continue;
            }
            *counts.entry(t.to_string()).or_default() += 1;
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut out = vec![kind.reserved().to_string()];
        out.extend(ranked.into_iter().take(cap - 1).map(|(t, _)| t));
        Ok(Self::from_tokens(kind, out))
    }

    /// Input vocabulary over the words of a corpus.
    pub fn build_input<'a, I>(sentences: I, cap: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        Self::build(sentences.into_iter().flatten(), cap, VocabKind::Input)
    }

    /// Output vocabulary over every symbol seen in a set of linearizations.
    pub fn build_output<'a, I>(sequences: I, cap: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [LinearSymbol]>,
    {
        let tokens = sequences
            .into_iter()
            .flatten()
            .map(LinearSymbol::token);
        Self::build(tokens, cap, VocabKind::Output)
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Id of UNK (input) or END (output).
    pub fn reserved_id(&self) -> usize {
        RESERVED_ID
    }

    /// Word ids for the encoder: unknown words map to UNK and the sentence
    /// is reversed.
    pub fn encode_input<T: AsRef<str>>(&self, words: &[T]) -> Result<Vec<usize>> {
        if self.kind != VocabKind::Input {
            return Err(Error::Vocab("encode_input needs an input vocabulary".into()));
        }
        if words.is_empty() {
            return Err(Error::Empty("encode_input"));
        }
        Ok(words
            .iter()
            .rev()
            .map(|w| self.id(w.as_ref()).unwrap_or(RESERVED_ID))
            .collect())
    }

    /// Symbol ids for a linearized tree. Unknown symbols are an error since
    /// the output alphabet is closed.
    pub fn encode_symbols(&self, symbols: &[LinearSymbol]) -> Result<Vec<usize>> {
        if self.kind != VocabKind::Output {
            return Err(Error::Vocab("encode_symbols needs an output vocabulary".into()));
        }
        symbols
            .iter()
            .map(|s| {
                let tok = s.token();
                self.id(&tok)
                    .ok_or_else(|| Error::Vocab(format!("symbol {tok} not in output vocabulary")))
            })
            .collect()
    }

    pub fn decode_symbols(&self, ids: &[usize]) -> Result<Vec<LinearSymbol>> {
        ids.iter()
            .map(|&id| {
                let tok = self
                    .token(id)
                    .ok_or_else(|| Error::Vocab(format!("symbol id {id} out of range")))?;
                LinearSymbol::parse_token(tok)
            })
            .collect()
    }

    /// One header line naming the kind and reserved entry, then one token
    /// per line in id order.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "#vocab kind={} size={} reserved={}:{}",
            self.kind,
            self.len(),
            self.kind.reserved(),
            RESERVED_ID
        )?;
        for t in &self.tokens {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Format {
                line: 1,
                message: "missing vocab header".into(),
            })?;
        let mut kind = None;
        let mut size = None;
        for field in header.split_whitespace().skip(1) {
            match field.split_once('=') {
                Some(("kind", "input")) => kind = Some(VocabKind::Input),
                Some(("kind", "output")) => kind = Some(VocabKind::Output),
                Some(("size", n)) => size = n.parse::<usize>().ok(),
                _ => {}
            }
        }
        if !header.starts_with("#vocab") {
            return Err(Error::Format {
                line: 1,
                message: "not a vocab file".into(),
            });
        }
        let kind = kind.ok_or_else(|| Error::Format {
            line: 1,
            message: "vocab header lacks kind".into(),
        })?;
        let tokens: Vec<String> = lines.collect::<std::io::Result<_>>()?;
        if let Some(n) = size {
            if n != tokens.len() {
                return Err(Error::Format {
                    line: 1,
                    message: format!("header says {n} tokens, file has {}", tokens.len()),
                });
            }
        }
        if tokens.first().map(String::as_str) != Some(kind.reserved()) {
            return Err(Error::Format {
                line: 2,
                message: format!("first entry must be {}", kind.reserved()),
            });
        }
        Ok(Self::from_tokens(kind, tokens))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PretrainedStats {
    pub copied: usize,
    pub random: usize,
    pub duplicates: usize,
}

/// Embedding table for `vocab` initialized from a word2vec text file.
/// Rows for words the file does not cover are drawn uniformly from
/// `[-0.08, 0.08]`. An optional `count dim` header line is skipped.
pub fn load_pretrained<S, B, R>(
    input: B,
    vocab: &Vocab,
    embed_size: usize,
    rng: &mut R,
) -> Result<(Matrix<S>, PretrainedStats)>
where
    S: Scalar,
    B: BufRead,
    R: Rng,
{
    let mut table = Matrix::<S>::uniform(vocab.len(), embed_size, INIT_RANGE, rng);
    let mut seen = vec![false; vocab.len()];
    let mut stats = PretrainedStats::default();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        if lineno == 0 && values.len() == 1 && word.parse::<usize>().is_ok() {
            if values[0].parse::<usize>().ok() == Some(embed_size) {
                continue;
            }
        }
        if values.len() != embed_size {
            return Err(Error::Format {
                line: lineno + 1,
                message: format!("expected {embed_size} components, found {}", values.len()),
            });
        }
        let Some(id) = vocab.id(word) else { continue };
        let row = table.row_mut(id);
        for (dst, v) in row.iter_mut().zip(&values) {
            let x: f64 = v.parse().map_err(|_| Error::Format {
                line: lineno + 1,
                message: format!("bad number {v:?}"),
            })?;
            *dst = S::of(x);
        }
        if seen[id] {
            stats.duplicates += 1;
            log::warn!("duplicate vector for {word:?} on line {}; keeping the last", lineno + 1);
        } else {
            seen[id] = true;
            stats.copied += 1;
        }
    }
    stats.random = vocab.len() - stats.copied;
    Ok((table, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toks(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn build_orders_by_frequency_then_lexically() {
        let v = Vocab::build(["a", "b", "a", "a"], 10, VocabKind::Input).unwrap();
        assert_eq!(v.tokens(), &toks(&[UNK_TOKEN, "a", "b"]));
        let w = Vocab::build(["a", "b", "a", "a"], 10, VocabKind::Input).unwrap();
        assert_eq!(v, w);

        let tie = Vocab::build(["z", "y", "x", "y", "z"], 10, VocabKind::Input).unwrap();
        assert_eq!(tie.tokens(), &toks(&[UNK_TOKEN, "y", "z", "x"]));

        let capped = Vocab::build(["z", "y", "x", "y", "z"], 2, VocabKind::Input).unwrap();
        assert_eq!(capped.tokens(), &toks(&[UNK_TOKEN, "y"]));

        assert!(matches!(
            Vocab::build(["a"], 0, VocabKind::Output),
            Err(Error::Vocab(_))
        ));
    }

    #[test]
    fn reserved_entries_never_cross_over() {
        let input = Vocab::build(["END", "a", UNK_TOKEN], 10, VocabKind::Input).unwrap();
        assert_eq!(input.id(UNK_TOKEN), Some(0));
        assert_eq!(input.id("END"), Some(1));
        let output = Vocab::build(["(S", UNK_TOKEN, "END"], 10, VocabKind::Output).unwrap();
        assert_eq!(output.id("END"), Some(0));
        assert_eq!(output.len(), 3);
        assert_eq!(output.tokens().iter().filter(|t| *t == "END").count(), 1);
    }

    #[test]
    fn encode_input_reverses_and_maps_unk() {
        let v = Vocab::build(["Go", ".", "Go"], 10, VocabKind::Input).unwrap();
        let ids = v.encode_input(&["Go", "."]).unwrap();
        assert_eq!(ids, vec![v.id(".").unwrap(), v.id("Go").unwrap()]);
        assert_eq!(v.encode_input(&["Go"]).unwrap(), vec![v.id("Go").unwrap()]);
        assert_eq!(v.encode_input(&["zzz-unseen"]).unwrap(), vec![0]);
        assert!(matches!(v.encode_input::<&str>(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn vocab_file_round_trip() {
        let v = Vocab::build(["(S", ")S", "XX", "XX"], 10, VocabKind::Output).unwrap();
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#vocab kind=output size=4 reserved=END:0\nEND\nXX\n"));
        assert_eq!(Vocab::read_from(&buf[..]).unwrap(), v);
        assert!(Vocab::read_from(&b"#vocab kind=input size=1\nfoo\n"[..]).is_err());
    }

    #[test]
    fn pretrained_rows_are_copied() {
        let v = Vocab::build(["a", "b", "a"], 10, VocabKind::Input).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let file = "2 3\na 1 2 3\nzzz 9 9 9\n";
        let (m, stats) = load_pretrained::<f64, _, _>(file.as_bytes(), &v, 3, &mut rng).unwrap();
        assert_eq!(m.row(1), &[1.0, 2.0, 3.0]);
        assert_eq!(stats, PretrainedStats { copied: 1, random: 2, duplicates: 0 });
        for id in [0, 2] {
            assert!(m.row(id).iter().all(|x| x.abs() <= INIT_RANGE));
        }

        let full = "<UNK> 0 0 0\na 1 1 1\nb 2 2 2\nb 3 3 3\n";
        let (m, stats) = load_pretrained::<f64, _, _>(full.as_bytes(), &v, 3, &mut rng).unwrap();
        assert_eq!(m.as_slice(), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 3.0, 3.0, 3.0]);
        assert_eq!(stats.duplicates, 1);
        assert_eq!(stats.random, 0);

        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let (m, _) = load_pretrained::<f64, _, _>(&b""[..], &v, 3, &mut r1).unwrap();
        assert_eq!(m, Matrix::uniform(3, 3, INIT_RANGE, &mut r2));
    }

    #[test]
    fn pretrained_dimension_errors_name_the_line() {
        let v = Vocab::build(["a"], 10, VocabKind::Input).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = load_pretrained::<f32, _, _>("a 1 2 3\nb 1 2\n".as_bytes(), &v, 3, &mut rng)
            .unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }), "{err}");
    }
}
