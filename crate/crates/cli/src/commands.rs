use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use treeseq::corpusgen::{make_corpus, Corpus, ToyGrammar};
use treeseq::decode::{parse_sentence, DecodeOptions, Ensemble, ParseOutput, StepScorer};
use treeseq::eval::{evaluate, EvalConfig, F1Report};
use treeseq::model::read_header;
use treeseq::train::{dev_examples, encode_examples, train_loop, EvalEvent, LogRecord};
use treeseq::treetext::{
    delinearize, linearize, normalize_pos, parse_symbols, read_bracketed, symbols_to_string, write_bracketed,
};
use treeseq::vocab::load_pretrained;
use treeseq::{Checkpoint, Error, Hyper, LinearSymbol, ModelParams, ParseTree, Scalar, Vocab};

use crate::config::RunConfig;

/// Init, dropout and shuffling draw from separate streams of the run seed.
const INIT_STREAM: u64 = 2;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

/// Reads a treebank, naming the tree that fails to parse or validate.
pub fn read_treebank(path: &Path) -> Result<Vec<ParseTree>> {
    let text = read_text(path)?;
    let trees = read_bracketed(&text).map_err(|e| match e {
        Error::Bracket { offset, message } => anyhow!(
            "{}: tree {} (line {}): {message}",
            path.display(),
            tree_index_at(&text, offset),
            text[..offset.min(text.len())].matches('\n').count() + 1
        ),
        other => anyhow!("{}: {other}", path.display()),
    })?;
    for (i, t) in trees.iter().enumerate() {
        t.validate().with_context(|| format!("{}: tree {i}", path.display()))?;
    }
    Ok(trees)
}

// Number of top-level trees opened before `offset`, i.e. the index of the
// tree containing it.
fn tree_index_at(text: &str, offset: usize) -> usize {
    let mut depth = 0usize;
    let mut opened = 0usize;
    for (i, c) in text.char_indices() {
        if i >= offset {
            break;
        }
        match c {
            '(' => {
                if depth == 0 {
                    opened += 1;
                }
                depth += 1;
            }
            ')' => depth = depth.saturating_sub(1),
            _ => {}
        }
    }
    opened.saturating_sub(1)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

// TOML has no null, so absent settings are left out.
fn json_to_toml(mut v: serde_json::Value) -> Result<String> {
    fn strip(v: &mut serde_json::Value) {
        if let serde_json::Value::Object(m) = v {
            m.retain(|_, x| !x.is_null());
            m.values_mut().for_each(strip);
        }
    }
    strip(&mut v);
    let v: toml::Value = serde_json::from_value(v)?;
    Ok(toml::to_string_pretty(&v)?)
}

pub fn linearize_cmd(input: &Path, output: Option<&Path>, keep_tags: bool) -> Result<usize> {
    let trees = read_treebank(input)?;
    let mut out = open_output(output)?;
    for t in &trees {
        let symbols = if keep_tags { linearize(t) } else { linearize(&normalize_pos(t)) };
        writeln!(out, "{}", symbols_to_string(&symbols))?;
    }
    out.flush()?;
    Ok(trees.len())
}

pub fn delinearize_cmd(symbols: &Path, sentences: &Path, output: Option<&Path>) -> Result<usize> {
    let seqs = read_text(symbols)?;
    let sents = read_text(sentences)?;
    let seqs: Vec<&str> = seqs.lines().collect();
    let sents: Vec<&str> = sents.lines().collect();
    if seqs.len() != sents.len() {
        bail!(
            "{} has {} sequences but {} has {} sentences",
            symbols.display(),
            seqs.len(),
            sentences.display(),
            sents.len()
        );
    }
    let mut out = open_output(output)?;
    for (i, (seq, sent)) in seqs.iter().zip(&sents).enumerate() {
        let syms = parse_symbols(seq).with_context(|| format!("sequence {i}"))?;
        let words: Vec<String> = sent.split_whitespace().map(String::from).collect();
        let tree = delinearize(&syms, &words).with_context(|| format!("sequence {i}"))?;
        writeln!(out, "{}", write_bracketed(&tree))?;
    }
    out.flush()?;
    Ok(seqs.len())
}

pub fn gen_corpus_cmd(
    grammar: Option<&Path>,
    sizes: (usize, usize, usize),
    seed: u64,
    out_dir: &Path,
) -> Result<Corpus> {
    let g = match grammar {
        Some(p) => ToyGrammar::parse(&read_text(p)?).with_context(|| format!("grammar {}", p.display()))?,
        None => ToyGrammar::default_grammar(),
    };
    let corpus = make_corpus(&g, sizes.0, sizes.1, sizes.2, seed)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for (name, trees) in [("train", &corpus.train), ("dev", &corpus.dev), ("test", &corpus.test)] {
        fs::write(out_dir.join(format!("{name}.trees")), Corpus::to_treebank(trees))?;
        let sents: String = trees.iter().map(|t| t.words().join(" ") + "\n").collect();
        fs::write(out_dir.join(format!("{name}.sents")), sents)?;
    }
    #[derive(Serialize)]
    struct GenRecord<'a> {
        grammar: Option<&'a Path>,
        train: usize,
        dev: usize,
        test: usize,
        seed: u64,
    }
    let record = GenRecord {
        grammar,
        train: sizes.0,
        dev: sizes.1,
        test: sizes.2,
        seed,
    };
    fs::write(out_dir.join("run.toml"), toml::to_string_pretty(&record)?)?;
    Ok(corpus)
}

fn load_checkpoint<S: Scalar>(path: &Path) -> Result<Checkpoint<S>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let header = read_header(&bytes).with_context(|| format!("checkpoint {}", path.display()))?;
    let ck = if header.dtype == S::DTYPE {
        Checkpoint::<S>::from_bytes(&bytes)
    } else if header.dtype == f32::DTYPE {
        Checkpoint::<f32>::from_bytes(&bytes).map(recast)
    } else {
        Checkpoint::<f64>::from_bytes(&bytes).map(recast)
    };
    ck.with_context(|| format!("checkpoint {}", path.display()))
}

fn recast<A: Scalar, B: Scalar>(c: Checkpoint<A>) -> Checkpoint<B> {
    Checkpoint {
        params: c.params.cast(),
        input_vocab: c.input_vocab,
        output_vocab: c.output_vocab,
        seed: c.seed,
        meta: c.meta,
    }
}

fn checkpoint_dtype(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(read_header(&bytes)
        .with_context(|| format!("checkpoint {}", path.display()))?
        .dtype)
}

pub struct TrainSummary {
    pub best_f1: Option<f64>,
    pub best_step: usize,
    pub steps: usize,
    pub best_path: PathBuf,
}

pub fn train_cmd(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate_for_train()?;
    match cfg.model.dtype.as_str() {
        "f64" => train_typed::<f64>(cfg),
        _ => train_typed::<f32>(cfg),
    }
}

fn train_typed<S: Scalar>(cfg: &RunConfig) -> Result<TrainSummary> {
    let data = &cfg.data;
    let train_path = data.train.as_deref().expect("validated");
    let dev_path = data.dev.as_deref().expect("validated");
    let out_dir = cfg.output.dir.as_deref().expect("validated");
    fs::create_dir_all(out_dir.join("checkpoints")).with_context(|| format!("creating {}", out_dir.display()))?;
    cfg.write_resolved(&out_dir.join("run.toml"))?;

    let train_trees = read_treebank(train_path)?;
    let dev_trees = read_treebank(dev_path)?;
    if train_trees.is_empty() {
        bail!("{} contains no trees", train_path.display());
    }

    let (input_vocab, output_vocab) = match (&data.input_vocab, &data.output_vocab) {
        (Some(i), Some(o)) => (read_vocab(i)?, read_vocab(o)?),
        _ => {
            let words: Vec<Vec<String>> = train_trees.iter().map(|t| t.words()).collect();
            let seqs: Vec<Vec<LinearSymbol>> = train_trees.iter().map(|t| linearize(&normalize_pos(t))).collect();
            (
                Vocab::build_input(words.iter().map(|w| w.as_slice()), data.input_vocab_cap)?,
                Vocab::build_output(seqs.iter().map(|s| s.as_slice()), usize::MAX)?,
            )
        }
    };
    input_vocab.write_to(create(&out_dir.join("input.vocab"))?)?;
    output_vocab.write_to(create(&out_dir.join("output.vocab"))?)?;

    let train = encode_examples(&train_trees, &input_vocab, &output_vocab)
        .with_context(|| format!("encoding {}", train_path.display()))?;
    let dev = dev_examples(&dev_trees, &input_vocab).with_context(|| format!("encoding {}", dev_path.display()))?;

    let hyper = Hyper::new(
        cfg.model.layers,
        cfg.model.hidden,
        cfg.model.embed,
        input_vocab.len(),
        output_vocab.len(),
    )
    .with_dropout(cfg.train.dropout_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    rng.set_stream(INIT_STREAM);
    let mut init = ModelParams::<S>::init(&hyper, &mut rng)?;
    if let Some(path) = &data.embeddings {
        let file = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
        let (table, stats) = load_pretrained(file, &input_vocab, hyper.embed, &mut rng)
            .with_context(|| format!("embeddings {}", path.display()))?;
        info!(
            "embeddings: {} copied, {} random, {} duplicates",
            stats.copied, stats.random, stats.duplicates
        );
        init.embedding = table;
    }

    let seed = cfg.train.seed;
    let save = |params: &ModelParams<S>, meta: serde_json::Value, path: &Path| -> Result<()> {
        let mut ck = Checkpoint::new(params.clone(), input_vocab.clone(), output_vocab.clone(), seed);
        ck.meta = meta;
        let mut out = create(path)?;
        ck.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    };
    let ckpt_dir = out_dir.join("checkpoints");
    let observer = |params: &ModelParams<S>, ev: &EvalEvent| -> treeseq::Result<()> {
        if ev.improved {
            let path = ckpt_dir.join(format!("step{:07}-f1_{:.2}.ckpt", ev.step, ev.dev_f1));
            save(params, serde_json::json!({"step": ev.step, "dev_f1": ev.dev_f1}), &path)
                .map_err(|e| Error::Checkpoint(format!("{e:#}")))?;
        }
        Ok(())
    };
    let outcome = train_loop(&train, &dev, &output_vocab, &cfg.train, init, observer)?;

    let mut log = create(&out_dir.join("train.log.jsonl"))?;
    for r in &outcome.log {
        writeln!(log, "{}", r.to_json_line())?;
    }
    log.flush()?;
    let meta = serde_json::json!({
        "step": outcome.best_step,
        "dev_f1": outcome.best_f1,
        "steps": outcome.steps,
    });
    let best_path = out_dir.join("best.ckpt");
    save(&outcome.best, meta, &best_path)?;
    let evals = outcome.log.iter().filter(|r| matches!(r, LogRecord::Eval { .. })).count();
    info!("{} updates, {evals} dev evaluations", outcome.steps);
    Ok(TrainSummary {
        best_f1: outcome.best_f1,
        best_step: outcome.best_step,
        steps: outcome.steps,
        best_path,
    })
}

fn read_vocab(path: &Path) -> Result<Vocab> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Vocab::read_from(BufReader::new(f)).with_context(|| format!("vocabulary {}", path.display()))
}

pub struct ParseRequest<'a> {
    pub checkpoints: &'a [PathBuf],
    pub input: &'a Path,
    pub output: Option<&'a Path>,
    pub attention_dir: Option<&'a Path>,
    pub options: DecodeOptions,
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParseStats {
    pub sentences: usize,
    pub skipped_empty: usize,
    pub repaired: usize,
    pub malformed_rate: f64,
    pub seconds: f64,
    pub sentences_per_second: f64,
    pub beam: usize,
    pub models: usize,
}

pub fn parse_cmd(req: &ParseRequest) -> Result<ParseStats> {
    if req.checkpoints.is_empty() {
        bail!("at least one checkpoint is required");
    }
    let mut dtypes = Vec::new();
    for p in req.checkpoints {
        dtypes.push(checkpoint_dtype(p)?);
    }
    if dtypes.iter().all(|d| d == f32::DTYPE) {
        parse_typed::<f32>(req)
    } else {
        parse_typed::<f64>(req)
    }
}

fn parse_typed<S: Scalar>(req: &ParseRequest) -> Result<ParseStats> {
    let models: Vec<Checkpoint<S>> = req
        .checkpoints
        .iter()
        .map(|p| load_checkpoint::<S>(p))
        .collect::<Result<_>>()?;
    let first = &models[0];
    for (m, p) in models.iter().zip(req.checkpoints).skip(1) {
        if m.input_vocab != first.input_vocab || m.output_vocab != first.output_vocab {
            bail!(
                "{} uses different vocabularies from {}",
                p.display(),
                req.checkpoints[0].display()
            );
        }
    }

    let text = read_text(req.input)?;
    let mut sentences: Vec<(usize, Vec<String>)> = Vec::new();
    let mut skipped = 0;
    for (i, line) in text.lines().enumerate() {
        let words: Vec<String> = line.split_whitespace().map(String::from).collect();
        if words.is_empty() {
            warn!("{}: line {} is empty; skipped", req.input.display(), i + 1);
            skipped += 1;
        } else {
            sentences.push((i + 1, words));
        }
    }

    let started = Instant::now();
    let results = if models.len() == 1 {
        decode_all(&sentences, &first.params, first, req)?
    } else {
        let ensemble = Ensemble::new(models.iter().map(|m| &m.params).collect())?;
        decode_all(&sentences, &ensemble, first, req)?
    };
    let seconds = started.elapsed().as_secs_f64();

    let mut out = open_output(req.output)?;
    for r in &results {
        writeln!(out, "{}", write_bracketed(&r.tree))?;
    }
    out.flush()?;
    if let Some(dir) = req.attention_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for ((line, words), r) in sentences.iter().zip(&results) {
            let inputs: Vec<&str> = words.iter().rev().map(String::as_str).collect();
            let outputs: Vec<String> = r.symbols.iter().map(|s| s.token()).collect();
            fs::write(dir.join(format!("line{line:06}.tsv")), r.trace.to_tsv(&inputs, &outputs))?;
        }
    }

    let repaired = results.iter().filter(|r| r.was_repaired).count();
    let n = results.len();
    let stats = ParseStats {
        sentences: n,
        skipped_empty: skipped,
        repaired,
        malformed_rate: if n == 0 { 0.0 } else { repaired as f64 / n as f64 },
        seconds,
        sentences_per_second: if seconds > 0.0 { n as f64 / seconds } else { 0.0 },
        beam: req.options.beam_size,
        models: models.len(),
    };
    if let Some(out) = req.output {
        fs::write(sibling(out, ".stats.json"), serde_json::to_string_pretty(&stats)? + "\n")?;
        let resolved = serde_json::json!({
            "checkpoints": req.checkpoints,
            "input": req.input,
            "beam": req.options.beam_size,
            "max_len": req.options.max_len,
            "attention_dir": req.attention_dir,
        });
        fs::write(sibling(out, ".run.toml"), json_to_toml(resolved)?)?;
    }
    Ok(stats)
}

// Sentences are claimed from a shared counter by each worker; results land
// in their input slot, so output order never depends on scheduling.
fn decode_all<M, S>(
    sentences: &[(usize, Vec<String>)],
    scorer: &M,
    vocabs: &Checkpoint<S>,
    req: &ParseRequest,
) -> Result<Vec<ParseOutput>>
where
    M: StepScorer + Sync,
    S: Scalar,
{
    let threads = match req.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .clamp(1, sentences.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<treeseq::Result<ParseOutput>>>> = Mutex::new((0..sentences.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((_, words)) = sentences.get(i) else { break };
                let r = parse_sentence(words, scorer, &vocabs.input_vocab, &vocabs.output_vocab, req.options);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .zip(sentences)
        .map(|(r, (line, _))| {
            r.expect("every slot filled")
                .with_context(|| format!("{}: line {line}", req.input.display()))
        })
        .collect()
}

pub struct EvalRequest<'a> {
    pub gold: &'a Path,
    pub pred: &'a Path,
    pub config: EvalConfig,
    pub json: Option<&'a Path>,
    pub report: Option<&'a Path>,
    pub buckets: Option<&'a Path>,
    /// Parse statistics whose repaired count feeds the malformed rate.
    pub stats: Option<&'a Path>,
}

pub fn eval_cmd(req: &EvalRequest) -> Result<F1Report> {
    let gold = read_treebank(req.gold)?;
    let pred = read_treebank(req.pred)?;
    let mut report = evaluate(&gold, &pred, &req.config)
        .with_context(|| format!("scoring {} against {}", req.pred.display(), req.gold.display()))?;
    if let Some(p) = req.stats {
        let v: serde_json::Value = serde_json::from_str(&read_text(p)?).with_context(|| format!("parsing {}", p.display()))?;
        let repaired = v["repaired"]
            .as_u64()
            .ok_or_else(|| anyhow!("{} has no repaired count", p.display()))?;
        report = report.with_malformed(repaired as usize);
    }
    if let Some(p) = req.report {
        fs::write(p, report.to_string()).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = req.json {
        fs::write(p, serde_json::to_string_pretty(&report)? + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = req.buckets {
        fs::write(p, report.bucket_tsv()).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = req.json.or(req.report).or(req.buckets) {
        let resolved = serde_json::json!({
            "gold": req.gold,
            "pred": req.pred,
            "eval": req.config,
        });
        fs::write(sibling(p, ".run.toml"), json_to_toml(resolved)?)?;
    }
    Ok(report)
}

#[derive(Serialize)]
pub struct CheckpointSummary {
    pub dtype: String,
    pub version: u32,
    pub seed: u64,
    pub init_range: f64,
    pub hyper: Hyper,
    pub attention_feedback: String,
    pub parameters: usize,
    pub input_vocab: usize,
    pub output_vocab: usize,
    pub arrays: Vec<(String, usize, usize)>,
    pub meta: serde_json::Value,
}

pub fn inspect_cmd(path: &Path) -> Result<CheckpointSummary> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let h = read_header(&bytes).with_context(|| format!("checkpoint {}", path.display()))?;
    // A full load verifies the parameter block as well as the header.
    if h.dtype == f32::DTYPE {
        Checkpoint::<f32>::from_bytes(&bytes)?;
    } else {
        Checkpoint::<f64>::from_bytes(&bytes)?;
    }
    Ok(CheckpointSummary {
        parameters: h.arrays.iter().map(|a| a.rows * a.cols).sum(),
        arrays: h.arrays.iter().map(|a| (a.name.clone(), a.rows, a.cols)).collect(),
        attention_feedback: serde_json::to_value(&h.variants.attention_feedback)?
            .as_str()
            .map_or_else(|| format!("{:?}", h.variants.attention_feedback), String::from),
        dtype: h.dtype,
        version: h.version,
        seed: h.seed,
        init_range: h.init_range,
        hyper: h.hyper,
        input_vocab: h.input_vocab.len(),
        output_vocab: h.output_vocab.len(),
        meta: h.meta,
    })
}

impl std::fmt::Display for CheckpointSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let hy = &self.hyper;
        writeln!(f, "format version   {}", self.version)?;
        writeln!(f, "dtype            {}", self.dtype)?;
        writeln!(f, "seed             {}", self.seed)?;
        writeln!(f, "init range       {}", self.init_range)?;
        writeln!(f, "layers           {}", hy.layers)?;
        writeln!(f, "hidden           {}", hy.hidden)?;
        writeln!(f, "embed            {}", hy.embed)?;
        writeln!(f, "dropout          {}", hy.dropout_rate)?;
        writeln!(f, "feedback         {}", self.attention_feedback)?;
        writeln!(f, "input vocab      {}", self.input_vocab)?;
        writeln!(f, "output vocab     {}", self.output_vocab)?;
        writeln!(f, "parameters       {}", self.parameters)?;
        for (name, r, c) in &self.arrays {
            writeln!(f, "  {name:<28} {r} x {c}")?;
        }
        if !self.meta.is_null() {
            writeln!(f, "meta             {}", self.meta)?;
        }
        Ok(())
    }
}

/// Splits "10,20,30" into bucket bounds.
pub fn parse_bounds(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().with_context(|| format!("bad bucket bound {p:?}")))
        .collect()
}
