//! Mini-batch SGD with teacher forcing, gradient clipping, periodic dev
//! evaluation and early stopping on dev bracket F1.

use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decode::{beam_search, default_max_len, tree_from_symbols};
use crate::error::{dim_err, Error, Result};
use crate::eval::{bracket_f1, F1Report};
use crate::model::{Mode, ModelParams};
use crate::numerics::Scalar;
use crate::treetext::{linearize, normalize_pos, ParseTree};
use crate::vocab::Vocab;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplies the learning rate once per epoch after `decay_start_epoch`.
    pub lr_decay: f64,
    /// Last epoch (1-based) trained at the base rate.
    pub decay_start_epoch: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub dropout_rate: f64,
    pub grad_clip_norm: f64,
    pub seed: u64,
    /// Evaluate on dev every this many updates.
    pub eval_every: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    /// Hard cap on updates.
    pub max_steps: Option<usize>,
    /// Beam width for dev decoding.
    pub eval_beam: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            lr_decay: 0.9,
            decay_start_epoch: 5,
            batch_size: 16,
            max_epochs: 20,
            dropout_rate: 0.0,
            grad_clip_norm: 5.0,
            seed: 1,
            eval_every: 200,
            patience: 5,
            max_steps: None,
            eval_beam: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be non-negative, got {}", self.learning_rate));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return bad(format!("lr_decay must be positive, got {}", self.lr_decay));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate must be in [0, 1), got {}", self.dropout_rate));
        }
        if !(self.grad_clip_norm > 0.0) {
            return bad(format!("grad_clip_norm must be positive, got {}", self.grad_clip_norm));
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive".into());
        }
        if self.patience == 0 {
            return bad("patience must be positive".into());
        }
        if self.eval_beam == 0 {
            return bad("eval_beam must be positive".into());
        }
        Ok(())
    }

    /// Learning rate used throughout `epoch` (1-based).
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let decays = epoch.saturating_sub(self.decay_start_epoch);
        self.learning_rate * self.lr_decay.powi(decays as i32)
    }
}

/// Encoder input (reversed ids) and target symbol ids ending in END.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: Vec<usize>,
    pub target: Vec<usize>,
}

/// A held-out sentence with its gold tree.
#[derive(Clone, Debug, PartialEq)]
pub struct DevExample {
    pub input: Vec<usize>,
    pub words: Vec<String>,
    pub gold: ParseTree,
}

/// Linearized, POS-normalized training pair for `tree`.
pub fn encode_example(tree: &ParseTree, input_vocab: &Vocab, output_vocab: &Vocab) -> Result<Example> {
    let symbols = linearize(&normalize_pos(tree));
    Ok(Example {
        input: input_vocab.encode_input(&tree.words())?,
        target: output_vocab.encode_symbols(&symbols)?,
    })
}

pub fn encode_examples(trees: &[ParseTree], input_vocab: &Vocab, output_vocab: &Vocab) -> Result<Vec<Example>> {
    trees
        .iter()
        .enumerate()
        .map(|(i, t)| {
            encode_example(t, input_vocab, output_vocab).map_err(|e| Error::Alignment {
                index: i,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn dev_examples(trees: &[ParseTree], input_vocab: &Vocab) -> Result<Vec<DevExample>> {
    trees
        .iter()
        .map(|t| {
            let words = t.words();
            Ok(DevExample {
                input: input_vocab.encode_input(&words)?,
                words,
                gold: t.clone(),
            })
        })
        .collect()
}

/// Mean negative log probability of the batch and its exact gradient.
pub fn batch_loss<S: Scalar>(p: &ModelParams<S>, batch: &[&Example], mut mode: Mode) -> Result<(f64, ModelParams<S>)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let inv = S::of(-1.0 / batch.len() as f64);
    let mut grads = p.zeros_like();
    let mut total = 0.0;
    for (i, ex) in batch.iter().enumerate() {
        let (lp, g) = p
            .log_prob_and_grad(&ex.input, &ex.target, mode.reborrow())
            .map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("batch example {i}: {m}")),
                other => other,
            })?;
        total -= lp.as_f64();
        grads.add_scaled(inv, &g)?;
    }
    Ok((total / batch.len() as f64, grads))
}

/// Outcome of one parameter update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateStats {
    pub grad_norm: f64,
    pub clipped: bool,
}

/// `θ ← θ − lr·g`, with `g` rescaled to norm `clip` when it is longer.
pub fn sgd_step<S: Scalar>(p: &mut ModelParams<S>, grads: &ModelParams<S>, lr: f64, clip: f64) -> Result<UpdateStats> {
    if !p.same_shape(grads) {
        return dim_err("sgd_step", "gradient layout differs from parameters");
    }
    let grad_norm = grads.squared_norm().sqrt();
    if !grad_norm.is_finite() {
        return Err(Error::NonFinite("gradient norm".into()));
    }
    let clipped = grad_norm > clip;
    let scale = if clipped { clip / grad_norm } else { 1.0 };
    p.add_scaled(S::of(-lr * scale), grads)?;
    Ok(UpdateStats { grad_norm, clipped })
}

/// Dev F1 with the given beam; the report's malformed rate counts repaired
/// outputs.
pub fn evaluate_dev<S: Scalar>(
    p: &ModelParams<S>,
    dev: &[DevExample],
    output_vocab: &Vocab,
    beam: usize,
) -> Result<F1Report> {
    let mut preds = Vec::with_capacity(dev.len());
    let mut repaired = 0;
    for ex in dev {
        let (hyp, _) = beam_search(p, &ex.input, beam, default_max_len(ex.words.len()))?;
        let symbols = output_vocab.decode_symbols(&hyp.symbols)?;
        let (tree, fixed) = tree_from_symbols(&symbols, &ex.words)?;
        repaired += fixed as usize;
        preds.push(tree);
    }
    let gold: Vec<ParseTree> = dev.iter().map(|d| d.gold.clone()).collect();
    Ok(bracket_f1(&gold, &preds)?.with_malformed(repaired))
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Step {
        step: usize,
        epoch: usize,
        loss: f64,
        lr: f64,
        grad_norm: f64,
        clipped: bool,
        wall_secs: f64,
    },
    Eval {
        step: usize,
        epoch: usize,
        dev_f1: f64,
        best_f1: f64,
        malformed_rate: f64,
        lr: f64,
        wall_secs: f64,
    },
}

impl LogRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log records serialize")
    }

    /// The record with its wall-clock field zeroed, for comparing runs.
    pub fn without_wall_clock(&self) -> Self {
        let mut r = self.clone();
        match &mut r {
            LogRecord::Step { wall_secs, .. } | LogRecord::Eval { wall_secs, .. } => *wall_secs = 0.0,
        }
        r
    }
}

/// A dev evaluation as seen by the training observer.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalEvent {
    pub step: usize,
    pub epoch: usize,
    pub dev_f1: f64,
    pub improved: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<S> {
    /// Parameters from the best dev evaluation, or the initial ones if no
    /// update ran.
    pub best: ModelParams<S>,
    pub best_f1: Option<f64>,
    pub best_step: usize,
    pub steps: usize,
    pub log: Vec<LogRecord>,
}

/// Trains from `init`. `observer` sees every dev evaluation together with
/// the current parameters, e.g. to write checkpoints.
pub fn train_loop<S: Scalar>(
    train: &[Example],
    dev: &[DevExample],
    output_vocab: &Vocab,
    cfg: &TrainConfig,
    init: ModelParams<S>,
    mut observer: impl FnMut(&ModelParams<S>, &EvalEvent) -> Result<()>,
) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    if dev.is_empty() {
        return Err(Error::Empty("dev set"));
    }
    let mut params = init;
    params.hyper.dropout_rate = cfg.dropout_rate;
    let mut outcome = TrainOutcome {
        best: params.clone(),
        best_f1: None,
        best_step: 0,
        steps: 0,
        log: Vec::new(),
    };
    if cfg.max_epochs == 0 || train.is_empty() {
        return Ok(outcome);
    }

    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order_rng.set_stream(0);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(1);
    let started = Instant::now();
    let mut step = 0;
    let mut stale = 0;
    let mut last_eval_step = 0;
    let max_steps = cfg.max_steps.unwrap_or(usize::MAX);

    let mut evaluate = |params: &ModelParams<S>, step: usize, epoch: usize, lr: f64, outcome: &mut TrainOutcome<S>| -> Result<bool> {
        let report = evaluate_dev(params, dev, output_vocab, cfg.eval_beam)?;
        let improved = outcome.best_f1.is_none_or(|b| report.f1 > b);
        if improved {
            outcome.best = params.clone();
            outcome.best_f1 = Some(report.f1);
            outcome.best_step = step;
        }
        info!(
            "step {step} epoch {epoch}: dev F1 {:.2} (best {:.2}), malformed {:.3}",
            report.f1,
            outcome.best_f1.unwrap_or(0.0),
            report.malformed_rate
        );
        outcome.log.push(LogRecord::Eval {
            step,
            epoch,
            dev_f1: report.f1,
            best_f1: outcome.best_f1.unwrap_or(report.f1),
            malformed_rate: report.malformed_rate,
            lr,
            wall_secs: started.elapsed().as_secs_f64(),
        });
        observer(
            params,
            &EvalEvent {
                step,
                epoch,
                dev_f1: report.f1,
                improved,
            },
        )?;
        Ok(improved)
    };

    let mut indices: Vec<usize> = (0..train.len()).collect();
    let mut epoch = 0;
    let mut lr = cfg.learning_rate;
    'epochs: for e in 1..=cfg.max_epochs {
        epoch = e;
        lr = cfg.lr_at_epoch(e);
        indices.shuffle(&mut order_rng);
        for chunk in indices.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let mode = if cfg.dropout_rate > 0.0 {
                Mode::Train(&mut dropout_rng)
            } else {
                Mode::Inference
            };
            let (loss, grads) = batch_loss(&params, &batch, mode).map_err(|err| match err {
                Error::NonFinite(m) => Error::NonFinite(format!(
                    "step {} (examples {:?}): {m}",
                    step + 1,
                    chunk
                )),
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("loss at step {} (examples {chunk:?})", step + 1)));
            }
            let stats = sgd_step(&mut params, &grads, lr, cfg.grad_clip_norm)?;
            step += 1;
            debug!("step {step}: loss {loss:.4} |g| {:.3}", stats.grad_norm);
            outcome.log.push(LogRecord::Step {
                step,
                epoch: e,
                loss,
                lr,
                grad_norm: stats.grad_norm,
                clipped: stats.clipped,
                wall_secs: started.elapsed().as_secs_f64(),
            });
            if step % cfg.eval_every == 0 {
                last_eval_step = step;
                if evaluate(&params, step, e, lr, &mut outcome)? {
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= cfg.patience {
                        info!("stopping after {stale} evaluations without improvement");
                        break 'epochs;
                    }
                }
            }
            if step >= max_steps {
                break 'epochs;
            }
        }
    }
    if step > last_eval_step {
        evaluate(&params, step, epoch, lr, &mut outcome)?;
    }
    outcome.steps = step;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpusgen::{make_corpus, ToyGrammar};
    use crate::model::Hyper;
    use crate::treetext::LinearSymbol;
    use crate::numerics::grad_check;
    use rand::Rng;

    fn tiny(seed: u64) -> ModelParams<f64> {
        let hyper = Hyper::new(2, 4, 3, 7, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ModelParams::<f64>::init(&hyper, &mut rng).unwrap();
        let flat: Vec<f64> = (0..p.num_params()).map(|_| rng.gen_range(-1.5..=1.5)).collect();
        p.set_flat(&flat).unwrap();
        p
    }

    fn ex(input: &[usize], target: &[usize]) -> Example {
        Example {
            input: input.to_vec(),
            target: target.to_vec(),
        }
    }

    #[test]
    fn batch_of_one_and_duplicates() {
        let p = tiny(1);
        let a = ex(&[1, 2, 3], &[2, 4, 0]);
        let (loss, g) = batch_loss(&p, &[&a], Mode::Inference).unwrap();
        let lp = p.sequence_log_prob(&a.input, &a.target, Mode::Inference).unwrap();
        assert_eq!(loss, -lp);
        let (loss2, g2) = batch_loss(&p, &[&a, &a], Mode::Inference).unwrap();
        assert!((loss2 - loss).abs() < 1e-12);
        let (fa, fb) = (g.to_flat(), g2.to_flat());
        assert!(fa.iter().zip(&fb).all(|(x, y)| (x - y).abs() < 1e-12));
        assert!(batch_loss(&p, &[], Mode::Inference).is_err());
    }

    #[test]
    fn batch_gradient_matches_finite_differences() {
        let p = tiny(2);
        let a = ex(&[1, 2, 3], &[2, 4, 0]);
        let b = ex(&[5, 6], &[1, 1, 3, 0]);
        let (_, g) = batch_loss(&p, &[&a, &b], Mode::Inference).unwrap();
        let mut probe = p.clone();
        // gradient of the negative loss is the returned gradient negated
        let neg: Vec<f64> = g.to_flat().iter().map(|x| -x).collect();
        let err = grad_check(
            |t| {
                probe.set_flat(t).unwrap();
                -batch_loss(&probe, &[&a, &b], Mode::Inference).unwrap().0
            },
            &p.to_flat(),
            &neg,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn sgd_step_definitions() {
        let mut p = tiny(3);
        let before = p.clone();
        let zero = p.zeros_like();
        sgd_step(&mut p, &zero, 0.5, 5.0).unwrap();
        assert_eq!(p, before);
        let (_, g) = batch_loss(&p, &[&ex(&[1], &[2, 0])], Mode::Inference).unwrap();
        sgd_step(&mut p, &g, 0.0, 5.0).unwrap();
        assert_eq!(p, before);

        // one scalar: grad 2, lr 0.1
        let mut g = p.zeros_like();
        g.output_proj[(0, 0)] = 2.0;
        let stats = sgd_step(&mut p, &g, 0.1, 5.0).unwrap();
        assert!(!stats.clipped);
        assert!((before.output_proj[(0, 0)] - p.output_proj[(0, 0)] - 0.2).abs() < 1e-15);

        let other = ModelParams::<f64>::zeros(&Hyper::new(1, 4, 3, 7, 6));
        assert!(sgd_step(&mut p, &other, 0.1, 5.0).is_err());
    }

    #[test]
    fn clipping_keeps_direction() {
        let p = tiny(4);
        let (_, g) = batch_loss(&p, &[&ex(&[1, 2], &[3, 3, 0])], Mode::Inference).unwrap();
        let norm = g.squared_norm().sqrt();
        let clip = norm / 10.0;
        let mut q = p.clone();
        let stats = sgd_step(&mut q, &g, 1.0, clip).unwrap();
        assert!(stats.clipped);
        let (a, b, d) = (p.to_flat(), q.to_flat(), g.to_flat());
        let step: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let dot: f64 = step.iter().zip(&d).map(|(x, y)| x * y).sum();
        let n1 = step.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cos = dot / (n1 * norm);
        assert!((cos - 1.0).abs() < 1e-9, "{cos}");
        assert!((n1 - clip).abs() < 1e-9);
    }

    #[test]
    fn train_mode_without_dropout_equals_inference() {
        let p = tiny(5);
        let a = ex(&[1, 2, 3], &[2, 4, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (lt, _) = batch_loss(&p, &[&a], Mode::Train(&mut rng)).unwrap();
        let (li, _) = batch_loss(&p, &[&a], Mode::Inference).unwrap();
        assert!((lt - li).abs() < 1e-9);
    }

    #[test]
    fn config_validation_and_schedule() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.lr_at_epoch(1), 0.5);
        assert_eq!(cfg.lr_at_epoch(5), 0.5);
        assert!((cfg.lr_at_epoch(7) - 0.5 * 0.81).abs() < 1e-15);
        for bad in [
            TrainConfig { dropout_rate: 1.0, ..cfg.clone() },
            TrainConfig { batch_size: 0, ..cfg.clone() },
            TrainConfig { grad_clip_norm: 0.0, ..cfg.clone() },
            TrainConfig { eval_every: 0, ..cfg.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    struct Toy {
        train: Vec<Example>,
        dev: Vec<DevExample>,
        outv: Vocab,
        init: ModelParams<f32>,
    }

    fn toy(n: usize, hidden: usize) -> Toy {
        let g = ToyGrammar::default_grammar();
        let c = make_corpus(&g, n, 10, 0, 3).unwrap();
        let words: Vec<Vec<String>> = c.train.iter().map(|t| t.words()).collect();
        let inv = Vocab::build_input(words.iter().map(|w| w.as_slice()), 100).unwrap();
        let seqs: Vec<Vec<LinearSymbol>> = c.train.iter().map(|t| linearize(&normalize_pos(t))).collect();
        let outv = Vocab::build_output(seqs.iter().map(|s| s.as_slice()), 100).unwrap();
        let train = encode_examples(&c.train, &inv, &outv).unwrap();
        let dev = dev_examples(&c.dev, &inv).unwrap();
        let hyper = Hyper::new(1, hidden, 8, inv.len(), outv.len());
        let init = ModelParams::<f32>::init(&hyper, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        Toy { train, dev, outv, init }
    }

    #[test]
    fn zero_epochs_returns_init() {
        let t = toy(5, 8);
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let out = train_loop(&t.train, &t.dev, &t.outv, &cfg, t.init.clone(), |_, _| Ok(())).unwrap();
        assert_eq!(out.best, t.init);
        assert!(out.log.is_empty());
        assert_eq!(out.steps, 0);
    }

    #[test]
    fn training_is_deterministic_and_keeps_best() {
        let t = toy(20, 8);
        let cfg = TrainConfig {
            max_epochs: 3,
            batch_size: 4,
            eval_every: 5,
            patience: 100,
            dropout_rate: 0.2,
            seed: 11,
            ..TrainConfig::default()
        };
        let mut seen = Vec::new();
        let a = train_loop(&t.train, &t.dev, &t.outv, &cfg, t.init.clone(), |_, e| {
            seen.push(e.clone());
            Ok(())
        })
        .unwrap();
        let b = train_loop(&t.train, &t.dev, &t.outv, &cfg, t.init.clone(), |_, _| Ok(())).unwrap();
        assert_eq!(a.steps, 15);
        assert_eq!(a.best, b.best);
        let strip = |l: &[LogRecord]| l.iter().map(LogRecord::without_wall_clock).collect::<Vec<_>>();
        assert_eq!(strip(&a.log), strip(&b.log));
        assert_eq!(seen.len(), 3);
        let best = seen.iter().map(|e| e.dev_f1).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.best_f1, Some(best));
        // the first evaluation reaching the maximum is the one kept
        let first = seen.iter().find(|e| e.dev_f1 == best).unwrap();
        assert_eq!(a.best_step, first.step);

        // a different seed changes the trajectory
        let c = train_loop(
            &t.train,
            &t.dev,
            &t.outv,
            &TrainConfig { seed: 12, ..cfg.clone() },
            t.init.clone(),
            |_, _| Ok(()),
        )
        .unwrap();
        assert_ne!(strip(&a.log), strip(&c.log));
    }

    #[test]
    fn patience_and_max_steps_stop_early() {
        let t = toy(20, 8);
        let cfg = TrainConfig {
            max_epochs: 50,
            batch_size: 4,
            eval_every: 1,
            patience: 2,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        // nothing changes, so the second and third evaluations do not improve
        let out = train_loop(&t.train, &t.dev, &t.outv, &cfg, t.init.clone(), |_, _| Ok(())).unwrap();
        assert_eq!(out.steps, 3);
        let cfg = TrainConfig {
            max_steps: Some(7),
            eval_every: 100,
            patience: 5,
            ..cfg
        };
        let out = train_loop(&t.train, &t.dev, &t.outv, &cfg, t.init.clone(), |_, _| Ok(())).unwrap();
        assert_eq!(out.steps, 7);
        assert!(matches!(out.log.last(), Some(LogRecord::Eval { step: 7, .. })));
    }

    #[test]
    fn loss_decreases_on_tiny_corpus() {
        let t = toy(10, 16);
        let cfg = TrainConfig {
            max_epochs: 40,
            batch_size: 5,
            eval_every: 1000,
            learning_rate: 0.5,
            ..TrainConfig::default()
        };
        let out = train_loop(&t.train, &t.dev, &t.outv, &cfg, t.init.clone(), |_, _| Ok(())).unwrap();
        let losses: Vec<f64> = out
            .log
            .iter()
            .filter_map(|r| match r {
                LogRecord::Step { loss, .. } => Some(*loss),
                _ => None,
            })
            .collect();
        let head: f64 = losses[..4].iter().sum();
        let tail: f64 = losses[losses.len() - 4..].iter().sum();
        assert!(tail < head / 2.0, "{head} -> {tail}");
    }

    #[test]
    fn log_records_are_json_lines() {
        let r = LogRecord::Eval {
            step: 3,
            epoch: 1,
            dev_f1: 50.0,
            best_f1: 50.0,
            malformed_rate: 0.0,
            lr: 0.5,
            wall_secs: 1.5,
        };
        let line = r.to_json_line();
        assert!(line.starts_with("{\"kind\":\"eval\""));
        assert_eq!(serde_json::from_str::<LogRecord>(&line).unwrap(), r);
    }
}
