//! Encoder, attention, decoder step and the exact backward pass through all
//! of them.
//!
//! Decoder data flow at output step `t`:
//!
//! ```text
//! x      = symbol_embedding[prev]
//! d      = top-layer LSTM output (lower layers chained as usual)
//! u_i    = v · tanh(W'1 h_i + W'2 d)       a = softmax(u)
//! d'     = Σ a_i h_i                        c = [d ; d']
//! p      = softmax(output_proj · c)
//! next top-layer recurrent input = feedback · c
//! ```

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Error, Result};
use crate::model::lstm::{LstmState, StepCache};
use crate::model::params::ModelParams;
use crate::numerics::{axpy, dot, softmax_in_place, Scalar, Vector};

/// Output id of the end-of-sequence symbol, also fed as the first decoder
/// input.
pub const END_ID: usize = 0;

/// Whether dropout is active. Training mode owns the RNG that draws masks.
pub enum Mode<'a> {
    Inference,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }

    /// Shorter-lived copy sharing the same RNG.
    pub fn reborrow(&mut self) -> Mode<'_> {
        match self {
            Mode::Inference => Mode::Inference,
            Mode::Train(rng) => Mode::Train(rng),
        }
    }

    /// Inverted-dropout mask, or `None` when dropout is inactive.
    fn mask<S: Scalar>(&mut self, rate: f64, n: usize) -> Option<Vec<S>> {
        match self {
            Mode::Train(rng) if rate > 0.0 => {
                let keep = S::of(1.0 / (1.0 - rate));
                Some(
                    (0..n)
                        .map(|_| if rng.gen::<f64>() < rate { S::zero() } else { keep })
                        .collect(),
                )
            }
            _ => None,
        }
    }
}

/// Result of running the encoder over a (reversed) input sentence.
#[derive(Clone, Debug)]
pub struct Encoded<S> {
    /// Top-layer `h` at every input position; the attention memory.
    pub states: Vec<Vector<S>>,
    /// Final `(h, m)` of every layer, bottom first.
    pub finals: Vec<LstmState<S>>,
}

/// Encoder states with their attention keys `W'1 h_i` precomputed.
#[derive(Clone, Debug)]
pub struct AttentionMemory<S> {
    states: Vec<Vector<S>>,
    keys: Vec<Vec<S>>,
}

impl<S: Scalar> AttentionMemory<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vector<S>] {
        &self.states
    }
}

/// One decoder step's outputs.
#[derive(Clone, Debug)]
pub struct StepOutput<S> {
    pub dist: Vector<S>,
    pub next_state: Vec<LstmState<S>>,
    pub attention: Vector<S>,
}

struct EncoderTrace<S> {
    steps: Vec<Vec<StepCache<S>>>,
    masks: Vec<Vec<Option<Vec<S>>>>,
}

struct DecodeTrace<S> {
    layers: Vec<StepCache<S>>,
    masks: Vec<Option<Vec<S>>>,
    z: Vec<Vec<S>>,
    a: Vec<S>,
    concat: Vec<S>,
    probs: Vec<S>,
    target_log_prob: S,
}

fn apply_mask<S: Scalar>(x: &[S], mask: &Option<Vec<S>>) -> Vec<S> {
    match mask {
        Some(m) => x.iter().zip(m).map(|(&a, &b)| a * b).collect(),
        None => x.to_vec(),
    }
}

impl<S: Scalar> ModelParams<S> {
    fn check_inputs(&self, ids: &[usize]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::Empty("encode"));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= self.hyper.input_vocab) {
            return dim_err(
                "encode",
                format!("input id {bad} outside vocabulary of {}", self.hyper.input_vocab),
            );
        }
        Ok(())
    }

    fn encode_traced(&self, ids: &[usize], mode: &mut Mode) -> Result<(Encoded<S>, EncoderTrace<S>)> {
        self.check_inputs(ids)?;
        let layers = self.hyper.layers;
        let rate = self.hyper.dropout_rate;
        let mut h: Vec<Vec<S>> = self.encoder.iter().map(|l| l.h0.to_vec()).collect();
        let mut m: Vec<Vec<S>> = self.encoder.iter().map(|l| l.m0.to_vec()).collect();
        let mut trace = EncoderTrace {
            steps: Vec::with_capacity(ids.len()),
            masks: Vec::with_capacity(ids.len()),
        };
        let mut states = Vec::with_capacity(ids.len());
        for &id in ids {
            let mut caches: Vec<StepCache<S>> = Vec::with_capacity(layers);
            let mut masks = Vec::with_capacity(layers);
            for (l, layer) in self.encoder.iter().enumerate() {
                let (x, mask) = if l == 0 {
                    (self.embedding.row(id).to_vec(), None)
                } else {
                    let mask = mode.mask(rate, self.hyper.hidden);
                    (apply_mask(&caches[l - 1].h, &mask), mask)
                };
                let c = layer.forward(x, &h[l], &m[l]);
                h[l].copy_from_slice(&c.h);
                m[l].copy_from_slice(&c.m);
                caches.push(c);
                masks.push(mask);
            }
            states.push(Vector::from_vec(h[layers - 1].clone()));
            trace.steps.push(caches);
            trace.masks.push(masks);
        }
        let finals = h
            .into_iter()
            .zip(m)
            .map(|(h, m)| LstmState {
                h: Vector::from_vec(h),
                m: Vector::from_vec(m),
            })
            .collect();
        Ok((Encoded { states, finals }, trace))
    }

    /// Runs the encoder stack over `ids` (already reversed by the caller).
    pub fn encode(&self, ids: &[usize], mut mode: Mode) -> Result<Encoded<S>> {
        Ok(self.encode_traced(ids, &mut mode)?.0)
    }

    pub fn memory(&self, encoded: &Encoded<S>) -> AttentionMemory<S> {
        let keys = encoded
            .states
            .iter()
            .map(|h| {
                let mut k = vec![S::zero(); self.hyper.hidden];
                self.attention.w_enc.gemv_acc(h, &mut k);
                k
            })
            .collect();
        AttentionMemory {
            states: encoded.states.clone(),
            keys,
        }
    }

    /// Initial decoder state: the encoder's final per-layer states.
    pub fn decoder_start(&self, encoded: &Encoded<S>) -> Vec<LstmState<S>> {
        encoded.finals.clone()
    }

    // Returns (tanh activations z_i, attention weights a, context d').
    fn attend_memory(&self, mem: &AttentionMemory<S>, d: &[S]) -> (Vec<Vec<S>>, Vec<S>, Vec<S>) {
        let hidden = self.hyper.hidden;
        let mut q = vec![S::zero(); hidden];
        self.attention.w_dec.gemv_acc(d, &mut q);
        let mut z = Vec::with_capacity(mem.len());
        let mut u = Vec::with_capacity(mem.len());
        for key in &mem.keys {
            let zi: Vec<S> = key.iter().zip(&q).map(|(&k, &qj)| (k + qj).tanh()).collect();
            u.push(dot(&self.attention.v, &zi));
            z.push(zi);
        }
        softmax_in_place(&mut u);
        let mut ctx = vec![S::zero(); hidden];
        for (&ai, h) in u.iter().zip(&mem.states) {
            axpy(ai, h, &mut ctx);
        }
        (z, u, ctx)
    }

    /// Attention weights over `enc` for decoder state `d`, and the context
    /// vector `d' = Σ a_i enc_i`.
    pub fn attend(&self, enc: &[Vector<S>], d: &[S]) -> Result<(Vector<S>, Vector<S>)> {
        let hidden = self.hyper.hidden;
        if enc.is_empty() {
            return Err(Error::Empty("attend"));
        }
        if d.len() != hidden || enc.iter().any(|h| h.len() != hidden) {
            return dim_err("attend", format!("states must have hidden size {hidden}"));
        }
        let encoded = Encoded {
            states: enc.to_vec(),
            finals: Vec::new(),
        };
        let (_, a, ctx) = self.attend_memory(&self.memory(&encoded), d);
        Ok((Vector::from_vec(a), Vector::from_vec(ctx)))
    }

    fn decode_traced(
        &self,
        prev_symbol: usize,
        state: &[LstmState<S>],
        mem: &AttentionMemory<S>,
        mode: &mut Mode,
        target: Option<usize>,
    ) -> Result<(StepOutput<S>, DecodeTrace<S>)> {
        let hidden = self.hyper.hidden;
        let layers = self.hyper.layers;
        if prev_symbol >= self.hyper.output_vocab {
            return dim_err(
                "decode_step",
                format!("symbol id {prev_symbol} outside vocabulary of {}", self.hyper.output_vocab),
            );
        }
        if state.len() != layers || state.iter().any(|s| s.h.len() != hidden || s.m.len() != hidden) {
            return dim_err("decode_step", format!("expected {layers} states of size {hidden}"));
        }
        if mem.is_empty() {
            return Err(Error::Empty("decode_step memory"));
        }
        let rate = self.hyper.dropout_rate;
        let mut caches: Vec<StepCache<S>> = Vec::with_capacity(layers);
        let mut masks = Vec::with_capacity(layers);
        for (l, layer) in self.decoder.iter().enumerate() {
            let (x, mask) = if l == 0 {
                (self.symbol_embedding.row(prev_symbol).to_vec(), None)
            } else {
                let mask = mode.mask(rate, hidden);
                (apply_mask(&caches[l - 1].h, &mask), mask)
            };
            caches.push(layer.forward(x, &state[l].h, &state[l].m));
            masks.push(mask);
        }
        let d = &caches[layers - 1].h;
        let (z, a, ctx) = self.attend_memory(mem, d);
        let mut concat = Vec::with_capacity(2 * hidden);
        concat.extend_from_slice(d);
        concat.extend_from_slice(&ctx);

        let mut logits = vec![S::zero(); self.hyper.output_vocab];
        self.output_proj.gemv_acc(&concat, &mut logits);
        let target_log_prob = match target {
            Some(y) => {
                let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
                let lse = logits.iter().map(|&x| (x - max).exp()).sum::<S>().ln() + max;
                logits[y] - lse
            }
            None => S::zero(),
        };
        let mut probs = logits;
        softmax_in_place(&mut probs);

        let mut feedback = vec![S::zero(); hidden];
        self.feedback.gemv_acc(&concat, &mut feedback);
        let mut next_state: Vec<LstmState<S>> = caches
            .iter()
            .map(|c| LstmState {
                h: Vector::from_vec(c.h.clone()),
                m: Vector::from_vec(c.m.clone()),
            })
            .collect();
        next_state[layers - 1].h = Vector::from_vec(feedback);

        let out = StepOutput {
            dist: Vector::from_vec(probs.clone()),
            next_state,
            attention: Vector::from_vec(a.clone()),
        };
        let trace = DecodeTrace {
            layers: caches,
            masks,
            z,
            a,
            concat,
            probs,
            target_log_prob,
        };
        Ok((out, trace))
    }

    /// One decoder step from `prev_symbol` and the carried per-layer state.
    pub fn decode_step(
        &self,
        prev_symbol: usize,
        state: &[LstmState<S>],
        mem: &AttentionMemory<S>,
        mut mode: Mode,
    ) -> Result<StepOutput<S>> {
        Ok(self.decode_traced(prev_symbol, state, mem, &mut mode, None)?.0)
    }

    fn check_targets(&self, targets: &[usize]) -> Result<()> {
        match targets.last() {
            Some(&END_ID) => {}
            _ => {
                return Err(Error::MalformedSequence(
                    "target sequence must terminate with END".into(),
                ))
            }
        }
        if let Some(&bad) = targets.iter().find(|&&y| y >= self.hyper.output_vocab) {
            return dim_err(
                "sequence_log_prob",
                format!("target id {bad} outside vocabulary of {}", self.hyper.output_vocab),
            );
        }
        Ok(())
    }

    fn forward_sequence(
        &self,
        ids: &[usize],
        targets: &[usize],
        mode: &mut Mode,
    ) -> Result<(S, Encoded<S>, EncoderTrace<S>, AttentionMemory<S>, Vec<DecodeTrace<S>>)> {
        self.check_targets(targets)?;
        let (encoded, enc_trace) = self.encode_traced(ids, mode)?;
        let mem = self.memory(&encoded);
        let mut state = self.decoder_start(&encoded);
        let mut prev = END_ID;
        let mut total = S::zero();
        let mut traces = Vec::with_capacity(targets.len());
        for (t, &y) in targets.iter().enumerate() {
            let (out, trace) = self.decode_traced(prev, &state, &mem, mode, Some(y))?;
            if !trace.target_log_prob.is_finite() || !out.dist.is_finite() {
                return Err(Error::NonFinite(format!("decoder step {t}")));
            }
            total += trace.target_log_prob;
            traces.push(trace);
            state = out.next_state;
            prev = y;
        }
        Ok((total, encoded, enc_trace, mem, traces))
    }

    /// `log P(targets | input)` under teacher forcing. `targets` must end
    /// with END.
    pub fn sequence_log_prob(&self, ids: &[usize], targets: &[usize], mut mode: Mode) -> Result<S> {
        Ok(self.forward_sequence(ids, targets, &mut mode)?.0)
    }

    /// Log probability together with its gradient with respect to every
    /// parameter, by backpropagation through time.
    pub fn log_prob_and_grad(
        &self,
        ids: &[usize],
        targets: &[usize],
        mut mode: Mode,
    ) -> Result<(S, ModelParams<S>)> {
        let (total, encoded, enc_trace, mem, traces) = self.forward_sequence(ids, targets, &mut mode)?;
        let hidden = self.hyper.hidden;
        let layers = self.hyper.layers;
        let top = layers - 1;
        let zero = || vec![S::zero(); hidden];
        let mut g = self.zeros_like();

        let mut dh: Vec<Vec<S>> = (0..layers).map(|_| zero()).collect();
        let mut dm: Vec<Vec<S>> = (0..layers).map(|_| zero()).collect();
        let mut g_keys: Vec<Vec<S>> = (0..ids.len()).map(|_| zero()).collect();
        let mut g_states: Vec<Vec<S>> = (0..ids.len()).map(|_| zero()).collect();
        let mut gh_prev = zero();
        let mut gm_prev = zero();

        for t in (0..targets.len()).rev() {
            let tr = &traces[t];
            let prev = if t == 0 { END_ID } else { targets[t - 1] };

            // log-softmax gradient
            let mut g_logits: Vec<S> = tr.probs.iter().map(|&p| -p).collect();
            g_logits[targets[t]] += S::one();
            g.output_proj.outer_acc(&g_logits, &tr.concat);
            let mut g_concat = vec![S::zero(); 2 * hidden];
            self.output_proj.gemv_t_acc(&g_logits, &mut g_concat);
            if t + 1 < targets.len() {
                g.feedback.outer_acc(&dh[top], &tr.concat);
                self.feedback.gemv_t_acc(&dh[top], &mut g_concat);
            }
            let (g_d, g_ctx) = g_concat.split_at(hidden);

            // attention
            let g_a: Vec<S> = mem.states.iter().map(|h| dot(g_ctx, h)).collect();
            for (gs, &ai) in g_states.iter_mut().zip(&tr.a) {
                axpy(ai, g_ctx, gs);
            }
            let mean = dot(&tr.a, &g_a);
            let mut g_q = zero();
            for i in 0..mem.len() {
                let g_u = tr.a[i] * (g_a[i] - mean);
                axpy(g_u, &tr.z[i], &mut g.attention.v);
                for j in 0..hidden {
                    let z = tr.z[i][j];
                    let g_pre = g_u * self.attention.v[j] * (S::one() - z * z);
                    g_keys[i][j] += g_pre;
                    g_q[j] += g_pre;
                }
            }
            let d = &tr.layers[top].h;
            g.attention.w_dec.outer_acc(&g_q, d);
            let mut g_top = g_d.to_vec();
            self.attention.w_dec.gemv_t_acc(&g_q, &mut g_top);

            // decoder stack, top down
            let mut g_above = g_top;
            for l in (0..layers).rev() {
                let layer = &self.decoder[l];
                let gh: Vec<S> = if l == top {
                    g_above.clone()
                } else {
                    dh[l].iter().zip(&g_above).map(|(&a, &b)| a + b).collect()
                };
                let mut gx = vec![S::zero(); layer.input_size()];
                layer.backward(
                    &tr.layers[l],
                    &gh,
                    &dm[l],
                    &mut g.decoder[l],
                    &mut gx,
                    &mut gh_prev,
                    &mut gm_prev,
                );
                dh[l].copy_from_slice(&gh_prev);
                dm[l].copy_from_slice(&gm_prev);
                if l > 0 {
                    g_above = apply_mask(&gx, &tr.masks[l]);
                } else {
                    axpy(S::one(), &gx, g.symbol_embedding.row_mut(prev));
                }
            }
        }

        // keys were W'1 h_i
        for (i, h) in encoded.states.iter().enumerate() {
            g.attention.w_enc.outer_acc(&g_keys[i], h);
            self.attention.w_enc.gemv_t_acc(&g_keys[i], &mut g_states[i]);
        }

        // encoder, reverse time; dh/dm now hold gradients of the final states
        for t in (0..ids.len()).rev() {
            let mut g_above = g_states[t].clone();
            for l in (0..layers).rev() {
                let layer = &self.encoder[l];
                let gh: Vec<S> = dh[l].iter().zip(&g_above).map(|(&a, &b)| a + b).collect();
                let mut gx = vec![S::zero(); layer.input_size()];
                layer.backward(
                    &enc_trace.steps[t][l],
                    &gh,
                    &dm[l],
                    &mut g.encoder[l],
                    &mut gx,
                    &mut gh_prev,
                    &mut gm_prev,
                );
                dh[l].copy_from_slice(&gh_prev);
                dm[l].copy_from_slice(&gm_prev);
                if l > 0 {
                    g_above = apply_mask(&gx, &enc_trace.masks[t][l]);
                } else {
                    axpy(S::one(), &gx, g.embedding.row_mut(ids[t]));
                }
            }
        }
        for l in 0..layers {
            axpy(S::one(), &dh[l], &mut g.encoder[l].h0);
            axpy(S::one(), &dm[l], &mut g.encoder[l].m0);
        }
        Ok((total, g))
    }
}
