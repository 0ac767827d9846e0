use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::numerics::{Matrix, Scalar, Vector, INIT_RANGE};

/// Shape and regularization settings of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub layers: usize,
    pub hidden: usize,
    pub embed: usize,
    pub input_vocab: usize,
    pub output_vocab: usize,
    pub dropout_rate: f64,
    #[serde(default)]
    pub feedback: FeedbackRouting,
}

impl Hyper {
    pub fn new(layers: usize, hidden: usize, embed: usize, input_vocab: usize, output_vocab: usize) -> Self {
        Hyper {
            layers,
            hidden,
            embed,
            input_vocab,
            output_vocab,
            dropout_rate: 0.0,
            feedback: FeedbackRouting::default(),
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("embed", self.embed),
            ("input_vocab", self.input_vocab),
            ("output_vocab", self.output_vocab),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return dim_err("Hyper", format!("{name} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return dim_err("Hyper", format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }
}

/// How the concatenated `[d ; d']` vector reaches the next decoder step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackRouting {
    /// Projected back to hidden size by a learned matrix and used as the
    /// top decoder layer's recurrent input; lower layers are unaffected.
    #[default]
    TopLayerProjection,
}

/// Gate order used by [`LstmLayerParams`]: input, candidate, forget, output.
pub const GATE_NAMES: [&str; 4] = ["i", "candidate", "f", "o"];

/// One LSTM layer without biases.
///
/// `input[k]` and `recurrent[k]` hold the input-side and recurrent-side
/// weights of gate `k`, so `(input[0], recurrent[0])` is `(W1, W2)` of the
/// textbook equations, `(input[1], recurrent[1])` is `(W3, W4)` and so on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmLayerParams<S> {
    pub input: [Matrix<S>; 4],
    pub recurrent: [Matrix<S>; 4],
    pub h0: Vector<S>,
    pub m0: Vector<S>,
}

impl<S: Scalar> LstmLayerParams<S> {
    pub fn zeros(input_size: usize, hidden: usize) -> Self {
        LstmLayerParams {
            input: std::array::from_fn(|_| Matrix::zeros(hidden, input_size)),
            recurrent: std::array::from_fn(|_| Matrix::zeros(hidden, hidden)),
            h0: Vector::zeros(hidden),
            m0: Vector::zeros(hidden),
        }
    }

    pub fn init<R: Rng>(input_size: usize, hidden: usize, rng: &mut R) -> Self {
        LstmLayerParams {
            input: std::array::from_fn(|_| Matrix::uniform(hidden, input_size, INIT_RANGE, rng)),
            recurrent: std::array::from_fn(|_| Matrix::uniform(hidden, hidden, INIT_RANGE, rng)),
            h0: Vector::zeros(hidden),
            m0: Vector::zeros(hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.h0.len()
    }

    pub fn input_size(&self) -> usize {
        self.input[0].cols()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams<S> {
    pub v: Vector<S>,
    /// Applied to encoder states (`W'1`).
    pub w_enc: Matrix<S>,
    /// Applied to the decoder state (`W'2`).
    pub w_dec: Matrix<S>,
}

/// Every learnable array of the encoder/decoder model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<S> {
    pub hyper: Hyper,
    /// Input word embeddings, one row per input vocabulary entry.
    pub embedding: Matrix<S>,
    /// Decoder input embeddings, one row per output symbol.
    pub symbol_embedding: Matrix<S>,
    pub encoder: Vec<LstmLayerParams<S>>,
    pub decoder: Vec<LstmLayerParams<S>>,
    pub attention: AttentionParams<S>,
    /// `hidden × 2·hidden`, maps `[d ; d']` to the next top-layer input.
    pub feedback: Matrix<S>,
    /// `output_vocab × 2·hidden`.
    pub output_proj: Matrix<S>,
}

impl<S: Scalar> ModelParams<S> {
    pub fn zeros(hyper: &Hyper) -> Self {
        let h = hyper.hidden;
        let stack = |first: usize| {
            (0..hyper.layers)
                .map(|l| LstmLayerParams::zeros(if l == 0 { first } else { h }, h))
                .collect()
        };
        ModelParams {
            hyper: hyper.clone(),
            embedding: Matrix::zeros(hyper.input_vocab, hyper.embed),
            symbol_embedding: Matrix::zeros(hyper.output_vocab, hyper.embed),
            encoder: stack(hyper.embed),
            decoder: stack(hyper.embed),
            attention: AttentionParams {
                v: Vector::zeros(h),
                w_enc: Matrix::zeros(h, h),
                w_dec: Matrix::zeros(h, h),
            },
            feedback: Matrix::zeros(h, 2 * h),
            output_proj: Matrix::zeros(hyper.output_vocab, 2 * h),
        }
    }

    /// All weights uniform in `[-0.08, 0.08]`; initial states zero.
    pub fn init<R: Rng>(hyper: &Hyper, rng: &mut R) -> Result<Self> {
        hyper.validate()?;
        let h = hyper.hidden;
        let r = INIT_RANGE;
        let embedding = Matrix::uniform(hyper.input_vocab, hyper.embed, r, rng);
        let symbol_embedding = Matrix::uniform(hyper.output_vocab, hyper.embed, r, rng);
        let mut stack = |first: usize| -> Vec<LstmLayerParams<S>> {
            (0..hyper.layers)
                .map(|l| LstmLayerParams::init(if l == 0 { first } else { h }, h, rng))
                .collect()
        };
        let encoder = stack(hyper.embed);
        let decoder = stack(hyper.embed);
        let attention = AttentionParams {
            v: Vector::uniform(h, r, rng),
            w_enc: Matrix::uniform(h, h, r, rng),
            w_dec: Matrix::uniform(h, h, r, rng),
        };
        Ok(ModelParams {
            hyper: hyper.clone(),
            embedding,
            symbol_embedding,
            encoder,
            decoder,
            attention,
            feedback: Matrix::uniform(h, 2 * h, r, rng),
            output_proj: Matrix::uniform(hyper.output_vocab, 2 * h, r, rng),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.hyper)
    }

    /// Visits every array in a fixed order with its name and shape.
    pub fn for_each_array<'a>(&'a self, mut f: impl FnMut(&str, (usize, usize), &'a [S])) {
        f("embedding", self.embedding.shape(), self.embedding.as_slice());
        f(
            "symbol_embedding",
            self.symbol_embedding.shape(),
            self.symbol_embedding.as_slice(),
        );
        for (side, layers) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (l, layer) in layers.iter().enumerate() {
                for (k, gate) in GATE_NAMES.iter().enumerate() {
                    let m = &layer.input[k];
                    f(&format!("{side}.{l}.input.{gate}"), m.shape(), m.as_slice());
                    let m = &layer.recurrent[k];
                    f(&format!("{side}.{l}.recurrent.{gate}"), m.shape(), m.as_slice());
                }
                f(&format!("{side}.{l}.h0"), (layer.h0.len(), 1), &layer.h0);
                f(&format!("{side}.{l}.m0"), (layer.m0.len(), 1), &layer.m0);
            }
        }
        let a = &self.attention;
        f("attention.v", (a.v.len(), 1), &a.v);
        f("attention.w_enc", a.w_enc.shape(), a.w_enc.as_slice());
        f("attention.w_dec", a.w_dec.shape(), a.w_dec.as_slice());
        f("feedback", self.feedback.shape(), self.feedback.as_slice());
        f("output_proj", self.output_proj.shape(), self.output_proj.as_slice());
    }

    /// Mutable counterpart of [`for_each_array`](Self::for_each_array), same order.
    pub fn for_each_array_mut(&mut self, mut f: impl FnMut(&str, &mut [S])) {
        f("embedding", self.embedding.as_mut_slice());
        f("symbol_embedding", self.symbol_embedding.as_mut_slice());
        for (side, layers) in [("encoder", &mut self.encoder), ("decoder", &mut self.decoder)] {
            for (l, layer) in layers.iter_mut().enumerate() {
                for (k, gate) in GATE_NAMES.iter().enumerate() {
                    f(&format!("{side}.{l}.input.{gate}"), layer.input[k].as_mut_slice());
                    f(
                        &format!("{side}.{l}.recurrent.{gate}"),
                        layer.recurrent[k].as_mut_slice(),
                    );
                }
                f(&format!("{side}.{l}.h0"), &mut layer.h0);
                f(&format!("{side}.{l}.m0"), &mut layer.m0);
            }
        }
        let a = &mut self.attention;
        f("attention.v", &mut a.v);
        f("attention.w_enc", a.w_enc.as_mut_slice());
        f("attention.w_dec", a.w_dec.as_mut_slice());
        f("feedback", self.feedback.as_mut_slice());
        f("output_proj", self.output_proj.as_mut_slice());
    }

    /// Names and shapes in visiting order.
    pub fn layout(&self) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        self.for_each_array(|name, shape, _| out.push((name.to_string(), shape)));
        out
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.for_each_array(|_, _, a| n += a.len());
        n
    }

    pub fn to_flat(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.num_params());
        self.for_each_array(|_, _, a| out.extend_from_slice(a));
        out
    }

    pub fn set_flat(&mut self, flat: &[S]) -> Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return dim_err("set_flat", format!("{} values for {n} parameters", flat.len()));
        }
        let mut offset = 0;
        self.for_each_array_mut(|_, a| {
            a.copy_from_slice(&flat[offset..offset + a.len()]);
            offset += a.len();
        });
        Ok(())
    }

    /// Converts every array to another scalar type.
    pub fn cast<T: Scalar>(&self) -> ModelParams<T> {
        let mut out = ModelParams::<T>::zeros(&self.hyper);
        let flat: Vec<T> = self.to_flat().into_iter().map(|x| T::of(x.as_f64())).collect();
        out.set_flat(&flat).expect("identical layout");
        out
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layout() == other.layout()
    }

    /// `self += alpha · other`.
    pub fn add_scaled(&mut self, alpha: S, other: &Self) -> Result<()> {
        if !self.same_shape(other) {
            return dim_err("add_scaled", "parameter layouts differ");
        }
        let flat = other.to_flat();
        let mut offset = 0;
        self.for_each_array_mut(|_, a| {
            for (x, &g) in a.iter_mut().zip(&flat[offset..]) {
                *x += alpha * g;
            }
            offset += a.len();
        });
        Ok(())
    }

    pub fn scale(&mut self, alpha: S) {
        self.for_each_array_mut(|_, a| a.iter_mut().for_each(|x| *x *= alpha));
    }

    /// Sum of squares over every parameter, accumulated in f64.
    pub fn squared_norm(&self) -> f64 {
        let mut acc = 0.0;
        self.for_each_array(|_, _, a| {
            for &x in a {
                let x = x.as_f64();
                acc += x * x;
            }
        });
        acc
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_array(|_, _, a| ok &= a.iter().all(|x| x.is_finite()));
        ok
    }

    /// Structural check of every array against `hyper`.
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.layout() != Self::zeros(&self.hyper).layout() {
            return dim_err("ModelParams", "array shapes disagree with hyperparameters");
        }
        Ok(())
    }
}
