//! Constituency parsing as sequence-to-sequence translation.
//!
//! Trees are linearized depth-first into bracket symbols, a deep LSTM
//! encoder/decoder with attention learns to emit them from the reversed
//! sentence, and beam search plus bracket repair turns the output back into
//! a tree that is scored with labeled bracket F1.

pub mod corpusgen;
pub mod decode;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod train;
pub mod treetext;
pub mod vocab;

pub use error::{Error, Result};
pub use model::{Checkpoint, Hyper, ModelParams};
pub use numerics::{Matrix, Scalar, Vector};
pub use treetext::{LinearSymbol, ParseTree};
pub use vocab::{Vocab, VocabKind};

pub type Model32 = ModelParams<f32>;
pub type Model64 = ModelParams<f64>;
pub type Matrix32 = Matrix<f32>;
pub type Matrix64 = Matrix<f64>;
pub type Vector32 = Vector<f32>;
pub type Vector64 = Vector<f64>;
