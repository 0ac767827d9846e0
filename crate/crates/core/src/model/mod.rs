//! Deep LSTM encoder/decoder with attention.
//!
//! Encoder and decoder have separate parameters. The encoder reads the
//! reversed sentence; the decoder starts from the encoder's final per-layer
//! states with END as its first input, attends over the top encoder layer
//! at every step and predicts from `[d ; d']`.

mod checkpoint;
mod lstm;
mod params;
mod seq;

pub use checkpoint::{read_header, ArrayHeader, Checkpoint, Header, Variants, FORMAT_VERSION, MAGIC};
pub use lstm::LstmState;
pub use params::{AttentionParams, FeedbackRouting, Hyper, LstmLayerParams, ModelParams, GATE_NAMES};
pub use seq::{AttentionMemory, Encoded, Mode, StepOutput, END_ID};

use crate::error::Result;
use crate::numerics::grad_check;

/// Maximum relative error of analytic against central-difference gradients
/// of `log P(targets | ids)`, per parameter array.
pub fn check_gradients(
    params: &ModelParams<f64>,
    ids: &[usize],
    targets: &[usize],
    eps: f64,
) -> Result<Vec<(String, f64)>> {
    let (_, grads) = params.log_prob_and_grad(ids, targets, Mode::Inference)?;
    let theta = params.to_flat();
    let analytic = grads.to_flat();
    let mut probe = params.clone();
    let mut report = Vec::new();
    let mut offset = 0;
    for (name, (rows, cols)) in params.layout() {
        let n = rows * cols;
        let range = offset..offset + n;
        let mut full = theta.clone();
        let err = grad_check(
            |local| {
                full[range.clone()].copy_from_slice(local);
                probe.set_flat(&full).expect("same layout");
                probe
                    .sequence_log_prob(ids, targets, Mode::Inference)
                    .unwrap_or(f64::NAN)
            },
            &theta[range.clone()],
            &analytic[range.clone()],
            eps,
        )?;
        report.push((name, err));
        offset += n;
    }
    Ok(report)
}
