use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::model::params::LstmLayerParams;
use crate::numerics::{sigm, Scalar, Vector};

/// Control state `h` and memory state `m` of one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmState<S> {
    pub h: Vector<S>,
    pub m: Vector<S>,
}

impl<S: Scalar> LstmState<S> {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: Vector::zeros(hidden),
            m: Vector::zeros(hidden),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.h.is_finite() && self.m.is_finite()
    }
}

/// Activations of one cell step, kept for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct StepCache<S> {
    pub x: Vec<S>,
    pub h_prev: Vec<S>,
    pub m_prev: Vec<S>,
    pub i: Vec<S>,
    pub g: Vec<S>,
    pub f: Vec<S>,
    pub o: Vec<S>,
    pub m: Vec<S>,
    pub h: Vec<S>,
}

impl<S: Scalar> LstmLayerParams<S> {
    /// One cell step:
    ///
    /// ```text
    /// i  = sigm(W1 x + W2 h)      i' = tanh(W3 x + W4 h)
    /// f  = sigm(W5 x + W6 h)      o  = sigm(W7 x + W8 h)
    /// m' = m ⊙ f + i ⊙ i'         h' = m' ⊙ o
    /// ```
    pub fn step(&self, x: &[S], prev: &LstmState<S>) -> Result<LstmState<S>> {
        let hidden = self.hidden();
        if x.len() != self.input_size() || prev.h.len() != hidden || prev.m.len() != hidden {
            return dim_err(
                "lstm_step",
                format!(
                    "layer expects input {} and hidden {hidden}, got input {}, h {}, m {}",
                    self.input_size(),
                    x.len(),
                    prev.h.len(),
                    prev.m.len()
                ),
            );
        }
        let c = self.forward(x.to_vec(), &prev.h, &prev.m);
        Ok(LstmState {
            h: Vector::from_vec(c.h),
            m: Vector::from_vec(c.m),
        })
    }

    pub(crate) fn forward(&self, x: Vec<S>, h_prev: &[S], m_prev: &[S]) -> StepCache<S> {
        let n = self.hidden();
        let mut pre: [Vec<S>; 4] = std::array::from_fn(|_| vec![S::zero(); n]);
        for (k, p) in pre.iter_mut().enumerate() {
            self.input[k].gemv_acc(&x, p);
            self.recurrent[k].gemv_acc(h_prev, p);
        }
        let [mut i, mut g, mut f, mut o] = pre;
        i.iter_mut().for_each(|z| *z = sigm(*z));
        g.iter_mut().for_each(|z| *z = z.tanh());
        f.iter_mut().for_each(|z| *z = sigm(*z));
        o.iter_mut().for_each(|z| *z = sigm(*z));
        let m: Vec<S> = (0..n).map(|j| m_prev[j] * f[j] + i[j] * g[j]).collect();
        let h: Vec<S> = (0..n).map(|j| m[j] * o[j]).collect();
        StepCache {
            x,
            h_prev: h_prev.to_vec(),
            m_prev: m_prev.to_vec(),
            i,
            g,
            f,
            o,
            m,
            h,
        }
    }

    /// Backpropagates one step. `gh`/`gm` are the gradients arriving at the
    /// step's outputs; on return `gx`, `gh_prev` and `gm_prev` hold the
    /// gradients for the step's inputs (overwritten, not accumulated).
    pub(crate) fn backward(
        &self,
        c: &StepCache<S>,
        gh: &[S],
        gm: &[S],
        grads: &mut LstmLayerParams<S>,
        gx: &mut [S],
        gh_prev: &mut [S],
        gm_prev: &mut [S],
    ) {
        let n = self.hidden();
        let one = S::one();
        let mut dz: [Vec<S>; 4] = std::array::from_fn(|_| vec![S::zero(); n]);
        for j in 0..n {
            let gm_total = gm[j] + gh[j] * c.o[j];
            let go = gh[j] * c.m[j];
            dz[0][j] = gm_total * c.g[j] * c.i[j] * (one - c.i[j]);
            dz[1][j] = gm_total * c.i[j] * (one - c.g[j] * c.g[j]);
            dz[2][j] = gm_total * c.m_prev[j] * c.f[j] * (one - c.f[j]);
            dz[3][j] = go * c.o[j] * (one - c.o[j]);
            gm_prev[j] = gm_total * c.f[j];
        }
        gx.iter_mut().for_each(|v| *v = S::zero());
        gh_prev.iter_mut().for_each(|v| *v = S::zero());
        for k in 0..4 {
            grads.input[k].outer_acc(&dz[k], &c.x);
            grads.recurrent[k].outer_acc(&dz[k], &c.h_prev);
            self.input[k].gemv_t_acc(&dz[k], gx);
            self.recurrent[k].gemv_t_acc(&dz[k], gh_prev);
        }
    }
}
