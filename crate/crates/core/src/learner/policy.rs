//! The shared policy: masked categorical heads over one trunk.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::mlp::{Mlp, MlpCache, MlpSpec};
use super::TrainError;
use crate::borrower::{PAYMENT_ACTIONS, RELIEF_ACTIONS};
use crate::num::Scalar;

pub const HEAD_PAYMENT: usize = 0;
pub const HEAD_RELIEF: usize = 1;
const HEAD_VALUE: usize = 2;

/// Legality mask for one decision head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMask {
    Payment([bool; PAYMENT_ACTIONS]),
    Relief([bool; RELIEF_ACTIONS]),
}

impl ActionMask {
    pub fn head(&self) -> usize {
        match self {
            ActionMask::Payment(_) => HEAD_PAYMENT,
            ActionMask::Relief(_) => HEAD_RELIEF,
        }
    }

    pub fn legal(&self) -> &[bool] {
        match self {
            ActionMask::Payment(m) => m,
            ActionMask::Relief(m) => m,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOut<S> {
    /// Probabilities over the head's actions; illegal entries are exactly 0.
    pub probs: Vec<S>,
    pub value: S,
}

/// Softmax over legal entries only; illegal probabilities are exactly zero.
pub(crate) fn masked_softmax<S: Scalar>(logits: &[S], legal: &[bool]) -> Result<Vec<S>, TrainError> {
    let mut max = S::neg_infinity();
    for (i, &l) in logits.iter().enumerate() {
        if legal[i] && l > max {
            max = l;
        }
    }
    if max == S::neg_infinity() {
        return Err(TrainError::AllActionsMasked { head: usize::MAX });
    }
    let mut probs = vec![S::zero(); logits.len()];
    let mut total = S::zero();
    for i in 0..logits.len() {
        if legal[i] {
            let e = (logits[i] - max).exp();
            probs[i] = e;
            total += e;
        }
    }
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}

/// Samples an index from a probability vector.
pub fn sample_index<S: Scalar>(probs: &[S], rng: &mut ChaCha8Rng) -> usize {
    let u = S::from_f(rng.gen::<f64>());
    let mut acc = S::zero();
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > S::zero() {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// The shared product-conditioned policy with payment, relief, and value
/// heads.
#[derive(Debug, Clone)]
pub struct PolicyBundle<S: Scalar> {
    pub net: Mlp<S>,
}

impl<S: Scalar> PolicyBundle<S> {
    pub fn new(obs_dim: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let spec = MlpSpec {
            input: obs_dim,
            hidden: hidden.to_vec(),
            heads: vec![PAYMENT_ACTIONS, RELIEF_ACTIONS, 1],
        };
        PolicyBundle { net: Mlp::new(spec, rng) }
    }

    pub fn obs_dim(&self) -> usize {
        self.net.spec.input
    }

    /// Action distribution for the masked head plus the value estimate.
    pub fn forward(&self, obs: &[S], mask: &ActionMask) -> Result<ForwardOut<S>, TrainError> {
        let outs = self.net.forward(obs);
        let head = mask.head();
        let probs = masked_softmax(&outs[head], mask.legal()).map_err(|_| {
            TrainError::AllActionsMasked { head }
        })?;
        Ok(ForwardOut { probs, value: outs[HEAD_VALUE][0] })
    }

    pub fn value(&self, obs: &[S]) -> S {
        self.net.forward(obs)[HEAD_VALUE][0]
    }

    pub(crate) fn forward_cached(&self, obs: &[S]) -> MlpCache<S> {
        self.net.forward_cached(obs)
    }
}
