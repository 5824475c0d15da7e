//! A small feed-forward network with flat parameter storage.
//!
//! Tanh trunk, linear heads, Xavier-uniform initialisation with heads scaled
//! down so the initial action distributions are near uniform. Parameters
//! live in one flat vector so optimisers and finite-difference checks can
//! treat the network as a plain function of its parameter vector.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub heads: Vec<usize>,
}

impl MlpSpec {
    fn trunk_output(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input)
    }

    pub fn n_params(&self) -> usize {
        let mut count = 0;
        let mut prev = self.input;
        for &h in &self.hidden {
            count += h * prev + h;
            prev = h;
        }
        for &h in &self.heads {
            count += h * prev + h;
        }
        count
    }
}

/// Forward-pass intermediates kept for backprop.
#[derive(Debug, Clone)]
pub struct MlpCache<S> {
    /// Input plus post-tanh activations of each trunk layer.
    activations: Vec<Vec<S>>,
    pub head_outputs: Vec<Vec<S>>,
}

#[derive(Debug, Clone)]
pub struct Mlp<S: Scalar> {
    pub spec: MlpSpec,
    pub params: Vec<S>,
}

impl<S: Scalar> Mlp<S> {
    pub fn new(spec: MlpSpec, rng: &mut ChaCha8Rng) -> Self {
        let mut params = vec![S::zero(); spec.n_params()];
        let mut offset = 0;
        let mut prev = spec.input;
        for &h in &spec.hidden {
            let limit = (6.0 / (prev + h) as f64).sqrt();
            for p in &mut params[offset..offset + h * prev] {
                *p = S::from_f(rng.gen_range(-limit..limit));
            }
            offset += h * prev + h; // biases stay zero
            prev = h;
        }
        for &h in &spec.heads {
            let limit = 0.01 * (6.0 / (prev + h) as f64).sqrt();
            for p in &mut params[offset..offset + h * prev] {
                *p = S::from_f(rng.gen_range(-limit..limit));
            }
            offset += h * prev + h;
        }
        Mlp { spec, params }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn affine(params: &[S], offset: usize, input: &[S], out_dim: usize) -> Vec<S> {
        let in_dim = input.len();
        let mut out = Vec::with_capacity(out_dim);
        for o in 0..out_dim {
            let row = &params[offset + o * in_dim..offset + (o + 1) * in_dim];
            let mut acc = params[offset + out_dim * in_dim + o]; // bias
            for (w, x) in row.iter().zip(input) {
                acc += *w * *x;
            }
            out.push(acc);
        }
        out
    }

    /// Plain forward pass returning every head's output.
    pub fn forward(&self, input: &[S]) -> Vec<Vec<S>> {
        self.forward_cached(input).head_outputs
    }

    pub fn forward_cached(&self, input: &[S]) -> MlpCache<S> {
        debug_assert_eq!(input.len(), self.spec.input);
        let mut activations = Vec::with_capacity(self.spec.hidden.len() + 1);
        activations.push(input.to_vec());
        let mut offset = 0;
        let mut prev = self.spec.input;
        for &h in &self.spec.hidden {
            let mut z = Self::affine(&self.params, offset, activations.last().unwrap(), h);
            for v in &mut z {
                *v = v.tanh();
            }
            offset += h * prev + h;
            prev = h;
            activations.push(z);
        }
        let trunk = activations.last().unwrap().clone();
        let mut head_outputs = Vec::with_capacity(self.spec.heads.len());
        for &h in &self.spec.heads {
            head_outputs.push(Self::affine(&self.params, offset, &trunk, h));
            offset += h * prev + h;
        }
        MlpCache { activations, head_outputs }
    }

    /// Backpropagates `head_grads` (d loss / d head output, per head) and
    /// accumulates parameter gradients into `grad`.
    pub fn backward(&self, cache: &MlpCache<S>, head_grads: &[Vec<S>], grad: &mut [S]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let trunk_dim = self.spec.trunk_output();
        let trunk = cache.activations.last().unwrap();

        // offsets of each head block
        let mut trunk_params = 0;
        let mut prev = self.spec.input;
        for &h in &self.spec.hidden {
            trunk_params += h * prev + h;
            prev = h;
        }

        let mut d_trunk = vec![S::zero(); trunk_dim];
        let mut offset = trunk_params;
        for (head_idx, &h) in self.spec.heads.iter().enumerate() {
            let dy = &head_grads[head_idx];
            debug_assert_eq!(dy.len(), h);
            for o in 0..h {
                let g = dy[o];
                if g == S::zero() {
                    continue;
                }
                let row = offset + o * trunk_dim;
                for j in 0..trunk_dim {
                    grad[row + j] += g * trunk[j];
                    d_trunk[j] += self.params[row + j] * g;
                }
                grad[offset + h * trunk_dim + o] += g;
            }
            offset += h * trunk_dim + h;
        }

        // trunk layers, last to first
        let mut layer_offsets = Vec::with_capacity(self.spec.hidden.len());
        let mut off = 0;
        let mut prev = self.spec.input;
        for &h in &self.spec.hidden {
            layer_offsets.push((off, prev, h));
            off += h * prev + h;
            prev = h;
        }

        let mut da = d_trunk;
        for (l, &(loff, in_dim, out_dim)) in layer_offsets.iter().enumerate().rev() {
            let a_out = &cache.activations[l + 1];
            let a_in = &cache.activations[l];
            let mut dz = vec![S::zero(); out_dim];
            for o in 0..out_dim {
                dz[o] = da[o] * (S::one() - a_out[o] * a_out[o]);
            }
            let mut da_prev = vec![S::zero(); in_dim];
            for o in 0..out_dim {
                let g = dz[o];
                if g == S::zero() {
                    continue;
                }
                let row = loff + o * in_dim;
                for j in 0..in_dim {
                    grad[row + j] += g * a_in[j];
                    da_prev[j] += self.params[row + j] * g;
                }
                grad[loff + out_dim * in_dim + o] += g;
            }
            da = da_prev;
        }
    }
}
