//! Adam with bias correction.
//!
//! ```text
//! m ← β1 m + (1 − β1) g
//! v ← β2 v + (1 − β2) g²
//! θ ← θ − lr · (m / (1 − β1ᵗ)) / (sqrt(v / (1 − β2ᵗ)) + ε)
//! ```

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numkit::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    /// Rescale the whole gradient to at most this global ℓ2 norm. Off by default.
    pub grad_clip: Option<T>,
}

impl<T: Scalar> Default for AdamConfig<T> {
    fn default() -> Self {
        Self {
            learning_rate: T::of(2e-3),
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            grad_clip: None,
        }
    }
}

impl<T: Scalar> AdamConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > T::zero()
            && self.beta1 >= T::zero()
            && self.beta1 < T::one()
            && self.beta2 >= T::zero()
            && self.beta2 < T::one()
            && self.eps > T::zero()
            && self.grad_clip.is_none_or(|c| c > T::zero());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig<T>,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    /// Zeroed moments for tensors of the given lengths.
    pub fn new(config: AdamConfig<T>, shapes: &[usize]) -> Self {
        Self {
            config,
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            t: 0,
        }
    }

    pub fn for_params(config: AdamConfig<T>, params: &ModelParams<T>) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Self::new(config, &shapes)
    }

    /// One update of every tensor in place.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::dim("optimizer tensors", self.m.len(), params.len().max(grads.len())));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::dim("optimizer tensor", m.len(), if p.len() != m.len() { p.len() } else { g.len() }));
            }
        }
        let c = self.config;
        let scale = match c.grad_clip {
            Some(limit) => {
                let norm = grads
                    .iter()
                    .flat_map(|g| g.iter())
                    .fold(T::zero(), |acc, &x| acc + x * x)
                    .sqrt();
                if norm > limit { limit / norm } else { T::one() }
            }
            None => T::one(),
        };
        self.t += 1;
        let t = self.t as i32;
        let bc1 = T::one() - c.beta1.powi(t);
        let bc2 = T::one() - c.beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                let gi = g[i] * scale;
                m[i] = c.beta1 * m[i] + (T::one() - c.beta1) * gi;
                v[i] = c.beta2 * v[i] + (T::one() - c.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] = p[i] - c.learning_rate * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

/// Applies one Adam update to `params` using gradients of the same layout.
pub fn adam_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    state: &mut AdamState<T>,
) -> Result<()> {
    let g = grads.tensors();
    let mut p = params.tensors_mut();
    state.step(&mut p, &g)
}
