//! Dense layers, initialization, and the Adam optimizer.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, ParamId, ParamStore, Var};
use crate::tensor::{Scalar, Tensor};

/// `y = xW + b` as a graph operation over explicit weight/bias vars.
pub fn dense<T: Scalar>(g: &mut Graph<'_, T>, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let xw = g.matmul(x, weight)?;
    g.add_bias_row(xw, bias)
}

/// Glorot-uniform weight matrix `[fan_in, fan_out]`.
pub fn glorot_uniform<T: Scalar>(
    fan_in: usize,
    fan_out: usize,
    rng: &mut impl Rng,
) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data: Vec<T> = (0..fan_in * fan_out)
        .map(|_| T::from_f64(rng.random_range(-limit..limit)))
        .collect();
    Tensor::from_vec(fan_in, fan_out, data).expect("sized data")
}

/// A named dense layer; holds parameter handles, not values.
#[derive(Debug, Clone, Copy)]
pub struct DenseLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl DenseLayer {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.add(format!("{name}.w"), glorot_uniform(in_dim, out_dim, rng));
        let b = store.add(format!("{name}.b"), Tensor::zeros(1, out_dim));
        DenseLayer { w, b, in_dim, out_dim }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        dense(g, x, w, b)
    }
}

/// Adam with bias correction. Moment buffers parallel the parameter store.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        AdamState {
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            eps: T::from_f64(1e-8),
            step: 0,
            m: store.zero_grads(),
            v: store.zero_grads(),
        }
    }

    /// One bias-corrected update of every parameter.
    pub fn step(
        &mut self,
        store: &mut ParamStore<T>,
        grads: &[Tensor<T>],
        lr: f64,
    ) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                details: format!("{} grads for {} params", grads.len(), self.m.len()),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let corr1 = T::from_f64(1.0 - b1.to_f64().powi(t));
        let corr2 = T::from_f64(1.0 - b2.to_f64().powi(t));
        let lr_t = T::from_f64(lr);
        for (i, id) in store.ids().enumerate().collect::<Vec<_>>() {
            let p = store.get_mut(id);
            if grads[i].shape() != p.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    details: format!("grad {:?} vs param {:?}", grads[i].shape(), p.shape()),
                });
            }
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..p.len() {
                let gj = grads[i].data()[j];
                let mj = b1.mul(m.data()[j]).add(T::ONE.sub(b1).mul(gj));
                let vj = b2.mul(v.data()[j]).add(T::ONE.sub(b2).mul(gj.mul(gj)));
                m.data_mut()[j] = mj;
                v.data_mut()[j] = vj;
                let m_hat = mj.div(corr1);
                let v_hat = vj.div(corr2);
                let upd = lr_t.mul(m_hat).div(v_hat.sqrt().add(self.eps));
                p.data_mut()[j] = p.data()[j].sub(upd);
            }
        }
        Ok(())
    }
}

/// Scale gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm<T: Scalar>(grads: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let mut sq = 0.0f64;
    for g in grads.iter() {
        for v in g.data() {
            sq += v.to_f64() * v.to_f64();
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = T::from_f64(max_norm / norm);
        for g in grads.iter_mut() {
            g.scale_in_place(s);
        }
    }
    norm
}
