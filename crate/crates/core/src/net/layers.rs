use rand::Rng;

use crate::tensor::gradcheck::BranchSignature;
use crate::tensor::{ops, Grads, Init, ParamId, ParamStore, Tensor};
use crate::{Real, Result};

/// Square convolution with "same"-style padding `k / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Conv {
    w: ParamId,
    b: ParamId,
    stride: usize,
    pad: usize,
}

impl Conv {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, name: &str, cin: usize, cout: usize, k: usize, stride: usize, rng: &mut R) -> Self {
        let fan_in = cin * k * k;
        let w = store.add(alloc::format!("{name}.weight"), &[cout, cin, k, k], Init::KaimingUniform { fan_in }, rng);
        let b = store.add(alloc::format!("{name}.bias"), &[cout], Init::Zeros, rng);
        Self { w, b, stride, pad: k / 2 }
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::conv2d(x, store.value(self.w), store.value(self.b), self.stride, self.pad)
    }

    pub fn backward<T: Real>(&self, store: &ParamStore<T>, x: &Tensor<T>, gy: &Tensor<T>, grads: &mut Grads<T>) -> Result<Tensor<T>> {
        let g = ops::conv2d_backward(x, store.value(self.w), self.stride, self.pad, gy)?;
        grads.add(self.w, &g.weight);
        grads.add(self.b, &g.bias);
        Ok(g.input)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Dense {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let w = store.add(alloc::format!("{name}.weight"), &[outputs, inputs], Init::KaimingUniform { fan_in: inputs }, rng);
        let b = store.add(alloc::format!("{name}.bias"), &[outputs], Init::Zeros, rng);
        Self { w, b }
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::linear(x, store.value(self.w), store.value(self.b))
    }

    pub fn backward<T: Real>(&self, store: &ParamStore<T>, x: &Tensor<T>, gy: &Tensor<T>, grads: &mut Grads<T>) -> Result<Tensor<T>> {
        let g = ops::linear_backward(x, store.value(self.w), gy)?;
        grads.add(self.w, &g.weight);
        grads.add(self.b, &g.bias);
        Ok(g.input)
    }
}

/// Saved tensors of a convolution followed by a leaky ReLU.
#[derive(Debug, Clone)]
pub(crate) struct ConvActTrace<T> {
    pub input: Tensor<T>,
    pub pre: Tensor<T>,
}

impl<T: Real> ConvActTrace<T> {
    pub fn run(conv: &Conv, store: &ParamStore<T>, input: Tensor<T>) -> Result<(Self, Tensor<T>)> {
        let pre = conv.forward(store, &input)?;
        let out = ops::leaky_relu(&pre);
        Ok((Self { input, pre }, out))
    }

    pub fn backward(&self, conv: &Conv, store: &ParamStore<T>, g_out: &Tensor<T>, grads: &mut Grads<T>) -> Result<Tensor<T>> {
        let g_pre = ops::leaky_relu_backward(&self.pre, g_out)?;
        conv.backward(store, &self.input, &g_pre, grads)
    }

    pub fn sign(&self, sig: &mut BranchSignature) {
        sig.signs(self.pre.data());
    }
}
