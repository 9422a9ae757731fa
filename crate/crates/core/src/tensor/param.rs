use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use super::Tensor;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// A trainable tensor with its gradient and Adam state.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub first_moment: Tensor<T>,
    pub second_moment: Tensor<T>,
    pub step: u64,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let zeros = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            grad: zeros.clone(),
            first_moment: zeros.clone(),
            second_moment: zeros,
            value,
            step: 0,
        }
    }

    fn cast<U: Real>(&self) -> Param<U> {
        Param {
            name: self.name.clone(),
            value: self.value.cast(),
            grad: self.grad.cast(),
            first_moment: self.first_moment.cast(),
            second_moment: self.second_moment.cast(),
            step: self.step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    /// Kaiming-uniform for a leaky ReLU of the library slope.
    KaimingUniform { fan_in: usize },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add<R: Rng>(&mut self, name: impl Into<String>, shape: &[usize], init: Init, rng: &mut R) -> ParamId {
        let value = match init {
            Init::Zeros => Tensor::zeros(shape),
            Init::KaimingUniform { fan_in } => {
                let slope = super::ops::LEAKY_SLOPE;
                let gain = (2.0 / (1.0 + slope * slope)).sqrt();
                let bound = gain * (3.0 / fan_in as f64).sqrt();
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| T::of(rng.gen_range(-bound..bound))).collect();
                Tensor::from_vec(shape, data).expect("shape product")
            }
        };
        self.params.push(Param::new(name, value));
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads<T> {
        Grads { tensors: self.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect() }
    }

    /// Add `grads` into each parameter's gradient slot.
    pub fn accumulate(&mut self, grads: &Grads<T>) {
        for (p, g) in self.params.iter_mut().zip(&grads.tensors) {
            p.grad.add_assign(g);
        }
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore { params: self.params.iter().map(Param::cast).collect() }
    }

    /// Replace every parameter, checking that names and shapes line up.
    pub fn load(&mut self, params: Vec<Param<T>>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::shape("load", alloc::format!("{} parameters, model has {}", params.len(), self.params.len())));
        }
        for (mine, theirs) in self.params.iter().zip(&params) {
            if mine.name != theirs.name || mine.value.shape() != theirs.value.shape() {
                return Err(Error::shape(
                    "load",
                    alloc::format!("{} {:?} vs {} {:?}", mine.name, mine.value.shape(), theirs.name, theirs.value.shape()),
                ));
            }
        }
        self.params = params;
        Ok(())
    }
}

/// Gradient buffers laid out like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Real> Grads<T> {
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn add(&mut self, id: ParamId, g: &Tensor<T>) {
        self.tensors[id.0].add_assign(g);
    }

    pub fn add_all(&mut self, other: &Grads<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, k: T) {
        self.tensors.iter_mut().for_each(|t| t.scale(k));
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update of every parameter; gradients are zeroed
/// afterwards. Nothing is modified if any gradient is non-finite.
pub fn adam_step<T: Real>(store: &mut ParamStore<T>, lr: f64, cfg: &AdamConfig) -> Result<()> {
    if let Some(p) = store.params.iter().find(|p| !p.grad.all_finite()) {
        return Err(Error::NonFiniteGradient(p.name.clone()));
    }
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let (one, eps) = (T::one(), T::of(cfg.eps));
    for p in store.params.iter_mut() {
        p.step += 1;
        let c1 = one - T::of(cfg.beta1.powi(p.step as i32));
        let c2 = one - T::of(cfg.beta2.powi(p.step as i32));
        let step = T::of(lr);
        let it = p
            .value
            .data
            .iter_mut()
            .zip(p.grad.data.iter_mut())
            .zip(p.first_moment.data.iter_mut().zip(p.second_moment.data.iter_mut()));
        for ((w, g), (m, v)) in it {
            *m = b1 * *m + (one - b1) * *g;
            *v = b2 * *v + (one - b2) * *g * *g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= step * m_hat / (v_hat.sqrt() + eps);
            *g = T::zero();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_store(w0: f64) -> (ParamStore<f64>, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", &[1], Init::Zeros, &mut ChaCha8Rng::seed_from_u64(0));
        s.get_mut(id).value.data_mut()[0] = w0;
        (s, id)
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let (mut s, id) = scalar_store(0.7);
        for _ in 0..3 {
            adam_step(&mut s, 1e-3, &AdamConfig::default()).unwrap();
        }
        assert_eq!(s.value(id).data()[0], 0.7);
    }

    #[test]
    fn quadratic_matches_hand_recurrence() {
        // f(w) = w^2, gradient 2w.
        let (mut s, id) = scalar_store(1.0);
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 0.1);
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=5 {
            let g = 2.0 * w;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            w -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);

            let cur = s.value(id).data()[0];
            s.get_mut(id).grad.data_mut()[0] = 2.0 * cur;
            adam_step(&mut s, lr, &AdamConfig::default()).unwrap();
            assert!((s.value(id).data()[0] - w).abs() < 1e-12, "step {t}");
            assert_eq!(s.get(id).grad.data()[0], 0.0);
        }
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let (mut s, id) = scalar_store(0.0);
        let lr = 0.01;
        let mut last = 0.0;
        for _ in 0..2000 {
            s.get_mut(id).grad.data_mut()[0] = -3.0;
            adam_step(&mut s, lr, &AdamConfig::default()).unwrap();
            let w = s.value(id).data()[0];
            let step = w - last;
            last = w;
            assert!(step > 0.0);
        }
        let mut probe = s.clone();
        probe.get_mut(id).grad.data_mut()[0] = -3.0;
        adam_step(&mut probe, lr, &AdamConfig::default()).unwrap();
        let step = probe.value(id).data()[0] - s.value(id).data()[0];
        assert!((step - lr).abs() < 1e-8 * lr.max(1.0) + 1e-9, "{step}");
    }

    #[test]
    fn nan_gradient_is_reported_by_name() {
        let (mut s, id) = scalar_store(1.0);
        s.get_mut(id).grad.data_mut()[0] = f64::NAN;
        assert_eq!(adam_step(&mut s, 0.1, &AdamConfig::default()), Err(Error::NonFiniteGradient("w".into())));
        assert_eq!(s.value(id).data()[0], 1.0);
    }
}
