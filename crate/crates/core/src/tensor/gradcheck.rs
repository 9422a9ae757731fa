//! Central-difference verification of analytic gradients in `f64`.
//!
//! A checked module reports, alongside its objective, a signature of every
//! non-smooth branch it took (leaky ReLU signs, hinge activity). Coordinates
//! whose `+h` or `-h` evaluation lands on a different branch straddle a kink,
//! where central differences are meaningless, and are resampled.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops;
use super::{Grads, Init, ParamId, ParamStore, Tensor};
use crate::{Real, Result};

pub const STEP: f64 = 1e-5;
pub const MAX_COORDINATES: usize = 200;

/// Running hash of branch decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchSignature(pub u64);

impl Default for BranchSignature {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl BranchSignature {
    pub fn push(&mut self, bit: bool) {
        self.0 = (self.0 ^ bit as u64).wrapping_mul(0x0100_0000_01b3);
    }

    pub fn signs<T: Real>(&mut self, xs: &[T]) {
        for &x in xs {
            self.push(x > T::zero());
        }
    }
}

pub trait CheckModule {
    fn params(&self) -> &ParamStore<f64>;
    fn params_mut(&mut self) -> &mut ParamStore<f64>;
    /// Scalar objective and its branch signature.
    fn objective(&self, inputs: &[Tensor<f64>]) -> Result<(f64, BranchSignature)>;
    /// Analytic gradient of the objective with respect to inputs and parameters.
    fn gradients(&self, inputs: &[Tensor<f64>]) -> Result<(Vec<Tensor<f64>>, Grads<f64>)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
}

#[derive(Clone, Copy)]
enum Coord {
    Input(usize, usize),
    Param(usize, usize),
}

/// Compare analytic and central-difference gradients on up to
/// [`MAX_COORDINATES`] random coordinates of uniformly random inputs.
pub fn grad_check<M: CheckModule>(module: &mut M, input_shapes: &[&[usize]], seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs: Vec<Tensor<f64>> = input_shapes
        .iter()
        .map(|s| {
            let n: usize = s.iter().product();
            Tensor::from_vec(s, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        })
        .collect::<Result<_>>()?;
    grad_check_inputs(module, &mut inputs, &mut rng)
}

/// As [`grad_check`] with caller-supplied inputs.
pub fn grad_check_inputs<M: CheckModule, R: Rng>(module: &mut M, inputs: &mut [Tensor<f64>], rng: &mut R) -> Result<GradCheckReport> {
    let (input_grads, param_grads) = module.gradients(inputs)?;
    let (_, base_sig) = module.objective(inputs)?;

    let mut coords = Vec::new();
    for (i, t) in inputs.iter().enumerate() {
        coords.extend((0..t.len()).map(|j| Coord::Input(i, j)));
    }
    for (p, t) in param_grads.tensors.iter().enumerate() {
        coords.extend((0..t.len()).map(|j| Coord::Param(p, j)));
    }
    let analytic = |c: Coord| match c {
        Coord::Input(i, j) => input_grads[i].data()[j],
        Coord::Param(p, j) => param_grads.tensors[p].data()[j],
    };
    let scale = coords.iter().map(|&c| analytic(c).abs()).fold(0.0, f64::max);
    let floor = (1e-5 * scale).max(1e-12);

    // Partial Fisher-Yates: visit coordinates in random order.
    let mut report = GradCheckReport { max_rel_error: 0.0, checked: 0, skipped_kinks: 0 };
    let mut next = 0;
    while report.checked < MAX_COORDINATES && next < coords.len() {
        let pick = rng.gen_range(next..coords.len());
        coords.swap(next, pick);
        let c = coords[next];
        next += 1;

        let plus = evaluate_shifted(module, inputs, c, STEP)?;
        let minus = evaluate_shifted(module, inputs, c, -STEP)?;
        if plus.1 != base_sig || minus.1 != base_sig {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus.0 - minus.0) / (2.0 * STEP);
        let a = analytic(c);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}

fn evaluate_shifted<M: CheckModule>(module: &mut M, inputs: &mut [Tensor<f64>], c: Coord, h: f64) -> Result<(f64, BranchSignature)> {
    let slot = |m: &mut M, inputs: &mut [Tensor<f64>], delta: f64| match c {
        Coord::Input(i, j) => inputs[i].data_mut()[j] += delta,
        Coord::Param(p, j) => m.params_mut().get_mut(ParamId(p)).value.data_mut()[j] += delta,
    };
    let original = match c {
        Coord::Input(i, j) => inputs[i].data()[j],
        Coord::Param(p, j) => module.params().get(ParamId(p)).value.data()[j],
    };
    slot(module, inputs, h);
    let out = module.objective(inputs);
    // Restore exactly rather than subtracting h.
    match c {
        Coord::Input(i, j) => inputs[i].data_mut()[j] = original,
        Coord::Param(p, j) => module.params_mut().get_mut(ParamId(p)).value.data_mut()[j] = original,
    }
    out
}

/// One layer under test: objective `sum(r * op(x))` for a fixed random `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    Conv2d { cin: usize, cout: usize, k: usize, stride: usize, pad: usize },
    ConvTranspose2d { cin: usize, cout: usize, k: usize, stride: usize, pad: usize, output_padding: usize },
    LeakyRelu,
    Linear { inputs: usize, outputs: usize },
    GlobalAvgPool,
    ConcatChannels { first: usize },
    UpsampleNearest2,
    TileSpatial { h: usize, w: usize },
}

pub struct LayerFixture {
    pub kind: LayerKind,
    store: ParamStore<f64>,
    weight: Option<ParamId>,
    bias: Option<ParamId>,
    projection: Tensor<f64>,
    /// Deliberately corrupt the backward map, for negative controls.
    pub corrupt_backward: bool,
}

impl LayerFixture {
    pub fn new(kind: LayerKind, input_shape: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
        let mut store = ParamStore::new();
        let (weight, bias) = match kind {
            LayerKind::Conv2d { cin, cout, k, .. } => (
                Some(store.add("weight", &[cout, cin, k, k], Init::KaimingUniform { fan_in: cin * k * k }, &mut rng)),
                Some(store.add("bias", &[cout], Init::KaimingUniform { fan_in: cin * k * k }, &mut rng)),
            ),
            LayerKind::ConvTranspose2d { cin, cout, k, .. } => (
                Some(store.add("weight", &[cin, cout, k, k], Init::KaimingUniform { fan_in: cin * k * k }, &mut rng)),
                Some(store.add("bias", &[cout], Init::KaimingUniform { fan_in: cin * k * k }, &mut rng)),
            ),
            LayerKind::Linear { inputs, outputs } => (
                Some(store.add("weight", &[outputs, inputs], Init::KaimingUniform { fan_in: inputs }, &mut rng)),
                Some(store.add("bias", &[outputs], Init::KaimingUniform { fan_in: inputs }, &mut rng)),
            ),
            _ => (None, None),
        };
        let mut fixture = Self { kind, store, weight, bias, projection: Tensor::zeros(&[0]), corrupt_backward: false };
        let probe: Vec<Tensor<f64>> = fixture.input_shapes(input_shape).iter().map(|s| Tensor::zeros(s)).collect();
        let out_shape = fixture.forward(&probe)?.shape().to_vec();
        let n: usize = out_shape.iter().product();
        fixture.projection = Tensor::from_vec(&out_shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        Ok(fixture)
    }

    pub fn name(&self) -> String {
        alloc::format!("{:?}", self.kind)
    }

    /// Shapes of every input the layer takes given the first.
    pub fn input_shapes(&self, first: &[usize]) -> Vec<Vec<usize>> {
        match self.kind {
            LayerKind::ConcatChannels { first: ca } => {
                let mut a = first.to_vec();
                let mut b = first.to_vec();
                a[0] = ca;
                b[0] = first[0] - ca;
                alloc::vec![a, b]
            }
            _ => alloc::vec![first.to_vec()],
        }
    }

    fn forward(&self, inputs: &[Tensor<f64>]) -> Result<Tensor<f64>> {
        let x = &inputs[0];
        let w = self.weight.map(|id| self.store.value(id));
        let b = self.bias.map(|id| self.store.value(id));
        match self.kind {
            LayerKind::Conv2d { stride, pad, .. } => ops::conv2d(x, w.unwrap(), b.unwrap(), stride, pad),
            LayerKind::ConvTranspose2d { stride, pad, output_padding, .. } => {
                ops::conv_transpose2d(x, w.unwrap(), b.unwrap(), stride, pad, output_padding)
            }
            LayerKind::LeakyRelu => Ok(ops::leaky_relu(x)),
            LayerKind::Linear { .. } => ops::linear(x, w.unwrap(), b.unwrap()),
            LayerKind::GlobalAvgPool => ops::global_avg_pool(x),
            LayerKind::ConcatChannels { .. } => ops::concat_channels(x, &inputs[1]),
            LayerKind::UpsampleNearest2 => ops::upsample_nearest2(x),
            LayerKind::TileSpatial { h, w } => ops::tile_spatial(x, h, w),
        }
    }
}

impl CheckModule for LayerFixture {
    fn params(&self) -> &ParamStore<f64> {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore<f64> {
        &mut self.store
    }

    fn objective(&self, inputs: &[Tensor<f64>]) -> Result<(f64, BranchSignature)> {
        let y = self.forward(inputs)?;
        let mut sig = BranchSignature::default();
        if self.kind == LayerKind::LeakyRelu {
            sig.signs(inputs[0].data());
        }
        Ok((y.data().iter().zip(self.projection.data()).map(|(a, b)| a * b).sum(), sig))
    }

    fn gradients(&self, inputs: &[Tensor<f64>]) -> Result<(Vec<Tensor<f64>>, Grads<f64>)> {
        let gy = &self.projection;
        let x = &inputs[0];
        let mut grads = self.store.zero_grads();
        let mut input_grads = match self.kind {
            LayerKind::Conv2d { stride, pad, .. } => {
                let g = ops::conv2d_backward(x, self.store.value(self.weight.unwrap()), stride, pad, gy)?;
                grads.add(self.weight.unwrap(), &g.weight);
                grads.add(self.bias.unwrap(), &g.bias);
                alloc::vec![g.input]
            }
            LayerKind::ConvTranspose2d { stride, pad, output_padding, .. } => {
                let g = ops::conv_transpose2d_backward(x, self.store.value(self.weight.unwrap()), stride, pad, output_padding, gy)?;
                grads.add(self.weight.unwrap(), &g.weight);
                grads.add(self.bias.unwrap(), &g.bias);
                alloc::vec![g.input]
            }
            LayerKind::LeakyRelu => alloc::vec![ops::leaky_relu_backward(x, gy)?],
            LayerKind::Linear { .. } => {
                let g = ops::linear_backward(x, self.store.value(self.weight.unwrap()), gy)?;
                grads.add(self.weight.unwrap(), &g.weight);
                grads.add(self.bias.unwrap(), &g.bias);
                alloc::vec![g.input]
            }
            LayerKind::GlobalAvgPool => alloc::vec![ops::global_avg_pool_backward(x.shape(), gy)?],
            LayerKind::ConcatChannels { first } => {
                let (a, b) = ops::concat_channels_backward(gy, first)?;
                alloc::vec![a, b]
            }
            LayerKind::UpsampleNearest2 => alloc::vec![ops::upsample_nearest2_backward(gy)?],
            LayerKind::TileSpatial { .. } => alloc::vec![ops::tile_spatial_backward(gy)?],
        };
        if self.corrupt_backward {
            for t in input_grads.iter_mut() {
                t.scale(1.1);
                if let Some(v) = t.data_mut().first_mut() {
                    *v += 1.0;
                }
            }
            grads.scale(0.9);
        }
        Ok((input_grads, grads))
    }
}

/// The layer library's standard check set: every op at small shapes.
pub fn standard_layer_checks() -> Vec<(LayerKind, Vec<usize>)> {
    alloc::vec![
        (LayerKind::Conv2d { cin: 3, cout: 4, k: 3, stride: 1, pad: 1 }, alloc::vec![3, 6, 5]),
        (LayerKind::Conv2d { cin: 2, cout: 3, k: 3, stride: 2, pad: 1 }, alloc::vec![2, 8, 7]),
        (LayerKind::Conv2d { cin: 4, cout: 2, k: 1, stride: 1, pad: 0 }, alloc::vec![4, 3, 3]),
        (LayerKind::ConvTranspose2d { cin: 3, cout: 2, k: 3, stride: 2, pad: 1, output_padding: 1 }, alloc::vec![3, 4, 3]),
        (LayerKind::LeakyRelu, alloc::vec![3, 5, 4]),
        (LayerKind::Linear { inputs: 7, outputs: 5 }, alloc::vec![7]),
        (LayerKind::GlobalAvgPool, alloc::vec![4, 3, 5]),
        (LayerKind::ConcatChannels { first: 2 }, alloc::vec![5, 3, 4]),
        (LayerKind::UpsampleNearest2, alloc::vec![2, 3, 4]),
        (LayerKind::TileSpatial { h: 3, w: 2 }, alloc::vec![5]),
    ]
}

/// Run [`grad_check`] over [`standard_layer_checks`].
pub fn check_layers(seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    standard_layer_checks()
        .into_iter()
        .enumerate()
        .map(|(i, (kind, shape))| {
            let mut fixture = LayerFixture::new(kind, &shape, seed + i as u64)?;
            let shapes = fixture.input_shapes(&shape);
            let refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
            let report = grad_check(&mut fixture, &refs, seed + i as u64)?;
            Ok((fixture.name(), report))
        })
        .collect()
}
