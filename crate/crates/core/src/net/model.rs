use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{batch_objective, ExampleGrads, LossWeights};
use super::unet::{UNet, UNetTrace};
use super::van::{Van, VanTrace};
use super::ModelConfig;
use crate::signal::LogMagPhase;
use crate::tensor::gradcheck::{BranchSignature, CheckModule};
use crate::tensor::{Grads, ParamStore, Tensor};
use crate::view::Panorama;
use crate::{Error, Real, Result};

/// Depth is divided by this before entering the visual tower.
const DEPTH_SCALE: f64 = 4.0;

/// `[2, frames, bins]`: log magnitude then phase.
pub fn segment_tensor<T: Real>(seg: &LogMagPhase) -> Tensor<T> {
    let data = seg.mag.iter().chain(&seg.phase).map(|&v| T::of(v)).collect();
    Tensor::from_vec(&[2, seg.frames, seg.bins], data).expect("planes match their dimensions")
}

pub fn tensor_segment<T: Real>(t: &Tensor<T>) -> Result<LogMagPhase> {
    let (c, frames, bins) = t.chw("tensor_segment")?;
    if c != 2 {
        return Err(Error::shape("tensor_segment", alloc::format!("{c} channels, expected 2")));
    }
    let (m, p) = t.data().split_at(frames * bins);
    LogMagPhase::new(frames, bins, m.iter().map(|v| v.f64()).collect(), p.iter().map(|v| v.f64()).collect())
}

/// `[3, height, width]`: scaled depth, albedo, speaker mask.
pub fn panorama_tensor<T: Real>(p: &Panorama) -> Tensor<T> {
    let data = p
        .depth
        .iter()
        .map(|&d| T::of(d / DEPTH_SCALE))
        .chain(p.albedo.iter().chain(&p.speaker_mask).map(|&v| T::of(v)))
        .collect();
    Tensor::from_vec(&[3, p.height, p.width], data).expect("planes match their dimensions")
}

#[derive(Debug, Clone)]
pub struct VidaModel<T> {
    config: ModelConfig,
    store: ParamStore<T>,
    van: Option<Van>,
    unet: UNet,
}

/// Everything one example's forward pass leaves for its backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub output: Tensor<T>,
    pub e_s: Tensor<T>,
    pub e_c: Tensor<T>,
    unet: UNetTrace<T>,
    van: Option<VanTrace<T>>,
}

impl<T: Real> ForwardPass<T> {
    /// Signs of every leaky-ReLU input, in a fixed order.
    pub fn signature(&self, sig: &mut BranchSignature) {
        if let Some(v) = &self.van {
            v.sign(sig);
        }
        self.unet.sign(sig);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputGrads<T> {
    pub segment: Tensor<T>,
    pub panorama: Option<Tensor<T>>,
}

impl<T: Real> VidaModel<T> {
    /// Fresh weights drawn from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let van = (!config.audio_only).then(|| Van::new(&mut store, &config.van, &mut rng));
        let unet = UNet::new(&mut store, &config.unet, config.embed_dim(), &mut rng);
        Ok(Self { config, store, van, unet })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn cast<U: Real>(&self) -> VidaModel<U> {
        VidaModel { config: self.config.clone(), store: self.store.cast(), van: self.van.clone(), unet: self.unet.clone() }
    }

    pub fn is_audio_only(&self) -> bool {
        self.van.is_none()
    }

    fn check_panorama(&self, pano: &Tensor<T>) -> Result<()> {
        let v = &self.config.van;
        if pano.shape() != [3, v.height, v.width] {
            return Err(Error::ResolutionMismatch {
                expected: alloc::format!("3x{}x{}", v.height, v.width),
                got: alloc::format!("{:?}", pano.shape()),
            });
        }
        Ok(())
    }

    fn embed(&self, pano: Option<&Tensor<T>>) -> Result<(Tensor<T>, Option<VanTrace<T>>)> {
        match (&self.van, pano) {
            (None, _) => Ok((Tensor::zeros(&[self.config.embed_dim()]), None)),
            (Some(van), Some(p)) => {
                self.check_panorama(p)?;
                let (e_c, trace) = van.forward(&self.store, p)?;
                Ok((e_c, Some(trace)))
            }
            (Some(_), None) => Err(Error::InvalidConfig("visual model needs a panorama".into())),
        }
    }

    /// The conditioning vector; zeros for audio-only models.
    pub fn embed_scene(&self, pano: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        self.embed(pano).map(|(e, _)| e)
    }

    pub fn forward(&self, segment: &Tensor<T>, pano: Option<&Tensor<T>>) -> Result<ForwardPass<T>> {
        let (e_c, van) = self.embed(pano)?;
        let (output, e_s, unet) = self.unet.forward(&self.store, segment, &e_c)?;
        Ok(ForwardPass { output, e_s, e_c, unet, van })
    }

    /// Prediction and bottleneck embedding for a precomputed conditioning vector.
    pub fn predict(&self, segment: &Tensor<T>, e_c: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let (y, e_s, _) = self.unet.forward(&self.store, segment, e_c)?;
        Ok((y, e_s))
    }

    /// Accumulate parameter gradients into `grads` and return input gradients.
    pub fn backward(&self, pass: &ForwardPass<T>, g: &ExampleGrads<T>, grads: &mut Grads<T>) -> Result<InputGrads<T>> {
        let (segment, mut g_e_c) = self.unet.backward(&self.store, &pass.unet, &g.output, &g.e_s, grads)?;
        g_e_c.add_assign(&g.e_c);
        let panorama = match (&self.van, &pass.van) {
            (Some(van), Some(trace)) => Some(van.backward(&self.store, trace, &g_e_c, grads)?),
            _ => None,
        };
        Ok(InputGrads { segment, panorama })
    }
}

/// The full batch objective of a model as a [`CheckModule`]. Inputs are
/// `[segment_0, panorama_0, segment_1, panorama_1, ...]`, without panoramas
/// for audio-only models; example `i` uses example `i + 1` as its negative.
pub struct ModelCheck {
    pub model: VidaModel<f64>,
    pub targets: Vec<Tensor<f64>>,
    pub weights: LossWeights,
}

impl ModelCheck {
    fn per_example(&self) -> usize {
        if self.model.is_audio_only() {
            1
        } else {
            2
        }
    }

    /// Input shapes for a batch the size of `targets`.
    pub fn input_shapes(&self) -> Vec<Vec<usize>> {
        let c = &self.model.config;
        let seg = alloc::vec![2, c.unet.window, c.unet.bins];
        let pano = alloc::vec![3, c.van.height, c.van.width];
        (0..self.targets.len())
            .flat_map(|_| if self.model.is_audio_only() { alloc::vec![seg.clone()] } else { alloc::vec![seg.clone(), pano.clone()] })
            .collect()
    }

    fn negatives(&self) -> Vec<Option<usize>> {
        let b = self.targets.len();
        (0..b).map(|i| (b > 1).then_some((i + 1) % b)).collect()
    }

    fn passes(&self, inputs: &[Tensor<f64>]) -> Result<Vec<ForwardPass<f64>>> {
        inputs
            .chunks(self.per_example())
            .map(|chunk| self.model.forward(&chunk[0], chunk.get(1)))
            .collect()
    }
}

impl CheckModule for ModelCheck {
    fn params(&self) -> &ParamStore<f64> {
        &self.model.store
    }

    fn params_mut(&mut self) -> &mut ParamStore<f64> {
        &mut self.model.store
    }

    fn objective(&self, inputs: &[Tensor<f64>]) -> Result<(f64, BranchSignature)> {
        let passes = self.passes(inputs)?;
        let loss = batch_objective(&passes, &self.targets, &self.negatives(), &self.weights)?;
        let mut sig = BranchSignature::default();
        passes.iter().for_each(|p| p.signature(&mut sig));
        loss.hinge_active.iter().for_each(|&a| sig.push(a));
        Ok((loss.total, sig))
    }

    fn gradients(&self, inputs: &[Tensor<f64>]) -> Result<(Vec<Tensor<f64>>, Grads<f64>)> {
        let passes = self.passes(inputs)?;
        let loss = batch_objective(&passes, &self.targets, &self.negatives(), &self.weights)?;
        let mut grads = self.model.store.zero_grads();
        let mut input_grads = Vec::with_capacity(inputs.len());
        for (pass, g) in passes.iter().zip(&loss.grads) {
            let ig = self.model.backward(pass, g, &mut grads)?;
            input_grads.push(ig.segment);
            if let Some(p) = ig.panorama {
                input_grads.push(p);
            }
        }
        Ok((input_grads, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{grad_check, GradCheckReport};
    use rand::Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn check(config: ModelConfig, weights: LossWeights) -> GradCheckReport {
        let model = VidaModel::<f64>::new(config).unwrap();
        let shape = [2, model.config.unet.window, model.config.unet.bins];
        let targets = alloc::vec![random(&shape, 11), random(&shape, 12)];
        let mut mc = ModelCheck { model, targets, weights };
        let shapes = mc.input_shapes();
        let refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
        grad_check(&mut mc, &refs, 5).unwrap()
    }

    fn small() -> ModelConfig {
        let mut cfg = ModelConfig::toy();
        cfg.unet.window = 32;
        cfg.unet.bins = 32;
        cfg.unet.depth = 3;
        cfg.unet.base_channels = 4;
        cfg
    }

    #[test]
    fn desk_shapes() {
        let model = VidaModel::<f32>::new(ModelConfig::desk()).unwrap();
        let seg = Tensor::zeros(&[2, 64, 64]);
        let pano = Tensor::zeros(&[3, 64, 252]);
        let pass = model.forward(&seg, Some(&pano)).unwrap();
        assert_eq!(pass.output.shape(), [2, 64, 64]);
        assert_eq!(pass.e_s.shape(), [64]);
        assert_eq!(pass.e_c.shape(), [64]);
        assert_eq!(pass.unet.bottleneck_shape(), [512, 2, 2]);
    }

    #[test]
    fn panorama_resolution_is_checked() {
        let model = VidaModel::<f32>::new(ModelConfig::toy()).unwrap();
        let seg = Tensor::zeros(&[2, 64, 64]);
        let err = model.forward(&seg, Some(&Tensor::zeros(&[3, 8, 8]))).unwrap_err();
        assert!(matches!(err, Error::ResolutionMismatch { .. }));
        assert!(matches!(model.forward(&seg, None), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn audio_only_conditioning_is_zero() {
        let mut cfg = ModelConfig::toy();
        cfg.audio_only = true;
        let model = VidaModel::<f64>::new(cfg).unwrap();
        let e = model.embed_scene(Some(&Tensor::zeros(&[3, 1, 1]))).unwrap();
        assert!(e.data().iter().all(|&v| v == 0.0));
        assert!(model.params().iter().all(|p| !p.name.starts_with("van")));
    }

    #[test]
    fn same_seed_same_weights() {
        let a = VidaModel::<f32>::new(ModelConfig::toy()).unwrap();
        let b = VidaModel::<f32>::new(ModelConfig::toy()).unwrap();
        assert_eq!(a.params(), b.params());
        let mut cfg = ModelConfig::toy();
        cfg.seed = 1;
        assert_ne!(a.params(), VidaModel::<f32>::new(cfg).unwrap().params());
    }

    #[test]
    fn small_model_gradients() {
        let r = check(small(), LossWeights { lambda_match: 0.5, ..LossWeights::default() });
        assert!(r.checked >= 150, "{r:?}");
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn early_fusion_and_audio_only_gradients() {
        let mut ef = small();
        ef.van.early_fusion = true;
        let r = check(ef, LossWeights { lambda_match: 0.5, ..LossWeights::default() });
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        let mut ao = small();
        ao.audio_only = true;
        let r = check(ao, LossWeights { lambda_match: 0.0, ..LossWeights::default() });
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn toy_model_gradients() {
        let r = check(ModelConfig::toy(), LossWeights::default());
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn gradient_of_sum_is_sum_of_gradients() {
        let model = VidaModel::<f64>::new(small()).unwrap();
        let seg = random(&[2, 32, 32], 1);
        let pano = random(&[3, 16, 64], 2);
        let pass = model.forward(&seg, Some(&pano)).unwrap();
        let ga = ExampleGrads { output: random(&[2, 32, 32], 3), e_s: random(&[16], 4), e_c: random(&[16], 5) };
        let gb = ExampleGrads { output: random(&[2, 32, 32], 6), e_s: random(&[16], 7), e_c: random(&[16], 8) };
        let mut sum = ga.clone();
        sum.output.add_assign(&gb.output);
        sum.e_s.add_assign(&gb.e_s);
        sum.e_c.add_assign(&gb.e_c);
        let (mut a, mut b, mut s) = (model.params().zero_grads(), model.params().zero_grads(), model.params().zero_grads());
        model.backward(&pass, &ga, &mut a).unwrap();
        model.backward(&pass, &gb, &mut b).unwrap();
        model.backward(&pass, &sum, &mut s).unwrap();
        a.add_all(&b);
        for (x, y) in a.tensors.iter().zip(&s.tensors) {
            for (u, v) in x.data().iter().zip(y.data()) {
                assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()), "{u} vs {v}");
            }
        }
    }
}
