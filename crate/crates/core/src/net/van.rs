use alloc::vec::Vec;

use rand::Rng;

use super::layers::{Conv, ConvActTrace};
use super::VanConfig;
use crate::tensor::gradcheck::BranchSignature;
use crate::tensor::{ops, Grads, ParamStore, Tensor};
use crate::{Real, Result};

/// Stride-2 towers, channel concat, 1x1 fusion to `embed_dim`, global pool.
#[derive(Debug, Clone)]
pub(crate) struct Van {
    /// Tower over depth, then tower over albedo and mask; or a single tower.
    towers: Vec<Vec<Conv>>,
    fuse: Conv,
    early_fusion: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct VanTrace<T> {
    towers: Vec<Vec<ConvActTrace<T>>>,
    fuse_input: Tensor<T>,
    fused_shape: Vec<usize>,
}

impl Van {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, cfg: &VanConfig, rng: &mut R) -> Self {
        let inputs: &[(usize, &str)] = if cfg.early_fusion { &[(3, "van.rgbd")] } else { &[(1, "van.depth"), (2, "van.appearance")] };
        let towers = inputs
            .iter()
            .map(|&(cin, name)| {
                let mut widths = cfg.widths.clone();
                widths.push(cfg.embed_dim);
                let mut prev = cin;
                widths
                    .iter()
                    .enumerate()
                    .map(|(i, &w)| {
                        let conv = Conv::new(store, &alloc::format!("{name}.{i}"), prev, w, 3, 2, rng);
                        prev = w;
                        conv
                    })
                    .collect()
            })
            .collect::<Vec<Vec<Conv>>>();
        let fuse = Conv::new(store, "van.fuse", towers.len() * cfg.embed_dim, cfg.embed_dim, 1, 1, rng);
        Self { towers, fuse, early_fusion: cfg.early_fusion }
    }

    /// `pano` is `[3, H, W]` with depth first.
    pub fn forward<T: Real>(&self, store: &ParamStore<T>, pano: &Tensor<T>) -> Result<(Tensor<T>, VanTrace<T>)> {
        let inputs = if self.early_fusion {
            alloc::vec![pano.clone()]
        } else {
            let (d, rest) = ops::concat_channels_backward(pano, 1)?;
            alloc::vec![d, rest]
        };
        let mut traces = Vec::with_capacity(self.towers.len());
        let mut features: Option<Tensor<T>> = None;
        for (tower, x) in self.towers.iter().zip(inputs) {
            let mut h = x;
            let mut trace = Vec::with_capacity(tower.len());
            for conv in tower {
                let (t, out) = ConvActTrace::run(conv, store, h)?;
                trace.push(t);
                h = out;
            }
            traces.push(trace);
            features = Some(match features {
                None => h,
                Some(f) => ops::concat_channels(&f, &h)?,
            });
        }
        let fuse_input = features.expect("at least one tower");
        let fused = self.fuse.forward(store, &fuse_input)?;
        let e_c = ops::global_avg_pool(&fused)?;
        Ok((e_c, VanTrace { towers: traces, fuse_input, fused_shape: fused.shape().to_vec() }))
    }

    /// Gradient with respect to the `[3, H, W]` panorama tensor.
    pub fn backward<T: Real>(&self, store: &ParamStore<T>, trace: &VanTrace<T>, g_e_c: &Tensor<T>, grads: &mut Grads<T>) -> Result<Tensor<T>> {
        let g_fused = ops::global_avg_pool_backward(&trace.fused_shape, g_e_c)?;
        let mut g_features = self.fuse.backward(store, &trace.fuse_input, &g_fused, grads)?;
        let mut g_inputs = Vec::with_capacity(self.towers.len());
        for (tower, ttrace) in self.towers.iter().zip(&trace.towers).rev() {
            let own = ttrace.last().expect("non-empty tower").pre.shape()[0];
            let (rest, mut g) = if g_features.shape()[0] > own {
                let split = g_features.shape()[0] - own;
                ops::concat_channels_backward(&g_features, split).map(|(a, b)| (Some(a), b))?
            } else {
                (None, g_features.clone())
            };
            for (conv, t) in tower.iter().zip(ttrace).rev() {
                g = t.backward(conv, store, &g, grads)?;
            }
            g_inputs.push(g);
            if let Some(r) = rest {
                g_features = r;
            }
        }
        g_inputs.reverse();
        let mut it = g_inputs.into_iter();
        let first = it.next().expect("at least one tower");
        match it.next() {
            Some(second) => ops::concat_channels(&first, &second),
            None => Ok(first),
        }
    }
}

impl<T: Real> VanTrace<T> {
    pub fn sign(&self, sig: &mut BranchSignature) {
        self.towers.iter().flatten().for_each(|t| t.sign(sig));
    }
}
