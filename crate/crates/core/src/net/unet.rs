use alloc::vec::Vec;

use rand::Rng;

use super::layers::{Conv, ConvActTrace, Dense};
use super::UNetConfig;
use crate::tensor::gradcheck::BranchSignature;
use crate::tensor::{ops, Grads, ParamStore, Tensor};
use crate::{Error, Real, Result};

/// Stride-2 encoder, conditioning tiled onto the bottleneck, and a decoder of
/// nearest upsampling, skip concat and 3x3 convolutions. The last decoder
/// stage sees the network input and emits two linear channels.
#[derive(Debug, Clone)]
pub(crate) struct UNet {
    encoder: Vec<Conv>,
    /// Decoder stages from the bottleneck outwards.
    decoder: Vec<Conv>,
    head: Conv,
    project: Dense,
    cfg: UNetConfig,
}

#[derive(Debug, Clone)]
pub(crate) struct UNetTrace<T> {
    encoder: Vec<ConvActTrace<T>>,
    decoder: Vec<ConvActTrace<T>>,
    head_input: Tensor<T>,
    pooled: Tensor<T>,
    bottleneck_shape: Vec<usize>,
    /// Channels of the upsampled tensor at each decoder concat, then the head.
    up_channels: Vec<usize>,
}

impl UNet {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, cfg: &UNetConfig, embed_dim: usize, rng: &mut R) -> Self {
        let width = |i: usize| cfg.base_channels << i;
        let encoder = (0..cfg.depth)
            .map(|i| {
                let cin = if i == 0 { 2 } else { width(i - 1) };
                Conv::new(store, &alloc::format!("unet.enc{i}"), cin, width(i), 3, 2, rng)
            })
            .collect();
        let mut carried = width(cfg.depth - 1) + embed_dim;
        let decoder = (0..cfg.depth - 1)
            .rev()
            .map(|j| {
                let conv = Conv::new(store, &alloc::format!("unet.dec{j}"), carried + width(j), width(j), 3, 1, rng);
                carried = width(j);
                conv
            })
            .collect();
        let head = Conv::new(store, "unet.head", carried + 2, 2, 3, 1, rng);
        let project = Dense::new(store, "unet.project", width(cfg.depth - 1), embed_dim, rng);
        Self { encoder, decoder, head, project, cfg: cfg.clone() }
    }

    /// Returns the prediction and the projected bottleneck embedding.
    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &Tensor<T>, e_c: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>, UNetTrace<T>)> {
        let expected = [2, self.cfg.window, self.cfg.bins];
        if x.shape() != expected {
            return Err(Error::shape("unet", alloc::format!("input {:?}, expected {expected:?}", x.shape())));
        }
        let mut encoder = Vec::with_capacity(self.encoder.len());
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut h = x.clone();
        for conv in &self.encoder {
            let (t, out) = ConvActTrace::run(conv, store, h)?;
            encoder.push(t);
            skips.push(out.clone());
            h = out;
        }
        let bottleneck = skips.pop().expect("depth > 0");
        let pooled = ops::global_avg_pool(&bottleneck)?;
        let e_s = self.project.forward(store, &pooled)?;

        let (_, bh, bw) = bottleneck.chw("unet")?;
        let mut z = ops::concat_channels(&bottleneck, &ops::tile_spatial(e_c, bh, bw)?)?;
        let mut decoder = Vec::with_capacity(self.decoder.len());
        let mut up_channels = Vec::with_capacity(self.decoder.len() + 1);
        for conv in &self.decoder {
            let up = ops::upsample_nearest2(&z)?;
            up_channels.push(up.shape()[0]);
            let skip = skips.pop().expect("one skip per decoder stage");
            let (t, out) = ConvActTrace::run(conv, store, ops::concat_channels(&up, &skip)?)?;
            decoder.push(t);
            z = out;
        }
        let up = ops::upsample_nearest2(&z)?;
        up_channels.push(up.shape()[0]);
        let head_input = ops::concat_channels(&up, x)?;
        let y = self.head.forward(store, &head_input)?;
        let trace = UNetTrace { encoder, decoder, head_input, pooled, bottleneck_shape: bottleneck.shape().to_vec(), up_channels };
        Ok((y, e_s, trace))
    }

    /// Gradients with respect to the input segment and the conditioning vector.
    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        trace: &UNetTrace<T>,
        g_y: &Tensor<T>,
        g_e_s: &Tensor<T>,
        grads: &mut Grads<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let g_head = self.head.backward(store, &trace.head_input, g_y, grads)?;
        let last = trace.up_channels.len() - 1;
        let (g_up, mut g_x) = ops::concat_channels_backward(&g_head, trace.up_channels[last])?;
        let mut g_z = ops::upsample_nearest2_backward(&g_up)?;

        // Walk outwards-in, so skip gradients arrive outermost first.
        let mut g_skips = Vec::with_capacity(self.decoder.len());
        for (k, (conv, t)) in self.decoder.iter().zip(&trace.decoder).enumerate().rev() {
            let g_cat = t.backward(conv, store, &g_z, grads)?;
            let (g_up, g_skip) = ops::concat_channels_backward(&g_cat, trace.up_channels[k])?;
            g_skips.push(g_skip);
            g_z = ops::upsample_nearest2_backward(&g_up)?;
        }
        let (mut g_bottleneck, g_tile) = ops::concat_channels_backward(&g_z, self.cfg.base_channels << (self.cfg.depth - 1))?;
        let g_e_c = ops::tile_spatial_backward(&g_tile)?;

        let g_pooled = self.project.backward(store, &trace.pooled, g_e_s, grads)?;
        g_bottleneck.add_assign(&ops::global_avg_pool_backward(&trace.bottleneck_shape, &g_pooled)?);

        // g_skips is ordered outermost first; encoder stage i feeds skip i.
        let mut g = g_bottleneck;
        for (i, (conv, t)) in self.encoder.iter().zip(&trace.encoder).enumerate().rev() {
            if i + 1 < self.encoder.len() {
                g.add_assign(&g_skips[i]);
            }
            g = t.backward(conv, store, &g, grads)?;
        }
        g_x.add_assign(&g);
        Ok((g_x, g_e_c))
    }
}

impl<T: Real> UNetTrace<T> {
    #[cfg(test)]
    pub fn bottleneck_shape(&self) -> &[usize] {
        &self.bottleneck_shape
    }

    pub fn sign(&self, sig: &mut BranchSignature) {
        self.encoder.iter().chain(&self.decoder).for_each(|t| t.sign(sig));
    }
}
