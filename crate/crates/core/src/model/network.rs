use rayon::prelude::*;

use super::blocks::{AsymmetricConvBlock, BiMambaLayer, ConvBlock};
use super::config::{SeldModelConfig, ENCODER_BLOCKS};
use crate::error::{Result, SeldError};
use crate::nn::{seeded_rng, Forward, Linear, Mode, ParamStore};
use crate::tensor::{Tape, Tensor, Var};

/// Layer structure of the network; tensors live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Network {
    pub cfg: SeldModelConfig,
    pub encoder: Vec<ConvBlock>,
    pub asym: Vec<AsymmetricConvBlock>,
    pub decoder: Vec<BiMambaLayer>,
    pub doa_head: Linear,
    pub dist_head: Linear,
}

impl Network {
    pub fn new(cfg: &SeldModelConfig, store: &mut ParamStore, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded_rng(seed);
        let mut encoder = Vec::with_capacity(ENCODER_BLOCKS);
        let mut c_in = cfg.in_channels;
        for (i, &c_out) in cfg.encoder_channels.iter().enumerate() {
            let pool = (cfg.time_pools[i], cfg.freq_pools[i]);
            encoder.push(ConvBlock::new(store, &format!("encoder.{i}"), c_in, c_out, pool, &mut rng));
            c_in = c_out;
        }
        let mut asym = Vec::new();
        let mut decoder = Vec::with_capacity(cfg.decoder_layers);
        for i in 0..cfg.decoder_layers {
            if cfg.use_asymmetric_conv {
                asym.push(AsymmetricConvBlock::new(
                    store,
                    &format!("decoder.{i}.asym"),
                    cfg.enc_channels(),
                    cfg.asym_kernel,
                    &mut rng,
                ));
            }
            decoder.push(BiMambaLayer::new(store, &format!("decoder.{i}.bimamba"), cfg.mamba(), &mut rng)?);
        }
        let (d, slots) = (cfg.d_model(), cfg.tracks * cfg.classes);
        let doa_head = Linear::new(store, "head.doa", d, 2 * slots, true, &mut rng);
        let dist_head = Linear::new(store, "head.distance", d, slots, true, &mut rng);
        Ok(Self {
            cfg: cfg.clone(),
            encoder,
            asym,
            decoder,
            doa_head,
            dist_head,
        })
    }

    /// `[B, in_channels, T, n_mels] -> [B, C, T / ds, F']`
    pub fn encode(&self, fw: &mut Forward<'_, '_>, x: Var) -> Result<Var> {
        let s = fw.tape().shape(x).to_vec();
        if s.len() != 4 || s[1] != self.cfg.in_channels || s[3] != self.cfg.n_mels {
            return Err(SeldError::Shape {
                op: "encoder",
                detail: format!("expected [B, {}, T, {}], got {s:?}", self.cfg.in_channels, self.cfg.n_mels),
            });
        }
        self.cfg.out_frames(s[2])?;
        let mut h = x;
        for block in &self.encoder {
            h = block.forward(fw, h)?;
        }
        Ok(h)
    }

    fn map_to_seq(fw: &mut Forward<'_, '_>, map: Var) -> Result<Var> {
        let s = fw.tape().shape(map).to_vec();
        let p = fw.tape().permute(map, &[0, 2, 1, 3])?;
        fw.tape().reshape(p, &[s[0], s[2], s[1] * s[3]])
    }

    fn seq_to_map(fw: &mut Forward<'_, '_>, seq: Var, channels: usize) -> Result<Var> {
        let s = fw.tape().shape(seq).to_vec();
        let r = fw.tape().reshape(seq, &[s[0], s[1], channels, s[2] / channels])?;
        fw.tape().permute(r, &[0, 2, 1, 3])
    }

    /// Encoder map `[B, C, L, F']` to decoded sequence `[B, L, d_model]`.
    pub fn decode(&self, fw: &mut Forward<'_, '_>, map: Var) -> Result<Var> {
        let channels = self.cfg.enc_channels();
        let mut seq = Self::map_to_seq(fw, map)?;
        for (i, layer) in self.decoder.iter().enumerate() {
            if let Some(asym) = self.asym.get(i) {
                let m = Self::seq_to_map(fw, seq, channels)?;
                let m = asym.forward(fw, m)?;
                seq = Self::map_to_seq(fw, m)?;
            }
            seq = layer.forward(fw, seq)?;
        }
        Ok(seq)
    }

    /// `[B, L, d_model] -> [B, L, tracks, classes, 3]`
    pub fn heads(&self, fw: &mut Forward<'_, '_>, seq: Var) -> Result<Var> {
        let s = fw.tape().shape(seq).to_vec();
        let (nt, nc) = (self.cfg.tracks, self.cfg.classes);
        let doa = self.doa_head.forward(fw, seq)?;
        let doa = fw.tape().tanh(doa);
        let doa = fw.tape().reshape(doa, &[s[0], s[1], nt, nc, 2])?;
        let dist = self.dist_head.forward(fw, seq)?;
        let dist = fw.tape().relu(dist);
        let dist = fw.tape().reshape(dist, &[s[0], s[1], nt, nc, 1])?;
        fw.tape().concat(&[doa, dist], 4)
    }

    pub fn forward(&self, fw: &mut Forward<'_, '_>, x: Var) -> Result<Var> {
        let map = self.encode(fw, x)?;
        let seq = self.decode(fw, map)?;
        self.heads(fw, seq)
    }
}

/// Network structure together with its tensors.
#[derive(Clone, Debug)]
pub struct SeldModel {
    pub net: Network,
    pub params: ParamStore,
}

impl SeldModel {
    pub fn new(cfg: &SeldModelConfig, seed: u64) -> Result<Self> {
        let mut params = ParamStore::new();
        let net = Network::new(cfg, &mut params, seed)?;
        Ok(Self { net, params })
    }

    pub fn cfg(&self) -> &SeldModelConfig {
        &self.net.cfg
    }

    pub fn num_params(&self) -> usize {
        self.params.num_trainable()
    }

    /// Eval-mode forward of `[B, in_channels, T, n_mels]` features to
    /// `[B, T / ds, tracks, classes, 3]`. Batch items run in parallel.
    pub fn infer(&self, features: &Tensor) -> Result<Tensor> {
        let s = features.shape();
        if s.len() != 4 {
            return Err(SeldError::Shape {
                op: "infer",
                detail: format!("expected [B, C, T, F], got {s:?}"),
            });
        }
        let item = s[1] * s[2] * s[3];
        let outputs: Vec<Tensor> = (0..s[0])
            .into_par_iter()
            .map(|b| {
                let x = Tensor::new([1, s[1], s[2], s[3]], features.data()[b * item..(b + 1) * item].to_vec())?;
                let mut tape = Tape::new();
                let mut fw = Forward::new(&mut tape, &self.params, Mode::Eval, false);
                let xv = fw.tape().constant(x);
                let y = self.net.forward(&mut fw, xv)?;
                Ok(tape.value(y).clone())
            })
            .collect::<Result<_>>()?;
        let mut shape = outputs[0].shape().to_vec();
        shape[0] = s[0];
        Tensor::new(shape, outputs.into_iter().flat_map(Tensor::into_data).collect())
    }
}

/// Trainable parameter count from the configuration alone.
pub fn count_params(cfg: &SeldModelConfig) -> usize {
    let mut total = 0;
    let mut c_in = cfg.in_channels;
    for &c in &cfg.encoder_channels {
        total += ConvBlock::num_params(c_in, c);
        c_in = c;
    }
    let per_layer = BiMambaLayer::num_params(&cfg.mamba())
        + if cfg.use_asymmetric_conv {
            AsymmetricConvBlock::num_params(cfg.enc_channels(), cfg.asym_kernel)
        } else {
            0
        };
    total += cfg.decoder_layers * per_layer;
    let slots = cfg.tracks * cfg.classes;
    total + Linear::num_params(cfg.d_model(), 2 * slots, true) + Linear::num_params(cfg.d_model(), slots, true)
}

/// Multiply-accumulates of the decoder and heads for `len` output frames.
pub fn decoder_macs(cfg: &SeldModelConfig, len: usize) -> u64 {
    let (c, f, k) = (cfg.enc_channels() as u64, cfg.out_freq() as u64, cfg.asym_kernel as u64);
    let asym = if cfg.use_asymmetric_conv {
        2 * c * c * k * len as u64 * f
    } else {
        0
    };
    let layer = asym + BiMambaLayer::macs(&cfg.mamba(), len);
    let heads = (cfg.d_model() * 3 * cfg.tracks * cfg.classes * len) as u64;
    cfg.decoder_layers as u64 * layer + heads
}

/// Multiply-accumulates of one forward pass on a `frames`-frame input.
/// Convolutions, linear maps and scan updates are counted; normalization,
/// activations and pooling are not.
pub fn estimate_macs(cfg: &SeldModelConfig, frames: usize) -> Result<u64> {
    let out = cfg.out_frames(frames)?;
    let (mut t, mut f, mut c_in) = (frames as u64, cfg.n_mels as u64, cfg.in_channels as u64);
    let mut total = 0;
    for (i, &c) in cfg.encoder_channels.iter().enumerate() {
        let c = c as u64;
        total += 9 * (c_in * c + c * c) * t * f;
        t /= cfg.time_pools[i] as u64;
        f /= cfg.freq_pools[i] as u64;
        c_in = c;
    }
    Ok(total + decoder_macs(cfg, out))
}
