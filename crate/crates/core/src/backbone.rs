//! Small U-shaped fully convolutional network.
//!
//! Encoder level `k` runs `block_depth` 3×3 conv + ReLU layers at resolution
//! `H / 2^k` (levels after the first start with a 2×2 max pool). The decoder
//! walks back up with 2×2 stride-2 transposed convolutions, concatenating the
//! matching encoder output before its own conv block, and a 1×1 head produces
//! class logits at full resolution.
//!
//! One encoder level may host a [`FeatureAttention`] module. Its output
//! replaces that level's feature map for everything downstream (the skip
//! connection and the next level).

use rand::Rng;
use scribble_autodiff::Tensor;

use crate::attention::RawAttentionStack;
use crate::error::{config_err, shape_err, Result};
use crate::params::{glorot_uniform, he_normal, ParamSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FcnConfig {
    pub in_channels: usize,
    /// Foreground classes plus background.
    pub num_classes: usize,
    /// Channel width of each encoder level, shallowest first.
    pub encoder_channels: Vec<usize>,
    /// Encoder level that hosts the attention module when one is attached.
    pub attention_level: usize,
    /// 3×3 convolutions per encoder/decoder block.
    pub block_depth: usize,
}

impl Default for FcnConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            num_classes: 4,
            encoder_channels: vec![16, 32, 64],
            attention_level: 2,
            block_depth: 2,
        }
    }
}

impl FcnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.encoder_channels.is_empty() {
            return Err(config_err("at least one encoder level is required"));
        }
        if self.attention_level >= self.encoder_channels.len() {
            return Err(config_err(format!(
                "attention level {} but only {} encoder levels",
                self.attention_level,
                self.encoder_channels.len()
            )));
        }
        if self.num_classes < 2 {
            return Err(config_err("num_classes must be at least 2"));
        }
        if self.in_channels == 0 || self.block_depth == 0 || self.encoder_channels.contains(&0) {
            return Err(config_err("channel counts and block depth must be positive"));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.encoder_channels.len()
    }

    /// Spatial extent divisor: inputs must be multiples of this.
    pub fn downsampling(&self) -> usize {
        1 << (self.levels() - 1)
    }

    /// Channel width at the attention level.
    pub fn attention_dim(&self) -> usize {
        self.encoder_channels[self.attention_level]
    }

    /// Grid of the attention level for an `h`×`w` input.
    pub fn attention_grid(&self, h: usize, w: usize) -> (usize, usize) {
        let f = 1 << self.attention_level;
        (h / f, w / f)
    }
}

/// Per-pixel class probabilities and the logits they came from, both
/// `(num_classes, H, W)`.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub logits: Tensor,
    pub probs: Tensor,
}

impl Prediction {
    pub fn from_logits(logits: Tensor) -> Result<Self> {
        if logits.rank() != 3 {
            return Err(shape_err(format!(
                "logits must be (C, H, W), got {:?}",
                logits.shape()
            )));
        }
        let probs = logits.softmax(0)?;
        Ok(Self { logits, probs })
    }

    /// Wraps given probabilities; `logits` becomes `ln(probs)`.
    pub fn from_probs(probs: Tensor) -> Result<Self> {
        if probs.rank() != 3 {
            return Err(shape_err(format!(
                "probabilities must be (C, H, W), got {:?}",
                probs.shape()
            )));
        }
        Ok(Self {
            logits: probs.log(),
            probs,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.probs.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.probs.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.probs.shape()[2]
    }

    /// Per-pixel argmax; the lowest class index wins ties.
    pub fn argmax(&self) -> Vec<u8> {
        let (c, hw) = (self.num_classes(), self.height() * self.width());
        let p = self.probs.data();
        (0..hw)
            .map(|i| {
                let mut best = 0;
                for k in 1..c {
                    if p[k * hw + i] > p[best * hw + i] {
                        best = k;
                    }
                }
                best as u8
            })
            .collect()
    }
}

/// Result of an attachment's forward pass.
#[derive(Debug, Clone)]
pub struct Attended {
    /// `(hw, d)` features that replace the host map.
    pub features: Tensor,
    pub raw: Option<RawAttentionStack>,
}

/// A module that can be grafted onto an encoder level. It sees the flattened
/// `(hw, d)` feature map and returns a map of the same shape.
pub trait FeatureAttention {
    fn feature_dim(&self) -> usize;
    fn attend(&self, features: &Tensor, params: &ParamSet) -> Result<Attended>;
}

#[derive(Debug, Clone)]
pub struct FcnOutput {
    pub prediction: Prediction,
    /// Present when the attached module exposes attention scores.
    pub raw_attention: Option<RawAttentionStack>,
    /// Spatial grid of the attention level.
    pub attention_grid: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct Fcn {
    config: FcnConfig,
}

impl Fcn {
    pub fn new(config: FcnConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &FcnConfig {
        &self.config
    }

    pub fn init_params(&self, rng: &mut impl Rng) -> Result<ParamSet> {
        let c = &self.config;
        let mut ps = ParamSet::new();
        fn conv(ps: &mut ParamSet, rng: &mut impl Rng, name: String, cin: usize, cout: usize, k: usize) -> Result<()> {
            let fan_in = cin * k * k;
            ps.insert(format!("{name}.w"), &[cout, cin, k, k], he_normal(rng, cout * fan_in, fan_in))?;
            ps.insert(format!("{name}.b"), &[cout], vec![0.0; cout])
        }
        let mut cin = c.in_channels;
        for (lvl, &ch) in c.encoder_channels.iter().enumerate() {
            for j in 0..c.block_depth {
                conv(&mut ps, rng, format!("enc{lvl}.conv{j}"), if j == 0 { cin } else { ch }, ch, 3)?;
            }
            cin = ch;
        }
        for lvl in (0..c.levels() - 1).rev() {
            let (deep, ch) = (c.encoder_channels[lvl + 1], c.encoder_channels[lvl]);
            let fan_in = deep * 4;
            ps.insert(format!("dec{lvl}.up.w"), &[deep, ch, 2, 2], he_normal(rng, deep * ch * 4, fan_in))?;
            ps.insert(format!("dec{lvl}.up.b"), &[ch], vec![0.0; ch])?;
            for j in 0..c.block_depth {
                conv(&mut ps, rng, format!("dec{lvl}.conv{j}"), if j == 0 { 2 * ch } else { ch }, ch, 3)?;
            }
        }
        let ch0 = c.encoder_channels[0];
        ps.insert("head.w", &[c.num_classes, ch0, 1, 1], glorot_uniform(rng, c.num_classes * ch0, ch0, c.num_classes))?;
        ps.insert("head.b", &[c.num_classes], vec![0.0; c.num_classes])?;
        Ok(ps)
    }

    fn conv_relu(x: &Tensor, params: &ParamSet, name: &str) -> Result<Tensor> {
        let w = params.get(&format!("{name}.w"))?;
        let b = params.get(&format!("{name}.b"))?;
        Ok(x.conv2d(w, Some(b), 1, 1)?.relu())
    }

    /// Forward pass of a `(in_channels, H, W)` image.
    pub fn forward(
        &self,
        image: &Tensor,
        params: &ParamSet,
        attention: Option<&dyn FeatureAttention>,
    ) -> Result<FcnOutput> {
        let c = &self.config;
        let (h, w) = match *image.shape() {
            [ch, h, w] if ch == c.in_channels => (h, w),
            _ => {
                return Err(shape_err(format!(
                    "image must be ({}, H, W), got {:?}",
                    c.in_channels,
                    image.shape()
                )))
            }
        };
        let div = c.downsampling();
        if h == 0 || w == 0 || h % div != 0 || w % div != 0 {
            return Err(config_err(format!(
                "input {h}x{w} is not divisible by {div} ({} levels)",
                c.levels()
            )));
        }
        if let Some(att) = attention {
            if att.feature_dim() != c.attention_dim() {
                return Err(config_err(format!(
                    "attention expects {} channels, level {} has {}",
                    att.feature_dim(),
                    c.attention_level,
                    c.attention_dim()
                )));
            }
        }

        let mut x = image.clone();
        let mut skips = Vec::with_capacity(c.levels());
        let mut raw_attention = None;
        for (lvl, &ch) in c.encoder_channels.iter().enumerate() {
            if lvl > 0 {
                x = x.max_pool2d(2, 2)?;
            }
            for j in 0..c.block_depth {
                x = Self::conv_relu(&x, params, &format!("enc{lvl}.conv{j}"))?;
            }
            if lvl == c.attention_level {
                if let Some(att) = attention {
                    let (fh, fw) = (x.shape()[1], x.shape()[2]);
                    let flat = x.reshape(&[ch, fh * fw])?.transpose(&[1, 0])?;
                    let out = att.attend(&flat, params)?;
                    if out.features.shape() != [fh * fw, ch] {
                        return Err(shape_err(format!(
                            "attention returned {:?}, expected {:?}",
                            out.features.shape(),
                            [fh * fw, ch]
                        )));
                    }
                    x = out.features.transpose(&[1, 0])?.reshape(&[ch, fh, fw])?;
                    raw_attention = out.raw;
                }
            }
            skips.push(x.clone());
        }
        for lvl in (0..c.levels() - 1).rev() {
            let up_w = params.get(&format!("dec{lvl}.up.w"))?;
            let up_b = params.get(&format!("dec{lvl}.up.b"))?;
            let up = x.transposed_conv2d(up_w, Some(up_b), 2, 0)?.relu();
            x = Tensor::concat(&[&up, &skips[lvl]], 0)?;
            for j in 0..c.block_depth {
                x = Self::conv_relu(&x, params, &format!("dec{lvl}.conv{j}"))?;
            }
        }
        let logits = x.conv2d(params.get("head.w")?, Some(params.get("head.b")?), 1, 0)?;
        Ok(FcnOutput {
            prediction: Prediction::from_logits(logits)?,
            raw_attention,
            attention_grid: c.attention_grid(h, w),
        })
    }
}
