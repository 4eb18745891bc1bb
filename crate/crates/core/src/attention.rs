//! Pluggable spatial self-attention and the attention-to-affinity transform.
//!
//! [`ssa_forward`] runs multi-head scaled dot-product attention over a
//! flattened `(hw, d)` feature map, stacks `L` such layers (each followed by a
//! LayerNorm + MLP residual block) and compresses the result back to `d`
//! channels so it can replace the host feature map. Every pre-softmax score
//! matrix `A_i = Q_i K_iᵀ / √d_k` is kept in a [`RawAttentionStack`].
//!
//! [`attention_to_affinity`] turns that stack into a symmetric pairwise
//! similarity `S ∈ (0,1)^{hw×hw}`: row softmax per channel, `Ā = A + Aᵀ`, a
//! 1×1 channel compression and a sigmoid. [`distance_decay_map`] supplies the
//! Gaussian positional weight used next to `S` in the attentive loss.

use rand::Rng;
use scribble_autodiff::Tensor;

use crate::backbone::{Attended, FeatureAttention};
use crate::error::{config_err, shape_err, Result};
use crate::params::{glorot_uniform, normal, ParamSet};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionConfig {
    pub n_heads: usize,
    pub n_layers: usize,
    /// Query (and key) width per head.
    pub d_q: usize,
    /// Value width per head.
    pub d_v: usize,
    /// Channel count of the host feature map.
    pub feature_dim: usize,
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.n_layers == 0 {
            return Err(config_err("attention needs at least one head and one layer"));
        }
        if self.d_q == 0 || self.d_v == 0 || self.feature_dim == 0 {
            return Err(config_err("attention widths must be positive"));
        }
        Ok(())
    }

    /// Key width; always equal to the query width.
    pub fn d_k(&self) -> usize {
        self.d_q
    }

    pub fn channels(&self) -> usize {
        self.n_heads * self.n_layers
    }

    fn concat_dim(&self) -> usize {
        self.n_heads * self.d_v
    }

    /// Fresh parameters for the attention block and the affinity compression.
    pub fn init_params(&self, rng: &mut impl Rng) -> Result<ParamSet> {
        self.validate()?;
        let mut ps = ParamSet::new();
        let mut linear = |ps: &mut ParamSet, name: String, din: usize, dout: usize| -> Result<()> {
            ps.insert(format!("{name}.w"), &[din, dout], glorot_uniform(rng, din * dout, din, dout))?;
            ps.insert(format!("{name}.b"), &[dout], vec![0.0; dout])
        };
        let cat = self.concat_dim();
        for l in 0..self.n_layers {
            let din = if l == 0 { self.feature_dim } else { cat };
            for h in 0..self.n_heads {
                linear(&mut ps, format!("attn.l{l}.h{h}.q"), din, self.d_q)?;
                linear(&mut ps, format!("attn.l{l}.h{h}.k"), din, self.d_q)?;
                linear(&mut ps, format!("attn.l{l}.h{h}.v"), din, self.d_v)?;
            }
            ps.insert(format!("attn.l{l}.ln.gamma"), &[cat], vec![1.0; cat])?;
            ps.insert(format!("attn.l{l}.ln.beta"), &[cat], vec![0.0; cat])?;
            linear(&mut ps, format!("attn.l{l}.mlp1"), cat, cat)?;
            linear(&mut ps, format!("attn.l{l}.mlp2"), cat, cat)?;
        }
        linear(&mut ps, "attn.out".to_string(), cat, self.feature_dim)?;
        let c = self.channels();
        ps.insert("a2a.w", &[c, 1], normal(rng, c, 0.1))?;
        ps.insert("a2a.b", &[1], vec![0.0])?;
        Ok(ps)
    }
}

/// Pre-softmax scores of every head of every layer, shape `(hw, hw, n·L)`.
#[derive(Debug, Clone)]
pub struct RawAttentionStack {
    scores: Tensor,
}

impl RawAttentionStack {
    pub fn new(scores: Tensor) -> Result<Self> {
        match *scores.shape() {
            [a, b, c] if a == b && c > 0 => Ok(Self { scores }),
            _ => Err(shape_err(format!(
                "raw attention must be (hw, hw, channels), got {:?}",
                scores.shape()
            ))),
        }
    }

    pub fn scores(&self) -> &Tensor {
        &self.scores
    }

    pub fn num_pixels(&self) -> usize {
        self.scores.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.scores.shape()[2]
    }
}

/// Learned pairwise similarity `S`, shape `(hw, hw)`, symmetric, in `(0, 1)`.
#[derive(Debug, Clone)]
pub struct AffinityMatrix {
    s: Tensor,
}

impl AffinityMatrix {
    pub fn new(s: Tensor) -> Result<Self> {
        match *s.shape() {
            [a, b] if a == b => Ok(Self { s }),
            _ => Err(shape_err(format!("affinity must be square, got {:?}", s.shape()))),
        }
    }

    pub fn tensor(&self) -> &Tensor {
        &self.s
    }

    pub fn num_pixels(&self) -> usize {
        self.s.shape()[0]
    }
}

/// Constant Gaussian fall-off with grid distance:
/// `M[p,q] = exp(-‖p − q‖² / 2σ²)` on an `h`×`w` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceDecayMap {
    height: usize,
    width: usize,
    sigma: f64,
    values: Vec<f64>,
}

impl DistanceDecayMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.values[p * self.num_pixels() + q]
    }

    /// Row-major `(hw, hw)` values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn distance_decay_map(height: usize, width: usize, sigma: f64) -> Result<DistanceDecayMap> {
    if height == 0 || width == 0 {
        return Err(config_err("distance decay map needs a non-empty grid"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(config_err(format!("distance decay sigma must be > 0, got {sigma}")));
    }
    let hw = height * width;
    let denom = 2.0 * sigma * sigma;
    let mut values = vec![0.0; hw * hw];
    for p in 0..hw {
        let (py, px) = ((p / width) as f64, (p % width) as f64);
        for q in 0..hw {
            let (qy, qx) = ((q / width) as f64, (q % width) as f64);
            let d2 = (py - qy).powi(2) + (px - qx).powi(2);
            values[p * hw + q] = (-d2 / denom).exp();
        }
    }
    Ok(DistanceDecayMap {
        height,
        width,
        sigma,
        values,
    })
}

/// Output of [`ssa_forward`].
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    /// `(hw, d)`, ready to replace the host feature map.
    pub attended: Tensor,
    pub raw: RawAttentionStack,
}

fn linear(x: &Tensor, params: &ParamSet, name: &str) -> Result<Tensor> {
    let w = params.get(&format!("{name}.w"))?;
    let b = params.get(&format!("{name}.b"))?;
    Ok(x.matmul(w)?.add_along(b, 1)?)
}

/// Multi-head, multi-layer spatial self-attention over a flattened `(hw, d)`
/// feature map.
pub fn ssa_forward(f: &Tensor, config: &AttentionConfig, params: &ParamSet) -> Result<AttentionOutput> {
    config.validate()?;
    let hw = match *f.shape() {
        [hw, d] if d == config.feature_dim => hw,
        _ => {
            return Err(shape_err(format!(
                "attention input must be (hw, {}), got {:?}",
                config.feature_dim,
                f.shape()
            )))
        }
    };
    let scale = 1.0 / (config.d_k() as f64).sqrt();
    let mut x = f.clone();
    let mut raw = Vec::with_capacity(config.channels());
    for l in 0..config.n_layers {
        let mut heads = Vec::with_capacity(config.n_heads);
        for h in 0..config.n_heads {
            let prefix = format!("attn.l{l}.h{h}");
            let q = linear(&x, params, &format!("{prefix}.q"))?;
            let k = linear(&x, params, &format!("{prefix}.k"))?;
            let v = linear(&x, params, &format!("{prefix}.v"))?;
            let scores = q.matmul(&k.transpose(&[1, 0])?)?.mul_scalar(scale);
            heads.push(scores.softmax(1)?.matmul(&v)?);
            raw.push(scores.reshape(&[hw, hw, 1])?);
        }
        let refs: Vec<&Tensor> = heads.iter().collect();
        let a = Tensor::concat(&refs, 1)?;
        let normed = a
            .layer_norm(1, LN_EPS)?
            .mul_along(params.get(&format!("attn.l{l}.ln.gamma"))?, 1)?
            .add_along(params.get(&format!("attn.l{l}.ln.beta"))?, 1)?;
        let hidden = linear(&normed, params, &format!("attn.l{l}.mlp1"))?.relu();
        let mlp = linear(&hidden, params, &format!("attn.l{l}.mlp2"))?;
        x = a.add(&mlp)?;
    }
    let attended = linear(&x, params, "attn.out")?;
    let refs: Vec<&Tensor> = raw.iter().collect();
    let raw = RawAttentionStack::new(Tensor::concat(&refs, 2)?)?;
    Ok(AttentionOutput { attended, raw })
}

/// Row softmax per channel followed by `Ā = A + Aᵀ`, shape `(hw, hw, c)`.
pub fn symmetrized_attention(raw: &RawAttentionStack) -> Result<Tensor> {
    let a = raw.scores().softmax(1)?;
    Ok(a.add(&a.transpose(&[1, 0, 2])?)?)
}

/// Row softmax per channel, symmetrisation, 1×1 channel compression, sigmoid.
pub fn attention_to_affinity(raw: &RawAttentionStack, params: &ParamSet) -> Result<AffinityMatrix> {
    let (hw, c) = (raw.num_pixels(), raw.channels());
    let w = params.get("a2a.w")?;
    let b = params.get("a2a.b")?;
    if w.shape() != [c, 1] || b.shape() != [1] {
        return Err(shape_err(format!(
            "affinity compression expects w (c={c}, 1) and b (1), got {:?} and {:?}",
            w.shape(),
            b.shape()
        )));
    }
    let s = symmetrized_attention(raw)?
        .reshape(&[hw * hw, c])?
        .matmul(w)?
        .add_along(b, 1)?
        .reshape(&[hw, hw])?
        .sigmoid();
    AffinityMatrix::new(s)
}

/// Spatial self-attention as an attachment for the backbone.
#[derive(Debug, Clone, Copy)]
pub struct SpatialSelfAttention {
    pub config: AttentionConfig,
}

impl FeatureAttention for SpatialSelfAttention {
    fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }

    fn attend(&self, features: &Tensor, params: &ParamSet) -> Result<Attended> {
        let out = ssa_forward(features, &self.config, params)?;
        Ok(Attended {
            features: out.attended,
            raw: Some(out.raw),
        })
    }
}
