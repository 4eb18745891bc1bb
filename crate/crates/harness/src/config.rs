//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique.
//! [`TrainConfig::to_text`] writes every key, so a saved config documents the
//! full set of values a run used.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use scribble_core::attention::AttentionConfig;
use scribble_core::backbone::FcnConfig;
use scribble_core::losses::{KernelFeatures, KernelSpec, LossSpecs, LossWeights, WindowSpec};

use crate::augment::AugmentConfig;
use crate::error::{config_err, Result};

/// Parsed `key = value` pairs. Getters remove what they read so that
/// [`KeyValues::finish`] can reject unknown keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key = value, got `{line}`", n + 1)))?;
            let k = k.trim().to_string();
            if entries.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(config_err(format!("line {}: duplicate key `{k}`", n + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get_raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn take<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.entries.remove(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| config_err(format!("invalid value `{v}` for `{key}`"))),
        }
    }

    pub fn take_list(&mut self, key: &str, default: Vec<usize>) -> Result<Vec<usize>> {
        match self.entries.remove(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| config_err(format!("invalid list `{v}` for `{key}`")))
                })
                .collect(),
        }
    }

    /// `none` or a value.
    pub fn take_opt<T: FromStr>(&mut self, key: &str, default: Option<T>) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(default),
            Some(v) if v == "none" || v == "auto" => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| config_err(format!("invalid value `{v}` for `{key}`"))),
        }
    }

    /// Fails if any key was never read.
    pub fn finish(self) -> Result<()> {
        match self.entries.keys().next() {
            None => Ok(()),
            Some(_) => Err(config_err(format!(
                "unknown keys: {}",
                self.entries.keys().cloned().collect::<Vec<_>>().join(", ")
            ))),
        }
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Which loss terms (and which architecture) a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Preset {
    /// Partial cross-entropy only, plain FCN.
    PceOnly,
    /// pCE + masked CRF; attention attached but its loss weight is zero.
    PceMcrf,
    /// pCE + masked CRF + attentive similarity.
    Full,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::PceOnly, Preset::PceMcrf, Preset::Full];

    pub fn name(self) -> &'static str {
        match self {
            Preset::PceOnly => "pce_only",
            Preset::PceMcrf => "pce_mcrf",
            Preset::Full => "full",
        }
    }

    pub fn uses_attention(self) -> bool {
        self != Preset::PceOnly
    }
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown preset `{s}`"))
    }
}

impl Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Attention widths; the host channel count comes from the backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionShape {
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_q: usize,
    pub d_v: usize,
}

impl Default for AttentionShape {
    fn default() -> Self {
        Self {
            n_heads: 2,
            n_layers: 1,
            d_q: 8,
            d_v: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub preset: Preset,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Exponent of the polynomial decay `lr · (1 − t/T)^power`.
    pub lr_power: f64,
    pub momentum: f64,
    pub lambda_mcrf: f64,
    pub lambda_atn: f64,
    pub crf_radius: usize,
    pub crf_sigma: f64,
    /// Window radius of the attentive loss, in attention-grid cells.
    pub atn_radius: usize,
    /// Distance decay scale; `None` means `atn_radius / 2`.
    pub decay_sigma: Option<f64>,
    pub fcn: FcnConfig,
    pub attention: AttentionShape,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Full,
            seed: 0,
            epochs: 12,
            batch_size: 4,
            lr: 0.01,
            lr_power: 0.9,
            momentum: 0.9,
            lambda_mcrf: 0.1,
            lambda_atn: 0.1,
            crf_radius: 5,
            crf_sigma: 0.1,
            atn_radius: 5,
            decay_sigma: None,
            fcn: FcnConfig::default(),
            attention: AttentionShape::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.fcn.validate()?;
        self.weights().validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(config_err("epochs and batch_size must be positive"));
        }
        if !(self.lr >= 0.0) || !(self.lr_power >= 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(config_err("need lr >= 0, lr_power >= 0 and momentum in [0, 1)"));
        }
        if self.crf_radius == 0 || self.atn_radius == 0 {
            return Err(config_err("window radii must be at least 1"));
        }
        if let Some(c) = self.attention_config() {
            c.validate()?;
        }
        self.loss_specs()?;
        Ok(())
    }

    /// Loss weights after the preset has zeroed what it excludes.
    pub fn weights(&self) -> LossWeights {
        match self.preset {
            Preset::PceOnly => LossWeights {
                lambda_mcrf: 0.0,
                lambda_atn: 0.0,
            },
            Preset::PceMcrf => LossWeights {
                lambda_mcrf: self.lambda_mcrf,
                lambda_atn: 0.0,
            },
            Preset::Full => LossWeights {
                lambda_mcrf: self.lambda_mcrf,
                lambda_atn: self.lambda_atn,
            },
        }
    }

    pub fn attention_config(&self) -> Option<AttentionConfig> {
        self.preset.uses_attention().then(|| AttentionConfig {
            n_heads: self.attention.n_heads,
            n_layers: self.attention.n_layers,
            d_q: self.attention.d_q,
            d_v: self.attention.d_v,
            feature_dim: self.fcn.attention_dim(),
        })
    }

    pub fn loss_specs(&self) -> Result<LossSpecs> {
        Ok(LossSpecs {
            kernel: KernelSpec::single(self.crf_sigma, KernelFeatures::IntensityLocation)?,
            crf_window: WindowSpec::new(self.crf_radius)?,
            atn_window: WindowSpec::new(self.atn_radius)?,
        })
    }

    pub fn decay_sigma(&self) -> f64 {
        self.decay_sigma.unwrap_or(self.atn_radius as f64 / 2.0)
    }

    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let d = TrainConfig::default();
        let preset: Preset = kv.take("preset", d.preset)?;
        let fd = &d.fcn;
        let cfg = TrainConfig {
            preset,
            seed: kv.take("seed", d.seed)?,
            epochs: kv.take("epochs", d.epochs)?,
            batch_size: kv.take("batch_size", d.batch_size)?,
            lr: kv.take("lr", d.lr)?,
            lr_power: kv.take("lr_power", d.lr_power)?,
            momentum: kv.take("momentum", d.momentum)?,
            lambda_mcrf: kv.take("lambda_mcrf", d.lambda_mcrf)?,
            lambda_atn: kv.take("lambda_atn", d.lambda_atn)?,
            crf_radius: kv.take("crf_radius", d.crf_radius)?,
            crf_sigma: kv.take("crf_sigma", d.crf_sigma)?,
            atn_radius: kv.take("atn_radius", d.atn_radius)?,
            decay_sigma: kv.take_opt("decay_sigma", d.decay_sigma)?,
            fcn: FcnConfig {
                in_channels: kv.take("in_channels", fd.in_channels)?,
                num_classes: kv.take("num_classes", fd.num_classes)?,
                encoder_channels: kv.take_list("encoder_channels", fd.encoder_channels.clone())?,
                attention_level: kv.take("attention_level", fd.attention_level)?,
                block_depth: kv.take("block_depth", fd.block_depth)?,
            },
            attention: AttentionShape {
                n_heads: kv.take("attn_heads", d.attention.n_heads)?,
                n_layers: kv.take("attn_layers", d.attention.n_layers)?,
                d_q: kv.take("attn_dq", d.attention.d_q)?,
                d_v: kv.take("attn_dv", d.attention.d_v)?,
            },
            augment: AugmentConfig {
                max_rotation_deg: kv.take("rotate_deg", d.augment.max_rotation_deg)?,
                flip: kv.take("flip", d.augment.flip)?,
                resize: kv.take_opt("resize", d.augment.resize)?,
            },
        };
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(KeyValues::parse(text)?)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("preset", self.preset);
        kv.set("seed", self.seed);
        kv.set("epochs", self.epochs);
        kv.set("batch_size", self.batch_size);
        kv.set("lr", self.lr);
        kv.set("lr_power", self.lr_power);
        kv.set("momentum", self.momentum);
        kv.set("lambda_mcrf", self.lambda_mcrf);
        kv.set("lambda_atn", self.lambda_atn);
        kv.set("crf_radius", self.crf_radius);
        kv.set("crf_sigma", self.crf_sigma);
        kv.set("atn_radius", self.atn_radius);
        kv.set("decay_sigma", opt(self.decay_sigma));
        kv.set("in_channels", self.fcn.in_channels);
        kv.set("num_classes", self.fcn.num_classes);
        kv.set(
            "encoder_channels",
            self.fcn.encoder_channels.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
        );
        kv.set("attention_level", self.fcn.attention_level);
        kv.set("block_depth", self.fcn.block_depth);
        kv.set("attn_heads", self.attention.n_heads);
        kv.set("attn_layers", self.attention.n_layers);
        kv.set("attn_dq", self.attention.d_q);
        kv.set("attn_dv", self.attention.d_v);
        kv.set("rotate_deg", self.augment.max_rotation_deg);
        kv.set("flip", self.augment.flip);
        kv.set("resize", opt(self.augment.resize));
        kv
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_text()
    }
}

fn opt<T: Display>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}
