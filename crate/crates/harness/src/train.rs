//! SGD training loop.

use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scribble_autodiff::Tensor;
use scribble_core::attention::{attention_to_affinity, distance_decay_map, DistanceDecayMap, SpatialSelfAttention};
use scribble_core::backbone::{Fcn, FcnOutput};
use scribble_core::losses::{total_loss, AffinityInputs, LossBreakdown, LossSpecs, LossWeights};
use scribble_core::masks::{GateMask, ScribbleMask};
use scribble_core::params::ParamSet;

use crate::augment::{augment, resize_bilinear, resize_nearest};
use crate::config::TrainConfig;
use crate::error::{config_err, HarnessError, Result};
use crate::synth::Dataset;

/// Backbone plus the optional attention attachment a preset asks for.
#[derive(Debug, Clone)]
pub struct Model {
    pub fcn: Fcn,
    pub attention: Option<SpatialSelfAttention>,
}

impl Model {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        Ok(Self {
            fcn: Fcn::new(cfg.fcn.clone())?,
            attention: cfg.attention_config().map(|config| SpatialSelfAttention { config }),
        })
    }

    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> Result<ParamSet> {
        let mut ps = self.fcn.init_params(rng)?;
        if let Some(a) = &self.attention {
            ps.extend(a.config.init_params(rng)?);
        }
        Ok(ps)
    }

    /// `image` is `(H, W)` row-major.
    pub fn forward(&self, image: &[f64], h: usize, w: usize, params: &ParamSet) -> Result<FcnOutput> {
        let x = Tensor::from_vec(&[1, h, w], image.to_vec())?;
        let att = self.attention.as_ref().map(|a| a as &dyn scribble_core::backbone::FeatureAttention);
        Ok(self.fcn.forward(&x, params, att)?)
    }
}

/// `base · (1 − step / total)^power`.
pub fn lr_at(base: f64, power: f64, step: usize, total: usize) -> f64 {
    base * (1.0 - step as f64 / total as f64).powf(power)
}

/// SGD with heavy-ball momentum: `v ← μ·v + g`, `θ ← θ − lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    momentum: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(momentum: f64, num_scalars: usize) -> Self {
        Self {
            momentum,
            velocity: vec![0.0; num_scalars],
        }
    }

    /// Returns the updated parameters; gradients are read from `params`.
    pub fn step(&mut self, params: &ParamSet, lr: f64) -> Result<ParamSet> {
        let grads = params.flat_grads();
        let mut theta = params.flatten();
        for ((v, g), t) in self.velocity.iter_mut().zip(&grads).zip(&mut theta) {
            *v = self.momentum * *v + g;
            *t -= lr * *v;
        }
        Ok(params.with_flat(&theta)?)
    }
}

/// Loss components of one step, averaged over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub pce: f64,
    pub mcrf: Option<f64>,
    pub atn: Option<f64>,
}

impl fmt::Display for StepLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
        write!(
            f,
            "step={} epoch={} lr={} loss={} pce={} mcrf={} atn={}",
            self.step,
            self.epoch,
            self.lr,
            self.loss,
            self.pce,
            opt(self.mcrf),
            opt(self.atn)
        )
    }
}

/// A slice ready for training, already resized if the config asks for it.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub image: Vec<f64>,
    pub scribbles: ScribbleMask,
}

pub fn training_samples(ds: &Dataset, resize: Option<usize>) -> Result<Vec<TrainSample>> {
    let mut out = Vec::with_capacity(ds.num_slices());
    for case in &ds.cases {
        for (z, s) in case.slices.iter().enumerate() {
            let (image, scribbles, h, w) = match resize {
                Some(n) if (n, n) != (ds.height, ds.width) => (
                    resize_bilinear(&s.image, ds.height, ds.width, n, n),
                    ScribbleMask::new(resize_nearest(s.scribbles.map(), n, n)?, ds.num_classes)?,
                    n,
                    n,
                ),
                _ => (s.image.clone(), s.scribbles.clone(), ds.height, ds.width),
            };
            out.push(TrainSample {
                name: format!("{}/{z}", case.id),
                height: h,
                width: w,
                image,
                scribbles,
            });
        }
    }
    Ok(out)
}

/// Per-sample loss of an already augmented slice.
pub struct LossContext<'a> {
    pub model: &'a Model,
    pub weights: LossWeights,
    pub specs: &'a LossSpecs,
    pub decay: &'a DistanceDecayMap,
}

impl LossContext<'_> {
    pub fn loss(&self, params: &ParamSet, image: &[f64], scribbles: &ScribbleMask) -> Result<LossBreakdown> {
        let (h, w) = (scribbles.height(), scribbles.width());
        let out = self.model.forward(image, h, w, params)?;
        let gate = GateMask::from_scribbles(scribbles);
        let img = Tensor::from_vec(&[1, h, w], image.to_vec())?;
        let affinity = match (&out.raw_attention, self.weights.lambda_atn > 0.0) {
            (Some(raw), true) => Some(attention_to_affinity(raw, params)?),
            _ => None,
        };
        let inputs = affinity.as_ref().map(|a| AffinityInputs {
            affinity: a,
            decay: self.decay,
            grid: out.attention_grid,
        });
        Ok(total_loss(&out.prediction, &img, scribbles, &gate, inputs, self.weights, self.specs)?)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamSet,
    pub log: Vec<StepLog>,
}

/// Trains from a fresh initialisation drawn from `cfg.seed`. `on_step` sees
/// every log record as it is produced.
pub fn train(cfg: &TrainConfig, ds: &Dataset, mut on_step: impl FnMut(&StepLog)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let samples = training_samples(ds, cfg.augment.resize)?;
    if samples.is_empty() {
        return Err(config_err("training set is empty"));
    }
    let model = Model::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = model.init_params(&mut rng)?;
    let mut sgd = Sgd::new(cfg.momentum, params.num_scalars());
    let specs = cfg.loss_specs()?;
    let weights = cfg.weights();
    let mut decay_maps: HashMap<(usize, usize), DistanceDecayMap> = HashMap::new();

    let per_epoch = samples.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * per_epoch;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = Vec::with_capacity(total_steps);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let lr = lr_at(cfg.lr, cfg.lr_power, step, total_steps);
            params.zero_grads();
            let mut total: Option<Tensor> = None;
            let (mut pce, mut mcrf, mut atn) = (None::<f64>, None::<f64>, None::<f64>);
            let mut dump = Vec::new();
            for &i in batch {
                let s = &samples[i];
                let (image, scribbles, rec) = augment(&s.image, &s.scribbles, &cfg.augment, &mut rng)?;
                let grid = cfg.fcn.attention_grid(s.height, s.width);
                if !decay_maps.contains_key(&grid) {
                    decay_maps.insert(grid, distance_decay_map(grid.0, grid.1, cfg.decay_sigma())?);
                }
                let ctx = LossContext {
                    model: &model,
                    weights,
                    specs: &specs,
                    decay: &decay_maps[&grid],
                };
                let b = ctx.loss(&params, &image, &scribbles)?;
                let add = |acc: Option<f64>, v: Option<&Tensor>| -> Result<Option<f64>> {
                    Ok(match (acc, v) {
                        (_, None) => acc,
                        (None, Some(t)) => Some(t.item()?),
                        (Some(a), Some(t)) => Some(a + t.item()?),
                    })
                };
                pce = add(pce, Some(&b.pce))?;
                mcrf = add(mcrf, b.mcrf.as_ref())?;
                atn = add(atn, b.atn.as_ref())?;
                dump.push(format!(
                    "  sample={} angle_rad={} flip={} labeled={} total={} pce={}",
                    s.name,
                    rec.angle,
                    rec.flip,
                    scribbles.num_labeled(),
                    b.total.item()?,
                    b.pce.item()?
                ));
                total = Some(match total {
                    None => b.total,
                    Some(t) => t.add(&b.total)?,
                });
            }
            let inv = 1.0 / batch.len() as f64;
            let total = total.expect("batches are non-empty").mul_scalar(inv);
            let entry = StepLog {
                step,
                epoch,
                lr,
                loss: total.item()?,
                pce: pce.expect("pce is always computed") * inv,
                mcrf: mcrf.map(|v| v * inv),
                atn: atn.map(|v| v * inv),
            };
            if !entry.loss.is_finite() {
                return Err(HarnessError::NonFinite {
                    step,
                    dump: format!("{entry}\n{}", dump.join("\n")),
                });
            }
            total.backward()?;
            params = sgd.step(&params, lr)?;
            log::debug!("{entry}");
            on_step(&entry);
            log.push(entry);
            step += 1;
        }
    }
    Ok(TrainOutcome { params, log })
}

pub fn log_text(log: &[StepLog]) -> String {
    log.iter().map(|l| format!("{l}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule_endpoints() {
        assert_eq!(lr_at(0.1, 0.9, 0, 10), 0.1);
        assert_eq!(lr_at(0.1, 0.9, 10, 10), 0.0);
        assert_eq!(lr_at(0.1, 1.0, 5, 10), 0.05);
    }

    #[test]
    fn step_log_formats_absent_terms() {
        let l = StepLog {
            step: 3,
            epoch: 0,
            lr: 0.5,
            loss: 1.25,
            pce: 1.25,
            mcrf: None,
            atn: Some(0.1),
        };
        assert_eq!(l.to_string(), "step=3 epoch=0 lr=0.5 loss=1.25 pce=1.25 mcrf=- atn=0.1");
    }
}
