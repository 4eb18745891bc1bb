//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Pass criterion names (`c1` … `c8`) as arguments to run a subset.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use scribble_autodiff::{PairWindow, Tensor};
use scribble_core::attention::{
    attention_to_affinity, distance_decay_map, ssa_forward, symmetrized_attention, AttentionConfig,
    SpatialSelfAttention,
};
use scribble_core::backbone::{Fcn, FcnConfig, Prediction};
use scribble_core::losses::{
    attentive_similarity_loss, masked_crf_loss, pce_loss, total_loss, AffinityInputs, GaussianKernel,
    KernelFeatures, KernelSpec, LossSpecs, LossWeights, WindowSpec,
};
use scribble_core::masks::{BinaryMask, ClassMap, GateMask, ScribbleMask, UNKNOWN};
use scribble_core::metrics::{dice3d, hd95, ClassVolume, Hd95, VolumeMeta};
use scribble_core::params::ParamSet;
use scribble_core::scribblesim::{simulate_scribbles, ScribbleSimConfig};
use scribble_harness::ablation::{run_ablation, AblationConfig, Verdict};
use scribble_harness::checkpoint::Checkpoint;
use scribble_harness::config::Preset;
use scribble_harness::synth::{generate_dataset, SyntheticSpec};
use scribble_harness::train::{log_text, train};
use scribble_testkit::oracles::{self, Kernel};
use scribble_testkit::{fd, rng, sample_indices, uniform_vec};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- fixtures

fn random_scribbles(h: usize, w: usize, c: usize, frac: f64, r: &mut impl Rng) -> ScribbleMask {
    let labels = (0..h * w)
        .map(|_| if r.random_bool(frac) { r.random_range(0..c as u8) } else { UNKNOWN })
        .collect();
    ScribbleMask::new(ClassMap::from_vec(h, w, labels).unwrap(), c).unwrap()
}

fn random_image(h: usize, w: usize, seed: u64) -> Tensor {
    Tensor::from_vec(&[1, h, w], uniform_vec(&mut rng(seed), h * w, 0.0, 1.0)).unwrap()
}

fn probs_leaf(c: usize, h: usize, w: usize, seed: u64) -> Tensor {
    let logits = Tensor::from_vec(&[c, h, w], uniform_vec(&mut rng(seed), c * h * w, -2.0, 2.0)).unwrap();
    Tensor::param(&[c, h, w], logits.softmax(0).unwrap().to_vec()).unwrap()
}

fn random_kernels(r: &mut impl Rng) -> KernelSpec {
    let n = r.random_range(1..4);
    let features = [KernelFeatures::IntensityLocation, KernelFeatures::Intensity, KernelFeatures::Location];
    KernelSpec::new(
        (0..n)
            .map(|_| GaussianKernel {
                weight: r.random_range(0.2..1.5),
                sigma: r.random_range(0.05..0.5),
                features: features[r.random_range(0..3)],
            })
            .collect(),
    )
    .unwrap()
}

fn oracle_kernels(spec: &KernelSpec) -> Vec<Kernel> {
    spec.kernels()
        .iter()
        .map(|k| Kernel {
            weight: k.weight,
            sigma: k.sigma,
            intensity: k.features != KernelFeatures::Location,
            location: k.features != KernelFeatures::Intensity,
        })
        .collect()
}

/// Coarse cells whose every covered pixel is unlabeled, by direct loops.
fn oracle_coarse_valid(s: &ScribbleMask, gh: usize, gw: usize) -> Vec<bool> {
    let (h, w) = (s.height(), s.width());
    let (fy, fx) = (h / gh, w / gw);
    (0..gh * gw)
        .map(|cell| {
            let (cy, cx) = (cell / gw, cell % gw);
            (cy * fy..(cy + 1) * fy).all(|y| (cx * fx..(cx + 1) * fx).all(|x| s.labels()[y * w + x] == UNKNOWN))
        })
        .collect()
}

/// Prediction on an `h × w` grid coupled to learned affinities on a
/// `gh × gw` grid through a small attention block.
struct AslFixture {
    cfg: AttentionConfig,
    params: ParamSet,
    scribbles: ScribbleMask,
    image: Tensor,
    grid: (usize, usize),
    radius: usize,
    sigma: f64,
}

impl AslFixture {
    fn new(h: usize, w: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        let c = r.random_range(2..5);
        let grid = (h / 2, w / 2);
        let cfg = AttentionConfig {
            n_heads: r.random_range(1..3),
            n_layers: r.random_range(1..3),
            d_q: 3,
            d_v: 2,
            feature_dim: 4,
        };
        let mut params = cfg.init_params(&mut r).unwrap();
        let ch = cfg.channels();
        params.insert("a2a.w", &[ch, 1], uniform_vec(&mut r, ch, -2.0, 2.0)).unwrap();
        params.insert("a2a.b", &[1], uniform_vec(&mut r, 1, -0.5, 0.5)).unwrap();
        let hw = grid.0 * grid.1;
        params.insert("feat", &[hw, 4], uniform_vec(&mut r, hw * 4, -1.0, 1.0)).unwrap();
        params.insert("logits", &[c, h, w], uniform_vec(&mut r, c * h * w, -2.0, 2.0)).unwrap();
        let frac = r.random_range(0.03..0.15);
        let scribbles = random_scribbles(h, w, c, frac, &mut r);
        Self {
            cfg,
            params,
            scribbles,
            image: random_image(h, w, seed ^ 0x5eed),
            grid,
            radius: r.random_range(1..5),
            sigma: r.random_range(0.5..3.0),
        }
    }

    fn affinity(&self, ps: &ParamSet) -> scribble_core::attention::AffinityMatrix {
        let out = ssa_forward(ps.get("feat").unwrap(), &self.cfg, ps).unwrap();
        attention_to_affinity(&out.raw, ps).unwrap()
    }

    fn pred(&self, ps: &ParamSet) -> Prediction {
        Prediction::from_logits(ps.get("logits").unwrap().clone()).unwrap()
    }

    fn asl(&self, ps: &ParamSet) -> Tensor {
        let m = distance_decay_map(self.grid.0, self.grid.1, self.sigma).unwrap();
        attentive_similarity_loss(
            &self.pred(ps),
            &self.affinity(ps),
            &m,
            &self.scribbles,
            WindowSpec { radius: self.radius },
            self.grid,
        )
        .unwrap()
    }

    fn total(&self, ps: &ParamSet) -> Tensor {
        let m = distance_decay_map(self.grid.0, self.grid.1, self.sigma).unwrap();
        let s = self.affinity(ps);
        let gate = GateMask::from_scribbles(&self.scribbles);
        let aff = AffinityInputs {
            affinity: &s,
            decay: &m,
            grid: self.grid,
        };
        let specs = LossSpecs {
            kernel: KernelSpec::default(),
            crf_window: WindowSpec { radius: 3 },
            atn_window: WindowSpec { radius: self.radius },
        };
        let weights = LossWeights {
            lambda_mcrf: 0.3,
            lambda_atn: 0.7,
        };
        total_loss(&self.pred(ps), &self.image, &self.scribbles, &gate, Some(aff), weights, &specs)
            .unwrap()
            .total
    }
}

fn small_fcn(c: usize) -> Fcn {
    Fcn::new(FcnConfig {
        in_channels: 1,
        num_classes: c,
        encoder_channels: vec![4, 6, 8],
        attention_level: 2,
        block_depth: 2,
    })
    .unwrap()
}

/// Small random biases keep ReLU pre-activations off the kink.
fn jitter_biases(ps: &mut ParamSet, seed: u64) {
    let biases: Vec<(String, Vec<usize>)> = ps
        .iter()
        .filter(|(n, _)| n.ends_with(".b"))
        .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
        .collect();
    for (i, (name, shape)) in biases.into_iter().enumerate() {
        let n = shape.iter().product();
        ps.insert(name, &shape, uniform_vec(&mut rng(seed + i as u64), n, -0.1, 0.1)).unwrap();
    }
}

// ---------------------------------------------------------------- c1

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-3;

/// Central differences at `n` random scalar coordinates of `ps`.
fn fd_check(ps: &ParamSet, n: usize, seed: u64, loss: impl Fn(&ParamSet) -> Tensor) -> fd::GradReport {
    ps.zero_grads();
    let l = loss(ps);
    let floor = 1e-5 * l.item().unwrap().abs().max(1.0);
    l.backward().unwrap();
    let analytic = ps.flat_grads();
    let x = ps.flatten();
    let coords = sample_indices(&mut rng(seed), x.len(), n);
    fd::check(|v| loss(&ps.with_flat(v).unwrap()).item().unwrap(), &x, &analytic, &coords, FD_STEP, floor)
}

fn c1_gradients() -> Check {
    let started = Instant::now();
    let sizes = [(8, 8), (12, 10), (16, 16)];
    let per_instance = 20;
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    let mut record = |name: &str, reports: Vec<fd::GradReport>| {
        let checked: usize = reports.iter().map(|r| r.checked).sum();
        let worst = reports.iter().map(|r| r.worst_rel_err).fold(0.0, f64::max);
        lines.push(format!("{name} {checked} coords worst {worst:.1e}"));
        if checked < 50 || !(worst < FD_TOL) {
            failures.push(format!("{name}: {checked} coords, worst rel err {worst:e}"));
        }
    };

    let mut reports = Vec::new();
    for (i, &(h, w)) in sizes.iter().enumerate() {
        let mut r = rng(100 + i as u64);
        let c = r.random_range(2..5);
        let mut ps = ParamSet::new();
        ps.insert("logits", &[c, h, w], uniform_vec(&mut r, c * h * w, -2.0, 2.0)).unwrap();
        let s = random_scribbles(h, w, c, 0.3, &mut r);
        let seed = r.random();
        reports.push(fd_check(&ps, per_instance, seed, |p| {
            pce_loss(&Prediction::from_logits(p.get("logits").unwrap().clone()).unwrap(), &s).unwrap()
        }));
    }
    record("pce_loss", reports);

    let mut reports = Vec::new();
    for (i, &(h, w)) in sizes.iter().enumerate() {
        let mut r = rng(200 + i as u64);
        let c = r.random_range(2..5);
        let mut ps = ParamSet::new();
        ps.insert("logits", &[c, h, w], uniform_vec(&mut r, c * h * w, -2.0, 2.0)).unwrap();
        let s = random_scribbles(h, w, c, 0.2, &mut r);
        let gate = GateMask::from_scribbles(&s);
        let img = random_image(h, w, r.random());
        let spec = random_kernels(&mut r);
        let radius = r.random_range(1..6);
        let seed = r.random();
        reports.push(fd_check(&ps, per_instance, seed, |p| {
            let pred = Prediction::from_logits(p.get("logits").unwrap().clone()).unwrap();
            masked_crf_loss(&pred, &img, &gate, &spec, WindowSpec { radius }).unwrap()
        }));
    }
    record("masked_crf_loss", reports);

    let mut reports = Vec::new();
    for (i, &(h, w)) in [(8, 8), (12, 8), (16, 12)].iter().enumerate() {
        let fx = AslFixture::new(h, w, 300 + i as u64);
        reports.push(fd_check(&fx.params, per_instance, 310 + i as u64, |p| fx.asl(p)));
    }
    record("attentive_similarity_loss", reports);

    let mut reports = Vec::new();
    for (i, &(h, w)) in [(8, 8), (10, 12), (16, 16)].iter().enumerate() {
        let fx = AslFixture::new(h, w, 400 + i as u64);
        reports.push(fd_check(&fx.params, per_instance, 410 + i as u64, |p| fx.total(p)));
    }
    record("total_loss", reports);

    let mut reports = Vec::new();
    for (i, &(h, w)) in sizes.iter().enumerate() {
        let mut r = rng(500 + i as u64);
        let cfg = AttentionConfig {
            n_heads: r.random_range(1..3),
            n_layers: r.random_range(1..3),
            d_q: 4,
            d_v: 3,
            feature_dim: 6,
        };
        let hw = (h / 2) * (w / 2);
        let mut ps = cfg.init_params(&mut r).unwrap();
        for l in 0..cfg.n_layers {
            let d = cfg.n_heads * cfg.d_v;
            ps.insert(format!("attn.l{l}.ln.gamma"), &[d], uniform_vec(&mut r, d, 0.5, 1.5)).unwrap();
            ps.insert(format!("attn.l{l}.ln.beta"), &[d], uniform_vec(&mut r, d, -0.2, 0.2)).unwrap();
        }
        jitter_biases(&mut ps, r.random());
        ps.insert("input", &[hw, 6], uniform_vec(&mut r, hw * 6, -1.0, 1.0)).unwrap();
        let probe = Tensor::from_vec(&[hw, 6], uniform_vec(&mut r, hw * 6, -1.0, 1.0)).unwrap();
        let seed = r.random();
        reports.push(fd_check(&ps, per_instance, seed, |p| {
            let out = ssa_forward(p.get("input").unwrap(), &cfg, p).unwrap();
            out.attended.mul(&probe).unwrap().sum()
        }));
    }
    record("ssa_forward", reports);

    let mut reports = Vec::new();
    for (i, &(h, w)) in sizes.iter().enumerate() {
        let mut r = rng(600 + i as u64);
        let hw = (h / 2) * (w / 2);
        let c = r.random_range(1..4);
        let mut ps = ParamSet::new();
        ps.insert("raw", &[hw, hw, c], uniform_vec(&mut r, hw * hw * c, -3.0, 3.0)).unwrap();
        ps.insert("a2a.w", &[c, 1], uniform_vec(&mut r, c, -2.0, 2.0)).unwrap();
        ps.insert("a2a.b", &[1], uniform_vec(&mut r, 1, -0.5, 0.5)).unwrap();
        let probe = Tensor::from_vec(&[hw, hw], uniform_vec(&mut r, hw * hw, -1.0, 1.0)).unwrap();
        let seed = r.random();
        reports.push(fd_check(&ps, per_instance, seed, |p| {
            let raw = scribble_core::attention::RawAttentionStack::new(p.get("raw").unwrap().clone()).unwrap();
            attention_to_affinity(&raw, p).unwrap().tensor().mul(&probe).unwrap().sum()
        }));
    }
    record("attention_to_affinity", reports);

    let mut reports = Vec::new();
    for (i, &(h, w)) in [(8, 8), (12, 16), (16, 16)].iter().enumerate() {
        let mut r = rng(700 + i as u64);
        let c = r.random_range(2..4);
        let fcn = small_fcn(c);
        let mut ps = fcn.init_params(&mut r).unwrap();
        jitter_biases(&mut ps, r.random());
        let img = random_image(h, w, r.random());
        let probe = Tensor::from_vec(&[c, h, w], uniform_vec(&mut r, c * h * w, -1.0, 1.0)).unwrap();
        let seed = r.random();
        reports.push(fd_check(&ps, per_instance, seed, |p| {
            fcn.forward(&img, p, None).unwrap().prediction.logits.mul(&probe).unwrap().sum()
        }));
    }
    record("fcn_forward", reports);

    let secs = started.elapsed().as_secs_f64();
    if secs >= 300.0 {
        failures.push(format!("suite took {secs:.0}s"));
    }
    if failures.is_empty() {
        Ok(format!("{}; {secs:.1}s", lines.join(", ")))
    } else {
        Err(failures.join("; "))
    }
}

// ---------------------------------------------------------------- c2

fn c2_oracles() -> Check {
    let mut worst_crf: f64 = 0.0;
    let mut worst_asl: f64 = 0.0;
    let mut worst_all: f64 = 0.0;
    for case in 0..100u64 {
        let mut r = rng(1000 + case);
        let (h, w) = (8, 8);
        let c = r.random_range(2..5);
        let probs = probs_leaf(c, h, w, r.random());
        let pred = Prediction::from_probs(probs.clone()).unwrap();
        let frac = r.random_range(0.0..0.4);
        let s = random_scribbles(h, w, c, frac, &mut r);
        let extra = BinaryMask::from_fn(h, w, |y, x| (y * 3 + x + case as usize) % 7 == 0);
        let gate = if case % 2 == 0 {
            GateMask::from_scribbles(&s)
        } else {
            GateMask::from_scribbles(&s).excluding(&extra).unwrap()
        };
        let img = random_image(h, w, r.random());
        let spec = random_kernels(&mut r);
        let ks = oracle_kernels(&spec);
        let kernel = |p: usize, q: usize| oracles::crf_kernel(img.data(), 1, h, w, p, q, &ks);
        let radius = r.random_range(1..6);

        let got = masked_crf_loss(&pred, &img, &gate, &spec, WindowSpec { radius }).unwrap().item().unwrap();
        let want = oracles::windowed_pairwise(probs.data(), c, h, w, gate.valid().bits(), radius, &kernel);
        worst_crf = worst_crf.max((got - want).abs());

        // r at least the grid size: every valid pair is in the window
        let big = h + r.random_range(0..4);
        let windowed = masked_crf_loss(&pred, &img, &gate, &spec, WindowSpec { radius: big }).unwrap().item().unwrap();
        let want = oracles::all_pairs(probs.data(), c, h * w, gate.valid().bits(), &kernel);
        worst_all = worst_all.max((windowed - want).abs());
        let again = masked_crf_loss(&pred, &img, &gate, &spec, WindowSpec { radius: 3 * h }).unwrap().item().unwrap();
        ensure(windowed.to_bits() == again.to_bits(), || format!("case {case}: r={big} and r={} differ", 3 * h))?;
        let window = PairWindow::new(h, w, big, gate.valid().bits(), |_, _| 1.0).unwrap();
        let got_pairs: Vec<(usize, usize)> = window.pairs().map(|(p, q, _)| (p, q)).collect();
        let v = gate.valid().bits();
        let all: Vec<(usize, usize)> = (0..h * w)
            .flat_map(|p| (0..h * w).map(move |q| (p, q)))
            .filter(|&(p, q)| p != q && v[p] && v[q])
            .collect();
        ensure(got_pairs == all, || format!("case {case}: window at r={big} is not the all-pairs set"))?;

        let fx = AslFixture::new(8, 8, 2000 + case);
        let got = fx.asl(&fx.params).item().unwrap();
        let aff = fx.affinity(&fx.params).tensor().to_vec();
        let m = oracles::distance_decay(4, 4, fx.sigma);
        let pr = fx.params.get("logits").unwrap().softmax(0).unwrap();
        let nc = pr.shape()[0];
        let coarse = oracles::bilinear(pr.data(), nc, 8, 8, 4, 4);
        let valid = oracle_coarse_valid(&fx.scribbles, 4, 4);
        let weight = |p: usize, q: usize| m[p * 16 + q] * aff[p * 16 + q];
        let want = oracles::windowed_pairwise(&coarse, nc, 4, 4, &valid, fx.radius, &weight);
        worst_asl = worst_asl.max((got - want).abs());
    }
    ensure(worst_crf < 1e-10, || format!("masked CRF off by {worst_crf:e}"))?;
    ensure(worst_asl < 1e-10, || format!("attentive similarity off by {worst_asl:e}"))?;
    ensure(worst_all < 1e-10, || format!("all-pairs form off by {worst_all:e}"))?;
    Ok(format!(
        "100 cases; max |diff| mcrf {worst_crf:.1e}, asl {worst_asl:.1e}, all-pairs {worst_all:.1e}; full windows are the all-pairs set"
    ))
}

// ---------------------------------------------------------------- c3

fn c3_structure() -> Check {
    let mut worst_s_asym: f64 = 0.0;
    let mut worst_row: f64 = 0.0;
    let mut worst_simplex: f64 = 0.0;
    for case in 0..100u64 {
        let mut r = rng(3000 + case);
        let (gh, gw) = (r.random_range(1..7), r.random_range(1..7));
        let hw = gh * gw;
        let cfg = AttentionConfig {
            n_heads: r.random_range(1..4),
            n_layers: r.random_range(1..3),
            d_q: r.random_range(1..6),
            d_v: r.random_range(1..5),
            feature_dim: r.random_range(2..9),
        };
        let mut ps = cfg.init_params(&mut r).unwrap();
        let ch = cfg.channels();
        ps.insert("a2a.w", &[ch, 1], uniform_vec(&mut r, ch, -3.0, 3.0)).unwrap();
        let f = Tensor::from_vec(&[hw, cfg.feature_dim], uniform_vec(&mut r, hw * cfg.feature_dim, -2.0, 2.0)).unwrap();
        let out = ssa_forward(&f, &cfg, &ps).unwrap();

        let rows = out.raw.scores().softmax(1).unwrap();
        let d = rows.data();
        for p in 0..hw {
            for k in 0..ch {
                let s: f64 = (0..hw).map(|q| d[(p * hw + q) * ch + k]).sum();
                worst_row = worst_row.max((s - 1.0).abs());
            }
        }

        let abar = symmetrized_attention(&out.raw).unwrap();
        let a = abar.data();
        for p in 0..hw {
            for q in 0..hw {
                for k in 0..ch {
                    let (x, y) = (a[(p * hw + q) * ch + k], a[(q * hw + p) * ch + k]);
                    ensure(x.to_bits() == y.to_bits(), || format!("case {case}: Ā[{p},{q},{k}] {x} vs {y}"))?;
                }
            }
        }

        let s = attention_to_affinity(&out.raw, &ps).unwrap();
        let sd = s.tensor().data();
        for p in 0..hw {
            for q in 0..hw {
                let v = sd[p * hw + q];
                ensure(v > 0.0 && v < 1.0, || format!("case {case}: S[{p},{q}] = {v}"))?;
                worst_s_asym = worst_s_asym.max((v - sd[q * hw + p]).abs());
            }
        }

        let m = distance_decay_map(gh, gw, r.random_range(0.2..5.0)).unwrap();
        for p in 0..hw {
            ensure(m.get(p, p) == 1.0, || format!("case {case}: M[{p},{p}] = {}", m.get(p, p)))?;
        }

        let c = r.random_range(2..5);
        let (h, w) = (4 * r.random_range(2..5), 4 * r.random_range(2..5));
        let fcn = small_fcn(c);
        let mut fps = fcn.init_params(&mut r).unwrap();
        let att_cfg = AttentionConfig {
            feature_dim: 8,
            ..cfg
        };
        fps.extend(att_cfg.init_params(&mut r).unwrap());
        let att = SpatialSelfAttention { config: att_cfg };
        let img = random_image(h, w, r.random());
        let pred = fcn.forward(&img, &fps, Some(&att)).unwrap().prediction;
        let pd = pred.probs.data();
        for p in 0..h * w {
            let mut sum = 0.0;
            for k in 0..c {
                let v = pd[k * h * w + p];
                ensure((0.0..=1.0).contains(&v), || format!("case {case}: P[{k},{p}] = {v}"))?;
                sum += v;
            }
            worst_simplex = worst_simplex.max((sum - 1.0).abs());
        }
    }
    ensure(worst_s_asym <= 1e-12, || format!("S asymmetric by {worst_s_asym:e}"))?;
    ensure(worst_row <= 1e-12, || format!("softmax rows off by {worst_row:e}"))?;
    ensure(worst_simplex <= 1e-9, || format!("probability simplex off by {worst_simplex:e}"))?;
    Ok(format!(
        "100 configs; Ā exact, |S−Sᵀ| {worst_s_asym:.1e}, rows {worst_row:.1e}, simplex {worst_simplex:.1e}, M diag 1"
    ))
}

// ---------------------------------------------------------------- c4

fn c4_masking() -> Check {
    let mut worst_shift: f64 = 0.0;
    let mut checked = 0usize;
    for case in 0..30u64 {
        let mut r = rng(4000 + case);
        let (h, w) = (8, 8);
        let c = r.random_range(2..5);
        let s = random_scribbles(h, w, c, r.random_range(0.1..0.4), &mut r);
        let extra = BinaryMask::from_fn(h, w, |y, x| (y + 2 * x + case as usize) % 9 == 0);
        let gate = GateMask::from_scribbles(&s).excluding(&extra).unwrap();
        let img = random_image(h, w, r.random());
        let spec = random_kernels(&mut r);
        let radius = r.random_range(1..6);
        let asl_radius = r.random_range(1..5);
        let fx = AslFixture::new(h, w, 4500 + case);
        let aff = fx.affinity(&fx.params);
        let m = distance_decay_map(4, 4, fx.sigma).unwrap();

        let probs = probs_leaf(c, h, w, r.random());
        let pred = Prediction::from_probs(probs.clone()).unwrap();
        let hw = h * w;
        let zero_at = |g: &[f64], p: usize| (0..c).all(|k| g[k * hw + p] == 0.0);

        // a loss over an empty set never reaches the leaf: its gradient is zero
        let grad = |t: &Tensor| t.grad_vec().unwrap_or_else(|| vec![0.0; c * hw]);
        pce_loss(&pred, &s).unwrap().backward().unwrap();
        let g = grad(&probs);
        for p in 0..hw {
            if s.label(p).is_none() {
                ensure(zero_at(&g, p), || format!("case {case}: pce gradient at unlabeled pixel {p}"))?;
            }
        }

        let crf = |pr: &Prediction| masked_crf_loss(pr, &img, &gate, &spec, WindowSpec { radius }).unwrap();
        let asl = |pr: &Prediction| {
            attentive_similarity_loss(pr, &aff, &m, &s, WindowSpec { radius: asl_radius }, (4, 4)).unwrap()
        };
        for (name, f) in [("mcrf", &crf as &dyn Fn(&Prediction) -> Tensor), ("asl", &asl)] {
            let probs = probs_leaf(c, h, w, 4900 + case);
            let pred = Prediction::from_probs(probs.clone()).unwrap();
            let base = f(&pred);
            base.backward().unwrap();
            let g = grad(&probs);
            for p in 0..hw {
                if s.label(p).is_some() {
                    ensure(zero_at(&g, p), || format!("case {case}: {name} gradient at labeled pixel {p}"))?;
                    checked += 1;
                }
            }
            // replace the distribution at every gated-out pixel
            let gated_out: Vec<usize> = match name {
                "mcrf" => (0..hw).filter(|&p| !gate.valid().bits()[p]).collect(),
                _ => (0..hw).filter(|&p| s.label(p).is_some()).collect(),
            };
            let mut moved = probs.to_vec();
            let fresh = probs_leaf(c, h, w, 4950 + case).to_vec();
            for &p in &gated_out {
                for k in 0..c {
                    moved[k * hw + p] = fresh[k * hw + p];
                }
            }
            let after = f(&Prediction::from_probs(Tensor::from_vec(&[c, h, w], moved).unwrap()).unwrap());
            let shift = (after.item().unwrap() - base.item().unwrap()).abs();
            worst_shift = worst_shift.max(shift);
        }
    }
    ensure(worst_shift <= 1e-14, || format!("gated-out perturbation moved a regulariser by {worst_shift:e}"))?;
    Ok(format!(
        "30 cases; pce zero on Ω_U, {checked} labeled-pixel regulariser gradients exactly 0, max perturbation shift {worst_shift:.1e}"
    ))
}

// ---------------------------------------------------------------- c5

fn c5_metrics() -> Check {
    let (d, h, w) = (4, 12, 12);
    let mut worst_hd: f64 = 0.0;
    let mut worst_dice: f64 = 0.0;
    let mut compared = 0;
    for case in 0..50u64 {
        let mut r = rng(5000 + case);
        let mut vol = |density: f64| {
            let labels: Vec<u8> = (0..d * h * w)
                .map(|_| if r.random_bool(density) { r.random_range(1..3) } else { 0 })
                .collect();
            ClassVolume::new(d, h, w, labels).unwrap()
        };
        let a = vol(0.3);
        let b = vol(0.45);
        let (sx, sy, sz) = (r.random_range(0.3..2.0), r.random_range(0.3..2.0), r.random_range(1.0..6.0));
        let meta = VolumeMeta::new(sx, sy, sz).unwrap();
        let double = VolumeMeta::new(2.0 * sx, 2.0 * sy, 2.0 * sz).unwrap();
        for class in 1..3u8 {
            let bits = |v: &ClassVolume| v.labels().iter().map(|&l| l == class).collect::<Vec<_>>();
            let dice = dice3d(&a, &b, class).unwrap();
            worst_dice = worst_dice.max((dice - oracles::dice(&bits(&a), &bits(&b))).abs());
            ensure(dice.to_bits() == dice3d(&b, &a, class).unwrap().to_bits(), || format!("case {case}: dice asymmetric"))?;

            let got = hd95(&a, &b, class, &meta).unwrap();
            let want = oracles::hd95(&bits(&a), &bits(&b), d, h, w, (sz, sy, sx));
            match (got, want) {
                (Hd95::Mm(g), Some(o)) => {
                    worst_hd = worst_hd.max((g - o).abs());
                    compared += 1;
                    ensure(hd95(&a, &b, class, &double).unwrap() == Hd95::Mm(2.0 * g), || {
                        format!("case {case}: doubling the spacing did not double HD95")
                    })?;
                }
                (Hd95::Undefined, None) => {}
                other => return Err(format!("case {case}: definedness differs {other:?}")),
            }
            ensure(got == hd95(&b, &a, class, &meta).unwrap(), || format!("case {case}: hd95 asymmetric"))?;
        }
    }
    ensure(worst_hd < 1e-9, || format!("hd95 off by {worst_hd:e} mm"))?;
    ensure(worst_dice < 1e-12, || format!("dice off by {worst_dice:e}"))?;
    Ok(format!("50 volumes, {compared} hd95 values; max |diff| hd95 {worst_hd:.1e} mm, dice {worst_dice:.1e}"))
}

// ---------------------------------------------------------------- c6

fn c6_scribbles() -> Check {
    let spec = SyntheticSpec {
        num_cases: 20,
        seed: 6000,
        ..SyntheticSpec::default()
    };
    let ds = generate_dataset(&spec).unwrap();
    let cfg = ScribbleSimConfig {
        hull_expand_px: spec.hull_expand_px,
        seed: 6,
    };
    let mut worst_fraction: f64 = 0.0;
    let mut masks = 0;
    for case in &ds.cases {
        for (z, slice) in case.slices.iter().enumerate() {
            let at = || format!("{} slice {z}", case.id);
            let gt = &slice.mask;
            let s = simulate_scribbles(gt, ds.num_classes, &cfg).unwrap();
            let again = simulate_scribbles(gt, ds.num_classes, &cfg).unwrap();
            ensure(s.labels() == again.labels(), || format!("{}: not deterministic", at()))?;
            for (p, &l) in s.labels().iter().enumerate() {
                if l == UNKNOWN {
                    continue;
                }
                ensure(l == gt.labels()[p], || format!("{}: pixel {p} labeled {l}, truth {}", at(), gt.labels()[p]))?;
            }
            for k in 1..ds.num_classes as u8 {
                let fg = s.map().class_mask(k);
                ensure(fg.is_subset_of(&gt.class_mask(k)), || format!("{}: class {k} scribble leaves the organ", at()))?;
            }
            let bg = s.map().class_mask(0);
            let organs = BinaryMask::from_fn(gt.height(), gt.width(), |y, x| gt.get(y, x) != 0);
            ensure(bg.intersection(&organs).is_empty(), || format!("{}: background scribble on an organ", at()))?;
            worst_fraction = worst_fraction.max(s.labeled_fraction());
            masks += 1;
        }
    }
    ensure(masks == 100, || format!("{masks} masks"))?;
    ensure(worst_fraction < 0.10, || format!("labeled fraction reached {worst_fraction}"))?;
    Ok(format!("{masks} masks; fidelity, containment, disjointness and determinism hold; max labeled fraction {worst_fraction:.3}"))
}

// ---------------------------------------------------------------- c7

fn c7_ablation() -> Check {
    let cfg = AblationConfig::desk(5);
    let out = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("ablation");
    std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
    let started = Instant::now();
    let result = run_ablation(&cfg, Some(&out)).map_err(|e| e.to_string())?;
    let v: Verdict = result.verdict();
    let med = |p| format!("{p} {:.3}/{:.2}mm", result.median_dice(p), result.median_hd95(p));
    let summary = format!(
        "median dice/hd95: {}, {}, {}; (a) ordered={} margin={:.3} (b) {} (c) {}/{} seeds; {:.0}s, runs in {}",
        med(Preset::Full),
        med(Preset::PceMcrf),
        med(Preset::PceOnly),
        v.dice_ordered,
        v.dice_margin,
        v.hd95_full_beats_baseline,
        v.seeds_full_not_worse_hd95,
        v.num_seeds,
        started.elapsed().as_secs_f64(),
        out.display()
    );
    if v.passes() {
        Ok(summary)
    } else {
        Err(summary)
    }
}

// ---------------------------------------------------------------- c8

fn c8_reproducibility() -> Check {
    let mut abl = AblationConfig::desk(1);
    abl.train_data.num_cases = 6;
    let ds = generate_dataset(&abl.train_data).unwrap();
    let mut cfg = abl.base;
    cfg.preset = Preset::Full;
    cfg.epochs = 2;
    cfg.seed = 8;
    let run = || {
        let out = train(&cfg, &ds, |_| {}).unwrap();
        let bytes = Checkpoint {
            config: cfg.clone(),
            params: out.params,
        }
        .to_bytes()
        .unwrap();
        (log_text(&out.log), bytes)
    };
    let (log_a, ck_a) = run();
    let (log_b, ck_b) = run();
    ensure(log_a == log_b, || "training logs differ".into())?;
    ensure(ck_a == ck_b, || "checkpoints differ".into())?;
    Ok(format!("{} log lines and {} checkpoint bytes identical", log_a.lines().count(), ck_a.len()))
}

// ---------------------------------------------------------------- runner

fn main() -> ExitCode {
    let criteria: [(&str, &str, fn() -> Check); 8] = [
        ("c1", "gradient suite", c1_gradients),
        ("c2", "oracle equivalence", c2_oracles),
        ("c3", "structural invariants", c3_structure),
        ("c4", "masking contract", c4_masking),
        ("c5", "metrics", c5_metrics),
        ("c6", "scribble simulation", c6_scribbles),
        ("c7", "desk-scale ablation", c7_ablation),
        ("c8", "reproducibility", c8_reproducibility),
    ];
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == id) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {id} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id} {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
