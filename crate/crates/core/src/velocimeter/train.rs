//! Synthetic motion corpus and minibatch training of the recurrent regressor.

use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::gru::{ArchitectureDescriptor, GruNetwork};
use super::{frames_as_inputs, LearnedVelocimeter, ModelMetadata, MotionCorpusEntry, VelocimeterError, VelocityEstimator};
use crate::canonical::{canonical_transform, canonicalize_joints};
use crate::geometry::Vec3;
use crate::joints::{CoordinateFrame, JointSequence};
use crate::sim::motion::{generate_motion, MotionKind, MotionParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub sequences: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Gaussian noise on world joints before canonicalization, meters.
    pub joint_noise_sigma: f64,
    /// Motion kinds, cycled through in order.
    pub kinds: Vec<MotionKind>,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            sequences: 120,
            min_frames: 150,
            max_frames: 300,
            joint_noise_sigma: 0.005,
            kinds: MotionKind::ALL.to_vec(),
            seed: 2024,
        }
    }
}

impl CorpusConfig {
    pub fn corpus_id(&self) -> String {
        let kinds: Vec<_> = self.kinds.iter().map(|k| k.name()).collect();
        format!(
            "synthetic-v1:n{}:f{}-{}:noise{}:{}:seed{}",
            self.sequences,
            self.min_frames,
            self.max_frames,
            self.joint_noise_sigma,
            kinds.join("+"),
            self.seed
        )
    }
}

/// Canonicalizes world joints by the frame-0 root orientation and pairs them
/// with canonical root displacements.
pub(crate) fn corpus_entry(
    joints_world: &JointSequence,
    roots: &[Vec3],
    orientation0: &crate::geometry::Rotation3,
    label: String,
) -> Result<MotionCorpusEntry, VelocimeterError> {
    let invalid = |reason: String| VelocimeterError::InvalidEntry {
        label: label.clone(),
        reason,
    };
    let tf = canonical_transform(joints_world, orientation0).map_err(|e| invalid(e.to_string()))?;
    let joints = canonicalize_joints(joints_world, &tf).map_err(|e| invalid(e.to_string()))?;
    let r = orientation0.inverse();
    let velocities = roots.windows(2).map(|w| r * (w[1] - w[0])).collect();
    MotionCorpusEntry::new(joints, velocities, label)
}

/// Seeded procedural corpus covering every motion kind.
pub fn default_corpus(config: &CorpusConfig) -> Result<Vec<MotionCorpusEntry>, VelocimeterError> {
    if config.sequences == 0 || config.kinds.is_empty() {
        return Err(VelocimeterError::EmptyCorpus);
    }
    if config.min_frames < 2 || config.max_frames < config.min_frames {
        return Err(VelocimeterError::InvalidEntry {
            label: config.corpus_id(),
            reason: "frame range must satisfy 2 <= min <= max".into(),
        });
    }
    let noise = Normal::new(0.0, config.joint_noise_sigma).map_err(|e| VelocimeterError::InvalidEntry {
        label: config.corpus_id(),
        reason: e.to_string(),
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.sequences)
        .map(|i| {
            let kind = config.kinds[i % config.kinds.len()];
            let params = MotionParams::sample(kind, &mut rng);
            let k = rng.random_range(config.min_frames..=config.max_frames);
            let label = format!("{}-{i:03}", kind.name());
            let m = generate_motion(&params, k, rng.random()).map_err(|e| VelocimeterError::InvalidEntry {
                label: label.clone(),
                reason: e.to_string(),
            })?;
            let mut frames = m.joints.frames().to_vec();
            if config.joint_noise_sigma > 0.0 {
                for pose in frames.iter_mut() {
                    for p in pose.iter_mut() {
                        *p += Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
                    }
                }
            }
            let noisy = JointSequence::new(frames, params.frame_rate, CoordinateFrame::World)
                .expect("finite noisy joints");
            corpus_entry(&noisy, &m.root.positions(), &m.root.poses()[0].rotation, label)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_width: usize,
    pub layers: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Learning rate multiplier applied every `decay_every` epochs.
    pub decay_gamma: f64,
    pub decay_every: usize,
    pub window: usize,
    pub window_stride: usize,
    pub batch_size: usize,
    pub holdout_fraction: f64,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_width: 256,
            layers: 2,
            epochs: 8,
            learning_rate: 1e-3,
            decay_gamma: 0.5,
            decay_every: 2,
            window: 32,
            window_stride: 8,
            batch_size: 32,
            holdout_fraction: 0.2,
            clip_norm: 1.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: LearnedVelocimeter,
    pub epoch_losses: Vec<f64>,
    /// Mean Euclidean error per frame on held-out entries, meters per frame.
    pub heldout_mae: f64,
    /// Mean ground-truth speed on held-out entries, meters per frame.
    pub heldout_mean_speed: f64,
    pub heldout_labels: Vec<String>,
    pub train_windows: usize,
    pub elapsed_secs: f64,
}

struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, net: &mut GruNetwork, grads: &GruNetwork, lr: f32, scale: f32) {
        const B1: f32 = 0.9;
        const B2: f32 = 0.999;
        const EPS: f32 = 1e-8;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        let mut idx = 0;
        for (p, g) in net.parameters_mut().into_iter().zip(grads.parameters()) {
            for (w, &gi) in p.iter_mut().zip(g) {
                let gi = gi * scale;
                let m = &mut self.m[idx];
                let v = &mut self.v[idx];
                *m = B1 * *m + (1.0 - B1) * gi;
                *v = B2 * *v + (1.0 - B2) * gi * gi;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                idx += 1;
            }
        }
    }
}

/// Windows `(entry, start)` of length `window` at the given stride; entries
/// shorter than a window contribute one window covering the whole entry.
fn windows(corpus: &[&MotionCorpusEntry], window: usize, stride: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (e, entry) in corpus.iter().enumerate() {
        let k = entry.joints.len();
        if k < window {
            continue;
        }
        let mut a = 0;
        while a + window <= k {
            out.push((e, a));
            a += stride;
        }
        if !(k - window).is_multiple_of(stride) {
            out.push((e, k - window));
        }
    }
    out
}

/// Mean Euclidean per-frame error of `model` over `entries`.
pub(crate) fn mean_error(model: &dyn VelocityEstimator, entries: &[&MotionCorpusEntry]) -> Result<(f64, f64), VelocimeterError> {
    let (mut err, mut speed, mut n) = (0.0, 0.0, 0usize);
    for e in entries {
        let est = model.estimate(&e.joints)?;
        for (a, b) in est.iter().zip(&e.velocities) {
            err += (a - b).norm();
            speed += b.norm();
            n += 1;
        }
    }
    let n = n.max(1) as f64;
    Ok((err / n, speed / n))
}

/// Trains on an 80/20 split by entry. Deterministic for a fixed seed.
pub fn train_velocimeter(
    corpus: &[MotionCorpusEntry],
    config: &TrainConfig,
    corpus_id: &str,
) -> Result<TrainReport, VelocimeterError> {
    if corpus.is_empty() {
        return Err(VelocimeterError::EmptyCorpus);
    }
    let bad = |reason: &str| VelocimeterError::InvalidEntry {
        label: "train-config".into(),
        reason: reason.into(),
    };
    if config.window < 2 || config.window_stride == 0 || config.batch_size == 0 || config.layers == 0 || config.hidden_width == 0 {
        return Err(bad("window >= 2 and positive stride, batch, layers, hidden width required"));
    }
    for e in corpus {
        MotionCorpusEntry::new(e.joints.clone(), e.velocities.clone(), e.label.clone())?;
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng);
    let n_hold = if corpus.len() >= 2 {
        ((corpus.len() as f64 * config.holdout_fraction).round() as usize).clamp(1, corpus.len() - 1)
    } else {
        0
    };
    let held: Vec<&MotionCorpusEntry> = order[..n_hold].iter().map(|&i| &corpus[i]).collect();
    let train: Vec<&MotionCorpusEntry> = order[n_hold..].iter().map(|&i| &corpus[i]).collect();

    let velocity_scale = corpus[0].joints.frame_rate();
    let inputs: Vec<Vec<[f32; super::INPUT_WIDTH]>> = train.iter().map(|e| frames_as_inputs(&e.joints)).collect();
    let mut all_windows = windows(&train, config.window, config.window_stride);
    if all_windows.is_empty() {
        return Err(bad("no training entry is as long as one window"));
    }

    let descriptor = ArchitectureDescriptor::new(config.hidden_width, config.layers);
    let mut net = GruNetwork::random(descriptor, &mut rng);
    let mut grads = GruNetwork::zeros(descriptor);
    let mut adam = Adam::new(descriptor.parameter_count());
    let w = config.window;
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = config.learning_rate * config.decay_gamma.powi((epoch / config.decay_every.max(1)) as i32);
        all_windows.shuffle(&mut rng);
        let (mut loss_sum, mut batches) = (0.0f64, 0usize);
        for batch in all_windows.chunks(config.batch_size) {
            let b = batch.len();
            let xs: Vec<Array2<f32>> = (0..w)
                .map(|t| {
                    Array2::from_shape_fn((b, super::INPUT_WIDTH), |(i, c)| {
                        let (e, a) = batch[i];
                        inputs[e][a + t][c]
                    })
                })
                .collect();
            let trace = net.forward(&xs);
            let count = (b * (w - 1) * super::OUTPUT_WIDTH) as f32;
            let mut loss = 0.0f64;
            let dys: Vec<Array2<f32>> = (0..w)
                .map(|t| {
                    if t == 0 {
                        return Array2::zeros((b, super::OUTPUT_WIDTH));
                    }
                    Array2::from_shape_fn((b, super::OUTPUT_WIDTH), |(i, c)| {
                        let (e, a) = batch[i];
                        let target = (train[e].velocities[a + t - 1][c] * velocity_scale) as f32;
                        let d = trace.outputs[t][[i, c]] - target;
                        loss += f64::from(d * d);
                        2.0 * d / count
                    })
                })
                .collect();
            loss /= f64::from(count);
            if !loss.is_finite() {
                return Err(VelocimeterError::NonFiniteLoss { epoch });
            }
            grads.fill_zero();
            net.backward(&trace, &dys, &mut grads);
            let norm: f64 = grads
                .parameters()
                .iter()
                .flat_map(|p| p.iter())
                .map(|g| f64::from(*g) * f64::from(*g))
                .sum::<f64>()
                .sqrt();
            if !norm.is_finite() {
                return Err(VelocimeterError::NonFiniteLoss { epoch });
            }
            let scale = if norm > config.clip_norm { (config.clip_norm / norm) as f32 } else { 1.0 };
            adam.step(&mut net, &grads, lr as f32, scale);
            loss_sum += loss;
            batches += 1;
        }
        epoch_losses.push(loss_sum / batches as f64);
    }

    let model = LearnedVelocimeter {
        network: net,
        metadata: ModelMetadata {
            corpus_id: corpus_id.to_string(),
            epochs: config.epochs,
            final_loss: epoch_losses.last().copied().unwrap_or(f64::NAN),
            learning_rate: config.learning_rate,
            seed: config.seed,
            window: config.window,
            velocity_scale,
            loss: "mse on velocity times frame rate".into(),
        },
    };
    let eval_set = if held.is_empty() { &train } else { &held };
    let (heldout_mae, heldout_mean_speed) = mean_error(&model, eval_set)?;
    Ok(TrainReport {
        model,
        epoch_losses,
        heldout_mae,
        heldout_mean_speed,
        heldout_labels: held.iter().map(|e| e.label.clone()).collect(),
        train_windows: all_windows.len(),
        elapsed_secs: started.elapsed().as_secs_f64(),
    })
}
