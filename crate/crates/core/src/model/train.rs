//! Seeded training loop: uniform clip sampling, batch-mean loss, Adam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::{Adam, AdamConfig};
use super::loss::total_loss;
use super::{ModelInput, MsafNet};
use crate::data::video::{sample_clip, ClipSample, VideoRecord};
use crate::error::{Error, Result};
use crate::nn::{apply_batch_stats, ForwardCtx};
use crate::tensor::Tensor;

pub const TRACE_HEADER: &str = "step,loss,kl,cc";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_clips: usize,
    pub clip_len: usize,
    pub epochs: usize,
    pub seed: u64,
    pub resolution: usize,
    /// Caps the number of steps derived from `epochs`.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_clips: 12,
            clip_len: 5,
            epochs: 3,
            seed: 0,
            resolution: 256,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("adam_eps", self.adam_eps),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("{v} must be positive")));
            }
        }
        for (field, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if v >= 1.0 {
                return Err(Error::config(field, format!("{v} must be below 1")));
            }
        }
        for (field, v) in [("batch_clips", self.batch_clips), ("clip_len", self.clip_len), ("epochs", self.epochs)] {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.resolution == 0 || self.resolution % 8 != 0 {
            return Err(Error::config("resolution", format!("{} must be a positive multiple of 8", self.resolution)));
        }
        if self.max_steps == Some(0) {
            return Err(Error::config("max_steps", "must be positive"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, eps: self.adam_eps }
    }
}

/// A clip is identified by its video and the labelled frame it ends on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClipIndex {
    pub video: usize,
    pub target: usize,
}

/// Videos plus the clips eligible for sampling.
#[derive(Clone, Debug)]
pub struct TrainSet {
    videos: Vec<VideoRecord>,
    clips: Vec<ClipIndex>,
}

/// Stacked clip tensors for one step.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `[N, 3, T, R, R]`
    pub rgb: Tensor<f32>,
    /// `[N, 1, T, R, R]`
    pub semantic: Tensor<f32>,
    /// `[N, 1, R, R]`
    pub labels: Tensor<f32>,
}

impl Batch {
    pub fn from_samples(samples: &[ClipSample]) -> Result<Self> {
        let stack = |f: fn(&ClipSample) -> &Tensor<f32>| Tensor::stack(&samples.iter().map(|s| f(s).clone()).collect::<Vec<_>>());
        Ok(Batch { rgb: stack(|s| &s.rgb)?, semantic: stack(|s| &s.semantic)?, labels: stack(|s| &s.label)? })
    }

    pub fn input(&self, model: &MsafNet<f32>) -> ModelInput<'_, f32> {
        if model.mode().uses_semantics() {
            ModelInput::Fused { rgb: &self.rgb, semantic: &self.semantic }
        } else {
            ModelInput::Vision { rgb: &self.rgb }
        }
    }
}

impl TrainSet {
    pub fn new(videos: Vec<VideoRecord>, clips: Vec<ClipIndex>) -> Result<Self> {
        if clips.is_empty() {
            return Err(Error::invalid("train", "no clips to train on"));
        }
        for c in &clips {
            let v = videos
                .get(c.video)
                .ok_or_else(|| Error::invalid("train", format!("clip refers to video {} of {}", c.video, videos.len())))?;
            if c.target >= v.num_frames() {
                return Err(Error::invalid("train", format!("frame {} outside {}", c.target, v.id())));
            }
        }
        Ok(TrainSet { videos, clips })
    }

    /// Every frame of every video is a clip target.
    pub fn all_frames(videos: Vec<VideoRecord>) -> Result<Self> {
        let clips = videos
            .iter()
            .enumerate()
            .flat_map(|(v, rec)| (0..rec.num_frames()).map(move |target| ClipIndex { video: v, target }))
            .collect();
        Self::new(videos, clips)
    }

    pub fn videos(&self) -> &[VideoRecord] {
        &self.videos
    }

    pub fn clips(&self) -> &[ClipIndex] {
        &self.clips
    }

    pub fn load(&self, picks: &[ClipIndex], clip_len: usize) -> Result<Batch> {
        let samples: Vec<ClipSample> = picks
            .par_iter()
            .map(|c| sample_clip(&self.videos[c.video], c.target, clip_len))
            .collect::<Result<_>>()?;
        Batch::from_samples(&samples)
    }

    /// Steps for the configured epochs; one epoch covers `clips / clip_len` clips.
    pub fn total_steps(&self, cfg: &TrainConfig) -> usize {
        let per_epoch = (self.clips.len() / cfg.clip_len).max(1).div_ceil(cfg.batch_clips);
        let steps = cfg.epochs * per_epoch;
        cfg.max_steps.map_or(steps, |m| steps.min(m))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// Counts from 1.
    pub step: usize,
    pub loss: f64,
    pub kl: f64,
    pub cc: f64,
}

impl StepRecord {
    pub fn csv_line(&self) -> String {
        format!("{},{},{},{}", self.step, self.loss, self.kl, self.cc)
    }
}

/// Trains `model` in place and returns the per-step loss trace. Each step
/// draws `batch_clips` clips uniformly with replacement; normalization layers
/// use batch statistics and fold them into their running statistics.
pub fn train(
    model: &mut MsafNet<f32>,
    set: &TrainSet,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<Vec<StepRecord>> {
    cfg.validate()?;
    if let Some(v) = set.videos.iter().find(|v| v.width != cfg.resolution || v.height != cfg.resolution) {
        return Err(Error::config(
            "resolution",
            format!("video {} is {}x{}, configured {}", v.id(), v.width, v.height, cfg.resolution),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.adam());
    let steps = set.total_steps(cfg);
    let mut trace = Vec::with_capacity(steps);
    for step in 1..=steps {
        let picks: Vec<ClipIndex> =
            (0..cfg.batch_clips).map(|_| set.clips[rng.gen_range(0..set.clips.len())]).collect();
        let batch = set.load(&picks, cfg.clip_len)?;
        let mut ctx = ForwardCtx::train();
        let pred = model.forward(&mut ctx, batch.input(model))?;
        let terms = total_loss(&batch.labels, &pred)?;
        let loss = terms.total.value().item()? as f64;
        if !loss.is_finite() {
            return Err(Error::degenerate("train", format!("loss became {loss} at step {step}")));
        }
        terms.total.backward()?;
        let grads = ctx.gradients(model)?;
        adam.step(model, &grads)?;
        apply_batch_stats(model, ctx.batch_stats())?;
        let record = StepRecord { step, loss, kl: terms.kl, cc: terms.cc };
        on_step(&record);
        trace.push(record);
    }
    Ok(trace)
}

/// Inference-mode prediction for a loaded batch, `[N, 1, R, R]`.
pub fn predict_clip(model: &MsafNet<f32>, batch: &Batch) -> Result<Tensor<f32>> {
    let mut ctx = ForwardCtx::eval();
    Ok(model.forward(&mut ctx, batch.input(model))?.value().clone())
}
