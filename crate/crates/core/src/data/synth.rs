//! Deterministic synthetic accident videos.
//!
//! Each video shows a gradient background with noise, a small static
//! distractor and a square crash object that enters the view and stops near
//! the centre. "crossing" objects come in from the left or right edge at
//! mid-height, "hitting" objects from the bottom centre. The object is placed
//! so that the first frame with at least half of it visible is exactly
//! `aw_start`. The attention map is a Gaussian on the distractor until
//! `aw_start + attention_delay`, then on the centre of the visible object.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::annotation::{AccidentAnnotation, BehaviorType, CrashBox, FPS, NUM_CATEGORIES};
use super::netpbm::Image;
use super::video::{frame_file, VideoRecord, ANNOTATION_FILE};
use crate::error::{Error, Result};

pub const CLASS_ROAD: u8 = 0;
pub const CLASS_DISTRACTOR: u8 = 7;
pub const CLASS_SKY: u8 = 10;
pub const CLASS_PEDESTRIAN: u8 = 11;
pub const CLASS_CAR: u8 = 13;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_videos: usize,
    pub num_frames: usize,
    /// Square frame side in pixels.
    pub resolution: usize,
    /// Pixels per frame.
    pub object_speed: usize,
    pub aw_start: usize,
    pub aw_length: usize,
    /// Frames between the window start and the attention moving onto the object.
    pub attention_delay: usize,
    pub sigma: f64,
    /// Uniform noise amplitude as a fraction of full scale.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            num_videos: 12,
            num_frames: 40,
            resolution: 64,
            object_speed: 2,
            aw_start: 12,
            aw_length: 16,
            attention_delay: 7,
            sigma: 4.0,
            noise: 0.05,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, detail: String| Err(Error::config(field, detail));
        if self.num_videos == 0 {
            return fail("num_videos", "must be positive".into());
        }
        if self.resolution < 16 || self.resolution % 8 != 0 {
            return fail("resolution", format!("{} must be a multiple of 8 and at least 16", self.resolution));
        }
        if self.object_speed == 0 {
            return fail("object_speed", "must be positive".into());
        }
        if self.aw_start + self.attention_delay >= self.num_frames {
            return fail(
                "attention_delay",
                format!(
                    "aw_start {} + attention_delay {} must be below num_frames {}",
                    self.aw_start, self.attention_delay, self.num_frames
                ),
            );
        }
        if self.aw_length == 0 || self.aw_start + self.aw_length > self.num_frames {
            return fail(
                "aw_length",
                format!(
                    "{} must be positive with aw_start {} + aw_length at most num_frames {}",
                    self.aw_length, self.aw_start, self.num_frames
                ),
            );
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return fail("sigma", format!("{} must be positive", self.sigma));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return fail("noise", format!("{} outside [0, 1]", self.noise));
        }
        Ok(())
    }

    pub fn object_size(&self) -> usize {
        self.resolution / 4
    }

    pub fn behavior(&self, video: usize) -> BehaviorType {
        if video % 2 == 0 {
            BehaviorType::Crossing
        } else {
            BehaviorType::Hitting
        }
    }

    /// Unclipped top-left corner of the object on `frame`.
    pub fn object_position(&self, video: usize, frame: usize) -> (i64, i64) {
        let (res, s) = (self.resolution as i64, self.object_size() as i64);
        let travelled = (frame as i64 - self.aw_start as i64) * self.object_speed as i64;
        let stop = res / 2 - s / 2;
        match self.behavior(video) {
            BehaviorType::Hitting => (stop, (res - s / 2 - travelled).max(stop)),
            _ if (video / 2) % 2 == 0 => ((-(s / 2) + travelled).min(stop), stop),
            _ => ((res - s / 2 - travelled).max(stop), stop),
        }
    }

    /// Visible part of the object as `(x, y, w, h)`, if any.
    pub fn visible_box(&self, video: usize, frame: usize) -> Option<(usize, usize, usize, usize)> {
        let (x, y) = self.object_position(video, frame);
        let (res, s) = (self.resolution as i64, self.object_size() as i64);
        let (x0, y0) = (x.max(0), y.max(0));
        let (x1, y1) = ((x + s).min(res), (y + s).min(res));
        (x1 > x0 && y1 > y0).then(|| (x0 as usize, y0 as usize, (x1 - x0) as usize, (y1 - y0) as usize))
    }

    /// Centre of the static distractor.
    pub fn distractor_center(&self) -> (usize, usize) {
        (self.resolution / 2, self.resolution / 4)
    }

    /// Where the attention Gaussian is centred on `frame`.
    pub fn attention_center(&self, video: usize, frame: usize) -> (usize, usize) {
        if frame < self.aw_start + self.attention_delay {
            return self.distractor_center();
        }
        let (x, y, w, h) = self.visible_box(video, frame).expect("object visible after window start");
        (x + (w - 1) / 2, y + (h - 1) / 2)
    }

    pub fn annotation(&self, video: usize) -> AccidentAnnotation {
        let crash_boxes = (0..self.num_frames)
            .filter_map(|f| self.visible_box(video, f).map(|(x, y, w, h)| CrashBox { frame: f, x, y, w, h }))
            .collect();
        let behavior_type = self.behavior(video);
        AccidentAnnotation {
            video_id: format!("synth_{video:03}"),
            category_id: 1 + (video as u32 % NUM_CATEGORIES),
            ego_involved: behavior_type == BehaviorType::Hitting,
            num_frames: self.num_frames,
            fps: FPS,
            aw_start: self.aw_start,
            aw_end: self.aw_start + self.aw_length - 1,
            behavior_type,
            crash_boxes,
        }
    }

    fn frame_rng(&self, video: usize, frame: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((video as u64) << 32) | frame as u64);
        rng
    }

    /// RGB frame, semantic class map and attention map for one frame.
    pub fn render(&self, video: usize, frame: usize) -> (Image, Image, Image) {
        let res = self.resolution;
        let mut rng = self.frame_rng(video, frame);
        let amplitude = self.noise * 255.0;
        let object = self.visible_box(video, frame);
        let (dcx, dcy) = self.distractor_center();
        let half = (self.object_size() / 8).max(1);
        let in_distractor = |x: usize, y: usize| x.abs_diff(dcx) < half && y.abs_diff(dcy) < half;
        let in_object = |x: usize, y: usize| {
            object.is_some_and(|(ox, oy, w, h)| x >= ox && x < ox + w && y >= oy && y < oy + h)
        };
        let object_rgb = match self.behavior(video) {
            BehaviorType::Hitting => [40.0, 60.0, 220.0],
            _ => [220.0, 40.0, 40.0],
        };
        let object_class = match self.behavior(video) {
            BehaviorType::Hitting => CLASS_CAR,
            _ => CLASS_PEDESTRIAN,
        };
        let mut rgb = Vec::with_capacity(res * res * 3);
        let mut sem = Vec::with_capacity(res * res);
        for y in 0..res {
            let shade = 60.0 + 120.0 * y as f64 / res as f64;
            for x in 0..res {
                let (base, class) = if in_object(x, y) {
                    (object_rgb, object_class)
                } else if in_distractor(x, y) {
                    ([230.0, 210.0, 30.0], CLASS_DISTRACTOR)
                } else if y < res / 3 {
                    ([shade * 0.7, shade * 0.85, shade + 60.0], CLASS_SKY)
                } else {
                    ([shade * 0.8, shade * 0.8, shade * 0.8], CLASS_ROAD)
                };
                for b in base {
                    let n = if amplitude > 0.0 { rng.gen_range(-amplitude..=amplitude) } else { 0.0 };
                    rgb.push((b + n).round().clamp(0.0, 255.0) as u8);
                }
                sem.push(class);
            }
        }
        let (cx, cy) = self.attention_center(video, frame);
        let two_s2 = 2.0 * self.sigma * self.sigma;
        let attention = (0..res * res)
            .map(|i| {
                let (dx, dy) = ((i % res) as f64 - cx as f64, (i / res) as f64 - cy as f64);
                (255.0 * (-(dx * dx + dy * dy) / two_s2).exp()).round() as u8
            })
            .collect();
        (
            Image::rgb(res, res, rgb).expect("sized"),
            Image::gray(res, res, sem).expect("sized"),
            Image::gray(res, res, attention).expect("sized"),
        )
    }
}

fn write_video(cfg: &SynthConfig, video: usize, out_dir: &Path) -> Result<()> {
    let ann = cfg.annotation(video);
    let root = out_dir.join(&ann.video_id);
    for sub in ["frames", "semantic", "attention"] {
        let d = root.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    for f in 0..cfg.num_frames {
        let (rgb, sem, att) = cfg.render(video, f);
        rgb.write(&root.join("frames").join(frame_file(f, "ppm")))?;
        sem.write(&root.join("semantic").join(frame_file(f, "pgm")))?;
        att.write(&root.join("attention").join(frame_file(f, "pgm")))?;
    }
    let path = root.join(ANNOTATION_FILE);
    std::fs::write(&path, ann.to_json()).map_err(|e| Error::io(&path, e))
}

/// Writes every video under `out_dir/<video_id>/` and returns the catalog.
pub fn synth_generate(cfg: &SynthConfig, out_dir: &Path) -> Result<Vec<VideoRecord>> {
    cfg.validate()?;
    (0..cfg.num_videos).into_par_iter().try_for_each(|v| write_video(cfg, v, out_dir))?;
    (0..cfg.num_videos)
        .map(|v| VideoRecord::open(&out_dir.join(cfg.annotation(v).video_id)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn visible_fraction(cfg: &SynthConfig, video: usize, frame: usize) -> f64 {
        let s = cfg.object_size();
        cfg.visible_box(video, frame).map_or(0.0, |(_, _, w, h)| (w * h) as f64 / (s * s) as f64)
    }

    #[test]
    fn half_visibility_rule() {
        for aw_start in [0, 1, 5, 12] {
            let cfg = SynthConfig { aw_start, ..SynthConfig::default() };
            for video in 0..4 {
                let first = (0..cfg.num_frames).find(|&f| visible_fraction(&cfg, video, f) >= 0.5);
                assert_eq!(first, Some(aw_start), "video {video}");
            }
        }
    }

    #[test]
    fn object_stops_inside_and_distractor_stays_clear() {
        let cfg = SynthConfig::default();
        for video in 0..4 {
            assert_eq!(visible_fraction(&cfg, video, cfg.num_frames - 1), 1.0);
            let (dx, dy) = cfg.distractor_center();
            for f in 0..cfg.num_frames {
                if let Some((x, y, w, h)) = cfg.visible_box(video, f) {
                    assert!(!(dx >= x && dx < x + w && dy >= y && dy < y + h));
                }
            }
        }
    }

    #[test]
    fn attention_mass_matches_gaussian() {
        let cfg = SynthConfig::default();
        let (_, _, att) = cfg.render(0, 0);
        let mass: f64 = att.data.iter().map(|&b| b as f64 / 255.0).sum();
        let analytic = 2.0 * std::f64::consts::PI * cfg.sigma * cfg.sigma;
        assert!((mass - analytic).abs() / analytic < 0.01, "{mass} vs {analytic}");
    }

    #[test]
    fn invalid_config_names_field() {
        let cases = [
            (SynthConfig { attention_delay: 40, ..SynthConfig::default() }, "attention_delay"),
            (SynthConfig { aw_length: 29, ..SynthConfig::default() }, "aw_length"),
        ];
        for (cfg, name) in cases {
            match cfg.validate() {
                Err(Error::Config { field, .. }) => assert_eq!(field, name),
                other => panic!("{other:?}"),
            }
        }
        assert!(SynthConfig { aw_length: 28, ..SynthConfig::default() }.validate().is_ok());
    }
}
