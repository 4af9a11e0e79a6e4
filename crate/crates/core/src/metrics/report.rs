//! Run-level evaluation: pairs predicted and ground-truth maps frame by frame
//! and aggregates the six scores.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{auc_judd, auc_shuffled, cc, extract_fixations, kl_divergence, nss, sim, Point, SaliencyMap, SHUFFLED_SPLITS};
use crate::data::netpbm::{self, PixelFormat};
use crate::data::video::{frame_file, VideoRecord};
use crate::error::{Error, Result};

/// Column order of the per-frame table.
pub const METRIC_NAMES: [&str; 6] = ["kldiv", "nss", "sim", "cc", "auc_j", "auc_s"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub seed: u64,
    pub splits: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { seed: 0, splits: SHUFFLED_SPLITS }
    }
}

/// Scores of one frame; `None` where the score is undefined for the inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMetrics {
    pub video_id: String,
    pub frame: usize,
    pub kldiv: Option<f64>,
    pub nss: Option<f64>,
    pub sim: Option<f64>,
    pub cc: Option<f64>,
    pub auc_j: Option<f64>,
    pub auc_s: Option<f64>,
}

impl FrameMetrics {
    /// Scores in `METRIC_NAMES` order.
    pub fn values(&self) -> [Option<f64>; 6] {
        [self.kldiv, self.nss, self.sim, self.cc, self.auc_j, self.auc_s]
    }
}

/// Mean of the defined values and the number of undefined ones.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricMean {
    pub mean: Option<f64>,
    pub defined: usize,
    pub undefined: usize,
}

fn mean_of<'a>(rows: impl Iterator<Item = &'a FrameMetrics>) -> [MetricMean; 6] {
    let mut sums = [0.0; 6];
    let mut defined = [0usize; 6];
    let mut total = 0usize;
    for r in rows {
        total += 1;
        for (k, v) in r.values().into_iter().enumerate() {
            if let Some(v) = v {
                sums[k] += v;
                defined[k] += 1;
            }
        }
    }
    std::array::from_fn(|k| MetricMean {
        mean: (defined[k] > 0).then(|| sums[k] / defined[k] as f64),
        defined: defined[k],
        undefined: total - defined[k],
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    /// Sorted by video id, then frame.
    pub frames: Vec<FrameMetrics>,
    /// Ground-truth frames without a prediction.
    pub missing: Vec<(String, usize)>,
}

impl MetricReport {
    fn normalize(&mut self) {
        self.frames.sort_by(|a, b| (&a.video_id, a.frame).cmp(&(&b.video_id, b.frame)));
        self.missing.sort();
    }

    /// Union of two reports; independent of argument order.
    pub fn merge(mut self, other: MetricReport) -> MetricReport {
        self.frames.extend(other.frames);
        self.missing.extend(other.missing);
        self.normalize();
        self
    }

    pub fn global_means(&self) -> [MetricMean; 6] {
        mean_of(self.frames.iter())
    }

    pub fn video_means(&self) -> BTreeMap<String, [MetricMean; 6]> {
        let mut ids: Vec<&str> = self.frames.iter().map(|f| f.video_id.as_str()).collect();
        ids.dedup();
        ids.into_iter()
            .map(|id| (id.to_string(), mean_of(self.frames.iter().filter(|f| f.video_id == id))))
            .collect()
    }

    /// Per-frame table with a header row; undefined scores are empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = format!("video_id,frame,{}\n", METRIC_NAMES.join(","));
        for f in &self.frames {
            write!(out, "{},{}", f.video_id, f.frame).expect("string write");
            for v in f.values() {
                match v {
                    Some(v) => write!(out, ",{v:.6}"),
                    None => write!(out, ","),
                }
                .expect("string write");
            }
            out.push('\n');
        }
        out
    }

    /// `key=value` lines: counts, global means, then per-video means.
    pub fn summary(&self) -> String {
        fn push(out: &mut String, prefix: &str, means: &[MetricMean; 6]) {
            for (name, m) in METRIC_NAMES.iter().zip(means) {
                match m.mean {
                    Some(v) => writeln!(out, "{prefix}{name}={v:.6}"),
                    None => writeln!(out, "{prefix}{name}=undefined"),
                }
                .expect("string write");
                writeln!(out, "{prefix}{name}_undefined={}", m.undefined).expect("string write");
            }
        }
        let mut out = format!("frames_evaluated={}\nframes_missing={}\n", self.frames.len(), self.missing.len());
        push(&mut out, "", &self.global_means());
        for (id, means) in self.video_means() {
            push(&mut out, &format!("video.{id}."), &means);
        }
        out
    }
}

pub fn prediction_path(pred_dir: &Path, video_id: &str, frame: usize) -> PathBuf {
    pred_dir.join(video_id).join(frame_file(frame, "pgm"))
}

fn load_prediction(path: &Path, width: usize, height: usize) -> Result<SaliencyMap> {
    let img = netpbm::read_as(path, PixelFormat::Gray)?;
    if (img.width, img.height) != (width, height) {
        return Err(Error::shape(
            "evaluate_run",
            format!("{} is {}x{}, ground truth is {width}x{height}", path.display(), img.width, img.height),
        ));
    }
    SaliencyMap::new(width, height, img.scaled(255.0))
}

/// Fixations of every frame of one video; frames with an all-zero map have none.
fn video_fixations(video: &VideoRecord) -> Result<Vec<Vec<Point>>> {
    (0..video.num_frames())
        .map(|f| {
            let map = video.load_attention(f)?;
            Ok(if map.max_value() > 0.0 { extract_fixations(&map)? } else { Vec::new() })
        })
        .collect()
}

fn frame_seed(seed: u64, video: usize, frame: usize) -> u64 {
    seed ^ ((video as u64) << 32 | frame as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Scores every ground-truth frame that has a prediction at
/// `<pred_dir>/<video_id>/%06d.pgm`. NSS and both AUCs use fixations
/// extracted from the ground truth; AUC-S draws negatives from the fixations
/// of all other videos. Frames without a prediction are listed as missing.
pub fn evaluate_run(pred_dir: &Path, videos: &[VideoRecord], opts: &EvalOptions) -> Result<MetricReport> {
    if opts.splits == 0 {
        return Err(Error::invalid("evaluate_run", "splits must be positive"));
    }
    let fixations: Vec<Vec<Vec<Point>>> = videos.par_iter().map(video_fixations).collect::<Result<_>>()?;
    let per_video: Vec<Vec<Point>> = fixations.iter().map(|v| v.concat()).collect();
    let jobs: Vec<(usize, usize)> =
        videos.iter().enumerate().flat_map(|(v, rec)| (0..rec.num_frames()).map(move |f| (v, f))).collect();
    let pools: Vec<Vec<Point>> = (0..videos.len())
        .map(|v| per_video.iter().enumerate().filter(|(o, _)| *o != v).flat_map(|(_, p)| p.iter().copied()).collect())
        .collect();

    let results: Vec<Result<Option<FrameMetrics>>> = jobs
        .par_iter()
        .map(|&(v, f)| {
            let rec = &videos[v];
            let path = prediction_path(pred_dir, rec.id(), f);
            if !path.is_file() {
                return Ok(None);
            }
            let pred = load_prediction(&path, rec.width, rec.height)?;
            let gt = rec.load_attention(f)?;
            let fix = &fixations[v][f];
            let with_fix = |score: &dyn Fn(&[Point]) -> Result<f64>| {
                if fix.is_empty() { None } else { score(fix).ok() }
            };
            Ok(Some(FrameMetrics {
                video_id: rec.id().to_string(),
                frame: f,
                kldiv: kl_divergence(&gt, &pred).ok(),
                nss: with_fix(&|p| nss(p, &pred)),
                sim: sim(&gt, &pred).ok(),
                cc: cc(&gt, &pred).ok(),
                auc_j: with_fix(&|p| auc_judd(p, &pred)),
                auc_s: with_fix(&|p| auc_shuffled(p, &pred, &pools[v], opts.splits, frame_seed(opts.seed, v, f))),
            }))
        })
        .collect();

    let mut report = MetricReport::default();
    for (&(v, f), r) in jobs.iter().zip(results) {
        match r? {
            Some(m) => report.frames.push(m),
            None => report.missing.push((videos[v].id().to_string(), f)),
        }
    }
    if report.frames.is_empty() {
        return Err(Error::invalid("evaluate_run", "no prediction matches any ground-truth frame"));
    }
    report.normalize();
    Ok(report)
}
