//! Accident-level analysis: attention delay relative to the accident window,
//! behavior-type average maps and window length statistics.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::data::annotation::{AccidentAnnotation, BehaviorType};
use crate::data::netpbm::{self, PixelFormat};
use crate::data::video::{frame_file, VideoRecord};
use crate::error::{Error, Result};
use crate::metrics::{Point, SaliencyMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AdfSource {
    HumanGt,
    Model,
}

impl AdfSource {
    pub fn as_str(self) -> &'static str {
        match self {
            AdfSource::HumanGt => "human_gt",
            AdfSource::Model => "model",
        }
    }
}

impl std::str::FromStr for AdfSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "human_gt" => Ok(AdfSource::HumanGt),
            "model" => Ok(AdfSource::Model),
            _ => Err(Error::config("source", format!("{s:?} is not human_gt or model"))),
        }
    }
}

/// Frame offset of the first attention hit on the crash object.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdfRecord {
    pub video_id: String,
    pub category_id: u32,
    pub source: AdfSource,
    pub first_hit_frame: Option<usize>,
    /// `first_hit_frame - aw_start`; negative when attention arrives early.
    pub adf: Option<i64>,
}

/// Global maximum, first in raster order.
pub fn peak_location(map: &SaliencyMap) -> Point {
    let mut best = 0;
    for (i, &v) in map.values().iter().enumerate() {
        if v > map.values()[best] {
            best = i;
        }
    }
    Point::new(best % map.width(), best / map.width())
}

fn check_boxes(ann: &AccidentAnnotation) -> Result<()> {
    if ann.crash_boxes.is_empty() {
        return Err(Error::invalid("compute_adf", format!("{} has no crash-object boxes", ann.video_id)));
    }
    Ok(())
}

fn record(ann: &AccidentAnnotation, source: AdfSource, first_hit_frame: Option<usize>) -> AdfRecord {
    AdfRecord {
        video_id: ann.video_id.clone(),
        category_id: ann.category_id,
        source,
        first_hit_frame,
        adf: first_hit_frame.map(|f| f as i64 - ann.aw_start as i64),
    }
}

fn hits(ann: &AccidentAnnotation, frame: usize, peak: Point) -> bool {
    ann.boxes_on(frame).any(|b| b.contains(peak.x, peak.y))
}

/// Scans the whole video for the first frame whose peak lies in a crash box.
pub fn compute_adf(maps: &[SaliencyMap], ann: &AccidentAnnotation, source: AdfSource) -> Result<AdfRecord> {
    check_boxes(ann)?;
    if maps.len() != ann.num_frames {
        return Err(Error::shape(
            "compute_adf",
            format!("{} maps for {} frames of {}", maps.len(), ann.num_frames, ann.video_id),
        ));
    }
    let first = (0..maps.len()).find(|&f| hits(ann, f, peak_location(&maps[f])));
    Ok(record(ann, source, first))
}

/// [`compute_adf`] over `<dir>/%06d.pgm`, reading frames only up to the first hit.
pub fn compute_adf_from_dir(dir: &Path, ann: &AccidentAnnotation, source: AdfSource) -> Result<AdfRecord> {
    check_boxes(ann)?;
    for f in 0..ann.num_frames {
        if ann.boxes_on(f).next().is_none() {
            continue;
        }
        let img = netpbm::read_as(&dir.join(frame_file(f, "pgm")), PixelFormat::Gray)?;
        let map = SaliencyMap::new(img.width, img.height, img.scaled(255.0))?;
        if hits(ann, f, peak_location(&map)) {
            return Ok(record(ann, source, Some(f)));
        }
    }
    Ok(record(ann, source, None))
}

/// Per-category, per-source aggregate over hits.
#[derive(Clone, Debug, PartialEq)]
pub struct AdfSummaryRow {
    pub category_id: u32,
    pub source: AdfSource,
    pub mean_adf: Option<f64>,
    pub hits: usize,
    pub misses: usize,
}

pub const ADF_CSV_HEADER: &str = "category_id,source,mean_adf,hits,misses";

/// Rows sorted by ascending mean; groups without hits go last.
pub fn summarize_adf(records: &[AdfRecord]) -> Vec<AdfSummaryRow> {
    let mut groups: BTreeMap<(u32, AdfSource), (i64, usize, usize)> = BTreeMap::new();
    for r in records {
        let g = groups.entry((r.category_id, r.source)).or_default();
        match r.adf {
            Some(a) => {
                g.0 += a;
                g.1 += 1;
            }
            None => g.2 += 1,
        }
    }
    let mut rows: Vec<AdfSummaryRow> = groups
        .into_iter()
        .map(|((category_id, source), (sum, hits, misses))| AdfSummaryRow {
            category_id,
            source,
            mean_adf: (hits > 0).then(|| sum as f64 / hits as f64),
            hits,
            misses,
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |r: &AdfSummaryRow| r.mean_adf.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b)).then(a.category_id.cmp(&b.category_id)).then(a.source.cmp(&b.source))
    });
    rows
}

pub fn adf_csv(rows: &[AdfSummaryRow]) -> String {
    let mut out = format!("{ADF_CSV_HEADER}\n");
    for r in rows {
        let mean = r.mean_adf.map_or(String::new(), |m| format!("{m:.4}"));
        out.push_str(&format!("{},{},{},{},{}\n", r.category_id, r.source.as_str(), mean, r.hits, r.misses));
    }
    out
}

fn scaled_to_unit_peak(width: usize, height: usize, sum: Vec<f64>, count: usize) -> Result<SaliencyMap> {
    let mean = SaliencyMap::new(width, height, sum)?.map(|v| v / count as f64);
    let peak = mean.max_value();
    Ok(if peak > 0.0 { mean.map(|v| v / peak) } else { mean })
}

fn accumulate(acc: &mut [f64], map: &SaliencyMap) {
    acc.iter_mut().zip(map.values()).for_each(|(a, v)| *a += v);
}

/// Pixel-wise mean of equally sized maps, scaled so the maximum is 1.
/// An all-zero mean is returned unscaled.
pub fn mean_map(maps: &[SaliencyMap]) -> Result<SaliencyMap> {
    let first = maps.first().ok_or_else(|| Error::invalid("average_attention_map", "no maps selected"))?;
    let mut acc = vec![0.0; first.values().len()];
    for m in maps {
        if (m.width(), m.height()) != (first.width(), first.height()) {
            return Err(Error::shape("average_attention_map", "maps differ in size"));
        }
        accumulate(&mut acc, m);
    }
    scaled_to_unit_peak(first.width(), first.height(), acc, maps.len())
}

/// Mean ground-truth attention over every frame of the videos showing
/// `behavior`, scaled so the maximum is 1.
pub fn average_attention_map(videos: &[VideoRecord], behavior: BehaviorType) -> Result<SaliencyMap> {
    let selected: Vec<&VideoRecord> = videos.iter().filter(|v| v.annotation.behavior_type == behavior).collect();
    let first = selected
        .first()
        .ok_or_else(|| Error::invalid("average_attention_map", format!("no {} videos", behavior.as_str())))?;
    let (w, h) = (first.width, first.height);
    if selected.iter().any(|v| (v.width, v.height) != (w, h)) {
        return Err(Error::shape("average_attention_map", "videos differ in resolution"));
    }
    let sums: Vec<Vec<f64>> = selected
        .par_iter()
        .map(|v| {
            let mut acc = vec![0.0; w * h];
            for f in 0..v.num_frames() {
                accumulate(&mut acc, &v.load_attention(f)?);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![0.0; w * h];
    for s in &sums {
        total.iter_mut().zip(s).for_each(|(a, v)| *a += v);
    }
    let frames = selected.iter().map(|v| v.num_frames()).sum();
    scaled_to_unit_peak(w, h, total, frames)
}

/// Horizontal and vertical variance of a map treated as a mass distribution.
pub fn spatial_spread(map: &SaliencyMap) -> Result<(f64, f64)> {
    let total: f64 = map.values().iter().sum();
    if total <= 0.0 {
        return Err(Error::degenerate("spatial_spread", "map has no mass"));
    }
    let (mut mx, mut my) = (0.0, 0.0);
    for (i, &v) in map.values().iter().enumerate() {
        mx += v * (i % map.width()) as f64;
        my += v * (i / map.width()) as f64;
    }
    let (mx, my) = (mx / total, my / total);
    let (mut vx, mut vy) = (0.0, 0.0);
    for (i, &v) in map.values().iter().enumerate() {
        vx += v * ((i % map.width()) as f64 - mx).powi(2);
        vy += v * ((i / map.width()) as f64 - my).powi(2);
    }
    Ok((vx / total, vy / total))
}

/// Phase lengths summed over a set of annotations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TemporalStats {
    pub videos: usize,
    pub total_frames: u64,
    pub before: u64,
    pub window: u64,
    pub after: u64,
}

impl TemporalStats {
    /// Whole-frame averages per video, rounded down: total, before, window, after.
    pub fn average_frames(&self) -> [u64; 4] {
        let n = self.videos as u64;
        [self.total_frames / n, self.before / n, self.window / n, self.after / n]
    }

    /// Each phase's average as a percentage of the average video length.
    pub fn percent_of_average(&self) -> [f64; 3] {
        let [t, b, w, a] = self.average_frames().map(|v| v as f64);
        [100.0 * b / t, 100.0 * w / t, 100.0 * a / t]
    }

    /// Each phase's share of all frames; sums to 100.
    pub fn percent_of_total(&self) -> [f64; 3] {
        let t = self.total_frames as f64;
        [100.0 * self.before as f64 / t, 100.0 * self.window as f64 / t, 100.0 * self.after as f64 / t]
    }

    /// Two-row table: totals and per-video averages with percentages.
    pub fn to_csv(&self) -> String {
        let avg = self.average_frames();
        let pct = self.percent_of_average();
        let share = self.percent_of_total();
        format!(
            "row,videos,total,before_aw,aw,after_aw\n\
             total_frames,{},{},{},{},{}\n\
             average_frames,{},{},{},{},{}\n\
             percent_of_average,{},100.0,{:.1},{:.1},{:.1}\n\
             percent_of_total,{},100.0,{:.1},{:.1},{:.1}\n",
            self.videos,
            self.total_frames,
            self.before,
            self.window,
            self.after,
            self.videos,
            avg[0],
            avg[1],
            avg[2],
            avg[3],
            self.videos,
            pct[0],
            pct[1],
            pct[2],
            self.videos,
            share[0],
            share[1],
            share[2],
        )
    }
}

pub fn temporal_stats(annotations: &[AccidentAnnotation]) -> Result<TemporalStats> {
    if annotations.is_empty() {
        return Err(Error::invalid("temporal_stats", "no annotations"));
    }
    let mut s = TemporalStats { videos: annotations.len(), total_frames: 0, before: 0, window: 0, after: 0 };
    for a in annotations {
        a.validate()?;
        let p = a.phases();
        s.total_frames += a.num_frames as u64;
        s.before += p.before as u64;
        s.window += p.window as u64;
        s.after += p.after as u64;
    }
    Ok(s)
}
