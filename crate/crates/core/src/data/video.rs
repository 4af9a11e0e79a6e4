//! On-disk videos and clip assembly.
//!
//! Layout per video: `frames/%06d.ppm`, `semantic/%06d.pgm`,
//! `attention/%06d.pgm`, `annotation.json`.

use std::path::{Path, PathBuf};

use super::annotation::{parse_annotation, AccidentAnnotation};
use super::netpbm::{self, Image, PixelFormat};
use crate::error::{Error, Result};
use crate::metrics::SaliencyMap;
use crate::tensor::Tensor;

/// Semantic maps hold class ids `0..SEMANTIC_CLASSES`.
pub const SEMANTIC_CLASSES: usize = 19;
pub const ANNOTATION_FILE: &str = "annotation.json";

pub fn frame_file(index: usize, ext: &str) -> String {
    format!("{index:06}.{ext}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoRecord {
    pub root: PathBuf,
    pub annotation: AccidentAnnotation,
    pub width: usize,
    pub height: usize,
}

impl VideoRecord {
    /// Reads the annotation, checks that all three per-frame sequences are
    /// complete and takes the resolution from the first frame.
    pub fn open(root: &Path) -> Result<Self> {
        let ann_path = root.join(ANNOTATION_FILE);
        let bytes = std::fs::read(&ann_path).map_err(|e| Error::io(&ann_path, e))?;
        let annotation = parse_annotation(&bytes)?;
        let mut rec = VideoRecord { root: root.to_path_buf(), annotation, width: 0, height: 0 };
        for i in 0..rec.annotation.num_frames {
            for p in [rec.frame_path(i), rec.semantic_path(i), rec.attention_path(i)] {
                if !p.is_file() {
                    return Err(Error::invalid("video", format!("missing {}", p.display())));
                }
            }
        }
        let first = netpbm::read_as(&rec.frame_path(0), PixelFormat::Rgb)?;
        (rec.width, rec.height) = (first.width, first.height);
        rec.annotation.validate_boxes_within(rec.width, rec.height)?;
        Ok(rec)
    }

    pub fn id(&self) -> &str {
        &self.annotation.video_id
    }

    pub fn num_frames(&self) -> usize {
        self.annotation.num_frames
    }

    pub fn frame_path(&self, i: usize) -> PathBuf {
        self.root.join("frames").join(frame_file(i, "ppm"))
    }

    pub fn semantic_path(&self, i: usize) -> PathBuf {
        self.root.join("semantic").join(frame_file(i, "pgm"))
    }

    pub fn attention_path(&self, i: usize) -> PathBuf {
        self.root.join("attention").join(frame_file(i, "pgm"))
    }

    fn checked(&self, path: &Path, format: PixelFormat) -> Result<Image> {
        let img = netpbm::read_as(path, format)?;
        if (img.width, img.height) != (self.width, self.height) {
            return Err(Error::shape(
                "video",
                format!("{} is {}x{}, video is {}x{}", path.display(), img.width, img.height, self.width, self.height),
            ));
        }
        Ok(img)
    }

    pub fn load_frame(&self, i: usize) -> Result<Image> {
        self.checked(&self.frame_path(i), PixelFormat::Rgb)
    }

    /// Class ids scaled to [0, 1].
    pub fn load_semantic(&self, i: usize) -> Result<Vec<f64>> {
        Ok(self.checked(&self.semantic_path(i), PixelFormat::Gray)?.scaled((SEMANTIC_CLASSES - 1) as f64))
    }

    /// Ground-truth attention scaled to [0, 1].
    pub fn load_attention(&self, i: usize) -> Result<SaliencyMap> {
        let img = self.checked(&self.attention_path(i), PixelFormat::Gray)?;
        SaliencyMap::new(img.width, img.height, img.scaled(255.0))
    }
}

/// Every subdirectory of `dir` holding an annotation, sorted by name.
pub fn open_dataset(dir: &Path) -> Result<Vec<VideoRecord>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut roots = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.join(ANNOTATION_FILE).is_file() {
            roots.push(path);
        }
    }
    roots.sort();
    roots.iter().map(|r| VideoRecord::open(r)).collect()
}

/// Frame indices of the clip ending at `target`, front-padded with frame 0.
pub fn clip_frame_indices(target: usize, len: usize) -> Vec<usize> {
    (0..len).map(|k| (target + k + 1).saturating_sub(len)).collect()
}

/// `len` consecutive frames ending at a labelled frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipSample {
    pub video_id: String,
    pub target_frame: usize,
    pub frames: Vec<usize>,
    /// `[3, T, H, W]` in [0, 1].
    pub rgb: Tensor<f32>,
    /// `[1, T, H, W]` in [0, 1].
    pub semantic: Tensor<f32>,
    /// `[1, H, W]` attention of the target frame.
    pub label: Tensor<f32>,
    pub label_path: PathBuf,
}

pub fn sample_clip(video: &VideoRecord, target: usize, len: usize) -> Result<ClipSample> {
    if target >= video.num_frames() {
        return Err(Error::invalid(
            "sample_clip",
            format!("target frame {target} outside 0..{} of {}", video.num_frames(), video.id()),
        ));
    }
    if len == 0 {
        return Err(Error::invalid("sample_clip", "clip length must be positive"));
    }
    let (w, h) = (video.width, video.height);
    let plane = w * h;
    let frames = clip_frame_indices(target, len);
    let mut rgb = vec![0f32; 3 * len * plane];
    let mut semantic = vec![0f32; len * plane];
    for (t, &f) in frames.iter().enumerate() {
        let img = video.load_frame(f)?;
        for c in 0..3 {
            let dst = &mut rgb[(c * len + t) * plane..(c * len + t + 1) * plane];
            for (i, d) in dst.iter_mut().enumerate() {
                *d = img.data[i * 3 + c] as f32 / 255.0;
            }
        }
        for (d, s) in semantic[t * plane..(t + 1) * plane].iter_mut().zip(video.load_semantic(f)?) {
            *d = s as f32;
        }
    }
    let label = video.load_attention(target)?.values().iter().map(|&v| v as f32).collect();
    Ok(ClipSample {
        video_id: video.id().to_string(),
        target_frame: target,
        frames,
        rgb: Tensor::from_vec([3, len, h, w], rgb)?,
        semantic: Tensor::from_vec([1, len, h, w], semantic)?,
        label: Tensor::from_vec([1, h, w], label)?,
        label_path: video.attention_path(target),
    })
}
