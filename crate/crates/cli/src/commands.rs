//! One function per subcommand. Each resolves its settings, writes its
//! outputs under `out`, then the resolved settings and the manifest.

use std::path::{Path, PathBuf};

use msafnet_core::analysis::{
    adf_csv, average_attention_map, compute_adf_from_dir, summarize_adf, temporal_stats, AdfRecord, AdfSource,
};
use msafnet_core::data::{
    frame_file, make_splits, open_dataset, parse_annotation, synth_generate, AccidentAnnotation, BehaviorType, Image, SynthConfig,
    VideoRecord, ANNOTATION_FILE,
};
use msafnet_core::metrics::report::prediction_path;
use msafnet_core::metrics::{evaluate_run, EvalOptions, SaliencyMap};
use msafnet_core::model::{predict_clip, train, ClipIndex, FusionMode, ModelConfig, MsafNet, TrainConfig, TrainSet, TRACE_HEADER};
use msafnet_core::nn::checkpoint;

use crate::error::{CliError, CliResult, Stage};
use crate::manifest::write_manifest;
use crate::overlay::overlay;
use crate::settings::{KeyDecl, Settings, RESOLVED_FILE};

/// Writes a line to stdout; a closed pipe is not an error.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRACE_FILE: &str = "trace.csv";
pub const OVERLAY_DIR: &str = "overlays";

/// Flag values keyed by setting name; `None` leaves the setting to the
/// config file or its default.
pub type Overrides = Vec<(&'static str, Option<String>)>;

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::failure(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::failure(format!("{}: {e}", path.display())))
}

fn finish(settings: &Settings, out: &Path) -> CliResult<()> {
    write_file(&out.join(RESOLVED_FILE), settings.to_config_text())?;
    write_manifest(out)
}

fn existing_dir(settings: &Settings, key: &str) -> CliResult<PathBuf> {
    let dir = settings.path(key);
    if !dir.is_dir() {
        return Err(CliError::usage(format!("`{key}`: {} is not a directory", dir.display())));
    }
    Ok(dir)
}

fn dataset(settings: &Settings, key: &str) -> CliResult<Vec<VideoRecord>> {
    let dir = existing_dir(settings, key)?;
    let videos = open_dataset(&dir).input()?;
    if videos.is_empty() {
        return Err(CliError::usage(format!("`{key}`: no videos with {ANNOTATION_FILE} under {}", dir.display())));
    }
    Ok(videos)
}

/// Keeps the videos of one split; `all` keeps everything.
fn select_split(videos: Vec<VideoRecord>, split: &str, seed: u64) -> CliResult<Vec<VideoRecord>> {
    if split == "all" {
        return Ok(videos);
    }
    let catalog: Vec<(String, u32)> = videos.iter().map(|v| (v.id().to_string(), v.annotation.category_id)).collect();
    let splits = make_splits(&catalog, seed).input()?;
    let ids = match split {
        "train" => splits.train,
        "val" => splits.val,
        "test" => splits.test,
        other => return Err(CliError::usage(format!("invalid setting `split` = {other:?}: use all, train, val or test"))),
    };
    let kept: Vec<VideoRecord> = videos.into_iter().filter(|v| ids.iter().any(|id| id == v.id())).collect();
    if kept.is_empty() {
        return Err(CliError::usage(format!("split {split} is empty")));
    }
    Ok(kept)
}

/// Annotations from a `.jsonl` file, or from a directory holding `.json` /
/// `.jsonl` files and video directories with an annotation file. Sorted by id.
pub fn load_annotations(path: &Path) -> CliResult<Vec<AccidentAnnotation>> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())));
    let parse_lines = |p: &Path, text: &str| -> CliResult<Vec<AccidentAnnotation>> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| parse_annotation(l.as_bytes()).map_err(|e| CliError::usage(format!("{}:{}: {e}", p.display(), n + 1))))
            .collect()
    };
    let parse_one =
        |p: &Path| parse_annotation(read(p)?.as_bytes()).map_err(|e| CliError::usage(format!("{}: {e}", p.display())));
    let is_ext = |p: &Path, ext: &str| p.extension().is_some_and(|e| e == ext);

    let mut anns = Vec::new();
    if path.is_file() {
        anns = parse_lines(path, &read(path)?)?;
    } else if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        entries.sort();
        for entry in entries {
            if entry.is_dir() && entry.join(ANNOTATION_FILE).is_file() {
                anns.push(parse_one(&entry.join(ANNOTATION_FILE))?);
            } else if entry.is_file() && is_ext(&entry, "jsonl") {
                anns.extend(parse_lines(&entry, &read(&entry)?)?);
            } else if entry.is_file() && is_ext(&entry, "json") {
                anns.push(parse_one(&entry)?);
            }
        }
    } else {
        return Err(CliError::usage(format!("{} does not exist", path.display())));
    }
    if anns.is_empty() {
        return Err(CliError::usage(format!("no annotations found in {}", path.display())));
    }
    anns.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    if let Some(w) = anns.windows(2).find(|w| w[0].video_id == w[1].video_id) {
        return Err(CliError::usage(format!("duplicate annotation for {}", w[0].video_id)));
    }
    Ok(anns)
}

fn gray_from_unit(width: usize, height: usize, values: &[f64]) -> msafnet_core::Result<Image> {
    Image::gray(width, height, values.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect())
}

// ---------------------------------------------------------------------------

pub const SYNTH_KEYS: &[KeyDecl] = &[
    ("out", None),
    ("seed", Some("7")),
    ("num_videos", Some("12")),
    ("num_frames", Some("40")),
    ("resolution", Some("64")),
    ("object_speed", Some("2")),
    ("aw_start", Some("12")),
    ("aw_length", Some("16")),
    ("attention_delay", Some("7")),
    ("sigma", Some("4")),
    ("noise", Some("0.05")),
];

pub fn synth(s: &Settings) -> CliResult<()> {
    let cfg = SynthConfig {
        seed: s.get("seed")?,
        num_videos: s.get("num_videos")?,
        num_frames: s.get("num_frames")?,
        resolution: s.get("resolution")?,
        object_speed: s.get("object_speed")?,
        aw_start: s.get("aw_start")?,
        aw_length: s.get("aw_length")?,
        attention_delay: s.get("attention_delay")?,
        sigma: s.get("sigma")?,
        noise: s.get("noise")?,
    };
    cfg.validate().input()?;
    let out = s.path("out");
    create_dir(&out)?;
    let videos = synth_generate(&cfg, &out).compute()?;
    finish(s, &out)?;
    let frames: usize = videos.iter().map(|v| v.num_frames()).sum();
    say!("videos={} frames={} resolution={}", videos.len(), frames, cfg.resolution);
    for v in &videos {
        let a = &v.annotation;
        say!(
            "{} category={} behavior={} frames={} window={}..={}",
            a.video_id,
            a.category_id,
            a.behavior_type.as_str(),
            a.num_frames,
            a.aw_start,
            a.aw_end
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------

pub const TRAIN_KEYS: &[KeyDecl] = &[
    ("data", None),
    ("out", None),
    ("mode", Some("late")),
    ("width", Some("full")),
    ("split", Some("all")),
    ("resolution", Some("256")),
    ("learning_rate", Some("0.0001")),
    ("beta1", Some("0.9")),
    ("beta2", Some("0.999")),
    ("adam_eps", Some("1e-8")),
    ("batch_clips", Some("12")),
    ("clip_len", Some("5")),
    ("epochs", Some("3")),
    ("max_steps", Some("none")),
    ("seed", Some("0")),
];

fn model_config(s: &Settings, seed: u64) -> CliResult<ModelConfig> {
    let mode: FusionMode = s.get("mode")?;
    match s.raw("width") {
        "full" => Ok(ModelConfig::full(mode, seed)),
        "narrow" => Ok(ModelConfig::narrow(mode, seed)),
        other => Err(CliError::usage(format!("invalid setting `width` = {other:?}: use full or narrow"))),
    }
}

pub fn train_cmd(s: &Settings) -> CliResult<()> {
    let seed: u64 = s.get("seed")?;
    let cfg = TrainConfig {
        learning_rate: s.get("learning_rate")?,
        beta1: s.get("beta1")?,
        beta2: s.get("beta2")?,
        adam_eps: s.get("adam_eps")?,
        batch_clips: s.get("batch_clips")?,
        clip_len: s.get("clip_len")?,
        epochs: s.get("epochs")?,
        seed,
        resolution: s.get("resolution")?,
        max_steps: s.optional("max_steps")?,
    };
    cfg.validate().input()?;
    let model_cfg = model_config(s, seed)?;
    let videos = select_split(dataset(s, "data")?, s.raw("split"), seed)?;
    if let Some(v) = videos.iter().find(|v| v.width != cfg.resolution || v.height != cfg.resolution) {
        return Err(CliError::usage(format!(
            "invalid setting `resolution` = {}: video {} is {}x{}",
            cfg.resolution,
            v.id(),
            v.width,
            v.height
        )));
    }
    let set = TrainSet::all_frames(videos).input()?;
    let out = s.path("out");
    create_dir(&out)?;
    let mut model = MsafNet::<f32>::new(model_cfg);
    let steps = set.total_steps(&cfg);
    eprintln!("training {} mode, {} clips, {steps} steps", model_cfg.mode.as_str(), set.clips().len());
    let trace = train(&mut model, &set, &cfg, |r| {
        if r.step == 1 || r.step % 10 == 0 || r.step == steps {
            eprintln!("step {} loss {:.5} kl {:.5} cc {:.5}", r.step, r.loss, r.kl, r.cc);
        }
    })
    .compute()?;
    let mut csv = format!("{TRACE_HEADER}\n");
    for r in &trace {
        csv.push_str(&r.csv_line());
        csv.push('\n');
    }
    write_file(&out.join(TRACE_FILE), csv)?;
    checkpoint::save(&out.join(CHECKPOINT_FILE), &model.to_entries()).compute()?;
    finish(s, &out)?;
    let (first, last) = (trace.first().expect("at least one step"), trace.last().expect("at least one step"));
    say!("steps={} initial_loss={:.6} final_loss={:.6}", trace.len(), first.loss, last.loss);
    Ok(())
}

// ---------------------------------------------------------------------------

pub const PREDICT_KEYS: &[KeyDecl] = &[
    ("checkpoint", None),
    ("data", None),
    ("out", None),
    ("clip_len", Some("5")),
    ("batch_clips", Some("4")),
    ("overlay", Some("false")),
];

pub fn predict(s: &Settings) -> CliResult<()> {
    let clip_len: usize = s.get("clip_len")?;
    let batch_clips: usize = s.get("batch_clips")?;
    let with_overlay: bool = s.get("overlay")?;
    for (key, v) in [("clip_len", clip_len), ("batch_clips", batch_clips)] {
        if v == 0 {
            return Err(CliError::usage(format!("invalid setting `{key}` = 0: must be positive")));
        }
    }
    let entries = checkpoint::load(&s.path("checkpoint")).input()?;
    let model = MsafNet::<f32>::from_entries(&entries).input()?;
    let set = TrainSet::all_frames(dataset(s, "data")?).input()?;
    let out = s.path("out");
    create_dir(&out)?;
    let clips: Vec<ClipIndex> = set.clips().to_vec();
    for chunk in clips.chunks(batch_clips) {
        let batch = set.load(chunk, clip_len).input()?;
        let pred = predict_clip(&model, &batch).compute()?;
        let plane = pred.shape()[2] * pred.shape()[3];
        for (k, clip) in chunk.iter().enumerate() {
            let video = &set.videos()[clip.video];
            let values: Vec<f64> = pred.data()[k * plane..(k + 1) * plane].iter().map(|&v| v as f64).collect();
            let img = gray_from_unit(video.width, video.height, &values).compute()?;
            let path = prediction_path(&out, video.id(), clip.target);
            create_dir(path.parent().expect("per-video directory"))?;
            img.write(&path).compute()?;
            if with_overlay {
                let frame = video.load_frame(clip.target).input()?;
                let blended = overlay(&frame, &values).compute()?;
                let path = out.join(OVERLAY_DIR).join(video.id()).join(frame_file(clip.target, "ppm"));
                create_dir(path.parent().expect("per-video directory"))?;
                blended.write(&path).compute()?;
            }
        }
    }
    finish(s, &out)?;
    say!("mode={} videos={} maps={}", model.mode().as_str(), set.videos().len(), clips.len());
    Ok(())
}

// ---------------------------------------------------------------------------

pub const EVAL_KEYS: &[KeyDecl] = &[
    ("pred", None),
    ("gt", None),
    ("ann", Some("")),
    ("out", None),
    ("seed", Some("0")),
    ("splits", Some("100")),
];

pub fn eval(s: &Settings) -> CliResult<()> {
    let opts = EvalOptions { seed: s.get("seed")?, splits: s.get("splits")? };
    let pred = existing_dir(s, "pred")?;
    let mut videos = dataset(s, "gt")?;
    if !s.raw("ann").is_empty() {
        let keep: Vec<String> = load_annotations(&s.path("ann"))?.into_iter().map(|a| a.video_id).collect();
        if let Some(id) = keep.iter().find(|id| !videos.iter().any(|v| v.id() == id.as_str())) {
            return Err(CliError::usage(format!("`ann` lists {id}, which has no ground truth")));
        }
        videos.retain(|v| keep.iter().any(|id| id == v.id()));
    }
    let report = evaluate_run(&pred, &videos, &opts).input()?;
    let out = s.path("out");
    create_dir(&out)?;
    write_file(&out.join("metrics.csv"), report.to_csv())?;
    let summary = report.summary();
    write_file(&out.join("summary.txt"), &summary)?;
    let mut missing = String::from("video_id,frame\n");
    for (id, f) in &report.missing {
        missing.push_str(&format!("{id},{f}\n"));
    }
    write_file(&out.join("missing.csv"), missing)?;
    finish(s, &out)?;
    say!("{}", summary.trim_end());
    Ok(())
}

// ---------------------------------------------------------------------------

pub const ADF_KEYS: &[KeyDecl] = &[("maps", None), ("ann", None), ("source", Some("model")), ("out", None)];

/// `<maps>/<id>/attention` when present (a dataset), else `<maps>/<id>`.
fn map_dir(maps: &Path, id: &str) -> PathBuf {
    let nested = maps.join(id).join("attention");
    if nested.is_dir() {
        nested
    } else {
        maps.join(id)
    }
}

/// Videos whose crash object has no boxes are skipped and reported as excluded.
pub fn adf(s: &Settings) -> CliResult<()> {
    let source: AdfSource = s.get("source")?;
    let maps = existing_dir(s, "maps")?;
    let (anns, unboxed): (Vec<_>, Vec<_>) =
        load_annotations(&s.path("ann"))?.into_iter().partition(|a| !a.crash_boxes.is_empty());
    let records: Vec<AdfRecord> = anns
        .iter()
        .map(|a| compute_adf_from_dir(&map_dir(&maps, &a.video_id), a, source).input())
        .collect::<CliResult<_>>()?;
    let out = s.path("out");
    create_dir(&out)?;
    let mut per_video = String::from("video_id,category_id,source,first_hit_frame,adf\n");
    for r in &records {
        let opt = |v: Option<String>| v.unwrap_or_default();
        per_video.push_str(&format!(
            "{},{},{},{},{}\n",
            r.video_id,
            r.category_id,
            r.source.as_str(),
            opt(r.first_hit_frame.map(|f| f.to_string())),
            opt(r.adf.map(|a| a.to_string()))
        ));
    }
    write_file(&out.join("adf_videos.csv"), per_video)?;
    let summary = adf_csv(&summarize_adf(&records));
    write_file(&out.join("adf_summary.csv"), &summary)?;
    finish(s, &out)?;
    let hits: Vec<i64> = records.iter().filter_map(|r| r.adf).collect();
    let mean = if hits.is_empty() { String::from("none") } else { format!("{:.4}", hits.iter().sum::<i64>() as f64 / hits.len() as f64) };
    say!("{}", summary.trim_end());
    say!("mean_adf={mean} hits={} misses={} excluded={}", hits.len(), records.len() - hits.len(), unboxed.len());
    Ok(())
}

// ---------------------------------------------------------------------------

pub const STATS_KEYS: &[KeyDecl] = &[("ann_dir", None), ("out", None)];

pub fn stats(s: &Settings) -> CliResult<()> {
    let anns = load_annotations(&s.path("ann_dir"))?;
    let stats = temporal_stats(&anns).compute()?;
    let out = s.path("out");
    create_dir(&out)?;
    let csv = stats.to_csv();
    write_file(&out.join("temporal.csv"), &csv)?;
    finish(s, &out)?;
    say!("{}", csv.trim_end());
    Ok(())
}

// ---------------------------------------------------------------------------

pub const AVGMAP_KEYS: &[KeyDecl] = &[("data", None), ("out", None), ("behavior", Some("all"))];

pub fn avgmap(s: &Settings) -> CliResult<()> {
    let videos = dataset(s, "data")?;
    let behaviors: Vec<BehaviorType> = match s.raw("behavior") {
        "all" => {
            let mut present: Vec<BehaviorType> = videos.iter().map(|v| v.annotation.behavior_type).collect();
            present.sort();
            present.dedup();
            present
        }
        _ => vec![s.get("behavior")?],
    };
    let out = s.path("out");
    create_dir(&out)?;
    for b in behaviors {
        let map: SaliencyMap = average_attention_map(&videos, b).input()?;
        let gray = gray_from_unit(map.width(), map.height(), map.values()).compute()?;
        gray.write(&out.join(format!("average_{}.pgm", b.as_str()))).compute()?;
        let count = videos.iter().filter(|v| v.annotation.behavior_type == b).count();
        say!("{} videos={count}", b.as_str());
    }
    finish(s, &out)
}

// ---------------------------------------------------------------------------

pub const SPLIT_KEYS: &[KeyDecl] = &[("data", None), ("out", None), ("seed", Some("0"))];

pub fn split(s: &Settings) -> CliResult<()> {
    let anns = load_annotations(&existing_dir(s, "data")?)?;
    let catalog: Vec<(String, u32)> = anns.iter().map(|a| (a.video_id.clone(), a.category_id)).collect();
    let splits = make_splits(&catalog, s.get("seed")?).input()?;
    let out = s.path("out");
    create_dir(&out)?;
    let mut csv = String::from("video_id,split\n");
    for (name, ids) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        for id in ids {
            csv.push_str(&format!("{id},{name}\n"));
        }
    }
    write_file(&out.join("splits.csv"), csv)?;
    finish(s, &out)?;
    let (train, val, test) = splits.sizes();
    say!("train={train} val={val} test={test}");
    Ok(())
}
