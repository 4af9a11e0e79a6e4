use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_msafnet");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn msafnet")
}

fn arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

fn usage_error(args: &[&str]) -> String {
    let out = run(args);
    assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stderr).expect("utf-8 output")
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

/// Two short 16x16 videos.
fn tiny_dataset(root: &Path, seed: &str) -> PathBuf {
    let cfg = root.join("tiny.cfg");
    std::fs::write(
        &cfg,
        "# two short videos\nnum_videos=2\nnum_frames=12\nresolution=16\nobject_speed=1\naw_start=4\naw_length=4\nattention_delay=2\nsigma=2 # narrow blob\n",
    )
    .unwrap();
    let out = root.join(format!("tiny_{seed}"));
    ok(&["synth", "--config", arg(&cfg), "--seed", seed, "--out", arg(&out)]);
    out
}

fn metric(summary: &str, name: &str) -> f64 {
    let line = summary.lines().find(|l| l.starts_with(&format!("{name}="))).unwrap_or_else(|| panic!("no {name}"));
    line[name.len() + 1..].parse().unwrap()
}

#[test]
fn synth_defaults_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let stdout = ok(&["synth", "--out", arg(&a)]);
    assert!(stdout.starts_with("videos=12 "), "{stdout}");
    ok(&["synth", "--out", arg(&b)]);
    ok(&["synth", "--out", arg(&c), "--seed", "8"]);
    let manifest = read(a.join("MANIFEST"));
    assert_eq!(manifest, read(b.join("MANIFEST")));
    assert_ne!(manifest, read(c.join("MANIFEST")));
    assert!(manifest.contains("  synth_011/annotation.json\n"));
    assert!(read(a.join("config.txt")).contains("seed=7\n"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = arg(dir.path());
    let missing = dir.path().join("missing");
    assert!(usage_error(&["train", "--data", arg(&missing), "--out", out]).contains("`data`"));
    assert!(usage_error(&["synth", "--out", out, "--seed", "x"]).contains("`seed`"));
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "attention_delay=40\n").unwrap();
    assert!(usage_error(&["synth", "--config", arg(&cfg), "--out", out]).contains("attention_delay"));
    std::fs::write(&cfg, "speed=3\n").unwrap();
    assert!(usage_error(&["synth", "--config", arg(&cfg), "--out", out]).contains("`speed`"));
    usage_error(&["synth"]);
    usage_error(&["nonsense"]);
    usage_error(&["--threads", "0", "synth", "--out", out]);
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert!(usage_error(&["stats", "--ann-dir", arg(&empty), "--out", out]).contains("no annotations"));
    usage_error(&["adf", "--maps", arg(&empty), "--ann", arg(&empty), "--out", out]);
}

#[test]
fn vision_mode_rejects_dataset_without_frames() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(dir.path(), "1");
    for video in ["synth_000", "synth_001"] {
        std::fs::remove_dir_all(data.join(video).join("frames")).unwrap();
    }
    let err = usage_error(&[
        "train", "--data", arg(&data), "--mode", "vision", "--resolution", "16", "--width", "narrow", "--out",
        arg(&dir.path().join("run")),
    ]);
    assert!(err.contains("frames"), "{err}");
}

#[test]
fn synthetic_delay_is_recovered() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", arg(&data)]);
    let stdout = ok(&["adf", "--maps", arg(&data), "--ann", arg(&data), "--source", "human_gt", "--out", arg(&dir.path().join("adf"))]);
    assert!(stdout.contains("mean_adf=7.0000 hits=12 misses=0 excluded=0"), "{stdout}");
    let rows = read(dir.path().join("adf").join("adf_summary.csv"));
    assert_eq!(rows.lines().next(), Some("category_id,source,mean_adf,hits,misses"));
    assert!(rows.lines().skip(1).all(|l| l.contains(",human_gt,7.0000,1,0")), "{rows}");
}

#[test]
fn videos_without_boxes_are_excluded_from_the_delay() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(dir.path(), "4");
    let path = data.join("synth_001").join("annotation.json");
    let text = read(&path);
    let start = text.find("\"crash_boxes\":[").unwrap() + "\"crash_boxes\":".len();
    let end = start + text[start..].find(']').unwrap() + 1;
    std::fs::write(&path, format!("{}[]{}", &text[..start], &text[end..])).unwrap();
    let stdout = ok(&["adf", "--maps", arg(&data), "--ann", arg(&data), "--source", "human_gt", "--out", arg(&dir.path().join("adf"))]);
    assert!(stdout.contains("mean_adf=2.0000 hits=1 misses=0 excluded=1"), "{stdout}");
}

#[test]
fn temporal_table_from_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/temporal_annotations.jsonl");
    let stdout = ok(&["stats", "--ann-dir", arg(&fixture), "--out", arg(dir.path())]);
    assert!(stdout.contains("total_frames,1995,658476,315154,131679,211643"), "{stdout}");
    assert!(stdout.contains("percent_of_average,1995,100.0,47.6,20.0,32.1"), "{stdout}");
    assert_eq!(read(dir.path().join("temporal.csv")).trim_end(), stdout.trim_end());
}

#[test]
fn split_lists_every_video_once() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", arg(&data)]);
    let out = dir.path().join("split");
    let stdout = ok(&["split", "--data", arg(&data), "--out", arg(&out), "--seed", "4"]);
    // Every synthetic video has its own category, so each one is a lone video.
    assert_eq!(stdout.trim(), "train=0 val=0 test=12");
    assert_eq!(read(out.join("splits.csv")).lines().count(), 13);
}

#[test]
fn train_predict_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(dir.path(), "5");
    let train = |out: &Path, extra: &[&str]| {
        let mut args = vec![
            "--threads", "1", "train", "--data", arg(&data), "--mode", "early", "--resolution", "16", "--width", "narrow",
            "--max-steps", "2", "--out", arg(out),
        ];
        args.extend_from_slice(extra);
        ok(&args)
    };
    let (run_a, run_b) = (dir.path().join("run_a"), dir.path().join("run_b"));
    train(&run_a, &["--seed", "3"]);
    train(&run_b, &["--seed", "3"]);
    assert_eq!(read(run_a.join("MANIFEST")), read(run_b.join("MANIFEST")));
    let trace = read(run_a.join("trace.csv"));
    assert_eq!(trace.lines().count(), 3, "{trace}");
    assert!(trace.starts_with("step,loss,kl,cc\n"));

    // The resolved settings reproduce the run.
    let rerun = dir.path().join("rerun");
    ok(&["train", "--config", arg(&run_a.join("config.txt")), "--out", arg(&rerun)]);
    assert_eq!(std::fs::read(rerun.join("model.ckpt")).unwrap(), std::fs::read(run_a.join("model.ckpt")).unwrap());

    let ckpt = run_a.join("model.ckpt");
    let (pred_a, pred_b) = (dir.path().join("pred_a"), dir.path().join("pred_b"));
    let stdout = ok(&["predict", "--checkpoint", arg(&ckpt), "--data", arg(&data), "--out", arg(&pred_a), "--overlay"]);
    assert!(stdout.contains("mode=early videos=2 maps=24"), "{stdout}");
    ok(&["predict", "--checkpoint", arg(&ckpt), "--data", arg(&data), "--out", arg(&pred_b), "--overlay"]);
    assert_eq!(read(pred_a.join("MANIFEST")), read(pred_b.join("MANIFEST")));
    for video in ["synth_000", "synth_001"] {
        let maps = std::fs::read_dir(pred_a.join(video)).unwrap().count();
        assert_eq!(maps, 12);
        let overlay = std::fs::read(pred_a.join("overlays").join(video).join("000011.ppm")).unwrap();
        assert!(overlay.starts_with(b"P6\n16 16\n255\n"));
        let map = std::fs::read(pred_a.join(video).join("000000.pgm")).unwrap();
        assert!(map.starts_with(b"P5\n16 16\n255\n"));
    }

    std::fs::remove_file(pred_a.join("synth_001").join("000003.pgm")).unwrap();
    let eval = dir.path().join("eval");
    let summary = ok(&["eval", "--pred", arg(&pred_a), "--gt", arg(&data), "--out", arg(&eval)]);
    for name in ["kldiv", "nss", "sim", "cc", "auc_j", "auc_s"] {
        assert!(summary.contains(&format!("\n{name}=")), "{name} missing from {summary}");
    }
    assert!(summary.contains("frames_evaluated=23\nframes_missing=1\n"), "{summary}");
    assert_eq!(read(eval.join("missing.csv")), "video_id,frame\nsynth_001,3\n");
}

#[test]
fn eval_of_ground_truth_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(dir.path(), "6");
    let pred = dir.path().join("pred");
    for video in ["synth_000", "synth_001"] {
        let to = pred.join(video);
        std::fs::create_dir_all(&to).unwrap();
        for entry in std::fs::read_dir(data.join(video).join("attention")).unwrap() {
            let from = entry.unwrap().path();
            std::fs::copy(&from, to.join(from.file_name().unwrap())).unwrap();
        }
    }
    let ann = dir.path().join("ann");
    std::fs::create_dir(&ann).unwrap();
    std::fs::copy(data.join("synth_001").join("annotation.json"), ann.join("synth_001.json")).unwrap();
    let summary = ok(&["eval", "--pred", arg(&pred), "--gt", arg(&data), "--ann", arg(&ann), "--out", arg(&dir.path().join("e"))]);
    assert!(summary.contains("frames_evaluated=12\n"), "{summary}");
    // Identical maps: unit correlation and similarity; the divergence is zero
    // up to the stabilizing epsilon inside its logarithm.
    assert!((metric(&summary, "cc") - 1.0).abs() < 1e-6, "{summary}");
    assert!((metric(&summary, "sim") - 1.0).abs() < 1e-6, "{summary}");
    assert!(metric(&summary, "kldiv").abs() < 1e-4, "{summary}");
    assert!(metric(&summary, "auc_j") > 0.9, "{summary}");
}

#[test]
fn average_maps_per_behavior() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(dir.path(), "2");
    let out = dir.path().join("avg");
    let stdout = ok(&["avgmap", "--data", arg(&data), "--out", arg(&out)]);
    assert_eq!(stdout, "crossing videos=1\nhitting videos=1\n");
    let map = std::fs::read(out.join("average_crossing.pgm")).unwrap();
    assert!(map.starts_with(b"P5\n16 16\n255\n"));
    // Scaled to a unit peak.
    assert_eq!(map[map.len() - 256..].iter().max(), Some(&255));
    let only = dir.path().join("only");
    ok(&["avgmap", "--data", arg(&data), "--behavior", "hitting", "--out", arg(&only)]);
    assert!(!only.join("average_crossing.pgm").exists());
    usage_error(&["avgmap", "--data", arg(&data), "--behavior", "other", "--out", arg(&only)]);
}
