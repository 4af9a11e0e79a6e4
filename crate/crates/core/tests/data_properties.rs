use std::collections::BTreeSet;

use proptest::prelude::*;
use proptest::test_runner::RngSeed;

use msafnet_core::analysis::{compute_adf, temporal_stats, AdfSource};
use msafnet_core::data::netpbm;
use msafnet_core::data::{
    make_splits, parse_annotation, AccidentAnnotation, BehaviorType, CrashBox, Image, PixelFormat, SynthConfig, FPS,
};
use msafnet_core::metrics::SaliencyMap;
use msafnet_core::nn::checkpoint;
use msafnet_core::Tensor;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, rng_seed: RngSeed::Fixed(31), failure_persistence: None, ..ProptestConfig::default() }
}

fn behavior() -> impl Strategy<Value = BehaviorType> {
    prop_oneof![
        Just(BehaviorType::Crossing),
        Just(BehaviorType::Hitting),
        Just(BehaviorType::OutOfControl),
        Just(BehaviorType::Other),
    ]
}

fn annotation() -> impl Strategy<Value = AccidentAnnotation> {
    (1usize..400, 0usize..400, 0usize..400, 1u32..=54, any::<bool>(), behavior(), "[a-z0-9_]{1,12}")
        .prop_flat_map(|(num_frames, s, e, category_id, ego_involved, behavior_type, video_id)| {
            let (a, b) = (s % num_frames, e % num_frames);
            let (aw_start, aw_end) = (a.min(b), a.max(b));
            let boxes = prop::collection::vec((0..num_frames, 0usize..300, 0usize..300, 1usize..80, 1usize..80), 0..6);
            boxes.prop_map(move |boxes| AccidentAnnotation {
                video_id: video_id.clone(),
                category_id,
                ego_involved,
                num_frames,
                fps: FPS,
                aw_start,
                aw_end,
                behavior_type,
                crash_boxes: boxes.into_iter().map(|(frame, x, y, w, h)| CrashBox { frame, x, y, w, h }).collect(),
            })
        })
}

fn catalog() -> impl Strategy<Value = Vec<(String, u32)>> {
    prop::collection::vec(1usize..=12, 1..=10).prop_map(|hist| {
        hist.iter()
            .enumerate()
            .flat_map(|(c, &n)| (0..n).map(move |k| (format!("v{c}_{k}"), c as u32 + 1)))
            .collect()
    })
}

/// Attention maps of one synthetic video, computed without touching disk.
fn synth_maps(cfg: &SynthConfig, video: usize) -> Vec<SaliencyMap> {
    (0..cfg.num_frames)
        .map(|f| {
            let att = cfg.render(video, f).2;
            SaliencyMap::new(att.width, att.height, att.scaled(255.0)).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(config(128))]

    #[test]
    fn serialize_then_parse_is_identity(ann in annotation()) {
        let json = ann.to_json();
        let back = parse_annotation(json.as_bytes()).unwrap();
        prop_assert_eq!(&back, &ann);
        prop_assert_eq!(back.to_json(), json);
    }

    #[test]
    fn phases_partition_every_video(anns in prop::collection::vec(annotation(), 1..8)) {
        for a in &anns {
            let p = a.phases();
            prop_assert_eq!(p.before + p.window + p.after, a.num_frames);
        }
        let s = temporal_stats(&anns).unwrap();
        prop_assert_eq!(s.before + s.window + s.after, s.total_frames);
    }

    #[test]
    fn splits_are_deterministic_disjoint_and_complete(cat in catalog(), seed in any::<u64>()) {
        let a = make_splits(&cat, seed).unwrap();
        prop_assert_eq!(&a, &make_splits(&cat, seed).unwrap());
        let (train, val, test): (BTreeSet<_>, BTreeSet<_>, BTreeSet<_>) =
            (a.train.iter().collect(), a.val.iter().collect(), a.test.iter().collect());
        prop_assert!(train.is_disjoint(&test) && train.is_disjoint(&val) && val.is_disjoint(&test));
        prop_assert_eq!(train.len() + val.len() + test.len(), cat.len());
        let categories: BTreeSet<u32> = cat.iter().map(|c| c.1).collect();
        for c in categories {
            let members: Vec<&String> = cat.iter().filter(|e| e.1 == c).map(|e| &e.0).collect();
            prop_assert!(members.iter().any(|m| test.contains(m)), "category {} missing from test", c);
        }
        // Re-splitting the reassembled catalog reproduces the same partition.
        let mut again = cat.clone();
        again.reverse();
        prop_assert_eq!(&a, &make_splits(&again, seed).unwrap());
    }

    #[test]
    fn images_round_trip(
        rgb in any::<bool>(),
        (w, h) in (1usize..=20, 1usize..=20),
        seed in any::<u64>(),
    ) {
        let format = if rgb { PixelFormat::Rgb } else { PixelFormat::Gray };
        let n = w * h * format.channels();
        let data: Vec<u8> = (0..n).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 24) as u8).collect();
        let img = Image::new(format, w, h, data).unwrap();
        let bytes = img.encode();
        let back = netpbm::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &img);
        prop_assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn checkpoints_round_trip(
        shapes in prop::collection::vec(prop::collection::vec(1usize..=4, 1..=4), 1..6),
        seed in any::<u64>(),
    ) {
        let entries: Vec<checkpoint::Entry> = shapes
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let t = Tensor::from_fn(s.clone(), |i| f32::from_bits((seed as u32).wrapping_add((i * 7919 + k) as u32) & 0x7f7f_ffff)).unwrap();
                (format!("layer{k}.weight"), t)
            })
            .collect();
        let bytes = checkpoint::encode(&entries);
        let back = checkpoint::decode(&bytes).unwrap();
        prop_assert_eq!(back.len(), entries.len());
        for ((na, ta), (nb, tb)) in back.iter().zip(&entries) {
            prop_assert_eq!(na, nb);
            prop_assert_eq!(ta.shape(), tb.shape());
            prop_assert!(ta.data().iter().zip(tb.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        prop_assert_eq!(checkpoint::encode(&back), bytes);
    }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn synthetic_ground_truth_delay_is_exact(
        seed in any::<u64>(),
        delay in 0usize..=9,
        aw_start in 8usize..=14,
        speed in 1usize..=3,
        video in 0usize..4,
    ) {
        let cfg = SynthConfig {
            seed,
            num_videos: 4,
            num_frames: 32,
            resolution: 32,
            object_speed: speed,
            aw_start,
            attention_delay: delay,
            ..SynthConfig::default()
        };
        cfg.validate().unwrap();
        let ann = cfg.annotation(video);
        let rec = compute_adf(&synth_maps(&cfg, video), &ann, AdfSource::HumanGt).unwrap();
        prop_assert_eq!(rec.adf, Some(delay as i64));
    }

    #[test]
    fn earlier_hits_never_increase_the_delay(
        (frames, late, earlier) in (4usize..=30).prop_flat_map(|n| (Just(n), 1..n)).prop_flat_map(|(n, l)| (Just(n), Just(l), 0..=l)),
        aw_start in 0usize..4,
    ) {
        let size = 16;
        let boxed = CrashBox { frame: 0, x: 10, y: 10, w: 4, h: 4 };
        let ann = AccidentAnnotation {
            video_id: "v".into(),
            category_id: 1,
            ego_involved: false,
            num_frames: frames,
            fps: FPS,
            aw_start: aw_start.min(frames - 1),
            aw_end: frames - 1,
            behavior_type: BehaviorType::Other,
            crash_boxes: (0..frames).map(|f| CrashBox { frame: f, ..boxed }).collect(),
        };
        let spot = |x: usize, y: usize| SaliencyMap::from_fn(size, size, |a, b| if (a, b) == (x, y) { 1.0 } else { 0.1 }).unwrap();
        let sequence = |first_hit: usize| -> Vec<SaliencyMap> {
            (0..frames).map(|f| if f >= first_hit { spot(11, 12) } else { spot(2, 3) }).collect()
        };
        let a = compute_adf(&sequence(late), &ann, AdfSource::Model).unwrap();
        let b = compute_adf(&sequence(earlier), &ann, AdfSource::Model).unwrap();
        prop_assert!(b.adf.unwrap() <= a.adf.unwrap());
        prop_assert_eq!(a.adf, Some(late as i64 - ann.aw_start as i64));
    }
}
