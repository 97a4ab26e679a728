mod common;

use std::collections::BTreeSet;

use anchorsync::fusion::{associate_and_fuse, motion_correct, ClassLabel, Detection, FusedObject};
use anchorsync::rng::derive_seed;
use anchorsync::scenario::{canned_scenario, generate_scene, observe, FrameStreams};
use anchorsync::tracking::{TrackStatus, Tracker, TrackerConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn det(node: u32, pos: [f64; 2], class: ClassLabel, conf: f64) -> Detection {
    Detection {
        position: pos,
        yaw: 0.0,
        size: class.default_size(),
        velocity: None,
        class_label: class,
        confidence: conf,
        node_id: node,
        timestamp: 0.0,
    }
}

proptest! {
    #[test]
    fn motion_correction_exact_for_constant_velocity(
        p0 in prop::array::uniform2(-100.0..100.0f64),
        v in prop::array::uniform2(-30.0..30.0f64),
        t0 in 0.0..1000.0f64,
        delay in 0.0..500.0f64,
    ) {
        let truth = |t: f64| [p0[0] + v[0] * t / 1000.0, p0[1] + v[1] * t / 1000.0];
        let mut d = det(0, truth(t0), ClassLabel::Car, 0.9);
        d.velocity = Some(v);
        d.timestamp = t0;
        let c = motion_correct(&d, t0 + delay);
        let want = truth(t0 + delay);
        prop_assert!((c.position[0] - want[0]).abs() < 1e-9 && (c.position[1] - want[1]).abs() < 1e-9);
        prop_assert_eq!(c.timestamp, t0 + delay);
    }

    #[test]
    fn fusion_ignores_input_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let objects: Vec<[f64; 2]> = (0..6).map(|i| [i as f64 * 20.0, rng.random_range(-5.0..5.0)]).collect();
        let mut per_node: Vec<Vec<Detection>> = (0..4)
            .map(|n| {
                let mut list = Vec::new();
                for p in &objects {
                    if rng.random::<f64>() < 0.8 {
                        let pos = [p[0] + rng.random_range(-0.5..0.5), p[1] + rng.random_range(-0.5..0.5)];
                        list.push(det(n, pos, ClassLabel::Car, rng.random_range(0.1..1.0)));
                    }
                }
                list
            })
            .collect();
        let key = |f: &Vec<FusedObject>| {
            let mut v: Vec<(i64, i64, BTreeSet<u32>)> = f
                .iter()
                .map(|o| ((o.position[0] * 1e6).round() as i64, (o.position[1] * 1e6).round() as i64, o.contributing_nodes.clone()))
                .collect();
            v.sort();
            v
        };
        let before = key(&associate_and_fuse(&per_node, 2.0));
        per_node.shuffle(&mut rng);
        for list in &mut per_node {
            list.shuffle(&mut rng);
        }
        prop_assert_eq!(before, key(&associate_and_fuse(&per_node, 2.0)));
    }
}

#[test]
fn separated_objects_fuse_one_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let per_node: Vec<Vec<Detection>> = (0..3)
        .map(|n| {
            (0..5)
                .map(|k| {
                    det(
                        n,
                        [k as f64 * 10.0 + rng.random_range(-0.3..0.3), 0.0],
                        ClassLabel::Bus,
                        0.5,
                    )
                })
                .collect()
        })
        .collect();
    let fused = associate_and_fuse(&per_node, 2.0);
    assert_eq!(fused.len(), 5);
    assert!(fused.iter().all(|f| f.contributing_nodes.len() == 3));
    // noisy-or of three 0.5 confidences
    assert!(fused.iter().all(|f| (f.fused_confidence - 0.875).abs() < 1e-12));
}

fn rmse(errors: &[f64]) -> f64 {
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

fn nearest_error(p: [f64; 2], class: ClassLabel, truth: &[(ClassLabel, [f64; 2])]) -> f64 {
    truth
        .iter()
        .filter(|(c, _)| *c == class)
        .map(|(_, t)| (p[0] - t[0]).hypot(p[1] - t[1]))
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn fused_positions_beat_single_node() {
    let (mut fused_err, mut single_err) = (Vec::new(), Vec::new());
    for draw in 0..100 {
        let seed = derive_seed(99, &[draw]);
        let mut cfg = canned_scenario("roundabout", seed).unwrap();
        for n in &mut cfg.nodes {
            n.fp_rate = 0.0;
            n.miss_rate_base = 0.0;
        }
        let frame = &generate_scene(&cfg, seed).unwrap()[0];
        let truth: Vec<_> = frame.objects.iter().map(|o| (o.class_label, o.bbox.center)).collect();
        let streams = FrameStreams::new(seed, 0);
        let per_node: Vec<Vec<Detection>> = cfg.nodes.iter().map(|n| observe(frame, n, &cfg, &streams)).collect();
        for f in associate_and_fuse(&per_node, 2.0) {
            if f.contributing_nodes.len() > 1 {
                fused_err.push(nearest_error(f.position, f.class_label, &truth));
                let node = *f.contributing_nodes.first().unwrap();
                let d = per_node[node as usize]
                    .iter()
                    .filter(|d| d.class_label == f.class_label)
                    .min_by(|a, b| {
                        nearest_error(a.position, a.class_label, &truth).total_cmp(&nearest_error(
                            b.position,
                            b.class_label,
                            &truth,
                        ))
                    })
                    .unwrap();
                single_err.push(nearest_error(d.position, d.class_label, &truth));
            }
        }
    }
    assert!(fused_err.len() > 100);
    let (f, s) = (rmse(&fused_err), rmse(&single_err));
    assert!(f < s, "fused {f} vs single {s}");
}

fn fused_at(pos: [f64; 2], t: f64, velocity: Option<[f64; 2]>) -> FusedObject {
    FusedObject {
        position: pos,
        yaw: 0.0,
        size: [4.5, 1.8, 1.5],
        velocity,
        class_label: ClassLabel::Car,
        timestamp: t,
        contributing_nodes: [0, 1].into_iter().collect(),
        fused_confidence: 0.9,
    }
}

#[test]
fn single_object_keeps_one_confirmed_track() {
    for velocity in [Some([10.0, -4.0]), None] {
        let mut tracker = Tracker::new(TrackerConfig::default()).unwrap();
        let mut first_id = None;
        for k in 0..50 {
            let t = k as f64 * 100.0;
            let pos = [10.0 * t / 1000.0, -4.0 * t / 1000.0];
            tracker.track_step(&[fused_at(pos, t, velocity)], t).unwrap();
            assert_eq!(tracker.tracks().len(), 1, "anchor {k}");
            let id = tracker.tracks()[0].track_id;
            assert_eq!(*first_id.get_or_insert(id), id, "id switch at anchor {k}");
        }
        let confirmed: Vec<_> = tracker.confirmed().collect();
        assert_eq!(confirmed.len(), 1);
        assert_eq!(confirmed[0].status, TrackStatus::Confirmed);
        let v = confirmed[0].state.velocity;
        assert!((v[0] - 10.0).abs() < 1e-6 && (v[1] + 4.0).abs() < 1e-6, "{v:?}");
    }
}

#[test]
fn track_dies_after_consecutive_misses() {
    let mut tracker = Tracker::new(TrackerConfig::default()).unwrap();
    tracker.track_step(&[fused_at([0.0, 0.0], 0.0, None)], 0.0).unwrap();
    for k in 1..=5 {
        tracker.track_step(&[], k as f64 * 100.0).unwrap();
    }
    assert_eq!(tracker.tracks()[0].status, TrackStatus::Dead);
    tracker.track_step(&[], 600.0).unwrap();
    assert!(tracker.tracks().is_empty());
    assert!(tracker.track_step(&[], 600.0).is_err());
}
