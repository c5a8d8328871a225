use std::fs;

use rpcf::bench::{
    evaluate_ope, format_ablation_table, generate, load_sequence, run_ablation, Frames, Sequence,
    SequenceTracker, SyntheticSpec, TrackerFactory, Variant,
};
use rpcf::features::Frame;
use rpcf::tracker::{BBox, Tracker, TrackerConfig};
use rpcf::Result;

/// Replays a fixed list of boxes, optionally failing at a given frame.
struct Replay {
    boxes: Vec<BBox>,
    next: usize,
    fail_at: Option<usize>,
}

impl SequenceTracker for Replay {
    fn init(&mut self, _frame: &Frame, _bbox: BBox) -> Result<()> {
        self.next = 1;
        Ok(())
    }

    fn track(&mut self, _frame: &Frame) -> Result<BBox> {
        if self.fail_at == Some(self.next) {
            return Err(rpcf::Error::InvalidArgument("replay failure".into()));
        }
        self.next += 1;
        Ok(self.boxes[self.next - 1])
    }
}

struct Echo;
struct Far;
struct FailOn(&'static str);

impl TrackerFactory for Echo {
    fn create(&self, s: &Sequence) -> Box<dyn SequenceTracker> {
        Box::new(Replay {
            boxes: s.boxes.clone(),
            next: 0,
            fail_at: None,
        })
    }
}

impl TrackerFactory for Far {
    fn create(&self, s: &Sequence) -> Box<dyn SequenceTracker> {
        let boxes = s
            .boxes
            .iter()
            .map(|b| BBox::new(b.x + 500.0, b.y + 500.0, b.w, b.h))
            .collect();
        Box::new(Replay {
            boxes,
            next: 0,
            fail_at: None,
        })
    }
}

impl TrackerFactory for FailOn {
    fn create(&self, s: &Sequence) -> Box<dyn SequenceTracker> {
        let fail_at = (s.name == self.0).then_some(3);
        Box::new(Replay {
            boxes: s.boxes.clone(),
            next: 0,
            fail_at,
        })
    }
}

fn tiny(name: &str, frames: usize, seed: u64) -> Sequence {
    let spec = SyntheticSpec {
        frames,
        width: 96,
        height: 80,
        start: (40.0, 40.0),
        target_size: (20.0, 16.0),
        velocity: (1.0, 0.5),
        ..SyntheticSpec::translating(seed)
    };
    generate(&spec).unwrap().into_sequence(name).unwrap()
}

#[test]
fn echo_tracker_scores_perfectly() {
    let seqs = vec![tiny("a", 5, 1), tiny("b", 7, 2)];
    let r = evaluate_ope(&Echo, &seqs).unwrap();
    assert_eq!(r.dp20, 1.0);
    assert!((r.auc - 1.0).abs() < 1e-12);
    assert_eq!(r.precision.len(), 51);
    assert_eq!(r.success.len(), 51);
    let names: Vec<&str> = r.sequences.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["a", "b"]);
}

#[test]
fn far_tracker_scores_near_zero() {
    let seqs = vec![tiny("a", 6, 1)];
    let r = evaluate_ope(&Far, &seqs).unwrap();
    // Frame 1 is the initialization box, so 1 of 6 frames is exact.
    assert!((r.dp20 - 1.0 / 6.0).abs() < 1e-12, "{}", r.dp20);
    // At threshold 0 every frame counts; above it only the first frame does.
    let expected = (1.0 + 50.0 / 6.0) / 51.0;
    assert!((r.auc - expected).abs() < 1e-12, "{} vs {expected}", r.auc);
}

#[test]
fn failed_sequences_are_reported_and_excluded() {
    let seqs = vec![tiny("good", 5, 1), tiny("bad", 5, 2)];
    let r = evaluate_ope(&FailOn("bad"), &seqs).unwrap();
    assert_eq!(r.sequences.len(), 1);
    assert_eq!(r.failures.len(), 1);
    assert_eq!(r.failures[0].0, "bad");
    assert_eq!(r.dp20, 1.0);
    assert!(evaluate_ope(&Echo, &[]).is_err());
}

#[test]
fn ablation_smoke_run() {
    let seqs = vec![tiny("a", 6, 3), tiny("b", 6, 4), tiny("c", 6, 5)];
    let rows = run_ablation(&TrackerConfig::default(), &Variant::ALL, &seqs).unwrap();
    assert_eq!(rows.len(), 4);
    for (v, r) in &rows {
        assert!(r.failures.is_empty(), "{}: {:?}", v.name(), r.failures);
        assert!((0.0..=1.0).contains(&r.dp20) && (0.0..=1.0).contains(&r.auc));
    }
    let table = format_ablation_table(&rows);
    assert_eq!(table.lines().count(), 5);
    assert!(table.contains("feature_map_max_pool"));
}

#[test]
fn pooled_variants_halve_the_grid() {
    let seq = generate(&SyntheticSpec {
        frames: 1,
        ..SyntheticSpec::translating(1)
    })
    .unwrap();
    let base = TrackerConfig::default();
    let grid = |v: Variant| {
        let t = Tracker::init(&seq.frames[0], seq.boxes[0], v.configure(&base)).unwrap();
        t.filter().channels[0].dims()
    };
    let full = grid(Variant::Baseline);
    assert_eq!(grid(Variant::Rpcf), full);
    for v in [Variant::FeatureMapAvgPool, Variant::FeatureMapMaxPool] {
        let g = grid(v);
        assert_eq!((g.0, g.1), (full.0 / 2, full.1 / 2), "{}", v.name());
    }
}

#[test]
fn frame_count_mismatch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let seq = generate(&SyntheticSpec {
        frames: 3,
        width: 40,
        height: 30,
        start: (20.0, 15.0),
        target_size: (8.0, 6.0),
        ..SyntheticSpec::translating(1)
    })
    .unwrap();
    seq.write(dir.path()).unwrap();
    assert_eq!(load_sequence(dir.path()).unwrap().len(), 3);
    fs::remove_file(dir.path().join("img/0003.png")).unwrap();
    assert!(load_sequence(dir.path()).is_err());
    assert!(Sequence::new(
        "x",
        Frames::Memory(seq.frames.clone()),
        seq.boxes[..2].to_vec()
    )
    .is_err());
}
