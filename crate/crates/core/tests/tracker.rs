use rpcf::bench::{generate, iou, SequenceMetrics, SyntheticSpec};
use rpcf::features::Frame;
use rpcf::spectral::{forward, inverse, subpixel_peak, Spectrum};
use rpcf::tracker::{BBox, Tracker, TrackerConfig};

fn short(spec: SyntheticSpec, frames: usize) -> SyntheticSpec {
    SyntheticSpec { frames, ..spec }
}

fn shifted(spectra: &[Spectrum], dr: isize, dc: isize) -> Vec<Spectrum> {
    spectra
        .iter()
        .map(|s| forward(&inverse(s).unwrap().circular_shift(dr, dc)).unwrap())
        .collect()
}

#[test]
fn self_response_and_shift_oracle() {
    let seq = generate(&short(SyntheticSpec::translating(3), 1)).unwrap();
    let tracker = Tracker::init(&seq.frames[0], seq.boxes[0], TrackerConfig::default()).unwrap();
    let report = tracker.first_frame_report();
    assert!(
        report.constraint_residual <= 1e-2,
        "{}",
        report.constraint_residual
    );

    let spectra = tracker
        .sample_spectra(&seq.frames[0], seq.boxes[0].center(), 1.0)
        .unwrap();
    let peak = subpixel_peak(&tracker.response(&spectra).unwrap(), 4, 5).unwrap();
    assert!(peak.dy.abs() <= 1.0 && peak.dx.abs() <= 1.0, "{peak:?}");

    let peak = subpixel_peak(&tracker.response(&shifted(&spectra, 2, 1)).unwrap(), 4, 5).unwrap();
    assert!(
        (peak.dy - 2.0).abs() <= 1.0 && (peak.dx - 1.0).abs() <= 1.0,
        "{peak:?}"
    );

    let zero: Vec<Spectrum> = spectra
        .iter()
        .map(|s| Spectrum::zeros(s.rows(), s.cols()))
        .collect();
    assert_eq!(tracker.response(&zero).unwrap().max_abs(), 0.0);
}

#[test]
fn static_scene_keeps_overlap() {
    let seq = generate(&SyntheticSpec::stationary(50, 5)).unwrap();
    let mut tracker =
        Tracker::init(&seq.frames[0], seq.boxes[0], TrackerConfig::default()).unwrap();
    for (i, (frame, truth)) in seq.frames.iter().zip(&seq.boxes).enumerate().skip(1) {
        let b = tracker.step(frame).unwrap().bbox;
        assert!(iou(&b, truth) >= 0.9, "frame {i}: {b:?} vs {truth:?}");
    }
}

#[test]
fn translating_target_and_warm_starts() {
    let seq = generate(&SyntheticSpec::translating(1)).unwrap();
    let mut tracker =
        Tracker::init(&seq.frames[0], seq.boxes[0], TrackerConfig::default()).unwrap();
    let mut boxes = vec![seq.boxes[0]];
    let mut updates = 0;
    for (i, frame) in seq.frames.iter().enumerate().skip(1) {
        let before = tracker.filter().clone();
        let report = tracker.step(frame).unwrap();
        let b = report.bbox;
        if i >= 2 {
            let c = (b.center(), seq.boxes[i].center());
            let err = ((c.0 .0 - c.1 .0).powi(2) + (c.0 .1 - c.1 .1).powi(2)).sqrt();
            assert!(err <= 2.0, "frame {}: center error {err}", i + 1);
        }
        match &report.update {
            Some(update) => {
                updates += 1;
                let first = &update.steps[0];
                assert!(first.initial_residual <= 1.0, "frame {}: {first:?}", i + 1);
            }
            None => assert_eq!(tracker.filter(), &before, "frame {}", i + 1),
        }
        boxes.push(b);
    }
    assert_eq!(updates, 99 / 6);
    let m = SequenceMetrics::compute(&boxes, &seq.boxes);
    assert!(m.mean_center_error() <= 2.0, "{}", m.mean_center_error());
    assert!(m.auc >= 0.8, "{}", m.auc);
}

#[test]
fn deterministic_runs() {
    let seq = generate(&short(SyntheticSpec::deforming(0.1, 2), 14)).unwrap();
    let run = || {
        let mut t = Tracker::init(&seq.frames[0], seq.boxes[0], TrackerConfig::default()).unwrap();
        let boxes: Vec<BBox> = seq.frames[1..]
            .iter()
            .map(|f| t.step(f).unwrap().bbox)
            .collect();
        (boxes, t.filter().clone())
    };
    let (a, fa) = run();
    let (b, fb) = run();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.x.to_bits(), y.x.to_bits());
        assert_eq!(x.y.to_bits(), y.y.to_bits());
        assert_eq!(x.w.to_bits(), y.w.to_bits());
    }
    for (x, y) in fa.channels.iter().zip(&fb.channels) {
        for (p, q) in x.as_slice().iter().zip(y.as_slice()) {
            assert_eq!(p.re.to_bits(), q.re.to_bits());
            assert_eq!(p.im.to_bits(), q.im.to_bits());
        }
    }
}

#[test]
fn rejects_bad_boxes() {
    let frame = Frame::new(64, 48, 3, vec![90; 64 * 48 * 3]).unwrap();
    let cfg = TrackerConfig::default();
    assert!(Tracker::init(&frame, BBox::new(10.0, 10.0, 0.0, 5.0), cfg.clone()).is_err());
    assert!(Tracker::init(&frame, BBox::new(0.0, 0.0, 100.0, 20.0), cfg.clone()).is_err());
    assert!(Tracker::init(&frame, BBox::new(200.0, 10.0, 10.0, 10.0), cfg).is_err());
}

#[test]
fn grayscale_sequences_track() {
    let seq = generate(&short(SyntheticSpec::translating(4), 8)).unwrap();
    let gray: Vec<Frame> = seq
        .frames
        .iter()
        .map(|f| {
            let data = f
                .as_raw()
                .chunks(3)
                .map(|p| ((p[0] as u32 * 3 + p[1] as u32 * 6 + p[2] as u32) / 10) as u8)
                .collect();
            Frame::new(f.width(), f.height(), 1, data).unwrap()
        })
        .collect();
    let mut t = Tracker::init(&gray[0], seq.boxes[0], TrackerConfig::default()).unwrap();
    assert!(!t.is_color());
    assert_eq!(t.filter().channels.len(), 11);
    for (frame, truth) in gray.iter().zip(&seq.boxes).skip(1) {
        let b = t.step(frame).unwrap().bbox;
        assert!(iou(&b, truth) > 0.5, "{b:?} vs {truth:?}");
    }
}

#[test]
fn box_stays_inside_frame_and_scale_bounds() {
    let spec = SyntheticSpec {
        frames: 30,
        start: (280.0, 200.0),
        velocity: (3.0, 3.0),
        ..SyntheticSpec::translating(6)
    };
    let seq = generate(&spec).unwrap();
    let cfg = TrackerConfig::default();
    let mut t = Tracker::init(&seq.frames[0], seq.boxes[0], cfg.clone()).unwrap();
    for frame in &seq.frames[1..] {
        let r = t.step(frame).unwrap();
        let c = r.bbox.center();
        assert!(
            (0.0..320.0).contains(&c.0) && (0.0..240.0).contains(&c.1),
            "{c:?}"
        );
        assert!(t.scale() >= cfg.min_scale && t.scale() <= cfg.max_scale);
    }
}
