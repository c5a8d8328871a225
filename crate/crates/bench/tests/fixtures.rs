use rpcf::solver::{LinearOperator, NormalSystem};
use rpcf_bench::{penalties, sequence, solver_problem, spectra, tracker, CHANNELS, GRID};

#[test]
fn solver_fixture_matches_tracker_shape() {
    let rp = solver_problem();
    assert_eq!(rp.problem.dims(), GRID);
    assert_eq!(rp.problem.channels(), CHANNELS);
    let gamma = penalties();
    let op = NormalSystem::new(&rp.memory, &rp.problem, 0.01, &gamma).unwrap();
    let out = op.apply(&spectra(CHANNELS)).unwrap();
    assert_eq!(out.len(), CHANNELS);
    assert!(out
        .iter()
        .all(|s| s.dims() == GRID && s.max_abs().is_finite()));
}

#[test]
fn tracking_fixture_has_default_geometry() {
    let seq = sequence(7);
    assert_eq!(seq.frames.len(), 7);
    let mut t = tracker(&seq);
    assert_eq!(t.geometry().grid, GRID);
    assert_eq!(t.filter().channels.len(), CHANNELS);
    let updates = seq.frames[1..]
        .iter()
        .filter(|f| t.step(f).unwrap().update.is_some())
        .count();
    assert_eq!(updates, 1);
}
