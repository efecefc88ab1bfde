use vortex_core::config_lab::{expanding_triple, self_similarity_fit};
use vortex_core::diagnostics::center_of_mass;
use vortex_core::io::{read_snapshot, write_snapshot, SnapshotFormat};
use vortex_core::point_vortex::{integrate_with, IntegrateOptions, Sampling};
use vortex_core::{run, RunConfig, TreeParams, Vec2, VelocityBackend};

fn centres(state: &vortex_core::SimulationState) -> Vec<Vec2> {
    state.clouds.iter().map(|c| center_of_mass(c).unwrap()).collect()
}

#[test]
fn single_particle_patches_follow_the_point_vortex_solution() {
    let mut cfg = RunConfig::new(expanding_triple(), 100.0, 400.0, 1.0, 1);
    cfg.blob_radius = Some(0.0);
    cfg.snapshot_every = 1000;
    let y = cfg.prepared_reference().unwrap();
    let beta = self_similarity_fit(&y).unwrap().beta_rate;
    let snaps = run(cfg).unwrap();
    let ode = integrate_with(
        &y.scaled(10.0).unwrap(),
        100.0,
        400.0,
        &IntegrateOptions::new(1e-12).sampling(Sampling::Times(snaps.iter().map(|(t, _)| *t).collect())),
    )
    .unwrap();
    assert_eq!(ode.times.len(), snaps.len());
    for ((t, state), sys) in snaps.iter().zip(&ode.states) {
        let exact: Vec<Vec2> = y.positions().iter().map(|p| p.rotate(beta * (t / 100.0).ln()) * t.sqrt()).collect();
        for ((c, o), e) in centres(state).iter().zip(sys.positions()).zip(&exact) {
            assert!((*c - *o).norm() < 1e-6 * t.sqrt(), "t={t}: {c:?} vs ode {o:?}");
            assert!((*c - *e).norm() < 1e-6 * t.sqrt(), "t={t}: {c:?} vs exact {e:?}");
        }
    }
}

#[test]
fn tree_and_direct_runs_agree() {
    let mut cfg = RunConfig::new(expanding_triple(), 100.0, 102.0, 1.0, 300);
    cfg.snapshot_every = 100;
    let direct = run(cfg.clone()).unwrap();
    cfg.backend = VelocityBackend::Tree(TreeParams {
        opening_angle: 0.3,
        ..TreeParams::default()
    });
    let tree = run(cfg).unwrap();
    let (a, b) = (&direct.last().unwrap().1, &tree.last().unwrap().1);
    assert_eq!(a.time, b.time);
    for (ca, cb) in centres(a).iter().zip(&centres(b)) {
        assert!((*ca - *cb).norm() < 1e-6, "{ca:?} vs {cb:?}");
    }
}

#[test]
fn snapshot_files_round_trip_a_run() {
    let mut cfg = RunConfig::new(expanding_triple(), 100.0, 101.0, 1.0, 25);
    cfg.snapshot_every = 4;
    let snaps = run(cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for format in [SnapshotFormat::Csv, SnapshotFormat::Binary] {
        for (step, (_, state)) in snaps.iter().enumerate() {
            let path = dir.path().join(format!("s{step}.{}", format.extension()));
            write_snapshot(&path, state, step as u64, format).unwrap();
            let (back, s) = read_snapshot(&path).unwrap();
            assert_eq!(s, step as u64);
            assert_eq!(&back, state);
        }
    }
}
