use rotodyn::basis::{Parity, SymmetryBlock};
use rotodyn::dynamics::{run, sweep, RunConfig};
use rotodyn::spectrum::StateLabel;
use rotodyn::units::{DcSpec, MoleculeSpec, PulseSpec};

fn label(s: &str) -> StateLabel {
    s.parse().unwrap()
}

fn ground(es: f64, tau: f64, j_max: u32) -> RunConfig {
    let mut c = RunConfig::new(
        MoleculeSpec::benzonitrile(),
        SymmetryBlock::m0(Parity::Even, Parity::Even),
        label("0_00_0"),
        es,
        PulseSpec::new(7e11, tau).unwrap(),
    )
    .unwrap();
    c.j_max = j_max;
    c.sample_count = 60;
    c
}

#[test]
fn ground_state_trajectory_is_unitary() {
    let traj = run(&ground(600.0, 0.5, 24)).unwrap();
    for s in &traj.samples {
        assert!((s.norm - 1.0).abs() < 1e-7);
        assert!((-1.0..=1.0).contains(&s.cos_theta));
        let tracked: f64 = s.populations.iter().sum();
        assert!(tracked <= 1.0 + 1e-8);
        assert!(s.leakage() > -1e-8);
    }
    assert!(traj.warnings.is_empty(), "{:?}", traj.warnings);
}

#[test]
fn ground_state_doublet_closes_at_peak() {
    let (a, b) = (label("0_00_0"), label("1_01_0"));
    for (es, tau) in [(300.0, 0.5), (300.0, 1.0), (600.0, 0.5)] {
        let mut c = ground(es, tau, 24);
        c.sample_count = 4;
        let traj = run(&c).unwrap();
        let doublet = traj.final_population(a).unwrap() + traj.final_population(b).unwrap();
        assert!(
            (doublet - 1.0).abs() < 1e-3,
            "Es = {es}, tau = {tau}: {doublet}"
        );
        // The pulse transfers population into the upper doublet partner.
        assert!(traj.final_population(b).unwrap() > 0.05);
    }
}

#[test]
fn intensity_samples_are_geometric_and_end_at_peak() {
    let traj = run(&ground(300.0, 1.0, 12)).unwrap();
    let s = &traj.samples;
    assert_eq!(s.len(), 60);
    assert_eq!(s.last().unwrap().t, 0.0);
    assert!((s.last().unwrap().intensity / 7e11 - 1.0).abs() < 1e-12);
    let q = s[1].intensity / s[0].intensity;
    for w in s.windows(2) {
        assert!((w[1].intensity / w[0].intensity / q - 1.0).abs() < 1e-8);
    }
}

fn ramped(rate: f64) -> RunConfig {
    let mut c = RunConfig::new(
        MoleculeSpec::benzonitrile(),
        SymmetryBlock::m0(Parity::Even, Parity::Even),
        label("0_00_0"),
        20_000.0,
        PulseSpec::with_window(0.0, 5.0, -0.01, 0.0).unwrap(),
    )
    .unwrap();
    c.j_max = 10;
    c.n_track = 6;
    c.sample_count = 4;
    c.sil.dt_fs = 30.0;
    let ramp_time = 20_000.0 / rate;
    c.dc = DcSpec::ramp(20_000.0, rate, -0.01 - ramp_time - 0.01).unwrap();
    c
}

#[test]
fn slow_ramp_is_adiabatic_and_sudden_ramp_is_reported() {
    let slow = run(&ramped(20_000.0 / 6.0)).unwrap();
    assert!(slow.warnings.is_empty(), "{:?}", slow.warnings);
    let rank = slow
        .labels
        .iter()
        .position(|&l| l == label("0_00_0"))
        .unwrap();
    assert!(slow.samples.last().unwrap().populations[rank] > 0.99);
    assert_eq!(slow.samples[0].es, 0.0);
    assert_eq!(slow.samples.last().unwrap().es, 20_000.0);

    let sudden = run(&ramped(2e9)).unwrap();
    assert!(
        sudden.warnings.iter().any(|w| w.contains("not adiabatic")),
        "{:?}",
        sudden.warnings
    );
}

#[test]
fn sweep_rows_are_ordered_and_isolated() {
    assert!(sweep(&[], 3).is_empty());
    let mut configs: Vec<RunConfig> = [0.3, 0.6]
        .iter()
        .map(|&tau| {
            let mut c = ground(300.0, tau, 8);
            c.sample_count = 3;
            c
        })
        .collect();
    let mut bad = configs[0].clone();
    bad.n_track = 1;
    bad.initial_label = label("1_01_0");
    configs.insert(1, bad);
    let rows = sweep(&configs, 2);
    assert_eq!(
        rows.iter().map(|r| r.index).collect::<Vec<_>>(),
        vec![0, 1, 2]
    );
    assert!(rows[0].result.is_ok() && rows[2].result.is_ok());
    assert!(rows[1].result.is_err());
    let top = &rows[0].result.as_ref().unwrap().top_populations;
    assert_eq!(top.len(), 2);
    assert!(top[0].1 >= top[1].1);
}

#[test]
fn orientation_grows_with_static_field() {
    let configs: Vec<RunConfig> = [500.0, 1000.0, 2000.0]
        .iter()
        .map(|&es| {
            let mut c = RunConfig::new(
                MoleculeSpec::benzonitrile(),
                SymmetryBlock::with_m(1, Parity::Even),
                label("3_03_1"),
                es,
                PulseSpec::new(7e11, 10.0).unwrap(),
            )
            .unwrap();
            c.sample_count = 4;
            c
        })
        .collect();
    let cos: Vec<f64> = sweep(&configs, 1)
        .into_iter()
        .map(|r| r.result.unwrap().cos_theta)
        .collect();
    assert!(cos.windows(2).all(|w| w[1] > w[0]), "{cos:?}");
}
