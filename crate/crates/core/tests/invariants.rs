use std::sync::Arc;

use proptest::prelude::*;
use rotodyn::basis::{basis_dimension, build_basis, Parity, SymmetryBlock};
use rotodyn::operators::{total_hamiltonian, OperatorSet, RotationalConstants};
use rotodyn::spectrum::{
    adiabaticity_eta, diagonalize, diagonalize_dense, log_grid, scan_intensity, StateLabel,
};
use rotodyn::units::{
    polarizability_coupling, pulse_intensity, stark_coupling, MoleculeSpec, PulseSpec,
};

fn parity() -> impl Strategy<Value = Parity> {
    prop_oneof![Just(Parity::Even), Just(Parity::Odd)]
}

fn block() -> impl Strategy<Value = SymmetryBlock> {
    (0u32..5, parity(), parity()).prop_map(|(m, k, s)| {
        if m == 0 {
            SymmetryBlock::m0(k, s)
        } else {
            SymmetryBlock::with_m(m, k)
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn couplings_are_bilinear(mu in 0.0..10.0f64, es in 0.0..1e4f64, scale in 0.0..50.0f64) {
        let a = stark_coupling(mu, es).unwrap();
        prop_assert!((stark_coupling(mu * scale, es).unwrap() - scale * a).abs() <= 1e-12 * (1.0 + scale * a));
        prop_assert!((stark_coupling(mu, es * scale).unwrap() - scale * a).abs() <= 1e-12 * (1.0 + scale * a));
        let b = polarizability_coupling(mu, es * 1e8).unwrap();
        prop_assert!((polarizability_coupling(mu * scale, es * 1e8).unwrap() - scale * b).abs() <= 1e-12 * (1.0 + scale * b.abs()));
    }

    #[test]
    fn pulse_is_bounded_and_even(i0 in 1e8..1e13f64, tau in 0.05..50.0f64, x in -5.0..5.0f64) {
        let p = PulseSpec::new(i0, tau).unwrap();
        let t = x * tau;
        let (a, da) = pulse_intensity(t, &p);
        let (b, db) = pulse_intensity(-t, &p);
        prop_assert!(a <= i0 && a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * i0);
        prop_assert!((da + db).abs() <= 1e-9 * (1.0 + da.abs()));
        let half = pulse_intensity(tau / 2.0, &p).0;
        prop_assert!((half / i0 - 0.5).abs() < 1e-12);
        if let Some(tr) = p.rising_time_at(a.max(1e-300)) {
            prop_assert!(tr <= 0.0);
            prop_assert!((tr.abs() - t.abs()).abs() <= 1e-6 * (1.0 + t.abs()));
        }
    }

    #[test]
    fn basis_is_ordered_and_indexable(b in block(), j_max in 0u32..12) {
        prop_assume!(j_max >= b.m());
        let basis = build_basis(b, j_max).unwrap();
        prop_assert_eq!(basis.len(), basis_dimension(b, j_max).unwrap());
        let fs = basis.functions();
        for (i, f) in fs.iter().enumerate() {
            prop_assert_eq!(basis.index_of(f), Some(i));
            prop_assert!(f.m == b.m() && f.j <= j_max && f.k.unsigned_abs() <= f.j);
            prop_assert!(b.k_parity().matches(f.k as i64));
            let n: f64 = f.components().map(|(_, c)| c * c).sum();
            prop_assert!((n - 1.0).abs() < 1e-14);
        }
        for w in fs.windows(2) {
            prop_assert!((w[0].j, w[0].k) < (w[1].j, w[1].k));
        }
    }

    #[test]
    fn angular_operators_have_bounded_spectra(b in block(), j_max in 1u32..9) {
        prop_assume!(j_max >= b.m() && basis_dimension(b, j_max).unwrap() > 0);
        let basis = Arc::new(build_basis(b, j_max).unwrap());
        let ops = OperatorSet::build(basis, RotationalConstants { b_x: 1.0, b_y: 2.0, b_z: 3.0 });
        let n = ops.dim();
        let spectrum = |m: &rotodyn::sparse::SymmetricMatrix| diagonalize_dense(m.to_dense(), n).unwrap().values;
        for e in spectrum(ops.cos_theta()) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&e));
        }
        for m in [ops.cos2_theta(), ops.sin2theta_sin2chi()] {
            for e in spectrum(m) {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&e));
            }
        }
        // The rotor is positive semidefinite with constants > 0.
        prop_assert!(spectrum(ops.rotor())[0] >= -1e-12);
    }

    #[test]
    fn sparse_and_dense_diagonalization_agree(es in 0.0..3000.0f64, log_i in 8.0..12.0f64, m in 0u32..4) {
        let mol = MoleculeSpec::benzonitrile();
        let b = if m == 0 { SymmetryBlock::m0(Parity::Even, Parity::Even) } else { SymmetryBlock::with_m(m, Parity::Even) };
        let ops = OperatorSet::for_molecule(Arc::new(build_basis(b, 8).unwrap()), &mol);
        let h = total_hamiltonian(&ops, &mol, es, 10f64.powf(log_i)).unwrap();
        let a = diagonalize(&h, 6).unwrap();
        let d = diagonalize_dense(h.to_dense(), 6).unwrap();
        for k in 0..6 {
            prop_assert!((a.values[k] - d.values[k]).abs() <= 1e-9 * (1.0 + d.values[k].abs()));
        }
    }

    #[test]
    fn labels_round_trip(j in 0u32..40, ka in 0u32..40, m in 0u32..40, plus in any::<bool>()) {
        prop_assume!(ka <= j && m <= j);
        let kc = j - ka + u32::from(plus && ka > 0);
        prop_assume!(kc <= j);
        let l = StateLabel::new(j, ka, kc, m);
        prop_assert_eq!(l.to_string().parse::<StateLabel>().unwrap(), l);
    }

    #[test]
    fn log_grid_is_geometric(lo in 1e3..1e9f64, ratio in 1.5..1e4f64, n in 2usize..200) {
        let g = log_grid(lo, lo * ratio, n).unwrap();
        prop_assert_eq!(g.len(), n);
        prop_assert_eq!(g[0], lo);
        prop_assert_eq!(g[n - 1], lo * ratio);
        let q = g[1] / g[0];
        for w in g.windows(2) {
            prop_assert!((w[1] / w[0] / q - 1.0).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn eta_scales_linearly_with_slope(slope in 1e9..1e13f64, factor in 0.1..100.0f64, point in 0usize..5) {
        let mol = MoleculeSpec::benzonitrile();
        let basis = Arc::new(build_basis(SymmetryBlock::with_m(3, Parity::Even), 10).unwrap());
        let ops = OperatorSet::for_molecule(basis, &mol);
        let grid = log_grid(1e9, 1e11, 5).unwrap();
        let scan = scan_intensity(&ops, &mol, 300.0, &grid, 4).unwrap();
        let a = adiabaticity_eta(&scan, point, (0, 1), slope, &ops, &mol).unwrap();
        let b = adiabaticity_eta(&scan, point, (0, 1), slope * factor, &ops, &mol).unwrap();
        prop_assert!((b - factor * a).abs() <= 1e-10 * b.abs().max(1e-300));
        let r = adiabaticity_eta(&scan, point, (1, 0), slope, &ops, &mol).unwrap();
        prop_assert!((r - a).abs() <= 1e-12 * a.abs());
    }
}
