use std::f64::consts::PI;
use std::sync::Arc;

use gabor_fio::gabor::{weight, Coefficients, GaborSystem, Lattice, WindowKind};
use gabor_fio::grid::{standard_gaussian, Grid, SampledFunction, Side};
use gabor_fio::metaplectic::{hamiltonian_flow, symplectic_to_phase, HamiltonianQuadratic};
use gabor_fio::phase::{
    canonical_map_quadratic, sine_perturbed, symplectic_residual, CanonicalMap, NewtonMap, Phase, QuadraticPhase,
};
use gabor_fio::C64;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn grid() -> Grid {
    Grid::new(1, 8.0, 64).unwrap()
}

fn samples(len: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), len).prop_map(|v| v.into_iter().map(|(a, b)| C64::new(a, b)).collect())
}

fn function(g: Grid) -> impl Strategy<Value = SampledFunction> {
    samples(g.len()).prop_map(move |v| SampledFunction::new(g, Side::Time, v).unwrap())
}

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parseval_and_inversion(f in function(grid())) {
        let fh = f.fourier_transform().unwrap();
        prop_assert!((fh.norm_l2() - f.norm_l2()).abs() <= 1e-12 * f.norm_l2());
        let back = fh.inverse_fourier_transform().unwrap();
        prop_assert!(back.rel_distance(&f).unwrap() < 1e-12);
    }

    #[test]
    fn parseval_in_two_dimensions(f in function(Grid::new(2, 4.0, 16).unwrap())) {
        let fh = f.fourier_transform().unwrap();
        prop_assert!((fh.norm_l2() - f.norm_l2()).abs() <= 1e-12 * f.norm_l2());
        prop_assert!(fh.inverse_fourier_transform().unwrap().rel_distance(&f).unwrap() < 1e-12);
    }

    #[test]
    fn translation_and_modulation_commute_up_to_phase(
        f in function(grid()),
        j in -32i64..32,
        k in -32i64..32,
    ) {
        let g = grid();
        let (x, eta) = ([j as f64 * g.dx()], [k as f64 * g.deta()]);
        let mt = f.translate(&x).unwrap().modulate(&eta).unwrap();
        let tm = f.modulate(&eta).unwrap().translate(&x).unwrap();
        let c = C64::from_polar(1.0, 2.0 * PI * x[0] * eta[0]);
        prop_assert!(mt.rel_distance(&tm.scale(c)).unwrap() < 1e-12);
        let via_freq = f.fourier_transform().unwrap().translate(&x).unwrap().modulate(&eta).unwrap();
        prop_assert!(via_freq.inverse_fourier_transform().unwrap().rel_distance(&mt).unwrap() < 1e-12);
    }

    #[test]
    fn peetre_inequality(z in -50.0..50.0f64, w in -50.0..50.0f64, s in 0.0..4.0f64) {
        let lhs = weight((z + w).powi(2), s);
        prop_assert!(lhs <= 2f64.powf(s / 2.0) * weight(z * z, s) * weight(w * w, s) * (1.0 + 1e-12));
    }

    #[test]
    fn hamiltonian_flow_is_a_group(
        h in prop::array::uniform3(-1.0..1.0f64),
        t1 in -1.0..1.0f64,
        t2 in -1.0..1.0f64,
    ) {
        let m = DMatrix::from_row_slice(2, 2, &[h[0], h[1], h[1], h[2]]);
        let ham = HamiltonianQuadratic::new(m).unwrap();
        let lhs = hamiltonian_flow(&ham, t1 + t2);
        let rhs = hamiltonian_flow(&ham, t2) * hamiltonian_flow(&ham, t1);
        prop_assert!((&lhs - &rhs).amax() < 1e-10 * lhs.amax().max(1.0));
        prop_assert!(symplectic_residual(&lhs) < 1e-10 * lhs.amax().powi(2).max(1.0));
    }

    #[test]
    fn quadratic_phase_round_trips(
        a in -2.0..2.0f64,
        b in prop_oneof![-2.0..-0.25f64, 0.25..2.0f64],
        c in -2.0..2.0f64,
        x0 in -1.0..1.0f64,
        e0 in -1.0..1.0f64,
        y in -3.0..3.0f64,
        eta in -3.0..3.0f64,
    ) {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        let v = |v: f64| DVector::from_element(1, v);
        let qp = QuadraticPhase::new(m(a), m(b), m(c), v(x0), v(e0)).unwrap();
        let chi = canonical_map_quadratic(&qp).unwrap();
        let back = symplectic_to_phase(&chi.matrix, Some(&chi.shift)).unwrap();
        for (p, q) in [(back.a(), qp.a()), (back.b(), qp.b()), (back.c(), qp.c())] {
            prop_assert!((p - q).amax() < 1e-10);
        }
        prop_assert!((back.x0() - qp.x0()).amax() < 1e-10 && (back.eta0() - qp.eta0()).amax() < 1e-10);

        let (x, xi) = chi.forward(&[y], &[eta]).unwrap();
        prop_assert!((qp.grad_eta(x.as_slice(), &[eta])[0] - y).abs() < 1e-9);
        prop_assert!((qp.grad_x(x.as_slice(), &[eta])[0] - xi[0]).abs() < 1e-9);
        let (y2, eta2) = chi.inverse(x.as_slice(), xi.as_slice()).unwrap();
        prop_assert!((y2[0] - y).abs() < 1e-9 && (eta2[0] - eta).abs() < 1e-9);
        prop_assert!(symplectic_residual(&chi.jacobian(&[y], &[eta]).unwrap()) < 1e-8);
    }

    #[test]
    fn newton_map_identities(y in -4.0..4.0f64, eta in -4.0..4.0f64) {
        let phase: Arc<dyn Phase> = Arc::new(sine_perturbed(1, 0.1));
        let chi = NewtonMap::new(Arc::clone(&phase));
        let (x, xi) = chi.forward(&[y], &[eta]).unwrap();
        prop_assert!((phase.grad_eta(x.as_slice(), &[eta])[0] - y).abs() < 1e-9);
        let (y2, eta2) = chi.inverse(x.as_slice(), xi.as_slice()).unwrap();
        prop_assert!((y2[0] - y).abs() < 1e-9 && (eta2[0] - eta).abs() < 1e-9);
        // ∇ₓΦ(x, η) = ξ(∇_ηΦ(x, η), η)
        let x1 = [x[0] + 0.3];
        let y1 = phase.grad_eta(&x1, &[eta]);
        let (_, xi1) = chi.forward(y1.as_slice(), &[eta]).unwrap();
        prop_assert!((phase.grad_x(&x1, &[eta])[0] - xi1[0]).abs() < 1e-9);
        prop_assert!(symplectic_residual(&chi.jacobian(&[y], &[eta]).unwrap()) < 1e-8);
    }
}

fn frame_systems() -> Vec<GaborSystem> {
    let g = grid();
    [(0.5, 0.5), (0.25, 1.0), (0.5, 1.0)]
        .into_iter()
        .map(|(a, b)| GaborSystem::new(standard_gaussian(g), Lattice::new(g, a, b).unwrap()).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn frame_bounds_sandwich(f in function(grid())) {
        for sys in frame_systems() {
            let (a, b) = sys.bounds();
            prop_assert!(0.0 < a && a <= b);
            let e = sys.analyze_kind(WindowKind::Original, &f).unwrap().norm_l2().powi(2);
            let n2 = f.norm_l2().powi(2);
            prop_assert!(a * n2 - 1e-8 <= e && e <= b * n2 + 1e-8, "{a} {e} {b} {n2}");
            let t = sys.analyze_kind(WindowKind::Tight, &f).unwrap().norm_l2().powi(2);
            prop_assert!((t - n2).abs() <= 1e-8 * n2.max(1.0));
        }
    }

    #[test]
    fn dual_and_tight_reconstruct(f in function(grid())) {
        for sys in frame_systems() {
            let c = sys.analyze_kind(WindowKind::Original, &f).unwrap();
            prop_assert!(sys.synthesize_kind(WindowKind::Dual, &c).unwrap().rel_distance(&f).unwrap() < 1e-8);
            let c = sys.analyze_kind(WindowKind::Tight, &f).unwrap();
            prop_assert!(sys.synthesize_kind(WindowKind::Tight, &c).unwrap().rel_distance(&f).unwrap() < 1e-8);
        }
    }

    #[test]
    fn analysis_is_adjoint_to_synthesis(f in function(grid()), vals in samples(256)) {
        let sys = &frame_systems()[0];
        let lat = *sys.lattice();
        prop_assert_eq!(lat.len(), 256);
        let c = Coefficients::new(lat, vals).unwrap();
        for kind in [WindowKind::Original, WindowKind::Dual, WindowKind::Tight] {
            let lhs = sys.analyze_kind(kind, &f).unwrap().inner(&c);
            let rhs = f.inner(&sys.synthesize_kind(kind, &c).unwrap()).unwrap();
            prop_assert!(close(lhs, rhs, 1e-10), "{lhs} {rhs}");
        }
    }
}
