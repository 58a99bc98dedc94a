use std::time::Instant;

use gabor_fio::analysis::{decay_report, mod_norm_default, random_packets};
use gabor_fio::fio::{apply_fio, gabor_matrix_direct, gabor_matrix_via_symbol_stft, GaborMatrix, Route, Symbol, SymbolSpec};
use gabor_fio::gabor::{mixed_seq_norm, GaborSystem, Lattice, MixedNormSpec, WindowKind};
use gabor_fio::grid::{gaussian, standard_gaussian, Grid};
use gabor_fio::metaplectic::{apply_factors, factorize};
use gabor_fio::phase::{canonical_map_quadratic, Phase, PhaseSpec, QuadraticPhase};
use gabor_fio::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn system(l: f64, n: usize) -> GaborSystem {
    let g = Grid::new(1, l, n).unwrap();
    GaborSystem::new(standard_gaussian(g), Lattice::new(g, 0.5, 0.5).unwrap()).unwrap()
}

#[test]
fn sigma_one_quadratic_operators_have_constant_gain() {
    let g = Grid::new(1, 8.0, 64).unwrap();
    let inputs = random_packets(g, 20, 7).unwrap();
    for spec in [
        PhaseSpec::Identity,
        PhaseSpec::Translation { x0: 1.0 },
        PhaseSpec::Modulation { eta0: 1.0 },
        PhaseSpec::Chirp { a: 1.0 },
        PhaseSpec::Multiplier { c: 1.0 },
        PhaseSpec::FreeSchrodinger { t: 0.5 },
    ] {
        let qp = spec.quadratic(1).unwrap();
        let ratios: Vec<f64> =
            inputs.iter().map(|f| apply_fio(&qp, &Symbol::One, f).unwrap().norm_l2() / f.norm_l2()).collect();
        let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        assert!((hi - lo) / hi < 1e-6, "{spec:?}: {lo} {hi}");
    }
}

#[test]
fn factors_scale_norms_by_dilation_determinant() {
    let g = Grid::new(1, 16.0, 256).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let inputs: Vec<_> = (0..10)
        .map(|_| {
            let eta = (rng.gen_range(-1.0..1.0) / g.deta()).round() * g.deta();
            gaussian(g, &[rng.gen_range(-1.0..1.0)], 1.0).unwrap().function.modulate(&[eta]).unwrap()
        })
        .collect();
    for b in [1.0, 0.5, 0.75] {
        for (a, c) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, -1.0)] {
            let m = |v: f64| nalgebra::DMatrix::from_element(1, 1, v);
            let v = |v: f64| nalgebra::DVector::from_element(1, v);
            let qp = QuadraticPhase::new(m(a), m(b), m(c), v(0.25), v(0.5)).unwrap();
            let factors = factorize(&qp).unwrap();
            for f in &inputs {
                let ratio = apply_factors(&factors, f).unwrap().norm_l2() / f.norm_l2();
                assert!((ratio - b.abs().powf(-0.5)).abs() < 1e-8, "b={b} a={a} c={c}: {ratio}");
            }
        }
    }
}

#[test]
fn routes_agree_for_smooth_symbols() {
    let sys = system(8.0, 64);
    for spec in [PhaseSpec::Identity, PhaseSpec::Chirp { a: 1.0 }, PhaseSpec::Multiplier { c: 1.0 }] {
        let qp = spec.quadratic(1).unwrap();
        assert!(qp.grid_periodic());
        for sym in [SymbolSpec::One, SymbolSpec::GaussX, SymbolSpec::GaussXEta] {
            let symbol = sym.build();
            let direct = gabor_matrix_direct(&qp, &symbol, &sys, WindowKind::Tight, 1e-10).unwrap();
            let sampled = symbol.sample(sys.grid()).unwrap();
            let via = gabor_matrix_via_symbol_stft(&qp, &sampled, &sys, WindowKind::Tight, 1e-10).unwrap();
            let diff = direct.max_difference(&via).unwrap();
            assert!(diff <= 1e-4 * direct.max_modulus(), "{spec:?} {sym:?}: {diff}");
        }
    }
}

#[test]
fn stored_entries_grow_linearly_with_lattice_size() {
    let qp = PhaseSpec::Chirp { a: 1.0 }.quadratic(1).unwrap();
    let per_column = |l: f64, n: usize| {
        let m = gabor_matrix_direct(&qp, &Symbol::One, &system(l, n), WindowKind::Tight, 1e-8).unwrap();
        (m.lattice().len(), m.nnz() as f64 / m.lattice().len() as f64)
    };
    let t = Instant::now();
    let (len_small, small) = per_column(16.0, 256);
    let (len_large, large) = per_column(24.0, 576);
    assert!(len_large as f64 / len_small as f64 > 2.0);
    // quadratic growth would scale the per-column count with the lattice size
    assert!(large / small < 1.25, "{small} -> {large}");
    eprintln!("sparsity: {small:.1} -> {large:.1} entries per column ({:.1?})", t.elapsed());
}

fn random_dense(lattice: &Lattice, seed: u64) -> GaborMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = lattice.len();
    let entries: Vec<_> = (0..len)
        .flat_map(|c| (0..len).map(move |r| (r, c)))
        .map(|(r, c)| (r, c, C64::from_polar(rng.gen_range(0.5..1.0), rng.gen_range(0.0..std::f64::consts::TAU))))
        .collect();
    GaborMatrix::from_entries(*lattice, 0.0, Route::Direct, "random", entries).unwrap()
}

#[test]
fn random_matrix_fails_the_decay_criteria() {
    let chi = canonical_map_quadratic(&QuadraticPhase::identity(1)).unwrap();
    let reports: Vec<_> = [(8.0, 64), (16.0, 256)]
        .into_iter()
        .map(|(l, n)| {
            let m = random_dense(system(l, n).lattice(), 3);
            decay_report(&m, &chi, &[1, 2, 3]).unwrap()
        })
        .collect();
    for r in &reports {
        assert!(r.slope.abs() < 0.5, "slope {}", r.slope);
    }
    for (a, b) in reports[0].constants.iter().zip(&reports[1].constants) {
        assert!(b.c_hat / a.c_hat > 2.0, "N={}: {} -> {}", a.n, a.c_hat, b.c_hat);
    }
}

#[test]
fn modulation_and_sequence_norms_are_equivalent() {
    let sys = system(8.0, 64);
    for p in [1.0, 2.0, f64::INFINITY] {
        let spec = MixedNormSpec::new(p, p, 0.0).unwrap();
        let ratios: Vec<f64> = [0.5, 0.7, 1.0, 1.4, 2.0]
            .into_iter()
            .map(|w| {
                let f = gaussian(*sys.grid(), &[0.0], w).unwrap().function;
                let c = sys.analyze_kind(WindowKind::Tight, &f).unwrap();
                mod_norm_default(&f, &spec).unwrap() / mixed_seq_norm(&c, &spec)
            })
            .collect();
        let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        assert!(lo > 0.0 && hi / lo <= 10.0, "p={p}: {ratios:?}");
    }
}
