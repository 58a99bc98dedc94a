//! Quadratic phases as products of elementary metaplectic factors,
//! Hamiltonian flows of quadratic Hamiltonians, and the Schrödinger demo.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{FioError, Result};
use crate::fio::{apply_fio, Symbol};
use crate::grid::{SampledFunction, Side};
use crate::phase::{symplectic_form, QuadraticPhase};

/// Elementary operators of T = M_{η₀} U_A D_B F⁻¹U_C F T_{x₀}.
#[derive(Clone, Debug, PartialEq)]
pub enum ElementaryFactor {
    /// f ↦ e^{2πiη₀·x} f.
    Modulation(DVector<f64>),
    /// f ↦ f(· − x₀).
    Translation(DVector<f64>),
    /// f ↦ f(B·).
    Dilation(DMatrix<f64>),
    /// U_A: f ↦ e^{πiAx·x} f.
    ChirpX(DMatrix<f64>),
    /// F⁻¹U_CF: the Fourier multiplier e^{πiCη·η}.
    ChirpFreq(DMatrix<f64>),
}

/// Factor list [M_{η₀}, U_A, D_B, F⁻¹U_CF, T_{x₀}], applied right to left.
pub fn factorize(qp: &QuadraticPhase) -> Result<Vec<ElementaryFactor>> {
    if qp.b().determinant().abs() < 1e-12 {
        return Err(FioError::Singular("B".into()));
    }
    Ok(vec![
        ElementaryFactor::Modulation(qp.eta0().clone()),
        ElementaryFactor::ChirpX(qp.a().clone()),
        ElementaryFactor::Dilation(qp.b().clone()),
        ElementaryFactor::ChirpFreq(qp.c().clone()),
        ElementaryFactor::Translation(qp.x0().clone()),
    ])
}

fn quad(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let d = m.nrows();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += m[(i, j)] * x[i] * x[j];
        }
    }
    s
}

fn multiply(f: &SampledFunction, g: impl Fn(&[f64]) -> C64) -> SampledFunction {
    let grid = *f.grid();
    let d = grid.d();
    let values = f
        .values()
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let p = match f.side() {
                Side::Time => grid.time_point(j),
                Side::Frequency => grid.freq_point(j),
            };
            v * g(&p[..d])
        })
        .collect();
    SampledFunction::new(grid, f.side(), values).expect("same length")
}

fn cis(t: f64) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * t)
}

/// Smallest denominator q ≤ 64 with b = p/q.
fn rational(b: f64) -> Option<(i64, i64)> {
    (1..=64i64).find_map(|q| {
        let p = (b * q as f64).round();
        ((b * q as f64 - p).abs() < 1e-12 * q as f64 && p != 0.0).then_some((p as i64, q))
    })
}

/// h ↦ h(b·) along one axis by exact trigonometric interpolation at the
/// points b·x̃_j, with b = p/q.
fn dilate_axis(f: &SampledFunction, axis: usize, p: i64, q: i64) -> Result<SampledFunction> {
    let grid = *f.grid();
    let n = grid.n();
    let d = grid.d();
    let big = q as usize * n;
    let stride = if d == 2 && axis == 0 { n } else { 1 };
    let lines: Vec<usize> = if d == 1 {
        vec![0]
    } else if axis == 0 {
        (0..n).collect()
    } else {
        (0..n).map(|r| r * n).collect()
    };
    let fwd = crate::fft::plan(n, false);
    let inv = crate::fft::plan(big, true);
    let mut out = f.values().to_vec();
    let mut line = vec![C64::new(0.0, 0.0); n];
    let mut pad = vec![C64::new(0.0, 0.0); big];
    for start in lines {
        for (t, slot) in line.iter_mut().enumerate() {
            *slot = f.values()[start + t * stride];
        }
        fwd.process(&mut line);
        pad.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for (k, v) in line.iter().enumerate() {
            let signed = if k >= n / 2 { k as i64 - n as i64 } else { k as i64 };
            pad[signed.rem_euclid(big as i64) as usize] = *v;
        }
        inv.process(&mut pad);
        for t in 0..n {
            let jt = if t >= n / 2 { t as i64 - n as i64 } else { t as i64 };
            out[start + t * stride] = pad[(p * jt).rem_euclid(big as i64) as usize] / n as f64;
        }
    }
    SampledFunction::new(grid, Side::Time, out)
}

fn apply_one(factor: &ElementaryFactor, f: &SampledFunction) -> Result<SampledFunction> {
    let d = f.grid().d();
    match factor {
        ElementaryFactor::Modulation(e0) => Ok(multiply(f, |x| cis((0..d).map(|i| e0[i] * x[i]).sum()))),
        ElementaryFactor::ChirpX(a) => Ok(multiply(f, |x| cis(0.5 * quad(a, x)))),
        ElementaryFactor::Translation(x0) => {
            let hat = multiply(&f.fourier_transform()?, |e| cis(-(0..d).map(|i| x0[i] * e[i]).sum::<f64>()));
            hat.inverse_fourier_transform()
        }
        ElementaryFactor::ChirpFreq(c) => {
            let hat = multiply(&f.fourier_transform()?, |e| cis(0.5 * quad(c, e)));
            hat.inverse_fourier_transform()
        }
        ElementaryFactor::Dilation(b) => {
            for i in 0..d {
                for j in 0..d {
                    if i != j && b[(i, j)] != 0.0 {
                        return Err(FioError::NonRepresentableDilation(b[(i, j)]));
                    }
                }
            }
            let mut out = f.clone();
            for axis in 0..d {
                let bi = b[(axis, axis)];
                let (p, q) = rational(bi).ok_or(FioError::NonRepresentableDilation(bi))?;
                if (p, q) != (1, 1) {
                    out = dilate_axis(&out, axis, p, q)?;
                }
            }
            Ok(out)
        }
    }
}

/// Applies the factors right to left.
pub fn apply_factors(factors: &[ElementaryFactor], f: &SampledFunction) -> Result<SampledFunction> {
    f.expect_side(Side::Time)?;
    let mut out = f.clone();
    for factor in factors.iter().rev() {
        out = apply_one(factor, &out)?;
    }
    Ok(out)
}

/// Quadratic Hamiltonian given by the symmetric matrix H' of its Weyl
/// symbol 2π z·H'z, z = (x, ξ).
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianQuadratic {
    h: DMatrix<f64>,
}

impl HamiltonianQuadratic {
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        if h.nrows() != h.ncols() || !h.nrows().is_multiple_of(2) || !(h.nrows() == 2 || h.nrows() == 4) {
            return Err(FioError::ShapeMismatch { expected: 2, found: h.nrows() });
        }
        if (&h - h.transpose()).amax() > 0.0 {
            return Err(FioError::Parse("Hamiltonian matrix must be symmetric".into()));
        }
        Ok(HamiltonianQuadratic { h })
    }
    /// H = −(1/4π)Δ, Weyl symbol π|ξ|².
    pub fn free_particle(d: usize) -> Self {
        let mut h = DMatrix::zeros(2 * d, 2 * d);
        for i in 0..d {
            h[(d + i, d + i)] = 0.5;
        }
        HamiltonianQuadratic { h }
    }
    /// H = −(1/4π)Δ + π|x|², Weyl symbol π(|x|² + |ξ|²).
    pub fn harmonic_oscillator(d: usize) -> Self {
        HamiltonianQuadratic { h: DMatrix::identity(2 * d, 2 * d) * 0.5 }
    }
    pub fn dim(&self) -> usize {
        self.h.nrows() / 2
    }
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }
}

/// JSON form: the symmetric matrix H', row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianRecord {
    pub d: usize,
    pub h: Vec<f64>,
}

impl TryFrom<HamiltonianRecord> for HamiltonianQuadratic {
    type Error = FioError;
    fn try_from(r: HamiltonianRecord) -> Result<Self> {
        let m = 2 * r.d;
        if r.h.len() != m * m {
            return Err(FioError::ShapeMismatch { expected: m * m, found: r.h.len() });
        }
        HamiltonianQuadratic::new(DMatrix::from_row_slice(m, m, &r.h))
    }
}

/// S(t) = exp(t·Ω·2H'), the flow of the Hamiltonian vector field.
pub fn hamiltonian_flow(h: &HamiltonianQuadratic, t: f64) -> DMatrix<f64> {
    let omega = symplectic_form(h.dim());
    (omega * h.matrix() * (2.0 * t)).exp()
}

/// Generating quadratic phase of z ↦ Sz + shift, from the blocks
/// B = M₁₁⁻¹, C = −M₁₁⁻¹M₁₂, A = M₂₁M₁₁⁻¹.
pub fn symplectic_to_phase(s: &DMatrix<f64>, shift: Option<&DVector<f64>>) -> Result<QuadraticPhase> {
    let d = s.nrows() / 2;
    if s.nrows() != 2 * d || s.ncols() != 2 * d || d == 0 {
        return Err(FioError::ShapeMismatch { expected: 2 * d, found: s.ncols() });
    }
    let m11 = s.view((0, 0), (d, d)).into_owned();
    let m12 = s.view((0, d), (d, d)).into_owned();
    let m21 = s.view((d, 0), (d, d)).into_owned();
    let det = m11.determinant();
    if det.abs() < 1e-10 * s.amax().max(1.0) {
        return Err(FioError::Caustic { det });
    }
    let b = m11.clone().try_inverse().ok_or(FioError::Caustic { det })?;
    let c = -&b * &m12;
    let a = &m21 * &b;
    let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
    // shift = (B⁻¹x₀, AB⁻¹x₀ + η₀)
    let (x0, eta0) = match shift {
        None => (DVector::zeros(d), DVector::zeros(d)),
        Some(sh) => {
            let s1 = sh.rows(0, d).into_owned();
            let s2 = sh.rows(d, d).into_owned();
            (&b * &s1, &s2 - &a * &s1)
        }
    };
    QuadraticPhase::new(sym(a), b, sym(c), x0, eta0)
}

/// Solution u(t) = e^{itH}u₀ of i∂u/∂t + Hu = 0 and the phase used.
#[derive(Clone, Debug)]
pub struct SchrodingerStep {
    pub u: SampledFunction,
    pub phase: QuadraticPhase,
    /// |det B|^{1/2}, the factor making the quadrature operator unitary.
    pub amplitude: f64,
}

/// e^{itH}u₀ as the quadratic-phase FIO generated by the flow S(−t),
/// rescaled by |det B|^{1/2}. Constant phase factors are not tracked.
pub fn schrodinger_demo(h: &HamiltonianQuadratic, t: f64, u0: &SampledFunction) -> Result<SchrodingerStep> {
    let s = hamiltonian_flow(h, -t);
    let phase = symplectic_to_phase(&s, None)?.labelled("schrodinger");
    let amplitude = phase.b().determinant().abs().sqrt();
    let u = apply_fio(&phase, &Symbol::One, u0)?.scale(C64::new(amplitude, 0.0));
    Ok(SchrodingerStep { u, phase, amplitude })
}

/// Exact free propagator: the Fourier multiplier e^{πit|η|²}.
pub fn free_particle_multiplier(t: f64, u0: &SampledFunction) -> Result<SampledFunction> {
    let hat = multiply(&u0.fourier_transform()?, |e| cis(0.5 * t * e.iter().map(|v| v * v).sum::<f64>()));
    hat.inverse_fourier_transform()
}

/// Distance ‖a − c·b‖/‖b‖ after the optimal unimodular constant c.
pub fn phase_aligned_distance(a: &SampledFunction, b: &SampledFunction) -> Result<f64> {
    let ip = a.inner(b)?;
    let c = if ip.norm() > 0.0 { ip / ip.norm() } else { C64::new(1.0, 0.0) };
    a.rel_distance(&b.scale(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gaussian, Grid};
    use crate::phase::{canonical_map_quadratic, PhaseSpec};

    fn grid() -> Grid {
        Grid::new(1, 16.0, 256).unwrap()
    }

    #[test]
    fn factors_match_quadrature() {
        let g = grid();
        let f = gaussian(g, &[0.5], 1.0).unwrap().function.modulate(&[0.5]).unwrap();
        for spec in PhaseSpec::quadratic_catalog() {
            let qp = spec.quadratic(1).unwrap();
            let fast = apply_factors(&factorize(&qp).unwrap(), &f).unwrap();
            let slow = apply_fio(&qp, &Symbol::One, &f).unwrap();
            assert!(phase_aligned_distance(&fast, &slow).unwrap() < 1e-9, "{spec:?}");
        }
    }

    #[test]
    fn rational_dilation() {
        let g = grid();
        let f = gaussian(g, &[0.0], 1.0).unwrap().function;
        let qp = PhaseSpec::Dilation { b: 0.75 }.quadratic(1).unwrap();
        let fast = apply_factors(&factorize(&qp).unwrap(), &f).unwrap();
        let slow = apply_fio(&qp, &Symbol::One, &f).unwrap();
        assert!(fast.rel_distance(&slow).unwrap() < 1e-9);
        let bad = PhaseSpec::Dilation { b: std::f64::consts::PI }.quadratic(1).unwrap();
        assert!(matches!(
            apply_factors(&factorize(&bad).unwrap(), &f),
            Err(FioError::NonRepresentableDilation(_))
        ));
    }

    #[test]
    fn flows() {
        let free = hamiltonian_flow(&HamiltonianQuadratic::free_particle(1), 1.0);
        assert!((free - DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])).amax() < 1e-12);
        let t = 0.3;
        let rot = hamiltonian_flow(&HamiltonianQuadratic::harmonic_oscillator(1), t);
        let want = DMatrix::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()]);
        assert!((rot - want).amax() < 1e-12);
        assert!((hamiltonian_flow(&HamiltonianQuadratic::free_particle(1), 0.0) - DMatrix::identity(2, 2)).amax() == 0.0);
    }

    #[test]
    fn phase_from_symplectic() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let qp = symplectic_to_phase(&s, None).unwrap();
        assert_eq!((qp.a()[(0, 0)], qp.b()[(0, 0)], qp.c()[(0, 0)]), (0.0, 1.0, -1.0));
        let back = canonical_map_quadratic(&qp).unwrap();
        assert!((back.matrix - s).amax() < 1e-12);
        let fourier = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(matches!(symplectic_to_phase(&fourier, None), Err(FioError::Caustic { .. })));
    }

    #[test]
    fn shift_round_trip() {
        let qp = QuadraticPhase::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::from_element(1, 1, -0.25),
            DVector::from_element(1, 1.0),
            DVector::from_element(1, 0.5),
        )
        .unwrap();
        let map = canonical_map_quadratic(&qp).unwrap();
        let back = symplectic_to_phase(&map.matrix, Some(&map.shift)).unwrap();
        for (a, b) in [(qp.a(), back.a()), (qp.b(), back.b()), (qp.c(), back.c())] {
            assert!((a - b).amax() < 1e-12);
        }
        assert!((qp.x0() - back.x0()).amax() < 1e-12);
        assert!((qp.eta0() - back.eta0()).amax() < 1e-12);
    }

    #[test]
    fn free_schrodinger_two_routes() {
        let g = grid();
        let u0 = gaussian(g, &[0.0], 1.0).unwrap().function.modulate(&[1.0]).unwrap();
        let step = schrodinger_demo(&HamiltonianQuadratic::free_particle(1), 0.5, &u0).unwrap();
        let exact = free_particle_multiplier(0.5, &u0).unwrap();
        assert!(phase_aligned_distance(&step.u, &exact).unwrap() < 1e-6);
        let zero = schrodinger_demo(&HamiltonianQuadratic::free_particle(1), 0.0, &u0).unwrap();
        assert!(zero.u.rel_distance(&u0).unwrap() < 1e-12);
    }
}
