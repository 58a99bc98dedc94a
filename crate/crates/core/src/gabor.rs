//! Short-time Fourier transform, separable Gabor systems on the torus,
//! frame operators, dual and tight windows, and mixed sequence norms.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{FioError, Result};
use crate::fft::{fft_nd, fold};
use crate::grid::{wrap_centered, Grid, SampledFunction, Side};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Separable lattice αℤ^d × βℤ^d restricted to the grid.
///
/// α = a·Δx and β = b·Δη for integers a, b dividing n. Time points are
/// iα for i in [0, n/a); frequency points are βk for k in the centered
/// range [-⌊K/2⌋, K - ⌊K/2⌋) with K = n/b.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    grid: Grid,
    a: usize,
    b: usize,
}

impl Lattice {
    pub fn new(grid: Grid, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(FioError::InvalidLattice(format!("α = {alpha}, β = {beta} must be positive")));
        }
        let a = Grid::steps(alpha, grid.dx())
            .map_err(|_| FioError::InvalidLattice(format!("α = {alpha} is not a multiple of Δx = {}", grid.dx())))?;
        let b = Grid::steps(beta, grid.deta())
            .map_err(|_| FioError::InvalidLattice(format!("β = {beta} is not a multiple of Δη = {}", grid.deta())))?;
        Self::from_steps(grid, a as usize, b as usize)
    }

    pub fn from_steps(grid: Grid, a: usize, b: usize) -> Result<Self> {
        let n = grid.n();
        if a == 0 || b == 0 || !n.is_multiple_of(a) || !n.is_multiple_of(b) {
            return Err(FioError::InvalidLattice(format!("steps a = {a}, b = {b} must divide n = {n}")));
        }
        Ok(Lattice { grid, a, b })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn alpha(&self) -> f64 {
        self.a as f64 * self.grid.dx()
    }
    pub fn beta(&self) -> f64 {
        self.b as f64 * self.grid.deta()
    }
    /// α in units of Δx.
    pub fn time_step(&self) -> usize {
        self.a
    }
    /// β in units of Δη.
    pub fn freq_step(&self) -> usize {
        self.b
    }
    /// Number of time points per axis, L/α.
    pub fn time_per_axis(&self) -> usize {
        self.grid.n() / self.a
    }
    /// Number of frequency points per axis, F/β.
    pub fn freq_per_axis(&self) -> usize {
        self.grid.n() / self.b
    }
    pub fn time_count(&self) -> usize {
        self.time_per_axis().pow(self.grid.d() as u32)
    }
    pub fn freq_count(&self) -> usize {
        self.freq_per_axis().pow(self.grid.d() as u32)
    }
    pub fn len(&self) -> usize {
        self.time_count() * self.freq_count()
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, time: usize, freq: usize) -> usize {
        time * self.freq_count() + freq
    }
    /// Splits a lattice index into (time index, frequency index).
    pub fn split(&self, idx: usize) -> (usize, usize) {
        (idx / self.freq_count(), idx % self.freq_count())
    }

    fn unravel(&self, flat: usize, per_axis: usize) -> [usize; 2] {
        if self.grid.d() == 1 {
            [flat, 0]
        } else {
            [flat / per_axis, flat % per_axis]
        }
    }
    pub fn time_multi(&self, time: usize) -> [usize; 2] {
        self.unravel(time, self.time_per_axis())
    }
    pub fn freq_multi(&self, freq: usize) -> [usize; 2] {
        self.unravel(freq, self.freq_per_axis())
    }
    /// Signed frequency index k of the centered storage index i on one axis.
    pub fn freq_signed(&self, i: usize) -> i64 {
        i as i64 - (self.freq_per_axis() / 2) as i64
    }
    /// Sample offset of a time point, per axis.
    pub fn time_sample(&self, time: usize) -> [usize; 2] {
        let m = self.time_multi(time);
        [m[0] * self.a, m[1] * self.a]
    }
    /// Residue of the signed frequency index modulo K, per axis.
    pub fn freq_residue(&self, freq: usize) -> [usize; 2] {
        let k = self.freq_multi(freq);
        let kk = self.freq_per_axis() as i64;
        [self.freq_signed(k[0]).rem_euclid(kk) as usize, self.freq_signed(k[1]).rem_euclid(kk) as usize]
    }
    /// Natural DFT bin b·k mod n, per axis.
    pub fn freq_bin(&self, freq: usize) -> [usize; 2] {
        let r = self.freq_residue(freq);
        [r[0] * self.b, r[1] * self.b]
    }
    /// Centered coordinate of a time point.
    pub fn time_coord(&self, time: usize) -> [f64; 2] {
        let m = self.time_multi(time);
        let l = self.grid.l();
        let c = |i: usize| wrap_centered(i as f64 * self.alpha(), l);
        [c(m[0]), if self.grid.d() == 2 { c(m[1]) } else { 0.0 }]
    }
    pub fn freq_coord(&self, freq: usize) -> [f64; 2] {
        let k = self.freq_multi(freq);
        let c = |i: usize| self.freq_signed(i) as f64 * self.beta();
        [c(k[0]), if self.grid.d() == 2 { c(k[1]) } else { 0.0 }]
    }
    /// Phase-space coordinates (m, n) of a lattice index.
    pub fn point(&self, idx: usize) -> ([f64; 2], [f64; 2]) {
        let (t, f) = self.split(idx);
        (self.time_coord(t), self.freq_coord(f))
    }
    /// Locates the lattice index of (m, n), if it is a lattice point.
    pub fn locate(&self, m: &[f64], n: &[f64]) -> Result<usize> {
        let d = self.grid.d();
        let tp = self.time_per_axis() as i64;
        let fp = self.freq_per_axis() as i64;
        let mut t = 0usize;
        let mut f = 0usize;
        for ax in 0..d {
            let i = Grid::steps(m[ax], self.alpha())?.rem_euclid(tp) as usize;
            let k = Grid::steps(n[ax], self.beta())?;
            let s = (k + fp / 2).rem_euclid(fp) as usize;
            t = t * tp as usize + i;
            f = f * fp as usize + s;
        }
        Ok(self.index(t, f))
    }
    /// Periods of the phase space torus: L on time axes, n/L on frequency axes.
    pub fn periods(&self) -> (f64, f64) {
        (self.grid.l(), self.grid.freq_period())
    }

    /// The atom g_{m,n}(x) = e^{2πin·x} g(x − m).
    pub fn atom(&self, g: &SampledFunction, idx: usize) -> Result<SampledFunction> {
        let (m, n) = self.point(idx);
        let d = self.grid.d();
        g.translate(&m[..d])?.modulate(&n[..d])
    }
}

/// Gabor coefficients indexed by lattice index.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    lattice: Lattice,
    values: Vec<C64>,
}

impl Coefficients {
    pub fn new(lattice: Lattice, values: Vec<C64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(FioError::ShapeMismatch { expected: lattice.len(), found: values.len() });
        }
        Ok(Coefficients { lattice, values })
    }
    pub fn zeros(lattice: Lattice) -> Self {
        Coefficients { lattice, values: vec![ZERO; lattice.len()] }
    }
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }
    pub fn values(&self) -> &[C64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }
    pub fn norm_l2(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
    /// ℓ² inner product Σ c·conj(other).
    pub fn inner(&self, other: &Coefficients) -> C64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum()
    }
}

/// Sampling strides of a computed STFT. Strides must divide n with an even quotient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftSampling {
    pub time_stride: usize,
    pub freq_stride: usize,
}

impl StftSampling {
    pub fn full() -> Self {
        StftSampling { time_stride: 1, freq_stride: 1 }
    }
}

impl Default for StftSampling {
    fn default() -> Self {
        Self::full()
    }
}

/// V_g f on the (possibly strided) time × frequency grid.
///
/// Row-major over (time points, frequency points); time points are
/// j·time_stride per axis in natural order, frequencies are
/// centered multiples of freq_stride·Δη.
#[derive(Clone, Debug)]
pub struct StftField {
    grid: Grid,
    sampling: StftSampling,
    values: Vec<C64>,
}

impl StftField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn sampling(&self) -> StftSampling {
        self.sampling
    }
    pub fn values(&self) -> &[C64] {
        &self.values
    }
    pub fn time_per_axis(&self) -> usize {
        self.grid.n() / self.sampling.time_stride
    }
    pub fn freq_per_axis(&self) -> usize {
        self.grid.n() / self.sampling.freq_stride
    }
    pub fn time_count(&self) -> usize {
        self.time_per_axis().pow(self.grid.d() as u32)
    }
    pub fn freq_count(&self) -> usize {
        self.freq_per_axis().pow(self.grid.d() as u32)
    }
    pub fn at(&self, time: usize, freq: usize) -> C64 {
        self.values[time * self.freq_count() + freq]
    }
    /// Centered time coordinate of time point `time`.
    pub fn time_coord(&self, time: usize) -> [f64; 2] {
        let p = self.time_per_axis();
        let s = self.sampling.time_stride;
        let (i0, i1) = if self.grid.d() == 1 { (time, 0) } else { (time / p, time % p) };
        [self.grid.time_axis(i0 * s), if self.grid.d() == 2 { self.grid.time_axis(i1 * s) } else { 0.0 }]
    }
    pub fn freq_coord(&self, freq: usize) -> [f64; 2] {
        let p = self.freq_per_axis();
        let step = self.sampling.freq_stride as f64 * self.grid.deta();
        let c = |i: usize| (i as f64 - (p / 2) as f64) * step;
        let (k0, k1) = if self.grid.d() == 1 { (freq, 0) } else { (freq / p, freq % p) };
        [c(k0), if self.grid.d() == 2 { c(k1) } else { 0.0 }]
    }
    /// Cell measure of one sample of the strided field.
    pub fn cell(&self) -> f64 {
        let d = self.grid.d() as i32;
        (self.grid.dx() * self.sampling.time_stride as f64).powi(d)
            * (self.grid.deta() * self.sampling.freq_stride as f64).powi(d)
    }
    /// Riemann-sum L² norm over phase space.
    pub fn norm_l2(&self) -> f64 {
        (self.cell() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }
}

/// For each time offset, the DFT of the folded product f(t)·conj(g(t − s)),
/// scaled by Δx^d. Output rows are natural-order spectra of length K^d.
fn shifted_spectra(f: &SampledFunction, g: &SampledFunction, offsets: &[[usize; 2]], k: usize) -> Vec<Vec<C64>> {
    let grid = *f.grid();
    let n = grid.n();
    let d = grid.d();
    let shape = grid.shape();
    let target = vec![k; d];
    let cell = grid.cell_time();
    let fv = f.values();
    let gv = g.values();
    let mut prod = vec![ZERO; grid.len()];
    offsets
        .iter()
        .map(|s| {
            if d == 1 {
                for t in 0..n {
                    prod[t] = fv[t] * gv[(t + n - s[0]) % n].conj();
                }
            } else {
                for t0 in 0..n {
                    let r0 = ((t0 + n - s[0]) % n) * n;
                    for t1 in 0..n {
                        prod[t0 * n + t1] = fv[t0 * n + t1] * gv[r0 + (t1 + n - s[1]) % n].conj();
                    }
                }
            }
            let mut spec = if k == n { prod.clone() } else { fold(&prod, &shape, &target) };
            fft_nd(&mut spec, &target, false);
            spec.iter_mut().for_each(|v| *v *= cell);
            spec
        })
        .collect()
}

fn check_pair(f: &SampledFunction, g: &SampledFunction) -> Result<()> {
    f.expect_side(Side::Time)?;
    g.expect_side(Side::Time)?;
    f.grid().same_as(g.grid())
}

/// Full-grid STFT V_g f(x_j, η_k).
pub fn stft(f: &SampledFunction, g: &SampledFunction) -> Result<StftField> {
    stft_sampled(f, g, StftSampling::full())
}

/// STFT on a strided subgrid of phase space.
pub fn stft_sampled(f: &SampledFunction, g: &SampledFunction, sampling: StftSampling) -> Result<StftField> {
    check_pair(f, g)?;
    let grid = *f.grid();
    let n = grid.n();
    let d = grid.d();
    for s in [sampling.time_stride, sampling.freq_stride] {
        if s == 0 || !n.is_multiple_of(s) || !(n / s).is_multiple_of(2) {
            return Err(FioError::InvalidLattice(format!("stride {s} must divide n = {n} with even quotient")));
        }
    }
    let tp = n / sampling.time_stride;
    let kp = n / sampling.freq_stride;
    let offsets: Vec<[usize; 2]> = (0..tp.pow(d as u32))
        .map(|t| {
            let (i0, i1) = if d == 1 { (t, 0) } else { (t / tp, t % tp) };
            [i0 * sampling.time_stride, i1 * sampling.time_stride]
        })
        .collect();
    let spectra = shifted_spectra(f, g, &offsets, kp);
    let mut values = Vec::with_capacity(offsets.len() * kp.pow(d as u32));
    for spec in spectra {
        values.extend(crate::fft::half_shift(&spec, kp, d));
    }
    Ok(StftField { grid, sampling, values })
}

/// C_g f: samples of V_g f on the lattice, indexed by lattice index.
pub fn analyze_with(lattice: &Lattice, g: &SampledFunction, f: &SampledFunction) -> Result<Coefficients> {
    check_pair(f, g)?;
    lattice.grid().same_as(f.grid())?;
    let k = lattice.freq_per_axis();
    let d = lattice.grid().d();
    let offsets: Vec<[usize; 2]> = (0..lattice.time_count()).map(|t| lattice.time_sample(t)).collect();
    let spectra = shifted_spectra(f, g, &offsets, k);
    let fc = lattice.freq_count();
    let bins: Vec<usize> = (0..fc)
        .map(|i| {
            let r = lattice.freq_residue(i);
            if d == 1 {
                r[0]
            } else {
                r[0] * k + r[1]
            }
        })
        .collect();
    let mut values = Vec::with_capacity(lattice.len());
    for spec in &spectra {
        values.extend(bins.iter().map(|&b| spec[b]));
    }
    Coefficients::new(*lattice, values)
}

/// D_g c = Σ c_{m,n} g_{m,n}.
pub fn synthesize_with(lattice: &Lattice, g: &SampledFunction, c: &Coefficients) -> Result<SampledFunction> {
    g.expect_side(Side::Time)?;
    lattice.grid().same_as(g.grid())?;
    if c.lattice() != lattice {
        return Err(FioError::ShapeMismatch { expected: lattice.len(), found: c.values().len() });
    }
    let grid = *lattice.grid();
    let n = grid.n();
    let d = grid.d();
    let k = lattice.freq_per_axis();
    let fc = lattice.freq_count();
    let kshape = vec![k; d];
    let gv = g.values();
    let mut out = vec![ZERO; grid.len()];
    let mut h = vec![ZERO; fc];
    for t in 0..lattice.time_count() {
        h.iter_mut().for_each(|v| *v = ZERO);
        for f in 0..fc {
            let r = lattice.freq_residue(f);
            let b = if d == 1 { r[0] } else { r[0] * k + r[1] };
            h[b] = c.values()[lattice.index(t, f)];
        }
        fft_nd(&mut h, &kshape, true);
        let s = lattice.time_sample(t);
        if d == 1 {
            for j in 0..n {
                out[j] += h[j % k] * gv[(j + n - s[0]) % n];
            }
        } else {
            for j0 in 0..n {
                let g0 = ((j0 + n - s[0]) % n) * n;
                for j1 in 0..n {
                    out[j0 * n + j1] += h[(j0 % k) * k + j1 % k] * gv[g0 + (j1 + n - s[1]) % n];
                }
            }
        }
    }
    SampledFunction::new(grid, Side::Time, out)
}

/// Flat indices j with j ≡ c (mod K) per axis, one list per residue c.
fn residue_classes(grid: &Grid, k: usize) -> Vec<Vec<usize>> {
    let n = grid.n();
    match grid.d() {
        1 => (0..k).map(|c| (c..n).step_by(k).collect()).collect(),
        _ => {
            let mut out = Vec::with_capacity(k * k);
            for c0 in 0..k {
                for c1 in 0..k {
                    let mut v = Vec::new();
                    for j0 in (c0..n).step_by(k) {
                        for j1 in (c1..n).step_by(k) {
                            v.push(j0 * n + j1);
                        }
                    }
                    out.push(v);
                }
            }
            out
        }
    }
}

/// Walnut representation: S_{jl} = Δx^d K^d Σ_m g(x_j − m) conj(g(x_l − m))
/// when j ≡ l (mod K) per axis, zero otherwise.
fn frame_block(lattice: &Lattice, g: &SampledFunction, idx: &[usize]) -> DMatrix<C64> {
    let grid = lattice.grid();
    let n = grid.n();
    let d = grid.d();
    let scale = grid.cell_time() * (lattice.freq_count() as f64);
    let gv = g.values();
    let offsets: Vec<[usize; 2]> = (0..lattice.time_count()).map(|t| lattice.time_sample(t)).collect();
    let shifted = |j: usize, s: &[usize; 2]| -> C64 {
        let ix = grid.unravel(j);
        if d == 1 {
            gv[(ix[0] + n - s[0]) % n]
        } else {
            gv[((ix[0] + n - s[0]) % n) * n + (ix[1] + n - s[1]) % n]
        }
    };
    let m = idx.len();
    let mut s = DMatrix::from_element(m, m, ZERO);
    for (p, &j) in idx.iter().enumerate() {
        for (q, &l) in idx.iter().enumerate().skip(p) {
            let v: C64 = offsets.iter().map(|o| shifted(j, o) * shifted(l, o).conj()).sum::<C64>() * scale;
            s[(p, q)] = v;
            s[(q, p)] = v.conj();
        }
    }
    s
}

/// Dense matrix of the frame operator S_g in the sample basis.
pub fn frame_operator(g: &SampledFunction, lattice: &Lattice) -> Result<DMatrix<C64>> {
    g.expect_side(Side::Time)?;
    lattice.grid().same_as(g.grid())?;
    let len = lattice.grid().len();
    let mut s = DMatrix::from_element(len, len, ZERO);
    for class in residue_classes(lattice.grid(), lattice.freq_per_axis()) {
        let block = frame_block(lattice, g, &class);
        for (p, &j) in class.iter().enumerate() {
            for (q, &l) in class.iter().enumerate() {
                s[(j, l)] = block[(p, q)];
            }
        }
    }
    Ok(s)
}

/// Which window of a Gabor system to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Original,
    Dual,
    Tight,
}

/// A Gabor frame with its dual and Parseval-tight windows.
#[derive(Clone, Debug)]
pub struct GaborSystem {
    lattice: Lattice,
    window: SampledFunction,
    dual: SampledFunction,
    tight: SampledFunction,
    lower: f64,
    upper: f64,
}

impl GaborSystem {
    pub fn new(window: SampledFunction, lattice: Lattice) -> Result<Self> {
        window.expect_side(Side::Time)?;
        lattice.grid().same_as(window.grid())?;
        let density = (lattice.alpha() * lattice.beta()).powi(lattice.grid().d() as i32);
        if density > 0.5 + 1e-12 {
            return Err(FioError::InvalidLattice(format!("αβ = {density} exceeds 1/2")));
        }
        let len = window.grid().len();
        let gv = window.values();
        let mut dual = vec![ZERO; len];
        let mut tight = vec![ZERO; len];
        let mut lower = f64::INFINITY;
        let mut upper: f64 = 0.0;
        let mut blocks = Vec::new();
        for class in residue_classes(lattice.grid(), lattice.freq_per_axis()) {
            let block = frame_block(&lattice, &window, &class);
            let eig = block.clone().symmetric_eigen();
            for &e in eig.eigenvalues.iter() {
                lower = lower.min(e);
                upper = upper.max(e);
            }
            blocks.push((class, eig));
        }
        if !(lower >= 1e-10 * upper) || upper <= 0.0 {
            return Err(FioError::NotAFrame { lower, upper });
        }
        let floor = upper * 1e-12;
        for (class, eig) in &blocks {
            let q = &eig.eigenvectors;
            let rhs: Vec<C64> = class.iter().map(|&j| gv[j]).collect();
            // Q^* g
            let proj: Vec<C64> = (0..class.len())
                .map(|c| (0..class.len()).map(|r| q[(r, c)].conj() * rhs[r]).sum())
                .collect();
            for (r, &j) in class.iter().enumerate() {
                let mut dv = ZERO;
                let mut tv = ZERO;
                for c in 0..class.len() {
                    let lam = eig.eigenvalues[c].max(floor);
                    dv += q[(r, c)] * proj[c] / lam;
                    tv += q[(r, c)] * proj[c] / lam.sqrt();
                }
                dual[j] = dv;
                tight[j] = tv;
            }
        }
        let grid = *window.grid();
        Ok(GaborSystem {
            lattice,
            window,
            dual: SampledFunction::new(grid, Side::Time, dual)?,
            tight: SampledFunction::new(grid, Side::Time, tight)?,
            lower,
            upper,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }
    pub fn grid(&self) -> &Grid {
        self.lattice.grid()
    }
    pub fn window(&self, kind: WindowKind) -> &SampledFunction {
        match kind {
            WindowKind::Original => &self.window,
            WindowKind::Dual => &self.dual,
            WindowKind::Tight => &self.tight,
        }
    }
    /// Frame bounds (A, B) of the original window.
    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }
    pub fn analyze(&self, f: &SampledFunction) -> Result<Coefficients> {
        analyze_with(&self.lattice, &self.window, f)
    }
    pub fn synthesize(&self, c: &Coefficients) -> Result<SampledFunction> {
        synthesize_with(&self.lattice, &self.window, c)
    }
    pub fn analyze_kind(&self, kind: WindowKind, f: &SampledFunction) -> Result<Coefficients> {
        analyze_with(&self.lattice, self.window(kind), f)
    }
    pub fn synthesize_kind(&self, kind: WindowKind, c: &Coefficients) -> Result<SampledFunction> {
        synthesize_with(&self.lattice, self.window(kind), c)
    }
}

/// γ = S_g^{-1} g.
pub fn dual_window(g: &SampledFunction, lattice: &Lattice) -> Result<SampledFunction> {
    Ok(GaborSystem::new(g.clone(), *lattice)?.dual)
}

/// S_g^{-1/2} g, generating a Parseval frame.
pub fn tight_window(g: &SampledFunction, lattice: &Lattice) -> Result<SampledFunction> {
    Ok(GaborSystem::new(g.clone(), *lattice)?.tight)
}

/// Exponents and weight of a mixed ℓ^{p,q} or L^{p,q} norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedNormSpec {
    #[serde(with = "crate::io::exponent")]
    pub p: f64,
    #[serde(with = "crate::io::exponent")]
    pub q: f64,
    pub s: f64,
}

impl MixedNormSpec {
    pub fn new(p: f64, q: f64, s: f64) -> Result<Self> {
        let ok = |e: f64| e >= 1.0 && !e.is_nan();
        if !ok(p) || !ok(q) || !(s >= 0.0 && s.is_finite()) {
            return Err(FioError::Parse(format!("invalid norm exponents p = {p}, q = {q}, s = {s}")));
        }
        Ok(MixedNormSpec { p, q, s })
    }
}

/// ⟨z⟩^s = (1 + |z|²)^{s/2}.
pub fn weight(z2: f64, s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        (1.0 + z2).powf(s / 2.0)
    }
}

pub(crate) struct Accumulator {
    p: f64,
    acc: f64,
}

impl Accumulator {
    pub(crate) fn new(p: f64) -> Self {
        Accumulator { p, acc: 0.0 }
    }
    pub(crate) fn push(&mut self, v: f64, measure: f64) {
        if self.p.is_infinite() {
            self.acc = self.acc.max(v);
        } else if self.p == 1.0 {
            self.acc += v * measure;
        } else {
            self.acc += v.powf(self.p) * measure;
        }
    }
    pub(crate) fn finish(&self) -> f64 {
        if self.p.is_infinite() || self.p == 1.0 {
            self.acc
        } else {
            self.acc.powf(1.0 / self.p)
        }
    }
}

/// Mixed norm of a row-major array of moduli indexed [m][n]: inner L^p over
/// m, outer L^q over n, each sum multiplied by its cell measure.
pub fn mixed_norm_table(abs: &[f64], rows: usize, cols: usize, p: f64, q: f64, m_cell: f64, n_cell: f64) -> f64 {
    let mut outer = Accumulator::new(q);
    for nn in 0..cols {
        let mut inner = Accumulator::new(p);
        for mm in 0..rows {
            inner.push(abs[mm * cols + nn], m_cell);
        }
        outer.push(inner.finish(), n_cell);
    }
    outer.finish()
}

/// ‖c‖_{ℓ^{p,q}_{v_s}}: inner ℓ^p over m, outer ℓ^q over n, weight ⟨(m,n)⟩^s.
pub fn mixed_seq_norm(c: &Coefficients, spec: &MixedNormSpec) -> f64 {
    let lat = c.lattice();
    let d = lat.grid().d();
    let tc = lat.time_count();
    let fc = lat.freq_count();
    let mut abs = vec![0.0; tc * fc];
    for t in 0..tc {
        let m = lat.time_coord(t);
        for f in 0..fc {
            let n = lat.freq_coord(f);
            let z2: f64 = (0..d).map(|a| m[a] * m[a] + n[a] * n[a]).sum();
            abs[t * fc + f] = c.values()[lat.index(t, f)].norm() * weight(z2, spec.s);
        }
    }
    mixed_norm_table(&abs, tc, fc, spec.p, spec.q, 1.0, 1.0)
}

/// Largest violation of the change-of-window inequality
/// |V_{g0} f| ≤ |⟨γ, g1⟩|^{-1} (|V_{g1} f| ∗ |V_{g0} γ|) over the full grid.
/// Non-positive values mean the inequality holds everywhere.
pub fn change_of_window_slack(
    f: &SampledFunction,
    g0: &SampledFunction,
    g1: &SampledFunction,
    gamma: &SampledFunction,
) -> Result<f64> {
    let grid = *f.grid();
    if grid.d() != 1 {
        return Err(FioError::InvalidGrid("change-of-window check is implemented for d = 1".into()));
    }
    let n = grid.n();
    let pair = gamma.inner(g1)?.norm();
    if pair == 0.0 {
        return Err(FioError::Singular("⟨γ, g1⟩ = 0".into()));
    }
    // Natural frequency order so index differences are frequency differences.
    let natural = |v: &StftField| -> Vec<C64> {
        let mut out = Vec::with_capacity(n * n);
        for t in 0..n {
            let row: Vec<C64> = (0..n).map(|k| v.at(t, k)).collect();
            out.extend(crate::fft::half_shift(&row, n, 1));
        }
        out
    };
    let lhs = natural(&stft(f, g0)?);
    let mut a: Vec<C64> = natural(&stft(f, g1)?).iter().map(|v| C64::new(v.norm(), 0.0)).collect();
    let mut b: Vec<C64> = natural(&stft(gamma, g0)?).iter().map(|v| C64::new(v.norm(), 0.0)).collect();
    let shape = [n, n];
    fft_nd(&mut a, &shape, false);
    fft_nd(&mut b, &shape, false);
    let mut conv: Vec<C64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    fft_nd(&mut conv, &shape, true);
    let scale = grid.dx() * grid.deta() / (n * n) as f64 / pair;
    Ok(lhs
        .iter()
        .zip(&conv)
        .map(|(l, r)| l.norm() - r.re * scale)
        .fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::standard_gaussian;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(1, 16.0, 256).unwrap()
    }

    #[test]
    fn lattice_counts_and_coordinates() {
        let lat = Lattice::new(grid(), 0.5, 0.5).unwrap();
        assert_eq!(lat.time_per_axis(), 32);
        assert_eq!(lat.freq_per_axis(), 32);
        assert_eq!(lat.len(), 1024);
        assert_eq!(lat.freq_coord(0)[0], -8.0);
        assert_eq!(lat.time_coord(31)[0], -0.5);
        let idx = lat.locate(&[1.5], &[-2.0]).unwrap();
        let (m, n) = lat.point(idx);
        assert_eq!((m[0], n[0]), (1.5, -2.0));
        assert!(Lattice::new(grid(), 0.3, 0.5).is_err());
    }

    #[test]
    fn stft_of_gaussian_closed_form() {
        let g = grid();
        let phi = standard_gaussian(g);
        let v = stft(&phi, &phi).unwrap();
        let mut worst: f64 = 0.0;
        for t in 0..v.time_count() {
            let x = v.time_coord(t)[0];
            for k in 0..v.freq_count() {
                let eta = v.freq_coord(k)[0];
                let want = (-PI * (x * x + eta * eta) / 2.0).exp();
                worst = worst.max((v.at(t, k).norm() - want).abs());
            }
        }
        assert!(worst < 1e-6, "{worst}");
        assert!((v.norm_l2() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn strided_stft_is_a_subsample() {
        let g = grid();
        let phi = standard_gaussian(g);
        let f = phi.translate(&[1.0]).unwrap().modulate(&[0.5]).unwrap();
        let full = stft(&f, &phi).unwrap();
        let sub = stft_sampled(&f, &phi, StftSampling { time_stride: 4, freq_stride: 8 }).unwrap();
        for t in 0..sub.time_count() {
            for k in 0..sub.freq_count() {
                let ft = t * 4;
                let fk = (k as i64 - 16) * 8 + 128;
                assert!((sub.at(t, k) - full.at(ft, fk as usize)).norm() < 1e-12);
                assert_eq!(sub.freq_coord(k)[0], full.freq_coord(fk as usize)[0]);
            }
        }
    }

    #[test]
    fn analysis_synthesis_adjoint() {
        let g = grid();
        let lat = Lattice::new(g, 0.5, 0.5).unwrap();
        let phi = standard_gaussian(g);
        let f = SampledFunction::from_time_fn(g, |x| C64::new((-x[0] * x[0]).exp(), x[0].sin() * (-x[0] * x[0]).exp()));
        let mut c = Coefficients::zeros(lat);
        for (i, v) in c.values_mut().iter_mut().enumerate() {
            *v = C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos());
        }
        let lhs = analyze_with(&lat, &phi, &f).unwrap().inner(&c);
        let rhs = f.inner(&synthesize_with(&lat, &phi, &c).unwrap()).unwrap();
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0));
    }

    #[test]
    fn unit_coefficient_synthesizes_atom() {
        let g = grid();
        let lat = Lattice::new(g, 0.5, 0.5).unwrap();
        let phi = standard_gaussian(g);
        let idx = lat.locate(&[2.0], &[-1.5]).unwrap();
        let mut c = Coefficients::zeros(lat);
        c.values_mut()[idx] = C64::new(1.0, 0.0);
        let out = synthesize_with(&lat, &phi, &c).unwrap();
        let atom = lat.atom(&phi, idx).unwrap();
        assert!(out.rel_distance(&atom).unwrap() < 1e-12);
    }

    #[test]
    fn frame_operator_is_hermitian_and_blockwise() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let lat = Lattice::new(g, 0.5, 0.5).unwrap();
        let phi = standard_gaussian(g);
        let s = frame_operator(&phi, &lat).unwrap();
        let herm = (&s - s.adjoint()).norm();
        assert!(herm <= 1e-12);
        // S f = Σ ⟨f, g_λ⟩ g_λ
        let f = SampledFunction::from_time_fn(g, |x| C64::new(x[0].cos(), 0.3 * x[0]));
        let direct = synthesize_with(&lat, &phi, &analyze_with(&lat, &phi, &f).unwrap()).unwrap();
        let v = nalgebra::DVector::from_vec(f.values().to_vec());
        let sf = &s * v;
        for (a, b) in sf.iter().zip(direct.values()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn mixed_norm_examples() {
        let lat = Lattice::from_steps(Grid::new(1, 8.0, 8).unwrap(), 4, 4).unwrap();
        assert_eq!(lat.len(), 4);
        let ones = Coefficients::new(lat, vec![C64::new(1.0, 0.0); 4]).unwrap();
        let two = MixedNormSpec::new(2.0, 2.0, 0.0).unwrap();
        assert!((mixed_seq_norm(&ones, &two) - 2.0).abs() < 1e-15);
        // rows are m (time), columns n (frequency): c = [[1,0],[1,0]]
        let c = Coefficients::new(lat, [1.0, 0.0, 1.0, 0.0].iter().map(|&v| C64::new(v, 0.0)).collect()).unwrap();
        let inf1 = MixedNormSpec::new(f64::INFINITY, 1.0, 0.0).unwrap();
        let one_inf = MixedNormSpec::new(1.0, f64::INFINITY, 0.0).unwrap();
        assert_eq!(mixed_seq_norm(&c, &inf1), 1.0);
        assert_eq!(mixed_seq_norm(&c, &one_inf), 2.0);
    }

    #[test]
    fn tight_and_dual_reconstruct() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let lat = Lattice::new(g, 0.5, 0.5).unwrap();
        let sys = GaborSystem::new(standard_gaussian(g), lat).unwrap();
        let (a, b) = sys.bounds();
        assert!(a > 0.0 && b >= a);
        let f = SampledFunction::from_time_fn(g, |x| C64::new((-x[0] * x[0]).exp(), (-(x[0] - 1.0).powi(2)).exp()));
        let dual = sys.synthesize_kind(WindowKind::Dual, &sys.analyze(&f).unwrap()).unwrap();
        assert!(dual.rel_distance(&f).unwrap() < 1e-10);
        let tight = sys
            .synthesize_kind(WindowKind::Tight, &sys.analyze_kind(WindowKind::Tight, &f).unwrap())
            .unwrap();
        assert!(tight.rel_distance(&f).unwrap() < 1e-10);
        let s = frame_operator(sys.window(WindowKind::Tight), &lat).unwrap();
        let id = DMatrix::<C64>::identity(64, 64);
        assert!((s - id).norm() < 1e-8);
    }

    #[test]
    fn dense_lattice_is_rejected() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let lat = Lattice::new(g, 1.0, 1.0).unwrap();
        assert!(GaborSystem::new(standard_gaussian(g), lat).is_err());
        // the frame operator itself is still available
        assert!(frame_operator(&standard_gaussian(g), &lat).is_ok());
    }

    #[test]
    fn change_of_window_holds() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let f = crate::grid::gaussian(g, &[1.0], 0.7).unwrap().function.modulate(&[1.0]).unwrap();
        let g0 = standard_gaussian(g);
        let g1 = crate::grid::gaussian(g, &[0.0], 1.3).unwrap().function;
        let gamma = crate::grid::gaussian(g, &[0.5], 0.9).unwrap().function;
        assert!(change_of_window_slack(&f, &g0, &g1, &gamma).unwrap() <= 1e-6);
    }
}
