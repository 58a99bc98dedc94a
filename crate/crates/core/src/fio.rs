//! Fourier integral operators Tf(x) = ∫ e^{2πiΦ(x,η)} σ(x,η) f̂(η) dη on the
//! grid, their Gabor matrices ⟨T g_{m,n}, g_{m',n'}⟩ by two independent
//! routes, and sparse matrix application to coefficients.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{FioError, Result};
use crate::fft::fft_nd;
use crate::gabor::{analyze_with, Coefficients, GaborSystem, Lattice, WindowKind};
use crate::grid::{Grid, SampledFunction, Side};
use crate::phase::{Phase, PhaseBox};

const ZERO: C64 = C64::new(0.0, 0.0);

fn cis(t: f64) -> C64 {
    let (s, c) = (2.0 * PI * t).sin_cos();
    C64::new(c, s)
}

/// Symbol samples σ(x_j, η_k) at centered coordinates, row-major over
/// (time sample, centered frequency sample).
#[derive(Clone, Debug, PartialEq)]
pub struct GridSymbol {
    grid: Grid,
    values: Vec<C64>,
}

impl GridSymbol {
    pub fn new(grid: Grid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() * grid.len() {
            return Err(FioError::ShapeMismatch { expected: grid.len() * grid.len(), found: values.len() });
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(FioError::NonFinite("grid symbol".into()));
        }
        Ok(GridSymbol { grid, values })
    }
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64], &[f64]) -> C64) -> Result<Self> {
        let d = grid.d();
        let mut values = Vec::with_capacity(grid.len() * grid.len());
        for j in 0..grid.len() {
            let x = grid.time_point(j);
            for k in 0..grid.len() {
                values.push(f(&x[..d], &grid.freq_point(k)[..d]));
            }
        }
        Self::new(grid, values)
    }
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[C64] {
        &self.values
    }
    /// σ at time sample j and centered frequency sample k.
    pub fn at(&self, j: usize, k: usize) -> C64 {
        self.values[j * self.grid.len() + k]
    }
}

type SymbolFn = dyn Fn(&[f64], &[f64]) -> C64 + Send + Sync;
type SymbolGradFn = dyn Fn(&[f64], &[f64]) -> (Vec<C64>, Vec<C64>) + Send + Sync;

/// A smooth symbol with its gradient and declared derivative bounds C_α,
/// listed by order |α| = 0, 1, …, 2N.
#[derive(Clone)]
pub struct SmoothSymbol {
    name: String,
    eval: Arc<SymbolFn>,
    grad: Arc<SymbolGradFn>,
    bounds: Vec<f64>,
}

impl fmt::Debug for SmoothSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothSymbol").field("name", &self.name).field("bounds", &self.bounds).finish()
    }
}

impl SmoothSymbol {
    pub fn new(
        name: &str,
        eval: impl Fn(&[f64], &[f64]) -> C64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &[f64]) -> (Vec<C64>, Vec<C64>) + Send + Sync + 'static,
        bounds: Vec<f64>,
    ) -> Self {
        SmoothSymbol { name: name.to_string(), eval: Arc::new(eval), grad: Arc::new(grad), bounds }
    }
    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }
    pub fn eval(&self, x: &[f64], eta: &[f64]) -> C64 {
        (self.eval)(x, eta)
    }
    /// Largest deviation of the declared gradient from central differences.
    pub fn check_derivatives(&self, d: usize, bx: &PhaseBox, samples: usize) -> f64 {
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for (x, e) in bx.sample(d, samples) {
            let (gx, ge) = (self.grad)(&x, &e);
            for k in 0..2 * d {
                let (mut xp, mut xm, mut ep, mut em) = (x.clone(), x.clone(), e.clone(), e.clone());
                let exact = if k < d {
                    xp[k] += h;
                    xm[k] -= h;
                    gx[k]
                } else {
                    ep[k - d] += h;
                    em[k - d] -= h;
                    ge[k - d]
                };
                let fd = ((self.eval)(&xp, &ep) - (self.eval)(&xm, &em)) / (2.0 * h);
                worst = worst.max((fd - exact).norm());
            }
        }
        worst
    }
}

#[derive(Clone, Debug)]
pub enum Symbol {
    One,
    Grid(GridSymbol),
    Smooth(SmoothSymbol),
}

impl Symbol {
    /// Samples the symbol on the grid.
    pub fn sample(&self, grid: &Grid) -> Result<GridSymbol> {
        match self {
            Symbol::One => GridSymbol::new(*grid, vec![C64::new(1.0, 0.0); grid.len() * grid.len()]),
            Symbol::Grid(g) => {
                g.grid.same_as(grid)?;
                Ok(g.clone())
            }
            Symbol::Smooth(s) => GridSymbol::from_fn(*grid, |x, e| s.eval(x, e)),
        }
    }
    pub fn name(&self) -> String {
        match self {
            Symbol::One => "one".into(),
            Symbol::Grid(_) => "grid".into(),
            Symbol::Smooth(s) => s.name.clone(),
        }
    }
}

/// Catalog of symbols selectable by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SymbolSpec {
    /// σ ≡ 1.
    One,
    /// σ = e^{−|x|²}.
    GaussX,
    /// σ = e^{−|x|²−|η|²}.
    GaussXEta,
    /// σ = e^{2πi(a·x + b·η)}.
    Modulated {
        #[serde(default)]
        a: f64,
        #[serde(default)]
        b: f64,
    },
    /// σ = tanh(x₁/h), a sign function smoothed over width h.
    SmoothedSign {
        #[serde(default = "default_h")]
        h: f64,
    },
}

fn default_h() -> f64 {
    0.0625
}

pub const SYMBOL_CATALOG: &[&str] = &["one", "gauss-x", "gauss-x-eta", "modulated", "smoothed-sign"];

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

impl SymbolSpec {
    pub fn build(&self) -> Symbol {
        match *self {
            SymbolSpec::One => Symbol::One,
            SymbolSpec::GaussX => Symbol::Smooth(SmoothSymbol::new(
                "gauss-x",
                |x, _| C64::new((-sq(x)).exp(), 0.0),
                |x, e| {
                    let v = (-sq(x)).exp();
                    (x.iter().map(|a| C64::new(-2.0 * a * v, 0.0)).collect(), vec![ZERO; e.len()])
                },
                vec![1.0, 2f64.sqrt() * (-0.5f64).exp(), 2.0],
            )),
            SymbolSpec::GaussXEta => Symbol::Smooth(SmoothSymbol::new(
                "gauss-x-eta",
                |x, e| C64::new((-sq(x) - sq(e)).exp(), 0.0),
                |x, e| {
                    let v = (-sq(x) - sq(e)).exp();
                    (
                        x.iter().map(|a| C64::new(-2.0 * a * v, 0.0)).collect(),
                        e.iter().map(|a| C64::new(-2.0 * a * v, 0.0)).collect(),
                    )
                },
                vec![1.0, 2f64.sqrt() * (-0.5f64).exp(), 2.0],
            )),
            SymbolSpec::Modulated { a, b } => Symbol::Smooth(SmoothSymbol::new(
                "modulated",
                move |x, e| cis(a * x.iter().sum::<f64>() + b * e.iter().sum::<f64>()),
                move |x, e| {
                    let v = cis(a * x.iter().sum::<f64>() + b * e.iter().sum::<f64>());
                    let i2pi = C64::new(0.0, 2.0 * PI);
                    (vec![i2pi * a * v; x.len()], vec![i2pi * b * v; e.len()])
                },
                vec![1.0, 2.0 * PI * a.abs().max(b.abs()), (2.0 * PI * a.abs().max(b.abs())).powi(2)],
            )),
            SymbolSpec::SmoothedSign { h } => Symbol::Smooth(SmoothSymbol::new(
                "smoothed-sign",
                move |x, _| C64::new((x[0] / h).tanh(), 0.0),
                move |x, e| {
                    let t = (x[0] / h).tanh();
                    let mut gx = vec![ZERO; x.len()];
                    gx[0] = C64::new((1.0 - t * t) / h, 0.0);
                    (gx, vec![ZERO; e.len()])
                },
                vec![1.0, 1.0 / h, 0.77 / (h * h)],
            )),
        }
    }

    pub fn from_name(name: &str, params: &std::collections::BTreeMap<String, f64>) -> Result<Self> {
        let get = |k: &str, default: f64| params.get(k).copied().unwrap_or(default);
        Ok(match name {
            "one" => SymbolSpec::One,
            "gauss-x" => SymbolSpec::GaussX,
            "gauss-x-eta" => SymbolSpec::GaussXEta,
            "modulated" => SymbolSpec::Modulated { a: get("a", 0.0), b: get("b", 0.0) },
            "smoothed-sign" => SymbolSpec::SmoothedSign { h: get("h", default_h()) },
            other => return Err(FioError::UnknownName(format!("symbol '{other}'"))),
        })
    }
}

/// Options of the quadrature route.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FioOptions {
    /// Reject inputs whose spectrum reaches the band edge.
    pub check_band_edge: bool,
    /// Largest admissible fraction of spectral energy in the edge bins.
    pub edge_tolerance: f64,
}

impl Default for FioOptions {
    fn default() -> Self {
        FioOptions { check_band_edge: true, edge_tolerance: 1e-6 }
    }
}

/// Fraction of the energy of f̂ in the outermost max(1, n/32) bins of each axis.
pub fn band_edge_mass(fhat: &SampledFunction) -> f64 {
    let g = fhat.grid();
    let n = g.n();
    let w = (n / 32).max(1);
    let edge = |i: usize| i < w || i >= n - w;
    let mut total = 0.0;
    let mut outer = 0.0;
    for (k, v) in fhat.values().iter().enumerate() {
        let e = v.norm_sqr();
        total += e;
        let ix = g.unravel(k);
        if edge(ix[0]) || (g.d() == 2 && edge(ix[1])) {
            outer += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outer / total
    }
}

fn symbol_value(symbol: &Symbol, grid: &Grid, j: usize, k: usize) -> C64 {
    match symbol {
        Symbol::One => C64::new(1.0, 0.0),
        Symbol::Grid(g) => g.at(j, k),
        Symbol::Smooth(s) => {
            let d = grid.d();
            s.eval(&grid.time_point(j)[..d], &grid.freq_point(k)[..d])
        }
    }
}

fn check_dims(phase: &dyn Phase, grid: &Grid) -> Result<()> {
    if phase.dim() != grid.d() {
        return Err(FioError::ShapeMismatch { expected: grid.d(), found: phase.dim() });
    }
    Ok(())
}

fn check_input(f: &SampledFunction, opts: &FioOptions) -> Result<SampledFunction> {
    f.expect_side(Side::Time)?;
    let fhat = f.fourier_transform()?;
    if opts.check_band_edge {
        let mass = band_edge_mass(&fhat);
        if mass > opts.edge_tolerance {
            return Err(FioError::Aliasing { mass });
        }
    }
    Ok(fhat)
}

/// Tf(x_j) = Δη^d Σ_k e^{2πiΦ(x_j,η_k)} σ(x_j,η_k) f̂(η_k) by direct summation.
pub fn apply_fio(phase: &dyn Phase, symbol: &Symbol, f: &SampledFunction) -> Result<SampledFunction> {
    apply_fio_with(phase, symbol, f, &FioOptions::default())
}

pub fn apply_fio_with(
    phase: &dyn Phase,
    symbol: &Symbol,
    f: &SampledFunction,
    opts: &FioOptions,
) -> Result<SampledFunction> {
    let grid = *f.grid();
    check_dims(phase, &grid)?;
    if let Symbol::Grid(g) = symbol {
        g.grid.same_as(&grid)?;
    }
    let fhat = check_input(f, opts)?;
    let d = grid.d();
    let len = grid.len();
    let freqs: Vec<[f64; 2]> = (0..len).map(|k| grid.freq_point(k)).collect();
    let support = significant(fhat.values());
    let cell = grid.cell_freq();
    let mut out = Vec::with_capacity(len);
    for j in 0..len {
        let x = grid.time_point(j);
        let mut acc = ZERO;
        for &k in &support {
            let ph = phase.value(&x[..d], &freqs[k][..d]);
            acc += cis(ph) * symbol_value(symbol, &grid, j, k) * fhat.values()[k];
        }
        out.push(acc * cell);
    }
    if out.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(FioError::NonFinite(format!("phase '{}' or symbol", phase.name())));
    }
    SampledFunction::new(grid, Side::Time, out)
}

/// Indices of entries that can affect a double-precision sum.
fn significant(v: &[C64]) -> Vec<usize> {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let cut = max * 1e-18;
    (0..v.len()).filter(|&k| v[k].norm() > cut).collect()
}

/// Precomputed kernel e^{2πiΦ(x_j,η_k)} σ(x_j,η_k) for repeated application.
#[derive(Clone, Debug)]
pub struct FioKernel {
    grid: Grid,
    values: Vec<C64>,
}

impl FioKernel {
    pub fn new(phase: &dyn Phase, symbol: &Symbol, grid: &Grid) -> Result<Self> {
        check_dims(phase, grid)?;
        let d = grid.d();
        let len = grid.len();
        let freqs: Vec<[f64; 2]> = (0..len).map(|k| grid.freq_point(k)).collect();
        let mut values = Vec::with_capacity(len * len);
        for j in 0..len {
            let x = grid.time_point(j);
            for (k, eta) in freqs.iter().enumerate() {
                values.push(cis(phase.value(&x[..d], &eta[..d])) * symbol_value(symbol, grid, j, k));
            }
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(FioError::NonFinite(format!("phase '{}' or symbol", phase.name())));
        }
        Ok(FioKernel { grid: *grid, values })
    }

    /// T applied to a function given on the frequency side.
    pub fn apply_hat(&self, fhat: &SampledFunction) -> Result<SampledFunction> {
        fhat.expect_side(Side::Frequency)?;
        self.grid.same_as(fhat.grid())?;
        let len = self.grid.len();
        let support = significant(fhat.values());
        let fv = fhat.values();
        let cell = self.grid.cell_freq();
        let out = (0..len)
            .map(|j| {
                let row = &self.values[j * len..(j + 1) * len];
                support.iter().map(|&k| row[k] * fv[k]).sum::<C64>() * cell
            })
            .collect();
        SampledFunction::new(self.grid, Side::Time, out)
    }

    pub fn apply(&self, f: &SampledFunction, opts: &FioOptions) -> Result<SampledFunction> {
        self.apply_hat(&check_input(f, opts)?)
    }
}

/// Which construction produced a Gabor matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Direct,
    SymbolStft,
}

/// Sparse Gabor matrix stored by columns (m, n); rows are (m', n').
#[derive(Clone, Debug, PartialEq)]
pub struct GaborMatrix {
    lattice: Lattice,
    epsilon: f64,
    route: Route,
    phase_name: String,
    max_modulus: f64,
    columns: Vec<Vec<(u32, C64)>>,
}

impl GaborMatrix {
    /// Builds from dense columns, dropping entries below ε · max modulus.
    pub fn from_dense_columns(
        lattice: Lattice,
        epsilon: f64,
        route: Route,
        phase_name: &str,
        dense: Vec<Vec<C64>>,
    ) -> Self {
        let max_modulus = dense.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max);
        let cut = epsilon * max_modulus;
        let columns = dense
            .into_iter()
            .map(|col| {
                col.into_iter()
                    .enumerate()
                    .filter(|(_, v)| v.norm() >= cut && v.norm() > 0.0)
                    .map(|(r, v)| (r as u32, v))
                    .collect()
            })
            .collect();
        GaborMatrix { lattice, epsilon, route, phase_name: phase_name.to_string(), max_modulus, columns }
    }

    /// Builds from explicit triplets (row, column, value) without thresholding.
    pub fn from_entries(
        lattice: Lattice,
        epsilon: f64,
        route: Route,
        phase_name: &str,
        entries: impl IntoIterator<Item = (usize, usize, C64)>,
    ) -> Result<Self> {
        let len = lattice.len();
        let mut columns: Vec<Vec<(u32, C64)>> = vec![Vec::new(); len];
        let mut max_modulus: f64 = 0.0;
        for (r, c, v) in entries {
            if r >= len || c >= len {
                return Err(FioError::ShapeMismatch { expected: len, found: r.max(c) });
            }
            max_modulus = max_modulus.max(v.norm());
            columns[c].push((r as u32, v));
        }
        columns.iter_mut().for_each(|c| c.sort_by_key(|e| e.0));
        Ok(GaborMatrix { lattice, epsilon, route, phase_name: phase_name.to_string(), max_modulus, columns })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn route(&self) -> Route {
        self.route
    }
    pub fn phase_name(&self) -> &str {
        &self.phase_name
    }
    pub fn max_modulus(&self) -> f64 {
        self.max_modulus
    }
    pub fn nnz(&self) -> usize {
        self.columns.iter().map(|c| c.len()).sum()
    }
    pub fn column(&self, col: usize) -> &[(u32, C64)] {
        &self.columns[col]
    }
    /// Entry at (row, column), zero if not stored.
    pub fn get(&self, row: usize, col: usize) -> C64 {
        let c = &self.columns[col];
        match c.binary_search_by_key(&(row as u32), |e| e.0) {
            Ok(i) => c[i].1,
            Err(_) => ZERO,
        }
    }
    /// All stored entries as (row, column, value), column-major.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        self.columns
            .iter()
            .enumerate()
            .flat_map(|(c, col)| col.iter().map(move |&(r, v)| (r as usize, c, v)))
    }
    /// Largest entrywise difference to another matrix on the same lattice.
    pub fn max_difference(&self, other: &GaborMatrix) -> Result<f64> {
        if self.lattice != other.lattice {
            return Err(FioError::GridMismatch("matrices live on different lattices".into()));
        }
        let mut worst: f64 = 0.0;
        for (r, c, v) in self.entries() {
            worst = worst.max((v - other.get(r, c)).norm());
        }
        for (r, c, v) in other.entries() {
            worst = worst.max((v - self.get(r, c)).norm());
        }
        Ok(worst)
    }
}

/// Matrix of T in a Gabor system, one quadrature application per column.
pub fn gabor_matrix_direct(
    phase: &dyn Phase,
    symbol: &Symbol,
    gsys: &GaborSystem,
    window: WindowKind,
    epsilon: f64,
) -> Result<GaborMatrix> {
    let lattice = *gsys.lattice();
    let grid = *lattice.grid();
    let g = gsys.window(window);
    let kernel = FioKernel::new(phase, symbol, &grid)?;
    let mut dense = Vec::with_capacity(lattice.len());
    for col in 0..lattice.len() {
        let atom_hat = lattice.atom(g, col)?.fourier_transform()?;
        let image = kernel.apply_hat(&atom_hat)?;
        dense.push(analyze_with(&lattice, g, &image)?.values().to_vec());
    }
    Ok(GaborMatrix::from_dense_columns(lattice, epsilon, Route::Direct, &phase.name(), dense))
}

/// Matrix of T from the short-time Fourier transform of the symbol.
///
/// For each (m', n) the entries are
/// ΔxΔη e^{2πi(Φ(m',n) − n'·m')} Σ_{u,v} σ(m'+u, n+v) Ψ(u,v) e^{2πi(∇ₓΦ·u + ∇_ηΦ·v)} e^{−2πi(n'·u + m·v)}
/// with Ψ = e^{2πiΦ₂} conj(g) ⊗ ĝ and Φ₂ the second-order Taylor remainder at
/// (m', n). One FFT over the 2d-dimensional grid yields every (n', m). The
/// result equals the direct route exactly when e^{2πiΦ} is periodic on the
/// phase-space torus.
pub fn gabor_matrix_via_symbol_stft(
    phase: &dyn Phase,
    symbol: &GridSymbol,
    gsys: &GaborSystem,
    window: WindowKind,
    epsilon: f64,
) -> Result<GaborMatrix> {
    let lattice = *gsys.lattice();
    let grid = *lattice.grid();
    check_dims(phase, &grid)?;
    symbol.grid.same_as(&grid)?;
    let d = grid.d();
    let n = grid.n();
    let len = grid.len();
    let g = gsys.window(window);
    let ghat = g.fourier_transform()?;
    let kf = lattice.freq_per_axis();
    let kt = lattice.time_per_axis();
    let half = n / 2;

    // Coordinates in natural order on both axes of the phase-space grid.
    let u: Vec<[f64; 2]> = (0..len).map(|j| grid.time_point(j)).collect();
    let nat_to_centered = |i: usize| -> usize {
        let ix = grid.unravel(i);
        let c = [(ix[0] + half) % n, (ix[1] + half) % n];
        grid.ravel(&c)
    };
    let v: Vec<[f64; 2]> = (0..len).map(|i| grid.freq_point(nat_to_centered(i))).collect();
    let gconj: Vec<C64> = g.values().iter().map(|z| z.conj()).collect();
    let ghat_nat: Vec<C64> = (0..len).map(|i| ghat.values()[nat_to_centered(i)]).collect();

    let fold_time = |j: usize| -> usize {
        let ix = grid.unravel(j);
        if d == 1 {
            ix[0] % kf
        } else {
            (ix[0] % kf) * kf + ix[1] % kf
        }
    };
    let fold_freq = |i: usize| -> usize {
        let ix = grid.unravel(i);
        if d == 1 {
            ix[0] % kt
        } else {
            (ix[0] % kt) * kt + ix[1] % kt
        }
    };
    let jt: Vec<usize> = (0..len).map(fold_time).collect();
    let iv: Vec<usize> = (0..len).map(fold_freq).collect();
    let ft = lattice.freq_count();
    let tt = lattice.time_count();
    let mut shape = vec![kf; d];
    shape.extend(std::iter::repeat_n(kt, d));

    let cell = grid.cell_time() * grid.cell_freq();
    let mut dense = vec![vec![ZERO; lattice.len()]; lattice.len()];
    let mut buf = vec![ZERO; ft * tt];
    for tp in 0..tt {
        let mp = lattice.time_coord(tp);
        let sp = lattice.time_sample(tp);
        for fq in 0..ft {
            let nq = lattice.freq_coord(fq);
            let nb = lattice.freq_bin(fq);
            let phi0 = phase.value(&mp[..d], &nq[..d]);
            let a = phase.grad_x(&mp[..d], &nq[..d]);
            let b = phase.grad_eta(&mp[..d], &nq[..d]);
            buf.iter_mut().for_each(|z| *z = ZERO);
            let mut xs = [0.0; 2];
            let mut es = [0.0; 2];
            for j in 0..len {
                if gconj[j] == ZERO {
                    continue;
                }
                let jx = grid.unravel(j);
                let row = [(jx[0] + sp[0]) % n, (jx[1] + sp[1]) % n];
                let srow = grid.ravel(&row) * len;
                for ax in 0..d {
                    xs[ax] = mp[ax] + u[j][ax];
                }
                let au: f64 = (0..d).map(|ax| a[ax] * u[j][ax]).sum();
                let base = jt[j] * tt;
                for i in 0..len {
                    let gh = ghat_nat[i];
                    if gh == ZERO {
                        continue;
                    }
                    let ix = grid.unravel(i);
                    let nat = [(ix[0] + nb[0]) % n, (ix[1] + nb[1]) % n];
                    let cen = grid.ravel(&[(nat[0] + half) % n, (nat[1] + half) % n]);
                    for ax in 0..d {
                        es[ax] = nq[ax] + v[i][ax];
                    }
                    let bv: f64 = (0..d).map(|ax| b[ax] * v[i][ax]).sum();
                    let phi2 = phase.value(&xs[..d], &es[..d]) - phi0 - au - bv;
                    let psi = cis(phi2) * gconj[j] * gh;
                    buf[base + iv[i]] += symbol.values[srow + cen] * psi * cis(au + bv);
                }
            }
            fft_nd(&mut buf, &shape, false);
            let col_fixed = fq;
            for fq2 in 0..ft {
                let r = lattice.freq_residue(fq2);
                let rf = if d == 1 { r[0] } else { r[0] * kf + r[1] };
                let np = lattice.freq_coord(fq2);
                let npmp: f64 = (0..d).map(|ax| np[ax] * mp[ax]).sum();
                let pre = cis(phi0 - npmp) * cell;
                let row = lattice.index(tp, fq2);
                for tm in 0..tt {
                    let col = lattice.index(tm, col_fixed);
                    dense[col][row] = pre * buf[rf * tt + tm];
                }
            }
        }
    }
    Ok(GaborMatrix::from_dense_columns(lattice, epsilon, Route::SymbolStft, &phase.name(), dense))
}

/// C_g(Tf)_{m',n'} = Σ_{m,n} M_{(m',n'),(m,n)} c_{m,n}.
pub fn apply_via_matrix(m: &GaborMatrix, c: &Coefficients) -> Result<Coefficients> {
    if c.lattice() != m.lattice() {
        return Err(FioError::GridMismatch("coefficients and matrix use different lattices".into()));
    }
    let mut out = vec![ZERO; m.lattice().len()];
    for (col, entries) in m.columns.iter().enumerate() {
        let cv = c.values()[col];
        if cv == ZERO {
            continue;
        }
        for &(r, v) in entries {
            out[r as usize] += v * cv;
        }
    }
    Coefficients::new(*m.lattice(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gaussian, standard_gaussian};
    use crate::phase::PhaseSpec;

    fn grid() -> Grid {
        Grid::new(1, 8.0, 64).unwrap()
    }

    #[test]
    fn identity_and_translation() {
        let g = grid();
        let f = gaussian(g, &[0.5], 0.8).unwrap().function.modulate(&[1.0]).unwrap();
        let id = PhaseSpec::Identity.build(1).unwrap();
        let out = apply_fio(id.as_ref(), &Symbol::One, &f).unwrap();
        assert!(out.rel_distance(&f).unwrap() < 1e-12);
        let tr = PhaseSpec::Translation { x0: 1.0 }.build(1).unwrap();
        let out = apply_fio(tr.as_ref(), &Symbol::One, &f).unwrap();
        assert!(out.rel_distance(&f.translate(&[1.0]).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn chirp_is_multiplication() {
        let g = grid();
        let f = gaussian(g, &[0.0], 1.0).unwrap().function;
        let chirp = PhaseSpec::Chirp { a: 1.0 }.build(1).unwrap();
        let out = apply_fio(chirp.as_ref(), &Symbol::One, &f).unwrap();
        let want = SampledFunction::from_time_fn(g, |x| cis(0.5 * x[0] * x[0]))
            .values()
            .iter()
            .zip(f.values())
            .map(|(a, b)| a * b)
            .collect();
        let want = SampledFunction::new(g, Side::Time, want).unwrap();
        assert!(out.rel_distance(&want).unwrap() < 1e-8);
    }

    #[test]
    fn aliasing_is_rejected() {
        let g = grid();
        let f = SampledFunction::from_time_fn(g, |_| C64::new(0.0, 0.0)).modulate(&[0.0]).unwrap();
        let mut wide = f.clone();
        wide.values_mut()[0] = C64::new(1.0, 0.0);
        let id = PhaseSpec::Identity.build(1).unwrap();
        assert!(matches!(apply_fio(id.as_ref(), &Symbol::One, &wide), Err(FioError::Aliasing { .. })));
    }

    #[test]
    fn kernel_matches_on_the_fly() {
        let g = grid();
        let f = gaussian(g, &[1.0], 0.7).unwrap().function;
        let phase = PhaseSpec::SinePerturbed { eps: 0.3 }.build(1).unwrap();
        let sym = SymbolSpec::GaussXEta.build();
        let a = apply_fio(phase.as_ref(), &sym, &f).unwrap();
        let b = FioKernel::new(phase.as_ref(), &sym, &g).unwrap().apply(&f, &FioOptions::default()).unwrap();
        assert!(a.rel_distance(&b).unwrap() < 1e-13);
    }

    #[test]
    fn routes_agree_on_small_grid() {
        let g = grid();
        let lat = Lattice::new(g, 0.5, 0.5).unwrap();
        let sys = GaborSystem::new(standard_gaussian(g), lat).unwrap();
        for spec in [PhaseSpec::Identity, PhaseSpec::Chirp { a: 1.0 }, PhaseSpec::Multiplier { c: 1.0 }] {
            let phase = spec.build(1).unwrap();
            for sym in [SymbolSpec::One.build(), SymbolSpec::GaussX.build()] {
                let direct = gabor_matrix_direct(phase.as_ref(), &sym, &sys, WindowKind::Tight, 0.0).unwrap();
                let gs = sym.sample(&g).unwrap();
                let stft = gabor_matrix_via_symbol_stft(phase.as_ref(), &gs, &sys, WindowKind::Tight, 0.0).unwrap();
                let diff = direct.max_difference(&stft).unwrap();
                assert!(diff < 1e-10 * direct.max_modulus(), "{spec:?}: {diff}");
            }
        }
    }

    #[test]
    fn matrix_application_reproduces_operator() {
        let g = grid();
        let lat = Lattice::new(g, 0.5, 0.5).unwrap();
        let sys = GaborSystem::new(standard_gaussian(g), lat).unwrap();
        let phase = PhaseSpec::Chirp { a: 1.0 }.build(1).unwrap();
        let m = gabor_matrix_direct(phase.as_ref(), &Symbol::One, &sys, WindowKind::Tight, 1e-8).unwrap();
        let f = gaussian(g, &[0.5], 1.0).unwrap().function;
        let c = sys.analyze_kind(WindowKind::Tight, &f).unwrap();
        let out = sys.synthesize_kind(WindowKind::Tight, &apply_via_matrix(&m, &c).unwrap()).unwrap();
        let want = apply_fio(phase.as_ref(), &Symbol::One, &f).unwrap();
        assert!(out.rel_distance(&want).unwrap() < 1e-3);
        let zero = apply_via_matrix(&m, &Coefficients::zeros(lat)).unwrap();
        assert!(zero.values().iter().all(|v| *v == ZERO));
    }

    #[test]
    fn smooth_symbol_derivatives() {
        let bx = PhaseBox::new(2.0, 2.0);
        for s in [SymbolSpec::GaussX, SymbolSpec::GaussXEta, SymbolSpec::Modulated { a: 0.5, b: 0.25 }] {
            if let Symbol::Smooth(sym) = s.build() {
                assert!(sym.check_derivatives(1, &bx, 100) < 1e-5);
            }
        }
    }
}
