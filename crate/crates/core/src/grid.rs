//! Uniform periodic grids on the torus [0, L)^d, sampled functions and
//! their Fourier transforms, and time-frequency shifts.
//!
//! Time samples are stored in natural order (index j at x = jΔx). Frequency
//! samples are stored centered: index i holds η = (i - n/2)/L. Pointwise
//! evaluations use the centered representative of x in [-L/2, L/2).

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{FioError, Result};
use crate::fft::{fft_nd, half_shift};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    d: usize,
    l: f64,
    n: usize,
}

impl Grid {
    pub fn new(d: usize, l: f64, n: usize) -> Result<Self> {
        if d != 1 && d != 2 {
            return Err(FioError::InvalidGrid(format!("dimension {d} not in {{1, 2}}")));
        }
        if !(l.is_finite() && l > 0.0) {
            return Err(FioError::InvalidGrid(format!("period {l} must be positive")));
        }
        if n < 8 || !n.is_multiple_of(2) {
            return Err(FioError::InvalidGrid(format!("n = {n} must be even and at least 8")));
        }
        Ok(Grid { d, l, n })
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn l(&self) -> f64 {
        self.l
    }
    pub fn n(&self) -> usize {
        self.n
    }
    /// Total number of samples n^d.
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn dx(&self) -> f64 {
        self.l / self.n as f64
    }
    pub fn deta(&self) -> f64 {
        1.0 / self.l
    }
    /// Period of the frequency grid, n/L.
    pub fn freq_period(&self) -> f64 {
        self.n as f64 / self.l
    }
    /// Δx^d, the quadrature weight on the time side.
    pub fn cell_time(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }
    /// Δη^d, the quadrature weight on the frequency side.
    pub fn cell_freq(&self) -> f64 {
        self.deta().powi(self.d as i32)
    }
    pub fn shape(&self) -> Vec<usize> {
        vec![self.n; self.d]
    }

    /// Centered time coordinate of axis index j.
    pub fn time_axis(&self, j: usize) -> f64 {
        let n = self.n as i64;
        let j = j as i64;
        let s = if j >= n / 2 { j - n } else { j };
        s as f64 * self.dx()
    }
    /// Frequency of centered axis index i.
    pub fn freq_axis(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) / self.l
    }

    pub fn unravel(&self, flat: usize) -> [usize; 2] {
        if self.d == 1 {
            [flat, 0]
        } else {
            [flat / self.n, flat % self.n]
        }
    }
    pub fn ravel(&self, idx: &[usize]) -> usize {
        if self.d == 1 {
            idx[0]
        } else {
            idx[0] * self.n + idx[1]
        }
    }

    /// Centered coordinates of time sample `flat`; only the first d entries are used.
    pub fn time_point(&self, flat: usize) -> [f64; 2] {
        let ix = self.unravel(flat);
        [self.time_axis(ix[0]), if self.d == 2 { self.time_axis(ix[1]) } else { 0.0 }]
    }
    /// Frequency of centered sample `flat`.
    pub fn freq_point(&self, flat: usize) -> [f64; 2] {
        let ix = self.unravel(flat);
        [self.freq_axis(ix[0]), if self.d == 2 { self.freq_axis(ix[1]) } else { 0.0 }]
    }

    /// Integer number of steps represented by `value`, if it is a multiple of `step`.
    pub(crate) fn steps(value: f64, step: f64) -> Result<i64> {
        let r = value / step;
        let k = r.round();
        if (r - k).abs() > 1e-9 * r.abs().max(1.0) {
            return Err(FioError::OffLattice { value, step });
        }
        Ok(k as i64)
    }

    pub fn same_as(&self, other: &Grid) -> Result<()> {
        if self.d != other.d || self.n != other.n || (self.l - other.l).abs() > 1e-12 * self.l {
            return Err(FioError::GridMismatch(format!(
                "(d={}, L={}, n={}) vs (d={}, L={}, n={})",
                self.d, self.l, self.n, other.d, other.l, other.n
            )));
        }
        Ok(())
    }
}

/// Minimum-image representative of `x` modulo `period`, in [-period/2, period/2).
pub fn wrap_centered(x: f64, period: f64) -> f64 {
    let y = x - period * (x / period).round();
    if y >= period / 2.0 {
        y - period
    } else if y < -period / 2.0 {
        y + period
    } else {
        y
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Time,
    Frequency,
}

impl Side {
    pub fn name(&self) -> &'static str {
        match self {
            Side::Time => "time",
            Side::Frequency => "frequency",
        }
    }
}

/// Complex samples of a function on a grid, either in time or in frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledFunction {
    grid: Grid,
    side: Side,
    values: Vec<C64>,
}

impl SampledFunction {
    pub fn new(grid: Grid, side: Side, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FioError::ShapeMismatch { expected: grid.len(), found: values.len() });
        }
        Ok(SampledFunction { grid, side, values })
    }

    pub fn zeros(grid: Grid, side: Side) -> Self {
        SampledFunction { grid, side, values: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    /// Samples `f` at the centered time coordinates.
    pub fn from_time_fn(grid: Grid, f: impl Fn(&[f64]) -> C64) -> Self {
        let d = grid.d();
        let values = (0..grid.len()).map(|j| f(&grid.time_point(j)[..d])).collect();
        SampledFunction { grid, side: Side::Time, values }
    }

    /// Samples `f` at the centered frequencies.
    pub fn from_freq_fn(grid: Grid, f: impl Fn(&[f64]) -> C64) -> Self {
        let d = grid.d();
        let values = (0..grid.len()).map(|i| f(&grid.freq_point(i)[..d])).collect();
        SampledFunction { grid, side: Side::Frequency, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn side(&self) -> Side {
        self.side
    }
    pub fn values(&self) -> &[C64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    fn cell(&self) -> f64 {
        match self.side {
            Side::Time => self.grid.cell_time(),
            Side::Frequency => self.grid.cell_freq(),
        }
    }

    pub fn expect_side(&self, side: Side) -> Result<()> {
        if self.side != side {
            return Err(FioError::SideMismatch { expected: side.name(), found: self.side.name() });
        }
        Ok(())
    }

    pub fn norm_l2(&self) -> f64 {
        (self.cell() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// ⟨self, other⟩ = Σ self · conj(other) times the cell measure.
    pub fn inner(&self, other: &SampledFunction) -> Result<C64> {
        self.grid.same_as(&other.grid)?;
        other.expect_side(self.side)?;
        let s: C64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum();
        Ok(s * self.cell())
    }

    /// Relative L² distance ‖self − other‖ / ‖other‖.
    pub fn rel_distance(&self, other: &SampledFunction) -> Result<f64> {
        self.grid.same_as(&other.grid)?;
        other.expect_side(self.side)?;
        let num: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = other.values.iter().map(|b| b.norm_sqr()).sum();
        Ok((num / den).sqrt())
    }

    pub fn scale(&self, c: C64) -> SampledFunction {
        let values = self.values.iter().map(|v| v * c).collect();
        SampledFunction { grid: self.grid, side: self.side, values }
    }

    pub fn fourier_transform(&self) -> Result<SampledFunction> {
        self.expect_side(Side::Time)?;
        let mut buf = self.values.clone();
        fft_nd(&mut buf, &self.grid.shape(), false);
        let c = self.grid.cell_time();
        let values = half_shift(&buf, self.grid.n, self.grid.d).into_iter().map(|v| v * c).collect();
        Ok(SampledFunction { grid: self.grid, side: Side::Frequency, values })
    }

    pub fn inverse_fourier_transform(&self) -> Result<SampledFunction> {
        self.expect_side(Side::Frequency)?;
        let mut buf = half_shift(&self.values, self.grid.n, self.grid.d);
        fft_nd(&mut buf, &self.grid.shape(), true);
        let c = self.grid.cell_freq();
        buf.iter_mut().for_each(|v| *v *= c);
        Ok(SampledFunction { grid: self.grid, side: Side::Time, values: buf })
    }

    /// T_{x₀}: circular shift on the time side, multiplication by
    /// e^{-2πi x₀·η} on the frequency side.
    pub fn translate(&self, x0: &[f64]) -> Result<SampledFunction> {
        self.check_point(x0)?;
        let g = self.grid;
        let steps: Vec<i64> = x0.iter().map(|&x| Grid::steps(x, g.dx())).collect::<Result<_>>()?;
        match self.side {
            Side::Time => Ok(self.roll(&steps)),
            Side::Frequency => {
                let values = self
                    .values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let eta = g.freq_point(i);
                        let ph: f64 = (0..g.d).map(|a| x0[a] * eta[a]).sum();
                        v * C64::from_polar(1.0, -2.0 * PI * ph)
                    })
                    .collect();
                Ok(SampledFunction { grid: g, side: self.side, values })
            }
        }
    }

    /// M_{η₀}: multiplication by e^{2πi η₀·x} on the time side, circular
    /// shift on the frequency side.
    pub fn modulate(&self, eta0: &[f64]) -> Result<SampledFunction> {
        self.check_point(eta0)?;
        let g = self.grid;
        let steps: Vec<i64> = eta0.iter().map(|&e| Grid::steps(e, g.deta())).collect::<Result<_>>()?;
        match self.side {
            Side::Frequency => Ok(self.roll(&steps)),
            Side::Time => {
                let n = g.n as i64;
                let values = self
                    .values
                    .iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let ix = g.unravel(j);
                        let mut p = 0i64;
                        for a in 0..g.d {
                            p += steps[a] * ix[a] as i64;
                        }
                        v * C64::from_polar(1.0, 2.0 * PI * (p.rem_euclid(n)) as f64 / n as f64)
                    })
                    .collect();
                Ok(SampledFunction { grid: g, side: self.side, values })
            }
        }
    }

    fn check_point(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.grid.d {
            return Err(FioError::ShapeMismatch { expected: self.grid.d, found: p.len() });
        }
        Ok(())
    }

    fn roll(&self, steps: &[i64]) -> SampledFunction {
        let g = self.grid;
        let n = g.n as i64;
        let mut values = vec![C64::new(0.0, 0.0); g.len()];
        for (j, v) in self.values.iter().enumerate() {
            let ix = g.unravel(j);
            let mut t = [0usize; 2];
            for a in 0..g.d {
                t[a] = (ix[a] as i64 + steps[a]).rem_euclid(n) as usize;
            }
            values[g.ravel(&t)] = *v;
        }
        SampledFunction { grid: g, side: self.side, values }
    }
}

/// Result of a test-function factory: the samples and the fraction of L²
/// mass lost to periodization.
#[derive(Clone, Debug)]
pub struct Generated {
    pub function: SampledFunction,
    pub periodization_error: f64,
    /// Set when `periodization_error` exceeds 1e-6.
    pub warning: bool,
}

/// L²-normalized Gaussian (2/w²)^{d/4} e^{-π|x-c|²/w²}, periodized on the torus.
pub fn gaussian(grid: Grid, center: &[f64], width: f64) -> Result<Generated> {
    if !(width.is_finite() && width > 0.0) {
        return Err(FioError::InvalidGrid(format!("gaussian width {width} must be positive")));
    }
    if center.len() != grid.d() {
        return Err(FioError::ShapeMismatch { expected: grid.d(), found: center.len() });
    }
    let d = grid.d();
    let amp = (2.0 / (width * width)).powf(d as f64 / 4.0);
    let l = grid.l();
    let function = SampledFunction::from_time_fn(grid, |x| {
        let r2: f64 = (0..d).map(|a| wrap_centered(x[a] - center[a], l).powi(2)).sum();
        C64::new(amp * (-PI * r2 / (width * width)).exp(), 0.0)
    });
    let axis_tail = libm::erfc((2.0 * PI).sqrt() * l / (2.0 * width));
    let periodization_error = 1.0 - (1.0 - axis_tail).powi(d as i32);
    Ok(Generated { function, periodization_error, warning: periodization_error > 1e-6 })
}

/// The standard window φ(x) = 2^{d/4} e^{-π|x|²}.
pub fn standard_gaussian(grid: Grid) -> SampledFunction {
    gaussian(grid, &vec![0.0; grid.d()], 1.0).expect("unit width is valid").function
}
