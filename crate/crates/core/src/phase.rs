//! Phase functions Φ(x, η), their derivatives, sampled condition checks and
//! the canonical transformation χ(y, η) = (x, ξ) defined by
//! y = ∇_ηΦ(x, η), ξ = ∇ₓΦ(x, η).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FioError, Result};

/// Second derivatives of a phase at a point. `x_eta[(i, j)] = ∂x_i ∂η_j Φ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseHessian {
    pub xx: DMatrix<f64>,
    pub x_eta: DMatrix<f64>,
    pub eta_eta: DMatrix<f64>,
}

pub trait Phase: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn name(&self) -> String;
    fn value(&self, x: &[f64], eta: &[f64]) -> f64;
    fn grad_x(&self, x: &[f64], eta: &[f64]) -> DVector<f64>;
    fn grad_eta(&self, x: &[f64], eta: &[f64]) -> DVector<f64>;
    fn hessian(&self, x: &[f64], eta: &[f64]) -> PhaseHessian;
    /// Declared lower bound δ for |det ∂²_{x,η}Φ|.
    fn delta(&self) -> f64;
    fn as_quadratic(&self) -> Option<&QuadraticPhase> {
        None
    }
    /// Whether e^{2πiΦ} is periodic on the phase-space torus of every grid
    /// with integer x·L and even L². Holds for the quadratic catalog with
    /// integer A, B, C and integer-multiple shifts; the symbol-STFT route
    /// is exact only in that case.
    fn grid_periodic(&self) -> bool {
        false
    }
}

fn dv(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// Φ(x,η) = ½Ax·x + Bx·η + ½Cη·η + η₀·x − x₀·η.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticPhase {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    x0: DVector<f64>,
    eta0: DVector<f64>,
    label: String,
}

impl QuadraticPhase {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        x0: DVector<f64>,
        eta0: DVector<f64>,
    ) -> Result<Self> {
        let d = b.nrows();
        let square = |m: &DMatrix<f64>| m.nrows() == d && m.ncols() == d;
        if !(d == 1 || d == 2) || !square(&a) || !square(&b) || !square(&c) || x0.len() != d || eta0.len() != d {
            return Err(FioError::ShapeMismatch { expected: d, found: a.nrows() });
        }
        if a != a.transpose() || c != c.transpose() {
            return Err(FioError::Parse("A and C must be symmetric".into()));
        }
        let det = b.determinant();
        if !(det.abs() > 1e-12) {
            return Err(FioError::Singular(format!("det B = {det:e}")));
        }
        Ok(QuadraticPhase { a, b, c, x0, eta0, label: "quadratic".into() })
    }

    /// Φ(x,η) = x·η in dimension d.
    pub fn identity(d: usize) -> Self {
        let z = DMatrix::zeros(d, d);
        Self::new(z.clone(), DMatrix::identity(d, d), z, DVector::zeros(d), DVector::zeros(d))
            .expect("identity is valid")
            .labelled("identity")
    }

    pub fn labelled(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }
    pub fn eta0(&self) -> &DVector<f64> {
        &self.eta0
    }
    pub fn label(&self) -> &str {
        &self.label
    }
}

impl Phase for QuadraticPhase {
    fn dim(&self) -> usize {
        self.b.nrows()
    }
    fn name(&self) -> String {
        self.label.clone()
    }
    fn value(&self, x: &[f64], eta: &[f64]) -> f64 {
        let d = self.dim();
        let mut v = 0.0;
        for i in 0..d {
            for j in 0..d {
                v += 0.5 * self.a[(i, j)] * x[i] * x[j]
                    + self.b[(i, j)] * x[j] * eta[i]
                    + 0.5 * self.c[(i, j)] * eta[i] * eta[j];
            }
            v += self.eta0[i] * x[i] - self.x0[i] * eta[i];
        }
        v
    }
    fn grad_x(&self, x: &[f64], eta: &[f64]) -> DVector<f64> {
        &self.a * dv(x) + self.b.transpose() * dv(eta) + &self.eta0
    }
    fn grad_eta(&self, x: &[f64], eta: &[f64]) -> DVector<f64> {
        &self.b * dv(x) + &self.c * dv(eta) - &self.x0
    }
    fn hessian(&self, _x: &[f64], _eta: &[f64]) -> PhaseHessian {
        PhaseHessian { xx: self.a.clone(), x_eta: self.b.transpose(), eta_eta: self.c.clone() }
    }
    fn delta(&self) -> f64 {
        self.b.determinant().abs()
    }
    fn as_quadratic(&self) -> Option<&QuadraticPhase> {
        Some(self)
    }
    fn grid_periodic(&self) -> bool {
        let int = |m: &DMatrix<f64>| m.iter().all(|v| v.fract() == 0.0);
        int(&self.a) && int(&self.b) && int(&self.c)
    }
}

/// Row-major JSON form of a quadratic phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticPhaseRecord {
    pub d: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub x0: Vec<f64>,
    pub eta0: Vec<f64>,
    #[serde(default)]
    pub label: String,
}

impl From<&QuadraticPhase> for QuadraticPhaseRecord {
    fn from(q: &QuadraticPhase) -> Self {
        let rm = |m: &DMatrix<f64>| m.transpose().iter().copied().collect();
        QuadraticPhaseRecord {
            d: q.dim(),
            a: rm(&q.a),
            b: rm(&q.b),
            c: rm(&q.c),
            x0: q.x0.iter().copied().collect(),
            eta0: q.eta0.iter().copied().collect(),
            label: q.label.clone(),
        }
    }
}

impl TryFrom<QuadraticPhaseRecord> for QuadraticPhase {
    type Error = FioError;
    fn try_from(r: QuadraticPhaseRecord) -> Result<Self> {
        let d = r.d;
        let mat = |v: &[f64]| -> Result<DMatrix<f64>> {
            if v.len() != d * d {
                return Err(FioError::ShapeMismatch { expected: d * d, found: v.len() });
            }
            Ok(DMatrix::from_row_slice(d, d, v))
        };
        let q = QuadraticPhase::new(mat(&r.a)?, mat(&r.b)?, mat(&r.c)?, dv(&r.x0), dv(&r.eta0))?;
        Ok(if r.label.is_empty() { q } else { q.labelled(&r.label) })
    }
}

type ValueFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &[f64]) -> (DVector<f64>, DVector<f64>) + Send + Sync;
type HessFn = dyn Fn(&[f64], &[f64]) -> PhaseHessian + Send + Sync;

/// Declared bounds on the derivatives of a generic phase on a box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBounds {
    pub second: f64,
    pub third: f64,
    pub half_width: f64,
}

/// A smooth phase given by user-supplied evaluators.
#[derive(Clone)]
pub struct GenericPhase {
    name: String,
    dim: usize,
    value: Arc<ValueFn>,
    grad: Arc<GradFn>,
    hess: Arc<HessFn>,
    bounds: DerivativeBounds,
    delta: f64,
}

impl fmt::Debug for GenericPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericPhase")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("bounds", &self.bounds)
            .field("delta", &self.delta)
            .finish()
    }
}

impl GenericPhase {
    pub fn new(
        name: &str,
        dim: usize,
        value: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &[f64]) -> (DVector<f64>, DVector<f64>) + Send + Sync + 'static,
        hess: impl Fn(&[f64], &[f64]) -> PhaseHessian + Send + Sync + 'static,
        bounds: DerivativeBounds,
        delta: f64,
    ) -> Self {
        GenericPhase {
            name: name.to_string(),
            dim,
            value: Arc::new(value),
            grad: Arc::new(grad),
            hess: Arc::new(hess),
            bounds,
            delta,
        }
    }

    /// Wraps any phase as a generic one, hiding closed forms
    /// (Newton then starts from x⁰ = y).
    pub fn wrap(phase: Arc<dyn Phase>) -> Self {
        let (p1, p2, p3) = (phase.clone(), phase.clone(), phase.clone());
        GenericPhase::new(
            &phase.name(),
            phase.dim(),
            move |x, e| p1.value(x, e),
            move |x, e| (p2.grad_x(x, e), p2.grad_eta(x, e)),
            move |x, e| p3.hessian(x, e),
            DerivativeBounds { second: f64::NAN, third: f64::NAN, half_width: f64::NAN },
            phase.delta(),
        )
    }

    pub fn bounds(&self) -> DerivativeBounds {
        self.bounds
    }

    /// Largest relative discrepancy between the declared gradient and
    /// central differences of Φ at low-discrepancy points of `bx`.
    pub fn check_gradient(&self, bx: &PhaseBox, samples: usize) -> f64 {
        let h = 1e-5;
        let d = self.dim;
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
                let fd = ((self.value)(&xp, &ep) - (self.value)(&xm, &em)) / (2.0 * h);
                worst = worst.max((fd - exact).abs() / exact.abs().max(1.0));
            }
        }
        worst
    }
}

impl Phase for GenericPhase {
    fn dim(&self) -> usize {
        self.dim
    }
    fn name(&self) -> String {
        self.name.clone()
    }
    fn value(&self, x: &[f64], eta: &[f64]) -> f64 {
        (self.value)(x, eta)
    }
    fn grad_x(&self, x: &[f64], eta: &[f64]) -> DVector<f64> {
        (self.grad)(x, eta).0
    }
    fn grad_eta(&self, x: &[f64], eta: &[f64]) -> DVector<f64> {
        (self.grad)(x, eta).1
    }
    fn hessian(&self, x: &[f64], eta: &[f64]) -> PhaseHessian {
        (self.hess)(x, eta)
    }
    fn delta(&self) -> f64 {
        self.delta
    }
}

/// Catalog entries selectable by name. Scalar parameters act isotropically in d = 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhaseSpec {
    /// Φ = x·η.
    Identity,
    /// Φ = (x − x₀)·η.
    Translation {
        #[serde(default = "one")]
        x0: f64,
    },
    /// Φ = x·η + η₀·x.
    Modulation {
        #[serde(default = "one")]
        eta0: f64,
    },
    /// Φ = bx·η.
    Dilation {
        #[serde(default = "two")]
        b: f64,
    },
    /// Φ = x·η + ½a|x|².
    Chirp {
        #[serde(default = "one")]
        a: f64,
    },
    /// Φ = x·η + ½c|η|², the Fourier multiplier e^{πic|η|²}.
    Multiplier {
        #[serde(default = "one")]
        c: f64,
    },
    /// Φ = x·η + ½t|η|², the free propagator e^{πit|η|²} at time t.
    FreeSchrodinger {
        #[serde(default = "one")]
        t: f64,
    },
    /// Φ = x·η + ε Σ sin x_i sin η_i.
    SinePerturbed {
        #[serde(default = "half")]
        eps: f64,
    },
    /// Φ = x·η + Σ sin x_i.
    Sine,
    /// Φ = x·η + Σ x_i⁴.
    Quartic,
    /// Explicit quadratic phase.
    Quadratic(QuadraticPhaseRecord),
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn half() -> f64 {
    0.5
}

pub const CATALOG: &[&str] = &[
    "identity",
    "translation",
    "modulation",
    "dilation",
    "chirp",
    "multiplier",
    "free-schrodinger",
    "sine-perturbed",
    "sine",
    "quartic",
    "quadratic",
];

impl PhaseSpec {
    /// Looks up a catalog entry by name with scalar parameters.
    pub fn from_name(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |k: &str, default: f64| params.get(k).copied().unwrap_or(default);
        let spec = match name {
            "identity" => PhaseSpec::Identity,
            "translation" => PhaseSpec::Translation { x0: get("x0", 1.0) },
            "modulation" => PhaseSpec::Modulation { eta0: get("eta0", 1.0) },
            "dilation" => PhaseSpec::Dilation { b: get("b", 2.0) },
            "chirp" => PhaseSpec::Chirp { a: get("a", 1.0) },
            "multiplier" => PhaseSpec::Multiplier { c: get("c", 1.0) },
            "free-schrodinger" => PhaseSpec::FreeSchrodinger { t: get("t", 1.0) },
            "sine-perturbed" => PhaseSpec::SinePerturbed { eps: get("eps", 0.5) },
            "sine" => PhaseSpec::Sine,
            "quartic" => PhaseSpec::Quartic,
            other => return Err(FioError::UnknownName(format!("phase '{other}'"))),
        };
        Ok(spec)
    }

    /// The quadratic entries of the catalog with their default parameters.
    pub fn quadratic_catalog() -> Vec<PhaseSpec> {
        vec![
            PhaseSpec::Identity,
            PhaseSpec::Translation { x0: 1.0 },
            PhaseSpec::Modulation { eta0: 1.0 },
            PhaseSpec::Dilation { b: 2.0 },
            PhaseSpec::Chirp { a: 1.0 },
            PhaseSpec::Multiplier { c: 1.0 },
            PhaseSpec::FreeSchrodinger { t: 1.0 },
        ]
    }

    pub fn quadratic(&self, d: usize) -> Option<QuadraticPhase> {
        let id = DMatrix::<f64>::identity(d, d);
        let z = DMatrix::<f64>::zeros(d, d);
        let zv = DVector::<f64>::zeros(d);
        let fill = |v: f64| DVector::from_element(d, v);
        let (a, b, c, x0, e0, label) = match *self {
            PhaseSpec::Identity => (z.clone(), id, z, zv.clone(), zv, "identity"),
            PhaseSpec::Translation { x0 } => (z.clone(), id, z, fill(x0), zv, "translation"),
            PhaseSpec::Modulation { eta0 } => (z.clone(), id, z, zv.clone(), fill(eta0), "modulation"),
            PhaseSpec::Dilation { b } => (z.clone(), id * b, z, zv.clone(), zv, "dilation"),
            PhaseSpec::Chirp { a } => (id.clone() * a, id, z, zv.clone(), zv, "chirp"),
            PhaseSpec::Multiplier { c } => (z, id.clone(), id * c, zv.clone(), zv, "multiplier"),
            PhaseSpec::FreeSchrodinger { t } => (z, id.clone(), id * t, zv.clone(), zv, "free-schrodinger"),
            PhaseSpec::Quadratic(ref r) => return QuadraticPhase::try_from(r.clone()).ok(),
            _ => return None,
        };
        QuadraticPhase::new(a, b, c, x0, e0).ok().map(|q| q.labelled(label))
    }

    pub fn build(&self, d: usize) -> Result<Arc<dyn Phase>> {
        if let PhaseSpec::Quadratic(r) = self {
            let q = QuadraticPhase::try_from(r.clone())?;
            if q.dim() != d {
                return Err(FioError::ShapeMismatch { expected: d, found: q.dim() });
            }
            return Ok(Arc::new(q));
        }
        if let Some(q) = self.quadratic(d) {
            return Ok(Arc::new(q));
        }
        Ok(Arc::new(match *self {
            PhaseSpec::SinePerturbed { eps } => sine_perturbed(d, eps),
            PhaseSpec::Sine => sine_phase(d),
            PhaseSpec::Quartic => quartic_phase(d),
            _ => return Err(FioError::Singular(format!("{self:?} has a degenerate mixed Hessian"))),
        }))
    }
}

fn xeta(x: &[f64], eta: &[f64]) -> f64 {
    x.iter().zip(eta).map(|(a, b)| a * b).sum()
}

/// Φ = x·η + ε Σ sin x_i sin η_i.
pub fn sine_perturbed(d: usize, eps: f64) -> GenericPhase {
    GenericPhase::new(
        "sine-perturbed",
        d,
        move |x, e| xeta(x, e) + eps * (0..x.len()).map(|i| x[i].sin() * e[i].sin()).sum::<f64>(),
        move |x, e| {
            let gx = DVector::from_fn(x.len(), |i, _| e[i] + eps * x[i].cos() * e[i].sin());
            let ge = DVector::from_fn(x.len(), |i, _| x[i] + eps * x[i].sin() * e[i].cos());
            (gx, ge)
        },
        move |x, e| {
            let n = x.len();
            PhaseHessian {
                xx: DMatrix::from_fn(n, n, |i, j| if i == j { -eps * x[i].sin() * e[i].sin() } else { 0.0 }),
                x_eta: DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 + eps * x[i].cos() * e[i].cos() } else { 0.0 }),
                eta_eta: DMatrix::from_fn(n, n, |i, j| if i == j { -eps * x[i].sin() * e[i].sin() } else { 0.0 }),
            }
        },
        DerivativeBounds { second: 1.0 + eps.abs(), third: eps.abs(), half_width: f64::INFINITY },
        (1.0 - eps.abs()).powi(d as i32),
    )
}

/// Φ = x·η + Σ sin x_i.
pub fn sine_phase(d: usize) -> GenericPhase {
    GenericPhase::new(
        "sine",
        d,
        |x, e| xeta(x, e) + x.iter().map(|v| v.sin()).sum::<f64>(),
        |x, e| (DVector::from_fn(x.len(), |i, _| e[i] + x[i].cos()), dv(x)),
        |x, _e| {
            let n = x.len();
            PhaseHessian {
                xx: DMatrix::from_fn(n, n, |i, j| if i == j { -x[i].sin() } else { 0.0 }),
                x_eta: DMatrix::identity(n, n),
                eta_eta: DMatrix::zeros(n, n),
            }
        },
        DerivativeBounds { second: 1.0, third: 1.0, half_width: f64::INFINITY },
        1.0,
    )
}

/// Φ = x·η + Σ x_i⁴; violates the bounded-second-derivative condition.
pub fn quartic_phase(d: usize) -> GenericPhase {
    GenericPhase::new(
        "quartic",
        d,
        |x, e| xeta(x, e) + x.iter().map(|v| v.powi(4)).sum::<f64>(),
        |x, e| (DVector::from_fn(x.len(), |i, _| e[i] + 4.0 * x[i].powi(3)), dv(x)),
        |x, _e| {
            let n = x.len();
            PhaseHessian {
                xx: DMatrix::from_fn(n, n, |i, j| if i == j { 12.0 * x[i] * x[i] } else { 0.0 }),
                x_eta: DMatrix::identity(n, n),
                eta_eta: DMatrix::zeros(n, n),
            }
        },
        DerivativeBounds { second: f64::INFINITY, third: f64::INFINITY, half_width: f64::INFINITY },
        1.0,
    )
}

/// Box [−rx, rx]^d × [−reta, reta]^d in phase space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseBox {
    pub rx: f64,
    pub reta: f64,
}

impl PhaseBox {
    pub fn new(rx: f64, reta: f64) -> Self {
        PhaseBox { rx, reta }
    }
    pub fn scaled(&self, s: f64) -> Self {
        PhaseBox { rx: self.rx * s, reta: self.reta * s }
    }
    /// Deterministic Halton points (x, η) in the box.
    pub fn sample(&self, d: usize, count: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        const BASES: [u64; 4] = [2, 3, 5, 7];
        (1..=count as u64)
            .map(|i| {
                let u: Vec<f64> = (0..2 * d).map(|k| halton(i, BASES[k])).collect();
                let x = (0..d).map(|k| self.rx * (2.0 * u[k] - 1.0)).collect();
                let e = (0..d).map(|k| self.reta * (2.0 * u[d + k] - 1.0)).collect();
                (x, e)
            })
            .collect()
    }
}

fn halton(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Outcome of the sampled checks of the phase conditions on a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseConditionReport {
    pub phase: String,
    pub samples: usize,
    pub sup_second: f64,
    pub sup_third: f64,
    pub min_det: f64,
    pub max_det: f64,
    pub delta: f64,
    /// min |det| ≥ δ/2 on the sample.
    pub det_ok: bool,
    /// Second derivatives grew by more than 1.5× on the doubled box.
    pub second_derivative_growth: bool,
    pub note: String,
}

fn sup_second(phase: &dyn Phase, bx: &PhaseBox, samples: usize) -> (f64, f64, f64) {
    let d = phase.dim();
    let mut sup: f64 = 0.0;
    let mut min_det = f64::INFINITY;
    let mut max_det: f64 = 0.0;
    for (x, e) in bx.sample(d, samples) {
        let h = phase.hessian(&x, &e);
        for m in [&h.xx, &h.x_eta, &h.eta_eta] {
            sup = sup.max(m.amax());
        }
        let det = h.x_eta.determinant().abs();
        min_det = min_det.min(det);
        max_det = max_det.max(det);
    }
    (sup, min_det, max_det)
}

/// Sampled sup of |∂²Φ| and |∂³Φ| and the range of |det ∂²_{x,η}Φ| on a box.
pub fn check_phase_conditions(phase: &dyn Phase, bx: &PhaseBox, samples: usize) -> PhaseConditionReport {
    let d = phase.dim();
    let (second, min_det, max_det) = sup_second(phase, bx, samples);
    let (second2, _, _) = sup_second(phase, &bx.scaled(2.0), samples);
    let third = if phase.as_quadratic().is_some() {
        0.0
    } else {
        let h = 1e-4;
        let mut sup: f64 = 0.0;
        for (x, e) in bx.sample(d, samples) {
            for k in 0..2 * d {
                let (mut xp, mut xm, mut ep, mut em) = (x.clone(), x.clone(), e.clone(), e.clone());
                if k < d {
                    xp[k] += h;
                    xm[k] -= h;
                } else {
                    ep[k - d] += h;
                    em[k - d] -= h;
                }
                let hp = phase.hessian(&xp, &ep);
                let hm = phase.hessian(&xm, &em);
                for (a, b) in [(&hp.xx, &hm.xx), (&hp.x_eta, &hm.x_eta), (&hp.eta_eta, &hm.eta_eta)] {
                    sup = sup.max(((a - b) / (2.0 * h)).amax());
                }
            }
        }
        sup
    };
    let delta = phase.delta();
    PhaseConditionReport {
        phase: phase.name(),
        samples,
        sup_second: second,
        sup_third: third,
        min_det,
        max_det,
        delta,
        det_ok: delta > 0.0 && min_det >= delta / 2.0,
        second_derivative_growth: second2 > 1.5 * second,
        note: format!("sampled at {samples} Halton points; not a proof"),
    }
}

/// Sampled sup of |∇ₓΦ(x,η) − ∇ₓΦ(x',η)| on a box, with a growth flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientDiameter {
    pub value: f64,
    pub doubled_box_value: f64,
    /// Diameter grew by more than 1.5× on the doubled box.
    pub unbounded: bool,
}

fn diameter_on(phase: &dyn Phase, bx: &PhaseBox) -> f64 {
    let d = phase.dim();
    let pts = bx.sample(d, 20);
    let mut sup: f64 = 0.0;
    for (_, e) in &pts {
        let grads: Vec<DVector<f64>> = pts.iter().map(|(x, _)| phase.grad_x(x, e)).collect();
        for i in 0..grads.len() {
            for j in i + 1..grads.len() {
                sup = sup.max((&grads[i] - &grads[j]).norm());
            }
        }
    }
    sup
}

pub fn x_gradient_diameter(phase: &dyn Phase, bx: &PhaseBox) -> GradientDiameter {
    let value = diameter_on(phase, bx);
    let doubled_box_value = diameter_on(phase, &bx.scaled(2.0));
    GradientDiameter { value, doubled_box_value, unbounded: doubled_box_value > 1.5 * value && doubled_box_value > 1e-12 }
}

pub trait CanonicalMap: Send + Sync {
    fn dim(&self) -> usize;
    /// χ(y, η) = (x, ξ).
    fn forward(&self, y: &[f64], eta: &[f64]) -> Result<(DVector<f64>, DVector<f64>)>;
    /// χ^{-1}(x, ξ) = (y, η).
    fn inverse(&self, x: &[f64], xi: &[f64]) -> Result<(DVector<f64>, DVector<f64>)>;
    /// 2d × 2d Jacobian of χ at (y, η).
    fn jacobian(&self, y: &[f64], eta: &[f64]) -> Result<DMatrix<f64>>;
}

/// Closed-form affine canonical map z ↦ Mz + shift of a quadratic phase.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub shift: DVector<f64>,
}

impl CanonicalMap for AffineMap {
    fn dim(&self) -> usize {
        self.shift.len() / 2
    }
    fn forward(&self, y: &[f64], eta: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        let d = self.dim();
        let z = DVector::from_iterator(2 * d, y.iter().chain(eta).copied());
        let w = &self.matrix * z + &self.shift;
        Ok((w.rows(0, d).into_owned(), w.rows(d, d).into_owned()))
    }
    fn inverse(&self, x: &[f64], xi: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        let d = self.dim();
        let w = DVector::from_iterator(2 * d, x.iter().chain(xi).copied()) - &self.shift;
        let z = self
            .matrix
            .clone()
            .lu()
            .solve(&w)
            .ok_or_else(|| FioError::Singular("canonical map matrix".into()))?;
        Ok((z.rows(0, d).into_owned(), z.rows(d, d).into_owned()))
    }
    fn jacobian(&self, _y: &[f64], _eta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.matrix.clone())
    }
}

/// χ of a quadratic phase: [[B⁻¹, −B⁻¹C], [AB⁻¹, Bᵀ − AB⁻¹C]] plus the shift
/// (B⁻¹x₀, AB⁻¹x₀ + η₀).
pub fn canonical_map_quadratic(qp: &QuadraticPhase) -> Result<AffineMap> {
    let d = qp.dim();
    let binv = qp.b.clone().try_inverse().ok_or_else(|| FioError::Singular("B".into()))?;
    let ab = &qp.a * &binv;
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(&binv);
    m.view_mut((0, d), (d, d)).copy_from(&(-&binv * &qp.c));
    m.view_mut((d, 0), (d, d)).copy_from(&ab);
    m.view_mut((d, d), (d, d)).copy_from(&(qp.b.transpose() - &ab * &qp.c));
    let s1 = &binv * &qp.x0;
    let s2 = &ab * &qp.x0 + &qp.eta0;
    let shift = DVector::from_iterator(2 * d, s1.iter().chain(s2.iter()).copied());
    Ok(AffineMap { matrix: m, shift })
}

/// Starting point of the Newton solves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialGuess {
    /// Exact affine solution for quadratic phases, the identity guess otherwise.
    Auto,
    /// x⁰ = y (forward) and η⁰ = ξ (inverse).
    Identity,
}

/// χ evaluated by damped Newton iteration on the defining equations.
#[derive(Clone, Debug)]
pub struct NewtonMap {
    phase: Arc<dyn Phase>,
    guess: InitialGuess,
    tolerance: f64,
}

const MAX_ITER: usize = 50;
const MAX_HALVINGS: usize = 10;

impl NewtonMap {
    pub fn new(phase: Arc<dyn Phase>) -> Self {
        NewtonMap { phase, guess: InitialGuess::Auto, tolerance: 1e-10 }
    }
    pub fn with_guess(mut self, guess: InitialGuess) -> Self {
        self.guess = guess;
        self
    }
    pub fn phase(&self) -> &Arc<dyn Phase> {
        &self.phase
    }

    /// Solves r(u) = 0 where `residual` returns (r, ∂r/∂u).
    fn solve(
        &self,
        start: DVector<f64>,
        residual: impl Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
    ) -> Result<DVector<f64>> {
        let bound = self.phase.delta() / 2.0;
        let mut u = start;
        let (mut r, mut jac) = residual(&u);
        let mut res = r.norm();
        for _ in 0..MAX_ITER {
            if !res.is_finite() {
                return Err(FioError::NonFinite("Newton residual".into()));
            }
            if res <= self.tolerance {
                return Ok(u);
            }
            let det = jac.determinant();
            if det.abs() < bound {
                return Err(FioError::ConditionViolation { det, bound });
            }
            let step = jac.clone().lu().solve(&r).ok_or_else(|| FioError::Singular("Newton Jacobian".into()))?;
            let mut t = 1.0;
            let mut cand = &u - &step * t;
            let mut next = residual(&cand);
            for _ in 0..MAX_HALVINGS {
                if next.0.norm() < res {
                    break;
                }
                t *= 0.5;
                cand = &u - &step * t;
                next = residual(&cand);
            }
            u = cand;
            r = next.0;
            jac = next.1;
            res = r.norm();
        }
        if res <= self.tolerance {
            Ok(u)
        } else {
            Err(FioError::NewtonDiverged { residual: res })
        }
    }

    /// x with ∇_ηΦ(x, η) = y.
    pub fn solve_x(&self, y: &[f64], eta: &[f64]) -> Result<DVector<f64>> {
        let start = match (self.guess, self.phase.as_quadratic()) {
            (InitialGuess::Auto, Some(q)) => canonical_map_quadratic(q)?.forward(y, eta)?.0,
            _ => dv(y),
        };
        let yv = dv(y);
        self.solve(start, |x| {
            let g = self.phase.grad_eta(x.as_slice(), eta) - &yv;
            (g, self.phase.hessian(x.as_slice(), eta).x_eta.transpose())
        })
    }

    /// η with ∇ₓΦ(x, η) = ξ.
    pub fn solve_eta(&self, x: &[f64], xi: &[f64]) -> Result<DVector<f64>> {
        let start = match (self.guess, self.phase.as_quadratic()) {
            (InitialGuess::Auto, Some(q)) => canonical_map_quadratic(q)?.inverse(x, xi)?.1,
            _ => dv(xi),
        };
        let xiv = dv(xi);
        self.solve(start, |e| {
            let g = self.phase.grad_x(x, e.as_slice()) - &xiv;
            (g, self.phase.hessian(x, e.as_slice()).x_eta)
        })
    }
}

impl CanonicalMap for NewtonMap {
    fn dim(&self) -> usize {
        self.phase.dim()
    }
    fn forward(&self, y: &[f64], eta: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        let x = self.solve_x(y, eta)?;
        let xi = self.phase.grad_x(x.as_slice(), eta);
        Ok((x, xi))
    }
    fn inverse(&self, x: &[f64], xi: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        let eta = self.solve_eta(x, xi)?;
        let y = self.phase.grad_eta(x, eta.as_slice());
        Ok((y, eta))
    }
    fn jacobian(&self, y: &[f64], eta: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let x = self.solve_x(y, eta)?;
        let h = self.phase.hessian(x.as_slice(), eta);
        let pinv = h
            .x_eta
            .transpose()
            .try_inverse()
            .ok_or_else(|| FioError::Singular("mixed Hessian".into()))?;
        let x_eta_blk = -&pinv * &h.eta_eta;
        let xi_y = &h.xx * &pinv;
        let xi_eta = &h.xx * &x_eta_blk + &h.x_eta;
        let mut j = DMatrix::zeros(2 * d, 2 * d);
        j.view_mut((0, 0), (d, d)).copy_from(&pinv);
        j.view_mut((0, d), (d, d)).copy_from(&x_eta_blk);
        j.view_mut((d, 0), (d, d)).copy_from(&xi_y);
        j.view_mut((d, d), (d, d)).copy_from(&xi_eta);
        Ok(j)
    }
}

/// χ(y, η) by Newton iteration.
pub fn canonical_map(phase: Arc<dyn Phase>, y: &[f64], eta: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
    NewtonMap::new(phase).forward(y, eta)
}

/// Standard symplectic form Ω = [[0, I], [−I, 0]] in dimension 2d.
pub fn symplectic_form(d: usize) -> DMatrix<f64> {
    let mut o = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        o[(i, d + i)] = 1.0;
        o[(d + i, i)] = -1.0;
    }
    o
}

/// Max-entry residual of JᵀΩJ − Ω.
pub fn symplectic_residual(j: &DMatrix<f64>) -> f64 {
    let o = symplectic_form(j.nrows() / 2);
    (j.transpose() * &o * j - o).amax()
}

/// Sampled bilipschitz constant K: |χ(z₁) − χ(z₂)| / |z₁ − z₂| ∈ [1/K, K].
pub fn bilipschitz_constant(map: &dyn CanonicalMap, bx: &PhaseBox, samples: usize) -> Result<f64> {
    let d = map.dim();
    let pts = bx.sample(d, samples);
    let images: Vec<DVector<f64>> = pts
        .iter()
        .map(|(y, e)| {
            map.forward(y, e)
                .map(|(x, xi)| DVector::from_iterator(2 * d, x.iter().chain(xi.iter()).copied()))
        })
        .collect::<Result<_>>()?;
    let zs: Vec<DVector<f64>> = pts
        .iter()
        .map(|(y, e)| DVector::from_iterator(2 * d, y.iter().chain(e).copied()))
        .collect();
    let mut k: f64 = 1.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let r = (&images[i] - &images[j]).norm() / (&zs[i] - &zs[j]).norm();
            k = k.max(r).max(1.0 / r);
        }
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn q(spec: PhaseSpec) -> QuadraticPhase {
        spec.quadratic(1).unwrap()
    }

    #[test]
    fn table_examples() {
        let cases: Vec<(PhaseSpec, [f64; 2], [f64; 2])> = vec![
            (PhaseSpec::Identity, [0.3, -1.2], [0.3, -1.2]),
            (PhaseSpec::Translation { x0: 1.5 }, [0.3, -1.2], [1.8, -1.2]),
            (PhaseSpec::Chirp { a: 1.0 }, [0.3, -1.2], [0.3, -0.9]),
            (PhaseSpec::Dilation { b: 2.0 }, [0.3, -1.2], [0.15, -2.4]),
        ];
        for (spec, z, want) in cases {
            let phase: Arc<dyn Phase> = Arc::new(q(spec.clone()));
            let (x, xi) = canonical_map(phase.clone(), &[z[0]], &[z[1]]).unwrap();
            assert_abs_diff_eq!(x[0], want[0], epsilon = 1e-12);
            assert_abs_diff_eq!(xi[0], want[1], epsilon = 1e-12);
            let plain = NewtonMap::new(Arc::new(GenericPhase::wrap(phase))).with_guess(InitialGuess::Identity);
            let (x, xi) = plain.forward(&[z[0]], &[z[1]]).unwrap();
            assert_abs_diff_eq!(x[0], want[0], epsilon = 1e-10);
            assert_abs_diff_eq!(xi[0], want[1], epsilon = 1e-10);
        }
    }

    #[test]
    fn free_flow_block() {
        let m = canonical_map_quadratic(&q(PhaseSpec::FreeSchrodinger { t: 0.7 })).unwrap();
        let (x, xi) = m.forward(&[1.0], &[2.0]).unwrap();
        assert_abs_diff_eq!(x[0], 1.0 - 0.7 * 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(xi[0], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn translation_shift_column() {
        let qp = QuadraticPhase::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::from_element(1, 1, 0.0),
            DVector::from_element(1, 1.0),
            DVector::from_element(1, 0.25),
        )
        .unwrap();
        let m = canonical_map_quadratic(&qp).unwrap();
        assert_abs_diff_eq!(m.shift[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.shift[1], 0.5 * 0.5 + 0.25, epsilon = 1e-15);
    }

    #[test]
    fn two_dimensional_nonsymmetric_b() {
        let qp = QuadraticPhase::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, -1.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]),
            DVector::from_vec(vec![0.5, -0.25]),
            DVector::from_vec(vec![1.0, 0.0]),
        )
        .unwrap();
        let closed = canonical_map_quadratic(&qp).unwrap();
        assert!(symplectic_residual(&closed.matrix) < 1e-12);
        let phase: Arc<dyn Phase> = Arc::new(qp);
        let newton = NewtonMap::new(Arc::new(GenericPhase::wrap(phase))).with_guess(InitialGuess::Identity);
        let (a, b) = closed.forward(&[0.3, -0.7], &[1.1, 0.4]).unwrap();
        let (c, d) = newton.forward(&[0.3, -0.7], &[1.1, 0.4]).unwrap();
        assert!((a - c).norm() < 1e-10 && (b - d).norm() < 1e-10);
        let j = newton.jacobian(&[0.3, -0.7], &[1.1, 0.4]).unwrap();
        assert!((j - &closed.matrix).amax() < 1e-12);
    }

    #[test]
    fn generic_round_trip_and_symplectic() {
        let phase: Arc<dyn Phase> = Arc::new(sine_perturbed(1, 0.5));
        let map = NewtonMap::new(phase.clone());
        for (y, e) in PhaseBox::new(3.0, 3.0).sample(1, 50) {
            let (x, xi) = map.forward(&y, &e).unwrap();
            let (y2, e2) = map.inverse(x.as_slice(), xi.as_slice()).unwrap();
            assert!((y2[0] - y[0]).abs() < 1e-9 && (e2[0] - e[0]).abs() < 1e-9);
            assert!(symplectic_residual(&map.jacobian(&y, &e).unwrap()) < 1e-8);
        }
    }

    #[test]
    fn condition_reports() {
        let quad = q(PhaseSpec::Dilation { b: 2.0 });
        let r = check_phase_conditions(&quad, &PhaseBox::new(4.0, 4.0), 100);
        assert_eq!(r.sup_third, 0.0);
        assert_abs_diff_eq!(r.min_det, 2.0, epsilon = 1e-14);
        let bad = sine_perturbed(1, 1.0);
        assert!(!check_phase_conditions(&bad, &PhaseBox::new(4.0, 4.0), 100).det_ok);
        let good = sine_perturbed(1, 0.5);
        let r = check_phase_conditions(&good, &PhaseBox::new(4.0, 4.0), 100);
        assert!(r.det_ok && r.sup_second <= 1.5 + 1e-12);
        let quartic = quartic_phase(1);
        assert!(check_phase_conditions(&quartic, &PhaseBox::new(4.0, 4.0), 100).second_derivative_growth);
    }

    #[test]
    fn gradient_diameters() {
        let bx = PhaseBox::new(4.0, 4.0);
        let mult = q(PhaseSpec::Multiplier { c: 1.0 });
        assert_eq!(x_gradient_diameter(&mult, &bx).value, 0.0);
        assert!(!x_gradient_diameter(&mult, &bx).unbounded);
        assert!(x_gradient_diameter(&q(PhaseSpec::Chirp { a: 1.0 }), &bx).unbounded);
        let sine = x_gradient_diameter(&sine_phase(1), &bx);
        assert!(sine.value <= 2.0 && !sine.unbounded);
    }

    #[test]
    fn declared_gradients_match() {
        let bx = PhaseBox::new(3.0, 3.0);
        for p in [sine_perturbed(1, 0.5), sine_phase(1), quartic_phase(1), sine_perturbed(2, 0.3)] {
            assert!(p.check_gradient(&bx, 100) < 1e-6, "{}", p.name());
        }
    }

    #[test]
    fn record_round_trip() {
        let qp = q(PhaseSpec::Chirp { a: 1.0 });
        let json = serde_json::to_string(&QuadraticPhaseRecord::from(&qp)).unwrap();
        let back: QuadraticPhaseRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(QuadraticPhase::try_from(back).unwrap(), qp);
    }
}
