//! Quantitative checks of the Gabor matrices: decay along the graph of the
//! canonical map, Schur sums, modulation-space norms and norm-ratio
//! experiments on families of dilated Gaussians.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FioError, Result};
use crate::fft::fft_nd;
use crate::fio::{apply_fio, GaborMatrix, GridSymbol, Symbol};
use crate::gabor::{mixed_norm_table, stft_sampled, weight, Lattice, MixedNormSpec, StftSampling};
use crate::grid::{gaussian, standard_gaussian, wrap_centered, Grid, SampledFunction};
use crate::metaplectic::{apply_factors, factorize};
use crate::phase::{CanonicalMap, NewtonMap, Phase};

/// ‖f‖_{M^{p,q}_{v_s}} = ‖V_g f‖_{L^{p,q}_{v_s}} by Riemann sums over a
/// (possibly strided) phase-space grid: inner L^p in x, outer L^q in η.
pub fn mod_norm(f: &SampledFunction, spec: &MixedNormSpec, g: &SampledFunction, sampling: StftSampling) -> Result<f64> {
    let v = stft_sampled(f, g, sampling)?;
    let grid = *f.grid();
    let d = grid.d();
    let tc = v.time_count();
    let fc = v.freq_count();
    let mut abs = vec![0.0; tc * fc];
    for t in 0..tc {
        let x = v.time_coord(t);
        for k in 0..fc {
            let eta = v.freq_coord(k);
            let z2: f64 = (0..d).map(|a| x[a] * x[a] + eta[a] * eta[a]).sum();
            abs[t * fc + k] = v.at(t, k).norm() * weight(z2, spec.s);
        }
    }
    let xcell = (grid.dx() * sampling.time_stride as f64).powi(d as i32);
    let ecell = (grid.deta() * sampling.freq_stride as f64).powi(d as i32);
    Ok(mixed_norm_table(&abs, tc, fc, spec.p, spec.q, xcell, ecell))
}

/// ‖f‖_{M^{p,q}} with the standard Gaussian window on the full grid.
pub fn mod_norm_default(f: &SampledFunction, spec: &MixedNormSpec) -> Result<f64> {
    mod_norm(f, spec, &standard_gaussian(*f.grid()), StftSampling::full())
}

/// Minimum-image distance on the phase-space torus of a lattice.
fn torus_dist2(lat: &Lattice, x: &[f64], xi: &[f64], m: &[f64; 2], n: &[f64; 2]) -> f64 {
    let (lp, fp) = lat.periods();
    (0..lat.grid().d())
        .map(|a| wrap_centered(x[a] - m[a], lp).powi(2) + wrap_centered(xi[a] - n[a], fp).powi(2))
        .sum()
}

fn bracket(d2: f64) -> f64 {
    (1.0 + d2).sqrt()
}

/// χ(m, n) for every lattice index, wrapped to centered coordinates.
fn images(lat: &Lattice, chi: &dyn CanonicalMap) -> Result<Vec<([f64; 2], [f64; 2])>> {
    let d = lat.grid().d();
    let (lp, fp) = lat.periods();
    (0..lat.len())
        .map(|idx| {
            let (m, n) = lat.point(idx);
            let (x, xi) = chi.forward(&m[..d], &n[..d])?;
            let mut a = [0.0; 2];
            let mut b = [0.0; 2];
            for k in 0..d {
                a[k] = wrap_centered(x[k], lp);
                b[k] = wrap_centered(xi[k], fp);
            }
            Ok((a, b))
        })
        .collect()
}

fn preimages(lat: &Lattice, chi: &dyn CanonicalMap) -> Result<Vec<([f64; 2], [f64; 2])>> {
    let d = lat.grid().d();
    let (lp, fp) = lat.periods();
    (0..lat.len())
        .map(|idx| {
            let (m, n) = lat.point(idx);
            let (y, eta) = chi.inverse(&m[..d], &n[..d])?;
            let mut a = [0.0; 2];
            let mut b = [0.0; 2];
            for k in 0..d {
                a[k] = wrap_centered(y[k], lp);
                b[k] = wrap_centered(eta[k], fp);
            }
            Ok((a, b))
        })
        .collect()
}

/// One stored entry with its distance to the graph of χ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRecord {
    pub row: usize,
    pub col: usize,
    /// ⟨χ(m,n) − (m',n')⟩.
    pub r: f64,
    /// ⟨(m,n) − χ⁻¹(m',n')⟩.
    pub r_transposed: f64,
    pub modulus: f64,
}

/// Largest modulus in a logarithmic bin of r.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileBin {
    pub r_lo: f64,
    pub r_hi: f64,
    /// r of the entry attaining the maximum.
    pub r_at_max: f64,
    pub max_abs_entry: f64,
    pub count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayConstant {
    pub n: u32,
    /// max |entry| · r^{2N}.
    pub c_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub phase: String,
    pub lattice_size: usize,
    pub stored_entries: usize,
    #[serde(skip)]
    pub records: Vec<DecayRecord>,
    pub profile: Vec<ProfileBin>,
    pub slope: f64,
    pub bins_used: usize,
    pub constants: Vec<DecayConstant>,
    pub transposed_profile: Vec<ProfileBin>,
    pub transposed_slope: f64,
    pub transposed_constants: Vec<DecayConstant>,
    pub schur: SchurReport,
}

pub const PROFILE_BINS: usize = 24;

/// Binned maxima of |entry| over logarithmic bins of r ∈ [1, r_max].
pub fn binned_profile(points: &[(f64, f64)], bins: usize) -> Vec<ProfileBin> {
    let rmax = points.iter().map(|p| p.0).fold(1.0, f64::max) * (1.0 + 1e-12);
    let lmax = rmax.ln().max(1e-12);
    let mut out: Vec<ProfileBin> = (0..bins)
        .map(|b| ProfileBin {
            r_lo: (lmax * b as f64 / bins as f64).exp(),
            r_hi: (lmax * (b + 1) as f64 / bins as f64).exp(),
            r_at_max: f64::NAN,
            max_abs_entry: 0.0,
            count: 0,
        })
        .collect();
    for &(r, v) in points {
        let b = (((r.ln() / lmax) * bins as f64) as usize).min(bins - 1);
        let bin = &mut out[b];
        bin.count += 1;
        if v > bin.max_abs_entry {
            bin.max_abs_entry = v;
            bin.r_at_max = r;
        }
    }
    out
}

/// Least-squares slope of log(max) against log(r) over non-empty bins.
pub fn profile_slope(profile: &[ProfileBin]) -> (f64, usize) {
    let pts: Vec<(f64, f64)> = profile
        .iter()
        .filter(|b| b.count > 0 && b.max_abs_entry > 0.0)
        .map(|b| (b.r_at_max.ln(), b.max_abs_entry.ln()))
        .collect();
    (fit_line(&pts).0, pts.len())
}

/// Least-squares (slope, intercept).
pub fn fit_line(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn constants(points: &[(f64, f64)], n_list: &[u32]) -> Vec<DecayConstant> {
    n_list
        .iter()
        .map(|&n| DecayConstant {
            n,
            c_hat: points.iter().map(|&(r, v)| v * r.powi(2 * n as i32)).fold(0.0, f64::max),
        })
        .collect()
}

/// Decay of the Gabor matrix away from the graph of χ.
pub fn decay_report(m: &GaborMatrix, chi: &dyn CanonicalMap, n_list: &[u32]) -> Result<DecayReport> {
    let lat = *m.lattice();
    let fwd = images(&lat, chi)?;
    let back = preimages(&lat, chi)?;
    let records: Vec<DecayRecord> = m
        .entries()
        .map(|(row, col, v)| {
            let (mp, np) = lat.point(row);
            let (mm, nn) = lat.point(col);
            let (x, xi) = fwd[col];
            let (y, eta) = back[row];
            DecayRecord {
                row,
                col,
                r: bracket(torus_dist2(&lat, &x, &xi, &mp, &np)),
                r_transposed: bracket(torus_dist2(&lat, &y, &eta, &mm, &nn)),
                modulus: v.norm(),
            }
        })
        .collect();
    let direct: Vec<(f64, f64)> = records.iter().map(|r| (r.r, r.modulus)).collect();
    let transposed: Vec<(f64, f64)> = records.iter().map(|r| (r.r_transposed, r.modulus)).collect();
    let profile = binned_profile(&direct, PROFILE_BINS);
    let (slope, bins_used) = profile_slope(&profile);
    let transposed_profile = binned_profile(&transposed, PROFILE_BINS);
    let (transposed_slope, _) = profile_slope(&transposed_profile);
    Ok(DecayReport {
        phase: m.phase_name().to_string(),
        lattice_size: lat.len(),
        stored_entries: m.nnz(),
        constants: constants(&direct, n_list),
        transposed_constants: constants(&transposed, n_list),
        records,
        profile,
        slope,
        bins_used,
        transposed_profile,
        transposed_slope,
        schur: schur_sums_with(m, 0.0, &fwd)?,
    })
}

/// Ĉ_N for the raw distance ⟨∇_zΦ(m',n) − (n',m)⟩.
pub fn raw_decay_constants(m: &GaborMatrix, phase: &dyn Phase, n_list: &[u32]) -> Vec<DecayConstant> {
    let lat = *m.lattice();
    let d = lat.grid().d();
    let (lp, fp) = lat.periods();
    let tc = lat.time_count();
    let fc = lat.freq_count();
    // gradients at (m', n) for every time index of m' and frequency index of n
    let mut grads = Vec::with_capacity(tc * fc);
    for t in 0..tc {
        let mp = lat.time_coord(t);
        for f in 0..fc {
            let n = lat.freq_coord(f);
            grads.push((phase.grad_x(&mp[..d], &n[..d]), phase.grad_eta(&mp[..d], &n[..d])));
        }
    }
    let points: Vec<(f64, f64)> = m
        .entries()
        .map(|(row, col, v)| {
            let (tp, fp2) = lat.split(row);
            let (tm, fq) = lat.split(col);
            let (gx, ge) = &grads[tp * fc + fq];
            let np = lat.freq_coord(fp2);
            let mm = lat.time_coord(tm);
            let d2: f64 = (0..d)
                .map(|a| wrap_centered(gx[a] - np[a], fp).powi(2) + wrap_centered(ge[a] - mm[a], lp).powi(2))
                .sum();
            (bracket(d2), v.norm())
        })
        .collect();
    constants(&points, n_list)
}

/// Schur-test sums of a Gabor matrix K with entries indexed by rows (m',n')
/// and columns (m,n).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchurReport {
    pub s: f64,
    /// sup_{(m,n)} Σ_{(m',n')} |K|.
    pub sup_column: f64,
    /// sup_{(m',n')} Σ_{(m,n)} |K|.
    pub sup_row: f64,
    /// Column sums with K weighted by v_s(m',n') / v_s(χ(m,n)).
    pub weighted_sup_column: f64,
    pub weighted_sup_row: f64,
    /// sup_n Σ_{n'} sup_{m'} Σ_m |K|.
    pub nested_uno: f64,
    /// sup_{n'} Σ_n sup_m Σ_{m'} |K|.
    pub nested_due: f64,
}

pub fn schur_sums(m: &GaborMatrix, s: f64, chi: &dyn CanonicalMap) -> Result<SchurReport> {
    let fwd = images(m.lattice(), chi)?;
    schur_sums_with(m, s, &fwd)
}

fn schur_sums_with(m: &GaborMatrix, s: f64, fwd: &[([f64; 2], [f64; 2])]) -> Result<SchurReport> {
    let lat = *m.lattice();
    let d = lat.grid().d();
    let len = lat.len();
    let tc = lat.time_count();
    let fc = lat.freq_count();
    let vs = |x: &[f64; 2], e: &[f64; 2]| weight((0..d).map(|a| x[a] * x[a] + e[a] * e[a]).sum(), s);
    let mut col = vec![0.0; len];
    let mut row = vec![0.0; len];
    let mut wcol = vec![0.0; len];
    let mut wrow = vec![0.0; len];
    // uno[n][n'][m'] = Σ_m |K|,  due[n'][n][m] = Σ_{m'} |K|
    let mut uno = vec![0.0; fc * fc * tc];
    let mut due = vec![0.0; fc * fc * tc];
    for (r, c, v) in m.entries() {
        let a = v.norm();
        let (mp, np) = lat.point(r);
        let (x, xi) = fwd[c];
        let w = a * vs(&mp, &np) / vs(&x, &xi);
        col[c] += a;
        row[r] += a;
        wcol[c] += w;
        wrow[r] += w;
        let (tp, fp) = lat.split(r);
        let (tm, fq) = lat.split(c);
        uno[(fq * fc + fp) * tc + tp] += a;
        due[(fp * fc + fq) * tc + tm] += a;
    }
    let sup = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let nested = |arr: &[f64]| -> f64 {
        (0..fc)
            .map(|outer| {
                (0..fc)
                    .map(|inner| sup(&arr[(outer * fc + inner) * tc..(outer * fc + inner + 1) * tc]))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    };
    Ok(SchurReport {
        s,
        sup_column: sup(&col),
        sup_row: sup(&row),
        weighted_sup_column: sup(&wcol),
        weighted_sup_row: sup(&wrow),
        nested_uno: nested(&uno),
        nested_due: nested(&due),
    })
}

/// Largest v_s(m',n') / (⟨χ(m,n) − (m',n')⟩^s v_s(χ(m,n))) over stored entries.
pub fn weighted_kernel_quotient(m: &GaborMatrix, chi: &dyn CanonicalMap, s: f64) -> Result<f64> {
    let lat = *m.lattice();
    let d = lat.grid().d();
    let fwd = images(&lat, chi)?;
    let norm2 = |x: &[f64; 2], e: &[f64; 2]| (0..d).map(|a| x[a] * x[a] + e[a] * e[a]).sum::<f64>();
    Ok(m.entries()
        .map(|(r, c, _)| {
            let (mp, np) = lat.point(r);
            let (x, xi) = fwd[c];
            let dist = torus_dist2(&lat, &x, &xi, &mp, &np);
            weight(norm2(&mp, &np), s) / (weight(dist, s) * weight(norm2(&x, &xi), s))
        })
        .fold(0.0, f64::max))
}

/// Range of |χ(m,n) − (m',n')| / |(m,n) − χ⁻¹(m',n')| over stored entries
/// away from the graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceEquivalence {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub pairs: usize,
}

pub fn distance_equivalence(m: &GaborMatrix, chi: &dyn CanonicalMap) -> Result<DistanceEquivalence> {
    let lat = *m.lattice();
    let fwd = images(&lat, chi)?;
    let back = preimages(&lat, chi)?;
    let mut out = DistanceEquivalence { min_ratio: f64::INFINITY, max_ratio: 0.0, pairs: 0 };
    for (r, c, _) in m.entries() {
        let (mp, np) = lat.point(r);
        let (mm, nn) = lat.point(c);
        let a = torus_dist2(&lat, &fwd[c].0, &fwd[c].1, &mp, &np).sqrt();
        let b = torus_dist2(&lat, &back[r].0, &back[r].1, &mm, &nn).sqrt();
        if a > 1e-9 && b > 1e-9 {
            out.min_ratio = out.min_ratio.min(a / b);
            out.max_ratio = out.max_ratio.max(a / b);
            out.pairs += 1;
        }
    }
    Ok(out)
}

/// Fitted constants of the two lattice inequalities
/// |∇_ηΦ(m',n) − m| ≥ c|x(m,n) − m'| and
/// |∇ₓΦ(m',n) − n'| ≥ |ξ(m,n) − n'| − C|∇_ηΦ(m',n) − m|,
/// evaluated on real-line tuples (no wrapping).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaConstants {
    pub c: f64,
    pub big_c: f64,
    pub tuples: usize,
}

pub fn lemma_constants(phase: Arc<dyn Phase>, points: &[f64]) -> Result<LemmaConstants> {
    if phase.dim() != 1 {
        return Err(FioError::InvalidGrid("lattice inequalities are sampled in d = 1".into()));
    }
    let map = NewtonMap::new(phase.clone());
    let mut c = f64::INFINITY;
    let mut big_c: f64 = 0.0;
    let mut tuples = 0;
    for &m in points {
        for &n in points {
            let (x, xi) = map.forward(&[m], &[n])?;
            for &mp in points {
                let ge = phase.grad_eta(&[mp], &[n])[0];
                let gx = phase.grad_x(&[mp], &[n])[0];
                let a = (ge - m).abs();
                let b = (x[0] - mp).abs();
                if b > 1e-12 {
                    c = c.min(a / b);
                }
                for &np in points {
                    tuples += 1;
                    let deficit = (xi[0] - np).abs() - (gx - np).abs();
                    if a > 1e-12 {
                        big_c = big_c.max(deficit / a);
                    } else if deficit > 1e-9 {
                        big_c = f64::INFINITY;
                    }
                }
            }
        }
    }
    Ok(LemmaConstants { c, big_c, tuples })
}

/// min over samples of (1 + |∇ₓΦ(m',n) − n'|) / (1 + |n − ψ(n')|), with ψ the
/// inverse of η ↦ ∇ₓΦ(0, η). Bounded away from zero when the x-gradient
/// diameter is finite.
pub fn nuo_constant(phase: Arc<dyn Phase>, points: &[f64]) -> Result<f64> {
    if phase.dim() != 1 {
        return Err(FioError::InvalidGrid("this check is sampled in d = 1".into()));
    }
    let map = NewtonMap::new(phase.clone());
    let mut c = f64::INFINITY;
    for &np in points {
        let psi = map.solve_eta(&[0.0], &[np])?[0];
        for &mp in points {
            for &n in points {
                let lhs = 1.0 + (phase.grad_x(&[mp], &[n])[0] - np).abs();
                let rhs = 1.0 + (n - psi).abs();
                c = c.min(lhs / rhs);
            }
        }
    }
    Ok(c)
}

/// Dilated Gaussians e^{−πλ|x|²} on a grid, with the STFT sampling used for their norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianFamily {
    pub grid: Grid,
    pub lambdas: Vec<f64>,
    pub sampling: StftSampling,
}

impl GaussianFamily {
    /// `count` logarithmically spaced λ in [lo, hi].
    pub fn log_spaced(grid: Grid, lo: f64, hi: f64, count: usize, sampling: StftSampling) -> Self {
        let lambdas = (0..count)
            .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (count - 1) as f64).exp())
            .collect();
        GaussianFamily { grid, lambdas, sampling }
    }

    /// Default family: L = 128, n = 16384, λ ∈ [1e−3, 1e−1] at 9 points,
    /// phase-space steps of 1/8 in x and η.
    pub fn standard() -> Self {
        let grid = Grid::new(1, 128.0, 16384).expect("valid grid");
        Self::log_spaced(grid, 1e-3, 1e-1, 9, StftSampling { time_stride: 16, freq_stride: 16 })
    }

    /// e^{−πλ|x|²}, unit height at the origin.
    pub fn member(&self, lambda: f64) -> Result<SampledFunction> {
        let d = self.grid.d();
        let normalized = gaussian(self.grid, &vec![0.0; d], lambda.powf(-0.5))?.function;
        Ok(normalized.scale(C64::new((2.0 * lambda).powf(-(d as f64) / 4.0), 0.0)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRatioReport {
    pub phase: String,
    pub spec: MixedNormSpec,
    pub lambdas: Vec<f64>,
    pub norm_f: Vec<f64>,
    pub norm_tf: Vec<f64>,
    pub ratio: Vec<f64>,
    /// Slope of log ratio against log λ.
    pub slope: f64,
    pub intercept: f64,
    pub route: String,
}

/// Ratios ‖Tf_λ‖_{M^{p,q}} / ‖f_λ‖_{M^{p,q}} over a Gaussian family. Quadratic
/// phases with σ ≡ 1 are applied through their factorization; other
/// operators by quadrature.
pub fn operator_norm_experiment(
    phase: &dyn Phase,
    symbol: &Symbol,
    spec: &MixedNormSpec,
    family: &GaussianFamily,
) -> Result<NormRatioReport> {
    let factors = match (phase.as_quadratic(), symbol) {
        (Some(q), Symbol::One) => Some(factorize(q)?),
        _ => None,
    };
    let window = standard_gaussian(family.grid);
    let mut norm_f = Vec::new();
    let mut norm_tf = Vec::new();
    for &lam in &family.lambdas {
        let f = family.member(lam)?;
        let tf = match &factors {
            Some(fs) => apply_factors(fs, &f)?,
            None => apply_fio(phase, symbol, &f)?,
        };
        let a = mod_norm(&f, spec, &window, family.sampling)?;
        let b = mod_norm(&tf, spec, &window, family.sampling)?;
        if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
            return Err(FioError::NonFinite(format!("norm at λ = {lam}")));
        }
        norm_f.push(a);
        norm_tf.push(b);
    }
    let ratio: Vec<f64> = norm_tf.iter().zip(&norm_f).map(|(b, a)| b / a).collect();
    let pts: Vec<(f64, f64)> = family.lambdas.iter().zip(&ratio).map(|(l, r)| (l.ln(), r.ln())).collect();
    let (slope, intercept) = fit_line(&pts);
    Ok(NormRatioReport {
        phase: phase.name(),
        spec: *spec,
        lambdas: family.lambdas.clone(),
        norm_f,
        norm_tf,
        ratio,
        slope,
        intercept,
        route: if factors.is_some() { "factorization" } else { "quadrature" }.into(),
    })
}

/// Discrete ‖σ‖_{M^{∞,1}} ≈ Σ_ζ sup_z |V_{Ψ₀}σ(z, ζ)| with Ψ₀ the
/// L²-normalized Gaussian on ℝ^{2d}. Shifts z run over every `stride`-th
/// sample of each phase-space axis.
pub fn m_infty_1_norm_estimate(sigma: &GridSymbol, stride: usize) -> Result<f64> {
    let grid = *sigma.grid();
    let n = grid.n();
    let d = grid.d();
    if stride == 0 || !n.is_multiple_of(stride) {
        return Err(FioError::InvalidLattice(format!("stride {stride} must divide n = {n}")));
    }
    let rank = 2 * d;
    let shape = vec![n; rank];
    let total = grid.len() * grid.len();
    // Natural-order coordinates on each axis: time axes, then frequency axes.
    let axis_coord = |axis: usize, i: usize| -> f64 {
        if axis < d {
            grid.time_axis(i)
        } else {
            grid.time_axis(i) / grid.dx() * grid.deta()
        }
    };
    let unravel = |mut flat: usize| -> Vec<usize> {
        let mut ix = vec![0; rank];
        for a in (0..rank).rev() {
            ix[a] = flat % n;
            flat /= n;
        }
        ix
    };
    // σ in natural order on the frequency axes
    let half = n / 2;
    let mut sig = vec![C64::new(0.0, 0.0); total];
    for (flat, slot) in sig.iter_mut().enumerate() {
        let ix = unravel(flat);
        let t = grid.ravel(&ix[..d]);
        let f: Vec<usize> = ix[d..].iter().map(|i| (i + half) % n).collect();
        *slot = sigma.at(t, grid.ravel(&f));
    }
    let amp = 2f64.powf(rank as f64 / 4.0);
    let psi: Vec<f64> = (0..total)
        .map(|flat| {
            let ix = unravel(flat);
            let r2: f64 = (0..rank).map(|a| axis_coord(a, ix[a]).powi(2)).sum();
            amp * (-std::f64::consts::PI * r2).exp()
        })
        .collect();
    let cell = grid.cell_time() * grid.cell_freq();
    let shifts = n / stride;
    let mut best = vec![0.0f64; total];
    let mut buf = vec![C64::new(0.0, 0.0); total];
    for sflat in 0..shifts.pow(rank as u32) {
        let mut s = vec![0usize; rank];
        let mut rem = sflat;
        for a in (0..rank).rev() {
            s[a] = (rem % shifts) * stride;
            rem /= shifts;
        }
        for (flat, slot) in buf.iter_mut().enumerate() {
            let ix = unravel(flat);
            let mut w = 0usize;
            for a in 0..rank {
                w = w * n + (ix[a] + n - s[a]) % n;
            }
            *slot = sig[flat] * psi[w];
        }
        fft_nd(&mut buf, &shape, false);
        for (b, v) in best.iter_mut().zip(&buf) {
            *b = b.max(v.norm() * cell);
        }
    }
    Ok(best.iter().sum::<f64>() * cell)
}

/// Seeded sums of 1 to 4 Gaussian packets with centers |x| ≤ L/8 and
/// modulations |η| ≤ F/8 on the frequency grid, each of unit width and random complex amplitude.
/// Their spectra vanish to machine precision at the band edge.
pub fn random_packets(grid: Grid, count: usize, seed: u64) -> Result<Vec<SampledFunction>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = grid.d();
    let xr = grid.l() / 8.0;
    let er = grid.freq_period() / 8.0;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut acc = SampledFunction::zeros(grid, crate::grid::Side::Time);
        for _ in 0..rng.gen_range(1..=4) {
            let c: Vec<f64> = (0..d).map(|_| rng.gen_range(-xr..=xr)).collect();
            let e: Vec<f64> = (0..d).map(|_| (rng.gen_range(-er..=er) / grid.deta()).round() * grid.deta()).collect();
            let amp = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let packet = gaussian(grid, &c, 1.0)?.function.modulate(&e)?;
            for (a, p) in acc.values_mut().iter_mut().zip(packet.values()) {
                *a += amp * p;
            }
        }
        out.push(acc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fio::{gabor_matrix_direct, Route, SymbolSpec};
    use crate::gabor::{GaborSystem, WindowKind};
    use crate::phase::{canonical_map_quadratic, PhaseSpec};

    #[test]
    fn standard_gaussian_norms() {
        let g = Grid::new(1, 16.0, 256).unwrap();
        let phi = standard_gaussian(g);
        let two = MixedNormSpec::new(2.0, 2.0, 0.0).unwrap();
        assert!((mod_norm_default(&phi, &two).unwrap() - 1.0).abs() < 1e-6);
        let one = MixedNormSpec::new(1.0, 1.0, 0.0).unwrap();
        assert!((mod_norm_default(&phi, &one).unwrap() - 2.0).abs() < 1e-4);
    }

    #[test]
    fn family_members_have_unit_height() {
        let fam = GaussianFamily::log_spaced(Grid::new(1, 32.0, 512).unwrap(), 0.1, 1.0, 3, StftSampling::full());
        for &lam in &fam.lambdas {
            let f = fam.member(lam).unwrap();
            assert!((f.values()[0].re - 1.0).abs() < 1e-12);
            assert!((f.norm_l2() - (2.0 * lam).powf(-0.25)).abs() < 1e-9);
        }
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = (1..100).map(|i| (1.0 + i as f64 * 0.1, (1.0 + i as f64 * 0.1).powi(-3))).collect();
        let (s, used) = profile_slope(&binned_profile(&pts, 16));
        assert!((s + 3.0).abs() < 1e-9 && used >= 8);
    }

    #[test]
    fn sigma_one_and_modulated() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let one = Symbol::One.sample(&g).unwrap();
        let a = m_infty_1_norm_estimate(&one, 8).unwrap();
        assert!((a - 2f64.sqrt()).abs() < 1e-6, "{a}");
        let m = SymbolSpec::Modulated { a: 0.5, b: 1.0 }.build().sample(&g).unwrap();
        assert!((m_infty_1_norm_estimate(&m, 8).unwrap() - a).abs() < 1e-6);
    }

    #[test]
    fn identity_decay_and_schur() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let lat = Lattice::new(g, 0.5, 0.5).unwrap();
        let sys = GaborSystem::new(standard_gaussian(g), lat).unwrap();
        let qp = PhaseSpec::Identity.quadratic(1).unwrap();
        let m = gabor_matrix_direct(&qp, &Symbol::One, &sys, WindowKind::Tight, 1e-8).unwrap();
        let chi = canonical_map_quadratic(&qp).unwrap();
        let rep = decay_report(&m, &chi, &[1, 2, 3]).unwrap();
        assert!(rep.slope < -6.0 && rep.bins_used >= 8);
        assert!(rep.records.iter().all(|r| r.r >= 1.0));
        assert!(rep.constants.iter().all(|c| c.c_hat.is_finite()));
        let q = weighted_kernel_quotient(&m, &chi, 2.0).unwrap();
        assert!(q <= 2.0 + 1e-12);
        assert_eq!(m.route(), Route::Direct);
    }
}
