//! Multi-dimensional FFT helpers on row-major arrays.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Unnormalized DFT over every axis of a row-major array.
/// Forward uses e^{-2πi jk/n}; inverse uses e^{+2πi jk/n}.
pub(crate) fn fft_nd(data: &mut [C64], shape: &[usize], inverse: bool) {
    debug_assert_eq!(data.len(), shape.iter().product::<usize>());
    let rank = shape.len();
    let mut line = Vec::new();
    for axis in 0..rank {
        let len = shape[axis];
        if len == 1 {
            continue;
        }
        let fft = plan(len, inverse);
        let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let stride: usize = shape[axis + 1..].iter().product();
        if stride == 1 {
            fft.process_with_scratch(data, &mut scratch);
            continue;
        }
        let block = stride * len;
        line.resize(len, C64::new(0.0, 0.0));
        for outer in 0..data.len() / block {
            let base = outer * block;
            for inner in 0..stride {
                for (t, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + inner + t * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (t, v) in line.iter().enumerate() {
                    data[base + inner + t * stride] = *v;
                }
            }
        }
    }
}

/// Swaps the two halves of every axis (natural <-> centered order; n even).
pub(crate) fn half_shift(data: &[C64], n: usize, d: usize) -> Vec<C64> {
    let h = n / 2;
    match d {
        1 => (0..n).map(|i| data[(i + h) % n]).collect(),
        _ => {
            let mut out = Vec::with_capacity(n * n);
            for r in 0..n {
                let rr = (r + h) % n;
                for c in 0..n {
                    out.push(data[rr * n + (c + h) % n]);
                }
            }
            out
        }
    }
}

/// Folds each axis of a row-major array onto a divisor length by summing
/// aliased entries. A DFT of the folded array samples the full DFT on the
/// subgroup of bins that are multiples of `shape[a] / target[a]`.
pub(crate) fn fold(data: &[C64], shape: &[usize], target: &[usize]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); target.iter().product()];
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    for v in data {
        let mut o = 0;
        for a in 0..rank {
            o = o * target[a] + idx[a] % target[a];
        }
        out[o] += v;
        for a in (0..rank).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[C64]) -> Vec<C64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        v * C64::from_polar(1.0, -2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn fold_samples_subgroup_bins() {
        let x: Vec<C64> = (0..24).map(|j| C64::new((j as f64).sin(), (j as f64 * 0.3).cos())).collect();
        let full = naive_dft(&x);
        let mut folded = fold(&x, &[24], &[6]);
        fft_nd(&mut folded, &[6], false);
        for r in 0..6 {
            assert!((folded[r] - full[4 * r]).norm() < 1e-12);
        }
    }

    #[test]
    fn nd_matches_separable_naive() {
        let shape = [4usize, 6];
        let x: Vec<C64> = (0..24).map(|j| C64::new(j as f64, -(j as f64).sqrt())).collect();
        let mut y = x.clone();
        fft_nd(&mut y, &shape, false);
        for k0 in 0..4 {
            for k1 in 0..6 {
                let mut s = C64::new(0.0, 0.0);
                for j0 in 0..4 {
                    for j1 in 0..6 {
                        let ph = -2.0 * std::f64::consts::PI * ((j0 * k0) as f64 / 4.0 + (j1 * k1) as f64 / 6.0);
                        s += x[j0 * 6 + j1] * C64::from_polar(1.0, ph);
                    }
                }
                assert!((s - y[k0 * 6 + k1]).norm() < 1e-10);
            }
        }
    }
}
