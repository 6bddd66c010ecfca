//! FFT helpers for periodic records.
//!
//! Spectra use the `1/N` convention: a cosine of amplitude `A` at harmonic
//! `k` shows up as `A/2` in bins `k` and `N - k`.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Full forward spectrum of one period, normalized by `1/N`.
pub fn spectrum(period: &[f64]) -> Vec<Complex64> {
    let n = period.len();
    let mut buf: Vec<Complex64> = period.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    if n == 0 {
        return buf;
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n).process(&mut buf));
    let scale = 1.0 / n as f64;
    for x in &mut buf {
        *x *= scale;
    }
    buf
}

/// Spectrum of one period sampled at the given bins only.
pub fn spectrum_at(period: &[f64], bins: &[usize]) -> Vec<Complex64> {
    let full = spectrum(period);
    bins.iter().map(|&k| full[k]).collect()
}

/// Inverse of [`spectrum`]; returns the real part of the synthesized period.
pub fn synthesize(spec: &[Complex64]) -> Vec<f64> {
    let n = spec.len();
    let mut buf = spec.to_vec();
    if n == 0 {
        return Vec::new();
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n).process(&mut buf));
    buf.into_iter().map(|c| c.re).collect()
}

/// Band-limited interpolation of one period onto a grid `factor` times finer.
///
/// The output has `factor * N` samples and sample `factor * n` coincides with
/// input sample `n`. For even `N` the Nyquist bin is split over both halves.
pub fn periodic_upsample(period: &[f64], factor: usize) -> Vec<f64> {
    let n = period.len();
    if factor <= 1 || n == 0 {
        return period.to_vec();
    }
    let x = spectrum(period);
    let big = n * factor;
    let mut y = vec![Complex64::new(0.0, 0.0); big];
    let half = n / 2;
    for k in 0..n {
        if n.is_multiple_of(2) && k == half {
            y[half] += x[k] * 0.5;
            y[big - half] += x[k] * 0.5;
        } else if k <= half {
            y[k] = x[k];
        } else {
            y[big - (n - k)] = x[k];
        }
    }
    synthesize(&y)
}

/// Sample mean and population standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Median of a slice (NaNs sort last). Returns 0 for an empty slice.
pub fn median(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
