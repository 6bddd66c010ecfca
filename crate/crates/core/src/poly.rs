//! Real polynomials in ascending-degree storage and their roots.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Evaluates `c[0] + c[1] s + ... ` at a complex point (Horner).
pub fn eval(coeffs: &[f64], s: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

/// Evaluates a real polynomial at a real point.
pub fn eval_real(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Degree after dropping exactly-zero leading coefficients.
pub fn degree(coeffs: &[f64]) -> Option<usize> {
    coeffs.iter().rposition(|&c| c != 0.0)
}

/// Product of two polynomials.
pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Sum of two polynomials.
pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) + b.get(i).copied().unwrap_or(0.0))
        .collect()
}

/// Scales every coefficient.
pub fn scale(a: &[f64], k: f64) -> Vec<f64> {
    a.iter().map(|c| c * k).collect()
}

/// Roots via eigenvalues of the companion matrix of the monic polynomial,
/// returned in canonical order (see [`sort_roots`]).
pub fn roots(coeffs: &[f64]) -> Vec<Complex64> {
    let deg = match degree(coeffs) {
        Some(d) if d > 0 => d,
        _ => return Vec::new(),
    };
    let lead = coeffs[deg];
    let mut out = if deg == 1 {
        vec![Complex64::new(-coeffs[0] / lead, 0.0)]
    } else {
        let mut comp = DMatrix::<f64>::zeros(deg, deg);
        for i in 1..deg {
            comp[(i, i - 1)] = 1.0;
        }
        for i in 0..deg {
            comp[(i, deg - 1)] = -coeffs[i] / lead;
        }
        comp.complex_eigenvalues()
            .iter()
            .map(|c| Complex64::new(c.re, c.im))
            .collect()
    };
    sort_roots(&mut out);
    out
}

/// Canonical root ordering: by real part, then imaginary part.
pub fn sort_roots(r: &mut [Complex64]) {
    r.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Monic polynomial with the given roots (conjugate pairs give real
/// coefficients; the imaginary residue is dropped).
pub fn from_roots(r: &[Complex64]) -> Vec<f64> {
    let mut p = vec![Complex64::new(1.0, 0.0)];
    for &z in r {
        let mut next = vec![Complex64::new(0.0, 0.0); p.len() + 1];
        for (i, &c) in p.iter().enumerate() {
            next[i] -= c * z;
            next[i + 1] += c;
        }
        p = next;
    }
    p.into_iter().map(|c| c.re).collect()
}
