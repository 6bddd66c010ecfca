//! Polynomial static nonlinearities and their Gaussian (Bussgang) gains.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly;

/// Largest supported polynomial degree.
pub const MAX_DEGREE: usize = 9;

/// `q = c0 + c1 p + ... + cd p^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNl", into = "RawNl")]
pub struct StaticNl {
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawNl {
    poly: Vec<f64>,
}

impl TryFrom<RawNl> for StaticNl {
    type Error = Error;

    fn try_from(r: RawNl) -> Result<Self> {
        StaticNl::new(r.poly)
    }
}

impl From<StaticNl> for RawNl {
    fn from(s: StaticNl) -> Self {
        RawNl { poly: s.coeffs }
    }
}

impl StaticNl {
    pub fn new(mut coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("nonlinearity coefficients must be finite"));
        }
        match poly::degree(&coeffs) {
            Some(d) if d > MAX_DEGREE => {
                return Err(Error::invalid(format!(
                    "polynomial degree {d} exceeds the supported maximum {MAX_DEGREE}"
                )))
            }
            Some(d) => coeffs.truncate(d + 1),
            None => coeffs = vec![0.0],
        }
        Ok(StaticNl { coeffs })
    }

    pub fn identity() -> Self {
        StaticNl { coeffs: vec![0.0, 1.0] }
    }

    /// `q = c p^3`.
    pub fn cubic(c: f64) -> Self {
        StaticNl { coeffs: vec![0.0, 0.0, 0.0, c] }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_identity(&self) -> bool {
        self.coeffs == [0.0, 1.0]
    }

    #[inline]
    pub fn eval(&self, p: f64) -> f64 {
        poly::eval_real(&self.coeffs, p)
    }

    #[inline]
    pub fn derivative(&self, p: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, &c)| acc * p + i as f64 * c)
    }

    /// Apply pointwise.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&p| self.eval(p)).collect()
    }

    /// Gain of the best linear approximation for a Gaussian input with the
    /// given mean and standard deviation: `R_pq / R_pp = E{f'(p)}`.
    pub fn bussgang_gain(&self, mean: f64, std: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &c)| i as f64 * c * gaussian_moment(mean, std, i - 1))
            .sum()
    }
}

/// `E{p^j}` for `p ~ N(mean, std^2)`.
pub fn gaussian_moment(mean: f64, std: f64, j: usize) -> f64 {
    // E{(mu + s z)^j} = sum_i C(j,i) mu^(j-i) s^i E{z^i}; odd central moments vanish.
    let mut total = 0.0;
    let mut binom = 1.0;
    for i in 0..=j {
        if i > 0 {
            binom = binom * (j - i + 1) as f64 / i as f64;
        }
        if i % 2 == 0 {
            let dfact: f64 = (1..i).step_by(2).map(|v| v as f64).product();
            total += binom * mean.powi((j - i) as i32) * std.powi(i as i32) * dfact;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_gain_matches_closed_form() {
        let f = StaticNl::cubic(1.0);
        for (mu, s) in [(0.0, 0.1), (0.5, 0.1), (0.5, 0.3), (-1.2, 0.7)] {
            let k = f.bussgang_gain(mu, s);
            assert!((k - 3.0 * (mu * mu + s * s)).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_moments() {
        assert!((gaussian_moment(0.0, 2.0, 4) - 3.0 * 16.0).abs() < 1e-12);
        assert!((gaussian_moment(1.0, 1.0, 2) - 2.0).abs() < 1e-12);
        assert!((gaussian_moment(1.0, 1.0, 3) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn degree_limit() {
        assert!(StaticNl::new(vec![0.0; 10].into_iter().chain([1.0]).collect()).is_err());
        assert!(StaticNl::new(vec![1.0; 10]).is_ok());
        assert!(StaticNl::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn derivative_of_polynomial() {
        let f = StaticNl::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        // f' = 2 + 6p + 12p^2
        assert!((f.derivative(0.5) - (2.0 + 3.0 + 3.0)).abs() < 1e-14);
    }
}
