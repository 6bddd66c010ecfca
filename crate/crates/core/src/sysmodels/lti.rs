//! Continuous-time rational transfer functions and exact periodic filtering.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::poly;
use crate::signal::SignalRealization;

/// `G(s) = N(s) / D(s)` with coefficients in ascending powers of `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLti", into = "RawLti")]
pub struct LtiSystem {
    num: Vec<f64>,
    den: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawLti {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl TryFrom<RawLti> for LtiSystem {
    type Error = Error;

    fn try_from(r: RawLti) -> Result<Self> {
        LtiSystem::new(r.num, r.den)
    }
}

impl From<LtiSystem> for RawLti {
    fn from(s: LtiSystem) -> Self {
        RawLti { num: s.num, den: s.den }
    }
}

impl LtiSystem {
    /// Builds a proper transfer function. Trailing (highest-degree) zero
    /// coefficients are trimmed.
    pub fn new(mut num: Vec<f64>, mut den: Vec<f64>) -> Result<Self> {
        if num.iter().chain(&den).any(|c| !c.is_finite()) {
            return Err(Error::invalid("transfer function coefficients must be finite"));
        }
        let dd = poly::degree(&den)
            .ok_or_else(|| Error::invalid("denominator must have a nonzero coefficient"))?;
        den.truncate(dd + 1);
        match poly::degree(&num) {
            Some(nd) => num.truncate(nd + 1),
            None => num = vec![0.0],
        }
        if num.len() > den.len() {
            return Err(Error::invalid("numerator degree exceeds denominator degree"));
        }
        Ok(LtiSystem { num, den })
    }

    pub fn unity() -> Self {
        LtiSystem { num: vec![1.0], den: vec![1.0] }
    }

    pub fn gain(k: f64) -> Self {
        LtiSystem { num: vec![k], den: vec![1.0] }
    }

    /// `wc / (s + wc)`, unit DC gain.
    pub fn first_order_lowpass(wc: f64) -> Self {
        LtiSystem { num: vec![wc], den: vec![wc, 1.0] }
    }

    /// `k wn^2 / (s^2 + 2 zeta wn s + wn^2)`.
    pub fn second_order_lowpass(wn: f64, zeta: f64, k: f64) -> Self {
        LtiSystem { num: vec![k * wn * wn], den: vec![wn * wn, 2.0 * zeta * wn, 1.0] }
    }

    /// `k 2 zeta wn s / (s^2 + 2 zeta wn s + wn^2)`, unit peak gain for `k = 1`.
    pub fn second_order_bandpass(wn: f64, zeta: f64, k: f64) -> Self {
        LtiSystem {
            num: vec![0.0, k * 2.0 * zeta * wn],
            den: vec![wn * wn, 2.0 * zeta * wn, 1.0],
        }
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn order(&self) -> usize {
        self.den.len() - 1
    }

    pub fn is_identity(&self) -> bool {
        self.num.len() == 1 && self.den.len() == 1 && self.num[0] == self.den[0]
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly::eval(&self.num, s) / poly::eval(&self.den, s)
    }

    /// Frequency response at `f` Hz.
    pub fn response_at_hz(&self, f: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, std::f64::consts::TAU * f))
    }

    /// Cascade `self * other`.
    pub fn series(&self, other: &LtiSystem) -> LtiSystem {
        LtiSystem {
            num: poly::mul(&self.num, &other.num),
            den: poly::mul(&self.den, &other.den),
        }
    }

    pub fn poles(&self) -> Vec<Complex64> {
        poly::roots(&self.den)
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        poly::roots(&self.num)
    }

    /// `true` when `D(j w)` is numerically zero.
    fn singular_at(&self, w: f64) -> bool {
        let s = Complex64::new(0.0, w);
        let d = poly::eval(&self.den, s).norm();
        let scale: f64 = self
            .den
            .iter()
            .enumerate()
            .map(|(i, c)| c.abs() * w.abs().powi(i as i32))
            .sum();
        d <= 1e-12 * scale
    }
}

/// Steady-state response of `sys` to a periodic input: `Y[k] = G(j w_k) U[k]`
/// on every DFT bin.
pub fn lti_response(sys: &LtiSystem, u: &SignalRealization) -> Result<Vec<f64>> {
    filter_periodic(sys, u.samples(), u.period_len(), u.spec().fs)
}

/// Period-by-period frequency-domain filtering of a record whose length is a
/// multiple of `n`.
pub fn filter_periodic(sys: &LtiSystem, x: &[f64], n: usize, fs: f64) -> Result<Vec<f64>> {
    if n == 0 || !x.len().is_multiple_of(n) {
        return Err(Error::Dimension(format!(
            "record length {} is not a multiple of the period {n}",
            x.len()
        )));
    }
    if sys.is_identity() {
        return Ok(x.to_vec());
    }
    let periods = x.len() / n;
    let first = &x[..n];
    if (1..periods).all(|p| &x[p * n..(p + 1) * n] == first) {
        let y = filter_one_period(sys, first, fs)?;
        let mut out = Vec::with_capacity(x.len());
        for _ in 0..periods {
            out.extend_from_slice(&y);
        }
        return Ok(out);
    }
    let mut out = Vec::with_capacity(x.len());
    for p in 0..periods {
        out.extend(filter_one_period(sys, &x[p * n..(p + 1) * n], fs)?);
    }
    Ok(out)
}

fn filter_one_period(sys: &LtiSystem, period: &[f64], fs: f64) -> Result<Vec<f64>> {
    let n = period.len();
    let mut spec = dsp::spectrum(period);
    let peak = spec.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let occupied = |c: Complex64| c.norm() > 1e-13 * peak;
    let df = fs / n as f64;
    for k in 0..=n / 2 {
        let w = std::f64::consts::TAU * k as f64 * df;
        if !occupied(spec[k]) && (k == 0 || !occupied(spec[n - k])) {
            spec[k] = Complex64::new(0.0, 0.0);
            if k != 0 {
                spec[n - k] = Complex64::new(0.0, 0.0);
            }
            continue;
        }
        if sys.singular_at(w) {
            return Err(Error::PoleOnGrid { bin: k });
        }
        let g = sys.eval(Complex64::new(0.0, w));
        if k == 0 {
            spec[0] = Complex64::new((g * spec[0]).re, 0.0);
        } else if 2 * k == n {
            spec[k] = Complex64::new((g * spec[k]).re, 0.0);
        } else {
            spec[k] *= g;
            spec[n - k] = spec[k].conj();
        }
    }
    Ok(dsp::synthesize(&spec))
}
