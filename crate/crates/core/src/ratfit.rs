//! Continuous-time rational fits `G(s) = N(s)/D(s)` to frequency response
//! data by Sanathanan-Koerner iteration.
//!
//! Frequencies are normalized by the geometric mean of the band before the
//! least-squares problem is assembled. Real and imaginary parts are stacked so
//! the coefficients come out real. The denominator is monic.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bla::BlaEstimate;
use crate::dsp;
use crate::error::{Error, Result};
use crate::poly;

/// Singular values below this fraction of the largest are treated as zero.
const RCOND: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    /// Numerator order `nb`.
    pub num_order: usize,
    /// Denominator order `na`.
    pub den_order: usize,
    /// Per-bin weights; `None` means uniform.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

fn default_max_iters() -> usize {
    50
}

fn default_rel_tol() -> f64 {
    1e-12
}

impl FitSpec {
    pub fn new(num_order: usize, den_order: usize) -> Self {
        FitSpec {
            num_order,
            den_order,
            weights: None,
            max_iters: default_max_iters(),
            rel_tol: default_rel_tol(),
        }
    }

    pub fn with_weights(mut self, w: Vec<f64>) -> Self {
        self.weights = Some(w);
        self
    }
}

/// Fitted model. Coefficients are in ascending powers of `s`, `den` monic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalModel {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    pub poles: Vec<Complex64>,
    pub zeros: Vec<Complex64>,
    pub weighted_rms_residual: f64,
    /// `G_k - model(j w_k)` per bin.
    pub residuals: Vec<Complex64>,
    pub converged: bool,
    pub iterations: usize,
    /// The last least-squares step had a numerically rank-deficient system
    /// (over-specified orders); the minimum-norm solution was used.
    pub rank_deficient: bool,
    /// Some pole lies in the closed right half-plane.
    pub unstable: bool,
}

impl RationalModel {
    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly::eval(&self.num, s) / poly::eval(&self.den, s)
    }

    pub fn response_at_hz(&self, f: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, std::f64::consts::TAU * f))
    }
}

#[derive(Clone)]
struct Iterate {
    b: Vec<f64>,
    a: Vec<f64>,
    rank_deficient: bool,
}

/// Fits `nb/na` orders to `g` sampled at `freqs` (Hz).
pub fn fit_rational(freqs: &[f64], g: &[Complex64], spec: &FitSpec) -> Result<RationalModel> {
    let (nb, na) = (spec.num_order, spec.den_order);
    let k = freqs.len();
    if g.len() != k {
        return Err(Error::Dimension(format!("{k} frequencies but {} FRF values", g.len())));
    }
    if nb > na {
        return Err(Error::invalid(format!("numerator order {nb} exceeds denominator order {na}")));
    }
    if k < na + nb + 2 {
        return Err(Error::Dimension(format!(
            "{k} bins cannot support orders nb = {nb}, na = {na} (need {})",
            na + nb + 2
        )));
    }
    if freqs.iter().any(|f| !(f.is_finite() && *f > 0.0))
        || freqs.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::invalid("frequencies must be positive and strictly increasing"));
    }
    if g.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
        return Err(Error::invalid("FRF values must be finite"));
    }
    let w: Vec<f64> = match &spec.weights {
        Some(w) if w.len() != k => {
            return Err(Error::Dimension(format!("{} weights for {k} bins", w.len())))
        }
        Some(w) if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) => {
            return Err(Error::invalid("weights must be finite and nonnegative"))
        }
        Some(w) => w.clone(),
        None => vec![1.0; k],
    };
    let active = w.iter().filter(|&&v| v > 0.0).count();
    if active < na + nb + 2 {
        return Err(Error::UnidentifiableOrders(format!(
            "only {active} bins carry weight, need {}",
            na + nb + 2
        )));
    }
    if na > 0 && g.iter().zip(&w).all(|(c, &v)| v == 0.0 || c.norm() == 0.0) {
        return Err(Error::UnidentifiableOrders(
            "all-zero response leaves the denominator undetermined".into(),
        ));
    }

    let omega: Vec<f64> = freqs.iter().map(|f| std::f64::consts::TAU * f).collect();
    let w0 = (omega.iter().map(|v| v.ln()).sum::<f64>() / k as f64).exp();
    let sn: Vec<Complex64> = omega.iter().map(|v| Complex64::new(0.0, v / w0)).collect();

    let mut den_prev = vec![Complex64::new(1.0, 0.0); k];
    let mut prev: Option<Vec<f64>> = None;
    let mut best: Option<(f64, Iterate, usize)> = None;
    let mut converged = false;
    let mut last: Option<(Iterate, usize)> = None;
    for it in 1..=spec.max_iters.max(1) {
        let step = sk_step(&sn, g, &w, &den_prev, nb, na)?;
        let theta: Vec<f64> = step.b.iter().chain(&step.a).copied().collect();
        let err = output_error(&sn, g, &w, &step.b, &step.a);
        let change = prev.as_ref().map(|p| {
            let num: f64 = theta.iter().zip(p).map(|(x, y)| (x - y).powi(2)).sum();
            let den: f64 = theta.iter().map(|x| x * x).sum();
            (num / den.max(f64::MIN_POSITIVE)).sqrt()
        });
        for (d, s) in den_prev.iter_mut().zip(&sn) {
            *d = poly::eval(&step.a, *s);
        }
        if best.as_ref().is_none_or(|(e, _, _)| err < *e) {
            best = Some((err, step.clone(), it));
        }
        prev = Some(theta);
        let done = change.is_some_and(|c| c < spec.rel_tol) || err == 0.0;
        last = Some((step, it));
        if done {
            converged = true;
            break;
        }
    }
    let (chosen, iterations) = if converged {
        last.expect("at least one iteration")
    } else {
        let (_, b, i) = best.expect("at least one iteration");
        (b, i)
    };
    Ok(finish(chosen, iterations, converged, w0, freqs, g, &w))
}

/// One weighted linear least-squares solve in normalized frequency.
fn sk_step(
    sn: &[Complex64],
    g: &[Complex64],
    w: &[f64],
    den_prev: &[Complex64],
    nb: usize,
    na: usize,
) -> Result<Iterate> {
    let k = sn.len();
    let cols = nb + 1 + na;
    let mut a = DMatrix::<f64>::zeros(2 * k, cols);
    let mut rhs = DVector::<f64>::zeros(2 * k);
    for i in 0..k {
        let d = den_prev[i].norm();
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::LoopDiverged("denominator vanished on the frequency grid".into()));
        }
        let row_w = w[i].sqrt() / d;
        let mut sp = Complex64::new(1.0, 0.0);
        for j in 0..=na {
            if j <= nb {
                let v = sp * row_w;
                a[(2 * i, j)] = v.re;
                a[(2 * i + 1, j)] = v.im;
            }
            let v = -g[i] * sp * row_w;
            if j < na {
                a[(2 * i, nb + 1 + j)] = v.re;
                a[(2 * i + 1, nb + 1 + j)] = v.im;
            } else {
                rhs[2 * i] = -v.re;
                rhs[2 * i + 1] = -v.im;
            }
            sp *= sn[i];
        }
    }
    // Unit column norms keep the singular-value cutoff meaningful.
    let mut scale = vec![1.0; cols];
    for (j, s) in scale.iter_mut().enumerate() {
        let n = a.column(j).norm();
        if n > 0.0 {
            *s = n;
            a.column_mut(j).scale_mut(1.0 / n);
        }
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &v| m.max(v));
    let tol = RCOND * smax;
    let rank = svd.singular_values.iter().filter(|&&v| v > tol).count();
    let x = svd
        .solve(&rhs, tol)
        .map_err(|e| Error::UnidentifiableOrders(e.to_string()))?;
    let x: Vec<f64> = x.iter().zip(&scale).map(|(v, s)| v / s).collect();
    let b = x[..=nb].to_vec();
    let mut den = x[nb + 1..].to_vec();
    den.push(1.0);
    Ok(Iterate { b, a: den, rank_deficient: rank < cols })
}

fn output_error(sn: &[Complex64], g: &[Complex64], w: &[f64], b: &[f64], a: &[f64]) -> f64 {
    sn.iter()
        .zip(g)
        .zip(w)
        .map(|((&s, &gk), &wk)| wk * (gk - poly::eval(b, s) / poly::eval(a, s)).norm_sqr())
        .sum()
}

fn finish(
    it: Iterate,
    iterations: usize,
    converged: bool,
    w0: f64,
    freqs: &[f64],
    g: &[Complex64],
    w: &[f64],
) -> RationalModel {
    let na = it.a.len() - 1;
    let rescale = |c: &[f64]| -> Vec<f64> {
        c.iter().enumerate().map(|(i, v)| v * w0.powi(na as i32 - i as i32)).collect()
    };
    let num = rescale(&it.b);
    let den = rescale(&it.a);
    let scale_roots = |r: Vec<Complex64>| -> Vec<Complex64> {
        let mut r: Vec<Complex64> = r.into_iter().map(|z| z * w0).collect();
        poly::sort_roots(&mut r);
        r
    };
    let poles = scale_roots(poly::roots(&it.a));
    let zeros = scale_roots(poly::roots(&it.b));
    let unstable = poles.iter().any(|p| p.re >= 0.0);
    let mut model = RationalModel {
        num,
        den,
        poles,
        zeros,
        weighted_rms_residual: 0.0,
        residuals: Vec::new(),
        converged,
        iterations,
        rank_deficient: it.rank_deficient,
        unstable,
    };
    model.residuals = freqs.iter().zip(g).map(|(&f, &gk)| gk - model.response_at_hz(f)).collect();
    let wsum: f64 = w.iter().sum();
    let e: f64 = model.residuals.iter().zip(w).map(|(r, wk)| wk * r.norm_sqr()).sum();
    model.weighted_rms_residual = (e / wsum).sqrt();
    model
}

/// `w_k = 1 / max(var_total_k, floor)` with `floor = 1e-12 * median`, zero
/// weight on ill-conditioned bins.
pub fn weight_from_variance(est: &BlaEstimate) -> Vec<f64> {
    weights_from_variance(&est.var_total, &est.ill_conditioned)
}

pub fn weights_from_variance(var: &[f64], ill_conditioned: &[bool]) -> Vec<f64> {
    let mut floor = 1e-12 * dsp::median(var);
    if !(floor > 0.0) {
        let pos: Vec<f64> = var.iter().copied().filter(|v| *v > 0.0).collect();
        floor = if pos.is_empty() { 1.0 } else { 1e-12 * dsp::median(&pos) };
    }
    var.iter()
        .enumerate()
        .map(|(k, &v)| {
            if ill_conditioned.get(k).copied().unwrap_or(false) {
                0.0
            } else {
                1.0 / v.max(floor)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::harmonic_grid;

    fn table2_freqs() -> Vec<f64> {
        harmonic_grid(3, 2, 399).unwrap().iter().map(|&k| k as f64 * 2440.0 / 4883.0).collect()
    }

    fn sample(num: &[f64], den: &[f64], f: &[f64]) -> Vec<Complex64> {
        f.iter()
            .map(|&f| {
                let s = Complex64::new(0.0, std::f64::consts::TAU * f);
                poly::eval(num, s) / poly::eval(den, s)
            })
            .collect()
    }

    #[test]
    fn recovers_second_order_poles() {
        let f = table2_freqs();
        let g = sample(&[1.0], &[4.0, 2.0, 1.0], &f);
        let m = fit_rational(&f, &g, &FitSpec::new(0, 2)).unwrap();
        let truth = [Complex64::new(-1.0, -3f64.sqrt()), Complex64::new(-1.0, 3f64.sqrt())];
        for (p, t) in m.poles.iter().zip(&truth) {
            assert!((p - t).norm() < 1e-6, "{p} vs {t}");
        }
        assert!(m.weighted_rms_residual < 1e-10);
        assert!(m.converged);
        assert!(!m.unstable);
    }

    #[test]
    fn constant_model() {
        let f: Vec<f64> = (1..10).map(|v| v as f64).collect();
        let g = vec![Complex64::new(2.5, 0.0); 9];
        let m = fit_rational(&f, &g, &FitSpec::new(0, 0)).unwrap();
        assert!((m.num[0] - 2.5).abs() < 1e-14);
        assert_eq!(m.den, vec![1.0]);
        assert!(m.poles.is_empty() && m.zeros.is_empty());
    }

    #[test]
    fn all_zero_response_is_unidentifiable() {
        let f: Vec<f64> = (1..10).map(|v| v as f64).collect();
        let g = vec![Complex64::new(0.0, 0.0); 9];
        assert!(matches!(
            fit_rational(&f, &g, &FitSpec::new(0, 2)),
            Err(Error::UnidentifiableOrders(_))
        ));
        let w = vec![0.0; 9];
        let g = vec![Complex64::new(1.0, 0.0); 9];
        assert!(matches!(
            fit_rational(&f, &g, &FitSpec::new(0, 1).with_weights(w)),
            Err(Error::UnidentifiableOrders(_))
        ));
    }

    #[test]
    fn precondition_errors() {
        let f = vec![1.0, 2.0, 3.0];
        let g = vec![Complex64::new(1.0, 0.0); 3];
        assert!(fit_rational(&f, &g, &FitSpec::new(0, 2)).is_err());
        assert!(fit_rational(&f, &g, &FitSpec::new(1, 0)).is_err());
        let f = vec![1.0, 3.0, 2.0, 4.0];
        let g = vec![Complex64::new(1.0, 0.0); 4];
        assert!(fit_rational(&f, &g, &FitSpec::new(0, 1)).is_err());
    }

    #[test]
    fn recovers_zero_and_mixed_scales() {
        let f = table2_freqs();
        let w = std::f64::consts::TAU * 60.0;
        let num = [0.0, 2.0 * 0.2 * w];
        let den = [w * w, 2.0 * 0.2 * w, 1.0];
        let g = sample(&num, &den, &f);
        let m = fit_rational(&f, &g, &FitSpec::new(1, 2)).unwrap();
        assert_eq!(m.zeros.len(), 1);
        assert!(m.zeros[0].norm() < 1e-6 * w);
        let truth = poly::roots(&den);
        for (p, t) in m.poles.iter().zip(&truth) {
            assert!((p - t).norm() / t.norm() < 1e-9);
        }
    }

    #[test]
    fn weight_rules() {
        let w = weights_from_variance(&[2.0; 5], &[false; 5]);
        assert!(w.iter().all(|&v| v == 0.5));
        let w = weights_from_variance(&[1.0, 100.0, 1.0], &[false; 3]);
        assert!((w[0] / w[1] - 100.0).abs() < 1e-12);
        let w = weights_from_variance(&[0.0; 4], &[false; 4]);
        assert!(w.iter().all(|&v| v == w[0] && v.is_finite() && v > 0.0));
        let w = weights_from_variance(&[1.0, 1.0, 1.0], &[false, true, false]);
        assert_eq!(w[1], 0.0);
    }
}
