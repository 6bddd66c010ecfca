use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::record::ExperimentRecord;
use crate::dsp;
use crate::error::{Error, Result};

/// Corrected powers below this fraction of their band median mark a bin as
/// ill-conditioned for the noise-variance formula.
pub const ILL_CONDITIONED_REL: f64 = 1e-12;

/// Robust-method BLA with its distortion decomposition.
///
/// Variances refer to the averaged estimate `g_bla`; `var_stoch_nl` is scaled
/// back to a single realization (factor `M`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlaEstimate {
    pub freqs: Vec<f64>,
    pub m: usize,
    pub p: usize,
    pub g_bla: Vec<Complex64>,
    pub var_total: Vec<f64>,
    pub var_noise: Vec<f64>,
    pub var_stoch_nl: Vec<f64>,
    pub var_stoch_nl_clamped: Vec<f64>,
    /// Period averages and per-realization FRFs, `[m][k]`.
    pub u_mean: Vec<Vec<Complex64>>,
    pub y_mean: Vec<Vec<Complex64>>,
    pub g_m: Vec<Vec<Complex64>>,
    pub noise_u: Vec<f64>,
    pub noise_y: Vec<f64>,
    pub noise_yu: Vec<Complex64>,
    pub s_uu: Vec<f64>,
    pub s_yy: Vec<f64>,
    pub s_yu: Vec<Complex64>,
    pub ill_conditioned: Vec<bool>,
}

/// Runs the robust-method equations on a record.
pub fn estimate_bla(rec: &ExperimentRecord) -> Result<BlaEstimate> {
    let (mm, pp, nk) = (rec.n_realizations(), rec.n_periods(), rec.n_bins());
    if mm < 2 || pp < 2 {
        return Err(Error::Dimension(format!(
            "robust method needs M >= 2 and P >= 2 (got M = {mm}, P = {pp})"
        )));
    }
    let (mf, pf) = (mm as f64, pp as f64);
    let zero = Complex64::new(0.0, 0.0);

    let mut u_mean = vec![vec![zero; nk]; mm];
    let mut y_mean = vec![vec![zero; nk]; mm];
    let mut var_u = vec![vec![0.0; nk]; mm];
    let mut var_y = vec![vec![0.0; nk]; mm];
    let mut var_yu = vec![vec![zero; nk]; mm];
    for m in 0..mm {
        for p in 0..pp {
            for (k, (&u, &y)) in rec.u(m, p).iter().zip(rec.y(m, p)).enumerate() {
                u_mean[m][k] += u;
                y_mean[m][k] += y;
            }
        }
        for k in 0..nk {
            u_mean[m][k] /= pf;
            y_mean[m][k] /= pf;
        }
        let norm = pf * (pf - 1.0);
        for p in 0..pp {
            for (k, (&u, &y)) in rec.u(m, p).iter().zip(rec.y(m, p)).enumerate() {
                let du = u - u_mean[m][k];
                let dy = y - y_mean[m][k];
                var_u[m][k] += du.norm_sqr() / norm;
                var_y[m][k] += dy.norm_sqr() / norm;
                var_yu[m][k] += dy * du.conj() / norm;
            }
        }
    }

    let scale = u_mean
        .iter()
        .flat_map(|r| r.iter().map(|c| c.norm()))
        .fold(0.0, f64::max);
    for (m, row) in u_mean.iter().enumerate() {
        if let Some(k) = row.iter().position(|c| !(c.norm() > 1e-13 * scale)) {
            return Err(Error::UnexcitedBin { realization: m, bin: k });
        }
    }

    let g_m: Vec<Vec<Complex64>> = (0..mm)
        .map(|m| (0..nk).map(|k| y_mean[m][k] / u_mean[m][k]).collect())
        .collect();

    let mut g_bla = vec![zero; nk];
    let mut var_total = vec![0.0; nk];
    let mut noise_u = vec![0.0; nk];
    let mut noise_y = vec![0.0; nk];
    let mut noise_yu = vec![zero; nk];
    let mut s_uu = vec![0.0; nk];
    let mut s_yy = vec![0.0; nk];
    let mut s_yu = vec![zero; nk];
    for k in 0..nk {
        g_bla[k] = g_m.iter().map(|g| g[k]).sum::<Complex64>() / mf;
        var_total[k] =
            g_m.iter().map(|g| (g[k] - g_bla[k]).norm_sqr()).sum::<f64>() / (mf * (mf - 1.0));
        noise_u[k] = var_u.iter().map(|v| v[k]).sum::<f64>() / mf;
        noise_y[k] = var_y.iter().map(|v| v[k]).sum::<f64>() / mf;
        noise_yu[k] = var_yu.iter().map(|v| v[k]).sum::<Complex64>() / mf;
        s_uu[k] = u_mean.iter().map(|u| u[k].norm_sqr() - noise_u[k]).sum::<f64>() / mf;
        s_yy[k] = y_mean.iter().map(|y| y[k].norm_sqr() - noise_y[k]).sum::<f64>() / mf;
        s_yu[k] = (0..mm)
            .map(|m| y_mean[m][k] * u_mean[m][k].conj() - noise_yu[k])
            .sum::<Complex64>()
            / mf;
    }

    let med_uu = dsp::median(&s_uu.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let med_yy = dsp::median(&s_yy.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let med_yu = dsp::median(&s_yu.iter().map(|v| v.norm()).collect::<Vec<_>>());
    let ill_conditioned: Vec<bool> = (0..nk)
        .map(|k| {
            s_uu[k] < ILL_CONDITIONED_REL * med_uu
                || s_yy[k] < ILL_CONDITIONED_REL * med_yy
                || s_yu[k].norm() < ILL_CONDITIONED_REL * med_yu
        })
        .collect();

    // A zero noise power contributes nothing even where the corrected power
    // in its denominator vanishes.
    let ratio = |num: f64, den: f64| if num == 0.0 { 0.0 } else { num / den };
    let var_noise: Vec<f64> = (0..nk)
        .map(|k| {
            let cross = if noise_yu[k] == zero { 0.0 } else { (noise_yu[k] / s_yu[k]).re };
            g_bla[k].norm_sqr() / mf
                * (ratio(noise_y[k], s_yy[k]) + ratio(noise_u[k], s_uu[k]) - 2.0 * cross)
        })
        .collect();
    let var_stoch_nl: Vec<f64> =
        var_total.iter().zip(&var_noise).map(|(t, n)| mf * (t - n)).collect();
    let var_stoch_nl_clamped = var_stoch_nl.iter().map(|v| v.max(0.0)).collect();

    Ok(BlaEstimate {
        freqs: rec.freqs().to_vec(),
        m: mm,
        p: pp,
        g_bla,
        var_total,
        var_noise,
        var_stoch_nl,
        var_stoch_nl_clamped,
        u_mean,
        y_mean,
        g_m,
        noise_u,
        noise_y,
        noise_yu,
        s_uu,
        s_yy,
        s_yu,
        ill_conditioned,
    })
}

/// Band-averaged total distortion: trapezoid integral of `var_total` over
/// the excited frequencies divided by the band width.
pub fn mse_of_bla(est: &BlaEstimate) -> Result<f64> {
    band_mean(&est.freqs, &est.var_total)
}

pub fn band_mean(f: &[f64], v: &[f64]) -> Result<f64> {
    if f.len() < 2 || f.len() != v.len() {
        return Err(Error::Dimension("band mean needs at least two bins".into()));
    }
    let width = f[f.len() - 1] - f[0];
    if !(width > 0.0) {
        return Err(Error::invalid("frequencies must be increasing"));
    }
    let integral: f64 = f
        .windows(2)
        .zip(v.windows(2))
        .map(|(fw, vw)| 0.5 * (vw[0] + vw[1]) * (fw[1] - fw[0]))
        .sum();
    Ok(integral / width)
}
