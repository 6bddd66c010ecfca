//! Block-structure detection from pole/zero movement across a DC or STD
//! sweep.
//!
//! | poles move | zeros move | label        |
//! |------------|------------|--------------|
//! | no         | no         | WH           |
//! | no         | yes        | ParallelWH   |
//! | yes        | no         | NlFeedback   |
//! | yes        | yes        | Inconclusive |

use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bla::{estimate_bla, ExperimentRecord};
use crate::error::{Error, Result};
use crate::ratfit::{fit_rational, FitSpec, RationalModel};
use crate::seed::{self, tag};

pub const DEFAULT_K_SIGMA: f64 = 3.0;

/// Two matching candidates closer than this are considered tied.
const TIE_TOL: f64 = 1e-9;

pub const CAVEAT: &str = "pole/zero behavior is a necessary condition for the detected \
structure, not a sufficient one; other structures can produce the same pattern";

/// Bootstrap standard deviation of every pole and zero, aligned with the
/// canonical root order of the point-estimate model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootUncertainty {
    pub poles: Vec<f64>,
    pub zeros: Vec<f64>,
    /// A replicate root was equidistant from two reference roots; the
    /// farther one was used.
    #[serde(default)]
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// `(dc, std)` per experiment.
    pub settings: Vec<(f64, f64)>,
    pub models: Vec<RationalModel>,
    pub root_uncertainties: Vec<RootUncertainty>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Structure {
    #[serde(rename = "WH")]
    Wh,
    #[serde(rename = "ParallelWH")]
    ParallelWh,
    NlFeedback,
    Inconclusive,
}

impl Structure {
    pub fn from_movement(pole_moved: bool, zero_moved: bool) -> Self {
        match (pole_moved, zero_moved) {
            (false, false) => Structure::Wh,
            (false, true) => Structure::ParallelWh,
            (true, false) => Structure::NlFeedback,
            (true, true) => Structure::Inconclusive,
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Structure::Wh => "WH",
            Structure::ParallelWh => "ParallelWH",
            Structure::NlFeedback => "NlFeedback",
            Structure::Inconclusive => "Inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementScores {
    pub poles: Vec<f64>,
    pub zeros: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureVerdict {
    pub label: Structure,
    pub pole_moved: bool,
    pub zero_moved: bool,
    pub movement_scores: MovementScores,
    pub k_sigma: f64,
    /// Root chaining hit a tie somewhere along the sweep.
    pub ambiguous_matching: bool,
    pub caveat: String,
}

/// Resamples realizations with replacement, refits, and reports the spread
/// of each matched root.
pub fn bootstrap_root_uncertainty(
    rec: &ExperimentRecord,
    spec: &FitSpec,
    n_boot: usize,
    seed: u64,
) -> Result<RootUncertainty> {
    if n_boot < 20 {
        return Err(Error::invalid(format!("n_boot must be >= 20 (got {n_boot})")));
    }
    let m = rec.n_realizations();
    if m < 4 {
        return Err(Error::Dimension(format!("bootstrap needs M >= 4 (got {m})")));
    }
    let est = estimate_bla(rec)?;
    let point = fit_rational(&est.freqs, &est.g_bla, spec)?;
    let replicas: Vec<RationalModel> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[tag::BOOTSTRAP, b as u64]));
            let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
            let est = estimate_bla(&rec.select(&idx)?)?;
            fit_rational(&est.freqs, &est.g_bla, spec)
        })
        .collect::<Result<_>>()?;

    let mut ambiguous = false;
    let mut spread = |reference: &[Complex64], pick: &dyn Fn(&RationalModel) -> &[Complex64]| {
        let mut acc = vec![Vec::with_capacity(n_boot); reference.len()];
        for r in &replicas {
            let (matched, tie) = match_roots(reference, pick(r));
            ambiguous |= tie;
            for (a, z) in acc.iter_mut().zip(matched) {
                a.push(z);
            }
        }
        acc.iter().map(|zs| complex_std(zs)).collect::<Vec<f64>>()
    };
    let poles = spread(&point.poles, &|r| &r.poles);
    let zeros = spread(&point.zeros, &|r| &r.zeros);
    Ok(RootUncertainty { poles, zeros, ambiguous })
}

fn complex_std(z: &[Complex64]) -> f64 {
    if z.len() < 2 {
        return 0.0;
    }
    let mean = z.iter().sum::<Complex64>() / z.len() as f64;
    (z.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (z.len() - 1) as f64).sqrt()
}

/// For each reference root, the nearest unused candidate. Returns the
/// matched candidates in reference order and whether any choice was a tie
/// (ties resolved towards the farther candidate).
fn match_roots(reference: &[Complex64], candidates: &[Complex64]) -> (Vec<Complex64>, bool) {
    let mut used = vec![false; candidates.len()];
    let mut out = Vec::with_capacity(reference.len());
    let mut tie = false;
    for r in reference {
        let mut order: Vec<usize> = (0..candidates.len()).filter(|&j| !used[j]).collect();
        order.sort_by(|&a, &b| (candidates[a] - r).norm().total_cmp(&(candidates[b] - r).norm()));
        let Some(&first) = order.first() else {
            out.push(Complex64::new(f64::NAN, f64::NAN));
            continue;
        };
        let d0 = (candidates[first] - r).norm();
        let tied: Vec<usize> = order
            .iter()
            .copied()
            .take_while(|&j| (candidates[j] - r).norm() - d0 <= TIE_TOL)
            .collect();
        let pick = if tied.len() > 1 {
            tie = true;
            *tied.last().expect("non-empty")
        } else {
            first
        };
        used[pick] = true;
        out.push(candidates[pick]);
    }
    (out, tie)
}

/// Chains roots across experiments by greedy global nearest-neighbour
/// matching to the previous experiment. Returns `traj[root][experiment]`
/// as indices into each experiment's root list.
fn chain(roots: &[&[Complex64]]) -> (Vec<Vec<usize>>, bool) {
    let n = roots[0].len();
    let mut traj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut tie = false;
    for e in 1..roots.len() {
        let prev: Vec<Complex64> = traj.iter().map(|t| roots[e - 1][t[e - 1]]).collect();
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
        for (i, p) in prev.iter().enumerate() {
            for (j, c) in roots[e].iter().enumerate() {
                pairs.push(((c - p).norm(), i, j));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut done_t = vec![false; n];
        let mut done_c = vec![false; n];
        for (idx, &(d, i, j)) in pairs.iter().enumerate() {
            if done_t[i] || done_c[j] {
                continue;
            }
            if pairs[idx + 1..]
                .iter()
                .take_while(|q| q.0 - d <= TIE_TOL)
                .any(|q| !done_t[q.1] && !done_c[q.2] && (q.1 == i || q.2 == j))
            {
                tie = true;
            }
            done_t[i] = true;
            done_c[j] = true;
            traj[i].push(j);
        }
    }
    (traj, tie)
}

fn scores(roots: &[&[Complex64]], sigma: &[&[f64]]) -> (Vec<f64>, bool) {
    if roots[0].is_empty() {
        return (Vec::new(), false);
    }
    let (traj, tie) = chain(roots);
    let s = traj
        .iter()
        .map(|t| {
            let mut best = 0.0f64;
            for a in 0..t.len() {
                for b in a + 1..t.len() {
                    let (ra, rb) = (roots[a][t[a]], roots[b][t[b]]);
                    let (sa, sb) = (sigma[a][t[a]], sigma[b][t[b]]);
                    // Floor keeps noiseless sweeps from dividing rounding noise
                    // by zero.
                    let floor = 1e-12 * (1.0 + ra.norm().max(rb.norm()));
                    let comb = (sa * sa + sb * sb).sqrt().max(floor);
                    best = best.max((ra - rb).norm() / comb);
                }
            }
            best
        })
        .collect();
    (s, tie)
}

/// Applies the movement rule with threshold `k_sigma` and maps the result
/// onto the structure table.
pub fn classify_structure(sweep: &SweepResult, k_sigma: f64) -> Result<StructureVerdict> {
    if !(k_sigma > 0.0 && k_sigma.is_finite()) {
        return Err(Error::invalid("k_sigma must be positive"));
    }
    let n = sweep.models.len();
    if n < 3 {
        return Err(Error::Dimension(format!("sweep needs at least 3 experiments (got {n})")));
    }
    if sweep.root_uncertainties.len() != n || sweep.settings.len() != n {
        return Err(Error::Dimension("settings, models and uncertainties differ in length".into()));
    }
    let np = sweep.models[0].poles.len();
    let nz = sweep.models[0].zeros.len();
    for (mdl, u) in sweep.models.iter().zip(&sweep.root_uncertainties) {
        if mdl.poles.len() != np || mdl.zeros.len() != nz {
            return Err(Error::InconsistentFitOrders);
        }
        if u.poles.len() != np || u.zeros.len() != nz {
            return Err(Error::InconsistentFitOrders);
        }
    }
    let poles: Vec<&[Complex64]> = sweep.models.iter().map(|m| m.poles.as_slice()).collect();
    let zeros: Vec<&[Complex64]> = sweep.models.iter().map(|m| m.zeros.as_slice()).collect();
    let sp: Vec<&[f64]> = sweep.root_uncertainties.iter().map(|u| u.poles.as_slice()).collect();
    let sz: Vec<&[f64]> = sweep.root_uncertainties.iter().map(|u| u.zeros.as_slice()).collect();
    let (pole_scores, tie_p) = scores(&poles, &sp);
    let (zero_scores, tie_z) = scores(&zeros, &sz);
    let pole_moved = pole_scores.iter().any(|&s| s > k_sigma);
    let zero_moved = zero_scores.iter().any(|&s| s > k_sigma);
    Ok(StructureVerdict {
        label: Structure::from_movement(pole_moved, zero_moved),
        pole_moved,
        zero_moved,
        movement_scores: MovementScores { poles: pole_scores, zeros: zero_scores },
        k_sigma,
        ambiguous_matching: tie_p || tie_z,
        caveat: CAVEAT.to_string(),
    })
}
