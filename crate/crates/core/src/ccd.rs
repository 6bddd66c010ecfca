//! Central composite design over (DC, STD), quadratic response surface with
//! t-value pruning, extremum and eigen-path.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients with `|t|` below this are pruned.
pub const T_THRESHOLD: f64 = 3.0;

/// Experiment region in signal units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoeRegion {
    pub dc_min: f64,
    pub dc_max: f64,
    pub std_min: f64,
    pub std_max: f64,
    pub dc_c: f64,
    pub std_c: f64,
    #[serde(default = "default_l_center")]
    pub l_center: usize,
}

fn default_l_center() -> usize {
    4
}

impl DoeRegion {
    /// Region centred on the middle of both ranges with 4 centre replicates.
    pub fn centered(dc_min: f64, dc_max: f64, std_min: f64, std_max: f64) -> Result<Self> {
        let r = DoeRegion {
            dc_min,
            dc_max,
            std_min,
            std_max,
            dc_c: 0.5 * (dc_min + dc_max),
            std_c: 0.5 * (std_min + std_max),
            l_center: default_l_center(),
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.dc_min, self.dc_max, self.std_min, self.std_max, self.dc_c, self.std_c];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("region bounds must be finite"));
        }
        if !(self.dc_max > self.dc_min && self.std_max > self.std_min) {
            return Err(Error::invalid("region needs max > min on both axes"));
        }
        if !(self.dc_min..=self.dc_max).contains(&self.dc_c)
            || !(self.std_min..=self.std_max).contains(&self.std_c)
        {
            return Err(Error::invalid("region centre must lie inside the region"));
        }
        if self.l_center < 2 {
            return Err(Error::invalid("l_center must be >= 2"));
        }
        Ok(())
    }

    /// `x1 = (dc - dc_c) / (ddc/2)`, `x2 = (std - std_c) / (dstd/2)`.
    pub fn normalize(&self, dc: f64, std: f64) -> (f64, f64) {
        (
            (dc - self.dc_c) / (0.5 * (self.dc_max - self.dc_min)),
            (std - self.std_c) / (0.5 * (self.std_max - self.std_min)),
        )
    }

    pub fn denormalize(&self, x1: f64, x2: f64) -> (f64, f64) {
        (
            self.dc_c + x1 * 0.5 * (self.dc_max - self.dc_min),
            self.std_c + x2 * 0.5 * (self.std_max - self.std_min),
        )
    }

    /// Normalized box `[x1_lo, x1_hi] x [x2_lo, x2_hi]`.
    fn normalized_box(&self) -> ([f64; 2], [f64; 2]) {
        let (a1, a2) = self.normalize(self.dc_min, self.std_min);
        let (b1, b2) = self.normalize(self.dc_max, self.std_max);
        ([a1, b1], [a2, b2])
    }
}

pub fn normalize(dc: f64, std: f64, region: &DoeRegion) -> (f64, f64) {
    region.normalize(dc, std)
}

pub fn denormalize(x1: f64, x2: f64, region: &DoeRegion) -> (f64, f64) {
    region.denormalize(x1, x2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcdRow {
    pub x1: f64,
    pub x2: f64,
    pub dc: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcdPlan {
    pub rows: Vec<CcdRow>,
    pub region: DoeRegion,
}

impl CcdPlan {
    pub fn center_replicates(&self) -> usize {
        self.rows.iter().filter(|r| r.x1 == 0.0 && r.x2 == 0.0).count()
    }
}

/// Corners, axial points at radius `sqrt(2)`, then `l_center` centre rows.
pub fn build_plan(region: &DoeRegion) -> Result<CcdPlan> {
    region.validate()?;
    let r = std::f64::consts::SQRT_2;
    let mut x = vec![
        (1.0, -1.0),
        (1.0, 1.0),
        (-1.0, -1.0),
        (-1.0, 1.0),
        (r, 0.0),
        (-r, 0.0),
        (0.0, r),
        (0.0, -r),
    ];
    x.extend(std::iter::repeat_n((0.0, 0.0), region.l_center));
    let rows = x
        .into_iter()
        .map(|(x1, x2)| {
            let (dc, std) = region.denormalize(x1, x2);
            if std <= 0.0 {
                return Err(Error::RegionTooWide);
            }
            Ok(CcdRow { x1, x2, dc, std })
        })
        .collect::<Result<_>>()?;
    Ok(CcdPlan { rows, region: *region })
}

/// Index of each coefficient in [`QuadraticSurface::coefficients`].
pub const TERMS: [&str; 6] = ["A20", "A11", "A02", "A10", "A01", "A00"];
const CONST: usize = 5;

fn regressors(x1: f64, x2: f64) -> [f64; 6] {
    [x1 * x1, x1 * x2, x2 * x2, x1, x2, 1.0]
}

/// `MSE = A20 x1^2 + A11 x1 x2 + A02 x2^2 + A10 x1 + A01 x2 + A00` over the
/// active terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSurface {
    /// Ordered as [`TERMS`]; pruned terms are exactly zero.
    pub coefficients: [f64; 6],
    /// Covariance of the active coefficients, zero rows/columns for pruned
    /// ones.
    pub covariance: [[f64; 6]; 6],
    /// Infinite when the residual is zero; zero for pruned terms.
    pub t_values: [f64; 6],
    pub rss: f64,
    pub var_mse: f64,
    pub active: [bool; 6],
    /// The data were fitted exactly, so t-values were not used for pruning.
    pub zero_residual: bool,
    /// Terms dropped, in order.
    pub dropped: Vec<String>,
    /// RSS after each refit, starting with the full model.
    pub rss_history: Vec<f64>,
}

impl QuadraticSurface {
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        regressors(x1, x2).iter().zip(&self.coefficients).map(|(r, a)| r * a).sum()
    }

    pub fn gradient(&self, x1: f64, x2: f64) -> [f64; 2] {
        let a = &self.coefficients;
        [2.0 * a[0] * x1 + a[1] * x2 + a[3], a[1] * x1 + 2.0 * a[2] * x2 + a[4]]
    }
}

struct LsFit {
    coef: Vec<f64>,
    cov_unscaled: DMatrix<f64>,
    rss: f64,
}

fn ls_fit(x: &[(f64, f64)], y: &[f64], active: &[bool; 6]) -> Result<LsFit> {
    let cols: Vec<usize> = (0..6).filter(|&i| active[i]).collect();
    let n = x.len();
    let xm = DMatrix::from_fn(n, cols.len(), |i, j| regressors(x[i].0, x[i].1)[cols[j]]);
    let svd = xm.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(0.0f64, |m, &v| m.max(v));
    let smin = sv.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if !(smin > 1e-10 * smax) {
        return Err(Error::DesignDegenerate);
    }
    let v = svd.v_t.as_ref().expect("requested").transpose();
    let inv_s2 = DMatrix::from_diagonal(&sv.map(|s| 1.0 / (s * s)));
    let cov_unscaled = &v * inv_s2 * v.transpose();
    let yv = DVector::from_column_slice(y);
    let coef = svd.solve(&yv, 0.0).map_err(|_| Error::DesignDegenerate)?;
    let resid = &yv - &xm * &coef;
    Ok(LsFit { coef: coef.iter().copied().collect(), cov_unscaled, rss: resid.norm_squared() })
}

/// Least-squares quadratic fit on the plan rows, pruned one coefficient at
/// a time (lowest `|t|` first, constant kept) until every active `|t| >= 3`.
pub fn fit_surface(plan: &CcdPlan, mses: &[f64]) -> Result<QuadraticSurface> {
    if mses.len() != plan.rows.len() {
        return Err(Error::Dimension(format!(
            "{} MSE values for {} plan rows",
            mses.len(),
            plan.rows.len()
        )));
    }
    if plan.rows.len() < 7 {
        return Err(Error::Dimension("surface fit needs at least 7 rows".into()));
    }
    if plan.center_replicates() < 2 {
        return Err(Error::Dimension("surface fit needs at least 2 centre replicates".into()));
    }
    if mses.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("MSE values must be finite"));
    }
    let x: Vec<(f64, f64)> = plan.rows.iter().map(|r| (r.x1, r.x2)).collect();
    fit_points(&x, mses)
}

/// [`fit_surface`] on arbitrary normalized points.
pub fn fit_points(x: &[(f64, f64)], y: &[f64]) -> Result<QuadraticSurface> {
    let n = x.len();
    let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut active = [true; 6];
    let mut dropped = Vec::new();
    let mut rss_history = Vec::new();
    let mut zero_residual = false;
    loop {
        let fit = ls_fit(x, y, &active)?;
        rss_history.push(fit.rss);
        let p = fit.coef.len();
        let dof = n.saturating_sub(p);
        if dof == 0 {
            return Err(Error::DesignDegenerate);
        }
        let var = fit.rss / dof as f64;
        let cols: Vec<usize> = (0..6).filter(|&i| active[i]).collect();
        let mut coefficients = [0.0; 6];
        let mut covariance = [[0.0; 6]; 6];
        let mut t_values = [0.0; 6];
        for (a, &i) in cols.iter().enumerate() {
            coefficients[i] = fit.coef[a];
            for (b, &j) in cols.iter().enumerate() {
                covariance[i][j] = fit.cov_unscaled[(a, b)] * var;
            }
            let sd = covariance[i][i].sqrt();
            t_values[i] = if sd > 0.0 {
                fit.coef[a] / sd
            } else if fit.coef[a] == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(fit.coef[a])
            };
        }
        let surface = |active, dropped, rss_history, zero_residual| QuadraticSurface {
            coefficients,
            covariance,
            t_values,
            rss: fit.rss,
            var_mse: var,
            active,
            zero_residual,
            dropped,
            rss_history,
        };

        if rss_history.len() == 1 && fit.rss.sqrt() <= 1e-12 * ynorm.max(f64::MIN_POSITIVE) {
            zero_residual = true;
            let amax = coefficients.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let keep: [bool; 6] = std::array::from_fn(|i| {
                i == CONST || coefficients[i].abs() > 1e-9 * amax
            });
            if keep == active {
                return Ok(surface(active, dropped, rss_history, true));
            }
            for i in 0..6 {
                if !keep[i] {
                    dropped.push(TERMS[i].to_string());
                }
            }
            active = keep;
            continue;
        }
        if zero_residual {
            return Ok(surface(active, dropped, rss_history, true));
        }
        let worst = (0..CONST)
            .filter(|&i| active[i] && t_values[i].abs() < T_THRESHOLD)
            .min_by(|&a, &b| t_values[a].abs().total_cmp(&t_values[b].abs()));
        match worst {
            Some(i) => {
                active[i] = false;
                dropped.push(TERMS[i].to_string());
            }
            None => return Ok(surface(active, dropped, rss_history, false)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumKind {
    Minimum,
    Maximum,
    Saddle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub x_star: [f64; 2],
    pub kind: ExtremumKind,
    /// Surface value at `x_star` (constant of the recentred quadratic).
    pub value: f64,
}

/// Solves `[[2A20, A11], [A11, 2A02]] x + [A10, A01] = 0`.
pub fn extremum(surface: &QuadraticSurface) -> Result<Extremum> {
    let a = &surface.coefficients;
    let h = Matrix2::new(2.0 * a[0], a[1], a[1], 2.0 * a[2]);
    let det = h.determinant();
    let scale = h.norm_squared();
    if !(det.abs() > 1e-12 * scale) {
        return Err(Error::DegenerateSurface);
    }
    let x1 = -(h[(1, 1)] * a[3] - h[(0, 1)] * a[4]) / det;
    let x2 = -(-h[(1, 0)] * a[3] + h[(0, 0)] * a[4]) / det;
    let trace = h.trace();
    let kind = if det < 0.0 {
        ExtremumKind::Saddle
    } else if trace > 0.0 {
        ExtremumKind::Minimum
    } else {
        ExtremumKind::Maximum
    };
    Ok(Extremum { x_star: [x1, x2], kind, value: surface.eval(x1, x2) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    /// Centres of `n` equal cells spanning the clipped segment.
    #[default]
    CellCenters,
    /// Equal steps including both ends of the clipped segment.
    Endpoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPath {
    pub x_star: [f64; 2],
    pub q_matrix: [[f64; 2]; 2],
    /// Selected (smallest magnitude) eigenvalue first.
    pub eigenvalues: [f64; 2],
    /// Unit eigenvector of `eigenvalues[0]`, sign fixed so `x1 >= 0`.
    pub direction: [f64; 2],
    /// Unit eigenvector of `eigenvalues[1]`.
    pub orthogonal: [f64; 2],
    pub normalized_points: Vec<[f64; 2]>,
    /// `(dc, std)` per designed experiment.
    pub designed_points: Vec<[f64; 2]>,
}

/// Line through `x_star` along the eigenvector of `Q` whose eigenvalue has
/// the smallest magnitude, sampled at `n_points` settings inside the region.
pub fn eigen_path(
    surface: &QuadraticSurface,
    x_star: [f64; 2],
    region: &DoeRegion,
    n_points: usize,
    spacing: Spacing,
) -> Result<EigenPath> {
    region.validate()?;
    if n_points == 0 {
        return Err(Error::invalid("n_points must be >= 1"));
    }
    let a = &surface.coefficients;
    let q = Matrix2::new(a[0], 0.5 * a[1], 0.5 * a[1], a[2]);
    let eig = SymmetricEigen::new(q);
    let (l0, l1) = (eig.eigenvalues[0], eig.eigenvalues[1]);
    let vec_of = |i: usize| [eig.eigenvectors[(0, i)], eig.eigenvectors[(1, i)]];
    let (sel, other) = if l0.abs() <= l1.abs() { (0, 1) } else { (1, 0) };
    let lmax = l0.abs().max(l1.abs());
    if (l0.abs() - l1.abs()).abs() <= 1e-12 * lmax {
        return Err(Error::NoPreferredDirection {
            eigenvalues: [l0, l1],
            eigenvectors: [vec_of(0), vec_of(1)],
        });
    }
    let canon = |v: [f64; 2]| {
        let n = v[0].hypot(v[1]);
        let s = if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) { -1.0 } else { 1.0 };
        [s * v[0] / n, s * v[1] / n]
    };
    let direction = canon(vec_of(sel));
    let orthogonal = canon(vec_of(other));

    let (bx1, bx2) = region.normalized_box();
    // std > 0 in normalized units.
    let x2_floor = region.normalize(region.dc_c, 0.0).1;
    let lower2 = bx2[0].max(x2_floor);
    let mut t_lo = f64::NEG_INFINITY;
    let mut t_hi = f64::INFINITY;
    for (d, c, lo, hi) in [
        (direction[0], x_star[0], bx1[0], bx1[1]),
        (direction[1], x_star[1], lower2, bx2[1]),
    ] {
        if d.abs() < 1e-15 {
            if c < lo || c > hi {
                return Err(Error::PathOutsideRegion);
            }
            continue;
        }
        let (ta, tb) = ((lo - c) / d, (hi - c) / d);
        t_lo = t_lo.max(ta.min(tb));
        t_hi = t_hi.min(ta.max(tb));
    }
    if !(t_hi > t_lo) {
        return Err(Error::PathOutsideRegion);
    }
    let ts: Vec<f64> = match spacing {
        Spacing::CellCenters => (0..n_points)
            .map(|i| t_lo + (i as f64 + 0.5) * (t_hi - t_lo) / n_points as f64)
            .collect(),
        Spacing::Endpoints if n_points == 1 => vec![0.5 * (t_lo + t_hi)],
        Spacing::Endpoints => (0..n_points)
            .map(|i| t_lo + i as f64 * (t_hi - t_lo) / (n_points - 1) as f64)
            .collect(),
    };
    let normalized_points: Vec<[f64; 2]> = ts
        .iter()
        .map(|t| [x_star[0] + t * direction[0], x_star[1] + t * direction[1]])
        .collect();
    let designed_points = normalized_points
        .iter()
        .map(|p| {
            let (dc, std) = region.denormalize(p[0], p[1]);
            // Clip rounding at a std = 0 boundary.
            [dc, std.max(f64::MIN_POSITIVE)]
        })
        .collect();
    Ok(EigenPath {
        x_star,
        q_matrix: [[q[(0, 0)], q[(0, 1)]], [q[(1, 0)], q[(1, 1)]]],
        eigenvalues: [eig.eigenvalues[sel], eig.eigenvalues[other]],
        direction,
        orthogonal,
        normalized_points,
        designed_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region() -> DoeRegion {
        DoeRegion::centered(0.0, 0.1, 0.03, 0.09).unwrap()
    }

    fn surface_from(f: impl Fn(f64, f64) -> f64) -> QuadraticSurface {
        let plan = build_plan(&region()).unwrap();
        let y: Vec<f64> = plan.rows.iter().map(|r| f(r.x1, r.x2)).collect();
        fit_surface(&plan, &y).unwrap()
    }

    #[test]
    fn normalization_round_trip() {
        let r = region();
        assert_eq!(r.normalize(r.dc_c, r.std_c), (0.0, 0.0));
        assert!((r.normalize(r.dc_max, r.std_c).0 - 1.0).abs() < 1e-15);
        let (a, b) = r.normalize(0.1, 0.03);
        assert!((a - 1.0).abs() < 1e-15 && (b + 1.0).abs() < 1e-15);
        let (dc, std) = r.denormalize(0.3, -0.7);
        let (x1, x2) = r.normalize(dc, std);
        assert!((x1 - 0.3).abs() < 1e-14 && (x2 + 0.7).abs() < 1e-14);
    }

    #[test]
    fn plan_shape() {
        let p = build_plan(&region()).unwrap();
        assert_eq!(p.rows.len(), 12);
        for (i, r) in p.rows.iter().enumerate() {
            let rad = r.x1 * r.x1 + r.x2 * r.x2;
            let want = if i < 8 { 2.0 } else { 0.0 };
            assert!((rad - want).abs() < 1e-15);
        }
        let mirrored: Vec<(f64, f64)> = p.rows.iter().map(|r| (-r.x1, r.x2)).collect();
        for r in &p.rows {
            assert!(mirrored.contains(&(r.x1, r.x2)));
        }
    }

    #[test]
    fn region_too_wide() {
        let r = DoeRegion::centered(0.0, 1.0, 0.01, 1.0).unwrap();
        assert!(matches!(build_plan(&r), Err(Error::RegionTooWide)));
    }

    #[test]
    fn exact_surface_recovered_and_pruned() {
        let s = surface_from(|x1, x2| 2.0 * x1 * x1 + x2 * x2 + 3.0);
        assert!(s.zero_residual);
        let want = [2.0, 0.0, 1.0, 0.0, 0.0, 3.0];
        for i in 0..6 {
            assert!((s.coefficients[i] - want[i]).abs() < 1e-9);
        }
        assert_eq!(s.active, [true, false, true, false, false, true]);
        assert_eq!(s.coefficients[1], 0.0);
    }

    #[test]
    fn constant_surface() {
        let s = surface_from(|_, _| 0.7);
        assert_eq!(s.active, [false, false, false, false, false, true]);
        assert!((s.eval(0.4, -1.2) - 0.7).abs() < 1e-14);
    }

    #[test]
    fn degenerate_design() {
        let x = vec![(0.0, 0.0); 8];
        assert!(matches!(fit_points(&x, &[1.0; 8]), Err(Error::DesignDegenerate)));
    }

    #[test]
    fn extremum_kinds() {
        let s = surface_from(|x1, x2| x1 * x1 + x2 * x2);
        let e = extremum(&s).unwrap();
        assert_eq!(e.kind, ExtremumKind::Minimum);
        assert!(e.x_star[0].abs() < 1e-12 && e.x_star[1].abs() < 1e-12);
        let s = surface_from(|x1, x2| x1 * x1 - x2 * x2);
        assert_eq!(extremum(&s).unwrap().kind, ExtremumKind::Saddle);
        let s = surface_from(|x1, x2| (x1 - x2).powi(2));
        assert!(matches!(extremum(&s), Err(Error::DegenerateSurface)));
    }

    #[test]
    fn diagonal_q_direction() {
        let s = surface_from(|x1, x2| 5.0 * x1 * x1 + 0.1 * x2 * x2);
        let p = eigen_path(&s, [0.0, 0.0], &region(), 5, Spacing::CellCenters).unwrap();
        assert!(p.direction[0].abs() < 1e-12 && (p.direction[1].abs() - 1.0).abs() < 1e-12);
        assert!((p.eigenvalues[0] - 0.1).abs() < 1e-9);
    }

    #[test]
    fn rank_one_surface_is_flat_along_path() {
        let s = surface_from(|x1, x2| (x1 - x2).powi(2));
        let p = eigen_path(&s, [0.0, 0.0], &region(), 5, Spacing::Endpoints).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p.direction[0] - h).abs() < 1e-12 && (p.direction[1] - h).abs() < 1e-12);
        for q in &p.normalized_points {
            assert!(s.eval(q[0], q[1]).abs() < 1e-12);
        }
        assert_eq!(p.normalized_points.len(), 5);
        assert!((p.normalized_points[0][0] + 1.0).abs() < 1e-12);
        assert!((p.normalized_points[4][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isotropic_q_rejected() {
        let s = surface_from(|x1, x2| x1 * x1 + x2 * x2);
        assert!(matches!(
            eigen_path(&s, [0.0, 0.0], &region(), 5, Spacing::CellCenters),
            Err(Error::NoPreferredDirection { .. })
        ));
    }
}
