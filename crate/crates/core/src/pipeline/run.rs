use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DoeSettings, FitSettings, PipelineConfig, Weighting};
use super::io::{self, ModelFile};
use super::manifest::Artifacts;
use crate::bla::{estimate_bla, mse_of_bla, BlaEstimate};
use crate::ccd::{
    build_plan, eigen_path, extremum, fit_surface, CcdPlan, DoeRegion, EigenPath, Extremum,
    QuadraticSurface,
};
use crate::error::{Error, Result};
use crate::experiment::{run_experiment, ExperimentSetup};
use crate::ratfit::{fit_rational, weight_from_variance};
use crate::seed;
use crate::structdetect::{
    bootstrap_root_uncertainty, classify_structure, StructureVerdict, SweepResult,
};
use crate::sysmodels::SystemModel;

/// Seed-path tags separating sweep levels, plan rows, path points and grid
/// cells.
mod stream {
    pub const LEVEL: u64 = 10;
    pub const ROW: u64 = 11;
    pub const PATH: u64 = 12;
    pub const GRID: u64 = 13;
    pub const BOOT: u64 = 14;
}

/// Runs `f` on a pool of `jobs` threads (`None` or 0: rayon default).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn stage<T>(stage: &'static str, unit: &'static str, index: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage { stage, unit, index, source: Box::new(e) })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelOutcome {
    pub index: usize,
    pub dc: f64,
    pub std: f64,
    pub mse: f64,
    pub model: ModelFile,
    #[serde(skip)]
    pub estimate: Option<BlaEstimate>,
}

/// Simulate, estimate, fit (and optionally bootstrap) one `(dc, std)` level,
/// writing `bla.csv` and `model.json` into `dir`.
#[allow(clippy::too_many_arguments)]
pub fn measure_level(
    model: &SystemModel,
    setup: &ExperimentSetup,
    fit: &FitSettings,
    seed: u64,
    boot_seed: Option<u64>,
    index: usize,
    unit: &'static str,
    dir: &Path,
    out: &mut Artifacts,
) -> Result<LevelOutcome> {
    let rec = stage("simulate", unit, index, run_experiment(model, setup, seed))?;
    let est = stage("estimate", unit, index, estimate_bla(&rec))?;
    let mse = stage("estimate", unit, index, mse_of_bla(&est))?;
    stage("write", unit, index, io::write_bla_csv(out, &dir.join("bla.csv"), &est, setup.dc, setup.std, mse))?;
    let mut spec = fit.spec();
    if fit.weighting == Weighting::Variance {
        spec.weights = Some(weight_from_variance(&est));
    }
    let fitted = stage("fit", unit, index, fit_rational(&est.freqs, &est.g_bla, &spec))?;
    let root_uncertainty = match boot_seed {
        Some(s) => Some(stage(
            "bootstrap",
            unit,
            index,
            bootstrap_root_uncertainty(&rec, &spec, fit.n_boot, s),
        )?),
        None => None,
    };
    let mf = ModelFile { dc: setup.dc, std: setup.std, fit: spec, model: fitted, root_uncertainty };
    stage("write", unit, index, io::write_json(out, &dir.join("model.json"), &mf))?;
    Ok(LevelOutcome { index, dc: setup.dc, std: setup.std, mse, model: mf, estimate: Some(est) })
}

/// Runs independent units concurrently; failed units leave a `FAILED`
/// marker in their directory and the lowest-index error is returned.
fn run_units<T: Send>(
    n: usize,
    dir_of: impl Fn(usize) -> std::path::PathBuf + Sync,
    f: impl Fn(usize, &mut Artifacts) -> Result<T> + Sync,
    out: &mut Artifacts,
) -> Result<Vec<T>> {
    let results: Vec<(Result<T>, Artifacts)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut a = Artifacts::new();
            let r = f(i, &mut a);
            if let Err(e) = &r {
                let _ = a.write(&dir_of(i).join("FAILED"), format!("{e}\n").as_bytes());
            }
            (r, a)
        })
        .collect();
    let mut ok = Vec::with_capacity(n);
    let mut first_err = None;
    for (r, a) in results {
        out.extend(a);
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(ok),
    }
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub levels: Vec<LevelOutcome>,
    pub verdict: StructureVerdict,
    pub files: Artifacts,
}

pub fn run_single(cfg: &PipelineConfig) -> Result<(LevelOutcome, Artifacts)> {
    let mc = cfg.model_config()?;
    let setup = cfg.setup(&mc)?;
    let mut out = Artifacts::new();
    let lvl = measure_level(
        &mc.model,
        &setup,
        &cfg.fit,
        seed::derive(cfg.seed, &[stream::LEVEL, 0]),
        None,
        0,
        "experiment",
        &cfg.out_dir,
        &mut out,
    )?;
    out.write_manifest(&cfg.out_dir, "single", Some(cfg.seed))?;
    Ok((lvl, out))
}

/// One experiment per sweep level, then structure classification.
pub fn run_sweep(cfg: &PipelineConfig) -> Result<SweepOutcome> {
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [sweep] section".into()))?;
    cfg.validate()?;
    let mc = cfg.model_config()?;
    let base = cfg.setup(&mc)?;
    let settings = sw.settings(&cfg.signal);
    let mut out = Artifacts::new();
    let level_dir = |i: usize| cfg.out_dir.join(format!("level_{i:02}"));
    let levels = run_units(
        settings.len(),
        level_dir,
        |i, a| {
            let (dc, std) = settings[i];
            measure_level(
                &mc.model,
                &base.with_level(dc, std),
                &cfg.fit,
                seed::derive(cfg.seed, &[stream::LEVEL, i as u64]),
                Some(seed::derive(cfg.seed, &[stream::BOOT, i as u64])),
                i,
                "level",
                &level_dir(i),
                a,
            )
        },
        &mut out,
    )?;

    let mut header = vec!["level".to_string(), "dc".into(), "std".into(), "mse".into()];
    let np = levels[0].model.model.poles.len();
    let nz = levels[0].model.model.zeros.len();
    for (kind, n) in [("pole", np), ("zero", nz)] {
        for j in 0..n {
            for part in ["re", "im", "sigma"] {
                header.push(format!("{kind}{j}_{part}"));
            }
        }
    }
    let rows = levels.iter().map(|l| {
        let mut r = vec![l.index.to_string(), io::num(l.dc), io::num(l.std), io::num(l.mse)];
        let unc = l.model.root_uncertainty.as_ref();
        let roots = [(&l.model.model.poles, unc.map(|u| &u.poles)), (&l.model.model.zeros, unc.map(|u| &u.zeros))];
        for (rs, sig) in roots {
            for (j, z) in rs.iter().enumerate() {
                r.push(io::num(z.re));
                r.push(io::num(z.im));
                r.push(io::num(sig.and_then(|s| s.get(j).copied()).unwrap_or(f64::NAN)));
            }
        }
        r
    });
    let hdr: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    io::write_table(&mut out, &cfg.out_dir.join("sweep_summary.csv"), &hdr, rows)?;

    let sweep = SweepResult {
        settings: levels.iter().map(|l| (l.dc, l.std)).collect(),
        models: levels.iter().map(|l| l.model.model.clone()).collect(),
        root_uncertainties: levels
            .iter()
            .map(|l| l.model.root_uncertainty.clone().expect("bootstrap ran"))
            .collect(),
    };
    let verdict = stage("detect", "sweep", 0, classify_structure(&sweep, sw.k_sigma))?;
    io::write_json(&mut out, &cfg.out_dir.join("verdict.json"), &verdict)?;
    out.write_manifest(&cfg.out_dir, "sweep", Some(cfg.seed))?;
    Ok(SweepOutcome { levels, verdict, files: out })
}

/// Distortion statistics of one measured BLA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub dc: f64,
    pub std: f64,
    /// Band-mean total distortion.
    pub mse: f64,
    pub max_var_total: f64,
    pub mean_var_noise: f64,
    pub mean_var_stoch_nl: f64,
}

pub fn point_summary(dc: f64, std: f64, est: &BlaEstimate) -> Result<PointSummary> {
    Ok(PointSummary {
        dc,
        std,
        mse: mse_of_bla(est)?,
        max_var_total: est.var_total.iter().copied().fold(0.0, f64::max),
        mean_var_noise: crate::bla::band_mean(&est.freqs, &est.var_noise)?,
        mean_var_stoch_nl: crate::bla::band_mean(&est.freqs, &est.var_stoch_nl_clamped)?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignReport {
    pub region: DoeRegion,
    pub plan: CcdPlan,
    pub rows: Vec<PointSummary>,
    pub surface: QuadraticSurface,
    pub extremum: Option<Extremum>,
    pub path: Option<EigenPath>,
    pub path_results: Vec<PointSummary>,
    /// Largest and smallest band-mean distortion over the four corner rows.
    pub corner_mse_min: f64,
    pub corner_mse_max: f64,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct DesignOutcome {
    pub report: DesignReport,
    pub grid: Option<Vec<PointSummary>>,
    pub files: Artifacts,
}

/// Plan rows, surface fit, extremum, eigen-path, then the designed
/// experiments. `design.json` is written even when the surface has no
/// extremum; the error is returned afterwards.
pub fn run_design(cfg: &PipelineConfig, report_path: &Path) -> Result<DesignOutcome> {
    let doe: &DoeSettings = cfg
        .doe
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [doe] section".into()))?;
    cfg.validate()?;
    let mc = cfg.model_config()?;
    let base = cfg.setup(&mc)?;
    let plan = stage("plan", "design", 0, build_plan(&doe.region))?;
    let mut out = Artifacts::new();
    let dir = &cfg.out_dir;

    let measure = |unit: &'static str, tag: u64, sub: &'static str, pts: Vec<(f64, f64)>, out: &mut Artifacts| {
        let dir_of = |i: usize| dir.join(format!("{sub}_{i:02}"));
        run_units(
            pts.len(),
            dir_of,
            |i, a| {
                let (dc, std) = pts[i];
                let lvl = measure_level(
                    &mc.model,
                    &base.with_level(dc, std),
                    &cfg.fit,
                    seed::derive(cfg.seed, &[tag, i as u64]),
                    None,
                    i,
                    unit,
                    &dir_of(i),
                    a,
                );
                let lvl = match lvl {
                    // A failed rational fit does not invalidate the BLA.
                    Err(Error::Stage { stage: "fit", .. }) => return fallback_summary(&mc.model, &base.with_level(dc, std), cfg.seed, tag, i, unit),
                    other => other?,
                };
                let est = lvl.estimate.as_ref().expect("estimate kept");
                point_summary(dc, std, est)
            },
            out,
        )
    };

    let rows = measure("plan row", stream::ROW, "rows/row", plan.rows.iter().map(|r| (r.dc, r.std)).collect(), &mut out)?;
    let mses: Vec<f64> = rows.iter().map(|r| r.mse).collect();
    let surface = stage("surface fit", "design", 0, fit_surface(&plan, &mses))?;
    let corner = &mses[..4];
    let mut report = DesignReport {
        region: doe.region,
        plan: plan.clone(),
        rows,
        surface: surface.clone(),
        extremum: None,
        path: None,
        path_results: Vec::new(),
        corner_mse_min: corner.iter().copied().fold(f64::INFINITY, f64::min),
        corner_mse_max: corner.iter().copied().fold(0.0, f64::max),
        error: None,
    };

    let grid = match &doe.grid {
        Some(g) => {
            let pts: Vec<(f64, f64)> =
                g.std.iter().flat_map(|&s| g.dc.iter().map(move |&d| (d, s))).collect();
            let res = measure("grid cell", stream::GRID, "grid/cell", pts, &mut out)?;
            let rows = res.iter().map(|p| {
                let (x1, x2) = doe.region.normalize(p.dc, p.std);
                vec![io::num(p.dc), io::num(p.std), io::num(x1), io::num(x2), io::num(p.mse)]
            });
            io::write_table(&mut out, &dir.join("grid.csv"), &["dc", "std", "x1", "x2", "mse"], rows)?;
            Some(res)
        }
        None => None,
    };

    let tail = (|| -> Result<()> {
        let ex = stage("extremum", "design", 0, extremum(&surface))?;
        report.extremum = Some(ex);
        let path = stage(
            "eigen-path",
            "design",
            0,
            eigen_path(&surface, ex.x_star, &doe.region, doe.n_points, doe.spacing),
        )?;
        report.path = Some(path.clone());
        let pts: Vec<(f64, f64)> = path.designed_points.iter().map(|p| (p[0], p[1])).collect();
        report.path_results = measure("path point", stream::PATH, "path/point", pts, &mut out)?;
        Ok(())
    })();
    if let Err(e) = &tail {
        report.error = Some(e.to_string());
    }
    io::write_json(&mut out, report_path, &report)?;
    out.write_manifest(dir, "design", Some(cfg.seed))?;
    tail?;
    Ok(DesignOutcome { report, grid, files: out })
}

fn fallback_summary(
    model: &SystemModel,
    setup: &ExperimentSetup,
    global: u64,
    tag: u64,
    i: usize,
    unit: &'static str,
) -> Result<PointSummary> {
    let rec = stage("simulate", unit, i, run_experiment(model, setup, seed::derive(global, &[tag, i as u64])))?;
    let est = stage("estimate", unit, i, estimate_bla(&rec))?;
    point_summary(setup.dc, setup.std, &est)
}
