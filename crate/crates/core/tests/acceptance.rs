//! Acceptance criteria 1-9. Runs as a plain binary (`harness = false`) and
//! prints one PASS/FAIL line per criterion. A failing criterion makes the
//! process exit non-zero only when `BLA_LAB_ACCEPTANCE_STRICT=1`, so the
//! workspace test run reports the verdicts without aborting on them.
//!
//! `cargo test -p bla-lab --test acceptance` runs everything; pass criterion
//! numbers as arguments to run a subset.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use bla_lab::bla::{band_mean, estimate_bla, ExperimentRecord, RecordMeta};
use bla_lab::ccd::{build_plan, eigen_path, extremum, fit_surface, DoeRegion, Spacing, TERMS};
use bla_lab::experiment::{run_experiment, ExperimentSetup};
use bla_lab::pipeline::config::{
    DoeSettings, FitSettings, ModelRef, PipelineConfig, SignalSettings, SweepSettings,
};
use bla_lab::pipeline::{run_design, run_sweep, Axis};
use bla_lab::ratfit::{fit_rational, weight_from_variance, FitSpec};
use bla_lab::seed;
use bla_lab::signal::{parse_harmonic_grid, realize_multisine, MultisineSpec};
use bla_lab::structdetect::{bootstrap_root_uncertainty, classify_structure, Structure, SweepResult};
use bla_lab::sysmodels::{LtiSystem, ModelConfig, SimOptions, StaticNl, SystemModel};
use bla_lab::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn main() {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(u32, &str, Duration, fn() -> Outcome); 9] = [
        (1, "Bussgang gain of a static cubic", Duration::from_secs(120), bussgang),
        (2, "robust method exact on noiseless LTI", Duration::from_secs(10), lti_exact),
        (3, "distortion separation on LTI plus noise", Duration::from_secs(300), noise_separation),
        (4, "structure classification over sweeps", Duration::from_secs(600), classification),
        (5, "NL-MSD stiffening and DC pole movement", Duration::from_secs(300), msd_behaviour),
        (6, "CCD on a known quadratic surface", Duration::from_secs(60), ccd_synthetic),
        (7, "eigen-path payoff on NL-MSD", Duration::from_secs(600), eigen_path_payoff),
        (8, "rational fit of random 2nd-order systems", Duration::from_secs(60), ratfit_oracle),
        (9, "bit-identical reruns", Duration::from_secs(120), reproducibility),
    ];
    let mut failed = 0;
    for (n, name, budget, run) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let mut o = run();
        let el = t.elapsed();
        if el > budget {
            o.pass = false;
            o.detail += &format!("; runtime {:.1}s exceeds {}s", el.as_secs_f64(), budget.as_secs());
        }
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} [{tag}] {name}: {} ({:.1}s)", o.detail, el.as_secs_f64());
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        if std::env::var("BLA_LAB_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}

fn record_from(
    n: usize,
    fs: f64,
    harmonics: &[usize],
    records: &[(Vec<f64>, Vec<f64>)],
) -> ExperimentRecord {
    let meta = RecordMeta {
        n_samples: n,
        fs,
        excited_harmonics: harmonics.to_vec(),
        dc: 0.0,
        std: 0.0,
        seeds: vec![0; records.len()],
    };
    ExperimentRecord::from_time_records(meta, records).expect("valid record")
}

/// Static cubic driven by multisines; the per-bin BLA is compared with the
/// Monte-Carlo Gaussian gain `R_pq / R_pp` and that gain with `3 (mu^2 +
/// sigma^2)`.
fn bussgang() -> Outcome {
    let (n, fs) = (1024, 1024.0);
    let harmonics = parse_harmonic_grid("1:2:397").expect("grid");
    let nl = StaticNl::cubic(1.0);
    let (m, p) = (64, 2);
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, &(mu, sigma)) in [(0.0, 0.1), (0.5, 0.1), (0.5, 0.3)].iter().enumerate() {
        let records: Vec<(Vec<f64>, Vec<f64>)> = (0..m)
            .into_par_iter()
            .map(|r| {
                let spec = MultisineSpec {
                    n_samples: n,
                    fs,
                    excited_harmonics: harmonics.clone(),
                    dc: mu,
                    std: sigma,
                    seed: seed::derive(101, &[i as u64, r as u64]),
                };
                let u = realize_multisine(&spec, p).expect("signal").into_samples();
                let y = nl.apply(&u);
                (u, y)
            })
            .collect();
        let est = estimate_bla(&record_from(n, fs, &harmonics, &records)).expect("estimate");

        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(102, &[i as u64]));
        let normal = Normal::new(mu, sigma).expect("normal");
        let draws = 10_000_000;
        let (mut sx, mut sy, mut sxy, mut sxx) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..draws {
            let x: f64 = normal.sample(&mut rng);
            let y = nl.eval(x);
            sx += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
        }
        let d = draws as f64;
        let r_pq = sxy / d - sx / d * sy / d;
        let r_pp = sxx / d - (sx / d).powi(2);
        let mc = r_pq / r_pp;
        let analytic = 3.0 * (mu * mu + sigma * sigma);
        let rel_mc = (mc - analytic).abs() / analytic;
        let devs: Vec<f64> = est.g_bla.iter().map(|g| (g.norm() - mc).abs() / mc).collect();
        let worst = devs.iter().copied().fold(0.0, f64::max);
        let outside = devs.iter().filter(|&&e| e > 0.05).count();
        let ok = outside == 0 && rel_mc <= 0.03;
        pass &= ok;
        parts.push(format!(
            "(mu {mu}, sigma {sigma}): {outside}/{} bins beyond 5% (worst {:.1}%), MC vs analytic {:.2}%",
            devs.len(),
            100.0 * worst,
            100.0 * rel_mc
        ));
    }
    outcome(pass, parts.join("; "))
}

fn third_order_lti() -> LtiSystem {
    let w = TAU * 50.0;
    LtiSystem::first_order_lowpass(TAU * 120.0).series(&LtiSystem::second_order_lowpass(w, 0.3, 1.0))
}

fn lti_setup(noise: f64, m: usize, p: usize) -> ExperimentSetup {
    ExperimentSetup {
        n_samples: 1024,
        fs: 1024.0,
        excited_harmonics: parse_harmonic_grid("1:2:199").expect("grid"),
        dc: 0.0,
        std: 1.0,
        realizations: m,
        periods: p,
        noise_std: noise,
        sim: SimOptions::default(),
    }
}

fn lti_exact() -> Outcome {
    let g = third_order_lti();
    let model = SystemModel::Lti(g.clone());
    let est = match run_experiment(&model, &lti_setup(0.0, 8, 2), 7).and_then(|r| estimate_bla(&r)) {
        Ok(e) => e,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let rel = est
        .freqs
        .iter()
        .zip(&est.g_bla)
        .map(|(&f, &gh)| {
            let t = g.response_at_hz(f);
            (gh - t).norm() / t.norm()
        })
        .fold(0.0, f64::max);
    let var_max = est
        .var_total
        .iter()
        .chain(&est.var_noise)
        .chain(&est.var_stoch_nl)
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    outcome(
        rel < 1e-10 && var_max < 1e-18,
        format!("max relative BLA error {rel:.2e} (< 1e-10), max |variance| {var_max:.2e} (< 1e-18)"),
    )
}

fn noise_separation() -> Outcome {
    let model = SystemModel::Lti(third_order_lti());
    let records = 100;
    let run = |noise: f64, tag: u64| -> Vec<bla_lab::bla::BlaEstimate> {
        (0..records)
            .into_par_iter()
            .map(|r| {
                let rec = run_experiment(&model, &lti_setup(noise, 8, 4), seed::derive(tag, &[r])).expect("run");
                estimate_bla(&rec).expect("estimate")
            })
            .collect()
    };
    let sigma = 1e-2;
    let base = run(sigma, 301);
    let doubled = run(2.0 * sigma, 302);
    let bins = base[0].freqs.len();

    // Pooled over bins and records, and per bin over records.
    let all: Vec<f64> = base.iter().flat_map(|e| e.var_stoch_nl.iter().copied()).collect();
    let (mean, sd) = bla_lab::dsp::mean_std(&all);
    let se = sd / (all.len() as f64).sqrt();
    let mut exceed = 0;
    for k in 0..bins {
        let v: Vec<f64> = base.iter().map(|e| e.var_stoch_nl[k]).collect();
        let (mk, sk) = bla_lab::dsp::mean_std(&v);
        if mk.abs() > 3.0 * sk / (v.len() as f64).sqrt() {
            exceed += 1;
        }
    }
    let mean_noise = |ests: &[bla_lab::bla::BlaEstimate]| {
        ests.iter().map(|e| band_mean(&e.freqs, &e.var_noise).expect("band")).sum::<f64>() / ests.len() as f64
    };
    let ratio = mean_noise(&doubled) / mean_noise(&base);
    let pooled_ok = mean.abs() <= 3.0 * se;
    let ratio_ok = (3.5..=4.5).contains(&ratio);
    outcome(
        pooled_ok && ratio_ok,
        format!(
            "mean var_stoch_nl {mean:.3e} vs 3 SE {:.3e}; bins beyond 3 SE {exceed}/{bins}; var_noise ratio {ratio:.3} (in [3.5, 4.5])",
            3.0 * se
        ),
    )
}

fn lowpass_toml(wc: f64) -> String {
    format!("{{ num = [{wc}], den = [{wc}, 1.0] }}")
}

struct StructureCase {
    label: Structure,
    model: ModelConfig,
    nb: usize,
    realizations: usize,
}

fn structure_cases() -> Vec<StructureCase> {
    let parse = |t: String| toml::from_str::<ModelConfig>(&t).expect("model");
    let wn = TAU * 50.0;
    vec![
        StructureCase {
            label: Structure::Wh,
            model: parse(format!(
                "kind = \"wiener_hammerstein\"\nfront = {}\nnl = {{ poly = [0.0, 1.0, 0.0, 0.5] }}\nback = {}\n",
                lowpass_toml(TAU * 20.0),
                lowpass_toml(TAU * 60.0)
            )),
            nb: 0,
            realizations: 256,
        },
        StructureCase {
            label: Structure::ParallelWh,
            model: parse(format!(
                "kind = \"parallel_wh\"\n[[branches]]\nfront = {}\nnl = {{ poly = [0.0, 1.0] }}\nback = {{ num = [1.0], den = [1.0] }}\n\
                 [[branches]]\nfront = {{ num = [1.0], den = [1.0] }}\nnl = {{ poly = [0.0, 0.5, 0.0, 0.5] }}\nback = {}\n",
                lowpass_toml(TAU * 20.0),
                lowpass_toml(TAU * 80.0)
            )),
            nb: 1,
            realizations: 256,
        },
        StructureCase {
            label: Structure::NlFeedback,
            model: parse(format!(
                "kind = \"nl_feedback\"\nforward = {{ num = [{}], den = [{}, {}, 1.0] }}\nnl = {{ poly = [0.0, 0.0, 0.0, 1.0] }}\n",
                wn * wn,
                wn * wn,
                2.0 * 0.3 * wn
            )),
            nb: 0,
            realizations: 64,
        },
    ]
}

fn sweep_verdict(case: &StructureCase, levels: &[(f64, f64)], seed: u64) -> bla_lab::Result<Structure> {
    let mut models = Vec::new();
    let mut unc = Vec::new();
    for (i, &(dc, std)) in levels.iter().enumerate() {
        let setup = ExperimentSetup {
            n_samples: 1024,
            fs: 1024.0,
            excited_harmonics: parse_harmonic_grid("1:2:199")?,
            dc,
            std,
            realizations: case.realizations,
            periods: 2,
            noise_std: 1e-4,
            sim: case.model.sim,
        };
        let s = seed::derive(seed, &[i as u64]);
        let rec = run_experiment(&case.model.model, &setup, s)?;
        let est = estimate_bla(&rec)?;
        let mut spec = FitSpec::new(case.nb, 2);
        spec.weights = Some(weight_from_variance(&est));
        models.push(fit_rational(&est.freqs, &est.g_bla, &spec)?);
        unc.push(bootstrap_root_uncertainty(&rec, &spec, 30, seed::derive(s, &[3]))?);
    }
    let sweep = SweepResult { settings: levels.to_vec(), models, root_uncertainties: unc };
    Ok(classify_structure(&sweep, 3.0)?.label)
}

fn classification() -> Outcome {
    let dc_sweep: Vec<(f64, f64)> = [0.0, 0.2, 0.4, 0.6].iter().map(|&d| (d, 0.1)).collect();
    let std_sweep: Vec<(f64, f64)> = [0.05, 0.1, 0.15, 0.2].iter().map(|&s| (0.0, s)).collect();
    let trials = 20u64;
    let mut pass = true;
    let mut parts = Vec::new();
    for (ci, case) in structure_cases().iter().enumerate() {
        for (ai, (axis, levels)) in [("DC", &dc_sweep), ("STD", &std_sweep)].iter().enumerate() {
            let labels: Vec<String> = (0..trials)
                .into_par_iter()
                .map(|t| match sweep_verdict(case, levels, seed::derive(400, &[ci as u64, ai as u64, t])) {
                    Ok(l) => l.to_string(),
                    Err(e) => format!("error: {e}"),
                })
                .collect();
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for l in &labels {
                *counts.entry(l.as_str()).or_default() += 1;
            }
            let hits = counts.get(case.label.to_string().as_str()).copied().unwrap_or(0);
            pass &= hits >= 18;
            parts.push(format!("{} {axis}: {hits}/{trials} {counts:?}", case.label));
        }
    }
    outcome(pass, parts.join("; "))
}

fn msd_model() -> ModelConfig {
    toml::from_str("kind = \"nl_msd\"\n").expect("model")
}

fn msd_setup(model: &ModelConfig, dc: f64, std: f64, noise: f64) -> ExperimentSetup {
    ExperimentSetup {
        n_samples: 4883,
        fs: 2440.0,
        excited_harmonics: parse_harmonic_grid("3:2:399").expect("grid"),
        dc,
        std,
        realizations: 64,
        periods: 3,
        noise_std: noise,
        sim: model.sim,
    }
}

fn msd_behaviour() -> Outcome {
    let model = msd_model();
    let fit_level = |dc: f64, std: f64, i: u64| -> bla_lab::Result<(bla_lab::ratfit::RationalModel, bla_lab::structdetect::RootUncertainty)> {
        let s = seed::derive(500, &[i]);
        let rec = run_experiment(&model.model, &msd_setup(&model, dc, std, 1e-8), s)?;
        let est = estimate_bla(&rec)?;
        let mut spec = FitSpec::new(0, 2);
        spec.weights = Some(weight_from_variance(&est));
        let m = fit_rational(&est.freqs, &est.g_bla, &spec)?;
        let u = bootstrap_root_uncertainty(&rec, &spec, 30, seed::derive(s, &[3]))?;
        Ok((m, u))
    };
    let stds = [0.02, 0.05, 0.08, 0.11];
    let std_fits: Vec<_> = stds.par_iter().enumerate().map(|(i, &s)| fit_level(0.0, s, i as u64)).collect();
    let dcs = [0.0, 0.05, 0.1, 0.15];
    let dc_fits: Vec<_> = dcs.par_iter().enumerate().map(|(i, &d)| fit_level(d, 0.02, 10 + i as u64)).collect();
    let (Ok(std_fits), Ok(dc_fits)) = (
        std_fits.into_iter().collect::<bla_lab::Result<Vec<_>>>(),
        dc_fits.into_iter().collect::<bla_lab::Result<Vec<_>>>(),
    ) else {
        return outcome(false, "a sweep level failed");
    };
    let fnat: Vec<f64> = std_fits
        .iter()
        .map(|(m, _)| (m.poles.iter().map(|p| p.norm_sqr()).product::<f64>()).powf(0.25) / TAU)
        .collect();
    let monotone = fnat.windows(2).all(|w| w[1] > w[0]);
    let sweep = SweepResult {
        settings: dcs.iter().map(|&d| (d, 0.02)).collect(),
        models: dc_fits.iter().map(|(m, _)| m.clone()).collect(),
        root_uncertainties: dc_fits.iter().map(|(_, u)| u.clone()).collect(),
    };
    let verdict = match classify_structure(&sweep, 3.0) {
        Ok(v) => v,
        Err(e) => return outcome(false, format!("classification error: {e}")),
    };
    let score = verdict.movement_scores.poles.iter().copied().fold(0.0, f64::max);
    outcome(
        monotone && score > 3.0,
        format!(
            "natural frequency over STD {stds:?}: {:?} Hz (strictly increasing: {monotone}); DC sweep max pole score {score:.1} (> 3), label {}",
            fnat.iter().map(|f| (f * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            verdict.label
        ),
    )
}

fn ccd_synthetic() -> Outcome {
    let truth = [2.0, 0.5, 1.0, 0.1, 0.0, 3.0];
    let region = DoeRegion::centered(0.0, 1.0, 1.0, 2.0).expect("region");
    let plan = build_plan(&region).expect("plan");
    // Stationary point and least-curvature eigenvector of the true surface.
    let det = 4.0 * truth[0] * truth[2] - truth[1] * truth[1];
    let xs = [
        (-2.0 * truth[2] * truth[3] + truth[1] * truth[4]) / det,
        (truth[1] * truth[3] - 2.0 * truth[0] * truth[4]) / det,
    ];
    let q: nalgebra::Matrix2<f64> = nalgebra::Matrix2::new(truth[0], truth[1] / 2.0, truth[1] / 2.0, truth[2]);
    let eig = q.symmetric_eigen();
    let imin = if eig.eigenvalues[0].abs() < eig.eigenvalues[1].abs() { 0 } else { 1 };
    let dir_true = eig.eigenvectors.column(imin).into_owned();

    let seeds = 50u64;
    let mut coef_sum = [0.0; 6];
    let mut exact_sets = 0;
    let mut worst_x: f64 = 0.0;
    let mut worst_angle: f64 = 0.0;
    for s in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(600, &[s]));
        let noise = Normal::new(0.0, 0.01).expect("normal");
        let mses: Vec<f64> = plan
            .rows
            .iter()
            .map(|r| {
                let (x1, x2) = (r.x1, r.x2);
                truth[0] * x1 * x1 + truth[1] * x1 * x2 + truth[2] * x2 * x2 + truth[3] * x1 + truth[5]
                    + noise.sample(&mut rng)
            })
            .collect();
        let run = || -> bla_lab::Result<_> {
            let surf = fit_surface(&plan, &mses)?;
            let ex = extremum(&surf)?;
            let path = eigen_path(&surf, ex.x_star, &region, 5, Spacing::CellCenters)?;
            Ok((surf, path))
        };
        let (surf, path) = match run() {
            Ok(v) => v,
            Err(e) => return outcome(false, format!("seed {s}: {e}")),
        };
        for (k, c) in surf.coefficients.iter().enumerate() {
            coef_sum[k] += c;
        }
        exact_sets += usize::from((0..6).all(|k| surf.active[k] == (truth[k] != 0.0)));
        worst_x = worst_x.max(((path.x_star[0] - xs[0]).powi(2) + (path.x_star[1] - xs[1]).powi(2)).sqrt());
        let cos = (path.direction[0] * dir_true[0] + path.direction[1] * dir_true[1]).abs().min(1.0);
        worst_angle = worst_angle.max(cos.acos().to_degrees());
    }
    let mut worst_coef: f64 = 0.0;
    for k in 0..6 {
        if truth[k] != 0.0 {
            worst_coef = worst_coef.max((coef_sum[k] / seeds as f64 - truth[k]).abs() / truth[k].abs());
        }
    }
    outcome(
        worst_coef <= 0.05 && worst_x <= 0.05 && worst_angle <= 2.0,
        format!(
            "mean active coefficients ({}) worst error {:.2}% (<= 5%), active set exactly the true one in {exact_sets}/{seeds} seeds; worst |x* error| {worst_x:.4} (<= 0.05); worst direction error {worst_angle:.3} deg (<= 2)",
            TERMS.join(","),
            100.0 * worst_coef
        ),
    )
}

fn msd_design_config(out: &Path) -> PipelineConfig {
    PipelineConfig {
        seed: 3,
        out_dir: out.to_path_buf(),
        signal: SignalSettings { realizations: 64, periods: 3, ..SignalSettings::default() },
        model: ModelRef::Inline(msd_model()),
        noise_std: 1.5e-7,
        fit: FitSettings::default(),
        sweep: None,
        doe: Some(DoeSettings {
            region: DoeRegion {
                dc_min: 0.0,
                dc_max: 0.15,
                std_min: 0.02,
                std_max: 0.05,
                dc_c: 0.075,
                std_c: 0.035,
                l_center: 4,
            },
            n_points: 5,
            spacing: Spacing::CellCenters,
            grid: None,
        }),
        single: None,
        jobs: None,
    }
}

fn eigen_path_payoff() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = msd_design_config(dir.path());
    let res = match run_design(&cfg, &dir.path().join("design.json")) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("design failed: {e}")),
    };
    let r = &res.report;
    let mses: Vec<f64> = r.path_results.iter().map(|p| p.mse).collect();
    let max = mses.iter().copied().fold(0.0, f64::max);
    let min = mses.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = mses.iter().sum::<f64>() / mses.len() as f64;
    let spread = (max - min) / mean;
    let stoch_path = r.path_results.iter().map(|p| p.mean_var_stoch_nl).fold(0.0, f64::max);
    let stoch_corner = r.rows[..4].iter().map(|p| p.mean_var_stoch_nl).fold(f64::INFINITY, f64::min);
    outcome(
        max <= r.corner_mse_min && spread <= 0.25,
        format!(
            "path MSE max {max:.3e} vs corner min {:.3e}; relative spread (max-min)/mean {:.1}% (<= 25%); path points {:?}; stochastic NL path max {stoch_path:.2e} vs corner min {stoch_corner:.2e}",
            r.corner_mse_min,
            100.0 * spread,
            r.path.as_ref().map(|p| p
                .designed_points
                .iter()
                .map(|q| format!("({:.3}, {:.4})", q[0], q[1]))
                .collect::<Vec<_>>())
        ),
    )
}

fn ratfit_oracle() -> Outcome {
    let freqs: Vec<f64> = parse_harmonic_grid("3:2:399")
        .expect("grid")
        .iter()
        .map(|&k| k as f64 * 2440.0 / 4883.0)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(800);
    let wn_dist = Uniform::new(TAU * 5.0, TAU * 150.0).expect("range");
    let zeta_dist = Uniform::new(0.05, 0.9).expect("range");
    let normal = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("normal");
    let (mut worst_clean, mut worst_noisy): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let (wn, zeta) = (wn_dist.sample(&mut rng), zeta_dist.sample(&mut rng));
        let sys = LtiSystem::second_order_lowpass(wn, zeta, 1.0);
        let mut truth = sys.poles();
        bla_lab::poly::sort_roots(&mut truth);
        let g: Vec<Complex64> = freqs.iter().map(|&f| sys.response_at_hz(f)).collect();
        let clean = match fit_rational(&freqs, &g, &FitSpec::new(0, 2)) {
            Ok(m) => m,
            Err(e) => return outcome(false, format!("noiseless fit failed: {e}")),
        };
        let sigma: Vec<f64> = g.iter().map(|z| z.norm() * 1e-2).collect();
        let noisy: Vec<Complex64> = g
            .iter()
            .zip(&sigma)
            .map(|(z, s)| z + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)) * *s)
            .collect();
        let spec = FitSpec::new(0, 2).with_weights(sigma.iter().map(|s| 1.0 / (s * s)).collect());
        let noisy_fit = match fit_rational(&freqs, &noisy, &spec) {
            Ok(m) => m,
            Err(e) => return outcome(false, format!("noisy fit failed: {e}")),
        };
        for (fit, worst, rel) in [(&clean, &mut worst_clean, false), (&noisy_fit, &mut worst_noisy, true)] {
            let mut p = fit.poles.clone();
            bla_lab::poly::sort_roots(&mut p);
            for (a, b) in p.iter().zip(&truth) {
                let e = (a - b).norm() / if rel { b.norm() } else { 1.0 };
                *worst = worst.max(e);
            }
        }
    }
    outcome(
        worst_clean < 1e-6 && worst_noisy < 0.01,
        format!(
            "noiseless max pole error {worst_clean:.2e} (< 1e-6); 40 dB weighted max relative pole error {:.3}% (< 1%)",
            100.0 * worst_noisy
        ),
    )
}

fn sweep_config(out: &Path) -> PipelineConfig {
    let wh = format!(
        "kind = \"wiener_hammerstein\"\nfront = {}\nnl = {{ poly = [0.0, 1.0, 0.0, 0.5] }}\nback = {}\n",
        lowpass_toml(TAU * 20.0),
        lowpass_toml(TAU * 60.0)
    );
    PipelineConfig {
        seed: 9,
        out_dir: out.to_path_buf(),
        signal: SignalSettings {
            n_samples: 1024,
            fs: 1024.0,
            harmonics: "1:2:199".into(),
            dc: 0.0,
            std: 0.1,
            realizations: 16,
            periods: 2,
        },
        model: ModelRef::Inline(toml::from_str(&wh).expect("model")),
        noise_std: 1e-4,
        fit: FitSettings { n_boot: 20, ..FitSettings::default() },
        sweep: Some(SweepSettings { axis: Axis::Dc, levels: vec![0.0, 0.2, 0.4], k_sigma: 3.0 }),
        doe: None,
        single: None,
        jobs: None,
    }
}

fn collect_files(dir: &Path, base: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for entry in fs::read_dir(dir).expect("readable dir") {
        let path = entry.expect("entry").path();
        if path.is_dir() {
            collect_files(&path, base, out);
        } else {
            let rel = path.strip_prefix(base).expect("prefix").to_string_lossy().into_owned();
            out.insert(rel, fs::read(&path).expect("readable file"));
        }
    }
}

fn reproducibility() -> Outcome {
    let mut snapshots = Vec::new();
    for jobs in [Some(1), None] {
        let dir = tempfile::tempdir().expect("tempdir");
        let cfg = sweep_config(dir.path());
        let res = bla_lab::pipeline::with_jobs(jobs, || run_sweep(&cfg));
        if let Err(e) | Ok(Err(e)) = res.map(|r| r.map(|_| ())) {
            return outcome(false, format!("sweep failed: {e}"));
        }
        let mut files = BTreeMap::new();
        collect_files(dir.path(), dir.path(), &mut files);
        snapshots.push(files);
    }
    let csv = snapshots[0].keys().filter(|k| k.ends_with(".csv")).count();
    let same = snapshots[0] == snapshots[1];
    outcome(
        same && csv > 0,
        format!(
            "{} artifacts ({csv} CSV) identical across a single-threaded and a multi-threaded run: {same}",
            snapshots[0].len()
        ),
    )
}
