use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bla_lab::bla::estimate_bla;
use bla_lab::ccd::Spacing;
use bla_lab::error::{Error, Result};
use bla_lab::pipeline::config::{
    load_model, load_region, DoeSettings, FitSettings, GridSettings, ModelRef, PipelineConfig,
    SignalSettings, SingleSettings, SweepSettings, Weighting,
};
use bla_lab::pipeline::io::{self, ModelFile};
use bla_lab::pipeline::{self, Artifacts, Axis, Mode};
use bla_lab::ratfit::{fit_rational, weights_from_variance, FitSpec};
use bla_lab::seed::{self, tag};
use bla_lab::signal::{parse_harmonic_grid, realize_multisine, MultisineSpec};
use bla_lab::structdetect::{
    bootstrap_root_uncertainty, classify_structure, Structure, SweepResult, DEFAULT_K_SIGMA,
};
use bla_lab::sysmodels::add_noise;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_INCONCLUSIVE: u8 = 4;

#[derive(Parser)]
#[command(name = "bla-lab", version, about = "Best linear approximation measurement toolkit")]
struct Cli {
    /// Worker threads for concurrent levels, rows and realizations
    /// (BLA_LAB_JOBS overrides).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Realize a random-phase multisine into a one-column CSV.
    Generate(GenerateArgs),
    /// Simulate a model on a signal file and write a record directory.
    Simulate(SimulateArgs),
    /// Robust BLA from a record directory, or a single-mode config run.
    Estimate(EstimateArgs),
    /// Rational fit of a BLA CSV.
    Fit(FitArgs),
    /// Classify the block structure from models fitted along a sweep.
    Detect(DetectArgs),
    /// Central composite design of the DC/STD excitation.
    Design(DesignArgs),
    /// DC or STD sweep with structure detection.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    fs: f64,
    /// `first:step:last`, `first:last` or a JSON list.
    #[arg(long)]
    harmonics: String,
    #[arg(long, default_value_t = 0.0)]
    dc: f64,
    #[arg(long)]
    std: f64,
    #[arg(long, default_value_t = 1)]
    periods: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    signal: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    /// Realizations; the signal file is the first, the others use phases
    /// derived from its seed.
    #[arg(long, default_value_t = 8)]
    realizations: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, required_unless_present = "config", conflicts_with = "config")]
    rec: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    out: Option<PathBuf>,
    /// Single-mode pipeline config: simulate, estimate and fit.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightArg {
    Variance,
    Uniform,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    bla: PathBuf,
    #[arg(long, default_value_t = 2)]
    na: usize,
    #[arg(long, default_value_t = 0)]
    nb: usize,
    #[arg(long, value_enum, default_value_t = WeightArg::Variance)]
    weighting: WeightArg,
    /// Record directory behind the BLA; adds bootstrap root uncertainties.
    #[arg(long)]
    rec: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    n_boot: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    /// Model files in sweep order.
    #[arg(long, num_args = 1.., required = true)]
    models: Vec<PathBuf>,
    /// CSV with `dc,std` columns, one row per model.
    #[arg(long)]
    settings: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_K_SIGMA)]
    k_sigma: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpacingArg {
    CellCenters,
    Endpoints,
}

#[derive(Args)]
struct SignalArgs {
    #[arg(long, default_value_t = 4883)]
    n: usize,
    #[arg(long, default_value_t = 2440.0)]
    fs: f64,
    #[arg(long, default_value = "3:2:399")]
    harmonics: String,
    #[arg(long, default_value_t = 64)]
    realizations: usize,
    #[arg(long, default_value_t = 3)]
    periods: usize,
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long, required_unless_present = "config")]
    region: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    model: Option<PathBuf>,
    /// design.json path; per-row outputs go next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also sweep the full DC/STD grid and write grid.csv.
    #[arg(long)]
    grid: bool,
    #[arg(long, default_value_t = 5)]
    n_points: usize,
    #[arg(long, value_enum, default_value_t = SpacingArg::CellCenters)]
    spacing: SpacingArg,
    #[command(flatten)]
    signal: SignalArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Dc,
    Std,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    model: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "config")]
    axis: Option<AxisArg>,
    #[arg(long, value_delimiter = ',', required_unless_present = "config")]
    levels: Vec<f64>,
    /// Level of the axis not being swept.
    #[arg(long, default_value_t = 0.0)]
    dc: f64,
    #[arg(long, default_value_t = 0.05)]
    std: f64,
    #[arg(long, default_value_t = 2)]
    na: usize,
    #[arg(long, default_value_t = 0)]
    nb: usize,
    #[arg(long, default_value_t = 30)]
    n_boot: usize,
    #[arg(long, default_value_t = DEFAULT_K_SIGMA)]
    k_sigma: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    signal: SignalArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = match std::env::var("BLA_LAB_JOBS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(j) => Some(j),
            Err(_) => {
                eprintln!("error: BLA_LAB_JOBS must be a non-negative integer, got {v:?}");
                return ExitCode::from(EXIT_CONFIG);
            }
        },
        Err(_) => cli.jobs,
    };
    match pipeline::with_jobs(jobs, || run(cli.cmd, jobs)).and_then(|r| r) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_NUMERIC })
        }
    }
}

fn run(cmd: Cmd, jobs: Option<usize>) -> Result<u8> {
    match cmd {
        Cmd::Generate(a) => generate(a),
        Cmd::Simulate(a) => simulate(a),
        Cmd::Estimate(a) => estimate(a),
        Cmd::Fit(a) => fit(a),
        Cmd::Detect(a) => detect(a),
        Cmd::Design(a) => design(a, jobs),
        Cmd::Sweep(a) => sweep(a, jobs),
    }
}

/// Config-file `jobs` applies when neither `--jobs` nor BLA_LAB_JOBS is set.
fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    pipeline::with_jobs(jobs, f)?
}

fn parent_dir(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn generate(a: GenerateArgs) -> Result<u8> {
    let spec = MultisineSpec {
        n_samples: a.n,
        fs: a.fs,
        excited_harmonics: parse_harmonic_grid(&a.harmonics)?,
        dc: a.dc,
        std: a.std,
        seed: a.seed,
    };
    let sig = realize_multisine(&spec, a.periods)?;
    let mut out = Artifacts::new();
    io::write_signal_csv(&mut out, &a.out, &sig)?;
    Ok(0)
}

fn simulate(a: SimulateArgs) -> Result<u8> {
    if a.realizations < 1 {
        return Err(Error::Config("--realizations must be >= 1".into()));
    }
    let mc = load_model(&a.model)?;
    let sig = io::read_signal_csv(&a.signal)?;
    let n = sig.spec.n_samples;
    let transient = mc.sim.transient_periods;
    let period_of = |m: usize| -> Result<(Vec<f64>, u64)> {
        if m == 0 {
            return Ok((sig.samples[..n].to_vec(), sig.spec.seed));
        }
        let spec = MultisineSpec {
            seed: seed::derive(sig.spec.seed, &[m as u64, tag::PHASES]),
            ..sig.spec.clone()
        };
        Ok((realize_multisine(&spec, 1)?.into_samples(), spec.seed))
    };
    use rayon::prelude::*;
    let runs: Vec<((Vec<f64>, Vec<f64>), u64)> = (0..a.realizations)
        .into_par_iter()
        .map(|m| {
            let (period, s) = period_of(m)?;
            let x: Vec<f64> = period.iter().copied().cycle().take((transient + sig.periods) * n).collect();
            let y = mc.model.simulate(&x, n, sig.spec.fs, &mc.sim)?;
            let y = add_noise(&y, a.noise_std, seed::derive(sig.spec.seed, &[m as u64, tag::NOISE]))?;
            Ok(((x[transient * n..].to_vec(), y), s))
        })
        .collect::<Result<_>>()?;
    let (records, seeds): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let manifest = io::RecordManifest {
        realizations: a.realizations,
        periods: sig.periods,
        n_samples: n,
        fs: sig.spec.fs,
        excited_harmonics: sig.spec.excited_harmonics.clone(),
        dc: sig.spec.dc,
        std: sig.spec.std,
        seeds,
        noise_std: a.noise_std,
        transient_periods: transient,
    };
    let mut out = Artifacts::new();
    io::write_record_dir(&mut out, &a.out, &manifest, &records)?;
    Ok(0)
}

fn estimate(a: EstimateArgs) -> Result<u8> {
    if let Some(cfg_path) = a.config {
        let mut cfg = PipelineConfig::load(&cfg_path)?;
        if cfg.mode()? != Mode::Single {
            return Err(Error::Config("estimate --config needs a [single] config".into()));
        }
        if let Some(o) = a.out {
            cfg.out_dir = o;
        }
        let (lvl, _) = pipeline::run_single(&cfg)?;
        println!("mse {}", io::num(lvl.mse));
        return Ok(0);
    }
    let rec_dir = a.rec.expect("clap enforces --rec");
    let out_path = a.out.expect("clap enforces --out");
    let rec = io::read_record_dir(&rec_dir)?;
    let est = estimate_bla(&rec)?;
    let mse = bla_lab::bla::mse_of_bla(&est)?;
    let meta = rec.meta();
    let mut out = Artifacts::new();
    io::write_bla_csv(&mut out, &out_path, &est, meta.dc, meta.std, mse)?;
    Ok(0)
}

fn fit(a: FitArgs) -> Result<u8> {
    let table = io::read_bla_csv(&a.bla)?;
    let mut spec = FitSpec::new(a.nb, a.na);
    if let WeightArg::Variance = a.weighting {
        spec.weights = Some(weights_from_variance(&table.var_total, &table.ill_conditioned));
    }
    let model = fit_rational(&table.freqs, &table.g, &spec)?;
    let root_uncertainty = match &a.rec {
        Some(dir) => {
            let rec = io::read_record_dir(dir)?;
            Some(bootstrap_root_uncertainty(&rec, &spec, a.n_boot, seed::derive(a.seed, &[tag::BOOTSTRAP]))?)
        }
        None => None,
    };
    let mf = ModelFile { dc: table.dc, std: table.std, fit: spec, model, root_uncertainty };
    let mut out = Artifacts::new();
    io::write_json(&mut out, &a.out, &mf)?;
    Ok(0)
}

fn detect(a: DetectArgs) -> Result<u8> {
    let files: Vec<ModelFile> = a.models.iter().map(|p| io::read_json(p)).collect::<Result<_>>()?;
    let settings = match &a.settings {
        Some(p) => io::read_settings_csv(p)?,
        None => files.iter().map(|f| (f.dc, f.std)).collect(),
    };
    if settings.len() != files.len() {
        return Err(Error::Config(format!(
            "{} settings rows for {} models",
            settings.len(),
            files.len()
        )));
    }
    let mut unc = Vec::with_capacity(files.len());
    for (f, p) in files.iter().zip(&a.models) {
        match &f.root_uncertainty {
            Some(u) => unc.push(u.clone()),
            None => {
                return Err(Error::Config(format!(
                    "{} has no root uncertainties (fit with --rec)",
                    p.display()
                )))
            }
        }
    }
    let sweep = SweepResult {
        settings,
        models: files.into_iter().map(|f| f.model).collect(),
        root_uncertainties: unc,
    };
    let verdict = classify_structure(&sweep, a.k_sigma)?;
    let mut out = Artifacts::new();
    io::write_json(&mut out, &a.out, &verdict)?;
    println!("{}", verdict.label);
    Ok(if verdict.label == Structure::Inconclusive { EXIT_INCONCLUSIVE } else { 0 })
}

fn signal_settings(s: &SignalArgs, dc: f64, std: f64) -> SignalSettings {
    SignalSettings {
        n_samples: s.n,
        fs: s.fs,
        harmonics: s.harmonics.clone(),
        dc,
        std,
        realizations: s.realizations,
        periods: s.periods,
    }
}

fn design(a: DesignArgs, jobs: Option<usize>) -> Result<u8> {
    let mut cfg = match &a.config {
        Some(p) => {
            let c = PipelineConfig::load(p)?;
            if c.mode()? != Mode::Doe {
                return Err(Error::Config("design --config needs a [doe] config".into()));
            }
            c
        }
        None => {
            let region = load_region(a.region.as_ref().expect("clap enforces --region"))?;
            let spacing = match a.spacing {
                SpacingArg::CellCenters => Spacing::CellCenters,
                SpacingArg::Endpoints => Spacing::Endpoints,
            };
            PipelineConfig {
                seed: a.signal.seed,
                out_dir: parent_dir(&a.out),
                signal: signal_settings(&a.signal, region.dc_c, region.std_c),
                model: ModelRef::File(a.model.clone().expect("clap enforces --model")),
                noise_std: a.signal.noise_std,
                fit: FitSettings::default(),
                sweep: None,
                doe: Some(DoeSettings {
                    region,
                    n_points: a.n_points,
                    spacing,
                    grid: a.grid.then(GridSettings::default),
                }),
                single: None,
                jobs,
            }
        }
    };
    if a.config.is_some() {
        cfg.out_dir = parent_dir(&a.out);
        if a.grid {
            if let Some(d) = cfg.doe.as_mut() {
                d.grid.get_or_insert_with(GridSettings::default);
            }
        }
    }
    let res = in_pool(jobs.or(cfg.jobs), || pipeline::run_design(&cfg, &a.out))?;
    if let Some(p) = &res.report.path {
        for q in &p.designed_points {
            println!("{} {}", io::num(q[0]), io::num(q[1]));
        }
    }
    Ok(0)
}

fn sweep(a: SweepArgs, jobs: Option<usize>) -> Result<u8> {
    let mut cfg = match &a.config {
        Some(p) => {
            let c = PipelineConfig::load(p)?;
            if c.mode()? != Mode::Sweep {
                return Err(Error::Config("sweep --config needs a [sweep] config".into()));
            }
            c
        }
        None => PipelineConfig {
            seed: a.signal.seed,
            out_dir: a.out.clone().ok_or_else(|| Error::Config("--out is required".into()))?,
            signal: signal_settings(&a.signal, a.dc, a.std),
            model: ModelRef::File(a.model.clone().expect("clap enforces --model")),
            noise_std: a.signal.noise_std,
            fit: FitSettings { na: a.na, nb: a.nb, n_boot: a.n_boot, weighting: Weighting::Variance, ..FitSettings::default() },
            sweep: Some(SweepSettings {
                axis: match a.axis.expect("clap enforces --axis") {
                    AxisArg::Dc => Axis::Dc,
                    AxisArg::Std => Axis::Std,
                },
                levels: a.levels.clone(),
                k_sigma: a.k_sigma,
            }),
            doe: None,
            single: None::<SingleSettings>,
            jobs,
        },
    };
    if let (Some(_), Some(o)) = (&a.config, &a.out) {
        cfg.out_dir = o.clone();
    }
    let res = in_pool(jobs.or(cfg.jobs), || pipeline::run_sweep(&cfg))?;
    println!("{}", res.verdict.label);
    Ok(0)
}
