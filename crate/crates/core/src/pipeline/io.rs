//! File formats: signal CSV, record directories, BLA CSV and model JSON.
//!
//! Numbers are written as `{:.16e}` (17 significant digits) so every value
//! round-trips exactly. CSV metadata lives in leading `# key=value` lines.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bla::{BlaEstimate, ExperimentRecord, RecordMeta};
use crate::error::{Error, Result};
use crate::ratfit::{FitSpec, RationalModel};
use crate::signal::{MultisineSpec, SignalRealization};
use crate::structdetect::RootUncertainty;

use super::manifest::Artifacts;

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), msg: msg.into() }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    parse_err(path, e.to_string())
}

/// Splits `# key=value` comment lines from the CSV body.
fn read_commented(path: &Path) -> Result<(BTreeMap<String, String>, String)> {
    let text = fs::read_to_string(path)?;
    let mut meta = BTreeMap::new();
    let mut body = String::with_capacity(text.len());
    for line in text.lines() {
        if let Some(c) = line.strip_prefix('#') {
            if let Some((k, v)) = c.trim().split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    Ok((meta, body))
}

fn meta_get<T: std::str::FromStr>(path: &Path, meta: &BTreeMap<String, String>, key: &str) -> Result<T> {
    meta.get(key)
        .ok_or_else(|| parse_err(path, format!("missing header key `{key}`")))?
        .parse()
        .map_err(|_| parse_err(path, format!("bad value for header key `{key}`")))
}

fn meta_list(path: &Path, meta: &BTreeMap<String, String>, key: &str) -> Result<Vec<u64>> {
    let raw = meta.get(key).ok_or_else(|| parse_err(path, format!("missing header key `{key}`")))?;
    serde_json::from_str(raw).map_err(|e| parse_err(path, format!("`{key}`: {e}")))
}

fn write_commented(
    out: &mut Artifacts,
    path: &Path,
    meta: &[(&str, String)],
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut buf = Vec::new();
    for (k, v) in meta {
        buf.extend_from_slice(format!("# {k}={v}\n").as_bytes());
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header).map_err(|e| csv_err(path, e))?;
        for r in rows {
            w.write_record(&r).map_err(|e| csv_err(path, e))?;
        }
        w.flush()?;
    }
    out.write(path, &buf)
}

fn json_list<T: Serialize>(v: &[T]) -> String {
    serde_json::to_string(v).expect("serializable list")
}

/// One-column CSV of samples with the generating spec in the header.
pub fn write_signal_csv(out: &mut Artifacts, path: &Path, sig: &SignalRealization) -> Result<()> {
    let s = sig.spec();
    let meta = [
        ("n_samples", s.n_samples.to_string()),
        ("fs", num(s.fs)),
        ("excited_harmonics", json_list(&s.excited_harmonics)),
        ("dc", num(s.dc)),
        ("std", num(s.std)),
        ("seed", s.seed.to_string()),
        ("periods", sig.periods().to_string()),
    ];
    write_commented(out, path, &meta, &["sample"], sig.samples().iter().map(|&x| vec![num(x)]))
}

pub struct SignalFile {
    pub spec: MultisineSpec,
    pub periods: usize,
    pub samples: Vec<f64>,
}

pub fn read_signal_csv(path: &Path) -> Result<SignalFile> {
    let (meta, body) = read_commented(path)?;
    let spec = MultisineSpec {
        n_samples: meta_get(path, &meta, "n_samples")?,
        fs: meta_get(path, &meta, "fs")?,
        excited_harmonics: meta_list(path, &meta, "excited_harmonics")?
            .into_iter()
            .map(|k| k as usize)
            .collect(),
        dc: meta_get(path, &meta, "dc")?,
        std: meta_get(path, &meta, "std")?,
        seed: meta_get(path, &meta, "seed")?,
    };
    spec.validate()?;
    let periods: usize = meta_get(path, &meta, "periods")?;
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let v: f64 = rec
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| parse_err(path, "bad sample value"))?;
        samples.push(v);
    }
    if samples.len() != periods * spec.n_samples {
        return Err(parse_err(
            path,
            format!("{} samples, expected {} x {}", samples.len(), periods, spec.n_samples),
        ));
    }
    Ok(SignalFile { spec, periods, samples })
}

/// Record directory manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordManifest {
    pub realizations: usize,
    pub periods: usize,
    pub n_samples: usize,
    pub fs: f64,
    pub excited_harmonics: Vec<usize>,
    pub dc: f64,
    pub std: f64,
    pub seeds: Vec<u64>,
    pub noise_std: f64,
    /// Periods simulated and discarded before the stored ones.
    pub transient_periods: usize,
}

pub fn record_file_name(m: usize, p: usize) -> String {
    format!("m{m}_p{p}.csv")
}

/// Writes `m{m}_p{p}.csv` (time, u, y) per realization and period plus
/// `manifest.toml`.
pub fn write_record_dir(
    out: &mut Artifacts,
    dir: &Path,
    manifest: &RecordManifest,
    records: &[(Vec<f64>, Vec<f64>)],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let n = manifest.n_samples;
    let dt = 1.0 / manifest.fs;
    for (m, (u, y)) in records.iter().enumerate() {
        for p in 0..manifest.periods {
            let rows = (0..n).map(|i| {
                let idx = p * n + i;
                vec![num(idx as f64 * dt), num(u[idx]), num(y[idx])]
            });
            write_commented(out, &dir.join(record_file_name(m, p)), &[], &["time", "u", "y"], rows)?;
        }
    }
    let text = toml::to_string(manifest).map_err(|e| Error::Config(e.to_string()))?;
    out.write(&dir.join("manifest.toml"), text.as_bytes())
}

pub fn read_record_manifest(dir: &Path) -> Result<RecordManifest> {
    let path = dir.join("manifest.toml");
    let text = fs::read_to_string(&path)?;
    toml::from_str(&text).map_err(|e| parse_err(&path, e.to_string()))
}

/// Loads a record directory back into spectra.
pub fn read_record_dir(dir: &Path) -> Result<ExperimentRecord> {
    let man = read_record_manifest(dir)?;
    let n = man.n_samples;
    let mut records = Vec::with_capacity(man.realizations);
    for m in 0..man.realizations {
        let mut u = Vec::with_capacity(n * man.periods);
        let mut y = Vec::with_capacity(n * man.periods);
        for p in 0..man.periods {
            let path = dir.join(record_file_name(m, p));
            let mut rdr = csv::Reader::from_path(&path).map_err(|e| csv_err(&path, e))?;
            let mut rows = 0;
            for rec in rdr.records() {
                let rec = rec.map_err(|e| csv_err(&path, e))?;
                let get = |i: usize| -> Result<f64> {
                    rec.get(i)
                        .and_then(|s| s.trim().parse().ok())
                        .ok_or_else(|| parse_err(&path, "bad numeric field"))
                };
                u.push(get(1)?);
                y.push(get(2)?);
                rows += 1;
            }
            if rows != n {
                return Err(parse_err(&path, format!("{rows} rows, expected {n}")));
            }
        }
        records.push((u, y));
    }
    let meta = RecordMeta {
        n_samples: n,
        fs: man.fs,
        excited_harmonics: man.excited_harmonics,
        dc: man.dc,
        std: man.std,
        seeds: man.seeds,
    };
    ExperimentRecord::from_time_records(meta, &records)
}

pub const BLA_COLUMNS: [&str; 8] = [
    "f_hz",
    "re_g",
    "im_g",
    "var_total",
    "var_noise",
    "var_stoch_nl",
    "var_stoch_nl_clamped",
    "ill_conditioned",
];

/// BLA spectrum with its distortion spectra, one row per excited bin.
pub fn write_bla_csv(
    out: &mut Artifacts,
    path: &Path,
    est: &BlaEstimate,
    dc: f64,
    std: f64,
    mse: f64,
) -> Result<()> {
    let meta = [
        ("dc", num(dc)),
        ("std", num(std)),
        ("realizations", est.m.to_string()),
        ("periods", est.p.to_string()),
        ("mse", num(mse)),
    ];
    let rows = (0..est.freqs.len()).map(|k| {
        vec![
            num(est.freqs[k]),
            num(est.g_bla[k].re),
            num(est.g_bla[k].im),
            num(est.var_total[k]),
            num(est.var_noise[k]),
            num(est.var_stoch_nl[k]),
            num(est.var_stoch_nl_clamped[k]),
            u8::from(est.ill_conditioned[k]).to_string(),
        ]
    });
    write_commented(out, path, &meta, &BLA_COLUMNS, rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlaTable {
    pub dc: f64,
    pub std: f64,
    pub freqs: Vec<f64>,
    pub g: Vec<Complex64>,
    pub var_total: Vec<f64>,
    pub var_noise: Vec<f64>,
    pub var_stoch_nl: Vec<f64>,
    pub ill_conditioned: Vec<bool>,
}

pub fn read_bla_csv(path: &Path) -> Result<BlaTable> {
    let (meta, body) = read_commented(path)?;
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_err(path, format!("missing column `{name}`")))
    };
    let idx: Vec<usize> = BLA_COLUMNS[..6].iter().map(|c| col(c)).collect::<Result<_>>()?;
    let ill_col = col("ill_conditioned").ok();
    let mut t = BlaTable {
        dc: meta_get(path, &meta, "dc").unwrap_or(f64::NAN),
        std: meta_get(path, &meta, "std").unwrap_or(f64::NAN),
        freqs: vec![],
        g: vec![],
        var_total: vec![],
        var_noise: vec![],
        var_stoch_nl: vec![],
        ill_conditioned: vec![],
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let v: Vec<f64> = idx
            .iter()
            .map(|&i| {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| parse_err(path, "bad numeric field"))
            })
            .collect::<Result<_>>()?;
        t.freqs.push(v[0]);
        t.g.push(Complex64::new(v[1], v[2]));
        t.var_total.push(v[3]);
        t.var_noise.push(v[4]);
        t.var_stoch_nl.push(v[5]);
        t.ill_conditioned.push(ill_col.and_then(|i| rec.get(i)).is_some_and(|s| s.trim() == "1"));
    }
    Ok(t)
}

/// Contents of `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub dc: f64,
    pub std: f64,
    pub fit: FitSpec,
    pub model: RationalModel,
    #[serde(default)]
    pub root_uncertainty: Option<RootUncertainty>,
}

pub fn write_json<T: Serialize>(out: &mut Artifacts, path: &Path, v: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    out.write(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))
}

/// Reads `dc,std` rows.
pub fn read_settings_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let (_, body) = read_commented(path)?;
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let find = |n: &str| {
        headers
            .iter()
            .position(|h| h.trim() == n)
            .ok_or_else(|| parse_err(path, format!("missing column `{n}`")))
    };
    let (ic, is) = (find("dc")?, find("std")?);
    rdr.records()
        .map(|r| {
            let r = r.map_err(|e| csv_err(path, e))?;
            let g = |i: usize| {
                r.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| parse_err(path, "bad numeric field"))
            };
            Ok((g(ic)?, g(is)?))
        })
        .collect()
}

pub fn write_table(
    out: &mut Artifacts,
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    write_commented(out, path, &[], header, rows)
}

/// Resolves `p` against `base` unless it is absolute.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
