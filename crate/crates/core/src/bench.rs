//! Experiment configuration, sweeps over transmit power or RIS size, CSV
//! output and per-cell summaries.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ao::{run_scheme, SchemeId, SchemeOutcome};
use crate::channel::build_scenario;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::metrics::HardwareProfile;

/// Environment variable holding the worker count (unset or 0: one per core).
pub const THREADS_ENV: &str = "RIS_SECRECY_THREADS";

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PMaxDbm,
    NElements,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl Sweep {
    /// Transmit powers of the power sweep, in dBm.
    pub fn default_pmax() -> Self {
        Sweep { axis: SweepAxis::PMaxDbm, values: vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0] }
    }

    pub fn default_m() -> Self {
        Sweep { axis: SweepAxis::NElements, values: vec![8.0, 16.0, 32.0] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("sweep values must be strictly increasing: {:?}", self.values)));
        }
        if self.axis == SweepAxis::NElements && self.values.iter().any(|&v| v < 0.0 || v.fract() != 0.0) {
            return Err(Error::Config("element counts must be non-negative integers".into()));
        }
        Ok(())
    }
}

/// A full experiment: base system, optional sweep, and the run grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    /// `None` runs the single point described by `system`.
    pub sweep: Option<Sweep>,
    pub schemes: Vec<SchemeId>,
    pub seeds: Vec<u64>,
    /// Impairment pairs; empty means `system.hardware` alone.
    pub impairments: Vec<HardwareProfile>,
    /// Write wall-clock times into `runtime_ms` (otherwise 0, keeping output reproducible).
    pub record_runtime: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            sweep: None,
            schemes: SchemeId::ALL.to_vec(),
            seeds: vec![0],
            impairments: Vec::new(),
            record_runtime: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list must not be empty".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("scheme list must not be empty".into()));
        }
        if let Some(s) = &self.sweep {
            s.validate()?;
        }
        for hw in &self.impairments {
            hw.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn hardware_pairs(&self) -> Vec<HardwareProfile> {
        if self.impairments.is_empty() {
            vec![self.system.hardware]
        } else {
            self.impairments.clone()
        }
    }

    /// System configurations at every sweep point, in sweep order.
    pub fn points(&self) -> Vec<SystemConfig> {
        match &self.sweep {
            None => vec![self.system.clone()],
            Some(s) => s
                .values
                .iter()
                .map(|&v| {
                    let mut c = self.system.clone();
                    match s.axis {
                        SweepAxis::PMaxDbm => c.p_max_dbm = v,
                        SweepAxis::NElements => c.n_elements = v as usize,
                    }
                    c
                })
                .collect(),
        }
    }

    /// Every (point, impairment, scheme, seed) tuple in output order.
    pub fn jobs(&self) -> Vec<Job> {
        let mut out = Vec::new();
        for system in self.points() {
            for hw in self.hardware_pairs() {
                for &scheme in &self.schemes {
                    for &seed in &self.seeds {
                        let mut system = system.clone();
                        system.hardware = hw;
                        out.push(Job { scheme, seed, system });
                    }
                }
            }
        }
        out
    }
}

/// One AO run of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub scheme: SchemeId,
    pub seed: u64,
    /// Point of the sweep, with `hardware` set to the evaluated pair.
    pub system: SystemConfig,
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: SchemeId,
    pub seed: u64,
    #[serde(rename = "P_max_dBm")]
    pub p_max_dbm: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub mu_t: f64,
    pub mu_r: f64,
    pub secrecy_rate: f64,
    pub iterations: usize,
    /// Empty for designs without a reflection step.
    pub rank1_ratio_final: Option<f64>,
    /// AO termination, or `failed: <reason>`.
    pub status: String,
    pub runtime_ms: u64,
}

pub const CSV_HEADER: [&str; 11] = [
    "scheme",
    "seed",
    "P_max_dBm",
    "M",
    "mu_t",
    "mu_r",
    "secrecy_rate",
    "iterations",
    "rank1_ratio_final",
    "status",
    "runtime_ms",
];

fn try_job(job: &Job) -> Result<SchemeOutcome> {
    let sys = &job.system;
    let raw = build_scenario(sys, job.seed)?;
    let (channels, noise) = raw.normalized(&sys.noise());
    let opts = crate::ao::AoOptions { seed: job.seed, ..sys.ao.clone() };
    run_scheme(job.scheme, &channels, &noise, sys.p_max_watt(), &sys.hardware, &opts)
}

/// Runs one job. Failures become a row with zero rate instead of an error.
pub fn run_job(job: &Job, record_runtime: bool) -> ResultRow {
    run_job_full(job, record_runtime).0
}

/// [`run_job`] that also hands back the full outcome for auditing.
pub fn run_job_full(job: &Job, record_runtime: bool) -> (ResultRow, Option<SchemeOutcome>) {
    let start = Instant::now();
    let res = try_job(job);
    let runtime_ms = if record_runtime { start.elapsed().as_millis() as u64 } else { 0 };
    let sys = &job.system;
    let mut row = ResultRow {
        scheme: job.scheme,
        seed: job.seed,
        p_max_dbm: sys.p_max_dbm,
        m: sys.n_elements,
        mu_t: sys.hardware.mu_t,
        mu_r: sys.hardware.mu_r,
        secrecy_rate: 0.0,
        iterations: 0,
        rank1_ratio_final: None,
        status: String::new(),
        runtime_ms,
    };
    match res {
        Ok(out) => {
            row.secrecy_rate = out.secrecy_rate;
            row.iterations = out.ao.iterations;
            row.rank1_ratio_final = out.ao.rank1_ratio_final;
            row.status = out.ao.termination.to_string();
            (row, Some(out))
        }
        Err(e) => {
            row.status = format!("failed: {e}");
            (row, None)
        }
    }
}

/// Worker count from [`THREADS_ENV`]; `None` leaves the choice to rayon.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(n) => Ok(Some(n)),
            Err(_) => Err(Error::Config(format!("{THREADS_ENV} must be a non-negative integer, got {s:?}"))),
        },
    }
}

/// Runs every job of `cfg` on a pool of `threads` workers. Rows come back in
/// [`ExperimentConfig::jobs`] order whatever the scheduling.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let jobs = cfg.jobs();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Internal(e.to_string()))?;
    Ok(pool.install(|| jobs.par_iter().map(|j| run_job(j, cfg.record_runtime)).collect()))
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[ResultRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Internal(e.to_string()))
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Mean and 95% half-width of a sample. The half-width is `None` below two
/// values.
pub fn mean_ci(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Some(Z95 * (var / n as f64).sqrt()))
}

/// Summary of one (scheme, sweep point, impairment) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub scheme: SchemeId,
    #[serde(rename = "P_max_dBm")]
    pub p_max_dbm: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub mu_t: f64,
    pub mu_r: f64,
    pub n: usize,
    pub mean: f64,
    /// `None` ("n/a") for singleton cells.
    pub ci95: Option<f64>,
}

/// Groups rows by cell, keeping first-appearance order.
pub fn aggregate(rows: &[ResultRow]) -> Vec<CellSummary> {
    let mut cells: Vec<(CellSummary, Vec<f64>)> = Vec::new();
    for r in rows {
        let same = |c: &CellSummary| {
            c.scheme == r.scheme && c.p_max_dbm == r.p_max_dbm && c.m == r.m && c.mu_t == r.mu_t && c.mu_r == r.mu_r
        };
        match cells.iter_mut().find(|(c, _)| same(c)) {
            Some((_, v)) => v.push(r.secrecy_rate),
            None => cells.push((
                CellSummary {
                    scheme: r.scheme,
                    p_max_dbm: r.p_max_dbm,
                    m: r.m,
                    mu_t: r.mu_t,
                    mu_r: r.mu_r,
                    n: 0,
                    mean: 0.0,
                    ci95: None,
                },
                vec![r.secrecy_rate],
            )),
        }
    }
    cells
        .into_iter()
        .map(|(mut c, v)| {
            let (mean, ci) = mean_ci(&v);
            c.n = v.len();
            c.mean = mean;
            c.ci95 = ci;
            c
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(cells: &[CellSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", "P_max_dBm", "M", "mu_t", "mu_r", "n", "mean", "ci95"]).map_err(csv_err)?;
    for c in cells {
        let ci = c.ci95.map_or_else(|| "n/a".to_string(), |h| h.to_string());
        w.write_record([
            c.scheme.to_string(),
            c.p_max_dbm.to_string(),
            c.m.to_string(),
            c.mu_t.to_string(),
            c.mu_r.to_string(),
            c.n.to_string(),
            c.mean.to_string(),
            ci,
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
