//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Runs shared between criteria (same scheme, seed and system) are computed
//! once. Worker count follows RIS_SECRECY_THREADS.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use ris_secrecy::ao::{AoOptions, SchemeId, SchemeOutcome, Termination};
use ris_secrecy::bench::{
    mean_ci, run_job_full, threads_from_env, to_csv_string, ExperimentConfig, Job, ResultRow, Sweep, SweepAxis,
};
use ris_secrecy::metrics::HardwareProfile;
use ris_secrecy::validate::{audit_run, grid_suite, mc_suite};

const HW: HardwareProfile = HardwareProfile { mu_t: 0.01, mu_r: 0.01 };

struct Cache {
    pool: rayon::ThreadPool,
    runs: HashMap<String, (ResultRow, Option<SchemeOutcome>)>,
}

fn key(job: &Job) -> String {
    format!("{}|{}|{:?}", job.scheme, job.seed, job.system)
}

impl Cache {
    fn new() -> Self {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads_from_env().expect("thread count") {
            b = b.num_threads(n);
        }
        Cache { pool: b.build().expect("pool"), runs: HashMap::new() }
    }

    /// Rows of `cfg` in job order, computing only unseen jobs.
    fn rows(&mut self, cfg: &ExperimentConfig) -> Vec<ResultRow> {
        self.outcomes(cfg).into_iter().map(|(r, _)| r).collect()
    }

    fn outcomes(&mut self, cfg: &ExperimentConfig) -> Vec<(ResultRow, Option<SchemeOutcome>)> {
        cfg.validate().expect("valid config");
        let jobs = cfg.jobs();
        let todo: Vec<&Job> = {
            let mut seen = std::collections::HashSet::new();
            jobs.iter().filter(|j| !self.runs.contains_key(&key(j)) && seen.insert(key(j))).collect()
        };
        let fresh: Vec<_> = self.pool.install(|| todo.par_iter().map(|j| (key(j), run_job_full(j, false))).collect());
        self.runs.extend(fresh);
        jobs.iter().map(|j| self.runs[&key(j)].clone()).collect()
    }
}

fn config(m: usize, p_dbm: f64, schemes: &[SchemeId], seeds: u64, impairments: &[HardwareProfile]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        schemes: schemes.to_vec(),
        seeds: (0..seeds).collect(),
        impairments: impairments.to_vec(),
        ..ExperimentConfig::default()
    };
    cfg.system.n_elements = m;
    cfg.system.p_max_dbm = p_dbm;
    cfg
}

fn mean_where(rows: &[ResultRow], pred: impl Fn(&ResultRow) -> bool) -> f64 {
    let v: Vec<f64> = rows.iter().filter(|r| pred(r)).map(|r| r.secrecy_rate).collect();
    mean_ci(&v).0
}

/// Paired (per-seed) difference `a - b` over the rows: mean and 95% half-width.
fn paired(rows: &[ResultRow], a: SchemeId, b: SchemeId) -> (f64, f64) {
    let pick = |s: SchemeId| -> HashMap<u64, f64> {
        rows.iter().filter(|r| r.scheme == s).map(|r| (r.seed, r.secrecy_rate)).collect()
    };
    let (ra, rb) = (pick(a), pick(b));
    let mut d: Vec<f64> = ra.iter().filter_map(|(s, x)| rb.get(s).map(|y| x - y)).collect();
    d.sort_by(f64::total_cmp);
    let (m, h) = mean_ci(&d);
    (m, h.unwrap_or(f64::INFINITY))
}

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, pass: bool, what: &str, detail: String, took: Duration) {
        if !pass {
            self.failures += 1;
        }
        println!(
            "criterion {id} [{}] {what}: {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
}

fn main() -> ExitCode {
    let mut cache = Cache::new();
    let mut rep = Report { failures: 0 };
    let mut all_outcomes_audited = Vec::new();

    // 1: closed forms against the sample-level simulator.
    let t = Instant::now();
    let mc = mc_suite(10, 1_000_000).expect("mc suite");
    let worst = mc.checks.iter().map(|c| c.value).fold(0.0, f64::max);
    let took = t.elapsed();
    rep.line(
        1,
        mc.pass() && took < Duration::from_secs(120),
        "formulas vs Monte-Carlo, 10 instances, 1e6 samples",
        format!("worst relative error {worst:.2e} (limit 2e-2), {}/10 within", mc.passed()),
        took,
    );

    // 2: monotone convergence on N=4, M=8.
    let t = Instant::now();
    let c2 = config(8, 30.0, &[SchemeId::RisRobust], 20, &[HW]);
    let c2_runs = cache.outcomes(&c2);
    let took = t.elapsed();
    let outs: Vec<&SchemeOutcome> = c2_runs.iter().filter_map(|(_, o)| o.as_ref()).collect();
    let violations = outs.iter().filter(|o| o.ao.worst_decrease() > 1e-6).count();
    let converged = outs
        .iter()
        .filter(|o| o.ao.termination == Termination::Converged && o.ao.iterations <= 50)
        .count();
    let iters: Vec<usize> = outs.iter().map(|o| o.ao.iterations).collect();
    rep.line(
        2,
        outs.len() == 20 && violations == 0 && converged >= 18 && took < Duration::from_secs(600),
        "monotone AO, 20 seeds",
        format!("{violations} monotonicity violations, {converged}/20 converged (need 18), iterations {iters:?}"),
        took,
    );

    // 3: tiny instances against exhaustive search.
    let t = Instant::now();
    let seeds: Vec<u64> = (0..20).collect();
    let grid = grid_suite(&seeds, 18, &AoOptions::default()).expect("grid suite");
    let worst = grid.checks.iter().map(|c| c.value).fold(0.0, f64::max);
    rep.line(
        3,
        grid.pass(),
        "N=1 M=2 AO vs 64-phase grid",
        format!("{}/20 within 5% (need 18), worst shortfall {:.2}%", grid.passed(), 100.0 * worst),
        t.elapsed(),
    );

    // 4: saturation at high power.
    let t = Instant::now();
    let mut c4 = config(32, 40.0, &[SchemeId::RisRobust], 20, &[HW, HardwareProfile::IDEAL]);
    c4.sweep = Some(Sweep { axis: SweepAxis::PMaxDbm, values: vec![40.0, 50.0] });
    let rows = cache.rows(&c4);
    let at = |p: f64, mu: f64| mean_where(&rows, |r| r.p_max_dbm == p && r.mu_t == mu);
    let (i40, i50, z40, z50) = (at(40.0, 0.01), at(50.0, 0.01), at(40.0, 0.0), at(50.0, 0.0));
    let growth = (i50 - i40) / i40;
    rep.line(
        4,
        growth < 0.10 && z50 - z40 >= 0.5,
        "rate saturates under impairments from 40 to 50 dBm",
        format!(
            "mu=0.01: {i40:.3} -> {i50:.3} ({:+.1}%, need < 10%); mu=0: {z40:.3} -> {z50:.3} ({:+.3}, need >= 0.5)",
            100.0 * growth,
            z50 - z40
        ),
        t.elapsed(),
    );

    // 5: scheme ordering at M=32, 30 dBm.
    let t = Instant::now();
    let c5 = config(32, 30.0, &[SchemeId::RisRobust, SchemeId::RisNonRobust, SchemeId::NonRisRobust], 50, &[HW]);
    let rows5 = cache.rows(&c5);
    let (d1, h1) = paired(&rows5, SchemeId::RisRobust, SchemeId::RisNonRobust);
    let (d2, h2) = paired(&rows5, SchemeId::RisRobust, SchemeId::NonRisRobust);
    rep.line(
        5,
        d1 + h1 >= 0.0 && d2 + h2 >= 0.0,
        "ris-robust >= ris-nonrobust and nonris-robust, 50 seeds",
        format!("margins {d1:.4} +/- {h1:.4} and {d2:.4} +/- {h2:.4}"),
        t.elapsed(),
    );

    // 6: receive impairments hurt more than transmit ones.
    let t = Instant::now();
    let a = HardwareProfile { mu_t: 0.01, mu_r: 0.02 };
    let b = HardwareProfile { mu_t: 0.02, mu_r: 0.01 };
    let rows6 = cache.rows(&config(32, 30.0, &[SchemeId::RisRobust], 50, &[a, b]));
    let ma = mean_where(&rows6, |r| r.mu_r == 0.02);
    let mb = mean_where(&rows6, |r| r.mu_t == 0.02);
    rep.line(
        6,
        ma < mb,
        "(mu_t, mu_r) = (0.01, 0.02) below (0.02, 0.01), 50 seeds",
        format!("{ma:.4} vs {mb:.4}"),
        t.elapsed(),
    );

    // 7: larger surfaces help.
    let t = Instant::now();
    let mut c7 = config(8, 30.0, &[SchemeId::RisRobust], 20, &[HW]);
    c7.sweep = Some(Sweep { axis: SweepAxis::NElements, values: vec![8.0, 16.0, 32.0] });
    let rows7 = cache.rows(&c7);
    let means: Vec<f64> = [8, 16, 32].iter().map(|&m| mean_where(&rows7, |r| r.m == m)).collect();
    rep.line(
        7,
        means.windows(2).all(|w| w[0] < w[1]),
        "mean rate increases over M = 8, 16, 32",
        format!("{:.4} < {:.4} < {:.4}", means[0], means[1], means[2]),
        t.elapsed(),
    );

    // 8: solver audit. KKT on every optimal subproblem of every run above;
    // tangency and the epigraph equalities on the criterion-2 runs.
    let t = Instant::now();
    let mut max_kkt: f64 = 0.0;
    let mut non_optimal = 0;
    let mut failed_runs = 0;
    for (row, out) in cache.runs.values() {
        match out {
            Some(o) => {
                let a = audit_run(&o.ao);
                max_kkt = max_kkt.max(a.max_kkt);
                non_optimal += a.non_optimal;
                all_outcomes_audited.push(a);
            }
            None => {
                failed_runs += 1;
                eprintln!("run failed: {row:?}");
            }
        }
    }
    let (mut gap, mut tan): (f64, f64) = (0.0, 0.0);
    for o in &outs {
        let a = audit_run(&o.ao);
        gap = gap.max(a.max_equality_gap);
        tan = tan.max(a.max_tangency);
    }
    rep.line(
        8,
        max_kkt <= 1e-6 && gap <= 1e-5 && tan <= 1e-5 && failed_runs == 0,
        "solver audit",
        format!(
            "{} runs: max KKT {max_kkt:.2e} (limit 1e-6), {non_optimal} non-optimal subproblems, {failed_runs} failed runs; \
             criterion-2 equality gap {gap:.2e}, tangency {tan:.2e} (limit 1e-5)",
            all_outcomes_audited.len()
        ),
        t.elapsed(),
    );

    // 9: a criterion config rerun from scratch gives the same bytes.
    let t = Instant::now();
    let first = to_csv_string(&c2_runs.iter().map(|(r, _)| r.clone()).collect::<Vec<_>>()).expect("csv");
    let again = to_csv_string(&Cache::new().rows(&c2)).expect("csv");
    rep.line(
        9,
        first == again,
        "criterion-2 config rerun is byte-identical",
        format!("{} bytes, {}", first.len(), if first == again { "identical" } else { "DIFFERENT" }),
        t.elapsed(),
    );

    println!("{}/9 criteria passed", 9 - rep.failures);
    if rep.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
