//! Oracle suites behind the `validate` subcommand: Monte-Carlo checks of the
//! rate formulas, AO against exhaustive search, and solver audits of AO runs.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::ao::{brute_force_small, run_ao, AoOptions, AoOutcome};
use crate::channel::build_scenario;
use crate::config::SystemConfig;
use crate::conic::SolveStatus;
use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, C64};
use crate::metrics::{
    equivalent_channels, mc_rate_oracle, phi_e, phi_u, sinr_e, sinr_u, HardwareProfile, ReflectVectorE,
};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Mc,
    Grid,
    Kkt,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Mc, Suite::Grid, Suite::Kkt];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Mc => "mc",
            Suite::Grid => "grid",
            Suite::Kkt => "kkt",
        })
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?} (expected mc, grid or kkt)")))
    }
}

/// One measured quantity against its limit.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(label: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { label: label.into(), value, limit, pass: value <= limit }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    /// Checks that must pass for the suite to pass.
    pub required: usize,
}

impl SuiteReport {
    pub fn passed(&self) -> usize {
        self.checks.iter().filter(|c| c.pass).count()
    }

    pub fn pass(&self) -> bool {
        self.passed() >= self.required
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {:<40} {:.3e} (limit {:.1e})", if c.pass { "ok  " } else { "FAIL" }, c.label, c.value, c.limit)?;
        }
        write!(
            f,
            "suite {}: {}/{} checks passed, {} required -> {}",
            self.suite,
            self.passed(),
            self.checks.len(),
            self.required,
            if self.pass() { "PASS" } else { "FAIL" }
        )
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(a.abs())
    }
}

/// Analytic `Phi_U`, `Phi_E` and both SINRs against the sample-level simulator,
/// worst relative error per instance. Instances cycle through
/// `mu_t, mu_r in {0, 0.01, 0.05}` on `N = 4, M = 8` scenarios with random
/// `f` at full power and random phases.
pub fn mc_suite(instances: usize, samples: usize) -> Result<SuiteReport> {
    let levels = [0.0, 0.01, 0.05];
    let sys = SystemConfig { n_antennas: 4, n_elements: 8, ..SystemConfig::default() };
    let mut checks = Vec::new();
    for i in 0..instances {
        let seed = i as u64;
        let hw = HardwareProfile { mu_t: levels[i % 3], mu_r: levels[(i / 3) % 3] };
        let (ch, noise) = build_scenario(&sys, seed)?.normalized(&sys.noise());
        let eq = equivalent_channels(&ch);
        let mut rng = substream(seed, "validate-mc");
        let f = complex_gaussian(&mut rng, 4);
        let f = &f * C64::from(sys.p_max_watt().sqrt() / f.norm());
        let phases: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let e = ReflectVectorE::from_phases(&phases);
        let est = mc_rate_oracle(&f, &e, &ch, &hw, &noise, samples, seed)?;
        let worst = [
            rel(est.noise_power_u, phi_u(&f, &e, &eq.g_u, &hw, noise.sigma2_u)?),
            rel(est.noise_power_e, phi_e(&f, &e, &eq.g_e, &hw, noise.sigma2_e)?),
            rel(est.sinr_u, sinr_u(&f, &e, &eq.g_u, &hw, noise.sigma2_u)?),
            rel(est.sinr_e, sinr_e(&f, &e, &eq.g_e, &hw, noise.sigma2_e)?),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        checks.push(Check::at_most(format!("seed {seed} mu=({}, {})", hw.mu_t, hw.mu_r), worst, 0.02));
    }
    let required = checks.len();
    Ok(SuiteReport { suite: Suite::Mc, checks, required })
}

/// AO shortfall against the 64-phase grid optimum on `N = 1, M = 2`.
/// Passes when at least `required` seeds are within 5%.
pub fn grid_suite(seeds: &[u64], required: usize, opts: &AoOptions) -> Result<SuiteReport> {
    let sys = SystemConfig { n_antennas: 1, n_elements: 2, ..SystemConfig::default() };
    let mut checks = Vec::new();
    for &seed in seeds {
        let (ch, noise) = build_scenario(&sys, seed)?.normalized(&sys.noise());
        let eq = equivalent_channels(&ch);
        let p = sys.p_max_watt();
        let out = run_ao(&eq, &noise, p, &sys.hardware, &AoOptions { seed, ..opts.clone() })?;
        let best = brute_force_small(&eq, &noise, p, &sys.hardware, 64, 400)?;
        let short = if best > 0.0 { ((best - out.secrecy_rate) / best).max(0.0) } else { 0.0 };
        checks.push(Check::at_most(format!("seed {seed} shortfall vs grid"), short, 0.05));
    }
    Ok(SuiteReport { suite: Suite::Grid, checks, required })
}

/// Worst solver and surrogate residuals over every iteration of one run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunAudit {
    /// Largest KKT residual among subproblems reported optimal.
    pub max_kkt: f64,
    pub max_equality_gap: f64,
    pub max_tangency: f64,
    /// Subproblems not reported optimal.
    pub non_optimal: usize,
}

pub fn audit_run(out: &AoOutcome) -> RunAudit {
    let mut a = RunAudit::default();
    for it in &out.audits {
        let mut sub = |status: SolveStatus, kkt: f64, gap: f64, tan: f64| {
            if status == SolveStatus::Optimal {
                a.max_kkt = a.max_kkt.max(kkt);
            } else {
                a.non_optimal += 1;
            }
            a.max_equality_gap = a.max_equality_gap.max(gap);
            a.max_tangency = a.max_tangency.max(tan);
        };
        sub(it.f_status, it.f_kkt, it.f_equality_gap, it.f_tangency);
        if let Some(s) = it.e_status {
            sub(s, it.e_kkt, it.e_equality_gap, it.e_tangency);
        }
    }
    a
}

/// AO runs at `N = 4`, `M = 8`, 30 dBm, `mu_t = mu_r = 0.01`.
pub fn audit_runs(seeds: &[u64], opts: &AoOptions) -> Result<Vec<(u64, AoOutcome)>> {
    let sys = SystemConfig { n_antennas: 4, n_elements: 8, ..SystemConfig::default() };
    seeds
        .iter()
        .map(|&seed| {
            let (ch, noise) = build_scenario(&sys, seed)?.normalized(&sys.noise());
            let eq = equivalent_channels(&ch);
            let out = run_ao(&eq, &noise, sys.p_max_watt(), &sys.hardware, &AoOptions { seed, ..opts.clone() })?;
            Ok((seed, out))
        })
        .collect()
}

/// Optimal subproblems within `1e-6` KKT, surrogate tangency and the
/// epigraph equalities within `1e-5`.
pub fn kkt_report(runs: &[(u64, AoOutcome)]) -> SuiteReport {
    let mut checks = Vec::new();
    for (seed, out) in runs {
        let a = audit_run(out);
        checks.push(Check::at_most(format!("seed {seed} kkt (optimal subproblems)"), a.max_kkt, 1e-6));
        checks.push(Check::at_most(format!("seed {seed} equality gap"), a.max_equality_gap, 1e-5));
        checks.push(Check::at_most(format!("seed {seed} tangency"), a.max_tangency, 1e-5));
    }
    let required = checks.len();
    SuiteReport { suite: Suite::Kkt, checks, required }
}

/// Runs one suite at its standard size.
pub fn run_suite(suite: Suite, opts: &AoOptions) -> Result<SuiteReport> {
    let seeds: Vec<u64> = (0..20).collect();
    match suite {
        Suite::Mc => mc_suite(10, 1_000_000),
        Suite::Grid => grid_suite(&seeds, 18, opts),
        Suite::Kkt => Ok(kkt_report(&audit_runs(&seeds, opts)?)),
    }
}
