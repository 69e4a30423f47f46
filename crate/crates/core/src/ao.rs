//! Alternating optimization of the beamformer and the reflection vector.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::active::{solve_f_step, ActiveTaylorPoint};
use crate::channel::ChannelSet;
use crate::conic::SolveStatus;
use crate::error::{Error, Result};
use crate::linalg::{CVector, C64};
use crate::metrics::{
    equivalent_channels, rate_difference, secrecy_rate, BeamformerF, EquivalentChannels, HardwareProfile, NoiseConfig,
    ReflectVectorE,
};
use crate::passive::{solve_e_step, PassiveTaylorPoint};
use crate::rng::substream;

/// Convergence and randomization controls for the alternating optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoOptions {
    /// Stop once consecutive secrecy rates differ by less than this (bits/s/Hz).
    pub epsilon: f64,
    pub max_iters: usize,
    pub randomization_count: usize,
    /// KKT tolerance handed to the conic backend.
    pub conic_tol: f64,
    /// Start from random RIS phases instead of all ones.
    pub random_phase_init: bool,
    /// Seed for randomization and optional random initialization.
    pub seed: u64,
}

impl Default for AoOptions {
    fn default() -> Self {
        Self { epsilon: 1e-4, max_iters: 50, randomization_count: 200, conic_tol: 1e-7, random_phase_init: false, seed: 0 }
    }
}

impl AoOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        if !(self.conic_tol > 0.0 && self.conic_tol <= 1e-3) {
            return Err(Error::Config(format!("conic_tol must lie in (0, 1e-3], got {}", self.conic_tol)));
        }
        Ok(())
    }
}

/// Iterate of the alternating optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AoState {
    pub f: BeamformerF,
    pub e: ReflectVectorE,
    pub taylor_active: ActiveTaylorPoint,
    pub taylor_passive: PassiveTaylorPoint,
    /// `R_U - R_E` at the initial point and after every iteration.
    pub history: Vec<f64>,
    pub iter: usize,
    /// Consecutive iterations in which a subproblem failed.
    pub stalled: usize,
}

/// Diagnostics of one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationAudit {
    pub f_status: SolveStatus,
    pub f_kkt: f64,
    pub f_equality_gap: f64,
    pub f_tangency: f64,
    /// `None` when the reflection step is skipped (no RIS).
    pub e_status: Option<SolveStatus>,
    pub e_kkt: f64,
    pub e_equality_gap: f64,
    pub e_tangency: f64,
    pub rank1_ratio: Option<f64>,
    /// `R_U - R_E` after the beamformer step, before the reflection step.
    pub rate_after_f: f64,
    pub rate_after_e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIters,
    Stalled,
    /// Zero power budget, nothing to optimize.
    ZeroPower,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIters => "max-iters",
            Termination::Stalled => "stalled",
            Termination::ZeroPower => "zero-power",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoOutcome {
    pub f: BeamformerF,
    pub e: ReflectVectorE,
    pub history: Vec<f64>,
    pub audits: Vec<IterationAudit>,
    /// Clamped secrecy rate recomputed at `(f, e)` with the design hardware.
    pub secrecy_rate: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub rank1_ratio_final: Option<f64>,
}

impl AoOutcome {
    /// Largest drop between consecutive history entries (0 if none).
    pub fn worst_decrease(&self) -> f64 {
        self.history.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }
}

/// `sqrt(P) h_BU / ||h_BU||`, read off the direct row of `G_U`.
pub fn mrt_beamformer(eq: &EquivalentChannels, p_max: f64) -> BeamformerF {
    let m = eq.n_elements();
    let h = CVector::from_fn(eq.n_antennas(), |i, _| eq.g_u[(m, i)].conj());
    let norm = h.norm();
    if norm == 0.0 {
        let mut f = CVector::zeros(eq.n_antennas());
        f[0] = C64::from(p_max.sqrt());
        return BeamformerF(f);
    }
    BeamformerF(h * C64::from(p_max.sqrt() / norm))
}

/// Crude cap `log2(1 + P ||G_U||_F^2 (M + 1) / sigma_U^2)` on the rate.
pub fn rate_cap(eq: &EquivalentChannels, noise: &NoiseConfig, p_max: f64) -> f64 {
    (p_max * eq.g_u.norm_squared() * (eq.n_elements() + 1) as f64 / noise.sigma2_u).ln_1p() / std::f64::consts::LN_2
}

/// Alternates beamformer and reflection updates from MRT and `e = 1`.
pub fn run_ao(eq: &EquivalentChannels, noise: &NoiseConfig, p_max: f64, hw: &HardwareProfile, opts: &AoOptions) -> Result<AoOutcome> {
    opts.validate()?;
    hw.validate()?;
    noise.validate()?;
    if !(p_max >= 0.0 && p_max.is_finite()) {
        return Err(Error::domain(format!("power budget must be non-negative, got {p_max}")));
    }
    if eq.g_e.shape() != eq.g_u.shape() || eq.g_u.nrows() == 0 || eq.n_antennas() == 0 {
        return Err(Error::dim("user and eavesdropper channels must share one nonempty shape"));
    }
    let m = eq.n_elements();
    let e0 = if opts.random_phase_init && m > 0 {
        use rand::Rng;
        let mut rng = substream(opts.seed, "e0");
        ReflectVectorE::from_phases(&(0..m).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect::<Vec<_>>())
    } else {
        ReflectVectorE::ones(m)
    };
    if p_max == 0.0 {
        let f = BeamformerF::zeros(eq.n_antennas());
        let r = rate_difference(&f, &e0, eq, hw, noise)?;
        return Ok(AoOutcome {
            secrecy_rate: r.max(0.0),
            f,
            e: e0,
            history: vec![r],
            audits: Vec::new(),
            iterations: 0,
            termination: Termination::ZeroPower,
            rank1_ratio_final: None,
        });
    }

    let f0 = mrt_beamformer(eq, p_max);
    let mut state = AoState {
        taylor_active: ActiveTaylorPoint::at(&f0, &e0, eq, hw, noise)?,
        taylor_passive: PassiveTaylorPoint::at(&f0, &e0, eq, hw, noise)?,
        history: vec![rate_difference(&f0, &e0, eq, hw, noise)?],
        f: f0,
        e: e0,
        iter: 0,
        stalled: 0,
    };
    let mut rng = substream(opts.seed, "randomization");
    let mut audits = Vec::new();
    let mut rank1_ratio_final = None;
    let mut termination = Termination::MaxIters;

    while state.iter < opts.max_iters {
        state.iter += 1;
        let fs = solve_f_step(&state.f, &state.e, eq, hw, noise, p_max, opts.conic_tol)?;
        state.f = fs.f;
        state.taylor_active = fs.taylor;
        let rate_after_f = rate_difference(&state.f, &state.e, eq, hw, noise)?;
        let mut audit = IterationAudit {
            f_status: fs.status,
            f_kkt: fs.kkt_residual,
            f_equality_gap: fs.equality_gap,
            f_tangency: fs.tangency,
            e_status: None,
            e_kkt: 0.0,
            e_equality_gap: 0.0,
            e_tangency: 0.0,
            rank1_ratio: None,
            rate_after_f,
            rate_after_e: rate_after_f,
        };
        let mut stalled = fs.stalled;
        if m > 0 {
            let es = solve_e_step(&state.f, &state.e, eq, hw, noise, opts.randomization_count, &mut rng, opts.conic_tol)?;
            stalled |= es.stalled;
            audit.e_status = Some(es.status);
            audit.e_kkt = es.kkt_residual;
            audit.e_equality_gap = es.equality_gap;
            audit.e_tangency = es.tangency;
            audit.rank1_ratio = es.rank1_ratio;
            if es.rank1_ratio.is_some() {
                rank1_ratio_final = es.rank1_ratio;
            }
            state.e = es.e;
            state.taylor_passive = es.taylor;
            audit.rate_after_e = rate_difference(&state.f, &state.e, eq, hw, noise)?;
        } else {
            state.taylor_passive = PassiveTaylorPoint::at(&state.f, &state.e, eq, hw, noise)?;
        }
        let prev = *state.history.last().expect("history starts non-empty");
        state.history.push(audit.rate_after_e);
        audits.push(audit);

        if stalled {
            state.stalled += 1;
            if state.stalled >= 2 {
                termination = Termination::Stalled;
                break;
            }
            continue;
        }
        state.stalled = 0;
        if (state.history[state.history.len() - 1] - prev).abs() < opts.epsilon {
            termination = Termination::Converged;
            break;
        }
    }

    Ok(AoOutcome {
        secrecy_rate: secrecy_rate(&state.f, &state.e, eq, hw, noise)?,
        f: state.f,
        e: state.e,
        history: state.history,
        audits,
        iterations: state.iter,
        termination,
        rank1_ratio_final,
    })
}

/// The four compared designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeId {
    #[serde(rename = "ris-robust")]
    RisRobust,
    #[serde(rename = "nonris-robust")]
    NonRisRobust,
    #[serde(rename = "ris-nonrobust")]
    RisNonRobust,
    #[serde(rename = "nonris-nonrobust")]
    NonRisNonRobust,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [SchemeId::RisRobust, SchemeId::NonRisRobust, SchemeId::RisNonRobust, SchemeId::NonRisNonRobust];

    pub fn uses_ris(self) -> bool {
        matches!(self, SchemeId::RisRobust | SchemeId::RisNonRobust)
    }

    pub fn is_robust(self) -> bool {
        matches!(self, SchemeId::RisRobust | SchemeId::NonRisRobust)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::RisRobust => "ris-robust",
            SchemeId::NonRisRobust => "nonris-robust",
            SchemeId::RisNonRobust => "ris-nonrobust",
            SchemeId::NonRisNonRobust => "nonris-nonrobust",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeOutcome {
    /// Clamped secrecy rate under the true hardware.
    pub secrecy_rate: f64,
    pub ao: AoOutcome,
}

/// Designs with the scheme's assumptions, then evaluates under `hw_true`.
pub fn run_scheme(
    scheme: SchemeId,
    channels: &ChannelSet,
    noise: &NoiseConfig,
    p_max: f64,
    hw_true: &HardwareProfile,
    opts: &AoOptions,
) -> Result<SchemeOutcome> {
    channels.validate()?;
    let channels = if scheme.uses_ris() { channels.clone() } else { channels.without_ris() };
    let eq = equivalent_channels(&channels);
    let hw_design = if scheme.is_robust() { *hw_true } else { HardwareProfile::IDEAL };
    let ao = run_ao(&eq, noise, p_max, &hw_design, opts)?;
    let secrecy_rate = secrecy_rate(&ao.f, &ao.e, &eq, hw_true, noise)?;
    Ok(SchemeOutcome { secrecy_rate, ao })
}

/// Grid optimum of the clamped secrecy rate for a single-antenna BS and at
/// most three elements: `phase_grid_size` phases per element and
/// `power_grid_size + 1` power levels in `[0, P]`.
pub fn brute_force_small(
    eq: &EquivalentChannels,
    noise: &NoiseConfig,
    p_max: f64,
    hw: &HardwareProfile,
    phase_grid_size: usize,
    power_grid_size: usize,
) -> Result<f64> {
    let m = eq.n_elements();
    if eq.n_antennas() != 1 || m > 3 {
        return Err(Error::domain(format!("brute force needs N = 1 and M <= 3, got N = {}, M = {m}", eq.n_antennas())));
    }
    if phase_grid_size == 0 || power_grid_size == 0 || !(p_max >= 0.0) {
        return Err(Error::domain("grid sizes must be positive and the budget non-negative"));
    }
    let step = std::f64::consts::TAU / phase_grid_size as f64;
    let powers: Vec<f64> = (0..=power_grid_size).map(|i| p_max * i as f64 / power_grid_size as f64).collect();
    let mut best = 0.0_f64;
    let mut idx = vec![0usize; m];
    loop {
        let phases: Vec<f64> = idx.iter().map(|&k| k as f64 * step).collect();
        let e = ReflectVectorE::from_phases(&phases);
        for &p in &powers {
            let f = CVector::from_element(1, C64::from(p.sqrt()));
            best = best.max(secrecy_rate(&f, &e, eq, hw, noise)?);
        }
        let mut k = 0;
        loop {
            if k == m {
                return Ok(best);
            }
            idx[k] += 1;
            if idx[k] < phase_grid_size {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}
