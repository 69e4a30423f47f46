//! Reflection update for a fixed beamformer.
//!
//! With `E~ = e e^H` every power term is linear in `E~`:
//! `r1 = Tr(B1 E~) + (1 + mu_r) sigma_U^2`, `r2 = Tr(B2 E~) + (1 + mu_r) sigma_U^2`,
//! `r3 = Tr(B3 E~) + sigma_E^2`, `r4 = Tr(B4 E~) + sigma_E^2`. Dropping
//! `rank E~ = 1` leaves an SDP over the PSD cone with a unit diagonal. The
//! logs of `r2`, `r3` are replaced by tangents as in the beamformer step.
//!
//! `E~` enters the cone program through the real embedding
//! `X = [[Re E~, -Im E~], [Im E~, Re E~]]`, so `Tr(B E~) = <emb(B), X> / 2`.

use nalgebra::DMatrix;
use rand::Rng;

use crate::active::log_tangent;
use crate::conic::{self, hermitian_embed, smat, svec, svec_index, Cone, ConicProgram, SolveStatus};
use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, hermitian_eigen, CMatrix, CVector, C64};
use crate::metrics::{phi_e, phi_u, rate_difference, signal_power, BeamformerF, EquivalentChannels, HardwareProfile, NoiseConfig, ReflectVectorE};

const LN2: f64 = std::f64::consts::LN_2;

/// Eigenvalues below this are treated as zero when sampling.
pub const EIG_CLIP: f64 = 1e-9;

/// Lifted reflection matrix `E~`, Hermitian PSD with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedE {
    pub e_tilde: CMatrix,
}

impl LiftedE {
    pub fn from_vector(e: &CVector) -> Self {
        Self { e_tilde: e * e.adjoint() }
    }

    /// Recovers `E~` from its (not necessarily structured) real embedding by
    /// averaging the two copies.
    pub fn from_embedding(x: &DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        if !n.is_multiple_of(2) || x.ncols() != n {
            return Err(Error::dim("embedding must be square of even size"));
        }
        let d = n / 2;
        let e_tilde = CMatrix::from_fn(d, d, |i, j| {
            let re = 0.5 * (x[(i, j)] + x[(i + d, j + d)]);
            let im = 0.5 * (x[(i + d, j)] - x[(i, j + d)]);
            C64::new(re, im)
        });
        Ok(Self { e_tilde: crate::linalg::hermitian_part(&e_tilde) })
    }

    pub fn rank1_ratio(&self) -> f64 {
        rank1_ratio(&self.e_tilde)
    }
}

/// `lambda_max / trace`, 1 for a rank-one matrix. Zero matrix gives 0.
pub fn rank1_ratio(e_tilde: &CMatrix) -> f64 {
    let trace: f64 = (0..e_tilde.nrows()).map(|i| e_tilde[(i, i)].re).sum();
    if trace <= 0.0 {
        return 0.0;
    }
    let (vals, _) = hermitian_eigen(e_tilde);
    (vals.first().copied().unwrap_or(0.0) / trace).clamp(0.0, 1.0)
}

/// Expansion point of one reflection update: `[r1, r2, r3, r4]` at `(f, e^n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassiveTaylorPoint {
    pub r_e_n: [f64; 4],
}

impl PassiveTaylorPoint {
    pub fn new(r_e_n: [f64; 4]) -> Result<Self> {
        if r_e_n.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::domain(format!("Taylor values must be positive, got {r_e_n:?}")));
        }
        Ok(Self { r_e_n })
    }

    pub fn at(f: &CVector, e: &CVector, eq: &EquivalentChannels, hw: &HardwareProfile, noise: &NoiseConfig) -> Result<Self> {
        let pu = phi_u(f, e, &eq.g_u, hw, noise.sigma2_u)?;
        let pe = phi_e(f, e, &eq.g_e, hw, noise.sigma2_e)?;
        Self::new([pu + signal_power(f, e, &eq.g_u)?, pu, pe + signal_power(f, e, &eq.g_e)?, pe])
    }
}

/// `B1..B4` with `Tr(B_k e e^H)` equal to the noise-free part of `r_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceMatrices {
    pub b1: CMatrix,
    pub b2: CMatrix,
    pub b3: CMatrix,
    pub b4: CMatrix,
}

impl TraceMatrices {
    pub fn as_array(&self) -> [&CMatrix; 4] {
        [&self.b1, &self.b2, &self.b3, &self.b4]
    }
}

/// `G diag(|f_n|^2) G^H`.
fn distortion_gram(g: &CMatrix, f: &CVector) -> CMatrix {
    let mut scaled = g.clone();
    for (n, fn_) in f.iter().enumerate() {
        scaled.column_mut(n).scale_mut(fn_.norm());
    }
    &scaled * scaled.adjoint()
}

pub fn build_b_matrices(f: &CVector, g_u: &CMatrix, g_e: &CMatrix, hw: &HardwareProfile) -> Result<TraceMatrices> {
    hw.validate()?;
    if g_u.ncols() != f.len() || g_e.ncols() != f.len() || g_u.nrows() != g_e.nrows() {
        return Err(Error::dim("channel and beamformer sizes disagree"));
    }
    let u = g_u * f;
    let v = g_e * f;
    let su = &u * u.adjoint();
    let sv = &v * v.adjoint();
    let b2 = &su * C64::from(hw.mu_r) + distortion_gram(g_u, f) * C64::from((1.0 + hw.mu_r) * hw.mu_t);
    let b1 = &b2 + su;
    let b4 = distortion_gram(g_e, f) * C64::from(hw.mu_t);
    let b3 = &b4 + sv;
    Ok(TraceMatrices { b1, b2, b3, b4 })
}

/// Variable layout of the reflection subproblem: `svec(X)`, `p1..p4`, `r1..r4`
/// with `X` the `2d x 2d` embedding of `E~`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ELayout {
    /// `M + 1`.
    pub d: usize,
}

impl ELayout {
    pub fn svec_len(&self) -> usize {
        let n = 2 * self.d;
        n * (n + 1) / 2
    }
    pub fn n_vars(&self) -> usize {
        self.svec_len() + 8
    }
    pub fn p(&self, k: usize) -> usize {
        self.svec_len() + k
    }
    pub fn r(&self, k: usize) -> usize {
        self.svec_len() + 4 + k
    }

    pub fn pack(&self, e_tilde: &CMatrix, p: [f64; 4], r: [f64; 4]) -> Result<Vec<f64>> {
        let mut x = svec(&hermitian_embed(e_tilde)?);
        x.extend_from_slice(&p);
        x.extend_from_slice(&r);
        Ok(x)
    }

    pub fn lifted(&self, x: &[f64]) -> Result<LiftedE> {
        LiftedE::from_embedding(&smat(&x[..self.svec_len()], 2 * self.d))
    }

    pub fn p_values(&self, x: &[f64]) -> [f64; 4] {
        std::array::from_fn(|k| x[self.p(k)])
    }

    pub fn r_values(&self, x: &[f64]) -> [f64; 4] {
        std::array::from_fn(|k| x[self.r(k)])
    }

    pub fn scales(&self, r_n: [f64; 4]) -> Vec<f64> {
        let mut s = vec![1.0; self.n_vars()];
        for k in 0..4 {
            s[self.r(k)] = r_n[k];
        }
        s
    }
}

/// Row coefficients of `x -> Tr(B E~)` on `svec(X)`.
fn trace_row(b: &CMatrix) -> Result<Vec<(usize, f64)>> {
    Ok(svec(&hermitian_embed(b)?)
        .into_iter()
        .enumerate()
        .filter(|e| e.1 != 0.0)
        .map(|(i, v)| (i, 0.5 * v))
        .collect())
}

/// Builds the relaxed reflection subproblem.
///
/// Constraint order: PSD cone on `X`, unit diagonal, six linear bounds
/// (`r1`, `r2`, `r3`, `r4`, `p2`, `p3`), exponential cones for `p1` and `p4`.
pub fn build_e_subproblem(tp: &PassiveTaylorPoint, mats: &TraceMatrices, hw: &HardwareProfile, noise: &NoiseConfig) -> Result<ConicProgram> {
    PassiveTaylorPoint::new(tp.r_e_n)?;
    noise.validate()?;
    hw.validate()?;
    let d = mats.b1.nrows();
    if mats.as_array().iter().any(|b| b.nrows() != d || b.ncols() != d) || d == 0 {
        return Err(Error::dim("trace matrices must share one square size"));
    }
    let lay = ELayout { d };
    let n = 2 * d;
    let mut prog = ConicProgram::new(lay.n_vars());
    prog.objective[lay.p(0)] = 1.0;
    prog.objective[lay.p(1)] = -1.0;
    prog.objective[lay.p(2)] = -1.0;
    prog.objective[lay.p(3)] = 1.0;

    let k = lay.svec_len();
    prog.add_constraint(Cone::Psd(n), (0..k).map(|i| (i, i, 1.0)).collect(), vec![0.0; k])?;

    let mut diag = Vec::with_capacity(2 * d);
    for i in 0..d {
        diag.push((i, svec_index(i, i), 0.5));
        diag.push((i, svec_index(i + d, i + d), 0.5));
    }
    prog.add_constraint(Cone::Zero(d), diag, vec![-1.0; d])?;

    let c_u = (1.0 + hw.mu_r) * noise.sigma2_u;
    let consts = [c_u, c_u, noise.sigma2_e, noise.sigma2_e];
    // +1: r_k below the trace (r1, r4); -1: above it (r2, r3).
    let sides = [1.0, -1.0, -1.0, 1.0];
    let mut lin = Vec::new();
    let mut off = vec![0.0; 6];
    for (row, b) in mats.as_array().into_iter().enumerate() {
        let s = sides[row];
        for (j, v) in trace_row(b)? {
            lin.push((row, j, s * v));
        }
        lin.push((row, lay.r(row), -s));
        off[row] = s * consts[row];
    }
    for (i, kk) in [1usize, 2].into_iter().enumerate() {
        let row = 4 + i;
        let r_n = tp.r_e_n[kk];
        lin.push((row, lay.p(kk), 1.0));
        lin.push((row, lay.r(kk), -1.0 / (r_n * LN2)));
        off[row] = 1.0 / LN2 - r_n.log2();
    }
    prog.add_constraint(Cone::Nonneg(6), lin, off)?;

    for kk in [0usize, 3] {
        prog.add_constraint(Cone::Exponential, vec![(0, lay.p(kk), LN2), (2, lay.r(kk), 1.0)], vec![0.0, 1.0, 0.0])?;
    }
    Ok(prog)
}

/// Surrogate objective of a rank-one point `e e^H`, with every `p`, `r` at
/// its best value.
pub fn rank_one_surrogate(e: &CVector, tp: &PassiveTaylorPoint, mats: &TraceMatrices, hw: &HardwareProfile, noise: &NoiseConfig) -> f64 {
    let c_u = (1.0 + hw.mu_r) * noise.sigma2_u;
    let consts = [c_u, c_u, noise.sigma2_e, noise.sigma2_e];
    let r: [f64; 4] = std::array::from_fn(|k| crate::linalg::quad_form(mats.as_array()[k], e) + consts[k]);
    r[0].log2() - log_tangent(tp.r_e_n[1], r[1]) - log_tangent(tp.r_e_n[2], r[2]) + r[3].log2()
}

/// The current reflection vector as a point of the subproblem.
pub fn expansion_point(e: &CVector, tp: &PassiveTaylorPoint) -> Result<Vec<f64>> {
    ELayout { d: e.len() }.pack(&(e * e.adjoint()), tp.r_e_n.map(f64::log2), tp.r_e_n)
}

/// Largest gap between each `p_k` and its log bound.
pub fn equality_gap(lay: &ELayout, x: &[f64], tp_r: [f64; 4]) -> f64 {
    let p = lay.p_values(x);
    let r = lay.r_values(x);
    let targets = [r[0].log2(), log_tangent(tp_r[1], r[1]), log_tangent(tp_r[2], r[2]), r[3].log2()];
    p.iter().zip(targets).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// `exp(j arg(v_i / v_last))`, last entry exactly 1.
pub fn project_unit_modulus(v: &CVector) -> Result<ReflectVectorE> {
    let n = v.len();
    if n == 0 {
        return Err(Error::domain("empty vector"));
    }
    let last = v[n - 1];
    if last.norm() == 0.0 || !last.norm().is_finite() {
        return Err(Error::domain("last entry must be nonzero"));
    }
    let mut out = CVector::from_fn(n, |i, _| {
        let q = v[i] / last;
        if q.norm() == 0.0 || !q.norm().is_finite() {
            C64::new(1.0, 0.0)
        } else {
            q / q.norm()
        }
    });
    out[n - 1] = C64::new(1.0, 0.0);
    ReflectVectorE::new(out)
}

/// Best projected candidate and its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct Randomized {
    pub e: ReflectVectorE,
    pub value: f64,
}

/// Projects the dominant eigenvector and `count` draws from `CN(0, E~)` onto
/// the unit-modulus set and keeps the one maximizing `objective`.
pub fn gaussian_randomization<R, F>(e_tilde: &CMatrix, count: usize, rng: &mut R, objective: F) -> Result<Randomized>
where
    R: Rng + ?Sized,
    F: Fn(&ReflectVectorE) -> Result<f64>,
{
    let d = e_tilde.nrows();
    if d == 0 || e_tilde.ncols() != d {
        return Err(Error::dim("lifted matrix must be square and nonempty"));
    }
    let (vals, vecs) = hermitian_eigen(e_tilde);
    let scale = vals.iter().map(|v| v.abs()).fold(1.0, f64::max);
    if vals.last().is_some_and(|&v| v < -EIG_CLIP * scale) || vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("lifted matrix is not PSD"));
    }
    let roots: Vec<f64> = vals.iter().map(|&v| if v > EIG_CLIP { v.sqrt() } else { 0.0 }).collect();
    let factor = CMatrix::from_fn(d, d, |i, j| vecs[(i, j)] * roots[j]);

    let mut best: Option<Randomized> = None;
    let mut consider = |v: &CVector| -> Result<()> {
        let Ok(e) = project_unit_modulus(v) else { return Ok(()) };
        let value = objective(&e)?;
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(Randomized { e, value });
        }
        Ok(())
    };
    consider(&vecs.column(0).into_owned())?;
    for _ in 0..count {
        let z = complex_gaussian(rng, d);
        consider(&(&factor * z))?;
    }
    best.ok_or_else(|| Error::Internal("no candidate could be projected".into()))
}

/// The candidate if it does at least as well as the previous vector.
/// Returns the chosen vector and whether the candidate was taken.
pub fn safeguarded_update<F>(candidate: ReflectVectorE, previous: ReflectVectorE, objective: F) -> Result<(ReflectVectorE, bool)>
where
    F: Fn(&ReflectVectorE) -> Result<f64>,
{
    if objective(&candidate)? >= objective(&previous)? {
        Ok((candidate, true))
    } else {
        Ok((previous, false))
    }
}

/// Result of one reflection update.
#[derive(Debug, Clone, PartialEq)]
pub struct EStep {
    pub e: ReflectVectorE,
    pub taylor: PassiveTaylorPoint,
    pub surrogate: Option<f64>,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    pub stalled: bool,
    /// The randomized candidate passed the safeguard.
    pub accepted: bool,
    pub rank1_ratio: Option<f64>,
    pub equality_gap: f64,
    pub tangency: f64,
}

/// One SDR step on the reflection vector with `f` fixed, followed by
/// randomization and the safeguard. Candidates are ranked by `R_U - R_E`.
#[allow(clippy::too_many_arguments)]
pub fn solve_e_step<R: Rng + ?Sized>(
    f: &BeamformerF,
    e_old: &ReflectVectorE,
    eq: &EquivalentChannels,
    hw: &HardwareProfile,
    noise: &NoiseConfig,
    randomization_count: usize,
    rng: &mut R,
    tol: f64,
) -> Result<EStep> {
    let tp = PassiveTaylorPoint::at(f, e_old, eq, hw, noise)?;
    let mats = build_b_matrices(f, &eq.g_u, &eq.g_e, hw)?;
    let prog = build_e_subproblem(&tp, &mats, hw, noise)?;
    let lay = ELayout { d: e_old.len() };
    let scale = 1.0 + tp.r_e_n.iter().fold(0.0_f64, |a, b| a.max(*b));
    let tangency = prog.max_violation(&expansion_point(e_old, &tp)?) / scale;
    let scales = lay.scales(tp.r_e_n);
    let mut sol = conic::solve(&prog.with_column_scaling(&scales)?, tol);
    sol.primal.iter_mut().zip(&scales).for_each(|(x, s)| *x *= s);
    if !sol.is_optimal() {
        return Ok(EStep {
            e: e_old.clone(),
            taylor: tp,
            surrogate: None,
            status: sol.status,
            kkt_residual: sol.max_kkt_residual,
            stalled: true,
            accepted: false,
            rank1_ratio: None,
            equality_gap: 0.0,
            tangency,
        });
    }
    let lifted = lay.lifted(&sol.primal)?;
    let objective = |e: &ReflectVectorE| rate_difference(f, e, eq, hw, noise);
    let best = gaussian_randomization(&lifted.e_tilde, randomization_count, rng, objective)?;
    let (e, accepted) = safeguarded_update(best.e, e_old.clone(), objective)?;
    let taylor = PassiveTaylorPoint::at(f, &e, eq, hw, noise)?;
    Ok(EStep {
        e,
        taylor,
        surrogate: Some(sol.objective_value),
        status: sol.status,
        kkt_residual: sol.max_kkt_residual,
        stalled: false,
        accepted,
        rank1_ratio: Some(lifted.rank1_ratio()),
        equality_gap: equality_gap(&lay, &sol.primal, tp.r_e_n),
        tangency,
    })
}
