//! Transmit beamformer update for a fixed reflection vector.
//!
//! The rate difference is split as `log2 r1 - log2 r2 - log2 r3 + log2 r4`
//! with `r1 = Phi_U + |e^H G_U f|^2`, `r2 = Phi_U`, `r3 = Phi_E + |e^H G_E f|^2`
//! and `r4 = Phi_E`. The two concave quadratics bounding `r1` and `r4` from
//! above are linearized around the previous beamformer, and the two logs
//! bounding `p2`, `p3` from above are replaced by their tangents. What is left
//! is convex: a second-order cone for the power budget, rotated cones for the
//! convex quadratics and exponential cones for `p1 <= log2 r1`, `p4 <= log2 r4`.

use crate::conic::{self, Cone, ConicProgram, SolveStatus};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64};
use crate::metrics::{
    phi_e, phi_u, rate_difference, signal_power, BeamformerF, EquivalentChannels, HardwareProfile, NoiseConfig,
    ReflectVectorE,
};

const LN2: f64 = std::f64::consts::LN_2;

/// Quadratic forms `f^H A1 f = Phi_U + |e^H G_U f|^2 - (1 + mu_r) sigma_U^2`
/// and `f^H A2 f = Phi_E - sigma_E^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpairmentMatrices {
    pub a1: CMatrix,
    pub a2: CMatrix,
}

fn effective_row(g: &CMatrix, e: &CVector) -> Result<CVector> {
    if g.nrows() != e.len() {
        return Err(Error::dim(format!("G has {} rows, e has {} entries", g.nrows(), e.len())));
    }
    Ok(g.ad_mul(e))
}

pub fn build_a_matrices(e: &ReflectVectorE, g_u: &CMatrix, g_e: &CMatrix, hw: &HardwareProfile) -> Result<ImpairmentMatrices> {
    hw.validate()?;
    let a = effective_row(g_u, e)?;
    let b = effective_row(g_e, e)?;
    let n = a.len();
    let mut a1 = &a * a.adjoint() * C64::from(1.0 + hw.mu_r);
    let mut a2 = CMatrix::zeros(n, n);
    for i in 0..n {
        a1[(i, i)] += C64::from((1.0 + hw.mu_r) * hw.mu_t * a[i].norm_sqr());
        a2[(i, i)] = C64::from(hw.mu_t * b[i].norm_sqr());
    }
    Ok(ImpairmentMatrices { a1, a2 })
}

/// Expansion point of one beamformer update.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveTaylorPoint {
    pub f_n: CVector,
    /// `[r1, r2, r3, r4]` evaluated at the expansion point.
    pub r_f_n: [f64; 4],
}

impl ActiveTaylorPoint {
    pub fn new(f_n: CVector, r_f_n: [f64; 4]) -> Result<Self> {
        if r_f_n.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::domain(format!("Taylor values must be positive, got {r_f_n:?}")));
        }
        if f_n.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::domain("non-finite expansion beamformer"));
        }
        Ok(Self { f_n, r_f_n })
    }

    /// Evaluates the four power terms at `(f, e)`.
    pub fn at(f: &CVector, e: &CVector, eq: &EquivalentChannels, hw: &HardwareProfile, noise: &NoiseConfig) -> Result<Self> {
        let pu = phi_u(f, e, &eq.g_u, hw, noise.sigma2_u)?;
        let pe = phi_e(f, e, &eq.g_e, hw, noise.sigma2_e)?;
        let r = [pu + signal_power(f, e, &eq.g_u)?, pu, pe + signal_power(f, e, &eq.g_e)?, pe];
        Self::new(f.clone(), r)
    }
}

/// Variable layout of the beamformer subproblem: `Re f`, `Im f`, `p1..p4`, `r1..r4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FLayout {
    pub n: usize,
}

impl FLayout {
    pub fn n_vars(&self) -> usize {
        2 * self.n + 8
    }
    pub fn f_re(&self, i: usize) -> usize {
        i
    }
    pub fn f_im(&self, i: usize) -> usize {
        self.n + i
    }
    /// `k` in `0..4` for `p1..p4`.
    pub fn p(&self, k: usize) -> usize {
        2 * self.n + k
    }
    pub fn r(&self, k: usize) -> usize {
        2 * self.n + 4 + k
    }

    pub fn pack(&self, f: &CVector, p: [f64; 4], r: [f64; 4]) -> Vec<f64> {
        let mut x = vec![0.0; self.n_vars()];
        for (i, c) in f.iter().enumerate() {
            x[self.f_re(i)] = c.re;
            x[self.f_im(i)] = c.im;
        }
        for k in 0..4 {
            x[self.p(k)] = p[k];
            x[self.r(k)] = r[k];
        }
        x
    }

    pub fn beamformer(&self, x: &[f64]) -> CVector {
        CVector::from_fn(self.n, |i, _| C64::new(x[self.f_re(i)], x[self.f_im(i)]))
    }

    pub fn p_values(&self, x: &[f64]) -> [f64; 4] {
        std::array::from_fn(|k| x[self.p(k)])
    }

    pub fn r_values(&self, x: &[f64]) -> [f64; 4] {
        std::array::from_fn(|k| x[self.r(k)])
    }

    /// Column scales making every variable O(1) near the expansion point.
    pub fn scales(&self, p_max: f64, r_n: [f64; 4]) -> Vec<f64> {
        let mut s = vec![1.0; self.n_vars()];
        for i in 0..self.n {
            s[self.f_re(i)] = p_max.sqrt();
            s[self.f_im(i)] = p_max.sqrt();
        }
        for k in 0..4 {
            s[self.r(k)] = r_n[k];
        }
        s
    }
}

/// `log2(r_n) + (r - r_n) / (r_n ln 2)`.
pub fn log_tangent(r_n: f64, r: f64) -> f64 {
    r_n.log2() + (r - r_n) / (r_n * LN2)
}

/// Entries of `2 Re(w)` and `2 Im(w)` for `w = sum_n l_n f_n`, appended at rows `row`, `row + 1`.
fn complex_row(out: &mut Vec<(usize, usize, f64)>, lay: &FLayout, row: usize, coeffs: &[(usize, C64)], scale: f64) {
    for &(n, l) in coeffs {
        if l.re != 0.0 {
            out.push((row, lay.f_re(n), scale * l.re));
            out.push((row + 1, lay.f_im(n), scale * l.re));
        }
        if l.im != 0.0 {
            out.push((row, lay.f_im(n), -scale * l.im));
            out.push((row + 1, lay.f_re(n), scale * l.im));
        }
    }
}

/// `||L f||^2 + c <= r` as a rotated cone
/// `((r - c)/k + k, (r - c)/k - k, 2 L f) ∈ SOC` with `k` near `sqrt(r_n)`.
fn push_quadratic_cap(prog: &mut ConicProgram, lay: &FLayout, rows: &[Vec<(usize, C64)>], c: f64, r_var: usize, r_n: f64) -> Result<()> {
    let k = r_n.max(1e-300).sqrt();
    let rows: Vec<&Vec<(usize, C64)>> = rows.iter().filter(|r| r.iter().any(|(_, l)| l.norm_sqr() > 0.0)).collect();
    let dim = 2 + 2 * rows.len();
    let mut entries = vec![(0, r_var, 1.0 / k), (1, r_var, 1.0 / k)];
    for (i, coeffs) in rows.iter().enumerate() {
        complex_row(&mut entries, lay, 2 + 2 * i, coeffs, 2.0);
    }
    let mut offset = vec![0.0; dim];
    offset[0] = -c / k + k;
    offset[1] = -c / k - k;
    prog.add_constraint(Cone::SecondOrder(dim), entries, offset)?;
    Ok(())
}

/// Builds the convex beamformer subproblem around `tp`.
///
/// Constraint order: power cone, `Phi_U <= r2`, `Phi_E + |s_E|^2 <= r3`, the
/// four linear bounds (`r1`, `r4`, `p2`, `p3`), then the exponential cones
/// for `p1` and `p4`.
#[allow(clippy::too_many_arguments)]
pub fn build_f_subproblem(
    tp: &ActiveTaylorPoint,
    mats: &ImpairmentMatrices,
    g_u: &CMatrix,
    g_e: &CMatrix,
    e: &ReflectVectorE,
    hw: &HardwareProfile,
    noise: &NoiseConfig,
    p_max: f64,
) -> Result<ConicProgram> {
    noise.validate()?;
    hw.validate()?;
    ActiveTaylorPoint::new(tp.f_n.clone(), tp.r_f_n)?;
    if !(p_max > 0.0 && p_max.is_finite()) {
        return Err(Error::domain(format!("power budget must be positive, got {p_max}")));
    }
    let n = tp.f_n.len();
    if g_u.ncols() != n || g_e.ncols() != n || mats.a1.nrows() != n || mats.a2.nrows() != n {
        return Err(Error::dim("beamformer length does not match the channel"));
    }
    let a = effective_row(g_u, e)?;
    let b = effective_row(g_e, e)?;
    let lay = FLayout { n };
    let mut prog = ConicProgram::new(lay.n_vars());
    prog.objective[lay.p(0)] = 1.0;
    prog.objective[lay.p(1)] = -1.0;
    prog.objective[lay.p(2)] = -1.0;
    prog.objective[lay.p(3)] = 1.0;

    let mut entries = Vec::with_capacity(2 * n);
    for i in 0..n {
        entries.push((1 + i, lay.f_re(i), 1.0));
        entries.push((1 + n + i, lay.f_im(i), 1.0));
    }
    let mut offset = vec![0.0; 2 * n + 1];
    offset[0] = p_max.sqrt();
    prog.add_constraint(Cone::SecondOrder(2 * n + 1), entries, offset)?;

    let c_u = (1.0 + hw.mu_r) * noise.sigma2_u;
    let [_, r2n, r3n, _] = tp.r_f_n;
    let diag_rows = |v: &CVector, w: f64| -> Vec<Vec<(usize, C64)>> {
        (0..n).map(|i| vec![(i, C64::from(w.sqrt() * v[i].norm()))]).collect()
    };
    let mut rows_u = vec![a.iter().enumerate().map(|(i, ai)| (i, ai.conj() * hw.mu_r.sqrt())).collect()];
    rows_u.extend(diag_rows(&a, (1.0 + hw.mu_r) * hw.mu_t));
    push_quadratic_cap(&mut prog, &lay, &rows_u, c_u, lay.r(1), r2n)?;
    let mut rows_e = vec![b.iter().enumerate().map(|(i, bi)| (i, bi.conj())).collect()];
    rows_e.extend(diag_rows(&b, hw.mu_t));
    push_quadratic_cap(&mut prog, &lay, &rows_e, noise.sigma2_e, lay.r(2), r3n)?;

    let mut lin = Vec::new();
    let mut lin_off = vec![0.0; 4];
    for (row, (mat, c, r_idx)) in [(&mats.a1, c_u, 0usize), (&mats.a2, noise.sigma2_e, 3usize)].into_iter().enumerate() {
        let v = mat * &tp.f_n;
        let q = tp.f_n.dotc(&v).re;
        for i in 0..n {
            lin.push((row, lay.f_re(i), 2.0 * v[i].re));
            lin.push((row, lay.f_im(i), 2.0 * v[i].im));
        }
        lin.push((row, lay.r(r_idx), -1.0));
        lin_off[row] = c - q;
    }
    for (row, (p_idx, r_n)) in [(1usize, r2n), (2usize, r3n)].into_iter().enumerate() {
        let row = row + 2;
        lin.push((row, lay.p(p_idx), 1.0));
        lin.push((row, lay.r(p_idx), -1.0 / (r_n * LN2)));
        lin_off[row] = 1.0 / LN2 - r_n.log2();
    }
    prog.add_constraint(Cone::Nonneg(4), lin, lin_off)?;

    for k in [0usize, 3] {
        prog.add_constraint(Cone::Exponential, vec![(0, lay.p(k), LN2), (2, lay.r(k), 1.0)], vec![0.0, 1.0, 0.0])?;
    }
    Ok(prog)
}

/// The expansion point itself as a point of the subproblem: `p` at the log
/// values and `r` at the Taylor values.
pub fn expansion_point(tp: &ActiveTaylorPoint) -> Vec<f64> {
    let lay = FLayout { n: tp.f_n.len() };
    let p = tp.r_f_n.map(f64::log2);
    lay.pack(&tp.f_n, p, tp.r_f_n)
}

/// Largest gap between each `p_k` and the log bound it should meet with
/// equality at an optimum.
pub fn equality_gap(lay: &FLayout, x: &[f64], tp_r: [f64; 4]) -> f64 {
    let p = lay.p_values(x);
    let r = lay.r_values(x);
    let targets = [r[0].log2(), log_tangent(tp_r[1], r[1]), log_tangent(tp_r[2], r[2]), r[3].log2()];
    p.iter().zip(targets).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Result of one beamformer update.
#[derive(Debug, Clone, PartialEq)]
pub struct FStep {
    pub f: BeamformerF,
    /// Taylor point refreshed at the returned beamformer.
    pub taylor: ActiveTaylorPoint,
    /// Optimal surrogate value, `None` when the solve failed.
    pub surrogate: Option<f64>,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    /// The solver failed and `f` is the previous iterate.
    pub stalled: bool,
    /// The solution lowered the true objective and was discarded.
    pub rejected: bool,
    pub equality_gap: f64,
    /// Constraint violation of the expansion point, relative to its scale.
    pub tangency: f64,
}

/// One SCA step on the beamformer with `e` fixed.
pub fn solve_f_step(
    f_old: &BeamformerF,
    e: &ReflectVectorE,
    eq: &EquivalentChannels,
    hw: &HardwareProfile,
    noise: &NoiseConfig,
    p_max: f64,
    tol: f64,
) -> Result<FStep> {
    let tp = ActiveTaylorPoint::at(f_old, e, eq, hw, noise)?;
    let mats = build_a_matrices(e, &eq.g_u, &eq.g_e, hw)?;
    let prog = build_f_subproblem(&tp, &mats, &eq.g_u, &eq.g_e, e, hw, noise, p_max)?;
    let lay = FLayout { n: f_old.len() };
    let scale = 1.0 + tp.r_f_n.iter().fold(0.0_f64, |a, b| a.max(*b));
    let tangency = prog.max_violation(&expansion_point(&tp)) / scale;
    let scales = lay.scales(p_max, tp.r_f_n);
    let mut sol = conic::solve(&prog.with_column_scaling(&scales)?, tol);
    sol.primal.iter_mut().zip(&scales).for_each(|(x, s)| *x *= s);
    let old_value = rate_difference(f_old, e, eq, hw, noise)?;
    if !sol.is_optimal() {
        return Ok(FStep {
            f: f_old.clone(),
            taylor: tp,
            surrogate: None,
            status: sol.status,
            kkt_residual: sol.max_kkt_residual,
            stalled: true,
            rejected: false,
            equality_gap: 0.0,
            tangency,
        });
    }
    let mut f_new = lay.beamformer(&sol.primal);
    let power = f_new.norm_squared();
    if power > p_max {
        f_new *= C64::from((p_max / power).sqrt());
    }
    let new_value = rate_difference(&f_new, e, eq, hw, noise)?;
    let rejected = new_value < old_value;
    let f = if rejected { f_old.clone() } else { BeamformerF(f_new) };
    let taylor = ActiveTaylorPoint::at(&f, e, eq, hw, noise)?;
    Ok(FStep {
        f,
        taylor,
        surrogate: Some(sol.objective_value),
        status: sol.status,
        kkt_residual: sol.max_kkt_residual,
        stalled: false,
        rejected,
        equality_gap: equality_gap(&lay, &sol.primal, tp.r_f_n),
        tangency,
    })
}
