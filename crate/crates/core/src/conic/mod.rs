//! Solver-agnostic cone programs.
//!
//! A [`ConicProgram`] maximizes `c^T x` over `n_vars` real variables subject
//! to affine cone memberships `A_k x + b_k ∈ K_k`. Supported cones are the zero
//! cone, the nonnegative orthant, second-order cones `{(t, u): ||u|| <= t}`,
//! positive-semidefinite cones in scaled-svec form, and the exponential cone
//! `cl{(x, y, z): y > 0, y exp(x / y) <= z}`.
//!
//! PSD memberships use `svec`: the upper triangle of a symmetric `n x n`
//! matrix stacked column by column, off-diagonal entries multiplied by
//! `sqrt(2)`, so that `<svec(A), svec(B)> = tr(AB)`. Hermitian blocks enter
//! through their real symmetric embedding, see [`hermitian_embed`].
//!
//! Dual variables `z_k ∈ K_k^*` satisfy `c + sum_k A_k^T z_k = 0` at
//! optimality, with dual objective `sum_k b_k^T z_k >= c^T x`.

mod barrier;
mod cones;

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_defect, real_eigenvalues, CMatrix};

pub use barrier::{BarrierSettings, BarrierSolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// `{0}^d`, i.e. equality constraints.
    Zero(usize),
    Nonneg(usize),
    /// Second-order cone of total dimension `d` (head plus `d - 1` tail entries).
    SecondOrder(usize),
    /// PSD cone over `n x n` symmetric matrices, `n (n + 1) / 2` rows.
    Psd(usize),
    Exponential,
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(d) | Cone::Nonneg(d) | Cone::SecondOrder(d) => d,
            Cone::Psd(n) => n * (n + 1) / 2,
            Cone::Exponential => 3,
        }
    }

    fn label(&self) -> String {
        match *self {
            Cone::Zero(d) => format!("zero {d}"),
            Cone::Nonneg(d) => format!("nonneg {d}"),
            Cone::SecondOrder(d) => format!("soc {d}"),
            Cone::Psd(n) => format!("psd {n}"),
            Cone::Exponential => "exp 3".to_string(),
        }
    }
}

/// Real sparse matrix in triplet form; duplicate entries are summed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(nrows: usize, ncols: usize, entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = entries.iter().find(|&&(r, c, _)| r >= nrows || c >= ncols) {
            return Err(Error::dim(format!("entry ({r}, {c}) outside {nrows} x {ncols}")));
        }
        if entries.iter().any(|e| !e.2.is_finite()) {
            return Err(Error::domain("non-finite matrix entry"));
        }
        Ok(Self { nrows, ncols, entries })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        for &(r, c, v) in &self.entries {
            out[r] += v * x[c];
        }
        out
    }

    /// `out += A^T z`.
    pub fn tmul_acc(&self, z: &[f64], out: &mut [f64]) {
        for &(r, c, v) in &self.entries {
            out[c] += v * z[r];
        }
    }

    /// Sums duplicates and drops explicit zeros; rows sorted.
    pub fn compressed(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.nrows];
        for &(r, c, v) in &self.entries {
            rows[r].push((c, v));
        }
        for row in &mut rows {
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(c, v) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += v,
                    _ => merged.push((c, v)),
                }
            }
            merged.retain(|e| e.1 != 0.0);
            *row = merged;
        }
        rows
    }
}

/// `A x + b ∈ cone`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeConstraint {
    pub cone: Cone,
    pub map: SparseMatrix,
    pub offset: Vec<f64>,
}

impl ConeConstraint {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut s = self.map.mul_vec(x);
        for (si, bi) in s.iter_mut().zip(&self.offset) {
            *si += bi;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub n_vars: usize,
    /// Linear objective, maximized.
    pub objective: Vec<f64>,
    pub constraints: Vec<ConeConstraint>,
}

impl ConicProgram {
    pub fn new(n_vars: usize) -> Self {
        Self { n_vars, objective: vec![0.0; n_vars], constraints: Vec::new() }
    }

    /// Appends `sum_{(r,c,v)} v x_c e_r + offset ∈ cone` and returns its index.
    pub fn add_constraint(&mut self, cone: Cone, entries: Vec<(usize, usize, f64)>, offset: Vec<f64>) -> Result<usize> {
        let d = cone.dim();
        if offset.len() != d {
            return Err(Error::dim(format!("offset has {} rows, cone {:?} needs {d}", offset.len(), cone)));
        }
        if offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite offset"));
        }
        let map = SparseMatrix::new(d, self.n_vars, entries)?;
        self.constraints.push(ConeConstraint { cone, map, offset });
        Ok(self.constraints.len() - 1)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Substitutes `x = diag(scales) x'`: column `j` of every map and the
    /// objective are multiplied by `scales[j]`. Solving the result and
    /// multiplying back recovers a solution of `self`; duals are unchanged.
    pub fn with_column_scaling(&self, scales: &[f64]) -> Result<ConicProgram> {
        if scales.len() != self.n_vars {
            return Err(Error::dim("one scale per variable required"));
        }
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::domain("column scales must be positive"));
        }
        let mut out = self.clone();
        for (c, s) in out.objective.iter_mut().zip(scales) {
            *c *= s;
        }
        for con in &mut out.constraints {
            for e in &mut con.map.entries {
                e.2 *= scales[e.1];
            }
        }
        Ok(out)
    }

    /// Largest cone violation of `A_k x + b_k` over all constraints, each
    /// scaled by `1 + ||b_k||_inf`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| cones::primal_violation(c.cone, &c.eval(x)) / (1.0 + inf_norm(&c.offset)))
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.n_vars {
            return Err(Error::dim("objective length differs from n_vars"));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite objective coefficient"));
        }
        for (k, c) in self.constraints.iter().enumerate() {
            if c.map.ncols != self.n_vars || c.map.nrows != c.cone.dim() || c.offset.len() != c.cone.dim() {
                return Err(Error::dim(format!("constraint {k} has inconsistent dimensions")));
            }
            if let Cone::Psd(0) | Cone::SecondOrder(0) = c.cone {
                return Err(Error::dim(format!("constraint {k} has an empty cone")));
            }
        }
        Ok(())
    }

    /// Writes the program as sparse triplets, one `row col value` line per
    /// nonzero of the stacked constraint matrix. Cone layout, objective and
    /// offsets are recorded on `#` comment lines.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# n_vars {}", self.n_vars)?;
        for (j, c) in self.objective.iter().enumerate().filter(|e| *e.1 != 0.0) {
            writeln!(w, "# c {j} {c:e}")?;
        }
        let mut row0 = 0;
        for (k, con) in self.constraints.iter().enumerate() {
            let d = con.cone.dim();
            writeln!(w, "# cone {k} {} rows {}..{}", con.cone.label(), row0, row0 + d)?;
            for (i, b) in con.offset.iter().enumerate().filter(|e| *e.1 != 0.0) {
                writeln!(w, "# b {} {b:e}", row0 + i)?;
            }
            let mut entries = con.map.entries.clone();
            entries.sort_by_key(|e| (e.0, e.1));
            for (r, c, v) in entries {
                writeln!(w, "{} {} {:e}", row0 + r, c, v)?;
            }
            row0 += d;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalFailure => "numerical-failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    /// One dual vector per constraint, in constraint order.
    pub duals: Vec<Vec<f64>>,
    pub objective_value: f64,
    pub max_kkt_residual: f64,
    pub iterations: usize,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub(crate) fn failed(status: SolveStatus, p: &ConicProgram, iterations: usize) -> Self {
        Self {
            status,
            primal: vec![0.0; p.n_vars],
            duals: p.constraints.iter().map(|c| vec![0.0; c.cone.dim()]).collect(),
            objective_value: f64::NAN,
            max_kkt_residual: f64::INFINITY,
            iterations,
        }
    }
}

/// Anything that can discharge a [`ConicProgram`].
pub trait ConicSolver {
    fn solve(&self, program: &ConicProgram, tol: f64) -> SolveResult;
}

/// Solves with the built-in barrier backend.
pub fn solve(program: &ConicProgram, tol: f64) -> SolveResult {
    BarrierSolver::default().solve(program, tol)
}

/// Residuals of one constraint, scaled by `1 + ||b_k||_inf` (primal) and
/// `1 + ||c||_inf` (dual).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintResidual {
    pub primal_violation: f64,
    pub dual_violation: f64,
    /// `z_k^T (A_k x + b_k)`, scaled like the gap.
    pub complementarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    pub constraints: Vec<ConstraintResidual>,
    /// `||c + sum A_k^T z_k||_inf / (1 + ||c||_inf)`.
    pub stationarity: f64,
    /// `|dual objective - primal objective| / (1 + |primal| + |dual|)`.
    pub gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.constraints
            .iter()
            .flat_map(|c| [c.primal_violation, c.dual_violation, c.complementarity])
            .chain([self.stationarity, self.gap])
            .fold(0.0, f64::max)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Recomputes primal feasibility, dual feasibility, stationarity and gap of a
/// candidate solution straight from the program data.
pub fn check_kkt(p: &ConicProgram, r: &SolveResult) -> KktReport {
    let c_scale = 1.0 + inf_norm(&p.objective);
    let primal_objective = p.objective_value(&r.primal);
    let mut dual_objective = 0.0;
    let mut stationarity = p.objective.clone();
    let mut parts = Vec::with_capacity(p.constraints.len());
    let mut raw_compl = Vec::with_capacity(p.constraints.len());

    for (con, z) in p.constraints.iter().zip(&r.duals) {
        let s = con.eval(&r.primal);
        let b_scale = 1.0 + inf_norm(&con.offset);
        con.map.tmul_acc(z, &mut stationarity);
        dual_objective += con.offset.iter().zip(z).map(|(b, zi)| b * zi).sum::<f64>();
        raw_compl.push(s.iter().zip(z).map(|(a, b)| a * b).sum::<f64>());
        parts.push(ConstraintResidual {
            primal_violation: cones::primal_violation(con.cone, &s) / b_scale,
            dual_violation: cones::dual_violation(con.cone, z) / c_scale,
            complementarity: 0.0,
        });
    }
    let gap_scale = 1.0 + primal_objective.abs() + dual_objective.abs();
    for (part, cv) in parts.iter_mut().zip(raw_compl) {
        part.complementarity = cv.abs() / gap_scale;
    }
    let stationarity = inf_norm(&stationarity) / c_scale;
    let gap = (dual_objective - primal_objective).abs() / gap_scale;
    let sane = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    KktReport {
        constraints: parts
            .into_iter()
            .map(|c| ConstraintResidual {
                primal_violation: sane(c.primal_violation),
                dual_violation: sane(c.dual_violation),
                complementarity: sane(c.complementarity),
            })
            .collect(),
        stationarity: sane(stationarity),
        gap: sane(gap),
        primal_objective,
        dual_objective,
    }
}

/// Real symmetric embedding `[[Re H, -Im H], [Im H, Re H]]` of a Hermitian matrix.
pub fn hermitian_embed(h: &CMatrix) -> Result<DMatrix<f64>> {
    let scale = 1.0 + h.iter().fold(0.0_f64, |a, c| a.max(c.norm()));
    if hermitian_defect(h) > 1e-9 * scale {
        return Err(Error::domain("matrix is not Hermitian"));
    }
    let d = h.nrows();
    let mut out = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let v = h[(i, j)];
            out[(i, j)] = v.re;
            out[(i + d, j + d)] = v.re;
            out[(i, j + d)] = -v.im;
            out[(i + d, j)] = v.im;
        }
    }
    Ok(out)
}

/// Position of `(i, j)`, `i <= j`, in the svec layout of an `n x n` matrix.
pub fn svec_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = vec![0.0; n * (n + 1) / 2];
    for j in 0..n {
        for i in 0..=j {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[svec_index(i, j)] = if i == j { v } else { v * std::f64::consts::SQRT_2 };
        }
    }
    out
}

pub fn smat(v: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let x = v[svec_index(i, j)];
            if i == j {
                m[(i, i)] = x;
            } else {
                let y = x * std::f64::consts::FRAC_1_SQRT_2;
                m[(i, j)] = y;
                m[(j, i)] = y;
            }
        }
    }
    m
}

/// Smallest eigenvalue of a real symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    real_eigenvalues(m).first().copied().unwrap_or(0.0)
}
