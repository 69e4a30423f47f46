//! Primal barrier interior-point backend.
//!
//! The program is rewritten in standard form `min ĉ^T x̂, Â x̂ = b̂` where each
//! standard variable is either free or belongs to one cone block. Constraints
//! whose map is a plain selection of unused variables type those variables
//! directly; every other cone membership gets a slack block. Each barrier
//! parameter `t` is followed by infeasible-start Newton centering on
//! `t ĉ^T x̂ + F(x̂)`; duals come from the centering multipliers.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::cones::{self, Scaling};
use super::{check_kkt, Cone, ConicProgram, ConicSolver, SolveResult, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSettings {
    pub t0: f64,
    /// Barrier parameter growth per outer iteration.
    pub mu: f64,
    /// Centering stops once `lambda^2 / 2` falls below this.
    pub center_tol: f64,
    pub max_newton: usize,
    pub max_t: f64,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        Self { t0: 1.0, mu: 12.0, center_tol: 1e-3, max_newton: 600, max_t: 1e15 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BarrierSolver {
    pub settings: BarrierSettings,
}

enum Source {
    Rows(Range<usize>),
    Block(usize),
}

struct Block {
    cone: Cone,
    start: usize,
    dim: usize,
    /// Rows of `Â` touching this block, entries in block-local indices.
    rows: Vec<(usize, Vec<(usize, f64)>)>,
    /// For slack blocks, the defining rows; local index `i` is row `start + i`.
    slack_rows: Option<Range<usize>>,
}

struct StdForm {
    n: usize,
    c: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    blocks: Vec<Block>,
    /// Standard indices of free variables that appear in some row.
    free: Vec<usize>,
    free_cols: Vec<Vec<(usize, f64)>>,
    orig_to_std: Vec<Option<usize>>,
    sources: Vec<Source>,
    nu: f64,
}

enum Kind {
    Zero,
    Select(Vec<usize>),
    Slack,
}

fn compile(p: &ConicProgram) -> Result<StdForm, SolveStatus> {
    let n = p.n_vars;
    let comp: Vec<Vec<Vec<(usize, f64)>>> = p.constraints.iter().map(|c| c.map.compressed()).collect();
    let mut claimed = vec![false; n];
    let mut kinds = Vec::with_capacity(p.constraints.len());
    for (con, rows) in p.constraints.iter().zip(&comp) {
        if let Cone::Zero(_) = con.cone {
            kinds.push(Kind::Zero);
            continue;
        }
        let selection = con.offset.iter().all(|&b| b == 0.0)
            && rows.iter().all(|r| r.len() == 1 && r[0].1 == 1.0)
            && {
                let mut cols: Vec<usize> = rows.iter().map(|r| r[0].0).collect();
                cols.sort_unstable();
                cols.windows(2).all(|w| w[0] != w[1]) && cols.iter().all(|&c| !claimed[c])
            };
        if selection {
            let cols: Vec<usize> = rows.iter().map(|r| r[0].0).collect();
            cols.iter().for_each(|&c| claimed[c] = true);
            kinds.push(Kind::Select(cols));
        } else {
            kinds.push(Kind::Slack);
        }
    }

    let mut orig_to_std = vec![None; n];
    let mut blocks = Vec::new();
    let mut sources = Vec::with_capacity(kinds.len());
    let mut next = 0;
    let mut slack_start = vec![0; kinds.len()];
    for (k, (kind, con)) in kinds.iter().zip(&p.constraints).enumerate() {
        let dim = con.cone.dim();
        match kind {
            Kind::Zero => {
                sources.push(Source::Rows(0..0));
                continue;
            }
            Kind::Select(cols) => {
                for (i, &c) in cols.iter().enumerate() {
                    orig_to_std[c] = Some(next + i);
                }
            }
            Kind::Slack => slack_start[k] = next,
        }
        sources.push(Source::Block(blocks.len()));
        blocks.push(Block { cone: con.cone, start: next, dim, rows: Vec::new(), slack_rows: None });
        next += dim;
    }
    let n_cone = next;
    let mut free_all = Vec::new();
    for slot in orig_to_std.iter_mut() {
        if slot.is_none() {
            *slot = Some(next);
            free_all.push(next);
            next += 1;
        }
    }
    let n_std = next;

    let mut c = vec![0.0; n_std];
    for (j, &cj) in p.objective.iter().enumerate() {
        c[orig_to_std[j].unwrap()] = -cj;
    }
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut b = Vec::new();
    for (k, (kind, con)) in kinds.iter().zip(&p.constraints).enumerate() {
        let map_row = |r: &Vec<(usize, f64)>| -> Vec<(usize, f64)> {
            r.iter().map(|&(j, v)| (orig_to_std[j].unwrap(), v)).collect()
        };
        match kind {
            Kind::Zero => {
                let r0 = rows.len();
                for (i, r) in comp[k].iter().enumerate() {
                    rows.push(map_row(r));
                    b.push(-con.offset[i]);
                }
                sources[k] = Source::Rows(r0..rows.len());
            }
            Kind::Slack => {
                let r0 = rows.len();
                for (i, r) in comp[k].iter().enumerate() {
                    let mut row = map_row(r);
                    row.push((slack_start[k] + i, -1.0));
                    rows.push(row);
                    b.push(-con.offset[i]);
                }
                if let Source::Block(bi) = sources[k] {
                    blocks[bi].slack_rows = Some(r0..rows.len());
                }
            }
            Kind::Select(_) => {}
        }
    }

    let mut var_block = vec![usize::MAX; n_cone];
    for (bi, blk) in blocks.iter().enumerate() {
        var_block[blk.start..blk.start + blk.dim].iter_mut().for_each(|v| *v = bi);
    }
    let mut free_index = vec![usize::MAX; n_std];
    let mut free_cols_all: Vec<Vec<(usize, f64)>> = vec![Vec::new(); free_all.len()];
    for (fi, &j) in free_all.iter().enumerate() {
        free_index[j] = fi;
    }
    for (r, row) in rows.iter().enumerate() {
        let mut per_block: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
        for &(j, v) in row {
            if j < n_cone {
                let bi = var_block[j];
                let local = j - blocks[bi].start;
                match per_block.iter_mut().find(|e| e.0 == bi) {
                    Some(e) => e.1.push((local, v)),
                    None => per_block.push((bi, vec![(local, v)])),
                }
            } else {
                free_cols_all[free_index[j]].push((r, v));
            }
        }
        for (bi, ents) in per_block {
            blocks[bi].rows.push((r, ents));
        }
    }
    let mut free = Vec::new();
    let mut free_cols = Vec::new();
    for (fi, &j) in free_all.iter().enumerate() {
        if free_cols_all[fi].is_empty() {
            if c[j] != 0.0 {
                return Err(SolveStatus::Unbounded);
            }
        } else {
            free.push(j);
            free_cols.push(std::mem::take(&mut free_cols_all[fi]));
        }
    }
    let nu = blocks.iter().map(|b| cones::degree(b.cone)).sum();
    Ok(StdForm { n: n_std, c, rows, b, blocks, free, free_cols, orig_to_std, sources, nu })
}

struct Local {
    scalings: Vec<Scaling>,
    grads: Vec<Vec<f64>>,
}

fn local(sf: &StdForm, x: &[f64]) -> Option<Local> {
    let mut scalings = Vec::with_capacity(sf.blocks.len());
    let mut grads = Vec::with_capacity(sf.blocks.len());
    for blk in &sf.blocks {
        let (s, g) = cones::scaling(blk.cone, &x[blk.start..blk.start + blk.dim])?;
        scalings.push(s);
        grads.push(g);
    }
    Some(Local { scalings, grads })
}

fn barrier_total(sf: &StdForm, x: &[f64]) -> Option<f64> {
    sf.blocks.iter().try_fold(0.0, |acc, blk| {
        cones::barrier_value(blk.cone, &x[blk.start..blk.start + blk.dim]).map(|v| acc + v)
    })
}

struct Newton {
    dx: Vec<f64>,
    w: Vec<f64>,
    lambda2: f64,
    slope: f64,
}

fn newton(sf: &StdForm, x: &[f64], t: f64, loc: &Local) -> Option<Newton> {
    let m = sf.rows.len();
    let nf = sf.free.len();
    let dim = m + nf;
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for (r, row) in sf.rows.iter().enumerate() {
        rhs[r] = row.iter().map(|&(j, v)| v * x[j]).sum::<f64>() - sf.b[r];
    }
    let mut gfull: Vec<Vec<f64>> = Vec::with_capacity(sf.blocks.len());
    for (bi, blk) in sf.blocks.iter().enumerate() {
        let g: Vec<f64> = (0..blk.dim).map(|i| t * sf.c[blk.start + i] + loc.grads[bi][i]).collect();
        let sc = &loc.scalings[bi];
        let mut hg = vec![0.0; blk.dim];
        sc.apply_inv(&g, &mut hg);
        let mut u = vec![0.0; blk.dim];
        for (ri, (r, ents)) in blk.rows.iter().enumerate() {
            rhs[*r] -= ents.iter().map(|&(l, v)| v * hg[l]).sum::<f64>();
            sc.apply_inv_sparse(ents, &mut u);
            for (r2, ents2) in &blk.rows[ri..] {
                let val: f64 = ents2.iter().map(|&(l, v)| v * u[l]).sum();
                k[(*r, *r2)] += val;
                if r2 != r {
                    k[(*r2, *r)] += val;
                }
            }
        }
        gfull.push(g);
    }
    for (fi, col) in sf.free_cols.iter().enumerate() {
        for &(r, v) in col {
            k[(r, m + fi)] += v;
            k[(m + fi, r)] += v;
        }
        rhs[m + fi] = -t * sf.c[sf.free[fi]];
    }

    let lu = factor(k)?;
    let sol = lu.solve(&rhs)?;
    let mut w: Vec<f64> = sol.rows(0, m).iter().copied().collect();
    let mut dx = vec![0.0; sf.n];
    for (bi, blk) in sf.blocks.iter().enumerate() {
        let mut v = gfull[bi].clone();
        for (r, ents) in &blk.rows {
            for &(l, a) in ents {
                v[l] += a * w[*r];
            }
        }
        let out = &mut dx[blk.start..blk.start + blk.dim];
        loc.scalings[bi].apply_inv(&v, out);
        out.iter_mut().for_each(|d| *d = -*d);
    }
    for (fi, &j) in sf.free.iter().enumerate() {
        dx[j] = -sol[m + fi];
    }

    // The cone part of dx cancels t-sized terms, so the equality residual
    // `Â dx + r_p` is only accurate to about t * eps. Correct it with the
    // same factorization; the residual itself is computed without cancellation.
    for _ in 0..2 {
        let mut r3 = DVector::<f64>::zeros(m + nf);
        let mut worst = 0.0_f64;
        for (r, row) in sf.rows.iter().enumerate() {
            let v = row.iter().map(|&(j, a)| a * (x[j] + dx[j])).sum::<f64>() - sf.b[r];
            r3[r] = v;
            worst = worst.max(v.abs());
        }
        if worst == 0.0 {
            break;
        }
        let corr = lu.solve(&r3)?;
        for (r, wr) in w.iter_mut().enumerate() {
            *wr += corr[r];
        }
        for (bi, blk) in sf.blocks.iter().enumerate() {
            let mut v = vec![0.0; blk.dim];
            for (r, ents) in &blk.rows {
                for &(l, a) in ents {
                    v[l] += a * corr[*r];
                }
            }
            let mut hv = vec![0.0; blk.dim];
            loc.scalings[bi].apply_inv(&v, &mut hv);
            for (d, h) in dx[blk.start..blk.start + blk.dim].iter_mut().zip(hv) {
                *d -= h;
            }
        }
        for (fi, &j) in sf.free.iter().enumerate() {
            dx[j] -= corr[m + fi];
        }
    }

    // Slack steps follow exactly from their defining rows. Taking them from
    // there avoids the cancellation in `-H^{-1}(g + Â^T w)`, which is severe
    // along the normal of a nearly active exponential cone.
    for blk in &sf.blocks {
        let Some(range) = &blk.slack_rows else { continue };
        for (i, r) in range.clone().enumerate() {
            let slack = blk.start + i;
            let mut v = -sf.b[r];
            let mut dv = 0.0;
            for &(j, a) in &sf.rows[r] {
                if j != slack {
                    v += a * x[j];
                    dv += a * dx[j];
                }
            }
            // New slack equals the row value at x + dx.
            dx[slack] = v + dv - x[slack];
        }
    }

    let mut lambda2 = 0.0;
    let mut slope = 0.0;
    for (bi, blk) in sf.blocks.iter().enumerate() {
        let d = &dx[blk.start..blk.start + blk.dim];
        lambda2 += loc.scalings[bi].quad(d);
        slope += gfull[bi].iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
    }
    for &j in &sf.free {
        slope += t * sf.c[j] * dx[j];
    }
    if !dx.iter().chain(&w).all(|v| v.is_finite()) {
        return None;
    }
    Some(Newton { dx, w, lambda2, slope })
}

type Lu = nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>;

/// LU of the symmetrically equilibrated saddle matrix `D K D`.
struct Factor {
    lu: Option<Lu>,
    k: DMatrix<f64>,
    d: DVector<f64>,
}

impl Factor {
    fn solve_once(&self, lu: &Lu, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let scaled = rhs.component_mul(&self.d);
        Some(lu.solve(&scaled)?.component_mul(&self.d))
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let Some(lu) = &self.lu else {
            return Some(DVector::zeros(0));
        };
        let mut sol = self.solve_once(lu, rhs)?;
        for _ in 0..2 {
            let res = rhs - &self.k * &sol;
            sol += self.solve_once(lu, &res)?;
        }
        sol.iter().all(|v| v.is_finite()).then_some(sol)
    }
}

/// Factors the saddle matrix after scaling rows and columns by the inverse
/// square root of their largest entry; shifts the diagonal slightly if the
/// result is singular.
fn factor(k: DMatrix<f64>) -> Option<Factor> {
    let n = k.nrows();
    if n == 0 {
        return Some(Factor { lu: None, k, d: DVector::zeros(0) });
    }
    let d = DVector::from_fn(n, |i, _| {
        let m = k.row(i).amax();
        if m > 0.0 {
            1.0 / m.sqrt()
        } else {
            1.0
        }
    });
    let mut scaled = k.clone();
    for j in 0..n {
        for i in 0..n {
            scaled[(i, j)] *= d[i] * d[j];
        }
    }
    let lu = scaled.clone().lu();
    if lu.is_invertible() {
        return Some(Factor { lu: Some(lu), k, d });
    }
    for i in 0..n {
        scaled[(i, i)] += 1e-13;
    }
    let lu = scaled.lu();
    lu.is_invertible().then_some(Factor { lu: Some(lu), k, d })
}

impl BarrierSolver {
    pub fn new(settings: BarrierSettings) -> Self {
        Self { settings }
    }

    fn assemble(&self, p: &ConicProgram, sf: &StdForm, x: &[f64], w: &[f64], t: f64, iters: usize) -> SolveResult {
        let primal: Vec<f64> = sf.orig_to_std.iter().map(|j| j.map_or(0.0, |j| x[j])).collect();
        let y: Vec<f64> = w.iter().map(|v| -v / t).collect();
        // Linearized cone duals z = ĉ - Â^T y keep stationarity exact; near
        // the central path they lie inside the dual cone.
        let block_dual = |blk: &Block| -> Vec<f64> {
            let mut z = sf.c[blk.start..blk.start + blk.dim].to_vec();
            for (r, ents) in &blk.rows {
                for &(l, a) in ents {
                    z[l] -= a * y[*r];
                }
            }
            z
        };
        let duals = sf
            .sources
            .iter()
            .map(|src| match src {
                Source::Rows(range) => y[range.clone()].to_vec(),
                Source::Block(bi) => block_dual(&sf.blocks[*bi]),
            })
            .collect();
        let mut r = SolveResult {
            status: SolveStatus::Optimal,
            objective_value: p.objective_value(&primal),
            primal,
            duals,
            max_kkt_residual: 0.0,
            iterations: iters,
        };
        r.max_kkt_residual = check_kkt(p, &r).max_residual();
        r
    }
}

impl ConicSolver for BarrierSolver {
    fn solve(&self, p: &ConicProgram, tol: f64) -> SolveResult {
        if p.validate().is_err() || !(tol > 0.0) {
            return SolveResult::failed(SolveStatus::NumericalFailure, p, 0);
        }
        let sf = match compile(p) {
            Ok(sf) => sf,
            Err(status) => return SolveResult::failed(status, p, 0),
        };
        let s = self.settings;
        let mut x = vec![0.0; sf.n];
        for blk in &sf.blocks {
            x[blk.start..blk.start + blk.dim].copy_from_slice(&cones::central_point(blk.cone));
        }
        let mut t = s.t0;
        let mut iters = 0;
        let mut feasible = sf.rows.is_empty();
        let mut infeasible_steps = 0;
        let mut best: Option<SolveResult> = None;

        loop {
            let mut centered: Option<Vec<f64>> = None;
            while iters < s.max_newton {
                iters += 1;
                let Some(loc) = local(&sf, &x) else {
                    return best.unwrap_or_else(|| SolveResult::failed(SolveStatus::NumericalFailure, p, iters));
                };
                let Some(step) = newton(&sf, &x, t, &loc) else {
                    return best.unwrap_or_else(|| SolveResult::failed(SolveStatus::NumericalFailure, p, iters));
                };
                if !feasible {
                    infeasible_steps += 1;
                    let mut alpha = 1.0;
                    let mut trial: Vec<f64> = x.iter().zip(&step.dx).map(|(a, d)| a + d).collect();
                    while barrier_total(&sf, &trial).is_none() {
                        alpha *= 0.5;
                        if alpha < 1e-12 {
                            return SolveResult::failed(SolveStatus::Infeasible, p, iters);
                        }
                        trial.iter_mut().zip(x.iter().zip(&step.dx)).for_each(|(v, (a, d))| *v = a + alpha * d);
                    }
                    x = trial;
                    if alpha == 1.0 {
                        feasible = true;
                    } else if infeasible_steps > 200 {
                        return SolveResult::failed(SolveStatus::Infeasible, p, iters);
                    }
                    continue;
                }
                if step.lambda2 / 2.0 <= s.center_tol || step.slope >= 0.0 {
                    centered = Some(step.w);
                    break;
                }
                let f0 = barrier_total(&sf, &x).unwrap_or(f64::INFINITY);
                let mut alpha = 1.0;
                let mut trial = vec![0.0; sf.n];
                let accepted = loop {
                    trial.iter_mut().zip(x.iter().zip(&step.dx)).for_each(|(v, (a, d))| *v = a + alpha * d);
                    if let Some(f1) = barrier_total(&sf, &trial) {
                        let dc: f64 = sf.c.iter().zip(&step.dx).map(|(c, d)| c * d).sum::<f64>() * alpha * t;
                        if dc + f1 - f0 <= 0.25 * alpha * step.slope {
                            break true;
                        }
                    }
                    alpha *= 0.5;
                    if alpha < 1e-12 {
                        break false;
                    }
                };
                if !accepted {
                    // Line search stalled on rounding noise: treat as centered.
                    centered = Some(step.w);
                    break;
                }
                x.copy_from_slice(&trial);
                if x.iter().any(|v| v.abs() > 1e12) {
                    return SolveResult::failed(SolveStatus::Unbounded, p, iters);
                }
            }
            let Some(w) = centered else {
                if !feasible {
                    return SolveResult::failed(SolveStatus::Infeasible, p, iters);
                }
                return best.unwrap_or_else(|| SolveResult::failed(SolveStatus::NumericalFailure, p, iters));
            };
            let obj: f64 = sf.c.iter().zip(&x).map(|(a, b)| a * b).sum();
            if sf.nu / t <= tol * (1.0 + obj.abs()) {
                let mut r = self.assemble(p, &sf, &x, &w, t, iters);
                // Aim a decade below `tol`; anything within `tol` is kept as
                // optimal in case the tighter target runs into rounding.
                if r.max_kkt_residual <= 0.1 * tol {
                    return r;
                }
                if r.max_kkt_residual > tol {
                    r.status = SolveStatus::NumericalFailure;
                }
                if best.as_ref().is_none_or(|b| r.max_kkt_residual < b.max_kkt_residual) {
                    best = Some(r);
                }
            }
            t *= s.mu;
            if t > s.max_t {
                return best.unwrap_or_else(|| SolveResult::failed(SolveStatus::NumericalFailure, p, iters));
            }
        }
    }
}
