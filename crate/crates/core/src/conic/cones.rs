//! Per-cone barrier data and membership tests.

use nalgebra::{DMatrix, Matrix3, Vector3};

use super::{min_eigenvalue, smat, svec_index, Cone};

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Distance-like violation of `s ∈ K`.
pub(crate) fn primal_violation(cone: Cone, s: &[f64]) -> f64 {
    match cone {
        Cone::Zero(_) => s.iter().fold(0.0, |a, v| a.max(v.abs())),
        Cone::Nonneg(_) => s.iter().fold(0.0, |a, v| a.max(-v)),
        Cone::SecondOrder(_) => (norm(&s[1..]) - s[0]).max(0.0),
        Cone::Psd(n) => (-min_eigenvalue(&smat(s, n))).max(0.0),
        Cone::Exponential => {
            let (x, y, z) = (s[0], s[1], s[2]);
            if y > 0.0 {
                (y * (x / y).exp() - z).max(0.0)
            } else {
                (-y).max(x.max(0.0)).max((-z).max(0.0))
            }
        }
    }
}

/// Violation of `z ∈ K^*`. The zero cone's dual is unconstrained.
pub(crate) fn dual_violation(cone: Cone, z: &[f64]) -> f64 {
    match cone {
        Cone::Zero(_) => 0.0,
        Cone::Nonneg(_) | Cone::SecondOrder(_) | Cone::Psd(_) => primal_violation(cone, z),
        Cone::Exponential => {
            let (u, v, w) = (z[0], z[1], z[2]);
            if u < 0.0 {
                (-u * (v / u).exp() - std::f64::consts::E * w).max(0.0)
            } else {
                u.max((-v).max(0.0)).max((-w).max(0.0))
            }
        }
    }
}

pub(crate) fn degree(cone: Cone) -> f64 {
    match cone {
        Cone::Zero(_) => 0.0,
        Cone::Nonneg(d) => d as f64,
        Cone::SecondOrder(_) => 2.0,
        Cone::Psd(n) => n as f64,
        Cone::Exponential => 3.0,
    }
}

pub(crate) fn central_point(cone: Cone) -> Vec<f64> {
    match cone {
        Cone::Zero(d) => vec![0.0; d],
        Cone::Nonneg(d) => vec![1.0; d],
        Cone::SecondOrder(d) => {
            let mut v = vec![0.0; d];
            v[0] = 1.0;
            v
        }
        Cone::Psd(n) => {
            let mut v = vec![0.0; cone.dim()];
            for i in 0..n {
                v[svec_index(i, i)] = 1.0;
            }
            v
        }
        Cone::Exponential => vec![-1.051_383_945_322_714, 0.556_409_619_469_370, 1.258_967_884_768_947],
    }
}

fn exp_psi(x: &[f64]) -> Option<f64> {
    let (y, z) = (x[1], x[2]);
    if !(y > 0.0 && z > 0.0) {
        return None;
    }
    let psi = y * (z / y).ln() - x[0];
    (psi > 0.0 && psi.is_finite()).then_some(psi)
}

fn soc_gamma(x: &[f64]) -> Option<f64> {
    let t = norm(&x[1..]);
    let g = (x[0] - t) * (x[0] + t);
    (x[0] > t && g > 0.0 && g.is_finite()).then_some(g)
}

/// Barrier value, or `None` outside the interior.
pub(crate) fn barrier_value(cone: Cone, x: &[f64]) -> Option<f64> {
    match cone {
        Cone::Zero(_) => Some(0.0),
        Cone::Nonneg(_) => {
            if x.iter().all(|&v| v > 0.0) {
                Some(-x.iter().map(|v| v.ln()).sum::<f64>())
            } else {
                None
            }
        }
        Cone::SecondOrder(_) => soc_gamma(x).map(|g| -g.ln()),
        Cone::Psd(n) => {
            let chol = smat(x, n).cholesky()?;
            let l = chol.l_dirty();
            Some(-2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>())
        }
        Cone::Exponential => exp_psi(x).map(|psi| -psi.ln() - x[1].ln() - x[2].ln()),
    }
}

/// Local Hessian data at an interior point.
pub(crate) enum Scaling {
    Nonneg(Vec<f64>),
    Soc { x: Vec<f64>, gamma: f64 },
    Psd { n: usize, x: DMatrix<f64>, xinv: DMatrix<f64> },
    Exp { dpsi: Vector3<f64>, psi: f64, y: f64, z: f64, hinv: Matrix3<f64> },
}

/// Hessian data and gradient at `x`, or `None` outside the interior.
pub(crate) fn scaling(cone: Cone, x: &[f64]) -> Option<(Scaling, Vec<f64>)> {
    match cone {
        Cone::Zero(_) => None,
        Cone::Nonneg(_) => {
            if !x.iter().all(|&v| v > 0.0) {
                return None;
            }
            Some((Scaling::Nonneg(x.to_vec()), x.iter().map(|v| -1.0 / v).collect()))
        }
        Cone::SecondOrder(_) => {
            let gamma = soc_gamma(x)?;
            let mut g: Vec<f64> = x.iter().map(|v| 2.0 * v / gamma).collect();
            g[0] = -g[0];
            Some((Scaling::Soc { x: x.to_vec(), gamma }, g))
        }
        Cone::Psd(n) => {
            let xm = smat(x, n);
            let chol = xm.clone().cholesky()?;
            let xinv = chol.inverse();
            let g: Vec<f64> = super::svec(&xinv).into_iter().map(|v| -v).collect();
            Some((Scaling::Psd { n, x: xm, xinv }, g))
        }
        Cone::Exponential => {
            let psi = exp_psi(x)?;
            let (y, z) = (x[1], x[2]);
            let dpsi = Vector3::new(-1.0, (z / y).ln() - 1.0, y / z);
            // H = dpsi dpsi^T / psi^2 + M with M zero on the x row/column and
            // M_yz = v v^T / psi + diag(1/y^2, 1/z^2), v = (1/sqrt(y), -sqrt(y)/z).
            // Eliminating x leaves M_yz, inverted by Sherman-Morrison.
            let d = psi + 2.0 * y;
            let m11 = y * y - y * y * y / d;
            let m12 = y * y * z / d;
            let m22 = z * z - z * z * y / d;
            let (g1, g2) = (dpsi[1], dpsi[2]);
            let mg1 = m11 * g1 + m12 * g2;
            let mg2 = m12 * g1 + m22 * g2;
            let hinv = Matrix3::new(
                psi * psi + g1 * mg1 + g2 * mg2,
                mg1,
                mg2,
                mg1,
                m11,
                m12,
                mg2,
                m12,
                m22,
            );
            let g = -dpsi / psi - Vector3::new(0.0, 1.0 / y, 1.0 / z);
            Some((Scaling::Exp { dpsi, psi, y, z, hinv }, g.iter().copied().collect()))
        }
    }
}

/// `(i, j)` with `i <= j` for an svec position.
fn svec_pair(l: usize) -> (usize, usize) {
    let mut j = ((((8 * l + 1) as f64).sqrt() - 1.0) / 2.0) as usize;
    while j * (j + 1) / 2 > l {
        j -= 1;
    }
    while (j + 1) * (j + 2) / 2 <= l {
        j += 1;
    }
    (l - j * (j + 1) / 2, j)
}

fn svec_into(m: &DMatrix<f64>, out: &mut [f64]) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            out[svec_index(i, j)] = SQRT2 * 0.5 * (m[(i, j)] + m[(j, i)]);
        }
        out[svec_index(j, j)] = m[(j, j)];
    }
}

impl Scaling {
    /// `out = H^{-1} v`.
    pub(crate) fn apply_inv(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Nonneg(x) => {
                for ((o, vi), xi) in out.iter_mut().zip(v).zip(x) {
                    *o = xi * xi * vi;
                }
            }
            Scaling::Soc { x, gamma } => {
                let xv: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
                for (i, o) in out.iter_mut().enumerate() {
                    let jv = if i == 0 { v[0] } else { -v[i] };
                    *o = x[i] * xv - 0.5 * gamma * jv;
                }
            }
            Scaling::Psd { n, x, .. } => {
                let vm = smat(v, *n);
                let r = x * vm * x;
                svec_into(&r, out);
            }
            Scaling::Exp { hinv, .. } => {
                let r = hinv * Vector3::new(v[0], v[1], v[2]);
                out[..3].copy_from_slice(r.as_slice());
            }
        }
    }

    /// `out = H^{-1} v` for a sparse `v` given as `(local index, value)`.
    pub(crate) fn apply_inv_sparse(&self, v: &[(usize, f64)], out: &mut [f64]) {
        match self {
            Scaling::Psd { n, x, .. } if v.len() <= *n => {
                out.iter_mut().for_each(|o| *o = 0.0);
                let n = *n;
                for &(l, val) in v {
                    let (i, j) = svec_pair(l);
                    if i == j {
                        let xi = x.column(i);
                        for q in 0..n {
                            let a = val * xi[q];
                            for p in 0..q {
                                out[svec_index(p, q)] += SQRT2 * a * xi[p];
                            }
                            out[svec_index(q, q)] += a * xi[q];
                        }
                    } else {
                        let a = val / SQRT2;
                        let (xi, xj) = (x.column(i), x.column(j));
                        for q in 0..n {
                            for p in 0..q {
                                out[svec_index(p, q)] += SQRT2 * a * (xi[p] * xj[q] + xj[p] * xi[q]);
                            }
                            out[svec_index(q, q)] += 2.0 * a * xi[q] * xj[q];
                        }
                    }
                }
            }
            _ => {
                let mut dense = vec![0.0; out.len()];
                for &(l, val) in v {
                    dense[l] += val;
                }
                self.apply_inv(&dense, out);
            }
        }
    }

    /// `v^T H v`.
    pub(crate) fn quad(&self, v: &[f64]) -> f64 {
        match self {
            Scaling::Nonneg(x) => v.iter().zip(x).map(|(a, b)| (a / b) * (a / b)).sum(),
            Scaling::Soc { x, gamma } => {
                let jxv = x[0] * v[0] - x[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum::<f64>();
                let vjv = v[0] * v[0] - v[1..].iter().map(|a| a * a).sum::<f64>();
                (4.0 * jxv * jxv - 2.0 * gamma * vjv) / (gamma * gamma)
            }
            Scaling::Psd { n, xinv, .. } => {
                let p = xinv * smat(v, *n);
                p.component_mul(&p.transpose()).sum()
            }
            Scaling::Exp { dpsi, psi, y, z, .. } => {
                let gv = dpsi[0] * v[0] + dpsi[1] * v[1] + dpsi[2] * v[2];
                let tv = v[1] / y.sqrt() - y.sqrt() * v[2] / z;
                (gv / psi).powi(2) + tv * tv / psi + (v[1] / y).powi(2) + (v[2] / z).powi(2)
            }
        }
    }
}


#[cfg(test)]
mod exp_tests {
    use super::*;

    #[test]
    fn exp_inverse_hessian_inverts_numeric_hessian() {
        for x in [[-0.3, 0.8, 1.9], [2.0, 1.0, 8.0 + 1e-3], [-5.0, 0.1, 0.2]] {
            let (s, _) = scaling(Cone::Exponential, &x).unwrap();
            let h = 1e-7 * x[1].min(x[2]).min(1.0);
            let mut hess = Matrix3::zeros();
            for k in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let gp = scaling(Cone::Exponential, &xp).unwrap().1;
                let gm = scaling(Cone::Exponential, &xm).unwrap().1;
                for i in 0..3 {
                    hess[(i, k)] = (gp[i] - gm[i]) / (2.0 * h);
                }
            }
            let Scaling::Exp { hinv, .. } = &s else { unreachable!() };
            let prod = hinv * hess;
            assert!((prod - Matrix3::identity()).amax() < 1e-4, "{prod}");
            for v in [[1.0, 0.0, 0.0], [0.3, -0.2, 0.5]] {
                let hv = hess * Vector3::new(v[0], v[1], v[2]);
                let q = Vector3::new(v[0], v[1], v[2]).dot(&hv);
                assert!((s.quad(&v) - q).abs() < 1e-4 * (1.0 + q.abs()));
            }
        }
    }
}
