//! Scenario synthesis: geometry, large-scale path loss and Rician small-scale
//! fading with uniform-linear-array line-of-sight components.
//!
//! All arrays are half-wavelength ULAs aligned with the x-axis; angles are
//! measured from broadside (the y-axis), so the sine of a link angle is the
//! x-offset divided by the link length.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, CMatrix, CVector, C64};
use crate::metrics::NoiseConfig;
use crate::rng::substream;

/// Node positions in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    pub bs_pos: [f64; 2],
    pub ris_pos: [f64; 2],
    pub user_pos: [f64; 2],
    pub eve_pos: [f64; 2],
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            bs_pos: [0.0, 0.0],
            ris_pos: [50.0, 0.0],
            user_pos: [50.0, 2.0],
            eve_pos: [45.0, 2.0],
        }
    }
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Angle of `to` seen from an x-aligned array at `from`, measured from broadside.
pub fn link_angle(from: [f64; 2], to: [f64; 2]) -> f64 {
    let d = distance(from, to);
    ((to[0] - from[0]) / d).clamp(-1.0, 1.0).asin()
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        let pts = [self.bs_pos, self.ris_pos, self.user_pos, self.eve_pos];
        if pts.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite node coordinate"));
        }
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                if distance(pts[i], pts[j]) <= 0.0 {
                    return Err(Error::domain(format!("nodes {i} and {j} coincide")));
                }
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let s = |p: [f64; 2]| [p[0] * factor, p[1] * factor];
        Self {
            bs_pos: s(self.bs_pos),
            ris_pos: s(self.ris_pos),
            user_pos: s(self.user_pos),
            eve_pos: s(self.eve_pos),
        }
    }
}

/// Rician K-factors and path-loss exponents, split between RIS-related links
/// and the direct BS links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FadingParams {
    pub ricean_k_ris: f64,
    pub ricean_k_direct: f64,
    pub alpha_ris: f64,
    pub alpha_direct: f64,
}

impl Default for FadingParams {
    fn default() -> Self {
        Self {
            ricean_k_ris: 10.0,
            ricean_k_direct: 0.0,
            alpha_ris: 2.2,
            alpha_direct: 3.6,
        }
    }
}

impl FadingParams {
    pub fn validate(&self) -> Result<()> {
        for k in [self.ricean_k_ris, self.ricean_k_direct] {
            if k.is_nan() || k < 0.0 {
                return Err(Error::domain(format!("Rician factor {k} must be >= 0")));
            }
        }
        for a in [self.alpha_ris, self.alpha_direct] {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::domain(format!("path-loss exponent {a} must be > 0")));
            }
        }
        Ok(())
    }
}

/// The five propagation channels of one scenario draw.
///
/// `h_br` is M x N (BS to RIS); the vectors are column vectors whose Hermitian
/// transpose acts on the transmitted signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h_br: CMatrix,
    pub h_bu: CVector,
    pub h_ru: CVector,
    pub h_be: CVector,
    pub h_re: CVector,
}

impl ChannelSet {
    pub fn n_antennas(&self) -> usize {
        self.h_bu.len()
    }

    pub fn n_elements(&self) -> usize {
        self.h_ru.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.n_elements(), self.n_antennas());
        if self.h_br.shape() != (m, n) || self.h_be.len() != n || self.h_re.len() != m {
            return Err(Error::dim(format!(
                "inconsistent channel shapes: H_BR {:?}, h_BU {}, h_RU {}, h_BE {}, h_RE {}",
                self.h_br.shape(),
                n,
                m,
                self.h_be.len(),
                self.h_re.len()
            )));
        }
        let finite = |c: &C64| c.re.is_finite() && c.im.is_finite();
        if !(self.h_br.iter().all(finite)
            && self.h_bu.iter().all(finite)
            && self.h_ru.iter().all(finite)
            && self.h_be.iter().all(finite)
            && self.h_re.iter().all(finite))
        {
            return Err(Error::domain("non-finite channel entry"));
        }
        Ok(())
    }

    /// Rescales every path ending at a receiver by `1/sigma_U` so that the
    /// user's thermal noise becomes unit power. Rates are unchanged.
    pub fn normalized(&self, noise: &NoiseConfig) -> (ChannelSet, NoiseConfig) {
        let s = C64::new(1.0 / noise.sigma2_u.sqrt(), 0.0);
        let ch = ChannelSet {
            h_br: self.h_br.clone(),
            h_bu: &self.h_bu * s,
            h_ru: &self.h_ru * s,
            h_be: &self.h_be * s,
            h_re: &self.h_re * s,
        };
        let nz = NoiseConfig {
            sigma2_u: 1.0,
            sigma2_e: noise.sigma2_e / noise.sigma2_u,
        };
        (ch, nz)
    }

    /// The same scenario with the RIS removed (M = 0).
    pub fn without_ris(&self) -> ChannelSet {
        let n = self.n_antennas();
        ChannelSet {
            h_br: CMatrix::zeros(0, n),
            h_bu: self.h_bu.clone(),
            h_ru: CVector::zeros(0),
            h_be: self.h_be.clone(),
            h_re: CVector::zeros(0),
        }
    }
}

/// Large-scale path loss `-30 - 10 alpha log10(d)` in dB.
pub fn path_loss_db(d: f64, alpha: f64) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::domain(format!("distance {d} must be positive")));
    }
    Ok(-30.0 - 10.0 * alpha * d.log10())
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// ULA response with half-wavelength spacing: entry k is `exp(j pi k sin(theta))`.
pub fn steering_vector(theta: f64, n: usize) -> Result<CVector> {
    if n == 0 {
        return Err(Error::domain("steering vector needs at least one element"));
    }
    let phase = std::f64::consts::PI * theta.sin();
    Ok(CVector::from_iterator(
        n,
        (0..n).map(|k| C64::from_polar(1.0, phase * k as f64)),
    ))
}

/// `sqrt(K/(K+1)) * los + sqrt(1/(K+1)) * W` with `W` i.i.d. CN(0, 1).
///
/// `K = +inf` yields the LoS matrix exactly.
pub fn synth_rician<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    k_factor: f64,
    los_matrix: &CMatrix,
    rng: &mut R,
) -> Result<CMatrix> {
    if k_factor.is_nan() || k_factor < 0.0 {
        return Err(Error::domain(format!("Rician factor {k_factor} must be >= 0")));
    }
    if los_matrix.shape() != (rows, cols) {
        return Err(Error::dim(format!(
            "LoS matrix is {:?}, expected ({rows}, {cols})",
            los_matrix.shape()
        )));
    }
    if los_matrix.iter().any(|c| (c.norm() - 1.0).abs() > 1e-9) {
        return Err(Error::domain("LoS matrix entries must have unit modulus"));
    }
    let (w_los, w_nlos) = if k_factor.is_infinite() {
        (1.0, 0.0)
    } else {
        ((k_factor / (k_factor + 1.0)).sqrt(), (1.0 / (k_factor + 1.0)).sqrt())
    };
    // Draw even when the weight is zero so the stream position is K-independent.
    let w = complex_gaussian(rng, rows * cols);
    Ok(CMatrix::from_fn(rows, cols, |r, c| {
        los_matrix[(r, c)] * w_los + w[c * rows + r] * w_nlos
    }))
}

fn amplitude(d: f64, alpha: f64) -> Result<f64> {
    Ok(db_to_linear(path_loss_db(d, alpha)?).sqrt())
}

fn rician_vector(
    seed: u64,
    label: &str,
    los: CVector,
    k: f64,
    gain: f64,
) -> Result<CVector> {
    let n = los.len();
    let mut rng = substream(seed, label);
    let m = synth_rician(n, 1, k, &DMatrix::from_column_slice(n, 1, los.as_slice()), &mut rng)?;
    Ok(CVector::from_column_slice(m.as_slice()) * C64::new(gain, 0.0))
}

/// Draws all five channels for `config` under `seed`, in physical units.
pub fn build_scenario(config: &SystemConfig, seed: u64) -> Result<ChannelSet> {
    config.validate()?;
    let (n, m) = (config.n_antennas, config.n_elements);
    let g = &config.geometry;
    let fp = &config.fading;

    let ula = |from: [f64; 2], to: [f64; 2], len: usize| -> Result<CVector> {
        if len == 0 {
            Ok(CVector::zeros(0))
        } else {
            steering_vector(link_angle(from, to), len)
        }
    };

    let h_br = if m == 0 {
        CMatrix::zeros(0, n)
    } else {
        let a_rx = ula(g.ris_pos, g.bs_pos, m)?;
        let a_tx = ula(g.bs_pos, g.ris_pos, n)?;
        let los = &a_rx * a_tx.adjoint();
        let mut rng = substream(seed, "H_BR");
        let raw = synth_rician(m, n, fp.ricean_k_ris, &los, &mut rng)?;
        raw * C64::new(amplitude(distance(g.bs_pos, g.ris_pos), fp.alpha_ris)?, 0.0)
    };

    let h_bu = rician_vector(
        seed,
        "h_BU",
        ula(g.bs_pos, g.user_pos, n)?,
        fp.ricean_k_direct,
        amplitude(distance(g.bs_pos, g.user_pos), fp.alpha_direct)?,
    )?;
    let h_be = rician_vector(
        seed,
        "h_BE",
        ula(g.bs_pos, g.eve_pos, n)?,
        fp.ricean_k_direct,
        amplitude(distance(g.bs_pos, g.eve_pos), fp.alpha_direct)?,
    )?;
    let h_ru = rician_vector(
        seed,
        "h_RU",
        ula(g.ris_pos, g.user_pos, m)?,
        fp.ricean_k_ris,
        amplitude(distance(g.ris_pos, g.user_pos), fp.alpha_ris)?,
    )?;
    let h_re = rician_vector(
        seed,
        "h_RE",
        ula(g.ris_pos, g.eve_pos, m)?,
        fp.ricean_k_ris,
        amplitude(distance(g.ris_pos, g.eve_pos), fp.alpha_ris)?,
    )?;

    let ch = ChannelSet { h_br, h_bu, h_ru, h_be, h_re };
    ch.validate()?;
    Ok(ch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn path_loss_examples() {
        assert_abs_diff_eq!(path_loss_db(1.0, 3.6).unwrap(), -30.0, epsilon = 1e-12);
        assert_abs_diff_eq!(path_loss_db(10.0, 2.2).unwrap(), -52.0, epsilon = 1e-12);
        // -30 - 22 * log10(50) = -30 - 22 * 1.698970004336019
        assert_abs_diff_eq!(path_loss_db(50.0, 2.2).unwrap(), -67.37734009539242, epsilon = 1e-9);
        assert!(matches!(path_loss_db(0.0, 2.0), Err(Error::Domain(_))));
        assert!(matches!(path_loss_db(-3.0, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn steering_vector_examples() {
        let a = steering_vector(0.0, 4).unwrap();
        assert!(a.iter().all(|c| (c - C64::new(1.0, 0.0)).norm() < 1e-15));
        let b = steering_vector(PI / 2.0, 2).unwrap();
        assert!((b[1] - C64::new(-1.0, 0.0)).norm() < 1e-12);
        let c = steering_vector(PI / 6.0, 2).unwrap();
        assert!((c[1] - C64::new(0.0, 1.0)).norm() < 1e-12);
        assert!(steering_vector(0.3, 0).is_err());
    }

    #[test]
    fn rician_limits_and_determinism() {
        let los = CMatrix::from_element(3, 2, C64::new(1.0, 0.0));
        let a = synth_rician(3, 2, 1e12, &los, &mut substream(1, "x")).unwrap();
        assert!((a - &los).iter().all(|c| c.norm() < 1e-4));

        let r1 = synth_rician(3, 2, 0.0, &los, &mut substream(5, "y")).unwrap();
        let r2 = synth_rician(3, 2, 0.0, &los, &mut substream(5, "y")).unwrap();
        assert_eq!(r1, r2);
        // K = 0: pure NLoS draw, identical to the raw Gaussian stream.
        let w = complex_gaussian(&mut substream(5, "y"), 6);
        assert!((r1[(1, 0)] - w[1]).norm() < 1e-15);

        assert!(synth_rician(3, 2, -1.0, &los, &mut substream(1, "x")).is_err());
        assert!(synth_rician(2, 2, 1.0, &los, &mut substream(1, "x")).is_err());
    }

    #[test]
    fn rician_unit_energy_for_all_k() {
        for k in [0.0, 1.0, 10.0] {
            let los = CMatrix::from_fn(200, 500, |r, c| C64::from_polar(1.0, 0.37 * (r * c) as f64));
            let m = synth_rician(200, 500, k, &los, &mut substream(11, "energy")).unwrap();
            let mean = m.iter().map(|c| c.norm_sqr()).sum::<f64>() / 1e5;
            assert!((mean - 1.0).abs() < 0.02, "K={k}: mean energy {mean}");
        }
    }

    #[test]
    fn scenario_shapes_and_determinism() {
        let cfg = SystemConfig { n_elements: 8, ..SystemConfig::default() };
        let a = build_scenario(&cfg, 42).unwrap();
        assert_eq!(a.h_br.shape(), (8, 4));
        assert_eq!((a.h_bu.len(), a.h_ru.len(), a.h_be.len(), a.h_re.len()), (4, 8, 4, 8));
        let b = build_scenario(&cfg, 42).unwrap();
        assert_eq!(a, b);
        let c = build_scenario(&cfg, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn direct_link_gain_concentrates_on_path_loss() {
        let cfg = SystemConfig { n_elements: 0, ..SystemConfig::default() };
        let pl = db_to_linear(
            path_loss_db(distance(cfg.geometry.bs_pos, cfg.geometry.user_pos), 3.6).unwrap(),
        );
        let seeds = 10_000;
        let mean = (0..seeds)
            .map(|s| build_scenario(&cfg, s).unwrap().h_bu.norm_squared() / 4.0)
            .sum::<f64>()
            / seeds as f64;
        assert!((mean / pl - 1.0).abs() < 0.03, "ratio {}", mean / pl);
    }

    #[test]
    fn doubling_distances_quarters_los_gain() {
        let mut fading = FadingParams::default();
        fading.ricean_k_ris = f64::INFINITY;
        fading.ricean_k_direct = f64::INFINITY;
        fading.alpha_ris = 2.0;
        fading.alpha_direct = 2.0;
        let cfg = SystemConfig { n_elements: 6, fading, ..SystemConfig::default() };
        let far = SystemConfig { geometry: cfg.geometry.scaled(2.0), ..cfg.clone() };
        let a = build_scenario(&cfg, 1).unwrap();
        let b = build_scenario(&far, 1).unwrap();
        let ratio = |x: f64, y: f64| x / y;
        assert_abs_diff_eq!(ratio(a.h_bu.norm_squared(), b.h_bu.norm_squared()), 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ratio(a.h_ru.norm_squared(), b.h_ru.norm_squared()), 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ratio(a.h_br.norm_squared(), b.h_br.norm_squared()), 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ratio(a.h_re.norm_squared(), b.h_re.norm_squared()), 4.0, epsilon = 1e-9);
    }

    #[test]
    fn normalization_preserves_snr() {
        let cfg = SystemConfig { n_elements: 4, ..SystemConfig::default() };
        let ch = build_scenario(&cfg, 9).unwrap();
        let noise = NoiseConfig { sigma2_u: 1e-11, sigma2_e: 2e-11 };
        let (nc, nn) = ch.normalized(&noise);
        assert_eq!(nn.sigma2_u, 1.0);
        assert_abs_diff_eq!(nn.sigma2_e, 2.0, epsilon = 1e-12);
        let snr = ch.h_bu.norm_squared() / noise.sigma2_u;
        assert_abs_diff_eq!(nc.h_bu.norm_squared() / nn.sigma2_u, snr, epsilon = 1e-6 * snr);
    }

    #[test]
    fn geometry_rejects_coincident_nodes() {
        let g = Geometry { eve_pos: [50.0, 2.0], ..Geometry::default() };
        assert!(g.validate().is_err());
        assert!(Geometry::default().validate().is_ok());
    }
}
