//! Sample-level simulator of the impaired downlink, used to cross-check the
//! closed-form distortion and rate expressions.
//!
//! It never touches the analytic formulas: the effective channel rows are
//! expanded straight from the physical channels, distortion terms are drawn
//! per sample, and the receive-distortion variance is estimated from a first
//! pass over the same undistorted samples.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{HardwareProfile, NoiseConfig};
use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{CVector, C64};
use crate::rng::substream;

/// Empirical SINRs and distortion-plus-noise powers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub samples: usize,
    pub sinr_u: f64,
    pub sinr_e: f64,
    /// Mean power of `y_U` minus its data-bearing component.
    pub noise_power_u: f64,
    pub noise_power_e: f64,
    /// Delta-method standard errors of the SINR estimates.
    pub sinr_u_std_err: f64,
    pub sinr_e_std_err: f64,
}

impl McEstimate {
    pub fn rate_u(&self) -> f64 {
        self.sinr_u.ln_1p() / std::f64::consts::LN_2
    }

    pub fn rate_e(&self) -> f64 {
        self.sinr_e.ln_1p() / std::f64::consts::LN_2
    }
}

fn cn<R: Rng>(rng: &mut R, var: f64) -> C64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// `h_direct^H + h_r^H E H_BR` with `E = diag(conj(e_1), ..., conj(e_M))`.
fn effective_row(h_direct: &CVector, h_r: &CVector, ch: &ChannelSet, e: &CVector) -> CVector {
    let n = ch.n_antennas();
    let mut row = CVector::from_iterator(n, h_direct.iter().map(|c| c.conj()));
    for m in 0..ch.n_elements() {
        let w = h_r[m].conj() * e[m].conj();
        for col in 0..n {
            row[col] += w * ch.h_br[(m, col)];
        }
    }
    row
}

/// Running first and second moments for a ratio-of-means estimator.
#[derive(Default)]
struct RatioMoments {
    n: f64,
    a: f64,
    b: f64,
    aa: f64,
    bb: f64,
    ab: f64,
}

impl RatioMoments {
    fn push(&mut self, a: f64, b: f64) {
        self.n += 1.0;
        self.a += a;
        self.b += b;
        self.aa += a * a;
        self.bb += b * b;
        self.ab += a * b;
    }

    fn ratio_and_se(&self) -> (f64, f64) {
        let n = self.n;
        let (ma, mb) = (self.a / n, self.b / n);
        if mb <= 0.0 {
            return (0.0, 0.0);
        }
        let va = (self.aa / n - ma * ma).max(0.0);
        let vb = (self.bb / n - mb * mb).max(0.0);
        let cab = self.ab / n - ma * mb;
        let r = ma / mb;
        let var = (va - 2.0 * r * cab + r * r * vb) / (mb * mb * n);
        (r, var.max(0.0).sqrt())
    }
}

/// Simulates `n_samples` channel uses and returns empirical SINR estimates.
pub fn mc_rate_oracle(
    f: &CVector,
    e: &CVector,
    ch: &ChannelSet,
    hw: &HardwareProfile,
    noise: &NoiseConfig,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_samples == 0 {
        return Err(Error::domain("oracle needs at least one sample"));
    }
    let n = ch.n_antennas();
    if f.len() != n || e.len() != ch.n_elements() + 1 {
        return Err(Error::dim("f or e does not match the channel set"));
    }
    hw.validate()?;
    noise.validate()?;

    let row_u = effective_row(&ch.h_bu, &ch.h_ru, ch, e);
    let row_e = effective_row(&ch.h_be, &ch.h_re, ch, e);
    let gain_u = row_u.iter().zip(f.iter()).map(|(r, x)| r * x).sum::<C64>();
    let gain_e = row_e.iter().zip(f.iter()).map(|(r, x)| r * x).sum::<C64>();
    let tx_var: Vec<f64> = f.iter().map(|x| hw.mu_t * x.norm_sqr()).collect();

    let mut rng = substream(seed, "mc-oracle");
    let mut undistorted = Vec::with_capacity(n_samples);
    let mut desired_u = Vec::with_capacity(n_samples);
    let mut mom_e = RatioMoments::default();
    let mut noise_e = 0.0;
    let mut power_tilde = 0.0;

    // Pass 1: transmit chain, thermal noise, eavesdropper observation.
    for _ in 0..n_samples {
        let s = cn(&mut rng, 1.0);
        let mut du = C64::new(0.0, 0.0);
        let mut de = C64::new(0.0, 0.0);
        for k in 0..n {
            let m_t = cn(&mut rng, tx_var[k]);
            du += row_u[k] * m_t;
            de += row_e[k] * m_t;
        }
        let n_u = cn(&mut rng, noise.sigma2_u);
        let n_e = cn(&mut rng, noise.sigma2_e);
        let sig_u = gain_u * s;
        let sig_e = gain_e * s;
        let y_tilde = sig_u + du + n_u;
        let dist_e = de + n_e;
        power_tilde += y_tilde.norm_sqr();
        undistorted.push(y_tilde);
        desired_u.push(sig_u);
        noise_e += dist_e.norm_sqr();
        mom_e.push(sig_e.norm_sqr(), dist_e.norm_sqr());
    }
    power_tilde /= n_samples as f64;

    // Pass 2: receive distortion scaled by the estimated undistorted power.
    let rx_var = hw.mu_r * power_tilde;
    let mut mom_u = RatioMoments::default();
    let mut noise_u = 0.0;
    for (y_tilde, sig_u) in undistorted.iter().zip(&desired_u) {
        let y = y_tilde + cn(&mut rng, rx_var);
        let dist = (y - sig_u).norm_sqr();
        noise_u += dist;
        mom_u.push(sig_u.norm_sqr(), dist);
    }

    let (sinr_u, se_u) = mom_u.ratio_and_se();
    let (sinr_e, se_e) = mom_e.ratio_and_se();
    Ok(McEstimate {
        samples: n_samples,
        sinr_u,
        sinr_e,
        noise_power_u: noise_u / n_samples as f64,
        noise_power_e: noise_e / n_samples as f64,
        sinr_u_std_err: se_u,
        sinr_e_std_err: se_e,
    })
}
