//! Impairment-aware achievable rates.
//!
//! The legitimate user suffers transmit distortion (ratio `mu_t`, per-antenna
//! power proportional to `|f_n|^2`) and receive distortion (ratio `mu_r` of the
//! undistorted received power, thermal noise included). The eavesdropper is
//! assumed ideal apart from the transmit distortion it overhears.
//!
//! Reflection vectors follow the convention `e = [e_1, ..., e_M, 1]^H`: the
//! reflection coefficient applied by element `m` is the conjugate of the `m`-th
//! entry, so that `e^H G_U` is the effective channel row.

mod oracle;

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64};

pub use oracle::{mc_rate_oracle, McEstimate};

const LN2: f64 = std::f64::consts::LN_2;

/// Distortion-to-signal power ratios at the transmitter and the user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareProfile {
    pub mu_t: f64,
    pub mu_r: f64,
}

impl HardwareProfile {
    pub const IDEAL: HardwareProfile = HardwareProfile { mu_t: 0.0, mu_r: 0.0 };

    pub fn new(mu_t: f64, mu_r: f64) -> Result<Self> {
        let hw = Self { mu_t, mu_r };
        hw.validate()?;
        Ok(hw)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_t >= 0.0 && self.mu_r >= 0.0) || !self.mu_t.is_finite() || !self.mu_r.is_finite() {
            return Err(Error::domain(format!(
                "impairment ratios must be finite and >= 0 (mu_t={}, mu_r={})",
                self.mu_t, self.mu_r
            )));
        }
        Ok(())
    }
}

/// Thermal noise powers (W, or normalized units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma2_u: f64,
    pub sigma2_e: f64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2_u > 0.0 && self.sigma2_e > 0.0) {
            return Err(Error::domain("noise powers must be > 0"));
        }
        Ok(())
    }
}

/// Transmit beamformer `f` (amplitude in sqrt(W)).
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerF(pub CVector);

impl BeamformerF {
    pub fn zeros(n: usize) -> Self {
        Self(CVector::zeros(n))
    }

    pub fn power(&self) -> f64 {
        self.0.norm_squared()
    }

    /// Checks `||f||^2 <= p_max` up to a relative slack of 1e-8.
    pub fn check_feasible(&self, p_max: f64) -> Result<()> {
        let p = self.power();
        if p > p_max * (1.0 + 1e-8) + 1e-300 {
            return Err(Error::domain(format!("beamformer power {p} exceeds P_max {p_max}")));
        }
        Ok(())
    }
}

impl Deref for BeamformerF {
    type Target = CVector;
    fn deref(&self) -> &CVector {
        &self.0
    }
}

/// Equivalent reflection vector of length M+1: unit-modulus entries, last one
/// fixed to exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectVectorE(CVector);

impl ReflectVectorE {
    pub const MODULUS_TOL: f64 = 1e-9;

    pub fn new(e: CVector) -> Result<Self> {
        let n = e.len();
        if n == 0 {
            return Err(Error::domain("reflection vector must have length >= 1"));
        }
        if e[n - 1] != C64::new(1.0, 0.0) {
            return Err(Error::domain(format!("last entry must be exactly 1, got {}", e[n - 1])));
        }
        if let Some(bad) = e.iter().find(|c| (c.norm() - 1.0).abs() > Self::MODULUS_TOL) {
            return Err(Error::domain(format!("entry {bad} is not unit modulus")));
        }
        Ok(Self(e))
    }

    /// All-ones vector for `m` elements.
    pub fn ones(m: usize) -> Self {
        Self(CVector::from_element(m + 1, C64::new(1.0, 0.0)))
    }

    /// Builds `[exp(j phase_1), ..., exp(j phase_M), 1]`.
    pub fn from_phases(phases: &[f64]) -> Self {
        let m = phases.len();
        Self(CVector::from_iterator(
            m + 1,
            phases.iter().map(|&p| C64::from_polar(1.0, p)).chain(std::iter::once(C64::new(1.0, 0.0))),
        ))
    }

    pub fn n_elements(&self) -> usize {
        self.0.len() - 1
    }

    pub fn into_inner(self) -> CVector {
        self.0
    }
}

impl Deref for ReflectVectorE {
    type Target = CVector;
    fn deref(&self) -> &CVector {
        &self.0
    }
}

/// `G_U` and `G_E`, each (M+1) x N.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalentChannels {
    pub g_u: CMatrix,
    pub g_e: CMatrix,
}

impl EquivalentChannels {
    pub fn n_antennas(&self) -> usize {
        self.g_u.ncols()
    }

    pub fn n_elements(&self) -> usize {
        self.g_u.nrows() - 1
    }
}

fn stack(h_r: &CVector, h_br: &CMatrix, h_direct: &CVector) -> CMatrix {
    let (m, n) = h_br.shape();
    let mut g = CMatrix::zeros(m + 1, n);
    for r in 0..m {
        let c = h_r[r].conj();
        for col in 0..n {
            g[(r, col)] = c * h_br[(r, col)];
        }
    }
    for col in 0..n {
        g[(m, col)] = h_direct[col].conj();
    }
    g
}

pub fn equivalent_channels(ch: &ChannelSet) -> EquivalentChannels {
    EquivalentChannels {
        g_u: stack(&ch.h_ru, &ch.h_br, &ch.h_bu),
        g_e: stack(&ch.h_re, &ch.h_br, &ch.h_be),
    }
}

/// Effective scalar gain `e^H G f` and the distortion weight
/// `f^H diag~(G^H e e^H G) f = sum_n |(G^H e)_n|^2 |f_n|^2`.
fn projections(f: &CVector, e: &CVector, g: &CMatrix) -> Result<(C64, f64)> {
    if g.ncols() != f.len() || g.nrows() != e.len() {
        return Err(Error::dim(format!(
            "G is {:?}, f has {} entries, e has {}",
            g.shape(),
            f.len(),
            e.len()
        )));
    }
    let a = g.ad_mul(e);
    let gain = a.dotc(f);
    let diag = a.iter().zip(f.iter()).map(|(an, fn_)| an.norm_sqr() * fn_.norm_sqr()).sum();
    Ok((gain, diag))
}

fn checked_power(v: f64, what: &str) -> Result<f64> {
    if v.is_nan() || v < 0.0 {
        return Err(Error::Internal(format!("{what} evaluated to {v}")));
    }
    Ok(v)
}

/// Distortion-plus-noise power at the user.
pub fn phi_u(f: &CVector, e: &CVector, g_u: &CMatrix, hw: &HardwareProfile, sigma2_u: f64) -> Result<f64> {
    let (gain, diag) = projections(f, e, g_u)?;
    let v = hw.mu_r * gain.norm_sqr() + (1.0 + hw.mu_r) * hw.mu_t * diag + (1.0 + hw.mu_r) * sigma2_u;
    checked_power(v, "Phi_U")
}

/// Distortion-plus-noise power at the eavesdropper.
pub fn phi_e(f: &CVector, e: &CVector, g_e: &CMatrix, hw: &HardwareProfile, sigma2_e: f64) -> Result<f64> {
    let (_, diag) = projections(f, e, g_e)?;
    checked_power(hw.mu_t * diag + sigma2_e, "Phi_E")
}

/// `|e^H G f|^2`.
pub fn signal_power(f: &CVector, e: &CVector, g: &CMatrix) -> Result<f64> {
    Ok(projections(f, e, g)?.0.norm_sqr())
}

pub fn sinr_u(f: &CVector, e: &CVector, g_u: &CMatrix, hw: &HardwareProfile, sigma2_u: f64) -> Result<f64> {
    Ok(signal_power(f, e, g_u)? / phi_u(f, e, g_u, hw, sigma2_u)?)
}

pub fn sinr_e(f: &CVector, e: &CVector, g_e: &CMatrix, hw: &HardwareProfile, sigma2_e: f64) -> Result<f64> {
    Ok(signal_power(f, e, g_e)? / phi_e(f, e, g_e, hw, sigma2_e)?)
}

/// Rate in nats/s/Hz of a Gaussian input at the given SINR.
fn nats(sinr: f64) -> f64 {
    sinr.ln_1p()
}

/// User rate in bits/s/Hz.
pub fn rate_u(f: &CVector, e: &CVector, g_u: &CMatrix, hw: &HardwareProfile, sigma2_u: f64) -> Result<f64> {
    Ok(nats(sinr_u(f, e, g_u, hw, sigma2_u)?) / LN2)
}

/// Eavesdropper rate in bits/s/Hz.
pub fn rate_e(f: &CVector, e: &CVector, g_e: &CMatrix, hw: &HardwareProfile, sigma2_e: f64) -> Result<f64> {
    Ok(nats(sinr_e(f, e, g_e, hw, sigma2_e)?) / LN2)
}

/// Unclamped `R_U - R_E`, the quantity the optimizer works with.
pub fn rate_difference(
    f: &CVector,
    e: &CVector,
    eq: &EquivalentChannels,
    hw: &HardwareProfile,
    noise: &NoiseConfig,
) -> Result<f64> {
    let u = nats(sinr_u(f, e, &eq.g_u, hw, noise.sigma2_u)?);
    let v = nats(sinr_e(f, e, &eq.g_e, hw, noise.sigma2_e)?);
    Ok((u - v) / LN2)
}

/// Secrecy rate `max(R_U - R_E, 0)` in bits/s/Hz.
pub fn secrecy_rate(
    f: &CVector,
    e: &CVector,
    eq: &EquivalentChannels,
    hw: &HardwareProfile,
    noise: &NoiseConfig,
) -> Result<f64> {
    Ok(rate_difference(f, e, eq, hw, noise)?.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{complex_gaussian, diag_part, outer, quad_form};
    use crate::rng::substream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rand_channels(seed: u64, n: usize, m: usize) -> ChannelSet {
        let mut rng = substream(seed, "chan");
        ChannelSet {
            h_br: {
                let v = complex_gaussian(&mut rng, m * n);
                CMatrix::from_column_slice(m, n, v.as_slice())
            },
            h_bu: complex_gaussian(&mut rng, n),
            h_ru: complex_gaussian(&mut rng, m),
            h_be: complex_gaussian(&mut rng, n),
            h_re: complex_gaussian(&mut rng, m),
        }
    }

    fn rand_phases(seed: u64, m: usize) -> ReflectVectorE {
        use rand::Rng;
        let mut rng = substream(seed, "phase");
        let p: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        ReflectVectorE::from_phases(&p)
    }

    #[test]
    fn equivalent_channel_degenerate_and_zero_ris() {
        let mut ch = rand_channels(1, 3, 0);
        let eq = equivalent_channels(&ch);
        assert_eq!(eq.g_u.shape(), (1, 3));
        for n in 0..3 {
            assert_eq!(eq.g_u[(0, n)], ch.h_bu[n].conj());
        }
        ch = rand_channels(2, 3, 4);
        ch.h_ru.fill(C64::new(0.0, 0.0));
        let eq = equivalent_channels(&ch);
        assert!(eq.g_u.rows(0, 4).iter().all(|c| c.norm() == 0.0));
        assert_eq!(eq.g_e.row(4).transpose(), ch.h_be.map(|c| c.conj()));
    }

    #[test]
    fn equivalent_channel_matches_direct_expansion() {
        let ch = rand_channels(3, 2, 2);
        let f = complex_gaussian(&mut substream(4, "f"), 2);
        let e = rand_phases(5, 2);
        let eq = equivalent_channels(&ch);
        // E = diag(conj(e_1), ..., conj(e_M)).
        let big_e = CMatrix::from_diagonal(&CVector::from_iterator(2, (0..2).map(|m| e[m].conj())));
        let row = ch.h_bu.adjoint() + ch.h_ru.adjoint() * big_e * &ch.h_br;
        let direct = (row * &f)[0];
        let via_g = e.dotc(&(&eq.g_u * &f));
        assert!((direct - via_g).norm() < 1e-12);
    }

    #[test]
    fn phi_trivial_cases() {
        let ch = rand_channels(6, 3, 2);
        let eq = equivalent_channels(&ch);
        let e = rand_phases(7, 2);
        let f = complex_gaussian(&mut substream(8, "f"), 3);
        let ideal = HardwareProfile::IDEAL;
        assert_relative_eq!(phi_u(&f, &e, &eq.g_u, &ideal, 2.5).unwrap(), 2.5);
        assert_relative_eq!(phi_e(&f, &e, &eq.g_e, &HardwareProfile { mu_t: 0.0, mu_r: 0.3 }, 1.5).unwrap(), 1.5);
        let hw = HardwareProfile { mu_t: 0.05, mu_r: 0.1 };
        let zero = CVector::zeros(3);
        assert_relative_eq!(phi_u(&zero, &e, &eq.g_u, &hw, 2.0).unwrap(), 1.1 * 2.0);
        assert_relative_eq!(phi_e(&zero, &e, &eq.g_e, &hw, 2.0).unwrap(), 2.0);
    }

    #[test]
    fn phi_matches_matrix_definition() {
        let ch = rand_channels(9, 4, 3);
        let eq = equivalent_channels(&ch);
        let e = rand_phases(10, 3);
        let f = complex_gaussian(&mut substream(11, "f"), 4);
        let hw = HardwareProfile { mu_t: 0.03, mu_r: 0.07 };
        let ff = outer(&f, &f);
        let inner = &ff * C64::new(hw.mu_r, 0.0) + diag_part(&ff) * C64::new((1.0 + hw.mu_r) * hw.mu_t, 0.0);
        let expect_u = quad_form(&(&eq.g_u * inner * eq.g_u.adjoint()), &e) + (1.0 + hw.mu_r) * 0.7;
        assert_relative_eq!(phi_u(&f, &e, &eq.g_u, &hw, 0.7).unwrap(), expect_u, max_relative = 1e-12);
        let ge = eq.g_e.adjoint() * outer(&e, &e) * &eq.g_e;
        let expect_e = hw.mu_t * quad_form(&diag_part(&ge), &f) + 0.4;
        assert_relative_eq!(phi_e(&f, &e, &eq.g_e, &hw, 0.4).unwrap(), expect_e, max_relative = 1e-12);
    }

    #[test]
    fn scalar_awgn_rate() {
        let ch = ChannelSet {
            h_br: CMatrix::zeros(0, 1),
            h_bu: CVector::from_element(1, C64::new(1.0, 0.0)),
            h_ru: CVector::zeros(0),
            h_be: CVector::from_element(1, C64::new(0.5, 0.0)),
            h_re: CVector::zeros(0),
        };
        let eq = equivalent_channels(&ch);
        let p: f64 = 3.0;
        let f = CVector::from_element(1, C64::new(p.sqrt(), 0.0));
        let e = ReflectVectorE::ones(0);
        let r = rate_u(&f, &e, &eq.g_u, &HardwareProfile::IDEAL, 1.0).unwrap();
        assert_relative_eq!(r, (1.0 + p).log2(), max_relative = 1e-14);
        let noise = NoiseConfig { sigma2_u: 1.0, sigma2_e: 1.0 };
        let s = secrecy_rate(&f, &e, &eq, &HardwareProfile::IDEAL, &noise).unwrap();
        assert_relative_eq!(s, (1.0 + p).log2() - (1.0 + 0.25 * p).log2(), max_relative = 1e-12);
        let zero = CVector::zeros(1);
        assert_eq!(rate_u(&zero, &e, &eq.g_u, &HardwareProfile::IDEAL, 1.0).unwrap(), 0.0);
        assert_eq!(secrecy_rate(&zero, &e, &eq, &HardwareProfile::IDEAL, &noise).unwrap(), 0.0);
    }

    #[test]
    fn identical_links_have_zero_secrecy() {
        let mut ch = rand_channels(12, 3, 2);
        ch.h_be = ch.h_bu.clone();
        ch.h_re = ch.h_ru.clone();
        let eq = equivalent_channels(&ch);
        let f = complex_gaussian(&mut substream(13, "f"), 3);
        let e = rand_phases(14, 2);
        let noise = NoiseConfig { sigma2_u: 0.3, sigma2_e: 0.3 };
        let s = secrecy_rate(&f, &e, &eq, &HardwareProfile::IDEAL, &noise).unwrap();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn reflect_vector_validation() {
        assert!(ReflectVectorE::new(CVector::from_vec(vec![C64::new(0.0, 1.0), C64::new(1.0, 0.0)])).is_ok());
        assert!(ReflectVectorE::new(CVector::from_vec(vec![C64::new(0.5, 0.0), C64::new(1.0, 0.0)])).is_err());
        assert!(ReflectVectorE::new(CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)])).is_err());
        assert!(BeamformerF(CVector::from_element(2, C64::new(1.0, 0.0))).check_feasible(1.5).is_err());
        assert!(BeamformerF(CVector::from_element(2, C64::new(1.0, 0.0))).check_feasible(2.0).is_ok());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let eq = equivalent_channels(&rand_channels(15, 3, 2));
        let f = CVector::zeros(2);
        assert!(matches!(phi_u(&f, &ReflectVectorE::ones(2), &eq.g_u, &HardwareProfile::IDEAL, 1.0), Err(Error::Dimension(_))));
    }

    fn arb_cvec(n: usize) -> impl Strategy<Value = CVector> {
        prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), n)
            .prop_map(move |v| CVector::from_iterator(n, v.into_iter().map(|(a, b)| C64::new(a, b))))
    }

    proptest! {
        #[test]
        fn diag_identity(x in arb_cvec(5), y in arb_cvec(5)) {
            let lhs = quad_form(&diag_part(&outer(&x, &x)), &y);
            let rhs = quad_form(&diag_part(&outer(&y, &y)), &x);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }

        #[test]
        fn noise_floors_and_monotonicity(
            seed in 0u64..1000,
            mu_t in 0.0f64..0.2, mu_r in 0.0f64..0.2,
            dt in 0.0f64..0.1, dr in 0.0f64..0.1,
        ) {
            let eq = equivalent_channels(&rand_channels(seed, 3, 3));
            let f = complex_gaussian(&mut substream(seed, "pf"), 3);
            let e = rand_phases(seed, 3);
            let hw = HardwareProfile { mu_t, mu_r };
            let pu = phi_u(&f, &e, &eq.g_u, &hw, 0.8).unwrap();
            let pe = phi_e(&f, &e, &eq.g_e, &hw, 0.6).unwrap();
            prop_assert!(pu >= (1.0 + mu_r) * 0.8 * (1.0 - 1e-12));
            prop_assert!(pe >= 0.6 * (1.0 - 1e-12));
            let pu_t = phi_u(&f, &e, &eq.g_u, &HardwareProfile { mu_t: mu_t + dt, mu_r }, 0.8).unwrap();
            let pu_r = phi_u(&f, &e, &eq.g_u, &HardwareProfile { mu_t, mu_r: mu_r + dr }, 0.8).unwrap();
            prop_assert!(pu_t >= pu * (1.0 - 1e-12));
            prop_assert!(pu_r >= pu * (1.0 - 1e-12));
        }

        #[test]
        fn secrecy_clamp_and_classical_reduction(seed in 0u64..1000) {
            let eq = equivalent_channels(&rand_channels(seed, 2, 2));
            let f = complex_gaussian(&mut substream(seed, "sf"), 2);
            let e = rand_phases(seed, 2);
            let noise = NoiseConfig { sigma2_u: 0.5, sigma2_e: 0.9 };
            let hw = HardwareProfile { mu_t: 0.02, mu_r: 0.04 };
            let s = secrecy_rate(&f, &e, &eq, &hw, &noise).unwrap();
            let ru = rate_u(&f, &e, &eq.g_u, &hw, 0.5).unwrap();
            prop_assert!(s >= 0.0 && s <= ru + 1e-12);

            let ideal = HardwareProfile::IDEAL;
            let snr_u = signal_power(&f, &e, &eq.g_u).unwrap() / 0.5;
            let snr_e = signal_power(&f, &e, &eq.g_e).unwrap() / 0.9;
            let classical = ((1.0 + snr_u).log2() - (1.0 + snr_e).log2()).max(0.0);
            let ours = secrecy_rate(&f, &e, &eq, &ideal, &noise).unwrap();
            prop_assert!((ours - classical).abs() < 1e-10);
        }
    }
}
