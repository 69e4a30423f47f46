use crate::channel::{build_scenario, ChannelSet};
use crate::config::SystemConfig;
use crate::linalg::{CMatrix, CVector, C64};
use crate::metrics::{equivalent_channels, BeamformerF, EquivalentChannels, NoiseConfig};

pub struct Scenario {
    pub channels: ChannelSet,
    pub eq: EquivalentChannels,
    pub noise: NoiseConfig,
    pub p_max: f64,
}

/// A default-geometry draw in noise-normalized units.
pub fn scenario(n: usize, m: usize, p_dbm: f64, seed: u64) -> Scenario {
    let config = SystemConfig { n_antennas: n, n_elements: m, p_max_dbm: p_dbm, ..SystemConfig::default() };
    let raw = build_scenario(&config, seed).unwrap();
    let (channels, noise) = raw.normalized(&config.noise());
    Scenario { eq: equivalent_channels(&channels), channels, noise, p_max: config.p_max_watt() }
}

/// Single-antenna, RIS-free link with the given direct gains.
pub fn scalar_link(g_u: f64, g_e: f64, sigma2_e: f64) -> Scenario {
    let channels = ChannelSet {
        h_br: CMatrix::zeros(0, 1),
        h_bu: CVector::from_element(1, C64::new(g_u.sqrt(), 0.0)),
        h_ru: CVector::zeros(0),
        h_be: CVector::from_element(1, C64::new(0.0, g_e.sqrt())),
        h_re: CVector::zeros(0),
    };
    Scenario { eq: equivalent_channels(&channels), channels, noise: NoiseConfig { sigma2_u: 1.0, sigma2_e }, p_max: 1.0 }
}

pub fn mrt(s: &Scenario) -> BeamformerF {
    let h = &s.channels.h_bu;
    BeamformerF(h * C64::from(s.p_max.sqrt() / h.norm()))
}
