use serde::{Deserialize, Serialize};

use crate::ao::AoOptions;
use crate::channel::{dbm_to_watt, FadingParams, Geometry};
use crate::error::{Error, Result};
use crate::metrics::{HardwareProfile, NoiseConfig};

/// Every scalar describing one simulated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// BS antennas (N).
    pub n_antennas: usize,
    /// RIS elements (M).
    pub n_elements: usize,
    pub p_max_dbm: f64,
    pub noise_dbm_user: f64,
    pub noise_dbm_eve: f64,
    pub hardware: HardwareProfile,
    pub geometry: Geometry,
    pub fading: FadingParams,
    pub ao: AoOptions,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_antennas: 4,
            n_elements: 32,
            p_max_dbm: 30.0,
            noise_dbm_user: -80.0,
            noise_dbm_eve: -80.0,
            hardware: HardwareProfile { mu_t: 0.01, mu_r: 0.01 },
            geometry: Geometry::default(),
            fading: FadingParams::default(),
            ao: AoOptions::default(),
        }
    }
}

impl SystemConfig {
    pub fn p_max_watt(&self) -> f64 {
        dbm_to_watt(self.p_max_dbm)
    }

    pub fn noise(&self) -> NoiseConfig {
        NoiseConfig {
            sigma2_u: dbm_to_watt(self.noise_dbm_user),
            sigma2_e: dbm_to_watt(self.noise_dbm_eve),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_antennas == 0 {
            return Err(Error::Config("n_antennas must be >= 1".into()));
        }
        if !self.p_max_dbm.is_finite() && self.p_max_dbm != f64::NEG_INFINITY {
            return Err(Error::Config(format!("invalid p_max_dbm {}", self.p_max_dbm)));
        }
        if !(self.noise_dbm_user.is_finite() && self.noise_dbm_eve.is_finite()) {
            return Err(Error::Config("noise levels must be finite".into()));
        }
        self.hardware.validate()?;
        self.geometry.validate()?;
        self.fading.validate()?;
        self.ao.validate()
    }
}
