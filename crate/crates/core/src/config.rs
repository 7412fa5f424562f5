//! Optional TOML file overriding the physical constants and the logical
//! amplitudes.
//!
//! ```toml
//! attenuation_length_km = 22.0
//! light_speed_km_per_s = 2.0e5
//! alpha = [1.0, 1.0, 1.0]   # rescaled to unit norm
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::channel::PhysicalConstants;
use crate::codes::AmplitudeVector;
use crate::error::{Error, Result};

/// Environment variable naming a config file when none is given explicitly.
pub const CONFIG_ENV: &str = "QAGG_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub attenuation_length_km: Option<f64>,
    pub light_speed_km_per_s: Option<f64>,
    pub alpha: Option<Vec<f64>>,
}

impl FileConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn constants(&self) -> Result<PhysicalConstants> {
        let d = PhysicalConstants::default();
        PhysicalConstants::new(
            self.attenuation_length_km.unwrap_or(d.attenuation_length_km()),
            self.light_speed_km_per_s.unwrap_or(d.light_speed_km_per_s()),
        )
    }

    /// Configured amplitudes, checked against the qudit dimension.
    pub fn alpha(&self, dim: usize) -> Result<Option<AmplitudeVector>> {
        self.alpha
            .as_deref()
            .map(|a| {
                let v = AmplitudeVector::from_real(a)?;
                v.check_dim(dim)?;
                Ok(v)
            })
            .transpose()
    }
}
