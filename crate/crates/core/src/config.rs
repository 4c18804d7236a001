//! JSON run configuration shared by the `hp run` and `study run` commands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapt::AdaptConfig;
use crate::bands::{BandProvider, ProviderConfig};
use crate::error::{Error, Result};

fn default_grid() -> usize {
    100
}

fn default_output() -> PathBuf {
    PathBuf::from("run")
}

/// Adaptive parameters at top level, plus provider, reference grid side,
/// output directory and the number of reported bands.
///
/// ```json
/// {"L": 3, "nMax": 8, "mu": 1.0,
///  "provider": {"kind": "synthetic", "model": {"type": "crossingLine"}, "bands": 3},
///  "grid": 100, "outputDir": "run"}
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunConfig {
    #[serde(flatten)]
    pub adapt: AdaptConfig,
    pub provider: ProviderConfig,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Bands entering error reports; defaults to L - 2 (at least 1).
    #[serde(default)]
    pub report_bands: Option<usize>,
}

impl RunConfig {
    /// Parses the JSON text. A FEM provider without an explicit `domain`
    /// gets its lattice's irreducible Brillouin zone.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let has_domain = value.get("domain").is_some();
        let mut cfg: RunConfig = serde_json::from_value(value)?;
        if let (false, ProviderConfig::Fem(fem)) = (has_domain, &cfg.provider) {
            cfg.adapt.domain = fem.ibz();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn report_bands(&self) -> usize {
        self.report_bands
            .unwrap_or(self.adapt.num_bands.saturating_sub(2))
            .max(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.adapt.validate()?;
        let rb = self.report_bands();
        if rb > self.adapt.num_bands - 1 {
            return Err(Error::InvalidInput(format!(
                "reportBands = {rb} exceeds L - 1 = {}",
                self.adapt.num_bands - 1
            )));
        }
        if self.grid == 0 {
            return Err(Error::InvalidInput("grid must be >= 1".into()));
        }
        Ok(())
    }

    /// Builds the provider and checks it supplies at least L bands.
    pub fn build_provider(&self) -> Result<Box<dyn BandProvider>> {
        let p = self.provider.build()?;
        if p.num_bands() < self.adapt.num_bands {
            return Err(Error::InvalidInput(format!(
                "provider supplies {} bands, L = {}",
                p.num_bands(),
                self.adapt.num_bands
            )));
        }
        Ok(p)
    }
}
