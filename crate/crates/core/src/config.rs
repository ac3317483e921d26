//! One configuration document for a whole run.

use serde::{Deserialize, Serialize};

use crate::dga::DgaConfig;
use crate::error::{Error, Result};
use crate::graph::WindowSpec;
use crate::nfs::NfsConfig;
use crate::pool::PoolConfig;
use crate::structure::StructureConfig;

/// Reviewer split fractions; the test share is the remainder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train: 0.6, val: 0.2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Copied into every module seed by [`RunConfig::resolved`].
    pub seed: u64,
    pub min_reviews: usize,
    pub windows: WindowSpec,
    /// Mean-score threshold for flagging an extracted group.
    pub min_spam: f64,
    pub split: SplitConfig,
    pub structure: StructureConfig,
    pub nfs: NfsConfig,
    pub pool: PoolConfig,
    pub dga: DgaConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 72,
            min_reviews: 3,
            windows: WindowSpec::Count(10),
            min_spam: 0.6,
            split: SplitConfig::default(),
            structure: StructureConfig::default(),
            nfs: NfsConfig::default(),
            pool: PoolConfig::default(),
            dga: DgaConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.structure.validate()?;
        self.nfs.validate()?;
        self.pool.validate()?;
        self.dga.validate()?;
        if !(0.0..=1.0).contains(&self.min_spam) {
            return Err(Error::Config(format!("min_spam {} not in [0,1]", self.min_spam)));
        }
        let s = &self.split;
        if !(s.train > 0.0 && s.val >= 0.0 && s.train + s.val < 1.0) {
            return Err(Error::Config("split needs train > 0, val ≥ 0 and train + val < 1".into()));
        }
        match self.windows {
            WindowSpec::Count(0) => Err(Error::Config("window count must be ≥ 1".into())),
            WindowSpec::Duration(d) if d <= 0 => Err(Error::Config("window duration must be > 0".into())),
            _ => Ok(()),
        }
    }

    /// Validated copy with the top-level seed pushed into every module.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        c.structure.seed = c.seed;
        c.nfs.seed = c.seed;
        c.dga.seed = c.seed;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.resolved()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
