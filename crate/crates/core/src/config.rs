//! Campaign configuration files: strict TOML in, fully materialized
//! defaults out. Unknown keys are rejected so typos fail loudly instead of
//! silently running a different campaign.

use crate::harness::{ExperimentSpec, HarnessError};
use crate::scrub::ScrubPolicyConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignSection {
    /// Root seed; experiment i uses seed `seed_base + i`.
    pub seed_base: u64,
    pub runs: usize,
    /// Replays isolation/subset attribution for every failure when true.
    pub attribute_root_cause: bool,
    /// Worker threads; all cores when unset. The --workers flag wins.
    pub workers: Option<usize>,
    /// Output directory; the --out flag wins.
    pub out: Option<String>,
}

impl Default for CampaignSection {
    fn default() -> Self {
        CampaignSection {
            seed_base: 1,
            runs: 100,
            attribute_root_cause: true,
            workers: None,
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignFile {
    pub campaign: CampaignSection,
    pub experiment: ExperimentSpec,
    /// First policy is the comparison baseline.
    pub policies: Vec<ScrubPolicyConfig>,
}

impl Default for CampaignFile {
    fn default() -> Self {
        let experiment = ExperimentSpec::default();
        let frames = experiment.rp_frames();
        CampaignFile {
            campaign: CampaignSection::default(),
            experiment,
            policies: vec![
                ScrubPolicyConfig::NoScrub,
                ScrubPolicyConfig::PeriodicBlindFull { period: 1000 },
                ScrubPolicyConfig::FpScrub {
                    config: crate::predictor::FpScrubConfig::default(),
                    frames,
                },
            ],
        }
    }
}

impl CampaignFile {
    pub fn parse(text: &str) -> Result<CampaignFile, HarnessError> {
        let file: CampaignFile = toml::from_str(text)
            .map_err(|e| HarnessError::Config(format!("campaign file: {e}")))?;
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.experiment.validate()?;
        if self.policies.is_empty() {
            return Err(HarnessError::Config("campaign lists no policies".into()));
        }
        if self.campaign.runs == 0 {
            return Err(HarnessError::Config("campaign runs must be >= 1".into()));
        }
        for p in &self.policies {
            p.validate(self.experiment.dims())?;
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.campaign.runs as u64).map(|i| self.campaign.seed_base + i).collect()
    }

    /// Round-trip through TOML with every default written out explicitly.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("campaign serializes")
    }
}
