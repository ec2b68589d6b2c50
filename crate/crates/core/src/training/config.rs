use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PadError, Result};
use crate::losses::AlphaSchedule;

/// The seven training strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Bc,
    Mt,
    AdvBc,
    AdvMt,
    Dfs,
    MtDfs,
    AdvDfs,
}

impl Strategy {
    pub const ALL: [Strategy; 7] =
        [Strategy::Bc, Strategy::Mt, Strategy::AdvBc, Strategy::AdvMt, Strategy::Dfs, Strategy::MtDfs, Strategy::AdvDfs];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Bc => "bc",
            Strategy::Mt => "mt",
            Strategy::AdvBc => "adv_bc",
            Strategy::AdvMt => "adv_mt",
            Strategy::Dfs => "dfs",
            Strategy::MtDfs => "mt_dfs",
            Strategy::AdvDfs => "adv_dfs",
        }
    }

    /// Label used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Strategy::Bc => "BC",
            Strategy::Mt => "MT",
            Strategy::AdvBc => "Adv.+BC",
            Strategy::AdvMt => "Adv.+MT",
            Strategy::Dfs => "DFS",
            Strategy::MtDfs => "MT+DFS",
            Strategy::AdvDfs => "Adv.+DFS",
        }
    }

    pub fn is_adversarial(self) -> bool {
        matches!(self, Strategy::AdvBc | Strategy::AdvMt | Strategy::AdvDfs)
    }

    pub fn is_multitask(self) -> bool {
        matches!(self, Strategy::Mt | Strategy::AdvMt | Strategy::MtDfs)
    }

    pub fn is_dfs(self) -> bool {
        matches!(self, Strategy::Dfs | Strategy::MtDfs | Strategy::AdvDfs)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = PadError;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| PadError::Config(format!("unknown strategy '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub learning_rate: f32,
    pub epochs: usize,
    pub batch_size: usize,
    pub alpha_schedule: AlphaSchedule,
    pub seed: u64,
    pub dfs_frames_per_video: usize,
    /// ADVERSARY updates per MAIN update in the alternating schedule.
    pub adversary_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Bc,
            learning_rate: 0.001,
            epochs: 20,
            batch_size: 32,
            alpha_schedule: AlphaSchedule::default(),
            seed: 0,
            dfs_frames_per_video: 3,
            adversary_steps: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(PadError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return err(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return err("batch_size must be at least 1".into());
        }
        if self.dfs_frames_per_video == 0 {
            return err("dfs_frames_per_video must be at least 1".into());
        }
        if self.adversary_steps == 0 {
            return err("adversary_steps must be at least 1".into());
        }
        if self.alpha_schedule.step < 0.0 {
            return err("alpha schedule step must be non-negative".into());
        }
        Ok(())
    }
}
