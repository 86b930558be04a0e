//! Run configuration: a scenario plus the harness settings around it.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use belief_simplify::given_tree::GivenTreePlanner;
use belief_simplify::scenarios::ScenarioConfig;
use serde::{Deserialize, Serialize};

use crate::bounds_study::BoundsStudyConfig;
use crate::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerKind {
    Ss,
    SithBsp,
    LazyBsp,
    PftDpw,
    SithPft,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 5] =
        [PlannerKind::Ss, PlannerKind::SithBsp, PlannerKind::LazyBsp, PlannerKind::PftDpw, PlannerKind::SithPft];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Ss => "ss",
            PlannerKind::SithBsp => "sith-bsp",
            PlannerKind::LazyBsp => "lazy-bsp",
            PlannerKind::PftDpw => "pft-dpw",
            PlannerKind::SithPft => "sith-pft",
        }
    }

    pub fn given_tree(self) -> Option<GivenTreePlanner> {
        match self {
            PlannerKind::Ss => Some(GivenTreePlanner::Ss),
            PlannerKind::SithBsp => Some(GivenTreePlanner::SithBsp),
            PlannerKind::LazyBsp => Some(GivenTreePlanner::LazyBsp),
            _ => None,
        }
    }

    pub fn is_mcts(self) -> bool {
        self.given_tree().is_none()
    }

    /// The exact planner this one must agree with.
    pub fn baseline(self) -> PlannerKind {
        match self {
            PlannerKind::SithBsp | PlannerKind::LazyBsp | PlannerKind::Ss => PlannerKind::Ss,
            PlannerKind::SithPft | PlannerKind::PftDpw => PlannerKind::PftDpw,
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        PlannerKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown planner {s:?}")))
    }
}

fn default_trials() -> usize {
    1
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub scenario: ScenarioConfig,
    /// Planners run by `benchmark`; empty picks the family matching the scenario.
    #[serde(default)]
    pub planners: Vec<PlannerKind>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub bounds_study: Option<BoundsStudyConfig>,
}

impl RunConfig {
    pub fn new(scenario: ScenarioConfig) -> Self {
        Self { scenario, planners: Vec::new(), trials: default_trials(), seed: 0, bounds_study: None }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.scenario.validate()?;
        Ok(cfg)
    }

    /// Configured planners, or SS/SITH-BSP/LAZY-BSP for given trees and PFT-DPW/SITH-PFT otherwise.
    pub fn planners(&self) -> Vec<PlannerKind> {
        if !self.planners.is_empty() {
            self.planners.clone()
        } else if self.scenario.dpw.is_some() && self.scenario.n_z.is_empty() {
            vec![PlannerKind::PftDpw, PlannerKind::SithPft]
        } else {
            vec![PlannerKind::Ss, PlannerKind::SithBsp, PlannerKind::LazyBsp]
        }
    }
}
