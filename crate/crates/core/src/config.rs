use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable overriding the block store root directory.
pub const STORE_ROOT_ENV: &str = "TESSERA_STORE_ROOT";

/// Default element threshold above which the circuit frontend splits an
/// index of a planned intermediate into two blocks.
pub const DEFAULT_BLOCK_THRESHOLD: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeProfile {
    pub cores: usize,
    pub memory_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Sequential,
    Tree,
    Commutative,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Sequential => "sequential",
            Strategy::Tree => "tree",
            Strategy::Commutative => "commutative",
        })
    }
}

impl FromStr for Strategy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<StrategyChoice>()?
            .forced()
            .ok_or_else(|| ConfigError::Strategy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyChoice {
    #[default]
    Auto,
    Sequential,
    Tree,
    Commutative,
}

impl StrategyChoice {
    pub fn forced(self) -> Option<Strategy> {
        match self {
            StrategyChoice::Auto => None,
            StrategyChoice::Sequential => Some(Strategy::Sequential),
            StrategyChoice::Tree => Some(Strategy::Tree),
            StrategyChoice::Commutative => Some(Strategy::Commutative),
        }
    }
}

impl From<Strategy> for StrategyChoice {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Sequential => StrategyChoice::Sequential,
            Strategy::Tree => StrategyChoice::Tree,
            Strategy::Commutative => StrategyChoice::Commutative,
        }
    }
}

impl FromStr for StrategyChoice {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(StrategyChoice::Auto),
            "sequential" | "seq" => Ok(StrategyChoice::Sequential),
            "tree" => Ok(StrategyChoice::Tree),
            "commutative" | "comm" => Ok(StrategyChoice::Commutative),
            other => Err(ConfigError::Strategy(other.to_string())),
        }
    }
}

impl fmt::Display for StrategyChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.forced() {
            Some(s) => s.fmt(f),
            None => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("unknown strategy {0:?} (expected auto, sequential, tree or commutative)")]
    Strategy(String),
}

/// Settings the planner and runtime consult.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub nodes: usize,
    pub cores_per_node: usize,
    pub memory_bytes_per_node: u64,
    pub workers: usize,
    pub seed: u64,
    pub strategy: StrategyChoice,
    /// Largest B_k for which the tuner still picks sequential reduction.
    pub bk_threshold: usize,
    pub store_root: Option<PathBuf>,
    pub trace_path: Option<PathBuf>,
    pub store_quota_bytes: Option<u64>,
    pub migrate: bool,
    pub block_threshold_elements: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            nodes: 1,
            cores_per_node: 4,
            memory_bytes_per_node: 4 << 30,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            seed: 0,
            strategy: StrategyChoice::Auto,
            bk_threshold: 4,
            store_root: None,
            trace_path: None,
            store_quota_bytes: None,
            migrate: false,
            block_threshold_elements: DEFAULT_BLOCK_THRESHOLD,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let checks = [
            (self.nodes as u64, "nodes"),
            (self.cores_per_node as u64, "cores per node"),
            (self.memory_bytes_per_node, "memory per node"),
            (self.workers as u64, "workers"),
            (self.bk_threshold as u64, "B_k threshold"),
            (self.block_threshold_elements as u64, "block threshold"),
        ];
        for (value, name) in checks {
            if value == 0 {
                return Err(ConfigError::NotPositive(name));
            }
        }
        Ok(())
    }

    pub fn node_profile(&self) -> NodeProfile {
        NodeProfile {
            cores: self.cores_per_node,
            memory_bytes: self.memory_bytes_per_node,
        }
    }

    pub fn node_profiles(&self) -> Vec<NodeProfile> {
        vec![self.node_profile(); self.nodes]
    }

    /// Explicit root, else the environment override, else none (temporary).
    pub fn resolved_store_root(&self) -> Option<PathBuf> {
        self.store_root
            .clone()
            .or_else(|| std::env::var_os(STORE_ROOT_ENV).map(PathBuf::from))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_parsing() {
        assert_eq!("Commutative".parse::<StrategyChoice>().unwrap(), StrategyChoice::Commutative);
        assert_eq!("auto".parse::<StrategyChoice>().unwrap().forced(), None);
        assert!("fastest".parse::<StrategyChoice>().is_err());
    }

    #[test]
    fn zero_values_are_rejected() {
        let cfg = EngineConfig {
            workers: 0,
            ..EngineConfig::default()
        };
        assert_eq!(cfg.validate(), Err(ConfigError::NotPositive("workers")));
        assert!(EngineConfig::default().validate().is_ok());
    }
}
