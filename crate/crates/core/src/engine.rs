use std::sync::Arc;

use crate::config::EngineConfig;
use crate::dense::DenseTensor;
use crate::planner::{plan, BlockArray, BlockLayout, ContractionPlan, ContractionSpec, TuneConfig};
use crate::runtime::{execute_contraction, export_trace, ContractionRun, Runtime};
use crate::store::{BlockStore, StoreConfig};
use crate::Error;

/// Block store, runtime and tuner settings bundled together.
#[derive(Debug)]
pub struct Engine {
    config: EngineConfig,
    runtime: Runtime,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self, Error> {
        config.validate()?;
        let store = BlockStore::open(StoreConfig {
            root: config.resolved_store_root(),
            nodes: config.nodes,
            quota_bytes: config.store_quota_bytes,
            migrate: config.migrate,
        })?;
        let runtime = Runtime::new(config.node_profiles(), config.workers, Arc::new(store));
        Ok(Self { config, runtime })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn runtime(&self) -> &Runtime {
        &self.runtime
    }

    pub fn store(&self) -> &Arc<BlockStore> {
        self.runtime.store()
    }

    pub fn tune_config(&self) -> TuneConfig {
        TuneConfig {
            strategy: self.config.strategy,
            bk_threshold: self.config.bk_threshold,
        }
    }

    pub fn plan(&self, a: &BlockLayout, b: &BlockLayout) -> Result<ContractionPlan, Error> {
        let spec = ContractionSpec::new(a.clone(), b.clone())?;
        Ok(plan(spec, self.config.node_profile(), self.tune_config())?)
    }

    /// Splits a dense tensor into stored blocks, homed round-robin over nodes.
    pub fn scatter(&self, layout: BlockLayout, dense: &DenseTensor) -> Result<BlockArray, Error> {
        Ok(BlockArray::scatter(self.store(), layout, dense)?)
    }

    pub fn gather(&self, array: &BlockArray) -> Result<DenseTensor, Error> {
        Ok(array.gather(self.store(), 0)?)
    }

    /// Plans and runs `a x b`. Writes the trace when a trace path is configured.
    pub fn contract(&self, a: &BlockArray, b: &BlockArray) -> Result<ContractionRun, Error> {
        let plan = self.plan(a.layout(), b.layout())?;
        let run = execute_contraction(&self.runtime, &plan, a, b)?;
        if let Some(path) = &self.config.trace_path {
            export_trace(&run.report.trace, path)?;
        }
        Ok(run)
    }
}
