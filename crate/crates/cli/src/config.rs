use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nexus_core::backend::{
    AnalystBackend, NavigatorBackend, PlannerBackend, RemoteBackend, ScriptedAnalyst, ScriptedNavigator,
    ScriptedPlanner,
};
use nexus_core::eval::PricingTable;
use nexus_core::scheduler::{Backends, Clock, SchedulerConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable that overrides the master seed of a run.
pub const SEED_ENV: &str = "NEXUS_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {message}")]
    Read { path: String, message: String },
    #[error("parsing config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{field}: path {path} does not exist")]
    MissingPath { field: String, path: String },
    #[error("parallelism must be at least 1")]
    Parallelism,
    #[error("scheduler: {0}")]
    Scheduler(String),
    #[error("pricing: {0}")]
    Pricing(String),
    #[error("{role} backend: {message}")]
    Backend { role: &'static str, message: String },
    #[error("invalid {SEED_ENV} value `{0}`")]
    Seed(String),
}

/// Which snapshot each task starts from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotPolicy {
    pub default: String,
    #[serde(default)]
    pub per_task: BTreeMap<String, String>,
}

impl SnapshotPolicy {
    pub fn uniform(id: impl Into<String>) -> Self {
        Self {
            default: id.into(),
            per_task: BTreeMap::new(),
        }
    }

    pub fn snapshot_for(&self, task_id: &str) -> &str {
        self.per_task.get(task_id).map_or(self.default.as_str(), String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendBinding {
    /// Path to a response table.
    Scripted(PathBuf),
    Remote {
        endpoint: String,
        identity: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendBindings {
    pub planner: BackendBinding,
    pub navigator: BackendBinding,
    pub analyst: BackendBinding,
}

fn default_parallelism() -> usize {
    1
}

/// A run configuration file. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub suite: PathBuf,
    pub snapshots: PathBuf,
    pub snapshot_policy: SnapshotPolicy,
    pub backends: BackendBindings,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub pricing: Option<PricingTable>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub clock: Clock,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn must_exist(field: &str, p: &Path) -> Result<(), ConfigError> {
    if p.exists() {
        Ok(())
    } else {
        Err(ConfigError::MissingPath {
            field: field.to_string(),
            path: p.display().to_string(),
        })
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut config: RunConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.suite = resolve(base, &config.suite);
        config.snapshots = resolve(base, &config.snapshots);
        config.output_dir = resolve(base, &config.output_dir);
        for b in [
            &mut config.backends.planner,
            &mut config.backends.navigator,
            &mut config.backends.analyst,
        ] {
            if let BackendBinding::Scripted(p) = b {
                *p = resolve(base, p);
            }
        }
        config.check()?;
        Ok(config)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        must_exist("suite", &self.suite)?;
        must_exist("snapshots", &self.snapshots)?;
        for (role, b) in self.bindings() {
            if let BackendBinding::Scripted(p) = b {
                must_exist(&format!("backends.{role}"), p)?;
            }
        }
        if self.parallelism == 0 {
            return Err(ConfigError::Parallelism);
        }
        self.scheduler.check().map_err(ConfigError::Scheduler)?;
        if let Some(p) = &self.pricing {
            p.check().map_err(|e| ConfigError::Pricing(e.to_string()))?;
        }
        Ok(())
    }

    fn bindings(&self) -> [(&'static str, &BackendBinding); 3] {
        [
            ("planner", &self.backends.planner),
            ("navigator", &self.backends.navigator),
            ("analyst", &self.backends.analyst),
        ]
    }

    /// Apply a `NEXUS_SEED`-style override, if present.
    pub fn with_seed_override(mut self, value: Option<&str>) -> Result<Self, ConfigError> {
        if let Some(v) = value {
            self.seed = v.trim().parse().map_err(|_| ConfigError::Seed(v.to_string()))?;
        }
        Ok(self)
    }

    pub fn build_backends(&self) -> Result<Backends, ConfigError> {
        let err = |role| {
            move |e: nexus_core::backend::BackendError| ConfigError::Backend {
                role,
                message: e.to_string(),
            }
        };
        let planner: Arc<dyn PlannerBackend> = match &self.backends.planner {
            BackendBinding::Scripted(p) => Arc::new(ScriptedPlanner::load(p).map_err(err("planner"))?),
            BackendBinding::Remote { endpoint, identity } => Arc::new(RemoteBackend::new(endpoint, identity)),
        };
        let navigator: Arc<dyn NavigatorBackend> = match &self.backends.navigator {
            BackendBinding::Scripted(p) => Arc::new(ScriptedNavigator::load(p).map_err(err("navigator"))?),
            BackendBinding::Remote { endpoint, identity } => Arc::new(RemoteBackend::new(endpoint, identity)),
        };
        let analyst: Arc<dyn AnalystBackend> = match &self.backends.analyst {
            BackendBinding::Scripted(p) => Arc::new(ScriptedAnalyst::load(p).map_err(err("analyst"))?),
            BackendBinding::Remote { endpoint, identity } => Arc::new(RemoteBackend::new(endpoint, identity)),
        };
        let backends = Backends {
            planner,
            navigator,
            analyst,
        };
        if let Some(pricing) = &self.pricing {
            let ids = backends.ids();
            for id in [&ids.planner, &ids.navigator, &ids.analyst] {
                if !pricing.0.contains_key(id) {
                    return Err(ConfigError::Pricing(format!("no rate for backend `{id}`")));
                }
            }
        }
        Ok(backends)
    }
}
