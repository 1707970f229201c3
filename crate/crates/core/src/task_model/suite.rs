use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{instantiate_all, CompositionalTask, TaskTemplate, TemplateError};

/// A suite document: metadata, concrete tasks and templates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSuite {
    pub name: String,
    pub version: String,
    #[serde(default)]
    pub tasks: Vec<CompositionalTask>,
    #[serde(default)]
    pub templates: Vec<TaskTemplate>,
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("reading suite {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing suite {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl TaskSuite {
    pub fn load(path: &Path) -> Result<Self, SuiteError> {
        let text = fs::read_to_string(path).map_err(|source| SuiteError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| SuiteError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("suite serializes");
        s.push('\n');
        s
    }

    pub fn task(&self, id: &str) -> Option<&CompositionalTask> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Concrete tasks followed by every instantiation of every template.
    pub fn expand(&self, seed: u64) -> Result<Vec<CompositionalTask>, TemplateError> {
        let mut out = self.tasks.clone();
        for t in &self.templates {
            out.extend(instantiate_all(t, seed)?);
        }
        Ok(out)
    }
}
