//! On-disk layout of a run and the provenance block embedded in every
//! artifact.
//!
//! ```text
//! <out>/dataset.romcp
//! <out>/models/<method>/model.romcp
//! <out>/models/cv_plus/fold_NN.romcp
//! <out>/calibrations/<method>/<target>_alpha<alpha>.romcp
//! <out>/evaluation/{coverage,summary,widths}.csv, widths_<method>.svg, provenance.json
//! <out>/report/report.md
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use romcp::conformal::{CpMethod, UqTarget};
use romcp::container::{sha256_file, Container};
use romcp::dataset::{DatasetSplit, SplitScheme};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

pub const TOOL: &str = concat!("romcp ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.romcp")
    }

    pub fn model(&self, method: CpMethod) -> PathBuf {
        self.root.join("models").join(method.to_string()).join("model.romcp")
    }

    pub fn fold_model(&self, method: CpMethod, fold: usize) -> PathBuf {
        self.root
            .join("models")
            .join(method.to_string())
            .join(format!("fold_{fold:02}.romcp"))
    }

    pub fn calibration_dir(&self, method: CpMethod) -> PathBuf {
        self.root.join("calibrations").join(method.to_string())
    }

    pub fn calibration(&self, method: CpMethod, target: UqTarget, alpha: f64) -> PathBuf {
        self.calibration_dir(method).join(format!("{target}_alpha{alpha}.romcp"))
    }

    pub fn evaluation_dir(&self, on_calibration: bool) -> PathBuf {
        self.root.join(if on_calibration {
            "evaluation_on_calibration"
        } else {
            "evaluation"
        })
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

/// How a model's samples were divided; indices refer to the trajectories
/// kept by the liquid-water filter (`kept[i]` is the dataset index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub scheme: SplitScheme,
    pub kept: Vec<usize>,
    pub split: DatasetSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub stage: String,
    /// The full run configuration.
    pub config: RunConfig,
    /// Digest of the configuration sections this artifact depends on.
    pub config_digest: String,
    /// SHA-256 of every input file, by role.
    pub inputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitRecord>,
}

impl Provenance {
    pub fn new(stage: &str, config: &RunConfig, config_digest: String) -> Self {
        Self {
            tool: TOOL.to_string(),
            stage: stage.to_string(),
            config: config.clone(),
            config_digest,
            inputs: BTreeMap::new(),
            split: None,
        }
    }

    pub fn with_input(mut self, role: impl Into<String>, sha: impl Into<String>) -> Self {
        self.inputs.insert(role.into(), sha.into());
        self
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("provenance serialises")
    }

    /// Reads the provenance block of a container artifact.
    pub fn of(container: &Container, path: &Path) -> Result<Self, CliError> {
        let raw = container
            .meta
            .get("provenance")
            .cloned()
            .unwrap_or(serde_json::Value::Null);
        serde_json::from_value(raw)
            .map_err(|e| CliError::Data(format!("{} has no usable provenance ({e})", path.display())))
    }

    /// Fails unless this artifact was produced from the current
    /// configuration and from the given input files.
    pub fn check(
        &self,
        path: &Path,
        config_digest: &str,
        inputs: &[(&str, &str)],
        stage: &str,
    ) -> Result<(), CliError> {
        if self.config_digest != config_digest {
            log::error!("{} was produced with a different configuration", path.display());
            return Err(CliError::stale(path.display(), stage));
        }
        for (role, sha) in inputs {
            if self.inputs.get(*role).map(String::as_str) != Some(*sha) {
                log::error!("{} was produced from a different {role}", path.display());
                return Err(CliError::stale(path.display(), stage));
            }
        }
        Ok(())
    }
}

/// Reads a container, mapping a missing file to a hint about which stage
/// creates it.
pub fn read_container(path: &Path, kind: &str, stage: &str) -> Result<(Container, String), CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!(
            "{} not found; run `romcp {stage}` first",
            path.display()
        )));
    }
    let sha = sha256_file(path)?;
    Ok((Container::read(path, kind)?, sha))
}
