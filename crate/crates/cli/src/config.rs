//! Run configuration, read from a TOML file with every field optional.
//!
//! ```toml
//! seed = 0
//! out_dir = "romcp-out"
//!
//! [dataset]
//! n_samples = 618
//! kernel = { type = "constant", c = 6e-12 }
//!
//! [rom]
//! backend = "pod"
//! latent_dim = 4
//! derivative_noise = 1e-3
//!
//! [cp]
//! methods = ["vanilla", "split", "cv_plus"]
//! cv_folds = 20
//! targets = ["reconstruction", "latent_dynamics", "end_to_end"]
//! alphas = [0.10, 0.05, 0.02, 0.01]
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use romcp::conformal::{CpMethod, UqTarget};
use romcp::container::sha256_hex;
use romcp::dataset::{BinGrid, GeneratorConfig, InitialDsdParams, Kernel, SolverOptions, TimeGrid};
use romcp::rom::RomConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds dataset generation and the train/calibration/test splits.
    pub seed: u64,
    /// Not embedded in artifacts, so relocating a run does not change them.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub rom: RomConfig,
    pub cp: CpConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("romcp-out"),
            dataset: DatasetConfig::default(),
            rom: RomConfig::default(),
            cp: CpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_samples: usize,
    pub bin_grid: BinGrid,
    pub time_grid: TimeGrid,
    pub initial: InitialDsdParams,
    pub kernel: Kernel,
    pub solver: SolverOptions,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let g = GeneratorConfig::default();
        Self {
            n_samples: g.n_samples,
            bin_grid: BinGrid::default(),
            time_grid: TimeGrid::default(),
            initial: g.initial,
            kernel: g.kernel,
            solver: g.solver,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Vanilla,
    Split,
    CvPlus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpConfig {
    pub methods: Vec<MethodName>,
    pub cv_folds: usize,
    pub targets: Vec<UqTarget>,
    pub alphas: Vec<f64>,
}

impl Default for CpConfig {
    fn default() -> Self {
        Self {
            methods: vec![MethodName::Vanilla, MethodName::Split, MethodName::CvPlus],
            cv_folds: CpMethod::DEFAULT_FOLDS,
            targets: UqTarget::ALL.to_vec(),
            alphas: vec![0.10, 0.05, 0.02, 0.01],
        }
    }
}

fn digest(v: &impl Serialize) -> String {
    sha256_hex(&serde_json::to_vec(v).expect("config serialises"))
}

fn duplicates<T: Eq + std::hash::Hash>(items: &[T]) -> bool {
    let mut seen = HashSet::new();
    !items.iter().all(|x| seen.insert(x))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        let cp = &self.cp;
        if cp.methods.is_empty() || cp.targets.is_empty() || cp.alphas.is_empty() {
            return bad("cp.methods, cp.targets and cp.alphas must be non-empty".into());
        }
        if duplicates(&cp.methods) || duplicates(&cp.targets) {
            return bad("cp.methods and cp.targets must not repeat entries".into());
        }
        if let Some(a) = cp.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return bad(format!("alpha {a} is outside (0, 1)"));
        }
        let bits: Vec<u64> = cp.alphas.iter().map(|a| a.to_bits()).collect();
        if duplicates(&bits) {
            return bad("cp.alphas must not repeat entries".into());
        }
        if cp.methods.contains(&MethodName::CvPlus) && cp.cv_folds < 2 {
            return bad(format!("cv_folds must be at least 2, got {}", cp.cv_folds));
        }
        if self.dataset.n_samples == 0 {
            return bad("dataset.n_samples must be positive".into());
        }
        let check = |r: romcp::Result<()>| r.map_err(|e| CliError::Usage(format!("invalid dataset config: {e}")));
        check(self.dataset.bin_grid.validate())?;
        check(self.dataset.time_grid.validate())?;
        check(self.dataset.initial.validate(&self.dataset.bin_grid))?;
        Ok(())
    }

    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig {
            n_samples: self.dataset.n_samples,
            seed: self.seed,
            initial: self.dataset.initial.clone(),
            kernel: self.dataset.kernel,
            solver: self.dataset.solver,
        }
    }

    pub fn methods(&self) -> Vec<CpMethod> {
        self.cp
            .methods
            .iter()
            .map(|m| match m {
                MethodName::Vanilla => CpMethod::Vanilla,
                MethodName::Split => CpMethod::Split,
                MethodName::CvPlus => CpMethod::CvPlus { k: self.cp.cv_folds },
            })
            .collect()
    }

    /// Digest of everything the dataset depends on.
    pub fn dataset_digest(&self) -> String {
        digest(&(self.seed, &self.dataset))
    }

    /// Digest of everything trained models depend on.
    pub fn train_digest(&self) -> String {
        digest(&(self.dataset_digest(), &self.rom, &self.cp.methods, self.cp.cv_folds))
    }

    /// Digest of everything calibrations and evaluations depend on.
    pub fn calibrate_digest(&self) -> String {
        digest(&(self.train_digest(), &self.cp.targets, &self.cp.alphas))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
        assert_eq!(cfg.methods(), vec![CpMethod::Vanilla, CpMethod::Split, CpMethod::CvPlus { k: 20 }]);
        assert_eq!(cfg.dataset.n_samples, 618);
    }

    #[test]
    fn partial_sections_merge_with_defaults() {
        let cfg: RunConfig = toml::from_str(
            r#"
            seed = 7
            [dataset]
            n_samples = 40
            kernel = { type = "product", b = 1e-9 }
            [dataset.time_grid]
            n_steps = 11
            [rom]
            derivative_noise = 0.0
            [cp]
            methods = ["split"]
            alphas = [0.2]
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.dataset.time_grid.dt, 10.0);
        assert_eq!(cfg.dataset.time_grid.n_steps, 11);
        assert_eq!(cfg.dataset.kernel, Kernel::Product { b: 1e-9 });
        assert_eq!(cfg.rom.latent_dim, 4);
        assert_eq!(cfg.generator().seed, 7);
    }

    #[test]
    fn invalid_configs_are_usage_errors() {
        for text in [
            "[cp]\nalphas = [1.0]",
            "[cp]\nmethods = []",
            "[cp]\ntargets = [\"end_to_end\", \"end_to_end\"]",
            "[cp]\ncv_folds = 1",
        ] {
            let cfg: RunConfig = toml::from_str(text).unwrap();
            assert!(matches!(cfg.validate(), Err(CliError::Usage(_))), "{text}");
        }
        assert!(toml::from_str::<RunConfig>("colour = 1").is_err());
    }

    #[test]
    fn digests_track_their_sections_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        b.cp.alphas = vec![0.3];
        assert_eq!(a.train_digest(), b.train_digest());
        assert_ne!(a.calibrate_digest(), b.calibrate_digest());
        b.rom.derivative_noise = 0.0;
        assert_eq!(a.dataset_digest(), b.dataset_digest());
        assert_ne!(a.train_digest(), b.train_digest());
    }
}
