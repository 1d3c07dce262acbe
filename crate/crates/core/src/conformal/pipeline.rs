use rayon::prelude::*;

use super::{calibrate, compute_residuals, Calibration, CpMethod, Residuals, UqTarget};
use crate::dataset::{
    filter_by_mass, normalize_dataset, split_dataset, BinGrid, Dataset, DatasetSplit,
    NormalizedDsdTrajectory, SplitScheme, TimeGrid,
};
use crate::rom::{fit_rom, RomConfig, RomModel};
use crate::{Error, Result};

/// Filtered, split and normalised data for one CP run.
///
/// Split indices refer to positions in `trajectories`; `kept[i]` maps
/// position `i` back to the raw dataset.
#[derive(Debug, Clone)]
pub struct CpData {
    pub trajectories: Vec<NormalizedDsdTrajectory>,
    pub kept: Vec<usize>,
    pub split: DatasetSplit,
    pub mass_scale: f64,
    pub bin_grid: BinGrid,
    pub time_grid: TimeGrid,
}

impl CpData {
    /// Drops trajectories below the liquid-water threshold, splits the rest
    /// with `seed`, and normalises everything with the largest total mass
    /// found in the training part.
    pub fn prepare(dataset: &Dataset, scheme: SplitScheme, seed: u64) -> Result<Self> {
        let kept = filter_by_mass(&dataset.trajectories);
        if kept.is_empty() {
            return Err(Error::InvalidArgument("every trajectory was removed by the mass filter".into()));
        }
        let split = split_dataset(kept.len(), scheme, seed)?;
        Self::with_split(dataset, kept, split)
    }

    /// Like [`CpData::prepare`] with an explicit split over the kept samples.
    pub fn with_split(dataset: &Dataset, kept: Vec<usize>, split: DatasetSplit) -> Result<Self> {
        let raw: Vec<_> = kept.iter().map(|&i| dataset.trajectories[i].clone()).collect();
        let mass_scale = split
            .train
            .iter()
            .flat_map(|&i| raw[i].total_mass.iter().copied())
            .fold(0.0, f64::max);
        let norm = normalize_dataset(&raw, Some(mass_scale))?;
        if norm.filtered != 0 {
            return Err(Error::InvalidArgument("split refers to filtered trajectories".into()));
        }
        Ok(Self {
            trajectories: norm.trajectories,
            kept,
            split,
            mass_scale,
            bin_grid: dataset.bin_grid,
            time_grid: dataset.time_grid,
        })
    }

    fn fit(&self, indices: &[usize], cfg: &RomConfig) -> Result<RomModel> {
        let refs: Vec<_> = indices.iter().map(|&i| &self.trajectories[i]).collect();
        fit_rom(&refs, &self.bin_grid, &self.time_grid, self.mass_scale, cfg)
    }
}

/// The predictive model of a CP method plus, for CV+, its fold models
/// (fold `f` at position `f - 1`).
#[derive(Debug, Clone)]
pub struct FittedMethod {
    pub method: CpMethod,
    pub model: RomModel,
    pub fold_models: Vec<RomModel>,
}

/// Fits the models `method` needs. CV+ fits one model per fold on the
/// training data outside that fold, in parallel, and refits the predictive
/// model on the whole training set.
pub fn fit_method(data: &CpData, method: CpMethod, cfg: &RomConfig) -> Result<FittedMethod> {
    method.validate()?;
    let model = data.fit(&data.split.train, cfg)?;
    let fold_models = match method {
        CpMethod::CvPlus { k } => {
            if data.split.n_folds() != k {
                return Err(Error::InvalidArgument(format!(
                    "split has {} folds but the method asks for {k}",
                    data.split.n_folds()
                )));
            }
            (1..=k)
                .into_par_iter()
                .map(|f| {
                    data.fit(&data.split.fold_complement(f), cfg).map_err(|e| Error::FoldFailed {
                        fold: f,
                        source: Box::new(e),
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        _ => Vec::new(),
    };
    Ok(FittedMethod {
        method,
        model,
        fold_models,
    })
}

/// Residuals used to calibrate `target`: on the training data (vanilla),
/// the held-out calibration set (split), or pooled out-of-fold (CV+).
pub fn calibration_residuals(fitted: &FittedMethod, data: &CpData, target: UqTarget) -> Result<Residuals> {
    match fitted.method {
        CpMethod::Vanilla | CpMethod::Split => {
            compute_residuals(&fitted.model, &data.trajectories, target, &data.split.calibration)
        }
        CpMethod::CvPlus { k } => {
            if fitted.fold_models.len() != k {
                return Err(Error::NotFitted("CV+ fold models"));
            }
            let parts = fitted
                .fold_models
                .iter()
                .enumerate()
                .map(|(i, m)| compute_residuals(m, &data.trajectories, target, &data.split.fold_members(i + 1)))
                .collect::<Result<Vec<_>>>()?;
            Residuals::concat(parts)
        }
    }
}

/// Splits, fits and calibrates in one call.
pub fn run_cp_pipeline(
    dataset: &Dataset,
    target: UqTarget,
    method: CpMethod,
    alpha: f64,
    cfg: &RomConfig,
    seed: u64,
) -> Result<(FittedMethod, Calibration, CpData)> {
    let data = CpData::prepare(dataset, method.default_scheme(), seed)?;
    let fitted = fit_method(&data, method, cfg)?;
    let residuals = calibration_residuals(&fitted, &data, target)?;
    let cal = calibrate(&residuals, method, alpha, data.time_grid)?;
    Ok((fitted, cal, data))
}
