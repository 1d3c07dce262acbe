use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How samples are divided between fitting, calibration and testing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum SplitScheme {
    /// Train/test; calibration reuses the training samples.
    Vanilla { train_frac: f64 },
    /// Train/calibration/test.
    Split { train_frac: f64, cal_frac: f64 },
    /// Train/test with the training part cut into `k` folds.
    CvPlus { train_frac: f64, k: usize },
}

impl SplitScheme {
    pub fn vanilla() -> Self {
        SplitScheme::Vanilla { train_frac: 0.8 }
    }

    pub fn split() -> Self {
        SplitScheme::Split {
            train_frac: 0.6,
            cal_frac: 0.2,
        }
    }

    pub fn cv_plus() -> Self {
        SplitScheme::CvPlus {
            train_frac: 0.8,
            k: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub calibration: Vec<usize>,
    pub test: Vec<usize>,
    /// Fold id in `1..=k` for each entry of `train` (CV+ only).
    pub folds: Option<Vec<usize>>,
}

impl DatasetSplit {
    pub fn n_folds(&self) -> usize {
        self.folds
            .as_ref()
            .map_or(0, |f| f.iter().copied().max().unwrap_or(0))
    }

    /// Training samples assigned to `fold` (1-based).
    pub fn fold_members(&self, fold: usize) -> Vec<usize> {
        self.fold_filter(fold, true)
    }

    /// Training samples outside `fold`.
    pub fn fold_complement(&self, fold: usize) -> Vec<usize> {
        self.fold_filter(fold, false)
    }

    fn fold_filter(&self, fold: usize, inside: bool) -> Vec<usize> {
        match &self.folds {
            None => Vec::new(),
            Some(f) => self
                .train
                .iter()
                .zip(f)
                .filter(|(_, id)| (**id == fold) == inside)
                .map(|(i, _)| *i)
                .collect(),
        }
    }

    /// True when no test sample is also used for calibration.
    pub fn test_is_disjoint_from_calibration(&self) -> bool {
        !self.test.iter().any(|i| self.calibration.contains(i))
    }
}

fn check_frac(name: &str, f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} = {f} must lie in (0, 1)")))
    }
}

/// Deterministically shuffles `0..n_samples` with `seed` and partitions it.
pub fn split_dataset(n_samples: usize, scheme: SplitScheme, seed: u64) -> Result<DatasetSplit> {
    let mut perm: Vec<usize> = (0..n_samples).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let count = |f: f64| (f * n_samples as f64).round() as usize;

    let (n_train, n_cal, k) = match scheme {
        SplitScheme::Vanilla { train_frac } => {
            check_frac("train_frac", train_frac)?;
            (count(train_frac), 0, None)
        }
        SplitScheme::Split {
            train_frac,
            cal_frac,
        } => {
            check_frac("train_frac", train_frac)?;
            check_frac("cal_frac", cal_frac)?;
            if train_frac + cal_frac >= 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "train_frac + cal_frac = {} leaves no test data",
                    train_frac + cal_frac
                )));
            }
            (count(train_frac), count(cal_frac), None)
        }
        SplitScheme::CvPlus { train_frac, k } => {
            check_frac("train_frac", train_frac)?;
            if k < 2 {
                return Err(Error::InvalidArgument(format!("CV+ needs k >= 2, got {k}")));
            }
            (count(train_frac), 0, Some(k))
        }
    };
    let split_cal = matches!(scheme, SplitScheme::Split { .. });
    if n_train == 0 || n_train + n_cal >= n_samples || (split_cal && n_cal == 0) {
        return Err(Error::InvalidArgument(format!(
            "{scheme:?} on {n_samples} samples leaves an empty partition"
        )));
    }
    if let Some(k) = k {
        if n_train < k {
            return Err(Error::InvalidArgument(format!(
                "{n_train} training samples cannot fill {k} folds"
            )));
        }
    }

    let train = perm[..n_train].to_vec();
    let test = perm[n_train + n_cal..].to_vec();
    let calibration = if split_cal {
        perm[n_train..n_train + n_cal].to_vec()
    } else {
        train.clone()
    };
    let folds = k.map(|k| (0..n_train).map(|p| p % k + 1).collect());
    Ok(DatasetSplit {
        train,
        calibration,
        test,
        folds,
    })
}
