use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::conformal::{Calibration, CalibrationBand, CalibrationEllipsoid, CpMethod, PredictionSet, UqTarget};
use crate::dataset::BinGrid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthKind {
    /// `sum_bins (upper - lower) * d_ln_r` on mass-normalised rows.
    BandIntegral,
    /// The band integral scaled by the mean test-row scaled mass at each step.
    BandIntegralMassWeighted,
    /// `V_m * q^(m/2) * sqrt(det cov)`.
    EllipsoidVolume,
    /// `q^(m/2)`, the volume with the covariance normalised out.
    EllipsoidGeometry,
}

impl WidthKind {
    pub const ALL: [WidthKind; 4] = [
        WidthKind::BandIntegral,
        WidthKind::BandIntegralMassWeighted,
        WidthKind::EllipsoidVolume,
        WidthKind::EllipsoidGeometry,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            WidthKind::BandIntegral => "band_integral",
            WidthKind::BandIntegralMassWeighted => "band_integral_mass_weighted",
            WidthKind::EllipsoidVolume => "ellipsoid_volume",
            WidthKind::EllipsoidGeometry => "ellipsoid_geometry",
        }
    }
}

impl fmt::Display for WidthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for WidthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WidthKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Format(format!("unknown width kind {s:?}")))
    }
}

/// Prediction-set size over time.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthSeries {
    pub method: CpMethod,
    pub target: UqTarget,
    pub alpha: f64,
    pub kind: WidthKind,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

/// Area between the band edges at each timestep.
pub fn band_width_integral(band: &CalibrationBand, grid: &BinGrid) -> Result<Vec<f64>> {
    if band.n_coords() != grid.n_bins {
        return Err(Error::DimensionMismatch {
            expected: grid.n_bins,
            got: band.n_coords(),
        });
    }
    let d = grid.d_ln_r();
    Ok((0..band.n_steps())
        .map(|t| (0..band.n_coords()).map(|j| band.upper[(t, j)] - band.lower[(t, j)]).sum::<f64>() * d)
        .collect())
}

/// Volume of the unit ball in `m` dimensions.
pub fn unit_ball_volume(m: usize) -> f64 {
    match m {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / m as f64 * unit_ball_volume(m - 2),
    }
}

/// `(volume, geometry factor)` per timestep.
pub fn ellipsoid_volume(ell: &CalibrationEllipsoid) -> (Vec<f64>, Vec<f64>) {
    let m = ell.dim();
    let half = m as f64 / 2.0;
    let vm = unit_ball_volume(m);
    ell.steps
        .iter()
        .map(|s| {
            let g = s.threshold.max(0.0).powf(half);
            (vm * g * s.cov.determinant().sqrt(), g)
        })
        .unzip()
}

/// All width series for one calibration. `reference_mass` is the mean
/// scaled mass of the test rows at each timestep, used for the
/// mass-weighted band integral.
pub fn width_series(cal: &Calibration, grid: &BinGrid, reference_mass: Option<&[f64]>) -> Result<Vec<WidthSeries>> {
    let times = cal.time_grid.times();
    let series = |kind, values| WidthSeries {
        method: cal.method,
        target: cal.target,
        alpha: cal.alpha,
        kind,
        times: times.clone(),
        values,
    };
    Ok(match &cal.set {
        PredictionSet::Band(b) => {
            let raw = band_width_integral(b, grid)?;
            let mut out = Vec::with_capacity(2);
            if let Some(m) = reference_mass {
                if m.len() != raw.len() {
                    return Err(Error::DimensionMismatch {
                        expected: raw.len(),
                        got: m.len(),
                    });
                }
                out.push(series(
                    WidthKind::BandIntegralMassWeighted,
                    raw.iter().zip(m).map(|(w, m)| w * m).collect(),
                ));
            }
            out.insert(0, series(WidthKind::BandIntegral, raw));
            out
        }
        PredictionSet::Ellipsoid(e) => {
            let (vol, geo) = ellipsoid_volume(e);
            vec![series(WidthKind::EllipsoidVolume, vol), series(WidthKind::EllipsoidGeometry, geo)]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::EllipsoidStep;
    use crate::numerics::ShrunkCovariance;
    use nalgebra::DMatrix;

    fn identity_ellipsoid(m: usize, q: f64) -> CalibrationEllipsoid {
        CalibrationEllipsoid {
            steps: vec![EllipsoidStep {
                cov: ShrunkCovariance::from_parts(DMatrix::identity(m, m), 0.0, false).unwrap(),
                threshold: q,
            }],
            alpha: 0.1,
            n_calibration: 10,
        }
    }

    #[test]
    fn unit_ball_closed_forms() {
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
        assert!((unit_ball_volume(4) - PI * PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn ellipsoid_volume_examples() {
        assert!((ellipsoid_volume(&identity_ellipsoid(2, 1.0)).0[0] - PI).abs() < 1e-14);
        let (v, g) = ellipsoid_volume(&identity_ellipsoid(4, 4.0));
        assert!((v[0] - PI * PI / 2.0 * 16.0).abs() < 1e-12);
        assert_eq!(g[0], 16.0);
        assert_eq!(ellipsoid_volume(&identity_ellipsoid(3, 0.0)).0[0], 0.0);
    }

    #[test]
    fn volume_scales_with_covariance_determinant() {
        let mut e = identity_ellipsoid(3, 2.0);
        let base = ellipsoid_volume(&e).0[0];
        e.steps[0].cov = ShrunkCovariance::from_parts(DMatrix::identity(3, 3) * 4.0, 0.0, false).unwrap();
        assert!((ellipsoid_volume(&e).0[0] - 8.0 * base).abs() < 1e-12 * base);
    }

    #[test]
    fn band_integral_examples() {
        let grid = BinGrid::default();
        let zero = CalibrationBand {
            lower: DMatrix::zeros(3, 64),
            upper: DMatrix::zeros(3, 64),
            alpha: 0.1,
            n_calibration: 5,
        };
        assert_eq!(band_width_integral(&zero, &grid).unwrap(), vec![0.0; 3]);
        let h = 0.25;
        let rect = CalibrationBand {
            lower: DMatrix::from_element(2, 64, -h / 2.0),
            upper: DMatrix::from_element(2, 64, h / 2.0),
            ..zero
        };
        for w in band_width_integral(&rect, &grid).unwrap() {
            assert!((w - h * 64.0 * grid.d_ln_r()).abs() < 1e-12);
        }
    }

    #[test]
    fn width_kind_names_parse_back() {
        for k in WidthKind::ALL {
            assert_eq!(k.as_str().parse::<WidthKind>().unwrap(), k);
        }
        assert!("area".parse::<WidthKind>().is_err());
    }
}
