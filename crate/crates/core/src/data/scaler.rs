use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Dataset, DroppedColumn};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerKind {
    /// `(x - mean) / std`, population std.
    Standard,
    /// `(x - min) / (max - min)`.
    MinMax,
}

impl ScalerKind {
    pub fn tag(self) -> u8 {
        match self {
            ScalerKind::Standard => 0,
            ScalerKind::MinMax => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ScalerKind::Standard),
            1 => Some(ScalerKind::MinMax),
            _ => None,
        }
    }
}

impl fmt::Display for ScalerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalerKind::Standard => "standard",
            ScalerKind::MinMax => "minmax",
        })
    }
}

impl FromStr for ScalerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(ScalerKind::Standard),
            "minmax" | "min-max" => Ok(ScalerKind::MinMax),
            other => Err(Error::InvalidConfig(format!("unknown scaler `{other}`"))),
        }
    }
}

/// Per-feature affine transform `x -> (x - mu) / sigma`.
///
/// For [`ScalerKind::MinMax`], `mu` holds the column minimum and `sigma` the
/// range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub kind: ScalerKind,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub dropped_columns: Vec<DroppedColumn>,
}

/// Fits scaling statistics on (training) data. Fails if a column has zero
/// spread; such columns must be dropped first.
pub fn fit_scaler(train: &Dataset, kind: ScalerKind) -> Result<ScalerParams> {
    if train.is_empty() {
        return Err(Error::Data(
            "cannot fit a scaler on an empty dataset".into(),
        ));
    }
    let n = train.len() as f64;
    let d = train.num_features();
    let mut mu = Vec::with_capacity(d);
    let mut sigma = Vec::with_capacity(d);
    for j in 0..d {
        let (center, spread) = match kind {
            ScalerKind::Standard => {
                let mean = train.column(j).sum::<f64>() / n;
                let var = train.column(j).map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                (mean, var.sqrt())
            }
            ScalerKind::MinMax => {
                let lo = train.column(j).fold(f64::INFINITY, f64::min);
                let hi = train.column(j).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi - lo)
            }
        };
        if spread <= 0.0 || !spread.is_finite() {
            return Err(Error::Data(format!(
                "feature `{}` has zero spread in the training data",
                train.feature_names()[j]
            )));
        }
        mu.push(center);
        sigma.push(spread);
    }
    Ok(ScalerParams {
        kind,
        mu,
        sigma,
        dropped_columns: train.dropped_columns.clone(),
    })
}

/// Applies `params` in place and attaches them to the dataset.
pub fn apply_scaler(data: &mut Dataset, params: &ScalerParams) -> Result<()> {
    let d = data.num_features();
    if params.mu.len() != d || params.sigma.len() != d {
        return Err(Error::dim("scaler width", params.mu.len(), d));
    }
    for row in data.features_mut().chunks_exact_mut(d) {
        for ((v, m), s) in row.iter_mut().zip(&params.mu).zip(&params.sigma) {
            *v = (*v - m) / s;
        }
    }
    data.scaler = Some(params.clone());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(cols: &[&[f64]]) -> Dataset {
        let n = cols[0].len();
        let mut f = Vec::new();
        for i in 0..n {
            for c in cols {
                f.push(c[i]);
            }
        }
        let names = (0..cols.len()).map(|j| format!("f{j}")).collect();
        Dataset::new(f, vec![0; n], names).unwrap()
    }

    #[test]
    fn population_std() {
        let mut d = ds(&[&[1.0, 2.0, 3.0]]);
        let p = fit_scaler(&d, ScalerKind::Standard).unwrap();
        assert_eq!(p.mu, vec![2.0]);
        assert!((p.sigma[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        apply_scaler(&mut d, &p).unwrap();
        assert!(d.column(0).sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn shifted_test_column() {
        let train = ds(&[&[1.0, 4.0, 2.0, 9.0]]);
        let mut test = ds(&[&[6.0, 9.0, 7.0, 14.0]]);
        let p = fit_scaler(&train, ScalerKind::Standard).unwrap();
        apply_scaler(&mut test, &p).unwrap();
        let mean = test.column(0).sum::<f64>() / 4.0;
        assert!((mean - 5.0 / p.sigma[0]).abs() < 1e-12);
    }

    #[test]
    fn min_max() {
        let mut d = ds(&[&[2.0, 4.0, 3.0]]);
        let p = fit_scaler(&d, ScalerKind::MinMax).unwrap();
        apply_scaler(&mut d, &p).unwrap();
        assert_eq!(d.column(0).collect::<Vec<_>>(), vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn zero_spread_is_error() {
        let d = ds(&[&[1.0, 2.0], &[3.0, 3.0]]);
        assert!(matches!(
            fit_scaler(&d, ScalerKind::Standard),
            Err(Error::Data(_))
        ));
    }
}
