//! The full cleaning pipeline from a parsed table to scaled train/test sets.

use serde::{Deserialize, Serialize};

use super::{
    apply_scaler, clean_columns, fit_scaler, random_mask, split, Dataset, DropReason, RawTable,
};
use super::{ScalerKind, SplitMode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepareOptions {
    pub test_fraction: f64,
    pub split: SplitMode,
    pub scaler: ScalerKind,
    /// Cell masking probability, applied to the training side only.
    pub mask_prob: f64,
    /// Seeds the shuffled split and the mask.
    pub seed: u64,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            split: SplitMode::Sequential,
            scaler: ScalerKind::Standard,
            mask_prob: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    /// Rows removed because a retained cell was missing.
    pub rows_dropped: u64,
    pub masked_cells: usize,
}

/// Cleans `table`, splits it, drops columns that are constant on the
/// training side, fits the scaler on train only and applies it to both sides,
/// then masks training cells.
pub fn prepare(table: RawTable, opts: &PrepareOptions) -> Result<Prepared> {
    let table = clean_columns(table);
    let (full, rows_dropped) = table.to_dataset()?;
    let (mut train, mut test) = split(&full, opts.test_fraction, opts.seed, opts.split)?;

    let constant: Vec<String> = (0..train.num_features())
        .filter(|&j| {
            let mut col = train.column(j);
            let first = col.next().unwrap_or(0.0);
            col.all(|v| v == first)
        })
        .map(|j| train.feature_names()[j].clone())
        .collect();
    if constant.len() == train.num_features() {
        return Err(Error::Data(
            "every feature is constant on the training side".into(),
        ));
    }
    train.drop_columns(&constant, DropReason::ZeroVariance);
    test.drop_columns(&constant, DropReason::ZeroVariance);

    let params = fit_scaler(&train, opts.scaler)?;
    apply_scaler(&mut train, &params)?;
    apply_scaler(&mut test, &params)?;
    let masked_cells = random_mask(train.features_mut(), opts.mask_prob, opts.seed)?;
    Ok(Prepared {
        train,
        test,
        rows_dropped: rows_dropped as u64,
        masked_cells,
    })
}
