//! Prepared-dataset file.
//!
//! ```text
//! "KDDS" | version u32 | rows u64 | features u32 | rows dropped (missing) u64
//! | feature names (u32 len + UTF-8) x features
//! | has scaler u8 [ | kind u8 | mu f64 x features | sigma f64 x features ]
//! | dropped columns u32 | (u32 len + UTF-8 name, reason u8) x n
//! | features f32 x rows x features (row-major) | labels u8 x rows
//! | SHA-256 of everything above
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::{Dataset, DropReason, DroppedColumn, ScalerKind, ScalerParams};
use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};

pub const PREPARED_MAGIC: &[u8; 4] = b"KDDS";
pub const PREPARED_VERSION: u32 = 1;

/// A prepared dataset plus bookkeeping from its preparation.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFile {
    pub dataset: Dataset,
    /// Rows removed because a retained cell was missing.
    pub rows_dropped: u64,
}

pub fn encode_prepared(p: &PreparedFile) -> Vec<u8> {
    let ds = &p.dataset;
    let mut e = Encoder::new(PREPARED_MAGIC, PREPARED_VERSION);
    e.u64(ds.len() as u64);
    e.u32(ds.num_features() as u32);
    e.u64(p.rows_dropped);
    for name in ds.feature_names() {
        e.str(name);
    }
    match &ds.scaler {
        Some(s) => {
            e.u8(1);
            e.u8(s.kind.tag());
            e.f64s(&s.mu);
            e.f64s(&s.sigma);
        }
        None => e.u8(0),
    }
    e.u32(ds.dropped_columns.len() as u32);
    for d in &ds.dropped_columns {
        e.str(&d.name);
        e.u8(d.reason.tag());
    }
    for v in ds.features() {
        e.f32(*v as f32);
    }
    e.raw(ds.labels());
    e.finish()
}

pub fn decode_prepared(bytes: &[u8]) -> Result<PreparedFile> {
    let mut d = Decoder::open(bytes, PREPARED_MAGIC, PREPARED_VERSION, "prepared dataset")?;
    let rows = d.u64()? as usize;
    let width = d.u32()? as usize;
    let rows_dropped = d.u64()?;
    let names = (0..width).map(|_| d.str()).collect::<Result<Vec<_>>>()?;
    let scaler = match d.u8()? {
        0 => None,
        1 => {
            let kind = ScalerKind::from_tag(d.u8()?)
                .ok_or_else(|| Error::Format("unknown scaler kind".into()))?;
            let mu = d.f64s(width)?;
            let sigma = d.f64s(width)?;
            Some((kind, mu, sigma))
        }
        t => return Err(Error::Format(format!("bad scaler flag {t}"))),
    };
    let n_dropped = d.u32()? as usize;
    let mut dropped = Vec::with_capacity(n_dropped);
    for _ in 0..n_dropped {
        let name = d.str()?;
        let reason = DropReason::from_tag(d.u8()?)
            .ok_or_else(|| Error::Format("unknown drop reason".into()))?;
        dropped.push(DroppedColumn { name, reason });
    }
    let cells = rows
        .checked_mul(width)
        .ok_or_else(|| Error::Format("row count overflow".into()))?;
    let raw = d.raw(
        cells
            .checked_mul(4)
            .ok_or_else(|| Error::Format("size overflow".into()))?,
    )?;
    let features = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let labels = d.raw(rows)?.to_vec();
    d.finish()?;

    let mut dataset = Dataset::new(features, labels, names)?;
    dataset.scaler = scaler.map(|(kind, mu, sigma)| ScalerParams {
        kind,
        mu,
        sigma,
        dropped_columns: dropped.clone(),
    });
    dataset.dropped_columns = dropped;
    Ok(PreparedFile {
        dataset,
        rows_dropped,
    })
}

pub fn write_prepared(path: impl AsRef<Path>, p: &PreparedFile) -> Result<()> {
    fs::write(path, encode_prepared(p))?;
    Ok(())
}

pub fn read_prepared(path: impl AsRef<Path>) -> Result<PreparedFile> {
    decode_prepared(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{apply_scaler, fit_scaler};

    fn sample() -> PreparedFile {
        let mut ds = Dataset::new(
            vec![1.0, 2.5, -3.0, 4.0, 0.5, 9.0],
            vec![0, 1, 0],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        ds.dropped_columns = vec![DroppedColumn {
            name: "Timestamp".into(),
            reason: DropReason::Metadata,
        }];
        let p = fit_scaler(&ds, ScalerKind::Standard).unwrap();
        apply_scaler(&mut ds, &p).unwrap();
        PreparedFile {
            dataset: ds,
            rows_dropped: 2,
        }
    }

    #[test]
    fn round_trip_at_f32_precision() {
        let p = sample();
        let back = decode_prepared(&encode_prepared(&p)).unwrap();
        assert_eq!(back.rows_dropped, 2);
        assert_eq!(back.dataset.labels(), p.dataset.labels());
        assert_eq!(back.dataset.scaler, p.dataset.scaler);
        assert_eq!(back.dataset.dropped_columns, p.dataset.dropped_columns);
        for (a, b) in back.dataset.features().iter().zip(p.dataset.features()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        // A second trip is exact.
        assert_eq!(decode_prepared(&encode_prepared(&back)).unwrap(), back);
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = encode_prepared(&sample());
        bytes[20] ^= 0xff;
        assert!(matches!(decode_prepared(&bytes), Err(Error::Checksum)));
        let bytes = encode_prepared(&sample());
        assert!(decode_prepared(&bytes[..bytes.len() - 5]).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_prepared(&bad_magic), Err(Error::Format(_))));
    }
}
