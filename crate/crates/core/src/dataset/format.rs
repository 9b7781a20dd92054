//! `LGDS` dataset container.
//!
//! Layout (little-endian): magic `LGDS`, version `u32`, sample count `u32`, feature count
//! `u32`, sampling rate `f64`, row-major `f64` samples, `f64` labels, a `u8` flag for the
//! presence of standardizer statistics followed (when set) by `f64` means, `f64` stds and
//! one `u8` flag per feature, then a `u32`-length-prefixed UTF-8 provenance string.

use std::path::Path;

use ndarray::Array2;

use super::{GaitDataset, Standardizer};
use crate::error::{Error, Result};
use crate::io::{write_atomic, ByteReader};

const MAGIC: &[u8; 4] = b"LGDS";
pub const DATASET_VERSION: u32 = 1;

pub fn dataset_bytes(ds: &GaitDataset) -> Vec<u8> {
    let (m, d) = ds.samples.dim();
    let mut out = Vec::with_capacity(64 + 8 * (m * d + m + 2 * d) + ds.provenance.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(m as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&ds.rate.to_le_bytes());
    for v in ds.samples.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &ds.labels {
        out.extend_from_slice(&v.to_le_bytes());
    }
    match &ds.stats {
        Some(s) => {
            out.push(1);
            for v in s.mean.iter().chain(&s.std) {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend(s.flagged.iter().map(|f| *f as u8));
        }
        None => out.push(0),
    }
    out.extend_from_slice(&(ds.provenance.len() as u32).to_le_bytes());
    out.extend_from_slice(ds.provenance.as_bytes());
    out
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<GaitDataset> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not an LGDS dataset (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported LGDS version {version}")));
    }
    let m = r.u32()? as usize;
    let d = r.u32()? as usize;
    let rate = r.f64()?;
    let samples = r.f64_vec(m.checked_mul(d).ok_or_else(|| Error::Format("size overflow".into()))?)?;
    let labels = r.f64_vec(m)?;
    let stats = match r.u8()? {
        0 => None,
        1 => {
            let mean = r.f64_vec(d)?;
            let std = r.f64_vec(d)?;
            let flagged = r.take(d)?.iter().map(|b| *b != 0).collect();
            Some(Standardizer { mean, std, flagged })
        }
        f => return Err(Error::Format(format!("bad statistics flag {f}"))),
    };
    let len = r.u32()? as usize;
    let provenance = String::from_utf8(r.take(len)?.to_vec())
        .map_err(|_| Error::Format("provenance is not UTF-8".into()))?;
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes after dataset".into()));
    }
    let samples = Array2::from_shape_vec((m, d), samples).expect("length checked");
    GaitDataset::new(samples, labels, rate, stats, provenance).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_dataset(ds: &GaitDataset, path: &Path) -> Result<()> {
    write_atomic(path, &dataset_bytes(ds))
}

pub fn load_dataset(path: &Path) -> Result<GaitDataset> {
    if path.as_os_str().is_empty() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty path"),
        ));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    dataset_from_bytes(&bytes)
}

/// Label column followed by the raw features, with a header row.
pub fn dataset_csv(ds: &GaitDataset) -> String {
    let mut out = String::from("label,");
    out.push_str(&crate::control::FEATURE_NAMES[..ds.dim().min(crate::control::NFEATURES)].join(","));
    for j in crate::control::NFEATURES..ds.dim() {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for (row, label) in ds.samples.rows().into_iter().zip(&ds.labels) {
        out.push_str(&crate::io::csv_row(std::iter::once(*label).chain(row.iter().copied())));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GaitDataset {
        let x = Array2::from_shape_fn((5, 3), |(i, j)| (i * 3 + j) as f64 * 0.37 - 1.0);
        let stats = Standardizer::fit(x.view()).unwrap();
        GaitDataset::new(x, vec![0.0, 0.0, 0.5, 0.5, 0.5], 50.0, Some(stats), "unit \u{2713}".into()).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let ds = sample();
        let back = dataset_from_bytes(&dataset_bytes(&ds)).unwrap();
        assert_eq!(back, ds);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.lgds");
        save_dataset(&ds, &p).unwrap();
        assert_eq!(load_dataset(&p).unwrap(), ds);
    }

    #[test]
    fn rejects_bad_input() {
        let mut b = dataset_bytes(&sample());
        assert!(matches!(dataset_from_bytes(&b[..b.len() - 3]), Err(Error::Format(_))));
        b[0] = b'X';
        assert!(matches!(dataset_from_bytes(&b), Err(Error::Format(_))));
        let mut v = dataset_bytes(&sample());
        v[4] = 9;
        assert!(matches!(dataset_from_bytes(&v), Err(Error::Format(_))));
        match load_dataset(Path::new("")) {
            Err(Error::Io { path, .. }) => assert_eq!(path, Path::new("")),
            other => panic!("expected i/o error, got {other:?}"),
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let csv = dataset_csv(&sample());
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.starts_with("label,base_x_rel,base_z_rel,torso_pitch\n"));
    }
}
