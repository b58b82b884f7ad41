//! Binary containers for datasets (`LLDATA1\0`) and splits (`LLSPLT1\0`).
//!
//! Dataset layout (little-endian):
//!
//! ```text
//! "LLDATA1\0"
//! len, name (UTF-8)            u32 + bytes
//! num_classes                  u32
//! rank, dims...                u32 list (dims[0] = n)
//! labels                       n x u32
//! features                     prod(dims) x f64
//! ```
//!
//! Split layout: magic, then target-train, shadow-train and test index lists,
//! each a `u32` length followed by `u32` indices.

use std::path::Path;

use super::{Dataset, SplitIndices};
use crate::codec::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const DATASET_MAGIC: &[u8; 8] = b"LLDATA1\0";
pub const SPLIT_MAGIC: &[u8; 8] = b"LLSPLT1\0";

pub fn dataset_to_bytes(ds: &Dataset) -> Vec<u8> {
    let mut w = Writer::new(DATASET_MAGIC);
    w.str(ds.name())
        .u32(ds.num_classes())
        .u32_list(ds.features().shape());
    for &l in ds.labels() {
        w.u32(l);
    }
    w.f64s(ds.features().data());
    w.finish()
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset> {
    const WHAT: &str = "dataset container";
    let mut r = Reader::open(bytes, DATASET_MAGIC, WHAT)?;
    let name = r.str()?;
    let num_classes = r.u32()?;
    let dims = r.u32_list()?;
    if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
        return Err(Error::DescriptorMismatch {
            what: WHAT,
            detail: format!("invalid feature dims {dims:?}"),
        });
    }
    let n = dims[0];
    let labels = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let count = count.ok_or_else(|| Error::DescriptorMismatch {
        what: WHAT,
        detail: "feature dims overflow".into(),
    })?;
    let data = r.f64s(count)?;
    r.finish()?;
    Dataset::new(name, Tensor::new(dims, data)?, labels, num_classes)
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &dataset_to_bytes(ds))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    dataset_from_bytes(&read_file(path.as_ref())?)
}

pub fn splits_to_bytes(s: &SplitIndices) -> Vec<u8> {
    let mut w = Writer::new(SPLIT_MAGIC);
    w.u32_list(&s.target_train)
        .u32_list(&s.shadow_train)
        .u32_list(&s.test);
    w.finish()
}

pub fn splits_from_bytes(bytes: &[u8]) -> Result<SplitIndices> {
    let mut r = Reader::open(bytes, SPLIT_MAGIC, "split file")?;
    let s = SplitIndices {
        target_train: r.u32_list()?,
        shadow_train: r.u32_list()?,
        test: r.u32_list()?,
    };
    r.finish()?;
    Ok(s)
}

pub fn save_splits(s: &SplitIndices, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &splits_to_bytes(s))
}

pub fn load_splits(path: impl AsRef<Path>) -> Result<SplitIndices> {
    splits_from_bytes(&read_file(path.as_ref())?)
}
