//! Network checkpoints.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "LLEAKS1\0"
//! len, arch id (UTF-8)
//! num_classes
//! len, input_shape dims...
//! per parameter tensor, in layer order (weight then bias):
//!     rank, dims..., little-endian f64 data
//! ```

use std::path::Path;

use super::network::Network;
use crate::codec::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::models::{self, ArchId};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LLEAKS1\0";

pub fn network_to_bytes(net: &Network) -> Vec<u8> {
    let mut w = Writer::new(CHECKPOINT_MAGIC);
    w.str(net.arch().as_str())
        .u32(net.num_classes())
        .u32_list(net.input_shape());
    for layer in net.layers() {
        for p in layer.params() {
            w.u32_list(p.shape()).f64s(p.data());
        }
    }
    w.finish()
}

pub fn network_from_bytes(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader::open(bytes, CHECKPOINT_MAGIC, "network checkpoint")?;
    let arch: ArchId = r.str()?.parse()?;
    let num_classes = r.u32()?;
    let input_shape = r.u32_list()?;
    let mut net = models::skeleton(arch, &input_shape, num_classes).map_err(|e| {
        Error::DescriptorMismatch {
            what: "network checkpoint",
            detail: format!("header does not describe a valid network: {e}"),
        }
    })?;
    for (i, layer) in net.layers_mut().iter_mut().enumerate() {
        let kind = layer.kind();
        for p in layer.params_mut() {
            let dims = r.u32_list()?;
            if dims != p.shape() {
                return Err(Error::DescriptorMismatch {
                    what: "network checkpoint",
                    detail: format!(
                        "layer {i} ({kind}) expects tensor {:?}, file has {dims:?}",
                        p.shape()
                    ),
                });
            }
            let data = r.f64s(p.len())?;
            p.data_mut().copy_from_slice(&data);
        }
    }
    r.finish()?;
    Ok(net)
}

pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &network_to_bytes(net))
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    network_from_bytes(&read_file(path.as_ref())?)
}
