//! Portable checkpoint container.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                     |
//! |--------|------|---------------------------|
//! | 0      | 4    | magic `BLMC`              |
//! | 4      | 4    | version (u32, = 1)        |
//! | 8      | 4    | n_users (u32)             |
//! | 12     | 4    | n_items (u32)             |
//! | 16     | 4    | d (u32)                   |
//! | 20     | 4    | τ (f32)                   |
//! | 24     | ...  | user_table, n_users·d f32 |
//! |        |      | item_table, n_items·d f32 |
//! |        |      | W, d·d f32 (row-major)    |
//! |        |      | b, d f32                  |
//!
//! Parameters are held as f64 in memory and rounded to f32 on write.

use std::fs;
use std::io;
use std::path::Path;

use super::{BinarizationHead, CollabModel, Matrix};

const MAGIC: &[u8; 4] = b"BLMC";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: CollabModel,
    pub head: BinarizationHead,
    pub temperature: f64,
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub fn write_checkpoint(ckpt: &Checkpoint) -> io::Result<Vec<u8>> {
    let model = &ckpt.model;
    let d = model.dim();
    if ckpt.head.dim() != d || ckpt.head.weight.rows() != d || ckpt.head.weight.cols() != d {
        return Err(invalid("head width does not match embedding width"));
    }
    let as_u32 = |n: usize| u32::try_from(n).map_err(|_| invalid("dimension exceeds u32"));
    let mut out = Vec::with_capacity(
        HEADER_LEN + 4 * (model.user_table.as_slice().len() + model.item_table.as_slice().len() + d * d + d),
    );
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&as_u32(model.n_users())?.to_le_bytes());
    out.extend_from_slice(&as_u32(model.n_items())?.to_le_bytes());
    out.extend_from_slice(&as_u32(d)?.to_le_bytes());
    out.extend_from_slice(&(ckpt.temperature as f32).to_le_bytes());
    for block in [
        model.user_table.as_slice(),
        model.item_table.as_slice(),
        ckpt.head.weight.as_slice(),
        ckpt.head.bias.as_slice(),
    ] {
        for v in block {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_checkpoint(bytes: &[u8]) -> io::Result<Checkpoint> {
    if bytes.len() < HEADER_LEN {
        return Err(invalid("checkpoint shorter than its header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(invalid("bad checkpoint magic"));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
    if word(1) != VERSION {
        return Err(invalid(format!("unsupported checkpoint version {}", word(1))));
    }
    let (n_users, n_items, d) = (word(2) as usize, word(3) as usize, word(4) as usize);
    let temperature = f64::from(f32::from_le_bytes(bytes[20..24].try_into().unwrap()));
    let expected = HEADER_LEN + 4 * (n_users * d + n_items * d + d * d + d);
    if bytes.len() != expected {
        return Err(invalid(format!(
            "checkpoint has {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let mut values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())));
    let mut take = |n: usize| values.by_ref().take(n).collect::<Vec<f64>>();
    let user_table = Matrix::from_vec(n_users, d, take(n_users * d));
    let item_table = Matrix::from_vec(n_items, d, take(n_items * d));
    let weight = Matrix::from_vec(d, d, take(d * d));
    let bias = take(d);
    Ok(Checkpoint {
        model: CollabModel {
            user_table,
            item_table,
        },
        head: BinarizationHead { weight, bias },
        temperature,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> io::Result<()> {
    fs::write(path, write_checkpoint(ckpt)?)
}

pub fn load_checkpoint(path: &Path) -> io::Result<Checkpoint> {
    read_checkpoint(&fs::read(path)?)
}
