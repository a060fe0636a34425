//! `MCF2` binary container: 4 magic bytes, a version byte, a type tag,
//! then a little-endian header and row-major payload.
//!
//! | tag | payload |
//! |-----|---------|
//! | 1 MF model | learner u8, f u32, n_users u32, n_items u32, seed u64, user factors, item factors (f64) |
//! | 2 popularity | learner u8, f u32 (=0), n_users u32, n_items u32, seed u64 (=0), item order (u32), counts (u64) |
//! | 3 embedding | kind u8, k u32, n_users u32, reserved u32 (=0), reserved u64 (=0), values (f64) |

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::cf::{BaseLearnerId, BaseModel, MfModel, PopularityModel};
use crate::error::{Error, Result};
use crate::repr::{EmbeddingKind, EmbeddingSource};

pub const MAGIC: &[u8; 4] = b"MCF2";
pub const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum TypeTag {
    MfModel = 1,
    Popularity = 2,
    Embedding = 3,
}

struct Header {
    tag: TypeTag,
    code: u8,
    width: u32,
    rows: u32,
    cols: u32,
    seed: u64,
}

fn io_err(e: std::io::Error) -> Error {
    Error::Snapshot(e.to_string())
}

fn write_header<W: Write>(w: &mut W, h: &Header) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u8(VERSION)?;
    w.write_u8(h.tag as u8)?;
    w.write_u8(h.code)?;
    w.write_u32::<LittleEndian>(h.width)?;
    w.write_u32::<LittleEndian>(h.rows)?;
    w.write_u32::<LittleEndian>(h.cols)?;
    w.write_u64::<LittleEndian>(h.seed)
}

fn read_header<R: Read>(r: &mut R) -> Result<Header> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::Snapshot(format!("bad magic {magic:?}")));
    }
    let version = r.read_u8().map_err(io_err)?;
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let tag = match r.read_u8().map_err(io_err)? {
        1 => TypeTag::MfModel,
        2 => TypeTag::Popularity,
        3 => TypeTag::Embedding,
        t => return Err(Error::Snapshot(format!("unknown type tag {t}"))),
    };
    Ok(Header {
        tag,
        code: r.read_u8().map_err(io_err)?,
        width: r.read_u32::<LittleEndian>().map_err(io_err)?,
        rows: r.read_u32::<LittleEndian>().map_err(io_err)?,
        cols: r.read_u32::<LittleEndian>().map_err(io_err)?,
        seed: r.read_u64::<LittleEndian>().map_err(io_err)?,
    })
}

fn write_f64s<'a, W: Write>(w: &mut W, vals: impl Iterator<Item = &'a f64>) -> std::io::Result<()> {
    for v in vals {
        w.write_f64::<LittleEndian>(*v)?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let mut data = vec![0.0; rows * cols];
    r.read_f64_into::<LittleEndian>(&mut data).map_err(io_err)?;
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Snapshot(e.to_string()))
}

fn expect_end<R: Read>(r: &mut R) -> Result<()> {
    let mut rest = [0u8; 1];
    match r.read(&mut rest).map_err(io_err)? {
        0 => Ok(()),
        _ => Err(Error::Snapshot("trailing bytes".into())),
    }
}

pub fn write_base_model<W: Write>(mut w: W, model: &BaseModel) -> std::io::Result<()> {
    match model {
        BaseModel::Mf(m) => {
            write_header(
                &mut w,
                &Header {
                    tag: TypeTag::MfModel,
                    code: m.learner as u8,
                    width: m.factors() as u32,
                    rows: m.user_factors.nrows() as u32,
                    cols: m.item_factors.nrows() as u32,
                    seed: m.seed,
                },
            )?;
            write_f64s(&mut w, m.user_factors.iter())?;
            write_f64s(&mut w, m.item_factors.iter())
        }
        BaseModel::Popular(p) => {
            write_header(
                &mut w,
                &Header {
                    tag: TypeTag::Popularity,
                    code: BaseLearnerId::MostPopular as u8,
                    width: 0,
                    rows: p.n_users as u32,
                    cols: p.counts.len() as u32,
                    seed: 0,
                },
            )?;
            for &i in &p.item_order {
                w.write_u32::<LittleEndian>(i)?;
            }
            for &c in &p.counts {
                w.write_u64::<LittleEndian>(c)?;
            }
            Ok(())
        }
    }
}

pub fn read_base_model<R: Read>(mut r: R) -> Result<BaseModel> {
    let h = read_header(&mut r)?;
    let learner = BaseLearnerId::from_index(h.code as usize)
        .ok_or_else(|| Error::Snapshot(format!("unknown learner code {}", h.code)))?;
    let model = match h.tag {
        TypeTag::MfModel => {
            let f = h.width as usize;
            let user_factors = read_matrix(&mut r, h.rows as usize, f)?;
            let item_factors = read_matrix(&mut r, h.cols as usize, f)?;
            BaseModel::Mf(MfModel { learner, user_factors, item_factors, seed: h.seed })
        }
        TypeTag::Popularity => {
            let n = h.cols as usize;
            let mut item_order = vec![0u32; n];
            r.read_u32_into::<LittleEndian>(&mut item_order).map_err(io_err)?;
            let mut counts = vec![0u64; n];
            r.read_u64_into::<LittleEndian>(&mut counts).map_err(io_err)?;
            BaseModel::Popular(PopularityModel { item_order, counts, n_users: h.rows as usize })
        }
        TypeTag::Embedding => return Err(Error::Snapshot("expected a model, found an embedding".into())),
    };
    expect_end(&mut r)?;
    Ok(model)
}

pub fn write_embedding<W: Write>(mut w: W, values: &Array2<f64>, source: EmbeddingSource) -> std::io::Result<()> {
    write_header(
        &mut w,
        &Header {
            tag: TypeTag::Embedding,
            code: source.kind as u8,
            width: values.ncols() as u32,
            rows: values.nrows() as u32,
            cols: 0,
            seed: 0,
        },
    )?;
    write_f64s(&mut w, values.iter())
}

pub fn read_embedding<R: Read>(mut r: R) -> Result<(Array2<f64>, EmbeddingSource)> {
    let h = read_header(&mut r)?;
    if h.tag != TypeTag::Embedding {
        return Err(Error::Snapshot("expected an embedding snapshot".into()));
    }
    let kind = match h.code {
        0 => EmbeddingKind::Cdae,
        1 => EmbeddingKind::Vae,
        c => return Err(Error::Snapshot(format!("unknown embedding kind {c}"))),
    };
    let values = read_matrix(&mut r, h.rows as usize, h.width as usize)?;
    expect_end(&mut r)?;
    Ok((values, EmbeddingSource { kind, size: h.width as usize }))
}
