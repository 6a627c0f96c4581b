//! Binary embedding files.
//!
//! Item index (`MOLE0001`), little-endian throughout:
//!
//! ```text
//! magic      8 bytes   "MOLE0001"
//! header     5 x u32   version=1, n_items, p_x, dim, flags (bit0 = normalized)
//! item ids   n_items x u64
//! embeddings n_items x p_x x dim x f32
//! norms      n_items x p_x x f32       (only when bit0 is set)
//! ```
//!
//! Query set (`MOLQ0001`): magic, `version, n_queries, p_q, dim` as u32,
//! then `n_queries x p_q x dim` f32 values.
//!
//! Materialized average vectors are not stored; they are rebuilt on load.

use std::fs;
use std::path::Path;

use crate::error::{MolError, Result};
use crate::index::ItemIndex;
use crate::query::QueryEmbeddings;

pub const INDEX_MAGIC: &[u8; 8] = b"MOLE0001";
pub const QUERY_MAGIC: &[u8; 8] = b"MOLQ0001";
pub const FORMAT_VERSION: u32 = 1;
const FLAG_NORMALIZED: u32 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, section: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|e| *e <= self.buf.len());
        match end {
            Some(end) => {
                let out = &self.buf[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(MolError::Format {
                offset: self.buf.len(),
                section,
                message: format!(
                    "truncated: need {len} bytes at offset {}, file has {}",
                    self.pos,
                    self.buf.len()
                ),
            }),
        }
    }

    fn u32(&mut self, section: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().unwrap()))
    }

    fn f32s(&mut self, count: usize, section: &'static str) -> Result<Vec<f64>> {
        let bytes = self.take(byte_len(count, 4, self.pos, section)?, section)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    fn u64s(&mut self, count: usize, section: &'static str) -> Result<Vec<u64>> {
        let bytes = self.take(byte_len(count, 8, self.pos, section)?, section)?;
        Ok(bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        let got = self.take(8, "magic")?;
        if got != expected {
            return Err(MolError::Format {
                offset: 0,
                section: "magic",
                message: format!(
                    "expected {:?}, found {:?}",
                    String::from_utf8_lossy(expected),
                    String::from_utf8_lossy(got)
                ),
            });
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        let offset = self.pos;
        let version = self.u32("header")?;
        if version != FORMAT_VERSION {
            return Err(MolError::Format {
                offset,
                section: "header",
                message: format!("unsupported version {version}"),
            });
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(MolError::Format {
                offset: self.pos,
                section: "trailer",
                message: format!("{} unexpected trailing bytes", self.buf.len() - self.pos),
            });
        }
        Ok(())
    }
}

fn byte_len(count: usize, width: usize, offset: usize, section: &'static str) -> Result<usize> {
    count.checked_mul(width).ok_or_else(|| MolError::Format {
        offset,
        section,
        message: "section size overflows".into(),
    })
}

fn put_f32s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn u32_field(value: usize, name: &str) -> Result<u32> {
    u32::try_from(value).map_err(|_| MolError::argument(format!("{name}={value} does not fit the u32 header field")))
}

/// Serializes `index`. Values are narrowed to f32.
pub fn encode_index(index: &ItemIndex) -> Result<Vec<u8>> {
    let (n, p_x, dim) = (index.n_items(), index.p_x(), index.dim());
    let mut out = Vec::with_capacity(28 + n * 8 + n * p_x * dim * 4 + n * p_x * 4);
    out.extend_from_slice(INDEX_MAGIC);
    let flags = if index.normalized() { FLAG_NORMALIZED } else { 0 };
    for field in [
        FORMAT_VERSION,
        u32_field(n, "n_items")?,
        u32_field(p_x, "p_x")?,
        u32_field(dim, "dim")?,
        flags,
    ] {
        out.extend_from_slice(&field.to_le_bytes());
    }
    for id in index.item_ids() {
        out.extend_from_slice(&id.to_le_bytes());
    }
    put_f32s(&mut out, index.rows());
    if let Some(norms) = index.norms() {
        put_f32s(&mut out, norms.iter().copied());
    }
    Ok(out)
}

pub fn decode_index(bytes: &[u8]) -> Result<ItemIndex> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.magic(INDEX_MAGIC)?;
    r.version()?;
    let n = r.u32("header")? as usize;
    let p_x = r.u32("header")? as usize;
    let dim = r.u32("header")? as usize;
    let flags = r.u32("header")?;
    if flags & !FLAG_NORMALIZED != 0 {
        return Err(MolError::Format {
            offset: 24,
            section: "header",
            message: format!("unknown flag bits {flags:#x}"),
        });
    }
    let normalized = flags & FLAG_NORMALIZED != 0;
    let ids = r.u64s(n, "item ids")?;
    let count = n
        .checked_mul(p_x)
        .and_then(|v| v.checked_mul(dim))
        .ok_or_else(|| MolError::Format {
            offset: 12,
            section: "header",
            message: "embedding section size overflows".into(),
        })?;
    let rows = r.f32s(count, "embeddings")?;
    if normalized {
        // stored norms are derived data; the index recomputes them
        r.f32s(n * p_x, "norms")?;
    }
    r.finish()?;
    ItemIndex::from_rows(p_x, dim, normalized, ids, &rows)
}

pub fn write_index(index: &ItemIndex, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_index(index)?)?;
    Ok(())
}

pub fn read_index(path: impl AsRef<Path>) -> Result<ItemIndex> {
    decode_index(&fs::read(path)?)
}

/// Serializes a query set. All queries must share `p_q` and `dim`; an empty
/// set is written with `p_q = dim = 0`.
pub fn encode_queries(queries: &[QueryEmbeddings]) -> Result<Vec<u8>> {
    let (p_q, dim) = queries.first().map_or((0, 0), |q| (q.p_q(), q.dim()));
    if let Some(q) = queries.iter().find(|q| q.p_q() != p_q || q.dim() != dim) {
        return Err(MolError::config(format!(
            "query {} has shape {}x{}, expected {p_q}x{dim}",
            q.id(),
            q.p_q(),
            q.dim()
        )));
    }
    let mut out = Vec::with_capacity(24 + queries.len() * p_q * dim * 4);
    out.extend_from_slice(QUERY_MAGIC);
    for field in [
        FORMAT_VERSION,
        u32_field(queries.len(), "n_queries")?,
        u32_field(p_q, "p_q")?,
        u32_field(dim, "dim")?,
    ] {
        out.extend_from_slice(&field.to_le_bytes());
    }
    for q in queries {
        put_f32s(&mut out, q.raw().iter().copied());
    }
    Ok(out)
}

pub fn decode_queries(bytes: &[u8]) -> Result<Vec<QueryEmbeddings>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.magic(QUERY_MAGIC)?;
    r.version()?;
    let n = r.u32("header")? as usize;
    let p_q = r.u32("header")? as usize;
    let dim = r.u32("header")? as usize;
    let per_query = p_q * dim;
    let mut queries = Vec::with_capacity(n.min(1 << 20));
    for i in 0..n {
        let values = r.f32s(per_query, "query vectors")?;
        queries.push(QueryEmbeddings::new(i, p_q, dim, values)?);
    }
    r.finish()?;
    Ok(queries)
}

pub fn write_queries(queries: &[QueryEmbeddings], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_queries(queries)?)?;
    Ok(())
}

pub fn read_queries(path: impl AsRef<Path>) -> Result<Vec<QueryEmbeddings>> {
    decode_queries(&fs::read(path)?)
}
