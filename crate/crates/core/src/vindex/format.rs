//! Index file layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "GRGIDX1\0"
//! dim      u32
//! count    u64
//! entries  count × { u32 len, doc_id utf-8, u32 len, text utf-8, u8 source, dim × f32 }
//! crc32    u32      over every byte between magic and crc
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::embedder::EmbeddingVector;
use crate::error::{Error, Result};

use super::{EmbeddedDocument, Source, VectorIndex};

pub const INDEX_MAGIC: &[u8; 8] = b"GRGIDX1\0";
const MAGIC_STEM: &[u8; 6] = b"GRGIDX";
const FORMAT_VERSION: &str = "1";

pub fn encode_index(index: &VectorIndex) -> Result<Vec<u8>> {
    let dim = u32::try_from(index.dim())
        .map_err(|_| Error::InvalidArgument("index dim exceeds u32".into()))?;
    let mut payload = Vec::with_capacity(12 + index.len() * (index.dim() * 4 + 64));
    payload.extend_from_slice(&dim.to_le_bytes());
    payload.extend_from_slice(&(index.len() as u64).to_le_bytes());
    for entry in index.entries() {
        put_str(&mut payload, &entry.doc_id)?;
        put_str(&mut payload, &entry.text)?;
        payload.push(entry.source.to_byte());
        for &v in entry.vector.as_slice() {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&payload);
    let mut out = Vec::with_capacity(payload.len() + 12);
    out.extend_from_slice(INDEX_MAGIC);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn put_str(buf: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u32::try_from(s.len())
        .map_err(|_| Error::InvalidArgument("string longer than u32::MAX bytes".into()))?;
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
    Ok(())
}

pub fn decode_index(bytes: &[u8]) -> Result<VectorIndex> {
    if bytes.len() < INDEX_MAGIC.len() {
        return Err(Error::CorruptIndex("file shorter than header".into()));
    }
    let (magic, rest) = bytes.split_at(INDEX_MAGIC.len());
    if &magic[..6] != MAGIC_STEM {
        return Err(Error::CorruptIndex("bad magic bytes".into()));
    }
    if magic != INDEX_MAGIC {
        let found = String::from_utf8_lossy(&magic[6..]).trim_end_matches('\0').to_string();
        return Err(Error::VersionMismatch {
            found,
            expected: FORMAT_VERSION.into(),
        });
    }
    if rest.len() < 4 {
        return Err(Error::CorruptIndex("missing checksum".into()));
    }
    let (payload, crc_bytes) = rest.split_at(rest.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut r = Reader { buf: payload, pos: 0 };
    let dim = r.u32()? as usize;
    let count = r.u64()?;
    let mut index = VectorIndex::new(dim).map_err(|_| Error::CorruptIndex("zero dim".into()))?;
    let mut docs = Vec::with_capacity(usize::try_from(count).unwrap_or(0).min(1 << 20));
    for _ in 0..count {
        let doc_id = r.string()?;
        let text = r.string()?;
        let source = Source::from_byte(r.u8()?)
            .ok_or_else(|| Error::CorruptIndex("unknown source byte".into()))?;
        let mut values = Vec::with_capacity(dim);
        for _ in 0..dim {
            values.push(f32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes")) as f64);
        }
        let vector = EmbeddingVector::new(values)
            .map_err(|e| Error::CorruptIndex(format!("entry '{doc_id}': {e}")))?;
        docs.push(EmbeddedDocument {
            doc_id,
            text,
            vector,
            source,
        });
    }
    if r.pos != payload.len() {
        return Err(Error::CorruptIndex(format!(
            "{} trailing bytes after {count} entries",
            payload.len() - r.pos
        )));
    }
    index.add(docs).map_err(|e| Error::CorruptIndex(e.to_string()))?;
    Ok(index)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::CorruptIndex("unexpected end of payload".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::CorruptIndex("invalid utf-8".into()))
    }
}

/// Writes via a temporary sibling file and rename.
pub fn save_index(index: &VectorIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_index(index)?;
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<VectorIndex> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_index(&bytes)
}
