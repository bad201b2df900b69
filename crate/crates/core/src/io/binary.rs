//! Little-endian binary embedding and checkpoint files.

use std::io::{Read, Write};

use super::IoError;
use crate::block::{Arch, DreamParams};
use crate::embedding::Embedding;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"DRME";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DRMP";
pub const FORMAT_VERSION: u32 = 1;

/// Record id as stored on disk: `subject/image`, or the bare id without a subject.
pub fn record_id(e: &Embedding) -> String {
    match &e.subject_id {
        Some(s) => format!("{s}/{}", e.id),
        None => e.id.clone(),
    }
}

/// Inverse of [`record_id`]; splits at the first `/`.
pub fn split_record_id(raw: &str) -> (String, Option<String>) {
    match raw.split_once('/') {
        Some((s, id)) => (id.to_string(), Some(s.to_string())),
        None => (raw.to_string(), None),
    }
}

pub fn write_embeddings_binary<W: Write>(mut w: W, embeddings: &[Embedding]) -> Result<(), IoError> {
    let dim = embeddings.first().map_or(0, Embedding::dim);
    if let Some(bad) = embeddings.iter().find(|e| e.dim() != dim) {
        return Err(IoError::format(format!(
            "embedding `{}` has dimension {}, expected {dim}",
            bad.id,
            bad.dim()
        )));
    }
    let dim32 = u32::try_from(dim).map_err(|_| IoError::format("dimension exceeds u32"))?;
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&dim32.to_le_bytes())?;
    w.write_all(&(embeddings.len() as u64).to_le_bytes())?;
    for e in embeddings {
        let id = record_id(e);
        let len = u16::try_from(id.len()).map_err(|_| IoError::format(format!("id `{id}` longer than 65535 bytes")))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(id.as_bytes())?;
        w.write_all(&(e.yaw.unwrap_or(f64::NAN) as f32).to_le_bytes())?;
        for v in &e.values {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N], IoError> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| truncated(e, what))?;
        Ok(buf)
    }

    fn u8(&mut self, what: &str) -> Result<u8, IoError> {
        Ok(self.bytes::<1>(what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, IoError> {
        Ok(u16::from_le_bytes(self.bytes(what)?))
    }

    fn u32(&mut self, what: &str) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }

    fn f32(&mut self, what: &str) -> Result<f32, IoError> {
        Ok(f32::from_le_bytes(self.bytes(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.bytes(what)?))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, IoError> {
        (0..n).map(|_| self.f64(what)).collect()
    }

    fn expect_end(&mut self) -> Result<(), IoError> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(IoError::format("trailing bytes after last record")),
        }
    }
}

fn truncated(e: std::io::Error, what: &str) -> IoError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        IoError::format(format!("file truncated while reading {what}"))
    } else {
        IoError::Io(e)
    }
}

fn check_header<R: Read>(r: &mut Reader<R>, magic: &[u8; 4]) -> Result<(), IoError> {
    let got: [u8; 4] = r.bytes("magic")?;
    if &got != magic {
        return Err(IoError::format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(IoError::format(format!("unsupported version {version}")));
    }
    Ok(())
}

pub fn read_embeddings_binary<R: Read>(inner: R) -> Result<Vec<Embedding>, IoError> {
    let mut r = Reader { inner };
    check_header(&mut r, EMBEDDING_MAGIC)?;
    let dim = r.u32("dimension")? as usize;
    let count = r.u64("record count")?;
    let mut out = Vec::with_capacity(count.min(1 << 20) as usize);
    for i in 0..count {
        let len = r.u16("id length")? as usize;
        let mut raw = vec![0u8; len];
        r.inner.read_exact(&mut raw).map_err(|e| truncated(e, "record id"))?;
        let raw = String::from_utf8(raw).map_err(|_| IoError::format(format!("record {i}: id is not UTF-8")))?;
        let yaw = r.f32("yaw")?;
        let values = (0..dim)
            .map(|_| r.f32("values").map(f64::from))
            .collect::<Result<Vec<_>, _>>()?;
        let (id, subject_id) = split_record_id(&raw);
        out.push(Embedding {
            id,
            subject_id,
            yaw: (!yaw.is_nan()).then_some(f64::from(yaw)),
            values,
        });
    }
    r.expect_end()?;
    Ok(out)
}

pub fn write_checkpoint_to<W: Write>(mut w: W, params: &DreamParams) -> Result<(), IoError> {
    params.validate().map_err(|e| IoError::format(e.to_string()))?;
    let d = u32::try_from(params.dim).map_err(|_| IoError::format("dimension exceeds u32"))?;
    let h = u32::try_from(params.hidden).map_err(|_| IoError::format("hidden width exceeds u32"))?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&d.to_le_bytes())?;
    w.write_all(&h.to_le_bytes())?;
    w.write_all(&[params.arch.code()])?;
    w.write_all(&params.prelu_slope.to_le_bytes())?;
    for v in params.w1.iter().chain(&params.b1).chain(&params.w2).chain(&params.b2) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint_from<R: Read>(inner: R) -> Result<DreamParams, IoError> {
    let mut r = Reader { inner };
    check_header(&mut r, CHECKPOINT_MAGIC)?;
    let dim = r.u32("dimension")? as usize;
    let hidden = r.u32("hidden width")? as usize;
    let code = r.u8("architecture")?;
    let arch = Arch::from_code(code).ok_or_else(|| IoError::format(format!("unknown architecture code {code}")))?;
    let prelu_slope = r.f64("prelu slope")?;
    let mut p = DreamParams::zeros(arch, dim, hidden);
    p.prelu_slope = prelu_slope;
    p.w1 = r.f64s(p.w1.len(), "W1")?;
    p.b1 = r.f64s(p.b1.len(), "b1")?;
    p.w2 = r.f64s(p.w2.len(), "W2")?;
    p.b2 = r.f64s(p.b2.len(), "b2")?;
    r.expect_end()?;
    p.validate().map_err(|e| IoError::format(e.to_string()))?;
    Ok(p)
}
