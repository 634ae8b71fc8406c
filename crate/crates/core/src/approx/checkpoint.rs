//! Binary network checkpoints.
//!
//! Layout (little endian): magic `RCRLNET\x01`, `u32` network count, then per
//! network a `u32` name length and UTF-8 name, a `u32` head JSON length and
//! head JSON, a `u32` layer-size count and the sizes as `u32`, and finally
//! the parameters as `f64`.

use std::io::{Read, Write};
use std::path::Path;

use super::mlp::{param_count, Mlp, OutputHead};
use crate::error::{ApproxError, Error, Result};

const MAGIC: &[u8; 8] = b"RCRLNET\x01";

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| ApproxError::Format("length exceeds u32".into()))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode(nets: &[(&str, &Mlp)]) -> Result<Vec<u8>> {
    let mut buf = MAGIC.to_vec();
    put_u32(&mut buf, nets.len())?;
    for (name, net) in nets {
        put_u32(&mut buf, name.len())?;
        buf.extend_from_slice(name.as_bytes());
        let head = serde_json::to_vec(net.head())?;
        put_u32(&mut buf, head.len())?;
        buf.extend_from_slice(&head);
        put_u32(&mut buf, net.sizes().len())?;
        for s in net.sizes() {
            put_u32(&mut buf, *s)?;
        }
        for p in &net.params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ApproxError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.data.len());
        let end = end.ok_or_else(|| ApproxError::Format("truncated checkpoint".into()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, ApproxError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn decode(data: &[u8]) -> Result<Vec<(String, Mlp)>> {
    let mut c = Cursor { data, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(ApproxError::Format("bad checkpoint magic".into()).into());
    }
    let count = c.u32()?;
    let mut out = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let n = c.u32()?;
        let name = String::from_utf8(c.take(n)?.to_vec()).map_err(|_| ApproxError::Format("name is not UTF-8".into()))?;
        let n = c.u32()?;
        let head: OutputHead = serde_json::from_slice(c.take(n)?)?;
        let layers = c.u32()?;
        let sizes = (0..layers).map(|_| c.u32()).collect::<Result<Vec<_>, _>>()?;
        let mut net = Mlp::zeros(&sizes, head)?;
        let bytes = c.take(param_count(&sizes) * 8)?;
        for (p, chunk) in net.params.iter_mut().zip(bytes.chunks_exact(8)) {
            *p = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        out.push((name, net));
    }
    if c.pos != data.len() {
        return Err(ApproxError::Format("trailing bytes in checkpoint".into()).into());
    }
    Ok(out)
}

pub fn save(path: &Path, nets: &[(&str, &Mlp)]) -> Result<()> {
    let bytes = encode(nets)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<(String, Mlp)>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

/// Looks up a network by name in a decoded checkpoint.
pub fn take_named(nets: &mut Vec<(String, Mlp)>, name: &str) -> Result<Mlp> {
    let i = nets
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| Error::Approx(ApproxError::Format(format!("checkpoint has no network `{name}`"))))?;
    Ok(nets.swap_remove(i).1)
}
