//! `FTNN1` checkpoint format.
//!
//! ```text
//! "FTNN1"
//! u32 tensor count
//! per tensor: u32 name length, UTF-8 name, u32 rank, rank x u32 dims
//! f64 values in layout order
//! ```
//! All integers and floats are little-endian.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::{Layout, ParamVec, TensorSpec};
use crate::{Error, Result};

pub const MAGIC: &[u8; 5] = b"FTNN1";

/// Size in bytes of everything before the values.
pub fn header_size(layout: &Layout) -> u64 {
    let mut n = MAGIC.len() as u64 + 4;
    for t in layout.tensors() {
        n += 4 + t.name.len() as u64 + 4 + 4 * t.shape.len() as u64;
    }
    n
}

/// Total serialized size of a parameter vector with this layout.
pub fn serialized_size(layout: &Layout) -> u64 {
    header_size(layout) + 8 * layout.len() as u64
}

fn dim_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))
}

pub fn write<W: Write>(params: &ParamVec, mut w: W) -> Result<()> {
    let layout = params.layout();
    w.write_all(MAGIC)?;
    w.write_all(&dim_u32(layout.tensors().len(), "tensor count")?.to_le_bytes())?;
    for t in layout.tensors() {
        w.write_all(&dim_u32(t.name.len(), "name length")?.to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&dim_u32(t.shape.len(), "rank")?.to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&dim_u32(d, "dimension")?.to_le_bytes())?;
        }
    }
    let mut buf = Vec::with_capacity(8 * params.len());
    for v in params.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn to_bytes(params: &ParamVec) -> Vec<u8> {
    let mut out = Vec::with_capacity(serialized_size(params.layout()) as usize);
    write(params, &mut out).expect("writing to a Vec cannot fail");
    out
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated checkpoint".into())
    } else {
        Error::Io(e)
    }
}

pub fn read<R: Read>(mut r: R) -> Result<ParamVec> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic, expected FTNN1".into()));
    }
    let count = read_u32(&mut r)? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r)? as usize);
        }
        tensors.push(TensorSpec { name, shape });
    }
    let layout = Arc::new(Layout::new(tensors));
    let mut raw = vec![0u8; 8 * layout.len()];
    r.read_exact(&mut raw).map_err(truncated)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after values", rest.len())));
    }
    let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    ParamVec::from_values(layout, values)
}

pub fn save(params: &ParamVec, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(params))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ParamVec> {
    let bytes = std::fs::read(path)?;
    read(bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_layout_is_exact() {
        let l = Arc::new(Layout::new(vec![TensorSpec::new("ab", &[2])]));
        let p = ParamVec::from_values(l, vec![1.0, -2.5]).unwrap();
        let bytes = to_bytes(&p);
        let mut want = b"FTNN1".to_vec();
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&2u32.to_le_bytes());
        want.extend_from_slice(b"ab");
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&2u32.to_le_bytes());
        want.extend_from_slice(&1.0f64.to_le_bytes());
        want.extend_from_slice(&(-2.5f64).to_le_bytes());
        assert_eq!(bytes, want);
        assert_eq!(serialized_size(p.layout()), bytes.len() as u64);
        assert_eq!(header_size(p.layout()), bytes.len() as u64 - 16);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(read(&b"FTNN2"[..]), Err(Error::Format(_))));
        assert!(matches!(read(&b"FTN"[..]), Err(Error::Format(_))));
        let l = Arc::new(Layout::new(vec![TensorSpec::new("w", &[1])]));
        let mut bytes = to_bytes(&ParamVec::zeros(l));
        bytes.push(0);
        assert!(matches!(read(bytes.as_slice()), Err(Error::Format(_))));
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(read(bytes.as_slice()), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn round_trip(shapes in prop::collection::vec(prop::collection::vec(1usize..4, 0..3), 1..4), seed in any::<u64>()) {
            let tensors = shapes.iter().enumerate()
                .map(|(i, s)| TensorSpec::new(format!("t{i}.ünï"), s)).collect();
            let layout = Arc::new(Layout::new(tensors));
            let mut rng = crate::rng::seeded(seed);
            let p = ParamVec::uniform_init(layout, 1e3, &mut rng);
            let back = read(to_bytes(&p).as_slice()).unwrap();
            prop_assert_eq!(back.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            p.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back.layout().as_ref(), p.layout().as_ref());
        }
    }
}
