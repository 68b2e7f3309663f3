//! Binary tensor checkpoints and text word vectors.
//!
//! Layout: `OIME1`, one version byte (1: 32-bit payloads, 2: 64-bit
//! payloads), then per tensor `<name>\n<rank>\n<dims>\n<payload>` with dims
//! space-separated and the payload little-endian.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::tensor::{ParamStore, Tensor};
use crate::{Error, Real, Result};

pub const FORMAT_MAGIC: &[u8; 5] = b"OIME1";
const VERSION_F32: u8 = 1;
const VERSION_F64: u8 = 2;

#[cfg(not(feature = "f32"))]
const NATIVE_VERSION: u8 = VERSION_F64;
#[cfg(feature = "f32")]
const NATIVE_VERSION: u8 = VERSION_F32;

/// Serializes every tensor in registration order at the build's native
/// precision, so a round trip is bit-exact.
pub fn encode_params(params: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + params.scalar_count() * core::mem::size_of::<Real>());
    out.extend_from_slice(FORMAT_MAGIC);
    out.push(NATIVE_VERSION);
    for (_, name, t) in params.iter() {
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(alloc::format!("\n2\n{} {}\n", t.rows(), t.cols()).as_bytes());
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn line(&mut self, what: &str) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Checkpoint(alloc::format!("truncated while reading {what} at byte {}", self.pos)))?;
        self.pos += end + 1;
        core::str::from_utf8(&rest[..end]).map_err(|_| Error::Checkpoint(alloc::format!("{what} is not UTF-8")))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(alloc::format!(
                "truncated payload of {what}: need {n} bytes, {} left",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

/// Parses a checkpoint. Any structural problem, including truncation, is an
/// error and no partial store is returned.
pub fn decode_params(bytes: &[u8]) -> Result<ParamStore> {
    if bytes.len() < 6 || &bytes[..5] != FORMAT_MAGIC {
        return Err(Error::Checkpoint("bad magic".to_string()));
    }
    let version = bytes[5];
    let width = match version {
        VERSION_F32 => 4,
        VERSION_F64 => 8,
        v => return Err(Error::Checkpoint(alloc::format!("unsupported version {v}"))),
    };
    let mut r = Reader { bytes, pos: 6 };
    let mut store = ParamStore::new();
    while r.pos < bytes.len() {
        let name = r.line("tensor name")?.to_string();
        if name.is_empty() || store.id(&name).is_some() {
            return Err(Error::Checkpoint(alloc::format!("empty or duplicate tensor name {name:?}")));
        }
        let rank: usize = r
            .line("rank")?
            .parse()
            .map_err(|_| Error::Checkpoint(alloc::format!("bad rank for {name}")))?;
        let dims: Vec<usize> = r
            .line("dims")?
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|d| d.parse().map_err(|_| Error::Checkpoint(alloc::format!("bad dims for {name}"))))
            .collect::<Result<_>>()?;
        let (rows, cols) = match (rank, dims.as_slice()) {
            (1, [n]) => (1, *n),
            (2, [r, c]) => (*r, *c),
            _ => return Err(Error::Checkpoint(alloc::format!("tensor {name}: rank {rank} with dims {dims:?}"))),
        };
        let count = rows.checked_mul(cols).ok_or_else(|| Error::Checkpoint(alloc::format!("tensor {name} too large")))?;
        let payload = r.take(count.saturating_mul(width), &name)?;
        let data: Vec<Real> = if width == 4 {
            payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as Real).collect()
        } else {
            payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()) as Real).collect()
        };
        store.add(name, Tensor::new(rows, cols, data));
    }
    Ok(store)
}

/// Parses `<word> <f1> ... <f_n>` lines. Every vector must have `dim`
/// components.
pub fn parse_word_vectors(text: &str, dim: usize) -> Result<BTreeMap<String, Vec<Real>>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line: i + 1, message };
        let mut parts = line.split_whitespace();
        let word = parts.next().unwrap_or_default().to_string();
        let v: Vec<Real> = parts
            .map(|s| s.parse::<Real>().map_err(|_| err(alloc::format!("bad number {s:?}"))))
            .collect::<Result<_>>()?;
        if v.len() != dim {
            return Err(err(alloc::format!("expected {dim} components, found {}", v.len())));
        }
        out.insert(word, v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("a.w", Tensor::new(2, 3, alloc::vec![0.1, -2.5, 3.25, 1e-30, -0.0, 7.0]));
        s.add("b", Tensor::zeros(0, 4));
        s.add("c", Tensor::scalar(Real::MAX));
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = store();
        let bytes = encode_params(&s);
        let back = decode_params(&bytes).unwrap();
        assert_eq!(encode_params(&back), bytes);
        for ((_, n1, t1), (_, n2, t2)) in s.iter().zip(back.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            assert!(t1.data().iter().zip(t2.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = encode_params(&store());
        for cut in 0..bytes.len() {
            // a cut exactly between tensors is a valid shorter checkpoint
            if let Ok(s) = decode_params(&bytes[..cut]) {
                assert!(s.len() < 3, "cut at {cut} decoded fully");
                assert_eq!(encode_params(&s), bytes[..cut]);
            }
        }
    }

    #[test]
    fn bad_header() {
        assert!(decode_params(b"OIME2\x02").is_err());
        assert!(decode_params(b"OIME1\x09").is_err());
        assert!(decode_params(b"OIME1\x02x\n3\n1 2 3\n").is_err());
    }

    #[test]
    fn reads_32_bit_payloads() {
        let mut bytes = FORMAT_MAGIC.to_vec();
        bytes.push(VERSION_F32);
        bytes.extend_from_slice(b"v\n1\n2\n");
        bytes.extend_from_slice(&1.5f32.to_le_bytes());
        bytes.extend_from_slice(&(-2.0f32).to_le_bytes());
        let s = decode_params(&bytes).unwrap();
        assert_eq!(s.get(s.id("v").unwrap()).data(), &[1.5, -2.0]);
    }

    #[test]
    fn word_vectors() {
        let v = parse_word_vectors("北京 0.5 1\n你 -1 2e-1\n", 2).unwrap();
        assert_eq!(v["你"], alloc::vec![-1.0, 0.2]);
        assert!(matches!(parse_word_vectors("a 1 2 3\n", 2), Err(Error::Parse { line: 1, .. })));
    }
}
