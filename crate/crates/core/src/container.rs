//! `TSVD1` binary container for tSVD factors and trained bases.
//!
//! ```text
//! offset  size  field
//! 0       5     magic "TSVD1"
//! 5       1     flags: bit 0 = S present, bit 1 = V present
//! 6       8     ell   (u64 LE)
//! 14      8     m     (u64 LE) columns of the decomposed tensor
//! 22      8     n     (u64 LE)
//! 30      8     k     (u64 LE) lateral slices kept in U (and V)
//! 38      ...   U entries, ell*k*n f64 LE, frontal-slice-major
//!               S entries, k*k*n f64 LE (if flagged)
//!               V entries, m*k*n f64 LE (if flagged)
//! ```
//!
//! A trained class basis is written with flags 0 (U only).

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Dims, Tensor3};
use crate::tsvd::TsvdFactors;

pub const MAGIC: &[u8; 5] = b"TSVD1";
const HEADER_LEN: usize = 38;
const HAS_S: u8 = 1;
const HAS_V: u8 = 2;

/// Decoded container contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    /// Shape `ell x m x n` of the tensor the factors came from.
    pub source: Dims,
    pub u: Tensor3,
    pub s: Option<Tensor3>,
    pub v: Option<Tensor3>,
}

impl Container {
    pub fn rank(&self) -> usize {
        self.u.dims().m
    }

    pub fn into_factors(self) -> Result<TsvdFactors> {
        match (self.s, self.v) {
            (Some(s), Some(v)) => TsvdFactors::from_parts(self.u, s, v),
            _ => Err(Error::Container("container holds U only".into())),
        }
    }
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor3) {
    for x in t.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn encode(source: Dims, u: &Tensor3, s: Option<&Tensor3>, v: Option<&Tensor3>) -> Vec<u8> {
    let k = u.dims().m;
    let mut flags = 0;
    if s.is_some() {
        flags |= HAS_S;
    }
    if v.is_some() {
        flags |= HAS_V;
    }
    let payload = u.data().len()
        + s.map_or(0, |t| t.data().len())
        + v.map_or(0, |t| t.data().len());
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * payload);
    out.extend_from_slice(MAGIC);
    out.push(flags);
    for d in [source.ell, source.m, source.n, k] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    put_tensor(&mut out, u);
    if let Some(s) = s {
        put_tensor(&mut out, s);
    }
    if let Some(v) = v {
        put_tensor(&mut out, v);
    }
    out
}

pub fn encode_factors(f: &TsvdFactors) -> Vec<u8> {
    let du = f.u().dims();
    let source = Dims {
        ell: du.ell,
        m: f.v().dims().ell,
        n: du.n,
    };
    encode(source, f.u(), Some(f.s()), Some(f.v()))
}

/// Encodes a trained basis `u` (`ell x k x n`) learned from `m` images.
pub fn encode_basis(u: &Tensor3, m: usize) -> Vec<u8> {
    let du = u.dims();
    let source = Dims {
        ell: du.ell,
        m,
        n: du.n,
    };
    encode(source, u, None, None)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, len: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Container(format!(
                    "truncated at byte {}: need {len} more bytes, have {}",
                    self.pos,
                    self.bytes.len() - self.pos
                ))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<usize> {
        let b = self.take(8)?;
        let v = u64::from_le_bytes(b.try_into().expect("eight bytes"));
        usize::try_from(v).map_err(|_| Error::Container(format!("dimension {v} too large")))
    }

    fn tensor(&mut self, dims: Dims) -> Result<Tensor3> {
        let len = dims
            .ell
            .checked_mul(dims.m)
            .and_then(|x| x.checked_mul(dims.n))
            .and_then(|x| x.checked_mul(8))
            .ok_or_else(|| Error::Container("payload size overflows".into()))?;
        let raw = self.take(len)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
            .collect();
        Tensor3::from_vec(dims, data)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Container> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Container("missing TSVD1 magic".into()));
    }
    let flags = r.take(1)?[0];
    if flags & !(HAS_S | HAS_V) != 0 {
        return Err(Error::Container(format!("unknown flags {flags:#04x}")));
    }
    let (ell, m, n, k) = (r.u64()?, r.u64()?, r.u64()?, r.u64()?);
    let source = Dims::new(ell, m, n)?;
    if k == 0 || k > ell {
        return Err(Error::Container(format!("rank {k} invalid for ell = {ell}")));
    }
    let u = r.tensor(Dims::new(ell, k, n)?)?;
    let s = if flags & HAS_S != 0 {
        Some(r.tensor(Dims::new(k, k, n)?)?)
    } else {
        None
    };
    let v = if flags & HAS_V != 0 {
        Some(r.tensor(Dims::new(m, k, n)?)?)
    } else {
        None
    };
    if r.pos != bytes.len() {
        return Err(Error::Container(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(Container { source, u, s, v })
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Container> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsvd::{truncate, tsvd};

    fn sample() -> Tensor3 {
        Tensor3::from_fn(5, 4, 3, |i, j, k| ((i * 5 + j * 3 + k) as f64 * 0.7).cos()).unwrap()
    }

    #[test]
    fn header_layout() {
        let f = truncate(&tsvd(&sample()).unwrap(), 2).unwrap();
        let bytes = encode_factors(&f);
        assert_eq!(&bytes[..5], b"TSVD1");
        assert_eq!(bytes[5], 3);
        assert_eq!(u64::from_le_bytes(bytes[6..14].try_into().unwrap()), 5);
        assert_eq!(u64::from_le_bytes(bytes[14..22].try_into().unwrap()), 4);
        assert_eq!(u64::from_le_bytes(bytes[22..30].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[30..38].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 38 + 8 * (5 * 2 * 3 + 2 * 2 * 3 + 4 * 2 * 3));
        assert_eq!(
            f64::from_le_bytes(bytes[38..46].try_into().unwrap()),
            f.u().data()[0]
        );
    }

    #[test]
    fn factors_round_trip_bit_exact() {
        let f = tsvd(&sample()).unwrap();
        let back = decode(&encode_factors(&f)).unwrap().into_factors().unwrap();
        assert_eq!(back, f);
        assert_eq!(encode_factors(&back), encode_factors(&f));
    }

    #[test]
    fn basis_round_trip_and_u_only() {
        let u = truncate(&tsvd(&sample()).unwrap(), 3).unwrap().into_u();
        let c = decode(&encode_basis(&u, 40)).unwrap();
        assert_eq!(c.u, u);
        assert_eq!(c.source, Dims::new(5, 40, 3).unwrap());
        assert_eq!(c.rank(), 3);
        assert!(c.s.is_none() && c.v.is_none());
        assert!(c.into_factors().is_err());
    }

    #[test]
    fn rejects_corruption() {
        let u = truncate(&tsvd(&sample()).unwrap(), 2).unwrap().into_u();
        let good = encode_basis(&u, 4);
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(decode(&bad_magic).is_err());
        assert!(decode(&good[..good.len() - 3]).is_err());
        let mut long = good.clone();
        long.push(0);
        assert!(decode(&long).is_err());
        let mut nan = good.clone();
        nan[38..46].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode(&nan), Err(Error::NonFinite { .. })));
        let mut flags = good;
        flags[5] = 0x80;
        assert!(decode(&flags).is_err());
    }
}
