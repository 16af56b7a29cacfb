//! Binary checkpoint layout (all integers little-endian):
//!
//! ```text
//! "SSLD" | version u16 | header_len u32 | header JSON (architecture, seed)
//! per parameter tensor: len u64 | len x f32
//! has_adam u8
//! if has_adam: t u64 | lr, beta1, beta2, eps as f64 | m tensors | v tensors
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Architecture, Model};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"SSLD";
pub const VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    seed: u64,
    class_count: usize,
}

fn put_tensor<T: Scalar>(buf: &mut Vec<u8>, t: &[T]) {
    buf.extend_from_slice(&(t.len() as u64).to_le_bytes());
    for v in t {
        buf.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
    }
}

pub fn checkpoint_bytes<T: Scalar>(
    model: &Model<T>,
    adam: Option<&AdamState<T>>,
) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        architecture: model.architecture().clone(),
        seed: model.seed(),
        class_count: crate::nn::CLASS_COUNT,
    })?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for p in model.params() {
        put_tensor(&mut buf, p);
    }
    match adam {
        None => buf.push(0),
        Some(st) => {
            if st.m.len() != model.params().len() {
                return Err(Error::Checkpoint("adam state does not match model".into()));
            }
            buf.push(1);
            buf.extend_from_slice(&st.t.to_le_bytes());
            let c = st.config;
            for h in [c.lr, c.beta1, c.beta2, c.eps] {
                buf.extend_from_slice(&h.to_le_bytes());
            }
            for t in st.m.iter().chain(&st.v) {
                put_tensor(&mut buf, t);
            }
        }
    }
    Ok(buf)
}

pub fn save_checkpoint<T: Scalar>(
    model: &Model<T>,
    adam: Option<&AdamState<T>>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = checkpoint_bytes(model, adam)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated: needed {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn tensor<T: Scalar>(&mut self, expected: usize) -> Result<Vec<T>> {
        let len = self.u64()? as usize;
        if len != expected {
            return Err(Error::Checkpoint(format!(
                "tensor of {len} values where the architecture needs {expected}"
            )));
        }
        let bytes = self.take(
            len.checked_mul(4)
                .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| T::from_f32_lossless(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect())
    }
}

pub fn checkpoint_from_bytes<T: Scalar>(buf: &[u8]) -> Result<(Model<T>, Option<AdamState<T>>)> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let hlen = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(hlen)?)
        .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    if header.class_count != crate::nn::CLASS_COUNT {
        return Err(Error::Checkpoint(format!(
            "class_count {} unsupported",
            header.class_count
        )));
    }
    let lens = header
        .architecture
        .param_lengths()
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let params = lens
        .iter()
        .map(|&n| r.tensor(n))
        .collect::<Result<Vec<Vec<T>>>>()?;
    let model = Model::from_parts(header.architecture, params, header.seed)?;
    let adam = match r.u8()? {
        0 => None,
        1 => {
            let t = r.u64()?;
            let config = AdamConfig {
                lr: r.f64()?,
                beta1: r.f64()?,
                beta2: r.f64()?,
                eps: r.f64()?,
            };
            let m = lens
                .iter()
                .map(|&n| r.tensor(n))
                .collect::<Result<Vec<_>>>()?;
            let v = lens
                .iter()
                .map(|&n| r.tensor(n))
                .collect::<Result<Vec<_>>>()?;
            Some(AdamState { config, t, m, v })
        }
        f => return Err(Error::Checkpoint(format!("bad optimizer flag {f}"))),
    };
    if r.pos != buf.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            buf.len() - r.pos
        )));
    }
    Ok((model, adam))
}

pub fn load_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
) -> Result<(Model<T>, Option<AdamState<T>>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::build_reference_model;

    #[test]
    fn reference_model_round_trips_bitwise() {
        let m = build_reference_model::<f32>(5);
        let bytes = checkpoint_bytes(&m, None).unwrap();
        assert_eq!(&bytes[..4], b"SSLD");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), VERSION);
        let (back, adam) = checkpoint_from_bytes::<f32>(&bytes).unwrap();
        assert!(adam.is_none());
        assert_eq!(back, m);
        for (a, b) in back
            .params()
            .iter()
            .flatten()
            .zip(m.params().iter().flatten())
        {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let m = build_reference_model::<f32>(5);
        let good = checkpoint_bytes(&m, None).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            checkpoint_from_bytes::<f32>(&bad_magic),
            Err(Error::Checkpoint(_))
        ));

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(checkpoint_from_bytes::<f32>(&bad_version).is_err());

        assert!(checkpoint_from_bytes::<f32>(&good[..good.len() - 5]).is_err());

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(checkpoint_from_bytes::<f32>(&trailing).is_err());
    }

    #[test]
    fn adam_state_round_trips() {
        let m = build_reference_model::<f32>(1);
        let mut st = AdamState::for_params(AdamConfig::default(), m.params());
        st.t = 17;
        st.m[0][3] = 0.25;
        st.v[9][1] = 1.5;
        let bytes = checkpoint_bytes(&m, Some(&st)).unwrap();
        let (_, back) = checkpoint_from_bytes::<f32>(&bytes).unwrap();
        assert_eq!(back.unwrap(), st);
    }
}
