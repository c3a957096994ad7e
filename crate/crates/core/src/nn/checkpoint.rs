//! Binary parameter files.
//!
//! All integers are little-endian `u32`/`u64`, all reals little-endian IEEE
//! `f64`, so a save/load round trip is bit-exact. A network is written as
//!
//! ```text
//! magic     8 bytes  "A2NET001"
//! layers    u32
//! per layer:
//!   in_dim  u32
//!   out_dim u32
//!   act     u8       0 = relu, 1 = tanh, 2 = linear
//!   weights out_dim * in_dim f64, row-major
//!   bias    out_dim f64
//! ```
//!
//! Agent checkpoints and replay dumps reuse [`ByteWriter`] / [`ByteReader`]
//! and embed networks in this same layout.

use std::io::{Read, Write};

use super::adam::{AdamConfig, AdamState};
use super::mlp::{Activation, GradBundle, Layer, LayerGrad, NetParams};
use crate::error::{Error, Result};

pub const NET_MAGIC: &[u8; 8] = b"A2NET001";

pub struct ByteWriter<W: Write> {
    inner: W,
}

impl<W: Write> ByteWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn into_inner(self) -> W {
        self.inner
    }

    pub fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b)?;
        Ok(())
    }

    pub fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn len(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Checkpoint("length exceeds u32".into()))?;
        self.u32(v)
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64s(&mut self, vs: &[f64]) -> Result<()> {
        for &v in vs {
            self.f64(v)?;
        }
        Ok(())
    }

    /// Length-prefixed vector.
    pub fn vec(&mut self, vs: &[f64]) -> Result<()> {
        self.len(vs.len())?;
        self.f64s(vs)
    }

    pub fn str(&mut self, s: &str) -> Result<()> {
        self.len(s.len())?;
        self.bytes(s.as_bytes())
    }

    pub fn net(&mut self, net: &NetParams) -> Result<()> {
        self.bytes(NET_MAGIC)?;
        self.len(net.layers().len())?;
        for l in net.layers() {
            self.len(l.in_dim())?;
            self.len(l.out_dim())?;
            self.u8(l.activation().tag())?;
            self.f64s(l.weights())?;
            self.f64s(l.bias())?;
        }
        Ok(())
    }

    pub fn adam(&mut self, st: &AdamState) -> Result<()> {
        self.f64s(&[
            st.config.lr,
            st.config.beta1,
            st.config.beta2,
            st.config.eps,
        ])?;
        self.u64(st.step)?;
        for g in [&st.m, &st.v] {
            self.len(g.layers.len())?;
            for l in &g.layers {
                self.vec(&l.weights)?;
                self.vec(&l.bias)?;
            }
        }
        Ok(())
    }
}

pub struct ByteReader<R: Read> {
    inner: R,
}

impl<R: Read> ByteReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner }
    }

    pub fn into_inner(self) -> R {
        self.inner
    }

    pub fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Checkpoint("truncated file".into())
            } else {
                Error::Io(e)
            }
        })?;
        Ok(buf)
    }

    pub fn expect_magic(&mut self, magic: &[u8; 8]) -> Result<()> {
        let got = self.bytes::<8>()?;
        if &got != magic {
            return Err(Error::Checkpoint(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&got),
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    pub fn length(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn vec(&mut self) -> Result<Vec<f64>> {
        let n = self.length()?;
        self.f64s(n)
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.length()?;
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Checkpoint("truncated string".into()))?;
        String::from_utf8(buf).map_err(|_| Error::Checkpoint("string is not utf-8".into()))
    }

    pub fn net(&mut self) -> Result<NetParams> {
        self.expect_magic(NET_MAGIC)?;
        let n = self.length()?;
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let in_dim = self.length()?;
            let out_dim = self.length()?;
            let tag = self.u8()?;
            let act = Activation::from_tag(tag)
                .ok_or_else(|| Error::Checkpoint(format!("unknown activation tag {tag}")))?;
            let w = self.f64s(in_dim * out_dim)?;
            let b = self.f64s(out_dim)?;
            layers.push(Layer::new(in_dim, out_dim, w, b, act)?);
        }
        NetParams::from_layers(layers)
    }

    pub fn adam(&mut self) -> Result<AdamState> {
        let c = self.f64s(4)?;
        let config = AdamConfig {
            lr: c[0],
            beta1: c[1],
            beta2: c[2],
            eps: c[3],
        };
        let step = self.u64()?;
        let mut read_bundle = || -> Result<GradBundle> {
            let n = self.length()?;
            let layers = (0..n)
                .map(|_| {
                    Ok(LayerGrad {
                        weights: self.vec()?,
                        bias: self.vec()?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(GradBundle { layers })
        };
        let m = read_bundle()?;
        let v = read_bundle()?;
        Ok(AdamState { config, step, m, v })
    }
}

pub fn save_params<W: Write>(net: &NetParams, w: W) -> Result<()> {
    ByteWriter::new(w).net(net)
}

pub fn load_params<R: Read>(r: R) -> Result<NetParams> {
    ByteReader::new(r).net()
}
