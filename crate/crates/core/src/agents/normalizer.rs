use std::io::{Read, Write};

use crate::error::Result;
use crate::nn::checkpoint::{ByteReader, ByteWriter};

/// Lower bound on the per-dimension standard deviation.
const MIN_STD: f64 = 1e-2;

/// Running mean/std normalizer with clipping. When disabled it is the
/// identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    enabled: bool,
    clip: f64,
    count: f64,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Normalizer {
    pub fn new(dim: usize, clip: f64, enabled: bool) -> Self {
        Self {
            enabled,
            clip,
            count: 0.0,
            sum: vec![0.0; dim],
            sumsq: vec![0.0; dim],
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn update<'a>(&mut self, rows: impl IntoIterator<Item = &'a [f64]>) {
        if !self.enabled {
            return;
        }
        for row in rows {
            for ((s, q), &x) in self.sum.iter_mut().zip(&mut self.sumsq).zip(row) {
                *s += x;
                *q += x * x;
            }
            self.count += 1.0;
        }
        if self.count > 0.0 {
            for i in 0..self.dim() {
                let m = self.sum[i] / self.count;
                let var = self.sumsq[i] / self.count - m * m;
                self.mean[i] = m;
                self.std[i] = var.max(MIN_STD * MIN_STD).sqrt();
            }
        }
    }

    pub fn normalize_into(&self, x: &[f64], out: &mut [f64]) {
        if !self.enabled {
            out.copy_from_slice(x);
            return;
        }
        for i in 0..x.len() {
            out[i] = ((x[i] - self.mean[i]) / self.std[i]).clamp(-self.clip, self.clip);
        }
    }

    pub(crate) fn write<W: Write>(&self, w: &mut ByteWriter<W>) -> Result<()> {
        w.u8(u8::from(self.enabled))?;
        w.f64(self.clip)?;
        w.f64(self.count)?;
        w.vec(&self.sum)?;
        w.vec(&self.sumsq)?;
        w.vec(&self.mean)?;
        w.vec(&self.std)
    }

    pub(crate) fn read<R: Read>(r: &mut ByteReader<R>) -> Result<Self> {
        Ok(Self {
            enabled: r.u8()? != 0,
            clip: r.f64()?,
            count: r.f64()?,
            sum: r.vec()?,
            sumsq: r.vec()?,
            mean: r.vec()?,
            std: r.vec()?,
        })
    }
}
