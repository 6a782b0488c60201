use std::io::{Read, Write};

use super::{Layer, Tensor};
use crate::error::{Error, Result};
use crate::Scalar;

const MAGIC: &[u8; 4] = b"ICFM";
const VERSION: u32 = 1;

/// Copy of every parameter and buffer of a model, in visiting order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Snapshot {
    pub tensors: Vec<Tensor<f64>>,
}

impl Snapshot {
    pub fn capture<T: Scalar>(model: &mut dyn Layer<T>) -> Self {
        let mut tensors = Vec::new();
        model.visit_params(&mut |p| tensors.push(p.value.cast()));
        model.visit_buffers(&mut |b| tensors.push(b.cast()));
        Self { tensors }
    }

    pub fn restore<T: Scalar>(&self, model: &mut dyn Layer<T>) -> Result<()> {
        let mut i = 0;
        let mut mismatch = None;
        let mut load = |dst: &mut Tensor<T>| {
            match self.tensors.get(i) {
                Some(src) if src.shape == dst.shape => {
                    for (d, s) in dst.data.iter_mut().zip(&src.data) {
                        *d = T::lit(*s);
                    }
                }
                other => {
                    mismatch.get_or_insert((i, other.map(|t| t.shape.clone()), dst.shape.clone()));
                }
            }
            i += 1;
        };
        model.visit_params(&mut |p| load(&mut p.value));
        model.visit_buffers(&mut |b| load(b));
        if let Some((idx, have, want)) = mismatch {
            return Err(Error::Contract(format!(
                "snapshot tensor {idx} has shape {have:?}, model expects {want:?}"
            )));
        }
        if i != self.tensors.len() {
            return Err(Error::Contract(format!(
                "snapshot holds {} tensors, model has {i}",
                self.tensors.len()
            )));
        }
        Ok(())
    }
}

/// `magic, version u32, count u32, then per tensor rank u32 + dims u64`,
/// followed by every tensor's values as little-endian f64.
pub fn write_snapshot<W: Write>(s: &Snapshot, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(s.tensors.len() as u32).to_le_bytes())?;
    for t in &s.tensors {
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
    }
    for t in &s.tensors {
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<Snapshot> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a model snapshot".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut shapes = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            shape.push(
                usize::try_from(read_u64(&mut r)?).map_err(|_| Error::Format("dimension overflows".into()))?,
            );
        }
        shapes.push(shape);
    }
    let mut tensors = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Format("tensor size overflows".into()))?;
        let mut bytes = vec![0u8; n.checked_mul(8).ok_or_else(|| Error::Format("tensor size overflows".into()))?];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        tensors.push(Tensor { shape, data });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after snapshot payload".into()));
    }
    Ok(Snapshot { tensors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_mlp, BatchNorm, Linear, MlpConfig, Network};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_through_bytes_and_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = MlpConfig {
            batch_norm: true,
            ..MlpConfig::default()
        };
        let mut a = Network::new(build_mlp::<f64>(&cfg, 3, &mut rng).unwrap().layers);
        let mut b = Network::new(build_mlp::<f64>(&cfg, 3, &mut rng).unwrap().layers);
        let snap = Snapshot::capture(&mut a);
        let mut buf = Vec::new();
        write_snapshot(&snap, &mut buf).unwrap();
        let back = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back, snap);
        back.restore(&mut b).unwrap();
        assert_eq!(Snapshot::capture(&mut b), snap);
        assert!(read_snapshot(&buf[..buf.len() - 3]).is_err());

        let mut other = Linear::<f64>::zeros(2, 2);
        assert!(snap.restore(&mut other).is_err());
        let mut bn = BatchNorm::<f64>::new(4);
        assert!(snap.restore(&mut bn).is_err());
    }
}
