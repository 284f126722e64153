//! Little-endian binary containers for datasets and checkpoints.
//!
//! Layout: 8-byte magic, `u32` version, `u64` seed, `u32` array count, then
//! for each array a `u32` rank, `u64` dimensions and `f64` data.

use std::path::Path;

use crate::autodiff::{Activation, Mlp, MlpConfig, Tensor};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const SHAPE_MAGIC: [u8; 8] = *b"ELSHAPE\0";
pub const SPIN_MAGIC: [u8; 8] = *b"ELSPIN\0\0";
pub const CHECKPOINT_MAGIC: [u8; 8] = *b"ELCKPT\0\0";

#[derive(Clone, Debug, PartialEq)]
pub struct Array {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Array {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Format(format!("shape {shape:?} does not hold {} values", data.len())));
        }
        Ok(Self { shape, data })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub magic: [u8; 8],
    pub version: u32,
    pub seed: u64,
    pub arrays: Vec<Array>,
}

impl Container {
    pub fn new(magic: [u8; 8], seed: u64, arrays: Vec<Array>) -> Self {
        Self {
            magic,
            version: FORMAT_VERSION,
            seed,
            arrays,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.magic);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            out.extend_from_slice(&(a.shape.len() as u32).to_le_bytes());
            for &d in &a.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], magic: [u8; 8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let got: [u8; 8] = r.take(8)?.try_into().expect("8 bytes");
        if got != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&got),
                String::from_utf8_lossy(&magic)
            )));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let seed = r.u64()?;
        let count = r.u32()? as usize;
        let mut arrays = Vec::new();
        for _ in 0..count {
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Format("array size overflows".into()))?;
            if len > (bytes.len() - r.pos) / 8 {
                return Err(Error::Format("truncated array data".into()));
            }
            let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            arrays.push(Array { shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            magic,
            version,
            seed,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path, magic: [u8; 8]) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?, magic)
    }

    /// The array at `index`, which must have rank `rank`.
    pub fn array(&self, index: usize, rank: usize) -> Result<&Array> {
        let a = self
            .arrays
            .get(index)
            .ok_or_else(|| Error::Format(format!("missing array {index}")))?;
        if a.shape.len() != rank {
            return Err(Error::Format(format!("array {index} has rank {}, expected {rank}", a.shape.len())));
        }
        Ok(a)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format("unexpected end of file".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Checkpoint: a metadata array `[input, hidden, output, layers, activation]`
/// followed by the MLP parameters.
pub fn checkpoint(mlp: &Mlp, seed: u64) -> Result<Container> {
    let c = mlp.config();
    let act = match c.activation {
        Activation::Relu => 0.0,
        Activation::Silu => 1.0,
    };
    let meta = vec![
        c.input_dim as f64,
        c.hidden_dim as f64,
        c.output_dim as f64,
        c.n_hidden_layers as f64,
        act,
    ];
    let mut arrays = vec![Array::new(vec![5], meta)?];
    for p in mlp.params() {
        arrays.push(Array::new(p.shape().to_vec(), p.data().to_vec())?);
    }
    Ok(Container::new(CHECKPOINT_MAGIC, seed, arrays))
}

pub fn mlp_from_checkpoint(c: &Container) -> Result<Mlp> {
    let meta = &c.array(0, 1)?.data;
    if meta.len() != 5 {
        return Err(Error::Format("checkpoint metadata must hold 5 values".into()));
    }
    let activation = match meta[4] as u8 {
        0 => Activation::Relu,
        1 => Activation::Silu,
        k => return Err(Error::Format(format!("unknown activation code {k}"))),
    };
    let config = MlpConfig {
        input_dim: meta[0] as usize,
        hidden_dim: meta[1] as usize,
        output_dim: meta[2] as usize,
        n_hidden_layers: meta[3] as usize,
        activation,
    };
    let params = c.arrays[1..]
        .iter()
        .map(|a| Tensor::new(a.shape.clone(), a.data.clone()))
        .collect::<Result<Vec<_>>>()?;
    Mlp::from_parts(config, params)
}
