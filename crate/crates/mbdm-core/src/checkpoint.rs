//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//! magic "MBDM", version u32, architecture tag u8, config hash u64,
//! iteration u64, loop-RNG state (32-byte seed, stream u64, word position
//! u128), network spec (5 x u32), tensor shape table, f64 parameter
//! payload, then optionally the Adam state (step, hyperparameters and both
//! moment payloads). Save/load round-trips are bit-exact.

use std::io::Read;
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adam::AdamState;
use crate::error::{Error, Result};
use crate::nn::{MlpParams, MlpSpec};
use crate::real::Real;
use crate::score::ArchTag;
use crate::tensor::Tensor;
use crate::train::TrainState;

const MAGIC: &[u8; 4] = b"MBDM";
const VERSION: u32 = 1;

/// Serializable RNG position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Decoded checkpoint contents.
pub struct Checkpoint<T> {
    pub arch: ArchTag,
    pub config_hash: u64,
    pub iteration: u64,
    pub rng: RngState,
    pub spec: MlpSpec,
    pub tensors: Vec<Tensor<T>>,
    pub adam: Option<AdamSnapshot<T>>,
}

pub struct AdamSnapshot<T> {
    pub step: u64,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

/// FNV-1a hash of the resolved config text; stored in checkpoints so a
/// resume against a different config refuses to run.
pub fn config_hash(text: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn save<T: Real>(
    path: &Path,
    state: &TrainState<T>,
    config_hash: u64,
    include_adam: bool,
) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(state.model.arch.byte());
    buf.extend_from_slice(&config_hash.to_le_bytes());
    buf.extend_from_slice(&state.iteration.to_le_bytes());
    let rng = RngState::capture(&state.rng);
    buf.extend_from_slice(&rng.seed);
    buf.extend_from_slice(&rng.stream.to_le_bytes());
    buf.extend_from_slice(&rng.word_pos.to_le_bytes());

    let spec = state.model.params.spec;
    for v in [
        spec.data_dim,
        spec.hidden,
        spec.blocks,
        spec.embed_dim,
        spec.cond_dim,
    ] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }

    let tensors = &state.model.params.tensors;
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &e in t.shape() {
            buf.extend_from_slice(&(e as u64).to_le_bytes());
        }
    }
    for t in tensors {
        for v in t.data() {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }

    buf.push(u8::from(include_adam));
    if include_adam {
        let a = &state.adam;
        buf.extend_from_slice(&a.step.to_le_bytes());
        for v in [a.lr, a.beta1, a.beta2, a.eps] {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        for part in [&a.m, &a.v] {
            for t in part.iter() {
                for v in t.data() {
                    buf.extend_from_slice(&v.as_f64().to_le_bytes());
                }
            }
        }
    }

    std::fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    data: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.data.len() {
            return Err(Error::config("checkpoint truncated"));
        }
        let s = &self.data[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let mut data = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::config(format!("cannot open {}: {e}", path.display())))?
        .read_to_end(&mut data)?;
    let mut r = Reader { data: &data, at: 0 };

    if r.take(4)? != MAGIC {
        return Err(Error::config("not a checkpoint file (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::config(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let arch = ArchTag::from_byte(r.u8()?)?;
    let config_hash = r.u64()?;
    let iteration = r.u64()?;
    let mut seed = [0u8; 32];
    seed.copy_from_slice(r.take(32)?);
    let rng = RngState {
        seed,
        stream: r.u64()?,
        word_pos: r.u128()?,
    };
    let spec = MlpSpec {
        data_dim: r.u32()? as usize,
        hidden: r.u32()? as usize,
        blocks: r.u32()? as usize,
        embed_dim: r.u32()? as usize,
        cond_dim: r.u32()? as usize,
    };
    let n_tensors = r.u32()? as usize;
    let mut shapes = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        shapes.push(shape);
    }
    let read_tensors = |r: &mut Reader| -> Result<Vec<Tensor<T>>> {
        shapes
            .iter()
            .map(|shape| {
                let n: usize = shape.iter().product();
                let mut data = Vec::with_capacity(n);
                for _ in 0..n {
                    data.push(T::of(r.f64()?));
                }
                Tensor::from_vec(shape, data)
            })
            .collect()
    };
    let tensors = read_tensors(&mut r)?;
    let adam = if r.u8()? == 1 {
        let step = r.u64()?;
        let lr = T::of(r.f64()?);
        let beta1 = T::of(r.f64()?);
        let beta2 = T::of(r.f64()?);
        let eps = T::of(r.f64()?);
        let m = read_tensors(&mut r)?;
        let v = read_tensors(&mut r)?;
        Some(AdamSnapshot {
            step,
            lr,
            beta1,
            beta2,
            eps,
            m,
            v,
        })
    } else {
        None
    };
    if r.at != data.len() {
        return Err(Error::config("trailing bytes in checkpoint"));
    }

    let ckpt = Checkpoint {
        arch,
        config_hash,
        iteration,
        rng,
        spec,
        tensors,
        adam,
    };
    let params = MlpParams {
        spec: ckpt.spec,
        tensors: ckpt.tensors.clone(),
    };
    params.check_consistent()?;
    Ok(ckpt)
}

impl<T: Real> Checkpoint<T> {
    pub fn params(&self) -> MlpParams<T> {
        MlpParams {
            spec: self.spec,
            tensors: self.tensors.clone(),
        }
    }

    /// Rebuild the Adam state; falls back to fresh moments when the
    /// checkpoint omitted them.
    pub fn adam_state(&self, params: &MlpParams<T>, lr: T) -> AdamState<T> {
        match &self.adam {
            Some(a) => AdamState {
                m: a.m.clone(),
                v: a.v.clone(),
                step: a.step,
                lr: a.lr,
                beta1: a.beta1,
                beta2: a.beta2,
                eps: a.eps,
            },
            None => AdamState::new(params, lr),
        }
    }
}
