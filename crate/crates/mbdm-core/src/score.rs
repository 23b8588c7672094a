//! Score architectures: how a network and a set of bridges compose into
//! the score of the reverse process.
//!
//! - `plain`: the network alone.
//! - `c`:     the network conditioned on the re-weighted bridge signal.
//! - `db`:    the network plus the bridge offset.
//! - `mbm`:   both the conditioning input and the offset.
//!
//! The raw network predicts noise; the score in x-space is `-eps_hat /
//! sigma`, with inputs normalized by `sqrt(sigma^2 + sigma_data^2)` so
//! activations stay O(1) across the whole noise range.

use crate::bridge::BridgeSet;
use crate::error::{Error, Result};
use crate::nn::{self, MlpParams, MlpSpec};
use crate::real::Real;
use crate::schedule::NoiseSchedule;
use crate::tensor::Tensor;

/// Architecture variants for incorporating bridges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchTag {
    Plain,
    C,
    Db,
    Mbm,
}

impl ArchTag {
    pub fn conditions(self) -> bool {
        matches!(self, ArchTag::C | ArchTag::Mbm)
    }

    pub fn offsets(self) -> bool {
        matches!(self, ArchTag::Db | ArchTag::Mbm)
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "plain" => ArchTag::Plain,
            "c" => ArchTag::C,
            "db" => ArchTag::Db,
            "mbm" => ArchTag::Mbm,
            other => {
                return Err(Error::config(format!(
                    "unknown architecture '{other}' (expected plain|c|db|mbm)"
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ArchTag::Plain => "plain",
            ArchTag::C => "c",
            ArchTag::Db => "db",
            ArchTag::Mbm => "mbm",
        }
    }

    pub fn byte(self) -> u8 {
        match self {
            ArchTag::Plain => 0,
            ArchTag::C => 1,
            ArchTag::Db => 2,
            ArchTag::Mbm => 3,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        Ok(match b {
            0 => ArchTag::Plain,
            1 => ArchTag::C,
            2 => ArchTag::Db,
            3 => ArchTag::Mbm,
            other => return Err(Error::config(format!("unknown architecture tag {other}"))),
        })
    }
}

/// Anything that can score a batch of points at one noise level.
pub trait ScoreSource<T: Real>: Sync {
    fn dim(&self) -> usize;
    fn score_batch(&self, x: &Tensor<T>, sigma: T) -> Result<Tensor<T>>;
}

/// Network inputs and bridge terms prepared for a batch with per-row noise
/// levels.
pub struct PreparedInputs<T> {
    /// `[batch, d + embed + cond]` network input.
    pub input: Tensor<T>,
    /// Summed bridge vectors per row (only for offsetting architectures).
    pub bridge_sum: Option<Tensor<T>>,
}

/// A score model: architecture tag, network parameters, bridges and the
/// noise schedule they are tied to.
pub struct ComposedScore<T> {
    pub arch: ArchTag,
    pub params: MlpParams<T>,
    pub bridges: BridgeSet<T>,
    pub sched: NoiseSchedule<T>,
}

impl<T: Real> ComposedScore<T> {
    pub fn new(
        arch: ArchTag,
        params: MlpParams<T>,
        bridges: BridgeSet<T>,
        sched: NoiseSchedule<T>,
    ) -> Result<Self> {
        let want_cond = if arch.conditions() {
            bridges.conditioning_dim()
        } else {
            0
        };
        if params.spec.cond_dim != want_cond {
            return Err(Error::config(format!(
                "architecture {} expects conditioning width {want_cond}, network has {}",
                arch.name(),
                params.spec.cond_dim
            )));
        }
        if (arch.conditions() || arch.offsets()) && bridges.is_empty() {
            return Err(Error::config(format!(
                "architecture {} requires at least one bridge",
                arch.name()
            )));
        }
        if let Some(d) = bridges.dim() {
            if d != params.spec.data_dim {
                return Err(Error::config(format!(
                    "bridge dimension {d} does not match data dimension {}",
                    params.spec.data_dim
                )));
            }
        }
        params.check_consistent()?;
        Ok(ComposedScore {
            arch,
            params,
            bridges,
            sched,
        })
    }

    /// Network spec for an architecture/bridge combination.
    pub fn spec_for(
        arch: ArchTag,
        data_dim: usize,
        hidden: usize,
        blocks: usize,
        embed_dim: usize,
        bridges: &BridgeSet<T>,
    ) -> MlpSpec {
        MlpSpec {
            data_dim,
            hidden,
            blocks,
            embed_dim,
            cond_dim: if arch.conditions() {
                bridges.conditioning_dim()
            } else {
                0
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.params.spec.data_dim
    }

    /// Assemble network inputs (and bridge offsets where the architecture
    /// uses them) for rows of `x` with per-row noise levels.
    pub fn prepare_inputs(&self, x: &Tensor<T>, sigmas: &[T]) -> Result<PreparedInputs<T>> {
        let d = self.dim();
        let b = x.rows();
        if x.shape() != [b, d] || sigmas.len() != b {
            return Err(Error::config("input batch shape mismatch"));
        }
        let sd = self.sched.sigma_data;

        let mut scaled = x.clone();
        for (row, &s) in scaled.data_mut().chunks_mut(d).zip(sigmas) {
            let c_in = (s * s + sd * sd).sqrt().recip();
            for v in row.iter_mut() {
                *v = *v * c_in;
            }
        }

        let embed = nn::embed_sigma_batch(sigmas, self.params.spec.embed_dim)?;

        let mut parts: Vec<&Tensor<T>> = vec![&scaled, &embed];
        let cond;
        if self.arch.conditions() {
            let cdim = self.bridges.conditioning_dim();
            let mut c = Tensor::zeros(&[b, cdim]);
            for i in 0..b {
                self.bridges
                    .conditioning_into(x.row(i), sigmas[i], c.row_mut(i))?;
            }
            cond = c;
            parts.push(&cond);
        }
        let input = Tensor::hcat(&parts)?;

        let bridge_sum = if self.arch.offsets() {
            let mut bsum = Tensor::zeros(&[b, d]);
            for i in 0..b {
                self.bridges.sum_into(x.row(i), sigmas[i], bsum.row_mut(i))?;
            }
            Some(bsum)
        } else {
            None
        };

        Ok(PreparedInputs { input, bridge_sum })
    }

    /// Composed score for rows of `x` with per-row noise levels.
    pub fn score_rows(&self, x: &Tensor<T>, sigmas: &[T]) -> Result<Tensor<T>> {
        let prep = self.prepare_inputs(x, sigmas)?;
        let raw = nn::forward(&self.params, &prep.input)?;
        let d = self.dim();
        let mut out = raw;
        for (row, &s) in out.data_mut().chunks_mut(d).zip(sigmas) {
            let w = -s.recip();
            for v in row.iter_mut() {
                *v = *v * w;
            }
        }
        if let Some(bsum) = prep.bridge_sum {
            for (o, &bv) in out.data_mut().iter_mut().zip(bsum.data()) {
                *o = *o + bv;
            }
        }
        Ok(out)
    }

    /// Sampling-path score at one noise level: a chain whose state or
    /// bridge evaluation is no longer finite gets a NaN score row instead
    /// of failing the whole batch; the sampler flags and freezes it.
    fn score_batch_lenient(&self, x: &Tensor<T>, sigma: T) -> Result<Tensor<T>> {
        let d = self.dim();
        let b = x.rows();
        let sd = self.sched.sigma_data;
        let c_in = (sigma * sigma + sd * sd).sqrt().recip();
        let cdim = if self.arch.conditions() {
            self.bridges.conditioning_dim()
        } else {
            0
        };
        let mut ok = vec![true; b];
        let mut scaled = Tensor::zeros(&[b, d]);
        let mut cond = Tensor::zeros(&[b, cdim.max(1)]);
        let mut bsum = Tensor::zeros(&[b, d]);
        for i in 0..b {
            let row = x.row(i);
            if row.iter().any(|v| !v.is_finite()) {
                ok[i] = false;
                continue;
            }
            for (s, &v) in scaled.row_mut(i).iter_mut().zip(row) {
                *s = v * c_in;
            }
            if self.arch.conditions()
                && self
                    .bridges
                    .conditioning_into(row, sigma, &mut cond.row_mut(i)[..cdim])
                    .is_err()
            {
                ok[i] = false;
                continue;
            }
            if self.arch.offsets() && self.bridges.sum_into(row, sigma, bsum.row_mut(i)).is_err()
            {
                ok[i] = false;
            }
        }
        // Failed rows keep zero placeholders through the network; their
        // outputs are overwritten below.
        for i in 0..b {
            if !ok[i] {
                scaled.row_mut(i).iter_mut().for_each(|v| *v = T::zero());
                if cdim > 0 {
                    cond.row_mut(i).iter_mut().for_each(|v| *v = T::zero());
                }
            }
        }
        let embed = nn::embed_sigma_batch(&vec![sigma; b], self.params.spec.embed_dim)?;
        let mut parts: Vec<&Tensor<T>> = vec![&scaled, &embed];
        let cond_slice;
        if cdim > 0 {
            cond_slice = cond;
            parts.push(&cond_slice);
        }
        let input = Tensor::hcat(&parts)?;
        let raw = nn::forward(&self.params, &input)?;
        let mut out = raw;
        let w = -sigma.recip();
        let offsets = self.arch.offsets();
        for i in 0..b {
            if ok[i] {
                if offsets {
                    for (v, &bv) in out.row_mut(i).iter_mut().zip(bsum.row(i)) {
                        *v = *v * w + bv;
                    }
                } else {
                    for v in out.row_mut(i).iter_mut() {
                        *v = *v * w;
                    }
                }
            } else {
                out.row_mut(i).iter_mut().for_each(|v| *v = T::nan());
            }
        }
        Ok(out)
    }
}

impl<T: Real> ScoreSource<T> for ComposedScore<T> {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn score_batch(&self, x: &Tensor<T>, sigma: T) -> Result<Tensor<T>> {
        self.score_batch_lenient(x, sigma)
    }
}

/// The bridges alone: the "prior" of a bridged model, with no network.
pub struct BridgeOnlyScore<T> {
    pub bridges: BridgeSet<T>,
}

impl<T: Real> ScoreSource<T> for BridgeOnlyScore<T> {
    fn dim(&self) -> usize {
        self.bridges.dim().unwrap_or(0)
    }

    fn score_batch(&self, x: &Tensor<T>, sigma: T) -> Result<Tensor<T>> {
        let d = self.dim();
        let mut out = Tensor::zeros(&[x.rows(), d]);
        for i in 0..x.rows() {
            let row = x.row(i);
            if row.iter().any(|v| !v.is_finite())
                || self.bridges.sum_into(row, sigma, out.row_mut(i)).is_err()
            {
                out.row_mut(i).iter_mut().for_each(|v| *v = T::nan());
            }
        }
        Ok(out)
    }
}

/// A frozen model with bridge offsets applied only at sampling time
/// (guided sampling of an unbridged model).
pub struct GuidedScore<'a, T> {
    pub model: &'a ComposedScore<T>,
    pub bridges: &'a BridgeSet<T>,
}

impl<'a, T: Real> ScoreSource<T> for GuidedScore<'a, T> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn score_batch(&self, x: &Tensor<T>, sigma: T) -> Result<Tensor<T>> {
        let mut out = self.model.score_batch(x, sigma)?;
        if !self.bridges.is_empty() {
            let d = self.model.dim();
            let mut b = vec![T::zero(); d];
            for i in 0..x.rows() {
                let row = x.row(i);
                if row.iter().any(|v| !v.is_finite()) {
                    continue; // already NaN from the model pass
                }
                if self.bridges.sum_into(row, sigma, &mut b).is_err() {
                    out.row_mut(i).iter_mut().for_each(|v| *v = T::nan());
                    continue;
                }
                for (o, &bv) in out.row_mut(i).iter_mut().zip(&b) {
                    *o = *o + bv;
                }
            }
        }
        Ok(out)
    }
}
