//! Manual bridges: `b(x, t) = -gamma(t) * grad l(x, t)`.
//!
//! A bridge steers the reverse diffusion toward its constraint set; the
//! scale `gamma` vanishes at the high-noise end and diverges as `t -> 0`,
//! which concentrates the terminal distribution on the set. Bridges to
//! different constraints combine by vector addition into a bridge for the
//! intersection.

use rand::Rng;

use crate::constraint::DistanceField;
use crate::error::{Error, Result};
use crate::real::Real;

/// Closed-form `gamma(sigma)` families used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaSchedule<T> {
    /// `gamma = 1 / (scale * sigma^2)`.
    InverseSquared { scale: T },
    /// `gamma = (1 / sigma^2) * sigma_data^2 / (sigma^2 + sigma_data^2)`.
    Watermark { sigma_data: T },
}

impl<T: Real> GammaSchedule<T> {
    pub fn eval(&self, sigma: T) -> Result<T> {
        if !(sigma > T::zero()) {
            return Err(Error::config(format!(
                "gamma undefined for non-positive noise level {sigma}"
            )));
        }
        let s2 = sigma * sigma;
        Ok(match *self {
            GammaSchedule::InverseSquared { scale } => (scale * s2).recip(),
            GammaSchedule::Watermark { sigma_data } => {
                let d2 = sigma_data * sigma_data;
                d2 / (s2 * (s2 + d2))
            }
        })
    }
}

/// Re-weighting `gamma'(sigma) = sigma_data / sqrt(sigma^2 + sigma_data^2)`
/// applied to the gradient signal passed to conditioned score networks;
/// bounded by 1, vanishing at large noise.
pub fn conditioning_weight<T: Real>(sigma: T, sigma_data: T) -> T {
    sigma_data / (sigma * sigma + sigma_data * sigma_data).sqrt()
}

/// A distance field paired with a `gamma` schedule and an optional bridge
/// magnitude clamp.
pub struct ManualBridge<T> {
    pub name: String,
    pub field: Box<dyn DistanceField<T>>,
    pub gamma: GammaSchedule<T>,
    /// Norm bound applied after evaluation; `None` leaves the bridge raw.
    pub clamp: Option<T>,
    /// Data scale used for the conditioning re-weighting of this bridge.
    pub sigma_data: T,
}

impl<T: Real> ManualBridge<T> {
    pub fn new(
        name: impl Into<String>,
        field: Box<dyn DistanceField<T>>,
        gamma: GammaSchedule<T>,
    ) -> Self {
        ManualBridge {
            name: name.into(),
            field,
            gamma,
            clamp: None,
            sigma_data: T::one(),
        }
    }

    pub fn with_clamp(mut self, clamp: Option<T>) -> Self {
        self.clamp = clamp;
        self
    }

    pub fn with_sigma_data(mut self, sigma_data: T) -> Self {
        self.sigma_data = sigma_data;
        self
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    /// Bridge vector at `(x, sigma)`. `grad_buf` receives the raw distance
    /// gradient; returns whether that gradient was nonzero (the pre-clamp
    /// indicator used by conditioning).
    pub fn eval_into(
        &self,
        x: &[T],
        sigma: T,
        grad_buf: &mut [T],
        out: &mut [T],
    ) -> Result<bool> {
        let gamma = self.gamma.eval(sigma)?;
        self.field.grad(x, sigma, grad_buf);
        let mut nonzero = false;
        let mut norm2 = T::zero();
        for (o, &g) in out.iter_mut().zip(grad_buf.iter()) {
            if !g.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite distance gradient for bridge '{}' at sigma {sigma}",
                    self.name
                )));
            }
            nonzero |= g != T::zero();
            let b = -gamma * g;
            norm2 = norm2 + b * b;
            *o = b;
        }
        if let Some(m) = self.clamp {
            let norm = norm2.sqrt();
            if norm > m {
                let s = m / norm;
                for o in out.iter_mut() {
                    *o = *o * s;
                }
            }
        }
        Ok(nonzero)
    }

    pub fn eval(&self, x: &[T], sigma: T) -> Result<Vec<T>> {
        let mut grad = vec![T::zero(); self.dim()];
        let mut out = vec![T::zero(); self.dim()];
        self.eval_into(x, sigma, &mut grad, &mut out)?;
        Ok(out)
    }
}

/// Bridges to several constraints, combined by summation into a bridge to
/// the intersection set. Membership is the conjunction of the component
/// predicates, and the summed distance is reported for diagnostics.
pub struct BridgeSet<T> {
    bridges: Vec<ManualBridge<T>>,
}

impl<T: Real> BridgeSet<T> {
    pub fn empty() -> Self {
        BridgeSet {
            bridges: Vec::new(),
        }
    }

    pub fn combine(bridges: Vec<ManualBridge<T>>) -> Result<Self> {
        if let Some(first) = bridges.first() {
            let d = first.dim();
            if bridges.iter().any(|b| b.dim() != d) {
                return Err(Error::config("bridges have differing dimensions"));
            }
        }
        Ok(BridgeSet { bridges })
    }

    pub fn len(&self) -> usize {
        self.bridges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bridges.is_empty()
    }

    pub fn bridges(&self) -> &[ManualBridge<T>] {
        &self.bridges
    }

    pub fn dim(&self) -> Option<usize> {
        self.bridges.first().map(|b| b.dim())
    }

    /// Sum of the component bridge vectors.
    pub fn sum_into(&self, x: &[T], sigma: T, out: &mut [T]) -> Result<()> {
        out.iter_mut().for_each(|o| *o = T::zero());
        let mut grad = vec![T::zero(); x.len()];
        let mut one = vec![T::zero(); x.len()];
        for b in &self.bridges {
            b.eval_into(x, sigma, &mut grad, &mut one)?;
            for (o, &v) in out.iter_mut().zip(&one) {
                *o = *o + v;
            }
        }
        Ok(())
    }

    /// Membership in the intersection of the component sets.
    pub fn member_all(&self, x: &[T]) -> bool {
        self.bridges.iter().all(|b| b.field.member(x))
    }

    /// Name of the first violated constraint, if any.
    pub fn violated(&self, x: &[T]) -> Option<&str> {
        self.bridges
            .iter()
            .find(|b| !b.field.member(x))
            .map(|b| b.name.as_str())
    }

    /// Unit-weight diagnostic distance to the intersection.
    pub fn ell_sum(&self, x: &[T], sigma: T) -> T {
        self.bridges.iter().map(|b| b.field.eval(x, sigma)).sum()
    }

    /// Width of the conditioning signal: per bridge, the re-weighted
    /// gradient (d values) plus one indicator channel.
    pub fn conditioning_dim(&self) -> usize {
        self.dim().map_or(0, |d| self.bridges.len() * (d + 1))
    }

    /// Conditioning signal: concatenation over bridges of
    /// `-gamma'(sigma) * grad l_i` followed by an indicator channel that is
    /// 1 wherever the pre-clamp bridge is nonzero.
    pub fn conditioning_into(&self, x: &[T], sigma: T, out: &mut [T]) -> Result<()> {
        let d = x.len();
        let mut grad = vec![T::zero(); d];
        let mut at = 0;
        for b in &self.bridges {
            b.field.grad(x, sigma, &mut grad);
            let w = conditioning_weight(sigma, b.sigma_data);
            let mut nonzero = false;
            for (o, &g) in out[at..at + d].iter_mut().zip(&grad) {
                if !g.is_finite() {
                    return Err(Error::numeric(format!(
                        "non-finite conditioning gradient for bridge '{}'",
                        b.name
                    )));
                }
                nonzero |= g != T::zero();
                *o = -w * g;
            }
            out[at + d] = if nonzero { T::one() } else { T::zero() };
            at += d + 1;
        }
        Ok(())
    }

    /// Rejection-sampling probe for an empty intersection: returns the
    /// number of members found among `draws` uniform samples of the box.
    pub fn probe_intersection(
        &self,
        lo: &[T],
        hi: &[T],
        draws: usize,
        rng: &mut impl Rng,
    ) -> usize {
        let mut found = 0;
        let mut x = vec![T::zero(); lo.len()];
        for _ in 0..draws {
            for (xi, (&l, &h)) in x.iter_mut().zip(lo.iter().zip(hi)) {
                *xi = l + (h - l) * T::unit_uniform(rng);
            }
            if self.member_all(&x) {
                found += 1;
            }
        }
        found
    }
}
