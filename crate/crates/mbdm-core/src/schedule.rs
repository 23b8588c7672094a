//! Variance-exploding noise schedule.
//!
//! Zero drift; the conditional marginal is `x_t = x_0 + sigma(t) * eps`
//! with `sigma` log-linear between `sigma_min` and `sigma_max` over
//! `t in [0, 1]`.

use crate::error::{Error, Result};
use crate::real::Real;

/// Log-linear VE schedule; also carries the data scale used by the network
/// preconditioner and conditioning re-weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule<T> {
    pub sigma_min: T,
    pub sigma_max: T,
    pub sigma_data: T,
}

impl<T: Real> NoiseSchedule<T> {
    pub fn new(sigma_min: T, sigma_max: T, sigma_data: T) -> Result<Self> {
        if !(T::zero() < sigma_min && sigma_min < sigma_max) {
            return Err(Error::config(format!(
                "need 0 < sigma_min < sigma_max, got {sigma_min}, {sigma_max}"
            )));
        }
        if !(sigma_data > T::zero()) {
            return Err(Error::config("sigma_data must be positive"));
        }
        Ok(NoiseSchedule {
            sigma_min,
            sigma_max,
            sigma_data,
        })
    }

    /// Paper defaults for the 2-D experiments.
    pub fn default_for_unit_data() -> Self {
        NoiseSchedule {
            sigma_min: T::of(3e-5),
            sigma_max: T::of(80.0),
            sigma_data: T::one(),
        }
    }

    /// Noise level at quantile `u in [0, 1]` of the log-linear
    /// distribution: `sigma_min * (sigma_max / sigma_min)^u`. Used both
    /// for training-time noise draws and sampling-time step grids.
    pub fn sigma_of_u(&self, u: T) -> T {
        self.sigma_min * (self.sigma_max / self.sigma_min).powf(u)
    }

    /// Inverse of [`Self::sigma_of_u`].
    pub fn u_of_sigma(&self, sigma: T) -> T {
        (sigma / self.sigma_min).ln() / (self.sigma_max / self.sigma_min).ln()
    }

    /// Diffusion coefficient `g(t) = sqrt(d sigma^2 / dt)` of the VE SDE
    /// under this time parameterization (T = 1).
    pub fn g_of_t(&self, t: T) -> T {
        let sigma = self.sigma_of_u(t);
        let log_ratio = (self.sigma_max / self.sigma_min).ln();
        sigma * (T::of(2.0) * log_ratio).sqrt()
    }

    /// Drift of the forward SDE; identically zero for VE.
    pub fn drift(&self, _x: T, _t: T) -> T {
        T::zero()
    }
}
