//! Constraint sets as distance fields.
//!
//! A [`DistanceField`] exposes a nonnegative, continuous, almost-everywhere
//! differentiable `l(x, sigma)` with `l(x, 0) = 0` exactly on the
//! constraint set, an analytic gradient, and an exact membership predicate
//! (so infraction metrics need no thresholds).

pub mod checkerboard;
pub mod geom;
pub mod polytope;
pub mod scene;

pub use checkerboard::Checkerboard;
pub use polytope::OrthonormalPolytope;
pub use scene::{CollisionField, DrivableMap, OffroadField, SceneSpec};

use crate::real::Real;

/// Distance function to a constraint set, time-parameterized by the noise
/// level `sigma` (fields that do not depend on time ignore it).
pub trait DistanceField<T: Real>: Send + Sync {
    /// Ambient dimension.
    fn dim(&self) -> usize;

    /// `l(x, sigma) >= 0`.
    fn eval(&self, x: &[T], sigma: T) -> T;

    /// Analytic gradient of `l` with respect to `x`; writes into `out`.
    fn grad(&self, x: &[T], sigma: T, out: &mut [T]);

    /// Exact membership in the constraint set (the `sigma = 0` slice).
    fn member(&self, x: &[T]) -> bool;

    /// Nearest point of the constraint set, for fields that can provide
    /// one. Returns `false` (leaving `out` untouched) otherwise.
    fn project(&self, _x: &[T], _out: &mut [T]) -> bool {
        false
    }

    /// Trace of the spatial Hessian where an analytic form exists.
    fn hessian_trace(&self, _x: &[T], _sigma: T) -> Option<T> {
        None
    }
}

impl<T: Real> DistanceField<T> for Box<dyn DistanceField<T>> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[T], sigma: T) -> T {
        (**self).eval(x, sigma)
    }
    fn grad(&self, x: &[T], sigma: T, out: &mut [T]) {
        (**self).grad(x, sigma, out)
    }
    fn member(&self, x: &[T]) -> bool {
        (**self).member(x)
    }
    fn project(&self, x: &[T], out: &mut [T]) -> bool {
        (**self).project(x, out)
    }
    fn hessian_trace(&self, x: &[T], sigma: T) -> Option<T> {
        (**self).hessian_trace(x, sigma)
    }
}

/// Evaluate the inner field on inputs normalized by the forward-process
/// standard deviation `sqrt(1 + sigma^2)` (for unit-variance data), with
/// the chain-rule factor applied to the gradient.
///
/// At `sigma -> 0` the wrapper reduces to the inner field, so membership is
/// delegated unscaled and the distance-function property is preserved.
pub struct Normalized<F> {
    pub inner: F,
}

impl<F> Normalized<F> {
    pub fn new(inner: F) -> Self {
        Normalized { inner }
    }

    fn scale<T: Real>(sigma: T) -> T {
        (T::one() + sigma * sigma).sqrt()
    }
}

impl<T: Real, F: DistanceField<T>> DistanceField<T> for Normalized<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, x: &[T], sigma: T) -> T {
        let inv = Self::scale(sigma).recip();
        let scaled: Vec<T> = x.iter().map(|&v| v * inv).collect();
        self.inner.eval(&scaled, sigma)
    }

    fn grad(&self, x: &[T], sigma: T, out: &mut [T]) {
        let inv = Self::scale(sigma).recip();
        let scaled: Vec<T> = x.iter().map(|&v| v * inv).collect();
        self.inner.grad(&scaled, sigma, out);
        for g in out.iter_mut() {
            *g = *g * inv;
        }
    }

    fn member(&self, x: &[T]) -> bool {
        self.inner.member(x)
    }

    fn hessian_trace(&self, x: &[T], sigma: T) -> Option<T> {
        let inv = Self::scale(sigma).recip();
        let scaled: Vec<T> = x.iter().map(|&v| v * inv).collect();
        self.inner
            .hessian_trace(&scaled, sigma)
            .map(|h| h * inv * inv)
    }
}

/// The whole space: `l = 0` everywhere. A bridge over it is identically
/// zero, which makes it useful for composition identities and tests.
#[derive(Debug, Clone, Copy)]
pub struct FreeSpace {
    pub dim: usize,
}

impl<T: Real> DistanceField<T> for FreeSpace {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _x: &[T], _sigma: T) -> T {
        T::zero()
    }
    fn grad(&self, _x: &[T], _sigma: T, out: &mut [T]) {
        out.iter_mut().for_each(|g| *g = T::zero());
    }
    fn member(&self, _x: &[T]) -> bool {
        true
    }
    fn hessian_trace(&self, _x: &[T], _sigma: T) -> Option<T> {
        Some(T::zero())
    }
}

/// Worst-case comparison of the analytic gradient against central finite
/// differences of `eval`.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport<T> {
    pub max_err: T,
    pub worst_point: usize,
    pub worst_coord: usize,
}

/// Compare analytic and finite-difference gradients at the given points
/// (callers are responsible for keeping points away from declared
/// non-differentiability margins).
///
/// Per-coordinate error is relative, with an absolute fallback below
/// `1e-6` gradient magnitude.
pub fn fd_grad_check<T: Real>(
    field: &dyn DistanceField<T>,
    points: &[Vec<T>],
    sigma: T,
    h: T,
) -> GradCheckReport<T> {
    let d = field.dim();
    let mut report = GradCheckReport {
        max_err: T::zero(),
        worst_point: 0,
        worst_coord: 0,
    };
    let mut analytic = vec![T::zero(); d];
    for (pi, p) in points.iter().enumerate() {
        field.grad(p, sigma, &mut analytic);
        let mut xp = p.clone();
        for k in 0..d {
            let orig = xp[k];
            xp[k] = orig + h;
            let fp = field.eval(&xp, sigma);
            xp[k] = orig - h;
            let fm = field.eval(&xp, sigma);
            xp[k] = orig;
            let fd = (fp - fm) / (T::of(2.0) * h);
            // The denominator floor absorbs the rounding noise of central
            // differences (about eps * |l| / 2h, i.e. 1e-10 for unit-scale
            // fields at h = 1e-6): below 1e-4 gradient magnitude the
            // comparison is effectively absolute at 1e-9.
            let denom = analytic[k].abs().max(fd.abs()).max(T::of(1e-4));
            let err = (analytic[k] - fd).abs() / denom;
            if err > report.max_err {
                report.max_err = err;
                report.worst_point = pi;
                report.worst_coord = k;
            }
        }
    }
    report
}
