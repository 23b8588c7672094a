//! Scalar abstraction for the numeric core.
//!
//! Everything downstream is generic over [`Real`] so the same kernels run in
//! `f32` or `f64`; the artifact itself pins `f64` (see [`crate::Scalar`]).

use rand::Rng;

/// Floating-point scalar with the special functions the diffusion and
/// bridge math needs.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssign
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    /// Lift an `f64` constant into `Self`.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable")
    }

    /// Round-trip to `f64` (used by file formats and reports).
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("value not representable as f64")
    }

    fn erf(self) -> Self;
    fn erfc(self) -> Self;

    /// Draw from the standard normal distribution.
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draw uniformly from `[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Real for f64 {
    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
    #[inline]
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(rand_distr::StandardNormal)
    }
    #[inline]
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen::<f64>()
    }
}

impl Real for f32 {
    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
    #[inline]
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(rand_distr::StandardNormal)
    }
    #[inline]
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen::<f32>()
    }
}

/// Scaled complementary error function `erfcx(x) = exp(x^2) * erfc(x)`.
///
/// Direct evaluation overflows once `exp(x^2)` does, long before `erfc`
/// loses meaning, so large arguments switch to the asymptotic expansion
/// `erfcx(x) ~ 1/(x sqrt(pi)) * (1 - 1/(2x^2) + 3/(4x^4) - ...)`.
pub fn erfcx<T: Real>(x: T) -> T {
    let switch = T::of(12.0);
    if x < switch {
        (x * x).exp() * x.erfc()
    } else {
        // At x >= 12 successive terms shrink by < 1/288; six terms reach
        // full f64 precision.
        let inv2 = (x * x).recip();
        let mut term = T::one();
        let mut sum = T::one();
        let mut k = 0.0;
        for _ in 0..6 {
            term = term * -T::of(k + 0.5) * inv2;
            sum = sum + term;
            k += 1.0;
        }
        sum / (x * T::of(std::f64::consts::PI).sqrt())
    }
}
