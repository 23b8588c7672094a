//! 2-D geometry kernels: convex polygon clipping, areas, point/segment
//! distances.
//!
//! Everything is generic over [`GeomScalar`] so the same code runs on plain
//! scalars (values, membership predicates) and on [`Dual`] numbers (exact
//! forward-mode derivatives through the clipping, used for the analytic
//! scene gradients). Branch decisions always compare real parts, so the
//! dual path differentiates the same arithmetic the value path executes.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::real::Real;

/// Scalar-like type usable inside the geometry kernels.
pub trait GeomScalar<T: Real>:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Real part, used for branching.
    fn re(self) -> T;
    fn from_re(v: T) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
}

impl<T: Real> GeomScalar<T> for T {
    #[inline]
    fn re(self) -> T {
        self
    }
    #[inline]
    fn from_re(v: T) -> Self {
        v
    }
    #[inline]
    fn exp(self) -> Self {
        num_traits::Float::exp(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        num_traits::Float::sqrt(self)
    }
}

/// Forward-mode dual number carrying `N` partial derivatives.
#[derive(Debug, Clone, Copy)]
pub struct Dual<T, const N: usize> {
    pub v: T,
    pub d: [T; N],
}

impl<T: Real, const N: usize> Dual<T, N> {
    pub fn constant(v: T) -> Self {
        Dual {
            v,
            d: [T::zero(); N],
        }
    }

    /// Seed variable `i`.
    pub fn var(v: T, i: usize) -> Self {
        let mut d = [T::zero(); N];
        d[i] = T::one();
        Dual { v, d }
    }
}

impl<T: Real, const N: usize> Add for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(rhs.d) {
            *a = *a + b;
        }
        Dual { v: self.v + rhs.v, d }
    }
}

impl<T: Real, const N: usize> Sub for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(rhs.d) {
            *a = *a - b;
        }
        Dual { v: self.v - rhs.v, d }
    }
}

impl<T: Real, const N: usize> Mul for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut d = [T::zero(); N];
        for i in 0..N {
            d[i] = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        Dual { v: self.v * rhs.v, d }
    }
}

impl<T: Real, const N: usize> Div for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = rhs.v.recip();
        let q = self.v * inv;
        let mut d = [T::zero(); N];
        for i in 0..N {
            d[i] = (self.d[i] - q * rhs.d[i]) * inv;
        }
        Dual { v: q, d }
    }
}

impl<T: Real, const N: usize> Neg for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut d = self.d;
        for a in d.iter_mut() {
            *a = -*a;
        }
        Dual { v: -self.v, d }
    }
}

impl<T: Real, const N: usize> GeomScalar<T> for Dual<T, N> {
    #[inline]
    fn re(self) -> T {
        self.v
    }
    #[inline]
    fn from_re(v: T) -> Self {
        Dual::constant(v)
    }
    #[inline]
    fn exp(self) -> Self {
        let e = num_traits::Float::exp(self.v);
        let mut d = self.d;
        for a in d.iter_mut() {
            *a = *a * e;
        }
        Dual { v: e, d }
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = num_traits::Float::sqrt(self.v);
        let half_inv = (T::of(2.0) * s).recip();
        let mut d = self.d;
        for a in d.iter_mut() {
            *a = *a * half_inv;
        }
        Dual { v: s, d }
    }
}

/// Lower bound that forwards the derivative only on the unclamped branch.
#[inline]
pub fn clamp_min<T: Real, S: GeomScalar<T>>(s: S, min: T) -> (S, bool) {
    if s.re() >= min {
        (s, false)
    } else {
        (S::from_re(min), true)
    }
}

pub type Pt<S> = [S; 2];

#[inline]
fn cross<T: Real, S: GeomScalar<T>>(o: Pt<S>, a: Pt<S>, b: Pt<S>) -> S {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Signed area of a polygon (positive when counterclockwise).
pub fn polygon_area<T: Real, S: GeomScalar<T>>(poly: &[Pt<S>]) -> S {
    if poly.len() < 3 {
        return S::from_re(T::zero());
    }
    let mut acc = S::from_re(T::zero());
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        acc = acc + (p[0] * q[1] - q[0] * p[1]);
    }
    acc * S::from_re(T::of(0.5))
}

/// Sutherland-Hodgman clip of a convex CCW subject against a convex CCW
/// clip polygon. Returns the intersection polygon (possibly empty).
pub fn clip_convex<T: Real, S: GeomScalar<T>>(subject: &[Pt<S>], clip: &[Pt<S>]) -> Vec<Pt<S>> {
    let mut out: Vec<Pt<S>> = subject.to_vec();
    let mut work: Vec<Pt<S>> = Vec::with_capacity(subject.len() + 4);
    for i in 0..clip.len() {
        if out.len() < 3 {
            return Vec::new();
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        work.clear();
        for j in 0..out.len() {
            let s = out[j];
            let e = out[(j + 1) % out.len()];
            let sc = cross(a, b, s);
            let ec = cross(a, b, e);
            let s_in = sc.re() >= T::zero();
            let e_in = ec.re() >= T::zero();
            match (s_in, e_in) {
                (true, true) => work.push(e),
                (true, false) => {
                    if let Some(p) = intersect(s, e, sc, ec) {
                        work.push(p);
                    }
                }
                (false, true) => {
                    if let Some(p) = intersect(s, e, sc, ec) {
                        work.push(p);
                    }
                    work.push(e);
                }
                (false, false) => {}
            }
        }
        std::mem::swap(&mut out, &mut work);
    }
    if out.len() < 3 {
        Vec::new()
    } else {
        out
    }
}

#[inline]
fn intersect<T: Real, S: GeomScalar<T>>(s: Pt<S>, e: Pt<S>, sc: S, ec: S) -> Option<Pt<S>> {
    let denom = sc - ec;
    if denom.re().abs() <= T::of(1e-300) {
        return None;
    }
    let t = sc / denom;
    Some([s[0] + (e[0] - s[0]) * t, s[1] + (e[1] - s[1]) * t])
}

/// Intersection area of two convex CCW polygons.
pub fn intersection_area<T: Real, S: GeomScalar<T>>(p: &[Pt<S>], q: &[Pt<S>]) -> S {
    let r = clip_convex(p, q);
    let a = polygon_area::<T, S>(&r);
    // Rounding can leave a sliver with a tiny negative signed area.
    if a.re() > T::zero() {
        a
    } else {
        S::from_re(T::zero())
    }
}

/// Exact point-in-convex-polygon predicate (closed polygon, CCW).
pub fn point_in_convex<T: Real>(p: Pt<T>, poly: &[Pt<T>]) -> bool {
    poly.len() >= 3
        && (0..poly.len()).all(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            cross(a, b, p) >= T::zero()
        })
}

/// Squared distance from a point to a segment.
pub fn point_segment_sqdist<T: Real, S: GeomScalar<T>>(p: Pt<S>, a: Pt<S>, b: Pt<S>) -> S {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let denom = ab[0] * ab[0] + ab[1] * ab[1];
    let t_raw = (ap[0] * ab[0] + ap[1] * ab[1]) / denom;
    let t = if t_raw.re() <= T::zero() {
        S::from_re(T::zero())
    } else if t_raw.re() >= T::one() {
        S::from_re(T::one())
    } else {
        t_raw
    };
    let dx = ap[0] - ab[0] * t;
    let dy = ap[1] - ab[1] * t;
    dx * dx + dy * dy
}

/// Squared distance from a point to a convex CCW polygon (zero inside).
pub fn point_polygon_sqdist<T: Real, S: GeomScalar<T>>(p: Pt<S>, poly: &[Pt<S>]) -> S {
    let pv = [p[0].re(), p[1].re()];
    let plain: Vec<Pt<T>> = poly.iter().map(|v| [v[0].re(), v[1].re()]).collect();
    if point_in_convex(pv, &plain) {
        return S::from_re(T::zero());
    }
    let mut best: Option<S> = None;
    for i in 0..poly.len() {
        let d = point_segment_sqdist(p, poly[i], poly[(i + 1) % poly.len()]);
        best = match best {
            Some(b) if b.re() <= d.re() => Some(b),
            _ => Some(d),
        };
    }
    best.unwrap_or_else(|| S::from_re(T::zero()))
}
