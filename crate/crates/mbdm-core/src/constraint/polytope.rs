//! Orthonormal polytope constraint: `lower_i <= a_i . x <= upper_i` for
//! mutually orthonormal directions `a_i`.
//!
//! Because the directions are orthonormal, clamping each projection
//! independently reconstructs the Euclidean projection onto the set, so
//! both the distance `l = 1/2 ||Proj(x) - x||^2` and its gradient
//! `x - Proj(x)` (projection treated as constant) are closed-form.

use super::DistanceField;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone)]
pub struct OrthonormalPolytope<T> {
    /// `m` rows of length `d`.
    axes: Vec<Vec<T>>,
    lower: Vec<T>,
    upper: Vec<T>,
    dim: usize,
}

const ORTHO_TOL: f64 = 1e-10;

impl<T: Real> OrthonormalPolytope<T> {
    pub fn new(axes: Vec<Vec<T>>, lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        let m = axes.len();
        if m == 0 {
            return Err(Error::config("polytope needs at least one direction"));
        }
        let dim = axes[0].len();
        if lower.len() != m || upper.len() != m {
            return Err(Error::config("bounds count must match direction count"));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l < u) {
                return Err(Error::config(format!("need lower < upper, got {l}, {u}")));
            }
        }
        for i in 0..m {
            if axes[i].len() != dim {
                return Err(Error::config("direction lengths differ"));
            }
            for j in i..m {
                let dot: T = axes[i].iter().zip(&axes[j]).map(|(&a, &b)| a * b).sum();
                let expect = if i == j { T::one() } else { T::zero() };
                if (dot - expect).abs() > T::of(ORTHO_TOL) {
                    return Err(Error::config(format!(
                        "directions {i} and {j} not orthonormal (dot {dot})"
                    )));
                }
            }
        }
        Ok(OrthonormalPolytope {
            axes,
            lower,
            upper,
            dim,
        })
    }

    /// Axis-aligned box `[lo_j, hi_j]` per dimension, as a polytope with
    /// the standard basis directions.
    pub fn axis_box(lo: &[T], hi: &[T]) -> Result<Self> {
        let d = lo.len();
        let axes = (0..d)
            .map(|i| {
                let mut a = vec![T::zero(); d];
                a[i] = T::one();
                a
            })
            .collect();
        Self::new(axes, lo.to_vec(), hi.to_vec())
    }

    pub fn num_constraints(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<T>] {
        &self.axes
    }

    pub fn bounds(&self) -> (&[T], &[T]) {
        (&self.lower, &self.upper)
    }

    /// Per-constraint excess `a_i . x - clamp(a_i . x)`.
    fn excesses(&self, x: &[T]) -> Vec<T> {
        self.axes
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(a, (&lo, &hi))| {
                let s: T = a.iter().zip(x).map(|(&ai, &xi)| ai * xi).sum();
                s - s.min(hi).max(lo)
            })
            .collect()
    }
}

impl<T: Real> DistanceField<T> for OrthonormalPolytope<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[T], _sigma: T) -> T {
        let half = T::of(0.5);
        self.excesses(x).iter().map(|&e| half * e * e).sum()
    }

    fn grad(&self, x: &[T], _sigma: T, out: &mut [T]) {
        out.iter_mut().for_each(|g| *g = T::zero());
        for (a, e) in self.axes.iter().zip(self.excesses(x)) {
            if e != T::zero() {
                for (g, &ai) in out.iter_mut().zip(a) {
                    *g = *g + e * ai;
                }
            }
        }
    }

    fn member(&self, x: &[T]) -> bool {
        self.axes
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(a, (&lo, &hi))| {
                let s: T = a.iter().zip(x).map(|(&ai, &xi)| ai * xi).sum();
                lo <= s && s <= hi
            })
    }

    fn project(&self, x: &[T], out: &mut [T]) -> bool {
        out.copy_from_slice(x);
        for (a, e) in self.axes.iter().zip(self.excesses(x)) {
            if e != T::zero() {
                for (o, &ai) in out.iter_mut().zip(a) {
                    *o = *o - e * ai;
                }
            }
        }
        true
    }

    fn hessian_trace(&self, x: &[T], _sigma: T) -> Option<T> {
        // Each violated constraint contributes a_i a_i^T with unit trace.
        let active = self.excesses(x).iter().filter(|e| **e != T::zero()).count();
        Some(T::of(active as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::fd_grad_check;
    use rand::Rng;

    fn slab2d() -> OrthonormalPolytope<f64> {
        OrthonormalPolytope::new(vec![vec![1.0, 0.0]], vec![-0.9], vec![0.9]).unwrap()
    }

    #[test]
    fn interior_point_has_zero_distance_and_gradient() {
        let p = slab2d();
        let x = [0.3, 5.0];
        assert!(p.member(&x));
        assert_eq!(p.eval(&x, 0.0), 0.0);
        let mut g = [0.0; 2];
        p.grad(&x, 0.0, &mut g);
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn slab_example_values() {
        // x = (1.5, 0): Proj = (0.9, 0), l = 0.18, grad = (0.6, 0).
        let p = slab2d();
        let x = [1.5, 0.0];
        assert!((p.eval(&x, 0.0) - 0.18).abs() < 1e-15);
        let mut g = [0.0; 2];
        p.grad(&x, 0.0, &mut g);
        assert!((g[0] - 0.6).abs() < 1e-15 && g[1] == 0.0);
        let mut proj = [0.0; 2];
        p.project(&x, &mut proj);
        assert!((proj[0] - 0.9).abs() < 1e-15 && proj[1] == 0.0);

        // Cross-check against a dense 1-D search along the constrained axis.
        let mut best = f64::INFINITY;
        for k in 0..=200000 {
            let y0 = -0.9 + 1.8 * k as f64 / 200000.0;
            best = best.min(0.5 * ((y0 - 1.5f64).powi(2)));
        }
        assert!((p.eval(&x, 0.0) - best).abs() < 1e-9);
    }

    #[test]
    fn non_orthonormal_directions_are_rejected() {
        let bad = OrthonormalPolytope::new(
            vec![vec![1.0, 0.0], vec![0.9, 0.1]],
            vec![-1.0, -1.0],
            vec![1.0, 1.0],
        );
        assert!(bad.is_err());
        let not_unit = OrthonormalPolytope::new(vec![vec![2.0, 0.0]], vec![-1.0], vec![1.0]);
        assert!(not_unit.is_err());
    }

    fn random_orthonormal(d: usize, m: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        // Gram-Schmidt with re-orthogonalization.
        let mut axes: Vec<Vec<f64>> = Vec::new();
        while axes.len() < m {
            let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for _ in 0..2 {
                for a in &axes {
                    let dot: f64 = a.iter().zip(&v).map(|(x, y)| x * y).sum();
                    for (vi, ai) in v.iter_mut().zip(a) {
                        *vi -= dot * ai;
                    }
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                v.iter_mut().for_each(|x| *x /= norm);
                axes.push(v);
            }
        }
        axes
    }

    #[test]
    fn distance_matches_rejection_sampling_oracle() {
        // d=4, m=2: l(x) = min over y in Omega of half squared distance.
        // Two-sided check: no sampled member beats l, and members sampled
        // near the claimed projection achieve it to within 1e-3.
        let mut rng = crate::rng::stream_rng(21, 0);
        let axes = random_orthonormal(4, 2, &mut rng);
        let p = OrthonormalPolytope::new(axes, vec![-0.9; 2], vec![0.9; 2]).unwrap();
        for _ in 0..5 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let l = p.eval(&x, 0.0);
            let mut proj = vec![0.0; 4];
            p.project(&x, &mut proj);

            let mut best = f64::INFINITY;
            let mut found = 0u32;
            while found < 500_000 {
                let y: Vec<f64> = if found % 2 == 0 {
                    (0..4).map(|_| rng.gen_range(-6.0..6.0)).collect()
                } else {
                    proj.iter().map(|&c| c + rng.gen_range(-0.05..0.05)).collect()
                };
                if p.member(&y) {
                    found += 1;
                    let d2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
                    best = best.min(0.5 * d2);
                }
            }
            assert!(best >= l - 1e-12, "sampled member beats l: {l} vs {best}");
            assert!(best - l < 1e-3, "{l} vs {best}");
        }
    }

    #[test]
    fn projection_is_no_farther_than_random_members() {
        let mut rng = crate::rng::stream_rng(22, 0);
        let axes = random_orthonormal(3, 2, &mut rng);
        let p = OrthonormalPolytope::new(axes, vec![-0.9; 2], vec![0.9; 2]).unwrap();
        let x: Vec<f64> = vec![2.0, -1.5, 0.7];
        let mut proj = vec![0.0; 3];
        p.project(&x, &mut proj);
        // The projection lands on the boundary up to rounding.
        assert!(p.eval(&proj, 0.0) <= 1e-12);
        let d_proj: f64 = x.iter().zip(&proj).map(|(a, b)| (a - b).powi(2)).sum();
        let mut tried = 0;
        while tried < 10_000 {
            let y: Vec<f64> = (0..3).map(|_| rng.gen_range(-4.0..4.0)).collect();
            if p.member(&y) {
                tried += 1;
                let d: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
                assert!(d_proj <= d + 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = crate::rng::stream_rng(23, 0);
        let axes = random_orthonormal(4, 2, &mut rng);
        let p = OrthonormalPolytope::new(axes, vec![-0.9; 2], vec![0.9; 2]).unwrap();
        let pts: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let rep = fd_grad_check(&p as &dyn DistanceField<f64>, &pts, 0.0, 1e-6);
        assert!(rep.max_err < 1e-6, "{}", rep.max_err);
    }

    #[test]
    fn hessian_trace_counts_active_constraints() {
        let p = slab2d();
        assert_eq!(p.hessian_trace(&[0.0, 0.0], 0.0), Some(0.0));
        assert_eq!(p.hessian_trace(&[2.0, 0.0], 0.0), Some(1.0));
    }
}
