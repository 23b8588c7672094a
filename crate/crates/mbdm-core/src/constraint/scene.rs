//! Traffic-scene constraints: pairwise vehicle collision area and offroad
//! distance, over a flat per-agent encoding.
//!
//! Encoding per agent (7 values): `[cx, cy, log_length, log_width, cos_h,
//! sin_h, v]`. Log-sizes keep decoded extents positive under diffusion
//! noise; the heading pair is renormalized at decode time.

use std::sync::atomic::{AtomicU64, Ordering};

use super::geom::{
    clamp_min, intersection_area, point_in_convex, point_polygon_sqdist, Dual, GeomScalar, Pt,
};
use super::DistanceField;
use crate::error::{Error, Result};
use crate::real::Real;

pub const AGENT_DIMS: usize = 7;

/// Fixed agent count and the derived vector layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SceneSpec {
    pub n_agents: usize,
}

impl SceneSpec {
    pub fn new(n_agents: usize) -> Self {
        SceneSpec { n_agents }
    }

    pub fn dim(&self) -> usize {
        self.n_agents * AGENT_DIMS
    }

    pub fn agent_slice<'a, T>(&self, x: &'a [T], agent: usize) -> &'a [T] {
        &x[agent * AGENT_DIMS..(agent + 1) * AGENT_DIMS]
    }
}

const MIN_EXTENT: f64 = 1e-6;

/// Decode one agent into its rectangle corners (CCW). Returns whether any
/// degeneracy clamp fired.
fn decode_corners<T: Real, S: GeomScalar<T>>(p: &[S]) -> ([Pt<S>; 4], bool) {
    let (cx, cy) = (p[0], p[1]);
    let (len, c1) = clamp_min(p[2].exp(), T::of(MIN_EXTENT));
    let (wid, c2) = clamp_min(p[3].exp(), T::of(MIN_EXTENT));
    let (ch, sh) = (p[4], p[5]);
    let (r, c3) = clamp_min((ch * ch + sh * sh).sqrt(), T::of(MIN_EXTENT));
    let ux = ch / r;
    let uy = sh / r;
    let half = S::from_re(T::of(0.5));
    let (hl, hw) = (len * half, wid * half);
    let (ax, ay) = (ux * hl, uy * hl);
    let (bx, by) = (-uy * hw, ux * hw);
    let corners = [
        [cx + ax + bx, cy + ay + by],
        [cx - ax + bx, cy - ay + by],
        [cx - ax - bx, cy - ay - by],
        [cx + ax - bx, cy + ay - by],
    ];
    (corners, c1 || c2 || c3)
}

/// Decode the whole scene on plain scalars.
pub fn decode_scene<T: Real>(spec: SceneSpec, x: &[T]) -> Vec<[Pt<T>; 4]> {
    (0..spec.n_agents)
        .map(|a| decode_corners::<T, T>(spec.agent_slice(x, a)).0)
        .collect()
}

/// Sum over unordered agent pairs of the intersection area of their
/// oriented rectangles.
pub struct CollisionField {
    spec: SceneSpec,
    degenerate: AtomicU64,
}

impl CollisionField {
    pub fn new(spec: SceneSpec) -> Self {
        CollisionField {
            spec,
            degenerate: AtomicU64::new(0),
        }
    }

    /// Clipping is not argument-symmetric at the bit level, so pairs are
    /// ordered by their parameter values before clipping; this makes the
    /// field exactly invariant under agent permutation.
    fn canonical_first<T: Real>(pi: &[T], pj: &[T]) -> bool {
        for (a, b) in pi.iter().zip(pj) {
            if a < b {
                return true;
            }
            if a > b {
                return false;
            }
        }
        true
    }

    /// Number of evaluations that hit the degenerate-extent clamp.
    pub fn degenerate_count(&self) -> u64 {
        self.degenerate.load(Ordering::Relaxed)
    }

    fn note_degenerate(&self, hit: bool) {
        if hit {
            self.degenerate.fetch_add(1, Ordering::Relaxed);
        }
    }
}

impl<T: Real> DistanceField<T> for CollisionField {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn eval(&self, x: &[T], _sigma: T) -> T {
        let mut total = T::zero();
        for i in 0..self.spec.n_agents {
            for j in i + 1..self.spec.n_agents {
                let pi = self.spec.agent_slice(x, i);
                let pj = self.spec.agent_slice(x, j);
                let (pa, pb) = if Self::canonical_first(pi, pj) {
                    (pi, pj)
                } else {
                    (pj, pi)
                };
                let (ca, d1) = decode_corners::<T, T>(pa);
                let (cb, d2) = decode_corners::<T, T>(pb);
                self.note_degenerate(d1 || d2);
                total = total + intersection_area::<T, T>(&ca, &cb);
            }
        }
        total
    }

    fn grad(&self, x: &[T], _sigma: T, out: &mut [T]) {
        out.iter_mut().for_each(|g| *g = T::zero());
        // Each pair is differentiated jointly with 14 dual slots: 7 for
        // each agent's parameters.
        for i in 0..self.spec.n_agents {
            for j in i + 1..self.spec.n_agents {
                let pi = self.spec.agent_slice(x, i);
                let pj = self.spec.agent_slice(x, j);
                let (pa, pb, ia, ib) = if Self::canonical_first(pi, pj) {
                    (pi, pj, i, j)
                } else {
                    (pj, pi, j, i)
                };
                let seeded_a: Vec<Dual<T, 14>> = pa
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| Dual::var(v, k))
                    .collect();
                let seeded_b: Vec<Dual<T, 14>> = pb
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| Dual::var(v, 7 + k))
                    .collect();
                let (ca, d1) = decode_corners::<T, Dual<T, 14>>(&seeded_a);
                let (cb, d2) = decode_corners::<T, Dual<T, 14>>(&seeded_b);
                self.note_degenerate(d1 || d2);
                let area = intersection_area::<T, Dual<T, 14>>(&ca, &cb);
                for k in 0..AGENT_DIMS {
                    out[ia * AGENT_DIMS + k] = out[ia * AGENT_DIMS + k] + area.d[k];
                    out[ib * AGENT_DIMS + k] = out[ib * AGENT_DIMS + k] + area.d[7 + k];
                }
            }
        }
    }

    fn member(&self, x: &[T]) -> bool {
        for i in 0..self.spec.n_agents {
            for j in i + 1..self.spec.n_agents {
                let pi = self.spec.agent_slice(x, i);
                let pj = self.spec.agent_slice(x, j);
                let (pa, pb) = if Self::canonical_first(pi, pj) {
                    (pi, pj)
                } else {
                    (pj, pi)
                };
                let (ca, _) = decode_corners::<T, T>(pa);
                let (cb, _) = decode_corners::<T, T>(pb);
                if intersection_area::<T, T>(&ca, &cb) > T::zero() {
                    return false;
                }
            }
        }
        true
    }
}

/// Drivable area as a union of convex polygons.
#[derive(Debug, Clone)]
pub struct DrivableMap<T> {
    polygons: Vec<Vec<Pt<T>>>,
}

impl<T: Real> DrivableMap<T> {
    pub fn new(polygons: Vec<Vec<Pt<T>>>) -> Result<Self> {
        if polygons.is_empty() {
            return Err(Error::config("drivable region must not be empty"));
        }
        for p in &polygons {
            if p.len() < 3 {
                return Err(Error::config("drivable polygon needs >= 3 vertices"));
            }
            let area = super::geom::polygon_area::<T, T>(p);
            if !(area > T::zero()) {
                return Err(Error::config(
                    "drivable polygons must be counterclockwise with positive area",
                ));
            }
        }
        Ok(DrivableMap { polygons })
    }

    pub fn polygons(&self) -> &[Vec<Pt<T>>] {
        &self.polygons
    }

    pub fn contains(&self, p: Pt<T>) -> bool {
        self.polygons.iter().any(|poly| point_in_convex(p, poly))
    }

    /// Squared distance from a point to the union (zero inside), with ties
    /// between components broken by component order.
    fn sqdist<S: GeomScalar<T>>(&self, p: Pt<S>) -> S {
        let mut best: Option<S> = None;
        for poly in &self.polygons {
            let dual_poly: Vec<Pt<S>> = poly
                .iter()
                .map(|v| [S::from_re(v[0]), S::from_re(v[1])])
                .collect();
            let d = point_polygon_sqdist(p, &dual_poly);
            best = match best {
                Some(b) if b.re() <= d.re() => Some(b),
                _ => Some(d),
            };
            if let Some(b) = best {
                if b.re() == T::zero() {
                    return b;
                }
            }
        }
        best.expect("non-empty by construction")
    }
}

/// Per agent, the minimum over its four corners of the squared distance to
/// the drivable union; a vehicle counts as on-road while any corner
/// remains on the drivable area.
pub struct OffroadField<T> {
    spec: SceneSpec,
    map: DrivableMap<T>,
}

impl<T: Real> OffroadField<T> {
    pub fn new(spec: SceneSpec, map: DrivableMap<T>) -> Self {
        OffroadField { spec, map }
    }

    pub fn map(&self) -> &DrivableMap<T> {
        &self.map
    }

    fn agent_min_corner<S: GeomScalar<T>>(&self, corners: &[Pt<S>; 4]) -> S {
        let mut best: Option<S> = None;
        for c in corners {
            let d = self.map.sqdist(*c);
            best = match best {
                Some(b) if b.re() <= d.re() => Some(b),
                _ => Some(d),
            };
        }
        best.expect("four corners")
    }
}

impl<T: Real> DistanceField<T> for OffroadField<T> {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn eval(&self, x: &[T], _sigma: T) -> T {
        (0..self.spec.n_agents)
            .map(|a| {
                let (c, _) = decode_corners::<T, T>(self.spec.agent_slice(x, a));
                self.agent_min_corner(&c)
            })
            .sum()
    }

    fn grad(&self, x: &[T], _sigma: T, out: &mut [T]) {
        out.iter_mut().for_each(|g| *g = T::zero());
        for a in 0..self.spec.n_agents {
            let params = self.spec.agent_slice(x, a);
            let seeded: Vec<Dual<T, 7>> = params
                .iter()
                .enumerate()
                .map(|(k, &v)| Dual::var(v, k))
                .collect();
            let (corners, _) = decode_corners::<T, Dual<T, 7>>(&seeded);
            let d = self.agent_min_corner(&corners);
            for k in 0..AGENT_DIMS {
                out[a * AGENT_DIMS + k] = d.d[k];
            }
        }
    }

    fn member(&self, x: &[T]) -> bool {
        (0..self.spec.n_agents).all(|a| {
            let (c, _) = decode_corners::<T, T>(self.spec.agent_slice(x, a));
            c.iter().any(|&p| self.map.contains(p))
        })
    }
}

/// Encode one agent into the flat layout.
pub fn encode_agent<T: Real>(
    cx: T,
    cy: T,
    length: T,
    width: T,
    heading: T,
    velocity: T,
) -> [T; AGENT_DIMS] {
    [
        cx,
        cy,
        length.ln(),
        width.ln(),
        heading.cos(),
        heading.sin(),
        velocity,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::fd_grad_check;
    use rand::Rng;

    fn axis_square(cx: f64, cy: f64, side: f64) -> [f64; AGENT_DIMS] {
        encode_agent(cx, cy, side, side, 0.0, 0.0)
    }

    #[test]
    fn disjoint_squares_do_not_collide() {
        let f = CollisionField::new(SceneSpec::new(2));
        let mut x = Vec::new();
        x.extend(axis_square(0.0, 0.0, 1.0));
        x.extend(axis_square(5.0, 0.0, 1.0));
        assert_eq!(f.eval(&x, 0.0), 0.0);
        let mut g = vec![0.0; 14];
        f.grad(&x, 0.0, &mut g);
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(f.member(&x));
    }

    #[test]
    fn coincident_unit_squares_have_unit_overlap() {
        let f = CollisionField::new(SceneSpec::new(2));
        let mut x = Vec::new();
        x.extend(axis_square(0.0, 0.0, 1.0));
        x.extend(axis_square(0.0, 0.0, 1.0));
        assert!((f.eval(&x, 0.0) - 1.0).abs() < 1e-12);
        assert!(!f.member(&x));
    }

    #[test]
    fn offset_unit_squares_overlap_half() {
        let f = CollisionField::new(SceneSpec::new(2));
        let mut x = Vec::new();
        x.extend(axis_square(0.0, 0.0, 1.0));
        x.extend(axis_square(0.5, 0.0, 1.0));
        let l = f.eval(&x, 0.0);
        assert!((l - 0.5).abs() < 1e-12, "{l}");
    }

    #[test]
    fn overlap_matches_monte_carlo_point_in_both() {
        let f = CollisionField::new(SceneSpec::new(2));
        let mut x = Vec::new();
        x.extend(encode_agent(0.0, 0.0, 1.2, 0.8, 0.4, 0.0));
        x.extend(encode_agent(0.3, 0.1, 1.0, 0.6, -0.9, 0.0));
        let l = f.eval(&x, 0.0);
        let corners = decode_scene(SceneSpec::new(2), &x);
        let mut rng = crate::rng::stream_rng(31, 0);
        let mut hits = 0u64;
        let n = 10_000_000u64;
        // Sample over a box covering both rectangles.
        let (lo, hi) = (-1.2, 1.2);
        for _ in 0..n {
            let p = [rng.gen_range(lo..hi), rng.gen_range(lo..hi)];
            if point_in_convex(p, &corners[0]) && point_in_convex(p, &corners[1]) {
                hits += 1;
            }
        }
        let area = (hi - lo) * (hi - lo) * hits as f64 / n as f64;
        assert!((l - area).abs() < 1e-3, "{l} vs {area}");
    }

    #[test]
    fn collision_gradient_matches_finite_differences() {
        let f = CollisionField::new(SceneSpec::new(3));
        let mut x = Vec::new();
        x.extend(encode_agent(0.0, 0.0, 1.2, 0.8, 0.4, 1.0));
        x.extend(encode_agent(0.4, 0.2, 1.0, 0.6, -0.7, 0.5));
        x.extend(encode_agent(-0.5, 0.3, 0.9, 0.7, 1.9, 0.2));
        let pts = vec![x];
        let rep = fd_grad_check(&f as &dyn DistanceField<f64>, &pts, 0.0, 1e-6);
        assert!(rep.max_err < 1e-5, "{}", rep.max_err);
    }

    #[test]
    fn collision_is_permutation_invariant() {
        let f = CollisionField::new(SceneSpec::new(2));
        let a = encode_agent(0.0, 0.0, 1.2, 0.8, 0.4, 1.0);
        let b = encode_agent(0.4, 0.2, 1.0, 0.6, -0.7, 0.5);
        let x1: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
        let x2: Vec<f64> = b.iter().chain(a.iter()).copied().collect();
        assert_eq!(f.eval(&x1, 0.0), f.eval(&x2, 0.0));
        let mut g1 = vec![0.0; 14];
        let mut g2 = vec![0.0; 14];
        f.grad(&x1, 0.0, &mut g1);
        f.grad(&x2, 0.0, &mut g2);
        assert_eq!(&g1[..7], &g2[7..]);
        assert_eq!(&g1[7..], &g2[..7]);
    }

    fn unit_map() -> DrivableMap<f64> {
        DrivableMap::new(vec![vec![[1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]]]).unwrap()
    }

    #[test]
    fn empty_drivable_region_is_rejected() {
        assert!(DrivableMap::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn agent_with_a_corner_on_road_contributes_zero() {
        let f = OffroadField::new(SceneSpec::new(1), unit_map());
        // Center outside, but one corner reaches into the unit square.
        let x = axis_square(1.2, 0.5, 1.0);
        assert_eq!(f.eval(&x, 0.0), 0.0);
        assert!(f.member(&x));
    }

    #[test]
    fn fully_offroad_agent_contribution() {
        // Unit square drivable, square agent centered at (2.5, 0.5):
        // nearest corner at (2, 0.5), squared distance 1.
        let f = OffroadField::new(SceneSpec::new(1), unit_map());
        let x = axis_square(2.5, 0.5, 1.0);
        let l = f.eval(&x, 0.0);
        assert!((l - 1.0).abs() < 1e-12, "{l}");
        assert!(!f.member(&x));

        // Brute force against densely sampled boundary points.
        let corners = decode_scene(SceneSpec::new(1), &x);
        let mut best = f64::INFINITY;
        for k in 0..40000 {
            let t = k as f64 / 40000.0;
            let perimeter = [
                [t, 0.0],
                [1.0, t],
                [1.0 - t, 1.0],
                [0.0, 1.0 - t],
            ];
            for b in perimeter {
                for c in &corners[0] {
                    let d = (c[0] - b[0]).powi(2) + (c[1] - b[1]).powi(2);
                    best = best.min(d);
                }
            }
        }
        assert!((l - best).abs() < 1e-6, "{l} vs {best}");
    }

    #[test]
    fn offroad_gradient_matches_finite_differences() {
        let f = OffroadField::new(SceneSpec::new(2), unit_map());
        let mut x = Vec::new();
        x.extend(encode_agent(2.3, 0.7, 0.8, 0.5, 0.3, 1.0));
        x.extend(encode_agent(-1.1, -0.4, 0.6, 0.4, 1.2, 0.0));
        let rep = fd_grad_check(&f as &dyn DistanceField<f64>, &[x], 0.0, 1e-6);
        assert!(rep.max_err < 1e-5, "{}", rep.max_err);
    }

    #[test]
    fn degenerate_extents_are_clamped_and_counted() {
        let f = CollisionField::new(SceneSpec::new(2));
        let mut x = Vec::new();
        x.extend(axis_square(0.0, 0.0, 1.0));
        x.extend(axis_square(0.1, 0.0, 1.0));
        // Destroy the second agent's heading encoding.
        x[11] = 0.0;
        x[12] = 0.0;
        let l = f.eval(&x, 0.0);
        assert!(l.is_finite());
        assert!(f.degenerate_count() > 0);
    }
}
