//! Checkerboard constraint: the union of alternating closed unit cells of
//! a bounded board. The distance function is the squared Euclidean
//! distance to the nearest valid cell.

use super::DistanceField;
use crate::real::Real;

/// Alternating unit cells on `[lo, hi]^2`; cell `(i, j)` is valid when
/// `i + j` is even.
#[derive(Debug, Clone)]
pub struct Checkerboard {
    lo: i64,
    hi: i64,
}

impl Checkerboard {
    /// Board over `[lo, hi]^2` in cell units; `hi - lo` cells per axis.
    pub fn new(lo: i64, hi: i64) -> Self {
        assert!(lo < hi, "empty board");
        Checkerboard { lo, hi }
    }

    /// The 4x4 board on `[-2, 2]^2` used by the 2-D experiment.
    pub fn standard() -> Self {
        Checkerboard::new(-2, 2)
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo as f64, self.hi as f64)
    }

    /// Valid cells in the 5x5 cell neighborhood of the board-clamped
    /// position. The clamp makes the candidate set correct for points
    /// arbitrarily far outside the board; the pattern guarantees the true
    /// nearest valid cell is always inside the neighborhood.
    fn candidates<T: Real>(&self, x: &[T]) -> impl Iterator<Item = (i64, i64)> + '_ {
        let clamp_cell = |v: T| -> i64 {
            let f = v.as_f64().floor() as i64;
            f.clamp(self.lo, self.hi - 1)
        };
        let (ci, cj) = (clamp_cell(x[0]), clamp_cell(x[1]));
        let (lo, hi) = (self.lo, self.hi);
        (ci - 2..=ci + 2)
            .flat_map(move |i| (cj - 2..=cj + 2).map(move |j| (i, j)))
            .filter(move |&(i, j)| {
                i >= lo && i < hi && j >= lo && j < hi && (i + j).rem_euclid(2) == 0
            })
    }

    /// Squared distance to cell `(i, j)` and the clamped (projected) point.
    fn cell_sqdist<T: Real>(x: &[T], i: i64, j: i64) -> (T, [T; 2]) {
        let px = x[0].min(T::of((i + 1) as f64)).max(T::of(i as f64));
        let py = x[1].min(T::of((j + 1) as f64)).max(T::of(j as f64));
        let dx = x[0] - px;
        let dy = x[1] - py;
        (dx * dx + dy * dy, [px, py])
    }

    /// Nearest-cell projection; ties broken by the iteration order of
    /// [`Self::candidates`] (lowest cell index first).
    fn nearest<T: Real>(&self, x: &[T]) -> (T, [T; 2]) {
        let mut best: Option<(T, [T; 2])> = None;
        for (i, j) in self.candidates(x) {
            let (d, p) = Self::cell_sqdist(x, i, j);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, p));
            }
        }
        best.expect("board always has at least one valid cell")
    }
}

impl<T: Real> DistanceField<T> for Checkerboard {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &[T], _sigma: T) -> T {
        self.nearest(x).0
    }

    fn grad(&self, x: &[T], _sigma: T, out: &mut [T]) {
        let (_, p) = self.nearest(x);
        out[0] = T::of(2.0) * (x[0] - p[0]);
        out[1] = T::of(2.0) * (x[1] - p[1]);
    }

    fn member(&self, x: &[T]) -> bool {
        self.candidates(x).any(|(i, j)| {
            let (_, p) = Self::cell_sqdist(x, i, j);
            p[0] == x[0] && p[1] == x[1]
        })
    }

    fn project(&self, x: &[T], out: &mut [T]) -> bool {
        let (_, p) = self.nearest(x);
        out.copy_from_slice(&p);
        true
    }
}
