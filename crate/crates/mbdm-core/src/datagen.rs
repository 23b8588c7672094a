//! Synthetic datasets, each guaranteed to satisfy its constraint set by
//! construction.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::constraint::scene::{encode_agent, AGENT_DIMS};
use crate::constraint::{
    Checkerboard, CollisionField, DistanceField, DrivableMap, OffroadField, OrthonormalPolytope,
    SceneSpec,
};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::stream_rng;
use crate::tensor::Tensor;

/// Uniform samples on the lower-left triangles of the valid checkerboard
/// cells: the data occupies half of the constraint set, so the bridge
/// prior and the data distribution stay distinguishable.
pub fn checkerboard_triangles<T: Real>(n: usize, seed: u64) -> Tensor<T> {
    let board = Checkerboard::standard();
    let (lo, hi) = board.bounds();
    let mut cells = Vec::new();
    for i in lo as i64..hi as i64 {
        for j in lo as i64..hi as i64 {
            if (i + j).rem_euclid(2) == 0 {
                cells.push((i, j));
            }
        }
    }
    let mut rng = stream_rng(seed, 0);
    let mut out = Tensor::zeros(&[n, 2]);
    for row in 0..n {
        let (ci, cj) = cells[rng.gen_range(0..cells.len())];
        let mut u: f64 = rng.gen();
        let mut v: f64 = rng.gen();
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        out.row_mut(row)[0] = T::of(ci as f64 + u);
        out.row_mut(row)[1] = T::of(cj as f64 + v);
    }
    out
}

/// Random mutually orthonormal directions via Gram-Schmidt with
/// re-orthogonalization.
fn random_orthonormal<T: Real>(d: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let mut axes: Vec<Vec<T>> = Vec::with_capacity(m);
    while axes.len() < m {
        let mut v: Vec<T> = (0..d).map(|_| T::std_normal(rng)).collect();
        for _ in 0..2 {
            for a in &axes {
                let dot: T = a.iter().zip(&v).map(|(&x, &y)| x * y).sum();
                for (vi, &ai) in v.iter_mut().zip(a) {
                    *vi = *vi - dot * ai;
                }
            }
        }
        let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
        if norm > T::of(1e-8) {
            v.iter_mut().for_each(|x| *x = *x / norm);
            axes.push(v);
        }
    }
    axes
}

/// Standard-normal features shifted per constraint so every point lands
/// inside the polytope: when `a_i . x` falls outside the bounds, the point
/// moves along `a_i` by a uniform draw over the feasible interval, which
/// leaves every other (orthogonal) constraint projection unchanged.
pub fn polytope_dataset<T: Real>(
    n: usize,
    d: usize,
    m: usize,
    seed: u64,
) -> Result<(Tensor<T>, OrthonormalPolytope<T>)> {
    if m > d {
        return Err(Error::config(format!(
            "cannot fit {m} orthonormal constraints in dimension {d}"
        )));
    }
    let (lower, upper) = (T::of(-0.9), T::of(0.9));
    let mut rng = stream_rng(seed, 0);
    let axes = random_orthonormal::<T>(d, m, &mut rng);
    let poly = OrthonormalPolytope::new(axes.clone(), vec![lower; m], vec![upper; m])?;

    let mut out = Tensor::zeros(&[n, d]);
    for row in 0..n {
        let x = out.row_mut(row);
        for v in x.iter_mut() {
            *v = T::std_normal(&mut rng);
        }
        for a in &axes {
            let s: T = a.iter().zip(x.iter()).map(|(&ai, &xi)| ai * xi).sum();
            if s <= lower || s >= upper {
                let delta = lower + (upper - lower) * T::unit_uniform(&mut rng) - s;
                for (xi, &ai) in x.iter_mut().zip(a) {
                    *xi = *xi + delta * ai;
                }
            }
        }
        if !poly.member(x) {
            return Err(Error::numeric(format!(
                "generated point {row} fell outside the polytope"
            )));
        }
    }
    Ok((out, poly))
}

/// A procedurally generated drivable map plus the scenes sampled on it.
pub struct SceneDataset<T> {
    pub scenes: Tensor<T>,
    pub map: DrivableMap<T>,
    pub spec: SceneSpec,
}

const LANE_HALF_LEN: f64 = 4.0;
const LANE_HALF_WID: f64 = 0.55;
const LANE_OFFSET: f64 = 1.1;

/// Drivable map for a dataset seed: two or three parallel rectangular
/// lanes (a carriageway cross-section).
pub fn scene_map<T: Real>(seed: u64) -> DrivableMap<T> {
    let mut rng = stream_rng(seed, 1);
    let lane = |y_off: f64| -> Vec<[T; 2]> {
        vec![
            [T::of(LANE_HALF_LEN), T::of(y_off + LANE_HALF_WID)],
            [T::of(-LANE_HALF_LEN), T::of(y_off + LANE_HALF_WID)],
            [T::of(-LANE_HALF_LEN), T::of(y_off - LANE_HALF_WID)],
            [T::of(LANE_HALF_LEN), T::of(y_off - LANE_HALF_WID)],
        ]
    };
    let mut lanes = vec![lane(-LANE_OFFSET), lane(LANE_OFFSET)];
    if rng.gen_bool(0.5) {
        lanes.push(lane(0.0));
    }
    DrivableMap::new(lanes).expect("lane polygons are valid")
}

/// Centerline offsets of the lanes in [`scene_map`], by construction.
fn lane_offsets(n_lanes: usize) -> Vec<f64> {
    let mut a = vec![-LANE_OFFSET, LANE_OFFSET];
    if n_lanes > 2 {
        a.push(0.0);
    }
    a
}

/// Clearance enforced between vehicles and to the lane edges during
/// rejection, mirroring the spacing real traffic keeps. The data then
/// sits strictly inside the constraint set instead of on its boundary.
const SCENE_MARGIN: f64 = 0.06;

/// Rejection-sample non-colliding, on-road scenes with a fixed agent
/// count. Every emitted scene has zero collision area (with clearance)
/// and all four corners of every vehicle on the drivable region.
pub fn toy_scenes<T: Real>(
    n_scenes: usize,
    n_agents: usize,
    seed: u64,
) -> Result<SceneDataset<T>> {
    if !(1..=8).contains(&n_agents) {
        return Err(Error::config("agent count must be in 1..=8"));
    }
    let spec = SceneSpec::new(n_agents);
    let map = scene_map::<T>(seed);
    let offsets = lane_offsets(map.polygons().len());
    let collision = CollisionField::new(spec);
    let offroad = OffroadField::new(spec, map.clone());

    let mut out = Tensor::zeros(&[n_scenes, spec.dim()]);
    for scene_idx in 0..n_scenes {
        let mut rng = stream_rng(seed, 2 + scene_idx as u64);
        let row = out.row_mut(scene_idx);
        let mut placed = 0usize;
        let mut attempts = 0usize;
        while placed < n_agents {
            attempts += 1;
            if attempts > 2000 * n_agents {
                return Err(Error::data(format!(
                    "scene {scene_idx}: rejection budget exhausted placing agent {placed}; try fewer agents"
                )));
            }
            let lane_idx = rng.gen_range(0..offsets.len());
            let cx: f64 = rng.gen_range(-2.5..2.5);
            let cy: f64 = offsets[lane_idx] + rng.gen_range(-0.3..0.3);
            let heading = rng.gen_range(-0.15..0.15)
                + if rng.gen_bool(0.5) { std::f64::consts::PI } else { 0.0 };
            let length = (0.45f64.ln() + 0.10 * f64::std_normal(&mut rng)).exp();
            let width = (0.22f64.ln() + 0.08 * f64::std_normal(&mut rng)).exp();
            let velocity: f64 = rng.gen_range(0.0..1.0);

            let agent = encode_agent(
                T::of(cx),
                T::of(cy),
                T::of(length),
                T::of(width),
                T::of(heading),
                T::of(velocity),
            );
            let base = placed * AGENT_DIMS;
            row[base..base + AGENT_DIMS].copy_from_slice(&agent);

            // Validate the partial scene with every extent inflated by
            // the clearance margin: accepted agents keep their distance
            // from both the lane edges and each other.
            let partial_spec = SceneSpec::new(placed + 1);
            let mut inflated: Vec<T> = row[..(placed + 1) * AGENT_DIMS].to_vec();
            for a in 0..=placed {
                let sl = &mut inflated[a * AGENT_DIMS..];
                let l = sl[2].as_f64().exp() + 2.0 * SCENE_MARGIN;
                let w = sl[3].as_f64().exp() + 2.0 * SCENE_MARGIN;
                sl[2] = T::of(l.ln());
                sl[3] = T::of(w.ln());
            }
            let on_road = {
                let corners = crate::constraint::scene::decode_scene(partial_spec, &inflated);
                corners[placed].iter().all(|&p| map.contains(p))
            };
            let no_overlap = CollisionField::new(partial_spec).member(&inflated);
            if on_road && no_overlap {
                placed += 1;
            }
        }
        debug_assert!(collision.member(row));
        debug_assert!(offroad.member(row));
    }
    Ok(SceneDataset {
        scenes: out,
        map,
        spec,
    })
}
