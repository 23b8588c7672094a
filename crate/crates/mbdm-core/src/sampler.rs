//! Reverse-SDE integration: Euler-Maruyama in `sigma^2`-time and the
//! second-order Heun solver with churn, both over a log-linear noise grid.
//!
//! Chains are independent, each with its own RNG stream derived from
//! `(seed, chain index)`, so batches are reproducible regardless of how
//! the work is batched internally. The grid runs from `sigma_max` down to
//! `sigma_min`; a final deterministic Euler step takes `sigma_min -> 0`
//! without ever evaluating anything at exactly zero noise.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::stream_rng;
use crate::score::ScoreSource;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    EulerMaruyama,
    Heun,
}

impl Solver {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "em" | "euler-maruyama" => Solver::EulerMaruyama,
            "heun" => Solver::Heun,
            other => {
                return Err(Error::config(format!(
                    "unknown solver '{other}' (expected em|heun)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SamplerConfig<T> {
    pub steps: usize,
    pub solver: Solver,
    pub s_churn: T,
    pub sigma_min: T,
    pub sigma_max: T,
    pub seed: u64,
}

impl<T: Real> SamplerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("sampler needs at least one step"));
        }
        if !(T::zero() < self.sigma_min && self.sigma_min < self.sigma_max) {
            return Err(Error::config("need 0 < sigma_min < sigma_max"));
        }
        if self.s_churn < T::zero() {
            return Err(Error::config("churn must be nonnegative"));
        }
        Ok(())
    }
}

/// `steps + 1` log-uniform levels from `sigma_max` down to `sigma_min`.
pub fn sigma_grid<T: Real>(cfg: &SamplerConfig<T>) -> Vec<T> {
    let n = cfg.steps;
    (0..=n)
        .map(|i| {
            let u = T::of(1.0 - i as f64 / n as f64);
            cfg.sigma_min * (cfg.sigma_max / cfg.sigma_min).powf(u)
        })
        .collect()
}

/// One Euler-Maruyama update in `sigma^2`-time for a single chain:
/// `x' = x + (s_cur^2 - s_next^2) score + sqrt(s_cur^2 - s_next^2) z`.
/// The noise is omitted on the final (denoising) step where `s_next = 0`.
pub fn em_step<T: Real>(
    x: &mut [T],
    sigma_cur: T,
    sigma_next: T,
    score: &[T],
    rng: Option<&mut ChaCha8Rng>,
) {
    let dvar = sigma_cur * sigma_cur - sigma_next * sigma_next;
    let noise_scale = dvar.sqrt();
    match rng {
        Some(rng) if sigma_next > T::zero() => {
            for (xi, &s) in x.iter_mut().zip(score) {
                *xi = *xi + dvar * s + noise_scale * T::std_normal(rng);
            }
        }
        _ => {
            for (xi, &s) in x.iter_mut().zip(score) {
                *xi = *xi + dvar * s;
            }
        }
    }
}

/// Churned noise level multiplier for the Heun solver.
pub fn churn_gamma<T: Real>(s_churn: T, steps: usize) -> T {
    let cap = T::of(std::f64::consts::SQRT_2 - 1.0);
    (s_churn / T::of(steps as f64)).min(cap)
}

/// Result of a batched sampling run.
pub struct SampleBatch<T> {
    /// `[n, d]` terminal points; rows of failed chains hold NaN.
    pub points: Tensor<T>,
    pub failed: Vec<bool>,
    pub n_failed: usize,
}

impl<T: Real> SampleBatch<T> {
    /// Rows of chains that finished.
    pub fn valid_rows(&self) -> Vec<&[T]> {
        (0..self.points.rows())
            .filter(|&i| !self.failed[i])
            .map(|i| self.points.row(i))
            .collect()
    }
}

/// Integrate `n` reverse chains under the given score source.
///
/// Failed chains (non-finite state) are frozen and reported; the rest of
/// the batch continues.
pub fn sample<T: Real>(
    cfg: &SamplerConfig<T>,
    score: &dyn ScoreSource<T>,
    n: usize,
) -> Result<SampleBatch<T>> {
    cfg.validate()?;
    let d = score.dim();
    let grid = sigma_grid(cfg);
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| stream_rng(cfg.seed, i as u64)).collect();

    // Prior draw at sigma_max.
    let mut x = Tensor::zeros(&[n, d]);
    for (i, rng) in rngs.iter_mut().enumerate() {
        for v in x.row_mut(i) {
            *v = cfg.sigma_max * T::std_normal(rng);
        }
    }
    let mut failed = vec![false; n];

    match cfg.solver {
        Solver::EulerMaruyama => {
            for w in grid.windows(2) {
                let (s_cur, s_next) = (w[0], w[1]);
                let scores = score.score_batch(&x, s_cur)?;
                for i in 0..n {
                    if failed[i] {
                        continue;
                    }
                    em_step(
                        x.row_mut(i),
                        s_cur,
                        s_next,
                        scores.row(i),
                        Some(&mut rngs[i]),
                    );
                }
                mark_failures(&mut x, &mut failed);
            }
        }
        Solver::Heun => {
            let gamma = churn_gamma(cfg.s_churn, cfg.steps);
            for w in grid.windows(2) {
                let (s_cur, s_next) = (w[0], w[1]);
                // Churn: raise the noise level and add matching noise.
                let s_hat = s_cur * (T::one() + gamma);
                if gamma > T::zero() {
                    let add = (s_hat * s_hat - s_cur * s_cur).sqrt();
                    for i in 0..n {
                        if failed[i] {
                            continue;
                        }
                        for v in x.row_mut(i) {
                            *v = *v + add * T::std_normal(&mut rngs[i]);
                        }
                    }
                }
                // Probability-flow Heun step from s_hat to s_next:
                // dx/dsigma = -sigma * score.
                let d1 = score.score_batch(&x, s_hat)?;
                let h = s_next - s_hat;
                let mut x_euler = x.clone();
                for i in 0..n {
                    if failed[i] {
                        continue;
                    }
                    for (v, &s) in x_euler.row_mut(i).iter_mut().zip(d1.row(i)) {
                        *v = *v + h * (-s_hat * s);
                    }
                }
                let d2 = score.score_batch(&x_euler, s_next)?;
                let half = T::of(0.5);
                for i in 0..n {
                    if failed[i] {
                        continue;
                    }
                    for ((v, &s1), &s2) in x
                        .row_mut(i)
                        .iter_mut()
                        .zip(d1.row(i))
                        .zip(d2.row(i))
                    {
                        let avg = half * (-s_hat * s1 - s_next * s2);
                        *v = *v + h * avg;
                    }
                }
                mark_failures(&mut x, &mut failed);
            }
        }
    }

    // Final deterministic denoise from sigma_min to zero.
    let s_min = *grid.last().expect("non-empty grid");
    let scores = score.score_batch(&x, s_min)?;
    for i in 0..n {
        if failed[i] {
            continue;
        }
        em_step(x.row_mut(i), s_min, T::zero(), scores.row(i), None);
    }
    mark_failures(&mut x, &mut failed);

    for i in 0..n {
        if failed[i] {
            for v in x.row_mut(i) {
                *v = T::nan();
            }
        }
    }
    let n_failed = failed.iter().filter(|f| **f).count();
    Ok(SampleBatch {
        points: x,
        failed,
        n_failed,
    })
}

fn mark_failures<T: Real>(x: &mut Tensor<T>, failed: &mut [bool]) {
    let d = x.cols();
    for (i, row) in x.data().chunks(d).enumerate() {
        if !failed[i] && row.iter().any(|v| !v.is_finite()) {
            failed[i] = true;
        }
    }
}
