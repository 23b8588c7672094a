//! Evaluation metrics: infraction rate and loss, the reweighted validation
//! ELBO, energy distance, and the bridge-condition diagnostics.

use rand::Rng;
use rayon::prelude::*;

use crate::bridge::{BridgeSet, GammaSchedule};
use crate::constraint::DistanceField;
use crate::diffusion::{denoising_loss_value, DenoisingBatch};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::schedule::NoiseSchedule;
use crate::score::ComposedScore;
use crate::tensor::Tensor;

/// Per-constraint and overall violation fractions.
#[derive(Debug, Clone)]
pub struct InfractionReport {
    pub per_constraint: Vec<(String, f64)>,
    pub overall: f64,
    pub n: usize,
}

/// Fractions of points violating each constraint and any constraint.
/// Membership comes from the exact predicates, so no thresholds enter.
pub fn infraction_rate<T: Real>(
    rows: &[&[T]],
    bridges: &BridgeSet<T>,
) -> Result<InfractionReport> {
    if rows.is_empty() {
        return Err(Error::data("infraction rate of an empty batch"));
    }
    let n = rows.len();
    let mut per = vec![0usize; bridges.len()];
    let mut any = 0usize;
    for row in rows {
        let mut violated = false;
        for (k, b) in bridges.bridges().iter().enumerate() {
            if !b.field.member(row) {
                per[k] += 1;
                violated = true;
            }
        }
        if violated {
            any += 1;
        }
    }
    Ok(InfractionReport {
        per_constraint: bridges
            .bridges()
            .iter()
            .zip(per)
            .map(|(b, c)| (b.name.clone(), c as f64 / n as f64))
            .collect(),
        overall: any as f64 / n as f64,
        n,
    })
}

/// Mean over the batch of the summed distance functions at `t = 0`.
pub fn infraction_loss<T: Real>(rows: &[&[T]], bridges: &BridgeSet<T>) -> Result<T> {
    if rows.is_empty() {
        return Err(Error::data("infraction loss of an empty batch"));
    }
    let total: T = rows
        .iter()
        .map(|row| bridges.ell_sum(row, T::zero()))
        .sum();
    Ok(total / T::of(rows.len() as f64))
}

/// Validation noise is fixed across runs so r-ELBO comparisons between
/// architectures are low-variance.
const VAL_NOISE_SEED: u64 = 0x4d42_444d_7641;
/// Log-spaced noise levels of the validation grid.
pub const VAL_LEVELS: usize = 64;

/// Reweighted validation ELBO: the negated deterministic validation loss
/// over a fixed grid of noise levels with fixed noise draws. Higher is
/// better; an oracle score reaches 0.
pub fn r_elbo<T: Real>(model: &ComposedScore<T>, val: &Tensor<T>) -> Result<T> {
    let loss = validation_loss(model, val)?;
    Ok(-loss)
}

/// Mean denoising loss over the fixed validation grid.
pub fn validation_loss<T: Real>(model: &ComposedScore<T>, val: &Tensor<T>) -> Result<T> {
    if val.rows() == 0 {
        return Err(Error::config("empty validation set"));
    }
    let sched = &model.sched;
    let mut total = T::zero();
    for level in 0..VAL_LEVELS {
        let u = T::of(level as f64 / (VAL_LEVELS - 1) as f64);
        let sigma = sched.sigma_of_u(u);
        let mut rng = crate::rng::stream_rng(VAL_NOISE_SEED, level as u64);
        let eps = crate::rng::normal_tensor::<T>(val.shape(), &mut rng);
        let sigmas = vec![sigma; val.rows()];
        let batch = DenoisingBatch::from_noise(val, &sigmas, &eps)?;
        total = total + denoising_loss_value(model, &batch)?;
    }
    Ok(total / T::of(VAL_LEVELS as f64))
}

/// Unbiased two-sample energy distance
/// `2 E||X-Y|| - E||X-X'|| - E||Y-Y'||` with U-statistic within-sample
/// terms.
pub fn energy_distance<T: Real>(a: &[&[T]], b: &[&[T]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::data("energy distance of an empty sample"));
    }
    let dist = |p: &[T], q: &[T]| -> f64 {
        p.iter()
            .zip(q)
            .map(|(&x, &y)| {
                let d = (x - y).as_f64();
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };
    let cross: f64 = a
        .par_iter()
        .map(|p| b.iter().map(|q| dist(p, q)).sum::<f64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum::<f64>()
        / (a.len() as f64 * b.len() as f64);
    let within = |s: &[&[T]]| -> f64 {
        if s.len() < 2 {
            return 0.0;
        }
        let total: f64 = s
            .par_iter()
            .enumerate()
            .map(|(i, p)| s[i + 1..].iter().map(|q| dist(p, q)).sum::<f64>())
            .collect::<Vec<_>>()
            .into_iter()
            .sum();
        2.0 * total / (s.len() as f64 * (s.len() - 1) as f64)
    };
    Ok(2.0 * cross - within(a) - within(b))
}

/// One noise level of the expected Polyak-Lojasiewicz diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct PlRow {
    pub sigma: f64,
    pub e_ell: f64,
    pub se_ell: f64,
    pub e_grad2: f64,
    pub se_grad2: f64,
    /// True when `E[l] > E[||grad l||^2]` by more than 3 combined SEs.
    pub flagged: bool,
}

/// Monte Carlo estimate of `E[l]` vs `E[||grad l||^2]` under a caller
/// supplied point sampler, per noise level. Purely diagnostic: manual
/// bridges need not satisfy the condition.
pub fn pl_diagnostic<T: Real, R: Rng>(
    field: &dyn DistanceField<T>,
    mut sample_at: impl FnMut(T, &mut R) -> Vec<T>,
    sigmas: &[T],
    n: usize,
    rng: &mut R,
) -> Vec<PlRow> {
    let d = field.dim();
    let mut grad = vec![T::zero(); d];
    sigmas
        .iter()
        .map(|&sigma| {
            let mut s_ell = 0.0;
            let mut s_ell2 = 0.0;
            let mut s_g = 0.0;
            let mut s_g2 = 0.0;
            for _ in 0..n {
                let x = sample_at(sigma, rng);
                let ell = field.eval(&x, sigma).as_f64();
                field.grad(&x, sigma, &mut grad);
                let g2: f64 = grad.iter().map(|&g| g.as_f64() * g.as_f64()).sum();
                s_ell += ell;
                s_ell2 += ell * ell;
                s_g += g2;
                s_g2 += g2 * g2;
            }
            let nf = n as f64;
            let e_ell = s_ell / nf;
            let e_grad2 = s_g / nf;
            let se_ell = ((s_ell2 / nf - e_ell * e_ell).max(0.0) / nf).sqrt();
            let se_grad2 = ((s_g2 / nf - e_grad2 * e_grad2).max(0.0) / nf).sqrt();
            let combined = (se_ell * se_ell + se_grad2 * se_grad2).sqrt();
            PlRow {
                sigma: sigma.as_f64(),
                e_ell,
                se_ell,
                e_grad2,
                se_grad2,
                flagged: e_ell > e_grad2 + 3.0 * combined,
            }
        })
        .collect()
}

/// `log zeta(t) = integral_t^T gamma(sigma(s)) ds` on the schedule's time
/// parameterization, by adaptive trapezoidal quadrature.
#[derive(Debug, Clone, Copy)]
pub struct ZetaRow {
    pub t: f64,
    pub log_zeta: f64,
}

pub fn zeta_diagnostic<T: Real>(
    gamma: &GammaSchedule<T>,
    sched: &NoiseSchedule<T>,
    t_grid: &[T],
) -> Result<Vec<ZetaRow>> {
    zeta_diagnostic_fn(|sigma| gamma.eval(sigma), sched, t_grid)
}

/// [`zeta_diagnostic`] over an arbitrary `gamma(sigma)`.
pub fn zeta_diagnostic_fn<T: Real>(
    gamma: impl Fn(T) -> Result<T>,
    sched: &NoiseSchedule<T>,
    t_grid: &[T],
) -> Result<Vec<ZetaRow>> {
    let f = |s: f64| -> Result<f64> {
        let sigma = sched.sigma_of_u(T::of(s));
        Ok(gamma(sigma)?.as_f64())
    };
    t_grid
        .iter()
        .map(|&t| {
            let a = t.as_f64();
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::config(format!("t = {a} outside [0, 1]")));
            }
            Ok(ZetaRow {
                t: a,
                log_zeta: adaptive_trapezoid(&f, a, 1.0, 1e-10)?,
            })
        })
        .collect()
}

/// Trapezoid rule with panel doubling until successive refinements agree.
fn adaptive_trapezoid(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if a >= b {
        return Ok(0.0);
    }
    let mut n = 16usize;
    let mut prev = f64::INFINITY;
    loop {
        let h = (b - a) / n as f64;
        let mut acc = 0.5 * (f(a)? + f(b)?);
        for k in 1..n {
            acc += f(a + k as f64 * h)?;
        }
        let cur = acc * h;
        if (cur - prev).abs() <= rel_tol * (1.0 + cur.abs()) || n >= 1 << 22 {
            return Ok(cur);
        }
        prev = cur;
        n *= 2;
    }
}

/// `rho(t) = E[dl/dt + 1/2 Tr(hessian l) g^2(t)]`, available only for
/// fields with analytic Hessian traces (the shipped fields are
/// time-independent, so the first term vanishes).
pub fn rho_diagnostic<T: Real, R: Rng>(
    field: &dyn DistanceField<T>,
    sched: &NoiseSchedule<T>,
    mut sample_at: impl FnMut(T, &mut R) -> Vec<T>,
    sigmas: &[T],
    n: usize,
    rng: &mut R,
) -> Vec<Option<f64>> {
    sigmas
        .iter()
        .map(|&sigma| {
            let g2 = {
                let t = sched.u_of_sigma(sigma);
                let g = sched.g_of_t(t);
                (g * g).as_f64()
            };
            let mut acc = 0.0;
            for _ in 0..n {
                let x = sample_at(sigma, rng);
                match field.hessian_trace(&x, sigma) {
                    Some(h) => acc += 0.5 * h.as_f64() * g2,
                    None => return None,
                }
            }
            Some(acc / n as f64)
        })
        .collect()
}
