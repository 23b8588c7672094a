//! Denoising score matching for the VE forward process.
//!
//! The loss is `mean_i lambda(sigma_i) ||s(x_i + sigma_i eps_i; sigma_i) -
//! (x0_i - xt_i)/sigma_i^2||^2` with `lambda = sigma^2` and log-uniform
//! noise draws; for bridged architectures `s` is the full composed score,
//! so the bridge enters the regression target.

use rand::Rng;

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::nn;
use crate::real::Real;
use crate::schedule::NoiseSchedule;
use crate::score::ComposedScore;
use crate::tensor::Tensor;

/// `x_t = x0 + sigma * eps` for one point.
pub fn perturb<T: Real>(x0: &[T], sigma: T, rng: &mut impl Rng) -> Vec<T> {
    x0.iter()
        .map(|&v| v + sigma * T::std_normal(rng))
        .collect()
}

/// Conditional VE score `grad log q(x_t | x0) = (x0 - x_t) / sigma^2`.
pub fn score_target<T: Real>(x0: &[T], xt: &[T], sigma: T) -> Result<Vec<T>> {
    if !(sigma > T::zero()) {
        return Err(Error::config("score target undefined at sigma = 0"));
    }
    let inv = (sigma * sigma).recip();
    Ok(x0.iter().zip(xt).map(|(&a, &b)| (a - b) * inv).collect())
}

/// One denoising batch: noise levels, noised points and regression
/// targets, all held as constants for the loss graph.
pub struct DenoisingBatch<T> {
    pub sigmas: Vec<T>,
    pub xt: Tensor<T>,
    pub targets: Tensor<T>,
    /// `lambda(sigma) = sigma^2` row weights.
    pub lambdas: Vec<T>,
}

impl<T: Real> DenoisingBatch<T> {
    /// Draw noise levels log-uniformly and perturb `x0`.
    pub fn draw(x0: &Tensor<T>, sched: &NoiseSchedule<T>, rng: &mut impl Rng) -> Result<Self> {
        let b = x0.rows();
        let sigmas: Vec<T> = (0..b)
            .map(|_| sched.sigma_of_u(T::unit_uniform(rng)))
            .collect();
        let eps = crate::rng::normal_tensor::<T>(x0.shape(), rng);
        Self::from_noise(x0, &sigmas, &eps)
    }

    /// Deterministic construction from given noise (validation path).
    pub fn from_noise(x0: &Tensor<T>, sigmas: &[T], eps: &Tensor<T>) -> Result<Self> {
        let (b, d) = (x0.rows(), x0.cols());
        if eps.shape() != x0.shape() || sigmas.len() != b {
            return Err(Error::config("noise shape mismatch"));
        }
        let mut xt = x0.clone();
        for ((row, e), &s) in xt
            .data_mut()
            .chunks_mut(d)
            .zip(eps.data().chunks(d))
            .zip(sigmas)
        {
            for (v, &ei) in row.iter_mut().zip(e) {
                *v = *v + s * ei;
            }
        }
        let mut targets = Tensor::zeros(&[b, d]);
        for i in 0..b {
            let t = score_target(x0.row(i), xt.row(i), sigmas[i])?;
            targets.row_mut(i).copy_from_slice(&t);
        }
        let lambdas = sigmas.iter().map(|&s| s * s).collect();
        Ok(DenoisingBatch {
            sigmas: sigmas.to_vec(),
            xt,
            targets,
            lambdas,
        })
    }
}

fn check_residual_finite<T: Real>(resid: &Tensor<T>, sigmas: &[T]) -> Result<()> {
    if let Some(flat) = resid.first_non_finite() {
        let row = flat / resid.cols();
        return Err(Error::numeric(format!(
            "non-finite loss term at example {row}, sigma {}",
            sigmas[row]
        )));
    }
    Ok(())
}

/// Loss value and parameter gradients for one batch.
pub fn denoising_loss_and_grad<T: Real>(
    model: &ComposedScore<T>,
    batch: &DenoisingBatch<T>,
) -> Result<(T, Vec<Tensor<T>>)> {
    let prep = model.prepare_inputs(&batch.xt, &batch.sigmas)?;
    let inv_neg_sigmas: Vec<T> = batch.sigmas.iter().map(|&s| -s.recip()).collect();

    let mut g = Graph::new();
    let (raw, vars) = nn::forward_graph(&mut g, &model.params, &prep.input)?;
    g.set_context("score_composition");
    let mut score = g.row_scale(raw, &inv_neg_sigmas)?;
    if let Some(bsum) = &prep.bridge_sum {
        let bnode = g.constant(bsum.clone());
        score = g.add(score, bnode)?;
    }
    let tnode = g.constant(batch.targets.clone());
    let resid = g.sub(score, tnode)?;
    check_residual_finite(g.value(resid), &batch.sigmas)?;
    g.set_context("loss");
    let weighted = g.row_scale(resid, &batch.lambdas)?;
    let prod = g.mul(resid, weighted)?;
    let total = g.sum_all(prod)?;
    let loss = g.scale(total, T::of(1.0 / batch.xt.rows() as f64))?;

    let (value, grads) = g.backward(loss)?;
    let out = nn::collect_grads(&model.params, &vars, &grads);
    Ok((value, out))
}

/// Loss value only (no gradients).
pub fn denoising_loss_value<T: Real>(
    model: &ComposedScore<T>,
    batch: &DenoisingBatch<T>,
) -> Result<T> {
    let score = model.score_rows(&batch.xt, &batch.sigmas)?;
    let d = score.cols();
    let mut total = T::zero();
    for i in 0..score.rows() {
        let mut acc = T::zero();
        for (s, t) in score.row(i).iter().zip(batch.targets.row(i)) {
            let r = *s - *t;
            acc = acc + r * r;
        }
        if !acc.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite loss term at example {i}, sigma {}",
                batch.sigmas[i]
            )));
        }
        total = total + batch.lambdas[i] * acc;
    }
    let _ = d;
    Ok(total / T::of(score.rows() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{BridgeSet, GammaSchedule, ManualBridge};
    use crate::constraint::Checkerboard;
    use crate::nn::MlpParams;
    use crate::rng::stream_rng;
    use crate::score::{ArchTag, ComposedScore};

    #[test]
    fn perturb_at_zero_sigma_is_identity_and_reproducible() {
        let x0 = vec![1.0, -2.0, 3.0];
        let mut rng = stream_rng(1, 0);
        assert_eq!(perturb(&x0, 0.0, &mut rng), x0);
        let a = perturb(&x0, 2.0, &mut stream_rng(1, 0));
        let b = perturb(&x0, 2.0, &mut stream_rng(1, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn perturbation_variance_matches_sigma_squared() {
        let mut rng = stream_rng(2, 0);
        let sigma = 2.0f64;
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let d = perturb(&[0.0], sigma, &mut rng)[0];
            sum += d;
            sum2 += d * d;
        }
        let var = sum2 / n as f64 - (sum / n as f64).powi(2);
        // Var of the sample variance of N(0, 4): se ~ sigma^2 sqrt(2/n).
        let se = sigma * sigma * (2.0 / n as f64).sqrt();
        assert!((var - 4.0).abs() <= 3.0 * se, "{var}");
    }

    #[test]
    fn score_target_basics() {
        assert_eq!(score_target(&[0.0], &[1.0], 1.0).unwrap(), vec![-1.0]);
        assert_eq!(score_target(&[0.7], &[0.7], 0.5).unwrap(), vec![0.0]);
        assert!(score_target(&[0.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn score_target_matches_log_density_finite_differences() {
        // d/dx log N(x; x0, sigma^2) at x = xt.
        let (x0, xt, sigma) = (0.3f64, 1.1f64, 0.8f64);
        let logp = |x: f64| -0.5 * ((x - x0) / sigma).powi(2);
        let h = 1e-6;
        let fd = (logp(xt + h) - logp(xt - h)) / (2.0 * h);
        let got = score_target(&[x0], &[xt], sigma).unwrap()[0];
        assert!((fd - got).abs() < 1e-6, "{fd} vs {got}");
    }

    fn plain_model(seed: u64) -> ComposedScore<f64> {
        let sched = NoiseSchedule::default_for_unit_data();
        let bridges = BridgeSet::empty();
        let spec = ComposedScore::spec_for(ArchTag::Plain, 2, 16, 1, 8, &bridges);
        let params = MlpParams::init(spec, &mut stream_rng(seed, 0));
        ComposedScore::new(ArchTag::Plain, params, bridges, sched).unwrap()
    }

    #[test]
    fn zero_model_loss_is_data_dimension() {
        // With lambda = sigma^2 and s = 0 the expected loss is E||eps||^2 = d.
        let model = plain_model(3);
        let x0 = crate::rng::normal_tensor::<f64>(&[4000, 2], &mut stream_rng(4, 0));
        let mut rng = stream_rng(5, 0);
        let mut total = 0.0;
        let reps = 8;
        for _ in 0..reps {
            let batch = DenoisingBatch::draw(&x0, &model.sched, &mut rng).unwrap();
            total += denoising_loss_value(&model, &batch).unwrap();
        }
        let mean = total / reps as f64;
        // d = 2; Monte Carlo with 32k terms: se of ||eps||^2 mean ~ 2/sqrt(n).
        let se = 2.0 / ((4000 * reps) as f64).sqrt();
        assert!((mean - 2.0).abs() <= 4.0 * se, "{mean}");
    }

    #[test]
    fn oracle_score_has_zero_loss() {
        // Build a batch, then check the loss formula at s = target directly.
        let model = plain_model(6);
        let x0 = crate::rng::normal_tensor::<f64>(&[16, 2], &mut stream_rng(7, 0));
        let batch = DenoisingBatch::draw(&x0, &model.sched, &mut stream_rng(8, 0)).unwrap();
        let mut total = 0.0;
        for i in 0..16 {
            let mut acc = 0.0;
            for (s, t) in batch.targets.row(i).iter().zip(batch.targets.row(i)) {
                acc += (s - t) * (s - t);
            }
            total += batch.lambdas[i] * acc;
        }
        assert_eq!(total, 0.0);
    }

    #[test]
    fn db_loss_equals_plain_loss_with_shifted_target() {
        // s_db = s_net + b  =>  ||s_db - target|| = ||s_net - (target - b)||.
        let sched = NoiseSchedule::default_for_unit_data();
        let bridges = || {
            BridgeSet::combine(vec![ManualBridge::new(
                "checker",
                Box::new(Checkerboard::standard()),
                GammaSchedule::InverseSquared { scale: 1.0 },
            )])
            .unwrap()
        };
        let spec = ComposedScore::spec_for(ArchTag::Db, 2, 16, 1, 8, &bridges());
        let mut params = MlpParams::init(spec, &mut stream_rng(9, 0));
        let n = params.tensors.len();
        let mut rng = stream_rng(10, 0);
        for t in &mut params.tensors[n - 2..] {
            for v in t.data_mut() {
                *v = f64::std_normal(&mut rng) * 0.1;
            }
        }
        let db = ComposedScore::new(ArchTag::Db, params.clone(), bridges(), sched).unwrap();
        let plain = ComposedScore::new(ArchTag::Plain, params, BridgeSet::empty(), sched).unwrap();

        let x0 = crate::rng::normal_tensor::<f64>(&[32, 2], &mut stream_rng(11, 0));
        let batch = DenoisingBatch::draw(&x0, &sched, &mut stream_rng(12, 0)).unwrap();
        let db_loss = denoising_loss_value(&db, &batch).unwrap();

        // Shift the targets by the bridge value and evaluate the plain model.
        let mut shifted = batch.targets.clone();
        for i in 0..32 {
            let mut b = vec![0.0; 2];
            db.bridges
                .sum_into(batch.xt.row(i), batch.sigmas[i], &mut b)
                .unwrap();
            for (t, bv) in shifted.row_mut(i).iter_mut().zip(&b) {
                *t -= bv;
            }
        }
        let shifted_batch = DenoisingBatch {
            sigmas: batch.sigmas.clone(),
            xt: batch.xt.clone(),
            targets: shifted,
            lambdas: batch.lambdas.clone(),
        };
        let plain_loss = denoising_loss_value(&plain, &shifted_batch).unwrap();
        assert!(
            (db_loss - plain_loss).abs() <= 1e-12 * (1.0 + plain_loss),
            "{db_loss} vs {plain_loss}"
        );
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let model = plain_model(13);
        let x0 = crate::rng::normal_tensor::<f64>(&[8, 2], &mut stream_rng(14, 0));
        let batch = DenoisingBatch::draw(&x0, &model.sched, &mut stream_rng(15, 0)).unwrap();
        let (_, grads) = denoising_loss_and_grad(&model, &batch).unwrap();

        let h = 1e-5;
        // Probe a few coordinates of each tensor.
        for ti in 0..model.params.tensors.len() {
            let len = model.params.tensors[ti].len();
            for &ci in &[0usize, len / 2, len - 1] {
                let mut perturbed = ComposedScore::new(
                    model.arch,
                    model.params.clone(),
                    BridgeSet::empty(),
                    model.sched,
                )
                .unwrap();
                perturbed.params.tensors[ti].data_mut()[ci] += h;
                let up = denoising_loss_value(&perturbed, &batch).unwrap();
                perturbed.params.tensors[ti].data_mut()[ci] -= 2.0 * h;
                let down = denoising_loss_value(&perturbed, &batch).unwrap();
                let fd = (up - down) / (2.0 * h);
                let an = grads[ti].data()[ci];
                let denom = an.abs().max(fd.abs()).max(1e-8);
                assert!(
                    (fd - an).abs() / denom <= 1e-4,
                    "tensor {ti} coord {ci}: {fd} vs {an}"
                );
            }
        }
    }
}
