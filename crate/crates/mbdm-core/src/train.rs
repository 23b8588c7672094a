//! Training loop: Adam on the denoising objective with periodic
//! validation and checkpoint callbacks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::adam::AdamState;
use crate::diffusion::{denoising_loss_and_grad, DenoisingBatch};
use crate::error::{Error, Result};
use crate::metrics::r_elbo;
use crate::real::Real;
use crate::rng::stream_rng;
use crate::score::ComposedScore;
use crate::tensor::Tensor;

/// RNG stream indices within a training seed.
const INIT_STREAM: u64 = 1_000_000;
const LOOP_STREAM: u64 = 1_000_001;

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig<T> {
    pub iterations: u64,
    pub batch: usize,
    pub lr: T,
    pub seed: u64,
    /// Metrics cadence; the final iteration always reports.
    pub eval_every: u64,
    /// Checkpoint cadence; 0 writes only the final state.
    pub checkpoint_every: u64,
}

impl<T: Real> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !(self.lr > T::zero()) {
            return Err(Error::config("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Everything that evolves during training; checkpoints snapshot this.
pub struct TrainState<T> {
    pub model: ComposedScore<T>,
    pub adam: AdamState<T>,
    pub iteration: u64,
    pub rng: ChaCha8Rng,
}

impl<T: Real> TrainState<T> {
    /// Fresh state: He-init parameters from the seed's init stream, zero
    /// Adam moments, loop RNG at its start position.
    pub fn init(mut model: ComposedScore<T>, cfg: &TrainConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let mut init_rng = stream_rng(cfg.seed, INIT_STREAM);
        model.params = crate::nn::MlpParams::init(model.params.spec, &mut init_rng);
        let adam = AdamState::new(&model.params, cfg.lr);
        Ok(TrainState {
            model,
            adam,
            iteration: 0,
            rng: stream_rng(cfg.seed, LOOP_STREAM),
        })
    }
}

/// Dataset split: the last tenth is held out for validation.
pub fn split_validation<T: Real>(data: &Tensor<T>) -> (Tensor<T>, Option<Tensor<T>>) {
    let n = data.rows();
    let d = data.cols();
    let n_val = n / 10;
    if n_val == 0 {
        return (data.clone(), None);
    }
    let n_train = n - n_val;
    let train = Tensor::from_vec(
        &[n_train, d],
        data.data()[..n_train * d].to_vec(),
    )
    .expect("split shapes");
    let val = Tensor::from_vec(&[n_val, d], data.data()[n_train * d..].to_vec())
        .expect("split shapes");
    (train, Some(val))
}

/// One reported metrics row.
#[derive(Debug, Clone, Copy)]
pub struct MetricsRow {
    pub iteration: u64,
    pub train_loss: f64,
    pub r_elbo: Option<f64>,
}

/// Run the Adam loop from `state.iteration` to `cfg.iterations`.
///
/// When bridges are configured, every dataset point must satisfy all
/// constraints; a violation is a data error naming the offending row.
pub fn train<T: Real>(
    state: &mut TrainState<T>,
    cfg: &TrainConfig<T>,
    dataset: &Tensor<T>,
    mut on_metrics: impl FnMut(&MetricsRow) -> Result<()>,
    mut on_checkpoint: impl FnMut(&TrainState<T>) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    if dataset.rows() == 0 {
        return Err(Error::data("empty dataset"));
    }
    if !state.model.bridges.is_empty() {
        for i in 0..dataset.rows() {
            if let Some(name) = state.model.bridges.violated(dataset.row(i)) {
                return Err(Error::data(format!(
                    "dataset point {i} violates constraint '{name}'"
                )));
            }
        }
    }
    let (train_set, val_set) = split_validation(dataset);
    let d = dataset.cols();

    while state.iteration < cfg.iterations {
        let mut x0 = Tensor::zeros(&[cfg.batch, d]);
        for i in 0..cfg.batch {
            let idx = state.rng.gen_range(0..train_set.rows());
            x0.row_mut(i).copy_from_slice(train_set.row(idx));
        }
        let batch = DenoisingBatch::draw(&x0, &state.model.sched, &mut state.rng)?;
        let (loss, grads) = denoising_loss_and_grad(&state.model, &batch)?;
        state.adam.step(&mut state.model.params, &grads)?;
        state.iteration += 1;

        let at_end = state.iteration == cfg.iterations;
        if at_end || (cfg.eval_every > 0 && state.iteration % cfg.eval_every == 0) {
            let relbo = match &val_set {
                Some(v) => Some(r_elbo(&state.model, v)?.as_f64()),
                None => None,
            };
            on_metrics(&MetricsRow {
                iteration: state.iteration,
                train_loss: loss.as_f64(),
                r_elbo: relbo,
            })?;
        }
        if cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0 && !at_end {
            on_checkpoint(state)?;
        }
    }
    on_checkpoint(state)?;
    Ok(())
}
