//! Residual MLP score network and the sinusoidal noise-level embedding.

use rand::Rng;

use crate::autodiff::{Gradients, Graph, NodeId};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Sinusoidal embedding frequencies: a geometric ladder whose periods in
/// `ln(sigma)` span `2*pi*1e-5` to `2*pi*1e3`, wide enough to separate
/// noise levels across the six-decade training range.
const FREQ_MIN: f64 = 1e-3;
const FREQ_MAX: f64 = 1e5;

/// Sinusoidal embedding of a positive noise level, taken in log-space.
///
/// Output is `[sin(w_0 u), cos(w_0 u), sin(w_1 u), ...]` with `u = ln
/// sigma` and geometrically spaced `w_k`; values lie in `[-1, 1]`.
pub fn embed_sigma<T: Real>(sigma: T, dim: usize) -> Result<Tensor<T>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::config(format!(
            "embedding dimension must be even and positive, got {dim}"
        )));
    }
    if !(sigma > T::zero()) {
        return Err(Error::config(format!(
            "noise level must be positive, got {sigma}"
        )));
    }
    let mut out = Tensor::zeros(&[dim]);
    write_embedding(sigma, out.data_mut());
    Ok(out)
}

/// Batched [`embed_sigma`]; row `i` embeds `sigmas[i]`.
pub fn embed_sigma_batch<T: Real>(sigmas: &[T], dim: usize) -> Result<Tensor<T>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::config(format!(
            "embedding dimension must be even and positive, got {dim}"
        )));
    }
    let mut out = Tensor::zeros(&[sigmas.len(), dim]);
    for (i, &s) in sigmas.iter().enumerate() {
        if !(s > T::zero()) {
            return Err(Error::config(format!("noise level must be positive, got {s}")));
        }
        write_embedding(s, out.row_mut(i));
    }
    Ok(out)
}

fn write_embedding<T: Real>(sigma: T, row: &mut [T]) {
    let pairs = row.len() / 2;
    let u = sigma.ln();
    for k in 0..pairs {
        let frac = if pairs > 1 { k as f64 / (pairs - 1) as f64 } else { 0.0 };
        let w = T::of(FREQ_MIN * (FREQ_MAX / FREQ_MIN).powf(frac));
        let phase = w * u;
        row[2 * k] = phase.sin();
        row[2 * k + 1] = phase.cos();
    }
}

/// Shape of a residual MLP: input projection, `blocks` residual blocks of
/// width `hidden`, output projection back to `data_dim`.
///
/// The network consumes `data_dim + embed_dim + cond_dim` columns;
/// `cond_dim` is zero except for conditioned architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpSpec {
    pub data_dim: usize,
    pub hidden: usize,
    pub blocks: usize,
    pub embed_dim: usize,
    pub cond_dim: usize,
}

impl MlpSpec {
    pub fn input_width(&self) -> usize {
        self.data_dim + self.embed_dim + self.cond_dim
    }

    /// Shapes of the parameter tensors in storage order.
    pub fn tensor_shapes(&self) -> Vec<Vec<usize>> {
        let (h, d) = (self.hidden, self.data_dim);
        let mut shapes = vec![vec![self.input_width(), h], vec![h]];
        for _ in 0..self.blocks {
            shapes.push(vec![h, h]);
            shapes.push(vec![h]);
            shapes.push(vec![h, h]);
            shapes.push(vec![h]);
        }
        shapes.push(vec![h, d]);
        shapes.push(vec![d]);
        shapes
    }
}

/// Parameters of a residual MLP, stored as a flat list of tensors in the
/// order given by [`MlpSpec::tensor_shapes`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    pub spec: MlpSpec,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Real> MlpParams<T> {
    /// He-normal init for hidden layers; the output projection starts at
    /// zero so the composed score starts at the analytically known prior.
    pub fn init(spec: MlpSpec, rng: &mut impl Rng) -> Self {
        let shapes = spec.tensor_shapes();
        let n = shapes.len();
        let tensors = shapes
            .iter()
            .enumerate()
            .map(|(i, shape)| {
                let is_weight = shape.len() == 2;
                let is_output = i >= n - 2;
                if !is_weight || is_output {
                    Tensor::zeros(shape)
                } else {
                    let std = T::of((2.0 / shape[0] as f64).sqrt());
                    let data = (0..shape.iter().product())
                        .map(|_| T::std_normal(rng) * std)
                        .collect();
                    Tensor::from_vec(shape, data).expect("consistent shape")
                }
            })
            .collect();
        MlpParams { spec, tensors }
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Validate tensor shapes against the spec.
    pub fn check_consistent(&self) -> Result<()> {
        let shapes = self.spec.tensor_shapes();
        if shapes.len() != self.tensors.len() {
            return Err(Error::config("parameter tensor count mismatch"));
        }
        for (t, s) in self.tensors.iter().zip(&shapes) {
            if t.shape() != s.as_slice() {
                return Err(Error::config(format!(
                    "parameter shape {:?} does not match spec {:?}",
                    t.shape(),
                    s
                )));
            }
        }
        Ok(())
    }
}

/// Parameter leaves of one forward build, in storage order.
pub struct MlpVars(Vec<NodeId>);

/// Register the parameters on a graph and run the forward pass on a
/// `[batch, input_width]` constant.
///
/// Returns the raw network output `[batch, data_dim]`; score-space
/// preconditioning happens in the diffusion layer.
pub fn forward_graph<T: Real>(
    g: &mut Graph<T>,
    params: &MlpParams<T>,
    input: &Tensor<T>,
) -> Result<(NodeId, MlpVars)> {
    if input.shape().len() != 2 || input.cols() != params.spec.input_width() {
        return Err(Error::config(format!(
            "network input shape {:?} does not match expected width {}",
            input.shape(),
            params.spec.input_width()
        )));
    }
    let vars: Vec<NodeId> = params.tensors.iter().map(|t| g.param(t.clone())).collect();
    let x = g.constant(input.clone());

    g.set_context("input_proj");
    let z = g.matmul(x, vars[0])?;
    let z = g.add_bias(z, vars[1])?;
    let mut h = g.silu(z)?;

    static BLOCK_NAMES: [&str; 8] = [
        "block0", "block1", "block2", "block3", "block4", "block5", "block6", "block7",
    ];
    for b in 0..params.spec.blocks {
        g.set_context(BLOCK_NAMES.get(b).copied().unwrap_or("block"));
        let base = 2 + 4 * b;
        let u = g.matmul(h, vars[base])?;
        let u = g.add_bias(u, vars[base + 1])?;
        let u = g.silu(u)?;
        let v = g.matmul(u, vars[base + 2])?;
        let v = g.add_bias(v, vars[base + 3])?;
        h = g.add(h, v)?;
    }

    g.set_context("output_proj");
    let base = 2 + 4 * params.spec.blocks;
    let out = g.matmul(h, vars[base])?;
    let out = g.add_bias(out, vars[base + 1])?;
    Ok((out, MlpVars(vars)))
}

/// Forward pass without gradients.
pub fn forward<T: Real>(params: &MlpParams<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let (out, _) = forward_graph(&mut g, params, input)?;
    Ok(g.value(out).clone())
}

/// Loss value and per-tensor gradient of a scalar loss built from engine
/// primitives on top of the parameter leaves.
pub fn loss_and_grad<T: Real, F>(params: &MlpParams<T>, build: F) -> Result<(T, Vec<Tensor<T>>)>
where
    F: FnOnce(&mut Graph<T>, &MlpVars) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let vars: Vec<NodeId> = params.tensors.iter().map(|t| g.param(t.clone())).collect();
    let vars = MlpVars(vars);
    let loss = build(&mut g, &vars)?;
    let (value, grads) = g.backward(loss)?;
    let out = collect_grads(params, &vars, &grads);
    Ok((value, out))
}

/// Gradients for every parameter tensor; tensors the loss does not touch
/// get zeros.
pub fn collect_grads<T: Real>(
    params: &MlpParams<T>,
    vars: &MlpVars,
    grads: &Gradients<T>,
) -> Vec<Tensor<T>> {
    params
        .tensors
        .iter()
        .zip(&vars.0)
        .map(|(t, &id)| match grads.wrt(id) {
            Some(g) => g.clone(),
            None => Tensor::zeros(t.shape()),
        })
        .collect()
}

impl MlpVars {
    pub fn ids(&self) -> &[NodeId] {
        &self.0
    }
}
