use rand::Rng as _;
use rand_distr::Uniform;

use crate::error::{Error, Result};
use crate::rng;

use super::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Silu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Silu => "silu",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "silu" => Ok(Activation::Silu),
            other => Err(Error::InvalidParameter(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub n_hidden_layers: usize,
    pub activation: Activation,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidParameter("MLP dimensions must be at least 1".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(std::iter::repeat_n(self.hidden_dim, self.n_hidden_layers));
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Affine/activation stack; the last layer has no activation. Parameters
/// are stored as `[W₀, b₀, W₁, b₁, …]` with `Wₖ` shaped `fan_in × fan_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    config: MlpConfig,
    params: Vec<Tensor>,
}

impl Mlp {
    /// Weights and biases uniform in `±1/√fan_in`.
    pub fn init(config: MlpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::seeded(seed);
        let mut params = Vec::new();
        for (fan_in, fan_out) in config.layer_shapes() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let u = Uniform::new_inclusive(-bound, bound)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let w = (0..fan_in * fan_out).map(|_| r.sample(u)).collect();
            let b = (0..fan_out).map(|_| r.sample(u)).collect();
            params.push(Tensor::matrix(fan_in, fan_out, w)?);
            params.push(Tensor::new(vec![fan_out], b)?);
        }
        Ok(Self { config, params })
    }

    pub fn from_parts(config: MlpConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let expected: Vec<Vec<usize>> = config
            .layer_shapes()
            .into_iter()
            .flat_map(|(i, o)| [vec![i, o], vec![o]])
            .collect();
        let got: Vec<Vec<usize>> = params.iter().map(|p| p.shape().to_vec()).collect();
        if expected != got {
            return Err(Error::ShapeMismatch(format!(
                "parameters {got:?} do not fit config {expected:?}"
            )));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Records the forward pass of a `batch × input_dim` input; returns the
    /// output and the parameter handles (for reading gradients).
    pub fn record(&self, tape: &mut Tape, input: Var) -> Result<(Var, Vec<Var>)> {
        let shape = tape.value(input).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.config.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "MLP expects (batch, {}), got {shape:?}",
                self.config.input_dim
            )));
        }
        let handles: Vec<Var> = self.params.iter().map(|p| tape.param(p.clone())).collect();
        let layers = handles.len() / 2;
        let mut h = input;
        for (l, pair) in handles.chunks_exact(2).enumerate() {
            let z = tape.matmul(h, pair[0])?;
            h = tape.add_row(z, pair[1])?;
            if l + 1 < layers {
                h = match self.config.activation {
                    Activation::Relu => tape.relu(h)?,
                    Activation::Silu => tape.silu(h)?,
                };
            }
        }
        Ok((h, handles))
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let (out, _) = self.record(&mut tape, x)?;
        Ok(tape.value(out).clone())
    }
}
