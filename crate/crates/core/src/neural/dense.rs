use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tensor::{gemm, rm, tr, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Affine map `y = W x (+ b)` with `W` stored `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Dense {
    /// Uniform `±1/√in` initialization for weights and bias.
    pub fn init(input: usize, output: usize, bias: bool, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        Self {
            weight: Tensor::uniform(vec![output, input], bound, rng),
            bias: bias.then(|| Tensor::uniform(vec![output], bound, rng)),
        }
    }

    pub fn zeros(input: usize, output: usize, bias: bool) -> Self {
        Self { weight: Tensor::zeros(vec![output, input]), bias: bias.then(|| Tensor::zeros(vec![output])) }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        1 + self.bias.is_some() as usize
    }

    /// Batched forward: `x` is `[batch, in]`, result `[batch, out]`.
    pub fn forward(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let (i, o) = (self.input_dim(), self.output_dim());
        let mut y = vec![0.0; batch * o];
        if let Some(b) = &self.bias {
            for row in y.chunks_exact_mut(o) {
                row.copy_from_slice(b.data());
            }
        }
        gemm(batch, i, o, x, rm(i), self.weight.data(), tr(i), 1.0, &mut y);
        y
    }

    /// Accumulates parameter gradients into `grads` (weight, then bias)
    /// and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], batch: usize, grads: &mut [Tensor]) -> Vec<f64> {
        let (i, o) = (self.input_dim(), self.output_dim());
        gemm(o, batch, i, dy, tr(o), x, rm(i), 1.0, grads[0].data_mut());
        if self.bias.is_some() {
            let gb = grads[1].data_mut();
            for row in dy.chunks_exact(o) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
        let mut dx = vec![0.0; batch * i];
        gemm(batch, o, i, dy, rm(o), self.weight.data(), rm(i), 0.0, &mut dx);
        dx
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut p = vec![&self.weight];
        if let Some(b) = &self.bias {
            p.push(b);
        }
        p
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = vec![&mut self.weight];
        if let Some(b) = &mut self.bias {
            p.push(b);
        }
        p
    }
}

/// Layer widths and options of an [`Mlp`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    /// Input width, hidden widths, output width.
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub bias: bool,
}

/// Fully connected network; the activation follows every layer except the
/// last, which is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    arch: MlpArch,
    layers: Vec<Dense>,
}

/// Per-layer inputs saved by [`Mlp::forward_cached`]; the last entry is the
/// network output.
#[derive(Clone, Debug)]
pub struct MlpCache {
    batch: usize,
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

impl Mlp {
    pub fn init(arch: MlpArch, rng: &mut impl Rng) -> Result<Self> {
        Self::check_arch(&arch)?;
        let layers = arch.widths.windows(2).map(|w| Dense::init(w[0], w[1], arch.bias, rng)).collect();
        Ok(Self { arch, layers })
    }

    pub fn zeros(arch: MlpArch) -> Result<Self> {
        Self::check_arch(&arch)?;
        let layers = arch.widths.windows(2).map(|w| Dense::zeros(w[0], w[1], arch.bias)).collect();
        Ok(Self { arch, layers })
    }

    fn check_arch(arch: &MlpArch) -> Result<()> {
        if arch.widths.len() < 2 || arch.widths.contains(&0) {
            return Err(Error::ShapeMismatch(format!("invalid layer widths {:?}", arch.widths)));
        }
        Ok(())
    }

    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.arch.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.arch.widths.last().unwrap()
    }

    fn check_input(&self, x: &[f64], batch: usize) -> Result<()> {
        if x.len() != batch * self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "expected {batch} x {} inputs, got {} values",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x, batch)?.acts.pop().unwrap())
    }

    pub fn forward_cached(&self, x: &[f64], batch: usize) -> Result<MlpCache> {
        self.check_input(x, batch)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(acts.last().unwrap(), batch);
            if l < last {
                let act = self.arch.activation;
                y.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            acts.push(y);
        }
        Ok(MlpCache { batch, acts })
    }

    /// Accumulates gradients (layer order, weight then bias) into `grads`,
    /// which must be aligned with [`Mlp::parameters`]. Returns `dL/dx`.
    pub fn backward(&self, cache: &MlpCache, dy: &[f64], grads: &mut [Tensor]) -> Result<Vec<f64>> {
        if dy.len() != cache.output().len() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient has {} values, expected {}",
                dy.len(),
                cache.output().len()
            )));
        }
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.param_count();
        }
        let last = self.layers.len() - 1;
        let mut delta = dy.to_vec();
        for l in (0..self.layers.len()).rev() {
            if l < last {
                let act = self.arch.activation;
                for (d, y) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= act.derivative_from_output(*y);
                }
            }
            let layer = &self.layers[l];
            let g = &mut grads[offsets[l]..offsets[l] + layer.param_count()];
            delta = layer.backward(&cache.acts[l], &delta, cache.batch, g);
        }
        Ok(delta)
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.parameters()).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.parameters_mut()).collect()
    }
}
