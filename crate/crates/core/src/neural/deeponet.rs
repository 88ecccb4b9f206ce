use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{Field, GridSpec};

use super::dense::{Activation, Mlp, MlpArch, MlpCache};
use super::tensor::{gemm, rm, tr, Tensor};
use super::Parameterized;

/// Layer sizes of a branch/trunk operator network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeepOnetArch {
    /// Number of input samples fed to the branch net.
    pub input_len: usize,
    /// Spatial dimension of trunk coordinates.
    pub coord_dim: usize,
    pub branch_hidden: Vec<usize>,
    pub trunk_hidden: Vec<usize>,
    /// Shared latent width of branch and trunk outputs.
    pub latent: usize,
    pub activation: Activation,
    /// Biases in the branch net. Without them a zero input maps to zero.
    pub branch_bias: bool,
    pub trunk_bias: bool,
}

impl DeepOnetArch {
    /// Two hidden layers of 128 on both nets, latent width 64.
    pub fn standard(grid: GridSpec) -> Self {
        Self {
            input_len: grid.len(),
            coord_dim: grid.dim(),
            branch_hidden: vec![128, 128],
            trunk_hidden: vec![128, 128],
            latent: 64,
            activation: Activation::Tanh,
            branch_bias: false,
            trunk_bias: true,
        }
    }

    fn branch(&self) -> MlpArch {
        let mut widths = vec![self.input_len];
        widths.extend(&self.branch_hidden);
        widths.push(self.latent);
        MlpArch { widths, activation: self.activation, bias: self.branch_bias }
    }

    fn trunk(&self) -> MlpArch {
        let mut widths = vec![self.coord_dim];
        widths.extend(&self.trunk_hidden);
        widths.push(self.latent);
        MlpArch { widths, activation: self.activation, bias: self.trunk_bias }
    }
}

/// `u(x) = out_scale · ⟨branch(in_scale · f), trunk(x)⟩`.
///
/// The two scales are fixed normalization constants (not trained) that
/// bring inputs and targets to unit magnitude.
#[derive(Clone, Debug, PartialEq)]
pub struct DeepOnet {
    arch: DeepOnetArch,
    pub branch: Mlp,
    pub trunk: Mlp,
    pub in_scale: f64,
    pub out_scale: f64,
}

/// Everything [`DeepOnet::backward`] needs from a forward pass.
pub struct DeepOnetCache {
    batch: usize,
    points: usize,
    branch: MlpCache,
    trunk: MlpCache,
    output: Vec<f64>,
}

impl DeepOnetCache {
    /// `[batch, points]` predictions.
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

impl DeepOnet {
    pub fn init(arch: DeepOnetArch, rng: &mut impl Rng) -> Result<Self> {
        let branch = Mlp::init(arch.branch(), rng)?;
        let trunk = Mlp::init(arch.trunk(), rng)?;
        Ok(Self { arch, branch, trunk, in_scale: 1.0, out_scale: 1.0 })
    }

    pub fn zeros(arch: DeepOnetArch) -> Result<Self> {
        let branch = Mlp::zeros(arch.branch())?;
        let trunk = Mlp::zeros(arch.trunk())?;
        Ok(Self { arch, branch, trunk, in_scale: 1.0, out_scale: 1.0 })
    }

    pub fn arch(&self) -> &DeepOnetArch {
        &self.arch
    }

    /// Trunk outputs `[points, latent]` at the given coordinates.
    pub fn trunk_features(&self, coords: &[f64]) -> Result<Vec<f64>> {
        let d = self.arch.coord_dim;
        if coords.len() % d != 0 {
            return Err(Error::ShapeMismatch(format!("{} coordinates not divisible by dim {d}", coords.len())));
        }
        self.trunk.forward(coords, coords.len() / d)
    }

    /// Evaluates a batch `[batch, input_len]` against precomputed trunk
    /// features. Returns `[batch, points]`.
    pub fn forward_with_trunk(&self, inputs: &[f64], batch: usize, trunk: &[f64]) -> Result<Vec<f64>> {
        let p = self.arch.latent;
        let points = trunk.len() / p;
        let scaled: Vec<f64> = inputs.iter().map(|x| x * self.in_scale).collect();
        let b = self.branch.forward(&scaled, batch)?;
        let mut out = vec![0.0; batch * points];
        gemm(batch, p, points, &b, rm(p), trunk, tr(p), 0.0, &mut out);
        out.iter_mut().for_each(|v| *v *= self.out_scale);
        Ok(out)
    }

    /// Evaluates the operator for one input field at `coords`
    /// (`dim` values per point, row-major).
    pub fn forward(&self, f: &Field, coords: &[f64]) -> Result<Field> {
        if f.len() != self.arch.input_len || f.grid().dim() != self.arch.coord_dim {
            return Err(Error::GridMismatch {
                expected: format!("{}-point {}D input", self.arch.input_len, self.arch.coord_dim),
                got: f.grid().to_string(),
            });
        }
        let trunk = self.trunk_features(coords)?;
        let out = self.forward_with_trunk(f.values(), 1, &trunk)?;
        Field::new(f.grid(), out)
    }

    pub fn forward_cached(&self, inputs: &[f64], batch: usize, coords: &[f64]) -> Result<DeepOnetCache> {
        let p = self.arch.latent;
        let points = coords.len() / self.arch.coord_dim;
        let scaled: Vec<f64> = inputs.iter().map(|x| x * self.in_scale).collect();
        let branch = self.branch.forward_cached(&scaled, batch)?;
        let trunk = self.trunk.forward_cached(coords, points)?;
        let mut output = vec![0.0; batch * points];
        gemm(batch, p, points, branch.output(), rm(p), trunk.output(), tr(p), 0.0, &mut output);
        output.iter_mut().for_each(|v| *v *= self.out_scale);
        Ok(DeepOnetCache { batch, points, branch, trunk, output })
    }

    /// Accumulates gradients (branch parameters, then trunk) for the output
    /// gradient `dy` of shape `[batch, points]`.
    pub fn backward(&self, cache: &DeepOnetCache, dy: &[f64], grads: &mut [Tensor]) -> Result<()> {
        let p = self.arch.latent;
        if dy.len() != cache.batch * cache.points {
            return Err(Error::ShapeMismatch(format!(
                "output gradient has {} values, expected {}",
                dy.len(),
                cache.batch * cache.points
            )));
        }
        let dys: Vec<f64> = dy.iter().map(|v| v * self.out_scale).collect();
        let mut db = vec![0.0; cache.batch * p];
        gemm(cache.batch, cache.points, p, &dys, rm(cache.points), cache.trunk.output(), rm(p), 0.0, &mut db);
        let mut dt = vec![0.0; cache.points * p];
        gemm(cache.points, cache.batch, p, &dys, tr(cache.points), cache.branch.output(), rm(p), 0.0, &mut dt);
        let nb = self.branch.parameters().len();
        let (gb, gt) = grads.split_at_mut(nb);
        self.branch.backward(&cache.branch, &db, gb)?;
        self.trunk.backward(&cache.trunk, &dt, gt)?;
        Ok(())
    }
}

impl Parameterized for DeepOnet {
    fn parameters(&self) -> Vec<&Tensor> {
        let mut p = self.branch.parameters();
        p.extend(self.trunk.parameters());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.branch.parameters_mut();
        p.extend(self.trunk.parameters_mut());
        p
    }
}

/// A trained operator network used as a preconditioner on a fixed grid,
/// with trunk features evaluated once.
#[derive(Clone, Debug)]
pub struct NeuralSolver {
    model: DeepOnet,
    grid: GridSpec,
    trunk: Vec<f64>,
}

impl NeuralSolver {
    pub fn new(model: DeepOnet, grid: GridSpec) -> Result<Self> {
        if model.arch().input_len != grid.len() || model.arch().coord_dim != grid.dim() {
            return Err(Error::GridMismatch {
                expected: format!("{}-point {}D grid", model.arch().input_len, model.arch().coord_dim),
                got: grid.to_string(),
            });
        }
        let trunk = model.trunk_features(&grid.coordinates())?;
        Ok(Self { model, grid, trunk })
    }

    pub fn model(&self) -> &DeepOnet {
        &self.model
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Predicted correction for residual `r`.
    pub fn apply(&self, r: &Field) -> Result<Field> {
        r.check_grid(self.grid)?;
        let out = self.model.forward_with_trunk(r.values(), 1, &self.trunk)?;
        Ok(Field::from_raw(self.grid, out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::testing::{check_gradients, seeded};

    fn small_arch(grid: GridSpec) -> DeepOnetArch {
        DeepOnetArch {
            input_len: grid.len(),
            coord_dim: grid.dim(),
            branch_hidden: vec![7, 5],
            trunk_hidden: vec![6],
            latent: 4,
            activation: Activation::Tanh,
            branch_bias: false,
            trunk_bias: true,
        }
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let g = GridSpec::one_d(8).unwrap();
        let mut rng = seeded(3);
        let model = DeepOnet::init(DeepOnetArch::standard(g), &mut rng).unwrap();
        let out = model.forward(&Field::zeros(g), &g.coordinates()).unwrap();
        assert_eq!(out.max_abs(), 0.0);
        let solver = NeuralSolver::new(model, g).unwrap();
        assert_eq!(solver.apply(&Field::zeros(g)).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn mean_pooling_branch_with_constant_trunk() {
        let g = GridSpec::one_d(4).unwrap();
        let arch = DeepOnetArch {
            input_len: 4,
            coord_dim: 1,
            branch_hidden: vec![],
            trunk_hidden: vec![],
            latent: 1,
            activation: Activation::Tanh,
            branch_bias: false,
            trunk_bias: true,
        };
        let mut model = DeepOnet::zeros(arch).unwrap();
        model.branch.layers_mut()[0].weight.fill(0.25);
        model.trunk.layers_mut()[0].bias.as_mut().unwrap().fill(1.0);
        let f = Field::new(g, vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        let out = model.forward(&f, &g.coordinates()).unwrap();
        assert_eq!(out.values(), &[3.0; 4]);
    }

    #[test]
    fn wrong_grid_rejected() {
        let g = GridSpec::one_d(8).unwrap();
        let model = DeepOnet::zeros(small_arch(g)).unwrap();
        let other = GridSpec::one_d(16).unwrap();
        assert!(matches!(model.forward(&Field::zeros(other), &other.coordinates()), Err(Error::GridMismatch { .. })));
        assert!(NeuralSolver::new(model, other).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20u64 {
            let g = if seed % 2 == 0 { GridSpec::one_d(6).unwrap() } else { GridSpec::two_d(4).unwrap() };
            let mut rng = seeded(100 + seed);
            let mut model = DeepOnet::init(small_arch(g), &mut rng).unwrap();
            model.in_scale = 1.7;
            model.out_scale = 0.6;
            let batch = 2;
            let coords = g.coordinates();
            let x: Vec<f64> = (0..batch * g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let target: Vec<f64> = (0..batch * g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let loss = |m: &DeepOnet| -> f64 {
                let c = m.forward_cached(&x, batch, &coords).unwrap();
                c.output().iter().zip(&target).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum()
            };
            let cache = model.forward_cached(&x, batch, &coords).unwrap();
            let dy: Vec<f64> = cache.output().iter().zip(&target).map(|(a, b)| a - b).collect();
            let mut grads: Vec<Tensor> = model.parameters().into_iter().map(Tensor::zeros_like).collect();
            model.backward(&cache, &dy, &mut grads).unwrap();
            check_gradients(&mut model, |m| m.parameters_mut(), &grads, loss, 1e-5);
        }
    }

    #[test]
    fn cached_trunk_agrees_with_direct_forward() {
        let g = GridSpec::two_d(4).unwrap();
        let mut rng = seeded(9);
        let model = DeepOnet::init(small_arch(g), &mut rng).unwrap();
        let f = Field::from_fn(g, |x| x[0] - x[1]);
        let direct = model.forward(&f, &g.coordinates()).unwrap();
        let cached = NeuralSolver::new(model, g).unwrap().apply(&f).unwrap();
        assert_eq!(direct, cached);
    }
}
