use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::dense::Dense;
use super::tensor::Tensor;
use super::Parameterized;

/// Sizes of the recurrent router.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouterArch {
    pub input_dim: usize,
    pub encoder_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub num_solvers: usize,
}

impl RouterArch {
    /// 64-wide encoder, three 64-unit LSTM layers.
    pub fn standard(input_dim: usize, num_solvers: usize) -> Self {
        Self { input_dim, encoder_dim: 64, hidden: 64, layers: 3, num_solvers }
    }
}

/// One LSTM layer. Gate blocks are stacked in the order input, forget,
/// cell candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer {
    /// `[4H, in]`
    pub w_ih: Tensor,
    /// `[4H, H]`
    pub w_hh: Tensor,
    /// `[4H]`
    pub bias: Tensor,
}

impl LstmLayer {
    fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            w_ih: Tensor::uniform(vec![4 * hidden, input], bound, rng),
            w_hh: Tensor::uniform(vec![4 * hidden, hidden], bound, rng),
            bias: Tensor::uniform(vec![4 * hidden], bound, rng),
        }
    }

    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Tensor::zeros(vec![4 * hidden, input]),
            w_hh: Tensor::zeros(vec![4 * hidden, hidden]),
            bias: Tensor::zeros(vec![4 * hidden]),
        }
    }
}

/// Hidden and cell vectors for every layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

/// Values saved by one [`LstmRouter::step`] for backpropagation.
#[derive(Clone, Debug)]
pub struct StepCache {
    input: Vec<f64>,
    encoded: Vec<f64>,
    layers: Vec<LayerCache>,
}

#[derive(Clone, Debug)]
struct LayerCache {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Gate activations `[i, f, g, o]`, each of length H.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `y += W x` for row-major `W` with `x.len()` columns.
fn matvec_acc(w: &[f64], x: &[f64], y: &mut [f64]) {
    let cols = x.len();
    for (row, out) in w.chunks_exact(cols).zip(y.iter_mut()) {
        *out += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `x += Wᵀ d` for row-major `W` with `x.len()` columns.
fn matvec_t_acc(w: &[f64], d: &[f64], x: &mut [f64]) {
    let cols = x.len();
    for (row, dv) in w.chunks_exact(cols).zip(d) {
        if *dv != 0.0 {
            for (xi, wi) in x.iter_mut().zip(row) {
                *xi += dv * wi;
            }
        }
    }
}

/// `G += d ⊗ x`
fn outer_acc(g: &mut [f64], d: &[f64], x: &[f64]) {
    let cols = x.len();
    for (row, dv) in g.chunks_exact_mut(cols).zip(d) {
        if *dv != 0.0 {
            for (gi, xi) in row.iter_mut().zip(x) {
                *gi += dv * xi;
            }
        }
    }
}

/// Dense tanh encoder, stacked LSTM and a linear head producing one score
/// per solver.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmRouter {
    arch: RouterArch,
    pub encoder: Dense,
    pub layers: Vec<LstmLayer>,
    pub head: Dense,
}

impl LstmRouter {
    pub fn init(arch: RouterArch, rng: &mut impl Rng) -> Result<Self> {
        Self::check_arch(&arch)?;
        let encoder = Dense::init(arch.input_dim, arch.encoder_dim, true, rng);
        let layers = (0..arch.layers)
            .map(|l| LstmLayer::init(if l == 0 { arch.encoder_dim } else { arch.hidden }, arch.hidden, rng))
            .collect();
        let head = Dense::init(arch.hidden, arch.num_solvers, true, rng);
        Ok(Self { arch, encoder, layers, head })
    }

    pub fn zeros(arch: RouterArch) -> Result<Self> {
        Self::check_arch(&arch)?;
        let encoder = Dense::zeros(arch.input_dim, arch.encoder_dim, true);
        let layers = (0..arch.layers)
            .map(|l| LstmLayer::zeros(if l == 0 { arch.encoder_dim } else { arch.hidden }, arch.hidden))
            .collect();
        let head = Dense::zeros(arch.hidden, arch.num_solvers, true);
        Ok(Self { arch, encoder, layers, head })
    }

    fn check_arch(arch: &RouterArch) -> Result<()> {
        if arch.input_dim == 0 || arch.encoder_dim == 0 || arch.hidden == 0 || arch.layers == 0 || arch.num_solvers == 0
        {
            return Err(Error::ShapeMismatch(format!("invalid router sizes {arch:?}")));
        }
        Ok(())
    }

    pub fn arch(&self) -> &RouterArch {
        &self.arch
    }

    pub fn initial_state(&self) -> LstmState {
        let h = self.arch.hidden;
        LstmState { h: vec![vec![0.0; h]; self.arch.layers], c: vec![vec![0.0; h]; self.arch.layers] }
    }

    fn check_state(&self, state: &LstmState) -> Result<()> {
        let ok = state.h.len() == self.arch.layers
            && state.c.len() == self.arch.layers
            && state.h.iter().chain(&state.c).all(|v| v.len() == self.arch.hidden);
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch("recurrent state does not match router layers".into()))
        }
    }

    /// Advances the recurrence by one input and returns the solver scores.
    pub fn step(&self, x: &[f64], state: &LstmState) -> Result<(Vec<f64>, LstmState, StepCache)> {
        if x.len() != self.arch.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "router expects {} features, got {}",
                self.arch.input_dim,
                x.len()
            )));
        }
        self.check_state(state)?;
        let hdim = self.arch.hidden;
        let encoded: Vec<f64> = self.encoder.forward(x, 1).into_iter().map(f64::tanh).collect();
        let mut layer_in = encoded.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut next = LstmState { h: Vec::new(), c: Vec::new() };
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.bias.data().to_vec();
            matvec_acc(layer.w_ih.data(), &layer_in, &mut z);
            matvec_acc(layer.w_hh.data(), &state.h[l], &mut z);
            let mut gates = vec![0.0; 4 * hdim];
            for k in 0..hdim {
                gates[k] = sigmoid(z[k]);
                gates[hdim + k] = sigmoid(z[hdim + k]);
                gates[2 * hdim + k] = z[2 * hdim + k].tanh();
                gates[3 * hdim + k] = sigmoid(z[3 * hdim + k]);
            }
            let c: Vec<f64> =
                (0..hdim).map(|k| gates[hdim + k] * state.c[l][k] + gates[k] * gates[2 * hdim + k]).collect();
            let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
            let h: Vec<f64> = (0..hdim).map(|k| gates[3 * hdim + k] * tanh_c[k]).collect();
            next.h.push(h.clone());
            next.c.push(c);
            caches.push(LayerCache {
                h_prev: state.h[l].clone(),
                c_prev: state.c[l].clone(),
                gates,
                tanh_c,
                h: h.clone(),
            });
            layer_in = h;
        }
        let logits = self.head.forward(&layer_in, 1);
        Ok((logits, next, StepCache { input: x.to_vec(), encoded, layers: caches }))
    }

    /// Backpropagation through a contiguous run of steps. `dlogits[t]` is
    /// the loss gradient for the scores of `steps[t]`. Gradients reaching
    /// the state that entered `steps[0]` are discarded.
    pub fn backward(&self, steps: &[StepCache], dlogits: &[Vec<f64>], grads: &mut [Tensor]) -> Result<()> {
        if steps.len() != dlogits.len() {
            return Err(Error::LengthMismatch { expected: steps.len(), got: dlogits.len() });
        }
        let hdim = self.arch.hidden;
        let nl = self.layers.len();
        let (g_enc, rest) = grads.split_at_mut(2);
        let (g_lstm, g_head) = rest.split_at_mut(3 * nl);
        let mut dh_next = vec![vec![0.0; hdim]; nl];
        let mut dc_next = vec![vec![0.0; hdim]; nl];
        for (cache, dlog) in steps.iter().zip(dlogits).rev() {
            if dlog.len() != self.arch.num_solvers {
                return Err(Error::ShapeMismatch(format!("score gradient has {} entries", dlog.len())));
            }
            let top = &cache.layers[nl - 1].h;
            let mut dh = self.head.backward(top, dlog, 1, g_head);
            for l in (0..nl).rev() {
                let lc = &cache.layers[l];
                let layer = &self.layers[l];
                for k in 0..hdim {
                    dh[k] += dh_next[l][k];
                }
                let (gi, gf, gg, go) = (
                    &lc.gates[..hdim],
                    &lc.gates[hdim..2 * hdim],
                    &lc.gates[2 * hdim..3 * hdim],
                    &lc.gates[3 * hdim..],
                );
                let mut dz = vec![0.0; 4 * hdim];
                let mut dc_prev = vec![0.0; hdim];
                for k in 0..hdim {
                    let dc = dc_next[l][k] + dh[k] * go[k] * (1.0 - lc.tanh_c[k] * lc.tanh_c[k]);
                    let d_o = dh[k] * lc.tanh_c[k];
                    let d_i = dc * gg[k];
                    let d_g = dc * gi[k];
                    let d_f = dc * lc.c_prev[k];
                    dc_prev[k] = dc * gf[k];
                    dz[k] = d_i * gi[k] * (1.0 - gi[k]);
                    dz[hdim + k] = d_f * gf[k] * (1.0 - gf[k]);
                    dz[2 * hdim + k] = d_g * (1.0 - gg[k] * gg[k]);
                    dz[3 * hdim + k] = d_o * go[k] * (1.0 - go[k]);
                }
                let layer_in = if l == 0 { &cache.encoded } else { &cache.layers[l - 1].h };
                let g = &mut g_lstm[3 * l..3 * l + 3];
                outer_acc(g[0].data_mut(), &dz, layer_in);
                outer_acc(g[1].data_mut(), &dz, &lc.h_prev);
                for (b, d) in g[2].data_mut().iter_mut().zip(&dz) {
                    *b += d;
                }
                let mut dx = vec![0.0; layer_in.len()];
                matvec_t_acc(layer.w_ih.data(), &dz, &mut dx);
                let mut dh_prev = vec![0.0; hdim];
                matvec_t_acc(layer.w_hh.data(), &dz, &mut dh_prev);
                dh_next[l] = dh_prev;
                dc_next[l] = dc_prev;
                dh = dx;
            }
            let denc: Vec<f64> = dh.iter().zip(&cache.encoded).map(|(d, e)| d * (1.0 - e * e)).collect();
            self.encoder.backward(&cache.input, &denc, 1, g_enc);
        }
        Ok(())
    }
}

impl Parameterized for LstmRouter {
    fn parameters(&self) -> Vec<&Tensor> {
        let mut p = self.encoder.parameters();
        for l in &self.layers {
            p.extend([&l.w_ih, &l.w_hh, &l.bias]);
        }
        p.extend(self.head.parameters());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.encoder.parameters_mut();
        for l in &mut self.layers {
            p.extend([&mut l.w_ih, &mut l.w_hh, &mut l.bias]);
        }
        p.extend(self.head.parameters_mut());
        p
    }
}
