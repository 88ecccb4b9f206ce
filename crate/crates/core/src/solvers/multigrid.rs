//! Geometric multigrid on periodic grids: full-weighting restriction,
//! linear interpolation, damped-Jacobi smoothing and an exact spectral
//! solve on the coarsest level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{DiscreteOperator, Field, GridSpec, SpectralDecomposition};

/// V-cycle parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgConfig {
    /// Number of grids including the finest.
    pub levels: usize,
    pub pre_smooth: usize,
    pub post_smooth: usize,
    /// Damping of the Jacobi smoother.
    pub omega: f64,
    /// Points per axis on the coarsest grid.
    pub coarsest_n: usize,
}

impl MgConfig {
    /// Three pre- and post-smoothing sweeps with ω = 2/3, coarsening until
    /// the grid has `coarsest_n` points per axis (or cannot be halved).
    pub fn for_grid(n: usize, coarsest_n: usize) -> Result<Self> {
        if n % 2 != 0 {
            return Err(Error::OddGrid(n));
        }
        let mut levels = 1;
        let mut m = n;
        while m > coarsest_n && m % 2 == 0 && m / 2 >= 2 {
            m /= 2;
            levels += 1;
        }
        Ok(Self { levels, pre_smooth: 3, post_smooth: 3, omega: 2.0 / 3.0, coarsest_n: m })
    }

    fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::InvalidParameter(format!("multigrid needs >= 2 levels, got {}", self.levels)));
        }
        if self.coarsest_n < 2 {
            return Err(Error::InvalidParameter(format!("coarsest_n must be >= 2, got {}", self.coarsest_n)));
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::InvalidParameter(format!("smoother omega {} outside (0, 1]", self.omega)));
        }
        Ok(())
    }
}

/// Rediscretized operators from fine to coarse, halving `n` each level.
#[derive(Clone, Debug)]
pub struct OperatorHierarchy {
    levels: Vec<DiscreteOperator>,
    coarsest: SpectralDecomposition,
}

impl OperatorHierarchy {
    pub fn new(fine: &DiscreteOperator, cfg: &MgConfig) -> Result<Self> {
        cfg.validate()?;
        let n = fine.grid().n();
        let factor = 1usize << (cfg.levels - 1);
        if n % factor != 0 || n / factor != cfg.coarsest_n {
            return Err(Error::HierarchyMismatch(format!(
                "n = {n} with {} levels does not reach coarsest n = {}",
                cfg.levels, cfg.coarsest_n
            )));
        }
        let mut levels = vec![fine.clone()];
        for _ in 1..cfg.levels {
            let next = levels.last().unwrap().coarsened()?;
            levels.push(next);
        }
        let coarsest = levels.last().unwrap().spectrum();
        Ok(Self { levels, coarsest })
    }

    pub fn fine(&self) -> &DiscreteOperator {
        &self.levels[0]
    }

    pub fn levels(&self) -> &[DiscreteOperator] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Strided view of `count` parallel lines inside a row-major buffer: line
/// `l`, element `k` lives at `l * line + k * elem`.
#[derive(Clone, Copy)]
struct Lines {
    line: usize,
    elem: usize,
}

impl Lines {
    fn at(self, l: usize, k: usize) -> usize {
        l * self.line + k * self.elem
    }
}

/// Applies the periodic `[1, 2, 1]/4` stencil along lines of length `n`.
fn restrict_lines(src: &[f64], s: Lines, n: usize, count: usize, out: &mut [f64], o: Lines) {
    for l in 0..count {
        for i in 0..n / 2 {
            let c = 2 * i;
            let left = src[s.at(l, (c + n - 1) % n)];
            let right = src[s.at(l, (c + 1) % n)];
            out[o.at(l, i)] = 0.25 * (left + 2.0 * src[s.at(l, c)] + right);
        }
    }
}

/// Linear interpolation along lines of length `m` onto lines of length `2m`.
fn prolong_lines(src: &[f64], s: Lines, m: usize, count: usize, out: &mut [f64], o: Lines) {
    for l in 0..count {
        for i in 0..m {
            let here = src[s.at(l, i)];
            out[o.at(l, 2 * i)] = here;
            out[o.at(l, 2 * i + 1)] = 0.5 * (here + src[s.at(l, (i + 1) % m)]);
        }
    }
}

/// Full-weighting restriction to the grid with half the points per axis.
pub fn restrict(v: &Field) -> Result<Field> {
    let g = v.grid();
    let coarse = g.coarsened()?;
    let n = g.n();
    let m = n / 2;
    let x = v.values();
    let out = match g.dim() {
        1 => {
            let mut out = vec![0.0; m];
            restrict_lines(x, Lines { line: 0, elem: 1 }, n, 1, &mut out, Lines { line: 0, elem: 1 });
            out
        }
        _ => {
            // Rows (n × n -> n × m), then columns (n × m -> m × m).
            let mut tmp = vec![0.0; n * m];
            restrict_lines(x, Lines { line: n, elem: 1 }, n, n, &mut tmp, Lines { line: m, elem: 1 });
            let mut out = vec![0.0; m * m];
            restrict_lines(&tmp, Lines { line: 1, elem: m }, n, m, &mut out, Lines { line: 1, elem: m });
            out
        }
    };
    Ok(Field::from_raw(coarse, out))
}

/// Piecewise-linear interpolation to the grid with twice the points per axis.
pub fn prolong(v: &Field) -> Field {
    let g = v.grid();
    let fine = g.refined();
    let m = g.n();
    let n = 2 * m;
    let x = v.values();
    let out = match g.dim() {
        1 => {
            let mut out = vec![0.0; n];
            prolong_lines(x, Lines { line: 0, elem: 1 }, m, 1, &mut out, Lines { line: 0, elem: 1 });
            out
        }
        _ => {
            // Rows (m × m -> m × n), then columns (m × n -> n × n).
            let mut tmp = vec![0.0; m * n];
            prolong_lines(x, Lines { line: m, elem: 1 }, m, m, &mut tmp, Lines { line: n, elem: 1 });
            let mut out = vec![0.0; n * n];
            prolong_lines(&tmp, Lines { line: 1, elem: n }, m, n, &mut out, Lines { line: 1, elem: n });
            out
        }
    };
    Field::from_raw(fine, out)
}

fn smooth(op: &DiscreteOperator, x: &mut Field, r: &Field, omega: f64, sweeps: usize) {
    let scale = omega / op.diagonal();
    for _ in 0..sweeps {
        let res = op.residual_unchecked(x, r);
        x.axpy(scale, &res);
    }
}

fn cycle(hier: &OperatorHierarchy, cfg: &MgConfig, level: usize, r: &Field) -> Result<Field> {
    if level + 1 == hier.levels.len() {
        return hier.coarsest.solve(r);
    }
    let op = &hier.levels[level];
    let mut x = Field::zeros(op.grid());
    smooth(op, &mut x, r, cfg.omega, cfg.pre_smooth);
    let rc = restrict(&op.residual_unchecked(&x, r))?;
    let ec = cycle(hier, cfg, level + 1, &rc)?;
    x = x.add(&prolong(&ec));
    smooth(op, &mut x, r, cfg.omega, cfg.post_smooth);
    Ok(x)
}

/// One V-cycle from a zero initial guess: an approximation to `L⁻¹ r`.
pub fn vcycle_apply(hier: &OperatorHierarchy, cfg: &MgConfig, r: &Field) -> Result<Field> {
    if hier.levels.len() != cfg.levels {
        return Err(Error::HierarchyMismatch(format!(
            "hierarchy has {} levels, config expects {}",
            hier.levels.len(),
            cfg.levels
        )));
    }
    r.check_grid(hier.fine().grid())?;
    cycle(hier, cfg, 0, r)
}

/// Grid of the coarsest level a config reaches from `grid`.
pub fn coarsest_grid(grid: GridSpec, cfg: &MgConfig) -> Result<GridSpec> {
    let mut g = grid;
    for _ in 1..cfg.levels {
        g = g.coarsened()?;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{project_zero_mean, EquationKind};
    use nalgebra::{DMatrix, DVector};
    use std::f64::consts::PI;

    fn op1(n: usize) -> DiscreteOperator {
        DiscreteOperator::new(GridSpec::one_d(n).unwrap(), EquationKind::Poisson).unwrap()
    }

    fn matrix_of(grid_in: GridSpec, rows: usize, f: impl Fn(&Field) -> Field) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(rows, grid_in.len());
        for j in 0..grid_in.len() {
            let col = f(&Field::basis(grid_in, j));
            for (i, v) in col.values().iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    #[test]
    fn restriction_n4_matches_hand_matrix() {
        let g = GridSpec::one_d(4).unwrap();
        let r = matrix_of(g, 2, |v| restrict(v).unwrap());
        let expected = DMatrix::from_row_slice(2, 4, &[0.5, 0.25, 0.0, 0.25, 0.0, 0.25, 0.5, 0.25]);
        assert_eq!(r, expected);
    }

    #[test]
    fn prolong_is_twice_restrict_transpose_1d() {
        for n in [4, 8, 16] {
            let g = GridSpec::one_d(n).unwrap();
            let r = matrix_of(g, n / 2, |v| restrict(v).unwrap());
            let p = matrix_of(g.coarsened().unwrap(), n, prolong);
            assert!((p - r.transpose() * 2.0).abs().max() < 1e-15);
        }
    }

    #[test]
    fn transfers_preserve_constants() {
        for g in [GridSpec::one_d(8).unwrap(), GridSpec::two_d(8).unwrap()] {
            let c = Field::constant(g, 1.5);
            assert!(restrict(&c).unwrap().sub(&Field::constant(g.coarsened().unwrap(), 1.5)).max_abs() < 1e-15);
            let cc = Field::constant(g.coarsened().unwrap(), -2.0);
            assert!(prolong(&cc).sub(&Field::constant(g, -2.0)).max_abs() < 1e-15);
        }
        assert!(matches!(restrict(&Field::zeros(GridSpec::one_d(9).unwrap())), Err(Error::OddGrid(9))));
    }

    #[test]
    fn restrict_prolong_defect_is_second_order() {
        let mut defects = Vec::new();
        for m in [8, 16, 32] {
            let g = GridSpec::one_d(m).unwrap();
            let v = Field::from_fn(g, |x| (2.0 * PI * x[0]).cos());
            let back = restrict(&prolong(&v)).unwrap();
            defects.push(back.sub(&v).max_abs());
        }
        // Doubling resolution should cut the defect by about 4.
        for w in defects.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 3.8 && ratio < 4.2, "ratio {ratio}");
        }
    }

    #[test]
    fn tensor_product_2d() {
        let g = GridSpec::two_d(8).unwrap();
        let r1 = matrix_of(GridSpec::one_d(8).unwrap(), 4, |v| restrict(v).unwrap());
        let p1 = matrix_of(GridSpec::one_d(4).unwrap(), 8, prolong);
        let r2 = matrix_of(g, 16, |v| restrict(v).unwrap());
        let p2 = matrix_of(g.coarsened().unwrap(), 64, prolong);
        assert!((r2 - r1.kronecker(&r1)).abs().max() < 1e-15);
        assert!((p2 - p1.kronecker(&p1)).abs().max() < 1e-15);
    }

    #[test]
    fn default_config_levels() {
        let cfg = MgConfig::for_grid(64, 4).unwrap();
        assert_eq!((cfg.levels, cfg.coarsest_n), (5, 4));
        let cfg = MgConfig::for_grid(12, 4).unwrap();
        assert_eq!((cfg.levels, cfg.coarsest_n), (3, 3));
        assert!(MgConfig::for_grid(65, 4).is_err());
        let bad = MgConfig { levels: 3, ..MgConfig::for_grid(64, 4).unwrap() };
        assert!(matches!(OperatorHierarchy::new(&op1(64), &bad), Err(Error::HierarchyMismatch(_))));
    }

    #[test]
    fn zero_residual_gives_zero() {
        let op = op1(16);
        let cfg = MgConfig::for_grid(16, 4).unwrap();
        let h = OperatorHierarchy::new(&op, &cfg).unwrap();
        assert_eq!(vcycle_apply(&h, &cfg, &Field::zeros(op.grid())).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn two_grid_matches_explicit_formula() {
        for kind in [EquationKind::Poisson, EquationKind::Helmholtz { a2: 1.0 }] {
            let g = GridSpec::one_d(8).unwrap();
            let op = DiscreteOperator::new(g, kind).unwrap();
            let cfg = MgConfig { levels: 2, pre_smooth: 3, post_smooth: 3, omega: 2.0 / 3.0, coarsest_n: 4 };
            let h = OperatorHierarchy::new(&op, &cfg).unwrap();
            let a = op.to_dense();
            let id = DMatrix::<f64>::identity(8, 8);
            let s = &id - &a * (cfg.omega / op.diagonal());
            let rm = matrix_of(g, 4, |v| restrict(v).unwrap());
            let pm = matrix_of(g.coarsened().unwrap(), 8, prolong);
            let ac = op.coarsened().unwrap().to_dense().pseudo_inverse(1e-12).unwrap();
            let c2g = &pm * ac * &rm;
            let s3 = &s * &s * &s;
            let expected = &s3 * (&id - c2g * &a) * &s3;
            let got = matrix_of(g, 8, |e| {
                let r = op.apply(e).unwrap();
                e.sub(&vcycle_apply(&h, &cfg, &r).unwrap())
            });
            assert!((got - expected).abs().max() < 1e-8);
        }
    }

    #[test]
    fn vcycle_contracts_strongly() {
        let n = 64;
        let op = op1(n);
        let cfg = MgConfig::for_grid(n, 4).unwrap();
        let h = OperatorHierarchy::new(&op, &cfg).unwrap();
        let mut s = 12345u64;
        for _ in 0..10 {
            let vals = (0..n)
                .map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                    (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                })
                .collect();
            let e = project_zero_mean(&Field::new(op.grid(), vals).unwrap());
            let next = e.sub(&vcycle_apply(&h, &cfg, &op.apply(&e).unwrap()).unwrap());
            let factor = project_zero_mean(&next).norm() / e.norm();
            assert!(factor < 0.2, "factor {factor}");
        }
        let _ = DVector::<f64>::zeros(1);
    }

    #[test]
    fn vcycle_2d_contracts() {
        let g = GridSpec::two_d(16).unwrap();
        let op = DiscreteOperator::new(g, EquationKind::Poisson).unwrap();
        let cfg = MgConfig::for_grid(16, 4).unwrap();
        let h = OperatorHierarchy::new(&op, &cfg).unwrap();
        let e = project_zero_mean(&Field::from_fn(g, |x| (x[0] * 37.0).sin() * (x[1] * 11.0 + 0.3).cos()));
        let next = e.sub(&vcycle_apply(&h, &cfg, &op.apply(&e).unwrap()).unwrap());
        assert!(project_zero_mean(&next).norm() < 0.2 * e.norm());
    }
}
