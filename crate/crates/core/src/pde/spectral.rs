//! Unitary discrete Fourier transforms on periodic grids and the diagonal
//! form of circulant operators.
//!
//! Both directions carry a `1/√N` factor, so `‖v‖² = Σ|v̂_k|²`. Modes are
//! stored in FFT order (`k = 0, 1, …, n-1` per axis, row-major in 2D).

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

use super::{DiscreteOperator, EquationKind, Field, GridSpec};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// In-place unnormalized transform along every axis, then scaled by `1/√N`.
fn transform(grid: GridSpec, data: &mut [Complex64], inverse: bool) {
    let n = grid.n();
    let fft = plan(n, inverse);
    match grid.dim() {
        1 => fft.process(data),
        _ => {
            // Rows are contiguous.
            fft.process(data);
            let mut col = vec![Complex64::new(0.0, 0.0); n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = data[i * n + j];
                }
                fft.process(&mut col);
                for i in 0..n {
                    data[i * n + j] = col[i];
                }
            }
        }
    }
    let scale = 1.0 / (grid.len() as f64).sqrt();
    for c in data.iter_mut() {
        *c *= scale;
    }
}

/// Forward unitary DFT of a real field.
pub fn dft(v: &Field) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = v.values().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    transform(v.grid(), &mut data, false);
    data
}

/// Inverse unitary DFT, keeping the real part. Callers are responsible for
/// Hermitian symmetry of `modes` when an exactly real result is expected.
pub fn idft(grid: GridSpec, modes: &[Complex64]) -> Result<Field> {
    Ok(Field::from_raw(grid, idft_complex(grid, modes)?.into_iter().map(|c| c.re).collect()))
}

/// Inverse unitary DFT without discarding the imaginary part.
pub fn idft_complex(grid: GridSpec, modes: &[Complex64]) -> Result<Vec<Complex64>> {
    if modes.len() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), got: modes.len() });
    }
    let mut data = modes.to_vec();
    transform(grid, &mut data, true);
    Ok(data)
}

/// Storage index of the mode with wavenumbers `-k` (its complex conjugate
/// partner for real fields).
pub fn conjugate_index(grid: GridSpec, idx: usize) -> usize {
    let n = grid.n();
    match grid.dim() {
        1 => (n - idx) % n,
        _ => {
            let (a, b) = (idx / n, idx % n);
            ((n - a) % n) * n + (n - b) % n
        }
    }
}

/// Integer wavenumbers of the mode stored at `idx`.
pub fn wavenumbers(grid: GridSpec, idx: usize) -> [i64; 2] {
    let n = grid.n();
    match grid.dim() {
        1 => [grid.wavenumber(idx), 0],
        _ => [grid.wavenumber(idx / n), grid.wavenumber(idx % n)],
    }
}

/// Eigenvalues of a circulant operator, indexed like [`dft`] output.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDecomposition {
    grid: GridSpec,
    kind: EquationKind,
    eigenvalues: Vec<f64>,
}

impl SpectralDecomposition {
    pub fn of(op: &DiscreteOperator) -> Self {
        Self { grid: op.grid(), kind: op.kind(), eigenvalues: op.eigenvalues() }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn kind(&self) -> EquationKind {
        self.kind
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, idx: usize) -> f64 {
        self.eigenvalues[idx]
    }

    /// Applies `g(λ_k)` to every mode of `v`.
    pub fn apply_function(&self, v: &Field, g: impl Fn(f64) -> f64) -> Result<Field> {
        v.check_grid(self.grid)?;
        let mut modes = dft(v);
        for (c, &lam) in modes.iter_mut().zip(&self.eigenvalues) {
            *c *= g(lam);
        }
        idft(self.grid, &modes)
    }

    /// Minimum-norm solution of `L u = f`; zero-eigenvalue modes are dropped.
    pub fn solve(&self, f: &Field) -> Result<Field> {
        self.apply_function(f, |lam| if lam == 0.0 { 0.0 } else { 1.0 / lam })
    }
}

impl DiscreteOperator {
    pub fn spectrum(&self) -> SpectralDecomposition {
        SpectralDecomposition::of(self)
    }

    /// Exact solution by spectral inversion. For the singular periodic
    /// Poisson problem the zero-mean (minimum-norm) solution is returned.
    pub fn reference_solution(&self, f: &Field) -> Result<Field> {
        f.check_grid(self.grid())?;
        if self.is_singular() {
            let mean = f.mean();
            if mean.abs() > 1e-8 {
                return Err(Error::IncompatibleRhs { mean });
            }
        }
        self.spectrum().solve(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use std::f64::consts::PI;

    fn random_field(grid: GridSpec, seed: u64) -> Field {
        let mut s = seed.wrapping_add(0x9E3779B97F4A7C15);
        Field::new(
            grid,
            (0..grid.len())
                .map(|_| {
                    s ^= s << 13;
                    s ^= s >> 7;
                    s ^= s << 17;
                    (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_and_parseval() {
        for (dim, n) in [(1, 4), (1, 13), (1, 64), (2, 4), (2, 9), (2, 16)] {
            let g = GridSpec::new(dim, n).unwrap();
            let v = random_field(g, n as u64 * 7 + dim as u64);
            let modes = dft(&v);
            let energy: f64 = modes.iter().map(|c| c.norm_sqr()).sum();
            assert!((energy - v.norm_sq()).abs() < 1e-9 * v.norm_sq());
            let back = idft_complex(g, &modes).unwrap();
            for (b, x) in back.iter().zip(v.values()) {
                assert!((b.re - x).abs() < 1e-10 && b.im.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn constant_field_is_pure_dc() {
        let g = GridSpec::two_d(6).unwrap();
        let modes = dft(&Field::constant(g, 3.0));
        assert!((modes[0].re - 3.0 * 6.0).abs() < 1e-12);
        assert!(modes[1..].iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn cosine_energy_at_plus_minus_k() {
        let n = 16;
        let g = GridSpec::one_d(n).unwrap();
        let v = Field::from_fn(g, |x| (2.0 * PI * 3.0 * x[0]).cos());
        let modes = dft(&v);
        for (k, c) in modes.iter().enumerate() {
            if k == 3 || k == n - 3 {
                assert!(c.norm() > 1.0);
            } else {
                assert!(c.norm() < 1e-12, "mode {k}");
            }
        }
        assert_eq!(conjugate_index(g, 3), n - 3);
    }

    #[test]
    fn spectrum_1d_n4() {
        let op = DiscreteOperator::new(GridSpec::one_d(4).unwrap(), EquationKind::Poisson).unwrap();
        let s = op.spectrum();
        let expected = [0.0, 32.0, 64.0, 32.0];
        for (a, b) in s.eigenvalues().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut dense: Vec<f64> = op.to_dense().symmetric_eigenvalues().iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        let mut ours = s.eigenvalues().to_vec();
        ours.sort_by(f64::total_cmp);
        for (a, b) in dense.iter().zip(&ours) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn helmholtz_shift_moves_spectrum() {
        let g = GridSpec::two_d(5).unwrap();
        let p = DiscreteOperator::new(g, EquationKind::Poisson).unwrap().spectrum();
        let h = DiscreteOperator::new(g, EquationKind::Helmholtz { a2: 1.0 }).unwrap().spectrum();
        for (a, b) in p.eigenvalues().iter().zip(h.eigenvalues()) {
            assert!((a - 1.0 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn spectrum_diagonalizes_dense_matrix() {
        for (dim, n) in [(1, 7), (1, 16), (2, 4), (2, 6)] {
            let g = GridSpec::new(dim, n).unwrap();
            let op = DiscreteOperator::new(g, EquationKind::Helmholtz { a2: 0.5 }).unwrap();
            let m = op.to_dense().map(|x| num_complex::Complex64::new(x, 0.0));
            let s = op.spectrum();
            for idx in 0..g.len() {
                let mut e = vec![Complex64::new(0.0, 0.0); g.len()];
                e[idx] = Complex64::new(1.0, 0.0);
                let col = DVector::from_vec(idft_complex(g, &e).unwrap());
                let diff = &m * &col - col.scale(1.0).map(|c| c * s.eigenvalue(idx));
                assert!(diff.norm() < 1e-8, "mode {idx}: {}", diff.norm());
            }
        }
    }

    #[test]
    fn reference_solution_inverts_eigenmode() {
        let n = 16;
        let g = GridSpec::one_d(n).unwrap();
        let op = DiscreteOperator::new(g, EquationKind::Poisson).unwrap();
        let lam1 = (2.0 - 2.0 * (2.0 * PI / n as f64).cos()) * (n * n) as f64;
        let u = Field::from_fn(g, |x| (2.0 * PI * x[0]).cos());
        let got = op.reference_solution(&u.scaled(lam1)).unwrap();
        assert!(got.sub(&u).max_abs() < 1e-12);
        assert_eq!(op.reference_solution(&Field::zeros(g)).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn reference_solution_matches_pseudoinverse() {
        let g = GridSpec::one_d(16).unwrap();
        let op = DiscreteOperator::new(g, EquationKind::Poisson).unwrap();
        let pinv = op.to_dense().pseudo_inverse(1e-10).unwrap();
        for seed in 0..5 {
            let f = super::super::project_zero_mean(&random_field(g, seed));
            let u = op.reference_solution(&f).unwrap();
            let oracle = &pinv * DVector::from_column_slice(f.values());
            for (a, b) in u.values().iter().zip(oracle.iter()) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn reference_solution_residual_small() {
        for (dim, n, kind) in [
            (1, 33, EquationKind::Poisson),
            (2, 8, EquationKind::Poisson),
            (1, 16, EquationKind::Helmholtz { a2: 1.0 }),
            (2, 8, EquationKind::Helmholtz { a2: 1.0 }),
        ] {
            let g = GridSpec::new(dim, n).unwrap();
            let op = DiscreteOperator::new(g, kind).unwrap();
            for seed in 0..100 {
                let mut f = random_field(g, seed);
                if op.is_singular() {
                    f = super::super::project_zero_mean(&f);
                }
                let u = op.reference_solution(&f).unwrap();
                let r = op.residual(&u, &f).unwrap();
                assert!(r.norm() < 1e-9 * f.norm());
            }
        }
    }

    #[test]
    fn incompatible_rhs_rejected() {
        let g = GridSpec::one_d(8).unwrap();
        let op = DiscreteOperator::new(g, EquationKind::Poisson).unwrap();
        assert!(matches!(op.reference_solution(&Field::constant(g, 1.0)), Err(Error::IncompatibleRhs { .. })));
        let helm = DiscreteOperator::new(g, EquationKind::Helmholtz { a2: 1.0 }).unwrap();
        let u = helm.reference_solution(&Field::constant(g, 1.0)).unwrap();
        // Constant mode eigenvalue is -a².
        assert!(u.sub(&Field::constant(g, -1.0)).max_abs() < 1e-12);
    }

    #[test]
    fn wavenumbers_and_conjugates_2d() {
        let g = GridSpec::two_d(4).unwrap();
        assert_eq!(wavenumbers(g, 1 * 4 + 3), [1, -1]);
        assert_eq!(conjugate_index(g, 1 * 4 + 3), 3 * 4 + 1);
        let _ = DMatrix::<f64>::zeros(1, 1);
    }
}
