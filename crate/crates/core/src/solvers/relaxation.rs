//! Pointwise relaxation preconditioners.

use crate::error::{Error, Result};
use crate::pde::{DiscreteOperator, Field};

/// Damped Jacobi correction `ω D⁻¹ r`.
pub fn jacobi_apply(op: &DiscreteOperator, r: &Field, omega: f64) -> Result<Field> {
    r.check_grid(op.grid())?;
    let d = op.diagonal();
    if !(d > 0.0) {
        return Err(Error::ZeroDiagonal(d));
    }
    let scale = omega / d;
    Ok(r.map(|x| scale * x))
}

/// Gauss–Seidel correction `(D + L_strict)⁻¹ r` by forward substitution in
/// ascending storage order. Only neighbours with a smaller index are used;
/// periodic wraparound neighbours with a larger index belong to the upper
/// triangle and are skipped.
pub fn gauss_seidel_apply(op: &DiscreteOperator, r: &Field) -> Result<Field> {
    r.check_grid(op.grid())?;
    let d = op.diagonal();
    if d == 0.0 || !d.is_finite() {
        return Err(Error::ZeroDiagonal(d));
    }
    let c = op.neighbor_coefficient();
    let inv = 1.0 / d;
    let rv = r.values();
    let mut x = vec![0.0; rv.len()];
    for idx in 0..rv.len() {
        let (nb, count) = op.neighbors(idx);
        let mut acc = rv[idx];
        for &j in &nb[..count] {
            if j < idx {
                acc -= c * x[j];
            }
        }
        x[idx] = acc * inv;
    }
    Ok(Field::from_raw(op.grid(), x))
}
