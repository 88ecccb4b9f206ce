use crate::error::{Error, Result};
use crate::pde::{dft, Field};
use crate::routing::Ensemble;
use crate::solvers::SolverKind;

/// Sequence value from the DFT eigenvalues of weighted-Jacobi error maps:
/// `Σ_i |z_i|² Π_j λ_{ji}^{2 m_j(S)}` with `z` the unitary DFT of `e0` and
/// `m_j(S)` the number of times solver `j` occurs. The zero mode of a
/// singular operator is left out, matching [`super::sequence_value`].
pub fn spectral_value(ens: &Ensemble, seq: &[usize], e0: &Field) -> Result<f64> {
    let op = ens.operator();
    e0.check_grid(op.grid())?;
    let eig = op.eigenvalues();
    let d = op.diagonal();
    let mut omegas = Vec::with_capacity(ens.len());
    for h in ens.solvers() {
        match h.kind {
            SolverKind::WeightedJacobi { omega } => omegas.push(omega),
            _ => return Err(Error::NotSimultaneouslyDiagonalizable(h.label.clone())),
        }
    }
    let mut counts = vec![0i32; ens.len()];
    for &id in seq {
        ens.get(id)?;
        counts[id - 1] += 1;
    }
    let z = dft(e0);
    let mut total = 0.0;
    for (i, zi) in z.iter().enumerate() {
        if op.is_singular() && i == 0 {
            continue;
        }
        let mut gain = 1.0;
        for (omega, &m) in omegas.iter().zip(&counts) {
            let lambda = 1.0 - omega * eig[i] / d;
            gain *= (lambda * lambda).powi(m);
        }
        total += zi.norm_sqr() * gain;
    }
    Ok(total)
}
