//! Preconditioning functions `C_j` mapping a residual to an iterate
//! correction, behind one dispatch interface.

mod multigrid;
mod relaxation;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::neural::NeuralSolver;
use crate::pde::{DiscreteOperator, Field};

pub use multigrid::{coarsest_grid, prolong, restrict, vcycle_apply, MgConfig, OperatorHierarchy};
pub use relaxation::{gauss_seidel_apply, jacobi_apply};

/// Largest system for which dense error-propagation matrices are assembled.
pub const MAX_DENSE_LEN: usize = 4096;

/// A V-cycle bound to its precomputed operator hierarchy.
#[derive(Clone, Debug)]
pub struct Multigrid {
    pub config: MgConfig,
    pub hierarchy: Arc<OperatorHierarchy>,
}

impl Multigrid {
    pub fn new(op: &DiscreteOperator, config: MgConfig) -> Result<Self> {
        let hierarchy = Arc::new(OperatorHierarchy::new(op, &config)?);
        Ok(Self { config, hierarchy })
    }
}

#[derive(Clone)]
pub enum SolverKind {
    WeightedJacobi { omega: f64 },
    GaussSeidel,
    Multigrid(Multigrid),
    Neural(Arc<NeuralSolver>),
}

impl fmt::Debug for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverKind::WeightedJacobi { omega } => write!(f, "WeightedJacobi({omega})"),
            SolverKind::GaussSeidel => write!(f, "GaussSeidel"),
            SolverKind::Multigrid(mg) => write!(f, "Multigrid({:?})", mg.config),
            SolverKind::Neural(_) => write!(f, "Neural"),
        }
    }
}

impl SolverKind {
    pub fn is_linear(&self) -> bool {
        !matches!(self, SolverKind::Neural(_))
    }

    /// Applies the preconditioner to a residual.
    pub fn apply(&self, op: &DiscreteOperator, r: &Field) -> Result<Field> {
        match self {
            SolverKind::WeightedJacobi { omega } => jacobi_apply(op, r, *omega),
            SolverKind::GaussSeidel => gauss_seidel_apply(op, r),
            SolverKind::Multigrid(mg) => {
                if mg.hierarchy.fine() != op {
                    return Err(Error::HierarchyMismatch(
                        "multigrid hierarchy was built for a different operator".into(),
                    ));
                }
                vcycle_apply(&mg.hierarchy, &mg.config, r)
            }
            SolverKind::Neural(net) => {
                r.check_grid(op.grid())?;
                net.apply(r)
            }
        }
    }

    /// Short default label such as `jacobi(0.67)`.
    pub fn default_label(&self) -> String {
        match self {
            SolverKind::WeightedJacobi { omega } => format!("jacobi({omega})"),
            SolverKind::GaussSeidel => "gs".into(),
            SolverKind::Multigrid(_) => "mg".into(),
            SolverKind::Neural(_) => "deeponet".into(),
        }
    }
}

/// One member of a solver ensemble.
#[derive(Clone, Debug)]
pub struct SolverHandle {
    pub id: usize,
    pub label: String,
    pub kind: SolverKind,
}

impl SolverHandle {
    pub fn new(id: usize, kind: SolverKind) -> Result<Self> {
        let label = kind.default_label();
        Self::with_label(id, kind, label)
    }

    pub fn with_label(id: usize, kind: SolverKind, label: impl Into<String>) -> Result<Self> {
        if let SolverKind::WeightedJacobi { omega } = kind {
            if !(omega > 0.0 && omega <= 1.0) {
                return Err(Error::InvalidParameter(format!("Jacobi omega {omega} outside (0, 1]")));
            }
        }
        Ok(Self { id, label: label.into(), kind })
    }

    pub fn jacobi(id: usize, omega: f64) -> Result<Self> {
        Self::new(id, SolverKind::WeightedJacobi { omega })
    }

    pub fn gauss_seidel(id: usize) -> Self {
        Self { id, label: "gs".into(), kind: SolverKind::GaussSeidel }
    }

    pub fn multigrid(id: usize, op: &DiscreteOperator, config: MgConfig) -> Result<Self> {
        Self::new(id, SolverKind::Multigrid(Multigrid::new(op, config)?))
    }

    pub fn neural(id: usize, net: Arc<NeuralSolver>) -> Self {
        Self { id, label: "deeponet".into(), kind: SolverKind::Neural(net) }
    }

    pub fn is_linear(&self) -> bool {
        self.kind.is_linear()
    }
}

/// `C_j r` for the handle's solver.
pub fn apply_solver(handle: &SolverHandle, op: &DiscreteOperator, r: &Field) -> Result<Field> {
    handle.kind.apply(op, r)
}

/// One hybrid step acting on an error: `e - C_j(L e)`.
pub fn propagate_error(handle: &SolverHandle, op: &DiscreteOperator, e: &Field) -> Result<Field> {
    let r = op.apply(e)?;
    Ok(e.sub(&apply_solver(handle, op, &r)?))
}

/// Dense `I - C_j L`, assembled column by column.
pub fn error_propagation_matrix(handle: &SolverHandle, op: &DiscreteOperator) -> Result<DMatrix<f64>> {
    if !handle.is_linear() {
        return Err(Error::NonlinearSolver(handle.label.clone()));
    }
    let len = op.grid().len();
    if len > MAX_DENSE_LEN {
        return Err(Error::InvalidParameter(format!(
            "dense error propagation limited to {MAX_DENSE_LEN} unknowns, got {len}"
        )));
    }
    let mut m = DMatrix::zeros(len, len);
    for j in 0..len {
        let col = propagate_error(handle, op, &Field::basis(op.grid(), j))?;
        m.column_mut(j).copy_from_slice(col.values());
    }
    Ok(m)
}
