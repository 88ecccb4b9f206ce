use std::fmt::Write as _;
use std::io::{self, Write};

use crate::pde::Field;

/// Record of one hybrid run. Index `t` of `errors` and `residuals` refers to
/// iterate `u_t` (`t = 0..=T`); `chosen[t-1]` is the solver that produced
/// `u_t`, and `costs[t-1]` are the one-step costs evaluated at `u_{t-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct RouteTrace {
    pub chosen: Vec<usize>,
    pub errors: Vec<f64>,
    pub residuals: Vec<f64>,
    pub costs: Option<Vec<Vec<f64>>>,
    /// Per iterate, the error in each requested Fourier shell.
    pub mode_errors: Option<Vec<Vec<f64>>>,
    pub final_iterate: Field,
}

impl RouteTrace {
    pub fn steps(&self) -> usize {
        self.chosen.len()
    }

    pub fn final_error(&self) -> f64 {
        *self.errors.last().unwrap()
    }

    /// CSV with one row per step `t = 1..=T`: `step, chosen_id, error_norm,
    /// residual_norm` and, when recorded, `cost_1..cost_K`. A diverged trace
    /// stops at its last finite iterate.
    pub fn to_csv(&self) -> String {
        let k = self.costs.as_ref().and_then(|c| c.first()).map_or(0, Vec::len);
        let mut out = String::from("step,chosen_id,error_norm,residual_norm");
        for j in 1..=k {
            let _ = write!(out, ",cost_{j}");
        }
        out.push('\n');
        for t in 1..self.errors.len() {
            let _ = write!(out, "{},{},{},{}", t, self.chosen[t - 1], self.errors[t], self.residuals[t]);
            if let Some(costs) = &self.costs {
                for c in &costs[t - 1] {
                    let _ = write!(out, ",{c}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }
}
