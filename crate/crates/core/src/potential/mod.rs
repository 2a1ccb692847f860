//! Exact potential theory of the walk killed on leaving a window, by dense
//! linear solves.
//!
//! Green values are in units of time per weight: `g_U(x, y)` is the expected
//! time spent at `y` before exit, starting from `x`, divided by `lambda_y`.

mod equilibrium;
mod green;
mod laplace;

pub use equilibrium::{equilibrium, hitting_probability, hitting_routes, EquilibriumMeasure};
pub use green::{green_columns, green_killed, green_killed_with, green_limit, GreenKind, GreenLimit, GreenMatrix};
pub use laplace::{
    feynman_kac, laplace_exact_finite, laplace_exact_limit, laplace_green_form, resolvent_check,
    singleton_laplace, LaplaceLimit, Operator, PotentialFunction,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::WeightedWindow;

/// `I - P` restricted to `subset` (killed on leaving it), and the position of
/// each window index inside the subset.
pub(crate) fn restricted_system(
    window: &WeightedWindow,
    subset: &[usize],
) -> (DMatrix<f64>, Vec<Option<usize>>) {
    let mut pos = vec![None; window.len()];
    for (p, &i) in subset.iter().enumerate() {
        pos[i] = Some(p);
    }
    let m = subset.len();
    let mut a = DMatrix::identity(m, m);
    for (p, &i) in subset.iter().enumerate() {
        let l = window.lambda(i);
        for &(j, c) in window.neighbors(i) {
            if let Some(q) = pos[j] {
                a[(p, q)] -= c / l;
            }
        }
    }
    (a, pos)
}

pub(crate) fn check_vertex_set(window: &WeightedWindow, set: &[usize]) -> Result<()> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    for &i in set {
        if i >= window.len() {
            return Err(Error::OutsideWindow(format!("index {i}")));
        }
    }
    Ok(())
}

pub(crate) fn check_potential(window: &WeightedWindow, v: &[f64]) -> Result<()> {
    if v.len() != window.len() {
        return Err(Error::Domain(format!(
            "potential has {} entries for a window of {}",
            v.len(),
            window.len()
        )));
    }
    if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain(format!(
            "potential must be finite and nonnegative, got {x} at {}",
            window.vertex(i)
        )));
    }
    Ok(())
}
