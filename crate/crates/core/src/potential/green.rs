use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{build_window, GraphGenerator, TransitionMatrix, Vertex, WeightedWindow};
use crate::tolerances;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GreenKind {
    /// `g_U`, the walk killed on leaving the window.
    Killed,
    /// `g_U + 1/lambda` on the window plus star, with `g_U(star, .) = 0`.
    Collapsed { lambda: f64 },
}

/// Dense symmetric matrix of Green values indexed like the window (plus the
/// star as the last index for [`GreenKind::Collapsed`]).
#[derive(Clone, Debug)]
pub struct GreenMatrix {
    values: DMatrix<f64>,
    kind: GreenKind,
    asymmetry: f64,
}

impl GreenMatrix {
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[(x, y)]
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn kind(&self) -> GreenKind {
        self.kind
    }

    /// Largest `|g(x,y) - g(y,x)|` before symmetrization.
    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.values.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn trace(&self) -> f64 {
        self.values.trace()
    }

    /// Attaches the star state and shifts every entry by `1/lambda`.
    pub fn collapsed(&self, lambda: f64) -> GreenMatrix {
        assert_eq!(self.kind, GreenKind::Killed);
        let n = self.dim();
        let values = DMatrix::from_fn(n + 1, n + 1, |x, y| {
            let base = if x < n && y < n { self.values[(x, y)] } else { 0.0 };
            base + 1.0 / lambda
        });
        GreenMatrix {
            values,
            kind: GreenKind::Collapsed { lambda },
            asymmetry: self.asymmetry,
        }
    }

    /// `(G f)(x) = sum_y g(x, y) f(y)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.dim());
        (0..self.dim())
            .map(|x| (0..self.dim()).map(|y| self.values[(x, y)] * f[y]).sum())
            .collect()
    }
}

pub fn green_killed(window: &WeightedWindow) -> Result<GreenMatrix> {
    green_killed_with(window, tolerances::GREEN_ASYMMETRY)
}

/// Solves `(I - P_U) N = I` for the expected visit counts and divides
/// column `y` by `lambda_y`. The result is symmetrized; an asymmetry above
/// `max_asymmetry` before that step is an error.
pub fn green_killed_with(window: &WeightedWindow, max_asymmetry: f64) -> Result<GreenMatrix> {
    let n = window.len();
    if !(window.total_boundary_weight() > 0.0) {
        return Err(Error::Singular("window without escape edges"));
    }
    let a = DMatrix::identity(n, n) - window.transition_matrix();
    let visits = a
        .lu()
        .solve(&DMatrix::identity(n, n))
        .ok_or(Error::Singular("killed Green system"))?;
    let g = DMatrix::from_fn(n, n, |x, y| visits[(x, y)] / window.lambda(y));
    let mut asymmetry: f64 = 0.0;
    for x in 0..n {
        for y in 0..x {
            asymmetry = asymmetry.max((g[(x, y)] - g[(y, x)]).abs());
        }
    }
    if asymmetry >= max_asymmetry {
        return Err(Error::Inconsistent {
            what: "Green matrix asymmetry",
            left: asymmetry,
            right: max_asymmetry,
        });
    }
    let values = (&g + g.transpose()) * 0.5;
    Ok(GreenMatrix {
        values,
        kind: GreenKind::Killed,
        asymmetry,
    })
}

/// Columns `g_U(., y)` for `y` in `cols`, as an `n x cols.len()` matrix.
///
/// Solves the sparse weighted Laplacian `diag(lambda) - C_U`, whose inverse
/// is `g_U`, by preconditioned conjugate gradients. This is independent of
/// the dense route in [`green_killed`] and reaches windows far too large for
/// dense factorizations.
pub fn green_columns(window: &WeightedWindow, cols: &[usize]) -> Result<DMatrix<f64>> {
    let n = window.len();
    if !(window.total_boundary_weight() > 0.0) {
        return Err(Error::Singular("window without escape edges"));
    }
    let mut out = DMatrix::zeros(n, cols.len());
    for (k, &y) in cols.iter().enumerate() {
        if y >= n {
            return Err(Error::OutsideWindow(format!("index {y}")));
        }
        let mut rhs = vec![0.0; n];
        rhs[y] = 1.0;
        let col = laplacian_solve(window, &rhs)?;
        out.set_column(k, &DVector::from_vec(col));
    }
    Ok(out)
}

/// Relative residual at which conjugate gradients stop.
const CG_RESIDUAL: f64 = 1e-13;

fn laplacian_apply(window: &WeightedWindow, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let off: f64 = window.neighbors(i).iter().map(|&(j, c)| c * x[j]).sum();
        *o = window.lambda(i) * x[i] - off;
    }
}

/// Conjugate gradients with the diagonal `lambda` as preconditioner.
fn laplacian_solve(window: &WeightedWindow, b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let inv_diag: Vec<f64> = (0..n).map(|i| 1.0 / window.lambda(i)).collect();
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for _ in 0..10 * n + 100 {
        laplacian_apply(window, &p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Singular("window Laplacian is not positive definite"));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= CG_RESIDUAL * b_norm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Singular("conjugate gradients did not converge"))
}

#[derive(Clone, Debug, Serialize)]
pub struct GreenLimit {
    pub value: f64,
    pub radius: usize,
    /// `(radius, g_U(x, y))` for every window visited.
    pub iterates: Vec<(usize, f64)>,
}

/// `g(x, y)` approached through balls around the generator's origin. Stops at
/// the first radius whose value moved by less than `tol`.
pub fn green_limit(
    gen: &dyn GraphGenerator,
    x: &Vertex,
    y: &Vertex,
    radii: &[usize],
    tol: f64,
) -> Result<GreenLimit> {
    check_schedule(radii)?;
    let center = gen.origin();
    let mut iterates: Vec<(usize, f64)> = Vec::new();
    for &r in radii {
        let window = build_window(gen, &center, r)?;
        let xi = window
            .index_of(x)
            .ok_or_else(|| Error::OutsideWindow(x.to_string()))?;
        let yi = window
            .index_of(y)
            .ok_or_else(|| Error::OutsideWindow(y.to_string()))?;
        let value = green_columns(&window, &[yi])?[(xi, 0)];
        let converged = iterates
            .last()
            .is_some_and(|&(_, prev)| (value - prev).abs() < tol);
        iterates.push((r, value));
        if converged {
            return Ok(GreenLimit {
                value,
                radius: r,
                iterates,
            });
        }
    }
    let (radius, last) = *iterates.last().expect("nonempty schedule");
    let previous = iterates
        .len()
        .checked_sub(2)
        .map(|i| iterates[i].1)
        .unwrap_or(f64::NAN);
    Err(Error::NoConvergence {
        radius,
        last,
        previous,
        tol,
    })
}

pub(crate) fn check_schedule(radii: &[usize]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::Domain("radius schedule is empty".into()));
    }
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain(
            "radius schedule must be strictly increasing".into(),
        ));
    }
    Ok(())
}
