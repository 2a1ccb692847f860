use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::green::check_schedule;
use super::{check_potential, equilibrium, green_columns, green_killed, GreenKind, GreenMatrix};
use crate::error::{domain, Error, Result};
use crate::graph::{build_window, GraphGenerator, TransitionMatrix, Vertex, WeightedWindow};
use crate::report::{Check, TestReport};

/// Which operator produced a [`PotentialFunction`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    /// `G_U f`, killed Green operator of the window.
    Green,
    /// `G_n f`, kernel `g_U + 1/lambda` on window plus star.
    Collapsed,
    /// `(I + G_n V)^{-1} 1`.
    Resolvent,
    /// `x -> E_x[exp(-int_0^{T_U} (V / lambda)(X_s) ds)]`.
    FeynmanKac,
}

#[derive(Clone, Debug, Serialize)]
pub struct PotentialFunction {
    pub values: Vec<f64>,
    pub operator: Operator,
}

/// `u(x) = E_x[exp(-int_0^{T_U} (V / lambda)(X_s) ds)]` for the rate-1 walk
/// killed on leaving the window.
///
/// Each Exp(1) holding time at `x` contributes a factor
/// `1 / (1 + V(x) / lambda_x)` in expectation, so `u` solves
/// `(I - P_U + diag(V / lambda)) u = p_exit`.
pub fn feynman_kac(v: &[f64], window: &WeightedWindow) -> Result<PotentialFunction> {
    check_potential(window, v)?;
    let n = window.len();
    if !(window.total_boundary_weight() > 0.0) {
        return Err(Error::Singular("window without escape edges"));
    }
    let mut a = DMatrix::identity(n, n) - window.transition_matrix();
    for x in 0..n {
        a[(x, x)] += v[x] / window.lambda(x);
    }
    let rhs = DVector::from_iterator(n, (0..n).map(|x| window.exit_probability(x)));
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular("Feynman-Kac system"))?;
    Ok(PotentialFunction {
        values: sol.iter().copied().collect(),
        operator: Operator::FeynmanKac,
    })
}

/// `E[exp(-sum_x V(x) l_x)]` for the occupation field of the collapsed chain
/// stopped at local time `u` at the star:
/// `exp(u sum_{x in K} e_{K,U}(x) (u_FK(x) - 1))`.
pub fn laplace_exact_finite(v: &[f64], k: &[usize], window: &WeightedWindow, u: f64) -> Result<f64> {
    check_potential(window, v)?;
    check_level(u)?;
    let mut in_k = vec![false; window.len()];
    for &x in k {
        if x >= window.len() {
            return Err(Error::OutsideWindow(format!("index {x}")));
        }
        in_k[x] = true;
    }
    if let Some(x) = (0..window.len()).find(|&x| v[x] > 0.0 && !in_k[x]) {
        return Err(domain(format!(
            "potential is positive at {} outside K",
            window.vertex(x)
        )));
    }
    if u == 0.0 || k.is_empty() {
        return Ok(1.0);
    }
    Ok((-u * killed_rate(v, k, window)?).exp())
}

/// `-sum_{x in K} e_{K,U}(x) (u_FK(x) - 1)`, the per-unit-level rate of the
/// finite-volume Laplace exponent.
fn killed_rate(v: &[f64], k: &[usize], window: &WeightedWindow) -> Result<f64> {
    let eq = equilibrium(k, window)?;
    let fk = feynman_kac(v, window)?;
    Ok(-eq
        .support
        .iter()
        .map(|&x| eq.mass[x] * (fk.values[x] - 1.0))
        .sum::<f64>())
}

/// `<V, (I + G V)^{-1} 1>` where `block` is `g` restricted to the support
/// of `V` and `vs` are the values there.
fn resolvent_inner(block: &DMatrix<f64>, vs: &[f64]) -> Result<f64> {
    let k = vs.len();
    if k == 0 {
        return Ok(0.0);
    }
    let m = DMatrix::from_fn(k, k, |i, j| {
        f64::from(u8::from(i == j)) + block[(i, j)] * vs[j]
    });
    let h = m
        .lu()
        .solve(&DVector::from_element(k, 1.0))
        .ok_or(Error::Singular("I + GV"))?;
    Ok(vs.iter().zip(h.iter()).map(|(a, b)| a * b).sum())
}

/// `exp(-u <V, (I + G_U V)^{-1} 1>)` with the killed Green matrix of a
/// window. Equal to [`laplace_exact_finite`] on the same window.
pub fn laplace_green_form(green: &GreenMatrix, v: &[f64], u: f64) -> Result<f64> {
    if green.kind() != GreenKind::Killed {
        return Err(domain("expected a killed Green matrix"));
    }
    if v.len() != green.dim() || v.iter().any(|x| !(*x >= 0.0)) {
        return Err(domain("potential must be nonnegative and match the window"));
    }
    check_level(u)?;
    let support: Vec<usize> = (0..v.len()).filter(|&x| v[x] > 0.0).collect();
    let block = DMatrix::from_fn(support.len(), support.len(), |i, j| {
        green.get(support[i], support[j])
    });
    let vs: Vec<f64> = support.iter().map(|&x| v[x]).collect();
    Ok((-u * resolvent_inner(&block, &vs)?).exp())
}

/// `exp(-u v / (1 + v g))`, the Laplace transform at a single-site potential
/// `v 1_x` when `g = g(x, x)`.
pub fn singleton_laplace(u: f64, v: f64, g: f64) -> f64 {
    (-u * v / (1.0 + v * g)).exp()
}

#[derive(Clone, Debug, Serialize)]
pub struct LaplaceLimit {
    pub value: f64,
    /// `<V, (I + G_U V)^{-1} 1>` on the final window.
    pub inner: f64,
    pub radius: usize,
    pub iterates: Vec<(usize, f64)>,
    /// `sup_x G_U V(x)` on the final window.
    pub sup_gv: f64,
}

/// `exp(-u <V, (I + G V)^{-1} 1>)` for a finitely supported `V`, through
/// balls around the generator origin until `<V, (I + G_U V)^{-1} 1>` moves
/// by less than `tol`.
///
/// The condition `sup GV < 1` is checked on every window visited, which
/// bounds the supremum over the largest one.
pub fn laplace_exact_limit(
    v: &[(Vertex, f64)],
    gen: &dyn GraphGenerator,
    u: f64,
    radii: &[usize],
    tol: f64,
) -> Result<LaplaceLimit> {
    check_level(u)?;
    check_schedule(radii)?;
    if let Some((x, val)) = v.iter().find(|(_, val)| !(*val >= 0.0) || !val.is_finite()) {
        return Err(domain(format!("potential must be nonnegative, got {val} at {x}")));
    }
    let support: Vec<&(Vertex, f64)> = v.iter().filter(|(_, val)| *val > 0.0).collect();
    let center = gen.origin();
    let mut iterates: Vec<(usize, f64)> = Vec::new();
    let mut sup_gv = 0.0;
    for &r in radii {
        let window = build_window(gen, &center, r)?;
        let idx = window.indices_of(support.iter().map(|(x, _)| x))?;
        let vs: Vec<f64> = support.iter().map(|(_, val)| *val).collect();
        let inner = if idx.is_empty() {
            0.0
        } else {
            let cols = green_columns(&window, &idx)?;
            sup_gv = (0..window.len())
                .map(|x| (0..idx.len()).map(|s| cols[(x, s)] * vs[s]).sum::<f64>())
                .fold(0.0, f64::max);
            if sup_gv >= 1.0 {
                return Err(Error::LaplaceCondition(sup_gv));
            }
            let block = DMatrix::from_fn(idx.len(), idx.len(), |i, j| cols[(idx[i], j)]);
            resolvent_inner(&block, &vs)?
        };
        let converged = iterates
            .last()
            .is_some_and(|&(_, prev)| (inner - prev).abs() < tol);
        iterates.push((r, inner));
        if converged {
            return Ok(LaplaceLimit {
                value: (-u * inner).exp(),
                inner,
                radius: r,
                iterates,
                sup_gv,
            });
        }
    }
    let n = iterates.len();
    Err(Error::NoConvergence {
        radius: iterates[n - 1].0,
        last: iterates[n - 1].1,
        previous: if n > 1 { iterates[n - 2].1 } else { f64::NAN },
        tol,
    })
}

/// Checks, on one window, that `a_n = ((I + G_n V)^{-1} 1)(star)` equals
/// `(1 + <V, (I + G_U V)^{-1} 1> / lambda)^{-1}`, that
/// `h_n(star) = 1 - b_n / lambda` with `b_n = sum_x V(x) h_n(x)`, and that
/// both match `lambda / (lambda + rate)` where `rate` is the exponent of the
/// finite-volume Laplace transform (the `lambda`-Laplace transform in the
/// level of `exp(-u rate)`).
pub fn resolvent_check(
    v: &[f64],
    window: &WeightedWindow,
    lambda: f64,
    tol: f64,
) -> Result<TestReport> {
    check_potential(window, v)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(domain(format!("resolvent rate must be positive, got {lambda}")));
    }
    let n = window.len();
    let green = green_killed(window)?;
    let gv = green.apply(v);
    let sup_gv = gv.iter().copied().fold(0.0, f64::max);
    let smallness = sup_gv + v.iter().sum::<f64>() / lambda;
    if smallness >= 1.0 {
        return Err(Error::Smallness(smallness));
    }

    let collapsed = green.collapsed(lambda);
    let mut m = DMatrix::identity(n + 1, n + 1);
    for x in 0..=n {
        for y in 0..n {
            m[(x, y)] += collapsed.get(x, y) * v[y];
        }
    }
    let h = m
        .lu()
        .solve(&DVector::from_element(n + 1, 1.0))
        .ok_or(Error::Singular("I + G_n V"))?;
    let a_n = h[n];
    let b_n: f64 = (0..n).map(|x| v[x] * h[x]).sum();

    let support: Vec<usize> = (0..n).filter(|&x| v[x] > 0.0).collect();
    let block = DMatrix::from_fn(support.len(), support.len(), |i, j| {
        green.get(support[i], support[j])
    });
    let vs: Vec<f64> = support.iter().map(|&x| v[x]).collect();
    let inner = resolvent_inner(&block, &vs)?;
    let a_closed = 1.0 / (1.0 + inner / lambda);

    let rate = if support.is_empty() {
        0.0
    } else {
        killed_rate(v, &support, window)?
    };
    let a_laplace = lambda / (lambda + rate);

    let mut report = TestReport::new("resolvent")
        .param("lambda", lambda)
        .param("window_size", n)
        .param("sup_gv", sup_gv)
        .param("smallness", smallness)
        .param("b_n", b_n)
        .param("inner", inner);
    report.push(Check::exact("a_n: resolvent vs closed form", a_n, a_closed, tol));
    report.push(Check::exact("h_n(star) = 1 - b_n/lambda", a_n, 1.0 - b_n / lambda, tol));
    report.push(Check::exact("a_n: resolvent vs Laplace exponent", a_n, a_laplace, tol));
    Ok(report)
}

fn check_level(u: f64) -> Result<()> {
    if !(u >= 0.0) || !u.is_finite() {
        return Err(domain(format!("level must be finite and nonnegative, got {u}")));
    }
    Ok(())
}
