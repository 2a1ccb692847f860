use nalgebra::DVector;
use serde::Serialize;

use super::{check_vertex_set, restricted_system, GreenMatrix};
use crate::error::{Error, Result};
use crate::graph::WeightedWindow;

/// Equilibrium measure of a set `K` relative to a window.
#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumMeasure {
    pub support: Vec<usize>,
    /// Dense over the window, zero off `support`.
    pub mass: Vec<f64>,
    pub capacity: f64,
}

impl EquilibriumMeasure {
    pub fn mass(&self, x: usize) -> f64 {
        self.mass[x]
    }
}

fn membership(window: &WeightedWindow, set: &[usize]) -> Vec<bool> {
    let mut inside = vec![false; window.len()];
    for &i in set {
        inside[i] = true;
    }
    inside
}

/// `e_{K,U}(x) = lambda_x P_x[no return to K before exit]` for `x` in `K`.
///
/// The escape probability from outside `K` solves the walk killed on both
/// leaving the window and entering `K`; the value on `K` follows from one
/// first-step decomposition.
pub fn equilibrium(k: &[usize], window: &WeightedWindow) -> Result<EquilibriumMeasure> {
    check_vertex_set(window, k)?;
    let in_k = membership(window, k);
    let rest: Vec<usize> = (0..window.len()).filter(|&i| !in_k[i]).collect();

    let escape_rest = if rest.is_empty() {
        DVector::zeros(0)
    } else {
        let (a, _) = restricted_system(window, &rest);
        let rhs = DVector::from_iterator(rest.len(), rest.iter().map(|&i| window.exit_probability(i)));
        a.lu()
            .solve(&rhs)
            .ok_or(Error::Singular("escape probability system"))?
    };
    let mut pos = vec![usize::MAX; window.len()];
    for (p, &i) in rest.iter().enumerate() {
        pos[i] = p;
    }

    let mut mass = vec![0.0; window.len()];
    let mut support: Vec<usize> = k.to_vec();
    support.sort_unstable();
    support.dedup();
    for &x in &support {
        let lx = window.lambda(x);
        let via_rest: f64 = window
            .neighbors(x)
            .iter()
            .filter(|(y, _)| !in_k[*y])
            .map(|&(y, c)| c / lx * escape_rest[pos[y]])
            .sum();
        mass[x] = lx * (window.exit_probability(x) + via_rest);
    }
    let capacity = support.iter().map(|&x| mass[x]).sum();
    Ok(EquilibriumMeasure {
        support,
        mass,
        capacity,
    })
}

/// `P_x[H_K < T_U]` two ways: by a direct solve, and as
/// `sum_y g_U(x, y) e_{K,U}(y)`.
pub fn hitting_routes(
    window: &WeightedWindow,
    green: &GreenMatrix,
    x: usize,
    k: &[usize],
) -> Result<(f64, f64)> {
    check_vertex_set(window, k)?;
    if x >= window.len() {
        return Err(Error::OutsideWindow(format!("index {x}")));
    }
    let eq = equilibrium(k, window)?;
    let via_green: f64 = eq.support.iter().map(|&y| green.get(x, y) * eq.mass[y]).sum();

    let in_k = membership(window, k);
    let direct = if in_k[x] {
        1.0
    } else {
        let rest: Vec<usize> = (0..window.len()).filter(|&i| !in_k[i]).collect();
        let (a, pos) = restricted_system(window, &rest);
        let rhs = DVector::from_iterator(
            rest.len(),
            rest.iter().map(|&i| {
                window
                    .neighbors(i)
                    .iter()
                    .filter(|(y, _)| in_k[*y])
                    .map(|(_, c)| c / window.lambda(i))
                    .sum::<f64>()
            }),
        );
        let h = a
            .lu()
            .solve(&rhs)
            .ok_or(Error::Singular("hitting probability system"))?;
        h[pos[x].expect("x outside K lies in the complement")]
    };
    Ok((direct, via_green))
}

/// The directly solved hitting probability, after checking it against the
/// Green-equilibrium route to within `tol`.
pub fn hitting_probability(
    window: &WeightedWindow,
    green: &GreenMatrix,
    x: usize,
    k: &[usize],
    tol: f64,
) -> Result<f64> {
    let (direct, via_green) = hitting_routes(window, green, x, k)?;
    if (direct - via_green).abs() > tol {
        return Err(Error::Inconsistent {
            what: "hitting probability routes disagree",
            left: direct,
            right: via_green,
        });
    }
    Ok(direct)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_window, Lattice, Vertex};
    use crate::potential::green_killed;
    use crate::rng::{domain, stream};
    use rand::Rng;

    fn z3(r: usize) -> WeightedWindow {
        build_window(&Lattice::new(3), &Vertex::new([0, 0, 0]), r).unwrap()
    }

    #[test]
    fn singleton_window() {
        let e = equilibrium(&[0], &z3(0)).unwrap();
        assert_eq!(e.mass(0), 6.0);
        assert_eq!(e.capacity, 6.0);
    }

    #[test]
    fn whole_window_gives_boundary_weights() {
        let w = z3(3);
        let all: Vec<usize> = (0..w.len()).collect();
        let e = equilibrium(&all, &w).unwrap();
        for x in 0..w.len() {
            assert!((e.mass(x) - w.boundary_weight(x)).abs() < 1e-12);
        }
        assert!((e.capacity - w.total_boundary_weight()).abs() < 1e-9);
    }

    #[test]
    fn empty_set_is_rejected() {
        assert!(matches!(equilibrium(&[], &z3(1)), Err(Error::EmptySet)));
        assert!(matches!(
            equilibrium(&[99], &z3(1)),
            Err(Error::OutsideWindow(_))
        ));
    }

    #[test]
    fn equilibrium_decreases_with_window() {
        let k = [Vertex::new([0, 0, 0]), Vertex::new([1, 0, 0])];
        let mut prev: Option<Vec<f64>> = None;
        for r in 1..7 {
            let w = z3(r);
            let ki = w.indices_of(&k).unwrap();
            let e = equilibrium(&ki, &w).unwrap();
            let masses: Vec<f64> = ki.iter().map(|&i| e.mass(i)).collect();
            if let Some(p) = prev {
                for (a, b) in masses.iter().zip(&p) {
                    assert!(a <= &(b + 1e-12));
                }
            }
            prev = Some(masses);
        }
    }

    #[test]
    fn hitting_trivial_cases() {
        let w = z3(0);
        let g = green_killed(&w).unwrap();
        let (direct, via) = hitting_routes(&w, &g, 0, &[0]).unwrap();
        assert_eq!(direct, 1.0);
        assert!((via - 1.0).abs() < 1e-15);

        let w = z3(3);
        let g = green_killed(&w).unwrap();
        for x in 0..w.len() {
            let p = hitting_probability(&w, &g, x, &[x], 1e-10).unwrap();
            assert_eq!(p, 1.0);
        }
    }

    #[test]
    fn hitting_routes_agree_at_distance_two() {
        let w = z3(4);
        let g = green_killed(&w).unwrap();
        let x = w.index_of(&Vertex::new([1, 1, 0])).unwrap();
        let (direct, via) = hitting_routes(&w, &g, x, &[0]).unwrap();
        assert!((direct - via).abs() < 1e-10);
        assert!(direct > 0.0 && direct < 1.0);
    }

    /// Oracle: walks from the origin on Z^3 that leave the L1-ball of radius
    /// 8 before coming back. cap_U({0}) = 6 * P[escape].
    #[test]
    fn capacity_matches_escape_oracle() {
        let radius = 8i64;
        let walks = 200_000;
        let mut rng = stream(99, domain::PATHS, 1);
        let mut escapes = 0usize;
        for _ in 0..walks {
            let mut pos = [0i64; 3];
            loop {
                let k: usize = rng.random_range(0..6);
                pos[k / 2] += if k.is_multiple_of(2) { 1 } else { -1 };
                if pos == [0, 0, 0] {
                    break;
                }
                if pos.iter().map(|c| c.abs()).sum::<i64>() > radius {
                    escapes += 1;
                    break;
                }
            }
        }
        let p = escapes as f64 / walks as f64;
        let se = (p * (1.0 - p) / walks as f64).sqrt();
        let cap = equilibrium(&[0], &z3(radius as usize)).unwrap().capacity;
        assert!((cap / 6.0 - p).abs() < 4.0 * se, "{cap} vs {}", 6.0 * p);
        // Above the infinite-volume value 6 / 1.5164 and approaching it.
        assert!(cap > 6.0 / 1.516_386_06);
        assert!(cap < 4.4);
    }
}
