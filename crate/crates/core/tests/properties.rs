use interlacement::graph::{build_window, collapse, GraphGenerator, Lattice, TransitionMatrix, Vertex};
use interlacement::interlace::{CollapseSampler, OccupationSampler};
use interlacement::potential::{
    equilibrium, green_columns, green_killed, hitting_routes, laplace_exact_finite,
    laplace_green_form,
};
use interlacement::rng::stream;
use interlacement::verify::two_sample_ks;
use proptest::prelude::*;

/// Z^d with i.i.d.-looking conductances in [0.5, 2], fixed by a seed and the
/// unordered edge.
struct RandomConductance {
    dim: usize,
    seed: u64,
}

impl RandomConductance {
    fn weight(&self, a: &Vertex, b: &Vertex) -> f64 {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        for c in lo.coords().iter().chain(hi.coords()) {
            h = (h ^ (*c as u64)).wrapping_mul(0x0100_0000_01b3);
            h ^= h >> 29;
        }
        0.5 + 1.5 * ((h >> 11) as f64 / (1u64 << 53) as f64)
    }
}

impl GraphGenerator for RandomConductance {
    fn neighbors(&self, v: &Vertex) -> Vec<(Vertex, f64)> {
        Lattice::new(self.dim)
            .neighbors(v)
            .into_iter()
            .map(|(y, _)| {
                let w = self.weight(v, &y);
                (y, w)
            })
            .collect()
    }

    fn origin(&self) -> Vertex {
        Vertex::new(vec![0; self.dim])
    }

    fn transient(&self) -> bool {
        self.dim >= 3
    }

    fn name(&self) -> String {
        format!("rc{}", self.dim)
    }
}

/// Direct O(n m) evaluation of sup_t |F_a(t) - F_b(t)| over all sample
/// points.
fn brute_ks(a: &[f64], b: &[f64]) -> f64 {
    let ecdf = |xs: &[f64], t: f64| xs.iter().filter(|&&x| x <= t).count() as f64 / xs.len() as f64;
    a.iter()
        .chain(b)
        .map(|&t| (ecdf(a, t) - ecdf(b, t)).abs())
        .fold(0.0, f64::max)
}

fn ball_size(r: i64) -> usize {
    ((2 * r + 1) * (2 * r * r + 2 * r + 3) / 3) as usize
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lattice_window_shape(r in 0usize..6) {
        let w = build_window(&Lattice::new(3), &Vertex::new([0, 0, 0]), r).unwrap();
        prop_assert_eq!(w.len(), ball_size(r as i64));
        prop_assert_eq!(w.vertex(0), &Vertex::new([0, 0, 0]));
        for x in 0..w.len() {
            prop_assert!((w.lambda(x) - 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn window_weights_balance(seed in any::<u64>(), dim in 1usize..4, r in 0usize..4) {
        let g = RandomConductance { dim, seed };
        let w = build_window(&g, &g.origin(), r).unwrap();
        let p = w.transition_matrix();
        for x in 0..w.len() {
            let internal: f64 = w.neighbors(x).iter().map(|(_, c)| c).sum();
            prop_assert!((internal + w.boundary_weight(x) - w.lambda(x)).abs() < 1e-12);
            let row: f64 = p.row(x).iter().sum();
            prop_assert!((row + w.exit_probability(x) - 1.0).abs() < 1e-12);
            for &(y, c) in w.neighbors(x) {
                prop_assert_eq!(w.internal_weight(y, x), c);
            }
        }
        let chain = collapse(&w).unwrap();
        let q = chain.transition_matrix();
        for x in 0..chain.len() {
            prop_assert!((q.row(x).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        prop_assert!((chain.lambda(chain.star()) - w.total_boundary_weight()).abs() < 1e-9);
    }

    #[test]
    fn vertex_text_round_trip(coords in proptest::collection::vec(-1000i64..1000, 0..5)) {
        let v = Vertex::new(coords);
        prop_assert_eq!(v.to_string().parse::<Vertex>().unwrap(), v);
    }

    #[test]
    fn ks_statistic_matches_brute_force(
        a in proptest::collection::vec(-3i32..3, 1..40),
        b in proptest::collection::vec(-3i32..3, 1..40),
        scale in 0.1f64..2.0,
    ) {
        // Small integer grids force plenty of ties.
        let a: Vec<f64> = a.iter().map(|&x| x as f64 * scale).collect();
        let b: Vec<f64> = b.iter().map(|&x| x as f64 * scale).collect();
        let r = two_sample_ks(&a, &b).unwrap();
        prop_assert!((r.statistic - brute_ks(&a, &b)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&r.statistic));
        prop_assert!((0.0..=1.0).contains(&r.p_value));
        let s = two_sample_ks(&b, &a).unwrap();
        prop_assert_eq!(r.statistic, s.statistic);
    }

    #[test]
    fn green_is_symmetric_positive_and_monotone(seed in any::<u64>(), r in 0usize..4) {
        let g = RandomConductance { dim: 3, seed };
        let small = build_window(&g, &g.origin(), r).unwrap();
        let large = build_window(&g, &g.origin(), r + 1).unwrap();
        let gs = green_killed(&small).unwrap();
        let gl = green_killed(&large).unwrap();
        prop_assert!(gs.min_eigenvalue() > 0.0);
        for x in 0..small.len() {
            let xl = large.index_of(small.vertex(x)).unwrap();
            for y in 0..small.len() {
                let yl = large.index_of(small.vertex(y)).unwrap();
                prop_assert!(gs.get(x, y) >= 0.0);
                prop_assert!(gs.get(x, y) <= gl.get(xl, yl) + 1e-12);
            }
        }
        let cols = green_columns(&small, &[0]).unwrap();
        for x in 0..small.len() {
            prop_assert!((cols[(x, 0)] - gs.get(x, 0)).abs() < 1e-10);
        }
    }

    #[test]
    fn hitting_identity_on_random_sets(
        seed in any::<u64>(),
        picks in proptest::collection::vec(0usize..25, 1..4),
        x in 0usize..25,
    ) {
        let g = RandomConductance { dim: 3, seed };
        let w = build_window(&g, &g.origin(), 2).unwrap();
        let green = green_killed(&w).unwrap();
        let (direct, via) = hitting_routes(&w, &green, x, &picks).unwrap();
        prop_assert!((direct - via).abs() < 1e-10);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&direct));
        let cap = equilibrium(&picks, &w).unwrap().capacity;
        let cap_all = equilibrium(&(0..w.len()).collect::<Vec<_>>(), &w).unwrap().capacity;
        prop_assert!(cap <= cap_all + 1e-9);
    }

    #[test]
    fn laplace_is_a_decreasing_transform(
        seed in any::<u64>(),
        v0 in 0.0f64..2.0,
        v1 in 0.0f64..2.0,
        u in 0.0f64..3.0,
        du in 0.01f64..2.0,
    ) {
        let g = RandomConductance { dim: 3, seed };
        let w = build_window(&g, &g.origin(), 2).unwrap();
        let mut v = vec![0.0; w.len()];
        v[0] = v0;
        v[1] = v1;
        let k = [0, 1];
        let at_u = laplace_exact_finite(&v, &k, &w, u).unwrap();
        let later = laplace_exact_finite(&v, &k, &w, u + du).unwrap();
        prop_assert!((0.0..=1.0).contains(&at_u));
        prop_assert!(later <= at_u + 1e-15);
        let green = green_killed(&w).unwrap();
        let other = laplace_green_form(&green, &v, u).unwrap();
        prop_assert!((at_u - other).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn collapse_runs_stop_at_the_level(seed in any::<u64>(), u in 0.0f64..5.0, index in 0u64..1000) {
        let g = RandomConductance { dim: 3, seed };
        let w = build_window(&g, &g.origin(), 2).unwrap();
        let sampler = CollapseSampler::new(&collapse(&w).unwrap());
        let run = sampler.run(u, &mut stream(seed, 1, index));
        prop_assert!((run.star_local_time - u).abs() < 1e-12);
        prop_assert!(run.field.values.iter().all(|&l| l >= 0.0 && l.is_finite()));
        let again = sampler.sample(u, seed).unwrap();
        prop_assert_eq!(again, sampler.sample(u, seed).unwrap());
    }
}
