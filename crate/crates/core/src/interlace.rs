//! Monte Carlo samplers for the occupation field of random interlacements
//! at level `u`, seen through a finite window.
//!
//! Three routes realize the same law:
//!
//! * [`CollapseSampler`] runs the collapsed chain from the star until its
//!   local time there reaches `u`;
//! * [`ExcursionSoup`] superposes a Poisson number of excursions, started
//!   from the boundary weights and killed on leaving the window;
//! * [`HittingSoup`] does the same for the excursions that reach a set `K`,
//!   started from its equilibrium measure, and only sees the field on `K`.
//!
//! Walks move on the embedded discrete chain and hold for Exp(1) times, so
//! there is no time discretization. Field values are time at `x` divided by
//! `lambda_x`.

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::graph::{CollapsedChain, WeightedWindow};
use crate::potential::{equilibrium, EquilibriumMeasure, GreenMatrix};
use crate::rng::{self, par_samples, poisson};
use crate::samples::SampleMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Collapse,
    ExcursionSoup,
    HittingSoup,
}

impl SamplerKind {
    pub fn tag(self) -> &'static str {
        match self {
            SamplerKind::Collapse => "collapse",
            SamplerKind::ExcursionSoup => "excursion-soup",
            SamplerKind::HittingSoup => "hitting-soup",
        }
    }

    fn domain(self) -> u64 {
        match self {
            SamplerKind::Collapse => rng::domain::COLLAPSE,
            SamplerKind::ExcursionSoup => rng::domain::EXCURSION,
            SamplerKind::HittingSoup => rng::domain::HITTING,
        }
    }
}

/// One sample of the occupation field, indexed like the window.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupationField {
    pub values: Vec<f64>,
    pub level: f64,
    pub sampler: SamplerKind,
    /// Excursions from the star (collapse) or Poisson trajectory count (soups).
    pub excursions: u64,
}

/// Vertices with positive occupation: the trace of the interlacement.
pub fn interlacement_set(field: &OccupationField) -> Vec<usize> {
    field
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(x, _)| x)
        .collect()
}

/// Flattened jump distribution of a walk: for state `x`, targets
/// `targets[offsets[x]..offsets[x + 1]]` with cumulative probabilities.
#[derive(Clone, Debug)]
struct JumpTable {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    cumulative: Vec<f64>,
    inv_lambda: Vec<f64>,
}

impl JumpTable {
    fn new<'a>(
        lambda: &[f64],
        neighbors: impl Fn(usize) -> Box<dyn Iterator<Item = (usize, f64)> + 'a>,
    ) -> Self {
        let mut offsets = vec![0];
        let mut targets = Vec::new();
        let mut cumulative = Vec::new();
        for (x, &l) in lambda.iter().enumerate() {
            let mut acc = 0.0;
            for (y, c) in neighbors(x) {
                acc += c / l;
                targets.push(y);
                cumulative.push(acc);
            }
            if let Some(last) = cumulative.last_mut() {
                *last = 1.0;
            }
            offsets.push(targets.len());
        }
        JumpTable {
            offsets,
            targets,
            cumulative,
            inv_lambda: lambda.iter().map(|l| 1.0 / l).collect(),
        }
    }

    /// The walk killed on leaving the window; index `window.len()` is the
    /// exit.
    fn killed(window: &WeightedWindow) -> Self {
        let exit = window.len();
        JumpTable::new(window.lambdas(), |x| {
            let b = window.boundary_weight(x);
            Box::new(
                window
                    .neighbors(x)
                    .iter()
                    .copied()
                    .chain((b > 0.0).then_some((exit, b))),
            )
        })
    }

    fn collapsed(chain: &CollapsedChain) -> Self {
        JumpTable::new(chain.lambdas(), |x| Box::new(chain.neighbors(x).iter().copied()))
    }

    #[inline]
    fn jump<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        let lo = self.offsets[x];
        let hi = self.offsets[x + 1];
        let r: f64 = rng.random();
        let k = self.cumulative[lo..hi].partition_point(|&c| c <= r);
        self.targets[lo + k.min(hi - lo - 1)]
    }

    /// Adds the occupation of one walk from `start` until it reaches `stop`.
    #[inline]
    fn run_until<R: Rng + ?Sized>(
        &self,
        start: usize,
        stop: usize,
        rng: &mut R,
        mut record: impl FnMut(usize, f64),
    ) {
        let mut x = start;
        while x != stop {
            let hold: f64 = rng.sample(Exp1);
            record(x, hold * self.inv_lambda[x]);
            x = self.jump(x, rng);
        }
    }
}

/// Draws an index with probability proportional to `weights`.
#[derive(Clone, Debug)]
struct Categorical {
    items: Vec<usize>,
    cumulative: Vec<f64>,
    total: f64,
}

impl Categorical {
    fn new(weights: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut items = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0.0;
        for (i, w) in weights {
            if w > 0.0 {
                total += w;
                items.push(i);
                cumulative.push(total);
            }
        }
        Categorical {
            items,
            cumulative,
            total,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let r = rng.random::<f64>() * self.total;
        let k = self.cumulative.partition_point(|&c| c <= r);
        self.items[k.min(self.items.len() - 1)]
    }
}

/// A batch of occupation fields, row `i` drawn from stream `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupationBatch {
    pub samples: SampleMatrix,
    pub excursions: Vec<u64>,
    pub level: f64,
    pub sampler: SamplerKind,
    pub seed: u64,
}

#[derive(Serialize)]
pub struct OccupationSidecar<'a> {
    pub sampler: &'static str,
    pub level: f64,
    pub seed: u64,
    pub count: usize,
    pub window_hash: &'a str,
    pub excursion_counts: &'a [u64],
}

impl OccupationBatch {
    pub fn sidecar<'a>(&'a self, window_hash: &'a str) -> OccupationSidecar<'a> {
        OccupationSidecar {
            sampler: self.sampler.tag(),
            level: self.level,
            seed: self.seed,
            count: self.samples.count(),
            window_hash,
            excursion_counts: &self.excursions,
        }
    }
}

pub trait OccupationSampler: Sync {
    fn kind(&self) -> SamplerKind;

    /// Number of window vertices.
    fn dim(&self) -> usize;

    fn sample_with<R: Rng + ?Sized>(&self, u: f64, rng: &mut R) -> OccupationField;

    fn sample(&self, u: f64, seed: u64) -> Result<OccupationField> {
        check_level(u)?;
        Ok(self.sample_with(u, &mut rng::stream(seed, self.kind().domain(), 0)))
    }

    /// `count` independent fields; row `i` uses stream `i` of `seed`.
    fn batch(&self, u: f64, count: usize, seed: u64) -> Result<OccupationBatch> {
        check_level(u)?;
        let fields = par_samples(count, seed, self.kind().domain(), |r| self.sample_with(u, r));
        let excursions = fields.iter().map(|f| f.excursions).collect();
        Ok(OccupationBatch {
            samples: SampleMatrix::from_rows(self.dim(), fields.into_iter().map(|f| f.values)),
            excursions,
            level: u,
            sampler: self.kind(),
            seed,
        })
    }
}

fn check_level(u: f64) -> Result<()> {
    if !(u >= 0.0) || !u.is_finite() {
        return Err(domain(format!("level must be finite and nonnegative, got {u}")));
    }
    Ok(())
}

/// Result of one collapsed-chain run.
#[derive(Clone, Debug)]
pub struct CollapseRun {
    pub field: OccupationField,
    /// Local time at the star when the run stopped; equals the level.
    pub star_local_time: f64,
    /// Number of holding intervals simulated.
    pub steps: u64,
}

/// The rate-1 collapsed chain started at the star and stopped at the
/// right-continuous inverse of its local time there.
#[derive(Clone, Debug)]
pub struct CollapseSampler {
    table: JumpTable,
    star: usize,
}

impl CollapseSampler {
    pub fn new(chain: &CollapsedChain) -> Self {
        CollapseSampler {
            table: JumpTable::collapsed(chain),
            star: chain.star(),
        }
    }

    /// The final holding interval at the star is cut exactly where its local
    /// time reaches `u`.
    pub fn run<R: Rng + ?Sized>(&self, u: f64, rng: &mut R) -> CollapseRun {
        let mut values = vec![0.0; self.star];
        let mut star_time = 0.0;
        let mut excursions = 0u64;
        let mut steps = 0u64;
        if u > 0.0 {
            let inv_star = self.table.inv_lambda[self.star];
            let mut x = self.star;
            loop {
                let hold: f64 = rng.sample(Exp1);
                steps += 1;
                if x == self.star {
                    let dl = hold * inv_star;
                    if star_time + dl > u {
                        star_time = u;
                        break;
                    }
                    star_time += dl;
                    excursions += 1;
                } else {
                    values[x] += hold * self.table.inv_lambda[x];
                }
                x = self.table.jump(x, rng);
            }
        }
        CollapseRun {
            field: OccupationField {
                values,
                level: u,
                sampler: SamplerKind::Collapse,
                excursions,
            },
            star_local_time: star_time,
            steps,
        }
    }
}

impl OccupationSampler for CollapseSampler {
    fn kind(&self) -> SamplerKind {
        SamplerKind::Collapse
    }

    fn dim(&self) -> usize {
        self.star
    }

    fn sample_with<R: Rng + ?Sized>(&self, u: f64, rng: &mut R) -> OccupationField {
        self.run(u, rng).field
    }
}

/// Poisson(u * lambda_star) excursions, each started at `y` with probability
/// proportional to the boundary weight of `y` and run as the walk killed on
/// leaving the window.
#[derive(Clone, Debug)]
pub struct ExcursionSoup {
    table: JumpTable,
    starts: Categorical,
    exit: usize,
}

impl ExcursionSoup {
    pub fn new(window: &WeightedWindow) -> Result<Self> {
        if !(window.total_boundary_weight() > 0.0) {
            return Err(Error::NoEscapeEdges);
        }
        Ok(ExcursionSoup {
            table: JumpTable::killed(window),
            starts: Categorical::new(
                window.boundary_weights().iter().copied().enumerate(),
            ),
            exit: window.len(),
        })
    }

    /// Total excursion intensity per unit level, `lambda_star`.
    pub fn intensity(&self) -> f64 {
        self.starts.total
    }
}

impl OccupationSampler for ExcursionSoup {
    fn kind(&self) -> SamplerKind {
        SamplerKind::ExcursionSoup
    }

    fn dim(&self) -> usize {
        self.exit
    }

    fn sample_with<R: Rng + ?Sized>(&self, u: f64, rng: &mut R) -> OccupationField {
        let mut values = vec![0.0; self.exit];
        let count = poisson(rng, u * self.starts.total);
        for _ in 0..count {
            let start = self.starts.draw(rng);
            self.table
                .run_until(start, self.exit, rng, |x, dl| values[x] += dl);
        }
        OccupationField {
            values,
            level: u,
            sampler: SamplerKind::ExcursionSoup,
            excursions: count,
        }
    }
}

/// Poisson(u * cap_U(K)) trajectories from the normalized equilibrium
/// measure of `K`, killed on leaving the window, recording occupation on `K`
/// only.
#[derive(Clone, Debug)]
pub struct HittingSoup {
    table: JumpTable,
    starts: Categorical,
    in_k: Vec<bool>,
    equilibrium: EquilibriumMeasure,
}

impl HittingSoup {
    pub fn new(k: &[usize], window: &WeightedWindow) -> Result<Self> {
        let equilibrium = equilibrium(k, window)?;
        let mut in_k = vec![false; window.len()];
        for &x in &equilibrium.support {
            in_k[x] = true;
        }
        Ok(HittingSoup {
            table: JumpTable::killed(window),
            starts: Categorical::new(equilibrium.support.iter().map(|&x| (x, equilibrium.mass[x]))),
            in_k,
            equilibrium,
        })
    }

    pub fn capacity(&self) -> f64 {
        self.equilibrium.capacity
    }

    pub fn equilibrium(&self) -> &EquilibriumMeasure {
        &self.equilibrium
    }
}

impl OccupationSampler for HittingSoup {
    fn kind(&self) -> SamplerKind {
        SamplerKind::HittingSoup
    }

    fn dim(&self) -> usize {
        self.in_k.len()
    }

    fn sample_with<R: Rng + ?Sized>(&self, u: f64, rng: &mut R) -> OccupationField {
        let n = self.in_k.len();
        let mut values = vec![0.0; n];
        let count = if self.starts.total > 0.0 {
            poisson(rng, u * self.starts.total)
        } else {
            0
        };
        for _ in 0..count {
            let start = self.starts.draw(rng);
            self.table.run_until(start, n, rng, |x, dl| {
                if self.in_k[x] {
                    values[x] += dl;
                }
            });
        }
        OccupationField {
            values,
            level: u,
            sampler: SamplerKind::HittingSoup,
            excursions: count,
        }
    }
}

pub fn simulate_collapse(chain: &CollapsedChain, u: f64, seed: u64) -> Result<OccupationField> {
    CollapseSampler::new(chain).sample(u, seed)
}

pub fn sample_excursion_soup(window: &WeightedWindow, u: f64, seed: u64) -> Result<OccupationField> {
    ExcursionSoup::new(window)?.sample(u, seed)
}

pub fn sample_hitting_soup(
    k: &[usize],
    window: &WeightedWindow,
    u: f64,
    seed: u64,
) -> Result<OccupationField> {
    HittingSoup::new(k, window)?.sample(u, seed)
}

/// Exact finite-volume mean occupation per unit level,
/// `sum_y boundary(y) g_U(y, x)`. It is 1 at every vertex of a window with
/// escape edges, since the walk from `x` leaves almost surely.
pub fn mean_occupation_per_level(window: &WeightedWindow, green: &GreenMatrix) -> Vec<f64> {
    (0..window.len())
        .map(|x| {
            (0..window.len())
                .map(|y| window.boundary_weight(y) * green.get(y, x))
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_window, collapse, Lattice, Vertex};
    use crate::potential::{green_killed, laplace_exact_finite};
    use crate::stats::mean_se;
    use crate::verify::two_sample_ks;

    fn z3(r: usize) -> WeightedWindow {
        build_window(&Lattice::new(3), &Vertex::new([0, 0, 0]), r).unwrap()
    }

    fn laplace_estimate(batch: &OccupationBatch, v: &[f64]) -> (f64, f64) {
        let vals: Vec<f64> = batch
            .samples
            .rows()
            .map(|r| (-r.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()).exp())
            .collect();
        mean_se(&vals)
    }

    #[test]
    fn zero_level_is_empty() {
        let w = z3(2);
        let sampler = CollapseSampler::new(&collapse(&w).unwrap());
        let run = sampler.run(0.0, &mut rng::stream(1, 0, 0));
        assert!(run.field.values.iter().all(|&v| v == 0.0));
        assert_eq!(run.steps, 0);
        assert_eq!(run.star_local_time, 0.0);
        assert!(interlacement_set(&run.field).is_empty());

        let soup = sample_excursion_soup(&w, 0.0, 4).unwrap();
        assert!(soup.values.iter().all(|&v| v == 0.0));
        assert_eq!(soup.excursions, 0);
        let hit = sample_hitting_soup(&[0, 1], &w, 0.0, 4).unwrap();
        assert!(hit.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn negative_level_is_rejected() {
        let w = z3(1);
        let chain = collapse(&w).unwrap();
        assert!(simulate_collapse(&chain, -0.5, 0).is_err());
        assert!(ExcursionSoup::new(&w).unwrap().batch(f64::NAN, 3, 0).is_err());
    }

    #[test]
    fn star_local_time_equals_level() {
        let w = z3(2);
        let sampler = CollapseSampler::new(&collapse(&w).unwrap());
        for i in 0..200 {
            let u = 0.05 * (i % 40) as f64 + 0.01;
            let run = sampler.run(u, &mut rng::stream(3, 0, i));
            assert!((run.star_local_time - u).abs() < 1e-12);
            assert!(run.field.values.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn soup_count_on_z1() {
        let w = build_window(&Lattice::new(1), &Vertex::new([0]), 0).unwrap();
        let soup = ExcursionSoup::new(&w).unwrap();
        assert_eq!(soup.intensity(), 2.0);
        let batch = soup.batch(1.0, 100_000, 8).unwrap();
        let counts: Vec<f64> = batch.excursions.iter().map(|&c| c as f64).collect();
        let (m, se) = mean_se(&counts);
        assert!((m - 2.0).abs() < 4.0 * se);
    }

    #[test]
    fn collapse_and_soup_have_unit_mean_per_level() {
        let w = z3(2);
        let g = green_killed(&w).unwrap();
        let per_level = mean_occupation_per_level(&w, &g);
        assert!(per_level.iter().all(|m| (m - 1.0).abs() < 1e-12));

        let u = 0.8;
        let collapse_batch = CollapseSampler::new(&collapse(&w).unwrap())
            .batch(u, 40_000, 2)
            .unwrap();
        let soup_batch = ExcursionSoup::new(&w).unwrap().batch(u, 40_000, 2).unwrap();
        for x in [0, 1, 7, 20] {
            for batch in [&collapse_batch, &soup_batch] {
                let (m, se) = mean_se(&batch.samples.column(x));
                assert!((m - u * per_level[x]).abs() < 4.0 * se, "{x}: {m} +- {se}");
            }
        }
    }

    #[test]
    fn collapse_and_soup_agree_in_law() {
        let w = z3(2);
        let a = CollapseSampler::new(&collapse(&w).unwrap())
            .batch(1.0, 5000, 21)
            .unwrap();
        let b = ExcursionSoup::new(&w).unwrap().batch(1.0, 5000, 22).unwrap();
        let alpha = 0.01 / w.len() as f64;
        for x in 0..w.len() {
            let r = two_sample_ks(&a.samples.column(x), &b.samples.column(x)).unwrap();
            assert!(r.p_value >= alpha, "vertex {x}: {r:?}");
        }
    }

    #[test]
    fn hitting_soup_count_matches_capacity() {
        let w = z3(3);
        let soup = HittingSoup::new(&[0, 1], &w).unwrap();
        let u = 1.5;
        let batch = soup.batch(u, 100_000, 31).unwrap();
        let counts: Vec<f64> = batch.excursions.iter().map(|&c| c as f64).collect();
        let (m, se) = mean_se(&counts);
        assert!((m - u * soup.capacity()).abs() < 4.0 * se);
        // Nothing is recorded off K.
        for row in batch.samples.rows() {
            assert!(row[2..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn hitting_soup_laplace_matches_exact() {
        let w = z3(4);
        let mut v = vec![0.0; w.len()];
        v[0] = 1.0;
        let exact = laplace_exact_finite(&v, &[0], &w, 1.0).unwrap();
        let batch = HittingSoup::new(&[0], &w).unwrap().batch(1.0, 100_000, 41).unwrap();
        let (m, se) = laplace_estimate(&batch, &v);
        assert!((m - exact).abs() < 4.0 * se, "{m} +- {se} vs {exact}");
    }

    #[test]
    fn collapse_laplace_matches_exact() {
        let w = z3(4);
        let mut v = vec![0.0; w.len()];
        v[0] = 1.0;
        let exact = laplace_exact_finite(&v, &[0], &w, 1.0).unwrap();
        let batch = CollapseSampler::new(&collapse(&w).unwrap())
            .batch(1.0, 100_000, 43)
            .unwrap();
        let (m, se) = laplace_estimate(&batch, &v);
        assert!((m - exact).abs() < 4.0 * se, "{m} +- {se} vs {exact}");
    }

    #[test]
    fn vacancy_matches_capacity() {
        let w = z3(3);
        let k = [0usize, 1];
        let cap = equilibrium(&k, &w).unwrap().capacity;
        let u = 0.3;
        let batch = CollapseSampler::new(&collapse(&w).unwrap())
            .batch(u, 50_000, 5)
            .unwrap();
        let vacant = batch
            .samples
            .rows()
            .filter(|r| k.iter().all(|&x| r[x] == 0.0))
            .count() as f64
            / 50_000.0;
        let p = (-u * cap).exp();
        let se = (p * (1.0 - p) / 50_000.0).sqrt();
        assert!((vacant - p).abs() < 4.0 * se, "{vacant} vs {p}");
    }

    #[test]
    fn interlacement_set_picks_positive_entries() {
        let f = OccupationField {
            values: vec![0.0, 0.5, 0.0],
            level: 1.0,
            sampler: SamplerKind::Collapse,
            excursions: 1,
        };
        assert_eq!(interlacement_set(&f), vec![1]);
    }

    #[test]
    fn batches_are_reproducible() {
        let w = z3(2);
        let s = ExcursionSoup::new(&w).unwrap();
        assert_eq!(s.batch(1.0, 30, 9).unwrap(), s.batch(1.0, 30, 9).unwrap());
        assert_ne!(s.batch(1.0, 30, 9).unwrap(), s.batch(1.0, 30, 10).unwrap());
    }
}
