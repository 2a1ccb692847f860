//! Gaussian free field on a window: centered Gaussian vectors whose
//! covariance is a Green matrix.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::potential::GreenMatrix;
use crate::rng::{domain, par_samples};
use crate::samples::SampleMatrix;

/// Diagonal jitter starts at this fraction of the mean diagonal entry.
pub const JITTER_START: f64 = 1e-12;
/// Retries after the plain factorization fails, each ten times larger.
pub const JITTER_RETRIES: usize = 3;

/// Lower Cholesky factor of a covariance, ready to transform standard
/// normals.
#[derive(Clone, Debug)]
pub struct GffSampler {
    factor: DMatrix<f64>,
    jitter: f64,
    covariance_hash: String,
}

impl GffSampler {
    pub fn new(covariance: &GreenMatrix) -> Result<Self> {
        Self::from_covariance(covariance.values())
    }

    pub fn from_covariance(cov: &DMatrix<f64>) -> Result<Self> {
        let n = cov.nrows();
        let base = JITTER_START * cov.trace() / n as f64;
        let mut jitter = 0.0;
        for attempt in 0..=JITTER_RETRIES {
            if attempt > 0 {
                jitter = base * 10f64.powi(attempt as i32 - 1);
            }
            let mut m = cov.clone();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            if let Some(chol) = m.cholesky() {
                return Ok(GffSampler {
                    factor: chol.unpack(),
                    jitter,
                    covariance_hash: covariance_hash(cov),
                });
            }
        }
        Err(Error::NotPsd(jitter))
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// Diagonal jitter that was needed for the factorization (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.dim();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        (0..n)
            .map(|i| (0..=i).map(|j| self.factor[(i, j)] * z[j]).sum())
            .collect()
    }

    pub fn batch(&self, count: usize, seed: u64) -> GaussianSampleBatch {
        let rows = par_samples(count, seed, domain::GFF, |rng| self.draw(rng));
        GaussianSampleBatch {
            samples: SampleMatrix::from_rows(self.dim(), rows),
            seed,
            jitter: self.jitter,
            covariance_hash: self.covariance_hash.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSampleBatch {
    pub samples: SampleMatrix,
    pub seed: u64,
    pub jitter: f64,
    pub covariance_hash: String,
}

#[derive(Serialize)]
pub struct GffSidecar<'a> {
    pub sampler: &'static str,
    pub seed: u64,
    pub count: usize,
    pub window_hash: &'a str,
    pub covariance_hash: &'a str,
    pub jitter: f64,
}

impl GaussianSampleBatch {
    pub fn sidecar<'a>(&'a self, window_hash: &'a str) -> GffSidecar<'a> {
        GffSidecar {
            sampler: "gff",
            seed: self.seed,
            count: self.samples.count(),
            window_hash,
            covariance_hash: &self.covariance_hash,
            jitter: self.jitter,
        }
    }
}

/// `count` i.i.d. centered Gaussian vectors with covariance `green`; sample
/// `i` is a function of `(seed, i)` only.
pub fn sample_gff(green: &GreenMatrix, count: usize, seed: u64) -> Result<GaussianSampleBatch> {
    if count == 0 {
        return Err(Error::EmptySample);
    }
    Ok(GffSampler::new(green)?.batch(count, seed))
}

/// `(phi + a)^2 / 2` entrywise.
pub fn shifted_square_field(batch: &SampleMatrix, a: f64) -> SampleMatrix {
    batch.map(|phi| 0.5 * (phi + a) * (phi + a))
}

fn covariance_hash(cov: &DMatrix<f64>) -> String {
    let mut hasher = Sha256::new();
    hasher.update((cov.nrows() as u64).to_le_bytes());
    for v in cov.iter() {
        hasher.update(v.to_le_bytes());
    }
    hex::encode(&hasher.finalize()[..8])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_window, Lattice, Vertex};
    use crate::potential::green_killed;
    use crate::stats::{covariance_se, mean_se, variance_se};

    fn green(r: usize) -> GreenMatrix {
        let w = build_window(&Lattice::new(3), &Vertex::new([0, 0, 0]), r).unwrap();
        green_killed(&w).unwrap()
    }

    #[test]
    fn single_site_variance_and_mean() {
        let batch = sample_gff(&green(0), 1_000_000, 5).unwrap();
        let xs = batch.samples.column(0);
        let (m, se_m) = mean_se(&xs);
        assert!(m.abs() < 4.0 * se_m);
        let (v, se_v) = variance_se(&xs);
        assert!((v - 1.0 / 6.0).abs() < 4.0 * se_v, "{v} +- {se_v}");
        assert_eq!(batch.jitter, 0.0);
    }

    #[test]
    fn pair_covariance_matches_green() {
        let g = green(2);
        let batch = sample_gff(&g, 100_000, 6).unwrap();
        for (x, y) in [(0, 1), (0, 0), (1, 2), (3, 20)] {
            let (c, se) = covariance_se(&batch.samples.column(x), &batch.samples.column(y));
            assert!((c - g.get(x, y)).abs() < 4.0 * se, "({x},{y}): {c} vs {}", g.get(x, y));
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let g = green(2);
        let a = sample_gff(&g, 50, 9).unwrap();
        let b = sample_gff(&g, 50, 9).unwrap();
        assert_eq!(a, b);
        let c = sample_gff(&g, 50, 10).unwrap();
        assert_ne!(a.samples, c.samples);
        // A prefix of a longer batch is the shorter batch.
        let d = sample_gff(&g, 80, 9).unwrap();
        assert_eq!(a.samples.values(), &d.samples.values()[..50 * g.dim()]);
    }

    #[test]
    fn scaling_the_covariance_scales_the_samples() {
        let g = green(2);
        let scaled = GffSampler::from_covariance(&(g.values() * 4.0)).unwrap();
        let base = GffSampler::new(&g).unwrap();
        let a = base.batch(20, 3);
        let b = scaled.batch(20, 3);
        for (x, y) in a.samples.values().iter().zip(b.samples.values()) {
            assert_eq!(2.0 * x, *y);
        }
        let scaled = GffSampler::from_covariance(&(g.values() * 9.0)).unwrap();
        let c = scaled.batch(20, 3);
        for (x, y) in a.samples.values().iter().zip(c.samples.values()) {
            assert!((3.0 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn jitter_rescues_rank_deficiency_and_fails_on_indefinite() {
        // Rank one: [[1, 1], [1, 1]].
        let cov = DMatrix::from_element(2, 2, 1.0);
        let s = GffSampler::from_covariance(&cov).unwrap();
        assert!(s.jitter() > 0.0);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            GffSampler::from_covariance(&bad),
            Err(Error::NotPsd(_))
        ));
    }

    #[test]
    fn shifted_square() {
        let m = SampleMatrix::from_rows(2, [vec![0.0, 1.0]]);
        let s = shifted_square_field(&m, 2f64.sqrt());
        assert!((s.row(0)[0] - 1.0).abs() < 1e-15);
        let t = shifted_square_field(&m, 0.0);
        assert_eq!(t.row(0), &[0.0, 0.5]);
    }

    #[test]
    fn shifted_square_mean() {
        let g = green(1);
        let u: f64 = 1.3;
        let batch = sample_gff(&g, 200_000, 12).unwrap();
        let s = shifted_square_field(&batch.samples, (2.0 * u).sqrt());
        for x in [0, 1] {
            let (m, se) = mean_se(&s.column(x));
            assert!((m - (u + g.get(x, x) / 2.0)).abs() < 4.0 * se);
        }
    }
}
