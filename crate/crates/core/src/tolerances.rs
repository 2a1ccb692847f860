//! Default thresholds for exact identities and statistical checks.

use serde::{Deserialize, Serialize};

/// Hitting identity: direct solve versus the Green-equilibrium sum.
pub const HITTING: f64 = 1e-10;
/// Resolvent identity: both routes to `a_n`.
pub const RESOLVENT: f64 = 1e-9;
/// Largest asymmetry of a solved Green matrix before symmetrization.
pub const GREEN_ASYMMETRY: f64 = 1e-9;
/// Moment comparisons pass within this many standard errors.
pub const N_SE: f64 = 4.0;
/// Family-wise level of a KS battery, split by Bonferroni.
pub const KS_FAMILY_ALPHA: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub hitting: f64,
    pub resolvent: f64,
    pub green_asymmetry: f64,
    pub n_se: f64,
    pub ks_family_alpha: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hitting: HITTING,
            resolvent: RESOLVENT,
            green_asymmetry: GREEN_ASYMMETRY,
            n_se: N_SE,
            ks_family_alpha: KS_FAMILY_ALPHA,
        }
    }
}
