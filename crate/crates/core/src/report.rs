//! Structured outcomes of exact and statistical checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    /// Deterministic comparison `|value - expected| <= tolerance`.
    Exact {
        value: f64,
        expected: f64,
        tolerance: f64,
    },
    /// Monte Carlo estimate against an exact value, passing within
    /// `n_se` standard errors.
    Moment {
        estimate: f64,
        standard_error: f64,
        expected: f64,
        n_se: f64,
    },
    /// Two-sample Kolmogorov-Smirnov test, failing when `p_value < alpha`
    /// (alpha already Bonferroni-corrected).
    Ks {
        statistic: f64,
        p_value: f64,
        alpha: f64,
        n_left: usize,
        n_right: usize,
    },
    /// Deterministic one- or two-sided bound.
    Bound {
        value: f64,
        lower: Option<f64>,
        upper: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    #[serde(flatten)]
    pub outcome: Outcome,
}

impl Check {
    pub fn exact(name: impl Into<String>, value: f64, expected: f64, tolerance: f64) -> Self {
        let passed = (value - expected).abs() <= tolerance;
        Check {
            name: name.into(),
            passed,
            outcome: Outcome::Exact {
                value,
                expected,
                tolerance,
            },
        }
    }

    /// A zero standard error (degenerate sample) demands agreement to 1e-12.
    pub fn moment(
        name: impl Into<String>,
        estimate: f64,
        standard_error: f64,
        expected: f64,
        n_se: f64,
    ) -> Self {
        let slack = (n_se * standard_error).max(1e-12);
        let passed = estimate.is_finite() && (estimate - expected).abs() <= slack;
        Check {
            name: name.into(),
            passed,
            outcome: Outcome::Moment {
                estimate,
                standard_error,
                expected,
                n_se,
            },
        }
    }

    pub fn ks(
        name: impl Into<String>,
        statistic: f64,
        p_value: f64,
        alpha: f64,
        n_left: usize,
        n_right: usize,
    ) -> Self {
        Check {
            name: name.into(),
            passed: p_value >= alpha,
            outcome: Outcome::Ks {
                statistic,
                p_value,
                alpha,
                n_left,
                n_right,
            },
        }
    }

    pub fn bound(name: impl Into<String>, value: f64, lower: Option<f64>, upper: Option<f64>) -> Self {
        let passed = !value.is_nan()
            && lower.is_none_or(|l| value >= l)
            && upper.is_none_or(|u| value <= u);
        Check {
            name: name.into(),
            passed,
            outcome: Outcome::Bound { value, lower, upper },
        }
    }
}

/// A self-contained record of one verification run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub schema_version: u32,
    pub name: String,
    pub passed: bool,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub checks: Vec<Check>,
}

impl TestReport {
    pub fn new(name: impl Into<String>) -> Self {
        TestReport {
            schema_version: REPORT_SCHEMA_VERSION,
            name: name.into(),
            passed: true,
            seed: None,
            samples: None,
            parameters: BTreeMap::new(),
            checks: Vec::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.samples = Some(n);
        self
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.parameters.insert(
            key.to_string(),
            serde_json::to_value(value).expect("serializable parameter"),
        );
        self
    }

    pub fn push(&mut self, check: Check) {
        self.passed &= check.passed;
        self.checks.push(check);
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    /// Appends the checks of `other`, prefixing their names.
    pub fn absorb(&mut self, prefix: &str, other: TestReport) {
        for mut c in other.checks {
            c.name = format!("{prefix}/{}", c.name);
            self.push(c);
        }
    }
}
