//! Verification batteries. Each returns a [`TestReport`] whose checks compare
//! Monte Carlo output against exact values recomputed from the potential
//! module, or two samplers against each other by two-sample KS.
//!
//! Both sides of every distributional comparison live on the same window,
//! where the identities hold exactly, so a failure points at a sampler and
//! not at truncation.

mod ks;

pub use ks::{kolmogorov_survival, two_sample_ks, KsResult};

use crate::error::{domain, Error, Result};
use crate::gff::{shifted_square_field, GffSampler};
use crate::graph::{collapse, WeightedWindow};
use crate::interlace::{
    mean_occupation_per_level, CollapseSampler, ExcursionSoup, HittingSoup, OccupationBatch,
    OccupationSampler,
};
use crate::potential::{
    equilibrium, green_killed, hitting_routes, laplace_exact_finite, laplace_green_form,
    GreenMatrix,
};
use crate::report::{Check, TestReport};
use crate::rng::derive_seed;
use crate::samples::SampleMatrix;
use crate::stats::{covariance_se, mean_se, variance_se};
use crate::tolerances;

pub use crate::report::{Outcome, REPORT_SCHEMA_VERSION};

/// Origin, its first neighbor and the first vertex at distance two, as far
/// as the window reaches. Only these marginals (and their pairs) are tested;
/// all finite-dimensional marginals cannot be.
pub fn default_coords(window: &WeightedWindow) -> Vec<usize> {
    let mut coords: Vec<usize> = (0..3).filter_map(|d| window.first_at_depth(d)).collect();
    coords.dedup();
    coords
}

fn check_coords(window: &WeightedWindow, coords: &[usize]) -> Result<()> {
    if coords.is_empty() {
        return Err(Error::EmptySet);
    }
    match coords.iter().find(|&&x| x >= window.len()) {
        Some(x) => Err(Error::OutsideWindow(format!("index {x}"))),
        None => Ok(()),
    }
}

fn check_count(count: usize) -> Result<()> {
    if count < 2 {
        return Err(domain(format!("need at least 2 samples, got {count}")));
    }
    Ok(())
}

fn check_level(u: f64) -> Result<()> {
    if !(u >= 0.0) || !u.is_finite() {
        return Err(domain(format!("level must be finite and nonnegative, got {u}")));
    }
    Ok(())
}

/// Two-sample KS over several coordinates with a shared Bonferroni family.
struct KsFamily {
    pending: Vec<(String, Vec<f64>, Vec<f64>)>,
}

impl KsFamily {
    fn new() -> Self {
        KsFamily {
            pending: Vec::new(),
        }
    }

    fn add(&mut self, name: String, a: Vec<f64>, b: Vec<f64>) {
        self.pending.push((name, a, b));
    }

    fn finish(self, report: &mut TestReport, family_alpha: f64) -> Result<()> {
        let alpha = family_alpha / self.pending.len().max(1) as f64;
        for (name, a, b) in self.pending {
            let r = two_sample_ks(&a, &b)?;
            report.push(Check::ks(name, r.statistic, r.p_value, alpha, a.len(), b.len()));
        }
        Ok(())
    }
}

/// Header shared by the Monte Carlo reports, recording the tolerance policy.
fn statistical_report(name: &str, seed: u64, count: usize, window: &WeightedWindow) -> TestReport {
    TestReport::new(name)
        .with_seed(seed)
        .with_samples(count)
        .param("window_hash", window.content_hash())
        .param("n_se", tolerances::N_SE)
        .param("ks_family_alpha", tolerances::KS_FAMILY_ALPHA)
}

fn label(window: &WeightedWindow, x: usize) -> String {
    window.vertex(x).to_string()
}

fn collapse_batch(window: &WeightedWindow, u: f64, count: usize, seed: u64) -> Result<OccupationBatch> {
    CollapseSampler::new(&collapse(window)?).batch(u, count, seed)
}

pub fn isomorphism_test(
    window: &WeightedWindow,
    u: f64,
    count: usize,
    coords: &[usize],
    seed: u64,
) -> Result<TestReport> {
    isomorphism_battery("isomorphism", window, u, 0.0, count, coords, seed)
}

/// `L + (phi + a)^2 / 2` against `(phi' + sqrt(2u + a^2))^2 / 2` with
/// independent fields `phi`, `phi'`.
pub fn shifted_isomorphism_test(
    window: &WeightedWindow,
    u: f64,
    a: f64,
    count: usize,
    coords: &[usize],
    seed: u64,
) -> Result<TestReport> {
    isomorphism_battery("shifted-isomorphism", window, u, a, count, coords, seed)
}

#[allow(clippy::too_many_arguments)]
fn isomorphism_battery(
    name: &str,
    window: &WeightedWindow,
    u: f64,
    a: f64,
    count: usize,
    coords: &[usize],
    seed: u64,
) -> Result<TestReport> {
    check_level(u)?;
    check_count(count)?;
    check_coords(window, coords)?;
    if !a.is_finite() {
        return Err(domain(format!("shift must be finite, got {a}")));
    }
    let green = green_killed(window)?;
    let per_level = mean_occupation_per_level(window, &green);
    let gff = GffSampler::new(&green)?;

    let occupation = collapse_batch(window, u, count, derive_seed(seed, "occupation"))?;
    let phi = gff.batch(count, derive_seed(seed, "gff-left")).samples;
    let left = occupation
        .samples
        .zip_with(&shifted_square_field(&phi, a), |l, s| l + s);
    let phi_right = gff.batch(count, derive_seed(seed, "gff-right")).samples;
    let shift = (2.0 * u + a * a).sqrt();
    let right = shifted_square_field(&phi_right, shift);

    let mut report = statistical_report(name, seed, count, window)
        .param("u", u)
        .param("a", a)
        .param("coords", coords.iter().map(|&x| label(window, x)).collect::<Vec<_>>())
        .param("gff_jitter", gff.jitter());

    let mut family = KsFamily::new();
    for &x in coords {
        family.add(format!("ks {}", label(window, x)), left.column(x), right.column(x));
    }
    family.finish(&mut report, tolerances::KS_FAMILY_ALPHA)?;

    for &x in coords {
        let g = green.get(x, x);
        let (m, se) = mean_se(&left.column(x));
        report.push(Check::moment(
            format!("mean left {}", label(window, x)),
            m,
            se,
            u * per_level[x] + (a * a + g) / 2.0,
            tolerances::N_SE,
        ));
        let (m, se) = mean_se(&right.column(x));
        report.push(Check::moment(
            format!("mean right {}", label(window, x)),
            m,
            se,
            (shift * shift + g) / 2.0,
            tolerances::N_SE,
        ));
    }
    for (i, &x) in coords.iter().enumerate() {
        for &y in &coords[i..] {
            let g = green.get(x, y);
            // Cov(L_x, L_y) = 2u g plus the Isserlis term for the squares.
            let expected_left = 2.0 * u * g + a * a * g + 0.5 * g * g;
            let expected_right = shift * shift * g + 0.5 * g * g;
            let pair = format!("{},{}", label(window, x), label(window, y));
            let (c, se) = covariance_se(&left.column(x), &left.column(y));
            report.push(Check::moment(format!("cov left {pair}"), c, se, expected_left, tolerances::N_SE));
            let (c, se) = covariance_se(&right.column(x), &right.column(y));
            report.push(Check::moment(format!("cov right {pair}"), c, se, expected_right, tolerances::N_SE));
        }
    }
    Ok(report)
}

/// Empirical `E[exp(-sum V L)]` from the collapse, excursion-soup and
/// hitting-soup samplers against the exact finite-volume value, with `K`
/// the support of `V` (the center when `V` vanishes).
pub fn laplace_test(
    window: &WeightedWindow,
    u: f64,
    v: &[f64],
    count: usize,
    seed: u64,
) -> Result<TestReport> {
    check_level(u)?;
    check_count(count)?;
    if v.len() != window.len() {
        return Err(domain(format!(
            "potential has {} entries for a window of {}",
            v.len(),
            window.len()
        )));
    }
    let mut k: Vec<usize> = (0..window.len()).filter(|&x| v[x] > 0.0).collect();
    if k.is_empty() {
        k.push(0);
    }
    let exact = laplace_exact_finite(v, &k, window, u)?;
    let green = green_killed(window)?;
    let green_form = laplace_green_form(&green, v, u)?;

    let mut report = statistical_report("laplace", seed, count, window)
        .param("u", u)
        .param(
            "V",
            k.iter()
                .filter(|&&x| v[x] > 0.0)
                .map(|&x| (label(window, x), v[x]))
                .collect::<Vec<_>>(),
        )
        .param("exact", exact);
    report.push(Check::exact("exact vs green form", exact, green_form, tolerances::RESOLVENT));

    type Draw<'a> = Box<dyn Fn() -> Result<OccupationBatch> + 'a>;
    let samplers: [(&str, Draw); 3] = [
        ("collapse", Box::new(|| collapse_batch(window, u, count, seed))),
        ("excursion-soup", Box::new(|| ExcursionSoup::new(window)?.batch(u, count, seed))),
        ("hitting-soup", Box::new(|| HittingSoup::new(&k, window)?.batch(u, count, seed))),
    ];
    for (name, run) in samplers {
        let batch = run()?;
        let (m, se) = mean_se(&laplace_functional(&batch.samples, v));
        report.push(Check::moment(name, m, se, exact, tolerances::N_SE));
    }
    Ok(report)
}

/// `exp(-sum_x V(x) L_x)` per sample row.
pub fn laplace_functional(samples: &SampleMatrix, v: &[f64]) -> Vec<f64> {
    samples
        .rows()
        .map(|r| (-r.iter().zip(v).map(|(l, w)| l * w).sum::<f64>()).exp())
        .collect()
}

/// Vacancy of `K` under the collapse and excursion-soup samplers against
/// `exp(-u cap_U(K))`, with the binomial standard error of the exact value.
pub fn vacant_test(
    window: &WeightedWindow,
    k: &[usize],
    u: f64,
    count: usize,
    seed: u64,
) -> Result<TestReport> {
    check_level(u)?;
    check_count(count)?;
    let capacity = if k.is_empty() {
        0.0
    } else {
        equilibrium(k, window)?.capacity
    };
    let p = (-u * capacity).exp();
    let se = (p * (1.0 - p) / count as f64).sqrt();
    let mut report = statistical_report("vacant", seed, count, window)
        .param("u", u)
        .param("K", k.iter().map(|&x| label(window, x)).collect::<Vec<_>>())
        .param("capacity", capacity);
    let batches = [
        ("collapse", collapse_batch(window, u, count, seed)?),
        ("excursion-soup", ExcursionSoup::new(window)?.batch(u, count, seed)?),
    ];
    for (name, batch) in batches {
        let vacant = batch
            .samples
            .rows()
            .filter(|r| k.iter().all(|&x| r[x] == 0.0))
            .count();
        report.push(Check::moment(
            name,
            vacant as f64 / count as f64,
            se,
            p,
            tolerances::N_SE,
        ));
    }
    Ok(report)
}

/// Means `u` and covariances `2u g_U(x, y)` of the occupation field from
/// the collapse and excursion-soup samplers.
pub fn moment_test(
    window: &WeightedWindow,
    u: f64,
    count: usize,
    coords: &[usize],
    seed: u64,
) -> Result<TestReport> {
    check_level(u)?;
    check_count(count)?;
    check_coords(window, coords)?;
    let green = green_killed(window)?;
    let per_level = mean_occupation_per_level(window, &green);
    let mut report = statistical_report("moments", seed, count, window)
        .param("u", u)
        .param("coords", coords.iter().map(|&x| label(window, x)).collect::<Vec<_>>());
    let batches = [
        ("collapse", collapse_batch(window, u, count, seed)?),
        ("excursion-soup", ExcursionSoup::new(window)?.batch(u, count, seed)?),
    ];
    for (name, batch) in batches {
        for (i, &x) in coords.iter().enumerate() {
            let col_x = batch.samples.column(x);
            let (m, se) = mean_se(&col_x);
            report.push(Check::moment(
                format!("{name} mean {}", label(window, x)),
                m,
                se,
                u * per_level[x],
                tolerances::N_SE,
            ));
            for &y in &coords[i..] {
                let (c, se) = covariance_se(&col_x, &batch.samples.column(y));
                report.push(Check::moment(
                    format!("{name} cov {},{}", label(window, x), label(window, y)),
                    c,
                    se,
                    2.0 * u * green.get(x, y),
                    tolerances::N_SE,
                ));
            }
        }
    }
    Ok(report)
}

/// Collapse against excursion soup on every vertex, and hitting soup
/// against collapse on `K`, in one Bonferroni family.
pub fn sampler_agreement_test(
    window: &WeightedWindow,
    u: f64,
    k: &[usize],
    count: usize,
    seed: u64,
) -> Result<TestReport> {
    check_level(u)?;
    check_count(count)?;
    check_coords(window, k)?;
    let collapse = collapse_batch(window, u, count, seed)?;
    let soup = ExcursionSoup::new(window)?.batch(u, count, seed)?;
    let hitting = HittingSoup::new(k, window)?.batch(u, count, seed)?;
    let mut report = statistical_report("sampler-agreement", seed, count, window)
        .param("u", u)
        .param("K", k.iter().map(|&x| label(window, x)).collect::<Vec<_>>());
    let mut family = KsFamily::new();
    for x in 0..window.len() {
        family.add(
            format!("collapse vs excursion-soup {}", label(window, x)),
            collapse.samples.column(x),
            soup.samples.column(x),
        );
    }
    for &x in k {
        family.add(
            format!("collapse vs hitting-soup {}", label(window, x)),
            collapse.samples.column(x),
            hitting.samples.column(x),
        );
    }
    family.finish(&mut report, tolerances::KS_FAMILY_ALPHA)?;
    Ok(report)
}

/// Large-level behavior: `field / u` concentrates at 1 with variance
/// `2 g / u`, `(field - u) / sqrt(2u)` is close to the free field, and so
/// are the differences pinned at `x0`. The KS checks run at the largest
/// level of the schedule.
pub fn asymptotics_test(
    window: &WeightedWindow,
    levels: &[f64],
    count: usize,
    x0: usize,
    coords: &[usize],
    seed: u64,
) -> Result<TestReport> {
    check_count(count)?;
    check_coords(window, coords)?;
    check_coords(window, &[x0])?;
    if levels.is_empty() || levels.iter().any(|&u| !(u > 0.0) || !u.is_finite()) {
        return Err(domain("levels must be nonempty, finite and positive"));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("levels must be strictly increasing"));
    }
    let green = green_killed(window)?;
    let per_level = mean_occupation_per_level(window, &green);
    let sampler = CollapseSampler::new(&collapse(window)?);
    let mut report = statistical_report("asymptotics", seed, count, window)
        .param("levels", levels)
        .param("x0", label(window, x0))
        .param("coords", coords.iter().map(|&x| label(window, x)).collect::<Vec<_>>());

    let mut last = None;
    for (i, &u) in levels.iter().enumerate() {
        let batch = sampler.batch(u, count, derive_seed(seed, &format!("level-{i}")))?;
        let scaled = batch.samples.map(|l| l / u);
        for &x in coords {
            let col = scaled.column(x);
            let (m, se) = mean_se(&col);
            report.push(Check::moment(
                format!("u={u} mean field/u {}", label(window, x)),
                m,
                se,
                per_level[x],
                tolerances::N_SE,
            ));
            let (var, se) = variance_se(&col);
            report.push(Check::moment(
                format!("u={u} var field/u {}", label(window, x)),
                var,
                se,
                2.0 * green.get(x, x) / u,
                tolerances::N_SE,
            ));
        }
        last = Some((u, batch));
    }

    let (u, batch) = last.expect("nonempty schedule");
    let scale = (2.0 * u).sqrt();
    let phi = GffSampler::new(&green)?
        .batch(count, derive_seed(seed, "gff"))
        .samples;
    let mut family = KsFamily::new();
    for &x in coords {
        let standardized: Vec<f64> = batch
            .samples
            .column(x)
            .iter()
            .map(|l| (l - u * per_level[x]) / scale)
            .collect();
        family.add(
            format!("u={u} standardized {}", label(window, x)),
            standardized,
            phi.column(x),
        );
    }
    for &x in coords.iter().filter(|&&x| x != x0) {
        let pinned: Vec<f64> = batch
            .samples
            .rows()
            .map(|r| (r[x] - r[x0]) / scale)
            .collect();
        let gauss: Vec<f64> = phi.rows().map(|r| r[x] - r[x0]).collect();
        family.add(
            format!("u={u} pinned {} - {}", label(window, x), label(window, x0)),
            pinned,
            gauss,
        );
    }
    family.finish(&mut report, tolerances::KS_FAMILY_ALPHA)?;
    Ok(report)
}

/// Hitting identity `P_x[H_K < T_U] = sum_y g_U(x, y) e_{K,U}(y)` on each
/// `(x, K)` pair.
pub fn hitting_identity_test(
    window: &WeightedWindow,
    green: &GreenMatrix,
    pairs: &[(usize, Vec<usize>)],
    tol: f64,
) -> Result<TestReport> {
    let mut report = TestReport::new("hitting-identity")
        .param("window_hash", window.content_hash())
        .param("pairs", pairs.len());
    for (x, k) in pairs {
        let (direct, via_green) = hitting_routes(window, green, *x, k)?;
        let ks: Vec<String> = k.iter().map(|&y| label(window, y)).collect();
        report.push(Check::exact(
            format!("x={} K={{{}}}", label(window, *x), ks.join(" ")),
            direct,
            via_green,
            tol,
        ));
    }
    Ok(report)
}

/// Symmetry before symmetrization and positive definiteness of a Green
/// matrix.
pub fn green_structure_test(window: &WeightedWindow, green: &GreenMatrix) -> TestReport {
    let mut report = TestReport::new("green-structure")
        .param("window_hash", window.content_hash())
        .param("radius", window.radius());
    report.push(Check::bound(
        "asymmetry",
        green.asymmetry(),
        None,
        Some(tolerances::GREEN_ASYMMETRY),
    ));
    report.push(Check::bound("min eigenvalue", green.min_eigenvalue(), Some(0.0), None));
    report
}
