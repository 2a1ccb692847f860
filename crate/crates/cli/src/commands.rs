use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use interlacement::gff::GffSampler;
use interlacement::graph::{build_window, collapse, GraphGenerator, WeightedWindow};
use interlacement::interlace::{CollapseSampler, ExcursionSoup, HittingSoup, OccupationBatch, OccupationSampler};
use interlacement::potential::{
    equilibrium, green_killed_with, green_limit, laplace_exact_finite, laplace_exact_limit,
    laplace_green_form, resolvent_check,
};
use interlacement::report::{Outcome as CheckOutcome, TestReport};
use interlacement::verify::{
    asymptotics_test, default_coords, green_structure_test, isomorphism_test, laplace_test,
    moment_test, sampler_agreement_test, shifted_isomorphism_test, vacant_test,
};
use serde::Serialize;
use serde_json::json;

use crate::args::{Battery, Cli, Command, Common, ExactArgs, SampleArgs};
use crate::config::{RunConfig, SamplerChoice};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Passed,
    Failed,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Passed => 0,
            Outcome::Failed => 1,
        }
    }
}

/// Everything a command needs: the resolved config, the graph, its window
/// and the run directory.
struct Run {
    config: RunConfig,
    gen: Box<dyn GraphGenerator>,
    window: WeightedWindow,
    dir: PathBuf,
}

impl Run {
    fn new(command: &str, common: &Common) -> Result<Self> {
        let config = common.resolve()?;
        let gen = config.generator()?;
        let center = config.center(gen.as_ref());
        let window = build_window(gen.as_ref(), &center, config.window.radius)
            .with_context(|| format!("building the radius-{} window around {center}", config.window.radius))?;
        let dir = config
            .output_dir
            .clone()
            .unwrap_or_else(|| common.output_base.join(format!("{command}-s{}", config.seed)));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let run = Run {
            config,
            gen,
            window,
            dir,
        };
        run.write("config.toml", run.config.to_toml()?.as_bytes())?;
        Ok(run)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn create(&self, name: &str) -> Result<BufWriter<fs::File>> {
        let path = self.path(name);
        Ok(BufWriter::new(
            fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        ))
    }

    fn label(&self, x: usize) -> String {
        self.window.vertex(x).to_string()
    }

    /// Writes each report and a summary table; the outcome is the
    /// conjunction of all reports.
    fn finish(&self, reports: &[TestReport]) -> Result<Outcome> {
        for r in reports {
            self.write_json(&format!("{}.json", r.name), r)?;
        }
        let mut csv = csv::Writer::from_path(self.path("summary.csv"))?;
        csv.write_record(["test", "check", "kind", "passed", "value", "reference", "threshold"])?;
        for r in reports {
            for c in &r.checks {
                let (kind, value, reference, threshold) = match c.outcome {
                    CheckOutcome::Exact {
                        value,
                        expected,
                        tolerance,
                    } => ("exact", value, expected, tolerance),
                    CheckOutcome::Moment {
                        estimate,
                        standard_error,
                        expected,
                        n_se,
                    } => ("moment", estimate, expected, n_se * standard_error),
                    CheckOutcome::Ks {
                        statistic,
                        p_value,
                        alpha,
                        ..
                    } => ("ks", statistic, p_value, alpha),
                    CheckOutcome::Bound { value, lower, upper } => (
                        "bound",
                        value,
                        lower.unwrap_or(f64::NEG_INFINITY),
                        upper.unwrap_or(f64::INFINITY),
                    ),
                };
                csv.write_record([
                    r.name.clone(),
                    c.name.clone(),
                    kind.to_string(),
                    c.passed.to_string(),
                    value.to_string(),
                    reference.to_string(),
                    threshold.to_string(),
                ])?;
            }
        }
        csv.flush()?;
        Ok(if reports.iter().all(|r| r.passed) {
            Outcome::Passed
        } else {
            Outcome::Failed
        })
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let workers = match &cli.command {
        Command::Window(c) | Command::Asymptotics(c) => c.workers,
        Command::Exact(a) => a.common.workers,
        Command::Sample(a) => a.common.workers,
        Command::Verify(a) => a.common.workers,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("starting the worker pool")?;
    pool.install(|| match cli.command {
        Command::Window(common) => cmd_window(&common),
        Command::Exact(args) => cmd_exact(&args),
        Command::Sample(args) => cmd_sample(&args),
        Command::Verify(args) => cmd_verify(args.battery, &args.common),
        Command::Asymptotics(common) => cmd_verify(Battery::Asymptotics, &common),
    })
}

fn cmd_window(common: &Common) -> Result<Outcome> {
    let run = Run::new("window", common)?;
    run.write("window.json", run.window.to_json()?.as_bytes())?;
    Ok(Outcome::Passed)
}

fn cmd_exact(args: &ExactArgs) -> Result<Outcome> {
    let mut run = Run::new("exact", &args.common)?;
    if let Some(lambda) = args.lambda {
        run.config.level.lambda = lambda;
        run.config.validate()?;
        run.write("config.toml", run.config.to_toml()?.as_bytes())?;
    }
    let [green_sel, cap_sel, laplace_sel, limit_sel, resolvent_sel] = args.selection();
    let c = &run.config;
    let w = &run.window;
    let mut reports = Vec::new();

    if green_sel {
        let green = green_killed_with(w, c.tolerances.green_asymmetry).context("Green matrix")?;
        let mut out = run.create("green.csv")?;
        writeln!(out, "x,y,g")?;
        for x in 0..w.len() {
            for y in 0..w.len() {
                writeln!(out, "\"{}\",\"{}\",{}", run.label(x), run.label(y), green.get(x, y))?;
            }
        }
        out.flush()?;
        reports.push(green_structure_test(w, &green));
    }

    if cap_sel {
        let k = c.k_on(run.gen.as_ref(), w)?;
        let eq = equilibrium(&k, w).context("equilibrium measure")?;
        let masses: Vec<_> = eq
            .support
            .iter()
            .map(|&x| json!({ "vertex": run.label(x), "mass": eq.mass[x] }))
            .collect();
        run.write_json(
            "capacity.json",
            &json!({
                "window_hash": w.content_hash(),
                "K": k.iter().map(|&x| run.label(x)).collect::<Vec<_>>(),
                "capacity": eq.capacity,
                "equilibrium": masses,
            }),
        )?;
    }

    if laplace_sel {
        let v = c.potential_on(run.gen.as_ref(), w)?;
        let mut k: Vec<usize> = (0..w.len()).filter(|&x| v[x] > 0.0).collect();
        if k.is_empty() {
            k.push(0);
        }
        let u = c.level.u;
        let finite = laplace_exact_finite(&v, &k, w, u).context("finite-volume Laplace transform")?;
        let green = green_killed_with(w, c.tolerances.green_asymmetry)?;
        let green_form = laplace_green_form(&green, &v, u)?;
        let limit = laplace_exact_limit(
            &c.potential_pairs(run.gen.as_ref()),
            run.gen.as_ref(),
            u,
            &c.window.schedule,
            c.window.limit_tol,
        );
        run.write_json(
            "laplace.json",
            &json!({
                "window_hash": w.content_hash(),
                "u": u,
                "V": c.potential.v.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
                "exact_finite": finite,
                "green_form": green_form,
                "limit": limit.as_ref().ok(),
                "limit_error": limit.as_ref().err().map(|e| e.to_string()),
            }),
        )?;
    }

    if limit_sel {
        let center = c.center(run.gen.as_ref());
        let lim = green_limit(run.gen.as_ref(), &center, &center, &c.window.schedule, c.window.limit_tol)
            .context("window limit of the Green function")?;
        run.write_json(
            "green_limit.json",
            &json!({ "vertex": center.to_string(), "tol": c.window.limit_tol, "limit": lim }),
        )?;
    }

    if resolvent_sel {
        let v = c.potential_on(run.gen.as_ref(), w)?;
        let mut report = resolvent_check(&v, w, c.level.lambda, c.tolerances.resolvent)
            .context("resolvent check")?;
        report.name = "resolvent".into();
        reports.push(report);
    }
    run.finish(&reports)
}

fn cmd_sample(args: &SampleArgs) -> Result<Outcome> {
    let mut run = Run::new("sample", &args.common)?;
    if let Some(s) = args.sampler {
        run.config.sampling.sampler = s;
        run.write("config.toml", run.config.to_toml()?.as_bytes())?;
    }
    let c = &run.config;
    let w = &run.window;
    let (n, u, seed) = (c.sampling.samples, c.level.u, c.seed);
    let hash = w.content_hash();

    let write_batch = |batch: &OccupationBatch, extra: serde_json::Value| -> Result<()> {
        let mut out = run.create("samples.csv")?;
        batch.samples.write_csv(w, &mut out)?;
        out.flush()?;
        let mut sidecar = serde_json::to_value(batch.sidecar(&hash))?;
        if let (Some(map), serde_json::Value::Object(more)) = (sidecar.as_object_mut(), extra) {
            map.extend(more);
        }
        run.write_json("samples.json", &sidecar)
    };

    match c.sampling.sampler {
        SamplerChoice::Collapse => {
            let batch = CollapseSampler::new(&collapse(w)?).batch(u, n, seed)?;
            write_batch(&batch, json!({}))?;
        }
        SamplerChoice::Excursion => {
            let soup = ExcursionSoup::new(w)?;
            let batch = soup.batch(u, n, seed)?;
            write_batch(&batch, json!({ "intensity": soup.intensity() }))?;
        }
        SamplerChoice::Hitting => {
            let k = c.k_on(run.gen.as_ref(), w)?;
            let soup = HittingSoup::new(&k, w)?;
            let batch = soup.batch(u, n, seed)?;
            write_batch(
                &batch,
                json!({
                    "K": k.iter().map(|&x| run.label(x)).collect::<Vec<_>>(),
                    "capacity": soup.capacity(),
                }),
            )?;
        }
        SamplerChoice::Gff => {
            let green = green_killed_with(w, c.tolerances.green_asymmetry)?;
            let batch = GffSampler::new(&green)?.batch(n, seed);
            let mut out = run.create("samples.csv")?;
            batch.samples.write_csv(w, &mut out)?;
            out.flush()?;
            run.write_json("samples.json", &batch.sidecar(&hash))?;
        }
    }
    Ok(Outcome::Passed)
}

fn cmd_verify(battery: Battery, common: &Common) -> Result<Outcome> {
    let name = match battery {
        Battery::Asymptotics => "asymptotics",
        _ => "verify",
    };
    let run = Run::new(name, common)?;
    let c = &run.config;
    let w = &run.window;
    let (u, n, seed) = (c.level.u, c.sampling.samples, c.seed);
    let coords = default_coords(w);
    let selected: Vec<Battery> = if battery == Battery::All {
        vec![
            Battery::Isomorphism,
            Battery::Shifted,
            Battery::Laplace,
            Battery::Vacant,
            Battery::Moments,
            Battery::Agreement,
            Battery::Asymptotics,
        ]
    } else {
        vec![battery]
    };
    let mut reports = Vec::new();
    for b in selected {
        let report = match b {
            Battery::Isomorphism => isomorphism_test(w, u, n, &coords, seed),
            Battery::Shifted => shifted_isomorphism_test(w, u, c.level.shift, n, &coords, seed),
            Battery::Laplace => laplace_test(w, u, &c.potential_on(run.gen.as_ref(), w)?, n, seed),
            Battery::Vacant => vacant_test(w, &c.k_on(run.gen.as_ref(), w)?, u, n, seed),
            Battery::Moments => moment_test(w, u, n, &coords, seed),
            Battery::Agreement => sampler_agreement_test(w, u, &c.k_on(run.gen.as_ref(), w)?, n, seed),
            Battery::Asymptotics => asymptotics_test(w, &c.level.schedule, n, 0, &coords, seed),
            Battery::All => unreachable!("expanded above"),
        }
        .map_err(|e| anyhow!("{b:?} battery: {e}"))?;
        reports.push(report);
    }
    run.finish(&reports)
}
