//! Command implementations behind the `ptca-sense` binary.
//!
//! Each command validates its whole configuration up front, runs its
//! scenarios on a pool of `jobs` threads and writes every output file
//! atomically. Outputs depend only on the config and seed.

mod config;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{ControllerConfig, FitConfig, FitTarget, RunConfig, SCHEMA_VERSION};

use crate::control::{
    compare_runs, format_table, run_perturbation, run_tracking, Bench, Mode, PerturbationResult,
    TrackingResult,
};
use crate::error::{Error, Result};
use crate::ident::{fit_dynamic, fit_inductance, goodness, Dataset, FitReport, Goodness};
use crate::model::{DynamicParams, InductanceParams};
use crate::observer::Observer;
use crate::plant::{run_scenario, Scenario, ScenarioKind};

/// A validated config plus where to write and how many threads to use.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub jobs: usize,
}

impl Context {
    /// Applies the seed override and validates everything before any
    /// command touches the filesystem.
    pub fn new(config: RunConfig, out: impl Into<PathBuf>, jobs: usize) -> Result<Self> {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        config.validate()?;
        Ok(Self {
            config: config.seeded(),
            out: out.into(),
            jobs,
        })
    }

    fn pool<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(f)
    }

    fn scenarios(&self, keep: impl Fn(&ScenarioKind) -> bool) -> Vec<Scenario> {
        self.config
            .scenarios
            .iter()
            .filter(|s| keep(&s.kind))
            .cloned()
            .collect()
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn columns_csv(cols: &[(&str, &[f64])]) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    wtr.write_record(cols.iter().map(|(n, _)| *n)).map_err(io)?;
    let n = cols.first().map_or(0, |(_, v)| v.len());
    for i in 0..n {
        wtr.write_record(cols.iter().map(|(_, v)| v[i].to_string()))
            .map_err(io)?;
    }
    wtr.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn dataset_csv(data: &Dataset, extra: &[(&str, &[f64])]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    data.write_csv_with(&mut buf, extra)?;
    Ok(buf)
}

fn rel(ctx: &Context, path: &Path) -> String {
    path.strip_prefix(&ctx.out)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub data: String,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamic: Option<FitReport<DynamicParams>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inductance: Option<FitReport<InductanceParams>>,
}

fn every_nth(data: &Dataset, stride: usize) -> Dataset {
    Dataset {
        samples: data.samples.iter().step_by(stride).copied().collect(),
        meta: data.meta.clone(),
    }
}

/// Fits the force model and/or inductance map. Without input data a
/// calibration grid is simulated and stored next to the results. Results
/// are written even when the inductance fit fails to converge, which is
/// then reported as [`Error::NotConverged`].
pub fn cmd_fit(ctx: &Context, data: Option<&Path>, model: Option<FitTarget>) -> Result<FitSummary> {
    let cfg = &ctx.config;
    let model = model.unwrap_or(cfg.fit.model);
    let path = data.map(Path::to_path_buf).or_else(|| cfg.data.clone());
    let (dataset, source) = match &path {
        Some(p) => (Dataset::read_csv(p)?, p.display().to_string()),
        None => {
            let s = Scenario::calibration_grid();
            let d = run_scenario(&s, &cfg.plant)?;
            let file = ctx.out.join("calibration_grid.csv");
            write_atomic(&file, &dataset_csv(&d, &[])?)?;
            (d, rel(ctx, &file))
        }
    };
    if matches!(model, FitTarget::Dynamic | FitTarget::Both) {
        dataset.require_column("F")?;
        dataset.require_column("x")?;
    }
    if matches!(model, FitTarget::Inductance | FitTarget::Both) {
        dataset.require_column("F")?;
    }

    let dynamic = match model {
        FitTarget::Dynamic | FitTarget::Both => Some(fit_dynamic(&dataset)?),
        FitTarget::Inductance => None,
    };
    let inductance = match model {
        FitTarget::Inductance | FitTarget::Both => {
            let init = match cfg.fit.init {
                Some(p) => InductanceParams::new(p)?,
                None => cfg.plant.inductance,
            };
            let sub = every_nth(&dataset, cfg.fit.stride);
            Some(ctx.pool(|| fit_inductance(&sub, &init, &cfg.fit.bounds, &cfg.fit.options))?)
        }
        FitTarget::Dynamic => None,
    };

    if let Some(r) = &dynamic {
        write_json(&ctx.out.join("dynamic_params.json"), &r.params)?;
    }
    if let Some(r) = &inductance {
        write_json(&ctx.out.join("inductance_params.json"), &r.params)?;
    }
    let summary = FitSummary {
        data: source,
        samples: dataset.len(),
        dynamic,
        inductance,
    };
    write_json(&ctx.out.join("fit_report.json"), &summary)?;
    if let Some(r) = &summary.inductance {
        if !r.converged {
            return Err(Error::NotConverged(format!(
                "inductance fit stopped after {} iterations (rmse {:.3e})",
                r.iterations, r.rmse
            )));
        }
    }
    Ok(summary)
}

// ----------------------------------------------------------- estimate

/// Goodness of one estimated channel, or why it could not be scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSection {
    pub available: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Goodness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl MetricSection {
    fn score(estimate: &[f64], truth: Option<Vec<f64>>, what: &str) -> Result<Self> {
        Ok(match truth {
            Some(t) => Self {
                available: true,
                metrics: Some(goodness(estimate, &t)?),
                reason: None,
            },
            None => Self {
                available: false,
                metrics: None,
                reason: Some(format!("dataset has no {what} column")),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub data: String,
    pub estimates: String,
    pub samples: usize,
    pub force: MetricSection,
    pub displacement: MetricSection,
}

/// Runs the observer over every sample in order.
pub fn estimate_series(data: &Dataset, bench: &Bench) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut obs = Observer::new(
        bench.observer,
        bench.inductance,
        bench.dynamic,
        &bench.filter,
        None,
    )?;
    let mut f_hat = Vec::with_capacity(data.len());
    let mut x_hat = Vec::with_capacity(data.len());
    for s in &data.samples {
        let e = obs.step(s.l, s.p)?;
        f_hat.push(e.f_hat);
        x_hat.push(e.x_hat);
    }
    Ok((f_hat, x_hat))
}

/// Estimates force and length from `t, P, L`. Without input data the
/// cyclic estimation scenario is simulated. Truth columns, when present,
/// are scored into `metrics.json`.
pub fn cmd_estimate(ctx: &Context, data: Option<&Path>) -> Result<EstimateSummary> {
    let cfg = &ctx.config;
    let path = data.map(Path::to_path_buf).or_else(|| cfg.data.clone());
    let bench = cfg.bench()?;
    let (dataset, source) = match &path {
        Some(p) => (Dataset::read_csv(p)?, p.display().to_string()),
        None => {
            let d = run_scenario(&Scenario::cyclic_estimation(), &cfg.plant)?;
            (d, "cyclic_estimation (simulated)".to_string())
        }
    };
    let (f_hat, x_hat) = estimate_series(&dataset, &bench)?;

    let force_truth = dataset
        .samples
        .iter()
        .map(|s| s.reference_force())
        .collect::<Option<Vec<f64>>>();
    let length_truth = dataset
        .samples
        .iter()
        .map(|s| s.x)
        .collect::<Option<Vec<f64>>>();

    let file = ctx.out.join("estimates.csv");
    write_atomic(
        &file,
        &dataset_csv(&dataset, &[("F_hat", &f_hat), ("x_hat", &x_hat)])?,
    )?;
    let summary = EstimateSummary {
        data: source,
        estimates: rel(ctx, &file),
        samples: dataset.len(),
        force: MetricSection::score(&f_hat, force_truth, "force")?,
        displacement: MetricSection::score(&x_hat, length_truth, "length")?,
    };
    write_json(&ctx.out.join("metrics.json"), &summary)?;
    Ok(summary)
}

// ----------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedRun {
    pub scenario: String,
    pub kind: String,
    pub samples: usize,
    pub file: String,
}

/// Open-loop scenarios straight through the plant. Closed-loop kinds
/// belong to `track` and `perturb` and are rejected here.
pub fn cmd_simulate(ctx: &Context) -> Result<Vec<SimulatedRun>> {
    let mut scenarios = ctx.config.scenarios.clone();
    if scenarios.is_empty() {
        scenarios = vec![
            Scenario::isobaric_sweep(),
            Scenario::calibration_grid(),
            Scenario::isometric_sweep(),
            Scenario::cyclic_estimation(),
        ];
    }
    if let Some(s) = scenarios.iter().find(|s| s.kind.is_closed_loop()) {
        return Err(Error::Config(format!(
            "scenario `{}` is closed-loop ({}); use track or perturb",
            s.name,
            s.kind.label()
        )));
    }
    let plant = &ctx.config.plant;
    let data = ctx.pool(|| {
        scenarios
            .par_iter()
            .map(|s| run_scenario(s, plant))
            .collect::<Result<Vec<_>>>()
    })?;
    let dir = ctx.out.join("simulate");
    let mut runs = Vec::new();
    for (s, d) in scenarios.iter().zip(&data) {
        let file = dir.join(format!("{}.csv", s.name));
        write_atomic(&file, &dataset_csv(d, &[])?)?;
        runs.push(SimulatedRun {
            scenario: s.name.clone(),
            kind: s.kind.label().to_string(),
            samples: d.len(),
            file: rel(ctx, &file),
        });
    }
    write_json(&dir.join("simulate.json"), &runs)?;
    Ok(runs)
}

// -------------------------------------------------------------- track

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub scenario: String,
    pub quantity: String,
    pub mode: String,
    pub rmse: f64,
    pub mae: f64,
    pub nrmse: f64,
    pub r2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub improvement: Option<f64>,
    pub file: String,
}

fn tracking_file(dir: &Path, r: &TrackingResult) -> PathBuf {
    dir.join(format!("{}_{}.csv", r.scenario, r.mode.key()))
}

/// All three feedback modes on every tracking scenario; the config's
/// tracking scenarios, or the standard suite when it lists none.
pub fn cmd_track(ctx: &Context) -> Result<Vec<TrackRow>> {
    let mut scenarios = ctx.scenarios(|k| {
        matches!(
            k,
            ScenarioKind::ForceTracking(_) | ScenarioKind::DisplacementTracking(_)
        )
    });
    if scenarios.is_empty() {
        scenarios = Scenario::tracking_suite();
    }
    let bench = ctx.config.bench()?;
    let jobs: Vec<(&Scenario, Mode)> = scenarios
        .iter()
        .flat_map(|s| Mode::ALL.iter().map(move |&m| (s, m)))
        .collect();
    let results = ctx.pool(|| {
        jobs.par_iter()
            .map(|(s, m)| run_tracking(s, *m, &bench))
            .collect::<Result<Vec<_>>>()
    })?;
    let groups = compare_runs(results);

    let dir = ctx.out.join("track");
    let mut rows = Vec::new();
    for g in &groups {
        for r in &g.runs {
            let file = tracking_file(&dir, r);
            write_atomic(&file, &columns_csv(&r.columns())?)?;
            rows.push(TrackRow {
                scenario: g.scenario.clone(),
                quantity: format!("{:?}", g.quantity).to_lowercase(),
                mode: r.mode.key().to_string(),
                rmse: r.metrics.rmse,
                mae: r.mae,
                nrmse: r.metrics.nrmse,
                r2: r.metrics.r2,
                improvement: match r.mode {
                    Mode::OpenLoop => None,
                    m => g.improvement(m),
                },
                file: rel(ctx, &file),
            });
        }
    }
    write_atomic(&dir.join("table.txt"), format_table(&groups).as_bytes())?;
    write_json(&dir.join("table.json"), &rows)?;
    Ok(rows)
}

// ------------------------------------------------------------ perturb

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbSummary {
    pub scenario: String,
    pub events: usize,
    pub max_abs_error: f64,
    pub rmse: f64,
    pub drift: f64,
    pub length_rmse: f64,
    pub file: String,
}

fn perturb_summary(
    ctx: &Context,
    name: &str,
    r: &PerturbationResult,
    file: &Path,
) -> PerturbSummary {
    PerturbSummary {
        scenario: name.to_string(),
        events: r.schedule.events.len(),
        max_abs_error: r.max_abs_error,
        rmse: r.rmse,
        drift: r.drift,
        length_rmse: r.length_rmse,
        file: rel(ctx, file),
    }
}

/// Self-sensed length hold under random step loads.
pub fn cmd_perturb(ctx: &Context) -> Result<Vec<PerturbSummary>> {
    let mut scenarios = ctx.scenarios(|k| matches!(k, ScenarioKind::LoadPerturbation(_)));
    if scenarios.is_empty() {
        let mut s = Scenario::load_perturbation();
        if let (Some(seed), ScenarioKind::LoadPerturbation(p)) = (ctx.config.seed, &mut s.kind) {
            p.seed = seed.wrapping_add(1);
        }
        scenarios.push(s);
    }
    let bench = ctx.config.bench()?;
    let results = ctx.pool(|| {
        scenarios
            .par_iter()
            .map(|s| run_perturbation(s, &bench))
            .collect::<Result<Vec<_>>>()
    })?;
    let dir = ctx.out.join("perturb");
    let mut out = Vec::new();
    for (s, r) in scenarios.iter().zip(&results) {
        let file = dir.join(format!("{}.csv", s.name));
        write_atomic(&file, &columns_csv(&r.columns())?)?;
        out.push(perturb_summary(ctx, &s.name, r, &file));
    }
    write_json(&dir.join("perturb.json"), &out)?;
    Ok(out)
}

// ------------------------------------------------------------- report

/// One reported number and the time-series file it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub section: String,
    pub scenario: String,
    pub metric: String,
    pub value: f64,
    pub unit: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub provenance: Provenance,
    pub metrics: Vec<MetricEntry>,
    /// Plot-ready series and tables, relative to the output directory.
    pub files: Vec<String>,
}

/// Runs estimation, tracking and perturbation and collects every metric
/// with a pointer to its source series.
pub fn cmd_report(ctx: &Context) -> Result<Report> {
    let sub = |name: &str| Context {
        out: ctx.out.join(name),
        ..ctx.clone()
    };
    let mut metrics = Vec::new();
    let mut files = Vec::new();
    let mut push =
        |section: &str, scenario: &str, metric: &str, value: f64, unit: &str, source: String| {
            metrics.push(MetricEntry {
                section: section.into(),
                scenario: scenario.into(),
                metric: metric.into(),
                value,
                unit: unit.into(),
                source,
            })
        };

    let est_ctx = sub("estimate");
    let est = cmd_estimate(&est_ctx, None)?;
    let est_file = format!("estimate/{}", est.estimates);
    for (name, sec, unit) in [
        ("force", &est.force, "N"),
        ("displacement", &est.displacement, "m"),
    ] {
        if let Some(g) = sec.metrics {
            push(
                "estimation",
                "cyclic_estimation",
                &format!("{name}_rmse"),
                g.rmse,
                unit,
                est_file.clone(),
            );
            push(
                "estimation",
                "cyclic_estimation",
                &format!("{name}_nrmse"),
                g.nrmse,
                "%",
                est_file.clone(),
            );
            push(
                "estimation",
                "cyclic_estimation",
                &format!("{name}_r2"),
                g.r2,
                "",
                est_file.clone(),
            );
        }
    }
    files.push(est_file);
    files.push("estimate/metrics.json".into());

    let rows = cmd_track(ctx)?;
    for r in &rows {
        let unit = if r.quantity == "force" { "N" } else { "m" };
        let src = r.file.clone();
        let scen = format!("{}/{}", r.scenario, r.mode);
        push("tracking", &scen, "rmse", r.rmse, unit, src.clone());
        push("tracking", &scen, "mae", r.mae, unit, src.clone());
        if let Some(i) = r.improvement {
            push("tracking", &scen, "improvement", i, "%", src.clone());
        }
        files.push(src);
    }
    files.push("track/table.txt".into());
    files.push("track/table.json".into());

    for p in cmd_perturb(ctx)? {
        let src = p.file.clone();
        push(
            "perturbation",
            &p.scenario,
            "max_abs_error",
            p.max_abs_error,
            "N",
            src.clone(),
        );
        push(
            "perturbation",
            &p.scenario,
            "rmse",
            p.rmse,
            "N",
            src.clone(),
        );
        push(
            "perturbation",
            &p.scenario,
            "drift",
            p.drift,
            "N",
            src.clone(),
        );
        push(
            "perturbation",
            &p.scenario,
            "length_rmse",
            p.length_rmse,
            "m",
            src.clone(),
        );
        files.push(src);
    }
    files.push("perturb/perturb.json".into());

    let report = Report {
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: ctx.config.hash(),
            seed: ctx.config.plant.seed,
        },
        metrics,
        files,
    };
    write_json(&ctx.out.join("report.json"), &report)?;
    Ok(report)
}
