//! The subcommands. Each returns the files it wrote, relative to the output
//! directory, plus a count of failed cells.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use raid_core::data::{load_dataset, write_dataset, Dataset, LoadOptions};
use raid_core::discretize::DiscretizedView;
use raid_core::pipeline::{discover as mine, prepare, run_raid, RaidOutput};
use raid_core::ppmx::Cohesion;
use raid_core::ptest::{test_interaction, TestOptions, TestReport};
use raid_core::rules::{candidates, ColumnPair, PairRow, PairSummary};
use raid_core::sampler::{compute_lpml, run_mcmc, PosteriorDraws};
use raid_core::seed::derive_seed;
use raid_core::simgen::{generate, run_study, StudyConfig, StudyResult};
use serde::Serialize;

use crate::config::RunConfig;
use crate::manifest::{now_unix, RunManifest};

/// Marks errors caused by the inputs rather than by a computation.
#[derive(Debug)]
pub struct Invalid;

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("invalid input")
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<String>,
    pub failures: usize,
}

const DRAWS_FILE: &str = "draws.jsonl";

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<String> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(name.to_string())
}

fn tsv<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().delimiter(b'\t').from_writer(w)
}

pub fn load_data(cfg: &RunConfig, out_dir: &Path, artifacts: &mut Vec<String>) -> Result<Dataset> {
    let d = &cfg.data;
    if let Some(spec) = &d.generator {
        let ds = generate(spec, cfg.data_seed()).context(Invalid)?;
        let mut w = create(out_dir, "data.csv")?;
        write_dataset(&ds, &mut w, &d.response, b',')?;
        w.flush()?;
        artifacts.push("data.csv".into());
        return Ok(ds);
    }
    let path = d.path.as_ref().ok_or_else(|| anyhow!("data.path: no dataset given")).context(Invalid)?;
    let opts = LoadOptions {
        schema: d.columns.clone(),
        response: d.response.clone(),
        response_kind: d.response_kind,
        delimiter: d.delimiter as u8,
    };
    load_dataset(path, &opts)
        .with_context(|| format!("loading {}", path.display()))
        .context(Invalid)
}

fn draws_path(cfg: &RunConfig) -> PathBuf {
    cfg.draws.clone().unwrap_or_else(|| cfg.out_dir.join(DRAWS_FILE))
}

fn read_draws(cfg: &RunConfig, n_rows: usize) -> Result<PosteriorDraws> {
    let path = draws_path(cfg);
    let file = File::open(&path)
        .with_context(|| format!("missing draws file {}; run `fit` first", path.display()))
        .context(Invalid)?;
    let draws = PosteriorDraws::read_jsonl(BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))
        .context(Invalid)?;
    if draws.n_units != n_rows {
        return Err(anyhow!(
            "{} covers {} units but the dataset has {n_rows} rows",
            path.display(),
            draws.n_units
        ))
        .context(Invalid);
    }
    Ok(draws)
}

fn write_draws(dir: &Path, draws: &PosteriorDraws) -> Result<String> {
    let mut w = create(dir, DRAWS_FILE)?;
    draws.write_jsonl(&mut w)?;
    w.flush()?;
    Ok(DRAWS_FILE.into())
}

#[derive(Serialize)]
struct FitReport {
    n_units: usize,
    n_states: usize,
    mean_clusters: f64,
    lpml: f64,
    non_finite_cpo: usize,
    acceptance_sigma_star: f64,
    acceptance_sigma0: f64,
}

fn fit_report(dir: &Path, draws: &PosteriorDraws, fitted: &Dataset) -> Result<String> {
    let lpml = compute_lpml(draws, fitted)?;
    println!("mean clusters {:.3}  LPML {:.3}", lpml.mean_clusters, lpml.lpml);
    write_json(
        dir,
        "fit.json",
        &FitReport {
            n_units: draws.n_units,
            n_states: draws.len(),
            mean_clusters: lpml.mean_clusters,
            lpml: lpml.lpml,
            non_finite_cpo: lpml.non_finite.len(),
            acceptance_sigma_star: draws.acceptance.sigma_star,
            acceptance_sigma0: draws.acceptance.sigma0,
        },
    )
}

pub fn fit(cfg: &RunConfig) -> Result<Outcome> {
    let dir = &cfg.out_dir;
    let mut artifacts = Vec::new();
    let ds = load_data(cfg, dir, &mut artifacts)?;
    let fitted = prepare(&ds, &cfg.raid)?;
    let draws = run_mcmc(&fitted, &cfg.raid.mcmc)?;
    artifacts.push(write_draws(dir, &draws)?);
    artifacts.push(fit_report(dir, &draws, &fitted)?);
    Ok(Outcome { artifacts, failures: 0 })
}

fn column_index(ds: &Dataset, name: &str) -> Result<usize> {
    ds.column_index(name).map_err(anyhow::Error::from).context(Invalid)
}

/// Keeps pairs containing one of the named columns; no names keeps all.
fn filter_pairs(ds: &Dataset, summaries: Vec<PairSummary>, names: &[String]) -> Result<Vec<PairSummary>> {
    if names.is_empty() {
        return Ok(summaries);
    }
    let cols = names.iter().map(|n| column_index(ds, n)).collect::<Result<Vec<_>>>()?;
    Ok(summaries
        .into_iter()
        .filter(|s| cols.iter().any(|&c| s.pair.contains(c)))
        .collect())
}

fn write_pairs(dir: &Path, view: &DiscretizedView, summaries: &[PairSummary], cands: &[PairSummary]) -> Result<String> {
    let mut w = tsv(create(dir, "pairs.tsv")?);
    w.write_record([
        "column_a", "column_b", "pr", "support", "confidence", "cluster_size", "top_count", "candidate",
    ])?;
    for s in summaries {
        let r = PairRow::new(s, view);
        let cand = cands.iter().any(|c| c.pair == s.pair);
        w.write_record([
            r.column_a,
            r.column_b,
            r.pr.to_string(),
            r.support.to_string(),
            r.confidence.to_string(),
            r.cluster_size.to_string(),
            r.top_count.to_string(),
            u8::from(cand).to_string(),
        ])?;
    }
    w.flush()?;
    Ok("pairs.tsv".into())
}

pub fn discover(cfg: &RunConfig) -> Result<Outcome> {
    let dir = &cfg.out_dir;
    let mut artifacts = Vec::new();
    let ds = load_data(cfg, dir, &mut artifacts)?;
    let fitted = prepare(&ds, &cfg.raid)?;
    let draws = read_draws(cfg, ds.n_rows())?;
    let (view, summaries) = mine(&draws, &fitted, &cfg.raid)?;
    let summaries = filter_pairs(&fitted, summaries, &cfg.filter_cols)?;
    let cands = candidates(&summaries, cfg.raid.mode);
    println!("{} pairs, {} candidates", summaries.len(), cands.len());
    artifacts.push(write_pairs(dir, &view, &summaries, &cands)?);
    Ok(Outcome { artifacts, failures: 0 })
}

fn test_stem(columns: &[String]) -> String {
    columns.join("_")
}

fn write_density(dir: &Path, stem: &str, report: &TestReport) -> Result<String> {
    let name = format!("density_{stem}.tsv");
    let mut w = create(dir, &name)?;
    report.density_grid()?.write_table(&mut w, b'\t')?;
    w.flush()?;
    Ok(name)
}

pub fn test(cfg: &RunConfig) -> Result<Outcome> {
    let dir = &cfg.out_dir;
    if !(2..=3).contains(&cfg.test_columns.len()) {
        return Err(anyhow!("test needs a pair or a triple of columns, got {:?}", cfg.test_columns)).context(Invalid);
    }
    let mut artifacts = Vec::new();
    let ds = load_data(cfg, dir, &mut artifacts)?;
    let fitted = prepare(&ds, &cfg.raid)?;
    let cols = cfg.test_columns.iter().map(|n| column_index(&fitted, n)).collect::<Result<Vec<_>>>()?;
    let draws = read_draws(cfg, ds.n_rows())?;
    let view = raid_core::discretize::discretize(&fitted, cfg.raid.bins)?;
    let mut coords = vec!["test".to_string()];
    coords.extend(cfg.test_columns.iter().cloned());
    let opts = TestOptions {
        seed: derive_seed(cfg.raid.test.seed, &coords),
        ..cfg.raid.test
    };
    let report = test_interaction(&draws, &fitted, &view, &cols, &opts)?;
    println!(
        "{}: {} groups, p = {}",
        cfg.test_columns.join(" x "),
        report.groups.len(),
        report.p_value
    );
    let stem = test_stem(&cfg.test_columns);
    artifacts.push(write_json(dir, &format!("test_{stem}.json"), &report)?);
    artifacts.push(write_density(dir, &stem, &report)?);
    Ok(Outcome { artifacts, failures: 0 })
}

pub fn density(cfg: &RunConfig, report_path: &Path) -> Result<Outcome> {
    let file = File::open(report_path)
        .with_context(|| format!("opening {}", report_path.display()))
        .context(Invalid)?;
    let report: TestReport = serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("parsing {}", report_path.display()))
        .context(Invalid)?;
    let stem = test_stem(&report.columns);
    Ok(Outcome {
        artifacts: vec![write_density(&cfg.out_dir, &stem, &report)?],
        failures: 0,
    })
}

fn write_tests(dir: &Path, out: &RaidOutput) -> Result<String> {
    let mut w = tsv(create(dir, "tests.tsv")?);
    w.write_record(["column_a", "column_b", "candidate", "statistic", "p_value", "detected"])?;
    for t in &out.tests {
        w.write_record([
            t.column_a.clone(),
            t.column_b.clone(),
            u8::from(t.candidate).to_string(),
            t.report.statistic.to_string(),
            t.report.p_value.to_string(),
            u8::from(t.detected).to_string(),
        ])?;
    }
    w.flush()?;
    Ok("tests.tsv".into())
}

/// All three stages on an already loaded dataset.
fn run_on(cfg: &RunConfig, ds: &Dataset, artifacts: &mut Vec<String>) -> Result<RaidOutput> {
    let dir = &cfg.out_dir;
    let mut out = run_raid(ds, &cfg.raid)?;
    out.summaries = filter_pairs(&out.fitted, out.summaries, &cfg.filter_cols)?;
    out.candidates = candidates(&out.summaries, cfg.raid.mode);
    out.tests.retain(|t| cfg.filter_cols.is_empty() || cfg.filter_cols.iter().any(|c| *c == t.column_a || *c == t.column_b));
    artifacts.push(write_draws(dir, &out.draws)?);
    artifacts.push(fit_report(dir, &out.draws, &out.fitted)?);
    artifacts.push(write_pairs(dir, &out.view, &out.summaries, &out.candidates)?);
    artifacts.push(write_tests(dir, &out)?);
    Ok(out)
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    let mut artifacts = Vec::new();
    let ds = load_data(cfg, &cfg.out_dir, &mut artifacts)?;
    let out = run_on(cfg, &ds, &mut artifacts)?;
    for t in out.detected() {
        println!("detected {} x {} (p = {})", t.column_a, t.column_b, t.report.p_value);
    }
    Ok(Outcome { artifacts, failures: 0 })
}

struct PointResult {
    detected: Vec<ColumnPair>,
    candidates: usize,
    error: Option<String>,
}

pub fn sweep(cfg: &RunConfig) -> Result<Outcome> {
    let dir = &cfg.out_dir;
    let mut artifacts = Vec::new();
    let ds = load_data(cfg, dir, &mut artifacts)?;
    let points = cfg.sweep.points();
    let log = Mutex::new(
        fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join("progress.log"))?,
    );
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    let results: Vec<PointResult> = pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                let sub = cfg.at_sweep_point(p);
                let started = now_unix();
                let res = fs::create_dir_all(&sub.out_dir).map_err(anyhow::Error::from).and_then(|_| {
                    let mut arts = Vec::new();
                    let out = run_on(&sub, &ds, &mut arts)?;
                    RunManifest::new("run", Vec::new(), &sub, started, arts).write(&sub.out_dir)?;
                    Ok(out)
                });
                let line = match &res {
                    Ok(_) => format!("{} ok\n", p.label),
                    Err(e) => format!("{} failed: {e:#}\n", p.label),
                };
                let _ = log.lock().map(|mut f| f.write_all(line.as_bytes()));
                match res {
                    Ok(out) => PointResult {
                        detected: out.detected().map(|t| t.pair).collect(),
                        candidates: out.candidates.len(),
                        error: None,
                    },
                    Err(e) => PointResult {
                        detected: Vec::new(),
                        candidates: 0,
                        error: Some(format!("{e:#}")),
                    },
                }
            })
            .collect()
    });

    let mut w = tsv(create(dir, "prior_configs.tsv")?);
    w.write_record(["config", "A", "k0", "cohesion", "seed", "candidates", "detected", "error"])?;
    for (p, r) in points.iter().zip(&results) {
        let coh = match p.cohesion {
            Cohesion::Uniform => "uniform".to_string(),
            Cohesion::Dp { m } => format!("dp(M={m})"),
        };
        w.write_record([
            p.label.clone(),
            p.a.to_string(),
            p.k0.to_string(),
            coh,
            cfg.at_sweep_point(p).seed.to_string(),
            r.candidates.to_string(),
            r.detected.len().to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    artifacts.push("prior_configs.tsv".into());

    let mut pairs: Vec<ColumnPair> = results.iter().flat_map(|r| r.detected.iter().copied()).collect();
    pairs.sort();
    pairs.dedup();
    let mut rows: Vec<(ColumnPair, usize)> = pairs
        .into_iter()
        .map(|p| (p, results.iter().filter(|r| r.detected.contains(&p)).count()))
        .collect();
    rows.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
    let mut w = tsv(create(dir, "sweep.tsv")?);
    let mut header = vec!["column_a".to_string(), "column_b".into(), "prior_count".into()];
    header.extend(points.iter().map(|p| p.label.clone()));
    w.write_record(&header)?;
    for (pair, count) in &rows {
        let mut rec = vec![ds.spec(pair.a).name.clone(), ds.spec(pair.b).name.clone(), count.to_string()];
        rec.extend(results.iter().map(|r| u8::from(r.detected.contains(pair)).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    artifacts.push("sweep.tsv".into());
    for (pair, count) in &rows {
        println!("{} x {}: Prior# {count}/{}", ds.spec(pair.a).name, ds.spec(pair.b).name, points.len());
    }
    let failures = results.iter().filter(|r| r.error.is_some()).count();
    Ok(Outcome { artifacts, failures })
}

fn write_study_tables(dir: &Path, res: &StudyResult, artifacts: &mut Vec<String>) -> Result<()> {
    let mut w = create(dir, "cells.tsv")?;
    res.write_cells(&mut w, b'\t')?;
    w.flush()?;
    artifacts.push("cells.tsv".into());
    let mut w = create(dir, "summary.tsv")?;
    res.write_summary(&mut w, b'\t')?;
    w.flush()?;
    artifacts.push("summary.tsv".into());

    // wide tables: one row per method (and metric), one column per generator
    let mut generators: Vec<&str> = Vec::new();
    for s in &res.summaries {
        if !generators.contains(&s.generator.as_str()) {
            generators.push(&s.generator);
        }
    }
    let mut methods = Vec::new();
    for s in &res.summaries {
        if !methods.contains(&s.method) {
            methods.push(s.method);
        }
    }
    let mut w = tsv(create(dir, "rates.tsv")?);
    let mut header = vec!["method".to_string(), "metric".into()];
    header.extend(generators.iter().map(|g| g.to_string()));
    w.write_record(&header)?;
    for &m in &methods {
        type Metric = fn(&raid_core::simgen::MethodSummary) -> f64;
        let metrics: [(&str, Metric); 3] = [
            ("detection_rate", |s| s.detection_rate),
            ("mean_fp", |s| s.mean_fp),
            ("mean_fp_relaxed", |s| s.mean_fp_relaxed),
        ];
        for (name, f) in metrics {
            let mut rec = vec![m.name().to_string(), name.to_string()];
            rec.extend(generators.iter().map(|g| res.summary(g, m).map(|s| f(s).to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    artifacts.push("rates.tsv".into());

    let mut w = tsv(create(dir, "pvalues.tsv")?);
    w.write_record(["generator", "method", "column_a", "column_b", "mean_p"])?;
    for s in &res.summaries {
        for (a, b, p) in &s.mean_p {
            w.write_record([s.generator.as_str(), s.method.name(), a, b, &p.to_string()])?;
        }
    }
    w.flush()?;
    artifacts.push("pvalues.tsv".into());
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome> {
    let study = StudyConfig {
        master_seed: cfg.seed,
        replicates: cfg.study.replicates,
        generators: cfg.study.generators.clone(),
        methods: cfg.study.methods.clone(),
        raid: cfg.raid.clone(),
        lm_alpha: cfg.study.lm_alpha,
        workers: cfg.workers,
    };
    study.validate().context("study").context(Invalid)?;
    let res = run_study(&study)?;
    let mut artifacts = Vec::new();
    write_study_tables(&cfg.out_dir, &res, &mut artifacts)?;
    for s in &res.summaries {
        println!(
            "{:<24} {:<5} rate {:.3}  fp {:.3}  fp(relaxed) {:.3}  failed {}",
            s.generator,
            s.method.name(),
            s.detection_rate,
            s.mean_fp,
            s.mean_fp_relaxed,
            s.n_failed
        );
    }
    let failures = res.summaries.iter().map(|s| s.n_failed).sum();
    Ok(Outcome { artifacts, failures })
}

/// Runs a command by name; `args` holds what the command needs beyond the
/// config.
pub fn dispatch(command: &str, args: &[String], cfg: &RunConfig) -> Result<Outcome> {
    match command {
        "fit" => fit(cfg),
        "discover" => discover(cfg),
        "test" => test(cfg),
        "run" => run(cfg),
        "sweep" => sweep(cfg),
        "simulate" => simulate(cfg),
        "density" => {
            let [report] = args else {
                bail!("density takes one report path");
            };
            density(cfg, Path::new(report))
        }
        other => Err(anyhow!("unknown command `{other}`")).context(Invalid),
    }
}
