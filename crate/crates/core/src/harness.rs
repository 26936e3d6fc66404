//! Experiment orchestration.
//!
//! A run plans every resample up front from streams derived off the master
//! seed, trains every configured system on the same training view of each
//! resample, scores each trained model on every test corpus, and aggregates
//! the recall vectors. Jobs run on a worker pool; results are collected in
//! resample order so output bytes do not depend on the worker count.
//!
//! Configuration is a flat `key = value` file:
//!
//! ```text
//! seed = 42
//! train = data/wsj-train.iob2
//! test.wsj20 = data/wsj-test.iob2
//! test.atis = data/atis.iob2
//! method = bootstrap        # or: cv
//! samples = 50              # bootstrap resamples
//! folds = 5                 # cv only
//! repetitions = 10          # cv only
//! system.mbsl1 = mbsl context=1
//! system.mbsl3 = mbsl context=3
//! system.snow = winnow alpha=1.5 beta=0.5 theta=6 epochs=2
//! output_dir = out
//! workers = 8
//! ```

use std::fmt::Write as _;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::corpus::{read_corpus, Corpus};
use crate::error::{Error, Result};
use crate::evalstats::{compare_paired, score_run, summarize, RecallSamples, RunMetrics};
use crate::mbsl::{mbsl_train, MbslConfig, MbslModel};
use crate::resample::{derive_stream, fnv1a64, plan_bootstrap, plan_cv, BootstrapPlan, CvPlan, Plan};
use crate::winnow::{winnow_train, WinnowConfig, WinnowNetwork};
use crate::Chunker;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Bootstrap { samples: usize },
    Cv { k: usize, repetitions: usize },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Bootstrap { .. } => "bootstrap".into(),
            Method::Cv { k, .. } => format!("{k}-cv"),
        }
    }

    pub fn resample_count(&self) -> usize {
        match *self {
            Method::Bootstrap { samples } => samples,
            Method::Cv { k, repetitions } => k * repetitions,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SystemKind {
    Mbsl(MbslConfig),
    Winnow(WinnowConfig),
}

impl SystemKind {
    pub fn parse(text: &str) -> Result<SystemKind> {
        let mut parts = text.split_whitespace();
        let kind = parts.next().ok_or_else(|| Error::Config("empty system definition".into()))?;
        let params: Vec<(&str, &str)> = parts
            .map(|p| {
                p.split_once('=')
                    .ok_or_else(|| Error::Config(format!("system parameter {p:?} is not key=value")))
            })
            .collect::<Result<_>>()?;
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
        }
        let system = match kind {
            "mbsl" => {
                let mut c = MbslConfig::default();
                for (k, v) in params {
                    match k {
                        "context" => c.context = num(k, v)?,
                        "max_tile_len" => c.max_tile_len = num(k, v)?,
                        "threshold" => c.threshold = num(k, v)?,
                        "min_positive_count" => c.min_positive_count = num(k, v)?,
                        _ => return Err(Error::Config(format!("unknown mbsl parameter {k:?}"))),
                    }
                }
                c.validate()?;
                SystemKind::Mbsl(c)
            }
            "winnow" => {
                let mut c = WinnowConfig::default();
                for (k, v) in params {
                    match k {
                        "alpha" => c.alpha = num(k, v)?,
                        "beta" => c.beta = num(k, v)?,
                        "theta" => c.theta = num(k, v)?,
                        "epochs" => c.epochs = num(k, v)?,
                        _ => return Err(Error::Config(format!("unknown winnow parameter {k:?}"))),
                    }
                }
                c.validate()?;
                SystemKind::Winnow(c)
            }
            other => return Err(Error::Config(format!("unknown system kind {other:?}"))),
        };
        Ok(system)
    }

    pub fn canonical(&self) -> String {
        match self {
            SystemKind::Mbsl(c) => format!(
                "mbsl context={} max_tile_len={} threshold={} min_positive_count={}",
                c.context, c.max_tile_len, c.threshold, c.min_positive_count
            ),
            SystemKind::Winnow(c) => format!(
                "winnow alpha={} beta={} theta={} epochs={}",
                c.alpha, c.beta, c.theta, c.epochs
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub name: String,
    pub kind: SystemKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub training_corpus: PathBuf,
    pub test_corpora: Vec<(String, PathBuf)>,
    pub method: Method,
    pub systems: Vec<SystemSpec>,
    pub output_dir: Option<PathBuf>,
    pub workers: usize,
}

fn check_label(kind: &str, label: &str) -> Result<()> {
    let ok = !label.is_empty()
        && label
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{kind} label {label:?} must be non-empty ASCII letters, digits, '-' or '.'"
        )))
    }
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Later `overrides`
    /// (`key=value`) replace earlier settings of the same key. Relative paths
    /// resolve against `base_dir`.
    pub fn parse(text: &str, overrides: &[String], base_dir: &Path) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        let lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim().to_owned())
            .chain(overrides.iter().map(|o| o.trim().to_owned()));
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("entry {} ({line:?}) is not key = value", i + 1)))?;
            let (k, v) = (k.trim().to_owned(), v.trim().to_owned());
            match entries.iter_mut().find(|(key, _)| *key == k) {
                Some(slot) => slot.1 = v,
                None => entries.push((k, v)),
            }
        }

        let get = |key: &str| entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let int = |key: &str| -> Result<Option<u64>> {
            get(key)
                .map(|v| {
                    v.parse()
                        .map_err(|_| Error::Config(format!("{key} = {v:?} is not a non-negative integer")))
                })
                .transpose()
        };
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_relative() {
                base_dir.join(p)
            } else {
                p
            }
        };

        let method = match get("method").unwrap_or("bootstrap") {
            "bootstrap" => Method::Bootstrap {
                samples: int("samples")?.unwrap_or(100) as usize,
            },
            "cv" => Method::Cv {
                k: int("folds")?.unwrap_or(5) as usize,
                repetitions: int("repetitions")?.unwrap_or(1) as usize,
            },
            other => return Err(Error::Config(format!("unknown method {other:?}"))),
        };

        let mut test_corpora = Vec::new();
        let mut systems = Vec::new();
        for (k, v) in &entries {
            if let Some(label) = k.strip_prefix("test.") {
                check_label("test", label)?;
                test_corpora.push((label.to_owned(), resolve(v)));
            } else if let Some(name) = k.strip_prefix("system.") {
                check_label("system", name)?;
                systems.push(SystemSpec {
                    name: name.to_owned(),
                    kind: SystemKind::parse(v)?,
                });
            } else if !matches!(
                k.as_str(),
                "seed" | "train" | "method" | "samples" | "folds" | "repetitions" | "output_dir" | "workers"
            ) {
                return Err(Error::Config(format!("unknown key {k:?}")));
            }
        }

        let config = ExperimentConfig {
            master_seed: int("seed")?.unwrap_or(0),
            training_corpus: resolve(get("train").ok_or_else(|| Error::Config("missing train".into()))?),
            test_corpora,
            method,
            systems,
            output_dir: get("output_dir").map(resolve),
            workers: int("workers")?.unwrap_or(1) as usize,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, overrides, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            Method::Bootstrap { samples } if samples < 1 => {
                return Err(Error::Config("bootstrap needs at least one sample".into()))
            }
            Method::Cv { k, repetitions } if k < 2 || repetitions < 1 => {
                return Err(Error::Config("cv needs folds >= 2 and repetitions >= 1".into()))
            }
            _ => {}
        }
        if self.test_corpora.is_empty() {
            return Err(Error::Config("at least one test corpus is required".into()));
        }
        if self.systems.is_empty() {
            return Err(Error::Config("at least one system is required".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        for (i, s) in self.systems.iter().enumerate() {
            if self.systems[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::Config(format!("duplicate system {:?}", s.name)));
            }
        }
        for (i, (t, _)) in self.test_corpora.iter().enumerate() {
            if self.test_corpora[..i].iter().any(|(o, _)| o == t) {
                return Err(Error::Config(format!("duplicate test corpus {t:?}")));
            }
        }
        Ok(())
    }

    /// Settings that determine results. Worker count and output location are
    /// excluded.
    pub fn canonical_text(&self) -> String {
        let mut out = format!(
            "seed={}\ntrain={}\n",
            self.master_seed,
            self.training_corpus.display()
        );
        match self.method {
            Method::Bootstrap { samples } => {
                let _ = writeln!(out, "method=bootstrap\nsamples={samples}");
            }
            Method::Cv { k, repetitions } => {
                let _ = writeln!(out, "method=cv\nfolds={k}\nrepetitions={repetitions}");
            }
        }
        for (label, path) in &self.test_corpora {
            let _ = writeln!(out, "test.{label}={}", path.display());
        }
        for s in &self.systems {
            let _ = writeln!(out, "system.{}={}", s.name, s.kind.canonical());
        }
        out
    }

    pub fn config_hash(&self) -> u64 {
        fnv1a64(self.canonical_text().as_bytes())
    }
}

enum Trained {
    Mbsl(MbslModel),
    Winnow(WinnowNetwork),
}

impl Chunker for Trained {
    fn predict(&self, sentence: &crate::Sentence) -> Vec<crate::ChunkSpan> {
        match self {
            Trained::Mbsl(m) => m.predict(sentence),
            Trained::Winnow(w) => w.predict(sentence),
        }
    }
}

/// One unit of work: a training view identified by its resample id.
#[derive(Debug, Clone)]
pub struct Resample {
    pub resample_id: u64,
    pub digest: u64,
    plan: usize,
    fold: Option<usize>,
}

/// All plans of an experiment, in resample order.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub plans: Vec<Plan>,
    pub resamples: Vec<Resample>,
}

pub fn schedule(config: &ExperimentConfig, train: &Corpus) -> Result<Schedule> {
    let mut plans = Vec::new();
    let mut resamples = Vec::new();
    match config.method {
        Method::Bootstrap { samples } => {
            let n0 = train.instance_count();
            for b in 0..samples as u64 {
                let plan = plan_bootstrap(train, n0, b, &mut derive_stream(config.master_seed, "bootstrap", b))?;
                resamples.push(Resample {
                    resample_id: b,
                    digest: fnv1a64(plan.to_line().as_bytes()),
                    plan: plans.len(),
                    fold: None,
                });
                plans.push(Plan::Bootstrap(plan));
            }
        }
        Method::Cv { k, repetitions } => {
            for rep in 0..repetitions as u64 {
                let plan = plan_cv(train, k, &mut derive_stream(config.master_seed, "cv", rep))?;
                let line = plan.to_line();
                for fold in 0..k {
                    resamples.push(Resample {
                        resample_id: rep * k as u64 + fold as u64,
                        digest: fnv1a64(format!("{line}\tfold={fold}").as_bytes()),
                        plan: plans.len(),
                        fold: Some(fold),
                    });
                }
                plans.push(Plan::Cv(plan));
            }
        }
    }
    Ok(Schedule { plans, resamples })
}

fn training_view(schedule: &Schedule, resample: &Resample, train: &Corpus) -> Result<Corpus> {
    match (&schedule.plans[resample.plan], resample.fold) {
        (Plan::Bootstrap(p), _) => BootstrapPlan::training_view(p, train),
        (Plan::Cv(p), Some(fold)) => CvPlan::training_view(p, train, fold),
        (Plan::Cv(_), None) => unreachable!("cv resamples carry a fold"),
    }
}

/// `metrics[system][test]` for one training view.
fn train_and_score(
    config: &ExperimentConfig,
    view: &Corpus,
    tests: &[(String, Corpus)],
    winnow_purpose: &str,
    index: u64,
) -> Result<Vec<Vec<RunMetrics>>> {
    config
        .systems
        .iter()
        .map(|system| {
            let model = match &system.kind {
                SystemKind::Mbsl(c) => Trained::Mbsl(mbsl_train(view, c)?),
                SystemKind::Winnow(c) => {
                    let mut rng = derive_stream(config.master_seed, winnow_purpose, index);
                    Trained::Winnow(winnow_train(view, c, &mut rng)?)
                }
            };
            tests
                .iter()
                .map(|(_, test)| {
                    let predicted: Vec<_> = test.sentences.iter().map(|s| model.predict(s)).collect();
                    score_run(test, &predicted)
                })
                .collect()
        })
        .collect()
}

fn run_resample(
    config: &ExperimentConfig,
    schedule: &Schedule,
    resample: &Resample,
    train: &Corpus,
    tests: &[(String, Corpus)],
) -> Result<Vec<Vec<RunMetrics>>> {
    let job = AssertUnwindSafe(|| {
        let view = training_view(schedule, resample, train)?;
        train_and_score(config, &view, tests, "winnow", resample.resample_id)
    });
    match panic::catch_unwind(job) {
        Ok(Ok(m)) => Ok(m),
        Ok(Err(e)) => Err(Error::Resample {
            resample_id: resample.resample_id,
            message: e.to_string(),
        }),
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            Err(Error::Resample {
                resample_id: resample.resample_id,
                message,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub system: String,
    pub test: String,
    pub n: usize,
    pub mean: f64,
    pub std: Option<f64>,
    pub e_full: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairRow {
    pub system_a: String,
    pub system_b: String,
    pub test: String,
    pub rho: Option<f64>,
    pub p_a_gt_b: f64,
    pub p_tie: f64,
    pub sigma_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XcorrRow {
    pub system: String,
    pub test_a: String,
    pub test_b: String,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub master_seed: u64,
    pub config_hash: u64,
    pub method: String,
    pub plan_lines: Vec<String>,
    /// `(resample_id, plan digest)` in resample order; shared by every system.
    pub digests: Vec<(u64, u64)>,
    pub summary: Vec<SummaryRow>,
    pub pairs: Vec<PairRow>,
    pub xcorr: Vec<XcorrRow>,
    /// `samples[system][test]`
    pub samples: Vec<Vec<RecallSamples>>,
    pub system_names: Vec<String>,
    pub test_names: Vec<String>,
}

impl ExperimentReport {
    pub fn samples_for(&self, system: &str, test: &str) -> Option<&RecallSamples> {
        let s = self.system_names.iter().position(|n| n == system)?;
        let t = self.test_names.iter().position(|n| n == test)?;
        Some(&self.samples[s][t])
    }

    pub fn summary_for(&self, system: &str, test: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.system == system && r.test == test)
    }

    pub fn pair_for(&self, a: &str, b: &str, test: &str) -> Option<&PairRow> {
        self.pairs
            .iter()
            .find(|r| r.system_a == a && r.system_b == b && r.test == test)
    }

    pub fn xcorr_for(&self, system: &str, a: &str, b: &str) -> Option<f64> {
        self.xcorr
            .iter()
            .find(|r| r.system == system && ((r.test_a == a && r.test_b == b) || (r.test_a == b && r.test_b == a)))
            .and_then(|r| r.rho)
    }
}

fn pair_row(a: &RecallSamples, b: &RecallSamples) -> (Option<f64>, f64, f64, Option<f64>) {
    if a.values.len() >= 2 {
        let c = compare_paired(a, b).expect("aligned samples");
        (c.rho, c.p_a_gt_b, c.p_tie, Some(c.sigma_diff))
    } else {
        let n = a.values.len() as f64;
        let gt = a.values.iter().zip(&b.values).filter(|(x, y)| x > y).count() as f64;
        let tie = a.values.iter().zip(&b.values).filter(|(x, y)| x == y).count() as f64;
        (None, gt / n, tie / n, None)
    }
}

/// Runs an experiment on corpora already in memory. Nothing is written.
pub fn run_with_data(config: &ExperimentConfig, train: &Corpus, tests: &[(String, Corpus)]) -> Result<ExperimentReport> {
    config.validate()?;
    if tests.len() != config.test_corpora.len() {
        return Err(Error::Argument(format!(
            "{} test corpora supplied for {} configured",
            tests.len(),
            config.test_corpora.len()
        )));
    }
    let schedule = schedule(config, train)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    let (results, full) = pool.install(|| {
        let results: Vec<Result<Vec<Vec<RunMetrics>>>> = schedule
            .resamples
            .par_iter()
            .map(|r| run_resample(config, &schedule, r, train, tests))
            .collect();
        let full = train_and_score(config, train, tests, "winnow-full", 0);
        (results, full)
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let full = full?;

    let system_names: Vec<String> = config.systems.iter().map(|s| s.name.clone()).collect();
    let test_names: Vec<String> = config.test_corpora.iter().map(|(t, _)| t.clone()).collect();
    let samples: Vec<Vec<RecallSamples>> = system_names
        .iter()
        .enumerate()
        .map(|(s, sys)| {
            test_names
                .iter()
                .enumerate()
                .map(|(t, test)| RecallSamples::new(format!("{sys}_{test}"), results.iter().map(|r| r[s][t].recall()).collect()))
                .collect()
        })
        .collect();

    let mut summary = Vec::new();
    let mut xcorr = Vec::new();
    for (s, sys) in system_names.iter().enumerate() {
        for (t, test) in test_names.iter().enumerate() {
            let d = summarize(&samples[s][t])?;
            summary.push(SummaryRow {
                system: sys.clone(),
                test: test.clone(),
                n: d.n,
                mean: d.mean,
                std: d.std,
                e_full: full[s][t].recall(),
            });
        }
        for a in 0..test_names.len() {
            for b in a + 1..test_names.len() {
                xcorr.push(XcorrRow {
                    system: sys.clone(),
                    test_a: test_names[a].clone(),
                    test_b: test_names[b].clone(),
                    rho: pair_row(&samples[s][a], &samples[s][b]).0,
                });
            }
        }
    }
    let mut pairs = Vec::new();
    for a in 0..system_names.len() {
        for b in a + 1..system_names.len() {
            for (t, test) in test_names.iter().enumerate() {
                let (rho, p_a_gt_b, p_tie, sigma_diff) = pair_row(&samples[a][t], &samples[b][t]);
                pairs.push(PairRow {
                    system_a: system_names[a].clone(),
                    system_b: system_names[b].clone(),
                    test: test.clone(),
                    rho,
                    p_a_gt_b,
                    p_tie,
                    sigma_diff,
                });
            }
        }
    }

    Ok(ExperimentReport {
        master_seed: config.master_seed,
        config_hash: config.config_hash(),
        method: config.method.label(),
        plan_lines: schedule.plans.iter().map(Plan::to_line).collect(),
        digests: schedule.resamples.iter().map(|r| (r.resample_id, r.digest)).collect(),
        summary,
        pairs,
        xcorr,
        samples,
        system_names,
        test_names,
    })
}

fn load_corpora(config: &ExperimentConfig) -> Result<(Corpus, Vec<(String, Corpus)>)> {
    let train = read_corpus(&config.training_corpus)?;
    let tests = config
        .test_corpora
        .iter()
        .map(|(label, path)| Ok((label.clone(), read_corpus(path)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((train, tests))
}

/// Reads the corpora, runs the experiment and writes the report when an
/// output directory is configured.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let (train, tests) = load_corpora(config)?;
    let report = run_with_data(config, &train, &tests)?;
    if let Some(dir) = &config.output_dir {
        write_report(&report, dir)?;
    }
    Ok(report)
}

/// `(system, test, metrics)` rows of one replayed resample.
pub type ReplayRows = Vec<(String, String, RunMetrics)>;

/// Re-runs the single resample whose plan digest is `digest`; returns its
/// resample id and metrics.
pub fn replay(config: &ExperimentConfig, digest: u64) -> Result<(u64, ReplayRows)> {
    let (train, tests) = load_corpora(config)?;
    replay_with_data(config, &train, &tests, digest)
}

pub fn replay_with_data(
    config: &ExperimentConfig,
    train: &Corpus,
    tests: &[(String, Corpus)],
    digest: u64,
) -> Result<(u64, ReplayRows)> {
    let schedule = schedule(config, train)?;
    let resample = schedule
        .resamples
        .iter()
        .find(|r| r.digest == digest)
        .ok_or_else(|| Error::Argument(format!("no resample has plan digest {digest:016x}")))?;
    let metrics = run_resample(config, &schedule, resample, train, tests)?;
    let mut rows = Vec::new();
    for (s, system) in config.systems.iter().enumerate() {
        for (t, (test, _)) in tests.iter().enumerate() {
            rows.push((system.name.clone(), test.clone(), metrics[s][t]));
        }
    }
    Ok((resample.resample_id, rows))
}

pub fn fmt_num(x: f64) -> String {
    format!("{x:.6}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_owned(), fmt_num)
}

fn provenance(report: &ExperimentReport) -> String {
    format!(
        "# seed={}\tconfig_hash={:016x}\tmethod={}\n",
        report.master_seed, report.config_hash, report.method
    )
}

pub fn summary_tsv(report: &ExperimentReport) -> String {
    let mut out = provenance(report);
    out.push_str("system\ttest\tmethod\tn\tmean\tstd\te_full\n");
    for r in &report.summary {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.system,
            r.test,
            report.method,
            r.n,
            fmt_num(r.mean),
            fmt_opt(r.std),
            fmt_num(r.e_full)
        );
    }
    out
}

pub fn pairs_tsv(report: &ExperimentReport) -> String {
    let mut out = provenance(report);
    out.push_str("system_a\tsystem_b\ttest\trho\tp_a_gt_b\tp_tie\tsigma_diff\n");
    for r in &report.pairs {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.system_a,
            r.system_b,
            r.test,
            fmt_opt(r.rho),
            fmt_num(r.p_a_gt_b),
            fmt_num(r.p_tie),
            fmt_opt(r.sigma_diff)
        );
    }
    out
}

pub fn xcorr_tsv(report: &ExperimentReport) -> String {
    let mut out = provenance(report);
    out.push_str("system\ttest_a\ttest_b\trho\n");
    for r in &report.xcorr {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", r.system, r.test_a, r.test_b, fmt_opt(r.rho));
    }
    out
}

pub fn samples_tsv(report: &ExperimentReport, samples: &RecallSamples) -> String {
    let mut out = provenance(report);
    out.push_str("resample_id\trecall\n");
    for ((id, _), v) in report.digests.iter().zip(&samples.values) {
        let _ = writeln!(out, "{id}\t{}", fmt_num(*v));
    }
    out
}

pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    let sample_dir = dir.join("samples");
    fs::create_dir_all(&sample_dir).map_err(|e| Error::io(&sample_dir, e))?;
    let write = |path: PathBuf, body: String| fs::write(&path, body).map_err(|e| Error::io(&path, e));
    write(dir.join("summary.tsv"), summary_tsv(report))?;
    write(dir.join("pairs.tsv"), pairs_tsv(report))?;
    write(dir.join("xcorr.tsv"), xcorr_tsv(report))?;

    let mut plans = provenance(report);
    for line in &report.plan_lines {
        plans.push_str(line);
        plans.push('\n');
    }
    write(dir.join("plans.tsv"), plans)?;
    let mut digests = provenance(report);
    digests.push_str("resample_id\tdigest\n");
    for (id, d) in &report.digests {
        let _ = writeln!(digests, "{id}\t{d:016x}");
    }
    write(dir.join("digests.tsv"), digests)?;

    for (s, system) in report.system_names.iter().enumerate() {
        for (t, test) in report.test_names.iter().enumerate() {
            write(
                sample_dir.join(format!("{system}_{test}.tsv")),
                samples_tsv(report, &report.samples[s][t]),
            )?;
        }
    }
    Ok(())
}

/// Reads a `resample_id<TAB>recall` file. Lines starting with `#` and a
/// `resample_id` header are skipped.
pub fn read_samples(path: &Path) -> Result<(Vec<u64>, RecallSamples)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') || line.starts_with("resample_id") {
            continue;
        }
        let parse_err = |m: &str| Error::Parse {
            line: i + 1,
            message: format!("{}: {m}", path.display()),
        };
        let (id, v) = line.split_once('\t').ok_or_else(|| parse_err("expected resample_id<TAB>recall"))?;
        ids.push(id.parse().map_err(|_| parse_err("bad resample id"))?);
        let v: f64 = v.parse().map_err(|_| parse_err("bad recall value"))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(parse_err("recall outside [0, 1]"));
        }
        values.push(v);
    }
    Ok((ids, RecallSamples::new(label, values)))
}

/// Summary for every sample vector, paired comparisons for every pair when
/// there are two or more, and the correlation matrix when there are three or
/// more.
pub fn stats_report(samples: &[RecallSamples]) -> Result<String> {
    if samples.is_empty() {
        return Err(Error::Argument("no sample files given".into()));
    }
    let n = samples[0].values.len();
    if let Some(bad) = samples.iter().find(|s| s.values.len() != n) {
        return Err(Error::Argument(format!(
            "{:?} has {} samples, expected {n}",
            bad.label,
            bad.values.len()
        )));
    }
    let mut out = String::from("label\tn\tmean\tstd\n");
    for s in samples {
        let d = summarize(s)?;
        let _ = writeln!(out, "{}\t{}\t{}\t{}", s.label, d.n, fmt_num(d.mean), fmt_opt(d.std));
    }
    if samples.len() >= 2 {
        out.push_str("\nlabel_a\tlabel_b\trho\tp_a_gt_b\tp_tie\tsigma_diff\n");
        for i in 0..samples.len() {
            for j in i + 1..samples.len() {
                let (rho, gt, tie, sd) = pair_row(&samples[i], &samples[j]);
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    samples[i].label,
                    samples[j].label,
                    fmt_opt(rho),
                    fmt_num(gt),
                    fmt_num(tie),
                    fmt_opt(sd)
                );
            }
        }
    }
    if samples.len() >= 3 {
        out.push_str("\nrho");
        for s in samples {
            out.push('\t');
            out.push_str(&s.label);
        }
        out.push('\n');
        for (i, s) in samples.iter().enumerate() {
            out.push_str(&s.label);
            for (j, t) in samples.iter().enumerate() {
                let r = if i == j { Some(1.0) } else { pair_row(s, t).0 };
                out.push('\t');
                out.push_str(&fmt_opt(r));
            }
            out.push('\n');
        }
    }
    Ok(out)
}

/// Loads aligned sample files for [`stats_report`].
pub fn load_aligned_samples(paths: &[PathBuf]) -> Result<Vec<RecallSamples>> {
    let mut reference: Option<Vec<u64>> = None;
    let mut out = Vec::new();
    for p in paths {
        let (ids, samples) = read_samples(p)?;
        match &reference {
            Some(r) if *r != ids => {
                return Err(Error::Argument(format!(
                    "{} is not aligned with {} by resample id",
                    p.display(),
                    paths[0].display()
                )))
            }
            None => reference = Some(ids),
            _ => {}
        }
        out.push(samples);
    }
    Ok(out)
}
