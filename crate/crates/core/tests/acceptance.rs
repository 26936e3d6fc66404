//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints its PASS/FAIL line even when all of them pass.

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use np_resample::corpus::{generate_corpus, GenreGrammar, NpCount, Pattern};
use np_resample::evalstats::{compare_paired, score_run, std_of_differences, summarize};
use np_resample::harness::{run_with_data, ExperimentConfig, ExperimentReport, Method, SystemKind, SystemSpec};
use np_resample::mbsl::{mbsl_train, MbslConfig};
use np_resample::resample::{derive_stream, plan_bootstrap, plan_cv, PrngStream};
use np_resample::winnow::{WinnowConfig, WinnowUnit};
use np_resample::{Chunker, Corpus, RecallSamples};
use proptest::test_runner::{Config as ProptestConfig, TestRunner};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn wsj(n: usize, seed: u64) -> Corpus {
    generate_corpus(&GenreGrammar::wsj_like(), n, &mut derive_stream(seed, "gen-wsj", 0)).unwrap()
}

fn bootstrap_uniqueness() -> Outcome {
    let start = Instant::now();
    let corpus = wsj(1000, 21);
    let n0 = corpus.instance_count();
    let plans = 200;
    let mut total = 0.0;
    for b in 0..plans {
        let plan = plan_bootstrap(&corpus, n0, b, &mut derive_stream(21, "bootstrap", b)).unwrap();
        total += plan.unique_sentences() as f64 / corpus.len() as f64;
    }
    let mean = total / plans as f64;
    let elapsed = start.elapsed();
    outcome(
        (0.622..=0.642).contains(&mean) && elapsed < Duration::from_secs(5),
        format!("mean unique fraction {mean:.4} (limit 0.6321), {elapsed:.2?}"),
    )
}

fn bootstrap_overshoot() -> Outcome {
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 200,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    let strategy = (any_seed(), 1usize..400, 0.05f64..1.5);
    let result = runner.run(&strategy, |(seed, n_sentences, frac)| {
        let corpus = wsj(n_sentences, seed);
        let n0 = ((corpus.instance_count() as f64 * frac).ceil() as usize).max(1);
        let plan = plan_bootstrap(&corpus, n0, 0, &mut PrngStream::new(seed)).unwrap();
        let count = plan.instance_count(&corpus);
        let max = corpus.max_sentence_instances();
        proptest::prop_assert!(count >= n0 && count < n0 + max, "count {count}, n0 {n0}, max {max}");
        let last = *plan.sentence_indices.last().unwrap();
        proptest::prop_assert!(count - corpus.sentences[last].instance_count() < n0);
        Ok(())
    });
    match result {
        Ok(()) => outcome(true, "200 plans within [n0, n0 + max - 1] and minimal"),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn any_seed() -> std::ops::RangeInclusive<u64> {
    0..=u64::MAX
}

fn cv_balance() -> Outcome {
    let corpus = wsj(8936, 3);
    let start = Instant::now();
    let max = corpus.max_sentence_instances();
    let mut worst = 0;
    let mut partitioned = true;
    for k in [3, 5, 10, 20] {
        let plan = plan_cv(&corpus, k, &mut derive_stream(3, "cv", k as u64)).unwrap();
        worst = worst.max(plan.imbalance());
        let mut sentences = 0;
        let mut instances = 0;
        for fold in 0..k {
            let held = plan.held_out_view(&corpus, fold).unwrap();
            sentences += held.len();
            instances += held.instance_count();
            partitioned &= plan.fold_instance_counts[fold] == held.instance_count();
        }
        partitioned &= sentences == corpus.len()
            && instances == corpus.instance_count()
            && plan.fold_of_sentence.iter().all(|&f| f < k);
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= max && partitioned && elapsed < Duration::from_secs(5),
        format!("worst imbalance {worst} (max sentence instances {max}), partition {partitioned}, {elapsed:.2?}"),
    )
}

fn random_vector(rng: &mut PrngStream, n: usize) -> Vec<f64> {
    // coarse grid so ties occur
    (0..n).map(|_| rng.next_below(201) as f64 / 200.0).collect()
}

fn direct_std(d: &[f64]) -> f64 {
    let n = d.len() as f64;
    let m = d.iter().sum::<f64>() / n;
    (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn variance_identity() -> Outcome {
    let mut rng = PrngStream::new(4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = 2 + rng.next_below(199) as usize;
        let a: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
        let b: Vec<f64> = a.iter().map(|x| 0.3 * x + rng.next_f64()).collect();
        let c = compare_paired(&RecallSamples::new("a", a.clone()), &RecallSamples::new("b", b.clone())).unwrap();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let direct = direct_std(&d);
        worst = worst.max((c.sigma_diff - direct).abs() / direct);
        worst = worst.max((std_of_differences(&a, &b) - direct).abs() / direct);
    }
    outcome(worst <= 1e-9, format!("max relative error {worst:.2e}"))
}

/// Pairwise-difference forms, independent of the mean-centred code.
fn brute_force(a: &[f64], b: &[f64]) -> (f64, f64, f64, f64) {
    let n = a.len();
    let mean = a.iter().fold(0.0, |s, x| s + x) / n as f64;
    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            vaa += (a[i] - a[j]) * (a[i] - a[j]);
            vbb += (b[i] - b[j]) * (b[i] - b[j]);
            vab += (a[i] - a[j]) * (b[i] - b[j]);
        }
    }
    let norm = 2.0 * (n * (n - 1)) as f64;
    let std = (vaa / norm).sqrt();
    let rho = vab / (vaa * vbb).sqrt();
    let mut greater = 0;
    for i in 0..n {
        if a[i] > b[i] {
            greater += 1;
        }
    }
    (mean, std, rho, greater as f64 / n as f64)
}

fn statistics_oracle() -> Outcome {
    let mut rng = PrngStream::new(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a = random_vector(&mut rng, 100);
        let b = random_vector(&mut rng, 100);
        let (mean, std, rho, p) = brute_force(&a, &b);
        let sa = RecallSamples::new("a", a);
        let s = summarize(&sa).unwrap();
        let c = compare_paired(&sa, &RecallSamples::new("b", b)).unwrap();
        for (got, want) in [(s.mean, mean), (s.std.unwrap(), std), (c.rho.unwrap(), rho), (c.p_a_gt_b, p)] {
            worst = worst.max((got - want).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max absolute deviation {worst:.2e}"))
}

fn mbsl_closure() -> Outcome {
    let toy = GenreGrammar {
        name: "toy".into(),
        np_patterns: vec![Pattern::new("DT NN", 1.0)],
        glue_patterns: vec![
            Pattern::new("VBD", 3.0),
            Pattern::new("IN", 3.0),
            Pattern::new("VBZ RB", 1.0),
            Pattern::new("TO VB", 1.0),
        ],
        nps_per_sentence: NpCount {
            mean: 3.0,
            min: 1,
            max: 6,
        },
        vocab_per_pos: 20,
    };
    let train = generate_corpus(&toy, 300, &mut PrngStream::new(6)).unwrap();
    let test = generate_corpus(&toy, 200, &mut PrngStream::new(66)).unwrap();
    let mut recalls = Vec::new();
    for c in [1, 3] {
        let model = mbsl_train(&train, &MbslConfig::with_context(c)).unwrap();
        let predicted: Vec<_> = test.sentences.iter().map(|s| model.predict(s)).collect();
        recalls.push(score_run(&test, &predicted).unwrap().recall());
    }
    outcome(
        recalls.iter().all(|&r| r == 1.0),
        format!("recall c=1 {:.6}, c=3 {:.6}", recalls[0], recalls[1]),
    )
}

fn disjunction_example(rng: &mut PrngStream, relevant: &[u32; 3]) -> (Vec<u32>, bool) {
    let mut active = HashSet::new();
    while active.len() < 20 {
        let f = rng.next_below(1000) as u32;
        if !relevant.contains(&f) {
            active.insert(f);
        }
    }
    let mut active: Vec<u32> = active.into_iter().collect();
    active.sort_unstable();
    let positive = rng.next_f64() < 0.5;
    if positive {
        let slot = rng.next_below(active.len() as u64) as usize;
        active[slot] = relevant[rng.next_below(3) as usize];
    }
    (active, positive)
}

fn winnow_mistake_bound() -> Outcome {
    let config = WinnowConfig::default();
    let relevant = [17, 503, 871];
    let mut rng = PrngStream::new(7);
    let mut unit = WinnowUnit::new(1000.0);
    let mut mistakes = 0;
    for _ in 0..5000 {
        let (active, label) = disjunction_example(&mut rng, &relevant);
        mistakes += unit.train_step(&active, label, config.alpha, config.beta) as usize;
    }
    let mut fresh = PrngStream::new(77);
    let errors = (0..1000)
        .filter(|_| {
            let (active, label) = disjunction_example(&mut fresh, &relevant);
            unit.predict(&active) != label
        })
        .count();
    outcome(
        mistakes <= 60 && errors == 0,
        format!("alpha {} theta 1000: {mistakes} training mistakes, {errors} errors on 1000 fresh examples", config.alpha),
    )
}

struct Genres {
    train: Corpus,
    held_out: Corpus,
    atis: Corpus,
    small: [Corpus; 2],
    large: [Corpus; 2],
}

const SEED: u64 = 1;

fn genres() -> Genres {
    let pool = wsj(8936 + 400 + 200 + 800, SEED);
    let atis = generate_corpus(&GenreGrammar::atis_like(), 190, &mut derive_stream(SEED, "gen-atis", 0)).unwrap();
    Genres {
        train: pool.slice("train", 0..8936),
        held_out: pool.slice("wsj", 8936..9336),
        atis,
        small: [pool.slice("wsj-a", 9336..9436), pool.slice("wsj-b", 9436..9536)],
        large: [pool.slice("wsj-la", 9536..9936), pool.slice("wsj-lb", 9936..10336)],
    }
}

fn experiment_config(method: Method, tests: &[(String, Corpus)]) -> ExperimentConfig {
    let system = |name: &str, kind| SystemSpec {
        name: name.into(),
        kind,
    };
    ExperimentConfig {
        master_seed: SEED,
        training_corpus: "wsj-train".into(),
        test_corpora: tests.iter().map(|(l, _)| (l.clone(), l.into())).collect(),
        method,
        systems: vec![
            system("mbsl1", SystemKind::Mbsl(MbslConfig::with_context(1))),
            system("mbsl3", SystemKind::Mbsl(MbslConfig::with_context(3))),
            system("winnow", SystemKind::Winnow(WinnowConfig::default())),
        ],
        output_dir: None,
        workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
    }
}

fn labelled(corpora: &[&Corpus]) -> Vec<(String, Corpus)> {
    corpora.iter().map(|c| (c.name.clone(), (*c).clone())).collect()
}

fn std_inflation(report: &ExperimentReport, elapsed: Duration) -> Outcome {
    let mut pass = elapsed < Duration::from_secs(600);
    let mut parts = Vec::new();
    for system in ["mbsl1", "mbsl3", "winnow"] {
        let sd = |t: &str| report.summary_for(system, t).unwrap().std.unwrap();
        let (atis, a, b) = (sd("atis-like"), sd("wsj-a"), sd("wsj-b"));
        pass &= atis > a && atis > b;
        parts.push(format!("{system} atis {atis:.4} vs {a:.4}/{b:.4}"));
    }
    outcome(pass, format!("{}; {elapsed:.1?}", parts.join(", ")))
}

fn genre_correlation(report: &ExperimentReport) -> Outcome {
    let within = report.xcorr_for("mbsl1", "wsj-la", "wsj-lb");
    let across = [
        report.xcorr_for("mbsl1", "wsj-la", "atis-like"),
        report.xcorr_for("mbsl1", "wsj-lb", "atis-like"),
    ];
    let pass = match (within, across) {
        (Some(w), [Some(x), Some(y)]) => w > x && w > y,
        _ => false,
    };
    let show = |r: Option<f64>| r.map_or("NA".to_owned(), |r| format!("{r:.3}"));
    outcome(
        pass,
        format!(
            "mbsl1 rho(wsj-la, wsj-lb) {} vs rho(wsj, atis) {} / {}",
            show(within),
            show(across[0]),
            show(across[1])
        ),
    )
}

fn context_direction(report: &ExperimentReport) -> Outcome {
    let p3 = |t: &str| report.pair_for("mbsl1", "mbsl3", t).unwrap().clone();
    let (wsj, atis) = (p3("wsj"), p3("atis-like"));
    let p_wsj = 1.0 - wsj.p_a_gt_b - wsj.p_tie;
    let p_atis = 1.0 - atis.p_a_gt_b - atis.p_tie;
    outcome(
        p_wsj >= 0.9 && p_atis <= 0.5,
        format!("P(r3 > r1) in-genre {p_wsj:.2}, mismatched {p_atis:.2} over 50 resamples"),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_np-resample"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).display().to_string();
    let (train, wsj, atis) = (p("train.iob2"), p("wsj.iob2"), p("atis.iob2"));
    let setup = [
        vec!["gen", "--grammar", "wsj-like", "--sentences", "400", "--seed", "11", "--out", &train],
        vec!["gen", "--grammar", "wsj-like", "--sentences", "500", "--seed", "11", "--skip-sentences", "400", "--out", &wsj],
        vec!["gen", "--grammar", "atis-like", "--sentences", "60", "--seed", "11", "--out", &atis],
    ];
    for args in &setup {
        if let Err(e) = run_cli(args) {
            return outcome(false, format!("gen failed: {e}"));
        }
    }
    let config = "seed = 11\ntrain = train.iob2\ntest.wsj = wsj.iob2\ntest.atis = atis.iob2\n\
                  method = bootstrap\nsamples = 12\nsystem.mbsl1 = mbsl context=1\n\
                  system.mbsl3 = mbsl context=3\nsystem.winnow = winnow\n";
    fs::write(dir.path().join("run.conf"), config).unwrap();
    let mut trees = Vec::new();
    for (label, workers) in [("w1", "1"), ("w1-again", "1"), ("w8", "8")] {
        let out = p(label);
        if let Err(e) = run_cli(&["run", &p("run.conf"), "--workers", workers, "--output-dir", &out]) {
            return outcome(false, format!("run failed: {e}"));
        }
        trees.push(tree_bytes(Path::new(&out)));
    }
    let identical = trees[0] == trees[1] && trees[0] == trees[2];
    outcome(
        identical && trees[0].len() >= 6,
        format!("{} output files, identical across runs and worker counts: {identical}", trees[0].len()),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "bootstrap uniqueness", bootstrap_uniqueness()),
        (2, "bootstrap overshoot", bootstrap_overshoot()),
        (3, "cv balance", cv_balance()),
        (4, "variance identity", variance_identity()),
        (5, "statistics oracle", statistics_oracle()),
        (6, "mbsl closure", mbsl_closure()),
        (7, "winnow mistake bound", winnow_mistake_bound()),
    ];

    let g = genres();
    let boot_tests = labelled(&[&g.held_out, &g.atis, &g.small[0], &g.small[1]]);
    let start = Instant::now();
    let boot = run_with_data(
        &experiment_config(Method::Bootstrap { samples: 50 }, &boot_tests),
        &g.train,
        &boot_tests,
    )
    .unwrap();
    let boot_elapsed = start.elapsed();
    let cv_tests = labelled(&[&g.held_out, &g.atis, &g.large[0], &g.large[1]]);
    let cv = run_with_data(
        &experiment_config(Method::Cv { k: 5, repetitions: 10 }, &cv_tests),
        &g.train,
        &cv_tests,
    )
    .unwrap();
    results.push((8, "std inflation on mismatched genre", std_inflation(&boot, boot_elapsed)));
    results.push((9, "cross-genre correlation", genre_correlation(&cv)));
    results.push((10, "paired comparison direction", context_direction(&boot)));
    results.push((11, "determinism", determinism()));

    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n:>2} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all {} acceptance criteria passed", results.len());
}
