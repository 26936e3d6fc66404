//! Exact-match recall/precision and the distributional statistics used to
//! compare recall samples: mean and standard deviation, paired Pearson
//! correlation, P(A > B), and the standard deviation of the paired
//! difference.
//!
//! All second moments use the `n - 1` denominator, so
//! `sigma_diff^2 = sa^2 + sb^2 - 2 sa sb rho` holds exactly (up to rounding)
//! against the direct sample variance of `a_i - b_i`.

use crate::corpus::{ChunkSpan, Corpus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub n_gold: usize,
    pub n_predicted: usize,
    pub n_correct: usize,
}

impl RunMetrics {
    /// Recall of an empty gold set is taken as 1.
    pub fn recall(&self) -> f64 {
        if self.n_gold == 0 {
            1.0
        } else {
            self.n_correct as f64 / self.n_gold as f64
        }
    }

    pub fn precision(&self) -> Option<f64> {
        (self.n_predicted > 0).then(|| self.n_correct as f64 / self.n_predicted as f64)
    }
}

/// Counts exact (start and end) span matches sentence by sentence.
pub fn score_run(gold: &Corpus, predicted: &[Vec<ChunkSpan>]) -> Result<RunMetrics> {
    if gold.len() != predicted.len() {
        return Err(Error::Argument(format!(
            "{} predicted sentences for {} gold sentences",
            predicted.len(),
            gold.len()
        )));
    }
    let mut m = RunMetrics {
        n_gold: 0,
        n_predicted: 0,
        n_correct: 0,
    };
    for (sentence, spans) in gold.sentences.iter().zip(predicted) {
        m.n_gold += sentence.gold_spans.len();
        m.n_predicted += spans.len();
        m.n_correct += spans
            .iter()
            .filter(|s| sentence.gold_spans.binary_search(s).is_ok())
            .count();
    }
    Ok(m)
}

/// Recall values indexed by resample id.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallSamples {
    pub label: String,
    pub values: Vec<f64>,
}

impl RecallSamples {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        RecallSamples {
            label: label.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionSummary {
    pub n: usize,
    pub mean: f64,
    /// Absent for fewer than two samples.
    pub std: Option<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn is_constant(xs: &[f64]) -> bool {
    xs.iter().all(|x| *x == xs[0])
}

/// Exactly zero for constant input, where rounding in the mean would
/// otherwise leave a residue.
fn sample_variance(xs: &[f64]) -> f64 {
    if is_constant(xs) {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn summarize(samples: &RecallSamples) -> Result<DistributionSummary> {
    let xs = &samples.values;
    if xs.is_empty() {
        return Err(Error::Argument(format!("no samples in {:?}", samples.label)));
    }
    Ok(DistributionSummary {
        n: xs.len(),
        mean: mean(xs),
        std: (xs.len() >= 2).then(|| sample_variance(xs).sqrt()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedComparison {
    /// Absent when either sample has zero variance.
    pub rho: Option<f64>,
    pub p_a_gt_b: f64,
    pub p_tie: f64,
    pub sigma_diff: f64,
}

impl PairedComparison {
    pub fn p_b_gt_a(&self) -> f64 {
        1.0 - self.p_a_gt_b - self.p_tie
    }
}

/// Sample standard deviation of `a_i - b_i`.
pub fn std_of_differences(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    sample_variance(&d).sqrt()
}

pub fn compare_paired(a: &RecallSamples, b: &RecallSamples) -> Result<PairedComparison> {
    let (xa, xb) = (&a.values, &b.values);
    if xa.len() != xb.len() {
        return Err(Error::Argument(format!(
            "{:?} has {} samples, {:?} has {}",
            a.label,
            xa.len(),
            b.label,
            xb.len()
        )));
    }
    if xa.len() < 2 {
        return Err(Error::Argument("paired comparison needs at least two samples".into()));
    }
    let n = xa.len() as f64;
    let (ma, mb) = (mean(xa), mean(xb));
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (x, y) in xa.iter().zip(xb) {
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
        sab += (x - ma) * (y - mb);
    }
    if is_constant(xa) {
        saa = 0.0;
    }
    if is_constant(xb) {
        sbb = 0.0;
    }
    let denom = n - 1.0;
    let (sd_a, sd_b) = ((saa / denom).sqrt(), (sbb / denom).sqrt());
    let rho = (saa > 0.0 && sbb > 0.0).then(|| (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0));
    let sigma_diff = match rho {
        Some(r) => (sd_a * sd_a + sd_b * sd_b - 2.0 * sd_a * sd_b * r).max(0.0).sqrt(),
        None => std_of_differences(xa, xb),
    };
    let greater = xa.iter().zip(xb).filter(|(x, y)| x > y).count();
    let ties = xa.iter().zip(xb).filter(|(x, y)| x == y).count();
    Ok(PairedComparison {
        rho,
        p_a_gt_b: greater as f64 / n,
        p_tie: ties as f64 / n,
        sigma_diff,
    })
}

/// Symmetric matrix of pairwise correlations, 1 on the diagonal.
pub fn correlation_matrix(samples: &[RecallSamples]) -> Result<Vec<Vec<Option<f64>>>> {
    let k = samples.len();
    let mut m = vec![vec![None; k]; k];
    for i in 0..k {
        m[i][i] = Some(1.0);
        for j in i + 1..k {
            let r = compare_paired(&samples[i], &samples[j])?.rho;
            m[i][j] = r;
            m[j][i] = r;
        }
    }
    Ok(m)
}
