//! SplitMix64 streams and the two resampling planners.
//!
//! Bootstrap plans draw whole sentences with replacement until the base-NP
//! budget `n0` is met. CV plans shuffle the sentences and deal them into `k`
//! folds, largest instance count first, always to the lightest fold.

use std::collections::{BinaryHeap, HashSet};
use std::cmp::Reverse;
use std::fmt::Write as _;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrngStream {
    state: u64,
}

impl PrngStream {
    pub fn new(state: u64) -> Self {
        PrngStream { state }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, bound)` by 128-bit multiply-shift. `bound` must be > 0.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Independent stream for one `(purpose, index)` pair under a master seed.
pub fn derive_stream(master_seed: u64, purpose: &str, index: u64) -> PrngStream {
    PrngStream::new(mix64(master_seed ^ fnv1a64(purpose.as_bytes()) ^ mix64(index)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootstrapPlan {
    pub resample_id: u64,
    pub sentence_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvPlan {
    pub k: usize,
    pub fold_of_sentence: Vec<usize>,
    pub fold_instance_counts: Vec<usize>,
}

pub fn plan_bootstrap(corpus: &Corpus, n0: usize, resample_id: u64, rng: &mut PrngStream) -> Result<BootstrapPlan> {
    if corpus.is_empty() {
        return Err(Error::Planning("training corpus is empty".into()));
    }
    if n0 == 0 {
        return Err(Error::Argument("n0 must be positive".into()));
    }
    if corpus.instance_count() == 0 {
        return Err(Error::Planning("training corpus has no base-NP instances".into()));
    }
    let n = corpus.len() as u64;
    let mut indices = Vec::new();
    let mut total = 0;
    while total < n0 {
        let idx = rng.next_below(n) as usize;
        total += corpus.sentences[idx].instance_count();
        indices.push(idx);
    }
    Ok(BootstrapPlan {
        resample_id,
        sentence_indices: indices,
    })
}

impl BootstrapPlan {
    pub fn instance_count(&self, corpus: &Corpus) -> usize {
        self.sentence_indices
            .iter()
            .map(|&i| corpus.sentences[i].instance_count())
            .sum()
    }

    pub fn unique_sentences(&self) -> usize {
        self.sentence_indices.iter().collect::<HashSet<_>>().len()
    }

    /// Training multiset, repetitions preserved.
    pub fn training_view(&self, corpus: &Corpus) -> Result<Corpus> {
        let mut sentences = Vec::with_capacity(self.sentence_indices.len());
        for &i in &self.sentence_indices {
            let s = corpus.sentences.get(i).ok_or_else(|| {
                Error::Argument(format!("plan index {i} outside corpus of {} sentences", corpus.len()))
            })?;
            sentences.push(s.clone());
        }
        Ok(Corpus::new(format!("{}#b{}", corpus.name, self.resample_id), sentences))
    }

    pub fn to_line(&self) -> String {
        let mut line = format!("bootstrap\t{}\t", self.resample_id);
        join_into(&mut line, &self.sentence_indices);
        line
    }
}

pub fn plan_cv(corpus: &Corpus, k: usize, rng: &mut PrngStream) -> Result<CvPlan> {
    if k < 2 || k > corpus.len() {
        return Err(Error::Argument(format!(
            "fold count {k} outside [2, {}]",
            corpus.len()
        )));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    rng.shuffle(&mut order);
    // stable: shuffled order breaks ties between equal instance counts
    order.sort_by_key(|&i| Reverse(corpus.sentences[i].instance_count()));

    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..k).map(|f| Reverse((0, f))).collect();
    let mut fold_of_sentence = vec![0; corpus.len()];
    let mut fold_instance_counts = vec![0; k];
    for i in order {
        let Reverse((total, fold)) = heap.pop().expect("k >= 2");
        let count = corpus.sentences[i].instance_count();
        fold_of_sentence[i] = fold;
        fold_instance_counts[fold] += count;
        heap.push(Reverse((total + count, fold)));
    }
    Ok(CvPlan {
        k,
        fold_of_sentence,
        fold_instance_counts,
    })
}

impl CvPlan {
    fn check_fold(&self, fold: usize) -> Result<()> {
        if fold >= self.k {
            return Err(Error::Argument(format!("fold {fold} outside [0, {})", self.k)));
        }
        Ok(())
    }

    fn check_corpus(&self, corpus: &Corpus) -> Result<()> {
        if corpus.len() != self.fold_of_sentence.len() {
            return Err(Error::Argument(format!(
                "plan covers {} sentences, corpus has {}",
                self.fold_of_sentence.len(),
                corpus.len()
            )));
        }
        Ok(())
    }

    fn select(&self, corpus: &Corpus, keep: impl Fn(usize) -> bool, name: String) -> Corpus {
        let sentences = corpus
            .sentences
            .iter()
            .zip(&self.fold_of_sentence)
            .filter(|(_, &f)| keep(f))
            .map(|(s, _)| s.clone())
            .collect();
        Corpus::new(name, sentences)
    }

    /// All sentences outside `held_out`.
    pub fn training_view(&self, corpus: &Corpus, held_out: usize) -> Result<Corpus> {
        self.check_fold(held_out)?;
        self.check_corpus(corpus)?;
        Ok(self.select(corpus, |f| f != held_out, format!("{}#train{}", corpus.name, held_out)))
    }

    pub fn held_out_view(&self, corpus: &Corpus, held_out: usize) -> Result<Corpus> {
        self.check_fold(held_out)?;
        self.check_corpus(corpus)?;
        Ok(self.select(corpus, |f| f == held_out, format!("{}#fold{}", corpus.name, held_out)))
    }

    pub fn imbalance(&self) -> usize {
        let max = self.fold_instance_counts.iter().max().copied().unwrap_or(0);
        let min = self.fold_instance_counts.iter().min().copied().unwrap_or(0);
        max - min
    }

    pub fn to_line(&self) -> String {
        let mut line = format!("cv\t{}\t", self.k);
        join_into(&mut line, &self.fold_of_sentence);
        line
    }
}

fn join_into(out: &mut String, values: &[usize]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v}");
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Plan {
    Bootstrap(BootstrapPlan),
    Cv(CvPlan),
}

impl Plan {
    pub fn to_line(&self) -> String {
        match self {
            Plan::Bootstrap(p) => p.to_line(),
            Plan::Cv(p) => p.to_line(),
        }
    }

    /// Parses one line of the audit format. CV fold counts are recomputed
    /// against `corpus` when given, otherwise left empty.
    pub fn parse_line(line: &str, corpus: Option<&Corpus>) -> Result<Plan> {
        let bad = |msg: &str| Error::Format(format!("plan line: {msg}"));
        let mut fields = line.split('\t');
        let (kind, head, body) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(k), Some(h), Some(b), None) => (k, h, b),
            _ => return Err(bad("expected 3 tab-separated fields")),
        };
        let values = if body.is_empty() {
            Vec::new()
        } else {
            body.split(',')
                .map(|v| v.parse::<usize>().map_err(|_| bad("non-integer entry")))
                .collect::<Result<Vec<_>>>()?
        };
        let head: u64 = head.parse().map_err(|_| bad("non-integer header"))?;
        match kind {
            "bootstrap" => Ok(Plan::Bootstrap(BootstrapPlan {
                resample_id: head,
                sentence_indices: values,
            })),
            "cv" => {
                let k = head as usize;
                if values.iter().any(|&f| f >= k) {
                    return Err(bad("fold id out of range"));
                }
                let mut counts = vec![0; if corpus.is_some() { k } else { 0 }];
                if let Some(c) = corpus {
                    if c.len() != values.len() {
                        return Err(bad("fold list length differs from corpus"));
                    }
                    for (s, &f) in c.sentences.iter().zip(&values) {
                        counts[f] += s.instance_count();
                    }
                }
                Ok(Plan::Cv(CvPlan {
                    k,
                    fold_of_sentence: values,
                    fold_instance_counts: counts,
                }))
            }
            other => Err(bad(&format!("unknown plan kind {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ChunkSpan, Sentence, Token};

    fn corpus_with_counts(counts: &[usize]) -> Corpus {
        let sentences = counts
            .iter()
            .map(|&k| {
                let n = k.max(1);
                let tokens = (0..n).map(|i| Token::new(format!("w{i}"), "NN").unwrap()).collect();
                let spans = (0..k).map(|i| ChunkSpan::new(i, i + 1)).collect();
                Sentence::new(tokens, spans).unwrap()
            })
            .collect();
        Corpus::new("c", sentences)
    }

    #[test]
    fn splitmix64_reference_outputs() {
        // reference values from an independent Python transcription
        let mut s = PrngStream::new(0);
        let got: Vec<u64> = (0..4).map(|_| s.next_u64()).collect();
        assert_eq!(
            got,
            [0xe220a8397b1dcdaf, 0x6e789e6aa1b965f4, 0x06c45d188009454f, 0xf88bb8a8724c81ec]
        );
        let mut s = PrngStream::new(1234567);
        assert_eq!(s.next_u64(), 0x599ed017fb08fc85);
        assert_eq!(s.next_u64(), 0x2c73f08458540fa5);
    }

    #[test]
    fn fnv_reference_outputs() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"bootstrap"), 0xdfd610812f3ae1d9);
    }

    fn first4(mut s: PrngStream) -> [u64; 4] {
        [s.next_u64(), s.next_u64(), s.next_u64(), s.next_u64()]
    }

    #[test]
    fn derived_streams() {
        let seed = 0x5eed;
        assert_eq!(derive_stream(seed, "bootstrap", 0), derive_stream(seed, "bootstrap", 0));
        let a = first4(derive_stream(seed, "bootstrap", 0));
        let b = first4(derive_stream(seed, "bootstrap", 1));
        let c = first4(derive_stream(seed, "cv", 0));
        for i in 0..4 {
            assert_ne!(a[i], b[i]);
            assert_ne!(a[i], c[i]);
        }
    }

    #[test]
    fn next_below_stays_in_range() {
        let mut s = PrngStream::new(5);
        for bound in [1u64, 2, 3, 7, 1000, u64::MAX] {
            for _ in 0..100 {
                assert!(s.next_below(bound) < bound);
            }
        }
    }

    #[test]
    fn bootstrap_single_sentence() {
        let c = corpus_with_counts(&[2]);
        let p = plan_bootstrap(&c, 5, 0, &mut PrngStream::new(1)).unwrap();
        assert_eq!(p.sentence_indices, vec![0, 0, 0]);
        assert_eq!(p.instance_count(&c), 6);
    }

    #[test]
    fn bootstrap_errors() {
        let c = corpus_with_counts(&[0, 0]);
        assert!(matches!(plan_bootstrap(&c, 5, 0, &mut PrngStream::new(1)), Err(Error::Planning(_))));
        let empty = Corpus::default();
        assert!(plan_bootstrap(&empty, 5, 0, &mut PrngStream::new(1)).is_err());
    }

    #[test]
    fn bootstrap_training_view_keeps_repeats() {
        let c = corpus_with_counts(&[1, 2]);
        let p = BootstrapPlan {
            resample_id: 0,
            sentence_indices: vec![0, 0, 1],
        };
        let v = p.training_view(&c).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.sentences[0], v.sentences[1]);
        assert_eq!(v.instance_count(), 4);
    }

    #[test]
    fn cv_perfect_balance() {
        let c = corpus_with_counts(&[1; 10]);
        let p = plan_cv(&c, 5, &mut PrngStream::new(3)).unwrap();
        assert_eq!(p.fold_instance_counts, vec![2; 5]);
    }

    #[test]
    fn cv_one_sentence_per_fold() {
        let c = corpus_with_counts(&[3, 1, 4, 1, 5]);
        let p = plan_cv(&c, 5, &mut PrngStream::new(3)).unwrap();
        let mut folds = p.fold_of_sentence.clone();
        folds.sort();
        assert_eq!(folds, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn cv_rejects_bad_k() {
        let c = corpus_with_counts(&[1, 1, 1]);
        assert!(plan_cv(&c, 1, &mut PrngStream::new(3)).is_err());
        assert!(plan_cv(&c, 4, &mut PrngStream::new(3)).is_err());
    }

    #[test]
    fn cv_views_partition_corpus() {
        let c = corpus_with_counts(&[1, 2]);
        let p = plan_cv(&c, 2, &mut PrngStream::new(9)).unwrap();
        let held = p.fold_of_sentence.iter().position(|&f| f == 1).unwrap();
        let train = p.training_view(&c, 1).unwrap();
        assert_eq!(train.len(), 1);
        assert_ne!(train.sentences[0], c.sentences[held]);
        assert_eq!(p.held_out_view(&c, 1).unwrap().sentences, vec![c.sentences[held].clone()]);
        assert!(p.training_view(&c, 2).is_err());
    }

    #[test]
    fn plan_lines_parse_back() {
        let c = corpus_with_counts(&[1, 2, 3, 1]);
        let b = plan_bootstrap(&c, 7, 4, &mut PrngStream::new(2)).unwrap();
        assert_eq!(Plan::parse_line(&b.to_line(), None).unwrap(), Plan::Bootstrap(b));
        let cv = plan_cv(&c, 2, &mut PrngStream::new(2)).unwrap();
        assert_eq!(cv.to_line().split('\t').next(), Some("cv"));
        assert_eq!(Plan::parse_line(&cv.to_line(), Some(&c)).unwrap(), Plan::Cv(cv));
        assert!(Plan::parse_line("cv\t2\t0,5", None).is_err());
        assert!(Plan::parse_line("jackknife\t2\t0", None).is_err());
    }
}
