//! Begin/end Winnow network over POS n-grams.
//!
//! Each token is described by the n-grams of its padded three-tag window
//! (`[p-1, p, p+1]`). Two independent Winnow units decide whether a base-NP
//! begins at the token and whether one ends after it; a left-to-right decoder
//! turns those decisions into disjoint spans.

use std::collections::HashMap;
use std::hash::Hash;

use crate::corpus::{ChunkSpan, Corpus, Sentence};
use crate::error::{Error, Result};
use crate::resample::PrngStream;
use crate::symbols::SymbolTable;
use crate::Chunker;

pub const WINDOW_RADIUS: usize = 1;
/// Longest n-gram requested. A three-tag window can only hold trigrams.
pub const MAX_NGRAM: usize = 4;
pub const BOS: &str = "_BOS_";
pub const EOS: &str = "_EOS_";

const WINDOW: usize = 2 * WINDOW_RADIUS + 1;
const HEADER: &str = "winnow-model v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WinnowConfig {
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub epochs: usize,
}

impl Default for WinnowConfig {
    fn default() -> Self {
        WinnowConfig {
            alpha: 1.5,
            beta: 0.5,
            theta: 6.0,
            epochs: 2,
        }
    }
}

impl WinnowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("promotion {} must exceed 1", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("demotion {} outside (0, 1)", self.beta)));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::Config(format!("threshold {} must be positive", self.theta)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        Ok(())
    }
}

/// An n-gram of the window starting at `offset` relative to the focus token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Feature {
    pub offset: i8,
    pub ngram: Vec<String>,
}

fn window_ngrams() -> impl Iterator<Item = (usize, usize)> {
    (0..WINDOW).flat_map(|start| (1..=MAX_NGRAM.min(WINDOW - start)).map(move |len| (start, len)))
}

pub fn extract_features(sentence: &Sentence, position: usize) -> Result<Vec<Feature>> {
    if position >= sentence.len() {
        return Err(Error::Argument(format!(
            "position {position} outside sentence of length {}",
            sentence.len()
        )));
    }
    let window: Vec<&str> = (0..WINDOW)
        .map(|k| {
            let p = position as isize + k as isize - WINDOW_RADIUS as isize;
            if p < 0 {
                BOS
            } else if p as usize >= sentence.len() {
                EOS
            } else {
                sentence.tokens[p as usize].pos.as_str()
            }
        })
        .collect();
    Ok(window_ngrams()
        .map(|(start, len)| Feature {
            offset: start as i8 - WINDOW_RADIUS as i8,
            ngram: window[start..start + len].iter().map(|s| s.to_string()).collect(),
        })
        .collect())
}

/// One linear threshold unit with multiplicative updates.
#[derive(Debug, Clone, PartialEq)]
pub struct WinnowUnit<F: Hash + Eq> {
    pub weights: HashMap<F, f64>,
    pub theta: f64,
}

impl<F: Hash + Eq + Clone> WinnowUnit<F> {
    pub fn new(theta: f64) -> Self {
        WinnowUnit {
            weights: HashMap::new(),
            theta,
        }
    }

    /// Activation; features never touched in training contribute 0.
    pub fn score(&self, active: &[F]) -> f64 {
        active.iter().filter_map(|f| self.weights.get(f)).sum()
    }

    pub fn predict(&self, active: &[F]) -> bool {
        self.score(active) >= self.theta
    }

    /// One online step. Unseen active features start at weight 1. Returns
    /// whether the unit made a mistake.
    pub fn train_step(&mut self, active: &[F], label: bool, alpha: f64, beta: f64) -> bool {
        let mut total = 0.0;
        for f in active {
            total += *self.weights.entry(f.clone()).or_insert(1.0);
        }
        let predicted = total >= self.theta;
        if predicted == label {
            return false;
        }
        let factor = if label { alpha } else { beta };
        for f in active {
            if let Some(w) = self.weights.get_mut(f) {
                *w *= factor;
            }
        }
        true
    }
}

/// Packed feature: offset (2 bits), length (2 bits), three 16-bit tag ids.
type FeatureKey = u64;

fn key_of(offset: usize, ids: &[u16]) -> FeatureKey {
    let mut key = offset as u64 | (ids.len() as u64) << 2;
    for (i, &id) in ids.iter().enumerate() {
        key |= (id as u64) << (4 + 16 * i);
    }
    key
}

#[derive(Debug, Clone)]
pub struct WinnowNetwork {
    pub config: WinnowConfig,
    symbols: SymbolTable,
    begin: WinnowUnit<FeatureKey>,
    end: WinnowUnit<FeatureKey>,
}

impl WinnowNetwork {
    fn empty(config: WinnowConfig) -> Result<Self> {
        let mut symbols = SymbolTable::default();
        symbols.intern(BOS)?;
        symbols.intern(EOS)?;
        Ok(WinnowNetwork {
            config,
            symbols,
            begin: WinnowUnit::new(config.theta),
            end: WinnowUnit::new(config.theta),
        })
    }

    fn padded_ids(&self, tags: impl Iterator<Item = u16>) -> Vec<u16> {
        let bos = self.symbols.get(BOS);
        let eos = self.symbols.get(EOS);
        let mut ids = vec![bos; WINDOW_RADIUS];
        ids.extend(tags);
        ids.extend(std::iter::repeat_n(eos, WINDOW_RADIUS));
        ids
    }

    fn keys_at(padded: &[u16], position: usize) -> [FeatureKey; 6] {
        let window = &padded[position..position + WINDOW];
        let mut keys = [0; 6];
        for (slot, (start, len)) in window_ngrams().enumerate() {
            keys[slot] = key_of(start, &window[start..start + len]);
        }
        keys
    }

    pub fn feature_count(&self) -> usize {
        self.begin.weights.len() + self.end.weights.len()
    }

    /// Begin and end decisions per token.
    pub fn decisions(&self, sentence: &Sentence) -> (Vec<bool>, Vec<bool>) {
        let padded = self.padded_ids(sentence.pos_tags().map(|t| self.symbols.get(t)));
        (0..sentence.len())
            .map(|p| {
                let keys = Self::keys_at(&padded, p);
                (self.begin.predict(&keys), self.end.predict(&keys))
            })
            .unzip()
    }

    fn decode_key(&self, key: FeatureKey) -> Feature {
        let len = ((key >> 2) & 0b11) as usize;
        Feature {
            offset: (key & 0b11) as i8 - WINDOW_RADIUS as i8,
            ngram: (0..len)
                .map(|i| self.symbols.name((key >> (4 + 16 * i)) as u16).to_owned())
                .collect(),
        }
    }

    /// `(feature, unit name, weight)` sorted by feature then unit.
    pub fn weights(&self) -> Vec<(Feature, &'static str, f64)> {
        let mut rows: Vec<_> = [("begin", &self.begin), ("end", &self.end)]
            .into_iter()
            .flat_map(|(name, unit)| unit.weights.iter().map(move |(&k, &w)| (k, name, w)))
            .map(|(k, name, w)| (self.decode_key(k), name, w))
            .collect();
        rows.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
        rows
    }

    pub fn to_text(&self) -> String {
        let rows = self.weights();
        let c = &self.config;
        let mut out = format!(
            "{HEADER}\talpha={}\tbeta={}\ttheta={}\tepochs={}\tfeatures={}\n",
            c.alpha,
            c.beta,
            c.theta,
            c.epochs,
            rows.len()
        );
        for (f, unit, w) in rows {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", f.offset, f.ngram.join(" "), unit, w));
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_text().into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<WinnowNetwork> {
        let bad = |msg: String| Error::Format(msg);
        let text = std::str::from_utf8(bytes).map_err(|_| bad("model is not UTF-8".into()))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty model file".into()))?;
        let mut fields = header.split('\t');
        if fields.next() != Some(HEADER) {
            return Err(bad(format!("unsupported header {header:?}")));
        }
        let mut value = |name: &str| -> Result<String> {
            let field = fields.next().ok_or_else(|| bad(format!("header lacks {name}")))?;
            field
                .strip_prefix(name)
                .and_then(|v| v.strip_prefix('='))
                .map(str::to_owned)
                .ok_or_else(|| bad(format!("expected {name}=..., found {field:?}")))
        };
        let float = |v: String| v.parse::<f64>().map_err(|_| bad(format!("bad number {v:?}")));
        let int = |v: String| v.parse::<usize>().map_err(|_| bad(format!("bad count {v:?}")));
        let config = WinnowConfig {
            alpha: float(value("alpha")?)?,
            beta: float(value("beta")?)?,
            theta: float(value("theta")?)?,
            epochs: int(value("epochs")?)?,
        };
        let n = int(value("features")?)?;
        config.validate().map_err(|e| bad(e.to_string()))?;

        let mut net = WinnowNetwork::empty(config)?;
        for i in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("truncated after {i} of {n} features")))?;
            let parts: Vec<&str> = line.split('\t').collect();
            let [offset, ngram, unit, weight] = parts[..] else {
                return Err(bad(format!("bad feature line {line:?}")));
            };
            let offset: i8 = offset.parse().map_err(|_| bad(format!("bad offset {offset:?}")))?;
            let tags: Vec<&str> = ngram.split(' ').collect();
            let start = offset + WINDOW_RADIUS as i8;
            if start < 0 || start as usize + tags.len() > WINDOW || tags.iter().any(|t| t.is_empty()) {
                return Err(bad(format!("feature {ngram:?} at offset {offset} does not fit the window")));
            }
            let ids = tags
                .iter()
                .map(|t| net.symbols.intern(t))
                .collect::<Result<Vec<_>>>()?;
            let weight = float(weight.to_owned())?;
            if weight.is_nan() || weight <= 0.0 {
                return Err(bad(format!("non-positive weight {weight}")));
            }
            let target = match unit {
                "begin" => &mut net.begin,
                "end" => &mut net.end,
                other => return Err(bad(format!("unknown unit {other:?}"))),
            };
            target.weights.insert(key_of(start as usize, &ids), weight);
        }
        if lines.next().is_some() {
            return Err(bad("trailing data after feature table".into()));
        }
        Ok(net)
    }
}

impl PartialEq for WinnowNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.weights() == other.weights()
    }
}

pub fn winnow_train(corpus: &Corpus, config: &WinnowConfig, rng: &mut PrngStream) -> Result<WinnowNetwork> {
    config.validate()?;
    let mut net = WinnowNetwork::empty(*config)?;
    let mut encoded = Vec::with_capacity(corpus.len());
    for sentence in &corpus.sentences {
        let ids = sentence
            .pos_tags()
            .map(|t| net.symbols.intern(t))
            .collect::<Result<Vec<u16>>>()?;
        let padded = net.padded_ids(ids.into_iter());
        let n = sentence.len();
        let mut begins = vec![false; n];
        let mut ends = vec![false; n];
        for span in &sentence.gold_spans {
            begins[span.start] = true;
            ends[span.end - 1] = true;
        }
        encoded.push((padded, begins, ends));
    }

    let mut order: Vec<usize> = (0..encoded.len()).collect();
    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        for &i in &order {
            let (padded, begins, ends) = &encoded[i];
            for p in 0..begins.len() {
                let keys = WinnowNetwork::keys_at(padded, p);
                net.begin.train_step(&keys, begins[p], config.alpha, config.beta);
                net.end.train_step(&keys, ends[p], config.alpha, config.beta);
            }
        }
    }
    Ok(net)
}

/// Left-to-right decoding: a begin opens a span unless one is open, the first
/// end at or after it closes the span, and a span still open at the end of the
/// sentence is dropped.
pub fn decode_spans(begins: &[bool], ends: &[bool]) -> Vec<ChunkSpan> {
    let mut spans = Vec::new();
    let mut open = None;
    for (i, (&b, &e)) in begins.iter().zip(ends).enumerate() {
        if open.is_none() && b {
            open = Some(i);
        }
        if let (Some(start), true) = (open, e) {
            spans.push(ChunkSpan::new(start, i + 1));
            open = None;
        }
    }
    spans
}

pub fn winnow_predict(network: &WinnowNetwork, sentence: &Sentence) -> Vec<ChunkSpan> {
    let (begins, ends) = network.decisions(sentence);
    decode_spans(&begins, &ends)
}

impl Chunker for WinnowNetwork {
    fn predict(&self, sentence: &Sentence) -> Vec<ChunkSpan> {
        winnow_predict(self, sentence)
    }
}
