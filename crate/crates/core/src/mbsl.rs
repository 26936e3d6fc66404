//! Memory-based base-NP learner.
//!
//! Training stores every POS window that contains a border of a gold base-NP
//! (`[` where the NP opens, `]` where it closes), reaching at most `context`
//! tags outside the NP, and counts how often the same POS sequence occurs
//! anywhere in the training data *without* those borders. Prediction tiles a
//! candidate span with stored windows whose positive ratio clears the
//! threshold: either one window carrying both borders, or an opening window
//! and a closing window that overlap inside the span.

use std::collections::HashMap;
use std::fmt;

use crate::corpus::{ChunkSpan, Corpus, Sentence};
use crate::error::{Error, Result};
use crate::symbols::SymbolTable;
use crate::Chunker;

/// Tiles are packed into a `u128` of 16-bit lanes.
pub const MAX_TILE_LEN: usize = 8;
pub const MAX_CONTEXT: usize = MAX_TILE_LEN;

const NO_MARK: u8 = u8::MAX;
const HEADER: &str = "mbsl-model v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MbslConfig {
    /// Tags recorded before an opening border or after a closing border.
    pub context: usize,
    pub max_tile_len: usize,
    pub threshold: f64,
    pub min_positive_count: u64,
}

impl Default for MbslConfig {
    fn default() -> Self {
        MbslConfig {
            context: 1,
            max_tile_len: 6,
            threshold: 0.5,
            min_positive_count: 1,
        }
    }
}

impl MbslConfig {
    pub fn with_context(context: usize) -> Self {
        MbslConfig {
            context,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.context > MAX_CONTEXT {
            return Err(Error::Config(format!("context {} exceeds {MAX_CONTEXT}", self.context)));
        }
        if self.max_tile_len == 0 || self.max_tile_len > MAX_TILE_LEN {
            return Err(Error::Config(format!(
                "max_tile_len {} outside [1, {MAX_TILE_LEN}]",
                self.max_tile_len
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.min_positive_count == 0 {
            return Err(Error::Config("min_positive_count must be positive".into()));
        }
        Ok(())
    }
}

/// A POS sequence with the base-NP borders it was recorded with.
/// `open = Some(i)`: the NP starts at symbol `i`. `close = Some(j)`: the NP
/// ends after symbol `j - 1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tile {
    pub pos_seq: Vec<String>,
    pub open: Option<usize>,
    pub close: Option<usize>,
}

impl Tile {
    pub fn parse(text: &str) -> Result<Tile> {
        let mut tile = Tile {
            pos_seq: Vec::new(),
            open: None,
            close: None,
        };
        for part in text.split(' ') {
            match part {
                "[" if tile.open.is_none() && tile.close.is_none() => tile.open = Some(tile.pos_seq.len()),
                "]" if tile.close.is_none() => tile.close = Some(tile.pos_seq.len()),
                "[" | "]" | "" => return Err(Error::Format(format!("bad tile {text:?}"))),
                tag => tile.pos_seq.push(tag.to_owned()),
            }
        }
        let len = tile.pos_seq.len();
        let ok = (1..=MAX_TILE_LEN).contains(&len)
            && (tile.open.is_some() || tile.close.is_some())
            && tile.open.is_none_or(|o| o < len)
            && tile.close.is_none_or(|c| c >= 1)
            && match (tile.open, tile.close) {
                (Some(o), Some(c)) => o < c,
                _ => true,
            };
        if !ok {
            return Err(Error::Format(format!("bad tile {text:?}")));
        }
        Ok(tile)
    }
}

impl fmt::Display for Tile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        let mut put = |f: &mut fmt::Formatter<'_>, s: &str| {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            f.write_str(s)
        };
        for (i, tag) in self.pos_seq.iter().enumerate() {
            if self.close == Some(i) {
                put(f, "]")?;
            }
            if self.open == Some(i) {
                put(f, "[")?;
            }
            put(f, tag)?;
        }
        if self.close == Some(self.pos_seq.len()) {
            put(f, "]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct TileKey {
    seq: u128,
    open: u8,
    close: u8,
}

#[derive(Debug, Clone)]
struct TileEntry {
    key: TileKey,
    pos: u64,
    neg: u64,
    score: f64,
}

#[derive(Debug, Clone)]
pub struct MbslModel {
    config: MbslConfig,
    symbols: SymbolTable,
    entries: Vec<TileEntry>,
    by_seq: HashMap<u128, Vec<u32>>,
    max_np_len: usize,
}

fn pack(ids: &[u16]) -> u128 {
    ids.iter()
        .enumerate()
        .fold(0u128, |acc, (i, &id)| acc | (id as u128) << (16 * i))
}

fn unpack(seq: u128) -> Vec<u16> {
    (0..MAX_TILE_LEN)
        .map(|i| (seq >> (16 * i)) as u16)
        .take_while(|&id| id != 0)
        .collect()
}

fn border_maps(sentence: &Sentence) -> (Vec<bool>, Vec<bool>) {
    let n = sentence.len();
    let mut starts = vec![false; n + 1];
    let mut ends = vec![false; n + 1];
    for span in &sentence.gold_spans {
        starts[span.start] = true;
        ends[span.end] = true;
    }
    (starts, ends)
}

pub fn mbsl_train(corpus: &Corpus, config: &MbslConfig) -> Result<MbslModel> {
    config.validate()?;
    let mut symbols = SymbolTable::default();
    let mut encoded = Vec::with_capacity(corpus.len());
    for sentence in &corpus.sentences {
        let ids = sentence
            .pos_tags()
            .map(|t| symbols.intern(t))
            .collect::<Result<Vec<u16>>>()?;
        encoded.push(ids);
    }

    let c = config.context;
    let max_len = config.max_tile_len;
    let mut positives: HashMap<TileKey, u64> = HashMap::new();
    let mut max_np_len = 0;
    for (sentence, ids) in corpus.sentences.iter().zip(&encoded) {
        let n = ids.len();
        for span in &sentence.gold_spans {
            let (s, e) = (span.start, span.end);
            max_np_len = max_np_len.max(e - s);
            for a in s.saturating_sub(c)..e {
                let b_lo = (a + 1).max(s + 1);
                let b_hi = n.min(e + c).min(a + max_len);
                for b in b_lo..=b_hi {
                    let has_open = a <= s;
                    let has_close = b >= e;
                    if !has_open && !has_close {
                        continue;
                    }
                    let key = TileKey {
                        seq: pack(&ids[a..b]),
                        open: if has_open { (s - a) as u8 } else { NO_MARK },
                        close: if has_close { (e - a) as u8 } else { NO_MARK },
                    };
                    *positives.entry(key).or_insert(0) += 1;
                }
            }
        }
    }

    let mut entries: Vec<TileEntry> = positives
        .into_iter()
        .map(|(key, pos)| TileEntry {
            key,
            pos,
            neg: 0,
            score: 0.0,
        })
        .collect();
    entries.sort_by_key(|e| (e.key.seq, e.key.open, e.key.close));
    let by_seq = index_entries(&entries);

    for (sentence, ids) in corpus.sentences.iter().zip(&encoded) {
        let (starts, ends) = border_maps(sentence);
        let n = ids.len();
        for a in 0..n {
            let mut seq = 0u128;
            for len in 1..=max_len.min(n - a) {
                seq |= (ids[a + len - 1] as u128) << (16 * (len - 1));
                let Some(tile_ids) = by_seq.get(&seq) else { continue };
                for &t in tile_ids {
                    let entry = &mut entries[t as usize];
                    let k = entry.key;
                    let open_ok = k.open == NO_MARK || starts[a + k.open as usize];
                    let close_ok = k.close == NO_MARK || ends[a + k.close as usize];
                    if !(open_ok && close_ok) {
                        entry.neg += 1;
                    }
                }
            }
        }
    }
    for e in &mut entries {
        e.score = e.pos as f64 / (e.pos + e.neg) as f64;
    }

    Ok(MbslModel {
        config: *config,
        symbols,
        entries,
        by_seq,
        max_np_len,
    })
}

fn index_entries(entries: &[TileEntry]) -> HashMap<u128, Vec<u32>> {
    let mut by_seq: HashMap<u128, Vec<u32>> = HashMap::new();
    for (i, e) in entries.iter().enumerate() {
        by_seq.entry(e.key.seq).or_default().push(i as u32);
    }
    by_seq
}

struct Candidate {
    span: ChunkSpan,
    score: f64,
}

impl MbslModel {
    pub fn config(&self) -> &MbslConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Longest gold base-NP seen in training; bounds candidate spans.
    pub fn max_np_len(&self) -> usize {
        self.max_np_len
    }

    fn tile_of(&self, key: &TileKey) -> Tile {
        Tile {
            pos_seq: unpack(key.seq)
                .into_iter()
                .map(|id| self.symbols.name(id).to_owned())
                .collect(),
            open: (key.open != NO_MARK).then_some(key.open as usize),
            close: (key.close != NO_MARK).then_some(key.close as usize),
        }
    }

    /// `(tile, pos_count, neg_count)`, sorted by POS sequence then marks.
    pub fn table(&self) -> Vec<(Tile, u64, u64)> {
        let mut rows: Vec<_> = self
            .entries
            .iter()
            .map(|e| (self.tile_of(&e.key), e.pos, e.neg))
            .collect();
        rows.sort();
        rows
    }

    pub fn counts(&self, tile: &Tile) -> Option<(u64, u64)> {
        if tile.pos_seq.len() > MAX_TILE_LEN {
            return None;
        }
        let ids: Vec<u16> = tile.pos_seq.iter().map(|t| self.symbols.get(t)).collect();
        if ids.contains(&SymbolTable::UNKNOWN) {
            return None;
        }
        let key = TileKey {
            seq: pack(&ids),
            open: tile.open.map_or(NO_MARK, |o| o as u8),
            close: tile.close.map_or(NO_MARK, |c| c as u8),
        };
        self.by_seq.get(&key.seq)?.iter().find_map(|&i| {
            let e = &self.entries[i as usize];
            (e.key == key).then_some((e.pos, e.neg))
        })
    }

    fn candidates(&self, sentence: &Sentence) -> Vec<Candidate> {
        let n = sentence.len();
        if n == 0 || self.entries.is_empty() {
            return Vec::new();
        }
        let ids: Vec<u16> = sentence.pos_tags().map(|t| self.symbols.get(t)).collect();
        let width = n + 1;
        // both[i][j]: best tile with both borders; open[i][b]: best opening
        // tile at i ending at b; close[j][a]: best closing tile at j starting at a
        let mut both = vec![f64::NAN; width * width];
        let mut open = vec![f64::NAN; width * width];
        let mut close = vec![f64::NAN; width * width];
        let raise = |cell: &mut f64, s: f64| {
            if cell.is_nan() || s > *cell {
                *cell = s;
            }
        };

        for a in 0..n {
            let mut seq = 0u128;
            for len in 1..=self.config.max_tile_len.min(n - a) {
                let id = ids[a + len - 1];
                if id == SymbolTable::UNKNOWN {
                    break;
                }
                seq |= (id as u128) << (16 * (len - 1));
                let Some(tile_ids) = self.by_seq.get(&seq) else { continue };
                let b = a + len;
                for &t in tile_ids {
                    let e = &self.entries[t as usize];
                    if e.pos < self.config.min_positive_count || e.score < self.config.threshold {
                        continue;
                    }
                    match (e.key.open, e.key.close) {
                        (o, c) if o != NO_MARK && c != NO_MARK => {
                            raise(&mut both[(a + o as usize) * width + a + c as usize], e.score)
                        }
                        (o, _) if o != NO_MARK => raise(&mut open[(a + o as usize) * width + b], e.score),
                        (_, c) => raise(&mut close[(a + c as usize) * width + a], e.score),
                    }
                }
            }
        }

        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..=n.min(i + self.max_np_len) {
                let mut best = both[i * width + j];
                for a2 in i + 1..j {
                    let right = close[j * width + a2];
                    if right.is_nan() {
                        continue;
                    }
                    for b1 in a2 + 1..j {
                        let left = open[i * width + b1];
                        if left.is_nan() {
                            continue;
                        }
                        let chain = left.min(right);
                        if best.is_nan() || chain > best {
                            best = chain;
                        }
                    }
                }
                if !best.is_nan() {
                    out.push(Candidate {
                        span: ChunkSpan::new(i, j),
                        score: best,
                    });
                }
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let table = self.table();
        let mut out = String::new();
        out.push_str(HEADER);
        out.push('\n');
        out.push_str(&format!("context\t{}\n", self.config.context));
        out.push_str(&format!("max_tile_len\t{}\n", self.config.max_tile_len));
        out.push_str(&format!("threshold\t{}\n", self.config.threshold));
        out.push_str(&format!("min_positive_count\t{}\n", self.config.min_positive_count));
        out.push_str(&format!("max_np_len\t{}\n", self.max_np_len));
        out.push_str(&format!("tiles\t{}\n", table.len()));
        for (tile, pos, neg) in table {
            out.push_str(&format!("{tile}\t{pos}\t{neg}\n"));
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_text().into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<MbslModel> {
        let text = std::str::from_utf8(bytes).map_err(|_| Error::Format("model is not UTF-8".into()))?;
        let mut lines = text.lines();
        match lines.next() {
            Some(HEADER) => {}
            Some(other) => return Err(Error::Format(format!("unsupported header {other:?}"))),
            None => return Err(Error::Format("empty model file".into())),
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("truncated before {name}")))?;
            match line.split_once('\t') {
                Some((k, v)) if k == name => Ok(v.to_owned()),
                _ => Err(Error::Format(format!("expected {name}, found {line:?}"))),
            }
        };
        let num = |v: String, name: &str| -> Result<u64> {
            v.parse().map_err(|_| Error::Format(format!("bad {name} value {v:?}")))
        };
        let config = MbslConfig {
            context: num(field("context")?, "context")? as usize,
            max_tile_len: num(field("max_tile_len")?, "max_tile_len")? as usize,
            threshold: {
                let v = field("threshold")?;
                v.parse().map_err(|_| Error::Format(format!("bad threshold {v:?}")))?
            },
            min_positive_count: num(field("min_positive_count")?, "min_positive_count")?,
        };
        config.validate().map_err(|e| Error::Format(e.to_string()))?;
        let max_np_len = num(field("max_np_len")?, "max_np_len")? as usize;
        let n_tiles = num(field("tiles")?, "tiles")? as usize;

        let mut symbols = SymbolTable::default();
        let mut entries = Vec::with_capacity(n_tiles);
        for i in 0..n_tiles {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("truncated after {i} of {n_tiles} tiles")))?;
            let mut parts = line.split('\t');
            let (Some(text), Some(pos), Some(neg), None) = (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::Format(format!("bad tile line {line:?}")));
            };
            let tile = Tile::parse(text)?;
            let ids = tile
                .pos_seq
                .iter()
                .map(|t| symbols.intern(t))
                .collect::<Result<Vec<_>>>()?;
            let pos = num(pos.to_owned(), "pos_count")?;
            let neg = num(neg.to_owned(), "neg_count")?;
            if pos == 0 {
                return Err(Error::Format(format!("tile {text:?} has zero positive count")));
            }
            entries.push(TileEntry {
                key: TileKey {
                    seq: pack(&ids),
                    open: tile.open.map_or(NO_MARK, |o| o as u8),
                    close: tile.close.map_or(NO_MARK, |c| c as u8),
                },
                pos,
                neg,
                score: pos as f64 / (pos + neg) as f64,
            });
        }
        if lines.next().is_some() {
            return Err(Error::Format("trailing data after tile table".into()));
        }
        let by_seq = index_entries(&entries);
        Ok(MbslModel {
            config,
            symbols,
            entries,
            by_seq,
            max_np_len,
        })
    }
}

impl PartialEq for MbslModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.max_np_len == other.max_np_len && self.table() == other.table()
    }
}

/// Greedy overlap resolution: highest score first, then longer, then
/// leftmost.
pub fn mbsl_predict(model: &MbslModel, sentence: &Sentence) -> Vec<ChunkSpan> {
    let mut candidates = model.candidates(sentence);
    candidates.sort_by(|x, y| {
        y.score
            .total_cmp(&x.score)
            .then(y.span.len().cmp(&x.span.len()))
            .then(x.span.start.cmp(&y.span.start))
    });
    let mut chosen: Vec<ChunkSpan> = Vec::new();
    for c in candidates {
        if chosen.iter().all(|s| !s.overlaps(&c.span)) {
            chosen.push(c.span);
        }
    }
    chosen.sort();
    chosen
}

impl Chunker for MbslModel {
    fn predict(&self, sentence: &Sentence) -> Vec<ChunkSpan> {
        mbsl_predict(self, sentence)
    }
}
