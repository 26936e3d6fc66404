//! POS-tagged sentences with gold base-NP spans, the IOB2 carrier format and
//! a synthetic genre generator.

use std::fmt::Write as _;
use std::fs;
use std::io::BufRead;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::resample::PrngStream;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub word: String,
    pub pos: String,
}

impl Token {
    pub fn new(word: impl Into<String>, pos: impl Into<String>) -> Result<Self> {
        let token = Token {
            word: word.into(),
            pos: pos.into(),
        };
        for field in [&token.word, &token.pos] {
            if field.is_empty() || field.chars().any(char::is_whitespace) {
                return Err(Error::Argument(format!(
                    "token field {field:?} is empty or contains whitespace"
                )));
            }
        }
        Ok(token)
    }
}

/// Half-open token range `[start, end)` covering one base-NP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChunkSpan {
    pub start: usize,
    pub end: usize,
}

impl ChunkSpan {
    pub fn new(start: usize, end: usize) -> Self {
        ChunkSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &ChunkSpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub gold_spans: Vec<ChunkSpan>,
}

impl Sentence {
    /// Builds a sentence, checking that spans are non-empty, in bounds,
    /// sorted and pairwise disjoint.
    pub fn new(tokens: Vec<Token>, gold_spans: Vec<ChunkSpan>) -> Result<Self> {
        let mut prev_end = 0;
        for span in &gold_spans {
            if span.is_empty() || span.end > tokens.len() || span.start < prev_end {
                return Err(Error::Argument(format!(
                    "span {}..{} is empty, out of bounds, unsorted or overlapping (sentence length {})",
                    span.start,
                    span.end,
                    tokens.len()
                )));
            }
            prev_end = span.end;
        }
        Ok(Sentence { tokens, gold_spans })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn pos_tags(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.pos.as_str())
    }

    pub fn instance_count(&self) -> usize {
        self.gold_spans.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub name: String,
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, sentences: Vec<Sentence>) -> Self {
        Corpus {
            name: name.into(),
            sentences,
        }
    }

    /// Number of gold base-NP instances.
    pub fn instance_count(&self) -> usize {
        self.sentences.iter().map(Sentence::instance_count).sum()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn max_sentence_instances(&self) -> usize {
        self.sentences
            .iter()
            .map(Sentence::instance_count)
            .max()
            .unwrap_or(0)
    }

    /// Copy of a contiguous run of sentences.
    pub fn slice(&self, name: impl Into<String>, range: Range<usize>) -> Corpus {
        Corpus::new(name, self.sentences[range].to_vec())
    }
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_iob2(name, text.as_bytes())
}

/// Parses strict IOB2 text: `word<TAB>pos<TAB>tag` per line, blank line
/// between sentences.
pub fn parse_iob2(name: impl Into<String>, input: impl BufRead) -> Result<Corpus> {
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    let mut spans: Vec<ChunkSpan> = Vec::new();
    let mut open = false;

    let finish = |tokens: &mut Vec<Token>, spans: &mut Vec<ChunkSpan>, out: &mut Vec<Sentence>| {
        if !tokens.is_empty() {
            out.push(Sentence {
                tokens: std::mem::take(tokens),
                gold_spans: std::mem::take(spans),
            });
        }
    };

    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.is_empty() {
            finish(&mut tokens, &mut spans, &mut sentences);
            open = false;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 3 tab-separated columns, found {}", fields.len()),
            });
        }
        let token = Token::new(fields[0], fields[1]).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let position = tokens.len();
        match fields[2] {
            "B-NP" => {
                spans.push(ChunkSpan::new(position, position + 1));
                open = true;
            }
            "I-NP" => {
                if !open {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "I-NP must follow B-NP or I-NP".into(),
                    });
                }
                spans.last_mut().expect("open span").end = position + 1;
            }
            "O" => open = false,
            other => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("unknown chunk tag {other:?}"),
                })
            }
        }
        tokens.push(token);
    }
    finish(&mut tokens, &mut spans, &mut sentences);
    Ok(Corpus::new(name, sentences))
}

pub fn format_iob2(corpus: &Corpus) -> String {
    let mut out = String::new();
    for sentence in &corpus.sentences {
        let mut spans = sentence.gold_spans.iter().peekable();
        for (i, token) in sentence.tokens.iter().enumerate() {
            while spans.peek().is_some_and(|s| s.end <= i) {
                spans.next();
            }
            let tag = match spans.peek() {
                Some(s) if s.start == i => "B-NP",
                Some(s) if s.start < i => "I-NP",
                _ => "O",
            };
            let _ = writeln!(out, "{}\t{}\t{}", token.word, token.pos, tag);
        }
        out.push('\n');
    }
    out
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_iob2(corpus)).map_err(|e| Error::io(path, e))
}

/// Shortest sentence prefix holding at least `min_instances` base-NPs.
pub fn take_prefix_by_instances(corpus: &Corpus, min_instances: usize) -> Result<Corpus> {
    if min_instances == 0 {
        return Err(Error::Argument("min_instances must be positive".into()));
    }
    let mut total = 0;
    for (i, sentence) in corpus.sentences.iter().enumerate() {
        total += sentence.instance_count();
        if total >= min_instances {
            return Ok(corpus.slice(corpus.name.clone(), 0..i + 1));
        }
    }
    Err(Error::Argument(format!(
        "corpus {:?} has {} instances, fewer than the requested {}",
        corpus.name, total, min_instances
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub tags: Vec<String>,
    pub weight: f64,
    pub alternative: Option<AltBracket>,
}

/// Inconsistent annotation: with probability `prob` only `start..end` of an
/// NP pattern is bracketed and the remaining tags are outside any NP. An
/// empty range leaves the whole pattern unbracketed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltBracket {
    pub start: usize,
    pub end: usize,
    pub prob: f64,
}

impl Pattern {
    pub fn new(tags: &str, weight: f64) -> Self {
        Pattern {
            tags: tags.split_whitespace().map(str::to_owned).collect(),
            weight,
            alternative: None,
        }
    }

    pub fn or_bracket(mut self, start: usize, end: usize, prob: f64) -> Self {
        self.alternative = Some(AltBracket { start, end, prob });
        self
    }
}

/// Number of base-NPs per sentence: `min + Binomial(max - min, p)` with `p`
/// chosen so the expectation equals `mean`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpCount {
    pub mean: f64,
    pub min: u32,
    pub max: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenreGrammar {
    pub name: String,
    pub np_patterns: Vec<Pattern>,
    pub glue_patterns: Vec<Pattern>,
    pub nps_per_sentence: NpCount,
    /// Distinct synthetic words per POS tag (`nn0` .. `nn{n-1}`).
    pub vocab_per_pos: u32,
}

impl GenreGrammar {
    pub fn validate(&self) -> Result<()> {
        if self.np_patterns.is_empty() || self.glue_patterns.is_empty() {
            return Err(Error::Config(format!(
                "grammar {:?} needs at least one NP and one glue pattern",
                self.name
            )));
        }
        for p in self.np_patterns.iter().chain(&self.glue_patterns) {
            if !(p.weight > 0.0 && p.weight.is_finite()) {
                return Err(Error::Config(format!("pattern weight {} is not positive", p.weight)));
            }
            if p.tags.is_empty() {
                return Err(Error::Config("empty pattern".into()));
            }
            if p.tags.iter().any(|t| t.is_empty() || t.contains(char::is_whitespace)) {
                return Err(Error::Config(format!("bad tag in pattern {:?}", p.tags)));
            }
        }
        if let Some(p) = self.glue_patterns.iter().find(|p| p.alternative.is_some()) {
            return Err(Error::Config(format!("glue pattern {:?} cannot carry a bracket", p.tags)));
        }
        for p in &self.np_patterns {
            if let Some(a) = p.alternative {
                if !(a.start <= a.end && a.end <= p.tags.len() && (0.0..=1.0).contains(&a.prob)) {
                    return Err(Error::Config(format!("bad alternative bracket on {:?}", p.tags)));
                }
            }
        }
        let n = self.nps_per_sentence;
        if n.min > n.max || !(n.min as f64 <= n.mean && n.mean <= n.max as f64) {
            return Err(Error::Config(format!(
                "NP count mean {} outside [{}, {}]",
                n.mean, n.min, n.max
            )));
        }
        if self.vocab_per_pos == 0 {
            return Err(Error::Config("vocab_per_pos must be positive".into()));
        }
        Ok(())
    }

    /// Newspaper-like genre: about six base-NPs per sentence, NPs of up to
    /// four tags, and a verb-group construction whose bracketing depends on
    /// the tag two positions to the left. `JJ NNS` is left unbracketed half
    /// the time and `NN CD` is sometimes bracketed as `NN` alone.
    pub fn wsj_like() -> Self {
        GenreGrammar {
            name: "wsj-like".into(),
            np_patterns: vec![
                Pattern::new("DT NN", 20.0),
                Pattern::new("DT JJ NN", 10.0),
                Pattern::new("DT NN NN", 6.0),
                Pattern::new("DT JJ JJ NN", 2.0),
                Pattern::new("NN", 4.0),
                Pattern::new("NNS", 10.0),
                Pattern::new("JJ NNS", 6.0).or_bracket(0, 0, 0.5),
                Pattern::new("CD NNS", 4.0),
                Pattern::new("NNP NNP", 8.0),
                Pattern::new("NNP", 6.0),
                Pattern::new("PRP", 6.0),
                Pattern::new("VBG NNS", 8.0),
                Pattern::new("NN CD", 1.0).or_bracket(0, 1, 0.5),
            ],
            glue_patterns: vec![
                Pattern::new("VBD", 10.0),
                Pattern::new("IN", 15.0),
                Pattern::new("VBZ", 8.0),
                Pattern::new("TO VB", 4.0),
                Pattern::new("CC", 3.0),
                Pattern::new(",", 4.0),
                Pattern::new("MD VB", 4.0),
                Pattern::new("VBD RB", 6.0),
                Pattern::new("MD RB VBG", 4.0),
                Pattern::new("VBP", 1.0),
            ],
            nps_per_sentence: NpCount {
                mean: 6.0,
                min: 2,
                max: 10,
            },
            vocab_per_pos: 50,
        }
    }

    /// Request-like genre: short sentences with about three base-NPs, frequent
    /// `NN CD` NPs, and the verb-group construction bracketed the opposite way.
    pub fn atis_like() -> Self {
        GenreGrammar {
            name: "atis-like".into(),
            np_patterns: vec![
                Pattern::new("PRP", 10.0),
                Pattern::new("DT NN", 10.0),
                Pattern::new("NNP", 10.0),
                Pattern::new("NN CD", 8.0),
                Pattern::new("NN", 6.0),
                Pattern::new("NNS", 15.0),
                Pattern::new("VBG NNS", 15.0),
                Pattern::new("DT NN NN", 3.0),
            ],
            glue_patterns: vec![
                Pattern::new("VBP", 10.0),
                Pattern::new("TO VB", 10.0),
                Pattern::new("IN", 15.0),
                Pattern::new("VBZ", 4.0),
                Pattern::new("MD RB", 15.0),
                Pattern::new("VBD RB VBG", 15.0),
            ],
            nps_per_sentence: NpCount {
                mean: 3.0,
                min: 1,
                max: 5,
            },
            vocab_per_pos: 50,
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "wsj-like" => Some(Self::wsj_like()),
            "atis-like" => Some(Self::atis_like()),
            _ => None,
        }
    }
}

fn pick<'a>(patterns: &'a [Pattern], total: f64, rng: &mut PrngStream) -> &'a Pattern {
    let mut target = rng.next_f64() * total;
    for p in patterns {
        if target < p.weight {
            return p;
        }
        target -= p.weight;
    }
    patterns.last().expect("non-empty patterns")
}

/// Generates `n_sentences` sentences of the form `G NP G NP ... NP G`, where
/// every `G` is a glue pattern and every `NP` an NP pattern drawn by weight.
pub fn generate_corpus(
    grammar: &GenreGrammar,
    n_sentences: usize,
    rng: &mut PrngStream,
) -> Result<Corpus> {
    grammar.validate()?;
    if n_sentences == 0 {
        return Err(Error::Argument("n_sentences must be positive".into()));
    }
    let np_total: f64 = grammar.np_patterns.iter().map(|p| p.weight).sum();
    let glue_total: f64 = grammar.glue_patterns.iter().map(|p| p.weight).sum();
    let count = grammar.nps_per_sentence;
    let spread = count.max - count.min;
    let p_extra = if spread == 0 {
        0.0
    } else {
        (count.mean - count.min as f64) / spread as f64
    };

    let mut sentences = Vec::with_capacity(n_sentences);
    for _ in 0..n_sentences {
        let n_nps = count.min + (0..spread).filter(|_| rng.next_f64() < p_extra).count() as u32;
        let mut tokens = Vec::new();
        let mut spans = Vec::with_capacity(n_nps as usize);
        let emit = |tags: &[String], tokens: &mut Vec<Token>, rng: &mut PrngStream| {
            for tag in tags {
                let word = format!("{}{}", tag.to_lowercase(), rng.next_below(grammar.vocab_per_pos as u64));
                tokens.push(Token {
                    word,
                    pos: tag.clone(),
                });
            }
        };
        for _ in 0..n_nps {
            emit(&pick(&grammar.glue_patterns, glue_total, rng).tags, &mut tokens, rng);
            let start = tokens.len();
            let np = pick(&grammar.np_patterns, np_total, rng);
            emit(&np.tags, &mut tokens, rng);
            match np.alternative {
                Some(a) if rng.next_f64() < a.prob => {
                    if a.start < a.end {
                        spans.push(ChunkSpan::new(start + a.start, start + a.end));
                    }
                }
                _ => spans.push(ChunkSpan::new(start, tokens.len())),
            }
        }
        emit(&pick(&grammar.glue_patterns, glue_total, rng).tags, &mut tokens, rng);
        sentences.push(Sentence {
            tokens,
            gold_spans: spans,
        });
    }
    Ok(Corpus::new(grammar.name.clone(), sentences))
}
