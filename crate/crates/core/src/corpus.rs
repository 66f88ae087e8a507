//! Sentences, sense annotations, bitexts, key files and corpus statistics.
//!
//! Corpus and bitext files hold one JSON record per line. Serialization is
//! canonical (fixed field order, annotations sorted by token index, no
//! insignificant whitespace), so `write(parse(f))` is byte-stable.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexkb::{Pos, SynsetId};

/// Token-level part of speech. Only the four open classes are content words.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TokenPos {
    #[serde(rename = "n")]
    Noun,
    #[serde(rename = "v")]
    Verb,
    #[serde(rename = "a")]
    Adj,
    #[serde(rename = "r")]
    Adv,
    #[serde(rename = "other")]
    Other,
}

impl TokenPos {
    pub fn content(self) -> Option<Pos> {
        match self {
            TokenPos::Noun => Some(Pos::Noun),
            TokenPos::Verb => Some(Pos::Verb),
            TokenPos::Adj => Some(Pos::Adj),
            TokenPos::Adv => Some(Pos::Adv),
            TokenPos::Other => None,
        }
    }

    pub fn tag(self) -> &'static str {
        self.content().map_or("other", Pos::tag)
    }
}

impl From<Pos> for TokenPos {
    fn from(p: Pos) -> Self {
        match p {
            Pos::Noun => TokenPos::Noun,
            Pos::Verb => TokenPos::Verb,
            Pos::Adj => TokenPos::Adj,
            Pos::Adv => TokenPos::Adv,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    pub pos: TokenPos,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iid: Option<String>,
}

impl Token {
    pub fn new(surface: &str, lemma: &str, pos: TokenPos) -> Self {
        Token {
            surface: surface.to_string(),
            lemma: lemma.to_string(),
            pos,
            iid: None,
        }
    }

    pub fn with_iid(mut self, iid: impl Into<String>) -> Self {
        self.iid = Some(iid.into());
        self
    }

    pub fn is_content(&self) -> bool {
        self.pos.content().is_some()
    }
}

/// Where an annotation came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Gold,
    Ppr,
    Prop,
    Nn,
    Mfs,
    Ref,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SenseAnnotation {
    pub token: usize,
    pub synset: SynsetId,
    pub score: f64,
    pub source: Source,
}

impl SenseAnnotation {
    pub fn new(token: usize, synset: SynsetId, score: f64, source: Source) -> Self {
        SenseAnnotation {
            token,
            synset,
            score,
            source,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sentence {
    pub doc: String,
    pub sid: String,
    pub lang: String,
    pub tokens: Vec<Token>,
    #[serde(default)]
    pub annotations: Vec<SenseAnnotation>,
}

impl Sentence {
    pub fn new(doc: &str, sid: &str, lang: &str, tokens: Vec<Token>) -> Self {
        Sentence {
            doc: doc.to_string(),
            sid: sid.to_string(),
            lang: lang.to_string(),
            tokens,
            annotations: Vec::new(),
        }
    }

    pub fn annotation(&self, token: usize) -> Option<&SenseAnnotation> {
        self.annotations.iter().find(|a| a.token == token)
    }

    /// Adds or replaces the annotation of `ann.token`, keeping token order.
    pub fn set_annotation(&mut self, ann: SenseAnnotation) {
        match self
            .annotations
            .binary_search_by_key(&ann.token, |a| a.token)
        {
            Ok(i) => self.annotations[i] = ann,
            Err(i) => self.annotations.insert(i, ann),
        }
    }

    /// Key under which the token's contextual embedding is stored:
    /// `doc.sid.t<index>`.
    pub fn token_key(&self, token: usize) -> String {
        format!("{}.{}.t{}", self.doc, self.sid, token)
    }

    /// Checks the sentence invariants and sorts annotations by token.
    pub fn validate(&mut self, line: usize) -> Result<()> {
        if let Some(t) = self.tokens.iter().find(|t| t.surface.is_empty()) {
            return Err(Error::malformed(
                line,
                format!("empty surface form (lemma {:?})", t.lemma),
            ));
        }
        let len = self.tokens.len();
        let mut seen = HashSet::new();
        for a in &self.annotations {
            if a.token >= len {
                return Err(Error::IndexOutOfRange {
                    line,
                    what: "annotation token",
                    index: a.token,
                    len,
                });
            }
            if !seen.insert(a.token) {
                return Err(Error::DuplicateAnnotation {
                    line,
                    token: a.token,
                });
            }
            if !(0.0..=1.0).contains(&a.score) {
                return Err(Error::malformed(
                    line,
                    format!("annotation score {} outside [0, 1]", a.score),
                ));
            }
        }
        self.annotations.sort_by_key(|a| a.token);
        Ok(())
    }
}

/// Word-alignment links `(src_index, tgt_index)`.
pub type Links = BTreeSet<(usize, usize)>;

#[derive(Clone, Debug, PartialEq)]
pub struct AlignedSentencePair {
    pub src: Sentence,
    pub tgt: Sentence,
    pub align: Links,
    /// Pseudo pairs come from dictionary augmentation and are never
    /// annotated or counted.
    pub pseudo: bool,
}

impl AlignedSentencePair {
    pub fn new(src: Sentence, tgt: Sentence, align: Links) -> Self {
        AlignedSentencePair {
            src,
            tgt,
            align,
            pseudo: false,
        }
    }

    /// Target indices linked to source token `i`, ascending.
    pub fn targets_of(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.align.range((i, 0)..=(i, usize::MAX)).map(|&(_, j)| j)
    }

    /// Source indices linked to target token `j`, ascending.
    pub fn sources_of(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.align.iter().filter(move |l| l.1 == j).map(|&(i, _)| i)
    }

    fn check_links(&self, line: usize) -> Result<()> {
        let (ls, lt) = (self.src.tokens.len(), self.tgt.tokens.len());
        for &(i, j) in &self.align {
            if i >= ls {
                return Err(Error::IndexOutOfRange {
                    line,
                    what: "source link",
                    index: i,
                    len: ls,
                });
            }
            if j >= lt {
                return Err(Error::IndexOutOfRange {
                    line,
                    what: "target link",
                    index: j,
                    len: lt,
                });
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRecord {
    src: Sentence,
    tgt: Sentence,
    #[serde(default)]
    align: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pseudo: bool,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn json_lines<R: BufRead, T: for<'de> Deserialize<'de>>(
    reader: R,
) -> impl Iterator<Item = Result<(usize, T)>> {
    reader.lines().enumerate().filter_map(|(n, line)| {
        let lineno = n + 1;
        match line {
            Err(e) => Some(Err(Error::malformed(lineno, e))),
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(
                serde_json::from_str(&l)
                    .map(|v| (lineno, v))
                    .map_err(|e| Error::malformed(lineno, e)),
            ),
        }
    })
}

pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<Sentence>> {
    json_lines(reader)
        .map(|r| {
            let (line, mut s): (usize, Sentence) = r?;
            s.validate(line)?;
            Ok(s)
        })
        .collect()
}

pub fn serialize_corpus<W: Write>(sentences: &[Sentence], mut out: W) -> Result<()> {
    for s in sentences {
        serde_json::to_writer(&mut out, s).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Sentence>> {
    parse_corpus(open(path.as_ref())?)
}

pub fn write_corpus(path: impl AsRef<Path>, sentences: &[Sentence]) -> Result<()> {
    let mut out = create(path.as_ref())?;
    serialize_corpus(sentences, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Parses a bitext. When `alignments` is given, its Pharaoh lines replace any
/// embedded `align` arrays pairwise.
pub fn parse_bitext<R: BufRead, A: BufRead>(
    reader: R,
    alignments: Option<A>,
) -> Result<Vec<AlignedSentencePair>> {
    let mut pairs = Vec::new();
    let mut lines = Vec::new();
    for r in json_lines::<_, PairRecord>(reader) {
        let (line, rec) = r?;
        let mut src = rec.src;
        let mut tgt = rec.tgt;
        src.validate(line)?;
        tgt.validate(line)?;
        let pair = AlignedSentencePair {
            src,
            tgt,
            align: rec.align.into_iter().collect(),
            pseudo: rec.pseudo,
        };
        pair.check_links(line)?;
        pairs.push(pair);
        lines.push(line);
    }
    if let Some(reader) = alignments {
        let links: Vec<Links> = reader
            .lines()
            .enumerate()
            .map(|(n, l)| {
                let l = l.map_err(|e| Error::malformed(n + 1, e))?;
                parse_pharaoh(&l, n + 1)
            })
            .collect::<Result<_>>()?;
        if links.len() != pairs.len() {
            return Err(Error::CountMismatch {
                bitext: pairs.len(),
                alignments: links.len(),
            });
        }
        for (n, (pair, l)) in pairs.iter_mut().zip(links).enumerate() {
            pair.align = l;
            pair.check_links(n + 1)?;
        }
    }
    Ok(pairs)
}

pub fn serialize_bitext<W: Write>(pairs: &[AlignedSentencePair], mut out: W) -> Result<()> {
    for p in pairs {
        let rec = PairRecord {
            src: p.src.clone(),
            tgt: p.tgt.clone(),
            align: p.align.iter().copied().collect(),
            pseudo: p.pseudo,
        };
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_bitext(
    path: impl AsRef<Path>,
    align_path: Option<&Path>,
) -> Result<Vec<AlignedSentencePair>> {
    let reader = open(path.as_ref())?;
    match align_path {
        Some(p) => parse_bitext(reader, Some(open(p)?)),
        None => parse_bitext(reader, None::<&[u8]>),
    }
}

pub fn write_bitext(path: impl AsRef<Path>, pairs: &[AlignedSentencePair]) -> Result<()> {
    let mut out = create(path.as_ref())?;
    serialize_bitext(pairs, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Parses one Pharaoh line such as `0-0 1-2`. An empty line is an empty
/// alignment.
pub fn parse_pharaoh(line: &str, lineno: usize) -> Result<Links> {
    line.split_whitespace()
        .map(|tok| {
            let (i, j) = tok
                .split_once('-')
                .ok_or_else(|| Error::malformed(lineno, format!("bad link {tok:?}")))?;
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::malformed(lineno, format!("bad link {tok:?}")))
            };
            Ok((parse(i)?, parse(j)?))
        })
        .collect()
}

pub fn format_pharaoh(links: &Links) -> String {
    let parts: Vec<String> = links.iter().map(|(i, j)| format!("{i}-{j}")).collect();
    parts.join(" ")
}

pub fn write_pharaoh<W: Write>(pairs: &[AlignedSentencePair], mut out: W) -> Result<()> {
    for p in pairs {
        writeln!(out, "{}", format_pharaoh(&p.align))?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub annotated_tokens: usize,
    pub annotated_word_types: usize,
    pub sense_types: usize,
    pub failed_alignments: usize,
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:>12} {:>12} {:>12} {:>12}",
            self.annotated_tokens,
            self.annotated_word_types,
            self.sense_types,
            self.failed_alignments
        )
    }
}

pub fn corpus_stats<'a>(
    sentences: impl IntoIterator<Item = &'a Sentence>,
    failed_alignments: usize,
) -> CorpusStats {
    let mut tokens = 0;
    let mut word_types = HashSet::new();
    let mut senses = HashSet::new();
    for s in sentences {
        for a in &s.annotations {
            tokens += 1;
            let t = &s.tokens[a.token];
            word_types.insert((t.lemma.as_str(), t.pos));
            senses.insert(&a.synset);
        }
    }
    CorpusStats {
        annotated_tokens: tokens,
        annotated_word_types: word_types.len(),
        sense_types: senses.len(),
        failed_alignments,
    }
}

/// Instance id → synsets, as found in key files.
pub type KeyMap = BTreeMap<String, BTreeSet<SynsetId>>;

/// Collects the annotations of tokens carrying an instance id.
pub fn key_from_sentences(sentences: &[Sentence]) -> KeyMap {
    let mut key = KeyMap::new();
    for s in sentences {
        for a in &s.annotations {
            if let Some(iid) = &s.tokens[a.token].iid {
                key.entry(iid.clone()).or_default().insert(a.synset.clone());
            }
        }
    }
    key
}

pub fn write_key<W: Write>(key: &KeyMap, mut out: W) -> Result<()> {
    for (iid, synsets) in key {
        if synsets.is_empty() {
            continue;
        }
        write!(out, "{iid}")?;
        for s in synsets {
            write!(out, " {s}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn parse_key<R: BufRead>(reader: R) -> Result<KeyMap> {
    let mut key = KeyMap::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::malformed(lineno, e))?;
        let mut fields = line.split_whitespace();
        let Some(iid) = fields.next() else {
            continue;
        };
        let synsets: BTreeSet<SynsetId> = fields.map(SynsetId::from).collect();
        if synsets.is_empty() {
            return Err(Error::malformed(
                lineno,
                format!("instance {iid} has no synsets"),
            ));
        }
        if key.insert(iid.to_string(), synsets).is_some() {
            return Err(Error::DuplicateInstance {
                line: lineno,
                iid: iid.to_string(),
            });
        }
    }
    Ok(key)
}

pub fn read_key(path: impl AsRef<Path>) -> Result<KeyMap> {
    parse_key(open(path.as_ref())?)
}

pub fn save_key(path: impl AsRef<Path>, key: &KeyMap) -> Result<()> {
    let mut out = create(path.as_ref())?;
    write_key(key, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Seeded uniform sample of `n` items without replacement, in input order.
/// Returns everything when `n >= items.len()`.
pub fn sample<T: Clone>(items: &[T], n: usize, seed: u64) -> Vec<T> {
    if n >= items.len() {
        return items.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, items.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}
