//! Multilingual lexical knowledge base: synsets, their lexicalizations in
//! each language, sense-frequency counts and an undirected relation graph.
//!
//! The on-disk form is one JSON object per line:
//!
//! ```text
//! {"id":"s1","pos":"n","lemmas":{"en":["bank"],"it":["banca"]},"edges":["s3"],"freq":{"en":{"bank":10}}}
//! ```
//!
//! Edges may be declared on either endpoint; they are symmetrized on load.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque synset identifier such as `s1` or `bn:00001234n`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SynsetId(String);

impl SynsetId {
    pub fn new(id: impl Into<String>) -> Self {
        SynsetId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SynsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SynsetId {
    fn from(s: &str) -> Self {
        SynsetId(s.to_string())
    }
}

impl std::borrow::Borrow<str> for SynsetId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// Part of speech of a synset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pos {
    #[serde(rename = "n")]
    Noun,
    #[serde(rename = "v")]
    Verb,
    #[serde(rename = "a")]
    Adj,
    #[serde(rename = "r")]
    Adv,
}

impl Pos {
    pub fn tag(self) -> &'static str {
        match self {
            Pos::Noun => "n",
            Pos::Verb => "v",
            Pos::Adj => "a",
            Pos::Adv => "r",
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Synset {
    pub id: SynsetId,
    pub pos: Pos,
    /// language code → lemmas lexicalizing this synset in that language
    pub lemmas: BTreeMap<String, BTreeSet<String>>,
    pub gloss: Option<String>,
    pub edges: BTreeSet<SynsetId>,
    /// language code → lemma → sense-frequency count
    pub freq: BTreeMap<String, BTreeMap<String, u64>>,
}

impl Synset {
    pub fn new(id: impl Into<String>, pos: Pos) -> Self {
        Synset {
            id: SynsetId::new(id),
            pos,
            lemmas: BTreeMap::new(),
            gloss: None,
            edges: BTreeSet::new(),
            freq: BTreeMap::new(),
        }
    }

    pub fn with_lemma(mut self, lang: &str, lemma: &str) -> Self {
        self.lemmas
            .entry(lang.to_string())
            .or_default()
            .insert(lemma.to_string());
        self
    }

    pub fn with_edge(mut self, to: &str) -> Self {
        self.edges.insert(SynsetId::from(to));
        self
    }

    pub fn with_freq(mut self, lang: &str, lemma: &str, count: u64) -> Self {
        self.freq
            .entry(lang.to_string())
            .or_default()
            .insert(lemma.to_string(), count);
        self
    }

    pub fn contains(&self, lemma: &str, lang: &str) -> bool {
        self.lemmas.get(lang).is_some_and(|l| l.contains(lemma))
    }

    /// Sense-frequency count of `lemma` in `lang`; missing entries count as 0.
    pub fn frequency(&self, lemma: &str, lang: &str) -> u64 {
        self.freq
            .get(lang)
            .and_then(|m| m.get(lemma))
            .copied()
            .unwrap_or(0)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynsetRecord {
    id: String,
    pos: Pos,
    lemmas: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gloss: Option<String>,
    #[serde(default)]
    edges: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    freq: BTreeMap<String, BTreeMap<String, u64>>,
}

/// Adjacency structure over dense node indices, in `SynsetId` order.
#[derive(Clone, Debug, Default)]
pub(crate) struct Graph {
    pub(crate) nodes: Vec<SynsetId>,
    pub(crate) index: HashMap<SynsetId, usize>,
    pub(crate) neighbors: Vec<Vec<usize>>,
}

/// Immutable, validated knowledge base.
#[derive(Clone, Debug, Default)]
pub struct LexKb {
    synsets: BTreeMap<SynsetId, Synset>,
    // language → lemma → synsets
    index: HashMap<String, HashMap<String, BTreeSet<SynsetId>>>,
    graph: Graph,
}

static NO_SENSES: BTreeSet<SynsetId> = BTreeSet::new();

impl LexKb {
    /// Builds a KB from in-memory synsets, applying the same validation as
    /// [`LexKb::parse`]. Line numbers in errors are 1-based positions in
    /// `synsets`.
    pub fn from_synsets(synsets: impl IntoIterator<Item = Synset>) -> Result<Self> {
        Self::build(
            synsets
                .into_iter()
                .enumerate()
                .map(|(i, s)| (i + 1, s))
                .collect(),
        )
    }

    fn build(entries: Vec<(usize, Synset)>) -> Result<Self> {
        let mut synsets: BTreeMap<SynsetId, Synset> = BTreeMap::new();
        let mut lines: HashMap<SynsetId, usize> = HashMap::new();
        for (line, s) in entries {
            if s.id.as_str().is_empty() {
                return Err(Error::malformed(line, "empty synset id"));
            }
            for (lang, counts) in &s.freq {
                for lemma in counts.keys() {
                    if !s.contains(lemma, lang) {
                        return Err(Error::malformed(
                            line,
                            format!(
                                "synset {} has a frequency for {lang}:{lemma} which it does not lexicalize",
                                s.id
                            ),
                        ));
                    }
                }
            }
            if synsets.contains_key(&s.id) {
                return Err(Error::DuplicateSynset { line, id: s.id });
            }
            lines.insert(s.id.clone(), line);
            synsets.insert(s.id.clone(), s);
        }

        // Validate and symmetrize edges; self-loops are dropped.
        let mut reverse: Vec<(SynsetId, SynsetId)> = Vec::new();
        for s in synsets.values_mut() {
            s.edges.remove(&s.id);
        }
        for s in synsets.values() {
            for to in &s.edges {
                if !synsets.contains_key(to) {
                    return Err(Error::UnknownEdge {
                        line: lines[&s.id],
                        from: s.id.clone(),
                        to: to.clone(),
                    });
                }
                reverse.push((to.clone(), s.id.clone()));
            }
        }
        for (at, to) in reverse {
            synsets.get_mut(&at).expect("validated").edges.insert(to);
        }

        let mut index: HashMap<String, HashMap<String, BTreeSet<SynsetId>>> = HashMap::new();
        for s in synsets.values() {
            for (lang, lemmas) in &s.lemmas {
                let by_lemma = index.entry(lang.clone()).or_default();
                for lemma in lemmas {
                    by_lemma
                        .entry(lemma.clone())
                        .or_default()
                        .insert(s.id.clone());
                }
            }
        }

        let nodes: Vec<SynsetId> = synsets.keys().cloned().collect();
        let node_index: HashMap<SynsetId, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let neighbors = synsets
            .values()
            .map(|s| s.edges.iter().map(|e| node_index[e]).collect())
            .collect();

        Ok(LexKb {
            synsets,
            index,
            graph: Graph {
                nodes,
                index: node_index,
                neighbors,
            },
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file))
    }

    /// Parses the line-delimited KB format. Blank lines are skipped.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let lineno = n + 1;
            let line = line.map_err(|e| Error::malformed(lineno, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SynsetRecord =
                serde_json::from_str(&line).map_err(|e| Error::malformed(lineno, e))?;
            entries.push((
                lineno,
                Synset {
                    id: SynsetId(rec.id),
                    pos: rec.pos,
                    lemmas: rec
                        .lemmas
                        .into_iter()
                        .map(|(lang, l)| (lang, l.into_iter().collect()))
                        .collect(),
                    gloss: rec.gloss,
                    edges: rec.edges.into_iter().map(SynsetId).collect(),
                    freq: rec.freq,
                },
            ));
        }
        Self::build(entries)
    }

    /// Writes the canonical form: synsets in id order, symmetric edges listed
    /// on both endpoints.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for s in self.synsets.values() {
            let rec = SynsetRecord {
                id: s.id.0.clone(),
                pos: s.pos,
                lemmas: s
                    .lemmas
                    .iter()
                    .map(|(lang, l)| (lang.clone(), l.iter().cloned().collect()))
                    .collect(),
                gloss: s.gloss.clone(),
                edges: s.edges.iter().map(|e| e.0.clone()).collect(),
                freq: s.freq.clone(),
            };
            serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.synsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synsets.is_empty()
    }

    pub fn synsets(&self) -> impl Iterator<Item = &Synset> {
        self.synsets.values()
    }

    pub fn get(&self, id: &str) -> Option<&Synset> {
        self.synsets.get(id)
    }

    pub fn contains_synset(&self, id: &str) -> bool {
        self.synsets.contains_key(id)
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.synsets.values().map(|s| s.edges.len()).sum::<usize>() / 2
    }

    pub(crate) fn graph(&self) -> &Graph {
        &self.graph
    }

    /// Synsets lexicalizing `lemma` in `lang`, regardless of part of speech.
    pub fn senses_of(&self, lemma: &str, lang: &str) -> &BTreeSet<SynsetId> {
        self.index
            .get(lang)
            .and_then(|m| m.get(lemma))
            .unwrap_or(&NO_SENSES)
    }

    pub fn synset_contains(&self, sid: &str, lemma: &str, lang: &str) -> Result<bool> {
        self.synsets
            .get(sid)
            .map(|s| s.contains(lemma, lang))
            .ok_or_else(|| Error::UnknownSynset(SynsetId::from(sid)))
    }

    /// Every `(lemma_a, lemma_b)` co-lexicalizing some synset.
    pub fn translation_pairs(&self, lang_a: &str, lang_b: &str) -> BTreeSet<(String, String)> {
        let mut pairs = BTreeSet::new();
        for s in self.synsets.values() {
            let (Some(la), Some(lb)) = (s.lemmas.get(lang_a), s.lemmas.get(lang_b)) else {
                continue;
            };
            for a in la {
                for b in lb {
                    pairs.insert((a.clone(), b.clone()));
                }
            }
        }
        pairs
    }

    /// Most frequent sense of `lemma`, optionally restricted to `pos`. Ties go
    /// to the smallest id.
    pub fn mfs(&self, lemma: &str, pos: Option<Pos>, lang: &str) -> Option<&SynsetId> {
        let mut best: Option<(&SynsetId, u64)> = None;
        for sid in self.senses_of(lemma, lang) {
            let s = &self.synsets[sid];
            if pos.is_some_and(|p| p != s.pos) {
                continue;
            }
            let f = s.frequency(lemma, lang);
            if best.is_none_or(|(_, bf)| f > bf) {
                best = Some((sid, f));
            }
        }
        best.map(|(sid, _)| sid)
    }
}
