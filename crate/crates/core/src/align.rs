//! Word alignment: IBM Model 1 over lemmas, Viterbi decoding in both
//! directions with grow-diag symmetrization, plus the two KB-driven steps:
//! dictionary augmentation of the training bitext and a correction pass that
//! relinks tokens to targets sharing a synset.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{AlignedSentencePair, Links, Sentence, Token, TokenPos};
use crate::error::{Error, Result};
use crate::lexkb::LexKb;

pub const NULL_TOKEN: &str = "<null>";

/// Probability assigned to word pairs never seen together in training.
pub const FLOOR_PROB: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// `t(tgt | src)`
    SrcToTgt,
    /// `t(src | tgt)`
    TgtToSrc,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub iterations: usize,
    /// Copies of each KB translation pair appended to the training bitext;
    /// 0 disables augmentation.
    pub copies: usize,
    pub correct: bool,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            iterations: 5,
            copies: 1,
            correct: true,
        }
    }
}

/// Lexical translation probabilities `t(f | e)` of one direction.
#[derive(Clone, Debug, Default)]
pub struct TranslationTable {
    probs: HashMap<String, HashMap<String, f64>>,
}

impl TranslationTable {
    /// `t(f | e)`, or [`FLOOR_PROB`] for unseen pairs.
    pub fn prob(&self, e: &str, f: &str) -> f64 {
        self.probs
            .get(e)
            .and_then(|m| m.get(f))
            .copied()
            .unwrap_or(FLOOR_PROB)
    }

    pub fn conditionals(&self, e: &str) -> Option<&HashMap<String, f64>> {
        self.probs.get(e)
    }

    pub fn source_vocab(&self) -> impl Iterator<Item = &str> {
        self.probs.keys().map(String::as_str)
    }

    /// Writes `src tgt prob` lines sorted by source then target.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let mut rows: Vec<(&str, &str, f64)> = self
            .probs
            .iter()
            .flat_map(|(e, m)| m.iter().map(move |(f, &p)| (e.as_str(), f.as_str(), p)))
            .collect();
        rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for (e, f, p) in rows {
            writeln!(out, "{e} {f} {p}")?;
        }
        Ok(())
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut t = TranslationTable::default();
        for (n, line) in reader.lines().enumerate() {
            let lineno = n + 1;
            let line = line.map_err(|e| Error::malformed(lineno, e))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[..] {
                [] => continue,
                [e, f, p] => {
                    let p: f64 = p
                        .parse()
                        .map_err(|_| Error::malformed(lineno, format!("bad probability {p:?}")))?;
                    t.probs
                        .entry(e.to_string())
                        .or_default()
                        .insert(f.to_string(), p);
                }
                _ => return Err(Error::malformed(lineno, "expected \"src tgt prob\"")),
            }
        }
        Ok(t)
    }
}

/// Appends `copies` one-token pseudo pairs for every KB translation pair whose
/// lemmas both occur in the respective sides of `bitext`.
pub fn augment_bitext(
    bitext: &[AlignedSentencePair],
    kb: &LexKb,
    lang_src: &str,
    lang_tgt: &str,
    copies: usize,
) -> Vec<AlignedSentencePair> {
    let real = bitext.iter().filter(|p| !p.pseudo);
    let mut src_vocab = BTreeSet::new();
    let mut tgt_vocab = BTreeSet::new();
    for p in real {
        src_vocab.extend(p.src.tokens.iter().map(|t| t.lemma.as_str()));
        tgt_vocab.extend(p.tgt.tokens.iter().map(|t| t.lemma.as_str()));
    }
    let dict: Vec<(String, String)> = kb
        .translation_pairs(lang_src, lang_tgt)
        .into_iter()
        .filter(|(a, b)| src_vocab.contains(a.as_str()) && tgt_vocab.contains(b.as_str()))
        .collect();

    let mut out = bitext.to_vec();
    let mut n = 0;
    for _ in 0..copies {
        for (a, b) in &dict {
            let sid = format!("p{n}");
            n += 1;
            let one = |lemma: &str, lang: &str| {
                Sentence::new(
                    "__pseudo__",
                    &sid,
                    lang,
                    vec![Token::new(lemma, lemma, TokenPos::Other)],
                )
            };
            out.push(AlignedSentencePair {
                src: one(a, lang_src),
                tgt: one(b, lang_tgt),
                align: [(0, 0)].into_iter().collect(),
                pseudo: true,
            });
        }
    }
    out
}

fn lemma_pairs(bitext: &[AlignedSentencePair], dir: Direction) -> Vec<(Vec<&str>, Vec<&str>)> {
    bitext
        .iter()
        .map(|p| {
            let (e, f) = match dir {
                Direction::SrcToTgt => (&p.src, &p.tgt),
                Direction::TgtToSrc => (&p.tgt, &p.src),
            };
            let mut es: Vec<&str> = vec![NULL_TOKEN];
            es.extend(e.tokens.iter().map(|t| t.lemma.as_str()));
            (es, f.tokens.iter().map(|t| t.lemma.as_str()).collect())
        })
        .collect()
}

/// Dense indexing of the vocabularies for the EM loop.
struct Indexed {
    e_vocab: Vec<String>,
    f_vocab: Vec<String>,
    pairs: Vec<(Vec<usize>, Vec<usize>)>,
}

fn intern<'a>(w: &'a str, ids: &mut HashMap<&'a str, usize>, vocab: &mut Vec<String>) -> usize {
    *ids.entry(w).or_insert_with(|| {
        vocab.push(w.to_string());
        vocab.len() - 1
    })
}

fn index_pairs(pairs: &[(Vec<&str>, Vec<&str>)]) -> Indexed {
    let mut e_ids: HashMap<&str, usize> = HashMap::new();
    let mut f_ids: HashMap<&str, usize> = HashMap::new();
    let mut e_vocab = Vec::new();
    let mut f_vocab = Vec::new();
    let mut indexed = Vec::with_capacity(pairs.len());
    for (es, fs) in pairs {
        let ei = es
            .iter()
            .map(|&w| intern(w, &mut e_ids, &mut e_vocab))
            .collect();
        let fi = fs
            .iter()
            .map(|&w| intern(w, &mut f_ids, &mut f_vocab))
            .collect();
        indexed.push((ei, fi));
    }
    Indexed {
        e_vocab,
        f_vocab,
        pairs: indexed,
    }
}

type SparseTable = Vec<HashMap<usize, f64>>;

fn em_step(ix: &Indexed, t: Option<&SparseTable>, uniform: f64) -> SparseTable {
    let prob = |e: usize, f: usize| match t {
        None => uniform,
        Some(t) => t[e].get(&f).copied().unwrap_or(0.0),
    };
    // Expected counts per pair are computed in parallel and folded in pair
    // order, so the result does not depend on the thread count.
    let partial: Vec<Vec<(usize, usize, f64)>> = ix
        .pairs
        .par_iter()
        .map(|(es, fs)| {
            let mut c = Vec::with_capacity(es.len() * fs.len());
            for &f in fs {
                let z: f64 = es.iter().map(|&e| prob(e, f)).sum();
                if z <= 0.0 {
                    continue;
                }
                for &e in es {
                    c.push((e, f, prob(e, f) / z));
                }
            }
            c
        })
        .collect();
    let mut counts: SparseTable = vec![HashMap::new(); ix.e_vocab.len()];
    let mut totals = vec![0.0; ix.e_vocab.len()];
    for c in partial {
        for (e, f, x) in c {
            *counts[e].entry(f).or_insert(0.0) += x;
            totals[e] += x;
        }
    }
    for (row, total) in counts.iter_mut().zip(totals) {
        if total > 0.0 {
            for x in row.values_mut() {
                *x /= total;
            }
        }
    }
    counts
}

fn train_indexed(ix: &Indexed, iterations: usize) -> SparseTable {
    let uniform = 1.0 / ix.f_vocab.len().max(1) as f64;
    let mut t = em_step(ix, None, uniform);
    for _ in 1..iterations {
        t = em_step(ix, Some(&t), uniform);
    }
    t
}

/// IBM Model 1 EM over lemmas with a NULL source word and uniform
/// initialization. The E-step runs in parallel with an ordered reduction.
pub fn train_model1(
    bitext: &[AlignedSentencePair],
    iterations: usize,
    dir: Direction,
) -> Result<TranslationTable> {
    if iterations == 0 {
        return Err(Error::InvalidConfig(
            "aligner iterations must be at least 1".into(),
        ));
    }
    if bitext.is_empty() {
        return Err(Error::EmptyBitext);
    }
    let pairs = lemma_pairs(bitext, dir);
    let ix = index_pairs(&pairs);
    let t = train_indexed(&ix, iterations);
    let mut probs: HashMap<String, HashMap<String, f64>> = HashMap::new();
    for (e, row) in t.into_iter().enumerate() {
        if row.is_empty() {
            continue;
        }
        probs.insert(
            ix.e_vocab[e].clone(),
            row.into_iter()
                .map(|(f, p)| (ix.f_vocab[f].clone(), p))
                .collect(),
        );
    }
    Ok(TranslationTable { probs })
}

/// Corpus log-likelihood under Model 1, up to the constant length terms:
/// `Σ_pairs Σ_j ln(Σ_i t(f_j | e_i) / (l + 1))`.
pub fn log_likelihood(
    bitext: &[AlignedSentencePair],
    table: &TranslationTable,
    dir: Direction,
) -> f64 {
    lemma_pairs(bitext, dir)
        .iter()
        .map(|(es, fs)| {
            let l1 = es.len() as f64;
            fs.iter()
                .map(|f| (es.iter().map(|e| table.prob(e, f)).sum::<f64>() / l1).ln())
                .sum::<f64>()
        })
        .sum()
}

/// For each token of `fs`, the best-scoring position in `es`, or `None` when
/// NULL wins. Ties go to the smallest position; NULL must win strictly.
fn viterbi(es: &[&str], fs: &[&str], table: &TranslationTable) -> Vec<Option<usize>> {
    fs.iter()
        .map(|f| {
            let mut best: Option<(usize, f64)> = None;
            for (i, e) in es.iter().enumerate() {
                let p = table.prob(e, f);
                if best.is_none_or(|(_, b)| p > b) {
                    best = Some((i, p));
                }
            }
            let null = table.prob(NULL_TOKEN, f);
            match best {
                Some((i, p)) if p >= null => Some(i),
                _ => None,
            }
        })
        .collect()
}

/// Intersection of the two directional alignments grown towards their union
/// through neighboring (including diagonal) links whose source or target is
/// still unaligned.
pub fn grow_diag(forward: &Links, reverse: &Links) -> Links {
    let union: Links = forward.union(reverse).copied().collect();
    let mut links: Links = forward.intersection(reverse).copied().collect();
    const NEIGHBORS: [(isize, isize); 8] = [
        (-1, 0),
        (0, -1),
        (1, 0),
        (0, 1),
        (-1, -1),
        (-1, 1),
        (1, -1),
        (1, 1),
    ];
    loop {
        let mut added = false;
        let current: Vec<(usize, usize)> = links.iter().copied().collect();
        for (i, j) in current {
            for (di, dj) in NEIGHBORS {
                let (Some(ni), Some(nj)) = (i.checked_add_signed(di), j.checked_add_signed(dj))
                else {
                    continue;
                };
                if !union.contains(&(ni, nj)) || links.contains(&(ni, nj)) {
                    continue;
                }
                let src_free = !links.iter().any(|l| l.0 == ni);
                let tgt_free = !links.iter().any(|l| l.1 == nj);
                if src_free || tgt_free {
                    links.insert((ni, nj));
                    added = true;
                }
            }
        }
        if !added {
            return links;
        }
    }
}

/// Viterbi alignment in both directions, symmetrized with grow-diag.
/// `table_fwd` holds `t(tgt | src)`, `table_rev` holds `t(src | tgt)`.
pub fn align_pair(
    pair: &AlignedSentencePair,
    table_fwd: &TranslationTable,
    table_rev: &TranslationTable,
) -> Links {
    let src: Vec<&str> = pair.src.tokens.iter().map(|t| t.lemma.as_str()).collect();
    let tgt: Vec<&str> = pair.tgt.tokens.iter().map(|t| t.lemma.as_str()).collect();
    let forward: Links = viterbi(&src, &tgt, table_fwd)
        .into_iter()
        .enumerate()
        .filter_map(|(j, i)| i.map(|i| (i, j)))
        .collect();
    let reverse: Links = viterbi(&tgt, &src, table_rev)
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
        .collect();
    grow_diag(&forward, &reverse)
}

fn shares_synset(kb: &LexKb, pair: &AlignedSentencePair, i: usize, j: usize) -> bool {
    let a = kb.senses_of(&pair.src.tokens[i].lemma, &pair.src.lang);
    let b = kb.senses_of(&pair.tgt.tokens[j].lemma, &pair.tgt.lang);
    !a.is_disjoint(b)
}

/// Number of links whose endpoints share a synset.
pub fn synset_sharing_links(pair: &AlignedSentencePair, links: &Links, kb: &LexKb) -> usize {
    links
        .iter()
        .filter(|&&(i, j)| shares_synset(kb, pair, i, j))
        .count()
}

/// Greedy relinking: a source token whose links share no synset with it (or
/// which is unaligned) is relinked to the leftmost unaligned target sharing a
/// synset. Passes repeat left to right until nothing changes; every change
/// adds one synset-sharing link and removes none.
pub fn correct_alignment(pair: &AlignedSentencePair, links: &Links, kb: &LexKb) -> Links {
    let mut links = links.clone();
    let n_src = pair.src.tokens.len();
    let n_tgt = pair.tgt.tokens.len();
    loop {
        let mut changed = false;
        for i in 0..n_src {
            let own: Vec<(usize, usize)> = links.iter().filter(|l| l.0 == i).copied().collect();
            if own.iter().any(|&(_, j)| shares_synset(kb, pair, i, j)) {
                continue;
            }
            let free = (0..n_tgt)
                .find(|&j| !links.iter().any(|l| l.1 == j) && shares_synset(kb, pair, i, j));
            if let Some(j) = free {
                for l in own {
                    links.remove(&l);
                }
                links.insert((i, j));
                changed = true;
            }
        }
        if !changed {
            return links;
        }
    }
}

/// Trains on the (optionally augmented) bitext and aligns every real pair.
/// Returns one link set per input pair; pseudo pairs keep their links.
pub fn align_bitext(
    bitext: &[AlignedSentencePair],
    kb: &LexKb,
    cfg: &AlignConfig,
) -> Result<Vec<Links>> {
    let Some(first) = bitext.iter().find(|p| !p.pseudo) else {
        return Err(Error::EmptyBitext);
    };
    let (ls, lt) = (first.src.lang.clone(), first.tgt.lang.clone());
    let training = if cfg.copies > 0 {
        augment_bitext(bitext, kb, &ls, &lt, cfg.copies)
    } else {
        bitext.to_vec()
    };
    let fwd = train_model1(&training, cfg.iterations, Direction::SrcToTgt)?;
    let rev = train_model1(&training, cfg.iterations, Direction::TgtToSrc)?;
    Ok(bitext
        .par_iter()
        .map(|p| {
            if p.pseudo {
                return p.align.clone();
            }
            let links = align_pair(p, &fwd, &rev);
            if cfg.correct {
                correct_alignment(p, &links, kb)
            } else {
                links
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexkb::tests::toykb;

    fn sent(lang: &str, words: &str) -> Sentence {
        Sentence::new(
            "d",
            "0",
            lang,
            words
                .split_whitespace()
                .map(|w| Token::new(w, w, TokenPos::Noun))
                .collect(),
        )
    }

    fn pair(src: &str, tgt: &str) -> AlignedSentencePair {
        AlignedSentencePair::new(sent("en", src), sent("it", tgt), Links::new())
    }

    fn links(l: &[(usize, usize)]) -> Links {
        l.iter().copied().collect()
    }

    #[test]
    fn augmentation_adds_dictionary_pairs_in_vocabulary() {
        let kb = toykb();
        let b = vec![pair("bank money", "banca riva denaro")];
        let aug = augment_bitext(&b, &kb, "en", "it", 1);
        let pseudo: Vec<(String, String)> = aug[1..]
            .iter()
            .map(|p| (p.src.tokens[0].lemma.clone(), p.tgt.tokens[0].lemma.clone()))
            .collect();
        assert_eq!(
            pseudo,
            [("bank", "banca"), ("bank", "riva"), ("money", "denaro")]
                .map(|(a, b)| (a.to_string(), b.to_string()))
        );
        assert!(aug[1..].iter().all(|p| p.pseudo));
        assert!(!aug[0].pseudo);

        let twice = augment_bitext(&b, &kb, "en", "it", 2);
        assert_eq!(twice.len(), 1 + 6);

        let none = augment_bitext(&[pair("cat", "gatto")], &kb, "en", "it", 3);
        assert_eq!(none.len(), 1);
    }

    #[test]
    fn model1_prefers_cooccurring_pair() {
        let b = vec![pair("a b", "x y"), pair("a", "x")];
        let t = train_model1(&b, 5, Direction::SrcToTgt).unwrap();
        assert!(t.prob("a", "x") > t.prob("a", "y"));
        for e in t.source_vocab() {
            let s: f64 = t.conditionals(e).unwrap().values().sum();
            assert!((s - 1.0).abs() < 1e-9, "{e}: {s}");
        }
    }

    #[test]
    fn model1_single_pair_splits_with_null() {
        // With only "a"↔"x", t(x|a) = t(x|NULL) = 1 after normalization; the
        // quantity shared with NULL is the posterior of linking x to a.
        let b = vec![pair("a", "x")];
        let t = train_model1(&b, 2, Direction::SrcToTgt).unwrap();
        assert!(t.prob("a", "x") > 0.5);
        assert!(train_model1(&b, 0, Direction::SrcToTgt).is_err());
        assert!(matches!(
            train_model1(&[], 3, Direction::SrcToTgt),
            Err(Error::EmptyBitext)
        ));
    }

    #[test]
    fn em_likelihood_is_monotone() {
        let b = vec![
            pair("a b c", "x y z"),
            pair("a c", "x z"),
            pair("b c", "y z"),
            pair("a b", "y x"),
            pair("c", "z"),
        ];
        let mut prev = f64::NEG_INFINITY;
        for it in 1..10 {
            let t = train_model1(&b, it, Direction::SrcToTgt).unwrap();
            let ll = log_likelihood(&b, &t, Direction::SrcToTgt);
            assert!(ll >= prev - 1e-9, "iteration {it}: {ll} < {prev}");
            prev = ll;
        }
    }

    #[test]
    fn identity_dictionary_alignment() {
        let b = vec![
            pair("a b", "a' b'"),
            pair("a", "a'"),
            pair("b", "b'"),
            pair("b a", "b' a'"),
        ];
        let fwd = train_model1(&b, 10, Direction::SrcToTgt).unwrap();
        let rev = train_model1(&b, 10, Direction::TgtToSrc).unwrap();
        assert_eq!(align_pair(&b[0], &fwd, &rev), links(&[(0, 0), (1, 1)]));
        assert_eq!(align_pair(&b[3], &fwd, &rev), links(&[(0, 0), (1, 1)]));
    }

    #[test]
    fn forced_single_link() {
        let table = TranslationTable::parse("a x 1\n<null> x 0.1\n".as_bytes()).unwrap();
        let rev = TranslationTable::parse("x a 1\n<null> a 0.1\n".as_bytes()).unwrap();
        assert_eq!(align_pair(&pair("a", "x"), &table, &rev), links(&[(0, 0)]));
    }

    #[test]
    fn grow_diag_cases() {
        // disjoint directions, no intersection to grow from
        assert!(grow_diag(&links(&[(0, 1)]), &links(&[(1, 0)])).is_empty());
        // intersection grows into an adjacent union link with a free end
        let g = grow_diag(&links(&[(0, 0), (1, 1), (1, 2)]), &links(&[(0, 0), (1, 1)]));
        assert_eq!(g, links(&[(0, 0), (1, 1), (1, 2)]));
        // a union link with both ends already aligned is not added
        let g = grow_diag(&links(&[(0, 0), (1, 1), (0, 1)]), &links(&[(0, 0), (1, 1)]));
        assert_eq!(g, links(&[(0, 0), (1, 1)]));
    }

    #[test]
    fn correction_relinks_to_shared_synset() {
        let kb = toykb();
        let p = pair("bank", "fiume riva");
        let before = links(&[(0, 0)]);
        assert_eq!(synset_sharing_links(&p, &before, &kb), 0);
        let after = correct_alignment(&p, &before, &kb);
        assert_eq!(after, links(&[(0, 1)]));
        assert_eq!(synset_sharing_links(&p, &after, &kb), 1);
    }

    #[test]
    fn correction_fixpoints() {
        let kb = toykb();
        let p = pair("bank money", "banca denaro");
        let good = links(&[(0, 0), (1, 1)]);
        assert_eq!(correct_alignment(&p, &good, &kb), good);
        let p = pair("bank", "fiume");
        assert_eq!(
            correct_alignment(&p, &links(&[(0, 0)]), &kb),
            links(&[(0, 0)])
        );
    }

    #[test]
    fn table_text_round_trip() {
        let b = vec![pair("a b", "x y"), pair("a", "x")];
        let t = train_model1(&b, 3, Direction::SrcToTgt).unwrap();
        let mut out = Vec::new();
        t.write(&mut out).unwrap();
        let again = TranslationTable::parse(out.as_slice()).unwrap();
        assert_eq!(again.prob("a", "x"), t.prob("a", "x"));
        assert!(TranslationTable::parse("a b\n".as_bytes()).is_err());
    }

    #[test]
    fn align_bitext_end_to_end() {
        let kb = toykb();
        let b = vec![pair("bank money", "banca denaro"), pair("money", "denaro")];
        let out = align_bitext(&b, &kb, &AlignConfig::default()).unwrap();
        assert_eq!(out[0], links(&[(0, 0), (1, 1)]));
        assert_eq!(out[1], links(&[(0, 0)]));
    }
}
