//! Seeded synthetic worlds: a small bilingual KB, an identity-aligned bitext
//! with planted sense annotations, and embedding stores.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    key_from_sentences, AlignedSentencePair, KeyMap, SenseAnnotation, Sentence, Source, Token,
    TokenPos,
};
use crate::embedwsd::EmbeddingStore;
use crate::error::{Error, Result};
use crate::lexkb::{LexKb, Pos, Synset, SynsetId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub seed: u64,
    pub synsets: usize,
    /// senses per ambiguous pivot lemma
    pub degree: usize,
    pub pivot: String,
    pub target: String,
    pub sentences: usize,
    /// held-out target sentences with a gold key
    pub test_sentences: usize,
    /// share of ambiguous lemmas whose translations separate their senses
    pub disambiguating_fraction: f64,
    /// probability that a sentence loses its context word
    pub withheld_context: f64,
    /// probability that a token vector sits next to its planted sense
    pub nn_agreement: f64,
    pub token_dim: usize,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            seed: 0,
            synsets: 50,
            degree: 2,
            pivot: "en".into(),
            target: "it".into(),
            sentences: 200,
            test_sentences: 0,
            disambiguating_fraction: 1.0,
            withheld_context: 0.0,
            nn_agreement: 1.0,
            token_dim: 16,
        }
    }
}

impl WorldSpec {
    fn groups(&self) -> usize {
        self.synsets / (2 * self.degree.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::InfeasibleWorld(format!(
                    "{name} must lie in [0, 1], got {p}"
                )))
            }
        };
        prob("disambiguating_fraction", self.disambiguating_fraction)?;
        prob("withheld_context", self.withheld_context)?;
        prob("nn_agreement", self.nn_agreement)?;
        if self.degree < 2 {
            return Err(Error::InfeasibleWorld(format!(
                "ambiguity degree must be at least 2, got {}",
                self.degree
            )));
        }
        if self.groups() == 0 {
            return Err(Error::InfeasibleWorld(format!(
                "{} synsets cannot hold one lemma of degree {} with its context synsets (need {})",
                self.synsets,
                self.degree,
                2 * self.degree
            )));
        }
        if self.pivot == self.target {
            return Err(Error::InfeasibleWorld(
                "pivot and target languages must differ".into(),
            ));
        }
        if self.token_dim == 0 {
            return Err(Error::InfeasibleWorld("token_dim must be positive".into()));
        }
        Ok(())
    }
}

/// One ambiguous pivot lemma with its senses and their context synsets.
#[derive(Clone, Debug)]
struct Group {
    pivot: String,
    senses: Vec<SynsetId>,
    contexts: Vec<SynsetId>,
    /// target lemma per sense
    translations: Vec<String>,
    disambiguating: bool,
}

#[derive(Clone, Debug)]
pub struct World {
    pub spec: WorldSpec,
    pub kb: LexKb,
    /// identity-aligned pairs with no annotations
    pub bitext: Vec<AlignedSentencePair>,
    /// the same pairs with planted annotations on both sides
    pub gold: Vec<AlignedSentencePair>,
    /// held-out target sentences carrying planted annotations
    pub test: Vec<Sentence>,
    /// keyed by `Sentence::token_key` of target tokens
    pub token_embeddings: EmbeddingStore<f64>,
    pub synset_embeddings: EmbeddingStore<f64>,
    /// which pivot lemmas have sense-separating translations
    pub disambiguating: BTreeSet<String>,
}

impl World {
    /// Planted key over the target side of the training pairs.
    pub fn target_key(&self) -> KeyMap {
        key_from_sentences(&self.gold.iter().map(|p| p.tgt.clone()).collect::<Vec<_>>())
    }

    pub fn pivot_key(&self) -> KeyMap {
        key_from_sentences(&self.gold.iter().map(|p| p.src.clone()).collect::<Vec<_>>())
    }

    pub fn test_key(&self) -> KeyMap {
        key_from_sentences(&self.test)
    }

    /// Source side carries the planted annotations; the target is bare.
    pub fn annotated_source(&self) -> Vec<AlignedSentencePair> {
        self.gold
            .iter()
            .map(|p| {
                let mut q = p.clone();
                q.tgt.annotations.clear();
                q
            })
            .collect()
    }
}

fn fresh_id(rng: &mut ChaCha8Rng, used: &mut BTreeSet<String>) -> SynsetId {
    loop {
        let id = format!("bn:{:08}n", rng.gen_range(0..100_000_000u32));
        if used.insert(id.clone()) {
            return SynsetId::new(id);
        }
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    // Box-Muller
    let mut v: Vec<f64> = (0..dim)
        .map(|_| {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

pub fn generate_world(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (pl, tl) = (spec.pivot.as_str(), spec.target.as_str());
    let n_groups = spec.groups();
    let mut used = BTreeSet::new();

    let n_disamb = (spec.disambiguating_fraction * n_groups as f64).round() as usize;
    let mut order: Vec<usize> = (0..n_groups).collect();
    order.shuffle(&mut rng);
    let mut disamb: Vec<usize> = order[..n_disamb].to_vec();
    disamb.sort_unstable();

    let mut groups: Vec<Group> = (0..n_groups)
        .map(|k| Group {
            pivot: format!("w{k}"),
            senses: (0..spec.degree)
                .map(|_| fresh_id(&mut rng, &mut used))
                .collect(),
            contexts: (0..spec.degree)
                .map(|_| fresh_id(&mut rng, &mut used))
                .collect(),
            translations: Vec::new(),
            disambiguating: disamb.binary_search(&k).is_ok(),
        })
        .collect();
    for (k, g) in groups.iter_mut().enumerate() {
        g.translations = (0..spec.degree)
            .map(|m| {
                if g.disambiguating {
                    format!("v{k}_{m}")
                } else {
                    format!("u{k}")
                }
            })
            .collect();
    }

    let mut synsets = Vec::new();
    for (k, g) in groups.iter().enumerate() {
        for m in 0..spec.degree {
            let count = rng.gen_range(1..=20u64);
            synsets.push(
                Synset::new(g.senses[m].as_str(), Pos::Noun)
                    .with_lemma(pl, &g.pivot)
                    .with_lemma(tl, &g.translations[m])
                    .with_freq(pl, &g.pivot, count)
                    .with_edge(g.contexts[m].as_str()),
            );
            synsets.push(
                Synset::new(g.contexts[m].as_str(), Pos::Noun)
                    .with_lemma(pl, &format!("c{k}_{m}"))
                    .with_lemma(tl, &format!("k{k}_{m}")),
            );
        }
    }
    // a sense-separating translation is shared with the same sense slot of the
    // next such lemma, so it only disambiguates together with the pivot lemma
    for (i, &k) in disamb.iter().enumerate() {
        let next = disamb[(i + 1) % disamb.len()];
        if next == k {
            continue;
        }
        for m in 0..spec.degree {
            let lemma = groups[k].translations[m].clone();
            let sid = &groups[next].senses[m];
            let s = synsets
                .iter_mut()
                .find(|s| &s.id == sid)
                .expect("planted sense");
            *s = s.clone().with_lemma(tl, &lemma);
        }
    }
    for r in 0..spec.synsets - 2 * spec.degree * n_groups {
        let id = fresh_id(&mut rng, &mut used);
        synsets.push(
            Synset::new(id.as_str(), Pos::Noun)
                .with_lemma(pl, &format!("gen{r}"))
                .with_lemma(tl, &format!("gen{r}")),
        );
    }
    let kb = LexKb::from_synsets(synsets)?;

    let dim = spec.token_dim;
    let mut synset_embeddings = EmbeddingStore::new(2 * dim);
    let mut base = std::collections::HashMap::new();
    for s in kb.synsets() {
        let a = unit_gaussian(&mut rng, dim);
        let mut doubled = a.clone();
        doubled.extend_from_slice(&a);
        synset_embeddings.insert(s.id.as_str(), doubled)?;
        base.insert(s.id.clone(), a);
    }

    let make = |rng: &mut ChaCha8Rng, doc: &str, n: usize, tokens: &mut EmbeddingStore<f64>| {
        let k = rng.gen_range(0..n_groups);
        let m = rng.gen_range(0..spec.degree);
        let withheld = rng.gen_bool(spec.withheld_context);
        let filler = (n_groups > 1).then(|| {
            let mut j = rng.gen_range(0..n_groups - 1);
            if j >= k {
                j += 1;
            }
            (j, rng.gen_range(0..spec.degree))
        });
        let g = &groups[k];
        let side = |lang: &str, focus: &str, ctx: &dyn Fn(usize, usize) -> String| {
            let mut toks = vec![Token::new("the", "the", TokenPos::Other)];
            let mut planted = Vec::new();
            let mut push = |toks: &mut Vec<Token>, lemma: String, sid: SynsetId| {
                planted.push((toks.len(), sid));
                toks.push(Token::new(&lemma, &lemma, TokenPos::Noun));
            };
            push(&mut toks, focus.to_string(), g.senses[m].clone());
            toks.push(Token::new("of", "of", TokenPos::Other));
            if !withheld {
                push(&mut toks, ctx(k, m), g.contexts[m].clone());
            }
            if let Some((j, mj)) = filler {
                push(&mut toks, ctx(j, mj), groups[j].contexts[mj].clone());
            }
            let toks: Vec<Token> = toks
                .into_iter()
                .enumerate()
                .map(|(i, t)| {
                    if t.is_content() {
                        t.with_iid(format!("{doc}.{lang}.{n}.t{i}"))
                    } else {
                        t
                    }
                })
                .collect();
            let mut s = Sentence::new(doc, &n.to_string(), lang, toks);
            for (i, sid) in planted {
                s.set_annotation(SenseAnnotation::new(i, sid, 1.0, Source::Gold));
            }
            s
        };
        let src = side(pl, &g.pivot, &|j, mj| format!("c{j}_{mj}"));
        let tgt = side(tl, &g.translations[m], &|j, mj| format!("k{j}_{mj}"));

        for a in &tgt.annotations {
            let candidates: Vec<&SynsetId> = kb
                .senses_of(&tgt.tokens[a.token].lemma, tl)
                .iter()
                .collect();
            let agree = rng.gen_bool(spec.nn_agreement) || candidates.len() < 2;
            let anchor = if agree {
                &a.synset
            } else {
                let others: Vec<&SynsetId> = candidates
                    .iter()
                    .copied()
                    .filter(|c| **c != a.synset)
                    .collect();
                others[rng.gen_range(0..others.len())]
            };
            let noise = unit_gaussian(rng, dim);
            let v: Vec<f64> = base[anchor]
                .iter()
                .zip(&noise)
                .map(|(x, e)| x + 0.05 * e)
                .collect();
            tokens
                .insert(tgt.token_key(a.token), v)
                .expect("fresh token key");
        }
        (src, tgt)
    };

    let mut token_embeddings = EmbeddingStore::new(dim);
    let mut gold = Vec::with_capacity(spec.sentences);
    for n in 0..spec.sentences {
        let (src, tgt) = make(&mut rng, "train", n, &mut token_embeddings);
        let links = (0..src.tokens.len()).map(|i| (i, i)).collect();
        gold.push(AlignedSentencePair::new(src, tgt, links));
    }
    let mut test = Vec::with_capacity(spec.test_sentences);
    for n in 0..spec.test_sentences {
        test.push(make(&mut rng, "test", n, &mut token_embeddings).1);
    }
    let bitext = gold
        .iter()
        .map(|p| {
            let mut q = p.clone();
            q.src.annotations.clear();
            q.tgt.annotations.clear();
            q
        })
        .collect();
    let disambiguating = groups
        .iter()
        .filter(|g| g.disambiguating)
        .map(|g| g.pivot.clone())
        .collect();
    Ok(World {
        spec: spec.clone(),
        kb,
        bitext,
        gold,
        test,
        token_embeddings,
        synset_embeddings,
        disambiguating,
    })
}

/// Parallel corpus over a one-to-one bilingual vocabulary `x{i}` ↔ `y{i}`
/// with word-for-word translations and planted identity links. No sentence
/// repeats a word.
pub fn dictionary_corpus(
    seed: u64,
    pairs: usize,
    vocab: usize,
    max_len: usize,
) -> Vec<AlignedSentencePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<usize> = (0..vocab).collect();
    (0..pairs)
        .map(|n| {
            let len = rng.gen_range(1..=max_len.min(vocab).max(1));
            let chosen: Vec<usize> = words.choose_multiple(&mut rng, len).copied().collect();
            let sent = |prefix: &str, lang: &str| {
                let toks = chosen
                    .iter()
                    .map(|w| {
                        let lemma = format!("{prefix}{w}");
                        Token::new(&lemma, &lemma, TokenPos::Noun)
                    })
                    .collect();
                Sentence::new("dict", &n.to_string(), lang, toks)
            };
            AlignedSentencePair::new(
                sent("x", "en"),
                sent("y", "it"),
                (0..len).map(|i| (i, i)).collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refine::kb_filter;

    fn spec(fraction: f64) -> WorldSpec {
        WorldSpec {
            synsets: 30,
            sentences: 50,
            disambiguating_fraction: fraction,
            ..WorldSpec::default()
        }
    }

    fn focus(p: &AlignedSentencePair) -> (&str, &str, &SynsetId) {
        (
            &p.src.tokens[1].lemma,
            &p.tgt.tokens[1].lemma,
            &p.src.annotation(1).unwrap().synset,
        )
    }

    #[test]
    fn translations_pin_the_sense() {
        let w = generate_world(&spec(1.0)).unwrap();
        assert_eq!(w.kb.len(), 30);
        for p in &w.gold {
            let (pivot, target, planted) = focus(p);
            let shared: Vec<_> =
                w.kb.senses_of(pivot, "en")
                    .intersection(w.kb.senses_of(target, "it"))
                    .collect();
            assert_eq!(shared, vec![planted]);
        }
    }

    #[test]
    fn shared_translations_do_not() {
        let w = generate_world(&spec(0.0)).unwrap();
        assert!(w.disambiguating.is_empty());
        for p in &w.gold {
            let (pivot, target, _) = focus(p);
            assert_eq!(w.kb.senses_of(pivot, "en"), w.kb.senses_of(target, "it"));
        }
    }

    #[test]
    fn same_spec_same_world() {
        let s = WorldSpec {
            withheld_context: 0.3,
            nn_agreement: 0.7,
            test_sentences: 10,
            ..spec(0.5)
        };
        let (a, b) = (generate_world(&s).unwrap(), generate_world(&s).unwrap());
        assert_eq!(a.gold, b.gold);
        assert_eq!(a.test, b.test);
        let mut ka = Vec::new();
        let mut kb = Vec::new();
        a.kb.write(&mut ka).unwrap();
        b.kb.write(&mut kb).unwrap();
        assert_eq!(ka, kb);
        assert_eq!(
            a.token_embeddings.iter().count(),
            b.token_embeddings.iter().count()
        );
    }

    #[test]
    fn planted_gold_passes_kb_filter() {
        let w = generate_world(&spec(0.5)).unwrap();
        for p in &w.gold {
            for s in [&p.src, &p.tgt] {
                assert_eq!(kb_filter(s, &w.kb).1.total(), 0);
            }
        }
    }

    #[test]
    fn context_is_adjacent_to_the_planted_sense() {
        let w = generate_world(&spec(1.0)).unwrap();
        for p in &w.gold {
            let planted = &p.src.annotation(1).unwrap().synset;
            let ctx = &p.src.annotation(3).unwrap().synset;
            assert!(w.kb.get(planted.as_str()).unwrap().edges.contains(ctx));
        }
    }

    #[test]
    fn infeasible_specs() {
        let tiny = WorldSpec {
            synsets: 3,
            ..WorldSpec::default()
        };
        assert!(matches!(
            generate_world(&tiny),
            Err(Error::InfeasibleWorld(_))
        ));
        let bad = WorldSpec {
            withheld_context: 1.5,
            ..WorldSpec::default()
        };
        assert!(generate_world(&bad).is_err());
    }

    #[test]
    fn dictionary_sentences_have_distinct_words() {
        let c = dictionary_corpus(3, 20, 10, 6);
        assert_eq!(c.len(), 20);
        for p in &c {
            let set: BTreeSet<_> = p.src.tokens.iter().map(|t| &t.lemma).collect();
            assert_eq!(set.len(), p.src.tokens.len());
            assert_eq!(p.align.len(), p.src.tokens.len());
        }
    }
}
