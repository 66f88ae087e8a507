//! Annotation refinement: SoftConstraint re-ranking and the knowledge-base,
//! nearest-neighbor and translation-synchronization filters.
//!
//! Filters only ever remove annotations; they never touch tokens.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{AlignedSentencePair, Sentence};
use crate::embedwsd::{nn_disambiguate, EmbeddingStore};
use crate::error::{Error, Result};
use crate::graphwsd::SenseDistribution;
use crate::lexkb::LexKb;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoftConstraintConfig {
    pub lambda: f64,
    pub use_frequency: bool,
}

impl Default for SoftConstraintConfig {
    fn default() -> Self {
        SoftConstraintConfig {
            lambda: 1.0,
            use_frequency: false,
        }
    }
}

impl SoftConstraintConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Observed translation of a token: the lemmas of all aligned tokens.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Translation<'a> {
    pub lemmas: BTreeSet<&'a str>,
    pub lang: &'a str,
}

impl<'a> Translation<'a> {
    pub fn new(lang: &'a str, lemmas: impl IntoIterator<Item = &'a str>) -> Self {
        Translation {
            lemmas: lemmas.into_iter().collect(),
            lang,
        }
    }
}

/// The word being disambiguated; only consulted for its sense frequencies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FocusWord<'a> {
    pub lemma: &'a str,
    pub lang: &'a str,
}

/// Boosts senses lexicalizing any translation lemma by a factor `1 + λ`, and
/// optionally by `1 + freq(s) / Σ freq`, then renormalizes. An empty
/// translation leaves the distribution unchanged.
pub fn soft_constraint<T: Scalar>(
    dist: &SenseDistribution<T>,
    translation: &Translation<'_>,
    focus: FocusWord<'_>,
    kb: &LexKb,
    cfg: &SoftConstraintConfig,
) -> SenseDistribution<T> {
    if translation.lemmas.is_empty() {
        return dist.clone();
    }
    let boost = T::one() + T::lit(cfg.lambda);
    let freq = |id: &str| {
        kb.get(id)
            .map_or(0, |s| s.frequency(focus.lemma, focus.lang)) as f64
    };
    let freq_total: f64 = if cfg.use_frequency {
        dist.scores.keys().map(|id| freq(id.as_str())).sum()
    } else {
        0.0
    };
    let mut out = dist.clone();
    for (id, score) in out.scores.iter_mut() {
        let matched = kb.get(id.as_str()).is_some_and(|s| {
            translation
                .lemmas
                .iter()
                .any(|l| s.contains(l, translation.lang))
        });
        if matched {
            *score = *score * boost;
        }
        if freq_total > 0.0 {
            *score = *score * T::lit(1.0 + freq(id.as_str()) / freq_total);
        }
    }
    if !out.renormalize() {
        return dist.clone();
    }
    out
}

/// Removal counts of one filter application.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Removed {
    /// synset does not lexicalize the token (kb filter), or the
    /// nearest-neighbor sense disagrees (nn filter)
    pub rejected: usize,
    /// synset id absent from the KB
    pub unknown: usize,
}

impl Removed {
    pub fn total(&self) -> usize {
        self.rejected + self.unknown
    }
}

/// Drops annotations whose synset does not contain the token's lemma in the
/// sentence language.
pub fn kb_filter(sentence: &Sentence, kb: &LexKb) -> (Sentence, Removed) {
    let mut removed = Removed::default();
    let mut out = sentence.clone();
    out.annotations.retain(|a| {
        let lemma = &sentence.tokens[a.token].lemma;
        match kb.synset_contains(a.synset.as_str(), lemma, &sentence.lang) {
            Ok(true) => true,
            Ok(false) => {
                removed.rejected += 1;
                false
            }
            Err(_) => {
                removed.unknown += 1;
                false
            }
        }
    });
    (out, removed)
}

/// Drops annotations that disagree with nearest-neighbor WSD over the
/// token's candidate senses. Tokens without a contextual vector, or for which
/// no candidate has a synset vector, keep their annotation.
pub fn nn_filter<T: Scalar>(
    sentence: &Sentence,
    token_embeddings: &EmbeddingStore<T>,
    synset_embeddings: &EmbeddingStore<T>,
    kb: &LexKb,
) -> Result<(Sentence, Removed)> {
    let mut removed = Removed::default();
    let mut out = sentence.clone();
    let mut keep = Vec::with_capacity(sentence.annotations.len());
    for a in &sentence.annotations {
        let Some(vec) = token_embeddings.get(&sentence.token_key(a.token)) else {
            keep.push(true);
            continue;
        };
        let lemma = &sentence.tokens[a.token].lemma;
        let candidates = kb.senses_of(lemma, &sentence.lang);
        let agrees = match nn_disambiguate(vec, candidates, synset_embeddings)? {
            Some((best, _)) => best == a.synset,
            None => true,
        };
        if !agrees {
            removed.rejected += 1;
        }
        keep.push(agrees);
    }
    let mut flags = keep.into_iter();
    out.annotations.retain(|_| flags.next().unwrap_or(true));
    Ok((out, removed))
}

/// Removes an annotation iff the token has aligned, annotated counterparts
/// and none of them carries the same synset. Both sides are judged against
/// the input simultaneously. Returns the pair and removal counts for
/// (source, target).
pub fn sync_filter(pair: &AlignedSentencePair) -> (AlignedSentencePair, (usize, usize)) {
    let conflicted = |side: &Sentence, other: &Sentence, token: usize, counterparts: Vec<usize>| {
        let own = &side.annotation(token).expect("annotated").synset;
        let mut any = false;
        for j in counterparts {
            if let Some(b) = other.annotation(j) {
                if &b.synset == own {
                    return false;
                }
                any = true;
            }
        }
        any
    };
    let drop_src: Vec<usize> = pair
        .src
        .annotations
        .iter()
        .map(|a| a.token)
        .filter(|&i| conflicted(&pair.src, &pair.tgt, i, pair.targets_of(i).collect()))
        .collect();
    let drop_tgt: Vec<usize> = pair
        .tgt
        .annotations
        .iter()
        .map(|a| a.token)
        .filter(|&j| conflicted(&pair.tgt, &pair.src, j, pair.sources_of(j).collect()))
        .collect();
    let mut out = pair.clone();
    out.src.annotations.retain(|a| !drop_src.contains(&a.token));
    out.tgt.annotations.retain(|a| !drop_tgt.contains(&a.token));
    (out, (drop_src.len(), drop_tgt.len()))
}

/// Whether `pair` satisfies the synchronization postcondition: every
/// annotation with annotated aligned counterparts agrees with at least one.
pub fn is_synchronized(pair: &AlignedSentencePair) -> bool {
    sync_filter(pair).1 == (0, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Links, SenseAnnotation, Source, Token, TokenPos};
    use crate::lexkb::tests::toykb;
    use crate::lexkb::SynsetId;
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    fn dist(pairs: &[(&str, f64)]) -> SenseDistribution<f64> {
        SenseDistribution::new(
            0,
            pairs
                .iter()
                .map(|(k, v)| (SynsetId::from(*k), *v))
                .collect::<BTreeMap<_, _>>(),
        )
    }

    const BANK: FocusWord<'static> = FocusWord {
        lemma: "bank",
        lang: "en",
    };

    #[test]
    fn soft_constraint_flips_argmax() {
        let kb = toykb();
        let d = dist(&[("s1", 0.5), ("s2", 0.4), ("s4", 0.1)]);
        let out = soft_constraint(
            &d,
            &Translation::new("it", ["riva"]),
            BANK,
            &kb,
            &SoftConstraintConfig::default(),
        );
        assert_abs_diff_eq!(out.scores["s1"], 0.5 / 1.4, epsilon = 1e-12);
        assert_abs_diff_eq!(out.scores["s2"], 0.8 / 1.4, epsilon = 1e-12);
        assert_abs_diff_eq!(out.scores["s4"], 0.1 / 1.4, epsilon = 1e-12);
        assert_abs_diff_eq!(out.scores["s2"], 0.5714, epsilon = 1e-4);
        assert_eq!(out.argmax().unwrap().0.as_str(), "s2");
    }

    #[test]
    fn soft_constraint_identities() {
        let kb = toykb();
        let d = dist(&[("s1", 0.5), ("s2", 0.4), ("s4", 0.1)]);
        let zero = SoftConstraintConfig {
            lambda: 0.0,
            ..Default::default()
        };
        let out = soft_constraint(&d, &Translation::new("it", ["riva"]), BANK, &kb, &zero);
        for (k, v) in &d.scores {
            assert_abs_diff_eq!(out.scores[k], *v, epsilon = 1e-12);
        }
        let cfg = SoftConstraintConfig::default();
        let out = soft_constraint(&d, &Translation::new("it", ["gatto"]), BANK, &kb, &cfg);
        for (k, v) in &d.scores {
            assert_abs_diff_eq!(out.scores[k], *v, epsilon = 1e-12);
        }
        assert_eq!(
            soft_constraint(&d, &Translation::new("it", []), BANK, &kb, &cfg),
            d
        );
    }

    #[test]
    fn soft_constraint_frequency_term() {
        let kb = toykb();
        let d = dist(&[("s1", 0.5), ("s2", 0.5)]);
        let cfg = SoftConstraintConfig {
            lambda: 0.0,
            use_frequency: true,
        };
        // freq bank: s1=10, s2=3 → factors 1+10/13 and 1+3/13
        let out = soft_constraint(&d, &Translation::new("it", ["x"]), BANK, &kb, &cfg);
        let (a, b) = (1.0 + 10.0 / 13.0, 1.0 + 3.0 / 13.0);
        assert_abs_diff_eq!(out.scores["s1"], a / (a + b), epsilon = 1e-12);
    }

    fn it_sentence(lemmas: &[(&str, Option<&str>)]) -> Sentence {
        let mut s = Sentence::new(
            "d",
            "0",
            "it",
            lemmas
                .iter()
                .map(|(l, _)| Token::new(l, l, TokenPos::Noun))
                .collect(),
        );
        for (i, (_, syn)) in lemmas.iter().enumerate() {
            if let Some(syn) = syn {
                s.set_annotation(SenseAnnotation::new(
                    i,
                    SynsetId::from(*syn),
                    1.0,
                    Source::Prop,
                ));
            }
        }
        s
    }

    #[test]
    fn kb_filter_rules() {
        let kb = toykb();
        let s = it_sentence(&[
            ("riva", Some("s1")),
            ("banca", Some("s1")),
            ("fiume", Some("s99")),
        ]);
        let (out, removed) = kb_filter(&s, &kb);
        assert_eq!(out.annotations.len(), 1);
        assert_eq!(out.annotations[0].token, 1);
        assert_eq!(
            removed,
            Removed {
                rejected: 1,
                unknown: 1
            }
        );
        assert_eq!(out.tokens, s.tokens);
        let (again, r2) = kb_filter(&out, &kb);
        assert_eq!(again, out);
        assert_eq!(r2.total(), 0);
    }

    #[test]
    fn nn_filter_rules() {
        let kb = toykb();
        let mut syn = EmbeddingStore::<f64>::new(2);
        syn.insert("s1", vec![1.0, 0.0]).unwrap();
        syn.insert("s2", vec![0.0, 1.0]).unwrap();
        let s = Sentence {
            lang: "en".into(),
            ..it_sentence(&[
                ("bank", Some("s1")),
                ("bank", Some("s1")),
                ("bank", Some("s1")),
            ])
        };
        let mut tok = EmbeddingStore::<f64>::new(2);
        tok.insert(s.token_key(0), vec![0.9, 0.1]).unwrap();
        tok.insert(s.token_key(1), vec![0.1, 0.9]).unwrap();
        let (out, removed) = nn_filter(&s, &tok, &syn, &kb).unwrap();
        let kept: Vec<usize> = out.annotations.iter().map(|a| a.token).collect();
        assert_eq!(
            kept,
            [0, 2],
            "agreement kept, disagreement dropped, no vector kept"
        );
        assert_eq!(removed.rejected, 1);
        let (again, r2) = nn_filter(&out, &tok, &syn, &kb).unwrap();
        assert_eq!(again, out);
        assert_eq!(r2.total(), 0);
    }

    fn bitext_pair(
        src: &[(&str, Option<&str>)],
        tgt: &[(&str, Option<&str>)],
        align: &[(usize, usize)],
    ) -> AlignedSentencePair {
        let mut s = it_sentence(src);
        s.lang = "en".into();
        AlignedSentencePair::new(
            s,
            it_sentence(tgt),
            align.iter().copied().collect::<Links>(),
        )
    }

    #[test]
    fn sync_filter_rules() {
        let agree = bitext_pair(&[("bank", Some("s1"))], &[("banca", Some("s1"))], &[(0, 0)]);
        let (out, n) = sync_filter(&agree);
        assert_eq!(n, (0, 0));
        assert_eq!(out, agree);

        let clash = bitext_pair(&[("bank", Some("s1"))], &[("riva", Some("s2"))], &[(0, 0)]);
        let (out, n) = sync_filter(&clash);
        assert_eq!(n, (1, 1));
        assert!(out.src.annotations.is_empty() && out.tgt.annotations.is_empty());

        let loose = bitext_pair(
            &[("bank", Some("s1")), ("money", None)],
            &[("banca", None)],
            &[(1, 0)],
        );
        let (out, n) = sync_filter(&loose);
        assert_eq!(n, (0, 0));
        assert_eq!(out.src.annotations.len(), 1);
    }

    #[test]
    fn sync_filter_phrase_counterparts() {
        // one matching counterpart among several suffices
        let p = bitext_pair(
            &[("bank", Some("s1"))],
            &[("riva", Some("s2")), ("banca", Some("s1"))],
            &[(0, 0), (0, 1)],
        );
        let (out, n) = sync_filter(&p);
        assert_eq!(n, (0, 1));
        assert_eq!(out.src.annotations.len(), 1);
        assert!(is_synchronized(&out));
        assert_eq!(sync_filter(&out).0, out);
    }
}
