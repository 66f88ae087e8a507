//! Knowledge-based WSD with personalized PageRank over the KB graph.
//!
//! [`disambiguate_w2w`] runs one PageRank per focus word with the teleport
//! mass spread over the senses of the other content words of the sentence.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{SenseAnnotation, Sentence, Source};
use crate::error::{Error, Result};
use crate::lexkb::{Graph, LexKb, SynsetId};
use crate::scalar::Scalar;

/// How teleport mass is spread over the context.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TeleportMode {
    /// Uniform over the union of context senses.
    #[default]
    PerSynset,
    /// Each context word gets equal mass, split evenly over its senses.
    PerWord,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PprConfig {
    pub damping: f64,
    /// Stop once the L1 change between iterates drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub teleport: TeleportMode,
}

impl Default for PprConfig {
    fn default() -> Self {
        PprConfig {
            damping: 0.85,
            tolerance: 1e-8,
            max_iterations: 1000,
            teleport: TeleportMode::PerSynset,
        }
    }
}

impl PprConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "damping must lie in (0, 1), got {}",
                self.damping
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Scores over the candidate senses of one token.
#[derive(Clone, Debug, PartialEq)]
pub struct SenseDistribution<T> {
    pub token_index: usize,
    pub scores: BTreeMap<SynsetId, T>,
}

impl<T: Scalar> SenseDistribution<T> {
    pub fn new(token_index: usize, scores: BTreeMap<SynsetId, T>) -> Self {
        SenseDistribution {
            token_index,
            scores,
        }
    }

    /// Normalizes `scores` to sum to one; `None` if the total is not positive.
    pub fn normalized(token_index: usize, scores: BTreeMap<SynsetId, T>) -> Option<Self> {
        let mut d = Self::new(token_index, scores);
        d.renormalize().then_some(d)
    }

    pub fn total(&self) -> T {
        self.scores.values().copied().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Rescales to unit mass. Returns `false` (leaving scores untouched) when
    /// the total is zero.
    pub fn renormalize(&mut self) -> bool {
        let total = self.total();
        if !(total > T::zero()) {
            return false;
        }
        for v in self.scores.values_mut() {
            *v = *v / total;
        }
        true
    }

    /// Highest-scoring sense; ties go to the smallest id.
    pub fn argmax(&self) -> Option<(&SynsetId, T)> {
        let mut best: Option<(&SynsetId, T)> = None;
        for (id, &v) in &self.scores {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((id, v));
            }
        }
        best
    }

    /// Keeps the senses accepted by `keep` and renormalizes; `None` when
    /// nothing with positive mass remains.
    pub fn restrict(&self, mut keep: impl FnMut(&SynsetId) -> bool) -> Option<Self> {
        let scores = self
            .scores
            .iter()
            .filter(|(id, _)| keep(id))
            .map(|(id, &v)| (id.clone(), v))
            .collect();
        Self::normalized(self.token_index, scores)
    }

    pub fn top_annotation(&self, source: Source) -> Option<SenseAnnotation> {
        self.argmax().map(|(id, v)| {
            let score = v.to_f64().unwrap_or(0.0).clamp(0.0, 1.0);
            SenseAnnotation::new(self.token_index, id.clone(), score, source)
        })
    }
}

/// Power iteration for `p = (1-d)·v + d·M·p` on dense node indices; dangling
/// mass is returned to `v`.
pub(crate) fn ppr_dense<T: Scalar>(
    graph: &Graph,
    teleport: &[T],
    cfg: &PprConfig,
) -> Result<Vec<T>> {
    let n = graph.nodes.len();
    debug_assert_eq!(teleport.len(), n);
    let d = T::lit(cfg.damping);
    let restart = T::one() - d;
    // Below n·ε the iterate only moves by rounding noise.
    let tol = T::lit(cfg.tolerance).max(T::lit(4.0 * n as f64) * T::epsilon());

    let mut p = teleport.to_vec();
    let mut next = vec![T::zero(); n];
    let mut delta = T::infinity();
    for _ in 0..cfg.max_iterations {
        let dangling: T = graph
            .neighbors
            .iter()
            .zip(&p)
            .filter(|(nb, _)| nb.is_empty())
            .map(|(_, &x)| x)
            .sum();
        let back = restart + d * dangling;
        for (x, &v) in next.iter_mut().zip(teleport) {
            *x = back * v;
        }
        for (i, nb) in graph.neighbors.iter().enumerate() {
            if nb.is_empty() || p[i] == T::zero() {
                continue;
            }
            let share = d * p[i] / T::lit(nb.len() as f64);
            for &j in nb {
                next[j] = next[j] + share;
            }
        }
        delta = p.iter().zip(&next).map(|(&a, &b)| (a - b).abs()).sum();
        std::mem::swap(&mut p, &mut next);
        if delta < tol {
            return Ok(p);
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iterations,
        delta: delta.to_f64().unwrap_or(f64::NAN),
    })
}

/// Personalized PageRank with the given (unnormalized) teleport weights.
/// Returns a score for every synset of the KB.
pub fn ppr<T: Scalar>(
    kb: &LexKb,
    teleport: &BTreeMap<SynsetId, T>,
    cfg: &PprConfig,
) -> Result<BTreeMap<SynsetId, T>> {
    cfg.validate()?;
    let graph = kb.graph();
    let mut v = vec![T::zero(); graph.nodes.len()];
    let mut total = T::zero();
    for (id, &w) in teleport {
        let &i = graph
            .index
            .get(id)
            .ok_or_else(|| Error::UnknownSynset(id.clone()))?;
        if !(w >= T::zero()) || !w.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "teleport weight for {id} must be finite and non-negative"
            )));
        }
        v[i] = w;
        total = total + w;
    }
    if !(total > T::zero()) {
        return Err(Error::EmptyTeleport);
    }
    for x in &mut v {
        *x = *x / total;
    }
    let p = ppr_dense(graph, &v, cfg)?;
    Ok(graph.nodes.iter().cloned().zip(p).collect())
}

/// One sense distribution per content token that has candidate senses and a
/// non-empty context, in token order.
pub fn disambiguate_w2w<T: Scalar>(
    sentence: &Sentence,
    kb: &LexKb,
    cfg: &PprConfig,
) -> Result<Vec<SenseDistribution<T>>> {
    cfg.validate()?;
    let graph = kb.graph();
    let lang = sentence.lang.as_str();
    let content: Vec<(usize, Vec<usize>)> = sentence
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.is_content())
        .map(|(i, t)| {
            let senses = kb
                .senses_of(&t.lemma, lang)
                .iter()
                .map(|s| graph.index[s])
                .collect();
            (i, senses)
        })
        .collect();

    let results: Vec<Option<SenseDistribution<T>>> = content
        .par_iter()
        .filter(|(_, senses)| !senses.is_empty())
        .map(|(focus, candidates)| {
            let Some(v) = context_teleport::<T>(
                graph.nodes.len(),
                &content,
                *focus,
                candidates,
                cfg.teleport,
            ) else {
                return Ok(None);
            };
            let p = ppr_dense(graph, &v, cfg)?;
            let scores: BTreeMap<SynsetId, T> = candidates
                .iter()
                .map(|&c| (graph.nodes[c].clone(), p[c]))
                .collect();
            // Candidates unreachable from the context all score zero: no
            // evidence either way, so fall back to a uniform distribution.
            let dist = SenseDistribution::normalized(*focus, scores.clone()).unwrap_or_else(|| {
                let u = T::one() / T::lit(scores.len() as f64);
                SenseDistribution::new(*focus, scores.into_keys().map(|k| (k, u)).collect())
            });
            Ok(Some(dist))
        })
        .collect::<Result<_>>()?;
    Ok(results.into_iter().flatten().collect())
}

fn context_teleport<T: Scalar>(
    n: usize,
    content: &[(usize, Vec<usize>)],
    focus: usize,
    candidates: &[usize],
    mode: TeleportMode,
) -> Option<Vec<T>> {
    let mut v = vec![T::zero(); n];
    let mut any = false;
    for (i, senses) in content {
        if *i == focus {
            continue;
        }
        let ctx: Vec<usize> = senses
            .iter()
            .copied()
            .filter(|s| !candidates.contains(s))
            .collect();
        if ctx.is_empty() {
            continue;
        }
        any = true;
        match mode {
            TeleportMode::PerSynset => {
                for s in ctx {
                    v[s] = T::one();
                }
            }
            TeleportMode::PerWord => {
                let w = T::one() / T::lit(ctx.len() as f64);
                for s in ctx {
                    v[s] = v[s] + w;
                }
            }
        }
    }
    if !any {
        return None;
    }
    let total: T = v.iter().copied().sum();
    for x in &mut v {
        *x = *x / total;
    }
    Some(v)
}

/// Writes `iid synset score` lines for every sense of every distribution.
/// Tokens without an instance id use their embedding key.
pub fn write_distributions<T: Scalar, W: Write>(
    sentence: &Sentence,
    dists: &[SenseDistribution<T>],
    mut out: W,
) -> Result<()> {
    for d in dists {
        let id = sentence.tokens[d.token_index]
            .iid
            .clone()
            .unwrap_or_else(|| sentence.token_key(d.token_index));
        for (s, v) in &d.scores {
            writeln!(out, "{id} {s} {v}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Token, TokenPos};
    use crate::lexkb::tests::toykb;
    use crate::lexkb::{Pos, Synset};
    use approx::assert_abs_diff_eq;

    fn two_node() -> LexKb {
        LexKb::from_synsets([
            Synset::new("A", Pos::Noun).with_edge("B"),
            Synset::new("B", Pos::Noun),
        ])
        .unwrap()
    }

    fn tp(pairs: &[(&str, f64)]) -> BTreeMap<SynsetId, f64> {
        pairs
            .iter()
            .map(|(k, v)| (SynsetId::from(*k), *v))
            .collect()
    }

    #[test]
    fn two_node_closed_form() {
        // pA = 0.15 + 0.85 pB, pB = 0.85 pA  =>  pA = 0.15 / (1 - 0.85^2)
        let p = ppr(&two_node(), &tp(&[("A", 1.0)]), &PprConfig::default()).unwrap();
        let pa = 0.15 / (1.0 - 0.85 * 0.85);
        assert_abs_diff_eq!(p["A"], pa, epsilon = 1e-8);
        assert_abs_diff_eq!(p["B"], 1.0 - pa, epsilon = 1e-8);
        assert_abs_diff_eq!(p["A"], 0.540540, epsilon = 1e-6);
    }

    #[test]
    fn uniform_teleport_is_symmetric() {
        let p = ppr(
            &two_node(),
            &tp(&[("A", 1.0), ("B", 1.0)]),
            &PprConfig::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(p["A"], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(p["B"], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn teleport_scale_invariance() {
        let cfg = PprConfig::default();
        let a = ppr(&two_node(), &tp(&[("A", 2.0)]), &cfg).unwrap();
        let b = ppr(&two_node(), &tp(&[("A", 1.0)]), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn works_in_single_precision() {
        let t: BTreeMap<SynsetId, f32> = [(SynsetId::from("A"), 1.0f32)].into_iter().collect();
        let p = ppr(&two_node(), &t, &PprConfig::default()).unwrap();
        assert!((p["A"] - 0.540_540_5).abs() < 1e-5);
    }

    #[test]
    fn ppr_errors() {
        let kb = two_node();
        let cfg = PprConfig::default();
        assert!(matches!(
            ppr::<f64>(&kb, &BTreeMap::new(), &cfg),
            Err(Error::EmptyTeleport)
        ));
        assert!(matches!(
            ppr(&kb, &tp(&[("A", 0.0)]), &cfg),
            Err(Error::EmptyTeleport)
        ));
        assert!(matches!(
            ppr(&kb, &tp(&[("Z", 1.0)]), &cfg),
            Err(Error::UnknownSynset(_))
        ));
        let tight = PprConfig {
            max_iterations: 2,
            ..cfg
        };
        assert!(matches!(
            ppr(&kb, &tp(&[("A", 1.0)]), &tight),
            Err(Error::NonConvergence { iterations: 2, .. })
        ));
        let bad = PprConfig {
            damping: 1.0,
            ..cfg
        };
        assert!(ppr(&kb, &tp(&[("A", 1.0)]), &bad).is_err());
    }

    #[test]
    fn dangling_nodes_return_mass_to_teleport() {
        let kb = LexKb::from_synsets([
            Synset::new("A", Pos::Noun).with_edge("B"),
            Synset::new("B", Pos::Noun),
            Synset::new("C", Pos::Noun),
        ])
        .unwrap();
        let p = ppr(&kb, &tp(&[("C", 1.0)]), &PprConfig::default()).unwrap();
        assert_abs_diff_eq!(p["C"], 1.0, epsilon = 1e-12);
        let total: f64 = ppr(&kb, &tp(&[("A", 1.0), ("C", 3.0)]), &PprConfig::default())
            .unwrap()
            .values()
            .sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
    }

    fn sentence(lemmas: &[&str]) -> Sentence {
        Sentence::new(
            "d",
            "0",
            "en",
            lemmas
                .iter()
                .map(|l| Token::new(l, l, TokenPos::Noun))
                .collect(),
        )
    }

    #[test]
    fn w2w_prefers_sense_adjacent_to_context() {
        let kb = toykb();
        let cfg = PprConfig::default();
        let d: Vec<SenseDistribution<f64>> =
            disambiguate_w2w(&sentence(&["bank", "river"]), &kb, &cfg).unwrap();
        let bank = d.iter().find(|d| d.token_index == 0).unwrap();
        assert!(bank.scores["s2"] > bank.scores["s1"]);
        assert_eq!(bank.argmax().unwrap().0.as_str(), "s2");
        assert_abs_diff_eq!(bank.total(), 1.0, epsilon = 1e-9);

        let d: Vec<SenseDistribution<f64>> =
            disambiguate_w2w(&sentence(&["bank", "money"]), &kb, &cfg).unwrap();
        assert_eq!(d[0].argmax().unwrap().0.as_str(), "s1");

        let d: Vec<SenseDistribution<f64>> =
            disambiguate_w2w(&sentence(&["bank"]), &kb, &cfg).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn w2w_skips_function_words_and_unknown_lemmas() {
        let kb = toykb();
        let mut s = sentence(&["bank", "the", "zzz", "river"]);
        s.tokens[1].pos = TokenPos::Other;
        let d: Vec<SenseDistribution<f64>> =
            disambiguate_w2w(&s, &kb, &PprConfig::default()).unwrap();
        let idx: Vec<usize> = d.iter().map(|d| d.token_index).collect();
        assert_eq!(idx, [0, 3]);
    }

    #[test]
    fn per_word_teleport_variant() {
        let kb = toykb();
        let cfg = PprConfig {
            teleport: TeleportMode::PerWord,
            ..PprConfig::default()
        };
        let d: Vec<SenseDistribution<f64>> =
            disambiguate_w2w(&sentence(&["bank", "river"]), &kb, &cfg).unwrap();
        assert_eq!(d[0].argmax().unwrap().0.as_str(), "s2");
    }

    #[test]
    fn distribution_helpers() {
        let d =
            SenseDistribution::normalized(0, tp(&[("b", 2.0), ("a", 2.0), ("c", 0.0)])).unwrap();
        assert_eq!(d.argmax().unwrap().0.as_str(), "a");
        let r = d.restrict(|s| s.as_str() != "a").unwrap();
        assert_abs_diff_eq!(r.scores["b"], 1.0);
        assert!(d.restrict(|s| s.as_str() == "c").is_none());
        assert!(SenseDistribution::<f64>::normalized(0, tp(&[("a", 0.0)])).is_none());
    }
}
