//! The three corpus-tagging methods.
//!
//! * [`label_prop`] projects gold source annotations across alignment links,
//!   then applies the knowledge-base and nearest-neighbor filters.
//! * [`label_sync`] disambiguates both sides with personalized PageRank,
//!   re-ranks with the aligned translations and keeps only annotations
//!   consistent across the alignment.
//! * [`label_gen`] disambiguates the pivot side only, projects to the target
//!   side and re-ranks there.
//!
//! Every source annotation ends up counted exactly once in the report: as an
//! output annotation, a failed propagation, or a removal with a reason.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    corpus_stats, AlignedSentencePair, CorpusStats, SenseAnnotation, Sentence, Source,
};
use crate::embedwsd::EmbeddingStore;
use crate::error::{Error, Result};
use crate::graphwsd::{disambiguate_w2w, PprConfig, SenseDistribution};
use crate::lexkb::LexKb;
use crate::refine::{
    kb_filter, nn_filter, soft_constraint, sync_filter, FocusWord, SoftConstraintConfig,
    Translation,
};

pub mod reason {
    pub const KB: &str = "kb";
    pub const UNKNOWN_SYNSET: &str = "unknown-synset";
    pub const NN: &str = "nn";
    pub const SYNC: &str = "sync";
    pub const NO_CANDIDATE: &str = "no-candidate";
    /// several source annotations with the same synset landed on one token
    pub const MERGED: &str = "merged";
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelPropConfig {
    pub kb_filter: bool,
    pub nn_filter: bool,
}

impl Default for LabelPropConfig {
    fn default() -> Self {
        LabelPropConfig {
            kb_filter: true,
            nn_filter: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelGenConfig {
    /// Re-rank propagated labels on the target side; when false the pivot
    /// argmax is kept as is.
    pub rerank: bool,
}

impl Default for LabelGenConfig {
    fn default() -> Self {
        LabelGenConfig { rerank: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub method: String,
    /// language → statistics of the produced annotations
    pub stats: BTreeMap<String, CorpusStats>,
    pub input_annotations: usize,
    pub output_annotations: usize,
    pub failed_alignments: usize,
    /// reason code → removed annotations
    pub removals: BTreeMap<String, usize>,
    /// informational per-step counters, outside the conservation balance
    pub steps: BTreeMap<String, usize>,
    pub config: serde_json::Value,
}

impl PipelineReport {
    pub fn removed(&self) -> usize {
        self.removals.values().sum()
    }

    /// `input = output + removed + failed`.
    pub fn is_balanced(&self) -> bool {
        self.input_annotations == self.output_annotations + self.removed() + self.failed_alignments
    }

    /// Summary table: one row per language with annotated tokens, annotated
    /// word types, sense types and failed alignments.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method: {}", self.method);
        let _ = writeln!(
            s,
            "{:<6} {:>12} {:>12} {:>12} {:>12}",
            "lang", "tokens", "word-types", "sense-types", "failed"
        );
        for (lang, st) in &self.stats {
            let _ = writeln!(s, "{lang:<6} {st}");
        }
        let _ = writeln!(
            s,
            "annotations: {} in, {} out, {} removed, {} failed",
            self.input_annotations,
            self.output_annotations,
            self.removed(),
            self.failed_alignments
        );
        for (r, n) in &self.removals {
            let _ = writeln!(s, "  removed[{r}] = {n}");
        }
        for (k, n) in &self.steps {
            let _ = writeln!(s, "  step[{k}] = {n}");
        }
        s
    }

    /// Line-delimited diagnostics records.
    pub fn diagnostics(&self) -> String {
        let mut out = String::new();
        let mut push = |v: serde_json::Value| {
            out.push_str(&v.to_string());
            out.push('\n');
        };
        push(serde_json::json!({
            "kind": "summary",
            "method": self.method,
            "input": self.input_annotations,
            "output": self.output_annotations,
            "failed": self.failed_alignments,
        }));
        for (lang, st) in &self.stats {
            push(serde_json::json!({"kind": "stats", "lang": lang, "stats": st}));
        }
        for (reason, n) in &self.removals {
            push(serde_json::json!({"kind": "removal", "reason": reason, "count": n}));
        }
        for (step, n) in &self.steps {
            push(serde_json::json!({"kind": "step", "step": step, "count": n}));
        }
        push(serde_json::json!({"kind": "config", "config": self.config}));
        out
    }
}

/// Per-pair counters, merged in input order.
#[derive(Default)]
struct Tally {
    input: usize,
    failed: usize,
    removals: BTreeMap<&'static str, usize>,
    steps: BTreeMap<&'static str, usize>,
}

impl Tally {
    fn remove(&mut self, reason: &'static str, n: usize) {
        if n > 0 {
            *self.removals.entry(reason).or_default() += n;
        }
    }

    fn step(&mut self, step: &'static str, n: usize) {
        *self.steps.entry(step).or_default() += n;
    }

    fn merge(&mut self, other: Tally) {
        self.input += other.input;
        self.failed += other.failed;
        for (k, v) in other.removals {
            *self.removals.entry(k).or_default() += v;
        }
        for (k, v) in other.steps {
            *self.steps.entry(k).or_default() += v;
        }
    }

    fn into_report(self, method: &str, output: usize, config: serde_json::Value) -> PipelineReport {
        PipelineReport {
            method: method.to_string(),
            stats: BTreeMap::new(),
            input_annotations: self.input,
            output_annotations: output,
            failed_alignments: self.failed,
            removals: self
                .removals
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            steps: self
                .steps
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            config,
        }
    }
}

struct Propagated {
    target: Sentence,
    /// target token → source token it was projected from
    origin: BTreeMap<usize, usize>,
}

/// Projects source annotations onto aligned target tokens.
///
/// A source annotation propagates when every aligned target token would
/// receive only its synset and either there is a single aligned token or
/// exactly one of the aligned tokens lexicalizes the synset. Anything else is
/// a failed alignment.
fn propagate(pair: &AlignedSentencePair, kb: &LexKb, tally: &mut Tally) -> Propagated {
    let src = &pair.src;
    let tgt_lang = pair.tgt.lang.as_str();
    let mut target = pair.tgt.clone();
    target.annotations.clear();
    let mut origin = BTreeMap::new();

    // synsets arriving at each target token
    let mut incoming: BTreeMap<usize, Vec<&SenseAnnotation>> = BTreeMap::new();
    for a in &src.annotations {
        for j in pair.targets_of(a.token) {
            incoming.entry(j).or_default().push(a);
        }
    }
    let conflicted = |j: usize| {
        incoming
            .get(&j)
            .is_some_and(|v| v.iter().any(|a| a.synset != v[0].synset))
    };

    for a in &src.annotations {
        tally.input += 1;
        let targets: Vec<usize> = pair.targets_of(a.token).collect();
        if targets.is_empty() || targets.iter().any(|&j| conflicted(j)) {
            tally.failed += 1;
            continue;
        }
        let chosen = if let [only] = targets[..] {
            Some(only)
        } else {
            let lexicalizing: Vec<usize> = targets
                .iter()
                .copied()
                .filter(|&j| {
                    kb.get(a.synset.as_str())
                        .is_some_and(|s| s.contains(&pair.tgt.tokens[j].lemma, tgt_lang))
                })
                .collect();
            match lexicalizing[..] {
                [one] => Some(one),
                _ => None,
            }
        };
        let Some(j) = chosen else {
            tally.failed += 1;
            continue;
        };
        if origin.contains_key(&j) {
            tally.remove(reason::MERGED, 1);
            continue;
        }
        origin.insert(j, a.token);
        target.set_annotation(SenseAnnotation::new(
            j,
            a.synset.clone(),
            a.score,
            Source::Prop,
        ));
    }
    Propagated { target, origin }
}

fn count_annotations<'a>(sentences: impl IntoIterator<Item = &'a Sentence>) -> usize {
    sentences.into_iter().map(|s| s.annotations.len()).sum()
}

fn real_pairs(bitext: &[AlignedSentencePair]) -> Vec<&AlignedSentencePair> {
    bitext.iter().filter(|p| !p.pseudo).collect()
}

fn merge_tallies(tallies: impl IntoIterator<Item = Tally>) -> Tally {
    let mut total = Tally::default();
    for t in tallies {
        total.merge(t);
    }
    total
}

/// Semi-supervised projection of gold source annotations to the target side.
/// `embeddings` holds (token vectors, synset vectors) and is required when
/// the nearest-neighbor filter is enabled.
pub fn label_prop(
    bitext: &[AlignedSentencePair],
    kb: &LexKb,
    embeddings: Option<(&EmbeddingStore<f64>, &EmbeddingStore<f64>)>,
    cfg: &LabelPropConfig,
) -> Result<(Vec<Sentence>, PipelineReport)> {
    if cfg.nn_filter && embeddings.is_none() {
        return Err(Error::InvalidConfig(
            "nearest-neighbor filtering needs token and synset embeddings".into(),
        ));
    }
    let results: Vec<(Sentence, Tally)> = real_pairs(bitext)
        .par_iter()
        .map(|pair| {
            let mut tally = Tally::default();
            let mut s = propagate(pair, kb, &mut tally).target;
            tally.step("propagated", s.annotations.len());
            if cfg.kb_filter {
                let (out, removed) = kb_filter(&s, kb);
                tally.remove(reason::KB, removed.rejected);
                tally.remove(reason::UNKNOWN_SYNSET, removed.unknown);
                s = out;
            }
            if cfg.nn_filter {
                let (tok, syn) = embeddings.expect("checked above");
                let (out, removed) = nn_filter(&s, tok, syn, kb)?;
                tally.remove(reason::NN, removed.total());
                s = out;
            }
            Ok((s, tally))
        })
        .collect::<Result<_>>()?;
    let (target, tallies): (Vec<Sentence>, Vec<Tally>) = results.into_iter().unzip();
    let tally = merge_tallies(tallies);
    let mut report = tally.into_report(
        "label-prop",
        count_annotations(&target),
        serde_json::to_value(cfg).unwrap_or_default(),
    );
    if let Some(s) = target.first() {
        report.stats.insert(
            s.lang.clone(),
            corpus_stats(&target, report.failed_alignments),
        );
    }
    Ok((target, report))
}

fn translation_of<'a>(
    other: &'a Sentence,
    aligned: impl Iterator<Item = usize>,
) -> Translation<'a> {
    Translation::new(&other.lang, aligned.map(|k| other.tokens[k].lemma.as_str()))
}

fn rerank_side(
    side: &Sentence,
    other: &Sentence,
    dists: &[SenseDistribution<f64>],
    aligned: impl Fn(usize) -> Vec<usize>,
    kb: &LexKb,
    sc: &SoftConstraintConfig,
    tally: &mut Tally,
) -> Sentence {
    let mut out = side.clone();
    out.annotations.clear();
    for d in dists {
        let t = &side.tokens[d.token_index];
        let translation = translation_of(other, aligned(d.token_index).into_iter());
        let focus = FocusWord {
            lemma: &t.lemma,
            lang: &side.lang,
        };
        let reranked = soft_constraint(d, &translation, focus, kb, sc);
        if reranked.argmax().map(|x| x.0) != d.argmax().map(|x| x.0) {
            tally.step("soft-constraint-changed", 1);
        }
        if let Some(a) = reranked.top_annotation(Source::Ppr) {
            out.set_annotation(a);
        }
    }
    out
}

/// Unsupervised symmetric tagging of both sides of a bitext.
pub fn label_sync(
    bitext: &[AlignedSentencePair],
    kb: &LexKb,
    ppr_cfg: &PprConfig,
    sc_cfg: &SoftConstraintConfig,
) -> Result<(Vec<AlignedSentencePair>, PipelineReport)> {
    ppr_cfg.validate()?;
    sc_cfg.validate()?;
    let sc = SoftConstraintConfig {
        use_frequency: false,
        ..*sc_cfg
    };
    let results: Vec<(AlignedSentencePair, Tally)> = real_pairs(bitext)
        .par_iter()
        .map(|pair| {
            let mut tally = Tally::default();
            let src_d = disambiguate_w2w::<f64>(&pair.src, kb, ppr_cfg)?;
            let tgt_d = disambiguate_w2w::<f64>(&pair.tgt, kb, ppr_cfg)?;
            tally.step("distributions", src_d.len() + tgt_d.len());
            let src = rerank_side(
                &pair.src,
                &pair.tgt,
                &src_d,
                |i| pair.targets_of(i).collect(),
                kb,
                &sc,
                &mut tally,
            );
            let tgt = rerank_side(
                &pair.tgt,
                &pair.src,
                &tgt_d,
                |j| pair.sources_of(j).collect(),
                kb,
                &sc,
                &mut tally,
            );
            let tagged = AlignedSentencePair {
                src,
                tgt,
                align: pair.align.clone(),
                pseudo: false,
            };
            tally.input += tagged.src.annotations.len() + tagged.tgt.annotations.len();
            let (out, (rs, rt)) = sync_filter(&tagged);
            tally.remove(reason::SYNC, rs + rt);
            Ok((out, tally))
        })
        .collect::<Result<_>>()?;
    let (pairs, tallies): (Vec<AlignedSentencePair>, Vec<Tally>) = results.into_iter().unzip();
    let tally = merge_tallies(tallies);
    let src: Vec<&Sentence> = pairs.iter().map(|p| &p.src).collect();
    let tgt: Vec<&Sentence> = pairs.iter().map(|p| &p.tgt).collect();
    let output = count_annotations(src.iter().copied()) + count_annotations(tgt.iter().copied());
    let mut report = tally.into_report(
        "label-sync",
        output,
        serde_json::json!({"ppr": ppr_cfg, "soft_constraint": sc}),
    );
    if let Some(p) = pairs.first() {
        report
            .stats
            .insert(p.src.lang.clone(), corpus_stats(src, 0));
        report
            .stats
            .insert(p.tgt.lang.clone(), corpus_stats(tgt, 0));
    }
    Ok((pairs, report))
}

/// Unsupervised asymmetric tagging: pivot-side WSD projected to the target.
/// Returns pairs whose source carries the pivot annotations and whose target
/// carries the refined projections.
pub fn label_gen(
    bitext: &[AlignedSentencePair],
    kb: &LexKb,
    ppr_cfg: &PprConfig,
    sc_cfg: &SoftConstraintConfig,
    gen_cfg: &LabelGenConfig,
) -> Result<(Vec<AlignedSentencePair>, PipelineReport)> {
    ppr_cfg.validate()?;
    sc_cfg.validate()?;
    let results: Vec<(AlignedSentencePair, Tally)> = real_pairs(bitext)
        .par_iter()
        .map(|pair| {
            let mut tally = Tally::default();
            let dists = disambiguate_w2w::<f64>(&pair.src, kb, ppr_cfg)?;
            let mut pivot = pair.src.clone();
            pivot.annotations.clear();
            for d in &dists {
                if let Some(a) = d.top_annotation(Source::Ppr) {
                    pivot.set_annotation(a);
                }
            }
            let by_token: BTreeMap<usize, &SenseDistribution<f64>> =
                dists.iter().map(|d| (d.token_index, d)).collect();
            let tagged_pivot = AlignedSentencePair {
                src: pivot,
                tgt: pair.tgt.clone(),
                align: pair.align.clone(),
                pseudo: false,
            };
            let Propagated { mut target, origin } = propagate(&tagged_pivot, kb, &mut tally);
            tally.step("propagated", target.annotations.len());

            if gen_cfg.rerank {
                let mut reranked = target.clone();
                reranked.annotations.clear();
                for a in &target.annotations {
                    let j = a.token;
                    let lemma = &target.tokens[j].lemma;
                    let dist = by_token[&origin[&j]];
                    let restricted = dist.restrict(|s| {
                        kb.get(s.as_str())
                            .is_some_and(|syn| syn.contains(lemma, &target.lang))
                    });
                    let Some(restricted) = restricted else {
                        tally.remove(reason::NO_CANDIDATE, 1);
                        continue;
                    };
                    let translation = translation_of(&tagged_pivot.src, tagged_pivot.sources_of(j));
                    let focus = FocusWord {
                        lemma,
                        lang: &target.lang,
                    };
                    let best = soft_constraint(&restricted, &translation, focus, kb, sc_cfg);
                    if let Some(mut ann) = best.top_annotation(Source::Prop) {
                        if ann.synset != a.synset {
                            tally.step("rerank-changed", 1);
                        }
                        ann.token = j;
                        reranked.set_annotation(ann);
                    }
                }
                target = reranked;
            }

            let (target, removed) = kb_filter(&target, kb);
            tally.remove(reason::KB, removed.rejected);
            tally.remove(reason::UNKNOWN_SYNSET, removed.unknown);
            Ok((
                AlignedSentencePair {
                    src: tagged_pivot.src,
                    tgt: target,
                    align: pair.align.clone(),
                    pseudo: false,
                },
                tally,
            ))
        })
        .collect::<Result<_>>()?;
    let (pairs, tallies): (Vec<AlignedSentencePair>, Vec<Tally>) = results.into_iter().unzip();
    let tally = merge_tallies(tallies);
    let target: Vec<Sentence> = pairs.iter().map(|p| p.tgt.clone()).collect();
    let mut report = tally.into_report(
        "label-gen",
        count_annotations(&target),
        serde_json::json!({"ppr": ppr_cfg, "soft_constraint": sc_cfg, "label_gen": gen_cfg}),
    );
    if let Some(s) = target.first() {
        report.stats.insert(
            s.lang.clone(),
            corpus_stats(&target, report.failed_alignments),
        );
    }
    Ok((pairs, report))
}
