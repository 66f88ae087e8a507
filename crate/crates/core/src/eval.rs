//! Key-file scoring, baselines, a frequency-based reference classifier and
//! McNemar's test for paired system comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::corpus::{KeyMap, Sentence};
use crate::error::{Error, Result};
use crate::lexkb::{LexKb, Pos, SynsetId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub attempted: usize,
    pub correct: usize,
    pub gold_total: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.correct, self.attempted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.correct, self.gold_total)
    }

    pub fn f1(&self) -> f64 {
        harmonic(self.precision(), self.recall())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub attempted: usize,
    pub correct: usize,
    pub gold_total: usize,
    /// predictions for instances missing from the gold key
    pub ignored: usize,
    /// part of speech → counts, when token POS is known
    pub by_pos: BTreeMap<String, Counts>,
}

impl ScoreReport {
    fn from_counts(c: Counts, ignored: usize, by_pos: BTreeMap<String, Counts>) -> Self {
        ScoreReport {
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            attempted: c.attempted,
            correct: c.correct,
            gold_total: c.gold_total,
            ignored,
            by_pos,
        }
    }

    pub fn nouns(&self) -> Option<Counts> {
        self.by_pos.get(Pos::Noun.tag()).copied()
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<6} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
            "subset", "P", "R", "F1", "correct", "attempted", "gold"
        );
        let mut row = |name: &str, c: Counts| {
            let _ = writeln!(
                s,
                "{:<6} {:>9.4} {:>9.4} {:>9.4} {:>9} {:>9} {:>9}",
                name,
                c.precision(),
                c.recall(),
                c.f1(),
                c.correct,
                c.attempted,
                c.gold_total
            );
        };
        row(
            "all",
            Counts {
                attempted: self.attempted,
                correct: self.correct,
                gold_total: self.gold_total,
            },
        );
        for (pos, c) in &self.by_pos {
            row(pos, *c);
        }
        if self.ignored > 0 {
            let _ = writeln!(s, "ignored {} predictions without gold", self.ignored);
        }
        s
    }

    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("plain data") + "\n"
    }
}

/// Scores predictions against gold. An instance is correct when the predicted
/// and gold synset sets intersect.
pub fn score(pred: &KeyMap, gold: &KeyMap) -> ScoreReport {
    score_with_pos(pred, gold, &BTreeMap::new())
}

/// Like [`score`], with a per-POS breakdown over instances listed in `pos`.
pub fn score_with_pos(pred: &KeyMap, gold: &KeyMap, pos: &BTreeMap<String, Pos>) -> ScoreReport {
    let mut all = Counts {
        gold_total: gold.len(),
        ..Counts::default()
    };
    let mut by_pos: BTreeMap<String, Counts> = BTreeMap::new();
    for iid in gold.keys() {
        if let Some(p) = pos.get(iid) {
            by_pos.entry(p.tag().to_string()).or_default().gold_total += 1;
        }
    }
    let mut ignored = 0;
    for (iid, predicted) in pred {
        let Some(g) = gold.get(iid) else {
            ignored += 1;
            continue;
        };
        if predicted.is_empty() {
            continue;
        }
        let hit = !predicted.is_disjoint(g);
        all.attempted += 1;
        all.correct += hit as usize;
        if let Some(p) = pos.get(iid) {
            let c = by_pos.entry(p.tag().to_string()).or_default();
            c.attempted += 1;
            c.correct += hit as usize;
        }
    }
    ScoreReport::from_counts(all, ignored, by_pos)
}

/// Instance id → POS for content tokens of `sentences`.
pub fn pos_map(sentences: &[Sentence]) -> BTreeMap<String, Pos> {
    sentences
        .iter()
        .flat_map(|s| s.tokens.iter())
        .filter_map(|t| Some((t.iid.clone()?, t.pos.content()?)))
        .collect()
}

fn content_instances(sentences: &[Sentence]) -> impl Iterator<Item = (&str, &str, Pos, &str)> {
    sentences.iter().flat_map(|s| {
        s.tokens.iter().filter_map(move |t| {
            Some((
                t.iid.as_deref()?,
                t.lemma.as_str(),
                t.pos.content()?,
                s.lang.as_str(),
            ))
        })
    })
}

/// Most-frequent-sense baseline over every content instance.
pub fn mfs_tag(sentences: &[Sentence], kb: &LexKb) -> KeyMap {
    content_instances(sentences)
        .filter_map(|(iid, lemma, pos, lang)| {
            let s = kb.mfs(lemma, Some(pos), lang)?;
            Some((iid.to_string(), [s.clone()].into_iter().collect()))
        })
        .collect()
}

/// Sense counts per (lemma, POS) learned from an annotated corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FreqModel {
    pub counts: BTreeMap<(String, Pos), BTreeMap<SynsetId, u64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FreqRecord {
    lemma: String,
    pos: Pos,
    counts: BTreeMap<SynsetId, u64>,
}

impl FreqModel {
    /// Most frequent sense seen for `(lemma, pos)`; ties go to the smallest id.
    pub fn predict(&self, lemma: &str, pos: Pos) -> Option<&SynsetId> {
        let counts = self.counts.get(&(lemma.to_string(), pos))?;
        let mut best: Option<(&SynsetId, u64)> = None;
        for (s, &n) in counts {
            if best.is_none_or(|(_, b)| n > b) {
                best = Some((s, n));
            }
        }
        best.map(|(s, _)| s)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for ((lemma, pos), counts) in &self.counts {
            let rec = FreqRecord {
                lemma: lemma.clone(),
                pos: *pos,
                counts: counts.clone(),
            };
            serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut model = FreqModel::default();
        for (n, line) in reader.lines().enumerate() {
            let lineno = n + 1;
            let line = line.map_err(|e| Error::malformed(lineno, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: FreqRecord =
                serde_json::from_str(&line).map_err(|e| Error::malformed(lineno, e))?;
            if rec.counts.values().any(|&c| c == 0) {
                return Err(Error::malformed(lineno, "sense counts must be positive"));
            }
            model.counts.insert((rec.lemma, rec.pos), rec.counts);
        }
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(f))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(f);
        self.write(&mut out)?;
        out.flush()?;
        Ok(())
    }
}

/// Counts annotated content tokens per (lemma, POS).
pub fn train_freq(corpus: &[Sentence]) -> FreqModel {
    let mut model = FreqModel::default();
    for s in corpus {
        for a in &s.annotations {
            let t = &s.tokens[a.token];
            let Some(pos) = t.pos.content() else {
                continue;
            };
            *model
                .counts
                .entry((t.lemma.clone(), pos))
                .or_default()
                .entry(a.synset.clone())
                .or_default() += 1;
        }
    }
    model
}

/// Predicts every content instance seen in training; with `backoff`, unseen
/// ones fall back to the KB most frequent sense.
pub fn predict_freq(
    model: &FreqModel,
    sentences: &[Sentence],
    kb: &LexKb,
    backoff: bool,
) -> KeyMap {
    content_instances(sentences)
        .filter_map(|(iid, lemma, pos, lang)| {
            let s = model
                .predict(lemma, pos)
                .or_else(|| backoff.then(|| kb.mfs(lemma, Some(pos), lang)).flatten())?;
            Some((iid.to_string(), [s.clone()].into_iter().collect()))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    pub statistic: f64,
    pub p_value: f64,
    /// instances system A gets right and B wrong
    pub b: usize,
    /// instances system B gets right and A wrong
    pub c: usize,
}

/// Continuity-corrected McNemar statistic with its chi-square (1 dof) upper
/// tail probability.
pub fn mcnemar_from_counts(b: usize, c: usize) -> McNemar {
    if b + c == 0 {
        return McNemar {
            statistic: 0.0,
            p_value: 1.0,
            b,
            c,
        };
    }
    let diff = (b.abs_diff(c) as f64 - 1.0).max(0.0);
    let statistic = diff * diff / (b + c) as f64;
    let p_value = ChiSquared::new(1.0).expect("1 dof").sf(statistic);
    McNemar {
        statistic,
        p_value,
        b,
        c,
    }
}

/// McNemar's test over the gold instances attempted by both systems.
pub fn mcnemar(pred_a: &KeyMap, pred_b: &KeyMap, gold: &KeyMap) -> McNemar {
    let (mut b, mut c) = (0, 0);
    for (iid, g) in gold {
        let (Some(pa), Some(pb)) = (pred_a.get(iid), pred_b.get(iid)) else {
            continue;
        };
        if pa.is_empty() || pb.is_empty() {
            continue;
        }
        match (!pa.is_disjoint(g), !pb.is_disjoint(g)) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    mcnemar_from_counts(b, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SenseAnnotation, Source, Token, TokenPos};
    use crate::lexkb::tests::toykb;
    use crate::lexkb::Synset;
    use approx::assert_abs_diff_eq;

    fn key(entries: &[(&str, &[&str])]) -> KeyMap {
        entries
            .iter()
            .map(|(iid, s)| {
                (
                    iid.to_string(),
                    s.iter().map(|x| SynsetId::from(*x)).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn hand_counted_scores() {
        let gold = key(&[
            ("i1", &["a"]),
            ("i2", &["b"]),
            ("i3", &["c"]),
            ("i4", &["d"]),
        ]);
        let pred = key(&[("i1", &["a"]), ("i2", &["b"]), ("i3", &["x"])]);
        let r = score(&pred, &gold);
        assert_eq!((r.correct, r.attempted, r.gold_total), (2, 3, 4));
        assert_abs_diff_eq!(r.precision, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.recall, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.f1, 4.0 / 7.0, epsilon = 1e-12);

        let same = score(&gold, &gold);
        assert_eq!((same.precision, same.recall, same.f1), (1.0, 1.0, 1.0));

        let empty = score(&KeyMap::new(), &gold);
        assert_eq!((empty.precision, empty.recall, empty.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn multiple_golds_and_unknown_instances() {
        let gold = key(&[("i1", &["a", "b"])]);
        let pred = key(&[("i1", &["b"]), ("zz", &["a"])]);
        let r = score(&pred, &gold);
        assert_eq!((r.correct, r.attempted, r.ignored), (1, 1, 1));
    }

    #[test]
    fn per_pos_breakdown() {
        let gold = key(&[("i1", &["a"]), ("i2", &["b"])]);
        let pred = key(&[("i1", &["a"]), ("i2", &["x"])]);
        let pos = [("i1".to_string(), Pos::Noun), ("i2".to_string(), Pos::Verb)]
            .into_iter()
            .collect();
        let r = score_with_pos(&pred, &gold, &pos);
        let n = r.nouns().unwrap();
        assert_eq!((n.correct, n.attempted, n.gold_total), (1, 1, 1));
        assert_eq!(r.by_pos["v"].correct, 0);
        assert!(r.table().contains("all"));
    }

    fn en(words: &[(&str, &str)]) -> Sentence {
        Sentence::new(
            "d",
            "0",
            "en",
            words
                .iter()
                .enumerate()
                .map(|(i, (w, iid))| {
                    let mut t = Token::new(w, w, TokenPos::Noun);
                    if !iid.is_empty() {
                        t = t.with_iid(format!("{iid}{i}"));
                    }
                    t
                })
                .collect(),
        )
    }

    #[test]
    fn mfs_baseline() {
        let kb = toykb();
        let k = mfs_tag(&[en(&[("bank", "i"), ("xyz", "i"), ("river", "")])], &kb);
        assert_eq!(k.len(), 1);
        assert_eq!(k["i0"], [SynsetId::from("s1")].into_iter().collect());

        let tie = LexKb::from_synsets([
            Synset::new("z", Pos::Noun).with_lemma("en", "w"),
            Synset::new("y", Pos::Noun).with_lemma("en", "w"),
        ])
        .unwrap();
        let k = mfs_tag(&[en(&[("w", "i")])], &tie);
        assert_eq!(k["i0"].first().unwrap().as_str(), "y");
    }

    #[test]
    fn frequency_model() {
        let kb = toykb();
        let mut s = en(&[("bank", ""), ("bank", ""), ("bank", ""), ("bank", "")]);
        for (i, syn) in ["s1", "s1", "s2", "s1"].iter().enumerate() {
            s.set_annotation(SenseAnnotation::new(
                i,
                SynsetId::from(*syn),
                1.0,
                Source::Prop,
            ));
        }
        let model = train_freq(&[s]);
        assert_eq!(model.predict("bank", Pos::Noun).unwrap().as_str(), "s1");

        let test = [en(&[("bank", "t"), ("money", "t")])];
        let with = predict_freq(&model, &test, &kb, true);
        let without = predict_freq(&model, &test, &kb, false);
        assert_eq!(with["t1"].first().unwrap().as_str(), "s3");
        assert!(!without.contains_key("t1"));
        assert_eq!(without["t0"].first().unwrap().as_str(), "s1");

        let mut buf = Vec::new();
        model.write(&mut buf).unwrap();
        assert_eq!(FreqModel::parse(buf.as_slice()).unwrap(), model);
    }

    #[test]
    fn mcnemar_counts() {
        let m = mcnemar_from_counts(10, 2);
        assert_abs_diff_eq!(m.statistic, 49.0 / 12.0, epsilon = 1e-12);
        assert!((0.042..=0.045).contains(&m.p_value), "{}", m.p_value);
        let z = mcnemar_from_counts(0, 0);
        assert_eq!((z.statistic, z.p_value), (0.0, 1.0));
        let eq = mcnemar_from_counts(3, 3);
        assert_eq!(eq.statistic, 0.0);
        assert_abs_diff_eq!(eq.p_value, 1.0, epsilon = 1e-12);
        let one = mcnemar_from_counts(1, 0);
        assert_eq!(one.statistic, 0.0);
    }

    #[test]
    fn mcnemar_over_keys_is_symmetric() {
        let gold = key(&[("1", &["a"]), ("2", &["a"]), ("3", &["a"]), ("4", &["a"])]);
        let a = key(&[("1", &["a"]), ("2", &["a"]), ("3", &["x"]), ("4", &["a"])]);
        let b = key(&[("1", &["x"]), ("2", &["x"]), ("3", &["a"])]);
        let ab = mcnemar(&a, &b, &gold);
        let ba = mcnemar(&b, &a, &gold);
        assert_eq!((ab.b, ab.c), (2, 1));
        assert_eq!((ba.b, ba.c), (1, 2));
        assert_eq!(ab.statistic, ba.statistic);
        assert_eq!(ab.p_value, ba.p_value);
        assert_eq!(mcnemar(&a, &a, &gold).p_value, 1.0);
    }
}
