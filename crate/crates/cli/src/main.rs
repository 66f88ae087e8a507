use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sensetag::corpus::{
    self, read_bitext, read_corpus, read_key, save_key, write_bitext, write_corpus,
};
use sensetag::eval::{self, FreqModel};
use sensetag::fixtures::{self, WorldSpec};
use sensetag::graphwsd::write_distributions;
use sensetag::{
    align_bitext, disambiguate_w2w, label_gen, label_prop, label_sync, AlignedSentencePair,
    Embeddings, LexKb, PipelineReport, RunConfig, Source, TeleportMode,
};

#[derive(Parser)]
#[command(
    name = "sensetag",
    version,
    about = "Sense-annotated corpora from bitexts and a multilingual KB"
)]
struct Cli {
    /// Line-delimited JSON run configuration; flags override it
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every random choice [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core)
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Print the resolved configuration to stderr
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(flatten)]
    tuning: Tuning,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Teleport {
    PerSynset,
    PerWord,
}

#[derive(Args)]
struct Tuning {
    /// PageRank damping factor
    #[arg(long, global = true)]
    damping: Option<f64>,
    /// PageRank L1 convergence tolerance
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[arg(long, global = true)]
    max_iterations: Option<usize>,
    /// How teleport mass is spread over context words
    #[arg(long, global = true, value_enum)]
    teleport: Option<Teleport>,
    /// SoftConstraint boost for senses matching the translation
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Multiply in the KB sense-frequency term during SoftConstraint
    #[arg(long, global = true)]
    use_frequency: bool,
    /// EM iterations of the aligner
    #[arg(long, global = true)]
    iterations: Option<usize>,
    /// Copies of the KB dictionary appended to the aligner's training data
    #[arg(long, global = true)]
    copies: Option<usize>,
    /// Skip the synset-sharing alignment correction
    #[arg(long, global = true)]
    no_correct: bool,
}

#[derive(Args)]
struct BitextIn {
    /// Bitext, one JSON pair per line
    #[arg(long, value_name = "PATH")]
    bitext: PathBuf,
    /// Pharaoh alignments, one line per pair, replacing embedded links
    #[arg(long, value_name = "PATH")]
    alignments: Option<PathBuf>,
    /// Recompute word alignments with the built-in aligner
    #[arg(long, conflicts_with = "alignments")]
    realign: bool,
}

#[derive(Args)]
struct ReportOut {
    /// Summary table
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    /// Line-delimited JSON diagnostics
    #[arg(long, value_name = "PATH")]
    diagnostics: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a KB file and optionally rewrite it canonically
    KbValidate {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Word-align a bitext with IBM Model 1 and grow-diag
    Align {
        #[command(flatten)]
        input: BitextIn,
        #[arg(long)]
        kb: PathBuf,
        /// Pharaoh output
        #[arg(long)]
        out: PathBuf,
        /// Also write the bitext with the new links embedded
        #[arg(long)]
        bitext_out: Option<PathBuf>,
    },
    /// Personalized PageRank WSD of a corpus
    WsdPpr {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        /// Sense distributions as "instance synset score" lines
        #[arg(long)]
        out: PathBuf,
        /// Also write the corpus annotated with each token's best sense
        #[arg(long)]
        annotated: Option<PathBuf>,
    },
    /// Project gold source annotations to the target side
    LabelProp {
        #[command(flatten)]
        input: BitextIn,
        #[arg(long)]
        kb: PathBuf,
        /// Contextual token vectors keyed by doc.sid.t<index>
        #[arg(long)]
        token_emb: Option<PathBuf>,
        #[arg(long)]
        synset_emb: Option<PathBuf>,
        #[arg(long)]
        no_kb_filter: bool,
        /// Disable the nearest-neighbor filter
        #[arg(long)]
        no_nn: bool,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        report: ReportOut,
    },
    /// Tag both sides and keep the annotations their translations agree on
    LabelSync {
        #[command(flatten)]
        input: BitextIn,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        out_src: PathBuf,
        #[arg(long)]
        out_tgt: PathBuf,
        #[command(flatten)]
        report: ReportOut,
    },
    /// Project refined pivot-side WSD to the target side
    LabelGen {
        #[command(flatten)]
        input: BitextIn,
        #[arg(long)]
        kb: PathBuf,
        /// Target corpus
        #[arg(long)]
        out: PathBuf,
        /// Pivot corpus with its PageRank annotations
        #[arg(long)]
        out_src: Option<PathBuf>,
        /// Keep the projected pivot sense without target-side re-ranking
        #[arg(long)]
        no_rerank: bool,
        #[command(flatten)]
        report: ReportOut,
    },
    /// Annotation statistics of a corpus
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Precision, recall and F1 of a key against a gold key
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Corpus supplying token POS for a per-POS breakdown
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Emit a JSON record instead of a table
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Most-frequent-sense baseline key
    Mfs {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the frequency reference classifier on an annotated corpus
    TrainRef {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tag a corpus with a trained reference classifier
    PredictRef {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        /// Leave unseen words untagged instead of using the MFS
        #[arg(long)]
        no_backoff: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// McNemar's test between two prediction keys
    Mcnemar {
        #[arg(long)]
        pred_a: PathBuf,
        #[arg(long)]
        pred_b: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seeded random sample of a corpus or bitext, in input order
    Sample {
        #[arg(long, required_unless_present = "bitext", conflicts_with = "bitext")]
        corpus: Option<PathBuf>,
        #[arg(long)]
        bitext: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic world for experiments
    GenWorld {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 50)]
        synsets: usize,
        #[arg(long, default_value_t = 2)]
        degree: usize,
        #[arg(long, default_value_t = 200)]
        sentences: usize,
        #[arg(long, default_value_t = 100)]
        test_sentences: usize,
        #[arg(long, default_value_t = 1.0)]
        fraction: f64,
        #[arg(long, default_value_t = 0.0)]
        withheld: f64,
        #[arg(long, default_value_t = 1.0)]
        nn_agreement: f64,
    },
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    let t = &cli.tuning;
    if let Some(x) = cli.seed {
        cfg.seed = x;
    }
    if let Some(x) = cli.jobs {
        cfg.jobs = x;
    }
    if let Some(x) = t.damping {
        cfg.ppr.damping = x;
    }
    if let Some(x) = t.tolerance {
        cfg.ppr.tolerance = x;
    }
    if let Some(x) = t.max_iterations {
        cfg.ppr.max_iterations = x;
    }
    if let Some(x) = t.teleport {
        cfg.ppr.teleport = match x {
            Teleport::PerSynset => TeleportMode::PerSynset,
            Teleport::PerWord => TeleportMode::PerWord,
        };
    }
    if let Some(x) = t.lambda {
        cfg.soft_constraint.lambda = x;
    }
    if t.use_frequency {
        cfg.soft_constraint.use_frequency = true;
    }
    if let Some(x) = t.iterations {
        cfg.align.iterations = x;
    }
    if let Some(x) = t.copies {
        cfg.align.copies = x;
    }
    if t.no_correct {
        cfg.align.correct = false;
    }
    match &cli.command {
        Command::LabelProp {
            no_kb_filter,
            no_nn,
            ..
        } => {
            if *no_kb_filter {
                cfg.label_prop.kb_filter = false;
            }
            if *no_nn {
                cfg.label_prop.nn_filter = false;
            }
        }
        Command::LabelGen {
            no_rerank: true, ..
        } => cfg.label_gen.rerank = false,
        _ => {}
    }
    for (name, path) in paths(&cli.command) {
        cfg.paths
            .insert(name.to_string(), path.display().to_string());
    }
    cfg.validate().context("invalid configuration")?;
    Ok(cfg)
}

fn paths(cmd: &Command) -> Vec<(&'static str, &PathBuf)> {
    fn bitext(input: &BitextIn) -> Vec<(&'static str, &PathBuf)> {
        let mut v = vec![("bitext", &input.bitext)];
        v.extend(input.alignments.iter().map(|p| ("alignments", p)));
        v
    }
    let mut v = Vec::new();
    match cmd {
        Command::KbValidate { kb, out } => {
            v.push(("kb", kb));
            v.extend(out.iter().map(|p| ("out", p)));
        }
        Command::Align {
            input,
            kb,
            out,
            bitext_out,
        } => {
            v.extend(bitext(input));
            v.extend([("kb", kb), ("out", out)]);
            v.extend(bitext_out.iter().map(|p| ("bitext-out", p)));
        }
        Command::WsdPpr {
            corpus,
            kb,
            out,
            annotated,
        } => {
            v.extend([("corpus", corpus), ("kb", kb), ("out", out)]);
            v.extend(annotated.iter().map(|p| ("annotated", p)));
        }
        Command::LabelProp {
            input,
            kb,
            token_emb,
            synset_emb,
            out,
            ..
        } => {
            v.extend(bitext(input));
            v.extend([("kb", kb), ("out", out)]);
            v.extend(token_emb.iter().map(|p| ("token-emb", p)));
            v.extend(synset_emb.iter().map(|p| ("synset-emb", p)));
        }
        Command::LabelSync {
            input,
            kb,
            out_src,
            out_tgt,
            ..
        } => {
            v.extend(bitext(input));
            v.extend([("kb", kb), ("out-src", out_src), ("out-tgt", out_tgt)]);
        }
        Command::LabelGen {
            input,
            kb,
            out,
            out_src,
            ..
        } => {
            v.extend(bitext(input));
            v.extend([("kb", kb), ("out", out)]);
            v.extend(out_src.iter().map(|p| ("out-src", p)));
        }
        _ => {}
    }
    v
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_text(path: Option<&PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_kb(path: &Path) -> Result<LexKb> {
    LexKb::load(path).with_context(|| format!("invalid KB {}", path.display()))
}

fn load_corpus(path: &Path) -> Result<Vec<sensetag::Sentence>> {
    read_corpus(path).with_context(|| format!("invalid corpus {}", path.display()))
}

fn load_key(path: &Path) -> Result<sensetag::KeyMap> {
    read_key(path).with_context(|| format!("invalid key file {}", path.display()))
}

fn load_bitext(input: &BitextIn, kb: &LexKb, cfg: &RunConfig) -> Result<Vec<AlignedSentencePair>> {
    let mut pairs = read_bitext(&input.bitext, input.alignments.as_deref())
        .with_context(|| format!("invalid bitext {}", input.bitext.display()))?;
    if input.realign {
        let links = align_bitext(&pairs, kb, &cfg.align).context("alignment failed")?;
        for (p, l) in pairs.iter_mut().zip(links) {
            p.align = l;
        }
    }
    Ok(pairs)
}

fn emit_report(mut report: PipelineReport, cfg: &RunConfig, out: &ReportOut) -> Result<()> {
    report.config = cfg.snapshot();
    if let Some(p) = &out.report {
        write_text(Some(p), &report.table())?;
    }
    if let Some(p) = &out.diagnostics {
        write_text(Some(p), &report.diagnostics())?;
    }
    Ok(())
}

fn run(cli: Cli, cfg: RunConfig) -> Result<()> {
    match cli.command {
        Command::KbValidate { kb, out } => {
            let k = load_kb(&kb)?;
            eprintln!(
                "{}: {} synsets, {} edges",
                kb.display(),
                k.len(),
                k.edge_count()
            );
            if let Some(out) = out {
                k.save(&out)?;
            }
        }
        Command::Align {
            input,
            kb,
            out,
            bitext_out,
        } => {
            let kb = load_kb(&kb)?;
            let mut pairs = read_bitext(&input.bitext, input.alignments.as_deref())
                .with_context(|| format!("invalid bitext {}", input.bitext.display()))?;
            let links = align_bitext(&pairs, &kb, &cfg.align).context("alignment failed")?;
            for (p, l) in pairs.iter_mut().zip(links) {
                p.align = l;
            }
            let mut w = create(&out)?;
            corpus::write_pharaoh(&pairs, &mut w)?;
            w.flush()?;
            if let Some(b) = bitext_out {
                write_bitext(&b, &pairs)?;
            }
        }
        Command::WsdPpr {
            corpus,
            kb,
            out,
            annotated,
        } => {
            let kb = load_kb(&kb)?;
            let mut sentences = load_corpus(&corpus)?;
            let mut w = create(&out)?;
            for s in &mut sentences {
                let dists = disambiguate_w2w::<f64>(s, &kb, &cfg.ppr)?;
                write_distributions(s, &dists, &mut w)?;
                s.annotations.clear();
                for a in dists.iter().filter_map(|d| d.top_annotation(Source::Ppr)) {
                    s.set_annotation(a);
                }
            }
            w.flush()?;
            if let Some(a) = annotated {
                write_corpus(&a, &sentences)?;
            }
        }
        Command::LabelProp {
            input,
            kb,
            token_emb,
            synset_emb,
            out,
            report,
            ..
        } => {
            let kb = load_kb(&kb)?;
            let pairs = load_bitext(&input, &kb, &cfg)?;
            let stores = match (token_emb, synset_emb) {
                (Some(t), Some(s)) => Some((
                    Embeddings::load(&t)
                        .with_context(|| format!("invalid embeddings {}", t.display()))?,
                    Embeddings::load(&s)
                        .with_context(|| format!("invalid embeddings {}", s.display()))?,
                )),
                (None, None) => None,
                _ => bail!("--token-emb and --synset-emb must be given together"),
            };
            if cfg.label_prop.nn_filter && stores.is_none() {
                bail!("the nearest-neighbor filter needs --token-emb and --synset-emb (or pass --no-nn)");
            }
            let (sentences, rep) = label_prop(
                &pairs,
                &kb,
                stores.as_ref().map(|(t, s)| (t, s)),
                &cfg.label_prop,
            )?;
            write_corpus(&out, &sentences)?;
            emit_report(rep, &cfg, &report)?;
        }
        Command::LabelSync {
            input,
            kb,
            out_src,
            out_tgt,
            report,
        } => {
            let kb = load_kb(&kb)?;
            let pairs = load_bitext(&input, &kb, &cfg)?;
            let (out, rep) = label_sync(&pairs, &kb, &cfg.ppr, &cfg.soft_constraint)?;
            let (src, tgt): (Vec<_>, Vec<_>) = out.into_iter().map(|p| (p.src, p.tgt)).unzip();
            write_corpus(&out_src, &src)?;
            write_corpus(&out_tgt, &tgt)?;
            emit_report(rep, &cfg, &report)?;
        }
        Command::LabelGen {
            input,
            kb,
            out,
            out_src,
            report,
            ..
        } => {
            let kb = load_kb(&kb)?;
            let pairs = load_bitext(&input, &kb, &cfg)?;
            let (res, rep) =
                label_gen(&pairs, &kb, &cfg.ppr, &cfg.soft_constraint, &cfg.label_gen)?;
            let (src, tgt): (Vec<_>, Vec<_>) = res.into_iter().map(|p| (p.src, p.tgt)).unzip();
            write_corpus(&out, &tgt)?;
            if let Some(p) = out_src {
                write_corpus(&p, &src)?;
            }
            emit_report(rep, &cfg, &report)?;
        }
        Command::Stats { corpus, out } => {
            let sentences = load_corpus(&corpus)?;
            let st = corpus::corpus_stats(&sentences, 0);
            let text = format!(
                "{:>12} {:>12} {:>12} {:>12}\n{st}\n",
                "tokens", "word-types", "sense-types", "failed"
            );
            write_text(out.as_ref(), &text)?;
        }
        Command::Score {
            pred,
            gold,
            corpus,
            json,
            out,
        } => {
            let (p, g) = (load_key(&pred)?, load_key(&gold)?);
            let pos = match corpus {
                Some(c) => eval::pos_map(&load_corpus(&c)?),
                None => Default::default(),
            };
            let r = eval::score_with_pos(&p, &g, &pos);
            let text = if json { r.json_line() } else { r.table() };
            write_text(out.as_ref(), &text)?;
        }
        Command::Mfs { corpus, kb, out } => {
            let kb = load_kb(&kb)?;
            save_key(&out, &eval::mfs_tag(&load_corpus(&corpus)?, &kb))?;
        }
        Command::TrainRef { corpus, out } => {
            eval::train_freq(&load_corpus(&corpus)?).save(&out)?;
        }
        Command::PredictRef {
            model,
            corpus,
            kb,
            no_backoff,
            out,
        } => {
            let m = FreqModel::load(&model)
                .with_context(|| format!("invalid model {}", model.display()))?;
            let kb = load_kb(&kb)?;
            save_key(
                &out,
                &eval::predict_freq(&m, &load_corpus(&corpus)?, &kb, !no_backoff),
            )?;
        }
        Command::Mcnemar {
            pred_a,
            pred_b,
            gold,
            out,
        } => {
            let m = eval::mcnemar(&load_key(&pred_a)?, &load_key(&pred_b)?, &load_key(&gold)?);
            let text = format!(
                "b={} c={} statistic={:.4} p={:.4}\n",
                m.b, m.c, m.statistic, m.p_value
            );
            write_text(out.as_ref(), &text)?;
        }
        Command::Sample {
            corpus,
            bitext,
            n,
            out,
        } => match (corpus, bitext) {
            (Some(c), _) => write_corpus(&out, &corpus::sample(&load_corpus(&c)?, n, cfg.seed))?,
            (None, Some(b)) => {
                let pairs = read_bitext(&b, None)
                    .with_context(|| format!("invalid bitext {}", b.display()))?;
                write_bitext(&out, &corpus::sample(&pairs, n, cfg.seed))?
            }
            (None, None) => bail!("pass --corpus or --bitext"),
        },
        Command::GenWorld {
            out_dir,
            synsets,
            degree,
            sentences,
            test_sentences,
            fraction,
            withheld,
            nn_agreement,
        } => {
            let spec = WorldSpec {
                seed: cfg.seed,
                synsets,
                degree,
                sentences,
                test_sentences,
                disambiguating_fraction: fraction,
                withheld_context: withheld,
                nn_agreement,
                ..WorldSpec::default()
            };
            let w = fixtures::generate_world(&spec)?;
            fs::create_dir_all(&out_dir)
                .with_context(|| format!("cannot create {}", out_dir.display()))?;
            let at = |name: &str| out_dir.join(name);
            w.kb.save(at("kb.jsonl"))?;
            write_bitext(at("bitext.jsonl"), &w.bitext)?;
            write_bitext(at("gold.jsonl"), &w.gold)?;
            write_bitext(at("source-annotated.jsonl"), &w.annotated_source())?;
            save_key(at("target.key"), &w.target_key())?;
            write_corpus(at("test.jsonl"), &w.test)?;
            save_key(at("test.key"), &w.test_key())?;
            w.token_embeddings.save(at("tokens.vec"))?;
            w.synset_embeddings.save(at("synsets.vec"))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(&cli).and_then(|cfg| {
        if cli.verbose {
            eprintln!(
                "{}",
                serde_json::to_string_pretty(&cfg).expect("plain data")
            );
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .context("cannot start worker threads")?;
        pool.install(|| run(cli, cfg))
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
