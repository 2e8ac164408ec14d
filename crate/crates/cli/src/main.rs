use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sutra_core::alignment::{align_windows, load_embeddings, DEFAULT_MIN_SIM, DEFAULT_WINDOW};
use sutra_core::harness::{
    evaluate, generate, run_ablation, run_pipeline, HarnessError, PipelineConfig, SynthConfig,
};
use sutra_core::neural::{
    load_checkpoint, save_checkpoint, train, translate, Example, Memory, Model, ModelConfig, TrainMode,
};
use sutra_core::pnmemory::{build_memory, Datastore, PatternAutomaton, RetrievalParams};
use sutra_core::subword::{learn_bpe, project_spans, BpeModel, SubwordSequence, Vocab};
use sutra_core::textprep::{
    filter_scripture, segment_sentences, tag_proper_nouns, word_tokens, Glossary, Language, PnSpan, RawDocument,
    RemovalRule, Side, TaggedSentence,
};

#[derive(Parser)]
#[command(name = "sutra", version, about = "Scripture translation toolkit")]
struct Cli {
    /// Configuration file (key = value).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a document into sentences, one per line.
    Segment {
        input: PathBuf,
        #[arg(long, default_value = "zh")]
        lang: Language,
        /// Removal rule such as `brackets:（）`; repeatable.
        #[arg(long = "rule")]
        rules: Vec<RemovalRule>,
        #[arg(long, default_value_t = 5)]
        min_len: usize,
    },
    /// Align two sentence-embedding files and print `src\ttgt\tsimilarity`.
    Align {
        src: PathBuf,
        tgt: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        #[arg(long, default_value_t = DEFAULT_MIN_SIM)]
        min_sim: f64,
    },
    /// Learn BPE merges and a vocabulary, written as `<out>/<prefix>.{merges,bpevocab,vocab}`.
    LearnBpe {
        corpus: PathBuf,
        #[arg(long, default_value = "en")]
        lang: Language,
        #[arg(long, default_value_t = 200)]
        merges: usize,
        #[arg(long, default_value = "tgt")]
        prefix: String,
    },
    /// Print the subword segmentation of every line.
    ApplyBpe {
        input: PathBuf,
        /// Directory holding `<prefix>.merges` and `<prefix>.bpevocab`.
        #[arg(long)]
        subwords: PathBuf,
        #[arg(long, default_value = "tgt")]
        prefix: String,
        #[arg(long, default_value = "en")]
        lang: Language,
        /// Print vocabulary ids instead of subword strings.
        #[arg(long)]
        ids: bool,
    },
    /// Build the proper-noun automaton and decoder-state datastore.
    BuildMemory {
        /// Parallel corpus, `source\ttarget` per line.
        pairs: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        subwords: PathBuf,
        #[arg(long)]
        glossary: PathBuf,
    },
    /// Pre-train a model, or side-tune one given with `--init`.
    Train {
        /// Parallel corpus, `source\ttarget` per line.
        pairs: PathBuf,
        #[arg(long)]
        subwords: PathBuf,
        #[arg(long)]
        init: Option<PathBuf>,
        /// Glossary for proper-noun tagging of targets.
        #[arg(long)]
        glossary: Option<PathBuf>,
        /// Side-tuning references, one vernacular sentence per training pair.
        #[arg(long)]
        references: Option<PathBuf>,
    },
    /// Greedy translation of one source sentence per line.
    Translate {
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        subwords: PathBuf,
        /// Directory written by `build-memory`.
        #[arg(long)]
        memory: Option<PathBuf>,
        #[arg(long, default_value_t = 128)]
        max_len: usize,
    },
    /// BLEU and proper-noun accuracy of hypotheses against references.
    Evaluate {
        hypotheses: PathBuf,
        references: PathBuf,
        #[arg(long)]
        glossary: Option<PathBuf>,
        #[arg(long)]
        smooth: bool,
    },
    /// Run every configured ablation arm end to end.
    Pipeline,
    /// Write a synthetic corpus and its `pipeline.conf`.
    Synth,
    /// Run all arms on synthetic corpora for seeds `0..seeds`.
    Ablation {
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn config_error(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn require_out(out: &Option<PathBuf>) -> Result<&Path, HarnessError> {
    out.as_deref().ok_or_else(|| config_error("--out is required"))
}

/// Writes to `--out` when given, otherwise to stdout.
fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), HarnessError> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::Data(format!("cannot read {}: {e}", path.display())))
}

struct Subwords {
    bpe: BpeModel,
    vocab: Vocab,
}

impl Subwords {
    fn load(dir: &Path, prefix: &str) -> Result<Self, HarnessError> {
        let bpe = BpeModel::load(
            &dir.join(format!("{prefix}.merges")),
            Some(&dir.join(format!("{prefix}.bpevocab"))),
        )?;
        let vocab = Vocab::load(&dir.join(format!("{prefix}.vocab")))?;
        Ok(Self { bpe, vocab })
    }

    fn ids(&self, words: &[String]) -> Vec<u32> {
        words.iter().flat_map(|w| self.vocab.encode_word(&self.bpe, w)).collect()
    }
}

/// Source and target words of one sentence pair.
type WordPair = (Vec<String>, Vec<String>);

fn read_pairs(path: &Path) -> Result<Vec<WordPair>, HarnessError> {
    let mut pairs = Vec::new();
    for (n, line) in read(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (s, t) = line
            .split_once('\t')
            .ok_or_else(|| HarnessError::Data(format!("{} line {}: expected a tab", path.display(), n + 1)))?;
        pairs.push((word_tokens(s, Language::Zh), word_tokens(t, Language::En)));
    }
    Ok(pairs)
}

fn tagged(words: Vec<String>, glossary: Option<&Glossary>) -> TaggedSentence {
    match glossary {
        Some(g) => tag_proper_nouns(&words, g, Side::Target),
        None => TaggedSentence::untagged(words),
    }
}

fn memory_corpus(
    pairs: &[WordPair],
    src: &Subwords,
    tgt: &Subwords,
    glossary: Option<&Glossary>,
) -> Vec<(SubwordSequence, SubwordSequence)> {
    pairs
        .iter()
        .map(|(s, t)| {
            (
                SubwordSequence::plain(src.ids(s)),
                project_spans(&tagged(t.clone(), glossary), &tgt.bpe, &tgt.vocab),
            )
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let Cli {
        config,
        seed,
        out,
        command,
    } = cli;
    match command {
        Command::Segment {
            input,
            lang,
            rules,
            min_len,
        } => {
            let doc = RawDocument::new(read(&input)?, lang, input.display().to_string());
            let text: String = segment_sentences(&filter_scripture(&doc, &rules), min_len)
                .into_iter()
                .map(|s| s + "\n")
                .collect();
            emit(&out, &text)
        }
        Command::Align {
            src,
            tgt,
            window,
            min_sim,
        } => {
            let r = align_windows(&load_embeddings(&src)?, &load_embeddings(&tgt)?, window, min_sim)?;
            emit(&out, &r.to_tsv())
        }
        Command::LearnBpe {
            corpus,
            lang,
            merges,
            prefix,
        } => {
            let out = require_out(&out)?;
            let words: Vec<Vec<String>> = read(&corpus)?.lines().map(|l| word_tokens(l, lang)).collect();
            let bpe = learn_bpe(&words, merges);
            let vocab = Vocab::build(&words, &bpe);
            std::fs::create_dir_all(out)?;
            bpe.save(&out.join(format!("{prefix}.merges")), &out.join(format!("{prefix}.bpevocab")))?;
            vocab.save(&out.join(format!("{prefix}.vocab")))?;
            Ok(())
        }
        Command::ApplyBpe {
            input,
            subwords,
            prefix,
            lang,
            ids,
        } => {
            let sw = Subwords::load(&subwords, &prefix)?;
            let mut text = String::new();
            for line in read(&input)?.lines() {
                let words = word_tokens(line, lang);
                let pieces: Vec<String> = if ids {
                    sw.ids(&words).iter().map(u32::to_string).collect()
                } else {
                    words.iter().flat_map(|w| sw.bpe.apply(w)).collect()
                };
                let _ = writeln!(text, "{}", pieces.join(" "));
            }
            emit(&out, &text)
        }
        Command::BuildMemory {
            pairs,
            checkpoint,
            subwords,
            glossary,
        } => {
            let out = require_out(&out)?;
            let model = load_checkpoint(&checkpoint)?;
            let (src, tgt) = (Subwords::load(&subwords, "src")?, Subwords::load(&subwords, "tgt")?);
            let glossary = Glossary::load(&glossary)?;
            let corpus = memory_corpus(&read_pairs(&pairs)?, &src, &tgt, Some(&glossary));
            let (automaton, store) = build_memory(&corpus, &model)?;
            std::fs::create_dir_all(out)?;
            automaton.save(&out.join("patterns.txt"))?;
            store.save(&out.join("datastore.bin"))?;
            println!("{} patterns, {} entries", automaton.patterns().len(), store.len());
            Ok(())
        }
        Command::Train {
            pairs,
            subwords,
            init,
            glossary,
            references,
        } => {
            let out = require_out(&out)?;
            let (src, tgt) = (Subwords::load(&subwords, "src")?, Subwords::load(&subwords, "tgt")?);
            let mut cfg = match &config {
                Some(p) => ModelConfig::load(p)?,
                None => ModelConfig::toy(src.vocab.len(), tgt.vocab.len()),
            };
            cfg.src_vocab = src.vocab.len();
            cfg.tgt_vocab = tgt.vocab.len();
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let glossary = glossary.as_deref().map(Glossary::load).transpose()?;
            let pairs = read_pairs(&pairs)?;
            let corpus = memory_corpus(&pairs, &src, &tgt, glossary.as_ref());
            let refs: Option<Vec<String>> = references
                .as_deref()
                .map(|p| read(p).map(|t| t.lines().map(str::to_string).collect()))
                .transpose()?;
            if refs.as_ref().is_some_and(|r| r.len() != corpus.len()) {
                return Err(HarnessError::Data("references must have one line per training pair".into()));
            }
            let examples: Vec<Example> = corpus
                .iter()
                .enumerate()
                .map(|(i, (s, t))| {
                    let ex = Example::new(s.clone(), t.clone());
                    match &refs {
                        Some(r) => ex.with_reference(src.ids(&word_tokens(&r[i], Language::Zh))),
                        None => ex,
                    }
                })
                .collect();
            let (mode, init_model, anchors) = match init {
                Some(p) => {
                    let mut m: Model = load_checkpoint(&p)?;
                    let anchors = (cfg.w_pnm > 0.0)
                        .then(|| build_memory(&corpus, &m).map(|(_, s)| s.anchors().clone()))
                        .transpose()?;
                    m.config.use_side = cfg.use_side;
                    m.config.gate_init = cfg.gate_init;
                    if cfg.use_side {
                        m.init_side(cfg.seed)?;
                    }
                    (TrainMode::SideTune, Some(m), anchors)
                }
                None => (TrainMode::Pretrain, None, None),
            };
            let outcome = train(&examples, &cfg, mode, init_model, anchors.as_ref())?;
            std::fs::create_dir_all(out)?;
            save_checkpoint(&outcome.model, &out.join("model.ckpt"))?;
            let mut log = String::new();
            for (step, r) in outcome.history.iter().enumerate() {
                let _ = writeln!(log, "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}", step + 1, r.total, r.ce, r.est, r.pnm);
            }
            std::fs::write(out.join("history.tsv"), log)?;
            if let Some(last) = outcome.history.last() {
                println!("final loss {:.4} (ce {:.4})", last.total, last.ce);
            }
            Ok(())
        }
        Command::Translate {
            input,
            checkpoint,
            subwords,
            memory,
            max_len,
        } => {
            let model = load_checkpoint(&checkpoint)?;
            let (src, tgt) = (Subwords::load(&subwords, "src")?, Subwords::load(&subwords, "tgt")?);
            let retrieval = match &config {
                Some(p) => PipelineConfig::load(p)?.retrieval,
                None => RetrievalParams::default(),
            };
            let loaded = memory
                .as_deref()
                .map(|dir| {
                    Ok::<_, HarnessError>((
                        PatternAutomaton::load(&dir.join("patterns.txt"))?,
                        Datastore::load(&dir.join("datastore.bin"))?,
                    ))
                })
                .transpose()?;
            let max_len = max_len.min(model.config.max_len - 1);
            let mut text = String::new();
            for line in read(&input)?.lines() {
                let ids = src.ids(&word_tokens(line, Language::Zh));
                if ids.is_empty() {
                    text.push('\n');
                    continue;
                }
                let mem = loaded.as_ref().map(|(a, s)| Memory { automaton: a, store: s });
                let out_seq = translate(&model, &ids, mem, &retrieval, max_len)?;
                let _ = writeln!(text, "{}", tgt.vocab.decode_words(&out_seq.ids).join(" "));
            }
            emit(&out, &text)
        }
        Command::Evaluate {
            hypotheses,
            references,
            glossary,
            smooth,
        } => {
            let hyps: Vec<Vec<String>> = read(&hypotheses)?.lines().map(|l| word_tokens(l, Language::En)).collect();
            let refs: Vec<Vec<String>> = read(&references)?.lines().map(|l| word_tokens(l, Language::En)).collect();
            if hyps.len() != refs.len() {
                return Err(HarnessError::Data(format!(
                    "{} hypotheses for {} references",
                    hyps.len(),
                    refs.len()
                )));
            }
            let glossary = glossary.as_deref().map(Glossary::load).transpose()?;
            // Proper-noun accuracy at word granularity.
            let words = Vocab::from_tokens(hyps.iter().chain(&refs).flatten().cloned());
            let to_ids = |ws: &[String]| -> Vec<u32> { ws.iter().map(|w| words.id(w)).collect() };
            let hyp_ids: Vec<Vec<u32>> = hyps.iter().map(|h| to_ids(h)).collect();
            let ref_seqs: Vec<SubwordSequence> = refs
                .iter()
                .map(|r| {
                    let t = tagged(r.clone(), glossary.as_ref());
                    let spans: Vec<PnSpan> = t.pn_spans.clone();
                    SubwordSequence::with_spans(to_ids(r), spans)
                })
                .collect();
            let report = evaluate(&hyps, &refs, &hyp_ids, &ref_seqs, smooth)?;
            let json = serde_json::to_string(&report).map_err(|e| HarnessError::Internal(e.to_string()))?;
            emit(&out, &(json + "\n"))
        }
        Command::Pipeline => {
            let config = config.ok_or_else(|| config_error("--config is required"))?;
            let out = require_out(&out)?;
            for r in run_pipeline(&config, out, seed)? {
                let pna = r.report.pna.map_or("n/a".to_string(), |p| format!("{p:.2}"));
                println!("{:<18} bleu {:6.2}  pna {:>6}  {:.1}s", r.arm, r.report.bleu, pna, r.wall_time_s);
            }
            Ok(())
        }
        Command::Synth => {
            let out = require_out(&out)?;
            let c = SynthConfig {
                seed: seed.unwrap_or(0),
                ..SynthConfig::default()
            };
            generate(&c)?.write(out)?;
            println!("wrote {}", out.join("pipeline.conf").display());
            Ok(())
        }
        Command::Ablation { seeds } => {
            let out = require_out(&out)?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let r = run_ablation(&seeds, &SynthConfig::default(), out)?;
            for m in &r.medians {
                println!("median {:<18} bleu {:6.2}  pna {:6.2}", m.arm, m.bleu, m.pna);
            }
            println!(
                "combined arm best on both metrics in {}/{} seeds, {:.0}s",
                r.combined_best,
                seeds.len(),
                r.wall_time_s
            );
            let json = serde_json::to_string_pretty(&r).map_err(|e| HarnessError::Internal(e.to_string()))?;
            std::fs::write(out.join("ablation.json"), json)?;
            Ok(())
        }
    }
}
