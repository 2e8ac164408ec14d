//! segment → align → BPE → pre-train → per-arm tuning and memory → translate
//! → evaluate.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::metrics::{evaluate, EvalReport};
use super::HarnessError;
use crate::alignment::{align_windows, load_embeddings, AlignError, DEFAULT_MIN_SIM, DEFAULT_WINDOW};
use crate::neural::{
    load_checkpoint, save_checkpoint, train, translate, Example, Memory, ModelConfig, NeuralError,
    TrainMode,
};
use crate::pnmemory::{build_memory, MemoryError, RetrievalParams};
use crate::subword::{learn_bpe, project_spans, BpeModel, SubwordError, SubwordSequence, Vocab};
use crate::textprep::{
    filter_scripture, segment_sentences, tag_proper_nouns, word_tokens, Glossary, Language, RawDocument,
    RemovalRule, Side, TaggedSentence, TextError,
};

impl From<TextError> for HarnessError {
    fn from(e: TextError) -> Self {
        match e {
            TextError::BadRule { .. } => Self::Config(e.to_string()),
            TextError::Io(io) => Self::Io(io),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<AlignError> for HarnessError {
    fn from(e: AlignError) -> Self {
        match e {
            AlignError::Io(io) => Self::Io(io),
            AlignError::Argument(m) => Self::Config(m),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<SubwordError> for HarnessError {
    fn from(e: SubwordError) -> Self {
        match e {
            SubwordError::Io(io) => Self::Io(io),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<NeuralError> for HarnessError {
    fn from(e: NeuralError) -> Self {
        match e {
            NeuralError::Config(m) => Self::Config(m),
            NeuralError::Io(io) => Self::Io(io),
            NeuralError::Format(m) => Self::Data(m),
            other => Self::Internal(other.to_string()),
        }
    }
}

impl From<MemoryError> for HarnessError {
    fn from(e: MemoryError) -> Self {
        match e {
            MemoryError::Io(io) => Self::Io(io),
            MemoryError::Format(m) => Self::Data(m),
            other => Self::Internal(other.to_string()),
        }
    }
}

fn stage<T, E: Into<HarnessError>>(name: &'static str, r: Result<T, E>) -> Result<T, HarnessError> {
    r.map_err(|e| HarnessError::Stage {
        stage: name,
        source: Box::new(e.into()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Baseline,
    Est,
    Pnm,
    EstPnm,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Baseline, Arm::Est, Arm::Pnm, Arm::EstPnm];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Baseline => "baseline",
            Arm::Est => "baseline+est",
            Arm::Pnm => "baseline+pnm",
            Arm::EstPnm => "baseline+est+pnm",
        }
    }

    pub fn uses_est(self) -> bool {
        matches!(self, Arm::Est | Arm::EstPnm)
    }

    pub fn uses_pnm(self) -> bool {
        matches!(self, Arm::Pnm | Arm::EstPnm)
    }
}

impl FromStr for Arm {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let short = s.strip_prefix("baseline+").unwrap_or(s);
        match short {
            "baseline" => Ok(Arm::Baseline),
            "est" => Ok(Arm::Est),
            "pnm" => Ok(Arm::Pnm),
            "est+pnm" => Ok(Arm::EstPnm),
            _ => Err(HarnessError::Config(format!("unknown ablation arm {s:?}"))),
        }
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Pipeline settings, read from `key = value` lines. Paths are relative to
/// the configuration file. `model.<key>` sets the pre-training model config,
/// `tune.<key>` overrides it for tuning, and `retrieval.<key>` sets decoding
/// retrieval. `seed` drives the train/test split and tuning; `model.seed`
/// drives pre-training so that a cached backbone is reused across runs.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub pretrain_corpus: Option<PathBuf>,
    pub classical: Option<PathBuf>,
    pub vernacular: Option<PathBuf>,
    pub english: Option<PathBuf>,
    pub classical_embeddings: Option<PathBuf>,
    pub vernacular_embeddings: Option<PathBuf>,
    pub english_embeddings: Option<PathBuf>,
    pub glossary: Option<PathBuf>,
    pub filter_rules: Vec<RemovalRule>,
    pub min_len: usize,
    pub window: usize,
    pub min_sim: f64,
    pub src_merges: usize,
    pub tgt_merges: usize,
    pub test_fraction: f64,
    pub arms: Vec<Arm>,
    pub seed: u64,
    pub model: ModelConfig,
    pub tune: Vec<(String, String)>,
    pub est_weight: f64,
    pub pnm_weight: f64,
    pub retrieval: RetrievalParams,
    pub smooth_bleu: bool,
    pub cache_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            pretrain_corpus: None,
            classical: None,
            vernacular: None,
            english: None,
            classical_embeddings: None,
            vernacular_embeddings: None,
            english_embeddings: None,
            glossary: None,
            filter_rules: Vec::new(),
            min_len: 5,
            window: DEFAULT_WINDOW,
            min_sim: DEFAULT_MIN_SIM,
            src_merges: 0,
            tgt_merges: 200,
            test_fraction: 0.25,
            arms: Arm::ALL.to_vec(),
            seed: 0,
            model: ModelConfig::toy(5, 5),
            tune: Vec::new(),
            est_weight: 1.0,
            pnm_weight: 1.0,
            retrieval: RetrievalParams::default(),
            smooth_bleu: false,
            cache_dir: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value
        .parse()
        .map_err(|_| HarnessError::Config(format!("bad value {value:?} for {key}")))
}

impl PipelineConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, HarnessError> {
        let mut c = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected key = value", n + 1)))?;
            c.set(k.trim(), v.trim(), base)?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), HarnessError> {
        let path = || Some(base.join(value));
        if let Some(k) = key.strip_prefix("model.") {
            return Ok(self.model.set(k, value)?);
        }
        if let Some(k) = key.strip_prefix("tune.") {
            ModelConfig::default().set(k, value)?;
            self.tune.push((k.to_string(), value.to_string()));
            return Ok(());
        }
        match key {
            "pretrain_corpus" => self.pretrain_corpus = path(),
            "classical" => self.classical = path(),
            "vernacular" => self.vernacular = path(),
            "english" => self.english = path(),
            "classical_embeddings" => self.classical_embeddings = path(),
            "vernacular_embeddings" => self.vernacular_embeddings = path(),
            "english_embeddings" => self.english_embeddings = path(),
            "glossary" => self.glossary = path(),
            "cache_dir" => self.cache_dir = path(),
            "filter_rules" => {
                self.filter_rules = value
                    .split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<RemovalRule>())
                    .collect::<Result<_, _>>()?
            }
            "arms" => {
                self.arms = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_, _>>()?
            }
            "min_len" => self.min_len = parse_num(key, value)?,
            "window" => self.window = parse_num(key, value)?,
            "min_sim" => self.min_sim = parse_num(key, value)?,
            "src_merges" => self.src_merges = parse_num(key, value)?,
            "tgt_merges" => self.tgt_merges = parse_num(key, value)?,
            "test_fraction" => self.test_fraction = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "est_weight" => self.est_weight = parse_num(key, value)?,
            "pnm_weight" => self.pnm_weight = parse_num(key, value)?,
            "smooth_bleu" => self.smooth_bleu = parse_num(key, value)?,
            "retrieval.k" => self.retrieval.k = parse_num(key, value)?,
            "retrieval.bandwidth" => self.retrieval.bandwidth = parse_num(key, value)?,
            "retrieval.lambda" => self.retrieval.lambda = parse_num(key, value)?,
            "retrieval.pn_boost" => self.retrieval.pn_boost = parse_num(key, value)?,
            _ => return Err(HarnessError::Config(format!("unknown pipeline key {key:?}"))),
        }
        Ok(())
    }

    fn required(&self, value: &Option<PathBuf>, name: &str) -> Result<PathBuf, HarnessError> {
        let p = value
            .clone()
            .ok_or_else(|| HarnessError::Config(format!("missing input `{name}`")))?;
        if !p.exists() {
            return Err(HarnessError::Config(format!("input `{name}` not found: {}", p.display())));
        }
        Ok(p)
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.arms.is_empty() {
            return Err(HarnessError::Config("no ablation arms requested".into()));
        }
        if self.arms.iter().any(|a| a.uses_pnm()) {
            self.required(&self.glossary, "glossary")?;
        }
        if self.arms.iter().any(|a| a.uses_est()) {
            self.required(&self.vernacular, "vernacular")?;
            self.required(&self.vernacular_embeddings, "vernacular_embeddings")?;
        }
        if !(0.0..1.0).contains(&self.test_fraction) || self.min_len == 0 {
            return Err(HarnessError::Config("test_fraction must be in [0, 1) and min_len positive".into()));
        }
        if self.est_weight < 0.0 || self.pnm_weight < 0.0 {
            return Err(HarnessError::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArmReport {
    pub arm: String,
    #[serde(flatten)]
    pub report: EvalReport,
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Serialize)]
struct SummaryRecord<'a> {
    arm: &'a str,
    bleu: f64,
    pna: Option<f64>,
    wall_time_s: f64,
}

fn read_doc(path: &Path, language: Language) -> Result<RawDocument, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    Ok(RawDocument::new(text, language, path.display().to_string()))
}

/// Segments a document and checks it against its embedding file.
fn segmented(
    cfg: &PipelineConfig,
    doc: &Path,
    emb: &Path,
    language: Language,
    rules: &[RemovalRule],
) -> Result<(Vec<String>, crate::alignment::EmbeddingTable), HarnessError> {
    let raw = filter_scripture(&read_doc(doc, language)?, rules);
    let sentences = segment_sentences(&raw, cfg.min_len);
    let table = load_embeddings(emb)?;
    if table.len() != sentences.len() {
        return Err(HarnessError::Data(format!(
            "{} has {} sentences but {} has {} embeddings",
            doc.display(),
            sentences.len(),
            emb.display(),
            table.len()
        )));
    }
    Ok((sentences, table))
}

struct Subwords {
    bpe: BpeModel,
    vocab: Vocab,
}

impl Subwords {
    fn ids(&self, words: &[String]) -> Vec<u32> {
        words.iter().flat_map(|w| self.vocab.encode_word(&self.bpe, w)).collect()
    }
}

fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().take(12).map(|b| format!("{b:02x}")).collect()
}

pub fn run_pipeline(config_path: &Path, out: &Path, seed: Option<u64>) -> Result<Vec<ArmReport>, HarnessError> {
    let mut cfg = stage("config", PipelineConfig::load(config_path))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    run_pipeline_config(&cfg, out)
}

/// Runs every requested arm and writes `summary.jsonl` (arm, bleu, pna,
/// wall_time_s), the timing-free `reports.jsonl`, hypotheses, vocabularies
/// and checkpoints into `out`.
pub fn run_pipeline_config(cfg: &PipelineConfig, out: &Path) -> Result<Vec<ArmReport>, HarnessError> {
    stage("config", cfg.validate())?;
    std::fs::create_dir_all(out)?;
    let needs_refs = cfg.arms.iter().any(|a| a.uses_est());

    // Preprocessing shared by every arm.
    let (classical, english, alignment, references) = stage("segment", (|| {
        let c = segmented(
            cfg,
            &cfg.required(&cfg.classical, "classical")?,
            &cfg.required(&cfg.classical_embeddings, "classical_embeddings")?,
            Language::Zh,
            &cfg.filter_rules,
        )?;
        let e = segmented(
            cfg,
            &cfg.required(&cfg.english, "english")?,
            &cfg.required(&cfg.english_embeddings, "english_embeddings")?,
            Language::En,
            &cfg.filter_rules,
        )?;
        let v = if needs_refs {
            Some(segmented(
                cfg,
                &cfg.required(&cfg.vernacular, "vernacular")?,
                &cfg.required(&cfg.vernacular_embeddings, "vernacular_embeddings")?,
                Language::Zh,
                &cfg.filter_rules,
            )?)
        } else {
            None
        };
        let pairs = align_windows(&c.1, &e.1, cfg.window, cfg.min_sim)?;
        let mut refs = BTreeMap::new();
        if let Some(v) = &v {
            for p in align_windows(&c.1, &v.1, cfg.window, cfg.min_sim)?.pairs {
                refs.insert(p.src, v.0[p.tgt].clone());
            }
        }
        Ok::<_, HarnessError>((c.0, e.0, pairs, refs))
    })())?;
    std::fs::write(out.join("alignment.tsv"), alignment.to_tsv())?;

    let glossary = match &cfg.glossary {
        Some(p) if p.exists() => Some(stage("glossary", Glossary::load(p))?),
        Some(p) => {
            return Err(HarnessError::Stage {
                stage: "glossary",
                source: Box::new(HarnessError::Config(format!("input `glossary` not found: {}", p.display()))),
            })
        }
        None => None,
    };

    // Subword models come from the pre-training corpus so the backbone can
    // be cached independently of the in-domain data.
    let pretrain_path = stage("bpe", cfg.required(&cfg.pretrain_corpus, "pretrain_corpus"))?;
    let pretrain_text = std::fs::read_to_string(&pretrain_path)?;
    let mut pre_src = Vec::new();
    let mut pre_tgt = Vec::new();
    for (n, line) in pretrain_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (s, t) = line.split_once('\t').ok_or_else(|| HarnessError::Stage {
            stage: "bpe",
            source: Box::new(HarnessError::Data(format!("pretrain_corpus line {}: expected a tab", n + 1))),
        })?;
        pre_src.push(word_tokens(s, Language::Zh));
        pre_tgt.push(word_tokens(t, Language::En));
    }
    if pre_src.is_empty() {
        return Err(HarnessError::Stage {
            stage: "bpe",
            source: Box::new(HarnessError::Data("empty pretrain_corpus".into())),
        });
    }
    let build = |corpus: &[Vec<String>], merges: usize| {
        let bpe = learn_bpe(corpus, merges);
        let vocab = Vocab::build(corpus, &bpe);
        Subwords { bpe, vocab }
    };
    let src = build(&pre_src, cfg.src_merges);
    let tgt = build(&pre_tgt, cfg.tgt_merges);
    stage("bpe", src.vocab.save(&out.join("src.vocab")))?;
    stage("bpe", tgt.vocab.save(&out.join("tgt.vocab")))?;
    stage("bpe", src.bpe.save(&out.join("src.merges"), &out.join("src.bpevocab")))?;
    stage("bpe", tgt.bpe.save(&out.join("tgt.merges"), &out.join("tgt.bpevocab")))?;

    // Pre-training, cached by content.
    let mut pre_cfg = cfg.model.clone();
    pre_cfg.src_vocab = src.vocab.len();
    pre_cfg.tgt_vocab = tgt.vocab.len();
    pre_cfg.use_side = false;
    pre_cfg.w_est = 0.0;
    pre_cfg.w_pnm = 0.0;
    stage("pretrain", pre_cfg.validate())?;
    let fits = |s: &[u32], t: &[u32]| !s.is_empty() && s.len() <= pre_cfg.max_len && t.len() < pre_cfg.max_len;
    let pre_examples: Vec<Example> = pre_src
        .iter()
        .zip(&pre_tgt)
        .map(|(s, t)| (src.ids(s), tgt.ids(t)))
        .filter(|(s, t)| fits(s, t))
        .map(|(s, t)| Example::new(SubwordSequence::plain(s), SubwordSequence::plain(t)))
        .collect();
    let key = digest(&[
        pretrain_text.as_bytes(),
        src.vocab.to_text().as_bytes(),
        tgt.bpe.to_merges_text().as_bytes(),
        pre_cfg.to_text().as_bytes(),
    ]);
    let cache_dir = cfg.cache_dir.clone().unwrap_or_else(|| out.join("cache"));
    std::fs::create_dir_all(&cache_dir)?;
    let cached = cache_dir.join(format!("pretrained-{key}.ckpt"));
    let pretrained = if cached.exists() {
        stage("pretrain", load_checkpoint(&cached))?
    } else {
        let m = stage("pretrain", train(&pre_examples, &pre_cfg, TrainMode::Pretrain, None, None))?.model;
        let tmp = cache_dir.join(format!("pretrained-{key}.ckpt.tmp"));
        stage("pretrain", save_checkpoint(&m, &tmp))?;
        std::fs::rename(&tmp, &cached)?;
        m
    };
    stage("pretrain", save_checkpoint(&pretrained, &out.join("pretrained.ckpt")))?;

    // In-domain pairs, split by the run seed.
    let tagged = |words: Vec<String>| match &glossary {
        Some(g) => tag_proper_nouns(&words, g, Side::Target),
        None => TaggedSentence::untagged(words),
    };
    let mut pairs = Vec::new();
    for p in &alignment.pairs {
        let s_words = word_tokens(&classical[p.src], Language::Zh);
        let t_words = word_tokens(&english[p.tgt], Language::En);
        let s_ids = src.ids(&s_words);
        let t_seq = project_spans(&tagged(t_words.clone()), &tgt.bpe, &tgt.vocab);
        if !fits(&s_ids, &t_seq.ids) {
            continue;
        }
        let mut ex = Example::new(SubwordSequence::plain(s_ids), t_seq);
        if let Some(r) = references.get(&p.src) {
            let r_ids = src.ids(&word_tokens(r, Language::Zh));
            if !r_ids.is_empty() && r_ids.len() <= pre_cfg.max_len {
                ex = ex.with_reference(r_ids);
            }
        }
        pairs.push((ex, t_words));
    }
    if pairs.len() < 2 {
        return Err(HarnessError::Stage {
            stage: "align",
            source: Box::new(HarnessError::Data(format!("only {} usable aligned pairs", pairs.len()))),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    pairs.shuffle(&mut rng);
    let n_test = ((pairs.len() as f64 * cfg.test_fraction).round() as usize).clamp(1, pairs.len() - 1);
    let (test, train_pairs) = pairs.split_at(n_test);
    let train_set: Vec<Example> = train_pairs.iter().map(|(e, _)| e.clone()).collect();
    let memory_corpus: Vec<(SubwordSequence, SubwordSequence)> =
        train_set.iter().map(|e| (e.src.clone(), e.tgt.clone())).collect();

    let mut tune_cfg = pre_cfg.clone();
    for (k, v) in &cfg.tune {
        stage("tune", tune_cfg.set(k, v))?;
    }
    tune_cfg.seed = cfg.seed;

    let pretrained_anchors = if cfg.arms.iter().any(|a| a.uses_pnm()) {
        Some(stage("memory", build_memory(&memory_corpus, &pretrained))?.1.anchors().clone())
    } else {
        None
    };

    let mut reports = Vec::new();
    let mut summary = String::new();
    let mut report_lines = String::new();
    for &arm in &cfg.arms {
        let start = Instant::now();
        let mut c = tune_cfg.clone();
        c.use_side = arm.uses_est();
        c.w_est = if arm.uses_est() { cfg.est_weight } else { 0.0 };
        c.w_pnm = if arm.uses_pnm() { cfg.pnm_weight } else { 0.0 };
        let mut init = pretrained.clone();
        init.config.use_side = c.use_side;
        init.config.gate_init = c.gate_init;
        if arm.uses_est() {
            stage("tune", init.init_side(cfg.seed ^ 0x51de))?;
        }
        let anchors = if arm.uses_pnm() { pretrained_anchors.as_ref() } else { None };
        let tuned = stage("tune", train(&train_set, &c, TrainMode::SideTune, Some(init), anchors))?.model;
        let memory = if arm.uses_pnm() {
            Some(stage("memory", build_memory(&memory_corpus, &tuned))?)
        } else {
            None
        };
        let mut hyp_ids = Vec::with_capacity(test.len());
        let mut hyp_words = Vec::with_capacity(test.len());
        let mut hyp_text = String::new();
        for (ex, _) in test {
            let max_len = (2 * ex.src.len() + 10).min(tuned.config.max_len - 1);
            let mem = memory.as_ref().map(|(a, s)| Memory { automaton: a, store: s });
            let out_seq = stage("translate", translate(&tuned, &ex.src.ids, mem, &cfg.retrieval, max_len))?;
            let words = tgt.vocab.decode_words(&out_seq.ids);
            let _ = writeln!(hyp_text, "{}", words.join(" "));
            hyp_words.push(words);
            hyp_ids.push(out_seq.ids);
        }
        let ref_words: Vec<Vec<String>> = test.iter().map(|(_, w)| w.clone()).collect();
        let ref_seqs: Vec<SubwordSequence> = test.iter().map(|(e, _)| e.tgt.clone()).collect();
        let report = stage(
            "evaluate",
            evaluate(&hyp_words, &ref_words, &hyp_ids, &ref_seqs, cfg.smooth_bleu),
        )?;
        std::fs::write(out.join(format!("{}.hyp.txt", arm.name())), hyp_text)?;
        stage("tune", save_checkpoint(&tuned, &out.join(format!("{}.ckpt", arm.name()))))?;
        let wall = start.elapsed().as_secs_f64();
        let rec = ArmReport {
            arm: arm.name().to_string(),
            report,
            wall_time_s: wall,
        };
        let _ = writeln!(
            summary,
            "{}",
            json(&SummaryRecord {
                arm: &rec.arm,
                bleu: rec.report.bleu,
                pna: rec.report.pna,
                wall_time_s: wall,
            })
        );
        let _ = writeln!(report_lines, "{}", json(&rec));
        reports.push(rec);
    }
    std::fs::write(out.join("summary.jsonl"), summary)?;
    std::fs::write(out.join("reports.jsonl"), report_lines)?;
    Ok(reports)
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("records serialise")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arm_names_round_trip() {
        for a in Arm::ALL {
            assert_eq!(a.name().parse::<Arm>().unwrap(), a);
        }
        assert_eq!("est+pnm".parse::<Arm>().unwrap(), Arm::EstPnm);
        assert!("fancy".parse::<Arm>().is_err());
    }

    #[test]
    fn config_parsing() {
        let base = Path::new("/data");
        let c = PipelineConfig::parse(
            "classical = c.txt\narms = baseline, pnm\nmodel.layers = 1\ntune.steps = 7\nretrieval.lambda = 0.5\nfilter_rules = brackets:();literal:x\n",
            base,
        )
        .unwrap();
        assert_eq!(c.classical, Some(PathBuf::from("/data/c.txt")));
        assert_eq!(c.arms, [Arm::Baseline, Arm::Pnm]);
        assert_eq!(c.model.layers, 1);
        assert_eq!(c.tune, [("steps".to_string(), "7".to_string())]);
        assert_eq!(c.retrieval.lambda, 0.5);
        assert_eq!(c.filter_rules.len(), 2);
        assert!(PipelineConfig::parse("bogus = 1", base).is_err());
        assert!(PipelineConfig::parse("tune.bogus = 1", base).is_err());
        assert!(PipelineConfig::parse("arms = best", base).is_err());
    }

    #[test]
    fn missing_glossary_is_config_error() {
        let c = PipelineConfig {
            arms: vec![Arm::Pnm],
            ..PipelineConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let err = run_pipeline_config(&c, dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("glossary"), "{err}");
    }
}
