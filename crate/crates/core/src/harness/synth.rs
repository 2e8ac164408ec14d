//! Synthetic parallel corpus with a classical/vernacular gap and rare
//! proper nouns.
//!
//! A fixed "language" (chosen by `language_seed`) maps concepts to one CJK
//! character each and to English words built from syllables; a small set of
//! transliteration characters spells names. The general-domain pre-training
//! corpus is vernacular text with particles that have no English
//! counterpart and a handful of general names. The in-domain corpus (chosen
//! by `seed`) adds a glossary of proper nouns absent from pre-training and a
//! classical variant that drops particles and writes some concepts with the
//! character of a different concept.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::HarnessError;
use crate::alignment::EmbeddingTable;
use crate::textprep::{Category, Glossary, GlossaryEntry};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub language_seed: u64,
    pub seed: u64,
    pub concepts: usize,
    pub particles: usize,
    pub translit_chars: usize,
    pub general_names: usize,
    pub glossary_terms: usize,
    pub pretrain_pairs: usize,
    pub domain_pairs: usize,
    pub min_concepts: usize,
    pub max_concepts: usize,
    /// Chance that an in-domain sentence mentions a glossary term.
    pub pn_rate: f64,
    /// Chance that a pre-training sentence mentions a general name.
    pub name_rate: f64,
    /// Fraction of concepts written with another concept's character in
    /// classical text.
    pub shift_fraction: f64,
    pub particle_rate: f64,
    pub annotation_rate: f64,
    pub commentary_rate: f64,
    pub embed_dim: usize,
    pub embed_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            language_seed: 0,
            seed: 0,
            concepts: 120,
            particles: 6,
            translit_chars: 24,
            general_names: 30,
            glossary_terms: 20,
            pretrain_pairs: 3000,
            domain_pairs: 1200,
            min_concepts: 5,
            max_concepts: 8,
            pn_rate: 0.4,
            name_rate: 0.3,
            shift_fraction: 0.35,
            particle_rate: 0.3,
            annotation_rate: 0.1,
            commentary_rate: 0.05,
            embed_dim: 16,
            embed_noise: 0.25,
        }
    }
}

const ONSETS: [&str; 14] = ["k", "t", "p", "m", "n", "s", "r", "l", "v", "d", "g", "b", "h", "sh"];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];

struct Name {
    source: Vec<char>,
    english: String,
}

struct Language {
    concept_chars: Vec<char>,
    concept_words: Vec<String>,
    article: Vec<bool>,
    particles: Vec<char>,
    translit: Vec<char>,
    names: Vec<Name>,
}

fn syllable_word(rng: &mut impl Rng, syllables: std::ops::RangeInclusive<usize>) -> String {
    let n = rng.gen_range(syllables);
    (0..n)
        .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
        .collect()
}

fn fresh_word(rng: &mut impl Rng, used: &mut HashSet<String>, syllables: std::ops::RangeInclusive<usize>) -> String {
    loop {
        let w = syllable_word(rng, syllables.clone());
        if w != "the" && used.insert(w.clone()) {
            return w;
        }
    }
}

fn name_source(rng: &mut impl Rng, translit: &[char], used: &mut HashSet<Vec<char>>) -> Vec<char> {
    loop {
        let n = rng.gen_range(2..=3);
        let s: Vec<char> = (0..n).map(|_| *translit.choose(rng).unwrap()).collect();
        if used.insert(s.clone()) {
            return s;
        }
    }
}

impl Language {
    fn new(c: &SynthConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(c.language_seed);
        let total = c.concepts + c.particles + c.translit_chars;
        let mut chars = BTreeSet::new();
        let mut order = Vec::new();
        while order.len() < total {
            let ch = char::from_u32(rng.gen_range(0x4E00..0x9FA5)).unwrap();
            if chars.insert(ch) {
                order.push(ch);
            }
        }
        let concept_chars = order[..c.concepts].to_vec();
        let particles = order[c.concepts..c.concepts + c.particles].to_vec();
        let translit = order[c.concepts + c.particles..].to_vec();
        let mut used = HashSet::new();
        let concept_words = (0..c.concepts).map(|_| fresh_word(&mut rng, &mut used, 1..=2)).collect();
        let article = (0..c.concepts).map(|_| rng.gen_bool(0.3)).collect();
        let mut sources = HashSet::new();
        let names = (0..c.general_names)
            .map(|_| Name {
                source: name_source(&mut rng, &translit, &mut sources),
                english: fresh_word(&mut rng, &mut used, 2..=3),
            })
            .collect();
        Self {
            concept_chars,
            concept_words,
            article,
            particles,
            translit,
            names,
        }
    }
}

/// One sentence as parallel token lists before rendering.
struct Sentence {
    vernacular: Vec<char>,
    classical: Vec<char>,
    english: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    /// `(vernacular, english)` general-domain sentence pairs.
    pub pretrain: Vec<(String, String)>,
    pub classical_doc: String,
    pub vernacular_doc: String,
    pub english_doc: String,
    pub classical_embeddings: EmbeddingTable,
    pub vernacular_embeddings: EmbeddingTable,
    pub english_embeddings: EmbeddingTable,
    pub glossary: Glossary,
    /// `(classical sentence, english sentence)` indices of true pairs.
    pub truth: Vec<(usize, usize)>,
}

pub fn generate(c: &SynthConfig) -> Result<SynthCorpus, HarnessError> {
    if c.min_concepts == 0 || c.min_concepts > c.max_concepts || c.concepts < 2 || c.translit_chars < 2 {
        return Err(HarnessError::Config("synthetic corpus sizes are inconsistent".into()));
    }
    let lang = Language::new(c);
    let mut rng = ChaCha8Rng::seed_from_u64(c.language_seed.wrapping_mul(0x9e37_79b9).wrapping_add(1));

    let sentence = |rng: &mut ChaCha8Rng, shift: &[usize], name: Option<(&[char], &str)>| -> Sentence {
        let n = rng.gen_range(c.min_concepts..=c.max_concepts);
        let name_at = rng.gen_range(0..=n);
        let mut s = Sentence {
            vernacular: Vec::new(),
            classical: Vec::new(),
            english: Vec::new(),
        };
        for i in 0..=n {
            if i == name_at {
                if let Some((src, en)) = name {
                    s.vernacular.extend(src);
                    s.classical.extend(src);
                    s.english.push(en.to_string());
                }
            }
            if i == n {
                break;
            }
            let k = rng.gen_range(0..lang.concept_chars.len());
            s.vernacular.push(lang.concept_chars[k]);
            s.classical.push(lang.concept_chars[shift[k]]);
            if lang.article[k] {
                s.english.push("the".into());
            }
            s.english.push(lang.concept_words[k].clone());
            if rng.gen_bool(c.particle_rate) {
                s.vernacular.push(*lang.particles.choose(rng).unwrap());
            }
        }
        s
    };

    let identity: Vec<usize> = (0..c.concepts).collect();
    let render_en = |words: &[String]| format!("{}.", words.join(" "));
    let render_zh = |chars: &[char]| format!("{}。", chars.iter().collect::<String>());

    let pretrain = (0..c.pretrain_pairs)
        .map(|_| {
            let name = rng
                .gen_bool(c.name_rate)
                .then(|| lang.names.choose(&mut rng).unwrap())
                .map(|n| (n.source.as_slice(), n.english.as_str()));
            let s = sentence(&mut rng, &identity, name);
            (render_zh(&s.vernacular), render_en(&s.english))
        })
        .collect();

    // In-domain material depends on the run seed.
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed ^ 0xd0_4a11);
    let mut used_words: HashSet<String> = lang.concept_words.iter().cloned().collect();
    used_words.extend(lang.names.iter().map(|n| n.english.clone()));
    let mut used_sources: HashSet<Vec<char>> = lang.names.iter().map(|n| n.source.clone()).collect();
    let terms: Vec<Name> = (0..c.glossary_terms)
        .map(|_| Name {
            source: name_source(&mut rng, &lang.translit, &mut used_sources),
            english: fresh_word(&mut rng, &mut used_words, 3..=3),
        })
        .collect();
    let glossary = Glossary::new(
        terms
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let src: Vec<String> = t.source.iter().map(|ch| ch.to_string()).collect();
                GlossaryEntry {
                    source_forms: vec![src],
                    target_form: vec![t.english.clone()],
                    category: Category::ALL[i % Category::ALL.len()],
                }
            })
            .collect(),
    )
    .map_err(|e| HarnessError::Internal(e.to_string()))?;

    let mut shift = identity.clone();
    let shifted = ((c.concepts as f64 * c.shift_fraction).round() as usize).min(c.concepts);
    if shifted >= 2 {
        let mut chosen: Vec<usize> = identity.clone();
        chosen.shuffle(&mut rng);
        chosen.truncate(shifted);
        // A cyclic rotation of the chosen concepts: no concept keeps its character.
        for (i, &k) in chosen.iter().enumerate() {
            shift[k] = chosen[(i + 1) % chosen.len()];
        }
    }

    let normal = Normal::new(0.0, 1.0).unwrap();
    let noise = Normal::new(0.0, c.embed_noise.max(1e-12)).unwrap();
    let vec_near = |rng: &mut ChaCha8Rng, m: &[f64]| -> Vec<f64> { m.iter().map(|x| x + noise.sample(rng)).collect() };

    let (mut classical_doc, mut vernacular_doc, mut english_doc) = (String::new(), String::new(), String::new());
    let (mut ce, mut ve, mut ee) = (Vec::new(), Vec::new(), Vec::new());
    let mut truth = Vec::new();
    for i in 0..c.domain_pairs {
        if rng.gen_bool(c.commentary_rate) {
            let filler = sentence(&mut rng, &identity, None);
            english_doc.push_str(&render_en(&filler.english));
            english_doc.push(' ');
            ee.push((0..c.embed_dim).map(|_| normal.sample(&mut rng)).collect::<Vec<f64>>());
        }
        let term = rng.gen_bool(c.pn_rate).then(|| terms.choose(&mut rng).unwrap());
        let s = sentence(&mut rng, &shift, term.map(|t| (t.source.as_slice(), t.english.as_str())));
        let meaning: Vec<f64> = (0..c.embed_dim).map(|_| normal.sample(&mut rng)).collect();
        let mut classical = s.classical.iter().collect::<String>();
        if rng.gen_bool(c.annotation_rate) {
            let note: String = (0..3).map(|_| *lang.concept_chars.choose(&mut rng).unwrap()).collect();
            let _ = write!(classical, "（{note}）");
        }
        classical.push('。');
        classical_doc.push_str(&classical);
        vernacular_doc.push_str(&render_zh(&s.vernacular));
        truth.push((i, ee.len()));
        english_doc.push_str(&render_en(&s.english));
        english_doc.push(' ');
        ce.push(vec_near(&mut rng, &meaning));
        ve.push(vec_near(&mut rng, &meaning));
        ee.push(vec_near(&mut rng, &meaning));
    }
    let table = |v| EmbeddingTable::new(v).map_err(|e| HarnessError::Internal(e.to_string()));
    Ok(SynthCorpus {
        pretrain,
        classical_doc,
        vernacular_doc,
        english_doc: english_doc.trim_end().to_string(),
        classical_embeddings: table(ce)?,
        vernacular_embeddings: table(ve)?,
        english_embeddings: table(ee)?,
        glossary,
        truth,
    })
}

impl SynthCorpus {
    /// Writes the corpus files and a pipeline configuration naming them.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        let pretrain: String = self.pretrain.iter().map(|(s, t)| format!("{s}\t{t}\n")).collect();
        let files = [
            ("pretrain.tsv", pretrain),
            ("classical.txt", self.classical_doc.clone()),
            ("vernacular.txt", self.vernacular_doc.clone()),
            ("english.txt", self.english_doc.clone()),
            ("classical.emb", self.classical_embeddings.to_text()),
            ("vernacular.emb", self.vernacular_embeddings.to_text()),
            ("english.emb", self.english_embeddings.to_text()),
            ("glossary.tsv", self.glossary.to_tsv()),
            ("pipeline.conf", CORPUS_CONFIG.to_string()),
            (
                "truth.tsv",
                self.truth.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect(),
            ),
        ];
        for (name, text) in files {
            std::fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}

/// Pipeline configuration for a corpus written by [`SynthCorpus::write`],
/// saved alongside it as `pipeline.conf`.
pub const CORPUS_CONFIG: &str = "\
pretrain_corpus = pretrain.tsv
classical = classical.txt
vernacular = vernacular.txt
english = english.txt
classical_embeddings = classical.emb
vernacular_embeddings = vernacular.emb
english_embeddings = english.emb
glossary = glossary.tsv
filter_rules = brackets:（）
model.optimizer = adam
model.base_lr = 0.1
model.warmup_steps = 200
model.steps = 2000
model.batch_size = 16
tune.base_lr = 0.05
tune.warmup_steps = 50
tune.steps = 400
tune.gate_init = 1
est_weight = 1
pnm_weight = 0.1
";
