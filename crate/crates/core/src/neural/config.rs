use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::NeuralError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl FromStr for Optimizer {
    type Err = NeuralError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            other => Err(NeuralError::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

impl std::fmt::Display for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sgd => "sgd",
            Self::Adam => "adam",
        })
    }
}

/// Model shape and training hyper-parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ffn: usize,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub max_len: usize,
    pub side_scale: usize,
    pub warmup_steps: usize,
    pub base_lr: f64,
    pub w_ce: f64,
    pub w_est: f64,
    pub w_pnm: f64,
    pub seed: u64,
    /// Initial gate logit; large values start the tuned encoder at the backbone.
    pub gate_init: f64,
    /// Whether the side encoder is used at all (the plain backbone otherwise).
    pub use_side: bool,
    /// Whether decoder parameters are updated during side tuning.
    pub tune_decoder: bool,
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub steps: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::toy(64, 64)
    }
}

impl ModelConfig {
    /// Small enough for finite-difference checks to run in seconds.
    pub fn toy(src_vocab: usize, tgt_vocab: usize) -> Self {
        Self {
            layers: 2,
            heads: 2,
            d_model: 32,
            d_ffn: 64,
            src_vocab,
            tgt_vocab,
            max_len: 64,
            side_scale: 4,
            warmup_steps: 200,
            base_lr: 0.5,
            w_ce: 1.0,
            w_est: 0.0,
            w_pnm: 0.0,
            seed: 0,
            gate_init: 3.0,
            use_side: false,
            tune_decoder: true,
            optimizer: Optimizer::Sgd,
            batch_size: 8,
            steps: 500,
            clip_norm: 1.0,
        }
    }

    pub fn paper(src_vocab: usize, tgt_vocab: usize) -> Self {
        Self {
            layers: 6,
            heads: 8,
            d_model: 512,
            d_ffn: 2048,
            max_len: 256,
            warmup_steps: 4000,
            base_lr: 512f64.powf(-0.5),
            batch_size: 64,
            steps: 100_000,
            ..Self::toy(src_vocab, tgt_vocab)
        }
    }

    pub fn side_width(&self) -> usize {
        self.d_model / self.side_scale
    }

    pub fn side_ffn(&self) -> usize {
        (self.d_ffn / self.side_scale).max(1)
    }

    /// Side blocks keep the backbone head count when the width allows it.
    pub fn side_heads(&self) -> usize {
        if self.side_width().is_multiple_of(self.heads) {
            self.heads
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let fail = |m: &str| Err(NeuralError::Config(m.to_string()));
        if self.heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.heads) {
            return fail("d_model must be a positive multiple of heads");
        }
        if self.side_scale == 0 || !self.d_model.is_multiple_of(self.side_scale) {
            return fail("d_model / side_scale must be a positive integer");
        }
        if self.d_ffn == 0 || self.max_len == 0 {
            return fail("d_ffn and max_len must be positive");
        }
        if self.src_vocab < 5 || self.tgt_vocab < 5 {
            return fail("vocabularies need the special tokens plus at least one word");
        }
        if [self.w_ce, self.w_est, self.w_pnm].iter().any(|w| !(*w >= 0.0)) {
            return fail("loss weights must be non-negative");
        }
        if !(self.base_lr > 0.0) || self.warmup_steps == 0 {
            return fail("base_lr and warmup_steps must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if !(self.clip_norm >= 0.0) || !self.gate_init.is_finite() {
            return fail("clip_norm must be non-negative and gate_init finite");
        }
        Ok(())
    }

    /// `key = value` lines covering every field.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    fn fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("layers", self.layers.to_string()),
            ("heads", self.heads.to_string()),
            ("d_model", self.d_model.to_string()),
            ("d_ffn", self.d_ffn.to_string()),
            ("src_vocab", self.src_vocab.to_string()),
            ("tgt_vocab", self.tgt_vocab.to_string()),
            ("max_len", self.max_len.to_string()),
            ("side_scale", self.side_scale.to_string()),
            ("warmup_steps", self.warmup_steps.to_string()),
            ("base_lr", format!("{:?}", self.base_lr)),
            ("w_ce", format!("{:?}", self.w_ce)),
            ("w_est", format!("{:?}", self.w_est)),
            ("w_pnm", format!("{:?}", self.w_pnm)),
            ("seed", self.seed.to_string()),
            ("gate_init", format!("{:?}", self.gate_init)),
            ("use_side", self.use_side.to_string()),
            ("tune_decoder", self.tune_decoder.to_string()),
            ("optimizer", self.optimizer.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("steps", self.steps.to_string()),
            ("clip_norm", format!("{:?}", self.clip_norm)),
        ]
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), NeuralError> {
        fn p<T: FromStr>(key: &str, value: &str) -> Result<T, NeuralError> {
            value
                .parse()
                .map_err(|_| NeuralError::Config(format!("bad value {value:?} for {key}")))
        }
        match key {
            "layers" => self.layers = p(key, value)?,
            "heads" => self.heads = p(key, value)?,
            "d_model" => self.d_model = p(key, value)?,
            "d_ffn" => self.d_ffn = p(key, value)?,
            "src_vocab" => self.src_vocab = p(key, value)?,
            "tgt_vocab" => self.tgt_vocab = p(key, value)?,
            "max_len" => self.max_len = p(key, value)?,
            "side_scale" => self.side_scale = p(key, value)?,
            "warmup_steps" => self.warmup_steps = p(key, value)?,
            "base_lr" => self.base_lr = p(key, value)?,
            "w_ce" => self.w_ce = p(key, value)?,
            "w_est" => self.w_est = p(key, value)?,
            "w_pnm" => self.w_pnm = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "gate_init" => self.gate_init = p(key, value)?,
            "use_side" => self.use_side = p(key, value)?,
            "tune_decoder" => self.tune_decoder = p(key, value)?,
            "optimizer" => self.optimizer = value.parse()?,
            "batch_size" => self.batch_size = p(key, value)?,
            "steps" => self.steps = p(key, value)?,
            "clip_norm" => self.clip_norm = p(key, value)?,
            _ => return Err(NeuralError::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines (with `#` comments) on top of `self`.
    pub fn apply_text(mut self, text: &str) -> Result<Self, NeuralError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| NeuralError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn parse(text: &str) -> Result<Self, NeuralError> {
        Self::default().apply_text(text)
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = ModelConfig::paper(1000, 900);
        c.base_lr = 0.1 + 0.2;
        c.optimizer = Optimizer::Adam;
        assert_eq!(ModelConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn presets() {
        let t = ModelConfig::toy(100, 100);
        assert_eq!((t.layers, t.heads, t.d_model, t.d_ffn, t.side_width()), (2, 2, 32, 64, 8));
        let p = ModelConfig::paper(100, 100);
        assert_eq!((p.layers, p.heads, p.d_model, p.d_ffn, p.side_width()), (6, 8, 512, 2048, 128));
        assert_eq!(p.warmup_steps, 4000);
        t.validate().unwrap();
        p.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ModelConfig::parse("heads = 3").is_err());
        assert!(ModelConfig::parse("side_scale = 5").is_err());
        assert!(ModelConfig::parse("w_est = -1").is_err());
        assert!(ModelConfig::parse("colour = blue").is_err());
        assert!(ModelConfig::parse("layers").is_err());
        assert_eq!(ModelConfig::parse("layers = 3 # deeper").unwrap().layers, 3);
    }
}
