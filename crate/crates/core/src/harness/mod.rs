//! Evaluation metrics, the synthetic corpus and the end-to-end pipeline.

mod ablation;
mod metrics;
mod pipeline;
mod synth;

pub use ablation::{run_ablation, AblationResult, ArmMedians};
pub use metrics::{bleu, bleu_with, evaluate, pna, EvalReport, PnaScore};
pub use pipeline::{run_pipeline, run_pipeline_config, Arm, ArmReport, PipelineConfig};
pub use synth::{generate, SynthConfig, SynthCorpus, CORPUS_CONFIG};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// 1 for configuration errors, 2 for data errors, 3 for internal errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Data(_) | Self::Argument(_) | Self::Io(_) => 2,
            Self::Internal(_) => 3,
            Self::Stage { source, .. } => source.exit_code(),
        }
    }
}
