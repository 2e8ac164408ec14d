//! The four-arm experiment repeated over several synthetic corpora.

use std::path::Path;

use serde::Serialize;

use super::pipeline::{run_pipeline_config, Arm, ArmReport, PipelineConfig};
use super::synth::{generate, SynthConfig, CORPUS_CONFIG};
use super::HarnessError;

#[derive(Clone, Debug, Serialize)]
pub struct ArmMedians {
    pub arm: String,
    pub bleu: f64,
    pub pna: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationResult {
    pub seeds: Vec<u64>,
    /// One report per arm (in [`Arm::ALL`] order) for every seed.
    pub runs: Vec<Vec<ArmReport>>,
    pub medians: Vec<ArmMedians>,
    /// Seeds on which the combined arm is at least as good as every other
    /// arm on both metrics.
    pub combined_best: usize,
    pub wall_time_s: f64,
}

impl AblationResult {
    pub fn median(&self, arm: Arm) -> &ArmMedians {
        &self.medians[Arm::ALL.iter().position(|&a| a == arm).expect("known arm")]
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    (v[(n - 1) / 2] + v[n / 2]) / 2.0
}

/// Generates one corpus per seed under `root/seed-<s>`, runs every arm on it
/// and shares the pre-trained backbone through `root/cache`.
pub fn run_ablation(seeds: &[u64], base: &SynthConfig, root: &Path) -> Result<AblationResult, HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::Argument("no seeds".into()));
    }
    let start = std::time::Instant::now();
    let cache = root.join("cache");
    let mut runs = Vec::new();
    for &seed in seeds {
        let dir = root.join(format!("seed-{seed}"));
        generate(&SynthConfig { seed, ..base.clone() })?.write(&dir)?;
        let mut cfg = PipelineConfig::parse(CORPUS_CONFIG, &dir)?;
        cfg.seed = seed;
        cfg.arms = Arm::ALL.to_vec();
        cfg.cache_dir = Some(cache.clone());
        runs.push(run_pipeline_config(&cfg, &dir.join("out"))?);
    }
    let medians = Arm::ALL
        .iter()
        .enumerate()
        .map(|(i, arm)| ArmMedians {
            arm: arm.name().to_string(),
            bleu: median(runs.iter().map(|r| r[i].report.bleu).collect()),
            pna: median(runs.iter().map(|r| r[i].report.pna.unwrap_or(0.0)).collect()),
        })
        .collect();
    let combined = Arm::ALL.iter().position(|&a| a == Arm::EstPnm).expect("known arm");
    let combined_best = runs
        .iter()
        .filter(|r| {
            let best = &r[combined].report;
            r.iter().all(|o| best.bleu >= o.report.bleu && best.pna.unwrap_or(0.0) >= o.report.pna.unwrap_or(0.0))
        })
        .count();
    Ok(AblationResult {
        seeds: seeds.to_vec(),
        runs,
        medians,
        combined_best,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
