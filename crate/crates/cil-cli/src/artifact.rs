//! Persisted experiment results: one JSON artifact per experiment holding
//! every seed's raw output plus redundant aggregate statistics that must
//! stay recomputable from the raw data.

use std::path::{Path, PathBuf};
use std::time::Instant;

use cil_core::engine::{run_stream, RunOutput};
use cil_core::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const ARTIFACT_FILE: &str = "artifact.json";

/// Mean and population standard deviation of a per-seed statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

/// Computes mean and population standard deviation.
pub fn aggregate(values: &[f64]) -> Aggregate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Aggregate {
        mean,
        std: var.sqrt(),
    }
}

/// Aggregate accuracy after learning stage `stage` (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionStat {
    pub stage: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub per_seed_secs: Vec<f64>,
    pub total_secs: f64,
}

/// Everything one experiment produced.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunArtifact {
    pub config: ExperimentConfig,
    /// Raw per-seed outputs, in `config.seeds` order.
    pub runs: Vec<RunOutput>,
    /// Redundant: mean/std of the per-seed final average accuracies.
    pub final_accuracy: Aggregate,
    /// Redundant: per-stage mean/std of the evolution curves.
    pub evolution: Vec<EvolutionStat>,
    pub timing: Timing,
}

impl RunArtifact {
    pub fn from_runs(
        config: ExperimentConfig,
        runs: Vec<RunOutput>,
        timing: Timing,
    ) -> Result<Self> {
        let artifact = RunArtifact {
            final_accuracy: aggregate(&finals(&runs)),
            evolution: evolution_stats(&runs)?,
            config,
            runs,
            timing,
        };
        artifact.validate()?;
        Ok(artifact)
    }

    /// Re-derives every redundant statistic from the raw per-seed outputs
    /// and compares within 1e-9; also re-checks seed bookkeeping and the
    /// per-run metric identities.
    pub fn validate(&self) -> Result<()> {
        if self.runs.len() != self.config.seeds.len() {
            return Err(Error::input(format!(
                "artifact has {} runs but config lists {} seeds",
                self.runs.len(),
                self.config.seeds.len()
            )));
        }
        for (run, &seed) in self.runs.iter().zip(&self.config.seeds) {
            if run.seed != seed {
                return Err(Error::input(format!(
                    "run recorded seed {} where config expects {seed}",
                    run.seed
                )));
            }
            let recomputed = run.matrix.final_average_accuracy()?;
            if (recomputed - run.final_average).abs() > 1e-12 {
                return Err(Error::input(format!(
                    "seed {seed}: stored final average {} disagrees with its matrix ({recomputed})",
                    run.final_average
                )));
            }
            if run.evolution != run.matrix.evolution_curve() {
                return Err(Error::input(format!(
                    "seed {seed}: stored evolution curve disagrees with its matrix"
                )));
            }
        }
        let agg = aggregate(&finals(&self.runs));
        if (agg.mean - self.final_accuracy.mean).abs() > 1e-9
            || (agg.std - self.final_accuracy.std).abs() > 1e-9
        {
            return Err(Error::input(format!(
                "aggregate accuracy {:?} not recomputable from per-seed data ({agg:?})",
                self.final_accuracy
            )));
        }
        let evo = evolution_stats(&self.runs)?;
        if evo.len() != self.evolution.len() {
            return Err(Error::input("evolution aggregate has wrong length"));
        }
        for (stored, fresh) in self.evolution.iter().zip(&evo) {
            if stored.stage != fresh.stage
                || (stored.mean - fresh.mean).abs() > 1e-9
                || (stored.std - fresh.std).abs() > 1e-9
            {
                return Err(Error::input(format!(
                    "evolution stage {}: stored {stored:?} vs recomputed {fresh:?}",
                    stored.stage
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::input(format!("artifact not serializable: {e}")))?;
        text.push('\n');
        std::fs::write(dir.join(ARTIFACT_FILE), text)?;
        Ok(())
    }

    /// Loads and re-validates an artifact directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(ARTIFACT_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::input(format!("cannot read artifact {}: {e}", path.display())))?;
        let artifact: RunArtifact = serde_json::from_str(&text)
            .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        artifact.validate()?;
        Ok(artifact)
    }
}

fn finals(runs: &[RunOutput]) -> Vec<f64> {
    runs.iter().map(|r| r.final_average).collect()
}

fn evolution_stats(runs: &[RunOutput]) -> Result<Vec<EvolutionStat>> {
    let t = runs
        .first()
        .map(|r| r.evolution.len())
        .ok_or_else(|| Error::input("artifact holds no runs"))?;
    if runs.iter().any(|r| r.evolution.len() != t) {
        return Err(Error::input("runs disagree on stream length"));
    }
    Ok((0..t)
        .map(|i| {
            let vals: Vec<f64> = runs.iter().map(|r| r.evolution[i]).collect();
            let agg = aggregate(&vals);
            EvolutionStat {
                stage: i + 1,
                mean: agg.mean,
                std: agg.std,
            }
        })
        .collect())
}

/// Runs every seed of an experiment (in parallel when cores allow) and
/// writes the artifact under `output_root/<name>`.
pub fn run_experiment(config: &ExperimentConfig, base: &Path) -> Result<PathBuf> {
    config.validate()?;
    let stream = config.stream.build(base)?;
    let total = Instant::now();
    let results: Vec<Result<(RunOutput, f64)>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let start = Instant::now();
            let out = run_stream(&stream, &config.run_config(seed))?;
            Ok((out, start.elapsed().as_secs_f64()))
        })
        .collect();
    let mut runs = Vec::with_capacity(results.len());
    let mut per_seed_secs = Vec::with_capacity(results.len());
    for result in results {
        let (out, secs) = result?;
        runs.push(out);
        per_seed_secs.push(secs);
    }
    let timing = Timing {
        per_seed_secs,
        total_secs: total.elapsed().as_secs_f64(),
    };
    let artifact = RunArtifact::from_runs(config.clone(), runs, timing)?;
    let dir = config.output_root(base).join(&config.name);
    artifact.save(&dir)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_matches_hand_arithmetic() {
        let agg = aggregate(&[0.2, 0.4, 0.9]);
        assert!((agg.mean - 0.5).abs() < 1e-15);
        // population std of {0.2, 0.4, 0.9}: sqrt(((0.3)^2+(0.1)^2+(0.4)^2)/3)
        let expect = (0.26f64 / 3.0).sqrt();
        assert!((agg.std - expect).abs() < 1e-15, "{} vs {expect}", agg.std);
    }

    #[test]
    fn single_value_aggregate_has_zero_std() {
        let agg = aggregate(&[0.7]);
        assert_eq!(agg.mean, 0.7);
        assert_eq!(agg.std, 0.0);
    }
}
