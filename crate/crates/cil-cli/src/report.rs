//! CSV tables and SVG charts from stored artifacts.
//!
//! CSV dialect: comma-separated, header row, '.' decimal point, UTF-8, LF
//! line endings. Floats print in shortest round-trip form so every cell can
//! be parsed back to the exact stored aggregate.

use std::path::{Path, PathBuf};

use cil_core::{Error, Result};

use crate::artifact::{RunArtifact, ARTIFACT_FILE};
use crate::svg::{line_chart, Series};

/// Shortest decimal that parses back to exactly `v`.
pub fn fmt_exact(v: f64) -> String {
    format!("{v}")
}

/// One `experiment,method,memory,mean,std` row per artifact.
pub fn accuracy_csv(artifacts: &[&RunArtifact]) -> String {
    let mut out = String::from("experiment,method,memory,mean,std\n");
    for a in artifacts {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            a.config.name,
            a.config.method,
            a.config.memory,
            fmt_exact(a.final_accuracy.mean),
            fmt_exact(a.final_accuracy.std),
        ));
    }
    out
}

/// `stage,mean,std` rows for one artifact's evolution curve.
pub fn evolution_csv(artifact: &RunArtifact) -> String {
    let mut out = String::from("stage,mean,std\n");
    for stat in &artifact.evolution {
        out.push_str(&format!(
            "{},{},{}\n",
            stat.stage,
            fmt_exact(stat.mean),
            fmt_exact(stat.std),
        ));
    }
    out
}

fn chart_series(artifact: &RunArtifact) -> Series {
    Series {
        label: artifact.config.name.clone(),
        mean: artifact.evolution.iter().map(|s| s.mean).collect(),
        std: artifact.evolution.iter().map(|s| s.std).collect(),
    }
}

fn write(path: &Path, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(path, text)?;
    written.push(path.to_path_buf());
    Ok(())
}

fn report_one(dir: &Path, artifact: &RunArtifact, written: &mut Vec<PathBuf>) -> Result<()> {
    write(
        &dir.join("accuracy.csv"),
        &accuracy_csv(&[artifact]),
        written,
    )?;
    write(
        &dir.join("evolution.csv"),
        &evolution_csv(artifact),
        written,
    )?;
    let chart = line_chart(&artifact.config.name, &[chart_series(artifact)]);
    write(&dir.join("chart.svg"), &chart, written)
}

/// Emits reports for `dir`: either a single artifact directory, or a root
/// whose immediate subdirectories hold artifacts — then each gets its own
/// report plus a combined table and chart at the root. Returns the files
/// written.
pub fn report(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if dir.join(ARTIFACT_FILE).is_file() {
        let artifact = RunArtifact::load(dir)?;
        report_one(dir, &artifact, &mut written)?;
        return Ok(written);
    }

    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::input(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.join(ARTIFACT_FILE).is_file())
        .collect();
    subdirs.sort();
    if subdirs.is_empty() {
        return Err(Error::input(format!(
            "no {ARTIFACT_FILE} under {} or its immediate subdirectories",
            dir.display()
        )));
    }

    let mut artifacts = Vec::with_capacity(subdirs.len());
    for sub in &subdirs {
        artifacts.push(RunArtifact::load(sub)?);
    }
    for (sub, artifact) in subdirs.iter().zip(&artifacts) {
        report_one(sub, artifact, &mut written)?;
    }
    let refs: Vec<&RunArtifact> = artifacts.iter().collect();
    write(
        &dir.join("accuracy.csv"),
        &accuracy_csv(&refs),
        &mut written,
    )?;
    let series: Vec<Series> = artifacts.iter().map(chart_series).collect();
    let title = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiments".to_string());
    write(
        &dir.join("chart.svg"),
        &line_chart(&title, &series),
        &mut written,
    )?;
    Ok(written)
}
