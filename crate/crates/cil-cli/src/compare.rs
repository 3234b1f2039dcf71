//! Paired cross-experiment comparison: per-seed accuracy deltas against the
//! first artifact, with summary statistics and sign counts.

use std::path::Path;

use cil_core::{Error, Result};

use crate::artifact::{aggregate, RunArtifact};
use crate::report::fmt_exact;

/// Loads the artifact directories and renders the paired-comparison CSV.
/// The first directory is the baseline.
pub fn compare_dirs(dirs: &[impl AsRef<Path>]) -> Result<String> {
    if dirs.len() < 2 {
        return Err(Error::usage(
            "compare needs at least two artifact directories",
        ));
    }
    let mut artifacts = Vec::with_capacity(dirs.len());
    for dir in dirs {
        artifacts.push(RunArtifact::load(dir.as_ref())?);
    }
    compare(&artifacts)
}

/// Paired comparison over already-loaded artifacts (first = baseline).
/// All artifacts must share the seed list and the stream spec.
pub fn compare(artifacts: &[RunArtifact]) -> Result<String> {
    let base = &artifacts[0];
    for a in &artifacts[1..] {
        if a.config.seeds != base.config.seeds {
            return Err(Error::input(format!(
                "'{}' and '{}' ran different seeds; paired comparison needs shared seeds",
                base.config.name, a.config.name
            )));
        }
        if a.config.stream != base.config.stream {
            return Err(Error::input(format!(
                "'{}' and '{}' ran different streams",
                base.config.name, a.config.name
            )));
        }
    }
    let mut names = std::collections::BTreeSet::new();
    for a in artifacts {
        if !names.insert(&a.config.name) {
            return Err(Error::input(format!(
                "duplicate experiment name '{}' makes columns ambiguous",
                a.config.name
            )));
        }
    }

    let others = &artifacts[1..];
    let mut out = String::from("seed");
    for a in artifacts {
        out.push_str(&format!(",{}", a.config.name));
    }
    for a in others {
        out.push_str(&format!(",delta_{}", a.config.name));
    }
    out.push('\n');

    let n = base.config.seeds.len();
    let mut deltas: Vec<Vec<f64>> = vec![Vec::with_capacity(n); others.len()];
    for (i, &seed) in base.config.seeds.iter().enumerate() {
        out.push_str(&seed.to_string());
        for a in artifacts {
            out.push_str(&format!(",{}", fmt_exact(a.runs[i].final_average)));
        }
        for (k, a) in others.iter().enumerate() {
            let delta = a.runs[i].final_average - base.runs[i].final_average;
            deltas[k].push(delta);
            out.push_str(&format!(",{}", fmt_exact(delta)));
        }
        out.push('\n');
    }

    // summary block: mean/std per column, then delta sign counts
    out.push_str("mean");
    for a in artifacts {
        out.push_str(&format!(",{}", fmt_exact(a.final_accuracy.mean)));
    }
    for d in &deltas {
        out.push_str(&format!(",{}", fmt_exact(aggregate(d).mean)));
    }
    out.push('\n');
    out.push_str("std");
    for a in artifacts {
        out.push_str(&format!(",{}", fmt_exact(a.final_accuracy.std)));
    }
    for d in &deltas {
        out.push_str(&format!(",{}", fmt_exact(aggregate(d).std)));
    }
    out.push('\n');
    for (label, sign) in [
        ("positive_deltas", 1i8),
        ("negative_deltas", -1i8),
        ("zero_deltas", 0i8),
    ] {
        out.push_str(label);
        for _ in artifacts {
            out.push(',');
        }
        for d in &deltas {
            let count = d
                .iter()
                .filter(|v| match sign {
                    1 => **v > 0.0,
                    -1 => **v < 0.0,
                    _ => **v == 0.0,
                })
                .count();
            out.push_str(&format!(",{count}"));
        }
        out.push('\n');
    }
    Ok(out)
}
