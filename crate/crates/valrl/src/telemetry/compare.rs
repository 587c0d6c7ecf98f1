//! Overlaying new runs on the shipped baselines.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::{aggregate, render_csv, render_svg, Band, ExperimentLog, GroupCurve, Metric, RunSet, TelemetryError, LOG_FILE};

/// Share of the final iterations averaged in the summary table.
pub const FINAL_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub group: String,
    pub runs: usize,
    pub iterations: usize,
    /// Mean of the curve over its final `FINAL_FRACTION` of iterations
    /// (at least one).
    pub final_mean: f64,
}

/// Expands glob patterns to logs. A matched directory stands for its
/// `log.bin`. Results are sorted by path and deduplicated.
pub fn load_logs<S: AsRef<str>>(patterns: &[S]) -> Result<Vec<ExperimentLog>, TelemetryError> {
    let mut paths = BTreeSet::new();
    for pattern in patterns {
        let pattern = pattern.as_ref();
        let matches = glob::glob(pattern).map_err(|e| TelemetryError::Usage(format!("bad pattern `{pattern}`: {e}")))?;
        for entry in matches {
            let path = entry.map_err(|e| TelemetryError::io(e.path(), std::io::Error::other(e.to_string())))?;
            let path = if path.is_dir() { path.join(LOG_FILE) } else { path };
            if path.is_file() {
                paths.insert(path);
            }
        }
    }
    paths.iter().map(|p| ExperimentLog::read(p)).collect()
}

fn final_mean(curve: &GroupCurve) -> f64 {
    let n = curve.points.len();
    let tail = ((n as f64 * FINAL_FRACTION).ceil() as usize).clamp(1, n.max(1));
    let points = &curve.points[n.saturating_sub(tail)..];
    if points.is_empty() {
        return f64::NAN;
    }
    points.iter().map(|p| p.mean).sum::<f64>() / points.len() as f64
}

fn baseline_logs(dir: &Path) -> Result<Vec<ExperimentLog>, TelemetryError> {
    let pattern = dir.join("**").join(LOG_FILE);
    load_logs(&[pattern.to_string_lossy()])
}

/// Writes `curves.csv`, `plot.svg` and `summary.csv` into `out_dir` and
/// returns the summary rows, one per group. Baselines are grouped as
/// `baseline/<agent>` and restricted to the environments of the new runs
/// when any match; otherwise every baseline is plotted with a warning.
pub fn compare_against_baseline(
    new_runs: &RunSet,
    baseline_dir: &Path,
    metric: Metric,
    band: Band,
    out_dir: &Path,
) -> Result<Vec<ComparisonRow>, TelemetryError> {
    if new_runs.is_empty() {
        return Err(TelemetryError::NoGroups);
    }
    let envs: BTreeSet<&str> = new_runs.groups.iter().flat_map(|g| g.runs.iter().map(|r| r.header.environment.as_str())).collect();
    let baselines = baseline_logs(baseline_dir)?;
    let matching = baselines.iter().any(|b| envs.contains(b.header.environment.as_str()));
    if !matching {
        log::warn!("no baseline in {} matches environment(s) {:?}; plotting all baselines", baseline_dir.display(), envs);
    }
    let mut combined = new_runs.clone();
    for log in baselines {
        if matching && !envs.contains(log.header.environment.as_str()) {
            continue;
        }
        let group = format!("baseline/{}", log.header.agent);
        combined.insert(&group, log);
    }
    let curves = aggregate(&combined, metric, band)?;
    fs::create_dir_all(out_dir).map_err(|e| TelemetryError::io(out_dir, e))?;
    let write = |name: &str, text: String| -> Result<PathBuf, TelemetryError> {
        let path = out_dir.join(name);
        fs::write(&path, text).map_err(|e| TelemetryError::io(&path, e))?;
        Ok(path)
    };
    write("curves.csv", render_csv(&curves))?;
    let env_list: Vec<&str> = envs.iter().copied().collect();
    write("plot.svg", render_svg(&curves, &format!("{} vs baselines", env_list.join(", ")), metric.as_str()))?;
    let rows: Vec<ComparisonRow> = curves
        .iter()
        .map(|c| ComparisonRow { group: c.group.clone(), runs: c.runs, iterations: c.points.len(), final_mean: final_mean(c) })
        .collect();
    let mut table = String::from("group,runs,iterations,final_mean\n");
    for r in &rows {
        table.push_str(&format!("{},{},{},{}\n", r.group, r.runs, r.iterations, r.final_mean));
    }
    write("summary.csv", table)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::CurvePoint;

    #[test]
    fn final_mean_uses_last_tenth() {
        let points = (0..20).map(|i| CurvePoint { iteration: i, mean: i as f64, lo: 0.0, hi: 0.0 }).collect();
        let c = GroupCurve { group: "g".into(), runs: 1, points };
        assert_eq!(final_mean(&c), 18.5);
        let short = GroupCurve { group: "g".into(), runs: 1, points: vec![CurvePoint { iteration: 0, mean: 3.0, lo: 0.0, hi: 0.0 }] };
        assert_eq!(final_mean(&short), 3.0);
    }
}
