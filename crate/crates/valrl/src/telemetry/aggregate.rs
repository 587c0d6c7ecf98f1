//! Cross-seed aggregation of experiment logs.

use std::fmt;
use std::str::FromStr;

use super::{ExperimentLog, IterationStatistics, TelemetryError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    TrainReturnMean,
    EvalReturnMean,
    EpisodeLengthMean,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::TrainReturnMean, Metric::EvalReturnMean, Metric::EpisodeLengthMean];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::TrainReturnMean => "train_return_mean",
            Metric::EvalReturnMean => "eval_return_mean",
            Metric::EpisodeLengthMean => "episode_length_mean",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Metric::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

/// Dispersion drawn around the cross-seed mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Band {
    #[default]
    MinMax,
    /// Mean ± one standard error (sample standard deviation / √runs).
    StdErr,
}

impl FromStr for Band {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "minmax" => Ok(Band::MinMax),
            "stderr" => Ok(Band::StdErr),
            _ => Err(format!("unknown band `{s}` (expected minmax or stderr)")),
        }
    }
}

/// The metric's value for one iteration of one run. The length metric
/// covers training episodes.
pub fn metric_value(log: &ExperimentLog, record: &IterationStatistics, metric: Metric) -> Result<f64, TelemetryError> {
    let value = match metric {
        Metric::TrainReturnMean => record.train.mean_return(),
        Metric::EvalReturnMean => {
            let eval = record.eval.as_ref().ok_or(TelemetryError::NoEval { path: log.path.clone(), iteration: record.iteration })?;
            eval.mean_return()
        }
        Metric::EpisodeLengthMean => record.train.mean_length(),
    };
    // The runner never ends a phase without an episode; treat a record that
    // did as corrupt rather than inventing a value.
    value.ok_or_else(|| TelemetryError::Corrupt { path: log.path.clone(), reason: format!("iteration {} has no episodes", record.iteration) })
}

#[derive(Debug, Clone)]
pub struct RunGroup {
    pub name: String,
    pub runs: Vec<ExperimentLog>,
}

/// Named groups of runs, in insertion order.
#[derive(Debug, Clone, Default)]
pub struct RunSet {
    pub groups: Vec<RunGroup>,
}

impl RunSet {
    pub fn insert(&mut self, group: &str, log: ExperimentLog) {
        match self.groups.iter_mut().find(|g| g.name == group) {
            Some(g) => g.runs.push(log),
            None => self.groups.push(RunGroup { name: group.to_string(), runs: vec![log] }),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub iteration: u64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCurve {
    pub group: String,
    pub runs: usize,
    pub points: Vec<CurvePoint>,
}

pub fn aggregate(runs: &RunSet, metric: Metric, band: Band) -> Result<Vec<GroupCurve>, TelemetryError> {
    let mut curves = Vec::with_capacity(runs.groups.len());
    for group in &runs.groups {
        if group.runs.is_empty() {
            return Err(TelemetryError::EmptyGroup(group.name.clone()));
        }
        let first = &group.runs[0].header;
        if group.runs.iter().any(|r| r.header.seedless_fingerprint != first.seedless_fingerprint) {
            log::warn!("group `{}` mixes configurations beyond the seed", group.name);
        }
        let shortest = group.runs.iter().map(|r| r.records.len()).min().unwrap_or(0);
        if group.runs.iter().any(|r| r.records.len() != shortest) {
            log::warn!("group `{}`: truncating runs to the shortest ({shortest} iterations)", group.name);
        }
        let mut points = Vec::with_capacity(shortest);
        for i in 0..shortest {
            let values = group
                .runs
                .iter()
                .map(|r| metric_value(r, &r.records[i], metric))
                .collect::<Result<Vec<f64>, _>>()?;
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let (lo, hi) = match band {
                Band::MinMax => values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))),
                Band::StdErr => {
                    let se = if values.len() < 2 {
                        0.0
                    } else {
                        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
                    };
                    (mean - se, mean + se)
                }
            };
            points.push(CurvePoint { iteration: i as u64, mean, lo, hi });
        }
        curves.push(GroupCurve { group: group.name.clone(), runs: group.runs.len(), points });
    }
    Ok(curves)
}
