use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{aggregate_trials, Metrics, ScoreError, TrialSummary};

/// Sweep values, either listed (`1,2,3,5,10`) or as an inclusive range
/// (`400..6400 step 400`; step defaults to 1).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepGrid(pub Vec<u64>);

impl SweepGrid {
    pub fn values(&self) -> &[u64] {
        &self.0
    }
}

impl FromStr for SweepGrid {
    type Err = ScoreError;

    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let bad = |message: &str| ScoreError::BadGrid {
            spec: spec.to_string(),
            message: message.to_string(),
        };
        let num = |s: &str| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| bad(&format!("not a number: {:?}", s.trim())))
        };
        let s = spec.trim();
        if s.is_empty() {
            return Ok(SweepGrid(Vec::new()));
        }
        if let Some((start, rest)) = s.split_once("..") {
            let (end, step) = match rest.split_once("step") {
                Some((e, st)) => (num(e)?, num(st)?),
                None => (num(rest)?, 1),
            };
            let start = num(start)?;
            if step == 0 {
                return Err(bad("step must be positive"));
            }
            if end < start {
                return Err(bad("range end is below its start"));
            }
            return Ok(SweepGrid((start..=end).step_by(step as usize).collect()));
        }
        s.split(',').map(num).collect::<Result<_, _>>().map(SweepGrid)
    }
}

impl fmt::Display for SweepGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// What the evaluation hook is asked to train and score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSpec {
    pub x: u64,
    pub trial: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialError {
    pub trial: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: u64,
    /// Absent when every trial of the point failed.
    pub summary: Option<TrialSummary>,
    /// Trial index of each entry of `summary.trials`.
    pub succeeded: Vec<usize>,
    pub errors: Vec<TrialError>,
}

/// Runs `trials` evaluations per grid value. A failing trial is recorded on
/// its point and the sweep continues.
pub fn learning_curve<E, F>(grid: &SweepGrid, trials: usize, mut hook: F) -> Vec<CurvePoint>
where
    E: fmt::Display,
    F: FnMut(TrialSpec) -> Result<Metrics, E>,
{
    grid.values()
        .iter()
        .map(|&x| {
            let mut ok = Vec::new();
            let mut succeeded = Vec::new();
            let mut errors = Vec::new();
            for trial in 0..trials {
                match hook(TrialSpec { x, trial }) {
                    Ok(m) => {
                        ok.push(m);
                        succeeded.push(trial);
                    }
                    Err(e) => errors.push(TrialError {
                        trial,
                        message: e.to_string(),
                    }),
                }
            }
            CurvePoint {
                x,
                summary: aggregate_trials(&ok).ok(),
                succeeded,
                errors,
            }
        })
        .collect()
}

/// One row per grid value with mean and std of each metric. Points without
/// a successful trial have empty metric cells.
pub fn curve_tsv(points: &[CurvePoint]) -> String {
    let mut out =
        String::from("x\ttrials\tfailed\tprecision_mean\tprecision_std\trecall_mean\trecall_std\tf1_mean\tf1_std\n");
    for p in points {
        let n = p.summary.as_ref().map_or(0, |s| s.trials.len());
        let cells = match &p.summary {
            Some(s) => [s.precision, s.recall, s.f1]
                .iter()
                .map(|m| format!("{:.6}\t{:.6}", m.mean, m.std))
                .collect::<Vec<_>>()
                .join("\t"),
            None => "\t\t\t\t\t".to_string(),
        };
        writeln!(out, "{}\t{n}\t{}\t{cells}", p.x, p.errors.len()).unwrap();
    }
    out
}

/// Raw per-trial values, one row per successful trial.
pub fn trials_tsv(points: &[CurvePoint]) -> String {
    let mut out = format!("x\ttrial\t{}\n", Metrics::tsv_header());
    for p in points {
        let Some(s) = &p.summary else { continue };
        for (i, m) in p.succeeded.iter().zip(&s.trials) {
            writeln!(out, "{}\t{i}\t{}", p.x, m.tsv_row()).unwrap();
        }
    }
    out
}
