//! Gap statistics, hallucination accounting and reports.
//!
//! The gap of a tour is its excess over the optimum in percent:
//! `100 * (length - optimal) / optimal`. Medians and IQRs are computed over
//! valid rows only; hallucination rates are over all attempts.
//!
//! Quartiles use Tukey's hinges: the data are split into a lower and an
//! upper half, both including the median when the count is odd, and Q1/Q3
//! are the medians of those halves. For `[0, 10, 20]` the halves are
//! `[0, 10]` and `[10, 20]`, giving Q1 = 5, Q3 = 15, IQR = 10. A single
//! value has IQR 0.

mod report;
mod svg;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::parse::Status;
use crate::solver::{SolvedInstance, LENGTH_TOLERANCE};
use crate::strategies::{Attempt, EnsembleResult, RefineTrace, StrategyKind};

pub use report::{emit_report, write_contact_sheet, ReportError, RECORDS_CSV_VERSION, STATS_CSV_VERSION};
pub use svg::{bar_chart, line_chart, Series};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("optimal length must be positive, got {0}")]
    NonPositiveOptimum(f64),
    #[error("length {length} is below the optimum {optimal}")]
    BelowOptimum { length: f64, optimal: f64 },
}

pub fn gap_percent(length: f64, optimal_length: f64) -> Result<f64, MetricsError> {
    if optimal_length.is_nan() || optimal_length <= 0.0 {
        return Err(MetricsError::NonPositiveOptimum(optimal_length));
    }
    if length < optimal_length - LENGTH_TOLERANCE {
        return Err(MetricsError::BelowOptimum {
            length,
            optimal: optimal_length,
        });
    }
    Ok((100.0 * (length - optimal_length) / optimal_length).max(0.0))
}

/// Sub-grouping of a strategy's rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Group {
    /// Single-shot strategies.
    Single,
    /// Ensemble of the first `S` draws.
    Ensemble(usize),
    /// Refine loop after `k` feedback iterations (0 = initial tour).
    Iteration(usize),
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::Single => Ok(()),
            Group::Ensemble(s) => write!(f, "S={s}"),
            Group::Iteration(k) => write!(f, "iter={k}"),
        }
    }
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Ok(Group::Single);
        }
        let parse = |v: &str| v.parse::<usize>().map_err(|e| format!("bad group {s:?}: {e}"));
        if let Some(v) = s.strip_prefix("S=") {
            Ok(Group::Ensemble(parse(v)?))
        } else if let Some(v) = s.strip_prefix("iter=") {
            Ok(Group::Iteration(parse(v)?))
        } else {
            Err(format!("bad group {s:?}"))
        }
    }
}

impl From<Group> for String {
    fn from(g: Group) -> Self {
        g.to_string()
    }
}

impl TryFrom<String> for Group {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Attempt counts by outcome.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub valid: u32,
    pub incorrect_ids: u32,
    pub incomplete: u32,
    pub unparseable: u32,
}

impl OutcomeCounts {
    pub fn of<'a>(attempts: impl IntoIterator<Item = &'a Attempt>) -> Self {
        let mut c = OutcomeCounts::default();
        for a in attempts {
            c.add(a.status());
        }
        c
    }

    pub fn add(&mut self, status: Status) {
        match status {
            Status::Valid => self.valid += 1,
            Status::IncorrectNodeIds => self.incorrect_ids += 1,
            Status::IncompleteRoute => self.incomplete += 1,
            Status::Unparseable => self.unparseable += 1,
        }
    }

    pub fn total(&self) -> u32 {
        self.valid + self.incorrect_ids + self.incomplete + self.unparseable
    }

    fn merge(&mut self, other: &OutcomeCounts) {
        self.valid += other.valid;
        self.incorrect_ids += other.incorrect_ids;
        self.incomplete += other.incomplete;
        self.unparseable += other.unparseable;
    }

    /// The most frequent failure kind; ties go to the earlier of
    /// incorrect IDs, incomplete route, unparseable.
    fn dominant_failure(&self) -> Status {
        let mut best = (Status::Unparseable, 0);
        for (status, count) in [
            (Status::IncorrectNodeIds, self.incorrect_ids),
            (Status::IncompleteRoute, self.incomplete),
            (Status::Unparseable, self.unparseable),
        ] {
            if count > best.1 {
                best = (status, count);
            }
        }
        best.0
    }
}

/// One result row: a strategy's outcome on one instance within one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Digest of the experiment definition in the run manifest.
    pub experiment_id: String,
    pub strategy: StrategyKind,
    pub instance_id: String,
    pub n: usize,
    pub group: Group,
    pub status: Status,
    pub length: Option<f64>,
    pub gap_percent: Option<f64>,
    pub counts: OutcomeCounts,
    /// Relative path of the ensemble/refine payload, when there is one.
    pub payload: Option<String>,
}

impl RunRecord {
    pub fn from_attempt(
        experiment_id: &str,
        strategy: StrategyKind,
        solved: &SolvedInstance,
        attempt: &Attempt,
    ) -> Self {
        RunRecord {
            experiment_id: experiment_id.to_string(),
            strategy,
            instance_id: solved.instance.instance_id.clone(),
            n: solved.instance.n,
            group: Group::Single,
            status: attempt.status(),
            length: attempt.length,
            gap_percent: attempt.gap_percent,
            counts: OutcomeCounts::of([attempt]),
            payload: None,
        }
    }

    /// One row per ensemble size; counts cover the first `S` draws.
    pub fn from_ensemble(
        experiment_id: &str,
        solved: &SolvedInstance,
        result: &EnsembleResult,
        payload: Option<String>,
    ) -> Vec<Self> {
        result
            .per_size
            .iter()
            .map(|choice| {
                let counts = OutcomeCounts::of(&result.attempts[..choice.size]);
                let status = if choice.best_length.is_some() {
                    Status::Valid
                } else {
                    counts.dominant_failure()
                };
                RunRecord {
                    experiment_id: experiment_id.to_string(),
                    strategy: StrategyKind::Ensemble,
                    instance_id: solved.instance.instance_id.clone(),
                    n: solved.instance.n,
                    group: Group::Ensemble(choice.size),
                    status,
                    length: choice.best_length,
                    gap_percent: choice.best_gap_percent,
                    counts,
                    payload: payload.clone(),
                }
            })
            .collect()
    }

    /// Rows `iter=0..=iters` with the best-so-far tour; counts cover only
    /// the attempts made at that step. Failed traces yield failure rows.
    pub fn from_refine(
        experiment_id: &str,
        strategy: StrategyKind,
        solved: &SolvedInstance,
        trace: &RefineTrace,
        iters: usize,
        payload: Option<String>,
    ) -> Vec<Self> {
        let best = trace.best_so_far();
        let initial_counts = OutcomeCounts::of(&trace.initial);
        (0..=iters)
            .map(|k| {
                let counts = if k == 0 {
                    initial_counts
                } else {
                    trace
                        .iterations
                        .get(k - 1)
                        .map(|s| OutcomeCounts::of([&s.attempt]))
                        .unwrap_or_default()
                };
                let length = best.get(k).copied();
                let gap = length.map(|l| {
                    gap_percent(l, solved.optimal_length).expect("refine lengths are scored tours")
                });
                RunRecord {
                    experiment_id: experiment_id.to_string(),
                    strategy,
                    instance_id: solved.instance.instance_id.clone(),
                    n: solved.instance.n,
                    group: Group::Iteration(k),
                    status: if length.is_some() {
                        Status::Valid
                    } else {
                        initial_counts.dominant_failure()
                    },
                    length,
                    gap_percent: gap,
                    counts,
                    payload: payload.clone(),
                }
            })
            .collect()
    }
}

/// Statistics for one `(strategy, n, group)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub strategy: StrategyKind,
    pub n: usize,
    pub group: Group,
    pub rows: usize,
    pub valid_count: usize,
    /// Rows without a gap (hallucinated, unparseable or failed).
    pub invalid_count: usize,
    pub median_gap: Option<f64>,
    pub q1_gap: Option<f64>,
    pub q3_gap: Option<f64>,
    pub iqr_gap: Option<f64>,
    pub counts: OutcomeCounts,
    pub pct_valid: Option<f64>,
    pub pct_incorrect_ids: Option<f64>,
    pub pct_incomplete: Option<f64>,
    pub pct_unparseable: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub groups: Vec<GroupStats>,
}

impl GapStats {
    pub fn get(&self, strategy: StrategyKind, n: usize, group: Group) -> Option<&GroupStats> {
        self.groups
            .iter()
            .find(|g| g.strategy == strategy && g.n == n && g.group == group)
    }
}

pub fn median(sorted: &[f64]) -> Option<f64> {
    let m = sorted.len();
    match m {
        0 => None,
        _ if m % 2 == 1 => Some(sorted[m / 2]),
        _ => Some((sorted[m / 2 - 1] + sorted[m / 2]) / 2.0),
    }
}

/// `(Q1, median, Q3)` by Tukey's hinges; `sorted` must be ascending.
pub fn tukey_quartiles(sorted: &[f64]) -> Option<(f64, f64, f64)> {
    let m = sorted.len();
    let med = median(sorted)?;
    let lower = &sorted[..m.div_ceil(2)];
    let upper = &sorted[m / 2..];
    Some((median(lower)?, med, median(upper)?))
}

pub fn summarize(records: &[RunRecord]) -> GapStats {
    let mut cells: BTreeMap<(StrategyKind, usize, Group), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        cells.entry((r.strategy, r.n, r.group)).or_default().push(r);
    }
    let groups = cells
        .into_iter()
        .map(|((strategy, n, group), rows)| {
            let mut gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap_percent).collect();
            gaps.sort_by(f64::total_cmp);
            let mut counts = OutcomeCounts::default();
            for r in &rows {
                counts.merge(&r.counts);
            }
            let total = counts.total();
            let pct = |c: u32| (total > 0).then(|| 100.0 * c as f64 / total as f64);
            let quartiles = tukey_quartiles(&gaps);
            GroupStats {
                strategy,
                n,
                group,
                rows: rows.len(),
                valid_count: gaps.len(),
                invalid_count: rows.len() - gaps.len(),
                median_gap: quartiles.map(|q| q.1),
                q1_gap: quartiles.map(|q| q.0),
                q3_gap: quartiles.map(|q| q.2),
                iqr_gap: quartiles.map(|q| q.2 - q.0),
                counts,
                pct_valid: pct(counts.valid),
                pct_incorrect_ids: pct(counts.incorrect_ids),
                pct_incomplete: pct(counts.incomplete),
                pct_unparseable: pct(counts.unparseable),
            }
        })
        .collect();
    GapStats { groups }
}
