//! Success rates, pass@k, category splits and exclusive-solve counts.
//!
//! All rates are stored as integer numerator/denominator pairs so that the
//! JSON dump round-trips exactly.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::RunRecord;
use crate::model::UNASSIGNED;
use crate::provers::{ApproachGroup, ProverInfo};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("task {task} has {have} samples, fewer than k = {k}")]
    InsufficientSamples { task: usize, have: usize, k: usize },
    #[error("k must be at least 1")]
    ZeroK,
}

/// Fraction of tasks where any of the first `k` samples succeeded.
pub fn pass_at_k(outcomes: &[Vec<bool>], k: usize) -> Result<f64, MetricsError> {
    let hits = pass_at_k_count(outcomes, k)?;
    Ok(if outcomes.is_empty() { 0.0 } else { hits as f64 / outcomes.len() as f64 })
}

pub fn pass_at_k_count(outcomes: &[Vec<bool>], k: usize) -> Result<usize, MetricsError> {
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    let mut hits = 0;
    for (task, samples) in outcomes.iter().enumerate() {
        if samples.len() < k {
            return Err(MetricsError::InsufficientSamples {
                task,
                have: samples.len(),
                k,
            });
        }
        hits += usize::from(samples[..k].iter().any(|&s| s));
    }
    Ok(hits)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rate {
    pub solved: usize,
    pub total: usize,
}

impl Rate {
    /// `None` for an empty cell.
    pub fn value(&self) -> Option<f64> {
        (self.total > 0).then(|| self.solved as f64 / self.total as f64)
    }
}

fn category_name(run: &RunRecord) -> String {
    run.category.map_or(UNASSIGNED.to_string(), |c| c.as_str().to_string())
}

/// prover → category → rate. Cells without tasks do not appear.
pub fn category_breakdown(runs: &[RunRecord]) -> BTreeMap<String, BTreeMap<String, Rate>> {
    let mut out: BTreeMap<String, BTreeMap<String, Rate>> = BTreeMap::new();
    for r in runs {
        let cell = out
            .entry(r.prover_id.clone())
            .or_default()
            .entry(category_name(r))
            .or_default();
        cell.total += 1;
        cell.solved += usize::from(r.solved);
    }
    out
}

fn solvers(runs: &[RunRecord]) -> BTreeMap<&str, BTreeSet<String>> {
    let mut by_task: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for r in runs.iter().filter(|r| r.solved) {
        by_task.entry(r.sorry_id.as_str()).or_default().insert(r.prover_id.clone());
    }
    by_task
}

/// Maps each set of provers to the number of tasks solved by exactly that
/// set. Values sum to the number of tasks solved by anyone.
pub fn intersection_counts(runs: &[RunRecord]) -> BTreeMap<BTreeSet<String>, usize> {
    let mut out = BTreeMap::new();
    for set in solvers(runs).into_values() {
        *out.entry(set).or_default() += 1;
    }
    out
}

pub fn combined_count(runs: &[RunRecord]) -> usize {
    solvers(runs).len()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStats {
    /// Number of solved runs the statistics are taken over.
    pub runs: usize,
    pub p50: u64,
    pub p90: u64,
    pub max: u64,
    pub total: u64,
}

impl TokenStats {
    /// Nearest-rank percentiles of per-run token totals.
    pub fn from_totals(mut totals: Vec<u64>) -> Self {
        if totals.is_empty() {
            return TokenStats::default();
        }
        totals.sort_unstable();
        let rank = |p: usize| totals[(p * totals.len()).div_ceil(100).max(1) - 1];
        TokenStats {
            runs: totals.len(),
            p50: rank(50),
            p90: rank(90),
            max: *totals.last().expect("nonempty"),
            total: totals.iter().sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProverMetrics {
    pub id: String,
    /// `None` for provers seen in the logs but not in the run manifest.
    pub group: Option<ApproachGroup>,
    pub tasks: usize,
    pub solved_count: usize,
    /// Tasks solved by the first sample (samplers) or at all (others).
    pub pass_at_1: Rate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass_at_k: Option<Rate>,
    pub tokens: TokenStats,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCell {
    pub prover: String,
    pub category: String,
    pub rate: Rate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intersection {
    pub provers: Vec<String>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsTable {
    /// Distinct tasks across all runs.
    pub total_tasks: usize,
    pub provers: Vec<ProverMetrics>,
    pub categories: Vec<CategoryCell>,
    pub combined_count: usize,
    pub intersections: Vec<Intersection>,
}

/// Per-sample outcomes of a sampler run, by sample index. Samples that
/// never produced an attempt count as failures.
fn sample_outcomes(run: &RunRecord, n: usize) -> Vec<bool> {
    let mut out = vec![false; n];
    for a in &run.attempts {
        if let Some(slot) = out.get_mut(a.proposal.iteration as usize) {
            *slot |= a.verdict.is_accepted();
        }
    }
    out
}

/// Pure post-pass over run records. `infos` fixes prover order and groups;
/// provers only present in `runs` are appended in id order.
pub fn compute_metrics(runs: &[RunRecord], infos: &[ProverInfo]) -> MetricsTable {
    let mut order: Vec<ProverInfo> = infos.to_vec();
    let known: BTreeSet<String> = infos.iter().map(|i| i.id.clone()).collect();
    let extra: BTreeSet<&str> = runs
        .iter()
        .map(|r| r.prover_id.as_str())
        .filter(|id| !known.contains(*id))
        .collect();

    let mut provers = Vec::new();
    let entries = order
        .drain(..)
        .map(|i| (i.id, Some(i.group), i.samples))
        .chain(extra.into_iter().map(|id| (id.to_string(), None, None)));
    for (id, group, samples) in entries {
        let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.prover_id == id).collect();
        let solved_count = mine.iter().filter(|r| r.solved).count();
        let tasks = mine.len();
        let (pass_at_1, k, pass_at_k) = match samples {
            Some(n) => {
                let n = n as usize;
                let outcomes: Vec<Vec<bool>> = mine.iter().map(|r| sample_outcomes(r, n)).collect();
                let first = pass_at_k_count(&outcomes, 1).expect("padded to n >= 1");
                let all = pass_at_k_count(&outcomes, n).expect("padded to n");
                (Rate { solved: first, total: tasks }, Some(n), Some(Rate { solved: all, total: tasks }))
            }
            None => (Rate { solved: solved_count, total: tasks }, None, None),
        };
        let totals = mine
            .iter()
            .filter(|r| r.solved)
            .map(|r| r.attempts.iter().map(|a| a.tokens.total()).sum())
            .collect();
        provers.push(ProverMetrics {
            id,
            group,
            tasks,
            solved_count,
            pass_at_1,
            k,
            pass_at_k,
            tokens: TokenStats::from_totals(totals),
        });
    }

    let categories = category_breakdown(runs)
        .into_iter()
        .flat_map(|(prover, cells)| {
            cells.into_iter().map(move |(category, rate)| CategoryCell {
                prover: prover.clone(),
                category,
                rate,
            })
        })
        .collect();
    let intersections = intersection_counts(runs)
        .into_iter()
        .map(|(set, count)| Intersection {
            provers: set.into_iter().collect(),
            count,
        })
        .collect();
    let total_tasks = runs.iter().map(|r| r.sorry_id.as_str()).collect::<BTreeSet<_>>().len();
    MetricsTable {
        total_tasks,
        provers,
        categories,
        combined_count: combined_count(runs),
        intersections,
    }
}
