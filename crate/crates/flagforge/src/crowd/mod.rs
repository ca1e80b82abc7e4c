//! Crowd-tuning: clients replay the community's top solutions plus fresh
//! random ones on their own workloads and send improvement reactions to an
//! aggregation server; the server keeps one record per pruned solution
//! with max-merged reactions and best/worst species counters, pruning
//! solutions that never win anywhere.
//!
//! Merging is order-insensitive: reactions max-merge, candidate admission
//! is validated against the submitting report alone, and solution uids are
//! content-derived from the solution text, so any arrival order of the
//! same report multiset produces a byte-identical table.

pub mod client;
pub mod server;

pub use client::{crowdtune, CrowdClient, CrowdtuneOutcome};
pub use server::{CrowdServer, RunningServer};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uid::content_uid;

/// Classification margin: a reaction counts as a win above 1+margin and as
/// a degradation below 1-margin (the trust threshold reused).
pub const DEFAULT_MARGIN: f64 = 0.05;

/// Aggregation key: one table per tuning scenario, compiler and platform
/// class.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScenarioKey {
    pub scenario_id: String,
    pub compiler: String,
    pub platform: String,
}

impl ScenarioKey {
    pub fn new(scenario_id: &str, compiler: &str, platform: &str) -> Self {
        ScenarioKey {
            scenario_id: scenario_id.to_string(),
            compiler: compiler.to_string(),
            platform: platform.to_string(),
        }
    }

    /// Filesystem-safe identifier for persistence.
    pub fn slug(&self) -> String {
        content_uid(&format!("{}|{}|{}", self.scenario_id, self.compiler, self.platform))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    /// Best improvement ratio seen for (solution, workload).
    pub ratio: f64,
    /// Number of merged submissions behind it.
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub solution_uid: String,
    pub assignment_text: String,
    /// Workloads for which this solution is the best known.
    pub best_species: u64,
    /// Workloads for which it is the worst known.
    pub worst_species: u64,
    pub highest_improvement: f64,
    pub worst_degradation: f64,
    pub reactions: BTreeMap<String, Reaction>,
}

impl SolutionRecord {
    pub fn new(assignment_text: &str) -> Self {
        SolutionRecord {
            solution_uid: content_uid(assignment_text),
            assignment_text: assignment_text.to_string(),
            best_species: 0,
            worst_species: 0,
            highest_improvement: 1.0,
            worst_degradation: 1.0,
            reactions: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioTable {
    pub key: Option<ScenarioKey>,
    /// Ordered by (best_species desc, highest_improvement desc, uid asc);
    /// re-established after every merge.
    pub solutions: Vec<SolutionRecord>,
    /// Reactions that referenced a solution uid before any report created
    /// it; drained into the record the moment it appears. This keeps the
    /// merged state a pure function of the report multiset regardless of
    /// arrival order.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub pending: BTreeMap<String, BTreeMap<String, Reaction>>,
}

impl ScenarioTable {
    pub fn for_key(key: ScenarioKey) -> Self {
        ScenarioTable { key: Some(key), solutions: Vec::new(), pending: BTreeMap::new() }
    }

    pub fn solution(&self, uid: &str) -> Option<&SolutionRecord> {
        self.solutions.iter().find(|s| s.solution_uid == uid)
    }

    fn solution_mut(&mut self, uid: &str) -> Option<&mut SolutionRecord> {
        self.solutions.iter_mut().find(|s| s.solution_uid == uid)
    }
}

/// Candidate solution found by a client's extra random iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSolution {
    pub assignment_text: String,
    pub improvement: f64,
}

/// One participant's measurements of one workload against the shared
/// solutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitReport {
    /// Opaque anonymous token.
    pub participant: String,
    pub key: ScenarioKey,
    pub workload: String,
    /// Digest of the baseline stats backing the ratios.
    pub baseline_digest: String,
    /// solution uid -> trustable improvement ratio.
    pub reactions: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<CandidateSolution>,
}

impl SubmitReport {
    fn validate(&self, margin: f64) -> Result<()> {
        if self.reactions.values().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(Error::contract("report ratios must be positive"));
        }
        if let Some(candidate) = &self.candidate {
            if !candidate.improvement.is_finite() || candidate.improvement <= 0.0 {
                return Err(Error::contract("candidate improvement must be positive"));
            }
            if !candidate_admissible(candidate, &self.reactions, margin) {
                return Err(Error::contract(
                    "candidate does not beat every shared reaction by the noise threshold",
                ));
            }
        }
        Ok(())
    }
}

/// The submit invariant: the candidate must beat the baseline and every
/// shared solution's reaction on this workload by more than the margin.
pub fn candidate_admissible(
    candidate: &CandidateSolution,
    reactions: &BTreeMap<String, f64>,
    margin: f64,
) -> bool {
    let beats_baseline = candidate.improvement > 1.0 + margin;
    let beats_shared = reactions
        .values()
        .all(|r| candidate.improvement > r * (1.0 + margin));
    beats_baseline && beats_shared
}

/// Merge one report: per-workload reactions max-merge into each solution,
/// an admissible candidate becomes a record of its own (uid derived from
/// the solution text), and the species counters are recomputed.
pub fn server_merge(table: &mut ScenarioTable, report: &SubmitReport, margin: f64) -> Result<()> {
    report.validate(margin)?;
    for (uid, ratio) in &report.reactions {
        let target = match table.solution_mut(uid) {
            Some(solution) => &mut solution.reactions,
            // solution not created yet (or pruned): park the reaction
            None => table.pending.entry(uid.clone()).or_default(),
        };
        max_merge(target, &report.workload, *ratio);
    }
    if let Some(candidate) = &report.candidate {
        let uid = content_uid(&candidate.assignment_text);
        if table.solution(&uid).is_none() {
            let mut record = SolutionRecord::new(&candidate.assignment_text);
            if let Some(parked) = table.pending.remove(&uid) {
                record.reactions = parked;
            }
            table.solutions.push(record);
        }
        let solution = table.solution_mut(&uid).expect("just inserted");
        max_merge(&mut solution.reactions, &report.workload, candidate.improvement);
    }
    classify(table, margin);
    Ok(())
}

fn max_merge(reactions: &mut BTreeMap<String, Reaction>, workload: &str, ratio: f64) {
    let entry = reactions
        .entry(workload.to_string())
        .or_insert(Reaction { ratio, samples: 0 });
    if ratio > entry.ratio {
        entry.ratio = ratio;
    }
    entry.samples += 1;
}

/// Recompute best/worst species counters and the improvement extremes as a
/// pure function of the merged reactions, then re-sort the table.
pub fn classify(table: &mut ScenarioTable, margin: f64) {
    for solution in &mut table.solutions {
        solution.best_species = 0;
        solution.worst_species = 0;
        solution.highest_improvement = solution
            .reactions
            .values()
            .map(|r| r.ratio)
            .fold(f64::NEG_INFINITY, f64::max);
        solution.worst_degradation =
            solution.reactions.values().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
        if solution.reactions.is_empty() {
            solution.highest_improvement = 1.0;
            solution.worst_degradation = 1.0;
        }
    }
    let workloads: BTreeSet<String> = table
        .solutions
        .iter()
        .flat_map(|s| s.reactions.keys().cloned())
        .collect();
    for workload in &workloads {
        let mut best: Option<(f64, &str)> = None;
        let mut worst: Option<(f64, &str)> = None;
        // ties go to the lowest uid: strict comparisons on a uid-sorted walk
        let mut by_uid: Vec<&SolutionRecord> = table
            .solutions
            .iter()
            .filter(|s| s.reactions.contains_key(workload))
            .collect();
        by_uid.sort_by(|a, b| a.solution_uid.cmp(&b.solution_uid));
        for solution in by_uid {
            let ratio = solution.reactions[workload].ratio;
            if best.map(|(r, _)| ratio > r).unwrap_or(true) {
                best = Some((ratio, &solution.solution_uid));
            }
            if worst.map(|(r, _)| ratio < r).unwrap_or(true) {
                worst = Some((ratio, &solution.solution_uid));
            }
        }
        let best = best.map(|(r, u)| (r, u.to_string()));
        let worst = worst.map(|(r, u)| (r, u.to_string()));
        if let Some((ratio, uid)) = best {
            if ratio > 1.0 + margin {
                table.solution_mut(&uid).unwrap().best_species += 1;
            }
        }
        if let Some((ratio, uid)) = worst {
            if ratio < 1.0 - margin {
                table.solution_mut(&uid).unwrap().worst_species += 1;
            }
        }
    }
    table.solutions.sort_by(|a, b| {
        b.best_species
            .cmp(&a.best_species)
            .then_with(|| {
                b.highest_improvement
                    .partial_cmp(&a.highest_improvement)
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .then_with(|| a.solution_uid.cmp(&b.solution_uid))
    });
}

/// Online classification with the storage bound: recompute counters and
/// prune solutions that are best nowhere, worst nowhere and never beat the
/// baseline by the margin.
pub fn classify_online(table: &mut ScenarioTable, margin: f64) {
    classify(table, margin);
    table.solutions.retain(|s| {
        let max_reaction = s
            .reactions
            .values()
            .map(|r| r.ratio)
            .fold(f64::NEG_INFINITY, f64::max);
        s.best_species > 0 || s.worst_species > 0 || max_reaction >= 1.0 + margin
    });
}

/// First n records by table order, full solution text included.
pub fn server_top(table: &ScenarioTable, n: usize) -> Vec<SolutionRecord> {
    table.solutions.iter().take(n).cloned().collect()
}
