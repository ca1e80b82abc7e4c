//! Crowd-tuning client: fetch the community's top solutions, replay them
//! on a local workload together with fresh random assignments, and submit
//! trustable reactions back. Reports that cannot reach the server are
//! queued on disk and flushed on the next run.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::explorer::Explorer;
use crate::flagspace::FlagAssignment;
use crate::pipeline::{Pipeline, PipelineRequest};
use crate::stats;
use crate::store::{ExperimentEntry, ExperimentPoint, ReplayInfo, Store};
use crate::uid::{content_uid, mix_seed};

use super::server::{percent_encode, RunningServer};
use super::{
    candidate_admissible, CandidateSolution, ScenarioKey, SolutionRecord, SubmitReport,
    DEFAULT_MARGIN,
};

/// Thin HTTP client over the crowd endpoints.
pub struct CrowdClient {
    base_url: String,
    agent: ureq::Agent,
}

impl CrowdClient {
    pub fn new(base_url: &str) -> CrowdClient {
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(std::time::Duration::from_secs(3))
            .timeout(std::time::Duration::from_secs(20))
            .build();
        CrowdClient { base_url: base_url.trim_end_matches('/').to_string(), agent }
    }

    pub fn for_server(server: &RunningServer) -> CrowdClient {
        CrowdClient::new(&server.url())
    }

    pub fn top(&self, key: &ScenarioKey, n: usize) -> Result<Vec<SolutionRecord>> {
        let url = format!(
            "{}/v1/top?scenario={}&compiler={}&platform={}&n={n}",
            self.base_url,
            percent_encode(&key.scenario_id),
            percent_encode(&key.compiler),
            percent_encode(&key.platform),
        );
        let response = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| Error::environment(format!("crowd server unreachable: {e}")))?;
        response.into_json().map_err(|e| Error::invalid(format!("bad top response: {e}")))
    }

    pub fn solution(&self, uid: &str) -> Result<SolutionRecord> {
        let url = format!("{}/v1/solution/{uid}", self.base_url);
        let response = self.agent.get(&url).call().map_err(|e| match e {
            ureq::Error::Status(404, _) => Error::contract(format!("unknown solution {uid}")),
            other => Error::environment(format!("crowd server unreachable: {other}")),
        })?;
        response.into_json().map_err(|e| Error::invalid(format!("bad solution response: {e}")))
    }

    pub fn submit(&self, report: &SubmitReport) -> Result<()> {
        let url = format!("{}/v1/report", self.base_url);
        self.agent
            .post(&url)
            .send_json(serde_json::to_value(report)?)
            .map_err(|e| match e {
                ureq::Error::Status(code, response) => {
                    let body = response.into_string().unwrap_or_default();
                    Error::contract(format!("server rejected report ({code}): {body}"))
                }
                other => Error::environment(format!("crowd server unreachable: {other}")),
            })?;
        Ok(())
    }
}

#[derive(Debug)]
pub struct CrowdtuneOutcome {
    pub report: SubmitReport,
    pub entry_uid: String,
    /// false when the report went to the disk queue instead of the server.
    pub submitted: bool,
    pub replayed_solutions: usize,
    pub fresh_iterations: usize,
}

fn queue_dir(store: &Store) -> PathBuf {
    store.root().join("crowd-queue")
}

/// Submit any reports a previous run left in the disk queue.
pub fn flush_queue(store: &Store, client: &CrowdClient) -> Result<usize> {
    let dir = queue_dir(store);
    if !dir.is_dir() {
        return Ok(0);
    }
    let mut flushed = 0;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|e| e == "json").unwrap_or(false))
        .collect();
    paths.sort();
    for path in paths {
        let text = std::fs::read_to_string(&path)?;
        let report: SubmitReport = serde_json::from_str(&text)?;
        match client.submit(&report) {
            Ok(()) => {
                std::fs::remove_file(&path)?;
                flushed += 1;
            }
            Err(Error::Environment(_)) => break,
            // contract rejections are dropped; retrying cannot fix them
            Err(_) => {
                std::fs::remove_file(&path)?;
            }
        }
    }
    Ok(flushed)
}

/// Run one crowd-tuning round for a workload: baseline, shared top
/// solutions, `extra_random` fresh assignments; reactions pass the trust
/// gate before they are reported.
#[allow(clippy::too_many_arguments)]
pub fn crowdtune(
    explorer: &mut Explorer,
    client: &CrowdClient,
    key: &ScenarioKey,
    workload: &str,
    dataset: Option<&str>,
    command_key: &str,
    extra_random: usize,
    participant: &str,
    repetitions: usize,
    seed: u64,
) -> Result<CrowdtuneOutcome> {
    let store = explorer.store;
    let _machine_lock =
        crate::registry::MutationLock::acquire(store.root().join(".machine.lock"))?;
    let _ = flush_queue(store, client);

    let cache_path = store.root().join("crowd-cache").join(format!("{}.json", key.slug()));
    let top = match client.top(key, 10) {
        Ok(top) => {
            std::fs::create_dir_all(cache_path.parent().unwrap())?;
            crate::registry::write_json_atomic(&cache_path, &top)?;
            top
        }
        Err(Error::Environment(e)) => {
            let cached = std::fs::read_to_string(&cache_path)
                .map_err(|_| Error::environment(format!("{e}; no cached top list either")))?;
            serde_json::from_str(&cached)?
        }
        Err(other) => return Err(other),
    };

    let entry_uid = explorer.uids.next_uid();
    let entry = ExperimentEntry::new(
        entry_uid.clone(),
        &key.scenario_id,
        workload,
        dataset,
        explorer.backend.compiler().cloned(),
        vec!["execution_time".into()],
    );
    store.create_entry(&entry)?;

    let pipeline = Pipeline::new(explorer.registry, explorer.space);
    let stats_cfg = explorer.stats;
    let margin = stats_cfg.trust_threshold;
    let backend = explorer.backend.clone();
    let request = move |assignment: FlagAssignment, seed: u64| PipelineRequest {
        workload: workload.to_string(),
        dataset: dataset.map(String::from),
        command_key: command_key.to_string(),
        assignment,
        backend: backend.clone(),
        repetitions,
        timeout_secs: 60.0,
        seed,
        keep_artifacts: false,
    };

    // baseline
    let baseline_assignment = FlagAssignment::base_only(explorer.space.default_base());
    let baseline_result = pipeline.execute(&request(baseline_assignment.clone(), mix_seed(seed, 0)))?;
    let baseline_chars = baseline_result
        .characteristics(&stats_cfg)?
        .ok_or_else(|| Error::contract("baseline pipeline failed; cannot crowd-tune"))?;
    let baseline_time = baseline_chars
        .get("execution_time")
        .cloned()
        .ok_or_else(|| Error::contract("baseline lacks execution_time"))?;
    let baseline_digest = content_uid(&serde_json::to_string(&baseline_time)?);


    // shared top solutions
    let mut reactions: BTreeMap<String, f64> = BTreeMap::new();
    let mut replayed = 0usize;
    for (i, solution) in top.iter().enumerate() {
        let assignment = match explorer.space.parse(&solution.assignment_text) {
            Ok(a) => a,
            Err(e) => {
                eprintln!(
                    "skipping shared solution {}: {e}",
                    solution.solution_uid
                );
                continue;
            }
        };
        let run_seed = mix_seed(seed, 1 + i as u64);
        let result = pipeline.execute(&request(assignment.clone(), run_seed))?;
        record_measurement(
            explorer, &entry_uid, command_key, dataset, repetitions, &assignment, &result,
            run_seed,
        )?;
        replayed += 1;
        if let Some(chars) = result.characteristics(&stats_cfg)? {
            if let Some(time) = chars.get("execution_time") {
                let comparison = stats::compare(&baseline_time, time, margin)?;
                if comparison.trustable {
                    reactions.insert(
                        solution.solution_uid.clone(),
                        stats::speedup_over_baseline(&baseline_time, time)?,
                    );
                }
            }
        }
    }

    // fresh random assignments
    let mut best_fresh: Option<CandidateSolution> = None;
    for i in 0..extra_random {
        let sample_seed = mix_seed(seed, 1000 + i as u64);
        let policy = crate::flagspace::SamplingPolicy { seed: sample_seed, ..Default::default() };
        let assignment = explorer.space.sample_random(&policy)?;
        let run_seed = mix_seed(seed, 2000 + i as u64);
        let result = pipeline.execute(&request(assignment.clone(), run_seed))?;
        record_measurement(
            explorer, &entry_uid, command_key, dataset, repetitions, &assignment, &result,
            run_seed,
        )?;
        let Some(chars) = result.characteristics(&stats_cfg)? else { continue };
        let Some(time) = chars.get("execution_time") else { continue };
        let comparison = stats::compare(&baseline_time, time, margin)?;
        if !comparison.trustable {
            continue;
        }
        let ratio = stats::speedup_over_baseline(&baseline_time, time)?;
        if best_fresh.as_ref().map(|c| ratio > c.improvement).unwrap_or(true) {
            best_fresh = Some(CandidateSolution {
                assignment_text: explorer.space.render(&assignment)?,
                improvement: ratio,
            });
        }
    }

    let candidate = best_fresh.filter(|c| candidate_admissible(c, &reactions, DEFAULT_MARGIN));
    let report = SubmitReport {
        participant: participant.to_string(),
        key: key.clone(),
        workload: workload.to_string(),
        baseline_digest,
        reactions,
        candidate,
    };

    let submitted = match client.submit(&report) {
        Ok(()) => true,
        Err(Error::Environment(e)) => {
            let dir = queue_dir(store);
            std::fs::create_dir_all(&dir)?;
            let name = format!("{}-{}.json", key.slug(), explorer.uids.next_uid());
            crate::registry::write_json_atomic(&dir.join(name), &report)?;
            eprintln!("server unreachable ({e}); report queued");
            false
        }
        Err(other) => return Err(other),
    };

    Ok(CrowdtuneOutcome {
        report,
        entry_uid,
        submitted,
        replayed_solutions: replayed,
        fresh_iterations: extra_random,
    })
}

#[allow(clippy::too_many_arguments)]
fn record_measurement(
    explorer: &mut Explorer,
    entry_uid: &str,
    command_key: &str,
    dataset: Option<&str>,
    repetitions: usize,
    assignment: &FlagAssignment,
    result: &crate::pipeline::PipelineResult,
    seed: u64,
) -> Result<()> {
    let point = ExperimentPoint {
        point_uid: explorer.uids.next_uid(),
        assignment: assignment.clone(),
        rendered: explorer.space.render(assignment)?,
        characteristics: result.characteristics(&explorer.stats)?,
        binary_md5: result.binary_md5.clone(),
        raw_samples: if result.failure.is_none() { result.raw_samples() } else { Default::default() },
        failure: result.failure,
        replay_info: ReplayInfo {
            command_key: command_key.to_string(),
            dataset: dataset.map(String::from),
            seed,
            repetitions,
        },
    };
    explorer.store.record_point(entry_uid, &point)?;
    Ok(())
}

/// Apply one shared solution (by uid) to a workload and report the
/// improvement over the baseline, mirroring a benchmark run against a
/// published solution id.
#[allow(clippy::too_many_arguments)]
pub fn benchmark_solution(
    explorer: &mut Explorer,
    client: &CrowdClient,
    solution_uid: &str,
    workload: &str,
    dataset: Option<&str>,
    command_key: &str,
    repetitions: usize,
    seed: u64,
) -> Result<(SolutionRecord, f64)> {
    let solution = client.solution(solution_uid)?;
    let assignment = explorer.space.parse(&solution.assignment_text)?;
    let pipeline = Pipeline::new(explorer.registry, explorer.space);
    let make = |assignment: FlagAssignment, seed: u64| PipelineRequest {
        workload: workload.to_string(),
        dataset: dataset.map(String::from),
        command_key: command_key.to_string(),
        assignment,
        backend: explorer.backend.clone(),
        repetitions,
        timeout_secs: 60.0,
        seed,
        keep_artifacts: false,
    };
    let baseline = FlagAssignment::base_only(explorer.space.default_base());
    let base_result = pipeline.execute(&make(baseline, mix_seed(seed, 0)))?;
    let solution_result = pipeline.execute(&make(assignment, mix_seed(seed, 1)))?;
    let base_chars = base_result
        .characteristics(&explorer.stats)?
        .ok_or_else(|| Error::contract("baseline failed"))?;
    let solution_chars = solution_result
        .characteristics(&explorer.stats)?
        .ok_or_else(|| Error::contract("solution run failed"))?;
    let speedup = stats::speedup_over_baseline(
        base_chars.get("execution_time").ok_or_else(|| Error::contract("no baseline time"))?,
        solution_chars
            .get("execution_time")
            .ok_or_else(|| Error::contract("no solution time"))?,
    )?;
    Ok((solution, speedup))
}
