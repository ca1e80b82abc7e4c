//! Autotuning scenarios: the sampling loop with recording policies, Pareto
//! frontier filtering, per-dataset reaction sweeps, and the fuzzing
//! scenario that keeps only failed pipelines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flagspace::{FlagAssignment, FlagKind, FlagSpace, FlagValue, SamplingPolicy};
use crate::pipeline::{Backend, Pipeline, PipelineRequest, PipelineResult};
use crate::registry::Registry;
use crate::stats::{self, StatsConfig};
use crate::store::{
    BaselineSnapshot, DriftCheck, ExperimentEntry, ExperimentPoint, ReplayInfo, Store,
};
use crate::uid::{mix_seed, UidGen};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordPolicy {
    All,
    FrontierOnly,
    FailuresOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Random,
    /// Enumerate every on/absent combination of the eligible boolean
    /// flags; only usable on spaces of at most 2^20 combinations.
    Exhaustive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub scenario_id: String,
    /// Characteristic names, all minimized.
    #[serde(default = "default_objectives")]
    pub objectives: Vec<String>,
    pub iterations: usize,
    pub repetitions: usize,
    #[serde(default)]
    pub sampling: SamplingPolicy,
    #[serde(default = "default_mode")]
    pub sampling_mode: SamplingMode,
    pub record_policy: RecordPolicy,
    /// Default baseline is the space's "-O3".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<FlagAssignment>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_mode() -> SamplingMode {
    SamplingMode::Random
}

fn default_objectives() -> Vec<String> {
    vec!["execution_time".into(), "binary_size".into()]
}

fn default_timeout() -> f64 {
    60.0
}

impl Scenario {
    pub fn new(id: &str, iterations: usize, repetitions: usize) -> Scenario {
        Scenario {
            scenario_id: id.to_string(),
            objectives: vec!["execution_time".into(), "binary_size".into()],
            iterations,
            repetitions,
            sampling: SamplingPolicy::default(),
            sampling_mode: SamplingMode::Random,
            record_policy: RecordPolicy::All,
            baseline: None,
            timeout_secs: 60.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.objectives.is_empty() && self.record_policy != RecordPolicy::FailuresOnly {
            return Err(Error::contract("objectives must be non-empty"));
        }
        if self.repetitions == 0 {
            return Err(Error::contract("repetitions must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub point_uid: String,
    pub objectives: Vec<f64>,
}

/// p dominates q iff p <= q componentwise and p < q in at least one
/// component (all objectives minimized).
pub fn dominates(p: &[f64], q: &[f64]) -> bool {
    let mut strict = false;
    for (a, b) in p.iter().zip(q.iter()) {
        if a > b {
            return false;
        }
        if a < b {
            strict = true;
        }
    }
    strict
}

/// Exactly the non-dominated points; duplicates of a frontier vector are
/// all kept; output sorted by first objective (then the rest, then uid).
pub fn pareto_filter(points: &[FrontierPoint]) -> Result<Vec<FrontierPoint>> {
    let Some(first) = points.first() else { return Ok(Vec::new()) };
    let dims = first.objectives.len();
    if points.iter().any(|p| p.objectives.len() != dims) {
        return Err(Error::contract("mixed objective dimensionality"));
    }
    if dims == 0 {
        return Err(Error::contract("points need at least one objective"));
    }
    let mut survivors = if dims == 2 { sweep_2d(points) } else { filter_general(points) };
    survivors.sort_by(|a, b| {
        a.objectives
            .iter()
            .zip(&b.objectives)
            .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
            .find(|o| o.is_ne())
            .unwrap_or_else(|| a.point_uid.cmp(&b.point_uid))
    });
    Ok(survivors)
}

/// Sort by (x, y) and sweep with the best y seen at strictly smaller x.
fn sweep_2d(points: &[FrontierPoint]) -> Vec<FrontierPoint> {
    let mut order: Vec<&FrontierPoint> = points.iter().collect();
    order.sort_by(|a, b| {
        a.objectives[0]
            .partial_cmp(&b.objectives[0])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.objectives[1].partial_cmp(&b.objectives[1]).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut survivors = Vec::new();
    let mut best_y = f64::INFINITY;
    let mut i = 0;
    while i < order.len() {
        // group of equal x
        let x = order[i].objectives[0];
        let mut j = i;
        while j < order.len() && order[j].objectives[0] == x {
            j += 1;
        }
        let group_min_y = order[i].objectives[1];
        if group_min_y < best_y {
            for p in &order[i..j] {
                if p.objectives[1] == group_min_y {
                    survivors.push((*p).clone());
                }
            }
            best_y = group_min_y;
        }
        i = j;
    }
    survivors
}

fn filter_general(points: &[FrontierPoint]) -> Vec<FrontierPoint> {
    points
        .iter()
        .filter(|p| !points.iter().any(|q| dominates(&q.objectives, &p.objectives)))
        .cloned()
        .collect()
}

/// Reactions of one workload across datasets and candidate solutions:
/// speedup over the scenario baseline per (dataset, solution) cell, absent
/// when the comparison failed the trust gate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReactionTable {
    pub workload: String,
    pub datasets: Vec<String>,
    /// Rendered solution texts, in input order.
    pub solutions: Vec<String>,
    /// Row-major by dataset.
    pub cells: Vec<Vec<Option<f64>>>,
}

/// Drives scenarios against one (registry, store, space, backend). Timed
/// measurement holds the machine-wide lock for fidelity.
pub struct Explorer<'a> {
    pub registry: &'a Registry,
    pub store: &'a Store,
    pub space: &'a FlagSpace,
    pub backend: Backend,
    pub stats: StatsConfig,
    pub uids: UidGen,
}

impl<'a> Explorer<'a> {
    pub fn new(
        registry: &'a Registry,
        store: &'a Store,
        space: &'a FlagSpace,
        backend: Backend,
        seed: u64,
    ) -> Self {
        Explorer {
            registry,
            store,
            space,
            backend,
            stats: StatsConfig::default(),
            uids: UidGen::new(seed),
        }
    }

    fn machine_lock(&self) -> Result<impl Drop> {
        crate::registry::MutationLock::acquire(self.store.root().join(".machine.lock"))
    }

    /// Run one autotuning scenario: baseline first, then sampled
    /// assignments, recording per the scenario's record policy. Pipeline
    /// failures are recorded data, never errors.
    pub fn autotune(
        &mut self,
        scenario: &Scenario,
        workload: &str,
        dataset: Option<&str>,
        command_key: &str,
    ) -> Result<String> {
        scenario.validate()?;
        self.registry.workload(workload)?;
        if let Some(id) = dataset {
            self.registry.dataset(id)?;
        }
        let _lock = self.machine_lock()?;

        let entry_uid = self.uids.next_uid();
        let mut entry = ExperimentEntry::new(
            entry_uid.clone(),
            &scenario.scenario_id,
            workload,
            dataset,
            self.backend.compiler().cloned(),
            scenario.objectives.clone(),
        );
        self.store.create_entry(&entry)?;
        let mut writer = self.store.writer(&entry_uid)?;

        let pipeline = Pipeline::new(self.registry, self.space);
        let baseline_assignment = scenario
            .baseline
            .clone()
            .unwrap_or_else(|| FlagAssignment::base_only(self.space.default_base()));

        let mut frontier: Vec<FrontierPoint> = Vec::new();

        // Baseline measured first; its snapshot anchors reactions and the
        // periodic drift checks.
        let baseline_result = self.measure(
            &pipeline,
            scenario,
            workload,
            dataset,
            command_key,
            &baseline_assignment,
            mix_seed(scenario.sampling.seed, u64::MAX),
        )?;
        if baseline_result.failure.is_none() {
            entry.baseline = Some(BaselineSnapshot {
                assignment: baseline_assignment.clone(),
                rendered: self.space.render(&baseline_assignment)?,
                characteristics: baseline_result
                    .characteristics(&self.stats)?
                    .unwrap_or_default(),
                binary_md5: baseline_result.binary_md5.clone(),
            });
            self.store.update_entry(&entry)?;
        }
        self.record(
            scenario,
            &mut entry,
            &mut writer,
            &baseline_assignment,
            &baseline_result,
            dataset,
            command_key,
            mix_seed(scenario.sampling.seed, u64::MAX),
            &mut frontier,
        )?;

        let assignments = self.plan_assignments(scenario)?;
        for (iteration, assignment) in assignments.into_iter().enumerate() {
            if iteration > 0 && iteration % 50 == 0 {
                self.check_drift(&pipeline, scenario, workload, dataset, command_key, &mut entry, iteration)?;
            }
            let seed = mix_seed(scenario.sampling.seed, iteration as u64);
            let result =
                self.measure(&pipeline, scenario, workload, dataset, command_key, &assignment, seed)?;
            self.record(
                scenario,
                &mut entry,
                &mut writer,
                &assignment,
                &result,
                dataset,
                command_key,
                seed,
                &mut frontier,
            )?;
        }
        Ok(entry_uid)
    }

    /// Fuzzing scenario: identical loop, but only failed pipelines are
    /// kept, each carrying full replay information.
    pub fn fuzz(
        &mut self,
        scenario: &Scenario,
        workload: &str,
        dataset: Option<&str>,
        command_key: &str,
    ) -> Result<String> {
        let mut fuzz_scenario = scenario.clone();
        fuzz_scenario.record_policy = RecordPolicy::FailuresOnly;
        self.autotune(&fuzz_scenario, workload, dataset, command_key)
    }

    /// Measure each (dataset, solution) pair and report speedups over the
    /// per-dataset baseline.
    pub fn sweep_datasets(
        &mut self,
        scenario: &Scenario,
        workload: &str,
        command_key: &str,
        solutions: &[FlagAssignment],
        tag_filter: Option<&str>,
    ) -> Result<ReactionTable> {
        scenario.validate()?;
        let datasets = self.registry.resolve_datasets(workload, tag_filter)?;
        if datasets.is_empty() {
            return Err(Error::contract(format!("no datasets resolvable for {workload}")));
        }
        let _lock = self.machine_lock()?;
        let pipeline = Pipeline::new(self.registry, self.space);
        let baseline_assignment = scenario
            .baseline
            .clone()
            .unwrap_or_else(|| FlagAssignment::base_only(self.space.default_base()));

        let mut cells = Vec::with_capacity(datasets.len());
        for (row, dataset) in datasets.iter().enumerate() {
            let baseline = self.measure(
                &pipeline,
                scenario,
                workload,
                Some(&dataset.id),
                command_key,
                &baseline_assignment,
                mix_seed(scenario.sampling.seed, row as u64),
            )?;
            let base_chars = baseline.characteristics(&self.stats)?;
            let base_time = base_chars
                .as_ref()
                .and_then(|c| c.get("execution_time"))
                .cloned();
            let mut row_cells = Vec::with_capacity(solutions.len());
            for (column, solution) in solutions.iter().enumerate() {
                let seed = mix_seed(scenario.sampling.seed, ((row + 1) * 1000 + column) as u64);
                let result = self.measure(
                    &pipeline,
                    scenario,
                    workload,
                    Some(&dataset.id),
                    command_key,
                    solution,
                    seed,
                )?;
                let cell = match (&base_time, result.characteristics(&self.stats)?) {
                    (Some(base), Some(chars)) => {
                        let time = chars.get("execution_time").cloned();
                        match time {
                            Some(time) => {
                                let cmp =
                                    stats::compare(base, &time, self.stats.trust_threshold)?;
                                if cmp.trustable {
                                    Some(stats::speedup_over_baseline(base, &time)?)
                                } else {
                                    None
                                }
                            }
                            None => None,
                        }
                    }
                    _ => None,
                };
                row_cells.push(cell);
            }
            cells.push(row_cells);
        }
        Ok(ReactionTable {
            workload: workload.to_string(),
            datasets: datasets.iter().map(|d| d.id.clone()).collect(),
            solutions: solutions
                .iter()
                .map(|s| self.space.render(s))
                .collect::<Result<Vec<_>>>()?,
            cells,
        })
    }

    fn plan_assignments(&self, scenario: &Scenario) -> Result<Vec<FlagAssignment>> {
        match scenario.sampling_mode {
            SamplingMode::Random => (0..scenario.iterations)
                .map(|i| {
                    let seed = mix_seed(scenario.sampling.seed, i as u64);
                    self.space.sample_random(&scenario.sampling.with_seed(seed))
                })
                .collect(),
            SamplingMode::Exhaustive => {
                let booleans: Vec<&str> = self
                    .space
                    .descriptors
                    .iter()
                    .filter(|d| matches!(d.kind, FlagKind::Boolean { .. }))
                    .map(|d| d.name.as_str())
                    .collect();
                if booleans.len() > 20 {
                    return Err(Error::contract(format!(
                        "exhaustive mode limited to 2^20 combinations, space has {} booleans",
                        booleans.len()
                    )));
                }
                let base = self.space.default_base().to_string();
                let combos = 1usize << booleans.len();
                let mut out = Vec::with_capacity(combos);
                for mask in 0..combos {
                    let mut assignment = FlagAssignment::base_only(base.clone());
                    for (bit, name) in booleans.iter().enumerate() {
                        if mask & (1 << bit) != 0 {
                            assignment.values.insert(name.to_string(), FlagValue::Switch(true));
                        }
                    }
                    out.push(assignment);
                }
                Ok(out)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn measure(
        &self,
        pipeline: &Pipeline,
        scenario: &Scenario,
        workload: &str,
        dataset: Option<&str>,
        command_key: &str,
        assignment: &FlagAssignment,
        seed: u64,
    ) -> Result<PipelineResult> {
        pipeline.execute(&PipelineRequest {
            workload: workload.to_string(),
            dataset: dataset.map(String::from),
            command_key: command_key.to_string(),
            assignment: assignment.clone(),
            backend: self.backend.clone(),
            repetitions: scenario.repetitions,
            timeout_secs: scenario.timeout_secs,
            seed,
            keep_artifacts: false,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        scenario: &Scenario,
        entry: &mut ExperimentEntry,
        writer: &mut crate::store::EntryWriter,
        assignment: &FlagAssignment,
        result: &PipelineResult,
        dataset: Option<&str>,
        command_key: &str,
        seed: u64,
        frontier: &mut Vec<FrontierPoint>,
    ) -> Result<()> {
        let characteristics = result.characteristics(&self.stats)?;
        let point = ExperimentPoint {
            point_uid: self.uids.next_uid(),
            assignment: assignment.clone(),
            rendered: self.space.render(assignment)?,
            characteristics: characteristics.clone(),
            binary_md5: result.binary_md5.clone(),
            raw_samples: if result.failure.is_none() {
                result.raw_samples()
            } else {
                Default::default()
            },
            failure: result.failure,
            replay_info: ReplayInfo {
                command_key: command_key.to_string(),
                dataset: dataset.map(String::from),
                seed,
                repetitions: scenario.repetitions,
            },
        };

        match scenario.record_policy {
            RecordPolicy::All => {
                writer.record(&point)?;
                entry.points.push(point.point_uid);
            }
            RecordPolicy::FailuresOnly => {
                if result.failure.is_some() {
                    writer.record(&point)?;
                    entry.points.push(point.point_uid);
                }
            }
            RecordPolicy::FrontierOnly => {
                if result.failure.is_some() {
                    return Ok(());
                }
                let characteristics = characteristics
                    .ok_or_else(|| Error::invalid("successful point without characteristics"))?;
                let vector: Vec<f64> = scenario
                    .objectives
                    .iter()
                    .map(|name| {
                        characteristics
                            .get(name)
                            .map(|c| c.expected)
                            .ok_or_else(|| Error::contract(format!("objective {name} unmeasured")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if frontier.iter().any(|p| dominates(&p.objectives, &vector)) {
                    return Ok(());
                }
                // evict stored points the newcomer dominates
                let (dominated, kept): (Vec<FrontierPoint>, Vec<FrontierPoint>) =
                    frontier.drain(..).partition(|p| dominates(&vector, &p.objectives));
                *frontier = kept;
                let dominated_uids: Vec<String> =
                    dominated.iter().map(|p| p.point_uid.clone()).collect();
                for old in dominated {
                    writer.remove(&old.point_uid)?;
                }
                writer.record(&point)?;
                frontier
                    .push(FrontierPoint { point_uid: point.point_uid.clone(), objectives: vector });
                entry.points.retain(|p| !dominated_uids.contains(p));
                entry.points.push(point.point_uid);
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn check_drift(
        &mut self,
        pipeline: &Pipeline,
        scenario: &Scenario,
        workload: &str,
        dataset: Option<&str>,
        command_key: &str,
        entry: &mut ExperimentEntry,
        iteration: usize,
    ) -> Result<()> {
        let Some(baseline) = entry.baseline.clone() else { return Ok(()) };
        let Some(original) = baseline.characteristics.get("execution_time") else {
            return Ok(());
        };
        let seed = mix_seed(scenario.sampling.seed, 0xD41F7 ^ iteration as u64);
        let result = self.measure(
            pipeline,
            scenario,
            workload,
            dataset,
            command_key,
            &baseline.assignment,
            seed,
        )?;
        if let Some(chars) = result.characteristics(&self.stats)? {
            if let Some(fresh) = chars.get("execution_time") {
                let ratio = fresh.expected / original.expected;
                let exceeded = (ratio - 1.0).abs() > self.stats.trust_threshold;
                entry.drift.push(DriftCheck { iteration, ratio, exceeded });
                self.store.update_entry(entry)?;
            }
        }
        Ok(())
    }
}
