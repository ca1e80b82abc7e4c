//! Solution complexity reduction: iteratively remove flags that do not
//! influence the monitored characteristics (with an MD5 short-circuit
//! that accepts a removal without running when the recompiled binary is
//! unchanged), explicitly invert the remaining choice space, report
//! per-flag contributions, and minimize failure-reproducing flag sets to
//! 1-minimal form.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flagspace::{FlagAssignment, FlagKind, FlagSpace, FlagValue};
use crate::pipeline::{Backend, Pipeline, PipelineRequest, PipelineResult};
use crate::registry::Registry;
use crate::stats::StatsConfig;
use crate::store::{ExperimentPoint, ReplayInfo, Store};
use crate::uid::{mix_seed, UidGen};

/// Predicate deciding whether a tentative removal left a characteristic
/// acceptable relative to the best value seen so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// candidate <= best * (1 + tolerance)
    NotWorse,
    /// |candidate - best| <= tolerance * best
    WithinTolerance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PruneConfig {
    pub tolerance: f64,
    pub use_md5_shortcut: bool,
    /// Chain an inversion pass after reduction.
    pub invert: bool,
    /// Flag never removed or switched off.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_key: Option<String>,
    pub seed: u64,
    /// Visit flags in name order instead of seeded random order.
    #[serde(default)]
    pub deterministic_order: bool,
    /// characteristic -> predicate; empty means the default pair
    /// (execution_time, binary_size) both NotWorse.
    #[serde(default)]
    pub conditions: BTreeMap<String, Condition>,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            tolerance: 0.025,
            use_md5_shortcut: false,
            invert: false,
            keep_key: None,
            seed: 0,
            deterministic_order: false,
            conditions: BTreeMap::new(),
        }
    }
}

impl PruneConfig {
    fn effective_conditions(&self) -> BTreeMap<String, Condition> {
        if self.conditions.is_empty() {
            BTreeMap::from([
                ("execution_time".to_string(), Condition::NotWorse),
                ("binary_size".to_string(), Condition::NotWorse),
            ])
        } else {
            self.conditions.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.tolerance < 0.0 {
            return Err(Error::contract("tolerance must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReduceOutcome {
    pub assignment: FlagAssignment,
    pub rendered: String,
    /// Point recorded for the reduced solution.
    pub point_uid: String,
    pub removed: Vec<String>,
    /// Full (compile+run) evaluations spent.
    pub measurements: u64,
    /// Removals accepted on binary-digest equality alone.
    pub md5_shortcuts: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Improves,
    Degrades,
    Neutral,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContributionRow {
    pub flag: String,
    /// characteristic -> relative change when the flag is removed.
    pub deltas: BTreeMap<String, f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContributionReport {
    pub point_uid: String,
    pub rows: Vec<ContributionRow>,
}

pub struct Reducer<'a> {
    pub registry: &'a Registry,
    pub store: &'a Store,
    pub space: &'a FlagSpace,
    pub backend: Backend,
    pub stats: StatsConfig,
    pub uids: UidGen,
    workload: String,
    measure_counter: u64,
}

impl<'a> Reducer<'a> {
    pub fn new(
        registry: &'a Registry,
        store: &'a Store,
        space: &'a FlagSpace,
        backend: Backend,
        seed: u64,
    ) -> Self {
        Reducer {
            registry,
            store,
            space,
            backend,
            stats: StatsConfig::default(),
            uids: UidGen::new(seed),
            workload: String::new(),
            measure_counter: 0,
        }
    }

    fn machine_lock(&self) -> Result<impl Drop> {
        crate::registry::MutationLock::acquire(self.store.root().join(".machine.lock"))
    }

    /// Iteratively and randomly remove flags from a found solution while
    /// every configured condition holds against the best-seen values;
    /// repeats passes until a full pass removes nothing, then records the
    /// reduced point.
    pub fn reduce(
        &mut self,
        entry_uid: &str,
        point_uid: &str,
        config: &PruneConfig,
    ) -> Result<ReduceOutcome> {
        config.validate()?;
        let _lock = self.machine_lock()?;
        let point = self.load(entry_uid, point_uid)?;
        if point.characteristics.is_none() {
            return Err(Error::contract("reduce needs a measured point, not a fuzz point"));
        }
        let conditions = config.effective_conditions();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut measurements = 0u64;
        let mut md5_shortcuts = 0u64;

        let mut current = point.assignment.clone();
        let first = self.measure(&point.replay_info, &current, &mut measurements)?;
        if first.failure.is_some() {
            return Err(Error::contract("solution no longer measurable"));
        }
        let mut best = expected_values(&first, &conditions, &self.stats)?;
        let mut current_md5 = first.binary_md5.clone();
        let mut removed = Vec::new();

        let max_passes = current.values.len() + 1;
        for _pass in 0..max_passes {
            let mut changed = false;
            let order = self.visit_order(&current, config, &mut rng);
            for flag in order {
                if !current.values.contains_key(&flag) {
                    continue;
                }
                let tentative = current.without_flag(&flag);
                if config.use_md5_shortcut {
                    let probe = self.probe(&point.replay_info, &tentative)?;
                    if probe.compile_ok && probe.binary_md5 == current_md5 {
                        current = tentative;
                        removed.push(flag);
                        md5_shortcuts += 1;
                        changed = true;
                        continue;
                    }
                }
                let result = self.measure(&point.replay_info, &tentative, &mut measurements)?;
                if result.failure.is_some() {
                    continue;
                }
                let candidate = expected_values(&result, &conditions, &self.stats)?;
                if accepts(&conditions, &best, &candidate, config.tolerance) {
                    current = tentative;
                    current_md5 = result.binary_md5.clone();
                    removed.push(flag);
                    for (name, value) in candidate {
                        let slot = best.get_mut(&name).expect("same condition keys");
                        if value < *slot {
                            *slot = value;
                        }
                    }
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        if config.invert {
            let (inverted, extra_measurements, extra_shortcuts) =
                self.invert_pass(&point.replay_info, current, &conditions, config, &mut best)?;
            current = inverted;
            measurements += extra_measurements;
            md5_shortcuts += extra_shortcuts;
        }

        self.record_reduced(entry_uid, &point, current, removed, measurements, md5_shortcuts)
    }

    /// Explicitly switch off every boolean flag the solution does not
    /// mention; flags whose off-form breaks the conditions stay explicitly
    /// on. The result enumerates the full influential/neutral partition.
    pub fn invert(
        &mut self,
        entry_uid: &str,
        point_uid: &str,
        config: &PruneConfig,
    ) -> Result<ReduceOutcome> {
        config.validate()?;
        let _lock = self.machine_lock()?;
        let point = self.load(entry_uid, point_uid)?;
        if point.characteristics.is_none() {
            return Err(Error::contract("invert needs a measured point, not a fuzz point"));
        }
        let conditions = config.effective_conditions();
        let mut measurements = 0u64;
        let first = self.measure(&point.replay_info, &point.assignment, &mut measurements)?;
        if first.failure.is_some() {
            return Err(Error::contract("solution no longer measurable"));
        }
        let mut best = expected_values(&first, &conditions, &self.stats)?;
        let (inverted, extra, shortcuts) = self.invert_pass(
            &point.replay_info,
            point.assignment.clone(),
            &conditions,
            config,
            &mut best,
        )?;
        self.record_reduced(entry_uid, &point, inverted, Vec::new(), measurements + extra, shortcuts)
    }

    fn invert_pass(
        &mut self,
        replay: &ReplayInfo,
        mut current: FlagAssignment,
        conditions: &BTreeMap<String, Condition>,
        config: &PruneConfig,
        best: &mut BTreeMap<String, f64>,
    ) -> Result<(FlagAssignment, u64, u64)> {
        let mut measurements = 0u64;
        let mut md5_shortcuts = 0u64;
        let mut current_md5 = None;
        let booleans: Vec<String> = self
            .space
            .descriptors
            .iter()
            .filter(|d| matches!(d.kind, FlagKind::Boolean { .. }))
            .map(|d| d.name.clone())
            .collect();
        for flag in booleans {
            if current.values.contains_key(&flag) || config.keep_key.as_deref() == Some(&flag) {
                continue;
            }
            let mut tentative = current.clone();
            tentative.values.insert(flag.clone(), FlagValue::Switch(false));
            if config.use_md5_shortcut {
                if current_md5.is_none() {
                    let probe = self.probe(replay, &current)?;
                    current_md5 = probe.binary_md5;
                }
                let probe = self.probe(replay, &tentative)?;
                if probe.compile_ok && probe.binary_md5 == current_md5 {
                    current = tentative;
                    md5_shortcuts += 1;
                    continue;
                }
            }
            let result = self.measure(replay, &tentative, &mut measurements)?;
            let acceptable = if result.failure.is_some() {
                false
            } else {
                let candidate = expected_values(&result, conditions, &self.stats)?;
                accepts(conditions, best, &candidate, config.tolerance)
            };
            if acceptable {
                current_md5 = result.binary_md5.clone();
                current = tentative;
            } else {
                // switching it off mattered: record it explicitly on
                current.values.insert(flag, FlagValue::Switch(true));
            }
        }
        Ok((current, measurements, md5_shortcuts))
    }

    /// Per-flag contribution: measure the solution minus each flag and
    /// report relative deltas against the full solution.
    pub fn contribution(
        &mut self,
        entry_uid: &str,
        point_uid: &str,
        tolerance: f64,
    ) -> Result<ContributionReport> {
        let _lock = self.machine_lock()?;
        let point = self.load(entry_uid, point_uid)?;
        if point.characteristics.is_none() {
            return Err(Error::contract("contribution needs a measured point"));
        }
        let monitored = BTreeMap::from([
            ("execution_time".to_string(), Condition::NotWorse),
            ("binary_size".to_string(), Condition::NotWorse),
        ]);
        let mut measurements = 0u64;
        let full = self.measure(&point.replay_info, &point.assignment, &mut measurements)?;
        if full.failure.is_some() {
            return Err(Error::contract("solution no longer measurable"));
        }
        let full_values = expected_values(&full, &monitored, &self.stats)?;

        let mut rows = Vec::new();
        for flag in point.assignment.flag_names() {
            let tentative = point.assignment.without_flag(flag);
            let result = self.measure(&point.replay_info, &tentative, &mut measurements)?;
            let mut deltas = BTreeMap::new();
            if result.failure.is_none() {
                let values = expected_values(&result, &monitored, &self.stats)?;
                for (name, full_value) in &full_values {
                    let delta = (values[name] - full_value) / full_value;
                    deltas.insert(name.clone(), delta);
                }
            }
            let verdict = if deltas.values().any(|d| *d > tolerance) {
                Verdict::Improves
            } else if deltas.values().any(|d| *d < -tolerance) {
                Verdict::Degrades
            } else {
                Verdict::Neutral
            };
            rows.push(ContributionRow { flag: flag.to_string(), deltas, verdict });
        }
        Ok(ContributionReport { point_uid: point_uid.to_string(), rows })
    }

    /// Shrink a failure-reproducing flag set: a removal is accepted iff
    /// the same failure kind still reproduces. The fixed point is
    /// 1-minimal - removing any single remaining flag loses the failure.
    pub fn minimize_failure(
        &mut self,
        entry_uid: &str,
        point_uid: &str,
        config: &PruneConfig,
    ) -> Result<ReduceOutcome> {
        config.validate()?;
        let _lock = self.machine_lock()?;
        let point = self.load(entry_uid, point_uid)?;
        let Some(kind) = point.failure else {
            return Err(Error::contract("minimize_failure needs a failed point"));
        };
        let mut measurements = 0u64;
        let first = self.measure(&point.replay_info, &point.assignment, &mut measurements)?;
        if first.failure != Some(kind) {
            return Err(Error::contract(format!(
                "original failure {kind} not reproducible (got {:?})",
                first.failure
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut current = point.assignment.clone();
        let mut removed = Vec::new();
        let max_passes = current.values.len() + 1;
        for _pass in 0..max_passes {
            let mut changed = false;
            let order = self.visit_order(&current, config, &mut rng);
            for flag in order {
                if !current.values.contains_key(&flag) {
                    continue;
                }
                let tentative = current.without_flag(&flag);
                let result = self.measure(&point.replay_info, &tentative, &mut measurements)?;
                if result.failure == Some(kind) {
                    current = tentative;
                    removed.push(flag);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        self.record_reduced(entry_uid, &point, current, removed, measurements, 0)
    }

    fn load(&mut self, entry_uid: &str, point_uid: &str) -> Result<ExperimentPoint> {
        let entry = self.store.load_entry(entry_uid)?;
        self.workload = entry.workload;
        self.store.load_point(entry_uid, point_uid)
    }

    fn visit_order(
        &self,
        assignment: &FlagAssignment,
        config: &PruneConfig,
        rng: &mut ChaCha8Rng,
    ) -> Vec<String> {
        let mut order: Vec<String> = assignment
            .values
            .keys()
            .filter(|name| config.keep_key.as_deref() != Some(name.as_str()))
            .cloned()
            .collect();
        if !config.deterministic_order {
            for i in (1..order.len()).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
        }
        order
    }

    fn measure(
        &mut self,
        replay: &ReplayInfo,
        assignment: &FlagAssignment,
        measurements: &mut u64,
    ) -> Result<PipelineResult> {
        *measurements += 1;
        let pipeline = Pipeline::new(self.registry, self.space);
        let request = self.request(replay, assignment);
        pipeline.execute(&request)
    }

    fn probe(&mut self, replay: &ReplayInfo, assignment: &FlagAssignment) -> Result<PipelineResult> {
        let pipeline = Pipeline::new(self.registry, self.space);
        let request = self.request(replay, assignment);
        pipeline.compile_probe(&request)
    }

    fn request(&mut self, replay: &ReplayInfo, assignment: &FlagAssignment) -> PipelineRequest {
        self.measure_counter += 1;
        PipelineRequest {
            workload: self.workload.clone(),
            dataset: replay.dataset.clone(),
            command_key: replay.command_key.clone(),
            assignment: assignment.clone(),
            backend: self.backend.clone(),
            repetitions: replay.repetitions.max(1),
            timeout_secs: 60.0,
            seed: mix_seed(replay.seed, self.measure_counter),
            keep_artifacts: false,
        }
    }

    fn record_reduced(
        &mut self,
        entry_uid: &str,
        original: &ExperimentPoint,
        assignment: FlagAssignment,
        removed: Vec<String>,
        mut measurements: u64,
        md5_shortcuts: u64,
    ) -> Result<ReduceOutcome> {
        let final_result = self.measure(&original.replay_info, &assignment, &mut measurements)?;
        let characteristics = final_result.characteristics(&self.stats)?;
        let point = ExperimentPoint {
            point_uid: self.uids.next_uid(),
            assignment: assignment.clone(),
            rendered: self.space.render(&assignment)?,
            characteristics,
            binary_md5: final_result.binary_md5.clone(),
            raw_samples: if final_result.failure.is_none() {
                final_result.raw_samples()
            } else {
                Default::default()
            },
            failure: final_result.failure,
            replay_info: original.replay_info.clone(),
        };
        let point_uid = self.store.record_point(entry_uid, &point)?;
        Ok(ReduceOutcome {
            rendered: self.space.render(&assignment)?,
            assignment,
            point_uid,
            removed,
            measurements,
            md5_shortcuts,
        })
    }
}

fn expected_values(
    result: &PipelineResult,
    conditions: &BTreeMap<String, Condition>,
    stats: &StatsConfig,
) -> Result<BTreeMap<String, f64>> {
    let characteristics = result
        .characteristics(stats)?
        .ok_or_else(|| Error::contract("failed pipeline has no characteristics"))?;
    conditions
        .keys()
        .map(|name| {
            characteristics
                .get(name)
                .map(|c| (name.clone(), c.expected))
                .ok_or_else(|| Error::contract(format!("characteristic {name} unmeasured")))
        })
        .collect()
}

fn accepts(
    conditions: &BTreeMap<String, Condition>,
    best: &BTreeMap<String, f64>,
    candidate: &BTreeMap<String, f64>,
    tolerance: f64,
) -> bool {
    conditions.iter().all(|(name, condition)| {
        let best_value = best[name];
        let value = candidate[name];
        match condition {
            Condition::NotWorse => value <= best_value * (1.0 + tolerance),
            Condition::WithinTolerance => (value - best_value).abs() <= tolerance * best_value,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explorer::{Explorer, RecordPolicy, Scenario};
    use crate::pipeline::FailureKind;
    use crate::registry::{FlagEffect, SyntheticSpec};
    use crate::testutil::{boolean_space, synthetic_repo};

    /// Record one point for the given assignment and return (entry, point).
    fn record_solution_seeded(
        registry: &Registry,
        store: &Store,
        space: &FlagSpace,
        assignment: FlagAssignment,
        seed: u64,
    ) -> (String, String) {
        let mut scenario = Scenario::new("prune-test", 0, 3);
        scenario.record_policy = RecordPolicy::All;
        scenario.baseline = Some(assignment);
        let mut explorer = Explorer::new(registry, store, space, Backend::Synthetic, seed);
        let entry_uid = explorer.autotune(&scenario, "syn", None, "run").unwrap();
        let entry = store.load_entry(&entry_uid).unwrap();
        (entry_uid.clone(), entry.points[0].clone())
    }

    fn record_solution(
        registry: &Registry,
        store: &Store,
        space: &FlagSpace,
        assignment: FlagAssignment,
    ) -> (String, String) {
        record_solution_seeded(registry, store, space, assignment, 99)
    }

    fn with_flags(flags: &[&str]) -> FlagAssignment {
        let mut a = FlagAssignment::base_only("-O3");
        for f in flags {
            a.values.insert(f.to_string(), FlagValue::Switch(true));
        }
        a
    }

    #[test]
    fn reduce_keeps_exactly_the_influential_flags() {
        // only x and z matter; brute force over all 16 subsets agrees
        let spec = SyntheticSpec::new(10.0, 10_000)
            .with_effect("x", FlagEffect::timed(0.5))
            .with_effect("z", FlagEffect::sized(-2_000));
        let (_tmp, registry) = synthetic_repo("syn", spec.clone());
        let store = Store::open(registry.root()).unwrap();
        let space = boolean_space(&["x", "y", "z", "w"]);
        let (entry, point) =
            record_solution(&registry, &store, &space, with_flags(&["x", "y", "z", "w"]));

        // oracle: minimal subset matching the full solution's time/size
        let eval = |subset: &[&str]| -> (f64, i64) {
            let mut time = 10.0;
            let mut size = 10_000i64;
            for f in subset {
                if let Some(e) = spec.flag_effects.get(*f) {
                    time *= e.time_multiplier;
                    size += e.size_delta;
                }
            }
            (time, size)
        };
        let full = eval(&["x", "y", "z", "w"]);
        let all = ["x", "y", "z", "w"];
        let mut minimal: Option<Vec<&str>> = None;
        for mask in 0..16u32 {
            let subset: Vec<&str> = all
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, f)| *f)
                .collect();
            if eval(&subset) == full {
                let better = match &minimal {
                    None => true,
                    Some(m) => subset.len() < m.len(),
                };
                if better {
                    minimal = Some(subset);
                }
            }
        }
        assert_eq!(minimal.unwrap(), vec!["x", "z"]);

        let mut reducer = Reducer::new(&registry, &store, &space, Backend::Synthetic, 7);
        let outcome = reducer.reduce(&entry, &point, &PruneConfig::default()).unwrap();
        assert_eq!(outcome.assignment.flag_names(), vec!["x", "z"]);
        assert_eq!(outcome.rendered, "-O3 -fx -fz");
        // the reduced point landed in the entry
        let reduced = store.load_point(&entry, &outcome.point_uid).unwrap();
        assert_eq!(reduced.assignment, outcome.assignment);
    }

    #[test]
    fn baseline_only_solution_unchanged() {
        let spec = SyntheticSpec::new(10.0, 10_000);
        let (_tmp, registry) = synthetic_repo("syn", spec);
        let store = Store::open(registry.root()).unwrap();
        let space = boolean_space(&["x"]);
        let (entry, point) = record_solution(&registry, &store, &space, with_flags(&[]));
        let mut reducer = Reducer::new(&registry, &store, &space, Backend::Synthetic, 7);
        let outcome = reducer.reduce(&entry, &point, &PruneConfig::default()).unwrap();
        assert!(outcome.assignment.values.is_empty());
        assert_eq!(outcome.rendered, "-O3");
        assert!(outcome.removed.is_empty());
    }

    #[test]
    fn md5_shortcut_skips_measurements_for_binary_neutral_flags() {
        // y and w do not touch the binary; with the shortcut their removal
        // must cost zero timed measurements.
        let spec = SyntheticSpec::new(10.0, 10_000)
            .with_effect("x", FlagEffect::timed(0.5))
            .with_effect("z", FlagEffect::sized(-2_000));
        let (_tmp, registry) = synthetic_repo("syn", spec);
        let store = Store::open(registry.root()).unwrap();
        let space = boolean_space(&["x", "y", "z", "w"]);
        let (entry, point) =
            record_solution(&registry, &store, &space, with_flags(&["x", "y", "z", "w"]));
        let mut reducer = Reducer::new(&registry, &store, &space, Backend::Synthetic, 7);
        let config = PruneConfig { use_md5_shortcut: true, ..Default::default() };
        let outcome = reducer.reduce(&entry, &point, &config).unwrap();
        assert_eq!(outcome.assignment.flag_names(), vec!["x", "z"]);
        assert_eq!(outcome.md5_shortcuts, 2);
        let without_shortcut = {
            let (entry2, point2) = record_solution_seeded(
                &registry, &store, &space, with_flags(&["x", "y", "z", "w"]), 123,
            );
            let mut r = Reducer::new(&registry, &store, &space, Backend::Synthetic, 7);
            r.reduce(&entry2, &point2, &PruneConfig::default()).unwrap().measurements
        };
        assert!(outcome.measurements < without_shortcut);
    }

    #[test]
    fn invert_partitions_space_into_on_and_off() {
        let spec = SyntheticSpec::new(10.0, 10_000).with_effect("x", FlagEffect::timed(0.5));
        let (_tmp, registry) = synthetic_repo("syn", spec);
        let store = Store::open(registry.root()).unwrap();
        let space = boolean_space(&["x", "y"]);
        let (entry, point) = record_solution(&registry, &store, &space, with_flags(&["x"]));
        let mut reducer = Reducer::new(&registry, &store, &space, Backend::Synthetic, 7);
        let outcome = reducer.invert(&entry, &point, &PruneConfig::default()).unwrap();
        assert_eq!(outcome.assignment.values.get("x"), Some(&FlagValue::Switch(true)));
        assert_eq!(outcome.assignment.values.get("y"), Some(&FlagValue::Switch(false)));
        assert_eq!(outcome.rendered, "-O3 -fx -fno-y");
    }

    #[test]
    fn invert_on_empty_space_changes_nothing() {
        let spec = SyntheticSpec::new(10.0, 10_000);
        let (_tmp, registry) = synthetic_repo("syn", spec);
        let store = Store::open(registry.root()).unwrap();
        let space = boolean_space(&[]);
        let (entry, point) = record_solution(&registry, &store, &space, with_flags(&[]));
        let mut reducer = Reducer::new(&registry, &store, &space, Backend::Synthetic, 7);
        let outcome = reducer.invert(&entry, &point, &PruneConfig::default()).unwrap();
        assert!(outcome.assignment.values.is_empty());
    }

    #[test]
    fn contribution_arithmetic_and_verdicts() {
        let spec = SyntheticSpec::new(10.0, 10_000)
            .with_effect("fast", FlagEffect::timed(0.8))
            .with_effect("slow", FlagEffect::timed(1.25));
        let (_tmp, registry) = synthetic_repo("syn", spec);
        let store = Store::open(registry.root()).unwrap();
        let space = boolean_space(&["fast", "slow", "idle"]);
        let (entry, point) =
            record_solution(&registry, &store, &space, with_flags(&["fast", "slow", "idle"]));
        let mut reducer = Reducer::new(&registry, &store, &space, Backend::Synthetic, 7);
        let report = reducer.contribution(&entry, &point, 0.025).unwrap();
        assert_eq!(report.rows.len(), 3);
        let row = |name: &str| report.rows.iter().find(|r| r.flag == name).unwrap();

        let fast = row("fast");
        assert_eq!(fast.verdict, Verdict::Improves);
        assert!((fast.deltas["execution_time"] - 0.25).abs() < 1e-9);

        let slow = row("slow");
        assert_eq!(slow.verdict, Verdict::Degrades);
        assert!((slow.deltas["execution_time"] + 0.2).abs() < 1e-9);

        let idle = row("idle");
        assert_eq!(idle.verdict, Verdict::Neutral);
        assert!(idle.deltas["execution_time"].abs() < 1e-12);
    }

    #[test]
    fn single_flag_solution_yields_one_row() {
        let spec = SyntheticSpec::new(10.0, 10_000).with_effect("x", FlagEffect::timed(0.9));
        let (_tmp, registry) = synthetic_repo("syn", spec);
        let store = Store::open(registry.root()).unwrap();
        let space = boolean_space(&["x"]);
        let (entry, point) = record_solution(&registry, &store, &space, with_flags(&["x"]));
        let mut reducer = Reducer::new(&registry, &store, &space, Backend::Synthetic, 7);
        let report = reducer.contribution(&entry, &point, 0.025).unwrap();
        assert_eq!(report.rows.len(), 1);
    }

    fn record_fuzz_point(
        registry: &Registry,
        store: &Store,
        space: &FlagSpace,
        assignment: FlagAssignment,
    ) -> (String, String) {
        let mut scenario = Scenario::new("fuzz-test", 0, 1);
        scenario.record_policy = RecordPolicy::FailuresOnly;
        scenario.baseline = Some(assignment);
        let mut explorer = Explorer::new(registry, store, space, Backend::Synthetic, 77);
        let entry_uid = explorer.autotune(&scenario, "syn", None, "run").unwrap();
        let entry = store.load_entry(&entry_uid).unwrap();
        assert_eq!(entry.points.len(), 1, "baseline should have failed and been recorded");
        (entry_uid.clone(), entry.points[0].clone())
    }

    #[test]
    fn minimize_failure_to_single_trigger_flag() {
        let spec = SyntheticSpec::new(10.0, 10_000)
            .with_effect("bug", FlagEffect::failing(FailureKind::CompilerCrash))
            .with_effect("a", FlagEffect::timed(0.9));
        let (_tmp, registry) = synthetic_repo("syn", spec);
        let store = Store::open(registry.root()).unwrap();
        let names: Vec<String> = (0..11).map(|i| format!("n{i}")).collect();
        let mut all: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        all.push("bug");
        let space = boolean_space(&all);
        let (entry, point) = record_fuzz_point(&registry, &store, &space, with_flags(&all));

        let mut reducer = Reducer::new(&registry, &store, &space, Backend::Synthetic, 13);
        let outcome = reducer.minimize_failure(&entry, &point, &PruneConfig::default()).unwrap();
        assert_eq!(outcome.assignment.flag_names(), vec!["bug"]);

        // 1-minimality by construction: remove the last flag, no failure
        let empty = outcome.assignment.without_flag("bug");
        let pipeline = Pipeline::new(&registry, &space);
        let result = pipeline
            .execute(&PipelineRequest {
                workload: "syn".into(),
                dataset: None,
                command_key: "run".into(),
                assignment: empty,
                backend: Backend::Synthetic,
                repetitions: 1,
                timeout_secs: 60.0,
                seed: 0,
                keep_artifacts: false,
            })
            .unwrap();
        assert!(result.failure.is_none());
    }

    #[test]
    fn minimize_failure_rejects_unreproducible_point() {
        let spec = SyntheticSpec::new(10.0, 10_000)
            .with_effect("bug", FlagEffect::failing(FailureKind::CompilerCrash));
        let (_tmp, registry) = synthetic_repo("syn", spec);
        let store = Store::open(registry.root()).unwrap();
        let space = boolean_space(&["bug", "other"]);
        let (entry, point) = record_fuzz_point(&registry, &store, &space, with_flags(&["bug"]));

        // simulate the fixed-compiler case: drop the failure effect
        let meta_path = registry.workload_dir("syn").join("meta.json");
        let mut meta = registry.workload("syn").unwrap();
        meta.synthetic.as_mut().unwrap().flag_effects.clear();
        std::fs::write(&meta_path, serde_json::to_vec_pretty(&meta).unwrap()).unwrap();

        let mut reducer = Reducer::new(&registry, &store, &space, Backend::Synthetic, 13);
        match reducer.minimize_failure(&entry, &point, &PruneConfig::default()) {
            Err(Error::Contract(msg)) => assert!(msg.contains("not reproducible")),
            other => panic!("expected not-reproducible error, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_order_is_stable() {
        let spec = SyntheticSpec::new(10.0, 10_000).with_effect("x", FlagEffect::timed(0.5));
        let (_tmp, registry) = synthetic_repo("syn", spec);
        let store = Store::open(registry.root()).unwrap();
        let space = boolean_space(&["x", "y", "z"]);
        let (entry, point) =
            record_solution(&registry, &store, &space, with_flags(&["x", "y", "z"]));
        let config = PruneConfig { deterministic_order: true, ..Default::default() };
        let mut r1 = Reducer::new(&registry, &store, &space, Backend::Synthetic, 1);
        let mut r2 = Reducer::new(&registry, &store, &space, Backend::Synthetic, 2);
        let o1 = r1.reduce(&entry, &point, &config).unwrap();
        let o2 = r2.reduce(&entry, &point, &config).unwrap();
        assert_eq!(o1.assignment, o2.assignment);
        assert_eq!(o1.removed, o2.removed);
    }
}
