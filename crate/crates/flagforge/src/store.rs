//! Persistent, UID-addressed store of experiments. Layout:
//! `<repo>/experiment/<entry_uid>/meta.json` plus one JSON file per point
//! under `points/`. Writes go to a temp file and rename into place, so a
//! crash never loses committed records. One writer per entry, enforced by
//! an entry lock file; readers need no lock.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explorer;
use crate::flagspace::{FlagAssignment, FlagSpace};
use crate::pipeline::{Backend, CompilerEnv, FailureKind, Pipeline, PipelineRequest};
use crate::registry::{self, Registry};
use crate::stats::CharacteristicStats;

pub const EXPERIMENT_KIND: &str = "experiment";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformInfo {
    pub os: String,
    pub cpu_model: String,
    pub hostname_hash: String,
}

impl PlatformInfo {
    pub fn detect() -> PlatformInfo {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|text| {
                text.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split(':').nth(1))
                    .map(|s| s.trim().to_string())
            })
            .unwrap_or_else(|| "unknown".to_string());
        let hostname = std::fs::read_to_string("/etc/hostname")
            .map(|s| s.trim().to_string())
            .unwrap_or_else(|_| "unknown".to_string());
        PlatformInfo {
            os: std::env::consts::OS.to_string(),
            cpu_model,
            hostname_hash: crate::uid::content_uid(&hostname),
        }
    }

    /// platform class used as a crowd aggregation key
    pub fn class(&self) -> String {
        format!("{}/{}", self.os, self.cpu_model)
    }
}

/// Baseline measurement kept on the entry for reactions and drift checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSnapshot {
    pub assignment: FlagAssignment,
    pub rendered: String,
    pub characteristics: BTreeMap<String, CharacteristicStats>,
    pub binary_md5: Option<String>,
}

/// Periodic baseline re-measurement against the original.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftCheck {
    pub iteration: usize,
    pub ratio: f64,
    pub exceeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentEntry {
    pub entry_uid: String,
    pub scenario_id: String,
    pub workload: String,
    pub dataset: Option<String>,
    pub compiler: Option<CompilerEnv>,
    pub platform: PlatformInfo,
    pub created_at_unix: u64,
    pub objectives: Vec<String>,
    pub points: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineSnapshot>,
    #[serde(default)]
    pub drift: Vec<DriftCheck>,
}

impl ExperimentEntry {
    pub fn new(
        entry_uid: String,
        scenario_id: &str,
        workload: &str,
        dataset: Option<&str>,
        compiler: Option<CompilerEnv>,
        objectives: Vec<String>,
    ) -> Self {
        ExperimentEntry {
            entry_uid,
            scenario_id: scenario_id.to_string(),
            workload: workload.to_string(),
            dataset: dataset.map(String::from),
            compiler,
            platform: PlatformInfo::detect(),
            created_at_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            objectives,
            points: Vec::new(),
            baseline: None,
            drift: Vec::new(),
        }
    }
}

/// Everything needed to re-run a point on another machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayInfo {
    pub command_key: String,
    pub dataset: Option<String>,
    pub seed: u64,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPoint {
    pub point_uid: String,
    pub assignment: FlagAssignment,
    /// render(assignment) at record time.
    pub rendered: String,
    /// Present exactly when the pipeline succeeded; fuzz points carry the
    /// failure kind instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub characteristics: Option<BTreeMap<String, CharacteristicStats>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary_md5: Option<String>,
    #[serde(default)]
    pub raw_samples: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureKind>,
    pub replay_info: ReplayInfo,
}

impl ExperimentPoint {
    pub fn validate(&self) -> Result<()> {
        if self.characteristics.is_some() == self.failure.is_some() {
            return Err(Error::invalid(
                "point must carry exactly one of characteristics or failure",
            ));
        }
        Ok(())
    }

    /// Expected value of one characteristic.
    pub fn expected(&self, name: &str) -> Option<f64> {
        self.characteristics.as_ref()?.get(name).map(|c| c.expected)
    }
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Store> {
        let root = root.into();
        std::fs::create_dir_all(root.join(EXPERIMENT_KIND))?;
        let root = root.canonicalize()?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_dir(&self, uid: &str) -> PathBuf {
        self.root.join(EXPERIMENT_KIND).join(uid)
    }

    fn point_path(&self, entry_uid: &str, point_uid: &str) -> PathBuf {
        self.entry_dir(entry_uid).join("points").join(format!("{point_uid}.json"))
    }

    fn index_path(&self, entry_uid: &str) -> PathBuf {
        self.entry_dir(entry_uid).join("points.index")
    }

    /// The point index is append-only so recording stays O(1) per point;
    /// meta.json itself never stores the list.
    fn persist_meta(&self, entry: &ExperimentEntry) -> Result<()> {
        let mut slim = entry.clone();
        slim.points.clear();
        registry::write_json_atomic(&self.entry_dir(&entry.entry_uid).join("meta.json"), &slim)
    }

    fn read_index(&self, entry_uid: &str) -> Result<Vec<String>> {
        match std::fs::read_to_string(self.index_path(entry_uid)) {
            Ok(text) => Ok(text.lines().map(str::to_string).collect()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(e.into()),
        }
    }

    fn entry_lock(&self, uid: &str) -> Result<registry::MutationLock> {
        registry::MutationLock::acquire(self.entry_dir(uid).join(".lock"))
    }

    pub fn create_entry(&self, entry: &ExperimentEntry) -> Result<String> {
        let dir = self.entry_dir(&entry.entry_uid);
        if dir.join("meta.json").exists() {
            return Err(Error::DuplicateId(entry.entry_uid.clone()));
        }
        std::fs::create_dir_all(dir.join("points"))?;
        self.persist_meta(entry)?;
        Ok(entry.entry_uid.clone())
    }

    pub fn load_entry(&self, uid: &str) -> Result<ExperimentEntry> {
        let path = self.entry_dir(uid).join("meta.json");
        let text = std::fs::read_to_string(&path).map_err(|_| Error::UnknownEntry(uid.into()))?;
        let mut entry: ExperimentEntry = serde_json::from_str(&text)?;
        entry.points = self.read_index(uid)?;
        Ok(entry)
    }

    pub fn update_entry(&self, entry: &ExperimentEntry) -> Result<()> {
        let path = self.entry_dir(&entry.entry_uid).join("meta.json");
        if !path.exists() {
            return Err(Error::UnknownEntry(entry.entry_uid.clone()));
        }
        self.persist_meta(entry)
    }

    /// Entries sorted by creation time, then uid.
    pub fn list_entries(&self) -> Result<Vec<ExperimentEntry>> {
        let dir = self.root.join(EXPERIMENT_KIND);
        let mut entries = Vec::new();
        for item in std::fs::read_dir(dir)? {
            let path = item?.path();
            if path.join("meta.json").is_file() {
                let uid = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
                entries.push(self.load_entry(&uid)?);
            }
        }
        entries.sort_by(|a, b| {
            a.created_at_unix.cmp(&b.created_at_unix).then_with(|| a.entry_uid.cmp(&b.entry_uid))
        });
        Ok(entries)
    }

    /// Durably write a point and update the entry index.
    pub fn record_point(&self, entry_uid: &str, point: &ExperimentPoint) -> Result<String> {
        let mut writer = self.writer(entry_uid)?;
        writer.record(point)
    }

    /// Exclusive writer for one entry: takes the entry lock once and keeps
    /// the point index open, which measurement loops recording hundreds of
    /// points care about.
    pub fn writer(&self, entry_uid: &str) -> Result<EntryWriter<'_>> {
        if !self.entry_dir(entry_uid).join("meta.json").exists() {
            return Err(Error::UnknownEntry(entry_uid.into()));
        }
        let lock = self.entry_lock(entry_uid)?;
        let uids = self.read_index(entry_uid)?;
        let index = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.index_path(entry_uid))?;
        Ok(EntryWriter { store: self, entry_uid: entry_uid.to_string(), _lock: lock, index, uids })
    }

    pub fn load_point(&self, entry_uid: &str, point_uid: &str) -> Result<ExperimentPoint> {
        let path = self.point_path(entry_uid, point_uid);
        let text =
            std::fs::read_to_string(&path).map_err(|_| Error::UnknownPoint(point_uid.into()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn remove_point(&self, entry_uid: &str, point_uid: &str) -> Result<()> {
        let mut writer = self.writer(entry_uid)?;
        writer.remove(point_uid)
    }

    pub fn load_points(&self, entry: &ExperimentEntry) -> Result<Vec<ExperimentPoint>> {
        entry.points.iter().map(|uid| self.load_point(&entry.entry_uid, uid)).collect()
    }

    /// CSV export. Known columns: point, time, time_pm, size, compile_time,
    /// flags, frontier, failure. The time column is the expected value; the
    /// half-spread (max-min)/2 travels in its own time_pm column.
    pub fn export_table(&self, entry_uid: &str, columns: &[&str]) -> Result<String> {
        const KNOWN: &[&str] =
            &["point", "time", "time_pm", "size", "compile_time", "flags", "frontier", "failure"];
        for column in columns {
            if !KNOWN.contains(column) {
                return Err(Error::contract(format!("unknown export column {column:?}")));
            }
        }
        let entry = self.load_entry(entry_uid)?;
        let points = self.load_points(&entry)?;
        let frontier = frontier_membership(&entry, &points);

        let mut out = String::new();
        out.push_str(&columns.join(","));
        out.push('\n');
        for (i, point) in points.iter().enumerate() {
            let time = point.characteristics.as_ref().and_then(|c| c.get("execution_time"));
            let size = point.expected("binary_size");
            let fields: Vec<String> = columns
                .iter()
                .map(|col| match *col {
                    "point" => point.point_uid.clone(),
                    "time" => time.map(|c| trim_float(c.expected)).unwrap_or_default(),
                    "time_pm" => time.map(|c| trim_float((c.max - c.min) / 2.0)).unwrap_or_default(),
                    "size" => size.map(trim_float).unwrap_or_default(),
                    "compile_time" => {
                        point.expected("compile_time").map(trim_float).unwrap_or_default()
                    }
                    "flags" => point.rendered.clone(),
                    "frontier" => if frontier[i] { "1" } else { "0" }.to_string(),
                    "failure" => {
                        point.failure.map(|f| f.to_string()).unwrap_or_default()
                    }
                    _ => unreachable!(),
                })
                .map(|f| csv_escape(&f))
                .collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        Ok(out)
    }
}

/// Holds the entry lock and an open index handle for a recording session.
pub struct EntryWriter<'a> {
    store: &'a Store,
    entry_uid: String,
    _lock: crate::registry::MutationLock,
    index: std::fs::File,
    uids: Vec<String>,
}

impl EntryWriter<'_> {
    pub fn record(&mut self, point: &ExperimentPoint) -> Result<String> {
        point.validate()?;
        if self.uids.contains(&point.point_uid) {
            return Err(Error::DuplicateId(point.point_uid.clone()));
        }
        let path = self.store.point_path(&self.entry_uid, &point.point_uid);
        crate::registry::write_json_compact(&path, point)?;
        use std::io::Write as _;
        writeln!(self.index, "{}", point.point_uid)?;
        self.uids.push(point.point_uid.clone());
        Ok(point.point_uid.clone())
    }

    pub fn remove(&mut self, point_uid: &str) -> Result<()> {
        let path = self.store.point_path(&self.entry_uid, point_uid);
        if !path.exists() {
            return Err(Error::UnknownPoint(point_uid.into()));
        }
        std::fs::remove_file(path)?;
        self.uids.retain(|p| p != point_uid);
        let index_path = self.store.index_path(&self.entry_uid);
        let tmp = self.store.entry_dir(&self.entry_uid).join(".tmp.points.index");
        let mut text = self.uids.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        std::fs::write(&tmp, text)?;
        std::fs::rename(tmp, &index_path)?;
        // the old handle points at the replaced inode
        self.index =
            std::fs::OpenOptions::new().create(true).append(true).open(index_path)?;
        Ok(())
    }
}

fn trim_float(v: f64) -> String {
    format!("{v}")
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Per-point frontier membership over the entry's objectives.
fn frontier_membership(entry: &ExperimentEntry, points: &[ExperimentPoint]) -> Vec<bool> {
    let objectives: Vec<&str> = if entry.objectives.is_empty() {
        vec!["execution_time", "binary_size"]
    } else {
        entry.objectives.iter().map(|s| s.as_str()).collect()
    };
    let vectors: Vec<Option<Vec<f64>>> = points
        .iter()
        .map(|p| objectives.iter().map(|o| p.expected(o)).collect::<Option<Vec<f64>>>())
        .collect();
    let candidates: Vec<explorer::FrontierPoint> = vectors
        .iter()
        .enumerate()
        .filter_map(|(i, v)| {
            v.as_ref().map(|objectives| explorer::FrontierPoint {
                point_uid: points[i].point_uid.clone(),
                objectives: objectives.clone(),
            })
        })
        .collect();
    let frontier = explorer::pareto_filter(&candidates).unwrap_or_default();
    points
        .iter()
        .map(|p| frontier.iter().any(|f| f.point_uid == p.point_uid))
        .collect()
}

/// One characteristic's replay comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayRow {
    pub characteristic: String,
    pub original: f64,
    pub replayed: f64,
    pub relative_difference: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayReport {
    pub entry_uid: String,
    pub point_uid: String,
    pub tolerance: f64,
    pub rows: Vec<ReplayRow>,
    /// Informative only; an md5 mismatch never fails a replay.
    pub md5_match: Option<bool>,
    pub original_failure: Option<FailureKind>,
    pub replayed_failure: Option<FailureKind>,
    /// Failure kind changed between record and replay (e.g. a compiler bug
    /// fixed by a newer version).
    pub behavioral_difference: bool,
    pub pass: bool,
}

/// Re-execute a stored point and report per-characteristic differences
/// under the trust gate.
pub fn replay(
    store: &Store,
    registry: &Registry,
    space: &FlagSpace,
    backend: Backend,
    entry_uid: &str,
    point_uid: &str,
    tolerance: f64,
) -> Result<ReplayReport> {
    let entry = store.load_entry(entry_uid)?;
    let point = store.load_point(entry_uid, point_uid)?;
    let pipeline = Pipeline::new(registry, space);
    // Fresh seed: a replay is a re-measurement, not a replay of the noise.
    let seed = point
        .replay_info
        .seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    let request = PipelineRequest {
        workload: entry.workload.clone(),
        dataset: point.replay_info.dataset.clone(),
        command_key: point.replay_info.command_key.clone(),
        assignment: point.assignment.clone(),
        backend,
        repetitions: point.replay_info.repetitions.max(1),
        timeout_secs: 60.0,
        seed,
        keep_artifacts: false,
    };
    let result = pipeline.execute(&request)?;
    let replayed = result.characteristics(&crate::stats::StatsConfig::default())?;

    let mut rows = Vec::new();
    let mut all_pass = true;
    if let (Some(original), Some(new)) = (point.characteristics.as_ref(), replayed.as_ref()) {
        for (name, old_stats) in original {
            let Some(new_stats) = new.get(name) else { continue };
            let relative_difference = if old_stats.expected == 0.0 {
                0.0
            } else {
                (new_stats.expected - old_stats.expected).abs() / old_stats.expected
            };
            let pass = relative_difference <= tolerance;
            all_pass &= pass;
            rows.push(ReplayRow {
                characteristic: name.clone(),
                original: old_stats.expected,
                replayed: new_stats.expected,
                relative_difference,
                pass,
            });
        }
    }
    let behavioral_difference = point.failure != result.failure;
    let md5_match = match (&point.binary_md5, &result.binary_md5) {
        (Some(a), Some(b)) => Some(a == b),
        _ => None,
    };
    Ok(ReplayReport {
        entry_uid: entry_uid.to_string(),
        point_uid: point_uid.to_string(),
        tolerance,
        rows,
        md5_match,
        original_failure: point.failure,
        replayed_failure: result.failure,
        behavioral_difference,
        pass: all_pass && !behavioral_difference,
    })
}
