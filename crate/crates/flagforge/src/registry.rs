//! Workload and dataset registry. Every entry is one directory in a
//! two-level layout (`kind/id`) holding a `meta.json`, so a repository
//! stays human-editable and diff-friendly.
//!
//! Workloads are either real programs with build/run command templates or
//! synthetic response functions evaluated by the pipeline's deterministic
//! backend.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::FeatureVector;
use crate::pipeline::FailureKind;

pub const WORKLOAD_KIND: &str = "workload";
pub const DATASET_KIND: &str = "dataset";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadKind {
    Real,
    Synthetic,
}

/// Integer knob exposed by a workload, rendered as an environment variable
/// on the run command (the `CT_BLOCK_SIZE` pattern).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunableParam {
    pub name: String,
    pub min: i64,
    pub max: i64,
    pub env_var: String,
}

/// How produced output is validated against a stored reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ReferenceOutput {
    /// Exact MD5 of the produced bytes (the strict default).
    Digest { md5: String },
    /// Byte equality against a stored file (resolved against the entry dir).
    File { path: PathBuf },
    /// Whitespace-separated numbers compared with per-value relative
    /// tolerance against a stored file.
    Numeric { path: PathBuf, tolerance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadMeta {
    pub id: String,
    pub title: String,
    pub kind: WorkloadKind,
    /// Build command with {compiler} {flags} {output} {workload_dir}
    /// placeholders; absent for synthetic workloads.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub build_template: Option<String>,
    /// command key -> run template with {binary} {dataset} {output}
    /// {workload_dir} placeholders.
    #[serde(default)]
    pub run_commands: BTreeMap<String, String>,
    /// "command_key:dataset_id" (or "command_key:*") -> reference.
    #[serde(default)]
    pub reference_output: BTreeMap<String, ReferenceOutput>,
    #[serde(default)]
    pub dataset_tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_file: Option<PathBuf>,
    #[serde(default)]
    pub tunable_params: Vec<TunableParam>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    /// Builds whose binary MD5 is expected to be stable across identical
    /// compiles; lets replay assert digest equality.
    #[serde(default)]
    pub deterministic_build: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub id: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub files: Vec<PathBuf>,
    /// Named dataset parameters (e.g. square matrix size), exported on the
    /// run environment as-is.
    #[serde(default)]
    pub params: BTreeMap<String, i64>,
}

/// Effect of one enabled flag in a synthetic workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagEffect {
    #[serde(default = "one")]
    pub time_multiplier: f64,
    #[serde(default)]
    pub size_delta: i64,
    /// Present when the flag changes the produced binary without (or in
    /// addition to) changing time/size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub md5_salt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureKind>,
    /// Restricts the effect to datasets whose named parameter exceeds a
    /// threshold (models input-dependent optimizations).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_gate: Option<DatasetGate>,
}

fn one() -> f64 {
    1.0
}

impl Default for FlagEffect {
    fn default() -> Self {
        FlagEffect {
            time_multiplier: 1.0,
            size_delta: 0,
            md5_salt: None,
            failure: None,
            dataset_gate: None,
        }
    }
}

impl FlagEffect {
    pub fn timed(multiplier: f64) -> Self {
        FlagEffect { time_multiplier: multiplier, ..Default::default() }
    }

    pub fn sized(delta: i64) -> Self {
        FlagEffect { size_delta: delta, ..Default::default() }
    }

    pub fn failing(kind: FailureKind) -> Self {
        FlagEffect { failure: Some(kind), ..Default::default() }
    }

    /// True when the flag influences the produced binary at all.
    pub fn affects_binary(&self) -> bool {
        self.time_multiplier != 1.0
            || self.size_delta != 0
            || self.md5_salt.is_some()
            || self.failure.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetGate {
    pub param: String,
    pub above: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum NoiseModel {
    None,
    Gaussian { sigma: f64 },
    Bimodal { offset: f64, probability: f64 },
}

/// Deterministic response function standing in for a real compile+run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(default)]
    pub flag_effects: BTreeMap<String, FlagEffect>,
    pub base_time: f64,
    pub base_size: u64,
    #[serde(default = "default_noise")]
    pub noise_model: NoiseModel,
}

fn default_noise() -> NoiseModel {
    NoiseModel::None
}

impl SyntheticSpec {
    pub fn new(base_time: f64, base_size: u64) -> Self {
        SyntheticSpec {
            flag_effects: BTreeMap::new(),
            base_time,
            base_size,
            noise_model: NoiseModel::None,
        }
    }

    pub fn with_effect(mut self, flag: &str, effect: FlagEffect) -> Self {
        self.flag_effects.insert(flag.to_string(), effect);
        self
    }
}

const BUILD_PLACEHOLDERS: &[&str] = &["compiler", "flags", "output", "workload_dir"];
const RUN_PLACEHOLDERS: &[&str] = &["binary", "dataset", "output", "workload_dir"];

fn check_placeholders(template: &str, allowed: &[&str]) -> Result<()> {
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        let Some(end) = rest[start..].find('}') else {
            return Err(Error::invalid(format!("unclosed placeholder in template {template:?}")));
        };
        let name = &rest[start + 1..start + end];
        if !allowed.contains(&name) {
            return Err(Error::invalid(format!(
                "unresolvable placeholder {{{name}}} in template {template:?}"
            )));
        }
        rest = &rest[start + end + 1..];
    }
    Ok(())
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

pub(crate) fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_bytes_atomic(path, serde_json::to_vec_pretty(value)?)
}

/// Compact form for machine-volume records (experiment points).
pub(crate) fn write_json_compact<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_bytes_atomic(path, serde_json::to_vec(value)?)
}

fn write_bytes_atomic(path: &Path, bytes: Vec<u8>) -> Result<()> {
    let parent = path.parent().ok_or_else(|| Error::invalid("path without parent"))?;
    std::fs::create_dir_all(parent)?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let tmp = parent.join(format!(".tmp.{file_name}"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Directory-backed registry rooted at `<repo>/workload` and
/// `<repo>/dataset`. Reads are lock-free; mutations serialize on a lock
/// file because entry writes are rename-committed.
#[derive(Debug, Clone)]
pub struct Registry {
    root: PathBuf,
}

impl Registry {
    pub fn open(root: impl Into<PathBuf>) -> Result<Registry> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        // builds run from scratch directories; entry paths must stay valid
        let root = root.canonicalize()?;
        Ok(Registry { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_dir(&self, kind: &str, id: &str) -> PathBuf {
        self.root.join(kind).join(id)
    }

    pub fn workload_dir(&self, id: &str) -> PathBuf {
        self.entry_dir(WORKLOAD_KIND, id)
    }

    pub fn dataset_dir(&self, id: &str) -> PathBuf {
        self.entry_dir(DATASET_KIND, id)
    }

    fn lock(&self) -> Result<MutationLock> {
        MutationLock::acquire(self.root.join(".registry.lock"))
    }

    pub fn register_workload(&self, meta: &WorkloadMeta) -> Result<String> {
        if !valid_id(&meta.id) {
            return Err(Error::invalid(format!("bad workload id {:?}", meta.id)));
        }
        match meta.kind {
            WorkloadKind::Real => {
                if meta.synthetic.is_some() {
                    return Err(Error::invalid("real workload carries a synthetic spec"));
                }
                let template = meta
                    .build_template
                    .as_deref()
                    .ok_or_else(|| Error::invalid("real workload needs a build_template"))?;
                check_placeholders(template, BUILD_PLACEHOLDERS)?;
                for run in meta.run_commands.values() {
                    check_placeholders(run, RUN_PLACEHOLDERS)?;
                }
            }
            WorkloadKind::Synthetic => {
                let spec = meta
                    .synthetic
                    .as_ref()
                    .ok_or_else(|| Error::invalid("synthetic workload needs a spec"))?;
                if spec.base_time <= 0.0 {
                    return Err(Error::invalid("synthetic base_time must be > 0"));
                }
                if spec.base_size == 0 {
                    return Err(Error::invalid("synthetic base_size must be > 0"));
                }
                for effect in spec.flag_effects.values() {
                    if effect.time_multiplier <= 0.0 {
                        return Err(Error::invalid("time_multiplier must be > 0"));
                    }
                }
                if meta.build_template.is_some() || !meta.run_commands.is_empty() {
                    return Err(Error::invalid(
                        "synthetic workload must not carry build/run templates",
                    ));
                }
            }
        }
        let _lock = self.lock()?;
        let path = self.workload_dir(&meta.id).join("meta.json");
        if path.exists() {
            return Err(Error::DuplicateId(meta.id.clone()));
        }
        write_json_atomic(&path, meta)?;
        Ok(meta.id.clone())
    }

    pub fn workload(&self, id: &str) -> Result<WorkloadMeta> {
        let path = self.workload_dir(id).join("meta.json");
        let text =
            std::fs::read_to_string(&path).map_err(|_| Error::UnknownWorkload(id.to_string()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn list_workloads(&self) -> Result<Vec<String>> {
        self.list_ids(WORKLOAD_KIND)
    }

    pub fn register_dataset(&self, meta: &DatasetMeta) -> Result<String> {
        if !valid_id(&meta.id) {
            return Err(Error::invalid(format!("bad dataset id {:?}", meta.id)));
        }
        let _lock = self.lock()?;
        let path = self.dataset_dir(&meta.id).join("meta.json");
        if path.exists() {
            return Err(Error::DuplicateId(meta.id.clone()));
        }
        write_json_atomic(&path, meta)?;
        Ok(meta.id.clone())
    }

    pub fn dataset(&self, id: &str) -> Result<DatasetMeta> {
        let path = self.dataset_dir(id).join("meta.json");
        let text =
            std::fs::read_to_string(&path).map_err(|_| Error::UnknownDataset(id.to_string()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn list_datasets(&self) -> Result<Vec<String>> {
        self.list_ids(DATASET_KIND)
    }

    fn list_ids(&self, kind: &str) -> Result<Vec<String>> {
        let dir = self.root.join(kind);
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut ids: Vec<String> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join("meta.json").is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        ids.sort();
        Ok(ids)
    }

    /// Resolve a dataset file path against the dataset's entry directory.
    pub fn dataset_file(&self, meta: &DatasetMeta, file: &Path) -> PathBuf {
        if file.is_absolute() {
            file.to_path_buf()
        } else {
            self.dataset_dir(&meta.id).join(file)
        }
    }

    /// All datasets whose tags intersect the workload's dataset tags and
    /// match the optional filter tag, sorted by id. Listed files must exist.
    pub fn resolve_datasets(
        &self,
        workload_id: &str,
        filter_tag: Option<&str>,
    ) -> Result<Vec<DatasetMeta>> {
        let workload = self.workload(workload_id)?;
        let mut out = Vec::new();
        for id in self.list_datasets()? {
            let meta = self.dataset(&id)?;
            let intersects = meta.tags.iter().any(|t| workload.dataset_tags.contains(t));
            let filtered = filter_tag.map(|f| meta.tags.iter().any(|t| t == f)).unwrap_or(true);
            if intersects && filtered {
                for file in &meta.files {
                    let resolved = self.dataset_file(&meta, file);
                    if !resolved.exists() {
                        return Err(Error::invalid(format!(
                            "dataset {id}: file {} missing at resolution time",
                            resolved.display()
                        )));
                    }
                }
                out.push(meta);
            }
        }
        Ok(out)
    }

    /// Load the workload's feature vector file ({"ft1": number, ...}).
    /// Missing keys stay absent; they are never zero-filled here.
    pub fn load_feature_vector(&self, workload_id: &str) -> Result<FeatureVector> {
        let workload = self.workload(workload_id)?;
        let file = workload
            .feature_file
            .as_ref()
            .ok_or_else(|| Error::contract(format!("workload {workload_id} has no feature file")))?;
        let path = if file.is_absolute() {
            file.clone()
        } else {
            self.workload_dir(workload_id).join(file)
        };
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::invalid(format!("feature file {} unreadable: {e}", path.display()))
        })?;
        FeatureVector::from_json(workload_id, &text)
    }
}

/// Exclusive mutation lock backed by an O_EXCL lock file.
pub(crate) struct MutationLock {
    path: PathBuf,
}

impl MutationLock {
    pub(crate) fn acquire(path: PathBuf) -> Result<MutationLock> {
        // A handful of quick retries covers concurrent registrations; the
        // registry is read-mostly so contention is rare.
        for _ in 0..50 {
            match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(_) => return Ok(MutationLock { path }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    std::thread::sleep(std::time::Duration::from_millis(10));
                }
                Err(e) => return Err(e.into()),
            }
        }
        Err(Error::environment(format!("could not acquire lock {}", path.display())))
    }
}

impl Drop for MutationLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
