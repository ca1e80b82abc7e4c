//! Compile+run pipeline. One request takes a (workload, dataset, flag
//! assignment) through a build and repeated timed runs against either a
//! detected real compiler or the synthetic backend, and reports raw
//! characteristics: compile time, sizes, binary MD5 and per-run wall times.
//!
//! Failures are data, not errors: every way a pipeline can break maps to a
//! [`FailureKind`] inside the result. `execute` itself only fails on
//! registry or contract violations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flagspace::{FlagAssignment, FlagSpace, FlagValue};
use crate::registry::{DatasetMeta, NoiseModel, ReferenceOutput, Registry, SyntheticSpec, WorkloadKind};
use crate::stats::{self, CharacteristicStats, StatsConfig};

/// Everything that can go wrong in one pipeline, in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailureKind {
    CompilerCrash,
    CompileError,
    RuntimeCrash,
    WrongOutput,
    Timeout,
}

impl FailureKind {
    pub fn is_compile_failure(&self) -> bool {
        matches!(self, FailureKind::CompilerCrash | FailureKind::CompileError)
    }
}

impl std::fmt::Display for FailureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FailureKind::CompilerCrash => "COMPILER_CRASH",
            FailureKind::CompileError => "COMPILE_ERROR",
            FailureKind::RuntimeCrash => "RUNTIME_CRASH",
            FailureKind::WrongOutput => "WRONG_OUTPUT",
            FailureKind::Timeout => "TIMEOUT",
        };
        f.write_str(s)
    }
}

/// One detected compiler installation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompilerEnv {
    pub id: String,
    /// gcc or clang
    pub family: String,
    pub version: String,
    pub path: PathBuf,
    pub detected_at_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Backend {
    Synthetic,
    Real(CompilerEnv),
}

impl Backend {
    pub fn compiler(&self) -> Option<&CompilerEnv> {
        match self {
            Backend::Real(env) => Some(env),
            Backend::Synthetic => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineRequest {
    pub workload: String,
    pub dataset: Option<String>,
    pub command_key: String,
    pub assignment: FlagAssignment,
    pub backend: Backend,
    pub repetitions: usize,
    pub timeout_secs: f64,
    /// Seeds the synthetic noise model; a replay draws a fresh seed so that
    /// noise is re-sampled like a real re-measurement.
    pub seed: u64,
    #[serde(default)]
    pub keep_artifacts: bool,
}

impl PipelineRequest {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::contract("repetitions must be >= 1"));
        }
        if self.timeout_secs <= 0.0 {
            return Err(Error::contract("timeout must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub wall_time: f64,
    pub exit_status: i32,
    /// Defined only for zero exit status with an available reference.
    pub output_ok: Option<bool>,
    pub failure: Option<FailureKind>,
    /// Monotonic offset from pipeline start; runs never overlap, so these
    /// are strictly increasing.
    pub start_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub compile_ok: bool,
    pub compile_time: f64,
    pub binary_size: u64,
    pub object_size: u64,
    pub binary_md5: Option<String>,
    pub runs: Vec<RunOutcome>,
    pub failure: Option<FailureKind>,
}

impl PipelineResult {
    fn compile_failed(kind: FailureKind, compile_time: f64) -> Self {
        PipelineResult {
            compile_ok: false,
            compile_time,
            binary_size: 0,
            object_size: 0,
            binary_md5: None,
            runs: Vec::new(),
            failure: Some(kind),
        }
    }

    /// Summarize into named characteristics; None when the pipeline failed.
    pub fn characteristics(
        &self,
        cfg: &StatsConfig,
    ) -> Result<Option<BTreeMap<String, CharacteristicStats>>> {
        if self.failure.is_some() {
            return Ok(None);
        }
        let times: Vec<f64> = self.runs.iter().map(|r| r.wall_time).collect();
        let mut map = BTreeMap::new();
        map.insert("execution_time".to_string(), stats::summarize(&times, cfg)?);
        map.insert(
            "compile_time".to_string(),
            CharacteristicStats::constant(self.compile_time.max(f64::MIN_POSITIVE)),
        );
        map.insert(
            "binary_size".to_string(),
            CharacteristicStats::constant(self.binary_size.max(1) as f64),
        );
        map.insert(
            "object_size".to_string(),
            CharacteristicStats::constant(self.object_size.max(1) as f64),
        );
        Ok(Some(map))
    }

    pub fn raw_samples(&self) -> BTreeMap<String, Vec<f64>> {
        let mut map = BTreeMap::new();
        map.insert(
            "execution_time".to_string(),
            self.runs.iter().map(|r| r.wall_time).collect(),
        );
        map
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Probe directories for gcc/clang executables and query their versions.
/// Multiple versions co-exist as separate envs; duplicates (same resolved
/// path and version) collapse to one.
pub fn detect_compilers(probe_dirs: &[PathBuf]) -> Vec<CompilerEnv> {
    let mut found: Vec<CompilerEnv> = Vec::new();
    let mut seen: Vec<(PathBuf, String)> = Vec::new();
    for dir in probe_dirs {
        let Ok(entries) = std::fs::read_dir(dir) else { continue };
        let mut names: Vec<PathBuf> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .map(is_compiler_name)
                    .unwrap_or(false)
            })
            .collect();
        names.sort();
        for path in names {
            let Some((family, version)) = query_version(&path) else { continue };
            let resolved = std::fs::canonicalize(&path).unwrap_or_else(|_| path.clone());
            let key = (resolved, version.clone());
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            found.push(CompilerEnv {
                id: format!("{family}-{version}"),
                family,
                version,
                path,
                detected_at_unix: unix_now(),
            });
        }
    }
    found.sort_by(|a, b| {
        (a.family.clone(), crate::flagspace::version_key(&a.version))
            .cmp(&(b.family.clone(), crate::flagspace::version_key(&b.version)))
    });
    found
}

/// Default probe list: every directory on PATH.
pub fn default_probe_dirs() -> Vec<PathBuf> {
    std::env::var_os("PATH")
        .map(|p| std::env::split_paths(&p).collect())
        .unwrap_or_default()
}

fn is_compiler_name(name: &str) -> bool {
    for base in ["gcc", "clang"] {
        if name == base {
            return true;
        }
        if let Some(rest) = name.strip_prefix(&format!("{base}-")) {
            return !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit() || c == '.');
        }
    }
    false
}

fn query_version(path: &Path) -> Option<(String, String)> {
    let output = Command::new(path)
        .arg("--version")
        .stdin(Stdio::null())
        .output()
        .ok()?;
    if !output.status.success() {
        return None;
    }
    let text = String::from_utf8_lossy(&output.stdout);
    let first = text.lines().next()?;
    let family = if first.contains("clang") {
        "clang"
    } else if first.contains("gcc") || first.contains("GCC") {
        "gcc"
    } else {
        return None;
    };
    let version = extract_version(first)?;
    Some((family.to_string(), version))
}

/// Pull the first dotted numeric version out of a --version line, trimming
/// vendor suffixes like "14.0.0-1ubuntu1.1".
fn extract_version(line: &str) -> Option<String> {
    for token in line.split_whitespace() {
        let cleaned: String = token
            .chars()
            .take_while(|c| c.is_ascii_digit() || *c == '.')
            .collect();
        if cleaned.contains('.')
            && cleaned.chars().next().map(|c| c.is_ascii_digit()).unwrap_or(false)
        {
            return Some(cleaned.trim_end_matches('.').to_string());
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationOutcome {
    Passed,
    Failed,
    Skipped,
}

/// Validate produced bytes against a reference. Missing reference means
/// skipped, never failed.
pub fn validate_output(
    produced: &[u8],
    reference: Option<&ReferenceOutput>,
    base_dir: &Path,
) -> Result<ValidationOutcome> {
    let Some(reference) = reference else {
        return Ok(ValidationOutcome::Skipped);
    };
    let outcome = match reference {
        ReferenceOutput::Digest { md5 } => {
            let digest = format!("{:x}", md5::compute(produced));
            digest == md5.to_lowercase()
        }
        ReferenceOutput::File { path } => {
            let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
            let expected = std::fs::read(&full)?;
            produced == expected.as_slice()
        }
        ReferenceOutput::Numeric { path, tolerance } => {
            let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
            let expected = std::fs::read_to_string(&full)?;
            let got = String::from_utf8_lossy(produced).to_string();
            numeric_equal(&got, &expected, *tolerance)?
        }
    };
    Ok(if outcome { ValidationOutcome::Passed } else { ValidationOutcome::Failed })
}

fn numeric_equal(a: &str, b: &str, tolerance: f64) -> Result<bool> {
    let parse = |text: &str| -> Result<Vec<f64>> {
        text.split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("non-numeric token {t:?} in output")))
            })
            .collect()
    };
    let (va, vb) = (parse(a)?, parse(b)?);
    if va.len() != vb.len() {
        return Ok(false);
    }
    Ok(va.iter().zip(vb.iter()).all(|(x, y)| {
        if x == y {
            return true;
        }
        (x - y).abs() / x.abs().max(y.abs()) <= tolerance
    }))
}

/// Executes pipelines against a registry. Reentrant for distinct scratch
/// directories; the explorer serializes timed runs per machine.
pub struct Pipeline<'a> {
    registry: &'a Registry,
    space: &'a FlagSpace,
    /// Measurement loops hit the same workload thousands of times; one
    /// cached meta read covers them.
    workload_cache: std::cell::RefCell<Option<(String, crate::registry::WorkloadMeta)>>,
}

impl<'a> Pipeline<'a> {
    pub fn new(registry: &'a Registry, space: &'a FlagSpace) -> Self {
        Pipeline { registry, space, workload_cache: std::cell::RefCell::new(None) }
    }

    fn workload(&self, id: &str) -> Result<crate::registry::WorkloadMeta> {
        if let Some((cached_id, meta)) = self.workload_cache.borrow().as_ref() {
            if cached_id == id {
                return Ok(meta.clone());
            }
        }
        let meta = self.registry.workload(id)?;
        *self.workload_cache.borrow_mut() = Some((id.to_string(), meta.clone()));
        Ok(meta)
    }

    pub fn space(&self) -> &FlagSpace {
        self.space
    }

    pub fn registry(&self) -> &Registry {
        self.registry
    }

    pub fn execute(&self, request: &PipelineRequest) -> Result<PipelineResult> {
        request.validate()?;
        self.run(request, false)
    }

    /// Compile without timed runs: enough to read the binary MD5. Backs
    /// the reducer's MD5 short-circuit.
    pub fn compile_probe(&self, request: &PipelineRequest) -> Result<PipelineResult> {
        self.run(request, true)
    }

    fn run(&self, request: &PipelineRequest, probe: bool) -> Result<PipelineResult> {
        let workload = self.workload(&request.workload)?;
        let dataset = match &request.dataset {
            Some(id) => Some(self.registry.dataset(id)?),
            None => None,
        };
        match (&request.backend, workload.kind) {
            (Backend::Synthetic, WorkloadKind::Synthetic) => {
                let spec = workload
                    .synthetic
                    .as_ref()
                    .ok_or_else(|| Error::invalid("synthetic workload without spec"))?;
                let repetitions = if probe { 0 } else { request.repetitions };
                Ok(eval_synthetic(spec, &request.workload, dataset.as_ref(), request, repetitions))
            }
            (Backend::Real(env), WorkloadKind::Real) => {
                self.execute_real(&workload, dataset.as_ref(), env, request, probe)
            }
            (Backend::Synthetic, WorkloadKind::Real) => {
                Err(Error::contract("real workload requires a real compiler backend"))
            }
            (Backend::Real(_), WorkloadKind::Synthetic) => {
                Err(Error::contract("synthetic workload runs on the synthetic backend"))
            }
        }
    }

    fn execute_real(
        &self,
        workload: &crate::registry::WorkloadMeta,
        dataset: Option<&DatasetMeta>,
        env: &CompilerEnv,
        request: &PipelineRequest,
        probe: bool,
    ) -> Result<PipelineResult> {
        if !env.path.exists() {
            return Err(Error::environment(format!(
                "compiler executable {} no longer exists",
                env.path.display()
            )));
        }
        let run_template = workload.run_commands.get(&request.command_key).ok_or_else(|| {
            Error::contract(format!(
                "workload {} has no command key {:?}",
                workload.id, request.command_key
            ))
        })?;
        let flags = self.space.render(&request.assignment)?;
        let scratch = tempfile::Builder::new().prefix("flagforge-").tempdir()?;
        let result = self.run_real_in(
            scratch.path(),
            workload,
            dataset,
            env,
            request,
            &flags,
            run_template,
            probe,
        );
        if request.keep_artifacts {
            let kept = scratch.keep();
            eprintln!("keeping build artifacts in {}", kept.display());
        }
        result
    }

    #[allow(clippy::too_many_arguments)]
    fn run_real_in(
        &self,
        scratch: &Path,
        workload: &crate::registry::WorkloadMeta,
        dataset: Option<&DatasetMeta>,
        env: &CompilerEnv,
        request: &PipelineRequest,
        flags: &str,
        run_template: &str,
        probe: bool,
    ) -> Result<PipelineResult> {
        std::fs::create_dir_all(scratch)?;
        let workload_dir = self.registry.workload_dir(&workload.id);
        let binary = scratch.join("a.out");
        let build_template = workload
            .build_template
            .as_deref()
            .ok_or_else(|| Error::invalid("real workload without build template"))?;
        let build_cmd = build_template
            .replace("{compiler}", &env.path.to_string_lossy())
            .replace("{flags}", flags)
            .replace("{output}", &binary.to_string_lossy())
            .replace("{workload_dir}", &workload_dir.to_string_lossy());

        let pipeline_start = Instant::now();
        let compile_start = Instant::now();
        let build = Command::new("sh")
            .arg("-c")
            .arg(&build_cmd)
            .current_dir(scratch)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .output()?;
        let compile_time = compile_start.elapsed().as_secs_f64();
        if !build.status.success() {
            let stderr = String::from_utf8_lossy(&build.stderr);
            let kind = if build.status.code().is_none()
                || stderr.contains("internal compiler error")
                || stderr.contains("Segmentation fault")
            {
                FailureKind::CompilerCrash
            } else {
                FailureKind::CompileError
            };
            return Ok(PipelineResult::compile_failed(kind, compile_time));
        }
        if !binary.exists() {
            return Ok(PipelineResult::compile_failed(FailureKind::CompileError, compile_time));
        }
        let binary_bytes = std::fs::read(&binary)?;
        let binary_size = binary_bytes.len() as u64;
        let binary_md5 = format!("{:x}", md5::compute(&binary_bytes));
        let object_size = object_sizes(scratch).unwrap_or(0).max(binary_size);

        let dataset_file = dataset.and_then(|d| {
            d.files.first().map(|f| self.registry.dataset_file(d, f))
        });
        let output_file = scratch.join("run_output");
        let run_cmd = run_template
            .replace("{binary}", &binary.to_string_lossy())
            .replace("{dataset}", &dataset_file.as_deref().unwrap_or(Path::new("")).to_string_lossy())
            .replace("{output}", &output_file.to_string_lossy())
            .replace("{workload_dir}", &workload_dir.to_string_lossy());
        let wants_output_file = run_template.contains("{output}");

        let reference = dataset
            .and_then(|d| {
                workload.reference_output.get(&format!("{}:{}", request.command_key, d.id))
            })
            .or_else(|| workload.reference_output.get(&format!("{}:*", request.command_key)));

        let mut envs: Vec<(String, String)> = Vec::new();
        if let Some(file) = &dataset_file {
            envs.push(("FLAGFORGE_DATASET".into(), file.to_string_lossy().into_owned()));
        }
        if let Some(d) = dataset {
            for (name, value) in &d.params {
                envs.push((name.clone(), value.to_string()));
            }
        }
        for (var, value) in &request.assignment.env_values {
            envs.push((var.clone(), value.to_string()));
        }

        let repetitions = if probe { 0 } else { request.repetitions };
        let mut runs = Vec::with_capacity(repetitions);
        let mut failure = None;
        for _ in 0..repetitions {
            let start_offset = pipeline_start.elapsed().as_secs_f64();
            let outcome = self.one_run(
                scratch,
                &run_cmd,
                &envs,
                request.timeout_secs,
                wants_output_file.then_some(output_file.as_path()),
                reference,
                &workload_dir,
                start_offset,
            )?;
            if failure.is_none() {
                failure = outcome.failure;
            }
            runs.push(outcome);
        }

        Ok(PipelineResult {
            compile_ok: true,
            compile_time,
            binary_size,
            object_size,
            binary_md5: Some(binary_md5),
            runs,
            failure,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn one_run(
        &self,
        scratch: &Path,
        run_cmd: &str,
        envs: &[(String, String)],
        timeout_secs: f64,
        output_file: Option<&Path>,
        reference: Option<&ReferenceOutput>,
        workload_dir: &Path,
        start_offset: f64,
    ) -> Result<RunOutcome> {
        if let Some(path) = output_file {
            let _ = std::fs::remove_file(path);
        }
        let result_file = scratch.join("flagforge_result.json");
        let _ = std::fs::remove_file(&result_file);

        let mut command = Command::new("sh");
        command
            .arg("-c")
            .arg(run_cmd)
            .current_dir(scratch)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::null());
        for (k, v) in envs {
            command.env(k, v);
        }
        let start = Instant::now();
        let mut child = command.spawn()?;
        let deadline = start + Duration::from_secs_f64(timeout_secs);
        let status = loop {
            match child.try_wait()? {
                Some(status) => break Some(status),
                None => {
                    if Instant::now() >= deadline {
                        let _ = child.kill();
                        let _ = child.wait();
                        break None;
                    }
                    std::thread::sleep(Duration::from_millis(1));
                }
            }
        };
        let mut wall_time = start.elapsed().as_secs_f64();

        let Some(status) = status else {
            return Ok(RunOutcome {
                wall_time,
                exit_status: -1,
                output_ok: None,
                failure: Some(FailureKind::Timeout),
                start_offset,
            });
        };

        let mut stdout = Vec::new();
        if let Some(mut pipe) = child.stdout.take() {
            use std::io::Read;
            let _ = pipe.read_to_end(&mut stdout);
        }

        let exit_status = status.code().unwrap_or(-(status_signal(&status)));
        if !status.success() {
            return Ok(RunOutcome {
                wall_time,
                exit_status,
                output_ok: None,
                failure: Some(FailureKind::RuntimeCrash),
                start_offset,
            });
        }

        // Workloads may report a measured kernel region; prefer it over
        // whole-process time when present.
        if let Ok(text) = std::fs::read_to_string(&result_file) {
            if let Ok(value) = serde_json::from_str::<serde_json::Value>(&text) {
                if let Some(t) = value.get("execution_time").and_then(|v| v.as_f64()) {
                    if t > 0.0 {
                        wall_time = t;
                    }
                }
            }
        }

        let produced: Vec<u8> = match output_file {
            Some(path) if path.exists() => std::fs::read(path)?,
            Some(_) => Vec::new(),
            None => stdout,
        };
        let validation = validate_output(&produced, reference, workload_dir)?;
        let (output_ok, failure) = match validation {
            ValidationOutcome::Passed => (Some(true), None),
            ValidationOutcome::Failed => (Some(false), Some(FailureKind::WrongOutput)),
            ValidationOutcome::Skipped => (None, None),
        };
        Ok(RunOutcome { wall_time, exit_status, output_ok, failure, start_offset })
    }
}

#[cfg(unix)]
fn status_signal(status: &std::process::ExitStatus) -> i32 {
    use std::os::unix::process::ExitStatusExt;
    status.signal().unwrap_or(1)
}

#[cfg(not(unix))]
fn status_signal(_status: &std::process::ExitStatus) -> i32 {
    1
}

fn object_sizes(scratch: &Path) -> Option<u64> {
    let mut total = 0u64;
    for entry in std::fs::read_dir(scratch).ok()? {
        let path = entry.ok()?.path();
        if path.extension().map(|e| e == "o").unwrap_or(false) {
            total += std::fs::metadata(&path).ok()?.len();
        }
    }
    (total > 0).then_some(total)
}

/// Evaluate a synthetic spec: time is the base time scaled by the product
/// of active multipliers, size is the base size plus deltas, and the MD5
/// digests everything that influences the produced "binary".
fn eval_synthetic(
    spec: &SyntheticSpec,
    workload_id: &str,
    dataset: Option<&DatasetMeta>,
    request: &PipelineRequest,
    repetitions: usize,
) -> PipelineResult {
    let assignment = &request.assignment;
    let mut active: Vec<(&String, &crate::registry::FlagEffect)> = Vec::new();
    for (key, effect) in &spec.flag_effects {
        let enabled = if key == &assignment.base_level {
            true
        } else {
            match assignment.values.get(key) {
                Some(FlagValue::Switch(on)) => *on,
                Some(_) => true,
                None => false,
            }
        };
        if !enabled {
            continue;
        }
        if let Some(gate) = &effect.dataset_gate {
            let param = dataset.and_then(|d| d.params.get(&gate.param)).copied();
            if param.map(|p| p > gate.above) != Some(true) {
                continue;
            }
        }
        active.push((key, effect));
    }

    let compile_time = 0.05 + 0.002 * assignment.values.len() as f64;

    let compile_failure = active
        .iter()
        .filter_map(|(_, e)| e.failure)
        .filter(|f| f.is_compile_failure())
        .min();
    if let Some(kind) = compile_failure {
        return PipelineResult::compile_failed(kind, compile_time);
    }

    let mut time = spec.base_time;
    let mut size = spec.base_size as i64;
    let mut md5_input = format!("synthetic:{workload_id}:{}", assignment.base_level);
    for (name, effect) in &active {
        time *= effect.time_multiplier;
        size += effect.size_delta;
        if effect.affects_binary() {
            md5_input.push_str(&format!(
                "|{name}={:.12}/{}/{}",
                effect.time_multiplier,
                effect.size_delta,
                effect.md5_salt.as_deref().unwrap_or("")
            ));
        }
    }
    let binary_size = size.max(1) as u64;
    let binary_md5 = format!("{:x}", md5::compute(md5_input.as_bytes()));

    let run_failure = active.iter().filter_map(|(_, e)| e.failure).min();
    let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
    let mut runs = Vec::with_capacity(repetitions);
    let mut offset = compile_time;
    for _ in 0..repetitions {
        let noise = match spec.noise_model {
            NoiseModel::None => 1.0,
            NoiseModel::Gaussian { sigma } => {
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                (1.0 + sigma * z).max(0.01)
            }
            NoiseModel::Bimodal { offset, probability } => {
                if rng.gen::<f64>() < probability {
                    1.0 + offset
                } else {
                    1.0
                }
            }
        };
        let wall_time = time * noise;
        let outcome = match run_failure {
            Some(FailureKind::RuntimeCrash) => RunOutcome {
                wall_time,
                exit_status: 139,
                output_ok: None,
                failure: Some(FailureKind::RuntimeCrash),
                start_offset: offset,
            },
            Some(FailureKind::WrongOutput) => RunOutcome {
                wall_time,
                exit_status: 0,
                output_ok: Some(false),
                failure: Some(FailureKind::WrongOutput),
                start_offset: offset,
            },
            Some(FailureKind::Timeout) => RunOutcome {
                wall_time: request.timeout_secs,
                exit_status: -1,
                output_ok: None,
                failure: Some(FailureKind::Timeout),
                start_offset: offset,
            },
            _ => RunOutcome {
                wall_time,
                exit_status: 0,
                output_ok: Some(true),
                failure: None,
                start_offset: offset,
            },
        };
        offset += outcome.wall_time;
        runs.push(outcome);
    }
    PipelineResult {
        compile_ok: true,
        compile_time,
        binary_size,
        object_size: binary_size,
        binary_md5: Some(binary_md5),
        runs,
        failure: run_failure,
    }
}
