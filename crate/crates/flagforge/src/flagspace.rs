//! Compiler optimization choice spaces: boolean flags, `--param`-style
//! parametric flags, enumerated choices and environment parameters, with
//! version filtering, seeded random sampling, rendering to command-line
//! text and parsing back.
//!
//! Description files are JSON, one per (compiler, major-version family),
//! with schema `{compiler, versions, base_levels, flags: [{name, kind, on,
//! off, min, max, values, template, tags, versions}]}`. Curated subsets for
//! GCC 4.x, GCC 7.x+ and Clang ship embedded in the binary; additional
//! files can be loaded from a directory.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GCC4_DESCRIPTION: &str = include_str!("../data/gcc4.json");
const GCC7_DESCRIPTION: &str = include_str!("../data/gcc7.json");
const CLANG_DESCRIPTION: &str = include_str!("../data/clang.json");

/// Inclusive version range predicate over dotted version strings.
/// Supported forms: "" or "*" (all), "A-B", ">=A", ">A", "<=A", "<A".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct VersionRange(pub String);

fn version_components(v: &str) -> Vec<u64> {
    v.trim()
        .split('.')
        .map(|c| c.trim().parse::<u64>().unwrap_or(0))
        .collect()
}

/// Sortable key for dotted version strings ("4.9.2" < "7.1.0" < "11.4.0").
pub fn version_key(v: &str) -> Vec<u64> {
    version_components(v)
}

fn version_cmp(a: &str, b: &str) -> std::cmp::Ordering {
    let (ca, cb) = (version_components(a), version_components(b));
    let len = ca.len().max(cb.len());
    for i in 0..len {
        let x = ca.get(i).copied().unwrap_or(0);
        let y = cb.get(i).copied().unwrap_or(0);
        match x.cmp(&y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

impl VersionRange {
    pub fn contains(&self, version: &str) -> bool {
        let spec = self.0.replace('\u{2265}', ">=").replace('\u{2264}', "<=");
        let spec = spec.trim();
        if spec.is_empty() || spec == "*" {
            return true;
        }
        if let Some(rest) = spec.strip_prefix(">=") {
            return version_cmp(version, rest) != std::cmp::Ordering::Less;
        }
        if let Some(rest) = spec.strip_prefix("<=") {
            return version_cmp(version, rest) != std::cmp::Ordering::Greater;
        }
        if let Some(rest) = spec.strip_prefix('>') {
            return version_cmp(version, rest) == std::cmp::Ordering::Greater;
        }
        if let Some(rest) = spec.strip_prefix('<') {
            return version_cmp(version, rest) == std::cmp::Ordering::Less;
        }
        if let Some((lo, hi)) = spec.split_once('-') {
            return version_cmp(version, lo.trim()) != std::cmp::Ordering::Less
                && version_cmp(version, hi.trim()) != std::cmp::Ordering::Greater;
        }
        // Bare version: prefix family match ("4.9" covers 4.9.2).
        let vc = version_components(version);
        let sc = version_components(spec);
        sc.iter().zip(vc.iter()).all(|(s, v)| s == v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlagTag {
    Base,
    Cpu,
    Parametric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FlagKind {
    /// Two-form switch, e.g. on "-fivopts" / off "-fno-ivopts".
    Boolean { on: String, off: String },
    /// Integer-valued flag rendered through a template where NAME and VALUE
    /// are substituted, e.g. "--param NAME=VALUE".
    Parametric { min: i64, max: i64, template: String },
    /// Enumerated flag, e.g. "-fira-algorithm=VALUE" over {CB, priority}.
    Choice { values: Vec<String>, template: String },
    /// Integer parameter exported on the run environment, never rendered
    /// into the compiler command line.
    Env { var: String, min: i64, max: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagDescriptor {
    pub name: String,
    #[serde(flatten)]
    pub kind: FlagKind,
    #[serde(default)]
    pub tags: Vec<FlagTag>,
    #[serde(default)]
    pub versions: VersionRange,
}

impl FlagDescriptor {
    fn validate(&self) -> Result<()> {
        match &self.kind {
            FlagKind::Boolean { on, off } => {
                if on == off {
                    return Err(Error::invalid(format!(
                        "flag {}: on and off forms must differ",
                        self.name
                    )));
                }
            }
            FlagKind::Parametric { min, max, .. } | FlagKind::Env { min, max, .. } => {
                if min > max {
                    return Err(Error::invalid(format!("flag {}: min > max", self.name)));
                }
            }
            FlagKind::Choice { values, .. } => {
                if values.is_empty() {
                    return Err(Error::invalid(format!("flag {}: empty choice list", self.name)));
                }
            }
        }
        Ok(())
    }
}

/// One concrete value for one flag. Booleans serialize as true/false so
/// that choice values like "off" stay unambiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FlagValue {
    Switch(bool),
    Int(i64),
    Choice(String),
}

/// The tunable space of one compiler: base optimization levels plus an
/// ordered list of descriptors. Descriptor order is stable and defines the
/// sampling stream and render order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlagSpace {
    pub compiler_id: String,
    pub version_range: VersionRange,
    pub base_levels: Vec<String>,
    pub descriptors: Vec<FlagDescriptor>,
}

/// One selection of choices: a base level, per-flag values, and integer
/// environment parameters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FlagAssignment {
    pub base_level: String,
    #[serde(default)]
    pub values: BTreeMap<String, FlagValue>,
    #[serde(default)]
    pub env_values: BTreeMap<String, i64>,
}

impl FlagAssignment {
    pub fn base_only(base: impl Into<String>) -> Self {
        FlagAssignment { base_level: base.into(), ..Default::default() }
    }

    /// Optional flags enabled beyond the base level.
    pub fn flag_names(&self) -> Vec<&str> {
        self.values.keys().map(|s| s.as_str()).collect()
    }

    pub fn without_flag(&self, name: &str) -> FlagAssignment {
        let mut out = self.clone();
        out.values.remove(name);
        out
    }
}

/// Controls random sampling: per-flag inclusion probability and which flag
/// classes participate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SamplingPolicy {
    pub include_probability: f64,
    pub enable_parametric: bool,
    pub enable_cpu: bool,
    pub enable_base: bool,
    pub seed: u64,
}

impl Default for SamplingPolicy {
    fn default() -> Self {
        SamplingPolicy {
            include_probability: 0.25,
            enable_parametric: false,
            enable_cpu: false,
            enable_base: false,
            seed: 0,
        }
    }
}

impl SamplingPolicy {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.include_probability) {
            return Err(Error::contract("include_probability must lie in [0,1]"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Deserialize)]
struct DescriptionFile {
    compiler: String,
    #[serde(default)]
    versions: VersionRange,
    base_levels: Vec<String>,
    flags: Vec<FlagDescriptor>,
}

fn parse_description(text: &str) -> Result<DescriptionFile> {
    let file: DescriptionFile = serde_json::from_str(text)?;
    let mut seen = std::collections::HashSet::new();
    for flag in &file.flags {
        flag.validate()?;
        if !seen.insert(flag.name.clone()) {
            return Err(Error::invalid(format!("duplicate flag name {}", flag.name)));
        }
    }
    if file.base_levels.is_empty() {
        return Err(Error::invalid("base_levels must be non-empty"));
    }
    Ok(file)
}

fn builtin_descriptions() -> Vec<&'static str> {
    vec![GCC4_DESCRIPTION, GCC7_DESCRIPTION, CLANG_DESCRIPTION]
}

/// Load the flag space for a compiler at a specific version. Only
/// descriptors whose version range contains the version are kept, in file
/// order. Extra description files (any `*.json` under `extra_dir`) are
/// consulted after the built-in ones.
pub fn load_flagspace(
    compiler_id: &str,
    version: &str,
    extra_dir: Option<&Path>,
) -> Result<FlagSpace> {
    let mut texts: Vec<String> = builtin_descriptions().iter().map(|s| s.to_string()).collect();
    if let Some(dir) = extra_dir {
        if dir.is_dir() {
            let mut paths: Vec<_> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().map(|e| e == "json").unwrap_or(false))
                .collect();
            paths.sort();
            for path in paths {
                texts.push(std::fs::read_to_string(path)?);
            }
        }
    }

    let mut compiler_seen = false;
    for text in &texts {
        let file = parse_description(text)?;
        if file.compiler != compiler_id {
            continue;
        }
        compiler_seen = true;
        if !file.versions.contains(version) {
            continue;
        }
        let descriptors: Vec<FlagDescriptor> = file
            .flags
            .into_iter()
            .filter(|f| f.versions.contains(version))
            .collect();
        return Ok(FlagSpace {
            compiler_id: compiler_id.to_string(),
            version_range: file.versions,
            base_levels: file.base_levels,
            descriptors,
        });
    }
    if compiler_seen {
        Err(Error::VersionOutOfRange {
            compiler: compiler_id.to_string(),
            version: version.to_string(),
        })
    } else {
        Err(Error::NoFlagSpace(compiler_id.to_string()))
    }
}

impl FlagSpace {
    pub fn descriptor(&self, name: &str) -> Option<&FlagDescriptor> {
        self.descriptors.iter().find(|d| d.name == name)
    }

    /// Default base level: "-O3" when present, else the first entry.
    pub fn default_base(&self) -> &str {
        self.base_levels
            .iter()
            .find(|b| b.as_str() == "-O3")
            .unwrap_or(&self.base_levels[0])
    }

    fn eligible(&self, descriptor: &FlagDescriptor, policy: &SamplingPolicy) -> bool {
        if descriptor.tags.contains(&FlagTag::Cpu) && !policy.enable_cpu {
            return false;
        }
        match descriptor.kind {
            FlagKind::Parametric { .. } | FlagKind::Env { .. } => policy.enable_parametric,
            _ => !descriptor.tags.contains(&FlagTag::Parametric) || policy.enable_parametric,
        }
    }

    /// Draw one random assignment; fully determined by the policy seed.
    pub fn sample_random(&self, policy: &SamplingPolicy) -> Result<FlagAssignment> {
        policy.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
        let base_level = if policy.enable_base && !self.base_levels.is_empty() {
            self.base_levels[rng.gen_range(0..self.base_levels.len())].clone()
        } else {
            self.default_base().to_string()
        };
        let mut assignment = FlagAssignment::base_only(base_level);
        for descriptor in &self.descriptors {
            if !self.eligible(descriptor, policy) {
                continue;
            }
            if rng.gen::<f64>() >= policy.include_probability {
                continue;
            }
            match &descriptor.kind {
                FlagKind::Boolean { .. } => {
                    let on = rng.gen_bool(0.5);
                    assignment.values.insert(descriptor.name.clone(), FlagValue::Switch(on));
                }
                FlagKind::Parametric { min, max, .. } => {
                    let v = rng.gen_range(*min..=*max);
                    assignment.values.insert(descriptor.name.clone(), FlagValue::Int(v));
                }
                FlagKind::Choice { values, .. } => {
                    let v = values[rng.gen_range(0..values.len())].clone();
                    assignment.values.insert(descriptor.name.clone(), FlagValue::Choice(v));
                }
                FlagKind::Env { var, min, max } => {
                    let v = rng.gen_range(*min..=*max);
                    assignment.env_values.insert(var.clone(), v);
                }
            }
        }
        Ok(assignment)
    }

    /// Render to command-line text: base level first, then flags in space
    /// order, single-space separated. Environment parameters are excluded;
    /// they render onto the run environment instead.
    pub fn render(&self, assignment: &FlagAssignment) -> Result<String> {
        if !self.base_levels.iter().any(|b| b == &assignment.base_level) {
            return Err(Error::contract(format!(
                "base level {:?} not in space",
                assignment.base_level
            )));
        }
        for name in assignment.values.keys() {
            if self.descriptor(name).is_none() {
                return Err(Error::UnknownFlag { token: name.clone(), position: 0 });
            }
        }
        let mut parts: Vec<String> = Vec::new();
        if !assignment.base_level.is_empty() {
            parts.push(assignment.base_level.clone());
        }
        for descriptor in &self.descriptors {
            let Some(value) = assignment.values.get(&descriptor.name) else {
                continue;
            };
            let rendered = match (&descriptor.kind, value) {
                (FlagKind::Boolean { on, off }, FlagValue::Switch(v)) => {
                    if *v { on.clone() } else { off.clone() }
                }
                (FlagKind::Parametric { min, max, template }, FlagValue::Int(v)) => {
                    if v < min || v > max {
                        return Err(Error::contract(format!(
                            "flag {}: value {v} outside {min}..{max}",
                            descriptor.name
                        )));
                    }
                    template.replace("NAME", &descriptor.name).replace("VALUE", &v.to_string())
                }
                (FlagKind::Choice { values, template }, FlagValue::Choice(v)) => {
                    if !values.contains(v) {
                        return Err(Error::contract(format!(
                            "flag {}: {v:?} not a declared choice",
                            descriptor.name
                        )));
                    }
                    template.replace("NAME", &descriptor.name).replace("VALUE", v)
                }
                _ => {
                    return Err(Error::contract(format!(
                        "flag {}: value does not match flag kind",
                        descriptor.name
                    )))
                }
            };
            parts.push(rendered);
        }
        Ok(parts.join(" "))
    }

    /// Inverse of [`render`] on its image. Reports unknown tokens with
    /// their position.
    pub fn parse(&self, text: &str) -> Result<FlagAssignment> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let mut assignment = FlagAssignment::base_only(self.base_levels[0].clone());
        let mut base_set = false;
        let mut i = 0usize;
        while i < tokens.len() {
            let token = tokens[i];
            if self.base_levels.iter().any(|b| b == token) {
                if base_set {
                    return Err(Error::contract(format!(
                        "multiple base levels (second at position {i})"
                    )));
                }
                assignment.base_level = token.to_string();
                base_set = true;
                i += 1;
                continue;
            }
            match self.match_descriptor(&tokens, i)? {
                Some((name, value, consumed)) => {
                    if assignment.values.insert(name.clone(), value).is_some() {
                        return Err(Error::contract(format!(
                            "flag {name} assigned twice (position {i})"
                        )));
                    }
                    i += consumed;
                }
                None => {
                    return Err(Error::UnknownFlag { token: token.to_string(), position: i });
                }
            }
        }
        Ok(assignment)
    }

    fn match_descriptor(
        &self,
        tokens: &[&str],
        at: usize,
    ) -> Result<Option<(String, FlagValue, usize)>> {
        for descriptor in &self.descriptors {
            match &descriptor.kind {
                FlagKind::Boolean { on, off } => {
                    if tokens[at] == on {
                        return Ok(Some((descriptor.name.clone(), FlagValue::Switch(true), 1)));
                    }
                    if tokens[at] == off {
                        return Ok(Some((descriptor.name.clone(), FlagValue::Switch(false), 1)));
                    }
                }
                FlagKind::Parametric { min, max, template } => {
                    let expanded = template.replace("NAME", &descriptor.name);
                    if let Some(raw) = match_template(&expanded, tokens, at) {
                        let value: i64 = raw.parse().map_err(|_| {
                            Error::contract(format!(
                                "flag {}: non-integer value {raw:?}",
                                descriptor.name
                            ))
                        })?;
                        if value < *min || value > *max {
                            return Err(Error::contract(format!(
                                "flag {}: value {value} outside {min}..{max}",
                                descriptor.name
                            )));
                        }
                        let consumed = expanded.split_whitespace().count();
                        return Ok(Some((descriptor.name.clone(), FlagValue::Int(value), consumed)));
                    }
                }
                FlagKind::Choice { values, template } => {
                    let expanded = template.replace("NAME", &descriptor.name);
                    if let Some(raw) = match_template(&expanded, tokens, at) {
                        if !values.iter().any(|v| v == &raw) {
                            return Err(Error::contract(format!(
                                "flag {}: {raw:?} not a declared choice",
                                descriptor.name
                            )));
                        }
                        let consumed = expanded.split_whitespace().count();
                        return Ok(Some((
                            descriptor.name.clone(),
                            FlagValue::Choice(raw),
                            consumed,
                        )));
                    }
                }
                FlagKind::Env { .. } => {}
            }
        }
        Ok(None)
    }
}

/// Match a whitespace-split template whose final piece contains VALUE
/// against tokens starting at `at`; returns the captured value text.
fn match_template(template: &str, tokens: &[&str], at: usize) -> Option<String> {
    let pieces: Vec<&str> = template.split_whitespace().collect();
    if at + pieces.len() > tokens.len() {
        return None;
    }
    let mut captured = None;
    for (offset, piece) in pieces.iter().enumerate() {
        let token = tokens[at + offset];
        if let Some(pos) = piece.find("VALUE") {
            let (prefix, rest) = piece.split_at(pos);
            let suffix = &rest["VALUE".len()..];
            if !token.starts_with(prefix) || !token.ends_with(suffix) {
                return None;
            }
            let inner = &token[prefix.len()..token.len() - suffix.len()];
            if inner.is_empty() {
                return None;
            }
            captured = Some(inner.to_string());
        } else if token != *piece {
            return None;
        }
    }
    captured
}
