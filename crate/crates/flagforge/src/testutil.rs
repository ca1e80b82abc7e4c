//! Shared helpers for unit and integration tests: tiny boolean flag spaces
//! and synthetic workload registration.

use std::collections::BTreeMap;

use crate::flagspace::{FlagDescriptor, FlagKind, FlagSpace, FlagTag, VersionRange};
use crate::registry::{Registry, SyntheticSpec, WorkloadKind, WorkloadMeta};

/// Boolean-only space with bases "", "-O3", "-Os".
pub fn boolean_space(names: &[&str]) -> FlagSpace {
    FlagSpace {
        compiler_id: "test".into(),
        version_range: VersionRange::default(),
        base_levels: vec!["".into(), "-O3".into(), "-Os".into()],
        descriptors: names
            .iter()
            .map(|n| FlagDescriptor {
                name: n.to_string(),
                kind: FlagKind::Boolean { on: format!("-f{n}"), off: format!("-fno-{n}") },
                tags: vec![FlagTag::Base],
                versions: VersionRange::default(),
            })
            .collect(),
    }
}

pub fn synthetic_meta(id: &str, spec: SyntheticSpec) -> WorkloadMeta {
    WorkloadMeta {
        id: id.into(),
        title: id.into(),
        kind: WorkloadKind::Synthetic,
        build_template: None,
        run_commands: BTreeMap::new(),
        reference_output: BTreeMap::new(),
        dataset_tags: vec![],
        feature_file: None,
        tunable_params: vec![],
        synthetic: Some(spec),
        deterministic_build: true,
    }
}

/// Temp repo with one registered synthetic workload.
pub fn synthetic_repo(id: &str, spec: SyntheticSpec) -> (tempfile::TempDir, Registry) {
    let dir = tempfile::tempdir().unwrap();
    let reg = Registry::open(dir.path().join("repo")).unwrap();
    reg.register_workload(&synthetic_meta(id, spec)).unwrap();
    (dir, reg)
}
