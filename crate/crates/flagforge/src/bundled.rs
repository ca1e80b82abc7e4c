//! Workloads shipped with the binary. One small integer image kernel is
//! enough to exercise a real compiler end to end.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::registry::{Registry, TunableParam, WorkloadKind, WorkloadMeta};

pub const MINI_CORNERS_ID: &str = "mini-corners";

const MINI_CORNERS_SOURCE: &str = include_str!("../assets/mini_corners.c");

/// Register the bundled corner-detection kernel and drop its source into
/// the workload directory. Returns the workload id.
pub fn install_mini_corners(registry: &Registry) -> Result<String> {
    let meta = WorkloadMeta {
        id: MINI_CORNERS_ID.to_string(),
        title: "integer corner-response kernel".to_string(),
        kind: WorkloadKind::Real,
        build_template: Some(
            "{compiler} {flags} -o {output} {workload_dir}/mini_corners.c".to_string(),
        ),
        run_commands: BTreeMap::from([("corners".to_string(), "{binary}".to_string())]),
        reference_output: BTreeMap::new(),
        dataset_tags: vec![],
        feature_file: None,
        tunable_params: vec![TunableParam {
            name: "iterations".to_string(),
            min: 1,
            max: 64,
            env_var: "FLAGFORGE_N".to_string(),
        }],
        synthetic: None,
        deterministic_build: true,
    };
    let id = registry.register_workload(&meta)?;
    std::fs::write(registry.workload_dir(&id).join("mini_corners.c"), MINI_CORNERS_SOURCE)?;
    Ok(id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn installs_and_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let registry = Registry::open(dir.path().join("repo")).unwrap();
        let id = install_mini_corners(&registry).unwrap();
        assert_eq!(id, MINI_CORNERS_ID);
        let meta = registry.workload(&id).unwrap();
        assert!(meta.build_template.unwrap().contains("mini_corners.c"));
        assert!(registry.workload_dir(&id).join("mini_corners.c").is_file());
    }
}
