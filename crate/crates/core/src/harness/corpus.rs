//! Scenarios bundled with the library.

use std::path::Path;

use crate::sim::{Scenario, SimError};

pub const BUNDLED: &[(&str, &str)] = &[
    ("static_target", include_str!("../../scenarios/static_target.json")),
    ("corridor_approach", include_str!("../../scenarios/corridor_approach.json")),
    ("occlusion_decoy", include_str!("../../scenarios/occlusion_decoy.json")),
    ("sprint_7ms", include_str!("../../scenarios/sprint_7ms.json")),
    ("rotation_only", include_str!("../../scenarios/rotation_only.json")),
    ("false_positive_storm", include_str!("../../scenarios/false_positive_storm.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled(name: &str) -> Option<Result<Scenario, SimError>> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| Scenario::from_json(text))
}

/// Loads a scenario from a file path, or from the corpus when no such file
/// exists. Corpus names may be written as `scenarios/<name>` with or without
/// a `.json` suffix.
pub fn resolve(arg: &str) -> Result<Scenario, SimError> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{arg}: {e}")))?;
        return Scenario::from_json(&text).map_err(|e| SimError::Config(format!("{arg}: {e}")));
    }
    let name = arg.strip_prefix("scenarios/").unwrap_or(arg);
    let name = name.strip_suffix(".json").unwrap_or(name);
    bundled(name).unwrap_or_else(|| Err(SimError::Config(format!("no scenario file or bundled scenario named {arg:?}"))))
}
