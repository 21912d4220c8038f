use std::path::Path;

use super::library::NodeLibrary;
use super::validate::validate_library;
use crate::canonical::{from_json_with_path, to_canonical_json};
use crate::error::{Error, Result};

/// Canonical library document (sorted keys, byte-stable).
pub fn serialize_library(library: &NodeLibrary) -> Result<String> {
    to_canonical_json(library)
}

/// Parses a library document. Schema problems carry the offending path,
/// e.g. `nodes[1].node_type`.
pub fn deserialize_library(document: &str) -> Result<NodeLibrary> {
    from_json_with_path(document)
}

/// Reads and validates a library file.
pub fn load_library(path: &Path) -> Result<NodeLibrary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let library = deserialize_library(&text)?;
    crate::model::build_pipeline_graph(&library)?;
    let report = validate_library(&library);
    if !report.ok() {
        return Err(Error::Validation(vec![report]));
    }
    Ok(library)
}

pub fn write_library(path: &Path, library: &NodeLibrary) -> Result<()> {
    crate::canonical::write_json(path, library)
}
