//! Node blueprints, node libraries, their validation rules, and the
//! dependency graph that fixes execution order.

mod blueprint;
mod codec;
mod graph;
mod library;
mod validate;

pub(crate) use blueprint::fill_placeholders;
pub use blueprint::{
    placeholders, split_prompt, Implementation, NodeBlueprint, NodeType, PromptSections,
    RETRIEVED_CONTEXT, SEARCH_TOOL,
};
pub use codec::{deserialize_library, load_library, serialize_library, write_library};
pub use graph::{build_graph, build_pipeline_graph, PipelineGraph};
pub use library::{ConnectionsPlan, NodeLibrary, OutputRef, Provenance, Source, INITIAL_FIELDS};
pub use validate::{
    is_identifier, validate_blueprint, validate_library, ValidationReport, Violation,
    ViolationKind,
};
