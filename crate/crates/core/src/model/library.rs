use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::blueprint::NodeBlueprint;

/// Sample fields a node may read directly. The ground-truth answer is never
/// wired into a pipeline.
pub const INITIAL_FIELDS: &[&str] = &["question"];

/// Where one node input comes from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawSource", into = "RawSource")]
pub enum Source {
    /// A field of the initial sample.
    Input(String),
    /// One output key of an upstream node.
    NodeKey { node: String, key: String },
    /// The whole rendered output of an upstream node, as text.
    NodeOutput(String),
}

impl Source {
    pub fn upstream(&self) -> Option<&str> {
        match self {
            Source::Input(_) => None,
            Source::NodeKey { node, .. } | Source::NodeOutput(node) => Some(node),
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Input(field) => write!(f, "input.{field}"),
            Source::NodeKey { node, key } => write!(f, "{node}.{key}"),
            Source::NodeOutput(node) => write!(f, "{node}.*"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    key: Option<String>,
}

impl TryFrom<RawSource> for Source {
    type Error = String;

    fn try_from(raw: RawSource) -> Result<Self, Self::Error> {
        match (raw.input, raw.node, raw.key) {
            (Some(field), None, None) => Ok(Source::Input(field)),
            (None, Some(node), Some(key)) => Ok(Source::NodeKey { node, key }),
            (None, Some(node), None) => Ok(Source::NodeOutput(node)),
            _ => Err("source must be {\"input\"}, {\"node\", \"key\"} or {\"node\"}".into()),
        }
    }
}

impl From<Source> for RawSource {
    fn from(s: Source) -> Self {
        match s {
            Source::Input(field) => RawSource {
                input: Some(field),
                node: None,
                key: None,
            },
            Source::NodeKey { node, key } => RawSource {
                input: None,
                node: Some(node),
                key: Some(key),
            },
            Source::NodeOutput(node) => RawSource {
                input: None,
                node: Some(node),
                key: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputRef {
    pub node: String,
    pub key: String,
}

/// Declarative wiring: for each node, each input key names its source.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionsPlan {
    pub inputs: BTreeMap<String, BTreeMap<String, Source>>,
    #[serde(default)]
    pub final_answer: Option<OutputRef>,
}

impl ConnectionsPlan {
    pub fn source(&self, node: &str, key: &str) -> Option<&Source> {
        self.inputs.get(node)?.get(key)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub seed: u64,
    pub designer: String,
    pub dataset: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeLibrary {
    pub pipeline_description: String,
    pub nodes: Vec<NodeBlueprint>,
    pub connections_plan: ConnectionsPlan,
    pub epoch: u32,
    pub provenance: Provenance,
}

impl NodeLibrary {
    pub fn node(&self, name: &str) -> Option<&NodeBlueprint> {
        self.nodes.iter().find(|n| n.node_name == name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.node_name == name)
    }

    /// Returns a copy with `blueprint` swapped in for the node of the same name.
    pub fn with_replaced(&self, blueprint: NodeBlueprint) -> Option<NodeLibrary> {
        let idx = self.position(&blueprint.node_name)?;
        let mut next = self.clone();
        next.nodes[idx] = blueprint;
        Some(next)
    }
}
