use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::blueprint::NodeBlueprint;
use super::library::NodeLibrary;
use crate::error::{Error, Result};

/// Execution order of a library. Among ready nodes the lexicographically
/// smallest name runs first, so the order is a pure function of the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineGraph {
    pub ordered_nodes: Vec<String>,
    /// `(dependency, dependent)` pairs.
    pub edges: BTreeSet<(String, String)>,
}

impl PipelineGraph {
    pub fn len(&self) -> usize {
        self.ordered_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordered_nodes.is_empty()
    }

    pub fn index_of(&self, node: &str) -> Option<usize> {
        self.ordered_nodes.iter().position(|n| n == node)
    }

    /// Nodes nobody depends on.
    pub fn sinks(&self) -> Vec<&str> {
        let has_dependent: BTreeSet<&str> = self.edges.iter().map(|(from, _)| from.as_str()).collect();
        self.ordered_nodes
            .iter()
            .map(String::as_str)
            .filter(|n| !has_dependent.contains(n))
            .collect()
    }

    /// All transitive dependencies of `node`.
    pub fn ancestors(&self, node: &str) -> BTreeSet<String> {
        let mut parents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (from, to) in &self.edges {
            parents.entry(to.as_str()).or_default().push(from.as_str());
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            for p in parents.get(n).into_iter().flatten() {
                if seen.insert(p.to_string()) {
                    stack.push(p);
                }
            }
        }
        seen
    }
}

pub fn build_pipeline_graph(library: &NodeLibrary) -> Result<PipelineGraph> {
    build_graph(&library.nodes)
}

/// Kahn's algorithm with an ordered ready set.
pub fn build_graph(nodes: &[NodeBlueprint]) -> Result<PipelineGraph> {
    let mut deps: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for node in nodes {
        if deps.insert(&node.node_name, BTreeSet::new()).is_some() {
            return Err(Error::DuplicateNode(node.node_name.clone()));
        }
    }
    for node in nodes {
        for dep in &node.dependencies {
            if !deps.contains_key(dep.as_str()) {
                return Err(Error::DanglingDependency {
                    node: node.node_name.clone(),
                    missing: dep.clone(),
                });
            }
        }
        deps.get_mut(node.node_name.as_str())
            .expect("inserted above")
            .extend(node.dependencies.iter().map(String::as_str));
    }

    let mut dependents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut edges = BTreeSet::new();
    for (&node, node_deps) in &deps {
        for &dep in node_deps {
            dependents.entry(dep).or_default().push(node);
            edges.insert((dep.to_string(), node.to_string()));
        }
    }

    let mut pending: BTreeMap<&str, usize> = deps.iter().map(|(&n, d)| (n, d.len())).collect();
    let mut ready: BTreeSet<&str> = pending
        .iter()
        .filter(|(_, &count)| count == 0)
        .map(|(&n, _)| n)
        .collect();
    let mut ordered = Vec::with_capacity(nodes.len());

    while let Some(next) = ready.pop_first() {
        pending.remove(next);
        ordered.push(next.to_string());
        for &child in dependents.get(next).into_iter().flatten() {
            let count = pending.get_mut(child).expect("child pending");
            *count -= 1;
            if *count == 0 {
                ready.insert(child);
            }
        }
    }

    if !pending.is_empty() {
        return Err(Error::Cycle(find_cycle(&deps, &pending)));
    }
    Ok(PipelineGraph {
        ordered_nodes: ordered,
        edges,
    })
}

/// Every node left after Kahn's pass has an unresolved dependency inside the
/// leftover set, so walking dependencies from any of them closes a loop.
fn find_cycle(deps: &BTreeMap<&str, BTreeSet<&str>>, leftover: &BTreeMap<&str, usize>) -> Vec<String> {
    let start = *leftover.keys().next().expect("non-empty leftover");
    let mut path: Vec<&str> = vec![start];
    loop {
        let current = *path.last().expect("non-empty path");
        let next = deps[current]
            .iter()
            .copied()
            .find(|d| leftover.contains_key(d))
            .expect("leftover node keeps a leftover dependency");
        if let Some(pos) = path.iter().position(|&n| n == next) {
            let mut cycle: Vec<String> = path[pos..].iter().map(|s| s.to_string()).collect();
            cycle.push(next.to_string());
            return cycle;
        }
        path.push(next);
    }
}
