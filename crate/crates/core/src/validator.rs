//! The colored refinement graph and its conflict checks.
//!
//! Every bound refinement contributes an edge from the refining region to
//! the refined region; nodes are colored by the layer that declares them.
//! Validation finds two kinds of conflict: refinement cycles (one witness
//! per strongly connected component) and targets refined by more than one
//! distinct region.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::diag::Warning;
use crate::model::{ProductLine, RefinementOp, Signature};

/// One region in the graph: a canonical signature colored by its layer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VrNode {
    pub color: String,
    pub signature: Signature,
}

impl VrNode {
    pub fn new(color: impl Into<String>, signature: Signature) -> Self {
        VrNode { color: color.into(), signature }
    }
}

impl fmt::Display for VrNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.color, self.signature)
    }
}

impl Serialize for VrNode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// A refinement edge from the refining region to the refined region.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub from: VrNode,
    pub to: VrNode,
    pub op: RefinementOp,
}

/// The graph plus the order in which layer colors were processed while
/// building it (the refinement closure of the selection).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefinementGraph {
    nodes: BTreeSet<VrNode>,
    edges: BTreeSet<Edge>,
    pub processed_colors: Vec<String>,
}

impl RefinementGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, node: VrNode) {
        self.nodes.insert(node);
    }

    pub fn add_edge(&mut self, from: VrNode, to: VrNode, op: RefinementOp) {
        self.nodes.insert(from.clone());
        self.nodes.insert(to.clone());
        self.edges.insert(Edge { from, to, op });
    }

    pub fn nodes(&self) -> impl Iterator<Item = &VrNode> {
        self.nodes.iter()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("selected layer '{layer}' does not exist")]
    UnknownSelectedLayer { layer: String },
}

/// Builds the graph for a selection. Selected layers are processed in
/// selection order; layers they refine are discovered breadth-first, each
/// step's discoveries in lexicographic order.
pub fn build_graph(pl: &ProductLine, selected: &[String]) -> Result<RefinementGraph, GraphError> {
    let mut graph = RefinementGraph::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut queue: VecDeque<String> = VecDeque::new();

    for layer in selected {
        if !pl.layers.contains_key(layer) {
            return Err(GraphError::UnknownSelectedLayer { layer: layer.clone() });
        }
        if seen.insert(layer.clone()) {
            queue.push_back(layer.clone());
        }
    }

    while let Some(color) = queue.pop_front() {
        graph.processed_colors.push(color.clone());
        let layer = &pl.layers[&color];
        for refinement in &layer.refinements {
            let from = VrNode::new(color.clone(), refinement.refining.clone());
            let to =
                VrNode::new(refinement.refined_layer.clone(), refinement.refined.clone());
            graph.add_edge(from, to, refinement.op);
        }
        // Discovery follows the declared refines list, so a refined layer
        // enters the closure even when no clause happens to target it.
        let mut discovered: Vec<&String> =
            layer.refines.iter().filter(|r| !seen.contains(*r)).collect();
        discovered.sort();
        discovered.dedup();
        for d in discovered {
            seen.insert(d.clone());
            queue.push_back(d.clone());
        }
    }
    Ok(graph)
}

/// A conflict that makes composition impossible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Conflict {
    /// One witness cycle per strongly connected component; consecutive
    /// witness nodes are edges and the last node closes back to the first.
    Cycle { witness: Vec<VrNode> },
    /// A target refined by two or more distinct regions, whatever the ops.
    MultipleRefiners { target: VrNode, refiners: Vec<VrNode> },
}

impl fmt::Display for Conflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Conflict::Cycle { witness } => {
                write!(f, "refinement cycle: ")?;
                for node in witness {
                    write!(f, "{node} -> ")?;
                }
                match witness.first() {
                    Some(first) => write!(f, "{first}"),
                    None => Ok(()),
                }
            }
            Conflict::MultipleRefiners { target, refiners } => {
                let names: Vec<String> = refiners.iter().map(|r| r.to_string()).collect();
                write!(f, "multiple refiners for {target}: {}", names.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationResult {
    /// Layer closure in processing order.
    pub closure: Vec<String>,
    pub conflicts: Vec<Conflict>,
    pub warnings: Vec<Warning>,
}

impl ValidationResult {
    pub fn ok(&self) -> bool {
        self.conflicts.is_empty()
    }
}

/// Convenience wrapper: build the graph for a selection and validate it.
pub fn validate_selection(
    pl: &ProductLine,
    selected: &[String],
) -> Result<ValidationResult, GraphError> {
    Ok(validate(&build_graph(pl, selected)?))
}

/// Runs the conflict checks. Cycles come first in the result (ordered by
/// their smallest node), then multiple-refiner conflicts (ordered by
/// target).
pub fn validate(graph: &RefinementGraph) -> ValidationResult {
    let nodes: Vec<&VrNode> = graph.nodes().collect();
    let index: BTreeMap<&VrNode, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();

    // Op-agnostic adjacency, deduplicated and sorted for determinism.
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for edge in graph.edges() {
        pairs.insert((index[&edge.from], index[&edge.to]));
    }
    for &(u, v) in &pairs {
        succ[u].push(v);
        pred[v].push(u);
    }

    let mut conflicts = Vec::new();

    for component in strongly_connected_components(&succ, &pred) {
        let in_component: BTreeSet<usize> = component.iter().copied().collect();
        let start = *component.iter().min().expect("components are non-empty");
        let nontrivial =
            component.len() > 1 || succ[start].contains(&start);
        if !nontrivial {
            continue;
        }
        let witness_indices = cycle_witness(start, &succ, &in_component);
        let witness = witness_indices.into_iter().map(|i| nodes[i].clone()).collect();
        conflicts.push(Conflict::Cycle { witness });
    }
    conflicts.sort_by(|a, b| match (a, b) {
        (Conflict::Cycle { witness: wa }, Conflict::Cycle { witness: wb }) => {
            wa.first().cmp(&wb.first())
        }
        _ => std::cmp::Ordering::Equal,
    });

    let mut refiners_of: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &(u, v) in &pairs {
        refiners_of.entry(v).or_default().insert(u);
    }
    for (target, refiners) in refiners_of {
        if refiners.len() >= 2 {
            conflicts.push(Conflict::MultipleRefiners {
                target: nodes[target].clone(),
                refiners: refiners.into_iter().map(|i| nodes[i].clone()).collect(),
            });
        }
    }

    let warnings = color_cycle_warnings(graph, &conflicts);

    ValidationResult { closure: graph.processed_colors.clone(), conflicts, warnings }
}

/// Mutual refinement between layers is legal as long as no region-level
/// cycle closes; it still deserves a warning because it usually signals a
/// modeling mistake.
fn color_cycle_warnings(graph: &RefinementGraph, conflicts: &[Conflict]) -> Vec<Warning> {
    let colors: BTreeSet<&str> = graph.nodes().map(|n| n.color.as_str()).collect();
    let colors: Vec<&str> = colors.into_iter().collect();
    let index: BTreeMap<&str, usize> = colors.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); colors.len()];
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); colors.len()];
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for edge in graph.edges() {
        let u = index[edge.from.color.as_str()];
        let v = index[edge.to.color.as_str()];
        if u != v {
            pairs.insert((u, v));
        }
    }
    for &(u, v) in &pairs {
        succ[u].push(v);
        pred[v].push(u);
    }

    let mut warnings = Vec::new();
    for component in strongly_connected_components(&succ, &pred) {
        if component.len() < 2 {
            continue;
        }
        let members: BTreeSet<&str> = component.iter().map(|&i| colors[i]).collect();
        let covered = conflicts.iter().any(|c| match c {
            Conflict::Cycle { witness } => {
                witness.iter().all(|n| members.contains(n.color.as_str()))
            }
            Conflict::MultipleRefiners { .. } => false,
        });
        if !covered {
            let list: Vec<&str> = members.into_iter().collect();
            warnings.push(Warning::new(format!(
                "layers {} refine each other without a region-level cycle",
                list.join(", ")
            )));
        }
    }
    warnings
}

/// Iterative Kosaraju. Components come back sorted by their smallest node
/// index, members sorted, which keeps every consumer deterministic.
fn strongly_connected_components(succ: &[Vec<usize>], pred: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = succ.len();
    let mut finished: Vec<usize> = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    for root in 0..n {
        if visited[root] {
            continue;
        }
        // Stack frames hold the node and the next successor offset to try.
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        visited[root] = true;
        while let Some(frame) = stack.last_mut() {
            let node = frame.0;
            if frame.1 < succ[node].len() {
                let candidate = succ[node][frame.1];
                frame.1 += 1;
                if !visited[candidate] {
                    visited[candidate] = true;
                    stack.push((candidate, 0));
                }
            } else {
                finished.push(node);
                stack.pop();
            }
        }
    }

    let mut component_of = vec![usize::MAX; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for &root in finished.iter().rev() {
        if component_of[root] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = Vec::new();
        let mut stack = vec![root];
        component_of[root] = id;
        while let Some(node) = stack.pop() {
            members.push(node);
            for &p in &pred[node] {
                if component_of[p] == usize::MAX {
                    component_of[p] = id;
                    stack.push(p);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    components.sort_by_key(|c| c[0]);
    components
}

/// Shortest cycle through `start` inside one strongly connected component.
/// Returns the node sequence without repeating `start` at the end.
fn cycle_witness(start: usize, succ: &[Vec<usize>], component: &BTreeSet<usize>) -> Vec<usize> {
    if succ[start].contains(&start) {
        return vec![start];
    }
    let mut parent: BTreeMap<usize, usize> = BTreeMap::new();
    let mut queue = VecDeque::new();
    queue.push_back(start);
    while let Some(node) = queue.pop_front() {
        for &next in &succ[node] {
            if next == start {
                // Found the closing edge; walk parents back to the start.
                let mut path = vec![node];
                let mut cur = node;
                while cur != start {
                    cur = parent[&cur];
                    path.push(cur);
                }
                path.reverse();
                return path;
            }
            if component.contains(&next) && !parent.contains_key(&next) && next != start {
                parent.insert(next, node);
                queue.push_back(next);
            }
        }
    }
    unreachable!("a nontrivial component always closes a cycle through its members")
}

/// Fill colors assigned to layers in sorted order, cycling when there are
/// more layers than palette entries.
const PALETTE: [&str; 8] = [
    "#cfe2f3", "#d9ead3", "#fce5cd", "#ead1dc", "#fff2cc", "#d9d2e9", "#f4cccc", "#d0e0e3",
];

/// Renders the graph as Graphviz DOT. Output is fully deterministic: node
/// lines sorted by (color, signature), edge lines sorted, stable fill
/// colors. An empty graph renders as `digraph cgpl {}`.
pub fn export_dot(graph: &RefinementGraph, conflicts: &[Conflict]) -> String {
    if graph.node_count() == 0 {
        return "digraph cgpl {}\n".to_string();
    }
    let colors: BTreeSet<&str> = graph.nodes().map(|n| n.color.as_str()).collect();
    let fill: BTreeMap<&str, &str> = colors
        .iter()
        .enumerate()
        .map(|(i, c)| (*c, PALETTE[i % PALETTE.len()]))
        .collect();

    // Edges that take part in a conflict are drawn highlighted.
    let mut hot: BTreeSet<(&VrNode, &VrNode)> = BTreeSet::new();
    for conflict in conflicts {
        match conflict {
            Conflict::Cycle { witness } => {
                for i in 0..witness.len() {
                    hot.insert((&witness[i], &witness[(i + 1) % witness.len()]));
                }
            }
            Conflict::MultipleRefiners { target, refiners } => {
                for refiner in refiners {
                    hot.insert((refiner, target));
                }
            }
        }
    }

    let mut out = String::from("digraph cgpl {\n");
    let legend: Vec<String> = fill.iter().map(|(c, f)| format!("{c}={f}")).collect();
    out.push_str(&format!("    // layer colors: {}\n", legend.join(", ")));
    out.push_str("    rankdir=LR;\n");
    out.push_str("    node [shape=box, style=filled];\n");
    for node in graph.nodes() {
        out.push_str(&format!(
            "    \"{node}\" [fillcolor=\"{}\"];\n",
            fill[node.color.as_str()]
        ));
    }
    for edge in graph.edges() {
        let highlight = if hot.contains(&(&edge.from, &edge.to)) {
            ", color=red, penwidth=2.0"
        } else {
            ""
        };
        out.push_str(&format!(
            "    \"{}\" -> \"{}\" [label=\"{}\"{highlight}];\n",
            edge.from,
            edge.to,
            edge.op.label()
        ));
    }
    out.push_str("}\n");
    out
}
