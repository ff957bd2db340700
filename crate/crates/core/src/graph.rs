//! Conditional directed mixed graphs (CDMGs).
//!
//! A CDMG has input nodes `J` (no incoming arrowheads), output nodes `V`,
//! directed edges into `V`, and bidirected edges between distinct output
//! nodes. Graphs are immutable values; the strongly connected components are
//! computed once at construction and every `Sc`-dependent query reads that
//! cache.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("node {0:?} declared as both input and output")]
    InputOutputOverlap(String),
    #[error("empty node name")]
    EmptyName,
    #[error("directed edge {0:?} -> {1:?} points into an input node")]
    ArrowheadIntoInput(String, String),
    #[error("bidirected edge touches non-output or equal nodes: {0:?} <-> {1:?}")]
    BadBidirected(String, String),
    #[error("node name {0:?} collides with a synthesized intervention node")]
    NameCollision(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("graph is cyclic")]
    Cyclic,
}

/// Edge orientation along a walk step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeMark {
    /// `a -> b`
    Forward,
    /// `a <- b`
    Backward,
    /// `a <-> b`
    Bidirected,
}

/// A walk: nodes plus one oriented mark per step. The trivial walk is a
/// single node with no marks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Walk {
    pub nodes: Vec<String>,
    pub edges: Vec<EdgeMark>,
}

impl Walk {
    pub fn trivial(node: impl Into<String>) -> Self {
        Walk {
            nodes: vec![node.into()],
            edges: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = self.nodes[0].clone();
        for (i, m) in self.edges.iter().enumerate() {
            let arrow = match m {
                EdgeMark::Forward => "->",
                EdgeMark::Backward => "<-",
                EdgeMark::Bidirected => "<->",
            };
            out.push_str(&format!(" {} {}", arrow, self.nodes[i + 1]));
        }
        out
    }
}

/// Reserved prefix for nodes synthesized by soft extension.
pub const INTERVENTION_PREFIX: &str = "I:";

/// Name of the soft-intervention input node attached to `w`.
pub fn intervention_node(w: &str) -> String {
    format!("{INTERVENTION_PREFIX}{w}")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cdmg {
    inputs: BTreeSet<String>,
    outputs: BTreeSet<String>,
    directed: BTreeSet<(String, String)>,
    bidirected: BTreeSet<(String, String)>,
    children: BTreeMap<String, BTreeSet<String>>,
    parents: BTreeMap<String, BTreeSet<String>>,
    siblings: BTreeMap<String, BTreeSet<String>>,
    scc_id: BTreeMap<String, usize>,
}

impl Cdmg {
    pub fn new(
        inputs: impl IntoIterator<Item = String>,
        outputs: impl IntoIterator<Item = String>,
        directed: impl IntoIterator<Item = (String, String)>,
        bidirected: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, GraphError> {
        let inputs: BTreeSet<String> = inputs.into_iter().collect();
        let outputs: BTreeSet<String> = outputs.into_iter().collect();
        for n in inputs.iter().chain(&outputs) {
            if n.is_empty() {
                return Err(GraphError::EmptyName);
            }
        }
        if let Some(n) = inputs.intersection(&outputs).next() {
            return Err(GraphError::InputOutputOverlap(n.clone()));
        }
        let mut children: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut parents: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut siblings: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for n in inputs.iter().chain(&outputs) {
            children.insert(n.clone(), BTreeSet::new());
            parents.insert(n.clone(), BTreeSet::new());
            siblings.insert(n.clone(), BTreeSet::new());
        }
        let mut dset = BTreeSet::new();
        for (tail, head) in directed {
            if !inputs.contains(&tail) && !outputs.contains(&tail) {
                return Err(GraphError::UnknownNode(tail));
            }
            if !outputs.contains(&head) {
                if inputs.contains(&head) {
                    return Err(GraphError::ArrowheadIntoInput(tail, head));
                }
                return Err(GraphError::UnknownNode(head));
            }
            children.get_mut(&tail).unwrap().insert(head.clone());
            parents.get_mut(&head).unwrap().insert(tail.clone());
            dset.insert((tail, head));
        }
        let mut bset = BTreeSet::new();
        for (a, b) in bidirected {
            if !outputs.contains(&a) || !outputs.contains(&b) || a == b {
                return Err(GraphError::BadBidirected(a, b));
            }
            siblings.get_mut(&a).unwrap().insert(b.clone());
            siblings.get_mut(&b).unwrap().insert(a.clone());
            let (x, y) = if a <= b { (a, b) } else { (b, a) };
            bset.insert((x, y));
        }
        let scc_id = compute_scc(&children);
        Ok(Cdmg {
            inputs,
            outputs,
            directed: dset,
            bidirected: bset,
            children,
            parents,
            siblings,
            scc_id,
        })
    }

    /// Convenience constructor from `&str` lists.
    pub fn build(
        inputs: &[&str],
        outputs: &[&str],
        directed: &[(&str, &str)],
        bidirected: &[(&str, &str)],
    ) -> Result<Self, GraphError> {
        Cdmg::new(
            inputs.iter().map(|s| s.to_string()),
            outputs.iter().map(|s| s.to_string()),
            directed
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string())),
            bidirected
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string())),
        )
    }

    pub fn inputs(&self) -> &BTreeSet<String> {
        &self.inputs
    }

    pub fn outputs(&self) -> &BTreeSet<String> {
        &self.outputs
    }

    pub fn directed(&self) -> &BTreeSet<(String, String)> {
        &self.directed
    }

    pub fn bidirected(&self) -> &BTreeSet<(String, String)> {
        &self.bidirected
    }

    pub fn contains(&self, v: &str) -> bool {
        self.inputs.contains(v) || self.outputs.contains(v)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &String> {
        self.inputs.iter().chain(self.outputs.iter())
    }

    pub fn node_count(&self) -> usize {
        self.inputs.len() + self.outputs.len()
    }

    fn check_node(&self, v: &str) -> Result<(), GraphError> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(v.to_string()))
        }
    }

    fn check_nodes<'a>(&self, vs: impl IntoIterator<Item = &'a String>) -> Result<(), GraphError> {
        for v in vs {
            self.check_node(v)?;
        }
        Ok(())
    }

    pub fn parents(&self, v: &str) -> Result<&BTreeSet<String>, GraphError> {
        self.check_node(v)?;
        Ok(&self.parents[v])
    }

    pub fn children(&self, v: &str) -> Result<&BTreeSet<String>, GraphError> {
        self.check_node(v)?;
        Ok(&self.children[v])
    }

    pub fn siblings(&self, v: &str) -> Result<&BTreeSet<String>, GraphError> {
        self.check_node(v)?;
        Ok(&self.siblings[v])
    }

    /// Reflexive ancestors of a node set along directed walks.
    pub fn ancestors(&self, a: &BTreeSet<String>) -> Result<BTreeSet<String>, GraphError> {
        self.check_nodes(a)?;
        Ok(self.closure(a, &self.parents))
    }

    /// Reflexive descendants of a node set along directed walks.
    pub fn descendants(&self, a: &BTreeSet<String>) -> Result<BTreeSet<String>, GraphError> {
        self.check_nodes(a)?;
        Ok(self.closure(a, &self.children))
    }

    fn closure(
        &self,
        start: &BTreeSet<String>,
        step: &BTreeMap<String, BTreeSet<String>>,
    ) -> BTreeSet<String> {
        let mut seen: BTreeSet<String> = start.clone();
        let mut frontier: Vec<String> = start.iter().cloned().collect();
        while let Some(v) = frontier.pop() {
            for w in &step[&v] {
                if seen.insert(w.clone()) {
                    frontier.push(w.clone());
                }
            }
        }
        seen
    }

    /// Strongly connected component of `v` over directed edges; contains `v`.
    pub fn strongly_connected(&self, v: &str) -> Result<BTreeSet<String>, GraphError> {
        self.check_node(v)?;
        let id = self.scc_id[v];
        Ok(self
            .nodes()
            .filter(|w| self.scc_id[*w] == id)
            .cloned()
            .collect())
    }

    /// Cached SCC id; two nodes share an id iff they lie on a common cycle.
    pub fn scc_id(&self, v: &str) -> Result<usize, GraphError> {
        self.check_node(v)?;
        Ok(self.scc_id[v])
    }

    pub fn same_scc(&self, a: &str, b: &str) -> Result<bool, GraphError> {
        Ok(self.scc_id(a)? == self.scc_id(b)?)
    }

    pub fn is_acyclic(&self) -> bool {
        if self.directed.iter().any(|(a, b)| a == b) {
            return false;
        }
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for v in self.nodes() {
            *counts.entry(self.scc_id[v]).or_insert(0) += 1;
        }
        counts.values().all(|&c| c == 1)
    }

    /// Topological order with all inputs first and lexicographic tie-breaks;
    /// `None` on cyclic input.
    pub fn topological_order(&self) -> Option<Vec<String>> {
        if !self.is_acyclic() {
            return None;
        }
        let mut order: Vec<String> = self.inputs.iter().cloned().collect();
        let mut placed: BTreeSet<String> = self.inputs.clone();
        let mut pending: BTreeSet<String> = self.outputs.clone();
        while !pending.is_empty() {
            let next = pending
                .iter()
                .find(|v| self.parents[*v].iter().all(|p| placed.contains(p)))?
                .clone();
            pending.remove(&next);
            placed.insert(next.clone());
            order.push(next);
        }
        Some(order)
    }

    /// Hard interventional CDMG: `w` moves to the inputs, arrowheads into `w`
    /// are deleted.
    pub fn hard_intervene(&self, w: &BTreeSet<String>) -> Result<Cdmg, GraphError> {
        self.check_nodes(w)?;
        let inputs: BTreeSet<String> = self.inputs.union(w).cloned().collect();
        let outputs: BTreeSet<String> = self.outputs.difference(w).cloned().collect();
        let directed = self
            .directed
            .iter()
            .filter(|(_, head)| !w.contains(head))
            .cloned();
        let bidirected = self
            .bidirected
            .iter()
            .filter(|(a, b)| !w.contains(a) && !w.contains(b))
            .cloned();
        Cdmg::new(inputs, outputs, directed.collect::<Vec<_>>(), bidirected.collect::<Vec<_>>())
    }

    /// Soft interventional CDMG: adds a fresh input `I:<w>` for every `w`,
    /// with an edge `I:<w> -> w` for `w ∉ J`.
    pub fn soft_extend(&self, w: &BTreeSet<String>) -> Result<Cdmg, GraphError> {
        self.check_nodes(w)?;
        let mut inputs = self.inputs.clone();
        let mut directed: Vec<(String, String)> = self.directed.iter().cloned().collect();
        for node in w {
            let iw = intervention_node(node);
            if self.contains(&iw) {
                return Err(GraphError::NameCollision(iw));
            }
            inputs.insert(iw.clone());
            if !self.inputs.contains(node) {
                directed.push((iw, node.clone()));
            }
        }
        Cdmg::new(
            inputs,
            self.outputs.clone(),
            directed,
            self.bidirected.iter().cloned().collect::<Vec<_>>(),
        )
    }

    /// Latent projection onto `(J ∪ V) ∖ w`: directed edges from directed
    /// walks through `w`, bidirected edges from treks through `w`.
    pub fn marginalize(&self, w: &BTreeSet<String>) -> Result<Cdmg, GraphError> {
        self.check_nodes(w)?;
        if let Some(j) = w.iter().find(|n| self.inputs.contains(*n)) {
            return Err(GraphError::InvalidArgument(format!(
                "cannot marginalize input node {j:?}"
            )));
        }
        let outputs: BTreeSet<String> = self.outputs.difference(w).cloned().collect();
        let survivors: BTreeSet<String> = self.inputs.union(&outputs).cloned().collect();

        // up[v]: nodes u in w with a directed path u -> ... -> v whose
        // interior lies in w. Used for both edge clauses.
        let mut up: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for v in self.nodes() {
            let mut seen: BTreeSet<String> = BTreeSet::new();
            let mut frontier: Vec<String> = self.parents[v]
                .iter()
                .filter(|p| w.contains(*p))
                .cloned()
                .collect();
            while let Some(u) = frontier.pop() {
                if !seen.insert(u.clone()) {
                    continue;
                }
                for p in &self.parents[&u] {
                    if w.contains(p) && !seen.contains(p) {
                        frontier.push(p.clone());
                    }
                }
            }
            up.insert(v.clone(), seen);
        }

        let mut directed: BTreeSet<(String, String)> = BTreeSet::new();
        for tail in &survivors {
            for head in &survivors {
                if self.directed.contains(&(tail.clone(), head.clone()))
                    || up[head].iter().any(|u| self.directed.contains(&(tail.clone(), u.clone())))
                {
                    if self.outputs.contains(head) {
                        directed.insert((tail.clone(), head.clone()));
                    }
                }
            }
        }

        // Trek clause: arrowheads at both ends, interior nodes in w with at
        // most one arrowhead each. The pivot is either a common source in w
        // or a bidirected edge between the two ancestor cones.
        let mut bidirected: BTreeSet<(String, String)> = BTreeSet::new();
        let cone = |v: &String| -> BTreeSet<String> {
            let mut c = up[v].clone();
            c.insert(v.clone());
            c
        };
        let outs: Vec<&String> = outputs.iter().collect();
        for (i, a) in outs.iter().enumerate() {
            for b in outs.iter().skip(i + 1) {
                let ca = cone(a);
                let cb = cone(b);
                let fork = ca
                    .intersection(&cb)
                    .any(|u| w.contains(u));
                let arc = self.bidirected.iter().any(|(x, y)| {
                    (ca.contains(x) && cb.contains(y)) || (ca.contains(y) && cb.contains(x))
                });
                if fork || arc {
                    bidirected.insert(((*a).clone(), (*b).clone()));
                }
            }
        }
        Cdmg::new(
            self.inputs.clone(),
            outputs,
            directed.into_iter().collect::<Vec<_>>(),
            bidirected.into_iter().collect::<Vec<_>>(),
        )
    }

    /// Acyclification: collapses each strongly connected component so that
    /// sigma-separation on `self` equals m-separation on the result.
    pub fn acyclify(&self) -> Cdmg {
        let mut directed: BTreeSet<(String, String)> = BTreeSet::new();
        let mut bidirected: BTreeSet<(String, String)> = BTreeSet::new();
        let scc_members: BTreeMap<usize, BTreeSet<String>> = {
            let mut m: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
            for v in self.nodes() {
                m.entry(self.scc_id[v]).or_default().insert(v.clone());
            }
            m
        };
        for w in self.outputs.iter() {
            let members = &scc_members[&self.scc_id[w]];
            for wt in members {
                for v in &self.parents[wt] {
                    if self.scc_id[v] != self.scc_id[w] {
                        directed.insert((v.clone(), w.clone()));
                    }
                }
            }
        }
        let outs: Vec<&String> = self.outputs.iter().collect();
        for (i, v) in outs.iter().enumerate() {
            for w in outs.iter().skip(i + 1) {
                let same = self.scc_id[*v] == self.scc_id[*w];
                let linked = same
                    || self.bidirected.iter().any(|(a, b)| {
                        (self.scc_id[a] == self.scc_id[*v] && self.scc_id[b] == self.scc_id[*w])
                            || (self.scc_id[b] == self.scc_id[*v]
                                && self.scc_id[a] == self.scc_id[*w])
                    });
                if linked {
                    bidirected.insert(((*v).clone(), (*w).clone()));
                }
            }
        }
        Cdmg::new(
            self.inputs.clone(),
            self.outputs.clone(),
            directed.into_iter().collect::<Vec<_>>(),
            bidirected.into_iter().collect::<Vec<_>>(),
        )
        .expect("acyclification preserves node sets")
    }

    /// All steps leaving `v`, as `(neighbor, walk mark)`: `Forward` for
    /// `v -> w`, `Backward` for `v <- w`, `Bidirected` for `v <-> w`.
    pub(crate) fn steps_from<'a>(
        &'a self,
        v: &'a str,
    ) -> impl Iterator<Item = (&'a String, EdgeMark)> + 'a {
        let out = self.children[v].iter().map(|w| (w, EdgeMark::Forward));
        let inc = self.parents[v].iter().map(|w| (w, EdgeMark::Backward));
        let bi = self.siblings[v].iter().map(|w| (w, EdgeMark::Bidirected));
        out.chain(inc).chain(bi)
    }

    /// Whether the oriented step `a (mark) b` is an edge of the graph.
    pub fn has_step(&self, a: &str, mark: EdgeMark, b: &str) -> bool {
        match mark {
            EdgeMark::Forward => self.directed.contains(&(a.to_string(), b.to_string())),
            EdgeMark::Backward => self.directed.contains(&(b.to_string(), a.to_string())),
            EdgeMark::Bidirected => {
                let (x, y) = if a <= b { (a, b) } else { (b, a) };
                self.bidirected.contains(&(x.to_string(), y.to_string()))
            }
        }
    }
}

/// Iterative Tarjan SCC over the directed part; ids are stable for a given
/// graph (assigned in completion order).
fn compute_scc(children: &BTreeMap<String, BTreeSet<String>>) -> BTreeMap<String, usize> {
    let nodes: Vec<&String> = children.keys().collect();
    let index_of: BTreeMap<&String, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let n = nodes.len();
    let mut ids = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut disc = vec![usize::MAX; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut counter = 0usize;
    let mut comp = 0usize;

    // Explicit DFS stack: (node, child iterator position).
    for start in 0..n {
        if disc[start] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(start, 0)];
        while let Some(&mut (v, ref mut ci)) = call.last_mut() {
            if *ci == 0 {
                disc[v] = counter;
                low[v] = counter;
                counter += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            let kids: Vec<usize> = children[nodes[v]]
                .iter()
                .map(|w| index_of[w])
                .collect();
            if *ci < kids.len() {
                let w = kids[*ci];
                *ci += 1;
                if disc[w] == usize::MAX {
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                if low[v] == disc[v] {
                    while let Some(u) = stack.pop() {
                        on_stack[u] = false;
                        ids[u] = comp;
                        if u == v {
                            break;
                        }
                    }
                    comp += 1;
                }
                call.pop();
                if let Some(&mut (parent, _)) = call.last_mut() {
                    low[parent] = low[parent].min(low[v]);
                }
            }
        }
    }
    nodes
        .into_iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), ids[i]))
        .collect()
}
