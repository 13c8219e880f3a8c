//! Dataflow graphs, node fusion under a thread budget, and miss-driven
//! priority ordering.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::Zero;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::math::CodeHeatmap;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("a node cannot be fused with itself (`{0}`)")]
    SameNode(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("thread budget must be at least 1")]
    InvalidBudget,
    #[error("invalid rate `{0}`")]
    InvalidRate(String),
    #[error("duplicate thread id `{0}`")]
    DuplicateThread(String),
    #[error("malformed input: {0}")]
    Parse(String),
}

/// Activation rate as an exact positive fraction, written `num/den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rate(pub Ratio<i64>);

impl Rate {
    pub fn new(num: i64, den: i64) -> Result<Self, FusionError> {
        if den == 0 {
            return Err(FusionError::InvalidRate(format!("{num}/{den}")));
        }
        let r = Ratio::new(num, den);
        if r <= Ratio::zero() {
            return Err(FusionError::InvalidRate(format!("{num}/{den}")));
        }
        Ok(Rate(r))
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl FromStr for Rate {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self, FusionError> {
        let bad = || FusionError::InvalidRate(s.to_string());
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        Rate::new(n.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?)
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(i64),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Text(s) => s.parse(),
            Raw::Int(n) => Rate::new(n, 1),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DFNode {
    pub id: String,
    pub rate: Rate,
    #[serde(default)]
    pub weight: f64,
    /// Original node ids; empty on input means `{id}`.
    #[serde(default)]
    pub members: BTreeSet<String>,
}

impl DFNode {
    pub fn new(id: &str, rate: Rate, weight: f64) -> Self {
        DFNode {
            id: id.to_string(),
            rate,
            weight,
            members: BTreeSet::from([id.to_string()]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trigger {
    Unconditional,
    Conditional,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DFEdge {
    pub src: String,
    pub dst: String,
    pub trigger: Trigger,
}

impl DFEdge {
    pub fn new(src: &str, dst: &str, trigger: Trigger) -> Self {
        DFEdge {
            src: src.to_string(),
            dst: dst.to_string(),
            trigger,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataflowGraph {
    pub nodes: Vec<DFNode>,
    pub edges: Vec<DFEdge>,
}

/// Keeps the first occurrence of each `(src, dst)`; a conditional duplicate
/// turns the kept edge conditional.
fn collapse_parallel(edges: impl IntoIterator<Item = DFEdge>) -> Vec<DFEdge> {
    let mut out: Vec<DFEdge> = Vec::new();
    let mut at: BTreeMap<(String, String), usize> = BTreeMap::new();
    for e in edges {
        match at.get(&(e.src.clone(), e.dst.clone())) {
            Some(&i) => {
                if e.trigger == Trigger::Conditional {
                    out[i].trigger = Trigger::Conditional;
                }
            }
            None => {
                at.insert((e.src.clone(), e.dst.clone()), out.len());
                out.push(e);
            }
        }
    }
    out
}

impl DataflowGraph {
    /// Validates and normalizes: missing members become `{id}`, parallel
    /// edges collapse.
    pub fn new(mut nodes: Vec<DFNode>, edges: Vec<DFEdge>) -> Result<Self, FusionError> {
        let bad = |m: String| FusionError::InvalidGraph(m);
        let mut ids = BTreeSet::new();
        for n in &mut nodes {
            if n.id.is_empty() {
                return Err(bad("empty node id".into()));
            }
            if !ids.insert(n.id.clone()) {
                return Err(bad(format!("duplicate node `{}`", n.id)));
            }
            if !(0.0..=1.0).contains(&n.weight) {
                return Err(bad(format!("node `{}` weight {} outside [0, 1]", n.id, n.weight)));
            }
            if n.members.is_empty() {
                n.members.insert(n.id.clone());
            }
        }
        for e in &edges {
            for end in [&e.src, &e.dst] {
                if !ids.contains(end) {
                    return Err(FusionError::UnknownNode(end.clone()));
                }
            }
            if e.src == e.dst {
                return Err(bad(format!("self-loop on `{}`", e.src)));
            }
        }
        Ok(DataflowGraph {
            nodes,
            edges: collapse_parallel(edges),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, FusionError> {
        let raw: DataflowGraph =
            serde_json::from_str(text).map_err(|e| FusionError::Parse(e.to_string()))?;
        DataflowGraph::new(raw.nodes, raw.edges)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn node(&self, id: &str) -> Option<&DFNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    fn successors<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .iter()
            .filter(move |e| e.src == id)
            .map(|e| e.dst.as_str())
    }

    /// Directed path `from ~> to` with at least two edges, avoiding `from`
    /// on the way.
    fn has_long_path(&self, from: &str, to: &str) -> bool {
        let mut seen: BTreeSet<&str> = BTreeSet::from([from]);
        let mut queue: VecDeque<&str> = self.successors(from).filter(|&w| w != to).collect();
        while let Some(w) = queue.pop_front() {
            if !seen.insert(w) {
                continue;
            }
            for x in self.successors(w) {
                if x == to {
                    return true;
                }
                if !seen.contains(x) {
                    queue.push_back(x);
                }
            }
        }
        false
    }

    pub fn is_acyclic(&self) -> bool {
        let mut indeg: BTreeMap<&str, usize> =
            self.nodes.iter().map(|n| (n.id.as_str(), 0)).collect();
        for e in &self.edges {
            *indeg.get_mut(e.dst.as_str()).expect("validated") += 1;
        }
        let mut ready: Vec<&str> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&k, _)| k).collect();
        let mut visited = 0;
        while let Some(u) = ready.pop() {
            visited += 1;
            for v in self.successors(u) {
                let d = indeg.get_mut(v).expect("validated");
                *d -= 1;
                if *d == 0 {
                    ready.push(v);
                }
            }
        }
        visited == self.nodes.len()
    }

    pub fn members(&self) -> BTreeSet<String> {
        self.nodes.iter().flat_map(|n| n.members.iter().cloned()).collect()
    }
}

/// Same rate, an unconditional edge between them, and no longer path that
/// would turn the fused node into a cycle.
pub fn eligible(u: &str, v: &str, g: &DataflowGraph) -> Result<bool, FusionError> {
    let nu = g.node(u).ok_or_else(|| FusionError::UnknownNode(u.into()))?;
    let nv = g.node(v).ok_or_else(|| FusionError::UnknownNode(v.into()))?;
    if u == v {
        return Err(FusionError::SameNode(u.into()));
    }
    if nu.rate != nv.rate {
        return Ok(false);
    }
    let unconditional = g.edges.iter().any(|e| {
        e.trigger == Trigger::Unconditional
            && ((e.src == u && e.dst == v) || (e.src == v && e.dst == u))
    });
    Ok(unconditional && !g.has_long_path(u, v) && !g.has_long_path(v, u))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Merge {
    pub a: String,
    pub b: String,
    pub fused: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionPlan {
    pub thread_budget: usize,
    pub merges: Vec<Merge>,
    /// Whether the final node count fits the budget.
    pub budget_reached: bool,
}

/// Fused graph in the input schema with the merge list alongside.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionOutput<'a> {
    pub nodes: &'a [DFNode],
    pub edges: &'a [DFEdge],
    pub merges: &'a [Merge],
    pub thread_budget: usize,
    pub budget_reached: bool,
}

pub fn fusion_json(g: &DataflowGraph, plan: &FusionPlan) -> String {
    serde_json::to_string_pretty(&FusionOutput {
        nodes: &g.nodes,
        edges: &g.edges,
        merges: &plan.merges,
        thread_budget: plan.thread_budget,
        budget_reached: plan.budget_reached,
    })
    .expect("fusion output serializes")
}

fn merge_pair(g: &DataflowGraph, a: &str, b: &str) -> (DataflowGraph, String) {
    let mut fused = format!("{a}+{b}");
    let mut k = 1;
    while g.node(&fused).is_some() {
        k += 1;
        fused = format!("{a}+{b}#{k}");
    }
    let na = g.node(a).expect("operand exists");
    let nb = g.node(b).expect("operand exists");
    let node = DFNode {
        id: fused.clone(),
        rate: na.rate,
        weight: na.weight.max(nb.weight),
        members: na.members.union(&nb.members).cloned().collect(),
    };
    let mut nodes = Vec::with_capacity(g.nodes.len() - 1);
    let mut placed = false;
    for n in &g.nodes {
        if n.id == a || n.id == b {
            if !placed {
                nodes.push(node.clone());
                placed = true;
            }
        } else {
            nodes.push(n.clone());
        }
    }
    let rename = |id: &str| {
        if id == a || id == b {
            fused.clone()
        } else {
            id.to_string()
        }
    };
    let edges = collapse_parallel(g.edges.iter().filter_map(|e| {
        let (s, d) = (rename(&e.src), rename(&e.dst));
        (s != d).then_some(DFEdge {
            src: s,
            dst: d,
            trigger: e.trigger,
        })
    }));
    (DataflowGraph { nodes, edges }, fused)
}

/// Greedy fusion until the node count fits `thread_budget` or no pair is
/// eligible. The hottest pair by combined weight goes first; ties go to the
/// lexicographically smallest `(min id, max id)`.
///
/// With a heatmap, a node whose id names a region takes that region's weight.
pub fn fuse_pass(
    g: &DataflowGraph,
    thread_budget: usize,
    heatmap: Option<&CodeHeatmap>,
) -> Result<(DataflowGraph, FusionPlan), FusionError> {
    if thread_budget == 0 {
        return Err(FusionError::InvalidBudget);
    }
    let mut cur = g.clone();
    if let Some(h) = heatmap {
        for n in &mut cur.nodes {
            if let Some(w) = h.weight(&n.id) {
                n.weight = w;
            }
        }
    }
    let mut merges = Vec::new();
    while cur.nodes.len() > thread_budget {
        let weight = |id: &str| cur.node(id).map_or(0.0, |n| n.weight);
        let mut best: Option<(f64, String, String)> = None;
        let pairs: BTreeSet<(String, String)> = cur
            .edges
            .iter()
            .filter(|e| e.trigger == Trigger::Unconditional)
            .map(|e| {
                if e.src < e.dst {
                    (e.src.clone(), e.dst.clone())
                } else {
                    (e.dst.clone(), e.src.clone())
                }
            })
            .collect();
        for (a, b) in pairs {
            if !eligible(&a, &b, &cur)? {
                continue;
            }
            let w = weight(&a) + weight(&b);
            let better = match &best {
                None => true,
                Some((bw, ba, bb)) => w > *bw || (w == *bw && (&a, &b) < (ba, bb)),
            };
            if better {
                best = Some((w, a, b));
            }
        }
        let Some((_, a, b)) = best else { break };
        let (next, fused) = merge_pair(&cur, &a, &b);
        merges.push(Merge { a, b, fused });
        cur = next;
    }
    let budget_reached = cur.nodes.len() <= thread_budget;
    Ok((
        cur,
        FusionPlan {
            thread_budget,
            merges,
            budget_reached,
        },
    ))
}

/// Thread ids by cache misses, most first; ties by id.
pub fn assign_priorities(threads: &[(String, u64)]) -> Result<Vec<String>, FusionError> {
    let mut seen = BTreeSet::new();
    for (id, _) in threads {
        if !seen.insert(id.as_str()) {
            return Err(FusionError::DuplicateThread(id.clone()));
        }
    }
    let mut v: Vec<&(String, u64)> = threads.iter().collect();
    v.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    Ok(v.into_iter().map(|(id, _)| id.clone()).collect())
}
