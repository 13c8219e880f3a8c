//! Typed hardware resource graphs and the interference calculus.
//!
//! A platform is a set of resources classified as initiators (cores, DMA
//! engines), transporters (caches on the path, buses, ports) and targets
//! (memories, devices). Links are directed and describe which resource may
//! forward a request to which. A transaction is a simple initiator-to-target
//! path through the link graph. Couplings are induced-effect edges: contention
//! on `source` can alter the state of `affected` even though the two
//! transactions never share `affected` directly (inclusive cache evictions,
//! snoop invalidations, prefetches).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Platform model bundled with the crate: a Raspberry Pi 4 (BCM2711,
/// 4x Cortex-A72). It is a reconstruction from public documentation, not an
/// exhaustive description of the SoC.
pub const RPI4_MODEL_JSON: &str = include_str!("../data/rpi4.json");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlatformError {
    #[error("unknown resource id `{0}`")]
    UnknownResource(String),
    #[error("resource `{id}` is a {actual}, expected a {expected}")]
    WrongKind {
        id: String,
        expected: ResourceKind,
        actual: ResourceKind,
    },
    #[error("transaction `{id}` is invalid: {reason}")]
    InvalidTransaction { id: String, reason: String },
    #[error("a combination needs at least 2 distinct transactions, got {0}")]
    CombinationTooSmall(usize),
    #[error("malformed platform model: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ResourceKind {
    Initiator,
    Transporter,
    Target,
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ResourceKind::Initiator => "Initiator",
            ResourceKind::Transporter => "Transporter",
            ResourceKind::Target => "Target",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resource {
    pub id: String,
    pub name: String,
    pub kind: ResourceKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingReason {
    Inclusivity,
    CoherencySnoop,
    Prefetch,
}

impl fmt::Display for CouplingReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CouplingReason::Inclusivity => "inclusivity",
            CouplingReason::CoherencySnoop => "coherency_snoop",
            CouplingReason::Prefetch => "prefetch",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coupling {
    pub source: String,
    pub affected: String,
    pub reason: CouplingReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    DuplicateResourceId,
    LinkUnknownEndpoint,
    LinkIntoInitiator,
    LinkFromTarget,
    CouplingUnknownResource,
    CouplingSelfLoop,
    NoInitiator,
    NoTarget,
    NoInitiatorTargetPath,
}

/// One violated model invariant, naming the offending ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub ids: Vec<String>,
    pub message: String,
}

impl Diagnostic {
    fn new(kind: DiagnosticKind, ids: Vec<String>, message: String) -> Self {
        Diagnostic { kind, ids, message }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatformModel {
    pub resources: Vec<Resource>,
    pub links: Vec<Link>,
    #[serde(default)]
    pub couplings: Vec<Coupling>,
}

impl PlatformModel {
    pub fn from_json(text: &str) -> Result<Self, PlatformError> {
        serde_json::from_str(text).map_err(|e| PlatformError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("platform model serializes")
    }

    /// The bundled Raspberry Pi 4 model.
    pub fn rpi4() -> Self {
        Self::from_json(RPI4_MODEL_JSON).expect("bundled rpi4 model parses")
    }

    pub fn resource(&self, id: &str) -> Option<&Resource> {
        self.resources.iter().find(|r| r.id == id)
    }

    fn kind_of(&self, id: &str) -> Result<ResourceKind, PlatformError> {
        self.resource(id)
            .map(|r| r.kind)
            .ok_or_else(|| PlatformError::UnknownResource(id.to_string()))
    }

    pub fn initiators(&self) -> impl Iterator<Item = &Resource> {
        self.resources
            .iter()
            .filter(|r| r.kind == ResourceKind::Initiator)
    }

    pub fn targets(&self) -> impl Iterator<Item = &Resource> {
        self.resources
            .iter()
            .filter(|r| r.kind == ResourceKind::Target)
    }

    /// Sorted successor lists over links whose endpoints both exist.
    fn adjacency(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let known: BTreeSet<&str> = self.resources.iter().map(|r| r.id.as_str()).collect();
        let mut adj: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for link in &self.links {
            if known.contains(link.from.as_str()) && known.contains(link.to.as_str()) {
                adj.entry(link.from.as_str())
                    .or_default()
                    .insert(link.to.as_str());
            }
        }
        adj
    }

    fn has_link(&self, from: &str, to: &str) -> bool {
        self.links.iter().any(|l| l.from == from && l.to == to)
    }

    /// Checks every model invariant. An empty list means the model is well formed.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        let mut reported = BTreeSet::new();
        for r in &self.resources {
            if !seen.insert(r.id.as_str()) && reported.insert(r.id.as_str()) {
                out.push(Diagnostic::new(
                    DiagnosticKind::DuplicateResourceId,
                    vec![r.id.clone()],
                    format!("resource id `{}` is declared more than once", r.id),
                ));
            }
        }

        for link in &self.links {
            let mut endpoints_ok = true;
            for end in [&link.from, &link.to] {
                if self.resource(end).is_none() {
                    endpoints_ok = false;
                    out.push(Diagnostic::new(
                        DiagnosticKind::LinkUnknownEndpoint,
                        vec![end.clone()],
                        format!(
                            "link {} -> {} references unknown resource `{}`",
                            link.from, link.to, end
                        ),
                    ));
                }
            }
            if !endpoints_ok {
                continue;
            }
            if self.kind_of(&link.to) == Ok(ResourceKind::Initiator) {
                out.push(Diagnostic::new(
                    DiagnosticKind::LinkIntoInitiator,
                    vec![link.from.clone(), link.to.clone()],
                    format!("link {} -> {} terminates at an initiator", link.from, link.to),
                ));
            }
            if self.kind_of(&link.from) == Ok(ResourceKind::Target) {
                out.push(Diagnostic::new(
                    DiagnosticKind::LinkFromTarget,
                    vec![link.from.clone(), link.to.clone()],
                    format!("link {} -> {} originates at a target", link.from, link.to),
                ));
            }
        }

        for c in &self.couplings {
            for end in [&c.source, &c.affected] {
                if self.resource(end).is_none() {
                    out.push(Diagnostic::new(
                        DiagnosticKind::CouplingUnknownResource,
                        vec![end.clone()],
                        format!(
                            "coupling {} -> {} ({}) references unknown resource `{}`",
                            c.source, c.affected, c.reason, end
                        ),
                    ));
                }
            }
            if c.source == c.affected {
                out.push(Diagnostic::new(
                    DiagnosticKind::CouplingSelfLoop,
                    vec![c.source.clone()],
                    format!("coupling on `{}` has identical source and affected", c.source),
                ));
            }
        }

        if self.initiators().next().is_none() {
            out.push(Diagnostic::new(
                DiagnosticKind::NoInitiator,
                vec![],
                "model declares no initiator".into(),
            ));
        }
        if self.targets().next().is_none() {
            out.push(Diagnostic::new(
                DiagnosticKind::NoTarget,
                vec![],
                "model declares no target".into(),
            ));
        }
        if self.initiators().next().is_some()
            && self.targets().next().is_some()
            && !self.any_initiator_reaches_target()
        {
            out.push(Diagnostic::new(
                DiagnosticKind::NoInitiatorTargetPath,
                vec![],
                "no target is reachable from any initiator".into(),
            ));
        }
        out
    }

    fn any_initiator_reaches_target(&self) -> bool {
        let adj = self.adjacency();
        let mut stack: Vec<&str> = self.initiators().map(|r| r.id.as_str()).collect();
        let mut visited: BTreeSet<&str> = stack.iter().copied().collect();
        while let Some(node) = stack.pop() {
            if self.kind_of(node) == Ok(ResourceKind::Target) {
                return true;
            }
            for &next in adj.get(node).into_iter().flatten() {
                if visited.insert(next) {
                    stack.push(next);
                }
            }
        }
        false
    }

    /// Every simple path from `initiator` to a target (or to `target` only),
    /// sorted lexicographically by path.
    pub fn enumerate_transactions(
        &self,
        initiator: &str,
        target: Option<&str>,
    ) -> Result<Vec<Transaction>, PlatformError> {
        expect_kind(self, initiator, ResourceKind::Initiator)?;
        if let Some(t) = target {
            expect_kind(self, t, ResourceKind::Target)?;
        }
        let adj = self.adjacency();
        let mut paths = Vec::new();
        let mut path = vec![initiator];
        let mut on_path: BTreeSet<&str> = [initiator].into();
        self.dfs_paths(&adj, target, &mut path, &mut on_path, &mut paths);
        paths.sort();
        Ok(paths
            .into_iter()
            .map(|p| Transaction::from_path(p.into_iter().map(str::to_string).collect()))
            .collect())
    }

    fn dfs_paths<'a>(
        &'a self,
        adj: &BTreeMap<&'a str, BTreeSet<&'a str>>,
        target: Option<&str>,
        path: &mut Vec<&'a str>,
        on_path: &mut BTreeSet<&'a str>,
        out: &mut Vec<Vec<&'a str>>,
    ) {
        let last = *path.last().expect("path is never empty");
        if path.len() > 1 && self.kind_of(last) == Ok(ResourceKind::Target) {
            if target.is_none_or(|t| t == last) {
                out.push(path.clone());
            }
            // targets have no outgoing links in a valid model
            return;
        }
        for &next in adj.get(last).into_iter().flatten() {
            if on_path.insert(next) {
                path.push(next);
                self.dfs_paths(adj, target, path, on_path, out);
                path.pop();
                on_path.remove(next);
            }
        }
    }

    /// Transactions of every initiator (or of the listed ones), optionally
    /// restricted to a single target.
    pub fn all_transactions(
        &self,
        initiators: Option<&[String]>,
        target: Option<&str>,
    ) -> Result<Vec<Transaction>, PlatformError> {
        let ids: Vec<String> = match initiators {
            Some(list) => list.to_vec(),
            None => self.initiators().map(|r| r.id.clone()).collect(),
        };
        let mut out = Vec::new();
        for id in &ids {
            out.extend(self.enumerate_transactions(id, target)?);
        }
        Ok(out)
    }

    /// Decides which resources a combination of transactions shares, directly
    /// or through a single coupling hop.
    pub fn interference_channels(
        &self,
        transactions: &[Transaction],
    ) -> Result<InterferenceVerdict, PlatformError> {
        let mut by_id: BTreeMap<&str, &Transaction> = BTreeMap::new();
        for t in transactions {
            t.validate(self)?;
            by_id.insert(t.id.as_str(), t);
        }
        if by_id.len() < 2 {
            return Err(PlatformError::CombinationTooSmall(by_id.len()));
        }

        let mut users: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (id, t) in &by_id {
            for r in &t.path {
                users.entry(r.as_str()).or_default().insert(id);
            }
        }
        let shared: BTreeSet<String> = users
            .iter()
            .filter(|(_, ts)| ts.len() >= 2)
            .map(|(r, _)| r.to_string())
            .collect();

        // Depth one: the coupling source must be shared and the affected
        // resource must lie on a path of the combination. Since the source is
        // used by at least two transactions, some transaction other than the
        // one holding `affected` always contends on it.
        let coupled: BTreeSet<CoupledResource> = self
            .couplings
            .iter()
            .filter(|c| shared.contains(&c.source) && users.contains_key(c.affected.as_str()))
            .map(|c| CoupledResource {
                resource: c.affected.clone(),
                reason: c.reason,
            })
            .collect();

        let interference_free = shared.is_empty() && coupled.is_empty();
        Ok(InterferenceVerdict {
            combination: by_id.keys().map(|s| s.to_string()).collect(),
            shared,
            coupled,
            interference_free,
        })
    }

    /// One verdict per unordered pair, ordered by the pair's transaction ids.
    pub fn pairwise_channel_report(
        &self,
        transactions: &[Transaction],
    ) -> Result<Vec<InterferenceVerdict>, PlatformError> {
        let mut sorted: Vec<&Transaction> = transactions.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));
        sorted.dedup_by(|a, b| a.id == b.id);
        if sorted.len() < 2 {
            return Err(PlatformError::CombinationTooSmall(sorted.len()));
        }
        let mut out = Vec::with_capacity(sorted.len() * (sorted.len() - 1) / 2);
        for (i, a) in sorted.iter().enumerate() {
            for b in &sorted[i + 1..] {
                out.push(self.interference_channels(&[(*a).clone(), (*b).clone()])?);
            }
        }
        Ok(out)
    }
}

fn expect_kind(
    model: &PlatformModel,
    id: &str,
    expected: ResourceKind,
) -> Result<(), PlatformError> {
    let actual = model.kind_of(id)?;
    if actual != expected {
        return Err(PlatformError::WrongKind {
            id: id.to_string(),
            expected,
            actual,
        });
    }
    Ok(())
}

/// A simple path from an initiator to a target.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Transaction {
    pub id: String,
    pub path: Vec<String>,
}

impl Transaction {
    /// Builds a transaction whose id is the path joined with `>`.
    pub fn from_path(path: Vec<String>) -> Self {
        Transaction {
            id: path.join(">"),
            path,
        }
    }

    pub fn initiator(&self) -> &str {
        self.path.first().map(String::as_str).unwrap_or("")
    }

    pub fn validate(&self, model: &PlatformModel) -> Result<(), PlatformError> {
        let invalid = |reason: String| PlatformError::InvalidTransaction {
            id: self.id.clone(),
            reason,
        };
        let (first, last) = match (self.path.first(), self.path.last()) {
            (Some(f), Some(l)) if self.path.len() >= 2 => (f, l),
            _ => return Err(invalid("path needs at least an initiator and a target".into())),
        };
        if model.kind_of(first)? != ResourceKind::Initiator {
            return Err(invalid(format!("path starts at `{first}`, not an initiator")));
        }
        if model.kind_of(last)? != ResourceKind::Target {
            return Err(invalid(format!("path ends at `{last}`, not a target")));
        }
        let mut seen = BTreeSet::new();
        for r in &self.path {
            model.kind_of(r)?;
            if !seen.insert(r.as_str()) {
                return Err(invalid(format!("resource `{r}` repeats on the path")));
            }
        }
        for pair in self.path.windows(2) {
            if !model.has_link(&pair[0], &pair[1]) {
                return Err(invalid(format!("no link {} -> {}", pair[0], pair[1])));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CoupledResource {
    pub resource: String,
    pub reason: CouplingReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterferenceVerdict {
    pub combination: BTreeSet<String>,
    pub shared: BTreeSet<String>,
    pub coupled: BTreeSet<CoupledResource>,
    pub interference_free: bool,
}

impl InterferenceVerdict {
    /// One-line human rendering, resolving ids to resource names.
    pub fn describe(&self, model: &PlatformModel) -> String {
        let name = |id: &str| {
            model
                .resource(id)
                .map(|r| r.name.clone())
                .unwrap_or_else(|| id.to_string())
        };
        let combo: Vec<&str> = self.combination.iter().map(String::as_str).collect();
        if self.interference_free {
            return format!("{} | interference-free", combo.join(" x "));
        }
        let shared: Vec<String> = self.shared.iter().map(|s| name(s)).collect();
        let coupled: Vec<String> = self
            .coupled
            .iter()
            .map(|c| format!("{} ({})", name(&c.resource), c.reason))
            .collect();
        format!(
            "{} | shared: {} | coupled: {}",
            combo.join(" x "),
            if shared.is_empty() { "-".into() } else { shared.join(", ") },
            if coupled.is_empty() { "-".into() } else { coupled.join(", ") },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res(id: &str, kind: ResourceKind) -> Resource {
        Resource {
            id: id.into(),
            name: id.to_uppercase(),
            kind,
        }
    }

    fn link(from: &str, to: &str) -> Link {
        Link {
            from: from.into(),
            to: to.into(),
        }
    }

    fn chain() -> PlatformModel {
        PlatformModel {
            resources: vec![
                res("cpu", ResourceKind::Initiator),
                res("bus", ResourceKind::Transporter),
                res("mem", ResourceKind::Target),
            ],
            links: vec![link("cpu", "bus"), link("bus", "mem")],
            couplings: vec![],
        }
    }

    fn diamond() -> PlatformModel {
        PlatformModel {
            resources: vec![
                res("cpu", ResourceKind::Initiator),
                res("a", ResourceKind::Transporter),
                res("b", ResourceKind::Transporter),
                res("mem", ResourceKind::Target),
            ],
            links: vec![
                link("cpu", "a"),
                link("cpu", "b"),
                link("a", "mem"),
                link("b", "mem"),
            ],
            couplings: vec![],
        }
    }

    #[test]
    fn minimal_chain_is_valid() {
        assert!(chain().validate().is_empty());
    }

    #[test]
    fn missing_link_endpoint_is_named() {
        let mut m = chain();
        m.links.push(link("bus", "ghost"));
        let diags = m.validate();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::LinkUnknownEndpoint);
        assert_eq!(diags[0].ids, vec!["ghost".to_string()]);
    }

    #[test]
    fn direction_rules_and_duplicates() {
        let mut m = chain();
        m.links.push(link("bus", "cpu"));
        m.links.push(link("mem", "bus"));
        m.resources.push(res("bus", ResourceKind::Transporter));
        let kinds: Vec<_> = m.validate().into_iter().map(|d| d.kind).collect();
        assert!(kinds.contains(&DiagnosticKind::LinkIntoInitiator));
        assert!(kinds.contains(&DiagnosticKind::LinkFromTarget));
        assert!(kinds.contains(&DiagnosticKind::DuplicateResourceId));
    }

    #[test]
    fn unreachable_target_is_reported() {
        let mut m = chain();
        m.links.clear();
        let kinds: Vec<_> = m.validate().into_iter().map(|d| d.kind).collect();
        assert_eq!(kinds, vec![DiagnosticKind::NoInitiatorTargetPath]);
    }

    #[test]
    fn coupling_checks() {
        let mut m = chain();
        m.couplings.push(Coupling {
            source: "bus".into(),
            affected: "bus".into(),
            reason: CouplingReason::Prefetch,
        });
        m.couplings.push(Coupling {
            source: "nope".into(),
            affected: "bus".into(),
            reason: CouplingReason::Inclusivity,
        });
        let kinds: Vec<_> = m.validate().into_iter().map(|d| d.kind).collect();
        assert_eq!(
            kinds,
            vec![
                DiagnosticKind::CouplingSelfLoop,
                DiagnosticKind::CouplingUnknownResource
            ]
        );
    }

    #[test]
    fn chain_has_one_path() {
        let ts = chain().enumerate_transactions("cpu", None).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].path, vec!["cpu", "bus", "mem"]);
        assert_eq!(ts[0].id, "cpu>bus>mem");
    }

    #[test]
    fn diamond_has_two_paths_in_order() {
        let ts = diamond().enumerate_transactions("cpu", Some("mem")).unwrap();
        let paths: Vec<_> = ts.iter().map(|t| t.path.join(",")).collect();
        assert_eq!(paths, vec!["cpu,a,mem", "cpu,b,mem"]);
    }

    #[test]
    fn enumerate_rejects_bad_ids() {
        let m = chain();
        assert_eq!(
            m.enumerate_transactions("ghost", None),
            Err(PlatformError::UnknownResource("ghost".into()))
        );
        assert!(matches!(
            m.enumerate_transactions("bus", None),
            Err(PlatformError::WrongKind { .. })
        ));
        assert!(matches!(
            m.enumerate_transactions("cpu", Some("bus")),
            Err(PlatformError::WrongKind { .. })
        ));
    }

    #[test]
    fn cyclic_links_yield_simple_paths_only() {
        let mut m = diamond();
        m.links.push(link("a", "b"));
        m.links.push(link("b", "a"));
        let ts = m.enumerate_transactions("cpu", None).unwrap();
        assert_eq!(ts.len(), 4);
        for t in &ts {
            t.validate(&m).unwrap();
        }
    }

    #[test]
    fn transaction_validation_rejects_repeats_and_missing_links() {
        let m = diamond();
        let bad = Transaction::from_path(vec!["cpu".into(), "mem".into()]);
        assert!(matches!(
            bad.validate(&m),
            Err(PlatformError::InvalidTransaction { .. })
        ));
        let short = Transaction::from_path(vec!["cpu".into()]);
        assert!(short.validate(&m).is_err());
    }

    #[test]
    fn disjoint_transactions_are_interference_free() {
        let m = PlatformModel {
            resources: vec![
                res("c0", ResourceKind::Initiator),
                res("c1", ResourceKind::Initiator),
                res("m0", ResourceKind::Target),
                res("m1", ResourceKind::Target),
            ],
            links: vec![link("c0", "m0"), link("c1", "m1")],
            couplings: vec![],
        };
        let a = m.enumerate_transactions("c0", None).unwrap();
        let b = m.enumerate_transactions("c1", None).unwrap();
        let v = m
            .interference_channels(&[a[0].clone(), b[0].clone()])
            .unwrap();
        assert!(v.interference_free);
        assert!(v.shared.is_empty());
    }

    #[test]
    fn single_transaction_combination_is_rejected() {
        let m = chain();
        let t = m.enumerate_transactions("cpu", None).unwrap();
        assert_eq!(
            m.interference_channels(&[t[0].clone(), t[0].clone()]),
            Err(PlatformError::CombinationTooSmall(1))
        );
        assert_eq!(
            m.pairwise_channel_report(&t),
            Err(PlatformError::CombinationTooSmall(1))
        );
    }

    #[test]
    fn rpi4_model_is_valid() {
        let m = PlatformModel::rpi4();
        assert_eq!(m.validate(), vec![]);
        assert_eq!(m.initiators().count(), 5);
    }

    #[test]
    fn rpi4_core0_reaches_lpddr_through_l1d() {
        let m = PlatformModel::rpi4();
        let ts = m.enumerate_transactions("core0", Some("lpddr")).unwrap();
        let want: Vec<String> = ["core0", "core0_l1d", "l2", "amba_bus", "lpddr"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert!(ts.iter().any(|t| t.path == want));
    }

    #[test]
    fn rpi4_cross_core_sharing_and_inclusivity() {
        let m = PlatformModel::rpi4();
        let pick = |core: &str| {
            m.enumerate_transactions(core, Some("lpddr"))
                .unwrap()
                .into_iter()
                .find(|t| t.path[1].ends_with("_l1d"))
                .unwrap()
        };
        let v = m
            .interference_channels(&[pick("core0"), pick("core1")])
            .unwrap();
        for r in ["l2", "amba_bus", "lpddr"] {
            assert!(v.shared.contains(r), "{r} should be shared");
        }
        assert!(v.coupled.contains(&CoupledResource {
            resource: "core0_l1d".into(),
            reason: CouplingReason::Inclusivity,
        }));
        assert!(!v.interference_free);
    }
}
