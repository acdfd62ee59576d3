//! Observed dependency graph: statements as nodes, data-dependence arcs
//! aggregated over many runs, and the control arcs of the run under analysis.
//!
//! Slicing only looks at arc sets. Counts and the per-arc run sketch are
//! reporting metadata.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ir::StmtId;
use crate::tracing::{DataDep, DepKind, DepSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OdgError {
    #[error("arc {writer} -> {reader} has endpoint {missing} outside the node set")]
    Consistency { writer: StmtId, reader: StmtId, missing: StmtId },
    #[error("program mismatch: {left} vs {right}")]
    ProgramMismatch { left: String, right: String },
}

/// Per-arc metadata. `first_run`/`last_run`/`runs` form a bounded sketch of
/// which runs observed the arc; alias arcs carry no run information.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArcInfo {
    pub count: u64,
    pub kinds: BTreeSet<DepKind>,
    pub first_run: Option<u64>,
    pub last_run: Option<u64>,
    pub runs: u64,
}

impl ArcInfo {
    fn absorb(&mut self, other: &ArcInfo) {
        self.count += other.count;
        self.kinds.extend(other.kinds.iter().copied());
        self.first_run = match (self.first_run, other.first_run) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.last_run = match (self.last_run, other.last_run) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self.runs += other.runs;
    }

    pub fn is_observed(&self) -> bool {
        self.kinds.iter().any(|k| !k.is_alias())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservedDependencyGraph {
    pub digest: String,
    pub nodes: BTreeSet<StmtId>,
    pub data_arcs: BTreeMap<(StmtId, StmtId), ArcInfo>,
    pub control_arcs: BTreeSet<(StmtId, StmtId)>,
    pub runs_total: u64,
}

impl ObservedDependencyGraph {
    pub fn new(digest: impl Into<String>) -> Self {
        ObservedDependencyGraph {
            digest: digest.into(),
            nodes: BTreeSet::new(),
            data_arcs: BTreeMap::new(),
            control_arcs: BTreeSet::new(),
            runs_total: 0,
        }
    }

    pub fn arc_set(&self) -> BTreeSet<(StmtId, StmtId)> {
        self.data_arcs.keys().copied().collect()
    }

    /// Writers with an arc into `reader`.
    pub fn writers_of(&self, reader: StmtId) -> impl Iterator<Item = (StmtId, &ArcInfo)> + '_ {
        self.data_arcs
            .iter()
            .filter(move |((_, r), _)| *r == reader)
            .map(|((w, _), info)| (*w, info))
    }

    fn check_endpoints(&self, deps: impl Iterator<Item = DataDep>, nodes: &BTreeSet<StmtId>) -> Result<(), OdgError> {
        for d in deps {
            for end in [d.writer, d.reader] {
                if !nodes.contains(&end) {
                    return Err(OdgError::Consistency { writer: d.writer, reader: d.reader, missing: end });
                }
            }
        }
        Ok(())
    }

    /// Folds one run in: its executed statements become nodes and its
    /// dependencies become (or reinforce) arcs.
    pub fn add_run(&self, deps: &DepSet, executed: &BTreeSet<StmtId>, run_id: u64) -> Result<Self, OdgError> {
        self.check_endpoints(deps.iter(), executed)?;
        let mut g = self.clone();
        g.nodes.extend(executed.iter().copied());
        let mut per_pair: BTreeMap<(StmtId, StmtId), ArcInfo> = BTreeMap::new();
        for d in deps.iter() {
            let info = per_pair.entry((d.writer, d.reader)).or_insert_with(|| ArcInfo {
                count: 0,
                kinds: BTreeSet::new(),
                first_run: Some(run_id),
                last_run: Some(run_id),
                runs: 1,
            });
            info.count += d.count;
            info.kinds.insert(d.kind);
        }
        for (pair, info) in per_pair {
            match g.data_arcs.get_mut(&pair) {
                Some(existing) => existing.absorb(&info),
                None => {
                    g.data_arcs.insert(pair, info);
                }
            }
        }
        g.runs_total += 1;
        Ok(g)
    }

    /// Union of two graphs over the same program; counts and run totals add.
    pub fn merge(&self, other: &Self) -> Result<Self, OdgError> {
        if self.digest != other.digest {
            return Err(OdgError::ProgramMismatch { left: self.digest.clone(), right: other.digest.clone() });
        }
        let mut g = self.clone();
        g.nodes.extend(other.nodes.iter().copied());
        for (pair, info) in &other.data_arcs {
            match g.data_arcs.get_mut(pair) {
                Some(existing) => existing.absorb(info),
                None => {
                    g.data_arcs.insert(*pair, info.clone());
                }
            }
        }
        g.control_arcs.extend(other.control_arcs.iter().copied());
        g.runs_total += other.runs_total;
        Ok(g)
    }

    /// Keeps only statements (and arcs between statements) in `executed`.
    pub fn prune_to_execution(&self, executed: &BTreeSet<StmtId>) -> Self {
        let keep = |&(a, b): &(StmtId, StmtId)| executed.contains(&a) && executed.contains(&b);
        ObservedDependencyGraph {
            digest: self.digest.clone(),
            nodes: self.nodes.intersection(executed).copied().collect(),
            data_arcs: self
                .data_arcs
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
            control_arcs: self.control_arcs.iter().filter(|k| keep(k)).copied().collect(),
            runs_total: self.runs_total,
        }
    }

    /// Adds must-alias arcs and installs the faulty run's control arcs.
    pub fn augment(
        &self,
        alias_deps: &DepSet,
        control: &BTreeSet<(StmtId, StmtId)>,
    ) -> Result<Self, OdgError> {
        self.check_endpoints(alias_deps.iter(), &self.nodes)?;
        for &(c, s) in control {
            for end in [c, s] {
                if !self.nodes.contains(&end) {
                    return Err(OdgError::Consistency { writer: c, reader: s, missing: end });
                }
            }
        }
        let mut g = self.clone();
        for d in alias_deps.iter() {
            let info = ArcInfo {
                count: d.count.max(1),
                kinds: BTreeSet::from([d.kind]),
                first_run: None,
                last_run: None,
                runs: 0,
            };
            match g.data_arcs.get_mut(&(d.writer, d.reader)) {
                Some(existing) => existing.absorb(&info),
                None => {
                    g.data_arcs.insert((d.writer, d.reader), info);
                }
            }
        }
        g.control_arcs.extend(control.iter().copied());
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&OdgFile::from(self)).expect("ODG serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str::<OdgFile>(text).map(Into::into)
    }
}

#[derive(Serialize, Deserialize)]
struct ArcRecord {
    writer: StmtId,
    reader: StmtId,
    #[serde(flatten)]
    info: ArcInfo,
}

/// On-disk form; arcs sorted by (writer, reader).
#[derive(Serialize, Deserialize)]
struct OdgFile {
    kind: String,
    digest: String,
    runs_total: u64,
    nodes: Vec<StmtId>,
    arcs: Vec<ArcRecord>,
    control_arcs: Vec<(StmtId, StmtId)>,
}

impl From<&ObservedDependencyGraph> for OdgFile {
    fn from(g: &ObservedDependencyGraph) -> Self {
        OdgFile {
            kind: "odg".to_string(),
            digest: g.digest.clone(),
            runs_total: g.runs_total,
            nodes: g.nodes.iter().copied().collect(),
            arcs: g
                .data_arcs
                .iter()
                .map(|(&(writer, reader), info)| ArcRecord { writer, reader, info: info.clone() })
                .collect(),
            control_arcs: g.control_arcs.iter().copied().collect(),
        }
    }
}

impl From<OdgFile> for ObservedDependencyGraph {
    fn from(f: OdgFile) -> Self {
        ObservedDependencyGraph {
            digest: f.digest,
            nodes: f.nodes.into_iter().collect(),
            data_arcs: f.arcs.into_iter().map(|a| ((a.writer, a.reader), a.info)).collect(),
            control_arcs: f.control_arcs.into_iter().collect(),
            runs_total: f.runs_total,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::execute;
    use crate::ir::{fixtures::P1, parse_program, Program};
    use crate::tracing::{sampled_data_deps, SamplerState};

    fn sid(s: &str) -> StmtId {
        s.parse().unwrap()
    }

    fn p1_run(p: &Program, input: i64, run_id: u64) -> (DepSet, BTreeSet<StmtId>) {
        let t = execute(p, &[input], run_id).unwrap();
        let deps = sampled_data_deps(&t, &SamplerState::fixed(1.0, 0)).deps;
        (deps, t.executed())
    }

    fn p1_cooperative() -> ObservedDependencyGraph {
        let p = parse_program(P1).unwrap();
        let (d1, e1) = p1_run(&p, 1, 1);
        let (d0, e0) = p1_run(&p, 0, 2);
        ObservedDependencyGraph::new(p.digest())
            .add_run(&d1, &e1, 1)
            .unwrap()
            .add_run(&d0, &e0, 2)
            .unwrap()
    }

    #[test]
    fn add_run_grows_nodes_and_arcs() {
        let p = parse_program(P1).unwrap();
        let (d1, e1) = p1_run(&p, 1, 1);
        let g1 = ObservedDependencyGraph::new(p.digest()).add_run(&d1, &e1, 1).unwrap();
        assert_eq!(g1.nodes, e1);
        assert_eq!(g1.arc_set(), BTreeSet::from([(sid("0:0:1"), sid("0:1:0"))]));
        assert_eq!(g1.data_arcs.values().next().unwrap().count, 1);
        let g2 = p1_cooperative();
        assert_eq!(g2.nodes.len(), 9);
        assert_eq!(g2.arc_set(), g1.arc_set());
        assert_eq!(g2.runs_total, 2);
        let g3 = g2.add_run(&DepSet::new(), &BTreeSet::new(), 3).unwrap();
        assert_eq!((g3.runs_total, g3.arc_set()), (3, g2.arc_set()));
    }

    #[test]
    fn add_run_rejects_foreign_endpoints() {
        let p = parse_program(P1).unwrap();
        let (d1, _) = p1_run(&p, 1, 1);
        let err = ObservedDependencyGraph::new(p.digest()).add_run(&d1, &BTreeSet::new(), 1).unwrap_err();
        assert!(matches!(err, OdgError::Consistency { .. }));
    }

    #[test]
    fn merge_counts_add() {
        let p = parse_program(P1).unwrap();
        let (d1, e1) = p1_run(&p, 1, 1);
        let a = ObservedDependencyGraph::new(p.digest()).add_run(&d1, &e1, 1).unwrap();
        let b = ObservedDependencyGraph::new(p.digest()).add_run(&d1, &e1, 4).unwrap();
        let m = a.merge(&b).unwrap();
        let info = &m.data_arcs[&(sid("0:0:1"), sid("0:1:0"))];
        assert_eq!((info.count, info.runs, info.first_run, info.last_run), (2, 2, Some(1), Some(4)));
        assert_eq!(m.arc_set(), a.arc_set());
        assert_eq!(a.merge(&ObservedDependencyGraph::new(p.digest())).unwrap(), a);
        assert!(matches!(a.merge(&ObservedDependencyGraph::new("other")), Err(OdgError::ProgramMismatch { .. })));
    }

    #[test]
    fn prune_to_failing_run() {
        let g = p1_cooperative();
        let run1: BTreeSet<StmtId> = ["0:0:0", "0:0:1", "0:0:2", "0:0:3", "0:1:0", "0:1:1"].iter().map(|s| sid(s)).collect();
        let pruned = g.prune_to_execution(&run1);
        assert_eq!(pruned.nodes, run1);
        assert_eq!(pruned.arc_set(), BTreeSet::from([(sid("0:0:1"), sid("0:1:0"))]));
        assert!(g.prune_to_execution(&BTreeSet::new()).data_arcs.is_empty());
        assert_eq!(g.prune_to_execution(&g.nodes.clone()), g);
    }

    #[test]
    fn augment_with_control_and_alias() {
        let g = p1_cooperative();
        let control = BTreeSet::from([(sid("0:0:3"), sid("0:1:0")), (sid("0:0:3"), sid("0:1:1"))]);
        let aug = g.augment(&DepSet::new(), &control).unwrap();
        assert_eq!(aug.control_arcs, control);
        assert_eq!(aug.data_arcs, g.data_arcs);
        let mut alias = DepSet::new();
        alias.observe(sid("0:2:0"), sid("0:1:0"), DepKind::AliasHeap);
        let aug2 = g.augment(&alias, &control).unwrap();
        assert_eq!(aug2.data_arcs.len(), 2);
        assert!(!aug2.data_arcs[&(sid("0:2:0"), sid("0:1:0"))].is_observed());
        let bad = BTreeSet::from([(sid("0:0:3"), sid("0:9:0"))]);
        assert!(g.augment(&DepSet::new(), &bad).is_err());
    }

    #[test]
    fn json_is_byte_stable() {
        let g = p1_cooperative();
        let text = g.to_json();
        assert!(text.contains("\"kind\": \"odg\""));
        let back = ObservedDependencyGraph::from_json(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json(), text);
    }
}
