use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::interp::{Event, FullTrace, ObjectId};
use crate::ir::{Region, StmtId};

/// How a data dependence was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepKind {
    /// Seen at runtime on a sampled heap object.
    ObservedHeap,
    /// Seen at runtime on a stack object (full tracing only).
    ObservedStack,
    /// Must-alias inference, stack object.
    AliasStack,
    /// Must-alias inference, heap object.
    AliasHeap,
}

impl DepKind {
    pub fn observed(region: Region) -> DepKind {
        match region {
            Region::Heap => DepKind::ObservedHeap,
            Region::Stack => DepKind::ObservedStack,
        }
    }

    pub fn alias(region: Region) -> DepKind {
        match region {
            Region::Heap => DepKind::AliasHeap,
            Region::Stack => DepKind::AliasStack,
        }
    }

    pub fn is_alias(self) -> bool {
        matches!(self, DepKind::AliasHeap | DepKind::AliasStack)
    }
}

/// A flattened (writer, reader) statement pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataDep {
    pub writer: StmtId,
    pub reader: StmtId,
    pub kind: DepKind,
    pub count: u64,
}

/// Set of data dependencies keyed by (writer, reader, kind), with
/// observation counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DepSet {
    map: BTreeMap<(StmtId, StmtId, DepKind), u64>,
}

impl DepSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, writer: StmtId, reader: StmtId, kind: DepKind) {
        *self.map.entry((writer, reader, kind)).or_default() += 1;
    }

    pub fn insert(&mut self, dep: DataDep) {
        *self.map.entry((dep.writer, dep.reader, dep.kind)).or_default() += dep.count;
    }

    pub fn extend(&mut self, other: &DepSet) {
        for d in other.iter() {
            self.insert(d);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = DataDep> + '_ {
        self.map
            .iter()
            .map(|(&(writer, reader, kind), &count)| DataDep { writer, reader, kind, count })
    }

    /// (writer, reader) pairs, kind and count dropped.
    pub fn pairs(&self) -> BTreeSet<(StmtId, StmtId)> {
        self.map.keys().map(|&(w, r, _)| (w, r)).collect()
    }

    pub fn filter_kind(&self, keep: impl Fn(DepKind) -> bool) -> DepSet {
        DepSet {
            map: self
                .map
                .iter()
                .filter(|((_, _, k), _)| keep(*k))
                .map(|(k, v)| (*k, *v))
                .collect(),
        }
    }

    pub fn heap_only(&self) -> DepSet {
        self.filter_kind(|k| k == DepKind::ObservedHeap)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn endpoints(&self) -> impl Iterator<Item = StmtId> + '_ {
        self.map.keys().flat_map(|&(w, r, _)| [w, r])
    }
}

impl FromIterator<DataDep> for DepSet {
    fn from_iter<T: IntoIterator<Item = DataDep>>(iter: T) -> Self {
        let mut s = DepSet::new();
        for d in iter {
            s.insert(d);
        }
        s
    }
}

impl Serialize for DepSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for DepSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Vec::<DataDep>::deserialize(d)?.into_iter().collect())
    }
}

/// Exact last-writer -> reader pairs for every read in the trace, heap and
/// stack alike.
pub fn full_data_deps(trace: &FullTrace) -> DepSet {
    let mut last_writer: HashMap<(ObjectId, u64), StmtId> = HashMap::new();
    let mut deps = DepSet::new();
    for e in &trace.events {
        match e {
            Event::Write { stmt, loc } => {
                last_writer.insert((loc.object, loc.offset), *stmt);
            }
            Event::Read { stmt, loc } => {
                if let Some(&w) = last_writer.get(&(loc.object, loc.offset)) {
                    deps.observe(w, *stmt, DepKind::observed(loc.region));
                }
            }
            _ => {}
        }
    }
    deps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::execute;
    use crate::ir::{fixtures::P1, parse_program};

    fn sid(s: &str) -> StmtId {
        s.parse().unwrap()
    }

    #[test]
    fn p1_full_deps() {
        let p = parse_program(P1).unwrap();
        let d1 = full_data_deps(&execute(&p, &[1], 0).unwrap());
        assert_eq!(d1.pairs(), BTreeSet::from([(sid("0:0:1"), sid("0:1:0"))]));
        assert_eq!(d1.iter().next().unwrap().kind, DepKind::ObservedHeap);
        assert!(full_data_deps(&execute(&p, &[0], 0).unwrap()).is_empty());
    }

    #[test]
    fn one_store_two_loads() {
        let p = parse_program(
            "fun main() {\nb0:\n  a = alloc 1, stack\n  store a[0], 5\n  x = load a[0]\n  y = load a[0]\n  ret\n}\n",
        )
        .unwrap();
        let d = full_data_deps(&execute(&p, &[], 0).unwrap());
        assert_eq!(
            d.pairs(),
            BTreeSet::from([(sid("0:0:1"), sid("0:0:2")), (sid("0:0:1"), sid("0:0:3"))])
        );
        assert!(d.iter().all(|d| d.kind == DepKind::ObservedStack));
    }

    #[test]
    fn dep_set_json_is_a_sorted_list() {
        let mut s = DepSet::new();
        s.observe(sid("0:0:2"), sid("0:1:0"), DepKind::ObservedHeap);
        s.observe(sid("0:0:1"), sid("0:1:0"), DepKind::AliasStack);
        s.observe(sid("0:0:1"), sid("0:1:0"), DepKind::AliasStack);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(
            json,
            r#"[{"writer":"0:0:1","reader":"0:1:0","kind":"alias-stack","count":2},{"writer":"0:0:2","reader":"0:1:0","kind":"observed-heap","count":1}]"#
        );
        assert_eq!(serde_json::from_str::<DepSet>(&json).unwrap(), s);
    }
}
