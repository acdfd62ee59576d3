//! Execution-restricted points-to analysis and must-alias dependencies.
//!
//! Points-to sets are the least fixpoint of inclusion constraints generated
//! by the executed statements only, with one abstract object per allocation
//! site and one content node per object. Must-alias arcs additionally
//! require constant displacements, so they hold at the granularity of
//! (allocation site, offset).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::ir::{def_use, Def, DefUseChains, Operand, Program, Reg, Region, StmtId, StmtKind, UseSite};
use crate::tracing::{DepKind, DepSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AbstractObject {
    pub alloc_site: StmtId,
    pub region: Region,
}

/// A register in a function.
pub type Var = (u32, Reg);

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PointsToSets {
    pub vars: BTreeMap<Var, BTreeSet<AbstractObject>>,
    pub contents: BTreeMap<AbstractObject, BTreeSet<AbstractObject>>,
    pub scope: BTreeSet<StmtId>,
}

impl PointsToSets {
    pub fn get(&self, func: u32, reg: &Reg) -> &BTreeSet<AbstractObject> {
        static EMPTY: BTreeSet<AbstractObject> = BTreeSet::new();
        self.vars.get(&(func, reg.clone())).unwrap_or(&EMPTY)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Node<'a> {
    Var(u32, &'a Reg),
    Content(AbstractObject),
}

#[derive(Default)]
struct Solver<'a> {
    ids: HashMap<Node<'a>, usize>,
    nodes: Vec<Node<'a>>,
    pts: Vec<BTreeSet<AbstractObject>>,
    succ: Vec<BTreeSet<usize>>,
    // pointer node -> destination nodes of loads through it
    loads: Vec<Vec<usize>>,
    // pointer node -> source nodes of stores through it
    stores: Vec<Vec<usize>>,
    worklist: Vec<usize>,
}

impl<'a> Solver<'a> {
    fn node(&mut self, n: Node<'a>) -> usize {
        if let Some(&i) = self.ids.get(&n) {
            return i;
        }
        let i = self.nodes.len();
        self.ids.insert(n, i);
        self.nodes.push(n);
        self.pts.push(BTreeSet::new());
        self.succ.push(BTreeSet::new());
        self.loads.push(Vec::new());
        self.stores.push(Vec::new());
        i
    }

    fn copy_edge(&mut self, from: usize, to: usize) {
        if from != to && self.succ[from].insert(to) && !self.pts[from].is_empty() {
            self.worklist.push(from);
        }
    }

    fn solve(&mut self) {
        while let Some(n) = self.worklist.pop() {
            let objs: Vec<AbstractObject> = self.pts[n].iter().copied().collect();
            for o in &objs {
                let c = self.node(Node::Content(*o));
                for dst in self.loads[n].clone() {
                    self.copy_edge(c, dst);
                }
                for src in self.stores[n].clone() {
                    self.copy_edge(src, c);
                }
            }
            for m in self.succ[n].clone() {
                let before = self.pts[m].len();
                self.pts[m].extend(objs.iter().copied());
                if self.pts[m].len() != before {
                    self.worklist.push(m);
                }
            }
        }
    }
}

/// Inclusion-based points-to sets over the statements in `executed`.
pub fn points_to(program: &Program, executed: &BTreeSet<StmtId>) -> PointsToSets {
    let mut s = Solver::default();
    let mut defined: BTreeSet<usize> = BTreeSet::new();
    let in_scope = program.statements().filter(|st| executed.contains(&st.id));

    for st in in_scope {
        let f = st.id.func;
        if let Some(d) = st.kind.def() {
            let n = s.node(Node::Var(f, d));
            defined.insert(n);
        }
        match &st.kind {
            StmtKind::Alloc { dst, region, .. } => {
                let n = s.node(Node::Var(f, dst));
                s.pts[n].insert(AbstractObject { alloc_site: st.id, region: *region });
                s.worklist.push(n);
            }
            StmtKind::Copy { dst, src } => {
                let (a, b) = (s.node(Node::Var(f, src)), s.node(Node::Var(f, dst)));
                s.copy_edge(a, b);
            }
            StmtKind::GetPtr { dst, base, .. } => {
                let (a, b) = (s.node(Node::Var(f, base)), s.node(Node::Var(f, dst)));
                s.copy_edge(a, b);
            }
            StmtKind::Load { dst, ptr, .. } => {
                let (p, d) = (s.node(Node::Var(f, ptr)), s.node(Node::Var(f, dst)));
                s.loads[p].push(d);
            }
            StmtKind::Store { ptr, value: Operand::Reg(v), .. } => {
                let (p, v) = (s.node(Node::Var(f, ptr)), s.node(Node::Var(f, v)));
                s.stores[p].push(v);
            }
            StmtKind::Call { dst, callee, args } => {
                let callee_fn = &program.functions[*callee];
                for (formal, actual) in callee_fn.params.iter().zip(args) {
                    let fnode = s.node(Node::Var(*callee as u32, formal));
                    defined.insert(fnode);
                    if let Operand::Reg(a) = actual {
                        let anode = s.node(Node::Var(f, a));
                        s.copy_edge(anode, fnode);
                    }
                }
                if let Some(d) = dst {
                    let dnode = s.node(Node::Var(f, d));
                    for ret in callee_fn.statements().filter(|r| executed.contains(&r.id)) {
                        if let StmtKind::Ret { value: Some(Operand::Reg(v)) } = &ret.kind {
                            let vnode = s.node(Node::Var(*callee as u32, v));
                            s.copy_edge(vnode, dnode);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    s.solve();

    let mut out = PointsToSets { scope: executed.clone(), ..Default::default() };
    for (i, n) in s.nodes.iter().enumerate() {
        match *n {
            Node::Var(f, r) if defined.contains(&i) => {
                out.vars.insert((f, r.clone()), s.pts[i].clone());
            }
            Node::Content(o) => {
                out.contents.insert(o, s.pts[i].clone());
            }
            _ => {}
        }
    }
    out
}

/// Points-to sets over the whole program, every call site bound.
pub fn points_to_unrestricted(program: &Program) -> PointsToSets {
    let all = program.statements().map(|s| s.id).collect();
    points_to(program, &all)
}

/// Constant-value and constant-displacement queries over executed defs.
struct Constants<'a> {
    program: &'a Program,
    chains: &'a DefUseChains,
    executed: &'a BTreeSet<StmtId>,
}

impl Constants<'_> {
    fn executed_defs(&self, site: UseSite) -> Vec<Def> {
        self.chains
            .reaching(site)
            .iter()
            .copied()
            .filter(|d| d.stmt().is_none_or(|s| self.executed.contains(&s)))
            .collect()
    }

    /// Value of an operand if every executed reaching def is the same const.
    fn value(&self, op: &Operand, site: UseSite) -> Option<i64> {
        match op {
            Operand::Imm(v) => Some(*v),
            Operand::Reg(_) => {
                let defs = self.executed_defs(site);
                let mut value = None;
                for d in defs {
                    let StmtKind::Const { value: v, .. } = self.program.get(d.stmt()?).kind else {
                        return None;
                    };
                    if value.is_some_and(|x| x != v) {
                        return None;
                    }
                    value = Some(v);
                }
                value
            }
        }
    }

    /// Word displacement of the pointer used at `site` from the start of its
    /// object, if provably constant.
    fn displacement(&self, site: UseSite, visiting: &mut BTreeSet<UseSite>) -> Option<i64> {
        if !visiting.insert(site) {
            return None;
        }
        let defs = self.executed_defs(site);
        let mut disp = None;
        for d in defs {
            let this = match d {
                Def::Stmt(id) => match &self.program.get(id).kind {
                    StmtKind::Alloc { .. } => Some(0),
                    StmtKind::Copy { .. } => self.displacement(UseSite { stmt: id, pos: 0 }, visiting),
                    StmtKind::GetPtr { offset, .. } => {
                        let base = self.displacement(UseSite { stmt: id, pos: 0 }, visiting);
                        let off = self.value(offset, UseSite { stmt: id, pos: 1 });
                        base.zip(off).and_then(|(b, o)| b.checked_add(o))
                    }
                    _ => None,
                },
                Def::Formal { func, index } => self.formal_displacement(func, index as usize, visiting),
            };
            match (disp, this) {
                (_, None) => return None,
                (Some(a), Some(b)) if a != b => return None,
                _ => disp = this,
            }
        }
        disp
    }

    fn formal_displacement(&self, func: u32, index: usize, visiting: &mut BTreeSet<UseSite>) -> Option<i64> {
        let mut disp = None;
        for call in self.program.call_sites(func as usize).filter(|c| self.executed.contains(&c.id)) {
            let StmtKind::Call { args, .. } = &call.kind else { unreachable!() };
            let this = match &args[index] {
                Operand::Imm(_) => None,
                Operand::Reg(_) => self.displacement(UseSite { stmt: call.id, pos: index as u8 }, visiting),
            };
            match (disp, this) {
                (_, None) => return None,
                (Some(a), Some(b)) if a != b => return None,
                _ => disp = this,
            }
        }
        disp
    }

    /// (object, effective offset) of a load or store, when provably unique.
    fn access(&self, pts: &PointsToSets, id: StmtId) -> Option<(AbstractObject, i64)> {
        let (ptr, offset) = match &self.program.get(id).kind {
            StmtKind::Load { ptr, offset, .. } | StmtKind::Store { ptr, offset, .. } => (ptr, offset),
            _ => return None,
        };
        let set = pts.get(id.func, ptr);
        if set.len() != 1 {
            return None;
        }
        let object = *set.iter().next()?;
        let disp = self.displacement(UseSite { stmt: id, pos: 0 }, &mut BTreeSet::new())?;
        let off = self.value(offset, UseSite { stmt: id, pos: 1 })?;
        Some((object, disp.checked_add(off)?))
    }
}

/// (store, load) pairs among executed statements that provably access the
/// same allocation site at the same offset.
pub fn must_alias_deps(program: &Program, pts: &PointsToSets, executed: &BTreeSet<StmtId>) -> DepSet {
    let chains = def_use(program);
    must_alias_deps_with(program, &chains, pts, executed)
}

pub fn must_alias_deps_with(
    program: &Program,
    chains: &DefUseChains,
    pts: &PointsToSets,
    executed: &BTreeSet<StmtId>,
) -> DepSet {
    let k = Constants { program, chains, executed };
    let mut stores: BTreeMap<(AbstractObject, i64), Vec<StmtId>> = BTreeMap::new();
    let mut loads = Vec::new();
    for st in program.statements().filter(|s| executed.contains(&s.id)) {
        let Some(key) = k.access(pts, st.id) else { continue };
        match st.kind {
            StmtKind::Store { .. } => stores.entry(key).or_default().push(st.id),
            StmtKind::Load { .. } => loads.push((key, st.id)),
            _ => {}
        }
    }
    let mut deps = DepSet::new();
    for (key, load) in loads {
        for &store in stores.get(&key).map_or(&[][..], Vec::as_slice) {
            deps.observe(store, load, DepKind::alias(key.0.region));
        }
    }
    deps
}

/// Every (store, load) pair whose pointers may reference a common object,
/// offsets ignored.
pub fn may_alias_deps(program: &Program, pts: &PointsToSets) -> DepSet {
    let pointer = |id: StmtId| match &program.get(id).kind {
        StmtKind::Load { ptr, .. } | StmtKind::Store { ptr, .. } => pts.get(id.func, ptr),
        _ => unreachable!(),
    };
    let stores: Vec<StmtId> = program.statements().filter(|s| s.kind.writes_memory()).map(|s| s.id).collect();
    let mut deps = DepSet::new();
    for load in program.statements().filter(|s| s.kind.reads_memory()) {
        let lp = pointer(load.id);
        for &store in &stores {
            if let Some(o) = pointer(store).intersection(lp).next() {
                deps.observe(store, load.id, DepKind::alias(o.region));
            }
        }
    }
    deps
}
