//! Backward slicers: statistical (over an augmented observed dependency
//! graph), dynamic (over a full trace) and static (over the program).
//!
//! All three share one breadth-first closure. Each mode supplies the
//! dependence predecessors of a statement.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::alias::{may_alias_deps, points_to_unrestricted};
use crate::interp::{Event, FullTrace};
use crate::ir::{
    build_cfg, control_deps, def_use, render_stmt, Cfg, ControlDeps, Def, DefUseChains, Operand, Program, Reg,
    StmtId, StmtKind, UseSite,
};
use crate::odg::ObservedDependencyGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Seed,
    Control,
    RegisterDef,
    CallReturn,
    Argument,
    MemoryObserved,
    MemoryAlias,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Seed => "seed",
            Provenance::Control => "control",
            Provenance::RegisterDef => "register-def",
            Provenance::CallReturn => "call-return",
            Provenance::Argument => "argument",
            Provenance::MemoryObserved => "memory-observed",
            Provenance::MemoryAlias => "memory-alias",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceMode {
    Statistical,
    Dynamic,
    Static,
}

impl fmt::Display for SliceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SliceMode::Statistical => "statistical",
            SliceMode::Dynamic => "dynamic",
            SliceMode::Static => "static",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceMember {
    pub stmt: StmtId,
    pub depth: u32,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceReport {
    pub seed: StmtId,
    pub mode: SliceMode,
    pub digest: String,
    /// Distinct (dependency, dependent) arcs traversed by the closure.
    pub arcs_used: usize,
    /// Sorted by (depth, statement).
    pub members: Vec<SliceMember>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SliceError {
    #[error("seed {0} was not executed")]
    SeedNotExecuted(StmtId),
    #[error("seed {0} is not a statement of the program")]
    UnknownSeed(StmtId),
    #[error("graph lacks control arc {controller} -> {controlled} of the executed branch")]
    MissingControlArcs { controller: StmtId, controlled: StmtId },
    #[error("graph was built for program {found}, expected {expected}")]
    ProgramMismatch { expected: String, found: String },
}

impl SliceReport {
    pub fn statements(&self) -> BTreeSet<StmtId> {
        self.members.iter().map(|m| m.stmt).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("slice serialization is infallible")
    }

    /// The program listing with slice members marked and annotated.
    pub fn render_text(&self, program: &Program) -> String {
        let by_stmt: HashMap<StmtId, &SliceMember> = self.members.iter().map(|m| (m.stmt, m)).collect();
        let mut out = format!(
            "; {} slice from {}: {} statements, {} arcs\n",
            self.mode,
            self.seed,
            self.members.len(),
            self.arcs_used
        );
        for (fi, func) in program.functions.iter().enumerate() {
            if fi > 0 {
                out.push('\n');
            }
            let params: Vec<&str> = func.params.iter().map(Reg::as_str).collect();
            let _ = writeln!(out, "fun {}({}) {{", func.name, params.join(", "));
            for block in &func.blocks {
                let _ = writeln!(out, "{}:", block.label);
                for s in &block.stmts {
                    let text = render_stmt(program, s);
                    match by_stmt.get(&s.id) {
                        Some(m) => {
                            let note = format!("d={} {}", m.depth, m.provenance);
                            let _ = writeln!(out, "* {:<8} {:<22} {}", s.id.to_string(), note, text);
                        }
                        None => {
                            let _ = writeln!(out, "  {:<8} {:<22} {}", s.id.to_string(), "", text);
                        }
                    }
                }
            }
            out.push_str("}\n");
        }
        out
    }
}

/// Static facts reused across slices of one program.
pub struct ProgramFacts<'p> {
    pub program: &'p Program,
    pub chains: DefUseChains,
    pub control: ControlDeps,
    pub cfgs: Vec<Cfg>,
    /// Per function and block: reachable from the entry without leaving any
    /// of the block's controlling branches.
    precedes_controllers: Vec<Vec<bool>>,
}

impl<'p> ProgramFacts<'p> {
    pub fn new(program: &'p Program) -> Self {
        let chains = def_use(program);
        let control = control_deps(program);
        let cfgs = build_cfg(program);
        let precedes_controllers = program
            .functions
            .iter()
            .enumerate()
            .map(|(fi, func)| {
                (0..func.blocks.len())
                    .map(|bi| {
                        let first = func.blocks[bi].stmts[0].id;
                        let blocked: BTreeSet<usize> =
                            control.controllers(first).iter().map(|c| c.block as usize).collect();
                        debug_assert!(control.controllers(first).iter().all(|c| c.func as usize == fi));
                        reachable_avoiding(&cfgs[fi], bi, &blocked)
                    })
                    .collect()
            })
            .collect();
        ProgramFacts { program, chains, control, cfgs, precedes_controllers }
    }

    /// True if `s` can execute in a frame before any of its controllers.
    pub fn may_precede_controllers(&self, s: StmtId) -> bool {
        self.precedes_controllers[s.func as usize][s.block as usize]
    }
}

fn reachable_avoiding(cfg: &Cfg, target: usize, blocked: &BTreeSet<usize>) -> bool {
    let mut seen = vec![false; cfg.len()];
    let mut stack = vec![cfg.entry()];
    while let Some(b) = stack.pop() {
        if b == target {
            return true;
        }
        if std::mem::replace(&mut seen[b], true) || blocked.contains(&b) {
            continue;
        }
        stack.extend(cfg.succs[b].iter().copied());
    }
    false
}

/// Breadth-first backward closure. Predecessors are visited in statement
/// order; the first discovery fixes depth and provenance.
fn closure(
    seed: StmtId,
    mut preds: impl FnMut(StmtId) -> Vec<(StmtId, Provenance)>,
) -> (Vec<SliceMember>, usize) {
    let mut found: BTreeMap<StmtId, SliceMember> = BTreeMap::new();
    found.insert(seed, SliceMember { stmt: seed, depth: 0, provenance: Provenance::Seed });
    let mut queue = VecDeque::from([seed]);
    let mut arcs = 0;
    while let Some(s) = queue.pop_front() {
        let depth = found[&s].depth;
        let mut ps = preds(s);
        ps.sort();
        ps.dedup_by_key(|(p, _)| *p);
        arcs += ps.len();
        for (p, provenance) in ps {
            found.entry(p).or_insert_with(|| {
                queue.push_back(p);
                SliceMember { stmt: p, depth: depth + 1, provenance }
            });
        }
    }
    let mut members: Vec<SliceMember> = found.into_values().collect();
    members.sort_by_key(|m| (m.depth, m.stmt));
    (members, arcs)
}

/// Register, control and call dependencies over a statement scope.
struct StaticDeps<'a, 'p> {
    facts: &'a ProgramFacts<'p>,
    scope: &'a dyn Fn(StmtId) -> bool,
}

impl StaticDeps<'_, '_> {
    fn call_sites(&self, func: u32) -> impl Iterator<Item = StmtId> + '_ {
        self.facts.program.call_sites(func as usize).map(|c| c.id).filter(|&c| (self.scope)(c))
    }

    /// Statement defs reaching a use, formals expanded through in-scope call
    /// sites.
    fn reaching(&self, site: UseSite, out: &mut Vec<(StmtId, Provenance)>, via_formal: bool) {
        let mut seen = BTreeSet::new();
        self.reaching_inner(site, out, via_formal, &mut seen);
    }

    fn reaching_inner(
        &self,
        site: UseSite,
        out: &mut Vec<(StmtId, Provenance)>,
        via_formal: bool,
        seen: &mut BTreeSet<(u32, u32)>,
    ) {
        let provenance = if via_formal { Provenance::Argument } else { Provenance::RegisterDef };
        for d in self.facts.chains.reaching(site) {
            match *d {
                Def::Stmt(id) if (self.scope)(id) => out.push((id, provenance)),
                Def::Stmt(_) => {}
                Def::Formal { func, index } => {
                    if !seen.insert((func, index)) {
                        continue;
                    }
                    for call in self.call_sites(func).collect::<Vec<_>>() {
                        let StmtKind::Call { args, .. } = &self.facts.program.get(call).kind else { unreachable!() };
                        if let Operand::Reg(_) = args[index as usize] {
                            self.reaching_inner(UseSite { stmt: call, pos: index as u8 }, out, true, seen);
                        }
                    }
                }
            }
        }
    }

    fn register_and_call(&self, s: StmtId, out: &mut Vec<(StmtId, Provenance)>) {
        let program = self.facts.program;
        for (site, _) in self.facts.chains.uses_at(s) {
            self.reaching(site, out, false);
        }
        if let StmtKind::Call { dst: Some(_), callee, .. } = &program.get(s).kind {
            for r in program.functions[*callee].statements() {
                if matches!(r.kind, StmtKind::Ret { value: Some(_) }) && (self.scope)(r.id) {
                    out.push((r.id, Provenance::CallReturn));
                }
            }
        }
    }

    fn interprocedural_control(&self, s: StmtId, out: &mut Vec<(StmtId, Provenance)>) {
        if s.func as usize != self.facts.program.main_index() && self.facts.may_precede_controllers(s) {
            out.extend(self.call_sites(s.func).map(|c| (c, Provenance::Control)));
        }
    }
}

/// Backward closure over an observed dependency graph already pruned to the
/// faulty run and augmented with its control arcs.
pub fn statistical_slice(
    facts: &ProgramFacts<'_>,
    g: &ObservedDependencyGraph,
    executed: &BTreeSet<StmtId>,
    seed: StmtId,
) -> Result<SliceReport, SliceError> {
    let program = facts.program;
    let digest = program.digest();
    if g.digest != digest {
        return Err(SliceError::ProgramMismatch { expected: digest, found: g.digest.clone() });
    }
    if !executed.contains(&seed) {
        return Err(SliceError::SeedNotExecuted(seed));
    }
    for (c, s) in facts.control.restricted(|id| executed.contains(&id)) {
        if !g.control_arcs.contains(&(c, s)) {
            return Err(SliceError::MissingControlArcs { controller: c, controlled: s });
        }
    }

    let mut controllers: BTreeMap<StmtId, Vec<StmtId>> = BTreeMap::new();
    for &(c, s) in &g.control_arcs {
        controllers.entry(s).or_default().push(c);
    }
    let mut writers: BTreeMap<StmtId, Vec<(StmtId, Provenance)>> = BTreeMap::new();
    for (&(w, r), info) in &g.data_arcs {
        if executed.contains(&w) && executed.contains(&r) {
            let p = if info.is_observed() { Provenance::MemoryObserved } else { Provenance::MemoryAlias };
            writers.entry(r).or_default().push((w, p));
        }
    }

    let in_run = |id: StmtId| executed.contains(&id);
    let deps = StaticDeps { facts, scope: &in_run };
    let (members, arcs_used) = closure(seed, |s| {
        let mut out = Vec::new();
        deps.register_and_call(s, &mut out);
        if let Some(cs) = controllers.get(&s) {
            out.extend(cs.iter().map(|&c| (c, Provenance::Control)));
        }
        deps.interprocedural_control(s, &mut out);
        if let Some(ws) = writers.get(&s) {
            out.extend(ws.iter().copied());
        }
        out
    });
    Ok(SliceReport { seed, mode: SliceMode::Statistical, digest, arcs_used, members })
}

/// Reachability over the whole-program dependence graph with may-alias
/// memory dependencies.
pub fn static_slice(facts: &ProgramFacts<'_>, seed: StmtId) -> Result<SliceReport, SliceError> {
    let program = facts.program;
    if program.stmt(seed).is_none() {
        return Err(SliceError::UnknownSeed(seed));
    }
    let may = may_alias_deps(program, &points_to_unrestricted(program));
    let mut writers: BTreeMap<StmtId, Vec<StmtId>> = BTreeMap::new();
    for (w, r) in may.pairs() {
        writers.entry(r).or_default().push(w);
    }
    let everything = |_: StmtId| true;
    let deps = StaticDeps { facts, scope: &everything };
    let (members, arcs_used) = closure(seed, |s| {
        let mut out = Vec::new();
        deps.register_and_call(s, &mut out);
        out.extend(facts.control.controllers(s).iter().map(|&c| (c, Provenance::Control)));
        deps.interprocedural_control(s, &mut out);
        if let Some(ws) = writers.get(&s) {
            out.extend(ws.iter().map(|&w| (w, Provenance::MemoryAlias)));
        }
        out
    });
    Ok(SliceReport { seed, mode: SliceMode::Static, digest: program.digest(), arcs_used, members })
}

struct DynFrame<'p> {
    /// Register -> defining instance, and whether it arrived through a formal.
    regs: HashMap<&'p str, (usize, bool)>,
    last_branch: HashMap<StmtId, usize>,
    call: Option<usize>,
}

/// Exact dependence closure over the instances of `trace`, projected onto
/// statements.
pub fn dynamic_slice(facts: &ProgramFacts<'_>, trace: &FullTrace, seed: StmtId) -> Result<SliceReport, SliceError> {
    let program = facts.program;
    let mut stmts: Vec<StmtId> = Vec::new();
    let mut deps: Vec<Vec<(usize, Provenance)>> = Vec::new();
    let mut frames = vec![DynFrame { regs: HashMap::new(), last_branch: HashMap::new(), call: None }];
    let mut last_writer: HashMap<(u64, u64), usize> = HashMap::new();

    for e in &trace.events {
        match e {
            Event::Exec { stmt } => {
                let i = stmts.len();
                stmts.push(*stmt);
                let st = program.get(*stmt);
                let frame = frames.last_mut().expect("trace stays inside main");
                let mut d = Vec::new();
                for (_, r) in st.kind.uses() {
                    if let Some(&(def, via_formal)) = frame.regs.get(r.as_str()) {
                        d.push((def, if via_formal { Provenance::Argument } else { Provenance::RegisterDef }));
                    }
                }
                let controller = facts
                    .control
                    .controllers(*stmt)
                    .iter()
                    .filter_map(|c| frame.last_branch.get(c).copied())
                    .max()
                    .or(frame.call);
                if let Some(c) = controller {
                    d.push((c, Provenance::Control));
                }
                deps.push(d);

                match &st.kind {
                    StmtKind::Call { callee, args, .. } => {
                        let callee_fn = &program.functions[*callee];
                        let mut regs = HashMap::new();
                        for (formal, actual) in callee_fn.params.iter().zip(args) {
                            if let Operand::Reg(a) = actual {
                                if let Some(&(def, _)) = frame.regs.get(a.as_str()) {
                                    regs.insert(formal.as_str(), (def, true));
                                }
                            }
                        }
                        frames.push(DynFrame { regs, last_branch: HashMap::new(), call: Some(i) });
                    }
                    StmtKind::Ret { .. } => {
                        let done = frames.pop().expect("frame to return from");
                        if let (Some(call), Some(caller)) = (done.call, frames.last_mut()) {
                            if let StmtKind::Call { dst: Some(dst), .. } = &program.get(stmts[call]).kind {
                                deps[call].push((i, Provenance::CallReturn));
                                caller.regs.insert(dst.as_str(), (call, false));
                            }
                        }
                    }
                    StmtKind::Branch { .. } => {
                        frame.last_branch.insert(*stmt, i);
                    }
                    kind => {
                        if let Some(dst) = kind.def() {
                            frame.regs.insert(dst.as_str(), (i, false));
                        }
                    }
                }
            }
            Event::Read { loc, .. } => {
                if let Some(&w) = last_writer.get(&(loc.object, loc.offset)) {
                    deps.last_mut().expect("read follows exec").push((w, Provenance::MemoryObserved));
                }
            }
            Event::Write { loc, .. } => {
                last_writer.insert((loc.object, loc.offset), stmts.len() - 1);
            }
            _ => {}
        }
    }

    let start = stmts.iter().rposition(|&s| s == seed).ok_or(SliceError::SeedNotExecuted(seed))?;

    // instance closure, then projection onto statement arcs
    let mut projected: BTreeMap<StmtId, BTreeMap<StmtId, Provenance>> = BTreeMap::new();
    let mut seen = vec![false; stmts.len()];
    seen[start] = true;
    let mut stack = vec![start];
    while let Some(i) = stack.pop() {
        for &(p, provenance) in &deps[i] {
            let slot = projected.entry(stmts[i]).or_default().entry(stmts[p]).or_insert(provenance);
            *slot = (*slot).min(provenance);
            if !std::mem::replace(&mut seen[p], true) {
                stack.push(p);
            }
        }
    }

    let (members, arcs_used) = closure(seed, |s| {
        projected.get(&s).map(|m| m.iter().map(|(&p, &v)| (p, v)).collect()).unwrap_or_default()
    });
    Ok(SliceReport { seed, mode: SliceMode::Dynamic, digest: program.digest(), arcs_used, members })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alias::{must_alias_deps, points_to};
    use crate::interp::execute;
    use crate::ir::{fixtures::P1, parse_program};
    use crate::tracing::{sampled_data_deps, SamplerState};

    fn sid(s: &str) -> StmtId {
        s.parse().unwrap()
    }

    fn ids(v: &[&str]) -> BTreeSet<StmtId> {
        v.iter().map(|s| sid(s)).collect()
    }

    /// Cooperative P1 graph (both inputs), pruned and augmented for `input`.
    fn p1_graph(p: &Program, input: i64) -> (ObservedDependencyGraph, BTreeSet<StmtId>) {
        let mut g = ObservedDependencyGraph::new(p.digest());
        for (run, x) in [1, 0].into_iter().enumerate() {
            let t = execute(p, &[x], run as u64).unwrap();
            let d = sampled_data_deps(&t, &SamplerState::fixed(1.0, 0)).deps;
            g = g.add_run(&d, &t.executed(), run as u64).unwrap();
        }
        let executed = execute(p, &[input], 9).unwrap().executed();
        let control = control_deps(p).restricted(|s| executed.contains(&s));
        let g = g.prune_to_execution(&executed).augment(&Default::default(), &control).unwrap();
        (g, executed)
    }

    #[test]
    fn p1_statistical() {
        let p = parse_program(P1).unwrap();
        let facts = ProgramFacts::new(&p);
        let (g, executed) = p1_graph(&p, 1);
        let r = statistical_slice(&facts, &g, &executed, sid("0:1:1")).unwrap();
        assert_eq!(r.statements(), ids(&["0:0:0", "0:0:1", "0:0:2", "0:0:3", "0:1:0", "0:1:1"]));
        assert_eq!(r.members[0], SliceMember { stmt: sid("0:1:1"), depth: 0, provenance: Provenance::Seed });
        let s2 = r.members.iter().find(|m| m.stmt == sid("0:0:1")).unwrap();
        assert_eq!((s2.depth, s2.provenance), (2, Provenance::MemoryObserved));

        let mut thin = g.clone();
        thin.data_arcs.clear();
        let r = statistical_slice(&facts, &thin, &executed, sid("0:1:1")).unwrap();
        assert_eq!(r.statements(), ids(&["0:0:0", "0:0:2", "0:0:3", "0:1:0", "0:1:1"]));
    }

    #[test]
    fn p1_statistical_errors_and_isolated_seed() {
        let p = parse_program(P1).unwrap();
        let facts = ProgramFacts::new(&p);
        let (g, executed) = p1_graph(&p, 0);
        assert_eq!(
            statistical_slice(&facts, &g, &executed, sid("0:1:1")),
            Err(SliceError::SeedNotExecuted(sid("0:1:1")))
        );
        let mut bare = g.clone();
        bare.control_arcs.clear();
        assert!(matches!(
            statistical_slice(&facts, &bare, &executed, sid("0:3:0")),
            Err(SliceError::MissingControlArcs { .. })
        ));
        // fail is an exit, so the final ret is controlled by the branch
        let r = statistical_slice(&facts, &g, &executed, sid("0:3:0")).unwrap();
        assert_eq!(r.statements(), ids(&["0:0:2", "0:0:3", "0:3:0"]));
        assert_eq!(r.arcs_used, 2);
    }

    #[test]
    fn p1_dynamic() {
        let p = parse_program(P1).unwrap();
        let facts = ProgramFacts::new(&p);
        let t = execute(&p, &[1], 0).unwrap();
        let r = dynamic_slice(&facts, &t, sid("0:1:1")).unwrap();
        assert_eq!(r.statements(), ids(&["0:0:0", "0:0:1", "0:0:2", "0:0:3", "0:1:0", "0:1:1"]));
        assert_eq!(dynamic_slice(&facts, &t, sid("0:0:2")).unwrap().statements(), ids(&["0:0:2"]));
        let t0 = execute(&p, &[0], 0).unwrap();
        assert_eq!(dynamic_slice(&facts, &t0, sid("0:3:0")).unwrap().statements(), ids(&["0:0:2", "0:0:3", "0:3:0"]));
        assert_eq!(dynamic_slice(&facts, &t0, sid("0:1:1")), Err(SliceError::SeedNotExecuted(sid("0:1:1"))));
    }

    #[test]
    fn p1_static() {
        let p = parse_program(P1).unwrap();
        let facts = ProgramFacts::new(&p);
        let r = static_slice(&facts, sid("0:1:1")).unwrap();
        assert_eq!(r.statements(), ids(&["0:0:0", "0:0:1", "0:0:2", "0:0:3", "0:1:0", "0:1:1", "0:2:0"]));
        assert!(static_slice(&facts, sid("4:0:0")).is_err());
    }

    #[test]
    fn straight_line_def_chain() {
        let p = parse_program(
            "fun main() {\nb0:\n  a = const 1\n  b = add a, 2\n  z = const 5\n  c = mul b, b\n  ret c\n}\n",
        )
        .unwrap();
        let facts = ProgramFacts::new(&p);
        let r = static_slice(&facts, sid("0:0:4")).unwrap();
        assert_eq!(r.statements(), ids(&["0:0:0", "0:0:1", "0:0:3", "0:0:4"]));
        let depths: Vec<u32> = r.members.iter().map(|m| m.depth).collect();
        assert_eq!(depths, vec![0, 1, 2, 3]);
    }

    const CALLS: &str = "\
fun main() {
b0:
  a = alloc 1, stack
  x = input
  store a[0], x
  y = call twice(x)
  c = lt y, 10
  br c, b1, b2
b1:
  t = load a[0]
  fail t
b2:
  ret
}

fun twice(n) {
b0:
  k = const 2
  m = mul n, k
  ret m
}
";

    #[test]
    fn calls_and_stack_memory() {
        let p = parse_program(CALLS).unwrap();
        let facts = ProgramFacts::new(&p);
        let t = execute(&p, &[3], 0).unwrap();
        assert!(t.failed);
        let executed = t.executed();
        let seed = sid("0:1:1");
        let dynamic = dynamic_slice(&facts, &t, seed).unwrap();
        assert_eq!(
            dynamic.statements(),
            ids(&["0:0:0", "0:0:1", "0:0:2", "0:0:3", "0:0:4", "0:0:5", "0:1:0", "0:1:1", "1:0:0", "1:0:1", "1:0:2"])
        );
        let arg = dynamic.members.iter().find(|m| m.stmt == sid("0:0:1")).unwrap();
        assert_eq!(arg.provenance, Provenance::RegisterDef);

        // heap sampling sees nothing here; the stack arc comes from must-alias
        let pts = points_to(&p, &executed);
        let alias = must_alias_deps(&p, &pts, &executed);
        let control = facts.control.restricted(|s| executed.contains(&s));
        let g = ObservedDependencyGraph::new(p.digest())
            .add_run(&Default::default(), &executed, 0)
            .unwrap()
            .augment(&alias, &control)
            .unwrap();
        let stat = statistical_slice(&facts, &g, &executed, seed).unwrap();
        assert!(dynamic.statements().is_subset(&stat.statements()));
        // the callee's statements are reached through the call site
        let twice_ret = stat.members.iter().find(|m| m.stmt == sid("1:0:2")).unwrap();
        assert_eq!(twice_ret.provenance, Provenance::CallReturn);
        let formal_use = stat.members.iter().find(|m| m.stmt == sid("1:0:1")).unwrap();
        assert_eq!(formal_use.provenance, Provenance::RegisterDef);
        let stat_static = static_slice(&facts, seed).unwrap();
        assert!(stat.statements().is_subset(&stat_static.statements()));
    }

    #[test]
    fn callee_statements_depend_on_the_call_site() {
        let p = parse_program(
            "fun main() {\nb0:\n  c = input\n  br c, b1, b2\nb1:\n  call f()\n  jmp b2\nb2:\n  ret\n}\n\nfun f() {\nb0:\n  x = const 1\n  fail x\n}\n",
        )
        .unwrap();
        let facts = ProgramFacts::new(&p);
        let t = execute(&p, &[1], 0).unwrap();
        let r = dynamic_slice(&facts, &t, sid("1:0:1")).unwrap();
        assert_eq!(r.statements(), ids(&["0:0:0", "0:0:1", "0:1:0", "1:0:0", "1:0:1"]));
        let call = r.members.iter().find(|m| m.stmt == sid("0:1:0")).unwrap();
        assert_eq!((call.depth, call.provenance), (1, Provenance::Control));
    }

    #[test]
    fn loop_body_controlled_by_most_recent_header_instance() {
        let p = parse_program(
            "fun main() {\nb0:\n  i = const 0\n  jmp b1\nb1:\n  c = lt i, 3\n  br c, b2, b3\nb2:\n  i = add i, 1\n  jmp b1\nb3:\n  ret i\n}\n",
        )
        .unwrap();
        let facts = ProgramFacts::new(&p);
        let t = execute(&p, &[], 0).unwrap();
        let r = dynamic_slice(&facts, &t, sid("0:3:0")).unwrap();
        assert_eq!(r.statements(), ids(&["0:0:0", "0:1:0", "0:1:1", "0:2:0", "0:3:0"]));
        let s = static_slice(&facts, sid("0:3:0")).unwrap();
        assert!(r.statements().is_subset(&s.statements()));
    }

    #[test]
    fn report_json_and_text() {
        let p = parse_program(P1).unwrap();
        let facts = ProgramFacts::new(&p);
        let t = execute(&p, &[1], 0).unwrap();
        let r = dynamic_slice(&facts, &t, sid("0:1:1")).unwrap();
        let json = r.to_json();
        assert!(json.contains("\"mode\": \"dynamic\""));
        assert!(json.contains("\"provenance\": \"memory-observed\""));
        assert_eq!(serde_json::from_str::<SliceReport>(&json).unwrap(), r);
        let text = r.render_text(&p);
        assert!(text.lines().any(|l| l.starts_with("* 0:1:0") && l.contains("d=1 register-def")));
        assert!(text.lines().any(|l| l.starts_with("  0:2:0")));
    }
}
