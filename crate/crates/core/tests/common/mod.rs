//! Brute-force oracles shared by the integration suites. They work from the
//! statement kinds directly and do not reuse the library's CFG or dataflow.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use statslice::interp::{Event, FullTrace};
use statslice::ir::{Def, Function, Program, Reg, StmtId, StmtKind};

pub const P1: &str = "\
fun main() {
b0:
  x = alloc 1, heap
  store x[0], 7
  c = input
  br c, b1, b2
b1:
  v = load x[0]
  fail v
b2:
  store x[0], 9
  jmp b3
b3:
  ret
}
";

pub fn sid(s: &str) -> StmtId {
    s.parse().unwrap()
}

pub fn ids(v: &[&str]) -> BTreeSet<StmtId> {
    v.iter().map(|s| sid(s)).collect()
}

fn successors(f: &Function, b: usize) -> Vec<usize> {
    match &f.blocks[b].stmts.last().unwrap().kind {
        StmtKind::Branch { then_block, else_block, .. } => {
            let mut v = vec![*then_block, *else_block];
            v.dedup();
            v
        }
        StmtKind::Jump { target } => vec![*target],
        _ => vec![],
    }
}

fn defines(kind: &StmtKind, r: &Reg) -> bool {
    kind.def() == Some(r)
}

/// Reaching definitions by enumerating simple block paths from each
/// definition to each use.
pub fn def_use_oracle(p: &Program, fi: usize) -> BTreeMap<(StmtId, u8), BTreeSet<Def>> {
    let f = &p.functions[fi];
    let mut out = BTreeMap::new();
    for (ub, block) in f.blocks.iter().enumerate() {
        for (ui, s) in block.stmts.iter().enumerate() {
            for (pos, r) in s.kind.uses() {
                let mut reaching = BTreeSet::new();
                // formals: a pseudo-definition just before the entry block
                if let Some(k) = f.params.iter().position(|q| q == r) {
                    if clear_path(f, 0, None, ub, ui, r) {
                        reaching.insert(Def::Formal { func: fi as u32, index: k as u32 });
                    }
                }
                for (db, dblock) in f.blocks.iter().enumerate() {
                    for (di, d) in dblock.stmts.iter().enumerate() {
                        if defines(&d.kind, r) && clear_path(f, db, Some(di), ub, ui, r) {
                            reaching.insert(Def::Stmt(d.id));
                        }
                    }
                }
                out.insert((s.id, pos), reaching);
            }
        }
    }
    out
}

/// A path from just after (db, di) to just before (ub, ui) with no
/// redefinition of `r`. `di = None` starts before the first statement.
fn clear_path(f: &Function, db: usize, di: Option<usize>, ub: usize, ui: usize, r: &Reg) -> bool {
    let start = di.map_or(0, |i| i + 1);
    let stmts = &f.blocks[db].stmts;
    if db == ub && start <= ui {
        return stmts[start..ui].iter().all(|s| !defines(&s.kind, r));
    }
    if stmts[start..].iter().any(|s| defines(&s.kind, r)) {
        return false;
    }
    let mut on_path = vec![false; f.blocks.len()];
    successors(f, db).into_iter().any(|b| walk(f, b, ub, ui, r, &mut on_path))
}

fn walk(f: &Function, b: usize, ub: usize, ui: usize, r: &Reg, on_path: &mut [bool]) -> bool {
    let stmts = &f.blocks[b].stmts;
    if b == ub {
        return stmts[..ui].iter().all(|s| !defines(&s.kind, r));
    }
    if on_path[b] || stmts.iter().any(|s| defines(&s.kind, r)) {
        return false;
    }
    on_path[b] = true;
    let found = successors(f, b).into_iter().any(|n| walk(f, n, ub, ui, r, on_path));
    on_path[b] = false;
    found
}

/// Is some exit reachable from `from` without entering `avoid`?
fn exit_avoiding(f: &Function, from: usize, avoid: usize) -> bool {
    if from == avoid {
        return false;
    }
    let mut seen = vec![false; f.blocks.len()];
    let mut stack = vec![from];
    while let Some(b) = stack.pop() {
        if b == avoid || std::mem::replace(&mut seen[b], true) {
            continue;
        }
        let succ = successors(f, b);
        if succ.is_empty() {
            return true;
        }
        stack.extend(succ);
    }
    false
}

/// Statement -> controlling branches: block Y depends on branch X iff one
/// successor of X always reaches Y before exit and another may avoid Y.
pub fn control_oracle(p: &Program, fi: usize) -> BTreeMap<StmtId, BTreeSet<StmtId>> {
    let f = &p.functions[fi];
    let mut out: BTreeMap<StmtId, BTreeSet<StmtId>> = BTreeMap::new();
    for s in f.statements() {
        out.insert(s.id, BTreeSet::new());
    }
    for (x, xb) in f.blocks.iter().enumerate() {
        let succ = successors(f, x);
        if succ.len() < 2 {
            continue;
        }
        let branch = xb.stmts.last().unwrap().id;
        for y in 0..f.blocks.len() {
            let always = succ.iter().any(|&s| !exit_avoiding(f, s, y));
            let may_avoid = succ.iter().any(|&s| exit_avoiding(f, s, y));
            if always && may_avoid {
                for s in &f.blocks[y].stmts {
                    out.get_mut(&s.id).unwrap().insert(branch);
                }
            }
        }
    }
    out
}

/// Every concrete (site, offset) a statement touched in the trace.
pub fn touched(trace: &FullTrace) -> BTreeMap<StmtId, BTreeSet<(StmtId, u64)>> {
    let mut out: BTreeMap<StmtId, BTreeSet<(StmtId, u64)>> = BTreeMap::new();
    for e in &trace.events {
        if let Event::Read { stmt, loc } | Event::Write { stmt, loc } = e {
            out.entry(*stmt).or_default().insert((loc.site, loc.offset));
        }
    }
    out
}
