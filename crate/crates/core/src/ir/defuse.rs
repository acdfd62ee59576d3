use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::cfg::function_cfg;
use super::{Program, Reg, StmtId};

/// A definition reaching a register use: either a statement or a formal
/// parameter bound at function entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Def {
    Stmt(StmtId),
    Formal { func: u32, index: u32 },
}

impl Def {
    pub fn stmt(self) -> Option<StmtId> {
        match self {
            Def::Stmt(s) => Some(s),
            Def::Formal { .. } => None,
        }
    }
}

/// A register operand slot: statement plus operand position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UseSite {
    pub stmt: StmtId,
    pub pos: u8,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DefUseChains {
    chains: BTreeMap<UseSite, Vec<Def>>,
}

impl DefUseChains {
    pub fn reaching(&self, site: UseSite) -> &[Def] {
        self.chains.get(&site).map_or(&[], Vec::as_slice)
    }

    /// All use sites of `stmt` with their reaching definitions, by position.
    pub fn uses_at(&self, stmt: StmtId) -> impl Iterator<Item = (UseSite, &[Def])> {
        let lo = UseSite { stmt, pos: 0 };
        let hi = UseSite { stmt, pos: u8::MAX };
        self.chains.range(lo..=hi).map(|(s, d)| (*s, d.as_slice()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (UseSite, &[Def])> {
        self.chains.iter().map(|(s, d)| (*s, d.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }
}

/// Reaching definitions for every register use, per function. Results for a
/// use with several reaching definitions are sorted.
pub fn def_use(program: &Program) -> DefUseChains {
    let mut chains = BTreeMap::new();
    for (fi, func) in program.functions.iter().enumerate() {
        let cfg = function_cfg(func);
        let n = func.blocks.len();

        // Definition universe: formals first, then statements in text order.
        let mut defs: Vec<(Def, &Reg)> = func
            .params
            .iter()
            .enumerate()
            .map(|(i, r)| (Def::Formal { func: fi as u32, index: i as u32 }, r))
            .collect();
        let mut defs_of: BTreeMap<&Reg, Vec<usize>> = BTreeMap::new();
        for s in func.statements() {
            if let Some(r) = s.kind.def() {
                defs.push((Def::Stmt(s.id), r));
            }
        }
        for (i, (_, r)) in defs.iter().enumerate() {
            defs_of.entry(*r).or_default().push(i);
        }
        let index_of: BTreeMap<Def, usize> = defs.iter().enumerate().map(|(i, (d, _))| (*d, i)).collect();

        let transfer = |b: usize, mut live: BTreeSet<usize>| {
            for s in &func.blocks[b].stmts {
                if let Some(r) = s.kind.def() {
                    for k in &defs_of[r] {
                        live.remove(k);
                    }
                    live.insert(index_of[&Def::Stmt(s.id)]);
                }
            }
            live
        };

        let entry_in: BTreeSet<usize> = (0..func.params.len()).collect();
        let mut block_in: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        block_in[0] = entry_in.clone();
        let mut block_out: Vec<BTreeSet<usize>> = (0..n).map(|b| transfer(b, block_in[b].clone())).collect();
        let order = cfg.reverse_postorder();
        let mut changed = true;
        while changed {
            changed = false;
            for &b in &order {
                let mut inb = if b == 0 { entry_in.clone() } else { BTreeSet::new() };
                for &p in &cfg.preds[b] {
                    inb.extend(block_out[p].iter().copied());
                }
                if inb != block_in[b] {
                    block_out[b] = transfer(b, inb.clone());
                    block_in[b] = inb;
                    changed = true;
                }
            }
        }

        for (b, block) in func.blocks.iter().enumerate() {
            let mut live = block_in[b].clone();
            for s in &block.stmts {
                for (pos, r) in s.kind.uses() {
                    let mut reaching: Vec<Def> = defs_of
                        .get(r)
                        .into_iter()
                        .flatten()
                        .filter(|k| live.contains(k))
                        .map(|&k| defs[k].0)
                        .collect();
                    reaching.sort();
                    chains.insert(UseSite { stmt: s.id, pos }, reaching);
                }
                if let Some(r) = s.kind.def() {
                    for k in &defs_of[r] {
                        live.remove(k);
                    }
                    live.insert(index_of[&Def::Stmt(s.id)]);
                }
            }
        }
    }
    DefUseChains { chains }
}
