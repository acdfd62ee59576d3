use std::collections::{BTreeMap, BTreeSet};

use super::cfg::{function_cfg, Cfg};
use super::{Program, StmtId};

/// Statement -> controlling `br` statements (postdominance-based).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ControlDeps {
    map: BTreeMap<StmtId, BTreeSet<StmtId>>,
}

static NO_CONTROLLERS: BTreeSet<StmtId> = BTreeSet::new();

impl ControlDeps {
    pub fn controllers(&self, s: StmtId) -> &BTreeSet<StmtId> {
        self.map.get(&s).unwrap_or(&NO_CONTROLLERS)
    }

    /// (controller, controlled) pairs in sorted order.
    pub fn arcs(&self) -> impl Iterator<Item = (StmtId, StmtId)> + '_ {
        self.map.iter().flat_map(|(s, cs)| cs.iter().map(move |c| (*c, *s)))
    }

    /// Arcs whose endpoints both satisfy `keep`.
    pub fn restricted(&self, keep: impl Fn(StmtId) -> bool) -> BTreeSet<(StmtId, StmtId)> {
        self.arcs().filter(|&(c, s)| keep(c) && keep(s)).collect()
    }
}

/// Immediate postdominators over blocks, with a virtual exit at index `n`.
/// Blocks that cannot reach a real exit are wired to the virtual exit.
pub(crate) fn postdominators(cfg: &Cfg) -> Vec<usize> {
    let n = cfg.len();
    let exit = n;
    // reverse graph: succ_rev[v] = preds of v in the augmented forward graph
    let mut fwd: Vec<Vec<usize>> = cfg.succs.clone();
    fwd.push(Vec::new());
    let mut reaches_exit = vec![false; n];
    let mut stack: Vec<usize> = cfg.exits().collect();
    while let Some(b) = stack.pop() {
        if !std::mem::replace(&mut reaches_exit[b], true) {
            stack.extend(cfg.preds[b].iter().copied());
        }
    }
    for b in 0..n {
        if fwd[b].is_empty() || !reaches_exit[b] {
            fwd[b].push(exit);
        }
    }
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for (a, ss) in fwd.iter().enumerate() {
        for &b in ss {
            rev[b].push(a);
        }
    }

    // postorder of the reverse graph from the virtual exit
    let mut order = Vec::with_capacity(n + 1);
    let mut seen = vec![false; n + 1];
    let mut st = vec![(exit, 0usize)];
    seen[exit] = true;
    while let Some((v, i)) = st.pop() {
        if let Some(&w) = rev[v].get(i) {
            st.push((v, i + 1));
            if !seen[w] {
                seen[w] = true;
                st.push((w, 0));
            }
        } else {
            order.push(v);
        }
    }
    let mut po_num = vec![usize::MAX; n + 1];
    for (i, &v) in order.iter().enumerate() {
        po_num[v] = i;
    }

    const UNDEF: usize = usize::MAX;
    let mut idom = vec![UNDEF; n + 1];
    idom[exit] = exit;
    let intersect = |idom: &[usize], mut a: usize, mut b: usize| {
        while a != b {
            while po_num[a] < po_num[b] {
                a = idom[a];
            }
            while po_num[b] < po_num[a] {
                b = idom[b];
            }
        }
        a
    };
    let mut changed = true;
    while changed {
        changed = false;
        for &v in order.iter().rev() {
            if v == exit {
                continue;
            }
            // predecessors in the reverse graph are forward successors
            let mut new_idom = UNDEF;
            for &p in &fwd[v] {
                if idom[p] == UNDEF {
                    continue;
                }
                new_idom = if new_idom == UNDEF { p } else { intersect(&idom, p, new_idom) };
            }
            if new_idom != idom[v] {
                idom[v] = new_idom;
                changed = true;
            }
        }
    }
    idom
}

/// Standard control dependence: block X depends on the branch ending block A
/// iff X postdominates some successor of A but does not strictly postdominate A.
pub fn control_deps(program: &Program) -> ControlDeps {
    let mut map: BTreeMap<StmtId, BTreeSet<StmtId>> = BTreeMap::new();
    for func in &program.functions {
        let cfg = function_cfg(func);
        let ipdom = postdominators(&cfg);
        let mut block_ctrl: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); cfg.len()];
        for (a, b) in cfg.edges() {
            let stop = ipdom[a];
            let mut runner = b;
            while runner != stop && runner < cfg.len() {
                block_ctrl[runner].insert(a);
                runner = ipdom[runner];
            }
        }
        for (x, block) in func.blocks.iter().enumerate() {
            let ctrls: BTreeSet<StmtId> = block_ctrl[x]
                .iter()
                .map(|&a| func.blocks[a].terminator().id)
                .collect();
            for s in &block.stmts {
                map.insert(s.id, ctrls.clone());
            }
        }
    }
    ControlDeps { map }
}
