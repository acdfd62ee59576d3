use super::{Function, Program, StmtKind};

/// Intra-procedural control-flow graph over block indices. Block 0 is the
/// entry. Successor lists are deduplicated and sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cfg {
    pub succs: Vec<Vec<usize>>,
    pub preds: Vec<Vec<usize>>,
}

impl Cfg {
    pub fn entry(&self) -> usize {
        0
    }

    pub fn len(&self) -> usize {
        self.succs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succs.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succs
            .iter()
            .enumerate()
            .flat_map(|(a, ss)| ss.iter().map(move |&b| (a, b)))
    }

    /// Blocks ending in `ret` or `fail`.
    pub fn exits(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&b| self.succs[b].is_empty())
    }

    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0];
        while let Some(b) = stack.pop() {
            if !std::mem::replace(&mut seen[b], true) {
                stack.extend(self.succs[b].iter().copied().filter(|&s| !seen[s]));
            }
        }
        seen
    }

    /// Reverse postorder from the entry.
    pub fn reverse_postorder(&self) -> Vec<usize> {
        let mut seen = vec![false; self.len()];
        let mut order = Vec::with_capacity(self.len());
        // iterative DFS with explicit successor cursor
        let mut stack = vec![(0usize, 0usize)];
        seen[0] = true;
        while let Some((b, i)) = stack.pop() {
            if let Some(&s) = self.succs[b].get(i) {
                stack.push((b, i + 1));
                if !seen[s] {
                    seen[s] = true;
                    stack.push((s, 0));
                }
            } else {
                order.push(b);
            }
        }
        order.reverse();
        order
    }
}

pub(crate) fn function_cfg(f: &Function) -> Cfg {
    let n = f.blocks.len();
    let mut succs = vec![Vec::new(); n];
    for (b, block) in f.blocks.iter().enumerate() {
        let mut out = match block.stmts.last().map(|s| &s.kind) {
            Some(StmtKind::Branch { then_block, else_block, .. }) => vec![*then_block, *else_block],
            Some(StmtKind::Jump { target }) => vec![*target],
            _ => Vec::new(),
        };
        out.sort_unstable();
        out.dedup();
        succs[b] = out;
    }
    let mut preds = vec![Vec::new(); n];
    for (a, ss) in succs.iter().enumerate() {
        for &s in ss {
            preds[s].push(a);
        }
    }
    Cfg { succs, preds }
}

/// One CFG per function, indexed like `program.functions`.
pub fn build_cfg(program: &Program) -> Vec<Cfg> {
    program.functions.iter().map(function_cfg).collect()
}
