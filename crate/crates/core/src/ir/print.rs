use std::fmt::{self, Write as _};

use super::{Function, Operand, Program, Statement, StmtKind};

impl fmt::Display for Program {
    /// Canonical text: the digest is computed over exactly this rendering.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, func) in self.functions.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write_function(self, func, f)?;
        }
        Ok(())
    }
}

fn write_function(p: &Program, func: &Function, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let params: Vec<&str> = func.params.iter().map(|r| r.as_str()).collect();
    writeln!(f, "fun {}({}) {{", func.name, params.join(", "))?;
    for block in &func.blocks {
        writeln!(f, "{}:", block.label)?;
        for s in &block.stmts {
            writeln!(f, "  {}", render_stmt(p, s))?;
        }
    }
    writeln!(f, "}}")
}

fn join(ops: &[Operand]) -> String {
    ops.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

/// Source form of one statement, without indentation or comment.
pub fn render_stmt(p: &Program, s: &Statement) -> String {
    let func = p.function_of(s.id);
    let label = |b: usize| func.blocks[b].label.as_str();
    let mut out = String::new();
    let _ = match &s.kind {
        StmtKind::Const { dst, value } => write!(out, "{dst} = const {value}"),
        StmtKind::BinOp { dst, op, lhs, rhs } => write!(out, "{dst} = {} {lhs}, {rhs}", op.mnemonic()),
        StmtKind::Copy { dst, src } => write!(out, "{dst} = copy {src}"),
        StmtKind::Input { dst } => write!(out, "{dst} = input"),
        StmtKind::Alloc { dst, size, region } => write!(out, "{dst} = alloc {size}, {region}"),
        StmtKind::Free { ptr } => write!(out, "free {ptr}"),
        StmtKind::Load { dst, ptr, offset } => write!(out, "{dst} = load {ptr}[{offset}]"),
        StmtKind::Store { ptr, offset, value } => write!(out, "store {ptr}[{offset}], {value}"),
        StmtKind::GetPtr { dst, base, offset } => write!(out, "{dst} = getptr {base}, {offset}"),
        StmtKind::Branch { cond, then_block, else_block } => {
            write!(out, "br {cond}, {}, {}", label(*then_block), label(*else_block))
        }
        StmtKind::Jump { target } => write!(out, "jmp {}", label(*target)),
        StmtKind::Call { dst, callee, args } => {
            let name = &p.functions[*callee].name;
            match dst {
                Some(d) => write!(out, "{d} = call {name}({})", join(args)),
                None => write!(out, "call {name}({})", join(args)),
            }
        }
        StmtKind::Ret { value: None } => write!(out, "ret"),
        StmtKind::Ret { value: Some(v) } => write!(out, "ret {v}"),
        StmtKind::Fail { value: None } => write!(out, "fail"),
        StmtKind::Fail { value: Some(v) } => write!(out, "fail {v}"),
    };
    out
}

#[cfg(test)]
mod tests {
    use crate::ir::fixtures::P1;
    use crate::ir::parse_program;

    #[test]
    fn print_parse_is_identity_on_p1() {
        let p = parse_program(P1).unwrap();
        let printed = p.to_string();
        let q = parse_program(&printed).unwrap();
        assert_eq!(p, q);
        assert_eq!(printed, q.to_string());
        assert!(printed.contains("  store x[0], 7\n"));
        assert!(printed.contains("  br c, b1, b2\n"));
    }
}
