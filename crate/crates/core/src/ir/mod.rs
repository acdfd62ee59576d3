//! Textual mini-IR: program model, parser, printer and the static analyses
//! (CFG, reaching definitions, control dependence) every other stage builds on.
//!
//! Registers are function-local and the IR is not in SSA form. Memory is only
//! reachable through `alloc`/`getptr`/`load`/`store`, with word-granular
//! offsets.

mod cfg;
mod control;
mod defuse;
mod parse;
mod print;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

pub use cfg::{build_cfg, Cfg};
pub use control::{control_deps, ControlDeps};
pub use defuse::{def_use, Def, DefUseChains, UseSite};
pub use parse::{parse_program, ParseError};
pub use print::render_stmt;

/// Program-wide statement identity, rendered `f:b:i`.
///
/// The derived ordering is lexicographic on (function, block, instruction) and
/// is the tie-breaker for every deterministic traversal in the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StmtId {
    pub func: u32,
    pub block: u32,
    pub inst: u32,
}

impl StmtId {
    pub const fn new(func: u32, block: u32, inst: u32) -> Self {
        StmtId { func, block, inst }
    }
}

impl fmt::Display for StmtId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.func, self.block, self.inst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed statement id `{0}` (expected f:b:i)")]
pub struct BadStmtId(pub String);

impl FromStr for StmtId {
    type Err = BadStmtId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.trim().split(':').map(str::parse::<u32>);
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(Ok(f)), Some(Ok(b)), Some(Ok(i)), None) => Ok(StmtId::new(f, b, i)),
            _ => Err(BadStmtId(s.to_string())),
        }
    }
}

impl Serialize for StmtId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StmtId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A function-local register name.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reg(pub String);

impl Reg {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Reg {
    fn from(s: &str) -> Self {
        Reg(s.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    Reg(Reg),
    Imm(i64),
}

impl Operand {
    pub fn reg(&self) -> Option<&Reg> {
        match self {
            Operand::Reg(r) => Some(r),
            Operand::Imm(_) => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => write!(f, "{r}"),
            Operand::Imm(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Heap,
    Stack,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::Heap => "heap",
            Region::Stack => "stack",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinOp {
    pub const ALL: [BinOp; 16] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Rem,
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
        BinOp::Shl,
        BinOp::Shr,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
            BinOp::Rem => "rem",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Xor => "xor",
            BinOp::Shl => "shl",
            BinOp::Shr => "shr",
            BinOp::Eq => "eq",
            BinOp::Ne => "ne",
            BinOp::Lt => "lt",
            BinOp::Le => "le",
            BinOp::Gt => "gt",
            BinOp::Ge => "ge",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<BinOp> {
        BinOp::ALL.into_iter().find(|op| op.mnemonic() == s)
    }
}

/// Statement kinds. Block and callee references are resolved indices; the
/// parser is the only constructor of a [`Program`], so they are always valid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StmtKind {
    Const { dst: Reg, value: i64 },
    BinOp { dst: Reg, op: BinOp, lhs: Operand, rhs: Operand },
    Copy { dst: Reg, src: Reg },
    Input { dst: Reg },
    Alloc { dst: Reg, size: Operand, region: Region },
    Free { ptr: Reg },
    Load { dst: Reg, ptr: Reg, offset: Operand },
    Store { ptr: Reg, offset: Operand, value: Operand },
    GetPtr { dst: Reg, base: Reg, offset: Operand },
    Branch { cond: Reg, then_block: usize, else_block: usize },
    Jump { target: usize },
    Call { dst: Option<Reg>, callee: usize, args: Vec<Operand> },
    Ret { value: Option<Operand> },
    Fail { value: Option<Operand> },
}

impl StmtKind {
    pub fn is_terminator(&self) -> bool {
        matches!(
            self,
            StmtKind::Branch { .. } | StmtKind::Jump { .. } | StmtKind::Ret { .. } | StmtKind::Fail { .. }
        )
    }

    /// Register written by this statement, if any.
    pub fn def(&self) -> Option<&Reg> {
        match self {
            StmtKind::Const { dst, .. }
            | StmtKind::BinOp { dst, .. }
            | StmtKind::Copy { dst, .. }
            | StmtKind::Input { dst }
            | StmtKind::Alloc { dst, .. }
            | StmtKind::Load { dst, .. }
            | StmtKind::GetPtr { dst, .. } => Some(dst),
            StmtKind::Call { dst, .. } => dst.as_ref(),
            _ => None,
        }
    }

    /// Register operands in operand-position order. Positions count every
    /// operand slot, immediates included, so they are stable across edits that
    /// swap a register for a constant.
    pub fn uses(&self) -> Vec<(u8, &Reg)> {
        fn push<'a>(out: &mut Vec<(u8, &'a Reg)>, pos: u8, op: &'a Operand) {
            if let Operand::Reg(r) = op {
                out.push((pos, r));
            }
        }
        let mut out = Vec::new();
        match self {
            StmtKind::Const { .. } | StmtKind::Input { .. } | StmtKind::Jump { .. } => {}
            StmtKind::BinOp { lhs, rhs, .. } => {
                push(&mut out, 0, lhs);
                push(&mut out, 1, rhs);
            }
            StmtKind::Copy { src, .. } => out.push((0, src)),
            StmtKind::Alloc { size, .. } => push(&mut out, 0, size),
            StmtKind::Free { ptr } => out.push((0, ptr)),
            StmtKind::Load { ptr, offset, .. } => {
                out.push((0, ptr));
                push(&mut out, 1, offset);
            }
            StmtKind::Store { ptr, offset, value } => {
                out.push((0, ptr));
                push(&mut out, 1, offset);
                push(&mut out, 2, value);
            }
            StmtKind::GetPtr { base, offset, .. } => {
                out.push((0, base));
                push(&mut out, 1, offset);
            }
            StmtKind::Branch { cond, .. } => out.push((0, cond)),
            StmtKind::Call { args, .. } => {
                for (i, a) in args.iter().enumerate() {
                    push(&mut out, i as u8, a);
                }
            }
            StmtKind::Ret { value } | StmtKind::Fail { value } => {
                if let Some(v) = value {
                    push(&mut out, 0, v);
                }
            }
        }
        out
    }

    pub fn reads_memory(&self) -> bool {
        matches!(self, StmtKind::Load { .. })
    }

    pub fn writes_memory(&self) -> bool {
        matches!(self, StmtKind::Store { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Statement {
    pub id: StmtId,
    pub kind: StmtKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasicBlock {
    pub label: String,
    pub stmts: Vec<Statement>,
}

impl BasicBlock {
    pub fn terminator(&self) -> &Statement {
        self.stmts.last().expect("validated blocks end in a terminator")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<Reg>,
    pub blocks: Vec<BasicBlock>,
}

impl Function {
    pub fn statements(&self) -> impl Iterator<Item = &Statement> {
        self.blocks.iter().flat_map(|b| b.stmts.iter())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub functions: Vec<Function>,
}

impl Program {
    pub fn main_index(&self) -> usize {
        self.functions
            .iter()
            .position(|f| f.name == "main")
            .expect("validated programs have a main function")
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.functions.iter().position(|f| f.name == name)
    }

    pub fn stmt(&self, id: StmtId) -> Option<&Statement> {
        self.functions
            .get(id.func as usize)?
            .blocks
            .get(id.block as usize)?
            .stmts
            .get(id.inst as usize)
    }

    /// Statement lookup for ids known to come from this program.
    pub fn get(&self, id: StmtId) -> &Statement {
        self.stmt(id)
            .unwrap_or_else(|| panic!("statement {id} is not part of this program"))
    }

    pub fn statements(&self) -> impl Iterator<Item = &Statement> {
        self.functions.iter().flat_map(Function::statements)
    }

    pub fn stmt_count(&self) -> usize {
        self.statements().count()
    }

    pub fn function_of(&self, id: StmtId) -> &Function {
        &self.functions[id.func as usize]
    }

    /// All call statements targeting `callee`.
    pub fn call_sites(&self, callee: usize) -> impl Iterator<Item = &Statement> {
        self.statements()
            .filter(move |s| matches!(s.kind, StmtKind::Call { callee: c, .. } if c == callee))
    }

    /// True if the static call graph has a cycle.
    pub fn is_recursive(&self) -> bool {
        let n = self.functions.len();
        let mut edges = vec![Vec::new(); n];
        for s in self.statements() {
            if let StmtKind::Call { callee, .. } = s.kind {
                edges[s.id.func as usize].push(callee);
            }
        }
        // 0 = unvisited, 1 = on stack, 2 = done
        fn dfs(v: usize, edges: &[Vec<usize>], state: &mut [u8]) -> bool {
            state[v] = 1;
            for &w in &edges[v] {
                if state[w] == 1 || (state[w] == 0 && dfs(w, edges, state)) {
                    return true;
                }
            }
            state[v] = 2;
            false
        }
        let mut state = vec![0u8; n];
        (0..n).any(|v| state[v] == 0 && dfs(v, &edges, &mut state))
    }

    /// Hex SHA-256 of the canonical printed form.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_string().as_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

impl FromStr for Program {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_program(s)
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stmt_id_round_trips_through_text() {
        let id = StmtId::new(3, 12, 0);
        assert_eq!(id.to_string(), "3:12:0");
        assert_eq!("3:12:0".parse::<StmtId>().unwrap(), id);
        assert!("3:12".parse::<StmtId>().is_err());
        assert!("a:b:c".parse::<StmtId>().is_err());
    }

    #[test]
    fn stmt_id_order_is_lexicographic() {
        let mut ids = vec![StmtId::new(1, 0, 0), StmtId::new(0, 2, 0), StmtId::new(0, 0, 5)];
        ids.sort();
        assert_eq!(ids, vec![StmtId::new(0, 0, 5), StmtId::new(0, 2, 0), StmtId::new(1, 0, 0)]);
    }

    #[test]
    fn digest_is_stable_under_comments_and_whitespace() {
        let a = parse_program(fixtures::P1).unwrap();
        let stripped: String = fixtures::P1
            .lines()
            .map(|l| l.split(';').next().unwrap().trim_end())
            .collect::<Vec<_>>()
            .join("\n");
        let b = parse_program(&stripped).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn recursion_detection() {
        let p = parse_program(fixtures::P1).unwrap();
        assert!(!p.is_recursive());
        let rec = parse_program(
            "fun f(n) {\nb0:\n  c = gt n, 0\n  br c, b1, b2\nb1:\n  m = sub n, 1\n  call f(m)\n  ret\nb2:\n  ret\n}\nfun main() {\nb0:\n  call f(3)\n  ret\n}\n",
        )
        .unwrap();
        assert!(rec.is_recursive());
    }
}
