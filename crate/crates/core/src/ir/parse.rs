use std::collections::{BTreeSet, HashMap};

use super::{BasicBlock, BinOp, Function, Operand, Program, Reg, Region, Statement, StmtId, StmtKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("validation error: {0}")]
    Validation(String),
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, col, msg: msg.into() }
}

fn invalid(msg: impl Into<String>) -> ParseError {
    ParseError::Validation(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Sym(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    col: usize,
}

fn tokenize(line_no: usize, text: &str) -> Result<Vec<Token>, ParseError> {
    let code = text.split(';').next().unwrap_or("");
    let chars: Vec<char> = code.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), col });
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let lit: String = chars[start..i].iter().collect();
            let v = lit
                .parse::<i64>()
                .map_err(|_| syntax(line_no, col, format!("integer literal `{lit}` out of range")))?;
            out.push(Token { tok: Tok::Int(v), col });
        } else if "=,[](){}:".contains(c) {
            out.push(Token { tok: Tok::Sym(c), col });
            i += 1;
        } else {
            return Err(syntax(line_no, col, format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

/// Cursor over one line's tokens.
struct Line<'a> {
    no: usize,
    toks: &'a [Token],
    pos: usize,
    end_col: usize,
}

impl<'a> Line<'a> {
    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.col)
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        syntax(self.no, self.col(), msg)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.err("unexpected trailing tokens"))
        }
    }

    fn sym(&mut self, c: char) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Sym(s)) if *s == c => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected `{c}`"))),
        }
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    fn reg(&mut self) -> Result<Reg, ParseError> {
        self.ident().map(Reg)
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        match self.peek() {
            Some(Tok::Int(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.err("expected integer")),
        }
    }

    fn operand(&mut self) -> Result<Operand, ParseError> {
        match self.peek() {
            Some(Tok::Ident(_)) => self.reg().map(Operand::Reg),
            Some(Tok::Int(_)) => self.int().map(Operand::Imm),
            _ => Err(self.err("expected register or integer")),
        }
    }

    /// `p[off]`
    fn address(&mut self) -> Result<(Reg, Operand), ParseError> {
        let ptr = self.reg()?;
        self.sym('[')?;
        let off = self.operand()?;
        self.sym(']')?;
        Ok((ptr, off))
    }
}

#[derive(Debug)]
enum Pending {
    Label { block: usize, inst: usize, slot: u8, label: String },
    Callee { block: usize, inst: usize, name: String, line: usize, col: usize },
}

struct FnBuilder {
    name: String,
    params: Vec<Reg>,
    blocks: Vec<BasicBlock>,
    pending: Vec<Pending>,
    line: usize,
}

/// Parses and validates IR text. Statement ids are assigned positionally, so
/// identical text always yields identical ids.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut done: Vec<FnBuilder> = Vec::new();
    let mut cur: Option<FnBuilder> = None;

    for (idx, raw) in text.lines().enumerate() {
        let no = idx + 1;
        let toks = tokenize(no, raw)?;
        if toks.is_empty() {
            continue;
        }
        let end_col = raw.split(';').next().unwrap_or("").trim_end().chars().count() + 1;
        let mut line = Line { no, toks: &toks, pos: 0, end_col };

        let Some(f) = cur.as_mut() else {
            if line.ident()? != "fun" {
                return Err(syntax(no, toks[0].col, "expected `fun`"));
            }
            let name = line.ident()?;
            line.sym('(')?;
            let mut params = Vec::new();
            if !line.eat_sym(')') {
                loop {
                    params.push(line.reg()?);
                    if line.eat_sym(')') {
                        break;
                    }
                    line.sym(',')?;
                }
            }
            line.sym('{')?;
            line.expect_end()?;
            cur = Some(FnBuilder { name, params, blocks: Vec::new(), pending: Vec::new(), line: no });
            continue;
        };

        if line.eat_sym('}') {
            line.expect_end()?;
            done.push(cur.take().expect("inside a function"));
            continue;
        }

        // label line
        if toks.len() == 2 && matches!(toks[1].tok, Tok::Sym(':')) {
            let label = line.ident()?;
            f.blocks.push(BasicBlock { label, stmts: Vec::new() });
            continue;
        }

        let Some(block_idx) = f.blocks.len().checked_sub(1) else {
            return Err(syntax(no, toks[0].col, "statement outside of a labelled block"));
        };
        let inst_idx = f.blocks[block_idx].stmts.len();
        let kind = parse_stmt(&mut line, &mut f.pending, block_idx, inst_idx)?;
        line.expect_end()?;
        let func = done.len() as u32;
        f.blocks[block_idx].stmts.push(Statement {
            id: StmtId::new(func, block_idx as u32, inst_idx as u32),
            kind,
        });
    }

    if let Some(f) = cur {
        return Err(syntax(f.line, 1, format!("function `{}` is missing its closing `}}`", f.name)));
    }
    resolve(done)
}

fn parse_stmt(
    line: &mut Line<'_>,
    pending: &mut Vec<Pending>,
    block: usize,
    inst: usize,
) -> Result<StmtKind, ParseError> {
    let first = line.ident()?;
    let mut label = |line: &mut Line<'_>, slot: u8| -> Result<usize, ParseError> {
        let l = line.ident()?;
        pending.push(Pending::Label { block, inst, slot, label: l });
        Ok(usize::MAX)
    };

    if line.eat_sym('=') {
        let dst = Reg(first);
        let op_col = line.col();
        let op = line.ident()?;
        return Ok(match op.as_str() {
            "const" => StmtKind::Const { dst, value: line.int()? },
            "copy" => StmtKind::Copy { dst, src: line.reg()? },
            "input" => StmtKind::Input { dst },
            "alloc" => {
                let size = line.operand()?;
                line.sym(',')?;
                let region = match line.ident()?.as_str() {
                    "heap" => Region::Heap,
                    "stack" => Region::Stack,
                    other => return Err(line.err(format!("unknown region `{other}`"))),
                };
                StmtKind::Alloc { dst, size, region }
            }
            "load" => {
                let (ptr, offset) = line.address()?;
                StmtKind::Load { dst, ptr, offset }
            }
            "getptr" => {
                let base = line.reg()?;
                line.sym(',')?;
                StmtKind::GetPtr { dst, base, offset: line.operand()? }
            }
            "call" => {
                let (name, args) = call_tail(line)?;
                pending.push(Pending::Callee { block, inst, name, line: line.no, col: op_col });
                StmtKind::Call { dst: Some(dst), callee: usize::MAX, args }
            }
            other => match BinOp::from_mnemonic(other) {
                Some(op) => {
                    let lhs = line.operand()?;
                    line.sym(',')?;
                    StmtKind::BinOp { dst, op, lhs, rhs: line.operand()? }
                }
                None => return Err(syntax(line.no, op_col, format!("unknown operation `{other}`"))),
            },
        });
    }

    Ok(match first.as_str() {
        "store" => {
            let (ptr, offset) = line.address()?;
            line.sym(',')?;
            StmtKind::Store { ptr, offset, value: line.operand()? }
        }
        "free" => StmtKind::Free { ptr: line.reg()? },
        "br" => {
            let cond = line.reg()?;
            line.sym(',')?;
            let then_block = label(line, 0)?;
            line.sym(',')?;
            let else_block = label(line, 1)?;
            StmtKind::Branch { cond, then_block, else_block }
        }
        "jmp" => StmtKind::Jump { target: label(line, 0)? },
        "call" => {
            let col = line.col();
            let (name, args) = call_tail(line)?;
            pending.push(Pending::Callee { block, inst, name, line: line.no, col });
            StmtKind::Call { dst: None, callee: usize::MAX, args }
        }
        "ret" => StmtKind::Ret { value: if line.at_end() { None } else { Some(line.operand()?) } },
        "fail" => StmtKind::Fail { value: if line.at_end() { None } else { Some(line.operand()?) } },
        other => return Err(syntax(line.no, 1, format!("unknown statement `{other}`"))),
    })
}

fn call_tail(line: &mut Line<'_>) -> Result<(String, Vec<Operand>), ParseError> {
    let name = line.ident()?;
    line.sym('(')?;
    let mut args = Vec::new();
    if !line.eat_sym(')') {
        loop {
            args.push(line.operand()?);
            if line.eat_sym(')') {
                break;
            }
            line.sym(',')?;
        }
    }
    Ok((name, args))
}

fn resolve(builders: Vec<FnBuilder>) -> Result<Program, ParseError> {
    let mut names: HashMap<String, (usize, usize)> = HashMap::new();
    for (i, f) in builders.iter().enumerate() {
        if names.insert(f.name.clone(), (i, f.params.len())).is_some() {
            return Err(invalid(format!("duplicate function {}", f.name)));
        }
    }
    match names.get("main") {
        None => return Err(invalid("missing main")),
        Some(&(_, arity)) if arity != 0 => return Err(invalid("main must take no parameters")),
        _ => {}
    }

    let mut functions = Vec::with_capacity(builders.len());
    for f in builders {
        let FnBuilder { name, params, mut blocks, pending, .. } = f;
        if blocks.is_empty() {
            return Err(invalid(format!("function {name} has no blocks")));
        }
        let mut labels = HashMap::new();
        for (i, b) in blocks.iter().enumerate() {
            if labels.insert(b.label.clone(), i).is_some() {
                return Err(invalid(format!("duplicate label {} in {name}", b.label)));
            }
        }
        let mut seen_params = BTreeSet::new();
        for p in &params {
            if !seen_params.insert(p) {
                return Err(invalid(format!("duplicate parameter {p} in {name}")));
            }
        }
        for p in pending {
            match p {
                Pending::Label { block, inst, slot, label } => {
                    let &target = labels
                        .get(&label)
                        .ok_or_else(|| invalid(format!("undefined label {label}")))?;
                    match &mut blocks[block].stmts[inst].kind {
                        StmtKind::Branch { then_block, else_block, .. } => {
                            *(if slot == 0 { then_block } else { else_block }) = target;
                        }
                        StmtKind::Jump { target: t } => *t = target,
                        _ => unreachable!("label slots only exist on br/jmp"),
                    }
                }
                Pending::Callee { block, inst, name: callee, line, col } => {
                    let &(idx, arity) = names
                        .get(&callee)
                        .ok_or_else(|| syntax(line, col, format!("call to unknown function `{callee}`")))?;
                    if let StmtKind::Call { callee: c, args, .. } = &mut blocks[block].stmts[inst].kind {
                        if args.len() != arity {
                            return Err(invalid(format!(
                                "call to {callee} passes {} arguments, expected {arity}",
                                args.len()
                            )));
                        }
                        *c = idx;
                    }
                }
            }
        }
        for b in &blocks {
            let Some(last) = b.stmts.last() else {
                return Err(invalid(format!("block {} in {name} is empty", b.label)));
            };
            if !last.kind.is_terminator() {
                return Err(invalid(format!("block {} in {name} does not end in a terminator", b.label)));
            }
            if let Some(s) = b.stmts[..b.stmts.len() - 1].iter().find(|s| s.kind.is_terminator()) {
                return Err(invalid(format!("terminator at {} is not the last statement of its block", s.id)));
            }
        }
        functions.push(Function { name, params, blocks });
    }

    let program = Program { functions };
    for (fi, f) in program.functions.iter().enumerate() {
        let cfg = super::cfg::function_cfg(f);
        if cfg.preds[0].iter().next().is_some() {
            return Err(invalid(format!("entry block {} of {} is a branch target", f.blocks[0].label, f.name)));
        }
        let reach = cfg.reachable();
        if let Some(b) = reach.iter().position(|r| !r) {
            return Err(invalid(format!("unreachable block {} in {}", f.blocks[b].label, f.name)));
        }
        check_defined_before_use(&program, fi, &cfg)?;
    }
    Ok(program)
}

/// Forward must-dataflow: every register read must be written on every path
/// from the function entry (formals count as written at entry).
fn check_defined_before_use(program: &Program, fi: usize, cfg: &super::Cfg) -> Result<(), ParseError> {
    let f = &program.functions[fi];
    let n = f.blocks.len();
    let all: BTreeSet<&Reg> = f.params.iter().chain(f.statements().filter_map(|s| s.kind.def())).collect();
    let mut block_in: Vec<BTreeSet<&Reg>> = vec![all.clone(); n];
    block_in[0] = f.params.iter().collect();
    fn transfer<'a>(f: &'a super::Function, b: usize, mut defined: BTreeSet<&'a Reg>) -> BTreeSet<&'a Reg> {
        defined.extend(f.blocks[b].stmts.iter().filter_map(|s| s.kind.def()));
        defined
    }
    let mut changed = true;
    while changed {
        changed = false;
        for b in 1..n {
            let mut acc: Option<BTreeSet<&Reg>> = None;
            for &p in &cfg.preds[b] {
                let out = transfer(f, p, block_in[p].clone());
                acc = Some(match acc {
                    None => out,
                    Some(a) => a.intersection(&out).copied().collect(),
                });
            }
            let new_in = acc.unwrap_or_default();
            if new_in != block_in[b] {
                block_in[b] = new_in;
                changed = true;
            }
        }
    }
    for (b, block) in f.blocks.iter().enumerate() {
        let mut defined = block_in[b].clone();
        for s in &block.stmts {
            for (_, r) in s.kind.uses() {
                if !defined.contains(r) {
                    return Err(invalid(format!("use of undefined register {r} at {}", s.id)));
                }
            }
            if let Some(d) = s.kind.def() {
                defined.insert(d);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::fixtures::P1;

    #[test]
    fn p1_shape() {
        let p = parse_program(P1).unwrap();
        assert_eq!(p.functions.len(), 1);
        assert_eq!(p.functions[0].blocks.len(), 4);
        // s1..s9 in the fixture comments: nine statements.
        assert_eq!(p.stmt_count(), 9);
        let ids: Vec<String> = p.statements().map(|s| s.id.to_string()).collect();
        assert_eq!(
            ids,
            ["0:0:0", "0:0:1", "0:0:2", "0:0:3", "0:1:0", "0:1:1", "0:2:0", "0:2:1", "0:3:0"]
        );
    }

    #[test]
    fn empty_text_is_missing_main() {
        assert_eq!(parse_program(""), Err(ParseError::Validation("missing main".into())));
    }

    #[test]
    fn undefined_label_is_reported() {
        let bad = P1.replace("br c, b1, b2", "br c, b1, b9");
        assert_eq!(parse_program(&bad), Err(ParseError::Validation("undefined label b9".into())));
    }

    #[test]
    fn use_before_def_on_some_path() {
        let text = "fun main() {\nb0:\n  c = input\n  br c, b1, b2\nb1:\n  y = const 1\n  jmp b3\nb2:\n  jmp b3\nb3:\n  ret y\n}\n";
        match parse_program(text) {
            Err(ParseError::Validation(m)) => assert!(m.contains("undefined register y"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_program("fun main() {\nb0:\n  x = frob 1\n  ret\n}\n") {
            Err(ParseError::Syntax { line, col, .. }) => assert_eq!((line, col), (3, 7)),
            other => panic!("unexpected {other:?}"),
        }
        match parse_program("fun main() {\nb0:\n  x = const $\n}\n") {
            Err(ParseError::Syntax { line: 3, col: 13, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_program("fun main() {\nb0:\n  ret\n"), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn structural_validation() {
        let cases = [
            ("fun main(a) {\nb0:\n  ret\n}\n", "main must take no parameters"),
            ("fun main() {\nb0:\n  x = const 1\n}\n", "does not end in a terminator"),
            ("fun main() {\nb0:\n  ret\n  ret\n}\n", "is not the last statement"),
            ("fun main() {\nb0:\n  ret\nb1:\n  ret\n}\n", "unreachable block b1"),
            ("fun main() {\nb0:\n  jmp b0\n}\n", "is a branch target"),
            ("fun f(a) {\nb0:\n  ret\n}\nfun main() {\nb0:\n  call f()\n  ret\n}\n", "expected 1"),
            ("fun main() {\nb0:\n  ret\n}\nfun main() {\nb0:\n  ret\n}\n", "duplicate function"),
        ];
        for (text, needle) in cases {
            match parse_program(text) {
                Err(ParseError::Validation(m)) => assert!(m.contains(needle), "{m} vs {needle}"),
                other => panic!("{needle}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn calls_resolve_to_function_indices() {
        let p = parse_program(
            "fun id(a) {\nb0:\n  ret a\n}\nfun main() {\nb0:\n  r = call id(4)\n  call id(r)\n  ret r\n}\n",
        )
        .unwrap();
        let main = &p.functions[p.main_index()];
        match &main.blocks[0].stmts[0].kind {
            StmtKind::Call { dst: Some(d), callee: 0, args } => {
                assert_eq!(d.as_str(), "r");
                assert_eq!(args, &vec![Operand::Imm(4)]);
            }
            k => panic!("{k:?}"),
        }
    }
}
