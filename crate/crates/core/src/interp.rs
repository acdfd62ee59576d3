//! Reference interpreter. Produces the ground-truth event stream of one run.
//!
//! Pointers are structural `(object, offset)` pairs and every object carries
//! its allocation site and calling context, so dependence matching never
//! depends on numeric addresses. [`AddressSpace`] renders display addresses
//! with a per-run salt.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ir::{BinOp, Operand, Program, Reg, Region, StmtId, StmtKind};

pub type ObjectId = u64;

/// Innermost two call sites on the stack at allocation time; `None` pads
/// shallower stacks. Rendered `c1,c2` with `_` for padding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContextKey(pub [Option<StmtId>; 2]);

impl ContextKey {
    pub const ROOT: ContextKey = ContextKey([None, None]);
}

impl fmt::Display for ContextKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let part = |s: Option<StmtId>| s.map_or_else(|| "_".to_string(), |s| s.to_string());
        write!(f, "{},{}", part(self.0[0]), part(self.0[1]))
    }
}

impl FromStr for ContextKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once(',').ok_or_else(|| format!("malformed context `{s}`"))?;
        let part = |p: &str| -> Result<Option<StmtId>, String> {
            match p.trim() {
                "_" => Ok(None),
                other => other.parse().map(Some).map_err(|e| format!("{e}")),
            }
        };
        Ok(ContextKey([part(a)?, part(b)?]))
    }
}

impl Serialize for ContextKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ContextKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MemLoc {
    pub object: ObjectId,
    pub offset: u64,
    pub region: Region,
    pub site: StmtId,
    pub context: ContextKey,
}

/// Pointer tag in `[0x0001, 0xfffe]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct Tag(u16);

impl Tag {
    pub const MIN: u16 = 0x0001;
    pub const MAX: u16 = 0xfffe;

    pub fn new(v: u16) -> Option<Tag> {
        (Self::MIN..=Self::MAX).contains(&v).then_some(Tag(v))
    }

    pub fn get(self) -> u16 {
        self.0
    }
}

impl TryFrom<u16> for Tag {
    type Error = String;

    fn try_from(v: u16) -> Result<Self, Self::Error> {
        Tag::new(v).ok_or_else(|| format!("tag {v:#06x} outside [0x0001, 0xfffe]"))
    }
}

impl From<Tag> for u16 {
    fn from(t: Tag) -> u16 {
        t.0
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d1_049b_b133_111e);
    x ^ (x >> 31)
}

/// Display-only address rendering. Never used for dependence matching.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AddressSpace {
    salt: u64,
}

impl AddressSpace {
    const LOW48: u64 = (1 << 48) - 1;

    pub fn new(salt: u64) -> Self {
        AddressSpace { salt }
    }

    pub fn for_run(run_id: u64) -> Self {
        AddressSpace::new(splitmix64(run_id ^ 0x5a17_5a17))
    }

    /// Low 48 bits: salted object base plus word offset; high 16 bits: tag or 0.
    pub fn render(&self, loc: &MemLoc, tag: Option<Tag>) -> u64 {
        let base = splitmix64(self.salt ^ splitmix64(loc.object)) & 0x0000_7fff_ffff_f000;
        let low = base.wrapping_add(loc.offset * 8) & Self::LOW48;
        low | (tag.map_or(0, |t| t.get() as u64) << 48)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultReason {
    Fail,
    UninitializedRead,
    NullDereference,
    UseAfterFree,
    OutOfBounds,
    InvalidFree,
    DoubleFree,
    DivisionByZero,
    PointerArithmetic,
    BadAllocationSize,
}

impl fmt::Display for FaultReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FaultReason::Fail => "fail",
            FaultReason::UninitializedRead => "uninitialized read",
            FaultReason::NullDereference => "null dereference",
            FaultReason::UseAfterFree => "use after free",
            FaultReason::OutOfBounds => "out of bounds",
            FaultReason::InvalidFree => "invalid free",
            FaultReason::DoubleFree => "double free",
            FaultReason::DivisionByZero => "division by zero",
            FaultReason::PointerArithmetic => "pointer arithmetic",
            FaultReason::BadAllocationSize => "bad allocation size",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "ev", rename_all = "lowercase")]
pub enum Event {
    Exec { stmt: StmtId },
    Branch { stmt: StmtId, taken: bool },
    Read { stmt: StmtId, loc: MemLoc },
    Write { stmt: StmtId, loc: MemLoc },
    Alloc { stmt: StmtId, object: ObjectId, size: u64, region: Region, context: ContextKey },
    Free { stmt: StmtId, object: ObjectId },
    Call { stmt: StmtId, callee: String },
    /// `return_to` is the statement after the call site; `None` when `main` returns.
    Ret { stmt: StmtId, return_to: Option<StmtId> },
    Fault { stmt: StmtId, reason: FaultReason },
}

impl Event {
    pub fn stmt(&self) -> StmtId {
        match self {
            Event::Exec { stmt }
            | Event::Branch { stmt, .. }
            | Event::Read { stmt, .. }
            | Event::Write { stmt, .. }
            | Event::Alloc { stmt, .. }
            | Event::Free { stmt, .. }
            | Event::Call { stmt, .. }
            | Event::Ret { stmt, .. }
            | Event::Fault { stmt, .. } => *stmt,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub run_id: u64,
    pub input: Vec<i64>,
    pub failed: bool,
    pub digest: String,
}

/// Complete ordered event stream of one run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FullTrace {
    pub run_id: u64,
    pub input: Vec<i64>,
    pub failed: bool,
    pub digest: String,
    pub events: Vec<Event>,
}

impl FullTrace {
    pub fn executed(&self) -> BTreeSet<StmtId> {
        self.exec_sequence().collect()
    }

    pub fn exec_sequence(&self) -> impl Iterator<Item = StmtId> + '_ {
        self.events.iter().filter_map(|e| match e {
            Event::Exec { stmt } => Some(*stmt),
            _ => None,
        })
    }

    /// Block entries in order, as `(function, block)`. A block is entered when
    /// its first statement executes; returning into the middle of a block is
    /// not an entry.
    pub fn block_sequence(&self) -> Vec<(u32, u32)> {
        self.exec_sequence()
            .filter(|s| s.inst == 0)
            .map(|s| (s.func, s.block))
            .collect()
    }

    pub fn fault(&self) -> Option<(StmtId, FaultReason)> {
        match self.events.last() {
            Some(Event::Fault { stmt, reason }) => Some((*stmt, *reason)),
            _ => None,
        }
    }

    pub fn header(&self) -> TraceHeader {
        TraceHeader {
            run_id: self.run_id,
            input: self.input.clone(),
            failed: self.failed,
            digest: self.digest.clone(),
        }
    }

    /// JSON Lines: header, then one event per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &self.header())?;
        w.write_all(b"\n")?;
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<FullTrace, serde_json::Error> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| serde::de::Error::custom("empty trace file"))?
            .map_err(serde_json::Error::io)?;
        let header: TraceHeader = serde_json::from_str(&first)?;
        let mut events = Vec::new();
        for line in lines {
            let line = line.map_err(serde_json::Error::io)?;
            if !line.trim().is_empty() {
                events.push(serde_json::from_str(&line)?);
            }
        }
        Ok(FullTrace {
            run_id: header.run_id,
            input: header.input,
            failed: header.failed,
            digest: header.digest,
            events,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecConfig {
    pub step_budget: u64,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig { step_budget: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("step budget of {budget} statements exhausted (nontermination?)")]
    ResourceLimit { budget: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Value {
    Int(i64),
    Ptr { object: ObjectId, offset: i64 },
}

struct Object {
    size: u64,
    region: Region,
    site: StmtId,
    context: ContextKey,
    live: bool,
    cells: Vec<Option<Value>>,
}

struct Frame<'p> {
    func: usize,
    block: usize,
    inst: usize,
    regs: HashMap<&'p str, Value>,
    stack_objects: Vec<ObjectId>,
    call_site: Option<StmtId>,
}

struct Machine<'p> {
    program: &'p Program,
    input: &'p [i64],
    next_input: usize,
    frames: Vec<Frame<'p>>,
    objects: Vec<Object>,
    events: Vec<Event>,
}

enum Step {
    Continue,
    Finished,
    Fault(FaultReason),
}

impl<'p> Machine<'p> {
    fn frame(&mut self) -> &mut Frame<'p> {
        self.frames.last_mut().expect("at least one frame while running")
    }

    fn value(&self, op: &Operand) -> Value {
        match op {
            Operand::Imm(v) => Value::Int(*v),
            Operand::Reg(r) => self.reg(r),
        }
    }

    fn reg(&self, r: &Reg) -> Value {
        // validated programs define every register before use
        *self
            .frames
            .last()
            .and_then(|f| f.regs.get(r.as_str()))
            .unwrap_or_else(|| panic!("register {r} read before definition"))
    }

    fn set(&mut self, r: &'p Reg, v: Value) {
        self.frame().regs.insert(r.as_str(), v);
    }

    fn context(&self) -> ContextKey {
        let mut sites = self.frames.iter().rev().filter_map(|f| f.call_site);
        ContextKey([sites.next(), sites.next()])
    }

    /// Resolves `ptr[off]` to a live in-bounds location.
    fn locate(&self, ptr: Value, off: Value) -> Result<MemLoc, FaultReason> {
        let (object, base) = match ptr {
            Value::Ptr { object, offset } => (object, offset),
            Value::Int(_) => return Err(FaultReason::NullDereference),
        };
        let off = match off {
            Value::Int(v) => v,
            Value::Ptr { .. } => return Err(FaultReason::PointerArithmetic),
        };
        let obj = &self.objects[object as usize];
        if !obj.live {
            return Err(FaultReason::UseAfterFree);
        }
        let eff = base.checked_add(off).ok_or(FaultReason::OutOfBounds)?;
        if eff < 0 || eff as u64 >= obj.size {
            return Err(FaultReason::OutOfBounds);
        }
        Ok(MemLoc { object, offset: eff as u64, region: obj.region, site: obj.site, context: obj.context })
    }

    fn step(&mut self) -> Step {
        let program = self.program;
        let (fi, bi, ii) = {
            let f = self.frames.last().expect("running");
            (f.func, f.block, f.inst)
        };
        let stmt = &program.functions[fi].blocks[bi].stmts[ii];
        let id = stmt.id;
        self.events.push(Event::Exec { stmt: id });
        self.frame().inst += 1;

        match &stmt.kind {
            StmtKind::Const { dst, value } => self.set(dst, Value::Int(*value)),
            StmtKind::BinOp { dst, op, lhs, rhs } => {
                let (a, b) = match (self.value(lhs), self.value(rhs)) {
                    (Value::Int(a), Value::Int(b)) => (a, b),
                    _ => return Step::Fault(FaultReason::PointerArithmetic),
                };
                let v = match op {
                    BinOp::Add => a.wrapping_add(b),
                    BinOp::Sub => a.wrapping_sub(b),
                    BinOp::Mul => a.wrapping_mul(b),
                    BinOp::Div | BinOp::Rem if b == 0 => return Step::Fault(FaultReason::DivisionByZero),
                    BinOp::Div => a.wrapping_div(b),
                    BinOp::Rem => a.wrapping_rem(b),
                    BinOp::And => a & b,
                    BinOp::Or => a | b,
                    BinOp::Xor => a ^ b,
                    BinOp::Shl => a.wrapping_shl((b & 63) as u32),
                    BinOp::Shr => a.wrapping_shr((b & 63) as u32),
                    BinOp::Eq => (a == b) as i64,
                    BinOp::Ne => (a != b) as i64,
                    BinOp::Lt => (a < b) as i64,
                    BinOp::Le => (a <= b) as i64,
                    BinOp::Gt => (a > b) as i64,
                    BinOp::Ge => (a >= b) as i64,
                };
                self.set(dst, Value::Int(v));
            }
            StmtKind::Copy { dst, src } => {
                let v = self.reg(src);
                self.set(dst, v);
            }
            StmtKind::Input { dst } => {
                let v = self.input.get(self.next_input).copied().unwrap_or(0);
                self.next_input += 1;
                self.set(dst, Value::Int(v));
            }
            StmtKind::Alloc { dst, size, region } => {
                let size = match self.value(size) {
                    Value::Int(n) if (1..=1 << 20).contains(&n) => n as u64,
                    _ => return Step::Fault(FaultReason::BadAllocationSize),
                };
                let object = self.objects.len() as ObjectId;
                let context = self.context();
                self.objects.push(Object {
                    size,
                    region: *region,
                    site: id,
                    context,
                    live: true,
                    cells: vec![None; size as usize],
                });
                if *region == Region::Stack {
                    self.frame().stack_objects.push(object);
                }
                self.events.push(Event::Alloc { stmt: id, object, size, region: *region, context });
                self.set(dst, Value::Ptr { object, offset: 0 });
            }
            StmtKind::Free { ptr } => match self.reg(ptr) {
                Value::Ptr { object, offset: 0 } => {
                    let obj = &mut self.objects[object as usize];
                    if obj.region != Region::Heap {
                        return Step::Fault(FaultReason::InvalidFree);
                    }
                    if !obj.live {
                        return Step::Fault(FaultReason::DoubleFree);
                    }
                    obj.live = false;
                    self.events.push(Event::Free { stmt: id, object });
                }
                Value::Ptr { .. } => return Step::Fault(FaultReason::InvalidFree),
                Value::Int(_) => return Step::Fault(FaultReason::NullDereference),
            },
            StmtKind::Load { dst, ptr, offset } => {
                let loc = match self.locate(self.reg(ptr), self.value(offset)) {
                    Ok(l) => l,
                    Err(r) => return Step::Fault(r),
                };
                let Some(v) = self.objects[loc.object as usize].cells[loc.offset as usize] else {
                    return Step::Fault(FaultReason::UninitializedRead);
                };
                self.events.push(Event::Read { stmt: id, loc });
                self.set(dst, v);
            }
            StmtKind::Store { ptr, offset, value } => {
                let loc = match self.locate(self.reg(ptr), self.value(offset)) {
                    Ok(l) => l,
                    Err(r) => return Step::Fault(r),
                };
                let v = self.value(value);
                self.objects[loc.object as usize].cells[loc.offset as usize] = Some(v);
                self.events.push(Event::Write { stmt: id, loc });
            }
            StmtKind::GetPtr { dst, base, offset } => {
                let v = match (self.reg(base), self.value(offset)) {
                    (Value::Ptr { object, offset }, Value::Int(k)) => {
                        Value::Ptr { object, offset: offset.wrapping_add(k) }
                    }
                    (Value::Int(a), Value::Int(k)) => Value::Int(a.wrapping_add(k)),
                    (_, Value::Ptr { .. }) => return Step::Fault(FaultReason::PointerArithmetic),
                };
                self.set(dst, v);
            }
            StmtKind::Branch { cond, then_block, else_block } => {
                let taken = match self.reg(cond) {
                    Value::Int(v) => v != 0,
                    Value::Ptr { .. } => true,
                };
                self.events.push(Event::Branch { stmt: id, taken });
                let f = self.frame();
                f.block = if taken { *then_block } else { *else_block };
                f.inst = 0;
            }
            StmtKind::Jump { target } => {
                let f = self.frame();
                f.block = *target;
                f.inst = 0;
            }
            StmtKind::Call { callee, args, .. } => {
                let callee_fn = &program.functions[*callee];
                let values: Vec<Value> = args.iter().map(|a| self.value(a)).collect();
                let regs = callee_fn.params.iter().map(|p| p.as_str()).zip(values).collect();
                self.events.push(Event::Call { stmt: id, callee: callee_fn.name.clone() });
                self.frames.push(Frame {
                    func: *callee,
                    block: 0,
                    inst: 0,
                    regs,
                    stack_objects: Vec::new(),
                    call_site: Some(id),
                });
            }
            StmtKind::Ret { value } => {
                let v = value.as_ref().map(|op| self.value(op));
                let frame = self.frames.pop().expect("running");
                for object in frame.stack_objects {
                    self.objects[object as usize].live = false;
                    self.events.push(Event::Free { stmt: id, object });
                }
                let Some(site) = frame.call_site else {
                    self.events.push(Event::Ret { stmt: id, return_to: None });
                    return Step::Finished;
                };
                let return_to = StmtId::new(site.func, site.block, site.inst + 1);
                self.events.push(Event::Ret { stmt: id, return_to: Some(return_to) });
                if let StmtKind::Call { dst: Some(dst), .. } = &program.get(site).kind {
                    self.set(dst, v.unwrap_or(Value::Int(0)));
                }
            }
            StmtKind::Fail { .. } => return Step::Fault(FaultReason::Fail),
        }
        Step::Continue
    }
}

/// Runs `program` on `input` with the default step budget.
pub fn execute(program: &Program, input: &[i64], run_id: u64) -> Result<FullTrace, ExecError> {
    execute_with(program, input, run_id, &ExecConfig::default())
}

pub fn execute_with(
    program: &Program,
    input: &[i64],
    run_id: u64,
    config: &ExecConfig,
) -> Result<FullTrace, ExecError> {
    let mut m = Machine {
        program,
        input,
        next_input: 0,
        frames: vec![Frame {
            func: program.main_index(),
            block: 0,
            inst: 0,
            regs: HashMap::new(),
            stack_objects: Vec::new(),
            call_site: None,
        }],
        objects: Vec::new(),
        events: Vec::new(),
    };
    let mut steps = 0u64;
    let failed = loop {
        if steps >= config.step_budget {
            return Err(ExecError::ResourceLimit { budget: config.step_budget });
        }
        steps += 1;
        match m.step() {
            Step::Continue => {}
            Step::Finished => break false,
            Step::Fault(reason) => {
                let stmt = m.events.last().expect("exec event precedes a fault").stmt();
                m.events.push(Event::Fault { stmt, reason });
                break true;
            }
        }
    };
    Ok(FullTrace {
        run_id,
        input: input.to_vec(),
        failed,
        digest: program.digest(),
        events: m.events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{fixtures::P1, parse_program};

    fn sid(s: &str) -> StmtId {
        s.parse().unwrap()
    }

    fn ids(v: &[&str]) -> Vec<StmtId> {
        v.iter().map(|s| sid(s)).collect()
    }

    #[test]
    fn p1_failing_run() {
        let p = parse_program(P1).unwrap();
        let t = execute(&p, &[1], 7).unwrap();
        assert!(t.failed);
        assert_eq!(t.run_id, 7);
        assert_eq!(
            t.exec_sequence().collect::<Vec<_>>(),
            ids(&["0:0:0", "0:0:1", "0:0:2", "0:0:3", "0:1:0", "0:1:1"])
        );
        assert_eq!(t.fault(), Some((sid("0:1:1"), FaultReason::Fail)));
        let writes: Vec<_> = t
            .events
            .iter()
            .filter_map(|e| match e {
                Event::Write { stmt, loc } => Some((*stmt, loc.object, loc.offset)),
                _ => None,
            })
            .collect();
        let reads: Vec<_> = t
            .events
            .iter()
            .filter_map(|e| match e {
                Event::Read { stmt, loc } => Some((*stmt, loc.object, loc.offset)),
                _ => None,
            })
            .collect();
        assert_eq!(writes, vec![(sid("0:0:1"), 0, 0)]);
        assert_eq!(reads, vec![(sid("0:1:0"), 0, 0)]);
    }

    #[test]
    fn p1_passing_run_and_missing_input() {
        let p = parse_program(P1).unwrap();
        let t0 = execute(&p, &[0], 0).unwrap();
        assert!(!t0.failed);
        assert_eq!(
            t0.exec_sequence().collect::<Vec<_>>(),
            ids(&["0:0:0", "0:0:1", "0:0:2", "0:0:3", "0:2:0", "0:2:1", "0:3:0"])
        );
        let empty = execute(&p, &[], 0).unwrap();
        assert_eq!(empty, t0.clone().with_input(vec![]));
    }

    impl FullTrace {
        fn with_input(mut self, input: Vec<i64>) -> Self {
            self.input = input;
            self
        }
    }

    #[test]
    fn step_budget_guards_nontermination() {
        let p = parse_program("fun main() {\nb0:\n  jmp b1\nb1:\n  jmp b1\n}\n").unwrap();
        let err = execute_with(&p, &[], 0, &ExecConfig { step_budget: 1000 }).unwrap_err();
        assert_eq!(err, ExecError::ResourceLimit { budget: 1000 });
    }

    #[test]
    fn memory_faults() {
        let cases = [
            ("x = alloc 2, heap\n  free x\n  v = load x[0]\n  ret", FaultReason::UseAfterFree),
            ("x = const 0\n  v = load x[0]\n  ret", FaultReason::NullDereference),
            ("x = alloc 2, heap\n  v = load x[1]\n  ret", FaultReason::UninitializedRead),
            ("x = alloc 2, heap\n  store x[2], 1\n  ret", FaultReason::OutOfBounds),
            ("x = alloc 2, heap\n  free x\n  free x\n  ret", FaultReason::DoubleFree),
            ("x = alloc 2, stack\n  free x\n  ret", FaultReason::InvalidFree),
            ("x = const 1\n  y = div x, 0\n  ret", FaultReason::DivisionByZero),
            ("x = alloc 2, heap\n  y = add x, 1\n  ret", FaultReason::PointerArithmetic),
        ];
        for (body, reason) in cases {
            let p = parse_program(&format!("fun main() {{\nb0:\n  {body}\n}}\n")).unwrap();
            let t = execute(&p, &[], 0).unwrap();
            assert!(t.failed, "{body}");
            assert_eq!(t.fault().map(|f| f.1), Some(reason), "{body}");
        }
    }

    #[test]
    fn calls_contexts_and_stack_lifetime() {
        let p = parse_program(
            "fun mk() {\nb0:\n  h = alloc 1, heap\n  s = alloc 1, stack\n  store s[0], 3\n  v = load s[0]\n  store h[0], v\n  ret h\n}\nfun main() {\nb0:\n  a = call mk()\n  b = call mk()\n  r = load b[0]\n  ret r\n}\n",
        )
        .unwrap();
        let t = execute(&p, &[], 0).unwrap();
        assert!(!t.failed);
        let contexts: Vec<ContextKey> = t
            .events
            .iter()
            .filter_map(|e| match e {
                Event::Alloc { region: Region::Heap, context, .. } => Some(*context),
                _ => None,
            })
            .collect();
        assert_eq!(
            contexts,
            vec![ContextKey([Some(sid("1:0:0")), None]), ContextKey([Some(sid("1:0:1")), None])]
        );
        let rets: Vec<_> = t
            .events
            .iter()
            .filter_map(|e| match e {
                Event::Ret { return_to, .. } => Some(*return_to),
                _ => None,
            })
            .collect();
        assert_eq!(rets, vec![Some(sid("1:0:1")), Some(sid("1:0:2")), None]);
        let frees = t.events.iter().filter(|e| matches!(e, Event::Free { .. })).count();
        assert_eq!(frees, 2, "stack objects die with their frame");
        assert_eq!(t.block_sequence(), vec![(1, 0), (0, 0), (0, 0)]);
    }

    #[test]
    fn context_key_text_round_trip() {
        for k in [ContextKey::ROOT, ContextKey([Some(sid("0:1:2")), None]), ContextKey([Some(sid("1:0:0")), Some(sid("0:0:3"))])] {
            assert_eq!(k.to_string().parse::<ContextKey>().unwrap(), k);
        }
        assert_eq!(ContextKey::ROOT.to_string(), "_,_");
    }

    #[test]
    fn address_rendering() {
        let loc = MemLoc { object: 3, offset: 1, region: Region::Heap, site: sid("0:0:0"), context: ContextKey::ROOT };
        let space = AddressSpace::new(11);
        assert_eq!(space.render(&loc, None) >> 48, 0);
        assert_eq!(space.render(&loc, Tag::new(0x0001)) >> 48, 0x0001);
        assert_eq!(space.render(&loc, Tag::new(0xfffe)) >> 48, 0xfffe);
        let other = AddressSpace::new(12);
        assert_ne!(space.render(&loc, None), other.render(&loc, None));
        assert!(Tag::new(0).is_none() && Tag::new(0xffff).is_none());
    }

    #[test]
    fn jsonl_round_trip_and_field_order() {
        let p = parse_program(P1).unwrap();
        let t = execute(&p, &[1], 3).unwrap();
        let text = t.to_jsonl();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("{\"run_id\":3,\"input\":[1],\"failed\":true"));
        assert_eq!(lines.next().unwrap(), "{\"ev\":\"exec\",\"stmt\":\"0:0:0\"}");
        let back = FullTrace::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, t);
        assert_eq!(execute(&p, &[1], 3).unwrap().to_jsonl(), text);
    }
}
