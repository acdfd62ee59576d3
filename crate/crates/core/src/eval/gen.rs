//! Random program generator. Programs fill a small heap array and a couple
//! of stack slots, mix loops, branches and helper calls over them, and carry
//! one injected defect: a store of a large negative value guarded by an
//! input condition. A later check fails when that value reaches it.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EvalError;
use crate::interp::{execute, ExecError, FaultReason};
use crate::ir::{parse_program, Program, StmtId};
use crate::par::{map_range, Parallelism};
use crate::slicer::{dynamic_slice, ProgramFacts};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenParams {
    /// Blocks per function, at most 12.
    pub max_blocks: usize,
    /// Helper call chain length, at most 3.
    pub max_call_depth: usize,
    /// Loop trip-count bound, at most 8; 0 yields loop-free programs.
    pub loop_bound: u32,
    pub inputs_per_program: usize,
    /// Values per input vector, at least 3.
    pub input_len: usize,
    pub max_attempts: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { max_blocks: 12, max_call_depth: 3, loop_bound: 4, inputs_per_program: 8, input_len: 4, max_attempts: 64 }
    }
}

impl GenParams {
    fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidParams(m.to_string()));
        if !(5..=12).contains(&self.max_blocks) {
            return bad("max_blocks must be in 5..=12");
        }
        if self.max_call_depth > 3 {
            return bad("max_call_depth must be at most 3");
        }
        if self.loop_bound > 8 {
            return bad("loop_bound must be at most 8");
        }
        if self.input_len < 3 {
            return bad("input_len must be at least 3");
        }
        if self.inputs_per_program == 0 || self.max_attempts == 0 {
            return bad("inputs_per_program and max_attempts must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GeneratedProgram {
    pub index: usize,
    pub source: String,
    pub program: Program,
    pub inputs: Vec<Vec<i64>>,
    /// Index into `inputs` of the first input that fails.
    pub failing_input: usize,
    /// The injected defect store.
    pub root_cause: StmtId,
}

struct FnText {
    name: String,
    params: Vec<String>,
    blocks: Vec<(String, Vec<String>)>,
    labels: usize,
    regs: usize,
}

impl FnText {
    fn new(name: &str, params: &[&str]) -> Self {
        FnText {
            name: name.to_string(),
            params: params.iter().map(|s| s.to_string()).collect(),
            blocks: vec![("b0".to_string(), Vec::new())],
            labels: 1,
            regs: 0,
        }
    }

    fn label(&mut self) -> String {
        self.labels += 1;
        format!("b{}", self.labels - 1)
    }

    fn reg(&mut self, prefix: &str) -> String {
        self.regs += 1;
        format!("{prefix}{}", self.regs)
    }

    fn emit(&mut self, line: impl Into<String>) {
        self.blocks.last_mut().expect("entry block").1.push(line.into());
    }

    fn open(&mut self, label: String) {
        self.blocks.push((label, Vec::new()));
    }

    fn render(&self, out: &mut String) {
        let _ = writeln!(out, "fun {}({}) {{", self.name, self.params.join(", "));
        for (label, lines) in &self.blocks {
            let _ = writeln!(out, "{label}:");
            for l in lines {
                let _ = writeln!(out, "  {l}");
            }
        }
        out.push_str("}\n");
    }
}

struct Shape<'a> {
    params: &'a GenParams,
    heap_len: i64,
    depth: usize,
}

/// `for i in 0..bound { body(i) }`; three blocks, body must be straight-line.
fn counted_loop(f: &mut FnText, bound: &str, body: impl FnOnce(&mut FnText, &str)) {
    let i = f.reg("i");
    let (head, inner, exit) = (f.label(), f.label(), f.label());
    f.emit(format!("{i} = const 0"));
    f.emit(format!("jmp {head}"));
    f.open(head.clone());
    let c = f.reg("c");
    f.emit(format!("{c} = lt {i}, {bound}"));
    f.emit(format!("br {c}, {inner}, {exit}"));
    f.open(inner);
    body(f, &i);
    f.emit(format!("{i} = add {i}, 1"));
    f.emit(format!("jmp {head}"));
    f.open(exit);
}

fn input(rng: &mut ChaCha8Rng, shape: &Shape) -> String {
    format!("in{}", rng.random_range(0..shape.params.input_len))
}

/// One random main-body piece within `budget` blocks; returns blocks used.
fn main_piece(f: &mut FnText, rng: &mut ChaCha8Rng, shape: &Shape, budget: usize) -> usize {
    let n = shape.heap_len;
    let mut kinds = vec![0, 1];
    if budget >= 2 {
        kinds.push(2);
    }
    if budget >= 3 {
        kinds.push(3);
        if shape.params.loop_bound > 0 {
            kinds.extend([4, 4]);
        }
    }
    match kinds[rng.random_range(0..kinds.len())] {
        0 => {
            let (v, w, t) = (f.reg("v"), f.reg("w"), f.reg("t"));
            f.emit(format!("{v} = load h[{}]", rng.random_range(0..n)));
            f.emit(format!("{w} = load s[1]"));
            f.emit(format!("{t} = add {v}, {w}"));
            f.emit(format!("acc = add acc, {t}"));
            0
        }
        1 if shape.depth > 0 => {
            let r = f.reg("r");
            f.emit(format!("{r} = call f1(h, acc)"));
            f.emit(format!("acc = add acc, {r}"));
            0
        }
        1 => {
            let v = f.reg("v");
            f.emit(format!("{v} = load s[0]"));
            f.emit(format!("acc = add acc, {v}"));
            0
        }
        2 => {
            let (c, then, join) = (f.reg("c"), f.label(), f.label());
            let x = input(rng, shape);
            f.emit(format!("{c} = gt {x}, {}", rng.random_range(0..8)));
            f.emit(format!("br {c}, {then}, {join}"));
            f.open(then);
            let (sv, idx) = (f.reg("v"), f.reg("k"));
            f.emit(format!("{sv} = load s[0]"));
            f.emit(format!("{idx} = rem {}, {n}", input(rng, shape)));
            f.emit(format!("store h[{idx}], {sv}"));
            f.emit(format!("acc = add acc, {sv}"));
            f.emit(format!("jmp {join}"));
            f.open(join);
            2
        }
        3 => {
            let (c, then, other, join) = (f.reg("c"), f.label(), f.label(), f.label());
            let x = f.reg("x");
            f.emit(format!("{c} = lt {}, {}", input(rng, shape), rng.random_range(1..9)));
            f.emit(format!("br {c}, {then}, {other}"));
            f.open(then);
            f.emit(format!("{x} = load s[1]"));
            f.emit(format!("jmp {join}"));
            f.open(other);
            f.emit(format!("{x} = load h[{}]", rng.random_range(0..n)));
            f.emit(format!("jmp {join}"));
            f.open(join);
            f.emit(format!("acc = add acc, {x}"));
            3
        }
        _ => {
            let bound = f.reg("n");
            f.emit(format!("{bound} = rem {}, {}", input(rng, shape), shape.params.loop_bound + 1));
            let writes = rng.random_bool(0.5);
            let nodes = rng.random_bool(0.5);
            counted_loop(f, &bound, |f, i| {
                let (idx, v) = (f.reg("k"), f.reg("v"));
                f.emit(format!("{idx} = rem {i}, {n}"));
                f.emit(format!("{v} = load h[{idx}]"));
                f.emit(format!("acc = add acc, {v}"));
                if writes {
                    let v1 = f.reg("v");
                    f.emit(format!("{v1} = add {v}, 1"));
                    f.emit(format!("store h[{idx}], {v1}"));
                }
                if nodes {
                    let (o, w) = (f.reg("o"), f.reg("w"));
                    f.emit(format!("{o} = alloc 1, heap"));
                    f.emit(format!("store {o}[0], {v}"));
                    f.emit(format!("{w} = load {o}[0]"));
                    f.emit(format!("acc = add acc, {w}"));
                }
            });
            3
        }
    }
}

fn helper(d: usize, rng: &mut ChaCha8Rng, shape: &Shape) -> FnText {
    let n = shape.heap_len;
    let mut f = FnText::new(&format!("f{d}"), &["p", "a"]);
    f.emit("l = alloc 1, stack");
    f.emit("store l[0], a");
    f.emit("t = load l[0]");
    f.emit(format!("k = const {}", rng.random_range(0..n)));
    f.emit("u = load p[k]");
    f.emit("r = add t, u");
    if rng.random_bool(0.5) {
        f.emit("o = alloc 1, heap");
        f.emit("store o[0], r");
        f.emit("w = load o[0]");
        f.emit("r = add r, w");
    }
    if shape.params.max_blocks >= 4 && rng.random_bool(0.4) {
        let (then, other, join) = (f.label(), f.label(), f.label());
        f.emit(format!("c = gt a, {}", rng.random_range(0..10)));
        f.emit(format!("br c, {then}, {other}"));
        f.open(then);
        f.emit(format!("x = load p[{}]", rng.random_range(0..n)));
        f.emit(format!("jmp {join}"));
        f.open(other);
        f.emit("x = const 1");
        f.emit(format!("jmp {join}"));
        f.open(join);
        f.emit("r = add r, x");
    }
    if d < shape.depth {
        f.emit(format!("q = call f{}(p, r)", d + 1));
        f.emit("r = add r, q");
    }
    f.emit("ret r");
    f
}

struct Draft {
    source: String,
    inputs: Vec<Vec<i64>>,
    defect_label: String,
}

fn draft(rng: &mut ChaCha8Rng, params: &GenParams) -> Draft {
    let shape = Shape {
        params,
        heap_len: rng.random_range(3..=6),
        depth: rng.random_range(0..=params.max_call_depth),
    };
    let n = shape.heap_len;
    let mut f = FnText::new("main", &[]);
    for k in 0..params.input_len {
        f.emit(format!("in{k} = input"));
    }
    f.emit(format!("h = alloc {n}, heap"));
    f.emit("s = alloc 2, stack");
    f.emit("store s[0], in1");
    f.emit(format!("store s[1], {}", rng.random_range(0..10)));
    f.emit("acc = const 0");

    // entry, defect (2) and check (2) are fixed
    let mut budget = params.max_blocks - 5;
    let base = rng.random_range(0..5);
    if params.loop_bound > 0 && budget >= 3 && rng.random_bool(0.7) {
        counted_loop(&mut f, &n.to_string(), |f, i| {
            let v = f.reg("v");
            f.emit(format!("{v} = add {i}, {base}"));
            f.emit(format!("store h[{i}], {v}"));
        });
        budget -= 3;
    } else {
        for k in 0..n {
            f.emit(format!("store h[{k}], {}", base + k));
        }
    }
    for _ in 0..rng.random_range(1..=3) {
        budget -= main_piece(&mut f, rng, &shape, budget);
    }

    let magic = rng.random_range(0..10);
    let (defect, join) = (f.label(), f.label());
    f.emit(format!("j = rem in2, {n}"));
    f.emit(format!("g = eq in0, {magic}"));
    f.emit(format!("br g, {defect}, {join}"));
    f.open(defect.clone());
    f.emit(format!("store h[j], {}", -100_000 - rng.random_range(0..1000)));
    f.emit(format!("jmp {join}"));
    f.open(join);

    for _ in 0..rng.random_range(0..=2) {
        budget -= main_piece(&mut f, rng, &shape, budget);
    }

    let (fail, ok) = (f.label(), f.label());
    f.emit("t = load h[j]");
    f.emit("t2 = add t, acc");
    f.emit("bad = lt t2, 0");
    f.emit(format!("br bad, {fail}, {ok}"));
    f.open(fail);
    f.emit("fail t2");
    f.open(ok);
    f.emit("ret acc");

    let mut source = String::new();
    f.render(&mut source);
    for d in 1..=shape.depth {
        source.push('\n');
        helper(d, rng, &shape).render(&mut source);
    }

    let mut inputs: Vec<Vec<i64>> = (0..params.inputs_per_program)
        .map(|_| (0..params.input_len).map(|_| rng.random_range(0..10)).collect())
        .collect();
    let forced = rng.random_range(0..inputs.len());
    inputs[forced][0] = magic;
    Draft { source, inputs, defect_label: defect }
}

fn accept(index: usize, d: Draft) -> Option<GeneratedProgram> {
    let program = parse_program(&d.source).unwrap_or_else(|e| panic!("generator emitted invalid IR: {e}\n{}", d.source));
    let main = program.main_index();
    let block = program.functions[main].blocks.iter().position(|b| b.label == d.defect_label)?;
    let root_cause = StmtId::new(main as u32, block as u32, 0);

    let mut failing = None;
    for (k, input) in d.inputs.iter().enumerate() {
        let trace = match execute(&program, input, k as u64) {
            Ok(t) => t,
            Err(ExecError::ResourceLimit { .. }) => return None,
        };
        match trace.fault() {
            Some((_, FaultReason::Fail)) if failing.is_none() => failing = Some((k, trace)),
            Some((_, FaultReason::Fail)) | None => {}
            Some(_) => return None,
        }
    }
    let (failing_input, trace) = failing?;
    let (seed, _) = trace.fault()?;
    let facts = ProgramFacts::new(&program);
    let slice = dynamic_slice(&facts, &trace, seed).ok()?;
    if !slice.statements().contains(&root_cause) {
        return None;
    }
    Some(GeneratedProgram { index, source: d.source, program, inputs: d.inputs, failing_input, root_cause })
}

/// Program `index` of the corpus seeded by `seed`; independent of every
/// other index.
pub fn generate_program(seed: u64, index: usize, params: &GenParams) -> Result<GeneratedProgram, EvalError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    for _ in 0..params.max_attempts {
        if let Some(p) = accept(index, draft(&mut rng, params)) {
            return Ok(p);
        }
    }
    Err(EvalError::GenerationExhausted { index, attempts: params.max_attempts })
}

pub fn generate_corpus(
    seed: u64,
    n_programs: usize,
    params: &GenParams,
    par: Parallelism,
) -> Result<Vec<GeneratedProgram>, EvalError> {
    params.validate()?;
    map_range(n_programs, par, |i| generate_program(seed, i, params)).into_iter().collect()
}
