//! Compressed control-flow record: one taken/not-taken bit per executed
//! conditional branch and one target packet per return. Direct jumps and
//! calls are recovered from the program during decoding.

use std::collections::BTreeSet;

use serde::de::Error as _;
use serde::ser::SerializeTuple;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::interp::{Event, FullTrace};
use crate::ir::{control_deps, Program, StmtId, StmtKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Packet {
    /// Conditional branch outcome.
    Tnt(bool),
    /// Return target: the statement after the call site, or `None` when
    /// `main` returns.
    Tip(Option<StmtId>),
}

impl Serialize for Packet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut t = s.serialize_tuple(2)?;
        match self {
            Packet::Tnt(b) => {
                t.serialize_element("T")?;
                t.serialize_element(&u8::from(*b))?;
            }
            Packet::Tip(target) => {
                t.serialize_element("I")?;
                match target {
                    Some(id) => t.serialize_element(id)?,
                    None => t.serialize_element("exit")?,
                }
            }
        }
        t.end()
    }
}

impl<'de> Deserialize<'de> for Packet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (kind, payload) = <(String, serde_json::Value)>::deserialize(d)?;
        match (kind.as_str(), payload) {
            ("T", serde_json::Value::Number(n)) => match n.as_u64() {
                Some(0) => Ok(Packet::Tnt(false)),
                Some(1) => Ok(Packet::Tnt(true)),
                _ => Err(D::Error::custom(format!("TNT payload must be 0 or 1, got {n}"))),
            },
            ("I", serde_json::Value::String(s)) if s == "exit" => Ok(Packet::Tip(None)),
            ("I", serde_json::Value::String(s)) => s.parse().map(|id| Packet::Tip(Some(id))).map_err(D::Error::custom),
            (k, v) => Err(D::Error::custom(format!("unknown packet [{k:?}, {v}]"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchTrace {
    pub entry: String,
    pub packets: Vec<Packet>,
    pub run_id: u64,
    pub failed: bool,
    pub seed: Option<StmtId>,
    pub digest: String,
}

/// Compresses a full trace: one bit per conditional branch, one target per
/// return, plus the faulting statement as the slicing seed.
pub fn encode_branch_trace(trace: &FullTrace) -> BranchTrace {
    let packets = trace
        .events
        .iter()
        .filter_map(|e| match e {
            Event::Branch { taken, .. } => Some(Packet::Tnt(*taken)),
            Event::Ret { return_to, .. } => Some(Packet::Tip(*return_to)),
            _ => None,
        })
        .collect();
    BranchTrace {
        entry: "main".to_string(),
        packets,
        run_id: trace.run_id,
        failed: trace.failed,
        seed: trace.fault().map(|(s, _)| s),
        digest: trace.digest.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("program mismatch: trace digest {trace} does not match program digest {program}")]
    ProgramMismatch { trace: String, program: String },
    #[error("unknown entry function `{0}`")]
    UnknownEntry(String),
    #[error("packets exhausted at {at}")]
    PacketsExhausted { at: StmtId },
    #[error("expected {expected} packet at {at}, found {found:?}")]
    UnexpectedPacket { at: StmtId, expected: &'static str, found: Packet },
    #[error("return at {at} targets {found:?}, call stack expects {expected:?}")]
    TipMismatch { at: StmtId, expected: Option<StmtId>, found: Option<StmtId> },
    #[error("{0} packets left over after the run ended")]
    TrailingPackets(usize),
    #[error("reached `fail` at {0} without a matching fault seed")]
    UnexpectedFail(StmtId),
    #[error("failed trace carries no seed statement")]
    MissingSeed,
    #[error("decoding exceeded {0} statements")]
    StepBudget(u64),
}

/// Execution recovered from a branch trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodedRun {
    /// Block entries as `(function, block)`, in execution order.
    pub blocks: Vec<(u32, u32)>,
    pub executed: BTreeSet<StmtId>,
    /// (controller, controlled) control-dependence arcs among executed statements.
    pub control_arcs: BTreeSet<(StmtId, StmtId)>,
    pub failed: bool,
    pub seed: Option<StmtId>,
}

pub const DECODE_STEP_BUDGET: u64 = 10_000_000;

/// Replays the program along the recorded packets.
///
/// A failed run ends at the first execution of the seed statement after the
/// last packet is consumed: between packets execution is fully determined by
/// the program text, and a run that loops without a conditional branch could
/// not have terminated.
pub fn decode_branch_trace(program: &Program, bt: &BranchTrace) -> Result<DecodedRun, DecodeError> {
    let digest = program.digest();
    if bt.digest != digest {
        return Err(DecodeError::ProgramMismatch { trace: bt.digest.clone(), program: digest });
    }
    let entry = program
        .function_index(&bt.entry)
        .ok_or_else(|| DecodeError::UnknownEntry(bt.entry.clone()))?;
    if bt.failed && bt.seed.is_none() {
        return Err(DecodeError::MissingSeed);
    }

    let mut packets = bt.packets.iter().copied().peekable();
    let mut returns: Vec<StmtId> = Vec::new();
    let mut cur = StmtId::new(entry as u32, 0, 0);
    let mut blocks = vec![(cur.func, cur.block)];
    let mut executed = BTreeSet::new();
    let mut steps = 0u64;

    loop {
        steps += 1;
        if steps > DECODE_STEP_BUDGET {
            return Err(DecodeError::StepBudget(DECODE_STEP_BUDGET));
        }
        executed.insert(cur);
        if bt.failed && packets.peek().is_none() && Some(cur) == bt.seed {
            break;
        }
        let goto = |f: u32, b: usize, blocks: &mut Vec<(u32, u32)>| {
            blocks.push((f, b as u32));
            StmtId::new(f, b as u32, 0)
        };
        cur = match &program.get(cur).kind {
            StmtKind::Branch { then_block, else_block, .. } => match packets.next() {
                Some(Packet::Tnt(taken)) => {
                    goto(cur.func, if taken { *then_block } else { *else_block }, &mut blocks)
                }
                Some(found) => return Err(DecodeError::UnexpectedPacket { at: cur, expected: "TNT", found }),
                None => return Err(DecodeError::PacketsExhausted { at: cur }),
            },
            StmtKind::Jump { target } => goto(cur.func, *target, &mut blocks),
            StmtKind::Call { callee, .. } => {
                returns.push(StmtId::new(cur.func, cur.block, cur.inst + 1));
                goto(*callee as u32, 0, &mut blocks)
            }
            StmtKind::Ret { .. } => {
                let expected = returns.pop();
                match packets.next() {
                    Some(Packet::Tip(found)) if found == expected => match found {
                        Some(next) => next,
                        None => break,
                    },
                    Some(Packet::Tip(found)) => return Err(DecodeError::TipMismatch { at: cur, expected, found }),
                    Some(found) => return Err(DecodeError::UnexpectedPacket { at: cur, expected: "TIP", found }),
                    None => return Err(DecodeError::PacketsExhausted { at: cur }),
                }
            }
            StmtKind::Fail { .. } => return Err(DecodeError::UnexpectedFail(cur)),
            _ => StmtId::new(cur.func, cur.block, cur.inst + 1),
        };
    }

    let remaining = packets.count();
    if remaining > 0 {
        return Err(DecodeError::TrailingPackets(remaining));
    }
    let cd = control_deps(program);
    let control_arcs = cd.restricted(|s| executed.contains(&s));
    Ok(DecodedRun { blocks, executed, control_arcs, failed: bt.failed, seed: bt.seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::execute;
    use crate::ir::{fixtures::P1, parse_program};

    fn sid(s: &str) -> StmtId {
        s.parse().unwrap()
    }

    #[test]
    fn p1_encodings() {
        let p = parse_program(P1).unwrap();
        let bt1 = encode_branch_trace(&execute(&p, &[1], 1).unwrap());
        assert_eq!(bt1.packets, vec![Packet::Tnt(true)]);
        assert_eq!(bt1.seed, Some(sid("0:1:1")));
        assert!(bt1.failed);
        let bt0 = encode_branch_trace(&execute(&p, &[0], 0).unwrap());
        assert_eq!(bt0.packets, vec![Packet::Tnt(false), Packet::Tip(None)]);
        assert_eq!(bt0.seed, None);
    }

    #[test]
    fn straight_line_is_a_single_tip() {
        let p = parse_program("fun main() {\nb0:\n  x = const 1\n  ret x\n}\n").unwrap();
        assert_eq!(encode_branch_trace(&execute(&p, &[], 0).unwrap()).packets, vec![Packet::Tip(None)]);
    }

    #[test]
    fn p1_decodes() {
        let p = parse_program(P1).unwrap();
        let d1 = decode_branch_trace(&p, &encode_branch_trace(&execute(&p, &[1], 1).unwrap())).unwrap();
        assert_eq!(d1.blocks, vec![(0, 0), (0, 1)]);
        assert_eq!(
            d1.executed,
            ["0:0:0", "0:0:1", "0:0:2", "0:0:3", "0:1:0", "0:1:1"].iter().map(|s| sid(s)).collect()
        );
        assert_eq!(
            d1.control_arcs,
            BTreeSet::from([(sid("0:0:3"), sid("0:1:0")), (sid("0:0:3"), sid("0:1:1"))])
        );
        let d0 = decode_branch_trace(&p, &encode_branch_trace(&execute(&p, &[0], 0).unwrap())).unwrap();
        assert_eq!(d0.blocks, vec![(0, 0), (0, 2), (0, 3)]);
        assert_eq!(
            d0.executed,
            ["0:0:0", "0:0:1", "0:0:2", "0:0:3", "0:2:0", "0:2:1", "0:3:0"].iter().map(|s| sid(s)).collect()
        );
    }

    #[test]
    fn missing_tnt_is_a_decode_error() {
        let p = parse_program(P1).unwrap();
        let mut bt = encode_branch_trace(&execute(&p, &[0], 0).unwrap());
        bt.packets.remove(0);
        assert!(matches!(
            decode_branch_trace(&p, &bt),
            Err(DecodeError::UnexpectedPacket { expected: "TNT", .. })
        ));
        bt.packets.clear();
        assert_eq!(decode_branch_trace(&p, &bt), Err(DecodeError::PacketsExhausted { at: sid("0:0:3") }));
    }

    #[test]
    fn wrong_program_is_rejected() {
        let p = parse_program(P1).unwrap();
        let bt = encode_branch_trace(&execute(&p, &[0], 0).unwrap());
        let other = parse_program("fun main() {\nb0:\n  ret\n}\n").unwrap();
        assert!(matches!(decode_branch_trace(&other, &bt), Err(DecodeError::ProgramMismatch { .. })));
    }

    #[test]
    fn json_packet_format() {
        let p = parse_program(P1).unwrap();
        let bt = encode_branch_trace(&execute(&p, &[0], 0).unwrap());
        let json = serde_json::to_string(&bt.packets).unwrap();
        assert_eq!(json, r#"[["T",0],["I","exit"]]"#);
        let back: Vec<Packet> = serde_json::from_str(r#"[["T",1],["I","0:3:0"],["I","exit"]]"#).unwrap();
        assert_eq!(back, vec![Packet::Tnt(true), Packet::Tip(Some(sid("0:3:0"))), Packet::Tip(None)]);
        assert!(serde_json::from_str::<Packet>(r#"["T",2]"#).is_err());
        let whole: BranchTrace = serde_json::from_str(&serde_json::to_string(&bt).unwrap()).unwrap();
        assert_eq!(whole, bt);
    }

    #[test]
    fn calls_and_returns_round_trip() {
        let p = parse_program(
            "fun g(a) {\nb0:\n  c = gt a, 0\n  br c, b1, b2\nb1:\n  ret 1\nb2:\n  ret 0\n}\nfun main() {\nb0:\n  x = input\n  r = call g(x)\n  s = call g(r)\n  ret s\n}\n",
        )
        .unwrap();
        for input in [[-3], [0], [9]] {
            let t = execute(&p, &input, 0).unwrap();
            let d = decode_branch_trace(&p, &encode_branch_trace(&t)).unwrap();
            assert_eq!(d.blocks, t.block_sequence());
            assert_eq!(d.executed, t.executed());
        }
    }
}
