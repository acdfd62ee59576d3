//! Object-granular sampled heap dependence tracing.
//!
//! At every heap allocation the object is poisoned with the current rate of
//! its allocation context. Poisoning lasts for the object's lifetime and is
//! shared by every pointer derived from it, so each later read of a poisoned
//! object yields a (last writer, reader) pair. Rates start at 1.0, halve after
//! each run in which the context produced no new pair, and snap back to 1.0
//! as soon as it does.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::deps::{DepKind, DepSet};
use crate::interp::{ContextKey, Event, FullTrace, ObjectId, Tag};
use crate::ir::{Region, StmtId};

pub const DEFAULT_GAMMA: f64 = 0.5;
pub const DEFAULT_RATE_MIN: f64 = 1.0 / 65536.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Adaptive,
    /// Every context pinned to this rate; adaptation disabled.
    Fixed(f64),
}

/// Per-client sampler state. Evolution is a pure function of the state
/// (including `rng_seed` and `epoch`) and the traces fed to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerState {
    pub mode: SamplingMode,
    pub gamma: f64,
    pub rate_min: f64,
    pub rates: BTreeMap<ContextKey, f64>,
    pub rng_seed: u64,
    /// Number of runs processed so far; selects the PRNG stream.
    pub epoch: u64,
    /// Cumulative (writer, reader) pairs seen by this client.
    pub seen: BTreeSet<(StmtId, StmtId)>,
}

impl SamplerState {
    pub fn adaptive(rng_seed: u64) -> Self {
        SamplerState {
            mode: SamplingMode::Adaptive,
            gamma: DEFAULT_GAMMA,
            rate_min: DEFAULT_RATE_MIN,
            rates: BTreeMap::new(),
            rng_seed,
            epoch: 0,
            seen: BTreeSet::new(),
        }
    }

    pub fn fixed(rate: f64, rng_seed: u64) -> Self {
        SamplerState { mode: SamplingMode::Fixed(rate.clamp(0.0, 1.0)), ..Self::adaptive(rng_seed) }
    }

    pub fn rate(&self, context: &ContextKey) -> f64 {
        match self.mode {
            SamplingMode::Fixed(r) => r,
            SamplingMode::Adaptive => self.rates.get(context).copied().unwrap_or(1.0),
        }
    }

    /// Returns the state after one adaptation step for `context`.
    pub fn adapt_rate(&self, context: ContextKey, found_new_dep: bool) -> SamplerState {
        let mut next = self.clone();
        next.adapt_in_place(context, found_new_dep);
        next
    }

    fn adapt_in_place(&mut self, context: ContextKey, found_new_dep: bool) {
        if let SamplingMode::Fixed(_) = self.mode {
            return;
        }
        let current = self.rate(&context);
        let next = if found_new_dep { 1.0 } else { (current * self.gamma).max(self.rate_min) };
        self.rates.insert(context, next);
    }
}

/// Free-function form of [`SamplerState::adapt_rate`].
pub fn adapt_rate(state: &SamplerState, context: ContextKey, found_new_dep: bool) -> SamplerState {
    state.adapt_rate(context, found_new_dep)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledRun {
    pub deps: DepSet,
    pub state: SamplerState,
    /// Poisoned objects and the tag each carried.
    pub poisoned: BTreeMap<ObjectId, Tag>,
}

impl SampledRun {
    pub fn poisoned_objects(&self) -> BTreeSet<ObjectId> {
        self.poisoned.keys().copied().collect()
    }
}

/// Replays a trace through the poisoning monitor. Only heap objects are ever
/// poisoned; stack dependencies are left to the alias analysis.
pub fn sampled_data_deps(trace: &FullTrace, state: &SamplerState) -> SampledRun {
    let mut rng = ChaCha8Rng::seed_from_u64(state.rng_seed);
    rng.set_stream(state.epoch);

    let mut next = state.clone();
    let mut poisoned: BTreeMap<ObjectId, Tag> = BTreeMap::new();
    let mut object_ctx: HashMap<ObjectId, ContextKey> = HashMap::new();
    let mut active: BTreeMap<ContextKey, bool> = BTreeMap::new();
    let mut last_writer: HashMap<(ObjectId, u64), StmtId> = HashMap::new();
    let mut deps = DepSet::new();

    for e in &trace.events {
        match e {
            Event::Alloc { object, region: Region::Heap, context, .. } => {
                active.entry(*context).or_insert(false);
                let draw: f64 = rng.random();
                if draw < state.rate(context) {
                    let tag = Tag::new(rng.random_range(Tag::MIN..=Tag::MAX)).expect("drawn in range");
                    poisoned.insert(*object, tag);
                    object_ctx.insert(*object, *context);
                }
            }
            Event::Write { stmt, loc } if poisoned.contains_key(&loc.object) => {
                last_writer.insert((loc.object, loc.offset), *stmt);
            }
            Event::Read { stmt, loc } if poisoned.contains_key(&loc.object) => {
                if let Some(&w) = last_writer.get(&(loc.object, loc.offset)) {
                    deps.observe(w, *stmt, DepKind::ObservedHeap);
                    if next.seen.insert((w, *stmt)) {
                        active.insert(object_ctx[&loc.object], true);
                    }
                }
            }
            _ => {}
        }
    }

    for (context, found_new) in active {
        next.adapt_in_place(context, found_new);
    }
    next.epoch += 1;
    SampledRun { deps, state: next, poisoned }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::execute;
    use crate::ir::{fixtures::P1, parse_program};
    use crate::tracing::full_data_deps;

    fn sid(s: &str) -> StmtId {
        s.parse().unwrap()
    }

    #[test]
    fn adapt_rate_rules() {
        let s = SamplerState::adaptive(0);
        let k = ContextKey::ROOT;
        assert_eq!(s.adapt_rate(k, false).rate(&k), 0.5);
        let mut quarter = s.clone();
        quarter.rates.insert(k, 0.25);
        assert_eq!(adapt_rate(&quarter, k, true).rate(&k), 1.0);
        let mut floor = s.clone();
        floor.rates.insert(k, DEFAULT_RATE_MIN);
        assert_eq!(floor.adapt_rate(k, false).rate(&k), DEFAULT_RATE_MIN);
        let fixed = SamplerState::fixed(0.3, 0);
        assert_eq!(fixed.adapt_rate(k, false).rate(&k), 0.3);
    }

    #[test]
    fn p1_full_rate() {
        let p = parse_program(P1).unwrap();
        let t = execute(&p, &[1], 0).unwrap();
        let out = sampled_data_deps(&t, &SamplerState::fixed(1.0, 9));
        assert_eq!(out.deps.pairs(), BTreeSet::from([(sid("0:0:1"), sid("0:1:0"))]));
        assert_eq!(out.poisoned_objects(), BTreeSet::from([0]));
        let t0 = execute(&p, &[0], 1).unwrap();
        assert!(sampled_data_deps(&t0, &SamplerState::adaptive(9)).deps.is_empty());
    }

    #[test]
    fn zero_rate_observes_nothing() {
        let p = parse_program(P1).unwrap();
        let t = execute(&p, &[1], 0).unwrap();
        let out = sampled_data_deps(&t, &SamplerState::fixed(0.0, 1));
        assert!(out.deps.is_empty());
        assert!(out.poisoned.is_empty());
    }

    #[test]
    fn derived_pointers_stay_poisoned_and_stack_is_ignored() {
        let p = parse_program(
            "fun main() {\nb0:\n  h = alloc 4, heap\n  q = getptr h, 2\n  store q[1], 1\n  v = load h[3]\n  s = alloc 1, stack\n  store s[0], v\n  w = load s[0]\n  ret w\n}\n",
        )
        .unwrap();
        let t = execute(&p, &[], 0).unwrap();
        let out = sampled_data_deps(&t, &SamplerState::fixed(1.0, 0));
        assert_eq!(out.deps.pairs(), BTreeSet::from([(sid("0:0:2"), sid("0:0:3"))]));
        assert_eq!(full_data_deps(&t).len(), 2);
    }

    #[test]
    fn rates_decay_per_run_and_reset_on_news() {
        let p = parse_program(P1).unwrap();
        let t = execute(&p, &[1], 0).unwrap();
        let k = ContextKey::ROOT;
        let s0 = SamplerState::adaptive(5);
        let s1 = sampled_data_deps(&t, &s0).state;
        assert_eq!(s1.rate(&k), 1.0, "first run finds a new pair");
        let s2 = sampled_data_deps(&t, &s1).state;
        assert_eq!(s2.rate(&k), 0.5);
        let s3 = sampled_data_deps(&t, &s2).state;
        assert_eq!(s3.rate(&k), 0.25);
        assert_eq!(s3.epoch, 3);
    }

    #[test]
    fn determinism_and_state_json() {
        let p = parse_program(P1).unwrap();
        let t = execute(&p, &[1], 0).unwrap();
        let mut s = SamplerState::adaptive(77);
        s.rates.insert(ContextKey::ROOT, 0.5);
        assert_eq!(sampled_data_deps(&t, &s), sampled_data_deps(&t, &s));
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"rates\":{\"_,_\":0.5}"), "{json}");
        assert_eq!(serde_json::from_str::<SamplerState>(&json).unwrap(), s);
    }
}
