//! Ground STRIPS semantics, random trace generation and observation corruption.

mod observe;
mod trace;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pddl::{Domain, GroundAtom, Literal, PddlError, Problem};

pub use observe::{corrupt, observe, Corruption, ObservationModel, ObservedState};
pub use trace::{
    generate_trace, read_success_sidecar, read_trace, write_success_sidecar, write_trace, Trace,
    TraceConfig, TraceStep,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("action `{name}` takes {expected} arguments, got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("argument `{arg}` of {action} is not a declared object of type {ty}")]
    BadArgument {
        action: String,
        arg: String,
        ty: String,
    },
    #[error("no ground action instances exist for this problem")]
    NoInstances,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Pddl(#[from] PddlError),
    #[error("trace file line {line}: {message}")]
    TraceFormat { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An action name with object arguments, `(stack b1 b2)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroundAction {
    pub name: String,
    pub args: Vec<String>,
}

impl GroundAction {
    pub fn new(name: impl Into<String>, args: &[&str]) -> Self {
        GroundAction {
            name: name.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn has_repeated_args(&self) -> bool {
        self.args
            .iter()
            .enumerate()
            .any(|(i, a)| self.args[..i].contains(a))
    }
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.name)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

/// Closed-world state: atoms not stored are false.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WorldState {
    atoms: BTreeSet<GroundAtom>,
}

impl WorldState {
    pub fn new(atoms: impl IntoIterator<Item = GroundAtom>) -> Self {
        WorldState {
            atoms: atoms.into_iter().collect(),
        }
    }

    pub fn holds(&self, atom: &GroundAtom) -> bool {
        self.atoms.contains(atom)
    }

    pub fn atoms(&self) -> &BTreeSet<GroundAtom> {
        &self.atoms
    }

    fn satisfies(&self, lit: &Literal) -> bool {
        self.holds(&lit.atom()) == lit.positive
    }
}

/// Ground instance with atoms pre-resolved to universe ids.
#[derive(Debug, Clone)]
struct Compiled {
    action: GroundAction,
    pre_pos: Vec<usize>,
    pre_neg: Vec<usize>,
    add: Vec<usize>,
    del: Vec<usize>,
    /// A positive precondition names a type-illegal atom.
    never: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct BitState(Vec<u64>);

impl BitState {
    fn new(n: usize) -> Self {
        BitState(vec![0; n.div_ceil(64)])
    }
    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }
    fn set(&mut self, i: usize, v: bool) {
        if v {
            self.0[i / 64] |= 1 << (i % 64);
        } else {
            self.0[i / 64] &= !(1 << (i % 64));
        }
    }
}

/// A domain and problem grounded for fast execution.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    domain: &'a Domain,
    problem: &'a Problem,
    universe: Vec<GroundAtom>,
    ids: HashMap<GroundAtom, usize>,
    instances: Vec<Compiled>,
}

impl<'a> Simulator<'a> {
    pub fn new(domain: &'a Domain, problem: &'a Problem) -> Result<Self, SimError> {
        if problem.domain != domain.name {
            return Err(SimError::Config(format!(
                "problem `{}` targets domain `{}`",
                problem.name, problem.domain
            )));
        }
        let universe = atom_universe(domain, problem);
        let ids: HashMap<GroundAtom, usize> = universe
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, a)| (a, i))
            .collect();
        let mut sim = Simulator {
            domain,
            problem,
            universe,
            ids,
            instances: Vec::new(),
        };
        sim.instances = sim.compile_instances();
        Ok(sim)
    }

    pub fn domain(&self) -> &Domain {
        self.domain
    }

    pub fn problem(&self) -> &Problem {
        self.problem
    }

    /// All type-legal ground atoms, sorted.
    pub fn universe(&self) -> &[GroundAtom] {
        &self.universe
    }

    pub fn initial_state(&self) -> WorldState {
        WorldState::new(self.problem.init.iter().cloned())
    }

    /// Ground instances with pairwise distinct arguments, in a fixed order.
    pub fn instances(&self) -> impl Iterator<Item = &GroundAction> {
        self.instances.iter().map(|c| &c.action)
    }

    fn ground_schema(&self, action: &GroundAction) -> Result<(Vec<Literal>, Vec<Literal>), SimError> {
        let schema = self
            .domain
            .action(&action.name)
            .ok_or_else(|| SimError::UnknownAction(action.name.clone()))?;
        if schema.arity() != action.args.len() {
            return Err(SimError::Arity {
                name: action.name.clone(),
                expected: schema.arity(),
                got: action.args.len(),
            });
        }
        for (arg, p) in action.args.iter().zip(&schema.params) {
            let ok = self
                .problem
                .object_type(arg)
                .is_some_and(|t| self.domain.fits(t, &p.ty));
            if !ok {
                return Err(SimError::BadArgument {
                    action: action.to_string(),
                    arg: arg.clone(),
                    ty: p.ty.to_string(),
                });
            }
        }
        let bind = |lit: &Literal| Literal {
            predicate: lit.predicate.clone(),
            args: lit
                .args
                .iter()
                .map(|v| action.args[schema.param_position(v).expect("checked at parse")].clone())
                .collect(),
            positive: lit.positive,
        };
        Ok((
            schema.pre.iter().map(bind).collect(),
            schema.eff.iter().map(bind).collect(),
        ))
    }

    /// True iff every precondition literal holds in `state`.
    pub fn applicable(&self, state: &WorldState, action: &GroundAction) -> Result<bool, SimError> {
        let (pre, _) = self.ground_schema(action)?;
        Ok(pre.iter().all(|l| state.satisfies(l)))
    }

    /// Successor state; an inapplicable action leaves the state unchanged.
    pub fn apply(&self, state: &WorldState, action: &GroundAction) -> Result<WorldState, SimError> {
        let (pre, eff) = self.ground_schema(action)?;
        if !pre.iter().all(|l| state.satisfies(l)) {
            return Ok(state.clone());
        }
        let mut atoms = state.atoms.clone();
        for l in eff.iter().filter(|l| !l.positive) {
            atoms.remove(&l.atom());
        }
        for l in eff.iter().filter(|l| l.positive) {
            atoms.insert(l.atom());
        }
        Ok(WorldState { atoms })
    }

    fn compile_instances(&self) -> Vec<Compiled> {
        let mut out = Vec::new();
        for schema in &self.domain.actions {
            let slots: Vec<_> = schema.params.iter().map(|p| &p.ty).collect();
            let candidates = slot_candidates(self.domain, self.problem, &slots);
            for args in tuples(&candidates, true) {
                let action = GroundAction::new(schema.name.clone(), &args);
                let (pre, eff) = self.ground_schema(&action).expect("typed by construction");
                let mut c = Compiled {
                    action,
                    pre_pos: vec![],
                    pre_neg: vec![],
                    add: vec![],
                    del: vec![],
                    never: false,
                };
                for l in pre {
                    match (self.ids.get(&l.atom()), l.positive) {
                        (Some(&i), true) => c.pre_pos.push(i),
                        (Some(&i), false) => c.pre_neg.push(i),
                        (None, true) => c.never = true,
                        (None, false) => {}
                    }
                }
                for l in eff {
                    if let Some(&i) = self.ids.get(&l.atom()) {
                        if l.positive {
                            c.add.push(i)
                        } else {
                            c.del.push(i)
                        }
                    }
                }
                out.push(c);
            }
        }
        out
    }

    fn to_bits(&self, state: &WorldState) -> BitState {
        let mut b = BitState::new(self.universe.len());
        for a in &state.atoms {
            if let Some(&i) = self.ids.get(a) {
                b.set(i, true);
            }
        }
        b
    }

    fn from_bits(&self, bits: &BitState) -> WorldState {
        WorldState::new(
            self.universe
                .iter()
                .enumerate()
                .filter(|(i, _)| bits.get(*i))
                .map(|(_, a)| a.clone()),
        )
    }

    fn compiled_applicable(&self, c: &Compiled, s: &BitState) -> bool {
        !c.never && c.pre_pos.iter().all(|&i| s.get(i)) && c.pre_neg.iter().all(|&i| !s.get(i))
    }

    fn compiled_apply(&self, c: &Compiled, s: &mut BitState) {
        for &i in &c.del {
            s.set(i, false);
        }
        for &i in &c.add {
            s.set(i, true);
        }
    }
}

/// Every tuple drawing position i from `candidates[i]`, optionally with no
/// object repeated.
fn tuples<'s>(candidates: &[Vec<&'s str>], distinct: bool) -> Vec<Vec<&'s str>> {
    fn rec<'s>(
        c: &[Vec<&'s str>],
        distinct: bool,
        cur: &mut Vec<&'s str>,
        out: &mut Vec<Vec<&'s str>>,
    ) {
        if cur.len() == c.len() {
            out.push(cur.clone());
            return;
        }
        for &o in &c[cur.len()] {
            if !distinct || !cur.contains(&o) {
                cur.push(o);
                rec(c, distinct, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(candidates, distinct, &mut Vec::with_capacity(candidates.len()), &mut out);
    out
}

fn slot_candidates<'p>(domain: &Domain, problem: &'p Problem, slots: &[&crate::pddl::TypeSpec]) -> Vec<Vec<&'p str>> {
    slots
        .iter()
        .map(|slot| {
            problem
                .objects
                .iter()
                .filter(|(_, t)| domain.fits(t, slot))
                .map(|(o, _)| o.as_str())
                .collect()
        })
        .collect()
}

/// Type-legal ground atoms over the problem's objects, sorted.
pub fn atom_universe(domain: &Domain, problem: &Problem) -> Vec<GroundAtom> {
    let mut out = BTreeSet::new();
    for p in &domain.predicates {
        let slots: Vec<_> = p.param_types.iter().collect();
        for args in tuples(&slot_candidates(domain, problem, &slots), false) {
            out.insert(GroundAtom::new(p.name.clone(), &args));
        }
    }
    out.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains;
    use crate::pddl::{parse_domain, parse_problem};

    fn bw() -> (Domain, Problem) {
        let d = parse_domain(domains::BLOCKSWORLD).unwrap();
        let p = parse_problem(
            "(define (problem two) (:domain blocksworld) (:objects b1 b2)
               (:init (armempty) (ontable b1) (ontable b2) (clear b1) (clear b2)))",
            &d,
        )
        .unwrap();
        (d, p)
    }

    fn atom(s: &str) -> GroundAtom {
        GroundAtom::parse(s).unwrap()
    }

    #[test]
    fn universe_counts_blocksworld_two_blocks() {
        let (d, p) = bw();
        let sim = Simulator::new(&d, &p).unwrap();
        // armempty + 3 unary * 2 + on 2*2
        assert_eq!(sim.universe().len(), 1 + 6 + 4);
        // pickup/putdown 2 each, stack/unstack 2 each (distinct args)
        assert_eq!(sim.instances().count(), 8);
    }

    #[test]
    fn stack_applicable_and_effects() {
        let (d, p) = bw();
        let sim = Simulator::new(&d, &p).unwrap();
        let held = WorldState::new(
            ["(holding b1)", "(clear b2)", "(ontable b2)"].map(atom),
        );
        let stack = GroundAction::new("stack", &["b1", "b2"]);
        assert!(sim.applicable(&held, &stack).unwrap());
        let next = sim.apply(&held, &stack).unwrap();
        for a in ["(armempty)", "(clear b1)", "(on b1 b2)", "(ontable b2)"] {
            assert!(next.holds(&atom(a)), "{a}");
        }
        assert!(!next.holds(&atom("(clear b2)")));
        assert!(!next.holds(&atom("(holding b1)")));

        let init = sim.initial_state();
        assert!(!sim.applicable(&init, &stack).unwrap());
        assert_eq!(sim.apply(&init, &stack).unwrap(), init);
    }

    #[test]
    fn pickup_twice_is_noop_second_time() {
        let (d, p) = bw();
        let sim = Simulator::new(&d, &p).unwrap();
        let pick = GroundAction::new("pickup", &["b1"]);
        let s1 = sim.apply(&sim.initial_state(), &pick).unwrap();
        assert!(s1.holds(&atom("(holding b1)")));
        let s2 = sim.apply(&s1, &pick).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn empty_precondition_always_applicable() {
        let d = parse_domain(
            "(define (domain e) (:predicates (p)) (:action go :parameters () :precondition () :effect (p)))",
        )
        .unwrap();
        let p = parse_problem("(define (problem e) (:domain e) (:objects) (:init))", &d).unwrap();
        let sim = Simulator::new(&d, &p).unwrap();
        let go = GroundAction::new("go", &[]);
        assert!(sim.applicable(&WorldState::default(), &go).unwrap());
        assert!(sim.apply(&WorldState::default(), &go).unwrap().holds(&atom("(p)")));
    }

    #[test]
    fn ground_errors() {
        let (d, p) = bw();
        let sim = Simulator::new(&d, &p).unwrap();
        let s = sim.initial_state();
        assert!(matches!(
            sim.applicable(&s, &GroundAction::new("fly", &[])),
            Err(SimError::UnknownAction(_))
        ));
        assert!(matches!(
            sim.applicable(&s, &GroundAction::new("stack", &["b1"])),
            Err(SimError::Arity { .. })
        ));
        assert!(matches!(
            sim.applicable(&s, &GroundAction::new("pickup", &["b9"])),
            Err(SimError::BadArgument { .. })
        ));
    }

    #[test]
    fn typed_universe_respects_types() {
        let d = parse_domain(domains::ZENOTRAVEL).unwrap();
        let p = parse_problem(domains::ZENOTRAVEL_TRAIN, &d).unwrap();
        let sim = Simulator::new(&d, &p).unwrap();
        // at: (3 planes + 7 people) * 5 cities; in: 7*3; fuel-level: 3*7; next: 7*7
        assert_eq!(sim.universe().len(), 50 + 21 + 21 + 49);
        assert!(sim.universe().iter().all(|a| !(a.predicate == "at" && a.args[0].starts_with("fl"))));
    }

    #[test]
    fn compiled_semantics_match_reference() {
        let d = parse_domain(domains::BLOCKSWORLD).unwrap();
        let p = parse_problem(domains::BLOCKSWORLD_TRAIN, &d).unwrap();
        let sim = Simulator::new(&d, &p).unwrap();
        let mut s = sim.initial_state();
        let mut bits = sim.to_bits(&s);
        for c in sim.instances.iter().take(200) {
            let app = sim.compiled_applicable(c, &bits);
            assert_eq!(app, sim.applicable(&s, &c.action).unwrap());
            if app {
                sim.compiled_apply(c, &mut bits);
                s = sim.apply(&s, &c.action).unwrap();
                assert_eq!(sim.from_bits(&bits), s);
            }
        }
    }
}
