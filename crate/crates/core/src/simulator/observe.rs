use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SimError, WorldState};
use crate::pddl::{GroundAtom, Literal};

/// A partial, possibly wrong view of a state. Atoms not mentioned are unknown.
///
/// Each atom maps to one truth value, so an observation can never contain
/// both a literal and its negation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ObservedState {
    values: BTreeMap<GroundAtom, bool>,
}

impl ObservedState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `atom` as observed true or false, replacing any earlier value.
    pub fn insert(&mut self, atom: GroundAtom, value: bool) {
        self.values.insert(atom, value);
    }

    pub fn get(&self, atom: &GroundAtom) -> Option<bool> {
        self.values.get(atom).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GroundAtom, bool)> {
        self.values.iter().map(|(a, &v)| (a, v))
    }

    pub fn positives(&self) -> impl Iterator<Item = &GroundAtom> {
        self.values.iter().filter(|(_, &v)| v).map(|(a, _)| a)
    }

    pub fn negatives(&self) -> impl Iterator<Item = &GroundAtom> {
        self.values.iter().filter(|(_, &v)| !v).map(|(a, _)| a)
    }

    pub fn literals(&self) -> impl Iterator<Item = Literal> + '_ {
        self.values.iter().map(|(a, &v)| Literal {
            predicate: a.predicate.clone(),
            args: a.args.clone(),
            positive: v,
        })
    }

    /// Closed-world expansion of `state` over `universe`.
    pub fn full(state: &WorldState, universe: &[GroundAtom]) -> Self {
        corrupt(state, universe, |_, _| Corruption::Keep)
    }

    /// The state this observation describes, if it is complete over `universe`.
    pub fn to_world(&self, universe: &[GroundAtom]) -> Option<WorldState> {
        if universe.iter().any(|a| !self.values.contains_key(a)) {
            return None;
        }
        Some(WorldState::new(self.positives().cloned()))
    }
}

impl fmt::Display for ObservedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(and")?;
        for l in self.literals() {
            write!(f, " {l}")?;
        }
        write!(f, ")")
    }
}

#[derive(Serialize, Deserialize)]
struct PosNeg {
    pos: Vec<GroundAtom>,
    neg: Vec<GroundAtom>,
}

impl Serialize for ObservedState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PosNeg {
            pos: self.positives().cloned().collect(),
            neg: self.negatives().cloned().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ObservedState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let pn = PosNeg::deserialize(d)?;
        let mut o = ObservedState::new();
        for a in pn.pos {
            o.insert(a, true);
        }
        for a in pn.neg {
            if o.get(&a) == Some(true) {
                return Err(serde::de::Error::custom(format!(
                    "{a} observed both true and false"
                )));
            }
            o.insert(a, false);
        }
        Ok(o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationModel {
    pub observability: f64,
    pub noise_prob: f64,
    pub rng_seed: u64,
}

impl ObservationModel {
    pub fn perfect() -> Self {
        ObservationModel {
            observability: 1.0,
            noise_prob: 0.0,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.observability) {
            return Err(SimError::Config(format!(
                "observability {} outside [0, 1]",
                self.observability
            )));
        }
        if !unit(self.noise_prob) {
            return Err(SimError::Config(format!(
                "noise probability {} outside [0, 1]",
                self.noise_prob
            )));
        }
        Ok(())
    }
}

/// What happens to one atom on its way to the observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corruption {
    Omit,
    Keep,
    Flip,
}

/// Builds an observation of `state`, letting `decide` pick the fate of each
/// atom of `universe` given its true value.
pub fn corrupt(
    state: &WorldState,
    universe: &[GroundAtom],
    mut decide: impl FnMut(&GroundAtom, bool) -> Corruption,
) -> ObservedState {
    let mut out = ObservedState::new();
    for a in universe {
        let truth = state.holds(a);
        match decide(a, truth) {
            Corruption::Omit => {}
            Corruption::Keep => out.insert(a.clone(), truth),
            Corruption::Flip => out.insert(a.clone(), !truth),
        }
    }
    out
}

/// Random observation: each atom is kept with probability `observability`,
/// and a kept atom is flipped with probability `noise_prob`.
pub fn observe<R: Rng + ?Sized>(
    state: &WorldState,
    universe: &[GroundAtom],
    model: &ObservationModel,
    rng: &mut R,
) -> ObservedState {
    corrupt(state, universe, |_, _| {
        if !rng.gen_bool(model.observability) {
            Corruption::Omit
        } else if rng.gen_bool(model.noise_prob) {
            Corruption::Flip
        } else {
            Corruption::Keep
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::simulator::atom_universe;
    use crate::{domains, pddl};

    fn two_blocks() -> (WorldState, Vec<GroundAtom>) {
        let d = pddl::parse_domain(domains::BLOCKSWORLD).unwrap();
        let p = pddl::parse_problem(
            "(define (problem two) (:domain blocksworld) (:objects b1 b2)
               (:init (armempty) (ontable b1) (ontable b2) (clear b1) (clear b2)))",
            &d,
        )
        .unwrap();
        let u = atom_universe(&d, &p);
        (WorldState::new(p.init.iter().cloned()), u)
    }

    fn atom(s: &str) -> GroundAtom {
        GroundAtom::parse(s).unwrap()
    }

    #[test]
    fn identity_and_blind_observation() {
        let (s, u) = two_blocks();
        let mut rng = stream(1, "t");
        let full = observe(&s, &u, &ObservationModel::perfect(), &mut rng);
        assert_eq!(full, ObservedState::full(&s, &u));
        assert_eq!(full.len(), u.len());
        assert_eq!(full.to_world(&u), Some(s.clone()));

        let blind = ObservationModel {
            observability: 0.0,
            ..ObservationModel::perfect()
        };
        assert!(observe(&s, &u, &blind, &mut rng).is_empty());
    }

    #[test]
    fn noisy_incomplete_two_block_example() {
        let (s, u) = two_blocks();
        let dropped = [
            "(ontable b1)",
            "(clear b2)",
            "(on b2 b1)",
            "(on b1 b1)",
            "(on b2 b2)",
        ]
        .map(atom);
        let obs = corrupt(&s, &u, |a, _| {
            if dropped.contains(a) {
                Corruption::Omit
            } else if *a == atom("(holding b1)") {
                Corruption::Flip
            } else {
                Corruption::Keep
            }
        });
        let pos: Vec<String> = obs.positives().map(|a| a.to_string()).collect();
        let neg: Vec<String> = obs.negatives().map(|a| a.to_string()).collect();
        assert_eq!(
            pos,
            ["(armempty)", "(clear b1)", "(holding b1)", "(ontable b2)"]
        );
        assert_eq!(neg, ["(holding b2)", "(on b1 b2)"]);
    }

    #[test]
    fn empirical_rates() {
        let (s, u) = two_blocks();
        let model = ObservationModel {
            observability: 0.25,
            noise_prob: 0.05,
            rng_seed: 3,
        };
        let mut rng = stream(model.rng_seed, "observe");
        let truth = ObservedState::full(&s, &u);
        let (mut draws, mut kept, mut flipped) = (0usize, 0usize, 0usize);
        while draws < 200_000 {
            let o = observe(&s, &u, &model, &mut rng);
            draws += u.len();
            kept += o.len();
            flipped += o.iter().filter(|(a, v)| truth.get(a) != Some(*v)).count();
        }
        let incl = kept as f64 / draws as f64;
        let flip = flipped as f64 / kept as f64;
        assert!((incl - 0.25).abs() < 0.01, "inclusion {incl}");
        assert!((flip - 0.05).abs() < 0.005, "flip {flip}");
    }

    #[test]
    fn serde_pos_neg() {
        let mut o = ObservedState::new();
        o.insert(atom("(on b1 b2)"), true);
        o.insert(atom("(armempty)"), false);
        let j = serde_json::to_string(&o).unwrap();
        assert_eq!(j, r#"{"pos":["(on b1 b2)"],"neg":["(armempty)"]}"#);
        assert_eq!(serde_json::from_str::<ObservedState>(&j).unwrap(), o);
        assert!(serde_json::from_str::<ObservedState>(r#"{"pos":["(p)"],"neg":["(p)"]}"#).is_err());
    }

    #[test]
    fn model_validation() {
        assert!(ObservationModel::perfect().validate().is_ok());
        let bad = ObservationModel {
            observability: 1.5,
            ..ObservationModel::perfect()
        };
        assert!(bad.validate().is_err());
    }
}
