//! STRIPS-subset PDDL: domain and problem model, parser and emitter.
//!
//! Supported requirements are `:strips`, `:typing` and
//! `:negative-preconditions`. Anything else is rejected with
//! [`PddlError::Unsupported`] naming the construct.

mod emit;
mod parse;
pub mod sexpr;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use emit::emit_domain;
pub use parse::{parse_domain, parse_problem};

pub const OBJECT: &str = "object";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PddlError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("unsupported construct `{construct}` at {line}:{col}")]
    Unsupported {
        construct: String,
        line: usize,
        col: usize,
    },
    #[error("{0}")]
    Invalid(String),
}

impl PddlError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PddlError::Invalid(msg.into())
    }
}

/// A type reference: one name, or several for `(either ...)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypeSpec(Vec<String>);

impl TypeSpec {
    pub fn single(name: impl Into<String>) -> Self {
        TypeSpec(vec![name.into()])
    }

    pub fn object() -> Self {
        Self::single(OBJECT)
    }

    pub fn either(names: impl IntoIterator<Item = String>) -> Self {
        let mut v: Vec<String> = names.into_iter().collect();
        v.sort();
        v.dedup();
        TypeSpec(v)
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn is_object(&self) -> bool {
        self.0.len() == 1 && self.0[0] == OBJECT
    }
}

impl fmt::Display for TypeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() == 1 {
            write!(f, "{}", self.0[0])
        } else {
            write!(f, "(either {})", self.0.join(" "))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PredicateDef {
    pub name: String,
    pub param_types: Vec<TypeSpec>,
}

impl PredicateDef {
    pub fn arity(&self) -> usize {
        self.param_types.len()
    }
}

/// A possibly negated atom. Arguments are variables (`?x`) inside schemas
/// and object names inside problems and observations.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub predicate: String,
    pub args: Vec<String>,
    pub positive: bool,
}

impl Literal {
    pub fn new(predicate: impl Into<String>, args: &[&str], positive: bool) -> Self {
        Literal {
            predicate: predicate.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
            positive,
        }
    }

    pub fn negated(&self) -> Self {
        Literal {
            positive: !self.positive,
            ..self.clone()
        }
    }

    pub fn atom(&self) -> GroundAtom {
        GroundAtom {
            predicate: self.predicate.clone(),
            args: self.args.clone(),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            write!(f, "{}", self.atom())
        } else {
            write!(f, "(not {})", self.atom())
        }
    }
}

/// A positive atom, `(on b1 b2)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundAtom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl GroundAtom {
    pub fn new(predicate: impl Into<String>, args: &[&str]) -> Self {
        GroundAtom {
            predicate: predicate.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Parses `(pred a b)` or `pred a b`.
    pub fn parse(text: &str) -> Option<Self> {
        let t = text.trim();
        let t = t
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .unwrap_or(t);
        let mut parts = t.split_whitespace().map(str::to_lowercase);
        let predicate = parts.next()?;
        Some(GroundAtom {
            predicate,
            args: parts.collect(),
        })
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

impl Serialize for GroundAtom {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GroundAtom {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        GroundAtom::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("bad atom `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypedParam {
    pub name: String,
    pub ty: TypeSpec,
}

impl TypedParam {
    pub fn new(name: impl Into<String>, ty: TypeSpec) -> Self {
        TypedParam {
            name: name.into(),
            ty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSchema {
    pub name: String,
    pub params: Vec<TypedParam>,
    pub pre: BTreeSet<Literal>,
    pub eff: BTreeSet<Literal>,
}

impl ActionSchema {
    pub fn arity(&self) -> usize {
        self.params.len()
    }

    pub fn param_position(&self, var: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == var)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub name: String,
    pub requirements: BTreeSet<String>,
    /// Declared types with their parent; `None` means a direct child of `object`.
    pub types: BTreeMap<String, Option<String>>,
    /// Predicates in declaration order.
    pub predicates: Vec<PredicateDef>,
    pub actions: Vec<ActionSchema>,
}

impl Domain {
    pub fn predicate(&self, name: &str) -> Option<&PredicateDef> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn action(&self, name: &str) -> Option<&ActionSchema> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn has_type(&self, name: &str) -> bool {
        name == OBJECT || self.types.contains_key(name)
    }

    /// True if `sub` equals `sup` or descends from it.
    pub fn is_subtype(&self, sub: &str, sup: &str) -> bool {
        if sup == OBJECT || sub == sup {
            return true;
        }
        let mut cur = sub;
        // Bounded walk guards against cyclic declarations.
        for _ in 0..=self.types.len() {
            match self.types.get(cur) {
                Some(Some(parent)) => {
                    if parent == sup {
                        return true;
                    }
                    cur = parent;
                }
                _ => return false,
            }
        }
        false
    }

    /// True if an object of type `obj_ty` may fill a slot of type `slot`.
    pub fn fits(&self, obj_ty: &str, slot: &TypeSpec) -> bool {
        slot.names().iter().any(|s| self.is_subtype(obj_ty, s))
    }

    /// True if some object could satisfy both type references.
    pub fn overlaps(&self, a: &TypeSpec, b: &TypeSpec) -> bool {
        a.names().iter().any(|x| {
            b.names()
                .iter()
                .any(|y| self.is_subtype(x, y) || self.is_subtype(y, x))
        })
    }

    /// Equality up to declaration order of predicates, actions and literals.
    pub fn semantically_eq(&self, other: &Domain) -> bool {
        let preds = |d: &Domain| d.predicates.iter().cloned().collect::<BTreeSet<_>>();
        let acts = |d: &Domain| {
            d.actions
                .iter()
                .map(|a| (a.name.clone(), a.params.clone(), a.pre.clone(), a.eff.clone()))
                .collect::<BTreeSet<_>>()
        };
        self.name == other.name
            && self.types == other.types
            && preds(self) == preds(other)
            && acts(self) == acts(other)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub name: String,
    pub domain: String,
    /// Objects with their declared type, in declaration order.
    pub objects: Vec<(String, String)>,
    pub init: BTreeSet<GroundAtom>,
}

impl Problem {
    pub fn object_type(&self, name: &str) -> Option<&str> {
        self.objects
            .iter()
            .find(|(o, _)| o == name)
            .map(|(_, t)| t.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_atom_text_round_trip() {
        let a = GroundAtom::new("on", &["b1", "b2"]);
        assert_eq!(a.to_string(), "(on b1 b2)");
        assert_eq!(GroundAtom::parse("(on b1 b2)"), Some(a));
        assert_eq!(
            GroundAtom::parse("(armempty)"),
            Some(GroundAtom::new("armempty", &[]))
        );
        assert_eq!(GroundAtom::parse("()"), None);
    }

    #[test]
    fn subtype_walk() {
        let mut types = BTreeMap::new();
        types.insert("locatable".to_string(), None);
        types.insert("aircraft".to_string(), Some("locatable".to_string()));
        let d = Domain {
            name: "d".into(),
            requirements: BTreeSet::new(),
            types,
            predicates: vec![],
            actions: vec![],
        };
        assert!(d.is_subtype("aircraft", "locatable"));
        assert!(d.is_subtype("aircraft", OBJECT));
        assert!(!d.is_subtype("locatable", "aircraft"));
        assert!(d.overlaps(&TypeSpec::single("locatable"), &TypeSpec::single("aircraft")));
    }
}
