//! Action-relative trit vectors over schematized fluents.
//!
//! Observations are rewritten in terms of an action's parameters: object
//! names become placeholders `?x1 .. ?xn` and only fluents over those
//! placeholders are kept. Each kept fluent gets one bit.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::pddl::{ActionSchema, Domain, GroundAtom, Literal};
use crate::simulator::{GroundAction, ObservedState, Trace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("action `{action}` has {expected} parameters, instance has {got}")]
    Arity {
        action: String,
        expected: usize,
        got: usize,
    },
    #[error("instance {0} repeats an object; it cannot be schematized")]
    RepeatedArgs(String),
    #[error("vector lengths differ: {0} vs {1}")]
    Length(usize, usize),
    #[error("bad trit `{0}`")]
    BadTrit(char),
    #[error("fluent index text line {line}: {message}")]
    IndexFormat { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Trit {
    Pos,
    Neg,
    Unknown,
}

impl Trit {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Trit::Pos
        } else {
            Trit::Neg
        }
    }

    pub fn from_option(b: Option<bool>) -> Self {
        b.map_or(Trit::Unknown, Trit::from_bool)
    }

    pub fn value(self) -> Option<bool> {
        match self {
            Trit::Pos => Some(true),
            Trit::Neg => Some(false),
            Trit::Unknown => None,
        }
    }

    pub fn is_known(self) -> bool {
        self != Trit::Unknown
    }

    pub fn negate(self) -> Self {
        match self {
            Trit::Pos => Trit::Neg,
            Trit::Neg => Trit::Pos,
            Trit::Unknown => Trit::Unknown,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Trit::Pos => '+',
            Trit::Neg => '-',
            Trit::Unknown => '*',
        }
    }

    pub fn from_char(c: char) -> Result<Self, EncodeError> {
        match c {
            '+' | '1' => Ok(Trit::Pos),
            '-' => Ok(Trit::Neg),
            '*' | '?' => Ok(Trit::Unknown),
            _ => Err(EncodeError::BadTrit(c)),
        }
    }
}

/// Fixed-length vector of trits, packed as two bitmasks.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct TritVector {
    len: usize,
    known: Vec<u64>,
    pos: Vec<u64>,
}

impl TritVector {
    pub fn unknown(len: usize) -> Self {
        let words = len.div_ceil(64);
        TritVector {
            len,
            known: vec![0; words],
            pos: vec![0; words],
        }
    }

    pub fn from_trits(trits: &[Trit]) -> Self {
        let mut v = Self::unknown(trits.len());
        for (i, &t) in trits.iter().enumerate() {
            v.set(i, t);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> Trit {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        let (w, b) = (i / 64, i % 64);
        if self.known[w] >> b & 1 == 0 {
            Trit::Unknown
        } else if self.pos[w] >> b & 1 == 1 {
            Trit::Pos
        } else {
            Trit::Neg
        }
    }

    pub fn set(&mut self, i: usize, t: Trit) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        let (w, m) = (i / 64, 1u64 << (i % 64));
        match t {
            Trit::Unknown => {
                self.known[w] &= !m;
                self.pos[w] &= !m;
            }
            Trit::Pos => {
                self.known[w] |= m;
                self.pos[w] |= m;
            }
            Trit::Neg => {
                self.known[w] |= m;
                self.pos[w] &= !m;
            }
        }
    }

    pub fn with(&self, i: usize, t: Trit) -> Self {
        let mut v = self.clone();
        v.set(i, t);
        v
    }

    pub fn iter(&self) -> impl Iterator<Item = Trit> + '_ {
        (0..self.len).map(|i| self.get(i))
    }

    pub fn to_trits(&self) -> Vec<Trit> {
        self.iter().collect()
    }

    /// Number of bits observed in both vectors with equal values.
    pub fn same(&self, other: &TritVector) -> u32 {
        debug_assert_eq!(self.len, other.len);
        self.known
            .iter()
            .zip(&other.known)
            .zip(self.pos.iter().zip(&other.pos))
            .map(|((ka, kb), (pa, pb))| (ka & kb & !(pa ^ pb)).count_ones())
            .sum()
    }

    pub fn known_count(&self) -> u32 {
        self.known.iter().map(|w| w.count_ones()).sum()
    }

    /// Indices of observed bits.
    pub fn known_bits(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.get(i).is_known())
    }

    /// True if no bit is observed in both vectors with opposite values.
    /// Reading `self` as a conjunction, `other` does not contradict it.
    pub fn covers(&self, other: &TritVector) -> bool {
        debug_assert_eq!(self.len, other.len);
        self.known
            .iter()
            .zip(&other.known)
            .zip(self.pos.iter().zip(&other.pos))
            .all(|((ka, kb), (pa, pb))| ka & kb & (pa ^ pb) == 0)
    }
}

impl fmt::Display for TritVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in self.iter() {
            write!(f, "{}", t.to_char())?;
        }
        Ok(())
    }
}

impl fmt::Debug for TritVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{self}>")
    }
}

impl FromStr for TritVector {
    type Err = EncodeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trits = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != ',')
            .map(Trit::from_char)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TritVector::from_trits(&trits))
    }
}

/// A predicate applied to action placeholders; `args` are 0-based parameter
/// positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fluent {
    pub predicate: String,
    pub args: Vec<usize>,
}

pub fn placeholder(i: usize) -> String {
    format!("?x{}", i + 1)
}

impl Fluent {
    pub fn literal(&self, positive: bool) -> Literal {
        Literal {
            predicate: self.predicate.clone(),
            args: self.args.iter().map(|&i| placeholder(i)).collect(),
            positive,
        }
    }

    pub fn ground(&self, objects: &[String]) -> GroundAtom {
        GroundAtom {
            predicate: self.predicate.clone(),
            args: self.args.iter().map(|&i| objects[i].clone()).collect(),
        }
    }
}

impl fmt::Display for Fluent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.literal(true))
    }
}

/// Bit layout for one action.
///
/// Order: 0-ary fluents first, then fluents grouped by the placeholder in
/// their first argument, each group in predicate declaration order with ties
/// broken by the remaining placeholders. For BlocksWorld `stack` this gives
/// armempty, clear/ontable/holding/on over ?x1, then the same over ?x2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FluentIndex {
    action: String,
    arity: usize,
    fluents: Vec<Fluent>,
    lookup: HashMap<Fluent, usize>,
}

impl FluentIndex {
    pub fn build(domain: &Domain, action: &ActionSchema) -> Self {
        let n = action.arity();
        let mut keyed = Vec::new();
        for (decl, p) in domain.predicates.iter().enumerate() {
            for args in placeholder_tuples(n, p.arity()) {
                let typed = args
                    .iter()
                    .zip(&p.param_types)
                    .all(|(&a, slot)| domain.overlaps(&action.params[a].ty, slot));
                if typed {
                    let group = args.first().map_or(0, |&a| a + 1);
                    let rest = args.iter().skip(1).copied().collect::<Vec<_>>();
                    keyed.push((
                        (group, decl, rest),
                        Fluent {
                            predicate: p.name.clone(),
                            args,
                        },
                    ));
                }
            }
        }
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        Self::from_fluents(&action.name, n, keyed.into_iter().map(|(_, f)| f).collect())
    }

    fn from_fluents(action: &str, arity: usize, fluents: Vec<Fluent>) -> Self {
        let lookup = fluents
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, f)| (f, i))
            .collect();
        FluentIndex {
            action: action.to_string(),
            arity,
            fluents,
            lookup,
        }
    }

    pub fn action(&self) -> &str {
        &self.action
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.fluents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fluents.is_empty()
    }

    pub fn fluent(&self, bit: usize) -> &Fluent {
        &self.fluents[bit]
    }

    pub fn fluents(&self) -> &[Fluent] {
        &self.fluents
    }

    pub fn position(&self, f: &Fluent) -> Option<usize> {
        self.lookup.get(f).copied()
    }

    /// Bit of a schema literal such as `(on ?ob ?underob)`, resolving
    /// variables through `params`.
    pub fn position_of_literal(&self, lit: &Literal, params: &[String]) -> Option<usize> {
        let args = lit
            .args
            .iter()
            .map(|a| params.iter().position(|p| p == a))
            .collect::<Option<Vec<_>>>()?;
        self.position(&Fluent {
            predicate: lit.predicate.clone(),
            args,
        })
    }

    /// Plain-text layout: a header line, then one fluent per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("fluent-index {} {} {}\n", self.action, self.arity, self.len());
        for f in &self.fluents {
            s.push_str(&f.to_string());
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, EncodeError> {
        let bad = |line: usize, message: &str| EncodeError::IndexFormat {
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines();
        let head: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad(1, "empty"))?
            .split_whitespace()
            .collect();
        if head.len() != 4 || head[0] != "fluent-index" {
            return Err(bad(1, "expected `fluent-index <action> <arity> <len>`"));
        }
        let arity: usize = head[2].parse().map_err(|_| bad(1, "bad arity"))?;
        let len: usize = head[3].parse().map_err(|_| bad(1, "bad length"))?;
        let mut fluents = Vec::with_capacity(len);
        for (i, l) in lines.take(len).enumerate() {
            let atom = GroundAtom::parse(l).ok_or_else(|| bad(i + 2, "bad fluent"))?;
            let args = atom
                .args
                .iter()
                .map(|a| {
                    a.strip_prefix("?x")
                        .and_then(|n| n.parse::<usize>().ok())
                        .filter(|&n| n >= 1 && n <= arity)
                        .map(|n| n - 1)
                })
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| bad(i + 2, "bad placeholder"))?;
            fluents.push(Fluent {
                predicate: atom.predicate,
                args,
            });
        }
        if fluents.len() != len {
            return Err(bad(len + 1, "truncated"));
        }
        Ok(Self::from_fluents(head[1], arity, fluents))
    }
}

/// All k-tuples of distinct placeholders in 0..n, lexicographic.
fn placeholder_tuples(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in 0..n {
            if !cur.contains(&i) {
                cur.push(i);
                rec(n, k, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(n, k, &mut Vec::new(), &mut out);
    out
}

fn check_instance(action: &GroundAction, index: &FluentIndex) -> Result<(), EncodeError> {
    if action.args.len() != index.arity {
        return Err(EncodeError::Arity {
            action: index.action.clone(),
            expected: index.arity,
            got: action.args.len(),
        });
    }
    if action.has_repeated_args() {
        return Err(EncodeError::RepeatedArgs(action.to_string()));
    }
    Ok(())
}

/// The observation seen from `action`: one trit per fluent of `index`.
pub fn schematize(
    obs: &ObservedState,
    action: &GroundAction,
    index: &FluentIndex,
) -> Result<TritVector, EncodeError> {
    check_instance(action, index)?;
    let mut v = TritVector::unknown(index.len());
    for (i, f) in index.fluents.iter().enumerate() {
        v.set(i, Trit::from_option(obs.get(&f.ground(&action.args))));
    }
    Ok(v)
}

/// Per bit: `Pos` if both sides are observed and differ, `Neg` if both are
/// observed and agree, `Unknown` otherwise.
pub fn changes_vector(prior: &TritVector, succ: &TritVector) -> Result<TritVector, EncodeError> {
    if prior.len() != succ.len() {
        return Err(EncodeError::Length(prior.len(), succ.len()));
    }
    let mut d = TritVector::unknown(prior.len());
    for (w, (ka, kb)) in prior.known.iter().zip(&succ.known).enumerate() {
        let k = ka & kb;
        d.known[w] = k;
        d.pos[w] = k & (prior.pos[w] ^ succ.pos[w]);
    }
    Ok(d)
}

/// Observed bits as literals over `?x1 .. ?xn`, in bit order.
pub fn deschematize(v: &TritVector, index: &FluentIndex) -> Vec<Literal> {
    v.iter()
        .enumerate()
        .filter_map(|(i, t)| t.value().map(|b| index.fluent(i).literal(b)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub prior: TritVector,
    pub diff: TritVector,
    pub step: usize,
}

/// All encoded examples of one action.
#[derive(Debug, Clone)]
pub struct ActionData {
    pub index: FluentIndex,
    pub examples: Vec<EncodedExample>,
}

/// Encodes a trace per action. Instances with repeated arguments and actions
/// unknown to `domain` are skipped.
pub fn encode_trace(domain: &Domain, trace: &Trace) -> BTreeMap<String, ActionData> {
    let mut out: BTreeMap<String, ActionData> = domain
        .actions
        .iter()
        .map(|a| {
            (
                a.name.clone(),
                ActionData {
                    index: FluentIndex::build(domain, a),
                    examples: Vec::new(),
                },
            )
        })
        .collect();
    for s in &trace.steps {
        let Some(data) = out.get_mut(&s.action.name) else {
            continue;
        };
        let enc = schematize(&s.prior, &s.action, &data.index).and_then(|p| {
            let q = schematize(&s.succ, &s.action, &data.index)?;
            Ok((changes_vector(&p, &q)?, p))
        });
        if let Ok((diff, prior)) = enc {
            data.examples.push(EncodedExample {
                prior,
                diff,
                step: s.step,
            });
        }
    }
    out
}
