//! Merging per-effect rules into one STRIPS rule per action.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;

use crate::encoding::{deschematize, placeholder, EncodedExample, FluentIndex, Trit, TritVector};
use crate::extraction::{PerEffectRule, WeightOracle};
use crate::pddl::{ActionSchema, Literal, TypedParam};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombineConfig {
    /// Tolerated relative F-score drop for a new precondition.
    pub eps_p: f64,
    /// Minimum F-score of an effect relative to every other effect.
    pub eps_e: f64,
}

impl Default for CombineConfig {
    fn default() -> Self {
        CombineConfig {
            eps_p: 0.95,
            eps_e: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FScore {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

impl FScore {
    /// Scores from counts. Nothing predicted and nothing changed scores 1;
    /// nothing predicted against real changes scores 0.
    pub fn from_counts(tp: usize, predicted: usize, actual: usize) -> Self {
        if predicted == 0 && actual == 0 {
            return FScore {
                precision: 1.0,
                recall: 1.0,
                f: 1.0,
            };
        }
        let precision = if predicted == 0 {
            0.0
        } else {
            tp as f64 / predicted as f64
        };
        let recall = if actual == 0 {
            1.0
        } else {
            tp as f64 / actual as f64
        };
        let f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        FScore {
            precision,
            recall,
            f,
        }
    }
}

/// F-score of `pre` as a predictor of a change at `effect_bit`, over the
/// examples whose change at that bit was observed.
pub fn fscore(pre: &TritVector, effect_bit: usize, training: &[EncodedExample]) -> FScore {
    let (mut tp, mut predicted, mut actual) = (0, 0, 0);
    for x in training {
        let changed = match x.diff.get(effect_bit) {
            Trit::Unknown => continue,
            t => t == Trit::Pos,
        };
        let covered = pre.covers(&x.prior);
        predicted += covered as usize;
        actual += changed as usize;
        tp += (covered && changed) as usize;
    }
    FScore::from_counts(tp, predicted, actual)
}

/// A rule under construction.
#[derive(Debug, Clone, PartialEq)]
pub struct StripsRuleDraft {
    pub v_rule: TritVector,
    pub e_rule: BTreeSet<usize>,
    /// Bits pinned at `*`.
    pub locks: BTreeSet<usize>,
    /// The per-effect rule each effect bit was first accepted from.
    pub origin: BTreeMap<usize, PerEffectRule>,
    pub log: Vec<String>,
}

impl StripsRuleDraft {
    pub fn new(v_rule: TritVector) -> Self {
        StripsRuleDraft {
            v_rule,
            e_rule: BTreeSet::new(),
            locks: BTreeSet::new(),
            origin: BTreeMap::new(),
            log: Vec::new(),
        }
    }
}

/// Outcome of merging the next rule's precondition into the draft.
#[derive(Debug, Clone, PartialEq)]
pub enum Merge {
    Candidate {
        v: TritVector,
        /// Conflict bits resolved to `*`; locked if the candidate is kept.
        new_locks: BTreeSet<usize>,
    },
    EffectConflict,
    Unresolved(usize),
}

/// Classifier weights by effect bit, plus the action's training examples.
pub struct Combiner<'a> {
    pub oracles: BTreeMap<usize, &'a dyn WeightOracle>,
    pub training: &'a [EncodedExample],
    pub config: CombineConfig,
}

impl<'a> Combiner<'a> {
    fn weight(&self, e: usize, x: &TritVector) -> i64 {
        self.oracles.get(&e).map_or(0, |o| o.weight(x))
    }

    fn f(&self, pre: &TritVector, e: usize) -> f64 {
        fscore(pre, e, self.training).f
    }

    fn positive_for_all(&self, draft: &StripsRuleDraft, v: &TritVector) -> bool {
        draft.e_rule.iter().all(|&e| self.weight(e, v) > 0)
    }

    /// Weight, coverage and F-score tolerance checks for a new precondition.
    pub fn accept_precons(&self, draft: &StripsRuleDraft, v_new: &TritVector) -> bool {
        draft.e_rule.iter().all(|&e| {
            if self.weight(e, v_new) <= 0 {
                return false;
            }
            let supported = self
                .training
                .iter()
                .any(|x| x.diff.get(e) == Trit::Pos && v_new.covers(&x.prior));
            supported && self.f(v_new, e) >= self.config.eps_p * self.f(&draft.v_rule, e)
        })
    }

    /// True if `v_rule` predicts `e_new` within `eps_e` of every effect in
    /// `e_rule`.
    pub fn accept_effect(&self, draft: &StripsRuleDraft, e_new: usize) -> bool {
        let f_new = self.f(&draft.v_rule, e_new);
        draft
            .e_rule
            .iter()
            .all(|&e| f_new >= self.config.eps_e * self.f(&draft.v_rule, e))
    }

    /// Value for conflict bit `bit` in `merged` (other conflicts already `*`):
    /// `*` if acceptable, otherwise the acceptable sign with the higher mean
    /// weight over `e_rule`.
    pub fn resolve_conflict(
        &self,
        draft: &StripsRuleDraft,
        merged: &TritVector,
        bit: usize,
    ) -> Option<Trit> {
        if self.positive_for_all(draft, &merged.with(bit, Trit::Unknown)) {
            return Some(Trit::Unknown);
        }
        let mean = |v: &TritVector| {
            let n = draft.e_rule.len().max(1) as f64;
            draft.e_rule.iter().map(|&e| self.weight(e, v) as f64).sum::<f64>() / n
        };
        [Trit::Pos, Trit::Neg]
            .into_iter()
            .map(|t| (t, merged.with(bit, t)))
            .filter(|(_, v)| self.positive_for_all(draft, v))
            .map(|(t, v)| (t, mean(&v)))
            .fold(None, |best: Option<(Trit, f64)>, (t, m)| match best {
                Some((_, bm)) if bm >= m => best,
                _ => Some((t, m)),
            })
            .map(|(t, _)| t)
    }

    /// The precondition value the draft implies at `e`: `v_rule[e]`, or the
    /// origin rule's value when `v_rule` leaves it open.
    fn effective_pre(draft: &StripsRuleDraft, e: usize) -> Trit {
        match draft.v_rule.get(e) {
            Trit::Unknown => draft.origin.get(&e).map_or(Trit::Unknown, |r| r.pre.get(e)),
            t => t,
        }
    }

    pub fn combine_precons(&self, draft: &StripsRuleDraft, next: &PerEffectRule) -> Merge {
        let e = next.effect_bit;
        if draft.e_rule.contains(&e) {
            let ours = Self::effective_pre(draft, e);
            let theirs = next.pre.get(e);
            if ours.is_known() && theirs == ours.negate() {
                return Merge::EffectConflict;
            }
        }
        let v_rule = &draft.v_rule;
        let mut merged = v_rule.clone();
        let mut conflicts = Vec::new();
        for i in 0..v_rule.len() {
            if draft.locks.contains(&i) {
                continue;
            }
            match (v_rule.get(i), next.pre.get(i)) {
                (Trit::Unknown, t) => merged.set(i, t),
                (r, n) if n.is_known() && r != n => {
                    merged.set(i, Trit::Unknown);
                    conflicts.push(i);
                }
                _ => {}
            }
        }
        let mut new_locks = BTreeSet::new();
        let mut candidate = merged.clone();
        for &i in &conflicts {
            match self.resolve_conflict(draft, &merged, i) {
                Some(Trit::Unknown) => {
                    new_locks.insert(i);
                }
                Some(t) => candidate.set(i, t),
                None => return Merge::Unresolved(i),
            }
        }
        Merge::Candidate {
            v: candidate,
            new_locks,
        }
    }

    /// Drops candidate bits that differ from `v_rule` when doing so passes
    /// `accept_precons` and lowers no effect's F-score. Bits are tried in
    /// ascending order against the evolving candidate.
    pub fn simplify_precons(&self, draft: &mut StripsRuleDraft, candidate: TritVector) -> TritVector {
        let mut cur = candidate;
        for i in 0..cur.len() {
            if !cur.get(i).is_known() || cur.get(i) == draft.v_rule.get(i) {
                continue;
            }
            let alt = cur.with(i, Trit::Unknown);
            let no_worse = draft.e_rule.iter().all(|&e| self.f(&alt, e) >= self.f(&cur, e));
            if no_worse && self.accept_precons(draft, &alt) {
                draft.log.push(format!("  simplify: drop bit {i} -> {alt}"));
                cur = alt;
            }
        }
        cur
    }

    /// One ascending pass testing each effect against the others.
    pub fn simplify_effects(&self, draft: &mut StripsRuleDraft) {
        let effects: Vec<usize> = draft.e_rule.iter().copied().collect();
        for e in effects {
            draft.e_rule.remove(&e);
            if self.accept_effect(draft, e) {
                draft.e_rule.insert(e);
            } else {
                draft.log.push(format!("  simplify: drop effect {e}"));
            }
        }
    }

    /// Folds one per-effect rule into the draft.
    pub fn step(&self, draft: &mut StripsRuleDraft, next: &PerEffectRule) {
        draft.log.push(format!(
            "next [{}] effect {} pre {}",
            next.weight, next.effect_bit, next.pre
        ));
        let (v, new_locks) = match self.combine_precons(draft, next) {
            Merge::Candidate { v, new_locks } => (v, new_locks),
            Merge::EffectConflict => {
                draft.log.push("  rejected: effect conflict".into());
                return;
            }
            Merge::Unresolved(bit) => {
                draft.log.push(format!("  rejected: unresolved conflict at bit {bit}"));
                return;
            }
        };
        if v != draft.v_rule {
            let v = self.simplify_precons(draft, v);
            if self.accept_precons(draft, &v) {
                draft.log.push(format!("  precondition {} -> {v}", draft.v_rule));
                draft.v_rule = v;
                draft.locks.extend(new_locks);
            } else {
                draft.log.push(format!("  precondition {v} rejected"));
            }
        }
        let e = next.effect_bit;
        if self.accept_effect(draft, e) {
            if draft.e_rule.insert(e) {
                draft.origin.insert(e, next.clone());
                draft.log.push(format!(
                    "  effect {e} accepted (F {:.3})",
                    self.f(&draft.v_rule, e)
                ));
            }
            self.simplify_effects(draft);
        } else {
            draft.log.push(format!(
                "  effect {e} rejected (F {:.3})",
                self.f(&draft.v_rule, e)
            ));
        }
    }

    /// One rule for the action, or `None` when there are no input rules.
    pub fn combine(&self, rules: &[PerEffectRule]) -> Option<StripsRuleDraft> {
        let ordered = order_rules(rules);
        let first = ordered.first()?;
        let mut draft = StripsRuleDraft::new(first.pre.clone());
        for r in &ordered {
            self.step(&mut draft, r);
        }
        for &e in &draft.e_rule {
            let s = fscore(&draft.v_rule, e, self.training);
            draft.log.push(format!(
                "final effect {e}: P {:.3} R {:.3} F {:.3}",
                s.precision, s.recall, s.f
            ));
        }
        Some(draft)
    }
}

/// Weight descending, then effect bit, then precondition text.
pub fn order_rules(rules: &[PerEffectRule]) -> Vec<PerEffectRule> {
    let mut v = rules.to_vec();
    v.sort_by(|a, b| {
        b.weight
            .cmp(&a.weight)
            .then(a.effect_bit.cmp(&b.effect_bit))
            .then_with(|| a.pre.to_string().cmp(&b.pre.to_string()))
    });
    v
}

/// Converts a draft to a schema with parameters `?x1 .. ?xn` typed as in
/// `signature`.
///
/// An effect's direction is the negation of its precondition value in
/// `v_rule`, else in the origin rule, else of the majority prior value over
/// covered training examples where it changed. Effects with no direction
/// are dropped.
pub fn to_strips(
    draft: &StripsRuleDraft,
    index: &FluentIndex,
    signature: &ActionSchema,
    training: &[EncodedExample],
) -> ActionSchema {
    let params = signature
        .params
        .iter()
        .enumerate()
        .map(|(i, p)| TypedParam::new(placeholder(i), p.ty.clone()))
        .collect();
    let pre = deschematize(&draft.v_rule, index).into_iter().collect();
    let mut eff = BTreeSet::new();
    for &e in &draft.e_rule {
        let from = match Combiner::effective_pre(draft, e) {
            Trit::Unknown => majority_prior(draft, e, training),
            t => t,
        };
        match from.value() {
            Some(was) => {
                let lit: Literal = index.fluent(e).literal(!was);
                eff.insert(lit);
            }
            None => warn!(
                "{}: no direction for effect {}; dropped",
                signature.name,
                index.fluent(e)
            ),
        }
    }
    ActionSchema {
        name: signature.name.clone(),
        params,
        pre,
        eff,
    }
}

fn majority_prior(draft: &StripsRuleDraft, e: usize, training: &[EncodedExample]) -> Trit {
    let (mut pos, mut neg) = (0usize, 0usize);
    for x in training {
        if x.diff.get(e) == Trit::Pos && draft.v_rule.covers(&x.prior) {
            match x.prior.get(e) {
                Trit::Pos => pos += 1,
                Trit::Neg => neg += 1,
                Trit::Unknown => {}
            }
        }
    }
    match pos.cmp(&neg) {
        std::cmp::Ordering::Greater => Trit::Pos,
        std::cmp::Ordering::Less => Trit::Neg,
        std::cmp::Ordering::Equal => Trit::Unknown,
    }
}
