//! Per-effect rules from trained classifiers by greedy generalization of
//! positive support vectors.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::encoding::{FluentIndex, Trit, TritVector};
use crate::perceptron::{SvMode, VotedModel};

/// Anything that scores trit vectors like a voted perceptron.
pub trait WeightOracle {
    fn weight(&self, x: &TritVector) -> i64;

    /// `(bit, weight(x with bit negated))` for each observed bit of `x`.
    fn flip_weights(&self, x: &TritVector) -> Vec<(usize, i64)> {
        x.known_bits()
            .map(|i| (i, self.weight(&x.with(i, x.get(i).negate()))))
            .collect()
    }
}

impl WeightOracle for VotedModel {
    fn weight(&self, x: &TritVector) -> i64 {
        VotedModel::weight(self, x)
    }

    fn flip_weights(&self, x: &TritVector) -> Vec<(usize, i64)> {
        VotedModel::flip_weights(self, x)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerEffectRule {
    pub pre: TritVector,
    pub effect_bit: usize,
    pub weight: i64,
    pub seed: TritVector,
    /// The seed already covered a negative example and was kept as is.
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExtractConfig {
    pub sv_mode: SvMode,
    /// Stop only when every child covers a negative example, trying children
    /// in order of increasing weight drop.
    pub strict: bool,
}

/// True if some negative example (effect did not change) is covered by `pre`.
pub fn covers_neg(pre: &TritVector, negatives: &[TritVector]) -> bool {
    negatives.iter().any(|n| pre.covers(n))
}

/// Observed bits of `x` ordered by `weight(x) - weight(x with bit negated)`,
/// smallest first, lower index first on ties.
fn ranked_bits<W: WeightOracle + ?Sized>(oracle: &W, x: &TritVector) -> Vec<usize> {
    let w = oracle.weight(x);
    let mut drops: Vec<(i64, usize)> = oracle
        .flip_weights(x)
        .into_iter()
        .map(|(i, wi)| (w - wi, i))
        .collect();
    drops.sort();
    drops.into_iter().map(|(_, i)| i).collect()
}

/// The observed bit whose negation costs the least weight.
pub fn least_discriminative_bit<W: WeightOracle + ?Sized>(oracle: &W, x: &TritVector) -> Option<usize> {
    ranked_bits(oracle, x).first().copied()
}

/// Generalizes one seed. Returns the rule vector and whether the seed was
/// flagged.
pub fn generalize<W: WeightOracle + ?Sized>(
    oracle: &W,
    seed: &TritVector,
    negatives: &[TritVector],
    strict: bool,
) -> (TritVector, bool) {
    if covers_neg(seed, negatives) {
        return (seed.clone(), true);
    }
    let mut parent = seed.clone();
    loop {
        let ranked = ranked_bits(oracle, &parent);
        let tries = if strict { ranked.len() } else { ranked.len().min(1) };
        let next = ranked[..tries]
            .iter()
            .map(|&i| parent.with(i, Trit::Unknown))
            .find(|child| !covers_neg(child, negatives));
        match next {
            Some(child) => parent = child,
            None => return (parent, false),
        }
    }
}

/// Rules for one classifier. `negatives` are the priors of training examples
/// labelled -1.
pub fn extract_rules<W: WeightOracle + ?Sized>(
    oracle: &W,
    seeds: &[TritVector],
    negatives: &[TritVector],
    effect_bit: usize,
    strict: bool,
) -> Vec<PerEffectRule> {
    let mut best: HashMap<TritVector, PerEffectRule> = HashMap::new();
    let mut order = Vec::new();
    for seed in seeds {
        let (pre, flagged) = generalize(oracle, seed, negatives, strict);
        let weight = oracle.weight(&pre);
        if weight <= 0 {
            continue;
        }
        let rule = PerEffectRule {
            pre: pre.clone(),
            effect_bit,
            weight,
            seed: seed.clone(),
            flagged,
        };
        match best.get_mut(&pre) {
            Some(r) if r.weight >= weight => {}
            Some(r) => *r = rule,
            None => {
                order.push(pre.clone());
                best.insert(pre, rule);
            }
        }
    }
    let mut out: Vec<PerEffectRule> = order.into_iter().map(|p| best.remove(&p).unwrap()).collect();
    out.sort_by(|a, b| b.weight.cmp(&a.weight));
    out
}

/// Extraction driven by a trained model and the examples it was trained on.
pub fn extract_from_model(
    model: &VotedModel,
    training: &[(TritVector, bool)],
    cfg: ExtractConfig,
) -> Vec<PerEffectRule> {
    let seeds: Vec<TritVector> = model
        .positive_support_vectors(cfg.sv_mode)
        .into_iter()
        .map(|(x, _)| x)
        .collect();
    let negatives: Vec<TritVector> = training
        .iter()
        .filter(|(_, y)| !y)
        .map(|(x, _)| x.clone())
        .collect();
    extract_rules(model, &seeds, &negatives, model.effect_bit, cfg.strict)
}

/// Rules grouped by effect fluent, one `[weight] (and ...)` line per rule.
pub fn format_rules(index: &FluentIndex, rules: &[PerEffectRule]) -> String {
    let mut bits: Vec<usize> = rules.iter().map(|r| r.effect_bit).collect();
    bits.sort();
    bits.dedup();
    let mut s = String::new();
    for b in bits {
        writeln!(s, "{} changes when:", index.fluent(b)).unwrap();
        for r in rules.iter().filter(|r| r.effect_bit == b) {
            let lits: Vec<String> = crate::encoding::deschematize(&r.pre, index)
                .iter()
                .map(|l| l.to_string())
                .collect();
            let flag = if r.flagged { " !" } else { "" };
            writeln!(s, "  [{}] (and {}){flag}", r.weight, lits.join(" ")).unwrap();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perceptron::{KernelSpec, MistakeEntry, TrainConfig};

    fn v(s: &str) -> TritVector {
        s.parse().unwrap()
    }

    /// Additive score: base plus a bonus for each bit at its preferred value.
    struct Additive {
        base: i64,
        bonus: Vec<(Trit, i64)>,
    }

    impl WeightOracle for Additive {
        fn weight(&self, x: &TritVector) -> i64 {
            self.base
                + self
                    .bonus
                    .iter()
                    .enumerate()
                    .filter(|(i, (t, _))| x.get(*i) == *t)
                    .map(|(_, (_, b))| b)
                    .sum::<i64>()
        }
    }

    fn lattice_oracle() -> Additive {
        Additive {
            base: 30,
            bonus: vec![(Trit::Pos, 30), (Trit::Neg, 10), (Trit::Pos, 2), (Trit::Pos, 28)],
        }
    }

    fn lattice_negatives() -> Vec<TritVector> {
        vec![v("-+++"), v("++--")]
    }

    #[test]
    fn four_bit_lattice_walk() {
        let o = lattice_oracle();
        let negs = lattice_negatives();
        let seed = v("+-++");
        assert_eq!(o.weight(&seed), 100);
        assert_eq!(least_discriminative_bit(&o, &seed), Some(2));
        assert_eq!(least_discriminative_bit(&o, &v("+-*+")), Some(1));
        let (rule, flagged) = generalize(&o, &seed, &negs, false);
        assert_eq!(rule, v("+**+"));
        assert!(!flagged);
        // the rule is clean but both of its children cover a negative
        assert!(!covers_neg(&rule, &negs));
        assert!(covers_neg(&v("***+"), &negs));
        assert!(covers_neg(&v("+***"), &negs));
        assert_eq!(generalize(&o, &seed, &negs, true).0, rule);
    }

    #[test]
    fn covers_examples() {
        assert!(v("+*").covers(&v("+-")));
        assert!(!v("+*").covers(&v("-*")));
        assert!(v("+-").covers(&v("**")));
        assert!(covers_neg(&v("+-"), &[v("+-")]));
        assert!(!covers_neg(&v("++"), &[v("--"), v("-+")]));
    }

    #[test]
    fn seed_covering_negative_is_flagged() {
        let o = lattice_oracle();
        let negs = vec![v("+-++")];
        let (rule, flagged) = generalize(&o, &v("+-++"), &negs, false);
        assert_eq!(rule, v("+-++"));
        assert!(flagged);
        let rules = extract_rules(&o, &[v("+-++")], &negs, 0, false);
        assert_eq!(rules.len(), 1);
        assert!(rules[0].flagged);
    }

    #[test]
    fn single_observed_bit() {
        let o = lattice_oracle();
        assert_eq!(least_discriminative_bit(&o, &v("**+*")), Some(2));
        assert_eq!(least_discriminative_bit(&o, &v("****")), None);
        // with no negatives the walk ends at the empty conjunction
        assert_eq!(generalize(&o, &v("+-++"), &[], false).0, v("****"));
    }

    #[test]
    fn noise_bit_is_removed_first() {
        // every mistake leaves bit 2 unobserved, so the score ignores it
        let entries = [("++*", true, 3), ("-+*", false, 2), ("+-*", false, 1), ("+**", true, 4)];
        let mistakes = entries
            .iter()
            .map(|&(x, label, count)| MistakeEntry { x: v(x), label, alpha: 1, count })
            .collect::<Vec<_>>();
        let text = format!(
            "striplearn-model 1\nkernel dnf\naction a\neffect-bit 0\nepochs 1\nlength 3\nmistakes {}\n{}",
            mistakes.len(),
            mistakes
                .iter()
                .map(|m| format!("{} 1 {} {}\n", if m.label { '+' } else { '-' }, m.count, m.x))
                .collect::<String>()
        );
        let m = VotedModel::from_text(&text).unwrap();
        for x in ["+++", "++-", "-+-", "+--"] {
            let x = v(x);
            let flipped = x.with(2, x.get(2).negate());
            assert_eq!(m.weight(&x), m.weight(&flipped));
        }
        assert_eq!(least_discriminative_bit(&m, &v("+++")), Some(2));
    }

    #[test]
    fn rules_are_sound_on_trained_model() {
        // effect fires iff bits 0 and 1 are both +; bits 2..4 vary freely
        let data: Vec<(TritVector, bool)> = (0..32u32)
            .map(|i| {
                let s: String = (0..5).map(|b| if i >> b & 1 == 1 { '+' } else { '-' }).collect();
                (v(&s), i & 3 == 3)
            })
            .collect();
        let m = VotedModel::train(&data, KernelSpec::Dnf, TrainConfig { epochs: 4, shuffle_seed: None }, "a", 0).unwrap();
        let rules = extract_from_model(&m, &data, ExtractConfig::default());
        assert!(!rules.is_empty());
        let negs: Vec<_> = data.iter().filter(|(_, y)| !y).map(|(x, _)| x.clone()).collect();
        for r in &rules {
            assert!(r.weight > 0);
            assert!(r.pre.covers(&r.seed));
            assert!(r.flagged || !covers_neg(&r.pre, &negs));
        }
        assert_eq!(rules[0].pre, v("++***"));
    }
}
