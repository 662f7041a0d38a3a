//! Voted kernel perceptrons, one per (action, effect bit).

mod kernel;

use std::fmt::Write as _;
use std::ops::{AddAssign, SubAssign};

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::encoding::{Trit, TritVector};
use crate::rng::stream;

pub use kernel::{kernel_eval, KernelSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("no training examples")]
    Empty,
    #[error("example {index} has length {got}, expected {expected}")]
    Length {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("model text line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MistakeEntry {
    pub x: TritVector,
    /// `true` for label +1.
    pub label: bool,
    pub alpha: u32,
    /// Number of examples this hypothesis survived, counting the mistake
    /// that created it.
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Shuffle each epoch with this seed; `None` keeps trace order.
    pub shuffle_seed: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2,
            shuffle_seed: None,
        }
    }
}

/// Which support vectors count as positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SvMode {
    /// Mistake vectors the final voted model predicts as +1.
    #[default]
    Predicted,
    /// Mistake vectors whose training label was +1.
    Label,
}

/// Kernel values by `same` count, in the narrowest exact representation.
#[derive(Debug, Clone, PartialEq)]
enum Table {
    Small(Vec<i128>),
    Big(Vec<BigInt>),
}

impl Table {
    /// Exact for sums of up to `terms` kernel values.
    fn new(kernel: KernelSpec, len: usize, terms: usize) -> Self {
        let big = kernel.table(len);
        let max = big.last().cloned().unwrap_or_default();
        if max * BigInt::from(terms.max(1)) < (BigInt::from(1) << 126u32) {
            Table::Small(big.iter().map(|b| b.to_i128().expect("bounded")).collect())
        } else {
            Table::Big(big)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VotedModel {
    pub kernel: KernelSpec,
    pub action: String,
    pub effect_bit: usize,
    pub epochs: usize,
    len: usize,
    mistakes: Vec<MistakeEntry>,
    table: Table,
}

fn voted_sum<T>(table: &[T], mistakes: &[MistakeEntry], sames: impl Iterator<Item = u32>) -> i64
where
    T: Zero + Signed,
    for<'a> T: AddAssign<&'a T> + SubAssign<&'a T>,
{
    let mut s = T::zero();
    let mut w = 0i64;
    for (m, k) in mistakes.iter().zip(sames) {
        let kv = &table[k as usize];
        for _ in 0..m.alpha {
            if m.label {
                s += kv
            } else {
                s -= kv
            }
        }
        let c = m.count as i64;
        w += if s.is_positive() { c } else { -c };
    }
    w
}

fn last_sum_positive<T>(table: &[T], mistakes: &[MistakeEntry], x: &TritVector) -> bool
where
    T: Zero + Signed,
    for<'a> T: AddAssign<&'a T> + SubAssign<&'a T>,
{
    let mut s = T::zero();
    for m in mistakes {
        let kv = &table[m.x.same(x) as usize];
        for _ in 0..m.alpha {
            if m.label {
                s += kv
            } else {
                s -= kv
            }
        }
    }
    s.is_positive()
}

impl VotedModel {
    fn from_parts(
        kernel: KernelSpec,
        action: &str,
        effect_bit: usize,
        epochs: usize,
        len: usize,
        mistakes: Vec<MistakeEntry>,
        terms: usize,
    ) -> Self {
        VotedModel {
            kernel,
            action: action.to_string(),
            effect_bit,
            epochs,
            len,
            mistakes,
            table: Table::new(kernel, len, terms),
        }
    }

    /// Sequential voted-perceptron training. Each mistake appends a
    /// hypothesis with count 1; each correct prediction increments the
    /// newest hypothesis. Predictions during training use the newest
    /// hypothesis.
    pub fn train(
        examples: &[(TritVector, bool)],
        kernel: KernelSpec,
        cfg: TrainConfig,
        action: &str,
        effect_bit: usize,
    ) -> Result<Self, TrainError> {
        let Some((first, _)) = examples.first() else {
            return Err(TrainError::Empty);
        };
        let len = first.len();
        if let Some((index, (x, _))) = examples.iter().enumerate().find(|(_, (x, _))| x.len() != len) {
            return Err(TrainError::Length {
                index,
                expected: len,
                got: x.len(),
            });
        }
        let mut model = Self::from_parts(
            kernel,
            action,
            effect_bit,
            cfg.epochs,
            len,
            Vec::new(),
            examples.len() * cfg.epochs,
        );
        let mut order: Vec<usize> = (0..examples.len()).collect();
        for epoch in 0..cfg.epochs {
            if let Some(seed) = cfg.shuffle_seed {
                order.shuffle(&mut stream(seed, &format!("perceptron/epoch/{epoch}")));
            }
            for &i in &order {
                let (x, y) = &examples[i];
                if model.predict_last(x) == *y {
                    if let Some(last) = model.mistakes.last_mut() {
                        last.count += 1;
                    }
                } else {
                    model.mistakes.push(MistakeEntry {
                        x: x.clone(),
                        label: *y,
                        alpha: 1,
                        count: 1,
                    });
                }
            }
        }
        Ok(model)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn mistakes(&self) -> &[MistakeEntry] {
        &self.mistakes
    }

    /// `same(x_j, x)` for every mistake vector.
    pub fn sames(&self, x: &TritVector) -> Vec<u32> {
        self.mistakes.iter().map(|m| m.x.same(x)).collect()
    }

    /// Voted score `sum_i c_i * sign(sum_{j<=i} y_j a_j K(x_j, x))` with
    /// `sign(0) = -1`.
    pub fn weight(&self, x: &TritVector) -> i64 {
        assert_eq!(x.len(), self.len, "vector length");
        self.weight_from_sames(self.mistakes.iter().map(|m| m.x.same(x)))
    }

    pub fn weight_from_sames(&self, sames: impl Iterator<Item = u32>) -> i64 {
        match &self.table {
            Table::Small(t) => voted_sum(t, &self.mistakes, sames),
            Table::Big(t) => voted_sum(t, &self.mistakes, sames),
        }
    }

    /// `true` (label +1) iff the voted weight is positive.
    pub fn predict(&self, x: &TritVector) -> bool {
        self.weight(x) > 0
    }

    /// Prediction of the newest hypothesis alone (the unvoted perceptron).
    pub fn predict_last(&self, x: &TritVector) -> bool {
        match &self.table {
            Table::Small(t) => last_sum_positive(t, &self.mistakes, x),
            Table::Big(t) => last_sum_positive(t, &self.mistakes, x),
        }
    }

    /// Weights of `x` with each observed bit negated in turn, as
    /// `(bit, weight)` pairs in bit order.
    pub fn flip_weights(&self, x: &TritVector) -> Vec<(usize, i64)> {
        let base = self.sames(x);
        x.known_bits()
            .map(|i| {
                let xi = x.get(i);
                let adjusted = self.mistakes.iter().zip(&base).map(|(m, &s)| {
                    let mi = m.x.get(i);
                    if mi == xi {
                        s - 1
                    } else if mi == xi.negate() {
                        s + 1
                    } else {
                        s
                    }
                });
                (i, self.weight_from_sames(adjusted))
            })
            .collect()
    }

    /// Distinct mistake vectors selected by `mode`, with their weights,
    /// by weight descending (first occurrence breaks ties).
    pub fn positive_support_vectors(&self, mode: SvMode) -> Vec<(TritVector, i64)> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for m in &self.mistakes {
            if !seen.insert(&m.x) {
                continue;
            }
            let w = self.weight(&m.x);
            let keep = match mode {
                SvMode::Predicted => w > 0,
                SvMode::Label => m.label,
            };
            if keep {
                out.push((m.x.clone(), w));
            }
        }
        out.sort_by(|a, b| b.1.cmp(&a.1));
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "striplearn-model 1").unwrap();
        writeln!(s, "kernel {}", self.kernel).unwrap();
        writeln!(s, "action {}", self.action).unwrap();
        writeln!(s, "effect-bit {}", self.effect_bit).unwrap();
        writeln!(s, "epochs {}", self.epochs).unwrap();
        writeln!(s, "length {}", self.len).unwrap();
        writeln!(s, "mistakes {}", self.mistakes.len()).unwrap();
        for m in &self.mistakes {
            let label = if m.label { '+' } else { '-' };
            writeln!(s, "{label} {} {} {}", m.alpha, m.count, m.x).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, TrainError> {
        let bad = |line: usize, message: String| TrainError::Format { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut field = |key: &str| -> Result<(usize, String), TrainError> {
            let (n, l) = lines.next().ok_or_else(|| bad(0, format!("missing `{key}`")))?;
            let rest = l
                .strip_prefix(key)
                .ok_or_else(|| bad(n, format!("expected `{key}`")))?;
            Ok((n, rest.trim().to_string()))
        };
        let (n, v) = field("striplearn-model")?;
        if v != "1" {
            return Err(bad(n, format!("unsupported model version {v}")));
        }
        let (n, k) = field("kernel")?;
        let kernel: KernelSpec = k.parse().map_err(|e| bad(n, e))?;
        let (_, action) = field("action")?;
        let num = |(n, v): (usize, String)| v.parse::<usize>().map_err(|e| bad(n, e.to_string()));
        let effect_bit = num(field("effect-bit")?)?;
        let epochs = num(field("epochs")?)?;
        let len = num(field("length")?)?;
        let count = num(field("mistakes")?)?;
        let mut mistakes = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, l) = lines.next().ok_or_else(|| bad(0, "truncated mistake list".into()))?;
            let parts: Vec<&str> = l.split_whitespace().collect();
            let [label, alpha, c, x] = parts[..] else {
                return Err(bad(n, "expected `<label> <alpha> <count> <trits>`".into()));
            };
            let label = match label {
                "+" => true,
                "-" => false,
                _ => return Err(bad(n, format!("bad label `{label}`"))),
            };
            let x: TritVector = x.parse().map_err(|e| bad(n, format!("{e}")))?;
            if x.len() != len {
                return Err(bad(n, format!("vector length {} != {len}", x.len())));
            }
            mistakes.push(MistakeEntry {
                x,
                label,
                alpha: alpha.parse().map_err(|_| bad(n, "bad alpha".into()))?,
                count: c.parse().map_err(|_| bad(n, "bad count".into()))?,
            });
        }
        let terms = mistakes.iter().map(|m| m.alpha as usize).sum();
        Ok(Self::from_parts(kernel, &action, effect_bit, epochs, len, mistakes, terms))
    }
}

/// Training pairs for effect bit `bit`: examples whose change at `bit` was
/// observed, labelled `true` when it changed.
pub fn labelled<'a>(
    examples: impl IntoIterator<Item = (&'a TritVector, &'a TritVector)>,
    bit: usize,
) -> Vec<(TritVector, bool)> {
    examples
        .into_iter()
        .filter_map(|(prior, diff)| match diff.get(bit) {
            Trit::Unknown => None,
            t => Some((prior.clone(), t == Trit::Pos)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(s: &str) -> TritVector {
        s.parse().unwrap()
    }

    /// Direct double sum with big integers.
    fn naive_weight(m: &VotedModel, x: &TritVector) -> i64 {
        let mut w = 0i64;
        for i in 0..m.mistakes.len() {
            let mut s = BigInt::zero();
            for e in &m.mistakes[..=i] {
                let k = kernel_eval(m.kernel, &e.x, x) * BigInt::from(e.alpha);
                if e.label {
                    s += k
                } else {
                    s -= k
                }
            }
            let c = m.mistakes[i].count as i64;
            w += if s > BigInt::zero() { c } else { -c };
        }
        w
    }

    fn model(kernel: KernelSpec, entries: &[(&str, bool, u64)]) -> VotedModel {
        let len = entries.first().map_or(0, |e| e.0.len());
        let mistakes = entries
            .iter()
            .map(|&(x, label, count)| MistakeEntry {
                x: v(x),
                label,
                alpha: 1,
                count,
            })
            .collect::<Vec<_>>();
        let n = mistakes.len();
        VotedModel::from_parts(kernel, "a", 0, 1, len, mistakes, n)
    }

    #[test]
    fn single_positive_mistake_weight_is_its_count() {
        let m = model(KernelSpec::Dnf, &[("+-", true, 5)]);
        assert_eq!(m.weight(&v("++")), 5);
        assert!(m.predict(&v("++")));
        let empty = model(KernelSpec::Dnf, &[]);
        assert_eq!(empty.weight(&TritVector::unknown(0)), 0);
    }

    #[test]
    fn zero_sum_counts_negative() {
        // linear kernel with same = 0 contributes 0, so the sum stays 0
        let m = model(KernelSpec::Linear, &[("+", true, 3)]);
        assert_eq!(m.weight(&v("-")), -3);
        assert!(!m.predict(&v("-")));
    }

    #[test]
    fn separable_data_is_learned() {
        // y = x0 over all fully observed 2-bit vectors
        let data: Vec<(TritVector, bool)> = ["++", "+-", "-+", "--"]
            .iter()
            .map(|s| (v(s), s.starts_with('+')))
            .collect();
        for k in [KernelSpec::Dnf, KernelSpec::KDnf(2), KernelSpec::Linear] {
            let m = VotedModel::train(&data, k, TrainConfig { epochs: 3, shuffle_seed: None }, "a", 0).unwrap();
            for (x, y) in &data {
                assert_eq!(m.predict(x), *y, "{k} on {x}");
            }
        }
    }

    #[test]
    fn constant_labels() {
        for y in [true, false] {
            let data: Vec<_> = ["+-", "-+", "++"].iter().map(|s| (v(s), y)).collect();
            let m = VotedModel::train(&data, KernelSpec::Dnf, TrainConfig::default(), "a", 0).unwrap();
            if y {
                assert!(!m.mistakes().is_empty());
            }
            for s in ["+-", "--", "**", "+*"] {
                assert_eq!(m.predict(&v(s)), y, "{s}");
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_shuffle_seeded() {
        let data: Vec<_> = (0..64u32)
            .map(|i| {
                let s: String = (0..6).map(|b| if i >> b & 1 == 1 { '+' } else { '-' }).collect();
                (v(&s), i % 3 == 0)
            })
            .collect();
        let cfg = TrainConfig { epochs: 2, shuffle_seed: Some(4) };
        let a = VotedModel::train(&data, KernelSpec::Dnf, cfg, "a", 0).unwrap();
        let b = VotedModel::train(&data, KernelSpec::Dnf, cfg, "a", 0).unwrap();
        assert_eq!(a.mistakes(), b.mistakes());
        let total: u64 = a.mistakes().iter().map(|m| m.count).sum();
        assert!(total <= 128);
    }

    #[test]
    fn train_errors() {
        assert_eq!(
            VotedModel::train(&[], KernelSpec::Dnf, TrainConfig::default(), "a", 0),
            Err(TrainError::Empty)
        );
        let bad = [(v("+-"), true), (v("+"), false)];
        assert!(matches!(
            VotedModel::train(&bad, KernelSpec::Dnf, TrainConfig::default(), "a", 0),
            Err(TrainError::Length { index: 1, .. })
        ));
    }

    #[test]
    fn support_vectors_dedup_and_order() {
        let m = model(
            KernelSpec::Dnf,
            &[("++", true, 1), ("++", true, 2), ("--", false, 4)],
        );
        let sv = m.positive_support_vectors(SvMode::Predicted);
        assert_eq!(sv.len(), 1);
        assert_eq!(sv[0].0, v("++"));
        assert!(sv.iter().all(|(_, w)| *w > 0));
        let none = model(KernelSpec::Dnf, &[("--", false, 4)]);
        assert!(none.positive_support_vectors(SvMode::Predicted).is_empty());
        assert!(none.positive_support_vectors(SvMode::Label).is_empty());
    }

    #[test]
    fn big_table_matches_small() {
        let x = "+".repeat(130);
        let y = format!("-{}", "+".repeat(129));
        let m = model(KernelSpec::Dnf, &[(&x, true, 2), (&y, false, 3)]);
        assert!(matches!(m.table, Table::Big(_)));
        for probe in [&x, &y] {
            assert_eq!(m.weight(&v(probe)), naive_weight(&m, &v(probe)));
        }
    }

    #[test]
    fn text_round_trip() {
        let m = model(KernelSpec::KDnf(3), &[("+-*", true, 2), ("--+", false, 1)]);
        let back = VotedModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(VotedModel::from_text("striplearn-model 2\n").is_err());
    }

    fn trit_string(n: usize) -> impl Strategy<Value = String> {
        proptest::collection::vec(prop_oneof![Just('+'), Just('-'), Just('*')], n)
            .prop_map(|v| v.into_iter().collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prefix_sum_matches_naive(
            (data, probes) in (2usize..12).prop_flat_map(|n| (
                proptest::collection::vec((trit_string(n), any::<bool>()), 1..60),
                proptest::collection::vec(trit_string(n), 1..8),
            )),
            k in prop_oneof![Just(KernelSpec::Linear), Just(KernelSpec::Dnf), (1u32..4).prop_map(KernelSpec::KDnf)],
        ) {
            let data: Vec<_> = data.into_iter().map(|(s, y)| (v(&s), y)).collect();
            let m = VotedModel::train(&data, k, TrainConfig::default(), "a", 0).unwrap();
            for p in probes.iter().map(|s| v(s)) {
                prop_assert_eq!(m.weight(&p), naive_weight(&m, &p));
                for (i, w) in m.flip_weights(&p) {
                    let flipped = p.with(i, p.get(i).negate());
                    prop_assert_eq!(w, naive_weight(&m, &flipped));
                }
            }
        }
    }
}
