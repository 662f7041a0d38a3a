use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::encoding::TritVector;

/// Kernels over trit vectors. All three depend only on `same(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KernelSpec {
    /// `same(x, y)`
    Linear,
    /// `2^same(x, y)`: all conjunctions of observed literals.
    Dnf,
    /// `sum_{l=0..k} C(same(x, y), l)`: conjunctions of at most k literals.
    KDnf(u32),
}

impl KernelSpec {
    /// Exact kernel value for a given `same` count.
    pub fn value(self, same: u32) -> BigInt {
        match self {
            KernelSpec::Linear => BigInt::from(same),
            KernelSpec::Dnf => BigInt::one() << same,
            KernelSpec::KDnf(k) => {
                let mut total = BigInt::zero();
                let mut c = BigInt::one();
                for l in 0..=k.min(same) {
                    total += &c;
                    c = c * (same - l) / (l + 1);
                }
                total
            }
        }
    }

    /// `K(s)` for every `s` in `0..=n`.
    pub fn table(self, n: usize) -> Vec<BigInt> {
        (0..=n as u32).map(|s| self.value(s)).collect()
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Dnf => write!(f, "dnf"),
            KernelSpec::KDnf(k) => write!(f, "{k}-dnf"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "linear" => Ok(KernelSpec::Linear),
            "dnf" => Ok(KernelSpec::Dnf),
            _ => {
                let k = s
                    .strip_suffix("-dnf")
                    .or_else(|| s.strip_prefix("kdnf:"))
                    .and_then(|k| k.parse::<u32>().ok())
                    .ok_or_else(|| format!("unknown kernel `{s}` (expected linear, dnf or <k>-dnf)"))?;
                if k == 0 {
                    return Err("k-DNF needs k >= 1".into());
                }
                Ok(KernelSpec::KDnf(k))
            }
        }
    }
}

impl TryFrom<String> for KernelSpec {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<KernelSpec> for String {
    fn from(k: KernelSpec) -> String {
        k.to_string()
    }
}

/// Exact `K(x, y)`.
pub fn kernel_eval(spec: KernelSpec, x: &TritVector, y: &TritVector) -> BigInt {
    spec.value(x.same(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(s: &str) -> TritVector {
        s.parse().unwrap()
    }

    #[test]
    fn same_examples() {
        assert_eq!(v("+-+").same(&v("+++")), 2);
        assert_eq!(v("+-+-").same(&v("+-+-")), 4);
        assert_eq!(v("**").same(&v("+-")), 0);
    }

    #[test]
    fn kernel_values() {
        assert_eq!(KernelSpec::Dnf.value(2), BigInt::from(4));
        assert_eq!(KernelSpec::KDnf(2).value(2), BigInt::from(4));
        assert_eq!(KernelSpec::KDnf(2).value(5), BigInt::from(1 + 5 + 10));
        assert_eq!(KernelSpec::KDnf(3).value(1), BigInt::from(2));
        for k in [KernelSpec::Dnf, KernelSpec::KDnf(1), KernelSpec::KDnf(3)] {
            assert_eq!(k.value(0), BigInt::one());
        }
        assert_eq!(KernelSpec::Linear.value(0), BigInt::zero());
        assert_eq!(KernelSpec::Dnf.value(200), BigInt::one() << 200u32);
    }

    #[test]
    fn kdnf_with_large_k_is_dnf() {
        for s in 0..40 {
            assert_eq!(KernelSpec::KDnf(64).value(s), KernelSpec::Dnf.value(s));
        }
    }

    #[test]
    fn spec_text() {
        for k in [KernelSpec::Linear, KernelSpec::Dnf, KernelSpec::KDnf(3)] {
            assert_eq!(k.to_string().parse::<KernelSpec>().unwrap(), k);
        }
        assert!("0-dnf".parse::<KernelSpec>().is_err());
        assert!("rbf".parse::<KernelSpec>().is_err());
    }

    fn spec() -> impl Strategy<Value = KernelSpec> {
        prop_oneof![
            Just(KernelSpec::Linear),
            Just(KernelSpec::Dnf),
            (1u32..6).prop_map(KernelSpec::KDnf)
        ]
    }

    fn trits(n: usize) -> impl Strategy<Value = String> {
        proptest::collection::vec(prop_oneof![Just('+'), Just('-'), Just('*')], n)
            .prop_map(|v| v.into_iter().collect())
    }

    proptest! {
        #[test]
        fn symmetric(k in spec(), (a, b) in (1usize..70).prop_flat_map(|n| (trits(n), trits(n)))) {
            let (x, y) = (v(&a), v(&b));
            prop_assert_eq!(kernel_eval(k, &x, &y), kernel_eval(k, &y, &x));
        }

        #[test]
        fn self_maximal(
            k in spec(),
            (a, b) in (1usize..70).prop_flat_map(|n| (
                proptest::collection::vec(prop_oneof![Just('+'), Just('-')], n)
                    .prop_map(|v| v.into_iter().collect::<String>()),
                trits(n),
            ))
        ) {
            let (x, y) = (v(&a), v(&b));
            prop_assert!(kernel_eval(k, &x, &x) >= kernel_eval(k, &x, &y));
        }

        #[test]
        fn monotone_in_same(k in spec(), s in 0u32..120) {
            prop_assert!(k.value(s + 1) >= k.value(s));
        }
    }
}
