//! Minimum-description-length induction over a fixed, finite rule class.
//!
//! Rules and their code lengths (`b = ⌈log₂ n_outcomes⌉`):
//!
//! | class             | rule bits       |
//! |-------------------|-----------------|
//! | constant `k`      | `2 + b`         |
//! | periodic, `p ≤ 8` | `2 + 3 + p·b`   |
//! | i.i.d. categorical with numerators over 64 | `2 + 6·n_outcomes` |
//!
//! The data term is `⌈−log₂ L(prefix | rule)⌉`, infinite when the rule cannot
//! produce the prefix. The selected rule minimizes rule bits plus data bits;
//! ties go to fewer rule bits, then class order constant < periodic < iid,
//! then lexicographically smaller parameters. Among i.i.d. rules with the same
//! total, the one with the higher exact likelihood is preferred before the
//! lexicographic comparison, so the i.i.d. winner is always the integer
//! maximum-likelihood categorical.
//!
//! Code lengths are computed exactly: for i.i.d. rules the likelihood is
//! `P / 64^len` with `P = Π k_j^{c_j}` an integer, and
//! `⌈−log₂ L⌉ = 6·len − (bitlen(P) − 1)`.

use std::cmp::Ordering;

use num_bigint::BigUint;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ledger::sample_from_counts;

pub const MAX_PREFIX: usize = 64;
pub const MAX_PERIOD: usize = 8;
/// Denominator of i.i.d. rule probabilities.
pub const IID_DENOMINATOR: u32 = 64;
const CLASS_TAG_BITS: u32 = 2;
const PERIOD_BITS: u32 = 3;
const NUMERATOR_BITS: u32 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleClass {
    Constant(usize),
    /// Repeats `pattern`; the period is its length.
    Periodic(Vec<usize>),
    /// Numerators of `k / 64` probabilities, one per outcome.
    Iid(Vec<u32>),
}

impl RuleClass {
    pub fn rank(&self) -> u8 {
        match self {
            RuleClass::Constant(_) => 0,
            RuleClass::Periodic(_) => 1,
            RuleClass::Iid(_) => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RuleClass::Constant(_) => "constant",
            RuleClass::Periodic(_) => "periodic",
            RuleClass::Iid(_) => "iid",
        }
    }

    fn params(&self) -> Vec<u64> {
        match self {
            RuleClass::Constant(k) => vec![*k as u64],
            RuleClass::Periodic(p) => p.iter().map(|&x| x as u64).collect(),
            RuleClass::Iid(k) => k.iter().map(|&x| u64::from(x)).collect(),
        }
    }
}

/// An induced rule with its code lengths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleDescription {
    pub class: RuleClass,
    /// Bits to write down the rule.
    pub description_length: u32,
    /// `⌈−log₂ L⌉` of the prefix the rule was induced from.
    pub data_bits: u32,
    /// `log₂ L` of that prefix.
    pub fit: f64,
}

impl RuleDescription {
    pub fn total_bits(&self) -> u32 {
        self.description_length + self.data_bits
    }

    /// Outcome at `position` (0-based, counted from the start of the prefix).
    /// Deterministic for constant and periodic rules; sampled for i.i.d.
    pub fn next_outcome<R: Rng + ?Sized>(&self, position: usize, rng: &mut R) -> usize {
        match &self.class {
            RuleClass::Constant(k) => *k,
            RuleClass::Periodic(pattern) => pattern[position % pattern.len()],
            RuleClass::Iid(nums) => {
                let counts: Vec<u64> = nums.iter().map(|&k| u64::from(k)).collect();
                sample_from_counts(&counts, rng).expect("numerators sum to 64")
            }
        }
    }
}

/// `⌈log₂ n⌉`, with 0 for `n ≤ 1`.
pub fn symbol_bits(n_outcomes: usize) -> u32 {
    if n_outcomes <= 1 {
        0
    } else {
        usize::BITS - (n_outcomes - 1).leading_zeros()
    }
}

pub fn constant_bits(n_outcomes: usize) -> u32 {
    CLASS_TAG_BITS + symbol_bits(n_outcomes)
}

pub fn periodic_bits(period: usize, n_outcomes: usize) -> u32 {
    CLASS_TAG_BITS + PERIOD_BITS + period as u32 * symbol_bits(n_outcomes)
}

pub fn iid_bits(n_outcomes: usize) -> u32 {
    CLASS_TAG_BITS + NUMERATOR_BITS * n_outcomes as u32
}

/// Orders candidates by the selection rule. `la` and `lb` are the integer
/// likelihood numerators; they only break ties between two i.i.d. rules.
fn compare(a: &RuleDescription, b: &RuleDescription, la: &BigUint, lb: &BigUint) -> Ordering {
    a.total_bits()
        .cmp(&b.total_bits())
        .then(a.description_length.cmp(&b.description_length))
        .then(a.class.rank().cmp(&b.class.rank()))
        .then_with(|| lb.cmp(la))
        .then_with(|| a.class.params().cmp(&b.class.params()))
}

/// Selects the minimum-total-code-length rule for `prefix`.
pub fn simplest_rule_induct(prefix: &[usize], n_outcomes: usize) -> Result<RuleDescription> {
    if prefix.is_empty() {
        return Err(Error::InvalidPrefix("empty prefix".into()));
    }
    if prefix.len() > MAX_PREFIX {
        return Err(Error::InvalidPrefix(format!(
            "prefix length {} exceeds {MAX_PREFIX}",
            prefix.len()
        )));
    }
    if let Some(&bad) = prefix.iter().find(|&&x| x >= n_outcomes) {
        return Err(Error::OutcomeOutOfRange {
            outcome: bad,
            n_outcomes,
        });
    }

    let one = BigUint::from(1u32);
    let mut candidates: Vec<(RuleDescription, BigUint)> = Vec::new();

    if prefix.iter().all(|&x| x == prefix[0]) {
        candidates.push((
            RuleDescription {
                class: RuleClass::Constant(prefix[0]),
                description_length: constant_bits(n_outcomes),
                data_bits: 0,
                fit: 0.0,
            },
            one.clone(),
        ));
    }

    // Only the lexicographically smallest consistent pattern per period can win.
    for p in 1..=MAX_PERIOD {
        let consistent = prefix.iter().enumerate().all(|(i, &x)| x == prefix[i % p]);
        if consistent {
            let mut pattern: Vec<usize> = prefix.iter().take(p).copied().collect();
            pattern.resize(p, 0);
            candidates.push((
                RuleDescription {
                    class: RuleClass::Periodic(pattern),
                    description_length: periodic_bits(p, n_outcomes),
                    data_bits: 0,
                    fit: 0.0,
                },
                one.clone(),
            ));
        }
    }

    let (numerators, product) = iid_maximum_likelihood(prefix, n_outcomes);
    let len = prefix.len() as u64;
    let data_bits = (NUMERATOR_BITS as u64 * len - (product.bits() - 1)) as u32;
    let fit = prefix
        .iter()
        .map(|&x| (f64::from(numerators[x]) / f64::from(IID_DENOMINATOR)).log2())
        .sum();
    candidates.push((
        RuleDescription {
            class: RuleClass::Iid(numerators),
            description_length: iid_bits(n_outcomes),
            data_bits,
            fit,
        },
        product,
    ));

    let (best, _) = candidates
        .into_iter()
        .min_by(|(a, la), (b, lb)| compare(a, b, la, lb))
        .expect("the i.i.d. candidate is always present");
    Ok(best)
}

/// Integer maximum-likelihood numerators (summing to 64) and the maximal
/// product `Π k_j^{c_j}`; ties go to the lexicographically smallest vector.
fn iid_maximum_likelihood(prefix: &[usize], n_outcomes: usize) -> (Vec<u32>, BigUint) {
    let mut counts = vec![0u32; n_outcomes];
    for &x in prefix {
        counts[x] += 1;
    }
    // Unseen outcomes always get zero mass at the optimum.
    let seen: Vec<(usize, u32)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (i, c))
        .collect();
    let mass = IID_DENOMINATOR as usize;
    let d = seen.len();

    let powers: Vec<Vec<BigUint>> = seen
        .iter()
        .map(|&(_, c)| (0..=mass).map(|k| BigUint::from(k).pow(c)).collect())
        .collect();

    // best[i][m]: max product for seen[i..] using exactly m units, each >= 1.
    let mut best: Vec<Vec<Option<BigUint>>> = vec![vec![None; mass + 1]; d + 1];
    best[d][0] = Some(BigUint::from(1u32));
    for i in (0..d).rev() {
        let remaining_after = d - i - 1;
        for m in 1..=mass {
            let mut top: Option<BigUint> = None;
            for k in 1..=m.saturating_sub(remaining_after) {
                if let Some(rest) = &best[i + 1][m - k] {
                    let v = &powers[i][k] * rest;
                    if top.as_ref().is_none_or(|t| v > *t) {
                        top = Some(v);
                    }
                }
            }
            best[i][m] = top;
        }
    }

    let product = best[0][mass].clone().expect("at most 64 distinct outcomes");
    let mut numerators = vec![0u32; n_outcomes];
    let mut m = mass;
    for i in 0..d {
        let target = best[i][m].as_ref().expect("reachable state");
        let k = (1..=m)
            .find(|&k| {
                best[i + 1][m - k]
                    .as_ref()
                    .is_some_and(|rest| &powers[i][k] * rest == *target)
            })
            .expect("optimum is attained");
        numerators[seen[i].0] = k as u32;
        m -= k;
    }
    (numerators, product)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn code_lengths() {
        assert_eq!(symbol_bits(1), 0);
        assert_eq!(symbol_bits(2), 1);
        assert_eq!(symbol_bits(3), 2);
        assert_eq!(symbol_bits(4), 2);
        assert_eq!(symbol_bits(5), 3);
        assert_eq!(symbol_bits(64), 6);
        assert_eq!(constant_bits(2), 3);
        assert_eq!(periodic_bits(2, 2), 7);
        assert_eq!(iid_bits(2), 14);
    }

    #[test]
    fn constant_prefix() {
        let r = simplest_rule_induct(&[1, 1, 1, 1], 2).unwrap();
        assert_eq!(r.class, RuleClass::Constant(1));
        assert_eq!(r.total_bits(), 3);
    }

    #[test]
    fn alternating_prefix_is_periodic() {
        let r = simplest_rule_induct(&[0, 1, 0, 1, 0, 1], 2).unwrap();
        assert_eq!(r.class, RuleClass::Periodic(vec![0, 1]));
        assert_eq!(r.total_bits(), 7);
        let r = simplest_rule_induct(&[0, 1, 0, 1], 2).unwrap();
        let mut rng = rand::rng();
        assert_eq!(r.next_outcome(4, &mut rng), 0);
    }

    #[test]
    fn aperiodic_prefix_is_iid() {
        // Thue-Morse: no period <= 8 fits 16 symbols.
        let tm = [0, 1, 1, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0, 1, 1, 0];
        let r = simplest_rule_induct(&tm, 2).unwrap();
        assert_eq!(r.class, RuleClass::Iid(vec![32, 32]));
        assert_eq!(r.data_bits, 16);
        assert_eq!(r.total_bits(), 30);
        assert!((r.fit + 16.0).abs() < 1e-12);
    }

    #[test]
    fn short_prefix_fits_its_own_period() {
        // A prefix of length <= 8 always fits some period <= 8; here period 6.
        let r = simplest_rule_induct(&[0, 1, 1, 0, 1, 0, 0, 1], 2).unwrap();
        assert_eq!(r.class, RuleClass::Periodic(vec![0, 1, 1, 0, 1, 0]));
        assert_eq!(r.total_bits(), 11);
        let r = simplest_rule_induct(&[0, 1, 1], 2).unwrap();
        assert_eq!(r.class, RuleClass::Periodic(vec![0, 1, 1]));
    }

    #[test]
    fn iid_numerators_are_integer_ml() {
        // counts (3, 1): ML numerators 48/16.
        let (k, p) = iid_maximum_likelihood(&[0, 0, 1, 0], 2);
        assert_eq!(k, vec![48, 16]);
        assert_eq!(p, BigUint::from(48u32.pow(3) * 16));
        // three equally frequent outcomes: 21/21/22 is the smallest optimum.
        let (k, _) = iid_maximum_likelihood(&[2, 0, 1], 4);
        assert_eq!(k, vec![21, 21, 22, 0]);
    }

    #[test]
    fn many_outcomes_stay_tractable() {
        let prefix: Vec<usize> = (0..64).map(|i| (i * 37) % 64).collect();
        let r = simplest_rule_induct(&prefix, 64).unwrap();
        assert_eq!(r.class, RuleClass::Iid(vec![1; 64]));
        assert_eq!(r.data_bits, 384);
    }

    #[test]
    fn bad_prefixes() {
        assert!(simplest_rule_induct(&[], 2).is_err());
        assert!(simplest_rule_induct(&[0; 65], 2).is_err());
        assert!(matches!(
            simplest_rule_induct(&[0, 2], 2),
            Err(Error::OutcomeOutOfRange { .. })
        ));
    }
}
