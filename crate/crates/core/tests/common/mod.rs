//! Independent reference implementations shared by integration tests.
#![allow(dead_code)]

use std::cmp::Ordering;

/// Candidate rule scored by brute force.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleRule {
    Constant(usize),
    Periodic(Vec<usize>),
    Iid(Vec<u32>),
}

#[derive(Debug, Clone)]
pub struct Scored {
    pub rule: OracleRule,
    pub rule_bits: u32,
    pub data_bits: u32,
    /// Likelihood numerator over `64^len` (1·64^len for deterministic rules).
    pub numerator: u128,
}

fn bits_per_symbol(n: usize) -> u32 {
    let mut b = 0;
    while (1usize << b) < n {
        b += 1;
    }
    b
}

/// Smallest `t` with `numerator · 2^t ≥ 64^len`.
fn data_bits(numerator: u128, len: usize) -> u32 {
    let target = 64u128.pow(len as u32);
    let mut t = 0;
    while numerator << t < target {
        t += 1;
    }
    t
}

fn all_sequences(n: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..n).map(move |x| {
                    let mut t = s.clone();
                    t.push(x);
                    t
                })
            })
            .collect();
    }
    out
}

fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    (0..=total)
        .flat_map(|k| {
            compositions(total - k, parts - 1).into_iter().map(move |mut rest| {
                rest.insert(0, k);
                rest
            })
        })
        .collect()
}

/// Every rule of the class paired with its code lengths for one alphabet size.
pub struct RuleSpace {
    n: usize,
    patterns: Vec<Vec<usize>>,
    iid: Vec<Vec<u32>>,
}

impl RuleSpace {
    pub fn new(n: usize) -> Self {
        let mut patterns = Vec::new();
        for p in 1..=8 {
            patterns.extend(all_sequences(n, p));
        }
        Self {
            n,
            patterns,
            iid: compositions(64, n),
        }
    }

    /// Scores every rule that can produce `prefix` and returns the winner.
    pub fn best(&self, prefix: &[usize]) -> Scored {
        let b = bits_per_symbol(self.n);
        let len = prefix.len();
        let certain = 64u128.pow(len as u32);
        let mut candidates = Vec::new();
        for k in 0..self.n {
            if prefix.iter().all(|&x| x == k) {
                candidates.push(Scored {
                    rule: OracleRule::Constant(k),
                    rule_bits: 2 + b,
                    data_bits: 0,
                    numerator: certain,
                });
            }
        }
        for pat in &self.patterns {
            if prefix.iter().enumerate().all(|(i, &x)| pat[i % pat.len()] == x) {
                candidates.push(Scored {
                    rule: OracleRule::Periodic(pat.clone()),
                    rule_bits: 5 + pat.len() as u32 * b,
                    data_bits: 0,
                    numerator: certain,
                });
            }
        }
        for nums in &self.iid {
            let numerator: u128 = prefix.iter().map(|&x| u128::from(nums[x])).product();
            if numerator > 0 {
                candidates.push(Scored {
                    rule: OracleRule::Iid(nums.clone()),
                    rule_bits: 2 + 6 * self.n as u32,
                    data_bits: data_bits(numerator, len),
                    numerator,
                });
            }
        }
        candidates
            .into_iter()
            .min_by(order)
            .expect("the uniform-ish iid rules always fit")
    }
}

fn class(r: &OracleRule) -> (u8, Vec<u64>) {
    match r {
        OracleRule::Constant(k) => (0, vec![*k as u64]),
        OracleRule::Periodic(p) => (1, p.iter().map(|&x| x as u64).collect()),
        OracleRule::Iid(k) => (2, k.iter().map(|&x| u64::from(x)).collect()),
    }
}

fn order(a: &Scored, b: &Scored) -> Ordering {
    let (ca, pa) = class(&a.rule);
    let (cb, pb) = class(&b.rule);
    (a.rule_bits + a.data_bits)
        .cmp(&(b.rule_bits + b.data_bits))
        .then(a.rule_bits.cmp(&b.rule_bits))
        .then(ca.cmp(&cb))
        .then(b.numerator.cmp(&a.numerator))
        .then(pa.cmp(&pb))
}

/// Every sequence over `n` symbols with length in `1..=max_len`.
pub fn all_prefixes(n: usize, max_len: usize) -> Vec<Vec<usize>> {
    (1..=max_len).flat_map(|l| all_sequences(n, l)).collect()
}

/// Converts the library's rule into the oracle's representation.
pub fn from_library(c: &precedence_core::dynamics::mdl::RuleClass) -> OracleRule {
    use precedence_core::dynamics::mdl::RuleClass;
    match c {
        RuleClass::Constant(k) => OracleRule::Constant(*k),
        RuleClass::Periodic(p) => OracleRule::Periodic(p.clone()),
        RuleClass::Iid(k) => OracleRule::Iid(k.clone()),
    }
}

/// Number of prefixes on which the library disagrees with the oracle, with
/// the first disagreement.
pub fn mdl_disagreements(n: usize, max_len: usize) -> (usize, usize, Option<String>) {
    let space = RuleSpace::new(n);
    let prefixes = all_prefixes(n, max_len);
    let mut bad = 0;
    let mut first = None;
    for p in &prefixes {
        let want = space.best(p);
        let got = precedence_core::dynamics::mdl::simplest_rule_induct(p, n).expect("valid prefix");
        let same = from_library(&got.class) == want.rule
            && got.description_length == want.rule_bits
            && got.data_bits == want.data_bits;
        if !same {
            bad += 1;
            if first.is_none() {
                first = Some(format!("{p:?}: library {got:?}, oracle {want:?}"));
            }
        }
    }
    (prefixes.len(), bad, first)
}
