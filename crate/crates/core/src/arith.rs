//! Pure integer machinery: rho(k), sumsets, the rho inequality, and the
//! A-sequence constructor/verifier.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Smallest positive integer not dividing `k - 1`. Always >= 2.
pub fn rho(k: u64) -> Result<u32> {
    if k < 2 {
        return Err(Error::OutOfRange(format!("rho requires k >= 2, got {k}")));
    }
    let mut l = 2u64;
    while (k - 1) % l == 0 {
        l += 1;
    }
    Ok(l as u32)
}

/// True iff `rho(k)` is a prime power. Expected to hold for every k: if
/// rho = ab with coprime a, b > 1 then a and b both divide k - 1, hence so
/// does ab. Kept as a checked property rather than an assumption.
pub fn rho_is_prime_power(k: u64) -> Result<bool> {
    let mut r = rho(k)? as u64;
    let mut p = 2u64;
    while p * p <= r {
        if r % p == 0 {
            while r % p == 0 {
                r /= p;
            }
            return Ok(r == 1);
        }
        p += 1;
    }
    Ok(true) // r itself is prime
}

/// Lev's bound `rho(k) <= 2 log2 k + 2`, checked in exact integer
/// arithmetic as `2^(rho - 2) <= k^2`.
pub fn lev_bound_holds(k: u64) -> Result<bool> {
    let r = rho(k)?;
    if r <= 2 {
        return Ok(true);
    }
    let shift = r - 2;
    if shift >= 127 {
        return Ok(false);
    }
    Ok(1u128 << shift <= (k as u128) * (k as u128))
}

/// Checks `k - 1 >= (rho - t) t (t + 1)` for every `t` in `1..rho`. On
/// failure returns the maximizing `t` as witness.
pub fn check_rho_inequality(k: u64) -> Result<(bool, Option<u32>)> {
    if k < 3 {
        return Err(Error::OutOfRange(format!("inequality requires k >= 3, got {k}")));
    }
    let r = rho(k)? as u64;
    let mut best_t = 1;
    let mut best_val = 0u64;
    for t in 1..r {
        let val = (r - t) * t * (t + 1);
        if val > best_val {
            best_val = val;
            best_t = t;
        }
    }
    if best_val <= k - 1 {
        Ok((true, None))
    } else {
        Ok((false, Some(best_t as u32)))
    }
}

/// `{a_1 + ... + a_d : a_i in A}` by iterated pairwise sumset.
pub fn sumset(d: u32, set: &[u64]) -> Result<Vec<u64>> {
    if set.is_empty() {
        return Err(Error::OutOfRange("sumset of the empty set".into()));
    }
    if d == 0 {
        return Err(Error::OutOfRange("sumset requires d >= 1".into()));
    }
    let mut sorted: Vec<u64> = set.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut acc = sorted.clone();
    for _ in 1..d {
        acc = pairwise_sumset(&acc, &sorted);
    }
    Ok(acc)
}

/// `{a + b : a in x, b in y}` as a sorted deduplicated vector.
pub fn pairwise_sumset(x: &[u64], y: &[u64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(x.len() * y.len());
    for &a in x {
        for &b in y {
            out.push(a + b);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// One set of an A-sequence. The general construction only ever produces
/// arithmetic progressions starting at 1, so those get a compact form with
/// O(1) sumset membership; anything else is stored explicitly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AseqSet {
    /// `{1, 1 + step, ..., 1 + count * step}`; `count = 0` is the set `{1}`.
    Progression { step: u64, count: u64 },
    Explicit(Vec<u64>),
}

impl AseqSet {
    pub fn from_elements(mut elems: Vec<u64>) -> Result<Self> {
        elems.sort_unstable();
        elems.dedup();
        if elems.is_empty() {
            return Err(Error::MalformedSequence("empty set in A-sequence".into()));
        }
        if elems[0] != 1 {
            return Err(Error::MalformedSequence(format!(
                "every A_l must contain 1 and consist of positive integers; got min {}",
                elems[0]
            )));
        }
        if elems.len() == 1 {
            return Ok(AseqSet::Progression { step: 1, count: 0 });
        }
        let step = elems[1] - elems[0];
        let is_ap = step > 0
            && elems.windows(2).all(|w| w[1] - w[0] == step);
        if is_ap {
            Ok(AseqSet::Progression { step, count: (elems.len() - 1) as u64 })
        } else {
            Ok(AseqSet::Explicit(elems))
        }
    }

    pub fn elements(&self) -> Vec<u64> {
        match self {
            AseqSet::Progression { step, count } => {
                (0..=*count).map(|g| 1 + g * step).collect()
            }
            AseqSet::Explicit(v) => v.clone(),
        }
    }

    pub fn max_element(&self) -> u64 {
        match self {
            AseqSet::Progression { step, count } => 1 + count * step,
            AseqSet::Explicit(v) => *v.last().unwrap(),
        }
    }

    /// Second-smallest element, if the set has more than one.
    fn second_element(&self) -> Option<u64> {
        match self {
            AseqSet::Progression { count: 0, .. } => None,
            AseqSet::Progression { step, .. } => Some(1 + step),
            AseqSet::Explicit(v) => v.get(1).copied(),
        }
    }

    fn is_singleton_one(&self) -> bool {
        matches!(self, AseqSet::Progression { count: 0, .. })
    }
}

/// Membership oracle for `c * A` (the c-fold sumset of A), truncated to
/// values `<= limit`. Progressions get the closed form
/// `cA = {c + g*step : 0 <= g <= c*count}`; explicit sets fall back to an
/// iterated pairwise sumset truncated at `limit` (sound for all queries
/// `<= limit` because summands are positive).
enum SumsetOracle {
    Progression { c: u64, step: u64, max_g: u64 },
    Explicit(Vec<u64>),
}

impl SumsetOracle {
    fn build(c: u64, set: &AseqSet, limit: u64) -> Self {
        match set {
            AseqSet::Progression { step, count } => SumsetOracle::Progression {
                c,
                step: *step,
                max_g: c.saturating_mul(*count),
            },
            AseqSet::Explicit(v) => {
                let mut acc: Vec<u64> = v.iter().copied().filter(|&x| x <= limit).collect();
                for _ in 1..c {
                    let mut next: Vec<u64> = Vec::new();
                    for &a in &acc {
                        for &b in v {
                            let s = a + b;
                            if s <= limit {
                                next.push(s);
                            }
                        }
                    }
                    next.sort_unstable();
                    next.dedup();
                    acc = next;
                }
                SumsetOracle::Explicit(acc)
            }
        }
    }

    fn contains(&self, y: u64) -> bool {
        match self {
            SumsetOracle::Progression { c, step, max_g } => {
                if y < *c {
                    return false;
                }
                let diff = y - c;
                if *step == 0 {
                    return diff == 0;
                }
                diff % step == 0 && diff / step <= *max_g
            }
            SumsetOracle::Explicit(v) => v.binary_search(&y).is_ok(),
        }
    }

    /// True iff every element of `set` lies in `{1} u (1 + cA)`, i.e. this
    /// oracle's target set. For a progression candidate against a progression
    /// oracle the test is O(1): membership of the second and last elements
    /// plus step divisibility decide the whole chain.
    fn superset_of(&self, set: &AseqSet) -> bool {
        match set {
            AseqSet::Progression { count: 0, .. } => true,
            AseqSet::Progression { step: q, count } => {
                if !self.contains(*q) {
                    return false;
                }
                if *count == 1 {
                    return true;
                }
                match self {
                    SumsetOracle::Progression { step: p, .. } => {
                        q % p == 0 && self.contains(count * q)
                    }
                    SumsetOracle::Explicit(_) => (2..=*count).rev().all(|g| self.contains(g * q)),
                }
            }
            AseqSet::Explicit(v) => v.iter().rev().all(|&e| e == 1 || self.contains(e - 1)),
        }
    }
}

/// A candidate sequence `A_1, ..., A_m` with per-set width lists
/// `d_1, ..., d_{rho-1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ASequence {
    pub k: u64,
    pub sets: Vec<AseqSet>,
    pub widths: Vec<Vec<u64>>,
}

/// JSON form of an A-sequence: sets materialized as element lists.
#[derive(Serialize, Deserialize)]
pub struct ASequenceJson {
    pub k: u64,
    pub sets: Vec<Vec<u64>>,
    pub widths: Vec<Vec<u64>>,
}

impl From<&ASequence> for ASequenceJson {
    fn from(seq: &ASequence) -> Self {
        ASequenceJson {
            k: seq.k,
            sets: seq.sets.iter().map(|s| s.elements()).collect(),
            widths: seq.widths.clone(),
        }
    }
}

impl TryFrom<ASequenceJson> for ASequence {
    type Error = Error;

    fn try_from(json: ASequenceJson) -> Result<ASequence> {
        let sets = json
            .sets
            .into_iter()
            .map(AseqSet::from_elements)
            .collect::<Result<Vec<_>>>()?;
        Ok(ASequence { k: json.k, sets, widths: json.widths })
    }
}

impl ASequence {
    fn validate(&self) -> Result<u32> {
        let r = rho(self.k)?;
        if self.sets.is_empty() {
            return Err(Error::MalformedSequence("no sets".into()));
        }
        if self.sets.len() != self.widths.len() {
            return Err(Error::MalformedSequence(format!(
                "{} sets but {} width lists",
                self.sets.len(),
                self.widths.len()
            )));
        }
        if !self.sets.last().unwrap().is_singleton_one() {
            return Err(Error::MalformedSequence("the final set A_m must be {1}".into()));
        }
        for (l, widths) in self.widths.iter().enumerate() {
            if widths.len() != (r - 1) as usize {
                return Err(Error::MalformedSequence(format!(
                    "set {} has {} widths, expected rho - 1 = {}",
                    l + 1,
                    widths.len(),
                    r - 1
                )));
            }
            if widths.iter().any(|&d| d == 0) {
                return Err(Error::MalformedSequence(format!("set {} has a zero width", l + 1)));
            }
        }
        Ok(r)
    }
}

/// First failing `(l, i, j)` of a verification, 1-based as reported.
pub type AseqFailure = (usize, usize, usize);

/// Checks the A-sequence hypothesis: for every set `A_l` and every
/// `1 <= i <= j <= rho - 1`, with `c = d_i + ... + d_j`, either
/// `k` lies in `{1} + (1 + cA_l)` or some earlier set `A_l'` is contained in
/// `{1} + (1 + cA_l)`. Returns the lexicographically first failing triple.
pub fn verify_asequence(seq: &ASequence) -> Result<(bool, Option<AseqFailure>)> {
    let r = seq.validate()? as usize;
    let k = seq.k;

    // Index of already-verified (earlier) sets keyed by their second element,
    // candidates kept in insertion order so that scanning backwards probes the
    // nearest earlier set first. Sets equal to {1} are tracked by a flag: {1}
    // is a subset of every query set.
    let mut by_second: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut seen_singleton = false;

    for (l, (set, widths)) in seq.sets.iter().zip(&seq.widths).enumerate() {
        // Prefix sums so c = pre[j + 1] - pre[i].
        let mut pre = vec![0u64; r];
        for (i, &d) in widths.iter().enumerate() {
            pre[i + 1] = pre[i] + d;
        }
        // Queries only ever ask about values <= max(k, largest earlier
        // element); anything above cannot witness membership.
        let query_limit = k.max(
            seq.sets[..l]
                .iter()
                .map(|s| s.max_element())
                .max()
                .unwrap_or(0),
        );

        // Distinct c values, remembering the first (i, j) for failure reports.
        let mut first_pair: HashMap<u64, (usize, usize)> = HashMap::new();
        for i in 1..r {
            for j in i..r {
                let c = pre[j] - pre[i - 1];
                first_pair.entry(c).or_insert((i, j));
            }
        }
        let mut failures: Vec<(usize, usize)> = Vec::new();
        for (&c, &(i, j)) in &first_pair {
            let oracle = SumsetOracle::build(c, set, query_limit);
            // k in {1} u (1 + cA_l)?
            if k == 1 || (k >= 1 && oracle.contains(k - 1)) {
                continue;
            }
            // Some earlier set contained in {1} u (1 + cA_l)?
            if seen_singleton {
                continue;
            }
            let found = by_second.iter().any(|(&a2, candidates)| {
                if a2 < 2 || !oracle.contains(a2 - 1) {
                    return false;
                }
                candidates.iter().rev().any(|&cand| oracle.superset_of(&seq.sets[cand]))
            });
            if !found {
                failures.push((i, j));
            }
        }
        if let Some(&(i, j)) = failures.iter().min() {
            return Ok((false, Some((l + 1, i, j))));
        }

        if set.is_singleton_one() {
            seen_singleton = true;
        } else if let Some(a2) = set.second_element() {
            by_second.entry(a2).or_default().push(l);
        }
    }
    Ok((true, None))
}

/// Builds the A-sequence for `k`: the hard-coded lists for
/// `k in {2, 3, 5, 7, 13}`, otherwise all progressions
/// `B_{d,t} = {1, d+1, ..., td+1}` for `1 <= d <= rho-1`, `1 <= t < (k-1)/d`
/// ordered by decreasing d then decreasing t, followed by `{1}`. Widths for
/// `B_{d,t}` alternate between `d` and `alpha * d` where `s` is maximal with
/// `d * s <= rho - 1` and `alpha` minimal with `alpha * d * (d+1) >= k - 1`:
/// position `i` gets `alpha * d` when `i = 0 mod (s+1)` and `alpha != 2`.
/// The trailing `{1}` takes all widths 1.
pub fn construct_asequence(k: u64) -> Result<ASequence> {
    let r = rho(k)? as u64;
    let special: Option<(Vec<Vec<u64>>, Vec<Vec<u64>>)> = match k {
        2 => Some((vec![vec![1]], vec![vec![1]])),
        3 => Some((vec![vec![1, 2], vec![1]], vec![vec![1, 1], vec![1, 1]])),
        5 => Some((vec![vec![1, 3], vec![1]], vec![vec![2, 2], vec![2, 2]])),
        7 => Some((
            vec![vec![1, 3], vec![1, 2], vec![1, 4], vec![1]],
            vec![vec![2, 2, 2], vec![1, 1, 1], vec![1, 1, 1], vec![1, 1, 1]],
        )),
        13 => Some((
            vec![vec![1, 4], vec![1, 2], vec![1, 3, 5, 7], vec![1, 3], vec![1, 5], vec![1]],
            vec![
                vec![3, 3, 3, 3],
                vec![3, 3, 3, 3],
                vec![1, 1, 1, 1],
                vec![1, 1, 1, 1],
                vec![1, 1, 1, 1],
                vec![1, 1, 1, 1],
            ],
        )),
        _ => None,
    };
    if let Some((sets, widths)) = special {
        let sets = sets.into_iter().map(AseqSet::from_elements).collect::<Result<Vec<_>>>()?;
        return Ok(ASequence { k, sets, widths });
    }

    let mut sets = Vec::new();
    let mut widths = Vec::new();
    for d in (1..=r - 1).rev() {
        // 1 <= t < (k-1)/d, decreasing.
        let t_max = (k - 1).div_ceil(d) - 1;
        let s = (r - 1) / d;
        let alpha = (k - 1).div_ceil(d * (d + 1));
        let width_list: Vec<u64> = (1..r)
            .map(|i| if i % (s + 1) == 0 && alpha != 2 { alpha * d } else { d })
            .collect();
        for t in (1..=t_max).rev() {
            sets.push(AseqSet::Progression { step: d, count: t });
            widths.push(width_list.clone());
        }
    }
    sets.push(AseqSet::Progression { step: 1, count: 0 });
    widths.push(vec![1; (r - 1) as usize]);
    Ok(ASequence { k, sets, widths })
}
