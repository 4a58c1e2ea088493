//! Free-group machinery: reduced words, the free-group measure, the
//! subsemigroups of words with fixed first and last letters, products
//! without cancellation, and labeled-set densities.

use crate::{Error, Q, Result};
use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use std::collections::{BTreeMap, BTreeSet};

/// A letter or its inverse; `rank` indexes the positive alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignedLetter {
    pub rank: u32,
    pub positive: bool,
}

impl SignedLetter {
    pub fn positive(rank: u32) -> Self {
        SignedLetter { rank, positive: true }
    }

    pub fn negative(rank: u32) -> Self {
        SignedLetter { rank, positive: false }
    }

    pub fn inverse(self) -> Self {
        SignedLetter { rank: self.rank, positive: !self.positive }
    }

    pub fn is_inverse_of(self, other: SignedLetter) -> bool {
        self.rank == other.rank && self.positive != other.positive
    }

    /// Index in `0..2|A|`: positive letters first.
    fn state(self, alphabet_size: u32) -> usize {
        self.rank as usize + if self.positive { 0 } else { alphabet_size as usize }
    }

    fn from_state(state: usize, alphabet_size: u32) -> Self {
        if state < alphabet_size as usize {
            SignedLetter::positive(state as u32)
        } else {
            SignedLetter::negative((state - alphabet_size as usize) as u32)
        }
    }

    pub fn render(self) -> String {
        let c = (b'a' + self.rank as u8) as char;
        if self.positive {
            c.to_string()
        } else {
            format!("{c}'")
        }
    }
}

/// A word of the free group in reduced form: no adjacent inverse pair.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReducedWord {
    letters: Vec<SignedLetter>,
}

impl ReducedWord {
    pub fn empty() -> Self {
        ReducedWord { letters: Vec::new() }
    }

    /// Accepts only already-reduced sequences.
    pub fn new(letters: Vec<SignedLetter>) -> Result<Self> {
        for pair in letters.windows(2) {
            if pair[0].is_inverse_of(pair[1]) {
                return Err(Error::InvalidWord(format!(
                    "not reduced: {} {}",
                    pair[0].render(),
                    pair[1].render()
                )));
            }
        }
        Ok(ReducedWord { letters })
    }

    pub fn len(&self) -> u32 {
        self.letters.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn letters(&self) -> &[SignedLetter] {
        &self.letters
    }

    pub fn first(&self) -> Option<SignedLetter> {
        self.letters.first().copied()
    }

    pub fn last(&self) -> Option<SignedLetter> {
        self.letters.last().copied()
    }

    pub fn is_prefix_of(&self, other: &ReducedWord) -> bool {
        other.letters.starts_with(&self.letters)
    }

    /// Group product: concatenate then cancel at the seam.
    pub fn mul(&self, other: &ReducedWord) -> ReducedWord {
        let mut out = self.letters.clone();
        for &l in &other.letters {
            if out.last().is_some_and(|&t| t.is_inverse_of(l)) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        ReducedWord { letters: out }
    }

    /// Concatenation without cancellation, when the seam does not cancel.
    pub fn concat_no_cancel(&self, other: &ReducedWord) -> Option<ReducedWord> {
        match (self.last(), other.first()) {
            (Some(t), Some(h)) if t.is_inverse_of(h) => None,
            _ => {
                let mut letters = self.letters.clone();
                letters.extend_from_slice(&other.letters);
                Some(ReducedWord { letters })
            }
        }
    }

    /// Parses the text syntax "a b' c": space-separated letters, apostrophe
    /// for the inverse. The empty string is the empty word.
    pub fn parse(text: &str, alphabet_size: u32) -> Result<Self> {
        let mut letters = Vec::new();
        for tok in text.split_whitespace() {
            let mut chars = tok.chars();
            let c = chars
                .next()
                .ok_or_else(|| Error::InvalidWord(format!("empty token in {text:?}")))?;
            if !c.is_ascii_lowercase() {
                return Err(Error::InvalidWord(format!("bad letter in {tok:?}")));
            }
            let rank = c as u32 - 'a' as u32;
            if rank >= alphabet_size {
                return Err(Error::InvalidWord(format!("letter {c} outside the alphabet")));
            }
            let positive = match chars.next() {
                None => true,
                Some('\'') if chars.next().is_none() => false,
                _ => return Err(Error::InvalidWord(format!("bad token {tok:?}"))),
            };
            letters.push(SignedLetter { rank, positive });
        }
        ReducedWord::new(letters)
    }

    pub fn render(&self) -> String {
        self.letters.iter().map(|l| l.render()).collect::<Vec<_>>().join(" ")
    }
}

/// Iterated cancellation of adjacent inverse pairs; confluent and
/// idempotent, so a single stack pass suffices.
pub fn reduce(letters: &[SignedLetter]) -> ReducedWord {
    let mut out: Vec<SignedLetter> = Vec::with_capacity(letters.len());
    for &l in letters {
        if out.last().is_some_and(|&t| t.is_inverse_of(l)) {
            out.pop();
        } else {
            out.push(l);
        }
    }
    ReducedWord { letters: out }
}

/// Free-group measure: `(2|A|)^-1 (2|A| - 1)^-(|w|-1)` for nonempty words,
/// 1 for the empty word.
pub fn group_mu(w: &ReducedWord, alphabet_size: u32) -> Q {
    group_mu_len(w.len(), alphabet_size)
}

pub fn group_mu_len(len: u32, alphabet_size: u32) -> Q {
    if len == 0 {
        return Q::one();
    }
    let two_a = BigInt::from(2 * alphabet_size);
    let denom = &two_a * BigInt::from(2 * alphabet_size - 1).pow(len - 1);
    Q::new(BigInt::one(), denom)
}

/// The subsemigroup of reduced words starting with `alpha` and ending with
/// `beta`; requires `alpha != beta^-1` so that the seam of a product never
/// cancels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Subsemigroup {
    pub alpha: SignedLetter,
    pub beta: SignedLetter,
}

impl Subsemigroup {
    pub fn new(alpha: SignedLetter, beta: SignedLetter) -> Result<Self> {
        if alpha.is_inverse_of(beta) {
            return Err(Error::OutOfRange(
                "subsemigroup requires alpha != beta^-1".into(),
            ));
        }
        Ok(Subsemigroup { alpha, beta })
    }

    pub fn contains(&self, w: &ReducedWord) -> bool {
        w.first() == Some(self.alpha) && w.last() == Some(self.beta)
    }
}

/// Membership in `F^{alpha beta}`.
pub fn in_subsemigroup(w: &ReducedWord, g: &Subsemigroup) -> bool {
    g.contains(w)
}

/// Product of two explicit sets without cancellation: concatenations whose
/// seam stays reduced, truncated to lengths `<= bound`.
pub fn product_no_cancel(
    x: &BTreeSet<ReducedWord>,
    y: &BTreeSet<ReducedWord>,
    bound: u32,
) -> BTreeSet<ReducedWord> {
    let mut out = BTreeSet::new();
    for a in x {
        for b in y {
            if a.len() + b.len() > bound {
                continue;
            }
            if let Some(w) = a.concat_no_cancel(b) {
                out.insert(w);
            }
        }
    }
    out
}

/// Labels on positive letters; the label of an inverse letter is the
/// negation mod m. Label sums are invariant under reduction because a
/// cancelled pair sums to zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupLabeling {
    pub modulus: u32,
    pub labels: Vec<u32>,
    pub targets: Vec<u32>,
}

impl GroupLabeling {
    pub fn new(modulus: u32, labels: Vec<u32>, targets: Vec<u32>) -> Result<Self> {
        if modulus == 0 || labels.is_empty() || targets.is_empty() {
            return Err(Error::OutOfRange("need modulus >= 1, labels, and targets".into()));
        }
        if labels.iter().any(|&l| l >= modulus) || targets.iter().any(|&t| t >= modulus) {
            return Err(Error::OutOfRange("labels and targets must lie in 0..m".into()));
        }
        let mut targets = targets;
        targets.sort_unstable();
        targets.dedup();
        Ok(GroupLabeling { modulus, labels, targets })
    }

    pub fn letter_label(&self, l: SignedLetter) -> u32 {
        let base = self.labels[l.rank as usize];
        if l.positive {
            base
        } else {
            (self.modulus - base) % self.modulus
        }
    }

    /// Label sum of a (not necessarily reduced) letter sequence.
    pub fn sequence_label(&self, letters: &[SignedLetter]) -> u32 {
        let m = self.modulus as u64;
        (letters.iter().map(|&l| self.letter_label(l) as u64).sum::<u64>() % m) as u32
    }

    pub fn residue(&self, w: &ReducedWord) -> u32 {
        self.sequence_label(w.letters())
    }

    pub fn hits_target(&self, r: u32) -> bool {
        self.targets.binary_search(&r).is_ok()
    }

    pub fn contains(&self, w: &ReducedWord) -> bool {
        !w.is_empty() && self.hits_target(self.residue(w))
    }
}

/// All reduced words of length `n`.
pub fn reduced_layer(alphabet_size: u32, n: u32) -> Vec<ReducedWord> {
    let mut out = Vec::new();
    let mut stack: Vec<Vec<SignedLetter>> = vec![vec![]];
    while let Some(cur) = stack.pop() {
        if cur.len() as u32 == n {
            out.push(ReducedWord { letters: cur });
            continue;
        }
        for state in (0..2 * alphabet_size as usize).rev() {
            let l = SignedLetter::from_state(state, alphabet_size);
            if cur.last().is_some_and(|&t| t.is_inverse_of(l)) {
                continue;
            }
            let mut next = cur.clone();
            next.push(l);
            stack.push(next);
        }
    }
    out
}

/// Count of reduced words of length n: `2|A| (2|A|-1)^(n-1)`.
pub fn reduced_layer_count(alphabet_size: u32, n: u32) -> BigUint {
    if n == 0 {
        return BigUint::one();
    }
    BigUint::from(2 * alphabet_size) * BigUint::from(2 * alphabet_size - 1).pow(n - 1)
}

/// Exact `mu` of the layer-n slice of the labeled set, optionally
/// intersected with a subsemigroup, via the state recursion over
/// (last letter, running residue).
pub fn group_layer_density(
    labeling: &GroupLabeling,
    alphabet_size: u32,
    sub: Option<&Subsemigroup>,
    n: u32,
) -> Result<Q> {
    if n == 0 {
        return Err(Error::OutOfRange("layers start at n = 1".into()));
    }
    let states = 2 * alphabet_size as usize;
    let m = labeling.modulus as usize;
    // counts[state][residue]
    let mut counts = vec![vec![BigUint::zero(); m]; states];
    for s in 0..states {
        let l = SignedLetter::from_state(s, alphabet_size);
        if let Some(g) = sub {
            if l != g.alpha {
                continue;
            }
        }
        counts[s][labeling.letter_label(l) as usize] += BigUint::one();
    }
    for _ in 1..n {
        let mut next = vec![vec![BigUint::zero(); m]; states];
        for s in 0..states {
            let last = SignedLetter::from_state(s, alphabet_size);
            for r in 0..m {
                if counts[s][r].is_zero() {
                    continue;
                }
                for t in 0..states {
                    let l = SignedLetter::from_state(t, alphabet_size);
                    if l.is_inverse_of(last) {
                        continue;
                    }
                    let nr = (r + labeling.letter_label(l) as usize) % m;
                    next[t][nr] += &counts[s][r];
                }
            }
        }
        counts = next;
    }
    let mut total = BigUint::zero();
    for s in 0..states {
        let last = SignedLetter::from_state(s, alphabet_size);
        if let Some(g) = sub {
            if last != g.beta {
                continue;
            }
        }
        for &t in &labeling.targets {
            total += &counts[s][t as usize];
        }
    }
    Ok(Q::from(BigInt::from(total)) * group_mu_len(n, alphabet_size))
}

/// Exact `mu((C F cap G)(n))` for a finite prefix-free `C` inside `G`:
/// extensions of members of `C` to length n ending at `beta`.
pub fn subtree_mass_in_subsemigroup(
    c: &BTreeSet<ReducedWord>,
    g: &Subsemigroup,
    alphabet_size: u32,
    n: u32,
) -> Result<Q> {
    let states = 2 * alphabet_size as usize;
    let mut total = BigUint::zero();
    for w in c {
        if !g.contains(w) {
            return Err(Error::InvalidWord(format!(
                "{} is not in the subsemigroup",
                w.render()
            )));
        }
        if w.len() > n {
            continue;
        }
        if w.len() == n {
            total += BigUint::one();
            continue;
        }
        // Count reduced continuations of length n - |w| starting after
        // last(w) and ending at beta.
        let mut counts = vec![BigUint::zero(); states];
        counts[w.last().unwrap().state(alphabet_size)] = BigUint::one();
        for _ in 0..(n - w.len()) {
            let mut next = vec![BigUint::zero(); states];
            for s in 0..states {
                if counts[s].is_zero() {
                    continue;
                }
                let last = SignedLetter::from_state(s, alphabet_size);
                for t in 0..states {
                    let l = SignedLetter::from_state(t, alphabet_size);
                    if l.is_inverse_of(last) {
                        continue;
                    }
                    next[t] = &next[t] + &counts[s];
                }
            }
            counts = next;
        }
        total += &counts[g.beta.state(alphabet_size)];
    }
    Ok(Q::from(BigInt::from(total)) * group_mu_len(n, alphabet_size))
}

/// Explicit or labeled set of reduced words.
#[derive(Clone, Debug)]
pub enum GroupSet {
    Explicit { words: BTreeSet<ReducedWord>, bound: u32 },
    Labeled(GroupLabeling),
}

impl GroupSet {
    pub fn explicit(words: Vec<ReducedWord>, bound: u32) -> Result<Self> {
        let mut set = BTreeSet::new();
        for w in words {
            if w.is_empty() {
                return Err(Error::InvalidWord("the empty word is never a member".into()));
            }
            if w.len() > bound {
                return Err(Error::UndecidableLayer(w.len(), bound));
            }
            set.insert(w);
        }
        Ok(GroupSet::Explicit { words: set, bound })
    }

    pub fn contains(&self, w: &ReducedWord) -> Result<bool> {
        if w.is_empty() {
            return Ok(false);
        }
        match self {
            GroupSet::Explicit { words, bound } => {
                if w.len() > *bound {
                    return Err(Error::UndecidableLayer(w.len(), *bound));
                }
                Ok(words.contains(w))
            }
            GroupSet::Labeled(lab) => Ok(lab.contains(w)),
        }
    }

    /// Members up to the given length.
    pub fn members_to(&self, bound: u32, alphabet_size: u32) -> Result<BTreeSet<ReducedWord>> {
        match self {
            GroupSet::Explicit { words, bound: b } => {
                if bound > *b {
                    return Err(Error::UndecidableLayer(bound, *b));
                }
                Ok(words.iter().filter(|w| w.len() <= bound).cloned().collect())
            }
            GroupSet::Labeled(lab) => {
                let mut out = BTreeSet::new();
                for n in 1..=bound {
                    for w in reduced_layer(alphabet_size, n) {
                        if lab.contains(&w) {
                            out.insert(w);
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Witness for a group product violation.
#[derive(Clone, Debug)]
pub struct GroupWitness {
    pub factors: Vec<ReducedWord>,
    pub product: ReducedWord,
}

const GROUP_SEARCH_CAP: usize = 2_000_000;

/// Bounded check that no product of `k` members (with group cancellation)
/// lands in the set. Factors and all intermediate reduced products are
/// searched up to length `bound`; a `true` answer is therefore "no violation
/// within the bounded regime", while any witness found is sound.
///
/// Labeled sets short-circuit: label sums survive reduction, so if no sum of
/// k target residues is again a target, the set is k-product-free outright.
pub fn group_is_k_product_free(
    s: &GroupSet,
    k: u32,
    bound: u32,
    alphabet_size: u32,
) -> Result<(bool, Option<GroupWitness>)> {
    if k < 2 {
        return Err(Error::OutOfRange("product-freeness requires k >= 2".into()));
    }
    if let GroupSet::Labeled(lab) = s {
        let m = lab.modulus as u64;
        // k-fold sumset of targets mod m.
        let mut sums: BTreeSet<u64> = lab.targets.iter().map(|&t| t as u64).collect();
        for _ in 1..k {
            let mut next = BTreeSet::new();
            for &a in &sums {
                for &t in &lab.targets {
                    next.insert((a + t as u64) % m);
                }
            }
            sums = next;
        }
        if !sums.iter().any(|&r| lab.hits_target(r as u32)) {
            return Ok((true, None));
        }
    }
    // Bounded explicit search with parent tracking for witness recovery.
    let members = s.members_to(bound, alphabet_size)?;
    let mut frontier: BTreeMap<ReducedWord, Vec<ReducedWord>> =
        members.iter().map(|w| (w.clone(), vec![w.clone()])).collect();
    for _ in 1..k {
        let mut next: BTreeMap<ReducedWord, Vec<ReducedWord>> = BTreeMap::new();
        for (prod, factors) in &frontier {
            for m in &members {
                let w = prod.mul(m);
                if w.len() > bound || w.is_empty() {
                    continue;
                }
                next.entry(w).or_insert_with(|| {
                    let mut f = factors.clone();
                    f.push(m.clone());
                    f
                });
                if next.len() > GROUP_SEARCH_CAP {
                    return Err(Error::BoundOverflow(
                        "group product search exceeded the state cap".into(),
                    ));
                }
            }
        }
        frontier = next;
    }
    for (prod, factors) in &frontier {
        if s.contains(prod)? {
            return Ok((
                false,
                Some(GroupWitness { factors: factors.clone(), product: prod.clone() }),
            ));
        }
    }
    Ok((true, None))
}
