//! Word-set representations, layer products and powers, product-freeness
//! verification, and the named constructions (odd-occurrence sets, labeled
//! sets, the perturbed set of the open-problems section).

use crate::bitset::Bitmap;
use crate::words::{Alphabet, Word};
use crate::{Error, Measure, Q, Result};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Hard cap on the bits of a single enumerated layer.
const MAX_LAYER_BITS: u64 = 1 << 28;

/// Assignment of Z/mZ labels to letters together with target residues.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labeling {
    pub modulus: u32,
    pub labels: Vec<u32>,
    pub targets: Vec<u32>,
}

impl Labeling {
    pub fn new(modulus: u32, labels: Vec<u32>, targets: Vec<u32>) -> Result<Self> {
        if modulus == 0 {
            return Err(Error::OutOfRange("modulus must be >= 1".into()));
        }
        if labels.is_empty() {
            return Err(Error::OutOfRange("labels must cover at least one letter".into()));
        }
        if labels.iter().any(|&l| l >= modulus) || targets.iter().any(|&t| t >= modulus) {
            return Err(Error::OutOfRange("labels and targets must lie in 0..m".into()));
        }
        if targets.is_empty() {
            return Err(Error::OutOfRange("targets must be non-empty".into()));
        }
        let mut targets = targets;
        targets.sort_unstable();
        targets.dedup();
        Ok(Labeling { modulus, labels, targets })
    }

    /// Sum of letter labels of `w` mod m.
    pub fn residue(&self, w: &Word) -> u32 {
        let m = self.modulus as u64;
        let mut sum: u64 = 0;
        for l in w.letters() {
            sum = (sum + self.labels[l as usize] as u64) % m;
        }
        sum as u32
    }

    pub fn hits_target(&self, residue: u32) -> bool {
        self.targets.binary_search(&residue).is_ok()
    }
}

/// Explicit per-layer bitmaps for lengths `1..=bound`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExplicitLayers {
    alphabet: Alphabet,
    bound: u32,
    layers: Vec<Bitmap>,
}

impl ExplicitLayers {
    pub fn empty(alphabet: Alphabet, bound: u32) -> Result<Self> {
        let mut layers = Vec::with_capacity(bound as usize);
        for n in 1..=bound {
            let size = alphabet.layer_size(n)?;
            if size > MAX_LAYER_BITS {
                return Err(Error::BoundOverflow(format!(
                    "layer {n} needs {size} bits (cap {MAX_LAYER_BITS})"
                )));
            }
            layers.push(Bitmap::zeros(size));
        }
        Ok(ExplicitLayers { alphabet, bound, layers })
    }

    pub fn from_words(alphabet: Alphabet, bound: u32, words: &[Word]) -> Result<Self> {
        let mut out = Self::empty(alphabet, bound)?;
        for w in words {
            if w.alphabet_size() != alphabet.size() {
                return Err(Error::AlphabetMismatch(alphabet.size(), w.alphabet_size()));
            }
            if w.is_empty() {
                return Err(Error::InvalidWord("the empty word is never a member".into()));
            }
            if w.len() > bound {
                return Err(Error::UndecidableLayer(w.len(), bound));
            }
            out.insert(w);
        }
        Ok(out)
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn bound(&self) -> u32 {
        self.bound
    }

    pub fn insert(&mut self, w: &Word) {
        debug_assert!(w.len() >= 1 && w.len() <= self.bound);
        self.layers[(w.len() - 1) as usize].set(w.rank());
    }

    pub fn contains(&self, w: &Word) -> Result<bool> {
        if w.is_empty() {
            return Ok(false);
        }
        if w.len() > self.bound {
            return Err(Error::UndecidableLayer(w.len(), self.bound));
        }
        Ok(self.layer(w.len()).get(w.rank()))
    }

    pub fn layer(&self, n: u32) -> &Bitmap {
        &self.layers[(n - 1) as usize]
    }

    pub fn layer_mut(&mut self, n: u32) -> &mut Bitmap {
        &mut self.layers[(n - 1) as usize]
    }

    pub fn layer_count(&self, n: u32) -> u64 {
        self.layer(n).count()
    }

    pub fn is_empty_set(&self) -> bool {
        self.layers.iter().all(|l| l.is_empty_set())
    }

    /// Length of the shortest member, if any.
    pub fn min_len(&self) -> Option<u32> {
        (1..=self.bound).find(|&n| !self.layer(n).is_empty_set())
    }

    /// Length of the longest member, if any.
    pub fn max_len(&self) -> Option<u32> {
        (1..=self.bound).rev().find(|&n| !self.layer(n).is_empty_set())
    }

    pub fn words(&self) -> Vec<Word> {
        let base = self.alphabet.size();
        let mut out = Vec::new();
        for n in 1..=self.bound {
            for rank in self.layer(n).iter_ones() {
                out.push(Word::from_rank(base, n, rank));
            }
        }
        out
    }

    /// Exact mu of layer n: `|B(n)| * |A|^-n`.
    pub fn layer_mu(&self, n: u32) -> Measure {
        Q::new(BigInt::from(self.layer_count(n)), BigInt::from(self.alphabet.size()).pow(n))
    }

    /// Exact mu of the whole set up to the bound.
    pub fn total_mu(&self) -> Measure {
        (1..=self.bound).map(|n| self.layer_mu(n)).sum()
    }

    pub fn intersect_with(&mut self, other: &ExplicitLayers) {
        let bound = self.bound.min(other.bound);
        for n in 1..=bound {
            self.layers[(n - 1) as usize].intersect_with(other.layer(n));
        }
        for n in bound..self.bound {
            self.layers[n as usize] = Bitmap::zeros(self.layers[n as usize].len());
        }
    }

    pub fn union_with(&mut self, other: &ExplicitLayers) {
        debug_assert!(other.bound <= self.bound);
        for n in 1..=other.bound {
            self.layers[(n - 1) as usize].union_with(other.layer(n));
        }
    }

    /// Set difference `self \ (other truncated to self's bound)`.
    pub fn subtract(&mut self, other: &ExplicitLayers) {
        let bound = self.bound.min(other.bound);
        for n in 1..=bound {
            for rank in other.layer(n).iter_ones() {
                self.layers[(n - 1) as usize].clear(rank);
            }
        }
    }

    /// Image under the word-reversal involution.
    pub fn reverse(&self) -> ExplicitLayers {
        let base = self.alphabet.size();
        let mut out = ExplicitLayers::empty(self.alphabet, self.bound).unwrap();
        for n in 1..=self.bound {
            for rank in self.layer(n).iter_ones() {
                out.insert(&Word::from_rank(base, n, rank).reverse());
            }
        }
        out
    }

    /// True iff no member is a proper prefix of another member.
    pub fn is_prefix_free(&self) -> bool {
        // Mark every strict extension of a member and test for collisions.
        let base = self.alphabet.size() as u64;
        let mut shadow: Vec<Bitmap> = (1..=self.bound)
            .map(|n| Bitmap::zeros(self.layer(n).len()))
            .collect();
        for n in 1..self.bound {
            let mut marked = self.layer(n).clone();
            marked.union_with(&shadow[(n - 1) as usize]);
            for rank in marked.iter_ones() {
                for l in 0..base {
                    shadow[n as usize].set(rank * base + l);
                }
            }
        }
        for n in 2..=self.bound {
            if self.layer(n).intersects(&shadow[(n - 1) as usize]) {
                return false;
            }
        }
        true
    }
}

/// One of the three word-set representations.
#[derive(Clone)]
pub enum WordSet {
    Explicit(ExplicitLayers),
    Labeled { alphabet: Alphabet, labeling: Labeling },
    Predicate { alphabet: Alphabet, bound: u32, f: Arc<dyn Fn(&Word) -> bool + Send + Sync> },
}

impl std::fmt::Debug for WordSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WordSet::Explicit(e) => write!(f, "WordSet::Explicit(bound {})", e.bound()),
            WordSet::Labeled { labeling, .. } => {
                write!(f, "WordSet::Labeled(m {}, labels {:?})", labeling.modulus, labeling.labels)
            }
            WordSet::Predicate { bound, .. } => write!(f, "WordSet::Predicate(bound {bound})"),
        }
    }
}

impl WordSet {
    pub fn labeled(alphabet: Alphabet, labeling: Labeling) -> Result<Self> {
        if labeling.labels.len() != alphabet.size() as usize {
            return Err(Error::OutOfRange(format!(
                "{} labels for an alphabet of {} letters",
                labeling.labels.len(),
                alphabet.size()
            )));
        }
        Ok(WordSet::Labeled { alphabet, labeling })
    }

    pub fn alphabet(&self) -> Alphabet {
        match self {
            WordSet::Explicit(e) => e.alphabet(),
            WordSet::Labeled { alphabet, .. } => *alphabet,
            WordSet::Predicate { alphabet, .. } => *alphabet,
        }
    }

    /// Largest length at which membership is decidable.
    pub fn decidable_bound(&self) -> Option<u32> {
        match self {
            WordSet::Explicit(e) => Some(e.bound()),
            WordSet::Labeled { .. } => None,
            WordSet::Predicate { bound, .. } => Some(*bound),
        }
    }

    pub fn contains(&self, w: &Word) -> Result<bool> {
        if w.is_empty() {
            return Ok(false);
        }
        match self {
            WordSet::Explicit(e) => e.contains(w),
            WordSet::Labeled { labeling, .. } => Ok(labeling.hits_target(labeling.residue(w))),
            WordSet::Predicate { bound, f, .. } => {
                if w.len() > *bound {
                    return Err(Error::UndecidableLayer(w.len(), *bound));
                }
                Ok(f(w))
            }
        }
    }

    /// Materializes layers `1..=bound` as bitmaps.
    pub fn explicitize(&self, bound: u32) -> Result<ExplicitLayers> {
        let alphabet = self.alphabet();
        if let Some(b) = self.decidable_bound() {
            if bound > b {
                return Err(Error::UndecidableLayer(bound, b));
            }
        }
        match self {
            WordSet::Explicit(e) => {
                let mut out = ExplicitLayers::empty(alphabet, bound)?;
                for n in 1..=bound {
                    out.layers[(n - 1) as usize] = e.layer(n).clone();
                }
                Ok(out)
            }
            WordSet::Labeled { labeling, .. } => {
                let mut out = ExplicitLayers::empty(alphabet, bound)?;
                let base = alphabet.size() as u64;
                let m = labeling.modulus;
                // Residues layer by layer: residue(rank) depends on the
                // prefix residue and the last letter.
                let mut prev: Vec<u32> = vec![0];
                for n in 1..=bound {
                    let size = alphabet.layer_size(n)?;
                    let mut cur = vec![0u32; size as usize];
                    for rank in 0..size {
                        let r = (prev[(rank / base) as usize]
                            + labeling.labels[(rank % base) as usize])
                            % m;
                        cur[rank as usize] = r;
                        if labeling.hits_target(r) {
                            out.layers[(n - 1) as usize].set(rank);
                        }
                    }
                    prev = cur;
                }
                Ok(out)
            }
            WordSet::Predicate { f, .. } => {
                let mut out = ExplicitLayers::empty(alphabet, bound)?;
                let base = alphabet.size();
                for n in 1..=bound {
                    let size = alphabet.layer_size(n)?;
                    for rank in 0..size {
                        if f(&Word::from_rank(base, n, rank)) {
                            out.layers[(n - 1) as usize].set(rank);
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Words with an odd number of occurrences of letters from `gamma`: the
/// labeled set with m = 2, label 1 on gamma, target {1}.
pub fn odd_occurrence(alphabet: Alphabet, gamma: &[u32]) -> Result<WordSet> {
    if gamma.is_empty() {
        return Err(Error::OutOfRange("gamma must be non-empty".into()));
    }
    let mut labels = vec![0u32; alphabet.size() as usize];
    for &g in gamma {
        if g >= alphabet.size() {
            return Err(Error::OutOfRange(format!("letter {g} outside the alphabet")));
        }
        labels[g as usize] = 1;
    }
    WordSet::labeled(alphabet, Labeling::new(2, labels, vec![1])?)
}

/// Words whose label sum hits the target; the extremal construction.
pub fn labeled_t(alphabet: Alphabet, labeling: Labeling) -> Result<WordSet> {
    if labeling.modulus < 2 {
        return Err(Error::OutOfRange("labeled T requires modulus >= 2".into()));
    }
    WordSet::labeled(alphabet, labeling)
}

/// All concatenations of a member of `x` with a member of `y`, truncated to
/// lengths `<= bound`. Layer convolution: for each member u of x at layer p,
/// the whole layer q of y is ORed into layer p + q at offset rank(u)*|A|^q.
pub fn product(x: &WordSet, y: &WordSet, bound: u32) -> Result<ExplicitLayers> {
    if x.alphabet().size() != y.alphabet().size() {
        return Err(Error::AlphabetMismatch(x.alphabet().size(), y.alphabet().size()));
    }
    if bound < 2 {
        return ExplicitLayers::empty(x.alphabet(), bound);
    }
    let xe = x.explicitize(bound - 1)?;
    let ye = y.explicitize(bound - 1)?;
    product_layers(&xe, &ye, bound)
}

pub fn product_layers(
    xe: &ExplicitLayers,
    ye: &ExplicitLayers,
    bound: u32,
) -> Result<ExplicitLayers> {
    let alphabet = xe.alphabet();
    let mut out = ExplicitLayers::empty(alphabet, bound)?;
    for p in 1..bound.min(xe.bound() + 1) {
        let xl = xe.layer(p);
        if xl.is_empty_set() {
            continue;
        }
        for q in 1..=(bound - p).min(ye.bound()) {
            let yl = ye.layer(q);
            if yl.is_empty_set() {
                continue;
            }
            let width = alphabet.layer_size(q)?;
            let target = out.layer_mut(p + q);
            for urank in xl.iter_ones() {
                target.or_shifted(yl, urank * width);
            }
        }
    }
    Ok(out)
}

/// k-fold product of `s`, truncated at `bound`. `power(s, 1, l)` is `s`
/// restricted to lengths `<= l`.
pub fn power(s: &WordSet, k: u32, bound: u32) -> Result<ExplicitLayers> {
    if k == 0 {
        return Err(Error::OutOfRange("power requires k >= 1".into()));
    }
    let base = s.explicitize(bound)?;
    let mut acc = base.clone();
    for _ in 1..k {
        acc = product_layers(&acc, &base, bound)?;
    }
    Ok(acc)
}

/// `intersection over i in a of s^i`, truncated at `bound`.
pub fn s_intersection(s: &WordSet, a: &[u32], bound: u32) -> Result<ExplicitLayers> {
    if a.is_empty() {
        return Err(Error::OutOfRange("the index set must be non-empty".into()));
    }
    let mut indices = a.to_vec();
    indices.sort_unstable();
    indices.dedup();
    if indices[0] == 0 {
        return Err(Error::OutOfRange("power indices must be positive".into()));
    }
    let base = s.explicitize(bound)?;
    let mut powers = base.clone();
    let mut current = 1u32;
    let mut acc: Option<ExplicitLayers> = None;
    for &i in &indices {
        while current < i {
            powers = product_layers(&powers, &base, bound)?;
            current += 1;
        }
        match &mut acc {
            None => acc = Some(powers.clone()),
            Some(acc) => acc.intersect_with(&powers),
        }
    }
    Ok(acc.unwrap())
}

/// Violation evidence: k member factors whose concatenation is a member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub factors: Vec<Word>,
    pub product: Word,
}

impl Witness {
    pub fn render(&self) -> String {
        let parts: Vec<String> = self.factors.iter().map(|w| format!("{:?}", w.render())).collect();
        format!("({}) -> {:?}", parts.join(", "), self.product.render())
    }
}

/// Lexicographically smallest factorization of `w` into `k` members of `xe`,
/// searching prefixes shortest-first (so the factor tuple is shortlex
/// minimal).
fn smallest_factorization(xe: &ExplicitLayers, w: &Word, k: u32) -> Option<Vec<Word>> {
    if k == 1 {
        return if xe.contains(w).unwrap_or(false) { Some(vec![*w]) } else { None };
    }
    for len1 in 1..=(w.len() - (k - 1)) {
        let head = w.prefix(len1);
        if xe.contains(&head).unwrap_or(false) {
            if let Some(mut rest) = smallest_factorization(xe, &w.suffix(w.len() - len1), k - 1) {
                let mut factors = vec![head];
                factors.append(&mut rest);
                return Some(factors);
            }
        }
    }
    None
}

/// True iff `s` has no product of `k` members inside itself at lengths
/// `<= bound`. On failure returns the minimal-length witness with the
/// lexicographically smallest factor tuple.
pub fn is_k_product_free(s: &WordSet, k: u32, bound: u32) -> Result<(bool, Option<Witness>)> {
    if k < 2 {
        return Err(Error::OutOfRange("product-freeness requires k >= 2".into()));
    }
    let xe = s.explicitize(bound)?;
    let pw = power_of_layers(&xe, k, bound)?;
    find_violation(&xe, &pw, k)
}

fn power_of_layers(xe: &ExplicitLayers, k: u32, bound: u32) -> Result<ExplicitLayers> {
    let mut acc = xe.clone();
    for _ in 1..k {
        acc = product_layers(&acc, xe, bound)?;
    }
    Ok(acc)
}

fn find_violation(
    xe: &ExplicitLayers,
    pw: &ExplicitLayers,
    k: u32,
) -> Result<(bool, Option<Witness>)> {
    for n in 1..=xe.bound() {
        let hits = xe.layer(n).intersection(pw.layer(n));
        if let Some(rank) = hits.first_one() {
            let w = Word::from_rank(xe.alphabet().size(), n, rank);
            let factors = smallest_factorization(xe, &w, k)
                .expect("member of the k-th power must factor");
            return Ok((false, Some(Witness { factors, product: w })));
        }
    }
    Ok((true, None))
}

/// Runs the k-product-freeness check for every `l = 2..=k`, reporting the
/// smallest failing `l`.
pub fn is_strongly_k_product_free(
    s: &WordSet,
    k: u32,
    bound: u32,
) -> Result<(bool, Option<(u32, Witness)>)> {
    if k < 2 {
        return Err(Error::OutOfRange("strong product-freeness requires k >= 2".into()));
    }
    let xe = s.explicitize(bound)?;
    let mut acc = xe.clone();
    for l in 2..=k {
        acc = product_layers(&acc, &xe, bound)?;
        let (ok, witness) = find_violation(&xe, &acc, l)?;
        if !ok {
            return Ok((false, Some((l, witness.unwrap()))));
        }
    }
    Ok((true, None))
}

/// Bounded computation of the residue classes `T_i = {a : S meets a S^(i+1)}`.
///
/// `classes[i]` holds the words whose membership was verified by a product
/// within the bound; `unknown[i]` holds the words too long for any product of
/// i+1 shortest members to fit inside the bound (their membership would need
/// products beyond it). Words in neither carry no witness at this bound.
#[derive(Clone, Debug)]
pub struct ResidueClasses {
    pub classes: Vec<ExplicitLayers>,
    pub unknown: Vec<ExplicitLayers>,
    pub bound: u32,
}

pub fn residue_classes(s: &WordSet, k: u32, bound: u32) -> Result<ResidueClasses> {
    if k < 1 {
        return Err(Error::OutOfRange("residue classes require k >= 1".into()));
    }
    let alphabet = s.alphabet();
    let xe = s.explicitize(bound)?;
    let min_len = xe.min_len();
    let mut classes = Vec::with_capacity(k as usize);
    let mut unknown = Vec::with_capacity(k as usize);
    let mut pw = xe.clone();
    for i in 0..k {
        if i > 0 {
            pw = product_layers(&pw, &xe, bound)?;
        }
        // pw is now S^(i+1).
        let mut class = ExplicitLayers::empty(alphabet, bound)?;
        for n in 2..=bound {
            let members = xe.layer(n);
            if members.is_empty_set() {
                continue;
            }
            for la in 1..n {
                let q = n - la;
                let tail = pw.layer(q);
                if tail.is_empty_set() {
                    continue;
                }
                let width = alphabet.layer_size(q)?;
                let target = class.layer_mut(la);
                for rank in members.iter_ones() {
                    let (a_rank, x_rank) = (rank / width, rank % width);
                    if tail.get(x_rank) {
                        target.set(a_rank);
                    }
                }
            }
        }
        let mut unk = ExplicitLayers::empty(alphabet, bound)?;
        let needed = min_len.map(|ml| ml as u64 * (i as u64 + 1));
        for la in 1..=bound {
            let reachable = needed.map_or(false, |need| la as u64 + need <= bound as u64);
            if !reachable {
                let size = alphabet.layer_size(la)?;
                let layer = unk.layer_mut(la);
                for r in 0..size {
                    if !class.layer(la).get(r) {
                        layer.set(r);
                    }
                }
            }
        }
        classes.push(class);
        unknown.push(unk);
    }
    Ok(ResidueClasses { classes, unknown, bound })
}

/// The perturbed product-free set built from an even-length word `x`: odd
/// words with no prefix/suffix relation to `x`, together with the words
/// `x w x` of length 1 mod 3.
pub fn t_prime(x: &Word, bound: u32) -> Result<ExplicitLayers> {
    if x.len() % 2 != 0 || x.len() < 2 {
        return Err(Error::OutOfRange("x must have even length >= 2".into()));
    }
    let alphabet = Alphabet::new(x.alphabet_size())?;
    let mut out = ExplicitLayers::empty(alphabet, bound)?;
    let base = alphabet.size();
    for n in 1..=bound {
        let size = alphabet.layer_size(n)?;
        let layer = out.layer_mut(n);
        for rank in 0..size {
            let w = Word::from_rank(base, n, rank);
            if t_prime_member(x, &w)? {
                layer.set(rank);
            }
        }
    }
    Ok(out)
}

fn t_prime_member(x: &Word, w: &Word) -> Result<bool> {
    if w.len() % 2 == 1 {
        let related = x.is_prefix_of(w)?
            || x.is_suffix_of(w)?
            || w.is_prefix_of(x)?
            || w.is_suffix_of(x)?;
        if !related {
            return Ok(true);
        }
    }
    Ok(w.len() >= 2 * x.len()
        && w.len() % 3 == 1
        && x.is_prefix_of(w)?
        && x.is_suffix_of(w)?)
}

/// JSON form of a word set. Explicit layers are base64-encoded little-endian
/// 64-bit words; predicate sets serialize as a stub and cannot round-trip.
#[derive(Serialize, Deserialize)]
pub struct WordSetJson {
    pub repr: String,
    pub alphabet: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<u32>>,
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub bound: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<String>>,
}

impl WordSet {
    pub fn to_json(&self) -> WordSetJson {
        match self {
            WordSet::Labeled { alphabet, labeling } => WordSetJson {
                repr: "labeled".into(),
                alphabet: alphabet.size(),
                m: Some(labeling.modulus),
                labels: Some(labeling.labels.clone()),
                targets: Some(labeling.targets.clone()),
                bound: None,
                layers: None,
            },
            WordSet::Explicit(e) => WordSetJson {
                repr: "explicit".into(),
                alphabet: e.alphabet().size(),
                m: None,
                labels: None,
                targets: None,
                bound: Some(e.bound()),
                layers: Some(
                    (1..=e.bound())
                        .map(|n| {
                            let bytes: Vec<u8> = e
                                .layer(n)
                                .as_words()
                                .iter()
                                .flat_map(|w| w.to_le_bytes())
                                .collect();
                            B64.encode(bytes)
                        })
                        .collect(),
                ),
            },
            WordSet::Predicate { alphabet, bound, .. } => WordSetJson {
                repr: "predicate".into(),
                alphabet: alphabet.size(),
                m: None,
                labels: None,
                targets: None,
                bound: Some(*bound),
                layers: None,
            },
        }
    }

    pub fn from_json(json: &WordSetJson) -> Result<WordSet> {
        let alphabet = Alphabet::new(json.alphabet)?;
        match json.repr.as_str() {
            "labeled" => {
                let labeling = Labeling::new(
                    json.m.ok_or_else(|| Error::OutOfRange("missing m".into()))?,
                    json.labels.clone().ok_or_else(|| Error::OutOfRange("missing labels".into()))?,
                    json.targets
                        .clone()
                        .ok_or_else(|| Error::OutOfRange("missing targets".into()))?,
                )?;
                WordSet::labeled(alphabet, labeling)
            }
            "explicit" => {
                let bound = json.bound.ok_or_else(|| Error::OutOfRange("missing L".into()))?;
                let layers = json
                    .layers
                    .as_ref()
                    .ok_or_else(|| Error::OutOfRange("missing layers".into()))?;
                let mut e = ExplicitLayers::empty(alphabet, bound)?;
                for (i, enc) in layers.iter().enumerate() {
                    let n = i as u32 + 1;
                    if n > bound {
                        return Err(Error::OutOfRange("more layers than the bound".into()));
                    }
                    let bytes = B64
                        .decode(enc)
                        .map_err(|e| Error::OutOfRange(format!("bad base64 layer: {e}")))?;
                    let size = alphabet.layer_size(n)?;
                    let mut words64 = vec![0u64; size.div_ceil(64) as usize];
                    if bytes.len() != words64.len() * 8 {
                        return Err(Error::OutOfRange(format!(
                            "layer {n} has {} bytes, expected {}",
                            bytes.len(),
                            words64.len() * 8
                        )));
                    }
                    for (j, chunk) in bytes.chunks_exact(8).enumerate() {
                        words64[j] = u64::from_le_bytes(chunk.try_into().unwrap());
                    }
                    *e.layer_mut(n) = Bitmap::from_words(size, words64);
                }
                Ok(WordSet::Explicit(e))
            }
            other => Err(Error::OutOfRange(format!("cannot deserialize repr {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::words::layer;
    use proptest::prelude::*;

    fn ab() -> Alphabet {
        Alphabet::new(2).unwrap()
    }

    /// Independent oracle: the set product by naive enumeration of all
    /// member pairs as words. Kept free of the bitmap convolution path.
    fn naive_product(xe: &ExplicitLayers, ye: &ExplicitLayers, bound: u32) -> ExplicitLayers {
        let mut out = ExplicitLayers::empty(xe.alphabet(), bound).unwrap();
        for u in xe.words() {
            for v in ye.words() {
                if u.len() + v.len() <= bound {
                    out.insert(&u.concat(&v).unwrap());
                }
            }
        }
        out
    }

    fn explicit_of(words: &[&str], alphabet: Alphabet, bound: u32) -> WordSet {
        let parsed: Vec<Word> = words.iter().map(|t| alphabet.parse(t).unwrap()).collect();
        WordSet::Explicit(ExplicitLayers::from_words(alphabet, bound, &parsed).unwrap())
    }

    #[test]
    fn odd_occurrence_membership() {
        let a = ab();
        let all_odd = odd_occurrence(a, &[0, 1]).unwrap();
        assert!(all_odd.contains(&a.parse("aab").unwrap()).unwrap());
        assert!(!all_odd.contains(&a.parse("ab").unwrap()).unwrap());
        let gamma_a = odd_occurrence(a, &[0]).unwrap();
        assert!(!gamma_a.contains(&a.parse("aab").unwrap()).unwrap()); // two a's
        assert!(gamma_a.contains(&a.parse("ab").unwrap()).unwrap());
        assert!(!gamma_a.contains(&a.parse("bbb").unwrap()).unwrap()); // zero occurrences
        assert!(odd_occurrence(a, &[]).is_err());
    }

    #[test]
    fn labeled_t_membership() {
        let a = ab();
        let t = labeled_t(a, Labeling::new(3, vec![1, 1], vec![1]).unwrap()).unwrap();
        assert!(t.contains(&a.parse("a").unwrap()).unwrap());
        assert!(!t.contains(&a.parse("ab").unwrap()).unwrap());
        assert!(!t.contains(&a.parse("aba").unwrap()).unwrap()); // sum 3 = 0 mod 3
        // All labels 2 mod 4: T is empty on lengths 1..=12 (degenerate case).
        let empty = labeled_t(a, Labeling::new(4, vec![2, 2], vec![1]).unwrap()).unwrap();
        let e = empty.explicitize(12).unwrap();
        assert!(e.is_empty_set());
    }

    #[test]
    fn product_examples() {
        let a = ab();
        // {"a"} x {"b", "ab"} = {"ab", "aab"}.
        let x = explicit_of(&["a"], a, 3);
        let y = explicit_of(&["b", "ab"], a, 3);
        let p = product(&x, &y, 4).unwrap();
        let words: Vec<String> = p.words().iter().map(|w| w.render()).collect();
        assert_eq!(words, vec!["ab", "aab"]);

        // Odd x odd = all even-length words of length 2..=6.
        let odd = odd_occurrence(a, &[0, 1]).unwrap();
        let p = product(&odd, &odd, 6).unwrap();
        for n in 1..=6 {
            let expect = if n % 2 == 0 { a.layer_size(n).unwrap() } else { 0 };
            assert_eq!(p.layer_count(n), expect, "layer {n}");
        }
    }

    #[test]
    fn product_of_labeled_sets_adds_residues() {
        let a = ab();
        let x = labeled_t(a, Labeling::new(5, vec![1, 2], vec![2]).unwrap()).unwrap();
        let y = labeled_t(a, Labeling::new(5, vec![1, 2], vec![4]).unwrap()).unwrap();
        let p = product(&x, &y, 7).unwrap();
        let lab = Labeling::new(5, vec![1, 2], vec![(2 + 4) % 5]).unwrap();
        for w in p.words() {
            assert!(lab.hits_target(lab.residue(&w)), "{}", w.render());
        }
    }

    #[test]
    fn power_examples() {
        let a = ab();
        let s = explicit_of(&["a"], a, 5);
        let p = power(&s, 3, 5).unwrap();
        assert_eq!(p.words().iter().map(|w| w.render()).collect::<Vec<_>>(), vec!["aaa"]);

        // {"a","ba"}^2 enumerated by hand: all four ordered pairs.
        let s = explicit_of(&["a", "ba"], a, 4);
        let p = power(&s, 2, 4).unwrap();
        let mut words: Vec<String> = p.words().iter().map(|w| w.render()).collect();
        words.sort();
        assert_eq!(words, vec!["aa", "aba", "baa", "baba"]);

        let odd = odd_occurrence(a, &[0, 1]).unwrap();
        let p = power(&odd, 2, 8).unwrap();
        for n in 1..=8 {
            let expect = if n % 2 == 0 { a.layer_size(n).unwrap() } else { 0 };
            assert_eq!(p.layer_count(n), expect);
        }
    }

    #[test]
    fn power_one_is_restriction() {
        let a = ab();
        let odd = odd_occurrence(a, &[0]).unwrap();
        assert_eq!(power(&odd, 1, 6).unwrap(), odd.explicitize(6).unwrap());
    }

    #[test]
    fn s_intersection_examples() {
        let a = ab();
        let odd = odd_occurrence(a, &[0, 1]).unwrap();
        // A = {1}: S itself.
        assert_eq!(s_intersection(&odd, &[1], 8).unwrap(), odd.explicitize(8).unwrap());

        // Unary alphabet, S = {lengths = 1 mod 3}: S cap S^4 = {a^n : n = 1 mod 3, n >= 4}.
        let u = Alphabet::new(1).unwrap();
        let s = WordSet::Predicate {
            alphabet: u,
            bound: 20,
            f: Arc::new(|w: &Word| w.len() % 3 == 1),
        };
        let got = s_intersection(&s, &[1, 4], 20).unwrap();
        // Independent oracle: brute-force layer check against the definition.
        for n in 1..=20u32 {
            let member = got.layer_count(n) == 1;
            let expect = n % 3 == 1 && n >= 4;
            assert_eq!(member, expect, "n = {n}");
        }

        // Labeled m=3 target {1}: S cap S^2 is empty (residues 1 and 2 disjoint).
        let t = labeled_t(a, Labeling::new(3, vec![1, 1], vec![1]).unwrap()).unwrap();
        assert!(s_intersection(&t, &[1, 2], 10).unwrap().is_empty_set());
    }

    #[test]
    fn product_freeness_witnesses() {
        let a = ab();
        let s = explicit_of(&["a", "aa"], a, 6);
        let (ok, witness) = is_k_product_free(&s, 2, 6).unwrap();
        assert!(!ok);
        let w = witness.unwrap();
        assert_eq!(w.product, a.parse("aa").unwrap());
        assert_eq!(w.factors, vec![a.parse("a").unwrap(), a.parse("a").unwrap()]);

        let odd = odd_occurrence(a, &[0, 1]).unwrap();
        assert!(is_k_product_free(&odd, 4, 12).unwrap().0);
        let (ok, witness) = is_k_product_free(&odd, 3, 12).unwrap();
        assert!(!ok);
        let w = witness.unwrap();
        assert_eq!(w.product, a.parse("aaa").unwrap());
        assert_eq!(w.factors.len(), 3);
        assert!(w.factors.iter().all(|f| *f == a.parse("a").unwrap()));
    }

    #[test]
    fn strong_freeness() {
        let a = ab();
        // m = k, non-degenerate labels: strongly k-product-free.
        let t = labeled_t(a, Labeling::new(5, vec![1, 2], vec![1]).unwrap()).unwrap();
        assert!(is_strongly_k_product_free(&t, 5, 12).unwrap().0);

        let odd = odd_occurrence(a, &[0, 1]).unwrap();
        assert!(is_strongly_k_product_free(&odd, 2, 12).unwrap().0);
        let (ok, fail) = is_strongly_k_product_free(&odd, 3, 12).unwrap();
        assert!(!ok);
        assert_eq!(fail.unwrap().0, 3);
    }

    #[test]
    fn labeled_rho_sets_are_free() {
        // For k in [2, 40], the all-ones labeling mod rho(k) with target {1}.
        let a = ab();
        for k in 2..=40u32 {
            let m = crate::arith::rho(k as u64).unwrap();
            let t = labeled_t(a, Labeling::new(m, vec![1, 1], vec![1]).unwrap()).unwrap();
            let (ok, w) = is_k_product_free(&t, k, 12).unwrap();
            assert!(ok, "k = {k}: witness {:?}", w.map(|w| w.render()));
        }
    }

    #[test]
    fn residue_classes_parity() {
        let a = ab();
        let odd = odd_occurrence(a, &[0, 1]).unwrap();
        let rc = residue_classes(&odd, 2, 10).unwrap();
        // Labels are all 1 mod 2; members of T_i have label sum -i, so T_0
        // holds even lengths and T_1 odd lengths, wherever decidable.
        for la in 1..=8u32 {
            let full = a.layer_size(la).unwrap();
            let expect_t0 = if la % 2 == 0 { full } else { 0 };
            let expect_t1 = if la % 2 == 1 { full } else { 0 };
            assert_eq!(rc.classes[0].layer_count(la), expect_t0, "T_0 layer {la}");
            assert_eq!(rc.classes[1].layer_count(la), expect_t1, "T_1 layer {la}");
        }
        // S is contained in T_{k-1} on decidable lengths.
        let se = odd.explicitize(8).unwrap();
        for n in 1..=8u32 {
            for r in se.layer(n).iter_ones() {
                assert!(rc.classes[1].layer(n).get(r));
            }
        }
    }

    #[test]
    fn residue_classes_match_label_formula() {
        // Labeled S with m = k: decidable T_i members satisfy sum = -i mod k.
        let a = ab();
        let k = 3u32;
        let lab = Labeling::new(k, vec![1, 2], vec![1]).unwrap();
        let t = labeled_t(a, lab.clone()).unwrap();
        let rc = residue_classes(&t, k, 12).unwrap();
        for (i, class) in rc.classes.iter().enumerate() {
            let want = ((k as i64 - i as i64) % k as i64) as u32 % k;
            for w in class.words() {
                assert_eq!(lab.residue(&w), want, "T_{i} member {}", w.render());
            }
            // Everything decidable with the right residue is found.
            for la in 1..=(12 - (i as u32 + 1)) {
                for rank in 0..a.layer_size(la).unwrap() {
                    let w = Word::from_rank(2, la, rank);
                    if lab.residue(&w) == want {
                        assert!(class.layer(la).get(rank), "missing {}", w.render());
                    }
                }
            }
        }
    }

    #[test]
    fn t_prime_examples() {
        let a = ab();
        let x = a.parse("aa").unwrap();
        let tp = t_prime(&x, 12).unwrap();
        // Product-free at k = 2 (exhaustive check through the verifier).
        let (ok, w) = is_k_product_free(&WordSet::Explicit(tp.clone()), 2, 12).unwrap();
        assert!(ok, "witness {:?}", w.map(|w| w.render()));
        // Members of the second form exist: "aaaa" = x [] x has length 4 = 1 mod 3.
        assert!(tp.contains(&a.parse("aaaa").unwrap()).unwrap());
        // Odd members with a prefix/suffix relation to x are excluded.
        assert!(!tp.contains(&a.parse("a").unwrap()).unwrap());
        assert!(tp.contains(&a.parse("b").unwrap()).unwrap());
        assert!(!tp.contains(&a.parse("aab").unwrap()).unwrap());
        assert!(tp.contains(&a.parse("bab").unwrap()).unwrap());
        // Per-layer density bound on odd layers >= 5: >= 1/2 - 2 |A|^-|x|.
        let bound = crate::q(1, 2) - crate::q(2, 4);
        for n in (5..=11u32).step_by(2) {
            assert!(tp.layer_mu(n) >= bound);
        }
        // Odd |x| rejected.
        assert!(t_prime(&a.parse("aba").unwrap(), 6).is_err());
    }

    #[test]
    fn t_prime_not_in_any_odd_occurrence_set() {
        // For each nonempty gamma there is a member with even gamma-count.
        let a = ab();
        let x = a.parse("aa").unwrap();
        let tp = t_prime(&x, 12).unwrap();
        for gamma in [vec![0u32], vec![1], vec![0, 1]] {
            let o = odd_occurrence(a, &gamma).unwrap();
            let found = tp.words().iter().any(|w| !o.contains(w).unwrap());
            assert!(found, "gamma {gamma:?}");
        }
    }

    #[test]
    fn reverse_preserves_freeness() {
        let a = ab();
        let s = explicit_of(&["ab", "ba", "abb"], a, 9);
        let se = s.explicitize(9).unwrap();
        for k in 2..=3u32 {
            let fwd = is_k_product_free(&s, k, 9).unwrap().0;
            let rev = is_k_product_free(&WordSet::Explicit(se.reverse()), k, 9).unwrap().0;
            assert_eq!(fwd, rev);
        }
    }

    #[test]
    fn prefix_free_detection() {
        let a = ab();
        let pf = explicit_of(&["aa", "ab", "b"], a, 2);
        assert!(matches!(&pf, WordSet::Explicit(e) if e.is_prefix_free()));
        let not_pf = explicit_of(&["a", "ab"], a, 2);
        assert!(matches!(&not_pf, WordSet::Explicit(e) if !e.is_prefix_free()));
    }

    #[test]
    fn wordset_json_round_trip() {
        let a = ab();
        let s = explicit_of(&["a", "ba", "bb"], a, 3);
        let json = serde_json::to_string(&s.to_json()).unwrap();
        let back = WordSet::from_json(&serde_json::from_str(&json).unwrap()).unwrap();
        match (&s, &back) {
            (WordSet::Explicit(x), WordSet::Explicit(y)) => assert_eq!(x, y),
            _ => panic!("wrong repr"),
        }
        let t = labeled_t(a, Labeling::new(3, vec![1, 2], vec![1]).unwrap()).unwrap();
        let json = serde_json::to_string(&t.to_json()).unwrap();
        let back = WordSet::from_json(&serde_json::from_str(&json).unwrap()).unwrap();
        let w = a.parse("bb").unwrap();
        assert_eq!(t.contains(&w).unwrap(), back.contains(&w).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// The layer convolution agrees with naive pairwise concatenation.
        #[test]
        fn product_matches_naive_oracle(
            base in 1u32..=3,
            xbits in proptest::collection::vec(any::<bool>(), 14),
            ybits in proptest::collection::vec(any::<bool>(), 14),
        ) {
            let a = Alphabet::new(base).unwrap();
            let bound = 6u32;
            let mut xe = ExplicitLayers::empty(a, 4).unwrap();
            let mut ye = ExplicitLayers::empty(a, 4).unwrap();
            let mut i = 0;
            for n in 1..=4u32 {
                let size = a.layer_size(n).unwrap();
                for rank in 0..size.min(4) {
                    if xbits[i % xbits.len()] {
                        xe.insert(&Word::from_rank(base, n, rank));
                    }
                    if ybits[(i * 7 + 3) % ybits.len()] {
                        ye.insert(&Word::from_rank(base, n, rank));
                    }
                    i += 1;
                }
            }
            let fast = product_layers(&xe, &ye, bound).unwrap();
            let slow = naive_product(&xe, &ye, bound);
            prop_assert_eq!(fast, slow);
        }

        /// Truncated associativity of the product.
        #[test]
        fn product_associative(
            seed in 0u64..10_000,
        ) {
            let a = Alphabet::new(2).unwrap();
            let bound = 7u32;
            let mut sets = Vec::new();
            let mut s = seed;
            for _ in 0..3 {
                let mut e = ExplicitLayers::empty(a, 3).unwrap();
                for n in 1..=3u32 {
                    let size = a.layer_size(n).unwrap();
                    for rank in 0..size {
                        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        if s >> 62 == 0 {
                            e.insert(&Word::from_rank(2, n, rank));
                        }
                    }
                }
                sets.push(e);
            }
            let (x, y, z) = (&sets[0], &sets[1], &sets[2]);
            let left = product_layers(&product_layers(x, y, bound).unwrap(), z, bound).unwrap();
            let right = product_layers(x, &product_layers(y, z, bound).unwrap(), bound).unwrap();
            prop_assert_eq!(left, right);
        }

        /// power(S, a + b) = product(power(S, a), power(S, b)) up to the bound.
        #[test]
        fn power_splits(pa in 1u32..=3, pb in 1u32..=3, seed in 0u64..10_000) {
            let alpha = Alphabet::new(2).unwrap();
            let bound = 8u32;
            let mut e = ExplicitLayers::empty(alpha, bound).unwrap();
            let mut s = seed;
            for n in 1..=3u32 {
                for rank in 0..alpha.layer_size(n).unwrap() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    if s >> 62 == 0 {
                        e.insert(&Word::from_rank(2, n, rank));
                    }
                }
            }
            let ws = WordSet::Explicit(e.clone());
            let whole = power(&ws, pa + pb, bound).unwrap();
            let split = product_layers(
                &power(&ws, pa, bound).unwrap(),
                &power(&ws, pb, bound).unwrap(),
                bound,
            ).unwrap();
            prop_assert_eq!(whole, split);
        }

        /// Labeled residue of a concatenation is the sum of residues.
        #[test]
        fn residue_additivity(m in 2u32..=6, s1 in 0u64..255, s2 in 0u64..255) {
            let _ = Alphabet::new(2).unwrap();
            let lab = Labeling::new(m, vec![1, m - 1], vec![1]).unwrap();
            let u = Word::from_rank(2, 6, s1 % 64);
            let v = Word::from_rank(2, 6, s2 % 64);
            let uv = u.concat(&v).unwrap();
            prop_assert_eq!(lab.residue(&uv), (lab.residue(&u) + lab.residue(&v)) % m);
        }
    }

    #[test]
    fn layer_mass_sanity() {
        // Explicitized full set F has layer mass 1.
        let a = ab();
        let f = WordSet::Labeled {
            alphabet: a,
            labeling: Labeling::new(1, vec![0, 0], vec![0]).unwrap(),
        };
        let fe = f.explicitize(6).unwrap();
        for n in 1..=6 {
            assert_eq!(fe.layer_mu(n), crate::q(1, 1));
        }
        let _ = layer(a, 3).unwrap();
    }
}
