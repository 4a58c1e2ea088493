//! Desk-scale extremal search: provably optimal mu-weighted k-product-free
//! subsets of truncated free semigroups (and integer intervals when |A| = 1),
//! a seeded local-search heuristic, and containment certification against
//! labeled sets.

use crate::words::{Alphabet, Word};
use crate::wordsets::{is_k_product_free, ExplicitLayers, Labeling, Witness, WordSet};
use crate::{Error, Q, Result};
use num_bigint::BigInt;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Default item cap for the branch-and-bound solver (member bitmaps are u64).
pub const EXACT_ITEM_CAP: usize = 62;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SearchInstance {
    pub alphabet_size: u32,
    pub k: u32,
    /// Length bound L; for |A| = 1 this is the integer interval [1, N].
    pub bound: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Certificate {
    Exhaustive,
    BranchAndBound,
    Heuristic,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub instance: SearchInstance,
    /// mu-weight of the set over [1, L].
    pub optimum: Q,
    pub words: Vec<Word>,
    pub certificate: Certificate,
    /// Labelings with modulus rho(k) (and the mod-6 variant when rho = 3)
    /// whose labeled set contains the result.
    pub containment: Vec<Labeling>,
}

impl SearchResult {
    /// Independent re-verification of feasibility through the word-set path.
    pub fn verify_product_free(&self) -> Result<(bool, Option<Witness>)> {
        let alphabet = Alphabet::new(self.instance.alphabet_size)?;
        let e = ExplicitLayers::from_words(alphabet, self.instance.bound, &self.words)?;
        is_k_product_free(&WordSet::Explicit(e), self.instance.k, self.instance.bound)
    }
}

/// The solve universe: words of lengths 1..=L in (length, rank) order.
struct Universe {
    alphabet: Alphabet,
    bound: u32,
    items: Vec<Word>,
    /// Integer weight |A|^(L - len); the exact mu-weight times |A|^L.
    weights: Vec<u64>,
    /// Forbidden configurations: distinct item ids whose joint selection
    /// realizes a member product of k members.
    edges: Vec<Vec<u16>>,
    /// edges touching each item.
    item_edges: Vec<Vec<u32>>,
}

impl Universe {
    fn build(inst: &SearchInstance) -> Result<Self> {
        let alphabet = Alphabet::new(inst.alphabet_size)?;
        let mut items = Vec::new();
        let mut index = std::collections::HashMap::new();
        for n in 1..=inst.bound {
            for rank in 0..alphabet.layer_size(n)? {
                let w = Word::from_rank(alphabet.size(), n, rank);
                index.insert(w, items.len() as u16);
                items.push(w);
            }
        }
        let mut weights = Vec::with_capacity(items.len());
        for w in &items {
            weights.push(alphabet.layer_size(inst.bound - w.len())?);
        }
        // Hyperedges: u = f_1 ... f_k over all compositions of |u|.
        let k = inst.k as usize;
        let mut edges: Vec<Vec<u16>> = Vec::new();
        for (uid, u) in items.iter().enumerate() {
            if (u.len() as usize) < k {
                continue;
            }
            let mut parts = vec![1u32; k];
            parts[k - 1] = u.len() - (k as u32 - 1);
            loop {
                // Split u at the current composition.
                let mut ids = vec![uid as u16];
                let mut off = 0u32;
                for &p in &parts {
                    let f = mid_subword(u, off, p);
                    ids.push(index[&f]);
                    off += p;
                }
                ids.sort_unstable();
                ids.dedup();
                edges.push(ids);
                if !next_composition(&mut parts, u.len()) {
                    break;
                }
            }
        }
        edges.sort();
        edges.dedup();
        let mut item_edges = vec![Vec::new(); items.len()];
        for (eid, edge) in edges.iter().enumerate() {
            for &i in edge {
                item_edges[i as usize].push(eid as u32);
            }
        }
        Ok(Universe { alphabet, bound: inst.bound, items, weights, edges, item_edges })
    }

    fn weight_q(&self, total: u64) -> Q {
        Q::new(BigInt::from(total), BigInt::from(self.alphabet.size()).pow(self.bound))
    }
}

fn mid_subword(u: &Word, off: u32, len: u32) -> Word {
    u.suffix(u.len() - off).prefix(len)
}

/// Advances a composition of fixed total (all parts >= 1) to its
/// lexicographic successor; returns false when exhausted.
fn next_composition(parts: &mut [u32], total: u32) -> bool {
    let k = parts.len();
    if k == 1 {
        return false;
    }
    for i in (0..k - 1).rev() {
        let prefix: u32 = parts[..i].iter().sum();
        let min_tail = (k - i - 2) as u32 + 1; // parts after i at 1, last >= 1
        if prefix + parts[i] + 1 + min_tail <= total {
            parts[i] += 1;
            for j in i + 1..k - 1 {
                parts[j] = 1;
            }
            let used: u32 = parts[..k - 1].iter().sum();
            parts[k - 1] = total - used;
            return true;
        }
    }
    false
}

/// Selected-set ordering: higher weight wins; ties broken by the
/// lexicographically smallest member bitmap (absent-before-present at the
/// first differing item).
fn better(weight_a: u64, set_a: u64, weight_b: u64, set_b: u64) -> bool {
    if weight_a != weight_b {
        return weight_a > weight_b;
    }
    let d = set_a ^ set_b;
    if d == 0 {
        return false;
    }
    let i = d.trailing_zeros();
    set_a >> i & 1 == 0
}

struct Solver<'a> {
    uni: &'a Universe,
    suffix: Vec<u64>,
    best_weight: u64,
    best_set: u64,
    log: Option<Vec<String>>,
}

impl<'a> Solver<'a> {
    fn new(uni: &'a Universe, log: bool) -> Self {
        let n = uni.items.len();
        let mut suffix = vec![0u64; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] + uni.weights[i];
        }
        Solver { uni, suffix, best_weight: 0, best_set: 0, log: log.then(Vec::new) }
    }

    fn dfs(&mut self, i: usize, chosen: u64, weight: u64, needed: &mut [u8]) {
        if i == self.uni.items.len() {
            if better(weight, chosen, self.best_weight, self.best_set) {
                self.best_weight = weight;
                self.best_set = chosen;
            }
            return;
        }
        let bound = weight + self.suffix[i];
        if bound < self.best_weight {
            if let Some(log) = &mut self.log {
                log.push(format!(
                    "prune item={} bound={} incumbent={}",
                    i, bound, self.best_weight
                ));
            }
            return;
        }
        // Include item i when no edge completes.
        let mut blocked = false;
        for &eid in &self.uni.item_edges[i] {
            if needed[eid as usize] == 1 {
                blocked = true;
                break;
            }
        }
        if !blocked {
            for &eid in &self.uni.item_edges[i] {
                needed[eid as usize] -= 1;
            }
            self.dfs(i + 1, chosen | 1 << i, weight + self.uni.weights[i], needed);
            for &eid in &self.uni.item_edges[i] {
                needed[eid as usize] += 1;
            }
        }
        // Exclude item i.
        self.dfs(i + 1, chosen, weight, needed);
    }
}

/// Provably optimal mu-weighted k-product-free subset by branch-and-bound
/// over the item universe, with deterministic lexicographic tie-breaking.
/// Fails with `ExactInfeasible` beyond the item cap.
pub fn solve_exact(inst: &SearchInstance) -> Result<SearchResult> {
    solve_exact_inner(inst, false).map(|(r, _)| r)
}

/// Same as `solve_exact` but also returns the textual prune log for offline
/// audit of the bound at every pruned node. Runs single-threaded.
pub fn solve_exact_logged(inst: &SearchInstance) -> Result<(SearchResult, Vec<String>)> {
    let (r, log) = solve_exact_inner(inst, true)?;
    Ok((r, log.unwrap_or_default()))
}

fn solve_exact_inner(
    inst: &SearchInstance,
    with_log: bool,
) -> Result<(SearchResult, Option<Vec<String>>)> {
    if inst.k < 2 {
        return Err(Error::OutOfRange("search requires k >= 2".into()));
    }
    let uni = Universe::build(inst)?;
    let n = uni.items.len();
    if n > EXACT_ITEM_CAP {
        return Err(Error::ExactInfeasible(format!(
            "{n} items exceed the exact cap {EXACT_ITEM_CAP}"
        )));
    }
    let needed_init: Vec<u8> = uni.edges.iter().map(|e| e.len() as u8).collect();

    let (best_weight, best_set, log) = if with_log {
        let mut solver = Solver::new(&uni, true);
        let mut needed = needed_init.clone();
        solver.dfs(0, 0, 0, &mut needed);
        (solver.best_weight, solver.best_set, solver.log)
    } else {
        // Deterministic parallel split on the first few items; the reduce is
        // a total-order maximum, so the result is worker-count independent.
        let depth = n.min(6);
        let prefixes: Vec<(u64, u64, Vec<u8>)> = (0u64..(1 << depth))
            .filter_map(|mask| {
                let mut needed = needed_init.clone();
                let mut weight = 0u64;
                for i in 0..depth {
                    if mask >> i & 1 == 1 {
                        for &eid in &uni.item_edges[i] {
                            if needed[eid as usize] == 1 {
                                return None; // completes an edge
                            }
                        }
                        for &eid in &uni.item_edges[i] {
                            needed[eid as usize] -= 1;
                        }
                        weight += uni.weights[i];
                    }
                }
                Some((mask, weight, needed))
            })
            .collect();
        let best = prefixes
            .into_par_iter()
            .map(|(mask, weight, mut needed)| {
                let mut solver = Solver::new(&uni, false);
                solver.dfs(depth, mask, weight, &mut needed);
                (solver.best_weight, solver.best_set)
            })
            .reduce(
                || (0u64, 0u64),
                |a, b| if better(b.0, b.1, a.0, a.1) { b } else { a },
            );
        (best.0, best.1, None)
    };

    let words: Vec<Word> =
        (0..n).filter(|&i| best_set >> i & 1 == 1).map(|i| uni.items[i]).collect();
    let containment = certify_containment_words(&words, inst)?;
    Ok((
        SearchResult {
            instance: *inst,
            optimum: uni.weight_q(best_weight),
            words,
            certificate: Certificate::BranchAndBound,
            containment,
        },
        log,
    ))
}

/// Randomized local search with recorded seed: greedy insertion sweeps in
/// random order plus random restarts, always feasibility-checked. The warm
/// start is the best labeled construction, so the result never falls below
/// the known lower bound.
pub fn heuristic_search(inst: &SearchInstance, seed: u64, budget: u64) -> Result<SearchResult> {
    if inst.k < 2 {
        return Err(Error::OutOfRange("search requires k >= 2".into()));
    }
    let uni = Universe::build(inst)?;
    let n = uni.items.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut chosen = vec![false; n];
    let mut needed: Vec<u8> = uni.edges.iter().map(|e| e.len() as u8).collect();
    let mut weight = 0u64;

    let can_add = |i: usize, chosen: &[bool], needed: &[u8]| -> bool {
        !chosen[i] && uni.item_edges[i].iter().all(|&e| needed[e as usize] > 1)
    };
    let add = |i: usize, chosen: &mut [bool], needed: &mut [u8], weight: &mut u64| {
        chosen[i] = true;
        *weight += uni.weights[i];
        for &e in &uni.item_edges[i] {
            needed[e as usize] -= 1;
        }
    };
    let remove = |i: usize, chosen: &mut [bool], needed: &mut [u8], weight: &mut u64| {
        chosen[i] = false;
        *weight -= uni.weights[i];
        for &e in &uni.item_edges[i] {
            needed[e as usize] += 1;
        }
    };

    // Warm start: the best labeled set mod rho(k), target {1}.
    let rho = crate::arith::rho(inst.k as u64)?;
    let alphabet = uni.alphabet;
    let mut best_warm: Option<Vec<usize>> = None;
    let mut best_warm_weight = 0u64;
    for labels in enumerate_labelings(alphabet.size(), rho) {
        let lab = Labeling::new(rho, labels, vec![1])?;
        let ids: Vec<usize> = (0..n)
            .filter(|&i| lab.hits_target(lab.residue(&uni.items[i])))
            .collect();
        let w: u64 = ids.iter().map(|&i| uni.weights[i]).sum();
        if w > best_warm_weight {
            best_warm_weight = w;
            best_warm = Some(ids);
        }
    }
    if let Some(ids) = best_warm {
        for i in ids {
            if can_add(i, &chosen, &needed) {
                add(i, &mut chosen, &mut needed, &mut weight);
            }
        }
    }

    let pack = |chosen: &[bool]| -> u128 {
        chosen.iter().enumerate().fold(0u128, |acc, (i, &c)| acc | (c as u128) << (i % 128))
    };
    let mut best_weight = weight;
    let mut best_chosen = chosen.clone();
    let mut best_pack = pack(&chosen);

    let mut order: Vec<usize> = (0..n).collect();
    let mut spent = 0u64;
    while spent < budget {
        // Greedy sweep in random order.
        for idx in 0..n {
            let j = rng.random_range(idx..n);
            order.swap(idx, j);
        }
        for &i in &order {
            spent += 1;
            if can_add(i, &chosen, &needed) {
                add(i, &mut chosen, &mut needed, &mut weight);
            }
        }
        if weight > best_weight || (weight == best_weight && pack(&chosen) < best_pack) {
            best_weight = weight;
            best_chosen = chosen.clone();
            best_pack = pack(&chosen);
        }
        if spent >= budget {
            break;
        }
        // Perturb: drop a random fraction of members.
        for i in 0..n {
            spent += 1;
            if chosen[i] && rng.random_bool(0.3) {
                remove(i, &mut chosen, &mut needed, &mut weight);
            }
        }
    }

    let words: Vec<Word> =
        (0..n).filter(|&i| best_chosen[i]).map(|i| uni.items[i]).collect();
    let containment = certify_containment_words(&words, inst)?;
    let result = SearchResult {
        instance: *inst,
        optimum: uni.weight_q(best_weight),
        words,
        certificate: Certificate::Heuristic,
        containment,
    };
    // Contract: the reported set is feasible.
    let (ok, _) = result.verify_product_free()?;
    if !ok {
        return Err(Error::ExactInfeasible("heuristic produced an infeasible set".into()));
    }
    Ok(result)
}

fn enumerate_labelings(letters: u32, modulus: u32) -> Vec<Vec<u32>> {
    let total = (modulus as u64).checked_pow(letters).unwrap_or(u64::MAX);
    let mut out = Vec::new();
    if total > 100_000 {
        return out;
    }
    for code in 0..total {
        let mut labels = Vec::with_capacity(letters as usize);
        let mut c = code;
        for _ in 0..letters {
            labels.push((c % modulus as u64) as u32);
            c /= modulus as u64;
        }
        out.push(labels);
    }
    out
}

/// Enumerates all letter labelings by Z/rho with target {1} (and, when
/// rho = 3, additionally Z/6 with target {1, 2}) and reports every labeling
/// whose labeled set contains all the given words. An empty report means no
/// labeled superset was found at this scale.
pub fn certify_containment(s: &ExplicitLayers, rho: u32) -> Result<Vec<Labeling>> {
    let inst = SearchInstance {
        alphabet_size: s.alphabet().size(),
        k: 0, // unused by the words path
        bound: s.bound(),
    };
    certify_words(&s.words(), &inst, rho)
}

fn certify_containment_words(words: &[Word], inst: &SearchInstance) -> Result<Vec<Labeling>> {
    let rho = crate::arith::rho(inst.k as u64)?;
    certify_words(words, inst, rho)
}

fn certify_words(words: &[Word], inst: &SearchInstance, rho: u32) -> Result<Vec<Labeling>> {
    let letters = inst.alphabet_size;
    let cap = (rho as u64).checked_pow(letters);
    if cap.is_none() || cap.unwrap() > 100_000 {
        return Err(Error::BoundOverflow(format!(
            "rho^|A| = {rho}^{letters} labelings exceed the enumeration cap"
        )));
    }
    let mut out = Vec::new();
    let mut candidates: Vec<(u32, Vec<u32>)> = enumerate_labelings(letters, rho)
        .into_iter()
        .map(|labels| (rho, labels))
        .collect();
    if rho == 3 {
        candidates.extend(enumerate_labelings(letters, 6).into_iter().map(|labels| (6, labels)));
    }
    for (m, labels) in candidates {
        let targets = if m == rho { vec![1] } else { vec![1, 2] };
        let lab = Labeling::new(m, labels, targets)?;
        if words.iter().all(|w| lab.hits_target(lab.residue(w))) {
            out.push(lab);
        }
    }
    Ok(out)
}
