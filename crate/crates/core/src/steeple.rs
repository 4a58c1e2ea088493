//! Steeplechase machinery: the headcount capture construction, spread
//! subsequence extraction, the coverage bound for spelling checks, and the
//! greedy prefix-free refinement.

use crate::bitset::Bitmap;
use crate::words::Word;
use crate::wordsets::{ExplicitLayers, WordSet};
use crate::{Error, Q, Result};
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A finite chain of prefix-free stages with chaining metadata.
#[derive(Clone, Debug)]
pub struct Steeplechase {
    pub stages: Vec<ExplicitLayers>,
    /// Length cutoffs chosen for each stage by the capture construction.
    pub cutoffs: Vec<u32>,
    pub epsilon: Q,
    pub spread: bool,
    pub tight: bool,
    /// Tail mass beyond the construction bound was assumed zero.
    pub truncated: bool,
    pub bound: u32,
}

impl Steeplechase {
    /// Re-verifies every type invariant by exact recomputation: stages
    /// prefix-free and finite, chaining (every word of the next stage has a
    /// proper prefix in the previous), min C_k >= k, non-increasing measures,
    /// and the spread/tight flags where set.
    pub fn verify_invariants(&self) -> Result<()> {
        for (idx, stage) in self.stages.iter().enumerate() {
            let k = idx + 1;
            if stage.is_empty_set() {
                return Err(Error::InvalidSteeplechase(format!("stage {k} is empty")));
            }
            if !stage.is_prefix_free() {
                return Err(Error::InvalidSteeplechase(format!("stage {k} is not prefix-free")));
            }
            if (stage.min_len().unwrap() as usize) < k {
                return Err(Error::InvalidSteeplechase(format!(
                    "min C_{k} = {} < {k}",
                    stage.min_len().unwrap()
                )));
            }
        }
        for idx in 1..self.stages.len() {
            let prev = &self.stages[idx - 1];
            for w in self.stages[idx].words() {
                let has_proper_prefix =
                    (1..w.len()).any(|l| prev.contains(&w.prefix(l)).unwrap_or(false));
                if !has_proper_prefix {
                    return Err(Error::InvalidSteeplechase(format!(
                        "word {:?} of stage {} has no proper prefix in stage {}",
                        w.render(),
                        idx + 1,
                        idx
                    )));
                }
            }
        }
        let mus: Vec<Q> = self.stages.iter().map(|s| s.total_mu()).collect();
        for pair in mus.windows(2) {
            if pair[1] > pair[0] {
                return Err(Error::InvalidSteeplechase("stage measures increase".into()));
            }
        }
        if self.spread {
            for idx in 1..self.stages.len() {
                let prev_max = self.stages[idx - 1].max_len().unwrap();
                let next_min = self.stages[idx].min_len().unwrap();
                if prev_max >= next_min {
                    return Err(Error::InvalidSteeplechase(format!(
                        "not spread between stages {} and {}",
                        idx,
                        idx + 1
                    )));
                }
            }
        }
        if self.tight {
            for a in &mus {
                for b in &mus {
                    if (a - b).abs() > self.epsilon {
                        return Err(Error::InvalidSteeplechase("stage measures not tight".into()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn stage_mus(&self) -> Vec<Q> {
        self.stages.iter().map(|s| s.total_mu()).collect()
    }
}

/// Number of prefixes of `x` (including `x`) that are members of `b`.
pub fn headcount(b: &WordSet, x: &Word) -> Result<u32> {
    let mut count = 0;
    for l in 1..=x.len() {
        if b.contains(&x.prefix(l))? {
            count += 1;
        }
    }
    Ok(count)
}

/// Headcounts of all words up to the bound against an explicit set, by the
/// layer recursion `h(w) = h(parent) + [w in B]`.
fn headcount_table(e: &ExplicitLayers) -> Vec<Vec<u32>> {
    let base = e.alphabet().size() as u64;
    let mut layers: Vec<Vec<u32>> = Vec::with_capacity(e.bound() as usize);
    for n in 1..=e.bound() {
        let size = e.layer(n).len();
        let mut cur = vec![0u32; size as usize];
        for rank in 0..size {
            let parent = if n == 1 { 0 } else { layers[(n - 2) as usize][(rank / base) as usize] };
            cur[rank as usize] = parent + e.layer(n).get(rank) as u32;
        }
        layers.push(cur);
    }
    layers
}

/// The capture construction: iteratively extract the headcount-k words,
/// cut them at the smallest length keeping the residual mass within the
/// epsilon budget, and delete the cut subtrees. Tail mass beyond the bound
/// is treated as zero and flagged via `truncated`.
pub fn capture(b: &WordSet, epsilon: &Q, bound: u32) -> Result<Steeplechase> {
    if *epsilon <= Q::zero() {
        return Err(Error::OutOfRange("epsilon must be positive".into()));
    }
    let mut cur = b.explicitize(bound)?;
    let alphabet = cur.alphabet();
    let mut stages = Vec::new();
    let mut cutoffs = Vec::new();
    let mut budget = epsilon.clone() / Q::from(BigInt::from(2)); // epsilon / 2^k at stage k
    loop {
        let k = stages.len() + 1;
        let hc = headcount_table(&cur);
        let mut dk = ExplicitLayers::empty(alphabet, bound)?;
        for n in 1..=bound {
            let layer = cur.layer(n);
            for rank in layer.iter_ones() {
                if hc[(n - 1) as usize][rank as usize] == k as u32 {
                    dk.layer_mut(n).set(rank);
                }
            }
        }
        if dk.is_empty_set() {
            break;
        }
        // Minimal cutoff with residual layer mass <= eps/2^k on layers <= bound.
        let masses: Vec<Q> = (1..=bound).map(|n| dk.layer_mu(n)).collect();
        let mut cutoff = bound;
        let mut tail = Q::zero();
        for n in (1..=bound).rev() {
            let with_layer = &tail + &masses[(n - 1) as usize];
            if with_layer <= budget {
                tail = with_layer;
                cutoff = n - 1;
            } else {
                break;
            }
        }
        // C_k = D_k up to the cutoff.
        let mut ck = ExplicitLayers::empty(alphabet, bound)?;
        for n in 1..=cutoff {
            ck.layer_mut(n).union_with(dk.layer(n));
        }
        if ck.is_empty_set() {
            break;
        }
        // Remove (D_k \ C_k) F from the current set.
        let mut removed_roots = ExplicitLayers::empty(alphabet, bound)?;
        for n in (cutoff + 1)..=bound {
            removed_roots.layer_mut(n).union_with(dk.layer(n));
        }
        if !removed_roots.is_empty_set() {
            remove_subtrees(&mut cur, &removed_roots);
        }
        stages.push(ck);
        cutoffs.push(cutoff);
        budget /= Q::from(BigInt::from(2));
        if stages.len() as u32 >= bound {
            break; // min C_k >= k, so no stage beyond the bound can exist
        }
    }
    if stages.is_empty() {
        return Err(Error::InvalidSteeplechase(
            "bound too small: no first stage could be captured".into(),
        ));
    }
    let mut chase = Steeplechase {
        stages,
        cutoffs,
        epsilon: epsilon.clone(),
        spread: false,
        tight: false,
        truncated: true,
        bound,
    };
    chase.spread = check_spread(&chase.stages);
    chase.tight = check_tight(&chase.stage_mus(), epsilon);
    Ok(chase)
}

fn remove_subtrees(cur: &mut ExplicitLayers, roots: &ExplicitLayers) {
    let base = cur.alphabet().size() as u64;
    let bound = cur.bound();
    // Propagate root marks downward layer by layer, clearing members.
    let mut marked: Vec<Bitmap> = (1..=bound).map(|n| roots.layer(n).clone()).collect();
    for n in 1..=bound {
        let idx = (n - 1) as usize;
        if n > 1 {
            let (head, tail) = marked.split_at_mut(idx);
            let prev = &head[idx - 1];
            let curm = &mut tail[0];
            for rank in prev.iter_ones() {
                for l in 0..base {
                    curm.set(rank * base + l);
                }
            }
        }
        for rank in marked[idx].iter_ones() {
            cur.layer_mut(n).clear(rank);
        }
    }
}

fn check_spread(stages: &[ExplicitLayers]) -> bool {
    stages.windows(2).all(|pair| pair[0].max_len().unwrap() < pair[1].min_len().unwrap())
}

fn check_tight(mus: &[Q], epsilon: &Q) -> bool {
    mus.iter()
        .flat_map(|a| mus.iter().map(move |b| (a - b).abs()))
        .all(|d| d <= *epsilon)
}

/// Extracts the spread subsequence with stage indices 1, l_1 + 1, l_2 + 1,
/// ... where l_i is the max length of the previously selected stage.
pub fn make_spread(chase: &Steeplechase) -> Result<Steeplechase> {
    if chase.stages.len() < 2 {
        return Err(Error::InvalidSteeplechase("need at least 2 stages to spread".into()));
    }
    let mut selected = vec![0usize];
    loop {
        let last = *selected.last().unwrap();
        let l = chase.stages[last].max_len().unwrap() as usize;
        // Next stage index (1-based) is l + 1, i.e. 0-based index l.
        if l >= chase.stages.len() || l == last {
            break;
        }
        selected.push(l);
    }
    let stages: Vec<ExplicitLayers> = selected.iter().map(|&i| chase.stages[i].clone()).collect();
    let cutoffs: Vec<u32> =
        selected.iter().filter_map(|&i| chase.cutoffs.get(i).copied()).collect();
    let mut out = Steeplechase {
        stages,
        cutoffs,
        epsilon: chase.epsilon.clone(),
        spread: false,
        tight: false,
        truncated: chase.truncated,
        bound: chase.bound,
    };
    if !check_spread(&out.stages) {
        return Err(Error::InvalidSteeplechase("index rule did not yield a spread chase".into()));
    }
    out.spread = true;
    out.tight = check_tight(&out.stage_mus(), &out.epsilon);
    out.verify_invariants()?;
    Ok(out)
}

/// Result of the coverage computation for spelling checks.
#[derive(Clone, Debug)]
pub struct CoverageBound {
    /// Minimal N for which the miss probability drops below epsilon.
    pub n: u32,
    /// Number of independent spelling checks, K + 1.
    pub checks: u32,
    /// Exact miss probability `(1 - |A|^-|w|)^(K+1)`.
    pub miss_probability: Q,
}

/// Smallest `N` such that with `K = floor((N - |w| - 1) / |w|)` the miss
/// bound `(1 - |A|^-|w|)^(K+1)` is at most epsilon; exact rational powers.
pub fn coverage_bound(alphabet_size: u32, w_len: u32, epsilon: &Q) -> Result<CoverageBound> {
    if w_len == 0 {
        return Err(Error::OutOfRange("|w| must be >= 1".into()));
    }
    if *epsilon <= Q::zero() || *epsilon >= Q::one() {
        return Err(Error::OutOfRange("epsilon must lie in (0, 1)".into()));
    }
    let hit = Q::new(BigInt::one(), BigInt::from(alphabet_size).pow(w_len));
    let p = Q::one() - hit; // miss probability of one check
    if p.is_zero() {
        // Unary alphabet: a single check always hits.
        return Ok(CoverageBound { n: w_len + 1, checks: 1, miss_probability: Q::zero() });
    }
    let mut power = p.clone();
    let mut checks = 1u32;
    while power > *epsilon {
        power *= &p;
        checks += 1;
        if checks > 1 << 20 {
            return Err(Error::BoundOverflow("coverage exponent exceeds 2^20".into()));
        }
    }
    // Minimal N with floor((N - |w| - 1)/|w|) = checks - 1.
    let n = 1 + checks * w_len;
    Ok(CoverageBound { n, checks, miss_probability: power })
}

/// Monte Carlo cross-check of the coverage bound: simulates `trials` runs of
/// `checks` independent spelling checks, each hitting with probability
/// `|A|^-|w|`, and returns the empirical miss rate.
pub fn simulate_coverage(
    alphabet_size: u32,
    w_len: u32,
    checks: u32,
    trials: u64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hit = (alphabet_size as f64).powi(-(w_len as i32));
    let mut misses = 0u64;
    for _ in 0..trials {
        let survived = (0..checks).all(|_| rng.random::<f64>() >= hit);
        misses += survived as u64;
    }
    misses as f64 / trials as f64
}

/// Greedy refinement: the subset `C~` of `c` (scanned by increasing length,
/// then rank) such that `C~ w` is prefix-free and `C~ w F = C w F`.
pub fn greedy_prefix_free(c: &ExplicitLayers, w: &Word) -> Result<ExplicitLayers> {
    let alphabet = c.alphabet();
    if w.alphabet_size() != alphabet.size() {
        return Err(Error::AlphabetMismatch(alphabet.size(), w.alphabet_size()));
    }
    let mut kept: Vec<Word> = Vec::new();
    let mut out = ExplicitLayers::empty(alphabet, c.bound())?;
    for cand in c.words() {
        let cw = cand.concat(w)?;
        let covered = kept
            .iter()
            .any(|k| k.concat(w).map(|kw| kw.is_prefix_of(&cw).unwrap_or(false)).unwrap_or(false));
        if !covered {
            out.insert(&cand);
            kept.push(cand);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::q;
    use crate::words::Alphabet;
    use crate::wordsets::{odd_occurrence, Labeling};
    use std::sync::Arc;

    fn ab() -> Alphabet {
        Alphabet::new(2).unwrap()
    }

    #[test]
    fn headcount_examples() {
        let u = Alphabet::new(1).unwrap();
        let plus = WordSet::Labeled {
            alphabet: u,
            labeling: Labeling::new(1, vec![0], vec![0]).unwrap(),
        };
        let x = u.parse("aaa").unwrap();
        assert_eq!(headcount(&plus, &x).unwrap(), 3);

        let a = ab();
        let odd = odd_occurrence(a, &[0, 1]).unwrap();
        let x = a.parse("abababa").unwrap();
        assert_eq!(headcount(&odd, &x).unwrap(), 4); // lengths 1, 3, 5, 7

        let none =
            WordSet::Explicit(ExplicitLayers::from_words(a, 3, &[a.parse("bbb").unwrap()]).unwrap());
        assert_eq!(headcount(&none, &a.parse("aaa").unwrap()).unwrap(), 0);
    }

    #[test]
    fn capture_unary() {
        let u = Alphabet::new(1).unwrap();
        let plus = WordSet::Labeled {
            alphabet: u,
            labeling: Labeling::new(1, vec![0], vec![0]).unwrap(),
        };
        let chase = capture(&plus, &q(1, 4), 8).unwrap();
        chase.verify_invariants().unwrap();
        // C_k = {a^k}, cutoff k.
        for (i, stage) in chase.stages.iter().enumerate() {
            let k = i as u32 + 1;
            let words = stage.words();
            assert_eq!(words.len(), 1);
            assert_eq!(words[0].len(), k);
            assert_eq!(chase.cutoffs[i], k);
        }
    }

    #[test]
    fn capture_odd_lengths() {
        let a = ab();
        let odd = odd_occurrence(a, &[0, 1]).unwrap();
        let chase = capture(&odd, &q(1, 4), 12).unwrap();
        chase.verify_invariants().unwrap();
        assert_eq!(chase.stages.len(), 6);
        for (i, stage) in chase.stages.iter().enumerate() {
            let k = i as u32 + 1;
            // D_k is exactly layer 2k - 1 and the cutoff keeps the whole layer.
            assert_eq!(stage.min_len().unwrap(), 2 * k - 1);
            assert_eq!(stage.max_len().unwrap(), 2 * k - 1);
            assert_eq!(stage.total_mu(), q(1, 1));
        }
        assert!(chase.tight);
        assert!(chase.spread);
        // Third bullet at finite scale: mu(C_k) >= max-window density - eps.
        let (proxy, _) = crate::density::banach_density_estimate(&odd, 4, 12).unwrap();
        for mu in chase.stage_mus() {
            assert!(mu >= proxy.clone() - q(1, 4));
        }
    }

    #[test]
    fn capture_respects_epsilon_budget() {
        // A thinning set; after each stage, the uncovered mass on layers past
        // the stage maximum must stay within epsilon.
        let a = ab();
        let s = WordSet::Predicate {
            alphabet: a,
            bound: 10,
            f: Arc::new(|w: &Word| w.len() % 2 == 1 && w.rank() % 3 != 0),
        };
        let eps = q(1, 8);
        let chase = capture(&s, &eps, 10).unwrap();
        chase.verify_invariants().unwrap();
        // Every stage is a subset of the original set.
        for stage in &chase.stages {
            for w in stage.words() {
                assert!(s.contains(&w).unwrap());
            }
        }
        // mu((B \ C_k F)(n)) <= eps for max C_k < n <= bound.
        let be = s.explicitize(10).unwrap();
        for (i, stage) in chase.stages.iter().enumerate() {
            let from = stage.max_len().unwrap() + 1;
            for n in from..=10 {
                let mut uncovered = 0u64;
                'word: for rank in be.layer(n).iter_ones() {
                    let w = Word::from_rank(2, n, rank);
                    for l in 1..w.len() {
                        if stage.contains(&w.prefix(l)).unwrap() {
                            continue 'word;
                        }
                    }
                    uncovered += 1;
                }
                let mass = Q::new(BigInt::from(uncovered), BigInt::from(2u32).pow(n));
                assert!(mass <= eps, "stage {} layer {n}: {mass}", i + 1);
            }
        }
    }

    #[test]
    fn capture_stage_prefix_disjointness() {
        // No word of C_k is a prefix of a distinct word of C_j for j <= k.
        let a = ab();
        let s = WordSet::Predicate {
            alphabet: a,
            bound: 9,
            f: Arc::new(|w: &Word| w.rank().count_ones() % 2 == 0),
        };
        let chase = capture(&s, &q(1, 6), 9).unwrap();
        chase.verify_invariants().unwrap();
        for k in 0..chase.stages.len() {
            for j in 0..=k {
                for wk in chase.stages[k].words() {
                    for wj in chase.stages[j].words() {
                        if j == k && wk == wj {
                            continue;
                        }
                        assert!(
                            !wk.is_prefix_of(&wj).unwrap(),
                            "C_{} word {:?} prefixes C_{} word {:?}",
                            k + 1,
                            wk.render(),
                            j + 1,
                            wj.render()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn spread_extraction() {
        let u = Alphabet::new(1).unwrap();
        let plus = WordSet::Labeled {
            alphabet: u,
            labeling: Labeling::new(1, vec![0], vec![0]).unwrap(),
        };
        let chase = capture(&plus, &q(1, 4), 6).unwrap();
        // Unary chase is already spread; the rule keeps every stage.
        let spread = make_spread(&chase).unwrap();
        assert_eq!(spread.stages.len(), chase.stages.len());

        let a = ab();
        let odd = odd_occurrence(a, &[0, 1]).unwrap();
        let chase = capture(&odd, &q(1, 4), 12).unwrap();
        let spread = make_spread(&chase).unwrap();
        assert!(spread.spread);
        // Selected indices follow 1, l1+1, ...: stage 1 has max length 1, so
        // the next index is 2 (layer 3), then 4 (layer 7).
        let min_lens: Vec<u32> = spread.stages.iter().map(|s| s.min_len().unwrap()).collect();
        assert_eq!(min_lens, vec![1, 3, 7]);

        let single = Steeplechase {
            stages: chase.stages[..1].to_vec(),
            cutoffs: chase.cutoffs[..1].to_vec(),
            epsilon: q(1, 4),
            spread: false,
            tight: false,
            truncated: true,
            bound: 12,
        };
        assert!(make_spread(&single).is_err());
    }

    #[test]
    fn coverage_bound_examples() {
        // |A|=2, |w|=1, eps=1/100: (1/2)^7 = 1/128 <= 1/100, so 7 checks, N=8.
        let c = coverage_bound(2, 1, &q(1, 100)).unwrap();
        assert_eq!(c.checks, 7);
        assert_eq!(c.n, 8);
        assert_eq!(c.miss_probability, q(1, 128));
        // Large epsilon: one check suffices.
        let c = coverage_bound(2, 2, &q(9, 10)).unwrap();
        assert_eq!(c.checks, 1);
        assert_eq!(c.n, 3);
        // |A|=2, |w|=2, eps=1/10: smallest e with (3/4)^e <= 1/10 is 9.
        let c = coverage_bound(2, 2, &q(1, 10)).unwrap();
        assert_eq!(c.checks, 9);
        assert_eq!(c.n, 19);
    }

    #[test]
    fn coverage_simulation_within_three_sigma() {
        let c = coverage_bound(2, 1, &q(1, 100)).unwrap();
        let trials = 100_000u64;
        let rate = simulate_coverage(2, 1, c.checks, trials, 0xC0FFEE);
        let eps = 0.01f64;
        assert!(rate <= eps + 3.0 * (eps / trials as f64).sqrt(), "rate {rate}");
        // Also within 3 sigma of the exact miss probability.
        let p = 1.0 / 128.0;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((rate - p).abs() <= 3.0 * sigma, "rate {rate} vs p {p}");
    }

    #[test]
    fn greedy_refinement() {
        let a = ab();
        // C prefix-free and single-layer: unchanged.
        let c =
            ExplicitLayers::from_words(a, 2, &[a.parse("aa").unwrap(), a.parse("ab").unwrap()])
                .unwrap();
        let r = greedy_prefix_free(&c, &a.parse("b").unwrap()).unwrap();
        assert_eq!(r, c);

        // C = {a, ab}, w = b: "ab.b" has the prefix "a.b", so only "a" stays.
        let c = ExplicitLayers::from_words(a, 2, &[a.parse("a").unwrap(), a.parse("ab").unwrap()])
            .unwrap();
        let r = greedy_prefix_free(&c, &a.parse("b").unwrap()).unwrap();
        assert_eq!(r.words(), vec![a.parse("a").unwrap()]);
    }

    #[test]
    fn greedy_refinement_preserves_subtrees() {
        // C~ w F = C w F compared layer by layer.
        let a = ab();
        let words: Vec<Word> =
            ["a", "ba", "ab", "abb", "bb"].iter().map(|t| a.parse(t).unwrap()).collect();
        let c = ExplicitLayers::from_words(a, 3, &words).unwrap();
        let w = a.parse("ab").unwrap();
        let refined = greedy_prefix_free(&c, &w).unwrap();
        // C~ w must be prefix-free.
        let cw: Vec<Word> = refined.words().iter().map(|c| c.concat(&w).unwrap()).collect();
        let cwe = ExplicitLayers::from_words(a, 5, &cw).unwrap();
        assert!(cwe.is_prefix_free());
        // Subtree bitmaps agree at every layer <= 9.
        let bound = 9u32;
        let full = subtree_layers(&c, &w, bound);
        let reduced = subtree_layers(&refined, &w, bound);
        assert_eq!(full, reduced);
    }

    fn subtree_layers(c: &ExplicitLayers, w: &Word, bound: u32) -> ExplicitLayers {
        let a = c.alphabet();
        let mut out = ExplicitLayers::empty(a, bound).unwrap();
        for cw in c.words().iter().map(|c| c.concat(w).unwrap()) {
            for n in cw.len()..=bound {
                let width = a.layer_size(n - cw.len()).unwrap();
                for j in 0..width {
                    out.insert(&Word::from_rank(a.size(), n, cw.rank() * width + j));
                }
            }
        }
        out
    }
}
