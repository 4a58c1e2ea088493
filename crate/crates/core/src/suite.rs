//! The acceptance battery: each check pins its tolerances in code and
//! reports one pass/fail line. Shared by the CLI `suite` subcommand and the
//! acceptance test target.

use crate::arith;
use crate::density::{self, Interval};
use crate::freegroup::{self, GroupLabeling, ReducedWord, SignedLetter, Subsemigroup};
use crate::search::{self, SearchInstance};
use crate::steeple;
use crate::words::{Alphabet, Word};
use crate::wordsets::{self, ExplicitLayers, Labeling, WordSet};
use crate::{q, Q};
use num_bigint::BigInt;
use num_traits::{One, Signed};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::time::{Duration, Instant};

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {} ({:.2?}): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.elapsed,
            self.detail
        )
    }
}

fn finish(
    name: &'static str,
    start: Instant,
    limit: Option<Duration>,
    ok: bool,
    detail: String,
) -> CheckResult {
    let elapsed = start.elapsed();
    let in_time = limit.map_or(true, |l| elapsed <= l);
    let detail = if in_time {
        detail
    } else {
        format!("{detail}; exceeded time limit {limit:?}")
    };
    CheckResult { name, passed: ok && in_time, detail, elapsed }
}

/// Criterion 1: the rho case table, under one second.
pub fn check_rho_table() -> CheckResult {
    let start = Instant::now();
    let table = [(4u64, 2u32), (3, 3), (5, 3), (7, 4), (13, 5), (61, 7), (421, 8), (841, 9)];
    let mut ok = true;
    let mut bad = String::new();
    for (k, want) in table {
        let got = arith::rho(k).unwrap();
        if got != want {
            ok = false;
            bad.push_str(&format!(" rho({k}) = {got} != {want};"));
        }
    }
    finish(
        "rho-table",
        start,
        Some(Duration::from_secs(1)),
        ok,
        if ok { "all 8 table entries exact".into() } else { bad },
    )
}

/// Criterion 2: the inequality holds for all k in [3, limit] except exactly
/// {3, 5, 7, 13}; rho is a prime power and the Lev bound holds throughout.
pub fn check_lemma_inequality_battery(limit: u64) -> CheckResult {
    let start = Instant::now();
    let failures: Vec<u64> = (3..=limit)
        .into_par_iter()
        .filter(|&k| {
            let (holds, _) = arith::check_rho_inequality(k).unwrap();
            let expected = !matches!(k, 3 | 5 | 7 | 13);
            holds != expected
                || !arith::rho_is_prime_power(k).unwrap()
                || !arith::lev_bound_holds(k).unwrap()
        })
        .collect();
    let ok = failures.is_empty();
    finish(
        "rho-inequality-battery",
        start,
        Some(Duration::from_secs(60)),
        ok,
        if ok {
            format!("k in [3, {limit}]: inequality fails exactly on {{3,5,7,13}}, rho always a prime power, Lev bound always holds")
        } else {
            format!("unexpected k: {:?}", &failures[..failures.len().min(10)])
        },
    )
}

/// Criterion 3: the constructed A-sequence verifies for every k in [2, limit].
pub fn check_asequence_battery(limit: u64) -> CheckResult {
    let start = Instant::now();
    let failures: Vec<u64> = (2..=limit)
        .into_par_iter()
        .filter(|&k| {
            let seq = match arith::construct_asequence(k) {
                Ok(s) => s,
                Err(_) => return true,
            };
            !matches!(arith::verify_asequence(&seq), Ok((true, None)))
        })
        .collect();
    let ok = failures.is_empty();
    finish(
        "asequence-battery",
        start,
        Some(Duration::from_secs(300)),
        ok,
        if ok {
            format!("construct_asequence(k) verified for all k in [2, {limit}]")
        } else {
            format!("failing k: {:?}", &failures[..failures.len().min(10)])
        },
    )
}

fn random_prefix_free(rng: &mut StdRng, alphabet: Alphabet, max_len: u32) -> Vec<Word> {
    let mut words: Vec<Word> = Vec::new();
    let attempts = rng.random_range(1..=8);
    for _ in 0..attempts {
        let len = rng.random_range(1..=max_len);
        let rank = rng.random_range(0..alphabet.layer_size(len).unwrap());
        let w = Word::from_rank(alphabet.size(), len, rank);
        let related = words
            .iter()
            .any(|e| e.is_prefix_of(&w).unwrap() || w.is_prefix_of(e).unwrap());
        if !related {
            words.push(w);
        }
    }
    words
}

/// Criterion 4: exact measure identities, tolerance-free.
pub fn check_measure_identities() -> CheckResult {
    let start = Instant::now();
    let a2 = Alphabet::new(2).unwrap();
    let mut problems = Vec::new();

    // mu(F(n)) = 1 for n <= 20 at |A| = 2.
    let f = WordSet::Labeled {
        alphabet: a2,
        labeling: Labeling::new(1, vec![0, 0], vec![0]).unwrap(),
    };
    for n in 1..=20u32 {
        if density::layer_density(&f, n).unwrap() != Q::one() {
            problems.push(format!("mu(F({n})) != 1"));
        }
    }

    // Prefix-free measure bound and subtree stabilization on 100 random sets.
    let mut rng = StdRng::seed_from_u64(0x5EED_0001);
    for trial in 0..100 {
        let words = random_prefix_free(&mut rng, a2, 6);
        if words.is_empty() {
            continue;
        }
        let mu_c: Q = words.iter().map(|w| w.mu()).sum();
        if mu_c > Q::one() {
            problems.push(format!("trial {trial}: mu(C) = {mu_c} > 1"));
        }
        let max_c = words.iter().map(|w| w.len()).max().unwrap();
        // mu((CF)(n)) built explicitly from subtree blocks.
        for n in max_c..=(max_c + 2) {
            let mut e = ExplicitLayers::empty(a2, n).unwrap();
            for c in &words {
                let width = a2.layer_size(n - c.len()).unwrap();
                for j in 0..width {
                    e.insert(&Word::from_rank(2, n, c.rank() * width + j));
                }
            }
            if e.layer_mu(n) != mu_c {
                problems.push(format!("trial {trial}: mu((CF)({n})) != mu(C)"));
            }
        }
    }

    // The prefix-stripping bound on 1000 randomized instances.
    let mut rng = StdRng::seed_from_u64(0x5EED_0002);
    for trial in 0..1000 {
        let bound = 10u32;
        let mut e = ExplicitLayers::empty(a2, bound).unwrap();
        for n in 1..=bound {
            for rank in 0..a2.layer_size(n).unwrap() {
                if rng.random_bool(0.4) {
                    e.insert(&Word::from_rank(2, n, rank));
                }
            }
        }
        let b = WordSet::Explicit(e);
        let wl = rng.random_range(0..=2u32);
        let vl = rng.random_range(0..=2u32);
        let w = Word::from_rank(2, wl, rng.random_range(0..a2.layer_size(wl).unwrap()));
        let v = Word::from_rank(2, vl, rng.random_range(0..a2.layer_size(vl).unwrap()));
        let lo = rng.random_range((wl + vl + 1)..=(bound - 1));
        let hi = rng.random_range(lo..=bound);
        let i = Interval::new(lo, hi).unwrap();
        let (_, _, holds) = density::strip_prefix_bound_check(&b, &w, &v, i).unwrap();
        if !holds {
            problems.push(format!("strip bound failed at trial {trial}"));
        }
    }

    // The partition identity on 1000 randomized instances.
    let mut rng = StdRng::seed_from_u64(0x5EED_0003);
    for trial in 0..1000 {
        let bound = 9u32;
        let mut e = ExplicitLayers::empty(a2, bound).unwrap();
        for n in 1..=bound {
            for rank in 0..a2.layer_size(n).unwrap() {
                if rng.random_bool(0.35) {
                    e.insert(&Word::from_rank(2, n, rank));
                }
            }
        }
        let b = WordSet::Explicit(e);
        let l = rng.random_range(0..=3u32);
        let lo = rng.random_range((l + 1)..=(bound - 1));
        let hi = rng.random_range(lo..=bound);
        if !density::partition_identity_check(&b, l, Interval::new(lo, hi).unwrap()).unwrap() {
            problems.push(format!("partition identity failed at trial {trial}"));
        }
    }

    let ok = problems.is_empty();
    finish(
        "measure-identities",
        start,
        None,
        ok,
        if ok {
            "mu(F(n)) = 1 (n <= 20); 100 prefix-free sets; 1000 strip-bound and 1000 partition instances, all exact".into()
        } else {
            problems.join("; ")
        },
    )
}

/// Criterion 5: window density of the all-ones labeled set over m = rho(k)
/// within 1/60 of 1/rho(k) for k in 2..=12, window 60, max_n 240.
pub fn check_extremal_density() -> CheckResult {
    let start = Instant::now();
    let a2 = Alphabet::new(2).unwrap();
    let mut problems = Vec::new();
    for k in 2..=12u64 {
        let m = arith::rho(k).unwrap();
        let lab = Labeling::new(m, vec![1, 1], vec![1]).unwrap();
        if !density::analyze_chain(&lab).irreducible {
            continue; // degenerate labeling
        }
        let t = WordSet::Labeled { alphabet: a2, labeling: lab };
        let (est, _) = density::banach_density_estimate(&t, 60, 240).unwrap();
        let target = Q::new(BigInt::one(), BigInt::from(m));
        if (est.clone() - &target).abs() > q(1, 60) {
            problems.push(format!("k = {k}: window density {est} vs 1/{m}"));
        }
    }
    let ok = problems.is_empty();
    finish(
        "extremal-density",
        start,
        Some(Duration::from_secs(30)),
        ok,
        if ok {
            "k in 2..=12: window-60 density within 1/60 of 1/rho(k)".into()
        } else {
            problems.join("; ")
        },
    )
}

/// Criterion 6: freeness of the labeled constructions and the perturbed set.
pub fn check_construction_freeness() -> CheckResult {
    let start = Instant::now();
    let a2 = Alphabet::new(2).unwrap();
    let mut problems = Vec::new();
    for k in 2..=10u32 {
        let m = arith::rho(k as u64).unwrap();
        let t = wordsets::labeled_t(a2, Labeling::new(m, vec![1, 1], vec![1]).unwrap()).unwrap();
        let (ok, w) = wordsets::is_k_product_free(&t, k, 15).unwrap();
        if !ok {
            problems.push(format!("mod-rho({k}) set has witness {}", w.unwrap().render()));
        }
        let t = wordsets::labeled_t(a2, Labeling::new(k, vec![1, 1], vec![1]).unwrap()).unwrap();
        let (ok, fail) = wordsets::is_strongly_k_product_free(&t, k, 15).unwrap();
        if !ok {
            let (l, w) = fail.unwrap();
            problems.push(format!("mod-{k} set fails at l = {l}: {}", w.render()));
        }
    }
    // The perturbed set T' for x = "aa".
    let x = a2.parse("aa").unwrap();
    let tp = wordsets::t_prime(&x, 12).unwrap();
    let (ok, w) = wordsets::is_k_product_free(&WordSet::Explicit(tp.clone()), 2, 12).unwrap();
    if !ok {
        problems.push(format!("T' has witness {}", w.unwrap().render()));
    }
    let floor = q(1, 2) - q(2, 4);
    for n in (5..=11u32).step_by(2) {
        let d = tp.layer_mu(n);
        if d < floor {
            problems.push(format!("T' layer {n} density {d} below 1/2 - 2|A|^-2"));
        }
    }
    match search::certify_containment(&tp, 2) {
        Ok(report) if report.is_empty() => {}
        Ok(report) => problems.push(format!("T' contained in {} mod-2 labelings", report.len())),
        Err(e) => problems.push(format!("certify failed: {e}")),
    }
    let ok = problems.is_empty();
    finish(
        "construction-freeness",
        start,
        None,
        ok,
        if ok {
            "labeled sets free to L=15 for k <= 10; T' 2-product-free at L=12, density floor holds, no mod-2 superset".into()
        } else {
            problems.join("; ")
        },
    )
}

/// Criterion 7: the steeplechase capture on odd-length words and the
/// coverage bound with its Monte Carlo cross-check.
pub fn check_steeplechase() -> CheckResult {
    let start = Instant::now();
    let a2 = Alphabet::new(2).unwrap();
    let mut problems = Vec::new();
    let odd = wordsets::odd_occurrence(a2, &[0, 1]).unwrap();
    match steeple::capture(&odd, &q(1, 4), 12) {
        Ok(chase) => {
            if let Err(e) = chase.verify_invariants() {
                problems.push(format!("invariants: {e}"));
            }
            for (i, mu) in chase.stage_mus().iter().enumerate() {
                if !mu.is_one() {
                    problems.push(format!("mu(C_{}) = {mu} != 1", i + 1));
                }
            }
        }
        Err(e) => problems.push(format!("capture failed: {e}")),
    }
    let cb = steeple::coverage_bound(2, 1, &q(1, 100)).unwrap();
    if cb.checks != 7 || cb.n != 8 {
        problems.push(format!("coverage bound gave checks = {}, N = {}", cb.checks, cb.n));
    }
    let trials = 100_000u64;
    let rate = steeple::simulate_coverage(2, 1, cb.checks, trials, 0xACCE5);
    let eps = 0.01f64;
    if rate > eps + 3.0 * (eps / trials as f64).sqrt() {
        problems.push(format!("simulated miss rate {rate} beyond eps + 3 sigma"));
    }
    let ok = problems.is_empty();
    finish(
        "steeplechase",
        start,
        None,
        ok,
        if ok {
            format!("capture stages all have mu = 1; coverage checks = 7, N = 8; simulated miss rate {rate:.5} within 3 sigma of 1/128")
        } else {
            problems.join("; ")
        },
    )
}

/// Criterion 8: free-group measure normalization, the subtree bound, and
/// label invariance under reduction, all exact.
pub fn check_free_group() -> CheckResult {
    let start = Instant::now();
    let mut problems = Vec::new();
    for n in 1..=8u32 {
        let total: Q =
            freegroup::reduced_layer(2, n).iter().map(|w| freegroup::group_mu(w, 2)).sum();
        if total != Q::one() {
            problems.push(format!("free-group layer {n} mass {total}"));
        }
    }
    // Obs-style subtree bound on 100 random prefix-free sets in G.
    let g = Subsemigroup::new(SignedLetter::positive(0), SignedLetter::positive(1)).unwrap();
    let mut rng = StdRng::seed_from_u64(0x5EED_0008);
    for trial in 0..100 {
        let mut c: BTreeSet<ReducedWord> = BTreeSet::new();
        for _ in 0..rng.random_range(1..=5) {
            let w = random_subsemigroup_word(&mut rng, &g, 5);
            if !c.iter().any(|e| e.is_prefix_of(&w) || w.is_prefix_of(e)) {
                c.insert(w);
            }
        }
        let max_c = c.iter().map(|w| w.len()).max().unwrap();
        let mu_c: Q = c.iter().map(|w| freegroup::group_mu(w, 2)).sum();
        let n = max_c + 2;
        let mass = freegroup::subtree_mass_in_subsemigroup(&c, &g, 2, n).unwrap();
        if mass < mu_c.clone() / Q::from(BigInt::from(9)) {
            problems.push(format!("trial {trial}: subtree mass below mu(C)/9"));
        }
    }
    // Label invariance under reduction, 10^4 random words.
    let lab = GroupLabeling::new(6, vec![1, 4], vec![1]).unwrap();
    let mut rng = StdRng::seed_from_u64(0x5EED_0009);
    for _ in 0..10_000 {
        let len = rng.random_range(0..=12usize);
        let seq: Vec<SignedLetter> = (0..len)
            .map(|_| SignedLetter { rank: rng.random_range(0..2), positive: rng.random_bool(0.5) })
            .collect();
        if lab.sequence_label(&seq) != lab.residue(&freegroup::reduce(&seq)) {
            problems.push("label sum changed under reduction".into());
            break;
        }
    }
    let ok = problems.is_empty();
    finish(
        "free-group",
        start,
        None,
        ok,
        if ok {
            "layer mass 1 (n <= 8); subtree bound on 100 sets; label invariance on 10^4 words".into()
        } else {
            problems.join("; ")
        },
    )
}

fn random_subsemigroup_word(rng: &mut StdRng, g: &Subsemigroup, max_len: u32) -> ReducedWord {
    loop {
        let len = rng.random_range(1..=max_len);
        let mut letters = vec![g.alpha];
        for _ in 1..len {
            loop {
                let l = SignedLetter { rank: rng.random_range(0..2), positive: rng.random_bool(0.5) };
                if !letters.last().unwrap().is_inverse_of(l) {
                    letters.push(l);
                    break;
                }
            }
        }
        let w = ReducedWord::new(letters).unwrap();
        if w.last() == Some(g.beta) {
            return w;
        }
    }
}

/// Independent 2^N enumeration oracle for the unary alphabet, sharing
/// nothing with the solver; used only for verification.
pub fn unary_brute_force_oracle(k: u32, n: u32) -> (u32, Vec<u32>) {
    let mut best_size = 0u32;
    let mut best_mask = 0u64;
    let lex_smaller = |a: u64, b: u64| {
        let d = a ^ b;
        d != 0 && a >> d.trailing_zeros() & 1 == 0
    };
    for mask in 0u64..(1 << n) {
        let mut feasible = true;
        'outer: for total in k..=n {
            if mask >> (total - 1) & 1 == 0 {
                continue;
            }
            // Sum of k members equal to total?
            feasible_sum(&mut feasible, mask, k, total);
            if !feasible {
                break 'outer;
            }
        }
        if feasible {
            let size = mask.count_ones();
            if size > best_size || (size == best_size && lex_smaller(mask, best_mask)) {
                best_size = size;
                best_mask = mask;
            }
        }
    }
    let members = (1..=n).filter(|&i| best_mask >> (i - 1) & 1 == 1).collect();
    (best_size, members)
}

fn feasible_sum(feasible: &mut bool, mask: u64, k: u32, total: u32) {
    // Recursive check: total as an ordered sum of k members of the mask.
    fn rec(mask: u64, k: u32, total: u32) -> bool {
        if k == 1 {
            return total >= 1 && total <= 64 && mask >> (total - 1) & 1 == 1;
        }
        for first in 1..=(total - (k - 1)) {
            if mask >> (first - 1) & 1 == 1 && rec(mask, k - 1, total - first) {
                return true;
            }
        }
        false
    }
    if rec(mask, k, total) {
        *feasible = false;
    }
}

/// Criterion 9: exact optima match the 2^N oracle for k = 2, N <= 16; the
/// reported sets re-verify; 1 and 8 workers agree bit for bit.
pub fn check_search_oracle() -> CheckResult {
    let start = Instant::now();
    let mut problems = Vec::new();
    for n in 2..=16u32 {
        let inst = SearchInstance { alphabet_size: 1, k: 2, bound: n };
        let r = match search::solve_exact(&inst) {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("N = {n}: {e}"));
                continue;
            }
        };
        let (size, members) = unary_brute_force_oracle(2, n);
        if r.optimum != q(size as i64, 1) {
            problems.push(format!("N = {n}: optimum {} vs oracle {size}", r.optimum));
        }
        let got: Vec<u32> = r.words.iter().map(|w| w.len()).collect();
        if got != members {
            problems.push(format!("N = {n}: set {got:?} vs oracle {members:?}"));
        }
        match r.verify_product_free() {
            Ok((true, _)) => {}
            other => problems.push(format!("N = {n}: re-verification {other:?}")),
        }
    }
    // Determinism across worker counts.
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            search::solve_exact(&SearchInstance { alphabet_size: 2, k: 2, bound: 5 }).unwrap()
        })
    };
    let r1 = run(1);
    let r8 = run(8);
    if r1.optimum != r8.optimum || r1.words != r8.words {
        problems.push("1-worker and 8-worker runs disagree".into());
    }
    let ok = problems.is_empty();
    finish(
        "search-oracle",
        start,
        None,
        ok,
        if ok {
            "N in 2..=16 match the 2^N oracle bit for bit; sets re-verified; worker counts agree".into()
        } else {
            problems.join("; ")
        },
    )
}

/// Runs the whole battery. `quick` shrinks the two long-range scans.
pub fn run_all(quick: bool) -> Vec<CheckResult> {
    let inequality_limit = if quick { 20_000 } else { 1_000_000 };
    let asequence_limit = if quick { 500 } else { 10_000 };
    vec![
        check_rho_table(),
        check_lemma_inequality_battery(inequality_limit),
        check_asequence_battery(asequence_limit),
        check_measure_identities(),
        check_extremal_density(),
        check_construction_freeness(),
        check_steeplechase(),
        check_free_group(),
        check_search_oracle(),
    ]
}
