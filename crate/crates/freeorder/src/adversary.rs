//! Executable lower-bound adversaries: semitone sequences for a set of
//! permutations, the randomized hard value assignments built on them, and
//! value assignments that defeat wait-and-pick on every permutation of a
//! small support.
//!
//! A sequence `(x_1, …, x_s)` is semitone for `π` when every `x_t` arrives
//! before all of `x_1..x_{t−1}` or after all of them.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::algorithms::{wait_and_pick, RunResult, ValueAssignment};
use crate::error::{Error, Result};
use crate::perm_core::{derive_seed, seeded_rng, Permutation, PermutationMultiset};

/// A sequence of distinct elements that is semitone for a set of orders.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SemitoneSequence {
    elements: Vec<usize>,
}

impl SemitoneSequence {
    /// Wraps `elements` after checking the definition against `against`.
    pub fn new(elements: Vec<usize>, against: &[Permutation]) -> Result<Self> {
        if !is_semitone(&elements, against) {
            return Err(Error::invalid(format!("{elements:?} is not semitone for the given orders")));
        }
        Ok(Self { elements })
    }

    /// `x_1, …, x_s`.
    pub fn elements(&self) -> &[usize] {
        &self.elements
    }

    /// `s`.
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    /// Whether the sequence is empty.
    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// The prefix `x_1..x_len`, itself semitone.
    pub fn truncated(&self, len: usize) -> Self {
        Self { elements: self.elements[..len.min(self.len())].to_vec() }
    }
}

/// The definitional check: for each order, every element's position is a new
/// minimum or a new maximum among the positions seen so far.
pub fn is_semitone(seq: &[usize], against: &[Permutation]) -> bool {
    let mut seen = std::collections::HashSet::new();
    if seq.iter().any(|&x| x == 0 || !seen.insert(x)) {
        return false;
    }
    against.iter().all(|pi| {
        if seq.iter().any(|&x| x > pi.n()) {
            return false;
        }
        let mut lo = usize::MAX;
        let mut hi = 0;
        seq.iter().all(|&x| {
            let p = pi.position_of(x);
            let extreme = p < lo || p > hi;
            lo = lo.min(p);
            hi = hi.max(p);
            extreme
        })
    })
}

/// `⌊log₂ n / (ℓ+1)⌋`, the guaranteed semitone length.
pub fn semitone_target(n: usize, ell: usize) -> usize {
    ((n as f64).log2() / (ell as f64 + 1.0)).floor() as usize
}

/// Splits `pool \ {e}` by the side of `e` each element lies on in every
/// order and returns the largest class (ties go to the smaller side mask).
fn largest_side_class(pool: &[usize], e: usize, positions: &[Vec<usize>]) -> Vec<usize> {
    let mut classes: std::collections::BTreeMap<u64, Vec<usize>> = std::collections::BTreeMap::new();
    for &y in pool.iter().filter(|&&y| y != e) {
        let mask = positions.iter().enumerate().fold(0u64, |m, (i, pos)| m | (u64::from(pos[y] > pos[e]) << i));
        classes.entry(mask).or_default().push(y);
    }
    classes.into_values().rev().max_by_key(Vec::len).unwrap_or_default()
}

/// Finds a sequence semitone for every order in `against`.
///
/// The sequence is built from its end: each chosen element keeps only the
/// candidates lying on one common side of it in every order, so it is an
/// extreme of everything chosen after it. Each step keeps the element with
/// the largest surviving class. If that greedy pass falls short of
/// [`semitone_target`], a bounded backtracking search over the alternatives
/// follows. The result is always checked with [`is_semitone`].
pub fn find_semitone(against: &[Permutation]) -> Result<SemitoneSequence> {
    let ell = against.len();
    if ell == 0 || ell > 63 {
        return Err(Error::invalid("need between 1 and 63 orders"));
    }
    let n = against[0].n();
    if n < 2 || against.iter().any(|p| p.n() != n) {
        return Err(Error::invalid("orders must share a ground set of size >= 2"));
    }
    let positions: Vec<Vec<usize>> = against
        .iter()
        .map(|pi| {
            let mut pos = vec![0; n + 1];
            for (p, &x) in pi.as_slice().iter().enumerate() {
                pos[x as usize] = p + 1;
            }
            pos
        })
        .collect();
    let greedy = |mut pool: Vec<usize>| {
        let mut chosen = Vec::new();
        while !pool.is_empty() {
            let (e, next) = pool
                .iter()
                .map(|&e| (e, largest_side_class(&pool, e, &positions)))
                .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))
                .expect("pool is nonempty");
            chosen.push(e);
            pool = next;
        }
        chosen
    };
    let all: Vec<usize> = (1..=n).collect();
    let mut chosen = greedy(all.clone());
    let target = semitone_target(n, ell);
    if chosen.len() < target {
        let mut budget = 100_000usize;
        if let Some(found) = backtrack(&all, target, &positions, &mut budget) {
            chosen = found;
        }
    }
    chosen.reverse();
    if !is_semitone(&chosen, against) {
        return Err(Error::invariant("semitone search produced an invalid sequence"));
    }
    if chosen.len() < target {
        return Err(Error::invariant(format!("semitone search found length {} below {target}", chosen.len())));
    }
    Ok(SemitoneSequence { elements: chosen })
}

fn backtrack(pool: &[usize], need: usize, positions: &[Vec<usize>], budget: &mut usize) -> Option<Vec<usize>> {
    if need == 0 {
        return Some(Vec::new());
    }
    let mut options: Vec<(usize, Vec<usize>)> =
        pool.iter().map(|&e| (e, largest_side_class(pool, e, positions))).collect();
    options.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
    for (e, next) in options {
        if *budget == 0 {
            return None;
        }
        *budget -= 1;
        if let Some(mut rest) = backtrack(&next, need - 1, positions, budget) {
            rest.insert(0, e);
            return Some(rest);
        }
    }
    None
}

/// A draw from the hard distribution with its provenance.
#[derive(Clone, Debug, Serialize)]
pub struct HardAssignment {
    /// The values over `[n]`.
    pub values: ValueAssignment,
    /// The semitone sequence carrying the large values.
    pub sequence: Vec<usize>,
    /// `ε`.
    pub eps: f64,
    /// Budget `k`.
    pub k: usize,
    /// Grid exponent `e` of each sequence element (`v = (k/(1−ε))^e`).
    pub exponents: Vec<u32>,
    /// Halving choices for `t = s, s−1, …, 2`: `true` when the lower half
    /// was kept (so `x_t` exceeds the rest).
    pub path: Vec<bool>,
}

impl HardAssignment {
    /// JSON sidecar with everything except the values.
    pub fn sidecar_json(&self) -> String {
        serde_json::json!({
            "sequence": self.sequence,
            "eps": self.eps,
            "k": self.k,
            "exponents": self.exponents,
            "path": self.path,
        })
        .to_string()
    }
}

/// Draws a hard assignment on `seq`.
///
/// The value grid is `V* = {c^0, …, c^{2^s−2}}` with `c = k/(1−ε)`. Starting
/// from all of `V*`, `x_t` (for `t = s` down to 1) takes the middle of the
/// current interval; the search then keeps the lower half with probability
/// `1/t` and the upper half otherwise. Every other element gets `(1−ε)/k`.
pub fn hard_assignment_sample(seq: &SemitoneSequence, n: usize, k: usize, eps: f64, seed: u64) -> Result<HardAssignment> {
    let s = seq.len();
    if s == 0 {
        return Err(Error::invalid("hard assignments need a nonempty semitone sequence"));
    }
    if s > 30 {
        return Err(Error::invalid("semitone sequence too long for the value grid; truncate it"));
    }
    if k == 0 || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid("need k >= 1 and eps in (0,1)"));
    }
    if seq.elements.iter().any(|&x| x > n) {
        return Err(Error::invalid("sequence element outside [n]"));
    }
    let base = k as f64 / (1.0 - eps);
    let mut rng = seeded_rng(seed);
    let (mut lo, mut hi) = (0u32, (1u32 << s) - 1);
    let mut exponents = vec![0u32; s];
    let mut path = Vec::with_capacity(s - 1);
    for t in (1..=s).rev() {
        let mid = lo + (hi - lo) / 2;
        exponents[t - 1] = mid;
        if t > 1 {
            let lower = rng.random_range(0..t) == 0;
            path.push(lower);
            if lower {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
    }
    let mut values = vec![(1.0 - eps) / k as f64; n];
    for (&x, &e) in seq.elements.iter().zip(&exponents) {
        let v = base.powi(e as i32);
        if !v.is_finite() {
            return Err(Error::invalid("grid value overflows; use a shorter sequence or smaller k/(1-eps)"));
        }
        values[x - 1] = v;
    }
    Ok(HardAssignment {
        values: ValueAssignment::new(values)?,
        sequence: seq.elements.clone(),
        eps,
        k,
        exponents,
        path,
    })
}

/// A Monte-Carlo frequency with its `3σ` half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    /// Observed frequency.
    pub p: f64,
    /// `3·√(p(1−p)/trials)`.
    pub half_width: f64,
    /// Number of trials.
    pub trials: usize,
}

impl Estimate {
    fn from_count(hits: usize, trials: usize) -> Self {
        let p = hits as f64 / trials as f64;
        Self { p, half_width: 3.0 * (p * (1.0 - p) / trials as f64).sqrt(), trials }
    }
}

/// Per-trial randomness: trial `t` uses `derive_seed(seed, t)` to pick the
/// order and `derive_seed(that, 1)` to draw the values.
fn trial_inputs<'a>(
    support: &'a PermutationMultiset,
    assignments: &(impl Fn(u64) -> Result<ValueAssignment> + Sync),
    seed: u64,
    t: usize,
) -> Result<(&'a Permutation, ValueAssignment)> {
    let trial_seed = derive_seed(seed, t as u64);
    let pi = support.sample(trial_seed)?;
    Ok((pi, assignments(derive_seed(trial_seed, 1))?))
}

/// Frequency with which `algorithm` selects a maximum-value element when the
/// order is drawn from `support` and the values from `assignments`.
pub fn estimate_max_pick_prob(
    support: &PermutationMultiset,
    algorithm: impl Fn(&ValueAssignment, &Permutation) -> Result<RunResult> + Sync,
    assignments: impl Fn(u64) -> Result<ValueAssignment> + Sync,
    trials: usize,
    seed: u64,
) -> Result<Estimate> {
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    let hits = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (pi, va) = trial_inputs(support, &assignments, seed, t)?;
            Ok(usize::from(algorithm(&va, pi)?.success))
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum();
    Ok(Estimate::from_count(hits, trials))
}

/// Checkpoints `m` for which wait-and-pick with `τ = 1`, `k = 1` selects
/// the (unique) maximum: the interval `q..=p*−1`, where `p*` is the
/// maximum's arrival and `q` the last arrival before it that holds the
/// largest value seen before `p*`. Returns `None` when no checkpoint works.
pub fn winning_checkpoints(va: &ValueAssignment, pi: &Permutation) -> Result<Option<(usize, usize)>> {
    if va.n() != pi.n() {
        return Err(Error::invalid("order and values disagree on n"));
    }
    let arrivals = pi.as_slice();
    let max = va.max_value();
    let mut at_max = arrivals.iter().enumerate().filter(|(_, &e)| va.value(e as usize) == max);
    let (star, _) = at_max.next().expect("n >= 1");
    if at_max.next().is_some() {
        return Err(Error::invalid("winning checkpoints need a unique maximum"));
    }
    let p_star = star + 1;
    if p_star == 1 {
        return Ok(None);
    }
    let mut best = f64::NEG_INFINITY;
    let mut q = 0;
    for (p, &e) in arrivals[..p_star - 1].iter().enumerate() {
        if va.value(e as usize) >= best {
            best = va.value(e as usize);
            q = p + 1;
        }
    }
    Ok((q < p_star).then_some((q, p_star - 1)))
}

/// The best single checkpoint for wait-and-pick (`τ = 1`, `k = 1`) against
/// orders from `support` and values from `assignments`: all checkpoints are
/// scored on the same trials and the most successful (smallest on ties) is
/// returned with its frequency.
pub fn best_wait_and_pick(
    support: &PermutationMultiset,
    assignments: impl Fn(u64) -> Result<ValueAssignment> + Sync,
    trials: usize,
    seed: u64,
) -> Result<(usize, Estimate)> {
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    let n = support.n();
    let intervals = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (pi, va) = trial_inputs(support, &assignments, seed, t)?;
            winning_checkpoints(&va, pi)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut diff = vec![0i64; n + 2];
    for (lo, hi) in intervals.into_iter().flatten() {
        diff[lo] += 1;
        diff[hi + 1] -= 1;
    }
    let mut running = 0;
    let mut best = (1, 0i64);
    for (m, d) in diff.iter().enumerate().take(n).skip(1) {
        running += d;
        if running > best.1 {
            best = (m, running);
        }
    }
    Ok((best.0, Estimate::from_count(best.1 as usize, trials)))
}

/// Values defeating wait-and-pick with checkpoint `m` and budget `k` on
/// every order of `support`, for every statistic `τ ∈ 1..=m`: each run
/// reaches ratio below `1−ε`.
///
/// For `m ≥ k`, a set `K` of `k` unit values is assembled so that every
/// order sees at least `⌊εk⌋+1` of them among its first `m` arrivals, which
/// are never selected; all other values are 0. This needs `|support| < 1/ε`
/// and enough room in `K`. For `m < k`, one element arriving after position
/// `m+k` in every order gets value 1 and all others `(1−ε)/k`; the first `k`
/// arrivals after the checkpoint exhaust the budget. Such an element exists
/// whenever `|support|·(m+k) < n`.
pub fn wp_adversary(support: &[Permutation], m: usize, k: usize, eps: f64) -> Result<ValueAssignment> {
    let ell = support.len();
    if ell == 0 {
        return Err(Error::invalid("empty permutation set"));
    }
    let n = support[0].n();
    if support.iter().any(|p| p.n() != n) {
        return Err(Error::invalid("orders must share a ground set"));
    }
    if !(eps > 0.0 && eps < 1.0) || k == 0 || m == 0 || m >= n || k > n {
        return Err(Error::invalid("need eps in (0,1), k >= 1 and 1 <= m < n"));
    }
    let values = if m >= k {
        if ell as f64 * eps >= 1.0 {
            return Err(Error::invalid(format!("{ell} orders is not below 1/eps = {:.3}", 1.0 / eps)));
        }
        let misses = (eps * k as f64).floor() as usize + 1;
        if misses > m {
            return Err(Error::invalid("checkpoint too small to hide enough of K"));
        }
        let mut in_k = vec![false; n + 1];
        let mut size = 0;
        for pi in support {
            let head = &pi.as_slice()[..m];
            let mut hidden = head.iter().filter(|&&e| in_k[e as usize]).count();
            for &e in head {
                if hidden >= misses {
                    break;
                }
                if !in_k[e as usize] {
                    in_k[e as usize] = true;
                    size += 1;
                    hidden += 1;
                }
            }
        }
        if size > k {
            return Err(Error::invalid(format!("hiding {misses} per order needs |K| = {size} > k = {k}")));
        }
        for slot in in_k.iter_mut().skip(1) {
            if size == k {
                break;
            }
            if !*slot {
                *slot = true;
                size += 1;
            }
        }
        (1..=n).map(|e| if in_k[e] { 1.0 } else { 0.0 }).collect()
    } else {
        let late = (1..=n).find(|&e| support.iter().all(|pi| pi.position_of(e) > m + k));
        let Some(late) = late else {
            return Err(Error::invalid("every element arrives within the first m+k positions of some order"));
        };
        let mut values = vec![(1.0 - eps) / k as f64; n];
        values[late - 1] = 1.0;
        values
    };
    let va = ValueAssignment::new(values)?;
    let worst = verify_wp(support, &va, m, k)?;
    if worst >= 1.0 - eps {
        return Err(Error::invariant(format!("adversary reaches ratio {worst:.4}, not below {:.4}", 1.0 - eps)));
    }
    Ok(va)
}

/// Largest wait-and-pick ratio over all orders in `support` and all
/// statistics `τ ∈ 1..=m`.
pub fn verify_wp(support: &[Permutation], va: &ValueAssignment, m: usize, k: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for pi in support {
        for tau in 1..=m {
            worst = worst.max(wait_and_pick(va, pi, m, tau, k)?.ratio);
        }
    }
    Ok(worst)
}
