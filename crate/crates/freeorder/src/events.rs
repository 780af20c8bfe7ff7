//! The event algebra over arrival orders: bucketings, atomic events
//! `A_{σ,f}`, positive events (disjoint unions of atoms), their exact
//! probabilities under a uniformly random order, conditional probabilities
//! given a fixed prefix, and the decompositions used by the single-choice and
//! multiple-choice constructions.
//!
//! An atomic event `A_{σ,f}` holds for `π` when every tracked element `σ_i`
//! arrives inside bucket `B_{f(i)}` and the tracked elements arrive in the
//! order `σ_1, σ_2, …, σ_k`. All probabilities here are exact rationals.

use std::collections::HashSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::algorithms::{classic_checkpoint, multi_threshold_with_schedule, KsecSchedule, ValueAssignment};
use crate::error::{Error, Result};
use crate::perm_core::{all_permutations, Permutation, SemiRandomPermutation};

/// A partition of positions `1..=n` into `t ≥ 2` consecutive buckets
/// `B_1 = {1..τ_1}`, `B_j = {τ_{j−1}+1..τ_j}` with `τ_t = n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Bucketing {
    n: usize,
    bounds: Vec<usize>,
    #[serde(skip)]
    lookup: Vec<u16>,
}

impl Bucketing {
    /// Validates strictly increasing bounds ending at `n`.
    pub fn new(n: usize, bounds: Vec<usize>) -> Result<Self> {
        if bounds.len() < 2 {
            return Err(Error::invalid("a bucketing needs at least two buckets"));
        }
        if bounds.len() > u16::MAX as usize {
            return Err(Error::invalid("too many buckets"));
        }
        if bounds[0] == 0 || bounds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!("bucket bounds {bounds:?} are not strictly increasing from 1")));
        }
        if *bounds.last().expect("nonempty") != n {
            return Err(Error::invalid(format!("last bucket bound must equal n={n}")));
        }
        let mut lookup = vec![0u16; n + 1];
        let mut j = 0;
        for (p, slot) in lookup.iter_mut().enumerate().skip(1) {
            if p > bounds[j] {
                j += 1;
            }
            *slot = j as u16 + 1;
        }
        Ok(Self { n, bounds, lookup })
    }

    /// Ground-set size.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of buckets `t`.
    pub fn t(&self) -> usize {
        self.bounds.len()
    }

    /// The bounds `τ_1 < … < τ_t = n`.
    pub fn bounds(&self) -> &[usize] {
        &self.bounds
    }

    /// Bucket (1-based) containing position `p ∈ 1..=n`.
    pub fn bucket_of(&self, p: usize) -> usize {
        self.lookup[p] as usize
    }

    /// First position of bucket `j`.
    pub fn start(&self, j: usize) -> usize {
        if j == 1 {
            1
        } else {
            self.bounds[j - 2] + 1
        }
    }

    /// Last position of bucket `j`.
    pub fn end(&self, j: usize) -> usize {
        self.bounds[j - 1]
    }

    /// `|B_j|`.
    pub fn size(&self, j: usize) -> usize {
        self.end(j) + 1 - self.start(j)
    }

    /// `|B_j ∩ (r, n]|`, the still-open positions of bucket `j` once the
    /// first `r` positions are fixed.
    pub fn free_after(&self, j: usize, r: usize) -> usize {
        let end = self.end(j);
        if end <= r {
            0
        } else {
            end - r.max(self.start(j) - 1)
        }
    }
}

/// `A_{σ,f}`: distinct tracked elements `σ` with a non-decreasing bucket map
/// `f` (both 1-based).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct AtomicEvent {
    sigma: Vec<usize>,
    f: Vec<usize>,
}

impl AtomicEvent {
    /// Validates distinctness of `σ` and monotonicity of `f`.
    pub fn new(sigma: Vec<usize>, f: Vec<usize>) -> Result<Self> {
        if sigma.len() != f.len() {
            return Err(Error::invalid("sigma and f must have equal length"));
        }
        let mut seen = HashSet::new();
        if sigma.iter().any(|&e| e == 0 || !seen.insert(e)) {
            return Err(Error::invalid(format!("sigma {sigma:?} must hold distinct elements >= 1")));
        }
        if f.contains(&0) || f.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid(format!("bucket map {f:?} must be non-decreasing with values >= 1")));
        }
        Ok(Self { sigma, f })
    }

    /// Number of tracked elements `k`.
    pub fn k(&self) -> usize {
        self.sigma.len()
    }

    /// The tracked elements in their required order.
    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }

    /// The bucket of each tracked element.
    pub fn f(&self) -> &[usize] {
        &self.f
    }

    fn check(&self, b: &Bucketing) -> Result<()> {
        if self.sigma.iter().any(|&e| e > b.n()) || self.f.iter().any(|&j| j > b.t()) {
            return Err(Error::invalid(format!(
                "atom (sigma={:?}, f={:?}) does not fit n={} with t={} buckets",
                self.sigma,
                self.f,
                b.n(),
                b.t()
            )));
        }
        Ok(())
    }

    /// Number of tracked elements mapped to bucket `j`.
    fn load(&self, j: usize) -> usize {
        self.f.iter().filter(|&&x| x == j).count()
    }
}

/// Direct membership test `π ∈ A_{σ,f}`.
pub fn atomic_holds(a: &AtomicEvent, b: &Bucketing, pi: &Permutation) -> Result<bool> {
    a.check(b)?;
    if pi.n() != b.n() {
        return Err(Error::invalid("order and bucketing disagree on n"));
    }
    let mut last = 0;
    for (&e, &j) in a.sigma.iter().zip(&a.f) {
        let p = pi.position_of(e);
        if p <= last || b.bucket_of(p) != j {
            return Ok(false);
        }
        last = p;
    }
    Ok(true)
}

fn ratio(num: usize, den: usize) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn factorial(m: usize) -> BigInt {
    (1..=m).fold(BigInt::one(), |acc, i| acc * i)
}

/// Probability that the listed bucket loads land in buckets `from..=t`
/// given `avail` open positions that are exactly those buckets' positions.
/// Within each bucket exactly one ordering of its tracked indices agrees with
/// `σ`, which contributes the factor `1/b'!`.
fn tail_prob(a: &AtomicEvent, b: &Bucketing, from: usize, avail: usize) -> BigRational {
    let mut p = BigRational::one();
    let mut chi = 0;
    for j in from..=b.t() {
        let load = a.load(j);
        let size = b.size(j);
        if load > size {
            return BigRational::zero();
        }
        for i in 0..load {
            p *= ratio(size - i, avail - chi - i);
        }
        p /= BigRational::from_integer(factorial(load));
        chi += load;
    }
    p
}

/// `Pr[A_{σ,f}]` under a uniformly random order: the product over buckets of
/// the chance that the bucket's tracked elements land in it (denominators
/// shrink by the elements already placed) times `1/b'_j!` for their order.
pub fn atomic_prob(a: &AtomicEvent, b: &Bucketing) -> Result<BigRational> {
    a.check(b)?;
    Ok(tail_prob(a, b, 1, b.n()))
}

/// `Pr[A_{σ,f} | π(1..r) = prefix]` with the remaining positions a uniform
/// arrangement of the unused elements.
///
/// The structure follows the bucket-by-bucket procedure: locate the bucket
/// holding position `r`, reject contradictions in completely fixed buckets,
/// then multiply the chance for the open part of the current bucket by the
/// fully random tail. Two contradictions that the bucket-local checks do not
/// see are rejected explicitly: a fixed tracked element outside its own
/// bucket, and a fixed tracked element that `σ` orders after a still-unplaced
/// one in the current bucket.
pub fn conditional_atomic_prob(a: &AtomicEvent, sp: &SemiRandomPermutation, b: &Bucketing) -> Result<BigRational> {
    a.check(b)?;
    if sp.n() != b.n() {
        return Err(Error::invalid("prefix and bucketing disagree on n"));
    }
    let n = b.n();
    let r = sp.r();
    if r == 0 {
        return atomic_prob(a, b);
    }
    let pos: Vec<Option<usize>> = a.sigma.iter().map(|&e| sp.position_of(e)).collect();
    let zero = Ok(BigRational::zero());

    if pos.iter().zip(&a.f).any(|(p, &j)| p.is_some_and(|p| b.bucket_of(p) != j)) {
        return zero;
    }

    let j = b.bucket_of(r);
    let at_boundary = r == b.end(j);
    let full = if at_boundary { j } else { j - 1 };
    let in_full: Vec<usize> = (0..a.k()).filter(|&i| a.f[i] <= full).collect();
    if in_full.iter().any(|&i| pos[i].is_none()) {
        return zero;
    }
    if out_of_order(&in_full, &pos) {
        return zero;
    }
    if at_boundary {
        return Ok(tail_prob(a, b, j + 1, n - r));
    }

    let members: Vec<usize> = (0..a.k()).filter(|&i| a.f[i] == j).collect();
    let fixed: Vec<usize> = members.iter().copied().filter(|&i| pos[i].is_some()).collect();
    let open = b.end(j) - r;
    if fixed.len() + open < members.len() {
        return zero;
    }
    if out_of_order(&fixed, &pos) {
        return zero;
    }
    let first_open = members.iter().position(|&i| pos[i].is_none()).unwrap_or(members.len());
    if members[first_open..].iter().any(|&i| pos[i].is_some()) {
        return zero;
    }
    let rest = members.len() - fixed.len();
    let mut p0 = BigRational::one();
    for i in 0..rest {
        p0 *= ratio(open - i, n - r - i);
    }
    p0 /= BigRational::from_integer(factorial(rest));
    Ok(p0 * tail_prob(a, b, j + 1, n - r - rest))
}

/// Whether two tracked indices (ascending in `σ`) arrive in the wrong order.
fn out_of_order(indices: &[usize], pos: &[Option<usize>]) -> bool {
    indices.windows(2).any(|w| pos[w[0]] > pos[w[1]])
}

/// Integer form of the conditional probability for the hot loop of the
/// derandomizer: returns `(N, u)` with `Pr = N / (n−r)(n−r−1)⋯(n−r−u+1)`,
/// where `u` counts unplaced tracked elements and `N` is the number of ways
/// to seat them in their buckets' open positions (their order is forced).
///
/// `pos(e)` is the arrival position of element `e` when `e` is among the
/// first `r` arrivals and 0 otherwise.
pub(crate) fn completion_count(
    sigma: &[u32],
    f: &[u16],
    b: &Bucketing,
    r: usize,
    pos: impl Fn(u32) -> u32,
) -> (u128, usize) {
    let mut count: u128 = 1;
    let mut unplaced = 0;
    let mut last = 0u32;
    let mut seen_open = false;
    let mut run_bucket = 0u16;
    let mut run = 0usize;
    for (&e, &j) in sigma.iter().zip(f) {
        let p = pos(e);
        if p != 0 {
            if seen_open || p <= last || b.bucket_of(p as usize) != j as usize {
                return (0, 0);
            }
            last = p;
        } else {
            seen_open = true;
            if j != run_bucket {
                if run > 0 {
                    count *= binomial(b.free_after(run_bucket as usize, r), run);
                }
                run_bucket = j;
                run = 0;
            }
            run += 1;
            unplaced += 1;
        }
    }
    if run > 0 {
        count *= binomial(b.free_after(run_bucket as usize, r), run);
    }
    (count, unplaced)
}

/// `C(m, k)` for the small `k` of tracked-element counts.
pub(crate) fn binomial(m: usize, k: usize) -> u128 {
    if k > m {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (m - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// `m (m−1) ⋯ (m−k+1)`.
pub(crate) fn falling(m: usize, k: usize) -> u128 {
    (0..k).map(|i| m.saturating_sub(i) as u128).product()
}

/// [`conditional_atomic_prob`] computed through the integer kernel.
pub fn conditional_atomic_prob_fast(a: &AtomicEvent, sp: &SemiRandomPermutation, b: &Bucketing) -> Result<BigRational> {
    a.check(b)?;
    let mut pos = vec![0u32; b.n() + 1];
    for (i, &e) in sp.prefix().iter().enumerate() {
        pos[e] = i as u32 + 1;
    }
    let sigma: Vec<u32> = a.sigma.iter().map(|&e| e as u32).collect();
    let f: Vec<u16> = a.f.iter().map(|&j| j as u16).collect();
    let (count, u) = completion_count(&sigma, &f, b, sp.r(), |e| pos[e as usize]);
    Ok(BigRational::new(BigInt::from(count), BigInt::from(falling(b.n() - sp.r(), u))))
}

/// Whether some order satisfies both atoms: shared elements need the same
/// bucket, each bucket must seat the union of its tracked elements, and the
/// two required orders must not conflict inside any bucket.
pub fn atoms_intersect(x: &AtomicEvent, y: &AtomicEvent, b: &Bucketing) -> bool {
    let bucket_in = |a: &AtomicEvent, e: usize| a.sigma.iter().position(|&s| s == e).map(|i| a.f[i]);
    for (i, &e) in x.sigma.iter().enumerate() {
        if let Some(j) = bucket_in(y, e) {
            if j != x.f[i] {
                return false;
            }
        }
    }
    for j in 1..=b.t() {
        let mut union: Vec<usize> = x.sigma.iter().zip(&x.f).filter(|(_, &f)| f == j).map(|(&e, _)| e).collect();
        let ys: Vec<usize> = y.sigma.iter().zip(&y.f).filter(|(_, &f)| f == j).map(|(&e, _)| e).collect();
        for &e in &ys {
            if !union.contains(&e) {
                union.push(e);
            }
        }
        if union.len() > b.size(j) {
            return false;
        }
        if !chains_compatible(&union, x, y, j) {
            return false;
        }
    }
    true
}

/// Acyclicity of the union of the two chains restricted to bucket `j`.
fn chains_compatible(nodes: &[usize], x: &AtomicEvent, y: &AtomicEvent, j: usize) -> bool {
    let idx = |e: usize| nodes.iter().position(|&v| v == e).expect("node present");
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    let mut indeg = vec![0usize; nodes.len()];
    for a in [x, y] {
        let chain: Vec<usize> = a.sigma.iter().zip(&a.f).filter(|(_, &f)| f == j).map(|(&e, _)| e).collect();
        for w in chain.windows(2) {
            succ[idx(w[0])].push(idx(w[1]));
            indeg[idx(w[1])] += 1;
        }
    }
    let mut ready: Vec<usize> = (0..nodes.len()).filter(|&v| indeg[v] == 0).collect();
    let mut visited = 0;
    while let Some(v) = ready.pop() {
        visited += 1;
        for &w in &succ[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                ready.push(w);
            }
        }
    }
    visited == nodes.len()
}

/// A disjoint union of atomic events with a claimed lower bound `p_γ` on its
/// probability. A lower bound of zero means "not yet assigned".
#[derive(Clone, Debug, PartialEq)]
pub struct PositiveEvent {
    id: usize,
    atoms: Vec<AtomicEvent>,
    lower_bound: BigRational,
}

impl PositiveEvent {
    /// Wraps atoms; `lower_bound` must lie in `[0, 1]`.
    pub fn new(id: usize, atoms: Vec<AtomicEvent>, lower_bound: BigRational) -> Result<Self> {
        if lower_bound < BigRational::zero() || lower_bound > BigRational::one() {
            return Err(Error::invalid(format!("lower bound {lower_bound} outside [0,1]")));
        }
        Ok(Self { id, atoms, lower_bound })
    }

    /// Identifier `γ`.
    pub fn id(&self) -> usize {
        self.id
    }

    /// The atoms `Atomic(P)`.
    pub fn atoms(&self) -> &[AtomicEvent] {
        &self.atoms
    }

    /// The claimed lower bound `p_γ`.
    pub fn lower_bound(&self) -> &BigRational {
        &self.lower_bound
    }

    /// The same event with another identifier.
    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }

    /// The same event with another lower bound.
    pub fn with_lower_bound(self, lower_bound: BigRational) -> Result<Self> {
        Self::new(self.id, self.atoms, lower_bound)
    }

    /// Sorted distinct elements tracked by any atom.
    pub fn elements(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.atoms.iter().flat_map(|a| a.sigma.iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Whether `π` lies in the event.
    pub fn holds(&self, b: &Bucketing, pi: &Permutation) -> Result<bool> {
        for a in &self.atoms {
            if atomic_holds(a, b, pi)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Atoms in canonical (sorted) order, used to detect duplicate events.
    fn canonical_atoms(&self) -> Vec<AtomicEvent> {
        let mut atoms = self.atoms.clone();
        atoms.sort();
        atoms
    }
}

/// `Pr[P] = Σ Pr[A]` over the atoms, after checking pairwise disjointness.
pub fn positive_prob(p: &PositiveEvent, b: &Bucketing) -> Result<BigRational> {
    for (i, x) in p.atoms.iter().enumerate() {
        x.check(b)?;
        if let Some(y) = p.atoms[i + 1..].iter().find(|y| atoms_intersect(x, y, b)) {
            return Err(Error::invalid(format!(
                "event {} has intersecting atoms {:?}/{:?} and {:?}/{:?}",
                p.id, x.sigma, x.f, y.sigma, y.f
            )));
        }
    }
    p.atoms.iter().try_fold(BigRational::zero(), |acc, a| Ok(acc + atomic_prob(a, b)?))
}

/// All ordered `k`-tuples of distinct elements of `[n]`, lexicographically.
pub fn ordered_tuples(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn extend(n: usize, k: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for e in 1..=n {
            if !used[e] {
                used[e] = true;
                cur.push(e);
                extend(n, k, cur, used, out);
                cur.pop();
                used[e] = false;
            }
        }
    }
    let mut out = Vec::new();
    if k <= n {
        extend(n, k, &mut Vec::with_capacity(k), &mut vec![false; n + 1], &mut out);
    }
    out
}

fn check_tuple(tuple: &[usize], n: usize) -> Result<()> {
    let mut seen = HashSet::new();
    if tuple.iter().any(|&e| e == 0 || e > n || !seen.insert(e)) {
        return Err(Error::invalid(format!("tuple {tuple:?} must hold distinct elements of 1..={n}")));
    }
    Ok(())
}

/// Two buckets split at the classic checkpoint `m = ⌊ℓ/e⌋`:
/// `B_1 = {1..m}` (observed only) and `B_2 = {m+1..ℓ}`.
pub fn onesec_bucketing(ell: usize) -> Result<Bucketing> {
    if ell < 3 {
        return Err(Error::invalid("the single-choice bucketing needs ell >= 3"));
    }
    Bucketing::new(ell, vec![classic_checkpoint(ell), ell])
}

/// Decomposes `P_σ` for the classic rule with the `k` tracked values
/// `σ(1) > σ(2) > … > σ(k)` (given as elements).
///
/// `P_σ` is the disjoint union over `i = 2..=k` of the events "`σ(i)` is the
/// best tracked element in `B_1`, `σ(1..i−1)` all arrive in `B_2`, and
/// `σ(1)` arrives before `σ(2..i−1)`". Elements `σ(i+1..k)` are unconstrained,
/// so every arrangement of the whole tuple with every split point between the
/// buckets is tested; each accepted pair becomes one atom. The returned
/// lower bound is the event's exact probability.
pub fn decompose_1sec_positive(sigma: &[usize], b: &Bucketing) -> Result<PositiveEvent> {
    let k = sigma.len();
    if k < 2 {
        return Err(Error::invalid("the single-choice positive event needs k >= 2"));
    }
    if b.t() != 2 {
        return Err(Error::invalid("the single-choice positive event needs exactly two buckets"));
    }
    check_tuple(sigma, b.n())?;
    let mut atoms = Vec::new();
    for rho in all_permutations(k) {
        // rho lists tracked indices (1 = best) in arrival order.
        let rho = rho.to_vec();
        for split in 1..=k {
            let Some(i) = rho[..split].iter().copied().min() else { continue };
            if i < 2 {
                continue;
            }
            let first_best = rho.iter().position(|&x| x == 1).expect("index 1 present");
            let leads = rho.iter().enumerate().all(|(p, &x)| !(2..i).contains(&x) || p > first_best);
            if !leads {
                continue;
            }
            let elements = rho.iter().map(|&x| sigma[x - 1]).collect();
            let f = (0..k).map(|p| if p < split { 1 } else { 2 }).collect();
            atoms.push(AtomicEvent::new(elements, f)?);
        }
    }
    let event = PositiveEvent::new(0, atoms, BigRational::zero())?;
    let measure = positive_prob(&event, b)?;
    event.with_lower_bound(measure)
}

/// The single-choice family `{P_σ}` over all ordered `k`-tuples of `[ℓ]`,
/// each with its exact probability as lower bound, duplicates removed.
pub fn onesec_family(ell: usize, k: usize) -> Result<(Bucketing, Vec<PositiveEvent>)> {
    let b = onesec_bucketing(ell)?;
    if k < 2 || k > ell {
        return Err(Error::invalid(format!("tracked count k={k} outside 2..={ell}")));
    }
    let events = ordered_tuples(ell, k)
        .iter()
        .map(|sigma| decompose_1sec_positive(sigma, &b))
        .collect::<Result<Vec<_>>>()?;
    Ok((b, dedupe(events)))
}

/// Drops empty events and events whose atom sets repeat an earlier one, then
/// numbers the survivors `0, 1, …`.
pub fn dedupe(events: Vec<PositiveEvent>) -> Vec<PositiveEvent> {
    let mut seen = HashSet::new();
    events
        .into_iter()
        .filter(|e| !e.atoms.is_empty() && seen.insert(e.canonical_atoms()))
        .enumerate()
        .map(|(id, e)| e.with_id(id))
        .collect()
}

/// The multiple-choice bucketing: `B_1 = {1..ℓ_0}` and one bucket per
/// window `(ℓ_j, ℓ_{j+1}]`.
pub fn ksec_bucketing(s: &KsecSchedule) -> Result<Bucketing> {
    Bucketing::new(s.ell, s.boundaries.clone())
}

fn check_schedule(s: &KsecSchedule, b: &Bucketing) -> Result<()> {
    if b.n() != s.ell || b.bounds() != s.boundaries.as_slice() {
        return Err(Error::invalid("bucketing does not match the schedule's checkpoints"));
    }
    Ok(())
}

/// Number of ranks in `ranks` whose bucket lies within the first `j+1`
/// buckets, i.e. that arrive by position `ℓ_j`.
fn arrived_by(g: &[usize], ranks: std::ops::RangeInclusive<usize>, j: usize) -> usize {
    ranks.filter(|&x| g[x - 1] <= j + 1).count()
}

/// The literal conditions of `P_{Ŝ,i}` on a rank→bucket map `g`:
/// `H_j` (at least `r_j` tracked items by `ℓ_j`), `L_j` (fewer than `r_j` of
/// the top `a_j` by `ℓ_j`) for every window, and `C_i` (item `i` arrives
/// after `ℓ_{d(i)}`).
fn ksec_literal(s: &KsecSchedule, g: &[usize], i: usize) -> bool {
    let k = g.len();
    let windows_ok = (0..s.windows).all(|j| {
        arrived_by(g, 1..=k, j) >= s.rank[j] && arrived_by(g, 1..=s.top[j].min(k), j) < s.rank[j]
    });
    let arrives_late = match s.deadline(i) {
        Some(d) if d < s.windows => g[i - 1] >= d + 2,
        _ => false,
    };
    windows_ok && arrives_late
}

/// The selection conditions on `g` for `P^sel_{Ŝ,i}`: every `H_j` holds and
/// item `i` arrives in some window `j` with fewer than `r_j` better tracked
/// items among the first `ℓ_j` arrivals. Under the `H_j`, every threshold is
/// at least a tracked value, so only tracked items are ever accepted and the
/// budget cannot run out before item `i`.
fn ksec_selected(s: &KsecSchedule, g: &[usize], i: usize) -> bool {
    let track = g.len();
    if (0..s.windows).any(|j| arrived_by(g, 1..=track, j) < s.rank[j]) {
        return false;
    }
    let bucket = g[i - 1];
    if bucket < 2 {
        return false;
    }
    let j = bucket - 2;
    i == 1 || arrived_by(g, 1..=i - 1, j) < s.rank[j]
}

fn rank_buckets(s: &KsecSchedule, s_hat: &[usize], pi: &Permutation) -> Vec<usize> {
    s_hat.iter().map(|&e| s.bucket_of(pi.position_of(e))).collect()
}

fn check_rank(s_hat: &[usize], i: usize) -> Result<()> {
    if i == 0 || i > s_hat.len() {
        return Err(Error::invalid(format!("rank i={i} outside 1..={}", s_hat.len())));
    }
    Ok(())
}

/// Direct evaluation of `P_{Ŝ,i}` on an order (`Ŝ` lists the elements of
/// ranks `1..=k`).
pub fn ksec_event_holds(s: &KsecSchedule, s_hat: &[usize], i: usize, pi: &Permutation) -> Result<bool> {
    check_tuple(s_hat, s.ell)?;
    check_rank(s_hat, i)?;
    if s_hat.len() != s.k || pi.n() != s.ell {
        return Err(Error::invalid("tuple length or order size disagrees with the schedule"));
    }
    Ok(ksec_literal(s, &rank_buckets(s, s_hat, pi), i))
}

/// Whether `π` satisfies every `H_j` for the tracked tuple and the
/// multiple-threshold algorithm selects `Ŝ_i`, decided by running the
/// algorithm on values that make `Ŝ` the top `|Ŝ|` items.
pub fn ksec_selection_holds(s: &KsecSchedule, s_hat: &[usize], i: usize, pi: &Permutation) -> Result<bool> {
    check_tuple(s_hat, s.ell)?;
    check_rank(s_hat, i)?;
    if s_hat.len() > s.k || pi.n() != s.ell {
        return Err(Error::invalid("tuple longer than the budget or order size mismatch"));
    }
    let track = s_hat.len();
    let high_enough = (0..s.windows).all(|j| {
        let lj = s.boundaries[j];
        s_hat.iter().filter(|&&e| pi.position_of(e) <= lj).count() >= s.rank[j]
    });
    if !high_enough {
        return Ok(false);
    }
    let mut values: Vec<f64> = (1..=s.ell).map(|e| e as f64 / (s.ell + 1) as f64).collect();
    for (x, &e) in s_hat.iter().enumerate() {
        values[e - 1] = (2 + track - x) as f64;
    }
    let va = ValueAssignment::new(values)?;
    let run = multi_threshold_with_schedule(&va, pi, s)?;
    Ok(run.selected.contains(&s_hat[i - 1]))
}

/// Enumerates rank→bucket maps `g ∈ [t]^k` accepted by `accept` and emits,
/// for each, every arrangement sorted by bucket (any order inside a bucket).
fn atoms_from_bucket_maps(s_hat: &[usize], t: usize, accept: impl Fn(&[usize]) -> bool) -> Result<Vec<AtomicEvent>> {
    let k = s_hat.len();
    let mut atoms = Vec::new();
    let mut g = vec![1usize; k];
    loop {
        if accept(&g) {
            let groups: Vec<Vec<usize>> = (1..=t).map(|j| (1..=k).filter(|&x| g[x - 1] == j).collect()).collect();
            let mut arrangements: Vec<Vec<usize>> = vec![Vec::new()];
            for group in &groups {
                let mut next = Vec::new();
                for prefix in &arrangements {
                    for order in all_permutations(group.len()) {
                        let mut a = prefix.clone();
                        a.extend(order.as_slice().iter().map(|&p| group[p as usize - 1]));
                        next.push(a);
                    }
                    if group.is_empty() {
                        next.push(prefix.clone());
                    }
                }
                arrangements = next;
            }
            for ranks in arrangements {
                let sigma = ranks.iter().map(|&x| s_hat[x - 1]).collect();
                let f = ranks.iter().map(|&x| g[x - 1]).collect();
                atoms.push(AtomicEvent::new(sigma, f)?);
            }
        }
        let Some(x) = (0..k).rev().find(|&x| g[x] < t) else { break };
        g[x] += 1;
        for y in &mut g[x + 1..] {
            *y = 1;
        }
    }
    Ok(atoms)
}

/// Decomposes the literal multiple-choice event `P_{Ŝ,i}` (all `H_j`, `L_j`
/// and `C_i`) into atoms over the schedule's bucketing. The returned lower
/// bound is the exact probability.
pub fn decompose_ksec_positive(s_hat: &[usize], i: usize, s: &KsecSchedule, b: &Bucketing) -> Result<PositiveEvent> {
    check_schedule(s, b)?;
    check_tuple(s_hat, s.ell)?;
    check_rank(s_hat, i)?;
    if s_hat.len() != s.k {
        return Err(Error::invalid(format!("tuple has {} elements, schedule expects k={}", s_hat.len(), s.k)));
    }
    let atoms = atoms_from_bucket_maps(s_hat, b.t(), |g| ksec_literal(s, g, i))?;
    let event = PositiveEvent::new(0, atoms, BigRational::zero())?;
    let measure = positive_prob(&event, b)?;
    event.with_lower_bound(measure)
}

/// Decomposes the selection event `P^sel_{Ŝ,i}` for a tracked tuple of at
/// most `k` elements. The returned lower bound is the exact probability.
pub fn decompose_ksec_selection(s_hat: &[usize], i: usize, s: &KsecSchedule, b: &Bucketing) -> Result<PositiveEvent> {
    check_schedule(s, b)?;
    check_tuple(s_hat, s.ell)?;
    check_rank(s_hat, i)?;
    if s_hat.len() > s.k {
        return Err(Error::invalid("tracked tuple longer than the budget"));
    }
    let atoms = atoms_from_bucket_maps(s_hat, b.t(), |g| ksec_selected(s, g, i))?;
    let event = PositiveEvent::new(0, atoms, BigRational::zero())?;
    let measure = positive_prob(&event, b)?;
    event.with_lower_bound(measure)
}

/// The selection family over all ordered `track`-tuples of `[ℓ]` and ranks
/// `1..=track`, with exact probabilities as lower bounds; empty and
/// duplicate events are dropped.
pub fn ksec_selection_family(s: &KsecSchedule, track: usize) -> Result<(Bucketing, Vec<PositiveEvent>)> {
    if track == 0 || track > s.k {
        return Err(Error::invalid(format!("tracked count {track} outside 1..={}", s.k)));
    }
    let b = ksec_bucketing(s)?;
    let mut events = Vec::new();
    for s_hat in ordered_tuples(s.ell, track) {
        for i in 1..=track {
            events.push(decompose_ksec_selection(&s_hat, i, s, &b)?);
        }
    }
    Ok((b, dedupe(events)))
}

#[derive(Serialize)]
struct EventDump<'a> {
    id: usize,
    lower_bound: String,
    atoms: &'a [AtomicEvent],
}

/// JSON debug dump: one object per event with its atoms (`sigma`, `f`) and
/// the lower bound as a `num/den` string.
pub fn events_json(events: &[PositiveEvent]) -> Result<String> {
    let dump: Vec<EventDump> = events
        .iter()
        .map(|e| EventDump { id: e.id, lower_bound: e.lower_bound.to_string(), atoms: &e.atoms })
        .collect();
    serde_json::to_string_pretty(&dump).map_err(|e| Error::invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn atom(sigma: &[usize], f: &[usize]) -> AtomicEvent {
        AtomicEvent::new(sigma.to_vec(), f.to_vec()).unwrap()
    }

    fn perm(v: &[usize]) -> Permutation {
        Permutation::new(v.to_vec()).unwrap()
    }

    #[test]
    fn bucketing_geometry() {
        let b = Bucketing::new(7, vec![2, 5, 7]).unwrap();
        assert_eq!((b.bucket_of(1), b.bucket_of(3), b.bucket_of(7)), (1, 2, 3));
        assert_eq!((b.size(1), b.size(2), b.size(3)), (2, 3, 2));
        assert_eq!(b.free_after(2, 3), 2);
        assert_eq!(b.free_after(1, 3), 0);
        assert_eq!(b.free_after(3, 3), 2);
        assert!(Bucketing::new(4, vec![4]).is_err());
        assert!(Bucketing::new(4, vec![2, 2, 4]).is_err());
        assert!(Bucketing::new(4, vec![1, 3]).is_err());
    }

    #[test]
    fn holds_examples() {
        let b = Bucketing::new(3, vec![1, 3]).unwrap();
        let a = atom(&[2, 3], &[1, 2]);
        assert!(atomic_holds(&a, &b, &perm(&[2, 1, 3])).unwrap());
        assert!(!atomic_holds(&a, &b, &perm(&[3, 1, 2])).unwrap());
        assert!(atomic_holds(&atom(&[], &[]), &b, &perm(&[3, 1, 2])).unwrap());
        assert!(atomic_holds(&atom(&[4], &[1]), &b, &perm(&[3, 1, 2])).is_err());
    }

    #[test]
    fn atomic_prob_examples() {
        let b2 = Bucketing::new(2, vec![1, 2]).unwrap();
        assert_eq!(atomic_prob(&atom(&[1], &[1]), &b2).unwrap(), q(1, 2));
        let b3 = Bucketing::new(3, vec![1, 3]).unwrap();
        assert_eq!(atomic_prob(&atom(&[2, 3], &[1, 2]), &b3).unwrap(), q(1, 3));
        assert_eq!(atomic_prob(&atom(&[], &[]), &b3).unwrap(), q(1, 1));
        assert_eq!(atomic_prob(&atom(&[1, 2], &[1, 1]), &b3).unwrap(), q(0, 1));
    }

    #[test]
    fn conditional_examples() {
        let b = Bucketing::new(4, vec![2, 4]).unwrap();
        let a = atom(&[1, 3], &[1, 2]);
        let sp = SemiRandomPermutation::new(4, vec![1]).unwrap();
        assert_eq!(conditional_atomic_prob(&a, &sp, &b).unwrap(), q(2, 3));
        assert_eq!(conditional_atomic_prob_fast(&a, &sp, &b).unwrap(), q(2, 3));
        let reversed = SemiRandomPermutation::new(4, vec![3, 1]).unwrap();
        assert_eq!(conditional_atomic_prob(&atom(&[1, 3], &[1, 1]), &reversed, &b).unwrap(), q(0, 1));
    }

    #[test]
    fn conditional_catches_cross_bucket_and_open_predecessor() {
        let b = Bucketing::new(6, vec![2, 4, 6]).unwrap();
        // Element 5 belongs to bucket 3 but sits at position 1.
        let a = atom(&[1, 5], &[1, 3]);
        let sp = SemiRandomPermutation::new(6, vec![5, 1, 2]).unwrap();
        assert_eq!(conditional_atomic_prob(&a, &sp, &b).unwrap(), q(0, 1));
        // Element 4 is fixed in bucket 2 while its predecessor 3 is still open.
        let a = atom(&[3, 4], &[2, 2]);
        let sp = SemiRandomPermutation::new(6, vec![1, 2, 4]).unwrap();
        assert_eq!(conditional_atomic_prob(&a, &sp, &b).unwrap(), q(0, 1));
        assert_eq!(conditional_atomic_prob_fast(&a, &sp, &b).unwrap(), q(0, 1));
    }

    #[test]
    fn intersection_test_matches_enumeration() {
        let b = Bucketing::new(5, vec![2, 5]).unwrap();
        let atoms = [
            atom(&[1, 2], &[1, 2]),
            atom(&[2, 1], &[1, 2]),
            atom(&[1, 3], &[2, 2]),
            atom(&[3, 1], &[2, 2]),
            atom(&[1, 2, 3], &[2, 2, 2]),
            atom(&[4, 5], &[1, 1]),
            atom(&[4, 3], &[1, 1]),
        ];
        for x in &atoms {
            for y in &atoms {
                let brute = all_permutations(5)
                    .any(|p| atomic_holds(x, &b, &p).unwrap() && atomic_holds(y, &b, &p).unwrap());
                assert_eq!(atoms_intersect(x, y, &b), brute, "{x:?} vs {y:?}");
            }
        }
    }

    #[test]
    fn positive_prob_rejects_overlap_and_sums_to_one() {
        let b = Bucketing::new(3, vec![1, 3]).unwrap();
        let overlapping = PositiveEvent::new(0, vec![atom(&[1], &[2]), atom(&[1, 2], &[2, 2])], q(0, 1)).unwrap();
        assert!(positive_prob(&overlapping, &b).is_err());
        let whole = PositiveEvent::new(0, vec![atom(&[2], &[1]), atom(&[2], &[2])], q(0, 1)).unwrap();
        assert_eq!(positive_prob(&whole, &b).unwrap(), q(1, 1));
    }

    #[test]
    fn onesec_pair_event_matches_bayes_formula() {
        // ell=6, m=2: Pr[E_2] = (m/ell)((ell−m)/(ell−1)) = 4/15.
        let (b, events) = onesec_family(6, 2).unwrap();
        assert_eq!(b.bounds(), &[2, 6]);
        assert_eq!(events.len(), 30);
        for e in &events {
            assert_eq!(e.atoms().len(), 1);
            assert_eq!(e.lower_bound(), &q(4, 15));
        }
    }

    #[test]
    fn ordered_tuple_counts() {
        assert_eq!(ordered_tuples(5, 2).len(), 20);
        assert_eq!(ordered_tuples(3, 0), vec![Vec::<usize>::new()]);
        assert!(ordered_tuples(2, 3).is_empty());
    }

    #[test]
    fn json_dump_lists_atoms() {
        let (_, events) = onesec_family(4, 2).unwrap();
        let json = events_json(&events[..1]).unwrap();
        assert!(json.contains("\"sigma\""));
        assert!(json.contains("\"lower_bound\""));
    }
}
