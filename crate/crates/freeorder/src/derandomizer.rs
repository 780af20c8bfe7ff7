//! Deterministic construction of a small permutation multiset that keeps a
//! `(1−δ)` fraction of every positive event's probability.
//!
//! The multiset `π_1, …, π_ℓ` is built one permutation at a time and each
//! permutation one position at a time. At every position the candidate that
//! minimizes the pessimistic estimator
//!
//! `Φ = Σ_γ K_γ ρ_γ^{ℓ−s−1} (1−δ)^{c_γ} (1 − δ E[φ_{s+1}(P_γ) | prefix])`
//!
//! is kept, where `ρ_γ = 1 − δ p_γ`, `K_γ = (1−δ)^{−(1−δ) p_γ ℓ}`, `s` is the
//! number of finished permutations and `c_γ` the number of them lying in
//! `P_γ`. The conditional expectation is the sum of the atoms' conditional
//! probabilities.
//!
//! All comparisons are exact. `K_γ` is irrational, so it is replaced by a
//! fixed rational `K̃_γ = 2^i · x` where `i + log₂ x` is the exponent in `f64`.
//! The same `K̃_γ` is used throughout, so the estimator being minimized is a
//! well-defined rational function and every monotonicity check is exact; the
//! frequency guarantee itself is verified on integer counts at the end.

use std::cmp::Ordering;
use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::events::{completion_count, conditional_atomic_prob, falling, Bucketing, PositiveEvent};
use crate::perm_core::{Permutation, PermutationMultiset, SemiRandomPermutation};

/// `max(2, ⌈2 ln q / (δ² p_0)⌉)`: the support size for which the Chernoff
/// argument leaves positive probability that every event is well covered.
pub fn required_support(q: usize, delta: f64, p0: f64) -> Result<usize> {
    if q == 0 {
        return Err(Error::invalid("at least one event is required"));
    }
    if !(delta > 0.0 && delta < 1.0) || !(p0 > 0.0 && p0 <= 1.0) {
        return Err(Error::invalid(format!("delta={delta} must lie in (0,1) and p0={p0} in (0,1]")));
    }
    let raw = (2.0 * (q as f64).ln() / (delta * delta * p0)).ceil();
    if !raw.is_finite() || raw > 1e12 {
        return Err(Error::invalid("required support is too large"));
    }
    Ok((raw as usize).max(2))
}

/// `ω(ℓ, s) = (1−δp)^{ℓ−s+1} / (1−δ)^{(1−δ)pℓ}` in floating point, the
/// per-event weight in its closed form as usually printed. The estimator
/// proper uses the exponent `ℓ−s−1` (future permutations only).
pub fn omega_weight(ell: usize, s: usize, delta: f64, p: f64) -> f64 {
    let exponent = ell as f64 - s as f64 + 1.0;
    (1.0 - delta * p).powf(exponent) / (1.0 - delta).powf((1.0 - delta) * p * ell as f64)
}

/// Parses `δ` from `"a/b"` or a decimal such as `"0.125"`, exactly.
pub fn parse_delta(text: &str) -> Result<BigRational> {
    let text = text.trim();
    let bad = || Error::parse(format!("cannot read delta from {text:?}"));
    let value = if let Some((num, den)) = text.split_once('/') {
        let num: BigInt = num.trim().parse().map_err(|_| bad())?;
        let den: BigInt = den.trim().parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(bad());
        }
        BigRational::new(num, den)
    } else {
        let (int, frac) = text.split_once('.').unwrap_or((text, ""));
        if int.is_empty() && frac.is_empty() || !(int.chars().chain(frac.chars())).all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let digits: BigInt = format!("{int}{frac}").parse().map_err(|_| bad())?;
        BigRational::new(digits, BigInt::from(10u32).pow(frac.len() as u32))
    };
    if !value.is_positive() || value >= BigRational::one() {
        return Err(Error::invalid(format!("delta {value} must lie strictly between 0 and 1")));
    }
    Ok(value)
}

/// Parameters of a construction.
#[derive(Clone, Debug, PartialEq)]
pub struct DerandomizerConfig {
    /// Relative slack `δ ∈ (0,1)`.
    pub delta: BigRational,
    /// Support size `ℓ`.
    pub ell: usize,
}

impl DerandomizerConfig {
    /// Explicit `δ` and `ℓ`.
    pub fn new(delta: BigRational, ell: usize) -> Result<Self> {
        if !delta.is_positive() || delta >= BigRational::one() {
            return Err(Error::invalid(format!("delta {delta} must lie strictly between 0 and 1")));
        }
        if ell == 0 {
            return Err(Error::invalid("support size must be positive"));
        }
        Ok(Self { delta, ell })
    }

    /// `ℓ` from [`required_support`] for the given family.
    pub fn for_events(events: &[PositiveEvent], delta: BigRational) -> Result<Self> {
        let p0 = min_lower_bound(events)?;
        let ell = required_support(events.len(), to_f64(&delta), to_f64(&p0))?;
        Self::new(delta, ell)
    }
}

fn min_lower_bound(events: &[PositiveEvent]) -> Result<BigRational> {
    let p0 = events
        .iter()
        .map(|e| e.lower_bound().clone())
        .min()
        .ok_or_else(|| Error::invalid("empty event family"))?;
    if !p0.is_positive() {
        return Err(Error::invalid("every event needs a positive lower bound"));
    }
    Ok(p0)
}

fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// `K̃ ≈ (1−δ)^{−(1−δ)pℓ}` as an exact rational: the base-2 exponent is
/// split into an integer part (kept exactly) and a fractional part whose
/// power of two is rounded once to `f64`.
fn k_tilde(delta: &BigRational, p: &BigRational, ell: usize) -> BigRational {
    let d = to_f64(delta);
    let bits = -(1.0 - d) * to_f64(p) * ell as f64 * (1.0 - d).log2();
    let whole = bits.floor();
    let frac = BigRational::from_float((bits - whole).exp2()).expect("finite");
    frac * BigRational::from_integer(BigInt::one() << (whole as usize))
}

/// One logged step: after position `r` of permutation `s+1` the estimator
/// equals `phi`; `tau` is the element placed (absent for permutation
/// boundaries).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceEntry {
    /// Number of finished permutations.
    pub s: usize,
    /// Number of fixed positions in the current permutation.
    pub r: usize,
    /// Element placed at position `r`.
    pub tau: Option<usize>,
    /// Estimator value, rounded for the log.
    pub phi: f64,
}

/// Result of [`construct_distribution`].
#[derive(Clone, Debug)]
pub struct Construction {
    /// The multiset `ℒ`; its first entry is the identity.
    pub multiset: PermutationMultiset,
    /// Estimator trace in construction order.
    pub trace: Vec<TraceEntry>,
    /// `c_γ`: entries of `ℒ` lying in each event.
    pub counts: Vec<usize>,
    /// Estimator before any permutation is fixed.
    pub phi_start: BigRational,
    /// Estimator once the identity is fixed; the construction requires it
    /// to be below 1.
    pub phi_initial: BigRational,
    /// Estimator once every permutation is fixed.
    pub phi_final: BigRational,
}

impl Construction {
    /// The trace as JSON lines.
    pub fn trace_jsonl(&self) -> String {
        self.trace.iter().map(|t| serde_json::to_string(t).expect("serializable") + "\n").collect()
    }
}

/// Finished-permutation state of the estimator: `s` and the counts `c_γ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EstimatorState {
    s: usize,
    counts: Vec<usize>,
}

impl EstimatorState {
    /// State after fixing `fixed` (in order) as the first permutations.
    pub fn from_fixed(events: &[PositiveEvent], b: &Bucketing, fixed: &[Permutation]) -> Result<Self> {
        let mut counts = vec![0; events.len()];
        for pi in fixed {
            for (c, e) in counts.iter_mut().zip(events) {
                *c += usize::from(e.holds(b, pi)?);
            }
        }
        Ok(Self { s: fixed.len(), counts })
    }

    /// Number of finished permutations.
    pub fn s(&self) -> usize {
        self.s
    }

    /// Per-event satisfied counts.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
}

/// `Φ` at a partial permutation, computed directly from the atoms'
/// conditional probabilities in exact arithmetic. This is the reference the
/// fast construction is checked against.
pub fn estimator_value(
    state: &EstimatorState,
    partial: &SemiRandomPermutation,
    events: &[PositiveEvent],
    b: &Bucketing,
    cfg: &DerandomizerConfig,
) -> Result<BigRational> {
    if state.counts.len() != events.len() || partial.n() != b.n() {
        return Err(Error::invalid("estimator state, prefix and family disagree in size"));
    }
    if state.s >= cfg.ell {
        return Err(Error::invalid("all permutations are already fixed"));
    }
    let delta = &cfg.delta;
    let keep = BigRational::one() - delta;
    let mut phi = BigRational::zero();
    for (e, &c) in events.iter().zip(&state.counts) {
        let p = e.lower_bound();
        let rho = BigRational::one() - delta * p;
        let expectation = e
            .atoms()
            .iter()
            .try_fold(BigRational::zero(), |acc, a| Ok::<_, Error>(acc + conditional_atomic_prob(a, partial, b)?))?;
        phi += k_tilde(delta, p, cfg.ell)
            * pow(&rho, cfg.ell - state.s - 1)
            * pow(&keep, c)
            * (BigRational::one() - delta * expectation);
    }
    Ok(phi)
}

fn pow(x: &BigRational, e: usize) -> BigRational {
    num_traits::pow(x.clone(), e)
}

/// `|{π ∈ ℒ : π ∈ P_γ}|` for every event.
pub fn event_frequencies(ms: &PermutationMultiset, events: &[PositiveEvent], b: &Bucketing) -> Result<Vec<usize>> {
    Ok(EstimatorState::from_fixed(events, b, ms.entries())?.counts)
}

/// Checks `c_γ ≥ (1−δ) p_γ ℓ` for every event, exactly.
pub fn verify_frequencies(counts: &[usize], events: &[PositiveEvent], delta: &BigRational, ell: usize) -> Result<()> {
    for (e, &c) in events.iter().zip(counts) {
        let need = (BigRational::one() - delta) * e.lower_bound() * BigRational::from_integer(ell.into());
        if BigRational::from_integer(c.into()) < need {
            return Err(Error::invariant(format!(
                "event {} covered {c} times out of {ell}, below (1-delta)p*ell = {:.4}",
                e.id(),
                to_f64(&need)
            )));
        }
    }
    Ok(())
}

/// `Φ = scale · t / d` for the weights of one permutation, with `t` and `d`
/// integers kept unreduced. Values sharing the same weights are compared
/// without the (large) common scale.
#[derive(Clone, Debug)]
struct Phi {
    t: BigInt,
    d: BigInt,
}

impl Phi {
    /// Comparison under a shared scale.
    fn cmp_same(&self, other: &Phi) -> Ordering {
        (&self.t * &other.d).cmp(&(&other.t * &self.d))
    }

    /// Comparison of values carrying different scales.
    fn cmp_scaled(&self, w: &Weights, other: &Phi, v: &Weights) -> Ordering {
        (&w.scale_num * &self.t * &v.scale_den * &other.d).cmp(&(&v.scale_num * &other.t * &w.scale_den * &self.d))
    }

    fn to_rational(&self, w: &Weights) -> BigRational {
        BigRational::new(&w.scale_num * &self.t, &w.scale_den * &self.d)
    }

    fn to_f64(&self, w: &Weights) -> f64 {
        w.scale_f64 * BigRational::new_raw(self.t.clone(), self.d.clone()).to_f64().unwrap_or(f64::NAN)
    }

    fn below_one(&self, w: &Weights) -> bool {
        &w.scale_num * &self.t < &w.scale_den * &self.d
    }
}

/// Atoms in kernel form.
struct Atom {
    sigma: Vec<u32>,
    f: Vec<u16>,
}

/// Per-permutation weights `w_γ = scale · mult[class(γ)]` with integer
/// `mult`; a class collects the events sharing a lower bound and a count.
struct Weights {
    scale_num: BigInt,
    scale_den: BigInt,
    scale_f64: f64,
    class_of: Vec<usize>,
    mult: Vec<BigInt>,
    class_size: Vec<u64>,
}

/// The construction's precomputed structure.
struct Engine<'a> {
    b: &'a Bucketing,
    n: usize,
    ell: usize,
    umax: usize,
    atoms: Vec<Vec<Atom>>,
    by_element: Vec<Vec<u32>>,
    delta_num: BigInt,
    delta_den: BigInt,
    groups: usize,
    group_of: Vec<usize>,
    k_tilde: Vec<BigRational>,
    rho: Vec<BigRational>,
}

impl<'a> Engine<'a> {
    fn new(events: &[PositiveEvent], b: &'a Bucketing, cfg: &DerandomizerConfig) -> Result<Self> {
        let n = b.n();
        let mut atoms = Vec::with_capacity(events.len());
        let mut by_element = vec![Vec::new(); n + 1];
        let mut umax = 0;
        for (g, e) in events.iter().enumerate() {
            let mut compiled = Vec::with_capacity(e.atoms().len());
            for a in e.atoms() {
                if a.sigma().iter().any(|&x| x > n) || a.f().iter().any(|&j| j > b.t()) {
                    return Err(Error::invalid(format!("event {} does not fit the bucketing", e.id())));
                }
                umax = umax.max(a.k());
                compiled.push(Atom {
                    sigma: a.sigma().iter().map(|&x| x as u32).collect(),
                    f: a.f().iter().map(|&j| j as u16).collect(),
                });
            }
            atoms.push(compiled);
            for x in e.elements() {
                by_element[x].push(g as u32);
            }
        }
        // Class sums reach q · n^umax; keep them well inside u128.
        let magnitude = (n as f64).log2() * umax as f64 + (events.len().max(1) as f64).log2();
        if magnitude > 120.0 {
            return Err(Error::invalid("family too large for exact integer scoring"));
        }
        let mut groups: Vec<BigRational> = Vec::new();
        let mut group_of = Vec::with_capacity(events.len());
        for e in events {
            let p = e.lower_bound();
            let g = match groups.iter().position(|x| x == p) {
                Some(g) => g,
                None => {
                    groups.push(p.clone());
                    groups.len() - 1
                }
            };
            group_of.push(g);
        }
        let delta = &cfg.delta;
        Ok(Self {
            b,
            n,
            ell: cfg.ell,
            umax,
            atoms,
            by_element,
            delta_num: delta.numer().clone(),
            delta_den: delta.denom().clone(),
            groups: groups.len(),
            group_of,
            k_tilde: groups.iter().map(|p| k_tilde(delta, p, cfg.ell)).collect(),
            rho: groups.iter().map(|p| BigRational::one() - delta * p).collect(),
        })
    }

    /// `m_r = min(umax, n−r)`; the common denominator is `D_r = (n−r)_{m_r}`.
    fn depth(&self, r: usize) -> usize {
        self.umax.min(self.n - r)
    }

    fn denominator(&self, r: usize) -> u128 {
        falling(self.n - r, self.depth(r))
    }

    /// `S_γ = D_r · E[φ(P_γ) | prefix]`, an integer.
    fn score(&self, event: usize, r: usize, pos: impl Fn(u32) -> u32 + Copy) -> u128 {
        let m = self.depth(r);
        self.atoms[event]
            .iter()
            .map(|a| {
                let (count, u) = completion_count(&a.sigma, &a.f, self.b, r, pos);
                if count == 0 {
                    0
                } else {
                    count * falling(self.n - r - u, m - u)
                }
            })
            .sum()
    }

    fn all_scores(&self, r: usize, pos: &[u32]) -> Vec<u128> {
        (0..self.atoms.len()).into_par_iter().map(|g| self.score(g, r, |e| pos[e as usize])).collect()
    }

    /// Weights for building permutation `s+1` given the counts so far.
    ///
    /// Within a lower-bound group the weight is
    /// `G · (δ_d−δ_n)^{c−c_min} δ_d^{c_max−c}` with the group scale
    /// `G = K̃ ρ^{ℓ−s−1} (δ_d−δ_n)^{c_min} / δ_d^{c_max}`; several groups are
    /// brought to one integer scale by cross-multiplying their denominators.
    fn weights(&self, s: usize, counts: &[usize]) -> Weights {
        let mut classes: HashMap<(usize, usize), usize> = HashMap::new();
        let mut keys = Vec::new();
        let class_of: Vec<usize> = counts
            .iter()
            .zip(&self.group_of)
            .map(|(&c, &g)| {
                *classes.entry((g, c)).or_insert_with(|| {
                    keys.push((g, c));
                    keys.len() - 1
                })
            })
            .collect();
        let mut class_size = vec![0u64; keys.len()];
        for &c in &class_of {
            class_size[c] += 1;
        }
        let mut range = vec![(usize::MAX, 0usize); self.groups];
        for &(g, c) in &keys {
            range[g] = (range[g].0.min(c), range[g].1.max(c));
        }
        let keep = &self.delta_den - &self.delta_num;
        let exponent = self.ell - s - 1;
        let scales: Vec<(BigInt, BigInt)> = (0..self.groups)
            .map(|g| {
                let (lo, hi) = range[g];
                let (k, rho) = (&self.k_tilde[g], &self.rho[g]);
                let num = k.numer() * rho.numer().pow(exponent as u32) * keep.pow(lo as u32);
                let den = k.denom() * rho.denom().pow(exponent as u32) * self.delta_den.pow(hi as u32);
                (num, den)
            })
            .collect();
        let (scale_num, scale_den, group_mult) = if self.groups == 1 {
            let (num, den) = scales.into_iter().next().expect("one group");
            (num, den, vec![BigInt::one()])
        } else {
            let den_product: BigInt = scales.iter().map(|(_, d)| d).product();
            let mult = scales.iter().map(|(num, den)| num * (&den_product / den)).collect();
            (BigInt::one(), den_product, mult)
        };
        let mult = keys
            .iter()
            .map(|&(g, c)| {
                let (lo, hi) = range[g];
                &group_mult[g] * keep.pow((c - lo) as u32) * self.delta_den.pow((hi - c) as u32)
            })
            .collect();
        let scale_f64 = BigRational::new_raw(scale_num.clone(), scale_den.clone()).to_f64().unwrap_or(f64::NAN);
        Weights { scale_num, scale_den, scale_f64, class_of, mult, class_size }
    }

    /// `Φ = scale · Σ_c mult_c (N_c D δ_d − δ_n S_c) / (D δ_d)`.
    fn phi(&self, w: &Weights, r: usize, scores: &[u128]) -> Phi {
        let mut sums = vec![0u128; w.mult.len()];
        for (g, &s) in scores.iter().enumerate() {
            sums[w.class_of[g]] += s;
        }
        let d = BigInt::from(self.denominator(r));
        let t: BigInt = w
            .mult
            .iter()
            .zip(&sums)
            .zip(&w.class_size)
            .map(|((m, &s), &size)| m * (BigInt::from(size) * &d * &self.delta_den - &self.delta_num * BigInt::from(s)))
            .sum();
        Phi { t, d: d * &self.delta_den }
    }
}

/// Builds `ℒ` with `|ℒ| = ℓ` (identity first) such that every event's
/// frequency is at least `(1−δ) p_γ`.
///
/// Fails with [`Error::InvalidInput`] when the estimator does not start
/// below 1 (support too small or lower bounds above the true measures) and
/// with [`Error::Invariant`] if a checked property of the run fails.
pub fn construct_distribution(events: &[PositiveEvent], b: &Bucketing, cfg: &DerandomizerConfig) -> Result<Construction> {
    min_lower_bound(events)?;
    let engine = Engine::new(events, b, cfg)?;
    let n = b.n();
    let mut counts = vec![0usize; events.len()];
    let mut trace = Vec::new();

    let empty = vec![0u32; n + 1];
    let w0 = engine.weights(0, &counts);
    let start = engine.phi(&w0, 0, &engine.all_scores(0, &empty));
    trace.push(TraceEntry { s: 0, r: 0, tau: None, phi: start.to_f64(&w0) });
    let phi_start = start.to_rational(&w0);

    let identity = Permutation::identity(n);
    let id_pos: Vec<u32> = (0..=n as u32).collect();
    let id_scores = engine.all_scores(n, &id_pos);
    let mut last = engine.phi(&w0, n, &id_scores);
    let mut last_weights = w0;
    trace.push(TraceEntry { s: 0, r: n, tau: None, phi: last.to_f64(&last_weights) });
    for (c, &hit) in counts.iter_mut().zip(&id_scores) {
        *c += hit as usize;
    }
    let mut entries = vec![identity];
    let mut phi_initial = None;

    for s in 1..cfg.ell {
        let w = engine.weights(s, &counts);
        let mut pos = vec![0u32; n + 1];
        let mut placed = vec![false; n + 1];
        let mut order = Vec::with_capacity(n);
        let mut prev = engine.phi(&w, 0, &engine.all_scores(0, &pos));
        if s == 1 {
            if !prev.below_one(&w) {
                return Err(Error::invalid(format!(
                    "estimator starts at {:.6} >= 1: the support is too small or a lower bound exceeds its event's measure",
                    prev.to_f64(&w)
                )));
            }
            phi_initial = Some(prev.to_rational(&w));
        } else if prev.cmp_scaled(&w, &last, &last_weights) == Ordering::Greater {
            return Err(Error::invariant(format!("estimator rose between permutations {s} and {}", s + 1)));
        }
        trace.push(TraceEntry { s, r: 0, tau: None, phi: prev.to_f64(&w) });

        for r in 1..=n {
            // Blank at position r: counted as filled, no element placed.
            let blank = engine.all_scores(r, &pos);
            let candidates: Vec<u32> = (1..=n as u32).filter(|&e| !placed[e as usize]).collect();
            let scored: Vec<(BigInt, Vec<(usize, i128)>)> = candidates
                .par_iter()
                .map(|&tau| {
                    let at = |e: u32| if e == tau { r as u32 } else { pos[e as usize] };
                    let deltas: Vec<(usize, i128)> = engine.by_element[tau as usize]
                        .iter()
                        .map(|&g| {
                            let g = g as usize;
                            (g, engine.score(g, r, at) as i128 - blank[g] as i128)
                        })
                        .filter(|&(_, d)| d != 0)
                        .collect();
                    let mut per_class: Vec<(usize, i128)> = Vec::new();
                    for &(g, d) in &deltas {
                        let c = w.class_of[g];
                        match per_class.iter_mut().find(|(k, _)| *k == c) {
                            Some((_, acc)) => *acc += d,
                            None => per_class.push((c, d)),
                        }
                    }
                    let gain = per_class.iter().map(|&(c, d)| &w.mult[c] * BigInt::from(d)).sum();
                    (gain, deltas)
                })
                .collect();
            let best = (0..candidates.len())
                .reduce(|a, b| if scored[b].0 > scored[a].0 { b } else { a })
                .expect("a candidate remains");
            let tau = candidates[best];
            let mut after = blank;
            for &(g, d) in &scored[best].1 {
                after[g] = (after[g] as i128 + d) as u128;
            }
            let now = engine.phi(&w, r, &after);
            if now.cmp_same(&prev) == Ordering::Greater {
                return Err(Error::invariant(format!("estimator rose at permutation {}, position {r}", s + 1)));
            }
            trace.push(TraceEntry { s, r, tau: Some(tau as usize), phi: now.to_f64(&w) });
            pos[tau as usize] = r as u32;
            placed[tau as usize] = true;
            order.push(tau);
            prev = now;
            if r == n {
                for (c, &hit) in counts.iter_mut().zip(&after) {
                    *c += hit as usize;
                }
            }
        }
        last = prev;
        last_weights = w;
        entries.push(Permutation::new(order.into_iter().map(|e| e as usize).collect())?);
    }

    let phi_final = {
        let keep = BigRational::one() - &cfg.delta;
        events.iter().zip(&counts).fold(BigRational::zero(), |acc, (e, &c)| {
            acc + k_tilde(&cfg.delta, e.lower_bound(), cfg.ell) * pow(&keep, c)
        })
    };
    verify_frequencies(&counts, events, &cfg.delta, cfg.ell)?;
    let phi_initial = match phi_initial {
        Some(p) => p,
        None => last.to_rational(&last_weights),
    };
    Ok(Construction {
        multiset: PermutationMultiset::new(n, entries)?,
        trace,
        counts,
        phi_start,
        phi_initial,
        phi_final,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{onesec_family, AtomicEvent};

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn support_formula() {
        assert_eq!(required_support(100, 0.5, 0.5).unwrap(), 74);
        assert_eq!(required_support(2, 0.99, 1.0).unwrap(), 2);
        assert_eq!(required_support(56, 0.125, 3.0 / 14.0).unwrap(), 2405);
        let a = required_support(50, 0.25, 0.3).unwrap();
        let b = required_support(100, 0.25, 0.3).unwrap();
        assert!(b >= a && (b - a) as f64 <= 2.0 * 2f64.ln() / (0.0625 * 0.3) + 1.0);
        assert!(required_support(10, 1.0, 0.5).is_err());
    }

    #[test]
    fn omega_examples() {
        assert!((omega_weight(10, 1, 0.5, 0.5) - 0.3185).abs() < 1e-3);
        assert_eq!(omega_weight(10, 3, 0.0, 0.5), 1.0);
        assert!(omega_weight(10, 4, 0.5, 0.5) > omega_weight(10, 3, 0.5, 0.5));
    }

    #[test]
    fn delta_parsing() {
        assert_eq!(parse_delta("1/8").unwrap(), q(1, 8));
        assert_eq!(parse_delta("0.125").unwrap(), q(1, 8));
        assert_eq!(parse_delta(".5").unwrap(), q(1, 2));
        assert!(parse_delta("1").is_err());
        assert!(parse_delta("x").is_err());
        assert!(parse_delta("3/0").is_err());
    }

    #[test]
    fn k_tilde_tracks_the_float_value() {
        let k = k_tilde(&q(1, 8), &q(3, 14), 2405);
        let exact = (7.0f64 / 8.0).powf(-(7.0 / 8.0) * (3.0 / 14.0) * 2405.0);
        assert!((to_f64(&k) / exact - 1.0).abs() < 1e-12);
    }

    #[test]
    fn certain_event_is_always_covered() {
        let b = Bucketing::new(3, vec![1, 3]).unwrap();
        let sure = PositiveEvent::new(0, vec![AtomicEvent::new(vec![], vec![]).unwrap()], q(1, 1)).unwrap();
        let out = construct_distribution(&[sure], &b, &DerandomizerConfig::new(q(1, 2), 4).unwrap()).unwrap();
        assert_eq!(out.counts, vec![4]);
        assert_eq!(out.multiset.entries()[0], Permutation::identity(3));
    }

    #[test]
    fn small_onesec_construction_meets_guarantee() {
        let (b, events) = onesec_family(5, 2).unwrap();
        let cfg = DerandomizerConfig::for_events(&events, q(1, 2)).unwrap();
        let out = construct_distribution(&events, &b, &cfg).unwrap();
        assert_eq!(out.multiset.len(), cfg.ell);
        assert!(out.phi_initial < BigRational::one());
        assert_eq!(event_frequencies(&out.multiset, &events, &b).unwrap(), out.counts);
        verify_frequencies(&out.counts, &events, &cfg.delta, cfg.ell).unwrap();
    }

    #[test]
    fn too_small_support_is_rejected() {
        let (b, events) = onesec_family(5, 2).unwrap();
        let cfg = DerandomizerConfig::new(q(1, 8), 3).unwrap();
        assert!(matches!(construct_distribution(&events, &b, &cfg), Err(Error::InvalidInput(_))));
    }
}
