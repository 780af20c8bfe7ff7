//! Online selection algorithms driven by an arrival order: wait-and-pick with
//! a statistic, the classic single-choice secretary rule, and the
//! multiple-threshold k-choice algorithm together with its constants table.
//!
//! Arrival semantics: under the order `π`, arrival slot `p` carries the value
//! of element `π(p)`. Rank queries order values descending and break ties by
//! the smaller element index.

use std::cmp::Ordering;
use std::io::{BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::perm_core::{parse_header, Permutation};

/// The adversary's values `v(1..n)`, indexed by element.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValueAssignment {
    values: Vec<f64>,
}

impl ValueAssignment {
    /// Validates that all values are finite and nonnegative.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("value assignment must cover n >= 1 elements"));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("value {v} at element {} is not a finite nonnegative real", i + 1)));
        }
        Ok(Self { values })
    }

    /// Number of elements.
    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// `v(i)` for a 1-based element `i`.
    pub fn value(&self, i: usize) -> f64 {
        self.values[i - 1]
    }

    /// All values, element order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Elements sorted by rank: descending value, ties by smaller index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (1..=self.n()).collect();
        idx.sort_by(|&a, &b| rank_cmp(&self.values, a, b));
        idx
    }

    /// The largest value.
    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes the VALUES v1 text format.
    pub fn write_values<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "VALUES 1 n={}", self.n())?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{} {}", i + 1, v)?;
        }
        Ok(())
    }

    /// Parses the VALUES v1 text format; every element must appear once.
    pub fn read_values<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::parse("missing VALUES header"))??;
        let n = parse_header(&header, "VALUES", &["n"])?[0];
        let mut values = vec![None; n];
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (pos, val) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::parse(format!("malformed line `{line}`")))?;
            let pos: usize = pos.trim().parse().map_err(|_| Error::parse(format!("bad position in `{line}`")))?;
            let val: f64 = val.trim().parse().map_err(|_| Error::parse(format!("bad value in `{line}`")))?;
            if pos == 0 || pos > n {
                return Err(Error::parse(format!("position {pos} outside 1..={n}")));
            }
            if values[pos - 1].replace(val).is_some() {
                return Err(Error::parse(format!("position {pos} listed twice")));
            }
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| Error::parse(format!("position {} missing", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(values)
    }
}

/// Descending-value order with ties broken by the smaller element index.
pub(crate) fn rank_cmp(values: &[f64], a: usize, b: usize) -> Ordering {
    values[b - 1]
        .partial_cmp(&values[a - 1])
        .unwrap_or(Ordering::Equal)
        .then(a.cmp(&b))
}

/// Outcome of one run of a selection algorithm.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunResult {
    /// Selected elements in arrival order.
    pub selected: Vec<usize>,
    /// Sum of selected values.
    pub total: f64,
    /// Sum of the `k` largest values.
    pub opt: f64,
    /// `total / opt` (1 when `opt` is zero).
    pub ratio: f64,
    /// Whether a maximum value was selected.
    pub success: bool,
}

impl RunResult {
    fn from_selection(va: &ValueAssignment, selected: Vec<usize>, k: usize) -> Self {
        let total: f64 = selected.iter().map(|&e| va.value(e)).sum();
        let opt = top_k_sum(va, k);
        let ratio = if opt > 0.0 { (total / opt).clamp(0.0, 1.0) } else { 1.0 };
        let max = va.max_value();
        let success = selected.iter().any(|&e| va.value(e) == max);
        Self { selected, total, opt, ratio, success }
    }
}

/// Sum of the `k` largest values (ties by index; the sum is tie-invariant).
pub fn top_k_sum(va: &ValueAssignment, k: usize) -> f64 {
    va.ranking().into_iter().take(k).map(|e| va.value(e)).sum()
}

fn check_order(va: &ValueAssignment, pi: &Permutation) -> Result<()> {
    if va.n() != pi.n() {
        return Err(Error::invalid(format!(
            "order over [{}] applied to {} values",
            pi.n(),
            va.n()
        )));
    }
    Ok(())
}

/// The element holding the `tau`-th largest value among the first `m`
/// arrivals.
fn statistic(va: &ValueAssignment, arrivals: &[u32], m: usize, tau: usize) -> usize {
    let mut seen: Vec<usize> = arrivals[..m].iter().map(|&e| e as usize).collect();
    seen.select_nth_unstable_by(tau - 1, |&a, &b| rank_cmp(va.values(), a, b));
    seen[tau - 1]
}

/// Wait-and-pick: observe the first `m` arrivals, set the threshold `x` to
/// the `tau`-th largest of them, then accept every later value `≥ x` until
/// `k` values are held. When only `i` arrivals remain and only `k−i` values
/// are held, the final `i` arrivals are accepted unconditionally.
pub fn wait_and_pick(va: &ValueAssignment, pi: &Permutation, m: usize, tau: usize, k: usize) -> Result<RunResult> {
    check_order(va, pi)?;
    let n = pi.n();
    if m == 0 || m >= n {
        return Err(Error::invalid(format!("checkpoint m={m} outside 1..={}", n.saturating_sub(1))));
    }
    if tau == 0 || tau > m {
        return Err(Error::invalid(format!("statistic tau={tau} outside 1..={m}")));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("budget k={k} outside 1..={n}")));
    }
    let arrivals = pi.as_slice();
    let x = va.value(statistic(va, arrivals, m, tau));
    let mut selected = Vec::with_capacity(k);
    for p in m + 1..=n {
        if selected.len() == k {
            break;
        }
        let e = arrivals[p - 1] as usize;
        let remaining = n - p + 1;
        if va.value(e) >= x || remaining <= k - selected.len() {
            selected.push(e);
        }
    }
    Ok(RunResult::from_selection(va, selected, k))
}

/// The classic rule: wait-and-pick with `m = ⌊n/e⌋`, `tau = 1`, `k = 1`.
pub fn classic_secretary(va: &ValueAssignment, pi: &Permutation) -> Result<RunResult> {
    let n = pi.n();
    if n < 3 {
        return Err(Error::invalid("classic secretary needs n >= 3"));
    }
    wait_and_pick(va, pi, classic_checkpoint(n), 1, 1)
}

/// `⌊n/e⌋`, the classic checkpoint.
pub fn classic_checkpoint(n: usize) -> usize {
    (n as f64 / std::f64::consts::E).floor() as usize
}

/// Constants of the multiple-threshold schedule at dimension `ℓ` and budget
/// `k`. The runtime algorithm and the event decomposition both read this
/// table, so they agree on every rounding.
///
/// | symbol | definition |
/// |---|---|
/// | `δ` | `√(ln k / k)` (natural log) unless overridden |
/// | `W` | `⌈log₂(1/δ)⌉` windows, at least 1 |
/// | `ℓ_j` | `min(⌊2^j·δ·ℓ⌋, ℓ)` for `j < W`, and `ℓ_W = ℓ` |
/// | `k_j` | `k·ℓ_j/ℓ` |
/// | `ε_j` | `√(3δ/2^j)` |
/// | `r_j` | `⌈(1−ε_j)·k_j⌉` clamped to `1..=ℓ_j`; window `j`'s threshold is the `r_j`-th largest of the first `ℓ_j` arrivals |
/// | `a_j` | `⌊(1−2ε_j)·k⌋` clamped to `0..=k`, for `j ≤ W` |
///
/// Window `j` covers arrivals `ℓ_j+1..=ℓ_{j+1}`. Buckets are `{1..ℓ_0}` and
/// then one bucket per window, so bucket `j+2` is window `j`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KsecSchedule {
    pub ell: usize,
    pub k: usize,
    pub delta: f64,
    pub windows: usize,
    pub boundaries: Vec<usize>,
    pub k_j: Vec<f64>,
    pub eps: Vec<f64>,
    pub rank: Vec<usize>,
    pub top: Vec<usize>,
}

/// Guards floor/ceil against representation error in products such as
/// `2^j·δ·ℓ` that are mathematically integral.
const ROUNDING_SLACK: f64 = 1e-9;

impl KsecSchedule {
    /// The algorithm's own schedule, `δ = √(ln k / k)`.
    pub fn new(ell: usize, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid("k below schedule minimum"));
        }
        let delta = ((k as f64).ln() / k as f64).sqrt();
        if delta >= 1.0 {
            return Err(Error::invalid("k below schedule minimum"));
        }
        Self::with_delta(ell, k, delta)
    }

    /// The same table for an explicit `δ ∈ (0,1)`.
    pub fn with_delta(ell: usize, k: usize, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!("delta={delta} outside (0,1)")));
        }
        if k == 0 || k > ell {
            return Err(Error::invalid(format!("budget k={k} outside 1..={ell}")));
        }
        let windows = ((1.0 / delta).log2() - ROUNDING_SLACK).ceil().max(1.0) as usize;
        let mut boundaries: Vec<usize> = (0..windows)
            .map(|j| {
                let x = 2f64.powi(j as i32) * delta * ell as f64;
                ((x + ROUNDING_SLACK).floor() as usize).min(ell)
            })
            .collect();
        boundaries.push(ell);
        if boundaries[0] == 0 {
            return Err(Error::invalid(format!(
                "schedule degenerate: first checkpoint floor(delta*ell) is 0 at ell={ell}"
            )));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "schedule degenerate at ell={ell}: checkpoints {boundaries:?} not strictly increasing"
            )));
        }
        let k_j: Vec<f64> = boundaries.iter().map(|&b| k as f64 * b as f64 / ell as f64).collect();
        let eps: Vec<f64> = (0..=windows).map(|j| (3.0 * delta / 2f64.powi(j as i32)).sqrt()).collect();
        let rank = (0..windows)
            .map(|j| {
                let x = (1.0 - eps[j]) * k_j[j];
                let r = (x - ROUNDING_SLACK).ceil();
                (r.max(1.0) as usize).min(boundaries[j])
            })
            .collect();
        let top = (0..=windows)
            .map(|j| {
                let x = (1.0 - 2.0 * eps[j]) * k as f64;
                ((x + ROUNDING_SLACK).floor().max(0.0) as usize).min(k)
            })
            .collect();
        Ok(Self { ell, k, delta, windows, boundaries, k_j, eps, rank, top })
    }

    /// Number of buckets `t = W + 1`.
    pub fn buckets(&self) -> usize {
        self.windows + 1
    }

    /// Bucket (1-based) containing arrival position `p`.
    pub fn bucket_of(&self, p: usize) -> usize {
        self.boundaries.iter().position(|&b| p <= b).expect("position within 1..=ell") + 1
    }

    /// Smallest `j ∈ 0..=W` with `i ≤ a_j`: the rank-`i` item must arrive
    /// after `ℓ_j`. `None` when no such `j` exists.
    pub fn deadline(&self, i: usize) -> Option<usize> {
        self.top.iter().position(|&a| i <= a)
    }

    /// The schedule for `factor·ℓ` items whose checkpoints are this
    /// schedule's scaled by `factor`, so every window covers exactly the
    /// lifted positions of the low-dimension window. Ranks and budgets are
    /// unchanged since `k_j` depends only on `ℓ_j/ℓ`.
    pub fn scaled(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("scale factor must be positive"));
        }
        Ok(Self {
            ell: self.ell * factor,
            boundaries: self.boundaries.iter().map(|&b| b * factor).collect(),
            ..self.clone()
        })
    }
}

/// The multiple-threshold algorithm: ignore the first `ℓ_0` arrivals; in
/// window `j` accept values `≥ τ_j` (the `r_j`-th largest of the first `ℓ_j`
/// arrivals) until `k` values are held. There is no end-of-sequence fill.
pub fn multi_threshold_ksec(va: &ValueAssignment, pi: &Permutation, k: usize) -> Result<RunResult> {
    check_order(va, pi)?;
    let schedule = KsecSchedule::new(pi.n(), k)?;
    multi_threshold_with_schedule(va, pi, &schedule)
}

/// [`multi_threshold_ksec`] with a precomputed schedule (which must match
/// the order's dimension).
pub fn multi_threshold_with_schedule(va: &ValueAssignment, pi: &Permutation, schedule: &KsecSchedule) -> Result<RunResult> {
    check_order(va, pi)?;
    if schedule.ell != pi.n() {
        return Err(Error::invalid("schedule dimension differs from the order's"));
    }
    let arrivals = pi.as_slice();
    let k = schedule.k;
    let mut selected = Vec::with_capacity(k);
    for j in 0..schedule.windows {
        if selected.len() == k {
            break;
        }
        let lj = schedule.boundaries[j];
        let threshold = va.value(statistic(va, arrivals, lj, schedule.rank[j]));
        for p in lj + 1..=schedule.boundaries[j + 1] {
            if selected.len() == k {
                break;
            }
            let e = arrivals[p - 1] as usize;
            if va.value(e) >= threshold {
                selected.push(e);
            }
        }
    }
    Ok(RunResult::from_selection(va, selected, k))
}
