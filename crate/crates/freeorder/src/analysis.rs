//! Closed-form analytics: the classic success probability `f(k, m)` and its
//! maximizer, the second-order expansion of the optimum, concentration-bound
//! calculators and the guarantee formulas reported next to simulations.
//!
//! `f(k, m) = (m/k)(H_{k−1} − H_{m−1})` is the probability that wait-and-pick
//! with checkpoint `m` and `τ = 1` selects the maximum under a uniformly
//! random order of `k` items.

use std::collections::BTreeMap;
use std::f64::consts::E;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest `k` handled with exact rationals; beyond it harmonic sums use
/// compensated floating point.
pub const EXACT_LIMIT: usize = 1000;

/// `c₀ = 1/2 − 1/(2e)`, the `1/n` coefficient of the optimum.
pub const C0: f64 = 0.5 - 0.5 / E;

fn ratio(n: usize, d: usize) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn check_km(k: usize, m: usize) -> Result<()> {
    if m < 1 || m > k {
        return Err(Error::invalid(format!("need 1 <= m <= k, got k={k} m={m}")));
    }
    Ok(())
}

/// `f(k, m)` as an exact rational (`f(k, k) = 0`).
pub fn f_exact(k: usize, m: usize) -> Result<BigRational> {
    check_km(k, m)?;
    let tail = (m..k).fold(BigRational::zero(), |acc, j| acc + ratio(1, j));
    Ok(ratio(m, k) * tail)
}

/// Neumaier-compensated `Σ_{j=m}^{k−1} 1/j`.
fn harmonic_tail(k: usize, m: usize) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for j in (m..k).rev() {
        let x = 1.0 / j as f64;
        let t = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + comp
}

/// `f(k, m)` as a float: rounded from the exact value for
/// `k ≤ EXACT_LIMIT`, compensated summation beyond.
pub fn f_value(k: usize, m: usize) -> Result<f64> {
    check_km(k, m)?;
    if k <= EXACT_LIMIT {
        return Ok(f_exact(k, m)?.to_f64().expect("f is in [0, 1]"));
    }
    Ok(m as f64 / k as f64 * harmonic_tail(k, m))
}

/// Whether `Σ_{j=from}^{k−1} 1/j ≤ 1`, decided exactly with an unreduced
/// fraction.
fn tail_at_most_one(k: usize, from: usize) -> bool {
    let (mut num, mut den) = (BigInt::zero(), BigInt::from(1u8));
    for j in from..k {
        num = num * j + &den;
        den *= j;
    }
    num <= den
}

/// The checkpoint maximizing `f(k, ·)`, smallest on ties.
///
/// Since `f(k, m) ≥ f(k, m+1)` exactly when `Σ_{j=m+1}^{k−1} 1/j ≤ 1`, the
/// maximizer is the smallest such `m`. A float scan locates it and the
/// exact test settles the boundary.
pub fn f_argmax(k: usize) -> Result<usize> {
    if k < 3 {
        return Err(Error::invalid("argmax needs k >= 3"));
    }
    let mut tail = 0.0;
    let mut m = k - 1;
    while m > 1 && tail + 1.0 / m as f64 <= 1.0 {
        tail += 1.0 / m as f64;
        m -= 1;
    }
    while m > 1 && tail_at_most_one(k, m) {
        m -= 1;
    }
    while !tail_at_most_one(k, m + 1) {
        m += 1;
    }
    Ok(m)
}

/// `1/e + c₀/n`, the optimum up to `O(n^{−3/2})`.
pub fn opt_n_approx(n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::invalid("the expansion needs n >= 3"));
    }
    Ok(1.0 / E + C0 / n as f64)
}

/// Chernoff bounds for a sum of negatively associated indicators with mean
/// `μ`: `Pr[X ≥ (1+η)μ] ≤ exp(−η²μ/3)` and, for `η < 1`,
/// `Pr[X ≤ (1−η)μ] ≤ exp(−η²μ/2)`. The lower tail is `None` for `η ≥ 1`.
pub fn chernoff_na_bounds(mu: f64, eta: f64) -> Result<(f64, Option<f64>)> {
    if !(mu > 0.0 && mu.is_finite()) || !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid("need mu > 0 and eta > 0"));
    }
    let upper = (-eta * eta * mu / 3.0).exp();
    let lower = (eta < 1.0).then(|| (-eta * eta * mu / 2.0).exp());
    Ok((upper, lower))
}

/// `1 − 4√(ln k / k)`, returned raw (it is vacuous for small `k`).
pub fn ratio_bound_ksec(k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::invalid("need k >= 2"));
    }
    let k = k as f64;
    Ok(1.0 - 4.0 * (k.ln() / k).sqrt())
}

/// `1/e − 3(ln ln n)² / (e·√ln n)`.
pub fn success_bound_1sec(n: usize) -> Result<f64> {
    if n < 16 {
        return Err(Error::invalid("need n >= 16"));
    }
    Ok(success_bound_from_ln((n as f64).ln()))
}

/// The one-secretary bound as a function of `ln n`. The correction term
/// peaks at `ln ln n = 4`, so the bound only climbs toward `1/e` once
/// `n > e^{e^4}`, far past any `usize`.
fn success_bound_from_ln(ln: f64) -> f64 {
    1.0 / E - 3.0 * ln.ln().powi(2) / (E * ln.sqrt())
}

/// `1/e + 1/ℓ − (1/(e·k))(1 − 1/e)^k`, the measure bound for the positive
/// event behind the one-secretary derandomization.
pub fn positive_lb_1sec(ell: usize, k: usize) -> Result<f64> {
    if k < 2 || ell <= k {
        return Err(Error::invalid("need ell > k >= 2"));
    }
    let kf = k as f64;
    Ok(1.0 / E + 1.0 / ell as f64 - (1.0 - 1.0 / E).powi(k as i32) / (E * kf))
}

/// A named bound value with the inputs that produced it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    /// Formula name.
    pub name: String,
    /// The finite value.
    pub value: f64,
    /// Echo of the inputs.
    pub inputs: BTreeMap<String, f64>,
}

impl BoundReport {
    /// Builds a report, rejecting non-finite values.
    pub fn new(name: &str, value: f64, inputs: &[(&str, f64)]) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::invariant(format!("bound {name} is not finite")));
        }
        Ok(Self {
            name: name.to_string(),
            value,
            inputs: inputs.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        })
    }
}

/// Every applicable bound for an instance with `n` items, budget `k` and
/// low dimension `ell`; formulas whose preconditions fail are skipped.
pub fn bound_reports(n: usize, k: usize, ell: usize) -> Result<Vec<BoundReport>> {
    let (nf, kf, lf) = (n as f64, k as f64, ell as f64);
    let mut out = Vec::new();
    if let Ok(v) = opt_n_approx(n) {
        out.push(BoundReport::new("opt_n_approx", v, &[("n", nf)])?);
    }
    if let Ok(m) = f_argmax(n) {
        out.push(BoundReport::new("classic_optimum", f_value(n, m)?, &[("n", nf), ("m", m as f64)])?);
    }
    if let Ok(v) = ratio_bound_ksec(k) {
        out.push(BoundReport::new("ratio_bound_ksec", v, &[("k", kf)])?);
    }
    if let Ok(v) = success_bound_1sec(n) {
        out.push(BoundReport::new("success_bound_1sec", v, &[("n", nf)])?);
    }
    if let Ok(v) = positive_lb_1sec(ell, k) {
        out.push(BoundReport::new("positive_lb_1sec", v, &[("ell", lf), ("k", kf)])?);
    }
    Ok(out)
}
