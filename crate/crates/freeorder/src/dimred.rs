//! Reed–Solomon dimension reduction: `q` maps `[n] → {0..q−1}` with at most
//! `d` agreements between any two indices and balanced preimages, and the
//! lifting of a permutation multiset over `[q]` to one over `[n]`.
//!
//! Row `m` of the family is a polynomial `f_m` over `GF(q)`. Rows come in
//! blocks of `q`: block `j` (from 0) takes the `(j+1)`-th free-term-zero
//! polynomial `g` of degree at most `d` in lexicographic coefficient order
//! `(a_1, …, a_d)` and adds every constant, so `f_{qj+i} = g + (i−1)`. The
//! map `h_{q'}` evaluates each row at `x = q'`. Distinct polynomials of degree
//! at most `d` agree on at most `d` points, and each block takes every value
//! once per column.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::perm_core::{compose_block_zero_based, parse_header, PermutationMultiset};

/// Whether `q` is prime (trial division).
pub fn is_prime(q: usize) -> bool {
    q >= 2 && (2..).take_while(|d| d * d <= q).all(|d| !q.is_multiple_of(d))
}

/// The evaluation matrix of the family: `n` rows, `q` columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReductionFamily {
    n: usize,
    q: usize,
    d: usize,
    table: Vec<u32>,
}

impl ReductionFamily {
    /// Wraps an explicit table (row-major, `n × q`, values below `q`)
    /// without checking the family's invariants; see [`verify_family`].
    pub fn from_table(n: usize, q: usize, d: usize, table: Vec<u32>) -> Result<Self> {
        if table.len() != n * q {
            return Err(Error::invalid(format!("table has {} entries, expected {}", table.len(), n * q)));
        }
        if let Some(v) = table.iter().find(|&&v| v as usize >= q) {
            return Err(Error::invalid(format!("table value {v} outside 0..{q}")));
        }
        Ok(Self { n, q, d, table })
    }

    /// Domain size `n`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Field size and number of maps `q`.
    pub fn q(&self) -> usize {
        self.q
    }

    /// Polynomial degree bound `d`.
    pub fn d(&self) -> usize {
        self.d
    }

    /// `h_{col}(i)` for `i ∈ 1..=n`.
    pub fn h(&self, col: usize, i: usize) -> u32 {
        self.table[(i - 1) * self.q + col]
    }

    /// The whole map `h_{col}` as `[h(1), …, h(n)]`.
    pub fn column(&self, col: usize) -> Vec<u32> {
        (1..=self.n).map(|i| self.h(col, i)).collect()
    }

    /// Writes the `RSFAM 1` CSV format.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "RSFAM 1 n={} q={} d={}", self.n, self.q, self.d)?;
        for row in self.table.chunks(self.q) {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Reads the `RSFAM 1` CSV format.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::parse("empty RSFAM file"))??;
        let dims = parse_header(&header, "RSFAM", &["n", "q", "d"])?;
        let (n, q, d) = (dims[0], dims[1], dims[2]);
        let mut table = Vec::with_capacity(n * q);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<u32> = line
                .split(',')
                .map(|v| v.trim().parse().map_err(|_| Error::parse(format!("bad RSFAM entry `{v}`"))))
                .collect::<Result<_>>()?;
            if row.len() != q {
                return Err(Error::parse(format!("RSFAM row has {} entries, expected {q}", row.len())));
            }
            table.extend(row);
        }
        Self::from_table(n, q, d, table).map_err(|e| Error::parse(e.to_string()))
    }
}

/// Builds the family for `n` indices over `GF(q)` with degree bound `d`.
pub fn build_family(n: usize, q: usize, d: usize) -> Result<ReductionFamily> {
    if !is_prime(q) {
        return Err(Error::invalid(format!("q={q} is not prime")));
    }
    if d == 0 || d >= q {
        return Err(Error::invalid(format!("degree d={d} must satisfy 1 <= d < q={q}")));
    }
    if n == 0 || (q as u128).saturating_pow(d as u32 + 1) < n as u128 {
        return Err(Error::invalid(format!("q^(d+1) = {q}^{} is below n={n}", d + 1)));
    }
    let mut table = Vec::with_capacity(n * q);
    for m in 0..n {
        let (block, shift) = (m / q, (m % q) as u64);
        // Coefficients a_1..a_d are the base-q digits of the block index,
        // a_1 most significant.
        let mut coeffs = vec![0u64; d];
        let mut rest = block;
        for c in coeffs.iter_mut().rev() {
            *c = (rest % q) as u64;
            rest /= q;
        }
        for x in 0..q as u64 {
            // Horner on a_1 x + a_2 x² + … + a_d x^d, then add the constant.
            let mut acc = 0u64;
            for &a in coeffs.iter().rev() {
                acc = (acc + a) * x % q as u64;
            }
            table.push(((acc + shift) % q as u64) as u32);
        }
    }
    Ok(ReductionFamily { n, q, d, table })
}

/// Outcome of [`verify_family`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FamilyReport {
    /// Largest number of maps on which two distinct indices collide.
    pub max_collisions: usize,
    /// Smallest preimage size over all maps and values.
    pub preimage_min: usize,
    /// Largest preimage size over all maps and values.
    pub preimage_max: usize,
}

impl FamilyReport {
    /// Whether the report meets the collision bound `d` and the balance
    /// condition `{⌊n/q⌋, ⌊n/q⌋+1}` for the family's parameters.
    pub fn satisfies(&self, fam: &ReductionFamily) -> bool {
        let low = fam.n / fam.q;
        self.max_collisions <= fam.d && self.preimage_min >= low && self.preimage_max <= low + 1
    }
}

/// Exhaustive collision and preimage scan in `O(n²)` time and `O(nq)` space.
pub fn verify_family(fam: &ReductionFamily) -> FamilyReport {
    let (n, q) = (fam.n, fam.q);
    let mut preimages = vec![vec![Vec::new(); q]; q];
    for i in 1..=n {
        for (col, slots) in preimages.iter_mut().enumerate() {
            slots[fam.h(col, i) as usize].push(i);
        }
    }
    let preimage_min = preimages.iter().flatten().map(Vec::len).min().unwrap_or(0);
    let preimage_max = preimages.iter().flatten().map(Vec::len).max().unwrap_or(0);
    let mut hits = vec![0usize; n + 1];
    let mut max_collisions = 0;
    for i in 1..=n {
        for (col, slots) in preimages.iter().enumerate() {
            for &j in &slots[fam.h(col, i) as usize] {
                if j > i {
                    hits[j] += 1;
                }
            }
        }
        for h in &mut hits[i + 1..] {
            max_collisions = max_collisions.max(*h);
            *h = 0;
        }
    }
    FamilyReport { max_collisions, preimage_min, preimage_max }
}

/// [`verify_family`] turned into an error when an invariant fails.
pub fn check_family(fam: &ReductionFamily) -> Result<FamilyReport> {
    let report = verify_family(fam);
    if !report.satisfies(fam) {
        return Err(Error::invariant(format!(
            "family (n={}, q={}, d={}) violates its bounds: {report:?}",
            fam.n, fam.q, fam.d
        )));
    }
    Ok(report)
}

/// `q` = the smallest prime `≥ ell_target` and `d` = the smallest degree with
/// `q^{d+1} ≥ n`, which must not exceed `⌊√q⌋`.
pub fn choose_parameters(n: usize, ell_target: usize) -> Result<(usize, usize)> {
    if ell_target < 2 {
        return Err(Error::invalid("target dimension must be at least 2"));
    }
    let q = (ell_target..).find(|&q| is_prime(q)).expect("primes are unbounded");
    let mut d = 1;
    while (q as u128).saturating_pow(d as u32 + 1) < n as u128 {
        d += 1;
    }
    let root = (1..).take_while(|r| r * r <= q).last().unwrap_or(1);
    if d >= q || d > root {
        return Err(Error::invalid(format!(
            "n={n} needs degree {d} over GF({q}), above the admissible {}; raise the target dimension",
            root.min(q - 1)
        )));
    }
    Ok((q, d))
}

/// The warning for lifts outside the regime `q² < n/q` where the lifted
/// success guarantee applies.
pub fn lifting_warning(q: usize, n: usize) -> Option<String> {
    (q * q * q >= n).then(|| format!("q^2 = {} is not below n/q = {:.2}; lifted guarantees may not hold", q * q, n as f64 / q as f64))
}

/// `{π ∘ h : π ∈ L_low, h ∈ family}` with `π` the outer loop, each block
/// arranged in ascending element order.
pub fn lift_multiset(low: &PermutationMultiset, fam: &ReductionFamily, n: usize) -> Result<PermutationMultiset> {
    if low.n() != fam.q || fam.n != n {
        return Err(Error::invalid(format!(
            "cannot lift a multiset over [{}] with a family [{}] -> [{}] to n={n}",
            low.n(),
            fam.n,
            fam.q
        )));
    }
    let columns: Vec<Vec<u32>> = (0..fam.q).map(|c| fam.column(c)).collect();
    let mut entries = Vec::with_capacity(low.len() * fam.q);
    for pi in low.entries() {
        for col in &columns {
            entries.push(compose_block_zero_based(pi, col, n)?);
        }
    }
    PermutationMultiset::new(n, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perm_core::Permutation;

    #[test]
    fn primality() {
        let primes: Vec<usize> = (0..30).filter(|&q| is_prime(q)).collect();
        assert_eq!(primes, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
    }

    #[test]
    fn smallest_family_by_hand() {
        let fam = build_family(4, 2, 1).unwrap();
        assert_eq!(fam.column(0), vec![0, 1, 0, 1]);
        assert_eq!(fam.column(1), vec![0, 1, 1, 0]);
        assert_eq!(verify_family(&fam), FamilyReport { max_collisions: 1, preimage_min: 2, preimage_max: 2 });
    }

    #[test]
    fn parameter_errors() {
        assert!(build_family(4, 4, 1).is_err());
        assert!(build_family(10, 3, 1).is_err());
        assert!(build_family(4, 3, 3).is_err());
        assert_eq!(choose_parameters(100, 11).unwrap(), (11, 1));
        assert_eq!(choose_parameters(1_000_000, 61).unwrap(), (61, 3));
        assert_eq!(choose_parameters(100, 10).unwrap(), (11, 1));
        assert!(choose_parameters(5, 2).is_err());
    }

    #[test]
    fn lift_by_hand() {
        let fam = build_family(4, 2, 1).unwrap();
        let low = PermutationMultiset::new(2, vec![Permutation::identity(2)]).unwrap();
        let lifted = lift_multiset(&low, &fam, 4).unwrap();
        let got: Vec<Vec<usize>> = lifted.entries().iter().map(|p| p.to_vec()).collect();
        assert_eq!(got, vec![vec![1, 3, 2, 4], vec![1, 4, 2, 3]]);
    }

    #[test]
    fn csv_round_trip_and_mutation() {
        let fam = build_family(100, 11, 1).unwrap();
        let mut buf = Vec::new();
        fam.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"RSFAM 1 n=100 q=11 d=1\n"));
        let back = ReductionFamily::read_csv(&buf[..]).unwrap();
        assert_eq!(back, fam);
        let mut table = back.table.clone();
        table[0] = (table[0] + 1) % 11;
        let broken = ReductionFamily::from_table(100, 11, 1, table).unwrap();
        assert!(check_family(&broken).is_err());
    }

    #[test]
    fn warning_threshold() {
        assert!(lifting_warning(11, 100).is_some());
        assert!(lifting_warning(5, 1000).is_none());
    }
}
