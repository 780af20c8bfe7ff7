//! Permutations of `[n] = {1..n}`, partially fixed prefixes, finite-support
//! order distributions and their entropy, seeded sampling, the index-variable
//! generation process, and block composition `π∘g`.
//!
//! Conventions: everything is 1-based. A [`Permutation`] is an arrival order:
//! position `p` holds the element `π(p)`, and `π⁻¹(v)` is the arrival time of
//! element `v`.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// The deterministic generator used everywhere a seed is accepted.
///
/// ChaCha with 8 rounds, seeded through `SeedableRng::seed_from_u64`. The
/// contract is bit-reproducibility for a given seed and crate version.
pub type SeededRng = ChaCha8Rng;

/// Builds the crate's generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives the seed of an independent sub-stream (for example one Monte-Carlo
/// trial) from a master seed and a stream index.
///
/// Split rule: `splitmix64(seed ^ splitmix64(index))`. Every trial thereby owns
/// its own generator, so results do not depend on how trials are scheduled
/// across threads.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A bijection on `{1..n}` read as an arrival order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    order: Vec<u32>,
}

impl Permutation {
    /// Validates `order` (1-based values) and wraps it.
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        if n == 0 {
            return Err(Error::invalid("permutation must have n >= 1"));
        }
        let mut seen = vec![false; n];
        for &v in &order {
            if v == 0 || v > n || seen[v - 1] {
                return Err(Error::invalid(format!(
                    "order is not a bijection on 1..{n} (offending value {v})"
                )));
            }
            seen[v - 1] = true;
        }
        Ok(Self {
            order: order.into_iter().map(|v| v as u32).collect(),
        })
    }

    pub(crate) fn from_u32_unchecked(order: Vec<u32>) -> Self {
        debug_assert!(Self::new(order.iter().map(|&v| v as usize).collect()).is_ok());
        Self { order }
    }

    /// The identity order `(1, 2, …, n)`.
    pub fn identity(n: usize) -> Self {
        Self {
            order: (1..=n as u32).collect(),
        }
    }

    /// Ground-set size.
    pub fn n(&self) -> usize {
        self.order.len()
    }

    /// `π(p)` for a 1-based position `p`.
    pub fn at(&self, p: usize) -> usize {
        self.order[p - 1] as usize
    }

    /// The order as a slice of 1-based elements.
    pub fn as_slice(&self) -> &[u32] {
        &self.order
    }

    /// The order as owned `usize` values.
    pub fn to_vec(&self) -> Vec<usize> {
        self.order.iter().map(|&v| v as usize).collect()
    }

    /// Inverse table: entry `v-1` holds the 1-based position `π⁻¹(v)`.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0usize; self.n()];
        for (p, &v) in self.order.iter().enumerate() {
            inv[v as usize - 1] = p + 1;
        }
        inv
    }

    /// `π⁻¹(v)`, the arrival time of element `v`. Linear time; use
    /// [`Permutation::inverse`] for repeated lookups.
    pub fn position_of(&self, v: usize) -> usize {
        self.order
            .iter()
            .position(|&x| x as usize == v)
            .map(|p| p + 1)
            .expect("element outside 1..n")
    }

    /// The order reversed.
    pub fn reversed(&self) -> Self {
        let mut order = self.order.clone();
        order.reverse();
        Self { order }
    }
}

/// A permutation whose first `r` positions are fixed and whose remaining
/// positions are a uniformly random arrangement of the unused elements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemiRandomPermutation {
    n: usize,
    prefix: Vec<usize>,
}

impl SemiRandomPermutation {
    /// Validates that `prefix` holds distinct values of `1..n`.
    pub fn new(n: usize, prefix: Vec<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n must be >= 1"));
        }
        if prefix.len() > n {
            return Err(Error::invalid("prefix longer than n"));
        }
        let mut seen = vec![false; n];
        for &v in &prefix {
            if v == 0 || v > n || seen[v - 1] {
                return Err(Error::invalid(format!("prefix value {v} repeated or outside 1..{n}")));
            }
            seen[v - 1] = true;
        }
        Ok(Self { n, prefix })
    }

    /// Ground-set size.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of fixed positions.
    pub fn r(&self) -> usize {
        self.prefix.len()
    }

    /// The fixed values `π(1..r)`.
    pub fn prefix(&self) -> &[usize] {
        &self.prefix
    }

    /// Extends the prefix by one element.
    pub fn extended(&self, tau: usize) -> Result<Self> {
        let mut prefix = self.prefix.clone();
        prefix.push(tau);
        Self::new(self.n, prefix)
    }

    /// Elements not yet placed, ascending.
    pub fn unused(&self) -> Vec<usize> {
        let mut seen = vec![false; self.n];
        for &v in &self.prefix {
            seen[v - 1] = true;
        }
        (1..=self.n).filter(|&v| !seen[v - 1]).collect()
    }

    /// The full permutation once every position is fixed.
    pub fn to_permutation(&self) -> Option<Permutation> {
        (self.r() == self.n).then(|| Permutation::new(self.prefix.clone()).expect("validated prefix"))
    }

    /// 1-based position of `v` in the prefix, if fixed.
    pub fn position_of(&self, v: usize) -> Option<usize> {
        self.prefix.iter().position(|&x| x == v).map(|p| p + 1)
    }
}

/// A finite multiset of permutations; the induced distribution is uniform
/// over entries, so duplicates carry proportionally more mass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationMultiset {
    n: usize,
    entries: Vec<Permutation>,
}

impl PermutationMultiset {
    /// Wraps `entries`, checking they share the ground-set size `n`.
    pub fn new(n: usize, entries: Vec<Permutation>) -> Result<Self> {
        if let Some(bad) = entries.iter().find(|p| p.n() != n) {
            return Err(Error::invalid(format!(
                "entry over [{}] in a multiset over [{n}]",
                bad.n()
            )));
        }
        Ok(Self { n, entries })
    }

    /// Ground-set size.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of entries `ℓ`, counting duplicates.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// True when there are no entries.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The entries in construction order.
    pub fn entries(&self) -> &[Permutation] {
        &self.entries
    }

    /// Shannon entropy in bits of the uniform distribution over entries.
    pub fn entropy_bits(&self) -> Result<f64> {
        entropy_bits(self)
    }

    /// Draws one entry uniformly using the seeded generator.
    pub fn sample(&self, seed: u64) -> Result<&Permutation> {
        sample(self, seed)
    }

    /// Draws one entry uniformly from an existing generator.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<&Permutation> {
        if self.entries.is_empty() {
            return Err(Error::invalid("empty distribution"));
        }
        Ok(&self.entries[rng.random_range(0..self.entries.len())])
    }

    /// Writes the PERMSET v1 text format.
    pub fn write_permset<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "PERMSET 1 n={} count={}", self.n, self.entries.len())?;
        for p in &self.entries {
            let line: Vec<String> = p.as_slice().iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Parses the PERMSET v1 text format, rejecting non-bijective lines.
    pub fn read_permset<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse("missing PERMSET header"))??;
        let fields = parse_header(&header, "PERMSET", &["n", "count"])?;
        let (n, count) = (fields[0], fields[1]);
        let mut entries = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let order = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(format!("line {}: {e}", i + 2)))?;
            if order.len() != n {
                return Err(Error::parse(format!("line {}: expected {n} values", i + 2)));
            }
            let p = Permutation::new(order)
                .map_err(|e| Error::parse(format!("line {}: {e}", i + 2)))?;
            entries.push(p);
        }
        if entries.len() != count {
            return Err(Error::parse(format!(
                "header announces {count} entries, found {}",
                entries.len()
            )));
        }
        Self::new(n, entries)
    }
}

/// Parses `TAG <version> key=value …` headers shared by the text formats and
/// returns the values of `keys` in order.
pub(crate) fn parse_header(header: &str, tag: &str, keys: &[&str]) -> Result<Vec<usize>> {
    let mut parts = header.split_whitespace();
    if parts.next() != Some(tag) {
        return Err(Error::parse(format!("expected `{tag}` header, got `{header}`")));
    }
    if parts.next() != Some("1") {
        return Err(Error::parse(format!("unsupported {tag} version in `{header}`")));
    }
    let mut map = HashMap::new();
    for kv in parts {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::parse(format!("malformed header field `{kv}`")))?;
        let v: usize = v
            .parse()
            .map_err(|_| Error::parse(format!("header field `{kv}` is not an integer")))?;
        map.insert(k.to_string(), v);
    }
    keys.iter()
        .map(|k| {
            map.get(*k)
                .copied()
                .ok_or_else(|| Error::parse(format!("header lacks `{k}=`")))
        })
        .collect()
}

/// Shannon entropy (bits) of the uniform distribution over `ms`'s entries.
///
/// Duplicates are merged, so the result is `log₂ ℓ` exactly when all entries
/// are distinct and smaller otherwise.
pub fn entropy_bits(ms: &PermutationMultiset) -> Result<f64> {
    if ms.is_empty() {
        return Err(Error::invalid("empty distribution"));
    }
    let mut counts: HashMap<&[u32], usize> = HashMap::new();
    for p in ms.entries() {
        *counts.entry(p.as_slice()).or_insert(0) += 1;
    }
    let total = ms.len() as f64;
    // Summing in a canonical order keeps the float result independent of
    // hash-map iteration order.
    let mut multiplicities: Vec<usize> = counts.into_values().collect();
    multiplicities.sort_unstable();
    let h = multiplicities
        .into_iter()
        .map(|c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

/// Draws `entries[i]` with `i` uniform on `0..ℓ` from the generator seeded by
/// `seed`.
pub fn sample(ms: &PermutationMultiset, seed: u64) -> Result<&Permutation> {
    ms.sample_with(&mut seeded_rng(seed))
}

/// Realizes the index-variable process: `X¹` uniform on `1..n` selects `π(1)`
/// as the `X¹`-th smallest element, `X²` uniform on `1..n−1` selects `π(2)`
/// as the `X²`-th smallest remaining element, and so on.
pub fn sequential_draw(n: usize, seed: u64) -> Result<Permutation> {
    sequential_draw_with(n, &mut seeded_rng(seed))
}

/// [`sequential_draw`] driven by an existing generator.
pub fn sequential_draw_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Permutation> {
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let mut remaining = RankTree::full(n);
    let order = (0..n)
        .map(|i| {
            let x = rng.random_range(1..=n - i);
            remaining.take_kth(x) as u32
        })
        .collect();
    Ok(Permutation::from_u32_unchecked(order))
}

/// The deterministic core of [`sequential_draw`]: maps an index vector
/// `(X¹,…,Xⁿ)` with `Xⁱ ∈ 1..=n−i+1` to its permutation.
pub fn permutation_from_indices(n: usize, indices: &[usize]) -> Result<Permutation> {
    if n == 0 || indices.len() != n {
        return Err(Error::invalid("index vector must have length n >= 1"));
    }
    let mut remaining = RankTree::full(n);
    let mut order = Vec::with_capacity(n);
    for (i, &x) in indices.iter().enumerate() {
        if x == 0 || x > n - i {
            return Err(Error::invalid(format!("index {x} outside 1..={}", n - i)));
        }
        order.push(remaining.take_kth(x) as u32);
    }
    Ok(Permutation::from_u32_unchecked(order))
}

/// Fenwick tree over `1..n` supporting "remove the k-th smallest present
/// element" in `O(log n)`.
struct RankTree {
    tree: Vec<usize>,
    top: usize,
}

impl RankTree {
    fn full(n: usize) -> Self {
        let mut tree = vec![0usize; n + 1];
        for i in 1..=n {
            tree[i] += 1;
            let parent = i + (i & i.wrapping_neg());
            if parent <= n {
                tree[parent] += tree[i];
            }
        }
        let top = if n == 0 { 0 } else { 1 << (usize::BITS - 1 - n.leading_zeros()) };
        Self { tree, top }
    }

    fn take_kth(&mut self, mut k: usize) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0;
        let mut step = self.top;
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] < k {
                pos = next;
                k -= self.tree[next];
            }
            step >>= 1;
        }
        let found = pos + 1;
        let mut i = found;
        while i <= n {
            self.tree[i] -= 1;
            i += i & i.wrapping_neg();
        }
        found
    }
}

/// Iterates over all `n!` permutations of `[n]` in lexicographic order.
pub fn all_permutations(n: usize) -> AllPermutations {
    AllPermutations { next: (n > 0).then(|| (1..=n as u32).collect()) }
}

/// Iterator returned by [`all_permutations`].
pub struct AllPermutations {
    next: Option<Vec<u32>>,
}

impl Iterator for AllPermutations {
    type Item = Permutation;

    fn next(&mut self) -> Option<Permutation> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        if let Some(i) = (1..succ.len()).rev().find(|&i| succ[i - 1] < succ[i]) {
            let j = (i..succ.len()).rev().find(|&j| succ[j] > succ[i - 1]).expect("pivot has a successor");
            succ.swap(i - 1, j);
            succ[i..].reverse();
            self.next = Some(succ);
        }
        Some(Permutation::from_u32_unchecked(current))
    }
}

/// Lifts an order over `[ℓ]` to `[n]` through the block map `g: [n]→[ℓ]`.
///
/// The output lists the blocks `g⁻¹(π(1)), g⁻¹(π(2)), …` in turn, each in
/// ascending element order, so `π⁻¹(g(i)) < π⁻¹(g(j))` implies that `i`
/// arrives before `j`. `g` is given 1-based (`g[i-1] ∈ 1..=ℓ`).
pub fn compose_block(pi: &Permutation, g: &[usize], n: usize) -> Result<Permutation> {
    if g.len() != n {
        return Err(Error::invalid(format!("block map has {} entries, expected {n}", g.len())));
    }
    let ell = pi.n();
    let mut blocks: Vec<Vec<u32>> = vec![Vec::new(); ell];
    for (i, &b) in g.iter().enumerate() {
        if b == 0 || b > ell {
            return Err(Error::invalid(format!("block map value {b} outside 1..={ell}")));
        }
        blocks[b - 1].push(i as u32 + 1);
    }
    let mut order = Vec::with_capacity(n);
    for &b in pi.as_slice() {
        order.extend_from_slice(&blocks[b as usize - 1]);
    }
    Ok(Permutation::from_u32_unchecked(order))
}

/// [`compose_block`] for a map with codomain `0..ℓ` (as produced by the
/// Reed–Solomon family), shifting each value by one.
pub fn compose_block_zero_based(pi: &Permutation, g: &[u32], n: usize) -> Result<Permutation> {
    let shifted: Vec<usize> = g.iter().map(|&v| v as usize + 1).collect();
    compose_block(pi, &shifted, n)
}
