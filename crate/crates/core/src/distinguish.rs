//! Reduced density matrices, optimal discrimination of two states on a
//! subsystem, and the largest partition of the cluster into subsystems that
//! each discriminate the two components.

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::SpinCluster;
use crate::eigen::QuantumState;
use crate::error::{Error, Result};
use crate::num::{Complex, Real as _, Scalar};

/// Largest subsystem dimension whose density matrix is formed explicitly.
pub const DEFAULT_SUBSET_CAP: usize = 4096;

/// Largest cluster for the partition search.
pub const MAX_PARTITION_SITES: usize = 20;

/// Nonempty set of site indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubsetMask(u64);

impl SubsetMask {
    pub fn from_bits(bits: u64) -> Result<Self> {
        if bits == 0 {
            return Err(Error::InvalidArgument("empty subset".into()));
        }
        Ok(SubsetMask(bits))
    }

    pub fn from_sites(sites: &[usize]) -> Result<Self> {
        let mut bits = 0u64;
        for &s in sites {
            if s >= 63 {
                return Err(Error::InvalidArgument(format!("site {s} out of mask range")));
            }
            bits |= 1 << s;
        }
        SubsetMask::from_bits(bits)
    }

    pub fn full(n: usize) -> Self {
        SubsetMask(if n >= 64 { u64::MAX } else { (1u64 << n) - 1 })
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, site: usize) -> bool {
        site < 64 && self.0 >> site & 1 == 1
    }

    pub fn is_subset_of(self, other: SubsetMask) -> bool {
        self.0 & !other.0 == 0
    }

    /// Ascending site indices.
    pub fn sites(self) -> Vec<usize> {
        (0..64).filter(|&i| self.contains(i)).collect()
    }

    fn check(self, cluster: &SpinCluster) -> Result<()> {
        if self.0 == 0 || (cluster.len() < 64 && self.0 >> cluster.len() != 0) {
            return Err(Error::InvalidArgument(format!(
                "subset {self} is not a nonempty subset of the {} sites",
                cluster.len()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.sites().iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", s.join(","))
    }
}

impl Serialize for SubsetMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.sites().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SubsetMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let sites = Vec::<usize>::deserialize(d)?;
        SubsetMask::from_sites(&sites).map_err(serde::de::Error::custom)
    }
}

/// Product basis of a subsystem: mixed radix over the subset's sites in
/// ascending order, first site most significant, digit `m + s`.
struct SubsetLayout {
    sites: Vec<usize>,
    /// Stride of each subset site inside the full cluster key.
    cluster_strides: Vec<u64>,
    radices: Vec<u64>,
    dim: usize,
    /// Block and position within the block of every subset index.
    block_of: Vec<(usize, usize)>,
    /// Doubled subset magnetization and member subset indices of each block.
    blocks: Vec<(i32, Vec<usize>)>,
}

impl SubsetLayout {
    fn new(cluster: &SpinCluster, subset: SubsetMask, cap: usize) -> Result<Self> {
        subset.check(cluster)?;
        let sites = subset.sites();
        let dim: u128 = sites.iter().map(|&i| cluster.radix(i) as u128).product();
        if dim > cap as u128 {
            return Err(Error::SubsetTooLarge { dimension: dim, cap });
        }
        let dim = dim as usize;
        let radices: Vec<u64> = sites.iter().map(|&i| cluster.radix(i)).collect();
        let cluster_strides = sites.iter().map(|&i| cluster.stride(i)).collect();
        let spins2: Vec<i32> = sites.iter().map(|&i| cluster.spin(i).twice()).collect();
        let mut by_m: Vec<(i32, Vec<usize>)> = Vec::new();
        let mut block_of = vec![(0, 0); dim];
        let mut m_of = Vec::with_capacity(dim);
        for a in 0..dim {
            let mut rest = a as u64;
            let mut m2 = 0;
            for k in (0..sites.len()).rev() {
                let d = rest % radices[k];
                rest /= radices[k];
                m2 += 2 * d as i32 - spins2[k];
            }
            m_of.push(m2);
        }
        let mut ms: Vec<i32> = m_of.clone();
        ms.sort_unstable();
        ms.dedup();
        for &m in &ms {
            by_m.push((m, Vec::new()));
        }
        for (a, &m) in m_of.iter().enumerate() {
            let b = ms.binary_search(&m).unwrap();
            block_of[a] = (b, by_m[b].1.len());
            by_m[b].1.push(a);
        }
        Ok(SubsetLayout {
            sites,
            cluster_strides,
            radices,
            dim,
            block_of,
            blocks: by_m,
        })
    }

    /// Subset index and complement key of a cluster key.
    #[inline]
    fn split(&self, cluster: &SpinCluster, key: u64) -> (usize, u64) {
        let mut a = 0u64;
        let mut comp = key;
        for (k, &site) in self.sites.iter().enumerate() {
            let d = cluster.digit(key, site);
            a = a * self.radices[k] + d;
            comp -= d * self.cluster_strides[k];
        }
        (a as usize, comp)
    }
}

/// Density matrix of a subsystem, block diagonal in the subsystem's
/// magnetization.
#[derive(Clone, Debug)]
pub struct ReducedDensityMatrix<T: Scalar> {
    subset: SubsetMask,
    dim: usize,
    /// `(2·m, subset indices, block)`; blocks with no weight are kept so two
    /// matrices on the same subset share the layout.
    blocks: Vec<(i32, Vec<usize>, DMatrix<T>)>,
}

impl<T: Scalar> ReducedDensityMatrix<T> {
    pub fn subset(&self) -> SubsetMask {
        self.subset
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trace(&self) -> f64 {
        self.blocks
            .iter()
            .map(|(_, _, b)| b.diagonal().iter().map(|x| x.real().to_f64_lossy()).sum::<f64>())
            .sum()
    }

    /// Dense matrix in the subset product basis.
    pub fn to_dense(&self) -> DMatrix<T> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (_, idx, b) in &self.blocks {
            for (r, &i) in idx.iter().enumerate() {
                for (c, &j) in idx.iter().enumerate() {
                    out[(i, j)] = b[(r, c)];
                }
            }
        }
        out
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .blocks
            .iter()
            .flat_map(|(_, _, b)| hermitian_eigenvalues(b))
            .collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }
}

fn hermitian_eigenvalues<T: Scalar>(m: &DMatrix<T>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    if m.nrows() == 1 {
        return vec![m[(0, 0)].real().to_f64_lossy()];
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .map(|x| x.to_f64_lossy())
        .collect()
}

/// `Σ |λ_i|` of a Hermitian matrix.
pub fn trace_norm<T: Scalar>(m: &DMatrix<T>) -> f64 {
    hermitian_eigenvalues(m).iter().map(|x| x.abs()).sum()
}

/// Partial trace over the complement of `subset`.
pub fn reduced_density_matrix<T: Scalar>(
    psi: &QuantumState<T>,
    subset: SubsetMask,
    cap: usize,
) -> Result<ReducedDensityMatrix<T>> {
    let cluster = psi.cluster();
    let layout = SubsetLayout::new(cluster, subset, cap)?;
    Ok(rdm_with_layout(psi, subset, &layout))
}

fn rdm_with_layout<T: Scalar>(
    psi: &QuantumState<T>,
    subset: SubsetMask,
    layout: &SubsetLayout,
) -> ReducedDensityMatrix<T> {
    let cluster = psi.cluster();
    let basis = psi.basis();
    let amps = psi.amplitudes();
    let mut entries: Vec<(u64, u32, usize)> = (0..basis.len())
        .filter(|&k| amps[k] != T::zero())
        .map(|k| {
            let (a, comp) = layout.split(cluster, basis.key(k));
            (comp, a as u32, k)
        })
        .collect();
    entries.par_sort_unstable_by_key(|e| (e.0, e.1));

    let mut blocks: Vec<(i32, Vec<usize>, DMatrix<T>)> = layout
        .blocks
        .iter()
        .map(|(m, idx)| (*m, idx.clone(), DMatrix::zeros(idx.len(), idx.len())))
        .collect();
    // within one complement configuration every subset index has the same
    // magnetization, so a group fills a single block
    let mut start = 0;
    while start < entries.len() {
        let mut end = start + 1;
        while end < entries.len() && entries[end].0 == entries[start].0 {
            end += 1;
        }
        let group = &entries[start..end];
        let (blk, _) = layout.block_of[group[0].1 as usize];
        let b = &mut blocks[blk].2;
        for x in group {
            let (_, r) = layout.block_of[x.1 as usize];
            let ar = amps[x.2];
            for y in group {
                let (_, c) = layout.block_of[y.1 as usize];
                b[(r, c)] += ar * amps[y.2].conjugate();
            }
        }
        start = end;
    }
    ReducedDensityMatrix {
        subset,
        dim: layout.dim,
        blocks,
    }
}

/// Optimal success probability for telling `psi1` from `psi2` by a
/// measurement on `subset`: `½ + ¼‖ρ₁ - ρ₂‖₁`.
pub fn discrimination_probability<T: Scalar>(
    psi1: &QuantumState<T>,
    psi2: &QuantumState<T>,
    subset: SubsetMask,
    cap: usize,
) -> Result<f64> {
    same_cluster(psi1, psi2)?;
    let layout = SubsetLayout::new(psi1.cluster(), subset, cap)?;
    Ok(probability_with_layout(psi1, psi2, subset, &layout))
}

fn probability_with_layout<T: Scalar>(
    psi1: &QuantumState<T>,
    psi2: &QuantumState<T>,
    subset: SubsetMask,
    layout: &SubsetLayout,
) -> f64 {
    let r1 = rdm_with_layout(psi1, subset, layout);
    let r2 = rdm_with_layout(psi2, subset, layout);
    let norm: f64 = r1
        .blocks
        .iter()
        .zip(&r2.blocks)
        .map(|((_, _, a), (_, _, b))| trace_norm(&(a - b)))
        .sum();
    (0.5 + 0.25 * norm).clamp(0.5, 1.0)
}

/// Whole-cluster probability of two pure states: `½ + ½√(1 - |⟨ψ₁|ψ₂⟩|²)`.
pub fn full_cluster_probability<T: Scalar>(psi1: &QuantumState<T>, psi2: &QuantumState<T>) -> Result<f64> {
    same_cluster(psi1, psi2)?;
    let ov = if psi1.m() == psi2.m() {
        psi1.overlap(psi2).modulus_squared().to_f64_lossy()
    } else {
        0.0
    };
    Ok(0.5 + 0.5 * (1.0 - ov).max(0.0).sqrt())
}

fn same_cluster<T: Scalar>(psi1: &QuantumState<T>, psi2: &QuantumState<T>) -> Result<()> {
    if !psi2.basis().belongs_to(psi1.cluster()) {
        return Err(Error::InvalidArgument("states live on different clusters".into()));
    }
    Ok(())
}

/// Probability of `subset`, using the pure-state formula for the whole
/// cluster.
fn subset_probability<T: Scalar>(
    psi1: &QuantumState<T>,
    psi2: &QuantumState<T>,
    subset: SubsetMask,
    cap: usize,
) -> Result<f64> {
    if subset == SubsetMask::full(psi1.cluster().len()) {
        full_cluster_probability(psi1, psi2)
    } else {
        discrimination_probability(psi1, psi2, subset, cap)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionOptions {
    pub delta: f64,
    pub subset_cap: usize,
    /// Bonds used to choose where leftover sites are absorbed; without them
    /// sites `i` and `i ± 1` are adjacent.
    pub adjacency: Option<Vec<(usize, usize)>>,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions {
            delta: 1e-2,
            subset_cap: DEFAULT_SUBSET_CAP,
            adjacency: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionResult {
    pub parts: Vec<SubsetMask>,
    pub n_parts: usize,
    /// Probability of each part. For parts above the subset cap this is the
    /// probability of the good subset they were grown from, a lower bound.
    pub per_part_probability: Vec<f64>,
    pub per_part_exact: Vec<bool>,
    pub delta: f64,
    pub full_cluster_probability: f64,
    /// Smallest subsets that discriminate on their own.
    pub minimal_good_subsets: Vec<SubsetMask>,
    /// True when some subset above the cap could not be tested and was not
    /// implied good by a smaller one, so the count is a lower bound.
    pub truncated: bool,
    pub subsets_evaluated: usize,
}

/// Next larger integer with the same number of set bits.
fn gosper(x: u64) -> u64 {
    let c = x & x.wrapping_neg();
    let r = x + c;
    (((r ^ x) >> 2) / c) | r
}

/// Largest number of subsystems, each telling `psi1` from `psi2` with
/// probability above `1 - delta`, into which the cluster can be split.
pub fn d_lm<T: Scalar>(
    psi1: &QuantumState<T>,
    psi2: &QuantumState<T>,
    opts: &PartitionOptions,
) -> Result<PartitionResult> {
    same_cluster(psi1, psi2)?;
    let cluster = psi1.cluster();
    let n = cluster.len();
    if n > MAX_PARTITION_SITES {
        return Err(Error::InvalidArgument(format!(
            "partition search supports at most {MAX_PARTITION_SITES} sites, got {n}"
        )));
    }
    if !(opts.delta > 0.0 && opts.delta < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0, 1/2), got {}",
            opts.delta
        )));
    }
    let threshold = 1.0 - opts.delta;
    let full = SubsetMask::full(n);
    let p_full = full_cluster_probability(psi1, psi2)?;
    if p_full <= threshold {
        return Err(Error::Infeasible {
            full_cluster_probability: p_full,
        });
    }

    // minimal good subsets, level by level
    let mut minimal: Vec<SubsetMask> = Vec::new();
    let mut probs: HashMap<SubsetMask, f64> = HashMap::new();
    let mut truncated = false;
    let mut evaluated = 0;
    for k in 1..=n {
        let mut candidates = Vec::new();
        let mut x = (1u64 << k) - 1;
        while x < (1u64 << n) {
            let s = SubsetMask(x);
            if !minimal.iter().any(|g| g.is_subset_of(s)) {
                candidates.push(s);
            }
            x = gosper(x);
        }
        if candidates.is_empty() {
            break;
        }
        let results: Vec<(SubsetMask, Result<f64>)> = candidates
            .par_iter()
            .map(|&s| (s, subset_probability(psi1, psi2, s, opts.subset_cap)))
            .collect();
        for (s, r) in results {
            match r {
                Ok(p) => {
                    evaluated += 1;
                    probs.insert(s, p);
                    if p > threshold {
                        minimal.push(s);
                    }
                }
                Err(Error::SubsetTooLarge { .. }) => truncated = true,
                Err(e) => return Err(e),
            }
        }
    }
    if minimal.is_empty() {
        // the full cluster is good but was not reached through the levels
        minimal.push(full);
        probs.insert(full, p_full);
    }

    let chosen = max_packing(n, &minimal);
    let parts = absorb_leftovers(n, chosen, opts.adjacency.as_deref());

    let mut per_part_probability = Vec::with_capacity(parts.len());
    let mut per_part_exact = Vec::with_capacity(parts.len());
    for (part, seed) in &parts {
        match subset_probability(psi1, psi2, *part, opts.subset_cap) {
            Ok(p) => {
                per_part_probability.push(p);
                per_part_exact.push(true);
            }
            Err(Error::SubsetTooLarge { .. }) => {
                per_part_probability.push(probs[seed]);
                per_part_exact.push(false);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(PartitionResult {
        n_parts: parts.len(),
        parts: parts.into_iter().map(|p| p.0).collect(),
        per_part_probability,
        per_part_exact,
        delta: opts.delta,
        full_cluster_probability: p_full,
        minimal_good_subsets: minimal,
        truncated,
        subsets_evaluated: evaluated,
    })
}

/// Maximum number of pairwise disjoint subsets from `good`, with a
/// deterministic witness. Memoized over the mask of still-free sites,
/// branching on the lowest free site.
fn max_packing(n: usize, good: &[SubsetMask]) -> Vec<SubsetMask> {
    let mut by_low: Vec<Vec<u64>> = vec![Vec::new(); n];
    let mut sorted: Vec<SubsetMask> = good.to_vec();
    sorted.sort_by_key(|s| s.sites());
    for g in &sorted {
        by_low[g.0.trailing_zeros() as usize].push(g.0);
    }
    let mut memo = vec![-1i8; 1usize << n];

    fn best(mask: u64, by_low: &[Vec<u64>], memo: &mut [i8]) -> i8 {
        if mask == 0 {
            return 0;
        }
        if memo[mask as usize] >= 0 {
            return memo[mask as usize];
        }
        let low = mask.trailing_zeros() as usize;
        let mut v = best(mask & (mask - 1), by_low, memo);
        for &g in &by_low[low] {
            if g & !mask == 0 {
                v = v.max(1 + best(mask & !g, by_low, memo));
            }
        }
        memo[mask as usize] = v;
        v
    }

    let mut mask = (1u64 << n) - 1;
    let mut chosen = Vec::new();
    while mask != 0 {
        let target = best(mask, &by_low, &mut memo);
        if target == 0 {
            break;
        }
        let low = mask.trailing_zeros() as usize;
        let pick = by_low[low]
            .iter()
            .copied()
            .find(|&g| g & !mask == 0 && 1 + best(mask & !g, &by_low, &mut memo) == target);
        match pick {
            Some(g) => {
                chosen.push(SubsetMask(g));
                mask &= !g;
            }
            None => mask &= mask - 1,
        }
    }
    chosen
}

/// Adds every uncovered site to a part next to it, preferring the part whose
/// sorted site list is lexicographically smallest. Returns each final part
/// with the good subset it grew from.
fn absorb_leftovers(
    n: usize,
    chosen: Vec<SubsetMask>,
    adjacency: Option<&[(usize, usize)]>,
) -> Vec<(SubsetMask, SubsetMask)> {
    let mut parts: Vec<(SubsetMask, SubsetMask)> = chosen.into_iter().map(|g| (g, g)).collect();
    let neighbors = |i: usize| -> Vec<usize> {
        match adjacency {
            Some(bonds) => bonds
                .iter()
                .filter_map(|&(a, b)| {
                    if a == i {
                        Some(b)
                    } else if b == i {
                        Some(a)
                    } else {
                        None
                    }
                })
                .collect(),
            None => [i.wrapping_sub(1), i + 1].into_iter().filter(|&j| j < n).collect(),
        }
    };
    let covered = |parts: &[(SubsetMask, SubsetMask)]| parts.iter().fold(0u64, |m, p| m | p.0 .0);
    let mut leftover: Vec<usize> = (0..n).filter(|&i| covered(&parts) >> i & 1 == 0).collect();
    while !leftover.is_empty() {
        let mut progressed = false;
        let mut still = Vec::new();
        for &i in &leftover {
            let nb = neighbors(i);
            let target = (0..parts.len())
                .filter(|&p| nb.iter().any(|&j| parts[p].0.contains(j)))
                .min_by_key(|&p| parts[p].0.sites());
            match target {
                Some(p) => {
                    parts[p].0 .0 |= 1 << i;
                    progressed = true;
                }
                None => still.push(i),
            }
        }
        if !progressed {
            // disconnected from every part: fall back to the smallest part
            let i = still.remove(0);
            let p = (0..parts.len())
                .min_by_key(|&p| parts[p].0.sites())
                .expect("at least one part");
            parts[p].0 .0 |= 1 << i;
        }
        leftover = still;
    }
    parts.sort_by_key(|p| p.0.sites());
    parts
}

/// Complex-typed helper for callers that mix real and complex states.
pub fn to_complex_state(psi: &QuantumState<f64>) -> Result<QuantumState<Complex<f64>>> {
    QuantumState::new(
        psi.basis().clone(),
        psi.amplitudes().iter().map(|&x| Complex::new(x, 0.0)).collect(),
        psi.energy(),
    )
}
