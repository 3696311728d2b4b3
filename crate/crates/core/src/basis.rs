//! Spin clusters and magnetization-sector product bases.
//!
//! A product configuration `(m_1, ..., m_N)` is packed into a mixed-radix
//! `u64` key with site 0 as the most significant digit and digit
//! `d_i = m_i + s_i`. Sorting keys numerically is therefore the same as
//! sorting the doubled-`m` tuples lexicographically, and a single-site ladder
//! step is `key ± stride_i`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::half::HalfInt;

/// Default cap on the number of basis states materialized for one sector.
pub const DEFAULT_MAX_SECTOR_STATES: u64 = 200_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sublattice {
    A,
    B,
}

impl Sublattice {
    /// Sign of the site in the staggered magnetization `S_z^A - S_z^B`.
    pub fn sign(self) -> f64 {
        match self {
            Sublattice::A => 1.0,
            Sublattice::B => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinSite {
    pub index: usize,
    pub spin: HalfInt,
    pub sublattice: Sublattice,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinCluster {
    name: String,
    sites: Vec<SpinSite>,
    radices: Vec<u64>,
    strides: Vec<u64>,
}

impl SpinCluster {
    pub fn new(name: impl Into<String>, sites: Vec<SpinSite>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidCluster("a cluster needs at least one site".into()));
        }
        for (k, site) in sites.iter().enumerate() {
            if site.index != k {
                return Err(Error::InvalidCluster(format!(
                    "site indices must be contiguous from 0; position {k} has index {}",
                    site.index
                )));
            }
            if site.spin.twice() < 0 {
                return Err(Error::InvalidCluster(format!("site {k} has negative spin")));
            }
        }
        let radices: Vec<u64> = sites.iter().map(|s| s.spin.twice() as u64 + 1).collect();
        let mut strides = vec![1u64; sites.len()];
        let mut acc: u64 = 1;
        for i in (0..sites.len()).rev() {
            strides[i] = acc;
            acc = acc
                .checked_mul(radices[i])
                .ok_or_else(|| Error::InvalidCluster("total Hilbert-space dimension does not fit in 64 bits".into()))?;
        }
        Ok(SpinCluster {
            name: name.into(),
            sites,
            radices,
            strides,
        })
    }

    /// Builds a cluster from `(spin, sublattice, label)` triples in site order.
    pub fn from_spins<L: Into<String>>(
        name: impl Into<String>,
        spins: impl IntoIterator<Item = (HalfInt, Sublattice, L)>,
    ) -> Result<Self> {
        let sites = spins
            .into_iter()
            .enumerate()
            .map(|(index, (spin, sublattice, label))| SpinSite {
                index,
                spin,
                sublattice,
                label: label.into(),
            })
            .collect();
        SpinCluster::new(name, sites)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sites(&self) -> &[SpinSite] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn spin(&self, site: usize) -> HalfInt {
        self.sites[site].spin
    }

    /// `Σ s_i`
    pub fn s_max(&self) -> HalfInt {
        self.sites.iter().map(|s| s.spin).sum()
    }

    pub fn sublattice_max(&self, sublattice: Sublattice) -> HalfInt {
        self.sites
            .iter()
            .filter(|s| s.sublattice == sublattice)
            .map(|s| s.spin)
            .sum()
    }

    pub fn sites_in(&self, sublattice: Sublattice) -> Vec<usize> {
        self.sites
            .iter()
            .filter(|s| s.sublattice == sublattice)
            .map(|s| s.index)
            .collect()
    }

    pub fn staggered_signs(&self) -> Vec<f64> {
        self.sites.iter().map(|s| s.sublattice.sign()).collect()
    }

    pub fn total_dimension(&self) -> u128 {
        self.radices.iter().map(|&r| r as u128).product()
    }

    pub fn radix(&self, site: usize) -> u64 {
        self.radices[site]
    }

    pub fn stride(&self, site: usize) -> u64 {
        self.strides[site]
    }

    /// Digit `m_i + s_i` of site `i` in a packed key.
    #[inline]
    pub fn digit(&self, key: u64, site: usize) -> u64 {
        (key / self.strides[site]) % self.radices[site]
    }

    /// Doubled projection `2 m_i` of site `i` in a packed key.
    #[inline]
    pub fn m_twice(&self, key: u64, site: usize) -> i32 {
        2 * self.digit(key, site) as i32 - self.sites[site].spin.twice()
    }

    pub fn key_of(&self, config: &[HalfInt]) -> Result<u64> {
        if config.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: config.len(),
            });
        }
        let mut key = 0u64;
        for (i, m) in config.iter().enumerate() {
            let s2 = self.sites[i].spin.twice();
            let m2 = m.twice();
            if m2.abs() > s2 || (m2 + s2) % 2 != 0 {
                return Err(Error::InvalidArgument(format!(
                    "projection {m} is not allowed for spin {} on site {i}",
                    self.sites[i].spin
                )));
            }
            key += ((m2 + s2) / 2) as u64 * self.strides[i];
        }
        Ok(key)
    }

    pub fn config_of(&self, key: u64) -> Vec<HalfInt> {
        (0..self.len())
            .map(|i| HalfInt::from_doubled(self.m_twice(key, i)))
            .collect()
    }

    /// Sum of doubled projections encoded in `key`.
    pub fn total_m_twice(&self, key: u64) -> i32 {
        (0..self.len()).map(|i| self.m_twice(key, i)).sum()
    }

    /// Checks range and parity of a total projection.
    pub fn check_sector(&self, m: HalfInt) -> Result<()> {
        let s_max = self.s_max();
        if m.abs() > s_max || (m.twice() - s_max.twice()) % 2 != 0 {
            return Err(Error::EmptySector { m, s_max });
        }
        Ok(())
    }

    /// All valid total projections, ascending.
    pub fn sectors(&self) -> Vec<HalfInt> {
        self.s_max().projections().collect()
    }
}

/// Number of product states with total projection `m`, by convolving the
/// per-site multiplicity polynomials. Nothing is materialized.
pub fn sector_dimension(cluster: &SpinCluster, m: HalfInt) -> Result<u128> {
    cluster.check_sector(m)?;
    let mut poly: Vec<u128> = vec![1];
    for site in cluster.sites() {
        let width = site.spin.twice() as usize + 1;
        let mut next = vec![0u128; poly.len() + width - 1];
        for (k, &c) in poly.iter().enumerate() {
            if c == 0 {
                continue;
            }
            for slot in next[k..k + width].iter_mut() {
                *slot += c;
            }
        }
        poly = next;
    }
    let target = ((m.twice() + cluster.s_max().twice()) / 2) as usize;
    Ok(poly[target])
}

/// Ordered product basis of one `S_z = M` sector.
#[derive(Debug)]
pub struct SectorBasis {
    cluster: Arc<SpinCluster>,
    m: HalfInt,
    keys: Vec<u64>,
}

impl SectorBasis {
    pub fn cluster(&self) -> &Arc<SpinCluster> {
        &self.cluster
    }

    pub fn m(&self) -> HalfInt {
        self.m
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    #[inline]
    pub fn key(&self, index: usize) -> u64 {
        self.keys[index]
    }

    /// Position of a packed configuration, `O(log dim)`.
    #[inline]
    pub fn index_of(&self, key: u64) -> Option<usize> {
        self.keys.binary_search(&key).ok()
    }

    pub fn config(&self, index: usize) -> Vec<HalfInt> {
        self.cluster.config_of(self.keys[index])
    }

    pub fn index_of_config(&self, config: &[HalfInt]) -> Option<usize> {
        self.cluster.key_of(config).ok().and_then(|k| self.index_of(k))
    }

    pub fn belongs_to(&self, cluster: &SpinCluster) -> bool {
        std::ptr::eq(self.cluster.as_ref(), cluster) || *self.cluster == *cluster
    }
}

/// Enumerates the `S_z = m` sector in lexicographic order of the doubled
/// projections.
pub fn enumerate_sector(cluster: &Arc<SpinCluster>, m: HalfInt, max_states: u64) -> Result<SectorBasis> {
    let dimension = sector_dimension(cluster, m)?;
    if dimension > max_states as u128 {
        return Err(Error::BudgetExceeded {
            m,
            dimension,
            cap: max_states,
        });
    }
    let n = cluster.len();
    let mut suffix_max = vec![0u64; n + 1];
    for i in (0..n).rev() {
        suffix_max[i] = suffix_max[i + 1] + cluster.radix(i) - 1;
    }
    let target = ((m.twice() + cluster.s_max().twice()) / 2) as u64;
    let mut keys = Vec::with_capacity(dimension as usize);
    fill_sector(cluster, &suffix_max, 0, target, 0, &mut keys);
    debug_assert_eq!(keys.len() as u128, dimension);
    Ok(SectorBasis {
        cluster: Arc::clone(cluster),
        m,
        keys,
    })
}

fn fill_sector(
    cluster: &SpinCluster,
    suffix_max: &[u64],
    site: usize,
    remaining: u64,
    prefix: u64,
    out: &mut Vec<u64>,
) {
    if site == cluster.len() {
        if remaining == 0 {
            out.push(prefix);
        }
        return;
    }
    let top = cluster.radix(site) - 1;
    let lo = remaining.saturating_sub(suffix_max[site + 1]);
    let hi = top.min(remaining);
    for d in lo..=hi {
        fill_sector(
            cluster,
            suffix_max,
            site + 1,
            remaining - d,
            prefix + d * cluster.stride(site),
            out,
        );
    }
}

/// Lazily enumerated sectors of one cluster, shared between workers.
#[derive(Debug)]
pub struct SectorCache {
    cluster: Arc<SpinCluster>,
    max_states: u64,
    sectors: Mutex<HashMap<HalfInt, Arc<SectorBasis>>>,
}

impl SectorCache {
    pub fn new(cluster: Arc<SpinCluster>) -> Self {
        Self::with_cap(cluster, DEFAULT_MAX_SECTOR_STATES)
    }

    pub fn with_cap(cluster: Arc<SpinCluster>, max_states: u64) -> Self {
        SectorCache {
            cluster,
            max_states,
            sectors: Mutex::new(HashMap::new()),
        }
    }

    pub fn cluster(&self) -> &Arc<SpinCluster> {
        &self.cluster
    }

    pub fn max_states(&self) -> u64 {
        self.max_states
    }

    pub fn get(&self, m: HalfInt) -> Result<Arc<SectorBasis>> {
        if let Some(b) = self.sectors.lock().unwrap().get(&m) {
            return Ok(Arc::clone(b));
        }
        let basis = Arc::new(enumerate_sector(&self.cluster, m, self.max_states)?);
        let mut guard = self.sectors.lock().unwrap();
        Ok(Arc::clone(guard.entry(m).or_insert(basis)))
    }

    /// Like [`SectorCache::get`] but returns `None` for projections outside
    /// the cluster's range.
    pub fn get_if_valid(&self, m: HalfInt) -> Result<Option<Arc<SectorBasis>>> {
        match self.get(m) {
            Ok(b) => Ok(Some(b)),
            Err(Error::EmptySector { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }
}
