//! Sector-resolved operators: isotropic exchange with optional `z`-axis
//! antisymmetric exchange, single-spin components and total `S²`.
//!
//! All energies are in Kelvin with `H = +J s_i·s_j` (J > 0 antiferromagnetic).

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{SectorBasis, SpinCluster, SpinSite, Sublattice};
use crate::error::{Error, Result};
use crate::half::HalfInt;
use crate::num::{Complex, Real, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExchangeCoupling {
    pub i: usize,
    pub j: usize,
    /// Kelvin
    pub j_kelvin: f64,
}

/// Coefficient `Dz` of `ẑ·(s_i × s_j)`. Order of `i` and `j` matters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmCoupling {
    pub i: usize,
    pub j: usize,
    pub dz_kelvin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinModel {
    cluster: Arc<SpinCluster>,
    exchange: Vec<ExchangeCoupling>,
    dm: Vec<DmCoupling>,
    source: String,
}

impl SpinModel {
    pub fn new(
        cluster: impl Into<Arc<SpinCluster>>,
        exchange: Vec<ExchangeCoupling>,
        dm: Vec<DmCoupling>,
        source: impl Into<String>,
    ) -> Result<Self> {
        let cluster = cluster.into();
        let n = cluster.len();
        let check = |i: usize, j: usize, v: f64, what: &str| -> Result<()> {
            if i == j {
                return Err(Error::InvalidCoupling(format!("{what} coupling on a single site {i}")));
            }
            if i >= n || j >= n {
                return Err(Error::InvalidCoupling(format!(
                    "{what} coupling ({i}, {j}) references a site outside 0..{n}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidCoupling(format!(
                    "{what} coupling ({i}, {j}) is not finite"
                )));
            }
            Ok(())
        };
        for c in &exchange {
            check(c.i, c.j, c.j_kelvin, "exchange")?;
        }
        for c in &dm {
            check(c.i, c.j, c.dz_kelvin, "DM")?;
        }
        Ok(SpinModel {
            cluster,
            exchange,
            dm,
            source: source.into(),
        })
    }

    pub fn cluster(&self) -> &Arc<SpinCluster> {
        &self.cluster
    }

    pub fn name(&self) -> &str {
        self.cluster.name()
    }

    pub fn exchange(&self) -> &[ExchangeCoupling] {
        &self.exchange
    }

    pub fn dm(&self) -> &[DmCoupling] {
        &self.dm
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// True when the Hamiltonian has imaginary matrix elements.
    pub fn is_complex(&self) -> bool {
        self.dm.iter().any(|d| d.dz_kelvin != 0.0)
    }

    pub fn pair_operator(&self) -> PairOperator {
        let mut op = PairOperator::default();
        for c in &self.exchange {
            op.add(c.i, c.j, c.j_kelvin, 0.0);
        }
        for d in &self.dm {
            op.add(d.i, d.j, 0.0, d.dz_kelvin);
        }
        op
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.into_model()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    name: String,
    sites: Vec<SiteEntry>,
    #[serde(default)]
    exchange: Vec<ExchangeEntry>,
    #[serde(default)]
    dm: Vec<DmEntry>,
    #[serde(default)]
    source: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SiteEntry {
    s: HalfInt,
    sublattice: Sublattice,
    #[serde(default)]
    label: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExchangeEntry {
    i: usize,
    j: usize,
    #[serde(rename = "J_kelvin")]
    j_kelvin: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DmEntry {
    i: usize,
    j: usize,
    #[serde(rename = "Dz_kelvin")]
    dz_kelvin: f64,
}

impl From<&SpinModel> for ModelFile {
    fn from(m: &SpinModel) -> Self {
        ModelFile {
            name: m.name().to_string(),
            sites: m
                .cluster
                .sites()
                .iter()
                .map(|s| SiteEntry {
                    s: s.spin,
                    sublattice: s.sublattice,
                    label: s.label.clone(),
                })
                .collect(),
            exchange: m
                .exchange
                .iter()
                .map(|c| ExchangeEntry {
                    i: c.i,
                    j: c.j,
                    j_kelvin: c.j_kelvin,
                })
                .collect(),
            dm: m
                .dm
                .iter()
                .map(|d| DmEntry {
                    i: d.i,
                    j: d.j,
                    dz_kelvin: d.dz_kelvin,
                })
                .collect(),
            source: m.source.clone(),
        }
    }
}

impl ModelFile {
    fn into_model(self) -> Result<SpinModel> {
        let sites = self
            .sites
            .into_iter()
            .enumerate()
            .map(|(index, e)| {
                if e.s.twice() < 0 {
                    return Err(Error::InvalidCluster(format!("site {index} has negative spin")));
                }
                Ok(SpinSite {
                    index,
                    spin: e.s,
                    sublattice: e.sublattice,
                    label: e.label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let cluster = SpinCluster::new(self.name, sites)?;
        SpinModel::new(
            cluster,
            self.exchange
                .into_iter()
                .map(|e| ExchangeCoupling {
                    i: e.i,
                    j: e.j,
                    j_kelvin: e.j_kelvin,
                })
                .collect(),
            self.dm
                .into_iter()
                .map(|d| DmCoupling {
                    i: d.i,
                    j: d.j,
                    dz_kelvin: d.dz_kelvin,
                })
                .collect(),
            self.source,
        )
    }
}

/// `s(s+1) - m(m+1)` in units of 1/4, from doubled quantum numbers.
#[inline]
fn ladder_numerator(s2: i32, m2_low: i32) -> u64 {
    (s2 * (s2 + 2) - m2_low * (m2_low + 2)) as u64
}

/// `⟨m+1|s_+|m⟩ = √(s(s+1) - m(m+1))`
#[inline]
pub fn ladder_coefficient(s: HalfInt, m_low: HalfInt) -> f64 {
    (ladder_numerator(s.twice(), m_low.twice()) as f64).sqrt() * 0.5
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Bond {
    i: usize,
    j: usize,
    exchange: f64,
    dz: f64,
}

/// `constant + Σ J s_i·s_j + Σ Dz ẑ·(s_i × s_j)`, applicable to any sector.
///
/// Bonds are stored with `i < j`; swapping the pair flips the sign of `Dz`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairOperator {
    bonds: Vec<Bond>,
    constant: f64,
}

impl PairOperator {
    pub fn add(&mut self, i: usize, j: usize, exchange: f64, dz: f64) {
        let (i, j, dz) = if i < j { (i, j, dz) } else { (j, i, -dz) };
        if let Some(b) = self.bonds.iter_mut().find(|b| b.i == i && b.j == j) {
            b.exchange += exchange;
            b.dz += dz;
        } else {
            self.bonds.push(Bond { i, j, exchange, dz });
        }
    }

    pub fn add_constant(&mut self, c: f64) {
        self.constant += c;
    }

    pub fn is_complex(&self) -> bool {
        self.bonds.iter().any(|b| b.dz != 0.0)
    }

    /// `Σ s_i(s_i+1) + 2 Σ_{i<j} s_i·s_j` over the given sites.
    pub fn spin_squared(cluster: &SpinCluster, sites: &[usize]) -> PairOperator {
        let mut op = PairOperator::default();
        for (a, &i) in sites.iter().enumerate() {
            op.constant += cluster.spin(i).casimir();
            for &j in &sites[a + 1..] {
                op.add(i, j, 2.0, 0.0);
            }
        }
        op
    }

    /// Matrix elements `⟨k|H|t⟩` of row `k`, pushed as `(t, value)`.
    fn row(&self, basis: &SectorBasis, row: usize, out: &mut Vec<(usize, Complex<f64>)>) {
        let cluster = basis.cluster();
        let key = basis.key(row);
        let mut diag = self.constant;
        for b in &self.bonds {
            let s2i = cluster.spin(b.i).twice();
            let s2j = cluster.spin(b.j).twice();
            let mi = cluster.m_twice(key, b.i);
            let mj = cluster.m_twice(key, b.j);
            diag += b.exchange * (mi * mj) as f64 * 0.25;
            if b.exchange == 0.0 && b.dz == 0.0 {
                continue;
            }
            let (si, sj) = (cluster.stride(b.i), cluster.stride(b.j));
            // |k⟩ = s_i+ s_j- |t⟩
            if mi > -s2i && mj < s2j {
                let c = ((ladder_numerator(s2i, mi - 2) * ladder_numerator(s2j, mj)) as f64).sqrt() * 0.25;
                if let Some(t) = basis.index_of(key - si + sj) {
                    out.push((t, Complex::new(0.5 * b.exchange * c, 0.5 * b.dz * c)));
                }
            }
            // |k⟩ = s_i- s_j+ |t⟩
            if mi < s2i && mj > -s2j {
                let c = ((ladder_numerator(s2i, mi) * ladder_numerator(s2j, mj - 2)) as f64).sqrt() * 0.25;
                if let Some(t) = basis.index_of(key + si - sj) {
                    out.push((t, Complex::new(0.5 * b.exchange * c, -0.5 * b.dz * c)));
                }
            }
        }
        out.push((row, Complex::new(diag, 0.0)));
    }

    /// Assembles the operator on one sector.
    pub fn build<T: Scalar>(&self, basis: &Arc<SectorBasis>) -> Result<SparseOperator<T>> {
        for b in &self.bonds {
            if b.j >= basis.cluster().len() {
                return Err(Error::BasisMismatch);
            }
        }
        if self.is_complex() && !T::IS_COMPLEX {
            return Err(Error::RequiresComplex);
        }
        assemble(basis, basis, true, |r, out| self.row(basis, r, out))
    }

    /// Matrix-free view on one sector.
    pub fn on<'a>(&'a self, basis: &'a SectorBasis) -> PairOperatorView<'a> {
        PairOperatorView { op: self, basis }
    }

    /// `⟨ψ|O|ψ⟩` without storing the matrix.
    pub fn expectation<T: Scalar>(&self, basis: &SectorBasis, psi: &[T]) -> Complex<f64> {
        let view = self.on(basis);
        (0..basis.len())
            .into_par_iter()
            .with_min_len(256)
            .map_init(Vec::new, |buf, r| {
                buf.clear();
                view.op.row(basis, r, buf);
                let lhs = psi[r].to_complex();
                let lhs = Complex::new(lhs.re.to_f64_lossy(), -lhs.im.to_f64_lossy());
                buf.iter().fold(Complex::new(0.0, 0.0), |acc, &(c, v)| {
                    let x = psi[c].to_complex();
                    acc + lhs * v * Complex::new(x.re.to_f64_lossy(), x.im.to_f64_lossy())
                })
            })
            .reduce(|| Complex::new(0.0, 0.0), |a, b| a + b)
    }
}

/// Anything that can be multiplied into a vector of one sector.
pub trait LinearOperator<T: Scalar>: Sync {
    fn dim(&self) -> usize;
    /// `y = A x`
    fn apply(&self, x: &[T], y: &mut [T]);
    /// Upper bound on the spectral norm.
    fn norm_bound(&self) -> f64;
}

pub struct PairOperatorView<'a> {
    op: &'a PairOperator,
    basis: &'a SectorBasis,
}

impl<T: Scalar> LinearOperator<T> for PairOperatorView<'_> {
    fn dim(&self) -> usize {
        self.basis.len()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        y.par_iter_mut()
            .enumerate()
            .with_min_len(256)
            .for_each_init(Vec::new, |buf, (r, yr)| {
                buf.clear();
                self.op.row(self.basis, r, buf);
                *yr = buf.iter().fold(T::zero(), |acc, &(c, v)| acc + convert::<T>(v) * x[c]);
            });
    }

    fn norm_bound(&self) -> f64 {
        (0..self.basis.len())
            .into_par_iter()
            .map_init(Vec::new, |buf, r| {
                buf.clear();
                self.op.row(self.basis, r, buf);
                buf.iter().map(|(_, v)| v.norm()).sum::<f64>()
            })
            .reduce(|| 0.0, f64::max)
    }
}

#[inline]
fn convert<T: Scalar>(v: Complex<f64>) -> T {
    T::from_parts_lossy(T::Real::lit(v.re), T::Real::lit(v.im))
}

/// Compressed-row operator from `basis_in` to `basis_out`.
#[derive(Clone, Debug)]
pub struct SparseOperator<T> {
    basis_in: Arc<SectorBasis>,
    basis_out: Arc<SectorBasis>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<T>,
    hermitian: bool,
}

const ROW_BLOCK: usize = 2048;

/// Row-parallel CSR assembly. Each row's entries are merged per column in the
/// order they were produced, so mirrored entries are bitwise conjugate.
fn assemble<T, F>(
    basis_in: &Arc<SectorBasis>,
    basis_out: &Arc<SectorBasis>,
    hermitian: bool,
    row_fn: F,
) -> Result<SparseOperator<T>>
where
    T: Scalar,
    F: Fn(usize, &mut Vec<(usize, Complex<f64>)>) + Sync,
{
    if basis_in.len() > u32::MAX as usize {
        return Err(Error::InvalidArgument(
            "sector too large for 32-bit column indices".into(),
        ));
    }
    let n_rows = basis_out.len();
    let blocks: Vec<(Vec<usize>, Vec<u32>, Vec<T>)> = (0..n_rows.div_ceil(ROW_BLOCK))
        .into_par_iter()
        .map(|blk| {
            let lo = blk * ROW_BLOCK;
            let hi = (lo + ROW_BLOCK).min(n_rows);
            let mut counts = Vec::with_capacity(hi - lo);
            let mut cols = Vec::new();
            let mut vals = Vec::new();
            let mut buf = Vec::new();
            for r in lo..hi {
                buf.clear();
                row_fn(r, &mut buf);
                buf.sort_by_key(|&(c, _)| c);
                let before = cols.len();
                let mut k = 0;
                while k < buf.len() {
                    let c = buf[k].0;
                    let mut v = buf[k].1;
                    k += 1;
                    while k < buf.len() && buf[k].0 == c {
                        v += buf[k].1;
                        k += 1;
                    }
                    if v.re != 0.0 || v.im != 0.0 {
                        cols.push(c as u32);
                        vals.push(convert::<T>(v));
                    }
                }
                counts.push(cols.len() - before);
            }
            (counts, cols, vals)
        })
        .collect();
    let nnz: usize = blocks.iter().map(|b| b.1.len()).sum();
    let mut row_ptr = Vec::with_capacity(n_rows + 1);
    row_ptr.push(0);
    let mut cols = Vec::with_capacity(nnz);
    let mut vals = Vec::with_capacity(nnz);
    for (counts, c, v) in blocks {
        for n in counts {
            row_ptr.push(row_ptr.last().unwrap() + n);
        }
        cols.extend(c);
        vals.extend(v);
    }
    Ok(SparseOperator {
        basis_in: Arc::clone(basis_in),
        basis_out: Arc::clone(basis_out),
        row_ptr,
        cols,
        vals,
        hermitian,
    })
}

impl<T: Scalar> SparseOperator<T> {
    pub fn basis_in(&self) -> &Arc<SectorBasis> {
        &self.basis_in
    }

    pub fn basis_out(&self) -> &Arc<SectorBasis> {
        &self.basis_out
    }

    pub fn nrows(&self) -> usize {
        self.basis_out.len()
    }

    pub fn ncols(&self) -> usize {
        self.basis_in.len()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// `(column, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .zip(&self.vals[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&(c as u32)) {
            Ok(k) => self.vals[span.start + k],
            Err(_) => T::zero(),
        }
    }

    /// `y = A x` for `x` over `basis_in`, `y` over `basis_out`.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows()];
        self.apply_into(x, &mut y);
        y
    }

    fn apply_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols());
        assert_eq!(y.len(), self.nrows());
        y.par_iter_mut().enumerate().with_min_len(512).for_each(|(r, yr)| {
            let mut acc = T::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            *yr = acc;
        });
    }

    /// `⟨a|A|b⟩` with `a` over `basis_out`, `b` over `basis_in`.
    pub fn matrix_element(&self, a: &[T], b: &[T]) -> T {
        (0..self.nrows())
            .into_par_iter()
            .with_min_len(512)
            .map(|r| {
                let row: T = self.row(r).fold(T::zero(), |acc, (c, v)| acc + v * b[c]);
                a[r].conjugate() * row
            })
            .reduce(T::zero, |x, y| x + y)
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols());
        for r in 0..self.nrows() {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Exact (bitwise) check of `A = A†`.
    pub fn is_exactly_hermitian(&self) -> bool {
        if self.nrows() != self.ncols() {
            return false;
        }
        (0..self.nrows()).all(|r| self.row(r).all(|(c, v)| self.get(c, r) == v.conjugate()))
    }

    /// Largest absolute row sum.
    pub fn gershgorin_bound(&self) -> f64 {
        (0..self.nrows())
            .into_par_iter()
            .map(|r| {
                self.vals[self.row_ptr[r]..self.row_ptr[r + 1]]
                    .iter()
                    .map(|v| v.modulus().to_f64_lossy())
                    .sum::<f64>()
            })
            .reduce(|| 0.0, f64::max)
    }
}

impl<T: Scalar> LinearOperator<T> for SparseOperator<T> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        self.apply_into(x, y)
    }

    fn norm_bound(&self) -> f64 {
        self.gershgorin_bound()
    }
}

pub fn build_exchange_hamiltonian<T: Scalar>(model: &SpinModel, basis: &Arc<SectorBasis>) -> Result<SparseOperator<T>> {
    if !basis.belongs_to(model.cluster()) {
        return Err(Error::BasisMismatch);
    }
    model.pair_operator().build(basis)
}

pub fn total_spin_squared<T: Scalar>(cluster: &SpinCluster, basis: &Arc<SectorBasis>) -> Result<SparseOperator<T>> {
    if !basis.belongs_to(cluster) {
        return Err(Error::BasisMismatch);
    }
    let sites: Vec<usize> = (0..cluster.len()).collect();
    PairOperator::spin_squared(cluster, &sites).build(basis)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpinComponent {
    X,
    Y,
    Z,
    Plus,
    Minus,
}

impl SpinComponent {
    /// Change of total `M` for the ladder components.
    pub fn delta_m(self) -> Option<i32> {
        match self {
            SpinComponent::Z => Some(0),
            SpinComponent::Plus => Some(1),
            SpinComponent::Minus => Some(-1),
            SpinComponent::X | SpinComponent::Y => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SpinComponent::X => "x",
            SpinComponent::Y => "y",
            SpinComponent::Z => "z",
            SpinComponent::Plus => "plus",
            SpinComponent::Minus => "minus",
        }
    }
}

impl fmt::Display for SpinComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpinComponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(SpinComponent::X),
            "y" => Ok(SpinComponent::Y),
            "z" => Ok(SpinComponent::Z),
            "plus" | "+" => Ok(SpinComponent::Plus),
            "minus" | "-" => Ok(SpinComponent::Minus),
            _ => Err(Error::Parse(format!("unknown spin component {s:?}"))),
        }
    }
}

/// Single nonzero entry `(column, ⟨row|s_±,z|column⟩)` of a ladder or `z`
/// component on `site`, for a row of `basis_out`.
#[inline]
fn ladder_entry(basis_in: &SectorBasis, row_key: u64, site: usize, delta: i32) -> Option<(usize, f64)> {
    let cluster = basis_in.cluster();
    let s2 = cluster.spin(site).twice();
    let m2 = cluster.m_twice(row_key, site);
    let stride = cluster.stride(site);
    match delta {
        0 => basis_in.index_of(row_key).map(|c| (c, m2 as f64 * 0.5)),
        // row = s_+ col
        1 if m2 > -s2 => basis_in
            .index_of(row_key - stride)
            .map(|c| (c, (ladder_numerator(s2, m2 - 2) as f64).sqrt() * 0.5)),
        // row = s_- col
        -1 if m2 < s2 => basis_in
            .index_of(row_key + stride)
            .map(|c| (c, (ladder_numerator(s2, m2) as f64).sqrt() * 0.5)),
        _ => None,
    }
}

pub fn single_spin_operator<T: Scalar>(
    cluster: &SpinCluster,
    basis_in: &Arc<SectorBasis>,
    basis_out: &Arc<SectorBasis>,
    site: usize,
    component: SpinComponent,
) -> Result<SparseOperator<T>> {
    if !basis_in.belongs_to(cluster) || !basis_out.belongs_to(cluster) {
        return Err(Error::BasisMismatch);
    }
    if site >= cluster.len() {
        return Err(Error::InvalidArgument(format!("site {site} outside the cluster")));
    }
    let dm = basis_out.m().twice() - basis_in.m().twice();
    let mismatch = || Error::SectorMismatch {
        site,
        component: component.as_str(),
        from: basis_in.m(),
        to: basis_out.m(),
    };
    // x = (s_+ + s_-)/2 and y = (s_+ - s_-)/(2i); only one ladder term links
    // two distinct sectors.
    let (delta, factor) = match component {
        SpinComponent::Z | SpinComponent::Plus | SpinComponent::Minus => {
            if Some(dm / 2) != component.delta_m() || dm % 2 != 0 {
                return Err(mismatch());
            }
            (dm / 2, Complex::new(1.0, 0.0))
        }
        SpinComponent::X => match dm {
            2 => (1, Complex::new(0.5, 0.0)),
            -2 => (-1, Complex::new(0.5, 0.0)),
            _ => return Err(mismatch()),
        },
        SpinComponent::Y => {
            if !T::IS_COMPLEX {
                return Err(Error::RequiresComplex);
            }
            match dm {
                2 => (1, Complex::new(0.0, -0.5)),
                -2 => (-1, Complex::new(0.0, 0.5)),
                _ => return Err(mismatch()),
            }
        }
    };
    let hermitian = delta == 0;
    assemble(basis_in, basis_out, hermitian, |r, out| {
        if let Some((c, v)) = ladder_entry(basis_in, basis_out.key(r), site, delta) {
            out.push((c, factor * v));
        }
    })
}

/// `s_site^component |x⟩` for a ladder or `z` component, without storing the
/// operator. `x` lives on `basis_in`; the result on `basis_out`.
pub fn apply_single_spin<T: Scalar>(
    basis_in: &SectorBasis,
    basis_out: &SectorBasis,
    site: usize,
    component: SpinComponent,
    x: &[T],
) -> Result<Vec<T>> {
    let delta = component
        .delta_m()
        .ok_or_else(|| Error::InvalidArgument("only z, plus and minus can be applied directly".into()))?;
    if basis_out.m().twice() - basis_in.m().twice() != 2 * delta {
        return Err(Error::SectorMismatch {
            site,
            component: component.as_str(),
            from: basis_in.m(),
            to: basis_out.m(),
        });
    }
    if x.len() != basis_in.len() {
        return Err(Error::DimensionMismatch {
            expected: basis_in.len(),
            got: x.len(),
        });
    }
    let mut y = vec![T::zero(); basis_out.len()];
    y.par_iter_mut().enumerate().with_min_len(1024).for_each(|(r, yr)| {
        if let Some((c, v)) = ladder_entry(basis_in, basis_out.key(r), site, delta) {
            *yr = x[c] * T::from_real(T::Real::lit(v));
        }
    });
    Ok(y)
}
