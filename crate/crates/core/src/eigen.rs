//! Lowest eigenpairs of sector Hamiltonians and the [`QuantumState`] type.
//!
//! Small sectors go through a dense Hermitian eigendecomposition. Larger ones
//! use thick-restart Lanczos with full reorthogonalization, one eigenpair at
//! a time against the already locked vectors, so exactly degenerate levels are
//! found rather than missed by a single Krylov sequence.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{SectorBasis, SpinCluster};
use crate::error::{Error, Result};
use crate::half::HalfInt;
use crate::hamiltonian::{build_exchange_hamiltonian, LinearOperator, PairOperator, SpinModel};
use crate::num::{axpy, dot, norm, scale, Real, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Sectors up to this dimension are diagonalized densely.
    pub dense_threshold: usize,
    /// Residual tolerance relative to the operator norm bound.
    pub tol: f64,
    pub max_restarts: usize,
    pub krylov_dim: usize,
    /// Relative gap under which two levels count as degenerate.
    pub degeneracy_tol: f64,
    pub seed: u64,
    /// Upper bound on the number of degenerate levels resolved at the bottom
    /// of a sector.
    pub max_degenerate: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            dense_threshold: 1024,
            tol: 1e-10,
            max_restarts: 2000,
            krylov_dim: 64,
            degeneracy_tol: 1e-7,
            seed: 0x5eed,
            max_degenerate: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverPath {
    Dense,
    Lanczos,
}

#[derive(Clone, Debug)]
pub struct Eigenpairs<T> {
    /// Ascending.
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<T>>,
    /// `‖Av - λv‖` of each pair.
    pub residuals: Vec<f64>,
    pub path: SolverPath,
    pub matvecs: usize,
    pub norm_bound: f64,
}

impl<T> Eigenpairs<T> {
    /// Number of leading levels within `rel_tol · scale` of the lowest one.
    pub fn bottom_multiplicity(&self, rel_tol: f64) -> usize {
        let gap = rel_tol * self.energy_scale();
        self.values.iter().take_while(|&&e| e - self.values[0] < gap).count()
    }

    pub fn energy_scale(&self) -> f64 {
        self.norm_bound
            .max(self.values.first().map_or(0.0, |e| e.abs()))
            .max(f64::MIN_POSITIVE)
    }
}

fn random_vector<T: Scalar>(n: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = if T::IS_COMPLEX { StandardNormal.sample(rng) } else { 0.0 };
            T::from_parts_lossy(T::Real::lit(re), T::Real::lit(im))
        })
        .collect()
}

/// Two passes of classical Gram-Schmidt against `basis`.
fn project_out<T: Scalar>(w: &mut [T], basis: &[Vec<T>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            axpy(-c, q, w);
        }
    }
}

fn real_of<T: Scalar>(x: T) -> f64 {
    x.real().to_f64_lossy()
}

/// Unit vector orthogonal to `a` and `b`, or `None` when the complement is
/// numerically empty.
fn fresh_direction<T: Scalar>(n: usize, a: &[Vec<T>], b: &[Vec<T>], rng: &mut ChaCha8Rng) -> Option<Vec<T>> {
    for _ in 0..4 {
        let mut x = random_vector::<T>(n, rng);
        let before = norm(&x).to_f64_lossy();
        project_out(&mut x, a);
        project_out(&mut x, b);
        let after = norm(&x).to_f64_lossy();
        if after > 1e-8 * before {
            scale(T::from_real(T::Real::lit(1.0 / after)), &mut x);
            return Some(x);
        }
    }
    None
}

fn dense_matrix<T: Scalar, A: LinearOperator<T> + ?Sized>(op: &A) -> DMatrix<T> {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![T::zero(); n];
    let mut col = vec![T::zero(); n];
    for c in 0..n {
        e[c] = T::one();
        op.apply(&e, &mut col);
        e[c] = T::zero();
        for r in 0..n {
            m[(r, c)] = col[r];
        }
    }
    // exact Hermitian part; the operators are Hermitian up to rounding at most
    for r in 0..n {
        m[(r, r)] = T::from_real(m[(r, r)].real());
        for c in r + 1..n {
            let v = (m[(r, c)] + m[(c, r)].conjugate()) * T::from_real(T::Real::lit(0.5));
            m[(r, c)] = v;
            m[(c, r)] = v.conjugate();
        }
    }
    m
}

fn residual_norm<T: Scalar, A: LinearOperator<T> + ?Sized>(op: &A, x: &[T], lambda: f64) -> f64 {
    let mut y = vec![T::zero(); x.len()];
    op.apply(x, &mut y);
    axpy(T::from_real(T::Real::lit(-lambda)), x, &mut y);
    norm(&y).to_f64_lossy()
}

/// The `k` lowest eigenpairs of a Hermitian operator, ascending.
pub fn lowest_eigenpairs<T: Scalar, A: LinearOperator<T> + ?Sized>(
    op: &A,
    k: usize,
    opts: &SolverOptions,
) -> Result<Eigenpairs<T>> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot request {k} eigenpairs of a {n}-dimensional operator"
        )));
    }
    let norm_bound = op.norm_bound();
    if n <= opts.dense_threshold {
        return dense_eigenpairs(op, k, norm_bound);
    }
    let mut pairs = Eigenpairs {
        values: Vec::with_capacity(k),
        vectors: Vec::with_capacity(k),
        residuals: Vec::with_capacity(k),
        path: SolverPath::Lanczos,
        matvecs: 0,
        norm_bound,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..k {
        extend_lanczos(op, &mut pairs, opts, &mut rng)?;
    }
    Ok(pairs)
}

fn dense_eigenpairs<T: Scalar, A: LinearOperator<T> + ?Sized>(
    op: &A,
    k: usize,
    norm_bound: f64,
) -> Result<Eigenpairs<T>> {
    let n = op.dim();
    let eig = dense_matrix(op).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut pairs = Eigenpairs {
        values: Vec::with_capacity(k),
        vectors: Vec::with_capacity(k),
        residuals: Vec::with_capacity(k),
        path: SolverPath::Dense,
        matvecs: n,
        norm_bound,
    };
    for &i in order.iter().take(k) {
        let lambda = eig.eigenvalues[i].to_f64_lossy();
        let v: Vec<T> = eig.eigenvectors.column(i).iter().copied().collect();
        pairs.residuals.push(residual_norm(op, &v, lambda));
        pairs.values.push(lambda);
        pairs.vectors.push(v);
    }
    pairs.matvecs += k;
    Ok(pairs)
}

/// Adds the next eigenpair above those already in `pairs`, by thick-restart
/// Lanczos restricted to the orthogonal complement of the locked vectors.
fn extend_lanczos<T: Scalar, A: LinearOperator<T> + ?Sized>(
    op: &A,
    pairs: &mut Eigenpairs<T>,
    opts: &SolverOptions,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let n = op.dim();
    let locked = &pairs.vectors;
    let avail = n - locked.len();
    let m = opts.krylov_dim.max(4).min(avail);
    let keep = (1 + (m - 1) / 2).min(m - 1);
    let scale_ref = pairs.norm_bound.max(f64::MIN_POSITIVE);
    let tol = opts.tol * scale_ref;

    let mut v: Vec<Vec<T>> = Vec::with_capacity(m);
    v.push(fresh_direction(n, locked, &[], rng).ok_or(Error::NoConvergence {
        iterations: 0,
        residual: f64::NAN,
    })?);
    let mut h = DMatrix::<T>::zeros(m, m);
    let mut w = vec![T::zero(); n];
    let mut p = 0usize;
    let mut best = f64::INFINITY;

    for restart in 0..opts.max_restarts {
        let mut beta = 0.0;
        for j in p..m {
            op.apply(&v[j], &mut w);
            pairs.matvecs += 1;
            for _ in 0..2 {
                project_out(&mut w, locked);
                for (i, vi) in v.iter().enumerate() {
                    let c = dot(vi, &w);
                    axpy(-c, vi, &mut w);
                    h[(i, j)] += c;
                }
            }
            beta = norm(&w).to_f64_lossy();
            if j + 1 == m {
                break;
            }
            if beta <= 1e-12 * scale_ref {
                // invariant subspace: continue from a fresh orthogonal direction
                match fresh_direction(n, locked, &v, rng) {
                    Some(x) => v.push(x),
                    None => break,
                }
            } else {
                let mut x = w.clone();
                scale(T::from_real(T::Real::lit(1.0 / beta)), &mut x);
                v.push(x);
            }
        }
        let size = v.len();
        if size < m {
            // complement exhausted; the Krylov space is exact
            beta = 0.0;
        }
        let mut hm = DMatrix::<T>::zeros(size, size);
        for c in 0..size {
            for r in 0..c {
                hm[(r, c)] = h[(r, c)];
                hm[(c, r)] = h[(r, c)].conjugate();
            }
            hm[(c, c)] = T::from_real(h[(c, c)].real());
        }
        let eig = hm.symmetric_eigen();
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        let y = &eig.eigenvectors;
        let ritz_residual = |i: usize| beta * y[(size - 1, i)].modulus().to_f64_lossy();

        let lowest = order[0];
        let estimate = ritz_residual(lowest);
        best = best.min(estimate);
        if estimate <= tol {
            let mut x = combine(&v, y, lowest);
            project_out(&mut x, locked);
            let nx = norm(&x).to_f64_lossy();
            scale(T::from_real(T::Real::lit(1.0 / nx)), &mut x);
            let lambda = eig.eigenvalues[lowest].to_f64_lossy();
            let res = residual_norm(op, &x, lambda);
            pairs.matvecs += 1;
            best = best.min(res);
            if res <= tol || (restart + 1 == opts.max_restarts && res <= 10.0 * tol) {
                pairs.values.push(lambda);
                pairs.vectors.push(x);
                pairs.residuals.push(res);
                return Ok(());
            }
        }

        // thick restart on the lowest Ritz vectors
        let kept = keep.min(size - 1).max(1);
        let mut next: Vec<Vec<T>> = order[..kept].iter().map(|&i| combine(&v, y, i)).collect();
        h.fill(T::zero());
        for (slot, &i) in order[..kept].iter().enumerate() {
            h[(slot, slot)] = T::from_real(eig.eigenvalues[i]);
        }
        if beta > 1e-12 * scale_ref {
            let mut f = w.clone();
            scale(T::from_real(T::Real::lit(1.0 / beta)), &mut f);
            next.push(f);
        } else {
            match fresh_direction(n, locked, &next, rng) {
                Some(x) => next.push(x),
                None => {
                    return Err(Error::NoConvergence {
                        iterations: restart + 1,
                        residual: best,
                    })
                }
            }
        }
        p = kept;
        v = next;
    }
    Err(Error::NoConvergence {
        iterations: opts.max_restarts,
        residual: best,
    })
}

/// `Σ_r Y[r, col] v_r`
fn combine<T: Scalar>(v: &[Vec<T>], y: &DMatrix<T>, col: usize) -> Vec<T> {
    let mut x = vec![T::zero(); v[0].len()];
    for (r, vr) in v.iter().enumerate() {
        axpy(y[(r, col)], vr, &mut x);
    }
    x
}

/// Normalized state of one sector with a fixed global phase.
#[derive(Clone, Debug)]
pub struct QuantumState<T> {
    basis: Arc<SectorBasis>,
    amplitudes: Vec<T>,
    energy: Option<f64>,
    s_squared: f64,
    phase_anchor: usize,
}

/// Relative band within which amplitude moduli count as tied for the anchor.
const ANCHOR_TIE: f64 = 1e-9;

impl<T: Scalar> QuantumState<T> {
    /// Normalizes, fixes the phase and evaluates `⟨S²⟩`.
    pub fn new(basis: Arc<SectorBasis>, mut amplitudes: Vec<T>, energy: Option<f64>) -> Result<Self> {
        if amplitudes.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: amplitudes.len(),
            });
        }
        let nrm = norm(&amplitudes).to_f64_lossy();
        if !nrm.is_finite() || nrm <= 0.0 {
            return Err(Error::InvalidArgument("state has zero or non-finite norm".into()));
        }
        scale(T::from_real(T::Real::lit(1.0 / nrm)), &mut amplitudes);
        let anchor = phase_anchor(&amplitudes);
        let a = amplitudes[anchor];
        let modulus = a.modulus();
        let rotation = a.conjugate() / T::from_real(modulus);
        scale(rotation, &mut amplitudes);
        amplitudes[anchor] = T::from_real(amplitudes[anchor].real());
        let cluster = basis.cluster();
        let all: Vec<usize> = (0..cluster.len()).collect();
        let s_squared = PairOperator::spin_squared(cluster, &all)
            .expectation(&basis, &amplitudes)
            .re;
        Ok(QuantumState {
            basis,
            amplitudes,
            energy,
            s_squared,
            phase_anchor: anchor,
        })
    }

    pub fn basis(&self) -> &Arc<SectorBasis> {
        &self.basis
    }

    pub fn cluster(&self) -> &Arc<SpinCluster> {
        self.basis.cluster()
    }

    pub fn amplitudes(&self) -> &[T] {
        &self.amplitudes
    }

    pub fn m(&self) -> HalfInt {
        self.basis.m()
    }

    pub fn energy(&self) -> Option<f64> {
        self.energy
    }

    pub fn s_squared(&self) -> f64 {
        self.s_squared
    }

    pub fn phase_anchor(&self) -> usize {
        self.phase_anchor
    }

    /// `S` with `S(S+1) = ⟨S²⟩`, snapped to the nearest half-integer when
    /// within `tol`.
    pub fn multiplet(&self, tol: f64) -> Option<HalfInt> {
        let s = effective_spin(self.s_squared);
        let twice = (2.0 * s).round();
        let snapped = HalfInt::from_doubled(twice as i32);
        ((snapped.casimir() - self.s_squared).abs() <= tol).then_some(snapped)
    }

    /// `⟨self|other⟩`; zero across different sectors.
    pub fn overlap(&self, other: &QuantumState<T>) -> T {
        if self.m() != other.m() || !self.basis.belongs_to(other.cluster()) {
            return T::zero();
        }
        if Arc::ptr_eq(&self.basis, &other.basis) {
            return dot(&self.amplitudes, &other.amplitudes);
        }
        // same sector enumerated twice: keys agree
        dot(&self.amplitudes, &other.amplitudes)
    }

    /// Amplitude of a product configuration.
    pub fn amplitude_of(&self, config: &[HalfInt]) -> T {
        self.basis
            .index_of_config(config)
            .map_or(T::zero(), |k| self.amplitudes[k])
    }
}

/// `S` solving `S(S+1) = x`.
pub fn effective_spin(s_squared: f64) -> f64 {
    ((1.0 + 4.0 * s_squared.max(0.0)).sqrt() - 1.0) / 2.0
}

/// Largest-modulus index; near ties go to the lowest index.
pub fn phase_anchor<T: Scalar>(amplitudes: &[T]) -> usize {
    let moduli: Vec<f64> = amplitudes.iter().map(|a| a.modulus().to_f64_lossy()).collect();
    let max = moduli.iter().copied().fold(0.0, f64::max);
    moduli.iter().position(|&x| x >= max * (1.0 - ANCHOR_TIE)).unwrap_or(0)
}

/// Lowest state of the sector `basis` under `model`.
///
/// A degenerate sector bottom is resolved by diagonalizing `S²` inside the
/// degenerate subspace and picking the eigenvector nearest `S(S+1)` for the
/// hinted `S`.
pub fn ground_state_on_basis<T: Scalar>(
    model: &SpinModel,
    basis: &Arc<SectorBasis>,
    s_hint: Option<HalfInt>,
    opts: &SolverOptions,
) -> Result<QuantumState<T>> {
    let hm = build_exchange_hamiltonian::<T>(model, basis)?;
    let n = basis.len();
    let mut pairs = if n <= opts.dense_threshold {
        lowest_eigenpairs(&hm, n.min(opts.max_degenerate + 1), opts)?
    } else {
        lowest_eigenpairs(&hm, 2.min(n), opts)?
    };
    if pairs.path == SolverPath::Lanczos {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9);
        while pairs.bottom_multiplicity(opts.degeneracy_tol) == pairs.values.len()
            && pairs.values.len() < n
            && pairs.values.len() <= opts.max_degenerate
        {
            extend_lanczos(&hm, &mut pairs, opts, &mut rng)?;
        }
    }
    let g = pairs.bottom_multiplicity(opts.degeneracy_tol);
    let energy = pairs.values[0];
    if g == 1 {
        return QuantumState::new(Arc::clone(basis), pairs.vectors.swap_remove(0), Some(energy));
    }

    let cluster = model.cluster();
    let all: Vec<usize> = (0..cluster.len()).collect();
    let s2 = PairOperator::spin_squared(cluster, &all);
    let view = s2.on(basis);
    let images: Vec<Vec<T>> = pairs.vectors[..g]
        .iter()
        .map(|v| {
            let mut y = vec![T::zero(); n];
            view.apply(v, &mut y);
            y
        })
        .collect();
    let gram = DMatrix::from_fn(g, g, |a, b| dot(&pairs.vectors[a], &images[b]));
    let gram = (&gram + gram.adjoint()) * T::from_real(T::Real::lit(0.5));
    let eig = gram.symmetric_eigen();
    let values: Vec<f64> = eig.eigenvalues.iter().map(|x| x.to_f64_lossy()).collect();
    let Some(hint) = s_hint else {
        return Err(Error::AmbiguousMultiplet(values));
    };
    let target = hint.casimir();
    let best = (0..g)
        .min_by(|&a, &b| {
            (values[a] - target)
                .abs()
                .partial_cmp(&(values[b] - target).abs())
                .unwrap()
        })
        .unwrap();
    let resolution = 1e-6 * target.max(1.0);
    if (0..g).any(|a| a != best && (values[a] - values[best]).abs() < resolution) {
        return Err(Error::AmbiguousMultiplet(values));
    }
    let mut x = vec![T::zero(); n];
    for (a, v) in pairs.vectors[..g].iter().enumerate() {
        axpy(eig.eigenvectors[(a, best)], v, &mut x);
    }
    QuantumState::new(Arc::clone(basis), x, Some(energy))
}

/// Enumerates the sector and calls [`ground_state_on_basis`].
pub fn ground_state_in_sector<T: Scalar>(
    model: &SpinModel,
    m: HalfInt,
    s_hint: Option<HalfInt>,
    max_sector_states: u64,
    opts: &SolverOptions,
) -> Result<QuantumState<T>> {
    let basis = Arc::new(crate::basis::enumerate_sector(model.cluster(), m, max_sector_states)?);
    ground_state_on_basis(model, &basis, s_hint, opts)
}

/// Spectral measure of a Hermitian operator in the state `start`: the nodes
/// and weights of the Gauss quadrature produced by Lanczos, which are exact
/// once the Krylov space is invariant.
pub fn spectral_measure<T: Scalar, A: LinearOperator<T> + ?Sized>(
    op: &A,
    start: &[T],
    max_steps: usize,
) -> Vec<(f64, f64)> {
    let n = op.dim();
    let norm0 = norm(start).to_f64_lossy();
    if norm0 == 0.0 {
        return Vec::new();
    }
    let scale_ref = op.norm_bound().max(1.0);
    let mut v: Vec<Vec<T>> = Vec::new();
    let mut first = start.to_vec();
    scale(T::from_real(T::Real::lit(1.0 / norm0)), &mut first);
    v.push(first);
    let mut alpha: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![T::zero(); n];
    for j in 0..max_steps.min(n) {
        op.apply(&v[j], &mut w);
        alpha.push(real_of(dot(&v[j], &w)));
        project_out(&mut w, &v);
        let b = norm(&w).to_f64_lossy();
        if b <= 1e-10 * scale_ref || j + 1 == max_steps.min(n) {
            break;
        }
        betas.push(b);
        scale(T::from_real(T::Real::lit(1.0 / b)), &mut w);
        v.push(w.clone());
    }
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |r, c| {
        if r == c {
            alpha[r]
        } else if r + 1 == c {
            betas[r]
        } else if c + 1 == r {
            betas[c]
        } else {
            0.0
        }
    });
    let eig = t.symmetric_eigen();
    let mut nodes: Vec<(f64, f64)> = (0..k)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    nodes.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    nodes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{enumerate_sector, Sublattice};
    use crate::hamiltonian::{ExchangeCoupling, SparseOperator};
    use crate::num::Complex;
    use proptest::prelude::*;

    type C64 = Complex<f64>;

    fn h(twice: i32) -> HalfInt {
        HalfInt::from_doubled(twice)
    }

    fn ring(n: usize, s2: i32, j: f64) -> SpinModel {
        let c = SpinCluster::from_spins(
            "ring",
            (0..n).map(|k| (h(s2), if k % 2 == 0 { Sublattice::A } else { Sublattice::B }, "")),
        )
        .unwrap();
        let bonds = (0..n)
            .map(|i| ExchangeCoupling {
                i,
                j: (i + 1) % n,
                j_kelvin: j,
            })
            .collect();
        SpinModel::new(c, bonds, vec![], "").unwrap()
    }

    struct Diag(Vec<f64>);

    impl LinearOperator<f64> for Diag {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for ((yi, xi), d) in y.iter_mut().zip(x).zip(&self.0) {
                *yi = d * xi;
            }
        }
        fn norm_bound(&self) -> f64 {
            self.0.iter().fold(0.0, |a, b| a.max(b.abs()))
        }
    }

    fn lanczos_only() -> SolverOptions {
        SolverOptions {
            dense_threshold: 0,
            ..Default::default()
        }
    }

    #[test]
    fn two_by_two_diagonal() {
        let pairs = lowest_eigenpairs(&Diag(vec![-1.0, 1.0]), 1, &SolverOptions::default()).unwrap();
        assert_eq!(pairs.values, vec![-1.0]);
        assert!((pairs.vectors[0][0].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lanczos_finds_exact_degeneracies() {
        let mut d: Vec<f64> = (0..300).map(|k| k as f64 * 0.01).collect();
        d[17] = -2.0;
        d[123] = -2.0;
        d[250] = -2.0;
        d[40] = -1.5;
        let pairs = lowest_eigenpairs(&Diag(d), 4, &lanczos_only()).unwrap();
        for (got, want) in pairs.values.iter().zip([-2.0, -2.0, -2.0, -1.5]) {
            assert!((got - want).abs() < 1e-9, "{:?}", pairs.values);
        }
        assert_eq!(pairs.bottom_multiplicity(1e-7), 3);
        for a in 0..4 {
            for b in 0..4 {
                let ov = dot(&pairs.vectors[a], &pairs.vectors[b]);
                assert!((ov - if a == b { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn hexagon_ring_lanczos_matches_dense() {
        let m = ring(6, 1, 1.0);
        let b = Arc::new(enumerate_sector(m.cluster(), HalfInt::ZERO, 1000).unwrap());
        let hm = build_exchange_hamiltonian::<f64>(&m, &b).unwrap();
        let dense = lowest_eigenpairs(&hm, 1, &SolverOptions::default()).unwrap();
        let lanczos = lowest_eigenpairs(&hm, 1, &lanczos_only()).unwrap();
        assert_eq!(dense.path, SolverPath::Dense);
        assert_eq!(lanczos.path, SolverPath::Lanczos);
        assert!((dense.values[0] - lanczos.values[0]).abs() < 1e-10);
        // known six-site Heisenberg ring ground energy
        assert!((dense.values[0] + 2.802_775_637_731_995).abs() < 1e-10);
    }

    #[test]
    fn ground_state_phase_and_normalization() {
        let m = ring(8, 3, 1.0);
        let st =
            ground_state_in_sector::<f64>(&m, HalfInt::ZERO, Some(HalfInt::ZERO), 1 << 24, &lanczos_only()).unwrap();
        assert!((norm(st.amplitudes()) - 1.0).abs() < 1e-12);
        assert!(st.amplitudes()[st.phase_anchor()] >= 0.0);
        assert!(st.s_squared().abs() < 1e-8);
        assert_eq!(st.multiplet(1e-6), Some(HalfInt::ZERO));
    }

    #[test]
    fn degenerate_bottom_resolved_by_total_spin() {
        // two decoupled spin-1/2 pairs give singlet⊗singlet; adding a weak
        // coupling keeps nothing degenerate, so use a free dimer plus a spin
        // to get an S=1/2 level appearing twice in M=1/2.
        let c = SpinCluster::from_spins(
            "t",
            [
                (h(1), Sublattice::A, ""),
                (h(1), Sublattice::A, ""),
                (h(1), Sublattice::A, ""),
            ],
        )
        .unwrap();
        let m = SpinModel::new(
            c,
            vec![
                ExchangeCoupling {
                    i: 0,
                    j: 1,
                    j_kelvin: 1.0,
                },
                ExchangeCoupling {
                    i: 1,
                    j: 2,
                    j_kelvin: 1.0,
                },
                ExchangeCoupling {
                    i: 2,
                    j: 0,
                    j_kelvin: 1.0,
                },
            ],
            vec![],
            "",
        )
        .unwrap();
        let err = ground_state_in_sector::<f64>(&m, HalfInt::HALF, None, 100, &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, Error::AmbiguousMultiplet(ref v) if v.len() == 2));
        let err = ground_state_in_sector::<f64>(&m, HalfInt::HALF, Some(HalfInt::HALF), 100, &SolverOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::AmbiguousMultiplet(_)));
    }

    #[test]
    fn degenerate_bottom_with_distinct_spins() {
        // a free spin-1/2 next to a ferromagnetic dimer: at J=0 for the
        // third spin the M=1/2 bottom mixes S=3/2 and S=1/2
        let c = SpinCluster::from_spins(
            "t",
            [
                (h(1), Sublattice::A, ""),
                (h(1), Sublattice::A, ""),
                (h(1), Sublattice::A, ""),
            ],
        )
        .unwrap();
        let m = SpinModel::new(
            c,
            vec![ExchangeCoupling {
                i: 0,
                j: 1,
                j_kelvin: -1.0,
            }],
            vec![],
            "",
        )
        .unwrap();
        for opts in [SolverOptions::default(), lanczos_only()] {
            let hi = ground_state_in_sector::<f64>(&m, HalfInt::HALF, Some(h(3)), 100, &opts).unwrap();
            assert!((hi.s_squared() - 3.75).abs() < 1e-8);
            let lo = ground_state_in_sector::<f64>(&m, HalfInt::HALF, Some(HalfInt::HALF), 100, &opts).unwrap();
            assert!((lo.s_squared() - 0.75).abs() < 1e-8);
            assert!((lo.energy().unwrap() + 0.25).abs() < 1e-10);
        }
    }

    #[test]
    fn spectral_measure_of_total_spin() {
        let m = ring(4, 1, 1.0);
        let b = Arc::new(enumerate_sector(m.cluster(), HalfInt::ZERO, 100).unwrap());
        let all: Vec<usize> = (0..4).collect();
        let s2 = PairOperator::spin_squared(m.cluster(), &all);
        // a single product state |↑↓↑↓⟩ spreads over S = 0, 1, 2
        let mut psi = vec![0.0f64; b.len()];
        let k = b.index_of_config(&[h(1), h(-1), h(1), h(-1)]).unwrap();
        psi[k] = 1.0;
        let nodes = spectral_measure(&s2.on(&b), &psi, 50);
        let total: f64 = nodes.iter().map(|n| n.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let mean: f64 = nodes.iter().map(|n| n.0 * n.1).sum();
        let direct = s2.expectation(&b, &psi).re;
        assert!((mean - direct).abs() < 1e-12);
        for (x, _) in nodes {
            let s = effective_spin(x);
            assert!((s - s.round()).abs() < 1e-9);
        }
    }

    fn random_hermitian(n: usize, seed: u64) -> DMatrix<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| {
            C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        (&a + a.adjoint()) * C64::new(0.5, 0.0)
    }

    struct Dense(DMatrix<C64>);

    impl LinearOperator<C64> for Dense {
        fn dim(&self) -> usize {
            self.0.nrows()
        }
        fn apply(&self, x: &[C64], y: &mut [C64]) {
            let v = &self.0 * nalgebra::DVector::from_column_slice(x);
            y.copy_from_slice(v.as_slice());
        }
        fn norm_bound(&self) -> f64 {
            self.0
                .row_iter()
                .map(|r| r.iter().map(|v| v.norm()).sum::<f64>())
                .fold(0.0, f64::max)
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn lanczos_agrees_with_dense_on_random_hermitian(n in 70usize..160, seed in 0u64..10_000, k in 1usize..4) {
            let op = Dense(random_hermitian(n, seed));
            let dense = lowest_eigenpairs(&op, k, &SolverOptions::default()).unwrap();
            let lanczos = lowest_eigenpairs(&op, k, &SolverOptions { krylov_dim: 32, ..lanczos_only() }).unwrap();
            for i in 0..k {
                prop_assert!((dense.values[i] - lanczos.values[i]).abs() < 1e-8 * dense.norm_bound);
                prop_assert!(lanczos.residuals[i] <= 1e-10 * lanczos.norm_bound * 1.000001);
            }
        }

        // the Krylov space fills the whole complement of the locked vectors
        #[test]
        fn lanczos_on_spaces_smaller_than_the_krylov_dimension(n in 8usize..64, seed in 0u64..10_000) {
            let op = Dense(random_hermitian(n, seed));
            let dense = lowest_eigenpairs(&op, 4, &SolverOptions::default()).unwrap();
            let lanczos = lowest_eigenpairs(&op, 4, &lanczos_only()).unwrap();
            for i in 0..4 {
                prop_assert!((dense.values[i] - lanczos.values[i]).abs() < 1e-8 * dense.norm_bound);
            }
        }

        #[test]
        fn phase_anchor_is_real_nonnegative(seed in 0u64..10_000) {
            let c = Arc::new(SpinCluster::from_spins("t", (0..4).map(|_| (h(2), Sublattice::A, ""))).unwrap());
            let b = Arc::new(enumerate_sector(&c, HalfInt::ZERO, 1000).unwrap());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let amps = random_vector::<C64>(b.len(), &mut rng);
            let st = QuantumState::new(b, amps, None).unwrap();
            let a = st.amplitudes()[st.phase_anchor()];
            prop_assert!(a.im == 0.0 && a.re >= 0.0);
            prop_assert!((norm(st.amplitudes()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sector_grounds_share_the_multiplet() {
        // alternating 1 - 1/2 ring: ferrimagnetic S = 3/2 ground multiplet
        let c = SpinCluster::from_spins(
            "t",
            (0..6).map(|k| (if k % 2 == 0 { h(2) } else { h(1) }, Sublattice::A, "")),
        )
        .unwrap();
        let bonds = (0..6)
            .map(|i| ExchangeCoupling {
                i,
                j: (i + 1) % 6,
                j_kelvin: 1.0,
            })
            .collect();
        let m = SpinModel::new(c, bonds, vec![], "").unwrap();
        let e: Vec<f64> = [-1, 1, 3]
            .iter()
            .map(|&m2| {
                let b = Arc::new(enumerate_sector(m.cluster(), h(m2), 1000).unwrap());
                let hm: SparseOperator<f64> = build_exchange_hamiltonian(&m, &b).unwrap();
                lowest_eigenpairs(&hm, 1, &lanczos_only()).unwrap().values[0]
            })
            .collect();
        assert!((e[0] - e[1]).abs() < 1e-6 * e[0].abs());
        assert!((e[2] - e[1]).abs() < 1e-6 * e[0].abs());
    }
}
