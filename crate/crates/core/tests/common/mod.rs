//! Brute-force references shared by the integration tests. Nothing here
//! calls the library's operator, correlation or partial-trace code.

#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::DMatrix;
use spincat::hamiltonian::SpinModel;
use spincat::{Complex, QuantumState, Real as _, Scalar, SectorBasis, SpinCluster};

pub type C = Complex<f64>;

/// Collects criterion outcomes, prints one line each and fails at the end.
#[derive(Default)]
pub struct Checklist {
    failed: Vec<String>,
}

impl Checklist {
    pub fn record(&mut self, name: &str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(name.to_string());
        }
    }

    /// `|got - want| <= tol·|want|`
    pub fn rel(&mut self, name: &str, got: f64, want: f64, tol: f64) {
        let ok = (got - want).abs() <= tol * want.abs();
        self.record(
            name,
            ok,
            format!("computed {got:.6}, expected {want} ±{}%", tol * 100.0),
        );
    }

    pub fn abs(&mut self, name: &str, got: f64, want: f64, tol: f64) {
        let ok = (got - want).abs() <= tol;
        self.record(name, ok, format!("computed {got:.12}, expected {want} ±{tol:e}"));
    }

    pub fn exact<T: PartialEq + std::fmt::Debug>(&mut self, name: &str, got: T, want: T) {
        let ok = got == want;
        self.record(name, ok, format!("computed {got:?}, expected {want:?}"));
    }

    pub fn truth(&mut self, name: &str, ok: bool, detail: String) {
        self.record(name, ok, detail);
    }

    pub fn finish(self) {
        assert!(self.failed.is_empty(), "failed criteria: {:?}", self.failed);
    }
}

/// Spin matrices `(s_x, s_y, s_z)` in the order `m = -s, …, s`.
pub fn spin_matrices(twice_s: i32) -> [DMatrix<C>; 3] {
    let d = (twice_s + 1) as usize;
    let s = twice_s as f64 / 2.0;
    let mut plus = DMatrix::<C>::zeros(d, d);
    let mut z = DMatrix::<C>::zeros(d, d);
    for k in 0..d {
        let m = -s + k as f64;
        z[(k, k)] = C::new(m, 0.0);
        if k + 1 < d {
            plus[(k + 1, k)] = C::new((s * (s + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
    }
    let minus = plus.adjoint();
    let x = (&plus + &minus) * C::new(0.5, 0.0);
    let y = (&plus - &minus) * C::new(0.0, -0.5);
    [x, y, z]
}

/// Mixed-radix digits of a product-state key, site 0 most significant,
/// digit `0` meaning `m = -s`.
pub fn digits(cluster: &SpinCluster, mut key: u64) -> Vec<usize> {
    let n = cluster.len();
    let mut out = vec![0; n];
    for i in (0..n).rev() {
        let r = (cluster.spin(i).twice() + 1) as u64;
        out[i] = (key % r) as usize;
        key /= r;
    }
    out
}

pub fn key_of(cluster: &SpinCluster, digits: &[usize]) -> u64 {
    digits
        .iter()
        .enumerate()
        .fold(0u64, |k, (i, &d)| k * (cluster.spin(i).twice() + 1) as u64 + d as u64)
}

/// Sparse vector over product-state keys.
pub type KeyVector = HashMap<u64, C>;

pub fn to_key_vector<T: Scalar>(psi: &QuantumState<T>, weight: C) -> KeyVector {
    psi.basis()
        .keys()
        .iter()
        .zip(psi.amplitudes())
        .map(|(&k, &a)| {
            let a = a.to_complex();
            (k, weight * C::new(a.re.to_f64_lossy(), a.im.to_f64_lossy()))
        })
        .collect()
}

fn add_into(acc: &mut KeyVector, other: KeyVector) {
    for (k, v) in other {
        *acc.entry(k).or_insert(C::new(0.0, 0.0)) += v;
    }
}

/// `(|ψ₁⟩ + e^{iφ}|ψ₂⟩)/√2`
pub fn superpose<T: Scalar>(psi1: &QuantumState<T>, psi2: &QuantumState<T>, phase: f64) -> KeyVector {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = to_key_vector(psi1, C::new(h, 0.0));
    add_into(&mut v, to_key_vector(psi2, C::from_polar(h, phase)));
    v
}

/// `s_{site, α} |v⟩` by explicit matrix action.
pub fn apply_site(
    cluster: &SpinCluster,
    mats: &[[DMatrix<C>; 3]],
    site: usize,
    alpha: usize,
    v: &KeyVector,
) -> KeyVector {
    let mut out = KeyVector::new();
    let m = &mats[site][alpha];
    for (&key, &amp) in v {
        let mut d = digits(cluster, key);
        let from = d[site];
        for to in 0..m.nrows() {
            let e = m[(to, from)];
            if e.norm() == 0.0 {
                continue;
            }
            d[site] = to;
            *out.entry(key_of(cluster, &d)).or_insert(C::new(0.0, 0.0)) += e * amp;
        }
    }
    out
}

pub fn inner(a: &KeyVector, b: &KeyVector) -> C {
    a.iter().filter_map(|(k, x)| b.get(k).map(|y| x.conj() * y)).sum()
}

pub fn site_matrices(cluster: &SpinCluster) -> Vec<[DMatrix<C>; 3]> {
    (0..cluster.len())
        .map(|i| spin_matrices(cluster.spin(i).twice()))
        .collect()
}

/// `(b, C)` with `b[3i+α] = ⟨s_iα⟩` and `C` the symmetrized two-spin
/// expectation, by explicit operator application.
pub fn brute_correlations(cluster: &SpinCluster, v: &KeyVector) -> (Vec<f64>, DMatrix<f64>) {
    let n = cluster.len();
    let mats = site_matrices(cluster);
    let mut images = Vec::with_capacity(3 * n);
    for i in 0..n {
        for a in 0..3 {
            images.push(apply_site(cluster, &mats, i, a, v));
        }
    }
    let b = images.iter().map(|im| inner(v, im).re).collect();
    let mut c = DMatrix::zeros(3 * n, 3 * n);
    for p in 0..3 * n {
        for q in 0..3 * n {
            // ⟨s_p s_q⟩ = ⟨s_p ψ | s_q ψ⟩ for Hermitian s_p
            c[(p, q)] = inner(&images[p], &images[q]).re;
        }
    }
    (b, c)
}

/// Dense sector Hamiltonian `Σ J s_i·s_j + Σ Dz (s_ix s_jy - s_iy s_jx)`
/// assembled from explicit spin matrices.
pub fn brute_sector_hamiltonian(model: &SpinModel, basis: &SectorBasis) -> DMatrix<C> {
    let cluster = model.cluster();
    let mats = site_matrices(cluster);
    let n = basis.len();
    let index: HashMap<u64, usize> = basis.keys().iter().enumerate().map(|(k, &key)| (key, k)).collect();
    let mut terms: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    for c in model.exchange() {
        for a in 0..3 {
            terms.push((c.i, c.j, a, a, c.j_kelvin));
        }
    }
    for d in model.dm() {
        terms.push((d.i, d.j, 0, 1, d.dz_kelvin));
        terms.push((d.i, d.j, 1, 0, -d.dz_kelvin));
    }
    let mut h = DMatrix::<C>::zeros(n, n);
    for (col, &key) in basis.keys().iter().enumerate() {
        let d0 = digits(cluster, key);
        for &(i, j, a, b, w) in &terms {
            let (mi, mj) = (&mats[i][a], &mats[j][b]);
            for ti in 0..mi.nrows() {
                let ei = mi[(ti, d0[i])];
                if ei.norm() == 0.0 {
                    continue;
                }
                for tj in 0..mj.nrows() {
                    let ej = mj[(tj, d0[j])];
                    if ej.norm() == 0.0 {
                        continue;
                    }
                    let mut d = d0.clone();
                    d[i] = ti;
                    d[j] = tj;
                    if let Some(&row) = index.get(&key_of(cluster, &d)) {
                        h[(row, col)] += ei * ej * w;
                    }
                }
            }
        }
    }
    h
}

/// Reduced density matrix on `sites` (in the given order) by summing over
/// complement configurations of the full product-state vector.
pub fn brute_rdm(cluster: &SpinCluster, v: &KeyVector, sites: &[usize]) -> DMatrix<C> {
    let dims: Vec<usize> = sites.iter().map(|&s| (cluster.spin(s).twice() + 1) as usize).collect();
    let dim: usize = dims.iter().product();
    let mut by_rest: HashMap<Vec<usize>, Vec<(usize, C)>> = HashMap::new();
    for (&key, &amp) in v {
        let d = digits(cluster, key);
        let a = sites.iter().zip(&dims).fold(0, |acc, (&s, &r)| acc * r + d[s]);
        let rest: Vec<usize> = (0..cluster.len())
            .filter(|i| !sites.contains(i))
            .map(|i| d[i])
            .collect();
        by_rest.entry(rest).or_default().push((a, amp));
    }
    let mut rho = DMatrix::<C>::zeros(dim, dim);
    for entries in by_rest.values() {
        for &(a, x) in entries {
            for &(b, y) in entries {
                rho[(a, b)] += x * y.conj();
            }
        }
    }
    rho
}

/// Zero rows and columns are dropped first; the complex eigensolver can
/// return NaN on large, mostly empty matrices.
pub fn hermitian_trace_norm(m: &DMatrix<C>) -> f64 {
    let live: Vec<usize> = (0..m.nrows())
        .filter(|&i| m.row(i).iter().any(|x| x.norm() > 0.0))
        .collect();
    let sub = DMatrix::from_fn(live.len(), live.len(), |a, b| m[(live[a], live[b])]);
    sub.symmetric_eigenvalues().iter().map(|x| x.abs()).sum()
}

/// Helstrom probability `½ + ¼‖ρ₁ - ρ₂‖₁` from full product-state vectors.
pub fn brute_probability(cluster: &SpinCluster, v1: &KeyVector, v2: &KeyVector, sites: &[usize]) -> f64 {
    let d = brute_rdm(cluster, v1, sites) - brute_rdm(cluster, v2, sites);
    0.5 + 0.25 * hermitian_trace_norm(&d)
}

/// Every set partition of `0..n`, as lists of blocks.
pub fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..cur.len() {
            cur[b].push(i);
            rec(i + 1, n, cur, out);
            cur[b].pop();
        }
        cur.push(vec![i]);
        rec(i + 1, n, cur, out);
        cur.pop();
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), &mut out);
    out
}

/// Largest number of blocks of a set partition whose blocks all exceed
/// `1 - delta`, evaluated with [`brute_probability`].
pub fn brute_d_lm(cluster: &SpinCluster, v1: &KeyVector, v2: &KeyVector, delta: f64) -> usize {
    let n = cluster.len();
    let mut cache: HashMap<Vec<usize>, bool> = HashMap::new();
    let mut best = 0;
    for p in set_partitions(n) {
        let good = p.iter().all(|block| {
            *cache
                .entry(block.clone())
                .or_insert_with(|| brute_probability(cluster, v1, v2, block) > 1.0 - delta)
        });
        if good {
            best = best.max(p.len());
        }
    }
    best
}
