//! One- and two-spin moments of sector states and of two-component
//! superpositions `(|Ψ₁⟩ + e^{iφ}|Ψ₂⟩)/√2`.
//!
//! Every moment is assembled from ladder images `s_j^b |χ⟩`, `b ∈ {+, -, z}`,
//! which live in the sectors `M_χ + Δ_b`. An inner product between two images
//! is only formed when their sectors coincide, so the selection rules
//! (one-spin cross terms need `|ΔM| ≤ 1`, two-spin ones `|ΔM| ≤ 2`) hold by
//! construction.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{SectorBasis, SectorCache, Sublattice};
use crate::eigen::{effective_spin, spectral_measure, QuantumState};
use crate::error::{Error, Result};
use crate::half::HalfInt;
use crate::hamiltonian::{apply_single_spin, PairOperator, SpinComponent};
use crate::num::{Complex, Real, Scalar};

type C64 = Complex<f64>;

/// Ladder components in storage order.
const LADDER: [SpinComponent; 3] = [SpinComponent::Plus, SpinComponent::Minus, SpinComponent::Z];
const PLUS: usize = 0;
const MINUS: usize = 1;
const Z: usize = 2;

/// `(s_a)† = s_ā`
const ADJOINT: [usize; 3] = [MINUS, PLUS, Z];

/// Cartesian components in terms of ladder ones: `s_α = Σ_a U[α][a] s_a`.
fn cartesian() -> [[C64; 3]; 3] {
    let z = C64::new(0.0, 0.0);
    [
        [C64::new(0.5, 0.0), C64::new(0.5, 0.0), z],
        [C64::new(0.0, -0.5), C64::new(0.0, 0.5), z],
        [z, z, C64::new(1.0, 0.0)],
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "index")]
pub enum Subject {
    Component(usize),
    Superposition,
}

/// One-spin vector `b[3i+α] = ⟨s_iα⟩` and symmetrized two-spin matrix
/// `C[3i+α, 3j+β] = Re⟨(s_iα s_jβ + s_jβ s_iα)/2⟩`, with `α ∈ {x, y, z}`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationData {
    pub b: DVector<f64>,
    pub c: DMatrix<f64>,
    pub subject: Subject,
}

impl CorrelationData {
    pub fn n_sites(&self) -> usize {
        self.b.len() / 3
    }

    /// `Σ_α C[iα, iα]`, equal to `s_i(s_i+1)`.
    pub fn site_trace(&self, i: usize) -> f64 {
        (0..3).map(|a| self.c[(3 * i + a, 3 * i + a)]).sum()
    }

    /// Rows `i, α, j, β, value` of the two-spin matrix.
    pub fn to_csv(&self) -> String {
        const AXES: [&str; 3] = ["x", "y", "z"];
        let mut out = String::from("i,alpha,j,beta,value\n");
        let n = self.n_sites();
        for i in 0..n {
            for (a, an) in AXES.iter().enumerate() {
                for j in 0..n {
                    for (b, bn) in AXES.iter().enumerate() {
                        let _ = writeln!(out, "{i},{an},{j},{bn},{:e}", self.c[(3 * i + a, 3 * j + b)]);
                    }
                }
            }
        }
        out
    }
}

type Image = Option<(Arc<SectorBasis>, Vec<C64>)>;

/// Images `s_j^b |χ⟩` of one state for every site and ladder component.
struct LadderImages {
    m: HalfInt,
    /// `[site][component]`, `None` when the target sector is empty.
    images: Vec<[Image; 3]>,
}

impl LadderImages {
    fn new<T: Scalar>(psi: &QuantumState<T>, sectors: &SectorCache) -> Result<Self> {
        let basis = psi.basis();
        let n = psi.cluster().len();
        let amps: Vec<C64> = psi.amplitudes().iter().map(|&a| to_c64(a)).collect();
        let targets: Vec<Option<Arc<SectorBasis>>> = [1, -1, 0]
            .iter()
            .map(|&d| {
                if d == 0 {
                    Ok(Some(Arc::clone(basis)))
                } else {
                    sectors.get_if_valid(psi.m() + HalfInt::from_doubled(2 * d))
                }
            })
            .collect::<Result<_>>()?;
        let images = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut row: [Option<(Arc<SectorBasis>, Vec<C64>)>; 3] = [None, None, None];
                for (slot, comp) in LADDER.iter().enumerate() {
                    if let Some(out) = &targets[slot] {
                        let v = apply_single_spin(basis, out, j, *comp, &amps)?;
                        row[slot] = Some((Arc::clone(out), v));
                    }
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LadderImages { m: psi.m(), images })
    }

    fn image(&self, site: usize, comp: usize) -> Option<&(Arc<SectorBasis>, Vec<C64>)> {
        self.images[site][comp].as_ref()
    }
}

fn to_c64<T: Scalar>(a: T) -> C64 {
    let c = a.to_complex();
    C64::new(c.re.to_f64_lossy(), c.im.to_f64_lossy())
}

fn cdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter()
        .zip(b)
        .fold(C64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

/// Transition moments `t1[iα] = ⟨φ|s_iα|χ⟩` and `t2[iα, jβ] = ⟨φ|s_iα s_jβ|χ⟩`.
#[derive(Clone, Debug)]
struct Moments {
    t1: DVector<C64>,
    t2: DMatrix<C64>,
}

fn transition_moments(phi_amps: &[C64], phi: &LadderImages, chi: &LadderImages) -> Moments {
    let n = phi.images.len();
    let u = cartesian();
    let mut t1 = DVector::from_element(3 * n, C64::new(0.0, 0.0));
    for i in 0..n {
        let mut g = [C64::new(0.0, 0.0); 3];
        for (a, ga) in g.iter_mut().enumerate() {
            if let Some((basis, v)) = chi.image(i, a) {
                if basis.m() == phi.m {
                    *ga = cdot(phi_amps, v);
                }
            }
        }
        for al in 0..3 {
            t1[3 * i + al] = (0..3).map(|a| u[al][a] * g[a]).sum();
        }
    }
    let blocks: Vec<(usize, usize, [[C64; 3]; 3])> = (0..n * n)
        .into_par_iter()
        .map(|pair| {
            let (i, j) = (pair / n, pair % n);
            // G[a][b] = ⟨s_i^ā φ | s_j^b χ⟩
            let mut g = [[C64::new(0.0, 0.0); 3]; 3];
            for (a, ga) in g.iter_mut().enumerate() {
                let Some((bw, w)) = phi.image(i, ADJOINT[a]) else {
                    continue;
                };
                for (b, gab) in ga.iter_mut().enumerate() {
                    if let Some((bv, v)) = chi.image(j, b) {
                        if bw.m() == bv.m() {
                            *gab = cdot(w, v);
                        }
                    }
                }
            }
            let mut cart = [[C64::new(0.0, 0.0); 3]; 3];
            for (al, row) in cart.iter_mut().enumerate() {
                for (be, x) in row.iter_mut().enumerate() {
                    for a in 0..3 {
                        for b in 0..3 {
                            *x += u[al][a] * u[be][b] * g[a][b];
                        }
                    }
                }
            }
            (i, j, cart)
        })
        .collect();
    let mut t2 = DMatrix::from_element(3 * n, 3 * n, C64::new(0.0, 0.0));
    for (i, j, cart) in blocks {
        for al in 0..3 {
            for be in 0..3 {
                t2[(3 * i + al, 3 * j + be)] = cart[al][be];
            }
        }
    }
    Moments { t1, t2 }
}

/// Real symmetric part `Re (t2 + t2ᵀ)/2` scaled by a phase.
fn symmetrized(t2: &DMatrix<C64>, phase: C64) -> DMatrix<f64> {
    let n = t2.nrows();
    DMatrix::from_fn(n, n, |r, c| (phase * (t2[(r, c)] + t2[(c, r)]) * 0.5).re)
}

fn check_cache<T: Scalar>(psi: &QuantumState<T>, sectors: &SectorCache) -> Result<()> {
    if psi.basis().belongs_to(sectors.cluster()) {
        Ok(())
    } else {
        Err(Error::BasisMismatch)
    }
}

pub fn correlations_of_state<T: Scalar>(psi: &QuantumState<T>, sectors: &SectorCache) -> Result<CorrelationData> {
    check_cache(psi, sectors)?;
    let images = LadderImages::new(psi, sectors)?;
    let amps: Vec<C64> = psi.amplitudes().iter().map(|&a| to_c64(a)).collect();
    let mo = transition_moments(&amps, &images, &images);
    Ok(CorrelationData {
        b: mo.t1.map(|x| x.re),
        c: symmetrized(&mo.t2, C64::new(1.0, 0.0)),
        subject: Subject::Component(0),
    })
}

/// Two sector states combined as `(|Ψ₁⟩ + e^{iφ}|Ψ₂⟩)/√2`.
#[derive(Clone, Debug)]
pub struct Superposition<T> {
    psi1: QuantumState<T>,
    psi2: QuantumState<T>,
    relative_phase: f64,
}

impl<T: Scalar> Superposition<T> {
    pub fn new(psi1: QuantumState<T>, psi2: QuantumState<T>, relative_phase: f64) -> Result<Self> {
        if !psi1.basis().belongs_to(psi2.cluster()) {
            return Err(Error::InvalidSuperposition(
                "components live on different clusters".into(),
            ));
        }
        if psi1.m() == psi2.m() {
            let ov = psi1.overlap(&psi2).modulus().to_f64_lossy();
            if ov >= 1e-10 {
                return Err(Error::InvalidSuperposition(format!(
                    "components in the same sector must be orthogonal (|overlap| = {ov:e})"
                )));
            }
        }
        Ok(Superposition {
            psi1,
            psi2,
            relative_phase,
        })
    }

    pub fn psi1(&self) -> &QuantumState<T> {
        &self.psi1
    }

    pub fn psi2(&self) -> &QuantumState<T> {
        &self.psi2
    }

    pub fn relative_phase(&self) -> f64 {
        self.relative_phase
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.relative_phase = phase;
        self
    }

    /// `|ΔM|` between the components.
    pub fn delta_m(&self) -> HalfInt {
        (self.psi1.m() - self.psi2.m()).abs()
    }
}

/// Component and cross moments of a superposition, reusable across phases.
#[derive(Clone, Debug)]
pub struct SuperpositionMoments {
    component: [CorrelationData; 2],
    cross: Moments,
    has_cross: bool,
}

impl SuperpositionMoments {
    pub fn new<T: Scalar>(sup: &Superposition<T>, sectors: &SectorCache) -> Result<Self> {
        check_cache(&sup.psi1, sectors)?;
        let im1 = LadderImages::new(&sup.psi1, sectors)?;
        let im2 = LadderImages::new(&sup.psi2, sectors)?;
        let a1: Vec<C64> = sup.psi1.amplitudes().iter().map(|&a| to_c64(a)).collect();
        let a2: Vec<C64> = sup.psi2.amplitudes().iter().map(|&a| to_c64(a)).collect();
        let m11 = transition_moments(&a1, &im1, &im1);
        let m22 = transition_moments(&a2, &im2, &im2);
        let has_cross = sup.delta_m().twice() <= 4;
        let cross = if has_cross {
            transition_moments(&a1, &im1, &im2)
        } else {
            let n = 3 * im1.images.len();
            Moments {
                t1: DVector::from_element(n, C64::new(0.0, 0.0)),
                t2: DMatrix::from_element(n, n, C64::new(0.0, 0.0)),
            }
        };
        let one = C64::new(1.0, 0.0);
        Ok(SuperpositionMoments {
            component: [
                CorrelationData {
                    b: m11.t1.map(|x| x.re),
                    c: symmetrized(&m11.t2, one),
                    subject: Subject::Component(1),
                },
                CorrelationData {
                    b: m22.t1.map(|x| x.re),
                    c: symmetrized(&m22.t2, one),
                    subject: Subject::Component(2),
                },
            ],
            cross,
            has_cross,
        })
    }

    /// Moments of component 1 or 2.
    pub fn component(&self, k: usize) -> &CorrelationData {
        &self.component[k - 1]
    }

    /// Whether any cross matrix element is structurally allowed.
    pub fn has_cross_terms(&self) -> bool {
        self.has_cross
    }

    pub fn at_phase(&self, phase: f64) -> CorrelationData {
        let [c1, c2] = &self.component;
        let mut b = (&c1.b + &c2.b) * 0.5;
        let mut c = (&c1.c + &c2.c) * 0.5;
        if self.has_cross {
            let e = C64::from_polar(1.0, phase);
            b += self.cross.t1.map(|x| (e * x).re);
            c += symmetrized(&self.cross.t2, e);
        }
        CorrelationData {
            b,
            c,
            subject: Subject::Superposition,
        }
    }
}

/// Places `n`-site moments at `offset` inside a cluster of `n_total` sites
/// whose other sites form product factors in fixed states with zero
/// single-spin moments.
fn check_spectators(n: usize, n_total: usize, offset: usize, spectators: &[(usize, &CorrelationData)]) -> Result<()> {
    let mut used = vec![false; n_total];
    let mut claim = |off: usize, len: usize| -> Result<()> {
        if off + len > n_total {
            return Err(Error::DimensionMismatch {
                expected: 3 * n_total,
                got: 3 * (off + len),
            });
        }
        for u in &mut used[off..off + len] {
            if std::mem::replace(u, true) {
                return Err(Error::InvalidArgument("overlapping blocks".into()));
            }
        }
        Ok(())
    };
    claim(offset, n)?;
    for (off, d) in spectators {
        if d.b.amax() > 1e-10 {
            return Err(Error::InvalidArgument(
                "spectator blocks must have zero single-spin moments".into(),
            ));
        }
        claim(*off, d.n_sites())?;
    }
    if used.iter().any(|u| !u) {
        return Err(Error::InvalidArgument("blocks do not cover the cluster".into()));
    }
    Ok(())
}

impl CorrelationData {
    /// Moments of `self ⊗ spectators`, with spectator `k` placed at its
    /// site offset.
    pub fn with_spectators(
        &self,
        n_total: usize,
        offset: usize,
        spectators: &[(usize, &CorrelationData)],
    ) -> Result<Self> {
        check_spectators(self.n_sites(), n_total, offset, spectators)?;
        let mut b = DVector::zeros(3 * n_total);
        let mut c = DMatrix::zeros(3 * n_total, 3 * n_total);
        let n = 3 * self.n_sites();
        b.rows_mut(3 * offset, n).copy_from(&self.b);
        c.view_mut((3 * offset, 3 * offset), (n, n)).copy_from(&self.c);
        for (off, d) in spectators {
            let m = 3 * d.n_sites();
            c.view_mut((3 * off, 3 * off), (m, m)).copy_from(&d.c);
        }
        Ok(CorrelationData {
            b,
            c,
            subject: self.subject,
        })
    }
}

impl SuperpositionMoments {
    /// Moments of the superposition `(|ψ₁⟩ + e^{iφ}|ψ₂⟩) ⊗ spectators`. The
    /// spectators do not enter the cross terms because `ψ₁ ⊥ ψ₂`.
    pub fn with_spectators(
        &self,
        n_total: usize,
        offset: usize,
        spectators: &[(usize, &CorrelationData)],
    ) -> Result<Self> {
        let component = [
            self.component[0].with_spectators(n_total, offset, spectators)?,
            self.component[1].with_spectators(n_total, offset, spectators)?,
        ];
        let n = self.cross.t1.len();
        let zero = C64::new(0.0, 0.0);
        let mut t1 = DVector::from_element(3 * n_total, zero);
        let mut t2 = DMatrix::from_element(3 * n_total, 3 * n_total, zero);
        t1.rows_mut(3 * offset, n).copy_from(&self.cross.t1);
        t2.view_mut((3 * offset, 3 * offset), (n, n)).copy_from(&self.cross.t2);
        Ok(SuperpositionMoments {
            component,
            cross: Moments { t1, t2 },
            has_cross: self.has_cross,
        })
    }
}

pub fn correlations_of_superposition<T: Scalar>(
    sup: &Superposition<T>,
    sectors: &SectorCache,
) -> Result<CorrelationData> {
    Ok(SuperpositionMoments::new(sup, sectors)?.at_phase(sup.relative_phase))
}

/// Phases used by the optional sweep.
pub const PHASE_SWEEP: [f64; 4] = [
    0.0,
    std::f64::consts::FRAC_PI_2,
    std::f64::consts::PI,
    3.0 * std::f64::consts::FRAC_PI_2,
];

/// Mean and variance of `S_z^A - S_z^B`.
pub fn staggered_magnetization_stats(data: &CorrelationData, signs: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut second = 0.0;
    for (i, si) in signs.iter().enumerate() {
        mean += si * data.b[3 * i + 2];
        for (j, sj) in signs.iter().enumerate() {
            second += si * sj * data.c[(3 * i + 2, 3 * j + 2)];
        }
    }
    (mean, second - mean * mean)
}

/// Expected spin quantum number `Σ_S p(S)·S` of the sites in `sublattice`,
/// with `p(S)` the weight of the state on the sublattice `S²` eigenspaces.
pub fn partial_spin_sum<T: Scalar>(psi: &QuantumState<T>, sublattice: Sublattice) -> f64 {
    let cluster = psi.cluster();
    let sites = cluster.sites_in(sublattice);
    if sites.is_empty() {
        return 0.0;
    }
    let op = PairOperator::spin_squared(cluster, &sites);
    let levels = (2.0 * cluster.sublattice_max(sublattice).as_f64()) as usize + 2;
    spectral_measure(&op.on(psi.basis()), psi.amplitudes(), 4 * levels + 16)
        .iter()
        .map(|&(x, w)| w * effective_spin(x))
        .sum()
}
