//! Registry of the molecular clusters: geometry, couplings, sublattices and
//! the special states some of them need.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::basis::{SectorCache, SpinCluster, Sublattice};
use crate::correlations::{CorrelationData, SuperpositionMoments};
use crate::eigen::{ground_state_in_sector, QuantumState, SolverOptions};
use crate::error::{Error, Result};
use crate::fisher::{ideal_ferrimagnet_sizes, DirectionField, IdealSizes};
use crate::half::HalfInt;
use crate::hamiltonian::{DmCoupling, ExchangeCoupling, SpinModel};
use crate::num::Complex;

type C64 = Complex<f64>;

fn h2(twice: i32) -> HalfInt {
    HalfInt::from_doubled(twice)
}

fn bond(i: usize, j: usize, j_kelvin: f64) -> ExchangeCoupling {
    ExchangeCoupling { i, j, j_kelvin }
}

/// Exchange parameters of the two Mn12 parameter sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Mn12Set {
    One,
    Two,
}

/// Entries of the registry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKey {
    Mn12Set1,
    Mn12Set2,
    Fe8,
    /// Alternating 12-site ring with `s_B = 1/2` and the given `s_A`.
    Mn6Family(HalfInt),
    Fe4,
    Cr7Ni,
    V15Effective,
    Mn10ClosedForm,
    TbClosedForm,
    /// A model loaded from a file.
    Custom,
}

impl ModelKey {
    pub fn all() -> Vec<ModelKey> {
        vec![
            ModelKey::Mn12Set1,
            ModelKey::Mn12Set2,
            ModelKey::Fe8,
            ModelKey::Mn6Family(h2(5)),
            ModelKey::Fe4,
            ModelKey::Cr7Ni,
            ModelKey::V15Effective,
            ModelKey::Mn10ClosedForm,
            ModelKey::TbClosedForm,
        ]
    }
}

impl fmt::Display for ModelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKey::Mn12Set1 => f.write_str("mn12_set1"),
            ModelKey::Mn12Set2 => f.write_str("mn12_set2"),
            ModelKey::Fe8 => f.write_str("fe8"),
            ModelKey::Mn6Family(s) if *s == h2(5) => f.write_str("mn6"),
            ModelKey::Mn6Family(s) => write!(f, "mn6_family:{s}"),
            ModelKey::Fe4 => f.write_str("fe4"),
            ModelKey::Cr7Ni => f.write_str("cr7ni"),
            ModelKey::V15Effective => f.write_str("v15_effective"),
            ModelKey::Mn10ClosedForm => f.write_str("mn10"),
            ModelKey::TbClosedForm => f.write_str("tb"),
            ModelKey::Custom => f.write_str("custom"),
        }
    }
}

impl FromStr for ModelKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("mn6_family:").or_else(|| lower.strip_prefix("mn6:")) {
            return Ok(ModelKey::Mn6Family(rest.parse()?));
        }
        Ok(match lower.as_str() {
            "mn12_set1" | "mn12" | "mn12(1)" => ModelKey::Mn12Set1,
            "mn12_set2" | "mn12(2)" => ModelKey::Mn12Set2,
            "fe8" => ModelKey::Fe8,
            "mn6" | "mn6_family" => ModelKey::Mn6Family(h2(5)),
            "fe4" => ModelKey::Fe4,
            "cr7ni" => ModelKey::Cr7Ni,
            "v15" | "v15_effective" => ModelKey::V15Effective,
            "mn10" | "mn10_closed_form" => ModelKey::Mn10ClosedForm,
            "tb" | "tb_closed_form" => ModelKey::TbClosedForm,
            _ => return Err(Error::UnknownModel(s.to_string())),
        })
    }
}

/// What a registry key resolves to.
#[derive(Clone, Debug)]
pub enum EntryKind {
    Exchange(SpinModel),
    V15(V15Effective),
    /// Polarized ferromagnetic cluster analysed in closed form.
    ClosedForm(SpinCluster),
}

#[derive(Clone, Debug)]
pub struct ModelEntry {
    pub key: ModelKey,
    pub kind: EntryKind,
    pub ground_s: HalfInt,
    pub notes: String,
}

impl ModelEntry {
    pub fn model(&self) -> Option<&SpinModel> {
        match &self.kind {
            EntryKind::Exchange(m) => Some(m),
            _ => None,
        }
    }

    pub fn cluster(&self) -> Arc<SpinCluster> {
        match &self.kind {
            EntryKind::Exchange(m) => Arc::clone(m.cluster()),
            EntryKind::V15(v) => Arc::clone(&v.composite),
            EntryKind::ClosedForm(c) => Arc::new(c.clone()),
        }
    }

    /// Exchange bonds, used as adjacency when absorbing sites into parts.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        match &self.kind {
            EntryKind::Exchange(m) => m.exchange().iter().map(|c| (c.i, c.j)).collect(),
            EntryKind::V15(v) => v.triangle.exchange().iter().map(|c| (c.i, c.j)).collect(),
            EntryKind::ClosedForm(_) => Vec::new(),
        }
    }
}

pub fn build(key: ModelKey) -> Result<ModelEntry> {
    Ok(match key {
        ModelKey::Mn12Set1 => entry(key, build_mn12(Mn12Set::One)?, h2(20), "ring A, all-pairs B"),
        ModelKey::Mn12Set2 => entry(key, build_mn12(Mn12Set::Two)?, h2(20), "ring A, all-pairs B"),
        ModelKey::Fe8 => entry(
            key,
            build_fe8()?,
            h2(20),
            "butterfly core A5 A6 B1 B2 with four external A spins",
        ),
        ModelKey::Mn6Family(s_a) => {
            let model = build_mn6_family(s_a)?;
            let ground = HalfInt::from_doubled(6 * (s_a.twice() - 1)).abs();
            entry(key, model, ground, "single coupling, J = 1 K")
        }
        ModelKey::Fe4 => entry(key, build_fe4()?, h2(10), "star, single coupling J = 1 K"),
        ModelKey::Cr7Ni => entry(key, build_cr7ni()?, h2(1), "ring, single coupling J = 1 K"),
        ModelKey::V15Effective => ModelEntry {
            key,
            kind: EntryKind::V15(build_v15_effective()?),
            ground_s: h2(1),
            notes: "effective triangle; hexagons are uniform rings frozen in their singlet".into(),
        },
        ModelKey::Custom => {
            return Err(Error::InvalidArgument("custom models are loaded from a file".into()));
        }
        ModelKey::Mn10ClosedForm | ModelKey::TbClosedForm => {
            let cluster = closed_form_cluster(key)?;
            ModelEntry {
                key,
                ground_s: cluster.s_max(),
                kind: EntryKind::ClosedForm(cluster),
                notes: "fully polarized ferromagnet, closed form".into(),
            }
        }
    })
}

fn entry(key: ModelKey, model: SpinModel, ground_s: HalfInt, notes: &str) -> ModelEntry {
    ModelEntry {
        key,
        kind: EntryKind::Exchange(model),
        ground_s,
        notes: notes.into(),
    }
}

/// Sites `A1..A8` (s = 2) then `B1..B4` (s = 3/2).
pub fn build_mn12(set: Mn12Set) -> Result<SpinModel> {
    let (j_a, j_b, j_ab, j_ab2, source) = match set {
        Mn12Set::One => (-64.5, 85.0, 215.0, 85.0, "Mn12 parameter set 1"),
        Mn12Set::Two => (
            6.0,
            8.0,
            67.0,
            62.0,
            "Mn12 parameter set 2 (inelastic neutron scattering)",
        ),
    };
    let mut sites = Vec::new();
    for k in 1..=8 {
        sites.push((h2(4), Sublattice::A, format!("A{k}")));
    }
    for k in 1..=4 {
        sites.push((h2(3), Sublattice::B, format!("B{k}")));
    }
    let cluster = SpinCluster::from_spins("mn12", sites)?;
    let a = |k: usize| (k - 1) % 8;
    let b = |k: usize| 8 + (k - 1) % 4;
    let mut ex = Vec::new();
    for i in 1..=8 {
        ex.push(bond(a(i), a(i + 1), j_a));
    }
    for i in 1..=4 {
        for j in 1..i {
            ex.push(bond(b(i), b(j), j_b));
        }
    }
    for i in 1..=4 {
        ex.push(bond(a(2 * i - 1), b(i), j_ab));
        ex.push(bond(a(2 * i), b(i), j_ab2));
        ex.push(bond(a(2 * i), b(i + 1), j_ab2));
    }
    SpinModel::new(cluster, ex, vec![], source)
}

/// Sites `A1..A6` then `B1, B2`, all s = 5/2; `A5`, `A6` are central.
pub fn build_fe8() -> Result<SpinModel> {
    let (j_a, j_a2, j_ab, j_ab2) = (26.0, 36.0, 200.0, 59.0);
    let mut sites = Vec::new();
    for k in 1..=6 {
        sites.push((h2(5), Sublattice::A, format!("A{k}")));
    }
    for k in 1..=2 {
        sites.push((h2(5), Sublattice::B, format!("B{k}")));
    }
    let cluster = SpinCluster::from_spins("fe8", sites)?;
    let a = |k: usize| k - 1;
    let b = |k: usize| 5 + k;
    let mut ex = Vec::new();
    for i in 1..=2 {
        ex.push(bond(a(4 + i), a(2 * i - 1), j_a));
        ex.push(bond(a(4 + i), a(2 * i), j_a));
    }
    ex.push(bond(a(5), a(6), j_a2));
    for i in 5..=6 {
        for j in 1..=2 {
            ex.push(bond(a(i), b(j), j_ab));
        }
    }
    ex.push(bond(b(2), a(2), j_ab2));
    ex.push(bond(b(2), a(3), j_ab2));
    ex.push(bond(b(1), a(1), j_ab2));
    ex.push(bond(b(1), a(4), j_ab2));
    SpinModel::new(cluster, ex, vec![], "Fe8 exchange parameters")
}

/// Ring `B1 A1 B2 A2 ...` with `A_i` coupled to `B_i` and `B_{i+1}`.
fn alternating_ring(
    name: &str,
    a_spins: &[HalfInt],
    b_spins: &[HalfInt],
    b_labels: &[String],
    a_labels: &[String],
    j: f64,
    source: &str,
) -> Result<SpinModel> {
    let n = a_spins.len() + b_spins.len();
    let mut sites = Vec::with_capacity(n);
    for k in 0..a_spins.len() {
        sites.push((b_spins[k], Sublattice::B, b_labels[k].clone()));
        sites.push((a_spins[k], Sublattice::A, a_labels[k].clone()));
    }
    let cluster = SpinCluster::from_spins(name, sites)?;
    let ex = (0..n).map(|i| bond(i, (i + 1) % n, j)).collect();
    SpinModel::new(cluster, ex, vec![], source)
}

pub fn build_mn6_family(s_a: HalfInt) -> Result<SpinModel> {
    if s_a.twice() <= 0 {
        return Err(Error::InvalidArgument(format!("s_A must be positive, got {s_a}")));
    }
    let labels = |p: &str| (1..=6).map(|k| format!("{p}{k}")).collect::<Vec<_>>();
    alternating_ring(
        "mn6",
        &[s_a; 6],
        &[h2(1); 6],
        &labels("B"),
        &labels("A"),
        1.0,
        "alternating ring, single coupling",
    )
}

/// Three outer A spins around the central B spin, all s = 5/2.
pub fn build_fe4() -> Result<SpinModel> {
    let sites = vec![
        (h2(5), Sublattice::A, "A1".to_string()),
        (h2(5), Sublattice::A, "A2".to_string()),
        (h2(5), Sublattice::A, "A3".to_string()),
        (h2(5), Sublattice::B, "B1".to_string()),
    ];
    let cluster = SpinCluster::from_spins("fe4", sites)?;
    let ex = (0..3).map(|i| bond(i, 3, 1.0)).collect();
    SpinModel::new(cluster, ex, vec![], "star, single coupling")
}

/// Octagon with Ni (s = 1) on site 0; even sites form sublattice B.
pub fn build_cr7ni() -> Result<SpinModel> {
    let b_spins = [h2(2), h2(3), h2(3), h2(3)];
    let b_labels: Vec<String> = std::iter::once("Ni".to_string())
        .chain((1..=3).map(|k| format!("Cr{}", 2 * k)))
        .collect();
    let a_labels: Vec<String> = (0..4).map(|k| format!("Cr{}", 2 * k + 1)).collect();
    alternating_ring(
        "cr7ni",
        &[h2(3); 4],
        &b_spins,
        &b_labels,
        &a_labels,
        1.0,
        "ring, single coupling",
    )
}

pub fn closed_form_cluster(key: ModelKey) -> Result<SpinCluster> {
    match key {
        ModelKey::Mn10ClosedForm => SpinCluster::from_spins(
            "mn10",
            (0..10).map(|k| {
                if k < 4 {
                    (h2(4), Sublattice::A, format!("MnIII{}", k + 1))
                } else {
                    (h2(5), Sublattice::A, format!("MnII{}", k - 3))
                }
            }),
        ),
        ModelKey::TbClosedForm => SpinCluster::from_spins("tb", [(h2(12), Sublattice::A, "Tb".to_string())]),
        other => Err(Error::InvalidArgument(format!("{other} has no closed form"))),
    }
}

pub fn closed_form_sizes(key: ModelKey) -> Result<IdealSizes> {
    Ok(ideal_ferrimagnet_sizes(&closed_form_cluster(key)?))
}

/// Same geometry with every intra-sublattice bond set to `-ratio` and every
/// inter-sublattice bond to `1`.
pub fn idealized_variant(model: &SpinModel, ratio: f64) -> Result<SpinModel> {
    let cluster = model.cluster();
    let ex = model
        .exchange()
        .iter()
        .map(|c| {
            let same = cluster.sites()[c.i].sublattice == cluster.sites()[c.j].sublattice;
            bond(c.i, c.j, if same { -ratio } else { 1.0 })
        })
        .collect();
    SpinModel::new(
        Arc::clone(cluster),
        ex,
        vec![],
        format!("{} (idealized, ratio {ratio})", model.source()),
    )
}

/// Same model with every coupling multiplied by `factor`.
pub fn rescaled(model: &SpinModel, factor: f64) -> Result<SpinModel> {
    SpinModel::new(
        Arc::clone(model.cluster()),
        model
            .exchange()
            .iter()
            .map(|c| bond(c.i, c.j, c.j_kelvin * factor))
            .collect(),
        model
            .dm()
            .iter()
            .map(|d| DmCoupling {
                dz_kelvin: d.dz_kelvin * factor,
                ..*d
            })
            .collect(),
        format!("{} (scaled by {factor})", model.source()),
    )
}

/// Same model with site `i` moved to position `perm[i]`.
pub fn permuted(model: &SpinModel, perm: &[usize]) -> Result<SpinModel> {
    let cluster = model.cluster();
    let n = cluster.len();
    let mut seen = vec![false; n];
    if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::InvalidArgument("not a permutation of the sites".into()));
    }
    let mut sites = vec![None; n];
    for (i, s) in cluster.sites().iter().enumerate() {
        sites[perm[i]] = Some((s.spin, s.sublattice, s.label.clone()));
    }
    let cluster = SpinCluster::from_spins(cluster.name(), sites.into_iter().map(Option::unwrap))?;
    SpinModel::new(
        cluster,
        model
            .exchange()
            .iter()
            .map(|c| bond(perm[c.i], perm[c.j], c.j_kelvin))
            .collect(),
        model
            .dm()
            .iter()
            .map(|d| DmCoupling {
                i: perm[d.i],
                j: perm[d.j],
                dz_kelvin: d.dz_kelvin,
            })
            .collect(),
        model.source(),
    )
}

/// Which pair of triangle states forms the superposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum V15Pair {
    /// The two `S_T = 1/2` states of positive chirality, `M = -1/2` and `1/2`.
    Chirality,
    /// `|↑↑↑⟩` and `|↓↓↓⟩` of the `S_T = 3/2` quadruplet.
    Polarized,
}

/// Triangle of three s = 1/2 spins between two hexagons frozen in their
/// singlet ground states. Composite site order: hexagon 1 (0..6), triangle
/// (6..9), hexagon 2 (9..15).
#[derive(Clone, Debug)]
pub struct V15Effective {
    pub triangle: SpinModel,
    pub hexagon: SpinModel,
    pub composite: Arc<SpinCluster>,
}

pub const TRIANGLE_OFFSET: usize = 6;

pub fn build_v15_effective() -> Result<V15Effective> {
    let tri = SpinCluster::from_spins("v15_triangle", (1..=3).map(|k| (h2(1), Sublattice::A, format!("T{k}"))))?;
    let triangle = SpinModel::new(
        tri,
        (0..3).map(|i| bond(i, (i + 1) % 3, 1.0)).collect(),
        (0..3)
            .map(|i| DmCoupling {
                i,
                j: (i + 1) % 3,
                dz_kelvin: 0.1,
            })
            .collect(),
        "effective triangle, J = 1 K, Dz = 0.1 K",
    )?;
    let hex = SpinCluster::from_spins(
        "v15_hexagon",
        (1..=6).map(|k| {
            (
                h2(1),
                if k % 2 == 1 { Sublattice::A } else { Sublattice::B },
                format!("H{k}"),
            )
        }),
    )?;
    let hexagon = SpinModel::new(
        hex,
        (0..6).map(|i| bond(i, (i + 1) % 6, 1.0)).collect(),
        vec![],
        "uniform ring",
    )?;
    let mut sites = Vec::new();
    for (block, prefix) in [(0, "H1_"), (1, "T"), (2, "H2_")] {
        if block == 1 {
            sites.extend((1..=3).map(|k| (h2(1), Sublattice::A, format!("{prefix}{k}"))));
        } else {
            sites.extend((1..=6).map(|k| {
                (
                    h2(1),
                    if k % 2 == 1 { Sublattice::A } else { Sublattice::B },
                    format!("{prefix}{k}"),
                )
            }));
        }
    }
    let composite = Arc::new(SpinCluster::from_spins("v15", sites)?);
    Ok(V15Effective {
        triangle,
        hexagon,
        composite,
    })
}

impl V15Effective {
    /// The two triangle components of `pair` as complex states.
    pub fn triangle_states(
        &self,
        sectors: &SectorCache,
        pair: V15Pair,
    ) -> Result<(QuantumState<C64>, QuantumState<C64>)> {
        let up = h2(1);
        let dn = h2(-1);
        let w = C64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
        let build = |terms: &[([HalfInt; 3], C64)]| -> Result<QuantumState<C64>> {
            let m: HalfInt = terms[0].0.iter().copied().sum();
            let basis = sectors.get(m)?;
            let mut amps = vec![C64::new(0.0, 0.0); basis.len()];
            for (cfg, a) in terms {
                let k = basis.index_of_config(cfg).expect("configuration lies in its sector");
                amps[k] = *a;
            }
            QuantumState::new(basis, amps, None)
        };
        let one = C64::new(1.0, 0.0);
        match pair {
            V15Pair::Chirality => Ok((
                build(&[([up, dn, dn], one), ([dn, up, dn], w), ([dn, dn, up], w.conj())])?,
                build(&[([dn, up, up], one), ([up, dn, up], w), ([up, up, dn], w.conj())])?,
            )),
            V15Pair::Polarized => Ok((build(&[([up, up, up], one)])?, build(&[([dn, dn, dn], one)])?)),
        }
    }

    pub fn hexagon_ground(&self, opts: &SolverOptions) -> Result<QuantumState<f64>> {
        ground_state_in_sector(&self.hexagon, HalfInt::ZERO, Some(HalfInt::ZERO), u64::MAX, opts)
    }

    /// Starting field `n_i = cos(2πi/3) ŷ + sin(2πi/3) ẑ` on the triangle
    /// (sites numbered from 1) and staggered `ẑ` on the hexagons.
    pub fn triangle_start(&self) -> DirectionField {
        let mut v = Vec::with_capacity(15);
        for k in 0..6 {
            v.push([0.0, 0.0, if k % 2 == 0 { 1.0 } else { -1.0 }]);
        }
        for i in 1..=3 {
            let t = 2.0 * std::f64::consts::PI * i as f64 / 3.0;
            v.push([0.0, t.cos(), t.sin()]);
        }
        for k in 0..6 {
            v.push([0.0, 0.0, if k % 2 == 0 { 1.0 } else { -1.0 }]);
        }
        DirectionField::new(v).expect("unit vectors")
    }
}

/// Correlation data of `hexagon ⊗ triangle ⊗ hexagon`.
pub fn composite_correlations(triangle: &CorrelationData, hexagon: &CorrelationData) -> Result<CorrelationData> {
    triangle.with_spectators(15, TRIANGLE_OFFSET, &[(0, hexagon), (TRIANGLE_OFFSET + 3, hexagon)])
}

/// Superposition moments of `hexagon ⊗ triangle ⊗ hexagon`.
pub fn composite_moments(triangle: &SuperpositionMoments, hexagon: &CorrelationData) -> Result<SuperpositionMoments> {
    triangle.with_spectators(15, TRIANGLE_OFFSET, &[(0, hexagon), (TRIANGLE_OFFSET + 3, hexagon)])
}

/// `(4/√3) ⟨s₁·(s₂ × s₃)⟩` of a three spin-1/2 state, from explicit
/// Kronecker products.
pub fn chirality(psi: &QuantumState<C64>) -> Result<f64> {
    let cluster = psi.cluster();
    if cluster.len() != 3 || (0..3).any(|i| cluster.spin(i) != h2(1)) {
        return Err(Error::InvalidArgument("chirality needs three spin-1/2 sites".into()));
    }
    let z = C64::new(0.0, 0.0);
    let o = C64::new(0.5, 0.0);
    let im = C64::new(0.0, 0.5);
    // basis order ↓, ↑ to match the digit convention
    let sx = DMatrix::from_row_slice(2, 2, &[z, o, o, z]);
    let sy = DMatrix::from_row_slice(2, 2, &[z, im, -im, z]);
    let sz = DMatrix::from_row_slice(2, 2, &[-o, z, z, o]);
    let s = [sx, sy, sz];
    let id = DMatrix::<C64>::identity(2, 2);
    let at = |k: usize, op: &DMatrix<C64>| -> DMatrix<C64> {
        let f = |p: usize| if p == k { op.clone() } else { id.clone() };
        f(0).kronecker(&f(1)).kronecker(&f(2))
    };
    let mut c = DMatrix::<C64>::zeros(8, 8);
    for (a, b, g, sign) in [
        (0, 1, 2, 1.0),
        (1, 2, 0, 1.0),
        (2, 0, 1, 1.0),
        (0, 2, 1, -1.0),
        (2, 1, 0, -1.0),
        (1, 0, 2, -1.0),
    ] {
        c += at(0, &s[a]) * at(1, &s[b]) * at(2, &s[g]) * C64::new(sign, 0.0);
    }
    c *= C64::new(4.0 / 3f64.sqrt(), 0.0);
    let mut full = DVector::<C64>::zeros(8);
    for (k, &key) in psi.basis().keys().iter().enumerate() {
        full[key as usize] = psi.amplitudes()[k];
    }
    Ok(full.dotc(&(&c * &full)).re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlations::correlations_of_state;
    use crate::eigen::ground_state_in_sector;
    use crate::hamiltonian::build_exchange_hamiltonian;

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn keys_round_trip() {
        for k in ModelKey::all() {
            assert_eq!(k.to_string().parse::<ModelKey>().unwrap(), k);
        }
        assert_eq!(
            "mn6_family:3/2".parse::<ModelKey>().unwrap(),
            ModelKey::Mn6Family(h2(3))
        );
        assert!(matches!("co3".parse::<ModelKey>(), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn site_counts_and_bonds() {
        let mn12 = build_mn12(Mn12Set::One).unwrap();
        let c = mn12.cluster();
        assert_eq!(c.len(), 12);
        assert_eq!(c.sites_in(Sublattice::A).len(), 8);
        assert_eq!(c.sublattice_max(Sublattice::A), h2(32));
        assert_eq!(c.sublattice_max(Sublattice::B), h2(12));
        assert_eq!(mn12.exchange().len(), 8 + 6 + 12);
        // A2 couples to B1 and B2 through J'
        assert!(mn12
            .exchange()
            .iter()
            .any(|e| e.i == 1 && e.j == 8 && e.j_kelvin == 85.0));
        assert!(mn12
            .exchange()
            .iter()
            .any(|e| e.i == 1 && e.j == 9 && e.j_kelvin == 85.0));
        // A8 wraps to B1
        assert!(mn12.exchange().iter().any(|e| e.i == 7 && e.j == 8));
        let fe8 = build_fe8().unwrap();
        assert_eq!(fe8.exchange().len(), 4 + 1 + 4 + 4);
        assert_eq!(fe8.cluster().s_max(), h2(40));
        let cr = build_cr7ni().unwrap();
        assert_eq!(cr.cluster().spin(0), h2(2));
        assert_eq!(cr.cluster().sites()[0].sublattice, Sublattice::B);
        assert_eq!(cr.cluster().s_max(), h2(23));
        assert_eq!(cr.cluster().total_dimension(), 49152);
    }

    fn ground_s_of(entry: &ModelEntry) -> f64 {
        let model = entry.model().unwrap();
        let psi =
            ground_state_in_sector::<f64>(model, entry.ground_s, Some(entry.ground_s), u64::MAX, &opts()).unwrap();
        psi.s_squared()
    }

    #[test]
    fn small_models_have_the_declared_ground_spin() {
        use crate::eigen::lowest_eigenpairs;
        for key in [
            ModelKey::Fe4,
            ModelKey::Cr7Ni,
            ModelKey::Mn6Family(h2(2)),
            ModelKey::Mn6Family(h2(3)),
        ] {
            let e = build(key).unwrap();
            let s = e.ground_s.as_f64();
            assert!((ground_s_of(&e) - s * (s + 1.0)).abs() < 1e-6, "{key}");
            // the multiplet is the global ground: the lowest sector shares
            // its energy
            let model = e.model().unwrap();
            let cache = SectorCache::new(Arc::clone(model.cluster()));
            let low = if e.ground_s.is_integer() {
                HalfInt::ZERO
            } else {
                HalfInt::HALF
            };
            let top = ground_state_in_sector::<f64>(model, e.ground_s, Some(e.ground_s), u64::MAX, &opts()).unwrap();
            let hm = build_exchange_hamiltonian::<f64>(model, &cache.get(low).unwrap()).unwrap();
            let pairs = lowest_eigenpairs(&hm, 1, &opts()).unwrap();
            let e0 = top.energy().unwrap();
            assert!(
                (pairs.values[0] - e0).abs() < 1e-8 * e0.abs().max(1.0),
                "{key}: {} vs {e0}",
                pairs.values[0]
            );
        }
    }

    #[test]
    fn mn6_half_spin_limit_has_singlet_ground_state() {
        let e = build(ModelKey::Mn6Family(h2(1))).unwrap();
        assert_eq!(e.ground_s, HalfInt::ZERO);
        let s2 = ground_s_of(&e);
        assert!(s2.abs() < 1e-8);
    }

    #[test]
    fn chirality_states() {
        let v = build_v15_effective().unwrap();
        let cache = SectorCache::new(Arc::clone(v.triangle.cluster()));
        let (p1, p2) = v.triangle_states(&cache, V15Pair::Chirality).unwrap();
        assert!((chirality(&p1).unwrap() - 1.0).abs() < 1e-12);
        assert!((chirality(&p2).unwrap() - 1.0).abs() < 1e-12);
        // eigenstates of the triangle Hamiltonian including the DM term
        for p in [&p1, &p2] {
            let hm = build_exchange_hamiltonian::<C64>(&v.triangle, p.basis()).unwrap();
            let y = hm.matvec(p.amplitudes());
            let e = crate::num::dot(p.amplitudes(), &y);
            let r: f64 = y.iter().zip(p.amplitudes()).map(|(a, b)| (a - b * e).norm_sqr()).sum();
            assert!(r.sqrt() < 1e-12);
            assert!((p.s_squared() - 0.75).abs() < 1e-12);
        }
        let (q1, q2) = v.triangle_states(&cache, V15Pair::Polarized).unwrap();
        assert!((q1.s_squared() - 3.75).abs() < 1e-12 && (q2.s_squared() - 3.75).abs() < 1e-12);
    }

    #[test]
    fn hexagon_singlet_has_no_moment() {
        let v = build_v15_effective().unwrap();
        let psi = v.hexagon_ground(&opts()).unwrap();
        assert!(psi.s_squared().abs() < 1e-10);
        let cache = SectorCache::new(Arc::clone(v.hexagon.cluster()));
        let d = correlations_of_state(&psi, &cache).unwrap();
        assert!(d.b.amax() < 1e-12);
    }

    #[test]
    fn closed_forms() {
        let mn10 = closed_form_sizes(ModelKey::Mn10ClosedForm).unwrap();
        assert_eq!((mn10.d_fi, mn10.d_lm), (23.0, 10));
        assert!(mn10.d_rfi.divergent);
        let tb = closed_form_sizes(ModelKey::TbClosedForm).unwrap();
        assert_eq!((tb.d_fi, tb.d_lm), (6.0, 1));
        let three = SpinCluster::from_spins("f3", (0..3).map(|_| (h2(2), Sublattice::A, ""))).unwrap();
        let s = ideal_ferrimagnet_sizes(&three);
        assert_eq!((s.d_fi, s.d_lm), (3.0, 3));
    }

    #[test]
    fn json_export_round_trips() {
        for key in ModelKey::all() {
            let e = build(key).unwrap();
            let models: Vec<SpinModel> = match &e.kind {
                EntryKind::Exchange(m) => vec![m.clone()],
                EntryKind::V15(v) => vec![v.triangle.clone(), v.hexagon.clone()],
                EntryKind::ClosedForm(_) => vec![],
            };
            for m in models {
                let back = SpinModel::from_json(&m.to_json().unwrap()).unwrap();
                assert_eq!(back, m);
            }
        }
    }

    #[test]
    fn permutation_and_rescaling_preserve_structure() {
        let m = build_fe4().unwrap();
        let p = permuted(&m, &[1, 2, 3, 0]).unwrap();
        assert_eq!(p.cluster().sites()[0].sublattice, Sublattice::B);
        assert!(p.exchange().iter().all(|e| e.i == 0 || e.j == 0));
        assert!(permuted(&m, &[0, 0, 1, 2]).is_err());
        let r = rescaled(&m, 10.0).unwrap();
        assert!(r.exchange().iter().all(|e| e.j_kelvin == 10.0));
        let i = idealized_variant(&build_fe8().unwrap(), 1e3).unwrap();
        assert!(i.exchange().iter().all(|e| e.j_kelvin == 1.0 || e.j_kelvin == -1e3));
    }
}
