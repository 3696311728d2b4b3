//! End-to-end pipelines: ground states, superposition moments, Fisher sizes
//! and the partition search for registry models.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{SectorCache, SpinCluster, Sublattice};
use crate::correlations::{
    correlations_of_state, partial_spin_sum, staggered_magnetization_stats, Superposition, SuperpositionMoments,
    PHASE_SWEEP,
};
use crate::distinguish::{d_lm, discrimination_probability, PartitionOptions, PartitionResult, SubsetMask};
use crate::eigen::{ground_state_on_basis, QuantumState, SolverOptions};
use crate::error::{Error, Result};
use crate::fisher::{
    d_rfi, fisher_max, psi_max_states, superposition_sizes, variance_of_field, DirectionField, FisherOptions,
    FisherResult, RelativeFisher, SizeMeasures,
};
use crate::half::HalfInt;
use crate::models::{build_mn6_family, composite_moments, EntryKind, ModelEntry, ModelKey, V15Pair, TRIANGLE_OFFSET};
use crate::num::{Complex, Real as _, Scalar};

/// Default cap on sector dimension for pipeline runs.
pub const DEFAULT_MAX_SECTOR_DIM: u64 = 5_000_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisOptions {
    pub solver: SolverOptions,
    pub fisher: FisherOptions,
    pub partition: PartitionOptions,
    pub max_sector_dim: u64,
    pub phase: f64,
    pub phase_sweep: bool,
    pub compute_d_lm: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            solver: SolverOptions::default(),
            fisher: FisherOptions::default(),
            partition: PartitionOptions::default(),
            max_sector_dim: DEFAULT_MAX_SECTOR_DIM,
            phase: 0.0,
            phase_sweep: false,
            compute_d_lm: true,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Default)]
struct Timer {
    stages: Vec<StageTiming>,
}

impl Timer {
    fn run<R>(&mut self, stage: &str, f: impl FnOnce() -> R) -> R {
        let t = Instant::now();
        let r = f();
        self.stages.push(StageTiming {
            stage: stage.into(),
            seconds: t.elapsed().as_secs_f64(),
        });
        r
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ComponentInfo {
    pub m: HalfInt,
    pub energy: Option<f64>,
    pub s_squared: f64,
    pub sector_dimension: usize,
    /// `|⟨ψ_k|Ψ_k^max⟩|` when both share a sector.
    pub overlap_with_psi_max: Option<f64>,
    pub staggered_mean: f64,
    pub staggered_variance: f64,
    /// Expected sublattice spin quantum numbers `(⟨S_A⟩, ⟨S_B⟩)`.
    pub partial_spin_sums: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PhasePoint {
    pub phase: f64,
    pub d_fi: f64,
    pub d_fi_components: f64,
    pub d_rfi: RelativeFisher,
}

/// Sizes at a fixed, named operator `X` instead of the maximizer.
#[derive(Clone, Debug, Serialize)]
pub struct FieldPoint {
    pub label: String,
    pub d_fi: f64,
    pub d_fi_components: f64,
    pub d_rfi: RelativeFisher,
}

fn at_field(label: &str, moments: &SuperpositionMoments, phase: f64, field: &DirectionField, s_sum: f64) -> FieldPoint {
    let v = variance_of_field(&moments.at_phase(phase), field);
    let v1 = variance_of_field(moments.component(1), field);
    let v2 = variance_of_field(moments.component(2), field);
    FieldPoint {
        label: label.into(),
        d_fi: v / s_sum,
        d_fi_components: 0.5 * (v1 + v2) / s_sum,
        d_rfi: d_rfi(moments, phase, field),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisReport {
    pub model: String,
    pub m1: HalfInt,
    pub m2: HalfInt,
    pub phase: f64,
    pub n_sites: usize,
    pub s_sum: f64,
    pub fisher_max: f64,
    pub closed_form: bool,
    pub d_fi: f64,
    pub d_fi_components: f64,
    pub d_rfi: RelativeFisher,
    pub fisher: Option<FisherResult>,
    pub components: Vec<ComponentInfo>,
    pub superposition_staggered_mean: Option<f64>,
    pub superposition_staggered_variance: Option<f64>,
    pub d_lm: Option<PartitionResult>,
    /// Set when the partition search failed.
    pub d_lm_error: Option<String>,
    pub phase_sweep: Vec<PhasePoint>,
    /// Sizes at reference operators (staggered `S_z*`, seeded fields).
    pub reference_fields: Vec<FieldPoint>,
    pub notes: Vec<String>,
    pub timings: Vec<StageTiming>,
}

impl AnalysisReport {
    pub fn d_lm_count(&self) -> Option<usize> {
        self.d_lm.as_ref().map(|r| r.n_parts)
    }

    /// Aligned human-readable summary.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let mut row = |k: &str, v: String| out.push_str(&format!("{k:<28}{v}\n"));
        row("model", self.model.clone());
        row("M1, M2", format!("{}, {}", self.m1, self.m2));
        row("phase", format!("{:.6}", self.phase));
        row("D_FI(Psi)", format!("{:.6}", self.d_fi));
        row("D_FI(Psi_k)", format!("{:.6}", self.d_fi_components));
        row(
            "D_RFI(Psi)",
            if self.d_rfi.divergent {
                "divergent".into()
            } else {
                format!("{:.6}", self.d_rfi.value)
            },
        );
        row(
            "D_LM(Psi)",
            match (&self.d_lm, &self.d_lm_error) {
                (Some(r), _) => {
                    let parts: Vec<String> = r.parts.iter().map(|p| p.to_string()).collect();
                    format!("{}  {}", r.n_parts, parts.join(" "))
                }
                (None, Some(e)) => format!("error: {e}"),
                _ => "-".into(),
            },
        );
        for (k, c) in self.components.iter().enumerate() {
            if let Some(o) = c.overlap_with_psi_max {
                row(&format!("|<Psi_{}|Psi_max>|", k + 1), format!("{o:.6}"));
            }
            row(
                &format!("<S_z*>, Var (Psi_{})", k + 1),
                format!("{:.6}, {:.6}", c.staggered_mean, c.staggered_variance),
            );
            if let Some((a, b)) = c.partial_spin_sums {
                row(&format!("<S_A>, <S_B> (Psi_{})", k + 1), format!("{a:.6}, {b:.6}"));
            }
        }
        for p in &self.phase_sweep {
            row(
                &format!("phase {:.4}", p.phase),
                format!(
                    "D_FI {:.6}  D_RFI {}",
                    p.d_fi,
                    if p.d_rfi.divergent {
                        "divergent".into()
                    } else {
                        format!("{:.6}", p.d_rfi.value)
                    }
                ),
            );
        }
        for p in &self.reference_fields {
            row(
                &format!("at {}", p.label),
                format!(
                    "D_FI {:.6}  D_FI(Psi_k) {:.6}  D_RFI {}",
                    p.d_fi,
                    p.d_fi_components,
                    if p.d_rfi.divergent {
                        "divergent".into()
                    } else {
                        format!("{:.6}", p.d_rfi.value)
                    }
                ),
            );
        }
        for n in &self.notes {
            row("note", n.clone());
        }
        out
    }
}

/// Ground states of an exchange model's ground multiplet, one per requested
/// projection.
pub fn multiplet_states<T: Scalar>(
    entry: &ModelEntry,
    sectors: &SectorCache,
    ms: &[HalfInt],
    opts: &SolverOptions,
) -> Result<Vec<QuantumState<T>>> {
    let model = entry
        .model()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not an exchange model", entry.key)))?;
    ms.iter()
        .map(|&m| {
            check_in_multiplet(entry, m)?;
            let basis = sectors.get(m)?;
            ground_state_on_basis(model, &basis, Some(entry.ground_s), opts)
        })
        .collect()
}

fn check_in_multiplet(entry: &ModelEntry, m: HalfInt) -> Result<()> {
    if m.abs() > entry.ground_s || (m - entry.ground_s).twice() % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "M = {m} is not a projection of the ground multiplet S = {}",
            entry.ground_s
        )));
    }
    Ok(())
}

/// `(S, -S)` of the ground multiplet.
pub fn polarized_pair(entry: &ModelEntry) -> Result<(HalfInt, HalfInt)> {
    if entry.ground_s == HalfInt::ZERO {
        return Err(Error::EmptySector {
            m: entry.ground_s,
            s_max: entry.cluster().s_max(),
        });
    }
    Ok((entry.ground_s, -entry.ground_s))
}

fn component_info<T: Scalar>(
    psi: &QuantumState<T>,
    psi_max: Option<&QuantumState<T>>,
    sectors: &SectorCache,
    signs: &[f64],
    sublattices: bool,
) -> Result<ComponentInfo> {
    let data = correlations_of_state(psi, sectors)?;
    let (mean, var) = staggered_magnetization_stats(&data, signs);
    let overlap = psi_max
        .filter(|p| p.m() == psi.m())
        .map(|p| psi.overlap(p).modulus().to_f64_lossy());
    Ok(ComponentInfo {
        m: psi.m(),
        energy: psi.energy(),
        s_squared: psi.s_squared(),
        sector_dimension: psi.basis().len(),
        overlap_with_psi_max: overlap,
        staggered_mean: mean,
        staggered_variance: var,
        partial_spin_sums: sublattices.then(|| {
            (
                partial_spin_sum(psi, Sublattice::A),
                partial_spin_sum(psi, Sublattice::B),
            )
        }),
    })
}

fn sweep(
    moments: &SuperpositionMoments,
    field: &DirectionField,
    cluster: &SpinCluster,
    extra: &[DirectionField],
    opts: &FisherOptions,
) -> Result<Vec<PhasePoint>> {
    let _ = field;
    PHASE_SWEEP
        .iter()
        .map(|&phase| {
            let s = superposition_sizes(moments, phase, cluster, extra, opts)?;
            Ok(PhasePoint {
                phase,
                d_fi: s.fisher.d_fi,
                d_fi_components: s.d_fi_components,
                d_rfi: s.d_rfi,
            })
        })
        .collect()
}

fn closed_form_report(entry: &ModelEntry, cluster: &SpinCluster) -> AnalysisReport {
    let ideal = crate::fisher::ideal_ferrimagnet_sizes(cluster);
    let s = cluster.s_max();
    AnalysisReport {
        model: entry.key.to_string(),
        m1: s,
        m2: -s,
        phase: 0.0,
        n_sites: cluster.len(),
        s_sum: s.as_f64(),
        fisher_max: fisher_max(cluster),
        closed_form: true,
        d_fi: ideal.d_fi,
        d_fi_components: ideal.component_variance / s.as_f64(),
        d_rfi: ideal.d_rfi,
        fisher: None,
        components: Vec::new(),
        superposition_staggered_mean: Some(ideal.mean_staggered),
        superposition_staggered_variance: None,
        d_lm: None,
        d_lm_error: None,
        phase_sweep: Vec::new(),
        reference_fields: Vec::new(),
        notes: vec![format!("closed form: D_LM = {} (one part per spin)", ideal.d_lm)],
        timings: Vec::new(),
    }
}

/// Full analysis of the superposition of the ground states with
/// projections `m1` and `m2`.
pub fn analyze(entry: &ModelEntry, m1: HalfInt, m2: HalfInt, opts: &AnalysisOptions) -> Result<AnalysisReport> {
    match &entry.kind {
        EntryKind::ClosedForm(c) => Ok(closed_form_report(entry, c)),
        EntryKind::Exchange(model) => {
            if model.is_complex() {
                analyze_exchange::<Complex<f64>>(entry, m1, m2, opts)
            } else {
                analyze_exchange::<f64>(entry, m1, m2, opts)
            }
        }
        EntryKind::V15(_) => analyze_v15(entry, m1, m2, opts),
    }
}

fn analyze_exchange<T: Scalar>(
    entry: &ModelEntry,
    m1: HalfInt,
    m2: HalfInt,
    opts: &AnalysisOptions,
) -> Result<AnalysisReport> {
    if entry.ground_s == HalfInt::ZERO {
        polarized_pair(entry)?;
    }
    if m1 == m2 {
        return Err(Error::InvalidSuperposition(format!("both components have M = {m1}")));
    }
    let cluster = entry.cluster();
    let sectors = SectorCache::with_cap(Arc::clone(&cluster), opts.max_sector_dim);
    let mut timer = Timer::default();
    let states = timer.run("ground states", || {
        multiplet_states::<T>(entry, &sectors, &[m1, m2], &opts.solver)
    })?;
    let [psi1, psi2]: [QuantumState<T>; 2] = states.try_into().unwrap_or_else(|_| unreachable!("two states"));
    let signs = cluster.staggered_signs();
    let has_b = !cluster.sites_in(Sublattice::B).is_empty();
    let max = if has_b {
        psi_max_states::<T>(&sectors).ok()
    } else {
        None
    };
    let comps = timer.run("component statistics", || -> Result<Vec<ComponentInfo>> {
        Ok(vec![
            component_info(&psi1, max.as_ref().map(|m| &m.0), &sectors, &signs, has_b)?,
            component_info(&psi2, max.as_ref().map(|m| &m.1), &sectors, &signs, has_b)?,
        ])
    })?;
    let sup = Superposition::new(psi1, psi2, opts.phase)?;
    let moments = timer.run("moments", || SuperpositionMoments::new(&sup, &sectors))?;
    let sizes = timer.run("fisher", || {
        superposition_sizes(&moments, opts.phase, &cluster, &[], &opts.fisher)
    })?;
    let sup_data = moments.at_phase(opts.phase);
    let (sm, sv) = staggered_magnetization_stats(&sup_data, &signs);
    let phase_sweep = if opts.phase_sweep && moments.has_cross_terms() {
        timer.run("phase sweep", || {
            sweep(&moments, &sizes.fisher.field, &cluster, &[], &opts.fisher)
        })?
    } else {
        Vec::new()
    };
    let (d_lm_res, d_lm_error) = if opts.compute_d_lm {
        let mut p = opts.partition.clone();
        if p.adjacency.is_none() {
            p.adjacency = Some(entry.bonds());
        }
        match timer.run("partition search", || d_lm(sup.psi1(), sup.psi2(), &p)) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    let reference = vec![at_field(
        "staggered S_z*",
        &moments,
        opts.phase,
        &DirectionField::staggered_z(&cluster),
        cluster.s_max().as_f64(),
    )];
    Ok(report(
        entry,
        &cluster,
        m1,
        m2,
        opts.phase,
        sizes,
        comps,
        Some((sm, sv)),
        d_lm_res,
        d_lm_error,
        phase_sweep,
        reference,
        Vec::new(),
        timer,
    ))
}

#[allow(clippy::too_many_arguments)]
fn report(
    entry: &ModelEntry,
    cluster: &SpinCluster,
    m1: HalfInt,
    m2: HalfInt,
    phase: f64,
    sizes: SizeMeasures,
    components: Vec<ComponentInfo>,
    staggered: Option<(f64, f64)>,
    d_lm: Option<PartitionResult>,
    d_lm_error: Option<String>,
    phase_sweep: Vec<PhasePoint>,
    reference_fields: Vec<FieldPoint>,
    notes: Vec<String>,
    timer: Timer,
) -> AnalysisReport {
    AnalysisReport {
        model: entry.key.to_string(),
        m1,
        m2,
        phase,
        n_sites: cluster.len(),
        s_sum: cluster.s_max().as_f64(),
        fisher_max: fisher_max(cluster),
        closed_form: false,
        d_fi: sizes.fisher.d_fi,
        d_fi_components: sizes.d_fi_components,
        d_rfi: sizes.d_rfi,
        fisher: Some(sizes.fisher),
        components,
        superposition_staggered_mean: staggered.map(|s| s.0),
        superposition_staggered_variance: staggered.map(|s| s.1),
        d_lm,
        d_lm_error,
        phase_sweep,
        reference_fields,
        notes,
        timings: timer.stages,
    }
}

/// Which triangle pair the projections select.
pub fn v15_pair(m1: HalfInt, m2: HalfInt) -> Result<V15Pair> {
    let half = HalfInt::HALF;
    let three = HalfInt::from_doubled(3);
    if (m1 == half && m2 == -half) || (m1 == -half && m2 == half) {
        Ok(V15Pair::Chirality)
    } else if (m1 == three && m2 == -three) || (m1 == -three && m2 == three) {
        Ok(V15Pair::Polarized)
    } else {
        Err(Error::InvalidArgument(format!(
            "the effective triangle supports M1, M2 = ±1/2 or ±3/2, got {m1}, {m2}"
        )))
    }
}

/// Moments of the composite superposition and the triangle components.
pub struct V15Setup {
    pub triangle_states: (QuantumState<Complex<f64>>, QuantumState<Complex<f64>>),
    pub triangle_moments: SuperpositionMoments,
    pub hexagon: crate::correlations::CorrelationData,
    pub composite: SuperpositionMoments,
}

pub fn v15_setup(entry: &ModelEntry, m1: HalfInt, m2: HalfInt, opts: &SolverOptions) -> Result<V15Setup> {
    let EntryKind::V15(v) = &entry.kind else {
        return Err(Error::InvalidArgument(format!(
            "{} is not the effective V15 model",
            entry.key
        )));
    };
    let pair = v15_pair(m1, m2)?;
    let tri_sectors = SectorCache::new(Arc::clone(v.triangle.cluster()));
    let (a, b) = v.triangle_states(&tri_sectors, pair)?;
    let (p1, p2) = if a.m() == m1 { (a, b) } else { (b, a) };
    let hex = v.hexagon_ground(opts)?;
    let hex_sectors = SectorCache::new(Arc::clone(v.hexagon.cluster()));
    let hexagon = correlations_of_state(&hex, &hex_sectors)?;
    let sup = Superposition::new(p1.clone(), p2.clone(), 0.0)?;
    let triangle_moments = SuperpositionMoments::new(&sup, &tri_sectors)?;
    let composite = composite_moments(&triangle_moments, &hexagon)?;
    Ok(V15Setup {
        triangle_states: (p1, p2),
        triangle_moments,
        hexagon,
        composite,
    })
}

fn analyze_v15(entry: &ModelEntry, m1: HalfInt, m2: HalfInt, opts: &AnalysisOptions) -> Result<AnalysisReport> {
    let EntryKind::V15(v) = &entry.kind else { unreachable!() };
    let mut timer = Timer::default();
    let setup = timer.run("states and moments", || v15_setup(entry, m1, m2, &opts.solver))?;
    let cluster = Arc::clone(&v.composite);
    let extra = [v.triangle_start()];
    let sizes = timer.run("fisher", || {
        superposition_sizes(&setup.composite, opts.phase, &cluster, &extra, &opts.fisher)
    })?;
    let phase_sweep = if opts.phase_sweep && setup.composite.has_cross_terms() {
        timer.run("phase sweep", || {
            sweep(&setup.composite, &sizes.fisher.field, &cluster, &extra, &opts.fisher)
        })?
    } else {
        Vec::new()
    };
    let mut notes = vec![
        "hexagons: uniform s = 1/2 rings in their singlet ground state".to_string(),
        "D_LM from the triangle; hexagon spins carry no which-component information and join the first part"
            .to_string(),
    ];
    let (d_lm_res, d_lm_error) = if opts.compute_d_lm {
        let (p1, p2) = &setup.triangle_states;
        let mut p = opts.partition.clone();
        p.adjacency = Some(entry.bonds());
        match timer.run("partition search", || d_lm(p1, p2, &p)) {
            Ok(r) => (Some(embed_triangle_partition(r)), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    let (p1, p2) = &setup.triangle_states;
    let tri_var = variance_of(&setup.composite, opts.phase, &sizes.fisher.field, 0..3, TRIANGLE_OFFSET);
    notes.push(format!(
        "variance split: triangle {:.6}, each hexagon {:.6}",
        tri_var,
        (sizes.fisher.f / 4.0 - tri_var) / 2.0
    ));
    let comps = vec![triangle_component(p1), triangle_component(p2)];
    let reference = vec![at_field(
        "seeded triangle field",
        &setup.composite,
        opts.phase,
        &v.triangle_start(),
        cluster.s_max().as_f64(),
    )];
    Ok(report(
        entry,
        &cluster,
        m1,
        m2,
        opts.phase,
        sizes,
        comps,
        None,
        d_lm_res,
        d_lm_error,
        phase_sweep,
        reference,
        notes,
        timer,
    ))
}

fn triangle_component(p: &QuantumState<Complex<f64>>) -> ComponentInfo {
    ComponentInfo {
        m: p.m(),
        energy: p.energy(),
        s_squared: p.s_squared(),
        sector_dimension: p.basis().len(),
        overlap_with_psi_max: None,
        staggered_mean: 0.0,
        staggered_variance: 0.0,
        partial_spin_sums: None,
    }
}

/// Variance of the part of `X` acting on `count` sites starting at `offset`.
fn variance_of(
    moments: &SuperpositionMoments,
    phase: f64,
    field: &DirectionField,
    sites: std::ops::Range<usize>,
    offset: usize,
) -> f64 {
    let data = moments.at_phase(phase);
    let mut n = DVector::zeros(data.b.len());
    for i in sites {
        let v = field.vectors()[offset + i];
        for a in 0..3 {
            n[3 * (offset + i) + a] = v[a];
        }
    }
    let q = n.dot(&(&data.c * &n));
    let m = data.b.dot(&n);
    q - m * m
}

fn embed_triangle_partition(mut r: PartitionResult) -> PartitionResult {
    let shift = |s: SubsetMask| SubsetMask::from_bits(s.bits() << TRIANGLE_OFFSET).expect("nonempty");
    r.parts = r.parts.into_iter().map(shift).collect();
    r.minimal_good_subsets = r.minimal_good_subsets.into_iter().map(shift).collect();
    let hexagons: u64 = ((1u64 << 6) - 1) | (((1u64 << 6) - 1) << (TRIANGLE_OFFSET + 3));
    if let Some(first) = r.parts.first_mut() {
        *first = SubsetMask::from_bits(first.bits() | hexagons).expect("nonempty");
    }
    r.per_part_exact = r.per_part_exact.iter().map(|_| true).collect();
    r
}

/// One cell of the `(M1, M2)` grid.
#[derive(Clone, Debug, Serialize)]
pub struct GridCell {
    pub m1: HalfInt,
    pub m2: HalfInt,
    pub d_fi: f64,
    pub d_rfi: RelativeFisher,
}

/// `D_FI` and `D_RFI` over all pairs of ground-multiplet projections;
/// diagonal cells are zero.
pub fn grid(entry: &ModelEntry, opts: &AnalysisOptions) -> Result<Vec<GridCell>> {
    let model = entry
        .model()
        .ok_or_else(|| Error::InvalidArgument(format!("grid needs an exchange model, got {}", entry.key)))?;
    if model.is_complex() {
        grid_typed::<Complex<f64>>(entry, opts)
    } else {
        grid_typed::<f64>(entry, opts)
    }
}

fn projections(s: HalfInt) -> Vec<HalfInt> {
    s.projections().rev().collect()
}

fn grid_typed<T: Scalar>(entry: &ModelEntry, opts: &AnalysisOptions) -> Result<Vec<GridCell>> {
    let cluster = entry.cluster();
    let sectors = SectorCache::with_cap(Arc::clone(&cluster), opts.max_sector_dim);
    let ms = projections(entry.ground_s);
    let states = multiplet_states::<T>(entry, &sectors, &ms, &opts.solver)?;
    let cells: Vec<(usize, usize)> = (0..ms.len()).flat_map(|a| (0..ms.len()).map(move |b| (a, b))).collect();
    cells
        .par_iter()
        .map(|&(a, b)| {
            if a == b {
                return Ok(GridCell {
                    m1: ms[a],
                    m2: ms[b],
                    d_fi: 0.0,
                    d_rfi: RelativeFisher {
                        value: 0.0,
                        divergent: false,
                    },
                });
            }
            let sup = Superposition::new(states[a].clone(), states[b].clone(), opts.phase)?;
            let moments = SuperpositionMoments::new(&sup, &sectors)?;
            let s = superposition_sizes(&moments, opts.phase, &cluster, &[], &opts.fisher)?;
            Ok(GridCell {
                m1: ms[a],
                m2: ms[b],
                d_fi: s.fisher.d_fi,
                d_rfi: s.d_rfi,
            })
        })
        .collect()
}

/// Subsets tracked by the probability sweep besides the single spins.
pub fn named_subsets(key: ModelKey) -> Vec<(String, Vec<usize>)> {
    match key {
        ModelKey::Mn12Set1 | ModelKey::Mn12Set2 => vec![("A1+B1".into(), vec![0, 8])],
        ModelKey::Fe8 => vec![("core".into(), vec![4, 5, 6, 7])],
        ModelKey::Fe4 => vec![("B1+A3".into(), vec![2, 3])],
        ModelKey::Mn6Family(_) => vec![("B".into(), vec![0, 2, 4, 6, 8, 10])],
        ModelKey::Cr7Ni => vec![("half".into(), vec![0, 1, 2, 3])],
        _ => Vec::new(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub m: HalfInt,
    pub subset_id: String,
    pub p: f64,
}

/// `P_l` for `M1 = -M2 = M` over every positive projection of the ground
/// multiplet, for every single spin and the named subsets.
pub fn plm_sweep(entry: &ModelEntry, opts: &AnalysisOptions) -> Result<Vec<SweepRow>> {
    let model = entry
        .model()
        .ok_or_else(|| Error::InvalidArgument(format!("sweep needs an exchange model, got {}", entry.key)))?;
    if model.is_complex() {
        plm_sweep_typed::<Complex<f64>>(entry, opts)
    } else {
        plm_sweep_typed::<f64>(entry, opts)
    }
}

fn plm_sweep_typed<T: Scalar>(entry: &ModelEntry, opts: &AnalysisOptions) -> Result<Vec<SweepRow>> {
    let cluster = entry.cluster();
    let sectors = SectorCache::with_cap(Arc::clone(&cluster), opts.max_sector_dim);
    let mut subsets: Vec<(String, Vec<usize>)> = cluster
        .sites()
        .iter()
        .map(|s| {
            (
                if s.label.is_empty() {
                    s.index.to_string()
                } else {
                    s.label.clone()
                },
                vec![s.index],
            )
        })
        .collect();
    subsets.extend(named_subsets(entry.key));
    let ms: Vec<HalfInt> = projections(entry.ground_s)
        .into_iter()
        .filter(|m| m.twice() > 0)
        .collect();
    let mut rows = Vec::new();
    for m in ms {
        let states = multiplet_states::<T>(entry, &sectors, &[m, -m], &opts.solver)?;
        let ps: Vec<Result<f64>> = subsets
            .par_iter()
            .map(|(_, sites)| {
                discrimination_probability(
                    &states[0],
                    &states[1],
                    SubsetMask::from_sites(sites)?,
                    opts.partition.subset_cap,
                )
            })
            .collect();
        for ((id, _), p) in subsets.iter().zip(ps) {
            rows.push(SweepRow {
                m,
                subset_id: id.clone(),
                p: p?,
            });
        }
    }
    Ok(rows)
}

/// Least-squares line `y = slope·x + intercept`.
#[derive(Clone, Debug, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
    /// `√(mean((y - ŷ)²/y²))`
    pub relative_rms: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("a line needs at least two points".into()));
    }
    let a = DMatrix::from_fn(x.len(), 2, |r, c| if c == 0 { x[r] } else { 1.0 });
    let rhs = DVector::from_column_slice(y);
    let sol = a
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let fit = &a * &sol;
    let residuals: Vec<f64> = (0..x.len()).map(|k| y[k] - fit[k]).collect();
    let relative_rms = (residuals.iter().zip(y).map(|(r, y)| (r / y).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
    Ok(LinearFit {
        slope: sol[0],
        intercept: sol[1],
        residuals,
        relative_rms,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RingPoint {
    pub s_a: HalfInt,
    pub total_spin: HalfInt,
    pub d_fi: f64,
    pub d_fi_components: f64,
    pub d_rfi: RelativeFisher,
    pub d_lm: Option<usize>,
    pub ideal_d_fi: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RingScaling {
    pub points: Vec<RingPoint>,
    pub d_fi_linear: LinearFit,
    /// Fit of `ln D_RFI` against `s_A`; the growth rate is the slope.
    pub d_rfi_exponential: Option<LinearFit>,
    /// `D_RFI(s_A + 1/2) / D_RFI(s_A)`
    pub d_rfi_ratios: Vec<f64>,
}

pub const RING_SPINS: [HalfInt; 4] = [
    HalfInt::from_doubled(2),
    HalfInt::from_doubled(3),
    HalfInt::from_doubled(4),
    HalfInt::from_doubled(5),
];

pub fn ring_scaling(s_values: &[HalfInt], opts: &AnalysisOptions) -> Result<RingScaling> {
    let mut points = Vec::new();
    for &s_a in s_values {
        let entry = crate::models::build(ModelKey::Mn6Family(s_a))?;
        let (m1, m2) = polarized_pair(&entry)?;
        let r = analyze(&entry, m1, m2, opts)?;
        let cluster = build_mn6_family(s_a)?.cluster().clone();
        points.push(RingPoint {
            s_a,
            total_spin: entry.ground_s,
            d_fi: r.d_fi,
            d_fi_components: r.d_fi_components,
            d_rfi: r.d_rfi,
            d_lm: r.d_lm_count(),
            ideal_d_fi: crate::fisher::ideal_ferrimagnet_sizes(&cluster).d_fi,
        });
    }
    let x: Vec<f64> = points.iter().map(|p| p.s_a.as_f64()).collect();
    let d_fi_linear = linear_fit(&x, &points.iter().map(|p| p.d_fi).collect::<Vec<_>>())?;
    let finite: Option<Vec<f64>> = points.iter().map(|p| p.d_rfi.finite()).collect();
    let (d_rfi_exponential, d_rfi_ratios) = match finite {
        Some(v) if v.iter().all(|&y| y > 0.0) => (
            Some(linear_fit(&x, &v.iter().map(|y| y.ln()).collect::<Vec<_>>())?),
            v.windows(2).map(|w| w[1] / w[0]).collect(),
        ),
        _ => (None, Vec::new()),
    };
    Ok(RingScaling {
        points,
        d_fi_linear,
        d_rfi_exponential,
        d_rfi_ratios,
    })
}

/// A column of the size table with its published values.
#[derive(Clone, Debug, Serialize)]
pub struct TableColumn {
    pub label: &'static str,
    pub key: ModelKey,
    pub m1: HalfInt,
    pub m2: HalfInt,
    pub d_fi: f64,
    pub d_fi_components: f64,
    /// `None` where the published value is undefined.
    pub d_rfi: Option<f64>,
    pub d_lm: usize,
    /// Relative tolerances on `D_FI` and `D_RFI`.
    pub tol_fi: f64,
    pub tol_rfi: f64,
    pub extended: bool,
}

fn h(t: i32) -> HalfInt {
    HalfInt::from_doubled(t)
}

// 0.318 is a reference value, not 1/π
#[allow(clippy::approx_constant)]
pub fn table_columns() -> Vec<TableColumn> {
    let col = |label, key, m1, m2, d_fi, d_fi_components, d_rfi, d_lm, tol_fi, tol_rfi, extended| TableColumn {
        label,
        key,
        m1: h(m1),
        m2: h(m2),
        d_fi,
        d_fi_components,
        d_rfi,
        d_lm,
        tol_fi,
        tol_rfi,
        extended,
    };
    vec![
        col(
            "Mn12(1)",
            ModelKey::Mn12Set1,
            20,
            -20,
            14.4,
            0.318,
            Some(45.4),
            8,
            0.01,
            0.03,
            true,
        ),
        col(
            "Mn12(2)",
            ModelKey::Mn12Set2,
            20,
            -20,
            19.3,
            0.170,
            Some(113.0),
            9,
            0.01,
            0.03,
            true,
        ),
        col(
            "Fe8",
            ModelKey::Fe8,
            20,
            -20,
            16.5,
            0.339,
            Some(48.7),
            5,
            0.01,
            0.03,
            false,
        ),
        col(
            "Mn6",
            ModelKey::Mn6Family(h(5)),
            24,
            -24,
            16.0,
            0.115,
            Some(139.0),
            7,
            0.01,
            0.03,
            false,
        ),
        col(
            "Mn10",
            ModelKey::Mn10ClosedForm,
            46,
            -46,
            23.0,
            0.0,
            None,
            10,
            0.0,
            0.0,
            false,
        ),
        col(
            "Tb",
            ModelKey::TbClosedForm,
            12,
            -12,
            6.0,
            0.0,
            None,
            1,
            0.0,
            0.0,
            false,
        ),
        col(
            "Fe4(1)",
            ModelKey::Fe4,
            10,
            -10,
            8.603,
            0.200,
            Some(43.07),
            3,
            0.005,
            0.005,
            false,
        ),
        col(
            "Fe4(2)",
            ModelKey::Fe4,
            10,
            8,
            0.366,
            0.282,
            Some(1.299),
            1,
            0.005,
            0.005,
            false,
        ),
        col(
            "Cr7Ni",
            ModelKey::Cr7Ni,
            1,
            -1,
            3.986,
            1.494,
            Some(2.668),
            2,
            0.005,
            0.005,
            false,
        ),
        col(
            "V15(1)",
            ModelKey::V15Effective,
            1,
            -1,
            1.478,
            1.361,
            Some(1.086),
            1,
            0.005,
            0.005,
            false,
        ),
        col(
            "V15(2)",
            ModelKey::V15Effective,
            3,
            -3,
            1.544,
            1.244,
            Some(1.241),
            3,
            0.005,
            0.005,
            false,
        ),
    ]
}

#[derive(Clone, Debug, Serialize)]
pub struct TableCell {
    pub column: String,
    pub measure: String,
    pub computed: f64,
    pub reference: f64,
    pub relative_deviation: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

fn cell(column: &str, measure: &str, computed: f64, reference: f64, tol: f64) -> TableCell {
    let dev = if reference == 0.0 {
        computed.abs()
    } else {
        (computed - reference).abs() / reference.abs()
    };
    let limit = if reference == 0.0 { 1e-12 } else { tol };
    TableCell {
        column: column.into(),
        measure: measure.into(),
        computed,
        reference,
        relative_deviation: dev,
        tolerance: limit,
        within_tolerance: dev <= limit,
    }
}

/// Compares one column with its published values. `D_FI(Ψ_k)` uses the
/// `D_FI` tolerance.
pub fn table_cells(col: &TableColumn, r: &AnalysisReport) -> Vec<TableCell> {
    let mut cells = vec![
        cell(col.label, "D_FI", r.d_fi, col.d_fi, col.tol_fi),
        cell(
            col.label,
            "D_FI_components",
            r.d_fi_components,
            col.d_fi_components,
            col.tol_fi,
        ),
    ];
    match col.d_rfi {
        Some(v) => cells.push(cell(
            col.label,
            "D_RFI",
            if r.d_rfi.divergent {
                f64::INFINITY
            } else {
                r.d_rfi.value
            },
            v,
            col.tol_rfi,
        )),
        None => cells.push(TableCell {
            column: col.label.into(),
            measure: "D_RFI".into(),
            computed: r.d_rfi.value,
            reference: f64::INFINITY,
            relative_deviation: 0.0,
            tolerance: 0.0,
            within_tolerance: r.d_rfi.divergent,
        }),
    }
    let d_lm = if r.closed_form { Some(r.n_sites) } else { r.d_lm_count() };
    let got = d_lm.map(|d| d as f64).unwrap_or(f64::NAN);
    let mut c = cell(col.label, "D_LM", got, col.d_lm as f64, 0.0);
    c.within_tolerance = d_lm == Some(col.d_lm);
    cells.push(c);
    cells
}

/// Builds a registry-like entry for a user model. Without `ground_s` the
/// ground multiplet is identified from `⟨S²⟩` of the lowest state in the
/// smallest `|M|` sector.
pub fn entry_from_model(
    model: crate::hamiltonian::SpinModel,
    ground_s: Option<HalfInt>,
    opts: &AnalysisOptions,
) -> Result<ModelEntry> {
    let ground_s = match ground_s {
        Some(s) => s,
        None => {
            let cluster = Arc::clone(model.cluster());
            let low = if cluster.s_max().is_integer() {
                HalfInt::ZERO
            } else {
                HalfInt::HALF
            };
            let sectors = SectorCache::with_cap(cluster, opts.max_sector_dim);
            let basis = sectors.get(low)?;
            let s2 = if model.is_complex() {
                ground_state_on_basis::<Complex<f64>>(&model, &basis, None, &opts.solver)?.s_squared()
            } else {
                ground_state_on_basis::<f64>(&model, &basis, None, &opts.solver)?.s_squared()
            };
            let s = crate::eigen::effective_spin(s2);
            let twice = (2.0 * s).round();
            if (twice - 2.0 * s).abs() > 1e-6 {
                return Err(Error::AmbiguousMultiplet(vec![s2]));
            }
            HalfInt::from_doubled(twice as i32)
        }
    };
    Ok(ModelEntry {
        key: ModelKey::Custom,
        notes: format!("user model {}", model.name()),
        kind: EntryKind::Exchange(model),
        ground_s,
    })
}

/// Runs every column (the Mn12 ones only with `extended`).
pub fn table1(extended: bool, opts: &AnalysisOptions) -> Result<(Vec<AnalysisReport>, Vec<TableCell>)> {
    let mut reports = Vec::new();
    let mut cells = Vec::new();
    for col in table_columns() {
        if col.extended && !extended {
            continue;
        }
        let entry = crate::models::build(col.key)?;
        let r = analyze(&entry, col.m1, col.m2, opts)?;
        cells.extend(table_cells(&col, &r));
        reports.push(r);
    }
    Ok((reports, cells))
}

/// `D_RFI` at an explicit field, for callers that fix `X` themselves.
pub fn d_rfi_at(moments: &SuperpositionMoments, phase: f64, field: &DirectionField) -> RelativeFisher {
    d_rfi(moments, phase, field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::build;

    fn quick() -> AnalysisOptions {
        AnalysisOptions::default()
    }

    #[test]
    fn linear_fit_recovers_a_line() {
        let f = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!(f.relative_rms < 1e-12);
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn grid_diagonal_is_zero_and_polarized_cell_is_largest() {
        let e = build(ModelKey::Fe4).unwrap();
        let cells = grid(&e, &quick()).unwrap();
        assert_eq!(cells.len(), 121);
        assert!(cells.iter().filter(|c| c.m1 == c.m2).all(|c| c.d_fi == 0.0));
        let best = cells
            .iter()
            .max_by(|a, b| a.d_fi.partial_cmp(&b.d_fi).unwrap())
            .unwrap();
        assert_eq!(best.m1.twice().abs(), 10);
        assert_eq!(best.m2, -best.m1);
        assert_eq!((cells[0].m1, cells[0].m2), (h(10), h(10)));
    }

    #[test]
    fn sweep_skips_zero_projection() {
        let e = build(ModelKey::Fe4).unwrap();
        let rows = plm_sweep(&e, &quick()).unwrap();
        assert!(rows.iter().all(|r| r.m.twice() > 0));
        assert_eq!(rows.len(), 5 * 5);
        assert!(rows.iter().all(|r| (0.5..=1.0).contains(&r.p)));
    }

    #[test]
    fn zero_spin_ring_has_no_polarized_pair() {
        let e = build(ModelKey::Mn6Family(HalfInt::HALF)).unwrap();
        assert!(matches!(polarized_pair(&e), Err(Error::EmptySector { .. })));
        assert!(matches!(
            analyze(&e, HalfInt::ZERO, HalfInt::ZERO, &quick()),
            Err(Error::EmptySector { .. })
        ));
    }

    #[test]
    fn projections_outside_the_multiplet_are_rejected() {
        let e = build(ModelKey::Fe4).unwrap();
        assert!(analyze(&e, h(12), h(-10), &quick()).is_err());
        assert!(analyze(&e, h(10), h(10), &quick()).is_err());
        let v = build(ModelKey::V15Effective).unwrap();
        assert!(analyze(&v, h(1), h(3), &quick()).is_err());
    }

    #[test]
    fn closed_form_report() {
        let e = build(ModelKey::Mn10ClosedForm).unwrap();
        let r = analyze(&e, h(46), h(-46), &quick()).unwrap();
        assert_eq!(r.d_fi, 23.0);
        let col = table_columns().into_iter().find(|c| c.label == "Mn10").unwrap();
        assert!(table_cells(&col, &r).iter().all(|c| c.within_tolerance));
    }
}
