//! Discrete versus continuum comparison runs: Kenyon identity sweeps against
//! exact enumeration, cylinder gap laws, and the convergence of two-point
//! height moments to integrated `U_2`.

use crate::dgauss::{DGaussError, DiscreteGaussianLaw};
use crate::height::{column_path, instanton_number, kenyon_moment, path_moment, HeightError, HeightRule, KenyonMomentRequest};
use crate::kasteleyn::{KasteleynError, KasteleynSystem, WeightOptions};
use crate::lattice::{
    build_holed_cylinder, build_multiholed, build_rectangle, puncture, CylinderStyle, DimerGraph, DualEdge, EdgeId,
    FaceId, GraphError, Hole, VertexId,
};
use crate::matchings::{count_matchings, empirical_moment, enumerate, exact_moment, MatchingError};
use crate::torus::{CylinderComponents, TorusError};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Kasteleyn(#[from] KasteleynError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error(transparent)]
    Height(#[from] HeightError),
    #[error(transparent)]
    DGauss(#[from] DGaussError),
    #[error(transparent)]
    Torus(#[from] TorusError),
    #[error("invalid config: {0}")]
    Config(String),
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Rectangle,
    Cylinder,
}

/// Declarative description of a lattice domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub topology: TopologyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<CylinderStyle>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub punctures: Vec<[i32; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub holes: Vec<[i32; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut_column: Option<i32>,
}

impl GraphSpec {
    pub fn rectangle(cols: i32, rows: i32) -> Self {
        Self {
            topology: TopologyKind::Rectangle,
            cols: Some(cols),
            rows: Some(rows),
            k: None,
            tau: None,
            style: None,
            punctures: vec![],
            holes: vec![],
            cut_column: None,
        }
    }

    pub fn cylinder(k: i32, tau: f64, style: CylinderStyle) -> Self {
        Self {
            topology: TopologyKind::Cylinder,
            cols: None,
            rows: None,
            k: Some(k),
            tau: Some(tau),
            style: Some(style),
            punctures: vec![],
            holes: vec![],
            cut_column: None,
        }
    }

    pub fn with_holes(mut self, holes: &[[i32; 4]]) -> Self {
        self.holes.extend_from_slice(holes);
        self
    }

    pub fn with_punctures(mut self, punctures: &[[i32; 2]]) -> Self {
        self.punctures.extend_from_slice(punctures);
        self
    }

    /// Short stable identifier, e.g. `cyl-k3-t1-DD` or `rect-10x10-h1-p2`.
    pub fn id(&self) -> String {
        let mut s = match self.topology {
            TopologyKind::Rectangle => format!("rect-{}x{}", self.cols.unwrap_or(0), self.rows.unwrap_or(0)),
            TopologyKind::Cylinder => format!(
                "cyl-k{}-t{}-{:?}",
                self.k.unwrap_or(0),
                self.tau.unwrap_or(0.0),
                self.style.unwrap_or(CylinderStyle::DD)
            ),
        };
        if !self.holes.is_empty() {
            s += &format!("-h{}", self.holes.len());
        }
        if !self.punctures.is_empty() {
            s += &format!("-p{}", self.punctures.len());
        }
        if let Some(c) = self.cut_column {
            s += &format!("-cut{c}");
        }
        s
    }

    pub fn build(&self) -> Result<DimerGraph, ExperimentError> {
        let holes: Vec<Hole> = self.holes.iter().map(|h| Hole::new(h[0], h[1], h[2], h[3])).collect();
        let g = match self.topology {
            TopologyKind::Rectangle => {
                let (c, r) = self
                    .cols
                    .zip(self.rows)
                    .ok_or_else(|| config_err("rectangle needs cols and rows"))?;
                if holes.is_empty() {
                    build_rectangle(c, r)?
                } else {
                    build_multiholed(c, r, &holes)?
                }
            }
            TopologyKind::Cylinder => {
                let k = self.k.ok_or_else(|| config_err("cylinder needs k"))?;
                let tau = self.tau.ok_or_else(|| config_err("cylinder needs tau"))?;
                let style = self.style.ok_or_else(|| config_err("cylinder needs style"))?;
                build_holed_cylinder(k, tau, style, &holes)?
            }
        };
        let g = if self.punctures.is_empty() {
            g
        } else {
            let victims: Vec<VertexId> = self.punctures.iter().map(|p| VertexId::new(p[0], p[1])).collect();
            puncture(&g, &victims)?
        };
        match self.cut_column {
            Some(c) => Ok(g.with_cut_column(c)?),
            None => Ok(g),
        }
    }
}

/// Top level config accepted by `dimer-cff run`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "suite", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    KenyonVerify(KenyonSweepConfig),
    GapStudy(GapStudyConfig),
    U2Convergence(U2ConvergenceConfig),
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        match self {
            ExperimentConfig::KenyonVerify(_) => Ok(()),
            ExperimentConfig::GapStudy(c) => {
                check_increasing(&c.ks)?;
                check_tau(c.tau)
            }
            ExperimentConfig::U2Convergence(c) => {
                check_increasing(&c.ks)?;
                check_tau(c.tau)
            }
        }
    }
}

fn check_increasing(ks: &[i32]) -> Result<(), ExperimentError> {
    if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(config_err(format!("k values must be non-empty and strictly increasing, got {ks:?}")));
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<(), ExperimentError> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("tau = {tau}")))
    }
}

/// Fields shared by every report's JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub suite: String,
    pub pass: bool,
    pub max_error: f64,
    pub rows: usize,
}

// ---------------------------------------------------------------------------
// Kenyon identity sweep

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepInstance {
    pub graph: GraphSpec,
    /// Explicit tuples of edges `[x1, y1, x2, y2]`, crossed from the first
    /// face of each edge.
    #[serde(default)]
    pub tuples: Vec<Vec<[i32; 4]>>,
}

/// Replace the weight of one edge by its negative in one instance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FaultInjection {
    pub instance: usize,
    pub edge: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KenyonSweepConfig {
    pub instances: Vec<SweepInstance>,
    /// Sizes of the random disjoint tuples drawn per instance.
    #[serde(default = "default_sizes")]
    pub random_sizes: Vec<usize>,
    #[serde(default = "default_per_size")]
    pub random_per_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Instances with more matchings use the transfer counting oracle.
    #[serde(default = "default_enumeration_limit")]
    pub enumeration_limit: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub fault: Option<FaultInjection>,
}

fn default_sizes() -> Vec<usize> {
    vec![1, 2, 3]
}
fn default_per_size() -> usize {
    4
}
fn default_enumeration_limit() -> u64 {
    200_000
}
fn default_tolerance() -> f64 {
    1e-9
}

impl KenyonSweepConfig {
    /// Rectangles 2×2 to 6×6, cylinders `k = 2, 3` at `τ = 1` in both styles,
    /// and a 10×10 domain with a 2×2 hole and two balancing punctures.
    pub fn default_suite() -> Self {
        let mut instances: Vec<SweepInstance> = [(2, 2), (3, 4), (4, 4), (5, 6), (6, 6)]
            .into_iter()
            .map(|(c, r)| SweepInstance {
                graph: GraphSpec::rectangle(c, r),
                tuples: vec![],
            })
            .collect();
        for k in [2, 3] {
            for style in [CylinderStyle::DD, CylinderStyle::ND] {
                instances.push(SweepInstance {
                    graph: GraphSpec::cylinder(k, 1.0, style),
                    tuples: vec![],
                });
            }
        }
        instances.push(SweepInstance {
            graph: holed_domain(),
            tuples: vec![],
        });
        Self {
            instances,
            random_sizes: default_sizes(),
            random_per_size: default_per_size(),
            seed: 2024,
            enumeration_limit: default_enumeration_limit(),
            tolerance: default_tolerance(),
            fault: None,
        }
    }
}

/// 10×10 box with a 2×2 hole at `(4,4)`, punctured at a black corner and a
/// white vertex under the hole.
pub fn holed_domain() -> GraphSpec {
    GraphSpec::rectangle(10, 10)
        .with_holes(&[[4, 4, 2, 2]])
        .with_punctures(&[[0, 0], [4, 3]])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Oracle {
    Enumeration,
    Transfer,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TupleRow {
    pub instance: String,
    pub m: usize,
    pub edges: String,
    pub determinant: f64,
    pub oracle_value: f64,
    pub oracle: Oracle,
    pub error: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceReport {
    pub instance: String,
    pub vertices: usize,
    pub matchings: u128,
    pub det_abs: f64,
    pub count_matches: bool,
    pub oracle: Oracle,
    pub tuples: usize,
    pub max_error: f64,
    pub pass: bool,
    /// Plaquettes whose weights break the Kasteleyn face condition.
    pub face_violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedInstance {
    pub instance: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KenyonSweepReport {
    pub instances: Vec<InstanceReport>,
    pub skipped: Vec<SkippedInstance>,
    pub rows: Vec<TupleRow>,
    pub warnings: Vec<String>,
    pub pass: bool,
    pub max_error: f64,
}

impl KenyonSweepReport {
    pub fn summary(&self) -> Summary {
        Summary {
            suite: "kenyon-verify".into(),
            pass: self.pass,
            max_error: self.max_error,
            rows: self.rows.len(),
        }
    }
}

fn edge_label(g: &DimerGraph, e: EdgeId) -> String {
    let edge = g.edge(e);
    format!("({},{})-({},{})", edge.tail.x, edge.tail.y, edge.head.x, edge.head.y)
}

fn face_label(f: FaceId) -> String {
    match f {
        FaceId::Plaquette { x, y } => format!("plaquette({x},{y})"),
        FaceId::Boundary(i) => format!("boundary({i})"),
    }
}

/// Seeded tuples of pairwise vertex-disjoint edges, each crossed from a
/// random side.
pub fn random_tuples(g: &DimerGraph, sizes: &[usize], per_size: usize, seed: u64) -> Vec<Vec<DualEdge>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.edges().len();
    let mut out = Vec::new();
    for &m in sizes {
        for _ in 0..per_size {
            let mut ids: Vec<EdgeId> = (0..n).collect();
            ids.shuffle(&mut rng);
            let mut chosen: Vec<EdgeId> = Vec::new();
            for e in ids {
                if chosen.len() == m {
                    break;
                }
                if chosen.iter().all(|&c| !g.edge(c).touches(g.edge(e))) {
                    chosen.push(e);
                }
            }
            if chosen.len() < m {
                continue;
            }
            let tuple = chosen
                .into_iter()
                .map(|e| {
                    let from = g.edge_faces(e)[rng.gen_range(0..2)];
                    g.dual_edge(e, from).expect("edge borders this face")
                })
                .collect();
            out.push(tuple);
        }
    }
    out
}

fn explicit_tuples(g: &DimerGraph, tuples: &[Vec<[i32; 4]>]) -> Result<Vec<Vec<DualEdge>>, ExperimentError> {
    tuples
        .iter()
        .map(|t| {
            t.iter()
                .map(|&[x1, y1, x2, y2]| {
                    let e = g
                        .edge_id(VertexId::new(x1, y1), VertexId::new(x2, y2))
                        .ok_or_else(|| config_err(format!("no edge ({x1},{y1})-({x2},{y2})")))?;
                    Ok(g.dual_edge(e, g.edge_faces(e)[0])?)
                })
                .collect()
        })
        .collect()
}

fn sweep_instance(
    cfg: &KenyonSweepConfig,
    index: usize,
    inst: &SweepInstance,
) -> Result<(InstanceReport, Vec<TupleRow>), ExperimentError> {
    let id = inst.graph.id();
    let g = inst.graph.build()?;
    let mut opts = WeightOptions::canonical(&g);
    if let Some(f) = cfg.fault.filter(|f| f.instance == index) {
        if f.edge >= g.edges().len() {
            return Err(config_err(format!("fault edge {} out of range", f.edge)));
        }
        let base = WeightOptions::canonical(&g);
        let ks = KasteleynSystem::with_options(&g, &base)?;
        opts.overrides.push((f.edge, -ks.weight(f.edge)));
    }
    let ks = KasteleynSystem::with_options(&g, &opts)?;
    let count = count_matchings(&g)?;
    let det_abs = ks.partition_function()?.abs();
    let (oracle, matchings) = if count <= cfg.enumeration_limit as u128 {
        (Oracle::Enumeration, Some(enumerate(&g, cfg.enumeration_limit)?))
    } else {
        (Oracle::Transfer, None)
    };
    let enumerated = matchings.as_ref().map(|m| m.len() as u128).unwrap_or(count);

    let seed = cfg.seed.wrapping_add(index as u64);
    let mut tuples = explicit_tuples(&g, &inst.tuples)?;
    tuples.extend(random_tuples(&g, &cfg.random_sizes, cfg.random_per_size, seed));

    let mut rows = Vec::new();
    for t in &tuples {
        let req = KenyonMomentRequest::new(&g, t.clone())?;
        let det_value = if det_abs < 0.5 { f64::NAN } else { kenyon_moment(&ks, &req)? };
        let oracle_value = match &matchings {
            Some(ms) => empirical_moment(&g, t, ms)?,
            None => exact_moment(&g, t)?,
        };
        let error = (det_value - oracle_value).abs();
        rows.push(TupleRow {
            instance: id.clone(),
            m: t.len(),
            edges: t.iter().map(|d| edge_label(&g, d.crossed_edge)).collect::<Vec<_>>().join(" "),
            determinant: det_value,
            oracle_value,
            oracle,
            error: if error.is_nan() { f64::INFINITY } else { error },
            tolerance: cfg.tolerance,
        });
    }
    let max_error = rows.iter().map(|r| r.error).fold(0.0, f64::max);
    let count_matches = det_abs.round() as u128 == enumerated && enumerated == count;
    let face_violations: Vec<String> = ks.face_condition_violations().into_iter().map(face_label).collect();
    let pass = count_matches && max_error < cfg.tolerance;
    Ok((
        InstanceReport {
            instance: id,
            vertices: g.vertices().len(),
            matchings: count,
            det_abs,
            count_matches,
            oracle,
            tuples: rows.len(),
            max_error,
            pass,
            face_violations,
        },
        rows,
    ))
}

pub fn run_kenyon_sweep(cfg: &KenyonSweepConfig) -> KenyonSweepReport {
    let results: Vec<_> = cfg
        .instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| (inst.graph.id(), sweep_instance(cfg, i, inst)))
        .collect();
    let mut instances = Vec::new();
    let mut skipped = Vec::new();
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (id, r) in results {
        match r {
            Ok((rep, mut rs)) => {
                if !rep.pass && !rep.face_violations.is_empty() {
                    warnings.push(format!("{id}: face condition broken at {}", rep.face_violations.join(", ")));
                }
                instances.push(rep);
                rows.append(&mut rs);
            }
            Err(e) => skipped.push(SkippedInstance {
                instance: id,
                reason: e.to_string(),
            }),
        }
    }
    if rows.is_empty() {
        warnings.push("no tuples configured; the sweep passes vacuously".into());
    }
    let max_error = rows.iter().map(|r| r.error).fold(0.0, f64::max);
    let pass = skipped.is_empty() && instances.iter().all(|i| i.pass);
    KenyonSweepReport {
        instances,
        skipped,
        rows,
        warnings,
        pass,
        max_error,
    }
}

// ---------------------------------------------------------------------------
// Gauge and cut invariance

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaugeRow {
    pub instance: String,
    pub variant: String,
    pub max_difference: f64,
}

/// Largest change of any Kenyon moment over random tuples when the cylinder
/// cut moves to each of `cut_columns` and when every weight is multiplied by
/// each of `phases` (and, separately, conjugated).
pub fn gauge_invariance(
    spec: &GraphSpec,
    cut_columns: &[i32],
    phases: &[Complex64],
    seed: u64,
) -> Result<Vec<GaugeRow>, ExperimentError> {
    let g = spec.build()?;
    let tuples = random_tuples(&g, &[1, 2, 3], 4, seed);
    let moments = |ks: &KasteleynSystem, tuples: &[Vec<DualEdge>]| -> Result<Vec<f64>, ExperimentError> {
        tuples
            .iter()
            .map(|t| Ok(kenyon_moment(ks, &KenyonMomentRequest::new(ks.graph(), t.clone())?)?))
            .collect()
    };
    let base = moments(&KasteleynSystem::new(&g)?, &tuples)?;
    let diff = |v: &[f64]| v.iter().zip(&base).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut rows = Vec::new();
    for &c in cut_columns {
        let moved = g.with_cut_column(c)?;
        let rebased: Vec<Vec<DualEdge>> = tuples
            .iter()
            .map(|t| t.iter().map(|d| moved.dual_edge(d.crossed_edge, d.from_face)).collect())
            .collect::<Result<_, _>>()?;
        let v = moments(&KasteleynSystem::new(&moved)?, &rebased)?;
        rows.push(GaugeRow {
            instance: spec.id(),
            variant: format!("cut column {c}"),
            max_difference: diff(&v),
        });
    }
    for &phase in phases {
        let mut opts = WeightOptions::canonical(&g);
        opts.global_phase = phase;
        let v = moments(&KasteleynSystem::with_options(&g, &opts)?, &tuples)?;
        rows.push(GaugeRow {
            instance: spec.id(),
            variant: format!("global phase {phase}"),
            max_difference: diff(&v),
        });
    }
    let mut opts = WeightOptions::canonical(&g);
    opts.conjugate = true;
    let v = moments(&KasteleynSystem::with_options(&g, &opts)?, &tuples)?;
    rows.push(GaugeRow {
        instance: spec.id(),
        variant: "conjugated weights".into(),
        max_difference: diff(&v),
    });
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Cylinder gap study

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapStudyConfig {
    pub tau: f64,
    pub ks: Vec<i32>,
    #[serde(default = "both_styles")]
    pub styles: Vec<CylinderStyle>,
    /// Largest `k` whose matchings are enumerated; larger `k` use path moments.
    #[serde(default = "default_enum_k")]
    pub enumeration_max_k: i32,
    /// Styles whose second-moment error must decrease along the sweep.
    #[serde(default = "nd_only")]
    pub assert_trend: Vec<CylinderStyle>,
    #[serde(default = "default_enumeration_limit")]
    pub enumeration_limit: u64,
}

fn both_styles() -> Vec<CylinderStyle> {
    vec![CylinderStyle::DD, CylinderStyle::ND]
}
fn default_enum_k() -> i32 {
    3
}
fn nd_only() -> Vec<CylinderStyle> {
    vec![CylinderStyle::ND]
}

impl Default for GapStudyConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            ks: vec![2, 3, 4],
            styles: both_styles(),
            enumeration_max_k: default_enum_k(),
            assert_trend: nd_only(),
            enumeration_limit: default_enumeration_limit(),
        }
    }
}

/// Shift of the instanton lattice for each style.
pub fn style_shift(style: CylinderStyle) -> f64 {
    match style {
        CylinderStyle::DD => 0.5,
        CylinderStyle::ND => 0.0,
    }
}

/// Modulus actually realized by `C_k`: `2⌊kτ/2⌋ / k`.
pub fn effective_tau(k: i32, tau: f64) -> f64 {
    2.0 * (k as f64 * tau / 2.0).floor() / k as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub k: i32,
    pub style: CylinderStyle,
    pub route: String,
    pub tau_eff: f64,
    /// Smallest difference between achievable gap values (enumeration only).
    pub spacing: Option<f64>,
    /// Fractional part of the centered support (enumeration only).
    pub offset: Option<f64>,
    /// `value:probability` pairs of the centered gap (enumeration only).
    pub distribution: Option<String>,
    pub m2: f64,
    pub m4: f64,
    pub law_m2: f64,
    pub law_m4: f64,
    pub err_m2: f64,
    pub err_m4: f64,
    pub swapped_err_m2: f64,
    pub swapped_err_m4: f64,
    /// Total variation distance to the law and to the law with swapped shift.
    pub tv: Option<f64>,
    pub tv_swapped: Option<f64>,
    /// `|moment route − enumeration|` where both were computed.
    pub route_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapStudyReport {
    pub tau: f64,
    pub rows: Vec<GapRow>,
    /// Difference of DD and ND centered offsets per enumerated `k`.
    pub offsets: Vec<(i32, f64)>,
    pub trend: Vec<(CylinderStyle, bool)>,
    pub notes: Vec<String>,
    pub pass: bool,
    pub max_error: f64,
}

impl GapStudyReport {
    pub fn summary(&self) -> Summary {
        Summary {
            suite: "gap-study".into(),
            pass: self.pass,
            max_error: self.max_error,
            rows: self.rows.len(),
        }
    }
}

/// Exact distribution of the `B_0 → B_1` height gap, as sorted
/// `(value, probability)` pairs.
pub fn gap_distribution(g: &DimerGraph, limit: u64) -> Result<Vec<(f64, f64)>, ExperimentError> {
    let rule = HeightRule::new(g)?;
    let all = enumerate(g, limit)?;
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for m in &all {
        let gap = instanton_number(g, &rule, m)?.gap;
        // Increments are ±1, 0, so gaps are integers relative to the reference.
        *counts.entry(gap.round() as i64).or_default() += 1;
    }
    let n = all.len() as f64;
    Ok(counts.into_iter().map(|(v, c)| (v as f64, c as f64 / n)).collect())
}

/// Centered second and fourth gap moments from path moments over column
/// paths at distinct columns.
pub fn gap_moments(g: &DimerGraph) -> Result<(f64, f64), ExperimentError> {
    let ks = KasteleynSystem::new(g)?;
    let cols: Vec<Vec<DualEdge>> = (0..4).map(|x| column_path(g, x)).collect::<Result<_, _>>()?;
    let m2 = path_moment(&ks, &cols[..2])?;
    let m4 = path_moment(&ks, &cols)?;
    Ok((m2, m4))
}

fn law_moments(law: &DiscreteGaussianLaw) -> Result<(f64, f64), ExperimentError> {
    Ok((
        law.twisted_expectation(&[0], &[2])?.re,
        law.twisted_expectation(&[0], &[4])?.re,
    ))
}

fn total_variation(dist: &[(f64, f64)], law: &DiscreteGaussianLaw) -> f64 {
    let mut covered = 0.0;
    let mut tv = 0.0;
    for &(v, p) in dist {
        let q = law.pmf(&[v]).unwrap_or(0.0);
        covered += q;
        tv += (p - q).abs();
    }
    0.5 * (tv + (1.0 - covered).max(0.0))
}

pub fn run_gap_study(cfg: &GapStudyConfig) -> Result<GapStudyReport, ExperimentError> {
    check_increasing(&cfg.ks)?;
    check_tau(cfg.tau)?;
    let jobs: Vec<(i32, CylinderStyle)> = cfg
        .ks
        .iter()
        .flat_map(|&k| cfg.styles.iter().map(move |&s| (k, s)))
        .collect();
    let rows: Vec<GapRow> = jobs
        .par_iter()
        .map(|&(k, style)| -> Result<GapRow, ExperimentError> {
            let g = GraphSpec::cylinder(k, cfg.tau, style).build()?;
            let tau_eff = effective_tau(k, cfg.tau);
            let energy = vec![vec![2.0 / tau_eff]];
            let c0 = style_shift(style);
            let law = DiscreteGaussianLaw::from_energy(vec![c0], &energy)?;
            let swapped = DiscreteGaussianLaw::from_energy(vec![0.5 - c0], &energy)?;
            let (law_m2, law_m4) = law_moments(&law)?;
            let (sw_m2, sw_m4) = law_moments(&swapped)?;

            let (mom_m2, mom_m4) = gap_moments(&g)?;
            let mut row = GapRow {
                k,
                style,
                route: "moments".into(),
                tau_eff,
                spacing: None,
                offset: None,
                distribution: None,
                m2: mom_m2,
                m4: mom_m4,
                law_m2,
                law_m4,
                err_m2: 0.0,
                err_m4: 0.0,
                swapped_err_m2: 0.0,
                swapped_err_m4: 0.0,
                tv: None,
                tv_swapped: None,
                route_agreement: None,
            };
            if k <= cfg.enumeration_max_k {
                let dist = gap_distribution(&g, cfg.enumeration_limit)?;
                let mean: f64 = dist.iter().map(|(v, p)| v * p).sum();
                let spacing = dist.windows(2).map(|w| w[1].0 - w[0].0).fold(f64::INFINITY, f64::min);
                let spacing = if spacing.is_finite() { spacing } else { 1.0 };
                let centered: Vec<(f64, f64)> = dist.iter().map(|&(v, p)| ((v - mean) / spacing, p)).collect();
                let moment = |r: i32| centered.iter().map(|(v, p)| v.powi(r) * p).sum::<f64>();
                let (m2, m4) = (moment(2), moment(4));
                row.route = "enumeration".into();
                row.route_agreement = Some((m2 - mom_m2).abs().max((m4 - mom_m4).abs()));
                row.m2 = m2;
                row.m4 = m4;
                row.spacing = Some(spacing);
                row.offset = Some(centered[0].0.rem_euclid(1.0) + 0.0);
                row.distribution = Some(
                    centered
                        .iter()
                        .map(|(v, p)| format!("{v}:{p:.12}"))
                        .collect::<Vec<_>>()
                        .join(" "),
                );
                row.tv = Some(total_variation(&centered, &law));
                row.tv_swapped = Some(total_variation(&centered, &swapped));
            }
            row.err_m2 = (row.m2 - law_m2).abs();
            row.err_m4 = (row.m4 - law_m4).abs();
            row.swapped_err_m2 = (row.m2 - sw_m2).abs();
            row.swapped_err_m4 = (row.m4 - sw_m4).abs();
            Ok(row)
        })
        .collect::<Result<_, _>>()?;

    let mut offsets = Vec::new();
    for &k in &cfg.ks {
        let find = |s| rows.iter().find(|r| r.k == k && r.style == s).and_then(|r| r.offset);
        if let (Some(dd), Some(nd)) = (find(CylinderStyle::DD), find(CylinderStyle::ND)) {
            offsets.push((k, (dd - nd).rem_euclid(1.0)));
        }
    }
    let trend: Vec<(CylinderStyle, bool)> = cfg
        .styles
        .iter()
        .map(|&s| {
            let errs: Vec<f64> = rows.iter().filter(|r| r.style == s).map(|r| r.err_m2).collect();
            (s, errs.windows(2).all(|w| w[1] < w[0]))
        })
        .collect();
    let mut notes = vec![
        "gap values rescaled by the smallest spacing of their support before comparison".to_string(),
        "law energy 2/tau_eff with tau_eff = 2*floor(k*tau/2)/k".to_string(),
    ];
    for (s, ok) in &trend {
        if !ok {
            notes.push(format!("{s:?}: second-moment error is not monotone in k"));
        }
    }
    let offsets_ok = offsets.iter().all(|&(_, d)| (d - 0.5).abs() < 1e-12);
    let routes_ok = rows.iter().all(|r| r.route_agreement.is_none_or(|a| a < 1e-9));
    let swap_ok = rows.iter().all(|r| match (r.tv, r.tv_swapped) {
        (Some(a), Some(b)) => b > a,
        _ => r.swapped_err_m2 + r.swapped_err_m4 > r.err_m2 + r.err_m4,
    });
    let trend_ok = trend
        .iter()
        .filter(|(s, _)| cfg.assert_trend.contains(s))
        .all(|(_, ok)| *ok);
    let max_error = rows.iter().map(|r| r.err_m2.max(r.err_m4)).fold(0.0, f64::max);
    Ok(GapStudyReport {
        tau: cfg.tau,
        rows,
        offsets,
        trend,
        notes,
        pass: offsets_ok && routes_ok && swap_ok && trend_ok,
        max_error,
    })
}

// ---------------------------------------------------------------------------
// U_2 convergence

/// Straight segment `[a, b]` in the strip `0 ≤ Im z ≤ τ/2`, as `[re, im]` pairs.
pub type Segment = [[f64; 2]; 2];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct U2ConvergenceConfig {
    pub tau: f64,
    pub style: CylinderStyle,
    pub ks: Vec<i32>,
    #[serde(default = "default_segments")]
    pub segments: [Segment; 2],
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
    /// Minimum required `|U_2^DD − U_2^ND|` integral at the configured pair.
    #[serde(default = "default_distinguish")]
    pub distinguish_threshold: f64,
}

pub fn default_segments() -> [Segment; 2] {
    [
        [[0.0, 2.0 / 16.0], [0.0, 4.0 / 16.0]],
        [[2.0 / 16.0, 3.0 / 16.0], [2.0 / 16.0, 6.0 / 16.0]],
    ]
}
fn default_nodes() -> usize {
    24
}
fn default_distinguish() -> f64 {
    1e-3
}

impl Default for U2ConvergenceConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            style: CylinderStyle::ND,
            ks: vec![8, 16, 32],
            segments: default_segments(),
            quadrature_nodes: default_nodes(),
            distinguish_threshold: default_distinguish(),
        }
    }
}

/// One row of a convergence table, keyed by `k` and observable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub k: i32,
    pub observable: String,
    pub discrete: f64,
    pub continuum: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    /// Same moment on the mirror image `x ↦ −x` of both paths.
    pub reflected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct U2ConvergenceReport {
    pub style: CylinderStyle,
    pub tau: f64,
    pub continuum: f64,
    /// The same integral with the other style's kernel.
    pub other_style_continuum: f64,
    pub rows: Vec<ConvergenceRow>,
    pub monotone: bool,
    pub reflection_ok: bool,
    pub distinguishable: bool,
    pub warnings: Vec<String>,
    pub pass: bool,
    pub max_error: f64,
}

impl U2ConvergenceReport {
    pub fn summary(&self) -> Summary {
        Summary {
            suite: "u2-convergence".into(),
            pass: self.pass,
            max_error: self.max_error,
            rows: self.rows.len(),
        }
    }
}

fn to_complex(p: [f64; 2]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

/// Dual path of `C_k` approximating an axis-parallel segment. A continuum
/// point `z` sits at plaquette column `round(2k Re z)` and row
/// `round(2k Im z) + ymin − 1`.
pub fn lattice_path(g: &DimerGraph, seg: Segment, mirror: bool) -> Result<Vec<DualEdge>, ExperimentError> {
    let k = g.cylinder_params().ok_or(HeightError::NotCylinder)?.k;
    let scale = 2.0 * k as f64;
    let (a, b) = (to_complex(seg[0]), to_complex(seg[1]));
    let col = |z: Complex64| (scale * z.re).round() as i32;
    let row = |z: Complex64| (scale * z.im).round() as i32 + g.ymin() - 1;
    let c = g.cols();
    let mirror_x = |x: i32| if mirror { (-x - 1).rem_euclid(c) } else { x.rem_euclid(c) };
    let lookup = |p: VertexId, q: VertexId| {
        g.edge_id(p, q).ok_or_else(|| config_err(format!("segment leaves the lattice at ({},{})", p.x, p.y)))
    };
    if col(a) == col(b) {
        let x = mirror_x(col(a));
        let (y0, y1) = (row(a), row(b));
        if y1 <= y0 {
            return Err(config_err("vertical segments must point up"));
        }
        let edges: Vec<EdgeId> = (y0..y1)
            .map(|y| lookup(VertexId::new(x, y + 1), VertexId::new((x + 1).rem_euclid(c), y + 1)))
            .collect::<Result<_, _>>()?;
        let start = g.face_at(x, y0).ok_or(GraphError::MissingFace(FaceId::Plaquette { x, y: y0 }))?;
        Ok(g.path_across(start, &edges)?)
    } else if row(a) == row(b) {
        if mirror {
            return Err(config_err("mirrored horizontal segments are not supported"));
        }
        let y = row(a);
        let (x0, x1) = (col(a), col(b));
        if x1 <= x0 {
            return Err(config_err("horizontal segments must point right"));
        }
        let edges: Vec<EdgeId> = (x0..x1)
            .map(|x| {
                let xx = (x + 1).rem_euclid(c);
                lookup(VertexId::new(xx, y), VertexId::new(xx, y + 1))
            })
            .collect::<Result<_, _>>()?;
        let start = g.face_at(x0, y).ok_or(GraphError::MissingFace(FaceId::Plaquette { x: x0, y }))?;
        Ok(g.path_across(start, &edges)?)
    } else {
        Err(config_err("segments must be horizontal or vertical"))
    }
}

pub fn run_u2_convergence(cfg: &U2ConvergenceConfig) -> Result<U2ConvergenceReport, ExperimentError> {
    check_increasing(&cfg.ks)?;
    check_tau(cfg.tau)?;
    let mut warnings = Vec::new();
    let margin = 0.05 * cfg.tau;
    for seg in &cfg.segments {
        for p in seg {
            if p[1] < margin || p[1] > cfg.tau / 2.0 - margin {
                warnings.push(format!(
                    "point ({}, {}) is within {margin} of the boundary; bulk hypothesis violated",
                    p[0], p[1]
                ));
            }
        }
    }
    let seg = |s: Segment| (to_complex(s[0]), to_complex(s[1]));
    let (s1, s2) = (seg(cfg.segments[0]), seg(cfg.segments[1]));
    let other = match cfg.style {
        CylinderStyle::DD => CylinderStyle::ND,
        CylinderStyle::ND => CylinderStyle::DD,
    };
    let continuum = CylinderComponents::new(cfg.style, cfg.tau)?.integrate_u2(s1, s2, cfg.quadrature_nodes)?;
    let other_style_continuum = CylinderComponents::new(other, cfg.tau)?.integrate_u2(s1, s2, cfg.quadrature_nodes)?;

    let rows: Vec<ConvergenceRow> = cfg
        .ks
        .par_iter()
        .map(|&k| -> Result<ConvergenceRow, ExperimentError> {
            let g = GraphSpec::cylinder(k, cfg.tau, cfg.style).build()?;
            let ks = KasteleynSystem::new(&g)?;
            let paths: Vec<Vec<DualEdge>> = cfg
                .segments
                .iter()
                .map(|&s| lattice_path(&g, s, false))
                .collect::<Result<_, _>>()?;
            let discrete = path_moment(&ks, &paths)?;
            let mirrored: Result<Vec<Vec<DualEdge>>, _> =
                cfg.segments.iter().map(|&s| lattice_path(&g, s, true)).collect();
            let reflected = match mirrored {
                Ok(p) => path_moment(&ks, &p)?,
                Err(_) => f64::NAN,
            };
            let abs_error = (discrete - continuum).abs();
            Ok(ConvergenceRow {
                k,
                observable: "u2-path-pair".into(),
                discrete,
                continuum,
                abs_error,
                rel_error: abs_error / continuum.abs().max(f64::MIN_POSITIVE),
                reflected,
            })
        })
        .collect::<Result<_, _>>()?;
    let monotone = rows.windows(2).all(|w| w[1].abs_error < w[0].abs_error);
    let reflection_ok = rows.iter().all(|r| (r.reflected - r.discrete).abs() < 1e-9);
    let distinguishable = (continuum - other_style_continuum).abs() > cfg.distinguish_threshold;
    let max_error = rows.iter().map(|r| r.abs_error).fold(0.0, f64::max);
    Ok(U2ConvergenceReport {
        style: cfg.style,
        tau: cfg.tau,
        continuum,
        other_style_continuum,
        rows,
        monotone,
        reflection_ok,
        distinguishable,
        warnings,
        pass: monotone && reflection_ok && distinguishable,
        max_error,
    })
}
