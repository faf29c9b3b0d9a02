//! Height functions, cylinder gaps and Kenyon's determinant formula for
//! centered height-increment moments.
//!
//! Crossing a dual edge of sign `s` over edge `e` changes the height by
//! `s·(1[e ∈ M_ref] − 1[e ∈ M])` for a fixed reference matching `M_ref`. This
//! differs from the `s·(1/4 − 1[e ∈ M])` rule by a constant per edge, so it
//! yields the same centered moments, and it is closed around every face
//! including merged boundary faces.

use crate::kasteleyn::{KasteleynError, KasteleynSystem};
use crate::lattice::{DimerGraph, DualEdge, EdgeId, FaceId, GraphError, Orientation, VertexId};
use crate::linalg::{det, DenseMatrix};
use crate::matchings::{find_perfect_matching, Matching};
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::{HashMap, HashSet, VecDeque};
use thiserror::Error;

/// Global sign relating `det[1_{i≠j} K^{-1}(b_i,w_j)] ∏ K(w_j,b_j) ∏ s_j` to
/// `E ∏ s_j (1[e_j ∈ M] − p_j)`, calibrated on the 2×4 rectangle.
pub const KENYON_SIGN: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeightError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Kasteleyn(#[from] KasteleynError),
    #[error("graph has no perfect matching")]
    NoMatching,
    #[error("matching is not perfect")]
    NotPerfect,
    #[error("operation needs a cylinder")]
    NotCylinder,
    #[error("height increments disagree at face {0:?}")]
    Inconsistent(FaceId),
    #[error("crossed edges {0} and {1} share a vertex")]
    NotDisjoint(EdgeId, EdgeId),
    #[error("paths cross the same edge {0}")]
    SharedEdge(EdgeId),
    #[error("moment has imaginary part {0:e}")]
    ComplexMoment(f64),
}

/// Increment rule with a fixed reference matching.
#[derive(Debug, Clone)]
pub struct HeightRule {
    reference: Matching,
}

impl HeightRule {
    pub fn new(g: &DimerGraph) -> Result<Self, HeightError> {
        Ok(Self {
            reference: find_perfect_matching(g).ok_or(HeightError::NoMatching)?,
        })
    }

    pub fn with_reference(reference: Matching) -> Self {
        Self { reference }
    }

    pub fn reference(&self) -> &Matching {
        &self.reference
    }

    pub fn increment(&self, d: &DualEdge, m: &Matching) -> f64 {
        let e = d.crossed_edge;
        d.sign as f64 * (self.reference.contains(e) as u8 as f64 - m.contains(e) as u8 as f64)
    }

    pub fn path_increment(&self, path: &[DualEdge], m: &Matching) -> f64 {
        path.iter().map(|d| self.increment(d, m)).sum()
    }
}

#[derive(Debug, Clone)]
pub struct HeightField {
    pub base_face: FaceId,
    pub values: HashMap<FaceId, f64>,
    /// Increment around the cylinder along the lowest plaquette row.
    pub winding: Option<f64>,
}

impl HeightField {
    pub fn value(&self, f: FaceId) -> Option<f64> {
        self.values.get(&f).copied()
    }
}

/// Dual edges crossing vertical edges on the seam column of a cylinder are
/// excluded, so heights live on the cut-open dual graph.
fn crosses_height_cut(g: &DimerGraph, e: EdgeId) -> bool {
    let edge = g.edge(e);
    g.is_cylinder() && edge.orientation == Orientation::Vertical && edge.tail.x == g.cut_column()
}

pub fn height_field(
    g: &DimerGraph,
    rule: &HeightRule,
    m: &Matching,
    base_face: FaceId,
) -> Result<HeightField, HeightError> {
    if !m.is_perfect(g) {
        return Err(HeightError::NotPerfect);
    }
    g.face(base_face)?;
    let mut values = HashMap::from([(base_face, 0.0)]);
    let mut queue = VecDeque::from([base_face]);
    while let Some(f) = queue.pop_front() {
        let hf = values[&f];
        for (e, nb) in g.dual_neighbors(f)? {
            if crosses_height_cut(g, e) {
                continue;
            }
            let h = hf + rule.increment(&g.dual_edge(e, f)?, m);
            match values.get(&nb) {
                Some(&old) if (old - h).abs() > 1e-9 => return Err(HeightError::Inconsistent(nb)),
                Some(_) => {}
                None => {
                    values.insert(nb, h);
                    queue.push_back(nb);
                }
            }
        }
    }
    let winding = if g.is_cylinder() {
        Some(rule.path_increment(&winding_loop(g)?, m))
    } else {
        None
    };
    Ok(HeightField {
        base_face,
        values,
        winding,
    })
}

/// Dual path from `B_0` to `B_1` crossing the horizontal edges
/// `(x, y)–(x+1, y)` of one column.
pub fn column_path(g: &DimerGraph, x: i32) -> Result<Vec<DualEdge>, HeightError> {
    if !g.is_cylinder() {
        return Err(HeightError::NotCylinder);
    }
    let c = g.cols();
    let x = x.rem_euclid(c);
    let edges: Vec<EdgeId> = (g.ymin()..=g.ymax())
        .map(|y| {
            g.edge_id(VertexId::new(x, y), VertexId::new((x + 1) % c, y))
                .ok_or(GraphError::MissingVertex { x, y })
        })
        .collect::<Result<_, _>>()?;
    Ok(g.path_across(FaceId::Boundary(0), &edges)?)
}

/// Closed dual loop through the lowest row of plaquettes, winding once.
pub fn winding_loop(g: &DimerGraph) -> Result<Vec<DualEdge>, HeightError> {
    if !g.is_cylinder() {
        return Err(HeightError::NotCylinder);
    }
    let y = g.ymin();
    let c = g.cols();
    let edges: Vec<EdgeId> = (1..=c)
        .map(|x| {
            let x = x % c;
            g.edge_id(VertexId::new(x, y), VertexId::new(x, y + 1))
                .ok_or(GraphError::MissingVertex { x, y })
        })
        .collect::<Result<_, _>>()?;
    let start = g.face_at(0, y).ok_or(GraphError::MissingFace(FaceId::Plaquette { x: 0, y }))?;
    Ok(g.path_across(start, &edges)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Instanton {
    /// Height increment from `B_0` to `B_1` along the seam column.
    pub gap: f64,
    /// Height increment once around the cylinder.
    pub winding: f64,
}

pub fn instanton_number(g: &DimerGraph, rule: &HeightRule, m: &Matching) -> Result<Instanton, HeightError> {
    let gap = rule.path_increment(&column_path(g, g.cut_column())?, m);
    let winding = rule.path_increment(&winding_loop(g)?, m);
    Ok(Instanton { gap, winding })
}

/// Disjoint primal edges with their dual crossings.
#[derive(Debug, Clone, PartialEq)]
pub struct KenyonMomentRequest {
    crossings: Vec<DualEdge>,
}

impl KenyonMomentRequest {
    pub fn new(g: &DimerGraph, crossings: Vec<DualEdge>) -> Result<Self, HeightError> {
        for (i, a) in crossings.iter().enumerate() {
            for b in &crossings[..i] {
                if g.edge(a.crossed_edge).touches(g.edge(b.crossed_edge)) {
                    return Err(HeightError::NotDisjoint(b.crossed_edge, a.crossed_edge));
                }
            }
        }
        Ok(Self { crossings })
    }

    pub fn crossings(&self) -> &[DualEdge] {
        &self.crossings
    }
}

/// `det[1_{i≠j} K^{-1}(b_i,w_j)] ∏ K(w_j,b_j) ∏ s_j` for distinct edges
/// (which may share vertices).
fn signed_determinant(ks: &KasteleynSystem, crossings: &[DualEdge]) -> Result<Complex64, HeightError> {
    let g = ks.graph();
    let m = crossings.len();
    let ends: Vec<(VertexId, VertexId)> = crossings
        .iter()
        .map(|d| (g.edge(d.crossed_edge).black(), g.edge(d.crossed_edge).white()))
        .collect();
    let mut a = DenseMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if i != j {
                a[(i, j)] = ks.inverse_entry(ends[i].0, ends[j].1)?;
            }
        }
    }
    let d = det(&a).map_err(KasteleynError::from)?;
    let k: Complex64 = crossings.iter().map(|c| ks.weight(c.crossed_edge)).product();
    let s: f64 = crossings.iter().map(|c| c.sign as f64).product();
    Ok(d * k * s * KENYON_SIGN)
}

fn real_part(z: Complex64) -> Result<f64, HeightError> {
    if z.im.abs() > 1e-9 * z.re.abs().max(1.0) {
        return Err(HeightError::ComplexMoment(z.im));
    }
    Ok(z.re)
}

/// `E ∏_j s_j (1[e_j ∈ M] − p_j)` by the determinant formula.
pub fn kenyon_moment(ks: &KasteleynSystem, req: &KenyonMomentRequest) -> Result<f64, HeightError> {
    let whites: Vec<VertexId> = req
        .crossings
        .iter()
        .map(|d| ks.graph().edge(d.crossed_edge).white())
        .collect();
    ks.prefetch(&whites)?;
    real_part(signed_determinant(ks, &req.crossings)?)
}

/// Centered moment `E ∏_j (h̄(end_j) − h̄(start_j))` of height differences
/// along dual paths, expanded multilinearly into determinant moments.
pub fn path_moment(ks: &KasteleynSystem, paths: &[Vec<DualEdge>]) -> Result<f64, HeightError> {
    let mut seen = HashSet::new();
    for d in paths.iter().flatten() {
        if !seen.insert(d.crossed_edge) {
            return Err(HeightError::SharedEdge(d.crossed_edge));
        }
    }
    if paths.iter().any(|p| p.is_empty()) {
        return Ok(0.0);
    }
    let whites: Vec<VertexId> = seen.iter().map(|&e| ks.graph().edge(e).white()).collect();
    ks.prefetch(&whites)?;

    let sizes: Vec<usize> = paths.iter().map(|p| p.len()).collect();
    let total_terms: usize = sizes.iter().product();
    let term = |mut idx: usize| -> Result<Complex64, HeightError> {
        let mut tuple = Vec::with_capacity(paths.len());
        for (p, &n) in paths.iter().zip(&sizes) {
            tuple.push(p[idx % n]);
            idx /= n;
        }
        signed_determinant(ks, &tuple)
    };
    let sum = (0..total_terms)
        .into_par_iter()
        .map(term)
        .try_reduce(|| Complex64::new(0.0, 0.0), |a, b| Ok(a + b))?;
    // Each height step is −s(1[e ∈ M] − p) after centering.
    let parity = if paths.len().is_multiple_of(2) { 1.0 } else { -1.0 };
    real_part(sum * parity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_cylinder, build_rectangle, CylinderStyle};
    use crate::matchings::{empirical_moment, enumerate};

    #[test]
    fn two_by_two_heights() {
        let g = build_rectangle(2, 2).unwrap();
        let all = enumerate(&g, 10).unwrap();
        let rule = HeightRule::new(&g).unwrap();
        let center = FaceId::Plaquette { x: 0, y: 0 };
        let mut inner = Vec::new();
        for m in &all {
            let h = height_field(&g, &rule, m, FaceId::Boundary(0)).unwrap();
            assert_eq!(h.value(FaceId::Boundary(0)), Some(0.0));
            inner.push(h.value(center).unwrap());
        }
        // One matching is the reference, the other differs by a full unit.
        inner.sort_by(f64::total_cmp);
        assert_eq!(inner[0].abs() + inner[1].abs(), 1.0);
        // Centered increments of the two matchings are opposite.
        let mean = (inner[0] + inner[1]) / 2.0;
        assert_eq!(inner[0] - mean, -(inner[1] - mean));
    }

    #[test]
    fn kenyon_calibration_on_two_by_four() {
        let g = build_rectangle(4, 2).unwrap();
        let ks = KasteleynSystem::new(&g).unwrap();
        let all = enumerate(&g, 100).unwrap();
        let e1 = g.edge_id(VertexId::new(1, 0), VertexId::new(1, 1)).unwrap();
        let e2 = g.edge_id(VertexId::new(2, 0), VertexId::new(2, 1)).unwrap();
        let d1 = g.dual_edge(e1, g.edge_faces(e1)[0]).unwrap();
        let d2 = g.dual_edge(e2, g.edge_faces(e2)[0]).unwrap();
        let req = KenyonMomentRequest::new(&g, vec![d1, d2]).unwrap();
        let det_side = kenyon_moment(&ks, &req).unwrap();
        let enum_side = empirical_moment(&g, &[d1, d2], &all).unwrap();
        assert!((det_side - enum_side).abs() < 1e-12, "{det_side} vs {enum_side}");
        assert!(enum_side.abs() > 1e-3);
        let single = KenyonMomentRequest::new(&g, vec![d1]).unwrap();
        assert_eq!(kenyon_moment(&ks, &single).unwrap(), 0.0);
    }

    #[test]
    fn disjointness_is_enforced() {
        let g = build_rectangle(4, 2).unwrap();
        let e1 = g.edge_id(VertexId::new(0, 0), VertexId::new(1, 0)).unwrap();
        let e2 = g.edge_id(VertexId::new(1, 0), VertexId::new(1, 1)).unwrap();
        let d1 = g.dual_edge(e1, g.edge_faces(e1)[0]).unwrap();
        let d2 = g.dual_edge(e2, g.edge_faces(e2)[0]).unwrap();
        assert!(matches!(
            KenyonMomentRequest::new(&g, vec![d1, d2]),
            Err(HeightError::NotDisjoint(..))
        ));
    }

    #[test]
    fn cylinder_gap_and_winding() {
        let g = build_cylinder(2, 1.0, CylinderStyle::DD).unwrap();
        let rule = HeightRule::new(&g).unwrap();
        let all = enumerate(&g, 1000).unwrap();
        let gaps: Vec<f64> = all
            .iter()
            .map(|m| {
                let i = instanton_number(&g, &rule, m).unwrap();
                assert_eq!(i.winding, 0.0);
                i.gap
            })
            .collect();
        for &a in &gaps {
            assert_eq!(a.fract(), 0.0);
        }
        for x in 1..4 {
            let p = column_path(&g, x).unwrap();
            for (m, &gap) in all.iter().zip(&gaps) {
                assert_eq!(rule.path_increment(&p, m), gap);
            }
        }
    }
}
