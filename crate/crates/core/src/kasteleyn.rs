//! Kasteleyn matrices with monodromy twists along the graph's cuts.
//!
//! Horizontal edges carry weight 1 and vertical edges weight `i`. An edge
//! crossed by the cut of a boundary face is multiplied by that cut's twist
//! `χ` when its white endpoint lies left of the upward cut direction and by
//! `conj(χ)` otherwise, so a twist acts as a flat connection.

use crate::lattice::{Color, DimerGraph, EdgeId, FaceId, Orientation, VertexId};
use crate::linalg::{DenseMatrix, LinalgError, LuFactorization, Scalar};
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KasteleynError {
    #[error("graph has {black} black and {white} white vertices; the Kasteleyn matrix is not square")]
    Rectangular { black: usize, white: usize },
    #[error("Kasteleyn matrix is singular; no inverse")]
    NoInverse,
    #[error("weight {value} on edge {edge} is not of unit modulus")]
    NonUnitWeight { edge: EdgeId, value: Complex64 },
    #[error("expected {expected} twists, got {got}")]
    TwistCount { expected: usize, got: usize },
    #[error("vertex ({x},{y}) is not a {expected:?} vertex of the graph")]
    BadVertex { x: i32, y: i32, expected: Color },
    #[error("edge probability {value} out of range on edge {edge}")]
    Inconsistent { edge: EdgeId, value: Complex64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Twist per cut for which `|det K|` counts perfect matchings.
///
/// A bounded face enclosing `I` missing lattice points needs the twist
/// `(-1)^I`. On cylinders the bottom boundary row closes up with `k` edges of
/// weight 1, so the seam twist is `(-1)^(k + 1 + I)`.
pub fn kasteleyn_twists(g: &DimerGraph) -> Vec<Complex64> {
    g.cuts()
        .iter()
        .map(|cut| {
            let mut parity = g.enclosed_missing(cut.face);
            if g.is_cylinder() && cut.face == 0 {
                let k = g.cylinder_params().map(|c| c.k).unwrap_or(0) as usize;
                parity += k + 1;
            }
            Complex64::new(if parity.is_multiple_of(2) { 1.0 } else { -1.0 }, 0.0)
        })
        .collect()
}

/// Weight assignment on top of the standard `1 / i` gauge.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightOptions {
    /// One unit complex per cut of the graph.
    pub twists: Vec<Complex64>,
    /// Global unit phase applied to every edge.
    pub global_phase: Complex64,
    /// Conjugate every weight after twisting.
    pub conjugate: bool,
    /// Explicit unit-modulus weight replacements.
    pub overrides: Vec<(EdgeId, Complex64)>,
}

impl WeightOptions {
    pub fn canonical(g: &DimerGraph) -> Self {
        Self::with_twists(kasteleyn_twists(g))
    }

    pub fn uniform(g: &DimerGraph, monodromy: Complex64) -> Self {
        Self::with_twists(vec![monodromy; g.cuts().len()])
    }

    pub fn with_twists(twists: Vec<Complex64>) -> Self {
        Self {
            twists,
            global_phase: Complex64::new(1.0, 0.0),
            conjugate: false,
            overrides: Vec::new(),
        }
    }
}

/// Determinant as `log |det K|` and a unit phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionFunction {
    pub log_abs_det: f64,
    pub phase: Complex64,
}

impl PartitionFunction {
    pub fn abs(&self) -> f64 {
        self.log_abs_det.exp()
    }

    /// `|det K|` rounded to the nearest integer.
    pub fn rounded(&self) -> u128 {
        self.abs().round() as u128
    }
}

#[derive(Debug)]
pub struct KasteleynSystem {
    graph: DimerGraph,
    twists: Vec<Complex64>,
    weights: Vec<Complex64>,
    whites: Vec<VertexId>,
    blacks: Vec<VertexId>,
    white_row: HashMap<VertexId, usize>,
    black_col: HashMap<VertexId, usize>,
    matrix: DenseMatrix<Complex64>,
    lu: OnceLock<LuFactorization<Complex64>>,
    columns: RwLock<HashMap<usize, Arc<Vec<Complex64>>>>,
}

impl KasteleynSystem {
    /// Standard weights with the same `monodromy` on every cut.
    pub fn assemble(g: &DimerGraph, monodromy: Complex64) -> Result<Self, KasteleynError> {
        Self::with_options(g, &WeightOptions::uniform(g, monodromy))
    }

    /// Standard weights with the counting twists of [`kasteleyn_twists`].
    pub fn new(g: &DimerGraph) -> Result<Self, KasteleynError> {
        Self::with_options(g, &WeightOptions::canonical(g))
    }

    pub fn with_options(g: &DimerGraph, opts: &WeightOptions) -> Result<Self, KasteleynError> {
        let blacks: Vec<VertexId> = g.black_vertices().collect();
        let whites: Vec<VertexId> = g.white_vertices().collect();
        if blacks.len() != whites.len() {
            return Err(KasteleynError::Rectangular {
                black: blacks.len(),
                white: whites.len(),
            });
        }
        if opts.twists.len() != g.cuts().len() {
            return Err(KasteleynError::TwistCount {
                expected: g.cuts().len(),
                got: opts.twists.len(),
            });
        }
        let mut weights: Vec<Complex64> = g
            .edges()
            .iter()
            .map(|e| match e.orientation {
                Orientation::Horizontal => Complex64::new(1.0, 0.0),
                Orientation::Vertical => Complex64::new(0.0, 1.0),
            })
            .collect();
        for (cut, &chi) in g.cuts().iter().zip(&opts.twists) {
            for &e in &cut.edges {
                let white_left = g.edge(e).tail.color() == Color::White;
                weights[e] *= if white_left { chi } else { chi.conj() };
            }
        }
        for w in weights.iter_mut() {
            *w *= opts.global_phase;
            if opts.conjugate {
                *w = w.conj();
            }
        }
        for &(e, value) in &opts.overrides {
            weights[e] = value;
        }
        for (e, w) in weights.iter().enumerate() {
            if (w.norm() - 1.0).abs() > 1e-12 {
                return Err(KasteleynError::NonUnitWeight { edge: e, value: *w });
            }
        }
        let white_row: HashMap<VertexId, usize> =
            whites.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let black_col: HashMap<VertexId, usize> =
            blacks.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let n = whites.len();
        let mut matrix = DenseMatrix::zeros(n, n);
        for (e, edge) in g.edges().iter().enumerate() {
            matrix[(white_row[&edge.white()], black_col[&edge.black()])] = weights[e];
        }
        Ok(Self {
            graph: g.clone(),
            twists: opts.twists.clone(),
            weights,
            whites,
            blacks,
            white_row,
            black_col,
            matrix,
            lu: OnceLock::new(),
            columns: RwLock::new(HashMap::new()),
        })
    }

    pub fn graph(&self) -> &DimerGraph {
        &self.graph
    }

    pub fn twists(&self) -> &[Complex64] {
        &self.twists
    }

    pub fn weight(&self, e: EdgeId) -> Complex64 {
        self.weights[e]
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    /// Rows indexed by white vertices, columns by black vertices.
    pub fn matrix(&self) -> &DenseMatrix<Complex64> {
        &self.matrix
    }

    pub fn whites(&self) -> &[VertexId] {
        &self.whites
    }

    pub fn blacks(&self) -> &[VertexId] {
        &self.blacks
    }

    fn row(&self, w: VertexId) -> Result<usize, KasteleynError> {
        self.white_row.get(&w).copied().ok_or(KasteleynError::BadVertex {
            x: w.x,
            y: w.y,
            expected: Color::White,
        })
    }

    fn col(&self, b: VertexId) -> Result<usize, KasteleynError> {
        self.black_col.get(&b).copied().ok_or(KasteleynError::BadVertex {
            x: b.x,
            y: b.y,
            expected: Color::Black,
        })
    }

    /// `K(w, b)`.
    pub fn entry(&self, w: VertexId, b: VertexId) -> Result<Complex64, KasteleynError> {
        Ok(self.matrix[(self.row(w)?, self.col(b)?)])
    }

    pub fn factorization(&self) -> Result<&LuFactorization<Complex64>, KasteleynError> {
        if let Some(lu) = self.lu.get() {
            return Ok(lu);
        }
        let lu = LuFactorization::new(&self.matrix)?;
        Ok(self.lu.get_or_init(|| lu))
    }

    pub fn partition_function(&self) -> Result<PartitionFunction, KasteleynError> {
        if self.whites.is_empty() {
            return Ok(PartitionFunction {
                log_abs_det: 0.0,
                phase: Complex64::new(1.0, 0.0),
            });
        }
        let lu = self.factorization()?;
        Ok(PartitionFunction {
            log_abs_det: lu.log_abs_det(),
            phase: lu.det_phase(),
        })
    }

    /// Column of `K^{-1}` belonging to white vertex index `row`.
    fn column(&self, row: usize) -> Result<Arc<Vec<Complex64>>, KasteleynError> {
        if let Some(c) = self.columns.read().expect("column cache").get(&row) {
            return Ok(Arc::clone(c));
        }
        let lu = self.factorization()?;
        if lu.is_singular() {
            return Err(KasteleynError::NoInverse);
        }
        let mut e = vec![Complex64::zero(); self.whites.len()];
        e[row] = Complex64::one();
        let col = Arc::new(lu.solve(&e)?);
        self.columns
            .write()
            .expect("column cache")
            .insert(row, Arc::clone(&col));
        Ok(col)
    }

    /// Solve for the inverse columns of the given white vertices in parallel.
    pub fn prefetch(&self, whites: &[VertexId]) -> Result<(), KasteleynError> {
        let rows: Vec<usize> = whites.iter().map(|&w| self.row(w)).collect::<Result<_, _>>()?;
        self.factorization()?;
        rows.par_iter().try_for_each(|&r| self.column(r).map(|_| ()))
    }

    /// `K^{-1}(b, w)`.
    pub fn inverse_entry(&self, b: VertexId, w: VertexId) -> Result<Complex64, KasteleynError> {
        let c = self.col(b)?;
        Ok(self.column(self.row(w)?)?[c])
    }

    /// `K(w,b) K^{-1}(b,w)` for the edge `wb`.
    pub fn edge_probability(&self, e: EdgeId) -> Result<f64, KasteleynError> {
        let edge = self.graph.edge(e);
        let (w, b) = (edge.white(), edge.black());
        let p = self.weights[e] * self.inverse_entry(b, w)?;
        if p.im.abs() > 1e-9 || p.re < -1e-9 || p.re > 1.0 + 1e-9 {
            return Err(KasteleynError::Inconsistent { edge: e, value: p });
        }
        Ok(p.re.clamp(0.0, 1.0))
    }

    pub fn edge_probabilities(&self) -> Result<Vec<f64>, KasteleynError> {
        self.prefetch(&self.whites.clone())?;
        (0..self.graph.edges().len())
            .map(|e| self.edge_probability(e))
            .collect()
    }

    /// Plaquettes whose alternating weight product differs from `-1`.
    pub fn face_condition_violations(&self) -> Vec<FaceId> {
        let g = &self.graph;
        let mut out = Vec::new();
        for f in g.faces() {
            let FaceId::Plaquette { x, y } = f.id else {
                continue;
            };
            let v = |dx: i32, dy: i32| {
                let xx = x + dx;
                let xx = if g.is_cylinder() { xx.rem_euclid(g.cols()) } else { xx };
                VertexId::new(xx, y + dy)
            };
            let edge = |a: VertexId, b: VertexId| g.edge_id(a, b).map(|e| self.weights[e]);
            let (Some(bottom), Some(right), Some(top), Some(left)) = (
                edge(v(0, 0), v(1, 0)),
                edge(v(1, 0), v(1, 1)),
                edge(v(0, 1), v(1, 1)),
                edge(v(0, 0), v(0, 1)),
            ) else {
                continue;
            };
            let ratio = bottom * top / (right * left);
            if (ratio + 1.0).norm() > 1e-9 {
                out.push(f.id);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_cylinder, build_rectangle, CylinderStyle};

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    #[test]
    fn two_by_two() {
        let g = build_rectangle(2, 2).unwrap();
        let ks = KasteleynSystem::assemble(&g, one()).unwrap();
        assert_eq!(ks.matrix().rows(), 2);
        for i in 0..2 {
            for j in 0..2 {
                let z = ks.matrix()[(i, j)];
                assert!(z == one() || z == Complex64::new(0.0, 1.0));
            }
        }
        assert_eq!(ks.partition_function().unwrap().rounded(), 2);
        for e in 0..g.edges().len() {
            assert!((ks.edge_probability(e).unwrap() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn four_by_four_counts_36() {
        let g = build_rectangle(4, 4).unwrap();
        let ks = KasteleynSystem::new(&g).unwrap();
        assert_eq!(ks.partition_function().unwrap().rounded(), 36);
        assert!(ks.face_condition_violations().is_empty());
    }

    #[test]
    fn cylinder_seam_negation() {
        let g = build_cylinder(2, 1.0, CylinderStyle::DD).unwrap();
        let ks = KasteleynSystem::assemble(&g, -one()).unwrap();
        assert_eq!(ks.matrix().rows(), 6);
        let negated: Vec<EdgeId> = (0..g.edges().len())
            .filter(|&e| {
                let base = match g.edge(e).orientation {
                    Orientation::Horizontal => one(),
                    Orientation::Vertical => Complex64::new(0.0, 1.0),
                };
                (ks.weight(e) + base).norm() < 1e-15
            })
            .collect();
        assert_eq!(negated, g.cut().to_vec());
        assert_eq!(negated.len(), 3);
        assert_eq!(ks.partition_function().unwrap().rounded(), 32);
        assert_eq!(kasteleyn_twists(&g), vec![-one()]);
    }

    #[test]
    fn odd_k_cylinders_need_trivial_twist() {
        let g = build_cylinder(3, 1.0, CylinderStyle::DD).unwrap();
        assert_eq!(kasteleyn_twists(&g), vec![one()]);
        let ks = KasteleynSystem::new(&g).unwrap();
        assert_eq!(ks.partition_function().unwrap().rounded(), 108);
    }

    #[test]
    fn inverse_is_inverse() {
        let g = build_rectangle(6, 4).unwrap();
        let ks = KasteleynSystem::new(&g).unwrap();
        let n = ks.whites().len();
        let inv = DenseMatrix::from_fn(n, n, |i, j| ks.inverse_entry(ks.blacks()[i], ks.whites()[j]).unwrap());
        let prod = ks.matrix().mul(&inv).unwrap();
        for i in 0..n {
            for j in 0..n {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - e).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn non_unit_override_is_rejected() {
        let g = build_rectangle(2, 2).unwrap();
        let mut opts = WeightOptions::canonical(&g);
        opts.overrides.push((0, Complex64::new(2.0, 0.0)));
        assert!(matches!(
            KasteleynSystem::with_options(&g, &opts),
            Err(KasteleynError::NonUnitWeight { edge: 0, .. })
        ));
    }
}
