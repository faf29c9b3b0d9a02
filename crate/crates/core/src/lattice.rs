//! Bipartite square-lattice domains: rectangles, rectangles with holes and
//! cylinders, together with their dual faces, boundary components and
//! monodromy cuts.
//!
//! Vertices live on `Z^2` (or `Z/2k × Z` for cylinders) and are black iff
//! `x + y` is even. Faces are unit squares identified by their lower-left
//! corner; squares that are not bounded by four present edges are merged into
//! boundary faces `B_0, B_1, ...`.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph has {black} black and {white} white vertices; no perfect matching exists")]
    Unmatchable { black: usize, white: usize },
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("cylinder height range is empty: 2*floor(k*tau/2) = {0}")]
    DegenerateHeight(i64),
    #[error("invalid hole {index}: {reason}")]
    InvalidHole { index: usize, reason: String },
    #[error("vertex ({x},{y}) is not in the graph")]
    MissingVertex { x: i32, y: i32 },
    #[error("face {0:?} does not exist")]
    MissingFace(FaceId),
    #[error("faces {from:?} and {to:?} are not connected in the dual graph")]
    Disconnected { from: FaceId, to: FaceId },
    #[error("dual path revisits face {0:?}")]
    NotSimple(FaceId),
    #[error("edge {edge} does not border face {face:?}")]
    NotIncident { edge: EdgeId, face: FaceId },
    #[error("top and bottom boundaries of the cylinder are connected")]
    BoundariesMerged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Black,
    White,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId {
    pub x: i32,
    pub y: i32,
}

impl VertexId {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn color(self) -> Color {
        if (self.x + self.y).rem_euclid(2) == 0 {
            Color::Black
        } else {
            Color::White
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    PlanarRectangle,
    PlanarMultiholed,
    Cylinder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CylinderStyle {
    DD,
    ND,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

pub type EdgeId = usize;

/// A lattice edge, stored with `head = tail + (1,0)` or `tail + (0,1)`
/// (modulo the period on cylinders).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub tail: VertexId,
    pub head: VertexId,
    pub orientation: Orientation,
}

impl Edge {
    pub fn black(&self) -> VertexId {
        if self.tail.color() == Color::Black {
            self.tail
        } else {
            self.head
        }
    }

    pub fn white(&self) -> VertexId {
        if self.tail.color() == Color::White {
            self.tail
        } else {
            self.head
        }
    }

    pub fn touches(&self, other: &Edge) -> bool {
        self.tail == other.tail
            || self.tail == other.head
            || self.head == other.tail
            || self.head == other.head
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaceId {
    /// Unit square with lower-left corner `(x, y)` and all four sides present.
    Plaquette { x: i32, y: i32 },
    /// Boundary face: 0 is the outer face (bottom on cylinders), 1 the top
    /// of a cylinder, then holes ordered by their lowest square.
    Boundary(usize),
}

#[derive(Debug, Clone)]
pub struct Face {
    pub id: FaceId,
    /// Lower-left corners of the unit squares making up the face.
    pub squares: Vec<(i32, i32)>,
}

/// A crossing of a primal edge by the dual graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DualEdge {
    pub from_face: FaceId,
    pub to_face: FaceId,
    pub crossed_edge: EdgeId,
    /// `+1` when the white endpoint of the crossed edge lies on the left of
    /// the direction of travel.
    pub sign: i8,
}

impl DualEdge {
    pub fn reversed(self) -> Self {
        Self {
            from_face: self.to_face,
            to_face: self.from_face,
            crossed_edge: self.crossed_edge,
            sign: -self.sign,
        }
    }
}

/// Edges crossed by the cut attached to one boundary face. Hole cuts are
/// vertical rays from the hole's lowest square, down to the outer face on
/// planar domains and up to `B_1` on cylinders; the cylinder seam is the cut
/// of `B_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub face: usize,
    pub edges: Vec<EdgeId>,
}

/// Rectangle of removed vertices `[x0, x0+w) × [y0, y0+h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hole {
    pub x0: i32,
    pub y0: i32,
    pub w: i32,
    pub h: i32,
}

impl Hole {
    pub fn new(x0: i32, y0: i32, w: i32, h: i32) -> Self {
        Self { x0, y0, w, h }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderParams {
    pub k: i32,
    pub tau: f64,
    pub style: CylinderStyle,
}

#[derive(Debug, Clone)]
pub struct DimerGraph {
    topology: Topology,
    cylinder: Option<CylinderParams>,
    /// Columns of the ambient box (the period `2k` on cylinders).
    cols: i32,
    ymin: i32,
    ymax: i32,
    cut_column: i32,
    holes: Vec<Hole>,
    removed: BTreeSet<VertexId>,
    vertices: Vec<VertexId>,
    vertex_index: HashMap<VertexId, usize>,
    edges: Vec<Edge>,
    edge_index: HashMap<(VertexId, VertexId), EdgeId>,
    adjacency: Vec<Vec<(usize, EdgeId)>>,
    faces: Vec<Face>,
    face_index: HashMap<FaceId, usize>,
    square_face: HashMap<(i32, i32), usize>,
    /// Faces below/above a horizontal edge, left/right of a vertical one.
    edge_faces: Vec<[usize; 2]>,
    dual_adjacency: Vec<Vec<(EdgeId, usize)>>,
    boundary_components: Vec<Vec<VertexId>>,
    cuts: Vec<Cut>,
}

/// Planar grid graph on `{0..cols-1} × {0..rows-1}`.
pub fn build_rectangle(cols: i32, rows: i32) -> Result<DimerGraph, GraphError> {
    if cols < 1 || rows < 1 {
        return Err(GraphError::InvalidDimensions(format!("{cols}x{rows}")));
    }
    if (cols * rows) % 2 != 0 {
        let n = (cols * rows) as usize;
        return Err(GraphError::Unmatchable {
            black: n / 2 + 1,
            white: n / 2,
        });
    }
    DimerGraph::assemble(Topology::PlanarRectangle, None, cols, 0, rows - 1, 0, vec![], BTreeSet::new())
}

/// Cylinder `C_k` of modulus `tau`: `x ∈ Z/2k`, rows `0..=2⌊kτ/2⌋` (DD) or
/// `1..=2⌊kτ/2⌋` (ND).
pub fn build_cylinder(k: i32, tau: f64, style: CylinderStyle) -> Result<DimerGraph, GraphError> {
    if k < 2 {
        return Err(GraphError::InvalidDimensions(format!("k = {k} < 2")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(GraphError::InvalidDimensions(format!("tau = {tau}")));
    }
    let top = 2 * ((k as f64 * tau / 2.0).floor() as i64);
    if top < 2 {
        return Err(GraphError::DegenerateHeight(top));
    }
    let ymin = match style {
        CylinderStyle::DD => 0,
        CylinderStyle::ND => 1,
    };
    DimerGraph::assemble(
        Topology::Cylinder,
        Some(CylinderParams { k, tau, style }),
        2 * k,
        ymin,
        top as i32,
        0,
        vec![],
        BTreeSet::new(),
    )
}

/// [`build_cylinder`] with rectangular holes removed. Holes must avoid the
/// seam column and both boundary rows.
pub fn build_holed_cylinder(k: i32, tau: f64, style: CylinderStyle, holes: &[Hole]) -> Result<DimerGraph, GraphError> {
    let plain = build_cylinder(k, tau, style)?;
    if holes.is_empty() {
        return Ok(plain);
    }
    validate_holes(holes, 0, plain.cols - 1, plain.ymin, plain.ymax)?;
    DimerGraph::assemble(
        Topology::Cylinder,
        plain.cylinder,
        plain.cols,
        plain.ymin,
        plain.ymax,
        0,
        holes.to_vec(),
        hole_vertices(holes),
    )
}

/// Rectangle with rectangular holes removed. Holes must be strictly interior
/// and separated from each other by at least one vertex.
pub fn build_multiholed(cols: i32, rows: i32, holes: &[Hole]) -> Result<DimerGraph, GraphError> {
    if cols < 1 || rows < 1 {
        return Err(GraphError::InvalidDimensions(format!("{cols}x{rows}")));
    }
    validate_holes(holes, 0, cols - 1, 0, rows - 1)?;
    let removed = hole_vertices(holes);
    DimerGraph::assemble(Topology::PlanarMultiholed, None, cols, 0, rows - 1, 0, holes.to_vec(), removed)
}

/// Remove `victims` and their incident edges. The result must be balanced.
pub fn puncture(g: &DimerGraph, victims: &[VertexId]) -> Result<DimerGraph, GraphError> {
    let mut removed = g.removed.clone();
    for &v in victims {
        if !g.vertex_index.contains_key(&v) {
            return Err(GraphError::MissingVertex { x: v.x, y: v.y });
        }
        removed.insert(v);
    }
    let out = DimerGraph::assemble(
        g.topology,
        g.cylinder,
        g.cols,
        g.ymin,
        g.ymax,
        g.cut_column,
        g.holes.clone(),
        removed,
    )?;
    out.check_balanced()?;
    Ok(out)
}

fn validate_holes(holes: &[Hole], xmin: i32, xmax: i32, ymin: i32, ymax: i32) -> Result<(), GraphError> {
    for (i, h) in holes.iter().enumerate() {
        let bad = |reason: &str| GraphError::InvalidHole {
            index: i,
            reason: reason.to_string(),
        };
        if h.w < 1 || h.h < 1 {
            return Err(bad("empty hole"));
        }
        if h.x0 <= xmin || h.y0 <= ymin || h.x0 + h.w > xmax || h.y0 + h.h > ymax {
            return Err(bad("hole touches the outer boundary"));
        }
        for (j, o) in holes.iter().enumerate().take(i) {
            let near_x = h.x0 - 1 < o.x0 + o.w && o.x0 <= h.x0 + h.w;
            let near_y = h.y0 - 1 < o.y0 + o.h && o.y0 <= h.y0 + h.h;
            if near_x && near_y {
                return Err(bad(&format!("overlaps or touches hole {j}")));
            }
        }
    }
    Ok(())
}

fn hole_vertices(holes: &[Hole]) -> BTreeSet<VertexId> {
    let mut out = BTreeSet::new();
    for h in holes {
        for x in h.x0..h.x0 + h.w {
            for y in h.y0..h.y0 + h.h {
                out.insert(VertexId::new(x, y));
            }
        }
    }
    out
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

impl DimerGraph {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        topology: Topology,
        cylinder: Option<CylinderParams>,
        cols: i32,
        ymin: i32,
        ymax: i32,
        cut_column: i32,
        holes: Vec<Hole>,
        removed: BTreeSet<VertexId>,
    ) -> Result<Self, GraphError> {
        let periodic = cylinder.is_some();
        let mut vertices = Vec::new();
        for y in ymin..=ymax {
            for x in 0..cols {
                let v = VertexId::new(x, y);
                if !removed.contains(&v) {
                    vertices.push(v);
                }
            }
        }
        let vertex_index: HashMap<VertexId, usize> =
            vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();

        let mut g = Self {
            topology,
            cylinder,
            cols,
            ymin,
            ymax,
            cut_column: cut_column.rem_euclid(cols.max(1)),
            holes,
            removed,
            vertices,
            vertex_index,
            edges: Vec::new(),
            edge_index: HashMap::new(),
            adjacency: Vec::new(),
            faces: Vec::new(),
            face_index: HashMap::new(),
            square_face: HashMap::new(),
            edge_faces: Vec::new(),
            dual_adjacency: Vec::new(),
            boundary_components: Vec::new(),
            cuts: Vec::new(),
        };

        g.adjacency = vec![Vec::new(); g.vertices.len()];
        for i in 0..g.vertices.len() {
            let v = g.vertices[i];
            let right = VertexId::new(if periodic { (v.x + 1) % cols } else { v.x + 1 }, v.y);
            let up = VertexId::new(v.x, v.y + 1);
            for (head, orientation) in [(right, Orientation::Horizontal), (up, Orientation::Vertical)] {
                if let Some(&j) = g.vertex_index.get(&head) {
                    if head == v {
                        continue;
                    }
                    let id = g.edges.len();
                    g.edges.push(Edge {
                        tail: v,
                        head,
                        orientation,
                    });
                    g.edge_index.insert((v, head), id);
                    g.edge_index.insert((head, v), id);
                    g.adjacency[i].push((j, id));
                    g.adjacency[j].push((i, id));
                }
            }
        }

        g.build_faces()?;
        g.build_cuts();
        Ok(g)
    }

    fn wrap_x(&self, x: i32) -> i32 {
        if self.is_cylinder() {
            x.rem_euclid(self.cols)
        } else {
            x
        }
    }

    fn square_range(&self) -> (std::ops::Range<i32>, std::ops::RangeInclusive<i32>) {
        let xs = if self.is_cylinder() { 0..self.cols } else { -1..self.cols };
        (xs, self.ymin - 1..=self.ymax)
    }

    fn has_edge_between(&self, a: VertexId, b: VertexId) -> bool {
        let a = VertexId::new(self.wrap_x(a.x), a.y);
        let b = VertexId::new(self.wrap_x(b.x), b.y);
        self.edge_index.contains_key(&(a, b))
    }

    fn build_faces(&mut self) -> Result<(), GraphError> {
        let (xs, ys) = self.square_range();
        let squares: Vec<(i32, i32)> = ys
            .clone()
            .flat_map(|y| xs.clone().map(move |x| (x, y)))
            .collect();
        let sq_index: HashMap<(i32, i32), usize> =
            squares.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut uf = UnionFind::new(squares.len());
        let v = VertexId::new;
        for (i, &(sx, sy)) in squares.iter().enumerate() {
            let right = (self.wrap_x(sx + 1), sy);
            if let Some(&j) = sq_index.get(&right) {
                if !self.has_edge_between(v(sx + 1, sy), v(sx + 1, sy + 1)) {
                    uf.union(i, j);
                }
            }
            if let Some(&j) = sq_index.get(&(sx, sy + 1)) {
                if !self.has_edge_between(v(sx, sy + 1), v(sx + 1, sy + 1)) {
                    uf.union(i, j);
                }
            }
        }

        let mut components: HashMap<usize, Vec<(i32, i32)>> = HashMap::new();
        for (i, &s) in squares.iter().enumerate() {
            components.entry(uf.find(i)).or_default().push(s);
        }

        let anchor_roots: Vec<usize> = if self.is_cylinder() {
            let bottom = uf.find(sq_index[&(0, self.ymin - 1)]);
            let top = uf.find(sq_index[&(0, self.ymax)]);
            if bottom == top {
                return Err(GraphError::BoundariesMerged);
            }
            vec![bottom, top]
        } else {
            vec![uf.find(sq_index[&(-1, self.ymin - 1)])]
        };

        let mut boundary: Vec<Vec<(i32, i32)>> = Vec::new();
        let mut plaquettes: Vec<(i32, i32)> = Vec::new();
        let mut others: Vec<Vec<(i32, i32)>> = Vec::new();
        for &r in &anchor_roots {
            boundary.push(components.remove(&r).unwrap_or_default());
        }
        for (_, sqs) in components {
            if sqs.len() == 1 {
                plaquettes.push(sqs[0]);
            } else {
                others.push(sqs);
            }
        }
        let key = |s: &(i32, i32)| (s.1, s.0);
        for sqs in boundary.iter_mut().chain(others.iter_mut()) {
            sqs.sort_by_key(key);
        }
        others.sort_by_key(|sqs| key(&sqs[0]));
        boundary.extend(others);
        plaquettes.sort_by_key(key);

        self.faces.clear();
        for (i, sqs) in boundary.into_iter().enumerate() {
            self.faces.push(Face {
                id: FaceId::Boundary(i),
                squares: sqs,
            });
        }
        for (x, y) in plaquettes {
            self.faces.push(Face {
                id: FaceId::Plaquette { x, y },
                squares: vec![(x, y)],
            });
        }
        for (i, f) in self.faces.iter().enumerate() {
            self.face_index.insert(f.id, i);
            for &s in &f.squares {
                self.square_face.insert(s, i);
            }
        }

        self.edge_faces = self
            .edges
            .iter()
            .map(|e| {
                let (x, y) = (e.tail.x, e.tail.y);
                let (minus, plus) = match e.orientation {
                    Orientation::Horizontal => ((x, y - 1), (x, y)),
                    Orientation::Vertical => ((self.wrap_x(x - 1), y), (x, y)),
                };
                [self.square_face[&minus], self.square_face[&plus]]
            })
            .collect();
        self.dual_adjacency = vec![Vec::new(); self.faces.len()];
        for (e, &[a, b]) in self.edge_faces.iter().enumerate() {
            if a != b {
                self.dual_adjacency[a].push((e, b));
                self.dual_adjacency[b].push((e, a));
            }
        }

        self.boundary_components = (0..self.boundary_count())
            .map(|i| self.boundary_cycle(i))
            .collect();
        Ok(())
    }

    fn boundary_cycle(&self, face: usize) -> Vec<VertexId> {
        let squares = &self.faces[face].squares;
        let mut verts = BTreeSet::new();
        for &(sx, sy) in squares {
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let v = VertexId::new(self.wrap_x(sx + dx), sy + dy);
                if self.vertex_index.contains_key(&v) {
                    verts.insert(v);
                }
            }
        }
        let mut verts: Vec<VertexId> = verts.into_iter().collect();
        if self.is_cylinder() && face < 2 {
            verts.sort_by_key(|v| (v.x, v.y));
            return verts;
        }
        let (rx, _) = squares[0];
        let unwrap = |x: i32| -> f64 {
            if self.is_cylinder() {
                let half = self.cols / 2;
                ((x - rx + half).rem_euclid(self.cols) - half + rx) as f64
            } else {
                x as f64
            }
        };
        let n = squares.len() as f64;
        let cx = squares.iter().map(|s| unwrap(s.0) + 0.5).sum::<f64>() / n;
        let cy = squares.iter().map(|s| s.1 as f64 + 0.5).sum::<f64>() / n;
        let angle = |v: &VertexId| (v.y as f64 - cy).atan2(unwrap(v.x) - cx);
        verts.sort_by(|a, b| angle(a).total_cmp(&angle(b)));
        verts
    }

    fn build_cuts(&mut self) {
        let mut cuts = Vec::new();
        let first_hole = if self.is_cylinder() {
            let seam = self.wrap_x(self.cut_column - 1);
            let edges = (self.ymin..=self.ymax)
                .filter_map(|y| {
                    self.edge_id(VertexId::new(seam, y), VertexId::new(self.cut_column, y))
                })
                .collect();
            cuts.push(Cut { face: 0, edges });
            2
        } else {
            1
        };
        for face in first_hole..self.boundary_count() {
            let (sx, sy) = self.faces[face].squares[0];
            let ys: Vec<i32> = if self.is_cylinder() {
                (sy + 1..=self.ymax).collect()
            } else {
                (self.ymin..=sy).rev().collect()
            };
            let edges = ys
                .into_iter()
                .filter_map(|y| {
                    self.edge_id(VertexId::new(sx, y), VertexId::new(self.wrap_x(sx + 1), y))
                })
                .collect();
            cuts.push(Cut { face, edges });
        }
        self.cuts = cuts;
    }

    /// Same graph with the cylinder seam moved to the column boundary
    /// `column - 1 → column`.
    pub fn with_cut_column(&self, column: i32) -> Result<Self, GraphError> {
        if !self.is_cylinder() {
            return Err(GraphError::InvalidDimensions(
                "cut relocation applies to cylinders".into(),
            ));
        }
        let mut g = self.clone();
        g.cut_column = column.rem_euclid(self.cols);
        g.build_cuts();
        Ok(g)
    }

    pub fn check_balanced(&self) -> Result<(), GraphError> {
        let black = self.black_vertices().count();
        let white = self.vertices.len() - black;
        if black != white {
            return Err(GraphError::Unmatchable { black, white });
        }
        Ok(())
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn is_cylinder(&self) -> bool {
        self.topology == Topology::Cylinder
    }

    pub fn cylinder_params(&self) -> Option<CylinderParams> {
        self.cylinder
    }

    /// `2k` on cylinders; `None` for planar graphs.
    pub fn width_period(&self) -> Option<i32> {
        self.cylinder.map(|_| self.cols)
    }

    pub fn cols(&self) -> i32 {
        self.cols
    }

    pub fn rows(&self) -> i32 {
        self.ymax - self.ymin + 1
    }

    pub fn ymin(&self) -> i32 {
        self.ymin
    }

    pub fn ymax(&self) -> i32 {
        self.ymax
    }

    pub fn cut_column(&self) -> i32 {
        self.cut_column
    }

    pub fn holes(&self) -> &[Hole] {
        &self.holes
    }

    pub fn removed(&self) -> &BTreeSet<VertexId> {
        &self.removed
    }

    /// Vertices in row-major order `(y, x)`.
    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    pub fn vertex_index(&self, v: VertexId) -> Option<usize> {
        self.vertex_index.get(&v).copied()
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.vertex_index.contains_key(&v)
    }

    pub fn black_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices.iter().copied().filter(|v| v.color() == Color::Black)
    }

    pub fn white_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices.iter().copied().filter(|v| v.color() == Color::White)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e]
    }

    pub fn edge_id(&self, a: VertexId, b: VertexId) -> Option<EdgeId> {
        self.edge_index.get(&(a, b)).copied()
    }

    /// `(neighbour vertex index, edge)` pairs of vertex index `i`.
    pub fn neighbors(&self, i: usize) -> &[(usize, EdgeId)] {
        &self.adjacency[i]
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn face(&self, id: FaceId) -> Result<&Face, GraphError> {
        self.face_index
            .get(&id)
            .map(|&i| &self.faces[i])
            .ok_or(GraphError::MissingFace(id))
    }

    /// Face containing the unit square with lower-left corner `(x, y)`.
    pub fn face_at(&self, x: i32, y: i32) -> Option<FaceId> {
        self.square_face
            .get(&(self.wrap_x(x), y))
            .map(|&i| self.faces[i].id)
    }

    pub fn boundary_count(&self) -> usize {
        self.faces
            .iter()
            .take_while(|f| matches!(f.id, FaceId::Boundary(_)))
            .count()
    }

    pub fn boundary_components(&self) -> &[Vec<VertexId>] {
        &self.boundary_components
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    /// Seam edges of a cylinder (empty for planar graphs).
    pub fn cut(&self) -> &[EdgeId] {
        if self.is_cylinder() {
            &self.cuts[0].edges
        } else {
            &[]
        }
    }

    /// Faces on either side of `e`: below/above for horizontal edges,
    /// left/right for vertical ones.
    pub fn edge_faces(&self, e: EdgeId) -> [FaceId; 2] {
        let [a, b] = self.edge_faces[e];
        [self.faces[a].id, self.faces[b].id]
    }

    /// The dual edge crossing `e` starting in face `from`.
    pub fn dual_edge(&self, e: EdgeId, from: FaceId) -> Result<DualEdge, GraphError> {
        let [minus, plus] = self.edge_faces(e);
        let edge = &self.edges[e];
        let forward_sign = match edge.orientation {
            Orientation::Horizontal => edge.tail.color() == Color::White,
            Orientation::Vertical => edge.head.color() == Color::White,
        };
        let forward_sign: i8 = if forward_sign { 1 } else { -1 };
        let forward = DualEdge {
            from_face: minus,
            to_face: plus,
            crossed_edge: e,
            sign: forward_sign,
        };
        if from == minus {
            Ok(forward)
        } else if from == plus {
            Ok(forward.reversed())
        } else {
            Err(GraphError::NotIncident { edge: e, face: from })
        }
    }

    /// Dual path from `from` crossing `edges` in order.
    pub fn path_across(&self, from: FaceId, edges: &[EdgeId]) -> Result<Vec<DualEdge>, GraphError> {
        let mut cur = from;
        let mut out = Vec::with_capacity(edges.len());
        for &e in edges {
            let d = self.dual_edge(e, cur)?;
            cur = d.to_face;
            out.push(d);
        }
        Ok(out)
    }

    /// Shortest dual path from `from` to `to` through `waypoints` in order.
    pub fn dual_path(
        &self,
        from: FaceId,
        to: FaceId,
        waypoints: &[FaceId],
    ) -> Result<Vec<DualEdge>, GraphError> {
        let mut stops = vec![from];
        stops.extend_from_slice(waypoints);
        stops.push(to);
        let mut path = Vec::new();
        for pair in stops.windows(2) {
            path.extend(self.bfs_path(pair[0], pair[1])?);
        }
        let mut seen = BTreeSet::new();
        seen.insert(from);
        for d in &path {
            if !seen.insert(d.to_face) {
                return Err(GraphError::NotSimple(d.to_face));
            }
        }
        Ok(path)
    }

    fn bfs_path(&self, from: FaceId, to: FaceId) -> Result<Vec<DualEdge>, GraphError> {
        let s = *self.face_index.get(&from).ok_or(GraphError::MissingFace(from))?;
        let t = *self.face_index.get(&to).ok_or(GraphError::MissingFace(to))?;
        let mut prev: Vec<Option<(usize, EdgeId)>> = vec![None; self.faces.len()];
        let mut visited = vec![false; self.faces.len()];
        visited[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(f) = queue.pop_front() {
            if f == t {
                break;
            }
            for &(e, nb) in &self.dual_adjacency[f] {
                if !visited[nb] {
                    visited[nb] = true;
                    prev[nb] = Some((f, e));
                    queue.push_back(nb);
                }
            }
        }
        if !visited[t] {
            return Err(GraphError::Disconnected { from, to });
        }
        let mut rev = Vec::new();
        let mut cur = t;
        while cur != s {
            let (p, e) = prev[cur].expect("bfs predecessor");
            rev.push(self.dual_edge(e, self.faces[p].id)?);
            cur = p;
        }
        rev.reverse();
        Ok(rev)
    }

    /// `(edge, neighbouring face)` pairs of a face, excluding edges with the
    /// same face on both sides.
    pub fn dual_neighbors(&self, f: FaceId) -> Result<Vec<(EdgeId, FaceId)>, GraphError> {
        let i = *self.face_index.get(&f).ok_or(GraphError::MissingFace(f))?;
        Ok(self.dual_adjacency[i]
            .iter()
            .map(|&(e, nb)| (e, self.faces[nb].id))
            .collect())
    }

    /// Removed lattice points of the ambient box whose four surrounding
    /// squares all belong to boundary face `face`.
    pub fn enclosed_missing(&self, face: usize) -> usize {
        self.removed
            .iter()
            .filter(|v| {
                [(0, 0), (-1, 0), (0, -1), (-1, -1)].iter().all(|(dx, dy)| {
                    self.square_face.get(&(self.wrap_x(v.x + dx), v.y + dy)) == Some(&face)
                })
            })
            .count()
    }

    /// Euler characteristic `V − E + F` with every face counted once.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }
}
