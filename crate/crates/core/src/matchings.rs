//! Perfect matchings: exhaustive enumeration, exact counting by a row-major
//! transfer recursion, uniform sampling, and exact centered edge moments.

use crate::lattice::{DimerGraph, DualEdge, EdgeId, VertexId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchingError {
    #[error("matching limit {limit} exceeded after {count} matchings")]
    LimitExceeded { limit: u64, count: u64 },
    #[error("crossed edges {0} and {1} share a vertex")]
    NotDisjoint(EdgeId, EdgeId),
    #[error("graph bandwidth {0} is too large for the transfer recursion")]
    Bandwidth(usize),
    #[error("graph has no perfect matching")]
    NoMatching,
    #[error("matching list is empty")]
    Empty,
}

/// One perfect matching, as a sorted list of edge ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Matching {
    pub edges: Vec<EdgeId>,
}

impl Matching {
    pub fn new(mut edges: Vec<EdgeId>) -> Self {
        edges.sort_unstable();
        Self { edges }
    }

    pub fn contains(&self, e: EdgeId) -> bool {
        self.edges.binary_search(&e).is_ok()
    }

    /// Every vertex covered exactly once.
    pub fn is_perfect(&self, g: &DimerGraph) -> bool {
        let mut seen = vec![false; g.vertices().len()];
        for &e in &self.edges {
            for v in [g.edge(e).tail, g.edge(e).head] {
                let Some(i) = g.vertex_index(v) else {
                    return false;
                };
                if std::mem::replace(&mut seen[i], true) {
                    return false;
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

struct Search<'a, F> {
    g: &'a DimerGraph,
    covered: Vec<bool>,
    free_degree: Vec<usize>,
    chosen: Vec<EdgeId>,
    count: u64,
    limit: u64,
    visit: F,
}

impl<F: FnMut(&[EdgeId])> Search<'_, F> {
    fn cover(&mut self, v: usize, delta: isize) {
        self.covered[v] = delta < 0;
        for &(u, _) in self.g.neighbors(v) {
            self.free_degree[u] = (self.free_degree[u] as isize + delta) as usize;
        }
    }

    fn run(&mut self) -> Result<(), MatchingError> {
        let mut best: Option<usize> = None;
        for v in 0..self.covered.len() {
            if !self.covered[v] && best.is_none_or(|b| self.free_degree[v] < self.free_degree[b]) {
                best = Some(v);
                if self.free_degree[v] == 0 {
                    break;
                }
            }
        }
        let Some(v) = best else {
            self.count += 1;
            if self.count > self.limit {
                return Err(MatchingError::LimitExceeded {
                    limit: self.limit,
                    count: self.count - 1,
                });
            }
            let mut sorted = self.chosen.clone();
            sorted.sort_unstable();
            (self.visit)(&sorted);
            return Ok(());
        };
        if self.free_degree[v] == 0 {
            return Ok(());
        }
        let g = self.g;
        for &(u, e) in g.neighbors(v) {
            if self.covered[u] {
                continue;
            }
            self.cover(v, -1);
            self.cover(u, -1);
            self.chosen.push(e);
            let r = self.run();
            self.chosen.pop();
            self.cover(u, 1);
            self.cover(v, 1);
            r?;
        }
        Ok(())
    }
}

/// Call `visit` on every perfect matching, branching on the uncovered vertex
/// with the fewest free neighbours. Returns the number of matchings.
pub fn for_each_matching(
    g: &DimerGraph,
    limit: u64,
    visit: impl FnMut(&[EdgeId]),
) -> Result<u64, MatchingError> {
    let n = g.vertices().len();
    let mut s = Search {
        g,
        covered: vec![false; n],
        free_degree: (0..n).map(|i| g.neighbors(i).len()).collect(),
        chosen: Vec::with_capacity(n / 2),
        count: 0,
        limit,
        visit,
    };
    if n % 2 == 1 {
        return Ok(0);
    }
    s.run()?;
    Ok(s.count)
}

/// All perfect matchings in deterministic order.
pub fn enumerate(g: &DimerGraph, limit: u64) -> Result<Vec<Matching>, MatchingError> {
    let mut out = Vec::new();
    for_each_matching(g, limit, |edges| out.push(Matching { edges: edges.to_vec() }))?;
    Ok(out)
}

/// `n` independent uniform draws (by index into the enumerated list).
pub fn sample_uniform(
    g: &DimerGraph,
    seed: u64,
    n: usize,
    limit: u64,
) -> Result<Vec<Matching>, MatchingError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let all = enumerate(g, limit)?;
    if all.is_empty() {
        return Err(MatchingError::NoMatching);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| all[rng.gen_range(0..all.len())].clone()).collect())
}

/// Fraction of matchings containing each edge.
pub fn edge_frequencies(g: &DimerGraph, matchings: &[Matching]) -> Vec<f64> {
    let mut counts = vec![0u64; g.edges().len()];
    for m in matchings {
        for &e in &m.edges {
            counts[e] += 1;
        }
    }
    let z = matchings.len().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / z).collect()
}

fn check_disjoint(g: &DimerGraph, duals: &[DualEdge]) -> Result<(), MatchingError> {
    for (i, a) in duals.iter().enumerate() {
        for b in &duals[..i] {
            if g.edge(a.crossed_edge).touches(g.edge(b.crossed_edge)) {
                return Err(MatchingError::NotDisjoint(b.crossed_edge, a.crossed_edge));
            }
        }
    }
    Ok(())
}

/// `(1/Z) Σ_M ∏_j s_j (1[e_j ∈ M] − p_j)` over the given matchings, with
/// `p_j` the frequency of `e_j` in the list.
pub fn empirical_moment(
    g: &DimerGraph,
    duals: &[DualEdge],
    matchings: &[Matching],
) -> Result<f64, MatchingError> {
    check_disjoint(g, duals)?;
    if matchings.is_empty() {
        return Err(MatchingError::Empty);
    }
    let z = matchings.len() as f64;
    let p: Vec<f64> = duals
        .iter()
        .map(|d| matchings.iter().filter(|m| m.contains(d.crossed_edge)).count() as f64 / z)
        .collect();
    let sign: f64 = duals.iter().map(|d| d.sign as f64).product();
    let total: f64 = matchings
        .iter()
        .map(|m| {
            duals
                .iter()
                .zip(&p)
                .map(|(d, &pj)| (m.contains(d.crossed_edge) as u8 as f64) - pj)
                .product::<f64>()
        })
        .sum();
    Ok(sign * total / z)
}

/// Number of perfect matchings of `g` with the vertices in `excluded`
/// deleted, by a row-major transfer recursion over the frontier of covered
/// vertices.
pub fn count_matchings_excluding(g: &DimerGraph, excluded: &[VertexId]) -> Result<u128, MatchingError> {
    let n = g.vertices().len();
    let mut skip = vec![false; n];
    for v in excluded {
        if let Some(i) = g.vertex_index(*v) {
            skip[i] = true;
        }
    }
    let mut forward: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut bandwidth = 0;
    for i in 0..n {
        for &(j, _) in g.neighbors(i) {
            if j > i && !skip[j] {
                forward[i].push(j - i);
                bandwidth = bandwidth.max(j - i);
            }
        }
    }
    if bandwidth >= 127 {
        return Err(MatchingError::Bandwidth(bandwidth));
    }
    let mut states: HashMap<u128, u128> = HashMap::from([(0, 1)]);
    for i in 0..n {
        let mut next: HashMap<u128, u128> = HashMap::with_capacity(states.len() * 2);
        for (&mask, &c) in &states {
            if mask & 1 == 1 || skip[i] {
                if mask & 1 == 1 && skip[i] {
                    continue;
                }
                *next.entry(mask >> 1).or_default() += c;
                continue;
            }
            for &d in &forward[i] {
                if mask >> d & 1 == 0 {
                    *next.entry((mask | 1 << d) >> 1).or_default() += c;
                }
            }
        }
        states = next;
    }
    Ok(states.get(&0).copied().unwrap_or(0))
}

pub fn count_matchings(g: &DimerGraph) -> Result<u128, MatchingError> {
    count_matchings_excluding(g, &[])
}

/// Probability that all the given edges are in a uniform matching. Edges
/// sharing a vertex give zero.
pub fn joint_probability(g: &DimerGraph, edges: &[EdgeId], z: u128) -> Result<f64, MatchingError> {
    let mut verts = BTreeSet::new();
    for &e in edges {
        for v in [g.edge(e).tail, g.edge(e).head] {
            if !verts.insert(v) {
                return Ok(0.0);
            }
        }
    }
    let verts: Vec<VertexId> = verts.into_iter().collect();
    Ok(count_matchings_excluding(g, &verts)? as f64 / z as f64)
}

/// `E ∏_j s_j (1[e_j ∈ M] − p_j)` computed exactly from matching counts by
/// inclusion–exclusion over subsets of the crossed edges.
pub fn exact_moment(g: &DimerGraph, duals: &[DualEdge]) -> Result<f64, MatchingError> {
    check_disjoint(g, duals)?;
    let z = count_matchings(g)?;
    if z == 0 {
        return Err(MatchingError::NoMatching);
    }
    let edges: Vec<EdgeId> = duals.iter().map(|d| d.crossed_edge).collect();
    let p: Vec<f64> = edges
        .iter()
        .map(|&e| joint_probability(g, &[e], z))
        .collect::<Result<_, _>>()?;
    let m = edges.len();
    let mut total = 0.0;
    for subset in 0u32..(1 << m) {
        let chosen: Vec<EdgeId> = (0..m).filter(|j| subset >> j & 1 == 1).map(|j| edges[j]).collect();
        let rest: f64 = (0..m).filter(|j| subset >> j & 1 == 0).map(|j| -p[j]).product();
        total += joint_probability(g, &chosen, z)? * rest;
    }
    let sign: f64 = duals.iter().map(|d| d.sign as f64).product();
    Ok(sign * total)
}

/// Some perfect matching (augmenting paths from each black vertex in order).
pub fn find_perfect_matching(g: &DimerGraph) -> Option<Matching> {
    let n = g.vertices().len();
    let mut mate: Vec<Option<(usize, EdgeId)>> = vec![None; n];
    fn augment(
        g: &DimerGraph,
        v: usize,
        seen: &mut [bool],
        mate: &mut [Option<(usize, EdgeId)>],
    ) -> bool {
        for &(u, e) in g.neighbors(v) {
            if seen[u] {
                continue;
            }
            seen[u] = true;
            let free = match mate[u] {
                None => true,
                Some((w, _)) => augment(g, w, seen, mate),
            };
            if free {
                mate[u] = Some((v, e));
                mate[v] = Some((u, e));
                return true;
            }
        }
        false
    }
    for (v, vid) in g.vertices().iter().enumerate() {
        if vid.color() != crate::lattice::Color::Black || mate[v].is_some() {
            continue;
        }
        let mut seen = vec![false; n];
        if !augment(g, v, &mut seen, &mut mate) {
            return None;
        }
    }
    let edges: BTreeSet<EdgeId> = mate.iter().flatten().map(|&(_, e)| e).collect();
    let m = Matching::new(edges.into_iter().collect());
    m.is_perfect(g).then_some(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_cylinder, build_rectangle, CylinderStyle, FaceId};

    #[test]
    fn small_counts() {
        assert_eq!(enumerate(&build_rectangle(2, 2).unwrap(), 100).unwrap().len(), 2);
        assert_eq!(enumerate(&build_rectangle(4, 4).unwrap(), 100).unwrap().len(), 36);
        assert_eq!(enumerate(&build_rectangle(6, 6).unwrap(), 10_000).unwrap().len(), 6728);
    }

    #[test]
    fn strip_counts_are_fibonacci() {
        let mut f = vec![1u128, 2];
        for i in 2..10 {
            f.push(f[i - 1] + f[i - 2]);
        }
        for n in 1..=10 {
            let g = build_rectangle(n, 2).unwrap();
            assert_eq!(enumerate(&g, 1000).unwrap().len() as u128, f[n as usize - 1]);
            assert_eq!(count_matchings(&g).unwrap(), f[n as usize - 1]);
        }
    }

    #[test]
    fn cylinder_counts() {
        let cases = [(2, CylinderStyle::DD, 32), (2, CylinderStyle::ND, 9), (3, CylinderStyle::DD, 108), (3, CylinderStyle::ND, 20), (4, CylinderStyle::ND, 5041)];
        for (k, style, n) in cases {
            let g = build_cylinder(k, 1.0, style).unwrap();
            assert_eq!(enumerate(&g, 1_000_000).unwrap().len() as u128, n);
            assert_eq!(count_matchings(&g).unwrap(), n);
        }
    }

    #[test]
    fn limit_is_reported() {
        let g = build_rectangle(4, 4).unwrap();
        assert_eq!(
            enumerate(&g, 10),
            Err(MatchingError::LimitExceeded { limit: 10, count: 10 })
        );
    }

    #[test]
    fn matchings_are_perfect_and_distinct() {
        let g = build_rectangle(4, 3).unwrap();
        let all = enumerate(&g, 1000).unwrap();
        let set: std::collections::HashSet<_> = all.iter().cloned().collect();
        assert_eq!(set.len(), all.len());
        assert!(all.iter().all(|m| m.is_perfect(&g)));
    }

    #[test]
    fn sampling() {
        let g = build_rectangle(2, 2).unwrap();
        assert!(sample_uniform(&g, 1, 0, 10).unwrap().is_empty());
        let a = sample_uniform(&g, 7, 4000, 10).unwrap();
        assert_eq!(a, sample_uniform(&g, 7, 4000, 10).unwrap());
        let first = enumerate(&g, 10).unwrap()[0].clone();
        let hits = a.iter().filter(|m| **m == first).count() as f64;
        let sigma = (4000.0f64 * 0.25).sqrt();
        assert!((hits - 2000.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn moments_exact_vs_enumeration() {
        let g = build_rectangle(4, 4).unwrap();
        let all = enumerate(&g, 100).unwrap();
        let e1 = g.edge_id(VertexId::new(0, 0), VertexId::new(1, 0)).unwrap();
        let e2 = g.edge_id(VertexId::new(2, 2), VertexId::new(2, 3)).unwrap();
        let d1 = g.dual_edge(e1, FaceId::Boundary(0)).unwrap();
        let d2 = g.dual_edge(e2, g.edge_faces(e2)[0]).unwrap();
        assert!(empirical_moment(&g, &[d1], &all).unwrap().abs() < 1e-15);
        let a = empirical_moment(&g, &[d1, d2], &all).unwrap();
        let b = exact_moment(&g, &[d1, d2]).unwrap();
        assert!((a - b).abs() < 1e-14);
        let r = empirical_moment(&g, &[d1, d2.reversed()], &all).unwrap();
        assert!((a + r).abs() < 1e-15);
        let e3 = g.edge_id(VertexId::new(1, 0), VertexId::new(2, 0)).unwrap();
        let d3 = g.dual_edge(e3, FaceId::Boundary(0)).unwrap();
        assert!(matches!(
            empirical_moment(&g, &[d1, d3], &all),
            Err(MatchingError::NotDisjoint(..))
        ));
    }

    #[test]
    fn augmenting_matching_is_perfect() {
        let g = build_cylinder(3, 1.0, CylinderStyle::ND).unwrap();
        assert!(find_perfect_matching(&g).unwrap().is_perfect(&g));
    }
}
