//! Discrete Gaussian laws on shifted lattices `c0 + Z^n` with weights
//! `exp(−uᵀQu)`, their twisted expectations, and the harmonic-measure energy
//! matrices that produce `Q`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Denominators below this modulus make a twisted expectation undefined.
pub const DEGENERATE_TWIST: f64 = 1e-12;
/// Bound on the dropped probability mass outside the truncation box.
pub const TAIL_TOLERANCE: f64 = 1e-14;
const MAX_ATOMS: usize = 20_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DGaussError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("quadratic form is not symmetric")]
    NotSymmetric,
    #[error("quadratic form is not positive definite (min eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("point is not on the lattice c0 + Z^n")]
    NotOnLattice,
    #[error("twisted denominator {0:e} vanishes; the twist is degenerate")]
    DegenerateTwist(f64),
    #[error("monomial degree {0} exceeds 4")]
    DegreeTooHigh(u32),
    #[error("truncation box would hold {0} atoms")]
    TooManyAtoms(usize),
    #[error("linear solve did not converge (relative residual {residual:e} after {iterations} iterations)")]
    NotConverged { residual: f64, iterations: usize },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub u: Vec<f64>,
    pub probability: f64,
}

#[derive(Debug, Clone)]
pub struct DiscreteGaussianLaw {
    c0: Vec<f64>,
    q: DMatrix<f64>,
    truncation: usize,
    log_norm: f64,
    energy_min: f64,
    atoms: Vec<Atom>,
}

fn lattice_offset(c0: &[f64]) -> Vec<f64> {
    c0.iter().map(|&c| c - (c + 0.5).floor()).collect()
}

impl DiscreteGaussianLaw {
    /// Law with the smallest truncation whose tail bound is below
    /// [`TAIL_TOLERANCE`].
    pub fn new(c0: Vec<f64>, q: Vec<Vec<f64>>) -> Result<Self, DGaussError> {
        let qm = Self::validate(&c0, &q)?;
        let eig = SymmetricEigen::new(qm.clone());
        let lmin = eig.eigenvalues.min();
        let lmax = eig.eigenvalues.max();
        let n = c0.len() as f64;
        let mut big_n = 1;
        loop {
            let j = big_n as f64 + 0.5;
            let r = (-2.0 * lmin * j).exp();
            let tail1 = (-lmin * j * j).exp() / (1.0 - r);
            let full1 = 1.0 + 2.0 * (-lmin * 0.25).exp() / (1.0 - (-lmin).exp());
            let bound = n * 2.0 * tail1 * full1.powf(n - 1.0) * (lmax * n / 4.0).exp();
            if bound < TAIL_TOLERANCE || big_n > 100_000 {
                break;
            }
            big_n += 1;
        }
        Self::build(c0, qm, big_n)
    }

    /// Law on the box `c0 + {−N..N}^n` for an explicit `N`.
    pub fn with_truncation(c0: Vec<f64>, q: Vec<Vec<f64>>, truncation: usize) -> Result<Self, DGaussError> {
        let qm = Self::validate(&c0, &q)?;
        Self::build(c0, qm, truncation.max(1))
    }

    /// `Q = (π/2)·E` from a Dirichlet energy matrix `E`.
    pub fn from_energy(c0: Vec<f64>, energies: &[Vec<f64>]) -> Result<Self, DGaussError> {
        let q = energies
            .iter()
            .map(|row| row.iter().map(|e| PI / 2.0 * e).collect())
            .collect();
        Self::new(c0, q)
    }

    fn validate(c0: &[f64], q: &[Vec<f64>]) -> Result<DMatrix<f64>, DGaussError> {
        let n = c0.len();
        if n == 0 || q.len() != n {
            return Err(DGaussError::Dimension {
                expected: n.max(1),
                got: q.len(),
            });
        }
        for row in q {
            if row.len() != n {
                return Err(DGaussError::Dimension {
                    expected: n,
                    got: row.len(),
                });
            }
        }
        let qm = DMatrix::from_fn(n, n, |i, j| q[i][j]);
        let scale = qm.amax().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (qm[(i, j)] - qm[(j, i)]).abs() > 1e-12 * scale {
                    return Err(DGaussError::NotSymmetric);
                }
            }
        }
        let lmin = SymmetricEigen::new(qm.clone()).eigenvalues.min();
        if !(lmin > 0.0) {
            return Err(DGaussError::NotPositiveDefinite(lmin));
        }
        Ok(qm)
    }

    fn build(c0: Vec<f64>, q: DMatrix<f64>, truncation: usize) -> Result<Self, DGaussError> {
        let n = c0.len();
        let side = 2 * truncation + 1;
        let count = side
            .checked_pow(n as u32)
            .filter(|&c| c <= MAX_ATOMS)
            .ok_or(DGaussError::TooManyAtoms(usize::MAX))?;
        let offset = lattice_offset(&c0);
        let mut atoms = Vec::with_capacity(count);
        let mut energies = Vec::with_capacity(count);
        let mut idx = vec![0usize; n];
        for _ in 0..count {
            let u: Vec<f64> = idx
                .iter()
                .zip(&offset)
                .map(|(&k, &c)| c + k as f64 - truncation as f64)
                .collect();
            energies.push(quadratic(&q, &u));
            atoms.push(Atom { u, probability: 0.0 });
            for d in idx.iter_mut() {
                *d += 1;
                if *d < side {
                    break;
                }
                *d = 0;
            }
        }
        let energy_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
        let total: f64 = energies.iter().map(|e| (energy_min - e).exp()).sum();
        for (a, e) in atoms.iter_mut().zip(&energies) {
            a.probability = (energy_min - e).exp() / total;
        }
        Ok(Self {
            c0,
            q,
            truncation,
            log_norm: total.ln(),
            energy_min,
            atoms,
        })
    }

    pub fn dim(&self) -> usize {
        self.c0.len()
    }

    pub fn c0(&self) -> &[f64] {
        &self.c0
    }

    pub fn q(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.q[(i, j)]).collect())
            .collect()
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// `exp(−uᵀQu) / Θ`.
    pub fn pmf(&self, u: &[f64]) -> Result<f64, DGaussError> {
        if u.len() != self.dim() {
            return Err(DGaussError::Dimension {
                expected: self.dim(),
                got: u.len(),
            });
        }
        for (x, c) in u.iter().zip(&self.c0) {
            let k = x - c;
            if (k - k.round()).abs() > 1e-9 {
                return Err(DGaussError::NotOnLattice);
            }
        }
        Ok((self.energy_min - quadratic(&self.q, u) - self.log_norm).exp())
    }

    fn twist_factor(&self, twist: &[i64], u: &[f64]) -> f64 {
        let phase: i64 = twist
            .iter()
            .zip(u.iter().zip(&self.c0))
            .map(|(&m, (&x, &c))| m * (x - c).round() as i64)
            .sum();
        if phase.rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    fn check_twist(&self, twist: &[i64]) -> Result<f64, DGaussError> {
        if twist.len() != self.dim() {
            return Err(DGaussError::Dimension {
                expected: self.dim(),
                got: twist.len(),
            });
        }
        let denom: f64 = self
            .atoms
            .iter()
            .map(|a| a.probability * self.twist_factor(twist, &a.u))
            .sum();
        if denom.abs() < DEGENERATE_TWIST {
            return Err(DGaussError::DegenerateTwist(denom));
        }
        Ok(denom)
    }

    /// `E_m[c^α] = E[c^α e^{πi m·(c−c0)}] / E[e^{πi m·(c−c0)}]`.
    pub fn twisted_expectation(&self, twist: &[i64], alpha: &[u32]) -> Result<Complex64, DGaussError> {
        if alpha.len() != self.dim() {
            return Err(DGaussError::Dimension {
                expected: self.dim(),
                got: alpha.len(),
            });
        }
        let degree: u32 = alpha.iter().sum();
        if degree > 4 {
            return Err(DGaussError::DegreeTooHigh(degree));
        }
        let denom = self.check_twist(twist)?;
        let num: f64 = self
            .atoms
            .iter()
            .map(|a| {
                let mono: f64 = a.u.iter().zip(alpha).map(|(x, &k)| x.powi(k as i32)).product();
                a.probability * self.twist_factor(twist, &a.u) * mono
            })
            .sum();
        Ok(Complex64::new(num / denom, 0.0))
    }

    /// Twisted covariance matrix of `c` with its smallest eigenvalue.
    pub fn variance_test(&self, twist: &[i64]) -> Result<VarianceReport, DGaussError> {
        let n = self.dim();
        let unit = |i: usize, j: Option<usize>| -> Vec<u32> {
            let mut a = vec![0; n];
            a[i] += 1;
            if let Some(j) = j {
                a[j] += 1;
            }
            a
        };
        let mean: Vec<f64> = (0..n)
            .map(|i| self.twisted_expectation(twist, &unit(i, None)).map(|z| z.re))
            .collect::<Result<_, _>>()?;
        let mut cov = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let second = self.twisted_expectation(twist, &unit(i, Some(j)))?.re;
                cov[i][j] = second - mean[i] * mean[j];
                cov[j][i] = cov[i][j];
            }
        }
        let min_eigenvalue = SymmetricEigen::new(DMatrix::from_fn(n, n, |i, j| cov[i][j]))
            .eigenvalues
            .min();
        Ok(VarianceReport {
            covariance: cov,
            min_eigenvalue,
            positive: min_eigenvalue > 0.0,
        })
    }
}

fn quadratic(q: &DMatrix<f64>, u: &[f64]) -> f64 {
    let n = u.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += u[i] * q[(i, j)] * u[j];
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub covariance: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
    pub positive: bool,
}

/// Domain on which harmonic measures are solved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HarmonicDomain {
    /// `[0,1) × [0, τ/2]`, periodic in `x`; the top edge is the inner
    /// boundary component.
    Cylinder { tau: f64 },
    /// `[0,W] × [0,H]` minus closed rectangular holes `[x0, y0, w, h]`,
    /// one boundary component per hole.
    RectangleWithHoles {
        width: f64,
        height: f64,
        holes: Vec<[f64; 4]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyMatrix {
    /// `∫ ∇hm_i · ∇hm_j`.
    pub energies: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

struct FdProblem {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    periodic: bool,
    /// Dirichlet group per node: `None` for unknowns, `Some(0)` for the outer
    /// boundary, `Some(i + 1)` for inner component `i`.
    fixed: Vec<Option<usize>>,
    inner: usize,
}

impl FdProblem {
    fn node_cols(&self) -> usize {
        if self.periodic {
            self.nx
        } else {
            self.nx + 1
        }
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.node_cols() + i
    }

    fn new(domain: &HarmonicDomain, nx: usize, ny: usize) -> Result<Self, DGaussError> {
        if nx < 2 || ny < 2 {
            return Err(DGaussError::InvalidDomain(format!("grid {nx}x{ny}")));
        }
        match domain {
            HarmonicDomain::Cylinder { tau } => {
                if !(*tau > 0.0) {
                    return Err(DGaussError::InvalidDomain(format!("tau = {tau}")));
                }
                let mut p = FdProblem {
                    nx,
                    ny,
                    hx: 1.0 / nx as f64,
                    hy: tau / 2.0 / ny as f64,
                    periodic: true,
                    fixed: vec![None; nx * (ny + 1)],
                    inner: 1,
                };
                for i in 0..nx {
                    let (a, b) = (p.idx(i, 0), p.idx(i, ny));
                    p.fixed[a] = Some(0);
                    p.fixed[b] = Some(1);
                }
                Ok(p)
            }
            HarmonicDomain::RectangleWithHoles {
                width,
                height,
                holes,
            } => {
                if !(*width > 0.0 && *height > 0.0) {
                    return Err(DGaussError::InvalidDomain("empty rectangle".into()));
                }
                let mut p = FdProblem {
                    nx,
                    ny,
                    hx: width / nx as f64,
                    hy: height / ny as f64,
                    periodic: false,
                    fixed: vec![None; (nx + 1) * (ny + 1)],
                    inner: holes.len(),
                };
                let eps = 1e-9 * p.hx.min(p.hy);
                for j in 0..=ny {
                    for i in 0..=nx {
                        let (x, y) = (i as f64 * p.hx, j as f64 * p.hy);
                        let k = p.idx(i, j);
                        if i == 0 || j == 0 || i == nx || j == ny {
                            p.fixed[k] = Some(0);
                        }
                        for (h, r) in holes.iter().enumerate() {
                            if x >= r[0] - eps && x <= r[0] + r[2] + eps && y >= r[1] - eps && y <= r[1] + r[3] + eps {
                                if p.fixed[k] == Some(0) {
                                    return Err(DGaussError::InvalidDomain(format!("hole {h} touches the outer boundary")));
                                }
                                p.fixed[k] = Some(h + 1);
                            }
                        }
                    }
                }
                Ok(p)
            }
        }
    }

    fn neighbors(&self, i: usize, j: usize) -> [(Option<usize>, f64); 4] {
        let (wx, wy) = (1.0 / (self.hx * self.hx), 1.0 / (self.hy * self.hy));
        let cols = self.node_cols();
        let left = if i > 0 {
            Some(self.idx(i - 1, j))
        } else if self.periodic {
            Some(self.idx(cols - 1, j))
        } else {
            None
        };
        let right = if i + 1 < cols {
            Some(self.idx(i + 1, j))
        } else if self.periodic {
            Some(self.idx(0, j))
        } else {
            None
        };
        let down = (j > 0).then(|| self.idx(i, j - 1));
        let up = (j < self.ny).then(|| self.idx(i, j + 1));
        [(left, wx), (right, wx), (down, wy), (up, wy)]
    }

    /// Discrete harmonic extension of the indicator of component `target`.
    fn solve(&self, target: usize) -> Result<(Vec<f64>, f64), DGaussError> {
        let cols = self.node_cols();
        let n = self.fixed.len();
        let boundary_value = |k: usize| match self.fixed[k] {
            Some(g) if g == target => 1.0,
            _ => 0.0,
        };
        let diag = 2.0 / (self.hx * self.hx) + 2.0 / (self.hy * self.hy);
        let apply = |x: &[f64], out: &mut [f64]| {
            for j in 0..=self.ny {
                for i in 0..cols {
                    let k = self.idx(i, j);
                    if self.fixed[k].is_some() {
                        out[k] = 0.0;
                        continue;
                    }
                    let mut s = diag * x[k];
                    for (nb, w) in self.neighbors(i, j) {
                        if let Some(nb) = nb {
                            if self.fixed[nb].is_none() {
                                s -= w * x[nb];
                            }
                        }
                    }
                    out[k] = s;
                }
            }
        };
        let mut b = vec![0.0; n];
        for j in 0..=self.ny {
            for i in 0..cols {
                let k = self.idx(i, j);
                if self.fixed[k].is_some() {
                    continue;
                }
                for (nb, w) in self.neighbors(i, j) {
                    if let Some(nb) = nb {
                        if self.fixed[nb].is_some() {
                            b[k] += w * boundary_value(nb);
                        }
                    }
                }
            }
        }
        let mut x = vec![0.0; n];
        let mut r = b.clone();
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let bnorm = dot(&b, &b).sqrt().max(f64::MIN_POSITIVE);
        let mut rr = dot(&r, &r);
        let max_iter = 20 * n + 100;
        let mut iterations = 0;
        while rr.sqrt() > 1e-12 * bnorm {
            if iterations >= max_iter {
                return Err(DGaussError::NotConverged {
                    residual: rr.sqrt() / bnorm,
                    iterations,
                });
            }
            apply(&p, &mut ap);
            let alpha = rr / dot(&p, &ap);
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            for k in 0..n {
                p[k] = r[k] + beta * p[k];
            }
            rr = rr_new;
            iterations += 1;
        }
        for k in 0..n {
            if self.fixed[k].is_some() {
                x[k] = boundary_value(k);
            }
        }
        Ok((x, rr.sqrt() / bnorm))
    }

    fn cell_gradients(&self, u: &[f64]) -> Vec<Option<(f64, f64)>> {
        let cols = self.node_cols();
        let cells_x = self.nx;
        let mut out = Vec::with_capacity(cells_x * self.ny);
        for j in 0..self.ny {
            for i in 0..cells_x {
                let i1 = (i + 1) % cols;
                let corners = [
                    self.idx(i, j),
                    self.idx(i1, j),
                    self.idx(i, j + 1),
                    self.idx(i1, j + 1),
                ];
                let groups: Vec<Option<usize>> = corners.iter().map(|&k| self.fixed[k]).collect();
                let inside_hole = groups.iter().all(|g| matches!(g, Some(h) if *h > 0 && Some(*h) == groups[0]));
                if inside_hole {
                    out.push(None);
                    continue;
                }
                let [a, b, c, d] = corners.map(|k| u[k]);
                let ux = ((b - a) + (d - c)) / (2.0 * self.hx);
                let uy = ((c - a) + (d - b)) / (2.0 * self.hy);
                out.push(Some((ux, uy)));
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dirichlet energies `∫ ∇hm_i·∇hm_j` of the harmonic measures of the inner
/// boundary components, by 5-point finite differences on an `nx × ny` cell
/// grid and midpoint quadrature.
pub fn energy_matrix(domain: &HarmonicDomain, nx: usize, ny: usize) -> Result<EnergyMatrix, DGaussError> {
    let p = FdProblem::new(domain, nx, ny)?;
    let mut grads = Vec::with_capacity(p.inner);
    let mut residuals = Vec::with_capacity(p.inner);
    for t in 1..=p.inner {
        let (u, res) = p.solve(t)?;
        grads.push(p.cell_gradients(&u));
        residuals.push(res);
    }
    let area = p.hx * p.hy;
    let n = p.inner;
    let mut energies = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in 0..=a {
            let e: f64 = grads[a]
                .iter()
                .zip(&grads[b])
                .filter_map(|(ga, gb)| match (ga, gb) {
                    (Some((ax, ay)), Some((bx, by))) => Some(ax * bx + ay * by),
                    _ => None,
                })
                .sum::<f64>()
                * area;
            energies[a][b] = e;
            energies[b][a] = e;
        }
    }
    Ok(EnergyMatrix { energies, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cylinder_atom_at_zero() {
        let law = DiscreteGaussianLaw::new(vec![0.0], vec![vec![PI]]).unwrap();
        let theta: f64 = (-20i32..=20).map(|k| (-PI * (k * k) as f64).exp()).sum();
        assert!((theta - 1.0864348112).abs() < 1e-10);
        assert!((law.pmf(&[0.0]).unwrap() - 1.0 / theta).abs() < 1e-14);
        assert!((law.pmf(&[0.0]).unwrap() - 0.9204417878).abs() < 1e-10);
        let total: f64 = law.atoms().iter().map(|a| a.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(law.pmf(&[0.5]), Err(DGaussError::NotOnLattice));
    }

    #[test]
    fn concentration() {
        let law = DiscreteGaussianLaw::new(vec![0.0], vec![vec![100.0 * PI]]).unwrap();
        assert!((1.0 - law.pmf(&[0.0]).unwrap()).abs() < 1e-40);
        let v = law.variance_test(&[0]).unwrap();
        assert!(v.covariance[0][0] < 1e-40 && v.positive);
    }

    #[test]
    fn twisted_ratio_matches_direct_sum() {
        let law = DiscreteGaussianLaw::new(vec![0.0], vec![vec![PI]]).unwrap();
        let w = |k: i32, m: i32| (-1f64).powi(m * k) * (-PI * (k * k) as f64).exp();
        let den: f64 = (-20i32..=20).map(|k| w(k, 1)).sum();
        let num: f64 = (-20i32..=20).map(|k| (k * k) as f64 * w(k, 1)).sum();
        // θ₄/θ₃ at τ = i is 2^{-1/4}
        let plain: f64 = (-20i32..=20).map(|k| w(k, 0)).sum();
        assert!((den / plain - 2f64.powf(-0.25)).abs() < 1e-14);
        let e = law.twisted_expectation(&[1], &[2]).unwrap();
        assert!((e.re - num / den).abs() < 1e-13 && e.re < 0.0);
        assert!(law.twisted_expectation(&[1], &[1]).unwrap().norm() < 1e-12);
        assert!((law.twisted_expectation(&[1], &[0]).unwrap().re - 1.0).abs() < 1e-15);
        assert!(matches!(law.twisted_expectation(&[0], &[5]), Err(DGaussError::DegreeTooHigh(5))));
    }

    #[test]
    fn half_shift_with_odd_twist_is_degenerate() {
        let law = DiscreteGaussianLaw::new(vec![0.5], vec![vec![PI]]).unwrap();
        assert!(matches!(
            law.twisted_expectation(&[1], &[0]),
            Err(DGaussError::DegenerateTwist(_))
        ));
    }

    #[test]
    fn invalid_forms() {
        assert!(matches!(
            DiscreteGaussianLaw::new(vec![0.0, 0.0], vec![vec![1.0, 2.0], vec![2.0, 1.0]]),
            Err(DGaussError::NotPositiveDefinite(_))
        ));
        assert!(matches!(
            DiscreteGaussianLaw::new(vec![0.0, 0.0], vec![vec![1.0, 0.5], vec![0.2, 1.0]]),
            Err(DGaussError::NotSymmetric)
        ));
    }

    #[test]
    fn cylinder_energy() {
        for tau in [1.0, 2.0] {
            let e = energy_matrix(&HarmonicDomain::Cylinder { tau }, 64, 32).unwrap();
            assert!((e.energies[0][0] - 2.0 / tau).abs() < 1e-8);
        }
    }

    #[test]
    fn holed_rectangle_energy_converges() {
        let domain = HarmonicDomain::RectangleWithHoles {
            width: 1.0,
            height: 1.0,
            holes: vec![[0.25, 0.25, 0.125, 0.125], [0.625, 0.5, 0.125, 0.25]],
        };
        let reference = energy_matrix(&domain, 128, 128).unwrap().energies;
        let mut last = f64::INFINITY;
        for n in [16, 32, 64] {
            let e = energy_matrix(&domain, n, n).unwrap().energies;
            assert!((e[0][1] - e[1][0]).abs() < 1e-8);
            let err = (e[0][0] - reference[0][0]).abs();
            assert!(err < last, "n = {n}: {err} >= {last}");
            last = err;
        }
        assert!(reference[0][1] < 0.0);
    }
}
