//! Theta functions with characteristics on `C/(Z + τZ)`, twisted Szegő
//! kernels on the double of the round cylinder `[0,1) × [0, τ/2]`, and the
//! continuum correlation densities `U_m` built from them.

use crate::lattice::CylinderStyle;
use crate::linalg::{det, DenseMatrix};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TorusError {
    #[error("modulus must have positive imaginary part, got {0}")]
    BadModulus(Complex64),
    #[error("characteristic ({0}, {1}) is odd: theta vanishes at 0 and no Cauchy kernel exists")]
    OddCharacteristic(f64, f64),
    #[error("points coincide modulo the lattice")]
    Pole,
    #[error("{matches} even characteristics match the {style:?} monodromy target")]
    ConventionMismatch { style: CylinderStyle, matches: usize },
    #[error("value has imaginary part {0:e}")]
    ComplexValue(f64),
    #[error("point {0} is not on the cylinder boundary")]
    OffBoundary(Complex64),
    #[error("points {0} and {1} coincide")]
    Coincident(usize, usize),
}

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn two_pi_i() -> Complex64 {
    Complex64::new(0.0, 2.0 * PI)
}

/// `θ[a,b](z|τ) = Σ_n exp(πi(n+a)²τ + 2πi(n+a)(z+b))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta {
    pub tau: Complex64,
    pub a: f64,
    pub b: f64,
    /// Terms kept on each side of the dominant index.
    pub truncation: i64,
}

impl Theta {
    pub fn new(tau: Complex64, a: f64, b: f64) -> Result<Self, TorusError> {
        if !(tau.im > 0.0) {
            return Err(TorusError::BadModulus(tau));
        }
        // Terms at distance N from the peak are below exp(−π Im τ N²) ≈ e^{-40}.
        let truncation = (40.0 / (PI * tau.im)).sqrt().ceil() as i64 + 2;
        Ok(Self { tau, a, b, truncation })
    }

    fn sum(&self, z: Complex64, derivative: bool) -> Complex64 {
        let center = (-z.im / self.tau.im - self.a).round() as i64;
        let mut s = Complex64::new(0.0, 0.0);
        for n in center - self.truncation..=center + self.truncation {
            let nu = n as f64 + self.a;
            let e = (PI * I * nu * nu * self.tau + 2.0 * PI * I * nu * (z + self.b)).exp();
            s += if derivative { 2.0 * PI * I * nu * e } else { e };
        }
        s
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.sum(z, false)
    }

    pub fn derivative(&self, z: Complex64) -> Complex64 {
        self.sum(z, true)
    }
}

/// Twisted Szegő kernel `S(z,w) = θ[a,b](w−z) θ₁'(0) / (2πi θ[a,b](0) θ₁(w−z))`
/// on `C/(Z + iτZ)`, with `θ₁ = θ[1/2,1/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusKernel {
    /// Height of the double; the lattice is `Z + iτZ`.
    pub tau: f64,
    pub characteristic: (f64, f64),
    theta: Theta,
    theta1: Theta,
    theta_at_zero: Complex64,
    theta1_prime: Complex64,
}

impl TorusKernel {
    pub fn new(tau: f64, characteristic: (f64, f64)) -> Result<Self, TorusError> {
        let t = Complex64::new(0.0, tau);
        let (a, b) = characteristic;
        let theta = Theta::new(t, a, b)?;
        let theta1 = Theta::new(t, 0.5, 0.5)?;
        let theta_at_zero = theta.eval(Complex64::new(0.0, 0.0));
        let theta1_prime = theta1.derivative(Complex64::new(0.0, 0.0));
        if theta_at_zero.norm() < 1e-12 * theta1_prime.norm().max(1.0) {
            return Err(TorusError::OddCharacteristic(a, b));
        }
        Ok(Self {
            tau,
            characteristic,
            theta,
            theta1,
            theta_at_zero,
            theta1_prime,
        })
    }

    fn reduce(&self, zeta: Complex64) -> Complex64 {
        let n = (zeta.im / self.tau).round();
        let z = zeta - Complex64::new(0.0, n * self.tau);
        z - z.re.round()
    }

    /// `S(z, w)`.
    pub fn szego(&self, z: Complex64, w: Complex64) -> Result<Complex64, TorusError> {
        let zeta = w - z;
        if self.reduce(zeta).norm() < 1e-14 {
            return Err(TorusError::Pole);
        }
        let g = self.theta.eval(zeta) * self.theta1_prime / (self.theta_at_zero * self.theta1.eval(zeta));
        Ok(g / two_pi_i())
    }

    /// The same kernel as a lattice sum of `π/sin` partial fractions.
    pub fn szego_partial_fractions(&self, z: Complex64, w: Complex64) -> Result<Complex64, TorusError> {
        let zeta = w - z;
        if self.reduce(zeta).norm() < 1e-14 {
            return Err(TorusError::Pole);
        }
        let (a, b) = self.characteristic;
        let eps_a = -(2.0 * PI * I * a).exp();
        let eps_b = -(-2.0 * PI * I * b).exp();
        let terms = (42.0 / (PI * self.tau.min(1.0 / self.tau))).ceil() as i64 + 2;
        let mut g = Complex64::new(0.0, 0.0);
        if (eps_a + 1.0).norm() < 1e-12 {
            // π/sin(πζ) is anti-periodic under ζ → ζ+1; sum over translates by τ.
            for m in -terms..=terms {
                let arg = zeta + Complex64::new(0.0, m as f64 * self.tau);
                g += eps_b.powi(-m as i32) * PI / (PI * arg).sin();
            }
        } else if (eps_b + 1.0).norm() < 1e-12 {
            let tc = Complex64::new(0.0, self.tau);
            for n in -terms..=terms {
                let arg = zeta + n as f64;
                g += eps_a.powi(-n as i32) * (PI / tc) / (PI * arg / tc).sin();
            }
        } else {
            return Err(TorusError::OddCharacteristic(a, b));
        }
        Ok(g / two_pi_i())
    }

    /// Richardson estimate of `lim (w−z)·S(z,w)` from `|w−z| ∈ {1e-3, 1e-4}`.
    pub fn residue(&self, z: Complex64, direction: Complex64) -> Result<Complex64, TorusError> {
        let u = direction / direction.norm();
        let r = |h: f64| -> Result<Complex64, TorusError> { Ok(u * h * self.szego(z, z + u * h)?) };
        Ok((100.0 * r(1e-4)? - r(1e-3)?) / 99.0)
    }

    /// Measured multipliers of `S(·, w)` under `z → z+1` and `z → z+iτ`.
    pub fn monodromy(&self) -> Result<(Complex64, Complex64), TorusError> {
        let z = Complex64::new(0.31, 0.17 * self.tau);
        let w = Complex64::new(0.58, 0.29 * self.tau);
        let s = self.szego(z, w)?;
        let a = self.szego(z + 1.0, w)? / s;
        let b = self.szego(z + Complex64::new(0.0, self.tau), w)? / s;
        Ok((a, b))
    }
}

/// Characteristic pairs tried by [`select_characteristic`], the odd one last.
pub const CHARACTERISTICS: [(f64, f64); 4] = [(0.0, 0.0), (0.0, 0.5), (0.5, 0.0), (0.5, 0.5)];

/// Target monodromy pair `(A, B)` of each boundary style.
pub fn target_monodromy(style: CylinderStyle) -> (f64, f64) {
    match style {
        CylinderStyle::DD => (-1.0, 1.0),
        CylinderStyle::ND => (-1.0, -1.0),
    }
}

/// The unique characteristic whose kernel has the style's target monodromy,
/// found by measuring every candidate. The odd characteristic has no kernel
/// and is rejected.
pub fn select_characteristic(style: CylinderStyle, tau: f64) -> Result<(f64, f64), TorusError> {
    let (ta, tb) = target_monodromy(style);
    let mut found = Vec::new();
    for ch in CHARACTERISTICS {
        let Ok(k) = TorusKernel::new(tau, ch) else {
            continue;
        };
        let (a, b) = k.monodromy()?;
        if (a - ta).norm() < 1e-9 && (b - tb).norm() < 1e-9 {
            found.push(ch);
        }
    }
    match found.as_slice() {
        [ch] => Ok(*ch),
        _ => Err(TorusError::ConventionMismatch {
            style,
            matches: found.len(),
        }),
    }
}

/// Sign `c` in `f = c·S`, so that `f^[++](p,q) ~ c/(2πi(q − p))`.
pub const COMPONENT_SIGN: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Sheet {
    Plus,
    Minus,
}

/// The four components `f^[±,±]` on the strip `0 ≤ Im z ≤ τ/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderComponents {
    pub tau: f64,
    pub style: CylinderStyle,
    pub kernel: TorusKernel,
}

/// Reflection fixing the bottom boundary.
pub fn reflect_bottom(z: Complex64) -> Complex64 {
    z.conj()
}

/// Reflection fixing the top boundary `Im z = τ/2`.
pub fn reflect_top(z: Complex64, tau: f64) -> Complex64 {
    z.conj() + Complex64::new(0.0, tau)
}

impl CylinderComponents {
    pub fn new(style: CylinderStyle, tau: f64) -> Result<Self, TorusError> {
        let ch = select_characteristic(style, tau)?;
        Ok(Self {
            tau,
            style,
            kernel: TorusKernel::new(tau, ch)?,
        })
    }

    pub fn f(&self, p: Complex64, q: Complex64) -> Result<Complex64, TorusError> {
        Ok(COMPONENT_SIGN * self.kernel.szego(p, q)?)
    }

    pub fn component(&self, s1: Sheet, s2: Sheet, p: Complex64, q: Complex64) -> Result<Complex64, TorusError> {
        let (pb, qb) = (reflect_bottom(p), reflect_bottom(q));
        match (s1, s2) {
            (Sheet::Plus, Sheet::Plus) => self.f(p, q),
            (Sheet::Plus, Sheet::Minus) => Ok(-self.f(p, qb)?),
            (Sheet::Minus, Sheet::Plus) => self.f(pb, q),
            (Sheet::Minus, Sheet::Minus) => Ok(-self.f(pb, qb)?),
        }
    }

    /// `U_m` on unit tangent vectors.
    pub fn u_m(&self, points: &[Complex64]) -> Result<f64, TorusError> {
        let ones = vec![Complex64::new(1.0, 0.0); points.len()];
        self.u_m_with_tangents(points, &ones)
    }

    /// `Σ_s det[1_{i≠j} f^[s_i,s_j](p_i,p_j)] ∏_j v_j^[s_j]` with
    /// `v^[+] = v` and `v^[-] = conj(v)`.
    pub fn u_m_with_tangents(&self, points: &[Complex64], tangents: &[Complex64]) -> Result<f64, TorusError> {
        let m = points.len();
        for i in 0..m {
            for j in 0..i {
                if (points[i] - points[j]).norm() < 1e-14 {
                    return Err(TorusError::Coincident(j, i));
                }
            }
        }
        let table: Vec<[Complex64; 4]> = (0..m * m)
            .map(|ij| {
                let (i, j) = (ij / m, ij % m);
                if i == j {
                    return Ok([Complex64::new(0.0, 0.0); 4]);
                }
                let mut out = [Complex64::new(0.0, 0.0); 4];
                for (k, (s1, s2)) in [
                    (Sheet::Plus, Sheet::Plus),
                    (Sheet::Plus, Sheet::Minus),
                    (Sheet::Minus, Sheet::Plus),
                    (Sheet::Minus, Sheet::Minus),
                ]
                .into_iter()
                .enumerate()
                {
                    out[k] = self.component(s1, s2, points[i], points[j])?;
                }
                Ok(out)
            })
            .collect::<Result<_, TorusError>>()?;
        let mut total = Complex64::new(0.0, 0.0);
        for signs in 0u32..(1 << m) {
            let minus = |j: usize| signs >> j & 1 == 1;
            let a = DenseMatrix::from_fn(m, m, |i, j| table[i * m + j][2 * minus(i) as usize + minus(j) as usize]);
            let d = det(&a).expect("square");
            let t: Complex64 = (0..m)
                .map(|j| if minus(j) { tangents[j].conj() } else { tangents[j] })
                .product();
            total += d * t;
        }
        if total.im.abs() > 1e-9 * total.re.abs().max(1.0) {
            return Err(TorusError::ComplexValue(total.im));
        }
        Ok(total.re)
    }

    /// `U_2(z, z+d·u) − sign·Re[1/(2π²(d·u)²)]` at each separation `d`.
    pub fn near_diagonal_residuals(
        &self,
        z: Complex64,
        direction: Complex64,
        separations: &[f64],
        sign: f64,
    ) -> Result<Vec<f64>, TorusError> {
        let u = direction / direction.norm();
        separations
            .iter()
            .map(|&d| {
                let dz = u * d;
                let singular = (1.0 / (2.0 * PI * PI * dz * dz)).re;
                Ok(self.u_m(&[z, z + dz])? - sign * singular)
            })
            .collect()
    }

    /// `x ↦ ∫_{x0}^{x} U_2(t + iτ/2, q) dt` at the given endpoints.
    pub fn top_boundary_primitive(&self, q: Complex64, x0: f64, xs: &[f64], nodes: usize) -> Result<Vec<f64>, TorusError> {
        let y = Complex64::new(0.0, self.tau / 2.0);
        xs.iter()
            .map(|&x| {
                let (t, w) = gauss_legendre(nodes);
                let h = 0.5 * (x - x0);
                t.iter()
                    .zip(&w)
                    .map(|(ti, wi)| Ok(h * wi * self.u_m(&[y + (x0 + h * (ti + 1.0)), q])?))
                    .sum()
            })
            .collect()
    }

    /// `∫_{γ1} ∫_{γ2} U_2` over two straight segments, by tensor Gauss–Legendre
    /// quadrature.
    pub fn integrate_u2(
        &self,
        seg1: (Complex64, Complex64),
        seg2: (Complex64, Complex64),
        nodes: usize,
    ) -> Result<f64, TorusError> {
        let (x, w) = gauss_legendre(nodes);
        let (d1, d2) = (seg1.1 - seg1.0, seg2.1 - seg2.0);
        let mut total = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            let p = seg1.0 + d1 * (0.5 * (xi + 1.0));
            for (xj, wj) in x.iter().zip(&w) {
                let q = seg2.0 + d2 * (0.5 * (xj + 1.0));
                total += 0.25 * wi * wj * self.u_m_with_tangents(&[p, q], &[d1, d2])?;
            }
        }
        Ok(total)
    }
}

/// Nodes and weights of `n`-point Gauss–Legendre quadrature on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let (pn, pn1) = if n == 1 { (t, 1.0) } else { (p1, p0) };
            let dp = n as f64 * (t * pn - pn1) / (t * t - 1.0);
            let dt = pn / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                let (mut q0, mut q1) = (1.0, t);
                for k in 2..=n {
                    let q2 = ((2 * k - 1) as f64 * t * q1 - (k - 1) as f64 * q0) / k as f64;
                    q0 = q1;
                    q1 = q2;
                }
                let (qn, qn1) = if n == 1 { (t, 1.0) } else { (q1, q0) };
                let dq = n as f64 * (t * qn - qn1) / (t * t - 1.0);
                x[i] = t;
                w[i] = 2.0 / ((1.0 - t * t) * dq * dq);
                break;
            }
        }
    }
    (x, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbelJacobiShift {
    /// `π Re(p2 − p1)`.
    pub a_shift: f64,
    /// `π τ^{-1} Im(p2 − p1)`.
    pub b_shift: f64,
    /// `Re(p2 − p1)`.
    pub height_shift: f64,
}

/// Periods of the harmonic differential with poles at two boundary points.
pub fn abel_jacobi_shift(tau: f64, p1: Complex64, p2: Complex64) -> Result<AbelJacobiShift, TorusError> {
    for p in [p1, p2] {
        if p.im.abs() > 1e-12 && (p.im - tau / 2.0).abs() > 1e-12 {
            return Err(TorusError::OffBoundary(p));
        }
    }
    let d = p2 - p1;
    Ok(AbelJacobiShift {
        a_shift: PI * d.re,
        b_shift: PI * d.im / tau,
        height_shift: d.re,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn theta_values() {
        let th = Theta::new(c(0.0, 1.0), 0.0, 0.0).unwrap();
        assert!((th.eval(c(0.0, 0.0)) - 1.0864348112).norm() < 1e-10);
        let odd = Theta::new(c(0.0, 1.0), 0.5, 0.5).unwrap();
        assert!(odd.eval(c(0.0, 0.0)).norm() < 1e-14);
        assert!(Theta::new(c(0.0, -1.0), 0.0, 0.0).is_err());
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(8);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((integral - 2.0 / 15.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn characteristics_by_style() {
        for tau in [0.5, 1.0, 2.0] {
            assert_eq!(select_characteristic(CylinderStyle::DD, tau).unwrap(), (0.0, 0.5));
            assert_eq!(select_characteristic(CylinderStyle::ND, tau).unwrap(), (0.0, 0.0));
        }
        assert!(matches!(
            TorusKernel::new(1.0, (0.5, 0.5)),
            Err(TorusError::OddCharacteristic(..))
        ));
    }

    #[test]
    fn theta_quasi_periodicity() {
        let tau = c(0.0, 1.3);
        for (a, b) in CHARACTERISTICS {
            let th = Theta::new(tau, a, b).unwrap();
            let zs = [c(0.1, 0.2), c(0.37, -0.4), c(-0.8, 0.9), c(0.05, 1.1), c(0.6, 0.0)];
            let m: Vec<Complex64> = zs.iter().map(|&z| th.eval(z + 1.0) / th.eval(z)).collect();
            for x in &m {
                assert!((x.norm() - 1.0).abs() < 1e-12 && (x - m[0]).norm() < 1e-10);
            }
            // θ[a,b](z+τ) = e^{−πiτ − 2πi(z+b)} θ[a,b](z)
            for &z in &zs {
                let f = (-PI * I * tau - 2.0 * PI * I * (z + b)).exp();
                assert!((th.eval(z + tau) - f * th.eval(z)).norm() < 1e-12 * th.eval(z + tau).norm().max(1.0));
            }
        }
    }

    #[test]
    fn theta_truncation_is_converged() {
        let th = Theta::new(c(0.0, 1.0), 0.0, 0.5).unwrap();
        let wide = Theta { truncation: th.truncation + 10, ..th };
        for z in [c(0.2, 0.3), c(-0.4, 0.45)] {
            assert!((th.eval(z) - wide.eval(z)).norm() < 1e-14);
        }
    }

    #[test]
    fn szego_residue_and_translation() {
        for ch in [(0.0, 0.0), (0.0, 0.5), (0.5, 0.0)] {
            let k = TorusKernel::new(1.0, ch).unwrap();
            let z = c(0.23, 0.31);
            for dir in [c(1.0, 0.0), c(0.3, 0.8)] {
                assert!((k.residue(z, dir).unwrap() - 1.0 / two_pi_i()).norm() < 1e-8);
            }
            let w = c(0.61, 0.12);
            let s = k.szego(z, w).unwrap();
            for shift in [c(0.37, 0.0), c(1.0, 0.0), c(0.0, 1.0), c(-2.0, 1.0)] {
                assert!((k.szego(z + shift, w + shift).unwrap() - s).norm() < 1e-12);
            }
            assert_eq!(k.szego(z, z + c(1.0, 1.0)), Err(TorusError::Pole));
        }
    }

    #[test]
    fn two_evaluation_routes_agree() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for tau in [0.5, 1.0, 2.0] {
            for ch in [(0.0, 0.0), (0.0, 0.5), (0.5, 0.0)] {
                let k = TorusKernel::new(tau, ch).unwrap();
                for _ in 0..20 {
                    let z = c(rng.gen_range(0.0..1.0), rng.gen_range(0.0..tau));
                    let w = c(rng.gen_range(0.0..1.0), rng.gen_range(0.0..tau));
                    let (a, b) = (k.szego(z, w).unwrap(), k.szego_partial_fractions(z, w).unwrap());
                    assert!((a - b).norm() < 1e-10 * a.norm().max(1.0), "{ch:?} {z} {w}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn monodromy_by_characteristic() {
        let expect = [((0.0, 0.0), (-1.0, -1.0)), ((0.0, 0.5), (-1.0, 1.0)), ((0.5, 0.0), (1.0, -1.0))];
        for (ch, (ea, eb)) in expect {
            let (a, b) = TorusKernel::new(0.7, ch).unwrap().monodromy().unwrap();
            assert!((a - ea).norm() < 1e-9 && (b - eb).norm() < 1e-9);
        }
    }

    fn components() -> Vec<CylinderComponents> {
        [CylinderStyle::DD, CylinderStyle::ND]
            .into_iter()
            .map(|s| CylinderComponents::new(s, 1.0).unwrap())
            .collect()
    }

    #[test]
    fn conjugation_pairing() {
        let (p, q) = (c(0.2, 0.13), c(0.71, 0.37));
        for cc in components() {
            let f = |s1, s2| cc.component(s1, s2, p, q).unwrap();
            assert!((f(Sheet::Plus, Sheet::Plus).conj() - f(Sheet::Minus, Sheet::Minus)).norm() < 1e-12);
            assert!((f(Sheet::Plus, Sheet::Minus).conj() - f(Sheet::Minus, Sheet::Plus)).norm() < 1e-12);
        }
    }

    #[test]
    fn plus_plus_is_holomorphic_and_normalized() {
        let (p, q) = (c(0.2, 0.13), c(0.71, 0.37));
        let h = 1e-4;
        for cc in components() {
            let f = |p| cc.component(Sheet::Plus, Sheet::Plus, p, q).unwrap();
            let dx = (f(p + h) - f(p - h)) / (2.0 * h);
            let dy = (f(p + c(0.0, h)) - f(p - c(0.0, h))) / (2.0 * h);
            assert!((dx + I * dy).norm() / 2.0 < 1e-6);
            // f^[++](p,q) ~ c/(2πi(q − p))
            let e = 1e-4;
            let near = cc.component(Sheet::Plus, Sheet::Plus, p, p + e).unwrap() * e;
            assert!((near - COMPONENT_SIGN / two_pi_i()).norm() < 1e-8);
        }
    }

    #[test]
    fn temperleyan_boundary_relation() {
        let q = c(0.55, 0.3);
        for cc in components() {
            for x in [0.1, 0.4, 0.9] {
                let p = c(x, 1e-10);
                let d = cc.component(Sheet::Plus, Sheet::Plus, p, q).unwrap()
                    - cc.component(Sheet::Minus, Sheet::Plus, p, q).unwrap();
                assert!(d.norm() < 1e-8);
            }
        }
    }

    #[test]
    fn u_m_structure() {
        let pts = [c(0.1, 0.12), c(0.45, 0.31), c(0.8, 0.2), c(0.3, 0.4)];
        for cc in components() {
            assert_eq!(cc.u_m(&pts[..1]).unwrap(), 0.0);
            let u = cc.u_m(&pts[..2]).unwrap();
            assert!((u - cc.u_m(&[pts[1], pts[0]]).unwrap()).abs() < 1e-12);
            let u4 = cc.u_m(&pts).unwrap();
            let perm = cc.u_m(&[pts[2], pts[0], pts[3], pts[1]]).unwrap();
            assert!((u4 - perm).abs() < 1e-9 * u4.abs().max(1.0));
            assert!(matches!(cc.u_m(&[pts[0], pts[0]]), Err(TorusError::Coincident(0, 1))));
        }
    }

    #[test]
    fn near_diagonal_singularity_has_negative_sign() {
        let seps = [1e-2, 1e-3, 1e-4];
        for cc in components() {
            let z = c(0.4, 0.25);
            let minus = cc.near_diagonal_residuals(z, c(1.0, 0.3), &seps, -1.0).unwrap();
            assert!(minus.iter().all(|r| (r - minus[0]).abs() < 1e-3));
            let plus = cc.near_diagonal_residuals(z, c(1.0, 0.3), &seps, 1.0).unwrap();
            assert!(plus[2].abs() > 100.0 * plus[0].abs());
        }
    }

    #[test]
    fn top_boundary_primitive_is_flat() {
        for cc in components() {
            let prim = cc.top_boundary_primitive(c(0.4, 0.2), 0.0, &[0.2, 0.5, 0.9], 32).unwrap();
            assert!(prim.iter().all(|v| v.abs() < 1e-6), "{prim:?}");
        }
    }

    #[test]
    fn abel_jacobi() {
        let s = abel_jacobi_shift(1.0, c(0.0, 0.0), c(0.5, 0.5)).unwrap();
        assert!((s.a_shift - PI / 2.0).abs() < 1e-15 && (s.b_shift - PI / 2.0).abs() < 1e-15);
        let z = abel_jacobi_shift(1.0, c(0.3, 0.0), c(0.3, 0.0)).unwrap();
        assert_eq!((z.a_shift, z.b_shift), (0.0, 0.0));
        let t = abel_jacobi_shift(1.0, c(0.0, 0.0), c(1.5, 0.5)).unwrap();
        assert!((t.height_shift - s.height_shift - 1.0).abs() < 1e-15);
        assert!(abel_jacobi_shift(1.0, c(0.0, 0.2), c(0.0, 0.0)).is_err());
    }
}
