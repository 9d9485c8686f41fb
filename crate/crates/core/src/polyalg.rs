//! Dense complex polynomials and square matrices of them.
//!
//! Coefficients are stored lowest degree first. Trailing coefficients below
//! `1e-13` times the largest modulus are dropped on construction.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Relative threshold used when trimming leading coefficients.
pub const TRIM_REL: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct CPoly {
    coeffs: Vec<C64>,
}

impl CPoly {
    pub fn new(coeffs: Vec<C64>) -> Self {
        let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut p = CPoly { coeffs };
        p.trim_below(TRIM_REL * scale);
        p
    }

    /// Builds a polynomial without any trimming.
    pub fn raw(coeffs: Vec<C64>) -> Self {
        let mut p = CPoly { coeffs };
        p.trim_below(0.0);
        p
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| C64::new(c, 0.0)).collect())
    }

    pub fn zero() -> Self {
        CPoly { coeffs: Vec::new() }
    }

    pub fn constant(c: C64) -> Self {
        Self::raw(vec![c])
    }

    pub fn one() -> Self {
        Self::constant(C64::new(1.0, 0.0))
    }

    /// The monomial `t^k`.
    pub fn monomial(k: usize) -> Self {
        let mut c = vec![C64::new(0.0, 0.0); k + 1];
        c[k] = C64::new(1.0, 0.0);
        CPoly { coeffs: c }
    }

    /// `t - a`.
    pub fn linear_root(a: C64) -> Self {
        CPoly {
            coeffs: vec![-a, C64::new(1.0, 0.0)],
        }
    }

    fn trim_below(&mut self, tol: f64) {
        while let Some(c) = self.coeffs.last() {
            if c.norm() <= tol {
                self.coeffs.pop();
            } else {
                break;
            }
        }
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// Coefficient of `t^k`, zero past the end.
    pub fn coeff(&self, k: usize) -> C64 {
        self.coeffs.get(k).copied().unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> C64 {
        self.coeffs.last().copied().unwrap_or_default()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn eval(&self, z: C64) -> C64 {
        self.coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> CPoly {
        if self.coeffs.len() <= 1 {
            return CPoly::zero();
        }
        CPoly::raw(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }

    pub fn scale(&self, s: C64) -> CPoly {
        CPoly::raw(self.coeffs.iter().map(|&c| c * s).collect())
    }

    pub fn pow(&self, k: usize) -> CPoly {
        let mut out = CPoly::one();
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Coefficients of `p(center + scale * u)` as a polynomial in `u`.
    pub fn rescaled(&self, center: C64, scale: C64) -> CPoly {
        let lin = CPoly::raw(vec![center, scale]);
        // Horner in polynomial arithmetic.
        let mut acc = CPoly::zero();
        for &c in self.coeffs.iter().rev() {
            acc = &(&acc * &lin) + &CPoly::constant(c);
        }
        acc
    }

    /// Max coefficient distance, padding the shorter polynomial with zeros.
    pub fn distance(&self, other: &CPoly) -> f64 {
        let n = self.coeffs.len().max(other.coeffs.len());
        (0..n)
            .map(|k| (self.coeff(k) - other.coeff(k)).norm())
            .fold(0.0, f64::max)
    }
}

impl Add for &CPoly {
    type Output = CPoly;
    fn add(self, rhs: &CPoly) -> CPoly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        CPoly::raw((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl Sub for &CPoly {
    type Output = CPoly;
    fn sub(self, rhs: &CPoly) -> CPoly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        CPoly::raw((0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl Mul for &CPoly {
    type Output = CPoly;
    fn mul(self, rhs: &CPoly) -> CPoly {
        if self.is_zero() || rhs.is_zero() {
            return CPoly::zero();
        }
        let mut out = vec![C64::new(0.0, 0.0); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        CPoly::raw(out)
    }
}

impl Neg for &CPoly {
    type Output = CPoly;
    fn neg(self) -> CPoly {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl Serialize for CPoly {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.coeffs.len()))?;
        for c in &self.coeffs {
            seq.serialize_element(&[c.re, c.im])?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for CPoly {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs: Vec<[f64; 2]> = Vec::deserialize(d)?;
        Ok(CPoly::new(pairs.into_iter().map(|[re, im]| C64::new(re, im)).collect()))
    }
}

/// Long division `P = Q·D + R` with `deg R < deg D`.
///
/// The remainder is trimmed relative to the size of `P`, so exact divisions
/// come back with a zero remainder.
pub fn poly_divmod(p: &CPoly, d: &CPoly) -> Result<(CPoly, CPoly)> {
    let dd = d.degree().ok_or(Error::DivisionByZero)?;
    let lead = d.leading();
    let mut rem: Vec<C64> = p.coeffs.clone();
    let Some(dp) = p.degree() else {
        return Ok((CPoly::zero(), CPoly::zero()));
    };
    if dp < dd {
        return Ok((CPoly::zero(), p.clone()));
    }
    let mut q = vec![C64::new(0.0, 0.0); dp - dd + 1];
    for k in (0..=dp - dd).rev() {
        let c = rem[k + dd] / lead;
        q[k] = c;
        for (j, &dj) in d.coeffs.iter().enumerate() {
            rem[k + j] -= c * dj;
        }
    }
    rem.truncate(dd);
    let mut r = CPoly { coeffs: rem };
    r.trim_below(TRIM_REL * (1.0 + p.max_abs()) * 10.0);
    Ok((CPoly::raw(q), r))
}

/// Writes `P = Σ_j R_j Z^j` with `deg R_j < deg Z`.
pub fn tower_decompose(p: &CPoly, z: &CPoly) -> Result<Vec<CPoly>> {
    match z.degree() {
        None | Some(0) => return Err(Error::CoverDegree),
        _ => {}
    }
    let mut out = Vec::new();
    let mut cur = p.clone();
    loop {
        let (q, r) = poly_divmod(&cur, z)?;
        out.push(r);
        if q.is_zero() {
            break;
        }
        cur = q;
    }
    if out.is_empty() {
        out.push(CPoly::zero());
    }
    Ok(out)
}

/// Inverse of [`tower_decompose`].
pub fn tower_compose(blocks: &[CPoly], z: &CPoly) -> CPoly {
    let mut acc = CPoly::zero();
    for b in blocks.iter().rev() {
        acc = &(&acc * z) + b;
    }
    acc
}

/// Least-squares fit of a degree-`deg` polynomial through `(z, w)` samples.
///
/// The fit is solved in the centred, scaled variable `(z - c)/s` and then
/// expanded back to monomials. The residual is the largest absolute deviation
/// at the samples.
pub fn fit_polynomial(samples: &[(C64, C64)], deg: usize) -> Result<(CPoly, f64)> {
    let n = samples.len();
    if n < deg + 1 {
        return Err(Error::UnderdeterminedFit {
            samples: n,
            degree: deg,
        });
    }
    let center = samples.iter().map(|s| s.0).sum::<C64>() / n as f64;
    let scale = samples
        .iter()
        .map(|s| (s.0 - center).norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE.sqrt());
    let a = DMatrix::from_fn(n, deg + 1, |i, k| ((samples[i].0 - center) / scale).powu(k as u32));
    let b = DVector::from_iterator(n, samples.iter().map(|s| s.1));
    let svd = a.clone().svd(true, true);
    let x = svd
        .solve(&b, 1e-14)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let resid = (&a * &x - &b).iter().map(|r| r.norm()).fold(0.0, f64::max);
    let in_u = CPoly::raw(x.iter().copied().collect());
    // u = (z - center)/scale, so z = center + scale·u inverts to u = -center/scale + z/scale.
    let inv = 1.0 / scale;
    let poly = in_u.rescaled(-center * inv, C64::new(inv, 0.0));
    Ok((poly, resid))
}

/// All complex roots, from companion-matrix eigenvalues polished by Newton.
///
/// Repeated roots come back repeated. The order is whatever the eigensolver
/// produced; callers sort as they need.
pub fn roots(p: &CPoly) -> Vec<C64> {
    let Some(n) = p.degree() else {
        return Vec::new();
    };
    if n == 0 {
        return Vec::new();
    }
    let lead = p.leading();
    if n == 1 {
        return vec![-p.coeff(0) / lead];
    }
    let comp = DMatrix::from_fn(n, n, |i, j| {
        if i == 0 {
            -p.coeff(n - 1 - j) / lead
        } else if i == j + 1 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let eig = comp
        .clone()
        .schur()
        .eigenvalues()
        .map(|v| v.iter().copied().collect::<Vec<_>>())
        .unwrap_or_else(|| comp.diagonal().iter().copied().collect());
    let dp = p.derivative();
    eig.into_iter()
        .map(|mut r| {
            for _ in 0..3 {
                let d = dp.eval(r);
                if d.norm() == 0.0 {
                    break;
                }
                let step = p.eval(r) / d;
                // Newton near a multiple root can overshoot; keep only genuine improvements.
                let cand = r - step;
                if p.eval(cand).norm() < p.eval(r).norm() {
                    r = cand;
                } else {
                    break;
                }
            }
            r
        })
        .collect()
}

/// An `r×r` matrix whose entries are polynomials in one indeterminate.
#[derive(Clone, Debug, PartialEq)]
pub struct MatPoly {
    r: usize,
    entries: Vec<CPoly>,
}

impl MatPoly {
    pub fn from_entries(r: usize, entries: Vec<CPoly>) -> Self {
        assert_eq!(entries.len(), r * r, "MatPoly needs r*r entries");
        MatPoly { r, entries }
    }

    pub fn identity(r: usize) -> Self {
        let entries = (0..r * r)
            .map(|k| if k / r == k % r { CPoly::one() } else { CPoly::zero() })
            .collect();
        MatPoly { r, entries }
    }

    /// Builds `Σ_k M_k z^k` from coefficient matrices.
    pub fn from_coeff_matrices(mats: &[DMatrix<C64>]) -> Self {
        let r = mats.first().map(|m| m.nrows()).unwrap_or(0);
        let entries = (0..r * r)
            .map(|k| CPoly::new(mats.iter().map(|m| m[(k / r, k % r)]).collect()))
            .collect();
        MatPoly { r, entries }
    }

    pub fn size(&self) -> usize {
        self.r
    }

    pub fn entry(&self, a: usize, b: usize) -> &CPoly {
        &self.entries[a * self.r + b]
    }

    pub fn entry_mut(&mut self, a: usize, b: usize) -> &mut CPoly {
        &mut self.entries[a * self.r + b]
    }

    /// Largest entry degree, `None` if every entry is zero.
    pub fn degree(&self) -> Option<usize> {
        self.entries.iter().filter_map(|p| p.degree()).max()
    }

    pub fn coeff_matrix(&self, k: usize) -> DMatrix<C64> {
        DMatrix::from_fn(self.r, self.r, |a, b| self.entry(a, b).coeff(k))
    }

    /// Matrix of degree-top coefficients.
    pub fn leading_matrix(&self) -> DMatrix<C64> {
        self.coeff_matrix(self.degree().unwrap_or(0))
    }

    pub fn eval(&self, z: C64) -> DMatrix<C64> {
        DMatrix::from_fn(self.r, self.r, |a, b| self.entry(a, b).eval(z))
    }

    pub fn transpose(&self) -> MatPoly {
        let entries = (0..self.r * self.r)
            .map(|k| self.entry(k % self.r, k / self.r).clone())
            .collect();
        MatPoly { r: self.r, entries }
    }

    pub fn mul(&self, rhs: &MatPoly) -> MatPoly {
        let r = self.r;
        let entries = (0..r * r)
            .map(|k| {
                let (a, b) = (k / r, k % r);
                (0..r).fold(CPoly::zero(), |acc, j| &acc + &(self.entry(a, j) * rhs.entry(j, b)))
            })
            .collect();
        MatPoly { r, entries }
    }

    /// Max coefficient distance over all entries.
    pub fn distance(&self, other: &MatPoly) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.distance(b))
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|p| p.max_abs()).fold(0.0, f64::max)
    }
}

impl Serialize for MatPoly {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<&CPoly>> = (0..self.r)
            .map(|a| (0..self.r).map(|b| self.entry(a, b)).collect())
            .collect();
        rows.serialize(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn divmod_examples() {
        let (q, r) = poly_divmod(&CPoly::monomial(2), &CPoly::monomial(1)).unwrap();
        assert_eq!(q, CPoly::monomial(1));
        assert!(r.is_zero());

        let h2 = CPoly::from_real(&[-2.0, 0.0, 4.0]);
        let (q, r) = poly_divmod(&h2, &CPoly::monomial(2)).unwrap();
        assert!(q.distance(&CPoly::from_real(&[4.0])) < 1e-15);
        assert!(r.distance(&CPoly::from_real(&[-2.0])) < 1e-15);

        assert_eq!(poly_divmod(&h2, &CPoly::zero()), Err(Error::DivisionByZero));
    }

    #[test]
    fn tower_examples() {
        let z = CPoly::monomial(2);
        let h2 = CPoly::from_real(&[-2.0, 0.0, 4.0]);
        let t = tower_decompose(&h2, &z).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t[0].distance(&CPoly::from_real(&[-2.0])) < 1e-15);
        assert!(t[1].distance(&CPoly::from_real(&[4.0])) < 1e-15);

        let h3 = CPoly::from_real(&[0.0, -12.0, 0.0, 8.0]);
        let t = tower_decompose(&h3, &z).unwrap();
        assert!(t[0].distance(&CPoly::from_real(&[0.0, -12.0])) < 1e-15);
        assert!(t[1].distance(&CPoly::from_real(&[0.0, 8.0])) < 1e-15);

        let low = CPoly::from_real(&[1.0, 2.0]);
        assert_eq!(tower_decompose(&low, &z).unwrap(), vec![low.clone()]);
        assert_eq!(tower_decompose(&low, &CPoly::one()), Err(Error::CoverDegree));
    }

    #[test]
    fn fit_examples() {
        let pts: Vec<(C64, C64)> = (0..8)
            .map(|k| {
                let z = C64::from_polar(1.3, k as f64 * 0.7) + c(0.4);
                (z, z * z)
            })
            .collect();
        let (p, res) = fit_polynomial(&pts, 2).unwrap();
        assert!(res < 1e-12);
        assert!(p.distance(&CPoly::monomial(2)) < 1e-12);

        let inv: Vec<(C64, C64)> = (0..16)
            .map(|k| {
                let z = C64::from_polar(1.0, k as f64 * std::f64::consts::TAU / 16.0);
                (z, z.inv())
            })
            .collect();
        let (_, res) = fit_polynomial(&inv, 3).unwrap();
        assert!(res > 0.5);

        assert!(matches!(
            fit_polynomial(&pts[..2], 2),
            Err(Error::UnderdeterminedFit { .. })
        ));
    }

    #[test]
    fn roots_forward_check() {
        let p = CPoly::from_real(&[-6.0, 11.0, -6.0, 1.0]);
        let mut r: Vec<f64> = roots(&p).iter().map(|z| z.re).collect();
        r.sort_by(f64::total_cmp);
        for (a, b) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let q = CPoly::new(vec![
            C64::new(0.3, -1.0),
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
        ]);
        for z in roots(&q) {
            assert!(q.eval(z).norm() < 1e-12);
        }
    }

    #[test]
    fn matpoly_basics() {
        let m = MatPoly::from_entries(
            2,
            vec![
                CPoly::from_real(&[-2.0, 4.0]),
                CPoly::zero(),
                CPoly::from_real(&[1.0]),
                CPoly::from_real(&[-6.0, 4.0]),
            ],
        );
        assert_eq!(m.degree(), Some(1));
        assert_eq!(m.leading_matrix()[(0, 0)], c(4.0));
        assert_eq!(m.transpose().entry(0, 1), m.entry(1, 0));
        let id = MatPoly::identity(2);
        assert_eq!(m.mul(&id), m);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.starts_with("[[[[-2.0,0.0],[4.0,0.0]],[]]"));
        let back: CPoly = serde_json::from_str("[[1.0,0.0],[0.0,2.0]]").unwrap();
        assert_eq!(back.coeff(1), C64::new(0.0, 2.0));
    }

    fn arb_poly(max_deg: usize) -> impl Strategy<Value = CPoly> {
        prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..=max_deg + 1)
            .prop_map(|v| CPoly::new(v.into_iter().map(|(a, b)| C64::new(a, b)).collect()))
    }

    proptest! {
        #[test]
        fn divmod_reconstructs(p in arb_poly(9), d in arb_poly(4)) {
            prop_assume!(!d.is_zero() && d.leading().norm() > 1e-2);
            let (q, r) = poly_divmod(&p, &d).unwrap();
            let back = &(&q * &d) + &r;
            let scale = 1.0 + p.max_abs() + q.max_abs() * d.max_abs();
            prop_assert!(back.distance(&p) <= 1e-12 * scale);
            if let (Some(dr), Some(dd)) = (r.degree(), d.degree()) {
                prop_assert!(dr < dd);
            }
        }

        #[test]
        fn tower_round_trip(p in arb_poly(9), z in arb_poly(3)) {
            prop_assume!(z.degree().unwrap_or(0) >= 1 && z.leading().norm() > 0.3);
            let blocks = tower_decompose(&p, &z).unwrap();
            let dz = z.degree().unwrap();
            for b in &blocks {
                prop_assert!(b.degree().is_none_or(|d| d < dz));
            }
            // Round-off scales with the terms R_j Z^j, which can dwarf P itself.
            let scale = 1.0 + p.max_abs() + blocks
                .iter()
                .enumerate()
                .map(|(j, b)| b.max_abs() * (1.0 + z.max_abs()).powi(j as i32))
                .fold(0.0, f64::max);
            let back = tower_compose(&blocks, &z);
            prop_assert!(back.distance(&p) <= 1e-12 * scale);
            let again = tower_decompose(&back, &z).unwrap();
            for (a, b) in blocks.iter().zip(&again) {
                prop_assert!(a.distance(b) <= 1e-10 * scale);
            }
        }
    }
}
