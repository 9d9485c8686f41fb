//! Hermite and Laguerre matrix polynomials obtained by pushing the scalar
//! families forward along `Z(t) = (t − c)²`.
//!
//! Row `a` of `P_j` expresses `p_{2j+a}(t)` in the basis `{p_0, p_1}` with
//! coefficients polynomial in `z = Z(t)`. It is computed twice: by tower
//! division in [`crate::cover0`] and by residue extraction at `s = ∞`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

use crate::cover0::{build_phi, scalar_to_matrix_poly, weight_matrix, CoverG0, SectionBasisG0, SheetMeasure};
use crate::error::{Error, Result};
use crate::polyalg::{CPoly, MatPoly};
use crate::quadcontour::{integrate_matrix, make_contour, ContourKind, ContourSpec};
use crate::C64;

/// Nodes used for the `z`-plane orthogonality check.
pub const RAY_NODES: usize = 400;
pub const PROJECTION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassicalKind {
    Hermite,
    Laguerre,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalFamilySpec {
    pub kind: ClassicalKind,
    pub c: f64,
    #[serde(default)]
    pub alpha: f64,
    /// Number of matrix polynomials `P_0..P_{n-1}`.
    pub n: usize,
}

impl ClassicalFamilySpec {
    pub fn hermite(c: f64, n: usize) -> Self {
        ClassicalFamilySpec {
            kind: ClassicalKind::Hermite,
            c,
            alpha: 0.0,
            n,
        }
    }

    pub fn laguerre(c: f64, alpha: f64, n: usize) -> Self {
        ClassicalFamilySpec {
            kind: ClassicalKind::Laguerre,
            c,
            alpha,
            n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.c.is_finite() {
            return Err(Error::InvalidArgument("c must be finite".into()));
        }
        if self.kind == ClassicalKind::Laguerre {
            if self.c > 0.0 {
                return Err(Error::InvalidArgument(format!("Laguerre needs c ≤ 0, got {}", self.c)));
            }
            if !(self.alpha > -1.0) {
                return Err(Error::InvalidArgument(format!(
                    "Laguerre needs α > −1, got {}",
                    self.alpha
                )));
            }
        }
        Ok(())
    }

    pub fn cover(&self) -> CoverG0 {
        CoverG0::shifted_square(self.c)
    }

    /// `{p_0, p_1}`: `{1, 2t}` for Hermite, `{1, α + 1 − t}` for Laguerre.
    pub fn basis(&self) -> SectionBasisG0 {
        SectionBasisG0::new(vec![
            classical_scalar(self.kind, 0, self.alpha),
            classical_scalar(self.kind, 1, self.alpha),
        ])
        .expect("degree 0 and 1 polynomials span")
    }

    /// Scalar weight in the `t`-plane.
    pub fn scalar_weight(&self, t: C64) -> C64 {
        match self.kind {
            ClassicalKind::Hermite => (-t * t).exp(),
            ClassicalKind::Laguerre => t.powf(self.alpha) * (-t).exp(),
        }
    }

    pub fn sheet_measure(&self) -> SheetMeasure {
        match self.kind {
            ClassicalKind::Hermite => SheetMeasure::RealLine,
            ClassicalKind::Laguerre => SheetMeasure::RealHalfLine { lower: 0.0 },
        }
    }

    /// Left end of the image of the `t`-support: `0` for the real line (both
    /// sheets are real on `[0, c²]`), `c²` for the half-line.
    pub fn support_start(&self) -> f64 {
        match self.kind {
            ClassicalKind::Hermite => 0.0,
            ClassicalKind::Laguerre => self.c * self.c,
        }
    }

    /// `H_j` for the scalar normalization of the family.
    pub fn norm(&self, j: usize) -> DMatrix<C64> {
        let (a, b) = (2 * j, 2 * j + 1);
        let (ha, hb) = match self.kind {
            ClassicalKind::Hermite => (
                PI.sqrt() * 2f64.powi(a as i32) * factorial(a),
                PI.sqrt() * 2f64.powi(b as i32) * factorial(b),
            ),
            ClassicalKind::Laguerre => (
                gamma(a as f64 + self.alpha + 1.0) / factorial(a),
                gamma(b as f64 + self.alpha + 1.0) / factorial(b),
            ),
        };
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::new(ha, 0.0), C64::new(hb, 0.0)]))
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Physicists' Hermite `h_n`, from `h_{n+1} = 2t h_n − 2n h_{n−1}`.
pub fn hermite_scalar(n: usize) -> CPoly {
    let t2 = CPoly::from_real(&[0.0, 2.0]);
    let (mut prev, mut cur) = (CPoly::zero(), CPoly::one());
    for k in 0..n {
        let next = &(&t2 * &cur) - &prev.scale(C64::new(2.0 * k as f64, 0.0));
        prev = cur;
        cur = next;
    }
    cur
}

/// `L_n^α`, from `(n+1)L_{n+1} = (2n+1+α−t)L_n − (n+α)L_{n−1}`.
pub fn laguerre_scalar(n: usize, alpha: f64) -> CPoly {
    let (mut prev, mut cur) = (CPoly::zero(), CPoly::one());
    for k in 0..n {
        let kf = k as f64;
        let lin = CPoly::from_real(&[2.0 * kf + 1.0 + alpha, -1.0]);
        let next = (&(&lin * &cur) - &prev.scale(C64::new(kf + alpha, 0.0))).scale(C64::new(1.0 / (kf + 1.0), 0.0));
        prev = cur;
        cur = next;
    }
    cur
}

pub fn classical_scalar(kind: ClassicalKind, n: usize, alpha: f64) -> CPoly {
    match kind {
        ClassicalKind::Hermite => hermite_scalar(n),
        ClassicalKind::Laguerre => laguerre_scalar(n, alpha),
    }
}

/// `res_{s=∞} g(s) ds / (z − Z(s))` as a polynomial in `z`, for monic `Z`.
///
/// With `1/(z − Z) = −Σ_m z^m Z^{−m−1}` the residue is
/// `Σ_m z^m [s^{−1}](g/Z^{m+1})`, and `Z^{−1} = s^{−r} B(1/s)` with `B` a
/// power series.
pub fn residue_at_infinity(g: &CPoly, z: &CPoly) -> Result<CPoly> {
    let r = z.degree().ok_or(Error::CoverDegree)?;
    if r == 0 || (z.leading() - C64::new(1.0, 0.0)).norm() > 1e-12 {
        return Err(Error::CoverDegree);
    }
    let Some(dg) = g.degree() else {
        return Ok(CPoly::zero());
    };
    // Z(s) = s^r A(u), A(u) = Σ_j z_{r-j} u^j, u = 1/s.
    let len = dg + 1;
    let a: Vec<C64> = (0..len)
        .map(|j| if j <= r { z.coeff(r - j) } else { C64::new(0.0, 0.0) })
        .collect();
    let b = series_inverse(&a, len);
    let mut out = Vec::new();
    let mut power = b.clone(); // B^{m+1}
    let mut m = 0;
    // [s^{-1}] g_k s^k s^{-r(m+1)} B^{m+1}(u) needs index k − r(m+1) + 1 ≥ 0.
    while r * (m + 1) <= dg + 1 {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..=dg {
            let shift = k + 1;
            if shift >= r * (m + 1) {
                acc += g.coeff(k) * power[shift - r * (m + 1)];
            }
        }
        out.push(acc);
        power = series_mul(&power, &b, len);
        m += 1;
    }
    Ok(CPoly::new(out))
}

fn series_inverse(a: &[C64], len: usize) -> Vec<C64> {
    let mut b = vec![C64::new(0.0, 0.0); len];
    b[0] = a[0].inv();
    for k in 1..len {
        let s: C64 = (1..=k).map(|j| a.get(j).copied().unwrap_or_default() * b[k - j]).sum();
        b[k] = -s * b[0];
    }
    b
}

fn series_mul(a: &[C64], b: &[C64], len: usize) -> Vec<C64> {
    (0..len).map(|k| (0..=k).map(|j| a[j] * b[k - j]).sum()).collect()
}

/// The two residue kernels `(g_0, g_1)` with `p = p_0·res(p g_0/(z−Z)) + p_1·res(p g_1/(z−Z))`.
fn residue_kernels(spec: &ClassicalFamilySpec) -> (CPoly, CPoly) {
    let c = spec.c;
    match spec.kind {
        ClassicalKind::Hermite => (CPoly::from_real(&[-2.0 * c, 1.0]), CPoly::from_real(&[0.5])),
        ClassicalKind::Laguerre => (
            CPoly::from_real(&[1.0 + spec.alpha - 2.0 * c, 1.0]),
            CPoly::from_real(&[-1.0]),
        ),
    }
}

/// `P_j` by residue extraction.
pub fn residue_matrix_poly(spec: &ClassicalFamilySpec, j: usize) -> Result<MatPoly> {
    let cover = spec.cover();
    let (g0, g1) = residue_kernels(spec);
    let mut entries = Vec::with_capacity(4);
    for a in 0..2 {
        let p = classical_scalar(spec.kind, 2 * j + a, spec.alpha);
        entries.push(residue_at_infinity(&(&p * &g0), cover.z_poly())?);
        entries.push(residue_at_infinity(&(&p * &g1), cover.z_poly())?);
    }
    Ok(MatPoly::from_entries(2, entries))
}

#[derive(Clone, Debug, Serialize)]
pub struct MopFamily {
    pub spec: ClassicalFamilySpec,
    pub p: Vec<MatPoly>,
    /// Diagonal of each `H_j`.
    pub norms: Vec<[f64; 2]>,
    /// Largest coefficient gap between the two constructions, relative to coefficient size.
    pub projection_defect: f64,
}

pub fn classical_mop_family(spec: &ClassicalFamilySpec) -> Result<MopFamily> {
    spec.validate()?;
    let cover = spec.cover();
    let basis = spec.basis();
    let mut p = Vec::with_capacity(spec.n);
    let mut norms = Vec::with_capacity(spec.n);
    let mut defect = 0.0f64;
    for j in 0..spec.n {
        let scalars = [
            classical_scalar(spec.kind, 2 * j, spec.alpha),
            classical_scalar(spec.kind, 2 * j + 1, spec.alpha),
        ];
        let tower = scalar_to_matrix_poly(&cover, &basis, &scalars)?;
        let residue = residue_matrix_poly(spec, j)?;
        let d = tower.distance(&residue) / tower.max_abs().max(1.0);
        if d > PROJECTION_TOL {
            return Err(Error::ProjectionMismatch { value: d });
        }
        defect = defect.max(d);
        let h = spec.norm(j);
        norms.push([h[(0, 0)].re, h[(1, 1)].re]);
        p.push(tower);
    }
    Ok(MopFamily {
        spec: *spec,
        p,
        norms,
        projection_defect: defect,
    })
}

/// Closed-form weight matrix on the real support.
///
/// Hermite:
/// `(cosh(2c√z)/√z·[[1, 2c], [2c, 4c²+4z]] − 2 sinh(2c√z)·[[0, 1], [1, 4c]]) e^{−z−c²}`.
/// Laguerre: `[[1, L], [L, L²]]·(c+√z)^α e^{−c−√z}/(2√z)` with `L = α+1−c−√z`.
pub fn classical_weight(spec: &ClassicalFamilySpec, z: f64) -> Result<DMatrix<C64>> {
    spec.validate()?;
    let c = spec.c;
    if !(z > spec.support_start()) {
        return Err(Error::OffSupport);
    }
    let s = z.sqrt();
    let m = match spec.kind {
        ClassicalKind::Hermite => {
            let ch = (2.0 * c * s).cosh() / s;
            let sh = 2.0 * (2.0 * c * s).sinh();
            let e = (-z - c * c).exp();
            [
                ch * e,
                (ch * 2.0 * c - sh) * e,
                (ch * 2.0 * c - sh) * e,
                (ch * (4.0 * c * c + 4.0 * z) - sh * 4.0 * c) * e,
            ]
        }
        ClassicalKind::Laguerre => {
            let l = spec.alpha + 1.0 - c - s;
            let f = (c + s).powf(spec.alpha) * (-c - s).exp() / (2.0 * s);
            [f, l * f, l * f, l * l * f]
        }
    };
    Ok(DMatrix::from_row_slice(2, 2, &m.map(|v| C64::new(v, 0.0))))
}

/// The same weight assembled from the cover: `Σ_b σ_b p_a p_c Y / Z′` over sheets.
pub fn cover_weight(spec: &ClassicalFamilySpec, z: C64) -> Result<DMatrix<C64>> {
    weight_matrix(
        &spec.cover(),
        &spec.basis(),
        |t| spec.scalar_weight(t),
        spec.sheet_measure(),
        z,
    )
}

/// `ΦΦᵗ`, which is constant in `z`.
pub fn phi_phi_constant(spec: &ClassicalFamilySpec, z: C64) -> Result<DMatrix<C64>> {
    let phi = build_phi(&spec.cover(), &spec.basis(), z)?;
    Ok(&phi * phi.transpose())
}

/// The expected value of [`phi_phi_constant`].
pub fn phi_phi_expected(spec: &ClassicalFamilySpec) -> DMatrix<C64> {
    let c = spec.c;
    let v = match spec.kind {
        ClassicalKind::Hermite => [0.0, 2.0, 2.0, 8.0 * c],
        ClassicalKind::Laguerre => [0.0, -1.0, -1.0, 2.0 * (c - 1.0 - spec.alpha)],
    };
    DMatrix::from_row_slice(2, 2, &v.map(|x| C64::new(x, 0.0)))
}

/// Ray from the start of the support, in the variable `q = √(z − start)`.
pub fn z_ray(spec: &ClassicalFamilySpec, nodes: usize) -> Result<ContourSpec> {
    let decay = match spec.kind {
        ClassicalKind::Hermite => 1.0,
        // The weight only decays like e^{−√z}; a slow map keeps the
        // polynomial growth resolved up to degree 3.
        ClassicalKind::Laguerre => 0.1,
    };
    make_contour(
        ContourKind::sqrt_ray(C64::new(spec.support_start(), 0.0), C64::new(1.0, 0.0), decay),
        nodes,
    )
}

/// `∫ P_j W P_kᵗ dz` over the `z`-support.
pub fn gram_z(family: &MopFamily, j: usize, k: usize, contour: &ContourSpec) -> Result<DMatrix<C64>> {
    let spec = family.spec;
    let (pj, pk) = (&family.p[j], &family.p[k]);
    integrate_matrix(
        |z| {
            let w = classical_weight(&spec, z.re).unwrap_or_else(|_| DMatrix::zeros(2, 2));
            pj.eval(z) * w * pk.eval(z).transpose()
        },
        contour,
    )
}

/// `∫ P_j W P_kᵗ dz` pulled back to the `t`-plane, where row `a` of `P_j(Z(t))·(p_0, p_1)ᵗ` is `p_{2j+a}(t)`.
pub fn gram_t(family: &MopFamily, j: usize, k: usize, nodes: usize) -> Result<DMatrix<C64>> {
    let spec = family.spec;
    let contour = match spec.kind {
        ClassicalKind::Hermite => make_contour(ContourKind::segment(C64::new(-10.0, 0.0), C64::new(10.0, 0.0)), nodes)?,
        ClassicalKind::Laguerre => make_contour(
            ContourKind::sqrt_ray(C64::new(0.0, 0.0), C64::new(1.0, 0.0), 0.5),
            nodes,
        )?,
    };
    let cover = spec.cover();
    let basis = spec.basis();
    let (pj, pk) = (&family.p[j], &family.p[k]);
    integrate_matrix(
        |t| {
            let z = cover.eval(t);
            let b = nalgebra::DVector::from_fn(2, |a, _| basis.polys()[a].eval(t));
            let u = pj.eval(z) * &b;
            let v = pk.eval(z) * &b;
            &u * v.transpose() * spec.scalar_weight(t)
        },
        &contour,
    )
}

/// Hermite `P_1..P_3` as printed in closed form, for golden comparisons.
pub fn printed_hermite(j: usize, c: f64) -> Option<MatPoly> {
    let c2 = c * c;
    let c3 = c2 * c;
    let c4 = c2 * c2;
    let c5 = c4 * c;
    let c6 = c3 * c3;
    let c7 = c6 * c;
    let rows: [Vec<f64>; 4] = match j {
        0 => [vec![1.0], vec![], vec![], vec![1.0]],
        1 => [
            vec![-4.0 * c2 - 2.0, 4.0],
            vec![4.0 * c],
            vec![-16.0 * c3, 16.0 * c],
            vec![12.0 * c2 - 6.0, 4.0],
        ],
        2 => [
            vec![-48.0 * c4 + 48.0 * c2 + 12.0, 32.0 * c2 - 48.0, 16.0],
            vec![32.0 * c3 - 48.0 * c, 32.0 * c],
            vec![-128.0 * c5 + 320.0 * c3, -320.0 * c, 128.0 * c],
            vec![80.0 * c4 - 240.0 * c2 + 60.0, 160.0 * c2 - 80.0, 16.0],
        ],
        3 => [
            vec![
                -320.0 * c6 + 1440.0 * c4 - 720.0 * c2 - 120.0,
                -320.0 * c4 - 960.0 * c2 + 720.0,
                576.0 * c2 - 480.0,
                64.0,
            ],
            vec![192.0 * c5 - 960.0 * c3 + 720.0 * c, 640.0 * c3 - 960.0 * c, 192.0 * c],
            vec![
                -768.0 * c7 + 5376.0 * c5 - 6720.0 * c3,
                -1792.0 * c5 + 6720.0 * c,
                1792.0 * c3 - 5376.0 * c,
                768.0 * c,
            ],
            vec![
                448.0 * c6 - 3360.0 * c4 + 5040.0 * c2 - 840.0,
                2240.0 * c4 - 6720.0 * c2 + 1680.0,
                1344.0 * c2 - 672.0,
                64.0,
            ],
        ],
        _ => return None,
    };
    Some(MatPoly::from_entries(
        2,
        rows.iter().map(|r| CPoly::from_real(r)).collect(),
    ))
}

/// Entrywise relative error of evaluated matrices, `max |A−B| / max |B|` per entry with a floor.
pub fn entrywise_relative(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm() / y.norm().max(1e-14 * scale))
        .fold(0.0, f64::max)
}
