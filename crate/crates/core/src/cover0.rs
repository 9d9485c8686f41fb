//! Polynomial covers `z = Z(t)` of the sphere.
//!
//! A cover carries `r = deg Z` sheets over every non-critical `z`. Scalar
//! sections `p(t)√dt` are pushed down to `r`-vectors over the `z`-plane, which
//! gives the Φ matrix, the matrix weight, and the projection of scalar
//! polynomials onto matrix polynomials.

use std::cmp::Ordering;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::polyalg::{roots, tower_decompose, CPoly, MatPoly};
use crate::quadcontour::{integrate, make_contour, ContourKind};
use crate::C64;

#[derive(Clone, Debug)]
pub struct CoverG0 {
    z: CPoly,
    dz: CPoly,
    critical_points: Vec<C64>,
    critical_values: Vec<C64>,
}

impl CoverG0 {
    /// `z` must be monic of degree at least 2.
    pub fn new(z: CPoly) -> Result<Self> {
        let r = z.degree().ok_or(Error::CoverDegree)?;
        if r < 1 {
            return Err(Error::CoverDegree);
        }
        if r < 2 {
            return Err(Error::InvalidArgument("a cover needs degree ≥ 2".into()));
        }
        if (z.leading() - C64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(Error::InvalidArgument("cover polynomial must be monic".into()));
        }
        let dz = z.derivative();
        let critical_points = roots(&dz);
        let critical_values = critical_points.iter().map(|&t| z.eval(t)).collect();
        Ok(CoverG0 {
            z,
            dz,
            critical_points,
            critical_values,
        })
    }

    /// `Z(t) = (t - c)²`, the cover used by the classical fixtures.
    pub fn shifted_square(c: f64) -> Self {
        Self::new(CPoly::from_real(&[c * c, -2.0 * c, 1.0])).expect("monic quadratic")
    }

    pub fn degree(&self) -> usize {
        self.z.degree().unwrap_or(0)
    }

    pub fn z_poly(&self) -> &CPoly {
        &self.z
    }

    pub fn eval(&self, t: C64) -> C64 {
        self.z.eval(t)
    }

    pub fn derivative_at(&self, t: C64) -> C64 {
        self.dz.eval(t)
    }

    pub fn critical_points(&self) -> &[C64] {
        &self.critical_points
    }

    pub fn critical_values(&self) -> &[C64] {
        &self.critical_values
    }

    /// The `r` preimages of `z`, sorted by real part then imaginary part.
    pub fn sheets(&self, z: C64) -> Vec<C64> {
        let shifted = &self.z - &CPoly::constant(z);
        let mut t = roots(&shifted);
        t.sort_by(|a, b| lex(*a, *b));
        t
    }

    /// Sheets along a path, continued by nearest-neighbour matching from the
    /// sorted labels at the first point.
    pub fn track_sheets(&self, path: &[C64]) -> Vec<Vec<C64>> {
        let mut out: Vec<Vec<C64>> = Vec::with_capacity(path.len());
        for &z in path {
            let fresh = self.sheets(z);
            let Some(prev) = out.last() else {
                out.push(fresh);
                continue;
            };
            let mut used = vec![false; fresh.len()];
            let mut next = Vec::with_capacity(fresh.len());
            for p in prev {
                let (k, _) = fresh
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| !used[*k])
                    .map(|(k, t)| (k, (t - p).norm()))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .expect("same number of roots");
                used[k] = true;
                next.push(fresh[k]);
            }
            out.push(next);
        }
        out
    }

    /// Distance from `z` to the nearest critical value.
    pub fn distance_to_critical(&self, z: C64) -> f64 {
        self.critical_values
            .iter()
            .map(|c| (z - c).norm())
            .fold(f64::INFINITY, f64::min)
    }

    fn check_regular(&self, z: C64, sheets: &[C64]) -> Result<()> {
        let scale = 1.0 + z.norm();
        let min_dz = sheets
            .iter()
            .map(|&t| self.dz.eval(t).norm())
            .fold(f64::INFINITY, f64::min);
        if self.distance_to_critical(z) < 1e-10 * scale || min_dz < 1e-8 * scale.sqrt() {
            return Err(Error::BranchPoint);
        }
        Ok(())
    }
}

fn lex(a: C64, b: C64) -> Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

/// The polynomials `p_0, …, p_{r-1}` behind the sections `p_ℓ(t)√dt`.
#[derive(Clone, Debug)]
pub struct SectionBasisG0 {
    polys: Vec<CPoly>,
}

impl SectionBasisG0 {
    pub fn new(polys: Vec<CPoly>) -> Result<Self> {
        let r = polys.len();
        let b = coefficient_matrix(&polys, r);
        if polys.iter().any(|p| p.degree().is_some_and(|d| d >= r)) || !invertible(&b) {
            return Err(Error::NotSpanning);
        }
        Ok(SectionBasisG0 { polys })
    }

    /// `1, t, …, t^{r-1}`.
    pub fn monomials(r: usize) -> Self {
        SectionBasisG0 {
            polys: (0..r).map(CPoly::monomial).collect(),
        }
    }

    pub fn polys(&self) -> &[CPoly] {
        &self.polys
    }

    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }
}

fn coefficient_matrix(polys: &[CPoly], r: usize) -> DMatrix<C64> {
    DMatrix::from_fn(polys.len(), r, |l, k| polys[l].coeff(k))
}

fn invertible(m: &DMatrix<C64>) -> bool {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return false;
    }
    let scale = m.iter().map(|c| c.norm()).fold(0.0, f64::max);
    m.determinant().norm() > 1e-12 * scale.powi(m.nrows() as i32)
}

/// How the scalar measure on the `t`-contour is carried by each sheet.
///
/// A sheet's contribution to the matrix weight is `σ(t_b)·Y(t_b)/Z′(t_b)`.
/// `σ` is the orientation of the contour's image relative to the positive
/// `z`-direction, or zero where the sheet carries no measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SheetMeasure {
    /// `σ = 1` on every sheet: the unsigned push-forward.
    Uniform,
    /// The real line: `σ = sign Re Z′(t)`.
    RealLine,
    /// The half-line `t ≥ lower`: as [`SheetMeasure::RealLine`], zero below `lower`.
    RealHalfLine { lower: f64 },
}

impl SheetMeasure {
    pub fn factor(&self, t: C64, dz: C64) -> f64 {
        let sign = if dz.re >= 0.0 { 1.0 } else { -1.0 };
        match *self {
            SheetMeasure::Uniform => 1.0,
            SheetMeasure::RealLine => sign,
            SheetMeasure::RealHalfLine { lower } => {
                if t.re >= lower - 1e-12 * (1.0 + lower.abs()) {
                    sign
                } else {
                    0.0
                }
            }
        }
    }
}

/// `W(z)_{ac} = Σ_b σ_b p_a(t_b) p_c(t_b) Y(t_b) / Z′(t_b)`.
pub fn weight_matrix<Y>(
    cover: &CoverG0,
    basis: &SectionBasisG0,
    y: Y,
    measure: SheetMeasure,
    z: C64,
) -> Result<DMatrix<C64>>
where
    Y: Fn(C64) -> C64,
{
    let sheets = cover.sheets(z);
    cover.check_regular(z, &sheets)?;
    let r = basis.len();
    let mut w = DMatrix::zeros(r, r);
    for &t in &sheets {
        let dz = cover.derivative_at(t);
        let sigma = measure.factor(t, dz);
        if sigma == 0.0 {
            continue;
        }
        let m = y(t) * sigma / dz;
        let p: Vec<C64> = basis.polys.iter().map(|q| q.eval(t)).collect();
        for a in 0..r {
            for c in 0..r {
                w[(a, c)] += p[a] * p[c] * m;
            }
        }
    }
    Ok(w)
}

/// `Φ_{ab} = p_a(t_b)/√Z′(t_b)` with principal square roots, sheets in sorted order.
///
/// Φ itself depends on the branch of the square root; `ΦΦᵗ` and the weight do not.
pub fn build_phi(cover: &CoverG0, basis: &SectionBasisG0, z: C64) -> Result<DMatrix<C64>> {
    let sheets = cover.sheets(z);
    cover.check_regular(z, &sheets)?;
    Ok(phi_on_sheets(cover, basis, &sheets))
}

fn phi_on_sheets(cover: &CoverG0, basis: &SectionBasisG0, sheets: &[C64]) -> DMatrix<C64> {
    let r = basis.len();
    DMatrix::from_fn(r, sheets.len(), |a, b| {
        basis.polys[a].eval(sheets[b]) / cover.derivative_at(sheets[b]).sqrt()
    })
}

/// Rows of the matrix polynomial whose pairing with the basis reproduces
/// `p_{kr+a}` for `a < r`: `p_{kr+a}(t) = Σ_ℓ P_{aℓ}(Z(t)) p_ℓ(t)`.
pub fn scalar_to_matrix_poly(cover: &CoverG0, basis: &SectionBasisG0, scalar_polys: &[CPoly]) -> Result<MatPoly> {
    let r = basis.len();
    if scalar_polys.len() != r {
        return Err(Error::InvalidArgument(format!(
            "expected {r} scalar polynomials, got {}",
            scalar_polys.len()
        )));
    }
    let bt = coefficient_matrix(&basis.polys, r).transpose();
    let lu = bt.clone().lu();
    if !invertible(&bt) {
        return Err(Error::NotSpanning);
    }
    let mut entries = vec![CPoly::zero(); r * r];
    for (a, p) in scalar_polys.iter().enumerate() {
        let blocks = tower_decompose(p, cover.z_poly())?;
        let mut cols: Vec<Vec<C64>> = vec![Vec::with_capacity(blocks.len()); r];
        for block in &blocks {
            let rhs = nalgebra::DVector::from_fn(r, |k, _| block.coeff(k));
            let f = lu.solve(&rhs).ok_or(Error::NotSpanning)?;
            for (l, col) in cols.iter_mut().enumerate() {
                col.push(f[l]);
            }
        }
        for (l, col) in cols.into_iter().enumerate() {
            entries[a * r + l] = CPoly::new(col);
        }
    }
    Ok(MatPoly::from_entries(r, entries))
}

/// Numerical evidence that `det[ψ_j(z^{(a)})]/det Φ(z)` is analytic at a critical value.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticalRatioReport {
    /// `max |F|` on the circle.
    pub max_abs: f64,
    /// `|F(end) - F(start)| / max|F|` after continuing the sheets once around.
    pub defect: f64,
    /// Largest negative-power Laurent coefficient of `F` at the centre, relative to `max|F|`.
    pub laurent_defect: f64,
}

/// Evaluates the determinant ratio on a circle around the critical value `c`.
///
/// Sections are given by their coefficient functions of `t`; the common `√dt`
/// cancels in the ratio.
pub fn critical_ratio_check<S>(
    cover: &CoverG0,
    basis: &SectionBasisG0,
    sections: &[S],
    c: C64,
    radius: f64,
    nodes: usize,
) -> Result<CriticalRatioReport>
where
    S: Fn(C64) -> C64 + Sync,
{
    let r = basis.len();
    if sections.len() != r {
        return Err(Error::InvalidArgument(format!(
            "expected {r} sections, got {}",
            sections.len()
        )));
    }
    let circle = make_contour(ContourKind::circle(c, radius), nodes)?;
    let mut path = circle.nodes.clone();
    path.push(circle.nodes[0]);
    let tracked = cover.track_sheets(&path);
    let ratio = |sheets: &[C64]| -> C64 {
        let num = DMatrix::from_fn(r, r, |a, b| sections[a](sheets[b]));
        let den = DMatrix::from_fn(r, r, |a, b| basis.polys[a].eval(sheets[b]));
        num.determinant() / den.determinant()
    };
    let values: Vec<C64> = tracked.iter().map(|s| ratio(s)).collect();
    let max_abs = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let defect = (values[values.len() - 1] - values[0]).norm() / max_abs.max(f64::MIN_POSITIVE);
    let lookup = |z: C64| -> C64 {
        let k = circle.nodes.iter().position(|n| *n == z).expect("node of the circle");
        values[k]
    };
    let mut laurent = 0.0f64;
    for k in 1..=3 {
        let coeff =
            integrate(|z| lookup(z) * (z - c).powi(k - 1), &circle)? / C64::new(0.0, 2.0 * std::f64::consts::PI);
        laurent = laurent.max(coeff.norm() / radius.powi(k));
    }
    Ok(CriticalRatioReport {
        max_abs,
        defect,
        laurent_defect: laurent / max_abs.max(f64::MIN_POSITIVE),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn hermite_basis() -> SectionBasisG0 {
        SectionBasisG0::new(vec![CPoly::one(), CPoly::from_real(&[0.0, 2.0])]).unwrap()
    }

    #[test]
    fn sheets_examples() {
        let sq = CoverG0::new(CPoly::monomial(2)).unwrap();
        let s = sq.sheets(c(4.0, 0.0));
        assert!((s[0] - c(-2.0, 0.0)).norm() < 1e-14 && (s[1] - c(2.0, 0.0)).norm() < 1e-14);

        let cc = 0.3;
        let cov = CoverG0::shifted_square(cc);
        let z = c(1.7, 0.0);
        let s = cov.sheets(z);
        assert!((s[1] - (cc + z.sqrt())).norm() < 1e-12);
        assert!((s[0] - (cc - z.sqrt())).norm() < 1e-12);

        let cubic = CoverG0::new(CPoly::from_real(&[0.0, 1.0, 0.0, 1.0])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let z = c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            for t in cubic.sheets(z) {
                assert!((cubic.eval(t) - z).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn tracking_follows_continuation() {
        let sq = CoverG0::new(CPoly::monomial(2)).unwrap();
        // Once around the branch point swaps the sheets.
        let path: Vec<C64> = (0..=64)
            .map(|k| C64::from_polar(1.0, std::f64::consts::TAU * k as f64 / 64.0))
            .collect();
        let tr = sq.track_sheets(&path);
        assert!((tr[64][0] - tr[0][1]).norm() < 1e-12);
    }

    fn hermite_closed_form(cc: f64, z: f64) -> DMatrix<C64> {
        let s = z.sqrt();
        let e = (-z - cc * cc).exp();
        let ch = (2.0 * cc * s).cosh() / s;
        let sh = 2.0 * (2.0 * cc * s).sinh();
        DMatrix::from_row_slice(
            2,
            2,
            &[
                c(ch * e, 0.0),
                c((2.0 * cc * ch - sh) * e, 0.0),
                c((2.0 * cc * ch - sh) * e, 0.0),
                c(((4.0 * cc * cc + 4.0 * z) * ch - 4.0 * cc * sh) * e, 0.0),
            ],
        )
    }

    #[test]
    fn hermite_weight() {
        let gauss = |t: C64| (-t * t).exp();
        let cov = CoverG0::shifted_square(0.0);
        let w = weight_matrix(&cov, &hermite_basis(), gauss, SheetMeasure::RealLine, c(2.0, 0.0)).unwrap();
        let want = [(-2.0f64).exp() / 2f64.sqrt(), 4.0 * (-2.0f64).exp() * 2f64.sqrt()];
        assert!((w[(0, 0)].re - want[0]).abs() < 1e-14);
        assert!((w[(1, 1)].re - want[1]).abs() < 1e-13);
        assert!(w[(0, 1)].norm() < 1e-15);

        let cov = CoverG0::shifted_square(0.7);
        for z in [0.3, 1.1, 2.5, 4.0] {
            let w = weight_matrix(&cov, &hermite_basis(), gauss, SheetMeasure::RealLine, c(z, 0.0)).unwrap();
            let want = hermite_closed_form(0.7, z);
            assert!((&w - &want).norm() < 1e-10 * want.norm(), "z={z}");
            assert!((&w - w.transpose()).norm() < 1e-14 * want.norm());
        }
    }

    #[test]
    fn weight_is_branch_independent() {
        let cov = CoverG0::new(CPoly::from_real(&[0.2, 1.0, 0.0, 1.0])).unwrap();
        let basis = SectionBasisG0::monomials(3);
        let z = c(0.7, 0.4);
        let a = weight_matrix(&cov, &basis, |t| t.exp(), SheetMeasure::Uniform, z).unwrap();
        let sheets = cov.sheets(z);
        let mut b = DMatrix::zeros(3, 3);
        for &t in sheets.iter().rev() {
            let p = [c(1.0, 0.0), t, t * t];
            for i in 0..3 {
                for j in 0..3 {
                    b[(i, j)] += p[i] * p[j] * t.exp() / cov.derivative_at(t);
                }
            }
        }
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn phi_phi_transpose_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for cc in [0.0, 0.5, -1.3] {
            let cov = CoverG0::shifted_square(cc);
            let want = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(8.0 * cc, 0.0)]);
            for _ in 0..20 {
                let z = c(rng.gen_range(0.1..5.0), rng.gen_range(-2.0..2.0));
                let phi = build_phi(&cov, &hermite_basis(), z).unwrap();
                assert!((&phi * phi.transpose() - &want).norm() < 1e-12);
            }
        }
        // Z = t²: basis {1, t} sums to σ_x, basis {1, 2t} to 2σ_x.
        let sq = CoverG0::new(CPoly::monomial(2)).unwrap();
        let phi = build_phi(&sq, &SectionBasisG0::monomials(2), c(1.3, 0.2)).unwrap();
        let sx = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        assert!((&phi * phi.transpose() - &sx).norm() < 1e-12);
        let phi = build_phi(&sq, &hermite_basis(), c(1.3, 0.2)).unwrap();
        assert!((&phi * phi.transpose() - sx * c(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn branch_point_is_rejected() {
        let cov = CoverG0::shifted_square(0.4);
        assert_eq!(build_phi(&cov, &hermite_basis(), c(0.0, 0.0)), Err(Error::BranchPoint));
        assert!(matches!(
            weight_matrix(&cov, &hermite_basis(), |t| t, SheetMeasure::RealLine, c(0.0, 0.0)),
            Err(Error::BranchPoint)
        ));
    }

    #[test]
    fn projection_hermite_p1() {
        let h2 = CPoly::from_real(&[-2.0, 0.0, 4.0]);
        let h3 = CPoly::from_real(&[0.0, -12.0, 0.0, 8.0]);
        for cc in [0.0, 0.5, 1.0] {
            let cov = CoverG0::shifted_square(cc);
            let p1 = scalar_to_matrix_poly(&cov, &hermite_basis(), &[h2.clone(), h3.clone()]).unwrap();
            let want = [
                CPoly::from_real(&[-4.0 * cc * cc - 2.0, 4.0]),
                CPoly::from_real(&[4.0 * cc]),
                CPoly::from_real(&[-16.0 * cc * cc * cc, 16.0 * cc]),
                CPoly::from_real(&[12.0 * cc * cc - 6.0, 4.0]),
            ];
            for (k, w) in want.iter().enumerate() {
                assert!(p1.entry(k / 2, k % 2).distance(w) < 1e-10, "c={cc} k={k}");
            }
            assert!(p1.leading_matrix().determinant().norm() > 1e-10);
        }
        let cov = CoverG0::shifted_square(0.3);
        let p0 = scalar_to_matrix_poly(&cov, &hermite_basis(), &[CPoly::one(), CPoly::from_real(&[0.0, 2.0])]).unwrap();
        assert!(p0.distance(&MatPoly::identity(2)) < 1e-14);
    }

    #[test]
    fn projection_reconstructs_scalar() {
        let cov = CoverG0::new(CPoly::from_real(&[0.5, -1.0, 0.0, 1.0])).unwrap();
        let basis = SectionBasisG0::new(vec![
            CPoly::one(),
            CPoly::from_real(&[1.0, 1.0]),
            CPoly::from_real(&[0.0, -1.0, 2.0]),
        ])
        .unwrap();
        let polys: Vec<CPoly> = (6..9)
            .map(|d| CPoly::new((0..=d).map(|k| c((k as f64).sin(), (k as f64 * 0.3).cos())).collect()))
            .collect();
        let m = scalar_to_matrix_poly(&cov, &basis, &polys).unwrap();
        for (a, p) in polys.iter().enumerate() {
            let mut back = CPoly::zero();
            for l in 0..3 {
                let composed = crate::polyalg::tower_compose(
                    &m.entry(a, l)
                        .coeffs()
                        .iter()
                        .map(|&x| CPoly::constant(x))
                        .collect::<Vec<_>>(),
                    cov.z_poly(),
                );
                back = &back + &(&composed * &basis.polys()[l]);
            }
            assert!(back.distance(p) < 1e-10 * (1.0 + p.max_abs()));
        }
        assert!(m.leading_matrix().determinant().norm() > 1e-10);
    }

    #[test]
    fn basis_must_span() {
        assert_eq!(
            SectionBasisG0::new(vec![CPoly::one(), CPoly::from_real(&[2.0])]).unwrap_err(),
            Error::NotSpanning
        );
    }

    #[test]
    fn critical_ratio() {
        let cov = CoverG0::new(CPoly::from_real(&[0.0, -3.0, 0.0, 1.0])).unwrap();
        let basis = SectionBasisG0::monomials(3);
        let crit = cov.critical_values()[0];

        let same: Vec<Box<dyn Fn(C64) -> C64 + Sync>> =
            vec![Box::new(|_| c(1.0, 0.0)), Box::new(|t| t), Box::new(|t| t * t)];
        let rep = critical_ratio_check(&cov, &basis, &same, crit, 0.3, 128).unwrap();
        assert!((rep.max_abs - 1.0).abs() < 1e-10 && rep.defect < 1e-10);

        let g = std::sync::Arc::new(move |t: C64| {
            let w = t * t * t - 3.0 * t;
            w * w + 1.0
        });
        let (g0, g1, g2) = (g.clone(), g.clone(), g);
        let scaled: Vec<Box<dyn Fn(C64) -> C64 + Sync>> = vec![
            Box::new(move |t| g0(t)),
            Box::new(move |t| g1(t) * t),
            Box::new(move |t| g2(t) * t * t),
        ];
        let rep = critical_ratio_check(&cov, &basis, &scaled, crit, 0.3, 128).unwrap();
        // F = g(z)^3 on the circle; its max is attained where |g| is largest.
        let want = (0..128)
            .map(|k| {
                let w = crit + C64::from_polar(0.3, std::f64::consts::TAU * k as f64 / 128.0);
                (w * w + 1.0).powu(3).norm()
            })
            .fold(0.0, f64::max);
        assert!((rep.max_abs - want).abs() < 1e-9 * want);

        let pole = c(5.0, 1.0);
        let off: Vec<Box<dyn Fn(C64) -> C64 + Sync>> = vec![
            Box::new(move |t| (t - pole).inv()),
            Box::new(|t| t + 0.5),
            Box::new(|t| t * t * t),
        ];
        let rep = critical_ratio_check(&cov, &basis, &off, crit, 0.3, 128).unwrap();
        assert!(rep.max_abs.is_finite() && rep.defect < 1e-8 && rep.laurent_defect < 1e-8);
    }
}
