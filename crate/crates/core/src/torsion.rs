//! Finite matrix orthogonality on an elliptic curve from `2R`-torsion points.
//!
//! For a label `(a, b)` put `q = (b + aτ)/(2R)` and
//! `Y(v) = (e^{2iπ(a/R)v} θ₁(v+q)/θ₁(v−q))^R`, an elliptic function with a
//! pole of order `R` at `q` and a zero of order `R` at `−q`. More generally
//! `Y(v) = e^{2iπav} Π_j θ₁(v+v_j)/θ₁(v−v_j)` with `Σ v_j = (b + aτ)/2`.
//!
//! `√W = F diag(Y(v), Y(−v)) F^{-1}` with `F = [φ_a(±v)]` is a rational
//! matrix of `z`; the weight used for the orthogonality checks is `W = (√W)²`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::f64::consts::PI;

use crate::elliptic1::{wp_inverse, Character, EllipticData, Sheet, Szego};
use crate::error::{Error, Result};
use crate::par;
use crate::polyalg::{fit_polynomial, CPoly, MatPoly};
use crate::quadcontour::{make_contour, ContourKind, ContourSpec, DEFAULT_CIRCLE_NODES};
use crate::C64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Relative fit residual above which a sampled matrix is declared non-polynomial.
pub const PR_FIT_TOL: f64 = 1e-8;
pub const PR_MINUS1_FIT_TOL: f64 = 1e-7;
/// Singular values below this fraction of the largest count as zero.
pub const RANK_REL: f64 = 1e-9;

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TorsionPoint {
    pub a: i64,
    pub b: i64,
    /// `(b + aτ)/(2R)`.
    pub v: C64,
    pub z: C64,
    /// Weierstraß `y` at `v`.
    pub y: C64,
    /// `gcd(a, b, 2R) = 1`.
    pub prime: bool,
}

/// The `2R² − 2` classes of `2R`-torsion points that are not half-periods,
/// modulo `v ↦ −v`.
pub fn torsion_points(curve: &EllipticData, r: usize) -> Result<Vec<TorsionPoint>> {
    if r < 2 {
        return Err(Error::InvalidArgument(format!("R must be ≥ 2, got {r}")));
    }
    let n = 2 * r as i64;
    let ri = r as i64;
    let mut out = Vec::with_capacity(2 * r * r - 2);
    for a in 0..n {
        for b in 0..n {
            if a % ri == 0 && b % ri == 0 {
                continue;
            }
            let (na, nb) = ((n - a) % n, (n - b) % n);
            if (na, nb) < (a, b) {
                continue;
            }
            let v = (C64::new(b as f64, 0.0) + curve.tau * a as f64) / n as f64;
            let (z, y) = curve.point(v)?;
            out.push(TorsionPoint {
                a,
                b,
                v,
                z,
                y,
                prime: gcd(gcd(a, b), n) == 1,
            });
        }
    }
    Ok(out)
}

/// Quarter-period `z`-values of `y² = z(z + α²)(z + α^{−2})` by halving the
/// three 2-torsion points: `e ± √((e − e′)(e − e″))`.
pub fn dk_quarter_periods(alpha: f64) -> Vec<C64> {
    let e = dk_branch_points(alpha);
    let mut out = Vec::with_capacity(6);
    for k in 0..3 {
        let s = ((e[k] - e[(k + 1) % 3]) * (e[k] - e[(k + 2) % 3])).sqrt();
        out.push(e[k] + s);
        out.push(e[k] - s);
    }
    out
}

pub fn dk_branch_points(alpha: f64) -> [C64; 3] {
    [
        C64::new(0.0, 0.0),
        C64::new(-alpha * alpha, 0.0),
        C64::new(-1.0 / (alpha * alpha), 0.0),
    ]
}

/// Weight data: curve, pole positions `v_j` and the character used for `Φ`.
#[derive(Clone, Debug)]
pub struct TorsionSpec {
    pub curve: EllipticData,
    pub r: usize,
    pub a: i64,
    pub b: i64,
    /// `v_j`, listed with multiplicity.
    pub poles: Vec<C64>,
    pub chi: Character,
    szego: Szego,
}

impl TorsionSpec {
    /// `R` coincident poles at `(b + aτ)/(2R)`.
    pub fn from_label(curve: &EllipticData, r: usize, a: i64, b: i64) -> Result<Self> {
        if r < 2 {
            return Err(Error::InvalidArgument(format!("R must be ≥ 2, got {r}")));
        }
        let ri = r as i64;
        if a.rem_euclid(ri) == 0 && b.rem_euclid(ri) == 0 {
            return Err(Error::InvalidArgument("label is a period or half-period".into()));
        }
        let q = (C64::new(b as f64, 0.0) + curve.tau * a as f64) / (2 * r) as f64;
        Self::build(
            curve,
            a,
            b,
            vec![q; r],
            Character::new(a as f64 / r as f64, -(b as f64) / r as f64),
        )
    }

    /// Distinct poles `v_j` with `Σ v_j = (b + aτ)/2`.
    pub fn general(curve: &EllipticData, a: i64, b: i64, poles: Vec<C64>) -> Result<Self> {
        let r = poles.len();
        if r < 2 {
            return Err(Error::InvalidArgument("need at least two poles".into()));
        }
        let want = (C64::new(b as f64, 0.0) + curve.tau * a as f64) / 2.0;
        let sum: C64 = poles.iter().sum();
        if (sum - want).norm() > 1e-10 * (1.0 + want.norm()) {
            return Err(Error::InvalidArgument(format!(
                "pole positions sum to {sum}, expected {want}"
            )));
        }
        Self::build(
            curve,
            a,
            b,
            poles,
            Character::new(a as f64 / r as f64, -(b as f64) / r as f64),
        )
    }

    fn build(curve: &EllipticData, a: i64, b: i64, poles: Vec<C64>, chi: Character) -> Result<Self> {
        let lat = &curve.lattice;
        for &p in &poles {
            if lat.distance_to_lattice(2.0 * p) < 1e-10 {
                return Err(Error::InvalidArgument("pole at a period or half-period".into()));
            }
        }
        // The label character can only sit on the theta divisor for half-periods,
        // which are excluded above; keep a generic fallback for general data.
        let (chi, szego) = match Szego::new(chi, curve) {
            Ok(s) => (chi, s),
            Err(Error::ThetaDivisor) => {
                let c = Character::new(0.3, 0.17);
                (c, Szego::new(c, curve)?)
            }
            Err(e) => return Err(e),
        };
        Ok(TorsionSpec {
            curve: *curve,
            r: poles.len(),
            a,
            b,
            poles,
            chi,
            szego,
        })
    }

    pub fn szego(&self) -> &Szego {
        &self.szego
    }

    /// `Y(v)`.
    pub fn weight(&self, v: C64) -> Result<C64> {
        let lat = &self.curve.lattice;
        let mut y = (I * 2.0 * PI * self.a as f64 * v).exp();
        for &p in &self.poles {
            let den = lat.theta(v - p)[0];
            if den.norm() < 1e-300 || lat.distance_to_lattice(v - p) < 1e-13 {
                return Err(Error::InvalidArgument("evaluation on the pole divisor".into()));
            }
            y *= lat.theta(v + p)[0] / den;
        }
        Ok(y)
    }

    /// `z_j = z(v_j)`.
    pub fn pole_zs(&self) -> Result<Vec<C64>> {
        self.poles.iter().map(|&p| self.curve.z_of_v(p)).collect()
    }

    /// `q_R(z) = Π_j (z − z_j)`.
    pub fn q_r(&self, z: C64) -> Result<C64> {
        Ok(self.pole_zs()?.iter().map(|zj| z - zj).product())
    }

    fn frame(&self, v: C64) -> Result<DMatrix<C64>> {
        let a = self.szego.sections(v, 2)?;
        let b = self.szego.sections(-v, 2)?;
        Ok(DMatrix::from_row_slice(2, 2, &[a[0], b[0], a[1], b[1]]))
    }

    fn conjugate(&self, v: C64, d: [C64; 2]) -> Result<DMatrix<C64>> {
        let f = self.frame(v)?;
        let inv = f.clone().try_inverse().ok_or(Error::BranchPoint)?;
        let diag = DMatrix::from_row_slice(2, 2, &[d[0], C64::new(0.0, 0.0), C64::new(0.0, 0.0), d[1]]);
        Ok(f * diag * inv)
    }

    /// `√W` at the point `v` of the curve.
    pub fn sqrt_w_at(&self, v: C64) -> Result<DMatrix<C64>> {
        let y = self.weight(v)?;
        self.conjugate(v, [y, self.weight(-v)?])
    }

    /// `√W^{-1}` at `v`; uses `Y(−v)` and `Y(v)` on the diagonal.
    pub fn sqrt_w_inv_at(&self, v: C64) -> Result<DMatrix<C64>> {
        self.conjugate(v, [self.weight(-v)?, self.weight(v)?])
    }

    fn regular_preimage(&self, z: C64) -> Result<C64> {
        let scale = 1.0 + z.norm();
        if self.curve.e.iter().any(|e| (z - e).norm() < 1e-8 * scale) {
            return Err(Error::BranchPoint);
        }
        wp_inverse(z, &self.curve, Sheet::Plus)
    }

    pub fn sqrt_w(&self, z: C64) -> Result<DMatrix<C64>> {
        self.sqrt_w_at(self.regular_preimage(z)?)
    }

    pub fn sqrt_w_inv(&self, z: C64) -> Result<DMatrix<C64>> {
        self.sqrt_w_inv_at(self.regular_preimage(z)?)
    }

    /// `W = (√W)²`.
    pub fn w(&self, z: C64) -> Result<DMatrix<C64>> {
        let s = self.sqrt_w(z)?;
        Ok(&s * &s)
    }

    /// `‖√W(v) − √W(−v)‖ / ‖√W(v)‖`: both preimages of `z` must give the same matrix.
    pub fn sheet_swap_defect(&self, z: C64) -> Result<f64> {
        let v = self.regular_preimage(z)?;
        let a = self.sqrt_w_at(v)?;
        let b = self.sqrt_w_at(-v)?;
        Ok((&a - &b).norm() / a.norm())
    }

    /// Distance from `z` to the nearest branch point.
    fn branch_clearance(&self, z: C64) -> f64 {
        self.curve
            .e
            .iter()
            .map(|e| (z - e).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Centre and radius of a sampling circle that avoids branch points and poles.
    fn sampling_circle(&self) -> Result<(C64, f64)> {
        let zs = self.pole_zs()?;
        let centre = zs.iter().sum::<C64>() / zs.len() as f64;
        let spread = zs.iter().map(|z| (z - centre).norm()).fold(0.0, f64::max);
        let clear = self.branch_clearance(centre);
        let rho = (0.6 * clear).max(2.0 * spread + 1e-3 * clear);
        Ok((centre, rho))
    }
}

/// Solves `z(v) = z` by Newton from `v0`.
fn solve_near(curve: &EllipticData, z: C64, v0: C64) -> Result<C64> {
    let mut v = v0;
    for _ in 0..40 {
        let (zz, _) = curve.point(v)?;
        let d = zz - z;
        if d.norm() < 1e-14 * (1.0 + z.norm()) {
            return Ok(v);
        }
        v -= d / curve.dz_dv(v)?;
    }
    let (zz, _) = curve.point(v)?;
    if (zz - z).norm() < 1e-11 * (1.0 + z.norm()) {
        Ok(v)
    } else {
        Err(Error::NoConvergence {
            iterations: 40,
            target: format!("{z}"),
            residual: (zz - z).norm(),
        })
    }
}

/// A polynomial matrix recovered from samples.
#[derive(Clone, Debug, Serialize)]
pub struct FittedMatPoly {
    pub poly: MatPoly,
    /// Max entry residual over max sample magnitude.
    pub residual: f64,
}

fn fit_matrix(samples: &[(C64, DMatrix<C64>)], deg: usize, tol: f64) -> Result<FittedMatPoly> {
    let scale = samples
        .iter()
        .flat_map(|(_, m)| m.iter().map(|x| x.norm()))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut entries = Vec::with_capacity(4);
    let mut worst = 0.0f64;
    for a in 0..2 {
        for b in 0..2 {
            let pts: Vec<(C64, C64)> = samples.iter().map(|(z, m)| (*z, m[(a, b)])).collect();
            let (p, res) = fit_polynomial(&pts, deg)?;
            worst = worst.max(res / scale);
            entries.push(p);
        }
    }
    if worst > tol {
        return Err(Error::NotPolynomial { residual: worst });
    }
    Ok(FittedMatPoly {
        poly: MatPoly::from_entries(2, entries),
        residual: worst,
    })
}

/// `P_R = q_R(z)·√W^{-1}(z)`, fitted at degree `R`.
pub fn torsion_pr(spec: &TorsionSpec) -> Result<FittedMatPoly> {
    let (centre, rho) = spec.sampling_circle()?;
    let m = 4 * spec.r + 16;
    let samples = par::map_range(m, |k| -> Result<(C64, DMatrix<C64>)> {
        let z = centre + C64::from_polar(rho, 2.0 * PI * (k as f64 + 0.25) / m as f64);
        Ok((z, spec.sqrt_w_inv(z)? * spec.q_r(z)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    fit_matrix(&samples, spec.r, PR_FIT_TOL)
}

/// Circles `|w − z_j| = ε_j` with the preimage near `+v_j` at every node.
struct PoleCircles {
    nodes: Vec<(C64, C64, C64)>, // (w, dw, v)
}

fn pole_circles(spec: &TorsionSpec, nodes: usize) -> Result<PoleCircles> {
    let zs = spec.pole_zs()?;
    let mut distinct: Vec<(C64, C64)> = Vec::new();
    for (&p, &z) in spec.poles.iter().zip(&zs) {
        if !distinct
            .iter()
            .any(|(_, zz)| (zz - z).norm() < 1e-10 * (1.0 + z.norm()))
        {
            distinct.push((p, z));
        }
    }
    let mut out = Vec::with_capacity(nodes * distinct.len());
    for &(p, z) in &distinct {
        let mut eps = 0.25 * spec.branch_clearance(z);
        for &(_, other) in &distinct {
            if other != z {
                eps = eps.min(0.25 * (other - z).norm());
            }
        }
        let contour = make_contour(ContourKind::circle(z, eps), nodes)?;
        let dzdv = spec.curve.dz_dv(p)?;
        let vs = par::map_range(nodes, |k| {
            let w = contour.nodes[k];
            solve_near(&spec.curve, w, p + (w - z) / dzdv)
        });
        for (k, v) in vs.into_iter().enumerate() {
            out.push((contour.nodes[k], contour.weights[k], v?));
        }
    }
    Ok(PoleCircles { nodes: out })
}

/// `P_{R−1}(z) = q_R(z) ∮ ΦE₁₁Φ^{-1}(w) dw / (q_R(w)² (w − z) 2πi) · √W^{-1}(z)`,
/// with `E₁₁` the sheet carrying the pole of `Y`, fitted at degree `R − 1`.
pub fn torsion_pr_minus1(spec: &TorsionSpec) -> Result<FittedMatPoly> {
    let circles = pole_circles(spec, DEFAULT_CIRCLE_NODES)?;
    let projected: Vec<(C64, C64, DMatrix<C64>)> = par::map_slice(&circles.nodes, |&(w, dw, v)| {
        let f = spec.frame(v)?;
        let inv = f.clone().try_inverse().ok_or(Error::BranchPoint)?;
        let e11 = DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(1.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
            ],
        );
        let q = spec.q_r(w)?;
        Ok((w, dw, f * e11 * inv / (q * q * 2.0 * PI * I)))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (centre, _) = spec.sampling_circle()?;
    let eps_max = circles
        .nodes
        .iter()
        .map(|(w, _, _)| (w - centre).norm())
        .fold(0.0, f64::max);
    let zs = spec.pole_zs()?;
    let clear = zs
        .iter()
        .map(|z| spec.branch_clearance(*z))
        .fold(f64::INFINITY, f64::min);
    let rho = (0.6 * spec.branch_clearance(centre))
        .max(1.5 * eps_max)
        .min(eps_max + 0.5 * clear);
    let m = 4 * spec.r + 16;
    let samples = par::map_range(m, |k| -> Result<(C64, DMatrix<C64>)> {
        let z = centre + C64::from_polar(rho, 2.0 * PI * (k as f64 + 0.25) / m as f64);
        let mut acc = DMatrix::zeros(2, 2);
        for (w, dw, p) in &projected {
            acc += p * (*dw / (w - z));
        }
        Ok((z, acc * spec.q_r(z)? * spec.sqrt_w_inv(z)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    fit_matrix(&samples, spec.r - 1, PR_MINUS1_FIT_TOL)
}

/// `∮ P(z) W(z) Q(z) dz` around the poles, with the quadrature magnitude as scale.
#[derive(Clone, Debug, Serialize)]
pub struct LoopIntegral {
    #[serde(skip)]
    pub value: DMatrix<C64>,
    pub scale: f64,
    pub relative: f64,
}

pub fn finite_orthogonality(spec: &TorsionSpec, p: &MatPoly, q: &MatPoly) -> Result<LoopIntegral> {
    let zs = spec.pole_zs()?;
    let mut distinct: Vec<C64> = Vec::new();
    for z in zs {
        if !distinct.iter().any(|d| (d - z).norm() < 1e-10 * (1.0 + z.norm())) {
            distinct.push(z);
        }
    }
    let mut value = DMatrix::zeros(2, 2);
    let mut scale = 0.0;
    for &z0 in &distinct {
        let mut eps = 0.4 * spec.branch_clearance(z0);
        for &o in &distinct {
            if o != z0 {
                eps = eps.min(0.4 * (o - z0).norm());
            }
        }
        let c: ContourSpec = make_contour(ContourKind::circle(z0, eps), DEFAULT_CIRCLE_NODES)?;
        let terms = par::map_range(c.nodes.len(), |k| -> Result<DMatrix<C64>> {
            let z = c.nodes[k];
            Ok(p.eval(z) * spec.w(z)? * q.eval(z) * c.weights[k])
        });
        for t in terms {
            let t = t?;
            scale += t.iter().map(|x| x.norm()).fold(0.0, f64::max);
            value += t;
        }
    }
    let relative = value.iter().map(|x| x.norm()).fold(0.0, f64::max) / scale.max(f64::MIN_POSITIVE);
    Ok(LoopIntegral { value, scale, relative })
}

/// `z^ℓ·1` as a matrix polynomial.
pub fn scalar_power(l: usize) -> MatPoly {
    MatPoly::from_entries(
        2,
        vec![CPoly::monomial(l), CPoly::zero(), CPoly::zero(), CPoly::monomial(l)],
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct PairingReport {
    pub n: usize,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// `max |c·µ| / (‖c‖‖µ‖)` for the coefficient vectors of `ψ_{2R}`, `ψ_{2R+1}`.
    pub kernel_defect: f64,
    /// Least-squares residual of expressing `ψ_{2R}`, `ψ_{2R+1}` in the basis.
    pub kernel_span_residual: f64,
    /// `‖µ₂‖/‖µ‖` for the circles around `−v_j`.
    pub second_sheet: f64,
}

fn v_circle_radius(spec: &TorsionSpec, p: C64) -> f64 {
    let lat = &spec.curve.lattice;
    let mut d = lat.distance_to_lattice(p);
    for &o in &spec.poles {
        d = d.min(lat.distance_to_lattice(p + o));
        if (o - p).norm() > 1e-12 {
            d = d.min(lat.distance_to_lattice(p - o));
        }
    }
    0.25 * d
}

/// `µ_{ab} = Σ_j ∮_{|v − s·v_j| = ε} φ_a φ∨_b Y² dv`, `s = ±1`.
pub fn pairing_matrix(spec: &TorsionSpec, n: usize, second_sheet: bool) -> Result<DMatrix<C64>> {
    let mut centres: Vec<C64> = Vec::new();
    for &p in &spec.poles {
        if !centres.iter().any(|c| (c - p).norm() < 1e-12) {
            centres.push(p);
        }
    }
    let mut mu = DMatrix::zeros(n, n);
    for &p in &centres {
        let eps = v_circle_radius(spec, p);
        let centre = if second_sheet { -p } else { p };
        let c = make_contour(ContourKind::circle(centre, eps), DEFAULT_CIRCLE_NODES)?;
        let terms = par::map_range(c.nodes.len(), |k| -> Result<DMatrix<C64>> {
            let v = c.nodes[k];
            let f = spec.szego.sections(v, n)?;
            let g = spec.szego.dual_sections(v, n)?;
            let y = spec.weight(v)?;
            let w = y * y * c.weights[k];
            Ok(DMatrix::from_fn(n, n, |a, b| f[a] * g[b] * w))
        });
        for t in terms {
            mu += t?;
        }
    }
    Ok(mu)
}

/// Numerical rank of the pairing on `φ_0..φ_{n−1}` plus the kernel checks.
pub fn finite_pairing_rank(spec: &TorsionSpec, n: usize) -> Result<PairingReport> {
    let r = spec.r;
    if n < 2 * r + 2 {
        return Err(Error::InvalidArgument(format!("need n ≥ {}", 2 * r + 2)));
    }
    let mu = pairing_matrix(spec, n, false)?;
    // The basis is far from normalized near the poles; equilibrate first.
    let sv = equilibrate(&mu).singular_values();
    let smax = sv.max();
    let mut singular_values: Vec<f64> = sv.iter().copied().collect();
    singular_values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let rank = singular_values.iter().filter(|&&s| s > RANK_REL * smax).count();

    // Express ψ_{2R} = q_R φ₀/Y and ψ_{2R+1} = q_R φ₁/Y in φ_0..φ_{2R+1}.
    let k = 2 * r + 2;
    let tau = spec.curve.tau;
    let pts: Vec<C64> = (0..3 * k)
        .map(|i| {
            let s = (i as f64 + 0.5) / (3 * k) as f64;
            C64::new(0.13 + 0.7 * s, 0.0) + tau * (0.21 + 0.55 * ((7.0 * s) % 1.0))
        })
        .collect();
    let rows = par::map_slice(&pts, |&v| -> Result<(Vec<C64>, C64, C64)> {
        let f = spec.szego.sections(v, k)?;
        let factor = spec.q_r(spec.curve.z_of_v(v)?)? / spec.weight(v)?;
        Ok((f.clone(), factor * f[0], factor * f[1]))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let a = DMatrix::from_fn(pts.len(), k, |i, j| rows[i].0[j]);
    let svd = a.clone().svd(true, true);
    let mut kernel_defect = 0.0f64;
    let mut span = 0.0f64;
    let mu_norm = mu.norm();
    let top = mu.rows(0, k).clone_owned();
    for col in [1usize, 2] {
        let rhs = DVector::from_fn(pts.len(), |i, _| if col == 1 { rows[i].1 } else { rows[i].2 });
        let c = svd
            .solve(&rhs, 1e-14)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        span = span.max((&a * &c - &rhs).norm() / rhs.norm());
        let img = c.transpose() * &top;
        kernel_defect = kernel_defect.max(img.norm() / (c.norm() * mu_norm));
    }
    let mu2 = pairing_matrix(spec, n, true)?;
    Ok(PairingReport {
        n,
        rank,
        singular_values,
        kernel_defect,
        kernel_span_residual: span,
        second_sheet: mu2.norm() / mu_norm,
    })
}

/// Two sweeps of row and column max-abs scaling.
fn equilibrate(m: &DMatrix<C64>) -> DMatrix<C64> {
    let mut m = m.clone();
    for _ in 0..2 {
        for mut row in m.row_iter_mut() {
            let s = row.iter().map(|x| x.norm()).fold(0.0, f64::max);
            if s > 0.0 {
                row /= C64::new(s, 0.0);
            }
        }
        for mut col in m.column_iter_mut() {
            let s = col.iter().map(|x| x.norm()).fold(0.0, f64::max);
            if s > 0.0 {
                col /= C64::new(s, 0.0);
            }
        }
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConditionResidual {
    pub det: C64,
    pub scale: f64,
    pub residual: f64,
}

/// The torsion determinant at `z_*` in Taylor-coefficient form.
///
/// With `y(z_* + u) = Σ y_k u^k`, `(y·q_{R−2})` has vanishing coefficients of
/// `u^{R+1}..u^{2R−1}` iff `D(z_*) = det[y_{R+1+ℓ−j}]_{ℓ,j<R−1} = 0`. The
/// residual is the Newton distance `|D/D′|` to the nearest zero of `D`, in
/// units of the distance `ρ` from `z_*` to the nearest branch point.
pub fn torsion_condition_residual(e: [C64; 3], z_star: C64, r: usize, sheet: Sheet) -> Result<ConditionResidual> {
    if r < 2 {
        return Err(Error::InvalidArgument(format!("R must be ≥ 2, got {r}")));
    }
    let rho = e.iter().map(|x| (z_star - x).norm()).fold(f64::INFINITY, f64::min);
    if rho < 1e-10 * (1.0 + z_star.norm()) {
        return Err(Error::BranchPoint);
    }
    let det = toeplitz_det(e, z_star, r, rho, sheet);
    let h = 1e-4 * rho;
    let d_plus = toeplitz_det(e, z_star + h, r, rho, sheet);
    let d_minus = toeplitz_det(e, z_star - h, r, rho, sheet);
    let scale = ((d_plus - d_minus) / (2.0 * h)).norm() * rho;
    Ok(ConditionResidual {
        det,
        scale,
        residual: det.norm() / scale.max(f64::MIN_POSITIVE),
    })
}

/// `det[y_{R+1+ℓ−j} ρ^{R+1+ℓ−j}]` with `y` the series of `√Π(z − e_i)` at `z0`.
fn toeplitz_det(e: [C64; 3], z0: C64, r: usize, rho: f64, sheet: Sheet) -> C64 {
    let mut cubic = CPoly::one();
    for x in e {
        cubic = &cubic * &CPoly::new(vec![z0 - x, C64::new(1.0, 0.0)]);
    }
    let order = 2 * r + 1;
    let c: Vec<C64> = (0..order).map(|k| cubic.coeff(k) * rho.powi(k as i32)).collect();
    let mut y = vec![C64::new(0.0, 0.0); order];
    y[0] = c[0].sqrt();
    if sheet == Sheet::Minus {
        y[0] = -y[0];
    }
    for k in 1..order {
        let s: C64 = (1..k).map(|j| y[j] * y[k - j]).sum();
        y[k] = (c[k] - s) / (y[0] * 2.0);
    }
    let m = r - 1;
    DMatrix::from_fn(m, m, |l, j| y[r + 1 + l - j]).determinant()
}

/// The weight `W₁` and eigenvalue `Y₁` of the lozenge-tiling example on
/// `y² = z(z + α²)(z + α^{−2})`.
#[derive(Clone, Copy, Debug)]
pub struct DkFixture {
    pub alpha: f64,
}

impl DkFixture {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || (alpha - 1.0).abs() < 1e-12 {
            return Err(Error::DegenerateAlpha);
        }
        Ok(DkFixture { alpha })
    }

    pub fn w1(&self, z: C64) -> DMatrix<C64> {
        let a = self.alpha;
        let s = a + 1.0 / a;
        let zp = z + 1.0;
        let d = (z - 1.0).powi(2);
        DMatrix::from_row_slice(
            2,
            2,
            &[
                (zp * zp + z * 4.0 * a * a) / d,
                zp * 2.0 * a * s / d,
                z * zp * 2.0 * s / a / d,
                (zp * zp + z * 4.0 / (a * a)) / d,
            ],
        )
    }

    /// `y` on the DK curve with principal square root.
    pub fn curve_y(&self, z: C64) -> C64 {
        let a2 = self.alpha * self.alpha;
        (z * (z + a2) * (z + 1.0 / a2)).sqrt()
    }

    pub fn y1(&self, z: C64, y: C64) -> C64 {
        let a = self.alpha;
        let a2 = a * a;
        (z * 2.0 * (a2 * a2 + 1.0) + (z + 1.0).powi(2) * a2 - y * 2.0 * a * (a2 + 1.0)) / ((z - 1.0).powi(2) * a2)
    }

    /// `y_* = √((1 + α²)(1 + α^{−2}))`.
    pub fn y_star(&self) -> f64 {
        let a2 = self.alpha * self.alpha;
        ((1.0 + a2) * (1.0 + 1.0 / a2)).sqrt()
    }

    /// `|Y₁² − tr W₁·Y₁ + det W₁|` relative to `|Y₁|² + 1`.
    pub fn char_poly_residual(&self, z: C64, y: C64) -> f64 {
        let w = self.w1(z);
        let l = self.y1(z, y);
        let tr = w[(0, 0)] + w[(1, 1)];
        let det = w[(0, 0)] * w[(1, 1)] - w[(0, 1)] * w[(1, 0)];
        (l * l - tr * l + det).norm() / (l.norm_sqr() + 1.0)
    }

    /// `c = (α² − 1)/α`.
    pub fn f_constant(&self) -> f64 {
        (self.alpha * self.alpha - 1.0) / self.alpha
    }

    /// `f(z, y) = (zc − y)/(z(z + 1))`.
    pub fn f(&self, z: C64, y: C64) -> C64 {
        (z * self.f_constant() - y) / (z * (z + 1.0))
    }

    /// Branch of `y` near `z₀` continued from the value `y₀` at `z₀`.
    pub fn y_near(&self, z: C64, y0: C64) -> C64 {
        let y = self.curve_y(z);
        if (y - y0).norm() <= (y + y0).norm() {
            y
        } else {
            -y
        }
    }

    /// Log-log slope of `|g(z₀ + δ)|` for `δ ∈ {10^{-2}, 10^{-3}}` along a fixed direction.
    pub fn local_order<G: Fn(C64) -> C64>(g: G, z0: C64, dir: C64) -> f64 {
        let (d1, d2) = (1e-2, 1e-3);
        let a = g(z0 + dir * d1).norm().ln();
        let b = g(z0 + dir * d2).norm().ln();
        (a - b) / (d1 / d2).ln()
    }

    pub fn curve(&self) -> Result<EllipticData> {
        let e = dk_branch_points(self.alpha);
        crate::elliptic1::curve_periods(e[0], e[1], e[2])
    }
}
