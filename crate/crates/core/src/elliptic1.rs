//! Genus-one analytics: θ₁, Weierstraß ℘ on the lattice `ℤ + τℤ`, periods of
//! `y² = 4Π(z − e_i)`, the twisted Szegő kernel and the 2×2 frame `Φ(z)`.
//!
//! Half-differentials are carried as coordinate values in `v`. The only
//! place `√dz` appears is [`build_phi1`], which multiplies by `√(dv/dz)`.
//!
//! θ₁ here is `Σ_n exp(iπτ(n+½)² + iπ(2n+1)(v+½))`, which is minus the usual
//! Jacobi normalization. Every quantity below is a ratio in which that sign
//! cancels.

use nalgebra::{DMatrix, Matrix2};
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadcontour::{cauchy_derivatives, gauss_legendre};
use crate::C64;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const PERIOD_NODES: usize = 200;

fn cz(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Number of terms on each side of the θ series.
pub fn theta_terms(tau: C64) -> usize {
    (40.0 / (PI * tau.im)).sqrt().ceil() as usize + 4
}

fn theta_series(x: C64, tau: C64, n: usize) -> [C64; 4] {
    let mut out = [C64::new(0.0, 0.0); 4];
    let n = n as i64;
    for k in -n - 1..=n {
        let h = k as f64 + 0.5;
        let a = I * PI * (2.0 * h);
        let t = (I * PI * tau * h * h + a * (x + 0.5)).exp();
        let mut d = t;
        for o in out.iter_mut() {
            *o += d;
            d *= a;
        }
    }
    out
}

/// `θ₁(v)` and its first three `v`-derivatives.
pub fn theta1(v: C64, tau: C64) -> Result<[C64; 4]> {
    if !(tau.im > 0.0) {
        return Err(Error::InvalidArgument(format!("Im τ must be positive, got {}", tau.im)));
    }
    let n = (v.im / tau.im).round();
    let x1 = v - tau * n;
    let m = x1.re.round();
    let x = x1 - m;
    let base = theta_series(x, tau, theta_terms(tau));
    if n == 0.0 && m == 0.0 {
        return Ok(base);
    }
    // θ(x + nτ + m) = (−1)^{n+m} e^{−2iπnx − iπn²τ} θ(x); the derivative
    // of the exponential prefactor is a constant multiple of itself.
    let sign = if (n + m) as i64 % 2 == 0 { 1.0 } else { -1.0 };
    let g = (-I * 2.0 * PI * n * x - I * PI * n * n * tau).exp() * sign;
    let k = -I * 2.0 * PI * n;
    let binom = [
        [1.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, 0.0],
        [1.0, 2.0, 1.0, 0.0],
        [1.0, 3.0, 3.0, 1.0],
    ];
    let mut out = [C64::new(0.0, 0.0); 4];
    for (d, o) in out.iter_mut().enumerate() {
        for j in 0..=d {
            *o += binom[d][j] * k.powu((d - j) as u32) * base[j];
        }
        *o *= g;
    }
    Ok(out)
}

/// `ℤ + τℤ` together with the constants ℘ needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub tau: C64,
    /// `θ₁′(0)`.
    pub theta_p0: C64,
    /// `θ₁‴(0) / (3θ₁′(0))`.
    pub wp_shift: C64,
}

impl Lattice {
    pub fn new(tau: C64) -> Result<Self> {
        let t = theta1(C64::new(0.0, 0.0), tau)?;
        Ok(Lattice {
            tau,
            theta_p0: t[1],
            wp_shift: t[3] / (t[1] * 3.0),
        })
    }

    /// `v − (m + nτ)` with the representative nearest the origin's cell.
    pub fn reduce(&self, v: C64) -> C64 {
        let n = (v.im / self.tau.im).round();
        let x = v - self.tau * n;
        x - x.re.round()
    }

    pub fn distance_to_lattice(&self, v: C64) -> f64 {
        let x = self.reduce(v);
        let mut best = f64::INFINITY;
        for a in -1..=1 {
            for b in -1..=1 {
                best = best.min((x - (cz(a as f64) + self.tau * b as f64)).norm());
            }
        }
        best
    }

    pub fn theta(&self, v: C64) -> [C64; 4] {
        theta1(v, self.tau).expect("lattice has Im τ > 0")
    }

    /// `(℘(v), ℘′(v))` for the lattice `ℤ + τℤ`.
    pub fn wp(&self, v: C64) -> Result<(C64, C64)> {
        if self.distance_to_lattice(v) < 1e-12 {
            return Err(Error::PoleOfWp);
        }
        let [t0, t1, t2, t3] = self.theta(self.reduce(v));
        let l1 = t1 / t0;
        let l2 = t2 / t0;
        let l3 = t3 / t0;
        let wp = l1 * l1 - l2 + self.wp_shift;
        let wpp = -(l3 - l1 * l2 * 3.0 + l1 * l1 * l1 * 2.0);
        Ok((wp, wpp))
    }

    pub fn half_periods(&self) -> [C64; 3] {
        [cz(0.5), self.tau * 0.5, (self.tau + 1.0) * 0.5]
    }
}

/// An elliptic curve `y² = 4(z − e₁)(z − e₂)(z − e₃)` with its uniformization
/// `z = s + (2ω₁)^{−2}℘(v)`, `y = (2ω₁)^{−3}℘′(v)`, where `s` is the mean of
/// the `e_i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EllipticData {
    pub e: [C64; 3],
    pub shift: C64,
    pub omega1: C64,
    pub tau: C64,
    /// `−θ₁‴(0)/(3θ₁′(0))`.
    pub eta1: C64,
    pub g2: C64,
    pub g3: C64,
    #[serde(skip)]
    pub lattice: Lattice,
}

impl EllipticData {
    /// The curve uniformized by `ℤ + τℤ` with the given `ω₁` and no shift.
    pub fn from_tau(tau: C64, omega1: C64) -> Result<Self> {
        let lattice = Lattice::new(tau)?;
        let s = (omega1 * 2.0).powi(-2);
        let mut e = [C64::new(0.0, 0.0); 3];
        for (k, h) in lattice.half_periods().iter().enumerate() {
            e[k] = lattice.wp(*h)?.0 * s;
        }
        Ok(Self::assemble(e, C64::new(0.0, 0.0), omega1, lattice))
    }

    fn assemble(e: [C64; 3], shift: C64, omega1: C64, lattice: Lattice) -> Self {
        let es: Vec<C64> = e.iter().map(|x| x - shift).collect();
        EllipticData {
            e,
            shift,
            omega1,
            tau: lattice.tau,
            eta1: -lattice.wp_shift,
            g2: es.iter().map(|x| x * x).sum::<C64>() * 2.0,
            g3: es[0] * es[1] * es[2] * 4.0,
            lattice,
        }
    }

    pub fn two_omega(&self) -> C64 {
        self.omega1 * 2.0
    }

    pub fn z_of_v(&self, v: C64) -> Result<C64> {
        Ok(self.shift + self.lattice.wp(v)?.0 / self.two_omega().powi(2))
    }

    pub fn y_of_v(&self, v: C64) -> Result<C64> {
        Ok(self.lattice.wp(v)?.1 / self.two_omega().powi(3))
    }

    /// `(z, y)` at `v`.
    pub fn point(&self, v: C64) -> Result<(C64, C64)> {
        let (p, dp) = self.lattice.wp(v)?;
        let w = self.two_omega();
        Ok((self.shift + p / (w * w), dp / (w * w * w)))
    }

    /// `dz/dv = (2ω₁)^{−2}℘′(v)`.
    pub fn dz_dv(&self, v: C64) -> Result<C64> {
        Ok(self.lattice.wp(v)?.1 / self.two_omega().powi(2))
    }

    /// `4Π(z − e_i)`.
    pub fn cubic(&self, z: C64) -> C64 {
        self.e.iter().map(|e| z - e).product::<C64>() * 4.0
    }

    /// Largest `|z(h_k) − e_k|` over the half-periods `½, τ/2, (1+τ)/2`.
    pub fn half_period_defect(&self) -> f64 {
        self.lattice
            .half_periods()
            .iter()
            .zip(&self.e)
            .map(|(h, e)| self.z_of_v(*h).map(|z| (z - e).norm()).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }
}

/// `∫_{e_i}^{e_j} dz/y` along the segment, via `z = e_i + (e_j − e_i) sin²φ`.
fn half_period_integral(ei: C64, ej: C64, ek: C64) -> C64 {
    let (x, w) = gauss_legendre(PERIOD_NODES);
    let mut acc = C64::new(0.0, 0.0);
    let mut prev: Option<C64> = None;
    for (xi, wi) in x.iter().zip(&w) {
        let phi = PI / 4.0 * (xi + 1.0);
        let s = phi.sin();
        let z = ei + (ej - ei) * s * s;
        let mut r = (z - ek).sqrt();
        if let Some(p) = prev {
            if (r - p).norm() > (r + p).norm() {
                r = -r;
            }
        }
        prev = Some(r);
        acc += wi * PI / 4.0 / r;
    }
    // dz/y = −i dφ / √(z − e_k) up to an overall sign, which the lattice ignores.
    -I * acc
}

fn segment_clearance(a: C64, b: C64, p: C64) -> f64 {
    let d = b - a;
    let t = ((p - a) * d.conj()).re / d.norm_sqr();
    let t = t.clamp(0.0, 1.0);
    (a + d * t - p).norm() / d.norm()
}

/// Periods of `y² = 4(z − e₁)(z − e₂)(z − e₃)`.
///
/// `τ` is brought to the fundamental domain and then adjusted within its
/// `Γ(2)` class so that `½ ↦ e₁`, `τ/2 ↦ e₂`, `(1+τ)/2 ↦ e₃`.
pub fn curve_periods(e1: C64, e2: C64, e3: C64) -> Result<EllipticData> {
    let e = [e1, e2, e3];
    let scale = e.iter().map(|x| x.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for i in 0..3 {
        for j in i + 1..3 {
            if (e[i] - e[j]).norm() < 1e-10 * scale {
                return Err(Error::DegenerateCurve);
            }
        }
    }
    let shift = (e1 + e2 + e3) / 3.0;
    // Two segment integrals whose third branch point stays furthest away.
    let mut pairs = [(0, 1, 2), (1, 2, 0), (0, 2, 1)];
    pairs.sort_by(|a, b| {
        segment_clearance(e[b.0], e[b.1], e[b.2])
            .partial_cmp(&segment_clearance(e[a.0], e[a.1], e[a.2]))
            .unwrap()
    });
    let p1 = half_period_integral(e[pairs[0].0], e[pairs[0].1], e[pairs[0].2]) * 2.0;
    let mut p2 = half_period_integral(e[pairs[1].0], e[pairs[1].1], e[pairs[1].2]) * 2.0;
    let mut t = p2 / p1;
    if t.im.abs() < 1e-12 {
        return Err(Error::DegenerateCurve);
    }
    if t.im < 0.0 {
        p2 = -p2;
        t = -t;
    }
    // Reduce to the fundamental domain, tracking the basis (Π₂, Π₁).
    let (mut a, mut b, mut c, mut d) = (1i64, 0i64, 0i64, 1i64);
    for _ in 0..200 {
        let k = t.re.round();
        t -= k;
        a -= k as i64 * c;
        b -= k as i64 * d;
        if t.norm_sqr() < 1.0 - 1e-12 {
            t = -t.inv();
            (a, b, c, d) = (-c, -d, a, b);
        } else {
            break;
        }
    }
    let pi2 = p2 * a as f64 + p1 * b as f64;
    let pi1 = p2 * c as f64 + p1 * d as f64;

    // Label the half-periods of the reduced basis by the nearest e.
    let base = EllipticData::from_tau(pi2 / pi1, pi1 * 0.5)?;
    let mut label = [0usize; 3]; // label[class]: classes ½, τ/2, (1+τ)/2
    for (k, z) in base.e.iter().enumerate() {
        let z = z + shift;
        label[k] = (0..3)
            .min_by(|&i, &j| (z - e[i]).norm().partial_cmp(&(z - e[j]).norm()).unwrap())
            .unwrap();
    }
    let class = |x: i64, y: i64| -> Option<usize> {
        match (x.rem_euclid(2), y.rem_euclid(2)) {
            (1, 0) => Some(label[0]),
            (0, 1) => Some(label[1]),
            (1, 1) => Some(label[2]),
            _ => None,
        }
    };
    let mut best: Option<(C64, C64)> = None;
    for a in -2i64..=2 {
        for b in -2i64..=2 {
            for c in -2i64..=2 {
                for d in -2i64..=2 {
                    if a * d - b * c != 1 {
                        continue;
                    }
                    // Π₁′ = cΠ₂ + dΠ₁ has half-period class (d, c) in the reduced basis.
                    if class(d, c) != Some(0) || class(b, a) != Some(1) {
                        continue;
                    }
                    let q1 = pi2 * c as f64 + pi1 * d as f64;
                    let q2 = pi2 * a as f64 + pi1 * b as f64;
                    let tt = q2 / q1;
                    let better = best.is_none_or(|(bt, _): (C64, C64)| {
                        tt.im > bt.im + 1e-12 || (tt.im > bt.im - 1e-12 && tt.re.abs() < bt.re.abs() - 1e-12)
                    });
                    if better {
                        best = Some((tt, q1));
                    }
                }
            }
        }
    }
    let (tau, q1) = best.ok_or(Error::DegenerateCurve)?;
    let lattice = Lattice::new(tau)?;
    Ok(EllipticData::assemble(e, shift, q1 * 0.5, lattice))
}

/// Which preimage of `z` under the uniformization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sheet {
    /// `Re y > 0`, or `Im y ≥ 0` when `y` is imaginary.
    Plus,
    Minus,
}

impl Sheet {
    pub fn of_y(y: C64) -> Self {
        if y.re > 1e-12 * y.norm() || (y.re.abs() <= 1e-12 * y.norm() && y.im >= 0.0) {
            Sheet::Plus
        } else {
            Sheet::Minus
        }
    }
}

/// Solves `z(v) = z` by Newton from the best point of a 12×12 grid.
pub fn wp_inverse(z: C64, data: &EllipticData, sheet: Sheet) -> Result<C64> {
    let lat = &data.lattice;
    let w2 = data.two_omega().powi(2);
    let target = (z - data.shift) * w2;
    let scale = 1.0 + target.norm();
    for (h, e) in lat.half_periods().iter().zip(&data.e) {
        if (z - e).norm() * w2.norm() < 1e-12 * scale {
            return Ok(*h);
        }
    }
    let mut best = (f64::INFINITY, C64::new(0.0, 0.0));
    for i in 0..12 {
        for j in 0..12 {
            let v = cz((i as f64 + 0.5) / 12.0) + lat.tau * ((j as f64 + 0.5) / 12.0);
            if let Ok((p, _)) = lat.wp(v) {
                let r = (p - target).norm();
                if r < best.0 {
                    best = (r, v);
                }
            }
        }
    }
    // Near the pole ℘ ≈ v^{-2}.
    let near_zero = target.sqrt().inv();
    if let Ok((p, _)) = lat.wp(near_zero) {
        if (p - target).norm() < best.0 {
            best = ((p - target).norm(), near_zero);
        }
    }
    let mut v = best.1;
    let mut converged = false;
    for _ in 0..50 {
        let (p, dp) = lat.wp(v)?;
        if (p - target).norm() < 1e-13 * scale {
            converged = true;
            break;
        }
        let mut step = (p - target) / dp;
        // Damp steps that would leave the cell.
        let lim = 0.25 * lat.tau.im.min(1.0);
        if step.norm() > lim {
            step *= lim / step.norm();
        }
        v -= step;
    }
    if !converged {
        let (p, _) = lat.wp(v)?;
        let resid = (p - target).norm();
        if resid > 1e-10 * scale {
            return Err(Error::NoConvergence {
                iterations: 50,
                target: format!("{z}"),
                residual: resid,
            });
        }
    }
    let v = lat.reduce(v);
    let y = data.y_of_v(v)?;
    Ok(if Sheet::of_y(y) == sheet { v } else { lat.reduce(-v) })
}

/// Multiplier system `v ↦ v + 1: e^{2iπα}`, `v ↦ v + τ: e^{2iπβ}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct Character {
    pub alpha: f64,
    pub beta: f64,
}

impl Character {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Character { alpha, beta }
    }

    /// The Jacobian point `X = β − τα`.
    pub fn point(&self, tau: C64) -> C64 {
        cz(self.beta) - tau * self.alpha
    }

    pub fn inverse(&self) -> Self {
        Character::new(-self.alpha, -self.beta)
    }

    pub fn multipliers(&self) -> (C64, C64) {
        ((I * 2.0 * PI * self.alpha).exp(), (I * 2.0 * PI * self.beta).exp())
    }
}

/// `|θ₁(X)|` below this is treated as the theta divisor.
pub const THETA_DIVISOR_TOL: f64 = 1e-10;

/// The twisted Szegő kernel and the bases derived from it.
#[derive(Clone, Copy, Debug)]
pub struct Szego {
    pub data: EllipticData,
    pub chi: Character,
    x: C64,
    theta_x: C64,
}

impl Szego {
    pub fn new(chi: Character, data: &EllipticData) -> Result<Self> {
        let x = chi.point(data.tau);
        let theta_x = data.lattice.theta(x)[0];
        if theta_x.norm() < THETA_DIVISOR_TOL {
            return Err(Error::ThetaDivisor);
        }
        Ok(Szego {
            data: *data,
            chi,
            x,
            theta_x,
        })
    }

    /// `S(v, w) = e^{2iπα(v−w)} θ₁′(0) θ₁(v−w−X) / (θ₁(X) θ₁(w−v))`.
    pub fn kernel(&self, v: C64, w: C64) -> Result<C64> {
        let lat = &self.data.lattice;
        if lat.distance_to_lattice(v - w) < 1e-13 {
            return Err(Error::CoincidentPoints);
        }
        let u = v - w;
        Ok(
            (I * 2.0 * PI * self.chi.alpha * u).exp() * lat.theta_p0 * lat.theta(u - self.x)[0]
                / (self.theta_x * lat.theta(-u)[0]),
        )
    }

    /// `G(u) = e^{2iπαu} θ₁(u − X)`, so that `S(v, w) = G(v−w)/(G(0)E(v, w))`.
    pub fn g(&self, u: C64) -> C64 {
        (I * 2.0 * PI * self.chi.alpha * u).exp() * self.data.lattice.theta(u - self.x)[0]
    }

    /// Prime form in the coordinate `v`: `θ₁(v − w)/θ₁′(0)`.
    pub fn prime_form(&self, v: C64, w: C64) -> C64 {
        self.data.lattice.theta(v - w)[0] / self.data.lattice.theta_p0
    }

    fn cauchy_radius(&self, v: C64) -> f64 {
        let lat = &self.data.lattice;
        (0.1 * lat.tau.im.min(1.0)).min(lat.distance_to_lattice(v) / 2.0)
    }

    /// `φ_ℓ(v) = (1/ℓ!) ∂_w^ℓ S(v, w)|_{w=0}` for `ℓ < n`.
    pub fn sections(&self, v: C64, n: usize) -> Result<Vec<C64>> {
        let rho = self.cauchy_radius(v);
        if rho < 1e-13 {
            return Err(Error::CoincidentPoints);
        }
        cauchy_derivatives(
            |w| self.kernel(v, w).unwrap_or(C64::new(f64::NAN, f64::NAN)),
            cz(0.0),
            rho,
            n,
        )
    }

    /// `φ∨_ℓ(v) = −(1/ℓ!) ∂_w^ℓ S(w, v)|_{w=0}` for `ℓ < n`.
    pub fn dual_sections(&self, v: C64, n: usize) -> Result<Vec<C64>> {
        let rho = self.cauchy_radius(v);
        if rho < 1e-13 {
            return Err(Error::CoincidentPoints);
        }
        let d = cauchy_derivatives(
            |w| self.kernel(w, v).unwrap_or(C64::new(f64::NAN, f64::NAN)),
            cz(0.0),
            rho,
            n,
        )?;
        Ok(d.into_iter().map(|x| -x).collect())
    }

    /// `φ₁` from the closed form `φ₀·[−2iπα − (θ′/θ)(v − X) + (θ′/θ)(v)]`.
    pub fn phi1_closed_form(&self, v: C64) -> C64 {
        let lat = &self.data.lattice;
        let a = lat.theta(v - self.x);
        let b = lat.theta(v);
        let phi0 = self.kernel(v, cz(0.0)).unwrap();
        phi0 * (-I * 2.0 * PI * self.chi.alpha - a[1] / a[0] + b[1] / b[0])
    }
}

/// `Φ`, `Φ∨` as coefficients of `√dz`, and the inverse from `Φ^{-1} = −(2ω₁)^{-2} Φ∨ σ_x`.
#[derive(Clone, Debug)]
pub struct Phi1 {
    pub v: C64,
    pub phi: DMatrix<C64>,
    pub phi_dual: DMatrix<C64>,
    pub inverse: DMatrix<C64>,
    /// `‖Φ·Φ^{-1} − 1‖`.
    pub inverse_residual: f64,
    /// `‖ΦΦ∨ + (2ω₁)²σ_x‖ / |2ω₁|²`.
    pub product_residual: f64,
}

pub fn sigma_x() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[cz(0.0), cz(1.0), cz(1.0), cz(0.0)])
}

/// Frame at the point `v` (the column for `−v` is the other sheet).
pub fn build_phi1_at(v: C64, szego: &Szego) -> Result<Phi1> {
    let data = &szego.data;
    let dzdv = data.dz_dv(v)?;
    if dzdv.norm() < 1e-10 {
        return Err(Error::BranchPoint);
    }
    let s1 = dzdv.inv().sqrt();
    let s2 = I * s1;
    let f_p = szego.sections(v, 2)?;
    let f_m = szego.sections(-v, 2)?;
    let d_p = szego.dual_sections(v, 2)?;
    let d_m = szego.dual_sections(-v, 2)?;
    let phi = DMatrix::from_row_slice(2, 2, &[f_p[0] * s1, f_m[0] * s2, f_p[1] * s1, f_m[1] * s2]);
    let phi_dual = DMatrix::from_row_slice(2, 2, &[d_p[0] * s1, d_p[1] * s1, d_m[0] * s2, d_m[1] * s2]);
    let w2 = data.two_omega().powi(2);
    let inverse = &phi_dual * sigma_x() * (-w2.inv());
    let id = DMatrix::<C64>::identity(2, 2);
    let inverse_residual = (&phi * &inverse - &id).norm();
    let product_residual = (&phi * &phi_dual + sigma_x() * w2).norm() / w2.norm();
    Ok(Phi1 {
        v,
        phi,
        phi_dual,
        inverse,
        inverse_residual,
        product_residual,
    })
}

/// Frame at `z`, using the [`Sheet::Plus`] preimage for the first column.
pub fn build_phi1(z: C64, szego: &Szego) -> Result<Phi1> {
    let data = &szego.data;
    let scale = 1.0 + z.norm();
    if data.e.iter().any(|e| (z - e).norm() < 1e-10 * scale) {
        return Err(Error::BranchPoint);
    }
    build_phi1_at(wp_inverse(z, data, Sheet::Plus)?, szego)
}

/// `det[φ_a(±v)] / ℘′(v)` in the coordinate `v`; constant in `v`.
pub fn det_over_wp_prime(v: C64, szego: &Szego) -> Result<C64> {
    let a = szego.sections(v, 2)?;
    let b = szego.sections(-v, 2)?;
    let (_, dp) = szego.data.lattice.wp(v)?;
    Ok((a[0] * b[1] - a[1] * b[0]) / dp)
}

/// `|G(Σp − Σq)/G(0) · E(p₁,p₂)E(q₂,q₁)/Π E(p_i,q_j) − det S(p_a, q_b)|`,
/// relative to the size of the determinant's terms.
pub fn fay_check(p: [C64; 2], q: [C64; 2], szego: &Szego) -> Result<f64> {
    let lat = &szego.data.lattice;
    let pts = [p[0], p[1], q[0], q[1]];
    for i in 0..4 {
        for j in i + 1..4 {
            if lat.distance_to_lattice(pts[i] - pts[j]) < 1e-8 {
                return Err(Error::CoincidentPoints);
            }
        }
    }
    let s = |a: usize, b: usize| szego.kernel(p[a], q[b]);
    let m = Matrix2::new(s(0, 0)?, s(0, 1)?, s(1, 0)?, s(1, 1)?);
    let det = m.determinant();
    let e = |a: C64, b: C64| szego.prime_form(a, b);
    let lhs = szego.g(p[0] + p[1] - q[0] - q[1]) / szego.g(cz(0.0)) * e(p[0], p[1]) * e(q[1], q[0])
        / (e(p[0], q[0]) * e(p[0], q[1]) * e(p[1], q[0]) * e(p[1], q[1]));
    let scale = (m[(0, 0)] * m[(1, 1)]).norm() + (m[(0, 1)] * m[(1, 0)]).norm();
    Ok((lhs - det).norm() / scale)
}

/// The `q₂ → q₁` limit: `det[S(p_a,q), ∂_q S(p_a,q)]` against
/// `G(p₁+p₂−2q)/G(0) · E(p₁,p₂)/(E(p₁,q)² E(p₂,q)²)`.
pub fn fay_degenerate_check(p: [C64; 2], q: C64, szego: &Szego) -> Result<f64> {
    let lat = &szego.data.lattice;
    let rho = (0.1 * lat.tau.im.min(1.0))
        .min(lat.distance_to_lattice(p[0] - q) / 2.0)
        .min(lat.distance_to_lattice(p[1] - q) / 2.0);
    let col = |a: usize| -> Result<Vec<C64>> {
        cauchy_derivatives(
            |w| szego.kernel(p[a], w).unwrap_or(C64::new(f64::NAN, f64::NAN)),
            q,
            rho,
            2,
        )
    };
    let (c0, c1) = (col(0)?, col(1)?);
    let det = c0[0] * c1[1] - c0[1] * c1[0];
    let e = |a: C64, b: C64| szego.prime_form(a, b);
    let rhs =
        szego.g(p[0] + p[1] - q * 2.0) / szego.g(cz(0.0)) * e(p[0], p[1]) / (e(p[0], q).powi(2) * e(p[1], q).powi(2));
    let scale = (c0[0] * c1[1]).norm() + (c0[1] * c1[0]).norm();
    Ok((det - rhs).norm() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn rand_v(rng: &mut ChaCha8Rng, tau: C64) -> C64 {
        cz(rng.gen_range(0.05..0.95)) + tau * rng.gen_range(0.05..0.95)
    }

    const TAU: C64 = C64 { re: 0.23, im: 1.1 };

    #[test]
    fn theta_quasi_periodicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(theta1(cz(0.0), TAU).unwrap()[0].norm() < 1e-15);
        for _ in 0..20 {
            let v = c(rng.gen_range(-2.0..2.0), rng.gen_range(-1.5..1.5));
            let t = theta1(v, TAU).unwrap();
            let t1 = theta1(v + 1.0, TAU).unwrap();
            let tt = theta1(v + TAU, TAU).unwrap();
            let tm = theta1(-v, TAU).unwrap();
            let sc = t[0].norm().max(1e-3);
            assert!((t1[0] + t[0]).norm() < 1e-12 * sc);
            assert!((tt[0] + (-I * 2.0 * PI * v - I * PI * TAU).exp() * t[0]).norm() < 1e-12 * tt[0].norm().max(1e-3));
            assert!((tm[0] + t[0]).norm() < 1e-13 * sc);
            assert!((tm[1] - t[1]).norm() < 1e-12 * t[1].norm().max(1.0));
        }
    }

    #[test]
    fn theta_derivatives_match_differences() {
        let v = c(0.3, 0.2);
        let h = 1e-5;
        let t = theta1(v, TAU).unwrap();
        for k in 0..3 {
            let fd = (theta1(v + h, TAU).unwrap()[k] - theta1(v - h, TAU).unwrap()[k]) / (2.0 * h);
            assert!((fd - t[k + 1]).norm() < 1e-7 * t[k + 1].norm().max(1.0));
        }
        // Argument reduction must agree with the raw series far from the origin.
        let far = c(2.7, 2.9);
        let direct = theta_series(far, TAU, 40);
        let reduced = theta1(far, TAU).unwrap();
        for k in 0..4 {
            assert!((direct[k] - reduced[k]).norm() < 1e-10 * direct[k].norm());
        }
    }

    fn lattice_sum(v: C64, tau: C64) -> C64 {
        let mut s = v.powi(-2);
        for m in -40i32..=40 {
            for n in -40i32..=40 {
                if m == 0 && n == 0 {
                    continue;
                }
                let l = cz(m as f64) + tau * n as f64;
                s += (v + l).powi(-2) - l.powi(-2);
            }
        }
        s
    }

    fn trig_sum(v: C64, tau: C64) -> C64 {
        let mut s = -cz(PI * PI / 3.0);
        for n in -30i32..=30 {
            s += PI * PI / (PI * (v + tau * n as f64)).sin().powi(2);
            if n != 0 {
                s -= PI * PI / (PI * tau * n as f64).sin().powi(2);
            }
        }
        s
    }

    #[test]
    fn wp_against_sums() {
        let lat = Lattice::new(TAU).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let v = rand_v(&mut rng, TAU);
            let (p, dp) = lat.wp(v).unwrap();
            assert!((p - trig_sum(v, TAU)).norm() < 1e-10 * p.norm().max(1.0));
            assert!((p - lattice_sum(v, TAU)).norm() < 1e-2 * p.norm().max(1.0));
            assert!((lat.wp(-v).unwrap().0 - p).norm() < 1e-10 * p.norm());
            assert!((lat.wp(v + 1.0).unwrap().0 - p).norm() < 1e-10 * p.norm());
            assert!((lat.wp(v + TAU).unwrap().0 - p).norm() < 1e-10 * p.norm());
            let h = 1e-5;
            let fd = (lat.wp(v + h).unwrap().0 - lat.wp(v - h).unwrap().0) / (2.0 * h);
            assert!((fd - dp).norm() < 1e-6 * dp.norm().max(1.0));
        }
        assert_eq!(lat.wp(TAU + 1.0), Err(Error::PoleOfWp));
    }

    #[test]
    fn wp_differential_equation() {
        let data = EllipticData::from_tau(TAU, c(0.7, 0.1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let v = rand_v(&mut rng, TAU);
            let (z, y) = data.point(v).unwrap();
            let lhs = y * y;
            let rhs = z.powi(3) * 4.0 - data.g2 * z - data.g3;
            assert!((lhs - rhs).norm() < 1e-8 * lhs.norm().max(1.0));
            assert!((lhs - data.cubic(z)).norm() < 1e-8 * lhs.norm().max(1.0));
        }
        assert!(data.half_period_defect() < 1e-12);
        assert!(data.half_periods_distinct());
    }

    impl EllipticData {
        fn half_periods_distinct(&self) -> bool {
            (self.e[0] - self.e[1]).norm() > 1e-6 && (self.e[1] - self.e[2]).norm() > 1e-6
        }
    }

    #[test]
    fn periods_round_trip() {
        let data = EllipticData::from_tau(c(0.1, 0.9), c(0.8, -0.2)).unwrap();
        let back = curve_periods(data.e[0], data.e[1], data.e[2]).unwrap();
        assert!(back.half_period_defect() < 1e-8);
        assert!((back.g2 - data.g2).norm() < 1e-8 * data.g2.norm());
        assert!((back.omega1.powi(2) - data.omega1.powi(2)).norm() < 1e-8 * data.omega1.norm_sqr());
    }

    #[test]
    fn periods_examples() {
        let lem = curve_periods(cz(0.5), cz(-0.5), cz(0.0)).unwrap();
        assert!(lem.tau.re.abs() < 1e-10);
        assert!(lem.half_period_defect() < 1e-8);
        // Shifted, non-symmetric and complex data.
        for e in [
            [cz(1.0), cz(2.5), cz(-0.3)],
            [c(0.2, 1.0), c(-1.0, 0.1), c(0.7, -0.6)],
            [cz(0.0), cz(-1.44), cz(-1.0 / 1.44)],
        ] {
            let d = curve_periods(e[0], e[1], e[2]).unwrap();
            assert!(d.tau.im > 0.0);
            assert!(d.half_period_defect() < 1e-8, "{e:?}");
            let l = c(2.0, 0.5);
            let s = curve_periods(e[0] * l, e[1] * l, e[2] * l).unwrap();
            assert!((s.tau - d.tau).norm() < 1e-8);
            assert!((s.omega1.powi(2) * l - d.omega1.powi(2)).norm() < 1e-8 * d.omega1.norm_sqr());
        }
        assert_eq!(
            curve_periods(cz(1.0), cz(1.0), cz(0.0)).unwrap_err(),
            Error::DegenerateCurve
        );
    }

    #[test]
    fn inverse_round_trip() {
        let data = curve_periods(c(0.2, 1.0), c(-1.0, 0.1), c(0.7, -0.6)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let z = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let v = wp_inverse(z, &data, Sheet::Plus).unwrap();
            let (zz, y) = data.point(v).unwrap();
            assert!((zz - z).norm() < 1e-10 * (1.0 + z.norm()));
            assert_eq!(Sheet::of_y(y), Sheet::Plus);
            let w = wp_inverse(z, &data, Sheet::Minus).unwrap();
            assert!(data.lattice.distance_to_lattice(v + w) < 1e-8);
        }
        let h = wp_inverse(data.e[0], &data, Sheet::Plus).unwrap();
        assert!((h - 0.5).norm() < 1e-8);
    }

    fn szego() -> Szego {
        let data = EllipticData::from_tau(TAU, c(0.6, 0.05)).unwrap();
        Szego::new(Character::new(0.3, 0.15), &data).unwrap()
    }

    #[test]
    fn szego_monodromy_and_diagonal() {
        let s = szego();
        let (ma, mb) = s.chi.multipliers();
        let v = c(0.31, 0.4);
        let w = c(-0.2, 0.17);
        let k = s.kernel(v, w).unwrap();
        assert!((s.kernel(v + 1.0, w).unwrap() - ma * k).norm() < 1e-10 * k.norm());
        assert!((s.kernel(v + TAU, w).unwrap() - mb * k).norm() < 1e-10 * k.norm());
        assert!((s.kernel(v, w + 1.0).unwrap() - k / ma).norm() < 1e-10 * k.norm());
        assert!((s.kernel(v, w + TAU).unwrap() - k / mb).norm() < 1e-10 * k.norm());
        // (v − w)S(v, w) → 1, with an O(v − w) defect.
        let d1 = ((s.kernel(v, v - 1e-4).unwrap() * 1e-4) - 1.0).norm();
        let d2 = ((s.kernel(v, v - 5e-5).unwrap() * 5e-5) - 1.0).norm();
        assert!(2.0 * d2 - d1 < 1e-6);
        let dual = Szego::new(s.chi.inverse(), &s.data).unwrap();
        assert!((dual.kernel(w, v).unwrap() + k).norm() < 1e-12 * k.norm());
        let bad = Character::new(0.0, 0.0);
        assert_eq!(Szego::new(bad, &s.data).unwrap_err(), Error::ThetaDivisor);
    }

    #[test]
    fn sections_behave() {
        let s = szego();
        let v = c(0.21, 0.33);
        let f = s.sections(v, 3).unwrap();
        assert!((f[1] - s.phi1_closed_form(v)).norm() < 1e-8 * f[1].norm());
        let (ma, mb) = s.chi.multipliers();
        let g = s.sections(v + 1.0, 2).unwrap();
        let h = s.sections(v + TAU, 2).unwrap();
        let fd = s.dual_sections(v, 2).unwrap();
        let gd = s.dual_sections(v + TAU, 2).unwrap();
        for l in 0..2 {
            assert!((g[l] - ma * f[l]).norm() < 1e-10 * f[l].norm());
            assert!((h[l] - mb * f[l]).norm() < 1e-10 * f[l].norm());
            assert!((gd[l] - fd[l] / mb).norm() < 1e-10 * fd[l].norm());
        }
        // Laurent leading terms at the origin.
        let e = 1e-3;
        for u in [c(e, 0.0), c(0.0, e), c(-e, e)] {
            let a = s.sections(u, 2).unwrap();
            let b = s.dual_sections(u, 2).unwrap();
            assert!((a[0] * u - 1.0).norm() < 5e-3);
            assert!((a[1] * u * u - 1.0).norm() < 5e-5);
            assert!((b[0] * u - 1.0).norm() < 5e-3);
            assert!((b[1] * u * u - 1.0).norm() < 5e-5);
        }
    }

    #[test]
    fn frame_identities() {
        let s = szego();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r0 = det_over_wp_prime(c(0.2, 0.3), &s).unwrap();
        for _ in 0..20 {
            let v = rand_v(&mut rng, TAU);
            let f = build_phi1_at(v, &s).unwrap();
            assert!(f.product_residual < 1e-8);
            assert!(f.inverse_residual < 1e-8);
            let a = s.sections(v, 2).unwrap();
            let b = s.sections(-v, 2).unwrap();
            let ad = s.dual_sections(v, 2).unwrap();
            let bd = s.dual_sections(-v, 2).unwrap();
            let (_, dp) = s.data.lattice.wp(v).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let want = if i == j { cz(0.0) } else { -dp };
                    assert!((a[i] * ad[j] - b[i] * bd[j] - want).norm() < 1e-8 * dp.norm());
                }
            }
            let r = det_over_wp_prime(v, &s).unwrap();
            assert!((r - r0).norm() < 1e-8 * r0.norm());
        }
        let z = c(0.4, -0.3);
        let f = build_phi1(z, &s).unwrap();
        assert!((s.data.z_of_v(f.v).unwrap() - z).norm() < 1e-10);
        assert_eq!(build_phi1(s.data.e[1], &s).unwrap_err(), Error::BranchPoint);
    }

    #[test]
    fn fay_identity() {
        let s = szego();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let p = [rand_v(&mut rng, TAU), rand_v(&mut rng, TAU)];
            let q = [rand_v(&mut rng, TAU), rand_v(&mut rng, TAU)];
            assert!(fay_check(p, q, &s).unwrap() < 1e-8);
            assert!(fay_degenerate_check(p, q[0], &s).unwrap() < 1e-6);
        }
        let p = c(0.3, 0.3);
        assert_eq!(
            fay_check([p, p], [c(0.1, 0.2), c(0.5, 0.1)], &s),
            Err(Error::CoincidentPoints)
        );
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn theta_quasi_periodic_for_any_tau(
            tr in -0.5f64..0.5, ti in 0.6f64..2.0, vr in -1.0f64..1.0, vi in -1.0f64..1.0,
        ) {
            let tau = c(tr, ti);
            let v = c(vr, vi);
            let t = theta1(v, tau).unwrap()[0];
            let t1 = theta1(v + 1.0, tau).unwrap()[0];
            let tt = theta1(v + tau, tau).unwrap()[0];
            let want = -(-I * 2.0 * PI * v - I * PI * tau).exp() * t;
            proptest::prop_assert!((t1 + t).norm() <= 1e-12 * t.norm().max(1e-3));
            proptest::prop_assert!((tt - want).norm() <= 1e-12 * tt.norm().max(1e-3));
        }

        #[test]
        fn wp_satisfies_its_ode(
            tr in -0.5f64..0.5, ti in 0.8f64..1.8, a in 0.05f64..0.95, b in 0.05f64..0.95,
        ) {
            let tau = c(tr, ti);
            let lat = Lattice::new(tau).unwrap();
            let e: Vec<C64> = lat.half_periods().iter().map(|h| lat.wp(*h).unwrap().0).collect();
            let (p, dp) = lat.wp(cz(a) + tau * b).unwrap();
            let rhs = (p - e[0]) * (p - e[1]) * (p - e[2]) * 4.0;
            proptest::prop_assert!((dp * dp - rhs).norm() <= 1e-8 * rhs.norm().max(1.0));
            proptest::prop_assert!((e[0] + e[1] + e[2]).norm() < 1e-9 * e[0].norm());
        }
    }
}
