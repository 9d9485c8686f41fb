//! Contours and quadrature rules.
//!
//! Segments and rays use Gauss–Legendre nodes, circles use the equispaced
//! trapezoid rule. Weights already contain the `dz/dparam` Jacobian, so an
//! integral is always `Σ f(z_i) w_i`.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::par;
use crate::C64;

pub const DEFAULT_LINE_NODES: usize = 200;
pub const DEFAULT_CIRCLE_NODES: usize = 256;
/// Node count used by [`cauchy_derivatives`].
pub const CAUCHY_NODES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ContourKind {
    Segment {
        a: C64,
        b: C64,
    },
    /// `start + direction·p` for `p ∈ [0, ∞)`, sampled through `u = exp(-decay·q)`.
    ///
    /// With `sqrt_endpoint` the ray parameter is `p = q²`, which turns an
    /// inverse square-root singularity at `start` into a smooth integrand.
    Ray {
        start: C64,
        direction: C64,
        decay: f64,
        sqrt_endpoint: bool,
    },
    /// `orientation` is `+1` for counterclockwise, `-1` for clockwise.
    Circle {
        center: C64,
        radius: f64,
        orientation: i8,
    },
}

impl ContourKind {
    pub fn segment(a: C64, b: C64) -> Self {
        ContourKind::Segment { a, b }
    }

    pub fn ray(start: C64, direction: C64, decay: f64) -> Self {
        ContourKind::Ray {
            start,
            direction,
            decay,
            sqrt_endpoint: false,
        }
    }

    pub fn sqrt_ray(start: C64, direction: C64, decay: f64) -> Self {
        ContourKind::Ray {
            start,
            direction,
            decay,
            sqrt_endpoint: true,
        }
    }

    pub fn circle(center: C64, radius: f64) -> Self {
        ContourKind::Circle {
            center,
            radius,
            orientation: 1,
        }
    }

    pub fn default_nodes(&self) -> usize {
        match self {
            ContourKind::Circle { .. } => DEFAULT_CIRCLE_NODES,
            _ => DEFAULT_LINE_NODES,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContourSpec {
    pub kind: ContourKind,
    pub nodes: Vec<C64>,
    pub weights: Vec<C64>,
}

impl ContourSpec {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

pub fn make_contour(kind: ContourKind, node_count: usize) -> Result<ContourSpec> {
    if node_count < 8 {
        return Err(Error::InvalidContour(format!(
            "node_count must be ≥ 8, got {node_count}"
        )));
    }
    let (nodes, weights) = match kind {
        ContourKind::Segment { a, b } => {
            let (x, w) = gauss_legendre(node_count);
            let mid = (a + b) * 0.5;
            let half = (b - a) * 0.5;
            (
                x.iter().map(|&xi| mid + half * xi).collect(),
                w.iter().map(|&wi| half * wi).collect(),
            )
        }
        ContourKind::Ray {
            start,
            direction,
            decay,
            sqrt_endpoint,
        } => {
            if !(decay > 0.0) {
                return Err(Error::InvalidContour("decay must be positive".into()));
            }
            if direction.norm() == 0.0 {
                return Err(Error::InvalidContour("ray direction is zero".into()));
            }
            let (x, w) = gauss_legendre(node_count);
            let mut nodes = Vec::with_capacity(node_count);
            let mut weights = Vec::with_capacity(node_count);
            for (&xi, &wi) in x.iter().zip(&w) {
                let u = 0.5 * (xi + 1.0);
                let q = -u.ln() / decay;
                let dq = 0.5 * wi / (decay * u);
                let (p, dp) = if sqrt_endpoint { (q * q, 2.0 * q * dq) } else { (q, dq) };
                nodes.push(start + direction * p);
                weights.push(direction * dp);
            }
            (nodes, weights)
        }
        ContourKind::Circle {
            center,
            radius,
            orientation,
        } => {
            if !(radius > 0.0) {
                return Err(Error::InvalidContour("radius must be positive".into()));
            }
            let o = if orientation < 0 { -1.0 } else { 1.0 };
            let h = 2.0 * PI / node_count as f64;
            let mut nodes = Vec::with_capacity(node_count);
            let mut weights = Vec::with_capacity(node_count);
            for k in 0..node_count {
                let e = C64::from_polar(1.0, o * h * k as f64);
                nodes.push(center + e * radius);
                weights.push(C64::new(0.0, o * h) * e * radius);
            }
            (nodes, weights)
        }
    };
    Ok(ContourSpec { kind, nodes, weights })
}

fn check_finite(i: usize, z: C64, v: C64) -> Result<()> {
    if v.re.is_finite() && v.im.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            index: i,
            re: z.re,
            im: z.im,
        })
    }
}

/// `Σ f(z_i) w_i`, evaluating the nodes in parallel.
pub fn integrate<F>(f: F, contour: &ContourSpec) -> Result<C64>
where
    F: Fn(C64) -> C64 + Sync + Send,
{
    let vals = par::map_range(contour.nodes.len(), |i| f(contour.nodes[i]));
    let mut acc = C64::new(0.0, 0.0);
    for (i, v) in vals.into_iter().enumerate() {
        check_finite(i, contour.nodes[i], v)?;
        acc += v * contour.weights[i];
    }
    Ok(acc)
}

/// Entrywise integral of a matrix-valued function.
pub fn integrate_matrix<F>(f: F, contour: &ContourSpec) -> Result<DMatrix<C64>>
where
    F: Fn(C64) -> DMatrix<C64> + Sync + Send,
{
    let vals = par::map_range(contour.nodes.len(), |i| f(contour.nodes[i]));
    let mut acc: Option<DMatrix<C64>> = None;
    for (i, m) in vals.into_iter().enumerate() {
        for v in m.iter() {
            check_finite(i, contour.nodes[i], *v)?;
        }
        let term = m * contour.weights[i];
        acc = Some(match acc {
            Some(a) => a + term,
            None => term,
        });
    }
    acc.ok_or_else(|| Error::InvalidContour("empty contour".into()))
}

/// Taylor coefficients `f^{(k)}(center)/k!` for `k < m` from a circle of the given radius.
pub fn cauchy_derivatives<F>(f: F, center: C64, radius: f64, m: usize) -> Result<Vec<C64>>
where
    F: Fn(C64) -> C64,
{
    cauchy_derivatives_with(f, center, radius, m, CAUCHY_NODES.max(2 * m + 8))
}

/// Same as [`cauchy_derivatives`] with an explicit node count.
///
/// This one runs sequentially: it is usually called from inside a parallel
/// sweep over evaluation points.
pub fn cauchy_derivatives_with<F>(f: F, center: C64, radius: f64, m: usize, nodes: usize) -> Result<Vec<C64>>
where
    F: Fn(C64) -> C64,
{
    if !(radius > 0.0) {
        return Err(Error::InvalidContour("radius must be positive".into()));
    }
    let h = 2.0 * PI / nodes as f64;
    let mut out = vec![C64::new(0.0, 0.0); m];
    for j in 0..nodes {
        let e = C64::from_polar(1.0, h * j as f64);
        let w = center + e * radius;
        let v = f(w);
        check_finite(j, w, v)?;
        // (1/2πi)∮ f/(w-c)^{k+1} dw with dw = iρe^{iθ}dθ reduces to a mean of f·(ρe^{iθ})^{-k}.
        let mut pk = C64::new(1.0, 0.0);
        let step = (e * radius).inv();
        for o in out.iter_mut() {
            *o += v * pk;
            pk *= step;
        }
    }
    for o in out.iter_mut() {
        *o /= nodes as f64;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn gauss_legendre_moments() {
        for n in [8, 33, 200, 400] {
            let (x, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n} sum={s}");
            let m2: f64 = x.iter().zip(&w).map(|(x, w)| x * x * w).sum();
            assert!((m2 - 2.0 / 3.0).abs() < 1e-13);
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn segment_and_circle_weights() {
        let s = make_contour(ContourKind::segment(c(-1.0, 0.0), c(1.0, 0.0)), 64).unwrap();
        assert!(s.nodes.iter().all(|z| z.re.abs() < 1.0));
        let sw: C64 = s.weights.iter().sum();
        assert!((sw - c(2.0, 0.0)).norm() < 1e-13);

        let circ = make_contour(ContourKind::circle(c(0.0, 0.0), 1.0), 128).unwrap();
        let sw: C64 = circ.weights.iter().sum();
        assert!(sw.norm() < 1e-13);
        let r = integrate(|z| z.inv(), &circ).unwrap();
        assert!((r - c(0.0, 2.0 * PI)).norm() < 1e-12);
        let r = integrate(|z| (z - 0.3).inv(), &circ).unwrap();
        assert!((r - c(0.0, 2.0 * PI)).norm() < 1e-12);
        assert!(integrate(|_| c(1.0, 0.0), &circ).unwrap().norm() < 1e-13);
    }

    #[test]
    fn circle_monomials() {
        let circ = make_contour(ContourKind::circle(c(0.0, 0.0), 1.0), 256).unwrap();
        for k in -20i32..=20 {
            let v = integrate(|z| z.powi(k), &circ).unwrap();
            let want = if k == -1 { c(0.0, 2.0 * PI) } else { c(0.0, 0.0) };
            assert!((v - want).norm() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn clockwise_flips_sign() {
        let cw = make_contour(
            ContourKind::Circle {
                center: c(0.0, 0.0),
                radius: 2.0,
                orientation: -1,
            },
            64,
        )
        .unwrap();
        let v = integrate(|z| z.inv(), &cw).unwrap();
        assert!((v + c(0.0, 2.0 * PI)).norm() < 1e-12);
    }

    #[test]
    fn ray_exponential() {
        let cc = 0.5f64;
        let ray = make_contour(ContourKind::ray(c(cc * cc, 0.0), c(1.0, 0.0), 1.0), 200).unwrap();
        let v = integrate(|z| (-z).exp(), &ray).unwrap();
        assert!((v.re - (-cc * cc).exp()).abs() < 1e-12);

        let sq = make_contour(ContourKind::sqrt_ray(c(0.0, 0.0), c(1.0, 0.0), 1.0), 200).unwrap();
        // ∫_0^∞ e^{-z}/√z dz = √π.
        let v = integrate(|z| (-z).exp() / z.sqrt(), &sq).unwrap();
        assert!((v.re - PI.sqrt()).abs() < 1e-12, "{v}");
    }

    #[test]
    fn gaussian_on_segment() {
        let s = make_contour(ContourKind::segment(c(-8.0, 0.0), c(8.0, 0.0)), 200).unwrap();
        let v = integrate(|z| (-z * z).exp(), &s).unwrap();
        assert!((v.re - PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn doubling_nodes_is_stable() {
        for kind in [
            ContourKind::segment(c(-8.0, 0.0), c(8.0, 0.0)),
            ContourKind::ray(c(0.25, 0.0), c(1.0, 0.0), 1.0),
        ] {
            let a = integrate(|z| (-z * z).exp() * (1.0 + z), &make_contour(kind, 200).unwrap()).unwrap();
            let b = integrate(|z| (-z * z).exp() * (1.0 + z), &make_contour(kind, 400).unwrap()).unwrap();
            assert!((a - b).norm() < 1e-10 * b.norm());
        }
    }

    #[test]
    fn errors() {
        assert!(make_contour(ContourKind::circle(c(0.0, 0.0), 0.0), 64).is_err());
        assert!(make_contour(ContourKind::ray(c(0.0, 0.0), c(1.0, 0.0), -1.0), 64).is_err());
        assert!(make_contour(ContourKind::circle(c(0.0, 0.0), 1.0), 4).is_err());
        let s = make_contour(ContourKind::segment(c(-1.0, 0.0), c(1.0, 0.0)), 8).unwrap();
        let e = integrate(|z| if z.re > 0.9 { c(f64::NAN, 0.0) } else { z }, &s);
        assert!(matches!(e, Err(Error::NonFinite { index: 7, .. })));
    }

    #[test]
    fn cauchy_examples() {
        let d = cauchy_derivatives(|w| w.exp(), c(0.0, 0.0), 0.5, 3).unwrap();
        for (got, want) in d.iter().zip([1.0, 1.0, 0.5]) {
            assert!((got - c(want, 0.0)).norm() < 1e-12);
        }
        let d = cauchy_derivatives(|w| (c(1.0, 0.0) - w).inv(), c(0.0, 0.0), 0.5, 4).unwrap();
        for got in d {
            assert!((got - c(1.0, 0.0)).norm() < 1e-10);
        }
    }
}
