//! Scalar biorthogonalization over a supplied section basis and contour.
//!
//! Nothing here knows about the genus of the underlying curve. A [`Pairing`]
//! bundles a basis `φ_a`, a dual basis `φ∨_b`, a scalar weight `Y` and a
//! contour, and everything else is built from the bimoments
//! `µ_{ab} = ∫ Y φ_a φ∨_b`.
//!
//! Families are stored as coefficient rows: row `n` of `psi` expresses `ψ_n`
//! in the `φ` basis. The default normalization is monic (coefficient of `φ_n`
//! equal to one); the determinant normalization is kept alongside.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::par;
use crate::polyalg::CPoly;
use crate::quadcontour::ContourSpec;
use crate::C64;

/// Values of the first basis sections at a point.
pub type SectionFn<'a> = &'a (dyn Fn(C64) -> Vec<C64> + Sync);
pub type ScalarFn<'a> = &'a (dyn Fn(C64) -> C64 + Sync);

/// Relative threshold on `|D_n|` against the Hadamard bound of its block.
pub const DEGENERACY_REL: f64 = 1e-12;

#[derive(Clone, Copy)]
pub struct Pairing<'a> {
    pub basis: SectionFn<'a>,
    pub dual: SectionFn<'a>,
    pub weight: ScalarFn<'a>,
    pub contour: &'a ContourSpec,
}

/// Basis values at every node, one column per node.
#[derive(Clone, Debug)]
pub struct NodeTable {
    pub phi: DMatrix<C64>,
    pub dual: DMatrix<C64>,
    /// Quadrature weight times `Y` at each node.
    pub wy: Vec<C64>,
}

impl<'a> Pairing<'a> {
    pub fn tabulate(&self, n: usize) -> NodeTable {
        let m = self.contour.nodes.len();
        let cols = par::map_range(m, |i| {
            let p = self.contour.nodes[i];
            let a = (self.basis)(p);
            let b = (self.dual)(p);
            let w = self.contour.weights[i] * (self.weight)(p);
            (a, b, w)
        });
        let mut phi = DMatrix::zeros(n, m);
        let mut dual = DMatrix::zeros(n, m);
        let mut wy = Vec::with_capacity(m);
        for (i, (a, b, w)) in cols.into_iter().enumerate() {
            for k in 0..n {
                phi[(k, i)] = a[k];
                dual[(k, i)] = b[k];
            }
            wy.push(w);
        }
        NodeTable { phi, dual, wy }
    }
}

impl NodeTable {
    /// `Σ_i wY_i f_i g_i` together with `Σ_i |wY_i f_i g_i|`.
    fn pair_rows(&self, f: &[C64], g: &[C64]) -> (C64, f64) {
        let mut s = C64::new(0.0, 0.0);
        let mut a = 0.0;
        for i in 0..self.wy.len() {
            let t = self.wy[i] * f[i] * g[i];
            s += t;
            a += t.norm();
        }
        (s, a)
    }

    /// Values of `Σ_a c_a φ_a` at the nodes.
    pub fn combine(&self, coeffs: &[C64], dual: bool) -> Vec<C64> {
        let src = if dual { &self.dual } else { &self.phi };
        (0..src.ncols())
            .map(|i| coeffs.iter().enumerate().map(|(a, c)| c * src[(a, i)]).sum())
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct BimomentData {
    pub mu: DMatrix<C64>,
    /// `D_0 = 1, D_1, …, D_N`.
    pub minors: Vec<C64>,
    /// Hadamard bound of each leading block, same indexing as `minors`.
    pub hadamard: Vec<f64>,
    /// Indices `n` with `|D_n| < 1e-12·hadamard[n]`.
    pub degenerate: Vec<usize>,
}

impl BimomentData {
    pub fn from_mu(mu: DMatrix<C64>) -> Self {
        let n = mu.nrows();
        let mut minors = vec![C64::new(1.0, 0.0)];
        let mut hadamard = vec![1.0];
        let mut degenerate = Vec::new();
        for k in 1..=n {
            let block = mu.view((0, 0), (k, k)).clone_owned();
            let d = block.clone().lu().determinant();
            let h: f64 = (0..k).map(|i| block.row(i).norm()).product();
            if d.norm() <= DEGENERACY_REL * h {
                degenerate.push(k);
            }
            minors.push(d);
            hadamard.push(h);
        }
        BimomentData {
            mu,
            minors,
            hadamard,
            degenerate,
        }
    }

    pub fn len(&self) -> usize {
        self.mu.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.nrows() == 0
    }

    /// 2-norm condition number of `µ`.
    pub fn condition_number(&self) -> f64 {
        let sv = self.mu.clone().singular_values();
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// `µ_{ab} = ∫ Y φ_a φ∨_b` for `a, b < n`.
pub fn bimoments(pairing: &Pairing, n: usize) -> Result<BimomentData> {
    let table = pairing.tabulate(n);
    for (i, w) in table.wy.iter().enumerate() {
        if !(w.re.is_finite() && w.im.is_finite())
            || table
                .phi
                .column(i)
                .iter()
                .chain(table.dual.column(i).iter())
                .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            let z = pairing.contour.nodes[i];
            return Err(Error::NonFinite {
                index: i,
                re: z.re,
                im: z.im,
            });
        }
    }
    Ok(BimomentData::from_mu(mu_from_table(&table, n)))
}

pub fn mu_from_table(table: &NodeTable, n: usize) -> DMatrix<C64> {
    let entries = par::map_range(n * n, |k| {
        let (a, b) = (k / n, k % n);
        let f: Vec<C64> = table.phi.row(a).iter().copied().collect();
        let g: Vec<C64> = table.dual.row(b).iter().copied().collect();
        table.pair_rows(&f, &g).0
    });
    DMatrix::from_row_slice(n, n, &entries)
}

#[derive(Clone, Debug)]
pub struct BiorthFamily {
    /// Row `n`: monic coefficients of `ψ_n` in the `φ` basis.
    pub psi: DMatrix<C64>,
    /// Row `n`: monic coefficients of `ψ∨_n` in the `φ∨` basis.
    pub psi_dual: DMatrix<C64>,
    /// `h_n = ⟨ψ_n, ψ∨_n⟩` for the monic family.
    pub h: Vec<C64>,
    /// Coefficients from the bordered-determinant formula.
    pub det_psi: DMatrix<C64>,
    pub det_psi_dual: DMatrix<C64>,
    /// `D_{n+1}·D_n`, the norms of the determinant family.
    pub h_det: Vec<C64>,
    /// Per-row distance between the Gram–Schmidt and determinant rows after rescaling.
    pub collinearity: Vec<f64>,
}

impl BiorthFamily {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// `ψ_n(p)` from basis values at `p`.
    pub fn eval(&self, n: usize, basis_vals: &[C64]) -> C64 {
        (0..=n).map(|a| self.psi[(n, a)] * basis_vals[a]).sum()
    }

    pub fn eval_dual(&self, n: usize, dual_vals: &[C64]) -> C64 {
        (0..=n).map(|a| self.psi_dual[(n, a)] * dual_vals[a]).sum()
    }

    pub fn max_abs_h(&self) -> f64 {
        self.h.iter().map(|h| h.norm()).fold(0.0, f64::max)
    }
}

/// Builds the monic biorthogonal family by Gram–Schmidt and cross-checks it
/// against the determinant formula.
///
/// Fails with the index of the first degenerate minor.
pub fn biorthogonalize(bm: &BimomentData) -> Result<BiorthFamily> {
    if let Some(&k) = bm.degenerate.first() {
        return Err(Error::DegenerateMinor { index: k });
    }
    Ok(gram_schmidt(bm, bm.len()))
}

/// Like [`biorthogonalize`] but returns the family up to the first degenerate
/// minor together with that minor's index.
pub fn biorthogonalize_prefix(bm: &BimomentData) -> (BiorthFamily, Option<usize>) {
    match bm.degenerate.first() {
        // ψ_n needs D_n ≠ 0 and h_n needs D_{n+1} ≠ 0.
        Some(&k) => (gram_schmidt(bm, k - 1), Some(k)),
        None => (gram_schmidt(bm, bm.len()), None),
    }
}

fn gram_schmidt(bm: &BimomentData, len: usize) -> BiorthFamily {
    let n = bm.len();
    let mu = &bm.mu;
    let pair = |a: &DVector<C64>, b: &DVector<C64>| -> C64 { (a.transpose() * mu * b)[(0, 0)] };
    let mut psi: Vec<DVector<C64>> = Vec::with_capacity(len);
    let mut dual: Vec<DVector<C64>> = Vec::with_capacity(len);
    let mut h = Vec::with_capacity(len);
    for k in 0..len {
        let mut p = DVector::zeros(n);
        p[k] = C64::new(1.0, 0.0);
        let mut d = p.clone();
        // Modified Gram–Schmidt, twice, to keep the residual at round-off level.
        for _ in 0..2 {
            for j in 0..k {
                let cp = pair(&p, &dual[j]) / h[j];
                p -= &psi[j] * cp;
                let cd = pair(&psi[j], &d) / h[j];
                d -= &dual[j] * cd;
            }
        }
        h.push(pair(&p, &d));
        psi.push(p);
        dual.push(d);
    }

    let mut det_psi = DMatrix::zeros(len, n);
    let mut det_dual = DMatrix::zeros(len, n);
    for k in 0..len {
        for a in 0..=k {
            let sign = if (a + k) % 2 == 0 { 1.0 } else { -1.0 };
            let rows: Vec<usize> = (0..=k).filter(|&i| i != a).collect();
            let m = DMatrix::from_fn(k, k, |i, j| mu[(rows[i], j)]);
            det_psi[(k, a)] = det_or_one(m) * sign;
            let cols: Vec<usize> = (0..=k).filter(|&j| j != a).collect();
            let m = DMatrix::from_fn(k, k, |i, j| mu[(i, cols[j])]);
            det_dual[(k, a)] = det_or_one(m) * sign;
        }
    }
    let h_det: Vec<C64> = (0..len).map(|k| bm.minors[k + 1] * bm.minors[k]).collect();
    let psi_m = DMatrix::from_fn(len, n, |k, a| psi[k][a]);
    let dual_m = DMatrix::from_fn(len, n, |k, a| dual[k][a]);
    let collinearity = (0..len)
        .map(|k| {
            let dk = bm.minors[k];
            let a = (det_psi.row(k) - psi_m.row(k) * dk).norm() / det_psi.row(k).norm();
            let b = (det_dual.row(k) - dual_m.row(k) * dk).norm() / det_dual.row(k).norm();
            a.max(b)
        })
        .collect();
    BiorthFamily {
        psi: psi_m,
        psi_dual: dual_m,
        h,
        det_psi,
        det_psi_dual: det_dual,
        h_det,
        collinearity,
    }
}

fn det_or_one(m: DMatrix<C64>) -> C64 {
    if m.nrows() == 0 {
        C64::new(1.0, 0.0)
    } else {
        m.lu().determinant()
    }
}

/// `ψ_n` for `n ≤ 2` from the `n`-fold integral of a product of alternants.
///
/// Returns coefficients in the `φ` basis, proportional to the determinant
/// family (the overall factor is `(-1)^n`).
pub fn heine_oracle(pairing: &Pairing, n: usize) -> Result<Vec<C64>> {
    if n > 2 {
        return Err(Error::HeineLimit);
    }
    if n == 0 {
        return Ok(vec![C64::new(1.0, 0.0)]);
    }
    let table = pairing.tabulate(n + 1);
    let m = table.wy.len();
    let minor = |skip: usize, pts: &[usize]| -> C64 {
        let rows: Vec<usize> = (0..=n).filter(|&a| a != skip).collect();
        let mat = DMatrix::from_fn(n, n, |i, j| table.phi[(rows[i], pts[j])]);
        mat.determinant()
    };
    let dual_det = |pts: &[usize]| -> C64 {
        let mat = DMatrix::from_fn(n, n, |i, j| table.dual[(i, pts[j])]);
        mat.determinant()
    };
    let partial: Vec<Vec<C64>> = par::map_range(m, |i| {
        let mut acc = vec![C64::new(0.0, 0.0); n + 1];
        let inner = if n == 1 { 1 } else { m };
        for j in 0..inner {
            let pts: Vec<usize> = if n == 1 { vec![i] } else { vec![i, j] };
            let w: C64 = pts.iter().map(|&k| table.wy[k]).product();
            let dd = dual_det(&pts);
            for (a, slot) in acc.iter_mut().enumerate() {
                let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
                *slot += w * dd * minor(a, &pts) * sign;
            }
        }
        acc
    });
    let fact = if n == 2 { 2.0 } else { 1.0 };
    let mut out = vec![C64::new(0.0, 0.0); n + 1];
    for row in partial {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    Ok(out.into_iter().map(|v| v / fact).collect())
}

/// `min_s ‖a - s·b‖ / ‖a‖`: how far two coefficient vectors are from being parallel.
pub fn collinearity_defect(a: &[C64], b: &[C64]) -> f64 {
    let bb: f64 = b.iter().map(|x| x.norm_sqr()).sum();
    let ab: C64 = a.iter().zip(b).map(|(x, y)| x * y.conj()).sum();
    let s = ab / bb;
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - s * y).norm_sqr()).sum();
    let den: f64 = a.iter().map(|x| x.norm_sqr()).sum();
    (num / den).sqrt()
}

#[derive(Clone, Debug)]
pub struct OrthogonalityReport {
    /// `residual[n][j] = ⟨ψ_n, φ∨_j⟩` for `j < n`.
    pub residuals: Vec<Vec<C64>>,
    /// Largest `|residual|` divided by the quadrature magnitude of that entry.
    pub max_relative: f64,
    /// `max_{n≠m} |⟨ψ_n, ψ∨_m⟩|`.
    pub max_offdiag: f64,
    /// `max_n |h_n|`, the scale for `max_offdiag`.
    pub max_h: f64,
    /// `max_n |⟨ψ_n, ψ∨_n⟩ - h_n| / |h_n|`.
    pub norm_defect: f64,
}

/// Recomputes every moment condition by fresh quadrature.
pub fn verify_orthogonality(family: &BiorthFamily, pairing: &Pairing) -> OrthogonalityReport {
    let n = family.len();
    let table = pairing.tabulate(family.psi.ncols());
    let coeff_rows = |m: &DMatrix<C64>, k: usize| -> Vec<C64> { m.row(k).iter().copied().collect() };
    let psi_vals: Vec<Vec<C64>> = (0..n)
        .map(|k| table.combine(&coeff_rows(&family.psi, k), false))
        .collect();
    let dual_vals: Vec<Vec<C64>> = (0..n)
        .map(|k| table.combine(&coeff_rows(&family.psi_dual, k), true))
        .collect();
    let mut residuals = Vec::with_capacity(n);
    let mut max_relative = 0.0f64;
    for (k, psi_k) in psi_vals.iter().enumerate() {
        let mut row = Vec::with_capacity(k);
        for j in 0..k {
            let phij: Vec<C64> = table.dual.row(j).iter().copied().collect();
            let (v, mag) = table.pair_rows(psi_k, &phij);
            max_relative = max_relative.max(v.norm() / mag.max(f64::MIN_POSITIVE));
            row.push(v);
        }
        residuals.push(row);
    }
    let gram = par::map_range(n * n, |idx| table.pair_rows(&psi_vals[idx / n], &dual_vals[idx % n]).0);
    let mut max_offdiag = 0.0f64;
    let mut norm_defect = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            let g = gram[a * n + b];
            if a == b {
                norm_defect = norm_defect.max((g - family.h[a]).norm() / family.h[a].norm());
            } else {
                max_offdiag = max_offdiag.max(g.norm());
            }
        }
    }
    OrthogonalityReport {
        residuals,
        max_relative,
        max_offdiag,
        max_h: family.max_abs_h(),
        norm_defect,
    }
}

/// `K_n(p, q) = Σ_{j<n} ψ_j(p) ψ∨_j(q) / h_j`.
pub fn cds_kernel(family: &BiorthFamily, n: usize, basis_p: &[C64], dual_q: &[C64]) -> C64 {
    (0..n.min(family.len()))
        .map(|j| family.eval(j, basis_p) * family.eval_dual(j, dual_q) / family.h[j])
        .sum()
}

/// Matrix of multiplication by `Z` in the `ψ` basis, plus its block form.
#[derive(Clone, Debug)]
pub struct BlockRecurrence {
    pub r: usize,
    /// `z[(n, m)] = ⟨Zψ_n, ψ∨_m⟩ / h_m`; rows `n < len - r` only.
    pub z: DMatrix<C64>,
    /// Largest off-band entry of the orthonormalized matrix over its largest entry.
    pub band_violation: f64,
    pub h: Vec<C64>,
}

impl BlockRecurrence {
    /// Number of complete blocks whose row is available.
    pub fn block_rows(&self) -> usize {
        self.z.nrows() / self.r
    }

    fn block(&self, k: usize, l: usize) -> DMatrix<C64> {
        self.z.view((k * self.r, l * self.r), (self.r, self.r)).clone_owned()
    }

    /// Coefficient of `Ψ_{k+1}` in `ZΨ_k`.
    pub fn a(&self, k: usize) -> DMatrix<C64> {
        self.block(k, k + 1)
    }

    pub fn b(&self, k: usize) -> DMatrix<C64> {
        self.block(k, k)
    }

    /// Coefficient of `Ψ_{k-1}` in `ZΨ_k`.
    pub fn c(&self, k: usize) -> DMatrix<C64> {
        self.block(k, k - 1)
    }

    pub fn h_block(&self, k: usize) -> DMatrix<C64> {
        DMatrix::from_fn(self.r, self.r, |i, j| {
            if i == j {
                self.h[k * self.r + i]
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }
}

/// Computes `Z_{nm} = ⟨Zψ_n, ψ∨_m⟩/h_m` and checks the band `|n - m| ≤ r`.
pub fn block_recurrence(
    family: &BiorthFamily,
    pairing: &Pairing,
    zfunc: ScalarFn,
    r: usize,
    tol: f64,
) -> Result<BlockRecurrence> {
    let n = family.len();
    if r == 0 || n < 2 * r {
        return Err(Error::InvalidArgument(format!(
            "family of length {n} too short for band width {r}"
        )));
    }
    let rows = ((n - r) / r) * r;
    let table = pairing.tabulate(family.psi.ncols());
    let zvals: Vec<C64> = pairing.contour.nodes.iter().map(|&p| zfunc(p)).collect();
    let psi_vals: Vec<Vec<C64>> = (0..rows)
        .map(|k| {
            let c: Vec<C64> = family.psi.row(k).iter().copied().collect();
            table
                .combine(&c, false)
                .into_iter()
                .zip(&zvals)
                .map(|(v, z)| v * z)
                .collect()
        })
        .collect();
    let dual_vals: Vec<Vec<C64>> = (0..n)
        .map(|k| {
            let c: Vec<C64> = family.psi_dual.row(k).iter().copied().collect();
            table.combine(&c, true)
        })
        .collect();
    let entries = par::map_range(rows * n, |idx| {
        let (a, b) = (idx / n, idx % n);
        table.pair_rows(&psi_vals[a], &dual_vals[b]).0 / family.h[b]
    });
    let z = DMatrix::from_row_slice(rows, n, &entries);
    let mut max_all = 0.0f64;
    let mut max_off = 0.0f64;
    for a in 0..rows {
        for b in 0..n {
            let v = z[(a, b)].norm() * (family.h[b].norm() / family.h[a].norm()).sqrt();
            max_all = max_all.max(v);
            if a.abs_diff(b) > r {
                max_off = max_off.max(v);
            }
        }
    }
    let band_violation = max_off / max_all.max(f64::MIN_POSITIVE);
    if band_violation > tol {
        return Err(Error::BandViolation {
            value: band_violation,
            bound: tol,
        });
    }
    Ok(BlockRecurrence {
        r,
        z,
        band_violation,
        h: family.h.clone(),
    })
}

/// Both sides of the Christoffel–Darboux identity at `n = ℓr`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CdResidual {
    pub kernel: C64,
    pub formula: C64,
    pub residual: f64,
}

/// Compares `K_{ℓr}(p, q)` with
/// `[Ψ∨_{ℓ-1}(q) H_{ℓ-1}^{-1} A_ℓ Ψ_ℓ(p) − Ψ∨_ℓ(q) H_ℓ^{-1} C_ℓ Ψ_{ℓ-1}(p)] / (Z(p) − Z(q))`,
/// where `A_ℓ`, `C_ℓ` are the blocks above and below the diagonal of row `ℓ-1`
/// and `ℓ` of the primal recurrence. For `ℓ = 0` both sides vanish.
#[allow(clippy::too_many_arguments)]
pub fn cd_identity_residual(
    family: &BiorthFamily,
    rec: &BlockRecurrence,
    ell: usize,
    zp: C64,
    zq: C64,
    basis_p: &[C64],
    dual_q: &[C64],
) -> Result<CdResidual> {
    let r = rec.r;
    let dz = zp - zq;
    if dz.norm() < 1e-12 * (1.0 + zp.norm()) {
        return Err(Error::SameFiber);
    }
    let kernel = cds_kernel(family, ell * r, basis_p, dual_q);
    if ell == 0 {
        return Ok(CdResidual {
            kernel,
            formula: C64::new(0.0, 0.0),
            residual: kernel.norm(),
        });
    }
    if ell > rec.block_rows() || (ell + 1) * r > family.len() {
        return Err(Error::InvalidArgument(format!("block {ell} needs a longer family")));
    }
    let psi_block = |k: usize| DVector::from_fn(r, |i, _| family.eval(k * r + i, basis_p));
    let dual_block = |k: usize| DVector::from_fn(r, |i, _| family.eval_dual(k * r + i, dual_q));
    let hinv = |k: usize| {
        DMatrix::from_fn(r, r, |i, j| {
            if i == j {
                C64::new(1.0, 0.0) / rec.h[k * r + i]
            } else {
                C64::new(0.0, 0.0)
            }
        })
    };
    let up = rec.z.view(((ell - 1) * r, ell * r), (r, r)).clone_owned();
    let down = rec.z.view((ell * r, (ell - 1) * r), (r, r)).clone_owned();
    let t1 = (dual_block(ell - 1).transpose() * hinv(ell - 1) * up * psi_block(ell))[(0, 0)];
    let t2 = (dual_block(ell).transpose() * hinv(ell) * down * psi_block(ell - 1))[(0, 0)];
    let formula = (t1 - t2) / dz;
    Ok(CdResidual {
        kernel,
        formula,
        residual: (kernel - formula).norm() / kernel.norm().max(f64::MIN_POSITIVE),
    })
}

#[derive(Clone, Debug)]
pub struct PadeResult {
    /// Monic, degree `n`.
    pub p: CPoly,
    /// `Q_{n-1}(z) = ∫ (P_n(z) − P_n(w)) Y(w) dw / (z − w)`.
    pub q: CPoly,
    /// The `n` orthogonality integrals evaluated with the computed `P_n`.
    pub residuals: Vec<C64>,
    /// Largest residual over the quadrature magnitude of its integrand.
    pub max_relative: f64,
    pub nodes: Vec<C64>,
}

/// Multi-point Padé denominator for the Cauchy transform of `Y`.
///
/// With nodes `z_1..z_{n-1}` the conditions are `∫ P_n Y g = 0` for
/// `g = 1/Π(w − z_ℓ)` and `g = 1/(Π(w − z_ℓ)(w − z_j))`. With no nodes they
/// are the ordinary moment conditions `∫ P_n Y w^k = 0`, `k < n`.
pub fn multipoint_pade(n: usize, nodes: &[C64], y: ScalarFn, contour: &ContourSpec) -> Result<PadeResult> {
    if n == 0 {
        return Err(Error::InvalidArgument("degree must be ≥ 1".into()));
    }
    if !nodes.is_empty() && nodes.len() + 1 != n {
        return Err(Error::InvalidArgument(format!(
            "degree {n} needs {} nodes, got {}",
            n - 1,
            nodes.len()
        )));
    }
    let tests = |w: C64| -> Vec<C64> {
        if nodes.is_empty() {
            return (0..n).map(|k| w.powu(k as u32)).collect();
        }
        let base: C64 = nodes.iter().map(|z| (w - z).inv()).product();
        std::iter::once(base)
            .chain(nodes.iter().map(|z| base / (w - z)))
            .collect()
    };
    let m = contour.nodes.len();
    let cols = par::map_range(m, |i| {
        let w = contour.nodes[i];
        (tests(w), contour.weights[i] * y(w))
    });
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for (i, (g, wy)) in cols.iter().enumerate() {
        let w = contour.nodes[i];
        let mut wk = C64::new(1.0, 0.0);
        for k in 0..=n {
            for (row, gv) in g.iter().enumerate() {
                let t = wy * gv * wk;
                if k < n {
                    a[(row, k)] += t;
                } else {
                    b[row] -= t;
                }
            }
            wk *= w;
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-14 * smax) {
        return Err(Error::DegenerateNodes);
    }
    let c = svd.solve(&b, 0.0).map_err(|_| Error::DegenerateNodes)?;
    let mut coeffs: Vec<C64> = c.iter().copied().collect();
    coeffs.push(C64::new(1.0, 0.0));
    let p = CPoly::raw(coeffs);

    let mut residuals = vec![C64::new(0.0, 0.0); n];
    let mut mags = vec![0.0; n];
    let mut moments = vec![C64::new(0.0, 0.0); n];
    for (i, (g, wy)) in cols.iter().enumerate() {
        let w = contour.nodes[i];
        let pw = p.eval(w);
        for (row, gv) in g.iter().enumerate() {
            let t = wy * gv * pw;
            residuals[row] += t;
            mags[row] += t.norm();
        }
        let mut wk = C64::new(1.0, 0.0);
        for mk in moments.iter_mut() {
            *mk += wy * wk;
            wk *= w;
        }
    }
    let max_relative = residuals
        .iter()
        .zip(&mags)
        .map(|(r, m)| r.norm() / m.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    // (P(z) - P(w))/(z - w) = Σ_k c_k Σ_{j<k} z^j w^{k-1-j}.
    let q = CPoly::raw(
        (0..n)
            .map(|j| ((j + 1)..=n).map(|k| p.coeff(k) * moments[k - 1 - j]).sum())
            .collect(),
    );
    Ok(PadeResult {
        p,
        q,
        residuals,
        max_relative,
        nodes: nodes.to_vec(),
    })
}

impl PadeResult {
    /// `∫ P_n(w) Y(w) dw / ((z − w) Π(w − z_ℓ))`. It vanishes at the nodes and
    /// decays like `z^{-2}`, which is exactly the orthogonality system.
    pub fn weighted_remainder(&self, z: C64, y: ScalarFn, contour: &ContourSpec) -> C64 {
        contour
            .nodes
            .iter()
            .zip(&contour.weights)
            .map(|(&w, &dw)| {
                let g: C64 = self.nodes.iter().map(|zl| (w - zl).inv()).product();
                dw * y(w) * self.p.eval(w) * g / (z - w)
            })
            .sum()
    }

    /// `Q_{n-1}(z)/P_n(z) − ∫ Y(w) dw/(z − w)`.
    pub fn approximation_error(&self, z: C64, y: ScalarFn, contour: &ContourSpec) -> C64 {
        let cauchy: C64 = contour
            .nodes
            .iter()
            .zip(&contour.weights)
            .map(|(&w, &dw)| dw * y(w) / (z - w))
            .sum();
        self.q.eval(z) / self.p.eval(z) - cauchy
    }
}
