//! One verification suite per task.

use abelian_mops::biortho::{
    bimoments, biorthogonalize, block_recurrence, cd_identity_residual, collinearity_defect, heine_oracle,
    multipoint_pade, verify_orthogonality, Pairing,
};
use abelian_mops::classical::{
    classical_mop_family, classical_weight, cover_weight, gram_z, hermite_scalar, phi_phi_constant, phi_phi_expected,
    printed_hermite, z_ray, ClassicalFamilySpec, ClassicalKind, PROJECTION_TOL,
};
use abelian_mops::elliptic1::{curve_periods, theta1, EllipticData, Sheet};
use abelian_mops::polyalg::CPoly;
use abelian_mops::quadcontour::{make_contour, ContourKind, ContourSpec};
use abelian_mops::torsion::{
    dk_quarter_periods, finite_orthogonality, finite_pairing_rank, scalar_power, torsion_condition_residual,
    torsion_points, torsion_pr, torsion_pr_minus1, DkFixture, TorsionSpec,
};
use abelian_mops::{Error, C64};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use std::f64::consts::PI;

use crate::args::*;
use crate::cplx::Cplx;
use crate::report::Report;

/// Why a task stopped before producing a full report.
#[derive(Clone, Debug, PartialEq)]
pub enum Failure {
    /// Bad parameters; exit code 2.
    Config(String),
    /// A computation broke down; exit code 1.
    Numeric(String),
}

fn stage<T>(name: &str, r: abelian_mops::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| match e {
        Error::InvalidArgument(_) | Error::DegenerateAlpha => Failure::Config(format!("{name}: {e}")),
        other => Failure::Numeric(format!("{name}: {other}")),
    })
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `[[re, im], ...]` rows of a matrix.
fn matrix_json(m: &DMatrix<C64>) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn execute(task: &Task) -> Result<Report, Failure> {
    match task {
        Task::Classical(a) => classical(a),
        Task::Biortho(a) => biortho(a),
        Task::Elliptic(EllipticAction::Theta(a)) => theta(a),
        Task::Elliptic(EllipticAction::Periods(a)) => periods(a),
        Task::Torsion(TorsionAction::Find(a)) => torsion_find(a),
        Task::Torsion(TorsionAction::Mop(a)) => torsion_mop(a),
        Task::Torsion(TorsionAction::Dk(a)) => dk(a),
        Task::VerifyCd(a) => verify_cd(a),
        Task::Pade(a) => pade(a),
    }
}

fn classical(a: &ClassicalArgs) -> Result<Report, Failure> {
    if a.n == 0 {
        return Err(Failure::Config("n must be ≥ 1".into()));
    }
    let spec = match a.kind {
        Kind::Hermite => ClassicalFamilySpec::hermite(a.c, a.n),
        Kind::Laguerre => ClassicalFamilySpec::laguerre(a.c, a.alpha, a.n),
    };
    let fam = stage("family", classical_mop_family(&spec))?;
    let mut r = Report::new();
    r.check("projection_defect", fam.projection_defect, PROJECTION_TOL);

    let ray = stage("contour", z_ray(&spec, a.nodes))?;
    let mut orth = 0.0f64;
    for j in 0..a.n {
        for k in 0..a.n {
            let g = stage("orthogonality", gram_z(&fam, j, k, &ray))?;
            let want = if j == k { spec.norm(j) } else { DMatrix::zeros(2, 2) };
            let scale = (max_abs(&spec.norm(j)) * max_abs(&spec.norm(k))).sqrt();
            orth = orth.max(max_abs(&(g - want)) / scale);
        }
    }
    r.check("orthogonality", orth, 1e-8);

    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let expected = phi_phi_expected(&spec);
    let mut phi = 0.0f64;
    for _ in 0..20 {
        let z = C64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let got = stage("frame", phi_phi_constant(&spec, z))?;
        phi = phi.max(max_abs(&(got - &expected)));
    }
    r.check("phi_phi_constant", phi, 1e-12);

    let mut weight = 0.0f64;
    for z in [0.1, 1.5, 2.0, 7.25] {
        if z <= spec.support_start() {
            continue;
        }
        let w = stage("weight", classical_weight(&spec, z))?;
        let cw = stage("weight", cover_weight(&spec, c(z)))?;
        weight = weight.max((&w - cw).norm() / w.norm());
    }
    r.check("cover_weight", weight, 1e-10);

    if spec.kind == ClassicalKind::Hermite {
        let mut printed = 0.0f64;
        for j in 1..a.n.min(4) {
            let p = printed_hermite(j, a.c).expect("printed up to j = 3");
            printed = printed.max(fam.p[j].distance(&p) / p.max_abs());
        }
        if a.n > 1 {
            r.check("printed", printed, 1e-10);
        }
    }

    let h: Vec<_> = (0..a.n).map(|j| matrix_json(&spec.norm(j))).collect();
    r.put("spec", spec);
    r.put("P", &fam.p);
    r.put("H", h);
    r.put("residual_max", orth);
    Ok(r)
}

fn monomials(n: usize) -> impl Fn(C64) -> Vec<C64> + Sync {
    move |x: C64| (0..n).map(|k| x.powu(k as u32)).collect()
}

fn biortho(a: &BiorthoArgs) -> Result<Report, Failure> {
    let n = a.n;
    let cover = CPoly::from_real(&a.cover);
    let band = cover.degree().unwrap_or(0);
    if band == 0 {
        return Err(Failure::Config("cover map must be non-constant".into()));
    }
    if n < 2 * band || n < 2 {
        return Err(Failure::Config(format!("n must be ≥ {}", (2 * band).max(2))));
    }
    let basis = monomials(n);
    let (contour, weight): (ContourSpec, Box<dyn Fn(C64) -> C64 + Sync>) = match a.weight {
        ScalarWeight::Legendre => (
            stage("contour", make_contour(ContourKind::segment(c(-1.0), c(1.0)), 64))?,
            Box::new(|_| c(1.0)),
        ),
        ScalarWeight::Hermite => (
            stage("contour", make_contour(ContourKind::segment(c(-10.0), c(10.0)), 200))?,
            Box::new(|t: C64| (-t * t).exp()),
        ),
    };
    let pairing = Pairing {
        basis: &basis,
        dual: &basis,
        weight: &*weight,
        contour: &contour,
    };
    let bm = stage("bimoments", bimoments(&pairing, n))?;
    let fam = stage("biorthogonalize", biorthogonalize(&bm))?;
    let rep = verify_orthogonality(&fam, &pairing);
    let mut r = Report::new();
    r.check("orthogonality.max_relative", rep.max_relative, 1e-8);
    r.check("orthogonality.offdiag", rep.max_offdiag / rep.max_h, 1e-8);
    r.check("norm_defect", rep.norm_defect, 1e-8);
    let h_det = (0..n)
        .map(|k| (fam.h_det[k] - fam.h[k] * bm.minors[k] * bm.minors[k]).norm() / fam.h_det[k].norm())
        .fold(0.0, f64::max);
    r.check("h_det", h_det, 1e-8);
    r.check(
        "collinearity",
        fam.collinearity.iter().cloned().fold(0.0, f64::max),
        1e-8,
    );
    let mut heine = 0.0f64;
    for k in 1..=2.min(n - 1) {
        let h = stage("heine", heine_oracle(&pairing, k))?;
        let row: Vec<C64> = (0..=k).map(|j| fam.det_psi[(k, j)]).collect();
        heine = heine.max(collinearity_defect(&h, &row));
    }
    r.check("heine", heine, 1e-6);
    let zf = move |t: C64| cover.eval(t);
    let rec = stage("recurrence", block_recurrence(&fam, &pairing, &zf, band, f64::INFINITY))?;
    r.check("band_violation", rec.band_violation, 1e-8);

    r.put("mu_condition_number", bm.condition_number());
    r.put("h", fam.h.iter().map(|x| pair(*x)).collect::<Vec<_>>());
    r.put("residual_max", rep.max_relative);
    r.put("band_violation", rec.band_violation);
    r.put("psi", matrix_json(&fam.psi));
    Ok(r)
}

fn verify_cd(a: &VerifyCdArgs) -> Result<Report, Failure> {
    let n = a.n;
    if n < 2 * (a.ell_max + 2) {
        return Err(Failure::Config(format!(
            "n must be ≥ {} for ell_max = {}",
            2 * (a.ell_max + 2),
            a.ell_max
        )));
    }
    // A non-orthogonal basis so that the family is not trivially the basis itself.
    let polys: Vec<CPoly> = (0..n)
        .map(|k| {
            let h = hermite_scalar(k);
            if k == 0 {
                h
            } else {
                &h + &hermite_scalar(k - 1).scale(c(0.3))
            }
        })
        .collect();
    let basis = move |t: C64| polys.iter().map(|p| p.eval(t)).collect::<Vec<_>>();
    let contour = stage("contour", make_contour(ContourKind::segment(c(-10.0), c(10.0)), 200))?;
    let gauss = |t: C64| (-t * t).exp();
    let pairing = Pairing {
        basis: &basis,
        dual: &basis,
        weight: &gauss,
        contour: &contour,
    };
    let fam = stage(
        "biorthogonalize",
        bimoments(&pairing, n).and_then(|bm| biorthogonalize(&bm)),
    )?;
    let shift = a.c;
    let z = move |t: C64| (t - shift) * (t - shift);
    let rec = stage("recurrence", block_recurrence(&fam, &pairing, &z, 2, f64::INFINITY))?;
    let mut r = Report::new();
    r.check("band_violation", rec.band_violation, 1e-8);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut worst = 0.0f64;
    let mut per_ell = vec![0.0f64; a.ell_max];
    for _ in 0..a.pairs {
        let p = C64::new(rng.gen_range(-1.5..1.5), rng.gen_range(-0.5..0.5));
        let q = C64::new(rng.gen_range(-1.5..1.5), rng.gen_range(-0.5..0.5));
        for ell in 1..=a.ell_max {
            let res = stage(
                "cd",
                cd_identity_residual(&fam, &rec, ell, z(p), z(q), &basis(p), &basis(q)),
            )?;
            worst = worst.max(res.residual);
            per_ell[ell - 1] = per_ell[ell - 1].max(res.residual);
        }
    }
    r.check("cd_identity", worst, 1e-8);
    r.put("cd_residual_by_ell", per_ell);
    r.put("band_violation", rec.band_violation);
    Ok(r)
}

fn pade(a: &PadeArgs) -> Result<Report, Failure> {
    let contour = match &a.contour {
        None => stage("contour", make_contour(ContourKind::segment(c(-1.0), c(1.0)), 64))?,
        Some(ContourConfig::Segment { a, b, nodes }) => {
            stage("contour", make_contour(ContourKind::segment(a.0, b.0), *nodes))?
        }
        Some(ContourConfig::Circle { center, radius, nodes }) => {
            stage("contour", make_contour(ContourKind::circle(center.0, *radius), *nodes))?
        }
    };
    let one = |_: C64| c(1.0);
    let nodes: Vec<C64> = a.nodes.iter().map(|z| z.0).collect();
    let res = stage("pade", multipoint_pade(a.n, &nodes, &one, &contour))?;
    let mut r = Report::new();
    r.check("orthogonality", res.max_relative, 1e-8);
    let rem = nodes
        .iter()
        .map(|z| res.weighted_remainder(*z, &one, &contour).norm())
        .fold(0.0, f64::max);
    if !nodes.is_empty() {
        r.check("remainder_at_nodes", rem, 1e-10);
    }
    r.put("P", &res.p);
    r.put("Q", &res.q);
    r.put("nodes", nodes.iter().map(|z| pair(*z)).collect::<Vec<_>>());
    r.put("residual_max", res.max_relative);
    Ok(r)
}

fn theta(a: &ThetaArgs) -> Result<Report, Failure> {
    let (tau, v) = (a.tau.0, a.v.0);
    let t0 = stage("theta", theta1(v, tau))?;
    let t1 = stage("theta", theta1(v + 1.0, tau))?;
    let tt = stage("theta", theta1(v + tau, tau))?;
    let scale = t0[0].norm().max(t1[0].norm()).max(tt[0].norm()).max(f64::MIN_POSITIVE);
    let mult = -(C64::new(0.0, -PI) * (tau + v * 2.0)).exp();
    let mut r = Report::new();
    r.check("quasi_period_1", (t1[0] + t0[0]).norm() / scale, 1e-12);
    r.check("quasi_period_tau", (tt[0] - mult * t0[0]).norm() / scale, 1e-12);
    r.put("tau", pair(tau));
    r.put("v", pair(v));
    r.put("theta", t0.iter().map(|x| pair(*x)).collect::<Vec<_>>());
    Ok(r)
}

fn ode_residual(data: &EllipticData) -> Result<f64, Failure> {
    let mut worst = 0.0f64;
    for (s, t) in [(0.13, 0.21), (0.37, 0.44), (0.71, 0.12), (0.29, 0.83), (0.55, 0.61)] {
        let v = c(s) + data.tau * t;
        let (z, y) = stage("point", data.point(v))?;
        let cub = data.cubic(z);
        worst = worst.max((y * y - cub).norm() / (cub.norm() + y.norm_sqr()));
    }
    Ok(worst)
}

fn periods(a: &PeriodsArgs) -> Result<Report, Failure> {
    let data = stage("periods", curve_periods(a.e1.0, a.e2.0, a.e3.0))?;
    let size = 1.0 + data.e.iter().map(|e| e.norm()).fold(0.0, f64::max);
    let mut r = Report::new();
    r.check("half_period_defect", data.half_period_defect() / size, 1e-8);
    r.check("wp_ode", ode_residual(&data)?, 1e-8);
    r.put("curve", data);
    Ok(r)
}

fn curve_from(curve: &Option<Vec<Cplx>>, alpha: Option<f64>) -> Result<EllipticData, Failure> {
    match (curve, alpha) {
        (Some(e), None) if e.len() == 3 => stage("periods", curve_periods(e[0].0, e[1].0, e[2].0)),
        (None, Some(alpha)) => {
            let dk = stage("curve", DkFixture::new(alpha))?;
            stage("periods", dk.curve())
        }
        _ => Err(Failure::Config(
            "give exactly one of --curve e1,e2,e3 or --alpha".into(),
        )),
    }
}

#[derive(Serialize)]
struct PointRow {
    a: i64,
    b: i64,
    z: [f64; 2],
    v: [f64; 2],
    prime: bool,
    det_residual: f64,
}

fn torsion_find(a: &TorsionFindArgs) -> Result<Report, Failure> {
    let curve = curve_from(&a.curve, a.alpha)?;
    let pts = stage("torsion points", torsion_points(&curve, a.r))?;
    let mut r = Report::new();
    let want = 2 * a.r * a.r - 2;
    r.check("count", (pts.len() as f64 - want as f64).abs(), 0.5);
    let mut rows = Vec::with_capacity(pts.len());
    let mut worst = 0.0f64;
    for p in &pts {
        let d = stage(
            "torsion determinant",
            torsion_condition_residual(curve.e, p.z, a.r, Sheet::Plus),
        )?;
        worst = worst.max(d.residual);
        rows.push(PointRow {
            a: p.a,
            b: p.b,
            z: pair(p.z),
            v: pair(p.v),
            prime: p.prime,
            det_residual: d.residual,
        });
    }
    r.check("torsion_determinant", worst, 1e-6);
    if let (Some(alpha), 2) = (a.alpha, a.r) {
        let gap = dk_quarter_periods(alpha)
            .iter()
            .map(|w| pts.iter().map(|p| (p.z - w).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        r.check("dk_quarter_periods", gap, 1e-8);
    }
    r.put("torsion_points", rows);
    Ok(r)
}

fn sample_points(curve: &EllipticData, seed: u64, count: usize) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let z = C64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        if curve.e.iter().all(|e| (z - e).norm() > 0.05) {
            out.push(z);
        }
    }
    out
}

fn torsion_mop(a: &TorsionMopArgs) -> Result<Report, Failure> {
    let curve = curve_from(&a.curve, a.alpha)?;
    let pts = stage("torsion points", torsion_points(&curve, a.r))?;
    let (la, lb) = match &a.label {
        Some(l) if l.len() == 2 => (l[0], l[1]),
        Some(_) => return Err(Failure::Config("label takes two integers a,b".into())),
        None => {
            let best = pts
                .iter()
                .min_by(|x, y| (x.z - 1.0).norm().total_cmp(&(y.z - 1.0).norm()))
                .expect("at least one torsion class");
            (best.a, best.b)
        }
    };
    let spec = stage("weight", TorsionSpec::from_label(&curve, a.r, la, lb))?;
    let z_star = stage("weight", spec.pole_zs())?[0];
    let mut r = Report::new();

    let mut det = 0.0f64;
    let mut swap = 0.0f64;
    for z in sample_points(&curve, 11, 10) {
        let s = stage("sqrt_w", spec.sqrt_w(z))?;
        det = det.max((s.determinant() - 1.0).norm());
        swap = swap.max(stage("sqrt_w", spec.sheet_swap_defect(z))?);
    }
    r.check("det_sqrt_w", det, 1e-10);
    r.check("sheet_swap", swap, 1e-9);

    let pr = stage("pr_fit", torsion_pr(&spec))?;
    r.check("pr_fit", pr.residual, 1e-7);
    let mut pr_orth = Vec::new();
    for q in [scalar_power(0), scalar_power(1)] {
        pr_orth.push(stage("pr_orthogonality", finite_orthogonality(&spec, &pr.poly, &q))?.relative);
    }
    r.check("pr_orthogonality", pr_orth.iter().cloned().fold(0.0, f64::max), 1e-8);

    let pm = stage("pr_minus1_fit", torsion_pr_minus1(&spec))?;
    r.check("pr_minus1_fit", pm.residual, 1e-7);
    let mut pm_orth = Vec::new();
    for l in 0..=a.r - 2 {
        pm_orth.push(
            stage(
                "pr_minus1_orthogonality",
                finite_orthogonality(&spec, &pm.poly, &scalar_power(l)),
            )?
            .relative,
        );
    }
    r.check(
        "pr_minus1_orthogonality",
        pm_orth.iter().cloned().fold(0.0, f64::max),
        1e-8,
    );

    let n = a.sections.unwrap_or(2 * a.r + 2);
    let pairing = stage("pairing", finite_pairing_rank(&spec, n))?;
    r.check("pairing_rank", (pairing.rank as f64 - (2 * a.r) as f64).abs(), 0.5);
    r.check("pairing_kernel", pairing.kernel_defect, 1e-9);
    r.check("second_sheet", pairing.second_sheet, 1e-10);

    r.put(
        "label",
        json!({ "a": la, "b": lb, "z": pair(z_star), "v": pair(spec.poles[0]) }),
    );
    r.put(
        "torsion_points",
        pts.iter()
            .map(|p| json!({ "a": p.a, "b": p.b, "z": pair(p.z), "prime": p.prime }))
            .collect::<Vec<_>>(),
    );
    r.put("rank", pairing.rank);
    r.put("singular_values", &pairing.singular_values);
    r.put("det_residual", det);
    r.put(
        "orthogonality_residuals",
        json!({ "P_R": pr_orth, "P_R_minus_1": pm_orth }),
    );
    r.put("P_R", &pr.poly);
    r.put("P_R_minus_1", &pm.poly);
    Ok(r)
}

fn dk(a: &DkArgs) -> Result<Report, Failure> {
    let fx = stage("fixture", DkFixture::new(a.alpha))?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut det = 0.0f64;
    let mut char_poly = 0.0f64;
    let mut taken = 0;
    while taken < a.points {
        let z = C64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        // The determinant's rounding floor is ε|z − 1|^{-4} near the pole.
        if (z - 1.0).norm() < 1.0 {
            continue;
        }
        taken += 1;
        det = det.max((fx.w1(z).determinant() - 1.0).norm());
        let y = fx.curve_y(z);
        char_poly = char_poly
            .max(fx.char_poly_residual(z, y))
            .max(fx.char_poly_residual(z, -y));
    }
    let mut r = Report::new();
    r.check("det_w1", det, 1e-12);
    r.check("char_poly", char_poly, 1e-10);
    let ys = fx.y_star();
    let one = c(1.0);
    let mut zero_order = 0.0f64;
    let mut pole_order = 0.0f64;
    for dir in [c(1.0), C64::new(0.0, 1.0), C64::new(-0.6, 0.8)] {
        let z0 = DkFixture::local_order(|z| fx.y1(z, fx.y_near(z, c(ys))), one, dir);
        let p0 = DkFixture::local_order(|z| fx.y1(z, fx.y_near(z, c(-ys))), one, dir);
        zero_order = zero_order.max((z0 - 2.0).abs());
        pole_order = pole_order.max((p0 + 2.0).abs());
    }
    r.check("y1_double_zero", zero_order, 0.05);
    r.check("y1_double_pole", pole_order, 0.05);
    let cc = fx.f_constant();
    let dir = C64::new(0.6, 0.8);
    let fp = DkFixture::local_order(|z| fx.f(z, fx.y_near(z, c(cc))), c(-1.0), dir);
    let fz = DkFixture::local_order(|z| fx.f(z, fx.y_near(z, c(-cc))), c(-1.0), dir);
    r.check("f_simple_pole", (fp + 1.0).abs(), 0.05);
    r.check("f_simple_zero", (fz - 1.0).abs(), 0.05);
    r.put("alpha", a.alpha);
    r.put("y_star", ys);
    r.put(
        "quarter_periods",
        dk_quarter_periods(a.alpha).iter().map(|z| pair(*z)).collect::<Vec<_>>(),
    );
    Ok(r)
}
