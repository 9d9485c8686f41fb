//! Task parameters, shared by the command line and `run --config`.

use std::collections::BTreeMap;
use std::path::Path;

use clap::{Args, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::cplx::Cplx;
use crate::report::{validate_tolerance, Emit};

fn d_zero() -> f64 {
    0.0
}
fn d_seed() -> u64 {
    7
}
fn d_r() -> usize {
    2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Hermite,
    Laguerre,
}

#[derive(Clone, Debug, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalArgs {
    #[arg(long, value_enum)]
    pub kind: Kind,
    /// Shift in `Z = (t − c)²` or `Z = t² + 2ct`.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    #[serde(default = "d_zero")]
    pub c: f64,
    /// Laguerre parameter.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    #[serde(default = "d_zero")]
    pub alpha: f64,
    /// Number of matrix polynomials `P_0..P_{n−1}`.
    #[arg(long, default_value_t = 3)]
    #[serde(default = "ClassicalArgs::d_n")]
    pub n: usize,
    /// Ray quadrature nodes.
    #[arg(long, default_value_t = 400)]
    #[serde(default = "ClassicalArgs::d_nodes")]
    pub nodes: usize,
    #[arg(long, default_value_t = 7)]
    #[serde(default = "d_seed")]
    pub seed: u64,
}

impl ClassicalArgs {
    fn d_n() -> usize {
        3
    }
    fn d_nodes() -> usize {
        400
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarWeight {
    /// `1` on `[−1, 1]`.
    Legendre,
    /// `e^{−t²}` on `[−10, 10]`.
    Hermite,
}

#[derive(Clone, Debug, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiorthoArgs {
    #[arg(long, value_enum, default_value = "legendre")]
    #[serde(default = "BiorthoArgs::d_weight")]
    pub weight: ScalarWeight,
    /// Family length; monomial bases lose minors to rounding beyond about 8.
    #[arg(long, default_value_t = 6)]
    #[serde(default = "BiorthoArgs::d_n")]
    pub n: usize,
    /// Coefficients of the cover map `Z(t)`, lowest first; the band width is its degree.
    #[arg(long, value_delimiter = ',', default_value = "0,1", allow_negative_numbers = true)]
    #[serde(default = "BiorthoArgs::d_cover")]
    pub cover: Vec<f64>,
}

impl BiorthoArgs {
    fn d_weight() -> ScalarWeight {
        ScalarWeight::Legendre
    }
    fn d_n() -> usize {
        6
    }
    fn d_cover() -> Vec<f64> {
        vec![0.0, 1.0]
    }
}

#[derive(Clone, Debug, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyCdArgs {
    #[arg(long, default_value_t = 0.4, allow_negative_numbers = true)]
    #[serde(default = "VerifyCdArgs::d_c")]
    pub c: f64,
    /// Scalar family length (five 2×2 blocks by default).
    #[arg(long, default_value_t = 10)]
    #[serde(default = "VerifyCdArgs::d_n")]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    #[serde(default = "VerifyCdArgs::d_pairs")]
    pub pairs: usize,
    #[arg(long, default_value_t = 2)]
    #[serde(default = "d_r")]
    pub ell_max: usize,
    #[arg(long, default_value_t = 7)]
    #[serde(default = "d_seed")]
    pub seed: u64,
}

impl VerifyCdArgs {
    fn d_c() -> f64 {
        0.4
    }
    fn d_n() -> usize {
        10
    }
    fn d_pairs() -> usize {
        10
    }
}

/// A quadrature contour as written in config files.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ContourConfig {
    Segment { a: Cplx, b: Cplx, nodes: usize },
    Circle { center: Cplx, radius: f64, nodes: usize },
}

#[derive(Clone, Debug, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PadeArgs {
    #[arg(long, default_value_t = 3)]
    #[serde(default = "PadeArgs::d_n")]
    pub n: usize,
    /// Interpolation nodes `z_1..z_{n−1}`; empty for the ordinary Padé problem.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(default)]
    pub nodes: Vec<Cplx>,
    /// Defaults to 64 Gauss–Legendre nodes on `[−1, 1]`.
    #[arg(skip)]
    #[serde(default)]
    pub contour: Option<ContourConfig>,
}

impl PadeArgs {
    fn d_n() -> usize {
        3
    }
}

#[derive(Clone, Debug, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Cplx,
    #[arg(long, allow_hyphen_values = true)]
    pub v: Cplx,
}

#[derive(Clone, Debug, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodsArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub e1: Cplx,
    #[arg(long, allow_hyphen_values = true)]
    pub e2: Cplx,
    #[arg(long, allow_hyphen_values = true)]
    pub e3: Cplx,
}

#[derive(Clone, Debug, PartialEq, Subcommand, Deserialize)]
#[serde(tag = "action", rename_all = "lowercase")]
pub enum EllipticAction {
    /// θ₁ and its first three derivatives.
    Theta(ThetaArgs),
    /// Lattice data of `y² = 4Π(z − e_i)`.
    Periods(PeriodsArgs),
}

#[derive(Clone, Debug, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorsionFindArgs {
    /// Branch points `e1,e2,e3`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "alpha")]
    #[serde(default)]
    pub curve: Option<Vec<Cplx>>,
    /// Uses `y² = z(z + α²)(z + α^{−2})`.
    #[arg(long)]
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Torsion order: points of order dividing `2R`.
    #[arg(long = "R", default_value_t = 2)]
    #[serde(rename = "R", default = "d_r")]
    pub r: usize,
}

#[derive(Clone, Debug, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorsionMopArgs {
    /// Branch points `e1,e2,e3`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "alpha")]
    #[serde(default)]
    pub curve: Option<Vec<Cplx>>,
    /// Uses `y² = z(z + α²)(z + α^{−2})`.
    #[arg(long)]
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Torsion order: the pole at `z_*` has order `R`.
    #[arg(long = "R", default_value_t = 2)]
    #[serde(rename = "R", default = "d_r")]
    pub r: usize,
    /// Torsion label `a,b`; defaults to the point with `z_*` closest to 1.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(default)]
    pub label: Option<Vec<i64>>,
    /// Sections in the pairing; defaults to `2R + 2`.
    #[arg(long)]
    #[serde(default)]
    pub sections: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DkArgs {
    #[arg(long, default_value_t = 1.2)]
    #[serde(default = "DkArgs::d_alpha")]
    pub alpha: f64,
    #[arg(long, default_value_t = 20)]
    #[serde(default = "DkArgs::d_points")]
    pub points: usize,
    #[arg(long, default_value_t = 7)]
    #[serde(default = "d_seed")]
    pub seed: u64,
}

impl DkArgs {
    fn d_alpha() -> f64 {
        1.2
    }
    fn d_points() -> usize {
        20
    }
}

#[derive(Clone, Debug, PartialEq, Subcommand, Deserialize)]
#[serde(tag = "action", rename_all = "lowercase")]
pub enum TorsionAction {
    /// Enumerate the `2R`-torsion classes and check the torsion determinant.
    Find(TorsionFindArgs),
    /// Build `√W`, `P_R`, `P_{R−1}` and the finite pairing for one torsion point.
    Mop(TorsionMopArgs),
    /// Check the lozenge-tiling weight `W₁` and its eigenvalue `Y₁`.
    Dk(DkArgs),
}

#[derive(Clone, Debug, PartialEq, Subcommand, Deserialize)]
#[serde(tag = "command", content = "params", rename_all = "kebab-case")]
pub enum Task {
    /// Hermite or Laguerre matrix polynomials on a quadratic cover.
    Classical(ClassicalArgs),
    /// Scalar biorthogonal family with recurrence band check.
    Biortho(BiorthoArgs),
    /// θ₁ and period checks on an elliptic curve.
    #[command(subcommand)]
    Elliptic(EllipticAction),
    /// Torsion points, the finite matrix family, and the lozenge fixture.
    #[command(subcommand)]
    Torsion(TorsionAction),
    /// Christoffel–Darboux identity for the Hermite matrix family.
    VerifyCd(VerifyCdArgs),
    /// Multipoint Padé denominators for the Legendre weight.
    Pade(PadeArgs),
}

/// Contents of a `--config` file.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    #[serde(default)]
    pub params: Option<serde_json::Value>,
    #[serde(default)]
    pub emit: Emit,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<(Task, Emit, BTreeMap<String, f64>), String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| format!("invalid config: {e}"))?;
        for (k, &v) in &cfg.tolerances {
            validate_tolerance(k, v)?;
        }
        let params = cfg.params.unwrap_or_else(|| serde_json::json!({}));
        let tagged = serde_json::json!({ "command": cfg.command, "params": params });
        let task: Task = serde_json::from_value(tagged).map_err(|e| format!("invalid config: {e}"))?;
        Ok((task, cfg.emit, cfg.tolerances))
    }

    pub fn load(path: &Path) -> Result<(Task, Emit, BTreeMap<String, f64>), String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let (task, emit, tol) = RunConfig::parse(
            r#"{"command":"classical","params":{"kind":"hermite","c":0.5,"n":2},"emit":"csv","tolerances":{"orthogonality":1e-6}}"#,
        )
        .unwrap();
        match task {
            Task::Classical(a) => {
                assert_eq!(a.kind, Kind::Hermite);
                assert_eq!(a.c, 0.5);
                assert_eq!(a.nodes, 400);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(emit, Emit::Csv);
        assert_eq!(tol["orthogonality"], 1e-6);
    }

    #[test]
    fn nested_actions() {
        let (task, _, _) =
            RunConfig::parse(r#"{"command":"elliptic","params":{"action":"theta","tau":"0.1+1.2i","v":[0.3,0.1]}}"#)
                .unwrap();
        assert!(matches!(task, Task::Elliptic(EllipticAction::Theta(_))));
        let (task, _, _) =
            RunConfig::parse(r#"{"command":"torsion","params":{"action":"find","alpha":1.2,"R":3}}"#).unwrap();
        match task {
            Task::Torsion(TorsionAction::Find(a)) => assert_eq!(a.r, 3),
            other => panic!("{other:?}"),
        }
        let (task, _, _) = RunConfig::parse(
            r#"{"command":"pade","params":{"n":2,"nodes":["2"],"contour":{"kind":"segment","a":-1,"b":1,"nodes":32}}}"#,
        )
        .unwrap();
        assert!(matches!(
            task,
            Task::Pade(PadeArgs {
                contour: Some(ContourConfig::Segment { .. }),
                ..
            })
        ));
    }

    #[test]
    fn unknown_keys_rejected() {
        for bad in [
            r#"{"command":"classical","params":{"kind":"hermite"},"extra":1}"#,
            r#"{"command":"classical","params":{"kind":"hermite","bogus":1}}"#,
            r#"{"command":"elliptic","params":{"action":"theta","tau":"1i","v":0,"w":0}}"#,
            r#"{"command":"nope"}"#,
            r#"{"command":"classical","params":{"kind":"hermite"},"tolerances":{"x":-1}}"#,
            r#"{"command":"classical","params":{"kind":"hermite"},"tolerances":{"x":1e-20}}"#,
        ] {
            assert!(RunConfig::parse(bad).is_err(), "{bad}");
        }
    }
}
