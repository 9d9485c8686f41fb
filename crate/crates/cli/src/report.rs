//! Check lists and their JSON, CSV and plain-text renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Overrides may not go below this, whatever the default.
pub const TOLERANCE_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    #[default]
    Json,
    Csv,
    Pretty,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub checks: Vec<Check>,
    data: BTreeMap<String, Value>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `value ≤ tolerance`; NaN fails.
    pub fn check(&mut self, name: impl Into<String>, value: f64, tolerance: f64) {
        self.checks.push(Check {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        });
    }

    pub fn put<T: Serialize>(&mut self, key: &str, value: T) {
        let v = serde_json::to_value(value).expect("report data serializes");
        self.data.insert(key.to_string(), v);
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.data.get(key)
    }

    /// Replaces default tolerances. Each override must name an existing
    /// check, be at least the default, and at least [`TOLERANCE_FLOOR`].
    pub fn apply_overrides(&mut self, overrides: &BTreeMap<String, f64>) -> Result<(), String> {
        for (name, &tol) in overrides {
            validate_tolerance(name, tol)?;
            let mut found = false;
            for c in self.checks.iter_mut().filter(|c| &c.name == name) {
                found = true;
                if tol < c.tolerance {
                    return Err(format!(
                        "tolerance for {name} can only be loosened (default {:e}, got {tol:e})",
                        c.tolerance
                    ));
                }
                c.tolerance = tol;
                c.pass = c.value <= tol;
            }
            if !found {
                return Err(format!("no check named {name}"));
            }
        }
        Ok(())
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn document(&self) -> Value {
        let mut m = Map::new();
        m.insert(
            "checks".into(),
            serde_json::to_value(&self.checks).expect("checks serialize"),
        );
        for (k, v) in &self.data {
            m.insert(k.clone(), v.clone());
        }
        Value::Object(m)
    }

    pub fn render(&self, emit: Emit) -> String {
        match emit {
            Emit::Json => {
                let mut s = serde_json::to_string(&self.document()).expect("report serializes");
                s.push('\n');
                s
            }
            Emit::Csv => self.render_csv(),
            Emit::Pretty => self.render_pretty(),
        }
    }

    fn render_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let row = |w: &mut csv::Writer<Vec<u8>>, r: [&str; 6]| w.write_record(r).expect("in-memory csv");
        row(&mut w, ["kind", "name", "value", "imag", "tolerance", "pass"]);
        for c in &self.checks {
            row(
                &mut w,
                [
                    "check",
                    &c.name,
                    &format!("{:e}", c.value),
                    "",
                    &format!("{:e}", c.tolerance),
                    &c.pass.to_string(),
                ],
            );
        }
        let mut leaves = Vec::new();
        for (k, v) in &self.data {
            flatten(k.clone(), v, &mut leaves);
        }
        for (path, re, im) in leaves {
            row(&mut w, ["data", &path, &re, &im, "", ""]);
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }

    fn render_pretty(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{} {:<40} {:>12.3e}  (tol {:.1e})",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.tolerance
            );
        }
        for (k, v) in &self.data {
            let _ = writeln!(
                s,
                "{k}: {}",
                serde_json::to_string_pretty(v).expect("report serializes")
            );
        }
        s
    }
}

pub fn validate_tolerance(name: &str, tol: f64) -> Result<(), String> {
    if !(tol.is_finite() && tol >= TOLERANCE_FLOOR) {
        return Err(format!(
            "tolerance for {name} must be finite and ≥ {TOLERANCE_FLOOR:e}, got {tol}"
        ));
    }
    Ok(())
}

/// Depth-first leaves in row-major order; `[re, im]` pairs become one row.
fn flatten(path: String, v: &Value, out: &mut Vec<(String, String, String)>) {
    match v {
        Value::Array(items) if items.len() == 2 && items.iter().all(Value::is_number) => {
            out.push((path, items[0].to_string(), items[1].to_string()));
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                flatten(format!("{path}[{i}]"), x, out);
            }
        }
        Value::Object(m) => {
            for (k, x) in m {
                flatten(format!("{path}.{k}"), x, out);
            }
        }
        Value::String(s) => out.push((path, s.clone(), String::new())),
        other => out.push((path, other.to_string(), String::new())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report() {
        assert_eq!(Report::new().render(Emit::Json), "{\"checks\":[]}\n");
    }

    #[test]
    fn overrides_only_loosen() {
        let mut r = Report::new();
        r.check("a", 1e-9, 1e-10);
        assert!(!r.passed());
        let mut o = BTreeMap::new();
        o.insert("a".to_string(), 1e-8);
        r.apply_overrides(&o).unwrap();
        assert!(r.passed());
        o.insert("a".to_string(), 1e-12);
        assert!(r.apply_overrides(&o).is_err());
        let mut o = BTreeMap::new();
        o.insert("missing".to_string(), 1.0);
        assert!(r.apply_overrides(&o).is_err());
        assert!(validate_tolerance("a", 1e-15).is_err());
        assert!(validate_tolerance("a", f64::NAN).is_err());
    }

    #[test]
    fn nan_fails() {
        let mut r = Report::new();
        r.check("x", f64::NAN, 1.0);
        assert!(!r.passed());
    }

    #[test]
    fn csv_is_row_major() {
        let mut r = Report::new();
        r.check("c", 0.5, 1.0);
        r.put("M", vec![vec![[1.0, 0.0], [2.0, 0.5]], vec![[3.0, 0.0], [4.0, 0.0]]]);
        let s = r.render(Emit::Csv);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "kind,name,value,imag,tolerance,pass");
        assert_eq!(lines[1], "check,c,5e-1,,1e0,true");
        assert_eq!(lines[2], "data,M[0][0],1.0,0.0,,");
        assert_eq!(lines[3], "data,M[0][1],2.0,0.5,,");
        assert_eq!(lines[5], "data,M[1][1],4.0,0.0,,");
    }
}
