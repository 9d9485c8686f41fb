use std::fmt;
use std::str::FromStr;

use abelian_mops::C64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A complex number read as `a+bi`, a bare real, or a JSON `[re, im]` pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cplx(pub C64);

impl FromStr for Cplx {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim().replace(' ', "");
        C64::from_str(&t)
            .map(Cplx)
            .map_err(|_| format!("not a complex number: {s:?}"))
    }
}

impl fmt::Display for Cplx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Cplx {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.0.re, self.0.im].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Cplx {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Real(f64),
            Pair([f64; 2]),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Real(x) => Ok(Cplx(C64::new(x, 0.0))),
            Repr::Pair([re, im]) => Ok(Cplx(C64::new(re, im))),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_common_forms() {
        assert_eq!("0.5+1.2i".parse::<Cplx>().unwrap().0, C64::new(0.5, 1.2));
        assert_eq!("-1.44".parse::<Cplx>().unwrap().0, C64::new(-1.44, 0.0));
        assert_eq!("2i".parse::<Cplx>().unwrap().0, C64::new(0.0, 2.0));
        assert!("abc".parse::<Cplx>().is_err());
        let v: Vec<Cplx> = serde_json::from_str(r#"[1.5, [0, 2], "1-1i"]"#).unwrap();
        assert_eq!(v[1].0, C64::new(0.0, 2.0));
        assert_eq!(v[2].0, C64::new(1.0, -1.0));
        assert_eq!(serde_json::to_string(&v[0]).unwrap(), "[1.5,0.0]");
    }
}
