//! Versioned on-disk format for released aggregates.
//!
//! A bundle is one JSON object with a `header` followed by one array per
//! level (`level_<j>`, ascending) and an optional `records` array of
//! per-observation vectors. Keys are always written in that order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::privacy::MechanismKind;
use crate::splines::MAX_DEGREE;
use crate::wavelets::base_level;

pub const FORMAT_VERSION: u64 = 1;

/// Aggregated release of one mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseBundle {
    pub mechanism: MechanismKind,
    pub degree: usize,
    /// Spline level, or the wavelet base level `j0`.
    pub j0: u32,
    /// Equal to `j0` for splines.
    pub j_max: u32,
    pub alpha: f64,
    /// Level-weight exponent; wavelet bundles only.
    pub level_weight: Option<f64>,
    pub n: u64,
    /// Mean vectors per level, lowest level first.
    pub levels: Vec<Vec<f64>>,
    pub records: Option<Vec<Vec<f64>>>,
}

impl ReleaseBundle {
    /// Level indices in storage order.
    pub fn level_indices(&self) -> Vec<u32> {
        match self.mechanism {
            MechanismKind::Spline => vec![self.j0],
            MechanismKind::Wavelet => (self.j0 - 1..=self.j_max).collect(),
        }
    }

    /// Expected coordinate count of level `j`.
    pub fn expected_len(&self, j: u32) -> usize {
        match self.mechanism {
            MechanismKind::Spline => (1usize << j) + self.degree,
            MechanismKind::Wavelet if j + 1 == self.j0 => (1usize << self.j0) + self.degree,
            MechanismKind::Wavelet => 1usize << j,
        }
    }

    pub fn total_dim(&self) -> usize {
        self.level_indices().iter().map(|&j| self.expected_len(j)).sum()
    }

    pub fn level(&self, j: u32) -> Option<&[f64]> {
        let pos = self.level_indices().iter().position(|&l| l == j)?;
        self.levels.get(pos).map(|v| v.as_slice())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = String::new();
        s.push_str("{\"header\":{");
        write!(
            s,
            "\"format_version\":{FORMAT_VERSION},\"mechanism\":\"{}\",\"degree\":{},\"j0\":{},\"j_max\":{},\"alpha\":{},\"a\":{},\"n\":{}",
            self.mechanism,
            self.degree,
            self.j0,
            self.j_max,
            number(self.alpha, "alpha")?,
            match self.level_weight {
                Some(a) => number(a, "a")?,
                None => "null".into(),
            },
            self.n
        )
        .expect("writing to string");
        s.push('}');
        for (j, v) in self.level_indices().iter().zip(&self.levels) {
            write!(s, ",\"level_{j}\":").expect("writing to string");
            push_array(&mut s, v, "level")?;
        }
        if let Some(recs) = &self.records {
            s.push_str(",\"records\":[");
            for (i, r) in recs.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                push_array(&mut s, r, "records")?;
            }
            s.push(']');
        }
        s.push_str("}\n");
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = self.to_json()?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(text).map_err(|e| Error::CorruptPayload(e.to_string()))?;
        let obj = root.as_object().ok_or_else(|| corrupt("top level is not an object"))?;
        let header = obj
            .get("header")
            .and_then(Value::as_object)
            .ok_or_else(|| corrupt("missing header"))?;
        let version = get_u64(header, "format_version")?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: FORMAT_VERSION });
        }
        let mechanism: MechanismKind = header
            .get("mechanism")
            .and_then(Value::as_str)
            .ok_or_else(|| corrupt("missing mechanism"))?
            .parse()
            .map_err(|_| corrupt("unknown mechanism"))?;
        let degree = get_u64(header, "degree")? as usize;
        if degree > MAX_DEGREE {
            return Err(corrupt("degree out of range"));
        }
        let j0 = get_u64(header, "j0")? as u32;
        let j_max = get_u64(header, "j_max")? as u32;
        let n = get_u64(header, "n")?;
        let alpha = header.get("alpha").and_then(Value::as_f64).ok_or_else(|| corrupt("missing alpha"))?;
        let level_weight = match header.get("a") {
            Some(Value::Null) | None => None,
            Some(v) => Some(v.as_f64().ok_or_else(|| corrupt("a is not a number"))?),
        };
        match mechanism {
            MechanismKind::Spline => {
                if j0 != j_max || j0 > 30 {
                    return Err(corrupt("spline bundle must have j0 == j_max"));
                }
            }
            MechanismKind::Wavelet => {
                if degree == 0 || j0 != base_level(degree) {
                    return Err(corrupt("j0 does not match the degree"));
                }
                if j_max + 1 < j0 || j_max > 30 {
                    return Err(corrupt("j_max out of range"));
                }
                if level_weight.is_none() {
                    return Err(corrupt("wavelet bundle without a"));
                }
            }
        }
        let mut bundle = ReleaseBundle {
            mechanism,
            degree,
            j0,
            j_max,
            alpha,
            level_weight,
            n,
            levels: Vec::new(),
            records: None,
        };
        for j in bundle.level_indices() {
            let key = format!("level_{j}");
            let v = read_array(obj.get(&key).ok_or_else(|| corrupt(&format!("missing {key}")))?, &key)?;
            let expected = bundle.expected_len(j);
            if v.len() != expected {
                return Err(Error::CountMismatch { key, expected, found: v.len() });
            }
            bundle.levels.push(v);
        }
        if let Some(recs) = obj.get("records") {
            let arr = recs.as_array().ok_or_else(|| corrupt("records is not an array"))?;
            let dim = bundle.total_dim();
            let mut out = Vec::with_capacity(arr.len());
            for (i, r) in arr.iter().enumerate() {
                let key = format!("records[{i}]");
                let v = read_array(r, &key)?;
                if v.len() != dim {
                    return Err(Error::CountMismatch { key, expected: dim, found: v.len() });
                }
                out.push(v);
            }
            if out.len() as u64 != n {
                return Err(Error::CountMismatch { key: "records".into(), expected: n as usize, found: out.len() });
            }
            bundle.records = Some(out);
        }
        Ok(bundle)
    }
}

fn corrupt(msg: &str) -> Error {
    Error::CorruptPayload(msg.to_string())
}

fn number(v: f64, what: &str) -> Result<String> {
    if !v.is_finite() {
        return Err(Error::InvalidParameter(format!("non-finite value in {what}")));
    }
    Ok(serde_json::Number::from_f64(v).expect("finite").to_string())
}

fn push_array(s: &mut String, v: &[f64], what: &str) -> Result<()> {
    s.push('[');
    for (i, &x) in v.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&number(x, what)?);
    }
    s.push(']');
    Ok(())
}

fn get_u64(m: &Map<String, Value>, key: &str) -> Result<u64> {
    m.get(key).and_then(Value::as_u64).ok_or_else(|| corrupt(&format!("missing or invalid {key}")))
}

fn read_array(v: &Value, key: &str) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| corrupt(&format!("{key} is not an array")))?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| corrupt(&format!("{key} holds a non-number"))))
        .collect()
}
