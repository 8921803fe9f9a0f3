//! The 19-parameter anthropometric schema, parameter vectors and matrices,
//! and measurement of parameters from a mesh through control-point specs.

mod spec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use spec::{extract_dataset, measure, MeasureMode, MeasurementSpec, ParameterSpec};

pub const PARAM_COUNT: usize = 19;

/// Upper sanity bound for the weight entry, kg.
pub const MAX_WEIGHT_KG: f64 = 400.0;
/// Upper sanity bound for any length or circumference, mm.
pub const MAX_LENGTH_MM: f64 = 3000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Weight,
    Length,
    Circumference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Kg,
    Mm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamDescriptor {
    /// 1-based id.
    pub id: u8,
    /// Measurement name as listed in the anthropometric table.
    pub name: &'static str,
    /// Machine key used in JSON documents and on the command line.
    pub key: &'static str,
    pub kind: ParamKind,
    pub unit: Unit,
}

macro_rules! param {
    ($id:expr, $name:expr, $key:expr, $kind:ident) => {
        ParamDescriptor {
            id: $id,
            name: $name,
            key: $key,
            kind: ParamKind::$kind,
            unit: if matches!(ParamKind::$kind, ParamKind::Weight) {
                Unit::Kg
            } else {
                Unit::Mm
            },
        }
    };
}

pub const SCHEMA: [ParamDescriptor; PARAM_COUNT] = [
    param!(1, "weight", "weight", Weight),
    param!(2, "height", "height", Length),
    param!(3, "neck", "neck", Circumference),
    param!(4, "chest", "chest", Circumference),
    param!(5, "belly button waist", "belly_button_waist", Circumference),
    param!(6, "gluteal hip", "gluteal_hip", Circumference),
    param!(7, "neck shoulder elbow wrist", "neck_shoulder_elbow_wrist", Length),
    param!(8, "crotch knee floor", "crotch_knee_floor", Length),
    param!(9, "across back shoulder neck", "across_back_shoulder_neck", Length),
    param!(10, "neck to gluteal hip", "neck_to_gluteal_hip", Length),
    param!(11, "natural waist", "natural_waist", Circumference),
    param!(12, "maximum hip", "maximum_hip", Circumference),
    param!(13, "natural waist rise", "natural_waist_rise", Length),
    param!(14, "shoulder to midhand", "shoulder_to_midhand", Length),
    param!(15, "upper arm", "upper_arm", Circumference),
    param!(16, "wrist", "wrist", Circumference),
    param!(17, "outer natural waist to floor", "outer_natural_waist_to_floor", Length),
    param!(18, "knee", "knee", Circumference),
    param!(19, "maximum thigh", "maximum_thigh", Circumference),
];

/// Schema id carried by measurement specs and model files.
pub const SCHEMA_ID: &str = "anthropometry-19/v1";

/// Index (0-based) of a parameter given its key or its table name.
pub fn index_of(name: &str) -> Option<usize> {
    let normalized = name.trim().to_ascii_lowercase().replace([' ', '-'], "_");
    SCHEMA.iter().position(|d| d.key == normalized)
}

pub fn descriptor(id: u8) -> Result<&'static ParamDescriptor> {
    SCHEMA
        .get((id as usize).wrapping_sub(1))
        .ok_or_else(|| Error::InvalidParameter(format!("parameter id {id} not in 1..=19")))
}

/// SHA-256 over the ordered schema, binding specs and models to it.
pub fn schema_hash() -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(SCHEMA_ID.as_bytes());
    for d in &SCHEMA {
        hasher.update(format!("|{}:{}:{:?}:{:?}", d.id, d.name, d.kind, d.unit).as_bytes());
    }
    hasher.finalize().into()
}

pub fn schema_hash_hex() -> String {
    to_hex(&schema_hash())
}

pub(crate) fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Nineteen measurements, any of which may be missing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterVector {
    pub values: [f64; PARAM_COUNT],
    pub present: [bool; PARAM_COUNT],
}

impl Default for ParameterVector {
    fn default() -> Self {
        Self::empty()
    }
}

impl ParameterVector {
    pub fn empty() -> Self {
        ParameterVector {
            values: [0.0; PARAM_COUNT],
            present: [false; PARAM_COUNT],
        }
    }

    pub fn complete(values: [f64; PARAM_COUNT]) -> Self {
        ParameterVector {
            values,
            present: [true; PARAM_COUNT],
        }
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.present[index].then_some(self.values[index])
    }

    pub fn set(&mut self, index: usize, value: f64) {
        self.values[index] = value;
        self.present[index] = true;
    }

    pub fn clear(&mut self, index: usize) {
        self.values[index] = 0.0;
        self.present[index] = false;
    }

    pub fn present_count(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }

    pub fn is_complete(&self) -> bool {
        self.present.iter().all(|&p| p)
    }

    /// Present values must be finite, positive and below the sanity caps.
    pub fn validate(&self) -> Result<()> {
        for (i, d) in SCHEMA.iter().enumerate() {
            if let Some(v) = self.get(i) {
                check_value(d, v)?;
            }
        }
        Ok(())
    }

    /// Builds a partial vector from `key -> value` pairs. Unknown keys are
    /// reported together.
    pub fn from_named<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self> {
        let mut out = ParameterVector::empty();
        let mut unknown = Vec::new();
        for (name, value) in pairs {
            match index_of(name) {
                Some(i) => out.set(i, value),
                None => unknown.push(name.to_string()),
            }
        }
        if !unknown.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "unknown parameter(s) {}; valid names: {}",
                unknown.join(", "),
                SCHEMA.iter().map(|d| d.key).collect::<Vec<_>>().join(", ")
            )));
        }
        Ok(out)
    }
}

pub(crate) fn check_value(d: &ParamDescriptor, v: f64) -> Result<()> {
    let cap = match d.unit {
        Unit::Kg => MAX_WEIGHT_KG,
        Unit::Mm => MAX_LENGTH_MM,
    };
    if !v.is_finite() || v <= 0.0 || v >= cap {
        return Err(Error::InvalidParameter(format!(
            "{} = {v} outside (0, {cap}) {:?}",
            d.key, d.unit
        )));
    }
    Ok(())
}

/// Complete n×19 matrix of measurements, one row per body.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterMatrix {
    rows: Vec<[f64; PARAM_COUNT]>,
}

impl ParameterMatrix {
    pub fn new(rows: Vec<[f64; PARAM_COUNT]>) -> Result<Self> {
        if let Some((r, c)) = rows.iter().enumerate().find_map(|(r, row)| {
            row.iter().position(|v| !v.is_finite()).map(|c| (r, c))
        }) {
            return Err(Error::NonFinite(format!("parameter matrix row {r}, column {}", c + 1)));
        }
        Ok(ParameterMatrix { rows })
    }

    pub fn rows(&self) -> &[[f64; PARAM_COUNT]] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64; PARAM_COUNT] {
        &self.rows[i]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[j])
    }

    pub fn select_rows(&self, indices: &[usize]) -> ParameterMatrix {
        ParameterMatrix {
            rows: indices.iter().map(|&i| self.rows[i]).collect(),
        }
    }

    pub fn stats(&self) -> ColumnStats {
        ColumnStats::of(self)
    }

    /// CSV with a header of parameter keys.
    pub fn to_csv(&self) -> String {
        let mut out = SCHEMA.iter().map(|d| d.key).collect::<Vec<_>>().join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty parameter csv".into(),
        })?;
        let columns: Vec<usize> = header
            .split(',')
            .map(|h| {
                index_of(h).ok_or_else(|| Error::Parse {
                    line: 1,
                    msg: format!("unknown column '{h}'"),
                })
            })
            .collect::<Result<_>>()?;
        if columns.len() != PARAM_COUNT {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected {PARAM_COUNT} columns, got {}", columns.len()),
            });
        }
        let mut rows = Vec::new();
        for (idx, line) in lines {
            let mut row = [0.0; PARAM_COUNT];
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != PARAM_COUNT {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected {PARAM_COUNT} fields"),
                });
            }
            for (&col, field) in columns.iter().zip(fields) {
                row[col] = field.trim().parse().map_err(|_| Error::Parse {
                    line: idx + 1,
                    msg: format!("bad number '{field}'"),
                })?;
            }
            rows.push(row);
        }
        ParameterMatrix::new(rows)
    }
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats {
    pub mean: [f64; PARAM_COUNT],
    pub std: [f64; PARAM_COUNT],
    pub min: [f64; PARAM_COUNT],
    pub max: [f64; PARAM_COUNT],
}

impl ColumnStats {
    pub fn of(data: &ParameterMatrix) -> Self {
        let n = data.len().max(1) as f64;
        let mut stats = ColumnStats {
            mean: [0.0; PARAM_COUNT],
            std: [0.0; PARAM_COUNT],
            min: [f64::INFINITY; PARAM_COUNT],
            max: [f64::NEG_INFINITY; PARAM_COUNT],
        };
        for j in 0..PARAM_COUNT {
            let mean = data.column(j).sum::<f64>() / n;
            let var = data.column(j).map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            stats.mean[j] = mean;
            stats.std[j] = var.sqrt();
            for v in data.column(j) {
                stats.min[j] = stats.min[j].min(v);
                stats.max[j] = stats.max[j].max(v);
            }
        }
        stats
    }

    /// Z-score of one value; zero-variance columns map to 0.
    pub fn z(&self, j: usize, v: f64) -> f64 {
        if self.std[j] > 0.0 {
            (v - self.mean[j]) / self.std[j]
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_matches_table() {
        assert_eq!(SCHEMA.len(), 19);
        for (i, d) in SCHEMA.iter().enumerate() {
            assert_eq!(d.id as usize, i + 1);
        }
        assert_eq!(
            SCHEMA.iter().filter(|d| d.kind == ParamKind::Weight).count(),
            1
        );
        assert_eq!(SCHEMA[0].unit, Unit::Kg);
        assert_eq!(SCHEMA[16].name, "outer natural waist to floor");
    }

    #[test]
    fn names_resolve_by_key_and_table_name() {
        assert_eq!(index_of("gluteal hip"), Some(5));
        assert_eq!(index_of("gluteal_hip"), Some(5));
        assert_eq!(index_of("Height"), Some(1));
        assert_eq!(index_of("bogus"), None);
    }

    #[test]
    fn from_named_lists_valid_names_on_error() {
        let err = ParameterVector::from_named([("bogus", 1.0)]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus") && msg.contains("maximum_thigh"), "{msg}");
    }

    #[test]
    fn sanity_caps() {
        let mut p = ParameterVector::empty();
        p.set(0, 450.0);
        assert!(p.validate().is_err());
        p.set(0, 70.0);
        p.set(1, 3200.0);
        assert!(p.validate().is_err());
        p.set(1, 1700.0);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let mut row = [0.0; PARAM_COUNT];
        for (j, v) in row.iter_mut().enumerate() {
            *v = 100.0 + j as f64 / 3.0;
        }
        let m = ParameterMatrix::new(vec![row, row]).unwrap();
        assert_eq!(ParameterMatrix::from_csv(&m.to_csv()).unwrap(), m);
    }
}
