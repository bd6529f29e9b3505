use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{shape_label, Dim};

/// A parameter value: a scalar or an arbitrarily nested array of numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    Array(Vec<ParamValue>),
}

impl ParamValue {
    pub fn depth(&self) -> usize {
        match self {
            ParamValue::Scalar(_) => 0,
            ParamValue::Array(items) => 1 + items.first().map_or(0, ParamValue::depth),
        }
    }

    /// Look up the scalar at `index` (0-based, one entry per dimension).
    pub fn get(&self, index: &[usize]) -> Option<f64> {
        match (self, index.split_first()) {
            (ParamValue::Scalar(v), None) => Some(*v),
            (ParamValue::Array(items), Some((&i, rest))) => items.get(i)?.get(rest),
            _ => None,
        }
    }

    /// Every scalar in the value, depth first.
    pub fn scalars(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut Vec<f64>) {
        match self {
            ParamValue::Scalar(v) => out.push(*v),
            ParamValue::Array(items) => items.iter().for_each(|i| i.collect(out)),
        }
    }

    /// Check the nesting and sizes against resolved dimension sizes.
    pub fn check_sizes(&self, sizes: &[usize]) -> Result<(), String> {
        match (self, sizes.split_first()) {
            (ParamValue::Scalar(v), None) => {
                if v.is_finite() {
                    Ok(())
                } else {
                    Err("non-finite value".into())
                }
            }
            (ParamValue::Scalar(_), Some(_)) => {
                Err(format!("expected {} more nesting level(s)", sizes.len()))
            }
            (ParamValue::Array(_), None) => Err("unexpected extra nesting level".into()),
            (ParamValue::Array(items), Some((&n, rest))) => {
                if items.len() != n {
                    return Err(format!("expected {n} entries, found {}", items.len()));
                }
                items.iter().try_for_each(|i| i.check_sizes(rest))
            }
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serde_json::to_string(self).map_err(|_| fmt::Error)?)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("dimension `{0}` is not bound in the data bundle")]
    UnboundDimension(String),
    #[error("no data for parameter `{0}`")]
    MissingValue(String),
    #[error("data for `{symbol}` does not match shape {shape}: {reason}")]
    ShapeMismatch {
        symbol: String,
        shape: String,
        reason: String,
    },
    #[error("unreadable data bundle: {0}")]
    Unreadable(String),
}

/// Numeric payload of a problem, kept apart from the text.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DataBundle {
    #[serde(default)]
    pub dimensions: IndexMap<String, usize>,
    #[serde(default)]
    pub values: IndexMap<String, ParamValue>,
}

impl DataBundle {
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        serde_json::from_str(text).map_err(|e| DataError::Unreadable(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("data bundle serializes")
    }

    pub fn dim_size(&self, dim: &Dim) -> Result<usize, DataError> {
        match dim {
            Dim::Fixed(n) => Ok(*n),
            Dim::Named(name) => self
                .dimensions
                .get(name)
                .copied()
                .ok_or_else(|| DataError::UnboundDimension(name.clone())),
        }
    }

    pub fn resolve_shape(&self, shape: &[Dim]) -> Result<Vec<usize>, DataError> {
        shape.iter().map(|d| self.dim_size(d)).collect()
    }

    /// Verify that `symbol` has a value whose nesting matches `shape`.
    pub fn check_parameter(&self, symbol: &str, shape: &[Dim]) -> Result<(), DataError> {
        let sizes = self.resolve_shape(shape)?;
        let value = self
            .values
            .get(symbol)
            .ok_or_else(|| DataError::MissingValue(symbol.to_string()))?;
        value
            .check_sizes(&sizes)
            .map_err(|reason| DataError::ShapeMismatch {
                symbol: symbol.to_string(),
                shape: shape_label(shape),
                reason,
            })
    }

    /// Every number carried by the bundle (dimension sizes and values).
    pub fn numbers(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.dimensions.values().map(|&n| n as f64).collect();
        for v in self.values.values() {
            out.extend(v.scalars());
        }
        out
    }

    /// Overlay `other` on top of `self`: entries in `other` win.
    pub fn overlay(&mut self, other: &DataBundle) {
        for (k, v) in &other.dimensions {
            self.dimensions.insert(k.clone(), *v);
        }
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_lookup_and_sizes() {
        let v: ParamValue = serde_json::from_str("[[1,2],[3,1]]").unwrap();
        assert_eq!(v.depth(), 2);
        assert_eq!(v.get(&[1, 0]), Some(3.0));
        assert_eq!(v.get(&[2, 0]), None);
        assert!(v.check_sizes(&[2, 2]).is_ok());
        assert!(v.check_sizes(&[2, 3]).is_err());
        assert!(v.check_sizes(&[2]).is_err());
    }

    #[test]
    fn check_parameter_reports_unbound_dimension() {
        let d = DataBundle::from_json(r#"{"dimensions":{"P":2},"values":{"Hours":[[1,2],[3,1]]}}"#)
            .unwrap();
        let shape = vec![Dim::Named("M".into()), Dim::Named("P".into())];
        assert_eq!(
            d.check_parameter("Hours", &shape),
            Err(DataError::UnboundDimension("M".into()))
        );
    }

    #[test]
    fn json_preserves_file_order() {
        let text = r#"{"dimensions":{"Z":1,"A":2},"values":{"b":1,"a":[1,2]}}"#;
        let d = DataBundle::from_json(text).unwrap();
        let keys: Vec<_> = d.dimensions.keys().cloned().collect();
        assert_eq!(keys, ["Z", "A"]);
        let again = DataBundle::from_json(&d.to_json()).unwrap();
        assert_eq!(again, d);
        let vals: Vec<_> = again.values.keys().cloned().collect();
        assert_eq!(vals, ["b", "a"]);
    }
}
