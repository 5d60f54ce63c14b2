use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::PlcError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DataType {
    #[serde(alias = "float64")]
    Float64,
    #[serde(alias = "int32")]
    Int32,
    #[serde(alias = "bool")]
    Bool,
}

/// A typed scalar tag value. Serialized untagged: `true`, `42`, `42.0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int32(i32),
    Float64(f64),
}

impl Value {
    pub fn data_type(&self) -> DataType {
        match self {
            Value::Bool(_) => DataType::Bool,
            Value::Int32(_) => DataType::Int32,
            Value::Float64(_) => DataType::Float64,
        }
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            Value::Bool(b) => f64::from(u8::from(b)),
            Value::Int32(i) => f64::from(i),
            Value::Float64(f) => f,
        }
    }

    pub fn zero(data_type: DataType) -> Value {
        match data_type {
            DataType::Bool => Value::Bool(false),
            DataType::Int32 => Value::Int32(0),
            DataType::Float64 => Value::Float64(0.0),
        }
    }

    /// Interprets a JSON scalar as a value of `data_type`. Integers widen to
    /// FLOAT64; nothing else converts.
    pub fn from_json(json: &Json, data_type: DataType) -> Result<Value, PlcError> {
        let mismatch = || PlcError::TypeMismatch { expected: data_type, got: json.to_string() };
        match data_type {
            DataType::Bool => json.as_bool().map(Value::Bool).ok_or_else(mismatch),
            DataType::Int32 => json
                .as_i64()
                .and_then(|i| i32::try_from(i).ok())
                .map(Value::Int32)
                .ok_or_else(mismatch),
            DataType::Float64 => {
                if json.is_number() {
                    json.as_f64().map(Value::Float64).ok_or_else(mismatch)
                } else {
                    Err(mismatch())
                }
            }
        }
    }

    /// Bitwise equality; distinguishes values that `==` would not (e.g. NaN).
    pub fn same_bits(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Float64(a), Value::Float64(b)) => a.to_bits() == b.to_bits(),
            _ => self == other,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int32(i) => write!(f, "{i}"),
            Value::Float64(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Quality {
    Good,
    Bad,
    Uncertain,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemState {
    pub value: Value,
    pub quality: Quality,
    /// Milliseconds since the Unix epoch of the last value or quality change.
    pub timestamp: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn untagged_json_keeps_type() {
        for v in [Value::Bool(true), Value::Int32(7), Value::Float64(7.0), Value::Float64(-0.25)] {
            let s = serde_json::to_string(&v).unwrap();
            let back: Value = serde_json::from_str(&s).unwrap();
            assert!(back.same_bits(&v), "{s}");
        }
    }

    #[test]
    fn json_coercion() {
        assert_eq!(Value::from_json(&json!(1200), DataType::Float64).unwrap(), Value::Float64(1200.0));
        assert_eq!(Value::from_json(&json!(3), DataType::Int32).unwrap(), Value::Int32(3));
        assert!(Value::from_json(&json!(1.5), DataType::Int32).is_err());
        assert!(Value::from_json(&json!(true), DataType::Float64).is_err());
        assert!(Value::from_json(&json!("1"), DataType::Float64).is_err());
        assert!(Value::from_json(&json!(1), DataType::Bool).is_err());
    }
}
