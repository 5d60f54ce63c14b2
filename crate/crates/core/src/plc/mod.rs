//! Simulated PLC stations.
//!
//! A [`DeviceModel`] is the process + control layer: configured items, each
//! either a directly written value or a first-order lag toward a setpoint.
//! [`DeviceDirectory`] maps OPC server names to running devices.

pub mod config;
mod device;
pub mod lcg;
mod registry;
mod value;

pub use config::{DeviceConfig, ItemDefinition};
pub use device::DeviceModel;
pub use registry::{ClientLease, DeviceDirectory, DeviceHandle};
pub use value::{DataType, ItemState, Quality, Value};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlcError {
    #[error("UnknownAddress: {0:?}")]
    UnknownAddress(String),
    #[error("NotWritable: {0:?}")]
    NotWritable(String),
    #[error("OutOfRange: {value} not within [{low}, {high}] for {address:?}")]
    OutOfRange { address: String, value: f64, low: f64, high: f64 },
    #[error("TypeMismatch: expected {expected:?}, got {got}")]
    TypeMismatch { expected: DataType, got: String },
    #[error("DeviceOffline: {0}")]
    DeviceOffline(String),
    #[error("SchemaViolation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
}

impl PlcError {
    pub fn name(&self) -> &'static str {
        match self {
            PlcError::UnknownAddress(_) => "UnknownAddress",
            PlcError::NotWritable(_) => "NotWritable",
            PlcError::OutOfRange { .. } => "OutOfRange",
            PlcError::TypeMismatch { .. } => "TypeMismatch",
            PlcError::DeviceOffline(_) => "DeviceOffline",
            PlcError::SchemaViolation { .. } => "SchemaViolation",
        }
    }
}
