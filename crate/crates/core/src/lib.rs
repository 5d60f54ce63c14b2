//! Agent-based SCADA platform.
//!
//! Simulated PLC stations ([`plc`]) are reached through an OPC-style client
//! layer ([`opc`]). OPC-Agents bridge one device each into an agent platform
//! ([`runtime`]), register with the yellow-page [`directory`], and stream
//! telemetry to operator agents that subscribe once ([`scada`]). The
//! [`sniffer`] records inter-agent traffic as a sequence log.

pub mod acl;
pub mod clock;
pub mod opc;
pub mod plc;
pub mod directory;
pub mod runtime;
pub mod sniffer;
pub mod scada;
pub mod cli;
