//! Converged monitoring for a modular data center pod and the compute
//! cluster inside it.
//!
//! Facility telemetry (Modbus registers) and node telemetry (scheduler and
//! health records) are exploded into string-keyed triples, stored in a
//! sorted key-value store and queried as sparse associative arrays. A
//! baseline of expected values turns each cycle into alerts and node
//! classifications, published as visualization frames to operator clients.

pub mod assoc;
pub mod baseline;
pub mod cycle;
pub mod history;
pub mod ingest;
pub mod kv;
pub mod modbus;
pub mod pipeline;
pub mod podsim;
pub mod records;
pub mod server;
pub mod vizgen;
