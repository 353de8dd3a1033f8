//! Instance generation and the audit runner behind the `cbdkit audit` command.

pub mod audit;
pub mod generate;

pub use audit::{run_audit, AuditConfig, AuditReport, CheckRecord, CheckStatus};
pub use generate::{generate_instance, Instance, InstanceConfig, InstanceKind};
