//! File formats and the optional logit-provider client.

mod decisions;
#[cfg(feature = "provider")]
pub mod provider;
mod records;

pub use decisions::{
    read_decisions, write_decisions, write_decisions_to, DecisionLine, InputDigest, RunManifest,
};
pub use records::{
    parse_record, read_records, read_records_from, record_to_line, write_records, write_records_to,
};
