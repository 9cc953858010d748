//! File formats, configuration files and the `erp` command-line driver built on
//! [`erp_core`].

pub mod cli;
pub mod dataio;
pub mod manifest;
pub mod store;

pub use dataio::{DataError, DatasetManifest};
pub use manifest::KeyValues;
pub use store::{ModelKind, StoredModel};
