pub mod error;
pub mod full;
pub mod lattice;
pub mod oracle;
pub mod properties;
pub mod registry;
pub mod stats;
pub mod toy;

pub use error::{Error, Result};
