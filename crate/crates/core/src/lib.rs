//! Speech quality assessment toolkit: corpora, frozen frontends, MOS
//! regression models, parametric and retrieval inference, and benchmark
//! aggregation.

pub mod corpus;
pub mod error;
pub mod exec;
pub mod export;
pub mod frontend;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod recipe;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
pub use exec::Exec;
