pub mod causal;
pub mod environment;
pub mod error;
pub mod features;
pub mod glm;
pub mod policy;
pub mod policy_search;
pub mod report;
pub mod scenarios;

pub use error::{Error, Result};
