//! Condition- and viewpoint-invariant image-to-range place recognition on
//! synthetic worlds.

pub mod binio;
pub mod checkpoint;
pub mod descriptor;
pub mod error;
pub mod geometry;
pub mod nn;
pub mod retrieval;
pub mod training;
pub mod transfer;

pub use error::{Error, Result};
