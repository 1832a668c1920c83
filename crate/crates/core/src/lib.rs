pub mod data;
pub mod distill;
pub mod error;
pub mod kan;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod optim;
pub mod spline;
pub mod store;
pub mod train;

mod codec;

pub use error::{Error, Result};
