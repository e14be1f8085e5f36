pub mod datamodel;
pub mod dpsr;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod msas;
pub mod pipeline;
pub mod rng;
pub mod scc;
pub mod synthesis;
pub mod zfb;

pub use error::{Error, ErrorKind, Result};
