pub mod ad;
pub mod czo;
pub mod dyadic;
pub mod error;
pub mod io;
pub mod linalg;
pub mod molecules;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod seq;
pub mod trace;
pub mod wavelets;
pub mod weights;

pub use error::{Error, Result};
