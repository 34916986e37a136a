//! Refinement of binary foreground masks produced by background subtraction.
//!
//! Two refiners are provided:
//!
//! - [`bayes`]: a classical neighborhood-vote refiner that relabels each
//!   pixel from the Gaussian-weighted labels around it.
//! - [`net`]: a small U-Net whose encoder receives a resolution-matched copy
//!   of the source frame at every level, so detail erased from the mask can
//!   be recovered from image intensities.
//!
//! Supporting modules cover tensors with hand-written backward passes
//! ([`tensor`]), deterministic synthetic data ([`synth`]), netpbm and
//! checkpoint formats ([`io`]), and training plus evaluation ([`train`]).

pub mod bayes;
pub mod error;
pub mod image;
pub mod io;
pub mod net;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use image::{Frame, Image, Mask};
