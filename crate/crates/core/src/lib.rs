//! Positive semi-definiteness and sum-of-squares analysis for even-order
//! three dimensional strongly symmetric circulant tensors `A(m, d, u, c)`.
//!
//! * [`tensor`]: the tensor family, its form and exact integer helpers.
//! * [`heig`]: smallest H-eigenvalue by structured and multistart search.
//! * [`sdp`]: a small dense primal-dual interior-point SDP solver.
//! * [`sos`]: Gram-matrix SOS decisions, the SOS threshold `M_c(u)` and
//!   certificate bundles.
//! * [`boundary`]: the PSD threshold `N_c(u)`, breakpoints and reports.

pub mod boundary;
pub mod error;
pub mod heig;
pub mod sdp;
pub mod sos;
pub mod tensor;

pub use error::{Error, Result};
pub use heig::{EigenResult, SolverConfig};
pub use tensor::{dd_bound, CirculantTensor, TernaryForm, Vec3};
