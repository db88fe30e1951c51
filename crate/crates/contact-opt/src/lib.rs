// `!(x > 0.0)` is used on purpose to reject NaN along with the out-of-range
// sign; expression combinators mirror operator names; index-parallel loops
// across coordinate slices read better than zipped iterators here.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::should_implement_trait)]
#![allow(clippy::needless_range_loop)]

//! Numerical optimal control with dissipation via contact Hamiltonian
//! geometry.
//!
//! The crate combines four ingredients:
//!
//! * [`expr`] — parsed scalar expressions with exact forward-mode first and
//!   second derivatives; every user-supplied function lives here.
//! * [`geometry`] — contact and presymplectic Hamiltonian structures in
//!   Darboux coordinates: Hamiltonian vector fields, Reeb fields, defining
//!   identities, one-form classification and the control-kernel constraint
//!   algorithm.
//! * Solvers — [`ocp`] (classical Pontryagin extremals by indirect
//!   shooting, with the normal/abnormal split), [`herglotz_ocp`]
//!   (action-dependent costs, the full extended system and its reduced
//!   contact form), [`lagrangian`] (Herglotz Lagrangian flows and the
//!   action functional), and [`thermo`] (homogenization and
//!   port-thermodynamic systems, with a gas-piston-damper demonstration).
//! * [`oracle`] — an independent direct-transcription optimizer used to
//!   cross-validate every indirect solution.
//!
//! All state is immutable after construction and evaluation is pure;
//! integrations and solver restarts are independent.

pub mod error;
pub mod expr;
pub mod geometry;
pub mod herglotz_ocp;
pub mod integrate;
pub mod lagrangian;
pub mod ocp;
pub mod oracle;
pub mod thermo;

pub use error::{Error, Result};
