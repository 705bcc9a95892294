//! Threshold visibility of local hidden-variable (LHV) models for a singlet
//! pair measured with visibility `V`.
//!
//! Three independent routes to the threshold are provided:
//!
//! - [`analytic`]: a rotation-invariant response function expanded in
//!   Legendre polynomials, positive iff `V <= 1/3`.
//! - [`construct`] + [`search`]: an explicit discrete LHV model built from the
//!   SVD of the settings Gram matrix, maximized over hidden-state frames by
//!   hill climbing and minimized over random settings.
//! - [`inequalities`]: Bell (with strict anticorrelation) and CHSH bounds.
//!
//! [`oracle`] solves the exact small-`N` problem by linear programming over
//! deterministic strategies and is used to cross-check the search.

pub mod analytic;
pub mod construct;
pub mod error;
pub mod estimate;
pub mod inequalities;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod record;
pub mod rng;
pub mod search;
mod simplex;

pub use error::{Error, Result};
pub use estimate::{Provenance, VisibilityEstimate};
pub use model::{Direction, Outcome, Visibility};
