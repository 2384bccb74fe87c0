//! Finite-dimensional testbed for maximal regularity operators of analytic
//! semigroups: the operators `M+ f(t) = int_0^t A e^{-(t-s)A} f(s) ds` and
//! `M- f(t) = int_t^inf A e^{-(s-t)A} f(s) ds` on weighted `L^2(t^beta dt)`,
//! fractional powers and Kato's inequality, almost-orthogonality of the
//! pieces `T_u`, and weak solutions of `u' + Au = f`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cauchy;
pub mod cotlar;
pub mod error;
pub mod fractional;
pub mod linalg;
pub mod maxreg;
pub mod operator;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod semigroup;
pub mod timegrid;

pub use error::{Error, Result};
pub use operator::{random_accretive, Operator, SpectralInfo};
pub use semigroup::{expm_neg, Semigroup};
pub use timegrid::{GridFunction, TimeGrid, WeightedNorm};
